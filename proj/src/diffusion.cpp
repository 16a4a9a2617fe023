#include "roomweave/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "roomweave/error.hpp"
#include "roomweave/parallel.hpp"

namespace roomweave::diffusion {

namespace {

// Noise stream identifiers.
constexpr std::uint64_t kStreamInit = 1;
constexpr std::uint64_t kStreamStep = 2;
constexpr std::uint64_t kStreamTransition = 3;
constexpr std::uint64_t kStreamBandInit = 4;
constexpr std::uint64_t kStreamBandStep = 5;

void check_same_shape(const LatentGrid& a, const LatentGrid& b, const char* what) {
    if (!a.values.same_shape(b.values)) throw Error(ErrorCode::Denoiser, std::string(what) + ": latent shapes differ");
}

std::uint64_t refresh_key(int total_steps, int t, int period) {
    const int s = total_steps - t;
    return static_cast<std::uint64_t>(s - s % std::max(1, period));
}

}  // namespace

double AlphaSchedule::at(int t) const {
    if (t == 0) return 1.0;
    if (t < 0 || t > steps()) throw Error(ErrorCode::Config, "schedule step out of range");
    return alpha_bar[static_cast<size_t>(t - 1)];
}

void AlphaSchedule::validate() const {
    if (alpha_bar.empty()) throw Error(ErrorCode::Config, "schedule: empty");
    for (size_t i = 0; i < alpha_bar.size(); ++i) {
        if (!(alpha_bar[i] > 0.0 && alpha_bar[i] <= 1.0)) throw Error(ErrorCode::Config, "schedule: values must lie in (0, 1]");
        if (i > 0 && !(alpha_bar[i] < alpha_bar[i - 1]))
            throw Error(ErrorCode::Config, "schedule: must be strictly decreasing");
    }
}

AlphaSchedule AlphaSchedule::linear_beta(int steps, double beta_start, double beta_end, int train_steps) {
    if (steps <= 0 || train_steps < steps) throw Error(ErrorCode::Config, "schedule: invalid step counts");
    std::vector<double> train(static_cast<size_t>(train_steps));
    double prod = 1.0;
    for (int j = 0; j < train_steps; ++j) {
        const double beta =
            train_steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * j / static_cast<double>(train_steps - 1);
        prod *= 1.0 - beta;
        train[static_cast<size_t>(j)] = prod;
    }
    AlphaSchedule s;
    s.alpha_bar.resize(static_cast<size_t>(steps));
    for (int t = 1; t <= steps; ++t) {
        const auto j = static_cast<long>(std::lround(static_cast<double>(t) * train_steps / steps));
        s.alpha_bar[static_cast<size_t>(t - 1)] = train[static_cast<size_t>(j - 1)];
    }
    s.validate();
    return s;
}

Eigen::Vector3d FrameGeometry::ray(int x, int y) const {
    const int px = window ? (window->x0 + x) % view.width() : x;
    return view.pose.rotate(camera_ray(view, px, y));
}

LatentGrid IdentityCodec::encode(const Image& rgb) const {
    if (rgb.channels != 3) throw Error(ErrorCode::Denoiser, "identity codec: expected RGB");
    return {rgb, 1};
}

Image IdentityCodec::decode(const LatentGrid& latent) const {
    if (latent.scale != 1 || latent.channels() != 3) throw Error(ErrorCode::Denoiser, "identity codec: bad latent");
    return latent.values;
}

LatentGrid BoxCodec::encode(const Image& rgb) const {
    if (rgb.channels != 3) throw Error(ErrorCode::Denoiser, "box codec: expected RGB");
    return {downsample_box(rgb, k_), k_};
}

Image BoxCodec::decode(const LatentGrid& latent) const {
    if (latent.scale != k_) throw Error(ErrorCode::Denoiser, "box codec: latent scale mismatch");
    const Image& g = latent.values;
    Image out(g.width * k_, g.height * k_, g.channels);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            const double gx = (x - 0.5 * (k_ - 1)) / k_;
            const double gy = (y - 0.5 * (k_ - 1)) / k_;
            sample_bilinear_clamped(g, gx, gy, false, out.pixel(x, y).data());
        }
    return out;
}

AlphaSchedule EDiffusionConfig::effective_schedule() const {
    return schedule ? *schedule : AlphaSchedule::linear_beta(total_steps);
}

void EDiffusionConfig::validate() const {
    if (total_steps <= 0) throw Error(ErrorCode::Config, "diffusion: total steps must be positive");
    if (refine_steps < 0 || refine_steps > total_steps)
        throw Error(ErrorCode::Config, "diffusion: refinement steps must lie in [0, T]");
    if (noise_refresh_period <= 0) throw Error(ErrorCode::Config, "diffusion: noise refresh period must be positive");
    if (window_size <= 0 || window_stride <= 0 || window_stride > window_size)
        throw Error(ErrorCode::Config, "diffusion: window stride must lie in (0, window size]");
    if (view_latent_size <= 0) throw Error(ErrorCode::Config, "diffusion: view latent size must be positive");
    if (schedule) {
        schedule->validate();
        if (schedule->steps() != total_steps) throw Error(ErrorCode::Config, "diffusion: schedule length differs from T");
    }
}

LatentGrid predict_x0(const LatentGrid& x_t, const LatentGrid& eps, double abar_t) {
    if (!(abar_t > 0.0) || abar_t > 1.0) throw Error(ErrorCode::Numeric, "predict_x0: abar_t must lie in (0, 1]");
    check_same_shape(x_t, eps, "predict_x0");
    const double a = std::sqrt(abar_t), b = std::sqrt(1.0 - abar_t);
    LatentGrid out{Image(x_t.width(), x_t.height(), x_t.channels()), x_t.scale};
    for (size_t i = 0; i < out.values.data.size(); ++i)
        out.values.data[i] = static_cast<float>((x_t.values.data[i] - b * eps.values.data[i]) / a);
    return out;
}

LatentGrid renoise(const LatentGrid& x0, double abar_prev, const LatentGrid& noise) {
    if (!(abar_prev > 0.0) || abar_prev > 1.0) throw Error(ErrorCode::Numeric, "renoise: abar must lie in (0, 1]");
    check_same_shape(x0, noise, "renoise");
    const double a = std::sqrt(abar_prev), b = std::sqrt(1.0 - abar_prev);
    LatentGrid out{Image(x0.width(), x0.height(), x0.channels()), x0.scale};
    for (size_t i = 0; i < out.values.data.size(); ++i)
        out.values.data[i] = static_cast<float>(a * x0.values.data[i] + b * noise.values.data[i]);
    return out;
}

std::vector<LatentGrid> warp_average(const std::vector<ViewSpec>& views, const std::vector<LatentGrid>& grids) {
    if (views.size() != grids.size()) throw Error(ErrorCode::Config, "warp_average: views and grids differ in count");
    for (const auto& v : views)
        if (!same_center(v, views.front())) throw Error(ErrorCode::Geometry, "warp_average: views do not share a center");
    const size_t m = views.size();
    std::vector<LatentGrid> out(m);
    parallel_for(m, [&](size_t i) {
        const LatentGrid& gi = grids[i];
        Image sum(gi.width(), gi.height(), gi.channels());
        std::vector<int> count(static_cast<size_t>(gi.width()) * gi.height(), 0);
        // Summation order is fixed (j ascending) so results do not depend on scheduling.
        for (size_t j = 0; j < m; ++j) {
            WarpResult w;
            if (j == i) {
                w.values = grids[j].values;
                w.mask = Mask(gi.width(), gi.height(), 1);
            } else {
                w = warp_grid(views[j], views[i], grids[j].values);
            }
            if (!w.values.same_shape(sum)) throw Error(ErrorCode::Geometry, "warp_average: grid shapes disagree");
            for (size_t p = 0; p < count.size(); ++p) {
                if (!w.mask.data[p]) continue;
                ++count[p];
                for (int c = 0; c < gi.channels(); ++c) sum.data[p * gi.channels() + c] += w.values.data[p * gi.channels() + c];
            }
        }
        for (size_t p = 0; p < count.size(); ++p) {
            if (count[p] < 1) throw Error(ErrorCode::Geometry, "warp_average: cell with zero coverage");
            for (int c = 0; c < gi.channels(); ++c) sum.data[p * gi.channels() + c] /= static_cast<float>(count[p]);
        }
        out[i] = {std::move(sum), gi.scale};
    });
    return out;
}

std::vector<int> window_offsets(int width, int window, int stride) {
    if (window > width) throw Error(ErrorCode::Config, "window wider than panorama latent");
    std::vector<int> out;
    for (int x = 0; x < width; x += stride) out.push_back(x);
    return out;
}

LatentGrid window_average(const LatentGrid& pano, const std::vector<WindowTile>& windows) {
    const int w = pano.width(), h = pano.height(), ch = pano.channels();
    Image sum(w, h, ch);
    std::vector<int> count(static_cast<size_t>(w) * h, 0);
    for (const auto& win : windows) {
        const Image& g = win.grid.values;
        if (g.height != h || g.channels != ch || g.width > w)
            throw Error(ErrorCode::Config, "window_average: window shape incompatible with panorama");
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < g.width; ++x) {
                const int px = ((win.x0 + x) % w + w) % w;
                ++count[static_cast<size_t>(y) * w + px];
                for (int c = 0; c < ch; ++c) sum.at(px, y, c) += g.at(x, y, c);
            }
    }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int n = count[static_cast<size_t>(y) * w + x];
            if (n == 0) {
                std::ostringstream os;
                os << "window_average: cell (" << x << ", " << y << ") is not covered by any window";
                throw Error(ErrorCode::Config, os.str());
            }
            for (int c = 0; c < ch; ++c) sum.at(x, y, c) /= static_cast<float>(n);
        }
    return {std::move(sum), pano.scale};
}

LatentGrid stitch_views_to_equirect(const std::vector<ViewSpec>& views, const std::vector<LatentGrid>& grids,
                                    const ViewSpec& band) {
    if (views.size() != grids.size() || views.empty())
        throw Error(ErrorCode::Config, "stitch: views and grids differ in count");
    if (!band.is_equirect()) throw Error(ErrorCode::Geometry, "stitch: target must be an equirect band");
    const int k = grid_scale(views.front(), grids.front().width(), grids.front().height());
    const ViewSpec band_grid = band.scaled(k);
    const int w = band_grid.width(), h = band_grid.height(), ch = grids.front().channels();
    Image sum(w, h, ch);
    std::vector<int> count(static_cast<size_t>(w) * h, 0);
    for (size_t i = 0; i < views.size(); ++i) {
        const WarpResult r = warp_grid(views[i], band, grids[i].values);
        for (size_t p = 0; p < count.size(); ++p) {
            if (!r.mask.data[p]) continue;
            ++count[p];
            for (int c = 0; c < ch; ++c) sum.data[p * ch + c] += r.values.data[p * ch + c];
        }
    }
    for (size_t p = 0; p < count.size(); ++p) {
        if (count[p] == 0) throw Error(ErrorCode::Geometry, "stitch: band cell not covered by any view");
        for (int c = 0; c < ch; ++c) sum.data[p * ch + c] /= static_cast<float>(count[p]);
    }
    return {std::move(sum), k};
}

LatentGrid gaussian_noise(int w, int h, int c, int scale, std::uint64_t seed, std::uint64_t stream,
                          std::uint64_t index, std::uint64_t key) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                      static_cast<std::uint32_t>(index >> 32), static_cast<std::uint32_t>(key)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<float> normal(0.0f, 1.0f);
    LatentGrid g{Image(w, h, c), scale};
    for (auto& v : g.values.data) v = normal(rng);
    return g;
}

Conditioning make_conditioning(const Image& reference_image, const Mask& pixel_hole, const LatentCodec& codec) {
    Conditioning cond;
    cond.reference_image = reference_image;
    cond.pixel_mask = pixel_hole;
    cond.reference = codec.encode(reference_image);
    cond.latent_mask = downsample_any(pixel_hole, codec.scale());
    return cond;
}

namespace {

LatentGrid call_denoiser(const Denoiser& denoiser, const LatentGrid& x_t, int t, double abar_t,
                         const Conditioning& cond, const std::string& prompt, const FrameGeometry& geometry) {
    const DenoiserInput input{x_t, t, abar_t, cond.reference, cond.latent_mask, cond.reference_image,
                              cond.pixel_mask, prompt, geometry};
    LatentGrid eps = denoiser.predict_epsilon(input);
    if (!eps.values.same_shape(x_t.values)) {
        std::ostringstream os;
        os << "denoiser returned " << eps.width() << "x" << eps.height() << "x" << eps.channels() << " for a "
           << x_t.width() << "x" << x_t.height() << "x" << x_t.channels() << " latent";
        throw Error(ErrorCode::Denoiser, os.str());
    }
    eps.scale = x_t.scale;
    return eps;
}

Image composite_known(const Image& decoded, const Image& reference, const Mask& hole) {
    Image out = decoded;
    for (auto& v : out.data) v = std::clamp(v, 0.0f, 1.0f);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            if (!hole.at(x, y))
                for (int c = 0; c < out.channels; ++c) out.at(x, y, c) = reference.at(x, y, c);
    return out;
}

}  // namespace

Image e_diffusion_inpaint(const PanoramaRgbd& mesh_pano, const Denoiser& denoiser, const LatentCodec& codec,
                          const EDiffusionConfig& cfg, const std::string& prompt, EDiffusionTrace* trace) {
    cfg.validate();
    mesh_pano.validate();
    if (!mesh_pano.hole_mask.any()) return mesh_pano.color;

    const AlphaSchedule schedule = cfg.effective_schedule();
    const int T = cfg.total_steps, F = cfg.refine_steps;
    const int k = codec.scale();
    const ViewSpec& band = mesh_pano.view;
    if (band.width() % k != 0 || band.height() % k != 0)
        throw Error(ErrorCode::Config, "panorama size not divisible by the codec scale");
    const Mask known = invert(mesh_pano.hole_mask);

    // Phase 1 geometry: shared-center fan at the panorama center.
    std::vector<ViewSpec> views =
        make_pano_views(band.pose.translation, cfg.views, cfg.fov_deg, cfg.view_latent_size * k, cfg.band_half_deg);
    for (auto& v : views) v.pose.rotation = band.pose.rotation * v.pose.rotation;
    const size_t m = views.size();

    std::vector<Conditioning> cond(m);
    std::vector<FrameGeometry> geom(m);
    parallel_for(m, [&](size_t i) {
        WarpResult ref = warp_grid(band, views[i], mesh_pano.color, &known);
        cond[i] = make_conditioning(ref.values, invert(ref.mask), codec);
        geom[i] = FrameGeometry{views[i], std::nullopt};
    });
    const int lw = cfg.view_latent_size, C = codec.channels();

    std::vector<ViewSpec> latent_views;
    if (trace) {
        for (const auto& v : views) latent_views.push_back(v.scaled(k));
        trace->views = latent_views;
    }

    LatentGrid band_x0;
    bool have_band_x0 = false;
    if (T > F) {
        std::vector<LatentGrid> x(m), x0(m), noise(m);
        for (size_t i = 0; i < m; ++i) x[i] = gaussian_noise(lw, lw, C, k, cfg.seed, kStreamInit, i, 0);
        std::vector<LatentGrid> averaged;
        for (int t = T; t > F; --t) {
            const double abar = schedule.at(t);
            parallel_for(
                m,
                [&](size_t i) {
                    const LatentGrid eps = call_denoiser(denoiser, x[i], t, abar, cond[i], prompt, geom[i]);
                    x0[i] = predict_x0(x[i], eps, abar);
                },
                denoiser.concurrent());
            averaged = warp_average(views, x0);
            if (t - 1 > F || F == 0) {
                const std::uint64_t key = refresh_key(T, t, cfg.noise_refresh_period);
                for (size_t i = 0; i < m; ++i) {
                    if ((T - t) % cfg.noise_refresh_period == 0)
                        noise[i] = gaussian_noise(lw, lw, C, k, cfg.seed, kStreamStep, i, key);
                    x[i] = renoise(averaged[i], schedule.at(t - 1), noise[i]);
                }
            }
        }
        if (trace) {
            trace->phase1_x0 = x0;
            trace->phase1_x0_averaged = averaged;
        }
        band_x0 = stitch_views_to_equirect(views, F == 0 ? x : averaged, band);
        have_band_x0 = true;
    }

    LatentGrid final_latent;
    if (F == 0) {
        final_latent = band_x0;
    } else {
        // Phase 2: planar cyclic windows over the stitched band.
        const int bw = band.width() / k, bh = band.height() / k;
        LatentGrid x = have_band_x0
                           ? renoise(band_x0, schedule.at(F), gaussian_noise(bw, bh, C, k, cfg.seed, kStreamTransition, 0, 0))
                           : gaussian_noise(bw, bh, C, k, cfg.seed, kStreamBandInit, 0, 0);
        const Conditioning band_cond = make_conditioning(mesh_pano.color, mesh_pano.hole_mask, codec);
        const int win = std::min(cfg.window_size, bw);
        const std::vector<int> offsets = window_offsets(bw, win, cfg.window_stride);
        std::vector<Conditioning> wcond(offsets.size());
        std::vector<FrameGeometry> wgeom(offsets.size());
        for (size_t n = 0; n < offsets.size(); ++n) {
            const int px0 = offsets[n] * k;
            wcond[n].reference_image = crop_cyclic(band_cond.reference_image, px0, win * k);
            wcond[n].pixel_mask = crop_cyclic(band_cond.pixel_mask, px0, win * k);
            wcond[n].reference = {crop_cyclic(band_cond.reference.values, offsets[n], win), k};
            wcond[n].latent_mask = crop_cyclic(band_cond.latent_mask, offsets[n], win);
            wgeom[n] = FrameGeometry{band, PixelWindow{px0, win * k}};
        }
        LatentGrid noise;
        for (int t = F; t >= 1; --t) {
            const double abar = schedule.at(t);
            std::vector<WindowTile> tiles(offsets.size());
            parallel_for(
                offsets.size(),
                [&](size_t n) {
                    const LatentGrid xw{crop_cyclic(x.values, offsets[n], win), k};
                    const LatentGrid eps = call_denoiser(denoiser, xw, t, abar, wcond[n], prompt, wgeom[n]);
                    tiles[n] = WindowTile{offsets[n], predict_x0(xw, eps, abar)};
                },
                denoiser.concurrent());
            const LatentGrid averaged = window_average(x, tiles);
            if ((F - t) % cfg.noise_refresh_period == 0)
                noise = gaussian_noise(bw, bh, C, k, cfg.seed, kStreamBandStep, 0,
                                       refresh_key(F, t, cfg.noise_refresh_period));
            x = renoise(averaged, schedule.at(t - 1), noise);
        }
        final_latent = x;
    }
    if (trace) trace->final_latent = final_latent;

    const Image decoded = codec.decode(final_latent);
    if (decoded.width != band.width() || decoded.height != band.height())
        throw Error(ErrorCode::Denoiser, "codec decoded to an unexpected size");
    return composite_known(decoded, mesh_pano.color, mesh_pano.hole_mask);
}

Image inpaint_single_view(const ViewSpec& view, const Image& reference, const Mask& hole, const Denoiser& denoiser,
                          const LatentCodec& codec, const EDiffusionConfig& cfg, const std::string& prompt) {
    cfg.validate();
    if (!hole.any()) return reference;
    const AlphaSchedule schedule = cfg.effective_schedule();
    const int k = codec.scale();
    if (view.width() % k != 0 || view.height() % k != 0)
        throw Error(ErrorCode::Config, "view size not divisible by the codec scale");
    const Conditioning cond = make_conditioning(reference, hole, codec);
    const FrameGeometry geom{view, std::nullopt};
    const int lw = view.width() / k, lh = view.height() / k, C = codec.channels();
    const int T = cfg.total_steps;
    LatentGrid x = gaussian_noise(lw, lh, C, k, cfg.seed, kStreamInit, 0, 0);
    LatentGrid noise;
    for (int t = T; t >= 1; --t) {
        const double abar = schedule.at(t);
        const LatentGrid eps = call_denoiser(denoiser, x, t, abar, cond, prompt, geom);
        const LatentGrid x0 = predict_x0(x, eps, abar);
        if ((T - t) % cfg.noise_refresh_period == 0)
            noise = gaussian_noise(lw, lh, C, k, cfg.seed, kStreamStep, 0, refresh_key(T, t, cfg.noise_refresh_period));
        x = renoise(x0, schedule.at(t - 1), noise);
    }
    return composite_known(codec.decode(x), reference, hole);
}

}  // namespace roomweave::diffusion
