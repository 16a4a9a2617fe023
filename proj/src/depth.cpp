#include "roomweave/depth.hpp"

#include <cmath>
#include <sstream>

#include "roomweave/error.hpp"
#include "roomweave/parallel.hpp"

namespace roomweave::depth {

namespace {

Image impose_anchors(Image depth, const Image& anchor_depth, const Mask& anchor_mask) {
    for (int y = 0; y < depth.height; ++y)
        for (int x = 0; x < depth.width; ++x)
            if (anchor_mask.at(x, y) && anchor_depth.at(x, y) > 0.0f) depth.at(x, y) = anchor_depth.at(x, y);
    return depth;
}

Image scaled(Image img, double s) {
    for (auto& v : img.data) v = static_cast<float>(v * s);
    return img;
}

void check_depth_shape(const Image& d, const ViewSpec& view, size_t index) {
    if (d.width != view.width() || d.height != view.height() || d.channels != 1) {
        std::ostringstream os;
        os << "depth predictor: view " << index << " returned a grid of the wrong shape";
        throw Error(ErrorCode::Depth, os.str());
    }
}

// Joint least squares over several views; returns false when nothing overlaps.
bool joint_scale(const std::vector<Image>& preds, const std::vector<Image>& rendered, const std::vector<Mask>& masks,
                 double* s) {
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < preds.size(); ++i)
        for (size_t p = 0; p < preds[i].data.size(); ++p) {
            const double a = preds[i].data[p], b = rendered[i].data[p];
            if (!masks[i].data[p] || !(a > 0.0) || !(b > 0.0)) continue;
            num += a * b;
            den += a * a;
        }
    if (!(den > 0.0)) return false;
    *s = num / den;
    return true;
}

}  // namespace

double align_scale(const Image& pred, const Image& rendered, const Mask& mask) {
    if (!pred.same_shape(rendered) || mask.width != pred.width || mask.height != pred.height)
        throw Error(ErrorCode::Config, "align_scale: shapes differ");
    double num = 0.0, den = 0.0;
    size_t n = 0;
    for (size_t p = 0; p < pred.data.size(); ++p) {
        const double a = pred.data[p], b = rendered.data[p];
        if (!mask.data[p] || !(a > 0.0) || !(b > 0.0)) continue;
        num += a * b;
        den += a * a;
        ++n;
    }
    if (n == 0) throw Error(ErrorCode::Numeric, "align_scale: mask selects no valid pixel");
    if (!(den > 0.0)) throw Error(ErrorCode::Numeric, "align_scale: prediction is zero on the mask");
    return num / den;
}

std::vector<DistanceGrid> fuse_distances(const std::vector<ViewSpec>& views, const std::vector<DistanceGrid>& dists) {
    if (views.size() != dists.size()) throw Error(ErrorCode::Config, "fuse_distances: count mismatch");
    for (const auto& v : views)
        if (!same_center(v, views.front())) throw Error(ErrorCode::Geometry, "fuse_distances: views do not share a center");
    std::vector<DistanceGrid> out(views.size());
    parallel_for(views.size(), [&](size_t i) {
        const int w = dists[i].width(), h = dists[i].height();
        std::vector<double> sum(static_cast<size_t>(w) * h, 0.0);
        std::vector<int> count(sum.size(), 0);
        for (size_t j = 0; j < views.size(); ++j) {
            if (j == i) {
                for (size_t p = 0; p < sum.size(); ++p)
                    if (dists[i].valid.data[p]) {
                        sum[p] += dists[i].values.data[p];
                        ++count[p];
                    }
                continue;
            }
            const WarpResult r = warp_grid(views[j], views[i], dists[j].values, &dists[j].valid);
            for (size_t p = 0; p < sum.size(); ++p)
                if (r.mask.data[p]) {
                    sum[p] += r.values.data[p];
                    ++count[p];
                }
        }
        DistanceGrid g{Image(w, h, 1), Mask(w, h)};
        for (size_t p = 0; p < sum.size(); ++p)
            if (count[p] > 0) {
                g.values.data[p] = static_cast<float>(sum[p] / count[p]);
                g.valid.data[p] = 1;
            }
        out[i] = std::move(g);
    });
    return out;
}

DistanceGrid stitch_distances(const std::vector<ViewSpec>& views, const std::vector<DistanceGrid>& dists,
                              const ViewSpec& band) {
    const int w = band.width(), h = band.height();
    std::vector<double> sum(static_cast<size_t>(w) * h, 0.0);
    std::vector<int> count(sum.size(), 0);
    for (size_t i = 0; i < views.size(); ++i) {
        const WarpResult r = warp_grid(views[i], band, dists[i].values, &dists[i].valid);
        for (size_t p = 0; p < sum.size(); ++p)
            if (r.mask.data[p]) {
                sum[p] += r.values.data[p];
                ++count[p];
            }
    }
    DistanceGrid g{Image(w, h, 1), Mask(w, h)};
    for (size_t p = 0; p < sum.size(); ++p)
        if (count[p] > 0) {
            g.values.data[p] = static_cast<float>(sum[p] / count[p]);
            g.valid.data[p] = 1;
        }
    return g;
}

PanoramaDepthResult inpaint_panorama_depth(const PanoramaDepthInput& in, const DepthPredictor& predictor,
                                           const DepthFusionConfig& cfg) {
    const size_t m = in.views.size();
    if (m == 0 || in.images.size() != m || in.rendered_depth.size() != m || in.anchor_mask.size() != m)
        throw Error(ErrorCode::Config, "inpaint_panorama_depth: per-view inputs differ in count");
    if (cfg.refine_iters < 0) throw Error(ErrorCode::Config, "inpaint_panorama_depth: refine iterations must be >= 0");

    auto with_view = [](size_t i, auto&& fn) {
        try {
            return fn();
        } catch (const Error& e) {
            std::ostringstream os;
            os << "view " << i << ": " << e.what();
            throw Error(ErrorCode::Depth, os.str());
        }
    };

    std::vector<Image> pred(m);
    parallel_for(
        m,
        [&](size_t i) {
            pred[i] = with_view(i, [&] { return predictor.predict_initial(in.images[i], in.views[i]); });
            check_depth_shape(pred[i], in.views[i], i);
        },
        predictor.concurrent());

    PanoramaDepthResult result;
    result.scales.assign(m, 1.0);
    double global = 1.0;
    const bool have_global = joint_scale(pred, in.rendered_depth, in.anchor_mask, &global);
    std::vector<DistanceGrid> dist(m);
    for (size_t i = 0; i < m; ++i) {
        double s = have_global ? global : 1.0;
        try {
            s = align_scale(pred[i], in.rendered_depth[i], in.anchor_mask[i]);
        } catch (const Error&) {
            // no overlap with the mesh in this view: fall back to the joint scale
        }
        result.scales[i] = s;
        dist[i] = depth_to_distance(scaled(pred[i], s), in.views[i]);
    }
    dist = fuse_distances(in.views, dist);

    for (int round = 0; round < cfg.refine_iters; ++round) {
        std::vector<DistanceGrid> next(m);
        parallel_for(
            m,
            [&](size_t i) {
                const Image current = distance_to_depth(dist[i], in.views[i]);
                Image refined = with_view(i, [&] {
                    return predictor.refine(current, in.rendered_depth[i], in.anchor_mask[i], in.images[i], in.views[i]);
                });
                check_depth_shape(refined, in.views[i], i);
                refined = impose_anchors(std::move(refined), in.rendered_depth[i], in.anchor_mask[i]);
                next[i] = depth_to_distance(refined, in.views[i]);
            },
            predictor.concurrent());
        dist = fuse_distances(in.views, next);
    }

    result.band = stitch_distances(in.views, dist, in.band);
    if (in.band_rendered && in.band_observed) {
        for (size_t p = 0; p < result.band.values.data.size(); ++p)
            if (in.band_observed->data[p] && in.band_rendered->valid.data[p]) {
                result.band.values.data[p] = in.band_rendered->values.data[p];
                result.band.valid.data[p] = 1;
            }
    }
    result.view_distances = std::move(dist);
    return result;
}

Image complete_view_depth(const Image& rgb, const ViewSpec& view, const Image& rendered_depth, const Mask& anchor_mask,
                          const DepthPredictor& predictor, const DepthFusionConfig& cfg) {
    Image pred = predictor.predict_initial(rgb, view);
    check_depth_shape(pred, view, 0);
    double s = 1.0;
    try {
        s = align_scale(pred, rendered_depth, anchor_mask);
    } catch (const Error&) {
    }
    Image depth = impose_anchors(scaled(std::move(pred), s), rendered_depth, anchor_mask);
    for (int round = 0; round < cfg.refine_iters; ++round) {
        depth = predictor.refine(depth, rendered_depth, anchor_mask, rgb, view);
        check_depth_shape(depth, view, 0);
        depth = impose_anchors(std::move(depth), rendered_depth, anchor_mask);
    }
    return depth;
}

Image OracleDepthPredictor::predict_initial(const Image&, const ViewSpec& view) const {
    return scaled(render(mesh_, view).depth, scale_);
}

Image OracleDepthPredictor::refine(const Image&, const Image&, const Mask&, const Image&, const ViewSpec& view) const {
    return render(mesh_, view).depth;
}

Image HarmonicDepthPredictor::predict_initial(const Image& rgb, const ViewSpec& view) const {
    const auto& k = view.intrinsics();
    Image out(rgb.width, rgb.height, 1);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            const double rx = (x - k.cx) / k.fx, ry = (y - k.cy) / k.fy;
            out.at(x, y) = static_cast<float>(1.0 / std::sqrt(rx * rx + ry * ry + 1.0));
        }
    return out;
}

namespace {

// Jacobi relaxation of inverse depth with fixed anchors, coarse-to-fine.
void harmonic_fill(std::vector<double>& f, const std::vector<std::uint8_t>& fixed, int w, int h, int iters) {
    if (w > 8 && h > 8) {
        const int cw = (w + 1) / 2, ch = (h + 1) / 2;
        std::vector<double> cf(static_cast<size_t>(cw) * ch, 0.0);
        std::vector<std::uint8_t> cfix(cf.size(), 0);
        std::vector<int> cnt(cf.size(), 0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const size_t i = static_cast<size_t>(y) * w + x;
                if (!fixed[i]) continue;
                const size_t ci = static_cast<size_t>(y / 2) * cw + x / 2;
                cf[ci] += f[i];
                ++cnt[ci];
                cfix[ci] = 1;
            }
        double mean = 0.0;
        size_t nf = 0;
        for (size_t i = 0; i < cf.size(); ++i)
            if (cnt[i]) {
                cf[i] /= cnt[i];
                mean += cf[i];
                ++nf;
            }
        if (nf) mean /= static_cast<double>(nf);
        for (size_t i = 0; i < cf.size(); ++i)
            if (!cnt[i]) cf[i] = mean;
        harmonic_fill(cf, cfix, cw, ch, iters);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const size_t i = static_cast<size_t>(y) * w + x;
                if (!fixed[i]) f[i] = cf[static_cast<size_t>(y / 2) * cw + x / 2];
            }
    }
    std::vector<double> next = f;
    for (int it = 0; it < iters; ++it) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const size_t i = static_cast<size_t>(y) * w + x;
                if (fixed[i]) continue;
                double s = 0.0;
                int n = 0;
                if (x > 0) { s += f[i - 1]; ++n; }
                if (x + 1 < w) { s += f[i + 1]; ++n; }
                if (y > 0) { s += f[i - w]; ++n; }
                if (y + 1 < h) { s += f[i + w]; ++n; }
                next[i] = s / n;
            }
        f.swap(next);
    }
}

}  // namespace

Image HarmonicDepthPredictor::refine(const Image& depth, const Image& anchor_depth, const Mask& anchor_mask,
                                     const Image&, const ViewSpec&) const {
    const int w = depth.width, h = depth.height;
    std::vector<double> inv(depth.data.size(), 0.0);
    std::vector<std::uint8_t> fixed(depth.data.size(), 0);
    bool any_fixed = false;
    for (size_t i = 0; i < inv.size(); ++i) {
        if (anchor_mask.data[i] && anchor_depth.data[i] > 0.0f) {
            inv[i] = 1.0 / anchor_depth.data[i];
            fixed[i] = 1;
            any_fixed = true;
        } else if (depth.data[i] > 0.0f) {
            inv[i] = 1.0 / depth.data[i];
        }
    }
    if (!any_fixed) return depth;
    harmonic_fill(inv, fixed, w, h, 40);
    Image out(w, h, 1);
    for (size_t i = 0; i < inv.size(); ++i) out.data[i] = inv[i] > 1e-6 ? static_cast<float>(1.0 / inv[i]) : 0.0f;
    return out;
}

}  // namespace roomweave::depth
