#include <cmath>
#include <cstring>
#include <map>
#include <mutex>
#include <sstream>

#include "roomweave/diffusion.hpp"
#include "roomweave/error.hpp"

namespace roomweave::diffusion {

namespace {

class TargetDenoiser final : public Denoiser {
public:
    TargetDenoiser(TargetFn target, std::shared_ptr<const LatentCodec> codec)
        : target_(std::move(target)), codec_(std::move(codec)) {}

    LatentGrid predict_epsilon(const DenoiserInput& in) const override {
        if (!(in.alpha_bar < 1.0))
            throw Error(ErrorCode::Denoiser, "target denoiser: abar_t = 1 leaves epsilon undefined");
        const Image target = target_(in.geometry);
        const Image& ref = in.reference_image;
        if (target.width != ref.width || target.height != ref.height || target.channels != ref.channels)
            throw Error(ErrorCode::Denoiser, "target denoiser: target does not match the reference image");
        Image composite = ref;
        for (int y = 0; y < ref.height; ++y)
            for (int x = 0; x < ref.width; ++x)
                if (in.pixel_mask.at(x, y))
                    for (int c = 0; c < ref.channels; ++c) composite.at(x, y, c) = target.at(x, y, c);
        const LatentGrid y0 = codec_->encode(composite);
        if (!y0.values.same_shape(in.latents.values))
            throw Error(ErrorCode::Denoiser, "target denoiser: encoded target does not match latent shape");
        const double a = std::sqrt(in.alpha_bar), b = std::sqrt(1.0 - in.alpha_bar);
        LatentGrid eps{Image(in.latents.width(), in.latents.height(), in.latents.channels()), in.latents.scale};
        for (size_t i = 0; i < eps.values.data.size(); ++i)
            eps.values.data[i] = static_cast<float>((in.latents.values.data[i] - a * y0.values.data[i]) / b);
        return eps;
    }

private:
    TargetFn target_;
    std::shared_ptr<const LatentCodec> codec_;
};

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double lattice(std::uint64_t seed, int ix, int iy, int iz, int channel) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(ix)));
    h = splitmix64(h ^ (static_cast<std::uint64_t>(static_cast<std::uint32_t>(iy)) << 21));
    h = splitmix64(h ^ (static_cast<std::uint64_t>(static_cast<std::uint32_t>(iz)) << 42));
    h = splitmix64(h ^ static_cast<std::uint64_t>(channel));
    return static_cast<double>(h >> 11) * (2.0 / 9007199254740992.0) - 1.0;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(std::uint64_t seed, const Eigen::Vector3d& p, int channel) {
    const int ix = static_cast<int>(std::floor(p.x())), iy = static_cast<int>(std::floor(p.y())),
              iz = static_cast<int>(std::floor(p.z()));
    const double fx = smooth(p.x() - ix), fy = smooth(p.y() - iy), fz = smooth(p.z() - iz);
    double acc = 0.0;
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                const double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
                acc += w * lattice(seed, ix + dx, iy + dy, iz + dz, channel);
            }
    return acc;
}

std::string geometry_key(const FrameGeometry& g) {
    std::ostringstream os;
    os.precision(17);
    const Eigen::Matrix4d m = g.view.pose.matrix();
    for (int i = 0; i < 16; ++i) os << m(i / 4, i % 4) << ",";
    if (g.view.is_equirect()) {
        const auto& e = g.view.equirect_spec();
        os << "E" << e.width << "," << e.height << "," << e.lat_min << "," << e.lat_max;
    } else {
        const auto& k = g.view.intrinsics();
        os << "P" << k.fx << "," << k.fy << "," << k.cx << "," << k.cy << "," << k.width << "," << k.height;
    }
    return os.str();
}

}  // namespace

std::unique_ptr<Denoiser> oracle_denoiser(TargetFn target, std::shared_ptr<const LatentCodec> codec) {
    return std::make_unique<TargetDenoiser>(std::move(target), std::move(codec));
}

TargetFn panorama_target(Image band, ViewSpec band_view) {
    if (!band_view.is_equirect() || band.width != band_view.width() || band.height != band_view.height())
        throw Error(ErrorCode::Config, "panorama_target: band image does not match an equirect view");
    return [band = std::move(band), band_view = std::move(band_view)](const FrameGeometry& g) {
        Image out(g.pixel_width(), g.pixel_height(), band.channels);
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x) {
                const PixelHit hit = ray_to_pixel(band_view, g.ray(x, y));
                sample_bilinear_clamped(band, hit.u, hit.v, true, out.pixel(x, y).data());
            }
        return out;
    };
}

TargetFn mesh_target(TriangleMesh mesh, RenderOptions options) {
    struct Cache {
        TriangleMesh mesh;
        RenderOptions options;
        std::mutex mutex;
        std::map<std::string, Image> renders;
    };
    auto cache = std::make_shared<Cache>();
    cache->mesh = std::move(mesh);
    cache->options = options;
    return [cache](const FrameGeometry& g) {
        const std::string key = geometry_key(g);
        Image full;
        {
            std::lock_guard<std::mutex> lock(cache->mutex);
            auto it = cache->renders.find(key);
            if (it != cache->renders.end()) full = it->second;
        }
        if (full.empty()) {
            full = render(cache->mesh, g.view, cache->options).color;
            std::lock_guard<std::mutex> lock(cache->mutex);
            if (cache->renders.size() > 64) cache->renders.clear();
            cache->renders.emplace(key, full);
        }
        if (g.window) return crop_cyclic(full, g.window->x0, g.window->width);
        return full;
    };
}

Image procedural_field(std::uint64_t style_seed, const FrameGeometry& geometry) {
    Image out(geometry.pixel_width(), geometry.pixel_height(), 3);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            const Eigen::Vector3d d = geometry.ray(x, y);
            for (int c = 0; c < 3; ++c) {
                const double n = 0.65 * value_noise(style_seed, 1.5 * d, c) + 0.35 * value_noise(style_seed, 3.5 * d, c + 3);
                out.at(x, y, c) = static_cast<float>(0.5 + 0.35 * std::clamp(n, -1.0, 1.0));
            }
        }
    return out;
}

std::unique_ptr<Denoiser> procedural_denoiser(std::uint64_t style_seed, std::shared_ptr<const LatentCodec> codec) {
    return oracle_denoiser([style_seed](const FrameGeometry& g) { return procedural_field(style_seed, g); },
                           std::move(codec));
}

}  // namespace roomweave::diffusion
