#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "roomweave/geometry.hpp"
#include "roomweave/image.hpp"
#include "roomweave/mesh.hpp"

namespace roomweave::diffusion {

/// Cumulative noise-retention coefficients abar_1 ... abar_T, with abar_0 = 1.
struct AlphaSchedule {
    std::vector<double> alpha_bar;  // alpha_bar[t - 1] is abar_t

    int steps() const { return static_cast<int>(alpha_bar.size()); }
    /// abar_t for t in [0, T]; abar_0 is 1.
    double at(int t) const;
    /// Strictly decreasing, all values in (0, 1].
    void validate() const;

    /// Linear beta ramp over `train_steps` training timesteps, sampled at
    /// `steps` evenly spaced timesteps (DDIM-style striding).
    static AlphaSchedule linear_beta(int steps, double beta_start = 8.5e-4, double beta_end = 1.2e-2,
                                     int train_steps = 1000);
};

/// Latent values at 1/scale of the pixel grid they encode.
struct LatentGrid {
    Image values;
    int scale = 1;

    int width() const { return values.width; }
    int height() const { return values.height; }
    int channels() const { return values.channels; }
};

/// Horizontal cyclic sub-window of a view, in pixels.
struct PixelWindow {
    int x0 = 0;
    int width = 0;
};

/// Pixel geometry a denoiser call operates on: a full view, or a cyclic
/// column window of an equirect band.
struct FrameGeometry {
    ViewSpec view;
    std::optional<PixelWindow> window;

    int pixel_width() const { return window ? window->width : view.width(); }
    int pixel_height() const { return view.height(); }
    /// World-frame unit ray through pixel (x, y) of this frame.
    Eigen::Vector3d ray(int x, int y) const;
};

struct DenoiserInput {
    const LatentGrid& latents;      // x_t
    int step;                       // t
    double alpha_bar;               // abar_t
    const LatentGrid& reference;    // encoded conditioning image
    const Mask& latent_mask;        // 1 = hole, at latent resolution
    const Image& reference_image;   // conditioning image in pixel space
    const Mask& pixel_mask;         // 1 = hole, pixel space
    const std::string& prompt;
    const FrameGeometry& geometry;
};

class Denoiser {
public:
    virtual ~Denoiser() = default;
    /// Predicted noise with the same shape as input.latents.
    virtual LatentGrid predict_epsilon(const DenoiserInput& input) const = 0;
    /// False when calls must be serialized.
    virtual bool concurrent() const { return true; }
};

class LatentCodec {
public:
    virtual ~LatentCodec() = default;
    virtual int scale() const = 0;
    virtual int channels() const = 0;
    virtual LatentGrid encode(const Image& rgb) const = 0;
    virtual Image decode(const LatentGrid& latent) const = 0;
};

/// k = 1, latent == RGB pixels. decode(encode(x)) == x exactly.
class IdentityCodec final : public LatentCodec {
public:
    int scale() const override { return 1; }
    int channels() const override { return 3; }
    LatentGrid encode(const Image& rgb) const override;
    Image decode(const LatentGrid& latent) const override;
};

/// k x k average pooling encoder with bilinear (edge-clamped) decoder.
class BoxCodec final : public LatentCodec {
public:
    explicit BoxCodec(int k) : k_(k) {}
    int scale() const override { return k_; }
    int channels() const override { return 3; }
    LatentGrid encode(const Image& rgb) const override;
    Image decode(const LatentGrid& latent) const override;

private:
    int k_;
};

struct EDiffusionConfig {
    int total_steps = 50;           // T
    int refine_steps = 20;          // F, planar window steps at the end
    int views = 8;
    double fov_deg = 98.0;
    int noise_refresh_period = 2;
    int window_size = 64;           // latent cells
    int window_stride = 16;         // latent cells
    double band_half_deg = 45.0;
    int view_latent_size = 64;      // per-view latent grid side
    std::uint64_t seed = 0;
    std::optional<AlphaSchedule> schedule;  // default: linear_beta(total_steps)

    AlphaSchedule effective_schedule() const;
    void validate() const;
};

/// x0 = (x_t - sqrt(1 - abar_t) * eps) / sqrt(abar_t)
LatentGrid predict_x0(const LatentGrid& x_t, const LatentGrid& eps, double abar_t);
/// x_{t-1} = sqrt(abar_prev) * x0 + sqrt(1 - abar_prev) * noise
LatentGrid renoise(const LatentGrid& x0, double abar_prev, const LatentGrid& noise);

/// For each view i: sum_j W_{j->i}(grid_j) / sum_j m_{j->i}.
std::vector<LatentGrid> warp_average(const std::vector<ViewSpec>& views, const std::vector<LatentGrid>& grids);

struct WindowTile {
    int x0 = 0;  // latent column of the window's left edge (cyclic)
    LatentGrid grid;
};

/// Count-weighted mean of windows placed on a cyclic panorama latent of
/// the shape of `pano`. Throws when a cell is uncovered.
LatentGrid window_average(const LatentGrid& pano, const std::vector<WindowTile>& windows);
std::vector<int> window_offsets(int width, int window, int stride);

/// Coverage-weighted mean of the view grids warped onto `band` (pixel view).
LatentGrid stitch_views_to_equirect(const std::vector<ViewSpec>& views, const std::vector<LatentGrid>& grids,
                                    const ViewSpec& band);

/// Deterministic standard-normal field keyed by (seed, stream, index, key).
LatentGrid gaussian_noise(int w, int h, int c, int scale, std::uint64_t seed, std::uint64_t stream,
                          std::uint64_t index, std::uint64_t key);

/// Intermediate state captured for inspection.
struct EDiffusionTrace {
    std::vector<ViewSpec> views;                  // latent-resolution fan
    std::vector<LatentGrid> phase1_x0;            // before averaging, last Phase-1 step
    std::vector<LatentGrid> phase1_x0_averaged;   // after averaging, last Phase-1 step
    LatentGrid final_latent;                      // band latent before decoding
};

/// Inpaints the hole cells of `mesh_pano.color`. Known cells are copied from
/// the reference in the returned band image.
Image e_diffusion_inpaint(const PanoramaRgbd& mesh_pano, const Denoiser& denoiser, const LatentCodec& codec,
                          const EDiffusionConfig& cfg, const std::string& prompt, EDiffusionTrace* trace = nullptr);

/// Single perspective view, all T steps, no warps.
Image inpaint_single_view(const ViewSpec& view, const Image& reference, const Mask& hole, const Denoiser& denoiser,
                          const LatentCodec& codec, const EDiffusionConfig& cfg, const std::string& prompt);

/// Pixel-space RGB target for a frame geometry.
using TargetFn = std::function<Image(const FrameGeometry&)>;

/// Denoiser whose epsilon makes predict_x0 return encode(composite(target
/// over the hole mask, reference)) exactly.
std::unique_ptr<Denoiser> oracle_denoiser(TargetFn target, std::shared_ptr<const LatentCodec> codec);
/// Samples an equirect band image (bilinear, cyclic in longitude, clamped in latitude).
TargetFn panorama_target(Image band, ViewSpec band_view);
/// Renders `mesh` for each requested geometry (memoized per view).
TargetFn mesh_target(TriangleMesh mesh, RenderOptions options = {});

/// Smooth seeded color field over ray directions, values in [0.15, 0.85].
Image procedural_field(std::uint64_t style_seed, const FrameGeometry& geometry);
/// Neural-free backend that denoises toward procedural_field composited with the reference.
std::unique_ptr<Denoiser> procedural_denoiser(std::uint64_t style_seed, std::shared_ptr<const LatentCodec> codec);

/// Builds a latent-space conditioning pair from a pixel reference and hole mask.
struct Conditioning {
    Image reference_image;
    Mask pixel_mask;
    LatentGrid reference;
    Mask latent_mask;
};
Conditioning make_conditioning(const Image& reference_image, const Mask& pixel_hole, const LatentCodec& codec);

}  // namespace roomweave::diffusion
