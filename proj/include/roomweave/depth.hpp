#pragma once

#include <vector>

#include "roomweave/geometry.hpp"
#include "roomweave/image.hpp"
#include "roomweave/mesh.hpp"

namespace roomweave::depth {

/// Monocular depth backend. Depth grids are perspective z in meters, 0 where
/// undefined.
class DepthPredictor {
public:
    virtual ~DepthPredictor() = default;
    virtual Image predict_initial(const Image& rgb, const ViewSpec& view) const = 0;
    /// Refines `depth` so it agrees with `anchor_depth` wherever `anchor_mask` is set.
    virtual Image refine(const Image& depth, const Image& anchor_depth, const Mask& anchor_mask, const Image& rgb,
                         const ViewSpec& view) const = 0;
    virtual bool concurrent() const { return true; }
};

struct DepthFusionConfig {
    int refine_iters = 4;
    double anchor_tolerance = 1e-3;  // meters
};

/// Least-squares scale s minimizing sum over mask of (s * pred - rendered)^2.
/// Only pixels with pred > 0 and rendered > 0 participate.
double align_scale(const Image& pred, const Image& rendered, const Mask& mask);

/// Warp-and-average of shared-center distance grids.
std::vector<DistanceGrid> fuse_distances(const std::vector<ViewSpec>& views, const std::vector<DistanceGrid>& dists);

/// Coverage-weighted mean of view distances on an equirect band.
DistanceGrid stitch_distances(const std::vector<ViewSpec>& views, const std::vector<DistanceGrid>& dists,
                              const ViewSpec& band);

struct PanoramaDepthInput {
    std::vector<ViewSpec> views;        // shared-center fan
    std::vector<Image> images;          // inpainted RGB per view
    std::vector<Image> rendered_depth;  // mesh z-depth per view
    std::vector<Mask> anchor_mask;      // 1 where rendered depth is trusted
    ViewSpec band;                      // output equirect band
    // Optional: observed band cells take the rendered distance verbatim.
    const DistanceGrid* band_rendered = nullptr;
    const Mask* band_observed = nullptr;
};

struct PanoramaDepthResult {
    DistanceGrid band;
    std::vector<DistanceGrid> view_distances;  // after the last fusion
    std::vector<double> scales;                // alignment scale per view
};

PanoramaDepthResult inpaint_panorama_depth(const PanoramaDepthInput& input, const DepthPredictor& predictor,
                                           const DepthFusionConfig& cfg);

/// Single-view variant used by iterative completion: predict, align, refine.
Image complete_view_depth(const Image& rgb, const ViewSpec& view, const Image& rendered_depth, const Mask& anchor_mask,
                          const DepthPredictor& predictor, const DepthFusionConfig& cfg);

/// Renders a reference mesh; predict_initial returns its depth times `scale`,
/// refine returns the metric depth.
class OracleDepthPredictor final : public DepthPredictor {
public:
    explicit OracleDepthPredictor(TriangleMesh mesh, double scale = 1.0) : mesh_(std::move(mesh)), scale_(scale) {}
    Image predict_initial(const Image& rgb, const ViewSpec& view) const override;
    Image refine(const Image& depth, const Image& anchor_depth, const Mask& anchor_mask, const Image& rgb,
                 const ViewSpec& view) const override;

private:
    TriangleMesh mesh_;
    double scale_;
};

/// Neural-free predictor: unit-sphere initial guess; refinement fills
/// unanchored pixels with a harmonic interpolation of the anchors' inverse depth.
class HarmonicDepthPredictor final : public DepthPredictor {
public:
    Image predict_initial(const Image& rgb, const ViewSpec& view) const override;
    Image refine(const Image& depth, const Image& anchor_depth, const Mask& anchor_mask, const Image& rgb,
                 const ViewSpec& view) const override;
};

}  // namespace roomweave::depth
