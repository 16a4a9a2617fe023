#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "roomweave/frame.hpp"
#include "roomweave/geometry.hpp"
#include "roomweave/image.hpp"

namespace roomweave {

struct TriangleMesh {
    std::vector<Eigen::Vector3d> vertices;
    std::vector<Eigen::Vector3f> colors;  // RGB in [0, 1]
    std::vector<std::array<std::uint32_t, 3>> faces;

    bool empty() const { return faces.empty(); }
    /// Throws E_MESH when an index is out of range, sizes disagree or a
    /// coordinate is not finite.
    void validate() const;
};

struct RenderOutput {
    Image color;     // 3 channels
    Image depth;     // z for perspective, ray distance for equirect; 0 where uncovered
    Mask coverage;   // pixel hit by a front face
    Mask backface;   // first hit is a back face
    double backface_ratio = 0.0;
    double min_depth = std::numeric_limits<double>::infinity();

    double inpaint_ratio() const { return 1.0 - static_cast<double>(coverage.count()) / coverage.data.size(); }
};

struct TriangulationParams {
    double edge_len_max = 0.1;
    double depth_ratio_max = 1.25;
};

/// Back-projects every valid pixel and connects 2x2 pixel blocks with two
/// triangles each, dropping triangles across depth discontinuities.
TriangleMesh mesh_from_rgbd(const RgbdFrame& frame, const TriangulationParams& params = {});

/// General grid triangulation used by frame meshing and hole patches.
/// `distance` is ray distance per cell; only cells with `include` set become
/// vertices. Equirect views wrap horizontally.
TriangleMesh triangulate_grid(const ViewSpec& view, const Image& color, const DistanceGrid& distance,
                              const Mask& include, const TriangulationParams& params);

TriangleMesh fuse(const TriangleMesh& a, const TriangleMesh& b);

struct RenderOptions {
    double near_plane = 1e-3;
    // Equirect rendering rasterizes this many perspective views and composites.
    int fan_views = 8;
    double fan_fov_deg = 98.0;
    // 0 picks a fan resolution that matches the band's angular resolution.
    int fan_resolution = 0;
};

RenderOutput render(const TriangleMesh& mesh, const ViewSpec& view, const RenderOptions& options = {});

struct PanoramaRgbd;

/// Triangulates the hole cells of `pano` (dilated by one cell so the border
/// reuses the rendered distance) and appends the patch to `mesh`.
TriangleMesh fuse_panorama(const TriangleMesh& mesh, const PanoramaRgbd& pano,
                           const TriangulationParams& params = {std::numeric_limits<double>::infinity(), 1.25});

/// Area-uniform surface samples; deterministic for a given seed.
std::vector<Eigen::Vector3d> sample_surface_points(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed);

double triangle_area(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c);

/// Color + ray distance + hole mask on an equirect band around a center.
struct PanoramaRgbd {
    Image color;           // 3 channels
    DistanceGrid distance;
    Mask hole_mask;        // 1 where the mesh had no coverage at render time
    ViewSpec view;         // equirect band; pose.translation is the center

    Eigen::Vector3d center() const { return view.pose.translation; }
    void validate() const;
};

}  // namespace roomweave
