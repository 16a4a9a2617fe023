#pragma once

#include <optional>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "roomweave/image.hpp"

namespace roomweave {

// Camera frame: +x right, +y down, +z forward. The world frame shares the
// same handedness; "up" in a room is -y.

/// Camera-to-world rigid transform.
struct RigidTransform {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }
    Eigen::Vector3d rotate(const Eigen::Vector3d& d) const { return rotation * d; }
    Eigen::Vector3d to_local(const Eigen::Vector3d& p) const { return rotation.transpose() * (p - translation); }
    Eigen::Vector3d forward() const { return rotation.col(2); }
    const Eigen::Vector3d& position() const { return translation; }

    Eigen::Matrix4d matrix() const;
    static RigidTransform from_matrix(const Eigen::Matrix4d& m);
    /// Rotation about the vertical axis (yaw) followed by pitch about the
    /// camera x axis. Positive elevation tilts the view upward.
    static RigidTransform from_yaw_elevation(const Eigen::Vector3d& position, double yaw, double elevation);
    bool is_rigid(double tol = 1e-6) const;
};

struct CameraIntrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;

    void validate() const;
    /// Symmetric square/rectangular camera with horizontal field of view in degrees.
    static CameraIntrinsics from_fov(int width, int height, double hfov_deg);
    /// Same camera at 1/k resolution (latent grid geometry).
    CameraIntrinsics scaled(int k) const;
};

/// Equirectangular projection spanning all longitudes and the latitude band
/// [lat_min, lat_max] (radians, positive = up).
struct EquirectSpec {
    int width = 2;
    int height = 1;
    double lat_min = -M_PI / 2;
    double lat_max = M_PI / 2;
};

struct ViewSpec {
    std::variant<CameraIntrinsics, EquirectSpec> projection;
    RigidTransform pose;

    static ViewSpec perspective(const CameraIntrinsics& k, const RigidTransform& pose = {});
    static ViewSpec equirect(int width, int height, const RigidTransform& pose = {});
    static ViewSpec equirect_band(int width, int height, double lat_min, double lat_max,
                                  const RigidTransform& pose = {});

    bool is_equirect() const { return std::holds_alternative<EquirectSpec>(projection); }
    const CameraIntrinsics& intrinsics() const;
    const EquirectSpec& equirect_spec() const;
    int width() const;
    int height() const;
    void validate() const;
    /// Geometry of a grid with 1/k the nominal resolution. Cell (x, y) of the
    /// scaled view sees the ray through pixel k*x + (k-1)/2 of this view.
    ViewSpec scaled(int k) const;
};

/// Continuous pixel coordinates of the ray `dir`.
struct PixelHit {
    double u = 0.0;
    double v = 0.0;
    bool in_frustum = false;
};

/// Unit world-frame direction through pixel (u, v). Throws on out-of-bounds pixels.
Eigen::Vector3d pixel_to_ray(const ViewSpec& view, double u, double v);
/// Camera-frame direction; skips the bounds check (hot loops).
Eigen::Vector3d camera_ray(const ViewSpec& view, double u, double v);
PixelHit ray_to_pixel(const ViewSpec& view, const Eigen::Vector3d& world_dir);
PixelHit camera_dir_to_pixel(const ViewSpec& view, const Eigen::Vector3d& cam_dir);

/// Per-pixel distance from the camera origin along each pixel's ray.
struct DistanceGrid {
    Image values;  // 1 channel, meters
    Mask valid;

    int width() const { return values.width; }
    int height() const { return values.height; }
};

/// Perspective z-depth (0 = invalid) to ray distance.
DistanceGrid depth_to_distance(const Image& depth, const ViewSpec& view);
/// Inverse of depth_to_distance; invalid cells become 0.
Image distance_to_depth(const DistanceGrid& dist, const ViewSpec& view);

/// Shared-center perspective fan: m square views, pitch 0, yaw k*360/m.
/// Throws E_CONFIG when the fan leaves part of the latitude band
/// [-band_half_deg, band_half_deg] uncovered or adjacent views do not overlap.
std::vector<ViewSpec> make_pano_views(const Eigen::Vector3d& center, int m, double fov_deg, int resolution = 512,
                                      double band_half_deg = 45.0);

struct WarpResult {
    Image values;
    Mask mask;
};

/// Resample `grid` (attached to `src`) into `dst`. Both views must share a
/// center. The grid may be at 1/k of the source view's resolution; the output
/// uses the same k relative to `dst`. A cell is sampled only when all four
/// bilinear taps lie inside the source grid (and inside `src_valid`, when
/// given). Cells outside the mask are 0.
WarpResult warp_grid(const ViewSpec& src, const ViewSpec& dst, const Image& grid, const Mask* src_valid = nullptr);

/// Bilinear lookup at continuous cell coordinates. Returns false when a tap
/// falls outside the grid or on an invalid cell. `wrap_x` makes columns cyclic.
bool sample_bilinear(const Image& grid, double x, double y, bool wrap_x, const Mask* valid, float* out);
/// Bilinear lookup with edge clamping; never fails.
void sample_bilinear_clamped(const Image& grid, double x, double y, bool wrap_x, float* out);

/// Integer grid scale k such that view.width() == k * grid_width. Throws on mismatch.
int grid_scale(const ViewSpec& view, int grid_width, int grid_height);

bool same_center(const ViewSpec& a, const ViewSpec& b, double tol = 1e-9);

}  // namespace roomweave
