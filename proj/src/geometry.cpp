#include "roomweave/geometry.hpp"

#include <cmath>
#include <sstream>

#include "roomweave/error.hpp"

namespace roomweave {

namespace {

constexpr double kTapEps = 1e-6;

double deg2rad(double d) { return d * M_PI / 180.0; }

// Snaps coordinates that sit within kTapEps of the last row/column so exact
// self-warps keep full coverage.
bool bilinear_taps(double coord, int size, bool wrap, int* i0, int* i1, double* frac) {
    if (wrap) {
        const double fl = std::floor(coord);
        double f = coord - fl;
        int base = static_cast<int>(fl);
        if (f > 1.0 - kTapEps) { f = 0.0; ++base; }
        if (f < kTapEps) f = 0.0;
        *i0 = ((base % size) + size) % size;
        *i1 = (*i0 + 1) % size;
        *frac = f;
        return true;
    }
    if (coord < -kTapEps || coord > size - 1 + kTapEps) return false;
    if (size == 1) {
        *i0 = *i1 = 0;
        *frac = 0.0;
        return true;
    }
    double c = std::clamp(coord, 0.0, static_cast<double>(size - 1));
    int base = static_cast<int>(std::floor(c));
    if (base >= size - 1) base = size - 2;
    double f = c - base;
    if (f < kTapEps) f = 0.0;
    if (f > 1.0 - kTapEps) f = 1.0;
    *i0 = base;
    *i1 = base + 1;
    *frac = f;
    return true;
}

}  // namespace

Eigen::Matrix4d RigidTransform::matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
}

RigidTransform RigidTransform::from_matrix(const Eigen::Matrix4d& m) {
    RigidTransform t;
    t.rotation = m.topLeftCorner<3, 3>();
    t.translation = m.topRightCorner<3, 1>();
    return t;
}

RigidTransform RigidTransform::from_yaw_elevation(const Eigen::Vector3d& position, double yaw, double elevation) {
    RigidTransform t;
    t.rotation = (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()) *
                  Eigen::AngleAxisd(elevation, Eigen::Vector3d::UnitX()))
                     .toRotationMatrix();
    t.translation = position;
    return t;
}

bool RigidTransform::is_rigid(double tol) const {
    if (!rotation.allFinite() || !translation.allFinite()) return false;
    const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    return ortho <= tol && rotation.determinant() > 0.0;
}

void CameraIntrinsics::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0) || width <= 0 || height <= 0)
        throw Error(ErrorCode::Geometry, "intrinsics: focal lengths and size must be positive");
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height))
        throw Error(ErrorCode::Geometry, "intrinsics: principal point outside image");
}

CameraIntrinsics CameraIntrinsics::from_fov(int width, int height, double hfov_deg) {
    CameraIntrinsics k;
    k.width = width;
    k.height = height;
    k.fx = k.fy = 0.5 * width / std::tan(0.5 * deg2rad(hfov_deg));
    k.cx = 0.5 * (width - 1);
    k.cy = 0.5 * (height - 1);
    return k;
}

CameraIntrinsics CameraIntrinsics::scaled(int k) const {
    if (k == 1) return *this;
    CameraIntrinsics s;
    s.width = width / k;
    s.height = height / k;
    s.fx = fx / k;
    s.fy = fy / k;
    s.cx = (cx - 0.5 * (k - 1)) / k;
    s.cy = (cy - 0.5 * (k - 1)) / k;
    return s;
}

ViewSpec ViewSpec::perspective(const CameraIntrinsics& k, const RigidTransform& pose) {
    return ViewSpec{k, pose};
}

ViewSpec ViewSpec::equirect(int width, int height, const RigidTransform& pose) {
    return ViewSpec{EquirectSpec{width, height, -M_PI / 2, M_PI / 2}, pose};
}

ViewSpec ViewSpec::equirect_band(int width, int height, double lat_min, double lat_max, const RigidTransform& pose) {
    return ViewSpec{EquirectSpec{width, height, lat_min, lat_max}, pose};
}

const CameraIntrinsics& ViewSpec::intrinsics() const {
    if (is_equirect()) throw Error(ErrorCode::Geometry, "expected a perspective view");
    return std::get<CameraIntrinsics>(projection);
}

const EquirectSpec& ViewSpec::equirect_spec() const {
    if (!is_equirect()) throw Error(ErrorCode::Geometry, "expected an equirectangular view");
    return std::get<EquirectSpec>(projection);
}

int ViewSpec::width() const {
    return std::visit([](const auto& p) { return p.width; }, projection);
}

int ViewSpec::height() const {
    return std::visit([](const auto& p) { return p.height; }, projection);
}

void ViewSpec::validate() const {
    if (is_equirect()) {
        const auto& e = equirect_spec();
        if (e.width <= 0 || e.height <= 0) throw Error(ErrorCode::Geometry, "equirect: size must be positive");
        if (!(e.lat_min < e.lat_max) || e.lat_min < -M_PI / 2 - 1e-12 || e.lat_max > M_PI / 2 + 1e-12)
            throw Error(ErrorCode::Geometry, "equirect: latitude band must satisfy -pi/2 <= min < max <= pi/2");
    } else {
        intrinsics().validate();
    }
    if (!pose.is_rigid()) throw Error(ErrorCode::Geometry, "view pose is not a rigid transform");
}

ViewSpec ViewSpec::scaled(int k) const {
    if (k == 1) return *this;
    if (k <= 0 || width() % k != 0 || height() % k != 0)
        throw Error(ErrorCode::Geometry, "view size not divisible by grid scale");
    if (is_equirect()) {
        auto e = equirect_spec();
        e.width /= k;
        e.height /= k;
        return ViewSpec{e, pose};
    }
    return ViewSpec{intrinsics().scaled(k), pose};
}

Eigen::Vector3d camera_ray(const ViewSpec& view, double u, double v) {
    if (view.is_equirect()) {
        const auto& e = std::get<EquirectSpec>(view.projection);
        const double lon = M_PI * (2.0 * (u + 0.5) / e.width - 1.0);
        const double lat = e.lat_max - (v + 0.5) / e.height * (e.lat_max - e.lat_min);
        return {std::cos(lat) * std::sin(lon), -std::sin(lat), std::cos(lat) * std::cos(lon)};
    }
    const auto& k = std::get<CameraIntrinsics>(view.projection);
    return Eigen::Vector3d((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0).normalized();
}

Eigen::Vector3d pixel_to_ray(const ViewSpec& view, double u, double v) {
    const int w = view.width();
    const int h = view.height();
    if (!(u >= -0.5 && u <= w - 0.5 && v >= -0.5 && v <= h - 0.5)) {
        std::ostringstream os;
        os << "pixel (" << u << ", " << v << ") outside " << w << "x" << h << " view";
        throw Error(ErrorCode::Geometry, os.str());
    }
    return view.pose.rotate(camera_ray(view, u, v));
}

PixelHit camera_dir_to_pixel(const ViewSpec& view, const Eigen::Vector3d& d) {
    PixelHit hit;
    if (view.is_equirect()) {
        const auto& e = std::get<EquirectSpec>(view.projection);
        const double n = d.norm();
        const double lon = std::atan2(d.x(), d.z());
        const double lat = std::asin(std::clamp(-d.y() / n, -1.0, 1.0));
        double u = (lon / M_PI + 1.0) * 0.5 * e.width - 0.5;
        if (u < -0.5) u += e.width;
        if (u >= e.width - 0.5) u -= e.width;
        hit.u = u;
        hit.v = (e.lat_max - lat) / (e.lat_max - e.lat_min) * e.height - 0.5;
        hit.in_frustum = hit.v >= -0.5 && hit.v <= e.height - 0.5;
        return hit;
    }
    const auto& k = std::get<CameraIntrinsics>(view.projection);
    if (d.z() <= 0.0) return hit;
    hit.u = k.fx * d.x() / d.z() + k.cx;
    hit.v = k.fy * d.y() / d.z() + k.cy;
    hit.in_frustum = hit.u >= -0.5 && hit.u <= k.width - 0.5 && hit.v >= -0.5 && hit.v <= k.height - 0.5;
    return hit;
}

PixelHit ray_to_pixel(const ViewSpec& view, const Eigen::Vector3d& world_dir) {
    return camera_dir_to_pixel(view, view.pose.rotation.transpose() * world_dir);
}

DistanceGrid depth_to_distance(const Image& depth, const ViewSpec& view) {
    if (view.is_equirect())
        throw Error(ErrorCode::Geometry, "depth_to_distance: equirect grids store distance natively");
    const auto& k = view.intrinsics();
    if (depth.width != k.width || depth.height != k.height || depth.channels != 1)
        throw Error(ErrorCode::Geometry, "depth_to_distance: depth grid does not match view");
    DistanceGrid out{Image(depth.width, depth.height, 1), Mask(depth.width, depth.height)};
    for (int v = 0; v < depth.height; ++v) {
        const double ry = (v - k.cy) / k.fy;
        for (int u = 0; u < depth.width; ++u) {
            const float d = depth.at(u, v);
            if (!(d > 0.0f) || !std::isfinite(d)) continue;
            const double rx = (u - k.cx) / k.fx;
            out.values.at(u, v) = static_cast<float>(d * std::sqrt(rx * rx + ry * ry + 1.0));
            out.valid.at(u, v) = 1;
        }
    }
    return out;
}

Image distance_to_depth(const DistanceGrid& dist, const ViewSpec& view) {
    if (view.is_equirect())
        throw Error(ErrorCode::Geometry, "distance_to_depth: equirect grids have no z-depth");
    const auto& k = view.intrinsics();
    if (dist.width() != k.width || dist.height() != k.height)
        throw Error(ErrorCode::Geometry, "distance_to_depth: grid does not match view");
    Image out(k.width, k.height, 1);
    for (int v = 0; v < k.height; ++v) {
        const double ry = (v - k.cy) / k.fy;
        for (int u = 0; u < k.width; ++u) {
            if (!dist.valid.at(u, v)) continue;
            const double rx = (u - k.cx) / k.fx;
            out.at(u, v) = static_cast<float>(dist.values.at(u, v) / std::sqrt(rx * rx + ry * ry + 1.0));
        }
    }
    return out;
}

std::vector<ViewSpec> make_pano_views(const Eigen::Vector3d& center, int m, double fov_deg, int resolution,
                                      double band_half_deg) {
    if (m < 3) throw Error(ErrorCode::Config, "make_pano_views: need at least 3 views");
    if (!(fov_deg > 360.0 / m) || !(fov_deg < 180.0))
        throw Error(ErrorCode::Config, "make_pano_views: field of view leaves no overlap between adjacent views");
    const double half_fov = deg2rad(0.5 * fov_deg);
    const double half_gap = deg2rad(180.0 / m);
    // Worst-covered band point: halfway between two yaws at the band edge.
    if (std::tan(deg2rad(band_half_deg)) / std::cos(half_gap) > std::tan(half_fov)) {
        std::ostringstream os;
        os << "make_pano_views: " << m << " views at " << fov_deg << " deg do not cover the +-" << band_half_deg
           << " deg latitude band";
        throw Error(ErrorCode::Config, os.str());
    }
    const auto k = CameraIntrinsics::from_fov(resolution, resolution, fov_deg);
    std::vector<ViewSpec> views;
    views.reserve(m);
    for (int i = 0; i < m; ++i) {
        const double yaw = 2.0 * M_PI * i / m;
        views.push_back(ViewSpec::perspective(k, RigidTransform::from_yaw_elevation(center, yaw, 0.0)));
    }
    return views;
}

bool sample_bilinear(const Image& grid, double x, double y, bool wrap_x, const Mask* valid, float* out) {
    int x0, x1, y0, y1;
    double fx, fy;
    if (!bilinear_taps(x, grid.width, wrap_x, &x0, &x1, &fx)) return false;
    if (!bilinear_taps(y, grid.height, false, &y0, &y1, &fy)) return false;
    const double w00 = (1 - fx) * (1 - fy), w10 = fx * (1 - fy), w01 = (1 - fx) * fy, w11 = fx * fy;
    if (valid) {
        // Taps with zero weight do not need to be valid.
        if (w00 > 0.0 && !valid->at(x0, y0)) return false;
        if (w10 > 0.0 && !valid->at(x1, y0)) return false;
        if (w01 > 0.0 && !valid->at(x0, y1)) return false;
        if (w11 > 0.0 && !valid->at(x1, y1)) return false;
    }
    for (int c = 0; c < grid.channels; ++c) {
        out[c] = static_cast<float>(w00 * grid.at(x0, y0, c) + w10 * grid.at(x1, y0, c) + w01 * grid.at(x0, y1, c) +
                                    w11 * grid.at(x1, y1, c));
    }
    return true;
}

void sample_bilinear_clamped(const Image& grid, double x, double y, bool wrap_x, float* out) {
    if (!wrap_x) x = std::clamp(x, 0.0, static_cast<double>(grid.width - 1));
    y = std::clamp(y, 0.0, static_cast<double>(grid.height - 1));
    sample_bilinear(grid, x, y, wrap_x, nullptr, out);
}

int grid_scale(const ViewSpec& view, int grid_width, int grid_height) {
    if (grid_width <= 0 || grid_height <= 0 || view.width() % grid_width != 0)
        throw Error(ErrorCode::Geometry, "grid width does not divide view width");
    const int k = view.width() / grid_width;
    if (view.height() != k * grid_height) throw Error(ErrorCode::Geometry, "grid height does not match view scale");
    return k;
}

bool same_center(const ViewSpec& a, const ViewSpec& b, double tol) {
    return (a.pose.translation - b.pose.translation).norm() <= tol;
}

WarpResult warp_grid(const ViewSpec& src, const ViewSpec& dst, const Image& grid, const Mask* src_valid) {
    if (!same_center(src, dst)) throw Error(ErrorCode::Geometry, "warp_grid: views do not share a center");
    const int k = grid_scale(src, grid.width, grid.height);
    const ViewSpec src_grid = src.scaled(k);
    const ViewSpec dst_grid = dst.scaled(k);
    const int w = dst_grid.width(), h = dst_grid.height();
    WarpResult out{Image(w, h, grid.channels), Mask(w, h)};
    // dst camera -> src camera rotation
    const Eigen::Matrix3d rel = src.pose.rotation.transpose() * dst.pose.rotation;
    const bool wrap = src.is_equirect();
    std::vector<float> sample(grid.channels);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Eigen::Vector3d d = rel * camera_ray(dst_grid, x, y);
            const PixelHit hit = camera_dir_to_pixel(src_grid, d);
            if (!src.is_equirect() && d.z() <= 0.0) continue;
            if (!sample_bilinear(grid, hit.u, hit.v, wrap, src_valid, sample.data())) continue;
            std::copy(sample.begin(), sample.end(), out.values.pixel(x, y).data());
            out.mask.at(x, y) = 1;
        }
    }
    return out;
}

}  // namespace roomweave
