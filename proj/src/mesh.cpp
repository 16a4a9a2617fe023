#include "roomweave/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "roomweave/error.hpp"

namespace roomweave {

void TriangleMesh::validate() const {
    if (colors.size() != vertices.size()) throw Error(ErrorCode::Mesh, "mesh: color count differs from vertex count");
    for (const auto& v : vertices)
        if (!v.allFinite()) throw Error(ErrorCode::Mesh, "mesh: non-finite vertex coordinate");
    for (const auto& f : faces)
        for (auto i : f)
            if (i >= vertices.size()) throw Error(ErrorCode::Mesh, "mesh: face index out of range");
}

void RgbdFrame::validate() const {
    auto fail = [&](const std::string& what) {
        throw Error(ErrorCode::Scene, "frame " + std::to_string(frame_id) + ": " + what);
    };
    if (color.channels != 3) fail("color must have 3 channels");
    if (depth.channels != 1) fail("depth must have 1 channel");
    if (color.width != depth.width || color.height != depth.height) fail("color/depth size mismatch");
    if (intrinsics.width != depth.width || intrinsics.height != depth.height) fail("intrinsics size mismatch");
    if (!pose.is_rigid()) fail("pose is not a finite rigid transform");
    for (float d : depth.data)
        if (!std::isfinite(d) || d < 0.0f) fail("depth values must be finite and >= 0");
}

void PanoramaRgbd::validate() const {
    if (!view.is_equirect()) throw Error(ErrorCode::Geometry, "panorama view must be equirectangular");
    const int w = view.width(), h = view.height();
    if (color.width != w || color.height != h || distance.width() != w || distance.height() != h ||
        hole_mask.width != w || hole_mask.height != h)
        throw Error(ErrorCode::Geometry, "panorama: color/distance/hole mask shapes disagree");
}

double triangle_area(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
    return 0.5 * (b - a).cross(c - a).norm();
}

TriangleMesh fuse(const TriangleMesh& a, const TriangleMesh& b) {
    TriangleMesh out = a;
    const auto offset = static_cast<std::uint32_t>(a.vertices.size());
    out.vertices.insert(out.vertices.end(), b.vertices.begin(), b.vertices.end());
    out.colors.insert(out.colors.end(), b.colors.begin(), b.colors.end());
    out.faces.reserve(a.faces.size() + b.faces.size());
    for (const auto& f : b.faces) out.faces.push_back({f[0] + offset, f[1] + offset, f[2] + offset});
    return out;
}

TriangleMesh triangulate_grid(const ViewSpec& view, const Image& color, const DistanceGrid& distance,
                              const Mask& include, const TriangulationParams& params) {
    const int w = distance.width(), h = distance.height();
    if (view.width() != w || view.height() != h || color.width != w || color.height != h || include.width != w ||
        include.height != h)
        throw Error(ErrorCode::Geometry, "triangulate_grid: grid shapes disagree with view");
    const bool wrap = view.is_equirect();
    const Eigen::Vector3d eye = view.pose.translation;

    std::vector<Eigen::Vector3d> pos(static_cast<size_t>(w) * h);
    std::vector<double> depth(pos.size(), 0.0);
    std::vector<std::uint8_t> usable(pos.size(), 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            if (!include.at(x, y) || !distance.valid.at(x, y)) continue;
            const double d = distance.values.at(x, y);
            if (!(d > 0.0) || !std::isfinite(d)) continue;
            const Eigen::Vector3d ray = camera_ray(view, x, y);
            pos[i] = view.pose.apply(ray * d);
            depth[i] = wrap ? d : d * ray.z();
            usable[i] = 1;
        }
    }

    auto keep = [&](size_t a, size_t b, size_t c) {
        if (!usable[a] || !usable[b] || !usable[c]) return false;
        const double dmax = std::max({depth[a], depth[b], depth[c]});
        const double dmin = std::min({depth[a], depth[b], depth[c]});
        if (dmax > params.depth_ratio_max * dmin) return false;
        const double lmax = params.edge_len_max;
        if ((pos[a] - pos[b]).norm() > lmax || (pos[b] - pos[c]).norm() > lmax || (pos[c] - pos[a]).norm() > lmax)
            return false;
        return true;
    };

    std::vector<std::array<size_t, 3>> tris;
    const int xend = wrap ? w : w - 1;
    for (int y = 0; y + 1 < h; ++y) {
        for (int x = 0; x < xend; ++x) {
            const int x1 = (x + 1) % w;
            if (x1 == x) continue;
            const size_t a = static_cast<size_t>(y) * w + x, b = static_cast<size_t>(y) * w + x1;
            const size_t c = static_cast<size_t>(y + 1) * w + x, d = static_cast<size_t>(y + 1) * w + x1;
            if (keep(a, b, c)) tris.push_back({a, b, c});
            if (keep(b, d, c)) tris.push_back({b, d, c});
        }
    }

    TriangleMesh mesh;
    std::vector<std::int64_t> remap(pos.size(), -1);
    for (const auto& t : tris)
        for (size_t i : t) remap[i] = 0;
    for (size_t i = 0; i < pos.size(); ++i) {
        if (remap[i] < 0) continue;
        remap[i] = static_cast<std::int64_t>(mesh.vertices.size());
        mesh.vertices.push_back(pos[i]);
        const int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
        mesh.colors.emplace_back(color.at(x, y, 0), color.at(x, y, 1), color.at(x, y, 2));
    }
    mesh.faces.reserve(tris.size());
    for (const auto& t : tris) {
        std::array<std::uint32_t, 3> f{static_cast<std::uint32_t>(remap[t[0]]), static_cast<std::uint32_t>(remap[t[1]]),
                                       static_cast<std::uint32_t>(remap[t[2]])};
        const Eigen::Vector3d& p0 = pos[t[0]];
        const Eigen::Vector3d n = (pos[t[1]] - p0).cross(pos[t[2]] - p0);
        // front face toward the capturing camera
        if (n.dot(eye - p0) < 0.0) std::swap(f[1], f[2]);
        mesh.faces.push_back(f);
    }
    return mesh;
}

TriangleMesh mesh_from_rgbd(const RgbdFrame& frame, const TriangulationParams& params) {
    frame.validate();
    const ViewSpec view = frame.view();
    const DistanceGrid dist = depth_to_distance(frame.depth, view);
    return triangulate_grid(view, frame.color, dist, dist.valid, params);
}

namespace {

struct ClipVertex {
    Eigen::Vector3d p;  // camera frame
    Eigen::Vector3f c;
};

struct RasterTarget {
    int w, h;
    double fx, fy, cx, cy;
    std::vector<float> z_all;
    std::vector<std::uint8_t> back;
    std::vector<float> z_front;
    std::vector<Eigen::Vector3f> color;
};

void raster_triangle(RasterTarget& rt, const ClipVertex& v0, const ClipVertex& v1, const ClipVertex& v2,
                     bool is_back) {
    const ClipVertex* v[3] = {&v0, &v1, &v2};
    double sx[3], sy[3], iz[3];
    for (int i = 0; i < 3; ++i) {
        iz[i] = 1.0 / v[i]->p.z();
        sx[i] = rt.fx * v[i]->p.x() * iz[i] + rt.cx;
        sy[i] = rt.fy * v[i]->p.y() * iz[i] + rt.cy;
    }
    const double area = (sx[1] - sx[0]) * (sy[2] - sy[0]) - (sy[1] - sy[0]) * (sx[2] - sx[0]);
    if (std::abs(area) < 1e-14) return;
    const int xmin = std::max(0, static_cast<int>(std::ceil(std::min({sx[0], sx[1], sx[2]}))));
    const int xmax = std::min(rt.w - 1, static_cast<int>(std::floor(std::max({sx[0], sx[1], sx[2]}))));
    const int ymin = std::max(0, static_cast<int>(std::ceil(std::min({sy[0], sy[1], sy[2]}))));
    const int ymax = std::min(rt.h - 1, static_cast<int>(std::floor(std::max({sy[0], sy[1], sy[2]}))));
    if (xmin > xmax || ymin > ymax) return;
    const double inv_area = 1.0 / area;
    constexpr double kEdgeTol = -1e-9;
    for (int py = ymin; py <= ymax; ++py) {
        for (int px = xmin; px <= xmax; ++px) {
            const double b0 = ((sx[2] - sx[1]) * (py - sy[1]) - (sy[2] - sy[1]) * (px - sx[1])) * inv_area;
            const double b1 = ((sx[0] - sx[2]) * (py - sy[2]) - (sy[0] - sy[2]) * (px - sx[2])) * inv_area;
            const double b2 = 1.0 - b0 - b1;
            if (b0 < kEdgeTol || b1 < kEdgeTol || b2 < kEdgeTol) continue;
            const double invz = b0 * iz[0] + b1 * iz[1] + b2 * iz[2];
            const float z = static_cast<float>(1.0 / invz);
            const size_t idx = static_cast<size_t>(py) * rt.w + px;
            if (z < rt.z_all[idx]) {
                rt.z_all[idx] = z;
                rt.back[idx] = is_back ? 1 : 0;
            }
            if (!is_back && z < rt.z_front[idx]) {
                rt.z_front[idx] = z;
                const double zz = 1.0 / invz;
                rt.color[idx] = ((b0 * iz[0] * zz) * v0.c.cast<double>() + (b1 * iz[1] * zz) * v1.c.cast<double>() +
                                 (b2 * iz[2] * zz) * v2.c.cast<double>())
                                    .cast<float>();
            }
        }
    }
}

RenderOutput render_perspective(const TriangleMesh& mesh, const ViewSpec& view, const RenderOptions& opt) {
    const auto& k = view.intrinsics();
    RasterTarget rt{k.width, k.height, k.fx, k.fy, k.cx, k.cy, {}, {}, {}, {}};
    const size_t npx = static_cast<size_t>(k.width) * k.height;
    constexpr float kInf = std::numeric_limits<float>::infinity();
    rt.z_all.assign(npx, kInf);
    rt.back.assign(npx, 0);
    rt.z_front.assign(npx, kInf);
    rt.color.assign(npx, Eigen::Vector3f::Zero());

    std::vector<Eigen::Vector3d> cam(mesh.vertices.size());
    for (size_t i = 0; i < cam.size(); ++i) cam[i] = view.pose.to_local(mesh.vertices[i]);

    const double near = opt.near_plane;
    // Conservative frustum bounds in normalized image coordinates.
    const double xl = (-0.5 - k.cx) / k.fx, xr = (k.width - 0.5 - k.cx) / k.fx;
    const double yt = (-0.5 - k.cy) / k.fy, yb = (k.height - 0.5 - k.cy) / k.fy;
    for (const auto& f : mesh.faces) {
        const Eigen::Vector3d& a = cam[f[0]];
        const Eigen::Vector3d& b = cam[f[1]];
        const Eigen::Vector3d& c = cam[f[2]];
        const int n_front = (a.z() >= near) + (b.z() >= near) + (c.z() >= near);
        if (n_front == 0) continue;
        if ((a.x() < xl * a.z() && b.x() < xl * b.z() && c.x() < xl * c.z()) ||
            (a.x() > xr * a.z() && b.x() > xr * b.z() && c.x() > xr * c.z()) ||
            (a.y() < yt * a.z() && b.y() < yt * b.z() && c.y() < yt * c.z()) ||
            (a.y() > yb * a.z() && b.y() > yb * b.z() && c.y() > yb * c.z()))
            continue;
        const Eigen::Vector3d n = (b - a).cross(c - a);
        const double facing = -n.dot(a);
        if (facing == 0.0) continue;
        const bool is_back = facing < 0.0;
        ClipVertex in[3] = {{a, mesh.colors[f[0]]}, {b, mesh.colors[f[1]]}, {c, mesh.colors[f[2]]}};
        if (n_front == 3) {
            raster_triangle(rt, in[0], in[1], in[2], is_back);
            continue;
        }
        // Clip the polygon against z = near.
        ClipVertex poly[4];
        int np = 0;
        for (int i = 0; i < 3; ++i) {
            const ClipVertex& p = in[i];
            const ClipVertex& q = in[(i + 1) % 3];
            const bool pin = p.p.z() >= near, qin = q.p.z() >= near;
            if (pin) poly[np++] = p;
            if (pin != qin) {
                const double t = (near - p.p.z()) / (q.p.z() - p.p.z());
                poly[np++] = {p.p + t * (q.p - p.p), p.c + static_cast<float>(t) * (q.c - p.c)};
            }
        }
        for (int i = 1; i + 1 < np; ++i) raster_triangle(rt, poly[0], poly[i], poly[i + 1], is_back);
    }

    RenderOutput out;
    out.color = Image(k.width, k.height, 3);
    out.depth = Image(k.width, k.height, 1);
    out.coverage = Mask(k.width, k.height);
    out.backface = Mask(k.width, k.height);
    size_t n_back = 0;
    for (size_t i = 0; i < npx; ++i) {
        if (rt.z_all[i] < kInf && rt.back[i]) {
            out.backface.data[i] = 1;
            ++n_back;
        }
        if (rt.z_front[i] < kInf) {
            out.coverage.data[i] = 1;
            out.depth.data[i] = rt.z_front[i];
            for (int c = 0; c < 3; ++c) out.color.data[i * 3 + c] = rt.color[i][c];
            out.min_depth = std::min(out.min_depth, static_cast<double>(rt.z_front[i]));
        }
    }
    out.backface_ratio = static_cast<double>(n_back) / static_cast<double>(npx);
    return out;
}

RenderOutput render_equirect(const TriangleMesh& mesh, const ViewSpec& view, const RenderOptions& opt) {
    const int w = view.width(), h = view.height();
    int res = opt.fan_resolution;
    if (res <= 0) res = std::max(8, static_cast<int>(std::ceil(w * opt.fan_fov_deg / 360.0)));
    const auto& e = view.equirect_spec();
    const double band_half = std::max(std::abs(e.lat_min), std::abs(e.lat_max)) * 180.0 / M_PI;
    auto fan = make_pano_views(Eigen::Vector3d::Zero(), opt.fan_views, opt.fan_fov_deg, res, band_half);
    for (auto& v : fan) {
        v.pose.rotation = view.pose.rotation * v.pose.rotation;
        v.pose.translation = view.pose.translation;
    }

    RenderOutput out;
    out.color = Image(w, h, 3);
    out.depth = Image(w, h, 1);
    out.coverage = Mask(w, h);
    out.backface = Mask(w, h);
    std::vector<float> back_vote(static_cast<size_t>(w) * h, 0.0f);
    for (const auto& fv : fan) {
        RenderOutput r = render_perspective(mesh, fv, opt);
        const DistanceGrid dist = depth_to_distance(r.depth, fv);
        const WarpResult wd = warp_grid(fv, view, dist.values, &r.coverage);
        const WarpResult wc = warp_grid(fv, view, r.color, &r.coverage);
        Image back(fv.width(), fv.height(), 1);
        for (size_t i = 0; i < back.data.size(); ++i) back.data[i] = r.backface.data[i];
        const WarpResult wb = warp_grid(fv, view, back);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (wb.mask.at(x, y)) {
                    float& bv = back_vote[static_cast<size_t>(y) * w + x];
                    bv = std::max(bv, wb.values.at(x, y));
                }
                if (!wd.mask.at(x, y)) continue;
                const float d = wd.values.at(x, y);
                if (out.coverage.at(x, y) && out.depth.at(x, y) <= d) continue;
                out.coverage.at(x, y) = 1;
                out.depth.at(x, y) = d;
                for (int c = 0; c < 3; ++c) out.color.at(x, y, c) = wc.values.at(x, y, c);
            }
        }
    }
    size_t n_back = 0;
    for (size_t i = 0; i < back_vote.size(); ++i) {
        if (!out.coverage.data[i] && back_vote[i] >= 0.5f) {
            out.backface.data[i] = 1;
            ++n_back;
        }
        if (out.coverage.data[i]) out.min_depth = std::min(out.min_depth, static_cast<double>(out.depth.data[i]));
    }
    out.backface_ratio = static_cast<double>(n_back) / static_cast<double>(back_vote.size());
    return out;
}

}  // namespace

RenderOutput render(const TriangleMesh& mesh, const ViewSpec& view, const RenderOptions& options) {
    view.validate();
    if (view.is_equirect()) return render_equirect(mesh, view, options);
    return render_perspective(mesh, view, options);
}

TriangleMesh fuse_panorama(const TriangleMesh& mesh, const PanoramaRgbd& pano, const TriangulationParams& params) {
    pano.validate();
    if (!pano.hole_mask.any()) return mesh;
    Mask include = dilate(pano.hole_mask, 1, true);
    for (size_t i = 0; i < include.data.size(); ++i) include.data[i] &= pano.distance.valid.data[i];
    return fuse(mesh, triangulate_grid(pano.view, pano.color, pano.distance, include, params));
}

std::vector<Eigen::Vector3d> sample_surface_points(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed) {
    if (mesh.faces.empty()) throw Error(ErrorCode::Mesh, "sample_surface_points: empty mesh");
    if (n == 0) throw Error(ErrorCode::Config, "sample_surface_points: n must be positive");
    std::vector<double> cdf(mesh.faces.size());
    double total = 0.0;
    for (size_t i = 0; i < mesh.faces.size(); ++i) {
        const auto& f = mesh.faces[i];
        total += triangle_area(mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
        cdf[i] = total;
    }
    if (!(total > 0.0)) throw Error(ErrorCode::Mesh, "sample_surface_points: mesh has zero area");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Eigen::Vector3d> pts;
    pts.reserve(n);
    for (size_t s = 0; s < n; ++s) {
        const double r = unit(rng) * total;
        size_t fi = static_cast<size_t>(std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin());
        fi = std::min(fi, cdf.size() - 1);
        const auto& f = mesh.faces[fi];
        const double su = std::sqrt(unit(rng));
        const double r2 = unit(rng);
        pts.push_back((1.0 - su) * mesh.vertices[f[0]] + su * (1.0 - r2) * mesh.vertices[f[1]] +
                      su * r2 * mesh.vertices[f[2]]);
    }
    return pts;
}

}  // namespace roomweave
