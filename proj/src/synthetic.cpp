#include "roomweave/synthetic.hpp"

#include <cmath>
#include <random>

#include "roomweave/error.hpp"

namespace roomweave::synthetic {

namespace {

struct Palette {
    Eigen::Vector3d phase;
    Eigen::Vector3d freq;
};

Palette palette(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Palette p;
    for (int i = 0; i < 3; ++i) {
        p.phase[i] = 2.0 * M_PI * u(rng);
        p.freq[i] = 1.2 + 1.8 * u(rng);
    }
    return p;
}

Eigen::Vector3f texture(const Eigen::Vector3d& base, const Palette& pal, const Eigen::Vector3d& p) {
    Eigen::Vector3f c;
    for (int i = 0; i < 3; ++i) {
        const double wave = std::sin(pal.freq[i] * (p.x() + 0.7 * p.z()) + pal.phase[i]) *
                            std::cos(pal.freq[(i + 1) % 3] * (p.y() - 0.4 * p.z()) + pal.phase[(i + 2) % 3]);
        c[i] = static_cast<float>(std::clamp(base[i] + 0.18 * wave, 0.0, 1.0));
    }
    return c;
}

// Tessellated rectangle o + s*u + t*v, s,t in [0,1], wound so its normal is
// along `facing`.
template <typename ColorFn>
void add_quad(TriangleMesh& mesh, const Eigen::Vector3d& o, const Eigen::Vector3d& u, const Eigen::Vector3d& v,
              const Eigen::Vector3d& facing, double cell, ColorFn&& color) {
    const int nu = std::max(1, static_cast<int>(std::ceil(u.norm() / cell - 1e-9)));
    const int nv = std::max(1, static_cast<int>(std::ceil(v.norm() / cell - 1e-9)));
    const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
    for (int j = 0; j <= nv; ++j)
        for (int i = 0; i <= nu; ++i) {
            const Eigen::Vector3d p = o + u * (static_cast<double>(i) / nu) + v * (static_cast<double>(j) / nv);
            mesh.vertices.push_back(p);
            mesh.colors.push_back(color(p));
        }
    const bool flip = u.cross(v).dot(facing) < 0.0;
    auto id = [&](int i, int j) { return base + static_cast<std::uint32_t>(j * (nu + 1) + i); };
    for (int j = 0; j < nv; ++j)
        for (int i = 0; i < nu; ++i) {
            const std::uint32_t a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
            if (!flip) {
                mesh.faces.push_back({a, b, c});
                mesh.faces.push_back({a, c, d});
            } else {
                mesh.faces.push_back({a, c, b});
                mesh.faces.push_back({a, d, c});
            }
        }
}

// Six faces of [lo, hi]; sign +1 faces outward, -1 inward.
template <typename ColorFn>
void add_box(TriangleMesh& mesh, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, double sign, double cell,
             const ColorFn& color_for_side) {
    const Eigen::Vector3d d = hi - lo;
    const Eigen::Vector3d ex(d.x(), 0, 0), ey(0, d.y(), 0), ez(0, 0, d.z());
    add_quad(mesh, lo, ey, ez, sign * -Eigen::Vector3d::UnitX(), cell, color_for_side(0));
    add_quad(mesh, lo + ex, ey, ez, sign * Eigen::Vector3d::UnitX(), cell, color_for_side(1));
    add_quad(mesh, lo, ex, ez, sign * -Eigen::Vector3d::UnitY(), cell, color_for_side(2));
    add_quad(mesh, lo + ey, ex, ez, sign * Eigen::Vector3d::UnitY(), cell, color_for_side(3));
    add_quad(mesh, lo, ex, ey, sign * -Eigen::Vector3d::UnitZ(), cell, color_for_side(4));
    add_quad(mesh, lo + ez, ex, ey, sign * Eigen::Vector3d::UnitZ(), cell, color_for_side(5));
}

}  // namespace

TriangleMesh box_room(const RoomSpec& spec) {
    if (!(spec.size.minCoeff() > 0.0) || !(spec.cell > 0.0)) throw Error(ErrorCode::Config, "box_room: bad dimensions");
    const Palette pal = palette(spec.style_seed);
    // Walls, ceiling (y = lo) and floor (y = hi) get distinct base tones.
    static const Eigen::Vector3d kBase[6] = {{0.72, 0.62, 0.50}, {0.55, 0.64, 0.70}, {0.86, 0.85, 0.80},
                                             {0.45, 0.34, 0.26}, {0.62, 0.70, 0.55}, {0.70, 0.56, 0.60}};
    TriangleMesh mesh;
    const Eigen::Vector3d lo = -0.5 * spec.size, hi = 0.5 * spec.size;
    add_box(mesh, lo, hi, -1.0, spec.cell, [&](int side) {
        return [&, side](const Eigen::Vector3d& p) { return texture(kBase[side], pal, p); };
    });
    return mesh;
}

TriangleMesh solid_box(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, const Eigen::Vector3f& color,
                       double cell) {
    if (!((hi - lo).minCoeff() > 0.0)) throw Error(ErrorCode::Config, "solid_box: empty extent");
    TriangleMesh mesh;
    add_box(mesh, lo, hi, 1.0, cell, [&](int) { return [&](const Eigen::Vector3d&) { return color; }; });
    return mesh;
}

RoomSpec random_room(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> w(3.0, 6.0), h(2.4, 3.2);
    RoomSpec s;
    s.size = {w(rng), h(rng), w(rng)};
    s.cell = 0.2;
    s.style_seed = seed;
    return s;
}

RgbdFrame render_frame(const TriangleMesh& mesh, const CameraIntrinsics& k, const RigidTransform& pose, int frame_id) {
    RgbdFrame f;
    f.intrinsics = k;
    f.pose = pose;
    f.frame_id = frame_id;
    const RenderOutput r = render(mesh, f.view());
    f.color = r.color;
    f.depth = r.depth;
    return f;
}

SceneDataset render_trajectory(const TriangleMesh& mesh, const TrajectorySpec& spec, const std::string& scene_id) {
    if (spec.frames < 1) throw Error(ErrorCode::Config, "render_trajectory: need at least one frame");
    const CameraIntrinsics k = CameraIntrinsics::from_fov(spec.width, spec.height, spec.hfov_deg);
    SceneDataset ds;
    ds.scene_id = scene_id;
    for (int i = 0; i < spec.frames; ++i) {
        const double a = 2.0 * M_PI * i / spec.frames;
        const Eigen::Vector3d pos(spec.radius * std::sin(a), 0.0, spec.radius * std::cos(a));
        const double elev = spec.elevation_deg * M_PI / 180.0 * std::sin(3.0 * a);
        ds.frames.push_back(render_frame(mesh, k, RigidTransform::from_yaw_elevation(pos, a, elev), i));
    }
    return ds;
}

}  // namespace roomweave::synthetic
