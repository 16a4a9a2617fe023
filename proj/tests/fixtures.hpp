#pragma once

// Shared fixtures and independent oracles for the unit and acceptance tests.

#include <cmath>
#include <filesystem>
#include <random>

#include "roomweave/geometry.hpp"
#include "roomweave/image.hpp"
#include "roomweave/mesh.hpp"

namespace rwtest {

using roomweave::Image;
using roomweave::Mask;
using roomweave::ViewSpec;

inline Image random_image(int w, int h, int c, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(lo, hi);
    Image img(w, h, c);
    for (auto& v : img.data) v = u(rng);
    return img;
}

inline Mask random_mask(int w, int h, double p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution b(p);
    Mask m(w, h);
    for (auto& v : m.data) v = b(rng) ? 1 : 0;
    return m;
}

inline double max_abs_diff(const Image& a, const Image& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a.data[i]) - b.data[i]));
    return m;
}

inline double mean_abs_diff(const Image& a, const Image& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) s += std::abs(static_cast<double>(a.data[i]) - b.data[i]);
    return s / static_cast<double>(a.data.size());
}

// ---------------------------------------------------------------------------
// Projection written out independently of the library: world ray of a cell
// and continuous cell coordinates of a world direction.

struct Cell {
    double x, y;
    bool ok;
};

inline Eigen::Vector3d oracle_world_ray(const ViewSpec& v, double x, double y) {
    Eigen::Vector3d d;
    if (v.is_equirect()) {
        const auto& e = v.equirect_spec();
        const double lon = (x + 0.5) / e.width * 2.0 * M_PI - M_PI;
        const double lat = e.lat_max - (y + 0.5) * (e.lat_max - e.lat_min) / e.height;
        d = {std::sin(lon) * std::cos(lat), -std::sin(lat), std::cos(lon) * std::cos(lat)};
    } else {
        const auto& k = v.intrinsics();
        d = {(x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0};
        d /= d.norm();
    }
    return v.pose.rotation * d;
}

inline Cell oracle_project(const ViewSpec& v, const Eigen::Vector3d& world) {
    const Eigen::Vector3d d = v.pose.rotation.transpose() * world;
    if (v.is_equirect()) {
        const auto& e = v.equirect_spec();
        double lon = std::atan2(d.x(), d.z());
        const double lat = std::atan2(-d.y(), std::hypot(d.x(), d.z()));
        double x = (lon + M_PI) / (2.0 * M_PI) * e.width - 0.5;
        if (x < -0.5) x += e.width;
        if (x >= e.width - 0.5) x -= e.width;
        return {x, (e.lat_max - lat) / (e.lat_max - e.lat_min) * e.height - 0.5, true};
    }
    if (d.z() <= 0.0) return {0, 0, false};
    const auto& k = v.intrinsics();
    return {k.cx + k.fx * d.x() / d.z(), k.cy + k.fy * d.y() / d.z(), true};
}

// Brute-force bilinear resampling: every tap with nonzero weight must lie in
// the grid (1e-6 slack at the borders) and be valid.
inline bool oracle_sample(const Image& g, double x, double y, bool wrap, const Mask* valid, float* out) {
    constexpr double eps = 1e-6;
    const int W = g.width, H = g.height;
    auto axis = [&](double c, int n, bool cyc, int& i0, double& f) {
        if (!cyc && (c < -eps || c > n - 1 + eps)) return false;
        if (!cyc) c = std::min(std::max(c, 0.0), n - 1.0);
        i0 = static_cast<int>(std::floor(c));
        f = c - i0;
        if (f < eps) f = 0.0;
        if (f > 1.0 - eps) {
            f = 0.0;
            ++i0;
        }
        if (!cyc && i0 > n - 1) i0 = n - 1;
        return true;
    };
    int x0, y0;
    double fx, fy;
    if (!axis(x, W, wrap, x0, fx) || !axis(y, H, false, y0, fy)) return false;
    const int taps[4][2] = {{x0, y0}, {x0 + 1, y0}, {x0, y0 + 1}, {x0 + 1, y0 + 1}};
    const double w[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
    for (int c = 0; c < g.channels; ++c) out[c] = 0.0f;
    double acc[8] = {0};
    for (int t = 0; t < 4; ++t) {
        if (w[t] == 0.0) continue;
        int tx = taps[t][0], ty = taps[t][1];
        if (wrap) tx = ((tx % W) + W) % W;
        if (tx < 0 || tx >= W || ty < 0 || ty >= H) return false;
        if (valid && !valid->at(tx, ty)) return false;
        for (int c = 0; c < g.channels; ++c) acc[c] += w[t] * g.at(tx, ty, c);
    }
    for (int c = 0; c < g.channels; ++c) out[c] = static_cast<float>(acc[c]);
    return true;
}

struct OracleWarp {
    Image values;
    Mask mask;
};

// Grids are at 1/k of the views' pixel resolution.
inline OracleWarp oracle_warp(const ViewSpec& src, const ViewSpec& dst, const Image& grid, int k,
                              const Mask* valid = nullptr) {
    const ViewSpec s = src.scaled(k), d = dst.scaled(k);
    OracleWarp out{Image(d.width(), d.height(), grid.channels), Mask(d.width(), d.height())};
    for (int y = 0; y < d.height(); ++y)
        for (int x = 0; x < d.width(); ++x) {
            const Cell c = oracle_project(s, oracle_world_ray(d, x, y));
            if (!c.ok) continue;
            if (oracle_sample(grid, c.x, c.y, s.is_equirect(), valid, out.values.pixel(x, y).data()))
                out.mask.at(x, y) = 1;
        }
    return out;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    const std::filesystem::path p = std::filesystem::path(ROOMWEAVE_TEST_TMP) / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace rwtest
