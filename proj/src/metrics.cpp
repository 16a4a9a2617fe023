#include "roomweave/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "roomweave/error.hpp"
#include "roomweave/parallel.hpp"

namespace roomweave::metrics {

namespace {

constexpr double kPsnrCap = 100.0;
constexpr std::uint32_t kLeafSize = 8;

std::vector<double> gaussian_kernel(int size, double sigma) {
    std::vector<double> k(size);
    const int r = size / 2;
    for (int i = 0; i < size; ++i) k[i] = std::exp(-0.5 * (i - r) * (i - r) / (sigma * sigma));
    const double s = std::accumulate(k.begin(), k.end(), 0.0);
    for (auto& v : k) v /= s;
    return k;
}

// Valid-mode separable correlation of a double plane.
std::vector<double> filter_valid(const std::vector<double>& src, int w, int h, const std::vector<double>& k) {
    const int n = static_cast<int>(k.size()), ow = w - n + 1, oh = h - n + 1;
    std::vector<double> tmp(static_cast<size_t>(ow) * h), out(static_cast<size_t>(ow) * oh);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += k[i] * src[static_cast<size_t>(y) * w + x + i];
            tmp[static_cast<size_t>(y) * ow + x] = s;
        }
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += k[i] * tmp[static_cast<size_t>(y + i) * ow + x];
            out[static_cast<size_t>(y) * ow + x] = s;
        }
    return out;
}

double sorted_sum(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

}  // namespace

double psnr(const Image& a, const Image& b, const Mask* valid) {
    if (!a.same_shape(b)) throw Error(ErrorCode::Config, "psnr: image shapes differ");
    if (valid && (valid->width != a.width || valid->height != a.height))
        throw Error(ErrorCode::Config, "psnr: mask shape differs");
    double sum = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            if (valid && !valid->at(x, y)) continue;
            for (int c = 0; c < a.channels; ++c) {
                const double d = static_cast<double>(a.at(x, y, c)) - b.at(x, y, c);
                sum += d * d;
                ++n;
            }
        }
    if (n == 0) throw Error(ErrorCode::Numeric, "psnr: no valid pixel");
    const double mse = sum / static_cast<double>(n);
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace {

std::vector<double> ssim_values(const Image& a, const Image& b, const SsimParams& p) {
    if (!a.same_shape(b) || a.channels != 1) throw Error(ErrorCode::Config, "ssim: expects two equal single-channel images");
    if (p.window < 1 || p.window % 2 == 0) throw Error(ErrorCode::Config, "ssim: window must be odd");
    if (a.width < p.window || a.height < p.window) throw Error(ErrorCode::Config, "ssim: image smaller than the window");
    const int w = a.width, h = a.height;
    const size_t n = static_cast<size_t>(w) * h;
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (size_t i = 0; i < n; ++i) {
        x[i] = a.data[i];
        y[i] = b.data[i];
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto k = gaussian_kernel(p.window, p.sigma);
    const auto mx = filter_valid(x, w, h, k), my = filter_valid(y, w, h, k), mxx = filter_valid(xx, w, h, k),
               myy = filter_valid(yy, w, h, k), mxy = filter_valid(xy, w, h, k);
    const double c1 = std::pow(p.k1 * p.data_range, 2), c2 = std::pow(p.k2 * p.data_range, 2);
    std::vector<double> out(mx.size());
    for (size_t i = 0; i < out.size(); ++i) {
        const double vx = mxx[i] - mx[i] * mx[i], vy = myy[i] - my[i] * my[i], cxy = mxy[i] - mx[i] * my[i];
        const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2);
        const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
        out[i] = num / den;
    }
    return out;
}

}  // namespace

Image ssim_map(const Image& a, const Image& b, const SsimParams& p) {
    const std::vector<double> v = ssim_values(a, b, p);
    Image out(a.width - p.window + 1, a.height - p.window + 1, 1);
    for (size_t i = 0; i < v.size(); ++i) out.data[i] = static_cast<float>(v[i]);
    return out;
}

double ssim(const Image& a, const Image& b, const SsimParams& params) {
    const std::vector<double> v = ssim_values(to_grayscale(a), to_grayscale(b), params);
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

PointIndex::PointIndex(std::vector<Eigen::Vector3d> points) : points_(std::move(points)) {
    if (points_.size() >= std::numeric_limits<std::uint32_t>::max())
        throw Error(ErrorCode::Config, "point index: too many points");
    if (!points_.empty()) build(0, static_cast<std::uint32_t>(points_.size()));
}

std::uint32_t PointIndex::build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({});
    if (end - begin <= kLeafSize) {
        nodes_[id].begin = begin;
        nodes_[id].end = end;
        return id;
    }
    Eigen::Vector3d lo = points_[begin], hi = lo;
    for (auto i = begin; i < end; ++i) {
        lo = lo.cwiseMin(points_[i]);
        hi = hi.cwiseMax(points_[i]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(points_.begin() + begin, points_.begin() + mid, points_.begin() + end,
                     [axis](const Eigen::Vector3d& p, const Eigen::Vector3d& q) { return p[axis] < q[axis]; });
    const double split = points_[mid][axis];
    const std::uint32_t left = build(begin, mid);
    const std::uint32_t right = build(mid, end);
    Node& n = nodes_[id];
    n.axis = axis;
    n.split = split;
    n.left = left;
    n.right = right;
    return id;
}

void PointIndex::search(std::uint32_t id, const Eigen::Vector3d& q, double& best) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
        for (auto i = n.begin; i < n.end; ++i) best = std::min(best, (points_[i] - q).squaredNorm());
        return;
    }
    // Left holds coordinates <= split, right holds coordinates >= split.
    const double d = q[n.axis] - n.split;
    const std::uint32_t near = d < 0.0 ? n.left : n.right, far = d < 0.0 ? n.right : n.left;
    search(near, q, best);
    if (d * d <= best) search(far, q, best);
}

double PointIndex::nearest_squared(const Eigen::Vector3d& q) const {
    if (points_.empty()) throw Error(ErrorCode::Config, "point index is empty");
    double best = std::numeric_limits<double>::infinity();
    search(0, q, best);
    return best;
}

double chamfer_one_directional(const std::vector<Eigen::Vector3d>& gt, const std::vector<Eigen::Vector3d>& samples) {
    if (gt.empty() || samples.empty()) throw Error(ErrorCode::Config, "chamfer: empty point set");
    const PointIndex index(samples);
    std::vector<double> d(gt.size());
    parallel_for(gt.size(), [&](size_t i) { d[i] = std::sqrt(index.nearest_squared(gt[i])); });
    double s = 0.0;
    for (double v : d) s += v;
    return s / static_cast<double>(gt.size());
}

double chamfer_brute_force(const std::vector<Eigen::Vector3d>& gt, const std::vector<Eigen::Vector3d>& samples) {
    if (gt.empty() || samples.empty()) throw Error(ErrorCode::Config, "chamfer: empty point set");
    double s = 0.0;
    for (const auto& g : gt) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& p : samples) best = std::min(best, (p - g).squaredNorm());
        s += std::sqrt(best);
    }
    return s / static_cast<double>(gt.size());
}

double chamfer_one_directional(const std::vector<Eigen::Vector3d>& gt, const TriangleMesh& mesh, std::size_t n_samples,
                               std::uint64_t seed) {
    if (mesh.empty() || n_samples == 0) throw Error(ErrorCode::Mesh, "chamfer: mesh has no surface to sample");
    return chamfer_one_directional(gt, sample_surface_points(mesh, n_samples, seed));
}

std::vector<Eigen::Vector3d> backproject_points(const std::vector<RgbdFrame>& frames, int stride) {
    if (stride < 1) throw Error(ErrorCode::Config, "backproject_points: stride must be >= 1");
    std::vector<Eigen::Vector3d> out;
    for (const auto& f : frames) {
        const auto& k = f.intrinsics;
        for (int y = 0; y < f.depth.height; y += stride)
            for (int x = 0; x < f.depth.width; x += stride) {
                const double z = f.depth.at(x, y);
                if (!(z > 0.0)) continue;
                out.push_back(f.pose.apply(Eigen::Vector3d((x - k.cx) / k.fx * z, (y - k.cy) / k.fy * z, z)));
            }
    }
    return out;
}

double blur_sigma(int kernel) { return 0.3 * ((kernel - 1) * 0.5 - 1.0) + 0.8; }

Image gaussian_blur(const Image& img, int kernel, const Mask* valid) {
    if (kernel < 1 || kernel % 2 == 0) throw Error(ErrorCode::Config, "blur kernel must be a positive odd size");
    const auto k = gaussian_kernel(kernel, blur_sigma(kernel));
    const int r = kernel / 2, w = img.width, h = img.height, C = img.channels;
    auto ok = [&](int x, int y) { return !valid || valid->at(x, y); };
    // Horizontal then vertical pass on (value * weight, weight) pairs.
    std::vector<double> hv(img.data.size(), 0.0), hw(static_cast<size_t>(w) * h, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int i = -r; i <= r; ++i) {
                const int xx = x + i;
                if (xx < 0 || xx >= w || !ok(xx, y)) continue;
                hw[static_cast<size_t>(y) * w + x] += k[i + r];
                for (int c = 0; c < C; ++c) hv[img.index(x, y, c)] += k[i + r] * img.at(xx, y, c);
            }
    Image out = img;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!ok(x, y)) continue;
            double wsum = 0.0;
            std::vector<double> acc(C, 0.0);
            for (int i = -r; i <= r; ++i) {
                const int yy = y + i;
                if (yy < 0 || yy >= h) continue;
                wsum += k[i + r] * hw[static_cast<size_t>(yy) * w + x];
                for (int c = 0; c < C; ++c) acc[c] += k[i + r] * hv[img.index(x, yy, c)];
            }
            for (int c = 0; c < C; ++c) out.at(x, y, c) = static_cast<float>(acc[c] / wsum);
        }
    return out;
}

std::string EvalReport::to_text() const {
    std::ostringstream os;
    os.precision(10);
    os << "psnr=" << psnr << "\n";
    os << "ssim=" << ssim << "\n";
    os << "depth_mse=" << depth_mse << "\n";
    if (chamfer) os << "chamfer_1d=" << *chamfer << "\n";
    os << "views=" << views_used << "\n";
    return os.str();
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["psnr"] = psnr;
    j["ssim"] = ssim;
    j["depth_mse"] = depth_mse;
    j["chamfer_1d"] = chamfer ? nlohmann::json(*chamfer) : nlohmann::json(nullptr);
    j["views_used"] = views_used;
    j["views"] = nlohmann::json::array();
    for (const auto& v : views)
        j["views"].push_back({{"frame_id", v.frame_id},
                              {"valid_pixels", v.valid_pixels},
                              {"psnr", v.psnr},
                              {"ssim", v.ssim},
                              {"depth_mse", v.depth_mse}});
    return j.dump(2) + "\n";
}

EvalReport evaluate(const TriangleMesh& mesh, const std::vector<RgbdFrame>& frames, const EvalOptions& opt) {
    if (frames.empty()) throw Error(ErrorCode::Scene, "evaluate: no eval frames");
    if (opt.render_scale < 1) throw Error(ErrorCode::Config, "evaluate: render_scale must be >= 1");
    if (opt.blur_kernel && (*opt.blur_kernel < 1 || *opt.blur_kernel % 2 == 0))
        throw Error(ErrorCode::Config, "evaluate: blur kernel must be a positive odd size");
    const int s = opt.render_scale;
    const SsimParams sp;

    struct Slot {
        ViewMetrics m;
        bool used = false, has_ssim = false, has_depth = false;
    };
    std::vector<Slot> slots(frames.size());
    parallel_for(frames.size(), [&](size_t i) {
        const RgbdFrame& f = frames[i];
        CameraIntrinsics k = f.intrinsics;
        k.fx *= s;
        k.fy *= s;
        k.cx = (k.cx + 0.5) * s - 0.5;
        k.cy = (k.cy + 0.5) * s - 0.5;
        k.width *= s;
        k.height *= s;
        RenderOutput r = render(mesh, ViewSpec::perspective(k, f.pose));
        if (opt.blur_kernel) {
            r.color = gaussian_blur(r.color, *opt.blur_kernel, &r.coverage);
            r.depth = gaussian_blur(r.depth, *opt.blur_kernel, &r.coverage);
        }
        const Mask cov = invert(downsample_any(invert(r.coverage), s));
        const Image color = downsample_box(r.color, s), depth = downsample_box(r.depth, s);

        Slot& slot = slots[i];
        slot.m.frame_id = f.frame_id;
        slot.m.valid_pixels = cov.count();
        if (slot.m.valid_pixels == 0) return;
        slot.used = true;
        slot.m.psnr = psnr(color, f.color, &cov);

        if (f.color.width >= sp.window && f.color.height >= sp.window) {
            const Image map = ssim_map(to_grayscale(color), to_grayscale(f.color), sp);
            const int rr = sp.window / 2;
            double sum = 0.0;
            size_t n = 0;
            for (int y = 0; y < map.height; ++y)
                for (int x = 0; x < map.width; ++x)
                    if (cov.at(x + rr, y + rr)) {
                        sum += map.at(x, y);
                        ++n;
                    }
            if (n) {
                slot.m.ssim = sum / static_cast<double>(n);
                slot.has_ssim = true;
            }
        }

        double dsum = 0.0;
        size_t dn = 0;
        for (size_t p = 0; p < cov.data.size(); ++p) {
            if (!cov.data[p] || !(f.depth.data[p] > 0.0f)) continue;
            const double e = static_cast<double>(depth.data[p]) - f.depth.data[p];
            dsum += e * e;
            ++dn;
        }
        if (dn) {
            slot.m.depth_mse = dsum / static_cast<double>(dn);
            slot.has_depth = true;
        }
    });

    EvalReport rep;
    std::vector<double> ps, ss, ds;
    for (const auto& slot : slots) {
        if (!slot.used) continue;
        rep.views.push_back(slot.m);
        ps.push_back(slot.m.psnr);
        if (slot.has_ssim) ss.push_back(slot.m.ssim);
        if (slot.has_depth) ds.push_back(slot.m.depth_mse);
    }
    if (ps.empty()) throw Error(ErrorCode::Numeric, "evaluate: no eval view overlaps the mesh");
    rep.views_used = static_cast<int>(ps.size());
    rep.psnr = sorted_sum(ps) / static_cast<double>(ps.size());
    rep.ssim = ss.empty() ? 0.0 : sorted_sum(ss) / static_cast<double>(ss.size());
    rep.depth_mse = ds.empty() ? 0.0 : sorted_sum(ds) / static_cast<double>(ds.size());
    if (!opt.gt_points.empty() && !mesh.empty())
        rep.chamfer = chamfer_one_directional(opt.gt_points, mesh, opt.chamfer_samples, opt.seed);
    return rep;
}

}  // namespace roomweave::metrics
