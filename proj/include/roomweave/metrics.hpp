#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "roomweave/frame.hpp"
#include "roomweave/image.hpp"
#include "roomweave/mesh.hpp"

namespace roomweave::metrics {

/// 10 log10(1 / MSE) over all channels of the valid pixels, capped at 100 dB.
double psnr(const Image& a, const Image& b, const Mask* valid = nullptr);

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double data_range = 1.0;
};

/// Per-window SSIM of two single-channel images, one value per window that
/// fits inside the image; cell (x, y) is the window centered at
/// (x + r, y + r) with r = window / 2.
Image ssim_map(const Image& a, const Image& b, const SsimParams& params = {});
/// Mean of ssim_map. Color inputs are converted to luma first.
double ssim(const Image& a, const Image& b, const SsimParams& params = {});

/// Static 3-d tree with exact nearest-neighbour queries.
class PointIndex {
public:
    explicit PointIndex(std::vector<Eigen::Vector3d> points);
    /// Squared distance to the nearest indexed point.
    double nearest_squared(const Eigen::Vector3d& q) const;
    std::size_t size() const { return points_.size(); }

private:
    struct Node {
        int axis = -1;     // -1 for leaves
        std::uint32_t begin = 0, end = 0;
        std::uint32_t left = 0, right = 0;
        double split = 0.0;
    };
    std::uint32_t build(std::uint32_t begin, std::uint32_t end);
    void search(std::uint32_t node, const Eigen::Vector3d& q, double& best) const;

    std::vector<Eigen::Vector3d> points_;
    std::vector<Node> nodes_;
};

/// Mean over `gt` of the distance to the nearest point of `samples`.
double chamfer_one_directional(const std::vector<Eigen::Vector3d>& gt, const std::vector<Eigen::Vector3d>& samples);
double chamfer_brute_force(const std::vector<Eigen::Vector3d>& gt, const std::vector<Eigen::Vector3d>& samples);
/// Against `n_samples` area-uniform samples of the mesh surface.
double chamfer_one_directional(const std::vector<Eigen::Vector3d>& gt, const TriangleMesh& mesh, std::size_t n_samples,
                               std::uint64_t seed = 0);

/// World points of every `stride`-th valid depth pixel.
std::vector<Eigen::Vector3d> backproject_points(const std::vector<RgbdFrame>& frames, int stride = 1);

/// sigma = 0.3 ((k - 1) / 2 - 1) + 0.8
double blur_sigma(int kernel);
/// k x k Gaussian blur, normalized over valid cells when a mask is given.
Image gaussian_blur(const Image& img, int kernel, const Mask* valid = nullptr);

struct ViewMetrics {
    int frame_id = 0;
    std::size_t valid_pixels = 0;
    double psnr = 0.0;
    double ssim = 0.0;
    double depth_mse = 0.0;
};

struct EvalReport {
    double psnr = 0.0;
    double ssim = 0.0;
    double depth_mse = 0.0;
    std::optional<double> chamfer;
    int views_used = 0;
    std::vector<ViewMetrics> views;  // in input order; views without valid pixels omitted

    std::string to_text() const;
    std::string to_json() const;
};

struct EvalOptions {
    std::optional<int> blur_kernel;
    int render_scale = 1;  // render at this multiple of the frame resolution, then box-downscale
    std::size_t chamfer_samples = 100000;
    std::uint64_t seed = 0;
    std::vector<Eigen::Vector3d> gt_points;  // empty: Chamfer not reported
};

EvalReport evaluate(const TriangleMesh& mesh, const std::vector<RgbdFrame>& frames, const EvalOptions& options = {});

}  // namespace roomweave::metrics
