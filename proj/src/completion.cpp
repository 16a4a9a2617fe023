#include "roomweave/completion.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "roomweave/error.hpp"
#include "roomweave/parallel.hpp"

namespace roomweave::completion {

namespace {

constexpr double kDeg = M_PI / 180.0;

void append(TriangleMesh& dst, const TriangleMesh& src) {
    const auto base = static_cast<std::uint32_t>(dst.vertices.size());
    dst.vertices.insert(dst.vertices.end(), src.vertices.begin(), src.vertices.end());
    dst.colors.insert(dst.colors.end(), src.colors.begin(), src.colors.end());
    dst.faces.reserve(dst.faces.size() + src.faces.size());
    for (const auto& f : src.faces) dst.faces.push_back({f[0] + base, f[1] + base, f[2] + base});
}

template <typename Fn>
auto with_context(const std::string& what, Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(e.code(), what + ": " + e.what());
    }
}

}  // namespace

std::string build_prompt(const std::string& template_text, const std::string& token) {
    static const std::string placeholder = "{S*}";
    const auto pos = template_text.find(placeholder);
    if (pos == std::string::npos) throw Error(ErrorCode::Config, "prompt template has no {S*} placeholder");
    std::string out = template_text;
    out.replace(pos, placeholder.size(), token);
    return out;
}

void CompletionConfig::validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::Config, "completion config: " + m); };
    if (candidates < 1) fail("candidates must be >= 1");
    if (completion_iters < 0) fail("completion_iters must be >= 0");
    if (pose_samples < 1) fail("pose_samples must be >= 1");
    auto ratio = [&](double v, const char* name) {
        if (!(v > 0.0 && v <= 1.0)) fail(std::string(name) + " must lie in (0, 1]");
    };
    ratio(box_frac_h, "box_frac_h");
    ratio(box_frac_v, "box_frac_v");
    ratio(inpaint_ratio_max, "inpaint_ratio_max");
    ratio(backface_max, "backface_max");
    if (!(elevation_max_deg >= 0.0 && elevation_max_deg < 90.0)) fail("elevation must lie in [0, 90)");
    if (!(min_depth_min > 0.0)) fail("min_depth_min must be positive");
    if (!(backward_step > 0.0)) fail("backward_step must be positive");
    if (backward_max_steps < 0) fail("backward_max_steps must be >= 0");
    if (!(camera_fov_deg > 0.0 && camera_fov_deg < 180.0)) fail("camera fov must lie in (0, 180)");
    if (camera_resolution < 2 || probe_resolution < 2) fail("camera resolutions must be >= 2");
    if (panorama_width < 4) fail("panorama_width must be >= 4");
}

CameraIntrinsics CompletionConfig::camera(int resolution) const {
    return CameraIntrinsics::from_fov(resolution, resolution, camera_fov_deg);
}

void PipelineConfig::validate() const {
    diffusion.validate();
    completion.validate();
    if (depth.refine_iters < 0) throw Error(ErrorCode::Config, "depth config: refine_iters must be >= 0");
}

Eigen::Vector3d room_center(const std::vector<RgbdFrame>& frames) {
    if (frames.empty()) throw Error(ErrorCode::Scene, "room_center: no frames");
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    for (const auto& f : frames) sum += f.pose.translation;
    return sum / static_cast<double>(frames.size());
}

double depth_mse(const TriangleMesh& mesh, const std::vector<RgbdFrame>& frames) {
    if (frames.empty()) throw Error(ErrorCode::Scene, "depth_mse: no frames");
    std::vector<double> sums(frames.size(), 0.0);
    std::vector<std::size_t> counts(frames.size(), 0);
    parallel_for(frames.size(), [&](std::size_t i) {
        const RenderOutput r = render(mesh, frames[i].view());
        const Image& d = frames[i].depth;
        double s = 0.0;
        std::size_t n = 0;
        for (std::size_t p = 0; p < d.data.size(); ++p) {
            if (!(d.data[p] > 0.0f) || !r.coverage.data[p]) continue;
            const double e = static_cast<double>(d.data[p]) - r.depth.data[p];
            s += e * e;
            ++n;
        }
        sums[i] = s;
        counts[i] = n;
    });
    // Sorted reduction keeps the value independent of frame order.
    std::sort(sums.begin(), sums.end());
    double total = 0.0;
    std::size_t n = 0;
    for (double s : sums) total += s;
    for (auto c : counts) n += c;
    if (n == 0) throw Error(ErrorCode::Numeric, "depth_mse: no pixel is valid in both input and render");
    return total / static_cast<double>(n);
}

ActiveSampleResult active_sample(const TriangleMesh& base_mesh, const std::vector<PanoramaRgbd>& candidates,
                                 const std::vector<RgbdFrame>& frames) {
    if (candidates.empty()) throw Error(ErrorCode::Config, "active_sample: no candidates");
    ActiveSampleResult out;
    out.mse.resize(candidates.size());
    for (std::size_t a = 0; a < candidates.size(); ++a)
        out.mse[a] = with_context("candidate " + std::to_string(a),
                                  [&] { return depth_mse(fuse_panorama(base_mesh, candidates[a]), frames); });
    for (std::size_t a = 1; a < candidates.size(); ++a)
        if (out.mse[a] < out.mse[out.index]) out.index = static_cast<int>(a);
    return out;
}

PoseStats evaluate_pose(const TriangleMesh& mesh, const RigidTransform& pose, const CompletionConfig& cfg) {
    const RenderOutput r = render(mesh, ViewSpec::perspective(cfg.camera(cfg.probe_resolution), pose));
    return {r.inpaint_ratio(), r.backface_ratio, r.min_depth};
}

bool passes_filters(const PoseStats& s, const CompletionConfig& cfg) {
    return s.inpaint_ratio > 0.0 && s.inpaint_ratio <= cfg.inpaint_ratio_max && s.backface_ratio <= cfg.backface_max &&
           s.min_depth >= cfg.min_depth_min;
}

std::vector<RigidTransform> draw_candidate_poses(const TriangleMesh& mesh, std::mt19937_64& rng,
                                                 const CompletionConfig& cfg) {
    if (mesh.vertices.empty()) return {};
    Eigen::Vector3d lo = mesh.vertices.front(), hi = lo;
    for (const auto& v : mesh.vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    const Eigen::Vector3d mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
    const Eigen::Vector3d reach(half.x() * cfg.box_frac_h, half.y() * cfg.box_frac_v, half.z() * cfg.box_frac_h);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> yaw(0.0, 2.0 * M_PI);
    std::vector<RigidTransform> poses;
    poses.reserve(cfg.pose_samples);
    for (int i = 0; i < cfg.pose_samples; ++i) {
        Eigen::Vector3d p;
        for (int a = 0; a < 3; ++a) p[a] = mid[a] + reach[a] * unit(rng);
        const double y = yaw(rng);
        const double e = cfg.elevation_max_deg * kDeg * unit(rng);
        poses.push_back(RigidTransform::from_yaw_elevation(p, y, e));
    }
    return poses;
}

std::optional<RigidTransform> select_completion_pose(const TriangleMesh& mesh,
                                                     const std::vector<RigidTransform>& candidates,
                                                     const CompletionConfig& cfg) {
    if (mesh.empty() || candidates.empty()) return std::nullopt;
    std::vector<PoseStats> stats(candidates.size());
    parallel_for(candidates.size(), [&](std::size_t i) { stats[i] = evaluate_pose(mesh, candidates[i], cfg); });
    std::optional<std::size_t> best;
    double best_score = -1.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (!passes_filters(stats[i], cfg)) continue;
        const double score = stats[i].inpaint_ratio * stats[i].min_depth;
        if (score > best_score) {
            best_score = score;
            best = i;
        }
    }
    if (!best) return std::nullopt;
    RigidTransform pose = candidates[*best];
    for (int step = 0; step < cfg.backward_max_steps; ++step) {
        RigidTransform back = pose;
        back.translation -= cfg.backward_step * pose.forward();
        if (!passes_filters(evaluate_pose(mesh, back, cfg), cfg)) break;
        pose = back;
    }
    return pose;
}

std::optional<RigidTransform> sample_completion_pose(const TriangleMesh& mesh, std::mt19937_64& rng,
                                                     const CompletionConfig& cfg) {
    return select_completion_pose(mesh, draw_candidate_poses(mesh, rng, cfg), cfg);
}

TriangleMesh iterative_inpaint(const TriangleMesh& mesh, const std::vector<RigidTransform>& trajectory,
                               const Backends& backends, const PipelineConfig& cfg, const std::string& prompt) {
    if (trajectory.empty()) throw Error(ErrorCode::Config, "iterative_inpaint: empty trajectory");
    TriangleMesh out = mesh;
    const CameraIntrinsics k = cfg.completion.camera(cfg.completion.camera_resolution);
    for (std::size_t i = 0; i < trajectory.size(); ++i) {
        with_context("pose " + std::to_string(i), [&] {
            const ViewSpec view = ViewSpec::perspective(k, trajectory[i]);
            const RenderOutput r = render(out, view);
            const Mask hole = invert(r.coverage);
            if (!hole.any()) return 0;
            diffusion::EDiffusionConfig ecfg = cfg.diffusion;
            ecfg.seed = cfg.diffusion.seed + i;
            const Image rgb =
                diffusion::inpaint_single_view(view, r.color, hole, backends.denoiser, backends.codec, ecfg, prompt);
            const Image depth =
                depth::complete_view_depth(rgb, view, r.depth, r.coverage, backends.predictor, cfg.depth);
            const DistanceGrid dist = depth_to_distance(depth, view);
            const Mask include = dilate(hole, 1);
            append(out, triangulate_grid(view, rgb, dist, include, cfg.completion.patch_params));
            return 0;
        });
    }
    return out;
}

PanoramaRgbd render_panorama(const TriangleMesh& mesh, const Eigen::Vector3d& center, const PipelineConfig& cfg,
                             int codec_scale) {
    const int w = cfg.completion.panorama_width;
    const double half = cfg.diffusion.band_half_deg;
    const int h = static_cast<int>(std::lround(w * (2.0 * half) / 360.0));
    if (w % codec_scale != 0 || h % codec_scale != 0)
        throw Error(ErrorCode::Config, "panorama size is not divisible by the codec scale");
    RigidTransform pose;
    pose.translation = center;
    const ViewSpec band = ViewSpec::equirect_band(w, h, -half * kDeg, half * kDeg, pose);
    const RenderOutput r = render(mesh, band);
    PanoramaRgbd pano;
    pano.color = r.color;
    pano.distance = DistanceGrid{r.depth, r.coverage};
    pano.hole_mask = invert(r.coverage);
    pano.view = band;
    return pano;
}

PanoramaRgbd generate_candidate(const TriangleMesh& mesh, const PanoramaRgbd& mesh_pano, const Backends& backends,
                                const PipelineConfig& cfg, const std::string& prompt, std::uint64_t seed) {
    diffusion::EDiffusionConfig ecfg = cfg.diffusion;
    ecfg.seed = seed;
    PanoramaRgbd out = mesh_pano;
    out.color = diffusion::e_diffusion_inpaint(mesh_pano, backends.denoiser, backends.codec, ecfg, prompt);
    if (!mesh_pano.hole_mask.any()) return out;

    depth::PanoramaDepthInput in;
    in.views = make_pano_views(mesh_pano.center(), ecfg.views, ecfg.fov_deg,
                               ecfg.view_latent_size * backends.codec.scale(), ecfg.band_half_deg);
    for (auto& v : in.views) v.pose.rotation = mesh_pano.view.pose.rotation * v.pose.rotation;
    const std::size_t m = in.views.size();
    in.images.resize(m);
    in.rendered_depth.resize(m);
    in.anchor_mask.resize(m);
    parallel_for(m, [&](std::size_t i) {
        in.images[i] = warp_grid(mesh_pano.view, in.views[i], out.color).values;
        RenderOutput r = render(mesh, in.views[i]);
        in.rendered_depth[i] = std::move(r.depth);
        in.anchor_mask[i] = std::move(r.coverage);
    });
    in.band = mesh_pano.view;
    const Mask observed = invert(mesh_pano.hole_mask);
    in.band_rendered = &mesh_pano.distance;
    in.band_observed = &observed;
    out.distance = depth::inpaint_panorama_depth(in, backends.predictor, cfg.depth).band;
    return out;
}

CompletionResult complete_scene(const SceneDataset& ds, const Backends& backends, const PipelineConfig& cfg,
                                const std::string& prompt, const StageCallback& on_stage) {
    cfg.validate();
    if (ds.frames.empty()) throw Error(ErrorCode::Scene, "scene has no frames");
    for (const auto& f : ds.frames) f.validate();

    CompletionResult result;
    for (const auto& f : ds.frames) append(result.mesh, mesh_from_rgbd(f, cfg.completion.frame_params));
    if (result.mesh.empty()) throw Error(ErrorCode::Scene, "input frames produced an empty mesh");
    if (on_stage) on_stage("input", result.mesh);

    const PanoramaRgbd mesh_pano =
        render_panorama(result.mesh, room_center(ds.frames), cfg, backends.codec.scale());
    std::vector<PanoramaRgbd> candidates;
    for (int a = 0; a < cfg.completion.candidates; ++a)
        candidates.push_back(with_context("panorama candidate " + std::to_string(a), [&] {
            return generate_candidate(result.mesh, mesh_pano, backends, cfg, prompt,
                                      cfg.diffusion.seed + static_cast<std::uint64_t>(a));
        }));
    const ActiveSampleResult pick = active_sample(result.mesh, candidates, ds.frames);
    result.selected = pick.index;
    result.candidate_mse = pick.mse;
    result.panorama = candidates[pick.index];
    result.mesh = fuse_panorama(result.mesh, result.panorama);
    if (on_stage) on_stage("panorama", result.mesh);

    std::mt19937_64 rng(cfg.completion.seed);
    for (int it = 0; it < cfg.completion.completion_iters; ++it) {
        const auto pose = sample_completion_pose(result.mesh, rng, cfg.completion);
        if (!pose) break;
        PipelineConfig step_cfg = cfg;
        step_cfg.diffusion.seed = cfg.diffusion.seed + 1000 * static_cast<std::uint64_t>(it + 1);
        result.mesh = with_context("completion iteration " + std::to_string(it), [&] {
            return iterative_inpaint(result.mesh, {*pose}, backends, step_cfg, prompt);
        });
        result.completion_poses.push_back(*pose);
    }
    if (on_stage) on_stage("completion", result.mesh);
    return result;
}

}  // namespace roomweave::completion
