#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "roomweave/depth.hpp"
#include "roomweave/diffusion.hpp"
#include "roomweave/frame.hpp"
#include "roomweave/mesh.hpp"

namespace roomweave::completion {

inline constexpr const char* kDefaultPromptTemplate = "a simple and clean room in the style of {S*}.";

/// Substitutes the `{S*}` placeholder. Throws E_CONFIG when it is missing.
std::string build_prompt(const std::string& template_text, const std::string& token);

struct CompletionConfig {
    int candidates = 3;          // A
    int completion_iters = 30;
    int pose_samples = 200;
    double box_frac_h = 0.8;
    double box_frac_v = 0.1;
    double elevation_max_deg = 15.0;
    double inpaint_ratio_max = 0.5;
    double backface_max = 0.01;
    double min_depth_min = 1.0;  // meters
    double backward_step = 0.1;  // meters
    int backward_max_steps = 50;

    // Completion camera. Filters are evaluated on a low-resolution probe of it.
    double camera_fov_deg = 90.0;
    int camera_resolution = 512;
    int probe_resolution = 128;

    int panorama_width = 2048;   // equirect band width in pixels (height follows the band)
    TriangulationParams patch_params{std::numeric_limits<double>::infinity(), 1.25};
    TriangulationParams frame_params{};
    std::uint64_t seed = 0;

    void validate() const;
    CameraIntrinsics camera(int resolution) const;
};

Eigen::Vector3d room_center(const std::vector<RgbdFrame>& frames);

/// Mean over all frames and pixels with input depth > 0 and render coverage of
/// the squared z-depth error.
double depth_mse(const TriangleMesh& mesh, const std::vector<RgbdFrame>& frames);

struct ActiveSampleResult {
    int index = 0;
    std::vector<double> mse;  // per candidate
};

/// Picks the candidate whose fused mesh best explains the input depth.
ActiveSampleResult active_sample(const TriangleMesh& base_mesh, const std::vector<PanoramaRgbd>& candidates,
                                 const std::vector<RgbdFrame>& frames);

struct PoseStats {
    double inpaint_ratio = 1.0;
    double backface_ratio = 0.0;
    double min_depth = 0.0;
};

PoseStats evaluate_pose(const TriangleMesh& mesh, const RigidTransform& pose, const CompletionConfig& cfg);
/// The three filters plus a non-empty hole.
bool passes_filters(const PoseStats& s, const CompletionConfig& cfg);

/// Candidate positions in the central box of the mesh bounds with uniform yaw
/// and bounded elevation.
std::vector<RigidTransform> draw_candidate_poses(const TriangleMesh& mesh, std::mt19937_64& rng,
                                                 const CompletionConfig& cfg);
/// Best surviving candidate by inpaint ratio times min depth, then backed off
/// along its view axis while the filters still hold. Ties keep the first.
std::optional<RigidTransform> select_completion_pose(const TriangleMesh& mesh,
                                                     const std::vector<RigidTransform>& candidates,
                                                     const CompletionConfig& cfg);
std::optional<RigidTransform> sample_completion_pose(const TriangleMesh& mesh, std::mt19937_64& rng,
                                                     const CompletionConfig& cfg);

struct Backends {
    const diffusion::Denoiser& denoiser;
    const depth::DepthPredictor& predictor;
    const diffusion::LatentCodec& codec;
};

struct PipelineConfig {
    diffusion::EDiffusionConfig diffusion;
    depth::DepthFusionConfig depth;
    CompletionConfig completion;

    void validate() const;
};

/// Renders each pose, inpaints its holes, lifts them to 3D and fuses them.
TriangleMesh iterative_inpaint(const TriangleMesh& mesh, const std::vector<RigidTransform>& trajectory,
                               const Backends& backends, const PipelineConfig& cfg, const std::string& prompt);

/// Renders the mesh panorama around `center`.
PanoramaRgbd render_panorama(const TriangleMesh& mesh, const Eigen::Vector3d& center, const PipelineConfig& cfg,
                             int codec_scale);

/// One candidate: E-Diffusion color plus fused distances on the hole cells.
PanoramaRgbd generate_candidate(const TriangleMesh& mesh, const PanoramaRgbd& mesh_pano, const Backends& backends,
                                const PipelineConfig& cfg, const std::string& prompt, std::uint64_t seed);

struct CompletionResult {
    TriangleMesh mesh;
    PanoramaRgbd panorama;      // the selected candidate
    int selected = 0;
    std::vector<double> candidate_mse;
    std::vector<RigidTransform> completion_poses;
};

/// Called with "input", "panorama" and "completion" as each stage finishes.
using StageCallback = std::function<void(const std::string& stage, const TriangleMesh& mesh)>;

CompletionResult complete_scene(const SceneDataset& ds, const Backends& backends, const PipelineConfig& cfg,
                                const std::string& prompt, const StageCallback& on_stage = {});

}  // namespace roomweave::completion
