// roomweave: command-line front end for scene completion, panorama
// generation, evaluation and synthetic fixtures.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "roomweave/bridge.hpp"
#include "roomweave/completion.hpp"
#include "roomweave/error.hpp"
#include "roomweave/metrics.hpp"
#include "roomweave/parallel.hpp"
#include "roomweave/scene_io.hpp"
#include "roomweave/synthetic.hpp"

namespace fs = std::filesystem;
using namespace roomweave;
using nlohmann::json;

namespace {

struct RunOptions {
    std::string scene;
    std::string out = "out";
    std::string denoiser = "procedural:0";
    std::string depth = "auto";
    std::string codec = "box:8";
    std::string token;
    std::string prompt_template = completion::kDefaultPromptTemplate;
    double fraction = 1.0;
    std::uint64_t seed = 0;
    int threads = 1;
    bool print_config = false;
    int blur = 0;  // 0 = no blur
    std::size_t chamfer_samples = 100000;
    completion::PipelineConfig pipeline;
};

struct EvalArgs {
    std::string mesh;
    std::string scene;
    std::string out = ".";
    double fraction = 0.05;
    int blur = 0;
    int render_scale = 1;
    std::size_t chamfer_samples = 100000;
    std::uint64_t seed = 0;
    int threads = 1;
};

struct SynthArgs {
    std::string out;
    int frames = 100;
    std::uint64_t seed = 7;
    int width = 240;
    int height = 180;
    double hfov = 80.0;
    int pano_width = 2048;
};

std::pair<std::string, std::string> split_selector(const std::string& s) {
    const auto colon = s.find(':');
    if (colon == std::string::npos) return {s, ""};
    return {s.substr(0, colon), s.substr(colon + 1)};
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
    try {
        size_t used = 0;
        const auto v = std::stoull(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw Error(ErrorCode::Config, what + ": expected an unsigned integer, got '" + s + "'");
}

std::string bridge_address(const std::string& from_flag) {
    if (const char* env = std::getenv("ROOMWEAVE_BRIDGE"); env && *env) return env;
    if (from_flag.empty()) throw Error(ErrorCode::Config, "bridge selector needs an address (host:port)");
    return from_flag;
}

struct BackendSet {
    std::shared_ptr<bridge::Client> client;
    std::shared_ptr<const diffusion::LatentCodec> codec;
    std::unique_ptr<diffusion::Denoiser> denoiser;
    std::unique_ptr<depth::DepthPredictor> predictor;

    completion::Backends view() const { return {*denoiser, *predictor, *codec}; }
};

BackendSet make_backends(const RunOptions& o) {
    BackendSet b;
    const auto [kind, arg] = split_selector(o.denoiser);
    if (kind == "bridge") {
        b.client = std::make_shared<bridge::Client>(bridge_address(arg));
        b.codec = std::make_shared<bridge::BridgeCodec>(b.client);
        b.denoiser = std::make_unique<bridge::BridgeDenoiser>(b.client);
    } else {
        const auto [ckind, carg] = split_selector(o.codec);
        if (ckind == "identity")
            b.codec = std::make_shared<diffusion::IdentityCodec>();
        else if (ckind == "box")
            b.codec = std::make_shared<diffusion::BoxCodec>(static_cast<int>(parse_u64(carg, "--codec box:K")));
        else
            throw Error(ErrorCode::Config, "unknown codec '" + o.codec + "' (identity | box:K)");
        if (b.codec->scale() < 1) throw Error(ErrorCode::Config, "codec scale must be >= 1");

        if (kind == "procedural") {
            b.denoiser = diffusion::procedural_denoiser(parse_u64(arg.empty() ? "0" : arg, "--denoiser procedural"),
                                                        b.codec);
        } else if (kind == "oracle") {
            Image target = io::read_png_rgb(arg);
            const double half = o.pipeline.diffusion.band_half_deg * M_PI / 180.0;
            const ViewSpec band = ViewSpec::equirect_band(target.width, target.height, -half, half);
            b.denoiser = diffusion::oracle_denoiser(diffusion::panorama_target(std::move(target), band), b.codec);
        } else if (kind == "mesh") {
            b.denoiser = diffusion::oracle_denoiser(diffusion::mesh_target(io::import_mesh(arg)), b.codec);
        } else {
            throw Error(ErrorCode::Config,
                        "unknown denoiser '" + o.denoiser + "' (oracle:IMG | mesh:PLY | procedural:SEED | bridge:ADDR)");
        }
    }

    const auto [dkind, darg] = split_selector(o.depth);
    if (dkind == "auto" ? kind == "bridge" : dkind == "bridge") {
        if (!b.client) b.client = std::make_shared<bridge::Client>(bridge_address(darg));
        b.predictor = std::make_unique<bridge::BridgeDepthPredictor>(b.client);
    } else if (dkind == "auto" || dkind == "harmonic") {
        b.predictor = std::make_unique<depth::HarmonicDepthPredictor>();
    } else if (dkind == "oracle") {
        b.predictor = std::make_unique<depth::OracleDepthPredictor>(io::import_mesh(darg));
    } else {
        throw Error(ErrorCode::Config, "unknown depth predictor '" + o.depth + "' (auto | harmonic | oracle:PLY | bridge:ADDR)");
    }
    return b;
}

json config_json(const RunOptions& o) {
    const auto& d = o.pipeline.diffusion;
    const auto& c = o.pipeline.completion;
    json j;
    j["scene"] = o.scene;
    j["out"] = o.out;
    j["denoiser"] = o.denoiser;
    j["depth_predictor"] = o.depth;
    j["codec"] = o.codec;
    j["token"] = o.token;
    j["prompt_template"] = o.prompt_template;
    j["fraction"] = o.fraction;
    j["seed"] = o.seed;
    j["threads"] = o.threads;
    j["blur"] = o.blur;
    j["chamfer_samples"] = o.chamfer_samples;
    j["diffusion"] = {{"total_steps", d.total_steps},         {"refine_steps", d.refine_steps},
                      {"views", d.views},                     {"fov_deg", d.fov_deg},
                      {"noise_refresh_period", d.noise_refresh_period},
                      {"window_size", d.window_size},         {"window_stride", d.window_stride},
                      {"band_half_deg", d.band_half_deg},     {"view_latent_size", d.view_latent_size}};
    j["depth"] = {{"refine_iters", o.pipeline.depth.refine_iters}};
    j["completion"] = {{"candidates", c.candidates},
                       {"completion_iters", c.completion_iters},
                       {"pose_samples", c.pose_samples},
                       {"box_frac_h", c.box_frac_h},
                       {"box_frac_v", c.box_frac_v},
                       {"elevation_max_deg", c.elevation_max_deg},
                       {"inpaint_ratio_max", c.inpaint_ratio_max},
                       {"backface_max", c.backface_max},
                       {"min_depth_min", c.min_depth_min},
                       {"backward_step", c.backward_step},
                       {"backward_max_steps", c.backward_max_steps},
                       {"camera_fov_deg", c.camera_fov_deg},
                       {"camera_resolution", c.camera_resolution},
                       {"probe_resolution", c.probe_resolution},
                       {"panorama_width", c.panorama_width}};
    return j;
}

void add_pipeline_flags(CLI::App* cmd, RunOptions& o) {
    auto& d = o.pipeline.diffusion;
    auto& c = o.pipeline.completion;
    cmd->add_option("--scene", o.scene, "Scene directory")->required();
    cmd->add_option("--out", o.out, "Output directory");
    cmd->add_option("--denoiser", o.denoiser, "oracle:IMG | mesh:PLY | procedural:SEED | bridge:ADDR");
    cmd->add_option("--depth", o.depth, "auto | harmonic | oracle:PLY | bridge:ADDR");
    cmd->add_option("--codec", o.codec, "identity | box:K (ignored for bridge backends)");
    cmd->add_option("--token", o.token, "Style token substituted for {S*}");
    cmd->add_option("--prompt-template", o.prompt_template, "Prompt template containing {S*}");
    cmd->add_option("--fraction", o.fraction, "Fraction of frames used as input");
    cmd->add_option("--seed", o.seed, "Base seed");
    cmd->add_option("--threads", o.threads, "Worker thread cap");
    cmd->add_flag("--print-config", o.print_config, "Print the effective configuration and exit");

    cmd->add_option("--steps", d.total_steps, "Denoising steps T");
    cmd->add_option("--refine-steps", d.refine_steps, "Texture refinement steps F");
    cmd->add_option("--views", d.views, "Perspective views in the panorama fan");
    cmd->add_option("--fov", d.fov_deg, "Field of view of each fan view (degrees)");
    cmd->add_option("--noise-refresh", d.noise_refresh_period, "Steps between fresh noise draws");
    cmd->add_option("--window", d.window_size, "Refinement window width (latent cells)");
    cmd->add_option("--stride", d.window_stride, "Refinement window stride (latent cells)");
    cmd->add_option("--band", d.band_half_deg, "Half latitude span of the panorama band (degrees)");
    cmd->add_option("--view-latent", d.view_latent_size, "Fan view latent side");
    cmd->add_option("--pano-width", c.panorama_width, "Panorama width in pixels");

    cmd->add_option("--depth-refine-iters", o.pipeline.depth.refine_iters, "Depth refinement rounds");

    cmd->add_option("--candidates", c.candidates, "Panorama candidates A");
    cmd->add_option("--completion-iters", c.completion_iters, "Completion iterations");
    cmd->add_option("--pose-samples", c.pose_samples, "Candidate poses per iteration");
    cmd->add_option("--box-frac-h", c.box_frac_h, "Horizontal sampling box fraction");
    cmd->add_option("--box-frac-v", c.box_frac_v, "Vertical sampling box fraction");
    cmd->add_option("--elevation", c.elevation_max_deg, "Max |elevation| of sampled poses (degrees)");
    cmd->add_option("--inpaint-max", c.inpaint_ratio_max, "Max inpainting ratio");
    cmd->add_option("--backface-max", c.backface_max, "Max back-face ratio");
    cmd->add_option("--min-depth", c.min_depth_min, "Min depth of accepted poses (m)");
    cmd->add_option("--backward-step", c.backward_step, "Backward step of the selected pose (m)");
    cmd->add_option("--camera-fov", c.camera_fov_deg, "Completion camera field of view (degrees)");
    cmd->add_option("--camera-res", c.camera_resolution, "Completion camera resolution");
    cmd->add_option("--probe-res", c.probe_resolution, "Pose filter probe resolution");
    cmd->add_option("--blur", o.blur, "Gaussian blur kernel for the report metrics (0 = none)");
    cmd->add_option("--chamfer-samples", o.chamfer_samples, "Surface samples for Chamfer distance");
}

void prepare(RunOptions& o) {
    o.pipeline.diffusion.seed = o.seed;
    o.pipeline.completion.seed = o.seed;
    if (o.threads < 1) throw Error(ErrorCode::Config, "--threads must be >= 1");
    if (o.blur < 0 || (o.blur > 0 && o.blur % 2 == 0)) throw Error(ErrorCode::Config, "--blur must be 0 or odd");
    set_max_threads(o.threads);
    o.pipeline.validate();
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error(ErrorCode::Io, "cannot write " + p.string());
    f << s;
}

void ensure_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create " + p.string() + ": " + ec.message());
}

void write_panorama(const PanoramaRgbd& pano, const fs::path& dir) {
    io::write_png_rgb(pano.color, dir / "panorama.png");
    Image dist = pano.distance.values;
    for (size_t i = 0; i < dist.data.size(); ++i)
        if (!pano.distance.valid.data[i]) dist.data[i] = 0.0f;
    io::write_pfm(dist, dir / "panorama_dist.pfm");
    io::write_png_mask(pano.hole_mask, dir / "panorama_hole.png");
}

std::pair<SceneDataset, SceneDataset> load_split(const std::string& scene, double fraction) {
    const SceneDataset ds = io::load_scene(scene);
    return io::split_views(ds, fraction);
}

metrics::EvalOptions eval_options(const std::vector<RgbdFrame>& all_frames, int blur, std::size_t samples,
                                  std::uint64_t seed, int render_scale = 1) {
    metrics::EvalOptions e;
    if (blur > 0) e.blur_kernel = blur;
    e.render_scale = render_scale;
    e.chamfer_samples = samples;
    e.seed = seed;
    e.gt_points = metrics::backproject_points(all_frames, 4);
    return e;
}

int cmd_complete(RunOptions& o) {
    prepare(o);
    if (o.print_config) {
        std::cout << config_json(o).dump(2) << "\n";
        return 0;
    }
    auto [input, eval] = load_split(o.scene, o.fraction);
    const BackendSet b = make_backends(o);
    const std::string prompt = completion::build_prompt(o.prompt_template, o.token);
    const fs::path out = o.out;
    ensure_dir(out);
    const auto result = completion::complete_scene(
        input, b.view(), o.pipeline, prompt, [&](const std::string& stage, const TriangleMesh& mesh) {
            if (stage != "completion") io::export_mesh(mesh, out / ("stage_" + stage + ".ply"));
        });
    io::export_mesh(result.mesh, out / "final.ply");
    write_panorama(result.panorama, out);

    json r;
    r["scene_id"] = input.scene_id;
    r["input_frames"] = input.frames.size();
    r["eval_frames"] = eval.frames.size();
    r["selected_candidate"] = result.selected;
    r["candidate_depth_mse"] = result.candidate_mse;
    r["completion_poses"] = result.completion_poses.size();
    r["vertices"] = result.mesh.vertices.size();
    r["faces"] = result.mesh.faces.size();
    std::ostringstream txt;
    txt.precision(10);
    txt << "scene_id=" << input.scene_id << "\ninput_frames=" << input.frames.size()
        << "\neval_frames=" << eval.frames.size() << "\nselected_candidate=" << result.selected
        << "\ncompletion_poses=" << result.completion_poses.size() << "\nvertices=" << result.mesh.vertices.size()
        << "\nfaces=" << result.mesh.faces.size() << "\n";
    for (size_t a = 0; a < result.candidate_mse.size(); ++a)
        txt << "candidate_" << a << "_depth_mse=" << result.candidate_mse[a] << "\n";
    if (!eval.frames.empty()) {
        std::vector<RgbdFrame> all = input.frames;
        all.insert(all.end(), eval.frames.begin(), eval.frames.end());
        const auto rep =
            metrics::evaluate(result.mesh, eval.frames, eval_options(all, o.blur, o.chamfer_samples, o.seed));
        r["eval"] = json::parse(rep.to_json());
        txt << rep.to_text();
    }
    write_text(out / "report.txt", txt.str());
    write_text(out / "report.json", r.dump(2) + "\n");
    std::cout << "wrote " << (out / "final.ply").string() << "\n";
    return 0;
}

int cmd_panorama(RunOptions& o) {
    prepare(o);
    if (o.print_config) {
        std::cout << config_json(o).dump(2) << "\n";
        return 0;
    }
    auto [input, eval] = load_split(o.scene, o.fraction);
    for (const auto& f : input.frames) f.validate();
    // Validate the fan before any heavy work so coverage errors surface first.
    make_pano_views(Eigen::Vector3d::Zero(), o.pipeline.diffusion.views, o.pipeline.diffusion.fov_deg, 8,
                    o.pipeline.diffusion.band_half_deg);
    const BackendSet b = make_backends(o);
    const std::string prompt = completion::build_prompt(o.prompt_template, o.token);
    const fs::path out = o.out;
    ensure_dir(out);

    TriangleMesh mesh;
    for (const auto& f : input.frames) mesh = fuse(mesh, mesh_from_rgbd(f, o.pipeline.completion.frame_params));
    const PanoramaRgbd base =
        completion::render_panorama(mesh, completion::room_center(input.frames), o.pipeline, b.codec->scale());
    std::vector<PanoramaRgbd> candidates;
    for (int a = 0; a < o.pipeline.completion.candidates; ++a)
        candidates.push_back(completion::generate_candidate(mesh, base, b.view(), o.pipeline, prompt,
                                                            o.seed + static_cast<std::uint64_t>(a)));
    const auto pick = completion::active_sample(mesh, candidates, input.frames);
    write_panorama(candidates[pick.index], out);
    std::ostringstream txt;
    txt.precision(10);
    txt << "width=" << base.color.width << "\nheight=" << base.color.height << "\nselected_candidate=" << pick.index
        << "\nhole_cells=" << base.hole_mask.count() << "\n";
    for (size_t a = 0; a < pick.mse.size(); ++a) txt << "candidate_" << a << "_depth_mse=" << pick.mse[a] << "\n";
    write_text(out / "panorama_report.txt", txt.str());
    std::cout << "wrote " << (out / "panorama.png").string() << " (" << base.color.width << "x" << base.color.height
              << ")\n";
    return 0;
}

int cmd_eval(EvalArgs& a) {
    if (a.threads < 1) throw Error(ErrorCode::Config, "--threads must be >= 1");
    if (a.blur < 0 || (a.blur > 0 && a.blur % 2 == 0)) throw Error(ErrorCode::Config, "--blur must be 0 or odd");
    set_max_threads(a.threads);
    const TriangleMesh mesh = io::import_mesh(a.mesh);
    const SceneDataset ds = io::load_scene(a.scene);
    const auto [input, eval] = io::split_views(ds, a.fraction);
    if (eval.frames.empty()) throw Error(ErrorCode::Config, "--fraction leaves no eval views");
    const auto rep =
        metrics::evaluate(mesh, eval.frames, eval_options(ds.frames, a.blur, a.chamfer_samples, a.seed, a.render_scale));
    const fs::path out = a.out;
    ensure_dir(out);
    write_text(out / "eval_report.txt", rep.to_text());
    write_text(out / "eval_report.json", rep.to_json());
    std::cout.precision(10);
    std::cout << "psnr=" << rep.psnr << "\nssim=" << rep.ssim << "\ndepth_mse=" << rep.depth_mse << "\n";
    if (rep.chamfer) std::cout << "chamfer_1d=" << *rep.chamfer << "\n";
    return 0;
}

int cmd_synth(SynthArgs& a) {
    synthetic::RoomSpec room;
    room.style_seed = a.seed;
    const TriangleMesh gt = synthetic::box_room(room);
    synthetic::TrajectorySpec t;
    t.frames = a.frames;
    t.width = a.width;
    t.height = a.height;
    t.hfov_deg = a.hfov;
    const SceneDataset ds = synthetic::render_trajectory(gt, t, "synthetic_room_" + std::to_string(a.seed));
    const fs::path out = a.out;
    io::save_scene(ds, out);
    io::export_mesh(gt, out / "gt.ply");
    // Ground-truth panorama around the trajectory center, usable as oracle:IMG.
    const int h = a.pano_width / 4;
    RigidTransform center;
    center.translation = completion::room_center(ds.frames);
    const RenderOutput pano = render(gt, ViewSpec::equirect_band(a.pano_width, h, -M_PI / 4, M_PI / 4, center));
    io::write_png_rgb(pano.color, out / "gt_panorama.png");
    std::cout << "wrote " << ds.frames.size() << " frames to " << out.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"roomweave: complete a room mesh from sparse posed RGBD frames"};
    app.require_subcommand(1);

    RunOptions complete_opts, pano_opts;
    auto* complete = app.add_subcommand("complete", "Run the full completion pipeline");
    add_pipeline_flags(complete, complete_opts);
    auto* panorama = app.add_subcommand("panorama", "Generate and select the inpainted RGBD panorama only");
    add_pipeline_flags(panorama, pano_opts);

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "Evaluate a mesh against held-out frames");
    eval->add_option("--mesh", eval_args.mesh, "Mesh (PLY)")->required();
    eval->add_option("--scene", eval_args.scene, "Scene directory")->required();
    eval->add_option("--fraction", eval_args.fraction, "Input fraction; the remaining frames are evaluated");
    eval->add_option("--blur", eval_args.blur, "Gaussian blur kernel (0 = none)");
    eval->add_option("--render-scale", eval_args.render_scale, "Render at this multiple of the frame resolution");
    eval->add_option("--chamfer-samples", eval_args.chamfer_samples, "Surface samples for Chamfer distance");
    eval->add_option("--seed", eval_args.seed, "Sampling seed");
    eval->add_option("--out", eval_args.out, "Report directory");
    eval->add_option("--threads", eval_args.threads, "Worker thread cap");

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "Write a synthetic box-room scene");
    synth->add_option("--out", synth_args.out, "Scene directory")->required();
    synth->add_option("--frames", synth_args.frames, "Trajectory length");
    synth->add_option("--seed", synth_args.seed, "Texture seed");
    synth->add_option("--width", synth_args.width, "Frame width");
    synth->add_option("--height", synth_args.height, "Frame height");
    synth->add_option("--hfov", synth_args.hfov, "Horizontal field of view (degrees)");
    synth->add_option("--pano-width", synth_args.pano_width, "Ground-truth panorama width");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: E_CONFIG: " << e.what() << "\n";
        return 2;
    }

    try {
        if (complete->parsed()) return cmd_complete(complete_opts);
        if (panorama->parsed()) return cmd_panorama(pano_opts);
        if (eval->parsed()) return cmd_eval(eval_args);
        if (synth->parsed()) return cmd_synth(synth_args);
    } catch (const Error& e) {
        std::cerr << "error: " << error_code_name(e.code()) << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: E_IO: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
