#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const fs::path kTmp = ROOMWEAVE_TEST_TMP;

struct Run {
    int code = -1;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

Run run(const std::string& args) {
    fs::create_directories(kTmp);
    const fs::path out = kTmp / "stdout.txt", err = kTmp / "stderr.txt";
    const std::string cmd = std::string(ROOMWEAVE_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

// Synthetic scene written once per process.
const fs::path& scene() {
    static const fs::path dir = [] {
        const fs::path d = kTmp / "scene";
        fs::remove_all(d);
        const Run r = run("synth --out " + d.string() + " --frames 12 --width 64 --height 48 --pano-width 256");
        REQUIRE_MESSAGE(r.code == 0, r.err);
        return d;
    }();
    return dir;
}

const std::string kSmall =
    " --fraction 0.25 --steps 6 --refine-steps 2 --view-latent 16 --window 16 --stride 4 --pano-width 128"
    " --codec box:2 --candidates 2 --pose-samples 20 --camera-res 32 --probe-res 32 --chamfer-samples 5000";

std::string complete_args(const std::string& out, const std::string& extra = "") {
    return "complete --scene " + scene().string() + " --out " + (kTmp / out).string() + kSmall + extra;
}

}  // namespace

TEST_CASE("synth writes a loadable scene with ground truth") {
    CHECK(fs::exists(scene() / "gt.ply"));
    const Run r = run("eval --mesh " + (scene() / "gt.ply").string() + " --scene " + scene().string() +
                      " --fraction 0.25 --chamfer-samples 20000 --out " + (kTmp / "eval_gt").string());
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(r.out.find("psnr=") == 0);
    const auto j = nlohmann::json::parse(slurp(kTmp / "eval_gt" / "eval_report.json"));
    CHECK(j["psnr"].get<double>() > 40.0);
    CHECK(j["depth_mse"].get<double>() < 1e-4);
    CHECK(j["views_used"] == 9);
}

TEST_CASE("complete runs end to end and reruns byte for byte") {
    const Run a = run(complete_args("run_a", " --completion-iters 1"));
    REQUIRE_MESSAGE(a.code == 0, a.err);
    for (const char* f : {"final.ply", "stage_input.ply", "stage_panorama.ply", "panorama.png", "panorama_dist.pfm",
                          "panorama_hole.png", "report.txt", "report.json"})
        CHECK_MESSAGE(fs::exists(kTmp / "run_a" / f), f);
    const auto rep = nlohmann::json::parse(slurp(kTmp / "run_a" / "report.json"));
    CHECK(rep["input_frames"] == 3);
    CHECK(rep["eval_frames"] == 9);
    CHECK(rep["candidate_depth_mse"].size() == 2);
    CHECK(rep["eval"]["views_used"].get<int>() > 0);

    const Run b = run(complete_args("run_b", " --completion-iters 1"));
    REQUIRE(b.code == 0);
    CHECK(slurp(kTmp / "run_a" / "final.ply") == slurp(kTmp / "run_b" / "final.ply"));
    CHECK(slurp(kTmp / "run_a" / "panorama.png") == slurp(kTmp / "run_b" / "panorama.png"));
    CHECK(slurp(kTmp / "run_a" / "report.json") == slurp(kTmp / "run_b" / "report.json"));

    const Run t = run(complete_args("run_t", " --completion-iters 1 --threads 4"));
    REQUIRE(t.code == 0);
    CHECK(slurp(kTmp / "run_a" / "final.ply") == slurp(kTmp / "run_t" / "final.ply"));
}

TEST_CASE("zero completion iterations keeps the panorama mesh") {
    const Run r = run(complete_args("run_zero", " --completion-iters 0"));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(slurp(kTmp / "run_zero" / "final.ply") == slurp(kTmp / "run_zero" / "stage_panorama.ply"));
    CHECK(nlohmann::json::parse(slurp(kTmp / "run_zero" / "report.json"))["completion_poses"] == 0);
}

TEST_CASE("print-config shows the defaults") {
    const Run r = run("complete --scene nowhere --print-config");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["diffusion"]["total_steps"] == 50);
    CHECK(j["diffusion"]["refine_steps"] == 20);
    CHECK(j["diffusion"]["views"] == 8);
    CHECK(j["diffusion"]["fov_deg"] == 98.0);
    CHECK(j["diffusion"]["band_half_deg"] == 45.0);
    CHECK(j["completion"]["candidates"] == 3);
    CHECK(j["completion"]["completion_iters"] == 30);
    CHECK(j["completion"]["panorama_width"] == 2048);
    CHECK(j["completion"]["inpaint_ratio_max"] == 0.5);
    CHECK(j["completion"]["backface_max"] == 0.01);
    CHECK(j["completion"]["min_depth_min"] == 1.0);
    CHECK(j["completion"]["elevation_max_deg"] == 15.0);
    CHECK(j["prompt_template"] == "a simple and clean room in the style of {S*}.");

    const Run o = run("panorama --scene nowhere --print-config --steps 7 --refine-steps 3 --seed 3");
    REQUIRE(o.code == 0);
    const auto k = nlohmann::json::parse(o.out);
    CHECK(k["diffusion"]["total_steps"] == 7);
    CHECK(k["seed"] == 3);
}

TEST_CASE("panorama defaults to a 2048 x 512 band") {
    const Run r = run("panorama --scene " + scene().string() + " --out " + (kTmp / "pano").string() +
                      " --fraction 0.25 --steps 2 --refine-steps 1 --candidates 1 --view-latent 32 --depth-refine-iters 0");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const std::string rep = slurp(kTmp / "pano" / "panorama_report.txt");
    CHECK(rep.find("width=2048\n") != std::string::npos);
    CHECK(rep.find("height=512\n") != std::string::npos);
    CHECK(r.out.find("2048x512") != std::string::npos);
    CHECK(fs::exists(kTmp / "pano" / "panorama_dist.pfm"));
}

TEST_CASE("errors exit with code 2 and name their class") {
    const Run missing = run("complete --scene " + (kTmp / "does_not_exist").string() + " --out " +
                            (kTmp / "x").string());
    CHECK(missing.code == 2);
    CHECK(missing.err.find("E_SCENE") != std::string::npos);

    const Run fov = run("panorama --scene " + scene().string() + " --out " + (kTmp / "fov").string() + " --fov 88");
    CHECK(fov.code == 2);
    CHECK(fov.err.find("E_CONFIG") != std::string::npos);
    CHECK(fov.err.find("cover") != std::string::npos);

    const Run steps = run(complete_args("bad_steps", " --refine-steps 9"));
    CHECK(steps.code == 2);
    CHECK(steps.err.find("E_CONFIG") != std::string::npos);

    const Run den = run(complete_args("bad_den", " --denoiser magic:1"));
    CHECK(den.code == 2);
    CHECK(den.err.find("E_CONFIG") != std::string::npos);

    fs::create_directories(kTmp);
    { std::ofstream(kTmp / "junk.ply") << "ply\nformat ascii 1.0\nend_header\n"; }
    const Run mesh = run("eval --mesh " + (kTmp / "junk.ply").string() + " --scene " + scene().string());
    CHECK(mesh.code == 2);
    CHECK(mesh.err.find("E_MESH") != std::string::npos);

    const Run blur = run("eval --mesh " + (scene() / "gt.ply").string() + " --scene " + scene().string() +
                         " --blur 4");
    CHECK(blur.code == 2);
    CHECK(blur.err.find("E_CONFIG") != std::string::npos);

    CHECK(run("complete").code != 0);
    CHECK(run("frobnicate").code != 0);
}
