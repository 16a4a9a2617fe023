#include <fstream>
#include <functional>
#include <numeric>
#include <iterator>

#include "doctest.h"
#include "fixtures.hpp"

#include "roomweave/error.hpp"
#include "roomweave/scene_io.hpp"
#include "roomweave/synthetic.hpp"

using namespace roomweave;
namespace fs = std::filesystem;

namespace {

SceneDataset numbered(int n) {
    SceneDataset ds;
    ds.scene_id = "s";
    for (int i = 0; i < n; ++i) {
        RgbdFrame f;
        f.frame_id = i;
        ds.frames.push_back(f);
    }
    return ds;
}

std::vector<int> ids(const SceneDataset& ds) {
    std::vector<int> out;
    for (const auto& f : ds.frames) out.push_back(f.frame_id);
    return out;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error thrown");
    return ErrorCode::Io;
}

SceneDataset small_scene(int frames) {
    synthetic::TrajectorySpec t;
    t.frames = frames;
    t.width = 24;
    t.height = 18;
    return synthetic::render_trajectory(synthetic::box_room({}), t, "small");
}

}  // namespace

TEST_CASE("split_views follows the uniform stride rule") {
    auto [in5, ev5] = io::split_views(numbered(100), 0.05);
    CHECK(in5.frames.size() == 5);
    CHECK(ev5.frames.size() == 95);
    CHECK(ids(in5) == std::vector<int>{0, 20, 40, 60, 80});

    auto [in2, ev2] = io::split_views(numbered(10), 0.2);
    CHECK(ids(in2) == std::vector<int>{0, 5});
    CHECK(ids(ev2) == std::vector<int>{1, 2, 3, 4, 6, 7, 8, 9});

    auto [all, none] = io::split_views(numbered(7), 1.0);
    CHECK(all.frames.size() == 7);
    CHECK(none.frames.empty());
}

TEST_CASE("split_views partitions the frames in order for any fraction") {
    for (int n = 1; n <= 40; ++n)
        for (int pct = 1; pct <= 100; ++pct) {
            const double f = pct / 100.0;
            if (static_cast<int>(std::floor(n * f + 1e-9)) == 0) {
                CHECK_THROWS_AS(io::split_views(numbered(n), f), Error);
                continue;
            }
            auto [in, ev] = io::split_views(numbered(n), f);
            std::vector<int> merged = ids(in);
            const auto e = ids(ev);
            merged.insert(merged.end(), e.begin(), e.end());
            std::sort(merged.begin(), merged.end());
            std::vector<int> expect(n);
            std::iota(expect.begin(), expect.end(), 0);
            CHECK(merged == expect);
            CHECK(std::is_sorted(e.begin(), e.end()));
            CHECK(ids(in).front() == 0);
        }
}

TEST_CASE("split_views rejects fractions outside (0, 1]") {
    CHECK(code_of([] { io::split_views(numbered(10), 0.0); }) == ErrorCode::Config);
    CHECK(code_of([] { io::split_views(numbered(10), 1.5); }) == ErrorCode::Config);
    CHECK(code_of([] { io::split_views(numbered(10), 0.05); }) == ErrorCode::Config);
}

TEST_CASE("a hand-written 16-bit depth PNG of 1500 mm reads as 1.5 m") {
    const unsigned char png[] = {
        0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48, 0x44, 0x52, 0x00,
        0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x01, 0x10, 0x00, 0x00, 0x00, 0x00, 0x6a, 0xee, 0x47, 0x16, 0x00,
        0x00, 0x00, 0x0b, 0x49, 0x44, 0x41, 0x54, 0x78, 0x9c, 0x63, 0x60, 0xbd, 0x03, 0x00, 0x00, 0xe9, 0x00,
        0xe2, 0x69, 0x5b, 0xcc, 0xfc, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e, 0x44, 0xae, 0x42, 0x60, 0x82};
    const fs::path dir = rwtest::temp_dir("png1500");
    std::ofstream(dir / "d.png", std::ios::binary).write(reinterpret_cast<const char*>(png), sizeof(png));
    const Image d = io::read_png_depth_mm(dir / "d.png");
    REQUIRE(d.width == 1);
    CHECK(d.at(0, 0) == 1.5f);
}

TEST_CASE("depth PNG conversion is exact on integer millimeters") {
    Image d(50, 2, 1);
    for (int x = 0; x < 50; ++x) {
        d.at(x, 0) = static_cast<float>(x * 1311 % 65536) / 1000.0f;
        d.at(x, 1) = 0.0f;
    }
    const fs::path p = rwtest::temp_dir("depthmm") / "d.png";
    io::write_png_depth_mm(d, p);
    const Image r = io::read_png_depth_mm(p);
    for (int x = 0; x < 50; ++x) {
        CHECK(r.at(x, 0) == static_cast<float>(static_cast<double>(x * 1311 % 65536) / 1000.0));
        CHECK(r.at(x, 1) == 0.0f);
    }
}

TEST_CASE("color PNG round trip quantizes to 8 bits") {
    const Image c = rwtest::random_image(7, 5, 3, 3);
    const fs::path p = rwtest::temp_dir("rgb") / "c.png";
    io::write_png_rgb(c, p);
    const Image r = io::read_png_rgb(p);
    REQUIRE(r.channels == 3);
    CHECK(rwtest::max_abs_diff(c, r) <= 0.5 / 255.0 + 1e-6);
}

TEST_CASE("PFM round trip is bit exact") {
    const Image g = rwtest::random_image(9, 4, 1, 8, -3.0f, 40.0f);
    const fs::path p = rwtest::temp_dir("pfm") / "g.pfm";
    io::write_pfm(g, p);
    CHECK(slurp(p).rfind("Pf\n9 4\n-1", 0) == 0);
    CHECK(io::read_pfm(p).data == g.data);
}

TEST_CASE("scene save and load round trip") {
    const SceneDataset ds = small_scene(3);
    const fs::path dir = rwtest::temp_dir("scene_rt") / "room_a";
    io::save_scene(ds, dir);
    CHECK(fs::exists(dir / "color" / "000002.png"));
    const SceneDataset r = io::load_scene(dir);
    CHECK(r.scene_id == "room_a");
    REQUIRE(r.frames.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
        CHECK(r.frames[i].frame_id == static_cast<int>(i));
        CHECK(r.frames[i].color.width == 24);
        CHECK((r.frames[i].pose.matrix() - ds.frames[i].pose.matrix()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(rwtest::max_abs_diff(r.frames[i].depth, ds.frames[i].depth) <= 0.0005 + 1e-6);
    }
}

TEST_CASE("load_scene errors are E_SCENE and name the frame") {
    const fs::path root = rwtest::temp_dir("scene_err");
    CHECK(code_of([&] { io::load_scene(root / "missing"); }) == ErrorCode::Scene);
    fs::create_directories(root / "empty");
    try {
        io::load_scene(root / "empty");
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Scene);
        CHECK(std::string(e.what()).find("no frames") != std::string::npos);
    }

    const SceneDataset ds = small_scene(3);
    auto fresh = [&](const std::string& name) {
        io::save_scene(ds, root / name);
        return root / name;
    };
    auto message = [](const fs::path& p) {
        try {
            io::load_scene(p);
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::Scene);
            return std::string(e.what());
        }
        return std::string("no error");
    };

    const fs::path a = fresh("nodepth");
    fs::remove(a / "depth" / "000001.png");
    CHECK(message(a).find("frame 1") != std::string::npos);

    const fs::path b = fresh("badpose");
    std::ofstream(b / "pose" / "000002.txt") << "1 0 0 nan\n0 1 0 0\n0 0 1 0\n0 0 0 1\n";
    CHECK(message(b).find("frame 2") != std::string::npos);

    const fs::path c = fresh("badsize");
    io::write_png_rgb(Image(5, 5, 3), c / "color" / "000000.png");
    CHECK(message(c).find("frame 0") != std::string::npos);

    const fs::path d = fresh("nointr");
    fs::remove(d / "intrinsics.txt");
    CHECK(message(d).find("intrinsics") != std::string::npos);
}

TEST_CASE("PLY export and import round trip") {
    TriangleMesh m;
    m.vertices = {{0.1, 0.2, 0.3}, {1.0 / 3.0, -2.0, 5.5}, {7, 8, 9}};
    m.colors = {{0, 0.5f, 1}, {0.2f, 0.4f, 0.6f}, {1, 1, 1}};
    m.faces = {{0, 1, 2}};
    const fs::path dir = rwtest::temp_dir("ply");
    io::export_mesh(m, dir / "t.ply");
    const std::string bytes = slurp(dir / "t.ply");
    const auto body = bytes.find("end_header\n") + 11;
    CHECK(bytes.size() - body == 3 * (24 + 3) + (1 + 12));
    CHECK(bytes.find("format binary_little_endian 1.0") != std::string::npos);
    const TriangleMesh r = io::import_mesh(dir / "t.ply");
    CHECK(r.vertices == m.vertices);
    CHECK(r.faces == m.faces);
    for (size_t i = 0; i < 3; ++i)
        for (int c = 0; c < 3; ++c) CHECK(std::abs(r.colors[i][c] - m.colors[i][c]) <= 0.5f / 255.0f + 1e-6f);

    io::export_mesh(TriangleMesh{}, dir / "empty.ply");
    const TriangleMesh e = io::import_mesh(dir / "empty.ply");
    CHECK(e.vertices.empty());
    CHECK(e.faces.empty());
}

TEST_CASE("PLY export is byte-identical across runs and idempotent after import") {
    const TriangleMesh room = synthetic::box_room({{4, 2.6, 5}, 0.05, 3});
    REQUIRE(room.faces.size() > 10000);
    const fs::path dir = rwtest::temp_dir("ply_det");
    io::export_mesh(room, dir / "a.ply");
    io::export_mesh(room, dir / "b.ply");
    CHECK(slurp(dir / "a.ply") == slurp(dir / "b.ply"));
    io::export_mesh(io::import_mesh(dir / "a.ply"), dir / "c.ply");
    CHECK(slurp(dir / "a.ply") == slurp(dir / "c.ply"));
}

TEST_CASE("import_mesh rejects malformed files with E_MESH") {
    const fs::path dir = rwtest::temp_dir("ply_bad");
    std::ofstream(dir / "junk.ply") << "not a mesh\n";
    CHECK(code_of([&] { io::import_mesh(dir / "junk.ply"); }) == ErrorCode::Mesh);
    CHECK(code_of([&] { io::import_mesh(dir / "nope.ply"); }) == ErrorCode::Mesh);
    std::ofstream(dir / "ascii.ply") << "ply\nformat ascii 1.0\nelement vertex 0\nend_header\n";
    CHECK(code_of([&] { io::import_mesh(dir / "ascii.ply"); }) == ErrorCode::Mesh);

    TriangleMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    m.colors.assign(3, Eigen::Vector3f::Zero());
    m.faces = {{0, 1, 2}};
    io::export_mesh(m, dir / "t.ply");
    std::string bytes = slurp(dir / "t.ply");
    std::ofstream(dir / "trunc.ply", std::ios::binary) << bytes.substr(0, bytes.size() - 5);
    CHECK(code_of([&] { io::import_mesh(dir / "trunc.ply"); }) == ErrorCode::Mesh);
    // out-of-range face index
    bytes[bytes.size() - 4] = 9;
    std::ofstream(dir / "idx.ply", std::ios::binary) << bytes;
    CHECK(code_of([&] { io::import_mesh(dir / "idx.ply"); }) == ErrorCode::Mesh);
}
