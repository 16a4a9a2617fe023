#include "doctest.h"
#include "fixtures.hpp"
#include "scenes.hpp"

#include "roomweave/depth.hpp"
#include "roomweave/error.hpp"
#include "roomweave/synthetic.hpp"

using namespace roomweave;
using namespace roomweave::depth;
using Eigen::Vector3d;
using rwtest::box_distance;
using rwtest::fan_scene;
using rwtest::FanScene;
using rwtest::input_of;
using rwtest::smooth_cells;

namespace {

double objective(const Image& pred, const Image& rendered, const Mask& mask, double s) {
    double e = 0.0;
    for (size_t p = 0; p < pred.data.size(); ++p)
        if (mask.data[p] && pred.data[p] > 0.0f && rendered.data[p] > 0.0f) {
            const double r = s * pred.data[p] - rendered.data[p];
            e += r * r;
        }
    return e;
}

double cross_view_disagreement(const std::vector<ViewSpec>& views, const std::vector<DistanceGrid>& d) {
    double total = 0.0;
    size_t n = 0;
    for (size_t i = 0; i < views.size(); ++i)
        for (size_t j = 0; j < views.size(); ++j) {
            if (i == j) continue;
            const WarpResult w = warp_grid(views[j], views[i], d[j].values, &d[j].valid);
            for (size_t p = 0; p < w.mask.data.size(); ++p)
                if (w.mask.data[p] && d[i].valid.data[p]) {
                    total += std::abs(static_cast<double>(w.values.data[p]) - d[i].values.data[p]);
                    ++n;
                }
        }
    return n ? total / n : 0.0;
}

class ThrowingPredictor final : public DepthPredictor {
public:
    explicit ThrowingPredictor(int bad) : bad_(bad) {}
    Image predict_initial(const Image& rgb, const ViewSpec& view) const override {
        if (view.pose.rotation.isApprox(target_)) throw Error(ErrorCode::Bridge, "backend down");
        return Image(rgb.width, rgb.height, 1, 1.0f);
    }
    Image refine(const Image& depth, const Image&, const Mask&, const Image&, const ViewSpec&) const override {
        return depth;
    }
    Eigen::Matrix3d target_ = Eigen::Matrix3d::Identity();
    int bad_;
};

}  // namespace

TEST_CASE("align_scale closed form cases") {
    const Image r = rwtest::random_image(16, 16, 1, 1, 0.5f, 4.0f);
    const Mask all(16, 16, 1);
    CHECK(align_scale(r, r, all) == doctest::Approx(1.0));
    Image twice = r;
    for (auto& v : twice.data) v *= 2.0f;
    CHECK(align_scale(twice, r, all) == doctest::Approx(0.5));
    CHECK_THROWS_AS(align_scale(r, r, Mask(16, 16)), Error);
    CHECK_THROWS_AS(align_scale(Image(16, 16, 1), r, all), Error);
}

TEST_CASE("align_scale matches a grid search of the objective and ignores invalid pixels") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Image pred = rwtest::random_image(12, 9, 1, 10 + seed, 0.5f, 3.0f);
        Image rendered = rwtest::random_image(12, 9, 1, 20 + seed, 0.5f, 5.0f);
        rendered.at(3, 3) = 0.0f;
        const Mask mask = rwtest::random_mask(12, 9, 0.6, 30 + seed);
        const double s = align_scale(pred, rendered, mask);
        double best_s = 0.0, best = std::numeric_limits<double>::infinity();
        for (int i = 0; i <= 50000; ++i) {
            const double c = i * 1e-4;
            const double e = objective(pred, rendered, mask, c);
            if (e < best) {
                best = e;
                best_s = c;
            }
        }
        CHECK(std::abs(s - best_s) <= 1e-4);
        CHECK(objective(pred, rendered, mask, s) <= objective(pred, rendered, mask, s * (1 + 1e-3)));
        CHECK(objective(pred, rendered, mask, s) <= objective(pred, rendered, mask, s * (1 - 1e-3)));
    }
}

TEST_CASE("fuse_distances: identity, coincident mean and center check") {
    const auto views = make_pano_views(Vector3d::Zero(), 8, 98.0, 16, 45.0);
    DistanceGrid d{rwtest::random_image(16, 16, 1, 3, 1.0f, 3.0f), rwtest::random_mask(16, 16, 0.8, 4)};
    const auto one = fuse_distances({views[0]}, {d});
    for (size_t p = 0; p < d.valid.data.size(); ++p) {
        CHECK(one[0].valid.data[p] == d.valid.data[p]);
        if (d.valid.data[p]) CHECK(one[0].values.data[p] == d.values.data[p]);
    }
    DistanceGrid e = d;
    e.valid = Mask(16, 16, 1);
    for (auto& v : e.values.data) v += 0.2f;
    DistanceGrid f = e;
    for (auto& v : f.values.data) v -= 0.2f;
    const auto two = fuse_distances({views[0], views[0]}, {f, e});
    for (size_t p = 0; p < e.values.data.size(); ++p) CHECK(two[0].values.data[p] == doctest::Approx(f.values.data[p] + 0.1));
    ViewSpec moved = views[1];
    moved.pose.translation.x() += 0.1;
    CHECK_THROWS_AS(fuse_distances({views[0], moved}, {d, d}), Error);
}

TEST_CASE("fuse_distances keeps a consistent spherical distance field") {
    // Ellipsoid around the center: smooth in every direction.
    const Vector3d c(0.2, 0.1, -0.3), axes(2.0, 1.3, 2.5);
    const auto views = make_pano_views(c, 8, 98.0, 96, 45.0);
    std::vector<DistanceGrid> d;
    for (const auto& v : views) {
        DistanceGrid g{Image(96, 96, 1), Mask(96, 96, 1)};
        for (int y = 0; y < 96; ++y)
            for (int x = 0; x < 96; ++x)
                g.values.at(x, y) =
                    static_cast<float>(1.0 / rwtest::oracle_world_ray(v, x, y).cwiseQuotient(axes).norm());
        d.push_back(g);
    }
    const auto out = fuse_distances(views, d);
    for (size_t i = 0; i < views.size(); ++i) {
        CHECK(rwtest::max_abs_diff(out[i].values, d[i].values) < 1e-3);
        CHECK(out[i].valid.count() == 96 * 96);
    }
}

// Which wall a ray from `o` hits first.
TEST_CASE("scaled oracle predictor with full anchors recovers the ground truth") {
    // Bilinear error on a wall grows with the squared cell angle; 256 cells
    // per view keep it well under a millimeter.
    const FanScene s = fan_scene(256, false);
    const OracleDepthPredictor pred(s.room, 2.0);
    const PanoramaDepthResult r = inpaint_panorama_depth(input_of(s), pred, {});
    for (double sc : r.scales) CHECK(sc == doctest::Approx(0.5).epsilon(1e-6));

    // Per view after fusion.
    for (size_t i = 0; i < s.views.size(); ++i) {
        const DistanceGrid gt = depth_to_distance(s.rendered[i], s.views[i]);
        const Mask ok = smooth_cells(s.views[i], s.center, 2);
        double worst = 0.0;
        for (size_t p = 0; p < ok.data.size(); ++p)
            if (ok.data[p]) worst = std::max(worst, std::abs(static_cast<double>(r.view_distances[i].values.data[p]) - gt.values.data[p]));
        CHECK(ok.count() > ok.data.size() / 2);
        CHECK(worst < 1e-3);
    }

    // On the band against the analytic room distance.
    Image truth(s.band.width(), s.band.height(), 1);
    for (int y = 0; y < s.band.height(); ++y)
        for (int x = 0; x < s.band.width(); ++x)
            truth.at(x, y) = static_cast<float>(
                box_distance(s.center, rwtest::oracle_world_ray(s.band, x, y), Vector3d(2.0, 1.3, 2.5)));
    const Mask ok = smooth_cells(s.band, s.center, 2);
    double worst = 0.0;
    for (size_t p = 0; p < ok.data.size(); ++p) {
        REQUIRE(r.band.valid.data[p]);
        if (ok.data[p]) worst = std::max(worst, std::abs(static_cast<double>(r.band.values.data[p]) - truth.data[p]));
    }
    CHECK(worst < 1e-3);
    CHECK(rwtest::mean_abs_diff(r.band.values, truth) < 5e-3);
}

TEST_CASE("zero refinement rounds give the fused initial prediction") {
    const FanScene s = fan_scene(32, true);
    const OracleDepthPredictor pred(s.room, 1.7);
    const PanoramaDepthResult r = inpaint_panorama_depth(input_of(s), pred, {0, 1e-3});
    std::vector<DistanceGrid> init;
    for (size_t i = 0; i < s.views.size(); ++i) {
        Image p = pred.predict_initial(s.images[i], s.views[i]);
        const double sc = align_scale(p, s.rendered[i], s.anchors[i]);
        for (auto& v : p.data) v = static_cast<float>(v * sc);
        init.push_back(depth_to_distance(p, s.views[i]));
    }
    const auto fused = fuse_distances(s.views, init);
    for (size_t i = 0; i < s.views.size(); ++i) CHECK(r.view_distances[i].values.data == fused[i].values.data);
}

TEST_CASE("observed band cells take the rendered distance exactly") {
    const FanScene s = fan_scene(32, false);
    const HarmonicDepthPredictor pred;
    const RenderOutput br = render(s.room, s.band);
    const DistanceGrid band_rendered{br.depth, br.coverage};
    PanoramaDepthInput in = input_of(s);
    in.band_rendered = &band_rendered;
    in.band_observed = &br.coverage;
    const PanoramaDepthResult r = inpaint_panorama_depth(in, pred, {});
    for (size_t p = 0; p < br.coverage.data.size(); ++p)
        if (br.coverage.data[p]) CHECK(r.band.values.data[p] == br.depth.data[p]);
}

TEST_CASE("harmonic predictor with partial anchors gives consistent fused distances") {
    const FanScene s = fan_scene(48, true);
    const HarmonicDepthPredictor pred;
    const PanoramaDepthResult r = inpaint_panorama_depth(input_of(s), pred, {});
    CHECK(cross_view_disagreement(s.views, r.view_distances) < 1e-2);
    for (const auto& d : r.view_distances) CHECK(d.valid.count() == d.valid.data.size());
}

TEST_CASE("anchored pixels survive every refinement round") {
    const FanScene s = fan_scene(32, true);
    const HarmonicDepthPredictor pred;
    for (int rounds : {0, 1, 3}) {
        for (size_t i = 0; i < s.views.size(); ++i) {
            const Image d = complete_view_depth(s.images[i], s.views[i], s.rendered[i], s.anchors[i], pred, {rounds, 1e-3});
            for (size_t p = 0; p < d.data.size(); ++p) {
                CHECK(d.data[p] > 0.0f);
                if (s.anchors[i].data[p]) CHECK(std::abs(d.data[p] - s.rendered[i].data[p]) < 1e-3);
            }
        }
    }
}

TEST_CASE("harmonic refine fills a constant-depth hole exactly") {
    const ViewSpec v = ViewSpec::perspective(CameraIntrinsics::from_fov(40, 30, 60.0));
    const Image anchor(40, 30, 1, 2.5f);
    Mask m(40, 30, 1);
    for (int y = 8; y < 20; ++y)
        for (int x = 10; x < 30; ++x) m.at(x, y) = 0;
    const HarmonicDepthPredictor pred;
    const Image out = pred.refine(pred.predict_initial(Image(40, 30, 3), v), anchor, m, Image(40, 30, 3), v);
    for (float d : out.data) CHECK(d == doctest::Approx(2.5).epsilon(1e-5));
}

TEST_CASE("predictor failures name the view") {
    FanScene s = fan_scene(16, false);
    ThrowingPredictor pred(3);
    pred.target_ = s.views[3].pose.rotation;
    try {
        inpaint_panorama_depth(input_of(s), pred, {});
        FAIL("expected E_DEPTH");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Depth);
        CHECK(std::string(e.what()).find("view 3") != std::string::npos);
    }
}
