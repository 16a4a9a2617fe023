#include "doctest.h"
#include "fixtures.hpp"

#include "roomweave/error.hpp"
#include "roomweave/geometry.hpp"

using namespace roomweave;
using Eigen::Vector3d;

namespace {

CameraIntrinsics k100() {
    CameraIntrinsics k;
    k.fx = k.fy = 100.0;
    k.cx = k.cy = 64.0;
    k.width = k.height = 256;
    return k;
}

RigidTransform random_pose(std::mt19937_64& rng, const Vector3d& center) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const Eigen::Quaterniond q = Eigen::Quaterniond(u(rng), u(rng), u(rng), u(rng)).normalized();
    RigidTransform t;
    t.rotation = q.toRotationMatrix();
    t.translation = center;
    return t;
}

}  // namespace

TEST_CASE("pixel_to_ray: principal point and a 45 degree pixel") {
    const ViewSpec v = ViewSpec::perspective(k100());
    const Vector3d c = pixel_to_ray(v, 64, 64);
    CHECK(c.x() == doctest::Approx(0.0));
    CHECK(c.z() == doctest::Approx(1.0));
    const Vector3d d = pixel_to_ray(v, 164, 64);
    CHECK(d.x() == doctest::Approx(0.70711).epsilon(1e-5));
    CHECK(d.y() == doctest::Approx(0.0));
    CHECK(d.z() == doctest::Approx(0.70711).epsilon(1e-5));
}

TEST_CASE("pixel_to_ray: equirect center pixel looks forward") {
    const ViewSpec v = ViewSpec::equirect(2048, 1024);
    const Vector3d d = pixel_to_ray(v, 1023.5, 511.5);
    CHECK(d.x() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(d.y() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(d.z() == doctest::Approx(1.0));
}

TEST_CASE("ray_to_pixel: +x maps to u = 1535.5 on a 2048 wide equirect") {
    const PixelHit h = ray_to_pixel(ViewSpec::equirect(2048, 1024), Vector3d(1, 0, 0));
    CHECK(h.u == doctest::Approx(1535.5));
    CHECK(h.v == doctest::Approx(511.5));
    CHECK(h.in_frustum);
}

TEST_CASE("ray_to_pixel: direction behind a pinhole camera is rejected") {
    CHECK_FALSE(ray_to_pixel(ViewSpec::perspective(k100()), Vector3d(0, 0, -1)).in_frustum);
}

TEST_CASE("pixel_to_ray rejects out-of-bounds pixels") {
    const ViewSpec v = ViewSpec::perspective(k100());
    CHECK_THROWS_AS(pixel_to_ray(v, -0.6, 3), Error);
    CHECK_THROWS_AS(pixel_to_ray(v, 3, 255.6), Error);
    CHECK_NOTHROW(pixel_to_ray(v, -0.5, 255.5));
}

TEST_CASE("round trips and unit norm on random pixels") {
    std::mt19937_64 rng(11);
    const std::vector<ViewSpec> views = {
        ViewSpec::perspective(k100(), random_pose(rng, Vector3d(1, 2, 3))),
        ViewSpec::equirect(2048, 1024, random_pose(rng, Vector3d::Zero())),
        ViewSpec::equirect_band(512, 128, -M_PI / 4, M_PI / 4, random_pose(rng, Vector3d::Zero())),
    };
    for (const auto& v : views) {
        std::uniform_real_distribution<double> u(-0.5, v.width() - 0.5), w(-0.5, v.height() - 0.5);
        double worst = 0.0, norm_err = 0.0;
        for (int i = 0; i < 1000; ++i) {
            const double pu = u(rng), pv = w(rng);
            const Vector3d d = pixel_to_ray(v, pu, pv);
            norm_err = std::max(norm_err, std::abs(d.norm() - 1.0));
            const PixelHit h = ray_to_pixel(v, d);
            double du = std::abs(h.u - pu);
            if (v.is_equirect()) du = std::min(du, v.width() - du);
            worst = std::max({worst, du, std::abs(h.v - pv)});
        }
        CHECK(worst < 1e-4);
        CHECK(norm_err < 1e-7);
    }
}

TEST_CASE("library projection agrees with the written-out oracle") {
    std::mt19937_64 rng(5);
    const ViewSpec p = ViewSpec::perspective(k100(), random_pose(rng, Vector3d::Zero()));
    const ViewSpec e = ViewSpec::equirect_band(256, 64, -M_PI / 4, M_PI / 4, random_pose(rng, Vector3d::Zero()));
    for (const auto& v : {p, e})
        for (int i = 0; i < 200; ++i) {
            const double x = std::uniform_real_distribution<double>(0, v.width() - 1)(rng);
            const double y = std::uniform_real_distribution<double>(0, v.height() - 1)(rng);
            CHECK((pixel_to_ray(v, x, y) - rwtest::oracle_world_ray(v, x, y)).norm() < 1e-12);
        }
}

TEST_CASE("depth and distance conversion") {
    const ViewSpec v = ViewSpec::perspective(k100());
    Image depth(256, 256, 1);
    depth.at(64, 64) = 2.0f;
    depth.at(164, 64) = 2.0f;  // ray (1, 0, 1)
    depth.at(114, 64) = 1.0f;  // ray (0.5, 0, 1)
    const DistanceGrid d = depth_to_distance(depth, v);
    CHECK(d.values.at(64, 64) == doctest::Approx(2.0));
    CHECK(d.values.at(164, 64) == doctest::Approx(2.82843).epsilon(1e-5));
    CHECK(d.values.at(114, 64) == doctest::Approx(std::sqrt(1.25)));
    CHECK(d.valid.at(0, 0) == 0);
    CHECK(d.valid.count() == 3);

    const Image rand = rwtest::random_image(256, 256, 1, 3, 0.5f, 4.0f);
    const Image back = distance_to_depth(depth_to_distance(rand, v), v);
    CHECK(rwtest::max_abs_diff(rand, back) < 1e-6);
    CHECK_THROWS_AS(depth_to_distance(depth, ViewSpec::equirect(128, 64)), Error);
}

TEST_CASE("rigid transforms") {
    const RigidTransform t = RigidTransform::from_yaw_elevation(Vector3d(1, 2, 3), M_PI / 2, 0.0);
    CHECK((t.forward() - Vector3d(1, 0, 0)).norm() < 1e-12);
    const RigidTransform up = RigidTransform::from_yaw_elevation(Vector3d::Zero(), 0.0, 0.3);
    CHECK(up.forward().y() < 0.0);  // positive elevation looks toward -y (up)
    const RigidTransform r = RigidTransform::from_matrix(t.matrix());
    CHECK((r.rotation - t.rotation).norm() < 1e-15);
    CHECK((r.translation - t.translation).norm() < 1e-15);
    CHECK(t.is_rigid());
    RigidTransform bad;
    bad.rotation(0, 0) = 2.0;
    CHECK_FALSE(bad.is_rigid());
    CHECK((t.to_local(t.apply(Vector3d(0.3, -1, 2))) - Vector3d(0.3, -1, 2)).norm() < 1e-12);
}

TEST_CASE("scaled views see the ray through the block center") {
    const ViewSpec v = ViewSpec::perspective(CameraIntrinsics::from_fov(512, 512, 98.0));
    const ViewSpec s = v.scaled(8);
    for (int x : {0, 17, 63})
        CHECK((camera_ray(s, x, 5) - camera_ray(v, 8 * x + 3.5, 8 * 5 + 3.5)).norm() < 1e-12);
    const ViewSpec e = ViewSpec::equirect_band(2048, 512, -M_PI / 4, M_PI / 4);
    const ViewSpec es = e.scaled(8);
    CHECK((camera_ray(es, 100, 20) - camera_ray(e, 803.5, 163.5)).norm() < 1e-12);
    CHECK_THROWS_AS(v.scaled(3), Error);
}

TEST_CASE("make_pano_views: default 8-view 98 deg fan and coverage errors") {
    const auto views = make_pano_views(Vector3d(0.5, 0, 0), 8, 98.0, 512);
    REQUIRE(views.size() == 8);
    for (int i = 0; i < 8; ++i) {
        const double yaw = std::atan2(views[i].pose.forward().x(), views[i].pose.forward().z());
        double expect = i * M_PI / 4;
        if (expect > M_PI) expect -= 2 * M_PI;
        CHECK(yaw == doctest::Approx(expect).epsilon(1e-12));
        CHECK(views[i].width() == 512);
        CHECK(std::abs(views[i].pose.forward().y()) < 1e-12);
    }
    // half-fov 49 degrees on either side of yaws 45 apart: neighbours overlap by 53
    const auto& k = views[0].intrinsics();
    const double half = std::atan(0.5 * k.width / k.fx) * 180.0 / M_PI;
    CHECK(half == doctest::Approx(49.0));
    CHECK(2 * half - 45.0 == doctest::Approx(53.0));
    CHECK_THROWS_AS(make_pano_views(Vector3d::Zero(), 8, 88.0), Error);
    CHECK_THROWS_AS(make_pano_views(Vector3d::Zero(), 4, 90.0), Error);
    CHECK_THROWS_AS(make_pano_views(Vector3d::Zero(), 2, 179.0), Error);
}

TEST_CASE("make_pano_views covers every cell of the 2048x512 band") {
    const auto views = make_pano_views(Vector3d::Zero(), 8, 98.0, 512);
    const ViewSpec band = ViewSpec::equirect_band(2048, 512, -M_PI / 4, M_PI / 4);
    size_t uncovered = 0;
    for (int y = 0; y < 512; ++y)
        for (int x = 0; x < 2048; ++x) {
            const Vector3d d = pixel_to_ray(band, x, y);
            bool hit = false;
            for (const auto& v : views) {
                const PixelHit h = ray_to_pixel(v, d);
                if (h.in_frustum && h.u >= 0 && h.u <= 511 && h.v >= 0 && h.v <= 511) {
                    hit = true;
                    break;
                }
            }
            uncovered += !hit;
        }
    CHECK(uncovered == 0);
}

TEST_CASE("warp_grid: identity, disjoint frusta and constant fields") {
    const CameraIntrinsics k = CameraIntrinsics::from_fov(64, 64, 60.0);
    const ViewSpec a = ViewSpec::perspective(k);
    const Image g = rwtest::random_image(64, 64, 3, 9);
    const WarpResult same = warp_grid(a, a, g);
    CHECK(same.mask.count() == 64u * 64u);
    CHECK(rwtest::max_abs_diff(same.values, g) == 0.0);

    const ViewSpec back = ViewSpec::perspective(k, RigidTransform::from_yaw_elevation(Vector3d::Zero(), M_PI, 0));
    CHECK(warp_grid(a, back, g).mask.count() == 0);

    std::mt19937_64 rng(2);
    const Image seven(64, 64, 1, 7.0f);
    for (int i = 0; i < 10; ++i) {
        const ViewSpec r = ViewSpec::perspective(k, random_pose(rng, Vector3d::Zero()));
        const WarpResult w = warp_grid(a, r, seven);
        for (size_t p = 0; p < w.mask.data.size(); ++p) {
            if (w.mask.data[p]) CHECK(w.values.data[p] == doctest::Approx(7.0));
            else CHECK(w.values.data[p] == 0.0f);
        }
    }
    const ViewSpec moved = ViewSpec::perspective(k, RigidTransform::from_yaw_elevation(Vector3d(0, 0, 1), 0, 0));
    CHECK_THROWS_AS(warp_grid(a, moved, g), Error);
}

TEST_CASE("warp_grid matches brute-force resampling on latent grids") {
    const auto views = make_pano_views(Vector3d::Zero(), 8, 98.0, 512);
    const ViewSpec band = ViewSpec::equirect_band(2048, 512, -M_PI / 4, M_PI / 4);
    const Image g = rwtest::random_image(64, 64, 4, 21);
    const Mask valid = rwtest::random_mask(64, 64, 0.9, 4);
    for (int i = 0; i < 8; i += 3)
        for (int j = 0; j < 8; ++j) {
            const WarpResult w = warp_grid(views[i], views[j], g, &valid);
            const auto o = rwtest::oracle_warp(views[i], views[j], g, 8, &valid);
            CHECK(w.mask.data == o.mask.data);
            CHECK(rwtest::max_abs_diff(w.values, o.values) < 1e-5);
        }
    // equirect source wraps in longitude
    const Image bg = rwtest::random_image(256, 64, 2, 8);
    for (int j = 0; j < 8; j += 2) {
        const WarpResult w = warp_grid(band, views[j], bg);
        const auto o = rwtest::oracle_warp(band, views[j], bg, 8);
        CHECK(w.mask.data == o.mask.data);
        CHECK(rwtest::max_abs_diff(w.values, o.values) < 1e-5);
    }
}

TEST_CASE("warped distance equals the source distance along the same ray") {
    // Distance to a sphere of radius 3 around the shared center is 3 everywhere.
    const auto views = make_pano_views(Vector3d::Zero(), 8, 98.0, 128);
    const Image sphere(128, 128, 1, 3.0f);
    const WarpResult w = warp_grid(views[0], views[1], sphere);
    REQUIRE(w.mask.any());
    for (size_t p = 0; p < w.mask.data.size(); ++p)
        if (w.mask.data[p]) CHECK(std::abs(w.values.data[p] - 3.0f) < 1e-6);
}
