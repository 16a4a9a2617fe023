#include "doctest.h"
#include "fixtures.hpp"

#include "roomweave/error.hpp"
#include "roomweave/image.hpp"

using namespace roomweave;

TEST_CASE("mask count, invert and any") {
    Mask m(4, 3);
    CHECK_FALSE(m.any());
    m.at(1, 2) = 1;
    m.at(3, 0) = 1;
    CHECK(m.count() == 2);
    const Mask inv = invert(m);
    CHECK(inv.count() == 10);
    CHECK(inv.at(1, 2) == 0);
    CHECK(invert(inv).data == m.data);
}

TEST_CASE("dilate grows by the 8-neighbourhood and can wrap columns") {
    Mask m(6, 5);
    m.at(0, 2) = 1;
    const Mask d = dilate(m, 1);
    CHECK(d.count() == 6);  // 2 columns x 3 rows, clipped at the left edge
    CHECK(d.at(1, 1) == 1);
    CHECK(d.at(5, 2) == 0);
    const Mask w = dilate(m, 1, true);
    CHECK(w.count() == 9);
    CHECK(w.at(5, 1) == 1);
    CHECK(w.at(5, 3) == 1);
    CHECK(dilate(m, 0).data == m.data);
}

TEST_CASE("downsample_any marks a cell when any source pixel is set") {
    Mask m(4, 4);
    m.at(3, 3) = 1;
    const Mask d = downsample_any(m, 2);
    REQUIRE(d.width == 2);
    CHECK(d.count() == 1);
    CHECK(d.at(1, 1) == 1);
    CHECK_THROWS_AS(downsample_any(m, 3), Error);
}

TEST_CASE("crop_cyclic wraps around the right edge") {
    Image img(5, 2, 1);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 5; ++x) img.at(x, y) = static_cast<float>(10 * y + x);
    const Image c = crop_cyclic(img, 3, 4);
    REQUIRE(c.width == 4);
    CHECK(c.at(0, 0) == 3.0f);
    CHECK(c.at(1, 0) == 4.0f);
    CHECK(c.at(2, 0) == 0.0f);
    CHECK(c.at(3, 1) == 11.0f);
    Mask m(5, 1);
    m.at(0, 0) = 1;
    CHECK(crop_cyclic(m, 4, 2).at(1, 0) == 1);
}

TEST_CASE("downsample_box averages blocks") {
    Image img(4, 2, 1);
    for (int x = 0; x < 4; ++x) {
        img.at(x, 0) = static_cast<float>(x);
        img.at(x, 1) = static_cast<float>(x + 4);
    }
    const Image d = downsample_box(img, 2);
    REQUIRE(d.width == 2);
    REQUIRE(d.height == 1);
    CHECK(d.at(0, 0) == doctest::Approx(2.5));  // (0 + 1 + 4 + 5) / 4
    CHECK(d.at(1, 0) == doctest::Approx(4.5));
    CHECK_THROWS_AS(downsample_box(img, 3), Error);
}

TEST_CASE("grayscale uses Rec.601 luma weights") {
    Image rgb(1, 1, 3);
    rgb.at(0, 0, 0) = 1.0f;
    rgb.at(0, 0, 1) = 0.5f;
    rgb.at(0, 0, 2) = 0.0f;
    CHECK(to_grayscale(rgb).at(0, 0) == doctest::Approx(0.299 + 0.2935));
}

TEST_CASE("error codes have stable names") {
    CHECK(std::string(error_code_name(ErrorCode::Scene)) == "E_SCENE");
    CHECK(std::string(error_code_name(ErrorCode::Mesh)) == "E_MESH");
    CHECK(std::string(error_code_name(ErrorCode::Config)) == "E_CONFIG");
    CHECK(std::string(error_code_name(ErrorCode::Bridge)) == "E_BRIDGE");
}
