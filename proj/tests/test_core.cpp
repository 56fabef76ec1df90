#include "doctest.h"

#include <cmath>

#include "stclust/core.hpp"
#include "stclust/random.hpp"

using namespace stclust;

namespace {

Mask columns(int w, int h, int ncols) {
    Mask m(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ncols; ++x) m.at(x, y) = 1.0f;
    return m;
}

Mask random_mask(Rng& rng, int w, int h, double p) {
    Mask m(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m.at(x, y) = rng.bernoulli(p) ? 1.0f : 0.0f;
    return m;
}

}  // namespace

TEST_CASE("mask_iou examples") {
    const Mask a = columns(4, 4, 2);
    const Mask b = columns(4, 4, 1);
    CHECK(mask_iou(a, a) == 1.0);
    CHECK(mask_iou(a, b) == doctest::Approx(0.5).epsilon(1e-12));

    Mask left = columns(4, 4, 1);
    Mask right(4, 4);
    for (int y = 0; y < 4; ++y) right.at(3, y) = 1.0f;
    CHECK(mask_iou(left, right) == 0.0);
    CHECK(mask_iou(Mask(4, 4), Mask(4, 4)) == 0.0);
    CHECK_THROWS_AS(mask_iou(Mask(4, 4), Mask(5, 4)), Error);
}

TEST_CASE("mask_iou is symmetric, bounded, and 1 only for equal supports") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const Mask a = random_mask(rng, 6, 5, 0.4);
        const Mask b = random_mask(rng, 6, 5, 0.4);
        const double ab = mask_iou(a, b);
        CHECK(ab == mask_iou(b, a));
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0);
        if (ab == 1.0) CHECK(a.binary() == b.binary());
    }
}

TEST_CASE("mask_iou uses the binary support of appearance masks") {
    Mask a(3, 3, 3), b(3, 3, 1);
    a.at(1, 1, 2) = 0.25f;
    b.at(1, 1) = 1.0f;
    CHECK(mask_iou(a, b) == 1.0);
}

TEST_CASE("rle examples") {
    CHECK(rle_encode(Mask(4, 4)) == "16");
    CHECK(rle_encode(columns(4, 4, 4)) == "0 16");
    // column-major: first column is foreground
    CHECK(rle_encode(columns(4, 4, 1)) == "0 4 12");
    CHECK(rle_decode("0 4 12", 4, 4) == columns(4, 4, 1));
}

TEST_CASE("rle round trip on random masks up to 64x64") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const int w = 1 + static_cast<int>(rng.below(64));
        const int h = 1 + static_cast<int>(rng.below(64));
        const Mask m = random_mask(rng, w, h, rng.uniform());
        CHECK(rle_decode(rle_encode(m), w, h) == m);
    }
    Mask rgb(5, 4, 3);
    rgb.at(2, 1, 0) = 0.5f;
    CHECK(rle_decode(rle_encode(rgb), 5, 4) == rgb.binary());
}

TEST_CASE("rle_decode rejects bad input") {
    CHECK_THROWS_AS(rle_decode("3 x", 2, 2), Error);
    CHECK_THROWS_AS(rle_decode("3", 2, 2), Error);
    CHECK_THROWS_AS(rle_decode("3 3", 2, 2), Error);
    CHECK_THROWS_AS(rle_decode("-1 5", 2, 2), Error);
}

TEST_CASE("normalize_box examples and round trip") {
    const auto v = normalize_box({64, 64, 28, 28}, 128, 128);
    CHECK(v[0] == 0.5);
    CHECK(v[1] == 0.5);
    CHECK(v[2] == 0.21875);
    CHECK(v[3] == 0.21875);
    const auto full = normalize_box({50, 20, 100, 40}, 100, 40);
    CHECK(full == std::array<double, 4>{0.5, 0.5, 1.0, 1.0});
    CHECK_THROWS_AS(normalize_box({10, 10, 0, 5}, 128, 128), Error);
    CHECK_THROWS_AS(normalize_box({10, 10, 5, 5}, 0, 128), Error);

    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        const BBox b{rng.uniform(10, 90), rng.uniform(10, 50), rng.uniform(1, 20), rng.uniform(1, 20)};
        const auto n = normalize_box(b, 100, 60);
        const BBox r = denormalize_box(n, 100, 60);
        CHECK(std::abs(r.cx - b.cx) < 1e-9);
        CHECK(std::abs(r.cy - b.cy) < 1e-9);
        CHECK(std::abs(r.w - b.w) < 1e-9);
        CHECK(std::abs(r.h - b.h) < 1e-9);
    }
}

TEST_CASE("support helpers") {
    Mask m(10, 8);
    for (int y = 2; y < 5; ++y)
        for (int x = 3; x < 7; ++x) m.at(x, y) = 1.0f;
    const PixelRect r = support_rect(m);
    CHECK(r.x0 == 3);
    CHECK(r.x1 == 7);
    CHECK(r.y0 == 2);
    CHECK(r.y1 == 5);
    const BBox b = support_box(m);
    CHECK(b.cx == 5.0);
    CHECK(b.cy == 3.5);
    CHECK(b.w == 4.0);
    CHECK(b.h == 3.0);
    const Mask c = crop_to_support(m);
    CHECK(c.width() == 4);
    CHECK(c.height() == 3);
    CHECK(c.support_area() == 12);
    CHECK(support_rect(Mask(3, 3)).empty());
    CHECK_THROWS_AS(crop_to_support(Mask(3, 3)), Error);
}

TEST_CASE("appearance mask keeps colour inside the support only") {
    Image img(2, 1);
    img.rgb = {255, 0, 0, 0, 255, 0};
    Mask m(2, 1);
    m.at(0, 0) = 1.0f;
    const Mask a = appearance_mask(m, img);
    CHECK(a.channels() == 3);
    CHECK(a.at(0, 0, 0) == 1.0f);
    CHECK(a.at(1, 0, 1) == 0.0f);
    CHECK_THROWS_AS(appearance_mask(Mask(3, 1), img), Error);
}
