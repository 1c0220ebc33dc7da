#include <catch2/catch_amalgamated.hpp>

#include "panoforge/geometry.hpp"
#include "panoforge/rng.hpp"
#include "test_support.hpp"

using namespace panoforge;

namespace {

// Independent arithmetic path: plain 3-vector multiply then dehomogenize.
Vec2 transfer_oracle(const Homography& h, double x, double y) {
    const double v0 = h.m[0] * x + h.m[1] * y + h.m[2];
    const double v1 = h.m[3] * x + h.m[4] * y + h.m[5];
    const double v2 = h.m[6] * x + h.m[7] * y + h.m[8];
    return {v0 / v2, v1 / v2};
}

double homography_distance(Homography a, Homography b) {
    a.normalize();
    b.normalize();
    double d = 0;
    for (int i = 0; i < 9; ++i) d += (a.m[i] - b.m[i]) * (a.m[i] - b.m[i]);
    return std::sqrt(d);
}

Homography random_well_conditioned(Rng& rng) {
    return Homography::from_array({rng.uniform(0.7, 1.3), rng.uniform(-0.2, 0.2),
                                   rng.uniform(-30, 30), rng.uniform(-0.2, 0.2),
                                   rng.uniform(0.7, 1.3), rng.uniform(-30, 30),
                                   rng.uniform(-1e-4, 1e-4), rng.uniform(-1e-4, 1e-4), 1.0});
}

}  // namespace

TEST_CASE("transfer identity and translation") {
    const Vec2 p = transfer(Homography::identity(), 7, -3);
    CHECK(p.x == Catch::Approx(7.0));
    CHECK(p.y == Catch::Approx(-3.0));

    const Vec2 t = transfer(Homography::translation(5, 2), 0, 0);
    CHECK(t.x == Catch::Approx(5.0));
    CHECK(t.y == Catch::Approx(2.0));
}

TEST_CASE("transfer equals the direct oracle") {
    Rng rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        const Homography h = random_well_conditioned(rng);
        const double x = rng.uniform(-50, 50), y = rng.uniform(-50, 50);
        const Vec2 got = transfer(h, x, y);
        const Vec2 want = transfer_oracle(h, x, y);
        CHECK(got.x == Catch::Approx(want.x).margin(1e-9));
        CHECK(got.y == Catch::Approx(want.y).margin(1e-9));
    }
}

TEST_CASE("transfer rejects points at infinity") {
    const Homography h = Homography::from_array({1, 0, 0, 0, 1, 0, 1, 0, 0});
    CHECK_THROWS_AS(transfer(h, 0, 5), GeometryError);
}

TEST_CASE("DLT on the unit square") {
    const std::vector<Vec2> square{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    const Homography h = estimate_homography_dlt(square, square);
    CHECK(homography_distance(h, Homography::identity()) < 1e-10);

    std::vector<Vec2> doubled;
    for (const Vec2& p : square) doubled.push_back({2 * p.x, 2 * p.y});
    const Homography hs = estimate_homography_dlt(square, doubled);
    const Homography want = Homography::from_array({2, 0, 0, 0, 2, 0, 0, 0, 1});
    CHECK(homography_distance(hs, want) < 1e-10);
}

TEST_CASE("DLT recovers synthetic homographies exactly") {
    Rng rng(17);
    for (const int n : {4, 10, 20, 100}) {
        const Homography h_true = random_well_conditioned(rng);
        std::vector<Vec2> a, b;
        for (int i = 0; i < n; ++i) {
            // Spread points so no 4-subset is near-collinear.
            const Vec2 p{rng.uniform(0, 200) + (i % 2) * 37.0, rng.uniform(0, 200) + (i % 3) * 23.0};
            a.push_back(p);
            b.push_back(transfer(h_true, p.x, p.y));
        }
        const Homography est = estimate_homography_dlt(a, b);
        CHECK(homography_distance(est, h_true) < 1e-8);
    }
}

TEST_CASE("DLT rejects degenerate configurations") {
    // All points collinear.
    std::vector<Vec2> line{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
    CHECK_THROWS_AS(estimate_homography_dlt(line, line), GeometryError);
    std::vector<Vec2> three{{0, 0}, {1, 0}, {0, 1}};
    CHECK_THROWS_AS(estimate_homography_dlt(three, three), GeometryError);
}

TEST_CASE("compose is consistent with sequential transfer") {
    Rng rng(19);
    for (int trial = 0; trial < 50; ++trial) {
        const Homography h1 = random_well_conditioned(rng);
        const Homography h2 = random_well_conditioned(rng);
        const double x = rng.uniform(-20, 20), y = rng.uniform(-20, 20);
        const Vec2 direct = transfer(compose(h1, h2), x, y);
        const Vec2 inner = transfer(h2, x, y);
        const Vec2 chained = transfer(h1, inner.x, inner.y);
        CHECK(direct.x == Catch::Approx(chained.x).margin(1e-9));
        CHECK(direct.y == Catch::Approx(chained.y).margin(1e-9));
    }
}

TEST_CASE("warp_image identity and translation") {
    ImageF32 img(32, 24, 1);
    Rng rng(23);
    for (float& v : img.data) v = static_cast<float>(rng.uniform());
    const WarpResult ident = warp_image(img, Homography::identity(), 32, 24);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        CHECK(std::abs(ident.image.data[i] - img.data[i]) < 1e-6f);

    const WarpResult shifted = warp_image(img, Homography::translation(10, 0), 48, 24);
    for (int y = 0; y < 24; ++y)
        for (int x = 10; x < 42; ++x)
            CHECK(std::abs(shifted.image.at(x, y) - img.at(x - 10, y)) < 1e-6f);
}

TEST_CASE("warp alpha mask matches the inverse-map predicate") {
    ImageF32 img(40, 30, 1, 0.5f);
    Rng rng(29);
    const Homography h = testsup::make_similarity(20, 15, 0.3, 1.1, 4, -2);
    const WarpResult wr = warp_image(img, h, 50, 40);
    const Homography hinv = h.inverse();
    for (int y = 0; y < 40; ++y)
        for (int x = 0; x < 50; ++x) {
            const Vec2 s = transfer(hinv, x, y);
            const bool inside = s.x >= 0 && s.y >= 0 && s.x <= 39 && s.y <= 29;
            CHECK(wr.alpha.at(x, y) == (inside ? 1.f : 0.f));
        }
}

TEST_CASE("warp round trip on a smooth image keeps PSNR >= 40 dB") {
    ImageF32 img(96, 96, 1);
    for (int y = 0; y < 96; ++y)
        for (int x = 0; x < 96; ++x)
            // Bilinear sampling is exact on a linear ramp, so only the warp
            // geometry itself contributes error.
            img.at(x, y) = 0.2f + 0.004f * x + 0.003f * y;
    const Homography h = testsup::make_similarity(48, 48, 0.25, 1.05, 3, 2);
    const WarpResult fwd = warp_image(img, h, 96, 96);
    const WarpResult back = warp_image(fwd.image, h.inverse(), 96, 96);

    double mse = 0, count = 0;
    for (int y = 0; y < 96; ++y)
        for (int x = 0; x < 96; ++x) {
            // Doubly-valid region: the round trip stayed inside both frames.
            if (back.alpha.at(x, y) <= 0) continue;
            const Vec2 there = transfer(h, x, y);
            if (there.x < 1 || there.y < 1 || there.x > 94 || there.y > 94) continue;
            // The backward pass samples bilinearly from the intermediate
            // frame, so all four touched pixels there must be valid.
            const int ix = static_cast<int>(there.x), iy = static_cast<int>(there.y);
            if (fwd.alpha.at(ix, iy) <= 0 || fwd.alpha.at(ix + 1, iy) <= 0 ||
                fwd.alpha.at(ix, iy + 1) <= 0 || fwd.alpha.at(ix + 1, iy + 1) <= 0)
                continue;
            const double d = back.image.at(x, y) - img.at(x, y);
            mse += d * d;
            ++count;
        }
    REQUIRE(count > 1000);
    const double psnr = 10 * std::log10(1.0 / (mse / count));
    CHECK(psnr >= 40.0);
}

TEST_CASE("homography text format round trip") {
    Rng rng(31);
    const Homography h = random_well_conditioned(rng);
    const Homography parsed = parse_homography_text(format_homography_text(h));
    CHECK(homography_distance(h, parsed) < 1e-12);
    CHECK_THROWS_AS(parse_homography_text("1 2 3"), GeometryError);
}
