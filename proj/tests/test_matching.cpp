#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "panoforge/matching.hpp"
#include "test_support.hpp"

using namespace panoforge;

namespace {

BinaryDescriptor random_desc(int bits, Rng& rng) {
    BinaryDescriptor d;
    d.length_bits = bits;
    d.bytes.resize(bits / 8);
    for (auto& b : d.bytes) b = static_cast<std::uint8_t>(rng.next_below(256));
    return d;
}

// Independent nearest-neighbor rescan.
std::vector<Match> bruteforce_oracle(const std::vector<BinaryDescriptor>& da,
                                     const std::vector<BinaryDescriptor>& db) {
    std::vector<Match> out;
    for (std::size_t q = 0; q < da.size(); ++q) {
        Match m{static_cast<int>(q), 0, hamming_distance(da[q], db[0])};
        for (std::size_t t = 1; t < db.size(); ++t) {
            const int d = hamming_distance(da[q], db[t]);
            if (d < m.distance) {
                m.distance = d;
                m.train_idx = static_cast<int>(t);
            }
        }
        out.push_back(m);
    }
    return out;
}

Keypoint kp(float x, float y) { return {x, y, 0, 0.f, 0.f}; }

}  // namespace

TEST_CASE("match_bruteforce identity and exact match") {
    Rng rng(301);
    std::vector<BinaryDescriptor> da;
    for (int i = 0; i < 10; ++i) da.push_back(random_desc(256, rng));
    const std::vector<Match> self = match_bruteforce(da, da);
    for (int i = 0; i < 10; ++i) {
        CHECK(self[i].query_idx == i);
        CHECK(self[i].train_idx == i);
        CHECK(self[i].distance == 0);
    }

    BinaryDescriptor zeros, ones;
    zeros.length_bits = ones.length_bits = 256;
    zeros.bytes.assign(32, 0);
    ones.bytes.assign(32, 0xFF);
    const std::vector<Match> m = match_bruteforce({zeros}, {ones, zeros});
    REQUIRE(m.size() == 1);
    CHECK(m[0].train_idx == 1);
    CHECK(m[0].distance == 0);
}

TEST_CASE("match_bruteforce equals the rescan oracle") {
    Rng rng(303);
    std::vector<BinaryDescriptor> da, db;
    for (int i = 0; i < 50; ++i) da.push_back(random_desc(512, rng));
    for (int i = 0; i < 50; ++i) db.push_back(random_desc(512, rng));
    const std::vector<Match> got = match_bruteforce(da, db);
    const std::vector<Match> want = bruteforce_oracle(da, db);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == want[i]);
}

TEST_CASE("match_bruteforce rejects bad inputs") {
    Rng rng(307);
    const std::vector<BinaryDescriptor> a{random_desc(256, rng)};
    const std::vector<BinaryDescriptor> b{random_desc(512, rng)};
    CHECK_THROWS_AS(match_bruteforce(a, b), std::invalid_argument);
    CHECK_THROWS_AS(match_bruteforce({}, a), std::invalid_argument);
}

TEST_CASE("filter_gms keeps dense identity matches") {
    // Keypoints every 10 px on a 400x400 canvas: four per 20 px grid cell.
    std::vector<Keypoint> kps;
    for (int y = 5; y < 400; y += 10)
        for (int x = 5; x < 400; x += 10) kps.push_back(kp(static_cast<float>(x), static_cast<float>(y)));
    std::vector<Match> matches;
    for (std::size_t i = 0; i < kps.size(); ++i)
        matches.push_back({static_cast<int>(i), static_cast<int>(i), 0});

    const GmsResult res = filter_gms(matches, kps, kps, 400, 400, 400, 400);
    CHECK(!res.degenerate_passthrough);
    CHECK(res.matches.size() == matches.size());
}

TEST_CASE("filter_gms hand-built cluster and outlier") {
    // Ten coherent matches in a tight cluster: support 10, score 9, and the
    // threshold is 6*sqrt(10/9) ~ 6.32 under every grid shift. The lone
    // outlier scores 0.
    std::vector<Keypoint> kps_a, kps_b;
    std::vector<Match> matches;
    Rng rng(311);
    for (int i = 0; i < 10; ++i) {
        const float dx = static_cast<float>(rng.uniform(-1, 1));
        const float dy = static_cast<float>(rng.uniform(-1, 1));
        kps_a.push_back(kp(105 + dx, 105 + dy));
        kps_b.push_back(kp(205 + dx, 165 + dy));
        matches.push_back({i, i, 0});
    }
    kps_a.push_back(kp(305, 55));
    kps_b.push_back(kp(55, 305));
    matches.push_back({10, 10, 0});

    const GmsResult res = filter_gms(matches, kps_a, kps_b, 400, 400, 400, 400);
    CHECK(!res.degenerate_passthrough);
    REQUIRE(res.matches.size() == 10);
    for (int i = 0; i < 10; ++i) CHECK(res.matches[i] == matches[i]);
}

TEST_CASE("filter_gms degenerate single-cell input passes through") {
    std::vector<Keypoint> kps;
    std::vector<Match> matches;
    for (int i = 0; i < 6; ++i) {
        kps.push_back(kp(200.f + i, 200.f));
        matches.push_back({i, i, 0});
    }
    const GmsResult res = filter_gms(matches, kps, kps, 4000, 4000, 4000, 4000);
    CHECK(res.degenerate_passthrough);
    CHECK(res.matches.size() == matches.size());
}

TEST_CASE("filter_gms removes an isolated wrong match") {
    std::vector<Keypoint> kps_a, kps_b;
    std::vector<Match> matches;
    int idx = 0;
    for (int y = 30; y < 370; y += 10)
        for (int x = 30; x < 330; x += 10) {
            kps_a.push_back(kp(static_cast<float>(x), static_cast<float>(y)));
            kps_b.push_back(kp(static_cast<float>(x) + 60.f, static_cast<float>(y)));
            matches.push_back({idx, idx, 0});
            ++idx;
        }
    REQUIRE(matches.size() >= 200);
    // One wrong correspondence pointing somewhere unrelated.
    kps_a.push_back(kp(45.f, 45.f));
    kps_b.push_back(kp(390.f, 390.f));
    matches.push_back({idx, idx, 0});

    const GmsResult res = filter_gms(matches, kps_a, kps_b, 400, 400, 400, 400);
    for (const Match& m : res.matches) CHECK(m.query_idx != idx);
    CHECK(res.matches.size() >= matches.size() * 8 / 10);
}

TEST_CASE("filter_gms output is an ordered subset") {
    std::vector<Keypoint> kps_a, kps_b;
    std::vector<Match> matches;
    Rng rng(313);
    for (int i = 0; i < 300; ++i) {
        kps_a.push_back(kp(static_cast<float>(rng.uniform(0, 400)),
                           static_cast<float>(rng.uniform(0, 400))));
        kps_b.push_back(kp(static_cast<float>(rng.uniform(0, 400)),
                           static_cast<float>(rng.uniform(0, 400))));
        matches.push_back({i, i, 0});
    }
    const GmsResult res = filter_gms(matches, kps_a, kps_b, 400, 400, 400, 400);
    std::size_t cursor = 0;
    for (const Match& m : res.matches) {
        while (cursor < matches.size() && !(matches[cursor] == m)) ++cursor;
        CHECK(cursor < matches.size());
    }
}

TEST_CASE("ransac fails on fewer than four matches") {
    std::vector<Keypoint> kps{kp(0, 0), kp(10, 0), kp(0, 10)};
    std::vector<Match> matches{{0, 0, 0}, {1, 1, 0}, {2, 2, 0}};
    const RansacResult res = filter_ransac_homography(matches, kps, kps);
    CHECK(!res.success);
}

TEST_CASE("ransac recovers a clean homography exactly") {
    const Homography h_true = testsup::make_similarity(160, 120, 0.2, 1.1, 12, -7);
    Rng rng(317);
    std::vector<Keypoint> kps_a, kps_b;
    std::vector<Match> matches;
    for (int i = 0; i < 50; ++i) {
        const double x = rng.uniform(20, 300), y = rng.uniform(20, 220);
        const Vec2 q = transfer(h_true, x, y);
        kps_a.push_back(kp(static_cast<float>(x), static_cast<float>(y)));
        kps_b.push_back(kp(static_cast<float>(q.x), static_cast<float>(q.y)));
        matches.push_back({i, i, 0});
    }
    const RansacResult res = filter_ransac_homography(matches, kps_a, kps_b, 0.99, 3.0, 0);
    REQUIRE(res.success);
    CHECK(res.inliers.size() == 50);
    Homography want = h_true;
    want.normalize();
    double dist = 0;
    for (int i = 0; i < 9; ++i)
        dist += (res.homography.m[i] - want.m[i]) * (res.homography.m[i] - want.m[i]);
    CHECK(std::sqrt(dist) < 1e-4);
}

TEST_CASE("ransac tolerates 50 percent outliers") {
    const Homography h_true = testsup::make_similarity(160, 120, -0.15, 0.95, -8, 5);
    int good_trials = 0;
    for (std::uint64_t trial = 0; trial < 30; ++trial) {
        Rng rng(400 + trial);
        std::vector<Keypoint> kps_a, kps_b;
        std::vector<Match> matches;
        std::vector<int> true_inlier(100, 0);
        for (int i = 0; i < 100; ++i) {
            const double x = rng.uniform(20, 300), y = rng.uniform(20, 220);
            kps_a.push_back(kp(static_cast<float>(x), static_cast<float>(y)));
            if (i % 2 == 0) {
                const Vec2 q = transfer(h_true, x, y);
                kps_b.push_back(kp(static_cast<float>(q.x), static_cast<float>(q.y)));
                true_inlier[i] = 1;
            } else {
                kps_b.push_back(kp(static_cast<float>(rng.uniform(0, 320)),
                                   static_cast<float>(rng.uniform(0, 240))));
            }
            matches.push_back({i, i, 0});
        }
        const RansacResult res = filter_ransac_homography(matches, kps_a, kps_b, 0.99, 3.0, trial);
        if (!res.success) continue;
        int recovered = 0;
        for (const Match& m : res.inliers)
            if (true_inlier[m.query_idx]) ++recovered;
        if (recovered >= 48) ++good_trials;  // >= 95% of the 50 true inliers
    }
    CHECK(good_trials >= 29);
}

TEST_CASE("ransac is deterministic for a fixed seed") {
    Rng rng(331);
    const Homography h_true = testsup::make_similarity(100, 100, 0.1, 1.0, 3, 4);
    std::vector<Keypoint> kps_a, kps_b;
    std::vector<Match> matches;
    for (int i = 0; i < 60; ++i) {
        const double x = rng.uniform(10, 190), y = rng.uniform(10, 190);
        const Vec2 q = i % 3 == 0
                           ? Vec2{rng.uniform(0, 200), rng.uniform(0, 200)}
                           : transfer(h_true, x, y);
        kps_a.push_back(kp(static_cast<float>(x), static_cast<float>(y)));
        kps_b.push_back(kp(static_cast<float>(q.x), static_cast<float>(q.y)));
        matches.push_back({i, i, 0});
    }
    const RansacResult a = filter_ransac_homography(matches, kps_a, kps_b, 0.99, 3.0, 7);
    const RansacResult b = filter_ransac_homography(matches, kps_a, kps_b, 0.99, 3.0, 7);
    REQUIRE(a.success);
    CHECK(a.inliers == b.inliers);
    CHECK(a.iterations_run == b.iterations_run);
    CHECK(a.homography.m == b.homography.m);
}

TEST_CASE("match CSV round trip") {
    const std::vector<Match> matches{{0, 3, 12}, {1, 1, 0}, {5, 2, 250}};
    std::istringstream in(matches_to_csv(matches));
    const std::vector<Match> back = matches_from_csv(in);
    REQUIRE(back.size() == matches.size());
    for (std::size_t i = 0; i < matches.size(); ++i) CHECK(back[i] == matches[i]);

    std::istringstream bad("query_idx,train_idx,distance\n1;2;3\n");
    CHECK_THROWS(matches_from_csv(bad));
}
