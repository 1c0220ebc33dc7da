#include <catch2/catch_amalgamated.hpp>

#include <cstdio>

#include "panoforge/anafnet.hpp"
#include "panoforge/rng.hpp"

using namespace panoforge;

namespace {

Tensor4 random_tensor(int n, int c, int h, int w, std::uint64_t seed) {
    Tensor4 t(n, c, h, w);
    Rng rng(seed);
    for (float& v : t.data) v = static_cast<float>(rng.uniform(-1, 1));
    return t;
}

ConvParams identity_1x1(int c) {
    ConvParams p;
    p.out_channels = p.in_channels = c;
    p.kernel = 1;
    p.weights.assign(static_cast<std::size_t>(c) * c, 0.f);
    p.bias.assign(c, 0.f);
    for (int i = 0; i < c; ++i) p.weights[static_cast<std::size_t>(i) * c + i] = 1.f;
    return p;
}

ConvParams random_conv(int out_c, int in_c, int kernel, std::uint64_t seed) {
    ConvParams p;
    p.out_channels = out_c;
    p.in_channels = in_c;
    p.kernel = kernel;
    p.weights.resize(static_cast<std::size_t>(out_c) * in_c * kernel * kernel);
    p.bias.resize(out_c);
    Rng rng(seed);
    for (float& v : p.weights) v = static_cast<float>(rng.uniform(-0.5, 0.5));
    for (float& v : p.bias) v = static_cast<float>(rng.uniform(-0.5, 0.5));
    return p;
}

// Naive six-loop cross-correlation, written independently of the library.
Tensor4 conv_oracle(const Tensor4& x, const ConvParams& p) {
    const int pad = p.kernel / 2;
    Tensor4 out(x.n, p.out_channels, x.h, x.w);
    for (int n = 0; n < x.n; ++n)
        for (int oc = 0; oc < p.out_channels; ++oc)
            for (int y = 0; y < x.h; ++y)
                for (int xx = 0; xx < x.w; ++xx) {
                    double acc = p.bias[oc];
                    for (int ic = 0; ic < p.in_channels; ++ic)
                        for (int ky = 0; ky < p.kernel; ++ky)
                            for (int kx = 0; kx < p.kernel; ++kx) {
                                const int sy = y + ky - pad, sx = xx + kx - pad;
                                if (sy < 0 || sx < 0 || sy >= x.h || sx >= x.w) continue;
                                acc += static_cast<double>(
                                           p.weights[((static_cast<std::size_t>(oc) *
                                                           p.in_channels +
                                                       ic) *
                                                          p.kernel +
                                                      ky) *
                                                         p.kernel +
                                                     kx]) *
                                       x.at(n, ic, sy, sx);
                            }
                    out.at(n, oc, y, xx) = static_cast<float>(acc);
                }
    return out;
}

bool all_finite(const Tensor4& t) {
    for (float v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace

TEST_CASE("layer_norm hand cases") {
    // Two channels holding 1 and 3: mean 2, stddev 1, so outputs are -1, 1.
    Tensor4 x(1, 2, 3, 3);
    for (int y = 0; y < 3; ++y)
        for (int xx = 0; xx < 3; ++xx) {
            x.at(0, 0, y, xx) = 1.f;
            x.at(0, 1, y, xx) = 3.f;
        }
    const Tensor4 out = layer_norm(x, {1, 1}, {0, 0});
    for (int y = 0; y < 3; ++y)
        for (int xx = 0; xx < 3; ++xx) {
            CHECK(out.at(0, 0, y, xx) == Catch::Approx(-1.0).margin(1e-4));
            CHECK(out.at(0, 1, y, xx) == Catch::Approx(1.0).margin(1e-4));
        }

    // Constant over channels collapses to beta.
    Tensor4 flat(1, 3, 2, 2, 5.f);
    const Tensor4 b = layer_norm(flat, {1, 1, 1}, {0.25f, -0.5f, 2.f});
    for (int xx = 0; xx < 2; ++xx) {
        CHECK(b.at(0, 0, 0, xx) == Catch::Approx(0.25).margin(1e-3));
        CHECK(b.at(0, 1, 0, xx) == Catch::Approx(-0.5).margin(1e-3));
        CHECK(b.at(0, 2, 0, xx) == Catch::Approx(2.0).margin(1e-3));
    }
}

TEST_CASE("layer_norm normalizes random inputs") {
    const Tensor4 x = random_tensor(2, 6, 4, 4, 41);
    const std::vector<float> gamma(6, 1.f), beta(6, 0.3f);
    const Tensor4 out = layer_norm(x, gamma, beta);
    for (int n = 0; n < 2; ++n)
        for (int y = 0; y < 4; ++y)
            for (int xx = 0; xx < 4; ++xx) {
                double mean = 0;
                for (int c = 0; c < 6; ++c) mean += out.at(n, c, y, xx);
                CHECK(mean / 6 == Catch::Approx(0.3).margin(1e-5));
            }
}

TEST_CASE("conv2d identity and impulse response") {
    const Tensor4 x = random_tensor(1, 3, 5, 5, 43);
    const Tensor4 same = conv2d(x, identity_1x1(3));
    for (std::size_t i = 0; i < x.data.size(); ++i)
        CHECK(same.data[i] == Catch::Approx(x.data[i]).margin(1e-6));

    ConvParams ones;
    ones.out_channels = ones.in_channels = 1;
    ones.kernel = 3;
    ones.weights.assign(9, 1.f);
    ones.bias.assign(1, 0.f);
    Tensor4 impulse(1, 1, 7, 7);
    impulse.at(0, 0, 3, 3) = 1.f;
    const Tensor4 resp = conv2d(impulse, ones);
    for (int y = 0; y < 7; ++y)
        for (int xx = 0; xx < 7; ++xx) {
            const float want = (std::abs(y - 3) <= 1 && std::abs(xx - 3) <= 1) ? 1.f : 0.f;
            CHECK(resp.at(0, 0, y, xx) == want);
        }
}

TEST_CASE("conv2d matches the naive oracle") {
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const int in_c = 1 + static_cast<int>(seed % 3);
        const int out_c = 1 + static_cast<int>(seed % 4);
        const int k = (seed % 2) ? 3 : 1;
        const Tensor4 x = random_tensor(1, in_c, 6, 5, seed * 7);
        const ConvParams p = random_conv(out_c, in_c, k, seed * 11);
        const Tensor4 got = conv2d(x, p);
        const Tensor4 want = conv_oracle(x, p);
        REQUIRE(got.same_shape(want));
        for (std::size_t i = 0; i < got.data.size(); ++i)
            CHECK(got.data[i] == Catch::Approx(want.data[i]).margin(1e-5));
    }
}

TEST_CASE("simple_gate") {
    Tensor4 x(1, 4, 2, 2);
    Rng rng(47);
    for (float& v : x.data) v = static_cast<float>(rng.uniform(-2, 2));
    const Tensor4 out = simple_gate(x);
    REQUIRE(out.c == 2);
    for (int c = 0; c < 2; ++c)
        for (int y = 0; y < 2; ++y)
            for (int xx = 0; xx < 2; ++xx)
                CHECK(out.at(0, c, y, xx) ==
                      Catch::Approx(x.at(0, c, y, xx) * x.at(0, c + 2, y, xx)));

    // Second half all ones passes the first half through.
    Tensor4 half(1, 4, 2, 2, 1.f);
    half.at(0, 0, 0, 0) = 3.f;
    half.at(0, 1, 1, 1) = -2.f;
    const Tensor4 pass = simple_gate(half);
    CHECK(pass.at(0, 0, 0, 0) == 3.f);
    CHECK(pass.at(0, 1, 1, 1) == -2.f);

    Tensor4 odd(1, 3, 2, 2);
    CHECK_THROWS_AS(simple_gate(odd), ShapeError);
}

TEST_CASE("sca hand case") {
    // Identity 1x1 weights and constant 2.0 input: attention is the pooled
    // 2.0, so every output is 4.0.
    Tensor4 x(1, 3, 4, 4, 2.f);
    const Tensor4 out = sca(x, identity_1x1(3));
    for (float v : out.data) CHECK(v == Catch::Approx(4.0));

    Tensor4 zeros(1, 3, 4, 4, 0.f);
    const Tensor4 z = sca(zeros, identity_1x1(3));
    for (float v : z.data) CHECK(v == 0.f);

    // Spatially uniform input stays spatially uniform.
    Tensor4 uni(1, 2, 3, 3);
    for (int y = 0; y < 3; ++y)
        for (int xx = 0; xx < 3; ++xx) {
            uni.at(0, 0, y, xx) = 1.5f;
            uni.at(0, 1, y, xx) = -0.5f;
        }
    const Tensor4 u = sca(uni, random_conv(2, 2, 1, 49));
    for (int c = 0; c < 2; ++c)
        for (int y = 0; y < 3; ++y)
            for (int xx = 0; xx < 3; ++xx)
                CHECK(u.at(0, c, y, xx) == Catch::Approx(u.at(0, c, 0, 0)));
}

TEST_CASE("attention_gate forced cases and oracle") {
    const Tensor4 x_e = random_tensor(1, 3, 4, 4, 53);
    const Tensor4 x_d = random_tensor(1, 2, 4, 4, 59);

    AttentionGateParams p;
    p.w_e = random_conv(2, 3, 1, 61);
    p.w_d = random_conv(2, 2, 1, 67);
    p.w_e.bias.assign(2, 0.f);
    p.w_d.bias.assign(2, 0.f);
    p.b_e = {0.1f, -0.2f};
    p.psi = random_conv(1, 2, 1, 71);

    SECTION("psi zero with unit bias is the identity on x_d") {
        p.psi.weights.assign(2, 0.f);
        p.psi.bias = {1.f};
        const Tensor4 out = attention_gate(x_e, x_d, p);
        for (std::size_t i = 0; i < x_d.data.size(); ++i) CHECK(out.data[i] == x_d.data[i]);
    }

    SECTION("psi zero with zero bias kills x_d") {
        p.psi.weights.assign(2, 0.f);
        p.psi.bias = {0.f};
        const Tensor4 out = attention_gate(x_e, x_d, p);
        for (float v : out.data) CHECK(v == 0.f);
    }

    SECTION("matches a direct evaluation of the two equations") {
        const Tensor4 out = attention_gate(x_e, x_d, p);
        for (int y = 0; y < 4; ++y)
            for (int xx = 0; xx < 4; ++xx) {
                double attn = p.psi.bias[0];
                for (int j = 0; j < 2; ++j) {
                    double t = p.b_e[j];
                    for (int c = 0; c < 3; ++c)
                        t += static_cast<double>(p.w_e.weights[j * 3 + c]) * x_e.at(0, c, y, xx);
                    for (int c = 0; c < 2; ++c)
                        t += static_cast<double>(p.w_d.weights[j * 2 + c]) * x_d.at(0, c, y, xx);
                    attn += static_cast<double>(p.psi.weights[j]) * t;
                }
                for (int c = 0; c < 2; ++c)
                    CHECK(out.at(0, c, y, xx) ==
                          Catch::Approx(attn * x_d.at(0, c, y, xx)).margin(1e-5));
            }
    }

    SECTION("spatial mismatch throws") {
        const Tensor4 small = random_tensor(1, 2, 3, 4, 73);
        CHECK_THROWS_AS(attention_gate(x_e, small, p), ShapeError);
    }
}

TEST_CASE("nafblock zero weights is the identity") {
    const Tensor4 x = random_tensor(1, 4, 6, 6, 79);
    NafBlockParams b = detail::make_block(4, nullptr);
    const Tensor4 out = nafblock(x, b);
    for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(out.data[i] == x.data[i]);
}

TEST_CASE("nafblock preserves shape and stays finite") {
    Rng rng(83);
    for (const int c : {2, 4, 8}) {
        const Tensor4 x = random_tensor(2, c, 8, 8, 89 + c);
        const NafBlockParams b = detail::make_block(c, &rng);
        const Tensor4 out = nafblock(x, b);
        CHECK(out.same_shape(x));
        CHECK(all_finite(out));
    }
}

TEST_CASE("nafblock matches a stage-by-stage composition") {
    const Tensor4 x = random_tensor(1, 4, 5, 5, 97);
    Rng rng(101);
    const NafBlockParams b = detail::make_block(4, &rng);

    Tensor4 f = layer_norm(x, b.ln1_gamma, b.ln1_beta);
    f = conv2d(f, b.expand1);
    f = conv2d(f, b.dwconv);
    f = simple_gate(f);
    f = sca(f, b.sca_conv);
    f = conv2d(f, b.project1);
    Tensor4 y = x;
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += f.data[i];
    Tensor4 g = layer_norm(y, b.ln2_gamma, b.ln2_beta);
    g = conv2d(g, b.expand2);
    g = simple_gate(g);
    g = conv2d(g, b.project2);
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += g.data[i];

    const Tensor4 got = nafblock(x, b);
    for (std::size_t i = 0; i < got.data.size(); ++i)
        CHECK(got.data[i] == Catch::Approx(y.data[i]).margin(1e-6));
}

TEST_CASE("anafnet zero-weight network is the identity") {
    for (const int depth : {1, 2}) {
        const AnafNetConfig cfg{1, 4, depth};
        const AnafNetParams p = make_anafnet_params(cfg, nullptr);
        const Tensor4 x = random_tensor(1, 1, 16, 16, 103 + depth);
        const Tensor4 out = anafnet_forward(x, p);
        REQUIRE(out.same_shape(x));
        for (std::size_t i = 0; i < x.data.size(); ++i)
            CHECK(out.data[i] == Catch::Approx(x.data[i]).margin(1e-5));
    }
}

TEST_CASE("anafnet shape contract, determinism, finiteness") {
    Rng rng(107);
    const AnafNetConfig cfg{3, 4, 2};
    const AnafNetParams p = make_anafnet_params(cfg, &rng);
    const Tensor4 x = random_tensor(1, 3, 12, 20, 109);
    const Tensor4 a = anafnet_forward(x, p);
    const Tensor4 b = anafnet_forward(x, p);
    CHECK(a.same_shape(x));
    CHECK(all_finite(a));
    CHECK(a.data == b.data);

    const Tensor4 odd = random_tensor(1, 3, 10, 20, 113);
    CHECK_THROWS_AS(anafnet_forward(odd, p), ShapeError);
}

TEST_CASE("anafnet parameter file round trip") {
    Rng rng(127);
    const AnafNetConfig cfg{1, 4, 2};
    const AnafNetParams p = make_anafnet_params(cfg, &rng);
    const std::string path = "anafnet_params_test.bin";
    save_anafnet_params(path, p);
    const AnafNetParams q = load_anafnet_params(path);
    std::remove(path.c_str());

    const Tensor4 x = random_tensor(1, 1, 8, 8, 131);
    const Tensor4 a = anafnet_forward(x, p);
    const Tensor4 b = anafnet_forward(x, q);
    CHECK(a.data == b.data);

    CHECK_THROWS(load_anafnet_params("does_not_exist.bin"));
}
