#pragma once

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "panoforge/rng.hpp"

namespace panoforge {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense NCHW tensor.
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<float> data;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_, float fill = 0.f)
        : n(n_), c(c_), h(h_), w(w_),
          data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {
        if (n_ < 1 || c_ < 1 || h_ < 1 || w_ < 1) throw ShapeError("Tensor4: bad extents");
    }

    float& at(int in, int ic, int iy, int ix) {
        return data[((static_cast<std::size_t>(in) * c + ic) * h + iy) * w + ix];
    }
    float at(int in, int ic, int iy, int ix) const {
        return data[((static_cast<std::size_t>(in) * c + ic) * h + iy) * w + ix];
    }
    bool same_shape(const Tensor4& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
};

struct ConvParams {
    int out_channels = 0;
    int in_channels = 0;
    int kernel = 1;   // 1 or 3 (2 is used internally for downsampling)
    int groups = 1;   // 1 or depthwise (== channels)
    std::vector<float> weights;  // out * (in/groups) * k * k
    std::vector<float> bias;     // out

    void validate() const {
        if (groups < 1 || in_channels % groups != 0 || out_channels % groups != 0)
            throw ShapeError("ConvParams: bad group count");
        const std::size_t expect = static_cast<std::size_t>(out_channels) *
                                   (in_channels / groups) * kernel * kernel;
        if (weights.size() != expect || bias.size() != static_cast<std::size_t>(out_channels))
            throw ShapeError("ConvParams: weight/bias size mismatch");
    }
};

namespace detail {

// Cross-correlation, zero padding. pad = kernel/2 gives same-size output at
// stride 1. Fixed summation order per output element.
inline Tensor4 conv2d_impl(const Tensor4& x, const ConvParams& p, int stride, int pad) {
    p.validate();
    if (x.c != p.in_channels) throw ShapeError("conv2d: channel mismatch");
    const int oh = (x.h + 2 * pad - p.kernel) / stride + 1;
    const int ow = (x.w + 2 * pad - p.kernel) / stride + 1;
    const int cin_g = p.in_channels / p.groups;
    const int cout_g = p.out_channels / p.groups;
    Tensor4 out(x.n, p.out_channels, oh, ow);
    for (int in = 0; in < x.n; ++in)
        for (int oc = 0; oc < p.out_channels; ++oc) {
            const int g = oc / cout_g;
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    float acc = p.bias[oc];
                    for (int ic = 0; ic < cin_g; ++ic)
                        for (int ky = 0; ky < p.kernel; ++ky)
                            for (int kx = 0; kx < p.kernel; ++kx) {
                                const int iy = oy * stride + ky - pad;
                                const int ix = ox * stride + kx - pad;
                                if (iy < 0 || ix < 0 || iy >= x.h || ix >= x.w) continue;
                                const float wv =
                                    p.weights[((static_cast<std::size_t>(oc) * cin_g + ic) *
                                                   p.kernel +
                                               ky) *
                                                  p.kernel +
                                              kx];
                                acc += wv * x.at(in, g * cin_g + ic, iy, ix);
                            }
                    out.at(in, oc, oy, ox) = acc;
                }
        }
    return out;
}

}  // namespace detail

inline Tensor4 conv2d(const Tensor4& x, const ConvParams& p) {
    return detail::conv2d_impl(x, p, 1, p.kernel / 2);
}

// Per-position normalization over channels, then affine by gamma/beta.
inline Tensor4 layer_norm(const Tensor4& x, const std::vector<float>& gamma,
                          const std::vector<float>& beta, float eps = 1e-6f) {
    if (gamma.size() != static_cast<std::size_t>(x.c) || beta.size() != gamma.size())
        throw ShapeError("layer_norm: gamma/beta length mismatch");
    Tensor4 out(x.n, x.c, x.h, x.w);
    for (int in = 0; in < x.n; ++in)
        for (int iy = 0; iy < x.h; ++iy)
            for (int ix = 0; ix < x.w; ++ix) {
                float mean = 0;
                for (int ic = 0; ic < x.c; ++ic) mean += x.at(in, ic, iy, ix);
                mean /= x.c;
                float var = 0;
                for (int ic = 0; ic < x.c; ++ic) {
                    const float d = x.at(in, ic, iy, ix) - mean;
                    var += d * d;
                }
                var /= x.c;
                const float inv = 1.f / std::sqrt(var + eps);
                for (int ic = 0; ic < x.c; ++ic)
                    out.at(in, ic, iy, ix) =
                        gamma[ic] * (x.at(in, ic, iy, ix) - mean) * inv + beta[ic];
            }
    return out;
}

// Split channels in half, multiply the halves.
inline Tensor4 simple_gate(const Tensor4& x) {
    if (x.c % 2 != 0) throw ShapeError("simple_gate: channel count must be even");
    const int half = x.c / 2;
    Tensor4 out(x.n, half, x.h, x.w);
    for (int in = 0; in < x.n; ++in)
        for (int ic = 0; ic < half; ++ic)
            for (int iy = 0; iy < x.h; ++iy)
                for (int ix = 0; ix < x.w; ++ix)
                    out.at(in, ic, iy, ix) =
                        x.at(in, ic, iy, ix) * x.at(in, ic + half, iy, ix);
    return out;
}

// Simple channel attention: global average pool, one 1x1 conv, rescale.
inline Tensor4 sca(const Tensor4& x, const ConvParams& w) {
    if (w.kernel != 1 || w.in_channels != x.c || w.out_channels != x.c)
        throw ShapeError("sca: weight must be a 1x1 conv mapping c -> c");
    Tensor4 pooled(x.n, x.c, 1, 1);
    const float inv_hw = 1.f / (static_cast<float>(x.h) * x.w);
    for (int in = 0; in < x.n; ++in)
        for (int ic = 0; ic < x.c; ++ic) {
            float s = 0;
            for (int iy = 0; iy < x.h; ++iy)
                for (int ix = 0; ix < x.w; ++ix) s += x.at(in, ic, iy, ix);
            pooled.at(in, ic, 0, 0) = s * inv_hw;
        }
    const Tensor4 attn = conv2d(pooled, w);
    Tensor4 out(x.n, x.c, x.h, x.w);
    for (int in = 0; in < x.n; ++in)
        for (int ic = 0; ic < x.c; ++ic) {
            const float a = attn.at(in, ic, 0, 0);
            for (int iy = 0; iy < x.h; ++iy)
                for (int ix = 0; ix < x.w; ++ix) out.at(in, ic, iy, ix) = a * x.at(in, ic, iy, ix);
        }
    return out;
}

// Attention gate over a skip connection. Both activations are the identity;
// the single-channel attention map is broadcast over x_d's channels.
struct AttentionGateParams {
    ConvParams w_e;           // encoder branch 1x1, enc_c -> d_init, zero bias
    ConvParams w_d;           // decoder branch 1x1, dec_c -> d_init, zero bias
    std::vector<float> b_e;   // shared bias over d_init, applied to the sum
    ConvParams psi;           // 1x1, d_init -> 1; psi.bias[0] is b_psi

    void validate() const {
        w_e.validate();
        w_d.validate();
        psi.validate();
        if (w_e.out_channels != w_d.out_channels ||
            psi.in_channels != w_e.out_channels || psi.out_channels != 1 ||
            b_e.size() != static_cast<std::size_t>(w_e.out_channels))
            throw ShapeError("AttentionGateParams: inconsistent dimensions");
    }
};

inline Tensor4 attention_gate(const Tensor4& x_e, const Tensor4& x_d,
                              const AttentionGateParams& p) {
    p.validate();
    if (x_e.n != x_d.n || x_e.h != x_d.h || x_e.w != x_d.w)
        throw ShapeError("attention_gate: spatial mismatch");
    Tensor4 t = conv2d(x_e, p.w_e);
    const Tensor4 td = conv2d(x_d, p.w_d);
    for (int in = 0; in < t.n; ++in)
        for (int ic = 0; ic < t.c; ++ic)
            for (int iy = 0; iy < t.h; ++iy)
                for (int ix = 0; ix < t.w; ++ix)
                    t.at(in, ic, iy, ix) += td.at(in, ic, iy, ix) + p.b_e[ic];
    const Tensor4 w_attn = conv2d(t, p.psi);  // n x 1 x h x w
    Tensor4 out(x_d.n, x_d.c, x_d.h, x_d.w);
    for (int in = 0; in < x_d.n; ++in)
        for (int ic = 0; ic < x_d.c; ++ic)
            for (int iy = 0; iy < x_d.h; ++iy)
                for (int ix = 0; ix < x_d.w; ++ix)
                    out.at(in, ic, iy, ix) = w_attn.at(in, 0, iy, ix) * x_d.at(in, ic, iy, ix);
    return out;
}

// One NAFNet block: two residual sub-blocks, the first with the depthwise
// conv / SimpleGate / SCA body, the second with the FFN form.
struct NafBlockParams {
    int channels = 0;
    std::vector<float> ln1_gamma, ln1_beta;
    ConvParams expand1;   // 1x1, c -> 2c
    ConvParams dwconv;    // 3x3 depthwise, 2c -> 2c
    ConvParams sca_conv;  // 1x1, c -> c
    ConvParams project1;  // 1x1, c -> c
    std::vector<float> ln2_gamma, ln2_beta;
    ConvParams expand2;   // 1x1, c -> 2c
    ConvParams project2;  // 1x1, c -> c
};

inline Tensor4 nafblock(const Tensor4& x, const NafBlockParams& p) {
    if (x.c != p.channels) throw ShapeError("nafblock: channel mismatch");
    Tensor4 f = layer_norm(x, p.ln1_gamma, p.ln1_beta);
    f = conv2d(f, p.expand1);
    f = conv2d(f, p.dwconv);
    f = simple_gate(f);
    f = sca(f, p.sca_conv);
    f = conv2d(f, p.project1);
    Tensor4 y(x.n, x.c, x.h, x.w);
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] = x.data[i] + f.data[i];

    Tensor4 g = layer_norm(y, p.ln2_gamma, p.ln2_beta);
    g = conv2d(g, p.expand2);
    g = simple_gate(g);
    g = conv2d(g, p.project2);
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += g.data[i];
    return y;
}

// U-shaped composition: intro conv, per-stage encoder blocks with stride-2
// downsampling, a middle block, mirrored decoder with nearest-neighbor
// upsampling and attention-gated skips, ending conv, global residual.
struct AnafNetConfig {
    int in_channels = 1;
    int width = 8;   // channels at the outermost stage
    int depth = 1;   // number of downsampling steps
};

struct AnafNetParams {
    AnafNetConfig config;
    ConvParams intro;                        // 3x3, in -> width
    std::vector<NafBlockParams> enc_blocks;  // one per stage
    std::vector<ConvParams> downs;           // 2x2 stride-2, c -> 2c
    NafBlockParams middle;
    std::vector<ConvParams> ups;             // 1x1 after upsample, 2c -> c
    std::vector<AttentionGateParams> gates;  // one per skip
    std::vector<NafBlockParams> dec_blocks;
    ConvParams ending;                       // 3x3, width -> in
};

namespace detail {

inline Tensor4 upsample_nearest2x(const Tensor4& x) {
    Tensor4 out(x.n, x.c, x.h * 2, x.w * 2);
    for (int in = 0; in < x.n; ++in)
        for (int ic = 0; ic < x.c; ++ic)
            for (int iy = 0; iy < out.h; ++iy)
                for (int ix = 0; ix < out.w; ++ix)
                    out.at(in, ic, iy, ix) = x.at(in, ic, iy / 2, ix / 2);
    return out;
}

inline ConvParams make_conv(int out_c, int in_c, int kernel, int groups, Rng* rng) {
    ConvParams p;
    p.out_channels = out_c;
    p.in_channels = in_c;
    p.kernel = kernel;
    p.groups = groups;
    p.weights.assign(static_cast<std::size_t>(out_c) * (in_c / groups) * kernel * kernel, 0.f);
    p.bias.assign(out_c, 0.f);
    if (rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in_c / groups) * kernel * kernel);
        for (float& w : p.weights) w = static_cast<float>(rng->uniform(-bound, bound));
    }
    return p;
}

inline NafBlockParams make_block(int channels, Rng* rng) {
    NafBlockParams b;
    b.channels = channels;
    b.ln1_gamma.assign(channels, 1.f);
    b.ln1_beta.assign(channels, 0.f);
    b.ln2_gamma.assign(channels, 1.f);
    b.ln2_beta.assign(channels, 0.f);
    b.expand1 = make_conv(2 * channels, channels, 1, 1, rng);
    b.dwconv = make_conv(2 * channels, 2 * channels, 3, 2 * channels, rng);
    b.sca_conv = make_conv(channels, channels, 1, 1, rng);
    b.project1 = make_conv(channels, channels, 1, 1, rng);
    b.expand2 = make_conv(2 * channels, channels, 1, 1, rng);
    b.project2 = make_conv(channels, channels, 1, 1, rng);
    return b;
}

inline AttentionGateParams make_gate(int enc_c, int dec_c, Rng* rng) {
    AttentionGateParams g;
    const int d_init = std::max(1, dec_c / 2);
    g.w_e = make_conv(d_init, enc_c, 1, 1, rng);
    g.w_d = make_conv(d_init, dec_c, 1, 1, rng);
    g.b_e.assign(d_init, 0.f);
    g.psi = make_conv(1, d_init, 1, 1, rng);
    if (!rng) g.psi.bias[0] = 1.f;  // zero-parameter default keeps the gate open
    return g;
}

}  // namespace detail

// rng == nullptr gives all-zero weights (and an open attention gate), which
// makes the whole network the identity.
inline AnafNetParams make_anafnet_params(const AnafNetConfig& cfg, Rng* rng) {
    AnafNetParams p;
    p.config = cfg;
    p.intro = detail::make_conv(cfg.width, cfg.in_channels, 3, 1, rng);
    int c = cfg.width;
    for (int s = 0; s < cfg.depth; ++s) {
        p.enc_blocks.push_back(detail::make_block(c, rng));
        p.downs.push_back(detail::make_conv(2 * c, c, 2, 1, rng));
        c *= 2;
    }
    p.middle = detail::make_block(c, rng);
    for (int s = cfg.depth - 1; s >= 0; --s) {
        const int cs = cfg.width << s;
        p.ups.push_back(detail::make_conv(cs, 2 * cs, 1, 1, rng));
        p.gates.push_back(detail::make_gate(cs, cs, rng));
        p.dec_blocks.push_back(detail::make_block(cs, rng));
    }
    p.ending = detail::make_conv(cfg.in_channels, cfg.width, 3, 1, rng);
    return p;
}

inline Tensor4 anafnet_forward(const Tensor4& x, const AnafNetParams& p) {
    const auto& cfg = p.config;
    if (x.c != cfg.in_channels) throw ShapeError("anafnet_forward: channel mismatch");
    const int div = 1 << cfg.depth;
    if (x.h % div != 0 || x.w % div != 0)
        throw ShapeError("anafnet_forward: spatial dims must be divisible by 2^depth");

    Tensor4 f = conv2d(x, p.intro);
    std::vector<Tensor4> skips;
    for (int s = 0; s < cfg.depth; ++s) {
        f = nafblock(f, p.enc_blocks[s]);
        skips.push_back(f);
        f = detail::conv2d_impl(f, p.downs[s], 2, 0);
    }
    f = nafblock(f, p.middle);
    for (int s = 0; s < cfg.depth; ++s) {
        f = detail::upsample_nearest2x(f);
        f = conv2d(f, p.ups[s]);
        const Tensor4& enc = skips[cfg.depth - 1 - s];
        const Tensor4 gated = attention_gate(enc, f, p.gates[s]);
        for (std::size_t i = 0; i < f.data.size(); ++i) f.data[i] += gated.data[i];
        f = nafblock(f, p.dec_blocks[s]);
    }
    f = conv2d(f, p.ending);
    Tensor4 out(x.n, x.c, x.h, x.w);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = x.data[i] + f.data[i];
    return out;
}

// ---- parameter file: magic, config header, flat little-endian f32 arrays
// in declaration order ----

namespace detail {

constexpr char kParamMagic[4] = {'P', 'F', 'A', 'N'};

inline void write_floats(std::ostream& out, const std::vector<float>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(float)));
}
inline void read_floats(std::istream& in, std::vector<float>& v) {
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(v.size() * sizeof(float)))
        throw std::runtime_error("anafnet parameter file truncated");
}
inline void write_conv(std::ostream& out, const ConvParams& p) {
    write_floats(out, p.weights);
    write_floats(out, p.bias);
}
inline void read_conv(std::istream& in, ConvParams& p) {
    read_floats(in, p.weights);
    read_floats(in, p.bias);
}
inline void write_block(std::ostream& out, const NafBlockParams& b) {
    write_floats(out, b.ln1_gamma);
    write_floats(out, b.ln1_beta);
    write_conv(out, b.expand1);
    write_conv(out, b.dwconv);
    write_conv(out, b.sca_conv);
    write_conv(out, b.project1);
    write_floats(out, b.ln2_gamma);
    write_floats(out, b.ln2_beta);
    write_conv(out, b.expand2);
    write_conv(out, b.project2);
}
inline void read_block(std::istream& in, NafBlockParams& b) {
    read_floats(in, b.ln1_gamma);
    read_floats(in, b.ln1_beta);
    read_conv(in, b.expand1);
    read_conv(in, b.dwconv);
    read_conv(in, b.sca_conv);
    read_conv(in, b.project1);
    read_floats(in, b.ln2_gamma);
    read_floats(in, b.ln2_beta);
    read_conv(in, b.expand2);
    read_conv(in, b.project2);
}
inline void write_gate(std::ostream& out, const AttentionGateParams& g) {
    write_conv(out, g.w_e);
    write_conv(out, g.w_d);
    write_floats(out, g.b_e);
    write_conv(out, g.psi);
}
inline void read_gate(std::istream& in, AttentionGateParams& g) {
    read_conv(in, g.w_e);
    read_conv(in, g.w_d);
    read_floats(in, g.b_e);
    read_conv(in, g.psi);
}

}  // namespace detail

inline void save_anafnet_params(const std::string& path, const AnafNetParams& p) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write(detail::kParamMagic, 4);
    const std::int32_t header[3] = {p.config.in_channels, p.config.width, p.config.depth};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    detail::write_conv(out, p.intro);
    for (int s = 0; s < p.config.depth; ++s) {
        detail::write_block(out, p.enc_blocks[s]);
        detail::write_conv(out, p.downs[s]);
    }
    detail::write_block(out, p.middle);
    for (int s = 0; s < p.config.depth; ++s) {
        detail::write_conv(out, p.ups[s]);
        detail::write_gate(out, p.gates[s]);
        detail::write_block(out, p.dec_blocks[s]);
    }
    detail::write_conv(out, p.ending);
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline AnafNetParams load_anafnet_params(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, detail::kParamMagic, 4) != 0)
        throw std::runtime_error("not an anafnet parameter file: " + path);
    std::int32_t header[3];
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    if (in.gcount() != sizeof(header)) throw std::runtime_error("parameter header truncated");
    AnafNetConfig cfg{header[0], header[1], header[2]};
    if (cfg.in_channels < 1 || cfg.width < 1 || cfg.depth < 0 || cfg.depth > 8)
        throw std::runtime_error("parameter header out of range");
    AnafNetParams p = make_anafnet_params(cfg, nullptr);
    detail::read_conv(in, p.intro);
    for (int s = 0; s < cfg.depth; ++s) {
        detail::read_block(in, p.enc_blocks[s]);
        detail::read_conv(in, p.downs[s]);
    }
    detail::read_block(in, p.middle);
    for (int s = 0; s < cfg.depth; ++s) {
        detail::read_conv(in, p.ups[s]);
        detail::read_gate(in, p.gates[s]);
        detail::read_block(in, p.dec_blocks[s]);
    }
    detail::read_conv(in, p.ending);
    return p;
}

}  // namespace panoforge
