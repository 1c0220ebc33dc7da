#pragma once

#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "panoforge/image.hpp"

namespace panoforge {

struct GeometryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Vec2 {
    double x = 0, y = 0;
};

// 3x3 planar projective map, row-major. Kept normalized to unit Frobenius
// norm with the largest-magnitude entry positive.
struct Homography {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Homography identity() { return {}; }

    static Homography from_array(const std::array<double, 9>& a) {
        Homography h;
        h.m = a;
        h.normalize();
        return h;
    }

    static Homography translation(double tx, double ty) {
        return from_array({1, 0, tx, 0, 1, ty, 0, 0, 1});
    }

    void normalize() {
        double norm = 0;
        for (double v : m) norm += v * v;
        norm = std::sqrt(norm);
        if (norm < 1e-300) throw GeometryError("homography is the zero matrix");
        double big = 0;
        for (double v : m)
            if (std::abs(v) > std::abs(big)) big = v;
        const double s = (big < 0 ? -1.0 : 1.0) / norm;
        for (double& v : m) v *= s;
    }

    double det() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }

    Homography inverse() const {
        const double d = det();
        if (std::abs(d) < 1e-12) throw GeometryError("homography not invertible");
        std::array<double, 9> inv;
        inv[0] = (m[4] * m[8] - m[5] * m[7]) / d;
        inv[1] = (m[2] * m[7] - m[1] * m[8]) / d;
        inv[2] = (m[1] * m[5] - m[2] * m[4]) / d;
        inv[3] = (m[5] * m[6] - m[3] * m[8]) / d;
        inv[4] = (m[0] * m[8] - m[2] * m[6]) / d;
        inv[5] = (m[2] * m[3] - m[0] * m[5]) / d;
        inv[6] = (m[3] * m[7] - m[4] * m[6]) / d;
        inv[7] = (m[1] * m[6] - m[0] * m[7]) / d;
        inv[8] = (m[0] * m[4] - m[1] * m[3]) / d;
        return from_array(inv);
    }
};

// h1 applied after h2.
inline Homography compose(const Homography& h1, const Homography& h2) {
    std::array<double, 9> r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) r[i * 3 + j] += h1.m[i * 3 + k] * h2.m[k * 3 + j];
    return Homography::from_array(r);
}

inline Vec2 transfer(const Homography& h, double x, double y) {
    const double w = h.m[6] * x + h.m[7] * y + h.m[8];
    if (std::abs(w) <= 1e-12) throw GeometryError("point maps to infinity");
    return {(h.m[0] * x + h.m[1] * y + h.m[2]) / w, (h.m[3] * x + h.m[4] * y + h.m[5]) / w};
}

namespace detail {

struct NormalizeTransform {
    double scale = 1, cx = 0, cy = 0;
    Vec2 apply(const Vec2& p) const { return {(p.x - cx) * scale, (p.y - cy) * scale}; }
};

// Hartley normalization: centroid at origin, mean distance sqrt(2).
inline NormalizeTransform hartley(const std::vector<Vec2>& pts) {
    NormalizeTransform t;
    for (const auto& p : pts) {
        t.cx += p.x;
        t.cy += p.y;
    }
    t.cx /= pts.size();
    t.cy /= pts.size();
    double mean_dist = 0;
    for (const auto& p : pts) mean_dist += std::hypot(p.x - t.cx, p.y - t.cy);
    mean_dist /= pts.size();
    t.scale = mean_dist > 1e-12 ? std::sqrt(2.0) / mean_dist : 1.0;
    return t;
}

}  // namespace detail

// Normalized DLT. Throws on degenerate configurations (the two smallest
// eigenvalues of AtA nearly equal, i.e. the null space is not unique).
inline Homography estimate_homography_dlt(const std::vector<Vec2>& points_a,
                                          const std::vector<Vec2>& points_b) {
    if (points_a.size() != points_b.size())
        throw GeometryError("correspondence lists differ in length");
    const std::size_t n = points_a.size();
    if (n < 4) throw GeometryError("need at least 4 correspondences");

    const auto ta = detail::hartley(points_a);
    const auto tb = detail::hartley(points_b);

    Eigen::Matrix<double, 9, 9> ata = Eigen::Matrix<double, 9, 9>::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 a = ta.apply(points_a[i]);
        const Vec2 b = tb.apply(points_b[i]);
        Eigen::Matrix<double, 1, 9> r1, r2;
        r1 << -a.x, -a.y, -1, 0, 0, 0, b.x * a.x, b.x * a.y, b.x;
        r2 << 0, 0, 0, -a.x, -a.y, -1, b.y * a.x, b.y * a.y, b.y;
        ata += r1.transpose() * r1 + r2.transpose() * r2;
    }

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 9, 9>> eig(ata);
    const auto& evals = eig.eigenvalues();
    const double scale = std::max(evals(8), 1.0);
    // The null space must be unique: the second-smallest eigenvalue has to
    // clearly dominate the smallest.
    if (evals(1) - evals(0) <= 1e-8 * scale)
        throw GeometryError("degenerate correspondence configuration");
    Eigen::Matrix<double, 9, 1> hvec = eig.eigenvectors().col(0);

    // Denormalize: H = Tb^-1 * Hn * Ta.
    Eigen::Matrix3d hn;
    hn << hvec(0), hvec(1), hvec(2), hvec(3), hvec(4), hvec(5), hvec(6), hvec(7), hvec(8);
    Eigen::Matrix3d mat_ta, mat_tb_inv;
    mat_ta << ta.scale, 0, -ta.scale * ta.cx, 0, ta.scale, -ta.scale * ta.cy, 0, 0, 1;
    mat_tb_inv << 1 / tb.scale, 0, tb.cx, 0, 1 / tb.scale, tb.cy, 0, 0, 1;
    Eigen::Matrix3d h = mat_tb_inv * hn * mat_ta;

    Homography out = Homography::from_array(
        {h(0, 0), h(0, 1), h(0, 2), h(1, 0), h(1, 1), h(1, 2), h(2, 0), h(2, 1), h(2, 2)});
    if (std::abs(out.det()) <= 1e-12) throw GeometryError("estimated homography is singular");
    return out;
}

struct WarpResult {
    ImageF32 image;
    ImageF32 alpha;  // 1 channel, 1 where the inverse map lands inside the source
};

// Inverse-map warp into out_w x out_h; h maps source coords to output coords.
inline WarpResult warp_image(const ImageF32& img, const Homography& h, int out_w, int out_h) {
    const Homography hinv = h.inverse();
    WarpResult res{ImageF32(out_w, out_h, img.channels), ImageF32(out_w, out_h, 1)};
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            Vec2 s;
            try {
                s = transfer(hinv, x, y);
            } catch (const GeometryError&) {
                continue;
            }
            if (s.x < 0 || s.y < 0 || s.x > img.width - 1 || s.y > img.height - 1) continue;
            res.alpha.at(x, y) = 1.f;
            for (int c = 0; c < img.channels; ++c)
                res.image.at(x, y, c) =
                    sample_bilinear(img, static_cast<float>(s.x), static_cast<float>(s.y), c);
        }
    return res;
}

// 9 whitespace-separated decimals, row-major.
inline Homography parse_homography_text(const std::string& text) {
    std::array<double, 9> a{};
    std::istringstream in(text);
    for (double& v : a)
        if (!(in >> v)) throw GeometryError("homography text needs 9 numbers");
    return Homography::from_array(a);
}

inline std::string format_homography_text(const Homography& h) {
    std::ostringstream out;
    out.precision(17);
    for (int i = 0; i < 9; ++i) out << h.m[i] << (i % 3 == 2 ? '\n' : ' ');
    return out.str();
}

}  // namespace panoforge
