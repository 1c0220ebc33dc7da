#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include "panoforge/image.hpp"

namespace panoforge {

struct MetricsReport {
    double brenner_mean = 0;
    double brenner_sum = 0;
    double entropy_bits = 0;
    double contrast = 0;
    std::optional<double> psnr_db;  // present only when a reference is given
};

namespace detail {
inline ImageU8 gray_u8(const ImageU8& img) {
    if (img.channels == 1) return img;
    ImageU8 out(img.width, img.height, 1);
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* p = &img.data[i * 3];
        out.data[i] = static_cast<std::uint8_t>(
            std::lround(0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]));
    }
    return out;
}
}  // namespace detail

// Mean of squared horizontal 2-pixel differences, intensities in 0..255.
inline double brenner_gradient(const ImageU8& img) {
    if (img.width < 3) throw std::invalid_argument("brenner_gradient: width must be >= 3");
    const ImageU8 g = detail::gray_u8(img);
    double sum = 0;
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x + 2 < g.width; ++x) {
            const double d = static_cast<double>(g.at(x + 2, y)) - g.at(x, y);
            sum += d * d;
        }
    const double count = static_cast<double>(g.height) * (g.width - 2);
    return sum / count;
}

inline double brenner_gradient_sum(const ImageU8& img) {
    if (img.width < 3) throw std::invalid_argument("brenner_gradient: width must be >= 3");
    return brenner_gradient(img) * static_cast<double>(img.height) * (img.width - 2);
}

// Shannon entropy of the 256-bin intensity histogram, in bits.
inline double entropy(const ImageU8& img) {
    const ImageU8 g = detail::gray_u8(img);
    std::array<std::size_t, 256> hist{};
    for (std::uint8_t v : g.data) ++hist[v];
    const double n = static_cast<double>(g.data.size());
    double h = 0;
    for (std::size_t count : hist) {
        if (count == 0) continue;
        const double p = count / n;
        h -= p * std::log2(p);
    }
    return h;
}

// Intensity range, max minus min over 0..255.
inline double contrast(const ImageU8& img) {
    const ImageU8 g = detail::gray_u8(img);
    std::uint8_t lo = 255, hi = 0;
    for (std::uint8_t v : g.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return static_cast<double>(hi) - lo;
}

// 10*log10(255^2 / MSE); +inf for identical images.
inline double psnr(const ImageU8& a, const ImageU8& b) {
    if (a.width != b.width || a.height != b.height || a.channels != b.channels)
        throw std::invalid_argument("psnr: dimension mismatch");
    double mse = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

inline MetricsReport compute_metrics(const ImageU8& img, const ImageU8* reference = nullptr) {
    MetricsReport r;
    r.brenner_mean = brenner_gradient(img);
    r.brenner_sum = brenner_gradient_sum(img);
    r.entropy_bits = entropy(img);
    r.contrast = contrast(img);
    if (reference) r.psnr_db = psnr(*reference, img);
    return r;
}

}  // namespace panoforge
