#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace panoforge {

// Row-major interleaved raster, 1 or 3 channels.
struct ImageU8 {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<std::uint8_t> data;

    ImageU8() = default;
    ImageU8(int w, int h, int c, std::uint8_t fill = 0)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * h * c, fill) {
        if (w < 1 || h < 1 || (c != 1 && c != 3))
            throw std::invalid_argument("ImageU8: bad dimensions");
    }

    std::uint8_t& at(int x, int y, int c = 0) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::uint8_t at(int x, int y, int c = 0) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    bool operator==(const ImageU8&) const = default;
};

// Float raster, nominal sample range [0,1].
struct ImageF32 {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<float> data;

    ImageF32() = default;
    ImageF32(int w, int h, int c, float fill = 0.f)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * h * c, fill) {
        if (w < 1 || h < 1 || (c != 1 && c != 3))
            throw std::invalid_argument("ImageF32: bad dimensions");
    }

    float& at(int x, int y, int c = 0) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    float at(int x, int y, int c = 0) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
};

// BT.601 luma; 1-channel input is passed through scaled by 1/255.
inline ImageF32 to_grayscale(const ImageU8& img) {
    ImageF32 out(img.width, img.height, 1);
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
    if (img.channels == 1) {
        for (std::size_t i = 0; i < n; ++i)
            out.data[i] = img.data[i] / 255.f;
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint8_t* p = &img.data[i * 3];
            out.data[i] = (0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2]) / 255.f;
        }
    }
    return out;
}

inline ImageU8 to_u8(const ImageF32& img) {
    ImageU8 out(img.width, img.height, img.channels);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        float v = std::clamp(img.data[i], 0.f, 1.f);
        out.data[i] = static_cast<std::uint8_t>(std::lround(v * 255.f));
    }
    return out;
}

inline ImageF32 to_f32(const ImageU8& img) {
    ImageF32 out(img.width, img.height, img.channels);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        out.data[i] = img.data[i] / 255.f;
    return out;
}

inline float sample_bilinear(const ImageF32& img, float x, float y, int c = 0) {
    x = std::clamp(x, 0.f, static_cast<float>(img.width - 1));
    y = std::clamp(y, 0.f, static_cast<float>(img.height - 1));
    const int x0 = std::min(static_cast<int>(x), img.width - 2 >= 0 ? img.width - 2 : 0);
    const int y0 = std::min(static_cast<int>(y), img.height - 2 >= 0 ? img.height - 2 : 0);
    const int x1 = std::min(x0 + 1, img.width - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const float fx = x - x0, fy = y - y0;
    return img.at(x0, y0, c) * (1 - fx) * (1 - fy) + img.at(x1, y0, c) * fx * (1 - fy) +
           img.at(x0, y1, c) * (1 - fx) * fy + img.at(x1, y1, c) * fx * fy;
}

// Separable Gaussian, kernel clipped at 3 sigma, edges clamped.
inline ImageF32 gaussian_blur(const ImageF32& img, float sigma) {
    if (sigma <= 0.f) return img;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.f * sigma)));
    std::vector<float> kernel(2 * radius + 1);
    float sum = 0.f;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5f * i * i / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (float& k : kernel) k /= sum;

    ImageF32 tmp(img.width, img.height, img.channels);
    ImageF32 out(img.width, img.height, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                float acc = 0.f;
                for (int i = -radius; i <= radius; ++i) {
                    int xx = std::clamp(x + i, 0, img.width - 1);
                    acc += kernel[i + radius] * img.at(xx, y, c);
                }
                tmp.at(x, y, c) = acc;
            }
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                float acc = 0.f;
                for (int i = -radius; i <= radius; ++i) {
                    int yy = std::clamp(y + i, 0, img.height - 1);
                    acc += kernel[i + radius] * tmp.at(x, yy, c);
                }
                out.at(x, y, c) = acc;
            }
    return out;
}

inline ImageF32 resize_bilinear(const ImageF32& img, int new_w, int new_h) {
    if (new_w < 1 || new_h < 1)
        throw std::invalid_argument("resize_bilinear: bad target size");
    ImageF32 out(new_w, new_h, img.channels);
    const float sx = static_cast<float>(img.width) / new_w;
    const float sy = static_cast<float>(img.height) / new_h;
    for (int y = 0; y < new_h; ++y)
        for (int x = 0; x < new_w; ++x)
            for (int c = 0; c < img.channels; ++c)
                out.at(x, y, c) =
                    sample_bilinear(img, (x + 0.5f) * sx - 0.5f, (y + 0.5f) * sy - 0.5f, c);
    return out;
}

struct Pyramid {
    std::vector<ImageF32> levels;
    double scale_factor = 1.2;
};

// Level 0 is the input; each further level is pre-blurred then resampled
// from the previous one. Rejects configurations whose smallest level would
// drop below 8x8.
inline Pyramid build_pyramid(const ImageF32& img, int levels, double scale_factor) {
    if (levels < 1) throw std::invalid_argument("build_pyramid: levels must be >= 1");
    if (scale_factor <= 1.0) throw std::invalid_argument("build_pyramid: scale_factor must be > 1");
    const int min_w = static_cast<int>(img.width / std::pow(scale_factor, levels - 1));
    const int min_h = static_cast<int>(img.height / std::pow(scale_factor, levels - 1));
    if (min_w < 8 || min_h < 8)
        throw std::invalid_argument("build_pyramid: smallest level would fall below 8x8");

    Pyramid pyr;
    pyr.scale_factor = scale_factor;
    pyr.levels.push_back(img);
    const float sigma = 0.8f * std::sqrt(static_cast<float>(scale_factor * scale_factor - 1.0));
    for (int k = 1; k < levels; ++k) {
        const int w = static_cast<int>(img.width / std::pow(scale_factor, k));
        const int h = static_cast<int>(img.height / std::pow(scale_factor, k));
        ImageF32 blurred = gaussian_blur(pyr.levels.back(), sigma);
        pyr.levels.push_back(resize_bilinear(blurred, w, h));
    }
    return pyr;
}

}  // namespace panoforge
