#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "panoforge/image.hpp"
#include "panoforge/rng.hpp"

namespace panoforge {

struct Keypoint {
    float x = 0, y = 0;      // level-0 coordinates
    int octave = 0;
    float angle = 0;         // [0, 2pi)
    float response = 0;
};

struct BinaryDescriptor {
    int length_bits = 0;     // 256 (BRIEF) or 512 (FREAK)
    std::vector<std::uint8_t> bytes;

    void set_bit(int i) { bytes[i >> 3] |= static_cast<std::uint8_t>(1u << (i & 7)); }
    bool get_bit(int i) const { return (bytes[i >> 3] >> (i & 7)) & 1; }
};

inline int hamming_distance(const BinaryDescriptor& a, const BinaryDescriptor& b) {
    if (a.length_bits != b.length_bits)
        throw std::invalid_argument("hamming_distance: descriptor length mismatch");
    int d = 0;
    std::size_t i = 0;
    for (; i + 8 <= a.bytes.size(); i += 8) {
        std::uint64_t x, y;
        std::memcpy(&x, &a.bytes[i], 8);
        std::memcpy(&y, &b.bytes[i], 8);
        d += std::popcount(x ^ y);
    }
    for (; i < a.bytes.size(); ++i)
        d += std::popcount(static_cast<unsigned>(a.bytes[i] ^ b.bytes[i]));
    return d;
}

namespace detail {

constexpr float kFastThreshold = 20.f / 255.f;
constexpr int kOrientationRadius = 15;
constexpr int kDetectMargin = kOrientationRadius + 2;
constexpr int kDescriptorMargin = 32;

// Bresenham circle of radius 3 used by the FAST-9 segment test.
constexpr int kFastCircle[16][2] = {{0, -3},  {1, -3},  {2, -2},  {3, -1}, {3, 0},  {3, 1},
                                    {2, 2},   {1, 3},   {0, 3},   {-1, 3}, {-2, 2}, {-3, 1},
                                    {-3, 0},  {-3, -1}, {-2, -2}, {-1, -3}};

// Returns the FAST corner score (sum of exceedance over the best arc) or 0.
inline float fast_score(const ImageF32& img, int x, int y, float t) {
    const float ip = img.at(x, y);
    float diffs[16];
    for (int i = 0; i < 16; ++i)
        diffs[i] = img.at(x + kFastCircle[i][0], y + kFastCircle[i][1]) - ip;

    float best = 0;
    for (int sign = 0; sign < 2; ++sign) {
        int run = 0;
        float run_sum = 0, run_best = 0;
        for (int i = 0; i < 32; ++i) {  // wrap once around to catch arcs crossing index 0
            const float d = sign == 0 ? diffs[i & 15] : -diffs[i & 15];
            if (d > t) {
                ++run;
                run_sum += d - t;
                if (run >= 9) run_best = std::max(run_best, run_sum);
                if (run >= 25) break;  // full wrap plus the longest useful arc
            } else {
                run = 0;
                run_sum = 0;
            }
        }
        best = std::max(best, run_best);
    }
    return best;
}

inline float harris_response(const ImageF32& img, int x, int y) {
    double sxx = 0, syy = 0, sxy = 0;
    for (int dy = -3; dy <= 3; ++dy)
        for (int dx = -3; dx <= 3; ++dx) {
            const int px = x + dx, py = y + dy;
            const double gx = img.at(px + 1, py) - img.at(px - 1, py);
            const double gy = img.at(px, py + 1) - img.at(px, py - 1);
            sxx += gx * gx;
            syy += gy * gy;
            sxy += gx * gy;
        }
    return static_cast<float>(sxx * syy - sxy * sxy - 0.04 * (sxx + syy) * (sxx + syy));
}

}  // namespace detail

// Intensity-centroid orientation over a radius-15 circular patch.
inline float orientation(const ImageF32& img, float kx, float ky) {
    const int cx = static_cast<int>(std::lround(kx));
    const int cy = static_cast<int>(std::lround(ky));
    const int r = detail::kOrientationRadius;
    if (cx < r || cy < r || cx >= img.width - r || cy >= img.height - r)
        throw std::invalid_argument("orientation: centroid patch not fully inside image");
    double m01 = 0, m10 = 0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            if (dx * dx + dy * dy > r * r) continue;
            const double v = img.at(cx + dx, cy + dy);
            m10 += dx * v;
            m01 += dy * v;
        }
    if (m01 == 0 && m10 == 0) return 0.f;
    double a = std::atan2(m01, m10);
    if (a < 0) a += 2.0 * std::numbers::pi;
    return static_cast<float>(a);
}

// Multi-scale FAST-9 with Harris ranking and intensity-centroid orientation.
// Returns at most max_keypoints, sorted by response, best first.
inline std::vector<Keypoint> detect_orb(const ImageF32& img, int max_keypoints, int levels = 8,
                                        double scale_factor = 1.2) {
    if (max_keypoints < 1) throw std::invalid_argument("detect_orb: max_keypoints must be >= 1");
    // Shrink the level count if the image cannot support it.
    while (levels > 1) {
        const double s = std::pow(scale_factor, levels - 1);
        if (img.width / s >= 2 * detail::kDetectMargin + 8 &&
            img.height / s >= 2 * detail::kDetectMargin + 8)
            break;
        --levels;
    }
    const Pyramid pyr = build_pyramid(img, levels, scale_factor);

    std::vector<Keypoint> all;
    for (int lvl = 0; lvl < static_cast<int>(pyr.levels.size()); ++lvl) {
        const ImageF32& li = pyr.levels[lvl];
        const float level_scale = static_cast<float>(std::pow(scale_factor, lvl));
        const int margin = detail::kDetectMargin;
        ImageF32 score(li.width, li.height, 1);
        for (int y = margin; y < li.height - margin; ++y)
            for (int x = margin; x < li.width - margin; ++x)
                score.at(x, y) = detail::fast_score(li, x, y, detail::kFastThreshold);
        for (int y = margin; y < li.height - margin; ++y)
            for (int x = margin; x < li.width - margin; ++x) {
                const float s = score.at(x, y);
                if (s <= 0) continue;
                bool is_max = true;
                for (int dy = -1; dy <= 1 && is_max; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dx == 0 && dy == 0) continue;
                        const float o = score.at(x + dx, y + dy);
                        // Strict on one side so plateau corners yield one keypoint.
                        if (o > s || (o == s && (dy < 0 || (dy == 0 && dx < 0)))) {
                            is_max = false;
                            break;
                        }
                    }
                if (!is_max) continue;
                Keypoint kp;
                kp.x = x * level_scale;
                kp.y = y * level_scale;
                kp.octave = lvl;
                kp.response = detail::harris_response(li, x, y);
                kp.angle = orientation(li, static_cast<float>(x), static_cast<float>(y));
                all.push_back(kp);
            }
    }
    std::stable_sort(all.begin(), all.end(),
                     [](const Keypoint& a, const Keypoint& b) { return a.response > b.response; });
    if (static_cast<int>(all.size()) > max_keypoints) all.resize(max_keypoints);
    return all;
}

struct DescribeResult {
    std::vector<Keypoint> keypoints;             // the kept keypoints, input order
    std::vector<BinaryDescriptor> descriptors;   // aligned with keypoints
    std::vector<std::size_t> dropped_indices;    // input indices too close to a border
};

namespace detail {

struct BriefPair {
    int x1, y1, x2, y2;
};

// 256 fixed pseudo-random point pairs inside a 31x31 patch. Generated once
// from a fixed seed so every build produces the same table.
inline const std::vector<BriefPair>& brief_pattern() {
    static const std::vector<BriefPair> pattern = [] {
        std::vector<BriefPair> p;
        Rng rng(0xB51EF);
        while (p.size() < 256) {
            BriefPair bp{static_cast<int>(rng.next_below(27)) - 13,
                         static_cast<int>(rng.next_below(27)) - 13,
                         static_cast<int>(rng.next_below(27)) - 13,
                         static_cast<int>(rng.next_below(27)) - 13};
            if (bp.x1 == bp.x2 && bp.y1 == bp.y2) continue;
            p.push_back(bp);
        }
        return p;
    }();
    return pattern;
}

struct FreakField {
    float x, y;       // offset from the keypoint before rotation
    int box_halfwidth;
};

struct FreakPattern {
    std::vector<FreakField> fields;            // 43 = 7 rings x 6 + center
    std::vector<std::pair<int, int>> pairs;    // 512 field index pairs
    std::vector<float> ring_radius;            // outer to inner
    std::vector<int> ring_field_halfwidth;     // outer to inner
};

// Retina-like grid: 7 rings of 6 overlapping fields plus a center field,
// radius and field size shrinking toward the center.
inline const FreakPattern& freak_pattern() {
    static const FreakPattern pattern = [] {
        FreakPattern p;
        const float outer_radius = 22.f;
        const float ratio = 0.7f;
        const int halfwidths[7] = {9, 7, 5, 4, 3, 2, 1};
        float radius = outer_radius;
        for (int ring = 0; ring < 7; ++ring) {
            p.ring_radius.push_back(radius);
            p.ring_field_halfwidth.push_back(halfwidths[ring]);
            const float phase = (ring % 2 == 1) ? std::numbers::pi_v<float> / 6.f : 0.f;
            for (int j = 0; j < 6; ++j) {
                const float a = phase + j * std::numbers::pi_v<float> / 3.f;
                p.fields.push_back({radius * std::cos(a), radius * std::sin(a),
                                    halfwidths[ring]});
            }
            radius *= ratio;
        }
        p.fields.push_back({0.f, 0.f, 1});  // center

        std::vector<std::pair<int, int>> candidates;
        const int n = static_cast<int>(p.fields.size());
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) candidates.emplace_back(i, j);
        Rng rng(0xF4EA4);
        for (std::size_t i = candidates.size() - 1; i > 0; --i)
            std::swap(candidates[i], candidates[rng.next_below(static_cast<std::uint32_t>(i + 1))]);
        candidates.resize(512);
        p.pairs = std::move(candidates);
        return p;
    }();
    return pattern;
}

inline bool inside_descriptor_margin(const ImageF32& img, const Keypoint& kp) {
    return kp.x >= kDescriptorMargin && kp.y >= kDescriptorMargin &&
           kp.x < img.width - kDescriptorMargin && kp.y < img.height - kDescriptorMargin;
}

// Summed-area table for box-mean receptive fields.
struct Integral {
    int width, height;
    std::vector<double> sums;  // (w+1) x (h+1)

    explicit Integral(const ImageF32& img) : width(img.width), height(img.height) {
        sums.assign(static_cast<std::size_t>(width + 1) * (height + 1), 0.0);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                at(x + 1, y + 1) = img.at(x, y) + at(x, y + 1) + at(x + 1, y) - at(x, y);
    }
    double& at(int x, int y) { return sums[static_cast<std::size_t>(y) * (width + 1) + x]; }
    double at(int x, int y) const { return sums[static_cast<std::size_t>(y) * (width + 1) + x]; }

    double box_mean(int cx, int cy, int hw) const {
        const int x0 = std::clamp(cx - hw, 0, width - 1);
        const int y0 = std::clamp(cy - hw, 0, height - 1);
        const int x1 = std::clamp(cx + hw, 0, width - 1);
        const int y1 = std::clamp(cy + hw, 0, height - 1);
        const double s = at(x1 + 1, y1 + 1) - at(x0, y1 + 1) - at(x1 + 1, y0) + at(x0, y0);
        return s / (static_cast<double>(x1 - x0 + 1) * (y1 - y0 + 1));
    }
};

}  // namespace detail

// Steered BRIEF-256. Keypoints closer than 32 px to a border are dropped
// and reported by input index.
inline DescribeResult describe_brief(const ImageF32& img, const std::vector<Keypoint>& kps) {
    const ImageF32 smoothed = gaussian_blur(img, 2.f);
    const auto& pattern = detail::brief_pattern();
    DescribeResult res;
    for (std::size_t i = 0; i < kps.size(); ++i) {
        const Keypoint& kp = kps[i];
        if (!detail::inside_descriptor_margin(img, kp)) {
            res.dropped_indices.push_back(i);
            continue;
        }
        const float ca = std::cos(kp.angle), sa = std::sin(kp.angle);
        const int cx = static_cast<int>(std::lround(kp.x));
        const int cy = static_cast<int>(std::lround(kp.y));
        BinaryDescriptor d;
        d.length_bits = 256;
        d.bytes.assign(32, 0);
        for (int b = 0; b < 256; ++b) {
            const auto& pr = pattern[b];
            const int px = cx + static_cast<int>(std::lround(ca * pr.x1 - sa * pr.y1));
            const int py = cy + static_cast<int>(std::lround(sa * pr.x1 + ca * pr.y1));
            const int qx = cx + static_cast<int>(std::lround(ca * pr.x2 - sa * pr.y2));
            const int qy = cy + static_cast<int>(std::lround(sa * pr.x2 + ca * pr.y2));
            if (smoothed.at(px, py) < smoothed.at(qx, qy)) d.set_bit(b);
        }
        res.keypoints.push_back(kp);
        res.descriptors.push_back(std::move(d));
    }
    return res;
}

// FREAK-512 over box-approximated receptive fields, pattern rotated by the
// keypoint angle. Border handling matches describe_brief.
inline DescribeResult describe_freak(const ImageF32& img, const std::vector<Keypoint>& kps) {
    const detail::Integral integral(img);
    const auto& pattern = detail::freak_pattern();
    DescribeResult res;
    std::vector<double> field_values(pattern.fields.size());
    for (std::size_t i = 0; i < kps.size(); ++i) {
        const Keypoint& kp = kps[i];
        if (!detail::inside_descriptor_margin(img, kp)) {
            res.dropped_indices.push_back(i);
            continue;
        }
        const float ca = std::cos(kp.angle), sa = std::sin(kp.angle);
        for (std::size_t f = 0; f < pattern.fields.size(); ++f) {
            const auto& fl = pattern.fields[f];
            const int fx = static_cast<int>(std::lround(kp.x + ca * fl.x - sa * fl.y));
            const int fy = static_cast<int>(std::lround(kp.y + sa * fl.x + ca * fl.y));
            field_values[f] = integral.box_mean(fx, fy, fl.box_halfwidth);
        }
        BinaryDescriptor d;
        d.length_bits = 512;
        d.bytes.assign(64, 0);
        for (int b = 0; b < 512; ++b) {
            const auto& [fa, fb] = pattern.pairs[b];
            if (field_values[fa] < field_values[fb]) d.set_bit(b);
        }
        res.keypoints.push_back(kp);
        res.descriptors.push_back(std::move(d));
    }
    return res;
}

// ---- binary container for the detect -> match handoff ----

namespace detail {
constexpr char kFeatureMagic[4] = {'P', 'F', 'K', 'P'};
}

inline void save_features(const std::string& path, const DescribeResult& feats) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write(detail::kFeatureMagic, 4);
    const std::uint32_t count = static_cast<std::uint32_t>(feats.keypoints.size());
    const std::uint32_t desc_bytes =
        feats.descriptors.empty() ? 0 : static_cast<std::uint32_t>(feats.descriptors[0].bytes.size());
    out.write(reinterpret_cast<const char*>(&count), 4);
    out.write(reinterpret_cast<const char*>(&desc_bytes), 4);
    for (std::uint32_t i = 0; i < count; ++i) {
        const Keypoint& kp = feats.keypoints[i];
        const float fields[4] = {kp.x, kp.y, kp.angle, kp.response};
        const std::int32_t octave = kp.octave;
        out.write(reinterpret_cast<const char*>(fields), sizeof(fields));
        out.write(reinterpret_cast<const char*>(&octave), 4);
        out.write(reinterpret_cast<const char*>(feats.descriptors[i].bytes.data()), desc_bytes);
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline DescribeResult load_features(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, detail::kFeatureMagic, 4) != 0)
        throw std::runtime_error("not a feature file: " + path);
    std::uint32_t count = 0, desc_bytes = 0;
    in.read(reinterpret_cast<char*>(&count), 4);
    in.read(reinterpret_cast<char*>(&desc_bytes), 4);
    if (!in || (desc_bytes != 0 && desc_bytes != 32 && desc_bytes != 64))
        throw std::runtime_error("bad feature file header: " + path);
    DescribeResult res;
    for (std::uint32_t i = 0; i < count; ++i) {
        float fields[4];
        std::int32_t octave;
        in.read(reinterpret_cast<char*>(fields), sizeof(fields));
        in.read(reinterpret_cast<char*>(&octave), 4);
        BinaryDescriptor d;
        d.length_bits = static_cast<int>(desc_bytes) * 8;
        d.bytes.resize(desc_bytes);
        in.read(reinterpret_cast<char*>(d.bytes.data()), desc_bytes);
        if (!in) throw std::runtime_error("feature file truncated: " + path);
        res.keypoints.push_back({fields[0], fields[1], octave, fields[2], fields[3]});
        res.descriptors.push_back(std::move(d));
    }
    return res;
}

}  // namespace panoforge
