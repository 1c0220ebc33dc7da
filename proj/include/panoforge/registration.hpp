#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "panoforge/features.hpp"
#include "panoforge/image.hpp"
#include "panoforge/matching.hpp"

namespace panoforge {

enum class DescriptorKind { Brief, Freak };
enum class FilterKind { None, Ransac, Gms };

struct RegistrationConfig {
    int max_keypoints = 5000;        // paper protocol
    DescriptorKind descriptor = DescriptorKind::Freak;
    FilterKind filter = FilterKind::Gms;
    GmsParams gms;
    double ransac_confidence = 0.99; // paper protocol
    double ransac_threshold_px = 3.0;
    std::uint64_t seed = 0;

    // Table 2 row naming: ORB+FREAK+GMS is "ours".
    std::string label() const {
        if (filter == FilterKind::Gms && descriptor == DescriptorKind::Freak) return "ours";
        std::string s = "ORB";
        s += descriptor == DescriptorKind::Freak ? "+FREAK" : "";
        switch (filter) {
            case FilterKind::Ransac: s += "+RANSAC"; break;
            case FilterKind::Gms: s += "+GMS"; break;
            case FilterKind::None: s += "+BF"; break;
        }
        return s;
    }
};

inline DescriptorKind parse_descriptor(const std::string& name) {
    if (name == "brief") return DescriptorKind::Brief;
    if (name == "freak") return DescriptorKind::Freak;
    throw std::invalid_argument("unknown descriptor '" + name + "' (expected brief|freak)");
}

inline FilterKind parse_filter(const std::string& name) {
    if (name == "none") return FilterKind::None;
    if (name == "ransac") return FilterKind::Ransac;
    if (name == "gms") return FilterKind::Gms;
    throw std::invalid_argument("unknown filter '" + name + "' (expected ransac|gms|none)");
}

struct RegistrationResult {
    std::vector<Keypoint> kps_a, kps_b;   // descriptor-aligned keypoints
    std::vector<Match> raw_matches;       // brute-force nearest neighbors
    std::vector<Match> matches;           // after the configured filter
    bool ransac_success = false;
    Homography ransac_homography;
    bool gms_degenerate = false;
};

inline DescribeResult detect_and_describe(const ImageF32& gray, const RegistrationConfig& cfg) {
    const std::vector<Keypoint> kps = detect_orb(gray, cfg.max_keypoints);
    return cfg.descriptor == DescriptorKind::Brief ? describe_brief(gray, kps)
                                                   : describe_freak(gray, kps);
}

// ORB detection, BRIEF or FREAK description, brute-force matching, then the
// configured outlier filter.
inline RegistrationResult register_pair(const ImageF32& gray_a, const ImageF32& gray_b,
                                        const RegistrationConfig& cfg) {
    RegistrationResult res;
    const DescribeResult fa = detect_and_describe(gray_a, cfg);
    const DescribeResult fb = detect_and_describe(gray_b, cfg);
    res.kps_a = fa.keypoints;
    res.kps_b = fb.keypoints;
    if (fa.descriptors.empty() || fb.descriptors.empty()) return res;

    res.raw_matches = match_bruteforce(fa.descriptors, fb.descriptors);
    switch (cfg.filter) {
        case FilterKind::None:
            res.matches = res.raw_matches;
            break;
        case FilterKind::Gms: {
            const GmsResult g =
                filter_gms(res.raw_matches, res.kps_a, res.kps_b, gray_a.width, gray_a.height,
                           gray_b.width, gray_b.height, cfg.gms);
            res.matches = g.matches;
            res.gms_degenerate = g.degenerate_passthrough;
            break;
        }
        case FilterKind::Ransac: {
            const RansacResult r =
                filter_ransac_homography(res.raw_matches, res.kps_a, res.kps_b,
                                         cfg.ransac_confidence, cfg.ransac_threshold_px, cfg.seed);
            res.ransac_success = r.success;
            if (r.success) {
                res.matches = r.inliers;
                res.ransac_homography = r.homography;
            }
            break;
        }
    }
    return res;
}

}  // namespace panoforge
