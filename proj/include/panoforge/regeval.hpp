#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "panoforge/geometry.hpp"
#include "panoforge/image_io.hpp"
#include "panoforge/registration.hpp"

namespace panoforge {

struct EvalSequence {
    std::string name;
    ImageU8 base_image;
    std::vector<ImageU8> deformed_images;  // pairs 1-2 .. 1-(n+1)
    std::vector<Homography> ground_truth;  // base -> deformed
};

struct PairReport {
    std::string pair_name;
    int matches = 0;
    int correct = 0;
    std::optional<double> a_match;  // percent; absent when no matches survive
    std::string error;
};

struct EvalReport {
    std::string sequence;
    std::string pipeline;
    std::vector<PairReport> pairs;
    std::optional<double> average;  // mean of the defined A_match values
    int excluded_pairs = 0;
};

// A match is correct when the ground-truth transfer of the query point lands
// within threshold_px of the matched train point.
inline int count_correct_matches(const std::vector<Match>& matches,
                                 const std::vector<Keypoint>& kps_a,
                                 const std::vector<Keypoint>& kps_b, const Homography& h_true,
                                 double threshold_px) {
    int correct = 0;
    for (const Match& m : matches) {
        const Keypoint& ka = kps_a[m.query_idx];
        const Keypoint& kb = kps_b[m.train_idx];
        try {
            const Vec2 p = transfer(h_true, ka.x, ka.y);
            if (std::hypot(p.x - kb.x, p.y - kb.y) < threshold_px) ++correct;
        } catch (const GeometryError&) {
        }
    }
    return correct;
}

inline PairReport evaluate_pair(const ImageU8& img_a, const ImageU8& img_b,
                                const Homography& h_true, const RegistrationConfig& cfg,
                                double threshold_px = 5.0) {
    PairReport rep;
    const RegistrationResult reg = register_pair(to_grayscale(img_a), to_grayscale(img_b), cfg);
    rep.matches = static_cast<int>(reg.matches.size());
    rep.correct = count_correct_matches(reg.matches, reg.kps_a, reg.kps_b, h_true, threshold_px);
    if (rep.matches > 0) rep.a_match = 100.0 * rep.correct / rep.matches;
    return rep;
}

inline EvalReport evaluate_sequence(const EvalSequence& seq, const RegistrationConfig& cfg,
                                    double threshold_px = 5.0) {
    EvalReport rep;
    rep.sequence = seq.name;
    rep.pipeline = cfg.label();
    double sum = 0;
    int defined = 0;
    for (std::size_t i = 0; i < seq.deformed_images.size(); ++i) {
        PairReport pr;
        try {
            pr = evaluate_pair(seq.base_image, seq.deformed_images[i], seq.ground_truth[i], cfg,
                               threshold_px);
        } catch (const std::exception& e) {
            pr.error = e.what();
        }
        pr.pair_name = "1-" + std::to_string(i + 2);
        if (pr.a_match) {
            sum += *pr.a_match;
            ++defined;
        } else {
            ++rep.excluded_pairs;
        }
        rep.pairs.push_back(std::move(pr));
    }
    if (defined > 0) rep.average = sum / defined;
    return rep;
}

// Benchmark directory layout: img1..imgN (+extension) with H1to2p..H1toNp
// ground-truth files of 9 whitespace-separated numbers.
inline EvalSequence load_eval_sequence(const std::string& dir) {
    namespace fs = std::filesystem;
    EvalSequence seq;
    seq.name = fs::path(dir).filename().string();

    auto find_image = [&](int index) -> std::optional<std::string> {
        for (const char* ext : {".ppm", ".pgm", ".png"}) {
            const fs::path p = fs::path(dir) / ("img" + std::to_string(index) + ext);
            if (fs::exists(p)) return p.string();
        }
        return std::nullopt;
    };

    const auto base = find_image(1);
    if (!base) throw std::runtime_error("no img1 image found in " + dir);
    seq.base_image = read_image(*base);
    for (int i = 2;; ++i) {
        const auto img = find_image(i);
        const fs::path hpath = fs::path(dir) / ("H1to" + std::to_string(i) + "p");
        if (!img || !fs::exists(hpath)) break;
        seq.deformed_images.push_back(read_image(*img));
        std::ifstream hin(hpath);
        std::stringstream buf;
        buf << hin.rdbuf();
        seq.ground_truth.push_back(parse_homography_text(buf.str()));
    }
    if (seq.deformed_images.empty())
        throw std::runtime_error("no (imgN, H1toNp) pairs found in " + dir);
    return seq;
}

// Plain-text table, one row per pair plus the average column.
inline std::string format_eval_table(const std::vector<EvalReport>& reports) {
    std::ostringstream out;
    out << std::left << std::setw(12) << "Sequence" << std::setw(14) << "Method";
    if (!reports.empty())
        for (const auto& p : reports.front().pairs) out << std::setw(9) << p.pair_name;
    out << std::setw(9) << "Average" << '\n';
    for (const EvalReport& r : reports) {
        out << std::left << std::setw(12) << r.sequence << std::setw(14) << r.pipeline;
        out << std::fixed << std::setprecision(2);
        for (const auto& p : r.pairs) {
            if (p.a_match) out << std::setw(9) << *p.a_match;
            else out << std::setw(9) << "n/a";
        }
        if (r.average) out << std::setw(9) << *r.average;
        else out << std::setw(9) << "n/a";
        out << '\n';
    }
    return out.str();
}

}  // namespace panoforge
