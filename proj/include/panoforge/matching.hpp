#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "panoforge/features.hpp"
#include "panoforge/geometry.hpp"
#include "panoforge/rng.hpp"

namespace panoforge {

struct Match {
    int query_idx = 0;
    int train_idx = 0;
    int distance = 0;

    bool operator==(const Match&) const = default;
};

// Nearest neighbor per query by Hamming distance, ties broken by the
// smallest train index.
inline std::vector<Match> match_bruteforce(const std::vector<BinaryDescriptor>& da,
                                           const std::vector<BinaryDescriptor>& db) {
    if (da.empty() || db.empty())
        throw std::invalid_argument("match_bruteforce: empty descriptor list");
    const int bits = da[0].length_bits;
    for (const auto& d : da)
        if (d.length_bits != bits)
            throw std::invalid_argument("match_bruteforce: mixed descriptor lengths");
    for (const auto& d : db)
        if (d.length_bits != bits)
            throw std::invalid_argument("match_bruteforce: mixed descriptor lengths");

    std::vector<Match> out;
    out.reserve(da.size());
    for (std::size_t q = 0; q < da.size(); ++q) {
        int best = std::numeric_limits<int>::max();
        int best_idx = 0;
        for (std::size_t t = 0; t < db.size(); ++t) {
            const int d = hamming_distance(da[q], db[t]);
            if (d < best) {
                best = d;
                best_idx = static_cast<int>(t);
            }
        }
        out.push_back({static_cast<int>(q), best_idx, best});
    }
    return out;
}

struct GmsParams {
    int grid_cols = 20;
    int grid_rows = 20;
    double alpha = 6.0;
    bool with_rotation = false;  // reserved; the base grids are axis-aligned
    bool with_scale = false;
};

struct GmsResult {
    std::vector<Match> matches;          // subset of the input, input order
    bool degenerate_passthrough = false; // all matches landed in one cell
};

namespace detail {

struct GmsGrid {
    int cols, rows;
    double cell_w, cell_h;
    double shift_x, shift_y;

    int cell_of(float x, float y) const {
        int cx = static_cast<int>((x + shift_x) / cell_w);
        int cy = static_cast<int>((y + shift_y) / cell_h);
        cx = std::clamp(cx, 0, cols - 1);
        cy = std::clamp(cy, 0, rows - 1);
        return cy * cols + cx;
    }
};

}  // namespace detail

// Grid-based motion statistics. A cell pair is kept when its 3x3
// neighborhood support exceeds alpha * sqrt(mean matches per involved
// cell); the result is the union over four half-cell grid shifts.
inline GmsResult filter_gms(const std::vector<Match>& matches, const std::vector<Keypoint>& kps_a,
                            const std::vector<Keypoint>& kps_b, int width_a, int height_a,
                            int width_b, int height_b, const GmsParams& params = {}) {
    if (matches.empty()) throw std::invalid_argument("filter_gms: need at least one match");
    if (params.grid_cols < 4 || params.grid_rows < 4 || params.alpha <= 0)
        throw std::invalid_argument("filter_gms: bad parameters");

    // Degenerate input: everything in one cell of the unshifted grids.
    {
        detail::GmsGrid ga{params.grid_cols, params.grid_rows,
                           static_cast<double>(width_a) / params.grid_cols,
                           static_cast<double>(height_a) / params.grid_rows, 0, 0};
        detail::GmsGrid gb{params.grid_cols, params.grid_rows,
                           static_cast<double>(width_b) / params.grid_cols,
                           static_cast<double>(height_b) / params.grid_rows, 0, 0};
        std::set<int> cells_a, cells_b;
        for (const Match& m : matches) {
            cells_a.insert(ga.cell_of(kps_a[m.query_idx].x, kps_a[m.query_idx].y));
            cells_b.insert(gb.cell_of(kps_b[m.train_idx].x, kps_b[m.train_idx].y));
        }
        if (cells_a.size() <= 1 || cells_b.size() <= 1)
            return {matches, true};
    }

    std::vector<char> accepted(matches.size(), 0);
    const int cols = params.grid_cols, rows = params.grid_rows;
    const int ncells = cols * rows;
    const double cw_a = static_cast<double>(width_a) / cols;
    const double ch_a = static_cast<double>(height_a) / rows;
    const double cw_b = static_cast<double>(width_b) / cols;
    const double ch_b = static_cast<double>(height_b) / rows;

    for (int shift = 0; shift < 4; ++shift) {
        const double sx = (shift & 1) ? 0.5 : 0.0;
        const double sy = (shift & 2) ? 0.5 : 0.0;
        detail::GmsGrid ga{cols, rows, cw_a, ch_a, sx * cw_a, sy * ch_a};
        detail::GmsGrid gb{cols, rows, cw_b, ch_b, sx * cw_b, sy * ch_b};

        // counts[i][j]: matches from left cell i into right cell j, stored sparsely.
        std::vector<std::vector<std::pair<int, int>>> counts(ncells);
        std::vector<int> cell_a_of(matches.size()), cell_b_of(matches.size());
        std::vector<int> total_from(ncells, 0);
        for (std::size_t k = 0; k < matches.size(); ++k) {
            const Match& m = matches[k];
            const int ca = ga.cell_of(kps_a[m.query_idx].x, kps_a[m.query_idx].y);
            const int cb = gb.cell_of(kps_b[m.train_idx].x, kps_b[m.train_idx].y);
            cell_a_of[k] = ca;
            cell_b_of[k] = cb;
            ++total_from[ca];
            auto& lst = counts[ca];
            auto it = std::find_if(lst.begin(), lst.end(),
                                   [cb](const auto& p) { return p.first == cb; });
            if (it == lst.end()) lst.emplace_back(cb, 1);
            else ++it->second;
        }

        auto count_pair = [&](int ca, int cb) -> int {
            if (ca < 0 || cb < 0) return 0;
            for (const auto& [c, n] : counts[ca])
                if (c == cb) return n;
            return 0;
        };
        auto neighbor = [&](int cell, int dx, int dy) -> int {
            const int cx = cell % cols + dx;
            const int cy = cell / cols + dy;
            if (cx < 0 || cy < 0 || cx >= cols || cy >= rows) return -1;
            return cy * cols + cx;
        };

        std::vector<char> pair_ok(ncells, 0);
        std::vector<int> best_b(ncells, -1);
        for (int ca = 0; ca < ncells; ++ca) {
            if (counts[ca].empty()) continue;
            int cb = -1, best_n = 0;
            for (const auto& [c, n] : counts[ca])
                if (n > best_n || (n == best_n && (cb < 0 || c < cb))) {
                    best_n = n;
                    cb = c;
                }
            best_b[ca] = cb;

            // Support over the 3x3 aligned neighborhoods, minus the match itself.
            int support = 0;
            int involved_matches = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int na = neighbor(ca, dx, dy);
                    const int nb = neighbor(cb, dx, dy);
                    if (na < 0) continue;
                    involved_matches += total_from[na];
                    if (nb < 0) continue;
                    support += count_pair(na, nb);
                }
            const double score = support - 1;
            const double mean_per_cell = involved_matches / 9.0;
            if (score > params.alpha * std::sqrt(mean_per_cell)) pair_ok[ca] = 1;
        }

        for (std::size_t k = 0; k < matches.size(); ++k)
            if (pair_ok[cell_a_of[k]] && best_b[cell_a_of[k]] == cell_b_of[k]) accepted[k] = 1;
    }

    GmsResult res;
    for (std::size_t k = 0; k < matches.size(); ++k)
        if (accepted[k]) res.matches.push_back(matches[k]);
    return res;
}

struct RansacResult {
    bool success = false;
    std::vector<Match> inliers;  // subset of the input, input order
    Homography homography;
    int iterations_run = 0;
};

// 4-point RANSAC over homographies with a symmetric transfer error inlier
// test, adaptive iteration count and a final DLT refit over all inliers.
inline RansacResult filter_ransac_homography(const std::vector<Match>& matches,
                                             const std::vector<Keypoint>& kps_a,
                                             const std::vector<Keypoint>& kps_b,
                                             double confidence = 0.99,
                                             double reproj_threshold = 3.0,
                                             std::uint64_t seed = 0) {
    RansacResult res;
    if (matches.size() < 4) return res;
    if (!(confidence > 0 && confidence < 1))
        throw std::invalid_argument("filter_ransac_homography: confidence must be in (0,1)");

    std::vector<Vec2> pa(matches.size()), pb(matches.size());
    for (std::size_t i = 0; i < matches.size(); ++i) {
        pa[i] = {kps_a[matches[i].query_idx].x, kps_a[matches[i].query_idx].y};
        pb[i] = {kps_b[matches[i].train_idx].x, kps_b[matches[i].train_idx].y};
    }

    const double thr2 = reproj_threshold * reproj_threshold;
    auto count_inliers = [&](const Homography& h, std::vector<char>& mask) -> int {
        Homography hinv;
        try {
            hinv = h.inverse();
        } catch (const GeometryError&) {
            return 0;
        }
        int n = 0;
        for (std::size_t i = 0; i < matches.size(); ++i) {
            mask[i] = 0;
            try {
                const Vec2 fwd = transfer(h, pa[i].x, pa[i].y);
                const Vec2 bwd = transfer(hinv, pb[i].x, pb[i].y);
                const double e_fwd = (fwd.x - pb[i].x) * (fwd.x - pb[i].x) +
                                     (fwd.y - pb[i].y) * (fwd.y - pb[i].y);
                const double e_bwd = (bwd.x - pa[i].x) * (bwd.x - pa[i].x) +
                                     (bwd.y - pa[i].y) * (bwd.y - pa[i].y);
                if (e_fwd < thr2 && e_bwd < thr2) {
                    mask[i] = 1;
                    ++n;
                }
            } catch (const GeometryError&) {
            }
        }
        return n;
    };

    Rng rng(seed);
    const int max_iterations = 10000;
    int needed = max_iterations;
    int best_count = 0;
    std::vector<char> best_mask(matches.size(), 0), mask(matches.size(), 0);

    int iter = 0;
    for (; iter < needed && iter < max_iterations; ++iter) {
        std::array<std::uint32_t, 4> idx;
        for (int k = 0; k < 4; ++k) {
            bool fresh;
            do {
                idx[k] = rng.next_below(static_cast<std::uint32_t>(matches.size()));
                fresh = true;
                for (int j = 0; j < k; ++j) fresh = fresh && idx[j] != idx[k];
            } while (!fresh);
        }
        std::vector<Vec2> sa(4), sb(4);
        for (int k = 0; k < 4; ++k) {
            sa[k] = pa[idx[k]];
            sb[k] = pb[idx[k]];
        }
        Homography h;
        try {
            h = estimate_homography_dlt(sa, sb);
        } catch (const GeometryError&) {
            continue;
        }
        const int n = count_inliers(h, mask);
        if (n > best_count) {
            best_count = n;
            best_mask = mask;
            const double w = static_cast<double>(n) / matches.size();
            const double denom = std::log(std::max(1e-12, 1.0 - std::pow(w, 4)));
            if (denom < 0) {
                const double est = std::log(1.0 - confidence) / denom;
                needed = est > max_iterations ? max_iterations
                                              : std::max(iter + 1, static_cast<int>(std::ceil(est)));
            }
        }
    }
    res.iterations_run = iter;
    if (best_count < 4) return res;

    std::vector<Vec2> ia, ib;
    for (std::size_t i = 0; i < matches.size(); ++i)
        if (best_mask[i]) {
            ia.push_back(pa[i]);
            ib.push_back(pb[i]);
        }
    Homography refined;
    try {
        refined = estimate_homography_dlt(ia, ib);
        const int n = count_inliers(refined, mask);
        if (n >= best_count) {
            best_mask = mask;
            best_count = n;
        }
    } catch (const GeometryError&) {
        return res;  // refit failed on a degenerate inlier set
    }

    res.success = true;
    res.homography = refined;
    for (std::size_t i = 0; i < matches.size(); ++i)
        if (best_mask[i]) res.inliers.push_back(matches[i]);
    return res;
}

// ---- CSV serialization: query_idx,train_idx,distance ----

inline std::string matches_to_csv(const std::vector<Match>& matches) {
    std::ostringstream out;
    out << "query_idx,train_idx,distance\n";
    for (const Match& m : matches)
        out << m.query_idx << ',' << m.train_idx << ',' << m.distance << '\n';
    return out.str();
}

inline std::vector<Match> matches_from_csv(std::istream& in) {
    std::vector<Match> out;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (first && line.find("query_idx") != std::string::npos) {
            first = false;
            continue;
        }
        first = false;
        Match m;
        char c1, c2;
        std::istringstream ls(line);
        if (!(ls >> m.query_idx >> c1 >> m.train_idx >> c2 >> m.distance) || c1 != ',' || c2 != ',')
            throw std::runtime_error("bad match CSV line: " + line);
        out.push_back(m);
    }
    return out;
}

}  // namespace panoforge
