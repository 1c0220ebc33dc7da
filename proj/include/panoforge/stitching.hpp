#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "panoforge/camera.hpp"
#include "panoforge/geometry.hpp"
#include "panoforge/image.hpp"
#include "panoforge/registration.hpp"

namespace panoforge {

struct StitchError : std::runtime_error {
    StitchError(const std::string& stage, const std::string& what)
        : std::runtime_error(stage + ": " + what), stage_name(stage) {}
    std::string stage_name;
};

struct PanoEdge {
    int a = 0, b = 0;
    Homography h_ab;      // maps image-b coordinates into image a
    int inlier_count = 0;
    int match_count = 0;  // filtered matches fed to the fit
};

struct PanoGraph {
    int node_count = 0;
    std::vector<PanoEdge> edges;
    std::vector<int> component;  // component id per node
};

namespace detail {

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace detail

// Pairwise registration over all image pairs. An edge is kept when the
// RANSAC inlier count clears 8 + 0.3 * filtered-match-count, the heuristic
// image-match verification rule.
inline PanoGraph build_pano_graph(const std::vector<ImageU8>& images,
                                  const RegistrationConfig& cfg) {
    if (images.size() < 2) throw StitchError("build_pano_graph", "need at least 2 images");
    PanoGraph graph;
    graph.node_count = static_cast<int>(images.size());

    std::vector<ImageF32> grays;
    grays.reserve(images.size());
    for (const ImageU8& img : images) grays.push_back(to_grayscale(img));

    for (int i = 0; i < graph.node_count; ++i)
        for (int j = i + 1; j < graph.node_count; ++j) {
            const RegistrationResult reg = register_pair(grays[i], grays[j], cfg);
            if (reg.matches.size() < 4) continue;
            const RansacResult fit = filter_ransac_homography(
                reg.matches, reg.kps_a, reg.kps_b, cfg.ransac_confidence,
                cfg.ransac_threshold_px, cfg.seed);
            if (!fit.success) continue;
            const int inliers = static_cast<int>(fit.inliers.size());
            const int match_count = static_cast<int>(reg.matches.size());
            if (inliers <= 8 + 0.3 * match_count) continue;
            PanoEdge e;
            e.a = i;
            e.b = j;
            e.h_ab = fit.homography.inverse();  // fit maps a -> b
            e.inlier_count = inliers;
            e.match_count = match_count;
            graph.edges.push_back(e);
        }

    detail::UnionFind uf(graph.node_count);
    for (const PanoEdge& e : graph.edges) uf.unite(e.a, e.b);
    graph.component.resize(graph.node_count);
    for (int i = 0; i < graph.node_count; ++i) graph.component[i] = uf.find(i);
    return graph;
}

struct Alignment {
    std::vector<Homography> to_canvas;  // per image; valid only where included
    std::vector<char> included;
    int canvas_w = 0, canvas_h = 0;
    int reference = 0;
};

// Composes homographies from every node of the reference's component to the
// reference along the maximum-inlier spanning tree, then translates so the
// union of warped corners starts at the origin.
inline Alignment global_align(const PanoGraph& graph, const std::vector<ImageU8>& images,
                              int reference) {
    Alignment al;
    al.reference = reference;
    al.to_canvas.assign(graph.node_count, Homography::identity());
    al.included.assign(graph.node_count, 0);
    al.included[reference] = 1;

    // Maximum spanning tree by inlier count (Kruskal).
    std::vector<const PanoEdge*> sorted;
    for (const PanoEdge& e : graph.edges) sorted.push_back(&e);
    std::stable_sort(sorted.begin(), sorted.end(), [](const PanoEdge* a, const PanoEdge* b) {
        return a->inlier_count > b->inlier_count;
    });
    detail::UnionFind uf(graph.node_count);
    std::vector<std::vector<std::pair<int, const PanoEdge*>>> tree(graph.node_count);
    for (const PanoEdge* e : sorted) {
        if (uf.find(e->a) == uf.find(e->b)) continue;
        uf.unite(e->a, e->b);
        tree[e->a].emplace_back(e->b, e);
        tree[e->b].emplace_back(e->a, e);
    }

    // BFS from the reference, composing along tree edges.
    std::vector<int> queue{reference};
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
        const int node = queue[qi];
        for (const auto& [next, e] : tree[node]) {
            if (al.included[next]) continue;
            const Homography h_node_next = (e->a == node) ? e->h_ab : e->h_ab.inverse();
            al.to_canvas[next] = compose(al.to_canvas[node], h_node_next);
            al.included[next] = 1;
            queue.push_back(next);
        }
    }

    double min_x = 0, min_y = 0, max_x = 0, max_y = 0;
    bool first = true;
    for (int i = 0; i < graph.node_count; ++i) {
        if (!al.included[i]) continue;
        const double w = images[i].width - 1, h = images[i].height - 1;
        const double corners[4][2] = {{0, 0}, {w, 0}, {0, h}, {w, h}};
        for (const auto& c : corners) {
            const Vec2 p = transfer(al.to_canvas[i], c[0], c[1]);
            if (first) {
                min_x = max_x = p.x;
                min_y = max_y = p.y;
                first = false;
            } else {
                min_x = std::min(min_x, p.x);
                max_x = std::max(max_x, p.x);
                min_y = std::min(min_y, p.y);
                max_y = std::max(max_y, p.y);
            }
        }
    }
    const Homography shift = Homography::translation(-std::floor(min_x), -std::floor(min_y));
    for (int i = 0; i < graph.node_count; ++i)
        if (al.included[i]) al.to_canvas[i] = compose(shift, al.to_canvas[i]);
    al.canvas_w = static_cast<int>(std::ceil(max_x - std::floor(min_x))) + 1;
    al.canvas_h = static_cast<int>(std::ceil(max_y - std::floor(min_y))) + 1;
    if (al.canvas_w > 16384 || al.canvas_h > 16384)
        throw StitchError("global_align", "canvas exceeds 16384px; alignment likely diverged");
    return al;
}

// Single multiplicative gain per image from overlap statistics, solved via
// the normal equations with sigma_N = 10/255 and sigma_g = 0.1, clamped to
// [0.5, 2].
struct GainMap {
    std::vector<double> gains;
    int clamped_count = 0;
};

inline GainMap compensate_gains(const std::vector<ImageF32>& warped_gray,
                                const std::vector<ImageF32>& alphas) {
    const int n = static_cast<int>(warped_gray.size());
    GainMap gm;
    gm.gains.assign(n, 1.0);
    if (n < 2) return gm;

    // Overlap pixel counts and mean intensities per ordered pair.
    std::vector<std::vector<double>> count(n, std::vector<double>(n, 0));
    std::vector<std::vector<double>> mean(n, std::vector<double>(n, 0));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double c = 0, si = 0, sj = 0;
            const ImageF32& ai = alphas[i];
            const ImageF32& aj = alphas[j];
            for (std::size_t k = 0; k < ai.data.size(); ++k) {
                if (ai.data[k] <= 0 || aj.data[k] <= 0) continue;
                ++c;
                si += warped_gray[i].data[k];
                sj += warped_gray[j].data[k];
            }
            count[i][j] = count[j][i] = c;
            if (c > 0) {
                mean[i][j] = si / c;
                mean[j][i] = sj / c;
            }
        }

    double total = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) total += count[i][j];
    if (total == 0) return gm;

    const double inv_sn2 = 1.0 / ((10.0 / 255.0) * (10.0 / 255.0));
    const double inv_sg2 = 1.0 / (0.1 * 0.1);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j || count[i][j] == 0) continue;
            const double nij = count[i][j];
            a(i, i) += nij * (mean[i][j] * mean[i][j] * inv_sn2 + inv_sg2);
            a(i, j) -= nij * mean[i][j] * mean[j][i] * inv_sn2;
            b(i) += nij * inv_sg2;
        }
    // Images with no overlap keep gain 1.
    for (int i = 0; i < n; ++i)
        if (a(i, i) == 0) {
            a(i, i) = 1;
            b(i) = 1;
        }
    const Eigen::VectorXd g = a.ldlt().solve(b);
    for (int i = 0; i < n; ++i) {
        double v = g(i);
        if (v < 0.5 || v > 2.0) {
            v = std::clamp(v, 0.5, 2.0);
            ++gm.clamped_count;
        }
        gm.gains[i] = v;
    }
    return gm;
}

struct SeamMasks {
    std::vector<ImageF32> masks;  // binary, one per image; they partition coverage
};

namespace detail {

constexpr float kSeamInf = 1e9f;

struct Box {
    int x0 = 0, y0 = 0, x1 = -1, y1 = -1;
    bool empty() const { return x1 < x0 || y1 < y0; }
    int width() const { return x1 - x0 + 1; }
    int height() const { return y1 - y0 + 1; }
};

// Two-pass chamfer distance to the nonzero set of src (3-4 weights).
inline std::vector<float> chamfer_distance(const ImageF32& src) {
    const int w = src.width, h = src.height;
    std::vector<float> d(static_cast<std::size_t>(w) * h, kSeamInf);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (src.at(x, y) > 0) d[static_cast<std::size_t>(y) * w + x] = 0;
    auto at = [&](int x, int y) -> float& { return d[static_cast<std::size_t>(y) * w + x]; };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float v = at(x, y);
            if (x > 0) v = std::min(v, at(x - 1, y) + 3);
            if (y > 0) v = std::min(v, at(x, y - 1) + 3);
            if (x > 0 && y > 0) v = std::min(v, at(x - 1, y - 1) + 4);
            if (x < w - 1 && y > 0) v = std::min(v, at(x + 1, y - 1) + 4);
            at(x, y) = v;
        }
    for (int y = h - 1; y >= 0; --y)
        for (int x = w - 1; x >= 0; --x) {
            float v = at(x, y);
            if (x < w - 1) v = std::min(v, at(x + 1, y) + 3);
            if (y < h - 1) v = std::min(v, at(x, y + 1) + 3);
            if (x < w - 1 && y < h - 1) v = std::min(v, at(x + 1, y + 1) + 4);
            if (x > 0 && y < h - 1) v = std::min(v, at(x - 1, y + 1) + 4);
            at(x, y) = v;
        }
    return d;
}

}  // namespace detail

// Seam search between the running composite and one new image: a monotone
// minimal-cost path across the longer axis of the overlap found by dynamic
// programming on |I_composite - I_new|, leftmost (topmost) on ties.
// Overlaps thinner than 3 px fall back to a distance-transform bisection.
inline SeamMasks find_seams(const std::vector<ImageF32>& warped_gray,
                            const std::vector<ImageF32>& alphas) {
    const int n = static_cast<int>(warped_gray.size());
    if (n == 0) return {};
    const int w = warped_gray[0].width, h = warped_gray[0].height;

    SeamMasks sm;
    sm.masks.reserve(n);
    for (int i = 0; i < n; ++i) sm.masks.emplace_back(w, h, 1, 0.f);

    // owner[pixel] = image index, or -1 while uncovered.
    std::vector<int> owner(static_cast<std::size_t>(w) * h, -1);
    ImageF32 composite_gray(w, h, 1, 0.f);

    for (int img = 0; img < n; ++img) {
        const ImageF32& alpha = alphas[img];
        const ImageF32& gray = warped_gray[img];
        detail::Box box;
        box.x0 = w;
        box.y0 = h;
        bool has_overlap = false;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const std::size_t k = static_cast<std::size_t>(y) * w + x;
                if (alpha.at(x, y) <= 0) continue;
                if (owner[k] < 0) {
                    owner[k] = img;  // uncontested coverage
                    composite_gray.at(x, y) = gray.at(x, y);
                    continue;
                }
                has_overlap = true;
                box.x0 = std::min(box.x0, x);
                box.y0 = std::min(box.y0, y);
                box.x1 = std::max(box.x1, x);
                box.y1 = std::max(box.y1, y);
            }
        if (!has_overlap) continue;

        auto in_overlap = [&](int x, int y) {
            const std::size_t k = static_cast<std::size_t>(y) * w + x;
            return alpha.at(x, y) > 0 && owner[k] >= 0 && owner[k] != img;
        };

        std::vector<char> give_to_new(static_cast<std::size_t>(w) * h, 0);
        const bool thin = std::min(box.width(), box.height()) < 3;
        if (thin) {
            // Bisect by distance to each side's uncontested region.
            ImageF32 old_only(w, h, 1, 0.f), new_only(w, h, 1, 0.f);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const std::size_t k = static_cast<std::size_t>(y) * w + x;
                    if (owner[k] >= 0 && owner[k] != img && alpha.at(x, y) <= 0)
                        old_only.at(x, y) = 1.f;
                    if (alpha.at(x, y) > 0 && owner[k] == img) new_only.at(x, y) = 1.f;
                }
            const auto d_old = detail::chamfer_distance(old_only);
            const auto d_new = detail::chamfer_distance(new_only);
            for (int y = box.y0; y <= box.y1; ++y)
                for (int x = box.x0; x <= box.x1; ++x) {
                    const std::size_t k = static_cast<std::size_t>(y) * w + x;
                    if (in_overlap(x, y) && d_new[k] < d_old[k]) give_to_new[k] = 1;
                }
        } else {
            const bool vertical_seam = box.height() >= box.width();
            const int along = vertical_seam ? box.height() : box.width();
            const int across = vertical_seam ? box.width() : box.height();
            auto cost_at = [&](int a, int c) -> float {
                const int x = vertical_seam ? box.x0 + c : box.x0 + a;
                const int y = vertical_seam ? box.y0 + a : box.y0 + c;
                if (!in_overlap(x, y)) return detail::kSeamInf;
                return std::abs(composite_gray.at(x, y) - gray.at(x, y));
            };
            std::vector<float> dp(static_cast<std::size_t>(along) * across);
            std::vector<int> from(dp.size(), 0);
            for (int c = 0; c < across; ++c) dp[c] = cost_at(0, c);
            for (int a = 1; a < along; ++a)
                for (int c = 0; c < across; ++c) {
                    float best = dp[(a - 1) * across + c];
                    int arg = c;
                    for (const int dc : {-1, 1}) {
                        const int pc = c + dc;
                        if (pc < 0 || pc >= across) continue;
                        const float v = dp[(a - 1) * across + pc];
                        if (v < best || (v == best && pc < arg)) {
                            best = v;
                            arg = pc;
                        }
                    }
                    dp[a * across + c] = best + cost_at(a, c);
                    from[a * across + c] = arg;
                }
            int seam_c = 0;
            for (int c = 1; c < across; ++c)
                if (dp[(along - 1) * across + c] < dp[(along - 1) * across + seam_c]) seam_c = c;
            std::vector<int> seam(along);
            for (int a = along - 1; a >= 0; --a) {
                seam[a] = seam_c;
                if (a > 0) seam_c = from[a * across + seam_c];
            }

            // Which side of the seam keeps the composite: the side its
            // uncontested pixels lie on.
            double centroid_old = 0, n_old = 0, centroid_new = 0, n_new = 0;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const std::size_t k = static_cast<std::size_t>(y) * w + x;
                    const double coord = vertical_seam ? x : y;
                    if (owner[k] >= 0 && owner[k] != img && alpha.at(x, y) <= 0) {
                        centroid_old += coord;
                        ++n_old;
                    }
                    if (alpha.at(x, y) > 0 && owner[k] == img) {
                        centroid_new += coord;
                        ++n_new;
                    }
                }
            const bool old_on_low_side =
                (n_old == 0 || n_new == 0)
                    ? true
                    : centroid_old / n_old <= centroid_new / n_new;

            for (int a = 0; a < along; ++a)
                for (int c = 0; c < across; ++c) {
                    const int x = vertical_seam ? box.x0 + c : box.x0 + a;
                    const int y = vertical_seam ? box.y0 + a : box.y0 + c;
                    const std::size_t k = static_cast<std::size_t>(y) * w + x;
                    if (!in_overlap(x, y)) continue;
                    const bool low = c < seam[a];
                    if (low != old_on_low_side) give_to_new[k] = 1;
                }
        }

        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const std::size_t k = static_cast<std::size_t>(y) * w + x;
                if (give_to_new[k]) {
                    owner[k] = img;
                    composite_gray.at(x, y) = gray.at(x, y);
                }
            }
    }

    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int o = owner[static_cast<std::size_t>(y) * w + x];
            if (o >= 0) sm.masks[o].at(x, y) = 1.f;
        }
    return sm;
}

namespace detail {

inline ImageF32 downsample2(const ImageF32& img) {
    const int w = std::max(1, img.width / 2), h = std::max(1, img.height / 2);
    ImageF32 out(w, h, img.channels);
    const ImageF32 blurred = gaussian_blur(img, 1.0f);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < img.channels; ++c)
                out.at(x, y, c) = blurred.at(std::min(2 * x, img.width - 1),
                                             std::min(2 * y, img.height - 1), c);
    return out;
}

inline ImageF32 upsample_to(const ImageF32& img, int w, int h) {
    return resize_bilinear(img, w, h);
}

}  // namespace detail

// Burt-Adelson multi-band blend of gain-corrected warped images under
// Gaussian-smoothed seam masks. bands == 1 degrades to a feathered blend.
inline ImageU8 blend_multiband(const std::vector<ImageF32>& warped,
                               const std::vector<ImageF32>& alphas,
                               const std::vector<double>& gains, const SeamMasks& seams,
                               int bands = 5) {
    if (warped.empty()) throw std::invalid_argument("blend_multiband: no images");
    if (bands < 1) throw std::invalid_argument("blend_multiband: bands must be >= 1");
    const int n = static_cast<int>(warped.size());
    const int w = warped[0].width, h = warped[0].height;
    const int channels = warped[0].channels;
    while (bands > 1 && (std::min(w, h) >> (bands - 1)) < 8) --bands;

    std::vector<ImageF32> corrected;
    corrected.reserve(n);
    for (int i = 0; i < n; ++i) {
        ImageF32 img = warped[i];
        const float g = static_cast<float>(gains[i]);
        for (float& v : img.data) v *= g;
        corrected.push_back(std::move(img));
    }

    ImageF32 result(w, h, channels, 0.f);
    if (bands == 1) {
        // Feathered linear blend of the seam masks.
        std::vector<ImageF32> weights;
        for (int i = 0; i < n; ++i) {
            ImageF32 wgt = gaussian_blur(seams.masks[i], 5.f);
            for (std::size_t k = 0; k < wgt.data.size(); ++k)
                wgt.data[k] *= alphas[i].data[k] > 0 ? 1.f : 0.f;
            weights.push_back(std::move(wgt));
        }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                float wsum = 0;
                for (int i = 0; i < n; ++i) wsum += weights[i].at(x, y);
                if (wsum <= 1e-12f) continue;
                for (int c = 0; c < channels; ++c) {
                    float acc = 0;
                    for (int i = 0; i < n; ++i)
                        acc += weights[i].at(x, y) * corrected[i].at(x, y, c);
                    result.at(x, y, c) = acc / wsum;
                }
            }
        return to_u8(result);
    }

    // Lazily accumulated per-level sums to avoid holding every pyramid.
    std::vector<ImageF32> acc(bands), wacc(bands);
    for (int i = 0; i < n; ++i) {
        // Gaussian pyramid of the mask, Laplacian pyramid of the content.
        std::vector<ImageF32> gp_mask{seams.masks[i]};
        std::vector<ImageF32> gp_img{corrected[i]};
        for (int l = 1; l < bands; ++l) {
            gp_mask.push_back(detail::downsample2(gp_mask.back()));
            gp_img.push_back(detail::downsample2(gp_img.back()));
        }
        for (int l = 0; l < bands; ++l) {
            ImageF32 lap = gp_img[l];
            if (l + 1 < bands) {
                const ImageF32 up = detail::upsample_to(gp_img[l + 1], lap.width, lap.height);
                for (std::size_t k = 0; k < lap.data.size(); ++k) lap.data[k] -= up.data[k];
            }
            if (acc[l].width == 0) {
                acc[l] = ImageF32(lap.width, lap.height, channels, 0.f);
                wacc[l] = ImageF32(lap.width, lap.height, 1, 0.f);
            }
            for (int y = 0; y < lap.height; ++y)
                for (int x = 0; x < lap.width; ++x) {
                    const float wv = gp_mask[l].at(x, y);
                    wacc[l].at(x, y) += wv;
                    for (int c = 0; c < channels; ++c) acc[l].at(x, y, c) += wv * lap.at(x, y, c);
                }
        }
    }
    for (int l = 0; l < bands; ++l)
        for (int y = 0; y < acc[l].height; ++y)
            for (int x = 0; x < acc[l].width; ++x) {
                const float wv = wacc[l].at(x, y);
                if (wv <= 1e-12f) continue;
                for (int c = 0; c < channels; ++c) acc[l].at(x, y, c) /= wv;
            }
    ImageF32 collapsed = acc[bands - 1];
    for (int l = bands - 2; l >= 0; --l) {
        const ImageF32 up = detail::upsample_to(collapsed, acc[l].width, acc[l].height);
        collapsed = acc[l];
        for (std::size_t k = 0; k < collapsed.data.size(); ++k) collapsed.data[k] += up.data[k];
    }
    return to_u8(collapsed);
}

struct StitchConfig {
    RegistrationConfig registration;
    std::optional<CameraModel> camera;
    int bands = 5;
};

struct StitchOutcome {
    ImageU8 panorama;
    PanoGraph graph;
    std::vector<int> skipped_images;  // indices outside the stitched component
    GainMap gains;
};

// The full pipeline: optional undistortion, pairwise registration graph,
// spanning-tree alignment, gain compensation, seam search, multi-band blend.
inline StitchOutcome stitch(const std::vector<ImageU8>& input, const StitchConfig& cfg = {}) {
    if (input.empty()) throw StitchError("stitch", "no input images");
    StitchOutcome out;

    std::vector<ImageU8> images = input;
    if (cfg.camera)
        for (ImageU8& img : images) img = undistort_image(*cfg.camera, img);

    if (images.size() == 1) {
        out.panorama = images[0];
        out.graph.node_count = 1;
        out.graph.component = {0};
        return out;
    }

    out.graph = build_pano_graph(images, cfg.registration);
    if (out.graph.edges.empty())
        throw StitchError("build_pano_graph", "no connected component of size >= 2");

    // Stitch the largest component; reference = its highest-degree node.
    std::vector<int> comp_size(out.graph.node_count, 0);
    for (int i = 0; i < out.graph.node_count; ++i) ++comp_size[out.graph.component[i]];
    int best_comp = 0;
    for (int c = 1; c < out.graph.node_count; ++c)
        if (comp_size[c] > comp_size[best_comp]) best_comp = c;
    if (comp_size[best_comp] < 2)
        throw StitchError("build_pano_graph", "no connected component of size >= 2");
    std::vector<double> degree(out.graph.node_count, 0);
    for (const PanoEdge& e : out.graph.edges) {
        degree[e.a] += e.inlier_count;
        degree[e.b] += e.inlier_count;
    }
    int reference = -1;
    for (int i = 0; i < out.graph.node_count; ++i) {
        if (out.graph.component[i] != best_comp) continue;
        if (reference < 0 || degree[i] > degree[reference]) reference = i;
    }

    const Alignment al = global_align(out.graph, images, reference);
    for (int i = 0; i < out.graph.node_count; ++i)
        if (!al.included[i]) out.skipped_images.push_back(i);

    std::vector<ImageF32> warped, alphas, grays;
    std::vector<int> included;
    for (int i = 0; i < out.graph.node_count; ++i) {
        if (!al.included[i]) continue;
        WarpResult wr = warp_image(to_f32(images[i]), al.to_canvas[i], al.canvas_w, al.canvas_h);
        ImageF32 gray(al.canvas_w, al.canvas_h, 1);
        if (wr.image.channels == 1) {
            gray = wr.image;
        } else {
            for (int y = 0; y < al.canvas_h; ++y)
                for (int x = 0; x < al.canvas_w; ++x)
                    gray.at(x, y) = 0.299f * wr.image.at(x, y, 0) +
                                    0.587f * wr.image.at(x, y, 1) +
                                    0.114f * wr.image.at(x, y, 2);
        }
        warped.push_back(std::move(wr.image));
        alphas.push_back(std::move(wr.alpha));
        grays.push_back(std::move(gray));
        included.push_back(i);
    }

    out.gains = compensate_gains(grays, alphas);
    const SeamMasks seams = find_seams(grays, alphas);
    out.panorama = blend_multiband(warped, alphas, out.gains.gains, seams, cfg.bands);
    return out;
}

}  // namespace panoforge
