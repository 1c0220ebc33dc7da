// panoforge: fisheye-to-panorama pipeline CLI.
//
// Subcommands mirror the pipeline stages: undistort, detect, match, eval,
// stitch, metrics, deblur. Exit codes: 0 success, 1 pipeline failure,
// 2 usage or I/O error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "panoforge/anafnet.hpp"
#include "panoforge/camera.hpp"
#include "panoforge/deblur_metrics.hpp"
#include "panoforge/image_io.hpp"
#include "panoforge/regeval.hpp"
#include "panoforge/registration.hpp"
#include "panoforge/stitching.hpp"

namespace pf = panoforge;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPipeline = 1;
constexpr int kExitUsage = 2;

int g_thread_cap = 1;  // from PANOFORGE_THREADS; the library runs single-threaded

struct CommonFlags {
    int keypoints = 5000;
    double threshold_px = 5.0;
    double confidence = 0.99;
    std::string filter = "gms";
    std::string descriptor = "freak";
    int bands = 5;
    std::uint64_t seed = 0;
    std::string debug_matches;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--keypoints", f.keypoints, "detector budget")->capture_default_str();
    cmd->add_option("--threshold-px", f.threshold_px, "correct-match distance threshold")
        ->capture_default_str();
    cmd->add_option("--confidence", f.confidence, "RANSAC confidence")->capture_default_str();
    cmd->add_option("--filter", f.filter, "match filter: ransac|gms|none")->capture_default_str();
    cmd->add_option("--descriptor", f.descriptor, "descriptor: brief|freak")
        ->capture_default_str();
    cmd->add_option("--bands", f.bands, "blending bands")->capture_default_str();
    cmd->add_option("--seed", f.seed, "RNG seed")->capture_default_str();
    cmd->add_option("--debug-matches", f.debug_matches, "directory for match visualizations");
}

pf::RegistrationConfig to_registration(const CommonFlags& f) {
    pf::RegistrationConfig cfg;
    cfg.max_keypoints = f.keypoints;
    cfg.descriptor = pf::parse_descriptor(f.descriptor);
    cfg.filter = pf::parse_filter(f.filter);
    cfg.ransac_confidence = f.confidence;
    cfg.seed = f.seed;
    return cfg;
}

// Side-by-side match visualization with connecting lines.
pf::ImageU8 draw_matches(const pf::ImageU8& a, const pf::ImageU8& b,
                         const pf::RegistrationResult& reg) {
    const int h = std::max(a.height, b.height);
    pf::ImageU8 canvas(a.width + b.width, h, 3, 0);
    auto copy_into = [&](const pf::ImageU8& src, int ox) {
        for (int y = 0; y < src.height; ++y)
            for (int x = 0; x < src.width; ++x)
                for (int c = 0; c < 3; ++c)
                    canvas.at(ox + x, y, c) = src.at(x, y, src.channels == 3 ? c : 0);
    };
    copy_into(a, 0);
    copy_into(b, a.width);
    for (const pf::Match& m : reg.matches) {
        const auto& ka = reg.kps_a[m.query_idx];
        const auto& kb = reg.kps_b[m.train_idx];
        const double x0 = ka.x, y0 = ka.y, x1 = kb.x + a.width, y1 = kb.y;
        const int steps = static_cast<int>(std::hypot(x1 - x0, y1 - y0)) + 1;
        for (int s = 0; s <= steps; ++s) {
            const int x = static_cast<int>(std::lround(x0 + (x1 - x0) * s / steps));
            const int y = static_cast<int>(std::lround(y0 + (y1 - y0) * s / steps));
            if (x < 0 || y < 0 || x >= canvas.width || y >= canvas.height) continue;
            canvas.at(x, y, 1) = 255;
        }
    }
    return canvas;
}

int cmd_undistort(const std::string& in, const std::string& camera_path,
                  const std::string& out) {
    const pf::CameraModel model = pf::load_camera_config(camera_path);
    const pf::ImageU8 img = pf::read_image(in);
    pf::UndistortDiagnostics diag;
    pf::write_image(out, pf::undistort_image(model, img, &diag));
    if (diag.nonconverged_pixels > 0)
        std::cerr << "undistort: " << diag.nonconverged_pixels << " pixels did not map\n";
    return kExitOk;
}

int cmd_detect(const std::string& in, const std::string& out, const CommonFlags& f) {
    const pf::RegistrationConfig cfg = to_registration(f);
    const pf::ImageF32 gray = pf::to_grayscale(pf::read_image(in));
    pf::save_features(out, pf::detect_and_describe(gray, cfg));
    return kExitOk;
}

int cmd_match(const std::string& feats_a, const std::string& feats_b, const std::string& out,
              const CommonFlags& f) {
    const pf::DescribeResult fa = pf::load_features(feats_a);
    const pf::DescribeResult fb = pf::load_features(feats_b);
    std::vector<pf::Match> matches = pf::match_bruteforce(fa.descriptors, fb.descriptors);
    const pf::FilterKind filter = pf::parse_filter(f.filter);
    if (filter == pf::FilterKind::Ransac) {
        const pf::RansacResult r = pf::filter_ransac_homography(
            matches, fa.keypoints, fb.keypoints, f.confidence, 3.0, f.seed);
        if (!r.success) {
            std::cerr << "match: RANSAC found no model\n";
            return kExitPipeline;
        }
        matches = r.inliers;
    } else if (filter == pf::FilterKind::Gms) {
        // Grid extents come from the keypoint spread; feature files carry no
        // image size.
        float wa = 0, ha = 0, wb = 0, hb = 0;
        for (const auto& k : fa.keypoints) {
            wa = std::max(wa, k.x + 32);
            ha = std::max(ha, k.y + 32);
        }
        for (const auto& k : fb.keypoints) {
            wb = std::max(wb, k.x + 32);
            hb = std::max(hb, k.y + 32);
        }
        matches = pf::filter_gms(matches, fa.keypoints, fb.keypoints, static_cast<int>(wa) + 1,
                                 static_cast<int>(ha) + 1, static_cast<int>(wb) + 1,
                                 static_cast<int>(hb) + 1)
                      .matches;
    }
    std::ofstream os(out);
    if (!os) throw pf::IoError("cannot open " + out + " for writing");
    os << pf::matches_to_csv(matches);
    return kExitOk;
}

int cmd_eval(const std::string& dataset_dir, const std::string& out_json,
             const CommonFlags& f) {
    const pf::RegistrationConfig cfg = to_registration(f);
    const pf::EvalSequence seq = pf::load_eval_sequence(dataset_dir);
    const pf::EvalReport rep = pf::evaluate_sequence(seq, cfg, f.threshold_px);

    json j;
    j["sequence"] = rep.sequence;
    j["pipeline"] = rep.pipeline;
    j["config"] = {{"keypoints", cfg.max_keypoints},
                   {"threshold_px", f.threshold_px},
                   {"ransac_confidence", cfg.ransac_confidence},
                   {"descriptor", f.descriptor},
                   {"filter", f.filter},
                   {"seed", f.seed}};
    j["pairs"] = json::array();
    for (const auto& p : rep.pairs) {
        json pj{{"pair", p.pair_name}, {"matches", p.matches}, {"correct", p.correct}};
        if (p.a_match) pj["a_match"] = *p.a_match;
        else pj["a_match"] = nullptr;
        if (!p.error.empty()) pj["error"] = p.error;
        j["pairs"].push_back(pj);
    }
    if (rep.average) j["average"] = *rep.average;
    else j["average"] = nullptr;
    j["excluded_pairs"] = rep.excluded_pairs;

    if (out_json.empty() || out_json == "-") {
        std::cout << j.dump(2) << '\n';
    } else {
        std::ofstream os(out_json);
        if (!os) throw pf::IoError("cannot open " + out_json + " for writing");
        os << j.dump(2) << '\n';
    }
    std::cout << pf::format_eval_table({rep});
    return kExitOk;
}

int cmd_stitch(const std::vector<std::string>& inputs, const std::string& out,
               const std::string& camera_path, const CommonFlags& f) {
    pf::StitchConfig cfg;
    cfg.registration = to_registration(f);
    cfg.bands = f.bands;
    if (!camera_path.empty()) cfg.camera = pf::load_camera_config(camera_path);

    std::vector<pf::ImageU8> images;
    for (const std::string& path : inputs) images.push_back(pf::read_image(path));

    pf::StitchOutcome outcome;
    try {
        outcome = pf::stitch(images, cfg);
    } catch (const pf::StitchError& e) {
        std::cerr << "stitch failed at " << e.stage_name << ": " << e.what() << '\n';
        return kExitPipeline;
    }
    pf::write_image(out, outcome.panorama);
    for (int idx : outcome.skipped_images)
        std::cerr << "stitch: image " << idx << " not connected, skipped\n";

    if (!f.debug_matches.empty() && images.size() >= 2) {
        std::filesystem::create_directories(f.debug_matches);
        for (std::size_t i = 0; i + 1 < images.size(); ++i) {
            const pf::RegistrationResult reg =
                pf::register_pair(pf::to_grayscale(images[i]), pf::to_grayscale(images[i + 1]),
                                  cfg.registration);
            pf::write_image(f.debug_matches + "/matches_" + std::to_string(i) + "_" +
                                std::to_string(i + 1) + ".ppm",
                            draw_matches(images[i], images[i + 1], reg));
        }
        json gj = json::array();
        for (double g : outcome.gains.gains) gj.push_back(g);
        std::ofstream os(f.debug_matches + "/gains.json");
        os << gj.dump(2) << '\n';
    }
    return kExitOk;
}

int cmd_metrics(const std::string& in, const std::string& reference) {
    const pf::ImageU8 img = pf::read_image(in);
    pf::ImageU8 ref;
    const bool has_ref = !reference.empty();
    if (has_ref) ref = pf::read_image(reference);
    const pf::MetricsReport rep = pf::compute_metrics(img, has_ref ? &ref : nullptr);
    json j{{"brenner_mean", rep.brenner_mean},
           {"brenner_sum", rep.brenner_sum},
           {"entropy", rep.entropy_bits},
           {"contrast", rep.contrast}};
    if (rep.psnr_db) {
        if (std::isinf(*rep.psnr_db)) j["psnr"] = "inf";
        else j["psnr"] = *rep.psnr_db;
    }
    std::cout << j.dump(2) << '\n';
    return kExitOk;
}

int cmd_deblur(const std::string& in, const std::string& out, const std::string& params_path,
               std::uint64_t seed) {
    const pf::ImageU8 img = pf::read_image(in);
    const pf::ImageF32 gray = pf::to_grayscale(img);

    pf::AnafNetParams params;
    bool structural = params_path.empty();
    if (structural) {
        std::cerr << "deblur: no parameter file given; running in structural test mode with\n"
                     "seeded random weights. The output exercises the forward pass only and\n"
                     "makes no claim of deblurring quality.\n";
        pf::Rng rng(seed);
        params = pf::make_anafnet_params({1, 8, 2}, &rng);
    } else {
        params = pf::load_anafnet_params(params_path);
        if (params.config.in_channels != 1) {
            std::cerr << "deblur: parameter file expects " << params.config.in_channels
                      << " channels, input is grayscale\n";
            return kExitPipeline;
        }
    }

    // Pad to a multiple of 2^depth, run, crop back.
    const int div = 1 << params.config.depth;
    const int ph = (gray.height + div - 1) / div * div;
    const int pw = (gray.width + div - 1) / div * div;
    pf::Tensor4 x(1, 1, ph, pw);
    for (int y = 0; y < ph; ++y)
        for (int xx = 0; xx < pw; ++xx)
            x.at(0, 0, y, xx) = gray.at(std::min(xx, gray.width - 1), std::min(y, gray.height - 1));
    const pf::Tensor4 yt = pf::anafnet_forward(x, params);
    pf::ImageF32 restored(gray.width, gray.height, 1);
    for (int y = 0; y < gray.height; ++y)
        for (int xx = 0; xx < gray.width; ++xx) restored.at(xx, y) = yt.at(0, 0, y, xx);
    pf::write_image(out, pf::to_u8(restored));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    if (const char* env = std::getenv("PANOFORGE_THREADS")) {
        g_thread_cap = std::max(1, std::atoi(env));
    }

    CLI::App app{"panoforge: fisheye panorama stitching toolkit"};
    app.require_subcommand(1);
    CommonFlags flags;

    std::string in, out, camera_path, reference, feats_a, feats_b, dataset_dir, params_path;
    std::vector<std::string> inputs;

    auto* undistort = app.add_subcommand("undistort", "correct lens distortion");
    undistort->add_option("input", in)->required();
    undistort->add_option("--camera", camera_path, "camera config (key=value)")->required();
    undistort->add_option("--out", out)->required();

    auto* detect = app.add_subcommand("detect", "detect and describe keypoints");
    detect->add_option("input", in)->required();
    detect->add_option("--out", out, "feature file")->required();
    add_common(detect, flags);

    auto* match = app.add_subcommand("match", "match two feature files");
    match->add_option("features_a", feats_a)->required();
    match->add_option("features_b", feats_b)->required();
    match->add_option("--out", out, "match CSV")->required();
    add_common(match, flags);

    auto* eval = app.add_subcommand("eval", "run the registration evaluation protocol");
    eval->add_option("dataset", dataset_dir, "sequence directory (img1.., H1to2p..)")->required();
    eval->add_option("--out", out, "report JSON path or '-'")->default_val("-");
    add_common(eval, flags);

    auto* stitch = app.add_subcommand("stitch", "stitch images into a panorama");
    stitch->add_option("inputs", inputs)->required()->expected(-1);
    stitch->add_option("--out", out)->required();
    stitch->add_option("--camera", camera_path, "undistort inputs first");
    add_common(stitch, flags);

    auto* metrics = app.add_subcommand("metrics", "no-reference deblur quality metrics");
    metrics->add_option("input", in)->required();
    metrics->add_option("--reference", reference, "enables PSNR");

    auto* deblur = app.add_subcommand("deblur", "run the restoration network forward pass");
    deblur->add_option("input", in)->required();
    deblur->add_option("--out", out)->required();
    deblur->add_option("--params", params_path, "trained parameter file");
    deblur->add_option("--seed", flags.seed)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*undistort) return cmd_undistort(in, camera_path, out);
        if (*detect) return cmd_detect(in, out, flags);
        if (*match) return cmd_match(feats_a, feats_b, out, flags);
        if (*eval) return cmd_eval(dataset_dir, out, flags);
        if (*stitch) return cmd_stitch(inputs, out, camera_path, flags);
        if (*metrics) return cmd_metrics(in, reference);
        if (*deblur) return cmd_deblur(in, out, params_path, flags.seed);
    } catch (const pf::StitchError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitPipeline;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}
