#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "panoforge/image.hpp"

namespace panoforge {

// Pinhole intrinsics plus Brown-Conrady distortion coefficients.
struct CameraModel {
    double fx = 1, fy = 1;
    double cx = 0, cy = 0;
    double k1 = 0, k2 = 0, k3 = 0;
    double p1 = 0, p2 = 0;

    void validate() const {
        if (!(fx > 0) || !(fy > 0)) throw std::invalid_argument("camera: fx, fy must be > 0");
        for (double v : {fx, fy, cx, cy, k1, k2, k3, p1, p2})
            if (!std::isfinite(v)) throw std::invalid_argument("camera: non-finite parameter");
    }
};

// key=value lines; keys fx fy cx cy k1 k2 k3 p1 p2. Unknown keys rejected.
inline CameraModel parse_camera_config(std::istream& in) {
    std::map<std::string, double> kv;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::string trimmed;
        for (char c : line)
            if (!std::isspace(static_cast<unsigned char>(c))) trimmed.push_back(c);
        if (trimmed.empty()) continue;
        const auto eq = trimmed.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("camera config: expected key=value, got '" + line + "'");
        kv[trimmed.substr(0, eq)] = std::stod(trimmed.substr(eq + 1));
    }
    CameraModel m;
    for (auto& [key, value] : kv) {
        if (key == "fx") m.fx = value;
        else if (key == "fy") m.fy = value;
        else if (key == "cx") m.cx = value;
        else if (key == "cy") m.cy = value;
        else if (key == "k1") m.k1 = value;
        else if (key == "k2") m.k2 = value;
        else if (key == "k3") m.k3 = value;
        else if (key == "p1") m.p1 = value;
        else if (key == "p2") m.p2 = value;
        else throw std::invalid_argument("camera config: unknown key '" + key + "'");
    }
    m.validate();
    return m;
}

inline CameraModel load_camera_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("camera config not found: " + path);
    return parse_camera_config(in);
}

// Forward distortion in normalized camera coordinates.
inline void distort_point(const CameraModel& m, double x, double y, double& xd, double& yd) {
    const double r2 = x * x + y * y;
    const double radial = 1.0 + m.k1 * r2 + m.k2 * r2 * r2 + m.k3 * r2 * r2 * r2;
    xd = x * radial + 2.0 * m.p1 * x * y + m.p2 * (r2 + 2.0 * x * x);
    yd = y * radial + 2.0 * m.p2 * x * y + m.p1 * (r2 + 2.0 * y * y);
}

// Inverts distort_point by fixed-point iteration. Returns false if the
// iteration fails to settle within max_iters.
inline bool undistort_point(const CameraModel& m, double xd, double yd, double& x, double& y,
                            int max_iters = 20, double tol = 1e-8) {
    x = xd;
    y = yd;
    for (int i = 0; i < max_iters; ++i) {
        double ex, ey;
        distort_point(m, x, y, ex, ey);
        const double nx = x - (ex - xd);
        const double ny = y - (ey - yd);
        const double step = std::hypot(nx - x, ny - y);
        x = nx;
        y = ny;
        if (step < tol) return true;
    }
    return false;
}

struct UndistortDiagnostics {
    long long nonconverged_pixels = 0;
};

// Produces the undistortion-corrected image. Each output pixel is an
// undistorted location; its source is found by forward-distorting the
// normalized coordinate, so the remap is closed-form. Out-of-source
// pixels are black.
inline ImageU8 undistort_image(const CameraModel& m, const ImageU8& img,
                               UndistortDiagnostics* diag = nullptr) {
    m.validate();
    const ImageF32 src = to_f32(img);
    ImageF32 out(img.width, img.height, img.channels);
    UndistortDiagnostics local;
    for (int v = 0; v < img.height; ++v)
        for (int u = 0; u < img.width; ++u) {
            const double xn = (u - m.cx) / m.fx;
            const double yn = (v - m.cy) / m.fy;
            double xd, yd;
            distort_point(m, xn, yn, xd, yd);
            if (!std::isfinite(xd) || !std::isfinite(yd)) {
                ++local.nonconverged_pixels;
                continue;
            }
            const double us = xd * m.fx + m.cx;
            const double vs = yd * m.fy + m.cy;
            if (us < 0 || vs < 0 || us > img.width - 1 || vs > img.height - 1) continue;
            for (int c = 0; c < img.channels; ++c)
                out.at(u, v, c) =
                    sample_bilinear(src, static_cast<float>(us), static_cast<float>(vs), c);
        }
    if (diag) *diag = local;
    return to_u8(out);
}

}  // namespace panoforge
