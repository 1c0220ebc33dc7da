#pragma once

#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include <png.h>

#include "panoforge/image.hpp"

namespace panoforge {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UnsupportedFormatError : IoError {
    using IoError::IoError;
};
struct TruncatedFileError : IoError {
    using IoError::IoError;
};
struct DimensionOverflowError : IoError {
    using IoError::IoError;
};

namespace detail {

inline int pnm_next_token(std::istream& in, std::string& tok) {
    tok.clear();
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {}
            continue;
        }
        if (!std::isspace(ch)) break;
    }
    if (ch == EOF) return -1;
    do {
        tok.push_back(static_cast<char>(ch));
    } while ((ch = in.get()) != EOF && !std::isspace(ch));
    return 0;
}

inline long pnm_int(std::istream& in, const std::string& what) {
    std::string tok;
    if (pnm_next_token(in, tok) < 0)
        throw TruncatedFileError("PNM header truncated while reading " + what);
    try {
        return std::stol(tok);
    } catch (const std::exception&) {
        throw UnsupportedFormatError("PNM header: bad " + what + " '" + tok + "'");
    }
}

inline ImageU8 read_pnm(std::istream& in, int channels) {
    const long w = pnm_int(in, "width");
    const long h = pnm_int(in, "height");
    const long maxval = pnm_int(in, "maxval");
    if (w < 1 || h < 1 || w > 1 << 20 || h > 1 << 20 || w * h * channels > (1L << 31))
        throw DimensionOverflowError("PNM dimensions out of range");
    if (maxval != 255)
        throw UnsupportedFormatError("PNM maxval must be 255");
    ImageU8 img(static_cast<int>(w), static_cast<int>(h), channels);
    in.read(reinterpret_cast<char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.data.size()))
        throw TruncatedFileError("PNM payload truncated");
    return img;
}

struct PngReadCloser {
    png_structp png = nullptr;
    png_infop info = nullptr;
    std::FILE* fp = nullptr;
    ~PngReadCloser() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

inline ImageU8 read_png_file(const std::string& path) {
    PngReadCloser st;
    st.fp = std::fopen(path.c_str(), "rb");
    if (!st.fp) throw IoError("cannot open " + path);
    st.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    st.info = png_create_info_struct(st.png);
    if (setjmp(png_jmpbuf(st.png)))
        throw TruncatedFileError("PNG decode failed for " + path);
    png_init_io(st.png, st.fp);
    png_read_info(st.png, st.info);

    png_uint_32 w = png_get_image_width(st.png, st.info);
    png_uint_32 h = png_get_image_height(st.png, st.info);
    if (w < 1 || h < 1 || w > 1 << 20 || h > 1 << 20)
        throw DimensionOverflowError("PNG dimensions out of range");
    int bit_depth = png_get_bit_depth(st.png, st.info);
    int color = png_get_color_type(st.png, st.info);
    if (bit_depth == 16) png_set_strip_16(st.png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(st.png);
    if (color == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(st.png);
    if (png_get_valid(st.png, st.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(st.png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(st.png);
    png_read_update_info(st.png, st.info);

    color = png_get_color_type(st.png, st.info);
    const int channels = (color == PNG_COLOR_TYPE_GRAY) ? 1 : 3;
    ImageU8 img(static_cast<int>(w), static_cast<int>(h), channels);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y)
        rows[y] = img.data.data() + static_cast<std::size_t>(y) * w * channels;
    png_read_image(st.png, rows.data());
    return img;
}

struct PngWriteCloser {
    png_structp png = nullptr;
    png_infop info = nullptr;
    std::FILE* fp = nullptr;
    ~PngWriteCloser() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
    }
};

inline void write_png_file(const std::string& path, const ImageU8& img) {
    PngWriteCloser st;
    st.fp = std::fopen(path.c_str(), "wb");
    if (!st.fp) throw IoError("cannot open " + path + " for writing");
    st.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    st.info = png_create_info_struct(st.png);
    if (setjmp(png_jmpbuf(st.png)))
        throw IoError("PNG encode failed for " + path);
    png_init_io(st.png, st.fp);
    png_set_IHDR(st.png, st.info, img.width, img.height, 8,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(st.png, st.info);
    for (int y = 0; y < img.height; ++y)
        png_write_row(st.png, const_cast<png_bytep>(
                                  img.data.data() +
                                  static_cast<std::size_t>(y) * img.width * img.channels));
    png_write_end(st.png, nullptr);
}

inline bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() &&
           s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace detail

inline ImageU8 read_image(const std::string& path) {
    if (detail::ends_with(path, ".png") || detail::ends_with(path, ".PNG"))
        return detail::read_png_file(path);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (in.gcount() != 2) throw TruncatedFileError("file too short: " + path);
    if (magic[0] == 'P' && magic[1] == '5') return detail::read_pnm(in, 1);
    if (magic[0] == 'P' && magic[1] == '6') return detail::read_pnm(in, 3);
    if (magic[0] == '\x89' && magic[1] == 'P') return detail::read_png_file(path);
    throw UnsupportedFormatError("unsupported image format: " + path);
}

// PGM for 1 channel, PPM for 3; PNG when the extension says so.
inline void write_image(const std::string& path, const ImageU8& img) {
    if (detail::ends_with(path, ".png") || detail::ends_with(path, ".PNG")) {
        detail::write_png_file(path, img);
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << (img.channels == 1 ? "P5" : "P6") << "\n"
        << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data.data()),
              static_cast<std::streamsize>(img.data.size()));
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace panoforge
