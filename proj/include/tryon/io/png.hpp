#pragma once

// 8-bit PNG read/write through libpng. Files are written with fixed settings
// and no timestamp chunk, so identical pixels give identical bytes.

#include <png.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "tryon/core/error.hpp"
#include "tryon/core/tensor.hpp"

namespace tryon::io {

struct Raster {
    int width = 0;
    int height = 0;
    int channels = 0;  // 1 or 3
    std::vector<std::uint8_t> pixels;  // interleaved, row-major
};

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] inline void png_error_fn(png_structp png, png_const_charp msg) {
    auto* text = static_cast<std::string*>(png_get_error_ptr(png));
    if (text) *text = msg;
    png_longjmp(png, 1);
}
inline void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace detail

inline Raster read_png(const std::filesystem::path& path) {
    detail::FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw IoError("cannot open PNG", path.string());

    std::string err;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_fn,
                                             detail::png_warning_fn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng init failed", path.string());
    }
    Raster r;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("malformed PNG (" + err + ")", path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const auto color = png_get_color_type(png, info);
    const auto depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    r.width = static_cast<int>(png_get_image_width(png, info));
    r.height = static_cast<int>(png_get_image_height(png, info));
    r.channels = png_get_channels(png, info);
    r.pixels.resize(static_cast<std::size_t>(r.width) * r.height * r.channels);
    rows.resize(r.height);
    for (int y = 0; y < r.height; ++y)
        rows[y] = r.pixels.data() + static_cast<std::size_t>(y) * r.width * r.channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return r;
}

inline void write_png(const std::filesystem::path& path, const Raster& r) {
    require<ValueError>(r.channels == 1 || r.channels == 3, "write_png: channels must be 1 or 3");
    detail::FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw IoError("cannot create PNG", path.string());

    std::string err;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_fn,
                                              detail::png_warning_fn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng init failed", path.string());
    }
    std::vector<png_bytep> rows(r.height);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG write failed (" + err + ")", path.string());
    }
    png_init_io(png, fp.get());
    png_set_compression_level(png, 9);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    png_set_IHDR(png, info, static_cast<png_uint_32>(r.width), static_cast<png_uint_32>(r.height), 8,
                 r.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < r.height; ++y)
        rows[y] = const_cast<png_bytep>(r.pixels.data() + static_cast<std::size_t>(y) * r.width * r.channels);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

/// [0,255] -> [-1,1]
inline float byte_to_unit(std::uint8_t b) noexcept { return static_cast<float>(b) / 127.5f - 1.0f; }

/// [-1,1] -> [0,255], clamped and rounded to nearest.
inline std::uint8_t unit_to_byte(float v) noexcept {
    const float s = std::round((v + 1.0f) * 127.5f);
    return static_cast<std::uint8_t>(s < 0.0f ? 0.0f : (s > 255.0f ? 255.0f : s));
}

inline ImageTensor to_image(const Raster& r) {
    require(r.channels == 3 || r.channels == 1, "to_image: unsupported channel count ", r.channels);
    ImageTensor img(r.height, r.width);
    for (int y = 0; y < r.height; ++y)
        for (int x = 0; x < r.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const int src = r.channels == 3 ? c : 0;
                img.at(c, y, x) = byte_to_unit(r.pixels[(static_cast<std::size_t>(y) * r.width + x) * r.channels + src]);
            }
    return img;
}

inline Raster from_image(const ImageTensor& img) {
    Raster r{img.width, img.height, 3, {}};
    r.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c)
                r.pixels[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] = unit_to_byte(img.at(c, y, x));
    return r;
}

/// Any value >= 128 (first channel) becomes 1.
inline MaskTensor to_mask(const Raster& r) {
    MaskTensor m(r.height, r.width);
    for (int y = 0; y < r.height; ++y)
        for (int x = 0; x < r.width; ++x)
            m.at(0, y, x) = r.pixels[(static_cast<std::size_t>(y) * r.width + x) * r.channels] >= 128 ? 1.0f : 0.0f;
    return m;
}

inline Raster from_mask(const MaskTensor& m) {
    Raster r{m.width, m.height, 1, {}};
    r.pixels.resize(static_cast<std::size_t>(m.width) * m.height);
    for (std::size_t i = 0; i < r.pixels.size(); ++i) r.pixels[i] = m.values[i] != 0.0f ? 255 : 0;
    return r;
}

inline ImageTensor load_image(const std::filesystem::path& p) { return to_image(read_png(p)); }
inline MaskTensor load_mask(const std::filesystem::path& p) { return to_mask(read_png(p)); }
inline void save_image(const std::filesystem::path& p, const ImageTensor& img) { write_png(p, from_image(img)); }
inline void save_mask(const std::filesystem::path& p, const MaskTensor& m) { write_png(p, from_mask(m)); }

/// Round-trips an image through 8-bit quantization.
inline ImageTensor quantize(const ImageTensor& img) { return to_image(from_image(img)); }

}  // namespace tryon::io
