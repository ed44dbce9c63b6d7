#pragma once
// Grayscale PNG I/O through libpng. Label maps are 8-bit (pixel = class id,
// 255 = unknown); depth maps are 16-bit millimeters with 0 = invalid.
// Consumers must link libpng.

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "plf/core.hpp"

namespace plf {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] inline void png_fail(png_structp, png_const_charp msg) {
    throw Error(ErrorCode::Io, std::string("png: ") + msg);
}

inline void png_warn(png_structp, png_const_charp) {}

// Returns row-major samples widened to uint16 and the source bit depth.
inline Grid<std::uint16_t> read_gray_png(const std::filesystem::path& path, int& bit_depth_out) {
    FilePtr file(std::fopen(path.string().c_str(), "rb"));
    if (!file) throw Error(ErrorCode::Io, "cannot open " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    if (!png) throw Error(ErrorCode::Io, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* p;
        png_infop* i;
        ~Guard() { png_destroy_read_struct(p, i, nullptr); }
    } guard{&png, &info};
    if (!info) throw Error(ErrorCode::Io, "png_create_info_struct failed");

    png_init_io(png, file.get());
    png_read_info(png, info);
    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color != PNG_COLOR_TYPE_GRAY)
        throw Error(ErrorCode::Io, path.string() + ": expected a single-channel grayscale PNG");
    if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
    png_read_update_info(png, info);

    const std::size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<png_byte> buffer(rowbytes * height);
    std::vector<png_bytep> rows(height);
    for (png_uint_32 r = 0; r < height; ++r) rows[r] = buffer.data() + r * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);

    Grid<std::uint16_t> out(height, width);
    bit_depth_out = depth < 8 ? 8 : depth;
    for (png_uint_32 r = 0; r < height; ++r) {
        for (png_uint_32 c = 0; c < width; ++c) {
            if (bit_depth_out == 16) {
                std::uint16_t v;
                std::memcpy(&v, rows[r] + 2 * c, 2);
                out(r, c) = v;
            } else {
                out(r, c) = rows[r][c];
            }
        }
    }
    return out;
}

inline void write_gray_png(const std::filesystem::path& path, std::size_t height, std::size_t width,
                           int bit_depth, const std::vector<png_byte>& packed) {
    FilePtr file(std::fopen(path.string().c_str(), "wb"));
    if (!file) throw Error(ErrorCode::Io, "cannot write " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    if (!png) throw Error(ErrorCode::Io, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* p;
        png_infop* i;
        ~Guard() { png_destroy_write_struct(p, i); }
    } guard{&png, &info};
    if (!info) throw Error(ErrorCode::Io, "png_create_info_struct failed");

    png_init_io(png, file.get());
    png_set_compression_level(png, 6);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t rowbytes = width * static_cast<std::size_t>(bit_depth / 8);
    for (std::size_t r = 0; r < height; ++r)
        png_write_row(png, const_cast<png_bytep>(packed.data() + r * rowbytes));
    png_write_end(png, nullptr);
}

}  // namespace detail

inline LabelMap read_label_png(const std::filesystem::path& path) {
    int depth = 0;
    auto g = detail::read_gray_png(path, depth);
    if (depth != 8) throw Error(ErrorCode::Io, path.string() + ": label maps must be 8-bit");
    LabelMap m(g.height(), g.width());
    for (std::size_t i = 0; i < g.size(); ++i) m[i] = static_cast<Label>(g[i]);
    validate_labels(m);
    return m;
}

inline void write_label_png(const std::filesystem::path& path, const LabelMap& labels) {
    std::vector<png_byte> packed(labels.data().begin(), labels.data().end());
    detail::write_gray_png(path, labels.height(), labels.width(), 8, packed);
}

// 16-bit millimeters, 0 = invalid.
inline DepthMap read_depth_png(const std::filesystem::path& path) {
    int depth = 0;
    auto g = detail::read_gray_png(path, depth);
    if (depth != 16) throw Error(ErrorCode::Io, path.string() + ": depth maps must be 16-bit");
    Grid<double> meters(g.height(), g.width());
    Grid<std::uint8_t> valid(g.height(), g.width());
    for (std::size_t i = 0; i < g.size(); ++i) {
        meters[i] = g[i] / 1000.0;
        valid[i] = g[i] != 0;
    }
    return DepthMap(std::move(meters), std::move(valid));
}

inline void write_depth_png(const std::filesystem::path& path, const DepthMap& d) {
    std::vector<png_byte> packed(d.depth.size() * 2);
    for (std::size_t i = 0; i < d.depth.size(); ++i) {
        std::uint16_t mm = 0;
        if (d.valid[i]) {
            const double v = std::round(d.depth[i] * 1000.0);
            mm = static_cast<std::uint16_t>(std::clamp(v, 1.0, 65535.0));
        }
        packed[2 * i] = static_cast<png_byte>(mm >> 8);  // PNG samples are big-endian
        packed[2 * i + 1] = static_cast<png_byte>(mm & 0xFF);
    }
    detail::write_gray_png(path, d.height(), d.width(), 16, packed);
}

// 8-bit contour strength, value / 255.
inline Grid<double> read_strength_png(const std::filesystem::path& path) {
    int depth = 0;
    auto g = detail::read_gray_png(path, depth);
    const double scale = depth == 16 ? 65535.0 : 255.0;
    Grid<double> out(g.height(), g.width());
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i] / scale;
    return out;
}

}  // namespace plf
