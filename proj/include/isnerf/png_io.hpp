#pragma once

// 8-bit PNG IO. Images are written as RGB with round(clamp(c) * 255) and
// read back as c / 255; masks are single-channel 0/255.

#include "isnerf/image.hpp"

#include <png.h>

#include <cstdio>
#include <filesystem>
#include <memory>

namespace isnerf {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline void write_png_rows(const std::filesystem::path& path, int width, int height, int channels,
                           const std::vector<std::uint8_t>& bytes) {
    FilePtr f(std::fopen(path.string().c_str(), "wb"));
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng write init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng write init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng failed writing " + path.string());
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, png_uint_32(width), png_uint_32(height), 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y)
        png_write_row(png, const_cast<png_bytep>(bytes.data() + std::size_t(y) * width * channels));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// Returns bytes expanded to `channels` (1 or 3) with 8-bit depth.
inline std::vector<std::uint8_t> read_png_rows(const std::filesystem::path& path, int channels, int& width,
                                               int& height) {
    FilePtr f(std::fopen(path.string().c_str(), "rb"));
    if (!f) throw IoError("cannot open " + path.string());
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8)) throw IoError(path.string() + " is not a PNG");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng read init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng read init failed");
    }
    std::vector<std::uint8_t> bytes;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng failed reading " + path.string());
    }
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    width = int(png_get_image_width(png, info));
    height = int(png_get_image_height(png, info));
    const png_byte type = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    const bool gray = type == PNG_COLOR_TYPE_GRAY || type == PNG_COLOR_TYPE_GRAY_ALPHA;
    if (channels == 3 && gray) png_set_gray_to_rgb(png);
    if (channels == 1 && !gray) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    png_read_update_info(png, info);
    if (int(png_get_channels(png, info)) != channels) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("unexpected channel layout in " + path.string());
    }
    bytes.resize(std::size_t(width) * height * channels);
    for (int y = 0; y < height; ++y) png_read_row(png, bytes.data() + std::size_t(y) * width * channels, nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return bytes;
}

}  // namespace detail

inline void write_png(const std::filesystem::path& path, const ImageBuffer& img) {
    std::vector<std::uint8_t> bytes(img.data.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize_channel(img.data[i]);
    detail::write_png_rows(path, img.width, img.height, 3, bytes);
}

inline ImageBuffer read_png(const std::filesystem::path& path) {
    int w = 0, h = 0;
    const std::vector<std::uint8_t> bytes = detail::read_png_rows(path, 3, w, h);
    ImageBuffer img(w, h);
    for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0;
    return img;
}

inline void write_mask_png(const std::filesystem::path& path, const PixelMask& mask) {
    std::vector<std::uint8_t> bytes(mask.bits.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.bits[i] ? 255 : 0;
    detail::write_png_rows(path, mask.width, mask.height, 1, bytes);
}

inline PixelMask read_mask_png(const std::filesystem::path& path) {
    PixelMask m;
    const std::vector<std::uint8_t> bytes = detail::read_png_rows(path, 1, m.width, m.height);
    m.bits.resize(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) m.bits[i] = bytes[i] >= 128 ? 1 : 0;
    return m;
}

}  // namespace isnerf
