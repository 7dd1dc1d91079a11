#pragma once

#include "isnerf/common.hpp"

#include <algorithm>
#include <vector>

namespace isnerf {

// Linear RGB, row-major, three doubles per pixel. Values are not clamped.
struct ImageBuffer {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    ImageBuffer() = default;
    ImageBuffer(int w, int h, double fill = 0.0) : width(w), height(h), data(std::size_t(w) * h * 3, fill) {
        if (w < 0 || h < 0) throw InvalidArgument("negative image size");
    }

    std::size_t pixel_count() const { return std::size_t(width) * height; }

    Vec3d at(int x, int y) const {
        const std::size_t i = (std::size_t(y) * width + x) * 3;
        return {data[i], data[i + 1], data[i + 2]};
    }
    void set(int x, int y, const Vec3d& c) {
        const std::size_t i = (std::size_t(y) * width + x) * 3;
        data[i] = c.x();
        data[i + 1] = c.y();
        data[i + 2] = c.z();
    }
    Vec3d pixel(std::size_t index) const { return {data[3 * index], data[3 * index + 1], data[3 * index + 2]}; }

    bool same_size(const ImageBuffer& o) const { return width == o.width && height == o.height; }
};

inline std::uint8_t quantize_channel(double c) {
    return std::uint8_t(std::lround(std::clamp(c, 0.0, 1.0) * 255.0));
}

inline ImageBuffer clamped(const ImageBuffer& img) {
    ImageBuffer out = img;
    for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
    return out;
}

// Single-channel mask stored as 0/1 per pixel.
struct PixelMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    std::size_t count() const { return std::size_t(std::count(bits.begin(), bits.end(), std::uint8_t(1))); }
};

}  // namespace isnerf
