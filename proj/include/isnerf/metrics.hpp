#pragma once

#include "isnerf/image.hpp"

#include <limits>

namespace isnerf {

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

inline double mse_to_psnr(double mse) { return mse > 0.0 ? 10.0 * std::log10(1.0 / mse) : kInfinitePsnr; }

// 10 log10(1 / MSE) over all channels; identical images give +inf.
inline double psnr(const ImageBuffer& a, const ImageBuffer& b) {
    if (!a.same_size(b)) throw DimensionMismatch("psnr inputs differ in size");
    if (a.data.empty()) throw DimensionMismatch("psnr of empty images");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        sum += d * d;
    }
    return mse_to_psnr(sum / double(a.data.size()));
}

// PSNR restricted to pixels where mask is set.
inline double psnr_masked(const ImageBuffer& a, const ImageBuffer& b, const PixelMask& mask) {
    if (!a.same_size(b) || mask.width != a.width || mask.height != a.height)
        throw DimensionMismatch("masked psnr inputs differ in size");
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < a.pixel_count(); ++p) {
        if (!mask.bits[p]) continue;
        for (int c = 0; c < 3; ++c) {
            const double d = a.data[3 * p + std::size_t(c)] - b.data[3 * p + std::size_t(c)];
            sum += d * d;
        }
        count += 3;
    }
    if (count == 0) throw InvalidArgument("empty mask");
    return mse_to_psnr(sum / double(count));
}

inline std::vector<double> luma(const ImageBuffer& img) {
    std::vector<double> y(img.pixel_count());
    for (std::size_t p = 0; p < y.size(); ++p)
        y[p] = 0.299 * img.data[3 * p] + 0.587 * img.data[3 * p + 1] + 0.114 * img.data[3 * p + 2];
    return y;
}

struct SsimOptions {
    int window = 7;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;
};

// Mean SSIM of the luma planes over all valid (unpadded) uniform windows,
// with population statistics per window.
inline double ssim(const ImageBuffer& a, const ImageBuffer& b, const SsimOptions& opt = {}) {
    if (!a.same_size(b)) throw DimensionMismatch("ssim inputs differ in size");
    if (a.width < opt.window || a.height < opt.window) throw InvalidArgument("image smaller than ssim window");
    const std::vector<double> ya = luma(a), yb = luma(b);
    const double c1 = std::pow(opt.k1 * opt.dynamic_range, 2), c2 = std::pow(opt.k2 * opt.dynamic_range, 2);
    const double inv_n = 1.0 / double(opt.window * opt.window);
    double total = 0.0;
    int windows = 0;
    for (int y0 = 0; y0 + opt.window <= a.height; ++y0) {
        for (int x0 = 0; x0 + opt.window <= a.width; ++x0) {
            double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
            for (int y = y0; y < y0 + opt.window; ++y) {
                for (int x = x0; x < x0 + opt.window; ++x) {
                    const double va = ya[std::size_t(y) * a.width + x], vb = yb[std::size_t(y) * a.width + x];
                    sa += va;
                    sb += vb;
                    saa += va * va;
                    sbb += vb * vb;
                    sab += va * vb;
                }
            }
            const double ma = sa * inv_n, mb = sb * inv_n;
            const double va = saa * inv_n - ma * ma, vb = sbb * inv_n - mb * mb, cov = sab * inv_n - ma * mb;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++windows;
        }
    }
    return total / windows;
}

}  // namespace isnerf
