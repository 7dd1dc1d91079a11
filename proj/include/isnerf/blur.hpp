#pragma once

// Motion blur as the mean of sharp renders along the exposure geodesic.

#include "isnerf/engine.hpp"

namespace isnerf {

struct ExposureModel {
    Posed start;
    Posed end;
    int n = 8;                        // virtual sharp images per exposure
    bool inclusive_endpoint = false;  // fractions t/(n-1) instead of t/n
};

// Interpolation fraction of virtual image t in [0, n).
inline double exposure_fraction(int t, int n, bool inclusive_endpoint) {
    if (inclusive_endpoint) return n == 1 ? 0.0 : double(t) / double(n - 1);
    return double(t) / double(n);
}

inline std::vector<Posed> virtual_poses(const ExposureModel& em) {
    if (em.n < 1) throw InvalidArgument("exposure needs at least one virtual pose");
    std::vector<Posed> poses;
    poses.reserve(std::size_t(em.n));
    for (int t = 0; t < em.n; ++t)
        poses.push_back(interpolate_pose(em.start, em.end, exposure_fraction(t, em.n, em.inclusive_endpoint)));
    return poses;
}

// Per-pixel mean in linear RGB, accumulated in index order as a running
// mean so a stack of identical images reproduces that image exactly.
inline ImageBuffer synthesize_blur(std::span<const ImageBuffer> images) {
    if (images.empty()) throw InvalidArgument("no images to average");
    ImageBuffer out = images[0];
    for (std::size_t k = 1; k < images.size(); ++k) {
        if (!images[k].same_size(out)) throw DimensionMismatch("blur stack images differ in size");
        const double inv = 1.0 / double(k + 1);
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += (images[k].data[i] - out.data[i]) * inv;
    }
    return out;
}

inline ImageBuffer synthesize_blur(const std::vector<ImageBuffer>& images) {
    return synthesize_blur(std::span<const ImageBuffer>(images));
}

// Every virtual pose reuses the per-pixel sample streams of `seed`, so a
// static exposure reproduces the sharp render exactly.
template <typename Scalar>
ImageBuffer render_blurred(const ExposureModel& em, const Intrinsics& k, const ModelRefs<Scalar>& models,
                           const RenderConfig& cfg, std::uint64_t seed) {
    const std::vector<Posed> poses = virtual_poses(em);
    std::vector<ImageBuffer> sharp;
    sharp.reserve(poses.size());
    for (std::size_t t = 0; t < poses.size(); ++t)
        sharp.push_back(render_image<Scalar>(poses[t], k, models, cfg, seed));
    return synthesize_blur(sharp);
}

inline ImageBuffer render_blurred(const ExposureModel& em, const Intrinsics& k, const FieldPair& fields,
                                  const IslmParams<double>* islm, const RenderConfig& cfg, std::uint64_t seed) {
    const std::vector<Posed> poses = virtual_poses(em);
    std::vector<ImageBuffer> sharp;
    for (std::size_t t = 0; t < poses.size(); ++t)
        sharp.push_back(render_image(poses[t], k, fields, islm, cfg, seed));
    return synthesize_blur(sharp);
}

}  // namespace isnerf
