#pragma once

// Sample placement along primary rays: stratified coarse draws, inverse-CDF
// fine draws over the coarse weights, and the scattering-origin window.

#include "isnerf/field.hpp"

#include <algorithm>
#include <concepts>
#include <optional>

namespace isnerf {

struct Ray {
    Vec3d origin = Vec3d::Zero();
    Vec3d direction = Vec3d::UnitZ();
    double t_near = 0.0;
    double t_far = 1.0;

    Ray() = default;
    Ray(const Vec3d& o, const Vec3d& d, double near, double far) : origin(o), direction(d), t_near(near), t_far(far) {
        check_unit(direction, "ray direction");
        if (!(t_near < t_far)) throw InvalidArgument("ray needs t_near < t_far");
    }

    Vec3d at(double t) const { return origin + t * direction; }
};

// Slab test; the entry is clamped to 0 so the camera may sit inside the box.
inline std::optional<std::pair<double, double>> intersect_aabb(const Vec3d& o, const Vec3d& d, const Aabb& box) {
    double t0 = 0.0;
    double t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-300) {
            if (o[a] < box.lo[a] || o[a] > box.hi[a]) return std::nullopt;
            continue;
        }
        double ta = (box.lo[a] - o[a]) / d[a];
        double tb = (box.hi[a] - o[a]) / d[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (!(t0 < t1)) return std::nullopt;
    return std::make_pair(t0, t1);
}

struct RaySampleSet {
    double t_far = 1.0;
    std::vector<double> t_values;
    std::vector<double> deltas;  // distance to the next sample, last one to t_far
    std::vector<double> sigmas;
    std::vector<Vec3d> colors;
    std::vector<double> transmittance;  // T_i before sample i
    std::vector<double> weights;        // T_i (1 - exp(-sigma_i delta_i))

    std::size_t size() const { return t_values.size(); }
};

template <typename U>
concept UniformSource = requires(U u) {
    { u() } -> std::convertible_to<double>;
};

inline auto uniform_from(Rng& rng) {
    return [&rng] { return uniform01(rng); };
}

inline std::vector<double> compute_deltas(std::span<const double> t, double t_far) {
    std::vector<double> d(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) d[i] = (i + 1 < t.size() ? t[i + 1] : t_far) - t[i];
    return d;
}

inline RaySampleSet make_sample_set(std::vector<double> t_values, double t_far) {
    RaySampleSet s;
    s.t_far = t_far;
    s.deltas = compute_deltas(t_values, t_far);
    s.t_values = std::move(t_values);
    return s;
}

// One draw per equal-width bin of [t_near, t_far].
template <UniformSource U>
std::vector<double> stratified_samples(const Ray& ray, int count, U&& uniform) {
    if (count < 2) throw InvalidArgument("stratified sampling needs at least 2 samples");
    const double width = (ray.t_far - ray.t_near) / count;
    std::vector<double> t(count);
    for (int i = 0; i < count; ++i) t[i] = ray.t_near + (i + double(uniform())) * width;
    return t;
}

inline std::vector<double> stratified_samples(const Ray& ray, int count, Rng& rng) {
    return stratified_samples(ray, count, uniform_from(rng));
}

inline constexpr double kPdfFloor = 1e-5;

// Sample i owns the bin [t_i, t_i + delta_i]. Draws follow the normalized
// weights plus a uniform floor per bin; all-zero weights fall back to a PDF
// proportional to bin width. Output is the sorted union with the coarse t.
template <UniformSource U>
std::vector<double> resample_fine(const RaySampleSet& coarse, int count, U&& uniform) {
    if (count < 1) throw InvalidArgument("fine resampling needs at least 1 sample");
    const std::size_t n = coarse.t_values.size();
    if (n == 0 || coarse.weights.size() != n || coarse.deltas.size() != n)
        throw LengthMismatch("coarse sample set is incomplete");

    double total = 0.0;
    for (double w : coarse.weights) total += std::max(w, 0.0);
    std::vector<double> mass(n);
    for (std::size_t i = 0; i < n; ++i)
        mass[i] = total > 0.0 ? std::max(coarse.weights[i], 0.0) / total + kPdfFloor : coarse.deltas[i];
    std::vector<double> cdf(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) cdf[i + 1] = cdf[i] + mass[i];
    for (double& c : cdf) c /= cdf.back();
    cdf.back() = 1.0;

    std::vector<double> out(coarse.t_values);
    out.reserve(n + count);
    for (int j = 0; j < count; ++j) {
        const double u = std::min((j + double(uniform())) / count, std::nextafter(1.0, 0.0));
        std::size_t bin = std::size_t(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin()) - 1;
        bin = std::min(bin, n - 1);
        while (bin + 1 < n && mass[bin] <= 0.0) ++bin;
        const double frac = mass[bin] > 0.0 ? std::clamp((u - cdf[bin]) / (cdf[bin + 1] - cdf[bin]), 0.0, 1.0) : 0.5;
        out.push_back(coarse.t_values[bin] + frac * coarse.deltas[bin]);
    }
    std::sort(out.begin(), out.end());
    // keep strictly ascending; coincident draws are nudged up by one ulp
    for (std::size_t i = 1; i < out.size(); ++i)
        if (out[i] <= out[i - 1]) out[i] = std::nextafter(out[i - 1], std::numeric_limits<double>::infinity());
    return out;
}

inline std::vector<double> resample_fine(const RaySampleSet& coarse, int count, Rng& rng) {
    return resample_fine(coarse, count, uniform_from(rng));
}

// K consecutive indices centered on the first maximum weight, clamped to range.
inline std::vector<int> select_scatter_origins(std::span<const double> weights, int k) {
    if (k < 1 || k % 2 == 0) throw InvalidArgument("scatter origin count must be odd and positive");
    if (weights.size() < std::size_t(k))
        throw TooFewSamples(std::to_string(weights.size()) + " samples for " + std::to_string(k) + " origins");
    const int peak = int(std::max_element(weights.begin(), weights.end()) - weights.begin());
    const int first = std::clamp(peak - k / 2, 0, int(weights.size()) - k);
    std::vector<int> idx(k);
    for (int i = 0; i < k; ++i) idx[i] = first + i;
    return idx;
}

inline std::vector<int> select_scatter_origins(const RaySampleSet& fine, int k) {
    return select_scatter_origins(std::span<const double>(fine.weights), k);
}

}  // namespace isnerf
