#pragma once

// Emission-absorption compositing along primary rays, the additive
// scattering-path term, and single-ray rendering entry points. The batched
// training/rendering engine lives in engine.hpp and shares the compositing
// kernels below so both produce identical numbers.

#include "isnerf/image.hpp"
#include "isnerf/islm.hpp"
#include "isnerf/se3.hpp"

#include <functional>

namespace isnerf {

struct RenderConfig {
    int coarse_samples = 32;  // N_c
    int fine_samples = 32;    // N_f
    ScatterConfig scatter;
    Vec3d background = Vec3d::Zero();
    bool scattering_enabled = true;
    bool weighted_scatter = false;  // scale each path by the primary transmittance at its origin
    Aabb scene_box;

    void validate() const {
        if (coarse_samples < 2) throw ConfigError("coarse_samples must be >= 2");
        if (fine_samples < 1) throw ConfigError("fine_samples must be >= 1");
        if (scattering_enabled) {
            if (scatter.paths < 0) throw ConfigError("scatter paths must be >= 0");
            if (scatter.paths > 0 && scatter.paths % 2 == 0) throw ConfigError("scatter paths must be odd");
            if (scatter.samples_per_path < 1) throw ConfigError("samples_per_path must be >= 1");
            if (scatter.paths > coarse_samples + fine_samples) throw ConfigError("more scatter paths than samples");
        }
        if (!(scatter.interval.l_min > 0.0 && scatter.interval.l_min <= scatter.interval.l_max))
            throw ConfigError("interval bounds need 0 < l_min <= l_max");
    }

    bool scatters() const { return scattering_enabled && scatter.paths > 0; }
};

// T_i = exp(-sum_{j<i} sigma_j delta_j)
template <typename Scalar>
std::vector<Scalar> transmittance_prefix(std::span<const Scalar> sigmas, std::span<const Scalar> deltas) {
    if (sigmas.size() != deltas.size()) throw LengthMismatch("sigmas and deltas differ in length");
    std::vector<Scalar> T(sigmas.size());
    Scalar optical_depth = Scalar(0);
    for (std::size_t i = 0; i < sigmas.size(); ++i) {
        T[i] = std::exp(-optical_depth);
        optical_depth += sigmas[i] * deltas[i];
    }
    return T;
}

inline std::vector<double> transmittance_prefix(const std::vector<double>& sigmas, const std::vector<double>& deltas) {
    return transmittance_prefix(std::span<const double>(sigmas), std::span<const double>(deltas));
}

template <typename Scalar>
struct CompositeResult {
    Vec3<Scalar> color = Vec3<Scalar>::Zero();
    Scalar final_transmittance = Scalar(1);
};

// color = sum_i T_i (1 - exp(-sigma_i delta_i)) c_i + T_final * background.
// colors holds 3 values per sample. T and w receive per-sample values.
template <typename Scalar>
CompositeResult<Scalar> composite(std::span<const Scalar> sigmas, std::span<const Scalar> deltas,
                                  std::span<const Scalar> colors, const Vec3<Scalar>& background,
                                  std::span<Scalar> T, std::span<Scalar> w) {
    const std::size_t n = sigmas.size();
    CompositeResult<Scalar> out;
    Scalar optical_depth = Scalar(0);
    for (std::size_t i = 0; i < n; ++i) {
        const Scalar tau = sigmas[i] * deltas[i];
        T[i] = std::exp(-optical_depth);
        w[i] = T[i] * -std::expm1(-tau);
        optical_depth += tau;
        out.color += w[i] * Vec3<Scalar>(colors[3 * i], colors[3 * i + 1], colors[3 * i + 2]);
    }
    out.final_transmittance = std::exp(-optical_depth);
    out.color += out.final_transmittance * background;
    return out;
}

// Adjoint of composite. dT (optional, may be empty) carries extra adjoints on
// the T_i values themselves. Writes dsigma and dcolor (3 per sample).
template <typename Scalar>
void composite_backward(std::span<const Scalar> sigmas, std::span<const Scalar> deltas,
                        std::span<const Scalar> colors, const Vec3<Scalar>& background,
                        std::span<const Scalar> T, std::span<const Scalar> w, Scalar final_transmittance,
                        const Vec3<Scalar>& dcolor, std::span<const Scalar> dT, std::span<Scalar> dsigma,
                        std::span<Scalar> dcolors) {
    const std::size_t n = sigmas.size();
    // suffix = d(output)/d(log-transmittance) contributions from later terms
    Scalar suffix = final_transmittance * dcolor.dot(background);
    Scalar suffix_T = Scalar(0);  // sum_{i>j} T_i dT_i
    for (std::size_t i = n; i-- > 0;) {
        const Vec3<Scalar> c(colors[3 * i], colors[3 * i + 1], colors[3 * i + 2]);
        const Scalar gc = dcolor.dot(c);
        const Scalar T_next = T[i] * std::exp(-sigmas[i] * deltas[i]);
        dsigma[i] = deltas[i] * (T_next * gc - suffix - suffix_T);
        dcolors[3 * i] = w[i] * dcolor.x();
        dcolors[3 * i + 1] = w[i] * dcolor.y();
        dcolors[3 * i + 2] = w[i] * dcolor.z();
        suffix += w[i] * gc;
        if (!dT.empty()) suffix_T += T[i] * dT[i];
    }
}

// ---------------------------------------------------------------------------
// Single-ray API over point-evaluable fields

using PointField = std::function<FieldOutput(const Vec3d& x, const Vec3d& d)>;

inline PointField point_field(const AnalyticField& field) {
    return [field](const Vec3d& x, const Vec3d& d) { return eval_analytic(field, x, d); };
}

// Network field over the scene box; positions are normalized before encoding.
template <typename Scalar>
PointField point_field(const FieldParams<Scalar>& params, const Aabb& box) {
    const SceneNormalizer normalize(box);
    return [&params, normalize](const Vec3d& x, const Vec3d& d) { return eval_field(params, normalize(x), d); };
}

// Coarse and fine fields of one radiance model.
struct FieldPair {
    PointField coarse;
    PointField fine;
};

inline void evaluate_samples(const Ray& ray, const PointField& field, RaySampleSet& s) {
    const std::size_t n = s.size();
    s.sigmas.resize(n);
    s.colors.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const FieldOutput o = field(ray.at(s.t_values[i]), ray.direction);
        s.sigmas[i] = o.sigma;
        s.colors[i] = o.color;
    }
}

inline Vec3d composite_samples(RaySampleSet& s, const Vec3d& background) {
    const std::size_t n = s.size();
    std::vector<double> colors(3 * n);
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) colors[3 * i + c] = s.colors[i][c];
    s.transmittance.assign(n, 0.0);
    s.weights.assign(n, 0.0);
    return composite<double>(s.sigmas, s.deltas, colors, background, s.transmittance, s.weights).color;
}

// Straight-line rendering over the given samples; fills sigmas, colors,
// transmittance and weights of the sample set.
inline Vec3d render_primary(const Ray& ray, const PointField& field, RaySampleSet& samples, const RenderConfig& cfg) {
    evaluate_samples(ray, field, samples);
    return composite_samples(samples, cfg.background);
}

inline Vec3d render_primary(const Ray& ray, const PointField& field, const std::vector<double>& t_values,
                            const RenderConfig& cfg, RaySampleSet* out = nullptr) {
    RaySampleSet s = make_sample_set(t_values, ray.t_far);
    const Vec3d c = render_primary(ray, field, s, cfg);
    if (out) *out = std::move(s);
    return c;
}

// Contribution of one scattering path: equal intervals l, T_k1 = 1, no
// background. Samples outside the scene box carry no density.
inline Vec3d scatter_path_term(const ScatterPath& path, const PointField& field, const Aabb& box) {
    const std::size_t n = path.points.size();
    std::vector<double> sig(n, 0.0), del(n, path.decision.interval), col(3 * n, 0.0), T(n), w(n);
    for (std::size_t j = 0; j < n; ++j) {
        if (!box.contains(path.points[j])) continue;
        const FieldOutput o = field(path.points[j], path.decision.direction);
        sig[j] = o.sigma;
        for (int c = 0; c < 3; ++c) col[3 * j + c] = o.color[c];
    }
    return composite<double>(sig, del, col, Vec3d::Zero(), T, w).color;
}

// Straight-line hierarchical rendering: stratified coarse pass, fine pass on
// the merged resampled set. No scattering.
inline Vec3d render_classic(const Ray& ray, const FieldPair& fields, const RenderConfig& cfg, Rng& rng) {
    RaySampleSet coarse = make_sample_set(stratified_samples(ray, cfg.coarse_samples, rng), ray.t_far);
    render_primary(ray, fields.coarse, coarse, cfg);
    RaySampleSet fine = make_sample_set(resample_fine(coarse, cfg.fine_samples, rng), ray.t_far);
    return render_primary(ray, fields.fine, fine, cfg);
}

struct ScatterRender {
    Vec3d color = Vec3d::Zero();          // C^_p
    Vec3d primary = Vec3d::Zero();        // C_p from the fine samples
    Vec3d coarse = Vec3d::Zero();         // coarse-network primary color
    RaySampleSet coarse_samples;
    RaySampleSet fine_samples;
    std::vector<ScatterPath> paths;
};

// Full per-ray pipeline: coarse pass, fine resampling, then the scattering
// paths added on top of the primary color.
inline ScatterRender render_scatter_aware_detailed(const Ray& ray, const FieldPair& fields,
                                                   const IslmParams<double>* islm, const RenderConfig& cfg, Rng& rng) {
    ScatterRender r;
    r.coarse_samples = make_sample_set(stratified_samples(ray, cfg.coarse_samples, rng), ray.t_far);
    r.coarse = render_primary(ray, fields.coarse, r.coarse_samples, cfg);
    r.fine_samples = make_sample_set(resample_fine(r.coarse_samples, cfg.fine_samples, rng), ray.t_far);
    r.primary = render_primary(ray, fields.fine, r.fine_samples, cfg);
    r.color = r.primary;
    if (!cfg.scatters()) return r;
    if (!islm) throw InvalidArgument("scattering enabled without islm parameters");
    r.paths = grow_scatter_paths(*islm, r.fine_samples, ray, cfg.scatter, SceneNormalizer(cfg.scene_box));
    for (const auto& path : r.paths) {
        const double gate = cfg.weighted_scatter ? r.fine_samples.transmittance[path.origin_index] : 1.0;
        r.color += gate * scatter_path_term(path, fields.fine, cfg.scene_box);
    }
    return r;
}

inline Vec3d render_scatter_aware(const Ray& ray, const FieldPair& fields, const IslmParams<double>* islm,
                                  const RenderConfig& cfg, Rng& rng) {
    return render_scatter_aware_detailed(ray, fields, islm, cfg, rng).color;
}

// ---------------------------------------------------------------------------
// Cameras

struct Intrinsics {
    double fx = 1.0, fy = 1.0, cx = 0.5, cy = 0.5;
    int width = 1, height = 1;

    void validate() const {
        if (!(fx > 0.0 && fy > 0.0) || width < 1 || height < 1) throw InvalidArgument("invalid pinhole intrinsics");
    }
};

inline nlohmann::json intrinsics_to_json(const Intrinsics& k) {
    return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

inline Intrinsics intrinsics_from_json(const nlohmann::json& j) {
    Intrinsics k;
    k.fx = j.at("fx");
    k.fy = j.at("fy");
    k.cx = j.at("cx");
    k.cy = j.at("cy");
    k.width = j.at("width");
    k.height = j.at("height");
    k.validate();
    return k;
}

// Unit direction in camera space through the pixel center; x right, y down,
// z forward.
inline Vec3d camera_direction(const Intrinsics& k, int px, int py) {
    return Vec3d((px + 0.5 - k.cx) / k.fx, (py + 0.5 - k.cy) / k.fy, 1.0).normalized();
}

struct CameraRay {
    Vec3d origin;
    Vec3d direction;
    std::optional<std::pair<double, double>> span;  // box entry/exit, empty when the box is missed
};

inline CameraRay camera_ray(const Posed& cam_to_world, const Intrinsics& k, int px, int py, const Aabb& box) {
    CameraRay r;
    r.origin = cam_to_world.translation;
    r.direction = (cam_to_world.rotation * camera_direction(k, px, py)).normalized();
    r.span = intersect_aabb(r.origin, r.direction, box);
    return r;
}

}  // namespace isnerf
