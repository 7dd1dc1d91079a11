#pragma once

// In-scattering lightpath model: a small network mapping a primary sample
// and the ray direction to a scattering direction and a sampling interval,
// plus the equidistant scattering samples grown from it.

#include "isnerf/sampler.hpp"

namespace isnerf {

enum class ScatterMode {
    adjacent,      // one path from each of K consecutive primary samples
    single_point,  // K paths from the peak sample, one output head each
};

inline std::string to_string(ScatterMode m) { return m == ScatterMode::adjacent ? "adjacent" : "single-point"; }

inline ScatterMode scatter_mode_from_string(const std::string& s) {
    if (s == "adjacent") return ScatterMode::adjacent;
    if (s == "single-point") return ScatterMode::single_point;
    throw ConfigError("unknown scatter mode '" + s + "'");
}

struct IslmShape {
    int depth = 3;
    int width = 64;
    int pos_levels = 6;
    int dir_levels = 4;
    int heads = 1;
    Activation activation = Activation::relu;

    bool operator==(const IslmShape&) const = default;
};

inline void to_json(nlohmann::json& j, const IslmShape& s) {
    j = {{"kind", "islm"},       {"depth", s.depth},           {"width", s.width},
         {"pos_levels", s.pos_levels}, {"dir_levels", s.dir_levels}, {"heads", s.heads},
         {"activation", to_string(s.activation)}};
}

inline void from_json(const nlohmann::json& j, IslmShape& s) {
    s.depth = j.at("depth");
    s.width = j.at("width");
    s.pos_levels = j.at("pos_levels");
    s.dir_levels = j.at("dir_levels");
    s.heads = j.at("heads");
    s.activation = activation_from_string(j.value("activation", "relu"));
}

struct IslmLayout {
    std::vector<DenseSlot> hidden;
    DenseSlot out;  // 4 rows per head: raw direction (3), raw interval (1)
    std::size_t total = 0;

    explicit IslmLayout(const IslmShape& s) {
        if (s.depth < 1 || s.width < 1 || s.heads < 1 || s.pos_levels < 0 || s.dir_levels < 0)
            throw InvalidArgument("invalid islm shape");
        DenseLayout layout;
        int in = encoded_size(s.pos_levels) + encoded_size(s.dir_levels);
        for (int i = 0; i < s.depth; ++i) {
            hidden.push_back(layout.add(in, s.width));
            in = s.width;
        }
        out = layout.add(s.width, 4 * s.heads);
        total = layout.total();
    }
};

template <typename Scalar = double>
using IslmParams = FlatParams<IslmShape, Scalar>;

template <typename Scalar>
IslmParams<Scalar> zero_islm_params(const IslmShape& shape) {
    return {shape, std::vector<Scalar>(IslmLayout(shape).total, Scalar(0))};
}

template <typename Scalar>
IslmParams<Scalar> init_islm_params(const IslmShape& shape, std::uint64_t seed) {
    IslmParams<Scalar> p = zero_islm_params<Scalar>(shape);
    const IslmLayout layout(shape);
    Rng rng = make_stream(seed, 0x151a);
    std::span<Scalar> v(p.values);
    for (const auto& s : layout.hidden) init_dense(v, s, rng, 1.0);
    init_dense(v, layout.out, rng, 1.0);
    return p;
}

struct IntervalBounds {
    double l_min = 0.01;
    double l_max = 0.5;
};

template <typename Scalar>
struct IslmCache {
    Batch<Scalar> enc_x, enc_d, input;
    std::vector<Batch<Scalar>> hidden;
    Batch<Scalar> raw;  // 4*heads x N
};

template <typename Scalar>
class IslmNetwork {
public:
    explicit IslmNetwork(const IslmParams<Scalar>& params) : params_(&params), layout_(params.shape) {
        if (params.values.size() != layout_.total)
            throw ShapeMismatch("islm params length " + std::to_string(params.values.size()) +
                                " does not match descriptor (" + std::to_string(layout_.total) + ")");
    }

    const IslmShape& shape() const { return params_->shape; }

    void forward(const Batch<Scalar>& x, const Batch<Scalar>& d, IslmCache<Scalar>& c) const {
        const auto& s = params_->shape;
        const std::span<const Scalar> p = params_->view();
        c.enc_x = positional_encoding(x, s.pos_levels);
        c.enc_d = positional_encoding(d, s.dir_levels);
        c.input.resize(c.enc_x.rows() + c.enc_d.rows(), x.cols());
        c.input.topRows(c.enc_x.rows()) = c.enc_x;
        c.input.bottomRows(c.enc_d.rows()) = c.enc_d;
        c.hidden.resize(layout_.hidden.size());
        const Batch<Scalar>* h = &c.input;
        for (std::size_t i = 0; i < layout_.hidden.size(); ++i) {
            c.hidden[i] = dense_forward(p, layout_.hidden[i], *h);
            activate_inplace(c.hidden[i], s.activation);
            h = &c.hidden[i];
        }
        c.raw = dense_forward(p, layout_.out, *h);
    }

    void backward(const IslmCache<Scalar>& c, const Batch<Scalar>& draw, std::span<Scalar> grad, Batch<Scalar>* dx,
                  Batch<Scalar>* dd) const {
        const auto& s = params_->shape;
        const std::span<const Scalar> p = params_->view();
        if (grad.size() != layout_.total) throw ShapeMismatch("islm gradient buffer has wrong length");
        Batch<Scalar> dh;
        dense_backward(p, layout_.out, c.hidden.back(), draw, grad, &dh);
        for (std::size_t i = layout_.hidden.size(); i-- > 0;) {
            activate_backward_inplace(c.hidden[i], dh, s.activation);
            const Batch<Scalar>& in = i == 0 ? c.input : c.hidden[i - 1];
            Batch<Scalar> dprev;
            dense_backward(p, layout_.hidden[i], in, dh, grad, &dprev);
            dh = std::move(dprev);
        }
        const Eigen::Index nx = c.enc_x.rows();
        if (dx) *dx = positional_encoding_backward(c.enc_x, Batch<Scalar>(dh.topRows(nx)), s.pos_levels);
        if (dd) *dd = positional_encoding_backward(c.enc_d, Batch<Scalar>(dh.bottomRows(dh.rows() - nx)), s.dir_levels);
    }

private:
    const IslmParams<Scalar>* params_;
    IslmLayout layout_;
};

inline constexpr double kDegenerateDirection = 1e-8;

template <typename Scalar>
struct ScatterDecisionT {
    Vec3<Scalar> direction = Vec3<Scalar>::UnitZ();  // d_s
    Scalar interval = Scalar(0.1);                   // l
    bool degenerate = false;  // raw direction vanished; d_s was replaced by the ray direction
};

using ScatterDecision = ScatterDecisionT<double>;

// raw (4 values) -> (d_s, l)
template <typename Scalar>
ScatterDecisionT<Scalar> decode_decision(const Scalar* raw, const Vec3<Scalar>& ray_dir, const IntervalBounds& b) {
    ScatterDecisionT<Scalar> out;
    const Vec3<Scalar> dir(raw[0], raw[1], raw[2]);
    const Scalar norm = dir.norm();
    if (!(double(norm) >= kDegenerateDirection)) {
        out.direction = ray_dir;
        out.degenerate = true;
    } else {
        out.direction = dir / norm;
    }
    out.interval = Scalar(b.l_min) + Scalar(b.l_max - b.l_min) * sigmoid(raw[3]);
    return out;
}

// Adjoint of decode_decision: (dL/dd_s, dL/dl) -> dL/draw.
template <typename Scalar>
void decode_decision_backward(const Scalar* raw, const ScatterDecisionT<Scalar>& dec, const Vec3<Scalar>& ddir,
                              Scalar dinterval, const IntervalBounds& b, Scalar* draw) {
    if (dec.degenerate) {
        draw[0] = draw[1] = draw[2] = Scalar(0);
    } else {
        const Scalar norm = Vec3<Scalar>(raw[0], raw[1], raw[2]).norm();
        const Vec3<Scalar> g = (ddir - dec.direction * dec.direction.dot(ddir)) / norm;
        draw[0] = g.x();
        draw[1] = g.y();
        draw[2] = g.z();
    }
    const Scalar sg = sigmoid(raw[3]);
    draw[3] = dinterval * Scalar(b.l_max - b.l_min) * sg * (Scalar(1) - sg);
}

// Maps world positions into the unit box the networks are trained on.
struct SceneNormalizer {
    Vec3d center = Vec3d::Zero();
    Vec3d inv_half = Vec3d::Ones();

    SceneNormalizer() = default;
    explicit SceneNormalizer(const Aabb& box) : center(box.center()), inv_half(box.half_extent().cwiseInverse()) {}

    Vec3d operator()(const Vec3d& x) const { return (x - center).cwiseProduct(inv_half); }
};

inline ScatterDecision eval_islm(const IslmParams<double>& params, const Vec3d& x_t, const Vec3d& d,
                                 const IntervalBounds& bounds, int head = 0,
                                 const SceneNormalizer& normalize = SceneNormalizer()) {
    check_unit(d, "ray direction");
    if (head < 0 || head >= params.shape.heads) throw InvalidArgument("islm head index out of range");
    const IslmNetwork<double> net(params);
    IslmCache<double> cache;
    Batch<double> xb = normalize(x_t);
    Batch<double> db = d;
    net.forward(xb, db, cache);
    return decode_decision(cache.raw.data() + 4 * head, d, bounds);
}

struct ScatterPath {
    Vec3d origin = Vec3d::Zero();
    ScatterDecision decision;
    std::vector<Vec3d> points;
    int origin_index = -1;  // index into the fine sample set
};

// points[j-1] = origin + j * l * d_s for j = 1..count
inline ScatterPath scatter_points(const Vec3d& origin, const ScatterDecision& decision, int count) {
    if (count < 1) throw InvalidArgument("scatter path needs at least one sample");
    ScatterPath path;
    path.origin = origin;
    path.decision = decision;
    path.points.reserve(count);
    for (int j = 1; j <= count; ++j) path.points.push_back(origin + (double(j) * decision.interval) * decision.direction);
    return path;
}

struct ScatterConfig {
    int paths = 5;             // K
    int samples_per_path = 8;  // N_t
    IntervalBounds interval;
    ScatterMode mode = ScatterMode::adjacent;
};

inline std::vector<ScatterPath> grow_scatter_paths(const IslmParams<double>& params, const RaySampleSet& fine,
                                                   const Ray& ray, const ScatterConfig& cfg,
                                                   const SceneNormalizer& normalize = SceneNormalizer()) {
    const std::vector<int> origins = select_scatter_origins(fine, cfg.paths);
    std::vector<ScatterPath> paths;
    paths.reserve(cfg.paths);
    if (cfg.mode == ScatterMode::adjacent) {
        for (int idx : origins) {
            const Vec3d x = ray.at(fine.t_values[idx]);
            paths.push_back(scatter_points(x, eval_islm(params, x, ray.direction, cfg.interval, 0, normalize),
                                           cfg.samples_per_path));
            paths.back().origin_index = idx;
        }
    } else {
        if (params.shape.heads < cfg.paths) throw ShapeMismatch("single-point mode needs one islm head per path");
        const int best = int(std::max_element(fine.weights.begin(), fine.weights.end()) - fine.weights.begin());
        const Vec3d x = ray.at(fine.t_values[best]);
        for (int k = 0; k < cfg.paths; ++k) {
            paths.push_back(scatter_points(x, eval_islm(params, x, ray.direction, cfg.interval, k, normalize),
                                           cfg.samples_per_path));
            paths.back().origin_index = best;
        }
    }
    return paths;
}

}  // namespace isnerf
