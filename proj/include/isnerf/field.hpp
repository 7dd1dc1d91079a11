#pragma once

// Radiance fields: the learned network (x, d) -> (sigma, color) and the
// closed-form analytic fields used as ground truth and quadrature oracles.

#include "isnerf/mlp.hpp"

#include <nlohmann/json.hpp>

#include <variant>

namespace isnerf {

struct FieldOutput {
    double sigma = 0.0;
    Vec3d color = Vec3d::Zero();
};

struct FieldShape {
    int trunk_depth = 4;
    int trunk_width = 64;
    int color_width = 32;
    int pos_levels = 6;
    int dir_levels = 4;
    Activation activation = Activation::relu;

    bool operator==(const FieldShape&) const = default;
};

inline void to_json(nlohmann::json& j, const FieldShape& s) {
    j = {{"kind", "field"},
         {"trunk_depth", s.trunk_depth},
         {"trunk_width", s.trunk_width},
         {"color_width", s.color_width},
         {"pos_levels", s.pos_levels},
         {"dir_levels", s.dir_levels},
         {"activation", to_string(s.activation)}};
}

inline void from_json(const nlohmann::json& j, FieldShape& s) {
    s.trunk_depth = j.at("trunk_depth");
    s.trunk_width = j.at("trunk_width");
    s.color_width = j.at("color_width");
    s.pos_levels = j.at("pos_levels");
    s.dir_levels = j.at("dir_levels");
    s.activation = activation_from_string(j.value("activation", "relu"));
}

// Slot table of the field network. Density depends on position only; the
// view direction joins after the density head.
struct FieldLayout {
    std::vector<DenseSlot> trunk;
    DenseSlot sigma_head;
    DenseSlot color_hidden;
    DenseSlot color_out;
    std::size_t total = 0;

    explicit FieldLayout(const FieldShape& s) {
        if (s.trunk_depth < 1 || s.trunk_width < 1 || s.color_width < 1 || s.pos_levels < 0 || s.dir_levels < 0)
            throw InvalidArgument("invalid field shape");
        DenseLayout layout;
        int in = encoded_size(s.pos_levels);
        for (int i = 0; i < s.trunk_depth; ++i) {
            trunk.push_back(layout.add(in, s.trunk_width));
            in = s.trunk_width;
        }
        sigma_head = layout.add(s.trunk_width, 1);
        color_hidden = layout.add(s.trunk_width + encoded_size(s.dir_levels), s.color_width);
        color_out = layout.add(s.color_width, 3);
        total = layout.total();
    }
};

template <typename Shape, typename Scalar>
struct FlatParams {
    Shape shape;
    std::vector<Scalar> values;

    std::span<const Scalar> view() const { return values; }
    std::size_t size() const { return values.size(); }
};

template <typename Scalar = double>
using FieldParams = FlatParams<FieldShape, Scalar>;

template <typename Scalar>
FieldParams<Scalar> zero_field_params(const FieldShape& shape) {
    return {shape, std::vector<Scalar>(FieldLayout(shape).total, Scalar(0))};
}

template <typename Scalar>
FieldParams<Scalar> init_field_params(const FieldShape& shape, std::uint64_t seed) {
    FieldParams<Scalar> p = zero_field_params<Scalar>(shape);
    const FieldLayout layout(shape);
    Rng rng = make_stream(seed, 0xf1e1d);
    std::span<Scalar> v(p.values);
    for (const auto& s : layout.trunk) init_dense(v, s, rng, 1.0);
    init_dense(v, layout.sigma_head, rng, 0.5);
    init_dense(v, layout.color_hidden, rng, 1.0);
    init_dense(v, layout.color_out, rng, 0.5);
    return p;
}

template <typename Shape, typename To, typename From>
FlatParams<Shape, To> params_cast(const FlatParams<Shape, From>& p) {
    return {p.shape, std::vector<To>(p.values.begin(), p.values.end())};
}

// Everything the field backward pass needs from one batched forward.
template <typename Scalar>
struct FieldCache {
    Batch<Scalar> enc_x, enc_d;
    std::vector<Batch<Scalar>> trunk;  // post-activation
    Batch<Scalar> color_in;            // [trunk_last; enc_d]
    Batch<Scalar> color_hidden;        // post-activation
    Batch<Scalar> sigma_raw;           // 1 x N
    Batch<Scalar> sigma;               // 1 x N
    Batch<Scalar> color;               // 3 x N
};

template <typename Scalar>
class FieldNetwork {
public:
    explicit FieldNetwork(const FieldParams<Scalar>& params) : params_(&params), layout_(params.shape) {
        if (params.values.size() != layout_.total)
            throw ShapeMismatch("field params length " + std::to_string(params.values.size()) +
                                " does not match descriptor (" + std::to_string(layout_.total) + ")");
    }

    const FieldShape& shape() const { return params_->shape; }
    std::size_t param_count() const { return layout_.total; }

    // x: 3 x N positions (already normalized to the scene box), d: 3 x N unit directions.
    void forward(const Batch<Scalar>& x, const Batch<Scalar>& d, FieldCache<Scalar>& c) const {
        const auto& s = params_->shape;
        const std::span<const Scalar> p = params_->view();
        c.enc_x = positional_encoding(x, s.pos_levels);
        c.enc_d = positional_encoding(d, s.dir_levels);
        c.trunk.resize(layout_.trunk.size());
        const Batch<Scalar>* h = &c.enc_x;
        for (std::size_t i = 0; i < layout_.trunk.size(); ++i) {
            c.trunk[i] = dense_forward(p, layout_.trunk[i], *h);
            activate_inplace(c.trunk[i], s.activation);
            h = &c.trunk[i];
        }
        c.sigma_raw = dense_forward(p, layout_.sigma_head, *h);
        c.sigma = c.sigma_raw.unaryExpr([](Scalar v) { return softplus(v); });
        c.color_in.resize(h->rows() + c.enc_d.rows(), h->cols());
        c.color_in.topRows(h->rows()) = *h;
        c.color_in.bottomRows(c.enc_d.rows()) = c.enc_d;
        c.color_hidden = dense_forward(p, layout_.color_hidden, c.color_in);
        activate_inplace(c.color_hidden, s.activation);
        c.color = dense_forward(p, layout_.color_out, c.color_hidden).unaryExpr([](Scalar v) { return sigmoid(v); });
    }

    // dsigma: 1 x N, dcolor: 3 x N. Parameter gradients accumulate into grad;
    // dx / dd (may be null) receive input gradients.
    void backward(const FieldCache<Scalar>& c, const Batch<Scalar>& dsigma, const Batch<Scalar>& dcolor,
                  std::span<Scalar> grad, Batch<Scalar>* dx, Batch<Scalar>* dd) const {
        const auto& s = params_->shape;
        const std::span<const Scalar> p = params_->view();
        if (grad.size() != layout_.total) throw ShapeMismatch("field gradient buffer has wrong length");

        Batch<Scalar> dcolor_raw = (dcolor.array() * c.color.array() * (Scalar(1) - c.color.array())).matrix();
        Batch<Scalar> dhidden;
        dense_backward(p, layout_.color_out, c.color_hidden, dcolor_raw, grad, &dhidden);
        activate_backward_inplace(c.color_hidden, dhidden, s.activation);
        Batch<Scalar> dcolor_in;
        dense_backward(p, layout_.color_hidden, c.color_in, dhidden, grad, &dcolor_in);

        const int width = s.trunk_width;
        Batch<Scalar> dh = dcolor_in.topRows(width);
        // softplus' = logistic
        Batch<Scalar> dsigma_raw =
            (dsigma.array() * c.sigma_raw.array().unaryExpr([](Scalar v) { return sigmoid(v); })).matrix();
        Batch<Scalar> dh_sigma;
        dense_backward(p, layout_.sigma_head, c.trunk.back(), dsigma_raw, grad, &dh_sigma);
        dh += dh_sigma;

        for (std::size_t i = layout_.trunk.size(); i-- > 0;) {
            activate_backward_inplace(c.trunk[i], dh, s.activation);
            const Batch<Scalar>& in = i == 0 ? c.enc_x : c.trunk[i - 1];
            Batch<Scalar> dprev;
            const bool need_input = i > 0 || dx != nullptr;
            dense_backward(p, layout_.trunk[i], in, dh, grad, need_input ? &dprev : nullptr);
            if (i > 0) dh = std::move(dprev);
            else if (dx) *dx = positional_encoding_backward(c.enc_x, dprev, s.pos_levels);
        }
        if (dd) {
            const Batch<Scalar> denc_d = dcolor_in.bottomRows(c.enc_d.rows());
            *dd = positional_encoding_backward(c.enc_d, denc_d, s.dir_levels);
        }
    }

private:
    const FieldParams<Scalar>* params_;
    FieldLayout layout_;
};

inline void check_unit(const Vec3d& d, const char* what) {
    if (std::abs(d.norm() - 1.0) > 1e-6) throw InvalidArgument(std::string(what) + " must be unit-norm");
}

template <typename Scalar>
FieldOutput eval_field(const FieldParams<Scalar>& params, const Vec3d& x, const Vec3d& d) {
    check_unit(d, "view direction");
    const FieldNetwork<Scalar> net(params);
    Batch<Scalar> xb = x.cast<Scalar>();
    Batch<Scalar> db = d.cast<Scalar>();
    FieldCache<Scalar> cache;
    net.forward(xb, db, cache);
    FieldOutput out;
    out.sigma = double(cache.sigma(0, 0));
    out.color = cache.color.col(0).template cast<double>();
    return out;
}

// ---------------------------------------------------------------------------
// Analytic fields

struct Aabb {
    Vec3d lo = Vec3d::Constant(-1.0);
    Vec3d hi = Vec3d::Constant(1.0);

    bool contains(const Vec3d& x) const {
        return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
    }
    Vec3d center() const { return 0.5 * (lo + hi); }
    Vec3d half_extent() const { return 0.5 * (hi - lo); }
};

struct ConstantBox {
    double sigma = 1.0;
    Vec3d color = Vec3d::Constant(1.0);
    Aabb bounds;
};

// Boundary points count as inside.
struct EmissiveSphere {
    Vec3d center = Vec3d::Zero();
    double radius = 1.0;
    double sigma = 1.0;
    Vec3d color = Vec3d::Constant(1.0);
};

using Primitive = std::variant<ConstantBox, EmissiveSphere>;

inline FieldOutput eval_primitive(const Primitive& prim, const Vec3d& x) {
    return std::visit(
        [&](const auto& p) -> FieldOutput {
            using T = std::decay_t<decltype(p)>;
            bool inside = false;
            if constexpr (std::is_same_v<T, ConstantBox>) inside = p.bounds.contains(x);
            else inside = (x - p.center).norm() <= p.radius;
            if (!inside) return {};
            return {p.sigma, p.color};
        },
        prim);
}

// Union of primitives: densities add, color is the density-weighted mean.
struct AnalyticField {
    std::vector<Primitive> primitives;
};

inline FieldOutput eval_analytic(const AnalyticField& field, const Vec3d& x, const Vec3d& /*d*/) {
    FieldOutput out;
    Vec3d weighted = Vec3d::Zero();
    for (const auto& prim : field.primitives) {
        const FieldOutput o = eval_primitive(prim, x);
        out.sigma += o.sigma;
        weighted += o.sigma * o.color;
    }
    if (out.sigma > 0.0) out.color = weighted / out.sigma;
    return out;
}

inline FieldOutput eval_analytic(const Primitive& prim, const Vec3d& x, const Vec3d& d) {
    return eval_analytic(AnalyticField{{prim}}, x, d);
}

}  // namespace isnerf
