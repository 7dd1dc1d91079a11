#pragma once

// Dense layers over column batches (features x points) with flat parameter
// storage, plus the sin/cos frequency encoding. Backward passes are written
// per layer: each forward keeps what its backward needs.

#include "isnerf/common.hpp"

#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace isnerf {

template <typename Scalar>
using Batch = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowMajorMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct DenseSlot {
    int in = 0;
    int out = 0;
    std::size_t offset = 0;  // weights (out x in, row-major) then bias (out)

    std::size_t size() const { return std::size_t(out) * std::size_t(in) + std::size_t(out); }
};

// Lays out consecutive dense layers in a flat vector.
class DenseLayout {
public:
    DenseSlot add(int in, int out) {
        DenseSlot slot{in, out, total_};
        total_ += slot.size();
        return slot;
    }
    std::size_t total() const { return total_; }

private:
    std::size_t total_ = 0;
};

template <typename Scalar>
Batch<Scalar> dense_forward(std::span<const Scalar> params, const DenseSlot& s, const Batch<Scalar>& x) {
    Eigen::Map<const RowMajorMat<Scalar>> W(params.data() + s.offset, s.out, s.in);
    Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> b(params.data() + s.offset + W.size(), s.out);
    Batch<Scalar> y = W * x;
    y.colwise() += b;
    return y;
}

// Accumulates dW, db into grad; returns dx when wanted.
template <typename Scalar>
void dense_backward(std::span<const Scalar> params, const DenseSlot& s, const Batch<Scalar>& x,
                    const Batch<Scalar>& dy, std::span<Scalar> grad, Batch<Scalar>* dx) {
    Eigen::Map<const RowMajorMat<Scalar>> W(params.data() + s.offset, s.out, s.in);
    Eigen::Map<RowMajorMat<Scalar>> dW(grad.data() + s.offset, s.out, s.in);
    Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> db(grad.data() + s.offset + W.size(), s.out);
    // aligned temporaries keep the rounding independent of the buffer address
    const RowMajorMat<Scalar> gw = dy * x.transpose();
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> gb = dy.rowwise().sum();
    dW += gw;
    db += gb;
    if (dx) *dx = W.transpose() * dy;
}

enum class Activation { relu, softplus };

inline std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "softplus"; }

inline Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "softplus") return Activation::softplus;
    throw ConfigError("unknown activation '" + s + "'");
}

template <typename Scalar>
void activate_inplace(Batch<Scalar>& x, Activation a) {
    if (a == Activation::relu)
        x = x.cwiseMax(Scalar(0));
    else
        x = x.unaryExpr([](Scalar v) { return softplus(v); });
}

// Multiplies dy by the activation slope, recovered from the output y.
// softplus'(x) = 1 - exp(-softplus(x)).
template <typename Scalar>
void activate_backward_inplace(const Batch<Scalar>& y, Batch<Scalar>& dy, Activation a) {
    if (a == Activation::relu)
        dy = (y.array() > Scalar(0)).select(dy, Scalar(0));
    else
        dy = (dy.array() * -(-y.array()).expm1()).matrix();
}

inline int encoded_size(int levels) { return 3 + 6 * levels; }

// Rows: x, then per level k the block sin(2^k pi x) followed by cos(2^k pi x).
template <typename Scalar>
Batch<Scalar> positional_encoding(const Batch<Scalar>& x, int levels) {
    if (levels < 0) throw InvalidArgument("encoding level count must be >= 0");
    if (x.rows() != 3) throw ShapeMismatch("positional encoding expects 3 x N input");
    Batch<Scalar> out(encoded_size(levels), x.cols());
    out.topRows(3) = x;
    for (int k = 0; k < levels; ++k) {
        const Scalar freq = Scalar(std::ldexp(std::numbers::pi, k));
        const auto arg = (x.array() * freq).eval();
        out.middleRows(3 + 6 * k, 3) = arg.sin().matrix();
        out.middleRows(6 + 6 * k, 3) = arg.cos().matrix();
    }
    return out;
}

inline std::vector<double> positional_encoding(const Vec3d& x, int levels) {
    Batch<double> in(3, 1);
    in.col(0) = x;
    const Batch<double> enc = positional_encoding(in, levels);
    return std::vector<double>(enc.data(), enc.data() + enc.size());
}

// Gradient w.r.t. the raw input; the sin/cos rows already hold what we need.
template <typename Scalar>
Batch<Scalar> positional_encoding_backward(const Batch<Scalar>& enc, const Batch<Scalar>& denc, int levels) {
    Batch<Scalar> dx = denc.topRows(3);
    for (int k = 0; k < levels; ++k) {
        const Scalar freq = Scalar(std::ldexp(std::numbers::pi, k));
        dx.array() += freq * (enc.middleRows(6 + 6 * k, 3).array() * denc.middleRows(3 + 6 * k, 3).array() -
                              enc.middleRows(3 + 6 * k, 3).array() * denc.middleRows(6 + 6 * k, 3).array());
    }
    return dx;
}

template <typename Scalar>
void init_dense(std::span<Scalar> params, const DenseSlot& s, Rng& rng, double gain) {
    const double bound = gain * std::sqrt(6.0 / double(s.in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < std::size_t(s.out) * std::size_t(s.in); ++i)
        params[s.offset + i] = Scalar(dist(rng));
    for (int i = 0; i < s.out; ++i) params[s.offset + std::size_t(s.out) * s.in + i] = Scalar(0);
}

}  // namespace isnerf
