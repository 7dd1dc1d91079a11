#pragma once

// Rigid transforms and the geodesic pose interpolation used for exposure
// trajectories. Everything is templated on the scalar so the same code runs
// with double and with Eigen::AutoDiffScalar when pose Jacobians are needed.

#include "isnerf/common.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <array>
#include <numbers>

namespace isnerf {

template <typename Scalar>
struct Pose {
    Mat3<Scalar> rotation = Mat3<Scalar>::Identity();
    Vec3<Scalar> translation = Vec3<Scalar>::Zero();

    static Pose identity() { return Pose{}; }

    Vec3<Scalar> apply(const Vec3<Scalar>& x) const { return rotation * x + translation; }
};

using Posed = Pose<double>;

template <typename Scalar>
struct Twist {
    Vec3<Scalar> omega = Vec3<Scalar>::Zero();
    Vec3<Scalar> v = Vec3<Scalar>::Zero();

    Twist() = default;
    Twist(const Vec3<Scalar>& omega_, const Vec3<Scalar>& v_) : omega(omega_), v(v_) {
        const double norm = std::sqrt(value_of(omega.squaredNorm()));
        if (!std::isfinite(norm) || !std::isfinite(value_of(v.squaredNorm())))
            throw InvalidArgument("twist has non-finite components");
        if (norm >= std::numbers::pi)
            throw InvalidArgument("twist rotation norm must be below pi");
    }

    static Twist from_array(const std::array<double, 6>& xi) {
        return Twist(Vec3<Scalar>(Scalar(xi[0]), Scalar(xi[1]), Scalar(xi[2])),
                     Vec3<Scalar>(Scalar(xi[3]), Scalar(xi[4]), Scalar(xi[5])));
    }
};

using Twistd = Twist<double>;

inline constexpr double kSmallAngle = 1e-8;
inline constexpr double kBranchCutMargin = 1e-6;

template <typename Scalar>
Mat3<Scalar> hat(const Vec3<Scalar>& w) {
    Mat3<Scalar> m;
    m << Scalar(0), -w.z(), w.y(),
         w.z(), Scalar(0), -w.x(),
         -w.y(), w.x(), Scalar(0);
    return m;
}

template <typename Scalar>
Vec3<Scalar> vee(const Mat3<Scalar>& m) {
    return Vec3<Scalar>(m(2, 1), m(0, 2), m(1, 0));
}

// Below this angle the cancellation-prone coefficients switch to series.
inline constexpr double kSeriesAngle = 1e-2;

// (1 - cos t) / t^2 written without cancellation
template <typename Scalar>
Scalar half_angle_coeff(const Scalar& theta) {
    using std::sin;
    const Scalar h = theta * Scalar(0.5);
    const Scalar r = sin(h) / h;
    return Scalar(0.5) * r * r;
}

template <typename Scalar>
Pose<Scalar> se3_exp(const Twist<Scalar>& xi) {
    const Mat3<Scalar> I = Mat3<Scalar>::Identity();
    const Mat3<Scalar> W = hat(xi.omega);
    const Mat3<Scalar> W2 = W * W;
    const Scalar theta2 = xi.omega.squaredNorm();

    Pose<Scalar> out;
    if (std::sqrt(value_of(theta2)) < kSmallAngle) {
        out.rotation = I + W + Scalar(0.5) * W2;
        out.translation = (I + Scalar(0.5) * W + Scalar(1.0 / 6.0) * W2) * xi.v;
        return out;
    }
    using std::cos;
    using std::sin;
    using std::sqrt;
    const Scalar theta = sqrt(theta2);
    const Scalar a = sin(theta) / theta;
    const Scalar b = half_angle_coeff(theta);
    const Scalar c = value_of(theta) < kSeriesAngle
                         ? Scalar(Scalar(1.0 / 6.0) - theta2 / Scalar(120) + theta2 * theta2 / Scalar(5040))
                         : Scalar((theta - sin(theta)) / (theta2 * theta));
    out.rotation = I + a * W + b * W2;
    out.translation = (I + b * W + c * W2) * xi.v;
    return out;
}

template <typename Scalar>
Twist<Scalar> se3_log(const Pose<Scalar>& T) {
    using std::atan2;
    using std::cos;
    using std::sin;
    using std::sqrt;
    const Mat3<Scalar>& R = T.rotation;
    const Scalar cos_theta = (R.trace() - Scalar(1)) * Scalar(0.5);
    const Vec3<Scalar> w = vee<Scalar>(R - R.transpose()) * Scalar(0.5);  // sin(theta) * axis
    const Scalar s2 = w.squaredNorm();
    const double s_val = std::sqrt(value_of(s2));

    const double theta_val = std::atan2(s_val, value_of(cos_theta));
    if (theta_val >= std::numbers::pi - kBranchCutMargin)
        throw AngleAtBranchCut("rotation angle " + std::to_string(theta_val) + " too close to pi");

    const Mat3<Scalar> I = Mat3<Scalar>::Identity();
    Vec3<Scalar> omega;
    Mat3<Scalar> v_inv;
    if (s_val < kSmallAngle) {
        omega = w;
        const Mat3<Scalar> W = hat(omega);
        v_inv = I - Scalar(0.5) * W + Scalar(1.0 / 12.0) * W * W;
    } else {
        const Scalar s = sqrt(s2);
        const Scalar theta = atan2(s, cos_theta);
        omega = w * (theta / s);
        const Mat3<Scalar> W = hat(omega);
        const Scalar theta2 = theta * theta;
        const Scalar a = sin(theta) / theta;
        const Scalar b = half_angle_coeff(theta);
        const Scalar e = value_of(theta) < kSeriesAngle
                             ? Scalar(Scalar(1.0 / 12.0) + theta2 / Scalar(720) + theta2 * theta2 / Scalar(30240))
                             : Scalar((Scalar(1) - a / (Scalar(2) * b)) / theta2);
        v_inv = I - Scalar(0.5) * W + e * W * W;
    }
    Twist<Scalar> xi;
    xi.omega = omega;
    xi.v = v_inv * T.translation;
    return xi;
}

template <typename Scalar>
Pose<Scalar> compose(const Pose<Scalar>& a, const Pose<Scalar>& b) {
    Pose<Scalar> out;
    out.rotation = a.rotation * b.rotation;
    out.translation = a.rotation * b.translation + a.translation;
    return out;
}

template <typename Scalar>
Pose<Scalar> inverse(const Pose<Scalar>& T) {
    Pose<Scalar> out;
    out.rotation = T.rotation.transpose();
    out.translation = -(out.rotation * T.translation);
    return out;
}

template <typename Scalar>
Twist<Scalar> scale(const Twist<Scalar>& xi, const Scalar& f) {
    Twist<Scalar> out;
    out.omega = xi.omega * f;
    out.v = xi.v * f;
    return out;
}

// Geodesic from start (fraction 0) to end (fraction 1).
template <typename Scalar>
Pose<Scalar> interpolate_pose(const Pose<Scalar>& start, const Pose<Scalar>& end, double fraction) {
    if (!(fraction >= 0.0 && fraction <= 1.0))
        throw InvalidArgument("interpolation fraction outside [0, 1]");
    const Twist<Scalar> rel = se3_log(compose(inverse(start), end));
    if (fraction == 0.0) return start;
    return compose(start, se3_exp(scale(rel, Scalar(fraction))));
}

template <typename Scalar>
bool is_valid_pose(const Pose<Scalar>& T, double tol = 1e-9) {
    Eigen::Matrix3d R;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) R(i, j) = value_of(T.rotation(i, j));
    const Eigen::Matrix3d err = R.transpose() * R - Eigen::Matrix3d::Identity();
    return err.cwiseAbs().maxCoeff() <= tol && std::abs(R.determinant() - 1.0) <= tol;
}

// Nearest rotation in the Frobenius sense.
inline Posed reorthonormalize(const Posed& T) {
    Eigen::JacobiSVD<Mat3d> svd(T.rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3d R = svd.matrixU() * svd.matrixV().transpose();
    if (R.determinant() < 0) {
        Mat3d U = svd.matrixU();
        U.col(2) *= -1.0;
        R = U * svd.matrixV().transpose();
    }
    return Posed{R, T.translation};
}

// 4x4 row-major homogeneous matrix, the on-disk pose layout.
inline std::array<double, 16> to_matrix4(const Posed& T) {
    std::array<double, 16> m{};
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) m[r * 4 + c] = T.rotation(r, c);
        m[r * 4 + 3] = T.translation(r);
    }
    m[15] = 1.0;
    return m;
}

inline Posed from_matrix4(const std::array<double, 16>& m) {
    Posed T;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) T.rotation(r, c) = m[r * 4 + c];
        T.translation(r) = m[r * 4 + 3];
    }
    if (!is_valid_pose(T, 1e-6)) throw InvalidArgument("pose matrix is not a rigid transform");
    return T;
}

template <typename To, typename From>
Pose<To> pose_cast(const Pose<From>& T) {
    Pose<To> out;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) out.rotation(i, j) = To(value_of(T.rotation(i, j)));
        out.translation(i) = To(value_of(T.translation(i)));
    }
    return out;
}

}  // namespace isnerf
