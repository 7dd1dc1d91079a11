#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace isnerf {

template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;

using Vec3d = Vec3<double>;
using Mat3d = Mat3<double>;

// Every failure the library reports derives from Error so callers (the CLI in
// particular) can catch one type and exit nonzero with the message.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define ISNERF_DEFINE_ERROR(Name)                                   \
    class Name : public Error {                                     \
    public:                                                         \
        explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
    }

ISNERF_DEFINE_ERROR(AngleAtBranchCut);
ISNERF_DEFINE_ERROR(InvalidArgument);
ISNERF_DEFINE_ERROR(ShapeMismatch);
ISNERF_DEFINE_ERROR(LengthMismatch);
ISNERF_DEFINE_ERROR(DimensionMismatch);
ISNERF_DEFINE_ERROR(TooFewSamples);
ISNERF_DEFINE_ERROR(NonFiniteGradient);
ISNERF_DEFINE_ERROR(IoError);
ISNERF_DEFINE_ERROR(ConfigError);

#undef ISNERF_DEFINE_ERROR

// Plain value of a scalar that may carry derivatives (Eigen::AutoDiffScalar).
inline double value_of(double x) { return x; }
inline double value_of(float x) { return x; }
template <typename T>
auto value_of(const T& x) -> decltype(x.value(), double()) {
    return value_of(x.value());
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

using Rng = std::mt19937_64;

// Independent stream for (seed, index); keeps results independent of the
// order in which rays or poses are processed.
inline Rng make_stream(std::uint64_t seed, std::uint64_t index) {
    return Rng(splitmix64(splitmix64(seed) ^ (index * 0xd1b54a32d192ed03ull)));
}

inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
    return Scalar(1) / (Scalar(1) + std::exp(-x));
}

template <typename Scalar>
Scalar softplus(Scalar x) {
    // log(1 + e^x) without overflow for large x
    return x > Scalar(20) ? x : std::log1p(std::exp(x));
}

}  // namespace isnerf
