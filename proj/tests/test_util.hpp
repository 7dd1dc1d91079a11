#pragma once

#include "isnerf/optimizer.hpp"

#include <gtest/gtest.h>

#include <unistd.h>

namespace testutil {

inline isnerf::FieldShape small_field() { return {2, 16, 8, 3, 2}; }
inline isnerf::IslmShape small_islm(int heads = 1) { return {2, 16, 3, 2, heads}; }

inline double relerr(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

inline isnerf::Batch<double> random_batch(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
    isnerf::Rng rng = isnerf::make_stream(seed, 0);
    std::uniform_real_distribution<double> u(-scale, scale);
    isnerf::Batch<double> b(rows, cols);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = u(rng);
    return b;
}

inline isnerf::Batch<double> random_unit_dirs(Eigen::Index cols, std::uint64_t seed) {
    isnerf::Batch<double> b = random_batch(3, cols, seed);
    for (Eigen::Index i = 0; i < cols; ++i) b.col(i).normalize();
    return b;
}

inline isnerf::Vec3d random_unit(isnerf::Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    return isnerf::Vec3d(n(rng), n(rng), n(rng)).normalized();
}

}  // namespace testutil

#include <filesystem>

namespace testutil {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("isnerf_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace testutil
