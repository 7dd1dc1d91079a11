#include "test_util.hpp"

using namespace isnerf;

namespace {

ImageBuffer random_image(int w, int h, std::uint64_t seed) {
    ImageBuffer img(w, h);
    Rng rng = make_stream(seed, 0);
    for (double& v : img.data) v = uniform01(rng);
    return img;
}

Posed translation(double x, double y, double z) { return {Mat3d::Identity(), Vec3d(x, y, z)}; }

const AnalyticField kSphere{{EmissiveSphere{Vec3d::Zero(), 0.4, 4.0, Vec3d(1.0, 0.8, 0.3)}}};

FieldPair sphere_pair() { return {point_field(kSphere), point_field(kSphere)}; }

double centroid_x(const ImageBuffer& img) {
    double m = 0.0, mx = 0.0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double v = img.at(x, y).sum();
            m += v;
            mx += v * x;
        }
    return mx / m;
}

}  // namespace

TEST(VirtualPoses, SingleVirtualImageIsStart) {
    const ExposureModel em{translation(1, 2, 3), translation(4, 5, 6), 1};
    const std::vector<Posed> p = virtual_poses(em);
    ASSERT_EQ(p.size(), 1u);
    EXPECT_EQ(p[0].translation, Vec3d(1, 2, 3));
}

TEST(VirtualPoses, LinearTranslation) {
    const ExposureModel em{Posed::identity(), translation(1, 0, 0), 2};
    const std::vector<Posed> p = virtual_poses(em);
    ASSERT_EQ(p.size(), 2u);
    EXPECT_LT((p[0].translation - Vec3d::Zero()).norm(), 1e-15);
    EXPECT_LT((p[1].translation - Vec3d(0.5, 0, 0)).norm(), 1e-15);
}

TEST(VirtualPoses, StaticExposure) {
    const Posed T = compose(translation(0.3, -0.2, 1.0), se3_exp(Twistd(Vec3d(0.1, 0.2, -0.3), Vec3d::Zero())));
    for (const Posed& p : virtual_poses(ExposureModel{T, T, 8})) {
        EXPECT_LT((p.rotation - T.rotation).norm(), 1e-12);
        EXPECT_LT((p.translation - T.translation).norm(), 1e-12);
    }
}

TEST(VirtualPoses, InclusiveEndpointReachesEnd) {
    const ExposureModel em{Posed::identity(), translation(1, 0, 0), 5, true};
    const std::vector<Posed> p = virtual_poses(em);
    EXPECT_LT((p.back().translation - Vec3d(1, 0, 0)).norm(), 1e-12);
    EXPECT_DOUBLE_EQ(exposure_fraction(3, 8, false), 3.0 / 8.0);
    EXPECT_DOUBLE_EQ(exposure_fraction(7, 8, true), 1.0);
    EXPECT_THROW(virtual_poses(ExposureModel{Posed::identity(), Posed::identity(), 0}), InvalidArgument);
}

TEST(VirtualPoses, BranchCutPropagates) {
    Posed flipped = Posed::identity();
    flipped.rotation = Vec3d(-1, -1, 1).asDiagonal();
    EXPECT_THROW(virtual_poses(ExposureModel{Posed::identity(), flipped, 4}), AngleAtBranchCut);
}

TEST(SynthesizeBlur, IdenticalStack) {
    const ImageBuffer img = random_image(8, 6, 1);
    EXPECT_EQ(synthesize_blur(std::vector<ImageBuffer>(7, img)).data, img.data);
}

TEST(SynthesizeBlur, BlackAndWhite) {
    const ImageBuffer out = synthesize_blur({ImageBuffer(4, 4, 0.0), ImageBuffer(4, 4, 1.0)});
    for (double v : out.data) EXPECT_EQ(v, 0.5);
}

TEST(SynthesizeBlur, MatchesScalarMean) {
    const std::vector<ImageBuffer> stack{random_image(9, 7, 1), random_image(9, 7, 2), random_image(9, 7, 3)};
    const ImageBuffer out = synthesize_blur(stack);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        EXPECT_NEAR(out.data[i], (stack[0].data[i] + stack[1].data[i] + stack[2].data[i]) / 3.0, 1e-12);
}

TEST(SynthesizeBlur, Errors) {
    EXPECT_THROW(synthesize_blur({ImageBuffer(4, 4), ImageBuffer(4, 5)}), DimensionMismatch);
    EXPECT_THROW(synthesize_blur(std::vector<ImageBuffer>{}), InvalidArgument);
}

TEST(SynthesizeBlur, RangeContainmentAndLinearity) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::vector<ImageBuffer> stack;
        for (int k = 0; k < 5; ++k) stack.push_back(random_image(6, 6, seed * 10 + std::uint64_t(k)));
        const ImageBuffer out = synthesize_blur(stack);
        std::vector<ImageBuffer> scaled = stack;
        const double alpha = 0.37;
        for (auto& img : scaled)
            for (double& v : img.data) v *= alpha;
        const ImageBuffer out_scaled = synthesize_blur(scaled);
        for (std::size_t i = 0; i < out.data.size(); ++i) {
            double lo = 1.0, hi = 0.0;
            for (const auto& img : stack) {
                lo = std::min(lo, img.data[i]);
                hi = std::max(hi, img.data[i]);
            }
            EXPECT_GE(out.data[i], lo);
            EXPECT_LE(out.data[i], hi);
            EXPECT_NEAR(out_scaled.data[i], alpha * out.data[i], 1e-15);
        }
    }
}

TEST(RenderBlurred, StaticCameraEqualsSharp) {
    const Posed T = translation(0.05, 0, -3);
    const Intrinsics k{14, 14, 6, 6, 12, 12};
    RenderConfig cfg;
    cfg.scattering_enabled = false;
    const ImageBuffer sharp = render_image(T, k, sphere_pair(), nullptr, cfg, 3);
    EXPECT_EQ(render_blurred(ExposureModel{T, T, 6}, k, sphere_pair(), nullptr, cfg, 3).data, sharp.data);
    EXPECT_EQ(render_blurred(ExposureModel{T, translation(1, 0, -3), 1}, k, sphere_pair(), nullptr, cfg, 3).data,
              sharp.data);
}

TEST(RenderBlurred, CentroidBetweenEndpoints) {
    const Posed a = translation(-0.3, 0, -3), b = translation(0.3, 0, -3);
    const Intrinsics k{20, 20, 12, 12, 24, 24};
    RenderConfig cfg;
    cfg.scattering_enabled = false;
    const double ca = centroid_x(render_image(a, k, sphere_pair(), nullptr, cfg, 1));
    const double cb = centroid_x(render_image(b, k, sphere_pair(), nullptr, cfg, 1));
    const double cm = centroid_x(render_blurred(ExposureModel{a, b, 6}, k, sphere_pair(), nullptr, cfg, 1));
    EXPECT_GT(cm, std::min(ca, cb));
    EXPECT_LT(cm, std::max(ca, cb));
}

TEST(RenderBlurred, NetworkStaticCameraEqualsSharp) {
    RenderModel<float> m{init_field_params<float>(testutil::small_field(), 1),
                         init_field_params<float>(testutil::small_field(), 2),
                         init_islm_params<float>(testutil::small_islm(), 3)};
    const Posed T = translation(0.05, 0, -3);
    const Intrinsics k{10, 10, 4, 4, 8, 8};
    const RenderConfig cfg;
    EXPECT_EQ(render_blurred<float>(ExposureModel{T, T, 4}, k, m.refs(), cfg, 2).data,
              render_image<float>(T, k, m.refs(), cfg, 2).data);
}
