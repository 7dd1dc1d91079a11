#include "test_util.hpp"

using namespace isnerf;

namespace {

const AnalyticField kEmpty{};

FieldPair analytic_pair(const AnalyticField& f) { return {point_field(f), point_field(f)}; }

double box_opacity(int samples) {
    const AnalyticField box{{ConstantBox{1.5, Vec3d::Ones(), Aabb{Vec3d(-1, -1, 0), Vec3d(1, 1, 1)}}}};
    const Ray ray(Vec3d::Zero(), Vec3d::UnitZ(), 0.0, 1.0);
    RenderConfig cfg;
    return render_primary(ray, point_field(box), stratified_samples(ray, samples, [] { return 0.5; }), cfg).x();
}

// zero network except the output bias, which fixes (d_s, l) everywhere
IslmParams<double> constant_islm(const Vec3d& dir, double raw_interval) {
    IslmParams<double> p = zero_islm_params<double>(testutil::small_islm());
    const IslmLayout layout(p.shape);
    const std::size_t bias = layout.out.offset + std::size_t(layout.out.out) * std::size_t(layout.out.in);
    p.values[bias] = dir.x();
    p.values[bias + 1] = dir.y();
    p.values[bias + 2] = dir.z();
    p.values[bias + 3] = raw_interval;
    return p;
}

}  // namespace

TEST(Transmittance, Vacuum) {
    const std::vector<double> T = transmittance_prefix(std::vector<double>(5, 0.0), std::vector<double>(5, 0.3));
    for (double t : T) EXPECT_EQ(t, 1.0);
}

TEST(Transmittance, ScalarOracle) {
    const std::vector<double> T = transmittance_prefix({2.0, 2.0}, {0.5, 0.5});
    ASSERT_EQ(T.size(), 2u);
    EXPECT_EQ(T[0], 1.0);
    EXPECT_NEAR(T[1], std::exp(-1.0), 1e-15);
}

TEST(Transmittance, EmptyAndMismatch) {
    EXPECT_TRUE(transmittance_prefix({}, {}).empty());
    EXPECT_THROW(transmittance_prefix({1.0}, {1.0, 2.0}), LengthMismatch);
}

TEST(Transmittance, NonIncreasingInUnitInterval) {
    Rng rng = make_stream(1, 0);
    std::vector<double> s(40), d(40);
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] = 5.0 * uniform01(rng);
        d[i] = 0.1 * uniform01(rng);
    }
    const std::vector<double> T = transmittance_prefix(s, d);
    for (std::size_t i = 0; i < T.size(); ++i) {
        EXPECT_GT(T[i], 0.0);
        EXPECT_LE(T[i], 1.0);
        if (i) EXPECT_LE(T[i], T[i - 1]);
    }
}

TEST(RenderPrimary, ZeroDensityBlackBackground) {
    const Ray ray(Vec3d::Zero(), Vec3d::UnitZ(), 0.0, 1.0);
    Rng rng = make_stream(0, 0);
    EXPECT_EQ(render_primary(ray, point_field(kEmpty), stratified_samples(ray, 16, rng), RenderConfig{}), Vec3d::Zero());
}

TEST(RenderPrimary, OpaqueLimit) {
    const Vec3d color(0.2, 0.7, 0.4);
    const AnalyticField f{{ConstantBox{50.0, color, Aabb{}}}};
    const Ray ray(Vec3d::Zero(), Vec3d::UnitZ(), 0.0, 1.0);
    RenderConfig cfg;
    cfg.background = Vec3d::Ones();
    const Vec3d c = render_primary(ray, point_field(f), std::vector<double>{0.0}, cfg);
    EXPECT_LT((c - color).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(RenderPrimary, QuadratureMatchesClosedForm) {
    const double exact = 1.0 - std::exp(-1.5);
    EXPECT_NEAR(box_opacity(256), exact, 1e-3);
    const double e64 = std::abs(box_opacity(64) - exact);
    const double e128 = std::abs(box_opacity(128) - exact);
    const double e256 = std::abs(box_opacity(256) - exact);
    EXPECT_GE(e64 / e128, 1.5);
    EXPECT_LE(e64 / e128, 2.5);
    EXPECT_GE(e128 / e256, 1.5);
    EXPECT_LE(e128 / e256, 2.5);
}

TEST(Composite, BackwardMatchesFiniteDifferences) {
    Rng rng = make_stream(5, 0);
    const std::size_t n = 12;
    std::vector<double> s(n), d(n), c(3 * n), dT(n);
    for (std::size_t i = 0; i < n; ++i) {
        s[i] = 3.0 * uniform01(rng);
        d[i] = 0.2 * uniform01(rng);
        dT[i] = uniform01(rng) - 0.5;
    }
    for (double& x : c) x = uniform01(rng);
    const Vec3d bg(0.3, 0.1, 0.9), g(0.7, -0.4, 1.1);
    auto objective = [&](const std::vector<double>& ss, const std::vector<double>& cc) {
        std::vector<double> T(n), w(n);
        const auto r = composite<double>(ss, d, cc, bg, T, w);
        double v = g.dot(r.color);
        for (std::size_t i = 0; i < n; ++i) v += dT[i] * T[i];
        return v;
    };
    std::vector<double> T(n), w(n), ds(n), dc(3 * n);
    const auto r = composite<double>(s, d, c, bg, T, w);
    composite_backward<double>(s, d, c, bg, T, w, r.final_transmittance, g, dT, ds, dc);
    for (std::size_t i = 0; i < n; ++i) {
        auto sp = s, sm = s;
        sp[i] += 1e-6;
        sm[i] -= 1e-6;
        EXPECT_LT(testutil::relerr(ds[i], (objective(sp, c) - objective(sm, c)) / 2e-6), 1e-6) << i;
    }
    for (std::size_t i = 0; i < 3 * n; ++i) {
        auto cp = c, cm = c;
        cp[i] += 1e-6;
        cm[i] -= 1e-6;
        EXPECT_LT(testutil::relerr(dc[i], (objective(s, cp) - objective(s, cm)) / 2e-6), 1e-6) << i;
    }
}

TEST(ScatterAware, PathsInVacuumAddNothing) {
    const AnalyticField f{{ConstantBox{2.0, Vec3d(0.3, 0.6, 0.9), Aabb{Vec3d(-0.3, -0.3, -0.3), Vec3d(0.3, 0.3, 0.3)}}}};
    // paths escape sideways out of the box, into empty space
    const IslmParams<double> islm = constant_islm(Vec3d::UnitX(), 10.0);
    RenderConfig cfg;
    cfg.scatter.interval = {0.5, 1.0};
    cfg.scatter.samples_per_path = 4;
    const Ray ray(Vec3d(0, 0, -3), Vec3d::UnitZ(), 2.0, 4.0);
    Rng a = make_stream(1, 0);
    const ScatterRender r = render_scatter_aware_detailed(ray, analytic_pair(f), &islm, cfg, a);
    ASSERT_EQ(r.paths.size(), 5u);
    for (const auto& p : r.paths)
        for (const auto& x : p.points) ASSERT_EQ(eval_analytic(f, x, Vec3d::UnitX()).sigma, 0.0);
    EXPECT_EQ(r.color, r.primary);
}

TEST(ScatterAware, DisabledIsPrimary) {
    const AnalyticField f{{EmissiveSphere{Vec3d::Zero(), 0.5, 3.0, Vec3d(1, 0.5, 0)}}};
    const IslmParams<double> islm = init_islm_params<double>(testutil::small_islm(), 3);
    RenderConfig cfg;
    cfg.scattering_enabled = false;
    const Ray ray(Vec3d(0.1, 0, -3), Vec3d::UnitZ(), 2.0, 4.0);
    Rng a = make_stream(1, 0), b = make_stream(1, 0);
    EXPECT_EQ(render_scatter_aware(ray, analytic_pair(f), &islm, cfg, a), render_classic(ray, analytic_pair(f), cfg, b));
}

TEST(ScatterAware, SingleTermHandEvaluation) {
    // K = 1, N_t = 1: the one path sample sits at x_t + l d_s with sigma l = 50
    const double l = 0.01 + (0.5 - 0.01) * 0.5;
    const AnalyticField f{{ConstantBox{50.0 / l, Vec3d(1, 0, 0), Aabb{Vec3d(l - 0.01, -0.01, -1), Vec3d(l + 0.01, 0.01, 1)}}}};
    const IslmParams<double> islm = constant_islm(Vec3d::UnitX(), 0.0);
    RenderConfig cfg;
    cfg.background = Vec3d(0.1, 0.2, 0.3);
    cfg.scatter.paths = 1;
    cfg.scatter.samples_per_path = 1;
    const Ray ray(Vec3d(0, 0, -3), Vec3d::UnitZ(), 2.0, 4.0);
    Rng rng = make_stream(2, 0);
    const ScatterRender r = render_scatter_aware_detailed(ray, analytic_pair(f), &islm, cfg, rng);
    EXPECT_EQ(r.primary, cfg.background);
    const Vec3d expected = r.primary + Vec3d(1, 0, 0) * (1.0 - std::exp(-50.0));
    EXPECT_LT((r.color - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ScatterAware, ScatterTermIsNonNegative) {
    const AnalyticField f{{EmissiveSphere{Vec3d(0, 0, 0), 0.4, 4.0, Vec3d(0.9, 0.2, 0.5)},
                           ConstantBox{1.0, Vec3d(0.1, 0.8, 0.3), Aabb{Vec3d(-1, -1, -1), Vec3d(1, -0.6, 1)}}}};
    Rng rng = make_stream(8, 0);
    for (int i = 0; i < 100; ++i) {
        const IslmParams<double> islm = init_islm_params<double>(testutil::small_islm(), std::uint64_t(i));
        RenderConfig cfg;
        cfg.background = Vec3d(0.5, 0.5, 0.5);
        const Vec3d o = testutil::random_unit(rng) * 3.0;
        const Vec3d d = (testutil::random_unit(rng) * 0.3 - o.normalized()).normalized();
        const auto span = intersect_aabb(o, d, cfg.scene_box);
        if (!span) continue;
        const ScatterRender r = render_scatter_aware_detailed(Ray(o, d, span->first, span->second), analytic_pair(f),
                                                              &islm, cfg, rng);
        EXPECT_TRUE(((r.color - r.primary).array() >= 0.0).all());
        EXPECT_TRUE(r.color.allFinite());
    }
}

TEST(RenderImage, EmptySceneIsBackground) {
    RenderConfig cfg;
    cfg.background = Vec3d::Constant(0.5);
    cfg.scattering_enabled = false;
    const Intrinsics k{20, 20, 8, 8, 16, 16};
    Posed pose = Posed::identity();
    pose.translation = Vec3d(0, 0, -3);
    const ImageBuffer img = render_image(pose, k, analytic_pair(kEmpty), nullptr, cfg, 0);
    for (double v : img.data) EXPECT_EQ(v, 0.5);
}

TEST(RenderImage, CenteredSphereBrightestAtPrincipalPoint) {
    const AnalyticField f{{EmissiveSphere{Vec3d::Zero(), 0.5, 0.5, Vec3d::Ones()}}};
    RenderConfig cfg;
    cfg.scattering_enabled = false;
    cfg.coarse_samples = 512;
    cfg.fine_samples = 1;
    const Intrinsics k{33, 33, 16.5, 16.5, 33, 33};
    Posed pose = Posed::identity();
    pose.translation = Vec3d(0, 0, -3);
    const ImageBuffer img = render_image(pose, k, analytic_pair(f), nullptr, cfg, 4);
    std::size_t best = 0;
    for (std::size_t p = 0; p < img.pixel_count(); ++p)
        if (img.pixel(p).x() > img.pixel(best).x()) best = p;
    EXPECT_EQ(best % 33, 16u);
    EXPECT_EQ(best / 33, 16u);
}

TEST(RenderImage, SameSeedBitIdentical) {
    const AnalyticField f{{EmissiveSphere{Vec3d::Zero(), 0.5, 3.0, Vec3d(1, 0.4, 0.2)}}};
    const IslmParams<double> islm = init_islm_params<double>(testutil::small_islm(), 1);
    const Intrinsics k{12, 12, 6, 6, 12, 12};
    Posed pose = Posed::identity();
    pose.translation = Vec3d(0, 0, -3);
    const RenderConfig cfg;
    EXPECT_EQ(render_image(pose, k, analytic_pair(f), &islm, cfg, 9).data,
              render_image(pose, k, analytic_pair(f), &islm, cfg, 9).data);
}

// ---------------------------------------------------------------------------
// Batched engine

namespace {

struct NetScene {
    RenderModel<double> model;
    Posed pose = Posed::identity();
    Intrinsics k{9, 9, 4, 4, 8, 8};

    explicit NetScene(int heads = 1) {
        model.coarse = init_field_params<double>(testutil::small_field(), 1);
        model.fine = init_field_params<double>(testutil::small_field(), 2);
        model.islm = init_islm_params<double>(testutil::small_islm(heads), 3);
        pose = compose(Posed{Mat3d::Identity(), Vec3d(0.1, -0.2, -2.8)}, se3_exp(Twistd(Vec3d(0.05, -0.1, 0.02), Vec3d::Zero())));
    }

    FieldPair pair(const Aabb& box) const { return {point_field(model.coarse, box), point_field(model.fine, box)}; }
};

}  // namespace

class EngineMatchesSingleRay : public ::testing::TestWithParam<std::tuple<ScatterMode, bool, bool>> {};

TEST_P(EngineMatchesSingleRay, Image) {
    const auto [mode, weighted, scatter] = GetParam();
    const NetScene s(5);
    RenderConfig cfg;
    cfg.coarse_samples = 16;
    cfg.fine_samples = 16;
    cfg.scatter.mode = mode;
    cfg.weighted_scatter = weighted;
    cfg.scattering_enabled = scatter;
    cfg.background = Vec3d(0.2, 0.3, 0.4);
    cfg.scene_box = Aabb{Vec3d(-1.2, -1, -1), Vec3d(1, 1.1, 0.9)};
    const ImageBuffer batched = render_image<double>(s.pose, s.k, s.model.refs(), cfg, 5, 7);
    const ImageBuffer single = render_image(s.pose, s.k, s.pair(cfg.scene_box), &s.model.islm, cfg, 5);
    for (std::size_t i = 0; i < batched.data.size(); ++i) EXPECT_NEAR(batched.data[i], single.data[i], 1e-12);
}

INSTANTIATE_TEST_SUITE_P(Modes, EngineMatchesSingleRay,
                         ::testing::Combine(::testing::Values(ScatterMode::adjacent, ScatterMode::single_point),
                                            ::testing::Bool(), ::testing::Bool()));

TEST(Engine, FloatTracksDouble) {
    const NetScene s;
    RenderConfig cfg;
    cfg.coarse_samples = 16;
    cfg.fine_samples = 16;
    RenderModel<float> mf{params_cast<FieldShape, float>(s.model.coarse), params_cast<FieldShape, float>(s.model.fine),
                          params_cast<IslmShape, float>(s.model.islm)};
    const ImageBuffer a = render_image<double>(s.pose, s.k, s.model.refs(), cfg, 5);
    const ImageBuffer b = render_image<float>(s.pose, s.k, mf.refs(), cfg, 5);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    EXPECT_LT(worst, 1e-3);
}

class EngineBackward : public ::testing::TestWithParam<std::tuple<ScatterMode, bool>> {};

TEST_P(EngineBackward, MatchesFiniteDifferences) {
    const auto [mode, weighted] = GetParam();
    NetScene s(5);
    RenderConfig cfg;
    cfg.coarse_samples = 8;
    cfg.fine_samples = 8;
    cfg.scatter.paths = 3;
    cfg.scatter.samples_per_path = 4;
    cfg.scatter.mode = mode;
    cfg.weighted_scatter = weighted;
    cfg.background = Vec3d(0.2, 0.3, 0.4);

    const Eigen::Index R = 6;
    Batch<double> o(3, R), d(3, R);
    for (Eigen::Index r = 0; r < R; ++r) {
        const CameraRay cr = camera_ray(s.pose, s.k, int(r), int(2 * r % 8), cfg.scene_box);
        o.col(r) = cr.origin;
        d.col(r) = cr.direction;
    }
    const Batch<double> wc = testutil::random_batch(3, R, 41), wf = testutil::random_batch(3, R, 42);

    std::vector<RayPlan> plans;
    auto loss = [&](const RenderModel<double>& m, const Batch<double>& oo, const Batch<double>& dd, bool make) {
        BatchRenderer<double> br(m.refs(), cfg);
        br.forward(oo, dd, plans, make, 11);
        return br.coarse_color().cwiseProduct(wc).sum() + br.color().cwiseProduct(wf).sum();
    };
    loss(s.model, o, d, true);

    BatchRenderer<double> br(s.model.refs(), cfg);
    br.forward(o, d, plans, false, 11);
    std::vector<double> gc(s.model.coarse.size(), 0.0), gf(s.model.fine.size(), 0.0), gi(s.model.islm.size(), 0.0);
    Batch<double> d_o, d_d;
    br.backward(wc, wf, {gc, gf, gi}, &d_o, &d_d);

    const double eps = 1e-6;
    int checked = 0, good = 0;
    auto check = [&](double analytic, double fd) {
        if (std::max(std::abs(analytic), std::abs(fd)) < 1e-8) return;
        ++checked;
        good += testutil::relerr(analytic, fd) < 1e-5;
    };
    auto sweep = [&](std::vector<double>& values, const std::vector<double>& grad, std::size_t stride) {
        for (std::size_t i = 0; i < values.size(); i += stride) {
            const double v0 = values[i];
            values[i] = v0 + eps;
            const double lp = loss(s.model, o, d, false);
            values[i] = v0 - eps;
            const double lm = loss(s.model, o, d, false);
            values[i] = v0;
            check(grad[i], (lp - lm) / (2 * eps));
        }
    };
    sweep(s.model.coarse.values, gc, 3);
    sweep(s.model.fine.values, gf, 3);
    sweep(s.model.islm.values, gi, 3);
    for (Eigen::Index i = 0; i < o.size(); ++i) {
        Batch<double> op = o, om = o, dp = d, dm = d;
        op.data()[i] += eps;
        om.data()[i] -= eps;
        dp.data()[i] += eps;
        dm.data()[i] -= eps;
        check(d_o.data()[i], (loss(s.model, op, d, false) - loss(s.model, om, d, false)) / (2 * eps));
        check(d_d.data()[i], (loss(s.model, o, dp, false) - loss(s.model, o, dm, false)) / (2 * eps));
    }
    EXPECT_GT(checked, 100);
    EXPECT_GE(good, checked * 98 / 100) << good << " of " << checked;
}

INSTANTIATE_TEST_SUITE_P(Modes, EngineBackward,
                         ::testing::Combine(::testing::Values(ScatterMode::adjacent, ScatterMode::single_point),
                                            ::testing::Bool()));
