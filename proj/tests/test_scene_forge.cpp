#include "isnerf/dataset_io.hpp"
#include "isnerf/scene_forge.hpp"
#include "test_util.hpp"

#include <fstream>
#include <iterator>

using namespace isnerf;
using testutil::TempDir;

namespace {

SyntheticScene sphere_over_mirror(double reflectance, int samples) {
    SyntheticScene s;
    s.bounds = Aabb{Vec3d::Constant(-2.0), Vec3d::Constant(2.0)};
    s.background = Vec3d(0.1, 0.2, 0.3);
    s.primitives.push_back(EmissiveSphere{Vec3d(0.2, 0.9, 0.3), 0.5, 2.0, Vec3d(0.9, 0.5, 0.1)});
    s.mirror = MirrorPlane{Vec3d::Zero(), Vec3d::UnitY(), reflectance};
    s.quadrature_samples = samples;
    return s;
}

// Camera above the plane looking down at it.
Posed overhead_camera() { return look_at(Vec3d(0.0, 1.6, -1.9), Vec3d(0.1, 0.0, 0.6)); }

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(TraceGroundTruth, NoMirrorMatchesDenseQuadrature) {
    SyntheticScene s = sphere_over_mirror(1.0, 512);
    s.mirror.reset();
    Rng rng = make_stream(3, 0);
    for (int i = 0; i < 50; ++i) {
        const Vec3d o(0.0, 0.5, -1.9);
        const Vec3d d = (Vec3d(0.0, 0.4, 0.0) + 0.8 * testutil::random_unit(rng) - o).normalized();
        const auto span = intersect_aabb(o, d, s.bounds);
        ASSERT_TRUE(span);
        RenderConfig cfg;
        cfg.background = s.background;
        const Vec3d want = render_primary(Ray(o, d, span->first, span->second), point_field(s.field()),
                                          quadrature_points(span->first, span->second, 512), cfg);
        EXPECT_EQ(trace_ground_truth(s, o, d), want);
    }
}

TEST(TraceGroundTruth, MissedBoxGivesBackground) {
    const SyntheticScene s = sphere_over_mirror(1.0, 64);
    EXPECT_EQ(trace_ground_truth(s, Vec3d(0, 0, -5), Vec3d(0, 1, 0)), s.background);
}

// A perfect mirror shows the direct image of the mirrored geometry.
TEST(TraceGroundTruth, ReflectionMatchesMirroredScene) {
    const SyntheticScene a = sphere_over_mirror(1.0, 20000);
    SyntheticScene b = a;
    b.mirror.reset();
    b.primitives.push_back(EmissiveSphere{Vec3d(0.2, -0.9, 0.3), 0.5, 2.0, Vec3d(0.9, 0.5, 0.1)});
    const Intrinsics k{8, 8, 4, 4, 8, 8};
    const Posed cam = overhead_camera();
    int sphere_pixels = 0;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            const Vec3d d = (cam.rotation * camera_direction(k, x, y)).normalized();
            const Vec3d ca = trace_ground_truth(a, cam.translation, d);
            const Vec3d cb = trace_ground_truth(b, cam.translation, d);
            EXPECT_LT((ca - cb).cwiseAbs().maxCoeff(), 1e-3) << x << "," << y;
            if ((ca - a.background).norm() > 0.1) ++sphere_pixels;
        }
    EXPECT_GT(sphere_pixels, 4);  // the reflection is actually in view
}

TEST(TraceGroundTruth, ZeroReflectanceHidesMirror) {
    const SyntheticScene a = sphere_over_mirror(0.0, 20000);
    SyntheticScene b = a;
    b.mirror.reset();
    const Intrinsics k{8, 8, 4, 4, 8, 8};
    const Posed cam = overhead_camera();
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            const Vec3d d = (cam.rotation * camera_direction(k, x, y)).normalized();
            EXPECT_LT((trace_ground_truth(a, cam.translation, d) - trace_ground_truth(b, cam.translation, d))
                          .cwiseAbs()
                          .maxCoeff(),
                      1e-3);
        }
}

TEST(TraceGroundTruth, PartialMirrorBlendsReflectionAndTransmission) {
    const SyntheticScene half = sphere_over_mirror(0.5, 4000);
    const SyntheticScene full = sphere_over_mirror(1.0, 4000);
    const SyntheticScene none = sphere_over_mirror(0.0, 4000);
    const Posed cam = overhead_camera();
    const Vec3d d = (cam.rotation * camera_direction(Intrinsics{8, 8, 4, 4, 8, 8}, 4, 4)).normalized();
    const Vec3d blend =
        0.5 * trace_ground_truth(full, cam.translation, d) + 0.5 * trace_ground_truth(none, cam.translation, d);
    EXPECT_LT((trace_ground_truth(half, cam.translation, d) - blend).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SyntheticScene, Validation) {
    SyntheticScene s = desk_scene();
    s.mirror->normal = Vec3d(0, 2, 0);
    EXPECT_THROW(s.validate(), InvalidArgument);
    s = desk_scene();
    s.mirror->reflectance = 1.5;
    EXPECT_THROW(s.validate(), InvalidArgument);
    s = desk_scene();
    s.rod = 99;
    EXPECT_THROW(s.validate(), InvalidArgument);
}

TEST(SyntheticScene, JsonRoundTrip) {
    const SyntheticScene s = desk_scene();
    const nlohmann::json j = scene_to_json(s);
    EXPECT_EQ(scene_to_json(scene_from_json(j)), j);
    nlohmann::json bad = j;
    bad["primitives"][0]["kind"] = "torus";
    EXPECT_THROW(scene_from_json(bad), ConfigError);
}

TEST(Trajectory, LookAtFacesTarget) {
    const Vec3d eye(1.0, 2.0, -3.0), target(0.2, -0.1, 0.4);
    const Posed T = look_at(eye, target);
    EXPECT_TRUE(is_valid_pose(T, 1e-12));
    const Vec3d local = T.rotation.transpose() * (target - eye);
    EXPECT_NEAR(local.x(), 0.0, 1e-12);
    EXPECT_NEAR(local.y(), 0.0, 1e-12);
    EXPECT_GT(local.z(), 0.0);
    // world up maps to camera -y
    EXPECT_LT((T.rotation.transpose() * Vec3d::UnitY()).y(), 0.0);
}

TEST(Trajectory, RingIsSeededAndStaticSpecIsStatic) {
    TrajectorySpec spec;
    spec.views = 4;
    spec.seed = 2;
    const auto a = ring_trajectories(spec), b = ring_trajectories(spec);
    ASSERT_EQ(a.size(), 4u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(to_matrix4(a[i].end), to_matrix4(b[i].end));
        EXPECT_NEAR((a[i].start.translation).norm(), spec.radius, 1e-12);
    }
    spec.blur_rotation = spec.blur_translation = 0.0;
    for (const auto& em : ring_trajectories(spec)) EXPECT_EQ(to_matrix4(em.start), to_matrix4(em.end));
}

TEST(DeskScene, MasksCoverMirrorAndThinRod) {
    const SyntheticScene s = desk_scene();
    TrajectorySpec spec;
    const auto em = ring_trajectories(spec).front();
    const Intrinsics k = spec.intrinsics();
    const PixelMask mirror = mirror_mask(s, em.start, k);
    const PixelMask rod = rod_mask(s, em.start, k);
    EXPECT_GT(mirror.count(), 200u);
    EXPECT_GT(rod.count(), 10u);
    // roughly two pixels across
    for (int y = 0; y < k.height; ++y) {
        int row = 0;
        for (int x = 0; x < k.width; ++x) row += rod.bits[std::size_t(y) * k.width + x];
        EXPECT_LE(row, 4) << "row " << y;
    }
}

TEST(GenerateDataset, BlurredIsMeanOfSharpRenders) {
    SyntheticScene s = desk_scene();
    s.quadrature_samples = 128;
    TrajectorySpec spec;
    spec.width = spec.height = 8;
    spec.views = 1;
    spec.n = 3;
    const ExposureModel em = ring_trajectories(spec).front();
    const ImageBuffer blurred = render_ground_truth_blurred(s, em, spec.intrinsics());
    const auto poses = virtual_poses(em);
    for (std::size_t i = 0; i < blurred.data.size(); ++i) {
        double mean = 0.0;
        for (const auto& p : poses) mean += render_ground_truth(s, p, spec.intrinsics()).data[i];
        EXPECT_NEAR(blurred.data[i], mean / double(poses.size()), 1e-12);
    }
}

TEST(GenerateDataset, FileCountsAndDeterminism) {
    TempDir a("gen_a"), b("gen_b");
    SyntheticScene s = desk_scene();
    s.quadrature_samples = 128;
    TrajectorySpec spec;
    spec.views = 2;
    spec.width = spec.height = 16;
    spec.n = 4;
    spec.seed = 11;
    generate_dataset(s, spec, a.path());
    generate_dataset(s, spec, b.path());
    auto count = [](const std::filesystem::path& dir) {
        return std::distance(std::filesystem::directory_iterator(dir), std::filesystem::directory_iterator());
    };
    EXPECT_EQ(count(a.path() / "train"), 2);
    EXPECT_EQ(count(a.path() / "sharp"), 2);
    EXPECT_TRUE(std::filesystem::exists(a.path() / "poses.json"));
    EXPECT_TRUE(std::filesystem::exists(a.path() / "scene.json"));
    for (const auto& e : std::filesystem::recursive_directory_iterator(a.path())) {
        if (!e.is_regular_file()) continue;
        const auto rel = std::filesystem::relative(e.path(), a.path());
        EXPECT_EQ(slurp(e.path()), slurp(b.path() / rel)) << rel;
    }

    const Dataset d = load_dataset(a.path());
    ASSERT_EQ(d.views.size(), 2u);
    ASSERT_EQ(d.holdout.size(), 2u);
    EXPECT_EQ(d.views[0].n, 4);
    EXPECT_EQ(d.views[0].blurred.width, 16);
    EXPECT_EQ(d.holdout[1].mirror_mask.width, 16);
    EXPECT_EQ(d.scene_box.lo, s.bounds.lo);
    const auto traj = ring_trajectories(spec);
    EXPECT_LT((d.views[1].end.translation - traj[1].end.translation).norm(), 1e-12);
}

TEST(GenerateDataset, StaticTrajectoryBlurEqualsSharp) {
    TempDir dir("static");
    SyntheticScene s = desk_scene();
    s.quadrature_samples = 128;
    TrajectorySpec spec;
    spec.views = 1;
    spec.width = spec.height = 12;
    spec.blur_rotation = spec.blur_translation = 0.0;
    generate_dataset(s, spec, dir.path());
    EXPECT_EQ(read_png(dir.path() / "train/000.png").data, read_png(dir.path() / "sharp/000.png").data);
    const ExposureModel em = ring_trajectories(spec).front();
    const ImageBuffer blurred = render_ground_truth_blurred(s, em, spec.intrinsics());
    EXPECT_EQ(blurred.data, render_ground_truth(s, em.start, spec.intrinsics()).data);
}
