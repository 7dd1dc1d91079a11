#pragma once

// Procedural ground truth: analytic primitives plus an optional
// semi-transparent mirror plane, traced with dense quadrature and one
// specular bounce, and the dataset writer built on it.

#include "isnerf/dataset.hpp"
#include "isnerf/png_io.hpp"
#include "isnerf/serialize.hpp"

#include <Eigen/Geometry>

#include <cstdio>
#include <filesystem>

namespace isnerf {

struct MirrorPlane {
    Vec3d point = Vec3d::Zero();
    Vec3d normal = Vec3d::UnitY();
    double reflectance = 1.0;

    void validate() const {
        if (std::abs(normal.norm() - 1.0) > 1e-9) throw InvalidArgument("mirror normal must be unit length");
        if (!(reflectance >= 0.0 && reflectance <= 1.0)) throw InvalidArgument("mirror reflectance must be in [0, 1]");
    }
};

struct SyntheticScene {
    std::vector<Primitive> primitives;
    std::optional<MirrorPlane> mirror;
    Aabb bounds;
    Vec3d background = Vec3d::Zero();
    std::optional<std::size_t> rod;  // thin-structure primitive used for the rod mask
    int quadrature_samples = 1024;   // per straight segment

    void validate() const {
        if (mirror) mirror->validate();
        if (rod && *rod >= primitives.size()) throw InvalidArgument("rod index out of range");
        if (quadrature_samples < 1) throw InvalidArgument("quadrature needs at least one sample");
    }

    AnalyticField field() const { return AnalyticField{primitives}; }
};

inline nlohmann::json scene_to_json(const SyntheticScene& s) {
    nlohmann::json prims = nlohmann::json::array();
    for (const auto& p : s.primitives) prims.push_back(primitive_to_json(p));
    nlohmann::json j{{"primitives", prims},
                     {"bounds", aabb_to_json(s.bounds)},
                     {"background", vec3_to_json(s.background)},
                     {"quadrature_samples", s.quadrature_samples}};
    j["mirror"] = s.mirror ? nlohmann::json{{"point", vec3_to_json(s.mirror->point)},
                                            {"normal", vec3_to_json(s.mirror->normal)},
                                            {"reflectance", s.mirror->reflectance}}
                           : nlohmann::json(nullptr);
    j["rod"] = s.rod ? nlohmann::json(*s.rod) : nlohmann::json(nullptr);
    return j;
}

inline SyntheticScene scene_from_json(const nlohmann::json& j) {
    SyntheticScene s;
    for (const auto& p : j.at("primitives")) s.primitives.push_back(primitive_from_json(p));
    s.bounds = aabb_from_json(j.at("bounds"));
    if (j.contains("background")) s.background = vec3_from_json(j.at("background"));
    if (j.contains("quadrature_samples")) s.quadrature_samples = j.at("quadrature_samples");
    if (j.contains("mirror") && !j.at("mirror").is_null()) {
        const auto& m = j.at("mirror");
        s.mirror = MirrorPlane{vec3_from_json(m.at("point")), vec3_from_json(m.at("normal")), m.at("reflectance")};
    }
    if (j.contains("rod") && !j.at("rod").is_null()) s.rod = j.at("rod").get<std::size_t>();
    s.validate();
    return s;
}

// Default desk scene: a mirror floor over a diffuse slab, two emissive
// spheres whose mirror images lie below the scene box, and a thin rod.
inline SyntheticScene desk_scene() {
    SyntheticScene s;
    s.bounds = Aabb{Vec3d::Constant(-1.0), Vec3d::Constant(1.0)};
    s.background = Vec3d::Zero();
    s.primitives.push_back(ConstantBox{20.0, Vec3d(0.45, 0.45, 0.45), Aabb{Vec3d(-1, -1, -1), Vec3d(1, -0.8, 1)}});
    s.primitives.push_back(EmissiveSphere{Vec3d(-0.35, -0.3, 0.2), 0.3, 25.0, Vec3d(0.9, 0.25, 0.15)});
    s.primitives.push_back(EmissiveSphere{Vec3d(0.4, -0.45, -0.3), 0.25, 25.0, Vec3d(0.15, 0.35, 0.9)});
    s.primitives.push_back(ConstantBox{30.0, Vec3d(0.95, 0.85, 0.2), Aabb{Vec3d(0.1, -0.8, 0.4), Vec3d(0.2, 0.6, 0.5)}});
    s.rod = 3;
    s.mirror = MirrorPlane{Vec3d(0, -0.8, 0), Vec3d::UnitY(), 0.6};
    return s;
}

// Midpoint rule with `count` samples on [t0, t1].
inline std::vector<double> quadrature_points(double t0, double t1, int count) {
    std::vector<double> t(static_cast<std::size_t>(count));
    const double h = (t1 - t0) / count;
    for (int i = 0; i < count; ++i) t[std::size_t(i)] = t0 + (i + 0.5) * h;
    return t;
}

struct SegmentResult {
    Vec3d color = Vec3d::Zero();  // includes the background term
    double transmittance = 1.0;   // left at the segment end
};

// Dense-quadrature straight-line render of the analytic field.
inline SegmentResult dense_segment(const AnalyticField& field, const Vec3d& o, const Vec3d& d, double t0, double t1,
                                   int samples, const Vec3d& background) {
    if (!(t0 < t1)) return {background, 1.0};
    const Ray ray(o, d, t0, t1);
    RenderConfig cfg;
    cfg.background = background;
    RaySampleSet s;
    SegmentResult r;
    r.color = render_primary(ray, point_field(field), quadrature_points(t0, t1, samples), cfg, &s);
    r.transmittance = s.transmittance.back() * std::exp(-s.sigmas.back() * s.deltas.back());
    return r;
}

// Ray parameter of the mirror hit inside (t0, t1), if any.
inline std::optional<double> mirror_hit(const MirrorPlane& m, const Vec3d& o, const Vec3d& d, double t0, double t1) {
    const double denom = d.dot(m.normal);
    if (std::abs(denom) < 1e-12) return std::nullopt;
    const double t = (m.point - o).dot(m.normal) / denom;
    if (!(t > t0 && t < t1)) return std::nullopt;
    return t;
}

inline Vec3d reflect(const Vec3d& d, const Vec3d& n) { return d - 2.0 * d.dot(n) * n; }

// Radiance along a unit ray: direct marching up to the mirror, then
// T_hit * (r * reflected + (1 - r) * transmitted). One bounce only; the
// mirror counts only inside the scene bounds.
inline Vec3d trace_ground_truth(const SyntheticScene& scene, const Vec3d& origin, const Vec3d& direction) {
    check_unit(direction, "trace direction");
    const auto span = intersect_aabb(origin, direction, scene.bounds);
    if (!span) return scene.background;
    const auto [t0, t1] = *span;
    const AnalyticField field = scene.field();
    const int n = scene.quadrature_samples;
    const std::optional<double> hit = scene.mirror ? mirror_hit(*scene.mirror, origin, direction, t0, t1) : std::nullopt;
    if (!hit) return dense_segment(field, origin, direction, t0, t1, n, scene.background).color;

    const MirrorPlane& m = *scene.mirror;
    const SegmentResult direct = dense_segment(field, origin, direction, t0, *hit, n, Vec3d::Zero());
    const Vec3d x = origin + *hit * direction;
    Vec3d reflected = scene.background;
    if (m.reflectance > 0.0) {
        const Vec3d rd = reflect(direction, m.normal).normalized();
        if (const auto rspan = intersect_aabb(x, rd, scene.bounds))
            reflected = dense_segment(field, x, rd, std::max(rspan->first, 1e-12), rspan->second, n, scene.background).color;
    }
    Vec3d through = scene.background;
    if (m.reflectance < 1.0) through = dense_segment(field, origin, direction, *hit, t1, n, scene.background).color;
    return direct.color + direct.transmittance * (m.reflectance * reflected + (1.0 - m.reflectance) * through);
}

inline ImageBuffer render_ground_truth(const SyntheticScene& scene, const Posed& pose, const Intrinsics& k) {
    k.validate();
    ImageBuffer img(k.width, k.height);
    for (int y = 0; y < k.height; ++y)
        for (int x = 0; x < k.width; ++x)
            img.set(x, y, trace_ground_truth(scene, pose.translation, (pose.rotation * camera_direction(k, x, y)).normalized()));
    return img;
}

inline ImageBuffer render_ground_truth_blurred(const SyntheticScene& scene, const ExposureModel& em, const Intrinsics& k) {
    std::vector<ImageBuffer> sharp;
    for (const Posed& p : virtual_poses(em)) sharp.push_back(render_ground_truth(scene, p, k));
    return synthesize_blur(sharp);
}

// Pixels whose primary ray reaches the mirror with at least half its
// transmittance left.
inline PixelMask mirror_mask(const SyntheticScene& scene, const Posed& pose, const Intrinsics& k) {
    PixelMask mask{k.width, k.height, std::vector<std::uint8_t>(std::size_t(k.width) * k.height, 0)};
    if (!scene.mirror || scene.mirror->reflectance == 0.0) return mask;
    const AnalyticField field = scene.field();
    for (int y = 0; y < k.height; ++y)
        for (int x = 0; x < k.width; ++x) {
            const Vec3d d = (pose.rotation * camera_direction(k, x, y)).normalized();
            const auto span = intersect_aabb(pose.translation, d, scene.bounds);
            if (!span) continue;
            const auto hit = mirror_hit(*scene.mirror, pose.translation, d, span->first, span->second);
            if (!hit) continue;
            const double T =
                dense_segment(field, pose.translation, d, span->first, *hit, scene.quadrature_samples, Vec3d::Zero())
                    .transmittance;
            mask.bits[std::size_t(y) * k.width + x] = T >= 0.5 ? 1 : 0;
        }
    return mask;
}

// Pixels where the rod alone would be at least 30% opaque.
inline PixelMask rod_mask(const SyntheticScene& scene, const Posed& pose, const Intrinsics& k) {
    PixelMask mask{k.width, k.height, std::vector<std::uint8_t>(std::size_t(k.width) * k.height, 0)};
    if (!scene.rod) return mask;
    const AnalyticField rod{{scene.primitives[*scene.rod]}};
    for (int y = 0; y < k.height; ++y)
        for (int x = 0; x < k.width; ++x) {
            const Vec3d d = (pose.rotation * camera_direction(k, x, y)).normalized();
            const auto span = intersect_aabb(pose.translation, d, scene.bounds);
            if (!span) continue;
            const double T =
                dense_segment(rod, pose.translation, d, span->first, span->second, scene.quadrature_samples, Vec3d::Zero())
                    .transmittance;
            mask.bits[std::size_t(y) * k.width + x] = T <= 0.7 ? 1 : 0;
        }
    return mask;
}

// Camera ring and per-view exposure motion.
struct TrajectorySpec {
    int views = 20;
    int n = 8;
    int width = 64;
    int height = 64;
    double focal = 68.6;  // at 64 px width; scaled with the width
    double radius = 3.5;
    double elevation_deg = 25.0;
    Vec3d target = Vec3d(0.0, -0.35, 0.0);
    double blur_rotation = 0.04;     // rad, per exposure
    double blur_translation = 0.06;  // scene units, per exposure
    std::uint64_t seed = 0;

    Intrinsics intrinsics() const {
        const double f = focal * width / 64.0;
        return Intrinsics{f, f, width / 2.0, height / 2.0, width, height};
    }
};

// Camera-to-world pose looking at `target` with world +y up (x right,
// y down, z forward in the camera).
inline Posed look_at(const Vec3d& eye, const Vec3d& target) {
    const Vec3d f = (target - eye).normalized();
    Vec3d right = f.cross(Vec3d::UnitY());
    if (right.norm() < 1e-9) throw InvalidArgument("look_at direction is parallel to the up axis");
    right.normalize();
    const Vec3d down = f.cross(right);
    Posed T;
    T.rotation.col(0) = right;
    T.rotation.col(1) = down;
    T.rotation.col(2) = f;
    T.translation = eye;
    return T;
}

inline std::vector<ExposureModel> ring_trajectories(const TrajectorySpec& spec) {
    if (spec.views < 1 || spec.n < 1) throw InvalidArgument("trajectory needs views >= 1 and n >= 1");
    Rng rng = make_stream(spec.seed, 0x7a7);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto random_unit = [&]() {
        Vec3d u(normal(rng), normal(rng), normal(rng));
        return Vec3d(u.normalized());
    };
    const double elev = spec.elevation_deg * std::numbers::pi / 180.0;
    std::vector<ExposureModel> out;
    for (int v = 0; v < spec.views; ++v) {
        const double phi = 2.0 * std::numbers::pi * v / spec.views;
        const Vec3d eye(spec.radius * std::cos(elev) * std::cos(phi), spec.radius * std::sin(elev),
                        spec.radius * std::cos(elev) * std::sin(phi));
        const Posed start = look_at(eye, spec.target);
        const Vec3d w = random_unit() * spec.blur_rotation;
        const Vec3d t = random_unit() * spec.blur_translation;
        out.push_back(ExposureModel{start, compose(start, se3_exp(Twistd(w, t))), spec.n, false});
    }
    return out;
}

inline std::string frame_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03d.png", index);
    return buf;
}

// Layout: train/NNN.png (blurred), sharp/NNN.png (held-out midpoint views),
// masks/{mirror,rod}_NNN.png, poses.json, scene.json.
inline void generate_dataset(const SyntheticScene& scene, const TrajectorySpec& spec, const std::filesystem::path& out) {
    namespace fs = std::filesystem;
    scene.validate();
    std::error_code ec;
    for (const char* sub : {"train", "sharp", "masks"}) {
        fs::create_directories(out / sub, ec);
        if (ec) throw IoError("cannot create " + (out / sub).string() + ": " + ec.message());
    }
    const Intrinsics k = spec.intrinsics();
    const std::vector<ExposureModel> traj = ring_trajectories(spec);
    nlohmann::json images = nlohmann::json::array(), holdout = nlohmann::json::array();
    for (int v = 0; v < spec.views; ++v) {
        const ExposureModel& em = traj[std::size_t(v)];
        const std::string name = frame_name(v);
        write_png(out / "train" / name, render_ground_truth_blurred(scene, em, k));
        const Posed mid = interpolate_pose(em.start, em.end, 0.5);
        write_png(out / "sharp" / name, render_ground_truth(scene, mid, k));
        write_mask_png(out / "masks" / ("mirror_" + name), mirror_mask(scene, mid, k));
        write_mask_png(out / "masks" / ("rod_" + name), rod_mask(scene, mid, k));
        images.push_back({{"file", "train/" + name},
                          {"T_start", pose_to_json(em.start)},
                          {"T_end", pose_to_json(em.end)},
                          {"intrinsics", intrinsics_to_json(k)},
                          {"n", em.n}});
        holdout.push_back({{"file", "sharp/" + name},
                           {"T", pose_to_json(mid)},
                           {"intrinsics", intrinsics_to_json(k)},
                           {"mirror_mask", "masks/mirror_" + name},
                           {"rod_mask", "masks/rod_" + name}});
    }
    write_json_file(out / "poses.json", {{"images", images}, {"holdout", holdout}});
    write_json_file(out / "scene.json", scene_to_json(scene));
}

}  // namespace isnerf
