#pragma once

// RunConfig: the single JSON document driving synth/train/render/eval.
// Every key has a default; unknown keys are rejected at every level.

#include "isnerf/optimizer.hpp"
#include "isnerf/serialize.hpp"

#include <set>

namespace isnerf {

enum class Precision { f32, f64 };

struct RunConfig {
    std::uint64_t seed = 0;
    std::string data;
    std::string out;
    Precision precision = Precision::f32;
    RenderConfig render;
    bool dataset_box = true;         // take scene_box from the dataset
    bool dataset_background = true;  // take background from the dataset
    FieldShape field;
    IslmShape islm;
    TrainConfig train;

    // Render settings once dataset-derived values are filled in.
    RenderConfig resolved_render(const Dataset& d) const {
        RenderConfig r = render;
        if (dataset_box) r.scene_box = d.scene_box;
        if (dataset_background) r.background = d.background;
        return r;
    }
};

namespace detail {

// Reads keys of one JSON object and reports any it did not ask for.
class StrictObject {
public:
    StrictObject(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(where_ + " must be a JSON object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(where_ + "." + key + ": " + e.what());
        }
    }

    void get_vec3(const char* key, Vec3d& out) {
        seen_.insert(key);
        if (j_.contains(key)) out = vec3_from_json(j_.at(key));
    }

    const nlohmann::json* child(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    void finish() const {
        for (const auto& [key, value] : j_.items())
            if (!seen_.count(key)) throw ConfigError("unknown config key " + where_ + "." + key);
    }

private:
    const nlohmann::json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
    const RenderConfig& r = c.render;
    const TrainConfig& t = c.train;
    nlohmann::json field = c.field, islm = c.islm;
    field.erase("kind");
    islm.erase("kind");
    return {
        {"seed", c.seed},
        {"data", c.data},
        {"out", c.out},
        {"precision", c.precision == Precision::f32 ? "float" : "double"},
        {"render",
         {{"coarse_samples", r.coarse_samples},
          {"fine_samples", r.fine_samples},
          {"scattering_enabled", r.scattering_enabled},
          {"weighted_scatter", r.weighted_scatter},
          {"background", vec3_to_json(r.background)},
          {"scene_box", aabb_to_json(r.scene_box)},
          {"dataset_box", c.dataset_box},
          {"dataset_background", c.dataset_background},
          {"scatter",
           {{"paths", r.scatter.paths},
            {"samples_per_path", r.scatter.samples_per_path},
            {"mode", to_string(r.scatter.mode)},
            {"l_min", r.scatter.interval.l_min},
            {"l_max", r.scatter.interval.l_max}}}}},
        {"field", field},
        {"islm", islm},
        {"train",
         {{"iterations", t.iterations},
          {"batch_rays", t.batch_rays},
          {"islm_warmup", t.islm_warmup},
          {"train_scatter", t.train_scatter},
          {"eval_scatter", t.eval_scatter},
          {"optimize_poses", t.optimize_poses},
          {"reduction", t.reduction == LossReduction::sum ? "sum" : "mean"},
          {"inclusive_endpoint", t.inclusive_endpoint},
          {"pose_noise_rotation", t.pose_noise_rotation},
          {"pose_noise_translation", t.pose_noise_translation},
          {"eval_every", t.eval_every},
          {"eval_views", t.eval_views},
          {"lr_field", t.hyper.lr_field},
          {"lr_islm", t.hyper.lr_islm},
          {"lr_pose", t.hyper.lr_pose},
          {"lr_decay", t.hyper.lr_decay},
          {"beta1", t.hyper.beta1},
          {"beta2", t.hyper.beta2},
          {"eps", t.hyper.eps}}},
    };
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    detail::StrictObject top(j, "config");
    top.get("seed", c.seed);
    top.get("data", c.data);
    top.get("out", c.out);
    std::string precision = "float";
    top.get("precision", precision);
    if (precision == "float") c.precision = Precision::f32;
    else if (precision == "double") c.precision = Precision::f64;
    else throw ConfigError("precision must be \"float\" or \"double\"");

    if (const auto* rj = top.child("render")) {
        detail::StrictObject r(*rj, "config.render");
        r.get("coarse_samples", c.render.coarse_samples);
        r.get("fine_samples", c.render.fine_samples);
        r.get("scattering_enabled", c.render.scattering_enabled);
        r.get("weighted_scatter", c.render.weighted_scatter);
        r.get_vec3("background", c.render.background);
        if (const auto* b = r.child("scene_box")) c.render.scene_box = aabb_from_json(*b);
        r.get("dataset_box", c.dataset_box);
        r.get("dataset_background", c.dataset_background);
        if (const auto* sj = r.child("scatter")) {
            detail::StrictObject s(*sj, "config.render.scatter");
            s.get("paths", c.render.scatter.paths);
            s.get("samples_per_path", c.render.scatter.samples_per_path);
            std::string mode = to_string(c.render.scatter.mode);
            s.get("mode", mode);
            c.render.scatter.mode = scatter_mode_from_string(mode);
            s.get("l_min", c.render.scatter.interval.l_min);
            s.get("l_max", c.render.scatter.interval.l_max);
            s.finish();
        }
        r.finish();
    }
    if (const auto* fj = top.child("field")) {
        detail::StrictObject f(*fj, "config.field");
        f.get("trunk_depth", c.field.trunk_depth);
        f.get("trunk_width", c.field.trunk_width);
        f.get("color_width", c.field.color_width);
        f.get("pos_levels", c.field.pos_levels);
        f.get("dir_levels", c.field.dir_levels);
        std::string act = to_string(c.field.activation);
        f.get("activation", act);
        c.field.activation = activation_from_string(act);
        f.finish();
    }
    if (const auto* ij = top.child("islm")) {
        detail::StrictObject s(*ij, "config.islm");
        s.get("depth", c.islm.depth);
        s.get("width", c.islm.width);
        s.get("pos_levels", c.islm.pos_levels);
        s.get("dir_levels", c.islm.dir_levels);
        s.get("heads", c.islm.heads);
        std::string act = to_string(c.islm.activation);
        s.get("activation", act);
        c.islm.activation = activation_from_string(act);
        s.finish();
    }
    if (const auto* tj = top.child("train")) {
        detail::StrictObject t(*tj, "config.train");
        TrainConfig& tc = c.train;
        t.get("iterations", tc.iterations);
        t.get("batch_rays", tc.batch_rays);
        t.get("islm_warmup", tc.islm_warmup);
        t.get("train_scatter", tc.train_scatter);
        t.get("eval_scatter", tc.eval_scatter);
        t.get("optimize_poses", tc.optimize_poses);
        std::string reduction = tc.reduction == LossReduction::sum ? "sum" : "mean";
        t.get("reduction", reduction);
        if (reduction == "sum") tc.reduction = LossReduction::sum;
        else if (reduction == "mean") tc.reduction = LossReduction::mean;
        else throw ConfigError("train.reduction must be \"sum\" or \"mean\"");
        t.get("inclusive_endpoint", tc.inclusive_endpoint);
        t.get("pose_noise_rotation", tc.pose_noise_rotation);
        t.get("pose_noise_translation", tc.pose_noise_translation);
        t.get("eval_every", tc.eval_every);
        t.get("eval_views", tc.eval_views);
        t.get("lr_field", tc.hyper.lr_field);
        t.get("lr_islm", tc.hyper.lr_islm);
        t.get("lr_pose", tc.hyper.lr_pose);
        t.get("lr_decay", tc.hyper.lr_decay);
        t.get("beta1", tc.hyper.beta1);
        t.get("beta2", tc.hyper.beta2);
        t.get("eps", tc.hyper.eps);
        t.finish();
    }
    top.finish();
    c.train.seed = c.seed;

    if (c.train.iterations < 0) throw ConfigError("train.iterations must be >= 0");
    if (c.train.batch_rays < 1) throw ConfigError("train.batch_rays must be >= 1");
    c.render.validate();
    try {
        FieldLayout{c.field};
        IslmLayout{c.islm};
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) { return run_config_from_json(read_json_file(path)); }

}  // namespace isnerf
