#pragma once

// Loads a dataset directory written by generate_dataset (or laid out the
// same way by hand): poses.json, scene.json and the PNGs they reference.

#include "isnerf/dataset.hpp"
#include "isnerf/png_io.hpp"
#include "isnerf/serialize.hpp"

namespace isnerf {

inline Intrinsics intrinsics_for_image(const nlohmann::json& j, const ImageBuffer& img) {
    nlohmann::json k = j;
    if (!k.contains("width")) k["width"] = img.width;
    if (!k.contains("height")) k["height"] = img.height;
    return intrinsics_from_json(k);
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
    const nlohmann::json poses = read_json_file(dir / "poses.json");
    const nlohmann::json scene = read_json_file(dir / "scene.json");
    Dataset d;
    try {
        d.scene_box = aabb_from_json(scene.at("bounds"));
        if (scene.contains("background")) d.background = vec3_from_json(scene.at("background"));
        for (const auto& e : poses.at("images")) {
            TrainView v;
            v.file = e.at("file");
            v.blurred = read_png(dir / v.file);
            v.intrinsics = intrinsics_for_image(e.at("intrinsics"), v.blurred);
            v.start = pose_from_json(e.at("T_start"));
            v.end = pose_from_json(e.at("T_end"));
            v.n = e.at("n");
            d.views.push_back(std::move(v));
        }
        if (poses.contains("holdout")) {
            for (const auto& e : poses.at("holdout")) {
                HoldoutView h;
                h.file = e.at("file");
                h.sharp = read_png(dir / h.file);
                h.intrinsics = intrinsics_for_image(e.at("intrinsics"), h.sharp);
                h.pose = pose_from_json(e.at("T"));
                if (e.contains("mirror_mask")) h.mirror_mask = read_mask_png(dir / e.at("mirror_mask").get<std::string>());
                if (e.contains("rod_mask")) h.rod_mask = read_mask_png(dir / e.at("rod_mask").get<std::string>());
                d.holdout.push_back(std::move(h));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed dataset description in " + dir.string() + ": " + e.what());
    } catch (const InvalidArgument& e) {
        throw ConfigError("invalid dataset entry in " + dir.string() + ": " + e.what());
    }
    d.validate();
    return d;
}

}  // namespace isnerf
