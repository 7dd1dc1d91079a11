#pragma once

// JSON forms of the small geometric types shared by the on-disk formats.

#include "isnerf/renderer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

namespace isnerf {

inline nlohmann::json vec3_to_json(const Vec3d& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

inline Vec3d vec3_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 3) throw ConfigError("expected a 3-vector, got " + j.dump());
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline nlohmann::json aabb_to_json(const Aabb& b) { return {{"lo", vec3_to_json(b.lo)}, {"hi", vec3_to_json(b.hi)}}; }

inline Aabb aabb_from_json(const nlohmann::json& j) {
    Aabb b{vec3_from_json(j.at("lo")), vec3_from_json(j.at("hi"))};
    if (!(b.lo.array() < b.hi.array()).all()) throw ConfigError("box needs lo < hi on every axis");
    return b;
}

inline nlohmann::json pose_to_json(const Posed& T) { return to_matrix4(T); }

inline Posed pose_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 16) throw ConfigError("pose must be a 16-element row-major 4x4 matrix");
    return from_matrix4(j.get<std::array<double, 16>>());
}

inline nlohmann::json primitive_to_json(const Primitive& p) {
    return std::visit(
        [](const auto& prim) -> nlohmann::json {
            using T = std::decay_t<decltype(prim)>;
            if constexpr (std::is_same_v<T, ConstantBox>)
                return {{"kind", "box"},
                        {"lo", vec3_to_json(prim.bounds.lo)},
                        {"hi", vec3_to_json(prim.bounds.hi)},
                        {"sigma", prim.sigma},
                        {"color", vec3_to_json(prim.color)}};
            else
                return {{"kind", "sphere"},
                        {"center", vec3_to_json(prim.center)},
                        {"radius", prim.radius},
                        {"sigma", prim.sigma},
                        {"color", vec3_to_json(prim.color)}};
        },
        p);
}

inline Primitive primitive_from_json(const nlohmann::json& j) {
    const std::string kind = j.at("kind");
    if (kind == "box") {
        ConstantBox b;
        b.bounds = aabb_from_json(j);
        b.sigma = j.at("sigma");
        b.color = vec3_from_json(j.at("color"));
        return b;
    }
    if (kind == "sphere") {
        EmissiveSphere s;
        s.center = vec3_from_json(j.at("center"));
        s.radius = j.at("radius");
        s.sigma = j.at("sigma");
        s.color = vec3_from_json(j.at("color"));
        if (!(s.radius > 0.0)) throw ConfigError("sphere radius must be positive");
        return s;
    }
    throw ConfigError("unknown primitive kind '" + kind + "'");
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << "\n";
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace isnerf
