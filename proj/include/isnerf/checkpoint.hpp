#pragma once

// Checkpoint directory: coarse.bin, fine.bin, islm.bin, poses.json and
// config.json. Each .bin is one JSON header line (shape descriptor, count,
// dtype) followed by the values as little-endian float64.

#include "isnerf/config.hpp"

#include <bit>
#include <cstring>

namespace isnerf {

namespace detail {

inline void write_f64_le(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

inline double read_f64_le(const unsigned char* bytes) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t(bytes[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

}  // namespace detail

template <typename Shape, typename Scalar>
void write_params(const std::filesystem::path& path, const FlatParams<Shape, Scalar>& p) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    nlohmann::json header = p.shape;
    header["count"] = p.values.size();
    header["dtype"] = "f64le";
    out << header.dump() << "\n";
    for (Scalar v : p.values) detail::write_f64_le(out, double(v));
    if (!out) throw IoError("failed writing " + path.string());
}

template <typename Shape, typename Scalar>
FlatParams<Shape, Scalar> read_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw IoError(path.string() + " has no header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError("bad checkpoint header in " + path.string() + ": " + e.what());
    }
    if (header.value("dtype", "") != "f64le") throw IoError(path.string() + " is not f64le");
    FlatParams<Shape, Scalar> p;
    p.shape = header.get<Shape>();
    const std::size_t count = header.at("count");
    std::vector<unsigned char> bytes(count * 8);
    in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
    if (std::size_t(in.gcount()) != bytes.size()) throw IoError(path.string() + " is truncated");
    p.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) p.values[i] = Scalar(detail::read_f64_le(bytes.data() + 8 * i));
    return p;
}

template <typename Scalar>
void write_checkpoint(const std::filesystem::path& dir, const TrainState<Scalar>& s, const Dataset& data,
                      const RunConfig& cfg) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    write_params(dir / "coarse.bin", s.model.coarse);
    write_params(dir / "fine.bin", s.model.fine);
    write_params(dir / "islm.bin", s.model.islm);
    nlohmann::json views = nlohmann::json::array();
    for (std::size_t v = 0; v < s.view_count(); ++v) {
        const auto [start, end] = s.endpoints(v);
        views.push_back({{"file", v < data.views.size() ? data.views[v].file : std::string()},
                         {"T_start", pose_to_json(reorthonormalize(start))},
                         {"T_end", pose_to_json(reorthonormalize(end))}});
    }
    write_json_file(dir / "poses.json", {{"step", s.step}, {"views", views}});
    write_json_file(dir / "config.json", to_json(cfg));
}

template <typename Scalar>
struct Checkpoint {
    RenderModel<Scalar> model;
    std::vector<std::pair<Posed, Posed>> trajectories;
    RunConfig config;
    long step = 0;
};

template <typename Scalar>
Checkpoint<Scalar> read_checkpoint(const std::filesystem::path& dir) {
    Checkpoint<Scalar> c;
    c.config = load_run_config(dir / "config.json");
    c.model.coarse = read_params<FieldShape, Scalar>(dir / "coarse.bin");
    c.model.fine = read_params<FieldShape, Scalar>(dir / "fine.bin");
    c.model.islm = read_params<IslmShape, Scalar>(dir / "islm.bin");
    if (c.model.coarse.size() != FieldLayout(c.model.coarse.shape).total ||
        c.model.fine.size() != FieldLayout(c.model.fine.shape).total ||
        c.model.islm.size() != IslmLayout(c.model.islm.shape).total)
        throw ShapeMismatch("checkpoint parameter count does not match its shape header");
    const nlohmann::json poses = read_json_file(dir / "poses.json");
    try {
        c.step = poses.at("step");
        for (const auto& v : poses.at("views"))
            c.trajectories.emplace_back(pose_from_json(v.at("T_start")), pose_from_json(v.at("T_end")));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed poses.json in " + dir.string() + ": " + e.what());
    }
    return c;
}

}  // namespace isnerf
