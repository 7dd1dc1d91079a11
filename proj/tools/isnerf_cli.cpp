#include "isnerf/pipeline.hpp"
#include "isnerf/scene_forge.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace isnerf;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::pair<int, int> parse_size(const std::string& s) {
    const auto x = s.find('x');
    if (x == std::string::npos) throw ConfigError("size must look like WxH, got '" + s + "'");
    try {
        return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
    } catch (const std::exception&) {
        throw ConfigError("size must look like WxH, got '" + s + "'");
    }
}

RunConfig config_or_default(const std::string& path) {
    return path.empty() ? RunConfig{} : load_run_config(path);
}

template <typename F>
void with_precision(Precision p, F&& f) {
    if (p == Precision::f32) f(float{});
    else f(double{});
}

void cmd_synth(const std::string& scene_arg, const std::string& out, std::uint64_t seed, const std::string& size,
               int views, int n) {
    SyntheticScene scene = scene_arg == "builtin" ? desk_scene() : scene_from_json(read_json_file(scene_arg));
    TrajectorySpec spec;
    spec.seed = seed;
    spec.views = views;
    spec.n = n;
    std::tie(spec.width, spec.height) = parse_size(size);
    generate_dataset(scene, spec, out);
    std::cout << "wrote " << views << " blurred views (" << spec.width << "x" << spec.height << ", n=" << n << ") to "
              << out << "\n";
}

void cmd_train(RunConfig cfg, const std::string& data_dir, const std::string& out) {
    if (!data_dir.empty()) cfg.data = data_dir;
    if (!out.empty()) cfg.out = out;
    if (cfg.data.empty()) throw ConfigError("no dataset given (--data or config \"data\")");
    if (cfg.out.empty()) throw ConfigError("no output directory given (--out or config \"out\")");
    const Dataset data = load_dataset(cfg.data);
    fs::create_directories(cfg.out);
    with_precision(cfg.precision, [&](auto tag) {
        using Scalar = decltype(tag);
        TrainCallbacks cb;
        cb.on_log = [](const MetricsRow& r) {
            std::cout << "iter " << r.iteration << "  loss " << r.loss << "  psnr " << format_metric(r.psnr_holdout)
                      << "  lr " << r.lr << "  " << format_metric(r.wall_seconds) << " s" << std::endl;
        };
        const RunResult<Scalar> run = run_training<Scalar>(cfg, data, cb);
        write_metrics_csv(fs::path(cfg.out) / "metrics.csv", run.train.log);
        write_checkpoint(fs::path(cfg.out) / "ckpt", run.train.state, data, cfg);
        std::cout << "trained " << cfg.train.iterations << " iterations in " << format_metric(run.seconds)
                  << " s; checkpoint in " << (fs::path(cfg.out) / "ckpt").string() << "\n";
    });
}

// --pose: an index into the held-out views of the checkpoint's dataset, or
// a JSON file {"T": [16 numbers], "intrinsics": {...}}.
std::pair<Posed, Intrinsics> resolve_pose(const std::string& arg, const Dataset* data) {
    const bool numeric = !arg.empty() && std::all_of(arg.begin(), arg.end(), [](char c) { return std::isdigit(c); });
    if (numeric) {
        if (!data) throw ConfigError("pose index needs the checkpoint's dataset");
        const std::size_t i = std::stoul(arg);
        if (i >= data->holdout.size()) throw ConfigError("pose index out of range");
        return {data->holdout[i].pose, data->holdout[i].intrinsics};
    }
    const nlohmann::json j = read_json_file(arg);
    try {
        return {pose_from_json(j.at("T")), intrinsics_from_json(j.at("intrinsics"))};
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad pose file " + arg + ": " + e.what());
    }
}

void cmd_render(const std::string& ckpt, const std::string& pose, const std::string& out, bool no_islm,
                const std::string& data_dir) {
    const Checkpoint<double> c = read_checkpoint<double>(ckpt);
    const std::string dir = data_dir.empty() ? c.config.data : data_dir;
    std::optional<Dataset> data;
    if (!dir.empty() && fs::exists(fs::path(dir) / "poses.json")) data = load_dataset(dir);
    RenderConfig r = c.config.render;
    if (data) r = eval_render_settings(c.config, *data, c.config.train.eval_scatter);
    if (no_islm) r.scattering_enabled = false;
    const auto [T, k] = resolve_pose(pose, data ? &*data : nullptr);
    write_png(out, clamped(render_image<double>(T, k, c.model.refs(), r, c.config.seed)));
    std::cout << "wrote " << out << (r.scattering_enabled ? "" : " (no scattering)") << "\n";
}

void cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& csv, bool no_islm) {
    const Checkpoint<double> c = read_checkpoint<double>(ckpt);
    const Dataset data = load_dataset(data_dir.empty() ? c.config.data : data_dir);
    if (data.holdout.empty()) throw ConfigError("dataset has no held-out sharp views");
    RenderConfig r = eval_render_settings(c.config, data, c.config.train.eval_scatter && !no_islm);
    const EvalSummary s = evaluate_holdout(c.model, data, r, c.config.seed);
    const fs::path out = csv.empty() ? fs::path(ckpt) / "eval.csv" : fs::path(csv);
    write_eval_csv(out, s);
    print_eval_table(std::cout, s);
    std::cout << "wrote " << out.string() << "\n";
}

void cmd_ablate(RunConfig cfg, const std::string& data_dir, const std::string& out, const std::string& modes,
                const std::string& ks, long k_iterations) {
    const Dataset data = load_dataset(data_dir);
    cfg.data = data_dir;
    fs::create_directories(out);
    AblationOptions opt;
    opt.modes = split_list(modes);
    opt.k_values.clear();
    for (const auto& k : split_list(ks)) opt.k_values.push_back(std::stoi(k));
    opt.k_iterations = k_iterations;
    opt.out = out;
    opt.log = [](const std::string& s) { std::cout << s << std::endl; };
    with_precision(cfg.precision, [&](auto tag) {
        using Scalar = decltype(tag);
        const auto rows = run_ablation<Scalar>(cfg, data, opt);
        write_ablation_csv(fs::path(out) / "ablation.csv", rows);
    });
    std::cout << "wrote " << (fs::path(out) / "ablation.csv").string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Scattering-aware NeRF with camera-motion deblurring"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth", "generate a synthetic mirror-scene dataset");
    std::string scene = "builtin", synth_out, size = "64x64";
    std::uint64_t synth_seed = 0;
    int views = 20, n = 8;
    synth->add_option("--scene", scene, "scene JSON file or 'builtin'");
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--seed", synth_seed, "trajectory seed");
    synth->add_option("--size", size, "image size WxH");
    synth->add_option("--views", views, "number of training views")->check(CLI::PositiveNumber);
    synth->add_option("--n", n, "virtual sharp images per exposure")->check(CLI::PositiveNumber);

    auto* trn = app.add_subcommand("train", "train on a dataset directory");
    std::string data, config, train_out;
    bool dump = false;
    trn->add_option("--data", data, "dataset directory");
    trn->add_option("--config", config, "run config JSON");
    trn->add_option("--out", train_out, "output directory");
    trn->add_flag("--dump-config", dump, "print the effective config with all defaults and exit");

    auto* rnd = app.add_subcommand("render", "render a view from a checkpoint");
    std::string ckpt, pose, render_out, render_data;
    bool no_islm = false;
    rnd->add_option("--ckpt", ckpt, "checkpoint directory")->required();
    rnd->add_option("--pose", pose, "held-out view index or pose JSON file")->required();
    rnd->add_option("--out", render_out, "output PNG")->required();
    rnd->add_option("--data", render_data, "dataset directory (defaults to the one in the checkpoint config)");
    rnd->add_flag("--no-islm", no_islm, "render without scattering paths");

    auto* evl = app.add_subcommand("eval", "PSNR/SSIM of a checkpoint on held-out sharp views");
    std::string eval_ckpt, eval_data, eval_csv;
    bool eval_no_islm = false;
    evl->add_option("--ckpt", eval_ckpt, "checkpoint directory")->required();
    evl->add_option("--data", eval_data, "dataset directory");
    evl->add_option("--csv", eval_csv, "CSV path (default <ckpt>/eval.csv)");
    evl->add_flag("--no-islm", eval_no_islm, "evaluate without scattering paths");

    auto* abl = app.add_subcommand("ablate", "ISLM and scattering-design ablations");
    std::string abl_data, abl_out, abl_config, modes = "full,no-islm-train,no-islm-render,single-point,k-sweep";
    std::string ks = "1,3,5,7,9";
    long k_iterations = 0;
    abl->add_option("--data", abl_data, "dataset directory")->required();
    abl->add_option("--out", abl_out, "output directory")->required();
    abl->add_option("--config", abl_config, "run config JSON");
    abl->add_option("--modes", modes, "comma-separated modes");
    abl->add_option("--k-values", ks, "scatter path counts for k-sweep");
    abl->add_option("--k-iterations", k_iterations, "iterations per k-sweep run (0 = config value)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*synth) cmd_synth(scene, synth_out, synth_seed, size, views, n);
        if (*trn) {
            RunConfig cfg = config_or_default(config);
            if (dump) {
                if (!data.empty()) cfg.data = data;
                if (!train_out.empty()) cfg.out = train_out;
                std::cout << to_json(cfg).dump(2) << "\n";
                return 0;
            }
            cmd_train(cfg, data, train_out);
        }
        if (*rnd) cmd_render(ckpt, pose, render_out, no_islm, render_data);
        if (*evl) cmd_eval(eval_ckpt, eval_data, eval_csv, eval_no_islm);
        if (*abl) cmd_ablate(config_or_default(abl_config), abl_data, abl_out, modes, ks, k_iterations);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
