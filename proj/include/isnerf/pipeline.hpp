#pragma once

// End-to-end runs shared by the command line and the acceptance suite:
// training from a RunConfig, held-out evaluation, and the ablation sweep.

#include "isnerf/checkpoint.hpp"
#include "isnerf/dataset_io.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace isnerf {

struct EvalRow {
    std::string file;
    double psnr = 0.0;
    double ssim = 0.0;
};

struct EvalSummary {
    std::vector<EvalRow> rows;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    // PSNR of the pooled squared error over all masked pixels; NaN without masks.
    double mirror_psnr = std::numeric_limits<double>::quiet_NaN();
    double rod_psnr = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

struct MaskedError {
    double sum = 0.0;
    std::size_t count = 0;

    void add(const ImageBuffer& a, const ImageBuffer& b, const PixelMask& m) {
        if (m.bits.empty()) return;
        if (m.width != a.width || m.height != a.height) throw DimensionMismatch("mask does not match image");
        for (std::size_t p = 0; p < a.pixel_count(); ++p) {
            if (!m.bits[p]) continue;
            for (int c = 0; c < 3; ++c) {
                const double d = a.data[3 * p + std::size_t(c)] - b.data[3 * p + std::size_t(c)];
                sum += d * d;
            }
            count += 3;
        }
    }
    double psnr() const { return count ? mse_to_psnr(sum / double(count)) : std::numeric_limits<double>::quiet_NaN(); }
};

}  // namespace detail

template <typename Scalar>
EvalSummary evaluate_holdout(const RenderModel<Scalar>& model, const Dataset& data, const RenderConfig& render,
                             std::uint64_t seed) {
    EvalSummary s;
    detail::MaskedError mirror, rod;
    for (const HoldoutView& h : data.holdout) {
        const ImageBuffer img = clamped(render_image<Scalar>(h.pose, h.intrinsics, model.refs(), render, seed));
        s.rows.push_back({h.file, psnr(img, h.sharp), ssim(img, h.sharp)});
        mirror.add(img, h.sharp, h.mirror_mask);
        rod.add(img, h.sharp, h.rod_mask);
    }
    for (const auto& r : s.rows) {
        s.mean_psnr += r.psnr / double(s.rows.size());
        s.mean_ssim += r.ssim / double(s.rows.size());
    }
    s.mirror_psnr = mirror.psnr();
    s.rod_psnr = rod.psnr();
    return s;
}

inline std::string format_metric(double v) {
    if (std::isnan(v)) return "n/a";
    if (std::isinf(v)) return "inf";
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << v;
    return os.str();
}

inline void write_eval_csv(const std::filesystem::path& path, const EvalSummary& s) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "image,psnr,ssim,lpips\n";
    for (const auto& r : s.rows) out << r.file << "," << format_metric(r.psnr) << "," << format_metric(r.ssim) << ",n/a\n";
    out << "mean," << format_metric(s.mean_psnr) << "," << format_metric(s.mean_ssim) << ",n/a\n";
    if (!out) throw IoError("failed writing " + path.string());
}

inline void print_eval_table(std::ostream& os, const EvalSummary& s) {
    os << std::left << std::setw(24) << "image" << std::setw(12) << "PSNR" << std::setw(12) << "SSIM" << "LPIPS\n";
    for (const auto& r : s.rows)
        os << std::setw(24) << r.file << std::setw(12) << format_metric(r.psnr) << std::setw(12) << format_metric(r.ssim)
           << "n/a\n";
    os << std::setw(24) << "mean" << std::setw(12) << format_metric(s.mean_psnr) << std::setw(12)
       << format_metric(s.mean_ssim) << "n/a\n";
    os << "mirror-mask PSNR " << format_metric(s.mirror_psnr) << ", rod-mask PSNR " << format_metric(s.rod_psnr) << "\n";
}

template <typename Scalar>
struct RunResult {
    TrainResult<Scalar> train;
    double seconds = 0.0;
};

template <typename Scalar>
RunResult<Scalar> run_training(const RunConfig& cfg, const Dataset& data, const TrainCallbacks& cb = {}) {
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    const auto t0 = std::chrono::steady_clock::now();
    RunResult<Scalar> r{train<Scalar>(data, cfg.resolved_render(data), cfg.field, cfg.islm, tc, cb), 0.0};
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

// Render settings for held-out views given the training configuration.
inline RenderConfig eval_render_settings(const RunConfig& cfg, const Dataset& data, bool scatter) {
    RenderConfig r = cfg.resolved_render(data);
    r.scattering_enabled = r.scattering_enabled && scatter && cfg.train.train_scatter;
    return r;
}

// Ablation sweep

struct AblationRow {
    std::string mode;
    int paths = 0;
    long iterations = 0;
    double train_seconds = 0.0;
    EvalSummary eval;
};

inline const std::vector<std::string>& ablation_modes() {
    static const std::vector<std::string> modes{"full", "no-islm-train", "no-islm-render", "single-point", "k-sweep"};
    return modes;
}

struct AblationOptions {
    std::vector<std::string> modes{"full", "no-islm-train", "no-islm-render", "single-point", "k-sweep"};
    std::vector<int> k_values{1, 3, 5, 7, 9};
    long k_iterations = 0;  // 0 = same as the main runs
    std::filesystem::path out;  // per-run metrics CSVs land here when set
    std::function<void(const std::string&)> log;
};

template <typename Scalar>
std::vector<AblationRow> run_ablation(const RunConfig& base, const Dataset& data, const AblationOptions& opt) {
    for (const auto& m : opt.modes)
        if (std::find(ablation_modes().begin(), ablation_modes().end(), m) == ablation_modes().end())
            throw ConfigError("unknown ablation mode '" + m + "'");
    auto wants = [&](const char* m) { return std::find(opt.modes.begin(), opt.modes.end(), m) != opt.modes.end(); };
    auto say = [&](const std::string& s) {
        if (opt.log) opt.log(s);
    };
    std::vector<AblationRow> rows;
    auto record = [&](const std::string& mode, const RunConfig& cfg, const RunResult<Scalar>& run, bool scatter) {
        AblationRow row;
        row.mode = mode;
        row.paths = cfg.render.scatter.paths;
        row.iterations = cfg.train.iterations;
        row.train_seconds = run.seconds;
        row.eval = evaluate_holdout(run.train.state.model, data, eval_render_settings(cfg, data, scatter), cfg.seed);
        if (!opt.out.empty()) {
            std::string tag = mode;
            if (mode == "k-sweep") tag += "-" + std::to_string(row.paths);
            write_metrics_csv(opt.out / ("metrics_" + tag + ".csv"), run.train.log);
        }
        say(mode + " K=" + std::to_string(row.paths) + ": PSNR " + format_metric(row.eval.mean_psnr) + " mirror " +
            format_metric(row.eval.mirror_psnr) + " rod " + format_metric(row.eval.rod_psnr) + " (" +
            format_metric(run.seconds) + " s)");
        rows.push_back(row);
    };
    auto run = [&](const std::string& what, const RunConfig& cfg) {
        say("training " + what);
        return run_training<Scalar>(cfg, data);
    };

    if (wants("full") || wants("no-islm-render")) {
        const RunResult<Scalar> full = run("full", base);
        if (wants("full")) record("full", base, full, true);
        if (wants("no-islm-render")) record("no-islm-render", base, full, false);
    }
    if (wants("no-islm-train")) {
        RunConfig c = base;
        c.train.train_scatter = false;
        record("no-islm-train", c, run("no-islm-train", c), true);
    }
    if (wants("single-point")) {
        RunConfig c = base;
        c.render.scatter.mode = ScatterMode::single_point;
        c.islm.heads = c.render.scatter.paths;
        record("single-point", c, run("single-point", c), true);
    }
    if (wants("k-sweep")) {
        for (int k : opt.k_values) {
            RunConfig c = base;
            c.render.scatter.paths = k;
            if (opt.k_iterations > 0) c.train.iterations = opt.k_iterations;
            c.render.validate();
            record("k-sweep", c, run("k-sweep K=" + std::to_string(k), c), true);
        }
    }
    return rows;
}

inline void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "mode,paths,iterations,train_seconds,psnr,ssim,lpips,psnr_mirror,psnr_rod\n";
    for (const auto& r : rows)
        out << r.mode << "," << r.paths << "," << r.iterations << "," << format_metric(r.train_seconds) << ","
            << format_metric(r.eval.mean_psnr) << "," << format_metric(r.eval.mean_ssim) << ",n/a,"
            << format_metric(r.eval.mirror_psnr) << "," << format_metric(r.eval.rod_psnr) << "\n";
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace isnerf
