#pragma once

// Photometric loss, gradients through the render/blur pipeline for field,
// islm and pose-twist parameters, adaptive-moment updates and the training
// loop.
//
// Reverse mode covers the networks and compositing (engine.hpp). The pose
// chain start/end twists -> interpolated virtual pose is a 12-input map, so
// its Jacobian is taken in forward mode and contracted with the per-ray
// origin/direction adjoints.

#include "isnerf/dataset.hpp"
#include "isnerf/metrics.hpp"

#include <unsupported/Eigen/AutoDiff>

#include <chrono>
#include <fstream>
#include <map>

namespace isnerf {

enum class LossReduction { sum, mean };

// Squared error summed over pixels and channels (or averaged with mean).
inline double photometric_loss(std::span<const double> pred, std::span<const double> gt,
                               LossReduction reduction = LossReduction::sum) {
    if (pred.size() != gt.size()) throw ShapeMismatch("prediction and target batches differ in size");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - gt[i];
        sum += d * d;
    }
    if (reduction == LossReduction::mean && !pred.empty()) sum /= double(pred.size());
    return sum;
}

// ---------------------------------------------------------------------------
// Pose chain

using PoseTwistVector = std::array<double, 12>;  // start (omega, v), end (omega, v)

struct VirtualPose {
    Posed pose;
    Eigen::Matrix<double, 12, 12> jacobian;  // rows: rotation (row-major) then translation
};

inline Posed perturb(const Posed& base, const double* xi) {
    return compose(base, se3_exp(Twistd(Vec3d(xi[0], xi[1], xi[2]), Vec3d(xi[3], xi[4], xi[5]))));
}

inline std::pair<Posed, Posed> exposure_endpoints(const Posed& start0, const Posed& end0, const PoseTwistVector& delta) {
    return {perturb(start0, delta.data()), perturb(end0, delta.data() + 6)};
}

inline std::vector<VirtualPose> virtual_poses_with_jacobian(const Posed& start0, const Posed& end0,
                                                            const PoseTwistVector& delta, int n, bool inclusive) {
    using Jet = Eigen::AutoDiffScalar<Eigen::Matrix<double, 12, 1>>;
    Jet x[12];
    for (int i = 0; i < 12; ++i) x[i] = Jet(delta[std::size_t(i)], 12, i);
    const Twist<Jet> ds(Vec3<Jet>(x[0], x[1], x[2]), Vec3<Jet>(x[3], x[4], x[5]));
    const Twist<Jet> de(Vec3<Jet>(x[6], x[7], x[8]), Vec3<Jet>(x[9], x[10], x[11]));
    const Pose<Jet> start = compose(pose_cast<Jet>(start0), se3_exp(ds));
    const Pose<Jet> end = compose(pose_cast<Jet>(end0), se3_exp(de));

    std::vector<VirtualPose> out(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) {
        const Pose<Jet> T = interpolate_pose(start, end, exposure_fraction(t, n, inclusive));
        VirtualPose& vp = out[std::size_t(t)];
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                vp.pose.rotation(r, c) = T.rotation(r, c).value();
                vp.jacobian.row(r * 3 + c) = T.rotation(r, c).derivatives().transpose();
            }
            vp.pose.translation(r) = T.translation(r).value();
            vp.jacobian.row(9 + r) = T.translation(r).derivatives().transpose();
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// State

struct Hyper {
    double lr_field = 5e-4;
    double lr_islm = 5e-4;
    double lr_pose = 1e-3;
    double lr_decay = 0.1;  // total decay factor over the run
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long total_steps = 20000;

    double schedule(long step) const {
        return total_steps > 0 ? std::pow(lr_decay, double(step) / double(total_steps)) : 1.0;
    }
};

struct Moments {
    std::vector<double> m, v;
    void resize(std::size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
    }
};

template <typename Scalar>
struct TrainState {
    RenderModel<Scalar> model;
    std::vector<Posed> initial_start, initial_end;  // pose estimates the twists are relative to
    std::vector<PoseTwistVector> twists;
    Moments field_moments, islm_moments, pose_moments;  // field = coarse then fine
    long step = 0;
    std::uint64_t seed = 0;

    std::size_t view_count() const { return twists.size(); }

    std::pair<Posed, Posed> endpoints(std::size_t view) const {
        return exposure_endpoints(initial_start[view], initial_end[view], twists[view]);
    }
};

template <typename Scalar>
struct GradientBundle {
    std::vector<Scalar> coarse, fine, islm;
    std::vector<PoseTwistVector> twists;

    static GradientBundle zeros_like(const TrainState<Scalar>& s) {
        GradientBundle g;
        g.coarse.assign(s.model.coarse.size(), Scalar(0));
        g.fine.assign(s.model.fine.size(), Scalar(0));
        g.islm.assign(s.model.islm.size(), Scalar(0));
        g.twists.assign(s.twists.size(), PoseTwistVector{});
        return g;
    }

    bool all_finite() const {
        auto finite = [](const auto& v) {
            return std::all_of(v.begin(), v.end(), [](auto x) { return std::isfinite(double(x)); });
        };
        if (!finite(coarse) || !finite(fine) || !finite(islm)) return false;
        for (const auto& t : twists)
            if (!finite(t)) return false;
        return true;
    }
};

template <typename Scalar>
TrainState<Scalar> make_initial_state(const FieldShape& field_shape, const IslmShape& islm_shape,
                                      std::vector<Posed> starts, std::vector<Posed> ends, std::uint64_t seed) {
    if (starts.size() != ends.size()) throw LengthMismatch("start/end pose counts differ");
    TrainState<Scalar> s;
    s.seed = seed;
    s.model.coarse = init_field_params<Scalar>(field_shape, splitmix64(seed + 1));
    s.model.fine = init_field_params<Scalar>(field_shape, splitmix64(seed + 2));
    s.model.islm = init_islm_params<Scalar>(islm_shape, splitmix64(seed + 3));
    s.initial_start = std::move(starts);
    s.initial_end = std::move(ends);
    s.twists.assign(s.initial_start.size(), PoseTwistVector{});
    s.field_moments.resize(s.model.coarse.size() + s.model.fine.size());
    s.islm_moments.resize(s.model.islm.size());
    s.pose_moments.resize(12 * s.twists.size());
    return s;
}

// ---------------------------------------------------------------------------
// Loss and gradients over a pixel batch

struct PixelSample {
    std::size_t view = 0;
    int x = 0;
    int y = 0;
    Vec3d target = Vec3d::Zero();
};

struct ObjectiveOptions {
    RenderConfig render;
    LossReduction reduction = LossReduction::sum;
    bool inclusive_endpoint = false;
    bool train_coarse = true;
};

struct LossResult {
    double loss = 0.0;
    double fine_loss = 0.0;
    double coarse_loss = 0.0;
    std::vector<Vec3d> blurred;  // fine prediction per pixel
};

// Forward (and optionally reverse) pass of the blurred-pixel loss for one
// batch. Plans fix sample placement so the loss is a deterministic function
// of the trainables; pass make_plans=false to reuse them.
template <typename Scalar>
class BlurObjective {
public:
    BlurObjective(const TrainState<Scalar>& state, const std::vector<TrainView>& views, ObjectiveOptions opt)
        : state_(state), views_(views), opt_(std::move(opt)) {}

    LossResult forward(std::span<const PixelSample> batch, std::vector<RayPlan>& plans, bool make_plans,
                       std::uint64_t seed) {
        batch_.assign(batch.begin(), batch.end());
        build_rays();
        renderer_.emplace(state_.model.refs(), opt_.render);
        renderer_->forward(origins_, dirs_, plans, make_plans, seed);

        LossResult res;
        const Batch<Scalar>& fine = renderer_->color();
        const Batch<Scalar>& coarse = renderer_->coarse_color();
        res.blurred.resize(batch_.size());
        blur_fine_.assign(batch_.size(), Vec3d::Zero());
        blur_coarse_.assign(batch_.size(), Vec3d::Zero());
        std::vector<double> pred, predc, gt;
        pred.reserve(3 * batch_.size());
        for (std::size_t b = 0; b < batch_.size(); ++b) {
            const std::size_t first = ray_offset_[b], count = ray_offset_[b + 1] - first;
            Vec3d f = Vec3d::Zero(), c = Vec3d::Zero();
            for (std::size_t r = first; r < first + count; ++r) {
                f += fine.col(Eigen::Index(r)).template cast<double>();
                c += coarse.col(Eigen::Index(r)).template cast<double>();
            }
            f /= double(count);
            c /= double(count);
            blur_fine_[b] = f;
            blur_coarse_[b] = c;
            res.blurred[b] = f;
            for (int ch = 0; ch < 3; ++ch) {
                pred.push_back(f[ch]);
                predc.push_back(c[ch]);
                gt.push_back(batch_[b].target[ch]);
            }
        }
        res.fine_loss = photometric_loss(pred, gt, opt_.reduction);
        res.coarse_loss = opt_.train_coarse ? photometric_loss(predc, gt, opt_.reduction) : 0.0;
        res.loss = res.fine_loss + res.coarse_loss;
        return res;
    }

    GradientBundle<Scalar> backward() {
        GradientBundle<Scalar> g = GradientBundle<Scalar>::zeros_like(state_);
        const Eigen::Index R = origins_.cols();
        Batch<Scalar> dfine(3, R), dcoarse(3, R);
        const double scale = opt_.reduction == LossReduction::mean ? 1.0 / double(3 * batch_.size()) : 1.0;
        for (std::size_t b = 0; b < batch_.size(); ++b) {
            const std::size_t first = ray_offset_[b], count = ray_offset_[b + 1] - first;
            const Vec3d gf = 2.0 * scale * (blur_fine_[b] - batch_[b].target) / double(count);
            const Vec3d gc = opt_.train_coarse ? Vec3d(2.0 * scale * (blur_coarse_[b] - batch_[b].target) / double(count))
                                               : Vec3d::Zero();
            for (std::size_t r = first; r < first + count; ++r) {
                dfine.col(Eigen::Index(r)) = gf.cast<Scalar>();
                dcoarse.col(Eigen::Index(r)) = gc.cast<Scalar>();
            }
        }
        Batch<Scalar> d_o, d_d;
        renderer_->backward(dcoarse, dfine, {g.coarse, g.fine, g.islm}, &d_o, &d_d);

        // contract per-ray adjoints with the pose-chain Jacobians
        for (Eigen::Index r = 0; r < R; ++r) {
            const RayLink& link = links_[std::size_t(r)];
            Eigen::Matrix<double, 12, 1> adj;
            const Vec3d dd = d_d.col(r).template cast<double>();
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) adj(i * 3 + j) = dd(i) * link.cam_dir(j);
            adj.tail<3>() = d_o.col(r).template cast<double>();
            const Eigen::Matrix<double, 12, 1> gt = poses_.at(link.view)[std::size_t(link.t)].jacobian.transpose() * adj;
            for (int i = 0; i < 12; ++i) g.twists[link.view][std::size_t(i)] += gt(i);
        }
        if (!g.all_finite()) throw NonFiniteGradient("non-finite gradient at step " + std::to_string(state_.step));
        return g;
    }

private:
    struct RayLink {
        std::size_t view = 0;
        int t = 0;
        Vec3d cam_dir;
    };

    void build_rays() {
        poses_.clear();
        for (const auto& px : batch_) {
            if (px.view >= views_.size()) throw InvalidArgument("pixel sample refers to a missing view");
            if (poses_.count(px.view)) continue;
            const TrainView& v = views_[px.view];
            poses_.emplace(px.view, virtual_poses_with_jacobian(state_.initial_start[px.view], state_.initial_end[px.view],
                                                                state_.twists[px.view], v.n, opt_.inclusive_endpoint));
        }
        ray_offset_.assign(batch_.size() + 1, 0);
        for (std::size_t b = 0; b < batch_.size(); ++b)
            ray_offset_[b + 1] = ray_offset_[b] + std::size_t(views_[batch_[b].view].n);
        const Eigen::Index R = Eigen::Index(ray_offset_.back());
        origins_.resize(3, R);
        dirs_.resize(3, R);
        links_.resize(std::size_t(R));
        for (std::size_t b = 0; b < batch_.size(); ++b) {
            const PixelSample& px = batch_[b];
            const Vec3d cam = camera_direction(views_[px.view].intrinsics, px.x, px.y);
            const auto& vps = poses_.at(px.view);
            for (std::size_t t = 0; t < vps.size(); ++t) {
                const Eigen::Index r = Eigen::Index(ray_offset_[b] + t);
                origins_.col(r) = vps[t].pose.translation.cast<Scalar>();
                dirs_.col(r) = (vps[t].pose.rotation * cam).cast<Scalar>();
                links_[std::size_t(r)] = {px.view, int(t), cam};
            }
        }
    }

    const TrainState<Scalar>& state_;
    const std::vector<TrainView>& views_;
    ObjectiveOptions opt_;
    std::vector<PixelSample> batch_;
    std::map<std::size_t, std::vector<VirtualPose>> poses_;
    std::vector<std::size_t> ray_offset_;
    std::vector<RayLink> links_;
    Batch<Scalar> origins_, dirs_;
    std::optional<BatchRenderer<Scalar>> renderer_;
    std::vector<Vec3d> blur_fine_, blur_coarse_;
};

template <typename Scalar>
std::pair<LossResult, GradientBundle<Scalar>> backward(std::span<const PixelSample> batch, const TrainState<Scalar>& state,
                                                       const std::vector<TrainView>& views, const ObjectiveOptions& opt,
                                                       std::vector<RayPlan>* plans_out = nullptr) {
    BlurObjective<Scalar> objective(state, views, opt);
    std::vector<RayPlan> plans;
    LossResult res = objective.forward(batch, plans, true, splitmix64(state.seed ^ (0x5eedull + std::uint64_t(state.step))));
    GradientBundle<Scalar> g = objective.backward();
    if (plans_out) *plans_out = std::move(plans);
    return {std::move(res), std::move(g)};
}

// ---------------------------------------------------------------------------
// Adaptive-moment update

// One bias-corrected adaptive-moment update of a parameter group at step t >= 1.
template <typename Scalar>
void adam_update(std::span<Scalar> params, std::span<const Scalar> grads, std::span<double> m, std::span<double> v,
                double lr, const Hyper& h, long t) {
    const double bc1 = 1.0 - std::pow(h.beta1, double(t));
    const double bc2 = 1.0 - std::pow(h.beta2, double(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = double(grads[i]);
        m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g;
        v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g * g;
        const double mh = m[i] / bc1, vh = v[i] / bc2;
        params[i] = Scalar(double(params[i]) - lr * mh / (std::sqrt(vh) + h.eps));
    }
}

struct StepOptions {
    bool update_fields = true;
    bool update_islm = true;
    bool update_poses = true;
};

template <typename Scalar>
void step(TrainState<Scalar>& s, const GradientBundle<Scalar>& g, const Hyper& h, const StepOptions& opt = {}) {
    if (!g.all_finite()) throw NonFiniteGradient("refusing to apply a non-finite gradient");
    if (g.coarse.size() != s.model.coarse.size() || g.fine.size() != s.model.fine.size() ||
        g.islm.size() != s.model.islm.size() || g.twists.size() != s.twists.size())
        throw ShapeMismatch("gradient bundle does not match the train state");
    const double decay = h.schedule(s.step);
    ++s.step;
    const long t = s.step;
    if (opt.update_fields) {
        const std::size_t nc = s.model.coarse.size();
        std::span<double> m(s.field_moments.m), v(s.field_moments.v);
        adam_update<Scalar>(s.model.coarse.values, g.coarse, m.first(nc), v.first(nc), h.lr_field * decay, h, t);
        adam_update<Scalar>(s.model.fine.values, g.fine, m.subspan(nc), v.subspan(nc), h.lr_field * decay, h, t);
    }
    if (opt.update_islm)
        adam_update<Scalar>(s.model.islm.values, g.islm, s.islm_moments.m, s.islm_moments.v, h.lr_islm * decay, h, t);
    if (opt.update_poses) {
        std::vector<double> flat_p, flat_g;
        for (std::size_t i = 0; i < s.twists.size(); ++i) {
            flat_p.insert(flat_p.end(), s.twists[i].begin(), s.twists[i].end());
            flat_g.insert(flat_g.end(), g.twists[i].begin(), g.twists[i].end());
        }
        adam_update<double>(flat_p, flat_g, s.pose_moments.m, s.pose_moments.v, h.lr_pose * decay, h, t);
        for (std::size_t i = 0; i < s.twists.size(); ++i)
            std::copy_n(flat_p.begin() + std::ptrdiff_t(12 * i), 12, s.twists[i].begin());
    }
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainConfig {
    Hyper hyper;
    long iterations = 20000;
    int batch_rays = 1024;  // rays per step; pixels per step = batch_rays / n
    long islm_warmup = 1000;
    bool train_scatter = true;   // off: the no-islm-train ablation
    bool eval_scatter = true;    // off: render held-out views without scattering
    bool optimize_poses = true;
    LossReduction reduction = LossReduction::sum;
    bool inclusive_endpoint = false;
    double pose_noise_rotation = 0.005;     // radians, perturbation of the initial estimates
    double pose_noise_translation = 0.005;  // world units
    long eval_every = 500;
    int eval_views = 0;  // 0 = all held-out views
    std::uint64_t seed = 0;
};

struct MetricsRow {
    long iteration = 0;
    double loss = 0.0;
    double psnr_holdout = 0.0;
    double lr = 0.0;
    double wall_seconds = 0.0;
};

inline void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "iteration,loss,psnr_holdout,lr,wall_seconds\n";
    out.precision(10);
    for (const auto& r : rows)
        out << r.iteration << ',' << r.loss << ',' << r.psnr_holdout << ',' << r.lr << ',' << r.wall_seconds << '\n';
}

// Sharp render of a held-out view, clamped to [0, 1].
template <typename Scalar>
ImageBuffer render_holdout(const TrainState<Scalar>& s, const HoldoutView& h, const RenderConfig& cfg,
                           std::uint64_t seed) {
    return clamped(render_image<Scalar>(h.pose, h.intrinsics, s.model.refs(), cfg, seed));
}

template <typename Scalar>
double holdout_psnr(const TrainState<Scalar>& s, const Dataset& data, const RenderConfig& cfg, int max_views,
                    std::uint64_t seed) {
    if (data.holdout.empty()) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t count = max_views > 0 ? std::min<std::size_t>(std::size_t(max_views), data.holdout.size())
                                            : data.holdout.size();
    double sum = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        // evenly spread subset
        const std::size_t idx = i * data.holdout.size() / count;
        sum += psnr(render_holdout(s, data.holdout[idx], cfg, seed), data.holdout[idx].sharp);
    }
    return sum / double(count);
}

inline std::pair<std::vector<Posed>, std::vector<Posed>> noisy_initial_poses(const Dataset& data, const TrainConfig& cfg) {
    Rng rng = make_stream(cfg.seed, 0x905e);
    std::normal_distribution<double> n(0.0, 1.0);
    auto jitter = [&](const Posed& p) {
        if (cfg.pose_noise_rotation == 0.0 && cfg.pose_noise_translation == 0.0) return p;
        const Vec3d w(n(rng), n(rng), n(rng)), v(n(rng), n(rng), n(rng));
        return compose(p, se3_exp(Twistd(w * cfg.pose_noise_rotation, v * cfg.pose_noise_translation)));
    };
    std::vector<Posed> starts, ends;
    for (const auto& v : data.views) {
        starts.push_back(jitter(v.start));
        ends.push_back(jitter(v.end));
    }
    return {starts, ends};
}

template <typename Scalar>
std::vector<PixelSample> sample_pixels(const Dataset& data, int count, Rng& rng) {
    std::vector<PixelSample> batch(static_cast<std::size_t>(count));
    std::uniform_int_distribution<std::size_t> pick_view(0, data.views.size() - 1);
    for (auto& px : batch) {
        px.view = pick_view(rng);
        const TrainView& v = data.views[px.view];
        px.x = std::uniform_int_distribution<int>(0, v.blurred.width - 1)(rng);
        px.y = std::uniform_int_distribution<int>(0, v.blurred.height - 1)(rng);
        px.target = v.blurred.at(px.x, px.y);
    }
    return batch;
}

struct TrainCallbacks {
    std::function<void(const MetricsRow&)> on_log;
};

template <typename Scalar>
struct TrainResult {
    TrainState<Scalar> state;
    std::vector<MetricsRow> log;
};

template <typename Scalar>
TrainResult<Scalar> train(const Dataset& data, const RenderConfig& render, const FieldShape& field_shape,
                          const IslmShape& islm_shape, const TrainConfig& cfg, const TrainCallbacks& cb = {}) {
    data.validate();
    render.validate();
    auto [starts, ends] = noisy_initial_poses(data, cfg);
    TrainResult<Scalar> out{make_initial_state<Scalar>(field_shape, islm_shape, std::move(starts), std::move(ends), cfg.seed),
                            {}};
    TrainState<Scalar>& state = out.state;
    Hyper hyper = cfg.hyper;
    hyper.total_steps = cfg.iterations;

    double mean_n = 0.0;
    for (const auto& v : data.views) mean_n += v.n;
    mean_n /= double(data.views.size());
    const int pixels = std::max(1, int(std::lround(cfg.batch_rays / mean_n)));

    RenderConfig eval_cfg = render;
    eval_cfg.scattering_enabled = render.scattering_enabled && cfg.train_scatter && cfg.eval_scatter;
    const auto t0 = std::chrono::steady_clock::now();
    double window_loss = 0.0;
    long window = 0;

    for (long it = 0; it < cfg.iterations; ++it) {
        Rng rng = make_stream(cfg.seed, 0x100000ull + std::uint64_t(it));
        const std::vector<PixelSample> batch = sample_pixels<Scalar>(data, pixels, rng);
        ObjectiveOptions opt;
        opt.render = render;
        opt.render.scattering_enabled = render.scattering_enabled && cfg.train_scatter && it >= cfg.islm_warmup;
        opt.reduction = cfg.reduction;
        opt.inclusive_endpoint = cfg.inclusive_endpoint;
        auto [res, grads] = backward<Scalar>(batch, state, data.views, opt);
        StepOptions so;
        so.update_islm = opt.render.scattering_enabled;
        so.update_poses = cfg.optimize_poses;
        step(state, grads, hyper, so);
        window_loss += res.loss;
        ++window;

        const bool last = it + 1 == cfg.iterations;
        if ((cfg.eval_every > 0 && (it + 1) % cfg.eval_every == 0) || last) {
            MetricsRow row;
            row.iteration = it + 1;
            row.loss = window_loss / double(window);
            row.psnr_holdout = holdout_psnr(state, data, eval_cfg, cfg.eval_views, cfg.seed);
            row.lr = hyper.lr_field * hyper.schedule(state.step);
            row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            out.log.push_back(row);
            if (cb.on_log) cb.on_log(row);
            window_loss = 0.0;
            window = 0;
        }
    }
    return out;
}

}  // namespace isnerf
