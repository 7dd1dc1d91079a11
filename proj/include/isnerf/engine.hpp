#pragma once

// Batched ray pipeline over the network fields: coarse pass, fine pass and
// scattering paths evaluated as whole-batch network calls, with a matching
// reverse pass producing parameter gradients and per-ray origin/direction
// adjoints. Sample placement (the RayPlan) is a constant to the reverse pass.

#include "isnerf/renderer.hpp"

namespace isnerf {

struct RayPlan {
    bool hit = false;
    double t_near = 0.0;
    double t_far = 0.0;
    std::vector<double> coarse_t;
    std::vector<double> fine_t;
    std::vector<int> origins;  // fine-sample index of each scattering path
};

// A field network over the scene box. Positions are normalized by the box;
// with masking on, density outside the box is zero. Primary samples lie in
// the box by construction and are evaluated unmasked.
template <typename Scalar>
class BoxedField {
public:
    BoxedField(const FieldParams<Scalar>& params, const Aabb& box)
        : net_(params), box_(box), center_(box.center().cast<Scalar>()),
          inv_half_(box.half_extent().cwiseInverse().cast<Scalar>()) {}

    struct Cache {
        FieldCache<Scalar> net;
        Batch<Scalar> mask;   // 1 x N
        Batch<Scalar> sigma;  // masked density, 1 x N
    };

    void forward(const Batch<Scalar>& x, const Batch<Scalar>& d, Cache& c, bool mask) const {
        const Eigen::Index n = x.cols();
        c.mask.resize(1, n);
        Batch<Scalar> xn(3, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            bool inside = true;
            for (int a = 0; a < 3 && mask; ++a) {
                const double v = double(x(a, i));
                inside = inside && v >= box_.lo[a] && v <= box_.hi[a];
            }
            c.mask(0, i) = inside ? Scalar(1) : Scalar(0);
            xn.col(i) = (x.col(i) - center_).cwiseProduct(inv_half_);
        }
        net_.forward(xn, d, c.net);
        c.sigma = c.net.sigma.cwiseProduct(c.mask);
    }

    void backward(const Cache& c, const Batch<Scalar>& dsigma, const Batch<Scalar>& dcolor, std::span<Scalar> grad,
                  Batch<Scalar>* dx, Batch<Scalar>* dd) const {
        net_.backward(c.net, dsigma.cwiseProduct(c.mask), dcolor, grad, dx, dd);
        if (dx) *dx = inv_half_.asDiagonal() * (*dx);
    }

    const Vec3<Scalar>& inv_half() const { return inv_half_; }
    const Vec3<Scalar>& center() const { return center_; }

private:
    FieldNetwork<Scalar> net_;
    Aabb box_;
    Vec3<Scalar> center_;
    Vec3<Scalar> inv_half_;
};

template <typename Scalar>
struct ModelRefs {
    const FieldParams<Scalar>* coarse = nullptr;
    const FieldParams<Scalar>* fine = nullptr;
    const IslmParams<Scalar>* islm = nullptr;  // may be null when scattering is off
};

template <typename Scalar>
struct GradRefs {
    std::span<Scalar> coarse, fine, islm;
};

template <typename Scalar>
class BatchRenderer {
public:
    BatchRenderer(const ModelRefs<Scalar>& models, const RenderConfig& cfg)
        : cfg_(cfg), coarse_(*models.coarse, cfg.scene_box), fine_(*models.fine, cfg.scene_box), islm_params_(models.islm),
          bg_(cfg.background.cast<Scalar>()) {
        cfg_.validate();
        scatter_ = cfg_.scatters();
        if (scatter_) {
            if (!islm_params_) throw InvalidArgument("scattering enabled without islm parameters");
            islm_.emplace(*islm_params_);
            if (cfg_.scatter.mode == ScatterMode::single_point && islm_params_->shape.heads < cfg_.scatter.paths)
                throw ShapeMismatch("single-point mode needs one islm head per path");
        }
    }

    // origins/dirs: 3 x R. When make_plans is set, plans are drawn from the
    // per-ray stream (seed, streams[r]); otherwise the given plans are reused.
    void forward(const Batch<Scalar>& origins, const Batch<Scalar>& dirs, std::vector<RayPlan>& plans, bool make_plans,
                 std::uint64_t seed = 0, std::span<const std::uint64_t> streams = {}) {
        const Eigen::Index R = origins.cols();
        origins_ = origins;
        dirs_ = dirs;
        plans_ = &plans;
        if (make_plans) {
            plans.assign(std::size_t(R), RayPlan{});
            rngs_.clear();
            rngs_.reserve(std::size_t(R));
            for (Eigen::Index r = 0; r < R; ++r) {
                rngs_.push_back(make_stream(seed, streams.empty() ? std::uint64_t(r) : streams[std::size_t(r)]));
                RayPlan& p = plans[std::size_t(r)];
                const Vec3d o = origins.col(r).template cast<double>();
                const Vec3d d = dirs.col(r).template cast<double>();
                const auto span = intersect_aabb(o, d, cfg_.scene_box);
                if (!span) continue;
                p.hit = true;
                p.t_near = span->first;
                p.t_far = span->second;
                p.coarse_t = stratified_samples(Ray(o, d.normalized(), p.t_near, p.t_far), cfg_.coarse_samples,
                                                rngs_.back());
            }
        } else if (plans.size() != std::size_t(R)) {
            throw LengthMismatch("plan count does not match ray count");
        }

        coarse_pass_ = primary_pass(coarse_, [](const RayPlan& p) -> const std::vector<double>& { return p.coarse_t; });
        coarse_color_ = coarse_pass_.color;

        if (make_plans) {
            for (Eigen::Index r = 0; r < R; ++r) {
                RayPlan& p = plans[std::size_t(r)];
                if (!p.hit) continue;
                RaySampleSet s = make_sample_set(p.coarse_t, p.t_far);
                s.weights.resize(s.size());
                const std::size_t off = coarse_pass_.offset[std::size_t(r)];
                for (std::size_t i = 0; i < s.size(); ++i) s.weights[i] = double(coarse_pass_.w[off + i]);
                p.fine_t = resample_fine(s, cfg_.fine_samples, rngs_[std::size_t(r)]);
            }
        }

        fine_pass_ = primary_pass(fine_, [](const RayPlan& p) -> const std::vector<double>& { return p.fine_t; });
        primary_color_ = fine_pass_.color;
        color_ = primary_color_;

        if (scatter_) {
            if (make_plans) {
                for (Eigen::Index r = 0; r < R; ++r) {
                    RayPlan& p = plans[std::size_t(r)];
                    if (!p.hit) continue;
                    const std::size_t off = fine_pass_.offset[std::size_t(r)];
                    std::vector<double> w(p.fine_t.size());
                    for (std::size_t i = 0; i < w.size(); ++i) w[i] = double(fine_pass_.w[off + i]);
                    p.origins = select_scatter_origins(std::span<const double>(w), cfg_.scatter.paths);
                    if (cfg_.scatter.mode == ScatterMode::single_point) {
                        const int best = int(std::max_element(w.begin(), w.end()) - w.begin());
                        std::fill(p.origins.begin(), p.origins.end(), best);
                    }
                }
            }
            scatter_forward();
        }
    }

    const Batch<Scalar>& coarse_color() const { return coarse_color_; }
    const Batch<Scalar>& primary_color() const { return primary_color_; }
    const Batch<Scalar>& color() const { return color_; }

    void backward(const Batch<Scalar>& dcoarse, const Batch<Scalar>& dcolor, const GradRefs<Scalar>& grads,
                  Batch<Scalar>* dorigins, Batch<Scalar>* ddirs) {
        const Eigen::Index R = origins_.cols();
        Batch<Scalar> d_o = Batch<Scalar>::Zero(3, R);
        Batch<Scalar> d_d = Batch<Scalar>::Zero(3, R);
        const bool want_rays = dorigins || ddirs;

        std::vector<Scalar> dT_fine;
        if (scatter_) scatter_backward(dcolor, grads.islm, grads.fine, dT_fine, d_o, d_d, want_rays);
        primary_backward(fine_, fine_pass_, dcolor, dT_fine, grads.fine, d_o, d_d, want_rays);
        primary_backward(coarse_, coarse_pass_, dcoarse, {}, grads.coarse, d_o, d_d, want_rays);

        if (dorigins) *dorigins = std::move(d_o);
        if (ddirs) *ddirs = std::move(d_d);
    }

private:
    struct PrimaryPass {
        std::vector<std::size_t> offset;  // R + 1
        std::vector<Scalar> t, delta, T, w, final_T;
        typename BoxedField<Scalar>::Cache cache;
        Batch<Scalar> color;  // 3 x R
    };

    template <typename Select>
    PrimaryPass primary_pass(const BoxedField<Scalar>& field, Select select) {
        const auto& plans = *plans_;
        const std::size_t R = plans.size();
        PrimaryPass pass;
        pass.offset.assign(R + 1, 0);
        for (std::size_t r = 0; r < R; ++r) pass.offset[r + 1] = pass.offset[r] + (plans[r].hit ? select(plans[r]).size() : 0);
        const std::size_t P = pass.offset[R];
        pass.t.resize(P);
        pass.delta.resize(P);
        pass.T.resize(P);
        pass.w.resize(P);
        pass.final_T.assign(R, Scalar(1));
        Batch<Scalar> x(3, Eigen::Index(P)), d(3, Eigen::Index(P));
        for (std::size_t r = 0; r < R; ++r) {
            if (!plans[r].hit) continue;
            const std::vector<double>& ts = select(plans[r]);
            const std::vector<double> deltas = compute_deltas(ts, plans[r].t_far);
            for (std::size_t i = 0; i < ts.size(); ++i) {
                const std::size_t k = pass.offset[r] + i;
                pass.t[k] = Scalar(ts[i]);
                pass.delta[k] = Scalar(deltas[i]);
                x.col(Eigen::Index(k)) = origins_.col(Eigen::Index(r)) + pass.t[k] * dirs_.col(Eigen::Index(r));
                d.col(Eigen::Index(k)) = dirs_.col(Eigen::Index(r));
            }
        }
        field.forward(x, d, pass.cache, false);
        pass.color.resize(3, Eigen::Index(R));
        for (std::size_t r = 0; r < R; ++r) {
            const std::size_t off = pass.offset[r], n = pass.offset[r + 1] - off;
            const CompositeResult<Scalar> res =
                composite<Scalar>(std::span<const Scalar>(pass.cache.sigma.data() + off, n),
                                  std::span<const Scalar>(pass.delta.data() + off, n),
                                  std::span<const Scalar>(pass.cache.net.color.data() + 3 * off, 3 * n), bg_,
                                  std::span<Scalar>(pass.T.data() + off, n), std::span<Scalar>(pass.w.data() + off, n));
            pass.color.col(Eigen::Index(r)) = res.color;
            pass.final_T[r] = res.final_transmittance;
        }
        return pass;
    }

    void primary_backward(const BoxedField<Scalar>& field, const PrimaryPass& pass, const Batch<Scalar>& dcolor,
                          const std::vector<Scalar>& dT, std::span<Scalar> grad, Batch<Scalar>& d_o,
                          Batch<Scalar>& d_d, bool want_rays) {
        const std::size_t R = pass.offset.size() - 1;
        const std::size_t P = pass.offset[R];
        Batch<Scalar> dsigma(1, Eigen::Index(P)), dcol(3, Eigen::Index(P));
        for (std::size_t r = 0; r < R; ++r) {
            const std::size_t off = pass.offset[r], n = pass.offset[r + 1] - off;
            if (n == 0) continue;
            composite_backward<Scalar>(
                std::span<const Scalar>(pass.cache.sigma.data() + off, n), std::span<const Scalar>(pass.delta.data() + off, n),
                std::span<const Scalar>(pass.cache.net.color.data() + 3 * off, 3 * n), bg_,
                std::span<const Scalar>(pass.T.data() + off, n), std::span<const Scalar>(pass.w.data() + off, n),
                pass.final_T[r], Vec3<Scalar>(dcolor.col(Eigen::Index(r))),
                dT.empty() ? std::span<const Scalar>() : std::span<const Scalar>(dT.data() + off, n),
                std::span<Scalar>(dsigma.data() + off, n), std::span<Scalar>(dcol.data() + 3 * off, 3 * n));
        }
        if (P == 0) return;
        Batch<Scalar> dx, dd;
        field.backward(pass.cache, dsigma, dcol, grad, want_rays ? &dx : nullptr, want_rays ? &dd : nullptr);
        if (!want_rays) return;
        for (std::size_t r = 0; r < R; ++r) {
            for (std::size_t k = pass.offset[r]; k < pass.offset[r + 1]; ++k) {
                d_o.col(Eigen::Index(r)) += dx.col(Eigen::Index(k));
                d_d.col(Eigen::Index(r)) += pass.t[k] * dx.col(Eigen::Index(k)) + dd.col(Eigen::Index(k));
            }
        }
    }

    struct PathRecord {
        std::size_t ray = 0;
        int origin = 0;            // fine-sample index on the ray
        Eigen::Index column = 0;   // islm batch column
        int head = 0;
        ScatterDecisionT<Scalar> decision;
        Vec3<Scalar> x_t;
        Scalar gate = Scalar(1);
        Vec3<Scalar> term = Vec3<Scalar>::Zero();
        Scalar final_T = Scalar(1);
    };

    void scatter_forward() {
        const auto& plans = *plans_;
        const std::size_t R = plans.size();
        const int K = cfg_.scatter.paths;
        const int Nt = cfg_.scatter.samples_per_path;
        const bool single = cfg_.scatter.mode == ScatterMode::single_point;
        paths_.clear();

        // islm inputs
        std::vector<std::pair<std::size_t, int>> columns;  // (ray, fine index)
        for (std::size_t r = 0; r < R; ++r) {
            if (!plans[r].hit) continue;
            if (plans[r].origins.size() != std::size_t(K)) throw LengthMismatch("plan has wrong scatter origin count");
            if (single) columns.emplace_back(r, plans[r].origins.front());
            for (int k = 0; k < K; ++k) {
                PathRecord rec;
                rec.ray = r;
                rec.origin = plans[r].origins[std::size_t(k)];
                rec.head = single ? k : 0;
                if (!single) columns.emplace_back(r, rec.origin);
                rec.column = Eigen::Index(columns.size() - 1);
                paths_.push_back(rec);
            }
        }
        const Eigen::Index C = Eigen::Index(columns.size());
        Batch<Scalar> xn(3, C), dn(3, C);
        const SceneNormalizer norm(cfg_.scene_box);
        const Vec3<Scalar> center = norm.center.cast<Scalar>(), inv_half = norm.inv_half.cast<Scalar>();
        for (Eigen::Index c = 0; c < C; ++c) {
            const auto [r, idx] = columns[std::size_t(c)];
            const Scalar t = fine_pass_.t[fine_pass_.offset[r] + std::size_t(idx)];
            const Vec3<Scalar> x = origins_.col(Eigen::Index(r)) + t * dirs_.col(Eigen::Index(r));
            xn.col(c) = (x - center).cwiseProduct(inv_half);
            dn.col(c) = dirs_.col(Eigen::Index(r));
        }
        islm_->forward(xn, dn, islm_cache_);

        const Eigen::Index P = Eigen::Index(paths_.size()) * Nt;
        Batch<Scalar> px(3, P), pd(3, P);
        for (std::size_t k = 0; k < paths_.size(); ++k) {
            PathRecord& rec = paths_[k];
            const std::size_t fi = fine_pass_.offset[rec.ray] + std::size_t(rec.origin);
            rec.x_t = origins_.col(Eigen::Index(rec.ray)) + fine_pass_.t[fi] * dirs_.col(Eigen::Index(rec.ray));
            rec.decision = decode_decision<Scalar>(islm_cache_.raw.col(rec.column).data() + 4 * rec.head,
                                                   Vec3<Scalar>(dirs_.col(Eigen::Index(rec.ray))), cfg_.scatter.interval);
            rec.gate = cfg_.weighted_scatter ? fine_pass_.T[fi] : Scalar(1);
            for (int j = 1; j <= Nt; ++j) {
                const Eigen::Index col = Eigen::Index(k) * Nt + (j - 1);
                px.col(col) = rec.x_t + (Scalar(j) * rec.decision.interval) * rec.decision.direction;
                pd.col(col) = rec.decision.direction;
            }
        }
        fine_.forward(px, pd, scatter_cache_, true);

        scatter_T_.assign(std::size_t(P), Scalar(0));
        scatter_w_.assign(std::size_t(P), Scalar(0));
        for (std::size_t k = 0; k < paths_.size(); ++k) {
            PathRecord& rec = paths_[k];
            const std::size_t off = k * std::size_t(Nt);
            const std::vector<Scalar> deltas(std::size_t(Nt), rec.decision.interval);
            const CompositeResult<Scalar> res = composite<Scalar>(
                std::span<const Scalar>(scatter_cache_.sigma.data() + off, std::size_t(Nt)), deltas,
                std::span<const Scalar>(scatter_cache_.net.color.data() + 3 * off, 3 * std::size_t(Nt)),
                Vec3<Scalar>::Zero(), std::span<Scalar>(scatter_T_.data() + off, std::size_t(Nt)),
                std::span<Scalar>(scatter_w_.data() + off, std::size_t(Nt)));
            rec.term = res.color;
            rec.final_T = res.final_transmittance;
            color_.col(Eigen::Index(rec.ray)) += rec.gate * rec.term;
        }
    }

    void scatter_backward(const Batch<Scalar>& dcolor, std::span<Scalar> islm_grad, std::span<Scalar> fine_grad,
                          std::vector<Scalar>& dT_fine, Batch<Scalar>& d_o, Batch<Scalar>& d_d, bool want_rays) {
        const int Nt = cfg_.scatter.samples_per_path;
        const std::size_t nt = std::size_t(Nt);
        const Eigen::Index P = Eigen::Index(paths_.size()) * Nt;
        if (cfg_.weighted_scatter) dT_fine.assign(fine_pass_.t.size(), Scalar(0));

        Batch<Scalar> dsigma(1, P), dcol(3, P);
        std::vector<Scalar> dl(paths_.size(), Scalar(0));
        for (std::size_t k = 0; k < paths_.size(); ++k) {
            const PathRecord& rec = paths_[k];
            const std::size_t off = k * nt;
            const Vec3<Scalar> g = rec.gate * Vec3<Scalar>(dcolor.col(Eigen::Index(rec.ray)));
            const std::vector<Scalar> deltas(nt, rec.decision.interval);
            const Scalar* sig = scatter_cache_.sigma.data() + off;
            composite_backward<Scalar>(std::span<const Scalar>(sig, nt), deltas,
                                       std::span<const Scalar>(scatter_cache_.net.color.data() + 3 * off, 3 * nt),
                                       Vec3<Scalar>::Zero(), std::span<const Scalar>(scatter_T_.data() + off, nt),
                                       std::span<const Scalar>(scatter_w_.data() + off, nt), rec.final_T, g, {},
                                       std::span<Scalar>(dsigma.data() + off, nt),
                                       std::span<Scalar>(dcol.data() + 3 * off, 3 * nt));
            // every optical depth is sigma_j * l, so dL/dl = sum_j sigma_j dL/dsigma_j / l
            for (std::size_t j = 0; j < nt; ++j) dl[k] += sig[j] * dsigma(0, Eigen::Index(off + j));
            dl[k] /= rec.decision.interval;
            if (cfg_.weighted_scatter) {
                const std::size_t fi = fine_pass_.offset[rec.ray] + std::size_t(rec.origin);
                dT_fine[fi] += Vec3<Scalar>(dcolor.col(Eigen::Index(rec.ray))).dot(rec.term);
            }
        }

        Batch<Scalar> dx, dview;
        fine_.backward(scatter_cache_, dsigma, dcol, fine_grad, &dx, &dview);

        Batch<Scalar> draw = Batch<Scalar>::Zero(islm_cache_.raw.rows(), islm_cache_.raw.cols());
        std::vector<Vec3<Scalar>> dx_t(paths_.size(), Vec3<Scalar>::Zero());
        std::vector<Vec3<Scalar>> dds(paths_.size(), Vec3<Scalar>::Zero());
        for (std::size_t k = 0; k < paths_.size(); ++k) {
            const PathRecord& rec = paths_[k];
            Vec3<Scalar> dd_s = Vec3<Scalar>::Zero();
            Scalar dlk = dl[k];
            for (int j = 1; j <= Nt; ++j) {
                const Eigen::Index col = Eigen::Index(k) * Nt + (j - 1);
                const Vec3<Scalar> gx = dx.col(col);
                dx_t[k] += gx;
                dd_s += (Scalar(j) * rec.decision.interval) * gx + Vec3<Scalar>(dview.col(col));
                dlk += Scalar(j) * rec.decision.direction.dot(gx);
            }
            dds[k] = dd_s;
            Scalar* out = draw.col(rec.column).data() + 4 * rec.head;
            decode_decision_backward<Scalar>(islm_cache_.raw.col(rec.column).data() + 4 * rec.head, rec.decision, dd_s,
                                             dlk, cfg_.scatter.interval, out);
        }

        Batch<Scalar> dxn, ddn;
        islm_->backward(islm_cache_, draw, islm_grad, want_rays ? &dxn : nullptr, want_rays ? &ddn : nullptr);
        if (!want_rays) return;

        const Vec3<Scalar> inv_half = SceneNormalizer(cfg_.scene_box).inv_half.cast<Scalar>();
        std::vector<bool> column_done(std::size_t(islm_cache_.raw.cols()), false);
        for (std::size_t k = 0; k < paths_.size(); ++k) {
            const PathRecord& rec = paths_[k];
            const Eigen::Index r = Eigen::Index(rec.ray);
            const std::size_t fi = fine_pass_.offset[rec.ray] + std::size_t(rec.origin);
            Vec3<Scalar> gx = dx_t[k];
            if (!column_done[std::size_t(rec.column)]) {
                column_done[std::size_t(rec.column)] = true;
                gx += inv_half.cwiseProduct(Vec3<Scalar>(dxn.col(rec.column)));
                d_d.col(r) += ddn.col(rec.column);
            }
            d_o.col(r) += gx;
            d_d.col(r) += fine_pass_.t[fi] * gx;
            if (rec.decision.degenerate) d_d.col(r) += dds[k];
        }
    }

    RenderConfig cfg_;
    BoxedField<Scalar> coarse_, fine_;
    const IslmParams<Scalar>* islm_params_;
    std::optional<IslmNetwork<Scalar>> islm_;
    bool scatter_ = false;
    Vec3<Scalar> bg_;

    Batch<Scalar> origins_, dirs_;
    std::vector<RayPlan>* plans_ = nullptr;
    std::vector<Rng> rngs_;
    PrimaryPass coarse_pass_, fine_pass_;
    Batch<Scalar> coarse_color_, primary_color_, color_;

    std::vector<PathRecord> paths_;
    IslmCache<Scalar> islm_cache_;
    typename BoxedField<Scalar>::Cache scatter_cache_;
    std::vector<Scalar> scatter_T_, scatter_w_;
};

template <typename Scalar>
struct RenderModel {
    FieldParams<Scalar> coarse;
    FieldParams<Scalar> fine;
    IslmParams<Scalar> islm;

    ModelRefs<Scalar> refs() const { return {&coarse, &fine, &islm}; }
};

// One ray per pixel center; the sample stream of pixel i is (seed, i).
template <typename Scalar>
ImageBuffer render_image(const Posed& pose, const Intrinsics& k, const ModelRefs<Scalar>& models,
                         const RenderConfig& cfg, std::uint64_t seed, std::size_t chunk = 4096) {
    k.validate();
    ImageBuffer img(k.width, k.height);
    BatchRenderer<Scalar> renderer(models, cfg);
    const std::size_t total = img.pixel_count();
    std::vector<RayPlan> plans;
    for (std::size_t begin = 0; begin < total; begin += chunk) {
        const std::size_t n = std::min(chunk, total - begin);
        Batch<Scalar> o(3, Eigen::Index(n)), d(3, Eigen::Index(n));
        std::vector<std::uint64_t> streams(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t p = begin + i;
            const int px = int(p % std::size_t(k.width)), py = int(p / std::size_t(k.width));
            const CameraRay ray = camera_ray(pose, k, px, py, cfg.scene_box);
            o.col(Eigen::Index(i)) = ray.origin.cast<Scalar>();
            d.col(Eigen::Index(i)) = ray.direction.cast<Scalar>();
            streams[i] = p;
        }
        renderer.forward(o, d, plans, true, seed, streams);
        const Batch<Scalar>& c = renderer.color();
        for (std::size_t i = 0; i < n; ++i)
            for (int ch = 0; ch < 3; ++ch) img.data[3 * (begin + i) + std::size_t(ch)] = double(c(ch, Eigen::Index(i)));
    }
    return img;
}

// Analytic-field rendering through the single-ray path (ground truth, tests).
inline ImageBuffer render_image(const Posed& pose, const Intrinsics& k, const FieldPair& fields,
                                const IslmParams<double>* islm, const RenderConfig& cfg, std::uint64_t seed) {
    k.validate();
    ImageBuffer img(k.width, k.height);
    for (int py = 0; py < k.height; ++py) {
        for (int px = 0; px < k.width; ++px) {
            const std::size_t p = std::size_t(py) * std::size_t(k.width) + std::size_t(px);
            const CameraRay cr = camera_ray(pose, k, px, py, cfg.scene_box);
            if (!cr.span) {
                img.set(px, py, cfg.background);
                continue;
            }
            Rng rng = make_stream(seed, p);
            const Ray ray(cr.origin, cr.direction, cr.span->first, cr.span->second);
            img.set(px, py, render_scatter_aware(ray, fields, islm, cfg, rng));
        }
    }
    return img;
}

}  // namespace isnerf
