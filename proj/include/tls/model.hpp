#pragma once

// A small recurrent early-warning model:
//
//   e_t = W_emb x_t + b_emb                      (l1-penalized embedding)
//   r   = sigmoid(Wi_r e_t + bi_r + Wh_r h + bh_r)
//   z   = sigmoid(Wi_z e_t + bi_z + Wh_z h + bh_z)
//   n   = tanh(Wi_n e_t + bi_n + r * (Wh_n h + bh_n))
//   h_t = (1 - z) * n + z * h_{t-1}
//
// The single head emits sigmoid(w . h_t + b). The multi-horizon head emits
// sigmoid(b_1 + sum_{j<k} softplus(s_j)) for horizon k, where b_1 is the single
// head's logit and s_j = U_j . h_t + c_j, so outputs never decrease with the
// horizon and H = 1 coincides with the single head.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

#include "tls/error.hpp"
#include "tls/labels.hpp"
#include "tls/objectives.hpp"
#include "tls/random.hpp"

namespace tls {

enum class HeadKind { single, multi_horizon };

struct ModelSpec {
    std::size_t input_dim = 1;
    std::size_t embed_dim = 8;
    std::size_t hidden_dim = 16;
    HeadKind head = HeadKind::single;
    std::size_t horizon_count = 1;  // multi_horizon only
    double l1_embed = 0.0;

    std::size_t outputs() const { return head == HeadKind::single ? 1 : horizon_count; }

    void validate() const {
        detail::require(input_dim >= 1 && embed_dim >= 1 && hidden_dim >= 1, "model dimensions must be >= 1");
        detail::require(outputs() >= 1, "multi-horizon head needs at least one horizon");
        detail::require(l1_embed >= 0.0 && std::isfinite(l1_embed), "l1 penalty must be finite and >= 0");
    }
};

/// Offsets of every parameter block inside the flat parameter vector.
struct ParamLayout {
    std::size_t emb_w, emb_b, in_w, in_b, rec_w, rec_b, out_w, out_b, inc_w, inc_b, total;

    explicit ParamLayout(const ModelSpec& s) {
        const std::size_t D = s.input_dim, E = s.embed_dim, Hd = s.hidden_dim, inc = s.outputs() - 1;
        std::size_t at = 0;
        auto take = [&](std::size_t n) { const auto o = at; at += n; return o; };
        emb_w = take(E * D);
        emb_b = take(E);
        in_w = take(3 * Hd * E);
        in_b = take(3 * Hd);
        rec_w = take(3 * Hd * Hd);
        rec_b = take(3 * Hd);
        out_w = take(Hd);
        out_b = take(1);
        inc_w = take(inc * Hd);
        inc_b = take(inc);
        total = at;
    }

    std::string block_of(std::size_t index) const {
        const std::pair<std::size_t, const char*> blocks[] = {
            {inc_b, "increment_bias"}, {inc_w, "increment_weight"}, {out_b, "head_bias"}, {out_w, "head_weight"},
            {rec_b, "recurrent_bias"}, {rec_w, "recurrent_weight"}, {in_b, "input_bias"}, {in_w, "input_weight"},
            {emb_b, "embedding_bias"}, {emb_w, "embedding_weight"}};
        for (const auto& [offset, name] : blocks)
            if (index >= offset && offset < total) return name;
        return "embedding_weight";
    }
};

using ParamVector = Eigen::VectorXd;

/// Named views over a flat parameter vector (column-major matrices).
template <class Vec>
struct ParamViews {
    using Scalar = std::conditional_t<std::is_const_v<Vec>, const double, double>;
    using MatMap = Eigen::Map<std::conditional_t<std::is_const_v<Vec>, const Eigen::MatrixXd, Eigen::MatrixXd>>;
    using VecMap = Eigen::Map<std::conditional_t<std::is_const_v<Vec>, const Eigen::VectorXd, Eigen::VectorXd>>;

    MatMap emb_w, in_w, rec_w, inc_w;
    VecMap emb_b, in_b, rec_b, out_w, inc_b;
    Scalar* out_b;

    ParamViews(Vec& theta, const ModelSpec& s, const ParamLayout& l)
        : emb_w(theta.data() + l.emb_w, s.embed_dim, s.input_dim),
          in_w(theta.data() + l.in_w, 3 * s.hidden_dim, s.embed_dim),
          rec_w(theta.data() + l.rec_w, 3 * s.hidden_dim, s.hidden_dim),
          inc_w(theta.data() + l.inc_w, s.outputs() - 1, s.hidden_dim),
          emb_b(theta.data() + l.emb_b, s.embed_dim),
          in_b(theta.data() + l.in_b, 3 * s.hidden_dim),
          rec_b(theta.data() + l.rec_b, 3 * s.hidden_dim),
          out_w(theta.data() + l.out_w, s.hidden_dim),
          inc_b(theta.data() + l.inc_b, s.outputs() - 1),
          out_b(theta.data() + l.out_b) {}
};

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per block.
inline ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    const ParamLayout layout(spec);
    ParamVector theta(layout.total);
    Rng rng(seed);
    auto fill = [&](std::size_t from, std::size_t to, std::size_t fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = from; i < to; ++i) theta[i] = rng.uniform(-bound, bound);
    };
    fill(layout.emb_w, layout.in_w, spec.input_dim);
    fill(layout.in_w, layout.rec_w, spec.embed_dim);
    fill(layout.rec_w, layout.out_w, spec.hidden_dim);
    fill(layout.out_w, layout.total, spec.hidden_dim);
    return theta;
}

namespace detail {

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace detail

/// Cached activations of one stay, enough to replay the reverse pass.
struct ForwardTrace {
    Eigen::MatrixXd embed;      // E x T
    Eigen::MatrixXd hidden;     // Hd x (T + 1), column 0 is the zero state
    Eigen::MatrixXd reset, update, candidate, rec_candidate;  // Hd x T
    Eigen::MatrixXd increments; // (H - 1) x T, pre-softplus
    Eigen::MatrixXd probs;      // T x H
};

inline ForwardTrace forward_trace(const FeatureMatrix& features, const ParamVector& theta, const ModelSpec& spec) {
    spec.validate();
    const ParamLayout layout(spec);
    detail::require(static_cast<std::size_t>(theta.size()) == layout.total, "parameter vector length does not match model");
    detail::require(static_cast<std::size_t>(features.cols()) == spec.input_dim, "feature width does not match model input_dim");
    const ParamViews<const ParamVector> p(theta, spec, layout);

    const auto T = features.rows();
    const auto Hd = static_cast<Eigen::Index>(spec.hidden_dim);
    const auto H = static_cast<Eigen::Index>(spec.outputs());

    ForwardTrace tr;
    tr.embed.noalias() = p.emb_w * features.transpose();
    tr.embed.colwise() += p.emb_b;
    Eigen::MatrixXd input_gates = p.in_w * tr.embed;  // 3Hd x T
    input_gates.colwise() += p.in_b;

    tr.hidden = Eigen::MatrixXd::Zero(Hd, T + 1);
    tr.reset.resize(Hd, T);
    tr.update.resize(Hd, T);
    tr.candidate.resize(Hd, T);
    tr.rec_candidate.resize(Hd, T);
    Eigen::VectorXd rec(3 * Hd);
    for (Eigen::Index t = 0; t < T; ++t) {
        rec.noalias() = p.rec_w * tr.hidden.col(t);
        rec += p.rec_b;
        for (Eigen::Index j = 0; j < Hd; ++j) {
            const double r = detail::sigmoid(input_gates(j, t) + rec(j));
            const double z = detail::sigmoid(input_gates(Hd + j, t) + rec(Hd + j));
            const double n = std::tanh(input_gates(2 * Hd + j, t) + r * rec(2 * Hd + j));
            tr.reset(j, t) = r;
            tr.update(j, t) = z;
            tr.candidate(j, t) = n;
            tr.rec_candidate(j, t) = rec(2 * Hd + j);
            tr.hidden(j, t + 1) = (1.0 - z) * n + z * tr.hidden(j, t);
        }
    }

    const auto states = tr.hidden.rightCols(T);
    Eigen::RowVectorXd base = p.out_w.transpose() * states;
    base.array() += *p.out_b;
    tr.probs.resize(T, H);
    if (H > 1) {
        tr.increments.noalias() = p.inc_w * states;
        tr.increments.colwise() += p.inc_b;
    }
    for (Eigen::Index t = 0; t < T; ++t) {
        double logit = base(t);
        tr.probs(t, 0) = detail::sigmoid(logit);
        for (Eigen::Index k = 1; k < H; ++k) {
            logit += detail::softplus(tr.increments(k - 1, t));
            tr.probs(t, k) = detail::sigmoid(logit);
        }
    }
    return tr;
}

/// Per-step probabilities, T x outputs.
inline Eigen::MatrixXd forward(const FeatureMatrix& features, const ParamVector& theta, const ModelSpec& spec) {
    return forward_trace(features, theta, spec).probs;
}

/// Training targets for one stay: T x outputs values plus the row mask.
struct Targets {
    Eigen::MatrixXd values;
    Mask mask;

    std::size_t valid_count() const {
        std::size_t n = 0;
        for (auto m : mask) n += m;
        return n;
    }
};

inline Targets make_stay_targets(const Stay& stay, std::int64_t horizon_steps, const ObjectiveSpec& objective) {
    const LabelTrack labels = make_label_track(stay, horizon_steps);
    Targets out;
    out.mask = labels.mask();
    const auto T = static_cast<Eigen::Index>(stay.length());
    if (objective.multi_output()) {
        const HorizonGrid grid = objective.horizon_grid();
        const LabelMatrix y = horizon_labels(labels.dist_to_event, stay.event_track, grid);
        out.values.resize(T, static_cast<Eigen::Index>(grid.size()));
        for (Eigen::Index t = 0; t < T; ++t)
            for (Eigen::Index k = 0; k < out.values.cols(); ++k) out.values(t, k) = as_real(y(t, k));
    } else {
        const TargetTrack q = make_targets(labels, objective);
        out.values = Eigen::Map<const Eigen::VectorXd>(q.q.data(), T);
    }
    return out;
}

/// Summed (not averaged) data loss of one stay, each output weighted by 1/H.
inline double stay_loss(const Eigen::MatrixXd& probs, const Targets& targets, const ObjectiveSpec& objective) {
    detail::require(probs.rows() == targets.values.rows() && probs.cols() == targets.values.cols(),
                    "prediction and target shapes differ");
    const double inv_h = 1.0 / static_cast<double>(probs.cols());
    double total = 0.0;
    for (Eigen::Index t = 0; t < probs.rows(); ++t) {
        if (!targets.mask[t]) continue;
        for (Eigen::Index k = 0; k < probs.cols(); ++k) total += inv_h * objective.point(probs(t, k), targets.values(t, k)).value;
    }
    return total;
}

/// Adds scale * d(stay_loss)/d(theta) into `grad` and returns scale * stay_loss.
/// The l1 penalty is not included; see `add_l1_penalty`.
inline double accumulate_gradient(const Stay& stay, const Targets& targets, const ParamVector& theta, const ModelSpec& spec,
                                  const ObjectiveSpec& objective, double scale, ParamVector& grad) {
    const ParamLayout layout(spec);
    detail::require(static_cast<std::size_t>(grad.size()) == layout.total, "gradient vector length does not match model");
    const ForwardTrace tr = forward_trace(stay.features, theta, spec);
    detail::require(tr.probs.rows() == targets.values.rows() && tr.probs.cols() == targets.values.cols(),
                    "prediction and target shapes differ");
    const ParamViews<const ParamVector> p(theta, spec, layout);
    ParamViews<ParamVector> g(grad, spec, layout);

    const auto T = tr.probs.rows();
    const auto H = tr.probs.cols();
    const auto Hd = static_cast<Eigen::Index>(spec.hidden_dim);
    const double inv_h = 1.0 / static_cast<double>(H);

    // Output layer: d loss / d logit_k, then back through the cumulative softplus.
    double loss = 0.0;
    Eigen::MatrixXd d_logit = Eigen::MatrixXd::Zero(H, T);
    for (Eigen::Index t = 0; t < T; ++t) {
        if (!targets.mask[t]) continue;
        for (Eigen::Index k = 0; k < H; ++k) {
            const double prob = tr.probs(t, k);
            const PointLoss pl = objective.point(prob, targets.values(t, k));
            loss += scale * inv_h * pl.value;
            d_logit(k, t) = scale * inv_h * pl.d_pred * prob * (1.0 - prob);
        }
    }
    if (!std::isfinite(loss))
        throw NumericFailure("non-finite loss on stay '" + stay.id + "'");

    Eigen::RowVectorXd d_base = d_logit.colwise().sum();
    Eigen::MatrixXd d_inc;
    if (H > 1) {
        // s_j feeds logits k > j; suffix sums of d_logit give its upstream gradient.
        d_inc.resize(H - 1, T);
        for (Eigen::Index t = 0; t < T; ++t) {
            double suffix = 0.0;
            for (Eigen::Index k = H - 1; k >= 1; --k) {
                suffix += d_logit(k, t);
                d_inc(k - 1, t) = suffix * detail::sigmoid(tr.increments(k - 1, t));
            }
        }
    }

    const auto states = tr.hidden.rightCols(T);
    g.out_w.noalias() += states * d_base.transpose();
    *g.out_b += d_base.sum();
    Eigen::MatrixXd d_states = p.out_w * d_base;  // Hd x T
    if (H > 1) {
        g.inc_w.noalias() += d_inc * states.transpose();
        g.inc_b += d_inc.rowwise().sum();
        d_states.noalias() += p.inc_w.transpose() * d_inc;
    }

    // Backpropagation through time.
    Eigen::MatrixXd d_input_gates(3 * Hd, T);
    Eigen::VectorXd d_rec(3 * Hd), dh(Hd), dh_prev(Hd);
    dh_prev.setZero();
    for (Eigen::Index t = T - 1; t >= 0; --t) {
        dh = d_states.col(t) + dh_prev;
        for (Eigen::Index j = 0; j < Hd; ++j) {
            const double r = tr.reset(j, t), z = tr.update(j, t), n = tr.candidate(j, t);
            const double h_prev = tr.hidden(j, t);
            const double dn_pre = dh(j) * (1.0 - z) * (1.0 - n * n);
            const double dz_pre = dh(j) * (h_prev - n) * z * (1.0 - z);
            const double dr_pre = dn_pre * tr.rec_candidate(j, t) * r * (1.0 - r);
            d_input_gates(j, t) = dr_pre;
            d_input_gates(Hd + j, t) = dz_pre;
            d_input_gates(2 * Hd + j, t) = dn_pre;
            d_rec(j) = dr_pre;
            d_rec(Hd + j) = dz_pre;
            d_rec(2 * Hd + j) = dn_pre * r;
            dh_prev(j) = dh(j) * z;
        }
        g.rec_w.noalias() += d_rec * tr.hidden.col(t).transpose();
        g.rec_b += d_rec;
        dh_prev.noalias() += p.rec_w.transpose() * d_rec;
    }
    g.in_w.noalias() += d_input_gates * tr.embed.transpose();
    g.in_b += d_input_gates.rowwise().sum();
    const Eigen::MatrixXd d_embed = p.in_w.transpose() * d_input_gates;  // E x T
    g.emb_w.noalias() += d_embed * stay.features;
    g.emb_b += d_embed.rowwise().sum();

    for (Eigen::Index i = 0; i < grad.size(); ++i)
        if (!std::isfinite(grad[i]))
            throw NumericFailure("non-finite gradient on stay '" + stay.id + "' in block " +
                                 layout.block_of(static_cast<std::size_t>(i)) + " at index " + std::to_string(i));
    return loss;
}

/// l1_embed * ||W_emb||_1 with subgradient sign(W_emb) (sign(0) = 0).
inline double add_l1_penalty(const ParamVector& theta, const ModelSpec& spec, ParamVector* grad) {
    if (spec.l1_embed == 0.0) return 0.0;
    const ParamLayout layout(spec);
    const auto w = theta.segment(layout.emb_w, spec.embed_dim * spec.input_dim);
    if (grad) {
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            const double v = w[i];
            (*grad)[layout.emb_w + i] += spec.l1_embed * ((v > 0.0) - (v < 0.0));
        }
    }
    return spec.l1_embed * w.cwiseAbs().sum();
}

struct LossAndGradient {
    double loss = 0.0;
    ParamVector grad;
};

/// Mean masked loss over the stays (pooled over all unmasked steps) plus the
/// l1 embedding penalty, with its exact gradient.
inline LossAndGradient loss_and_gradient(std::span<const Stay* const> stays, std::span<const Targets* const> targets,
                                         const ParamVector& theta, const ModelSpec& spec, const ObjectiveSpec& objective) {
    detail::require(stays.size() == targets.size(), "stays and targets differ in count");
    LossAndGradient out;
    out.grad = ParamVector::Zero(theta.size());
    std::size_t valid = 0;
    for (const auto* tg : targets) valid += tg->valid_count();
    if (valid > 0) {
        const double scale = 1.0 / static_cast<double>(valid);
        for (std::size_t i = 0; i < stays.size(); ++i)
            out.loss += accumulate_gradient(*stays[i], *targets[i], theta, spec, objective, scale, out.grad);
    }
    out.loss += add_l1_penalty(theta, spec, &out.grad);
    return out;
}

/// Gradient of one stay's mean masked loss (plus l1 penalty).
inline LossAndGradient gradient(const Stay& stay, const Targets& targets, const ParamVector& theta, const ModelSpec& spec,
                                const ObjectiveSpec& objective) {
    const Stay* s[] = {&stay};
    const Targets* t[] = {&targets};
    return loss_and_gradient(s, t, theta, spec, objective);
}

/// Loss only (no gradient), same aggregation as `loss_and_gradient`.
inline double mean_loss(std::span<const Stay* const> stays, std::span<const Targets* const> targets, const ParamVector& theta,
                        const ModelSpec& spec, const ObjectiveSpec& objective, bool include_penalty = true) {
    double total = 0.0;
    std::size_t valid = 0;
    for (std::size_t i = 0; i < stays.size(); ++i) {
        total += stay_loss(forward(stays[i]->features, theta, spec), *targets[i], objective);
        valid += targets[i]->valid_count();
    }
    double loss = valid > 0 ? total / static_cast<double>(valid) : 0.0;
    if (include_penalty) loss += add_l1_penalty(theta, spec, nullptr);
    return loss;
}

}  // namespace tls
