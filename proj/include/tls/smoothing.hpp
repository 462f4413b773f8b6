#pragma once

// Temporal label smoothing: surrogate targets q(1 | dist) = 1 - alpha(dist)
// that decay from 1 near an event start to 0 far before it.
//
// All distances and horizons are in steps; gamma is in 1/step. Every
// parametrization maps dist = +inf (no upcoming event) to 0.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tls/error.hpp"
#include "tls/labels.hpp"

namespace tls {

enum class SmoothingKind { none, exp, step, linear, sigmoid, concave, shift };

inline std::string_view to_string(SmoothingKind kind) {
    switch (kind) {
        case SmoothingKind::none: return "none";
        case SmoothingKind::exp: return "exp";
        case SmoothingKind::step: return "step";
        case SmoothingKind::linear: return "linear";
        case SmoothingKind::sigmoid: return "sigmoid";
        case SmoothingKind::concave: return "concave";
        case SmoothingKind::shift: return "shift";
    }
    return "none";
}

inline SmoothingKind smoothing_kind_from_string(std::string_view name) {
    for (auto k : {SmoothingKind::none, SmoothingKind::exp, SmoothingKind::step, SmoothingKind::linear,
                   SmoothingKind::sigmoid, SmoothingKind::concave, SmoothingKind::shift})
        if (to_string(k) == name) return k;
    throw InvalidInput("unknown smoothing kind '" + std::string(name) + "'");
}

struct SmoothingSpec {
    SmoothingKind kind = SmoothingKind::none;
    double gamma = 0.0;           // exp, sigmoid, concave
    std::size_t horizon_count = 11;  // step
    double h_shift = 0.0;         // shift
    double h_min = 0.0;
    double h_max = 0.0;
    double h_true = 0.0;          // sigmoid smooths over [0, 2 h_true]
};

struct SmoothingConstants {
    double d = 0.0;
    double A = 0.0;
    double K = 0.0;  // sigmoid only
};

struct TargetTrack {
    std::vector<double> q;
    Mask mask;
};

namespace detail {

inline void require_range(double h_min, double h_max) {
    require(std::isfinite(h_min) && std::isfinite(h_max) && h_min >= 0.0 && h_max > h_min,
            "smoothing range must satisfy 0 <= h_min < h_max");
}

inline void require_gamma(double gamma) {
    require(std::isfinite(gamma) && gamma > 0.0, "gamma must be positive and finite");
}

// 1 - exp(-x) for x >= 0 without cancellation.
inline double one_minus_exp_neg(double x) { return -std::expm1(-x); }

// Boundary identities are checked on the textbook closed form whenever its
// exponentials are representable; the tolerance scales with the size of the
// terms being cancelled.
inline void check_boundary(double value, double expected, double scale, std::string_view what) {
    if (!std::isfinite(value) || !std::isfinite(scale)) return;
    if (std::abs(value - expected) > 1e-12 * std::max(1.0, scale))
        throw NumericFailure(std::string(what) + ": solved constants violate a boundary condition");
}

}  // namespace detail

/// Constants of q = exp(-gamma (dist - d)) + A with q(h_min) = 1, q(h_max) = 0.
inline SmoothingConstants exp_constants(double gamma, double h_min, double h_max) {
    detail::require_gamma(gamma);
    detail::require_range(h_min, h_max);
    const double span = h_max - h_min;
    SmoothingConstants c;
    c.d = h_min - std::log(detail::one_minus_exp_neg(gamma * span)) / gamma;
    c.A = -std::exp(-gamma * (h_max - c.d));
    const double at_min = std::exp(-gamma * (h_min - c.d));
    detail::check_boundary(at_min + c.A, 1.0, at_min, "exp_constants");
    detail::check_boundary(std::exp(-gamma * (h_max - c.d)) + c.A, 0.0, at_min, "exp_constants");
    return c;
}

/// Convex exponential decay between h_min and h_max.
inline double q_exp(double dist, const SmoothingSpec& spec, const SmoothingConstants&) {
    if (dist <= spec.h_min) return 1.0;
    if (dist > spec.h_max) return 0.0;
    // (e^{-g u} - e^{-g R}) / (1 - e^{-g R}), identical to e^{-g (dist - d)} + A.
    const double u = dist - spec.h_min;
    const double span = spec.h_max - spec.h_min;
    const double g = spec.gamma;
    return (std::expm1(-g * u) - std::expm1(-g * span)) / detail::one_minus_exp_neg(g * span);
}

/// Staircase: the fraction of grid horizons h_k with dist <= h_k.
inline double q_step(double dist, const HorizonGrid& grid) {
    if (dist <= grid[0]) return 1.0;
    const std::size_t count = grid.size();
    if (dist > grid[count - 1]) return 0.0;
    // Number of horizons strictly below dist: first index with h_k >= dist.
    std::size_t below = 0;
    while (below < count && grid[below] < dist) ++below;
    return static_cast<double>(count - below) / static_cast<double>(count);
}

inline double q_linear(double dist, double h_min, double h_max) {
    if (dist <= h_min) return 1.0;
    if (dist >= h_max) return 0.0;
    return 1.0 - (dist - h_min) / (h_max - h_min);
}

/// Generalized logistic over [0, 2h] with its midpoint pinned at h.
inline SmoothingConstants sigmoid_constants(double gamma, double h) {
    detail::require_gamma(gamma);
    detail::require(std::isfinite(h) && h > 0.0, "sigmoid horizon must be positive");
    const double c = h / gamma;
    const double denom = detail::one_minus_exp_neg(c);
    SmoothingConstants k;
    k.d = h;
    k.A = -std::exp(-c) / denom;  // (e^{-d/g} + 1) / (e^{-d/g} - e^{(2h-d)/g})
    k.K = 1.0 / denom;            // -A e^{(2h-d)/g}
    return k;
}

inline double q_sigmoid(double dist, const SmoothingSpec& spec, const SmoothingConstants& consts) {
    const double h = consts.d;
    if (dist <= 0.0) return 1.0;
    if (dist >= 2.0 * h) return 0.0;
    // (K - A) / (1 + e^{(dist - d)/g}) + A, rearranged so no exponent exceeds h/g.
    const double c = h / spec.gamma;
    const double z = (dist - h) / spec.gamma;
    const double denom = detail::one_minus_exp_neg(c);
    // Rounding can land one ulp above 1 next to dist = 0.
    if (z <= 0.0) return std::min(1.0, -std::expm1(z - c) / (denom * (1.0 + std::exp(z))));
    const double ez = std::exp(-z);
    return ez * -std::expm1(z - c) / (denom * (1.0 + ez));
}

/// Constants of alpha = exp(-gamma (d - dist)) - A with alpha(h_min) = 0, alpha(h_max) = 1.
inline SmoothingConstants concave_constants(double gamma, double h_min, double h_max) {
    detail::require_gamma(gamma);
    detail::require_range(h_min, h_max);
    SmoothingConstants c;
    c.d = h_max + std::log(detail::one_minus_exp_neg(gamma * (h_max - h_min))) / gamma;
    c.A = std::exp(-gamma * (c.d - h_min));
    const double at_max = std::exp(-gamma * (c.d - h_max));
    detail::check_boundary(std::exp(-gamma * (c.d - h_min)) - c.A, 0.0, at_max, "concave_constants");
    detail::check_boundary(at_max - c.A, 1.0, at_max, "concave_constants");
    return c;
}

/// Mirror image of q_exp: stays near 1 long before dropping at h_max.
inline double q_concave(double dist, double gamma, double h_min, double h_max) {
    if (dist <= h_min) return 1.0;
    if (dist >= h_max) return 0.0;
    const double u = dist - h_min;
    const double span = h_max - h_min;
    // alpha = (e^{g u} - 1) / (e^{g R} - 1), scaled by e^{-g R} top and bottom.
    const double alpha =
        std::exp(-gamma * (span - u)) * detail::one_minus_exp_neg(gamma * u) / detail::one_minus_exp_neg(gamma * span);
    return std::clamp(1.0 - alpha, 0.0, 1.0);
}

/// Hard labels with the horizon moved to h_shift.
inline double q_shift(double dist, double h_shift) { return (dist > 0.0 && dist <= h_shift) ? 1.0 : 0.0; }

/// A validated spec with its constants (and staircase grid) solved once.
class Smoother {
public:
    explicit Smoother(SmoothingSpec spec) : spec_(spec) {
        switch (spec_.kind) {
            case SmoothingKind::none: break;
            case SmoothingKind::exp: consts_ = exp_constants(spec_.gamma, spec_.h_min, spec_.h_max); break;
            case SmoothingKind::step:
                detail::require_range(spec_.h_min, spec_.h_max);
                grid_ = HorizonGrid::uniform(spec_.h_min, spec_.h_max, spec_.horizon_count);
                break;
            case SmoothingKind::linear: detail::require_range(spec_.h_min, spec_.h_max); break;
            case SmoothingKind::sigmoid:
                consts_ = sigmoid_constants(spec_.gamma, spec_.h_true);
                spec_.h_min = 0.0;
                spec_.h_max = 2.0 * spec_.h_true;
                break;
            case SmoothingKind::concave: consts_ = concave_constants(spec_.gamma, spec_.h_min, spec_.h_max); break;
            case SmoothingKind::shift:
                detail::require(std::isfinite(spec_.h_shift) && spec_.h_shift >= 0.0, "h_shift must be >= 0");
                break;
        }
    }

    const SmoothingSpec& spec() const { return spec_; }
    const SmoothingConstants& constants() const { return consts_; }
    const std::optional<HorizonGrid>& grid() const { return grid_; }

    /// q(1 | dist). For kind none this is the hard label at horizon h_true.
    double operator()(double dist) const {
        switch (spec_.kind) {
            case SmoothingKind::none: return (dist > 0.0 && dist <= spec_.h_true) ? 1.0 : 0.0;
            case SmoothingKind::exp: return q_exp(dist, spec_, consts_);
            case SmoothingKind::step: return q_step(dist, *grid_);
            case SmoothingKind::linear: return q_linear(dist, spec_.h_min, spec_.h_max);
            case SmoothingKind::sigmoid: return q_sigmoid(dist, spec_, consts_);
            case SmoothingKind::concave: return q_concave(dist, spec_.gamma, spec_.h_min, spec_.h_max);
            case SmoothingKind::shift: return q_shift(dist, spec_.h_shift);
        }
        return 0.0;
    }

private:
    SmoothingSpec spec_;
    SmoothingConstants consts_;
    std::optional<HorizonGrid> grid_;
};

inline TargetTrack smooth_targets(const LabelTrack& labels, const Smoother& smoother) {
    TargetTrack out;
    out.mask = labels.mask();
    out.q.resize(labels.hard_label.size());
    for (std::size_t t = 0; t < out.q.size(); ++t) {
        if (!out.mask[t])
            out.q[t] = 0.0;
        else if (smoother.spec().kind == SmoothingKind::none)
            out.q[t] = as_real(labels.hard_label[t]);
        else
            out.q[t] = smoother(labels.dist_to_event[t].value());
    }
    return out;
}

inline TargetTrack smooth_targets(const LabelTrack& labels, const SmoothingSpec& spec) {
    return smooth_targets(labels, Smoother(spec));
}

}  // namespace tls
