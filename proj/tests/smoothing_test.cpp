#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "tls/labels.hpp"
#include "tls/random.hpp"
#include "tls/smoothing.hpp"

using namespace tls;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

SmoothingSpec exp_spec(double gamma, double h_min, double h_max) {
    SmoothingSpec s;
    s.kind = SmoothingKind::exp;
    s.gamma = gamma;
    s.h_min = h_min;
    s.h_max = h_max;
    return s;
}

}  // namespace

// Expected constants were solved from the two boundary equations with
// 40-digit arithmetic (mpmath findroot) and frozen here.
TEST(ExpSmoothing, ConstantsMatchHighPrecisionSolve) {
    const auto c = exp_constants(0.2, 0.0, 24.0);
    EXPECT_NEAR(c.d, 0.041318991842265333, 1e-14);
    EXPECT_NEAR(c.A, -0.0082980378011265064, 1e-15);
    const auto wide = exp_constants(0.05, 0.0, 48.0);
    EXPECT_NEAR(wide.d, 1.9019990104480549, 1e-13);
    EXPECT_NEAR(wide.A, -0.099768772096175383, 1e-14);
}

TEST(ExpSmoothing, ValuesAndBoundaries) {
    const auto spec = exp_spec(0.2, 0.0, 24.0);
    const Smoother q(spec);
    EXPECT_EQ(q(0.0), 1.0);
    EXPECT_EQ(q(24.0), 0.0);
    EXPECT_EQ(q(kInf), 0.0);
    EXPECT_NEAR(q(12.0), 0.083172696493922371, 1e-14);
}

TEST(ExpSmoothing, StableFormMatchesTextbookClosedForm) {
    for (double gamma : {0.01, 0.05, 0.2, 0.4, 1.0}) {
        const auto spec = exp_spec(gamma, 2.0, 30.0);
        const auto c = exp_constants(gamma, 2.0, 30.0);
        for (double x = 2.0; x <= 30.0; x += 0.25)
            EXPECT_NEAR(q_exp(x, spec, c), std::exp(-gamma * (x - c.d)) + c.A, 1e-12) << gamma << " " << x;
    }
}

TEST(ExpSmoothing, Errors) {
    EXPECT_THROW(exp_constants(0.0, 0.0, 24.0), InvalidInput);
    EXPECT_THROW(exp_constants(-1.0, 0.0, 24.0), InvalidInput);
    EXPECT_THROW(exp_constants(0.2, 5.0, 5.0), InvalidInput);
    EXPECT_THROW(exp_constants(0.2, -1.0, 5.0), InvalidInput);
}

TEST(ExpSmoothing, ExtremeGammaStaysFinite) {
    for (double gamma : {1e-9, 1e-3, 50.0, 1e4}) {
        const Smoother q(exp_spec(gamma, 0.0, 24.0));
        for (double x = 0.0; x <= 24.0; x += 0.5) {
            EXPECT_TRUE(std::isfinite(q(x)));
            EXPECT_GE(q(x), 0.0);
            EXPECT_LE(q(x), 1.0);
        }
        EXPECT_EQ(q(0.0), 1.0);
        EXPECT_EQ(q(24.0), 0.0);
    }
}

TEST(StepSmoothing, Staircase) {
    const HorizonGrid grid({3, 6, 9, 12});
    EXPECT_EQ(q_step(7.0, grid), 0.5);
    EXPECT_EQ(q_step(3.0, grid), 1.0);
    EXPECT_EQ(q_step(1.0, grid), 1.0);
    EXPECT_EQ(q_step(3.5, grid), 0.75);
    EXPECT_EQ(q_step(12.0, grid), 0.25);
    EXPECT_EQ(q_step(12.5, grid), 0.0);
    EXPECT_EQ(q_step(kInf, grid), 0.0);
}

TEST(StepSmoothing, EqualsMeanOfHorizonLabels) {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t count = 1 + rng.below(15);
        const double lo = rng.uniform(0.0, 5.0);
        const auto grid = HorizonGrid::uniform(lo, lo + rng.uniform(1.0, 40.0), count);
        std::vector<std::uint8_t> ev(80);
        for (auto& e : ev) e = rng.uniform() < 0.04 ? 1 : 0;
        const auto d = time_to_event(ev);
        const auto y = horizon_labels(d, ev, grid);
        for (std::size_t t = 0; t < ev.size(); ++t) {
            if (y.row_masked(t)) continue;
            std::size_t positives = 0;
            for (std::size_t k = 0; k < grid.size(); ++k) positives += y(t, k) == Label::positive;
            EXPECT_EQ(q_step(d[t].value(), grid), static_cast<double>(positives) / static_cast<double>(grid.size()));
        }
    }
}

TEST(LinearSmoothing, ValuesAndStepLimit) {
    EXPECT_EQ(q_linear(12.0, 0.0, 24.0), 0.5);
    EXPECT_EQ(q_linear(24.0, 0.0, 24.0), 0.0);
    EXPECT_EQ(q_linear(0.0, 0.0, 24.0), 1.0);
    EXPECT_EQ(q_linear(30.0, 0.0, 24.0), 0.0);
    const auto grid = HorizonGrid::uniform(0.0, 24.0, 1000);
    double gap = 0.0;
    for (int i = 0; i <= 100000; ++i) {
        const double x = 24.0 * i / 100000.0;
        gap = std::max(gap, std::abs(q_step(x, grid) - q_linear(x, 0.0, 24.0)));
    }
    EXPECT_LE(gap, 1.0 / 1000.0);
}

TEST(SigmoidSmoothing, MatchesTextbookConstants) {
    // Reference values from the generalized logistic with K, A, d solved in
    // 40-digit arithmetic for h = 12, gamma = 2.
    SmoothingSpec spec;
    spec.kind = SmoothingKind::sigmoid;
    spec.gamma = 2.0;
    spec.h_true = 12.0;
    const Smoother q(spec);
    EXPECT_EQ(q(0.0), 1.0);
    EXPECT_NEAR(q(3.0), 0.99144336586261972, 1e-14);
    EXPECT_EQ(q(12.0), 0.5);
    EXPECT_NEAR(q(20.0), 0.015590686590841484, 1e-14);
    EXPECT_EQ(q(24.0), 0.0);

    const auto c = sigmoid_constants(2.0, 12.0);
    EXPECT_EQ(c.d, 12.0);
    const double A = (std::exp(-6.0) + 1.0) / (std::exp(-6.0) - std::exp(6.0));
    EXPECT_NEAR(c.A, A, 1e-15);
    EXPECT_NEAR(c.K, -A * std::exp(6.0), 1e-12);
}

TEST(SigmoidSmoothing, Limits) {
    const double h = 12.0;
    SmoothingSpec spec;
    spec.kind = SmoothingKind::sigmoid;
    spec.h_true = h;
    spec.gamma = 1e3 * h;
    const Smoother wide(spec);
    double gap = 0.0;
    for (int i = 0; i <= 10000; ++i) {
        const double x = 2.0 * h * i / 10000.0;
        gap = std::max(gap, std::abs(wide(x) - q_linear(x, 0.0, 2.0 * h)));
    }
    EXPECT_LT(gap, 1e-2);

    spec.gamma = 1e-3;  // h / gamma = 12000: would overflow a naive evaluation
    const Smoother sharp(spec);
    EXPECT_NEAR(sharp(h - 0.1), 1.0, 1e-12);
    EXPECT_NEAR(sharp(h + 0.1), 0.0, 1e-12);
    EXPECT_EQ(sharp(h), 0.5);
}

TEST(ConcaveSmoothing, MatchesBisectionOracle) {
    // d solved by bisection on alpha(0) = 0, alpha(24) = 1 with 40 digits.
    const auto c = concave_constants(0.05, 0.0, 24.0);
    EXPECT_NEAR(c.d, 16.832351642791321, 1e-12);
    EXPECT_NEAR(c.A, 0.43101276069333312, 1e-14);
    EXPECT_NEAR(q_concave(12.0, 0.05, 0.0, 24.0), 0.64565630622579545, 1e-14);
    EXPECT_EQ(q_concave(0.0, 0.05, 0.0, 24.0), 1.0);
    EXPECT_EQ(q_concave(24.0, 0.05, 0.0, 24.0), 0.0);
}

TEST(ConcaveSmoothing, MirrorsExponential) {
    for (double gamma : {0.05, 0.2, 1.0}) {
        const auto spec = exp_spec(gamma, 0.0, 24.0);
        const auto c = exp_constants(gamma, 0.0, 24.0);
        for (double u = 0.0; u <= 24.0; u += 0.5)
            EXPECT_NEAR(1.0 - q_concave(u, gamma, 0.0, 24.0), q_exp(24.0 - u, spec, c), 1e-12);
    }
    EXPECT_THROW(concave_constants(0.0, 0.0, 24.0), InvalidInput);
    EXPECT_TRUE(std::isfinite(q_concave(23.0, 100.0, 0.0, 24.0)));
}

TEST(ShiftSmoothing, RecoversHardLabels) {
    Rng rng(9);
    std::vector<std::uint8_t> ev(200);
    for (auto& e : ev) e = rng.uniform() < 0.05 ? 1 : 0;
    const auto d = time_to_event(ev);
    const auto y = hard_labels(d, ev, 12);
    for (std::size_t t = 0; t < ev.size(); ++t) {
        if (y[t] == Label::masked) continue;
        EXPECT_EQ(q_shift(d[t].value(), 12.0), as_real(y[t]));
        EXPECT_EQ(q_shift(d[t].value(), 0.0), 0.0);
    }
    EXPECT_EQ(q_shift(8.0, 6.0), 0.0);
    EXPECT_EQ(q_shift(6.0, 6.0), 1.0);
}

TEST(SmoothTargets, NoneAndSingleStepReturnHardLabels) {
    Stay s;
    s.id = "s";
    s.features = FeatureMatrix::Zero(40, 1);
    s.event_track.assign(40, 0);
    for (int t : {15, 16, 17, 33}) s.event_track[t] = 1;
    const auto labels = make_label_track(s, 6);

    SmoothingSpec none;
    none.h_true = 6.0;
    SmoothingSpec step;
    step.kind = SmoothingKind::step;
    step.horizon_count = 1;
    step.h_min = 0.0;
    step.h_max = 12.0;
    for (const auto& spec : {none, step}) {
        const auto out = smooth_targets(labels, spec);
        EXPECT_EQ(out.mask, labels.mask());
        for (std::size_t t = 0; t < out.q.size(); ++t)
            if (out.mask[t]) EXPECT_EQ(out.q[t], as_real(labels.hard_label[t])) << to_string(spec.kind) << " t=" << t;
    }
}

TEST(SmoothTargets, ExpIncreasesTowardEvent) {
    LabelTrack labels;
    labels.dist_to_event = {Distance::never(), Distance(3), Distance(2), Distance(1)};
    labels.hard_label.assign(4, Label::negative);
    labels.horizon_steps = 2;
    const auto out = smooth_targets(labels, exp_spec(0.2, 0.0, 4.0));
    const std::vector<double> expected{0.0, 0.18065717187635371, 0.40131233988754800, 0.67082117069871638};
    for (std::size_t t = 0; t < 4; ++t) EXPECT_NEAR(out.q[t], expected[t], 1e-14);
    for (std::size_t t = 1; t < 4; ++t) EXPECT_GT(out.q[t], out.q[t - 1]);
}

TEST(SmoothTargets, PropagatesConstantErrors) {
    LabelTrack labels;
    labels.dist_to_event = {Distance(1)};
    labels.hard_label = {Label::positive};
    EXPECT_THROW(smooth_targets(labels, exp_spec(-0.2, 0.0, 4.0)), InvalidInput);
    EXPECT_THROW(smoothing_kind_from_string("cubic"), InvalidInput);
    EXPECT_EQ(smoothing_kind_from_string("concave"), SmoothingKind::concave);
}

TEST(SmoothingFamily, BoundaryAndMonotoneOnRandomParameters) {
    Rng rng(2024);
    for (int trial = 0; trial < 20; ++trial) {
        const double h_min = rng.uniform(0.0, 6.0);
        const double h_max = h_min + rng.uniform(1.0, 48.0);
        const double gamma = std::exp(rng.uniform(std::log(1e-3), std::log(5.0)));
        for (auto kind : {SmoothingKind::exp, SmoothingKind::linear, SmoothingKind::concave, SmoothingKind::step}) {
            SmoothingSpec spec;
            spec.kind = kind;
            spec.gamma = gamma;
            spec.h_min = h_min;
            spec.h_max = h_max;
            spec.horizon_count = 1 + rng.below(20);
            const Smoother q(spec);
            EXPECT_EQ(q(h_min), 1.0);
            EXPECT_EQ(q(h_max), 0.0);
            double prev = 1.0;
            for (int i = 0; i <= 1000; ++i) {
                const double v = q(h_min - 1.0 + (h_max - h_min + 2.0) * i / 1000.0);
                EXPECT_LE(v, prev);
                prev = v;
            }
        }
    }
}
