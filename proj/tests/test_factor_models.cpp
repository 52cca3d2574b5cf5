#include "swing/factor_models.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

using namespace swing;

namespace {

OUFactor gauss() { return OUFactor::gaussian(0.014, 40.0, 2.36); }
OUFactor jumpy() { return matched_jump_factor(0.014, 40.0, 2.36, ExpJumpSpec{0.04, 0.4}); }
OUFactor pure_jump() {
    OUFactor f;
    f.speed = 0.04;
    f.jump = ExpJumpSpec{0.04, 0.014};
    return f;
}

struct Moments {
    double mean, var, se_mean, se_var;
};

Moments sample_moments(const FactorModel& m, double x0, double h, int n, std::uint64_t seed) {
    ExactStepper st(m, h);
    std::vector<double> xs(n);
    for (int p = 0; p < n; ++p) {
        std::mt19937_64 rng(split_seed(seed, static_cast<std::uint64_t>(p)));
        double x[1] = {x0};
        st.advance(x, rng);
        xs[p] = x[0];
    }
    double mu = 0.0;
    for (double v : xs) mu += v;
    mu /= n;
    double m2 = 0.0, m4 = 0.0;
    for (double v : xs) {
        const double d = (v - mu) * (v - mu);
        m2 += d;
        m4 += d * d;
    }
    m2 /= n - 1;
    m4 /= n;
    return {mu, m2, std::sqrt(m2 / n), std::sqrt((m4 - m2 * m2) / n)};
}

} // namespace

TEST(ConditionalMean, StartAtLongRunMeanStaysThere) {
    EXPECT_DOUBLE_EQ(conditional_mean(gauss(), 40.0, 1.0), 40.0);
}

TEST(ConditionalMean, ZeroStepIsIdentity) {
    EXPECT_EQ(conditional_mean(gauss(), 61.3, 0.0), 61.3);
    EXPECT_EQ(conditional_mean(jumpy(), 61.3, 0.0), 61.3);
    EXPECT_EQ(conditional_mean(pure_jump(), 3.0, 0.0), 3.0);
}

TEST(ConditionalMean, JumpFactorTendsToMatchedMean) {
    const OUFactor f = jumpy();
    EXPECT_NEAR(conditional_mean(f, 40.0, 1e6), 40.0, 1e-9);
    // forward Euler on dm/dt = a - speed m + f/rate (raw jump mean rate added back)
    const double a = f.drift_intercept(), m_rate = f.jump->mean_rate();
    double m = 40.0;
    const double h = 1e-3;
    for (int k = 0; k < 50000; ++k) m += h * (a - f.speed * m + m_rate);
    EXPECT_NEAR(conditional_mean(f, 40.0, 50.0), m, 1e-5);
}

TEST(ConditionalVariance, Limits) {
    EXPECT_EQ(conditional_variance(gauss(), 0.0), 0.0);
    EXPECT_NEAR(conditional_variance(gauss(), 1e9), 2.36 * 2.36 / (2 * 0.014), 1e-9);
    const OUFactor f = jumpy();
    EXPECT_NEAR(conditional_variance(f, 1e9), (f.vol * f.vol + 2 * 0.04 / (0.4 * 0.4)) / (2 * 0.014), 1e-9);
}

TEST(ConditionalMoments, FlowProperty) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 5.0), x(10.0, 70.0);
    for (const OUFactor& f : {gauss(), jumpy(), pure_jump()})
        for (int n = 0; n < 200; ++n) {
            const double s = u(rng), t = u(rng), x0 = x(rng);
            const double lhs = conditional_mean(f, conditional_mean(f, x0, s), t);
            EXPECT_NEAR(lhs, conditional_mean(f, x0, s + t), 1e-12 * std::abs(lhs));
        }
}

TEST(MomentMatch, ListedMeanAndFormulaVol) {
    const auto m = moment_match(0.014, 40.0, 2.36, 0.04, 0.4);
    EXPECT_EQ(m.level, 39.9);
    EXPECT_NEAR(m.vol, std::sqrt(5.5696 - 0.5), 1e-15);
    EXPECT_NEAR(m.vol, 2.25157, 1e-5);
}

TEST(MomentMatch, NoJumpIsIdentity) {
    const auto m = moment_match(0.014, 40.0, 2.36, 0.0, 0.4);
    EXPECT_EQ(m.level, 40.0);
    EXPECT_EQ(m.vol, 2.36);
}

TEST(MomentMatch, RejectsTooSmallVol) {
    EXPECT_THROW(moment_match(0.014, 40.0, 0.5, 0.04, 0.4), std::domain_error);
}

TEST(MomentMatch, MatchedMomentsEqualGaussianAtAnyStep) {
    const OUFactor g = gauss(), j = jumpy();
    for (double dt : {0.0, 0.1, 1.0, 7.5, 100.0})
        for (double x : {20.0, 40.0, 55.0}) {
            EXPECT_NEAR(conditional_mean(j, x, dt), conditional_mean(g, x, dt), 1e-12 * std::abs(x));
            EXPECT_NEAR(conditional_variance(j, dt), conditional_variance(g, dt),
                        1e-12 * std::max(1.0, conditional_variance(g, dt)));
        }
}

TEST(Simulation, NoiselessPathIsMeanCurve) {
    const FactorModel m({OUFactor::gaussian(0.014, 40.0, 0.0)});
    const double x0[1] = {20.0};
    const auto p = sample_path(m, x0, 0.0, 2.0, 40, 3);
    for (std::size_t k = 0; k < p.times.size(); ++k)
        EXPECT_NEAR(p.states[k][0], conditional_mean(m.factors[0], 20.0, p.times[k]), 1e-12);
}

TEST(Simulation, GaussianMeanWithinThreeStdErr) {
    const FactorModel m({gauss()});
    const auto s = sample_moments(m, 30.0, 1.0, 100000, 11);
    EXPECT_NEAR(s.mean, conditional_mean(m.factors[0], 30.0, 1.0), 3 * s.se_mean);
}

TEST(Simulation, JumpVarianceWithinThreeStdErr) {
    const FactorModel m({jumpy()});
    const auto s = sample_moments(m, 40.0, 1.0, 100000, 12);
    EXPECT_NEAR(s.var, conditional_variance(m.factors[0], 1.0), 3 * s.se_var);
    EXPECT_NEAR(s.mean, conditional_mean(m.factors[0], 40.0, 1.0), 3 * s.se_mean);
}

TEST(Simulation, PureJumpMomentsWithinThreeStdErr) {
    const FactorModel m({pure_jump()});
    const auto s = sample_moments(m, 2.0, 5.0, 100000, 13);
    EXPECT_NEAR(s.mean, conditional_mean(m.factors[0], 2.0, 5.0), 3 * s.se_mean);
    EXPECT_NEAR(s.var, conditional_variance(m.factors[0], 5.0), 3 * s.se_var);
}

TEST(Simulation, StationaryVarianceCheckedByLongStep) {
    // dt -> infinity limits, via a long exact step from the mean
    for (const OUFactor& f : {gauss(), jumpy()}) {
        const FactorModel m({f});
        const auto s = sample_moments(m, 40.0, 2000.0, 100000, 21);
        EXPECT_NEAR(s.var, conditional_variance(f, 1e300), 3 * s.se_var);
    }
}

TEST(Simulation, SameSeedIsBitIdentical) {
    const FactorModel m({gauss(), pure_jump()});
    const double x0[2] = {40.0, 0.0};
    const auto a = sample_path(m, x0, 0.0, 1.0, 250, 99);
    const auto b = sample_path(m, x0, 0.0, 1.0, 250, 99);
    EXPECT_EQ(a.states, b.states);
    const auto c = sample_path(m, x0, 0.0, 1.0, 250, 100);
    EXPECT_NE(a.states, c.states);
}

TEST(Simulation, PureJumpStaysNonnegative) {
    const FactorModel m({pure_jump()});
    const double x0[1] = {0.0};
    const auto p = sample_path(m, x0, 0.0, 50.0, 500, 5);
    for (const auto& s : p.states) EXPECT_GE(s[0], 0.0);
}

TEST(FactorModel, ValidationRejectsBadParameters) {
    OUFactor f = gauss();
    f.speed = 0.0;
    EXPECT_THROW(FactorModel({f}).validate(), std::invalid_argument);
    f = gauss();
    f.vol = -1.0;
    EXPECT_THROW(FactorModel({f}).validate(), std::invalid_argument);
    f = gauss();
    f.jump = ExpJumpSpec{0.04, 0.0};
    EXPECT_THROW(FactorModel({f}).validate(), std::invalid_argument);
}

TEST(FactorModel, CompensatedLongRunMean) {
    const OUFactor f = jumpy();
    EXPECT_NEAR(f.long_run_mean(), 40.0, 1e-12);
    EXPECT_NEAR(pure_jump().long_run_mean(), 0.04 / 0.014 / 0.04, 1e-12);
}

TEST(SplitSeed, DistinctStreams) {
    std::vector<std::uint64_t> s;
    for (std::uint64_t k = 0; k < 1000; ++k) s.push_back(split_seed(42, k));
    std::sort(s.begin(), s.end());
    EXPECT_EQ(std::unique(s.begin(), s.end()), s.end());
}
