#pragma once

// Affine Levy-OU factor dynamics: exact conditional moments, moment matching
// against a Gaussian OU, and exact path sampling.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace swing {

/// Compound-Poisson jumps with exponential marks, Levy measure
/// nu(dy) = frequency * rate * exp(-rate y) dy on y >= 0.
struct ExpJumpSpec {
    double frequency = 0.0;
    double rate = 1.0;

    double mean_size() const { return 1.0 / rate; }
    double second_moment() const { return 2.0 / (rate * rate); }
    /// Compensator: integral of y nu(dy).
    double mean_rate() const { return frequency / rate; }

    friend bool operator==(const ExpJumpSpec&, const ExpJumpSpec&) = default;
};

/// How the level of a jump factor is read.
///   raw:         dX = speed (level - X) dt + vol dW + dY
///   compensated: dX = speed (level + f/rate - X) dt + vol dW + int y N~(dt,dy)
/// With `compensated` the long-run mean is level + f/rate, which is the form
/// produced by moment matching against a Gaussian OU.
enum class JumpDrift { raw, compensated };

struct OUFactor {
    double speed = 1.0;
    double level = 0.0;
    double vol = 0.0;
    std::optional<ExpJumpSpec> jump;
    JumpDrift jump_drift = JumpDrift::raw;

    static OUFactor gaussian(double speed, double level, double vol) {
        OUFactor f;
        f.speed = speed;
        f.level = level;
        f.vol = vol;
        return f;
    }

    bool has_jump() const { return jump.has_value(); }

    /// Intercept a of the generator drift a - speed * x (jumps uncompensated).
    double drift_intercept() const {
        if (!jump || jump_drift == JumpDrift::raw) return speed * level;
        const double m = jump->mean_rate();
        return speed * (level + m) - m;
    }

    double long_run_mean() const {
        const double m = jump ? jump->mean_rate() : 0.0;
        return (drift_intercept() + m) / speed;
    }

    void validate() const {
        if (!(speed > 0.0) || !std::isfinite(speed))
            throw std::invalid_argument("OUFactor: speed must be positive");
        if (!(vol >= 0.0) || !std::isfinite(vol))
            throw std::invalid_argument("OUFactor: vol must be nonnegative");
        if (!std::isfinite(level)) throw std::invalid_argument("OUFactor: level must be finite");
        if (jump && (!(jump->frequency > 0.0) || !(jump->rate > 0.0)))
            throw std::invalid_argument("OUFactor: jump frequency and rate must be positive");
    }

    friend bool operator==(const OUFactor&, const OUFactor&) = default;
};

/// Ordered factors plus the correlation of their Brownian drivers. The
/// correlation matrix is indexed over the factors with vol > 0 only.
struct FactorModel {
    std::vector<OUFactor> factors;
    Eigen::MatrixXd correlation;

    FactorModel() = default;
    explicit FactorModel(std::vector<OUFactor> fs) : factors(std::move(fs)) {
        correlation = Eigen::MatrixXd::Identity(diffusive_count(), diffusive_count());
    }
    FactorModel(std::vector<OUFactor> fs, Eigen::MatrixXd rho)
        : factors(std::move(fs)), correlation(std::move(rho)) {}

    std::size_t size() const { return factors.size(); }

    std::size_t diffusive_count() const {
        std::size_t n = 0;
        for (const auto& f : factors) n += f.vol > 0.0 ? 1 : 0;
        return n;
    }

    bool has_jumps() const {
        for (const auto& f : factors)
            if (f.has_jump()) return true;
        return false;
    }

    void validate() const {
        if (factors.empty()) throw std::invalid_argument("FactorModel: no factors");
        for (const auto& f : factors) f.validate();
        const auto d = static_cast<Eigen::Index>(diffusive_count());
        if (correlation.rows() != d || correlation.cols() != d)
            throw std::invalid_argument("FactorModel: correlation must be square over the diffusive factors");
        for (Eigen::Index i = 0; i < d; ++i) {
            if (std::abs(correlation(i, i) - 1.0) > 1e-12)
                throw std::invalid_argument("FactorModel: correlation diagonal must be 1");
            for (Eigen::Index j = 0; j < d; ++j) {
                const double c = correlation(i, j);
                if (c < -1.0 || c > 1.0 || std::abs(c - correlation(j, i)) > 1e-12)
                    throw std::invalid_argument("FactorModel: correlation must be symmetric in [-1,1]");
            }
        }
    }

    friend bool operator==(const FactorModel& a, const FactorModel& b) {
        return a.factors == b.factors && a.correlation.rows() == b.correlation.rows() &&
               a.correlation.cols() == b.correlation.cols() && a.correlation == b.correlation;
    }
};

/// E[X_{t+dt} | X_t = x].
inline double conditional_mean(const OUFactor& f, double x, double dt) {
    if (dt < 0.0) throw std::invalid_argument("conditional_mean: dt must be nonnegative");
    const double m = f.long_run_mean();
    return m + (x - m) * std::exp(-f.speed * dt);
}

/// Var[X_{t+dt} | X_t] = (1 - e^{-2 speed dt}) / (2 speed) * (vol^2 + int y^2 nu(dy)).
inline double conditional_variance(const OUFactor& f, double dt) {
    if (dt < 0.0) throw std::invalid_argument("conditional_variance: dt must be nonnegative");
    double q = f.vol * f.vol;
    if (f.jump) q += f.jump->frequency * f.jump->second_moment();
    return -std::expm1(-2.0 * f.speed * dt) / (2.0 * f.speed) * q;
}

struct MatchedParameters {
    double level;
    double vol;
};

/// Level and diffusion coefficient that give a jump OU (compensated drift) the
/// long-run mean and variance of the Gaussian OU (speed, mean, vol).
inline MatchedParameters moment_match(double speed, double mean, double vol, double frequency,
                                      double rate) {
    if (!(speed > 0.0)) throw std::invalid_argument("moment_match: speed must be positive");
    if (frequency == 0.0) return {mean, vol};
    if (!(frequency > 0.0) || !(rate > 0.0))
        throw std::invalid_argument("moment_match: jump frequency and rate must be positive");
    const double jump_var = 2.0 * frequency / (rate * rate);
    if (!(vol * vol > jump_var))
        throw std::domain_error("moment_match: vol^2 = " + std::to_string(vol * vol) +
                                " must exceed 2f/rate^2 = " + std::to_string(jump_var));
    return {mean - frequency / rate, std::sqrt(vol * vol - jump_var)};
}

/// Jump factor whose long-run mean and variance equal those of the Gaussian OU.
inline OUFactor matched_jump_factor(double speed, double mean, double vol, ExpJumpSpec jump) {
    const auto m = moment_match(speed, mean, vol, jump.frequency, jump.rate);
    return OUFactor{speed, m.level, m.vol, jump, JumpDrift::compensated};
}

/// Counter-based seed split (splitmix64 finaliser).
inline std::uint64_t split_seed(std::uint64_t master, std::uint64_t counter) {
    std::uint64_t z = master + 0x9E3779B97F4A7C15ull * (counter + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Exact one-step transition X_t -> X_{t+h} for a fixed step h: OU decay,
/// correlated Gaussian increments with the exact covariance, and Poisson jump
/// counts with uniform arrival times and exponential marks decayed from arrival.
class ExactStepper {
public:
    ExactStepper(const FactorModel& model, double h) : model_(model), h_(h) {
        model_.validate();
        if (!(h > 0.0)) throw std::invalid_argument("ExactStepper: step must be positive");
        const auto n = model_.size();
        decay_.resize(n);
        shift_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& f = model_.factors[i];
            decay_[i] = std::exp(-f.speed * h);
            shift_[i] = f.drift_intercept() / f.speed * (-std::expm1(-f.speed * h));
            if (f.vol > 0.0) diffusive_.push_back(i);
        }
        const auto d = static_cast<Eigen::Index>(diffusive_.size());
        if (d > kMaxDiffusive) throw std::invalid_argument("ExactStepper: too many diffusive factors");
        if (d > 0) {
            Eigen::MatrixXd cov(d, d);
            for (Eigen::Index a = 0; a < d; ++a)
                for (Eigen::Index b = 0; b < d; ++b) {
                    const auto& fa = model_.factors[diffusive_[a]];
                    const auto& fb = model_.factors[diffusive_[b]];
                    const double k = fa.speed + fb.speed;
                    cov(a, b) = model_.correlation(a, b) * fa.vol * fb.vol * (-std::expm1(-k * h)) / k;
                }
            // eigen-square-root tolerates singular correlation (rho = +-1)
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
            const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
            root_ = es.eigenvectors() * ev.asDiagonal();
        }
    }

    double step() const { return h_; }
    std::size_t dimension() const { return model_.size(); }

    template <class Rng>
    void advance(std::span<double> x, Rng& rng) const {
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = decay_[i] * x[i] + shift_[i];
        if (!diffusive_.empty()) {
            std::normal_distribution<double> normal;
            const auto d = static_cast<Eigen::Index>(diffusive_.size());
            Draws draws(d);
            for (Eigen::Index a = 0; a < d; ++a) draws[a] = normal(rng);
            for (Eigen::Index a = 0; a < d; ++a) x[diffusive_[a]] += root_.row(a).dot(draws);
        }
        for (std::size_t i = 0; i < x.size(); ++i) {
            const auto& f = model_.factors[i];
            if (!f.jump) continue;
            std::poisson_distribution<int> count(f.jump->frequency * h_);
            const int n = count(rng);
            std::uniform_real_distribution<double> arrival(0.0, h_);
            std::exponential_distribution<double> mark(f.jump->rate);
            for (int k = 0; k < n; ++k) {
                const double s = arrival(rng);
                x[i] += mark(rng) * std::exp(-f.speed * (h_ - s));
            }
        }
    }

private:
    static constexpr int kMaxDiffusive = 16;
    using Draws = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDiffusive, 1>;

    FactorModel model_;
    double h_;
    std::vector<double> decay_, shift_;
    std::vector<std::size_t> diffusive_;
    Eigen::MatrixXd root_;
};

struct SamplePath {
    std::vector<double> times;
    std::vector<std::vector<double>> states;
};

/// Path on a uniform time mesh from t0 to t1; deterministic for a given seed.
inline SamplePath sample_path(const FactorModel& model, std::span<const double> x0, double t0,
                              double t1, int steps, std::uint64_t seed) {
    if (!(t1 > t0) || steps < 1) throw std::invalid_argument("sample_path: need t1 > t0 and steps >= 1");
    if (x0.size() != model.size()) throw std::invalid_argument("sample_path: dimension mismatch");
    const double h = (t1 - t0) / steps;
    ExactStepper stepper(model, h);
    std::mt19937_64 rng(split_seed(seed, 0));
    SamplePath path;
    path.times.reserve(steps + 1);
    path.states.reserve(steps + 1);
    std::vector<double> x(x0.begin(), x0.end());
    path.times.push_back(t0);
    path.states.push_back(x);
    for (int k = 1; k <= steps; ++k) {
        stepper.advance(x, rng);
        path.times.push_back(k == steps ? t1 : t0 + k * h);
        path.states.push_back(x);
    }
    return path;
}

} // namespace swing
