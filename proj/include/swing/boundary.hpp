#pragma once

// Boundary values on the truncated domain. Every closed form here is the
// value of a deterministic exercise window: for a deterministic control the
// expectation of the payoff integral reduces to the integral of the expected
// payoff, which along OU factors is a constant plus decaying exponentials.

#include "swing/contract.hpp"
#include "swing/factor_models.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace swing {

/// f(tau) = sum_j coef_j exp(-decay_j tau); a constant is a term with decay 0.
struct DecayingSum {
    struct Term {
        double coef;
        double decay;
    };
    std::vector<Term> terms;

    double operator()(double tau) const {
        double v = 0.0;
        for (const auto& term : terms) v += term.coef * std::exp(-term.decay * tau);
        return v;
    }

    /// int_a^b e^{-r tau} f(tau) dtau.
    double discounted_integral(double r, double a, double b) const {
        if (b <= a) return 0.0;
        double v = 0.0;
        for (const auto& term : terms) {
            const double rho = r + term.decay;
            const double len = b - a;
            const double part = rho == 0.0 ? len : -std::expm1(-rho * len) / rho;
            v += term.coef * std::exp(-rho * a) * part;
        }
        return v;
    }
};

/// E[A(P(X_{t+tau})) | X_t = x] for one commodity, as a function of tau.
inline DecayingSum expected_payoff_path(const FactorModel& model, const ContractSpec& contract,
                                        std::span<const double> x, Eigen::Index commodity = 0) {
    if (x.size() != model.size() || static_cast<Eigen::Index>(model.size()) != contract.factors())
        throw std::invalid_argument("expected_payoff_path: dimension mismatch");
    const Eigen::MatrixXd loading = contract.factor_loading();
    DecayingSum g;
    double constant = contract.strike[commodity];
    for (std::size_t j = 0; j < model.size(); ++j) {
        const auto& f = model.factors[j];
        const double c = loading(commodity, static_cast<Eigen::Index>(j));
        const double m = f.long_run_mean();
        constant += c * m;
        g.terms.push_back({c * (x[j] - m), f.speed});
    }
    g.terms.push_back({constant, 0.0});
    return g;
}

enum class Side { lower, upper };

/// Exercise at full rate on [t1, t2] (absolute times).
struct ExerciseWindow {
    double t1 = 0.0;
    double t2 = 0.0;

    double length() const { return t2 - t1; }
    friend bool operator==(const ExerciseWindow&, const ExerciseWindow&) = default;
};

struct WindowChoice {
    double value = 0.0;
    ExerciseWindow window;
};

inline constexpr double kWindowBisectionTol = 1e-10;
inline constexpr double kEmptyWindow = 1e-12;

/// rate * int_{t1}^{t2} e^{-r(s-t)} g(s-t) ds.
inline double window_value(const DecayingSum& g, double r, double rate, double t, ExerciseWindow w) {
    if (w.length() < kEmptyWindow) return 0.0;
    return rate * g.discounted_integral(r, w.t1 - t, w.t2 - t);
}

/// V(T, z, x) = 0 and V(t, M, x) = 0.
inline double bc_terminal_and_full(const ContractSpec& contract, double t, double z) {
    const double M = contract.volume_cap[0];
    if (!(t >= contract.horizon || z >= M))
        throw std::invalid_argument("bc_terminal_and_full: requires t = T or z = M");
    return 0.0;
}

namespace detail {

inline double residual_budget_time(const ContractSpec& c, double z) {
    return std::max(0.0, (c.volume_cap[0] - z) / c.rate_cap[0]);
}

template <class F>
double bisect(F&& f, double a, double b, double fa) {
    while (b - a > kWindowBisectionTol) {
        const double m = 0.5 * (a + b);
        const double fm = f(m);
        if ((fm > 0.0) == (fa > 0.0)) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    return 0.5 * (a + b);
}

/// Sign changes of f on [a, b], scanned on `cells` subintervals and refined by bisection.
template <class F>
void bracketed_roots(F&& f, double a, double b, int cells, std::vector<double>& out) {
    if (!(b > a)) return;
    double x0 = a, f0 = f(a);
    for (int k = 1; k <= cells; ++k) {
        const double x1 = k == cells ? b : a + (b - a) * k / cells;
        const double f1 = f(x1);
        if (f0 == 0.0)
            out.push_back(x0);
        else if ((f0 > 0.0) != (f1 > 0.0) && f1 != 0.0)
            out.push_back(bisect(f, x0, x1, f0));
        x0 = x1;
        f0 = f1;
    }
    if (f0 == 0.0) out.push_back(b);
}

} // namespace detail

/// Maximizes J(t1, t2) = rate int_{t1}^{t2} e^{-r(s-t)} g(s-t) ds over
/// t <= t1 <= t2 <= t + horizon, t2 - t1 <= budget, for horizons up to `span`.
/// Candidates: corners, the roots of g (first-order conditions in t1 and t2),
/// and budget-active windows where e^{-r budget} g(tau1 + budget) = g(tau1).
/// g depends on s - t only, so root scans are done once on [0, span] and
/// filtered per horizon.
class WindowSearch {
public:
    static constexpr int kScanCells = 64;

    WindowSearch(DecayingSum g, double r, double rate, double span)
        : g_(std::move(g)), r_(r), rate_(rate), span_(span) {
        detail::bracketed_roots(g_, 0.0, span_, kScanCells, roots_);
    }

    const DecayingSum& integrand() const { return g_; }
    const std::vector<double>& roots() const { return roots_; }

    /// Start times of budget-active windows over the full span.
    std::vector<double> active_starts(double budget) const {
        std::vector<double> out;
        if (budget < kEmptyWindow || budget >= span_) return out;
        const double decay = std::exp(-r_ * budget);
        auto active = [&](double tau1) { return decay * g_(tau1 + budget) - g_(tau1); };
        detail::bracketed_roots(active, 0.0, span_ - budget, kScanCells, out);
        return out;
    }

    WindowChoice best(double t, double horizon, double budget) const {
        return best(t, horizon, budget, active_starts(budget));
    }

    /// `active` from active_starts(budget); only starts with tau1 + budget <= horizon are used.
    WindowChoice best(double t, double horizon, double budget, std::span<const double> active) const {
        WindowChoice result{0.0, {t, t}};
        horizon = std::min(horizon, span_);
        if (horizon < kEmptyWindow || budget < kEmptyWindow) return result;
        const double len = std::min(budget, horizon);

        auto consider = [&](double a, double b) {
            a = std::clamp(a, 0.0, horizon);
            b = std::clamp(b, a, std::min(horizon, a + len));
            if (b - a < kEmptyWindow) return;
            const double v = rate_ * g_.discounted_integral(r_, a, b);
            if (v > result.value) result = {v, {t + a, t + b}};
        };
        auto from = [&](double a) {
            consider(a, a + len);
            for (const double b : roots_)
                if (b > a && b <= horizon) consider(a, b);
            consider(a, horizon);
        };
        from(0.0);
        from(horizon - len);
        for (const double a : roots_)
            if (a <= horizon) from(a);
        if (budget < horizon)
            for (const double a : active)
                if (a + budget <= horizon) from(a);
        return result;
    }

private:
    DecayingSum g_;
    double r_, rate_, span_;
    std::vector<double> roots_;
};

inline WindowChoice best_window(const DecayingSum& g, double r, double rate, double t, double horizon,
                                double budget) {
    return WindowSearch(g, r, rate, horizon).best(t, horizon, budget);
}

/// One-factor boundary (Examples 1 and 2): at the upper truncation exercise
/// at full rate immediately, on [t, min(T, t + (M-z)/rate)]; at the lower
/// truncation defer to the last feasible window [max(t, T - (M-z)/rate), T].
/// Negative window values are replaced by 0 (never exercising is admissible).
inline double one_factor_boundary(const FactorModel& model, const ContractSpec& contract, Side side,
                                  double t, double z, double x_bound) {
    const double T = contract.horizon;
    if (t >= T || z >= contract.volume_cap[0]) return 0.0;
    const double budget = detail::residual_budget_time(contract, z);
    const double x[1] = {x_bound};
    const auto g = expected_payoff_path(model, contract, x);
    const ExerciseWindow w = side == Side::upper ? ExerciseWindow{t, std::min(T, t + budget)}
                                                 : ExerciseWindow{std::max(t, T - budget), T};
    return std::max(0.0, window_value(g, contract.discount, contract.rate_cap[0], t, w));
}

inline double bc_example1(const FactorModel& model, const ContractSpec& contract, Side side, double t,
                          double z, double x_bound) {
    return one_factor_boundary(model, contract, side, t, z, x_bound);
}

/// Same windows as bc_example1; the jump compensator enters through the
/// factor's conditional mean.
inline double bc_example2(const FactorModel& model, const ContractSpec& contract, Side side, double t,
                          double z, double x_bound) {
    return one_factor_boundary(model, contract, side, t, z, x_bound);
}

/// Two-factor upper x1 boundary: exercise immediately until the budget is spent.
inline double bc_example3_max(const FactorModel& model, const ContractSpec& contract, double t, double z,
                              double x1_max, double x2) {
    if (x2 < 0.0) throw std::invalid_argument("bc_example3_max: x2 must be nonnegative");
    const double T = contract.horizon;
    if (t >= T || z >= contract.volume_cap[0]) return 0.0;
    const double x[2] = {x1_max, x2};
    const auto g = expected_payoff_path(model, contract, x);
    const ExerciseWindow w{t, std::min(T, t + detail::residual_budget_time(contract, z))};
    return std::max(0.0, window_value(g, contract.discount, contract.rate_cap[0], t, w));
}

/// Two-factor lower x1 boundary: best deterministic exercise window.
inline WindowChoice bc_example3_min(const FactorModel& model, const ContractSpec& contract, double t,
                                    double z, double x1_min, double x2) {
    if (x2 < 0.0) throw std::invalid_argument("bc_example3_min: x2 must be nonnegative");
    const double T = contract.horizon;
    if (t >= T || z >= contract.volume_cap[0]) return {0.0, {t, t}};
    const double x[2] = {x1_min, x2};
    const auto g = expected_payoff_path(model, contract, x);
    return best_window(g, contract.discount, contract.rate_cap[0], t, T - t,
                       detail::residual_budget_time(contract, z));
}

} // namespace swing
