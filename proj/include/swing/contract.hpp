#pragma once

// Swing contract: price map P(x) = Bx, affine payoff A(p) = Qp + K, volume
// and rate caps, and the closed-form solution when no volume cap binds.

#include "swing/factor_models.hpp"
#include "swing/quadrature.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace swing {

struct ContractSpec {
    Eigen::MatrixXd price_matrix;  // m x n
    Eigen::MatrixXd payoff_matrix; // m x m
    Eigen::VectorXd strike;        // m
    Eigen::VectorXd volume_cap;    // m
    Eigen::VectorXd rate_cap;      // m
    double horizon = 1.0;
    double discount = 0.0;

    Eigen::Index commodities() const { return price_matrix.rows(); }
    Eigen::Index factors() const { return price_matrix.cols(); }

    /// Q B, the payoff's linear part as a function of the factors.
    Eigen::MatrixXd factor_loading() const { return payoff_matrix * price_matrix; }

    void validate() const {
        const auto m = commodities();
        if (m < 1 || m > factors()) throw std::invalid_argument("ContractSpec: need 1 <= m <= n");
        if (payoff_matrix.rows() != m || payoff_matrix.cols() != m)
            throw std::invalid_argument("ContractSpec: payoff matrix must be m x m");
        if (strike.size() != m || volume_cap.size() != m || rate_cap.size() != m)
            throw std::invalid_argument("ContractSpec: strike, volume cap and rate cap must have m entries");
        if (Eigen::FullPivLU<Eigen::MatrixXd>(price_matrix).rank() != m)
            throw std::invalid_argument("ContractSpec: price matrix must have rank m");
        if ((rate_cap.array() <= 0.0).any()) throw std::invalid_argument("ContractSpec: rate caps must be positive");
        if ((volume_cap.array() < 0.0).any())
            throw std::invalid_argument("ContractSpec: volume caps must be nonnegative");
        if (!(horizon > 0.0)) throw std::invalid_argument("ContractSpec: horizon must be positive");
        if (!(discount >= 0.0)) throw std::invalid_argument("ContractSpec: discount must be nonnegative");
    }

    /// Single commodity priced as weights . x with payoff p + strike.
    static ContractSpec single(std::vector<double> weights, double strike, double volume, double rate,
                               double horizon, double discount) {
        ContractSpec c;
        c.price_matrix = Eigen::Map<const Eigen::RowVectorXd>(weights.data(),
                                                              static_cast<Eigen::Index>(weights.size()));
        c.payoff_matrix = Eigen::MatrixXd::Identity(1, 1);
        c.strike = Eigen::VectorXd::Constant(1, strike);
        c.volume_cap = Eigen::VectorXd::Constant(1, volume);
        c.rate_cap = Eigen::VectorXd::Constant(1, rate);
        c.horizon = horizon;
        c.discount = discount;
        c.validate();
        return c;
    }

    friend bool operator==(const ContractSpec& a, const ContractSpec& b) {
        auto same = [](const auto& x, const auto& y) {
            return x.rows() == y.rows() && x.cols() == y.cols() && x == y;
        };
        return same(a.price_matrix, b.price_matrix) && same(a.payoff_matrix, b.payoff_matrix) &&
               same(a.strike, b.strike) && same(a.volume_cap, b.volume_cap) &&
               same(a.rate_cap, b.rate_cap) && a.horizon == b.horizon && a.discount == b.discount;
    }
};

/// Consumed volume z, 0 <= z <= M componentwise.
struct VolumeState {
    Eigen::VectorXd consumed;

    bool admissible(const ContractSpec& spec) const {
        return consumed.size() == spec.commodities() && (consumed.array() >= 0.0).all() &&
               (consumed.array() <= spec.volume_cap.array()).all();
    }
};

inline Eigen::VectorXd payoff(const ContractSpec& spec, std::span<const double> x) {
    if (static_cast<Eigen::Index>(x.size()) != spec.factors())
        throw std::invalid_argument("payoff: state has " + std::to_string(x.size()) + " factors, contract expects " +
                                    std::to_string(spec.factors()));
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
    return spec.payoff_matrix * (spec.price_matrix * xv) + spec.strike;
}

/// True when the total volume cap binds: M^i < rate^i T.
inline bool is_effective(const ContractSpec& spec, Eigen::Index i) {
    if (i < 0 || i >= spec.commodities()) throw std::out_of_range("is_effective: commodity index");
    return spec.volume_cap[i] < spec.rate_cap[i] * spec.horizon;
}

/// Full rate where the payoff is strictly positive, zero otherwise.
inline Eigen::VectorXd unconstrained_policy(const ContractSpec& spec, std::span<const double> x) {
    const Eigen::VectorXd a = payoff(spec, x);
    Eigen::VectorXd u(a.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) u[i] = a[i] > 0.0 ? spec.rate_cap[i] : 0.0;
    return u;
}

/// Value at (t, x) of exercising every commodity at full rate whenever its
/// payoff is positive: sum_i rate^i int_t^T e^{-r(s-t)} E[(A^i(P(X_s)))^+] ds.
/// The marginal of A^i at time s is Gaussian for jump-free models, so the
/// integrand is closed form; the time integral uses Gauss-Legendre.
inline double unconstrained_value(const ContractSpec& spec, const FactorModel& model, double t,
                                  std::span<const double> x, int quad_nodes = 64) {
    spec.validate();
    model.validate();
    if (model.has_jumps())
        throw std::invalid_argument("unconstrained_value: no closed-form marginal with jumps; use the Monte Carlo oracle");
    if (static_cast<Eigen::Index>(model.size()) != spec.factors() || x.size() != model.size())
        throw std::invalid_argument("unconstrained_value: dimension mismatch");
    if (t >= spec.horizon) return 0.0;

    const Eigen::MatrixXd loading = spec.factor_loading();
    std::vector<std::size_t> diffusive;
    for (std::size_t j = 0; j < model.size(); ++j)
        if (model.factors[j].vol > 0.0) diffusive.push_back(j);

    auto integrand = [&](double s) {
        const double tau = s - t;
        double total = 0.0;
        for (Eigen::Index i = 0; i < spec.commodities(); ++i) {
            double mean = spec.strike[i];
            for (std::size_t j = 0; j < model.size(); ++j)
                mean += loading(i, j) * conditional_mean(model.factors[j], x[j], tau);
            double var = 0.0;
            for (std::size_t a = 0; a < diffusive.size(); ++a)
                for (std::size_t b = 0; b < diffusive.size(); ++b) {
                    const auto& fa = model.factors[diffusive[a]];
                    const auto& fb = model.factors[diffusive[b]];
                    const double k = fa.speed + fb.speed;
                    var += loading(i, diffusive[a]) * loading(i, diffusive[b]) *
                           model.correlation(a, b) * fa.vol * fb.vol * (-std::expm1(-k * tau)) / k;
                }
            total += spec.rate_cap[i] * positive_part_mean(mean, std::sqrt(std::max(var, 0.0)));
        }
        return std::exp(-spec.discount * tau) * total;
    };
    return integrate(gauss_legendre(quad_nodes), integrand, t, spec.horizon);
}

} // namespace swing
