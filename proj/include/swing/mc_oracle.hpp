#pragma once

// Monte Carlo value of a feedback exercise policy. Exact OU transitions,
// left-endpoint payoff accumulation, per-step clipping to the residual
// budget. Each path draws from its own counter-split seed, so results do not
// depend on the thread count.

#include "swing/contract.hpp"
#include "swing/csv.hpp"
#include "swing/factor_models.hpp"
#include "swing/hjb_solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace swing {

/// (t, consumed volume z, factors x) -> exercise rate per commodity.
using PolicyFunction =
    std::function<void(double t, std::span<const double> z, std::span<const double> x, std::span<double> rate)>;

class InadmissiblePolicy : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    double max_consumption = 0.0; // largest total volume over paths and commodities
    std::size_t n_paths = 0;
};

inline PolicyFunction zero_policy() {
    return [](double, std::span<const double>, std::span<const double>, std::span<double> u) {
        std::fill(u.begin(), u.end(), 0.0);
    };
}

inline PolicyFunction unconstrained_policy_function(const ContractSpec& c) {
    return [c](double, std::span<const double>, std::span<const double> x, std::span<double> u) {
        const Eigen::VectorXd r = unconstrained_policy(c, x);
        for (std::size_t i = 0; i < u.size(); ++i) u[i] = r[static_cast<Eigen::Index>(i)];
    };
}

inline McEstimate evaluate_policy(const FactorModel& model, const ContractSpec& contract, const PolicyFunction& policy,
                                  std::span<const double> x0, std::size_t n_paths, std::size_t steps,
                                  std::uint64_t seed, unsigned threads = 1) {
    model.validate();
    contract.validate();
    if (x0.size() != model.size() || static_cast<Eigen::Index>(model.size()) != contract.factors())
        throw std::invalid_argument("evaluate_policy: dimension mismatch");
    if (n_paths < 1 || steps < 1) throw std::invalid_argument("evaluate_policy: need paths and steps >= 1");

    const double T = contract.horizon;
    const double h = T / static_cast<double>(steps);
    const ExactStepper stepper(model, h);
    const auto m = static_cast<std::size_t>(contract.commodities());
    std::vector<double> discount(steps);
    for (std::size_t k = 0; k < steps; ++k) discount[k] = std::exp(-contract.discount * static_cast<double>(k) * h);

    const Eigen::MatrixXd loading = contract.factor_loading();
    std::vector<double> payoffs(n_paths), consumption(n_paths);
    auto run = [&](std::size_t first, std::size_t last) {
        std::vector<double> x(x0.size()), z(m), u(m);
        for (std::size_t p = first; p < last; ++p) {
            std::mt19937_64 rng(split_seed(seed, p));
            std::copy(x0.begin(), x0.end(), x.begin());
            std::fill(z.begin(), z.end(), 0.0);
            double total = 0.0;
            for (std::size_t k = 0; k < steps; ++k) {
                const double t = static_cast<double>(k) * h;
                policy(t, z, x, u);
                double gain = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    const auto ii = static_cast<Eigen::Index>(i);
                    double a = contract.strike[ii];
                    for (std::size_t j = 0; j < x.size(); ++j) a += loading(ii, static_cast<Eigen::Index>(j)) * x[j];
                    if (!(u[i] >= 0.0) || u[i] > contract.rate_cap[ii] * (1.0 + 1e-12))
                        throw InadmissiblePolicy("evaluate_policy: rate " + round_trip(u[i]) + " outside [0, " +
                                                 round_trip(contract.rate_cap[ii]) + "]");
                    const double used = std::min(u[i] * h, std::max(0.0, contract.volume_cap[ii] - z[i]));
                    gain += a * used;
                    z[i] += used;
                }
                total += discount[k] * gain;
                stepper.advance(x, rng);
            }
            payoffs[p] = total;
            consumption[p] = *std::max_element(z.begin(), z.end());
        }
    };

    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n_paths)));
    if (threads == 1) {
        run(0, n_paths);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(threads);
        for (unsigned w = 0; w < threads; ++w) {
            const std::size_t first = n_paths * w / threads, last = n_paths * (w + 1) / threads;
            pool.emplace_back([&, w, first, last] {
                try {
                    run(first, last);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    // ordered reduction: identical for any thread count
    McEstimate est;
    est.n_paths = n_paths;
    double sum = 0.0;
    for (const double v : payoffs) sum += v;
    est.mean = sum / static_cast<double>(n_paths);
    double ss = 0.0;
    for (const double v : payoffs) ss += (v - est.mean) * (v - est.mean);
    est.std_error = n_paths > 1 ? std::sqrt(ss / static_cast<double>(n_paths - 1) / static_cast<double>(n_paths)) : 0.0;
    est.max_consumption = *std::max_element(consumption.begin(), consumption.end());
    if (est.max_consumption > contract.volume_cap.maxCoeff() + 1e-12)
        throw InadmissiblePolicy("evaluate_policy: consumption exceeds the volume cap");
    return est;
}

/// Bang-bang feedback rule from stored V_z snapshots: full rate where
/// A(P(x)) + V_z(t, z, x) > 0, interpolated multilinearly in (t, z, x).
inline PolicyFunction policy_from_surface(std::shared_ptr<const DecisionField> field, const ContractSpec& contract) {
    if (!field || field->times.size() < 2) throw std::invalid_argument("policy_from_surface: need at least 2 decision snapshots");
    if (contract.commodities() != 1) throw std::invalid_argument("policy_from_surface: one commodity only");
    const Eigen::MatrixXd loading = contract.factor_loading();
    const double w1 = loading(0, 0);
    const double w2 = loading.cols() > 1 ? loading(0, 1) : 0.0;
    const double strike = contract.strike[0], rate = contract.rate_cap[0], cap = contract.volume_cap[0];
    return [field, w1, w2, strike, rate, cap](double t, std::span<const double> z, std::span<const double> x,
                                              std::span<double> u) {
        if (z[0] >= cap) {
            u[0] = 0.0;
            return;
        }
        const double x2 = x.size() > 1 ? x[1] : 0.0;
        const double a = w1 * x[0] + w2 * x2 + strike;
        u[0] = a + field->marginal(t, z[0], x[0], x2) > 0.0 ? rate : 0.0;
    };
}

/// Appends config_hash,n_paths,mean,stderr,wall_seconds; writes the header for a new file.
inline void append_run_ledger(const std::filesystem::path& path, std::uint64_t config_hash, const McEstimate& est,
                              double wall_seconds) {
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    std::ofstream os(path, std::ios::app);
    if (!os) throw std::runtime_error("append_run_ledger: cannot open " + path.string());
    if (fresh) CsvRow(os) << "config_hash" << "n_paths" << "mean" << "stderr" << "wall_seconds";
    CsvRow(os) << config_hash << static_cast<std::uint64_t>(est.n_paths) << est.mean << est.std_error << wall_seconds;
}

} // namespace swing
