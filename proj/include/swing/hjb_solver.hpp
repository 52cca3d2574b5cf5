#pragma once

// Finite-difference solver for the swing HJB equation in (t, z, x1[, x2]).
//
// Backward Euler in t. Diffusion and drift in x1 are implicit (three-point
// nonuniform central differences, one tridiagonal solve per (z, x2) line).
// The control term, the x2 transport and the jump integral are explicit in
// the later time level:
//   z:    forward difference, u = rate where A + V_z > 0 (bang-bang)
//   x2:   backward difference (drift -speed * x2 <= 0)
//   jump: midpoint rule over grid cells, linear extrapolation past the top
//         node, tail truncated where the remaining jump mass is below tol.

#include "swing/boundary.hpp"
#include "swing/contract.hpp"
#include "swing/csv.hpp"
#include "swing/factor_models.hpp"
#include "swing/grid.hpp"
#include "swing/tridiagonal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace swing {

enum class X1Boundary {
    analytic, // Dirichlet values from the deterministic exercise windows
    linear    // V_x1x1 = 0 at both ends
};

struct SchemeConfig {
    double dt = 1.0 / 250.0;
    double dz = 1.0 / 250.0;
    double x1_min = 0.0;
    double x1_max = 1.0;
    std::size_t x1_nodes = 101;
    double x1_cluster = std::numeric_limits<double>::quiet_NaN(); // NaN: long-run mean of x1
    double x1_cluster_strength = 4.0;
    double x2_max = 0.0;
    double dx2 = 0.0;
    double jump_tol = 1e-8;
    X1Boundary x1_boundary = X1Boundary::analytic;
    std::vector<double> retain_times;
    std::size_t policy_stride = 0; // 0: no decision snapshots

    void validate() const {
        if (!(dt > 0.0) || !(dz > 0.0)) throw std::invalid_argument("SchemeConfig: dt and dz must be positive");
        if (!(x1_min < x1_max)) throw std::invalid_argument("SchemeConfig: need x1_min < x1_max");
        if (x1_nodes < 5) throw std::invalid_argument("SchemeConfig: need at least 5 x1 nodes");
        if (!(jump_tol > 0.0 && jump_tol < 1.0)) throw std::invalid_argument("SchemeConfig: jump_tol must be in (0, 1)");
        if (x2_max < 0.0 || dx2 < 0.0) throw std::invalid_argument("SchemeConfig: x2_max and dx2 must be nonnegative");
    }

    friend bool operator==(const SchemeConfig& a, const SchemeConfig& b) {
        auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
        return a.dt == b.dt && a.dz == b.dz && a.x1_min == b.x1_min && a.x1_max == b.x1_max &&
               a.x1_nodes == b.x1_nodes && same(a.x1_cluster, b.x1_cluster) &&
               a.x1_cluster_strength == b.x1_cluster_strength && a.x2_max == b.x2_max && a.dx2 == b.dx2 &&
               a.jump_tol == b.jump_tol && a.x1_boundary == b.x1_boundary && a.retain_times == b.retain_times &&
               a.policy_stride == b.policy_stride;
    }
};

/// Model and contract the solver accepts: one commodity; either one factor
/// (diffusive, optionally with jumps) or two factors where the second is a
/// pure-jump OU with zero drift intercept living on x2 >= 0.
struct PdeProblem {
    FactorModel model;
    ContractSpec contract;

    bool two_factor() const { return model.size() == 2; }

    void validate() const {
        model.validate();
        contract.validate();
        if (contract.commodities() != 1) throw std::invalid_argument("PdeProblem: solver handles one commodity");
        if (model.size() < 1 || model.size() > 2) throw std::invalid_argument("PdeProblem: one or two factors");
        if (contract.factors() != static_cast<Eigen::Index>(model.size()))
            throw std::invalid_argument("PdeProblem: contract and model disagree on factor count");
        if (two_factor()) {
            const auto& f1 = model.factors[0];
            const auto& f2 = model.factors[1];
            if (f1.has_jump()) throw std::invalid_argument("PdeProblem: jumps in x1 need the one-factor form");
            if (f2.vol != 0.0) throw std::invalid_argument("PdeProblem: x2 must have no diffusion");
            if (f2.drift_intercept() != 0.0)
                throw std::invalid_argument("PdeProblem: x2 drift intercept must be 0 (transport towards x2 = 0)");
        }
    }
};

struct Grid {
    double horizon = 1.0;
    std::size_t steps = 0;
    double dt = 0.0;
    std::vector<double> z;
    double dz = 0.0;
    std::vector<double> x1;
    std::vector<double> x2{0.0};
    double dx2 = 0.0;

    std::size_t nz() const { return z.size(); }
    std::size_t n1() const { return x1.size(); }
    std::size_t n2() const { return x2.size(); }
    std::size_t size() const { return nz() * n1() * n2(); }
    bool two_factor() const { return x2.size() > 1; }
    std::size_t index(std::size_t k, std::size_t j, std::size_t i) const { return (k * n2() + j) * n1() + i; }
    double time(std::size_t n) const { return n >= steps ? horizon : static_cast<double>(n) * dt; }

    static std::size_t divisions(double length, double h, const char* what) {
        const double q = length / h;
        const double nq = std::round(q);
        if (nq < 1.0 || std::abs(q - nq) > 1e-6 * std::max(1.0, q))
            throw std::invalid_argument(std::string("Grid: ") + what + " must divide its range");
        return static_cast<std::size_t>(nq);
    }

    static Grid build(const PdeProblem& p, const SchemeConfig& c) {
        p.validate();
        c.validate();
        Grid g;
        g.horizon = p.contract.horizon;
        g.steps = divisions(g.horizon, c.dt, "dt");
        g.dt = g.horizon / static_cast<double>(g.steps);
        const double M = p.contract.volume_cap[0];
        if (!(M > 0.0)) throw std::invalid_argument("Grid: volume cap must be positive");
        const std::size_t nz = divisions(M, c.dz, "dz");
        if (nz < 2) throw std::invalid_argument("Grid: need at least 3 z nodes");
        g.z = uniform_axis(0.0, M, nz + 1);
        g.dz = M / static_cast<double>(nz);
        const double center = std::isnan(c.x1_cluster) ? p.model.factors[0].long_run_mean() : c.x1_cluster;
        g.x1 = build_adaptive_x1(c.x1_min, c.x1_max, c.x1_nodes, center, c.x1_cluster_strength);
        if (p.two_factor()) {
            if (!(c.x2_max > 0.0) || !(c.dx2 > 0.0))
                throw std::invalid_argument("Grid: two-factor problems need x2_max > 0 and dx2 > 0");
            const std::size_t n = divisions(c.x2_max, c.dx2, "dx2");
            if (n < 2) throw std::invalid_argument("Grid: need at least 3 x2 nodes");
            g.x2 = uniform_axis(0.0, c.x2_max, n + 1);
            g.dx2 = c.x2_max / static_cast<double>(n);
        }
        return g;
    }

    /// Multilinear interpolation of a node field at (z, x1, x2). Clamped in z
    /// and x1; linear extrapolation above x2_max.
    template <class T>
    double interpolate(const T* data, double zv, double x1v, double x2v) const {
        const Bracket bz = locate_uniform(0.0, dz, nz(), zv);
        const Bracket b1 = locate(x1, x1v);
        Bracket b2{0, 0.0};
        if (two_factor()) b2 = locate_uniform(0.0, dx2, n2(), std::max(x2v, 0.0), true);
        double v = 0.0;
        for (int a = 0; a < 2; ++a) {
            const double wa = a ? bz.weight : 1.0 - bz.weight;
            if (wa == 0.0) continue;
            for (int b = 0; b < (two_factor() ? 2 : 1); ++b) {
                const double wb = two_factor() ? (b ? b2.weight : 1.0 - b2.weight) : 1.0;
                if (wb == 0.0) continue;
                const std::size_t base = index(bz.lo + a, b2.lo + b, b1.lo);
                const double line = (1.0 - b1.weight) * static_cast<double>(data[base]) +
                                    b1.weight * static_cast<double>(data[base + 1]);
                v += wa * wb * line;
            }
        }
        return v;
    }
};

/// Solution slice at one time level. `vz` and `control` are the forward
/// z-difference and the bang-bang decision taken from the later slice, i.e.
/// the decision applied on [time, time + dt).
struct ValueSurface {
    double time = 0.0;
    std::size_t step = 0;
    std::shared_ptr<const Grid> grid;
    std::vector<double> values, vz, control;

    double value(std::size_t k, std::size_t j, std::size_t i) const { return values[grid->index(k, j, i)]; }
    double interpolate(double z, double x1, double x2 = 0.0) const {
        return grid->interpolate(values.data(), z, x1, x2);
    }
};

/// Stored V_z snapshots for building a feedback policy.
struct DecisionField {
    std::shared_ptr<const Grid> grid;
    std::vector<double> times;
    std::vector<std::vector<float>> vz;

    /// V_z interpolated in (t, z, x1, x2); constant outside the stored time range.
    double marginal(double t, double z, double x1, double x2 = 0.0) const {
        if (times.empty()) throw std::logic_error("DecisionField: no snapshots");
        const Bracket bt = locate(times, t);
        if (times.size() == 1) return grid->interpolate(vz[0].data(), z, x1, x2);
        double v = 0.0;
        if (bt.weight < 1.0) v += (1.0 - bt.weight) * grid->interpolate(vz[bt.lo].data(), z, x1, x2);
        if (bt.weight > 0.0) v += bt.weight * grid->interpolate(vz[bt.lo + 1].data(), z, x1, x2);
        return v;
    }
};

struct SolveResult {
    std::shared_ptr<const Grid> grid;
    std::vector<ValueSurface> surfaces; // ascending in time, always includes t = 0
    DecisionField decisions;
    double cfl = 0.0;
    std::vector<std::string> warnings;

    const ValueSurface& at(double t) const {
        const ValueSurface* best = nullptr;
        for (const auto& s : surfaces)
            if (!best || std::abs(s.time - t) < std::abs(best->time - t)) best = &s;
        if (!best || std::abs(best->time - t) > 0.5 * grid->dt + 1e-12)
            throw std::out_of_range("SolveResult: no retained slice at t = " + round_trip(t));
        return *best;
    }
    const ValueSurface& initial() const { return surfaces.front(); }
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// CFL number of the explicit part: max over x2 of dt/dx2 * |x2 drift| + dt/dz * rate.
inline double cfl_number(double dt, double dz, double rate, double dx2 = 0.0, double x2_max = 0.0,
                         double x2_speed = 0.0) {
    double c = dt / dz * rate;
    if (dx2 > 0.0) c += dt / dx2 * x2_speed * x2_max;
    return c;
}

inline double cfl_number(const PdeProblem& p, const Grid& g) {
    const double speed = p.two_factor() ? p.model.factors[1].speed : 0.0;
    return cfl_number(g.dt, g.dz, p.contract.rate_cap[0], g.dx2, g.x2.back(), speed);
}

/// Largest dt with CFL number <= 1 on the same spatial grid.
inline double max_stable_dt(const PdeProblem& p, const Grid& g) {
    return g.dt / cfl_number(p, g);
}

class HjbSolver {
public:
    HjbSolver(PdeProblem problem, SchemeConfig config)
        : problem_(std::move(problem)), config_(std::move(config)) {
        grid_ = std::make_shared<const Grid>(Grid::build(problem_, config_));
        const Grid& g = *grid_;
        cfl_ = cfl_number(problem_, g);
        if (cfl_ > 1.0)
            warnings_.push_back("CFL number " + round_trip(cfl_) + " exceeds 1; the explicit part may be unstable");

        const Eigen::MatrixXd loading = problem_.contract.factor_loading();
        w1_ = loading(0, 0);
        w2_ = g.two_factor() ? loading(0, 1) : 0.0;
        rate_ = problem_.contract.rate_cap[0];
        r_ = problem_.contract.discount;
        payoff_x1_.resize(g.n1());
        for (std::size_t i = 0; i < g.n1(); ++i) payoff_x1_[i] = w1_ * g.x1[i] + problem_.contract.strike[0];

        build_jump_weights();
        build_x1_operator();
        if (config_.x1_boundary == X1Boundary::analytic) build_boundary_data();
    }

    const PdeProblem& problem() const { return problem_; }
    const SchemeConfig& config() const { return config_; }
    const Grid& grid() const { return *grid_; }
    std::shared_ptr<const Grid> grid_ptr() const { return grid_; }
    double cfl() const { return cfl_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

    double payoff_at(std::size_t j, std::size_t i) const { return payoff_x1_[i] + w2_ * grid_->x2[j]; }

    ValueSurface terminal() const {
        const Grid& g = *grid_;
        ValueSurface s{g.horizon, g.steps, grid_, std::vector<double>(g.size(), 0.0),
                       std::vector<double>(g.size(), 0.0), std::vector<double>(g.size(), 0.0)};
        for (std::size_t k = 0; k < g.nz(); ++k)
            for (std::size_t j = 0; j < g.n2(); ++j)
                for (std::size_t i = 0; i < g.n1(); ++i)
                    s.control[g.index(k, j, i)] = (k + 1 < g.nz() && payoff_at(j, i) > 0.0) ? rate_ : 0.0;
        return s;
    }

    /// One backward step from the slice at t_{n+1} to t_n.
    ValueSurface step_backward(const ValueSurface& next) const {
        if (next.step == 0 || next.grid != grid_) throw std::invalid_argument("step_backward: slice not from this solver");
        const std::size_t n = next.step - 1;
        ValueSurface out{grid_->time(n), n, grid_, std::vector<double>(grid_->size()),
                         std::vector<double>(grid_->size()), std::vector<double>(grid_->size())};
        Workspace ws(*grid_);
        step(n, next.values, out.values, out.vz.data(), out.control.data(), ws);
        check_finite(out);
        return out;
    }

    SolveResult solve() const {
        const Grid& g = *grid_;
        SolveResult res;
        res.grid = grid_;
        res.cfl = cfl_;
        res.warnings = warnings_;
        res.decisions.grid = grid_;

        std::vector<char> keep(g.steps + 1, 0);
        keep[0] = 1;
        for (const double t : config_.retain_times) {
            if (t < 0.0 || t > g.horizon) throw std::invalid_argument("solve: retained time outside [0, T]");
            keep[static_cast<std::size_t>(std::llround(t / g.dt))] = 1;
        }
        const std::size_t stride = config_.policy_stride;

        ValueSurface next = terminal();
        std::vector<ValueSurface> kept;
        if (keep[g.steps]) kept.push_back(next);
        ValueSurface cur{0.0, 0, grid_, std::vector<double>(g.size()), std::vector<double>(g.size()),
                         std::vector<double>(g.size())};
        Workspace ws(g);
        std::vector<std::vector<float>> snaps;
        std::vector<double> snap_times;
        for (std::size_t n = g.steps; n-- > 0;) {
            cur.step = n;
            cur.time = g.time(n);
            const bool snap = stride > 0 && (n % stride == 0 || n + 1 == g.steps);
            const bool need = keep[n] || snap;
            step(n, next.values, cur.values, need ? cur.vz.data() : nullptr, need ? cur.control.data() : nullptr, ws);
            check_finite(cur);
            if (keep[n]) kept.push_back(cur);
            if (snap) {
                snaps.emplace_back(cur.vz.begin(), cur.vz.end());
                snap_times.push_back(cur.time);
            }
            std::swap(cur, next);
        }
        std::reverse(kept.begin(), kept.end());
        std::reverse(snaps.begin(), snaps.end());
        std::reverse(snap_times.begin(), snap_times.end());
        res.surfaces = std::move(kept);
        res.decisions.vz = std::move(snaps);
        res.decisions.times = std::move(snap_times);
        return res;
    }

    /// Dirichlet values at x1_min and x1_max for time level n, indexed k * n2 + j.
    void boundary_values(std::size_t n, std::vector<double>& lower, std::vector<double>& upper) const {
        const Grid& g = *grid_;
        if (config_.x1_boundary != X1Boundary::analytic)
            throw std::logic_error("boundary_values: linear x1 boundary has no Dirichlet data");
        lower.assign(g.nz() * g.n2(), 0.0);
        upper.assign(g.nz() * g.n2(), 0.0);
        const double t = g.time(n);
        const double T = g.horizon;
        if (n >= g.steps) return;
        for (std::size_t k = 0; k + 1 < g.nz(); ++k) {
            const double budget = detail::residual_budget_time(problem_.contract, g.z[k]);
            for (std::size_t j = 0; j < g.n2(); ++j) {
                const std::size_t s = k * g.n2() + j;
                upper[s] = std::max(0.0, window_value(g_upper_[j], r_, rate_, t, {t, std::min(T, t + budget)}));
                if (g.two_factor())
                    lower[s] = search_lower_[j].best(t, T - t, budget, active_lower_[s]).value;
                else
                    lower[s] = std::max(0.0, window_value(g_lower_[j], r_, rate_, t, {std::max(t, T - budget), T}));
            }
        }
    }

    /// Sum of the x2 transport and jump terms applied to a slice (0 on the z = M row).
    void explicit_terms(const std::vector<double>& src, std::vector<double>& out) const {
        const Grid& g = *grid_;
        out.assign(g.size(), 0.0);
        std::vector<double> scratch(g.n1());
        for (std::size_t k = 0; k + 1 < g.nz(); ++k)
            explicit_plane(&src[g.index(k, 0, 0)], &out[g.index(k, 0, 0)], scratch.data());
    }

    /// Explicit terms on one z plane (n2 x n1 values, x1 fastest); overwrites `out`.
    void explicit_plane(const double* src, double* out, double* scratch) const {
        const Grid& g = *grid_;
        const std::size_t n1 = g.n1(), n2 = g.n2();
        std::fill(out, out + n1 * n2, 0.0);
        if (g.two_factor()) {
            const double speed = problem_.model.factors[1].speed;
            for (std::size_t j = 1; j < n2; ++j) {
                const double c = speed * g.x2[j] / g.dx2;
                const double* v = src + j * n1;
                const double* below = v - n1;
                double* o = out + j * n1;
                for (std::size_t i = 0; i < n1; ++i) o[i] -= c * (v[i] - below[i]);
            }
        }
        if (!jump_factor()) return;
        if (g.two_factor()) {
            // recursion down x2 for all x1 at once
            double* S = scratch;
            const double* top = src + (n2 - 1) * n1;
            const double* under = top - n1;
            for (std::size_t i = 0; i < n1; ++i) {
                const double slope = top[i] - under[i];
                S[i] = tail_weight_ * (tail_g0_ * (top[i] + 0.5 * slope) + tail_g1_ * slope);
            }
            for (std::size_t j = n2; j-- > 0;) {
                const double* v = src + j * n1;
                if (j + 1 < n2) {
                    const double* up = v + n1;
                    const double w = 0.5 * jump_w_[j], q = jump_q_[j];
                    for (std::size_t i = 0; i < n1; ++i) S[i] = w * (v[i] + up[i]) + q * S[i];
                }
                double* o = out + j * n1;
                const double wt = jump_wtot_[j];
                for (std::size_t i = 0; i < n1; ++i) o[i] += S[i] - wt * v[i];
            }
        } else {
            const double* v = src;
            const double slope = v[n1 - 1] - v[n1 - 2];
            double S = tail_weight_ * (tail_g0_ * (v[n1 - 1] + 0.5 * slope) + tail_g1_ * slope);
            out[n1 - 1] += S - jump_wtot_[n1 - 1] * v[n1 - 1];
            for (std::size_t i = n1 - 1; i-- > 0;) {
                S = jump_w_[i] * 0.5 * (v[i] + v[i + 1]) + jump_q_[i] * S;
                out[i] += S - jump_wtot_[i] * v[i];
            }
        }
    }

    /// (L1 v)_i at an interior x1 node of a line.
    double apply_x1_operator(const double* v, std::size_t i) const {
        return op_lower_[i] * v[i - 1] + op_diag_[i] * v[i] + op_upper_[i] * v[i + 1];
    }

private:
    struct Workspace {
        explicit Workspace(const Grid& g) : plane(g.n1() * g.n2()), scratch(g.n1()), rhs(g.n1() * g.n2()) {}
        std::vector<double> plane, scratch, rhs, lower, upper; // rhs is x1-major: rhs[i * n2 + j]
    };

    const OUFactor* jump_factor() const {
        const auto& fs = problem_.model.factors;
        const OUFactor& f = grid_->two_factor() ? fs[1] : fs[0];
        return f.has_jump() ? &f : nullptr;
    }

    void build_x1_operator() {
        const Grid& g = *grid_;
        const auto& f = problem_.model.factors[0];
        const std::size_t n = g.n1();
        op_lower_.assign(n, 0.0);
        op_diag_.assign(n, 0.0);
        op_upper_.assign(n, 0.0);
        const double half_var = 0.5 * f.vol * f.vol;
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double hm = g.x1[i] - g.x1[i - 1];
            const double hp = g.x1[i + 1] - g.x1[i];
            const double drift = f.drift_intercept() - f.speed * g.x1[i];
            const double lo = (2.0 * half_var - drift * hp) / (hm * (hm + hp));
            const double up = (2.0 * half_var + drift * hm) / (hp * (hm + hp));
            op_lower_[i] = lo;
            op_upper_[i] = up;
            op_diag_[i] = -(lo + up);
        }
        // unknowns are the interior nodes 1..n-2
        const std::size_t m = n - 2;
        const double dt = g.dt;
        std::vector<double> a(m), b(m), c(m);
        for (std::size_t r = 0; r < m; ++r) {
            const std::size_t i = r + 1;
            a[r] = -dt * op_lower_[i];
            b[r] = 1.0 + r_ * dt - dt * op_diag_[i];
            c[r] = -dt * op_upper_[i];
        }
        edge_lower_ = a[0];
        edge_upper_ = c[m - 1];
        if (config_.x1_boundary == X1Boundary::linear) {
            // V0 = V1 - rho0 (V2 - V1), V_{n-1} = V_{n-2} + rho1 (V_{n-2} - V_{n-3})
            rho_lo_ = (g.x1[1] - g.x1[0]) / (g.x1[2] - g.x1[1]);
            rho_hi_ = (g.x1[n - 1] - g.x1[n - 2]) / (g.x1[n - 2] - g.x1[n - 3]);
            b[0] += a[0] * (1.0 + rho_lo_);
            c[0] -= a[0] * rho_lo_;
            b[m - 1] += c[m - 1] * (1.0 + rho_hi_);
            a[m - 1] -= c[m - 1] * rho_hi_;
        }
        a[0] = 0.0;
        c[m - 1] = 0.0;
        matrix_ = Tridiagonal(std::move(a), std::move(b), std::move(c));
    }

    // Midpoint weights per cell [x_i, x_{i+1}] of the jump axis, and the
    // closed tail of cells of the last width beyond the top node.
    void build_jump_weights() {
        const OUFactor* f = jump_factor();
        if (!f) return;
        const Grid& g = *grid_;
        const std::vector<double>& x = g.two_factor() ? g.x2 : g.x1;
        const std::size_t n = x.size();
        const double freq = f->jump->frequency, alpha = f->jump->rate;
        jump_w_.assign(n, 0.0);
        jump_q_.assign(n, 0.0);
        jump_wtot_.assign(n, 0.0);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const double h = x[i + 1] - x[i];
            jump_w_[i] = freq * alpha * h * std::exp(-0.5 * alpha * h);
            jump_q_[i] = std::exp(-alpha * h);
        }
        const double hl = x[n - 1] - x[n - 2];
        const double q = std::exp(-alpha * hl);
        const auto cells = static_cast<std::size_t>(std::ceil(-std::log(config_.jump_tol) / (alpha * hl)));
        tail_weight_ = freq * alpha * hl * std::exp(-0.5 * alpha * hl);
        tail_g0_ = tail_g1_ = 0.0;
        double qs = 1.0;
        for (std::size_t s = 0; s < cells; ++s) {
            tail_g0_ += qs;
            tail_g1_ += static_cast<double>(s) * qs;
            qs *= q;
        }
        tail_cells_ = cells;
        jump_wtot_[n - 1] = tail_weight_ * tail_g0_;
        for (std::size_t i = n - 1; i-- > 0;) jump_wtot_[i] = jump_w_[i] + jump_q_[i] * jump_wtot_[i + 1];
    }

    void build_boundary_data() {
        const Grid& g = *grid_;
        const double T = g.horizon;
        for (std::size_t j = 0; j < g.n2(); ++j) {
            std::vector<double> lo{g.x1.front()}, hi{g.x1.back()};
            if (g.two_factor()) {
                lo.push_back(g.x2[j]);
                hi.push_back(g.x2[j]);
            }
            g_lower_.push_back(expected_payoff_path(problem_.model, problem_.contract, lo));
            g_upper_.push_back(expected_payoff_path(problem_.model, problem_.contract, hi));
        }
        if (!g.two_factor()) return;
        for (std::size_t j = 0; j < g.n2(); ++j) search_lower_.emplace_back(g_lower_[j], r_, rate_, T);
        active_lower_.resize(g.nz() * g.n2());
        for (std::size_t k = 0; k + 1 < g.nz(); ++k) {
            const double budget = detail::residual_budget_time(problem_.contract, g.z[k]);
            for (std::size_t j = 0; j < g.n2(); ++j)
                active_lower_[k * g.n2() + j] = search_lower_[j].active_starts(budget);
        }
    }

    // vz and control may be null when the slice is not kept.
    void step(std::size_t n, const std::vector<double>& W, std::vector<double>& V, double* vz, double* control,
              Workspace& ws) const {
        const Grid& g = *grid_;
        const std::size_t n1 = g.n1(), n2 = g.n2(), nz = g.nz();
        const double dt = g.dt, inv_dz = 1.0 / g.dz;
        const bool analytic = config_.x1_boundary == X1Boundary::analytic;
        if (analytic) boundary_values(n, ws.lower, ws.upper);
        double* rhs = ws.rhs.data();

        for (std::size_t k = 0; k + 1 < nz; ++k) {
            explicit_plane(&W[g.index(k, 0, 0)], ws.plane.data(), ws.scratch.data());
            for (std::size_t j = 0; j < n2; ++j) {
                const std::size_t base = g.index(k, j, 0);
                const double* w = &W[base];
                const double* wa = &W[g.index(k + 1, j, 0)];
                const double* ex = &ws.plane[j * n1];
                const double a2 = w2_ * g.x2[j];
                for (std::size_t i = 0; i < n1; ++i) {
                    const double dz_w = (wa[i] - w[i]) * inv_dz;
                    const double h = payoff_x1_[i] + a2 + dz_w;
                    const double gain = h > 0.0 ? rate_ * h : 0.0;
                    rhs[i * n2 + j] = w[i] + dt * (gain + ex[i]);
                }
                if (vz)
                    for (std::size_t i = 0; i < n1; ++i) {
                        const double dz_w = (wa[i] - w[i]) * inv_dz;
                        vz[base + i] = dz_w;
                        control[base + i] = payoff_x1_[i] + a2 + dz_w > 0.0 ? rate_ : 0.0;
                    }
                if (analytic) {
                    rhs[n2 + j] -= edge_lower_ * ws.lower[k * n2 + j];
                    rhs[(n1 - 2) * n2 + j] -= edge_upper_ * ws.upper[k * n2 + j];
                }
            }
            matrix_.solve_batch(rhs + n2, n2);
            for (std::size_t j = 0; j < n2; ++j) {
                double* line = &V[g.index(k, j, 0)];
                for (std::size_t i = 1; i + 1 < n1; ++i) line[i] = rhs[i * n2 + j];
                if (analytic) {
                    line[0] = ws.lower[k * n2 + j];
                    line[n1 - 1] = ws.upper[k * n2 + j];
                } else {
                    line[0] = line[1] - rho_lo_ * (line[2] - line[1]);
                    line[n1 - 1] = line[n1 - 2] + rho_hi_ * (line[n1 - 2] - line[n1 - 3]);
                }
            }
        }
        const std::size_t top = g.index(nz - 1, 0, 0);
        std::fill(V.begin() + static_cast<std::ptrdiff_t>(top), V.end(), 0.0);
        if (vz) {
            std::fill(vz + top, vz + g.size(), 0.0);
            std::fill(control + top, control + g.size(), 0.0);
        }
    }

    void check_finite(const ValueSurface& s) const {
        const Grid& g = *grid_;
        for (std::size_t k = 0; k < g.nz(); ++k)
            for (std::size_t j = 0; j < g.n2(); ++j)
                for (std::size_t i = 0; i < g.n1(); ++i)
                    if (!std::isfinite(s.values[g.index(k, j, i)])) {
                        std::ostringstream os;
                        os << "non-finite value at t=" << round_trip(s.time) << " z=" << round_trip(g.z[k])
                           << " x1=" << round_trip(g.x1[i]);
                        if (g.two_factor()) os << " x2=" << round_trip(g.x2[j]);
                        throw NumericalError(os.str());
                    }
    }

    PdeProblem problem_;
    SchemeConfig config_;
    std::shared_ptr<const Grid> grid_;
    double cfl_ = 0.0;
    std::vector<std::string> warnings_;
    double w1_ = 1.0, w2_ = 0.0, rate_ = 1.0, r_ = 0.0;
    std::vector<double> payoff_x1_;

    std::vector<double> op_lower_, op_diag_, op_upper_;
    Tridiagonal matrix_;
    double edge_lower_ = 0.0, edge_upper_ = 0.0, rho_lo_ = 0.0, rho_hi_ = 0.0;

    std::vector<double> jump_w_, jump_q_, jump_wtot_;
    double tail_weight_ = 0.0, tail_g0_ = 0.0, tail_g1_ = 0.0;
    std::size_t tail_cells_ = 0;

    std::vector<DecayingSum> g_lower_, g_upper_;
    std::vector<WindowSearch> search_lower_;
    std::vector<std::vector<double>> active_lower_;
};

/// Pointwise HJB residuals on the slice `now` against its successor `next`,
/// with every spatial term evaluated on `now`:
///   (next - now)/dt + L now - r now + u (A + D_z now)
struct ResidualField {
    std::vector<double> recorded; // u from now.control
    std::vector<double> zero;     // u = 0
    std::vector<double> full;     // u = rate
    std::vector<char> interior;

    double max_abs(const std::vector<double>& r) const {
        double m = 0.0;
        for (std::size_t n = 0; n < r.size(); ++n)
            if (interior[n]) m = std::max(m, std::abs(r[n]));
        return m;
    }
    /// sup over u in {0, rate}.
    double supremum(std::size_t n) const { return std::max(zero[n], full[n]); }
};

inline ResidualField hjb_residual(const HjbSolver& solver, const ValueSurface& now, const ValueSurface& next) {
    const Grid& g = solver.grid();
    if (now.grid != solver.grid_ptr() || next.grid != solver.grid_ptr() || next.step != now.step + 1)
        throw std::invalid_argument("hjb_residual: need consecutive slices from this solver");
    const double dt = next.time - now.time;
    const double r = solver.problem().contract.discount;
    const double rate = solver.problem().contract.rate_cap[0];
    std::vector<double> ex;
    solver.explicit_terms(now.values, ex);
    ResidualField f;
    f.recorded.assign(g.size(), 0.0);
    f.zero.assign(g.size(), 0.0);
    f.full.assign(g.size(), 0.0);
    f.interior.assign(g.size(), 0);
    for (std::size_t k = 0; k + 1 < g.nz(); ++k)
        for (std::size_t j = 0; j < g.n2(); ++j) {
            const double* v = &now.values[g.index(k, j, 0)];
            const double* vn = &next.values[g.index(k, j, 0)];
            const double* va = &now.values[g.index(k + 1, j, 0)];
            for (std::size_t i = 1; i + 1 < g.n1(); ++i) {
                const std::size_t n = g.index(k, j, i);
                const double base = (vn[i] - v[i]) / dt + solver.apply_x1_operator(v, i) + ex[n] - r * v[i];
                const double h = solver.payoff_at(j, i) + (va[i] - v[i]) / g.dz;
                f.zero[n] = base;
                f.full[n] = base + rate * h;
                f.recorded[n] = base + now.control[n] * h;
                f.interior[n] = 1;
            }
        }
    return f;
}

/// CSV with header t,z,x1[,x2],value,control; one row per node.
inline void write_surface_csv(std::ostream& os, const ValueSurface& s) {
    const Grid& g = *s.grid;
    {
        CsvRow row(os);
        row << "t" << "z" << "x1";
        if (g.two_factor()) row << "x2";
        row << "value" << "control";
    }
    for (std::size_t k = 0; k < g.nz(); ++k)
        for (std::size_t j = 0; j < g.n2(); ++j)
            for (std::size_t i = 0; i < g.n1(); ++i) {
                const std::size_t n = g.index(k, j, i);
                CsvRow row(os);
                row << s.time << g.z[k] << g.x1[i];
                if (g.two_factor()) row << g.x2[j];
                row << s.values[n] << s.control[n];
            }
}

} // namespace swing
