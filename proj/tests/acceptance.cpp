// Acceptance report: one PASS/FAIL line per criterion, also written to the
// file named by argv[1]. The exit status is nonzero only if a check could not
// be run at all; failed criteria are reported, not turned into a crash.

#include "swing/swing.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace swing;

namespace {

std::vector<std::string> g_lines;

void report(int id, bool pass, const std::string& name, const std::string& detail) {
    std::ostringstream os;
    os << (pass ? "PASS" : "FAIL") << "  C" << id << " " << name << ": " << detail;
    g_lines.push_back(os.str());
    std::cout << os.str() << std::endl;
}

std::string fmt(double v, int prec = 6) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

struct Solved {
    RunConfig config;
    SolveResult result;
};

Solved solve_preset(const std::string& name) {
    Solved s{presets::by_name(name), {}};
    s.result = HjbSolver(s.config.problem, s.config.scheme).solve();
    return s;
}

double cell_at(const std::vector<double>& x, double v) {
    for (std::size_t i = 0; i + 1 < x.size(); ++i)
        if (v <= x[i + 1]) return x[i + 1] - x[i];
    return x.back() - x[x.size() - 2];
}

// ---- 1 ----
void moment_matching() {
    const auto m = moment_match(0.014, 40.0, 2.36, 0.04, 0.4);
    const double listed = 2.3387;
    const bool level_ok = m.level == 39.9;
    const bool vol_ok = std::abs(m.vol - 2.2516) < 5e-5;
    // the listed value is what sqrt(sigma^2 - f/alpha) gives, not sqrt(sigma^2 - 2 f/alpha^2)
    const bool listed_explained = std::abs(std::sqrt(2.36 * 2.36 - 0.04 / 0.4) - listed) < 5e-5;
    const bool listed_differs = std::abs(m.vol - listed) > 0.05;
    report(1, level_ok && vol_ok && listed_explained && listed_differs, "moment matching",
           "level = " + round_trip(m.level) + " (want 39.9 exactly), vol = " + fmt(m.vol, 8) +
               " (formula 2.2516); listed 2.3387 = sqrt(2.36^2 - f/alpha) = " +
               fmt(std::sqrt(2.36 * 2.36 - 0.1), 8) + ", inconsistent with the formula");
}

// ---- 2 ----
void cfl() {
    const RunConfig c = presets::ex3(true);
    const Grid g = Grid::build(c.problem, c.scheme);
    const double v = cfl_number(c.problem, g);
    const double expected = (1.0 / 3200.0) * (1.6 * 9.0 / 9.0 + 3198.0);
    report(2, std::abs(v - 0.999875) <= 1e-12 && std::abs(v - expected) <= 1e-12, "CFL number",
           "C = " + round_trip(v) + ", |C - 0.999875| = " + fmt(std::abs(v - 0.999875), 3));
}

// ---- 3, 4 ----
void vz_sign_and_zero_rows(const std::vector<const Solved*>& solves) {
    double worst = -1e300;
    std::string where;
    bool exact = true;
    std::size_t checked = 0;
    for (const Solved* s : solves) {
        const Grid& g = *s->result.grid;
        for (const auto& surf : s->result.surfaces) {
            // the t = T slice is identically 0 (criterion 4)
            for (std::size_t k = 0; surf.time < g.horizon && k + 1 < g.nz(); ++k)
                for (std::size_t j = 0; j < g.n2(); ++j)
                    for (std::size_t i = 1; i + 1 < g.n1(); ++i) {
                        const double vz = (surf.value(k + 1, j, i) - surf.value(k, j, i)) / g.dz;
                        if (vz > worst) {
                            worst = vz;
                            where = s->config.example + " t=" + fmt(surf.time) + " z=" + fmt(g.z[k]) +
                                    " x1=" + fmt(g.x1[i]);
                        }
                    }
            // z = M row on every slice, the whole slice at t = T
            const std::size_t top = g.index(g.nz() - 1, 0, 0);
            for (std::size_t n = top; n < g.size(); ++n) exact = exact && surf.values[n] == 0.0;
            if (surf.time == g.horizon)
                for (const double v : surf.values) exact = exact && v == 0.0;
            ++checked;
        }
    }
    report(3, worst <= 1e-8, "V_z <= 1e-8 on desk solves", "max V_z = " + fmt(worst, 3) + " at " + where);
    report(4, exact, "exact zero boundaries",
           std::to_string(checked) + " slices; V(T,.,.) and V(.,M,.) " + (exact ? "all exactly 0" : "not all 0"));
}

// ---- 5 ----
void unconstrained_oracle() {
    auto run = [](double refine) {
        RunConfig c = presets::ex1();
        c.problem.contract.volume_cap[0] = 1.0;
        c.scheme.dt /= refine;
        c.scheme.dz /= refine;
        c.scheme.x1_nodes = static_cast<std::size_t>(refine) * (c.scheme.x1_nodes - 1) + 1;
        c.scheme.retain_times = {0.0};
        const auto r = HjbSolver(c.problem, c.scheme).solve();
        const double x[1] = {40.0};
        const double exact = unconstrained_value(c.problem.contract, c.problem.model, 0.0, x);
        return std::abs(r.initial().interpolate(0.0, 40.0) - exact) / exact;
    };
    const double e1 = run(1.0), e2 = run(2.0);
    report(5, e1 <= 0.01 && e2 < e1, "full-volume contract vs closed form",
           "relative error " + fmt(e1, 3) + " at desk scale, " + fmt(e2, 3) + " after halving dt, dz, dx1");
}

// ---- 6 ----
void mc_sandwich(const Solved& s) {
    const auto& c = s.config;
    const auto& r = s.result;
    auto field = std::make_shared<const DecisionField>(r.decisions);
    const double x2 = c.mc.x0.size() > 1 ? c.mc.x0[1] : 0.0;
    const double v = r.initial().interpolate(0.0, c.mc.x0[0], x2);
    const auto est = evaluate_policy(c.problem.model, c.problem.contract, policy_from_surface(field, c.problem.contract),
                                     c.mc.x0, 100000, r.grid->steps, c.seed);
    const double lo = v - (3.0 * est.std_error + 0.02 * v), hi = v + 3.0 * est.std_error;
    report(6, est.mean >= lo && est.mean <= hi, "MC sandwich " + c.example,
           "PDE " + fmt(v, 8) + ", MC " + fmt(est.mean, 8) + " +- " + fmt(est.std_error, 3) + " (1e5 paths), band [" +
               fmt(lo, 8) + ", " + fmt(hi, 8) + "]");
}

// ---- 7 ----
void min_boundary_windows() {
    const RunConfig c = presets::ex3();
    double worst = 0.0;
    std::string sample;
    for (double t : {0.0, 0.25, 0.5})
        for (double z : {0.0, 0.2, 0.4})
            for (double x2 : {0.0, 4.5, 9.0}) {
                const auto w = bc_example3_min(c.problem.model, c.problem.contract, t, z, c.scheme.x1_min, x2);
                const double d = std::max(std::abs(w.window.t1 - t), std::abs(w.window.t2 - (t + 0.5 - z)));
                if (d > worst) {
                    worst = d;
                    sample = "t=" + fmt(t) + " z=" + fmt(z) + " x2=" + fmt(x2) + " gives [" + fmt(w.window.t1) + ", " +
                             fmt(w.window.t2) + "]";
                }
            }
    report(7, worst <= 1e-6, "min-boundary window [t, t + 1/2 - z]",
           "max endpoint deviation " + fmt(worst, 3) + (sample.empty() ? "" : "; worst " + sample) +
               " (discount " + fmt(c.problem.contract.discount) + ")");
}

// ---- 8 ----
void trigger_slopes(const Solved& ex3) {
    const auto& surf = ex3.result.at(0.5);
    const auto curves =
        trigger_2d_projections(surf, ex3.config.problem.contract, Projection::x1_x2, {0.1, 0.25, 0.4});
    bool ok = true;
    std::string detail;
    for (const auto& c : curves) {
        const double s = lsq_slope(c, true);
        ok = ok && s >= -0.40 && s <= -0.30;
        detail += (detail.empty() ? "" : ", ") + ("z=" + fmt(c.fixed, 4) + ": " + fmt(s, 5));
    }
    report(8, ok, "x1x2 trigger slope in [-0.40, -0.30]", detail);
}

// ---- 9 ----
void curve_ordering(const Solved& ex1, const Solved& ex2) {
    const auto a = trigger_1d(ex1.result.at(0.5), ex1.config.problem.contract);
    const auto b = trigger_1d(ex2.result.at(0.5), ex2.config.problem.contract);
    const auto& x = ex1.result.grid->x1;
    std::size_t bad = 0, shared = 0;
    std::string first;
    double worst = 0.0;
    for (const auto& p : a.points)
        for (const auto& q : b.points)
            if (std::abs(p.coord - q.coord) < 1e-12) {
                ++shared;
                const double gap = p.trigger - q.trigger - cell_at(x, p.trigger);
                if (gap > 0.0) {
                    if (bad++ == 0)
                        first = "z=" + fmt(p.coord) + ": ex1 " + fmt(p.trigger) + ", ex2 " + fmt(q.trigger);
                    worst = std::max(worst, gap);
                }
            }
    report(9, bad == 0 && shared > 0, "ex2 trigger curve weakly right of ex1",
           std::to_string(shared) + " z nodes, " + std::to_string(bad) + " violate by more than one cell" +
               (bad ? " (first " + first + ", worst excess " + fmt(worst, 4) + ")" : ""));
}

// ---- 10 ----
double boundary_gap(double refine) {
    RunConfig c = presets::ex3();
    c.scheme.dt /= refine;
    c.scheme.dz = 0.5 / (std::round(0.5 / c.scheme.dz) * refine);
    c.scheme.x1_boundary = X1Boundary::linear;
    c.scheme.retain_times = {0.5};
    c.scheme.policy_stride = 0;
    const auto r = HjbSolver(c.problem, c.scheme).solve();
    const auto& s = r.at(0.5);
    const Grid& g = *r.grid;
    const std::size_t k = detail::nearest(g.z, 0.4);
    double worst = 0.0;
    for (std::size_t j = 0; j < g.n2(); ++j)
        for (std::size_t i = g.n1() - 3; i < g.n1(); ++i) {
            const double v = s.value(k, j, i);
            const double b = bc_example3_max(c.problem.model, c.problem.contract, s.time, g.z[k], g.x1[i], g.x2[j]);
            worst = std::max(worst, std::abs(v - b) / std::abs(v));
        }
    return worst;
}

void boundary_consistency() {
    const double d1 = boundary_gap(1.0), d2 = boundary_gap(2.0);
    report(10, d1 <= 1e-3 && d2 < d1, "linear-BC solve vs analytic upper boundary",
           "max |V - bc| / V over the top 3 x1 nodes = " + fmt(d1, 4) + " (dt 1/800, dz 1/798), " + fmt(d2, 4) +
               " (dt 1/1600, dz 1/1596)");
}

// ---- 11 ----
using boost::math::quadrature::gauss_kronrod;

struct Draw {
    FactorModel model;
    ContractSpec contract;
    double x[2], t, z;
};

Draw random_draw(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    OUFactor a = OUFactor::gaussian(0.01 + 3.0 * u(rng), -5.0 + 10.0 * u(rng), 2.0 * u(rng));
    OUFactor b;
    b.speed = 0.01 + 3.0 * u(rng);
    b.level = -3.0 + 6.0 * u(rng);
    if (u(rng) < 0.5) {
        b.jump = ExpJumpSpec{0.01 + u(rng), 0.2 + 3.0 * u(rng)};
        b.jump_drift = u(rng) < 0.5 ? JumpDrift::raw : JumpDrift::compensated;
    }
    const double w1 = -2.0 + 4.0 * u(rng), w2 = 0.2 + 2.0 * u(rng);
    const double T = 0.2 + 2.0 * u(rng), rate = 0.2 + 2.0 * u(rng);
    Draw d{FactorModel({a, b}),
           ContractSpec::single({w1, w2}, -3.0 + 6.0 * u(rng), rate * T * u(rng), rate, T, 0.3 * u(rng)),
           {-8.0 + 16.0 * u(rng), 4.0 * u(rng)},
           T * u(rng),
           0.0};
    d.z = d.contract.volume_cap[0] * u(rng);
    return d;
}

// integral of the discounted expected payoff and of its absolute value, from conditional means
std::pair<double, double> window_quadrature(const Draw& d, double t1, double t2) {
    if (t2 <= t1) return {0.0, 0.0};
    const Eigen::MatrixXd q = d.contract.factor_loading();
    auto f = [&](double s) {
        double a = d.contract.strike[0];
        for (std::size_t j = 0; j < 2; ++j)
            a += q(0, static_cast<Eigen::Index>(j)) * conditional_mean(d.model.factors[j], d.x[j], s - d.t);
        return d.contract.rate_cap[0] * std::exp(-d.contract.discount * (s - d.t)) * a;
    };
    auto g = [&](double s) { return std::abs(f(s)); };
    return {gauss_kronrod<double, 61>::integrate(f, t1, t2, 5, 1e-12),
            gauss_kronrod<double, 61>::integrate(g, t1, t2, 5, 1e-12)};
}

void property_suites(const std::vector<const Solved*>& solves) {
    // closed-form windows against quadrature
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst_q = 0.0;
    for (int n = 0; n < 1000; ++n) {
        const Draw d = random_draw(rng);
        const double T = d.contract.horizon;
        const double a = d.t + (T - d.t) * u(rng), b = a + (T - a) * u(rng);
        const auto g = expected_payoff_path(d.model, d.contract, d.x);
        const double v = window_value(g, d.contract.discount, d.contract.rate_cap[0], d.t, {a, b});
        const auto [ref, scale] = window_quadrature(d, a, b);
        if (scale > 0.0) worst_q = std::max(worst_q, std::abs(v - ref) / scale);
    }

    // optimizer against a 200 x 200 grid search
    std::mt19937_64 rng2(99);
    constexpr int kGrid = 200;
    double worst_opt = 0.0;
    for (int n = 0; n < 100; ++n) {
        const Draw d = random_draw(rng2);
        const double T = d.contract.horizon, budget = detail::residual_budget_time(d.contract, d.z);
        const auto best = bc_example3_min(d.model, d.contract, d.t, d.z, d.x[0], d.x[1]);
        std::vector<double> grid(kGrid + 1), cum(kGrid + 1, 0.0);
        for (int k = 0; k <= kGrid; ++k) grid[k] = d.t + (T - d.t) * k / kGrid;
        for (int k = 1; k <= kGrid; ++k) cum[k] = cum[k - 1] + window_quadrature(d, grid[k - 1], grid[k]).first;
        double oracle = 0.0;
        for (int i = 0; i <= kGrid; ++i)
            for (int j = i + 1; j <= kGrid; ++j)
                if (grid[j] - grid[i] <= budget + 1e-12) oracle = std::max(oracle, cum[j] - cum[i]);
        worst_opt = std::max(worst_opt, (oracle - best.value) / std::max(1.0, oracle));
    }

    // control support
    std::size_t off_support = 0, controls = 0;
    for (const Solved* s : solves) {
        const double rate = s->config.problem.contract.rate_cap[0];
        for (const auto& surf : s->result.surfaces)
            for (const double c : surf.control) {
                ++controls;
                if (c != 0.0 && c != rate) ++off_support;
            }
    }

    // bit-identical reruns: solver, path sampler, policy evaluation across thread counts
    const RunConfig c1 = presets::ex2();
    const auto r1 = HjbSolver(c1.problem, c1.scheme).solve();
    const auto r2 = HjbSolver(c1.problem, c1.scheme).solve();
    bool same = r1.surfaces.size() == r2.surfaces.size();
    for (std::size_t n = 0; same && n < r1.surfaces.size(); ++n)
        same = r1.surfaces[n].values == r2.surfaces[n].values && r1.surfaces[n].control == r2.surfaces[n].control;
    const FactorModel m3 = presets::ex3().problem.model;
    const double x0[2] = {40.0, 0.0};
    same = same && sample_path(m3, x0, 0.0, 1.0, 500, 7).states == sample_path(m3, x0, 0.0, 1.0, 500, 7).states;
    const auto pol = unconstrained_policy_function(c1.problem.contract);
    const double x1[1] = {40.0};
    const auto e1 = evaluate_policy(c1.problem.model, c1.problem.contract, pol, x1, 4000, 250, 11, 1);
    const auto e2 = evaluate_policy(c1.problem.model, c1.problem.contract, pol, x1, 4000, 250, 11, 3);
    same = same && e1.mean == e2.mean && e1.std_error == e2.std_error;

    const bool ok = worst_q <= 1e-9 && worst_opt <= 1e-9 && off_support == 0 && same;
    report(11, ok, "property suites",
           "closed form vs quadrature worst " + fmt(worst_q, 3) + " (1000 draws); grid search beats optimizer by at most " +
               fmt(worst_opt, 3) + " (100 draws); " + std::to_string(off_support) + " of " + std::to_string(controls) +
               " controls outside {0, rate}; reruns " + (same ? "bit-identical" : "differ"));
}

template <class F>
void guarded(int id, const char* name, F&& f) {
    try {
        f();
    } catch (const std::exception& e) {
        report(id, false, name, std::string("error: ") + e.what());
    }
}

} // namespace

int main(int argc, char** argv) {
    const auto start = std::chrono::steady_clock::now();
    guarded(1, "moment matching", moment_matching);
    guarded(2, "CFL number", cfl);

    std::unique_ptr<Solved> ex1, ex2, ex3;
    try {
        ex1 = std::make_unique<Solved>(solve_preset("ex1"));
        ex2 = std::make_unique<Solved>(solve_preset("ex2"));
        ex3 = std::make_unique<Solved>(solve_preset("ex3"));
    } catch (const std::exception& e) {
        std::cerr << "desk solves failed: " << e.what() << "\n";
        return 1;
    }
    const std::vector<const Solved*> all{ex1.get(), ex2.get(), ex3.get()};

    guarded(3, "V_z sign", [&] { vz_sign_and_zero_rows(all); });
    guarded(5, "full-volume contract", unconstrained_oracle);
    for (const Solved* s : all) guarded(6, "MC sandwich", [&] { mc_sandwich(*s); });
    guarded(7, "min-boundary window", min_boundary_windows);
    guarded(8, "trigger slope", [&] { trigger_slopes(*ex3); });
    guarded(9, "curve ordering", [&] { curve_ordering(*ex1, *ex2); });
    guarded(10, "boundary consistency", boundary_consistency);
    guarded(11, "property suites", [&] { property_suites(all); });

    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "total " << fmt(secs, 4) << " s" << std::endl;
    if (argc > 1) {
        std::ofstream os(argv[1]);
        for (const auto& l : g_lines) os << l << "\n";
        os << "total " << fmt(secs, 4) << " s\n";
    }
    return 0;
}
