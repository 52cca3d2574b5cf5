// swing_cli: solve / trigger / cfl / boundary-check / mc-check front end.

#include "swing/swing.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

namespace fs = std::filesystem;
using namespace swing;

namespace {

struct Options {
    std::string config_path;
    std::string example;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_given = false;
    bool paper_scale = false;
    unsigned threads = 1;
    double time = 0.5;
    double z = 0.4;
    std::size_t nodes = 3;
};

std::string read_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

RunConfig load(const Options& o) {
    if (o.config_path.empty() == o.example.empty()) throw ConfigError("give exactly one of --config or --example");
    RunConfig c = o.config_path.empty() ? presets::by_name(o.example) : parse_config(read_file(o.config_path));
    if (o.paper_scale) {
        if (c.example == "custom") throw ConfigError("--paper-scale needs run.example = ex1, ex2 or ex3");
        const SchemeConfig fine = presets::by_name(c.example, true).scheme;
        auto& s = c.scheme;
        s.dt = fine.dt;
        s.dz = fine.dz;
        s.x1_nodes = fine.x1_nodes;
        s.dx2 = fine.dx2;
        s.policy_stride = fine.policy_stride;
    }
    if (o.seed_given) c.seed = o.seed;
    if (!o.out.empty())
        c.out = o.out;
    else if (const char* env = std::getenv("SWING_OUT_DIR"); env && *env)
        c.out = env;
    c.validate();
    return c;
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream os(p);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    return os;
}

fs::path prepare(const RunConfig& c) {
    const fs::path dir(c.out);
    fs::create_directories(dir);
    open_out(dir / "config.ini") << echo_config(c);
    return dir;
}

std::string tag(double v) { return round_trip(v); }

SolveResult run_solver(const RunConfig& c, const SchemeConfig& scheme) {
    HjbSolver solver(c.problem, scheme);
    for (const auto& w : solver.warnings()) std::cerr << "warning: " << w << "\n";
    return solver.solve();
}

SchemeConfig with_time(SchemeConfig s, double t) {
    s.retain_times.push_back(t);
    return s;
}

/// Gaussian OU with the same speed, long-run mean and stationary variance.
OUFactor gaussian_counterpart(const OUFactor& f) {
    const double var = conditional_variance(f, 1e300);
    return OUFactor::gaussian(f.speed, f.long_run_mean(), std::sqrt(2.0 * f.speed * var));
}

void plot_surface_1d(const fs::path& dir, const std::string& csv, const std::string& title) {
    auto os = open_out(dir / (fs::path(csv).stem().string() + ".gp"));
    os << "set datafile separator ','\nset xlabel 'z'\nset ylabel 'x'\nset zlabel 'V'\n"
       << "set title '" << title << "'\nsplot '" << csv << "' every ::1 using 2:3:4 with points pt 7 ps 0.3 notitle\n"
       << "pause mouse close\n";
}

int cmd_solve(const RunConfig& c) {
    const fs::path dir = prepare(c);
    const auto res = run_solver(c, c.scheme);
    const Grid& g = *res.grid;
    for (const auto& s : res.surfaces) {
        const std::string name = "surface_t" + tag(s.time) + ".csv";
        auto os = open_out(dir / name);
        write_surface_csv(os, s);
        if (!g.two_factor()) {
            plot_surface_1d(dir, name, "V at t = " + tag(s.time));
        } else {
            // (x1, z) sections at the bottom, middle and top of the x2 range
            for (const std::size_t j : {std::size_t{0}, (g.n2() - 1) / 2, g.n2() - 1}) {
                auto gp = open_out(dir / ("surface_t" + tag(s.time) + "_x2_" + tag(g.x2[j]) + ".gp"));
                gp << "set datafile separator ','\nset xlabel 'x1'\nset ylabel 'z'\nset zlabel 'V'\n"
                   << "set title 'V at t = " << tag(s.time) << ", x2 = " << tag(g.x2[j]) << "'\n"
                   << "splot '" << name << "' every ::1 using 3:2:(abs($4 - " << tag(g.x2[j])
                   << ") < 1e-9 ? $5 : 1/0) with points pt 7 ps 0.3 notitle\npause mouse close\n";
            }
        }
        std::cout << "wrote " << (dir / name).string() << "\n";
    }

    // jump model: difference to its moment-matched Gaussian counterpart
    if (!g.two_factor() && c.problem.model.has_jumps()) {
        RunConfig gauss = c;
        gauss.problem.model = FactorModel({gaussian_counterpart(c.problem.model.factors[0])});
        const auto ref = run_solver(gauss, c.scheme);
        for (std::size_t n = 0; n < res.surfaces.size(); ++n) {
            const auto& a = res.surfaces[n];
            const auto& b = ref.surfaces[n];
            const std::string name = "difference_t" + tag(a.time) + ".csv";
            auto os = open_out(dir / name);
            CsvRow(os) << "t" << "z" << "x1" << "difference";
            for (std::size_t k = 0; k < g.nz(); ++k)
                for (std::size_t i = 0; i < g.n1(); ++i)
                    CsvRow(os) << a.time << g.z[k] << g.x1[i] << a.value(k, 0, i) - b.value(k, 0, i);
            auto gp = open_out(dir / ("difference_t" + tag(a.time) + ".gp"));
            gp << "set datafile separator ','\nset xlabel 'z'\nset ylabel 'x'\nset zlabel 'V - V_gauss'\n"
               << "splot '" << name << "' every ::1 using 2:3:4 with points pt 7 ps 0.3 notitle\npause mouse close\n";
            std::cout << "wrote " << (dir / name).string() << "\n";
        }
    }
    std::cout << "V(0, 0, x0) = " << round_trip(res.initial().interpolate(0.0, c.mc.x0[0], c.mc.x0.size() > 1 ? c.mc.x0[1] : 0.0))
              << "\n";
    return 0;
}

void print_curve(const TriggerCurve& cur, const char* coord) {
    std::size_t clipped = 0, multiple = 0;
    for (const auto& p : cur.points) {
        clipped += p.clipped();
        multiple += p.flag == TriggerFlag::multiple;
    }
    std::cout << "  fixed " << round_trip(cur.fixed) << ": " << cur.points.size() << " " << coord << " nodes, "
              << clipped << " clipped, " << multiple << " with several roots\n";
}

int cmd_trigger(const RunConfig& c, double t) {
    const fs::path dir = prepare(c);
    const auto res = run_solver(c, with_time(c.scheme, t));
    const auto& s = res.at(t);
    const Grid& g = *res.grid;
    const auto& k = c.problem.contract;
    if (!g.two_factor()) {
        std::vector<TriggerCurve> curves{trigger_1d(s, k)};
        std::string plot = "'trigger_t" + tag(s.time) + ".csv' every ::1 using 4:3 with lines title 'model'";
        if (c.problem.model.has_jumps()) {
            RunConfig gauss = c;
            gauss.problem.model = FactorModel({gaussian_counterpart(c.problem.model.factors[0])});
            const auto ref = run_solver(gauss, with_time(c.scheme, t));
            curves.push_back(trigger_1d(ref.at(t), k));
            curves.back().fixed = 1.0; // column tag: 0 model, 1 Gaussian counterpart
            plot = "'trigger_t" + tag(s.time) + ".csv' every ::1 using ($2 == 0 ? $4 : 1/0):3 with lines title 'model', '' every ::1 using ($2 == 1 ? $4 : 1/0):3 with lines title 'gaussian'";
        }
        const std::string name = "trigger_t" + tag(s.time) + ".csv";
        auto os = open_out(dir / name);
        write_curve_csv(os, curves);
        auto gp = open_out(dir / ("trigger_t" + tag(s.time) + ".gp"));
        gp << "set datafile separator ','\nset xlabel 'x'\nset ylabel 'z'\nplot " << plot << "\npause mouse close\n";
        std::cout << "trigger curve at t = " << round_trip(s.time) << "\n";
        for (const auto& cur : curves) print_curve(cur, "z");
        std::cout << "wrote " << (dir / name).string() << "\n";
        return 0;
    }

    const std::vector<double> x2_levels{g.x2.front(), g.x2[(g.n2() - 1) / 2], g.x2.back()};
    const std::vector<double> z_levels{0.1, 0.25, 0.4};
    const auto price = trigger_2d_projections(s, k, Projection::price_z, x2_levels);
    const auto plane = trigger_2d_projections(s, k, Projection::x1_x2, z_levels);
    for (const auto& [curves, stem, xl, yl] :
         {std::tuple{&price, std::string("trigger_price_z_t"), "price", "z"},
          std::tuple{&plane, std::string("trigger_x1_x2_t"), "x1", "x2"}}) {
        const std::string name = stem + tag(s.time) + ".csv";
        auto os = open_out(dir / name);
        write_curve_csv(os, *curves);
        auto gp = open_out(dir / (stem + tag(s.time) + ".gp"));
        gp << "set datafile separator ','\nset xlabel '" << xl << "'\nset ylabel '" << yl << "'\nplot ";
        for (std::size_t n = 0; n < curves->size(); ++n)
            gp << (n ? ", " : "") << "'" << name << "' every ::1 using (abs($2 - " << tag((*curves)[n].fixed)
               << ") < 1e-9 ? $4 : 1/0):3 with lines title 'fixed " << tag((*curves)[n].fixed) << "'";
        gp << "\npause mouse close\n";
        std::cout << "wrote " << (dir / name).string() << "\n";
    }
    std::cout << "price-z curves at t = " << round_trip(s.time) << "\n";
    for (const auto& cur : price) print_curve(cur, "z");
    std::cout << "x1-x2 curves at t = " << round_trip(s.time) << "\n";
    for (const auto& cur : plane) {
        print_curve(cur, "x2");
        try {
            std::cout << "    slope dx2/dx1 (first point excluded) = " << round_trip(lsq_slope(cur, true)) << "\n";
        } catch (const std::exception& e) {
            std::cout << "    slope unavailable: " << e.what() << "\n";
        }
    }
    return 0;
}

int cmd_cfl(const RunConfig& c) {
    const Grid g = Grid::build(c.problem, c.scheme);
    const double cfl = cfl_number(c.problem, g);
    std::cout << "CFL = " << round_trip(cfl) << " " << (cfl <= 1.0 ? "stable" : "unstable") << "\n"
              << "max stable dt = " << round_trip(max_stable_dt(c.problem, g)) << " (dt = " << round_trip(g.dt)
              << ")\n";
    return 0;
}

int cmd_boundary_check(const RunConfig& c, double t, double z, std::size_t nodes) {
    if (!c.problem.two_factor()) throw ConfigError("boundary-check needs a two-factor config");
    const fs::path dir = prepare(c);
    SchemeConfig s = with_time(c.scheme, t);
    s.x1_boundary = X1Boundary::linear;
    const auto res = run_solver(c, s);
    const auto& surf = res.at(t);
    const Grid& g = *res.grid;
    const std::size_t k = detail::nearest(g.z, z);
    nodes = std::min(nodes, g.n1());
    const std::string name = "boundary_check_t" + tag(surf.time) + "_z" + tag(g.z[k]) + ".csv";
    auto os = open_out(dir / name);
    CsvRow(os) << "x1" << "x2" << "value" << "boundary" << "difference" << "ratio";
    double worst = 0.0;
    for (std::size_t j = 0; j < g.n2(); ++j)
        for (std::size_t i = g.n1() - nodes; i < g.n1(); ++i) {
            const double v = surf.value(k, j, i);
            const double b = bc_example3_max(c.problem.model, c.problem.contract, surf.time, g.z[k], g.x1[i], g.x2[j]);
            const double ratio = std::abs(v - b) / std::abs(v);
            worst = std::max(worst, ratio);
            CsvRow(os) << g.x1[i] << g.x2[j] << v << b << v - b << ratio;
        }
    auto gp = open_out(dir / (fs::path(name).stem().string() + ".gp"));
    gp << "set datafile separator ','\nset xlabel 'x1'\nset ylabel 'x2'\nset zlabel '|V - boundary| / V'\n"
       << "splot '" << name << "' every ::1 using 1:2:6 with points pt 7 notitle\npause mouse close\n";
    std::cout << "t = " << round_trip(surf.time) << ", z = " << round_trip(g.z[k]) << ", top " << nodes
              << " x1 nodes: max |V - boundary| / V = " << round_trip(worst) << "\n"
              << "wrote " << (dir / name).string() << "\n";
    return 0;
}

int cmd_mc_check(const RunConfig& c, unsigned threads) {
    const fs::path dir = prepare(c);
    SchemeConfig s = c.scheme;
    if (s.policy_stride == 0) s.policy_stride = 1;
    const auto res = run_solver(c, s);
    const double x2 = c.mc.x0.size() > 1 ? c.mc.x0[1] : 0.0;
    const double pde = res.initial().interpolate(0.0, c.mc.x0[0], x2);
    auto field = std::make_shared<const DecisionField>(res.decisions);
    const std::size_t steps = c.mc.steps ? c.mc.steps : res.grid->steps;
    const auto t0 = std::chrono::steady_clock::now();
    const auto est = evaluate_policy(c.problem.model, c.problem.contract, policy_from_surface(field, c.problem.contract),
                                     c.mc.x0, c.mc.paths, steps, c.seed, threads);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    append_run_ledger(dir / "mc_ledger.csv", config_hash(c), est, wall);
    std::cout << "PDE value " << round_trip(pde) << "\nMC value  " << round_trip(est.mean) << " +- "
              << round_trip(est.std_error) << " (" << est.n_paths << " paths, " << steps << " steps)\n"
              << "MC - PDE  " << round_trip(est.mean - pde) << "\nmax consumption " << round_trip(est.max_consumption)
              << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Swing option valuation on Levy-driven OU factors"};
    app.require_subcommand(1);
    Options o;
    auto common = [&o](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "INI config file");
        sub->add_option("--example", o.example, "built-in preset: ex1, ex2 or ex3");
        sub->add_option("--out", o.out, "output directory (overrides SWING_OUT_DIR and run.out)");
        sub->add_option("--seed", o.seed, "master seed")->each([&o](const std::string&) { o.seed_given = true; });
        sub->add_flag("--paper-scale", o.paper_scale, "use the fine reference grid");
    };
    auto* solve = app.add_subcommand("solve", "value surfaces for the retained time slices");
    auto* trigger = app.add_subcommand("trigger", "exercise trigger curves");
    auto* cfl = app.add_subcommand("cfl", "CFL number of the explicit part");
    auto* bcheck = app.add_subcommand("boundary-check", "linear-boundary solve against the analytic upper boundary");
    auto* mc = app.add_subcommand("mc-check", "Monte Carlo value of the extracted policy");
    for (auto* sub : {solve, trigger, cfl, bcheck, mc}) common(sub);
    trigger->add_option("--time", o.time, "time slice")->capture_default_str();
    bcheck->add_option("--time", o.time, "time slice")->capture_default_str();
    bcheck->add_option("--z", o.z, "consumed volume")->capture_default_str();
    bcheck->add_option("--nodes", o.nodes, "number of top x1 nodes")->capture_default_str();
    mc->add_option("--threads", o.threads, "worker threads")->capture_default_str();

    CLI11_PARSE(app, argc, argv);
    try {
        const RunConfig c = load(o);
        for (const auto& w : config_warnings(c)) std::cerr << "warning: " << w << "\n";
        if (solve->parsed()) return cmd_solve(c);
        if (trigger->parsed()) return cmd_trigger(c, o.time);
        if (cfl->parsed()) return cmd_cfl(c);
        if (bcheck->parsed()) return cmd_boundary_check(c, o.time, o.z, o.nodes);
        if (mc->parsed()) return cmd_mc_check(c, std::max(1u, o.threads));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
