#pragma once

// Run configuration: INI text <-> RunConfig, plus the three worked presets.
//
// Grammar: `key = value` lines in `[section]`s, full-line `;` comments, lists
// comma separated. Unknown sections and keys are errors. See README.md for
// the key reference.

#include "swing/contract.hpp"
#include "swing/csv.hpp"
#include "swing/factor_models.hpp"
#include "swing/hjb_solver.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace swing {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct McConfig {
    std::size_t paths = 100000;
    std::size_t steps = 0; // 0: one step per solver time step
    std::vector<double> x0;

    friend bool operator==(const McConfig&, const McConfig&) = default;
};

struct RunConfig {
    std::string example = "custom"; // ex1, ex2, ex3 or custom
    std::string out = "out";
    std::uint64_t seed = 1;
    PdeProblem problem;
    SchemeConfig scheme;
    McConfig mc;

    void validate() const {
        static const std::set<std::string> names{"ex1", "ex2", "ex3", "custom"};
        if (!names.count(example)) throw ConfigError("run.example must be one of ex1, ex2, ex3, custom");
        try {
            problem.validate();
            scheme.validate();
            (void)Grid::build(problem, scheme);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        if (mc.x0.size() != problem.model.size()) throw ConfigError("mc.x0 must have one entry per factor");
        if (mc.paths < 1) throw ConfigError("mc.paths must be positive");
    }

    friend bool operator==(const RunConfig& a, const RunConfig& b) {
        return a.example == b.example && a.out == b.out && a.seed == b.seed && a.problem.model == b.problem.model &&
               a.problem.contract == b.problem.contract && a.scheme == b.scheme && a.mc == b.mc;
    }
};

namespace detail {

inline std::vector<double> parse_list(const std::string& key, const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        if (b == std::string::npos) throw ConfigError(key + ": empty list entry");
        const auto e = item.find_last_not_of(" \t");
        const std::string token = item.substr(b, e - b + 1);
        std::size_t used = 0;
        double v;
        try {
            v = std::stod(token, &used);
        } catch (const std::exception&) {
            throw ConfigError(key + ": '" + token + "' is not a number");
        }
        if (used != token.size()) throw ConfigError(key + ": '" + token + "' is not a number");
        out.push_back(v);
    }
    return out;
}

inline std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + round_trip(v[i]);
    return s;
}

/// Typed access to one section that remembers which keys were read.
class Section {
public:
    Section(std::string name, const boost::property_tree::ptree* tree) : name_(std::move(name)), tree_(tree) {}

    bool present() const { return tree_ != nullptr; }
    bool has(const std::string& key) const { return tree_ && tree_->find(key) != tree_->not_found(); }

    std::string text(const std::string& key) {
        if (!has(key)) throw ConfigError("missing required key " + name_ + "." + key);
        used_.insert(key);
        return tree_->get<std::string>(key);
    }
    std::optional<std::string> text_opt(const std::string& key) {
        if (!has(key)) return std::nullopt;
        return text(key);
    }

    double number(const std::string& key) {
        const auto v = parse_list(name_ + "." + key, text(key));
        if (v.size() != 1) throw ConfigError(name_ + "." + key + ": expected one number");
        return v[0];
    }
    double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }
    std::optional<double> number_opt(const std::string& key) {
        if (!has(key)) return std::nullopt;
        return number(key);
    }

    std::uint64_t count(const std::string& key, std::uint64_t fallback) {
        if (!has(key)) return fallback;
        const double v = number(key);
        if (!(v >= 0.0) || v != std::floor(v) || v > 9.0e15)
            throw ConfigError(name_ + "." + key + ": expected a nonnegative integer");
        return static_cast<std::uint64_t>(v);
    }

    std::vector<double> list(const std::string& key) { return parse_list(name_ + "." + key, text(key)); }

    void reject_unknown() const {
        if (!tree_) return;
        for (const auto& [key, _] : *tree_)
            if (!used_.count(key)) throw ConfigError("unknown key " + name_ + "." + key);
    }

private:
    std::string name_;
    const boost::property_tree::ptree* tree_;
    std::set<std::string> used_;
};

inline OUFactor read_factor(Section& s) {
    OUFactor f;
    f.speed = s.number("speed");
    const auto freq = s.number_opt("jump_frequency");
    const auto rate = s.number_opt("jump_rate");
    if (freq.has_value() != rate.has_value())
        throw ConfigError("jump_frequency and jump_rate must be given together");
    if (freq) f.jump = ExpJumpSpec{*freq, *rate};
    if (const auto d = s.text_opt("jump_drift")) {
        if (*d == "raw")
            f.jump_drift = JumpDrift::raw;
        else if (*d == "compensated")
            f.jump_drift = JumpDrift::compensated;
        else
            throw ConfigError("jump_drift must be raw or compensated");
    }
    const auto mean = s.number_opt("match_mean");
    const auto vol = s.number_opt("match_vol");
    if (mean.has_value() != vol.has_value()) throw ConfigError("match_mean and match_vol must be given together");
    if (mean) {
        if (s.has("level") || s.has("vol")) throw ConfigError("give either level/vol or match_mean/match_vol");
        try {
            const auto m = moment_match(f.speed, *mean, *vol, freq.value_or(0.0), rate.value_or(1.0));
            f.level = m.level;
            f.vol = m.vol;
        } catch (const std::exception& e) {
            throw ConfigError(e.what());
        }
        if (f.jump) f.jump_drift = JumpDrift::compensated;
    } else {
        f.level = s.number("level");
        f.vol = s.number("vol", 0.0);
    }
    return f;
}

} // namespace detail

/// Parses and validates INI text.
inline RunConfig parse_config(const std::string& text) {
    namespace pt = boost::property_tree;
    pt::ptree root;
    {
        std::istringstream is(text);
        try {
            pt::read_ini(is, root);
        } catch (const pt::ini_parser_error& e) {
            throw ConfigError("parse error at line " + std::to_string(e.line()) + ": " + e.message());
        }
    }
    static const std::set<std::string> sections{"run", "factor1", "factor2", "contract", "grid", "mc"};
    for (const auto& [name, child] : root) {
        if (!sections.count(name)) throw ConfigError("unknown section [" + name + "]");
        if (child.empty() && !child.data().empty()) throw ConfigError("key '" + name + "' outside any section");
    }
    auto section = [&](const char* name) {
        const auto it = root.find(name);
        return detail::Section(name, it == root.not_found() ? nullptr : &it->second);
    };
    if (root.empty())
        throw ConfigError("empty config; required: factor1.speed, factor1.level (or match_mean/match_vol), "
                          "contract.volume, grid.x1_min, grid.x1_max, mc.x0");

    RunConfig c;
    auto run = section("run");
    c.example = run.text_opt("example").value_or("custom");
    c.out = run.text_opt("out").value_or("out");
    c.seed = run.count("seed", 1);
    if (run.has("retain")) c.scheme.retain_times = run.list("retain");

    std::vector<OUFactor> factors;
    auto f1 = section("factor1");
    if (!f1.present()) throw ConfigError("missing section [factor1]");
    factors.push_back(detail::read_factor(f1));
    auto f2 = section("factor2");
    if (f2.present()) factors.push_back(detail::read_factor(f2));
    c.problem.model = FactorModel(std::move(factors));

    auto con = section("contract");
    std::vector<double> weights(c.problem.model.size(), 1.0);
    if (con.has("price_weights")) weights = con.list("price_weights");
    if (weights.size() != c.problem.model.size())
        throw ConfigError("contract.price_weights must have one entry per factor");
    try {
        c.problem.contract = ContractSpec::single(weights, con.number("strike", 0.0), con.number("volume"),
                                                  con.number("rate_cap", 1.0), con.number("horizon", 1.0),
                                                  con.number("discount", 0.0));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }

    auto grid = section("grid");
    auto& s = c.scheme;
    s.dt = grid.number("dt", s.dt);
    s.dz = grid.number("dz", s.dz);
    s.x1_min = grid.number("x1_min");
    s.x1_max = grid.number("x1_max");
    s.x1_nodes = grid.count("x1_nodes", s.x1_nodes);
    s.x1_cluster = grid.number("x1_cluster", s.x1_cluster);
    s.x1_cluster_strength = grid.number("x1_cluster_strength", s.x1_cluster_strength);
    s.x2_max = grid.number("x2_max", s.x2_max);
    s.dx2 = grid.number("dx2", s.dx2);
    s.jump_tol = grid.number("jump_tol", s.jump_tol);
    s.policy_stride = grid.count("policy_stride", s.policy_stride);
    if (const auto b = grid.text_opt("x1_boundary")) {
        if (*b == "analytic")
            s.x1_boundary = X1Boundary::analytic;
        else if (*b == "linear")
            s.x1_boundary = X1Boundary::linear;
        else
            throw ConfigError("grid.x1_boundary must be analytic or linear");
    }

    auto mc = section("mc");
    c.mc.paths = mc.count("paths", c.mc.paths);
    c.mc.steps = mc.count("steps", c.mc.steps);
    c.mc.x0 = mc.list("x0");

    for (auto* sec : {&run, &f1, &f2, &con, &grid, &mc}) sec->reject_unknown();
    c.validate();
    return c;
}

/// Resolved config as INI text; parse_config(echo_config(c)) == c.
inline std::string echo_config(const RunConfig& c) {
    std::ostringstream os;
    const auto num = [](double v) { return round_trip(v); };
    os << "[run]\nexample = " << c.example << "\nout = " << c.out << "\nseed = " << c.seed << "\n";
    if (!c.scheme.retain_times.empty()) os << "retain = " << detail::join(c.scheme.retain_times) << "\n";
    for (std::size_t n = 0; n < c.problem.model.size(); ++n) {
        const auto& f = c.problem.model.factors[n];
        os << "\n[factor" << n + 1 << "]\n";
        os << "; long-run mean " << num(f.long_run_mean()) << ", stationary sd "
           << num(std::sqrt(conditional_variance(f, 1e300))) << "\n";
        os << "speed = " << num(f.speed) << "\nlevel = " << num(f.level) << "\nvol = " << num(f.vol) << "\n";
        if (f.jump) {
            os << "jump_frequency = " << num(f.jump->frequency) << "\njump_rate = " << num(f.jump->rate)
               << "\njump_drift = " << (f.jump_drift == JumpDrift::raw ? "raw" : "compensated") << "\n";
        }
    }
    const auto& k = c.problem.contract;
    std::vector<double> w(static_cast<std::size_t>(k.factors()));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = k.price_matrix(0, static_cast<Eigen::Index>(i));
    os << "\n[contract]\nprice_weights = " << detail::join(w) << "\nstrike = " << num(k.strike[0])
       << "\nvolume = " << num(k.volume_cap[0]) << "\nrate_cap = " << num(k.rate_cap[0])
       << "\nhorizon = " << num(k.horizon) << "\ndiscount = " << num(k.discount) << "\n";
    const auto& s = c.scheme;
    os << "\n[grid]\ndt = " << num(s.dt) << "\ndz = " << num(s.dz) << "\nx1_min = " << num(s.x1_min)
       << "\nx1_max = " << num(s.x1_max) << "\nx1_nodes = " << s.x1_nodes << "\n";
    if (!std::isnan(s.x1_cluster)) os << "x1_cluster = " << num(s.x1_cluster) << "\n";
    os << "x1_cluster_strength = " << num(s.x1_cluster_strength) << "\n";
    if (s.x2_max != 0.0 || s.dx2 != 0.0) os << "x2_max = " << num(s.x2_max) << "\ndx2 = " << num(s.dx2) << "\n";
    os << "jump_tol = " << num(s.jump_tol)
       << "\nx1_boundary = " << (s.x1_boundary == X1Boundary::analytic ? "analytic" : "linear")
       << "\npolicy_stride = " << s.policy_stride << "\n";
    os << "\n[mc]\npaths = " << c.mc.paths << "\nsteps = " << c.mc.steps << "\nx0 = " << detail::join(c.mc.x0)
       << "\n";
    return os.str();
}

inline std::uint64_t config_hash(const RunConfig& c) { return fnv1a(echo_config(c)); }

/// Non-fatal remarks. Flags a jump factor whose vol is sqrt(s^2 - f/rate) for
/// a round s (two decimals): that reading does not match the diffusive
/// variance, which needs sqrt(s^2 - 2 f/rate^2).
inline std::vector<std::string> config_warnings(const RunConfig& c) {
    std::vector<std::string> out;
    for (std::size_t n = 0; n < c.problem.model.size(); ++n) {
        const auto& f = c.problem.model.factors[n];
        if (!f.jump || f.vol == 0.0) continue;
        const double fr = f.jump->frequency, a = f.jump->rate;
        const double alt = std::sqrt(f.vol * f.vol + fr / a);
        const double matched = std::sqrt(f.vol * f.vol + 2.0 * fr / (a * a));
        const auto round2 = [](double v) { return std::abs(100.0 * v - std::round(100.0 * v)) < 5e-3; };
        if (round2(alt) && !round2(matched)) {
            const double s = std::round(100.0 * alt) / 100.0;
            out.push_back("factor" + std::to_string(n + 1) + ".vol = " + round_trip(f.vol) + " is sqrt(" +
                          round_trip(s) + "^2 - f/rate); matching the variance of vol " + round_trip(s) +
                          " needs sqrt(" + round_trip(s) + "^2 - 2 f/rate^2) = " +
                          round_trip(std::sqrt(s * s - 2.0 * fr / (a * a))));
        }
    }
    return out;
}

/// Worked examples. Common contract: T = 1, M = 1/2, rate cap 1, strike 0.
namespace presets {

inline constexpr double kDiscount = 0.001;

inline ContractSpec contract(std::vector<double> weights) {
    return ContractSpec::single(std::move(weights), 0.0, 0.5, 1.0, 1.0, kDiscount);
}

inline SchemeConfig one_factor_grid(bool paper_scale) {
    SchemeConfig s;
    s.dt = paper_scale ? 1.0 / 1000.0 : 1.0 / 250.0;
    s.dz = paper_scale ? 1.0 / 1000.0 : 1.0 / 250.0;
    s.x1_min = 18.7;
    s.x1_max = 61.3;
    s.x1_nodes = paper_scale ? 671 : 168;
    s.x1_cluster = 40.0;
    s.retain_times = {0.0, 0.5, 1.0};
    s.policy_stride = paper_scale ? 4 : 1;
    return s;
}

inline RunConfig ex1(bool paper_scale = false) {
    RunConfig c;
    c.example = "ex1";
    c.out = "out/ex1";
    c.problem = {FactorModel({OUFactor::gaussian(0.014, 40.0, 2.36)}), contract({1.0})};
    c.scheme = one_factor_grid(paper_scale);
    c.mc.x0 = {40.0};
    return c;
}

/// Jump OU matched in long-run mean and variance to ex1.
inline RunConfig ex2(bool paper_scale = false) {
    RunConfig c = ex1(paper_scale);
    c.example = "ex2";
    c.out = "out/ex2";
    c.problem.model = FactorModel({matched_jump_factor(0.014, 40.0, 2.36, ExpJumpSpec{0.04, 0.4})});
    return c;
}

/// Diffusive OU plus a pure-jump OU, price x1 + x2. The mean jump of x2 is
/// 1/0.014, so x1 + x2 drifts upwards by about 3.4 per year and at this
/// discount rate the exercise boundary lies near x1 = 200..230; the x1 range
/// is taken wide enough to contain it.
inline RunConfig ex3(bool paper_scale = false) {
    RunConfig c;
    c.example = "ex3";
    c.out = "out/ex3";
    OUFactor x2{0.04, 0.0, 0.0, ExpJumpSpec{0.04, 0.014}, JumpDrift::raw};
    c.problem = {FactorModel({OUFactor::gaussian(0.014, 40.0, 2.36), x2}), contract({1.0, 1.0})};
    auto& s = c.scheme;
    s.dt = paper_scale ? 1.0 / 3200.0 : 1.0 / 800.0;
    s.dz = paper_scale ? 1.0 / 3198.0 : 1.0 / 798.0;
    s.x1_min = 17.2;
    s.x1_max = 400.0;
    s.x1_nodes = paper_scale ? 1200 : 300;
    s.x1_cluster = 40.0;
    s.x1_cluster_strength = 1.0;
    s.x2_max = 9.0;
    s.dx2 = paper_scale ? 9.0 / 40.0 : 9.0 / 20.0;
    s.retain_times = {0.0, 0.5, 1.0};
    s.policy_stride = paper_scale ? 80 : 20;
    c.mc.x0 = {40.0, 0.0};
    return c;
}

inline RunConfig by_name(const std::string& name, bool paper_scale = false) {
    if (name == "ex1") return ex1(paper_scale);
    if (name == "ex2") return ex2(paper_scale);
    if (name == "ex3") return ex3(paper_scale);
    throw ConfigError("no preset named '" + name + "'");
}

} // namespace presets

} // namespace swing
