#pragma once

// Exercise curves from solved surfaces: the zero set of h = A(P(x)) + V_z,
// with V_z the solver's own forward z-difference, so the curves agree with
// the controls the solver applied.

#include "swing/contract.hpp"
#include "swing/csv.hpp"
#include "swing/hjb_solver.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace swing {

enum class TriggerFlag {
    crossing,        // single sign change
    multiple,        // several sign changes; the leftmost is reported
    always_exercise, // h > 0 on the whole line; trigger clipped to the lower end
    never_exercise   // h <= 0 on the whole line; trigger clipped to the upper end
};

struct TriggerPoint {
    double coord;   // swept coordinate (z, or x2)
    double trigger; // x1 root, or price at the root
    TriggerFlag flag;

    bool clipped() const { return flag == TriggerFlag::always_exercise || flag == TriggerFlag::never_exercise; }
};

/// Points ordered by `coord`.
struct TriggerCurve {
    double time = 0.0;
    double fixed = 0.0; // value held fixed (x2 for price-z curves, z for x1x2 curves)
    std::vector<TriggerPoint> points;
};

enum class Projection {
    price_z, // for fixed x2: price at the trigger against z
    x1_x2    // for fixed z: x1 at the trigger against x2
};

namespace detail {

/// First sign change of h along an axis, linearly interpolated.
inline std::pair<double, TriggerFlag> line_root(const std::vector<double>& x, const std::vector<double>& h) {
    std::size_t changes = 0, first = 0;
    for (std::size_t i = 0; i + 1 < x.size(); ++i)
        if ((h[i] > 0.0) != (h[i + 1] > 0.0)) {
            if (changes++ == 0) first = i;
        }
    if (changes == 0) {
        if (h.front() > 0.0) return {x.front(), TriggerFlag::always_exercise};
        return {x.back(), TriggerFlag::never_exercise};
    }
    const double a = h[first], b = h[first + 1];
    const double root = x[first] + (x[first + 1] - x[first]) * (-a) / (b - a);
    return {root, changes == 1 ? TriggerFlag::crossing : TriggerFlag::multiple};
}

inline void require_single(const ContractSpec& c) {
    if (c.commodities() != 1) throw std::invalid_argument("trigger extraction: one commodity only");
}

inline std::vector<double> h_line(const ValueSurface& s, const ContractSpec& c, std::size_t k, std::size_t j) {
    const Grid& g = *s.grid;
    const Eigen::MatrixXd loading = c.factor_loading();
    std::vector<double> h(g.n1());
    for (std::size_t i = 0; i < g.n1(); ++i) {
        double a = loading(0, 0) * g.x1[i] + c.strike[0];
        if (g.two_factor()) a += loading(0, 1) * g.x2[j];
        h[i] = a + s.vz[g.index(k, j, i)];
    }
    return h;
}

inline std::size_t nearest(const std::vector<double>& axis, double v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < axis.size(); ++i)
        if (std::abs(axis[i] - v) < std::abs(axis[best] - v)) best = i;
    return best;
}

} // namespace detail

/// One-factor exercise curve: for each z row below M, the x1 root of h.
inline TriggerCurve trigger_1d(const ValueSurface& s, const ContractSpec& c) {
    detail::require_single(c);
    const Grid& g = *s.grid;
    if (g.two_factor()) throw std::invalid_argument("trigger_1d: surface has two factors");
    TriggerCurve curve{s.time, 0.0, {}};
    for (std::size_t k = 0; k + 1 < g.nz(); ++k) {
        const auto [root, flag] = detail::line_root(g.x1, detail::h_line(s, c, k, 0));
        curve.points.push_back({g.z[k], root, flag});
    }
    return curve;
}

/// Two-factor exercise surface projected on a plane, one curve per fixed
/// value (snapped to the nearest grid node, recorded in `fixed`).
inline std::vector<TriggerCurve> trigger_2d_projections(const ValueSurface& s, const ContractSpec& c,
                                                        Projection plane, const std::vector<double>& fixed) {
    detail::require_single(c);
    const Grid& g = *s.grid;
    if (!g.two_factor()) throw std::invalid_argument("trigger_2d_projections: surface has one factor");
    std::vector<TriggerCurve> out;
    for (const double v : fixed) {
        TriggerCurve curve{s.time, 0.0, {}};
        if (plane == Projection::price_z) {
            const std::size_t j = detail::nearest(g.x2, v);
            curve.fixed = g.x2[j];
            for (std::size_t k = 0; k + 1 < g.nz(); ++k) {
                const auto [root, flag] = detail::line_root(g.x1, detail::h_line(s, c, k, j));
                const double price = c.price_matrix(0, 0) * root + c.price_matrix(0, 1) * g.x2[j];
                curve.points.push_back({g.z[k], price, flag});
            }
        } else {
            const std::size_t k = detail::nearest(g.z, v);
            if (k + 1 == g.nz()) throw std::invalid_argument("trigger_2d_projections: no decision at z = M");
            curve.fixed = g.z[k];
            for (std::size_t j = 0; j < g.n2(); ++j) {
                const auto [root, flag] = detail::line_root(g.x1, detail::h_line(s, c, k, j));
                curve.points.push_back({g.x2[j], root, flag});
            }
        }
        out.push_back(std::move(curve));
    }
    return out;
}

/// Ordinary least-squares slope of coord (vertical) against trigger
/// (horizontal), skipping clipped points and optionally the first point.
inline double lsq_slope(const TriggerCurve& curve, bool exclude_first) {
    std::vector<std::pair<double, double>> xy;
    for (std::size_t n = exclude_first ? 1 : 0; n < curve.points.size(); ++n) {
        const auto& p = curve.points[n];
        if (!p.clipped()) xy.emplace_back(p.trigger, p.coord);
    }
    if (xy.size() < 2) throw std::invalid_argument("lsq_slope: need at least 2 unclipped points");
    double mx = 0.0, my = 0.0;
    for (const auto& [x, y] : xy) {
        mx += x;
        my += y;
    }
    mx /= static_cast<double>(xy.size());
    my /= static_cast<double>(xy.size());
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [x, y] : xy) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if (!(sxx > 0.0)) throw std::invalid_argument("lsq_slope: degenerate abscissae");
    return sxy / sxx;
}

/// CSV with header t,fixed,abscissa,trigger.
inline void write_curve_csv(std::ostream& os, const std::vector<TriggerCurve>& curves) {
    CsvRow(os) << "t" << "fixed" << "abscissa" << "trigger";
    for (const auto& c : curves)
        for (const auto& p : c.points) CsvRow(os) << c.time << c.fixed << p.coord << p.trigger;
}

} // namespace swing
