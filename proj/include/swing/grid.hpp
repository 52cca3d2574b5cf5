#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace swing {

/// n equally spaced nodes on [lo, hi], endpoints exact.
inline std::vector<double> uniform_axis(double lo, double hi, std::size_t n) {
    if (n < 2 || !(hi > lo)) throw std::invalid_argument("uniform_axis: need n >= 2 and lo < hi");
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    x.back() = hi;
    return x;
}

/// Nodes x(s) = c + a sinh(s1 + (s2 - s1) s) on a uniform s-mesh, with
/// a = (x_max - x_min) / strength. Spacing is smallest at the node nearest c
/// and grows towards both ends; strength 0 gives a uniform axis.
inline std::vector<double> build_adaptive_x1(double x_min, double x_max, std::size_t n_nodes,
                                             double cluster_center, double cluster_strength) {
    if (!(x_min < cluster_center && cluster_center < x_max))
        throw std::invalid_argument("build_adaptive_x1: need x_min < cluster_center < x_max");
    if (n_nodes < 3) throw std::invalid_argument("build_adaptive_x1: need at least 3 nodes");
    if (!(cluster_strength >= 0.0) || !std::isfinite(cluster_strength))
        throw std::invalid_argument("build_adaptive_x1: cluster strength must be nonnegative");
    if (cluster_strength == 0.0) return uniform_axis(x_min, x_max, n_nodes);

    const double a = (x_max - x_min) / cluster_strength;
    const double s1 = std::asinh((x_min - cluster_center) / a);
    const double s2 = std::asinh((x_max - cluster_center) / a);
    std::vector<double> x(n_nodes);
    for (std::size_t i = 0; i < n_nodes; ++i) {
        const double s = static_cast<double>(i) / static_cast<double>(n_nodes - 1);
        x[i] = cluster_center + a * std::sinh(s1 + (s2 - s1) * s);
    }
    x.front() = x_min;
    x.back() = x_max;
    for (std::size_t i = 1; i < n_nodes; ++i)
        if (!(x[i] > x[i - 1])) throw std::invalid_argument("build_adaptive_x1: axis not strictly increasing");
    return x;
}

/// Cell lookup: index i with x[i] <= v <= x[i+1] and the weight of x[i+1].
/// Values outside the axis are clamped to the end cells unless `extrapolate`.
struct Bracket {
    std::size_t lo;
    double weight;
};

inline Bracket locate(const std::vector<double>& x, double v, bool extrapolate = false) {
    if (x.size() < 2) return {0, 0.0};
    std::size_t i;
    if (v <= x.front())
        i = 0;
    else if (v >= x.back())
        i = x.size() - 2;
    else
        i = static_cast<std::size_t>(std::upper_bound(x.begin(), x.end(), v) - x.begin()) - 1;
    double w = (v - x[i]) / (x[i + 1] - x[i]);
    if (!extrapolate) w = std::clamp(w, 0.0, 1.0);
    return {i, w};
}

/// Same as locate() for an axis lo + k h, k = 0..n-1, in O(1).
inline Bracket locate_uniform(double lo, double h, std::size_t n, double v, bool extrapolate = false) {
    if (n < 2) return {0, 0.0};
    const double s = (v - lo) / h;
    const double top = static_cast<double>(n - 2);
    const double cell = std::clamp(std::floor(s), 0.0, top);
    double w = s - cell;
    if (!extrapolate) w = std::clamp(w, 0.0, 1.0);
    return {static_cast<std::size_t>(cell), w};
}

inline void require_increasing(const std::vector<double>& x, const char* what) {
    if (x.size() < 3) throw std::invalid_argument(std::string(what) + ": need at least 3 nodes");
    for (std::size_t i = 1; i < x.size(); ++i)
        if (!(x[i] > x[i - 1])) throw std::invalid_argument(std::string(what) + ": axis not strictly increasing");
}

} // namespace swing
