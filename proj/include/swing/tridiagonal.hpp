#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace swing {

/// Thomas algorithm with the elimination factored once, for repeated solves
/// against a fixed matrix. Row i reads lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1].
class Tridiagonal {
public:
    Tridiagonal() = default;

    Tridiagonal(std::vector<double> lower, std::vector<double> diag, std::vector<double> upper)
        : lower_(std::move(lower)), upper_(std::move(upper)) {
        const std::size_t n = diag.size();
        if (n == 0 || lower_.size() != n || upper_.size() != n)
            throw std::invalid_argument("Tridiagonal: bands must have equal nonzero length");
        inv_pivot_.resize(n);
        scaled_upper_.resize(n);
        double prev = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double pivot = diag[i] - (i > 0 ? lower_[i] * prev : 0.0);
            if (!(std::abs(pivot) > 1e-300) || !std::isfinite(pivot))
                throw std::runtime_error("Tridiagonal: zero pivot at row " + std::to_string(i));
            inv_pivot_[i] = 1.0 / pivot;
            prev = scaled_upper_[i] = upper_[i] * inv_pivot_[i];
        }
    }

    std::size_t size() const { return inv_pivot_.size(); }

    /// Overwrites d with the solution.
    void solve(double* d) const {
        const std::size_t n = size();
        d[0] *= inv_pivot_[0];
        for (std::size_t i = 1; i < n; ++i) d[i] = (d[i] - lower_[i] * d[i - 1]) * inv_pivot_[i];
        for (std::size_t i = n - 1; i-- > 0;) d[i] -= scaled_upper_[i] * d[i + 1];
    }

    /// Solves m systems at once; d is row-major n x m (column c is system c).
    void solve_batch(double* d, std::size_t m) const {
        const std::size_t n = size();
        for (std::size_t c = 0; c < m; ++c) d[c] *= inv_pivot_[0];
        for (std::size_t i = 1; i < n; ++i) {
            const double l = lower_[i], p = inv_pivot_[i];
            double* row = d + i * m;
            const double* prev = row - m;
            for (std::size_t c = 0; c < m; ++c) row[c] = (row[c] - l * prev[c]) * p;
        }
        for (std::size_t i = n - 1; i-- > 0;) {
            const double u = scaled_upper_[i];
            double* row = d + i * m;
            const double* next = row + m;
            for (std::size_t c = 0; c < m; ++c) row[c] -= u * next[c];
        }
    }

    void solve(std::vector<double>& d) const {
        if (d.size() != size()) throw std::invalid_argument("Tridiagonal: right-hand side size");
        solve(d.data());
    }

private:
    std::vector<double> lower_, upper_, inv_pivot_, scaled_upper_;
};

} // namespace swing
