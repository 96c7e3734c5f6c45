#pragma once

// Clamped B-spline feature map over log-probabilities.
//
// Knot vector: lo repeated degree+1 times, the interior knots, hi repeated
// degree+1 times. Inputs outside [lo, hi] are clamped, so every witness built
// on this basis is bounded and constant beyond the training range.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "logitwitness/error.hpp"

namespace lw {

inline constexpr int default_n_base = 16;
inline constexpr int default_degree = 2;
inline constexpr double min_knot_gap = 1e-9;

class SplineBasis {
public:
    SplineBasis(int degree, std::vector<double> interior_knots, double lo, double hi)
        : degree_(degree), interior_(std::move(interior_knots)), lo_(lo), hi_(hi) {
        if (degree_ < 1) {
            throw domain_error("spline degree must be >= 1");
        }
        if (!(std::isfinite(lo_) && std::isfinite(hi_) && lo_ < hi_)) {
            throw domain_error("spline boundary must satisfy lo < hi");
        }
        double prev = lo_;
        for (double k : interior_) {
            if (!(k > prev)) {
                throw domain_error("interior knots must be strictly increasing and inside (lo, hi)");
            }
            prev = k;
        }
        if (!(hi_ > prev)) {
            throw domain_error("interior knots must lie strictly below hi");
        }
        knots_.reserve(interior_.size() + 2 * static_cast<std::size_t>(degree_ + 1));
        knots_.insert(knots_.end(), static_cast<std::size_t>(degree_ + 1), lo_);
        knots_.insert(knots_.end(), interior_.begin(), interior_.end());
        knots_.insert(knots_.end(), static_cast<std::size_t>(degree_ + 1), hi_);
    }

    int degree() const noexcept { return degree_; }
    double lo() const noexcept { return lo_; }
    double hi() const noexcept { return hi_; }
    const std::vector<double>& interior_knots() const noexcept { return interior_; }
    const std::vector<double>& knot_vector() const noexcept { return knots_; }

    /// Number of basis functions.
    std::size_t dim() const noexcept { return interior_.size() + static_cast<std::size_t>(degree_) + 1; }

    double clamp(double z) const noexcept { return std::clamp(z, lo_, hi_); }

    /// Writes the degree+1 possibly-nonzero basis values at z into `out` and
    /// returns the index of the first one.
    std::size_t eval_local(double z, std::span<double> out) const {
        const int p = degree_;
        z = clamp(z);
        const std::size_t span = find_span(z);
        double left[32];
        double right[32];
        out[0] = 1.0;
        for (int j = 1; j <= p; ++j) {
            left[j] = z - knots_[span + 1 - static_cast<std::size_t>(j)];
            right[j] = knots_[span + static_cast<std::size_t>(j)] - z;
            double saved = 0.0;
            for (int r = 0; r < j; ++r) {
                const double temp = out[static_cast<std::size_t>(r)] / (right[r + 1] + left[j - r]);
                out[static_cast<std::size_t>(r)] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[static_cast<std::size_t>(j)] = saved;
        }
        return span - static_cast<std::size_t>(p);
    }

    /// Full feature vector phi(z).
    std::vector<double> eval(double z) const {
        std::vector<double> phi(dim(), 0.0);
        double local[32];
        const std::size_t first = eval_local(z, std::span<double>(local, static_cast<std::size_t>(degree_) + 1));
        for (int j = 0; j <= degree_; ++j) {
            phi[first + static_cast<std::size_t>(j)] = local[j];
        }
        return phi;
    }

    /// phi(z) . coef without materializing phi.
    double dot(double z, std::span<const double> coef) const {
        double local[32];
        const std::size_t first = eval_local(z, std::span<double>(local, static_cast<std::size_t>(degree_) + 1));
        double s = 0.0;
        for (int j = 0; j <= degree_; ++j) {
            s += local[j] * coef[first + static_cast<std::size_t>(j)];
        }
        return s;
    }

    bool operator==(const SplineBasis& o) const {
        return degree_ == o.degree_ && interior_ == o.interior_ && lo_ == o.lo_ && hi_ == o.hi_;
    }

private:
    // Knot span index s with knots_[s] <= z < knots_[s+1]; z == hi maps to the
    // last non-empty span.
    std::size_t find_span(double z) const {
        const std::size_t n = dim() - 1;
        const std::size_t p = static_cast<std::size_t>(degree_);
        if (z >= knots_[n + 1]) {
            return n;
        }
        const auto it = std::upper_bound(knots_.begin() + static_cast<std::ptrdiff_t>(p),
                                         knots_.begin() + static_cast<std::ptrdiff_t>(n + 1), z);
        return static_cast<std::size_t>(it - knots_.begin()) - 1;
    }

    int degree_;
    std::vector<double> interior_;
    double lo_;
    double hi_;
    std::vector<double> knots_;
};

/// Empirical quantile with linear interpolation between order statistics.
/// `sorted` must be non-empty and ascending.
inline double empirical_quantile(std::span<const double> sorted, double level) {
    const double h = level * static_cast<double>(sorted.size() - 1);
    const auto lower = static_cast<std::size_t>(std::floor(h));
    if (lower + 1 >= sorted.size()) {
        return sorted.back();
    }
    const double frac = h - static_cast<double>(lower);
    return sorted[lower] + frac * (sorted[lower + 1] - sorted[lower]);
}

/// Builds a clamped basis with interior knots at empirical quantiles of
/// `values`. Coincident quantiles (heavily repeated values) are merged, in
/// which case the basis has fewer than n_base functions.
inline SplineBasis build_basis(std::span<const double> values, int n_base = default_n_base,
                               int degree = default_degree) {
    if (degree < 1 || degree > 30) {
        throw domain_error("spline degree must be in [1, 30], got " + std::to_string(degree));
    }
    if (n_base < degree + 2) {
        throw domain_error("n_base must be >= degree + 2 (got n_base=" + std::to_string(n_base) +
                           ", degree=" + std::to_string(degree) + ")");
    }
    if (values.empty()) {
        throw domain_error("cannot build a basis from an empty value set");
    }
    std::vector<double> sorted(values.begin(), values.end());
    for (double v : sorted) {
        if (!std::isfinite(v)) {
            throw domain_error("basis values must be finite");
        }
    }
    std::sort(sorted.begin(), sorted.end());
    const double range = sorted.back() - sorted.front();
    if (!(range > 0.0)) {
        throw domain_error("degenerate range: all basis values are identical");
    }
    const double pad = 1e-6 * (range + 1.0);
    const double lo = sorted.front() - pad;
    const double hi = sorted.back() + pad;

    const int segments = n_base - degree;
    std::vector<double> interior;
    double prev = lo;
    for (int k = 1; k < segments; ++k) {
        const double q = empirical_quantile(sorted, static_cast<double>(k) / segments);
        if (q - prev >= min_knot_gap && hi - q >= min_knot_gap) {
            interior.push_back(q);
            prev = q;
        }
    }
    return SplineBasis(degree, std::move(interior), lo, hi);
}

} // namespace lw
