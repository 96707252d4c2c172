#pragma once

// Elementwise kernels, a numerically stable softplus, nearest-rank order
// statistics and log-log slope fitting. Everything is 64-bit.

#include <softcal/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace softcal {

using Vector = std::vector<double>;
using ConstView = std::span<const double>;

namespace detail {

inline void require_same_length(std::size_t a, std::size_t b, const char* op) {
    if (a != b) {
        throw InputDomainError(std::string(op) + ": length mismatch (" + std::to_string(a) + " vs " +
                               std::to_string(b) + ")");
    }
}

}  // namespace detail

inline bool all_finite(ConstView v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline double dot(ConstView a, ConstView b) {
    detail::require_same_length(a.size(), b.size(), "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double squared_norm(ConstView a) { return dot(a, a); }

inline double norm(ConstView a) { return std::sqrt(squared_norm(a)); }

inline Vector hadamard(ConstView a, ConstView b) {
    detail::require_same_length(a.size(), b.size(), "hadamard");
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

inline Vector elementwise_max(ConstView a, ConstView b) {
    detail::require_same_length(a.size(), b.size(), "elementwise_max");
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::max(a[i], b[i]);
    return out;
}

/// Coordinatewise square root. Negative coordinates are a domain error.
inline Vector elementwise_sqrt(ConstView a) {
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(a[i] >= 0.0)) throw InputDomainError("elementwise_sqrt: negative or NaN coordinate");
        out[i] = std::sqrt(a[i]);
    }
    return out;
}

/// a + alpha * b
inline Vector axpy(ConstView a, double alpha, ConstView b) {
    detail::require_same_length(a.size(), b.size(), "axpy");
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + alpha * b[i];
    return out;
}

inline Vector subtract(ConstView a, ConstView b) { return axpy(a, -1.0, b); }

inline Vector scaled(ConstView a, double alpha) {
    Vector out(a.begin(), a.end());
    for (double& x : out) x *= alpha;
    return out;
}

/// Branch point for softplus_stable: above this value of beta*x the
/// argument of exp() is negated so nothing overflows.
inline constexpr double kSoftplusBranch = 30.0;

/// (1/beta) * log(1 + exp(beta * x)) for x >= 0, overflow-free for any beta*x.
inline double softplus_stable(double x, double beta) {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("softplus: beta must be positive and finite");
    if (!std::isfinite(x) || x < 0.0) throw InputDomainError("softplus: x must be finite and non-negative");
    const double z = beta * x;
    if (z > kSoftplusBranch) return x + std::log1p(std::exp(-z)) / beta;
    return std::log1p(std::exp(z)) / beta;
}

/// Nearest-rank percentile: the element of rank ceil(q/100 * d) in ascending
/// order, rank 1 for q = 0.
inline double percentile_nearest_rank(ConstView v, double q) {
    if (v.empty()) throw InputDomainError("percentile: empty vector");
    if (!(q >= 0.0 && q <= 100.0)) throw InputDomainError("percentile: q must lie in [0, 100]");
    Vector sorted(v.begin(), v.end());
    std::sort(sorted.begin(), sorted.end());
    const auto d = static_cast<double>(sorted.size());
    auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * d));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    return sorted[rank - 1];
}

/// Least-squares slope of log(ys) against log(ts).
inline double loglog_slope(ConstView ts, ConstView ys) {
    detail::require_same_length(ts.size(), ys.size(), "loglog_slope");
    if (ts.size() < 2) throw InputDomainError("loglog_slope: need at least two points");
    const std::size_t n = ts.size();
    Vector lx(n), ly(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(ts[i] > 0.0) || !(ys[i] > 0.0) || !std::isfinite(ts[i]) || !std::isfinite(ys[i])) {
            throw InputDomainError("loglog_slope: entries must be positive and finite");
        }
        lx[i] = std::log(ts[i]);
        ly[i] = std::log(ys[i]);
    }
    const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if (sxx == 0.0) throw InputDomainError("loglog_slope: ts must not all be equal");
    return sxy / sxx;
}

/// Arithmetic mean and sample (n-1) standard deviation.
struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

inline MeanStd mean_std(ConstView xs) {
    if (xs.empty()) throw InputDomainError("mean_std: empty input");
    // Shifted by the first sample so identical inputs give exactly std = 0.
    MeanStd r;
    double shift_sum = 0.0;
    for (double x : xs) shift_sum += x - xs[0];
    r.mean = xs[0] + shift_sum / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - r.mean) * (x - r.mean);
        r.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return r;
}

}  // namespace softcal
