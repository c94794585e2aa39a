#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "reportgap/error.hpp"

namespace reportgap::stats {

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
inline double two_sided_p(double t, double df) {
    if (std::isnan(t)) return std::nan("");
    if (t == 0.0) return 1.0;
    const boost::math::students_t dist(df);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
}

/// Critical value c with P(|T| <= c) = level.
inline double t_critical(double level, double df) {
    const boost::math::students_t dist(df);
    return boost::math::quantile(dist, 0.5 + level / 2.0);
}

/// Type-7 sample quantile (linear interpolation between order statistics) of
/// already sorted data.
inline double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw NumericalError("quantile of empty sample");
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("quantile probability outside [0,1]");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::vector<double> values, double p) {
    std::sort(values.begin(), values.end());
    return quantile_sorted(values, p);
}

} // namespace reportgap::stats
