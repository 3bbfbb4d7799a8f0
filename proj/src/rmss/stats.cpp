#include "rmss/stats.hpp"

#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <numbers>

#include "rmss/errors.hpp"

namespace rmss {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("probability must lie strictly between 0 and 1");
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

double sorted_quantile(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw InvalidArgument("quantile of empty sample");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double w = pos - static_cast<double>(lo);
    return sorted[lo] + w * (sorted[hi] - sorted[lo]);
}

}  // namespace rmss
