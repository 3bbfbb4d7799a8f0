#pragma once

#include <span>

namespace rmss {

/// Standard normal CDF.
double normal_cdf(double x);

/// Inverse standard normal CDF. Throws InvalidArgument unless 0 < p < 1.
double normal_quantile(double p);

/// Linear-interpolation percentile of already sorted data (q in [0, 1]).
double sorted_quantile(std::span<const double> sorted, double q);

}  // namespace rmss
