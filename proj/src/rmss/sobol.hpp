#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>

#include "rmss/parameters.hpp"
#include "rmss/sensitivity.hpp"

namespace rmss {

/// Independent input marginal for variance-based sensitivity analysis.
struct Marginal {
    enum class Kind { Normal, Uniform };
    Kind kind = Kind::Normal;
    double a = 0.0;  // mean | lower
    double b = 1.0;  // stdev | upper

    static Marginal normal(double mean, double stdev) { return {Kind::Normal, mean, stdev}; }
    static Marginal uniform(double lo, double hi) { return {Kind::Uniform, lo, hi}; }

    /// Maps u in (0, 1) through the inverse CDF.
    double from_unit(double u) const;
};

struct SobolIndices {
    Eigen::MatrixXd first_order;  // metrics x inputs
    Eigen::MatrixXd half_width;   // bootstrap 95% half-widths
    /// Signed least-squares slope of each metric on the inputs over the A and B samples.
    Eigen::MatrixXd slope;
    std::size_t n_base = 0;
    std::size_t evaluations = 0;
};

/// Saltelli A/B/AB_i scheme, n_base * (d + 2) evaluations. Points come from a Sobol
/// sequence in 2d dimensions with a seed-derived random shift.
SobolIndices sobol_first_order(const MetricModel& model, std::span<const Marginal> inputs, std::size_t n_base,
                               std::uint64_t seed);

/// Inputs treated as independent normals N(mean, stdev^2) of each parameter.
SobolIndices sobol_first_order(const MetricModel& model, const StochasticParameterSet& params,
                               std::size_t n_base, std::uint64_t seed);

}  // namespace rmss
