#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rmss/grid.hpp"
#include "rmss/parameters.hpp"
#include "rmss/powerflow.hpp"
#include "rmss/worstcase.hpp"

namespace rmss {

/// Draws of the essential parameters, one row per sample.
struct SampleBatch {
    Eigen::MatrixXd draws;  // n x d, pu
    std::uint64_t seed = 0;
    std::string generator;
};

/// Samples are generated in chunks of this many rows, each from its own seeded stream.
inline constexpr std::size_t kSampleChunk = 1024;

/// x = eta + F z with F F' = Sigma from a pivoted LDL' factorization and z standard normal.
/// Bit-reproducible from (params, n, seed).
SampleBatch sample_parameters(const StochasticParameterSet& params, std::size_t n, std::uint64_t seed);

enum class CiMode {
    Percentile,  // empirical 2.5% / 97.5% quantiles of the metric values
    MeanCi,      // mean +/- 1.96 * stdev / sqrt(n)
};

const char* to_string(CiMode m);
CiMode parse_ci_mode(std::string_view text);

struct McOptions {
    std::size_t samples = 10000;
    std::uint64_t seed = 1;
    unsigned workers = 1;
    CiMode ci = CiMode::Percentile;
    PowerFlowOptions pf;
    /// Keep the per-sample metric values in the report.
    bool keep_samples = false;
};

struct MetricStats {
    double mean = 0.0;
    double stdev = 0.0;
    double ci_lb = 0.0;
    double ci_ub = 0.0;
};

struct ParameterBounds {
    double mean = 0.0;
    double stdev = 0.0;
    double ci_lb = 0.0;  // eta - 1.96 sigma
    double ci_ub = 0.0;
};

struct McReport {
    std::string case_name;
    std::uint64_t seed = 0;
    std::size_t samples = 0;
    std::size_t converged = 0;
    std::size_t failed = 0;
    std::vector<std::size_t> failed_samples;
    CiMode ci = CiMode::Percentile;
    StochasticParameterSet params;
    MetricSpec spec;
    std::vector<double> c_nom;
    std::vector<MetricStats> metrics;
    std::vector<ParameterBounds> parameters;

    // Timing; not part of the reproducible statistics.
    unsigned workers = 1;
    double total_runtime_s = 0.0;  // summed solve time, equal to a single-threaded run
    double wall_time_s = 0.0;
    double mean_solve_s = 0.0;
    double min_solve_s = 0.0;

    /// Converged samples only, in sample order (keep_samples).
    std::vector<std::size_t> sample_index;
    Eigen::MatrixXd sample_metrics;
};

/// One warm-started solve per sample. Failed solves are counted and excluded. Statistics do
/// not depend on the worker count.
McReport run_monte_carlo(const GridCase& grid, const StochasticParameterSet& params, const MetricSpec& spec,
                         const McOptions& opts);

struct MaeSet {
    double sigma_c = 0.0;
    double c_ub = 0.0;  // pu
    double c_lb = 0.0;
    double e_ub = 0.0;
    double e_lb = 0.0;
};

struct ComparisonReport {
    std::vector<MaeSet> per_sigma;
    std::size_t best = 0;  // index of the sigma_c with the smallest mean metric MAE
    MaeSet mae;            // per_sigma[best]
    std::size_t metrics = 0;
    std::size_t parameters = 0;
    double rmss_runtime_s = 0.0;
    double mc_runtime_s = 0.0;
    double speedup = 0.0;
    double mc_failure_rate = 0.0;
};

/// Largest accepted share of failed Monte Carlo solves.
inline constexpr double kMaxFailureRate = 0.01;

/// Sum |x_rmss - x_mc| / N for the metric and parameter bounds of every sigma_c point. The RMSS
/// parameter bounds are the per-parameter envelope of all constructed worst-case vectors.
ComparisonReport mae_compare(const RmssReport& rmss, const McReport& mc);

}  // namespace rmss
