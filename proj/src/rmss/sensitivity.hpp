#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "rmss/parameters.hpp"
#include "rmss/powerflow.hpp"

namespace rmss {

enum class SensitivityMethod { Adjoint, FiniteDifference, SobolRescaled };

const char* to_string(SensitivityMethod m);

/// Lambda: one row per metric, one column per parameter (d metric / d parameter, pu/pu).
struct SensitivityMatrix {
    Eigen::MatrixXd values;
    std::vector<SensitivityMethod> method;
    /// Relative adjoint-vs-probe disagreement per row; NaN when the row was not probed.
    std::vector<double> disagreement;
    /// Rows flagged as highly nonlinear by the probe.
    std::vector<bool> nonlinear;
    /// First-order Sobol indices for re-estimated rows.
    std::vector<std::optional<Eigen::VectorXd>> sobol;
    /// Linear solves against the (transposed) Newton Jacobian.
    std::size_t linear_solves = 0;

    std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }
};

/// Parameter vector -> metric vector evaluator. Implementations must be safe to call
/// concurrently and throw rmss::Error on failure.
class MetricModel {
  public:
    virtual ~MetricModel() = default;
    virtual std::size_t parameter_count() const = 0;
    virtual std::size_t metric_count() const = 0;
    virtual Eigen::VectorXd evaluate(const Eigen::VectorXd& params) const = 0;
};

/// Re-solves the power flow with parameters substituted, warm-started from a fixed point.
class GridMetricModel final : public MetricModel {
  public:
    GridMetricModel(const NetworkModel& net, const StochasticParameterSet& params, const MetricSpec& spec,
                    PowerFlowOptions opts, std::vector<Complex> warm_start);

    std::size_t parameter_count() const override { return params_->size(); }
    std::size_t metric_count() const override { return spec_->size(); }
    Eigen::VectorXd evaluate(const Eigen::VectorXd& params) const override;

  private:
    const NetworkModel* net_;
    const StochasticParameterSet* params_;
    const MetricSpec* spec_;
    ParameterBinding binding_;
    PowerFlowOptions opts_;
    std::vector<Complex> warm_;
};

/// One transposed-Jacobian solve per metric at the converged point; each row is then
/// assembled from the residual's derivative with respect to the injections.
SensitivityMatrix adjoint_sensitivities(const NetworkModel& net, const PowerFlowSolution& sol,
                                        const StochasticParameterSet& params, const MetricSpec& spec);
SensitivityMatrix adjoint_sensitivities(const GridCase& grid, const PowerFlowSolution& sol,
                                        const StochasticParameterSet& params, const MetricSpec& spec);

/// Central differences, two evaluations per parameter. steps[j] > 0 for every j.
Eigen::MatrixXd central_differences(const MetricModel& model, const Eigen::VectorXd& center,
                                    const Eigen::VectorXd& steps);

SensitivityMatrix finite_difference_sensitivities(const MetricModel& model, const Eigen::VectorXd& center,
                                                  double step);
/// Grid version: perturbed solves are tightened to 1e-13 and warm-started from `sol`.
SensitivityMatrix finite_difference_sensitivities(const GridCase& grid, const PowerFlowSolution& sol,
                                                  const StochasticParameterSet& params, const MetricSpec& spec,
                                                  double step);

struct HybridOptions {
    /// Relative adjoint/probe disagreement above which a row is re-estimated statistically.
    double threshold = 0.02;
    /// Probe half-width per parameter in units of its stdev.
    double probe_sigmas = 1.96;
    /// Probe half-width for parameters with zero stdev.
    double min_probe_step = 1e-4;
    /// Parameters probed (largest stdev first) when d is large.
    std::size_t max_probe = 8;
    std::size_t sobol_n_base = 512;
    std::uint64_t seed = 20240601;
};

/// Adjoint rows by default; rows the probe marks as nonlinear are replaced by Sobol-sample
/// regression slopes and tagged SobolRescaled. Shape always equals `adjoint`'s.
SensitivityMatrix hybrid_sensitivities(const MetricModel& model, SensitivityMatrix adjoint,
                                       const StochasticParameterSet& params, const HybridOptions& opts);
SensitivityMatrix hybrid_sensitivities(const GridCase& grid, const PowerFlowSolution& sol,
                                       const StochasticParameterSet& params, const MetricSpec& spec,
                                       const HybridOptions& opts = {});
SensitivityMatrix hybrid_sensitivities(const NetworkModel& net, const PowerFlowSolution& sol,
                                       const StochasticParameterSet& params, const MetricSpec& spec,
                                       const PowerFlowOptions& pf, const HybridOptions& opts);

}  // namespace rmss
