#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rmss/grid.hpp"
#include "rmss/parameters.hpp"
#include "rmss/powerflow.hpp"
#include "rmss/sensitivity.hpp"

namespace rmss {

enum class Bound { Upper, Lower };

const char* to_string(Bound b);

/// c_nom +/- Phi^-1(rho) * sigma_c (+ for Upper).
double worst_case_metric(double c_nom, double sigma_c, double rho, Bound direction);

/// Below this lambda' Sigma lambda the metric is treated as insensitive to every parameter.
inline constexpr double kDegenerateTolerance = 1e-14;

/// Most probable parameter vector on the hyperplane lambda (E - E_nom) = c_wc - c_nom:
/// E_nom + (c_wc - c_nom) / (lambda' Sigma lambda) * Sigma lambda.
Eigen::VectorXd worst_case_parameters(const StochasticParameterSet& params, const Eigen::VectorXd& lambda,
                                      double c_wc, double c_nom);

/// (x - mean)' Sigma^+ (x - mean), with Sigma^+ the pseudo-inverse.
double mahalanobis_distance(const StochasticParameterSet& params, const Eigen::VectorXd& x);

struct WorstCaseResult {
    int bus = 0;
    double c_nom = 0.0;
    double sigma_c = 0.0;  // absolute pu used for this metric
    double c_wc_ub = 0.0;
    double c_wc_lb = 0.0;
    std::optional<Eigen::VectorXd> e_wc_ub;  // empty when degenerate
    std::optional<Eigen::VectorXd> e_wc_lb;
    bool degenerate = false;
    /// Every component of E_wc lies within eta +/- Phi^-1(rho) sigma.
    bool ub_within_ci = true;
    bool lb_within_ci = true;
    /// Metric re-simulated at E_wc (analysis phase, optional).
    std::optional<double> simulated_ub;
    std::optional<double> simulated_lb;
};

struct ViolationRecord {
    int bus = 0;
    Bound bound = Bound::Upper;
    double margin = 0.0;  // pu beyond the limit, > 0
};

struct BusTally {
    int ub = 0;
    int lb = 0;
    int total() const { return ub + lb; }
};

struct ViolationReport {
    double sigma_c = 0.0;
    int ub_total = 0;
    int lb_total = 0;
    std::map<int, BusTally> per_bus;
    std::vector<ViolationRecord> records;
    std::optional<int> worst_violator;

    int total() const { return ub_total + lb_total; }
};

/// UB violation iff c_wc_ub > v_max, LB iff c_wc_lb < v_min. Worst violator has the largest
/// tally, ties to the lowest bus id.
ViolationReport count_violations(std::span<const WorstCaseResult> bounds, const GridCase& grid);

/// Bus with the largest tally (ties to the lowest id); empty when no bus has violations.
std::optional<int> worst_violator(const std::map<int, BusTally>& tallies);

struct SweepGrid {
    std::vector<double> values;

    static SweepGrid logarithmic(double lo, double hi, std::size_t count);
    static SweepGrid linear(double lo, double hi, std::size_t count);
    /// Strictly increasing, all > 0.
    void validate() const;
};

/// How sigma_c of each metric is obtained.
struct SigmaCSpec {
    enum class Mode {
        Absolute,    // values are pu
        Fraction,    // values are fractions of each metric's nominal value
        Linearized,  // values multiply sqrt(lambda' Sigma lambda)
    };
    Mode mode = Mode::Fraction;
    std::vector<double> values;

    static SigmaCSpec known_absolute(double pu) { return {Mode::Absolute, {pu}}; }
    static SigmaCSpec known_fraction(double f) { return {Mode::Fraction, {f}}; }
    static SigmaCSpec sweep(const SweepGrid& grid, Mode mode = Mode::Fraction);
    static SigmaCSpec linearized() { return {Mode::Linearized, {1.0}}; }
    /// 20 log-spaced fractions over [0.1%, 5%].
    static SigmaCSpec default_sweep();
};

const char* to_string(SigmaCSpec::Mode m);

struct RmssOptions {
    double rho = 0.975;
    SigmaCSpec sigma_c = SigmaCSpec::default_sweep();
    /// When set, limits become vm * (1 -/+ band) instead of the case limits.
    std::optional<double> limit_band;
    HybridOptions hybrid;
    PowerFlowOptions pf;
    /// Re-simulate the grid at every constructed E_wc.
    bool analysis_phase = false;
};

struct SweepPoint {
    double sigma_c = 0.0;
    std::vector<WorstCaseResult> results;
    ViolationReport violations;
};

struct RmssReport {
    std::string case_name;
    double rho = 0.975;
    SigmaCSpec::Mode sigma_c_mode = SigmaCSpec::Mode::Fraction;
    StochasticParameterSet params;
    MetricSpec spec;
    std::vector<double> c_nom;
    std::map<int, std::pair<double, double>> limits;  // bus -> (v_min, v_max)
    SensitivityMatrix sensitivity;
    std::vector<SweepPoint> sweep;
    std::map<int, BusTally> sweep_tallies;
    std::optional<int> worst_violator;
    std::vector<std::string> log;
    int nominal_iterations = 0;
    double runtime_s = 0.0;
};

/// Nominal solve, hybrid sensitivities, per-sigma_c bounds and worst-case parameters, and
/// violation counting against per-bus limits.
RmssReport run_rmss(const GridCase& grid, const StochasticParameterSet& params, const MetricSpec& spec,
                    const RmssOptions& opts = {});

}  // namespace rmss
