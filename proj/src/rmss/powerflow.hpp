#pragma once

#include <Eigen/SparseCore>
#include <complex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rmss/grid.hpp"

namespace rmss {

using Complex = std::complex<double>;

struct AdmittanceMatrix {
    Eigen::SparseMatrix<Complex> y;  // bus order of GridCase::buses
    std::vector<std::string> warnings;

    bool is_symmetric(double tol = 0.0) const;
};

/// Standard pi-model stamping with off-nominal tap and phase shift on the from side,
/// plus bus shunts. Warns (does not throw) for buses with no incident admittance.
AdmittanceMatrix build_admittance(const GridCase& grid);

/// Per-bus complex power injection (generation minus demand), pu.
struct Injections {
    std::vector<double> p;
    std::vector<double> q;
};

struct PowerFlowOptions {
    double tolerance = 1e-8;
    int max_iter = 50;
    /// Without an initial guess: setpoint magnitudes with DC power-flow angles (true) or the
    /// case-file voltages (false).
    bool flat_start = true;
};

struct PowerFlowSolution {
    std::vector<int> bus_ids;
    std::vector<Complex> v;
    /// Injections at the solution; slack P/Q and PV Q are the computed values.
    Injections injections;
    int iterations = 0;
    double max_mismatch = 0.0;
    bool converged = false;
    std::vector<double> mismatch_history;
};

/// Prepared network: admittance matrix, bus indexing and boundary conditions. Immutable
/// once built, shared read-only by concurrent solves.
class NetworkModel {
  public:
    explicit NetworkModel(const GridCase& grid);

    std::size_t bus_count() const { return kinds_.size(); }
    std::size_t index_of(int bus_id) const;
    int bus_id(std::size_t index) const { return ids_[index]; }
    const std::vector<int>& bus_ids() const { return ids_; }
    BusKind kind(std::size_t index) const { return kinds_[index]; }
    double v_setpoint(std::size_t index) const { return vset_[index]; }
    double angle_setpoint(std::size_t index) const { return aset_[index]; }
    /// Voltage stored in the case file, used as the non-flat starting point.
    Complex case_voltage(std::size_t index) const { return case_v_[index]; }
    const AdmittanceMatrix& admittance() const { return ybus_; }
    const Injections& nominal_injections() const { return nominal_; }
    std::size_t slack_index() const { return slack_; }

    /// Newton unknowns: (e, f) for every non-slack bus, then Q for every PV bus.
    std::size_t state_size() const { return 2 * nonslack_.size() + pv_.size(); }
    /// Column of e_k in the Newton system, or -1 for the slack bus.
    long e_column(std::size_t bus_index) const { return col_[bus_index]; }
    /// Row/column of the PV voltage equation and Q unknown, or -1 for non-PV buses.
    long pv_column(std::size_t bus_index) const { return pvcol_[bus_index]; }
    const std::vector<std::size_t>& nonslack() const { return nonslack_; }
    const std::vector<std::size_t>& pv_buses() const { return pv_; }

  private:
    AdmittanceMatrix ybus_;
    std::vector<int> ids_;
    std::vector<BusKind> kinds_;
    std::vector<double> vset_;
    std::vector<double> aset_;
    std::vector<Complex> case_v_;
    Injections nominal_;
    std::size_t slack_ = 0;
    std::vector<std::size_t> nonslack_;
    std::vector<std::size_t> pv_;
    std::vector<long> col_;
    std::vector<long> pvcol_;
};

/// Largest |power mismatch| over non-slack buses (P), PQ buses (Q) and PV voltage error.
double power_mismatch(const NetworkModel& net, std::span<const Complex> v, const Injections& inj);

/// Newton Jacobian of the current-injection residual at the given state. The reactive
/// unknown of each PV bus is read from `inj.q`.
Eigen::SparseMatrix<double> newton_jacobian(const NetworkModel& net, std::span<const Complex> v,
                                            const Injections& inj);

/// Rectangular current-injection Newton. Returns converged=false with the best iterate and
/// the mismatch history when tolerance is not reached; throws JacobianSingular.
PowerFlowSolution solve_power_flow(const NetworkModel& net, const Injections& inj, const PowerFlowOptions& opts,
                                   std::span<const Complex> initial = {});

PowerFlowSolution solve_power_flow(const GridCase& grid, const PowerFlowOptions& opts = {});

/// Throws NonConvergence with the mismatch history when `sol` did not converge.
void require_converged(const PowerFlowSolution& sol);

enum class MetricKind { BusVoltageMagnitude };

struct MetricEntry {
    MetricKind kind = MetricKind::BusVoltageMagnitude;
    int bus = 0;

    bool operator==(const MetricEntry&) const = default;
};

struct MetricSpec {
    std::vector<MetricEntry> entries;

    std::size_t size() const { return entries.size(); }
    static MetricSpec voltages(std::span<const int> buses);
};

/// "vm:<bus>"
std::string metric_label(const MetricEntry& m);

/// Voltage-magnitude metrics at every PQ bus with a nonzero injection.
MetricSpec nonzero_injection_pq_metrics(const GridCase& grid);

std::vector<double> evaluate_metrics(const PowerFlowSolution& sol, const MetricSpec& spec);

}  // namespace rmss
