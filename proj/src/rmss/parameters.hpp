#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rmss/grid.hpp"
#include "rmss/powerflow.hpp"

namespace rmss {

enum class Axis { P, Q };

struct ParameterEntry {
    std::string component;  // generator or load id
    Axis axis = Axis::P;
    int bus = 0;
    double mean = 0.0;   // eta, pu
    double stdev = 0.0;  // sigma, pu

    /// "<component>:P" or "<component>:Q"
    std::string id() const;
};

/// Essential component parameters E_P with their joint normal model.
struct StochasticParameterSet {
    std::vector<ParameterEntry> entries;
    Eigen::MatrixXd covariance;  // d x d, pu^2

    std::size_t size() const { return entries.size(); }
    Eigen::VectorXd means() const;
    Eigen::VectorXd stdevs() const;

    /// Checks symmetry, diag(cov) == stdev^2 and positive semidefiniteness.
    void validate() const;
};

/// A spread given either as a fraction of a reference value ("2%") or in absolute pu.
struct Spread {
    double value = 0.02;
    bool fraction = true;

    /// "2%" -> {0.02, fraction}; "0.01" -> {0.01, absolute}
    static Spread parse(std::string_view text);
    double resolve(double reference) const { return fraction ? value * std::abs(reference) : value; }
};

struct ParameterOptions {
    bool include_p = true;
    bool include_q = false;
    Spread sigma_p;
    Spread sigma_q;
    /// Optional d x d correlation; covariance becomes D R D with D = diag(stdev).
    std::optional<Eigen::MatrixXd> correlation;
};

/// Parameters for every essential generator (file order) then every essential load, P before Q
/// per component. Means are the case dispatch; loads enter as negative injections.
StochasticParameterSet make_parameter_set(const GridCase& grid, const ParameterOptions& opts);

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path);

/// Maps parameter values onto bus injections of a prepared network.
class ParameterBinding {
  public:
    ParameterBinding(const NetworkModel& net, const StochasticParameterSet& params);

    /// Nominal injections shifted by (values - means) at each parameter's bus and axis.
    Injections apply(const Eigen::VectorXd& values) const;
    std::size_t bus_index(std::size_t param) const { return bus_index_[param]; }

  private:
    const NetworkModel* net_;
    Eigen::VectorXd means_;
    std::vector<std::size_t> bus_index_;
    std::vector<Axis> axis_;
};

}  // namespace rmss
