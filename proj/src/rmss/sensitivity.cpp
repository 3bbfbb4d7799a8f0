#include "rmss/sensitivity.hpp"

#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "rmss/errors.hpp"
#include "rmss/sobol.hpp"

namespace rmss {

const char* to_string(SensitivityMethod m) {
    switch (m) {
        case SensitivityMethod::Adjoint: return "adjoint";
        case SensitivityMethod::FiniteDifference: return "finite-difference";
        case SensitivityMethod::SobolRescaled: return "sobol-rescaled";
    }
    return "?";
}

namespace {

SensitivityMatrix make_matrix(std::size_t rows, std::size_t cols, SensitivityMethod method) {
    SensitivityMatrix s;
    s.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    s.method.assign(rows, method);
    s.disagreement.assign(rows, std::nan(""));
    s.nonlinear.assign(rows, false);
    s.sobol.assign(rows, std::nullopt);
    return s;
}

constexpr double kMinMagnitude = 1e-9;

}  // namespace

GridMetricModel::GridMetricModel(const NetworkModel& net, const StochasticParameterSet& params,
                                 const MetricSpec& spec, PowerFlowOptions opts, std::vector<Complex> warm_start)
    : net_(&net), params_(&params), spec_(&spec), binding_(net, params), opts_(opts), warm_(std::move(warm_start)) {}

Eigen::VectorXd GridMetricModel::evaluate(const Eigen::VectorXd& params) const {
    PowerFlowSolution sol = solve_power_flow(*net_, binding_.apply(params), opts_, warm_);
    require_converged(sol);
    std::vector<double> m = evaluate_metrics(sol, *spec_);
    return Eigen::Map<Eigen::VectorXd>(m.data(), static_cast<Eigen::Index>(m.size()));
}

SensitivityMatrix adjoint_sensitivities(const NetworkModel& net, const PowerFlowSolution& sol,
                                        const StochasticParameterSet& params, const MetricSpec& spec) {
    if (!sol.converged) throw PreconditionError("adjoint sensitivities need a converged power flow (NotConverged)");

    std::vector<std::size_t> param_bus;
    for (const auto& e : params.entries) {
        std::size_t i = net.index_of(e.bus);
        if (net.kind(i) != BusKind::PQ)
            throw PreconditionError("parameter " + e.id() + " sits on " + to_string(net.kind(i)) + " bus " +
                                    std::to_string(e.bus) + "; sensitivities need PQ buses");
        param_bus.push_back(i);
    }

    SensitivityMatrix out = make_matrix(spec.size(), params.size(), SensitivityMethod::Adjoint);

    const Eigen::SparseMatrix<double> jac = newton_jacobian(net, sol.v, sol.injections);
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(jac);
    if (lu.info() != Eigen::Success)
        throw JacobianSingular("Newton Jacobian at the solution is singular: " + lu.lastErrorMessage(), -1);

    const auto n = static_cast<Eigen::Index>(net.state_size());
    for (std::size_t r = 0; r < spec.size(); ++r) {
        const std::size_t k = net.index_of(spec.entries[r].bus);
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(n);
        const long c = net.e_column(k);
        if (c >= 0) {
            const double mag = std::abs(sol.v[k]);
            if (mag <= kMinMagnitude)
                throw PreconditionError("voltage magnitude gradient undefined at bus " +
                                        std::to_string(spec.entries[r].bus) + " (|V| ~ 0)");
            grad[c] = sol.v[k].real() / mag;
            grad[c + 1] = sol.v[k].imag() / mag;
        }
        const Eigen::VectorXd mu = lu.transpose().solve(grad);
        ++out.linear_solves;

        for (std::size_t j = 0; j < params.size(); ++j) {
            const std::size_t i = param_bus[j];
            const long ci = net.e_column(i);
            const double e = sol.v[i].real();
            const double f = sol.v[i].imag();
            const double r2 = e * e + f * f;
            // d(residual)/d(injection) is nonzero only in the two rows of the injecting bus
            const double value = params.entries[j].axis == Axis::P ? (mu[ci] * e + mu[ci + 1] * f) / r2
                                                                   : (mu[ci] * f - mu[ci + 1] * e) / r2;
            out.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = value;
        }
    }
    return out;
}

SensitivityMatrix adjoint_sensitivities(const GridCase& grid, const PowerFlowSolution& sol,
                                        const StochasticParameterSet& params, const MetricSpec& spec) {
    NetworkModel net(grid);
    return adjoint_sensitivities(net, sol, params, spec);
}

Eigen::MatrixXd central_differences(const MetricModel& model, const Eigen::VectorXd& center,
                                    const Eigen::VectorXd& steps) {
    if (center.size() != static_cast<Eigen::Index>(model.parameter_count()) || steps.size() != center.size())
        throw DimensionMismatch("finite-difference center/steps length != parameter count");
    Eigen::MatrixXd out(static_cast<Eigen::Index>(model.metric_count()), center.size());
    for (Eigen::Index j = 0; j < center.size(); ++j) {
        const double h = steps[j];
        if (!(h > 0.0)) throw ZeroStep();
        Eigen::VectorXd plus = center;
        Eigen::VectorXd minus = center;
        plus[j] += h;
        minus[j] -= h;
        out.col(j) = (model.evaluate(plus) - model.evaluate(minus)) / (2.0 * h);
    }
    return out;
}

SensitivityMatrix finite_difference_sensitivities(const MetricModel& model, const Eigen::VectorXd& center,
                                                  double step) {
    if (!(step > 0.0)) throw ZeroStep();
    SensitivityMatrix out =
        make_matrix(model.metric_count(), model.parameter_count(), SensitivityMethod::FiniteDifference);
    out.values = central_differences(model, center, Eigen::VectorXd::Constant(center.size(), step));
    return out;
}

SensitivityMatrix finite_difference_sensitivities(const GridCase& grid, const PowerFlowSolution& sol,
                                                  const StochasticParameterSet& params, const MetricSpec& spec,
                                                  double step) {
    if (!(step > 0.0)) throw ZeroStep();
    if (!sol.converged) throw PreconditionError("finite differences need a converged base solution");
    NetworkModel net(grid);
    PowerFlowOptions tight;
    tight.tolerance = 1e-13;
    GridMetricModel model(net, params, spec, tight, sol.v);
    return finite_difference_sensitivities(model, params.means(), step);
}

SensitivityMatrix hybrid_sensitivities(const MetricModel& model, SensitivityMatrix adjoint,
                                       const StochasticParameterSet& params, const HybridOptions& opts) {
    const auto d = static_cast<Eigen::Index>(params.size());
    if (adjoint.values.cols() != d || adjoint.values.rows() != static_cast<Eigen::Index>(model.metric_count()))
        throw DimensionMismatch("adjoint matrix shape does not match the model");
    if (!(opts.threshold > 0.0)) throw InvalidArgument("nonlinearity threshold must be positive");

    std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::ranges::stable_sort(order, [&](Eigen::Index a, Eigen::Index b) {
        return params.entries[static_cast<std::size_t>(a)].stdev > params.entries[static_cast<std::size_t>(b)].stdev;
    });
    if (order.size() > opts.max_probe) order.resize(opts.max_probe);

    const Eigen::VectorXd center = params.means();
    Eigen::MatrixXd probe(adjoint.values.rows(), static_cast<Eigen::Index>(order.size()));
    for (std::size_t c = 0; c < order.size(); ++c) {
        const Eigen::Index j = order[c];
        const double sd = params.entries[static_cast<std::size_t>(j)].stdev;
        const double h = sd > 0.0 ? opts.probe_sigmas * sd : opts.min_probe_step;
        Eigen::VectorXd plus = center;
        Eigen::VectorXd minus = center;
        plus[j] += h;
        minus[j] -= h;
        probe.col(static_cast<Eigen::Index>(c)) = (model.evaluate(plus) - model.evaluate(minus)) / (2.0 * h);
    }

    std::vector<std::size_t> flagged;
    for (Eigen::Index r = 0; r < adjoint.values.rows(); ++r) {
        double diff = 0.0;
        double scale = 0.0;
        for (std::size_t c = 0; c < order.size(); ++c) {
            const double fd = probe(r, static_cast<Eigen::Index>(c));
            diff = std::max(diff, std::abs(adjoint.values(r, order[c]) - fd));
            scale = std::max(scale, std::abs(fd));
        }
        const double rel = diff / std::max(scale, kMinMagnitude);
        const auto row = static_cast<std::size_t>(r);
        adjoint.disagreement[row] = rel;
        adjoint.nonlinear[row] = rel > opts.threshold;
        if (adjoint.nonlinear[row]) flagged.push_back(row);
    }

    if (!flagged.empty()) {
        SobolIndices sob = sobol_first_order(model, params, opts.sobol_n_base, opts.seed);
        for (std::size_t row : flagged) {
            const auto r = static_cast<Eigen::Index>(row);
            adjoint.values.row(r) = sob.slope.row(r);
            adjoint.method[row] = SensitivityMethod::SobolRescaled;
            adjoint.sobol[row] = sob.first_order.row(r).transpose();
        }
    }
    return adjoint;
}

SensitivityMatrix hybrid_sensitivities(const NetworkModel& net, const PowerFlowSolution& sol,
                                       const StochasticParameterSet& params, const MetricSpec& spec,
                                       const PowerFlowOptions& pf, const HybridOptions& opts) {
    SensitivityMatrix adj = adjoint_sensitivities(net, sol, params, spec);
    PowerFlowOptions probe_pf = pf;
    probe_pf.tolerance = std::min(pf.tolerance, 1e-10);
    GridMetricModel model(net, params, spec, probe_pf, sol.v);
    return hybrid_sensitivities(model, std::move(adj), params, opts);
}

SensitivityMatrix hybrid_sensitivities(const GridCase& grid, const PowerFlowSolution& sol,
                                       const StochasticParameterSet& params, const MetricSpec& spec,
                                       const HybridOptions& opts) {
    NetworkModel net(grid);
    return hybrid_sensitivities(net, sol, params, spec, PowerFlowOptions{}, opts);
}

}  // namespace rmss
