#include "rmss/worstcase.hpp"

#include <chrono>
#include <cmath>

#include "rmss/errors.hpp"
#include "rmss/stats.hpp"

namespace rmss {

const char* to_string(Bound b) { return b == Bound::Upper ? "UB" : "LB"; }

const char* to_string(SigmaCSpec::Mode m) {
    switch (m) {
        case SigmaCSpec::Mode::Absolute: return "absolute";
        case SigmaCSpec::Mode::Fraction: return "fraction";
        case SigmaCSpec::Mode::Linearized: return "linearized";
    }
    return "?";
}

double worst_case_metric(double c_nom, double sigma_c, double rho, Bound direction) {
    if (!(sigma_c >= 0.0)) throw InvalidArgument("sigma_c must be >= 0");
    if (!(rho > 0.0 && rho < 1.0)) throw InvalidArgument("InvalidProbability: rho must lie in (0, 1)");
    const double spread = normal_quantile(rho) * sigma_c;
    return direction == Bound::Upper ? c_nom + spread : c_nom - spread;
}

Eigen::VectorXd worst_case_parameters(const StochasticParameterSet& params, const Eigen::VectorXd& lambda,
                                      double c_wc, double c_nom) {
    if (lambda.size() != static_cast<Eigen::Index>(params.size()) || params.covariance.rows() != lambda.size())
        throw DimensionMismatch("sensitivity row length != parameter count");
    const Eigen::VectorXd sigma_lambda = params.covariance * lambda;
    const double spread = lambda.dot(sigma_lambda);
    if (!(spread >= kDegenerateTolerance))
        throw DegenerateDirection("lambda' Sigma lambda = " + std::to_string(spread) +
                                  " below tolerance; metric insensitive to the varying parameters");
    return params.means() + ((c_wc - c_nom) / spread) * sigma_lambda;
}

double mahalanobis_distance(const StochasticParameterSet& params, const Eigen::VectorXd& x) {
    const Eigen::VectorXd dev = x - params.means();
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(params.covariance);
    return dev.dot(cod.solve(dev));
}

std::optional<int> worst_violator(const std::map<int, BusTally>& tallies) {
    std::optional<int> best;
    int best_count = 0;
    for (const auto& [bus, t] : tallies) {  // ascending bus id: strict > keeps the lowest on ties
        if (t.total() > best_count) {
            best_count = t.total();
            best = bus;
        }
    }
    return best;
}

ViolationReport count_violations(std::span<const WorstCaseResult> bounds, const GridCase& grid) {
    ViolationReport rep;
    for (const auto& r : bounds) {
        const Bus& bus = grid.bus(r.bus);
        if (!bus.v_max || !bus.v_min) throw MissingLimits(r.bus);
        if (r.c_wc_ub > *bus.v_max) {
            ++rep.ub_total;
            ++rep.per_bus[r.bus].ub;
            rep.records.push_back({r.bus, Bound::Upper, r.c_wc_ub - *bus.v_max});
        }
        if (r.c_wc_lb < *bus.v_min) {
            ++rep.lb_total;
            ++rep.per_bus[r.bus].lb;
            rep.records.push_back({r.bus, Bound::Lower, *bus.v_min - r.c_wc_lb});
        }
    }
    rep.worst_violator = worst_violator(rep.per_bus);
    return rep;
}

SweepGrid SweepGrid::logarithmic(double lo, double hi, std::size_t count) {
    if (!(lo > 0.0) || !(hi >= lo) || count == 0 || (count == 1 && hi != lo) || (count > 1 && hi == lo))
        throw InvalidArgument("log sweep needs 0 < lo < hi and count >= 2");
    SweepGrid g;
    for (std::size_t k = 0; k < count; ++k) {
        const double t = count == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(count - 1);
        g.values.push_back(k + 1 == count ? hi : lo * std::pow(hi / lo, t));
    }
    g.validate();
    return g;
}

SweepGrid SweepGrid::linear(double lo, double hi, std::size_t count) {
    if (!(lo > 0.0) || !(hi >= lo) || count == 0 || (count == 1 && hi != lo) || (count > 1 && hi == lo))
        throw InvalidArgument("linear sweep needs 0 < lo < hi and count >= 2");
    SweepGrid g;
    for (std::size_t k = 0; k < count; ++k) {
        const double t = count == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(count - 1);
        g.values.push_back(k + 1 == count ? hi : lo + (hi - lo) * t);
    }
    g.validate();
    return g;
}

void SweepGrid::validate() const {
    if (values.empty()) throw InvalidArgument("empty sigma_c sweep");
    for (std::size_t k = 0; k < values.size(); ++k) {
        if (!(values[k] > 0.0)) throw InvalidArgument("sigma_c sweep values must be > 0");
        if (k > 0 && !(values[k] > values[k - 1])) throw InvalidArgument("sigma_c sweep must be strictly increasing");
    }
}

SigmaCSpec SigmaCSpec::sweep(const SweepGrid& grid, Mode mode) {
    grid.validate();
    return {mode, grid.values};
}

SigmaCSpec SigmaCSpec::default_sweep() { return sweep(SweepGrid::logarithmic(0.001, 0.05, 20)); }

RmssReport run_rmss(const GridCase& grid, const StochasticParameterSet& params, const MetricSpec& spec,
                    const RmssOptions& opts) {
    const auto start = std::chrono::steady_clock::now();

    if (opts.sigma_c.values.empty()) throw InvalidArgument("no sigma_c value given");
    if (opts.sigma_c.values.size() > 1) SweepGrid{opts.sigma_c.values}.validate();
    for (double s : opts.sigma_c.values)
        if (!(s >= 0.0)) throw InvalidArgument("sigma_c must be >= 0");
    const double z = normal_quantile(opts.rho);
    params.validate();

    const GridCase limited = opts.limit_band ? with_band_limits(grid, *opts.limit_band) : grid;
    NetworkModel net(limited);

    RmssReport rep;
    rep.case_name = grid.name;
    rep.rho = opts.rho;
    rep.sigma_c_mode = opts.sigma_c.mode;
    rep.params = params;
    rep.spec = spec;

    const PowerFlowSolution sol = solve_power_flow(net, net.nominal_injections(), opts.pf);
    require_converged(sol);
    rep.nominal_iterations = sol.iterations;
    rep.c_nom = evaluate_metrics(sol, spec);
    rep.sensitivity = hybrid_sensitivities(net, sol, params, spec, opts.pf, opts.hybrid);
    for (std::size_t i = 0; i < spec.size(); ++i)
        if (rep.sensitivity.nonlinear[i])
            rep.log.push_back(metric_label(spec.entries[i]) + ": highly nonlinear (disagreement " +
                              std::to_string(rep.sensitivity.disagreement[i]) + "), re-estimated from Sobol sample");

    for (const auto& m : spec.entries) {
        const Bus& b = limited.bus(m.bus);
        if (b.v_max && b.v_min) rep.limits[m.bus] = {*b.v_min, *b.v_max};
    }

    std::optional<GridMetricModel> resim;
    if (opts.analysis_phase) resim.emplace(net, rep.params, rep.spec, opts.pf, sol.v);

    const Eigen::VectorXd ci_half = z * params.stdevs();
    const Eigen::VectorXd eta = params.means();
    auto within_ci = [&](const Eigen::VectorXd& e) {
        return ((e - eta).cwiseAbs().array() <= ci_half.array() * (1.0 + 1e-9) + 1e-15).all();
    };

    std::vector<bool> degenerate_logged(spec.size(), false);
    for (double s : opts.sigma_c.values) {
        SweepPoint point;
        point.sigma_c = s;
        for (std::size_t i = 0; i < spec.size(); ++i) {
            const Eigen::VectorXd lambda = rep.sensitivity.values.row(static_cast<Eigen::Index>(i)).transpose();
            WorstCaseResult r;
            r.bus = spec.entries[i].bus;
            r.c_nom = rep.c_nom[i];
            switch (opts.sigma_c.mode) {
                case SigmaCSpec::Mode::Absolute: r.sigma_c = s; break;
                case SigmaCSpec::Mode::Fraction: r.sigma_c = s * r.c_nom; break;
                case SigmaCSpec::Mode::Linearized:
                    r.sigma_c = s * std::sqrt(std::max(0.0, lambda.dot(params.covariance * lambda)));
                    break;
            }
            r.c_wc_ub = worst_case_metric(r.c_nom, r.sigma_c, opts.rho, Bound::Upper);
            r.c_wc_lb = worst_case_metric(r.c_nom, r.sigma_c, opts.rho, Bound::Lower);
            try {
                r.e_wc_ub = worst_case_parameters(params, lambda, r.c_wc_ub, r.c_nom);
                r.e_wc_lb = worst_case_parameters(params, lambda, r.c_wc_lb, r.c_nom);
                r.ub_within_ci = within_ci(*r.e_wc_ub);
                r.lb_within_ci = within_ci(*r.e_wc_lb);
            } catch (const DegenerateDirection& e) {
                r.degenerate = true;
                r.e_wc_ub.reset();
                r.e_wc_lb.reset();
                if (!degenerate_logged[i]) {
                    rep.log.push_back(metric_label(spec.entries[i]) + ": " + e.what());
                    degenerate_logged[i] = true;
                }
            }
            if (resim && r.e_wc_ub) {
                try {
                    r.simulated_ub = resim->evaluate(*r.e_wc_ub)[static_cast<Eigen::Index>(i)];
                    r.simulated_lb = resim->evaluate(*r.e_wc_lb)[static_cast<Eigen::Index>(i)];
                } catch (const NonConvergence&) {
                    rep.log.push_back(metric_label(spec.entries[i]) +
                                      ": analysis-phase solve diverged at sigma_c=" + std::to_string(s));
                }
            }
            point.results.push_back(std::move(r));
        }
        point.violations = count_violations(point.results, limited);
        point.violations.sigma_c = s;
        for (const auto& [bus, t] : point.violations.per_bus) {
            rep.sweep_tallies[bus].ub += t.ub;
            rep.sweep_tallies[bus].lb += t.lb;
        }
        rep.sweep.push_back(std::move(point));
    }
    rep.worst_violator = worst_violator(rep.sweep_tallies);
    rep.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rep;
}

}  // namespace rmss
