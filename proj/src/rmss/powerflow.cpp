#include "rmss/powerflow.hpp"

#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "rmss/errors.hpp"

namespace rmss {

bool AdmittanceMatrix::is_symmetric(double tol) const {
    Eigen::SparseMatrix<Complex> diff = y - Eigen::SparseMatrix<Complex>(y.transpose());
    for (int k = 0; k < diff.outerSize(); ++k)
        for (Eigen::SparseMatrix<Complex>::InnerIterator it(diff, k); it; ++it)
            if (std::abs(it.value()) > tol) return false;
    return true;
}

AdmittanceMatrix build_admittance(const GridCase& grid) {
    const auto n = static_cast<Eigen::Index>(grid.buses.size());
    std::unordered_map<int, Eigen::Index> idx;
    for (Eigen::Index i = 0; i < n; ++i) idx[grid.buses[i].id] = i;

    std::vector<Eigen::Triplet<Complex>> trip;
    trip.reserve(4 * grid.branches.size() + grid.buses.size());
    std::vector<bool> touched(grid.buses.size(), false);

    for (const auto& br : grid.branches) {
        auto f_it = idx.find(br.from_bus);
        auto t_it = idx.find(br.to_bus);
        if (f_it == idx.end()) throw UnknownBus(br.from_bus);
        if (t_it == idx.end()) throw UnknownBus(br.to_bus);
        const Eigen::Index f = f_it->second;
        const Eigen::Index t = t_it->second;

        const Complex ys = 1.0 / Complex(br.r, br.x);
        const Complex ych(0.0, br.b_shunt / 2.0);
        const Complex a = std::polar(br.tap, br.phase_shift);

        trip.emplace_back(f, f, (ys + ych) / (br.tap * br.tap));
        trip.emplace_back(t, t, ys + ych);
        trip.emplace_back(f, t, -ys / std::conj(a));
        trip.emplace_back(t, f, -ys / a);
        touched[f] = touched[t] = true;
    }

    AdmittanceMatrix out;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Bus& b = grid.buses[i];
        if (b.gs != 0.0 || b.bs != 0.0) {
            trip.emplace_back(i, i, Complex(b.gs, b.bs));
            touched[i] = true;
        }
        if (!touched[i]) out.warnings.push_back("bus " + std::to_string(b.id) + " has no incident admittance");
    }
    out.y.resize(n, n);
    out.y.setFromTriplets(trip.begin(), trip.end());
    out.y.makeCompressed();
    return out;
}

NetworkModel::NetworkModel(const GridCase& grid) : ybus_(build_admittance(grid)) {
    const std::size_t n = grid.buses.size();
    ids_.resize(n);
    kinds_.resize(n);
    vset_.resize(n);
    aset_.resize(n);
    case_v_.resize(n);
    col_.assign(n, -1);
    pvcol_.assign(n, -1);
    nominal_.p.assign(n, 0.0);
    nominal_.q.assign(n, 0.0);

    bool have_slack = false;
    for (std::size_t i = 0; i < n; ++i) {
        const Bus& b = grid.buses[i];
        ids_[i] = b.id;
        kinds_[i] = b.kind;
        vset_[i] = b.vm;
        aset_[i] = b.kind == BusKind::Slack ? b.va : 0.0;
        case_v_[i] = std::polar(b.vm, b.va);
        if (b.kind == BusKind::Slack) {
            if (have_slack) throw TopologyError("more than one slack bus");
            slack_ = i;
            have_slack = true;
        } else {
            nonslack_.push_back(i);
        }
        if (b.kind == BusKind::PV) pv_.push_back(i);
    }
    if (!have_slack) throw TopologyError("case has no slack bus");

    for (std::size_t k = 0; k < nonslack_.size(); ++k) col_[nonslack_[k]] = static_cast<long>(2 * k);
    for (std::size_t k = 0; k < pv_.size(); ++k) pvcol_[pv_[k]] = static_cast<long>(2 * nonslack_.size() + k);

    for (const auto& g : grid.generators) {
        std::size_t i = index_of(g.bus);
        nominal_.p[i] += g.p;
        nominal_.q[i] += g.q;
    }
    for (const auto& l : grid.loads) {
        std::size_t i = index_of(l.bus);
        nominal_.p[i] += l.p;
        nominal_.q[i] += l.q;
    }
}

std::size_t NetworkModel::index_of(int bus_id) const {
    auto it = std::ranges::find(ids_, bus_id);
    if (it == ids_.end()) throw UnknownBus(bus_id);
    return static_cast<std::size_t>(it - ids_.begin());
}

namespace {

Eigen::VectorXcd to_vector(std::span<const Complex> v) {
    return Eigen::Map<const Eigen::VectorXcd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::VectorXcd bus_currents(const NetworkModel& net, std::span<const Complex> v) {
    return net.admittance().y * to_vector(v);
}

/// Current-injection residual plus PV voltage equations.
Eigen::VectorXd residual(const NetworkModel& net, std::span<const Complex> v, const Injections& inj) {
    Eigen::VectorXd f(static_cast<Eigen::Index>(net.state_size()));
    const Eigen::VectorXcd cur = bus_currents(net, v);
    for (std::size_t i : net.nonslack()) {
        const long c = net.e_column(i);
        const Complex h = Complex(inj.p[i], -inj.q[i]) * v[i] / std::norm(v[i]);
        const Complex g = cur[static_cast<Eigen::Index>(i)] - h;
        f[c] = g.real();
        f[c + 1] = g.imag();
    }
    for (std::size_t i : net.pv_buses()) f[net.pv_column(i)] = std::norm(v[i]) - net.v_setpoint(i) * net.v_setpoint(i);
    return f;
}

int zero_row_bus(const NetworkModel& net, const Eigen::SparseMatrix<double>& jac) {
    Eigen::VectorXd row_norm = Eigen::VectorXd::Zero(jac.rows());
    for (int k = 0; k < jac.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(jac, k); it; ++it)
            row_norm[it.row()] = std::max(row_norm[it.row()], std::abs(it.value()));
    for (Eigen::Index r = 0; r < row_norm.size(); ++r) {
        if (row_norm[r] != 0.0) continue;
        for (std::size_t i = 0; i < net.bus_count(); ++i) {
            long c = net.e_column(i);
            if ((c >= 0 && (r == c || r == c + 1)) || r == net.pv_column(i)) return net.bus_id(i);
        }
    }
    return -1;
}

}  // namespace

namespace {

constexpr int kMaxBacktrack = 6;

/// Angles from B theta = P over the non-slack buses, with B built from the susceptances of Y.
std::vector<double> dc_angles(const NetworkModel& net, const Injections& inj) {
    const std::size_t n = net.bus_count();
    const std::size_t s = net.slack_index();
    std::vector<double> theta(n, net.angle_setpoint(s));
    const auto& nonslack = net.nonslack();
    if (nonslack.empty()) return theta;
    std::vector<long> row(n, -1);
    for (std::size_t k = 0; k < nonslack.size(); ++k) row[nonslack[k]] = static_cast<long>(k);

    const auto& y = net.admittance().y;
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(nonslack.size()));
    for (std::size_t k = 0; k < nonslack.size(); ++k) rhs[static_cast<Eigen::Index>(k)] = inj.p[nonslack[k]];
    for (int c = 0; c < y.outerSize(); ++c) {
        for (Eigen::SparseMatrix<Complex>::InnerIterator it(y, c); it; ++it) {
            const auto r = static_cast<std::size_t>(it.row());
            if (r == static_cast<std::size_t>(c)) continue;
            const double b = -it.value().imag();
            if (row[r] < 0) continue;
            trip.emplace_back(row[r], row[r], b);
            if (row[static_cast<std::size_t>(c)] >= 0)
                trip.emplace_back(row[r], row[static_cast<std::size_t>(c)], -b);
            else
                rhs[row[r]] += b * theta[s];
        }
    }
    Eigen::SparseMatrix<double> bmat(rhs.size(), rhs.size());
    bmat.setFromTriplets(trip.begin(), trip.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(bmat);
    if (lu.info() != Eigen::Success) return std::vector<double>(n, theta[s]);
    const Eigen::VectorXd x = lu.solve(rhs);
    if (!x.allFinite()) return std::vector<double>(n, theta[s]);
    for (std::size_t k = 0; k < nonslack.size(); ++k) theta[nonslack[k]] = x[static_cast<Eigen::Index>(k)];
    return theta;
}

}  // namespace

double power_mismatch(const NetworkModel& net, std::span<const Complex> v, const Injections& inj) {
    const Eigen::VectorXcd cur = bus_currents(net, v);
    double worst = 0.0;
    for (std::size_t i : net.nonslack()) {
        const Complex s = v[i] * std::conj(cur[static_cast<Eigen::Index>(i)]);
        worst = std::max(worst, std::abs(inj.p[i] - s.real()));
        if (net.kind(i) == BusKind::PQ)
            worst = std::max(worst, std::abs(inj.q[i] - s.imag()));
        else
            worst = std::max(worst, std::abs(std::abs(v[i]) - net.v_setpoint(i)));
        if (!std::isfinite(s.real()) || !std::isfinite(s.imag())) return HUGE_VAL;
    }
    return worst;
}

Eigen::SparseMatrix<double> newton_jacobian(const NetworkModel& net, std::span<const Complex> v,
                                            const Injections& inj) {
    const auto n = static_cast<Eigen::Index>(net.state_size());
    const auto& y = net.admittance().y;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(4 * y.nonZeros() + 8 * net.pv_buses().size()));

    for (int k = 0; k < y.outerSize(); ++k) {
        const long ck = net.e_column(static_cast<std::size_t>(k));
        if (ck < 0) continue;
        for (Eigen::SparseMatrix<Complex>::InnerIterator it(y, k); it; ++it) {
            const long ci = net.e_column(static_cast<std::size_t>(it.row()));
            if (ci < 0) continue;
            const double g = it.value().real();
            const double b = it.value().imag();
            trip.emplace_back(ci, ck, g);
            trip.emplace_back(ci, ck + 1, -b);
            trip.emplace_back(ci + 1, ck, b);
            trip.emplace_back(ci + 1, ck + 1, g);
        }
    }

    for (std::size_t i : net.nonslack()) {
        const long c = net.e_column(i);
        const double e = v[i].real();
        const double f = v[i].imag();
        const double p = inj.p[i];
        const double q = inj.q[i];
        const double r2 = e * e + f * f;
        const double r4 = r2 * r2;
        const double a = p * e + q * f;
        const double bb = p * f - q * e;
        // h = (P - jQ) V / |V|^2, residual g = Y V - h
        trip.emplace_back(c, c, -(p / r2 - 2.0 * e * a / r4));
        trip.emplace_back(c, c + 1, -(q / r2 - 2.0 * f * a / r4));
        trip.emplace_back(c + 1, c, -(-q / r2 - 2.0 * e * bb / r4));
        trip.emplace_back(c + 1, c + 1, -(p / r2 - 2.0 * f * bb / r4));

        const long pc = net.pv_column(i);
        if (pc >= 0) {
            trip.emplace_back(c, pc, -f / r2);
            trip.emplace_back(c + 1, pc, e / r2);
            trip.emplace_back(pc, c, 2.0 * e);
            trip.emplace_back(pc, c + 1, 2.0 * f);
        }
    }

    Eigen::SparseMatrix<double> jac(n, n);
    jac.setFromTriplets(trip.begin(), trip.end());
    jac.makeCompressed();
    return jac;
}

PowerFlowSolution solve_power_flow(const NetworkModel& net, const Injections& inj, const PowerFlowOptions& opts,
                                   std::span<const Complex> initial) {
    const std::size_t n = net.bus_count();
    if (inj.p.size() != n || inj.q.size() != n) throw DimensionMismatch("injection vector length != bus count");
    if (!initial.empty() && initial.size() != n) throw DimensionMismatch("initial voltage length != bus count");

    std::vector<Complex> v(n);
    std::vector<double> theta;
    if (initial.empty() && opts.flat_start) theta = dc_angles(net, inj);
    for (std::size_t i = 0; i < n; ++i) {
        if (!initial.empty())
            v[i] = initial[i];
        else if (opts.flat_start)
            v[i] = std::polar(net.kind(i) == BusKind::PQ ? 1.0 : net.v_setpoint(i), theta[i]);
        else
            v[i] = net.case_voltage(i);
    }
    const std::size_t s = net.slack_index();
    v[s] = std::polar(net.v_setpoint(s), net.angle_setpoint(s));

    Injections work = inj;
    {
        const Eigen::VectorXcd cur = bus_currents(net, v);
        for (std::size_t i : net.pv_buses())
            work.q[i] = (v[i] * std::conj(cur[static_cast<Eigen::Index>(i)])).imag();
    }

    PowerFlowSolution sol;
    sol.bus_ids = net.bus_ids();

    std::vector<Complex> best_v = v;
    double best = HUGE_VAL;
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    bool analyzed = false;

    for (int iter = 0;; ++iter) {
        const double mis = power_mismatch(net, v, work);
        sol.mismatch_history.push_back(mis);
        if (mis < best) {
            best = mis;
            best_v = v;
        }
        if (mis <= opts.tolerance) {
            sol.converged = true;
            sol.iterations = iter;
            break;
        }
        if (iter >= opts.max_iter || !std::isfinite(mis) || mis > 1e12) {
            sol.iterations = iter;
            break;
        }

        Eigen::SparseMatrix<double> jac = newton_jacobian(net, v, work);
        if (!analyzed) {
            lu.analyzePattern(jac);
            analyzed = true;
        }
        lu.factorize(jac);
        if (lu.info() != Eigen::Success) {
            int bus = zero_row_bus(net, jac);
            throw JacobianSingular("Newton Jacobian is singular" +
                                       (bus >= 0 ? " at bus " + std::to_string(bus) : std::string()) + ": " +
                                       lu.lastErrorMessage(),
                                   bus);
        }
        const Eigen::VectorXd r0 = residual(net, v, work);
        const Eigen::VectorXd dx = lu.solve(-r0);
        const double merit = r0.squaredNorm();

        // Backtrack on ||residual||^2, for which the Newton step is a descent direction; keep the
        // last trial regardless.
        const std::vector<Complex> v0 = v;
        const std::vector<double> q0 = work.q;
        double alpha = 1.0;
        for (int trial = 0;; ++trial) {
            for (std::size_t i : net.nonslack()) {
                const long c = net.e_column(i);
                v[i] = v0[i] + alpha * Complex(dx[c], dx[c + 1]);
            }
            for (std::size_t i : net.pv_buses()) work.q[i] = q0[i] + alpha * dx[net.pv_column(i)];
            if (trial == kMaxBacktrack || residual(net, v, work).squaredNorm() < (1.0 - 1e-4 * alpha) * merit) break;
            alpha *= 0.5;
        }
    }

    sol.v = sol.converged ? v : best_v;
    sol.max_mismatch = sol.converged ? sol.mismatch_history.back() : best;

    const Eigen::VectorXcd cur = bus_currents(net, sol.v);
    sol.injections = inj;
    for (std::size_t i = 0; i < n; ++i) {
        if (net.kind(i) == BusKind::PQ) continue;
        const Complex si = sol.v[i] * std::conj(cur[static_cast<Eigen::Index>(i)]);
        if (net.kind(i) == BusKind::Slack) sol.injections.p[i] = si.real();
        sol.injections.q[i] = si.imag();
    }
    return sol;
}

PowerFlowSolution solve_power_flow(const GridCase& grid, const PowerFlowOptions& opts) {
    NetworkModel net(grid);
    return solve_power_flow(net, net.nominal_injections(), opts);
}

void require_converged(const PowerFlowSolution& sol) {
    if (sol.converged) return;
    std::ostringstream os;
    os << "power flow did not converge after " << sol.iterations << " iterations; mismatch history:";
    os.precision(3);
    for (double m : sol.mismatch_history) os << ' ' << std::scientific << m;
    throw NonConvergence(os.str(), sol.mismatch_history);
}

MetricSpec MetricSpec::voltages(std::span<const int> buses) {
    MetricSpec spec;
    for (int b : buses) spec.entries.push_back({MetricKind::BusVoltageMagnitude, b});
    return spec;
}

std::string metric_label(const MetricEntry& m) { return "vm:" + std::to_string(m.bus); }

MetricSpec nonzero_injection_pq_metrics(const GridCase& grid) {
    MetricSpec spec;
    for (const auto& b : grid.buses) {
        if (b.kind != BusKind::PQ) continue;
        bool injects = std::ranges::any_of(grid.loads, [&](const Load& l) {
            return l.bus == b.id && (l.p != 0.0 || l.q != 0.0);
        }) || std::ranges::any_of(grid.generators, [&](const Generator& g) {
            return g.bus == b.id && (g.p != 0.0 || g.q != 0.0);
        });
        if (injects) spec.entries.push_back({MetricKind::BusVoltageMagnitude, b.id});
    }
    return spec;
}

std::vector<double> evaluate_metrics(const PowerFlowSolution& sol, const MetricSpec& spec) {
    if (!sol.converged) throw PreconditionError("metrics requested on a non-converged power flow solution");
    std::vector<double> out;
    out.reserve(spec.size());
    for (const auto& m : spec.entries) {
        auto it = std::ranges::find(sol.bus_ids, m.bus);
        if (it == sol.bus_ids.end()) throw UnknownBus(m.bus);
        out.push_back(std::abs(sol.v[static_cast<std::size_t>(it - sol.bus_ids.begin())]));
    }
    return out;
}

}  // namespace rmss
