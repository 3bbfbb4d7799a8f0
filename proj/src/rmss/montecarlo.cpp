#include "rmss/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <random>
#include <thread>

#include "rmss/errors.hpp"
#include "rmss/stats.hpp"

namespace rmss {

const char* to_string(CiMode m) { return m == CiMode::Percentile ? "percentile" : "mean"; }

CiMode parse_ci_mode(std::string_view text) {
    if (text == "percentile") return CiMode::Percentile;
    if (text == "mean") return CiMode::MeanCi;
    throw InvalidArgument("unknown CI mode '" + std::string(text) + "' (percentile | mean)");
}

namespace {

Eigen::MatrixXd sampling_factor(const StochasticParameterSet& params) {
    const Eigen::MatrixXd& cov = params.covariance;
    const Eigen::Index d = cov.rows();
    if (d == 0) return Eigen::MatrixXd(0, 0);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
    if (ldlt.info() != Eigen::Success) throw NotPsd("covariance factorization failed");
    const double scale = std::max(cov.diagonal().cwiseAbs().maxCoeff(), 1e-300);
    Eigen::VectorXd diag = ldlt.vectorD();
    for (Eigen::Index i = 0; i < d; ++i) {
        if (diag[i] < -1e-12 * scale) throw NotPsd("covariance has a negative pivot " + std::to_string(diag[i]));
        diag[i] = std::sqrt(std::max(diag[i], 0.0));
    }
    // P A P' = L D L'  =>  A = (P' L sqrt(D)) (P' L sqrt(D))'
    Eigen::MatrixXd l = ldlt.matrixL();
    Eigen::MatrixXd f = ldlt.transpositionsP().transpose() * (l * diag.asDiagonal());
    return f;
}

struct Moments {
    double mean = 0.0;
    double stdev = 0.0;
};

Moments moments(std::span<const double> xs) {
    Moments m;
    if (xs.empty()) return m;
    double sum = 0.0;
    for (double x : xs) sum += x;
    m.mean = sum / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double sq = 0.0;
        for (double x : xs) sq += (x - m.mean) * (x - m.mean);
        m.stdev = std::sqrt(sq / static_cast<double>(xs.size() - 1));
    }
    return m;
}

}  // namespace

SampleBatch sample_parameters(const StochasticParameterSet& params, std::size_t n, std::uint64_t seed) {
    params.validate();
    const Eigen::MatrixXd f = sampling_factor(params);
    const Eigen::VectorXd eta = params.means();
    const auto d = static_cast<Eigen::Index>(params.size());

    SampleBatch batch;
    batch.seed = seed;
    batch.generator = "mt19937_64 per 1024-row chunk, seed_seq{seed, chunk}; normal_distribution; LDLT factor";
    batch.draws.resize(static_cast<Eigen::Index>(n), d);

    Eigen::VectorXd z(d);
    for (std::size_t start = 0; start < n; start += kSampleChunk) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(start / kSampleChunk)};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> normal(0.0, 1.0);
        const std::size_t end = std::min(n, start + kSampleChunk);
        for (std::size_t r = start; r < end; ++r) {
            for (Eigen::Index k = 0; k < d; ++k) z[k] = normal(rng);
            batch.draws.row(static_cast<Eigen::Index>(r)) = (eta + f * z).transpose();
        }
    }
    return batch;
}

McReport run_monte_carlo(const GridCase& grid, const StochasticParameterSet& params, const MetricSpec& spec,
                         const McOptions& opts) {
    const auto wall_start = std::chrono::steady_clock::now();
    if (opts.samples == 0) throw InvalidArgument("Monte Carlo needs at least one sample");
    if (opts.workers == 0) throw InvalidArgument("worker count must be >= 1");

    NetworkModel net(grid);
    const PowerFlowSolution nominal = solve_power_flow(net, net.nominal_injections(), opts.pf);
    require_converged(nominal);

    McReport rep;
    rep.case_name = grid.name;
    rep.seed = opts.seed;
    rep.samples = opts.samples;
    rep.ci = opts.ci;
    rep.params = params;
    rep.spec = spec;
    rep.workers = opts.workers;
    rep.c_nom = evaluate_metrics(nominal, spec);

    const SampleBatch batch = sample_parameters(params, opts.samples, opts.seed);
    const ParameterBinding binding(net, params);
    const auto m = static_cast<Eigen::Index>(spec.size());
    const std::size_t n = opts.samples;

    Eigen::MatrixXd values(static_cast<Eigen::Index>(n), m);
    std::vector<char> ok(n, 0);
    std::vector<double> solve_s(n, 0.0);

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            const auto t0 = std::chrono::steady_clock::now();
            const Injections inj = binding.apply(batch.draws.row(static_cast<Eigen::Index>(i)).transpose());
            try {
                const PowerFlowSolution sol = solve_power_flow(net, inj, opts.pf, nominal.v);
                if (sol.converged) {
                    const std::vector<double> c = evaluate_metrics(sol, spec);
                    for (Eigen::Index k = 0; k < m; ++k) values(static_cast<Eigen::Index>(i), k) = c[k];
                    ok[i] = 1;
                }
            } catch (const JacobianSingular&) {
            }
            solve_s[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
    };
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(opts.workers, n));
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    }

    for (std::size_t i = 0; i < n; ++i) {
        if (ok[i])
            rep.sample_index.push_back(i);
        else
            rep.failed_samples.push_back(i);
    }
    rep.converged = rep.sample_index.size();
    rep.failed = rep.failed_samples.size();
    if (rep.converged == 0) throw AllSamplesFailed("all " + std::to_string(n) + " Monte Carlo solves failed");

    std::vector<double> col(rep.converged);
    for (Eigen::Index k = 0; k < m; ++k) {
        for (std::size_t r = 0; r < rep.converged; ++r)
            col[r] = values(static_cast<Eigen::Index>(rep.sample_index[r]), k);
        MetricStats s;
        const Moments mo = moments(col);
        s.mean = mo.mean;
        s.stdev = mo.stdev;
        if (opts.ci == CiMode::Percentile) {
            std::ranges::sort(col);
            s.ci_lb = sorted_quantile(col, 0.025);
            s.ci_ub = sorted_quantile(col, 0.975);
        } else {
            const double half = normal_quantile(0.975) * s.stdev / std::sqrt(static_cast<double>(rep.converged));
            s.ci_lb = s.mean - half;
            s.ci_ub = s.mean + half;
        }
        rep.metrics.push_back(s);
    }

    const double z = normal_quantile(0.975);
    for (const auto& e : params.entries)
        rep.parameters.push_back({e.mean, e.stdev, e.mean - z * e.stdev, e.mean + z * e.stdev});

    if (opts.keep_samples) {
        rep.sample_metrics.resize(static_cast<Eigen::Index>(rep.converged), m);
        for (std::size_t r = 0; r < rep.converged; ++r)
            rep.sample_metrics.row(static_cast<Eigen::Index>(r)) =
                values.row(static_cast<Eigen::Index>(rep.sample_index[r]));
    }

    double total = 0.0;
    double fastest = solve_s.empty() ? 0.0 : solve_s.front();
    for (double t : solve_s) {
        total += t;
        fastest = std::min(fastest, t);
    }
    rep.total_runtime_s = total;
    rep.mean_solve_s = total / static_cast<double>(n);
    rep.min_solve_s = fastest;
    rep.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    return rep;
}

ComparisonReport mae_compare(const RmssReport& rmss, const McReport& mc) {
    if (rmss.spec.entries != mc.spec.entries)
        throw DimensionMismatch("RMSS and Monte Carlo reports use different metric sets (" +
                                std::to_string(rmss.spec.size()) + " vs " + std::to_string(mc.spec.size()) + ")");
    if (rmss.params.size() != mc.params.size())
        throw DimensionMismatch("RMSS and Monte Carlo reports use different parameter counts (" +
                                std::to_string(rmss.params.size()) + " vs " + std::to_string(mc.params.size()) + ")");
    for (std::size_t j = 0; j < rmss.params.size(); ++j)
        if (rmss.params.entries[j].id() != mc.params.entries[j].id())
            throw DimensionMismatch("parameter " + std::to_string(j) + " differs: " + rmss.params.entries[j].id() +
                                    " vs " + mc.params.entries[j].id());
    if (mc.metrics.size() != mc.spec.size() || mc.parameters.size() != mc.params.size())
        throw DimensionMismatch("Monte Carlo report is internally inconsistent");
    if (rmss.sweep.empty()) throw DimensionMismatch("RMSS report has no sigma_c points");

    ComparisonReport out;
    out.metrics = rmss.spec.size();
    out.parameters = rmss.params.size();
    out.mc_failure_rate = mc.samples ? static_cast<double>(mc.failed) / static_cast<double>(mc.samples) : 1.0;
    if (out.mc_failure_rate > kMaxFailureRate)
        throw PreconditionError("Monte Carlo failure rate " + std::to_string(100.0 * out.mc_failure_rate) +
                                "% exceeds 1%; comparison not representative");

    const Eigen::VectorXd eta = rmss.params.means();
    const double nm = static_cast<double>(out.metrics);
    const double np = static_cast<double>(out.parameters);
    for (const auto& point : rmss.sweep) {
        if (point.results.size() != out.metrics) throw DimensionMismatch("sweep point has the wrong metric count");
        MaeSet s;
        s.sigma_c = point.sigma_c;
        for (std::size_t i = 0; i < out.metrics; ++i) {
            s.c_ub += std::abs(point.results[i].c_wc_ub - mc.metrics[i].ci_ub);
            s.c_lb += std::abs(point.results[i].c_wc_lb - mc.metrics[i].ci_lb);
        }
        if (out.metrics) {
            s.c_ub /= nm;
            s.c_lb /= nm;
        }
        Eigen::VectorXd hi = eta;
        Eigen::VectorXd lo = eta;
        bool any = false;
        for (const auto& r : point.results) {
            if (!r.e_wc_ub || !r.e_wc_lb) continue;
            const Eigen::VectorXd a = r.e_wc_ub->cwiseMax(*r.e_wc_lb);
            const Eigen::VectorXd b = r.e_wc_ub->cwiseMin(*r.e_wc_lb);
            hi = any ? hi.cwiseMax(a) : a;
            lo = any ? lo.cwiseMin(b) : b;
            any = true;
        }
        for (std::size_t j = 0; j < out.parameters; ++j) {
            s.e_ub += std::abs(hi[static_cast<Eigen::Index>(j)] - mc.parameters[j].ci_ub);
            s.e_lb += std::abs(lo[static_cast<Eigen::Index>(j)] - mc.parameters[j].ci_lb);
        }
        if (out.parameters) {
            s.e_ub /= np;
            s.e_lb /= np;
        }
        out.per_sigma.push_back(s);
    }
    for (std::size_t k = 1; k < out.per_sigma.size(); ++k) {
        const auto fit = [&](std::size_t i) { return out.per_sigma[i].c_ub + out.per_sigma[i].c_lb; };
        if (fit(k) < fit(out.best)) out.best = k;
    }
    out.mae = out.per_sigma[out.best];
    out.rmss_runtime_s = rmss.runtime_s;
    out.mc_runtime_s = mc.total_runtime_s;
    out.speedup = rmss.runtime_s > 0.0 ? mc.total_runtime_s / rmss.runtime_s : 0.0;
    return out;
}

}  // namespace rmss
