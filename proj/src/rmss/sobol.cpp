#include "rmss/sobol.hpp"

#include <boost/random/sobol.hpp>
#include <cmath>
#include <random>

#include "rmss/errors.hpp"
#include "rmss/stats.hpp"

namespace rmss {

double Marginal::from_unit(double u) const {
    switch (kind) {
        case Kind::Uniform: return a + (b - a) * u;
        case Kind::Normal: return b > 0.0 ? a + b * normal_quantile(u) : a;
    }
    return a;
}

namespace {

constexpr std::size_t kBootstrap = 100;

/// S_i = mean(f_B (f_ABi - f_A)) / Var([f_A; f_B]) over the given row subset.
Eigen::MatrixXd first_order(const Eigen::MatrixXd& ya, const Eigen::MatrixXd& yb,
                            const std::vector<Eigen::MatrixXd>& yab, const std::vector<Eigen::Index>& rows) {
    const Eigen::Index m = ya.cols();
    const auto d = static_cast<Eigen::Index>(yab.size());
    const auto n = static_cast<double>(rows.size());
    Eigen::MatrixXd s(m, d);
    for (Eigen::Index k = 0; k < m; ++k) {
        double sum = 0.0;
        double sq = 0.0;
        for (Eigen::Index r : rows) {
            sum += ya(r, k) + yb(r, k);
            sq += ya(r, k) * ya(r, k) + yb(r, k) * yb(r, k);
        }
        const double mean = sum / (2.0 * n);
        const double var = sq / (2.0 * n) - mean * mean;
        for (Eigen::Index i = 0; i < d; ++i) {
            double acc = 0.0;
            for (Eigen::Index r : rows) acc += yb(r, k) * (yab[static_cast<std::size_t>(i)](r, k) - ya(r, k));
            s(k, i) = var > 0.0 ? acc / n / var : 0.0;
        }
    }
    return s;
}

}  // namespace

SobolIndices sobol_first_order(const MetricModel& model, std::span<const Marginal> inputs, std::size_t n_base,
                               std::uint64_t seed) {
    const std::size_t d = inputs.size();
    if (d == 0 || d != model.parameter_count()) throw DimensionMismatch("Sobol inputs != model parameter count");
    if (n_base < 64) throw InvalidArgument("Sobol analysis needs n_base >= 64");
    if (2 * d > 3667) throw InvalidArgument("too many inputs for the Sobol sequence (max 1833)");

    const auto n = static_cast<Eigen::Index>(n_base);
    const auto di = static_cast<Eigen::Index>(d);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> shift(2 * d);
    for (auto& s : shift) s = unit(rng);

    boost::random::sobol qrng(static_cast<unsigned>(2 * d));
    Eigen::MatrixXd a(n, di);
    Eigen::MatrixXd b(n, di);
    for (Eigen::Index r = 0; r < n; ++r) {
        for (std::size_t k = 0; k < 2 * d; ++k) {
            double u = std::ldexp(static_cast<double>(qrng()), -64) + shift[k];
            u -= std::floor(u);
            u = std::clamp(u, 1e-15, 1.0 - 1e-15);
            const double x = inputs[k % d].from_unit(u);
            if (k < d)
                a(r, static_cast<Eigen::Index>(k)) = x;
            else
                b(r, static_cast<Eigen::Index>(k - d)) = x;
        }
    }

    const auto m = static_cast<Eigen::Index>(model.metric_count());
    std::size_t evals = 0;
    auto eval = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        const std::size_t index = evals++;
        try {
            Eigen::VectorXd y = model.evaluate(x);
            if (y.size() != m) throw DimensionMismatch("model returned wrong metric count");
            return y;
        } catch (const ModelEvaluationError&) {
            throw;
        } catch (const Error& e) {
            throw ModelEvaluationError(index, e.what());
        }
    };

    Eigen::MatrixXd ya(n, m);
    Eigen::MatrixXd yb(n, m);
    for (Eigen::Index r = 0; r < n; ++r) ya.row(r) = eval(a.row(r).transpose()).transpose();
    for (Eigen::Index r = 0; r < n; ++r) yb.row(r) = eval(b.row(r).transpose()).transpose();
    std::vector<Eigen::MatrixXd> yab(d, Eigen::MatrixXd(n, m));
    for (Eigen::Index i = 0; i < di; ++i) {
        for (Eigen::Index r = 0; r < n; ++r) {
            Eigen::VectorXd x = a.row(r).transpose();
            x[i] = b(r, i);
            yab[static_cast<std::size_t>(i)].row(r) = eval(x).transpose();
        }
    }

    SobolIndices out;
    out.n_base = n_base;
    out.evaluations = evals;

    std::vector<Eigen::Index> all(n_base);
    for (Eigen::Index r = 0; r < n; ++r) all[static_cast<std::size_t>(r)] = r;
    out.first_order = first_order(ya, yb, yab, all);

    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(m, di);
    Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(m, di);
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    std::vector<Eigen::Index> rows(n_base);
    for (std::size_t rep = 0; rep < kBootstrap; ++rep) {
        for (auto& r : rows) r = pick(rng);
        Eigen::MatrixXd s = first_order(ya, yb, yab, rows);
        sum += s;
        sq += s.cwiseProduct(s);
    }
    const double nb = static_cast<double>(kBootstrap);
    Eigen::MatrixXd var = (sq - sum.cwiseProduct(sum) / nb) / (nb - 1.0);
    out.half_width = 1.96 * var.cwiseMax(0.0).cwiseSqrt();

    // Signed slopes by least squares over the independent A and B samples.
    Eigen::MatrixXd x(2 * n, di);
    x << a, b;
    Eigen::MatrixXd y(2 * n, m);
    y << ya, yb;
    const Eigen::RowVectorXd xmean = x.colwise().mean();
    const Eigen::RowVectorXd ymean = y.colwise().mean();
    x.rowwise() -= xmean;
    y.rowwise() -= ymean;
    std::vector<Eigen::Index> varying;
    for (Eigen::Index j = 0; j < di; ++j)
        if (x.col(j).squaredNorm() > 0.0) varying.push_back(j);
    out.slope = Eigen::MatrixXd::Zero(m, di);
    if (!varying.empty()) {
        Eigen::MatrixXd xv(2 * n, static_cast<Eigen::Index>(varying.size()));
        for (std::size_t c = 0; c < varying.size(); ++c) xv.col(static_cast<Eigen::Index>(c)) = x.col(varying[c]);
        const Eigen::MatrixXd coef = xv.colPivHouseholderQr().solve(y);  // |varying| x m
        for (std::size_t c = 0; c < varying.size(); ++c)
            out.slope.col(varying[c]) = coef.row(static_cast<Eigen::Index>(c)).transpose();
    }
    return out;
}

SobolIndices sobol_first_order(const MetricModel& model, const StochasticParameterSet& params,
                               std::size_t n_base, std::uint64_t seed) {
    std::vector<Marginal> inputs;
    for (const auto& e : params.entries) inputs.push_back(Marginal::normal(e.mean, e.stdev));
    return sobol_first_order(model, inputs, n_base, seed);
}

}  // namespace rmss
