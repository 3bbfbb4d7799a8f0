#include <chrono>
#include <cmath>
#include <random>
#include <string>

#include "doctest.h"
#include "rmss/errors.hpp"
#include "rmss/grid.hpp"
#include "rmss/parameters.hpp"
#include "rmss/stats.hpp"
#include "rmss/worstcase.hpp"

using namespace rmss;

namespace {

const std::string kData = RMSS_DATA_DIR;

// Inverse of 0.5 erfc(-x / sqrt 2) by bisection.
double phi_inv_oracle(double p) {
    double lo = -10.0, hi = 10.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

StochasticParameterSet make_params(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
    StochasticParameterSet p;
    for (Eigen::Index j = 0; j < mean.size(); ++j)
        p.entries.push_back({"c" + std::to_string(j), Axis::P, 0, mean[j], std::sqrt(cov(j, j))});
    p.covariance = cov;
    return p;
}

struct Pipeline {
    GridCase grid;
    StochasticParameterSet params;
    MetricSpec spec;
};

Pipeline pipeline(const std::string& file, const std::string& selector) {
    Pipeline p;
    p.grid = tag_essential(parse_case(kData + "/" + file), EssentialSelector::parse(selector));
    p.params = make_parameter_set(p.grid, {});
    p.spec = nonzero_injection_pq_metrics(p.grid);
    return p;
}

}  // namespace

TEST_CASE("inverse normal CDF agrees with bisection") {
    for (double p : {1e-6, 0.01, 0.025, 0.2, 0.5, 0.8, 0.975, 0.999}) {
        CAPTURE(p);
        CHECK(normal_quantile(p) == doctest::Approx(phi_inv_oracle(p)).epsilon(1e-10));
    }
    CHECK_THROWS_AS(normal_quantile(0.0), InvalidArgument);
    CHECK_THROWS_AS(normal_quantile(1.0), InvalidArgument);
}

TEST_CASE("worst-case metric bounds") {
    CHECK(worst_case_metric(1.0, 0.0, 0.975, Bound::Upper) == 1.0);
    CHECK(worst_case_metric(1.0, 0.01, 0.5, Bound::Upper) == doctest::Approx(1.0).epsilon(1e-15));
    const double z = phi_inv_oracle(0.975);
    CHECK(worst_case_metric(1.0, 0.01, 0.975, Bound::Upper) == doctest::Approx(1.0 + 0.01 * z).epsilon(1e-12));
    CHECK(worst_case_metric(1.0, 0.01, 0.975, Bound::Upper) == doctest::Approx(1.0196).epsilon(1e-5));
    CHECK(worst_case_metric(1.0, 0.01, 0.975, Bound::Lower) == doctest::Approx(1.0 - 0.01 * z).epsilon(1e-12));

    for (double rho : {0.0, 1.0, -0.1, 1.5}) {
        try {
            worst_case_metric(1.0, 0.01, rho, Bound::Upper);
            FAIL("expected InvalidProbability");
        } catch (const InvalidArgument& e) {
            CHECK(std::string(e.what()).find("InvalidProbability") != std::string::npos);
        }
    }
    CHECK_THROWS_AS(worst_case_metric(1.0, -0.01, 0.975, Bound::Upper), InvalidArgument);
}

TEST_CASE("worst-case parameters: worked cases") {
    Eigen::Vector2d mean(0.3, -0.7);

    SUBCASE("zero deviation returns the mean") {
        auto p = make_params(mean, Eigen::Matrix2d::Identity());
        CHECK(worst_case_parameters(p, Eigen::Vector2d(1.0, 2.0), 1.0, 1.0) == mean);
    }
    SUBCASE("identity covariance along one axis") {
        auto p = make_params(mean, Eigen::Matrix2d::Identity());
        Eigen::VectorXd e = worst_case_parameters(p, Eigen::Vector2d(1.0, 0.0), 1.25, 1.0);
        CHECK(e[0] == doctest::Approx(mean[0] + 0.25));
        CHECK(e[1] == mean[1]);
    }
    SUBCASE("correlated pair against a brute-force line search") {
        Eigen::Matrix2d cov;
        cov << 1.0, 0.5, 0.5, 1.0;
        auto p = make_params(mean, cov);
        Eigen::VectorXd e = worst_case_parameters(p, Eigen::Vector2d(1.0, 0.0), 2.0, 1.0);
        CHECK(e[0] - mean[0] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(e[1] - mean[1] == doctest::Approx(0.5).epsilon(1e-12));

        // The constraint fixes x0 - mean0 = 1; scan the free coordinate.
        const Eigen::Matrix2d inv = cov.inverse();
        double best_t = 0.0, best = HUGE_VAL;
        for (int k = -200000; k <= 200000; ++k) {
            const double t = k * 1e-5;
            const Eigen::Vector2d dx(1.0, t);
            const double m = dx.dot(inv * dx);
            if (m < best) {
                best = m;
                best_t = t;
            }
        }
        CHECK(e[1] - mean[1] == doctest::Approx(best_t).epsilon(1e-4));
        CHECK(mahalanobis_distance(p, e) == doctest::Approx(best).epsilon(1e-9));
    }
}

TEST_CASE("worst-case parameters: degenerate and malformed input") {
    auto p = make_params(Eigen::Vector2d(1.0, 1.0), Eigen::Matrix2d::Identity());
    CHECK_THROWS_AS(worst_case_parameters(p, Eigen::Vector2d::Zero(), 1.1, 1.0), DegenerateDirection);
    CHECK_THROWS_AS(worst_case_parameters(p, Eigen::Vector3d(1.0, 0.0, 0.0), 1.1, 1.0), DimensionMismatch);

    // Insensitive to the only varying parameter.
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    cov(1, 1) = 1.0;
    auto q = make_params(Eigen::Vector2d(1.0, 1.0), cov);
    CHECK_THROWS_AS(worst_case_parameters(q, Eigen::Vector2d(1.0, 0.0), 1.1, 1.0), DegenerateDirection);
}

TEST_CASE("closed form is the most probable point on random hyperplanes") {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> n01;
    std::uniform_int_distribution<int> dim(1, 4);
    int instances = 0;
    while (instances < 100) {
        const int d = dim(rng);
        Eigen::MatrixXd a(d, d);
        for (int i = 0; i < d * d; ++i) a.data()[i] = n01(rng);
        const Eigen::MatrixXd cov = a * a.transpose() + 0.05 * Eigen::MatrixXd::Identity(d, d);
        Eigen::VectorXd mean(d), lambda(d);
        for (int i = 0; i < d; ++i) {
            mean[i] = n01(rng);
            lambda[i] = n01(rng);
        }
        if (lambda.dot(cov * lambda) < 1e-6) continue;
        ++instances;
        auto p = make_params(mean, cov);
        const double c_nom = 1.0;
        const double c_wc = c_nom + 0.5 * n01(rng);
        const Eigen::VectorXd e = worst_case_parameters(p, lambda, c_wc, c_nom);
        CHECK(std::abs(lambda.dot(e - mean) - (c_wc - c_nom)) <= 1e-10);

        const Eigen::LLT<Eigen::MatrixXd> llt(cov);
        auto dist = [&](const Eigen::VectorXd& x) {
            const Eigen::VectorXd dx = x - mean;
            return dx.dot(llt.solve(dx));
        };
        const double d_opt = dist(e);
        const Eigen::MatrixXd proj =
            Eigen::MatrixXd::Identity(d, d) - lambda * lambda.transpose() / lambda.squaredNorm();
        int worse = 0;
        for (int k = 0; k < 10000; ++k) {
            Eigen::VectorXd z(d);
            for (int i = 0; i < d; ++i) z[i] = n01(rng);
            const Eigen::VectorXd x = e + proj * z;
            if (dist(x) < d_opt * (1.0 - 1e-12) - 1e-15) ++worse;
        }
        CHECK(worse == 0);
        CHECK(mahalanobis_distance(p, e) == doctest::Approx(d_opt).epsilon(1e-8));
    }
    CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() < 30.0);
}

TEST_CASE("upper and lower deviations are negations; covariance scale cancels") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::MatrixXd a(3, 3);
        for (int i = 0; i < 9; ++i) a.data()[i] = n01(rng);
        const Eigen::MatrixXd cov = a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(3, 3);
        const Eigen::Vector3d mean(n01(rng), n01(rng), n01(rng));
        const Eigen::Vector3d lambda(n01(rng), n01(rng), n01(rng));
        const double c_nom = 1.0, sc = 0.01;
        const double ub = worst_case_metric(c_nom, sc, 0.975, Bound::Upper);
        const double lb = worst_case_metric(c_nom, sc, 0.975, Bound::Lower);

        auto p = make_params(mean, cov);
        const Eigen::VectorXd du = worst_case_parameters(p, lambda, ub, c_nom) - mean;
        const Eigen::VectorXd dl = worst_case_parameters(p, lambda, lb, c_nom) - mean;
        CHECK((du + dl).cwiseAbs().maxCoeff() <= 1e-12 * du.cwiseAbs().maxCoeff());

        auto scaled = make_params(mean, 9.0 * cov);
        const Eigen::VectorXd ds = worst_case_parameters(scaled, lambda, ub, c_nom) - mean;
        CHECK((ds - du).cwiseAbs().maxCoeff() <= 1e-12 * du.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("violation counting") {
    GridCase g = parse_case(kData + "/case14.m");
    auto result = [](int bus, double lo, double hi) {
        WorstCaseResult r;
        r.bus = bus;
        r.c_nom = 0.5 * (lo + hi);
        r.c_wc_lb = lo;
        r.c_wc_ub = hi;
        return r;
    };
    // case14 limits are [0.94, 1.06].
    SUBCASE("all inside") {
        std::vector<WorstCaseResult> rs = {result(4, 0.99, 1.01), result(5, 0.95, 1.05)};
        ViolationReport v = count_violations(rs, g);
        CHECK(v.total() == 0);
        CHECK_FALSE(v.worst_violator);
        CHECK(v.records.empty());
    }
    SUBCASE("three upper violations") {
        std::vector<WorstCaseResult> rs = {result(4, 1.0, 1.07), result(5, 1.0, 1.08), result(9, 1.0, 1.061),
                                           result(10, 1.0, 1.0)};
        ViolationReport v = count_violations(rs, g);
        CHECK(v.ub_total == 3);
        CHECK(v.lb_total == 0);
        CHECK(v.per_bus.at(5).ub == 1);
        REQUIRE(v.records.size() == 3);
        CHECK(v.records[1].margin == doctest::Approx(0.02));
        CHECK(v.worst_violator == 4);  // tie on one violation each: lowest id
    }
    SUBCASE("both bounds on one bus make it the worst violator") {
        std::vector<WorstCaseResult> rs = {result(4, 0.99, 1.07), result(9, 0.93, 1.07)};
        ViolationReport v = count_violations(rs, g);
        CHECK(v.total() == 3);
        CHECK(v.worst_violator == 9);
        int sum = 0;
        for (const auto& [bus, t] : v.per_bus) sum += t.total();
        CHECK(sum == v.total());
    }
    SUBCASE("missing limits") {
        g.buses[3].v_max.reset();
        std::vector<WorstCaseResult> rs = {result(g.buses[3].id, 1.0, 1.0)};
        CHECK_THROWS_AS(count_violations(rs, g), MissingLimits);
    }
}

TEST_CASE("band limits flag only deviations beyond the band") {
    GridCase g = with_band_limits(parse_case(kData + "/case14.m"), 0.02);
    const double vm = g.bus(9).vm;
    WorstCaseResult in{9, vm, 0.0, vm * 1.019, vm * 0.981};
    WorstCaseResult out{9, vm, 0.0, vm * 1.021, vm * 0.979};
    std::vector<WorstCaseResult> a = {in}, b = {out};
    CHECK(count_violations(a, g).total() == 0);
    CHECK(count_violations(b, g).total() == 2);
}

TEST_CASE("sweep grids") {
    SigmaCSpec def = SigmaCSpec::default_sweep();
    REQUIRE(def.values.size() == 20);
    CHECK(def.values.front() == doctest::Approx(0.001));
    CHECK(def.values.back() == doctest::Approx(0.05));
    for (std::size_t k = 1; k < def.values.size(); ++k)
        CHECK(def.values[k] / def.values[k - 1] == doctest::Approx(std::pow(50.0, 1.0 / 19.0)));
    CHECK(SweepGrid::linear(0.01, 0.05, 5).values[2] == doctest::Approx(0.03));
    const SweepGrid repeated{{0.01, 0.01}};
    const SweepGrid zero{{0.0, 0.01}};
    CHECK_THROWS_AS(repeated.validate(), InvalidArgument);
    CHECK_THROWS_AS(zero.validate(), InvalidArgument);
    CHECK_THROWS_AS(SweepGrid::logarithmic(0.0, 0.05, 10), InvalidArgument);
}

TEST_CASE("zero metric spread reproduces the nominal point") {
    Pipeline p = pipeline("case14_solar.m", "all-solar");
    RmssOptions opts;
    opts.sigma_c = SigmaCSpec::known_absolute(0.0);
    RmssReport rep = run_rmss(p.grid, p.params, p.spec, opts);
    REQUIRE(rep.sweep.size() == 1);
    for (std::size_t i = 0; i < p.spec.size(); ++i) {
        const auto& r = rep.sweep[0].results[i];
        CHECK(r.c_wc_ub == rep.c_nom[i]);
        CHECK(r.c_wc_lb == rep.c_nom[i]);
        if (r.e_wc_ub) CHECK(*r.e_wc_ub == p.params.means());
    }
    // Only metrics already outside their limits at nominal are counted.
    int outside = 0;
    for (std::size_t i = 0; i < p.spec.size(); ++i) {
        const Bus& b = p.grid.bus(p.spec.entries[i].bus);
        outside += (rep.c_nom[i] > *b.v_max) + (rep.c_nom[i] < *b.v_min);
    }
    CHECK(rep.sweep[0].violations.total() == outside);

    opts.limit_band = 0.02;
    RmssReport banded = run_rmss(p.grid, p.params, p.spec, opts);
    CHECK(banded.sweep[0].violations.total() == 0);
    CHECK_FALSE(banded.worst_violator);
}

TEST_CASE("run_rmss results satisfy the linear model") {
    Pipeline p = pipeline("case14_solar.m", "all-solar");
    RmssOptions opts;
    opts.sigma_c = SigmaCSpec::known_fraction(0.01);
    RmssReport rep = run_rmss(p.grid, p.params, p.spec, opts);
    const auto& pt = rep.sweep.at(0);
    for (std::size_t i = 0; i < p.spec.size(); ++i) {
        const auto& r = pt.results[i];
        CHECK(r.sigma_c == doctest::Approx(0.01 * rep.c_nom[i]));
        CHECK(r.c_wc_lb <= rep.c_nom[i]);
        CHECK(r.c_wc_ub >= rep.c_nom[i]);
        if (r.degenerate) continue;
        const Eigen::VectorXd lambda = rep.sensitivity.values.row(static_cast<Eigen::Index>(i)).transpose();
        CHECK(std::abs(lambda.dot(*r.e_wc_ub - p.params.means()) - (r.c_wc_ub - r.c_nom)) <= 1e-10);
        CHECK(std::abs(lambda.dot(*r.e_wc_lb - p.params.means()) - (r.c_wc_lb - r.c_nom)) <= 1e-10);
    }
    CHECK(rep.sensitivity.linear_solves == p.spec.size());
}

TEST_CASE("violations never decrease along the default sweep") {
    for (const char* file : {"case14_solar.m", "case14.m", "case118_synthetic.m"}) {
        CAPTURE(file);
        Pipeline p = pipeline(file, std::string(file) == "case14_solar.m" ? "all-solar" : "all");
        RmssOptions opts;
        opts.limit_band = 0.02;
        RmssReport rep = run_rmss(p.grid, p.params, p.spec, opts);
        REQUIRE(rep.sweep.size() == 20);
        for (std::size_t k = 1; k < rep.sweep.size(); ++k)
            CHECK(rep.sweep[k].violations.total() >= rep.sweep[k - 1].violations.total());
        CHECK(rep.sweep.back().violations.total() > 0);
    }
}

TEST_CASE("linearized metric spread") {
    Pipeline p = pipeline("case14_solar.m", "all-solar");
    RmssOptions opts;
    opts.sigma_c = SigmaCSpec::linearized();
    RmssReport rep = run_rmss(p.grid, p.params, p.spec, opts);
    for (std::size_t i = 0; i < p.spec.size(); ++i) {
        const Eigen::VectorXd lambda = rep.sensitivity.values.row(static_cast<Eigen::Index>(i)).transpose();
        CHECK(rep.sweep[0].results[i].sigma_c ==
              doctest::Approx(std::sqrt(lambda.dot(p.params.covariance * lambda))).epsilon(1e-12));
        // With the linearized spread the worst case stays inside the parameter confidence box.
        CHECK(rep.sweep[0].results[i].ub_within_ci);
    }
}

TEST_CASE("analysis phase re-simulates at the worst-case point") {
    Pipeline p = pipeline("case14_solar.m", "all-solar");
    RmssOptions opts;
    opts.sigma_c = SigmaCSpec::linearized();
    opts.analysis_phase = true;
    RmssReport rep = run_rmss(p.grid, p.params, p.spec, opts);
    for (const auto& r : rep.sweep[0].results) {
        REQUIRE(r.simulated_ub);
        // Small departures from nominal: the linear prediction holds to 1% of the shift.
        CHECK(std::abs(*r.simulated_ub - r.c_wc_ub) < 1e-2 * std::abs(r.c_wc_ub - r.c_nom) + 1e-9);
    }
}

TEST_CASE("run_rmss input checks") {
    Pipeline p = pipeline("case14_solar.m", "all-solar");
    RmssOptions opts;
    opts.rho = 1.0;
    CHECK_THROWS_AS(run_rmss(p.grid, p.params, p.spec, opts), InvalidArgument);
    opts.rho = 0.975;
    opts.sigma_c = SigmaCSpec::known_absolute(-1.0);
    CHECK_THROWS_AS(run_rmss(p.grid, p.params, p.spec, opts), InvalidArgument);
}
