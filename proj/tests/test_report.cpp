#include <sstream>
#include <string>

#include "doctest.h"
#include "rmss/errors.hpp"
#include "rmss/report.hpp"

using namespace rmss;
using nlohmann::json;

namespace {

const std::string kData = RMSS_DATA_DIR;

struct Fixture {
    GridCase grid;
    StochasticParameterSet params;
    MetricSpec spec;
};

Fixture fixture() {
    Fixture f;
    f.grid = tag_essential(parse_case(kData + "/case14_solar.m"), EssentialSelector::parse("all-solar"));
    f.params = make_parameter_set(f.grid, {});
    f.spec = nonzero_injection_pq_metrics(f.grid);
    return f;
}

std::size_t lines(const std::string& s) {
    std::size_t n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

}  // namespace

TEST_CASE("RMSS report survives a JSON round trip") {
    Fixture f = fixture();
    RmssOptions o;
    o.limit_band = 0.02;
    RmssReport rep = run_rmss(f.grid, f.params, f.spec, o);
    const json a = to_json(rep);
    const RmssReport back = rmss_report_from_json(json::parse(a.dump()));
    CHECK(to_json(back) == a);
    CHECK(back.spec.entries == rep.spec.entries);
    CHECK(back.sensitivity.values == rep.sensitivity.values);
    CHECK(back.worst_violator == rep.worst_violator);
}

TEST_CASE("Monte Carlo report survives a JSON round trip") {
    Fixture f = fixture();
    McOptions o;
    o.samples = 300;
    McReport rep = run_monte_carlo(f.grid, f.params, f.spec, o);
    const json a = to_json(rep);
    const McReport back = mc_report_from_json(json::parse(a.dump()));
    CHECK(to_json(back) == a);
    CHECK(a.at("statistics").at("samples") == 300);
    CHECK(a.at("timing").contains("wall_time_s"));
}

TEST_CASE("malformed reports are schema errors") {
    CHECK_THROWS_AS(rmss_report_from_json(json::parse(R"({"case": "x"})")), SchemaError);
    CHECK_THROWS_AS(mc_report_from_json(json::parse(R"({"case": "x", "statistics": {}})")), SchemaError);
}

TEST_CASE("CSV outputs") {
    Fixture f = fixture();
    RmssOptions o;
    o.limit_band = 0.02;
    RmssReport rep = run_rmss(f.grid, f.params, f.spec, o);

    const std::string v = violations_csv(rep);
    CHECK(v.rfind("sigma_c,ub_violations,lb_violations,total\n", 0) == 0);
    CHECK(lines(v) == rep.sweep.size() + 1);
    CHECK(v == violations_csv(run_rmss(f.grid, f.params, f.spec, o)));

    const std::string s = sensitivity_csv(rep.sensitivity, rep.spec, rep.params);
    CHECK(lines(s) == rep.spec.size() + 1);
    CHECK(s.find("g6:P") != std::string::npos);

    const std::string w = worst_violator_csv(rep);
    if (rep.worst_violator)
        CHECK(lines(w) == rep.sweep.size() + 1);
    else
        CHECK(lines(w) == 1);

    SensitivityMatrix wrong = rep.sensitivity;
    wrong.values.conservativeResize(wrong.values.rows(), wrong.values.cols() + 1);
    CHECK_THROWS_AS(sensitivity_csv(wrong, rep.spec, rep.params), DimensionMismatch);
}

TEST_CASE("comparison serializes value and percent") {
    ComparisonReport c;
    c.per_sigma = {MaeSet{0.01, 0.002, 0.003, 0.004, 0.005}};
    c.mae = c.per_sigma[0];
    c.speedup = 100.0;
    const json j = to_json(c);
    CHECK(j["mae"]["c_ub"]["percent"].get<double>() == doctest::Approx(0.2));
    CHECK(j["speedup"] == 100.0);
    CHECK(comparison_table(c).find("speedup 100.0x") != std::string::npos);
}
