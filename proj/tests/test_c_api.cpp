// Exercises the shared library through its C header only.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "rmss/rmss.h"

using nlohmann::json;

namespace {

const std::string kData = RMSS_DATA_DIR;

std::string take(char* s) {
    std::string out = s ? s : "";
    rmss_string_free(s);
    return out;
}

struct Case {
    rmss_case* p = nullptr;
    explicit Case(const std::string& file, const char* selector = "all") {
        REQUIRE(rmss_case_load((kData + "/" + file).c_str(), &p) == RMSS_OK);
        REQUIRE(rmss_case_tag_essential(p, selector) == RMSS_OK);
    }
    ~Case() { rmss_case_free(p); }
};

const char* kOverloaded = R"(function mpc = overloaded
mpc.baseMVA = 100;
mpc.bus = [
    1 3 0   0 0 0 1 1.0 0 138 1 1.05 0.95;
    2 1 600 0 0 0 1 1.0 0 138 1 1.05 0.95;
];
mpc.gen = [
    1 600 0 900 -900 1.0 100 1 900 0;
];
mpc.branch = [
    1 2 0 0.1 0 0 0 0 0 0 1 -360 360;
];
)";

}  // namespace

TEST_CASE("version, status names and defaults") {
    CHECK(std::string(rmss_version()) == "1.0.0");
    CHECK(std::string(rmss_status_string(RMSS_OK)) == "ok");
    CHECK(std::string(rmss_status_string(RMSS_ERR_NOT_PSD)) == "NotPSD");
    rmss_config c;
    rmss_config_init(&c);
    CHECK(c.rho == 0.975);
    CHECK(c.sigma_p == 0.02);
    CHECK(c.sigma_p_is_fraction == 1);
    CHECK(c.samples == 10000);
    CHECK(c.workers == 1);
    CHECK(c.metric_buses == nullptr);
}

TEST_CASE("load errors carry a status and a message") {
    rmss_case* p = nullptr;
    CHECK(rmss_case_load((kData + "/nope.m").c_str(), &p) == RMSS_ERR_IO);
    CHECK(std::string(rmss_last_error()).find("nope.m") != std::string::npos);
    CHECK(rmss_case_load(nullptr, &p) == RMSS_ERR_INVALID_ARGUMENT);
    CHECK(rmss_case_load_text("mpc.bus = [1 2", "bad", &p) == RMSS_ERR_PARSE);
    CHECK(std::string(rmss_last_error()).rfind("ParseError", 0) == 0);

    REQUIRE(rmss_case_load((kData + "/case14_solar.m").c_str(), &p) == RMSS_OK);
    CHECK(rmss_case_tag_essential(p, "all-wind") == RMSS_ERR_EMPTY_SELECTION);
    std::size_t n = 0;
    CHECK(rmss_case_bus_count(p, &n) == RMSS_OK);
    CHECK(n == 14);
    char* v = nullptr;
    REQUIRE(rmss_case_validate_json(p, &v) == RMSS_OK);
    json j = json::parse(take(v));
    CHECK(j["ok"] == true);
    CHECK(j["generators"] == 8);
    rmss_case_free(p);
}

TEST_CASE("run produces a report") {
    Case c("case14_solar.m", "all-solar");
    rmss_config cfg;
    rmss_config_init(&cfg);
    cfg.limit_band = 0.02;
    rmss_report* rep = nullptr;
    REQUIRE(rmss_run(c.p, &cfg, &rep) == RMSS_OK);

    char* s = nullptr;
    REQUIRE(rmss_report_json(rep, &s) == RMSS_OK);
    json j = json::parse(take(s));
    CHECK(j["sweep"].size() == 20);
    CHECK(j["parameters"].size() == 3);
    CHECK(j["sigma_c_mode"] == "fraction");

    REQUIRE(rmss_report_violations_csv(rep, &s) == RMSS_OK);
    CHECK(take(s).rfind("sigma_c,ub_violations", 0) == 0);
    REQUIRE(rmss_report_worst_violator_csv(rep, &s) == RMSS_OK);
    CHECK(take(s).rfind("sigma_c,bus", 0) == 0);
    REQUIRE(rmss_report_sensitivity_csv(rep, &s) == RMSS_OK);
    CHECK(take(s).rfind("metric,method", 0) == 0);
    double t = -1.0;
    CHECK(rmss_report_runtime(rep, &t) == RMSS_OK);
    CHECK(t > 0.0);
    rmss_report_free(rep);

    const double known = 0.0;
    cfg.sigma_c = &known;
    cfg.sigma_c_count = 1;
    cfg.sigma_c_mode = RMSS_SIGMA_C_ABSOLUTE;
    REQUIRE(rmss_run(c.p, &cfg, &rep) == RMSS_OK);
    REQUIRE(rmss_report_json(rep, &s) == RMSS_OK);
    j = json::parse(take(s));
    CHECK(j["sweep"][0]["violations"]["total"] == 0);
    rmss_report_free(rep);
}

TEST_CASE("explicit metrics and sensitivities") {
    Case c("case14.m");
    rmss_config cfg;
    rmss_config_init(&cfg);
    const int buses[] = {4, 14};
    cfg.metric_buses = buses;
    cfg.metric_count = 2;
    char* s = nullptr;
    REQUIRE(rmss_sensitivities_csv(c.p, &cfg, &s) == RMSS_OK);
    std::string csv = take(s);
    CHECK(csv.find("\nvm:4,adjoint,") != std::string::npos);
    CHECK(csv.find("\nvm:14,adjoint,") != std::string::npos);

    const int unknown[] = {99};
    cfg.metric_buses = unknown;
    cfg.metric_count = 1;
    rmss_report* rep = nullptr;
    CHECK(rmss_run(c.p, &cfg, &rep) == RMSS_ERR_UNKNOWN_BUS);
}

TEST_CASE("solver failure maps to NonConvergence") {
    rmss_case* p = nullptr;
    REQUIRE(rmss_case_load_text(kOverloaded, "overloaded", &p) == RMSS_OK);
    REQUIRE(rmss_case_tag_essential(p, "all") == RMSS_OK);
    rmss_config cfg;
    rmss_config_init(&cfg);
    rmss_report* rep = nullptr;
    CHECK(rmss_run(p, &cfg, &rep) == RMSS_ERR_NON_CONVERGENCE);
    CHECK(std::string(rmss_last_error()).find("mismatch history") != std::string::npos);
    rmss_case_free(p);
}

TEST_CASE("Monte Carlo statistics are identical across worker counts") {
    Case c("case14_solar.m", "all-solar");
    rmss_config cfg;
    rmss_config_init(&cfg);
    cfg.samples = 2000;
    cfg.seed = 42;
    std::string blocks[2];
    for (int k = 0; k < 2; ++k) {
        cfg.workers = k == 0 ? 1 : 3;
        rmss_mc_report* rep = nullptr;
        REQUIRE(rmss_run_mc(c.p, &cfg, &rep) == RMSS_OK);
        char* s = nullptr;
        REQUIRE(rmss_mc_report_json(rep, &s) == RMSS_OK);
        blocks[k] = json::parse(take(s))["statistics"].dump();
        rmss_mc_report_free(rep);
    }
    CHECK(blocks[0] == blocks[1]);

    cfg.samples = 0;
    rmss_mc_report* rep = nullptr;
    CHECK(rmss_run_mc(c.p, &cfg, &rep) == RMSS_ERR_INVALID_ARGUMENT);
}

TEST_CASE("compare serialized reports") {
    Case c("case14_solar.m", "all-solar");
    rmss_config cfg;
    rmss_config_init(&cfg);
    cfg.samples = 1000;
    cfg.sigma_c_mode = RMSS_SIGMA_C_LINEARIZED;
    const double one = 1.0;
    cfg.sigma_c = &one;
    cfg.sigma_c_count = 1;

    rmss_report* rep = nullptr;
    rmss_mc_report* mc = nullptr;
    REQUIRE(rmss_run(c.p, &cfg, &rep) == RMSS_OK);
    REQUIRE(rmss_run_mc(c.p, &cfg, &mc) == RMSS_OK);
    char* s = nullptr;
    REQUIRE(rmss_report_json(rep, &s) == RMSS_OK);
    const std::string rj = take(s);
    REQUIRE(rmss_mc_report_json(mc, &s) == RMSS_OK);
    const std::string mj = take(s);
    rmss_report_free(rep);
    rmss_mc_report_free(mc);

    char* cmp = nullptr;
    char* table = nullptr;
    REQUIRE(rmss_compare_json(rj.c_str(), mj.c_str(), &cmp, &table) == RMSS_OK);
    json j = json::parse(take(cmp));
    CHECK(j["mae"]["c_ub"]["value"].get<double>() < 0.01);
    CHECK(take(table).find("c_UB") != std::string::npos);

    CHECK(rmss_compare_json("{", mj.c_str(), &cmp, nullptr) == RMSS_ERR_SCHEMA);

    // A report from another case: different metric set.
    Case other("case14.m");
    rmss_config_init(&cfg);
    cfg.samples = 100;
    REQUIRE(rmss_run_mc(other.p, &cfg, &mc) == RMSS_OK);
    REQUIRE(rmss_mc_report_json(mc, &s) == RMSS_OK);
    const std::string other_mj = take(s);
    rmss_mc_report_free(mc);
    CHECK(rmss_compare_json(rj.c_str(), other_mj.c_str(), &cmp, nullptr) == RMSS_ERR_DIMENSION_MISMATCH);
}

TEST_CASE("correlation matrices load from CSV") {
    const auto path = std::filesystem::temp_directory_path() / "rmss_capi_corr.csv";
    {
        std::ofstream out(path);
        out << "1,0.3,0\n0.3,1,0\n0,0,1\n";
    }
    double* v = nullptr;
    std::size_t rows = 0, cols = 0;
    REQUIRE(rmss_matrix_csv_load(path.string().c_str(), &v, &rows, &cols) == RMSS_OK);
    CHECK(rows == 3);
    CHECK(cols == 3);
    CHECK(v[1] == 0.3);

    Case c("case14_solar.m", "all-solar");
    rmss_config cfg;
    rmss_config_init(&cfg);
    cfg.correlation = v;
    cfg.correlation_dim = rows;
    cfg.samples = 200;
    rmss_mc_report* mc = nullptr;
    CHECK(rmss_run_mc(c.p, &cfg, &mc) == RMSS_OK);
    rmss_mc_report_free(mc);

    v[1] = v[3] = 1.5;  // not a correlation matrix
    CHECK(rmss_run_mc(c.p, &cfg, &mc) != RMSS_OK);
    rmss_doubles_free(v);
    std::filesystem::remove(path);
}
