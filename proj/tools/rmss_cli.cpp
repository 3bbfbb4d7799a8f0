// rmss: command-line front end over the C API.
//
// Exit codes: 0 success, 2 solver failure, 3 configuration or input error.

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rmss/rmss.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitSolver = 2;
constexpr int kExitConfig = 3;

struct Failure {
    int code;
    std::string message;
};

int exit_code(rmss_status s) {
    switch (s) {
        case RMSS_OK: return kExitOk;
        case RMSS_ERR_NON_CONVERGENCE:
        case RMSS_ERR_JACOBIAN_SINGULAR:
        case RMSS_ERR_ALL_SAMPLES_FAILED: return kExitSolver;
        default: return kExitConfig;
    }
}

void check(rmss_status s) {
    if (s != RMSS_OK) throw Failure{exit_code(s), rmss_last_error()};
}

[[noreturn]] void config_error(const std::string& what) { throw Failure{kExitConfig, what}; }

struct CString {
    char* p = nullptr;
    ~CString() { rmss_string_free(p); }
    std::string str() const { return p ? std::string(p) : std::string(); }
};

struct CaseHandle {
    rmss_case* p = nullptr;
    ~CaseHandle() { rmss_case_free(p); }
};

void write_atomic(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) config_error("cannot write " + tmp.string());
        out << content;
        if (!out.flush()) config_error("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) config_error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) config_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double parse_number(const std::string& text, const std::string& flag) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
        config_error(flag + ": not a number: '" + text + "'");
    return v;
}

/// "2%" -> (0.02, true); "0.01" -> (0.01, false)
std::pair<double, bool> parse_spread(std::string text, const std::string& flag) {
    const bool pct = !text.empty() && text.back() == '%';
    if (pct) text.pop_back();
    const double v = parse_number(text, flag);
    if (!(v >= 0.0)) config_error(flag + " must be >= 0");
    return {pct ? v / 100.0 : v, pct};
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, sep)) out.push_back(item);
    return out;
}

/// Flags shared by every subcommand that builds a parameter model.
struct ModelArgs {
    std::string case_path;
    std::string essential = "all";
    std::string metrics = "auto";
    std::string axes = "P";
    std::string sigma_p = "2%";
    std::string sigma_q = "2%";
    std::string correlation;
    std::optional<std::uint64_t> seed;
    double tolerance = 1e-8;
    int max_iter = 50;
    std::string out = "rmss_out";

    // storage the rmss_config points into
    std::vector<int> metric_buses;
    std::vector<double> correlation_values;
    std::vector<double> sigma_c_values;
};

void add_model_options(CLI::App* app, ModelArgs& a) {
    app->add_option("--case", a.case_path, "MATPOWER case file")->required();
    app->add_option("--essential", a.essential, "all | all-solar | all-wind | all-renewable | id list")
        ->capture_default_str();
    app->add_option("--metrics", a.metrics, "auto (PQ buses with nonzero injection) or bus ids, comma separated")
        ->capture_default_str();
    app->add_option("--axes", a.axes, "P | Q | PQ")->capture_default_str();
    app->add_option("--sigma-p", a.sigma_p, "active-power stdev, '2%' of dispatch or pu")->capture_default_str();
    app->add_option("--sigma-q", a.sigma_q, "reactive-power stdev, '2%' of dispatch or pu")->capture_default_str();
    app->add_option("--correlation", a.correlation, "CSV correlation matrix of the parameters");
    app->add_option("--seed", a.seed, "random seed (falls back to RMSS_SEED, then 1)");
    app->add_option("--pf-tol", a.tolerance, "Newton mismatch tolerance (pu)")->capture_default_str();
    app->add_option("--pf-max-iter", a.max_iter, "Newton iteration limit")->capture_default_str();
    app->add_option("--out", a.out, "output directory")->capture_default_str();
}

std::uint64_t resolve_seed(const ModelArgs& a) {
    if (a.seed) return *a.seed;
    if (const char* env = std::getenv("RMSS_SEED")) {
        std::uint64_t v = 0;
        const std::string s(env);
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) config_error("RMSS_SEED is not an integer");
        return v;
    }
    return 1;
}

void fill_model(ModelArgs& a, rmss_config& c) {
    if (a.axes == "P") {
        c.include_p = 1;
        c.include_q = 0;
    } else if (a.axes == "Q") {
        c.include_p = 0;
        c.include_q = 1;
    } else if (a.axes == "PQ") {
        c.include_p = 1;
        c.include_q = 1;
    } else {
        config_error("--axes must be P, Q or PQ");
    }
    auto [sp, sp_frac] = parse_spread(a.sigma_p, "--sigma-p");
    auto [sq, sq_frac] = parse_spread(a.sigma_q, "--sigma-q");
    c.sigma_p = sp;
    c.sigma_p_is_fraction = sp_frac;
    c.sigma_q = sq;
    c.sigma_q_is_fraction = sq_frac;

    if (a.metrics != "auto") {
        for (const auto& t : split(a.metrics, ',')) {
            if (t.empty()) continue;
            a.metric_buses.push_back(static_cast<int>(parse_number(t, "--metrics")));
        }
        if (a.metric_buses.empty()) config_error("--metrics lists no bus");
        c.metric_buses = a.metric_buses.data();
        c.metric_count = a.metric_buses.size();
    }
    if (!a.correlation.empty()) {
        double* values = nullptr;
        std::size_t rows = 0;
        std::size_t cols = 0;
        check(rmss_matrix_csv_load(a.correlation.c_str(), &values, &rows, &cols));
        a.correlation_values.assign(values, values + rows * cols);
        rmss_doubles_free(values);
        if (rows != cols) config_error("--correlation matrix is not square");
        c.correlation = a.correlation_values.data();
        c.correlation_dim = rows;
    }
    c.seed = resolve_seed(a);
    c.pf_tolerance = a.tolerance;
    c.pf_max_iter = a.max_iter;
}

void load_case(const ModelArgs& a, CaseHandle& h) {
    if (!fs::exists(a.case_path)) config_error("case file not found: " + a.case_path);
    check(rmss_case_load(a.case_path.c_str(), &h.p));
    check(rmss_case_tag_essential(h.p, a.essential.c_str()));
}

fs::path prepare_out(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) config_error("cannot create output directory " + dir + ": " + ec.message());
    return fs::path(dir);
}

json config_echo(const ModelArgs& a, const rmss_config& c) {
    return {{"case", a.case_path},
            {"essential", a.essential},
            {"metrics", a.metrics},
            {"axes", a.axes},
            {"sigma_p", a.sigma_p},
            {"sigma_q", a.sigma_q},
            {"correlation", a.correlation},
            {"seed", c.seed},
            {"pf_tolerance", c.pf_tolerance},
            {"pf_max_iter", c.pf_max_iter}};
}

void write_manifest(const fs::path& dir, const std::string& command, const std::vector<std::string>& argv,
                    json config, const std::vector<std::string>& outputs) {
    json m = {{"command", command},
              {"argv", argv},
              {"rmss_version", rmss_version()},
              {"config", std::move(config)},
              {"outputs", outputs}};
    write_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

struct RunArgs {
    std::string rho = "0.975";
    std::string sigma_c;
    std::string sweep;
    std::string limits = "case";
    double threshold = 0.02;
    bool analysis_phase = false;
};

/// --sigma-c: "1%" (fraction of nominal), "0.004" (pu), "linear" or "linear:k" (k * linearized stdev).
/// --sweep: lo:hi:count[:log|lin], percentages select fractions of nominal.
void fill_sigma_c(const RunArgs& r, ModelArgs& a, rmss_config& c) {
    if (!r.sigma_c.empty() && !r.sweep.empty()) config_error("--sigma-c and --sweep are mutually exclusive");
    if (!r.sigma_c.empty()) {
        if (r.sigma_c.rfind("linear", 0) == 0) {
            c.sigma_c_mode = RMSS_SIGMA_C_LINEARIZED;
            const std::string rest = r.sigma_c.substr(6);
            double k = 1.0;
            if (!rest.empty()) {
                if (rest.front() != ':') config_error("--sigma-c: expected linear or linear:<k>");
                k = parse_number(rest.substr(1), "--sigma-c");
            }
            if (!(k >= 0.0)) config_error("--sigma-c multiplier must be >= 0");
            a.sigma_c_values = {k};
        } else {
            auto [v, frac] = parse_spread(r.sigma_c, "--sigma-c");
            c.sigma_c_mode = frac ? RMSS_SIGMA_C_FRACTION : RMSS_SIGMA_C_ABSOLUTE;
            a.sigma_c_values = {v};
        }
    } else if (!r.sweep.empty()) {
        const auto parts = split(r.sweep, ':');
        if (parts.size() != 3 && parts.size() != 4) config_error("--sweep expects lo:hi:count[:log|lin]");
        auto [lo, lo_frac] = parse_spread(parts[0], "--sweep");
        auto [hi, hi_frac] = parse_spread(parts[1], "--sweep");
        if (lo_frac != hi_frac) config_error("--sweep endpoints must both be percentages or both pu");
        const double count_d = parse_number(parts[2], "--sweep");
        if (count_d < 1 || count_d != static_cast<double>(static_cast<long>(count_d)))
            config_error("--sweep count must be a positive integer");
        const auto count = static_cast<std::size_t>(count_d);
        const std::string spacing = parts.size() == 4 ? parts[3] : "log";
        if (spacing != "log" && spacing != "lin") config_error("--sweep spacing must be log or lin");
        if (!(lo > 0.0) || !(hi > lo) || count < 2) {
            if (!(count == 1 && lo == hi && lo > 0.0)) config_error("--sweep needs 0 < lo < hi and count >= 2");
        }
        a.sigma_c_values.clear();
        for (std::size_t k = 0; k < count; ++k) {
            const double t = count == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(count - 1);
            double v = spacing == "log" ? lo * std::pow(hi / lo, t) : lo + (hi - lo) * t;
            if (k + 1 == count) v = hi;
            a.sigma_c_values.push_back(v);
        }
        c.sigma_c_mode = lo_frac ? RMSS_SIGMA_C_FRACTION : RMSS_SIGMA_C_ABSOLUTE;
    }
    if (!a.sigma_c_values.empty()) {
        c.sigma_c = a.sigma_c_values.data();
        c.sigma_c_count = a.sigma_c_values.size();
    }
    c.rho = parse_number(r.rho, "--rho");
    if (!(c.rho > 0.0 && c.rho < 1.0)) config_error("--rho must lie in (0, 1)");
    if (r.limits == "case") {
        c.limit_band = 0.0;
    } else if (r.limits.rfind("band:", 0) == 0) {
        auto [band, frac] = parse_spread(r.limits.substr(5), "--limits");
        if (!frac && band >= 1.0) config_error("--limits band must be a fraction below 1 or a percentage");
        if (!(band > 0.0)) config_error("--limits band must be > 0");
        c.limit_band = band;
    } else {
        config_error("--limits must be 'case' or 'band:<x>%'");
    }
    if (!(r.threshold > 0.0)) config_error("--threshold must be > 0");
    c.threshold = r.threshold;
    c.analysis_phase = r.analysis_phase;
}

int cmd_run(ModelArgs& a, const RunArgs& r, const std::vector<std::string>& argv) {
    rmss_config c;
    rmss_config_init(&c);
    fill_model(a, c);
    fill_sigma_c(r, a, c);
    CaseHandle h;
    load_case(a, h);
    const fs::path dir = prepare_out(a.out);

    rmss_report* raw = nullptr;
    check(rmss_run(h.p, &c, &raw));
    std::unique_ptr<rmss_report, void (*)(rmss_report*)> rep(raw, rmss_report_free);

    CString json_text, viol, worst, sens;
    check(rmss_report_json(rep.get(), &json_text.p));
    check(rmss_report_violations_csv(rep.get(), &viol.p));
    check(rmss_report_worst_violator_csv(rep.get(), &worst.p));
    check(rmss_report_sensitivity_csv(rep.get(), &sens.p));
    write_atomic(dir / "rmss_report.json", json_text.str());
    write_atomic(dir / "violations.csv", viol.str());
    write_atomic(dir / "worst_violator.csv", worst.str());
    write_atomic(dir / "sensitivity.csv", sens.str());

    json cfg = config_echo(a, c);
    cfg["rho"] = c.rho;
    cfg["sigma_c"] = r.sigma_c;
    cfg["sweep"] = r.sweep;
    cfg["sigma_c_values"] = a.sigma_c_values;
    cfg["limits"] = r.limits;
    cfg["threshold"] = c.threshold;
    cfg["analysis_phase"] = r.analysis_phase;
    write_manifest(dir, "run", argv, cfg,
                   {"rmss_report.json", "violations.csv", "worst_violator.csv", "sensitivity.csv"});

    double runtime = 0.0;
    check(rmss_report_runtime(rep.get(), &runtime));
    std::cout << "rmss: wrote " << (dir / "rmss_report.json").string() << " (" << runtime << " s)\n";
    return kExitOk;
}

struct McArgs {
    long long samples = 10000;
    unsigned workers = 1;
    std::string ci = "percentile";
    bool samples_csv = false;
};

int cmd_mc(ModelArgs& a, const McArgs& m, const std::vector<std::string>& argv) {
    rmss_config c;
    rmss_config_init(&c);
    fill_model(a, c);
    if (m.samples <= 0) config_error("--samples must be >= 1");
    if (m.workers == 0) config_error("--workers must be >= 1");
    c.samples = static_cast<std::size_t>(m.samples);
    c.workers = m.workers;
    if (m.ci == "percentile")
        c.ci = RMSS_CI_PERCENTILE;
    else if (m.ci == "mean")
        c.ci = RMSS_CI_MEAN;
    else
        config_error("--ci must be percentile or mean");
    c.keep_samples = m.samples_csv;
    CaseHandle h;
    load_case(a, h);
    const fs::path dir = prepare_out(a.out);

    rmss_mc_report* raw = nullptr;
    check(rmss_run_mc(h.p, &c, &raw));
    std::unique_ptr<rmss_mc_report, void (*)(rmss_mc_report*)> rep(raw, rmss_mc_report_free);

    std::vector<std::string> outputs = {"mc_report.json"};
    CString json_text;
    check(rmss_mc_report_json(rep.get(), &json_text.p));
    write_atomic(dir / "mc_report.json", json_text.str());
    if (m.samples_csv) {
        CString csv;
        check(rmss_mc_report_samples_csv(rep.get(), &csv.p));
        write_atomic(dir / "mc_samples.csv", csv.str());
        outputs.push_back("mc_samples.csv");
    }
    json cfg = config_echo(a, c);
    cfg["samples"] = c.samples;
    cfg["workers"] = c.workers;
    cfg["ci"] = m.ci;
    write_manifest(dir, "mc", argv, cfg, outputs);
    std::cout << "rmss: wrote " << (dir / "mc_report.json").string() << "\n";
    return kExitOk;
}

int cmd_compare(const std::string& rmss_path, const std::string& mc_path, const std::string& out,
                const std::vector<std::string>& argv) {
    const std::string rj = read_file(rmss_path);
    const std::string mj = read_file(mc_path);
    CString cmp, table;
    check(rmss_compare_json(rj.c_str(), mj.c_str(), &cmp.p, &table.p));
    const fs::path dir = prepare_out(out);
    write_atomic(dir / "comparison.json", cmp.str());
    write_manifest(dir, "compare", argv, {{"rmss", rmss_path}, {"mc", mc_path}}, {"comparison.json"});
    std::cout << table.str();
    return kExitOk;
}

int cmd_sens(ModelArgs& a, double threshold, const std::vector<std::string>& argv) {
    rmss_config c;
    rmss_config_init(&c);
    fill_model(a, c);
    if (!(threshold > 0.0)) config_error("--threshold must be > 0");
    c.threshold = threshold;
    CaseHandle h;
    load_case(a, h);
    const fs::path dir = prepare_out(a.out);
    CString csv;
    check(rmss_sensitivities_csv(h.p, &c, &csv.p));
    write_atomic(dir / "sensitivity.csv", csv.str());
    json cfg = config_echo(a, c);
    cfg["threshold"] = threshold;
    write_manifest(dir, "sens", argv, cfg, {"sensitivity.csv"});
    std::cout << csv.str();
    return kExitOk;
}

int cmd_validate(const std::string& case_path, const std::string& essential) {
    if (!fs::exists(case_path)) config_error("case file not found: " + case_path);
    CaseHandle h;
    check(rmss_case_load(case_path.c_str(), &h.p));
    if (!essential.empty()) check(rmss_case_tag_essential(h.p, essential.c_str()));
    CString out;
    check(rmss_case_validate_json(h.p, &out.p));
    std::cout << out.str();
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv, argv + argc);

    CLI::App app{"Risk-managed steady-state analysis of power grids"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(rmss_version()));

    ModelArgs run_model, mc_model, sens_model;
    RunArgs run_args;
    McArgs mc_args;

    auto* run = app.add_subcommand("run", "worst-case bounds and violation counts");
    add_model_options(run, run_model);
    run->add_option("--rho", run_args.rho, "one-sided probability of each bound")->capture_default_str();
    run->add_option("--sigma-c", run_args.sigma_c, "known metric stdev: 1% | 0.004 | linear[:k]");
    run->add_option("--sweep", run_args.sweep, "sigma_c sweep lo:hi:count[:log|lin] (default 0.1%:5%:20)");
    run->add_option("--limits", run_args.limits, "case | band:2%")->capture_default_str();
    run->add_option("--threshold", run_args.threshold, "nonlinearity flag threshold")->capture_default_str();
    run->add_flag("--analysis-phase", run_args.analysis_phase, "re-simulate at every worst-case vector");

    auto* mc = app.add_subcommand("mc", "Monte Carlo power-flow statistics");
    add_model_options(mc, mc_model);
    mc->add_option("--samples", mc_args.samples, "sample count")->capture_default_str();
    mc->add_option("--workers", mc_args.workers, "worker threads")->capture_default_str();
    mc->add_option("--ci", mc_args.ci, "percentile | mean")->capture_default_str();
    mc->add_flag("--samples-csv", mc_args.samples_csv, "also write per-sample metrics");

    std::string rmss_path, mc_path, cmp_out = "rmss_out";
    auto* cmp = app.add_subcommand("compare", "MAE of RMSS bounds against Monte Carlo intervals");
    cmp->add_option("--rmss", rmss_path, "rmss_report.json")->required();
    cmp->add_option("--mc", mc_path, "mc_report.json")->required();
    cmp->add_option("--out", cmp_out, "output directory")->capture_default_str();

    double sens_threshold = 0.02;
    auto* sens = app.add_subcommand("sens", "hybrid sensitivities at the nominal operating point");
    add_model_options(sens, sens_model);
    sens->add_option("--threshold", sens_threshold, "nonlinearity flag threshold")->capture_default_str();

    std::string validate_case, validate_essential;
    auto* val = app.add_subcommand("validate", "parse and validate a case");
    val->add_option("--case", validate_case, "MATPOWER case file")->required();
    val->add_option("--essential", validate_essential, "optional essential selector to apply");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*run) return cmd_run(run_model, run_args, args);
        if (*mc) return cmd_mc(mc_model, mc_args, args);
        if (*cmp) return cmd_compare(rmss_path, mc_path, cmp_out, args);
        if (*sens) return cmd_sens(sens_model, sens_threshold, args);
        if (*val) return cmd_validate(validate_case, validate_essential);
    } catch (const Failure& f) {
        std::cerr << "rmss: error: " << f.message << "\n";
        return f.code;
    } catch (const std::exception& e) {
        std::cerr << "rmss: error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}
