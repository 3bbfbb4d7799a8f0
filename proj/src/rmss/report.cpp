#include "rmss/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "rmss/errors.hpp"

namespace rmss {

using nlohmann::json;

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json vec(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Eigen::VectorXd to_vec(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

double num_or_nan(const json& j) { return j.is_null() ? std::nan("") : j.get<double>(); }

json params_json(const StochasticParameterSet& p) {
    json arr = json::array();
    for (const auto& e : p.entries)
        arr.push_back({{"id", e.id()},
                       {"component", e.component},
                       {"axis", e.axis == Axis::P ? "P" : "Q"},
                       {"bus", e.bus},
                       {"mean", e.mean},
                       {"stdev", e.stdev}});
    return arr;
}

json covariance_json(const StochasticParameterSet& p) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < p.covariance.rows(); ++r) rows.push_back(vec(p.covariance.row(r).transpose()));
    return rows;
}

StochasticParameterSet params_from(const json& entries, const json& cov) {
    StochasticParameterSet p;
    for (const auto& e : entries) {
        ParameterEntry pe;
        pe.component = e.at("component").get<std::string>();
        pe.axis = e.at("axis").get<std::string>() == "Q" ? Axis::Q : Axis::P;
        pe.bus = e.at("bus").get<int>();
        pe.mean = e.at("mean").get<double>();
        pe.stdev = e.at("stdev").get<double>();
        p.entries.push_back(pe);
    }
    const auto d = static_cast<Eigen::Index>(p.entries.size());
    p.covariance = Eigen::MatrixXd::Zero(d, d);
    if (cov.is_array()) {
        if (static_cast<Eigen::Index>(cov.size()) != d) throw SchemaError("covariance has the wrong size");
        for (Eigen::Index r = 0; r < d; ++r) {
            const Eigen::VectorXd row = to_vec(cov[static_cast<std::size_t>(r)]);
            if (row.size() != d) throw SchemaError("covariance row has the wrong length");
            p.covariance.row(r) = row.transpose();
        }
    }
    return p;
}

MetricEntry metric_from(const json& m) { return {MetricKind::BusVoltageMagnitude, m.at("bus").get<int>()}; }

SigmaCSpec::Mode mode_from(const std::string& s) {
    if (s == "absolute") return SigmaCSpec::Mode::Absolute;
    if (s == "linearized") return SigmaCSpec::Mode::Linearized;
    if (s == "fraction") return SigmaCSpec::Mode::Fraction;
    throw SchemaError("unknown sigma_c mode '" + s + "'");
}

SensitivityMethod method_from(const std::string& s) {
    if (s == "adjoint") return SensitivityMethod::Adjoint;
    if (s == "finite-difference") return SensitivityMethod::FiniteDifference;
    if (s == "sobol-rescaled") return SensitivityMethod::SobolRescaled;
    throw SchemaError("unknown sensitivity method '" + s + "'");
}

json tallies_json(const std::map<int, BusTally>& t) {
    json arr = json::array();
    for (const auto& [bus, tally] : t) arr.push_back({{"bus", bus}, {"ub", tally.ub}, {"lb", tally.lb}});
    return arr;
}

std::map<int, BusTally> tallies_from(const json& arr) {
    std::map<int, BusTally> t;
    for (const auto& e : arr) t[e.at("bus").get<int>()] = {e.at("ub").get<int>(), e.at("lb").get<int>()};
    return t;
}

json optional_int(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }
std::optional<int> optional_int_from(const json& j) {
    return j.is_null() ? std::nullopt : std::optional<int>(j.get<int>());
}

}  // namespace

json to_json(const RmssReport& rep) {
    json metrics = json::array();
    for (std::size_t i = 0; i < rep.spec.size(); ++i) {
        const int bus = rep.spec.entries[i].bus;
        json m = {{"label", metric_label(rep.spec.entries[i])},
                  {"bus", bus},
                  {"c_nom", rep.c_nom[i]},
                  {"method", to_string(rep.sensitivity.method[i])},
                  {"disagreement", rep.sensitivity.disagreement[i]},
                  {"nonlinear", static_cast<bool>(rep.sensitivity.nonlinear[i])},
                  {"sensitivity", vec(rep.sensitivity.values.row(static_cast<Eigen::Index>(i)).transpose())}};
        if (rep.sensitivity.sobol[i]) m["sobol_first_order"] = vec(*rep.sensitivity.sobol[i]);
        if (auto it = rep.limits.find(bus); it != rep.limits.end()) {
            m["v_min"] = it->second.first;
            m["v_max"] = it->second.second;
        }
        metrics.push_back(std::move(m));
    }

    json sweep = json::array();
    for (const auto& p : rep.sweep) {
        json results = json::array();
        for (const auto& r : p.results) {
            json o = {{"bus", r.bus},
                      {"sigma_c", r.sigma_c},
                      {"c_nom", r.c_nom},
                      {"c_wc_ub", r.c_wc_ub},
                      {"c_wc_lb", r.c_wc_lb},
                      {"degenerate", r.degenerate},
                      {"ub_within_ci", r.ub_within_ci},
                      {"lb_within_ci", r.lb_within_ci}};
            o["e_wc_ub"] = r.e_wc_ub ? vec(*r.e_wc_ub) : json(nullptr);
            o["e_wc_lb"] = r.e_wc_lb ? vec(*r.e_wc_lb) : json(nullptr);
            if (r.simulated_ub) o["simulated_ub"] = *r.simulated_ub;
            if (r.simulated_lb) o["simulated_lb"] = *r.simulated_lb;
            results.push_back(std::move(o));
        }
        json records = json::array();
        for (const auto& v : p.violations.records)
            records.push_back({{"bus", v.bus}, {"bound", to_string(v.bound)}, {"margin", v.margin}});
        sweep.push_back({{"sigma_c", p.sigma_c},
                         {"violations",
                          {{"ub", p.violations.ub_total},
                           {"lb", p.violations.lb_total},
                           {"total", p.violations.total()},
                           {"worst_violator", optional_int(p.violations.worst_violator)},
                           {"per_bus", tallies_json(p.violations.per_bus)},
                           {"records", records}}},
                         {"results", results}});
    }

    return {{"case", rep.case_name},
            {"rho", rep.rho},
            {"sigma_c_mode", to_string(rep.sigma_c_mode)},
            {"parameters", params_json(rep.params)},
            {"covariance", covariance_json(rep.params)},
            {"metrics", metrics},
            {"linear_solves", rep.sensitivity.linear_solves},
            {"sweep", sweep},
            {"sweep_tallies", tallies_json(rep.sweep_tallies)},
            {"worst_violator", optional_int(rep.worst_violator)},
            {"log", rep.log},
            {"nominal_iterations", rep.nominal_iterations},
            {"runtime_s", rep.runtime_s}};
}

RmssReport rmss_report_from_json(const json& j) {
    try {
        RmssReport rep;
        rep.case_name = j.at("case").get<std::string>();
        rep.rho = j.at("rho").get<double>();
        rep.sigma_c_mode = mode_from(j.at("sigma_c_mode").get<std::string>());
        rep.params = params_from(j.at("parameters"), j.value("covariance", json()));

        const json& metrics = j.at("metrics");
        const auto m = static_cast<Eigen::Index>(metrics.size());
        const auto d = static_cast<Eigen::Index>(rep.params.size());
        rep.sensitivity.values = Eigen::MatrixXd::Zero(m, d);
        for (Eigen::Index i = 0; i < m; ++i) {
            const json& mj = metrics[static_cast<std::size_t>(i)];
            rep.spec.entries.push_back(metric_from(mj));
            rep.c_nom.push_back(mj.at("c_nom").get<double>());
            rep.sensitivity.method.push_back(method_from(mj.at("method").get<std::string>()));
            rep.sensitivity.disagreement.push_back(num_or_nan(mj.at("disagreement")));
            rep.sensitivity.nonlinear.push_back(mj.at("nonlinear").get<bool>());
            const Eigen::VectorXd row = to_vec(mj.at("sensitivity"));
            if (row.size() != d) throw SchemaError("sensitivity row length != parameter count");
            rep.sensitivity.values.row(i) = row.transpose();
            rep.sensitivity.sobol.push_back(mj.contains("sobol_first_order")
                                                ? std::optional<Eigen::VectorXd>(to_vec(mj["sobol_first_order"]))
                                                : std::nullopt);
            if (mj.contains("v_min") && mj.contains("v_max"))
                rep.limits[rep.spec.entries.back().bus] = {mj["v_min"].get<double>(), mj["v_max"].get<double>()};
        }
        rep.sensitivity.linear_solves = j.value("linear_solves", std::size_t{0});

        for (const auto& pj : j.at("sweep")) {
            SweepPoint p;
            p.sigma_c = pj.at("sigma_c").get<double>();
            for (const auto& o : pj.at("results")) {
                WorstCaseResult r;
                r.bus = o.at("bus").get<int>();
                r.sigma_c = o.at("sigma_c").get<double>();
                r.c_nom = o.at("c_nom").get<double>();
                r.c_wc_ub = o.at("c_wc_ub").get<double>();
                r.c_wc_lb = o.at("c_wc_lb").get<double>();
                r.degenerate = o.at("degenerate").get<bool>();
                r.ub_within_ci = o.value("ub_within_ci", true);
                r.lb_within_ci = o.value("lb_within_ci", true);
                if (!o.at("e_wc_ub").is_null()) r.e_wc_ub = to_vec(o["e_wc_ub"]);
                if (!o.at("e_wc_lb").is_null()) r.e_wc_lb = to_vec(o["e_wc_lb"]);
                if (o.contains("simulated_ub")) r.simulated_ub = o["simulated_ub"].get<double>();
                if (o.contains("simulated_lb")) r.simulated_lb = o["simulated_lb"].get<double>();
                p.results.push_back(std::move(r));
            }
            const json& v = pj.at("violations");
            p.violations.sigma_c = p.sigma_c;
            p.violations.ub_total = v.at("ub").get<int>();
            p.violations.lb_total = v.at("lb").get<int>();
            p.violations.worst_violator = optional_int_from(v.at("worst_violator"));
            p.violations.per_bus = tallies_from(v.at("per_bus"));
            for (const auto& rj : v.value("records", json::array()))
                p.violations.records.push_back({rj.at("bus").get<int>(),
                                                rj.at("bound").get<std::string>() == "LB" ? Bound::Lower : Bound::Upper,
                                                rj.at("margin").get<double>()});
            rep.sweep.push_back(std::move(p));
        }
        rep.sweep_tallies = tallies_from(j.at("sweep_tallies"));
        rep.worst_violator = optional_int_from(j.at("worst_violator"));
        rep.log = j.value("log", std::vector<std::string>{});
        rep.nominal_iterations = j.value("nominal_iterations", 0);
        rep.runtime_s = j.at("runtime_s").get<double>();
        return rep;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("malformed RMSS report: ") + e.what());
    }
}

json to_json(const McReport& rep) {
    json params = params_json(rep.params);
    for (std::size_t k = 0; k < rep.parameters.size(); ++k) {
        params[k]["ci_lb"] = rep.parameters[k].ci_lb;
        params[k]["ci_ub"] = rep.parameters[k].ci_ub;
    }
    json metrics = json::array();
    for (std::size_t i = 0; i < rep.metrics.size(); ++i) {
        const MetricStats& s = rep.metrics[i];
        metrics.push_back({{"label", metric_label(rep.spec.entries[i])},
                           {"bus", rep.spec.entries[i].bus},
                           {"c_nom", rep.c_nom[i]},
                           {"mean", s.mean},
                           {"stdev", s.stdev},
                           {"ci_lb", s.ci_lb},
                           {"ci_ub", s.ci_ub}});
    }
    return {{"case", rep.case_name},
            {"statistics",
             {{"seed", rep.seed},
              {"samples", rep.samples},
              {"converged", rep.converged},
              {"failed", rep.failed},
              {"failed_samples", rep.failed_samples},
              {"ci", to_string(rep.ci)},
              {"parameters", params},
              {"covariance", covariance_json(rep.params)},
              {"metrics", metrics}}},
            {"timing",
             {{"workers", rep.workers},
              {"total_runtime_s", rep.total_runtime_s},
              {"wall_time_s", rep.wall_time_s},
              {"mean_solve_s", rep.mean_solve_s},
              {"min_solve_s", rep.min_solve_s}}}};
}

McReport mc_report_from_json(const json& j) {
    try {
        McReport rep;
        rep.case_name = j.at("case").get<std::string>();
        const json& s = j.at("statistics");
        rep.seed = s.at("seed").get<std::uint64_t>();
        rep.samples = s.at("samples").get<std::size_t>();
        rep.converged = s.at("converged").get<std::size_t>();
        rep.failed = s.at("failed").get<std::size_t>();
        rep.failed_samples = s.value("failed_samples", std::vector<std::size_t>{});
        rep.ci = parse_ci_mode(s.at("ci").get<std::string>());
        rep.params = params_from(s.at("parameters"), s.value("covariance", json()));
        for (const auto& p : s.at("parameters"))
            rep.parameters.push_back({p.at("mean").get<double>(), p.at("stdev").get<double>(),
                                      p.at("ci_lb").get<double>(), p.at("ci_ub").get<double>()});
        for (const auto& m : s.at("metrics")) {
            rep.spec.entries.push_back(metric_from(m));
            rep.c_nom.push_back(m.at("c_nom").get<double>());
            rep.metrics.push_back({m.at("mean").get<double>(), m.at("stdev").get<double>(),
                                   m.at("ci_lb").get<double>(), m.at("ci_ub").get<double>()});
        }
        const json& t = j.at("timing");
        rep.workers = t.value("workers", 1u);
        rep.total_runtime_s = t.at("total_runtime_s").get<double>();
        rep.wall_time_s = t.value("wall_time_s", 0.0);
        rep.mean_solve_s = t.value("mean_solve_s", 0.0);
        rep.min_solve_s = t.value("min_solve_s", 0.0);
        return rep;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("malformed Monte Carlo report: ") + e.what());
    }
}

json to_json(const ComparisonReport& rep) {
    auto set = [](const MaeSet& s) {
        auto pair = [](double v) { return json{{"value", v}, {"percent", 100.0 * v}}; };
        return json{{"sigma_c", s.sigma_c},
                    {"c_ub", pair(s.c_ub)},
                    {"c_lb", pair(s.c_lb)},
                    {"e_ub", pair(s.e_ub)},
                    {"e_lb", pair(s.e_lb)}};
    };
    json per = json::array();
    for (const auto& s : rep.per_sigma) per.push_back(set(s));
    return {{"metrics", rep.metrics},
            {"parameters", rep.parameters},
            {"best_index", rep.best},
            {"mae", set(rep.mae)},
            {"per_sigma", per},
            {"rmss_runtime_s", rep.rmss_runtime_s},
            {"mc_runtime_s", rep.mc_runtime_s},
            {"speedup", rep.speedup},
            {"mc_failure_rate", rep.mc_failure_rate}};
}

std::string violations_csv(const RmssReport& rep) {
    std::ostringstream out;
    out << "sigma_c,ub_violations,lb_violations,total\n";
    for (const auto& p : rep.sweep)
        out << num(p.sigma_c) << ',' << p.violations.ub_total << ',' << p.violations.lb_total << ','
            << p.violations.total() << '\n';
    return out.str();
}

std::string worst_violator_csv(const RmssReport& rep) {
    std::ostringstream out;
    out << "sigma_c,bus,c_nom,c_wc_ub,c_wc_lb,v_max,v_min\n";
    if (!rep.worst_violator) return out.str();
    const int bus = *rep.worst_violator;
    const auto lim = rep.limits.find(bus);
    for (const auto& p : rep.sweep) {
        for (const auto& r : p.results) {
            if (r.bus != bus) continue;
            out << num(p.sigma_c) << ',' << bus << ',' << num(r.c_nom) << ',' << num(r.c_wc_ub) << ','
                << num(r.c_wc_lb) << ',' << (lim != rep.limits.end() ? num(lim->second.second) : "") << ','
                << (lim != rep.limits.end() ? num(lim->second.first) : "") << '\n';
            break;
        }
    }
    return out.str();
}

std::string sensitivity_csv(const SensitivityMatrix& s, const MetricSpec& spec, const StochasticParameterSet& params) {
    if (s.rows() != spec.size() || s.cols() != params.size())
        throw DimensionMismatch("sensitivity matrix shape does not match metrics x parameters");
    std::ostringstream out;
    out << "metric,method,disagreement";
    for (const auto& e : params.entries) out << ',' << e.id();
    out << '\n';
    for (std::size_t i = 0; i < s.rows(); ++i) {
        out << metric_label(spec.entries[i]) << ',' << to_string(s.method[i]) << ','
            << (std::isnan(s.disagreement[i]) ? std::string() : num(s.disagreement[i]));
        for (std::size_t j = 0; j < s.cols(); ++j)
            out << ',' << num(s.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
        out << '\n';
    }
    return out.str();
}

std::string samples_csv(const McReport& rep) {
    std::ostringstream out;
    out << "sample";
    for (const auto& m : rep.spec.entries) out << ',' << metric_label(m);
    out << '\n';
    for (Eigen::Index r = 0; r < rep.sample_metrics.rows(); ++r) {
        out << rep.sample_index[static_cast<std::size_t>(r)];
        for (Eigen::Index k = 0; k < rep.sample_metrics.cols(); ++k) out << ',' << num(rep.sample_metrics(r, k));
        out << '\n';
    }
    return out.str();
}

std::string comparison_table(const ComparisonReport& rep) {
    char line[160];
    std::string out;
    std::snprintf(line, sizeof line, "best sigma_c = %.6g (point %zu of %zu)\n", rep.mae.sigma_c, rep.best + 1,
                  rep.per_sigma.size());
    out += line;
    out += "bound   MAE (pu)       MAE (%)\n";
    const std::pair<const char*, double> rows[] = {
        {"c_UB", rep.mae.c_ub}, {"c_LB", rep.mae.c_lb}, {"E_UB", rep.mae.e_ub}, {"E_LB", rep.mae.e_lb}};
    for (const auto& [name, v] : rows) {
        std::snprintf(line, sizeof line, "%-7s %-14.6g %.4f\n", name, v, 100.0 * v);
        out += line;
    }
    std::snprintf(line, sizeof line, "runtime: monte carlo %.4g s, rmss %.4g s, speedup %.1fx\n", rep.mc_runtime_s,
                  rep.rmss_runtime_s, rep.speedup);
    out += line;
    return out;
}

}  // namespace rmss
