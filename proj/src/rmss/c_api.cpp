#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include "rmss/errors.hpp"
#include "rmss/montecarlo.hpp"
#include "rmss/report.hpp"
#include "rmss/rmss.h"
#include "rmss/worstcase.hpp"

struct rmss_case {
    rmss::GridCase grid;
};

struct rmss_report {
    rmss::RmssReport report;
};

struct rmss_mc_report {
    rmss::McReport report;
};

namespace {

thread_local std::string last_error;

rmss_status status_of(rmss::ErrorCode code) {
    using rmss::ErrorCode;
    switch (code) {
        case ErrorCode::Parse: return RMSS_ERR_PARSE;
        case ErrorCode::Schema: return RMSS_ERR_SCHEMA;
        case ErrorCode::Topology: return RMSS_ERR_TOPOLOGY;
        case ErrorCode::EmptySelection: return RMSS_ERR_EMPTY_SELECTION;
        case ErrorCode::InvalidArgument: return RMSS_ERR_INVALID_ARGUMENT;
        case ErrorCode::Precondition: return RMSS_ERR_PRECONDITION;
        case ErrorCode::UnknownBus: return RMSS_ERR_UNKNOWN_BUS;
        case ErrorCode::NonConvergence: return RMSS_ERR_NON_CONVERGENCE;
        case ErrorCode::JacobianSingular: return RMSS_ERR_JACOBIAN_SINGULAR;
        case ErrorCode::NotPsd: return RMSS_ERR_NOT_PSD;
        case ErrorCode::DegenerateDirection: return RMSS_ERR_DEGENERATE_DIRECTION;
        case ErrorCode::ZeroStep: return RMSS_ERR_ZERO_STEP;
        case ErrorCode::ModelEvaluation: return RMSS_ERR_MODEL_EVALUATION;
        case ErrorCode::AllSamplesFailed: return RMSS_ERR_ALL_SAMPLES_FAILED;
        case ErrorCode::MissingLimits: return RMSS_ERR_MISSING_LIMITS;
        case ErrorCode::DimensionMismatch: return RMSS_ERR_DIMENSION_MISMATCH;
        case ErrorCode::Io: return RMSS_ERR_IO;
    }
    return RMSS_ERR_INTERNAL;
}

template <class F>
rmss_status guarded(F&& body) {
    try {
        last_error.clear();
        body();
        return RMSS_OK;
    } catch (const rmss::Error& e) {
        last_error = std::string(rmss::to_string(e.code())) + ": " + e.what();
        return status_of(e.code());
    } catch (const std::bad_alloc&) {
        last_error = "out of memory";
    } catch (const std::exception& e) {
        last_error = e.what();
    } catch (...) {
        last_error = "unknown failure";
    }
    return RMSS_ERR_INTERNAL;
}

void require(const void* p, const char* what) {
    if (!p) throw rmss::InvalidArgument(std::string(what) + " is null");
}

char* dup(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

rmss::StochasticParameterSet parameters(const rmss::GridCase& grid, const rmss_config& c) {
    rmss::ParameterOptions po;
    po.include_p = c.include_p != 0;
    po.include_q = c.include_q != 0;
    po.sigma_p = {c.sigma_p, c.sigma_p_is_fraction != 0};
    po.sigma_q = {c.sigma_q, c.sigma_q_is_fraction != 0};
    if (c.correlation) {
        const auto d = static_cast<Eigen::Index>(c.correlation_dim);
        Eigen::MatrixXd r(d, d);
        for (Eigen::Index i = 0; i < d; ++i)
            for (Eigen::Index k = 0; k < d; ++k) r(i, k) = c.correlation[i * d + k];
        po.correlation = r;
    }
    return rmss::make_parameter_set(grid, po);
}

rmss::MetricSpec metrics(const rmss::GridCase& grid, const rmss_config& c) {
    if (c.metric_buses) {
        if (c.metric_count == 0) throw rmss::EmptySelection("empty metric list");
        return rmss::MetricSpec::voltages({c.metric_buses, c.metric_count});
    }
    rmss::MetricSpec spec = rmss::nonzero_injection_pq_metrics(grid);
    if (spec.size() == 0) throw rmss::EmptySelection("case has no PQ bus with nonzero injection");
    return spec;
}

rmss::PowerFlowOptions power_flow(const rmss_config& c) {
    rmss::PowerFlowOptions pf;
    pf.tolerance = c.pf_tolerance;
    pf.max_iter = c.pf_max_iter;
    if (!(pf.tolerance > 0.0) || pf.max_iter < 1) throw rmss::InvalidArgument("invalid power-flow tolerance/iterations");
    return pf;
}

rmss::RmssOptions rmss_options(const rmss_config& c) {
    rmss::RmssOptions o;
    o.rho = c.rho;
    o.pf = power_flow(c);
    o.hybrid.threshold = c.threshold;
    o.hybrid.seed = c.seed;
    o.analysis_phase = c.analysis_phase != 0;
    if (c.limit_band > 0.0) o.limit_band = c.limit_band;
    if (c.sigma_c) {
        if (c.sigma_c_count == 0) throw rmss::InvalidArgument("sigma_c count is zero");
        o.sigma_c.values.assign(c.sigma_c, c.sigma_c + c.sigma_c_count);
    }
    switch (c.sigma_c_mode) {
        case RMSS_SIGMA_C_FRACTION: o.sigma_c.mode = rmss::SigmaCSpec::Mode::Fraction; break;
        case RMSS_SIGMA_C_ABSOLUTE: o.sigma_c.mode = rmss::SigmaCSpec::Mode::Absolute; break;
        case RMSS_SIGMA_C_LINEARIZED: o.sigma_c.mode = rmss::SigmaCSpec::Mode::Linearized; break;
        default: throw rmss::InvalidArgument("unknown sigma_c mode");
    }
    return o;
}

}  // namespace

extern "C" {

const char* rmss_version(void) { return "1.0.0"; }

const char* rmss_status_string(rmss_status status) {
    switch (status) {
        case RMSS_OK: return "ok";
        case RMSS_ERR_PARSE: return "ParseError";
        case RMSS_ERR_SCHEMA: return "SchemaError";
        case RMSS_ERR_TOPOLOGY: return "TopologyError";
        case RMSS_ERR_EMPTY_SELECTION: return "EmptySelection";
        case RMSS_ERR_INVALID_ARGUMENT: return "InvalidArgument";
        case RMSS_ERR_PRECONDITION: return "PreconditionError";
        case RMSS_ERR_UNKNOWN_BUS: return "UnknownBus";
        case RMSS_ERR_NON_CONVERGENCE: return "NonConvergence";
        case RMSS_ERR_JACOBIAN_SINGULAR: return "JacobianSingular";
        case RMSS_ERR_NOT_PSD: return "NotPSD";
        case RMSS_ERR_DEGENERATE_DIRECTION: return "DegenerateDirection";
        case RMSS_ERR_ZERO_STEP: return "ZeroStep";
        case RMSS_ERR_MODEL_EVALUATION: return "ModelEvaluationError";
        case RMSS_ERR_ALL_SAMPLES_FAILED: return "AllSamplesFailed";
        case RMSS_ERR_MISSING_LIMITS: return "MissingLimits";
        case RMSS_ERR_DIMENSION_MISMATCH: return "DimensionMismatch";
        case RMSS_ERR_IO: return "IoError";
        case RMSS_ERR_INTERNAL: return "InternalError";
    }
    return "unknown status";
}

const char* rmss_last_error(void) { return last_error.c_str(); }

void rmss_config_init(rmss_config* c) {
    if (!c) return;
    *c = rmss_config{};
    c->include_p = 1;
    c->include_q = 0;
    c->sigma_p = 0.02;
    c->sigma_p_is_fraction = 1;
    c->sigma_q = 0.02;
    c->sigma_q_is_fraction = 1;
    c->rho = 0.975;
    c->sigma_c_mode = RMSS_SIGMA_C_FRACTION;
    c->threshold = 0.02;
    c->samples = 10000;
    c->seed = 1;
    c->workers = 1;
    c->ci = RMSS_CI_PERCENTILE;
    c->pf_tolerance = 1e-8;
    c->pf_max_iter = 50;
}

rmss_status rmss_case_load(const char* path, rmss_case** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = new rmss_case{rmss::parse_case(path)};
    });
}

rmss_status rmss_case_load_text(const char* text, const char* name, rmss_case** out) {
    return guarded([&] {
        require(text, "text");
        require(out, "out");
        *out = new rmss_case{rmss::parse_case_text(text, name ? name : "case")};
    });
}

rmss_status rmss_case_tag_essential(rmss_case* grid, const char* selector) {
    return guarded([&] {
        require(grid, "case");
        require(selector, "selector");
        grid->grid = rmss::tag_essential(grid->grid, rmss::EssentialSelector::parse(selector));
    });
}

rmss_status rmss_case_validate_json(const rmss_case* grid, char** json) {
    return guarded([&] {
        require(grid, "case");
        require(json, "json");
        const rmss::ValidationReport v = rmss::validate_case(grid->grid);
        nlohmann::json issues = nlohmann::json::array();
        for (const auto& i : v.issues) issues.push_back({{"component", i.component}, {"message", i.message}});
        std::vector<std::string> notes = grid->grid.notes;
        notes.insert(notes.end(), v.notes.begin(), v.notes.end());
        std::size_t essential = 0;
        for (const auto& g : grid->grid.generators) essential += g.essential;
        for (const auto& l : grid->grid.loads) essential += l.essential;
        const nlohmann::json j = {{"case", grid->grid.name},
                                  {"ok", v.ok()},
                                  {"buses", grid->grid.buses.size()},
                                  {"branches", grid->grid.branches.size()},
                                  {"generators", grid->grid.generators.size()},
                                  {"loads", grid->grid.loads.size()},
                                  {"essential", essential},
                                  {"issues", issues},
                                  {"notes", notes}};
        *json = dup(j.dump(2) + "\n");
    });
}

rmss_status rmss_case_bus_count(const rmss_case* grid, size_t* count) {
    return guarded([&] {
        require(grid, "case");
        require(count, "count");
        *count = grid->grid.buses.size();
    });
}

void rmss_case_free(rmss_case* grid) { delete grid; }

rmss_status rmss_run(const rmss_case* grid, const rmss_config* config, rmss_report** out) {
    return guarded([&] {
        require(grid, "case");
        require(config, "config");
        require(out, "out");
        const rmss::StochasticParameterSet params = parameters(grid->grid, *config);
        const rmss::MetricSpec spec = metrics(grid->grid, *config);
        auto rep = std::make_unique<rmss_report>();
        rep->report = rmss::run_rmss(grid->grid, params, spec, rmss_options(*config));
        *out = rep.release();
    });
}

rmss_status rmss_report_json(const rmss_report* report, char** json) {
    return guarded([&] {
        require(report, "report");
        require(json, "json");
        *json = dup(rmss::to_json(report->report).dump(2) + "\n");
    });
}

rmss_status rmss_report_violations_csv(const rmss_report* report, char** csv) {
    return guarded([&] {
        require(report, "report");
        require(csv, "csv");
        *csv = dup(rmss::violations_csv(report->report));
    });
}

rmss_status rmss_report_worst_violator_csv(const rmss_report* report, char** csv) {
    return guarded([&] {
        require(report, "report");
        require(csv, "csv");
        *csv = dup(rmss::worst_violator_csv(report->report));
    });
}

rmss_status rmss_report_sensitivity_csv(const rmss_report* report, char** csv) {
    return guarded([&] {
        require(report, "report");
        require(csv, "csv");
        const auto& r = report->report;
        *csv = dup(rmss::sensitivity_csv(r.sensitivity, r.spec, r.params));
    });
}

rmss_status rmss_report_runtime(const rmss_report* report, double* seconds) {
    return guarded([&] {
        require(report, "report");
        require(seconds, "seconds");
        *seconds = report->report.runtime_s;
    });
}

void rmss_report_free(rmss_report* report) { delete report; }

rmss_status rmss_run_mc(const rmss_case* grid, const rmss_config* config, rmss_mc_report** out) {
    return guarded([&] {
        require(grid, "case");
        require(config, "config");
        require(out, "out");
        rmss::McOptions o;
        o.samples = config->samples;
        o.seed = config->seed;
        o.workers = config->workers;
        o.ci = config->ci == RMSS_CI_MEAN ? rmss::CiMode::MeanCi : rmss::CiMode::Percentile;
        o.pf = power_flow(*config);
        o.keep_samples = config->keep_samples != 0;
        const rmss::StochasticParameterSet params = parameters(grid->grid, *config);
        const rmss::MetricSpec spec = metrics(grid->grid, *config);
        auto rep = std::make_unique<rmss_mc_report>();
        rep->report = rmss::run_monte_carlo(grid->grid, params, spec, o);
        *out = rep.release();
    });
}

rmss_status rmss_mc_report_json(const rmss_mc_report* report, char** json) {
    return guarded([&] {
        require(report, "report");
        require(json, "json");
        *json = dup(rmss::to_json(report->report).dump(2) + "\n");
    });
}

rmss_status rmss_mc_report_samples_csv(const rmss_mc_report* report, char** csv) {
    return guarded([&] {
        require(report, "report");
        require(csv, "csv");
        *csv = dup(rmss::samples_csv(report->report));
    });
}

void rmss_mc_report_free(rmss_mc_report* report) { delete report; }

rmss_status rmss_sensitivities_csv(const rmss_case* grid, const rmss_config* config, char** csv) {
    return guarded([&] {
        require(grid, "case");
        require(config, "config");
        require(csv, "csv");
        const rmss::StochasticParameterSet params = parameters(grid->grid, *config);
        const rmss::MetricSpec spec = metrics(grid->grid, *config);
        const rmss::RmssOptions o = rmss_options(*config);
        const rmss::NetworkModel net(grid->grid);
        const rmss::PowerFlowSolution sol = rmss::solve_power_flow(net, net.nominal_injections(), o.pf);
        rmss::require_converged(sol);
        const rmss::SensitivityMatrix s = rmss::hybrid_sensitivities(net, sol, params, spec, o.pf, o.hybrid);
        *csv = dup(rmss::sensitivity_csv(s, spec, params));
    });
}

rmss_status rmss_compare_json(const char* rmss_json, const char* mc_json, char** comparison_json, char** table) {
    return guarded([&] {
        require(rmss_json, "rmss_json");
        require(mc_json, "mc_json");
        require(comparison_json, "comparison_json");
        nlohmann::json rj;
        nlohmann::json mj;
        try {
            rj = nlohmann::json::parse(rmss_json);
            mj = nlohmann::json::parse(mc_json);
        } catch (const nlohmann::json::exception& e) {
            throw rmss::SchemaError(std::string("report is not valid JSON: ") + e.what());
        }
        const rmss::ComparisonReport cmp =
            rmss::mae_compare(rmss::rmss_report_from_json(rj), rmss::mc_report_from_json(mj));
        std::string text = rmss::to_json(cmp).dump(2) + "\n";
        std::string tab = table ? rmss::comparison_table(cmp) : std::string();
        *comparison_json = dup(text);
        if (table) *table = dup(tab);
    });
}

rmss_status rmss_matrix_csv_load(const char* path, double** values, size_t* rows, size_t* cols) {
    return guarded([&] {
        require(path, "path");
        require(values, "values");
        require(rows, "rows");
        require(cols, "cols");
        const Eigen::MatrixXd m = rmss::read_matrix_csv(path);
        auto* out = static_cast<double*>(std::malloc(sizeof(double) * static_cast<std::size_t>(std::max<Eigen::Index>(m.size(), 1))));
        if (!out) throw std::bad_alloc();
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) out[r * m.cols() + c] = m(r, c);
        *values = out;
        *rows = static_cast<std::size_t>(m.rows());
        *cols = static_cast<std::size_t>(m.cols());
    });
}

void rmss_string_free(char* s) { std::free(s); }

void rmss_doubles_free(double* values) { std::free(values); }

}  // extern "C"
