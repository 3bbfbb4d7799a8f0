#pragma once

#include "json.hpp"
#include <string>

#include "rmss/montecarlo.hpp"
#include "rmss/sensitivity.hpp"
#include "rmss/worstcase.hpp"

namespace rmss {

nlohmann::json to_json(const RmssReport& rep);
RmssReport rmss_report_from_json(const nlohmann::json& j);

/// {"case", "statistics": {...}, "timing": {...}}. The statistics block is a pure function of
/// (case, parameters, seed, samples, CI mode).
nlohmann::json to_json(const McReport& rep);
McReport mc_report_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ComparisonReport& rep);

/// sigma_c,ub_violations,lb_violations,total
std::string violations_csv(const RmssReport& rep);
/// sigma_c,bus,c_nom,c_wc_ub,c_wc_lb,v_max,v_min for the overall worst violator.
std::string worst_violator_csv(const RmssReport& rep);
/// metric,method,disagreement,<parameter ids...>
std::string sensitivity_csv(const SensitivityMatrix& s, const MetricSpec& spec, const StochasticParameterSet& params);
/// sample,<metric labels...>; needs keep_samples.
std::string samples_csv(const McReport& rep);

/// Human-readable MAE table.
std::string comparison_table(const ComparisonReport& rep);

}  // namespace rmss
