#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rmss {

enum class BusKind { Slack, PV, PQ };

const char* to_string(BusKind kind);

struct Bus {
    int id = 0;
    BusKind kind = BusKind::PQ;
    double vm = 1.0;              // case-file voltage magnitude (pu); setpoint for Slack/PV
    double va = 0.0;              // case-file angle (rad); setpoint for Slack
    std::optional<double> v_max;  // c_MAX of the voltage metric at this bus
    std::optional<double> v_min;  // c_MIN
    double gs = 0.0;              // shunt conductance (pu on base_mva)
    double bs = 0.0;              // shunt susceptance (pu on base_mva)

    double v_setpoint() const { return vm; }
    double angle_setpoint() const { return va; }

    bool operator==(const Bus&) const = default;
};

struct Branch {
    int from_bus = 0;
    int to_bus = 0;
    double r = 0.0;
    double x = 0.0;
    double b_shunt = 0.0;      // total line charging
    double tap = 1.0;          // off-nominal turns ratio at the from side
    double phase_shift = 0.0;  // rad

    bool operator==(const Branch&) const = default;
};

/// Generator injection. `id` is "g<row>" with <row> the 1-based row in the gen table.
struct Generator {
    std::string id;
    int bus = 0;
    double p = 0.0;  // pu
    double q = 0.0;  // pu
    bool essential = false;
    std::string fuel_tag;

    bool operator==(const Generator&) const = default;
};

/// Bus demand stored as a negative injection. `id` is "l<bus>".
struct Load {
    std::string id;
    int bus = 0;
    double p = 0.0;  // pu, <= 0 for consuming loads
    double q = 0.0;
    bool essential = false;

    bool operator==(const Load&) const = default;
};

/// Immutable network description. Out-of-service branches/generators are already dropped.
struct GridCase {
    std::string name;
    double base_mva = 100.0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Generator> generators;
    std::vector<Load> loads;
    /// Normalization notes produced while ingesting or tagging (e.g. PV->PQ re-modeling).
    std::vector<std::string> notes;

    const Bus& bus(int id) const;
    std::optional<std::size_t> find_bus(int id) const;
    const Bus& slack() const;

    bool operator==(const GridCase&) const = default;
};

enum class CaseFormat { MatpowerM };

GridCase parse_case(const std::filesystem::path& path, CaseFormat format = CaseFormat::MatpowerM);
GridCase parse_case_text(std::string_view text, std::string name = "case");

/// MATPOWER text that parse_case_text reads back into an equivalent case.
std::string serialize_case(const GridCase& grid);

struct ValidationIssue {
    std::string component;  // "bus 3", "branch 2-5", "g4", ...
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;
    std::vector<std::string> notes;  // informational, e.g. re-modeled buses

    bool ok() const { return issues.empty(); }
};

ValidationReport validate_case(const GridCase& grid);

struct EssentialSelector {
    enum class Kind { All, AllSolar, AllWind, AllRenewable, Explicit };
    Kind kind = Kind::AllRenewable;
    std::vector<std::string> ids;

    /// "all" (every generator and load on a PQ bus), "all-solar", "all-wind", "all-renewable",
    /// or a comma list like "g7,l5".
    static EssentialSelector parse(std::string_view text);
};

/// Returns a copy with `essential` set exactly per the selector. Essential generators on
/// PV buses turn the bus into PQ at the generator dispatch; each such change is noted.
GridCase tag_essential(const GridCase& grid, const EssentialSelector& selector);

/// Copy of `grid` whose voltage limits are vm*(1 -/+ band) at every bus.
GridCase with_band_limits(const GridCase& grid, double band);

}  // namespace rmss
