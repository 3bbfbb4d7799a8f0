#include "rmss/parameters.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rmss/errors.hpp"

namespace rmss {

std::string ParameterEntry::id() const { return component + (axis == Axis::P ? ":P" : ":Q"); }

Eigen::VectorXd StochasticParameterSet::means() const {
    Eigen::VectorXd m(static_cast<Eigen::Index>(entries.size()));
    for (std::size_t j = 0; j < entries.size(); ++j) m[static_cast<Eigen::Index>(j)] = entries[j].mean;
    return m;
}

Eigen::VectorXd StochasticParameterSet::stdevs() const {
    Eigen::VectorXd s(static_cast<Eigen::Index>(entries.size()));
    for (std::size_t j = 0; j < entries.size(); ++j) s[static_cast<Eigen::Index>(j)] = entries[j].stdev;
    return s;
}

void StochasticParameterSet::validate() const {
    const auto d = static_cast<Eigen::Index>(entries.size());
    if (covariance.rows() != d || covariance.cols() != d)
        throw DimensionMismatch("covariance is " + std::to_string(covariance.rows()) + "x" +
                                std::to_string(covariance.cols()) + " for " + std::to_string(d) + " parameters");
    const double scale = std::max(1e-300, d > 0 ? covariance.diagonal().cwiseAbs().maxCoeff() : 1.0);
    for (Eigen::Index i = 0; i < d; ++i) {
        const double s = entries[static_cast<std::size_t>(i)].stdev;
        if (!(s >= 0.0)) throw InvalidArgument("parameter standard deviation must be >= 0");
        if (std::abs(covariance(i, i) - s * s) > 1e-12 * std::max(scale, s * s))
            throw InvalidArgument("covariance diagonal does not match stdev^2 for " +
                                  entries[static_cast<std::size_t>(i)].id());
        for (Eigen::Index k = 0; k < i; ++k)
            if (std::abs(covariance(i, k) - covariance(k, i)) > 1e-12 * scale)
                throw NotPsd("covariance is not symmetric");
    }
    if (d == 0) return;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(covariance);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() < -1e-12 * scale)
        throw NotPsd("covariance is not positive semidefinite");
}

Spread Spread::parse(std::string_view text) {
    std::string t(text);
    bool pct = !t.empty() && t.back() == '%';
    if (pct) t.pop_back();
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !(v >= 0.0) || !std::isfinite(v))
        throw InvalidArgument("invalid spread '" + std::string(text) + "' (expected e.g. 2% or 0.01)");
    return pct ? Spread{v / 100.0, true} : Spread{v, false};
}

StochasticParameterSet make_parameter_set(const GridCase& grid, const ParameterOptions& opts) {
    if (!opts.include_p && !opts.include_q) throw InvalidArgument("no parameter axis selected");
    StochasticParameterSet set;
    auto add = [&](const std::string& id, int bus, double p, double q) {
        if (opts.include_p) set.entries.push_back({id, Axis::P, bus, p, opts.sigma_p.resolve(p)});
        if (opts.include_q) set.entries.push_back({id, Axis::Q, bus, q, opts.sigma_q.resolve(q)});
    };
    for (const auto& g : grid.generators)
        if (g.essential) add(g.id, g.bus, g.p, g.q);
    for (const auto& l : grid.loads)
        if (l.essential) add(l.id, l.bus, l.p, l.q);
    if (set.entries.empty()) throw EmptySelection("no essential components tagged");

    const Eigen::VectorXd sd = set.stdevs();
    if (opts.correlation) {
        const Eigen::MatrixXd& r = *opts.correlation;
        if (r.rows() != sd.size() || r.cols() != sd.size())
            throw DimensionMismatch("correlation matrix is " + std::to_string(r.rows()) + "x" +
                                    std::to_string(r.cols()) + ", expected " + std::to_string(sd.size()));
        for (Eigen::Index i = 0; i < r.rows(); ++i)
            if (std::abs(r(i, i) - 1.0) > 1e-12) throw InvalidArgument("correlation diagonal must be 1");
        set.covariance = sd.asDiagonal() * r * sd.asDiagonal();
        for (Eigen::Index i = 0; i < sd.size(); ++i) set.covariance(i, i) = sd[i] * sd[i];
    } else {
        set.covariance = sd.cwiseProduct(sd).asDiagonal();
    }
    set.validate();
    return set;
}

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open matrix file " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cell.erase(0, cell.find_first_not_of(" \t"));
            cell.erase(cell.find_last_not_of(" \t\r") + 1);
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size())
                throw ParseError(lineno, "bad matrix entry '" + cell + "' in " + path.string());
            row.push_back(v);
        }
        if (!rows.empty() && row.size() != rows.front().size()) throw ParseError(lineno, "ragged matrix row");
        rows.push_back(std::move(row));
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows.empty() ? 0 : rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
}

ParameterBinding::ParameterBinding(const NetworkModel& net, const StochasticParameterSet& params)
    : net_(&net), means_(params.means()) {
    for (const auto& e : params.entries) {
        bus_index_.push_back(net.index_of(e.bus));
        axis_.push_back(e.axis);
    }
}

Injections ParameterBinding::apply(const Eigen::VectorXd& values) const {
    if (values.size() != means_.size()) throw DimensionMismatch("parameter vector length mismatch");
    Injections inj = net_->nominal_injections();
    for (std::size_t j = 0; j < bus_index_.size(); ++j) {
        const double delta = values[static_cast<Eigen::Index>(j)] - means_[static_cast<Eigen::Index>(j)];
        (axis_[j] == Axis::P ? inj.p : inj.q)[bus_index_[j]] += delta;
    }
    return inj;
}

}  // namespace rmss
