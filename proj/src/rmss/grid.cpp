#include "rmss/grid.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <unordered_map>

#include "rmss/errors.hpp"

namespace rmss {

const char* to_string(BusKind kind) {
    switch (kind) {
        case BusKind::Slack: return "slack";
        case BusKind::PV: return "pv";
        case BusKind::PQ: return "pq";
    }
    return "?";
}

const Bus& GridCase::bus(int id) const {
    auto idx = find_bus(id);
    if (!idx) throw UnknownBus(id);
    return buses[*idx];
}

std::optional<std::size_t> GridCase::find_bus(int id) const {
    auto it = std::ranges::find(buses, id, &Bus::id);
    if (it == buses.end()) return std::nullopt;
    return static_cast<std::size_t>(it - buses.begin());
}

const Bus& GridCase::slack() const {
    auto it = std::ranges::find(buses, BusKind::Slack, &Bus::kind);
    if (it == buses.end()) throw TopologyError("case has no slack bus");
    return *it;
}

namespace {

// ---------------------------------------------------------------------------
// MATPOWER tokenizer

enum class Tok { Ident, Number, String, LBracket, RBracket, LBrace, RBrace, Semi, Comma, Assign, Newline, Other, End };

struct Token {
    Tok kind;
    std::string text;
    double number = 0.0;
    int line = 0;
};

class Lexer {
  public:
    explicit Lexer(std::string_view src) : src_(src) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '%' || c == '#') {
                skip_line();
            } else if (c == '\n') {
                out.push_back({Tok::Newline, "\n", 0.0, line_});
                ++line_;
                ++pos_;
            } else if (c == ' ' || c == '\t' || c == '\r') {
                ++pos_;
            } else if (c == '.' && src_.substr(pos_, 3) == "...") {
                // continuation: drop the rest of the line including the newline
                skip_line();
                if (pos_ < src_.size()) {
                    ++line_;
                    ++pos_;
                }
            } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                std::size_t start = pos_;
                while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
                                              src_[pos_] == '_' || src_[pos_] == '.'))
                    ++pos_;
                std::string word(src_.substr(start, pos_ - start));
                if (word == "Inf" || word == "inf")
                    out.push_back({Tok::Number, word, HUGE_VAL, line_});
                else if (word == "NaN" || word == "nan")
                    out.push_back({Tok::Number, word, std::nan(""), line_});
                else
                    out.push_back({Tok::Ident, word, 0.0, line_});
            } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' ||
                       ((c == '-' || c == '+') && pos_ + 1 < src_.size() &&
                        (std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])) || src_[pos_ + 1] == '.' ||
                         src_.substr(pos_ + 1, 3) == "Inf"))) {
                out.push_back(number());
            } else if (c == '\'' || c == '"') {
                out.push_back(string_literal(c));
            } else {
                Tok kind = Tok::Other;
                switch (c) {
                    case '[': kind = Tok::LBracket; break;
                    case ']': kind = Tok::RBracket; break;
                    case '{': kind = Tok::LBrace; break;
                    case '}': kind = Tok::RBrace; break;
                    case ';': kind = Tok::Semi; break;
                    case ',': kind = Tok::Comma; break;
                    case '=': kind = Tok::Assign; break;
                    default: break;
                }
                out.push_back({kind, std::string(1, c), 0.0, line_});
                ++pos_;
            }
        }
        out.push_back({Tok::End, "", 0.0, line_});
        return out;
    }

  private:
    void skip_line() {
        while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
    }

    Token number() {
        std::size_t start = pos_;
        bool negative = false;
        if (src_[pos_] == '-' || src_[pos_] == '+') {
            negative = src_[pos_] == '-';
            ++pos_;
        }
        if (src_.substr(pos_, 3) == "Inf") {
            pos_ += 3;
            return {Tok::Number, std::string(src_.substr(start, pos_ - start)), negative ? -HUGE_VAL : HUGE_VAL,
                    line_};
        }
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            bool exp_sign = (c == '-' || c == '+') && pos_ > start &&
                            (src_[pos_ - 1] == 'e' || src_[pos_ - 1] == 'E');
            if (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || exp_sign)
                ++pos_;
            else
                break;
        }
        std::string text(src_.substr(start, pos_ - start));
        const char* first = text.data() + (text[0] == '+' ? 1 : 0);
        double value = 0.0;
        auto [ptr, ec] = std::from_chars(first, text.data() + text.size(), value);
        if (ec != std::errc() || ptr != text.data() + text.size())
            throw ParseError(line_, "malformed number '" + text + "'");
        return {Tok::Number, text, value, line_};
    }

    Token string_literal(char quote) {
        int line = line_;
        ++pos_;
        std::string text;
        while (true) {
            if (pos_ >= src_.size() || src_[pos_] == '\n') throw ParseError(line, "unterminated string");
            if (src_[pos_] == quote) {
                if (pos_ + 1 < src_.size() && src_[pos_ + 1] == quote) {
                    text += quote;
                    pos_ += 2;
                    continue;
                }
                ++pos_;
                break;
            }
            text += src_[pos_++];
        }
        return {Tok::String, text, 0.0, line};
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    int line_ = 1;
};

// ---------------------------------------------------------------------------
// Statement reader: collects `mpc.<name> = <value>;` assignments.

struct Matrix {
    std::vector<std::vector<double>> rows;
    int line = 0;
};

struct Cell {
    std::vector<std::string> items;
    int line = 0;
};

struct Assignments {
    std::map<std::string, double> scalars;
    std::map<std::string, Matrix> matrices;
    std::map<std::string, Cell> cells;
};

class Reader {
  public:
    explicit Reader(std::vector<Token> toks) : toks_(std::move(toks)) {}

    Assignments run() {
        Assignments out;
        while (peek().kind != Tok::End) {
            const Token& t = peek();
            if (t.kind == Tok::Ident && t.text.rfind("mpc.", 0) == 0 && peek(1).kind == Tok::Assign) {
                std::string name = t.text.substr(4);
                next();
                next();
                value(name, out);
            } else {
                skip_statement();
            }
        }
        return out;
    }

  private:
    const Token& peek(std::size_t ahead = 0) const {
        return toks_[std::min(i_ + ahead, toks_.size() - 1)];
    }
    const Token& next() { return toks_[std::min(i_++, toks_.size() - 1)]; }

    void skip_statement() {
        while (peek().kind != Tok::End && peek().kind != Tok::Semi && peek().kind != Tok::Newline) next();
        if (peek().kind != Tok::End) next();
    }

    void skip_newlines() {
        while (peek().kind == Tok::Newline) next();
    }

    void value(const std::string& name, Assignments& out) {
        skip_newlines();
        const Token& t = peek();
        switch (t.kind) {
            case Tok::LBracket: out.matrices[name] = matrix(); break;
            case Tok::LBrace: out.cells[name] = cell(); break;
            case Tok::Number:
                out.scalars[name] = t.number;
                next();
                break;
            case Tok::String: next(); break;
            default: throw ParseError(t.line, "unexpected '" + t.text + "' after mpc." + name + " =");
        }
        if (peek().kind == Tok::Semi) next();
    }

    Matrix matrix() {
        Matrix m;
        m.line = next().line;
        std::vector<double> row;
        auto flush = [&] {
            if (row.empty()) return;
            if (!m.rows.empty() && m.rows.front().size() != row.size())
                throw ParseError(peek().line, "row has " + std::to_string(row.size()) + " columns, expected " +
                                                  std::to_string(m.rows.front().size()));
            m.rows.push_back(std::move(row));
            row.clear();
        };
        while (true) {
            const Token& t = next();
            switch (t.kind) {
                case Tok::Number: row.push_back(t.number); break;
                case Tok::Comma: break;
                case Tok::Semi:
                case Tok::Newline: flush(); break;
                case Tok::RBracket: flush(); return m;
                case Tok::End: throw ParseError(m.line, "unterminated matrix");
                default: throw ParseError(t.line, "unexpected '" + t.text + "' in matrix");
            }
        }
    }

    Cell cell() {
        Cell c;
        c.line = next().line;
        while (true) {
            const Token& t = next();
            switch (t.kind) {
                case Tok::String:
                case Tok::Number: c.items.push_back(t.text); break;
                case Tok::Comma:
                case Tok::Semi:
                case Tok::Newline: break;
                case Tok::RBrace: return c;
                case Tok::End: throw ParseError(c.line, "unterminated cell array");
                default: throw ParseError(t.line, "unexpected '" + t.text + "' in cell array");
            }
        }
    }

    std::vector<Token> toks_;
    std::size_t i_ = 0;
};

int as_int(double v, const std::string& what) {
    if (!std::isfinite(v) || v != std::floor(v)) throw SchemaError(what + " must be an integer");
    return static_cast<int>(v);
}

const Matrix& require(const Assignments& a, const std::string& name, std::size_t min_cols,
                      const char* last_col_name) {
    auto it = a.matrices.find(name);
    if (it == a.matrices.end()) throw SchemaError("missing mpc." + name + " table");
    for (const auto& row : it->second.rows)
        if (row.size() < min_cols)
            throw SchemaError("mpc." + name + " table is missing column " + last_col_name + " (has " +
                              std::to_string(row.size()) + " columns, needs " + std::to_string(min_cols) + ")");
    return it->second;
}

std::string lower(std::string s) {
    std::ranges::transform(s, s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

constexpr double kDeg = std::numbers::pi / 180.0;

bool is_topology_issue(const ValidationIssue& issue) {
    return issue.message.find("slack") != std::string::npos ||
           issue.message.find("references") != std::string::npos ||
           issue.message.find("duplicate") != std::string::npos;
}

}  // namespace

GridCase parse_case_text(std::string_view text, std::string name) {
    Assignments a = Reader(Lexer(text).run()).run();

    auto base_it = a.scalars.find("baseMVA");
    if (base_it == a.scalars.end()) throw SchemaError("missing mpc.baseMVA");

    GridCase grid;
    grid.name = std::move(name);
    grid.base_mva = base_it->second;
    if (!(grid.base_mva > 0.0)) throw SchemaError("baseMVA must be positive");
    const double base = grid.base_mva;

    const Matrix& bus_tab = require(a, "bus", 13, "Vmin");
    const Matrix& gen_tab = require(a, "gen", 8, "status");
    const Matrix& branch_tab = require(a, "branch", 11, "status");

    std::set<int> isolated;
    for (const auto& row : bus_tab.rows) {
        Bus bus;
        bus.id = as_int(row[0], "bus id");
        int type = as_int(row[1], "bus type");
        switch (type) {
            case 1: bus.kind = BusKind::PQ; break;
            case 2: bus.kind = BusKind::PV; break;
            case 3: bus.kind = BusKind::Slack; break;
            case 4: isolated.insert(bus.id); continue;
            default: throw SchemaError("bus " + std::to_string(bus.id) + " has unknown type " + std::to_string(type));
        }
        bus.gs = row[4] / base;
        bus.bs = row[5] / base;
        bus.vm = row[7];
        bus.va = row[8] * kDeg;
        if (row[11] != 0.0 || row[12] != 0.0) {
            bus.v_max = row[11];
            bus.v_min = row[12];
        }
        grid.buses.push_back(bus);
        if (row[2] != 0.0 || row[3] != 0.0)
            grid.loads.push_back({"l" + std::to_string(bus.id), bus.id, -row[2] / base, -row[3] / base, false});
    }
    if (!isolated.empty()) grid.notes.push_back(std::to_string(isolated.size()) + " isolated bus(es) dropped");

    const Cell* fuel = nullptr;
    if (auto it = a.cells.find("genfuel"); it != a.cells.end()) {
        fuel = &it->second;
        if (fuel->items.size() != gen_tab.rows.size())
            throw SchemaError("mpc.genfuel has " + std::to_string(fuel->items.size()) + " entries for " +
                              std::to_string(gen_tab.rows.size()) + " generators");
    }
    for (std::size_t k = 0; k < gen_tab.rows.size(); ++k) {
        const auto& row = gen_tab.rows[k];
        int bus = as_int(row[0], "gen bus");
        if (row[7] <= 0.0 || isolated.contains(bus)) continue;
        grid.generators.push_back(
            {"g" + std::to_string(k + 1), bus, row[1] / base, row[2] / base, false, fuel ? fuel->items[k] : ""});
    }

    std::size_t dropped = 0;
    for (const auto& row : branch_tab.rows) {
        Branch br;
        br.from_bus = as_int(row[0], "branch fbus");
        br.to_bus = as_int(row[1], "branch tbus");
        if (row[10] <= 0.0 || isolated.contains(br.from_bus) || isolated.contains(br.to_bus)) {
            ++dropped;
            continue;
        }
        br.r = row[2];
        br.x = row[3];
        br.b_shunt = row[4];
        br.tap = row[8] == 0.0 ? 1.0 : row[8];
        br.phase_shift = row[9] * kDeg;
        grid.branches.push_back(br);
    }
    if (dropped) grid.notes.push_back(std::to_string(dropped) + " out-of-service branch(es) dropped");

    // PV buses without an in-service generator cannot hold their voltage.
    std::set<int> gen_buses;
    for (const auto& g : grid.generators) gen_buses.insert(g.bus);
    for (auto& bus : grid.buses) {
        if (bus.kind == BusKind::PV && !gen_buses.contains(bus.id)) {
            bus.kind = BusKind::PQ;
            grid.notes.push_back("bus " + std::to_string(bus.id) + ": PV without in-service generator -> PQ");
        }
    }

    ValidationReport report = validate_case(grid);
    if (!report.ok()) {
        const auto& first = report.issues.front();
        auto topo = std::ranges::find_if(report.issues, is_topology_issue);
        if (topo != report.issues.end()) throw TopologyError(topo->component + ": " + topo->message);
        throw SchemaError(first.component + ": " + first.message);
    }
    return grid;
}

GridCase parse_case(const std::filesystem::path& path, CaseFormat format) {
    if (format != CaseFormat::MatpowerM) throw InvalidArgument("unsupported case format");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open case file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_case_text(buf.str(), path.stem().string());
}

std::string serialize_case(const GridCase& grid) {
    std::ostringstream os;
    os.precision(17);
    const double base = grid.base_mva;
    os << "function mpc = " << (grid.name.empty() ? "case" : grid.name) << "\n";
    os << "mpc.version = '2';\n";
    os << "mpc.baseMVA = " << base << ";\n\n";

    std::unordered_map<int, const Load*> load_at;
    for (const auto& l : grid.loads) load_at[l.bus] = &l;

    os << "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\n";
    os << "mpc.bus = [\n";
    for (const auto& b : grid.buses) {
        int type = b.kind == BusKind::PQ ? 1 : b.kind == BusKind::PV ? 2 : 3;
        const Load* l = load_at.contains(b.id) ? load_at[b.id] : nullptr;
        os << '\t' << b.id << '\t' << type << '\t' << (l ? -l->p * base : 0.0) << '\t'
           << (l ? -l->q * base : 0.0) << '\t' << b.gs * base << '\t' << b.bs * base << "\t1\t" << b.vm << '\t'
           << b.va / kDeg << "\t0\t1\t" << b.v_max.value_or(0.0) << '\t' << b.v_min.value_or(0.0) << ";\n";
    }
    os << "];\n\n";

    os << "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\n";
    os << "mpc.gen = [\n";
    for (const auto& g : grid.generators) {
        os << '\t' << g.bus << '\t' << g.p * base << '\t' << g.q * base << "\t0\t0\t" << grid.bus(g.bus).vm << '\t'
           << base << "\t1;\n";
    }
    os << "];\n\n";

    os << "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\n";
    os << "mpc.branch = [\n";
    for (const auto& br : grid.branches) {
        os << '\t' << br.from_bus << '\t' << br.to_bus << '\t' << br.r << '\t' << br.x << '\t' << br.b_shunt
           << "\t0\t0\t0\t" << br.tap << '\t' << br.phase_shift / kDeg << "\t1;\n";
    }
    os << "];\n";

    bool any_fuel = std::ranges::any_of(grid.generators, [](const Generator& g) { return !g.fuel_tag.empty(); });
    if (any_fuel) {
        os << "\nmpc.genfuel = {\n";
        for (const auto& g : grid.generators) os << "\t'" << g.fuel_tag << "';\n";
        os << "};\n";
    }
    return os.str();
}

ValidationReport validate_case(const GridCase& grid) {
    ValidationReport rep;
    rep.notes = grid.notes;
    auto issue = [&](std::string component, std::string message) {
        rep.issues.push_back({std::move(component), std::move(message)});
    };

    if (!(grid.base_mva > 0.0)) issue("case", "base_mva must be positive");

    std::unordered_map<int, const Bus*> by_id;
    std::vector<int> slacks;
    for (const auto& b : grid.buses) {
        std::string name = "bus " + std::to_string(b.id);
        if (!by_id.emplace(b.id, &b).second) issue(name, "duplicate bus id");
        if (b.kind == BusKind::Slack) slacks.push_back(b.id);
        if (b.v_max && b.v_min && !(*b.v_min < *b.v_max)) issue(name, "v_min must be below v_max");
        if (b.kind != BusKind::PQ && !(b.vm >= 0.5 && b.vm <= 1.5))
            issue(name, "voltage setpoint outside [0.5, 1.5] pu");
    }
    if (slacks.size() != 1) {
        std::string names;
        for (int id : slacks) names += (names.empty() ? "" : ", ") + std::to_string(id);
        issue(slacks.empty() ? "case" : "buses " + names,
              "expected exactly one slack bus, found " + std::to_string(slacks.size()));
    }

    for (std::size_t k = 0; k < grid.branches.size(); ++k) {
        const auto& br = grid.branches[k];
        std::string name = "branch " + std::to_string(br.from_bus) + "-" + std::to_string(br.to_bus);
        if (!by_id.contains(br.from_bus)) issue(name, "references absent bus " + std::to_string(br.from_bus));
        if (!by_id.contains(br.to_bus)) issue(name, "references absent bus " + std::to_string(br.to_bus));
        if (br.r == 0.0 && br.x == 0.0) issue(name, "zero series impedance");
        if (!(br.tap > 0.0)) issue(name, "tap ratio must be positive");
    }

    auto check_component = [&](const std::string& id, int bus, bool essential) {
        auto it = by_id.find(bus);
        if (it == by_id.end()) {
            issue(id, "references absent bus " + std::to_string(bus));
            return;
        }
        if (essential && it->second->kind != BusKind::PQ)
            issue(id, std::string("essential component on ") + to_string(it->second->kind) + " bus " +
                          std::to_string(bus));
    };
    for (const auto& g : grid.generators) check_component(g.id, g.bus, g.essential);
    for (const auto& l : grid.loads) check_component(l.id, l.bus, l.essential);
    return rep;
}

EssentialSelector EssentialSelector::parse(std::string_view text) {
    std::string t = lower(std::string(text));
    if (t == "all") return {Kind::All, {}};
    if (t == "all-solar") return {Kind::AllSolar, {}};
    if (t == "all-wind") return {Kind::AllWind, {}};
    if (t == "all-renewable") return {Kind::AllRenewable, {}};
    EssentialSelector sel{Kind::Explicit, {}};
    std::string item;
    std::istringstream is{std::string(text)};
    while (std::getline(is, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) sel.ids.push_back(item);
    }
    if (sel.ids.empty()) throw InvalidArgument("empty essential-component selector");
    return sel;
}

GridCase tag_essential(const GridCase& grid, const EssentialSelector& selector) {
    GridCase out = grid;
    for (auto& g : out.generators) g.essential = false;
    for (auto& l : out.loads) l.essential = false;

    const int slack_id = out.slack().id;
    auto fuel_has = [](const Generator& g, std::string_view what) {
        return lower(g.fuel_tag).find(what) != std::string::npos;
    };

    std::size_t count = 0;
    switch (selector.kind) {
        case EssentialSelector::Kind::All: {
            // Components on PQ buses only: voltage-controlled buses keep their model.
            auto on_pq = [&](int bus) { return out.bus(bus).kind == BusKind::PQ; };
            for (auto& g : out.generators) g.essential = on_pq(g.bus);
            for (auto& l : out.loads) l.essential = on_pq(l.bus);
            break;
        }
        case EssentialSelector::Kind::AllSolar:
        case EssentialSelector::Kind::AllWind:
        case EssentialSelector::Kind::AllRenewable: {
            bool solar = selector.kind != EssentialSelector::Kind::AllWind;
            bool wind = selector.kind != EssentialSelector::Kind::AllSolar;
            for (auto& g : out.generators)
                g.essential = (solar && fuel_has(g, "solar")) || (wind && fuel_has(g, "wind"));
            break;
        }
        case EssentialSelector::Kind::Explicit:
            for (const auto& id : selector.ids) {
                auto g = std::ranges::find(out.generators, id, &Generator::id);
                auto l = std::ranges::find(out.loads, id, &Load::id);
                if (g != out.generators.end())
                    g->essential = true;
                else if (l != out.loads.end())
                    l->essential = true;
                else
                    throw EmptySelection("no in-service component with id '" + id + "'");
            }
            break;
    }

    std::set<int> essential_buses;
    for (const auto& g : out.generators) {
        if (!g.essential) continue;
        ++count;
        essential_buses.insert(g.bus);
    }
    for (const auto& l : out.loads) {
        if (!l.essential) continue;
        ++count;
        essential_buses.insert(l.bus);
    }
    if (count == 0) throw EmptySelection("essential-component selector matched nothing");
    if (essential_buses.contains(slack_id))
        throw InvalidArgument("essential component on slack bus " + std::to_string(slack_id));

    for (auto& bus : out.buses) {
        if (bus.kind != BusKind::PV || !essential_buses.contains(bus.id)) continue;
        bus.kind = BusKind::PQ;
        std::string fixed;
        for (const auto& g : out.generators)
            if (g.bus == bus.id) fixed += (fixed.empty() ? "" : ", ") + g.id;
        out.notes.push_back("bus " + std::to_string(bus.id) + ": PV -> PQ, generators " + fixed +
                            " fixed at dispatch (P, Q)");
    }
    return out;
}

GridCase with_band_limits(const GridCase& grid, double band) {
    if (!(band > 0.0 && band < 1.0)) throw InvalidArgument("limit band must be in (0, 1)");
    GridCase out = grid;
    for (auto& b : out.buses) {
        b.v_max = b.vm * (1.0 + band);
        b.v_min = b.vm * (1.0 - band);
    }
    return out;
}

}  // namespace rmss
