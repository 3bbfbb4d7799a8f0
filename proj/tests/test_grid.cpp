#include <cmath>
#include <limits>
#include <string>

#include "doctest.h"
#include "rmss/errors.hpp"
#include "rmss/grid.hpp"

using namespace rmss;

namespace {

const std::string kData = RMSS_DATA_DIR;

// Two values agree to within a few units in the last place (serialization prints 17 digits,
// per-unit division can add a rounding step on the way back).
bool ulp_close(double a, double b, int ulps = 4) {
    if (a == b) return true;
    const double scale = std::max(std::abs(a), std::abs(b));
    return std::abs(a - b) <= ulps * std::numeric_limits<double>::epsilon() * scale;
}

const char* kTiny = R"(function mpc = tiny
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
    1  3  0   0   0  0  1  1.02  0  138  1  1.1  0.9;
    2  2  0   0   0  0  1  1.01  0  138  1  1.1  0.9;
    3  1  50  20  0  10 1  1.0   0  138  1  1.05 0.95;
];
mpc.gen = [
    1  0   0  100 -100 1.02 100 1 200 0;
    2  40  5  100 -100 1.01 100 1 200 0;
];
mpc.branch = [
    1  2  0.01  0.1  0.02  0 0 0 0    0 1 -360 360;
    2  3  0.02  0.2  0.0   0 0 0 0.98 0 1 -360 360;
    1  3  0.02  0.2  0.0   0 0 0 0    0 0 -360 360;
];
mpc.genfuel = {'coal'; 'solar'};
)";

std::string replace(std::string text, const std::string& from, const std::string& to) {
    auto pos = text.find(from);
    REQUIRE(pos != std::string::npos);
    text.replace(pos, from.size(), to);
    return text;
}

}  // namespace

TEST_CASE("matpower text converts to per-unit on base_mva") {
    GridCase g = parse_case_text(kTiny, "tiny");
    REQUIRE(g.buses.size() == 3);
    CHECK(g.base_mva == 100.0);
    CHECK(g.slack().id == 1);
    CHECK(g.bus(2).kind == BusKind::PV);
    CHECK(g.bus(3).bs == doctest::Approx(0.1));
    CHECK(*g.bus(3).v_max == 1.05);

    REQUIRE(g.loads.size() == 1);
    CHECK(g.loads[0].id == "l3");
    CHECK(g.loads[0].p == doctest::Approx(-0.5));
    CHECK(g.loads[0].q == doctest::Approx(-0.2));

    REQUIRE(g.generators.size() == 2);
    CHECK(g.generators[1].id == "g2");
    CHECK(g.generators[1].p == doctest::Approx(0.4));
    CHECK(g.generators[1].fuel_tag == "solar");

    // The third branch is out of service.
    REQUIRE(g.branches.size() == 2);
    CHECK(g.branches[1].tap == 0.98);
    CHECK(g.branches[0].tap == 1.0);
}

TEST_CASE("bundled cases load") {
    CHECK(parse_case(kData + "/case2.m").buses.size() == 2);
    CHECK(parse_case(kData + "/case14.m").buses.size() == 14);
    GridCase solar = parse_case(kData + "/case14_solar.m");
    CHECK(solar.generators.size() == 8);
    GridCase big = parse_case(kData + "/case118_synthetic.m");
    CHECK(big.buses.size() == 118);
    CHECK(big.name == "case118_synthetic");
}

TEST_CASE("missing file is an IO error") {
    CHECK_THROWS_AS(parse_case(kData + "/does_not_exist.m"), IoError);
}

TEST_CASE("malformed input reports the line") {
    std::string bad = replace(kTiny, "50  20", "5x0  20");
    try {
        parse_case_text(bad);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 7);
    }
    CHECK_THROWS_AS(parse_case_text(replace(kTiny, "mpc.baseMVA = 100;", "")), SchemaError);
    CHECK_THROWS_AS(parse_case_text(replace(kTiny, "1.01  0  138  1  1.1  0.9;", "1.01;")),
                    ParseError);
}

TEST_CASE("topology errors") {
    SUBCASE("no slack") { CHECK_THROWS_AS(parse_case_text(replace(kTiny, "1  3  0   0", "1  1  0   0")), TopologyError); }
    SUBCASE("two slacks") {
        CHECK_THROWS_AS(parse_case_text(replace(kTiny, "2  2  0   0", "2  3  0   0")), TopologyError);
    }
    SUBCASE("branch to absent bus") {
        CHECK_THROWS_AS(parse_case_text(replace(kTiny, "2  3  0.02", "2  7  0.02")), TopologyError);
    }
    SUBCASE("duplicate bus") {
        CHECK_THROWS_AS(parse_case_text(replace(kTiny, "3  1  50", "2  1  50")), TopologyError);
    }
}

TEST_CASE("PV bus without generator becomes PQ with a note") {
    std::string text = replace(kTiny, "    2  40  5  100 -100 1.01 100 1 200 0;\n", "");
    text = replace(text, "{'coal'; 'solar'}", "{'coal'}");
    GridCase g = parse_case_text(text);
    CHECK(g.bus(2).kind == BusKind::PQ);
    REQUIRE_FALSE(g.notes.empty());
    CHECK(validate_case(g).notes == g.notes);
}

TEST_CASE("serialize and parse round trip") {
    for (const char* name : {"case2.m", "case14.m", "case14_solar.m", "case118_synthetic.m"}) {
        CAPTURE(name);
        GridCase a = parse_case(kData + "/" + name);
        GridCase b = parse_case_text(serialize_case(a), a.name);
        REQUIRE(a.buses.size() == b.buses.size());
        REQUIRE(a.branches.size() == b.branches.size());
        REQUIRE(a.generators.size() == b.generators.size());
        REQUIRE(a.loads.size() == b.loads.size());
        for (std::size_t i = 0; i < a.buses.size(); ++i) {
            const Bus &x = a.buses[i], &y = b.buses[i];
            CHECK(x.id == y.id);
            CHECK(x.kind == y.kind);
            CHECK(ulp_close(x.vm, y.vm));
            CHECK(ulp_close(x.va, y.va));
            CHECK(ulp_close(x.gs, y.gs));
            CHECK(ulp_close(x.bs, y.bs));
            CHECK(ulp_close(*x.v_max, *y.v_max));
            CHECK(ulp_close(*x.v_min, *y.v_min));
        }
        for (std::size_t i = 0; i < a.branches.size(); ++i) {
            const Branch &x = a.branches[i], &y = b.branches[i];
            CHECK(x.from_bus == y.from_bus);
            CHECK(x.to_bus == y.to_bus);
            CHECK(ulp_close(x.r, y.r));
            CHECK(ulp_close(x.x, y.x));
            CHECK(ulp_close(x.b_shunt, y.b_shunt));
            CHECK(ulp_close(x.tap, y.tap));
            CHECK(ulp_close(x.phase_shift, y.phase_shift));
        }
        for (std::size_t i = 0; i < a.generators.size(); ++i) {
            CHECK(a.generators[i].id == b.generators[i].id);
            CHECK(a.generators[i].fuel_tag == b.generators[i].fuel_tag);
            CHECK(ulp_close(a.generators[i].p, b.generators[i].p));
            CHECK(ulp_close(a.generators[i].q, b.generators[i].q));
        }
        for (std::size_t i = 0; i < a.loads.size(); ++i) {
            CHECK(a.loads[i].id == b.loads[i].id);
            CHECK(ulp_close(a.loads[i].p, b.loads[i].p));
            CHECK(ulp_close(a.loads[i].q, b.loads[i].q));
        }
    }
}

TEST_CASE("essential selectors") {
    GridCase g = parse_case(kData + "/case14_solar.m");
    auto count = [](const GridCase& c) {
        int n = 0;
        for (const auto& x : c.generators) n += x.essential;
        for (const auto& x : c.loads) n += x.essential;
        return n;
    };

    GridCase solar = tag_essential(g, EssentialSelector::parse("all-solar"));
    CHECK(count(solar) == 3);
    for (const auto& x : solar.generators) CHECK(x.essential == (x.fuel_tag == "solar"));

    CHECK(count(tag_essential(g, EssentialSelector::parse("all-renewable"))) == 3);
    CHECK_THROWS_AS(tag_essential(g, EssentialSelector::parse("all-wind")), EmptySelection);
    CHECK_THROWS_AS(tag_essential(g, EssentialSelector::parse("g99")), EmptySelection);
    CHECK_THROWS_AS(EssentialSelector::parse(" , "), InvalidArgument);

    GridCase one = tag_essential(g, EssentialSelector::parse("g7, l4"));
    CHECK(count(one) == 2);

    // "all" keeps every voltage-controlled bus in its model.
    GridCase all = tag_essential(g, EssentialSelector::parse("all"));
    for (const auto& x : all.generators) CHECK(x.essential == (all.bus(x.bus).kind == BusKind::PQ));
    for (const auto& x : all.loads) CHECK(x.essential == (all.bus(x.bus).kind == BusKind::PQ));
    for (const auto& b : all.buses) CHECK(b.kind == g.bus(b.id).kind);
}

TEST_CASE("tagging a PV generator remodels the bus") {
    GridCase g = parse_case(kData + "/case14.m");
    GridCase t = tag_essential(g, EssentialSelector::parse("g2"));
    const int bus = t.generators[1].bus;
    CHECK(g.bus(bus).kind == BusKind::PV);
    CHECK(t.bus(bus).kind == BusKind::PQ);
    CHECK(t.notes.size() == g.notes.size() + 1);
    CHECK(validate_case(t).ok());

    CHECK_THROWS_AS(tag_essential(g, EssentialSelector::parse("g1")), InvalidArgument);
}

TEST_CASE("validation collects every issue") {
    GridCase g = parse_case_text(kTiny);
    g.branches[0].r = g.branches[0].x = 0.0;
    g.buses[2].v_min = 1.2;
    g.generators[1].essential = true;  // on a PV bus
    auto rep = validate_case(g);
    CHECK_FALSE(rep.ok());
    CHECK(rep.issues.size() == 3);
}

TEST_CASE("band limits follow the setpoint") {
    GridCase g = with_band_limits(parse_case(kData + "/case14.m"), 0.02);
    for (const auto& b : g.buses) {
        CHECK(*b.v_max == doctest::Approx(b.vm * 1.02));
        CHECK(*b.v_min == doctest::Approx(b.vm * 0.98));
    }
    CHECK_THROWS_AS(with_band_limits(g, 0.0), InvalidArgument);
}

TEST_CASE("validation names both slack buses") {
    GridCase g = parse_case_text(kTiny);
    g.buses[1].kind = BusKind::Slack;
    auto rep = validate_case(g);
    REQUIRE(rep.issues.size() == 1);
    CHECK(rep.issues[0].component == "buses 1, 2");
    CHECK(validate_case(parse_case_text(kTiny)).ok());
}

TEST_CASE("parsing is deterministic and per-unit is an exact division") {
    const std::string path = kData + "/case118_synthetic.m";
    GridCase a = parse_case(path);
    CHECK(a == parse_case(path));

    GridCase g = parse_case_text(replace(kTiny, "mpc.baseMVA = 100;", "mpc.baseMVA = 30;"));
    CHECK(g.loads[0].p == -(50.0 / 30.0));
    CHECK(g.loads[0].q == -(20.0 / 30.0));
    CHECK(g.generators[1].p == 40.0 / 30.0);
    CHECK(g.bus(3).bs == 10.0 / 30.0);
}
