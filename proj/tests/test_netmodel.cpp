#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "mgdp/netmodel.hpp"

using namespace mgdp::netmodel;

namespace {

std::string read_file(const std::string &path)
{
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string case33_path() { return std::string(MGDP_DATA_DIR) + "/case33bw.m"; }

const std::vector<int> kEssBuses = {2, 7, 12, 17, 23, 27, 31};

} // namespace

TEST_CASE("minimal synthetic matpower case")
{
    const std::string text =
        "mpc.baseMVA = 100;\n"
        "mpc.bus = [\n"
        " 1 3 0.0 0.0 0 0 1 1 0 10.0 1 1.05 0.95;\n"
        " 2 1 1.5 0.7 0 0 1 1 0 10.0 1 1.05 0.95;\n"
        "];\n"
        "mpc.branch = [\n"
        " 1 2 0.01 0.02 0 0 0 0 0 0 1 -360 360;\n"
        "];\n";
    const NetworkCase nc = parse_matpower_case(text);
    CHECK(nc.base_mva == 100.0);
    REQUIRE(nc.buses.size() == 2);
    REQUIRE(nc.branches.size() == 1);
    CHECK(nc.buses[1].p_load_mw == 1.5);
    CHECK(nc.buses[1].q_load_mvar == 0.7);
    CHECK(nc.branches[0].r == 0.01);
    CHECK(nc.units == ImpedanceUnit::PerUnit);
    CHECK(nc.base_kv == 10.0);
}

TEST_CASE("bundled case33bw parses to 33 buses and 32 in-service branches")
{
    const NetworkCase nc = parse_matpower_case(read_file(case33_path()));
    CHECK(nc.buses.size() == 33);
    CHECK(nc.branches.size() == 32);
    CHECK(nc.base_mva == 10.0);
    CHECK(nc.units == ImpedanceUnit::Ohm);
    CHECK(nc.base_kv == 12.66);

    double total_p = 0.0, total_q = 0.0;
    for (const auto &b : nc.buses)
    {
        total_p += b.p_load_mw;
        total_q += b.q_load_mvar;
    }
    CHECK_THAT(total_p, Catch::Matchers::WithinAbs(3.715, 1e-9));
    CHECK_THAT(total_q, Catch::Matchers::WithinAbs(2.3, 1e-9));
}

TEST_CASE("matpower error paths")
{
    SECTION("missing branch block")
    {
        const std::string text =
            "mpc.baseMVA = 100;\n"
            "mpc.bus = [ 1 3 0 0 0 0 1 1 0 10 1 1.1 0.9; ];\n";
        CHECK_THROWS_AS(parse_matpower_case(text), MissingBlock);
    }
    SECTION("non-numeric token")
    {
        const std::string text =
            "mpc.baseMVA = 100;\n"
            "mpc.bus = [ 1 3 zero 0 0 0 1 1 0 10 1 1.1 0.9; ];\n"
            "mpc.branch = [ 1 1 0 0; ];\n";
        CHECK_THROWS_AS(parse_matpower_case(text), MalformedRow);
    }
    SECTION("duplicate bus id")
    {
        const std::string text =
            "mpc.baseMVA = 100;\n"
            "mpc.bus = [ 1 3 0 0; 1 1 0 0; ];\n"
            "mpc.branch = [ 1 1 0 0; ];\n";
        CHECK_THROWS_AS(parse_matpower_case(text), DuplicateBusId);
    }
}

TEST_CASE("json round-trip is the identity on a parsed case")
{
    const NetworkCase nc = parse_matpower_case(read_file(case33_path()));
    // Impedances are serialized as already-converted p.u. values.
    NetworkCase pu = nc;
    if (pu.units == ImpedanceUnit::Ohm)
    {
        const double z_base = pu.base_kv * pu.base_kv / pu.base_mva;
        for (auto &br : pu.branches)
        {
            br.r /= z_base;
            br.x /= z_base;
        }
        pu.units = ImpedanceUnit::PerUnit;
    }

    const std::string text = serialize_network_json(pu, 1, kEssBuses);
    const NetworkDocument doc = parse_network_json(text);
    CHECK(doc.root == 1);
    CHECK(doc.ess_buses == kEssBuses);
    REQUIRE(doc.net.buses.size() == pu.buses.size());
    REQUIRE(doc.net.branches.size() == pu.branches.size());
    CHECK(doc.net.base_mva == pu.base_mva);
    for (std::size_t i = 0; i < pu.buses.size(); ++i)
    {
        CHECK(doc.net.buses[i].id == pu.buses[i].id);
        CHECK(doc.net.buses[i].p_load_mw == pu.buses[i].p_load_mw);
        CHECK(doc.net.buses[i].vmin_pu == pu.buses[i].vmin_pu);
    }
    for (std::size_t i = 0; i < pu.branches.size(); ++i)
    {
        CHECK(doc.net.branches[i].r == pu.branches[i].r);
        CHECK(doc.net.branches[i].x == pu.branches[i].x);
    }

    // Second round trip is byte-identical.
    CHECK(serialize_network_json(doc.net, doc.root, doc.ess_buses) == text);
}

TEST_CASE("json schema violations")
{
    SECTION("empty bus array")
    {
        CHECK_THROWS_AS(parse_network_json(R"({"base_mva":10,"root":1,"buses":[],"branches":[]})"),
                        SchemaViolation);
    }
    SECTION("branch referencing unknown bus")
    {
        const std::string text = R"({
          "base_mva": 10, "root": 1,
          "buses": [{"id":1,"p_load_mw":0,"q_load_mvar":0,"vmin_pu":0.9,"vmax_pu":1.1}],
          "branches": [{"from":1,"to":99,"r_pu":0.1,"x_pu":0.1,"l_max_pu2":null}]
        })";
        CHECK_THROWS_AS(parse_network_json(text), SchemaViolation);
    }
    SECTION("not json at all")
    {
        CHECK_THROWS_AS(parse_network_json("mpc.baseMVA = 10;"), SchemaViolation);
    }
}

TEST_CASE("validate_radial on case33bw")
{
    const NetworkCase nc = parse_matpower_case(read_file(case33_path()));
    const TopologyReport rep = validate_radial(nc, 1);
    CHECK(rep.is_tree);
    CHECK(rep.n_components == 1);
    CHECK_FALSE(rep.cycle_witness.has_value());
    CHECK(rep.bfs_order.size() == 33);
    CHECK(rep.bfs_order.front() == 1);
}

TEST_CASE("validate_radial detects cycles and disconnection")
{
    NetworkCase nc;
    nc.base_mva = 10.0;

    SECTION("triangle")
    {
        for (int i = 1; i <= 3; ++i)
            nc.buses.push_back({i, 0, 0, 0.9, 1.1});
        nc.branches.push_back({1, 2, 0.1, 0.1, {}});
        nc.branches.push_back({2, 3, 0.1, 0.1, {}});
        nc.branches.push_back({3, 1, 0.1, 0.1, {}});
        const TopologyReport rep = validate_radial(nc, 1);
        CHECK_FALSE(rep.is_tree);
        REQUIRE(rep.cycle_witness.has_value());
        CHECK_FALSE(rep.cycle_witness->empty());
    }
    SECTION("disconnected")
    {
        for (int i = 1; i <= 4; ++i)
            nc.buses.push_back({i, 0, 0, 0.9, 1.1});
        nc.branches.push_back({1, 2, 0.1, 0.1, {}});
        const TopologyReport rep = validate_radial(nc, 1);
        CHECK_FALSE(rep.is_tree);
        CHECK(rep.n_components == 3);
    }
    SECTION("unknown root")
    {
        nc.buses.push_back({1, 0, 0, 0.9, 1.1});
        CHECK_THROWS_AS(validate_radial(nc, 7), UnknownRoot);
    }
}

TEST_CASE("to_per_unit on case33bw")
{
    const NetworkCase nc = parse_matpower_case(read_file(case33_path()));
    const MicrogridNetwork mg = to_per_unit(nc, kEssBuses, 1);

    CHECK(mg.n_buses == 33);
    CHECK(mg.n_branches() == 32);
    CHECK(mg.ess_buses.size() == 7);
    CHECK(mg.load_buses.size() == 26);
    CHECK(mg.bus_ids[mg.root] == 1);

    // E = N - 1 and each branch oriented parent -> child in BFS order.
    for (int e = 0; e < mg.n_branches(); ++e)
        CHECK(mg.branches[e].parent < mg.branches[e].child);

    // Ohm -> p.u. conversion on Zbase = 12.66^2 / 10 ohm.
    const double z_base = 12.66 * 12.66 / 10.0;
    const auto &first = mg.branches[0];
    CHECK_THAT(first.r, Catch::Matchers::WithinRel(0.0922 / z_base, 1e-12));
    CHECK_THAT(first.x, Catch::Matchers::WithinRel(0.0470 / z_base, 1e-12));
    CHECK_FALSE(first.l_max.has_value());

    // ESS buses lose their native demand.
    for (int i : mg.ess_buses)
    {
        CHECK(mg.p_load_mw(i) == 0.0);
        CHECK(mg.q_load_mvar(i) == 0.0);
    }
    // Demand not at ESS buses is retained: 3.715 - 0.72 MW.
    CHECK_THAT(mg.p_load_mw.sum(), Catch::Matchers::WithinAbs(2.995, 1e-9));

    // ESS and load sets partition the bus set.
    CHECK(mg.ess_buses.size() + mg.load_buses.size() == static_cast<std::size_t>(mg.n_buses));
}

TEST_CASE("to_per_unit squares voltage bounds and honours overrides")
{
    const NetworkCase nc = parse_matpower_case(read_file(case33_path()));
    PerUnitOptions opt;
    opt.vmin_override = 0.9;
    opt.vmax_override = 1.1;
    const MicrogridNetwork mg = to_per_unit(nc, kEssBuses, 1, opt);
    for (int i = 0; i < mg.n_buses; ++i)
    {
        CHECK_THAT(mg.v_min2(i), Catch::Matchers::WithinAbs(0.81, 1e-12));
        CHECK_THAT(mg.v_max2(i), Catch::Matchers::WithinAbs(1.21, 1e-12));
    }
}

TEST_CASE("to_per_unit error paths")
{
    NetworkCase nc;
    nc.base_mva = 10.0;
    for (int i = 1; i <= 3; ++i)
        nc.buses.push_back({i, 1.0, 0.5, 0.9, 1.1});
    nc.branches.push_back({1, 2, 0.1, 0.1, {}});
    nc.branches.push_back({2, 3, 0.1, 0.1, {}});

    SECTION("ess bus unknown")
    {
        CHECK_THROWS_AS(to_per_unit(nc, {9}, 1), EssBusUnknown);
    }
    SECTION("not radial")
    {
        nc.branches.push_back({3, 1, 0.1, 0.1, {}});
        CHECK_THROWS_AS(to_per_unit(nc, {2}, 1), NotRadial);
    }
}

TEST_CASE("per-unit conversion is scale consistent")
{
    const std::string base_text = read_file(case33_path());
    const NetworkCase nc = parse_matpower_case(base_text);
    NetworkCase doubled = nc;
    for (auto &b : doubled.buses)
    {
        b.p_load_mw *= 2.0;
        b.q_load_mvar *= 2.0;
    }
    const MicrogridNetwork a = to_per_unit(nc, kEssBuses, 1);
    const MicrogridNetwork b = to_per_unit(doubled, kEssBuses, 1);
    for (int e = 0; e < a.n_branches(); ++e)
    {
        CHECK(a.branches[e].r == b.branches[e].r);
        CHECK(a.branches[e].x == b.branches[e].x);
    }
    for (int i = 0; i < a.n_buses; ++i)
        CHECK_THAT(b.p_load_mw(i), Catch::Matchers::WithinAbs(2.0 * a.p_load_mw(i), 1e-12));
}
