#ifndef MGDP_NETMODEL_HPP
#define MGDP_NETMODEL_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace mgdp::netmodel {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct ParseError : std::runtime_error
{
    using std::runtime_error::runtime_error;
};
struct MissingBlock : ParseError
{
    explicit MissingBlock(const std::string &block)
        : ParseError("missing block: " + block) {}
};
struct MalformedRow : ParseError
{
    using ParseError::ParseError;
};
struct DuplicateBusId : ParseError
{
    explicit DuplicateBusId(int id)
        : ParseError("duplicate bus id: " + std::to_string(id)) {}
};
struct SchemaViolation : ParseError
{
    explicit SchemaViolation(const std::string &path, const std::string &what)
        : ParseError("schema violation at " + path + ": " + what) {}
};
struct UnknownRoot : std::runtime_error
{
    explicit UnknownRoot(int id)
        : std::runtime_error("root bus " + std::to_string(id) + " not in case") {}
};
struct NotRadial : std::runtime_error
{
    using std::runtime_error::runtime_error;
};
struct EssBusUnknown : std::runtime_error
{
    explicit EssBusUnknown(int id)
        : std::runtime_error("ESS bus " + std::to_string(id) + " not in case") {}
};

// ---------------------------------------------------------------------------
// Raw case data
// ---------------------------------------------------------------------------

enum class ImpedanceUnit
{
    PerUnit,
    Ohm
};

struct CaseBus
{
    int id = 0;
    double p_load_mw = 0.0;
    double q_load_mvar = 0.0;
    double vmin_pu = 0.9;  // voltage magnitude bounds
    double vmax_pu = 1.1;
};

struct CaseBranch
{
    int from = 0;
    int to = 0;
    double r = 0.0;  // in `units` of the owning case
    double x = 0.0;
    std::optional<double> l_max_pu2;  // squared-current bound, nullopt = unbounded
};

struct NetworkCase
{
    double base_mva = 0.0;
    double base_kv = 1.0;  // voltage base of the case (kV), used for ohm conversion
    ImpedanceUnit units = ImpedanceUnit::PerUnit;
    std::vector<CaseBus> buses;
    std::vector<CaseBranch> branches;

    const CaseBus *find_bus(int id) const
    {
        for (const auto &b : buses)
            if (b.id == id)
                return &b;
        return nullptr;
    }

    void validate() const
    {
        if (!(base_mva > 0.0))
            throw SchemaViolation("base_mva", "must be positive");
        std::set<int> seen;
        for (const auto &b : buses)
            if (!seen.insert(b.id).second)
                throw DuplicateBusId(b.id);
        for (std::size_t i = 0; i < branches.size(); ++i)
        {
            if (!seen.count(branches[i].from))
                throw SchemaViolation("branches[" + std::to_string(i) + "].from",
                                      "unknown bus id " + std::to_string(branches[i].from));
            if (!seen.count(branches[i].to))
                throw SchemaViolation("branches[" + std::to_string(i) + "].to",
                                      "unknown bus id " + std::to_string(branches[i].to));
        }
    }
};

struct TopologyReport
{
    bool is_tree = false;
    int n_components = 0;
    std::optional<std::vector<std::pair<int, int>>> cycle_witness;  // original bus ids
    std::vector<int> bfs_order;                                     // original bus ids
};

// Per-unit radial model. Buses carry internal indices 0..N-1 in BFS order
// from the root; `bus_ids` maps back to the original numbering.
struct MicrogridNetwork
{
    struct Branch
    {
        int parent = 0;  // internal index
        int child = 0;   // internal index
        double r = 0.0;  // p.u.
        double x = 0.0;  // p.u.
        std::optional<double> l_max;  // p.u.^2, nullopt = unbounded
    };

    int n_buses = 0;
    int root = 0;  // internal index, always 0 by construction
    std::vector<int> bus_ids;
    std::vector<Branch> branches;  // E = N - 1, ordered by child BFS position
    Eigen::VectorXd v_min2;        // squared magnitude bounds, p.u.^2
    Eigen::VectorXd v_max2;
    std::vector<int> ess_buses;   // internal indices, in configuration order
    std::vector<int> load_buses;  // internal indices, every non-ESS bus
    Eigen::VectorXd p_load_mw;    // per internal bus; zero at ESS buses
    Eigen::VectorXd q_load_mvar;
    double base_mva = 0.0;
    std::vector<std::string> conversion_log;

    int n_branches() const { return static_cast<int>(branches.size()); }
    int internal_index(int original_id) const
    {
        for (int i = 0; i < n_buses; ++i)
            if (bus_ids[i] == original_id)
                return i;
        throw std::out_of_range("unknown bus id " + std::to_string(original_id));
    }
};

// ---------------------------------------------------------------------------
// MATPOWER-subset parser
//
// Reads the base power scalar plus the bus and branch matrices of a MATPOWER
// case file. Generator and cost blocks are ignored. Branch rows whose status
// column is 0 (out-of-service tie switches) are dropped. Files that carry the
// usual "impedances in ohms, converted to p.u. below" postscript are flagged
// ImpedanceUnit::Ohm; conversion happens in to_per_unit().
// ---------------------------------------------------------------------------

namespace detail {

inline std::string strip_comment(const std::string &line)
{
    const auto pos = line.find('%');
    return pos == std::string::npos ? line : line.substr(0, pos);
}

inline bool parse_number(const std::string &tok, double &out)
{
    try
    {
        std::size_t used = 0;
        out = std::stod(tok, &used);
        return used == tok.size();
    }
    catch (const std::exception &)
    {
        return false;
    }
}

inline std::string strip_all_comments(const std::string &text)
{
    std::string out;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line))
        out += strip_comment(line) + "\n";
    return out;
}

// Locates `name` used as an assignment target, i.e. followed by '='.
inline std::size_t find_assignment(const std::string &code, const std::string &name)
{
    std::size_t pos = 0;
    while ((pos = code.find(name, pos)) != std::string::npos)
    {
        std::size_t after = pos + name.size();
        while (after < code.size() && std::isspace(static_cast<unsigned char>(code[after])))
            ++after;
        if (after < code.size() && code[after] == '=')
            return pos;
        pos = after;
    }
    return std::string::npos;
}

// Collects the numeric rows of an assignment of the form `name = [ ... ];`.
// `code` must already be comment-free.
inline std::optional<std::vector<std::vector<double>>>
extract_matrix(const std::string &code, const std::string &name)
{
    const auto key = find_assignment(code, name);
    if (key == std::string::npos)
        return std::nullopt;
    auto open = code.find('[', key);
    if (open == std::string::npos)
        return std::nullopt;
    auto close = code.find(']', open);
    if (close == std::string::npos)
        throw MalformedRow("unterminated matrix block " + name);

    std::vector<std::vector<double>> rows;
    std::string body = code.substr(open + 1, close - open - 1);

    // Rows are ';'-terminated; newlines inside a row are permitted.
    std::string row_text;
    for (char c : body)
    {
        if (c == ';')
        {
            std::istringstream toks(row_text);
            std::vector<double> row;
            std::string tok;
            while (toks >> tok)
            {
                double v;
                if (!parse_number(tok, v))
                    throw MalformedRow("non-numeric token '" + tok + "' in " + name);
                row.push_back(v);
            }
            if (!row.empty())
                rows.push_back(std::move(row));
            row_text.clear();
        }
        else
        {
            row_text += c;
        }
    }
    std::istringstream toks(row_text);
    std::string leftover;
    if (toks >> leftover)
        throw MalformedRow("row without ';' terminator in " + name);
    return rows;
}

inline std::optional<double> extract_scalar(const std::string &code, const std::string &name)
{
    auto key = find_assignment(code, name);
    if (key == std::string::npos)
        return std::nullopt;
    auto eq = code.find('=', key);
    auto semi = code.find(';', eq);
    if (eq == std::string::npos || semi == std::string::npos)
        throw MalformedRow("malformed assignment for " + name);
    std::string tok = code.substr(eq + 1, semi - eq - 1);
    // trim
    const auto first = tok.find_first_not_of(" \t\r\n");
    const auto last = tok.find_last_not_of(" \t\r\n");
    if (first == std::string::npos)
        throw MalformedRow("empty assignment for " + name);
    tok = tok.substr(first, last - first + 1);
    double v;
    if (!parse_number(tok, v))
        throw MalformedRow("non-numeric value for " + name);
    return v;
}

inline bool mentions_ohm_conversion(const std::string &text)
{
    if (text.find("Vbase^2") != std::string::npos)
        return true;
    std::string lower(text.size(), '\0');
    std::transform(text.begin(), text.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return lower.find("in ohms") != std::string::npos ||
           lower.find("ohms to p.u.") != std::string::npos;
}

} // namespace detail

inline NetworkCase parse_matpower_case(const std::string &text)
{
    const std::string code = detail::strip_all_comments(text);

    const auto base = detail::extract_scalar(code, "baseMVA");
    if (!base)
        throw MissingBlock("baseMVA");

    const auto bus_rows = detail::extract_matrix(code, ".bus");
    if (!bus_rows || bus_rows->empty())
        throw MissingBlock("bus");
    const auto branch_rows = detail::extract_matrix(code, ".branch");
    if (!branch_rows || branch_rows->empty())
        throw MissingBlock("branch");

    NetworkCase nc;
    nc.base_mva = *base;
    nc.units = detail::mentions_ohm_conversion(text) ? ImpedanceUnit::Ohm
                                                     : ImpedanceUnit::PerUnit;

    std::set<int> ids;
    for (const auto &row : *bus_rows)
    {
        // bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin
        if (row.size() < 4)
            throw MalformedRow("bus row with " + std::to_string(row.size()) + " columns");
        CaseBus b;
        b.id = static_cast<int>(row[0]);
        b.p_load_mw = row[2];
        b.q_load_mvar = row[3];
        if (row.size() >= 13)
        {
            b.vmax_pu = row[11];
            b.vmin_pu = row[12];
        }
        if (!ids.insert(b.id).second)
            throw DuplicateBusId(b.id);
        nc.buses.push_back(b);
    }
    if (bus_rows->front().size() >= 10)
        nc.base_kv = bus_rows->front()[9];

    for (const auto &row : *branch_rows)
    {
        // fbus tbus r x b rateA rateB rateC ratio angle status angmin angmax
        if (row.size() < 4)
            throw MalformedRow("branch row with " + std::to_string(row.size()) + " columns");
        if (row.size() >= 11 && row[10] == 0.0)
            continue;  // out-of-service tie switch
        CaseBranch br;
        br.from = static_cast<int>(row[0]);
        br.to = static_cast<int>(row[1]);
        br.r = row[2];
        br.x = row[3];
        if (row.size() >= 6 && row[5] > 0.0)
        {
            // MVA rating to squared-current bound at nominal voltage
            const double flow = row[5] / nc.base_mva;
            br.l_max_pu2 = flow * flow;
        }
        nc.branches.push_back(br);
    }

    nc.validate();
    return nc;
}

// ---------------------------------------------------------------------------
// Native JSON interchange
// ---------------------------------------------------------------------------

struct NetworkDocument
{
    NetworkCase net;
    int root = 1;
    std::vector<int> ess_buses;
};

inline NetworkDocument parse_network_json(const std::string &text)
{
    nlohmann::json j;
    try
    {
        j = nlohmann::json::parse(text);
    }
    catch (const nlohmann::json::parse_error &e)
    {
        throw SchemaViolation("<document>", e.what());
    }

    auto require = [&](const nlohmann::json &node, const char *field,
                       const std::string &path) -> const nlohmann::json & {
        if (!node.contains(field))
            throw SchemaViolation(path + "." + field, "missing");
        return node.at(field);
    };

    NetworkDocument doc;
    const auto &base = require(j, "base_mva", "$");
    if (!base.is_number() || base.get<double>() <= 0.0)
        throw SchemaViolation("$.base_mva", "must be a positive number");
    doc.net.base_mva = base.get<double>();
    doc.net.units = ImpedanceUnit::PerUnit;
    doc.root = require(j, "root", "$").get<int>();

    const auto &buses = require(j, "buses", "$");
    if (!buses.is_array() || buses.empty())
        throw SchemaViolation("$.buses", "must be a non-empty array");
    for (std::size_t i = 0; i < buses.size(); ++i)
    {
        const std::string path = "$.buses[" + std::to_string(i) + "]";
        const auto &jb = buses[i];
        CaseBus b;
        b.id = require(jb, "id", path).get<int>();
        b.p_load_mw = require(jb, "p_load_mw", path).get<double>();
        b.q_load_mvar = require(jb, "q_load_mvar", path).get<double>();
        b.vmin_pu = require(jb, "vmin_pu", path).get<double>();
        b.vmax_pu = require(jb, "vmax_pu", path).get<double>();
        doc.net.buses.push_back(b);
    }

    const auto &branches = require(j, "branches", "$");
    if (!branches.is_array())
        throw SchemaViolation("$.branches", "must be an array");
    for (std::size_t i = 0; i < branches.size(); ++i)
    {
        const std::string path = "$.branches[" + std::to_string(i) + "]";
        const auto &jb = branches[i];
        CaseBranch br;
        br.from = require(jb, "from", path).get<int>();
        br.to = require(jb, "to", path).get<int>();
        br.r = require(jb, "r_pu", path).get<double>();
        br.x = require(jb, "x_pu", path).get<double>();
        const auto &lm = require(jb, "l_max_pu2", path);
        if (!lm.is_null())
            br.l_max_pu2 = lm.get<double>();
        doc.net.branches.push_back(br);
    }

    if (j.contains("ess_buses"))
        for (const auto &e : j.at("ess_buses"))
            doc.ess_buses.push_back(e.get<int>());

    try
    {
        doc.net.validate();
    }
    catch (const SchemaViolation &)
    {
        throw;
    }
    catch (const DuplicateBusId &e)
    {
        throw SchemaViolation("$.buses", e.what());
    }
    return doc;
}

inline std::string serialize_network_json(const NetworkCase &net, int root,
                                          const std::vector<int> &ess_buses)
{
    nlohmann::json j;
    j["base_mva"] = net.base_mva;
    j["root"] = root;
    j["buses"] = nlohmann::json::array();
    for (const auto &b : net.buses)
        j["buses"].push_back({{"id", b.id},
                              {"p_load_mw", b.p_load_mw},
                              {"q_load_mvar", b.q_load_mvar},
                              {"vmin_pu", b.vmin_pu},
                              {"vmax_pu", b.vmax_pu}});
    j["branches"] = nlohmann::json::array();
    for (const auto &br : net.branches)
    {
        nlohmann::json jb = {{"from", br.from}, {"to", br.to}, {"r_pu", br.r}, {"x_pu", br.x}};
        jb["l_max_pu2"] = br.l_max_pu2 ? nlohmann::json(*br.l_max_pu2) : nlohmann::json();
        j["branches"].push_back(jb);
    }
    j["ess_buses"] = ess_buses;
    return j.dump(2);
}

// ---------------------------------------------------------------------------
// Topology
// ---------------------------------------------------------------------------

inline TopologyReport validate_radial(const NetworkCase &net, int root)
{
    if (!net.find_bus(root))
        throw UnknownRoot(root);

    const int n = static_cast<int>(net.buses.size());
    std::map<int, int> index;
    for (int i = 0; i < n; ++i)
        index.emplace(net.buses[i].id, i);

    struct Adj
    {
        int neighbour;
        int edge;
    };
    std::vector<std::vector<Adj>> adj(n);
    for (int e = 0; e < static_cast<int>(net.branches.size()); ++e)
    {
        const int a = index.at(net.branches[e].from);
        const int b = index.at(net.branches[e].to);
        adj[a].push_back({b, e});
        adj[b].push_back({a, e});
    }

    TopologyReport rep;
    std::vector<int> visited(n, 0);
    std::vector<std::pair<int, int>> cycles;

    auto bfs = [&](int start, bool record_order) {
        std::deque<int> queue{start};
        visited[start] = 1;
        if (record_order)
            rep.bfs_order.push_back(net.buses[start].id);
        std::vector<int> via_edge(n, -1);
        while (!queue.empty())
        {
            const int u = queue.front();
            queue.pop_front();
            for (const auto &[v, e] : adj[u])
            {
                if (e == via_edge[u])
                    continue;  // the tree edge we arrived through
                if (visited[v])
                {
                    cycles.emplace_back(net.branches[e].from, net.branches[e].to);
                    continue;
                }
                visited[v] = 1;
                via_edge[v] = e;
                if (record_order)
                    rep.bfs_order.push_back(net.buses[v].id);
                queue.push_back(v);
            }
        }
    };

    bfs(index.at(root), true);
    rep.n_components = 1;
    for (int i = 0; i < n; ++i)
        if (!visited[i])
        {
            ++rep.n_components;
            bfs(i, false);
        }

    if (!cycles.empty())
    {
        // the same cycle edge is reached from both endpoints; deduplicate
        std::sort(cycles.begin(), cycles.end());
        cycles.erase(std::unique(cycles.begin(), cycles.end()), cycles.end());
        rep.cycle_witness = cycles;
    }
    rep.is_tree = rep.n_components == 1 && !rep.cycle_witness;
    return rep;
}

// ---------------------------------------------------------------------------
// Per-unit conversion
// ---------------------------------------------------------------------------

struct PerUnitOptions
{
    // Uniform voltage magnitude bounds applied to every bus, overriding the
    // per-bus values of the case file.
    std::optional<double> vmin_override;
    std::optional<double> vmax_override;
};

inline MicrogridNetwork to_per_unit(const NetworkCase &net, const std::vector<int> &ess_buses,
                                    int root, const PerUnitOptions &opt = {})
{
    const TopologyReport topo = validate_radial(net, root);
    if (!topo.is_tree)
        throw NotRadial(topo.n_components > 1
                            ? "network is disconnected (" + std::to_string(topo.n_components) +
                                  " components)"
                            : "network contains a cycle");
    for (int e : ess_buses)
        if (!net.find_bus(e))
            throw EssBusUnknown(e);

    MicrogridNetwork mg;
    mg.base_mva = net.base_mva;
    mg.n_buses = static_cast<int>(net.buses.size());
    mg.root = 0;
    mg.bus_ids = topo.bfs_order;

    std::map<int, int> internal;
    for (int i = 0; i < mg.n_buses; ++i)
        internal.emplace(mg.bus_ids[i], i);

    const double z_base = net.units == ImpedanceUnit::Ohm
                              ? net.base_kv * net.base_kv / net.base_mva
                              : 1.0;
    if (net.units == ImpedanceUnit::Ohm)
        mg.conversion_log.push_back("impedances converted from ohms on Zbase=" +
                                    std::to_string(z_base) + " ohm");

    // Orient every branch parent -> child along the BFS order.
    std::vector<MicrogridNetwork::Branch> oriented;
    for (const auto &br : net.branches)
    {
        MicrogridNetwork::Branch b;
        const int ia = internal.at(br.from);
        const int ib = internal.at(br.to);
        b.parent = std::min(ia, ib);  // BFS order: parent is visited earlier
        b.child = std::max(ia, ib);
        b.r = br.r / z_base;
        b.x = br.x / z_base;
        b.l_max = br.l_max_pu2;
        oriented.push_back(b);
    }
    std::sort(oriented.begin(), oriented.end(),
              [](const auto &a, const auto &b) { return a.child < b.child; });
    mg.branches = std::move(oriented);

    mg.v_min2.resize(mg.n_buses);
    mg.v_max2.resize(mg.n_buses);
    mg.p_load_mw = Eigen::VectorXd::Zero(mg.n_buses);
    mg.q_load_mvar = Eigen::VectorXd::Zero(mg.n_buses);
    for (const auto &bus : net.buses)
    {
        const int i = internal.at(bus.id);
        const double vmin = opt.vmin_override.value_or(bus.vmin_pu);
        const double vmax = opt.vmax_override.value_or(bus.vmax_pu);
        mg.v_min2(i) = vmin * vmin;
        mg.v_max2(i) = vmax * vmax;
        mg.p_load_mw(i) = bus.p_load_mw;
        mg.q_load_mvar(i) = bus.q_load_mvar;
    }

    std::set<int> ess_set(ess_buses.begin(), ess_buses.end());
    for (int id : ess_buses)
    {
        const int i = internal.at(id);
        if (mg.p_load_mw(i) != 0.0 || mg.q_load_mvar(i) != 0.0)
        {
            mg.conversion_log.push_back("bus " + std::to_string(id) +
                                        ": native load dropped (ESS bus)");
            mg.p_load_mw(i) = 0.0;
            mg.q_load_mvar(i) = 0.0;
        }
        mg.ess_buses.push_back(i);
    }

    // Every non-ESS bus is a load bus; zero-demand ones (e.g. the islanded
    // root) stay in the set as pass-through rows with a fixed zero injection.
    std::vector<int> load_ids;
    for (const auto &bus : net.buses)
        if (!ess_set.count(bus.id))
            load_ids.push_back(bus.id);
    std::sort(load_ids.begin(), load_ids.end());
    for (int id : load_ids)
        mg.load_buses.push_back(internal.at(id));

    return mg;
}

} // namespace mgdp::netmodel

#endif // MGDP_NETMODEL_HPP
