#ifndef MGDP_LR_HPP
#define MGDP_LR_HPP

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mgdp/conic.hpp"
#include "mgdp/netmodel.hpp"

namespace mgdp::lr {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using netmodel::MicrogridNetwork;

struct DimensionMismatch : std::invalid_argument
{
    using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Problem data
// ---------------------------------------------------------------------------

/// Per-ESS parameters. Power in MW, energy in MWh, conversion factors in
/// hours; `buses` uses the original case numbering.
struct EssFleet
{
    std::vector<int> buses;
    VectorXd s_min, s_max;          // SoC bounds
    VectorXd p_ch_max, p_dis_max;   // charge/discharge power limits
    VectorXd gamma_ch, gamma_dis;   // power-to-SoC and SoC-to-power factors
    VectorXd q_min, q_max;          // inverter reactive bounds (MVAr)
    VectorXd s_init;                // initial SoC

    int size() const { return static_cast<int>(buses.size()); }

    // All fleet vectors identical across ESSs, the Table-1 style setup.
    static EssFleet uniform(std::vector<int> bus_ids, double s_min_v, double s_max_v,
                            double p_ch, double p_dis, double g_ch, double g_dis,
                            double q_min_v, double q_max_v)
    {
        EssFleet f;
        const int n = static_cast<int>(bus_ids.size());
        f.buses = std::move(bus_ids);
        f.s_min = VectorXd::Constant(n, s_min_v);
        f.s_max = VectorXd::Constant(n, s_max_v);
        f.p_ch_max = VectorXd::Constant(n, p_ch);
        f.p_dis_max = VectorXd::Constant(n, p_dis);
        f.gamma_ch = VectorXd::Constant(n, g_ch);
        f.gamma_dis = VectorXd::Constant(n, g_dis);
        f.q_min = VectorXd::Constant(n, q_min_v);
        f.q_max = VectorXd::Constant(n, q_max_v);
        f.s_init = 0.5 * (f.s_min + f.s_max);
        return f;
    }

    void validate() const
    {
        const int n = size();
        for (const VectorXd *v :
             {&s_min, &s_max, &p_ch_max, &p_dis_max, &gamma_ch, &gamma_dis, &q_min, &q_max,
              &s_init})
            if (v->size() != n)
                throw DimensionMismatch("EssFleet vector length != number of ESS buses");
        for (int k = 0; k < n; ++k)
        {
            if (!(0.0 <= s_min(k) && s_min(k) < s_max(k)))
                throw std::invalid_argument("need 0 <= s_min < s_max");
            if (!(p_ch_max(k) > 0.0 && p_dis_max(k) > 0.0))
                throw std::invalid_argument("charge/discharge limits must be positive");
            if (!(gamma_ch(k) > 0.0 && gamma_dis(k) > 0.0))
                throw std::invalid_argument("conversion factors must be positive");
            if (!(s_min(k) <= s_init(k) && s_init(k) <= s_max(k)))
                throw std::invalid_argument("s_init outside SoC bounds");
            if (!(q_min(k) <= q_max(k)))
                throw std::invalid_argument("need q_min <= q_max");
        }
    }
};

/// Demand forecast magnitudes (stored positive, MW / MVAr) and pickup
/// weights, one row per load bus. Zero rows mark pass-through buses whose
/// injection is structurally zero.
struct LoadForecast
{
    int horizon = 0;
    MatrixXd p_hat;    // N_L x T
    MatrixXd q_hat;    // N_L x T
    MatrixXd weights;  // N_L x T
    double pickup_cap = 1.0;

    static LoadForecast constant(const MicrogridNetwork &net, int horizon)
    {
        LoadForecast f;
        f.horizon = horizon;
        const int nl = static_cast<int>(net.load_buses.size());
        f.p_hat.resize(nl, horizon);
        f.q_hat.resize(nl, horizon);
        for (int j = 0; j < nl; ++j)
        {
            f.p_hat.row(j).setConstant(net.p_load_mw(net.load_buses[j]));
            f.q_hat.row(j).setConstant(net.q_load_mvar(net.load_buses[j]));
        }
        f.weights = MatrixXd::Ones(nl, horizon);
        return f;
    }

    void validate(int n_load) const
    {
        if (horizon < 1)
            throw std::invalid_argument("horizon must be >= 1");
        if (p_hat.rows() != n_load || p_hat.cols() != horizon || q_hat.rows() != n_load ||
            q_hat.cols() != horizon || weights.rows() != n_load || weights.cols() != horizon)
            throw DimensionMismatch("forecast dimensions must be N_L x T");
        if ((p_hat.array() < 0.0).any() || (q_hat.array() < 0.0).any())
            throw std::invalid_argument("forecast magnitudes must be nonnegative");
        if ((weights.array() < 0.0).any())
            throw std::invalid_argument("pickup weights must be nonnegative");
        if (pickup_cap < 1.0)
            throw std::invalid_argument("pickup cap must be >= 1");
    }
};

/// Binary charge(1)/discharge(0) decisions, one per (ESS, time step).
/// Flat indices follow the stacked-over-time convention: j = t * N_E + k.
struct ModeVector
{
    Eigen::MatrixXi bits;  // N_E x T

    static ModeVector zeros(int n_ess, int horizon)
    {
        ModeVector d;
        d.bits = Eigen::MatrixXi::Zero(n_ess, horizon);
        return d;
    }
    static ModeVector ones(int n_ess, int horizon)
    {
        ModeVector d;
        d.bits = Eigen::MatrixXi::Ones(n_ess, horizon);
        return d;
    }

    int n_ess() const { return static_cast<int>(bits.rows()); }
    int horizon() const { return static_cast<int>(bits.cols()); }
    int flat_size() const { return n_ess() * horizon(); }

    int flat(int j) const { return bits(j % n_ess(), j / n_ess()); }
    void set_flat(int j, int value) { bits(j % n_ess(), j / n_ess()) = value; }

    std::vector<std::uint8_t> key() const
    {
        std::vector<std::uint8_t> k(flat_size());
        for (int j = 0; j < flat_size(); ++j)
            k[j] = static_cast<std::uint8_t>(flat(j));
        return k;
    }

    int hamming(const ModeVector &other) const
    {
        return static_cast<int>((bits - other.bits).cwiseAbs().sum());
    }

    void validate() const
    {
        if (((bits.array() != 0) && (bits.array() != 1)).any())
            throw std::invalid_argument("mode bits must be 0 or 1");
    }

    bool operator==(const ModeVector &o) const { return bits == o.bits; }
};

/// Load pickup fractions, one row per load bus. For LR outputs the entries
/// lie in [0, 1] and are nondecreasing along each row; noisy intermediates
/// satisfy neither.
struct PickupMatrix
{
    MatrixXd values;  // N_L x T

    double l1_distance(const PickupMatrix &o) const
    {
        return (values - o.values).cwiseAbs().sum();
    }
    double l2_distance(const PickupMatrix &o) const { return (values - o.values).norm(); }
};

/// Bundles all LR(d) problem data. Immutable once constructed.
struct LrContext
{
    MicrogridNetwork network;
    EssFleet ess;
    LoadForecast forecast;
    double base_mva = 0.0;

    int n_buses() const { return network.n_buses; }
    int n_branches() const { return network.n_branches(); }
    int n_load() const { return static_cast<int>(network.load_buses.size()); }
    int n_ess() const { return ess.size(); }
    int horizon() const { return forecast.horizon; }

    static LrContext make(MicrogridNetwork net, EssFleet fleet, LoadForecast fc)
    {
        LrContext ctx{std::move(net), std::move(fleet), std::move(fc), 0.0};
        ctx.base_mva = ctx.network.base_mva;
        ctx.validate();
        return ctx;
    }

    void validate() const
    {
        ess.validate();
        forecast.validate(n_load());
        if (ess.size() != static_cast<int>(network.ess_buses.size()))
            throw DimensionMismatch("fleet size != number of ESS buses in the network");
        for (int k = 0; k < ess.size(); ++k)
            if (network.internal_index(ess.buses[k]) != network.ess_buses[k])
                throw std::invalid_argument("fleet bus order must match network.ess_buses");
    }
};

// ---------------------------------------------------------------------------
// Variable layout of the conic encoding
// ---------------------------------------------------------------------------

/// Maps (entity, time) pairs to conic-program variable indices. Families are
/// laid out time-major, matching the flat mode-vector convention.
struct LrIndexMap
{
    int n_buses = 0, n_branches = 0, n_load = 0, n_ess = 0, horizon = 0;
    int v0 = -1, l0 = -1, lhalf0 = -1, flow_p0 = -1, flow_q0 = -1;
    int inj_p0 = -1, inj_q0 = -1, pch0 = -1, pdis0 = -1, soc0 = -1;
    int r0 = -1;    // LR pickup block; -1 in FR programs
    int rho0 = -1;  // FR perturbation block; -1 in LR programs
    int d0 = -1;    // FR relaxed mode block
    int tau = -1;   // FR objective epigraph

    // equality-row bookkeeping for dual lookups, flat index t * N_E + k
    std::vector<int> eq_essnet;  // ESS net-power rows
    std::vector<int> eq_soc;     // SoC recursion rows

    int v(int bus, int t) const { return v0 + t * n_buses + bus; }
    int l(int e, int t) const { return l0 + t * n_branches + e; }
    int lhalf(int e, int t) const { return lhalf0 + t * n_branches + e; }
    int P(int e, int t) const { return flow_p0 + t * n_branches + e; }
    int Q(int e, int t) const { return flow_q0 + t * n_branches + e; }
    int p(int bus, int t) const { return inj_p0 + t * n_buses + bus; }
    int q(int bus, int t) const { return inj_q0 + t * n_buses + bus; }
    int pch(int k, int t) const { return pch0 + t * n_ess + k; }
    int pdis(int k, int t) const { return pdis0 + t * n_ess + k; }
    int soc(int k, int step) const { return soc0 + step * n_ess + k; }  // step in [0, T]
    int r(int j, int t) const { return r0 + t * n_load + j; }
    int rho(int j, int t) const { return rho0 + t * n_load + j; }
    int d(int k, int t) const { return d0 + t * n_ess + k; }
};

namespace detail {

/// Emits the time-indexed power-flow physics shared by LR(d) and FR:
/// DistFlow balances, voltage drops, the current-flow rotated cones,
/// voltage/current bounds, ESS net power and reactive bounds, and the SoC
/// recursion with its initial condition. Load injections and mode coupling
/// are left to the caller.
inline LrIndexMap assemble_physics(conic::ConicProgram &prog, const LrContext &ctx)
{
    const MicrogridNetwork &net = ctx.network;
    const int N = ctx.n_buses();
    const int E = ctx.n_branches();
    const int NE = ctx.n_ess();
    const int T = ctx.horizon();
    const double base = ctx.base_mva;

    LrIndexMap ix;
    ix.n_buses = N;
    ix.n_branches = E;
    ix.n_load = ctx.n_load();
    ix.n_ess = NE;
    ix.horizon = T;

    ix.v0 = prog.add_vars("v", N * T);
    for (int t = 0; t < T; ++t)
        for (int i = 0; i < N; ++i)
        {
            prog.lo(ix.v(i, t)) = net.v_min2(i);
            prog.hi(ix.v(i, t)) = net.v_max2(i);
        }

    ix.l0 = prog.add_vars("l", E * T, 0.0, conic::kInf);
    for (int t = 0; t < T; ++t)
        for (int e = 0; e < E; ++e)
            if (net.branches[e].l_max)
                prog.hi(ix.l(e, t)) = *net.branches[e].l_max;

    ix.lhalf0 = prog.add_vars("lhalf", E * T, 0.0, conic::kInf);
    ix.flow_p0 = prog.add_vars("P", E * T);
    ix.flow_q0 = prog.add_vars("Q", E * T);
    ix.inj_p0 = prog.add_vars("p", N * T);
    ix.inj_q0 = prog.add_vars("q", N * T);
    ix.pch0 = prog.add_vars("pch", NE * T, 0.0, conic::kInf);
    ix.pdis0 = prog.add_vars("pdis", NE * T, 0.0, conic::kInf);
    ix.soc0 = prog.add_vars("soc", NE * (T + 1));

    // child branch lists per bus
    std::vector<std::vector<int>> children(N);
    for (int e = 0; e < E; ++e)
        children[net.branches[e].parent].push_back(e);
    // parent branch per non-root bus: branches are sorted by child
    std::vector<int> parent_branch(N, -1);
    for (int e = 0; e < E; ++e)
        parent_branch[net.branches[e].child] = e;

    for (int t = 0; t < T; ++t)
    {
        // Nodal balance: received power plus injection equals what is sent on.
        for (int i = 0; i < N; ++i)
        {
            std::vector<conic::LinearTerm> prow, qrow;
            if (parent_branch[i] >= 0)
            {
                const int e = parent_branch[i];
                prow.push_back({ix.P(e, t), 1.0});
                prow.push_back({ix.l(e, t), -net.branches[e].r});
                qrow.push_back({ix.Q(e, t), 1.0});
                qrow.push_back({ix.l(e, t), -net.branches[e].x});
            }
            prow.push_back({ix.p(i, t), 1.0});
            qrow.push_back({ix.q(i, t), 1.0});
            for (int e : children[i])
            {
                prow.push_back({ix.P(e, t), -1.0});
                qrow.push_back({ix.Q(e, t), -1.0});
            }
            prog.add_equality(std::move(prow), 0.0);
            prog.add_equality(std::move(qrow), 0.0);
        }

        for (int e = 0; e < E; ++e)
        {
            const auto &br = net.branches[e];
            const double z2 = br.r * br.r + br.x * br.x;
            // voltage drop along the branch
            prog.add_equality({{ix.v(br.parent, t), 1.0},
                               {ix.v(br.child, t), -1.0},
                               {ix.P(e, t), -2.0 * br.r},
                               {ix.Q(e, t), -2.0 * br.x},
                               {ix.l(e, t), z2}},
                              0.0);
            // l = 2 * lhalf so that ||(P,Q)||^2 <= 2 v lhalf = v l
            prog.add_equality({{ix.l(e, t), 1.0}, {ix.lhalf(e, t), -2.0}}, 0.0);
            prog.rotated_cones.push_back(
                {ix.v(br.parent, t), ix.lhalf(e, t), {ix.P(e, t), ix.Q(e, t)}});
        }

        // ESS buses: net power and inverter reactive capability.
        for (int k = 0; k < NE; ++k)
        {
            const int bus = net.ess_buses[k];
            ix.eq_essnet[t * NE + k] = static_cast<int>(prog.equalities.size());
            prog.add_equality(
                {{ix.p(bus, t), 1.0}, {ix.pch(k, t), 1.0}, {ix.pdis(k, t), -1.0}}, 0.0);
            prog.lo(ix.q(bus, t)) = ctx.ess.q_min(k) / base;
            prog.hi(ix.q(bus, t)) = ctx.ess.q_max(k) / base;
        }
    }

    // SoC recursion in MWh; charge/discharge variables are in p.u.
    for (int k = 0; k < NE; ++k)
    {
        prog.add_equality({{ix.soc(k, 0), 1.0}}, ctx.ess.s_init(k));
        for (int step = 0; step <= T; ++step)
        {
            prog.lo(ix.soc(k, step)) = ctx.ess.s_min(k);
            prog.hi(ix.soc(k, step)) = ctx.ess.s_max(k);
        }
        for (int t = 0; t < T; ++t)
        {
            ix.eq_soc[t * NE + k] = static_cast<int>(prog.equalities.size());
            prog.add_equality({{ix.soc(k, t + 1), 1.0},
                               {ix.soc(k, t), -1.0},
                               {ix.pch(k, t), -ctx.ess.gamma_ch(k) * base},
                               {ix.pdis(k, t), ctx.ess.gamma_dis(k) * base}},
                              0.0);
        }
    }

    return ix;
}

} // namespace detail

// ---------------------------------------------------------------------------
// LR(d)
// ---------------------------------------------------------------------------

inline std::pair<conic::ConicProgram, LrIndexMap> build_lr_program(const LrContext &ctx,
                                                                   const ModeVector &d)
{
    if (d.n_ess() != ctx.n_ess() || d.horizon() != ctx.horizon())
        throw DimensionMismatch("mode vector must be N_E x T");
    d.validate();

    conic::ConicProgram prog;
    LrIndexMap ix = detail::assemble_physics(prog, ctx);

    const int NL = ctx.n_load();
    const int T = ctx.horizon();
    const double base = ctx.base_mva;

    // Pickup variables and the constant-power-factor load ties.
    ix.r0 = prog.add_vars("r", NL * T, 0.0, ctx.forecast.pickup_cap);
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < NL; ++j)
        {
            const int bus = ctx.network.load_buses[j];
            prog.add_equality(
                {{ix.p(bus, t), 1.0}, {ix.r(j, t), ctx.forecast.p_hat(j, t) / base}}, 0.0);
            prog.add_equality(
                {{ix.q(bus, t), 1.0}, {ix.r(j, t), ctx.forecast.q_hat(j, t) / base}}, 0.0);
        }

    // Loads once picked up may not be dropped.
    for (int t = 0; t + 1 < T; ++t)
        for (int j = 0; j < NL; ++j)
        {
            const int slack = prog.add_var(
                "mono[" + std::to_string(j) + "," + std::to_string(t) + "]", 0.0, conic::kInf);
            prog.add_equality({{ix.r(j, t + 1), 1.0}, {ix.r(j, t), -1.0}, {slack, -1.0}}, 0.0);
        }

    // Mode coupling: a charging ESS cannot discharge and vice versa.
    for (int t = 0; t < T; ++t)
        for (int k = 0; k < ctx.n_ess(); ++k)
        {
            prog.hi(ix.pch(k, t)) = d.bits(k, t) ? ctx.ess.p_ch_max(k) / base : 0.0;
            prog.hi(ix.pdis(k, t)) = d.bits(k, t) ? 0.0 : ctx.ess.p_dis_max(k) / base;
        }

    prog.sense = conic::Sense::Maximize;
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < NL; ++j)
            if (ctx.forecast.weights(j, t) != 0.0)
                prog.set_objective_term(ix.r(j, t), ctx.forecast.weights(j, t));

    return {std::move(prog), ix};
}

struct LrSolution
{
    conic::SolveStatus status = conic::SolveStatus::NumericalFailure;
    PickupMatrix pickup;   // N_L x T
    MatrixXd p, q;         // bus injections, p.u. (N x T)
    MatrixXd flow_p, flow_q;  // branch flows, p.u. (E x T)
    MatrixXd v;            // squared voltage magnitudes, p.u.^2 (N x T)
    MatrixXd l;            // squared currents, p.u.^2 (E x T)
    MatrixXd soc;          // MWh, N_E x (T+1)
    MatrixXd p_ch, p_dis;  // MW, N_E x T
    double objective = 0.0;
    double max_eq_residual = 0.0;
    double max_cone_violation = 0.0;
    std::string note;

    bool optimal() const { return status == conic::SolveStatus::Optimal; }
};

struct SolveOptions
{
    double engine_tol = 1e-8;
    std::size_t max_iters = 100;
};

namespace detail {

// With no usable discharge slot the island has no power source: every
// injection, flow and current is forced to zero, which also makes the
// feasible set interior-free (an interior-point engine cannot certify it).
// The optimum is known in closed form in that case.
inline bool no_discharge_capacity(const LrContext &ctx, const ModeVector &d)
{
    for (int k = 0; k < ctx.n_ess(); ++k)
    {
        if (ctx.ess.s_init(k) <= ctx.ess.s_min(k))
            continue;  // empty storage cannot discharge at all
        for (int t = 0; t < ctx.horizon(); ++t)
            if (d.bits(k, t) == 0)
                return false;
    }
    return true;
}

inline std::optional<LrSolution> zero_power_solution(const LrContext &ctx)
{
    const MicrogridNetwork &net = ctx.network;
    // The voltage-drop chain with zero flow forces one uniform squared
    // magnitude across the island; it must fit every per-bus box.
    const double v_lo = net.v_min2.maxCoeff();
    const double v_hi = net.v_max2.minCoeff();
    if (v_lo > v_hi)
        return std::nullopt;
    const double v_flat = 0.5 * (v_lo + v_hi);

    const int N = ctx.n_buses(), E = ctx.n_branches(), NL = ctx.n_load();
    const int NE = ctx.n_ess(), T = ctx.horizon();
    LrSolution out;
    out.status = conic::SolveStatus::Optimal;
    out.note = "no discharge capacity; zero-power point is optimal";
    out.pickup.values = MatrixXd::Zero(NL, T);
    for (int j = 0; j < NL; ++j)
        for (int t = 0; t < T; ++t)
            if (ctx.forecast.p_hat(j, t) == 0.0 && ctx.forecast.q_hat(j, t) == 0.0)
                out.pickup.values(j, t) = ctx.forecast.pickup_cap;  // free of charge
    out.p = MatrixXd::Zero(N, T);
    out.q = MatrixXd::Zero(N, T);
    out.flow_p = MatrixXd::Zero(E, T);
    out.flow_q = MatrixXd::Zero(E, T);
    out.v = MatrixXd::Constant(N, T, v_flat);
    out.l = MatrixXd::Zero(E, T);
    out.soc.resize(NE, T + 1);
    for (int step = 0; step <= T; ++step)
        out.soc.col(step) = ctx.ess.s_init;
    out.p_ch = MatrixXd::Zero(NE, T);
    out.p_dis = MatrixXd::Zero(NE, T);
    out.objective = (ctx.forecast.weights.array() * out.pickup.values.array()).sum();
    return out;
}

} // namespace detail

inline LrSolution solve_lr(const LrContext &ctx, const ModeVector &d,
                           const SolveOptions &opt = {})
{
    if (d.n_ess() == ctx.n_ess() && d.horizon() == ctx.horizon() &&
        detail::no_discharge_capacity(ctx, d))
    {
        const bool s_init_in_box = (ctx.ess.s_init.array() >= ctx.ess.s_min.array()).all() &&
                                   (ctx.ess.s_init.array() <= ctx.ess.s_max.array()).all();
        if (s_init_in_box)
            if (auto closed_form = detail::zero_power_solution(ctx))
                return *closed_form;
    }

    auto [prog, ix] = build_lr_program(ctx, d);
    const conic::ConicSolution cs = conic::solve_conic(prog, {opt.engine_tol, opt.max_iters});

    LrSolution out;
    out.status = cs.status;
    out.note = cs.note;
    if (cs.x.size() != prog.n_vars)
        return out;

    const int N = ctx.n_buses(), E = ctx.n_branches(), NL = ctx.n_load();
    const int NE = ctx.n_ess(), T = ctx.horizon();
    const double base = ctx.base_mva;

    out.pickup.values.resize(NL, T);
    out.p.resize(N, T);
    out.q.resize(N, T);
    out.flow_p.resize(E, T);
    out.flow_q.resize(E, T);
    out.v.resize(N, T);
    out.l.resize(E, T);
    out.soc.resize(NE, T + 1);
    out.p_ch.resize(NE, T);
    out.p_dis.resize(NE, T);

    for (int t = 0; t < T; ++t)
    {
        for (int j = 0; j < NL; ++j)
            out.pickup.values(j, t) = cs.x(ix.r(j, t));
        for (int i = 0; i < N; ++i)
        {
            out.p(i, t) = cs.x(ix.p(i, t));
            out.q(i, t) = cs.x(ix.q(i, t));
            out.v(i, t) = cs.x(ix.v(i, t));
        }
        for (int e = 0; e < E; ++e)
        {
            out.flow_p(e, t) = cs.x(ix.P(e, t));
            out.flow_q(e, t) = cs.x(ix.Q(e, t));
            out.l(e, t) = cs.x(ix.l(e, t));
        }
        for (int k = 0; k < NE; ++k)
        {
            out.p_ch(k, t) = cs.x(ix.pch(k, t)) * base;
            out.p_dis(k, t) = cs.x(ix.pdis(k, t)) * base;
        }
    }
    for (int k = 0; k < NE; ++k)
        for (int step = 0; step <= T; ++step)
            out.soc(k, step) = cs.x(ix.soc(k, step));

    out.objective = (ctx.forecast.weights.array() * out.pickup.values.array()).sum();
    out.max_eq_residual = cs.max_eq_residual;
    out.max_cone_violation = cs.max_cone_violation;
    return out;
}

struct FeasibilityResult
{
    bool feasible = false;
    conic::SolveStatus status = conic::SolveStatus::NumericalFailure;
    std::string diagnostic;

    explicit operator bool() const { return feasible; }
};

/// True iff the feasible set of LR(d) is provably nonempty. Numerical
/// failures are indeterminate and reported as infeasible with a diagnostic.
inline FeasibilityResult is_lr_feasible(const LrContext &ctx, const ModeVector &d,
                                        const SolveOptions &opt = {})
{
    const LrSolution sol = solve_lr(ctx, d, opt);
    FeasibilityResult res;
    res.status = sol.status;
    switch (sol.status)
    {
    case conic::SolveStatus::Optimal:
        res.feasible = true;
        break;
    case conic::SolveStatus::Infeasible:
        res.feasible = false;
        res.diagnostic = "certified infeasible";
        break;
    default:
        res.feasible = false;
        res.diagnostic = std::string("indeterminate (") + conic::to_string(sol.status) +
                         "), treated as infeasible";
        break;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

struct RelaxationGap
{
    MatrixXd gap;  // E x T, v_parent * l - P^2 - Q^2
    double max_gap = 0.0;
    double min_gap = 0.0;
};

/// Exactness diagnostic for the conic relaxation of the current equation.
inline RelaxationGap relaxation_gap(const LrSolution &sol, const LrContext &ctx)
{
    const int E = ctx.n_branches(), T = ctx.horizon();
    RelaxationGap out;
    out.gap.resize(E, T);
    for (int t = 0; t < T; ++t)
        for (int e = 0; e < E; ++e)
        {
            const int parent = ctx.network.branches[e].parent;
            out.gap(e, t) = sol.v(parent, t) * sol.l(e, t) -
                            sol.flow_p(e, t) * sol.flow_p(e, t) -
                            sol.flow_q(e, t) * sol.flow_q(e, t);
        }
    out.max_gap = out.gap.maxCoeff();
    out.min_gap = out.gap.minCoeff();
    return out;
}

struct LrAudit
{
    double complementarity = 0.0;       // max p_ch * p_dis over (k, t)
    double soc_residual = 0.0;          // recursion violation, MWh
    double monotonicity_violation = 0.0;
    double voltage_violation = 0.0;     // p.u.^2 outside the box
    double balance_residual = 0.0;      // re-substituted flow equations, p.u.
    double cone_violation = 0.0;        // max(0, P^2 + Q^2 - v l)
    double pickup_box_violation = 0.0;

    double worst() const
    {
        return std::max({complementarity, soc_residual, monotonicity_violation,
                         voltage_violation, balance_residual, cone_violation,
                         pickup_box_violation});
    }
};

/// Re-derives every constraint of problem (LR) from the solution matrices
/// alone; independent of the conic encoding.
inline LrAudit audit_lr_solution(const LrContext &ctx, const LrSolution &sol)
{
    const MicrogridNetwork &net = ctx.network;
    const int N = ctx.n_buses(), E = ctx.n_branches(), NL = ctx.n_load();
    const int NE = ctx.n_ess(), T = ctx.horizon();
    LrAudit a;

    std::vector<std::vector<int>> children(N);
    std::vector<int> parent_branch(N, -1);
    for (int e = 0; e < E; ++e)
    {
        children[net.branches[e].parent].push_back(e);
        parent_branch[net.branches[e].child] = e;
    }

    for (int t = 0; t < T; ++t)
    {
        for (int i = 0; i < N; ++i)
        {
            double pbal = sol.p(i, t);
            double qbal = sol.q(i, t);
            if (parent_branch[i] >= 0)
            {
                const int e = parent_branch[i];
                pbal += sol.flow_p(e, t) - net.branches[e].r * sol.l(e, t);
                qbal += sol.flow_q(e, t) - net.branches[e].x * sol.l(e, t);
            }
            for (int e : children[i])
            {
                pbal -= sol.flow_p(e, t);
                qbal -= sol.flow_q(e, t);
            }
            a.balance_residual = std::max({a.balance_residual, std::abs(pbal), std::abs(qbal)});
            a.voltage_violation = std::max({a.voltage_violation,
                                            net.v_min2(i) - sol.v(i, t),
                                            sol.v(i, t) - net.v_max2(i)});
        }
        for (int e = 0; e < E; ++e)
        {
            const auto &br = net.branches[e];
            const double drop = sol.v(br.parent, t) - sol.v(br.child, t) -
                                2.0 * (br.r * sol.flow_p(e, t) + br.x * sol.flow_q(e, t)) +
                                (br.r * br.r + br.x * br.x) * sol.l(e, t);
            a.balance_residual = std::max(a.balance_residual, std::abs(drop));
            const double cone = sol.flow_p(e, t) * sol.flow_p(e, t) +
                                sol.flow_q(e, t) * sol.flow_q(e, t) -
                                sol.v(br.parent, t) * sol.l(e, t);
            a.cone_violation = std::max(a.cone_violation, cone);
        }
        for (int k = 0; k < NE; ++k)
        {
            a.complementarity =
                std::max(a.complementarity, std::abs(sol.p_ch(k, t) * sol.p_dis(k, t)));
            const double rec = sol.soc(k, t + 1) - sol.soc(k, t) -
                               ctx.ess.gamma_ch(k) * sol.p_ch(k, t) +
                               ctx.ess.gamma_dis(k) * sol.p_dis(k, t);
            a.soc_residual = std::max(a.soc_residual, std::abs(rec));
        }
        for (int j = 0; j < NL; ++j)
        {
            const double r = sol.pickup.values(j, t);
            a.pickup_box_violation =
                std::max({a.pickup_box_violation, -r, r - ctx.forecast.pickup_cap});
            if (t + 1 < T)
                a.monotonicity_violation = std::max(
                    a.monotonicity_violation, r - sol.pickup.values(j, t + 1));
        }
    }
    a.voltage_violation = std::max(a.voltage_violation, 0.0);
    a.cone_violation = std::max(a.cone_violation, 0.0);
    a.monotonicity_violation = std::max(a.monotonicity_violation, 0.0);
    a.pickup_box_violation = std::max(a.pickup_box_violation, 0.0);
    return a;
}

} // namespace mgdp::lr

#endif // MGDP_LR_HPP
