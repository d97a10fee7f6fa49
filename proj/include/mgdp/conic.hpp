#ifndef MGDP_CONIC_HPP
#define MGDP_CONIC_HPP

#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "mgdp/ipm.hpp"

namespace mgdp::conic {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct DimensionMismatch : std::invalid_argument
{
    using std::invalid_argument::invalid_argument;
};
struct InvalidProgram : std::invalid_argument
{
    using std::invalid_argument::invalid_argument;
};

enum class Sense
{
    Minimize,
    Maximize
};

struct LinearTerm
{
    int var;
    double coeff;
};

struct EqualityRow
{
    std::vector<LinearTerm> terms;
    double rhs = 0.0;
};

/**
 * Linear-objective program over linear equalities, variable bounds, and
 * second-order cones:
 *
 *   soc_cones:      || x[vec] ||_2       <= x[t]
 *   rotated_cones:  || x[vec] ||_2^2     <= 2 x[u] x[v],  x[u], x[v] >= 0
 */
struct ConicProgram
{
    int n_vars = 0;
    Sense sense = Sense::Minimize;
    std::vector<LinearTerm> objective;
    std::vector<EqualityRow> equalities;
    Eigen::VectorXd lo, hi;

    struct Soc
    {
        int t;
        std::vector<int> vec;
    };
    struct Rotated
    {
        int u;
        int v;
        std::vector<int> vec;
    };
    std::vector<Soc> soc_cones;
    std::vector<Rotated> rotated_cones;
    std::vector<std::string> var_names;

    int add_var(std::string name, double lb = -kInf, double ub = kInf)
    {
        const int idx = n_vars++;
        var_names.push_back(std::move(name));
        lo.conservativeResize(n_vars);
        hi.conservativeResize(n_vars);
        lo(idx) = lb;
        hi(idx) = ub;
        return idx;
    }

    // Bulk variant: names "<stem>[k]" for k in [0, count).
    int add_vars(const std::string &stem, int count, double lb = -kInf, double ub = kInf)
    {
        const int first = n_vars;
        n_vars += count;
        lo.conservativeResize(n_vars);
        hi.conservativeResize(n_vars);
        for (int k = 0; k < count; ++k)
        {
            var_names.push_back(stem + "[" + std::to_string(k) + "]");
            lo(first + k) = lb;
            hi(first + k) = ub;
        }
        return first;
    }

    void add_equality(std::vector<LinearTerm> terms, double rhs)
    {
        equalities.push_back({std::move(terms), rhs});
    }

    void set_objective_term(int var, double coeff) { objective.push_back({var, coeff}); }

    void validate() const
    {
        auto check_var = [&](int v, const char *where) {
            if (v < 0 || v >= n_vars)
                throw InvalidProgram(std::string("variable index out of range in ") + where);
        };
        for (const auto &t : objective)
            check_var(t.var, "objective");
        for (const auto &row : equalities)
            for (const auto &t : row.terms)
                check_var(t.var, "equality");
        for (int j = 0; j < n_vars; ++j)
            if (lo(j) > hi(j))
                throw InvalidProgram("lo > hi for variable " + std::to_string(j));
        for (const auto &c : soc_cones)
        {
            check_var(c.t, "soc cone");
            std::set<int> seen{c.t};
            for (int v : c.vec)
            {
                check_var(v, "soc cone");
                if (!seen.insert(v).second)
                    throw InvalidProgram("repeated index in soc cone");
            }
        }
        for (const auto &c : rotated_cones)
        {
            check_var(c.u, "rotated cone");
            check_var(c.v, "rotated cone");
            std::set<int> seen{c.u, c.v};
            if (seen.size() != 2)
                throw InvalidProgram("repeated index in rotated cone");
            for (int v : c.vec)
            {
                check_var(v, "rotated cone");
                if (!seen.insert(v).second)
                    throw InvalidProgram("repeated index in rotated cone");
            }
        }
    }
};

enum class SolveStatus
{
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
    IterationLimit
};

inline const char *to_string(SolveStatus s)
{
    switch (s)
    {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::Unbounded: return "Unbounded";
    case SolveStatus::NumericalFailure: return "NumericalFailure";
    case SolveStatus::IterationLimit: return "IterationLimit";
    }
    return "?";
}

struct ResidualReport
{
    double max_eq_residual = 0.0;
    double max_bound_violation = 0.0;
    double max_cone_violation = 0.0;

    double worst() const
    {
        return std::max({max_eq_residual, max_bound_violation, max_cone_violation});
    }
};

struct ConicSolution
{
    SolveStatus status = SolveStatus::NumericalFailure;
    Eigen::VectorXd x;
    double objective_value = 0.0;
    double max_eq_residual = 0.0;
    double max_cone_violation = 0.0;
    double max_bound_violation = 0.0;
    // Duals for diagnostics: one per equality row, and per-variable bound rows.
    Eigen::VectorXd eq_duals;
    Eigen::VectorXd bound_dual_lo;
    Eigen::VectorXd bound_dual_hi;
    std::size_t iterations = 0;
    std::string note;
};

// Residuals by direct substitution; independent of any solve engine.
inline ResidualReport check_solution(const ConicProgram &p, const Eigen::VectorXd &x)
{
    if (x.size() != p.n_vars)
        throw DimensionMismatch("x has " + std::to_string(x.size()) + " entries, expected " +
                                std::to_string(p.n_vars));
    ResidualReport rep;
    for (const auto &row : p.equalities)
    {
        double v = -row.rhs;
        for (const auto &t : row.terms)
            v += t.coeff * x(t.var);
        rep.max_eq_residual = std::max(rep.max_eq_residual, std::abs(v));
    }
    for (int j = 0; j < p.n_vars; ++j)
    {
        if (std::isfinite(p.lo(j)))
            rep.max_bound_violation = std::max(rep.max_bound_violation, p.lo(j) - x(j));
        if (std::isfinite(p.hi(j)))
            rep.max_bound_violation = std::max(rep.max_bound_violation, x(j) - p.hi(j));
    }
    rep.max_bound_violation = std::max(rep.max_bound_violation, 0.0);
    for (const auto &c : p.soc_cones)
    {
        double nrm2 = 0.0;
        for (int v : c.vec)
            nrm2 += x(v) * x(v);
        rep.max_cone_violation =
            std::max(rep.max_cone_violation, std::sqrt(nrm2) - x(c.t));
    }
    for (const auto &c : p.rotated_cones)
    {
        double nrm2 = 0.0;
        for (int v : c.vec)
            nrm2 += x(v) * x(v);
        rep.max_cone_violation = std::max(
            {rep.max_cone_violation, nrm2 - 2.0 * x(c.u) * x(c.v), -x(c.u), -x(c.v)});
    }
    rep.max_cone_violation = std::max(rep.max_cone_violation, 0.0);
    return rep;
}

struct SolverSettings
{
    double tol = 1e-8;           // feasibility and relative-gap tolerance
    std::size_t max_iters = 100;
};

namespace detail {

struct Compiled
{
    ipm::SparseMat G, A;
    ipm::Vec c, h, b;
    std::size_t n_nonneg = 0;
    std::vector<std::size_t> soc_dims;

    std::vector<int> new_index;     // n_vars, -1 for presolved-out fixed vars
    std::vector<double> fixed_val;  // value when new_index == -1
    std::vector<int> eq_row;        // equality -> A row, -1 when dropped
    std::vector<int> lo_row, hi_row;  // variable -> G row, -1 when absent
    bool infeasible = false;
    std::string note;
};

inline Compiled compile(const ConicProgram &p)
{
    Compiled out;
    out.new_index.assign(p.n_vars, -1);
    out.fixed_val.assign(p.n_vars, 0.0);
    out.lo_row.assign(p.n_vars, -1);
    out.hi_row.assign(p.n_vars, -1);

    int n_free = 0;
    for (int j = 0; j < p.n_vars; ++j)
    {
        if (std::isfinite(p.lo(j)) && p.lo(j) == p.hi(j))
            out.fixed_val[j] = p.lo(j);
        else
            out.new_index[j] = n_free++;
    }

    // Objective (internally always minimization).
    const double obj_sign = p.sense == Sense::Maximize ? -1.0 : 1.0;
    out.c = ipm::Vec::Zero(n_free);
    for (const auto &t : p.objective)
        if (out.new_index[t.var] >= 0)
            out.c(out.new_index[t.var]) += obj_sign * t.coeff;

    // Equalities with fixed variables folded into the right-hand side.
    std::vector<Eigen::Triplet<double>> at;
    std::vector<double> bv;
    out.eq_row.assign(p.equalities.size(), -1);
    for (std::size_t i = 0; i < p.equalities.size(); ++i)
    {
        const auto &row = p.equalities[i];
        double rhs = row.rhs;
        bool any_free = false;
        for (const auto &t : row.terms)
        {
            if (out.new_index[t.var] >= 0)
                any_free = true;
            else
                rhs -= t.coeff * out.fixed_val[t.var];
        }
        if (!any_free)
        {
            if (std::abs(rhs) > 1e-9)
            {
                out.infeasible = true;
                out.note = "equality row " + std::to_string(i) +
                           " reduces to 0 = " + std::to_string(rhs);
                return out;
            }
            continue;
        }
        const int r = static_cast<int>(bv.size());
        out.eq_row[i] = r;
        for (const auto &t : row.terms)
            if (out.new_index[t.var] >= 0)
                at.emplace_back(r, out.new_index[t.var], t.coeff);
        bv.push_back(rhs);
    }

    // Inequality rows: bounds first (nonnegative orthant), then cone blocks.
    std::vector<Eigen::Triplet<double>> gt;
    std::vector<double> hv;
    auto add_row = [&](double rhs) {
        hv.push_back(rhs);
        return static_cast<int>(hv.size()) - 1;
    };

    for (int j = 0; j < p.n_vars; ++j)
    {
        if (out.new_index[j] < 0)
            continue;
        if (std::isfinite(p.lo(j)))
        {
            const int r = add_row(-p.lo(j));  // -x <= -lo
            gt.emplace_back(r, out.new_index[j], -1.0);
            out.lo_row[j] = r;
        }
        if (std::isfinite(p.hi(j)))
        {
            const int r = add_row(p.hi(j));  // x <= hi
            gt.emplace_back(r, out.new_index[j], 1.0);
            out.hi_row[j] = r;
        }
    }

    // Degenerate cones (no vector part) reduce to sign constraints.
    for (const auto &c : p.soc_cones)
        if (c.vec.empty())
        {
            const int r = add_row(out.new_index[c.t] >= 0 ? 0.0 : out.fixed_val[c.t]);
            if (out.new_index[c.t] >= 0)
                gt.emplace_back(r, out.new_index[c.t], -1.0);
        }
    for (const auto &c : p.rotated_cones)
        if (c.vec.empty())
            for (int var : {c.u, c.v})
            {
                const int r = add_row(out.new_index[var] >= 0 ? 0.0 : out.fixed_val[var]);
                if (out.new_index[var] >= 0)
                    gt.emplace_back(r, out.new_index[var], -1.0);
            }

    out.n_nonneg = hv.size();
    if (out.n_nonneg == 0 && p.soc_cones.empty() && p.rotated_cones.empty())
        add_row(1.0), out.n_nonneg = 1;  // engine expects at least one cone row

    // Cone row helper: s_row = sum coeff_k x_k + const  =>  G = -coeffs, h = const.
    auto cone_row = [&](const std::vector<std::pair<int, double>> &terms) {
        double rhs = 0.0;
        const int r = static_cast<int>(hv.size());
        for (const auto &[var, coeff] : terms)
        {
            if (out.new_index[var] >= 0)
                gt.emplace_back(r, out.new_index[var], -coeff);
            else
                rhs += coeff * out.fixed_val[var];
        }
        hv.push_back(rhs);
    };

    for (const auto &c : p.soc_cones)
    {
        if (c.vec.empty())
            continue;
        cone_row({{c.t, 1.0}});
        for (int v : c.vec)
            cone_row({{v, 1.0}});
        out.soc_dims.push_back(c.vec.size() + 1);
    }
    const double sqrt2 = std::sqrt(2.0);
    for (const auto &c : p.rotated_cones)
    {
        if (c.vec.empty())
            continue;
        cone_row({{c.u, 1.0}, {c.v, 1.0}});
        cone_row({{c.u, 1.0}, {c.v, -1.0}});
        for (int v : c.vec)
            cone_row({{v, sqrt2}});
        out.soc_dims.push_back(c.vec.size() + 2);
    }

    out.A.resize(static_cast<Eigen::Index>(bv.size()), n_free);
    out.A.setFromTriplets(at.begin(), at.end());
    out.b = Eigen::Map<ipm::Vec>(bv.data(), static_cast<Eigen::Index>(bv.size()));
    out.G.resize(static_cast<Eigen::Index>(hv.size()), n_free);
    out.G.setFromTriplets(gt.begin(), gt.end());
    out.h = Eigen::Map<ipm::Vec>(hv.data(), static_cast<Eigen::Index>(hv.size()));
    return out;
}

} // namespace detail

inline ConicSolution solve_conic(const ConicProgram &p, const SolverSettings &settings = {})
{
    p.validate();
    ConicSolution sol;
    sol.eq_duals = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.equalities.size()));
    sol.bound_dual_lo = Eigen::VectorXd::Zero(p.n_vars);
    sol.bound_dual_hi = Eigen::VectorXd::Zero(p.n_vars);

    detail::Compiled cp = detail::compile(p);
    if (cp.infeasible)
    {
        sol.status = SolveStatus::Infeasible;
        sol.note = cp.note;
        return sol;
    }

    auto expand = [&](const ipm::Vec &xfree) {
        sol.x.resize(p.n_vars);
        for (int j = 0; j < p.n_vars; ++j)
            sol.x(j) = cp.new_index[j] >= 0 ? xfree(cp.new_index[j]) : cp.fixed_val[j];
    };

    if (cp.c.size() == 0)
    {
        // Everything fixed: the program is a finite set of assertions.
        expand(ipm::Vec());
        const ResidualReport rep = check_solution(p, sol.x);
        sol.max_eq_residual = rep.max_eq_residual;
        sol.max_bound_violation = rep.max_bound_violation;
        sol.max_cone_violation = rep.max_cone_violation;
        sol.status = rep.worst() <= settings.tol ? SolveStatus::Optimal
                                                 : SolveStatus::Infeasible;
        for (const auto &t : p.objective)
            sol.objective_value += t.coeff * sol.x(t.var);
        return sol;
    }

    ipm::Settings is;
    is.feastol = settings.tol;
    is.abstol = settings.tol;
    is.reltol = settings.tol;
    is.max_iters = settings.max_iters;
    ipm::Solver engine(cp.G, cp.A, cp.c, cp.h, cp.b, cp.n_nonneg, cp.soc_dims, is);
    const ipm::ExitCode code = engine.solve();

    switch (code)
    {
    case ipm::ExitCode::Optimal:
        sol.status = SolveStatus::Optimal;
        break;
    case ipm::ExitCode::PrimalInfeasible:
        sol.status = SolveStatus::Infeasible;
        break;
    case ipm::ExitCode::DualInfeasible:
        sol.status = SolveStatus::Unbounded;
        break;
    case ipm::ExitCode::MaxIterations:
        sol.status = SolveStatus::IterationLimit;
        break;
    case ipm::ExitCode::OptimalInaccurate:
        sol.status = SolveStatus::NumericalFailure;
        sol.note = "optimal only to reduced accuracy";
        break;
    case ipm::ExitCode::PrimalInfeasibleInaccurate:
        sol.status = SolveStatus::NumericalFailure;
        sol.note = "infeasibility certificate only to reduced accuracy";
        break;
    default:
        sol.status = SolveStatus::NumericalFailure;
        break;
    }
    sol.iterations = engine.info().iter;

    if (sol.status == SolveStatus::Optimal ||
        sol.status == SolveStatus::NumericalFailure)
    {
        expand(engine.x());
        if (sol.x.hasNaN())
        {
            sol.status = SolveStatus::NumericalFailure;
            sol.note = "solution contains NaN";
            return sol;
        }
        for (const auto &t : p.objective)
            sol.objective_value += t.coeff * sol.x(t.var);
        const ResidualReport rep = check_solution(p, sol.x);
        sol.max_eq_residual = rep.max_eq_residual;
        sol.max_bound_violation = rep.max_bound_violation;
        sol.max_cone_violation = rep.max_cone_violation;

        const double dual_sign = p.sense == Sense::Maximize ? -1.0 : 1.0;
        for (std::size_t i = 0; i < p.equalities.size(); ++i)
            if (cp.eq_row[i] >= 0)
                sol.eq_duals(static_cast<Eigen::Index>(i)) =
                    dual_sign * engine.y()(cp.eq_row[i]);
        for (int j = 0; j < p.n_vars; ++j)
        {
            if (cp.lo_row[j] >= 0)
                sol.bound_dual_lo(j) = dual_sign * engine.z()(cp.lo_row[j]);
            if (cp.hi_row[j] >= 0)
                sol.bound_dual_hi(j) = dual_sign * engine.z()(cp.hi_row[j]);
        }
    }
    return sol;
}

// Sparse triplet dump for cross-checks against external tools.
inline std::string dump_triplets(const ConicProgram &p)
{
    std::string out;
    char buf[160];
    auto emit = [&](const char *fmt, auto... args) {
        std::snprintf(buf, sizeof(buf), fmt, args...);
        out += buf;
    };
    emit("conic program: %d vars, %zu equalities, %zu soc, %zu rotated\n", p.n_vars,
         p.equalities.size(), p.soc_cones.size(), p.rotated_cones.size());
    emit("sense %s\n", p.sense == Sense::Minimize ? "min" : "max");
    for (const auto &t : p.objective)
        emit("obj %d %.17g\n", t.var, t.coeff);
    for (std::size_t i = 0; i < p.equalities.size(); ++i)
    {
        for (const auto &t : p.equalities[i].terms)
            emit("eq %zu %d %.17g\n", i, t.var, t.coeff);
        emit("rhs %zu %.17g\n", i, p.equalities[i].rhs);
    }
    for (int j = 0; j < p.n_vars; ++j)
        if (std::isfinite(p.lo(j)) || std::isfinite(p.hi(j)))
            emit("bnd %d %.17g %.17g\n", j, p.lo(j), p.hi(j));
    for (const auto &c : p.soc_cones)
    {
        emit("soc %d :", c.t);
        for (int v : c.vec)
            emit(" %d", v);
        out += "\n";
    }
    for (const auto &c : p.rotated_cones)
    {
        emit("rot %d %d :", c.u, c.v);
        for (int v : c.vec)
            emit(" %d", v);
        out += "\n";
    }
    return out;
}

} // namespace mgdp::conic

#endif // MGDP_CONIC_HPP
