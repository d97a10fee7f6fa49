#ifndef MGDP_PRIVACY_HPP
#define MGDP_PRIVACY_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mgdp/lr.hpp"
#include "mgdp/rng.hpp"

namespace mgdp::privacy {

using lr::LrContext;
using lr::ModeVector;
using lr::PickupMatrix;

struct NonPositiveScale : std::invalid_argument
{
    using std::invalid_argument::invalid_argument;
};
struct IndexOutOfRange : std::out_of_range
{
    using std::out_of_range::out_of_range;
};
struct InfeasibleInitialMode : std::runtime_error
{
    using std::runtime_error::runtime_error;
};
struct FlipBudgetExhausted : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Laplace sampling
// ---------------------------------------------------------------------------

/// Inverse-CDF transform of a uniform draw u in (0, 1) to Lap(b).
inline double laplace_from_uniform(double u, double b)
{
    if (!(b > 0.0))
        throw NonPositiveScale("laplace scale must be positive");
    const double centered = u - 0.5;
    const double sign = centered > 0.0 ? 1.0 : (centered < 0.0 ? -1.0 : 0.0);
    return -b * sign * std::log(1.0 - 2.0 * std::abs(centered));
}

inline double laplace_sample(double b, Rng &rng)
{
    return laplace_from_uniform(rng.uniform01(), b);
}

// ---------------------------------------------------------------------------
// The Laplace mechanism for LR
// ---------------------------------------------------------------------------

struct PrivacyConfig
{
    double epsilon = 1.0;
    double delta_lr = 0.0;
    std::uint64_t seed = 0;

    double noise_scale() const { return delta_lr / epsilon; }

    void validate() const
    {
        if (!(epsilon > 0.0))
            throw std::invalid_argument("epsilon must be positive");
        if (!(delta_lr >= 0.0))
            throw std::invalid_argument("delta_lr must be nonnegative");
    }
};

struct MechanismResult
{
    conic::SolveStatus status = conic::SolveStatus::NumericalFailure;
    PickupMatrix r_tilde;   // noisy pickup, deliberately not clipped to [0,1]
    Eigen::MatrixXd noise;  // the added w
    std::string note;
};

/// M_LR(d) = LR(d) + w with w_i iid Lap(delta_lr / epsilon). The mode vector
/// feeds the single solve_lr call and nothing after it; the noisy output is
/// the only thing post-processing may see. A zero sensitivity degenerates to
/// the identity, which is flagged since epsilon-DP is vacuous then.
inline MechanismResult dp_mechanism(const LrContext &ctx, const ModeVector &d,
                                    const PrivacyConfig &cfg,
                                    const lr::SolveOptions &opt = {})
{
    cfg.validate();
    const lr::LrSolution sol = lr::solve_lr(ctx, d, opt);

    MechanismResult out;
    out.status = sol.status;
    if (!sol.optimal())
        return out;

    const Eigen::Index rows = sol.pickup.values.rows();
    const Eigen::Index cols = sol.pickup.values.cols();
    out.noise = Eigen::MatrixXd::Zero(rows, cols);
    const double b = cfg.noise_scale();
    if (b > 0.0)
    {
        Rng rng = Rng::stream(cfg.seed, "mechanism-noise");
        // row-major draw order, one draw per pickup entry
        for (Eigen::Index j = 0; j < rows; ++j)
            for (Eigen::Index t = 0; t < cols; ++t)
                out.noise(j, t) = laplace_sample(b, rng);
    }
    else
    {
        out.note = "delta_lr = 0: mechanism degenerates to the identity, epsilon-DP vacuous";
    }
    out.r_tilde.values = sol.pickup.values + out.noise;
    return out;
}

// ---------------------------------------------------------------------------
// Mode-vector helpers
// ---------------------------------------------------------------------------

/// Flips the flat bit j (stacked over time: j = t * N_E + k).
inline ModeVector flip_bit(const ModeVector &d, int j)
{
    if (j < 0 || j >= d.flat_size())
        throw IndexOutOfRange("flat mode index " + std::to_string(j) + " out of range");
    ModeVector out = d;
    out.set_flat(j, 1 - out.flat(j));
    return out;
}

/// Memoizes LR solves by mode vector; infeasible and numerically
/// indeterminate modes are cached as "no value".
class LrCache
{
public:
    LrCache(const LrContext &ctx, lr::SolveOptions opt = {}) : ctx_(ctx), opt_(opt) {}

    const std::optional<PickupMatrix> &value(const ModeVector &d)
    {
        const auto key = d.key();
        auto it = memo_.find(key);
        if (it == memo_.end())
        {
            const lr::LrSolution sol = lr::solve_lr(ctx_, d, opt_);
            std::optional<PickupMatrix> entry;
            if (sol.optimal())
                entry = sol.pickup;
            else if (sol.status != conic::SolveStatus::Infeasible)
                ++indeterminate_;
            it = memo_.emplace(key, std::move(entry)).first;
        }
        return it->second;
    }

    bool feasible(const ModeVector &d) { return value(d).has_value(); }

    std::size_t solves() const { return memo_.size(); }
    std::size_t indeterminate() const { return indeterminate_; }

private:
    const LrContext &ctx_;
    lr::SolveOptions opt_;
    std::map<std::vector<std::uint8_t>, std::optional<PickupMatrix>> memo_;
    std::size_t indeterminate_ = 0;
};

// ---------------------------------------------------------------------------
// Bit sensitivity scores (Algorithm 1 inner loop)
// ---------------------------------------------------------------------------

enum class ScoringMode
{
    FlipDifference,  // exact one-bit finite difference of the LR value
    DualFast         // shadow prices of the charge/discharge caps
};

/// Score of each flat index j. In the default mode,
/// delta_j = || LR(flip_j(d)) - LR(d) ||_2 when the flip stays LR-feasible
/// and 0 otherwise. The fast mode prices the disabled side of each slot from
/// the equality duals of the single LR(d) solve; it is a cheap surrogate,
/// not the finite difference.
inline Eigen::VectorXd bit_sensitivity_scores(const LrContext &ctx, const ModeVector &d,
                                              LrCache &cache,
                                              ScoringMode mode = ScoringMode::FlipDifference)
{
    const int n = d.flat_size();
    Eigen::VectorXd scores = Eigen::VectorXd::Zero(n);

    if (mode == ScoringMode::DualFast)
    {
        auto [prog, ix] = lr::build_lr_program(ctx, d);
        const conic::ConicSolution cs = conic::solve_conic(prog);
        if (cs.status != conic::SolveStatus::Optimal)
            return scores;
        const double base = ctx.base_mva;
        for (int t = 0; t < d.horizon(); ++t)
            for (int k = 0; k < d.n_ess(); ++k)
            {
                const double y_net = cs.eq_duals(ix.eq_essnet[t * d.n_ess() + k]);
                const double y_soc = cs.eq_duals(ix.eq_soc[t * d.n_ess() + k]);
                double rc;  // reduced cost of the side the current bit disables
                if (d.bits(k, t) == 1)
                    rc = (y_net - ctx.ess.gamma_dis(k) * base * y_soc) *
                         ctx.ess.p_dis_max(k) / base;
                else
                    rc = (-y_net + ctx.ess.gamma_ch(k) * base * y_soc) *
                         ctx.ess.p_ch_max(k) / base;
                scores(t * d.n_ess() + k) = std::abs(rc);
            }
        return scores;
    }

    const auto &base_value = cache.value(d);
    if (!base_value)
        return scores;
    for (int j = 0; j < n; ++j)
    {
        const ModeVector flipped = flip_bit(d, j);
        const auto &val = cache.value(flipped);
        if (val)
            scores(j) = base_value->l2_distance(*val);
    }
    return scores;
}

inline Eigen::VectorXd bit_sensitivity_scores(const LrContext &ctx, const ModeVector &d,
                                              ScoringMode mode = ScoringMode::FlipDifference)
{
    LrCache cache(ctx);
    return bit_sensitivity_scores(ctx, d, cache, mode);
}

// ---------------------------------------------------------------------------
// Algorithm 2: random bit flips until LR-feasible
// ---------------------------------------------------------------------------

/// Generic flip loop driven by an arbitrary feasibility predicate.
inline ModeVector random_flip_until(ModeVector d, Rng &rng, int max_flips,
                                    const std::function<bool(const ModeVector &)> &feasible)
{
    int flips = 0;
    while (!feasible(d))
    {
        if (flips >= max_flips)
            throw FlipBudgetExhausted("no feasible mode vector within " +
                                      std::to_string(max_flips) + " flips");
        const int j = static_cast<int>(rng.uniform_index(d.flat_size()));
        d = flip_bit(d, j);
        ++flips;
    }
    return d;
}

struct ProjectionResult
{
    ModeVector d;
    PickupMatrix lr_value;
    int flips = 0;
};

/// Feasible-mode generation: repeatedly flips a uniformly random index until
/// the iterate is LR-feasible, then returns it with its LR value. A feasible
/// input passes through unchanged.
inline ProjectionResult feasible_mode_projection(const LrContext &ctx, const ModeVector &d,
                                                 Rng &rng, int max_flips, LrCache &cache)
{
    int flips = 0;
    ModeVector cur = d;
    const ModeVector out = random_flip_until(
        std::move(cur), rng, max_flips, [&](const ModeVector &m) {
            const bool ok = cache.feasible(m);
            if (!ok)
                ++flips;
            return ok;
        });
    ProjectionResult res{out, *cache.value(out), flips};
    return res;
}

inline ProjectionResult feasible_mode_projection(const LrContext &ctx, const ModeVector &d,
                                                 Rng &rng, int max_flips = 1000)
{
    LrCache cache(ctx);
    return feasible_mode_projection(ctx, d, rng, max_flips, cache);
}

// ---------------------------------------------------------------------------
// Algorithm 1: greedy approximation of the l1-sensitivity of LR
// ---------------------------------------------------------------------------

enum class Termination
{
    ToleranceMet,
    CycleDetected,
    IterationCap
};

inline const char *to_string(Termination t)
{
    switch (t)
    {
    case Termination::ToleranceMet: return "ToleranceMet";
    case Termination::CycleDetected: return "CycleDetected";
    case Termination::IterationCap: return "IterationCap";
    }
    return "?";
}

struct SensitivityTrace
{
    double delta_estimate = 0.0;
    Termination termination = Termination::IterationCap;

    struct Iteration
    {
        int k = 0;
        ModeVector d;
        Eigen::VectorXd scores;
        int j_star = -1;
        double phi = std::numeric_limits<double>::quiet_NaN();
        bool candidate_feasible = false;
        bool alg2_invoked = false;
    };
    std::vector<Iteration> iterations;

    // the adjacent feasible pair attaining delta_estimate
    std::optional<std::pair<ModeVector, ModeVector>> witness;
    int unique_iterates = 0;
    std::size_t lr_solves = 0;
    std::size_t indeterminate_solves = 0;
};

struct SensitivityOptions
{
    double tol = 1e-4;
    int max_iter = 100;
    int alg2_max_flips = 1000;
    ScoringMode scoring = ScoringMode::FlipDifference;
    lr::SolveOptions solve;
};

/// Greedy walk over one-bit flips: score every index, flip the highest
/// scorer, and track the largest l1 jump of the LR value over adjacent
/// feasible steps. Infeasible candidates are repaired with the random-flip
/// projection and skipped as candidates since adjacency is lost. Terminates
/// on a small step, a revisited mode vector, or the iteration cap; the plain
/// do-while of the reference scheme cannot terminate once the walk settles
/// into a two-cycle, hence the revisit check.
inline SensitivityTrace estimate_sensitivity(const LrContext &ctx, const ModeVector &d_init,
                                             Rng &rng, const SensitivityOptions &opt = {})
{
    LrCache cache(ctx, opt.solve);
    SensitivityTrace trace;

    if (!cache.feasible(d_init))
        throw InfeasibleInitialMode("d_init is not LR-feasible");

    std::map<std::vector<std::uint8_t>, int> visited;
    ModeVector d = d_init;
    visited.emplace(d.key(), 0);
    trace.unique_iterates = 1;

    double delta = -std::numeric_limits<double>::infinity();

    for (int k = 0; k < opt.max_iter; ++k)
    {
        SensitivityTrace::Iteration rec;
        rec.k = k;
        rec.d = d;
        rec.scores = bit_sensitivity_scores(ctx, d, cache, opt.scoring);

        // argmax with lowest-index tie break
        rec.j_star = 0;
        for (int j = 1; j < rec.scores.size(); ++j)
            if (rec.scores(j) > rec.scores(rec.j_star))
                rec.j_star = j;

        const ModeVector candidate = flip_bit(d, rec.j_star);
        ModeVector next;
        if (cache.feasible(candidate))
        {
            rec.candidate_feasible = true;
            next = candidate;
            rec.phi = cache.value(next)->l1_distance(*cache.value(d));
            if (rec.phi > delta)
            {
                delta = rec.phi;
                trace.witness = std::make_pair(d, next);
            }
        }
        else
        {
            rec.alg2_invoked = true;
            const ProjectionResult proj =
                feasible_mode_projection(ctx, candidate, rng, opt.alg2_max_flips, cache);
            next = proj.d;
            // adjacency to d is lost, so the jump is not a candidate
            rec.phi = cache.value(next)->l1_distance(*cache.value(d));
        }
        trace.iterations.push_back(rec);

        const double step_change = cache.value(next)->l1_distance(*cache.value(d));
        const auto [it, fresh] = visited.emplace(next.key(), k + 1);
        if (fresh)
            ++trace.unique_iterates;
        d = next;

        if (step_change < opt.tol)
        {
            trace.termination = Termination::ToleranceMet;
            break;
        }
        if (!fresh)
        {
            trace.termination = Termination::CycleDetected;
            break;
        }
        trace.termination = Termination::IterationCap;
    }

    trace.delta_estimate = std::max(delta, 0.0);
    trace.lr_solves = cache.solves();
    trace.indeterminate_solves = cache.indeterminate();
    return trace;
}

} // namespace mgdp::privacy

#endif // MGDP_PRIVACY_HPP
