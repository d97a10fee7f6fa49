#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>

#include "mgdp/conic.hpp"
#include "mgdp/rng.hpp"

using namespace mgdp::conic;
using mgdp::Rng;

TEST_CASE("bound-active LP")
{
    ConicProgram p;
    const int x = p.add_var("x", 1.0, kInf);
    p.set_objective_term(x, 1.0);
    const ConicSolution sol = solve_conic(p);
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK_THAT(sol.x(x), Catch::Matchers::WithinAbs(1.0, 1e-7));
    CHECK_THAT(sol.objective_value, Catch::Matchers::WithinAbs(1.0, 1e-7));
}

TEST_CASE("euclidean norm epigraph")
{
    ConicProgram p;
    const int t = p.add_var("t");
    const int a = p.add_var("a", 3.0, 3.0);
    const int b = p.add_var("b", 4.0, 4.0);
    p.set_objective_term(t, 1.0);
    p.soc_cones.push_back({t, {a, b}});
    const ConicSolution sol = solve_conic(p);
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK_THAT(sol.x(t), Catch::Matchers::WithinAbs(5.0, 1e-6));
    CHECK(sol.max_cone_violation <= 1e-7);
}

TEST_CASE("infeasible pair of bounds")
{
    ConicProgram p;
    const int x = p.add_var("x", -kInf, 0.0);
    const int y = p.add_var("y", 1.0, kInf);
    p.add_equality({{x, 1.0}, {y, -1.0}}, 0.0);  // x = y
    p.set_objective_term(x, 1.0);
    const ConicSolution sol = solve_conic(p);
    CHECK(sol.status == SolveStatus::Infeasible);
}

TEST_CASE("unbounded minimization")
{
    ConicProgram p;
    const int x = p.add_var("x", -kInf, 0.0);
    p.set_objective_term(x, 1.0);
    const ConicSolution sol = solve_conic(p);
    CHECK(sol.status == SolveStatus::Unbounded);
}

TEST_CASE("rotated cone geometry")
{
    // min u + v subject to ||z||^2 <= 2 u v with z = 2 and u = v.
    ConicProgram p;
    const int u = p.add_var("u");
    const int v = p.add_var("v");
    const int z = p.add_var("z", 2.0, 2.0);
    p.add_equality({{u, 1.0}, {v, -1.0}}, 0.0);
    p.set_objective_term(u, 1.0);
    p.set_objective_term(v, 1.0);
    p.rotated_cones.push_back({u, v, {z}});
    const ConicSolution sol = solve_conic(p);
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK_THAT(sol.objective_value, Catch::Matchers::WithinAbs(2.0 * std::sqrt(2.0), 1e-6));
}

TEST_CASE("check_solution examples")
{
    ConicProgram p;
    const int t = p.add_var("t");
    const int a = p.add_var("a", 3.0, 3.0);
    const int b = p.add_var("b", 4.0, 4.0);
    p.soc_cones.push_back({t, {a, b}});

    SECTION("feasible point")
    {
        Eigen::Vector3d x(5.0, 3.0, 4.0);
        const ResidualReport rep = check_solution(p, x);
        CHECK(rep.worst() <= 1e-9);
    }
    SECTION("cone violation is the norm gap")
    {
        Eigen::Vector3d x(4.9, 3.0, 4.0);
        const ResidualReport rep = check_solution(p, x);
        CHECK_THAT(rep.max_cone_violation, Catch::Matchers::WithinAbs(0.1, 1e-12));
    }
    SECTION("wrong length")
    {
        Eigen::Vector2d x(1.0, 2.0);
        CHECK_THROWS_AS(check_solution(p, x), DimensionMismatch);
    }
}

TEST_CASE("maximization sense")
{
    ConicProgram p;
    p.sense = Sense::Maximize;
    const int x = p.add_var("x", 0.0, 2.5);
    p.set_objective_term(x, 3.0);
    const ConicSolution sol = solve_conic(p);
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK_THAT(sol.objective_value, Catch::Matchers::WithinAbs(7.5, 1e-6));
}

namespace {

// Fractional knapsack: max c'x, a'x <= cap, x in [0,1]^n. The greedy
// solution by c/a ratio is the exact optimum and serves as the oracle.
double knapsack_oracle(const std::vector<double> &c, const std::vector<double> &a, double cap)
{
    std::vector<std::size_t> order(c.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return c[i] / a[i] > c[j] / a[j]; });
    double obj = 0.0, used = 0.0;
    for (std::size_t i : order)
    {
        const double take = std::min(1.0, (cap - used) / a[i]);
        if (take <= 0.0)
            break;
        obj += take * c[i];
        used += take * a[i];
    }
    return obj;
}

ConicProgram knapsack_program(const std::vector<double> &c, const std::vector<double> &a,
                              double cap)
{
    ConicProgram p;
    p.sense = Sense::Maximize;
    std::vector<LinearTerm> row;
    for (std::size_t i = 0; i < c.size(); ++i)
    {
        const int v = p.add_var("x" + std::to_string(i), 0.0, 1.0);
        p.set_objective_term(v, c[i]);
        row.push_back({v, a[i]});
    }
    const int slack = p.add_var("slack", 0.0, kInf);
    row.push_back({slack, 1.0});
    p.add_equality(row, cap);
    return p;
}

} // namespace

TEST_CASE("randomized LPs agree with the greedy knapsack oracle")
{
    Rng rng(20240811);
    for (int trial = 0; trial < 40; ++trial)
    {
        const int n = 2 + static_cast<int>(rng.uniform_index(6));
        std::vector<double> c(n), a(n);
        for (int i = 0; i < n; ++i)
        {
            c[i] = rng.uniform(0.1, 3.0);
            a[i] = rng.uniform(0.2, 2.0);
        }
        const double cap = rng.uniform(0.3, 0.8) * std::accumulate(a.begin(), a.end(), 0.0);

        const ConicProgram p = knapsack_program(c, a, cap);
        const ConicSolution sol = solve_conic(p);
        REQUIRE(sol.status == SolveStatus::Optimal);
        CHECK_THAT(sol.objective_value,
                   Catch::Matchers::WithinAbs(knapsack_oracle(c, a, cap), 1e-6));
        CHECK(check_solution(p, sol.x).worst() <= 1e-7);
    }
}

TEST_CASE("randomized SOCPs agree with the box-projection oracle")
{
    // min ||x - g||_2 over the unit box; optimum is the componentwise clamp.
    Rng rng(77);
    for (int trial = 0; trial < 25; ++trial)
    {
        const int n = 1 + static_cast<int>(rng.uniform_index(6));
        ConicProgram p;
        const int t = p.add_var("t");
        p.set_objective_term(t, 1.0);
        std::vector<int> diffs;
        double expected2 = 0.0;
        for (int i = 0; i < n; ++i)
        {
            const double g = rng.uniform(-2.0, 3.0);
            const int x = p.add_var("x" + std::to_string(i), 0.0, 1.0);
            const int d = p.add_var("d" + std::to_string(i));
            p.add_equality({{d, 1.0}, {x, -1.0}}, -g);  // d = x - g
            diffs.push_back(d);
            const double clamped = std::clamp(g, 0.0, 1.0);
            expected2 += (clamped - g) * (clamped - g);
        }
        p.soc_cones.push_back({t, diffs});
        const ConicSolution sol = solve_conic(p);
        REQUIRE(sol.status == SolveStatus::Optimal);
        CHECK_THAT(sol.objective_value,
                   Catch::Matchers::WithinAbs(std::sqrt(expected2), 1e-6));
    }
}

TEST_CASE("objective monotonicity under added constraints")
{
    Rng rng(5150);
    int tested = 0;
    for (int trial = 0; trial < 30; ++trial)
    {
        const int n = 2 + static_cast<int>(rng.uniform_index(5));
        std::vector<double> c(n), a(n);
        for (int i = 0; i < n; ++i)
        {
            c[i] = rng.uniform(-1.0, 2.0);
            a[i] = rng.uniform(0.2, 2.0);
        }
        const double cap = rng.uniform(0.3, 0.9) * std::accumulate(a.begin(), a.end(), 0.0);
        ConicProgram p = knapsack_program(c, a, cap);
        p.sense = Sense::Minimize;  // minimize, so extra constraints cannot decrease it
        const ConicSolution base = solve_conic(p);
        REQUIRE(base.status == SolveStatus::Optimal);

        // Pin one variable to a random value in its box.
        ConicProgram q = p;
        const int pin = static_cast<int>(rng.uniform_index(n));
        q.add_equality({{pin, 1.0}}, rng.uniform(0.0, 1.0));
        const ConicSolution tightened = solve_conic(q);
        if (tightened.status != SolveStatus::Optimal)
            continue;  // the extra constraint can make it infeasible
        ++tested;
        CHECK(tightened.objective_value >= base.objective_value - 1e-6);
    }
    CHECK(tested >= 10);
}

TEST_CASE("objective scaling leaves the argmin unchanged")
{
    Rng rng(99);
    std::vector<double> c = {1.0, 0.4, 2.2}, a = {1.0, 0.7, 1.3};
    ConicProgram p = knapsack_program(c, a, 1.5);
    const ConicSolution base = solve_conic(p);
    REQUIRE(base.status == SolveStatus::Optimal);

    const double lambda = rng.uniform(0.5, 10.0);
    ConicProgram q = p;
    for (auto &t : q.objective)
        t.coeff *= lambda;
    const ConicSolution scaled = solve_conic(q);
    REQUIRE(scaled.status == SolveStatus::Optimal);
    CHECK_THAT(scaled.objective_value,
               Catch::Matchers::WithinRel(lambda * base.objective_value, 1e-6));
    for (int j = 0; j < p.n_vars; ++j)
        CHECK_THAT(scaled.x(j), Catch::Matchers::WithinAbs(base.x(j), 1e-5));
}

TEST_CASE("residual audit at 10x solver tolerance")
{
    ConicProgram p;
    const int t = p.add_var("t");
    const int u = p.add_var("u", 0.3, 1.0);
    const int v = p.add_var("v", -1.0, 0.5);
    p.add_equality({{u, 1.0}, {v, 1.0}}, 0.9);
    p.set_objective_term(t, 1.0);
    p.soc_cones.push_back({t, {u, v}});
    const SolverSettings settings{1e-8, 100};
    const ConicSolution sol = solve_conic(p, settings);
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK(check_solution(p, sol.x).worst() <= 10.0 * settings.tol);
}

TEST_CASE("fully fixed program reduces to assertions")
{
    ConicProgram p;
    const int x = p.add_var("x", 2.0, 2.0);
    p.add_equality({{x, 1.0}}, 2.0);
    p.set_objective_term(x, 3.0);
    const ConicSolution ok = solve_conic(p);
    CHECK(ok.status == SolveStatus::Optimal);
    CHECK_THAT(ok.objective_value, Catch::Matchers::WithinAbs(6.0, 1e-12));

    ConicProgram bad = p;
    bad.add_equality({{x, 1.0}}, 3.0);
    CHECK(solve_conic(bad).status == SolveStatus::Infeasible);
}

TEST_CASE("validate rejects malformed programs")
{
    ConicProgram p;
    const int x = p.add_var("x");
    SECTION("index out of range")
    {
        p.set_objective_term(7, 1.0);
        CHECK_THROWS_AS(solve_conic(p), InvalidProgram);
    }
    SECTION("crossed bounds")
    {
        p.lo(x) = 1.0;
        p.hi(x) = 0.0;
        CHECK_THROWS_AS(solve_conic(p), InvalidProgram);
    }
    SECTION("repeated cone index")
    {
        p.soc_cones.push_back({x, {x}});
        CHECK_THROWS_AS(solve_conic(p), InvalidProgram);
    }
}

TEST_CASE("triplet dump mentions every part")
{
    ConicProgram p;
    const int t = p.add_var("t");
    const int a = p.add_var("a", 0.0, 1.0);
    p.add_equality({{a, 2.0}}, 1.0);
    p.set_objective_term(t, 1.0);
    p.soc_cones.push_back({t, {a}});
    const std::string dump = dump_triplets(p);
    CHECK(dump.find("obj 0 1") != std::string::npos);
    CHECK(dump.find("eq 0 1 2") != std::string::npos);
    CHECK(dump.find("soc 0 : 1") != std::string::npos);
}
