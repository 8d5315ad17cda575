#include "netpnc/bilp.hpp"
#include "netpnc/oracle_check.hpp"

#include <gtest/gtest.h>

using namespace netpnc;

namespace {

BinaryLinearProgram make(std::initializer_list<double> c)
{
    BinaryLinearProgram p;
    p.c = Eigen::VectorXd(static_cast<Eigen::Index>(c.size()));
    Eigen::Index k = 0;
    for (double v : c)
        p.c(k++) = v;
    p.A.resize(0, p.c.size());
    p.b.resize(0);
    return p;
}

void add_row(BinaryLinearProgram& p, std::initializer_list<double> a, double b)
{
    const auto r = p.A.rows();
    p.A.conservativeResize(r + 1, p.c.size());
    p.b.conservativeResize(r + 1);
    Eigen::Index k = 0;
    for (double v : a)
        p.A(r, k++) = v;
    p.b(r) = b;
}

} // namespace

TEST(Solve, SingleFreeVariable)
{
    const auto s = solve(make({-1}));
    ASSERT_EQ(s.status, SolveStatus::optimal);
    EXPECT_EQ(s.x, std::vector<std::uint8_t>{1});
    EXPECT_EQ(s.objective, -1.0);
}

TEST(Solve, TieBreakPrefersFirstVariable)
{
    auto p = make({-1, -1});
    add_row(p, {1, 1}, 1);
    const auto s = solve(p);
    EXPECT_EQ(s.objective, -1.0);
    EXPECT_EQ(s.x, (std::vector<std::uint8_t>{1, 0}));
    EXPECT_EQ(brute_force(p).x, s.x);
}

TEST(Solve, MatchesBruteForceOnRandomPrograms)
{
    Rng rng(20240601);
    for (int k = 0; k < 200; ++k) {
        const auto p = random_program(rng, 16, 24);
        const auto a = solve(p);
        const auto b = brute_force(p);
        ASSERT_EQ(a.status, b.status) << dump_program(p);
        if (a.status != SolveStatus::optimal)
            continue;
        EXPECT_EQ(a.objective, b.objective) << dump_program(p);
        EXPECT_EQ(a.x, b.x) << dump_program(p);
        EXPECT_TRUE(is_feasible(p, a.x));
        EXPECT_NEAR(a.objective, p.c.dot(Eigen::Map<const Eigen::Matrix<std::uint8_t, -1, 1>>(a.x.data(),
                                                                                              p.c.size()).cast<double>()), 1e-9);
    }
}

TEST(Solve, EqualityLikeRowsAndNegativeRhs)
{
    // x0 + x1 >= 1, x1 + x2 >= 1, minimize x0 + 2 x1 + x2
    auto p = make({1, 2, 1});
    add_row(p, {-1, -1, 0}, -1);
    add_row(p, {0, -1, -1}, -1);
    const auto s = solve(p);
    EXPECT_EQ(s.objective, 2.0);
    EXPECT_EQ(s.x, (std::vector<std::uint8_t>{1, 0, 1}));
    EXPECT_EQ(brute_force(p).x, s.x);
}

TEST(Solve, Deterministic)
{
    Rng rng(7);
    for (int k = 0; k < 20; ++k) {
        const auto p = random_program(rng);
        const auto a = solve(p);
        const auto b = solve(p);
        EXPECT_EQ(a.status, b.status);
        EXPECT_EQ(a.x, b.x);
        EXPECT_EQ(a.objective, b.objective);
        EXPECT_EQ(a.node_count, b.node_count);
    }
}

TEST(Solve, BudgetExhaustedIsDistinct)
{
    Rng rng(3);
    BinaryLinearProgram p = random_program(rng, 16, 24);
    while (solve(p).node_count < 3)
        p = random_program(rng, 16, 24);
    SolveOptions tight;
    tight.node_budget = 1;
    EXPECT_EQ(solve(p, tight).status, SolveStatus::budget_exhausted);
}

TEST(BruteForce, InfeasibleToy)
{
    auto p = make({1});
    add_row(p, {-1}, -1);
    add_row(p, {1}, 0);
    EXPECT_EQ(brute_force(p).status, SolveStatus::infeasible);
    EXPECT_EQ(solve(p).status, SolveStatus::infeasible);
}

TEST(BruteForce, EmptyProgram)
{
    const auto p = make({});
    const auto s = brute_force(p);
    EXPECT_EQ(s.status, SolveStatus::optimal);
    EXPECT_TRUE(s.x.empty());
    EXPECT_EQ(s.objective, 0.0);
    EXPECT_EQ(solve(p).status, SolveStatus::optimal);
}

TEST(BruteForce, RejectsLargePrograms)
{
    BinaryLinearProgram p;
    p.c = Eigen::VectorXd::Zero(25);
    p.A.resize(0, 25);
    p.b.resize(0);
    EXPECT_THROW(brute_force(p), std::invalid_argument);
}

TEST(Relaxation, FullyFixedEqualsObjective)
{
    Rng rng(12);
    for (int k = 0; k < 50; ++k) {
        const auto p = random_program(rng);
        const auto s = brute_force(p);
        if (s.status != SolveStatus::optimal)
            continue;
        PartialAssignment fix(s.x.begin(), s.x.end());
        const auto b = lp_relaxation_bound(p, fix);
        ASSERT_TRUE(b);
        EXPECT_NEAR(*b, s.objective, 1e-9);
    }
}

TEST(Relaxation, UnconstrainedBound)
{
    const auto b = lp_relaxation_bound(make({-1, -1}), PartialAssignment(2, -1));
    ASSERT_TRUE(b);
    EXPECT_NEAR(*b, -2.0, 1e-12);
}

TEST(Relaxation, BoundNeverExceedsOptimum)
{
    Rng rng(99);
    for (int k = 0; k < 200; ++k) {
        const auto p = random_program(rng);
        const auto s = brute_force(p);
        const auto b = lp_relaxation_bound(p, PartialAssignment(p.variable_count(), -1));
        if (s.status == SolveStatus::optimal) {
            ASSERT_TRUE(b);
            EXPECT_LE(*b, s.objective + 1e-9);
        }
    }
}

TEST(Relaxation, FixingMoreNeverLowersBound)
{
    Rng rng(4242);
    for (int k = 0; k < 200; ++k) {
        const auto p = random_program(rng);
        const auto n = p.variable_count();
        PartialAssignment fix(n, -1);
        auto prev = lp_relaxation_bound(p, fix);
        for (std::size_t step = 0; step < n && prev; ++step) {
            const auto j = uniform_index(rng, n);
            if (fix[j] >= 0)
                continue;
            fix[j] = static_cast<std::int8_t>(uniform_index(rng, 2));
            const auto next = lp_relaxation_bound(p, fix);
            if (!next)
                break;
            EXPECT_GE(*next, *prev - 1e-9);
            prev = next;
        }
    }
}

TEST(Dump, StableListing)
{
    auto p = make({-1, 2});
    add_row(p, {1, 1}, 1);
    p.variable_labels = {"a", "b"};
    p.row_labels = {"both"};
    EXPECT_EQ(dump_program(p), "vars 2 rows 1\nmin: - 1 a + 2 b\nboth: 1 a + 1 b <= 1\n");
}

TEST(OracleCheck, PassesAndCatchesCorruption)
{
    EXPECT_TRUE(oracle_check(0, 1).ok());
    EXPECT_TRUE(oracle_check(50, 5).ok());
    const auto broken = oracle_check(50, 5, [](const BinaryLinearProgram& p) {
        auto s = solve(p);
        if (!s.x.empty())
            s.x[0] ^= 1;
        return s;
    });
    EXPECT_FALSE(broken.ok());
    EXPECT_FALSE(broken.failure_dump.empty());
}
