#pragma once

#include "netpnc/bilp.hpp"
#include "netpnc/rng.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <string>

namespace netpnc {

using SolverFn = std::function<Solution(const BinaryLinearProgram&)>;

/// n in [1, max_n], r in [0, max_r], coefficients in [-5, 5]. Every other
/// instance is integer-valued so that ties, and hence the tie rule, occur.
inline BinaryLinearProgram random_program(Rng& rng, std::size_t max_n = 16, std::size_t max_r = 24)
{
    const auto n = 1 + uniform_index(rng, max_n);
    const auto r = uniform_index(rng, max_r + 1);
    const bool integral = uniform01(rng) < 0.5;
    auto coef = [&](double lo, double hi) {
        const double v = uniform(rng, lo, hi);
        return integral ? std::round(v) : v;
    };
    BinaryLinearProgram p;
    p.c.resize(static_cast<Eigen::Index>(n));
    p.A.resize(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(n));
    p.b.resize(static_cast<Eigen::Index>(r));
    for (std::size_t j = 0; j < n; ++j)
        p.c(static_cast<Eigen::Index>(j)) = coef(-5.0, 5.0);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < n; ++j)
            p.A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = coef(-5.0, 5.0);
        p.b(static_cast<Eigen::Index>(i)) = coef(-2.0, 5.0);
    }
    return p;
}

struct OracleReport {
    std::size_t count = 0;
    std::size_t passed = 0;
    std::optional<std::size_t> first_failure;
    std::string failure_dump;

    bool ok() const { return passed == count; }
};

/// solver(p) must agree with brute_force(p) in status, x and objective.
inline OracleReport oracle_check(std::size_t count, std::uint64_t seed, const SolverFn& solver)
{
    OracleReport rep;
    rep.count = count;
    Rng rng(seed);
    for (std::size_t k = 0; k < count; ++k) {
        const auto p = random_program(rng);
        const auto a = solver(p);
        const auto b = brute_force(p);
        bool same = a.status == b.status;
        if (same && a.status == SolveStatus::optimal)
            same = a.x == b.x && a.objective == b.objective;
        if (same) {
            ++rep.passed;
        } else if (!rep.first_failure) {
            rep.first_failure = k;
            std::string xa, xb;
            for (auto v : a.x)
                xa += v ? '1' : '0';
            for (auto v : b.x)
                xb += v ? '1' : '0';
            rep.failure_dump = "instance " + std::to_string(k) + "\n" + dump_program(p) + "solver: " +
                               to_string(a.status) + " x=" + xa + " obj=" + std::to_string(a.objective) +
                               "\nbrute force: " + to_string(b.status) + " x=" + xb + " obj=" +
                               std::to_string(b.objective) + "\n";
        }
    }
    return rep;
}

inline OracleReport oracle_check(std::size_t count, std::uint64_t seed)
{
    return oracle_check(count, seed, [](const BinaryLinearProgram& p) { return solve(p); });
}

} // namespace netpnc
