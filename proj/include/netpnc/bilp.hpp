#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace netpnc {

/// minimize c'x  subject to  A x <= b,  x in {0,1}^n
struct BinaryLinearProgram {
    Eigen::VectorXd c;
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    std::vector<std::string> variable_labels;
    std::vector<std::string> row_labels;

    std::size_t variable_count() const { return static_cast<std::size_t>(c.size()); }
    std::size_t row_count() const { return static_cast<std::size_t>(A.rows()); }

    void validate() const
    {
        if (A.cols() != c.size() && A.rows() > 0)
            throw std::invalid_argument("program: A has " + std::to_string(A.cols()) + " columns, expected " +
                                        std::to_string(c.size()));
        if (A.rows() != b.size())
            throw std::invalid_argument("program: b has wrong length");
        if (!variable_labels.empty() && variable_labels.size() != variable_count())
            throw std::invalid_argument("program: label count mismatch");
        if (!row_labels.empty() && row_labels.size() != row_count())
            throw std::invalid_argument("program: row label count mismatch");
        if (!c.allFinite() || !A.allFinite() || !b.allFinite())
            throw std::invalid_argument("program: non-finite coefficient");
    }
};

enum class SolveStatus { optimal, infeasible, budget_exhausted };

inline const char* to_string(SolveStatus s)
{
    switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::budget_exhausted: return "budget_exhausted";
    }
    return "?";
}

struct Solution {
    SolveStatus status = SolveStatus::infeasible;
    std::vector<std::uint8_t> x;
    double objective = 0.0;
    std::size_t node_count = 0;
    std::chrono::nanoseconds elapsed{0};
};

struct SolveOptions {
    std::size_t node_budget = 1'000'000;
    double feasibility_tol = 1e-9;
};

/// -1 = free, 0/1 = pinned
using PartialAssignment = std::vector<std::int8_t>;

/// Tie-break order among equal objectives: at the first index where the two
/// vectors differ, the one with the 1 is preferred.
inline bool lex_preferred(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b)
{
    for (std::size_t i = 0; i < a.size() && i < b.size(); ++i)
        if (a[i] != b[i])
            return a[i] > b[i];
    return false;
}

inline double objective_value(const BinaryLinearProgram& p, std::span<const std::uint8_t> x)
{
    double z = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j)
        if (x[j])
            z += p.c(static_cast<Eigen::Index>(j));
    return z;
}

inline bool is_feasible(const BinaryLinearProgram& p, std::span<const std::uint8_t> x, double tol = 1e-9)
{
    for (Eigen::Index i = 0; i < p.A.rows(); ++i) {
        double lhs = 0.0;
        for (Eigen::Index j = 0; j < p.A.cols(); ++j)
            if (x[static_cast<std::size_t>(j)])
                lhs += p.A(i, j);
        if (lhs > p.b(i) + tol)
            return false;
    }
    return true;
}

/// Human-readable program listing, one row per line, stable order.
inline std::string dump_program(const BinaryLinearProgram& p)
{
    auto label = [&](std::size_t j) {
        return p.variable_labels.empty() ? "x" + std::to_string(j) : p.variable_labels[j];
    };
    auto row_text = [&](auto&& coeff) {
        std::ostringstream os;
        os << std::setprecision(17);
        bool first = true;
        for (std::size_t j = 0; j < p.variable_count(); ++j) {
            const double v = coeff(j);
            if (v == 0.0)
                continue;
            os << (first ? "" : " ") << (v < 0 ? "- " : (first ? "" : "+ ")) << std::abs(v) << " " << label(j);
            first = false;
        }
        if (first)
            os << "0";
        return os.str();
    };
    std::ostringstream os;
    os << std::setprecision(17);
    os << "vars " << p.variable_count() << " rows " << p.row_count() << "\n";
    os << "min: " << row_text([&](std::size_t j) { return p.c(static_cast<Eigen::Index>(j)); }) << "\n";
    for (std::size_t i = 0; i < p.row_count(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        os << (p.row_labels.empty() ? "r" + std::to_string(i) : p.row_labels[i]) << ": "
           << row_text([&](std::size_t j) { return p.A(r, static_cast<Eigen::Index>(j)); }) << " <= " << p.b(r)
           << "\n";
    }
    return os.str();
}

namespace detail {

struct SparseRow {
    std::vector<std::pair<std::size_t, double>> entries;
    double rhs = 0.0;
};

inline std::vector<SparseRow> sparse_rows(const BinaryLinearProgram& p)
{
    std::vector<SparseRow> rows(p.row_count());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        for (Eigen::Index j = 0; j < p.A.cols(); ++j)
            if (p.A(r, j) != 0.0)
                rows[i].entries.emplace_back(static_cast<std::size_t>(j), p.A(r, j));
        rows[i].rhs = p.b(r);
    }
    return rows;
}

struct LpOutcome {
    bool feasible = false;
    double objective = 0.0;
    std::vector<double> x;
};

/// Dense two-phase primal simplex for
///   min c'x  s.t.  rows (sum a_j x_j <= rhs),  0 <= x <= 1.
/// Upper bounds are handled by variable flipping instead of extra rows.
/// Dantzig pricing, switching to Bland's rule after a run of degenerate
/// pivots.
class BoxSimplex {
public:
    BoxSimplex(std::size_t n, std::span<const double> cost, std::span<const SparseRow> rows)
        : n_(n), r_(rows.size())
    {
        std::size_t arts = 0;
        for (const auto& row : rows)
            if (row.rhs < 0.0)
                ++arts;
        ncols_ = n_ + r_ + arts;
        t_.assign(r_ * ncols_, 0.0);
        rhs_.assign(r_, 0.0);
        basis_.assign(r_, 0);
        ub_.assign(ncols_, kInf);
        flipped_.assign(ncols_, 0);
        allowed_.assign(ncols_, 1);
        cost_.assign(cost.begin(), cost.end());
        for (std::size_t j = 0; j < n_; ++j)
            ub_[j] = 1.0;

        std::size_t art = n_ + r_;
        for (std::size_t i = 0; i < r_; ++i) {
            const bool neg = rows[i].rhs < 0.0;
            const double s = neg ? -1.0 : 1.0;
            for (auto [j, a] : rows[i].entries)
                at(i, j) += s * a;
            at(i, n_ + i) = s;
            rhs_[i] = s * rows[i].rhs;
            if (neg) {
                at(i, art) = 1.0;
                basis_[i] = art++;
            } else {
                basis_[i] = n_ + i;
            }
        }
    }

    LpOutcome run()
    {
        LpOutcome out;
        // Phase 1: minimise the sum of artificials.
        if (ncols_ > n_ + r_) {
            std::vector<double> c1(ncols_, 0.0);
            for (std::size_t j = n_ + r_; j < ncols_; ++j)
                c1[j] = 1.0;
            price(c1);
            iterate();
            double infeas = 0.0;
            for (std::size_t i = 0; i < r_; ++i)
                if (basis_[i] >= n_ + r_)
                    infeas += rhs_[i];
            if (infeas > 1e-9)
                return out;
            for (std::size_t j = n_ + r_; j < ncols_; ++j)
                allowed_[j] = 0;
            drive_out_artificials();
        }

        std::vector<double> c2(ncols_, 0.0);
        for (std::size_t j = 0; j < n_; ++j)
            c2[j] = flipped_[j] ? -cost_[j] : cost_[j];
        price(c2);
        iterate();

        out.feasible = true;
        out.x.assign(n_, 0.0);
        std::vector<double> value(ncols_, 0.0);
        for (std::size_t i = 0; i < r_; ++i)
            value[basis_[i]] = rhs_[i];
        for (std::size_t j = 0; j < n_; ++j) {
            double v = flipped_[j] ? ub_[j] - value[j] : value[j];
            out.x[j] = std::clamp(v, 0.0, 1.0);
            out.objective += cost_[j] * out.x[j];
        }
        return out;
    }

private:
    static constexpr double kInf = std::numeric_limits<double>::infinity();
    static constexpr double kPivotTol = 1e-9;
    static constexpr double kCostTol = 1e-10;

    double& at(std::size_t i, std::size_t j) { return t_[i * ncols_ + j]; }

    void price(const std::vector<double>& c)
    {
        d_ = c;
        for (std::size_t i = 0; i < r_; ++i) {
            const double cb = c[basis_[i]];
            if (cb == 0.0)
                continue;
            const double* row = &t_[i * ncols_];
            for (std::size_t j = 0; j < ncols_; ++j)
                d_[j] -= cb * row[j];
        }
        for (std::size_t i = 0; i < r_; ++i)
            d_[basis_[i]] = 0.0;
    }

    void flip_nonbasic(std::size_t j)
    {
        for (std::size_t i = 0; i < r_; ++i) {
            double& a = at(i, j);
            if (a != 0.0) {
                rhs_[i] -= a * ub_[j];
                a = -a;
            }
        }
        d_[j] = -d_[j];
        flipped_[j] ^= 1;
    }

    void flip_basic_row(std::size_t i)
    {
        const auto b = basis_[i];
        double* row = &t_[i * ncols_];
        for (std::size_t k = 0; k < ncols_; ++k)
            if (k != b)
                row[k] = -row[k];
        rhs_[i] = ub_[b] - rhs_[i];
        flipped_[b] ^= 1;
    }

    void pivot(std::size_t i, std::size_t j)
    {
        double* prow = &t_[i * ncols_];
        const double inv = 1.0 / prow[j];
        for (std::size_t k = 0; k < ncols_; ++k)
            prow[k] *= inv;
        prow[j] = 1.0;
        rhs_[i] *= inv;
        for (std::size_t k = 0; k < r_; ++k) {
            if (k == i)
                continue;
            double* row = &t_[k * ncols_];
            const double f = row[j];
            if (f == 0.0)
                continue;
            for (std::size_t q = 0; q < ncols_; ++q)
                if (prow[q] != 0.0)
                    row[q] -= f * prow[q];
            row[j] = 0.0;
            rhs_[k] -= f * rhs_[i];
            if (std::abs(rhs_[k]) < 1e-13)
                rhs_[k] = 0.0;
        }
        const double f = d_[j];
        if (f != 0.0)
            for (std::size_t q = 0; q < ncols_; ++q)
                if (prow[q] != 0.0)
                    d_[q] -= f * prow[q];
        d_[j] = 0.0;
        basis_[i] = j;
    }

    void iterate()
    {
        std::vector<std::uint8_t> basic(ncols_, 0);
        for (auto b : basis_)
            basic[b] = 1;
        std::size_t degenerate = 0;
        const std::size_t max_iter = 50 * (ncols_ + r_) + 1000;
        for (std::size_t iter = 0; iter < max_iter; ++iter) {
            const bool bland = degenerate > 30;
            std::size_t enter = ncols_;
            double best = -kCostTol;
            for (std::size_t j = 0; j < ncols_; ++j) {
                if (basic[j] || !allowed_[j] || d_[j] >= -kCostTol)
                    continue;
                if (bland) {
                    enter = j;
                    break;
                }
                if (d_[j] < best) {
                    best = d_[j];
                    enter = j;
                }
            }
            if (enter == ncols_)
                return;

            double theta = ub_[enter];
            std::size_t leave = r_;
            bool to_upper = false;
            double leave_mag = 0.0;
            for (std::size_t i = 0; i < r_; ++i) {
                const double a = at(i, enter);
                double th;
                bool up;
                if (a > kPivotTol) {
                    th = rhs_[i] / a;
                    up = false;
                } else if (a < -kPivotTol && ub_[basis_[i]] < kInf) {
                    th = (ub_[basis_[i]] - rhs_[i]) / -a;
                    up = true;
                } else {
                    continue;
                }
                th = std::max(th, 0.0);
                bool take = false;
                if (th < theta - 1e-12)
                    take = true;
                else if (th <= theta + 1e-12)
                    take = leave == r_ || (bland ? basis_[i] < basis_[leave] : std::abs(a) > leave_mag);
                if (take) {
                    theta = th;
                    leave = i;
                    to_upper = up;
                    leave_mag = std::abs(a);
                }
            }
            if (theta == kInf)
                throw std::runtime_error("simplex: unbounded relaxation over a box");

            if (leave == r_) {
                flip_nonbasic(enter);
                degenerate = 0;
                continue;
            }
            degenerate = theta < 1e-12 ? degenerate + 1 : 0;
            if (to_upper)
                flip_basic_row(leave);
            basic[basis_[leave]] = 0;
            pivot(leave, enter);
            basic[enter] = 1;
        }
        throw std::runtime_error("simplex: iteration limit reached");
    }

    void drive_out_artificials()
    {
        for (std::size_t i = 0; i < r_; ++i) {
            if (basis_[i] < n_ + r_)
                continue;
            std::vector<std::uint8_t> basic(ncols_, 0);
            for (auto b : basis_)
                basic[b] = 1;
            for (std::size_t k = 0; k < n_ + r_; ++k) {
                if (!basic[k] && std::abs(at(i, k)) > kPivotTol) {
                    pivot(i, k);
                    break;
                }
            }
        }
    }

    std::size_t n_, r_, ncols_ = 0;
    std::vector<double> t_, rhs_, ub_, d_, cost_;
    std::vector<std::size_t> basis_;
    std::vector<std::uint8_t> flipped_, allowed_;
};

/// Reduces `rows` to the free variables of `fix`; false if some row is
/// violated by the pinned part alone.
inline bool restrict_to_free(std::size_t n,
                             std::span<const double> cost,
                             std::span<const SparseRow> rows,
                             const PartialAssignment& fix,
                             std::vector<std::size_t>& free_vars,
                             std::vector<double>& free_cost,
                             std::vector<SparseRow>& free_rows,
                             double& fixed_cost,
                             double tol)
{
    std::vector<std::size_t> local(n, SIZE_MAX);
    free_vars.clear();
    free_cost.clear();
    free_rows.clear();
    fixed_cost = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        if (fix[j] < 0) {
            local[j] = free_vars.size();
            free_vars.push_back(j);
            free_cost.push_back(cost[j]);
        } else if (fix[j] == 1) {
            fixed_cost += cost[j];
        }
    }
    for (const auto& row : rows) {
        SparseRow out;
        out.rhs = row.rhs;
        double maxact = 0.0;
        for (auto [j, a] : row.entries) {
            if (fix[j] < 0) {
                out.entries.emplace_back(local[j], a);
                maxact += std::max(0.0, a);
            } else if (fix[j] == 1) {
                out.rhs -= a;
            }
        }
        if (out.entries.empty()) {
            if (out.rhs < -tol)
                return false;
            continue;
        }
        if (maxact <= out.rhs + tol)
            continue;
        free_rows.push_back(std::move(out));
    }
    return true;
}

/// Bound propagation over binary domains to a fixpoint; false on proven
/// infeasibility.
inline bool propagate(std::span<const SparseRow> rows, PartialAssignment& fix, double tol)
{
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& row : rows) {
            double minact = 0.0;
            for (auto [j, a] : row.entries) {
                if (fix[j] < 0)
                    minact += std::min(0.0, a);
                else if (fix[j] == 1)
                    minact += a;
            }
            if (minact > row.rhs + tol)
                return false;
            for (auto [j, a] : row.entries) {
                if (fix[j] >= 0)
                    continue;
                if (a > 0.0 && minact + a > row.rhs + tol) {
                    fix[j] = 0;
                    changed = true;
                } else if (a < 0.0 && minact - a > row.rhs + tol) {
                    fix[j] = 1;
                    changed = true;
                }
            }
        }
    }
    return true;
}

// Can the subtree `fix` contain a vector strictly lex-preferred to `inc`?
inline bool lex_improvable(const PartialAssignment& fix, std::span<const std::uint8_t> inc)
{
    for (std::size_t i = 0; i < fix.size(); ++i) {
        if (inc[i] == 0 && fix[i] != 0)
            return true;
        if (fix[i] >= 0 && static_cast<std::uint8_t>(fix[i]) != inc[i])
            return false;
    }
    return false;
}

} // namespace detail

/// Continuous relaxation over [0,1]^n with the pinned entries of `fixed`
/// held; nullopt if the relaxation is infeasible.
inline std::optional<double> lp_relaxation_bound(const BinaryLinearProgram& prog, const PartialAssignment& fixed)
{
    prog.validate();
    const auto n = prog.variable_count();
    if (fixed.size() != n)
        throw std::invalid_argument("lp_relaxation_bound: assignment has wrong length");
    const auto rows = detail::sparse_rows(prog);
    std::vector<double> cost(prog.c.data(), prog.c.data() + n);
    std::vector<std::size_t> free_vars;
    std::vector<double> free_cost;
    std::vector<detail::SparseRow> free_rows;
    double fixed_cost = 0.0;
    if (!detail::restrict_to_free(n, cost, rows, fixed, free_vars, free_cost, free_rows, fixed_cost, 1e-9))
        return std::nullopt;
    if (free_vars.empty())
        return fixed_cost;
    auto lp = detail::BoxSimplex(free_vars.size(), free_cost, free_rows).run();
    if (!lp.feasible)
        return std::nullopt;
    return fixed_cost + lp.objective;
}

/// Exhaustive enumeration; testing oracle for `solve`.
inline Solution brute_force(const BinaryLinearProgram& prog)
{
    prog.validate();
    const auto n = prog.variable_count();
    if (n > 24)
        throw std::invalid_argument("brute_force: at most 24 variables supported");
    const auto t0 = std::chrono::steady_clock::now();
    Solution best;
    std::vector<std::uint8_t> x(n, 0);
    const std::uint64_t total = std::uint64_t{1} << n;
    for (std::uint64_t mask = 0; mask < total; ++mask) {
        for (std::size_t j = 0; j < n; ++j)
            x[j] = static_cast<std::uint8_t>((mask >> j) & 1U);
        ++best.node_count;
        if (!is_feasible(prog, x))
            continue;
        const double z = objective_value(prog, x);
        const bool have = best.status == SolveStatus::optimal;
        const double eps = 1e-9 * std::max(1.0, std::abs(best.objective));
        if (!have || z < best.objective - eps || (std::abs(z - best.objective) <= eps && lex_preferred(x, best.x))) {
            best.status = SolveStatus::optimal;
            best.x = x;
            best.objective = z;
        }
    }
    best.elapsed = std::chrono::steady_clock::now() - t0;
    return best;
}

/// Exact depth-first branch-and-bound with LP bounds and binary domain
/// propagation. Branches on the lowest-index fractional variable, 1-branch
/// first; once a node can at best tie the incumbent it branches on the
/// lowest-index free variable so the tie-break order can prune.
inline Solution solve(const BinaryLinearProgram& prog, const SolveOptions& opts = {})
{
    prog.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const auto n = prog.variable_count();
    const double tol = opts.feasibility_tol;
    const auto rows = detail::sparse_rows(prog);
    std::vector<double> cost(prog.c.data(), prog.c.data() + n);

    Solution best;
    bool have = false;
    std::vector<PartialAssignment> stack;
    stack.emplace_back(n, static_cast<std::int8_t>(-1));

    std::vector<std::size_t> free_vars;
    std::vector<double> free_cost;
    std::vector<detail::SparseRow> free_rows;
    std::vector<std::uint8_t> cand(n);

    auto push_children = [&](PartialAssignment& fix, std::size_t j) {
        PartialAssignment zero = fix;
        zero[j] = 0;
        fix[j] = 1;
        stack.push_back(std::move(zero));
        stack.push_back(std::move(fix));
    };

    while (!stack.empty()) {
        if (best.node_count >= opts.node_budget) {
            best.status = SolveStatus::budget_exhausted;
            best.elapsed = std::chrono::steady_clock::now() - t0;
            return best;
        }
        PartialAssignment fix = std::move(stack.back());
        stack.pop_back();
        ++best.node_count;

        if (!detail::propagate(rows, fix, tol))
            continue;
        double fixed_cost = 0.0;
        if (!detail::restrict_to_free(n, cost, rows, fix, free_vars, free_cost, free_rows, fixed_cost, tol))
            continue;
        double bound = fixed_cost;
        std::vector<double> xlp;
        if (!free_vars.empty()) {
            auto lp = detail::BoxSimplex(free_vars.size(), free_cost, free_rows).run();
            if (!lp.feasible)
                continue;
            bound += lp.objective;
            xlp = std::move(lp.x);
        }

        bool tie_only = false;
        if (have) {
            const double eps = 1e-9 * std::max(1.0, std::abs(best.objective));
            if (bound > best.objective + eps)
                continue;
            tie_only = bound >= best.objective - eps;
            if (tie_only && !detail::lex_improvable(fix, best.x))
                continue;
        }

        std::size_t frac = n;
        for (std::size_t k = 0; k < free_vars.size(); ++k) {
            const double v = xlp[k];
            if (v > 1e-9 && v < 1.0 - 1e-9) {
                frac = free_vars[k];
                break;
            }
        }

        if (frac == n) {
            for (std::size_t j = 0; j < n; ++j)
                cand[j] = fix[j] >= 0 ? static_cast<std::uint8_t>(fix[j]) : 0;
            for (std::size_t k = 0; k < free_vars.size(); ++k)
                cand[free_vars[k]] = xlp[k] > 0.5 ? 1 : 0;
            if (is_feasible(prog, cand, tol)) {
                const double z = objective_value(prog, cand);
                const double eps = 1e-9 * std::max(1.0, std::abs(best.objective));
                if (!have || z < best.objective - eps ||
                    (std::abs(z - best.objective) <= eps && lex_preferred(cand, best.x))) {
                    best.x = cand;
                    best.objective = z;
                    best.status = SolveStatus::optimal;
                    have = true;
                }
                if (!detail::lex_improvable(fix, best.x))
                    continue;
                tie_only = true;
            }
        }

        std::size_t branch = frac;
        if (tie_only || frac == n) {
            branch = n;
            for (std::size_t j = 0; j < n; ++j)
                if (fix[j] < 0) {
                    branch = j;
                    break;
                }
            if (branch == n)
                continue;
        }
        push_children(fix, branch);
    }

    best.status = have ? SolveStatus::optimal : SolveStatus::infeasible;
    if (!have)
        best.x.clear();
    best.elapsed = std::chrono::steady_clock::now() - t0;
    return best;
}

} // namespace netpnc
