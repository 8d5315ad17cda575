#pragma once

#include "netpnc/bilp.hpp"
#include "netpnc/channel.hpp"
#include "netpnc/network.hpp"
#include "netpnc/prediction.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <vector>

namespace netpnc {

enum class GammaMode { dijkstra, manual };

struct PncConfig {
    std::size_t horizon = 4;
    double tau = 0.1;
    std::optional<double> dummy_penalty; ///< default 10 * H * max|gamma|
    GammaMode gamma_mode = GammaMode::dijkstra;
    std::vector<double> manual_gamma;    ///< length n + 1 (dummy last) in manual mode
    bool consistency_enabled = true;
    SolveOptions solver;

    void validate(const NetworkTopology& base) const
    {
        if (horizon == 0)
            throw ConfigError("pnc: horizon must be at least 1");
        if (!(tau > 0.0 && tau < 1.0))
            throw ConfigError("pnc: tau must lie in (0,1)");
        if (dummy_penalty && !(*dummy_penalty > 0.0))
            throw ConfigError("pnc: dummy_penalty must be positive");
        if (gamma_mode == GammaMode::manual && manual_gamma.size() != base.queue_count() + 1)
            throw ConfigError("pnc: manual gamma needs one entry per queue plus the dummy queue");
    }
};

/// Queue rewards for one subsystem. Link weight = repetitions needed to
/// become reliable; gamma_i = d_i - D - 1 with d the distance to the
/// destination and D the largest finite distance. Queues that cannot reach
/// the destination receive no reward (0). The dummy queue gets 2(-D-1).
inline std::vector<double> gamma_dijkstra(const NetworkTopology& base, std::size_t destination,
                                          const Eigen::VectorXd& avg_failure, double tau)
{
    const auto n = base.queue_count();
    if (destination >= n)
        throw ConfigError("gamma: destination out of range");
    if (static_cast<std::size_t>(avg_failure.size()) != base.link_count())
        throw std::invalid_argument("gamma: one average failure probability per link required");

    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> weight(base.link_count(), inf);
    for (std::size_t j = 0; j < base.link_count(); ++j) {
        const double w = omega(avg_failure(static_cast<Eigen::Index>(j)), tau);
        // 1e-9 keeps 1/0.5 from rounding up to 3.
        if (w > 0.0)
            weight[j] = std::ceil(1.0 / w - 1e-9);
    }

    // Dijkstra towards the destination over reversed links.
    std::vector<double> dist(n, inf);
    dist[destination] = 0.0;
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
    open.push({0.0, destination});
    while (!open.empty()) {
        auto [d, v] = open.top();
        open.pop();
        if (d > dist[v])
            continue;
        for (std::size_t j = 0; j < base.link_count(); ++j) {
            const auto& l = base.link(j);
            if (l.destination != v || weight[j] == inf)
                continue;
            if (d + weight[j] < dist[l.origin]) {
                dist[l.origin] = d + weight[j];
                open.push({dist[l.origin], l.origin});
            }
        }
    }

    double big_d = 0.0;
    for (double d : dist)
        if (d != inf)
            big_d = std::max(big_d, d);
    std::vector<double> gamma(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        if (dist[i] != inf)
            gamma[i] = dist[i] - big_d - 1.0;
    gamma[n] = 2.0 * (-big_d - 1.0);
    return gamma;
}

/// reachable(origin -> destination) under the links with positive weight.
inline bool destination_reachable(const std::vector<double>& gamma, std::size_t origin, std::size_t destination)
{
    return origin == destination || gamma.at(origin) != 0.0;
}

struct PacketForecast {
    std::string packet_id;
    std::optional<std::size_t> slot; ///< absolute delivery slot; empty = beyond horizon
};

struct Activation {
    std::size_t subsystem = 0;
    std::size_t link = 0;
    std::string packet_id;
};

struct SolveStats {
    SolveStatus status = SolveStatus::optimal;
    std::size_t node_count = 0;
    double solve_seconds = 0.0;
    double assembly_seconds = 0.0;
    std::size_t variables = 0;
    std::size_t rows = 0;
    double objective = 0.0;
    std::size_t solves = 0; ///< > 1 when the consistency fallback re-solved
};

struct ControlDecision {
    std::vector<Activation> active;          ///< physical links fired this slot
    std::vector<std::uint8_t> trajectory;    ///< full solver vector (PNC) or u (MW)
    std::vector<PacketForecast> forecasts;   ///< stack order; empty for MW
    std::vector<std::string> violations;     ///< packets whose forecast could not be kept
    SolveStats stats;
};

/// Variable indices: u(t, i, l) time-major then subsystem then link; the
/// dummy controls follow, one per (subsystem, link) reliability row.
struct ProgramLayout {
    std::size_t horizon = 0;
    std::size_t subsystems = 0;
    std::size_t links = 0; ///< per subsystem, dummy link included

    std::size_t u(std::size_t t, std::size_t i, std::size_t l) const { return t * subsystems * links + i * links + l; }
    std::size_t dummy_control(std::size_t i, std::size_t l) const { return horizon * subsystems * links + i * links + l; }
    std::size_t trajectory_size() const { return horizon * subsystems * links; }
    std::size_t variable_count() const { return (horizon + 1) * subsystems * links; }
};

struct AssembledProgram {
    BinaryLinearProgram program;
    ProgramLayout layout;
    HorizonMatrices matrices;
    Eigen::VectorXd q0;
    std::vector<double> gamma; ///< stacked, one block of n + 1 per subsystem
    double dummy_penalty = 0.0;
    std::vector<std::pair<std::string, std::size_t>> consistency_rows; ///< packet -> row index
};

using ForecastBook = std::map<std::string, std::size_t>;

namespace detail {

inline std::vector<double> stacked_gamma(const PredictionStack& stack, const ChannelProcess& channel,
                                         const PncConfig& config)
{
    std::vector<double> out;
    const auto& base = stack.base();
    Eigen::VectorXd avg_fail;
    if (config.gamma_mode == GammaMode::dijkstra)
        avg_fail = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(base.link_count())) - time_averaged_success(channel);
    for (const auto& s : stack.subsystems()) {
        std::vector<double> g;
        if (config.gamma_mode == GammaMode::manual) {
            g = config.manual_gamma;
        } else {
            g = gamma_dijkstra(base, s.destination_queue, avg_fail, config.tau);
            if (!destination_reachable(g, s.origin, s.destination_queue))
                throw ConfigError("packet '" + s.packet_id + "': destination unreachable from its origin");
        }
        out.insert(out.end(), g.begin(), g.end());
    }
    return out;
}

inline std::string var_label(const PredictionStack& stack, std::size_t t, std::size_t i, std::size_t l)
{
    const auto& s = stack.subsystems()[i];
    return "u[" + std::to_string(t) + "," + s.packet_id + "," + s.topology->link(l).label + "]";
}

/// Packets constrained by consistency rows are those in `enforce`.
inline AssembledProgram assemble(const PredictionStack& stack, const ChannelProcess& channel,
                                 const PncConfig& config, const ForecastBook& enforce, std::size_t now)
{
    if (stack.empty())
        throw std::invalid_argument("assemble_program: empty stack");
    config.validate(stack.base());

    AssembledProgram out;
    const auto h = config.horizon;
    const auto s = stack.size();
    const auto mb = stack.links_per_subsystem();
    const auto nb = stack.queues_per_subsystem();
    const auto m = stack.base().link_count();
    out.layout = ProgramLayout{h, s, mb};
    const auto& lay = out.layout;

    out.matrices = build_horizon(stack, reliability_weights(stack, channel, h, config.tau));
    const auto& mx = out.matrices;
    out.q0 = stack.stacked_q0();
    out.gamma = stacked_gamma(stack, channel, config);

    double gmax = 0.0;
    for (double g : out.gamma)
        gmax = std::max(gmax, std::abs(g));
    out.dummy_penalty = config.dummy_penalty.value_or(10.0 * static_cast<double>(h) * gmax);
    if (!(out.dummy_penalty > static_cast<double>(h) * gmax))
        throw ConfigError("pnc: dummy_penalty must exceed H * max|gamma|");

    const auto nv = lay.variable_count();
    const auto nt = lay.trajectory_size();
    const auto lb = static_cast<Eigen::Index>(mx.link_block);
    const auto hq = static_cast<Eigen::Index>(h);

    // Objective: (1^T (x) gamma) stackedR+ Omega_E on u, penalty on u_D.
    Eigen::VectorXd g(static_cast<Eigen::Index>(out.gamma.size()));
    for (std::size_t k = 0; k < out.gamma.size(); ++k)
        g(static_cast<Eigen::Index>(k)) = out.gamma[k];
    const Eigen::VectorXd g_all = Eigen::kroneckerProduct(Eigen::VectorXd::Ones(hq), g).eval();
    Eigen::VectorXd c(static_cast<Eigen::Index>(nv));
    c.head(static_cast<Eigen::Index>(nt)) = mx.omega_diag.cwiseProduct(mx.stacked_rplus.transpose() * g_all);
    c.tail(lb).setConstant(out.dummy_penalty);

    const auto& groups = stack.base().conflict_groups();
    std::vector<std::pair<std::size_t, std::size_t>> cap_rows; // (t, stacked link) without dummy links
    for (std::size_t t = 0; t < h; ++t)
        for (std::size_t i = 0; i < s; ++i)
            for (std::size_t l = 0; l < m; ++l)
                cap_rows.push_back({t, i * mb + l});

    std::vector<std::pair<std::string, std::size_t>> cons; // packet, relative slot
    for (std::size_t i = 0; i < s; ++i) {
        const auto& sub = stack.subsystems()[i];
        auto it = enforce.find(sub.packet_id);
        if (it == enforce.end() || it->second <= now || it->second - now > h)
            continue;
        cons.push_back({sub.packet_id, it->second - now});
    }

    const std::size_t rows_const = h * groups.size() * (1 + s);
    const std::size_t rows_rel = mx.link_block;
    const std::size_t rows_orig = h * mx.link_block;
    const std::size_t total = rows_const + rows_rel + rows_orig + cap_rows.size() + cons.size();

    auto& p = out.program;
    p.c = std::move(c);
    p.A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(nv));
    p.b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(total));
    p.row_labels.reserve(total);
    Eigen::Index r = 0;

    // (a) one physical transmission per group and slot across all
    // subsystems; a subsystem's dummy link excludes its own physical links.
    for (std::size_t t = 0; t < h; ++t)
        for (std::size_t gi = 0; gi < groups.size(); ++gi) {
            for (std::size_t i = 0; i < s; ++i)
                for (auto l : groups[gi])
                    p.A(r, static_cast<Eigen::Index>(lay.u(t, i, l))) = 1.0;
            p.b(r) = 1.0;
            p.row_labels.push_back("group[" + std::to_string(t) + "," + std::to_string(gi) + "]");
            ++r;
            for (std::size_t i = 0; i < s; ++i) {
                for (auto l : groups[gi])
                    p.A(r, static_cast<Eigen::Index>(lay.u(t, i, l))) = 1.0;
                p.A(r, static_cast<Eigen::Index>(lay.u(t, i, m))) = 1.0;
                p.b(r) = 1.0;
                p.row_labels.push_back("dummy_excl[" + std::to_string(t) + "," + stack.subsystems()[i].packet_id +
                                       "," + std::to_string(gi) + "]");
                ++r;
            }
        }

    // (b) -Omega_C u - u_D <= -1
    p.A.block(r, 0, lb, static_cast<Eigen::Index>(nt)) = -mx.omega_C;
    p.A.block(r, static_cast<Eigen::Index>(nt), lb, lb) = -Eigen::MatrixXd::Identity(lb, lb);
    p.b.segment(r, lb).setConstant(-1.0);
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t l = 0; l < mb; ++l)
            p.row_labels.push_back("reliable[" + stack.subsystems()[i].packet_id + "," +
                                   stack.subsystems()[i].topology->link(l).label + "]");
    r += lb;

    // (c) [I - Delta(T^o R+) Omega_E] u <= 1 (x) T^o q0
    {
        const auto n_t = static_cast<Eigen::Index>(nt);
        Eigen::MatrixXd blk = -(mx.delta_origin * mx.omega_diag.asDiagonal());
        blk.diagonal().array() += 1.0;
        p.A.block(r, 0, n_t, n_t) = blk;
        const Eigen::VectorXd to_q0 = mx.origin_sel * out.q0;
        p.b.segment(r, n_t) = Eigen::kroneckerProduct(Eigen::VectorXd::Ones(hq), to_q0).eval();
        for (std::size_t t = 0; t < h; ++t)
            for (std::size_t i = 0; i < s; ++i)
                for (std::size_t l = 0; l < mb; ++l)
                    p.row_labels.push_back("origin[" + var_label(stack, t, i, l).substr(2));
        r += n_t;
    }

    // (d) [I + Delta(T^d R+) Omega_E] u <= 1 (x) (2 - T^d q0), dummy-queue rows dropped
    {
        const Eigen::MatrixXd dd = mx.delta_dest * mx.omega_diag.asDiagonal();
        const Eigen::VectorXd td_q0 = mx.dest_sel * out.q0;
        for (auto [t, k] : cap_rows) {
            const auto row = static_cast<Eigen::Index>(t * mx.link_block + k);
            p.A.row(r).head(static_cast<Eigen::Index>(nt)) = dd.row(row);
            p.A(r, row) += 1.0;
            p.b(r) = 2.0 - td_q0(static_cast<Eigen::Index>(k));
            p.row_labels.push_back("cap[" + var_label(stack, t, k / mb, k % mb).substr(2));
            ++r;
        }
    }

    // (e) keep earlier promises: predicted destination fill >= 1 by slot F - now
    for (const auto& [id, rel] : cons) {
        const auto i = *stack.index_of(id);
        const auto dq = static_cast<Eigen::Index>(i * nb + stack.subsystems()[i].destination_queue);
        const auto qrow = static_cast<Eigen::Index>((rel - 1) * mx.queue_block) + dq;
        p.A.row(r).head(static_cast<Eigen::Index>(nt)) =
            -(mx.stacked_rplus.row(qrow).cwiseProduct(mx.omega_diag.transpose()));
        p.b(r) = out.q0(dq) - (1.0 - 1e-9);
        p.row_labels.push_back("keep[" + id + "," + std::to_string(rel) + "]");
        out.consistency_rows.push_back({id, static_cast<std::size_t>(r)});
        ++r;
    }

    p.variable_labels.reserve(nv);
    for (std::size_t t = 0; t < h; ++t)
        for (std::size_t i = 0; i < s; ++i)
            for (std::size_t l = 0; l < mb; ++l)
                p.variable_labels.push_back(var_label(stack, t, i, l));
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t l = 0; l < mb; ++l)
            p.variable_labels.push_back("uD[" + stack.subsystems()[i].packet_id + "," +
                                        stack.subsystems()[i].topology->link(l).label + "]");
    return out;
}

} // namespace detail

/// Full receding-horizon program for the current stack. Consistency rows are
/// added for every packet with an earlier forecast inside the horizon.
inline AssembledProgram assemble_program(const PredictionStack& stack, const ChannelProcess& channel,
                                         std::size_t now, const PncConfig& config,
                                         const ForecastBook& prev_forecasts)
{
    return detail::assemble(stack, channel, config, config.consistency_enabled ? prev_forecasts : ForecastBook{}, now);
}

/// Predicted absolute delivery slot of each packet under the solved
/// trajectory: first q_t (t = 1..H) whose destination entry reaches 1.
inline std::vector<PacketForecast> extract_forecasts(const PredictionStack& stack, const AssembledProgram& ap,
                                                     std::span<const std::uint8_t> x, std::size_t now)
{
    const auto nt = ap.layout.trajectory_size();
    Eigen::VectorXd u(static_cast<Eigen::Index>(nt));
    for (std::size_t k = 0; k < nt; ++k)
        u(static_cast<Eigen::Index>(k)) = x[k];
    const Eigen::VectorXd q = predict_evolution(ap.q0, u, ap.matrices);
    const auto nb = stack.queues_per_subsystem();
    std::vector<PacketForecast> out;
    for (std::size_t i = 0; i < stack.size(); ++i) {
        const auto& sub = stack.subsystems()[i];
        PacketForecast f{sub.packet_id, std::nullopt};
        for (std::size_t t = 1; t <= ap.layout.horizon; ++t) {
            const auto idx = static_cast<Eigen::Index>((t - 1) * ap.matrices.queue_block + i * nb + sub.destination_queue);
            if (q(idx) >= 1.0 - 1e-9) {
                f.slot = now + t;
                break;
            }
        }
        out.push_back(std::move(f));
    }
    return out;
}

/// One PNC slot: assemble, solve, actuate the first block.
inline ControlDecision pnc_step(const PredictionStack& stack, const ChannelProcess& channel, std::size_t now,
                                const PncConfig& config, const ForecastBook& prev_forecasts)
{
    using clock = std::chrono::steady_clock;
    ControlDecision dec;
    if (stack.empty())
        return dec;

    ForecastBook candidates;
    if (config.consistency_enabled)
        for (const auto& sub : stack.subsystems()) {
            auto it = prev_forecasts.find(sub.packet_id);
            if (it == prev_forecasts.end())
                continue;
            if (it->second <= now)
                dec.violations.push_back(sub.packet_id); // promised slot already passed
            else
                candidates.insert(*it);
        }

    auto attempt = [&](const ForecastBook& enforce, AssembledProgram& ap) {
        const auto t0 = clock::now();
        ap = detail::assemble(stack, channel, config, enforce, now);
        const auto t1 = clock::now();
        Solution sol = solve(ap.program, config.solver);
        const auto t2 = clock::now();
        dec.stats.assembly_seconds += std::chrono::duration<double>(t1 - t0).count();
        dec.stats.solve_seconds += std::chrono::duration<double>(t2 - t1).count();
        dec.stats.node_count += sol.node_count;
        ++dec.stats.solves;
        if (sol.status == SolveStatus::budget_exhausted)
            throw std::runtime_error("pnc_step: solver node budget exhausted at slot " + std::to_string(now));
        return sol;
    };

    AssembledProgram ap;
    Solution sol = attempt(candidates, ap);
    if (sol.status == SolveStatus::infeasible && !candidates.empty()) {
        // Keep as many earlier promises as possible, in stack order.
        ForecastBook kept;
        AssembledProgram ap_try;
        for (const auto& sub : stack.subsystems()) {
            auto it = candidates.find(sub.packet_id);
            if (it == candidates.end())
                continue;
            ForecastBook trial = kept;
            trial.insert(*it);
            Solution s_try = attempt(trial, ap_try);
            if (s_try.status == SolveStatus::optimal) {
                kept = std::move(trial);
                ap = std::move(ap_try);
                sol = std::move(s_try);
            } else {
                dec.violations.push_back(sub.packet_id);
            }
        }
        if (kept.empty())
            sol = attempt(kept, ap);
    }
    if (sol.status != SolveStatus::optimal)
        throw std::runtime_error("pnc_step: program infeasible at slot " + std::to_string(now));

    dec.stats.status = sol.status;
    dec.stats.variables = ap.layout.variable_count();
    dec.stats.rows = static_cast<std::size_t>(ap.program.A.rows());
    dec.stats.objective = sol.objective;
    const auto m = stack.base().link_count();
    for (std::size_t i = 0; i < stack.size(); ++i)
        for (std::size_t l = 0; l < m; ++l)
            // a zero-credit activation moves nothing in the model; keep it off the air
            if (sol.x[ap.layout.u(0, i, l)] &&
                ap.matrices.omega_table(0, static_cast<Eigen::Index>(i * (m + 1) + l)) > 0.0)
                dec.active.push_back({i, l, stack.subsystems()[i].packet_id});
    dec.forecasts = extract_forecasts(stack, ap, sol.x, now);
    dec.trajectory = std::move(sol.x);
    return dec;
}

/// min q^T Rbar u over C u <= 1 with Rbar = R diag(p_now), subsystem-major
/// stacking of the physical links.
inline BinaryLinearProgram maxweight_program(const Eigen::VectorXd& q_stacked, const NetworkTopology& topology,
                                             const Eigen::VectorXd& expected_success_now,
                                             const Eigen::MatrixXi& constituency)
{
    const auto n = topology.queue_count();
    const auto m = topology.link_count();
    if (n == 0 || q_stacked.size() % static_cast<Eigen::Index>(n) != 0)
        throw std::invalid_argument("maxweight: stacked queue vector has wrong dimension");
    if (static_cast<std::size_t>(expected_success_now.size()) != m)
        throw std::invalid_argument("maxweight: one success probability per link required");
    const auto s = static_cast<std::size_t>(q_stacked.size()) / n;
    if (static_cast<std::size_t>(constituency.cols()) != s * m)
        throw std::invalid_argument("maxweight: constituency matrix has wrong width");

    BinaryLinearProgram p;
    p.c.resize(static_cast<Eigen::Index>(s * m));
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            const auto& l = topology.link(j);
            const double dq = q_stacked(static_cast<Eigen::Index>(i * n + l.destination)) -
                              q_stacked(static_cast<Eigen::Index>(i * n + l.origin));
            p.c(static_cast<Eigen::Index>(i * m + j)) = expected_success_now(static_cast<Eigen::Index>(j)) * dq;
        }
    p.A = constituency.cast<double>();
    p.b = Eigen::VectorXd::Ones(constituency.rows());
    return p;
}

/// Backpressure baseline. Activations with nonnegative weight are dropped,
/// so an idle network sends nothing.
inline ControlDecision maxweight_step(const Eigen::VectorXd& q_stacked, const NetworkTopology& topology,
                                      const Eigen::VectorXd& expected_success_now,
                                      const Eigen::MatrixXi& constituency, const SolveOptions& opts = {},
                                      std::span<const std::string> packet_ids = {})
{
    using clock = std::chrono::steady_clock;
    ControlDecision dec;
    if (q_stacked.size() == 0)
        return dec;
    const auto t0 = clock::now();
    const auto p = maxweight_program(q_stacked, topology, expected_success_now, constituency);
    const auto t1 = clock::now();
    Solution sol = solve(p, opts);
    const auto t2 = clock::now();
    if (sol.status != SolveStatus::optimal)
        throw std::runtime_error("maxweight_step: solver failed");
    dec.stats.status = sol.status;
    dec.stats.node_count = sol.node_count;
    dec.stats.assembly_seconds = std::chrono::duration<double>(t1 - t0).count();
    dec.stats.solve_seconds = std::chrono::duration<double>(t2 - t1).count();
    dec.stats.variables = static_cast<std::size_t>(p.c.size());
    dec.stats.rows = static_cast<std::size_t>(p.A.rows());
    dec.stats.solves = 1;
    const auto m = topology.link_count();
    for (std::size_t k = 0; k < sol.x.size(); ++k) {
        if (sol.x[k] && p.c(static_cast<Eigen::Index>(k)) >= 0.0)
            sol.x[k] = 0;
        if (sol.x[k]) {
            const auto i = k / m;
            dec.active.push_back({i, k % m, i < packet_ids.size() ? packet_ids[i] : std::string{}});
        }
    }
    dec.stats.objective = objective_value(p, sol.x);
    dec.trajectory = std::move(sol.x);
    return dec;
}

} // namespace netpnc
