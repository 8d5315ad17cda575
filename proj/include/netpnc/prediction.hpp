#pragma once

#include "netpnc/channel.hpp"
#include "netpnc/network.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace netpnc {

/// log_tau(f) without clamping.
inline double log_tau(double f, double tau)
{
    return std::log(f) / std::log(tau);
}

/// Per-slot reliability credit of a link with failure probability f:
/// log_tau(f) clamped to [0, 1]. A slot with f <= tau alone is reliable.
inline double omega(double f, double tau)
{
    if (!(tau > 0.0 && tau < 1.0))
        throw ConfigError("reliability threshold tau must lie in (0,1)");
    if (!(f >= 0.0 && f <= 1.0))
        throw std::invalid_argument("failure probability must lie in [0,1]");
    if (f <= tau)
        return 1.0;
    if (f >= 1.0)
        return 0.0;
    return std::clamp(log_tau(f, tau), 0.0, 1.0);
}

/// Copy of `base` with a dummy queue (index n) fed by a dummy link from
/// `destination` (index m). The dummy link sits in its own singleton group
/// after the physical groups.
inline NetworkTopology extend_with_dummy(const NetworkTopology& base, std::size_t destination)
{
    if (destination >= base.queue_count())
        throw ConfigError("destination queue out of range");
    auto names = base.queue_names();
    names.push_back("dummy");
    auto links = base.links();
    links.push_back(Link{destination, base.queue_count(), "dummy"});
    auto groups = base.conflict_groups();
    groups.push_back({base.link_count()});
    return NetworkTopology(base.queue_count() + 1, std::move(links), std::move(groups), std::move(names));
}

/// One packet's private copy of the network model.
struct Subsystem {
    std::string packet_id;
    std::size_t origin = 0;
    std::size_t destination_queue = 0;
    std::size_t dummy_queue = 0;
    std::size_t dummy_link = 0;
    std::size_t spawn_time = 0;
    Eigen::VectorXd queue; ///< current (initially one-hot) state over the extended queues
    std::shared_ptr<const NetworkTopology> topology; ///< extended with dummy queue/link
};

/// Ordered stack of subsystems; block i of every stacked vector belongs to
/// subsystem i.
class PredictionStack {
public:
    PredictionStack() = default;
    explicit PredictionStack(std::shared_ptr<const NetworkTopology> base) : base_(std::move(base)) {}

    const NetworkTopology& base() const { return *base_; }
    std::shared_ptr<const NetworkTopology> base_ptr() const { return base_; }
    const std::vector<Subsystem>& subsystems() const { return subs_; }
    std::size_t size() const { return subs_.size(); }
    bool empty() const { return subs_.empty(); }
    std::size_t queues_per_subsystem() const { return base_->queue_count() + 1; }
    std::size_t links_per_subsystem() const { return base_->link_count() + 1; }

    std::optional<std::size_t> index_of(const std::string& id) const
    {
        for (std::size_t i = 0; i < subs_.size(); ++i)
            if (subs_[i].packet_id == id)
                return i;
        return std::nullopt;
    }

    Eigen::VectorXd stacked_q0() const
    {
        const auto n = queues_per_subsystem();
        Eigen::VectorXd q(static_cast<Eigen::Index>(n * subs_.size()));
        for (std::size_t i = 0; i < subs_.size(); ++i)
            q.segment(static_cast<Eigen::Index>(i * n), static_cast<Eigen::Index>(n)) = subs_[i].queue;
        return q;
    }

    friend PredictionStack spawn_subsystem(const PredictionStack& stack, const ArrivalEvent& arrival);
    friend PredictionStack erase_subsystem(const PredictionStack& stack, const std::string& packet_id);
    friend PredictionStack with_queue_state(const PredictionStack& stack, const std::string& packet_id,
                                            const QueueState& state);
    friend PredictionStack with_queue_vector(const PredictionStack& stack, const std::string& packet_id,
                                             const Eigen::VectorXd& state);

private:
    std::shared_ptr<const NetworkTopology> base_;
    std::vector<Subsystem> subs_;
};

inline PredictionStack spawn_subsystem(const PredictionStack& stack, const ArrivalEvent& arrival)
{
    if (stack.index_of(arrival.packet_id))
        throw std::invalid_argument("spawn_subsystem: packet '" + arrival.packet_id + "' already present");
    const auto& base = stack.base();
    if (arrival.origin >= base.queue_count())
        throw std::invalid_argument("spawn_subsystem: origin queue out of range");
    if (arrival.origin == arrival.destination_queue)
        throw std::invalid_argument("spawn_subsystem: origin equals destination");
    Subsystem s;
    s.packet_id = arrival.packet_id;
    s.origin = arrival.origin;
    s.destination_queue = arrival.destination_queue;
    s.dummy_queue = base.queue_count();
    s.dummy_link = base.link_count();
    s.spawn_time = arrival.time;
    s.topology = std::make_shared<const NetworkTopology>(extend_with_dummy(base, arrival.destination_queue));
    s.queue = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(base.queue_count() + 1));
    s.queue(static_cast<Eigen::Index>(arrival.origin)) = 1.0;
    PredictionStack out = stack;
    out.subs_.push_back(std::move(s));
    return out;
}

inline PredictionStack erase_subsystem(const PredictionStack& stack, const std::string& packet_id)
{
    auto idx = stack.index_of(packet_id);
    if (!idx)
        throw std::invalid_argument("erase_subsystem: unknown packet '" + packet_id + "'");
    PredictionStack out = stack;
    out.subs_.erase(out.subs_.begin() + static_cast<std::ptrdiff_t>(*idx));
    return out;
}

/// Replaces a subsystem's current state with the plant's (physical queues;
/// the dummy queue restarts at 0 every slot).
inline PredictionStack with_queue_state(const PredictionStack& stack, const std::string& packet_id,
                                        const QueueState& state)
{
    auto idx = stack.index_of(packet_id);
    if (!idx)
        throw std::invalid_argument("with_queue_state: unknown packet '" + packet_id + "'");
    if (state.size() != stack.base().queue_count())
        throw std::invalid_argument("with_queue_state: state has wrong dimension");
    PredictionStack out = stack;
    auto& q = out.subs_[*idx].queue;
    q.setZero();
    for (std::size_t k = 0; k < state.size(); ++k)
        q(static_cast<Eigen::Index>(k)) = static_cast<double>(state[k]);
    return out;
}

/// Real-valued state over the extended queues (dummy included).
inline PredictionStack with_queue_vector(const PredictionStack& stack, const std::string& packet_id,
                                         const Eigen::VectorXd& state)
{
    auto idx = stack.index_of(packet_id);
    if (!idx)
        throw std::invalid_argument("with_queue_vector: unknown packet '" + packet_id + "'");
    if (static_cast<std::size_t>(state.size()) != stack.queues_per_subsystem())
        throw std::invalid_argument("with_queue_vector: state has wrong dimension");
    PredictionStack out = stack;
    out.subs_[*idx].queue = state;
    return out;
}

// ---------------------------------------------------------------------------
// Horizon matrices

struct SelectorMatrices {
    Eigen::MatrixXd origin;      ///< T^o, m x n
    Eigen::MatrixXd destination; ///< T^d, m x n
};

inline SelectorMatrices selector_matrices(const NetworkTopology& topo)
{
    const auto m = static_cast<Eigen::Index>(topo.link_count());
    const auto n = static_cast<Eigen::Index>(topo.queue_count());
    SelectorMatrices s{Eigen::MatrixXd::Zero(m, n), Eigen::MatrixXd::Zero(m, n)};
    for (Eigen::Index j = 0; j < m; ++j) {
        const auto& l = topo.link(static_cast<std::size_t>(j));
        s.origin(j, static_cast<Eigen::Index>(l.origin)) = 1.0;
        s.destination(j, static_cast<Eigen::Index>(l.destination)) = 1.0;
    }
    return s;
}

/// Row block t is the diagonal of link weights omega_t, side by side:
/// an m x mH matrix.
inline Eigen::MatrixXd build_omega_C(const Eigen::MatrixXd& omega_table)
{
    const auto h = omega_table.rows();
    const auto m = omega_table.cols();
    Eigen::MatrixXd oc = Eigen::MatrixXd::Zero(m, m * h);
    for (Eigen::Index t = 0; t < h; ++t)
        oc.block(0, t * m, m, m).diagonal() = omega_table.row(t).transpose();
    return oc;
}

/// Time-major diagonal of omega weights.
inline Eigen::VectorXd omega_diagonal(const Eigen::MatrixXd& omega_table)
{
    const auto h = omega_table.rows();
    const auto m = omega_table.cols();
    Eigen::VectorXd d(h * m);
    for (Eigen::Index t = 0; t < h; ++t)
        d.segment(t * m, m) = omega_table.row(t).transpose();
    return d;
}

inline Eigen::MatrixXd build_omega_E(const Eigen::MatrixXd& omega_table)
{
    return omega_diagonal(omega_table).asDiagonal();
}

/// Block strictly-lower-triangular repetition of X over H block rows.
inline Eigen::MatrixXd build_delta(const Eigen::MatrixXd& x, std::size_t horizon)
{
    const auto h = static_cast<Eigen::Index>(horizon);
    const auto r = x.rows(), c = x.cols();
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(h * r, h * c);
    for (Eigen::Index t = 1; t < h; ++t)
        for (Eigen::Index k = 0; k < t; ++k)
            d.block(t * r, k * c, r, c) = x;
    return d;
}

/// Block lower-triangular (including the diagonal) repetition of R+: maps
/// (u_0..u_{H-1}) to the increments of (q_1..q_H).
inline Eigen::MatrixXd stacked_evolution(const Eigen::MatrixXd& rplus, std::size_t horizon)
{
    const auto h = static_cast<Eigen::Index>(horizon);
    const auto r = rplus.rows(), c = rplus.cols();
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(h * r, h * c);
    for (Eigen::Index t = 0; t < h; ++t)
        for (Eigen::Index k = 0; k <= t; ++k)
            e.block(t * r, k * c, r, c) = rplus;
    return e;
}

struct HorizonMatrices {
    std::size_t horizon = 0;
    std::size_t subsystems = 0;
    std::size_t queue_block = 0; ///< stacked queues per slot
    std::size_t link_block = 0;  ///< stacked links per slot
    Eigen::MatrixXd omega_table; ///< H x link_block
    Eigen::VectorXd omega_diag;  ///< diagonal of Omega_E, time-major
    Eigen::MatrixXd omega_C;
    Eigen::MatrixXd omega_E;
    Eigen::MatrixXd rplus;       ///< I_s (x) R+
    Eigen::MatrixXd origin_sel;  ///< I_s (x) T^o
    Eigen::MatrixXd dest_sel;    ///< I_s (x) T^d
    Eigen::MatrixXd delta_origin;
    Eigen::MatrixXd delta_dest;
    Eigen::MatrixXd stacked_rplus; ///< block lower-triangular evolution operator
};

/// omega_t for every stacked link: physical links from the channel's
/// expected failure probabilities at relative slot t, dummy links are
/// perfect.
inline Eigen::MatrixXd reliability_weights(const PredictionStack& stack, const ChannelProcess& channel,
                                           std::size_t horizon, double tau)
{
    const auto m = stack.base().link_count();
    if (channel.link_count() != m)
        throw std::invalid_argument("reliability_weights: channel link count does not match topology");
    const auto mb = stack.links_per_subsystem();
    const auto s = stack.size();
    Eigen::MatrixXd table(static_cast<Eigen::Index>(horizon), static_cast<Eigen::Index>(mb * s));
    Eigen::RowVectorXd dist = channel.unit_distribution();
    for (std::size_t t = 0; t < horizon; ++t) {
        Eigen::VectorXd success = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
        for (std::size_t k = 0; k < channel.state_count(); ++k)
            success += dist(static_cast<Eigen::Index>(k)) * channel.success_probs(k);
        Eigen::VectorXd w(static_cast<Eigen::Index>(mb));
        for (std::size_t j = 0; j < m; ++j)
            w(static_cast<Eigen::Index>(j)) = omega(std::clamp(1.0 - success(static_cast<Eigen::Index>(j)), 0.0, 1.0), tau);
        w(static_cast<Eigen::Index>(m)) = 1.0;
        for (std::size_t i = 0; i < s; ++i)
            table.block(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i * mb), 1,
                        static_cast<Eigen::Index>(mb)) = w.transpose();
        dist = dist * channel.transition();
    }
    return table;
}

inline HorizonMatrices build_horizon(const PredictionStack& stack, const Eigen::MatrixXd& omega_table)
{
    if (stack.empty())
        throw std::invalid_argument("build_horizon: empty stack");
    HorizonMatrices h;
    h.horizon = static_cast<std::size_t>(omega_table.rows());
    h.subsystems = stack.size();
    h.queue_block = stack.queues_per_subsystem() * stack.size();
    h.link_block = stack.links_per_subsystem() * stack.size();
    if (static_cast<std::size_t>(omega_table.cols()) != h.link_block || h.horizon == 0)
        throw std::invalid_argument("build_horizon: omega table does not match the stack");

    // Every subsystem shares the link layout; only the dummy link's origin
    // (the packet's destination) differs, so stack block by block.
    const auto nb = static_cast<Eigen::Index>(stack.queues_per_subsystem());
    const auto mb = static_cast<Eigen::Index>(stack.links_per_subsystem());
    const auto s = static_cast<Eigen::Index>(stack.size());
    h.rplus = Eigen::MatrixXd::Zero(nb * s, mb * s);
    h.origin_sel = Eigen::MatrixXd::Zero(mb * s, nb * s);
    h.dest_sel = Eigen::MatrixXd::Zero(mb * s, nb * s);
    for (Eigen::Index i = 0; i < s; ++i) {
        const auto& topo = *stack.subsystems()[static_cast<std::size_t>(i)].topology;
        const auto sel = selector_matrices(topo);
        h.rplus.block(i * nb, i * mb, nb, mb) = positive_part(routing_matrix(topo));
        h.origin_sel.block(i * mb, i * nb, mb, nb) = sel.origin;
        h.dest_sel.block(i * mb, i * nb, mb, nb) = sel.destination;
    }
    h.omega_table = omega_table;
    h.omega_diag = omega_diagonal(omega_table);
    h.omega_C = build_omega_C(omega_table);
    h.omega_E = build_omega_E(omega_table);
    h.delta_origin = build_delta(h.origin_sel * h.rplus, h.horizon);
    h.delta_dest = build_delta(h.dest_sel * h.rplus, h.horizon);
    h.stacked_rplus = stacked_evolution(h.rplus, h.horizon);
    return h;
}

/// Stacked (q_1, ..., q_H) = 1_H (x) q_0 + [block-lower R+] Omega_E u.
inline Eigen::VectorXd predict_evolution(const Eigen::VectorXd& q0, const Eigen::VectorXd& u_tilde,
                                         const HorizonMatrices& m)
{
    if (static_cast<std::size_t>(q0.size()) != m.queue_block)
        throw std::invalid_argument("predict_evolution: q0 has wrong dimension");
    if (static_cast<std::size_t>(u_tilde.size()) != m.link_block * m.horizon)
        throw std::invalid_argument("predict_evolution: control trajectory has wrong dimension");
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(m.horizon));
    Eigen::VectorXd base = Eigen::kroneckerProduct(ones, q0).eval();
    return base + m.stacked_rplus * (m.omega_diag.asDiagonal() * u_tilde);
}

} // namespace netpnc
