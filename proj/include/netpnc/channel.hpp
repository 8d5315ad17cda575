#pragma once

#include "netpnc/network.hpp"
#include "netpnc/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace netpnc {

/// Markov chain over per-link success-probability vectors. State i carries
/// the diagonal of the probability matrix M_i.
class ChannelProcess {
public:
    ChannelProcess() = default;

    ChannelProcess(Eigen::MatrixXd transition, std::vector<Eigen::VectorXd> success_probs, std::size_t current_state)
        : transition_(std::move(transition)), probs_(std::move(success_probs)), state_(current_state)
    {
        const auto p = static_cast<Eigen::Index>(probs_.size());
        if (p == 0)
            throw ConfigError("channel: at least one Markov state required");
        if (transition_.rows() != p || transition_.cols() != p)
            throw ConfigError("channel: transition matrix must be " + std::to_string(p) + "x" + std::to_string(p));
        for (Eigen::Index i = 0; i < p; ++i) {
            if ((transition_.row(i).array() < 0.0).any())
                throw ConfigError("channel: negative transition probability in row " + std::to_string(i));
            if (std::abs(transition_.row(i).sum() - 1.0) > 1e-12)
                throw ConfigError("channel: transition row " + std::to_string(i) + " does not sum to 1");
        }
        const auto m = probs_.front().size();
        for (const auto& v : probs_) {
            if (v.size() != m)
                throw ConfigError("channel: all states need the same number of link probabilities");
            if ((v.array() < 0.0).any() || (v.array() > 1.0).any())
                throw ConfigError("channel: success probabilities must lie in [0,1]");
        }
        if (state_ >= probs_.size())
            throw ConfigError("channel: initial state out of range");
    }

    std::size_t state_count() const { return probs_.size(); }
    std::size_t link_count() const { return static_cast<std::size_t>(probs_.front().size()); }
    std::size_t current_state() const { return state_; }
    const Eigen::MatrixXd& transition() const { return transition_; }
    const Eigen::VectorXd& success_probs(std::size_t state) const { return probs_.at(state); }
    const Eigen::VectorXd& current_success_probs() const { return probs_[state_]; }

    ChannelProcess with_state(std::size_t s) const
    {
        if (s >= probs_.size())
            throw std::out_of_range("channel state out of range");
        ChannelProcess c = *this;
        c.state_ = s;
        return c;
    }

    /// Index of the single certain successor, or -1 if row `s` is random.
    std::ptrdiff_t deterministic_successor(std::size_t s) const
    {
        std::ptrdiff_t next = -1;
        for (Eigen::Index j = 0; j < transition_.cols(); ++j) {
            const double v = transition_(static_cast<Eigen::Index>(s), j);
            if (v == 1.0)
                next = j;
            else if (v != 0.0)
                return -1;
        }
        return next;
    }

    Eigen::RowVectorXd unit_distribution() const
    {
        Eigen::RowVectorXd d = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(probs_.size()));
        d(static_cast<Eigen::Index>(state_)) = 1.0;
        return d;
    }

private:
    Eigen::MatrixXd transition_;
    std::vector<Eigen::VectorXd> probs_;
    std::size_t state_ = 0;
};

/// Samples the next Markov state. Rows with a single certain successor do
/// not consume randomness.
inline ChannelProcess advance_state(const ChannelProcess& process, Rng& rng)
{
    const auto s = process.current_state();
    if (auto next = process.deterministic_successor(s); next >= 0)
        return process.with_state(static_cast<std::size_t>(next));

    const double u = uniform01(rng);
    double acc = 0.0;
    const auto& row = process.transition().row(static_cast<Eigen::Index>(s));
    std::size_t chosen = process.state_count() - 1;
    for (Eigen::Index j = 0; j < row.size(); ++j) {
        acc += row(j);
        if (u < acc) {
            chosen = static_cast<std::size_t>(j);
            break;
        }
    }
    return process.with_state(chosen);
}

/// Independent Bernoulli trial per link at the current state's
/// probabilities. Always consumes exactly one draw per link.
inline std::vector<std::uint8_t> sample_successes(const ChannelProcess& process, Rng& rng)
{
    const auto& p = process.current_success_probs();
    std::vector<std::uint8_t> out(static_cast<std::size_t>(p.size()));
    for (Eigen::Index j = 0; j < p.size(); ++j)
        out[static_cast<std::size_t>(j)] = uniform01(rng) < p(j) ? 1 : 0;
    return out;
}

/// start * P^t
inline Eigen::RowVectorXd state_distribution(const ChannelProcess& process, const Eigen::RowVectorXd& start, std::size_t t)
{
    if (start.size() != static_cast<Eigen::Index>(process.state_count()))
        throw std::invalid_argument("state_distribution: start distribution has wrong size");
    if ((start.array() < -1e-12).any() || std::abs(start.sum() - 1.0) > 1e-9)
        throw std::invalid_argument("state_distribution: start is not a probability vector");
    Eigen::RowVectorXd d = start;
    for (std::size_t k = 0; k < t; ++k)
        d = d * process.transition();
    return d;
}

/// E[p_t | start]: mixture of the state probability vectors weighted by
/// start * P^t. Equivalent to the stacked Kronecker form without forming it.
inline Eigen::VectorXd expected_success(const ChannelProcess& process, const Eigen::RowVectorXd& start, std::size_t t)
{
    const Eigen::RowVectorXd d = state_distribution(process, start, t);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(process.link_count()));
    for (std::size_t j = 0; j < process.state_count(); ++j)
        e += d(static_cast<Eigen::Index>(j)) * process.success_probs(j);
    return e.cwiseMax(0.0).cwiseMin(1.0);
}

inline Eigen::VectorXd expected_success(const ChannelProcess& process, std::size_t t)
{
    return expected_success(process, process.unit_distribution(), t);
}

inline Eigen::VectorXd expected_failure(const ChannelProcess& process, std::size_t t)
{
    return Eigen::VectorXd::Ones(static_cast<Eigen::Index>(process.link_count())) - expected_success(process, t);
}

/// Cesaro average of E[p_t] from the current state over a window that is a
/// multiple of the state count, exact for deterministic cycles.
inline Eigen::VectorXd time_averaged_success(const ChannelProcess& process, std::size_t min_window = 600)
{
    const auto k = process.state_count();
    const auto window = ((min_window + k - 1) / k) * k;
    Eigen::RowVectorXd d = process.unit_distribution();
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(process.link_count()));
    for (std::size_t t = 0; t < window; ++t) {
        for (std::size_t j = 0; j < k; ++j)
            acc += d(static_cast<Eigen::Index>(j)) * process.success_probs(j);
        d = d * process.transition();
    }
    return (acc / static_cast<double>(window)).cwiseMax(0.0).cwiseMin(1.0);
}

// ---------------------------------------------------------------------------
// Periodic high/low patterns

struct LinkPattern {
    std::vector<bool> slots; ///< true = high probability in that slot
    double high = 1.0;
    double low = 0.0;
};

struct PatternCase {
    std::size_t period = 1;
    std::vector<LinkPattern> links;
    double jitter_fraction = 0.01;

    void validate() const
    {
        if (period == 0)
            throw ConfigError("pattern: period must be at least 1");
        if (jitter_fraction < 0.0 || jitter_fraction > 1.0)
            throw ConfigError("pattern: jitter fraction must lie in [0,1]");
        for (std::size_t j = 0; j < links.size(); ++j) {
            const auto& l = links[j];
            if (l.slots.size() != period)
                throw ConfigError("pattern: link " + std::to_string(j) + " pattern length differs from period");
            if (std::none_of(l.slots.begin(), l.slots.end(), [](bool b) { return b; }))
                throw ConfigError("pattern: link " + std::to_string(j) + " has no high slot");
            if (!(0.0 <= l.low && l.low <= l.high && l.high <= 1.0))
                throw ConfigError("pattern: link " + std::to_string(j) + " needs 0 <= low <= high <= 1");
        }
    }
};

/// Uniform draw from [p - f p, p + f p] intersected with [0, 1].
inline double jittered(double p, double fraction, Rng& rng)
{
    const double lo = std::max(0.0, p - fraction * p);
    const double hi = std::min(1.0, p + fraction * p);
    return uniform(rng, lo, hi);
}

/// k-state deterministic cycle; state j carries each link's (jittered) high
/// or low probability for slot j. Jitter is drawn once per link, high first.
inline ChannelProcess pattern_chain(const PatternCase& c, Rng& rng, std::size_t initial_state = 0)
{
    c.validate();
    const auto k = c.period;
    const auto m = c.links.size();
    std::vector<double> hi(m), lo(m);
    for (std::size_t j = 0; j < m; ++j) {
        hi[j] = jittered(c.links[j].high, c.jitter_fraction, rng);
        lo[j] = jittered(c.links[j].low, c.jitter_fraction, rng);
    }
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    std::vector<Eigen::VectorXd> probs(k, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m)));
    for (std::size_t s = 0; s < k; ++s) {
        p(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>((s + 1) % k)) = 1.0;
        for (std::size_t j = 0; j < m; ++j)
            probs[s](static_cast<Eigen::Index>(j)) = c.links[j].slots[s] ? hi[j] : lo[j];
    }
    return ChannelProcess(std::move(p), std::move(probs), initial_state % k);
}

/// Pattern index in [1, 2^k - 1]; bit s set means slot s is high.
inline std::vector<bool> pattern_from_index(std::size_t period, std::size_t index)
{
    if (period == 0 || period >= 63 || index == 0 || index >= (std::size_t{1} << period))
        throw std::invalid_argument("pattern index out of range");
    std::vector<bool> slots(period);
    for (std::size_t s = 0; s < period; ++s)
        slots[s] = ((index >> s) & 1U) != 0;
    return slots;
}

inline std::size_t admissible_pattern_count(std::size_t period)
{
    return (std::size_t{1} << period) - 1;
}

/// (2^k - 1)^L assignments of patterns to L links.
inline std::size_t case_count(std::size_t period, std::size_t pattern_links)
{
    std::size_t n = 1;
    for (std::size_t i = 0; i < pattern_links; ++i)
        n *= admissible_pattern_count(period);
    return n;
}

/// Mixed-radix decode of a case index into one pattern index per link.
inline std::vector<std::size_t> decode_case(std::size_t case_index, std::size_t period, std::size_t pattern_links)
{
    if (case_index >= case_count(period, pattern_links))
        throw std::invalid_argument("case index out of range");
    const auto base = admissible_pattern_count(period);
    std::vector<std::size_t> out(pattern_links);
    for (std::size_t i = 0; i < pattern_links; ++i) {
        out[i] = case_index % base + 1;
        case_index /= base;
    }
    return out;
}

} // namespace netpnc
