#pragma once

#include "netpnc/channel.hpp"
#include "netpnc/network.hpp"
#include "netpnc/policies.hpp"
#include "netpnc/prediction.hpp"
#include "netpnc/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace netpnc {

enum class PolicyKind { pnc, mw };

inline const char* to_string(PolicyKind p) { return p == PolicyKind::pnc ? "pnc" : "mw"; }

/// Either an explicit Markov chain or one periodic pattern per link. Links
/// listed in `case_links` take their pattern from the case index instead.
struct ChannelSpec {
    enum class Kind { explicit_chain, pattern } kind = Kind::pattern;

    Eigen::MatrixXd transition;
    std::vector<Eigen::VectorXd> success_probs;
    std::size_t initial_state = 0;

    PatternCase pattern;
    std::vector<std::size_t> case_links;

    std::size_t case_space() const
    {
        return kind == Kind::pattern && !case_links.empty() ? case_count(pattern.period, case_links.size()) : 1;
    }

    /// Pattern with the case-assigned links filled in.
    PatternCase resolve(std::size_t case_index) const
    {
        PatternCase c = pattern;
        if (!case_links.empty()) {
            const auto idx = decode_case(case_index, c.period, case_links.size());
            for (std::size_t k = 0; k < case_links.size(); ++k)
                c.links.at(case_links[k]).slots = pattern_from_index(c.period, idx[k]);
        }
        return c;
    }

    /// Channel for one case; jitter is drawn from `rng`.
    ChannelProcess instantiate(std::size_t case_index, Rng& rng) const
    {
        if (kind == Kind::explicit_chain)
            return ChannelProcess(transition, success_probs, initial_state);
        return pattern_chain(resolve(case_index), rng, initial_state);
    }
};

struct Scenario {
    std::string name;
    NetworkTopology topology;
    ChannelSpec channel;
    std::vector<ArrivalEvent> arrivals;
    std::size_t steps = 1;
    PncConfig pnc;
    SolveOptions mw_solver;
    std::size_t case_index = 0;
    std::uint64_t case_seed = 0;      ///< jitter draws
    std::uint64_t bernoulli_seed = 0; ///< link realizations
    double tau_margin = 0.1;          ///< tau = 1 - high + margin under the low_prob sweep

    void validate() const
    {
        if (steps == 0)
            throw ConfigError("run: steps must be at least 1");
        pnc.validate(topology);
        const auto m = topology.link_count();
        if (channel.kind == ChannelSpec::Kind::explicit_chain) {
            ChannelProcess probe(channel.transition, channel.success_probs, channel.initial_state);
            if (probe.link_count() != m)
                throw ConfigError("channel: probability vectors need one entry per link");
        } else {
            if (channel.pattern.links.size() != m)
                throw ConfigError("channel: one pattern per link required");
            for (auto j : channel.case_links)
                if (j >= m)
                    throw ConfigError("channel: case link index out of range");
            channel.resolve(std::min(case_index, channel.case_space() - 1)).validate();
            if (case_index >= channel.case_space())
                throw ConfigError("run: case index exceeds the case space");
        }
        std::vector<std::string> ids;
        for (const auto& a : arrivals) {
            if (a.time >= steps)
                throw ConfigError("arrivals: packet '" + a.packet_id + "' spawns at or after the last slot");
            if (a.origin >= topology.queue_count() || a.destination_queue >= topology.queue_count())
                throw ConfigError("arrivals: packet '" + a.packet_id + "' references an unknown queue");
            if (a.origin == a.destination_queue)
                throw ConfigError("arrivals: packet '" + a.packet_id + "' starts at its destination");
            ids.push_back(a.packet_id);
        }
        std::sort(ids.begin(), ids.end());
        if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
            throw ConfigError("arrivals: duplicate packet id");
    }
};

struct PacketRecord {
    std::string packet_id;
    std::size_t origin = 0;
    std::size_t destination = 0;
    std::size_t spawn = 0;
    std::optional<std::size_t> delivery;
    /// (slot at which issued, forecast) for every slot the packet was pending
    std::vector<std::pair<std::size_t, std::optional<std::size_t>>> forecasts;

    std::optional<std::size_t> first_forecast() const
    {
        for (const auto& f : forecasts)
            if (f.second)
                return f.second;
        return std::nullopt;
    }
    std::optional<std::size_t> final_forecast() const
    {
        for (auto it = forecasts.rbegin(); it != forecasts.rend(); ++it)
            if (it->second)
                return it->second;
        return std::nullopt;
    }
};

struct SlotRecord {
    std::size_t slot = 0;
    std::vector<Activation> active;
    std::vector<std::uint8_t> realization; ///< Bernoulli outcome per physical link
    std::size_t channel_state = 0;
    double solve_seconds = 0.0;
    double assembly_seconds = 0.0;
    std::size_t node_count = 0;
    std::size_t pending = 0;
    std::vector<std::string> violations;
};

struct EpisodeResult {
    PolicyKind policy = PolicyKind::pnc;
    std::size_t steps = 0;
    std::vector<PacketRecord> packets;
    std::vector<SlotRecord> slots;
    std::int64_t accumulated_delay = 0;
    std::size_t delivered_count = 0;
    std::size_t violation_count = 0;

    double mean_solve_time() const
    {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& s : slots)
            if (s.pending > 0) {
                sum += s.solve_seconds;
                ++n;
            }
        return n ? sum / static_cast<double>(n) : 0.0;
    }
};

/// Sum of (delivery - spawn) over delivered packets plus (N - spawn) over
/// the rest.
inline std::int64_t accumulated_delay(const std::vector<PacketRecord>& packets, std::size_t steps)
{
    std::int64_t d = 0;
    for (const auto& p : packets)
        d += static_cast<std::int64_t>(p.delivery.value_or(steps)) - static_cast<std::int64_t>(p.spawn);
    return d;
}

/// Closed loop over N slots: spawn, decide, realize, deliver, advance. The
/// Bernoulli stream draws one value per link and slot whatever the policy,
/// so both policies see the same realizations under the same seed.
inline EpisodeResult run_episode(const Scenario& sc, PolicyKind policy, const ChannelProcess& initial_channel)
{
    const auto& topo = sc.topology;
    const auto m = topo.link_count();
    if (initial_channel.link_count() != m)
        throw std::invalid_argument("run_episode: channel link count does not match topology");

    EpisodeResult res;
    res.policy = policy;
    res.steps = sc.steps;

    Rng bernoulli(sc.bernoulli_seed);
    Rng markov(derive_seed(sc.bernoulli_seed, {1}));
    ChannelProcess channel = initial_channel;

    auto base = std::make_shared<const NetworkTopology>(topo);
    PredictionStack stack(base);
    std::vector<QueueState> plant; // parallel to the stack
    std::vector<std::size_t> record_of; // stack position -> packets index
    ForecastBook book;

    for (std::size_t t = 0; t < sc.steps; ++t) {
        for (const auto& a : sc.arrivals)
            if (a.time == t) {
                stack = spawn_subsystem(stack, a);
                QueueState q(topo.queue_count());
                q.values[a.origin] = 1;
                plant.push_back(q);
                record_of.push_back(res.packets.size());
                res.packets.push_back(PacketRecord{a.packet_id, a.origin, a.destination_queue, t, std::nullopt, {}});
            }

        SlotRecord slot;
        slot.slot = t;
        slot.channel_state = channel.current_state();
        slot.pending = stack.size();

        ControlDecision dec;
        if (!stack.empty()) {
            if (policy == PolicyKind::pnc) {
                dec = pnc_step(stack, channel, t, sc.pnc, book);
                for (const auto& f : dec.forecasts) {
                    if (f.slot)
                        book[f.packet_id] = *f.slot;
                    else
                        book.erase(f.packet_id);
                }
                for (std::size_t i = 0; i < dec.forecasts.size(); ++i)
                    res.packets[record_of[i]].forecasts.push_back({t, dec.forecasts[i].slot});
            } else {
                Eigen::VectorXd q(static_cast<Eigen::Index>(topo.queue_count() * stack.size()));
                std::vector<std::string> ids;
                for (std::size_t i = 0; i < stack.size(); ++i) {
                    for (std::size_t k = 0; k < topo.queue_count(); ++k)
                        q(static_cast<Eigen::Index>(i * topo.queue_count() + k)) = static_cast<double>(plant[i][k]);
                    ids.push_back(stack.subsystems()[i].packet_id);
                }
                dec = maxweight_step(q, topo, channel.current_success_probs(), constituency_matrix(topo, stack.size()),
                                     sc.mw_solver, ids);
            }
        }
        slot.solve_seconds = dec.stats.solve_seconds;
        slot.assembly_seconds = dec.stats.assembly_seconds;
        slot.node_count = dec.stats.node_count;
        slot.violations = dec.violations;
        res.violation_count += dec.violations.size();

        slot.realization = sample_successes(channel, bernoulli);

        if (!dec.active.empty()) {
            std::vector<std::uint8_t> u(m * stack.size(), 0);
            for (const auto& a : dec.active)
                u[a.subsystem * m + a.link] = 1;
            if (auto g = constituency_violation(constituency_matrix(topo, stack.size()), u))
                throw std::runtime_error("run_episode: controller broke conflict group " + std::to_string(*g) +
                                         " at slot " + std::to_string(t));
        }
        for (std::size_t i = 0; i < stack.size(); ++i) {
            std::vector<std::size_t> links;
            std::vector<std::uint8_t> ok;
            for (const auto& a : dec.active)
                if (a.subsystem == i) {
                    links.push_back(a.link);
                    ok.push_back(slot.realization[a.link]);
                }
            plant[i] = step_true_system(plant[i], topo, links, ok);
        }
        slot.active = std::move(dec.active);

        // Deliveries are acknowledged instantly; the subsystem leaves the stack.
        for (std::size_t i = stack.size(); i-- > 0;) {
            const auto& sub = stack.subsystems()[i];
            if (plant[i][sub.destination_queue] >= 1) {
                res.packets[record_of[i]].delivery = t + 1;
                book.erase(sub.packet_id);
                stack = erase_subsystem(stack, sub.packet_id);
                plant.erase(plant.begin() + static_cast<std::ptrdiff_t>(i));
                record_of.erase(record_of.begin() + static_cast<std::ptrdiff_t>(i));
            }
        }
        for (std::size_t i = 0; i < stack.size(); ++i)
            stack = with_queue_state(stack, stack.subsystems()[i].packet_id, plant[i]);

        channel = advance_state(channel, markov);
        res.slots.push_back(std::move(slot));
    }

    res.accumulated_delay = accumulated_delay(res.packets, sc.steps);
    res.delivered_count = static_cast<std::size_t>(
        std::count_if(res.packets.begin(), res.packets.end(), [](const PacketRecord& p) { return p.delivery.has_value(); }));
    return res;
}

/// Instantiates the scenario's channel from its own case index and seed.
inline EpisodeResult run_episode(const Scenario& sc, PolicyKind policy)
{
    Rng jitter(sc.case_seed);
    return run_episode(sc, policy, sc.channel.instantiate(sc.case_index, jitter));
}

struct ForecastAccuracy {
    std::size_t forecasted = 0; ///< packets with at least one finite forecast
    std::size_t on_time = 0;    ///< delivered no later than the final forecast
    std::size_t on_time_first = 0; ///< delivered no later than the first forecast
    std::size_t violations = 0;

    double fraction() const { return forecasted ? static_cast<double>(on_time) / static_cast<double>(forecasted) : 1.0; }
    double fraction_first() const
    {
        return forecasted ? static_cast<double>(on_time_first) / static_cast<double>(forecasted) : 1.0;
    }
    ForecastAccuracy& operator+=(const ForecastAccuracy& o)
    {
        forecasted += o.forecasted;
        on_time += o.on_time;
        on_time_first += o.on_time_first;
        violations += o.violations;
        return *this;
    }
};

inline ForecastAccuracy forecast_accuracy(const EpisodeResult& r)
{
    ForecastAccuracy a;
    a.violations = r.violation_count;
    for (const auto& p : r.packets) {
        auto last = p.final_forecast();
        if (!last)
            continue;
        ++a.forecasted;
        if (p.delivery && *p.delivery <= *last)
            ++a.on_time;
        if (p.delivery && *p.delivery <= *p.first_forecast())
            ++a.on_time_first;
    }
    return a;
}

// ---------------------------------------------------------------------------
// Parallel job runner

inline std::size_t worker_count()
{
    std::size_t n = std::max(1U, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("NETPNC_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v > 0)
            n = std::min<std::size_t>(n, static_cast<std::size_t>(v));
    }
    return n;
}

/// Runs job(k) for k in [0, count); results stay in index order.
template <class Result, class Job>
std::vector<Result> parallel_map(std::size_t count, Job job, std::size_t workers = worker_count())
{
    std::vector<Result> out(count);
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const auto k = next.fetch_add(1);
            if (k >= count)
                return;
            try {
                out[k] = job(k);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error)
                    error = std::current_exception();
                next = count;
            }
        }
    };
    workers = std::max<std::size_t>(1, std::min(workers, count));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back(worker);
        for (auto& th : pool)
            th.join();
    }
    if (error)
        std::rethrow_exception(error);
    return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo

struct EpisodeSummary {
    std::size_t case_id = 0;
    std::size_t rep = 0;
    PolicyKind policy = PolicyKind::pnc;
    std::int64_t accumulated_delay = 0;
    std::size_t delivered_count = 0;
    double mean_solve_time = 0.0;
    ForecastAccuracy forecast;
};

struct MonteCarloReport {
    std::size_t cases = 0;
    std::size_t reps = 0;
    std::uint64_t master_seed = 0;
    std::vector<std::size_t> case_ids;
    std::vector<EpisodeSummary> rows; ///< (case, rep) order, PNC before MW
    double mean_ratio = 0.0;          ///< mean over runs of PNC/MW delay
    double ratio_stddev = 0.0;
    double ratio_of_sums = 0.0;
    ForecastAccuracy forecast;        ///< PNC episodes

    std::size_t run_count() const { return rows.size() / 2; }
};

/// The first `x` entries of a seeded shuffle of the case index space.
inline std::vector<std::size_t> draw_cases(std::size_t space, std::size_t x, std::uint64_t seed)
{
    if (x > space)
        throw ConfigError("monte carlo: " + std::to_string(x) + " cases requested but only " + std::to_string(space) +
                          " exist");
    std::vector<std::size_t> all(space);
    std::iota(all.begin(), all.end(), std::size_t{0});
    Rng rng(derive_seed(seed, {0xCA5E}));
    for (std::size_t i = space; i > 1; --i)
        std::swap(all[i - 1], all[uniform_index(rng, i)]);
    all.resize(x);
    return all;
}

/// x cases, y paired PNC/MW repetitions each. Case c's channel jitter is
/// seeded by (master, c); repetition r's realizations by (master, c, r + 1).
inline MonteCarloReport monte_carlo(const Scenario& sc, std::size_t x, std::size_t y, std::uint64_t master_seed)
{
    sc.validate();
    MonteCarloReport rep;
    rep.cases = x;
    rep.reps = y;
    rep.master_seed = master_seed;
    rep.case_ids = draw_cases(sc.channel.case_space(), x, master_seed);

    struct Pair {
        EpisodeSummary pnc, mw;
    };
    auto job = [&](std::size_t k) {
        const auto ci = k / y;
        const auto r = k % y;
        const auto case_id = rep.case_ids[ci];
        Rng jitter(derive_seed(master_seed, {case_id}));
        const ChannelProcess ch = sc.channel.instantiate(case_id, jitter);
        Scenario s = sc;
        s.case_index = case_id;
        s.bernoulli_seed = derive_seed(master_seed, {case_id, r + 1});
        Pair p;
        for (auto pol : {PolicyKind::pnc, PolicyKind::mw}) {
            const auto e = run_episode(s, pol, ch);
            EpisodeSummary row{case_id, r, pol, e.accumulated_delay, e.delivered_count, e.mean_solve_time(), {}};
            if (pol == PolicyKind::pnc) {
                row.forecast = forecast_accuracy(e);
                p.pnc = row;
            } else {
                p.mw = row;
            }
        }
        return p;
    };
    const auto pairs = parallel_map<Pair>(x * y, job);

    double sum_ratio = 0.0, sum_sq = 0.0;
    std::int64_t sum_pnc = 0, sum_mw = 0;
    std::size_t n_ratio = 0;
    for (const auto& p : pairs) {
        rep.rows.push_back(p.pnc);
        rep.rows.push_back(p.mw);
        rep.forecast += p.pnc.forecast;
        sum_pnc += p.pnc.accumulated_delay;
        sum_mw += p.mw.accumulated_delay;
        if (p.mw.accumulated_delay > 0) {
            const double q = static_cast<double>(p.pnc.accumulated_delay) / static_cast<double>(p.mw.accumulated_delay);
            sum_ratio += q;
            sum_sq += q * q;
            ++n_ratio;
        }
    }
    if (n_ratio) {
        rep.mean_ratio = sum_ratio / static_cast<double>(n_ratio);
        rep.ratio_stddev = std::sqrt(std::max(0.0, sum_sq / static_cast<double>(n_ratio) - rep.mean_ratio * rep.mean_ratio));
    }
    rep.ratio_of_sums = sum_mw > 0 ? static_cast<double>(sum_pnc) / static_cast<double>(sum_mw) : 0.0;
    return rep;
}

// ---------------------------------------------------------------------------
// Timing

struct TimingPoint {
    std::string key;
    double value = 0.0;
    std::vector<double> pnc_samples; ///< per-slot solve seconds, slots with pending packets
    std::vector<double> mw_samples;
    std::vector<double> pnc_with_assembly;
    std::vector<double> mw_with_assembly;
    double ratio = 0.0;               ///< median PNC / median MW
    double ratio_with_assembly = 0.0;
};

inline double median(std::vector<double> v)
{
    if (v.empty())
        return 0.0;
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Per-slot solve times for both policies over x cases and y repetitions.
inline TimingPoint timing_point(const Scenario& sc, std::size_t x, std::size_t y, std::uint64_t master_seed)
{
    TimingPoint tp;
    const auto cases = draw_cases(sc.channel.case_space(), x, master_seed);
    for (auto case_id : cases)
        for (std::size_t r = 0; r < y; ++r) {
            Rng jitter(derive_seed(master_seed, {case_id}));
            const ChannelProcess ch = sc.channel.instantiate(case_id, jitter);
            Scenario s = sc;
            s.case_index = case_id;
            s.bernoulli_seed = derive_seed(master_seed, {case_id, r + 1});
            for (auto pol : {PolicyKind::pnc, PolicyKind::mw}) {
                const auto e = run_episode(s, pol, ch);
                for (const auto& sl : e.slots) {
                    if (sl.pending == 0)
                        continue;
                    auto& a = pol == PolicyKind::pnc ? tp.pnc_samples : tp.mw_samples;
                    auto& b = pol == PolicyKind::pnc ? tp.pnc_with_assembly : tp.mw_with_assembly;
                    a.push_back(sl.solve_seconds);
                    b.push_back(sl.solve_seconds + sl.assembly_seconds);
                }
            }
        }
    const double mw = median(tp.mw_samples), mwa = median(tp.mw_with_assembly);
    tp.ratio = mw > 0 ? median(tp.pnc_samples) / mw : 0.0;
    tp.ratio_with_assembly = mwa > 0 ? median(tp.pnc_with_assembly) / mwa : 0.0;
    return tp;
}

} // namespace netpnc
