#pragma once

#include "netpnc/simulator.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace netpnc {

using Json = nlohmann::json;

inline constexpr const char* kVersion = "netpnc 1.0.0";

namespace io_detail {

[[noreturn]] inline void fail(const std::string& path, const std::string& what)
{
    throw ConfigError(path + ": " + what);
}

inline void check_keys(const Json& j, const std::string& path, std::initializer_list<const char*> allowed)
{
    if (!j.is_object())
        fail(path, "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed)
            ok = ok || it.key() == a;
        if (!ok)
            fail(path + "." + it.key(), "unknown key");
    }
}

inline const Json& need(const Json& j, const std::string& path, const char* key)
{
    if (!j.contains(key))
        fail(path + "." + key, "missing required key");
    return j.at(key);
}

inline double number(const Json& j, const std::string& path)
{
    if (!j.is_number())
        fail(path, "expected a number");
    return j.get<double>();
}

inline std::size_t count(const Json& j, const std::string& path)
{
    if (!j.is_number_integer() || j.get<std::int64_t>() < 0)
        fail(path, "expected a nonnegative integer");
    return j.get<std::size_t>();
}

inline std::uint64_t seed(const Json& j, const std::string& path)
{
    if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0))
        fail(path, "expected a nonnegative integer seed");
    return j.get<std::uint64_t>();
}

inline std::string text(const Json& j, const std::string& path)
{
    if (!j.is_string())
        fail(path, "expected a string");
    return j.get<std::string>();
}

inline bool flag(const Json& j, const std::string& path)
{
    if (!j.is_boolean())
        fail(path, "expected true or false");
    return j.get<bool>();
}

inline std::size_t queue_ref(const std::vector<std::string>& names, const Json& j, const std::string& path)
{
    const auto name = text(j, path);
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name)
            return i;
    fail(path, "unknown queue '" + name + "'");
}

inline NetworkTopology parse_topology(const Json& j)
{
    const std::string path = "topology";
    check_keys(j, path, {"queues", "links", "conflict_groups"});
    std::vector<std::string> names;
    const auto& qs = need(j, path, "queues");
    if (!qs.is_array() || qs.empty())
        fail(path + ".queues", "expected a nonempty array of names");
    for (std::size_t i = 0; i < qs.size(); ++i)
        names.push_back(text(qs[i], path + ".queues[" + std::to_string(i) + "]"));
    if (std::set<std::string>(names.begin(), names.end()).size() != names.size())
        fail(path + ".queues", "duplicate queue name");

    std::vector<Link> links;
    const auto& ls = need(j, path, "links");
    if (!ls.is_array())
        fail(path + ".links", "expected an array");
    for (std::size_t k = 0; k < ls.size(); ++k) {
        const auto lp = path + ".links[" + std::to_string(k) + "]";
        check_keys(ls[k], lp, {"label", "from", "to"});
        Link l;
        l.label = text(need(ls[k], lp, "label"), lp + ".label");
        l.origin = queue_ref(names, need(ls[k], lp, "from"), lp + ".from");
        l.destination = queue_ref(names, need(ls[k], lp, "to"), lp + ".to");
        for (const auto& other : links)
            if (other.label == l.label)
                fail(lp + ".label", "duplicate link label '" + l.label + "'");
        links.push_back(l);
    }

    std::vector<std::vector<std::size_t>> groups;
    const auto& gs = need(j, path, "conflict_groups");
    if (!gs.is_array())
        fail(path + ".conflict_groups", "expected an array of link-label arrays");
    for (std::size_t g = 0; g < gs.size(); ++g) {
        const auto gp = path + ".conflict_groups[" + std::to_string(g) + "]";
        if (!gs[g].is_array() || gs[g].empty())
            fail(gp, "expected a nonempty array of link labels");
        std::vector<std::size_t> grp;
        for (std::size_t e = 0; e < gs[g].size(); ++e) {
            const auto label = text(gs[g][e], gp + "[" + std::to_string(e) + "]");
            std::size_t idx = links.size();
            for (std::size_t k = 0; k < links.size(); ++k)
                if (links[k].label == label)
                    idx = k;
            if (idx == links.size())
                fail(gp + "[" + std::to_string(e) + "]", "unknown link '" + label + "'");
            grp.push_back(idx);
        }
        groups.push_back(grp);
    }
    try {
        return NetworkTopology(names.size(), links, groups, names);
    } catch (const ConfigError& e) {
        fail(path, e.what());
    }
}

inline ChannelSpec parse_channel(const Json& j, const NetworkTopology& topo)
{
    const std::string path = "channel";
    if (!j.is_object())
        fail(path, "expected an object");
    const auto type = text(need(j, path, "type"), path + ".type");
    ChannelSpec c;
    const auto m = topo.link_count();
    if (type == "explicit") {
        check_keys(j, path, {"type", "transition", "success_probs", "initial_state"});
        c.kind = ChannelSpec::Kind::explicit_chain;
        const auto& tr = need(j, path, "transition");
        const auto& sp = need(j, path, "success_probs");
        if (!tr.is_array() || tr.empty())
            fail(path + ".transition", "expected a square array of rows");
        const auto p = tr.size();
        c.transition.resize(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
        for (std::size_t r = 0; r < p; ++r) {
            const auto rp = path + ".transition[" + std::to_string(r) + "]";
            if (!tr[r].is_array() || tr[r].size() != p)
                fail(rp, "row must have " + std::to_string(p) + " entries");
            for (std::size_t k = 0; k < p; ++k)
                c.transition(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) =
                    number(tr[r][k], rp + "[" + std::to_string(k) + "]");
        }
        if (!sp.is_array() || sp.size() != p)
            fail(path + ".success_probs", "expected one probability vector per state");
        for (std::size_t s = 0; s < p; ++s) {
            const auto sp_path = path + ".success_probs[" + std::to_string(s) + "]";
            if (!sp[s].is_array() || sp[s].size() != m)
                fail(sp_path, "expected " + std::to_string(m) + " link probabilities");
            Eigen::VectorXd v(static_cast<Eigen::Index>(m));
            for (std::size_t k = 0; k < m; ++k)
                v(static_cast<Eigen::Index>(k)) = number(sp[s][k], sp_path + "[" + std::to_string(k) + "]");
            c.success_probs.push_back(v);
        }
        if (j.contains("initial_state"))
            c.initial_state = count(j.at("initial_state"), path + ".initial_state");
        try {
            ChannelProcess probe(c.transition, c.success_probs, c.initial_state);
        } catch (const ConfigError& e) {
            fail(path, e.what());
        }
        return c;
    }
    if (type != "pattern")
        fail(path + ".type", "expected 'pattern' or 'explicit'");

    check_keys(j, path, {"type", "period", "high", "low", "jitter", "initial_state", "links"});
    c.kind = ChannelSpec::Kind::pattern;
    auto& pc = c.pattern;
    pc.period = count(need(j, path, "period"), path + ".period");
    if (pc.period == 0 || pc.period > 16)
        fail(path + ".period", "period must lie in 1..16");
    const double high = number(need(j, path, "high"), path + ".high");
    const double low = number(need(j, path, "low"), path + ".low");
    if (j.contains("jitter"))
        pc.jitter_fraction = number(j.at("jitter"), path + ".jitter");
    if (j.contains("initial_state"))
        c.initial_state = count(j.at("initial_state"), path + ".initial_state");
    const auto& ls = need(j, path, "links");
    if (!ls.is_object())
        fail(path + ".links", "expected an object keyed by link label");
    for (auto it = ls.begin(); it != ls.end(); ++it)
        if (!topo.find_link(it.key()))
            fail(path + ".links." + it.key(), "unknown link");
    pc.links.resize(m);
    for (std::size_t k = 0; k < m; ++k) {
        const auto& label = topo.link(k).label;
        const auto lp = path + ".links." + label;
        if (!ls.contains(label))
            fail(lp, "missing pattern for link");
        const auto& v = ls.at(label);
        auto& lk = pc.links[k];
        lk.high = high;
        lk.low = low;
        if (v.is_string() && v.get<std::string>() == "case") {
            c.case_links.push_back(k);
            lk.slots.assign(pc.period, true); // placeholder until a case is resolved
            continue;
        }
        if (!v.is_array() || v.size() != pc.period)
            fail(lp, "expected 'case' or an array of " + std::to_string(pc.period) + " 0/1 entries");
        for (std::size_t s = 0; s < pc.period; ++s) {
            if (!v[s].is_number_integer() || (v[s].get<int>() != 0 && v[s].get<int>() != 1))
                fail(lp + "[" + std::to_string(s) + "]", "expected 0 or 1");
            lk.slots.push_back(v[s].get<int>() == 1);
        }
        if (std::none_of(lk.slots.begin(), lk.slots.end(), [](bool b) { return b; }))
            fail(lp, "pattern needs at least one high slot");
    }
    try {
        pc.validate();
    } catch (const ConfigError& e) {
        fail(path, e.what());
    }
    return c;
}

inline PncConfig parse_pnc(const Json& j, const NetworkTopology& topo)
{
    const std::string path = "policy.pnc";
    check_keys(j, path, {"horizon", "tau", "gamma", "consistency", "dummy_penalty", "node_budget"});
    PncConfig c;
    if (j.contains("horizon"))
        c.horizon = count(j.at("horizon"), path + ".horizon");
    if (j.contains("tau"))
        c.tau = number(j.at("tau"), path + ".tau");
    if (j.contains("consistency"))
        c.consistency_enabled = flag(j.at("consistency"), path + ".consistency");
    if (j.contains("dummy_penalty") && !j.at("dummy_penalty").is_null())
        c.dummy_penalty = number(j.at("dummy_penalty"), path + ".dummy_penalty");
    if (j.contains("node_budget"))
        c.solver.node_budget = count(j.at("node_budget"), path + ".node_budget");
    if (j.contains("gamma")) {
        const auto& g = j.at("gamma");
        if (g.is_string()) {
            if (g.get<std::string>() != "dijkstra")
                fail(path + ".gamma", "expected 'dijkstra' or an array of rewards");
        } else if (g.is_array()) {
            c.gamma_mode = GammaMode::manual;
            for (std::size_t k = 0; k < g.size(); ++k)
                c.manual_gamma.push_back(number(g[k], path + ".gamma[" + std::to_string(k) + "]"));
        } else {
            fail(path + ".gamma", "expected 'dijkstra' or an array of rewards");
        }
    }
    try {
        c.validate(topo);
    } catch (const ConfigError& e) {
        fail(path, e.what());
    }
    return c;
}

} // namespace io_detail

/// Parses and validates a scenario document. Errors name the offending
/// field path.
inline Scenario parse_scenario(const Json& j)
{
    using namespace io_detail;
    check_keys(j, "scenario", {"name", "topology", "channel", "arrivals", "policy", "run"});
    Scenario sc;
    if (j.contains("name"))
        sc.name = text(j.at("name"), "name");
    sc.topology = parse_topology(need(j, "scenario", "topology"));
    sc.channel = parse_channel(need(j, "scenario", "channel"), sc.topology);

    const auto& names = sc.topology.queue_names();
    const auto& arr = need(j, "scenario", "arrivals");
    if (!arr.is_array())
        fail("arrivals", "expected an array");
    for (std::size_t k = 0; k < arr.size(); ++k) {
        const auto ap = "arrivals[" + std::to_string(k) + "]";
        check_keys(arr[k], ap, {"id", "time", "origin", "destination"});
        ArrivalEvent a;
        a.packet_id = text(need(arr[k], ap, "id"), ap + ".id");
        a.time = count(need(arr[k], ap, "time"), ap + ".time");
        a.origin = queue_ref(names, need(arr[k], ap, "origin"), ap + ".origin");
        a.destination_queue = queue_ref(names, need(arr[k], ap, "destination"), ap + ".destination");
        sc.arrivals.push_back(a);
    }

    if (j.contains("policy")) {
        const auto& p = j.at("policy");
        check_keys(p, "policy", {"pnc", "mw"});
        if (p.contains("pnc"))
            sc.pnc = parse_pnc(p.at("pnc"), sc.topology);
        if (p.contains("mw")) {
            check_keys(p.at("mw"), "policy.mw", {"node_budget"});
            if (p.at("mw").contains("node_budget"))
                sc.mw_solver.node_budget = count(p.at("mw").at("node_budget"), "policy.mw.node_budget");
        }
    }

    const auto& run = need(j, "scenario", "run");
    check_keys(run, "run", {"steps", "case_index", "case_seed", "bernoulli_seed", "tau_margin"});
    sc.steps = count(need(run, "run", "steps"), "run.steps");
    if (run.contains("case_index"))
        sc.case_index = count(run.at("case_index"), "run.case_index");
    if (run.contains("case_seed"))
        sc.case_seed = seed(run.at("case_seed"), "run.case_seed");
    if (run.contains("bernoulli_seed"))
        sc.bernoulli_seed = seed(run.at("bernoulli_seed"), "run.bernoulli_seed");
    if (run.contains("tau_margin"))
        sc.tau_margin = number(run.at("tau_margin"), "run.tau_margin");
    sc.validate();
    return sc;
}

inline Scenario load_scenario(const std::string& file)
{
    std::ifstream in(file);
    if (!in)
        throw ConfigError(file + ": cannot open scenario file");
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError(file + ": " + e.what());
    }
    try {
        return parse_scenario(j);
    } catch (const ConfigError& e) {
        throw ConfigError(file + ": " + e.what());
    }
}

/// Resolved configuration, sufficient to rebuild the scenario.
inline Json scenario_to_json(const Scenario& sc)
{
    const auto& topo = sc.topology;
    Json j;
    j["name"] = sc.name;
    Json links = Json::array();
    for (const auto& l : topo.links())
        links.push_back({{"label", l.label}, {"from", topo.queue_name(l.origin)}, {"to", topo.queue_name(l.destination)}});
    Json groups = Json::array();
    for (const auto& g : topo.conflict_groups()) {
        Json gg = Json::array();
        for (auto k : g)
            gg.push_back(topo.link(k).label);
        groups.push_back(gg);
    }
    j["topology"] = {{"queues", topo.queue_names()}, {"links", links}, {"conflict_groups", groups}};

    const auto& ch = sc.channel;
    if (ch.kind == ChannelSpec::Kind::explicit_chain) {
        Json tr = Json::array(), sp = Json::array();
        for (Eigen::Index r = 0; r < ch.transition.rows(); ++r) {
            Json row = Json::array();
            for (Eigen::Index c = 0; c < ch.transition.cols(); ++c)
                row.push_back(ch.transition(r, c));
            tr.push_back(row);
        }
        for (const auto& v : ch.success_probs)
            sp.push_back(std::vector<double>(v.data(), v.data() + v.size()));
        j["channel"] = {{"type", "explicit"}, {"transition", tr}, {"success_probs", sp}, {"initial_state", ch.initial_state}};
    } else {
        Json ls = Json::object();
        for (std::size_t k = 0; k < topo.link_count(); ++k) {
            if (std::find(ch.case_links.begin(), ch.case_links.end(), k) != ch.case_links.end()) {
                ls[topo.link(k).label] = "case";
            } else {
                Json s = Json::array();
                for (bool b : ch.pattern.links[k].slots)
                    s.push_back(b ? 1 : 0);
                ls[topo.link(k).label] = s;
            }
        }
        const double high = ch.pattern.links.empty() ? 1.0 : ch.pattern.links.front().high;
        const double low = ch.pattern.links.empty() ? 0.0 : ch.pattern.links.front().low;
        j["channel"] = {{"type", "pattern"}, {"period", ch.pattern.period}, {"high", high}, {"low", low},
                        {"jitter", ch.pattern.jitter_fraction}, {"initial_state", ch.initial_state}, {"links", ls}};
    }

    Json arr = Json::array();
    for (const auto& a : sc.arrivals)
        arr.push_back({{"id", a.packet_id}, {"time", a.time}, {"origin", topo.queue_name(a.origin)},
                       {"destination", topo.queue_name(a.destination_queue)}});
    j["arrivals"] = arr;

    Json pnc = {{"horizon", sc.pnc.horizon}, {"tau", sc.pnc.tau}, {"consistency", sc.pnc.consistency_enabled},
                {"node_budget", sc.pnc.solver.node_budget}};
    if (sc.pnc.gamma_mode == GammaMode::manual)
        pnc["gamma"] = sc.pnc.manual_gamma;
    else
        pnc["gamma"] = "dijkstra";
    pnc["dummy_penalty"] = sc.pnc.dummy_penalty ? Json(*sc.pnc.dummy_penalty) : Json(nullptr);
    j["policy"] = {{"pnc", pnc}, {"mw", {{"node_budget", sc.mw_solver.node_budget}}}};
    j["run"] = {{"steps", sc.steps}, {"case_index", sc.case_index}, {"case_seed", sc.case_seed},
                {"bernoulli_seed", sc.bernoulli_seed}, {"tau_margin", sc.tau_margin}};
    return j;
}

// ---------------------------------------------------------------------------
// Overrides and sweeps

inline const std::vector<std::string>& override_keys()
{
    static const std::vector<std::string> keys{"low_prob", "horizon", "tau", "packets", "steps"};
    return keys;
}

/// low_prob sets every pattern link to (1 - v, v) and re-derives
/// tau = v + margin so that high slots stay reliable. packets replicates
/// the arrival list cyclically to the requested count.
inline Scenario with_override(const Scenario& sc, const std::string& key, double v)
{
    Scenario s = sc;
    auto integral = [&]() {
        if (v < 0 || v != std::floor(v))
            throw ConfigError("override " + key + ": expected a nonnegative integer");
        return static_cast<std::size_t>(v);
    };
    if (key == "low_prob") {
        if (s.channel.kind != ChannelSpec::Kind::pattern)
            throw ConfigError("override low_prob: needs a pattern channel");
        if (!(v >= 0.0 && v <= 0.5))
            throw ConfigError("override low_prob: expected a value in [0, 0.5]");
        for (auto& l : s.channel.pattern.links) {
            l.high = 1.0 - v;
            l.low = v;
        }
        s.pnc.tau = 1.0 - (1.0 - v) + s.tau_margin;
    } else if (key == "horizon") {
        s.pnc.horizon = integral();
    } else if (key == "tau") {
        s.pnc.tau = v;
    } else if (key == "steps") {
        s.steps = integral();
    } else if (key == "packets") {
        const auto n = integral();
        if (sc.arrivals.empty())
            throw ConfigError("override packets: scenario has no arrivals to replicate");
        s.arrivals.clear();
        for (std::size_t k = 0; k < n; ++k) {
            ArrivalEvent a = sc.arrivals[k % sc.arrivals.size()];
            a.packet_id = "p" + std::to_string(k + 1);
            s.arrivals.push_back(a);
        }
    } else {
        throw ConfigError("unknown override key '" + key + "'");
    }
    s.validate();
    return s;
}

struct SweepSpec {
    std::string key;
    std::vector<double> values;
};

/// "KEY=V1,V2,..."
inline SweepSpec parse_sweep(const std::string& spec)
{
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("sweep '" + spec + "': expected KEY=V1,V2,...");
    SweepSpec s;
    s.key = spec.substr(0, eq);
    if (std::find(override_keys().begin(), override_keys().end(), s.key) == override_keys().end())
        throw ConfigError("sweep: unknown key '" + s.key + "'");
    std::stringstream ss(spec.substr(eq + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            s.values.push_back(std::stod(item, &used));
            if (used != item.size())
                throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("sweep: '" + item + "' is not a number");
        }
    }
    if (s.values.empty())
        throw ConfigError("sweep '" + spec + "': no values");
    return s;
}

// ---------------------------------------------------------------------------
// Writers

/// Shortest round-trip decimal form; stable across runs.
inline std::string format_number(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    double back = 0.0;
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        std::sscanf(buf, "%lf", &back);
        if (back == v)
            break;
    }
    return buf;
}

inline const char* csv_header() { return "case_id,rep,policy,accumulated_delay,delivered_count,mean_solve_time"; }

inline std::string csv_row(const EpisodeSummary& r, bool timing)
{
    std::ostringstream os;
    os << r.case_id << ',' << r.rep << ',' << to_string(r.policy) << ',' << r.accumulated_delay << ','
       << r.delivered_count << ',' << (timing ? format_number(r.mean_solve_time) : std::string("NA"));
    return os.str();
}

inline EpisodeSummary summarize(const EpisodeResult& e, std::size_t case_id, std::size_t rep)
{
    EpisodeSummary s{case_id, rep, e.policy, e.accumulated_delay, e.delivered_count, e.mean_solve_time(), {}};
    if (e.policy == PolicyKind::pnc)
        s.forecast = forecast_accuracy(e);
    return s;
}

/// One JSON record per slot, one per packet, then a summary record.
inline void write_episode_jsonl(std::ostream& os, const EpisodeResult& e, const NetworkTopology& topo, bool timing)
{
    for (const auto& s : e.slots) {
        Json act = Json::array();
        for (const auto& a : s.active)
            act.push_back({{"packet", a.packet_id}, {"link", topo.link(a.link).label}});
        Json rec = {{"record", "slot"}, {"slot", s.slot}, {"channel_state", s.channel_state}, {"pending", s.pending},
                    {"active", act}, {"realization", s.realization}, {"violations", s.violations}};
        if (timing) {
            rec["solve_seconds"] = s.solve_seconds;
            rec["assembly_seconds"] = s.assembly_seconds;
        }
        os << rec.dump() << '\n';
    }
    for (const auto& p : e.packets) {
        Json fc = Json::array();
        for (const auto& [at, f] : p.forecasts)
            fc.push_back({{"slot", at}, {"forecast", f ? Json(*f) : Json(nullptr)}});
        Json rec = {{"record", "packet"}, {"id", p.packet_id}, {"origin", topo.queue_name(p.origin)},
                    {"destination", topo.queue_name(p.destination)}, {"spawn", p.spawn},
                    {"delivery", p.delivery ? Json(*p.delivery) : Json(nullptr)}, {"forecasts", fc}};
        os << rec.dump() << '\n';
    }
    Json sum = {{"record", "summary"}, {"policy", to_string(e.policy)}, {"steps", e.steps},
                {"accumulated_delay", e.accumulated_delay}, {"delivered_count", e.delivered_count},
                {"violation_count", e.violation_count}};
    if (timing)
        sum["mean_solve_time"] = e.mean_solve_time();
    os << sum.dump() << '\n';
}

} // namespace netpnc
