// netpnc command-line driver: run, montecarlo, timing, oracle-check.

#include "netpnc/netpnc.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace netpnc;

namespace {

struct Options {
    std::string scenario;
    std::string policy = "pnc";
    std::optional<std::size_t> steps;
    std::optional<std::size_t> horizon;
    std::optional<double> tau;
    std::size_t cases = 1;
    std::size_t reps = 1;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
    std::string sweep;
    bool no_timing = false;
    std::size_t count = 200;
};

Scenario resolved_scenario(const Options& o)
{
    Scenario sc = load_scenario(o.scenario);
    if (o.steps)
        sc = with_override(sc, "steps", static_cast<double>(*o.steps));
    if (o.horizon)
        sc = with_override(sc, "horizon", static_cast<double>(*o.horizon));
    if (o.tau)
        sc = with_override(sc, "tau", *o.tau);
    if (o.seed) {
        sc.case_seed = *o.seed;
        sc.bernoulli_seed = *o.seed;
    }
    return sc;
}

void write_file(const fs::path& p, const std::string& content)
{
    std::ofstream f(p, std::ios::binary);
    if (!f)
        throw std::runtime_error("cannot write " + p.string());
    f << content;
}

Json manifest(const std::string& command, const Options& o, const Scenario& sc, const std::vector<std::string>& outputs)
{
    Json j;
    j["version"] = kVersion;
    j["command"] = command;
    j["scenario_path"] = o.scenario;
    j["resolved"] = scenario_to_json(sc);
    j["seeds"] = {{"case_seed", sc.case_seed}, {"bernoulli_seed", sc.bernoulli_seed}};
    if (o.seed)
        j["seeds"]["master_seed"] = *o.seed;
    j["options"] = {{"policy", o.policy}, {"cases", o.cases}, {"reps", o.reps}, {"sweep", o.sweep},
                    {"no_timing", o.no_timing}};
    j["outputs"] = outputs;
    return j;
}

int cmd_run(const Options& o)
{
    const Scenario sc = resolved_scenario(o);
    if (o.policy != "pnc" && o.policy != "mw")
        throw ConfigError("--policy: expected pnc or mw");
    const PolicyKind pol = o.policy == "pnc" ? PolicyKind::pnc : PolicyKind::mw;

    const fs::path dir(o.out);
    fs::create_directories(dir);
    write_file(dir / "manifest.json",
               manifest("run", o, sc, {"manifest.json", "episode.jsonl", "episodes.csv"}).dump(2) + "\n");

    const auto e = run_episode(sc, pol);
    std::ostringstream log;
    write_episode_jsonl(log, e, sc.topology, !o.no_timing);
    write_file(dir / "episode.jsonl", log.str());
    write_file(dir / "episodes.csv",
               std::string(csv_header()) + "\n" + csv_row(summarize(e, sc.case_index, 0), !o.no_timing) + "\n");

    std::cout << "policy " << to_string(pol) << ": accumulated delay " << e.accumulated_delay << ", delivered "
              << e.delivered_count << "/" << e.packets.size() << "\n";
    for (const auto& s : e.slots)
        if (!s.active.empty()) {
            std::cout << "first decision at slot " << s.slot << ":";
            for (const auto& a : s.active)
                std::cout << " " << a.packet_id << " via " << sc.topology.link(a.link).label;
            std::cout << "\n";
            break;
        }
    return 0;
}

int cmd_montecarlo(const Options& o)
{
    const Scenario sc = resolved_scenario(o);
    std::vector<std::pair<std::string, Scenario>> points;
    if (o.sweep.empty()) {
        points.push_back({"", sc});
    } else {
        const auto sw = parse_sweep(o.sweep);
        for (double v : sw.values)
            points.push_back({sw.key + "=" + format_number(v), with_override(sc, sw.key, v)});
    }
    const std::uint64_t master = o.seed.value_or(sc.case_seed);
    for (const auto& [label, s] : points) {
        if (o.cases > s.channel.case_space())
            throw ConfigError("--cases: " + std::to_string(o.cases) + " exceeds the case space of " +
                              std::to_string(s.channel.case_space()));
        if (o.cases == 0 || o.reps == 0)
            throw ConfigError("--cases and --reps must be positive");
    }

    const fs::path dir(o.out);
    fs::create_directories(dir);
    std::vector<std::string> outputs{"manifest.json", "summary.csv"};
    for (std::size_t k = 0; k < points.size(); ++k)
        outputs.push_back("episodes_" + std::to_string(k) + ".csv");
    write_file(dir / "manifest.json", manifest("montecarlo", o, sc, outputs).dump(2) + "\n");

    std::ostringstream summary;
    summary << "point,sweep,cases,reps,runs,mean_ratio,ratio_stddev,ratio_of_sums,forecast_on_time,forecast_total\n";
    for (std::size_t k = 0; k < points.size(); ++k) {
        const auto& [label, s] = points[k];
        const auto rep = monte_carlo(s, o.cases, o.reps, master);
        std::ostringstream csv;
        csv << csv_header() << "\n";
        for (const auto& r : rep.rows)
            csv << csv_row(r, !o.no_timing) << "\n";
        write_file(dir / ("episodes_" + std::to_string(k) + ".csv"), csv.str());
        summary << k << ',' << (label.empty() ? "none" : label) << ',' << rep.cases << ',' << rep.reps << ','
                << rep.run_count() << ',' << format_number(rep.mean_ratio) << ',' << format_number(rep.ratio_stddev)
                << ',' << format_number(rep.ratio_of_sums) << ',' << rep.forecast.on_time << ','
                << rep.forecast.forecasted << "\n";
        std::cout << (label.empty() ? "base" : label) << ": mean PNC/MW ratio " << rep.mean_ratio << " over "
                  << rep.run_count() << " runs\n";
    }
    write_file(dir / "summary.csv", summary.str());
    return 0;
}

int cmd_timing(const Options& o)
{
    const Scenario sc = resolved_scenario(o);
    const auto sw = parse_sweep(o.sweep.empty() ? "horizon=2,4,6,8,10" : o.sweep);
    std::vector<Scenario> points;
    for (double v : sw.values)
        points.push_back(with_override(sc, sw.key, v));
    if (o.cases == 0 || o.reps == 0 || o.cases > sc.channel.case_space())
        throw ConfigError("--cases/--reps out of range");
    const std::uint64_t master = o.seed.value_or(sc.case_seed);

    const fs::path dir(o.out);
    fs::create_directories(dir);
    write_file(dir / "manifest.json", manifest("timing", o, sc, {"manifest.json", "timing.csv"}).dump(2) + "\n");

    std::ostringstream csv;
    csv << "key,value,samples,pnc_median_s,mw_median_s,ratio,ratio_with_assembly\n";
    for (std::size_t k = 0; k < points.size(); ++k) {
        auto tp = timing_point(points[k], o.cases, o.reps, master);
        csv << sw.key << ',' << format_number(sw.values[k]) << ',' << tp.pnc_samples.size() << ',';
        if (o.no_timing)
            csv << "NA,NA,NA,NA\n";
        else
            csv << format_number(median(tp.pnc_samples)) << ',' << format_number(median(tp.mw_samples)) << ','
                << format_number(tp.ratio) << ',' << format_number(tp.ratio_with_assembly) << "\n";
        std::cout << sw.key << "=" << sw.values[k] << ": PNC/MW solve-time ratio " << tp.ratio << "\n";
    }
    write_file(dir / "timing.csv", csv.str());
    return 0;
}

Solution configured_solver(const BinaryLinearProgram& p)
{
#ifdef NETPNC_CORRUPT_SOLVER
    // Negative control: report the first variable flipped.
    Solution s = solve(p);
    if (s.status == SolveStatus::optimal && !s.x.empty()) {
        s.x[0] ^= 1;
        s.objective = objective_value(p, s.x);
    }
    return s;
#else
    return solve(p);
#endif
}

int cmd_oracle_check(const Options& o)
{
    const auto rep = oracle_check(o.count, o.seed.value_or(1), configured_solver);
    std::cout << "oracle-check: " << rep.passed << "/" << rep.count << " instances agree\n";
    if (!rep.ok()) {
        std::cout << rep.failure_dump;
        return 1;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"netpnc: predictive network control against MaxWeight on Markov channels"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--scenario", o.scenario, "scenario JSON file")->required();
        sub->add_option("--steps", o.steps, "override episode length N");
        sub->add_option("--horizon", o.horizon, "override PNC horizon H");
        sub->add_option("--tau", o.tau, "override reliability threshold");
        sub->add_option("--seed", o.seed, "seed (run: case and Bernoulli; montecarlo/timing: master)");
        sub->add_option("--out", o.out, "output directory");
        sub->add_flag("--no-timing", o.no_timing, "omit wall-clock fields so outputs are reproducible");
    };

    auto* run = app.add_subcommand("run", "one closed-loop episode");
    add_common(run);
    run->add_option("--policy", o.policy, "pnc or mw")->check(CLI::IsMember({"pnc", "mw"}));

    auto* mc = app.add_subcommand("montecarlo", "paired PNC/MW episodes over random cases");
    add_common(mc);
    mc->add_option("--cases", o.cases, "distinct cases x");
    mc->add_option("--reps", o.reps, "repetitions per case y");
    mc->add_option("--sweep", o.sweep, "KEY=V1,V2,... with KEY in low_prob, horizon, tau, packets, steps");

    auto* tm = app.add_subcommand("timing", "per-slot solve-time ratios PNC/MW");
    add_common(tm);
    tm->add_option("--cases", o.cases, "distinct cases x");
    tm->add_option("--reps", o.reps, "repetitions per case y");
    tm->add_option("--sweep", o.sweep, "KEY=V1,V2,... (default horizon=2,4,6,8,10)");

    auto* oc = app.add_subcommand("oracle-check", "branch and bound vs exhaustive enumeration");
    oc->add_option("--count", o.count, "number of random programs");
    oc->add_option("--seed", o.seed, "generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*run)
            return cmd_run(o);
        if (*mc)
            return cmd_montecarlo(o);
        if (*tm)
            return cmd_timing(o);
        return cmd_oracle_check(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
