#include "netpnc/scenario_io.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace netpnc;

namespace {

std::string path(const std::string& name)
{
    return std::string(NETPNC_SOURCE_DIR) + "/scenarios/" + name;
}

Json read(const std::string& name)
{
    std::ifstream in(path(name));
    return Json::parse(in);
}

std::string error_of(const Json& j)
{
    try {
        parse_scenario(j);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST(Parse, ShippedScenarios)
{
    for (const char* f : {"specific_case.json", "monte_carlo.json", "timing.json"}) {
        const auto sc = load_scenario(path(f));
        EXPECT_NO_THROW(sc.validate()) << f;
        EXPECT_EQ(sc.topology.queue_count(), 5U);
        EXPECT_EQ(sc.topology.link_count(), 4U);
        EXPECT_EQ(sc.arrivals.size(), 3U);
    }
    const auto sc = load_scenario(path("specific_case.json"));
    EXPECT_EQ(sc.pnc.horizon, 4U);
    EXPECT_DOUBLE_EQ(sc.pnc.tau, 0.1);
    EXPECT_EQ(sc.channel.pattern.period, 3U);
    EXPECT_EQ(sc.channel.pattern.links[1].slots, (std::vector<bool>{true, false, true}));
    EXPECT_EQ(sc.arrivals[2].origin, 2U);
    EXPECT_EQ(sc.arrivals[2].destination_queue, 4U);
    EXPECT_EQ(load_scenario(path("monte_carlo.json")).channel.case_links, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Parse, UnknownKeyNamesItsPath)
{
    auto j = read("specific_case.json");
    j["policy"]["pnc"]["horizn"] = 3;
    EXPECT_NE(error_of(j).find("policy.pnc.horizn"), std::string::npos) << error_of(j);
    j = read("specific_case.json");
    j["extra"] = 1;
    EXPECT_NE(error_of(j).find("extra"), std::string::npos);
}

TEST(Parse, BadValuesNameTheirPath)
{
    auto j = read("specific_case.json");
    j["channel"]["links"]["uplink2"] = Json::array({0, 0, 0});
    EXPECT_NE(error_of(j).find("uplink2"), std::string::npos) << error_of(j);

    j = read("specific_case.json");
    j["arrivals"][1]["origin"] = "nowhere";
    EXPECT_NE(error_of(j).find("arrivals"), std::string::npos) << error_of(j);

    j = read("specific_case.json");
    j["policy"]["pnc"]["tau"] = 1.5;
    EXPECT_FALSE(error_of(j).empty());

    j = read("specific_case.json");
    j["run"]["steps"] = -1;
    EXPECT_NE(error_of(j).find("run.steps"), std::string::npos) << error_of(j);

    j = read("specific_case.json");
    j["topology"].erase("links");
    EXPECT_NE(error_of(j).find("topology.links"), std::string::npos) << error_of(j);
}

TEST(Parse, MalformedFile)
{
    const std::string tmp = ::testing::TempDir() + "/bad_scenario.json";
    std::ofstream(tmp) << "{ \"name\": ";
    EXPECT_THROW(load_scenario(tmp), ConfigError);
    EXPECT_THROW(load_scenario(tmp + ".missing"), ConfigError);
}

TEST(Parse, ExplicitChannel)
{
    auto j = read("specific_case.json");
    j["channel"] = {{"type", "explicit"},
                    {"transition", {{0.5, 0.5}, {0.2, 0.8}}},
                    {"success_probs", {{1, 1, 1, 1}, {0.5, 0.5, 0.5, 0.5}}},
                    {"initial_state", 1}};
    const auto sc = parse_scenario(j);
    ASSERT_EQ(sc.channel.kind, ChannelSpec::Kind::explicit_chain);
    Rng rng(1);
    const auto ch = sc.channel.instantiate(0, rng);
    EXPECT_EQ(ch.current_state(), 1U);
    EXPECT_DOUBLE_EQ(ch.transition()(1, 1), 0.8);

    j["channel"]["transition"] = {{0.5, 0.6}, {0.2, 0.8}};
    EXPECT_THROW(parse_scenario(j), ConfigError);
}

TEST(RoundTrip, ResolvedConfigRebuildsScenario)
{
    for (const char* f : {"specific_case.json", "monte_carlo.json", "timing.json"}) {
        const auto a = load_scenario(path(f));
        const auto j = scenario_to_json(a);
        const auto b = parse_scenario(j);
        EXPECT_EQ(scenario_to_json(b), j) << f;
        EXPECT_EQ(j, read(f)) << f;
    }
}

TEST(Override, LowProbResetsPatternsAndTau)
{
    const auto sc = load_scenario(path("monte_carlo.json"));
    const auto s = with_override(sc, "low_prob", 0.2);
    for (const auto& l : s.channel.pattern.links) {
        EXPECT_DOUBLE_EQ(l.high, 0.8);
        EXPECT_DOUBLE_EQ(l.low, 0.2);
    }
    EXPECT_NEAR(s.pnc.tau, 0.2 + sc.tau_margin, 1e-12);
    EXPECT_THROW(with_override(sc, "low_prob", 0.7), ConfigError);
}

TEST(Override, IntegralKeys)
{
    const auto sc = load_scenario(path("specific_case.json"));
    EXPECT_EQ(with_override(sc, "horizon", 6).pnc.horizon, 6U);
    EXPECT_EQ(with_override(sc, "steps", 30).steps, 30U);
    const auto p = with_override(sc, "packets", 5);
    ASSERT_EQ(p.arrivals.size(), 5U);
    EXPECT_EQ(p.arrivals[3].origin, sc.arrivals[0].origin);
    EXPECT_EQ(p.arrivals[4].packet_id, "p5");
    EXPECT_THROW(with_override(sc, "horizon", 2.5), ConfigError);
    EXPECT_THROW(with_override(sc, "horizon", 0), ConfigError);
    EXPECT_THROW(with_override(sc, "speed", 1), ConfigError);
}

TEST(Sweep, Parsing)
{
    const auto s = parse_sweep("horizon=2,4,6");
    EXPECT_EQ(s.key, "horizon");
    EXPECT_EQ(s.values, (std::vector<double>{2, 4, 6}));
    EXPECT_THROW(parse_sweep("horizon"), ConfigError);
    EXPECT_THROW(parse_sweep("speed=1"), ConfigError);
    EXPECT_THROW(parse_sweep("tau=0.1,x"), ConfigError);
    EXPECT_THROW(parse_sweep("tau="), ConfigError);
}

TEST(Writers, NumbersAndCsv)
{
    EXPECT_EQ(format_number(0.1), "0.1");
    EXPECT_EQ(format_number(12), "12");
    EXPECT_EQ(std::stod(format_number(1.0 / 3.0)), 1.0 / 3.0);
    EpisodeSummary r{5, 1, PolicyKind::mw, 14, 3, 0.25, {}};
    EXPECT_EQ(csv_row(r, true), "5,1,mw,14,3,0.25");
    EXPECT_EQ(csv_row(r, false), "5,1,mw,14,3,NA");
    EXPECT_EQ(std::string(csv_header()).substr(0, 7), "case_id");
}

TEST(Writers, EpisodeJsonl)
{
    const auto sc = load_scenario(path("specific_case.json"));
    const auto e = run_episode(sc, PolicyKind::pnc);
    std::ostringstream os;
    write_episode_jsonl(os, e, sc.topology, false);
    std::istringstream in(os.str());
    std::string line;
    std::size_t slots = 0, packets = 0, summaries = 0;
    while (std::getline(in, line)) {
        const auto j = Json::parse(line);
        const auto kind = j.at("record").get<std::string>();
        slots += kind == "slot";
        packets += kind == "packet";
        summaries += kind == "summary";
        EXPECT_FALSE(j.contains("solve_seconds"));
        if (kind == "summary") {
            EXPECT_EQ(j.at("accumulated_delay").get<std::int64_t>(), e.accumulated_delay);
        }
    }
    EXPECT_EQ(slots, sc.steps);
    EXPECT_EQ(packets, 3U);
    EXPECT_EQ(summaries, 1U);

    std::ostringstream timed;
    write_episode_jsonl(timed, e, sc.topology, true);
    EXPECT_NE(timed.str().find("solve_seconds"), std::string::npos);
}
