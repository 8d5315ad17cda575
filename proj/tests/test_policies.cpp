#include "netpnc/policies.hpp"
#include "netpnc/scenario_io.hpp"
#include "netpnc/simulator.hpp"

#include <gtest/gtest.h>

using namespace netpnc;

namespace {

std::shared_ptr<const NetworkTopology> factory()
{
    return std::make_shared<const NetworkTopology>(
        5, std::vector<Link>{{0, 3, "uplink1"}, {1, 3, "uplink2"}, {2, 3, "uplink3"}, {3, 4, "broadcast"}},
        std::vector<std::vector<std::size_t>>{{0, 1, 2, 3}},
        std::vector<std::string>{"robot1", "robot2", "robot3", "router", "all_robots"});
}

ChannelProcess constant_channel(Eigen::VectorXd p)
{
    return ChannelProcess(Eigen::MatrixXd::Identity(1, 1), {std::move(p)}, 0);
}

Scenario specific_case()
{
    return load_scenario(std::string(NETPNC_SOURCE_DIR) + "/scenarios/specific_case.json");
}

PredictionStack factory_stack(std::initializer_list<std::size_t> robots)
{
    PredictionStack st(factory());
    for (auto r : robots)
        st = spawn_subsystem(st, ArrivalEvent{0, r, 4, "p" + std::to_string(r + 1)});
    return st;
}

} // namespace

TEST(GammaDijkstra, ReliableChain)
{
    NetworkTopology t(3, {{0, 1, "ab"}, {1, 2, "bc"}}, {{0, 1}});
    const auto g = gamma_dijkstra(t, 2, Eigen::VectorXd::Zero(2), 0.1);
    EXPECT_EQ(g, (std::vector<double>{-1, -2, -3, -6}));
}

TEST(GammaDijkstra, RepetitionWeight)
{
    NetworkTopology t(2, {{0, 1, "a"}}, {{0}});
    const auto g = gamma_dijkstra(t, 1, Eigen::VectorXd::Constant(1, 0.5), 0.1);
    // w = ceil(1 / 0.30103) = 4, D = 4
    EXPECT_EQ(g, (std::vector<double>{-1, -5, -10}));
}

TEST(GammaDijkstra, DestinationHasZeroDistance)
{
    NetworkTopology t(3, {{0, 1, "a"}, {2, 1, "b"}}, {{0, 1}});
    const auto g = gamma_dijkstra(t, 1, (Eigen::VectorXd(2) << 0.0, 0.5).finished(), 0.1);
    const double big_d = 4;
    EXPECT_EQ(g[1], -big_d - 1);
    EXPECT_EQ(*std::min_element(g.begin(), g.end() - 1), g[1]);
    EXPECT_EQ(g.back(), 2 * (-big_d - 1));
}

TEST(GammaDijkstra, DeadLinksAreImpassable)
{
    NetworkTopology t(2, {{0, 1, "a"}}, {{0}});
    const auto g = gamma_dijkstra(t, 1, Eigen::VectorXd::Constant(1, 1.0), 0.1);
    EXPECT_EQ(g[0], 0.0);
    EXPECT_FALSE(destination_reachable(g, 0, 1));
}

TEST(GammaDijkstra, FactoryPatternsByHand)
{
    // Time-averaged success 1/3, 2/3, 1/3, 1 on the uplinks and broadcast.
    Rng rng(1);
    PatternCase pc{3, {{{true, false, false}, 1, 0}, {{true, false, true}, 1, 0}, {{false, true, false}, 1, 0},
                       {{true, true, true}, 1, 0}}, 0.0};
    const auto ch = pattern_chain(pc, rng);
    const Eigen::VectorXd f = Eigen::VectorXd::Ones(4) - time_averaged_success(ch);
    const auto g = gamma_dijkstra(*factory(), 4, f, 0.1);
    // weights 6, 3, 6, 1; distances 7, 4, 7, 1, 0
    EXPECT_EQ(g, (std::vector<double>{-1, -4, -1, -7, -8, -16}));
}

TEST(Assemble, SmallestProgram)
{
    auto base = std::make_shared<const NetworkTopology>(2, std::vector<Link>{{0, 1, "a"}},
                                                        std::vector<std::vector<std::size_t>>{{0}});
    PredictionStack st(base);
    st = spawn_subsystem(st, ArrivalEvent{0, 0, 1, "p"});
    PncConfig cfg;
    cfg.horizon = 1;
    const auto ap = assemble_program(st, constant_channel(Eigen::VectorXd::Ones(1)), 0, cfg, {});
    // u(link), u(dummy link), u_D(link), u_D(dummy link)
    ASSERT_EQ(ap.program.variable_count(), 4U);
    const auto& lay = ap.layout;
    bool found = false;
    for (Eigen::Index r = 0; r < ap.program.A.rows(); ++r)
        if (ap.program.row_labels[static_cast<std::size_t>(r)] == "reliable[p,a]") {
            found = true;
            EXPECT_EQ(ap.program.A(r, static_cast<Eigen::Index>(lay.u(0, 0, 0))), -1.0);
            EXPECT_EQ(ap.program.A(r, static_cast<Eigen::Index>(lay.dummy_control(0, 0))), -1.0);
            EXPECT_EQ(ap.program.A.row(r).cwiseAbs().sum(), 2.0);
            EXPECT_EQ(ap.program.b(r), -1.0);
        }
    EXPECT_TRUE(found);
}

TEST(Assemble, SpecificCaseDimensions)
{
    const auto sc = specific_case();
    Rng rng(sc.case_seed);
    const auto ch = sc.channel.instantiate(0, rng);
    const auto st = factory_stack({0, 1, 2});
    const auto ap = assemble_program(st, ch, 0, sc.pnc, {});
    // (4 links + dummy) * 3 subsystems * H, plus one dummy control per reliability row
    EXPECT_EQ(ap.program.variable_count(), 5U * 3 * 4 + 5 * 3);
    EXPECT_EQ(ap.program.variable_labels.size(), ap.program.variable_count());
    EXPECT_EQ(ap.program.row_labels.size(), ap.program.row_count());
    EXPECT_NO_THROW(ap.program.validate());
}

TEST(Assemble, ObjectiveCoefficientsFollowRewardAndTime)
{
    const auto sc = specific_case();
    Rng rng(sc.case_seed);
    const auto ch = sc.channel.instantiate(0, rng);
    const auto st = factory_stack({0, 1});
    const auto ap = assemble_program(st, ch, 0, sc.pnc, {});
    const auto h = ap.layout.horizon;
    const auto nb = st.queues_per_subsystem();
    for (std::size_t t = 0; t < h; ++t)
        for (std::size_t i = 0; i < st.size(); ++i)
            for (std::size_t l = 0; l < st.links_per_subsystem(); ++l) {
                const auto& link = st.subsystems()[i].topology->link(l);
                const double w = ap.matrices.omega_table(static_cast<Eigen::Index>(t),
                                                         static_cast<Eigen::Index>(i * st.links_per_subsystem() + l));
                const double expect = w * static_cast<double>(h - t) * ap.gamma[i * nb + link.destination];
                EXPECT_NEAR(ap.program.c(static_cast<Eigen::Index>(ap.layout.u(t, i, l))), expect, 1e-12);
            }
    EXPECT_GT(ap.dummy_penalty, static_cast<double>(h) * 16.0);
}

TEST(Assemble, FractionalDestinationForbidsFurtherFills)
{
    PredictionStack st = factory_stack({0});
    Eigen::VectorXd q = Eigen::VectorXd::Zero(6);
    q(0) = 1.0;
    q(3) = 1.0;
    q(4) = 1.2;
    st = with_queue_vector(st, "p1", q);
    PncConfig cfg;
    cfg.horizon = 2;
    const auto ap = assemble_program(st, constant_channel(Eigen::VectorXd::Ones(4)), 0, cfg, {});
    const auto col = static_cast<Eigen::Index>(ap.layout.u(0, 0, 3));
    bool found = false;
    for (Eigen::Index r = 0; r < ap.program.A.rows(); ++r)
        if (ap.program.row_labels[static_cast<std::size_t>(r)] == "cap[0,p1,broadcast]") {
            found = true;
            EXPECT_NEAR(ap.program.b(r), 0.8, 1e-12);
            EXPECT_EQ(ap.program.A(r, col), 1.0);
        }
    EXPECT_TRUE(found);
    const auto s = solve(ap.program);
    ASSERT_EQ(s.status, SolveStatus::optimal);
    EXPECT_EQ(s.x[static_cast<std::size_t>(col)], 0);
}

TEST(Assemble, DummyQueueHasNoCapRows)
{
    const auto st = factory_stack({0});
    PncConfig cfg;
    const auto ap = assemble_program(st, constant_channel(Eigen::VectorXd::Ones(4)), 0, cfg, {});
    for (const auto& l : ap.program.row_labels)
        EXPECT_EQ(l.find("cap[") == 0 && l.find(",dummy]") != std::string::npos, false) << l;
}

TEST(Assemble, RejectsWeakPenalty)
{
    const auto st = factory_stack({0});
    PncConfig cfg;
    cfg.dummy_penalty = 1.0;
    EXPECT_THROW(assemble_program(st, constant_channel(Eigen::VectorXd::Ones(4)), 0, cfg, {}), ConfigError);
}

TEST(PncStep, SpecificCaseStartsWithRobotOne)
{
    const auto sc = specific_case();
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed);
        const auto ch = sc.channel.instantiate(0, rng);
        const auto d = pnc_step(factory_stack({0, 1, 2}), ch, 0, sc.pnc, {});
        ASSERT_EQ(d.active.size(), 1U);
        EXPECT_EQ(d.active[0].packet_id, "p1");
        EXPECT_EQ(d.active[0].link, 0U);
    }
}

TEST(PncStep, DeadLinksScheduleNothing)
{
    // Dijkstra rewards would reject the scenario as unreachable
    PncConfig cfg;
    cfg.gamma_mode = GammaMode::manual;
    cfg.manual_gamma = {-1, -1, -1, -2, -3, -6};
    const auto d = pnc_step(factory_stack({0, 1}), constant_channel(Eigen::VectorXd::Zero(4)), 0, cfg, {});
    EXPECT_TRUE(d.active.empty());
    for (const auto& f : d.forecasts)
        EXPECT_FALSE(f.slot);
    EXPECT_THROW(pnc_step(factory_stack({0}), constant_channel(Eigen::VectorXd::Zero(4)), 0, PncConfig{}, {}),
                 ConfigError);
}

TEST(PncStep, SolverAgreesWithBruteForceOnReducedInstances)
{
    const auto sc = specific_case();
    Rng rng(sc.case_seed);
    const auto ch = sc.channel.instantiate(0, rng);
    struct Variant {
        std::initializer_list<std::size_t> robots;
        std::size_t horizon;
    };
    for (const auto& v : {Variant{{0, 1}, 1}, Variant{{0}, 3}, Variant{{1}, 3}, Variant{{2}, 2}}) {
        PncConfig cfg = sc.pnc;
        cfg.horizon = v.horizon;
        const auto ap = assemble_program(factory_stack(v.robots), ch, 0, cfg, {});
        ASSERT_LE(ap.program.variable_count(), 24U);
        const auto a = solve(ap.program);
        const auto b = brute_force(ap.program);
        ASSERT_EQ(a.status, SolveStatus::optimal);
        EXPECT_EQ(a.x, b.x);
        EXPECT_DOUBLE_EQ(a.objective, b.objective);
    }
}

TEST(PncStep, ForecastsRespectReliability)
{
    // Every packet forecast inside the horizon without dummy help reaches
    // its destination with accumulated expected failure <= tau (or through
    // an individually reliable slot).
    Rng rng(77);
    for (int trial = 0; trial < 30; ++trial) {
        PatternCase pc{3, {}, 0.01};
        for (int l = 0; l < 4; ++l)
            pc.links.push_back({pattern_from_index(3, 1 + uniform_index(rng, 7)), 0.9, 0.3});
        const auto ch = pattern_chain(pc, rng, uniform_index(rng, 3));
        PncConfig cfg;
        cfg.tau = 0.15;
        cfg.horizon = 4;
        const auto st = factory_stack({0, 1, 2});
        const auto ap = assemble_program(st, ch, 0, cfg, {});
        const auto d = pnc_step(st, ch, 0, cfg, {});
        const auto& lay = ap.layout;
        for (std::size_t i = 0; i < st.size(); ++i) {
            if (!d.forecasts[i].slot)
                continue;
            for (std::size_t l = 0; l < 4; ++l) {
                if (d.trajectory[lay.dummy_control(i, l)])
                    continue;
                double prod = 1.0;
                bool single = false, used = false;
                for (std::size_t t = 0; t < lay.horizon; ++t)
                    if (d.trajectory[lay.u(t, i, l)]) {
                        const double f = expected_failure(ch, t)(static_cast<Eigen::Index>(l));
                        prod *= f;
                        single = single || f <= cfg.tau;
                        used = true;
                    }
                if (used) {
                    EXPECT_TRUE(prod <= cfg.tau + 1e-12 || single);
                }
            }
        }
    }
}

TEST(PncStep, BrokenPromiseIsLoggedAndDropped)
{
    // p1 still sits at its robot; delivery next slot is impossible.
    const auto st = factory_stack({0});
    PncConfig cfg;
    ForecastBook book{{"p1", 1}};
    const auto d = pnc_step(st, constant_channel(Eigen::VectorXd::Ones(4)), 0, cfg, book);
    EXPECT_EQ(d.violations, std::vector<std::string>{"p1"});
    ASSERT_TRUE(d.forecasts[0].slot);
    EXPECT_EQ(*d.forecasts[0].slot, 2U);
    EXPECT_GE(d.stats.solves, 2U);

    ForecastBook stale{{"p1", 0}};
    const auto e = pnc_step(st, constant_channel(Eigen::VectorXd::Ones(4)), 0, cfg, stale);
    EXPECT_EQ(e.violations, std::vector<std::string>{"p1"});
}

TEST(PncStep, KeptPromiseAddsRow)
{
    const auto st = factory_stack({0});
    PncConfig cfg;
    const auto ap = assemble_program(st, constant_channel(Eigen::VectorXd::Ones(4)), 0, cfg, {{"p1", 3}});
    ASSERT_EQ(ap.consistency_rows.size(), 1U);
    cfg.consistency_enabled = false;
    EXPECT_TRUE(assemble_program(st, constant_channel(Eigen::VectorXd::Ones(4)), 0, cfg, {{"p1", 3}})
                    .consistency_rows.empty());
}

TEST(MaxWeight, HigherSuccessWinsTheFirstSlot)
{
    const auto base = factory();
    Eigen::VectorXd q = Eigen::VectorXd::Zero(10);
    q(0) = 1; // p1 at robot1
    q(5 + 1) = 1; // p2 at robot2
    const Eigen::VectorXd p = (Eigen::VectorXd(4) << 0.991, 0.995, 0.0, 0.993).finished();
    const auto d = maxweight_step(q, *base, p, constituency_matrix(*base, 2));
    ASSERT_EQ(d.active.size(), 1U);
    EXPECT_EQ(d.active[0].subsystem, 1U);
    EXPECT_EQ(d.active[0].link, 1U);
}

TEST(MaxWeight, IdleWhenNothingPending)
{
    const auto base = factory();
    const auto d = maxweight_step(Eigen::VectorXd::Zero(5), *base, Eigen::VectorXd::Ones(4), constituency_matrix(*base, 1));
    EXPECT_TRUE(d.active.empty());
}

TEST(MaxWeight, SingleLiveLink)
{
    NetworkTopology t(2, {{0, 1, "a"}}, {{0}});
    const auto d = maxweight_step(Eigen::Vector2d(1, 0), t, Eigen::VectorXd::Constant(1, 0.4), constituency_matrix(t, 1));
    ASSERT_EQ(d.active.size(), 1U);
    EXPECT_EQ(d.active[0].link, 0U);
}

TEST(MaxWeight, ExactMinimumAndScaleInvariance)
{
    const auto base = factory();
    Rng rng(61);
    for (int trial = 0; trial < 200; ++trial) {
        const auto s = 1 + uniform_index(rng, 3);
        Eigen::VectorXd q(static_cast<Eigen::Index>(5 * s));
        for (auto& v : q)
            v = static_cast<double>(uniform_index(rng, 3));
        Eigen::VectorXd p(4);
        for (auto& v : p)
            v = uniform01(rng);
        const auto c = constituency_matrix(*base, s);
        const auto prog = maxweight_program(q, *base, p, c);
        const auto d = maxweight_step(q, *base, p, c);
        EXPECT_NEAR(d.stats.objective, brute_force(prog).objective, 1e-12);

        const double k = uniform(rng, 0.1, 10.0);
        const auto ds = maxweight_step(q * k, *base, p, c);
        EXPECT_EQ(ds.trajectory, d.trajectory);
    }
}
