#include <gtest/gtest.h>

#include <functional>

#include <onet/netops.hpp>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace onet;
using namespace onet::netops;
using onet::test::transparent_link;
using namespace onet::oracle;

namespace {

NetworkTopology triangle() {
    NetworkTopology t;
    t.nodes = {{"A", ""}, {"B", ""}, {"C", ""}};
    t.links = {transparent_link("AB", "A", "B", 1, 80.0), transparent_link("BC", "B", "C", 1, 80.0),
               transparent_link("AC", "A", "C", 2, 100.0)};
    return t;
}

NetworkTopology single_link_topology(double gamma = 1.3) {
    NetworkTopology t;
    t.nodes = {{"A", ""}, {"B", ""}};
    t.links = {transparent_link("L1", "A", "B", 1, 80.0, gamma)};
    t.grid = onet::test::single_channel_grid();
    return t;
}

}  // namespace

TEST(KShortestPaths, Triangle) {
    const auto t = triangle();
    const auto ps = k_shortest_paths(t, "A", "C", 2);
    ASSERT_EQ(ps.size(), 2u);
    EXPECT_EQ(ps[0].nodes, (std::vector<std::string>{"A", "B", "C"}));
    EXPECT_DOUBLE_EQ(ps[0].length_km, 160.0);
    EXPECT_EQ(ps[1].nodes, (std::vector<std::string>{"A", "C"}));
    EXPECT_DOUBLE_EQ(ps[1].length_km, 200.0);
    EXPECT_EQ(k_shortest_paths(t, "A", "C", 5).size(), 2u);
}

TEST(KShortestPaths, Errors) {
    auto t = triangle();
    t.nodes.push_back({"D", ""});
    EXPECT_THROW(k_shortest_paths(t, "A", "D", 1), NoPathError);
    EXPECT_THROW(k_shortest_paths(t, "A", "A", 1), DomainError);
    EXPECT_THROW(k_shortest_paths(t, "A", "C", 0), DomainError);
}

TEST(KShortestPaths, TiesBrokenLexicographically) {
    NetworkTopology t;
    t.nodes = {{"A", ""}, {"B", ""}, {"C", ""}, {"D", ""}};
    t.links = {transparent_link("AC", "A", "C"), transparent_link("CD", "C", "D"), transparent_link("AB", "A", "B"),
               transparent_link("BD", "B", "D")};
    const auto ps = k_shortest_paths(t, "A", "D", 2);
    ASSERT_EQ(ps.size(), 2u);
    EXPECT_EQ(ps[0].nodes, (std::vector<std::string>{"A", "B", "D"}));
    EXPECT_EQ(ps[1].nodes, (std::vector<std::string>{"A", "C", "D"}));
}

TEST(KShortestPaths, MatchesExhaustiveEnumeration) {
    Rng rng(77);
    for (int inst = 0; inst < 60; ++inst) {
        const auto n = 3 + rng.below(5);
        const auto m = (n - 1) + rng.below(n * (n - 1) / 2 - (n - 1) + 1);
        const auto t = generate_synthetic_topology(n, m, rng.next());
        const auto& s = t.nodes[0].id;
        const auto& d = t.nodes[n - 1].id;
        const auto k = 1 + rng.below(8);
        auto expect = all_simple_paths(t, s, d);
        if (expect.size() > k) expect.resize(k);
        const auto got = k_shortest_paths(t, s, d, k);
        ASSERT_EQ(got.size(), expect.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            EXPECT_EQ(got[i].nodes, expect[i].nodes);
            EXPECT_EQ(got[i].length_km, expect[i].length);
        }
    }
}

TEST(Provision, EmptyNetworkFirstFit) {
    const auto t = triangle();
    const auto r = provision({{"D1", "A", "C", 0.0, Modulation::QPSK}}, t, 2);
    ASSERT_EQ(r.assignments.size(), 1u);
    EXPECT_FALSE(r.assignments[0].blocked);
    EXPECT_EQ(r.assignments[0].route, (std::vector<std::string>{"A", "B", "C"}));
    EXPECT_EQ(r.assignments[0].channel, 0u);
    EXPECT_EQ(r.blocking_probability, 0.0);
}

TEST(Provision, LowestFreeChannel) {
    const auto t = triangle();
    SpectrumState s;
    s.occupied["AB"] = {0, 1, 3};
    const auto r = provision({{"D1", "A", "B", 0.0, Modulation::QPSK}}, t, 1, s);
    EXPECT_EQ(r.assignments[0].channel, 2u);
    EXPECT_TRUE(s.occupied["AB"].count(2));
}

TEST(Provision, FifteenDemandsTwoChannels) {
    auto t = single_link_topology();
    t.grid.bands = {{"C", 193.0, 193.064}};  // 2 channels at 32 GHz
    std::vector<ServiceDemand> ds;
    for (int i = 0; i < 15; ++i) ds.push_back({"D" + std::to_string(i), "A", "B", 0.0, Modulation::QPSK});
    const auto r = provision(ds, t, 3);
    const auto oracle = brute_first_fit(t, ds, 3, 2);
    std::size_t carried = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        EXPECT_EQ(r.assignments[i].blocked, oracle[i].blocked);
        carried += r.assignments[i].blocked ? 0 : 1;
    }
    EXPECT_EQ(carried, 2u);
    EXPECT_DOUBLE_EQ(r.blocking_probability, 13.0 / 15.0);
    EXPECT_DOUBLE_EQ(r.utilization, 1.0);
}

TEST(Provision, MatchesBruteForceFirstFit) {
    Rng rng(99);
    for (int inst = 0; inst < 100; ++inst) {
        const auto n = 2 + rng.below(5);
        const auto m = (n - 1) + rng.below(n * (n - 1) / 2 - (n - 1) + 1);
        auto t = generate_synthetic_topology(n, m, rng.next());
        const auto n_ch = 1 + rng.below(8);
        t.grid.bands = {{"C", 193.0, 193.0 + 0.1 * static_cast<double>(n_ch)}};
        std::vector<ServiceDemand> ds;
        const auto nd = 1 + rng.below(10);
        for (std::size_t i = 0; i < nd; ++i) {
            const auto a = rng.below(n);
            auto b = rng.below(n - 1);
            if (b >= a) ++b;
            ds.push_back({"D" + std::to_string(i), t.nodes[a].id, t.nodes[b].id, 0.0, Modulation::QPSK});
        }
        const auto k = 1 + rng.below(3);
        const auto r = provision(ds, t, k);
        const auto o = brute_first_fit(t, ds, k, n_ch);
        for (std::size_t i = 0; i < nd; ++i) {
            ASSERT_EQ(r.assignments[i].blocked, o[i].blocked) << "instance " << inst;
            if (!o[i].blocked) {
                ASSERT_EQ(r.assignments[i].route, o[i].route);
                ASSERT_EQ(r.assignments[i].channel, o[i].channel);
            }
        }
        EXPECT_GE(r.blocking_probability, 0.0);
        EXPECT_LE(r.blocking_probability, 1.0);
        EXPECT_GE(r.utilization, 0.0);
        EXPECT_LE(r.utilization, 1.0);
        const bool any_carried = std::any_of(r.assignments.begin(), r.assignments.end(),
                                             [](const Assignment& a) { return !a.blocked; });
        EXPECT_EQ(r.utilization == 0.0, !any_carried);
    }
}

TEST(Provision, UnreachableDemandIsBlocked) {
    auto t = triangle();
    t.nodes.push_back({"D", ""});
    const auto r = provision({{"D1", "A", "D", 0.0, Modulation::QPSK}}, t, 2);
    EXPECT_TRUE(r.assignments[0].blocked);
    EXPECT_EQ(r.blocking_probability, 1.0);
    EXPECT_THROW(provision({}, t, 2), DomainError);
}

TEST(AnalyzeNetwork, Findings) {
    const auto t = single_link_topology();
    const std::vector<ServiceDemand> ds{{"D1", "A", "B", 0.0, Modulation::QPSK}};
    auto r = provision(ds, t, 1);
    auto g = carried_gsnr(t, ds, r);
    // margin ~24.6 dB, utilization 1.0 on the single-channel grid
    auto f = analyze_network(r, g, {2.0, 1.0});
    EXPECT_TRUE(f.empty());

    g["D1"].channels[0].margin_db = -1.0;
    f = analyze_network(r, g, {2.0, 1.0});
    ASSERT_EQ(f.size(), 1u);
    EXPECT_EQ(f[0].kind, FindingKind::NEGATIVE_MARGIN);
    EXPECT_EQ(f[0].metric, -1.0);

    g["D1"].channels[0].margin_db = 1.5;
    f = analyze_network(r, g, {2.0, 0.8});
    ASSERT_EQ(f.size(), 2u);
    EXPECT_EQ(f[0].kind, FindingKind::LOW_MARGIN);
    EXPECT_EQ(f[1].kind, FindingKind::CONGESTED_LINK);

    g.clear();
    EXPECT_THROW(analyze_network(r, g), ConsistencyError);
}

TEST(AnalyzeNetwork, OneFindingPerBlock) {
    auto t = single_link_topology();
    t.grid.bands = {{"C", 193.0, 193.064}};
    std::vector<ServiceDemand> ds;
    for (int i = 0; i < 15; ++i) ds.push_back({"D" + std::to_string(100 + i), "A", "B", 0.0, Modulation::QPSK});
    const auto r = provision(ds, t, 1);
    const auto f = analyze_network(r, carried_gsnr(t, ds, r));
    const auto blocks = std::count_if(f.begin(), f.end(),
                                      [](const NetworkFinding& x) { return x.kind == FindingKind::BLOCKED_DEMAND; });
    EXPECT_EQ(blocks, 13);
    for (std::size_t i = 1; i < f.size(); ++i) {
        EXPECT_TRUE(f[i - 1].kind < f[i].kind || (f[i - 1].kind == f[i].kind && f[i - 1].subject <= f[i].subject));
    }
}

namespace {

// Analytic launch optimum of P / (A + eta P^3) on the single span: P^3 = A / (2 eta).
double analytic_popt_dbm(const NetworkTopology& t) {
    const auto& span = std::get<FiberSpan>(t.links[0].elements[0]);
    const auto& amp = std::get<Amplifier>(t.links[0].elements[1]);
    const double ase = qot::ase_power(amp, 193.4e12, 12.5e9);
    const double eta = qot::nli_power_span(span, {0, 1.0}, 32e9, 32e9);
    return units::w_to_dbm(std::cbrt(ase / (2 * eta)));
}

}  // namespace

TEST(Optimize, ConvergesToAnalyticOptimum) {
    const auto t = single_link_topology();
    const std::vector<ServiceDemand> ds{{"D1", "A", "B", 0.0, Modulation::QPSK}};
    const auto r = provision(ds, t, 1);
    const auto tr = optimize_launch_power(ds, t, r);
    const double popt = analytic_popt_dbm(t);
    EXPECT_NEAR(popt, -1.287302389, 1e-6);  // mpmath oracle
    EXPECT_LE(std::abs(tr.final_launch_dbm.at("D1") - popt), 0.5);
    ASSERT_FALSE(tr.iterations.empty());
    double prev = tr.initial_objective_db;
    for (const auto& it : tr.iterations) {
        EXPECT_GT(it.objective_db, prev);
        prev = it.objective_db;
    }

    // Brute-force sweep of the 0.5 dB grid agrees on the best grid point.
    double best_p = 0, best_m = -1e9;
    for (double p = -4.0; p <= 4.0 + 1e-12; p += 0.5) {
        const double m = demand_gsnr(t, r.assignments[0], Modulation::QPSK, p, {}).channels[0].margin_db;
        if (m > best_m) {
            best_m = m;
            best_p = p;
        }
    }
    EXPECT_DOUBLE_EQ(tr.final_launch_dbm.at("D1"), best_p);
    EXPECT_DOUBLE_EQ(tr.final_objective_db, best_m);
}

TEST(Optimize, GridLimitedStationarity) {
    const auto t = single_link_topology();
    const std::vector<ServiceDemand> ds{{"D1", "A", "B", 2.5, Modulation::QPSK}};
    const auto r = provision(ds, t, 1);
    const auto tr = optimize_launch_power(ds, t, r);
    const double p = tr.final_launch_dbm.at("D1");
    auto report = [&](double dbm) { return demand_gsnr(t, r.assignments[0], Modulation::QPSK, dbm, {}).channels[0]; };
    const auto at = report(p);
    const double step_change =
        std::max(std::abs(report(p + 0.5).nli_w - at.nli_w), std::abs(report(p - 0.5).nli_w - at.nli_w));
    EXPECT_LE(std::abs(at.nli_w - at.ase_w / 2), step_change);
}

TEST(Optimize, FixedPointHasNoMoves) {
    const auto t = single_link_topology();
    std::vector<ServiceDemand> ds{{"D1", "A", "B", 0.0, Modulation::QPSK}};
    const auto r = provision(ds, t, 1);
    const auto first = optimize_launch_power(ds, t, r);
    ds[0].launch_power_dbm = first.final_launch_dbm.at("D1");
    const auto again = optimize_launch_power(ds, t, r);
    EXPECT_TRUE(again.iterations.empty());
    EXPECT_EQ(again.final_objective_db, first.final_objective_db);
}

TEST(Optimize, LinearFiberPushesToUpperBound) {
    const auto t = single_link_topology(0.0);
    const std::vector<ServiceDemand> ds{{"D1", "A", "B", 0.0, Modulation::QPSK}};
    const auto r = provision(ds, t, 1);
    const auto tr = optimize_launch_power(ds, t, r);
    EXPECT_EQ(tr.final_launch_dbm.at("D1"), 4.0);
    EXPECT_EQ(tr.iterations.size(), 8u);
}

TEST(Optimize, MaxMinMovesOnlyTheBottleneck) {
    // Without NLI every channel gains from more power, but under the max-min
    // objective only the channel holding the minimum margin can raise it.
    NetworkTopology t;
    t.nodes = {{"A", ""}, {"B", ""}, {"C", ""}};
    t.links = {transparent_link("AB", "A", "B", 1, 80.0, 0.0), transparent_link("BC", "B", "C", 2, 80.0, 0.0)};
    const std::vector<ServiceDemand> ds{{"D1", "A", "B", 0.0, Modulation::QPSK},
                                        {"D2", "A", "C", 0.0, Modulation::QPSK}};
    const auto r = provision(ds, t, 1);
    const auto tr = optimize_launch_power(ds, t, r);
    EXPECT_EQ(tr.final_launch_dbm.at("D2"), 4.0);
    EXPECT_EQ(tr.final_launch_dbm.at("D1"), 0.0);
}

TEST(Optimize, ErrorsAndDeterminism) {
    const auto t = single_link_topology();
    std::vector<ServiceDemand> ds{{"D1", "A", "B", 0.0, Modulation::QPSK}};
    AllocationReport none;
    none.assignments.push_back({"D1", true, {}, 0});
    EXPECT_THROW(optimize_launch_power(ds, t, none), NoCarriedDemandError);
    const auto r = provision(ds, t, 1);
    OptimizerConfig bad;
    bad.step_db = 0.0;
    EXPECT_THROW(optimize_launch_power(ds, t, r, bad), DomainError);
    EXPECT_EQ(to_json(optimize_launch_power(ds, t, r)).dump(), to_json(optimize_launch_power(ds, t, r)).dump());
}

TEST(Optimize, MonotoneOnRandomInstances) {
    Rng rng(5);
    for (int inst = 0; inst < 20; ++inst) {
        const auto t = generate_synthetic_topology(8, 12, rng.next());
        std::vector<ServiceDemand> ds;
        for (int i = 0; i < 6; ++i) {
            const auto a = rng.below(8);
            auto b = rng.below(7);
            if (b >= a) ++b;
            ds.push_back({"D" + std::to_string(i), t.nodes[a].id, t.nodes[b].id, rng.uniform(-4, 4),
                          static_cast<Modulation>(rng.below(4))});
        }
        const auto r = provision(ds, t, 2);
        const auto tr = optimize_launch_power(ds, t, r);
        double prev = tr.initial_objective_db;
        for (const auto& it : tr.iterations) {
            ASSERT_GT(it.objective_db, prev);
            prev = it.objective_db;
        }
        EXPECT_GE(tr.final_objective_db, tr.initial_objective_db);
        for (const auto& [id, p] : tr.final_launch_dbm) {
            EXPECT_GE(p, -4.0);
            EXPECT_LE(p, 4.0);
        }
    }
}
