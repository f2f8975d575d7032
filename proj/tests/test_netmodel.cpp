#include <gtest/gtest.h>

#include <onet/netmodel.hpp>

#include "test_util.hpp"

using namespace onet;
using onet::test::data_path;

TEST(LoadTopology, SmallestValidInstance) {
    const auto t = load_topology(data_path("topologies/two_node.topo"));
    EXPECT_EQ(t.nodes.size(), 2u);
    ASSERT_EQ(t.links.size(), 1u);
    EXPECT_EQ(t.links[0].span_count(), 1u);
    EXPECT_DOUBLE_EQ(t.links[0].length_km(), 80.0);
}

TEST(LoadTopology, UnknownNodeNamedInError) {
    auto j = json::parse(read_file(data_path("topologies/two_node.topo")));
    j["links"][0]["endpoints"][1] = "Z";
    try {
        parse_topology(j.dump());
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("Z"), std::string::npos);
    }
}

TEST(LoadTopology, ValidationListsAllViolations) {
    auto j = json::parse(read_file(data_path("topologies/two_node.topo")));
    j["links"][0]["endpoints"][1] = "Z";
    j["links"][0]["elements"][0]["length_km"] = -1.0;
    try {
        parse_topology(j.dump());
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_GE(e.violations().size(), 2u);
    }
}

TEST(LoadTopology, MalformedJsonReportsLine) {
    try {
        parse_topology("{\n  \"nodes\": [\n  oops\n]}", "bad.topo");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("bad.topo:3:"), std::string::npos) << e.what();
    }
}

TEST(LoadTopology, UnknownKeysRejected) {
    auto j = json::parse(read_file(data_path("topologies/two_node.topo")));
    j["extra"] = 1;
    EXPECT_THROW(parse_topology(j.dump()), ParseError);
    j.erase("extra");
    j["links"][0]["elements"][1]["colour"] = "red";
    try {
        parse_topology(j.dump());
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("links[0].elements[1]"), std::string::npos) << e.what();
    }
}

TEST(LoadTopology, TransparencyEnforcedUnlessDisabled) {
    auto j = json::parse(read_file(data_path("topologies/two_node.topo")));
    j["links"][0]["elements"][1]["gain_db"] = 20.0;
    EXPECT_THROW(parse_topology(j.dump()), ValidationError);
    ValidationOptions opt;
    opt.transparent = false;
    EXPECT_NO_THROW(parse_topology(j.dump(), "<m>", opt));
}

TEST(LoadTopology, AlternationAndNoiseFloor) {
    auto j = json::parse(read_file(data_path("topologies/two_node.topo")));
    auto amp = j["links"][0]["elements"][1];
    j["links"][0]["elements"][1]["nf_db"] = 2.0;
    EXPECT_THROW(parse_topology(j.dump()), ValidationError);
    j["links"][0]["elements"] = json::array({amp, amp});
    EXPECT_THROW(parse_topology(j.dump()), ValidationError);
}

TEST(LoadTopology, ConusFixtureCounts) {
    const auto t = load_topology(data_path("topologies/conus_synthetic.topo"));
    EXPECT_EQ(t.nodes.size(), 77u);
    EXPECT_EQ(t.links.size(), 99u);
}

TEST(Synthetic, SmallConnected) {
    const auto t = generate_synthetic_topology(3, 2, 1);
    EXPECT_EQ(t.nodes.size(), 3u);
    EXPECT_EQ(t.links.size(), 2u);
    EXPECT_TRUE(is_connected(t));
    EXPECT_NO_THROW(validate(t));
}

TEST(Synthetic, ConusCounts) {
    const auto t = generate_synthetic_topology(77, 99, 42);
    EXPECT_EQ(t.nodes.size(), 77u);
    EXPECT_EQ(t.links.size(), 99u);
    EXPECT_TRUE(is_connected(t));
}

TEST(Synthetic, Infeasible) {
    EXPECT_THROW(generate_synthetic_topology(5, 3, 9), InfeasibleError);
    EXPECT_THROW(generate_synthetic_topology(4, 7, 9), InfeasibleError);
    EXPECT_NO_THROW(generate_synthetic_topology(4, 6, 9));
}

TEST(Synthetic, SpansWithinProfile) {
    const SpanProfile p;
    const auto t = generate_synthetic_topology(20, 30, 5, p);
    for (const auto& l : t.links)
        for (const auto& e : l.elements)
            if (const auto* s = std::get_if<FiberSpan>(&e)) {
                EXPECT_GE(s->length_km, p.length_min_km);
                EXPECT_LE(s->length_km, p.length_max_km);
                EXPECT_GE(s->atten_db_per_km, p.atten_min_db_per_km);
                EXPECT_LE(s->atten_db_per_km, p.atten_max_db_per_km);
            }
}

// Property: generation is pure, output always validates, and save/load is
// structurally lossless.
TEST(Synthetic, RoundTripAndDeterminismProperty) {
    onet::test::TempDir dir;
    Rng rng(2024);
    for (int i = 0; i < 100; ++i) {
        const auto n = 2 + rng.below(15);
        const auto max_links = n * (n - 1) / 2;
        const auto m = (n - 1) + rng.below(max_links - (n - 1) + 1);
        const auto seed = rng.next();
        const auto a = generate_synthetic_topology(n, m, seed);
        const auto b = generate_synthetic_topology(n, m, seed);
        ASSERT_EQ(dump_topology(a), dump_topology(b));
        ASSERT_TRUE(check_topology(a).empty());
        const auto path = dir.file("t" + std::to_string(i) + ".topo");
        save_topology(a, path);
        ASSERT_EQ(load_topology(path), a);
    }
}

TEST(Grid, HandEnumeration) {
    SpectrumGrid g;
    g.bands = {{"C", 191.6, 191.9}};
    const auto ch = grid_channels(g);
    ASSERT_EQ(ch.size(), 3u);
    EXPECT_NEAR(ch[0].center_thz, 191.65, 1e-9);
    EXPECT_NEAR(ch[1].center_thz, 191.75, 1e-9);
    EXPECT_NEAR(ch[2].center_thz, 191.85, 1e-9);
    EXPECT_DOUBLE_EQ(total_wdm_bandwidth(g), 3.0e11);
}

TEST(Grid, DefaultCPlusL) {
    const auto g = SpectrumGrid::c_plus_l();
    const auto ch = grid_channels(g);
    EXPECT_EQ(ch.size(), 90u);
    EXPECT_EQ(ch.front().band, "L");
    EXPECT_EQ(ch.back().band, "C");
    EXPECT_DOUBLE_EQ(total_wdm_bandwidth(g), 9.0e12);
    for (std::size_t i = 0; i < ch.size(); ++i) {
        EXPECT_EQ(ch[i].index, i);
        if (i) EXPECT_GT(ch[i].center_thz, ch[i - 1].center_thz);
    }
}

TEST(Grid, EmptyAndSingle) {
    SpectrumGrid g;
    EXPECT_TRUE(grid_channels(g).empty());
    EXPECT_EQ(total_wdm_bandwidth(g), 0.0);
    const auto one = onet::test::single_channel_grid();
    ASSERT_EQ(grid_channels(one).size(), 1u);
    EXPECT_NEAR(grid_channels(one)[0].center_thz, 193.4, 1e-9);
    EXPECT_DOUBLE_EQ(total_wdm_bandwidth(one), 3.2e10);
}

TEST(Grid, InvalidGridRejected) {
    SpectrumGrid g = SpectrumGrid::c_plus_l();
    g.bands.push_back({"X", 195.0, 197.0});
    g.symbol_rate_gbd = 150.0;
    EXPECT_EQ(check_grid(g).size(), 2u);
}

TEST(Links, OrientedMirrorsPairs) {
    auto l = onet::test::transparent_link("L", "A", "B", 2);
    std::get<FiberSpan>(l.elements[0]).length_km = 50.0;
    std::get<Amplifier>(l.elements[1]).gain_db = 10.0;
    const auto r = oriented(l, "B");
    EXPECT_EQ(r.from, "B");
    EXPECT_EQ(r.to, "A");
    ASSERT_EQ(r.elements.size(), 4u);
    EXPECT_EQ(std::get<FiberSpan>(r.elements[2]).length_km, 50.0);
    EXPECT_EQ(std::get<Amplifier>(r.elements[3]).gain_db, 10.0);
    EXPECT_EQ(oriented(l, "A"), l);
    EXPECT_THROW(oriented(l, "C"), DomainError);
}

TEST(Demands, ParseAndValidate) {
    const auto ok = json::parse(R"([{"id":"D1","src":"A","dst":"B","launch_power_dbm":0,"modulation":"16QAM"}])");
    const auto ds = demands_from_json(ok);
    ASSERT_EQ(ds.size(), 1u);
    EXPECT_EQ(ds[0].modulation, Modulation::QAM16);
    auto bad = ok;
    bad[0]["dst"] = "A";
    bad[0]["launch_power_dbm"] = 9.0;
    try {
        demands_from_json(bad);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.violations().size(), 2u);
    }
    bad = ok;
    bad[0]["modulation"] = "BPSK";
    EXPECT_THROW(demands_from_json(bad), ParseError);
}
