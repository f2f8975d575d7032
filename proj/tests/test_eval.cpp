#include <gtest/gtest.h>

#include <onet/evalharness.hpp>

#include "test_util.hpp"

using namespace onet;
using namespace onet::eval;

namespace {

const agent::Workbench& bench() {
    static const auto wb = agent::Workbench::load(test::data_path(""));
    return *wb;
}

const NetworkTopology& conus() {
    static const auto t = load_topology(test::data_path("topologies/conus_synthetic.topo"));
    return t;
}

BackendFactory fixture_factory() {
    return [](Condition) -> std::unique_ptr<agent::LlmBackend> {
        return agent::load_scripted_backend(test::data_path("agent/scripted_backend.json"));
    };
}

agent::FinalAnswer answer_with(std::string text, json payload_view) {
    agent::FinalAnswer a;
    a.text = std::move(text);
    for (const auto& [kind, p] : payload_view.items()) a.sections.push_back({"S", kind, "", p});
    return a;
}

}  // namespace

// --- scenarios -------------------------------------------------------------

TEST(AlarmScenarios, PlantRecoverableFromPipeline) {
    const auto cs = generate_alarm_scenarios(1, 7, bench());
    ASSERT_EQ(cs.size(), 1u);
    const auto stream = alarms::parse_alarms_jsonl(jsonl_of(cs[0].scenario.at("alarms")), "case");
    ASSERT_EQ(stream.size(), 25u);
    const auto batches = alarms::window_batches(stream);
    ASSERT_EQ(batches.size(), 1u);
    const auto events = alarms::compress(batches[0]);
    const auto ranking = alarms::priority_scores(events, alarms::correlate(events, rag::embed, bench().rulebase));
    const auto& top = ranking.front().event;
    EXPECT_EQ(top.max_severity, alarms::Severity::CRITICAL);
    for (const auto& e : events)
        if (!(e.key == top.key)) EXPECT_LT(e.count, top.count);
    // key elements name exactly this event
    const auto& keys = cs[0].key_elements;
    EXPECT_EQ(keys[0].spec, top.key.alarm_type + " at " + top.key.source_ne);
    EXPECT_EQ(keys[3].expected, static_cast<double>(top.count));
}

TEST(AlarmScenarios, DeterministicAndScaled) {
    const auto a = generate_alarm_scenarios(5, 21, bench(), TaskType::PRIORITY_ANALYSIS);
    const auto b = generate_alarm_scenarios(5, 21, bench(), TaskType::PRIORITY_ANALYSIS);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(to_json(a[i]).dump(), to_json(b[i]).dump());
    EXPECT_NE(to_json(generate_alarm_scenarios(1, 22, bench())[0]).dump(),
              to_json(generate_alarm_scenarios(1, 21, bench())[0]).dump());
    EXPECT_EQ(generate_alarm_scenarios(400, 3, bench()).size(), 400u);
    EXPECT_THROW(generate_alarm_scenarios(0, 3, bench()), ConfigError);
    EXPECT_THROW(generate_alarm_scenarios(1, 3, bench(), TaskType::QOT_ESTIMATION), ConfigError);
}

TEST(AlarmScenarios, SameScenarioAcrossAlarmTasks) {
    const auto a = generate_alarm_scenarios(3, 9, bench(), TaskType::ALARM_COMPRESSION);
    const auto b = generate_alarm_scenarios(3, 9, bench(), TaskType::SOLVING_SUGGESTION);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a[i].scenario, b[i].scenario);
}

TEST(OptimScenarios, ReferenceEqualsDirectInvocation) {
    const auto cs = generate_optim_scenarios(3, 7, conus(), TaskType::QOT_ESTIMATION);
    for (const auto& c : cs) {
        const auto demands = demands_from_json(c.scenario.at("demands"));
        ASSERT_EQ(demands.size(), 15u);
        for (const auto& d : demands) {
            EXPECT_TRUE(PowerBounds{}.contains(d.launch_power_dbm));
            EXPECT_NE(d.src, d.dst);
        }
        const auto alloc = netops::provision(demands, conus(), 3);
        const auto g = netops::carried_gsnr(conus(), demands, alloc);
        json view = {{"qot_estimate",
                      {{"netops.provision", netops::to_json(alloc)}, {"qot.estimate_gsnr", agent::tools::gsnr_map_json(g)}}}};
        for (const auto& k : c.key_elements) {
            if (k.kind != ElementKind::NUMERIC) continue;
            EXPECT_EQ(view.at(json::json_pointer(k.spec)).get<double>(), k.expected) << k.spec;
        }
    }
}

TEST(OptimScenarios, Deterministic) {
    for (auto t : {TaskType::QOT_ESTIMATION, TaskType::NETWORK_ANALYSIS, TaskType::PERFORMANCE_OPTIMIZATION}) {
        const auto a = generate_optim_scenarios(2, 5, conus(), t);
        const auto b = generate_optim_scenarios(2, 5, conus(), t);
        for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(to_json(a[i]).dump(), to_json(b[i]).dump());
        EXPECT_FALSE(a[0].key_elements.empty());
    }
    EXPECT_THROW(generate_optim_scenarios(1, 5, conus(), TaskType::ALARM_COMPRESSION), ConfigError);
}

// --- scoring ---------------------------------------------------------------

TEST(Score, Ratio) {
    const std::vector<KeyElement> keys = {{ElementKind::SUBSTRING, "los at ne-3"},
                                          {ElementKind::PATTERN, "count \\d+"},
                                          {ElementKind::SUBSTRING, "fiber cut"},
                                          {ElementKind::NUMERIC, "/compress/x", 4.0, 0.0}};
    auto a = answer_with("Dominant event: LOS at NE-3, count 9.", {{"compress", {{"x", 4}}}});
    EXPECT_DOUBLE_EQ(score_accuracy(a, keys).accuracy, 0.75);
    a.text += " Cause: fiber cut.";
    const auto s = score_accuracy(a, keys);
    EXPECT_DOUBLE_EQ(s.accuracy, 1.0);
    EXPECT_EQ(s.matched, 4u);
    EXPECT_THROW(score_accuracy(a, {}), ConfigError);
}

TEST(Score, NumericTolerance) {
    const auto a = answer_with("", {{"qot_estimate", {{"g", 31.305}}}});
    EXPECT_DOUBLE_EQ(score_accuracy(a, {{ElementKind::NUMERIC, "/qot_estimate/g", 31.30, 0.01}}).accuracy, 1.0);
    EXPECT_DOUBLE_EQ(score_accuracy(a, {{ElementKind::NUMERIC, "/qot_estimate/g", 31.28, 0.01}}).accuracy, 0.0);
}

TEST(Score, MissingPayloadIsUnmatchedAndFlagged) {
    const auto a = answer_with("text", {{"compress", json::object()}});
    const auto s = score_accuracy(a, {{ElementKind::SUBSTRING, "text"}, {ElementKind::NUMERIC, "/compress/none", 1, 0}});
    EXPECT_DOUBLE_EQ(s.accuracy, 0.5);
    ASSERT_EQ(s.missing.size(), 1u);
    EXPECT_EQ(s.missing[0], "/compress/none");
    EXPECT_THROW(element_matches({ElementKind::NUMERIC, "/compress/none", 1, 0}, "", payload_view(a)),
                 MissingPayloadError);
}

TEST(Score, ScoredTextIsTaskSectionPlusFinal) {
    agent::FinalAnswer a;
    a.text = "final";
    a.sections = {{"S1", "compress", "alpha", json::object()}, {"S2", "prioritize", "beta", json::object()}};
    EXPECT_EQ(scored_text(a, TaskType::ALARM_COMPRESSION), "alpha\nfinal");
    EXPECT_EQ(scored_text(a, TaskType::PRIORITY_ANALYSIS), "beta\nfinal");
}

TEST(Similarity, Examples) {
    EXPECT_NEAR(semantic_similarity("LOS at NE-3", "LOS at NE-3"), 1.0, 1e-12);
    // independent embedder oracle: 0 exactly for this disjoint pair
    const double d = semantic_similarity("Dominant event: LOS at NE-5, count 11.",
                                         "Launch power optimization raised the worst margin.");
    EXPECT_LT(std::abs(d), 0.15);
    EXPECT_NEAR(d, 0.0, 1e-15);
    EXPECT_NEAR(semantic_similarity("Dominant event: LOS at NE-5, count 11.",
                                    "Dominant event: LOS at NE-5, count 11. 15 events after compression."),
                0.8164965809277263, 1e-15);
    EXPECT_EQ(semantic_similarity("", "reference"), 0.0);
}

// --- matrix ----------------------------------------------------------------

TEST(Matrix, ShapeRangesAndOrder) {
    MatrixSpec spec;
    spec.n_per_cell = 2;
    spec.seed = 11;
    const auto rep = run_matrix(spec, bench(), conus(), fixture_factory());
    EXPECT_EQ(rep.rows.size(), 60u);
    EXPECT_EQ(rep.cells.size(), 30u);
    for (const auto& c : rep.cells) {
        EXPECT_EQ(c.n, 2u);
        EXPECT_GE(c.mean_accuracy, 0.0);
        EXPECT_LE(c.mean_accuracy, 1.0);
        EXPECT_GE(c.mean_similarity, -1.0);
        EXPECT_LE(c.mean_similarity, 1.0);
    }
    for (const auto& r : rep.rows) {
        EXPECT_EQ(r.status, "COMPLETED") << r.error;
        EXPECT_TRUE(r.missing.empty());
    }
    EXPECT_EQ(rep.seed, 11u);
    EXPECT_EQ(rep.backend_id, "scripted:fixture-v1");
}

TEST(Matrix, NumericElementsAlwaysMatchUnderEveryCondition) {
    // payload passthrough: numbers never depend on prompt or retrieval
    MatrixSpec spec;
    spec.n_per_cell = 3;
    spec.seed = 4;
    const auto rep = run_matrix(spec, bench(), conus(), fixture_factory());
    std::map<std::pair<TaskType, std::string>, std::size_t> numeric;
    for (auto t : spec.tasks) {
        const auto cs = is_alarm_task(t) ? generate_alarm_scenarios(3, 4, bench(), t)
                                         : generate_optim_scenarios(3, 4, conus(), t);
        for (const auto& c : cs)
            numeric[{t, c.id}] = static_cast<std::size_t>(std::count_if(
                c.key_elements.begin(), c.key_elements.end(), [](const auto& k) { return k.kind == ElementKind::NUMERIC; }));
    }
    for (const auto& r : rep.rows) EXPECT_GE(r.matched, numeric.at({r.task, r.case_id})) << to_string(r.task);
}

TEST(Matrix, FixtureOrdersConditions) {
    MatrixSpec spec;
    spec.n_per_cell = 4;
    const auto rep = run_matrix(spec, bench(), conus(), fixture_factory());
    std::map<std::pair<TaskType, Condition>, double> acc;
    for (const auto& c : rep.cells) acc[{c.task, c.condition}] = c.mean_accuracy;
    for (auto t : all_tasks()) {
        const double best = acc[{t, Condition::ADVANCED_PLUS_RAG}];
        const double raw = acc[{t, Condition::RAW}];
        EXPECT_GE(best, raw) << to_string(t);
        EXPECT_DOUBLE_EQ(best, 1.0) << to_string(t);
    }
}

TEST(Matrix, ByteReproducibleAndDigestSensitivity) {
    MatrixSpec spec;
    spec.n_per_cell = 2;
    spec.tasks = {TaskType::ALARM_COMPRESSION, TaskType::PERFORMANCE_OPTIMIZATION};
    const auto a = run_matrix(spec, bench(), conus(), fixture_factory());
    const auto b = run_matrix(spec, bench(), conus(), fixture_factory());
    EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
    EXPECT_EQ(report_csv(a), report_csv(b));
    EXPECT_EQ(a.config_digest, b.config_digest);

    auto reseeded = spec;
    reseeded.seed = 12;
    const auto c = run_matrix(reseeded, bench(), conus(), fixture_factory());
    EXPECT_EQ(c.config_digest, a.config_digest);
    EXPECT_NE(report_digest(c), report_digest(a));

    auto wider = spec;
    wider.n_per_cell = 3;
    EXPECT_NE(run_matrix(wider, bench(), conus(), fixture_factory()).config_digest, a.config_digest);
    EXPECT_NE(config_digest(spec, bench(), "scripted:other", conus()), a.config_digest);
}

TEST(Matrix, FailuresScoreZeroWithoutAborting) {
    MatrixSpec spec;
    spec.n_per_cell = 2;
    spec.tasks = {TaskType::ALARM_COMPRESSION};
    spec.conditions = {Condition::RAW, Condition::ADVANCED_PROMPT};
    const auto rep = run_matrix(spec, bench(), conus(), [](Condition c) -> std::unique_ptr<agent::LlmBackend> {
        if (c == Condition::RAW) return std::make_unique<agent::ScriptedBackend>("mute", std::vector<agent::ScriptedBackend::Rule>{}, std::nullopt);
        return agent::load_scripted_backend(test::data_path("agent/scripted_backend.json"));
    });
    ASSERT_EQ(rep.rows.size(), 4u);
    for (const auto& r : rep.rows) {
        if (r.condition == Condition::RAW) {
            EXPECT_EQ(r.status, "FAILED");
            EXPECT_EQ(r.accuracy, 0.0);
            EXPECT_FALSE(r.error.empty());
        } else {
            EXPECT_EQ(r.status, "COMPLETED");
        }
    }
}

TEST(Matrix, ReportFiles) {
    MatrixSpec spec;
    spec.n_per_cell = 1;
    const auto rep = run_matrix(spec, bench(), conus(), fixture_factory());
    test::TempDir dir;
    write_report(rep, dir.file("out"));
    const auto csv = read_file(dir.file("out/report.csv"));
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "task,condition,n,mean_accuracy,mean_similarity");
    EXPECT_EQ(split(trim(csv), '\n').size(), 31u);
    const auto j = json::parse(read_file(dir.file("out/report.json")));
    EXPECT_EQ(j.at("rows").size(), 30u);
    EXPECT_EQ(j.at("cells").size(), 30u);
    EXPECT_TRUE(j.at("rows")[0].at("expert_judgement").is_null());
    EXPECT_EQ(j.at("seed"), 11);
}

TEST(Matrix, Errors) {
    MatrixSpec spec;
    spec.n_per_cell = 0;
    EXPECT_THROW(run_matrix(spec, bench(), conus(), fixture_factory()), ConfigError);
    EXPECT_THROW(parse_task("nope"), ConfigError);
    EXPECT_THROW(parse_condition("nope"), ConfigError);
    EXPECT_EQ(parse_condition("RAG_ONLY"), Condition::RAG_ONLY);
    EXPECT_EQ(all_conditions().size(), 5u);
    EXPECT_EQ(all_tasks().size(), 6u);
}
