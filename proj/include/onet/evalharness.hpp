#ifndef ONET_EVALHARNESS_HPP
#define ONET_EVALHARNESS_HPP

#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "agent.hpp"

namespace onet::eval {

class MissingPayloadError : public Error {
  public:
    using Error::Error;
};

// --- tasks and conditions --------------------------------------------------

enum class TaskType {
    ALARM_COMPRESSION,
    PRIORITY_ANALYSIS,
    SOLVING_SUGGESTION,
    QOT_ESTIMATION,
    NETWORK_ANALYSIS,
    PERFORMANCE_OPTIMIZATION
};

inline const std::vector<TaskType>& all_tasks() {
    static const std::vector<TaskType> v = {TaskType::ALARM_COMPRESSION, TaskType::PRIORITY_ANALYSIS,
                                            TaskType::SOLVING_SUGGESTION, TaskType::QOT_ESTIMATION,
                                            TaskType::NETWORK_ANALYSIS,   TaskType::PERFORMANCE_OPTIMIZATION};
    return v;
}

inline std::string to_string(TaskType t) {
    switch (t) {
        case TaskType::ALARM_COMPRESSION: return "alarm_compression";
        case TaskType::PRIORITY_ANALYSIS: return "priority_analysis";
        case TaskType::SOLVING_SUGGESTION: return "solving_suggestion";
        case TaskType::QOT_ESTIMATION: return "qot_estimation";
        case TaskType::NETWORK_ANALYSIS: return "network_analysis";
        case TaskType::PERFORMANCE_OPTIMIZATION: return "performance_optimization";
    }
    return "?";
}

inline TaskType parse_task(const std::string& s) {
    for (auto t : all_tasks())
        if (to_string(t) == s) return t;
    throw ConfigError("unknown task '" + s + "'");
}

/// Subtask kind whose section answers the task.
inline std::string subtask_kind(TaskType t) {
    switch (t) {
        case TaskType::ALARM_COMPRESSION: return "compress";
        case TaskType::PRIORITY_ANALYSIS: return "prioritize";
        case TaskType::SOLVING_SUGGESTION: return "suggest";
        case TaskType::QOT_ESTIMATION: return "qot_estimate";
        case TaskType::NETWORK_ANALYSIS: return "analyze";
        case TaskType::PERFORMANCE_OPTIMIZATION: return "optimize";
    }
    return "?";
}

inline bool is_alarm_task(TaskType t) {
    return t == TaskType::ALARM_COMPRESSION || t == TaskType::PRIORITY_ANALYSIS || t == TaskType::SOLVING_SUGGESTION;
}

enum class Condition { RAW, BRIEF_PROMPT, ADVANCED_PROMPT, RAG_ONLY, ADVANCED_PLUS_RAG };

inline const std::vector<Condition>& all_conditions() {
    static const std::vector<Condition> v = {Condition::RAW, Condition::BRIEF_PROMPT, Condition::ADVANCED_PROMPT,
                                             Condition::RAG_ONLY, Condition::ADVANCED_PLUS_RAG};
    return v;
}

inline std::string to_string(Condition c) {
    switch (c) {
        case Condition::RAW: return "RAW";
        case Condition::BRIEF_PROMPT: return "BRIEF_PROMPT";
        case Condition::ADVANCED_PROMPT: return "ADVANCED_PROMPT";
        case Condition::RAG_ONLY: return "RAG_ONLY";
        case Condition::ADVANCED_PLUS_RAG: return "ADVANCED_PLUS_RAG";
    }
    return "?";
}

inline Condition parse_condition(const std::string& s) {
    for (auto c : all_conditions())
        if (to_string(c) == s) return c;
    throw ConfigError("unknown condition '" + s + "'");
}

/// Agent configuration per condition. Advanced prompts use one worked
/// example plus the CoT cue; temperature is pinned to 0.
inline agent::AgentConfig condition_config(Condition c) {
    agent::AgentConfig cfg;
    cfg.temperature = 0.0;
    cfg.technique = {agent::Technique::COT, 1, 3};
    switch (c) {
        case Condition::RAW: cfg.style = agent::PromptStyle::RAW; cfg.retrieval = false; break;
        case Condition::BRIEF_PROMPT: cfg.style = agent::PromptStyle::BRIEF; cfg.retrieval = false; break;
        case Condition::ADVANCED_PROMPT: cfg.style = agent::PromptStyle::ADVANCED; cfg.retrieval = false; break;
        case Condition::RAG_ONLY: cfg.style = agent::PromptStyle::BRIEF; cfg.retrieval = true; break;
        case Condition::ADVANCED_PLUS_RAG: cfg.style = agent::PromptStyle::ADVANCED; cfg.retrieval = true; break;
    }
    if (cfg.style != agent::PromptStyle::ADVANCED) cfg.technique = {};
    return cfg;
}

// --- test cases ------------------------------------------------------------

enum class ElementKind { SUBSTRING, PATTERN, NUMERIC };

inline std::string to_string(ElementKind k) {
    switch (k) {
        case ElementKind::SUBSTRING: return "SUBSTRING";
        case ElementKind::PATTERN: return "PATTERN";
        case ElementKind::NUMERIC: return "NUMERIC";
    }
    return "?";
}

/// SUBSTRING/PATTERN: `spec` is matched against the answer text.
/// NUMERIC: `spec` is a JSON pointer into the payload view (subtask kind ->
/// tool name -> raw tool output) and must lie within `tolerance` of `expected`.
struct KeyElement {
    ElementKind kind = ElementKind::SUBSTRING;
    std::string spec;
    double expected = 0.0;
    double tolerance = 0.0;
};

inline json to_json(const KeyElement& e) {
    json j = {{"kind", to_string(e.kind)}, {"spec", e.spec}};
    if (e.kind == ElementKind::NUMERIC) {
        j["expected"] = e.expected;
        j["tolerance"] = e.tolerance;
    }
    return j;
}

struct TestCase {
    std::string id;
    TaskType task = TaskType::ALARM_COMPRESSION;
    std::string query;
    json scenario;  // {"alarms": [...]} or {"demands": [...]}
    std::string reference_answer;
    std::vector<KeyElement> key_elements;
};

inline json to_json(const TestCase& c) {
    json keys = json::array();
    for (const auto& k : c.key_elements) keys.push_back(to_json(k));
    return {{"id", c.id},
            {"task", to_string(c.task)},
            {"query", c.query},
            {"scenario", c.scenario},
            {"reference_answer", c.reference_answer},
            {"key_elements", keys}};
}

inline constexpr const char* kAlarmQuery = "Analyze these alarms and tell me what to fix first.";
inline constexpr const char* kOptimQuery =
    "Estimate the GSNR of the 15 services, analyze the network and optimize the launch powers.";

namespace detail {

inline std::string fmt(double v, int prec = 2) { return agent::detail::fmt(v, prec); }

inline std::uint64_t case_seed(std::uint64_t seed, std::size_t index, std::uint64_t family) {
    return fnv1a64(std::to_string(seed) + ":" + std::to_string(index) + ":" + std::to_string(family));
}

}  // namespace detail

/// The planted ground truth of one alarm scenario.
struct AlarmPlant {
    std::string alarm_type;
    std::string source_ne;
    std::size_t count = 0;
};

/// 25 alarms inside one window: a CRITICAL event repeated 8-12 times on one
/// NE plus lower-severity noise. Rejection-sampled until the pipeline ranks
/// the plant first, so the plant is ground truth by construction.
inline std::pair<std::vector<alarms::Alarm>, AlarmPlant> alarm_scenario(std::uint64_t seed,
                                                                        const alarms::Rulebase& rulebase) {
    Rng rng(seed);
    std::vector<alarms::AlarmTemplate> critical, noise;
    for (const auto& t : alarms::alarm_catalog())
        (t.severity == alarms::Severity::CRITICAL ? critical : noise).push_back(t);
    for (;;) {
        const auto& plant = rng.pick(critical);
        const auto ne = "NE-" + std::to_string(1 + rng.below(8));
        const auto count = static_cast<std::size_t>(8 + rng.below(5));
        std::vector<alarms::Alarm> out;
        for (std::size_t i = 0; i < 25; ++i) {
            alarms::Alarm a;
            a.ts = static_cast<std::int64_t>(rng.below(120000));
            if (i < count) {
                a.alarm_type = plant.alarm_type;
                a.severity = plant.severity;
                a.source_ne = ne;
                a.description = plant.description + " on " + ne;
            } else {
                const auto& t = rng.pick(noise);
                a.alarm_type = t.alarm_type;
                a.severity = t.severity;
                a.source_ne = "NE-" + std::to_string(1 + rng.below(8));
                a.description = t.description + " on " + a.source_ne;
            }
            out.push_back(std::move(a));
        }
        std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.ts < b.ts; });
        for (std::size_t i = 0; i < out.size(); ++i) out[i].id = "A" + std::to_string(i + 1);
        const auto batches = alarms::window_batches(out);
        const auto events = alarms::compress(batches.front());
        const auto ranking = alarms::priority_scores(events, alarms::correlate(events, rag::embed, rulebase));
        std::size_t second = 0;
        for (const auto& e : events)
            if (e.key != alarms::EventKey{plant.alarm_type, ne}) second = std::max(second, e.count);
        if (batches.size() == 1 && second < count && ranking.front().event.key == alarms::EventKey{plant.alarm_type, ne})
            return {std::move(out), {plant.alarm_type, ne, count}};
    }
}

/// One case per scenario for `task`; the scenario of index i is the same
/// for all three alarm tasks.
inline std::vector<TestCase> generate_alarm_scenarios(std::size_t n, std::uint64_t seed, const agent::Workbench& wb,
                                                      TaskType task = TaskType::ALARM_COMPRESSION) {
    if (n == 0) throw ConfigError("generate_alarm_scenarios: n must be >= 1");
    if (!is_alarm_task(task)) throw ConfigError("generate_alarm_scenarios: not an alarm task");
    std::vector<TestCase> out;
    for (std::size_t i = 0; i < n; ++i) {
        auto [stream, plant] = alarm_scenario(detail::case_seed(seed, i, 1), wb.rulebase);
        const auto batch = alarms::window_batches(stream).front();
        const auto events = alarms::compress(batch);
        const auto ranking = alarms::priority_scores(events, alarms::correlate(events, rag::embed, wb.rulebase));
        const auto key = plant.alarm_type + " at " + plant.source_ne;

        TestCase c;
        c.id = "alarm-" + std::to_string(i + 1);
        c.task = task;
        c.query = kAlarmQuery;
        c.scenario = {{"alarms", alarms::to_json(stream)}};
        const auto n_events = std::to_string(events.size());
        switch (task) {
            case TaskType::ALARM_COMPRESSION: {
                std::size_t idx = 0;
                while (events[idx].key != alarms::EventKey{plant.alarm_type, plant.source_ne}) ++idx;
                c.reference_answer = "Dominant event: " + key + ", count " + std::to_string(plant.count) + ". " +
                                     n_events + " events after compression.";
                c.key_elements = {
                    {ElementKind::SUBSTRING, key},
                    {ElementKind::PATTERN, "count " + std::to_string(plant.count) + "\\b"},
                    {ElementKind::PATTERN, "\\b" + n_events + " events\\b"},
                    {ElementKind::NUMERIC, "/compress/alarms.compress/events/" + std::to_string(idx) + "/count",
                     static_cast<double>(plant.count), 0.0}};
                break;
            }
            case TaskType::PRIORITY_ANALYSIS: {
                const auto score = ranking.front().score;
                c.reference_answer = "Top priority: " + key + ", score " + detail::fmt(score) + ". " + n_events +
                                     " events ranked.";
                c.key_elements = {{ElementKind::SUBSTRING, key + ", score " + detail::fmt(score)},
                                  {ElementKind::PATTERN, "\\b" + n_events + " events ranked\\b"},
                                  {ElementKind::NUMERIC, "/prioritize/alarms.priority_scores/ranking/0/score", score, 1e-9}};
                break;
            }
            default: {
                const auto s = alarms::suggest(ranking.front(), wb.manual.retriever(), 3);
                c.reference_answer = "Cause: " + s.cause;
                for (std::size_t a = 0; a < std::min<std::size_t>(2, s.actions.size()); ++a)
                    c.reference_answer += (a == 0 ? " First action: " : " Then: ") + s.actions[a];
                c.key_elements = {{ElementKind::SUBSTRING, s.cause}};
                for (std::size_t a = 0; a < std::min<std::size_t>(2, s.actions.size()); ++a)
                    c.key_elements.push_back({ElementKind::SUBSTRING, s.actions[a]});
                if (!s.source_refs.empty()) {
                    c.reference_answer += " Sources: " + s.source_refs.front();
                    c.key_elements.push_back({ElementKind::SUBSTRING, s.source_refs.front()});
                }
                break;
            }
        }
        out.push_back(std::move(c));
    }
    return out;
}

/// 15 seeded demands with distinct random endpoints and launch powers on
/// a 0.1 dB grid inside the default bounds.
inline std::vector<ServiceDemand> optim_demands(std::uint64_t seed, const NetworkTopology& topo, std::size_t n = 15) {
    if (topo.nodes.size() < 2) throw ConfigError("optim_demands: topology needs two nodes");
    Rng rng(seed);
    const PowerBounds bounds;
    std::vector<ServiceDemand> out;
    for (std::size_t i = 0; i < n; ++i) {
        ServiceDemand d;
        char id[8];
        std::snprintf(id, sizeof id, "S%02zu", i + 1);
        d.id = id;
        const auto a = rng.below(topo.nodes.size());
        auto b = rng.below(topo.nodes.size() - 1);
        if (b >= a) ++b;
        d.src = topo.nodes[a].id;
        d.dst = topo.nodes[b].id;
        const auto steps = static_cast<std::uint64_t>(std::lround((bounds.p_max_dbm - bounds.p_min_dbm) * 10));
        d.launch_power_dbm = bounds.p_min_dbm + static_cast<double>(rng.below(steps + 1)) / 10.0;
        d.modulation = rng.below(3) == 0 ? Modulation::QAM16 : Modulation::QPSK;
        out.push_back(std::move(d));
    }
    return out;
}

inline std::vector<TestCase> generate_optim_scenarios(std::size_t n, std::uint64_t seed, const NetworkTopology& topo,
                                                      TaskType task = TaskType::QOT_ESTIMATION, std::size_t k = 3) {
    if (n == 0) throw ConfigError("generate_optim_scenarios: n must be >= 1");
    if (is_alarm_task(task)) throw ConfigError("generate_optim_scenarios: not an optimization task");
    std::vector<TestCase> out;
    for (std::size_t i = 0; i < n; ++i) {
        const auto demands = optim_demands(detail::case_seed(seed, i, 2), topo);
        const auto alloc = netops::provision(demands, topo, k);

        TestCase c;
        c.id = "optim-" + std::to_string(i + 1);
        c.task = task;
        c.query = kOptimQuery;
        c.scenario = {{"demands", to_json(demands)}};
        switch (task) {
            case TaskType::QOT_ESTIMATION: {
                const auto g = netops::carried_gsnr(topo, demands, alloc);
                c.key_elements.push_back({ElementKind::NUMERIC, "/qot_estimate/netops.provision/blocking_probability",
                                          alloc.blocking_probability, 0.0});
                std::string worst;
                double worst_g = std::numeric_limits<double>::infinity();
                std::size_t listed = 0;
                for (const auto& [id, r] : g) {
                    const double gs = r.channels.front().gsnr_db;
                    if (gs < worst_g) {
                        worst_g = gs;
                        worst = id;
                    }
                    if (listed++ < 3)
                        c.key_elements.push_back(
                            {ElementKind::NUMERIC, "/qot_estimate/qot.estimate_gsnr/" + id + "/channels/0/gsnr_db", gs, 0.01});
                }
                c.key_elements.push_back({ElementKind::PATTERN, "\\b" + std::to_string(g.size()) + " services carried\\b"});
                c.reference_answer = std::to_string(g.size()) + " services carried.";
                if (!worst.empty()) {
                    c.key_elements.push_back({ElementKind::SUBSTRING, "minimum GSNR: " + worst + " at " + detail::fmt(worst_g)});
                    c.reference_answer += " Minimum GSNR: " + worst + " at " + detail::fmt(worst_g) + " dB.";
                }
                c.reference_answer += " Blocking probability " + detail::fmt(alloc.blocking_probability, 4) + ".";
                break;
            }
            case TaskType::NETWORK_ANALYSIS: {
                const auto f = netops::analyze_network(alloc, netops::carried_gsnr(topo, demands, alloc));
                const auto fj = netops::to_json(f);
                c.key_elements.push_back({ElementKind::PATTERN, "\\b" + std::to_string(f.size()) + " findings\\b"});
                c.reference_answer = std::to_string(f.size()) + " findings.";
                if (!f.empty()) {
                    const auto first = fj.at(0).at("kind").get<std::string>() + " " + fj.at(0).at("subject").get<std::string>();
                    c.key_elements.push_back({ElementKind::SUBSTRING, first});
                    c.key_elements.push_back({ElementKind::NUMERIC, "/analyze/netops.analyze_network/findings/0/metric",
                                              fj.at(0).at("metric").get<double>(), 0.01});
                    c.reference_answer += " First: " + first + " (" + fj.at(0).at("detail").get<std::string>() + ")";
                }
                break;
            }
            default: {
                const auto tr = netops::optimize_launch_power(demands, topo, alloc);
                c.key_elements = {
                    {ElementKind::NUMERIC, "/optimize/netops.optimize_launch_power/final_objective_db",
                     tr.final_objective_db, 0.01},
                    {ElementKind::NUMERIC, "/optimize/netops.optimize_launch_power/initial_objective_db",
                     tr.initial_objective_db, 0.01},
                    {ElementKind::SUBSTRING, "initial objective: " + detail::fmt(tr.initial_objective_db) + " dB"},
                    {ElementKind::SUBSTRING, "final objective: " + detail::fmt(tr.final_objective_db) + " dB"},
                    {ElementKind::PATTERN, "\\b" + std::to_string(tr.iterations.size()) + " moves accepted\\b"}};
                c.reference_answer = "Initial objective: " + detail::fmt(tr.initial_objective_db) +
                                     " dB. Final objective: " + detail::fmt(tr.final_objective_db) + " dB. " +
                                     std::to_string(tr.iterations.size()) + " moves accepted.";
                break;
            }
        }
        out.push_back(std::move(c));
    }
    return out;
}

// --- scoring ---------------------------------------------------------------

/// Subtask kind -> tool name -> raw tool output, the view NUMERIC pointers
/// address.
inline json payload_view(const agent::FinalAnswer& a) {
    json v = json::object();
    for (const auto& s : a.sections) v[s.kind] = s.payload;
    return v;
}

struct Score {
    double accuracy = 0.0;
    std::size_t matched = 0;
    std::size_t total = 0;
    std::vector<std::string> missing;  // NUMERIC pointers absent from the payload
};

inline bool element_matches(const KeyElement& e, const std::string& text, const json& payload) {
    switch (e.kind) {
        case ElementKind::SUBSTRING: return to_lower(text).find(to_lower(e.spec)) != std::string::npos;
        case ElementKind::PATTERN: return std::regex_search(text, std::regex(e.spec, std::regex::ECMAScript | std::regex::icase));
        case ElementKind::NUMERIC: {
            json::json_pointer ptr;
            try {
                ptr = json::json_pointer(e.spec);
            } catch (const json::exception&) {
                throw MissingPayloadError("bad payload path '" + e.spec + "'");
            }
            if (!payload.contains(ptr) || !payload.at(ptr).is_number())
                throw MissingPayloadError("payload has no number at '" + e.spec + "'");
            return std::abs(payload.at(ptr).get<double>() - e.expected) <= e.tolerance;
        }
    }
    return false;
}

/// Proportion of key elements present. Missing NUMERIC fields count as
/// unmatched and are reported in Score::missing.
inline Score score_elements(const std::string& text, const json& payload, const std::vector<KeyElement>& keys) {
    if (keys.empty()) throw ConfigError("score_accuracy: no key elements");
    Score s;
    s.total = keys.size();
    for (const auto& k : keys) {
        try {
            if (element_matches(k, text, payload)) ++s.matched;
        } catch (const MissingPayloadError&) {
            s.missing.push_back(k.spec);
        }
    }
    s.accuracy = static_cast<double>(s.matched) / static_cast<double>(s.total);
    return s;
}

/// Text scored for a task: that task's section answer followed by the final
/// answer text.
inline std::string scored_text(const agent::FinalAnswer& a, TaskType task) {
    std::string t;
    for (const auto& s : a.sections)
        if (s.kind == subtask_kind(task)) t += s.answer_text + "\n";
    return t + a.text;
}

inline Score score_accuracy(const agent::FinalAnswer& a, const std::vector<KeyElement>& keys,
                            TaskType task = TaskType::ALARM_COMPRESSION) {
    return score_elements(scored_text(a, task), payload_view(a), keys);
}

inline double semantic_similarity(const std::string& answer, const std::string& reference,
                                  const rag::Embedder& embed = rag::embed) {
    return rag::cosine(embed(answer), embed(reference));
}

// --- matrix ----------------------------------------------------------------

struct Row {
    TaskType task;
    Condition condition;
    std::string case_id;
    double accuracy = 0.0;
    double similarity = 0.0;
    std::size_t matched = 0;
    std::size_t total = 0;
    std::vector<std::string> missing;
    std::string status;  // COMPLETED | FAILED | REJECTED
    std::string error;
};

struct Cell {
    TaskType task;
    Condition condition;
    std::size_t n = 0;
    double mean_accuracy = 0.0;
    double mean_similarity = 0.0;
};

struct MatrixReport {
    std::vector<Cell> cells;
    std::vector<Row> rows;
    std::uint64_t seed = 0;
    std::string config_digest;
    std::string backend_id;
};

/// Builds the backend for one condition. Called once per (condition, case
/// family, scenario) run.
using BackendFactory = std::function<std::unique_ptr<agent::LlmBackend>(Condition)>;

struct MatrixSpec {
    std::vector<TaskType> tasks = all_tasks();
    std::vector<Condition> conditions = all_conditions();
    std::size_t n_per_cell = 20;
    std::uint64_t seed = 11;
    std::size_t k_paths = 3;
};

inline json to_json(const MatrixSpec& s) {
    json tasks = json::array(), conds = json::array();
    for (auto t : s.tasks) tasks.push_back(to_string(t));
    for (auto c : s.conditions) conds.push_back(to_string(c));
    return {{"tasks", tasks}, {"conditions", conds}, {"n_per_cell", s.n_per_cell}, {"seed", s.seed}, {"k_paths", s.k_paths}};
}

inline std::string read_prompts_text(const agent::Workbench& wb) {
    json ex = json::object();
    for (const auto& [k, v] : wb.prompts.examples) {
        json list = json::array();
        for (const auto& e : v) list.push_back({{"input", e.input}, {"output", e.output}});
        ex[k] = list;
    }
    return json{{"intent", wb.prompts.intent_instruction},
                {"decompose", wb.prompts.decompose_instruction},
                {"select", wb.prompts.select_instruction},
                {"summary", wb.prompts.summary_instruction},
                {"brief", wb.prompts.brief},
                {"advanced", wb.prompts.advanced},
                {"output_format", wb.prompts.output_format},
                {"examples", ex}}
        .dump();
}

/// Digest of everything but the seed that determines the report.
inline std::string config_digest(const MatrixSpec& spec, const agent::Workbench& wb, const std::string& backend_id,
                                 const NetworkTopology& topo) {
    auto j = to_json(spec);
    j.erase("seed");
    json conds = json::object();
    for (auto c : spec.conditions) conds[to_string(c)] = agent::to_json(condition_config(c));
    j["agent"] = conds;
    j["backend"] = backend_id;
    j["topology"] = digest(to_json(topo));
    j["prompts"] = digest(json::parse(read_prompts_text(wb)));
    return digest(j);
}

inline std::string jsonl_of(const json& arr) {
    std::string s;
    for (const auto& x : arr) s += x.dump() + "\n";
    return s;
}

/// Runs one scenario end to end on a throwaway session. The gate approves
/// automatically: evaluation sessions never touch a live network.
inline agent::RunResult run_case(const TestCase& c, Condition cond, agent::LlmBackend& backend,
                                 const agent::Workbench& wb, const NetworkTopology& topo, std::size_t k_paths = 3) {
    agent::SessionState session;
    session.topology = topo;
    if (c.scenario.contains("alarms")) session.alarms = alarms::parse_alarms_jsonl(jsonl_of(c.scenario.at("alarms")), c.id);
    if (c.scenario.contains("demands")) session.demands = demands_from_json(c.scenario.at("demands"));
    auto cfg = condition_config(cond);
    cfg.k_paths = k_paths;
    agent::Agent ag(backend, wb.registry, wb.prompts, cfg);
    auto ctx = wb.context(session);
    agent::FixedGate gate(agent::Decision::APPROVED, "evaluation session");
    agent::Transcript tr(c.id);
    return ag.run(c.query, ctx, gate, tr);
}

/// Every (task, condition, case). Cases of one family share their scenario
/// across tasks, so each (family, condition, scenario) is run once and
/// scored for every requested task of that family. Failures score 0 and
/// keep the matrix going.
inline MatrixReport run_matrix(const MatrixSpec& spec, const agent::Workbench& wb, const NetworkTopology& topo,
                               const BackendFactory& factory) {
    if (spec.n_per_cell == 0) throw ConfigError("run_matrix: n_per_cell must be >= 1");
    if (spec.tasks.empty() || spec.conditions.empty()) throw ConfigError("run_matrix: empty task or condition list");
    MatrixReport rep;
    rep.seed = spec.seed;

    std::map<TaskType, std::vector<TestCase>> cases;
    for (auto t : spec.tasks)
        cases[t] = is_alarm_task(t) ? generate_alarm_scenarios(spec.n_per_cell, spec.seed, wb, t)
                                    : generate_optim_scenarios(spec.n_per_cell, spec.seed, topo, t, spec.k_paths);

    std::map<std::pair<bool, Condition>, std::vector<agent::RunResult>> runs;
    for (auto cond : spec.conditions) {
        auto backend = factory(cond);
        if (rep.backend_id.empty()) rep.backend_id = backend->id();
        for (bool alarm : {true, false}) {
            auto t = std::find_if(spec.tasks.begin(), spec.tasks.end(), [&](TaskType x) { return is_alarm_task(x) == alarm; });
            if (t == spec.tasks.end()) continue;
            auto& results = runs[{alarm, cond}];
            for (const auto& c : cases[*t]) results.push_back(run_case(c, cond, *backend, wb, topo, spec.k_paths));
        }
    }
    rep.config_digest = config_digest(spec, wb, rep.backend_id, topo);

    for (auto t : spec.tasks) {
        for (auto cond : spec.conditions) {
            const auto& results = runs.at({is_alarm_task(t), cond});
            Cell cell{t, cond, 0, 0.0, 0.0};
            for (std::size_t i = 0; i < cases[t].size(); ++i) {
                const auto& c = cases[t][i];
                const auto& r = results[i];
                Row row{t, cond, c.id, 0.0, 0.0, 0, 0, {}, "", ""};
                row.total = c.key_elements.size();
                row.status = agent::to_string(r.status);
                if (r.status == agent::RunStatus::COMPLETED && r.answer) {
                    const auto s = score_accuracy(*r.answer, c.key_elements, t);
                    row.accuracy = s.accuracy;
                    row.matched = s.matched;
                    row.missing = s.missing;
                    row.similarity = semantic_similarity(scored_text(*r.answer, t), c.reference_answer);
                } else {
                    row.error = r.error.empty() ? "run " + row.status : r.error;
                }
                cell.mean_accuracy += row.accuracy;
                cell.mean_similarity += row.similarity;
                ++cell.n;
                rep.rows.push_back(std::move(row));
            }
            cell.mean_accuracy /= static_cast<double>(cell.n);
            cell.mean_similarity /= static_cast<double>(cell.n);
            rep.cells.push_back(cell);
        }
    }
    return rep;
}

inline json to_json(const MatrixReport& r) {
    json cells = json::array(), rows = json::array();
    for (const auto& c : r.cells)
        cells.push_back({{"task", to_string(c.task)},
                         {"condition", to_string(c.condition)},
                         {"n", c.n},
                         {"mean_accuracy", c.mean_accuracy},
                         {"mean_similarity", c.mean_similarity}});
    for (const auto& x : r.rows)
        rows.push_back({{"task", to_string(x.task)},
                        {"condition", to_string(x.condition)},
                        {"case_id", x.case_id},
                        {"status", x.status},
                        {"accuracy", x.accuracy},
                        {"similarity", x.similarity},
                        {"matched", x.matched},
                        {"total", x.total},
                        {"missing_payload", x.missing},
                        {"error", x.error},
                        {"expert_judgement", nullptr}});
    return {{"seed", r.seed}, {"config_digest", r.config_digest}, {"backend", r.backend_id}, {"cells", cells}, {"rows", rows}};
}

inline std::string report_csv(const MatrixReport& r) {
    std::string out = "task,condition,n,mean_accuracy,mean_similarity\n";
    for (const auto& c : r.cells)
        out += to_string(c.task) + "," + to_string(c.condition) + "," + std::to_string(c.n) + "," +
               detail::fmt(c.mean_accuracy, 6) + "," + detail::fmt(c.mean_similarity, 6) + "\n";
    return out;
}

/// Writes report.json and report.csv into `dir`.
inline void write_report(const MatrixReport& r, const std::string& dir) {
    std::filesystem::create_directories(dir);
    write_file(dir + "/report.json", to_json(r).dump(2) + "\n");
    write_file(dir + "/report.csv", report_csv(r));
}

inline std::string report_digest(const MatrixReport& r) { return digest(to_json(r)); }

}  // namespace onet::eval

#endif  // ONET_EVALHARNESS_HPP
