#ifndef ONET_AGENT_ORCHESTRATOR_HPP
#define ONET_AGENT_ORCHESTRATOR_HPP

#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "backend.hpp"
#include "prompt.hpp"
#include "tools.hpp"

namespace onet::agent {

class UnknownSubtaskError : public Error {
  public:
    using Error::Error;
};

class IncompletePlanError : public Error {
  public:
    using Error::Error;
};

enum class TaskKind { ALARM_ANALYSIS, NETWORK_OPTIMIZATION, DIRECT_QA };

inline std::string to_string(TaskKind k) {
    switch (k) {
        case TaskKind::ALARM_ANALYSIS: return "ALARM_ANALYSIS";
        case TaskKind::NETWORK_OPTIMIZATION: return "NETWORK_OPTIMIZATION";
        case TaskKind::DIRECT_QA: return "DIRECT_QA";
    }
    return "?";
}

enum class PlanPattern { CASCADED, PARALLEL };

inline std::string to_string(PlanPattern p) { return p == PlanPattern::CASCADED ? "CASCADED" : "PARALLEL"; }

struct Subtask {
    std::string id;
    std::string kind;
    std::vector<std::string> depends_on;
    std::string description;
};

struct AgentPlan {
    TaskKind task_kind = TaskKind::DIRECT_QA;
    std::vector<Subtask> subtasks;
    PlanPattern pattern = PlanPattern::CASCADED;

    /// Dependencies only point backwards, so the plan order is a
    /// topological order; cascaded plans are chains.
    bool well_formed() const {
        std::set<std::string> seen;
        for (std::size_t i = 0; i < subtasks.size(); ++i) {
            const auto& s = subtasks[i];
            for (const auto& d : s.depends_on)
                if (!seen.count(d)) return false;
            if (pattern == PlanPattern::CASCADED &&
                s.depends_on != (i == 0 ? std::vector<std::string>{} : std::vector<std::string>{subtasks[i - 1].id}))
                return false;
            if (!seen.insert(s.id).second) return false;
        }
        return true;
    }
};

inline json to_json(const AgentPlan& p) {
    json subs = json::array();
    for (const auto& s : p.subtasks)
        subs.push_back({{"id", s.id}, {"kind", s.kind}, {"depends_on", s.depends_on}, {"description", s.description}});
    return {{"task_kind", to_string(p.task_kind)}, {"pattern", to_string(p.pattern)}, {"subtasks", subs}};
}

// --- transcript ------------------------------------------------------------

enum class StepKind {
    INTENT_ANALYSIS,
    TASK_DECOMPOSITION,
    RESOURCE_SELECTION,
    PROBLEM_SOLVING,
    FINAL_ANSWER,
    TOOL_CALL,
    PENDING_APPROVAL,
    APPROVAL_RESOLVED,
    FAILED
};

inline std::string to_string(StepKind k) {
    switch (k) {
        case StepKind::INTENT_ANALYSIS: return "INTENT_ANALYSIS";
        case StepKind::TASK_DECOMPOSITION: return "TASK_DECOMPOSITION";
        case StepKind::RESOURCE_SELECTION: return "RESOURCE_SELECTION";
        case StepKind::PROBLEM_SOLVING: return "PROBLEM_SOLVING";
        case StepKind::FINAL_ANSWER: return "FINAL_ANSWER";
        case StepKind::TOOL_CALL: return "TOOL_CALL";
        case StepKind::PENDING_APPROVAL: return "PENDING_APPROVAL";
        case StepKind::APPROVAL_RESOLVED: return "APPROVAL_RESOLVED";
        case StepKind::FAILED: return "FAILED";
    }
    return "?";
}

inline StepKind parse_step_kind(const std::string& s) {
    for (auto k : {StepKind::INTENT_ANALYSIS, StepKind::TASK_DECOMPOSITION, StepKind::RESOURCE_SELECTION,
                   StepKind::PROBLEM_SOLVING, StepKind::FINAL_ANSWER, StepKind::TOOL_CALL, StepKind::PENDING_APPROVAL,
                   StepKind::APPROVAL_RESOLVED, StepKind::FAILED})
        if (to_string(k) == s) return k;
    throw ParseError("unknown step kind '" + s + "'");
}

struct StepRecord {
    std::uint64_t seq = 0;
    std::int64_t ts = 0;
    std::string job_id;
    StepKind step = StepKind::INTENT_ANALYSIS;
    json payload;
};

inline json to_json(const StepRecord& r) {
    return {{"seq", r.seq}, {"ts", r.ts}, {"job_id", r.job_id}, {"step", to_string(r.step)}, {"payload", r.payload}};
}

inline StepRecord step_from_json(const json& j) {
    onet::detail::Reader r(j, "step");
    r.allow_only({"seq", "ts", "job_id", "step", "payload"});
    return {static_cast<std::uint64_t>(r.int64("seq")), r.int64("ts"), r.str("job_id"), parse_step_kind(r.str("step")),
            r.at("payload")};
}

/// Append-only step log. `seq` continues from `first_seq`; the clock
/// defaults to the logical clock ts = seq so transcripts are reproducible.
class Transcript {
  public:
    using Sink = std::function<void(const StepRecord&)>;
    using Clock = std::function<std::int64_t(std::uint64_t seq)>;

    explicit Transcript(std::string job_id, std::uint64_t first_seq = 1, Sink sink = {}, Clock clock = {})
        : job_id_(std::move(job_id)), next_(first_seq), sink_(std::move(sink)), clock_(std::move(clock)) {}

    const StepRecord& append(StepKind step, json payload) {
        std::lock_guard lock(mu_);
        StepRecord r{next_, clock_ ? clock_(next_) : static_cast<std::int64_t>(next_), job_id_, step, std::move(payload)};
        ++next_;
        records_.push_back(std::move(r));
        if (sink_) sink_(records_.back());
        return records_.back();
    }

    std::vector<StepRecord> records() const {
        std::lock_guard lock(mu_);
        return records_;
    }

    const std::string& job_id() const { return job_id_; }

    /// One JSON object per line.
    std::string dump_jsonl() const {
        std::string out;
        for (const auto& r : records()) out += to_json(r).dump() + "\n";
        return out;
    }

  private:
    std::string job_id_;
    std::uint64_t next_;
    Sink sink_;
    Clock clock_;
    mutable std::mutex mu_;
    std::vector<StepRecord> records_;
};

// --- approval gate ---------------------------------------------------------

enum class Decision { APPROVED, REJECTED };

inline std::string to_string(Decision d) { return d == Decision::APPROVED ? "APPROVED" : "REJECTED"; }

struct ApprovalRequest {
    std::string job_id;
    std::string subtask_id;
    std::string tool;
    std::string action;
    json proposed;
};

struct ApprovalOutcome {
    Decision decision = Decision::REJECTED;
    std::string note;
};

/// open() registers a ticket and returns its id; await() blocks until the
/// ticket is resolved.
class ApprovalGate {
  public:
    virtual ~ApprovalGate() = default;
    virtual std::string open(const ApprovalRequest& request) = 0;
    virtual ApprovalOutcome await(const std::string& ticket_id) = 0;
};

/// Resolves every ticket immediately with a fixed decision.
class FixedGate : public ApprovalGate {
  public:
    explicit FixedGate(Decision d, std::string note = "") : decision_(d), note_(std::move(note)) {}
    std::string open(const ApprovalRequest& r) override {
        requests_.push_back(r);
        return "T" + std::to_string(requests_.size());
    }
    ApprovalOutcome await(const std::string&) override { return {decision_, note_}; }
    const std::vector<ApprovalRequest>& requests() const { return requests_; }

  private:
    Decision decision_;
    std::string note_;
    std::vector<ApprovalRequest> requests_;
};

// --- configuration ---------------------------------------------------------

enum class PromptStyle { RAW, BRIEF, ADVANCED };

inline std::string to_string(PromptStyle s) {
    switch (s) {
        case PromptStyle::RAW: return "RAW";
        case PromptStyle::BRIEF: return "BRIEF";
        case PromptStyle::ADVANCED: return "ADVANCED";
    }
    return "?";
}

struct AgentConfig {
    PromptStyle style = PromptStyle::ADVANCED;
    bool retrieval = true;
    TechniqueConfig technique{Technique::COT, 1, 3};
    std::size_t k_context = 4;
    std::size_t k_manual = 3;
    std::size_t k_paths = 3;
    double temperature = 0.0;
    double sampling_temperature = 0.7;  // self-consistency paths when temperature is 0
    std::size_t max_tokens = 1024;
    std::int64_t seed = 0;
    std::int64_t window_ms = 180000;
    std::size_t batch_cap = 25;
};

inline json to_json(const AgentConfig& c) {
    return {{"style", to_string(c.style)},
            {"retrieval", c.retrieval},
            {"technique", to_string(c.technique.technique)},
            {"n_examples", c.technique.n_examples},
            {"n_paths", c.technique.n_paths},
            {"k_context", c.k_context},
            {"k_manual", c.k_manual},
            {"k_paths", c.k_paths},
            {"temperature", c.temperature},
            {"max_tokens", c.max_tokens},
            {"seed", c.seed},
            {"window_ms", c.window_ms},
            {"batch_cap", c.batch_cap}};
}

// --- step 1: intent --------------------------------------------------------

struct Intent {
    TaskKind kind = TaskKind::DIRECT_QA;
    double confidence = 0.0;
    std::string reply;
    bool parsed = false;
};

namespace detail {

inline std::optional<TaskKind> parse_task_label(const std::string& reply) {
    const auto u = to_upper(reply);
    std::optional<TaskKind> found;
    for (auto k : {TaskKind::ALARM_ANALYSIS, TaskKind::NETWORK_OPTIMIZATION, TaskKind::DIRECT_QA}) {
        if (u.find(to_string(k)) != std::string::npos) {
            if (found) return std::nullopt;
            found = k;
        }
    }
    return found;
}

inline TaskKind keyword_intent(const std::string& query) {
    static const std::set<std::string> alarm = {"alarm", "alarms", "los", "lof", "fault", "faults", "troubleshoot"};
    static const std::set<std::string> optim = {"qot", "gsnr", "osnr", "optimize", "optimise", "optimization",
                                                "optimisation", "launch", "margin", "margins"};
    const auto t = rag::terms(query);
    if (std::any_of(t.begin(), t.end(), [](const std::string& w) { return alarm.count(w) > 0; }))
        return TaskKind::ALARM_ANALYSIS;
    if (std::any_of(t.begin(), t.end(), [](const std::string& w) { return optim.count(w) > 0; }))
        return TaskKind::NETWORK_OPTIMIZATION;
    return TaskKind::DIRECT_QA;
}

inline std::string fmt(double v, int prec = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

}  // namespace detail

/// Backend classification first (confidence 0.9), keyword lexicon as the
/// fallback for unparseable replies (confidence 0.5).
inline Intent analyze_intent(const std::string& query, LlmBackend& backend, const rag::Retriever& retriever,
                             const PromptLibrary& lib, const AgentConfig& cfg = {}) {
    PromptTemplate t;
    t.instruction = lib.intent_instruction;
    t.input_data = "Request: " + query;
    std::vector<rag::RetrievalHit> hits;
    if (retriever && cfg.retrieval) hits = retriever(query, 2);
    LlmRequest req{{{"user", render_prompt(t, {}, hits, {})}}, cfg.temperature, cfg.max_tokens, cfg.seed};
    Intent out;
    out.reply = backend.complete(req);
    if (auto k = detail::parse_task_label(out.reply)) {
        out.kind = *k;
        out.confidence = 0.9;
        out.parsed = true;
    } else {
        out.kind = detail::keyword_intent(query);
        out.confidence = 0.5;
    }
    return out;
}

// --- step 2: decomposition -------------------------------------------------

inline const std::map<std::string, std::string>& subtask_descriptions() {
    static const std::map<std::string, std::string> d = {
        {"compress", "Compress the alarm batch by alarm type and source network element."},
        {"prioritize", "Analyze the correlation between compressed alarms and rank them by importance."},
        {"suggest", "Give the cause and handling suggestions for the most important alarm from the alarm manual."},
        {"qot_estimate", "Estimate the GSNR of every service with the GN model."},
        {"analyze", "Analyze network performance: service margins, blocked services and congested links."},
        {"optimize", "Optimize launch powers to maximize the minimum GSNR margin."},
        {"answer", "Answer the operator question from the knowledge base."},
    };
    return d;
}

/// DIRECT_QA plans carry the question itself as the subtask description so
/// that resource selection retrieves against it.
inline AgentPlan decompose(TaskKind kind, const std::string& query = "") {
    auto chain = [&](std::vector<std::string> kinds) {
        AgentPlan p;
        p.task_kind = kind;
        p.pattern = PlanPattern::CASCADED;
        for (std::size_t i = 0; i < kinds.size(); ++i) {
            Subtask s{"S" + std::to_string(i + 1), kinds[i], {}, subtask_descriptions().at(kinds[i])};
            if (i > 0) s.depends_on.push_back("S" + std::to_string(i));
            p.subtasks.push_back(std::move(s));
        }
        return p;
    };
    switch (kind) {
        case TaskKind::ALARM_ANALYSIS: return chain({"compress", "prioritize", "suggest"});
        case TaskKind::NETWORK_OPTIMIZATION: return chain({"qot_estimate", "analyze", "optimize"});
        case TaskKind::DIRECT_QA: {
            auto p = chain({"answer"});
            if (!trim(query).empty()) p.subtasks.front().description = trim(query);
            return p;
        }
    }
    throw UnknownSubtaskError("unknown task kind");
}

// --- step 3: resources -----------------------------------------------------

/// Static subtask -> tool map.
inline std::vector<std::string> tools_for(const std::string& kind) {
    static const std::map<std::string, std::vector<std::string>> m = {
        {"compress", {"alarms.compress"}},
        {"prioritize", {"alarms.correlate", "alarms.priority_scores"}},
        {"suggest", {"rag.retrieve", "alarms.suggest"}},
        {"qot_estimate", {"netops.provision", "qot.estimate_gsnr"}},
        {"analyze", {"netops.analyze_network"}},
        {"optimize", {"netops.optimize_launch_power"}},
        {"answer", {}},
    };
    auto it = m.find(kind);
    if (it == m.end()) throw UnknownSubtaskError("no tools mapped for subtask kind '" + kind + "'");
    return it->second;
}

struct Resources {
    std::vector<std::string> tools;
    std::vector<rag::RetrievalHit> chunks;
};

inline Resources select_resources(const Subtask& s, const ToolRegistry& registry, const rag::Retriever& retriever,
                                  std::size_t k = 4) {
    Resources r;
    r.tools = tools_for(s.kind);
    for (const auto& t : r.tools)
        if (!registry.contains(t)) throw ConfigError("tool '" + t + "' is not registered");
    if (retriever && k > 0) r.chunks = retriever(s.description, k);
    return r;
}

// --- step 4: problem solving -----------------------------------------------

struct ToolCall {
    std::string tool;
    json args;
    json result;
};

struct SubTaskResult {
    std::string subtask_id;
    std::string kind;
    std::string answer_text;
    std::vector<ToolCall> tool_calls;
    json structured_payload = json::object();  // tool name -> raw result
};

/// Plain-text digest of a subtask's tool outputs. One fact per line so a
/// model (or a scripted fixture) can quote them.
inline std::string summarize_payload(const std::string& kind, const json& p) {
    std::string s;
    auto line = [&](const std::string& l) { s += l + "\n"; };
    if (kind == "compress") {
        const auto& c = p.at("alarms.compress");
        line("batch size: " + std::to_string(c.at("batch_size").get<std::size_t>()));
        line("events: " + std::to_string(c.at("events").size()));
        const json* largest = nullptr;
        for (const auto& e : c.at("events"))
            if (!largest || e.at("count").get<std::size_t>() > largest->at("count").get<std::size_t>()) largest = &e;
        if (largest)
            line("largest event: " + largest->at("alarm_type").get<std::string>() + " at " +
                 largest->at("source_ne").get<std::string>() + ", count " +
                 std::to_string(largest->at("count").get<std::size_t>()));
        std::size_t i = 0;
        for (const auto& e : c.at("events"))
            line("event " + std::to_string(++i) + ": " + e.at("alarm_type").get<std::string>() + " at " +
                 e.at("source_ne").get<std::string>() + ", count " + std::to_string(e.at("count").get<std::size_t>()) +
                 ", max severity " + e.at("max_severity").get<std::string>());
    } else if (kind == "prioritize") {
        const auto& ranking = p.at("alarms.priority_scores").at("ranking");
        line("ranked: " + std::to_string(ranking.size()));
        std::size_t i = 0;
        for (const auto& r : ranking)
            line("rank " + std::to_string(++i) + ": " + r.at("/event/alarm_type"_json_pointer).get<std::string>() +
                 " at " + r.at("/event/source_ne"_json_pointer).get<std::string>() + ", score " +
                 detail::fmt(r.at("score").get<double>()));
    } else if (kind == "suggest") {
        const auto& g = p.at("alarms.suggest");
        line("alarm: " + g.at("alarm_type").get<std::string>());
        line("cause: " + g.at("cause").get<std::string>());
        std::size_t i = 0;
        for (const auto& a : g.at("actions")) line("action " + std::to_string(++i) + ": " + a.get<std::string>());
        std::string refs;
        for (const auto& r : g.at("source_refs")) refs += (refs.empty() ? "" : ", ") + r.get<std::string>();
        line("sources: " + refs);
    } else if (kind == "qot_estimate") {
        const auto& a = p.at("netops.provision");
        const auto& g = p.at("qot.estimate_gsnr");
        line("services: " + std::to_string(a.at("assignments").size()));
        line("carried: " + std::to_string(g.size()));
        line("blocking probability: " + detail::fmt(a.at("blocking_probability").get<double>(), 4));
        std::string worst;
        double worst_g = std::numeric_limits<double>::infinity();
        for (const auto& [id, r] : g.items()) {
            const auto& ch = r.at("channels").at(0);
            const double gs = ch.at("gsnr_db").get<double>();
            line("service " + id + ": GSNR " + detail::fmt(gs) + " dB, margin " +
                 detail::fmt(ch.at("margin_db").get<double>()) + " dB");
            if (gs < worst_g) {
                worst_g = gs;
                worst = id;
            }
        }
        if (!worst.empty()) line("minimum GSNR: " + worst + " at " + detail::fmt(worst_g) + " dB");
    } else if (kind == "analyze") {
        const auto& f = p.at("netops.analyze_network").at("findings");
        line("findings: " + std::to_string(f.size()));
        std::size_t i = 0;
        for (const auto& x : f)
            line("finding " + std::to_string(++i) + ": " + x.at("kind").get<std::string>() + " " +
                 x.at("subject").get<std::string>() + " (" + x.at("detail").get<std::string>() + ")");
    } else if (kind == "optimize") {
        const auto& t = p.at("netops.optimize_launch_power");
        line("initial objective: " + detail::fmt(t.at("initial_objective_db").get<double>()) + " dB");
        line("final objective: " + detail::fmt(t.at("final_objective_db").get<double>()) + " dB");
        line("accepted moves: " + std::to_string(t.at("iterations").size()));
        for (const auto& [id, v] : t.at("final_launch_dbm").items())
            line("power " + id + ": " + detail::fmt(v.get<double>()) + " dBm");
    }
    return s;
}

// --- step 5: final answer --------------------------------------------------

struct Section {
    std::string subtask_id;
    std::string kind;
    std::string answer_text;
    json payload;
};

struct FinalAnswer {
    std::string text;
    std::vector<Section> sections;
    std::string transcript_ref;
};

inline json to_json(const FinalAnswer& a) {
    json secs = json::array();
    for (const auto& s : a.sections)
        secs.push_back({{"subtask_id", s.subtask_id}, {"kind", s.kind}, {"answer_text", s.answer_text}, {"payload", s.payload}});
    return {{"text", a.text}, {"sections", secs}, {"transcript_ref", a.transcript_ref}};
}

inline FinalAnswer finalize(const AgentPlan& plan, const std::vector<SubTaskResult>& results, LlmBackend& backend,
                            const PromptLibrary& lib, const AgentConfig& cfg = {}, const std::string& transcript_ref = "") {
    if (results.size() != plan.subtasks.size()) throw IncompletePlanError("finalize: plan has unresolved subtasks");
    FinalAnswer out;
    out.transcript_ref = transcript_ref;
    std::string done, body;
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (results[i].subtask_id != plan.subtasks[i].id) throw IncompletePlanError("finalize: results out of plan order");
        out.sections.push_back({results[i].subtask_id, results[i].kind, results[i].answer_text, results[i].structured_payload});
        done += (done.empty() ? "" : ", ") + results[i].kind;
        body += results[i].kind + ": " + results[i].answer_text + "\n";
    }
    PromptTemplate t;
    t.instruction = lib.summary_instruction;
    t.input_data = "Task: " + to_string(plan.task_kind) + "\nSubtasks completed: " + done + "\n" + body;
    const auto summary = backend.complete({{{"user", render_prompt(t, {}, {}, {})}}, cfg.temperature, cfg.max_tokens, cfg.seed});
    if (plan.pattern == PlanPattern::CASCADED) {
        out.text = results.back().answer_text + "\n\n" + summary;
    } else {
        for (const auto& r : results) out.text += r.answer_text + "\n\n";
        out.text += summary;
    }
    return out;
}

// --- the five-step run -----------------------------------------------------

enum class RunStatus { COMPLETED, REJECTED, FAILED };

inline std::string to_string(RunStatus s) {
    switch (s) {
        case RunStatus::COMPLETED: return "COMPLETED";
        case RunStatus::REJECTED: return "REJECTED";
        case RunStatus::FAILED: return "FAILED";
    }
    return "?";
}

struct RunResult {
    RunStatus status = RunStatus::FAILED;
    std::optional<Intent> intent;
    std::optional<AgentPlan> plan;
    std::vector<SubTaskResult> results;
    std::optional<FinalAnswer> answer;
    std::string error;
};

class Agent {
  public:
    Agent(LlmBackend& backend, const ToolRegistry& registry, const PromptLibrary& lib, AgentConfig cfg = {})
        : backend_(backend), registry_(registry), lib_(lib), cfg_(std::move(cfg)) {
        cfg_.technique.check();
    }

    const AgentConfig& config() const { return cfg_; }

    RunResult run(const std::string& query, ToolContext& ctx, ApprovalGate& gate, Transcript& tr) const {
        RunResult out;
        try {
            const auto intent = analyze_intent(query, backend_, ctx.knowledge, lib_, cfg_);
            out.intent = intent;
            tr.append(StepKind::INTENT_ANALYSIS, {{"query", query},
                                                  {"task_kind", to_string(intent.kind)},
                                                  {"confidence", intent.confidence},
                                                  {"parsed", intent.parsed},
                                                  {"reply", intent.reply}});

            const auto plan = decompose(intent.kind, query);
            out.plan = plan;
            PromptTemplate dt;
            dt.instruction = lib_.decompose_instruction;
            dt.input_data = "Task: " + to_string(intent.kind) + "\nRequest: " + query;
            const auto model_plan = complete(render_prompt(dt, {}, {}, {}), cfg_.seed);
            tr.append(StepKind::TASK_DECOMPOSITION, {{"plan", to_json(plan)}, {"model_decomposition", model_plan}});

            std::vector<Resources> resources;
            for (const auto& s : plan.subtasks) {
                auto r = select_resources(s, registry_, cfg_.retrieval ? ctx.knowledge : rag::Retriever{}, cfg_.k_context);
                PromptTemplate st;
                st.instruction = lib_.select_instruction;
                std::string names;
                for (const auto& t : r.tools) names += (names.empty() ? "" : ", ") + t;
                st.input_data = "Subtask: " + s.kind + "\nTools: " + (names.empty() ? "none" : names);
                const auto confirmation = complete(render_prompt(st, {}, {}, {}), cfg_.seed);
                json chunks = json::array();
                for (const auto& h : r.chunks) chunks.push_back({{"ref", h.chunk.ref()}, {"score", h.score}});
                tr.append(StepKind::RESOURCE_SELECTION, {{"subtask", s.id},
                                                         {"kind", s.kind},
                                                         {"tools", r.tools},
                                                         {"chunks", chunks},
                                                         {"model_confirmation", confirmation}});
                resources.push_back(std::move(r));
            }

            for (std::size_t i = 0; i < plan.subtasks.size(); ++i) {
                auto res = solve(query, plan.subtasks[i], resources[i], out.results, ctx, gate, tr);
                if (!res) {
                    out.status = RunStatus::REJECTED;
                    return out;
                }
                out.results.push_back(std::move(*res));
            }

            out.answer = finalize(plan, out.results, backend_, lib_, cfg_, tr.job_id());
            auto fj = to_json(*out.answer);
            fj["status"] = to_string(RunStatus::COMPLETED);
            tr.append(StepKind::FINAL_ANSWER, fj);
            out.status = RunStatus::COMPLETED;
        } catch (const std::exception& e) {
            out.status = RunStatus::FAILED;
            out.error = e.what();
            tr.append(StepKind::FAILED, {{"status", to_string(RunStatus::FAILED)}, {"error", out.error}});
        }
        return out;
    }

  private:
    std::string complete(const std::string& prompt, std::int64_t seed, double temperature) const {
        return backend_.complete({{{"user", prompt}}, temperature, cfg_.max_tokens, seed});
    }
    std::string complete(const std::string& prompt, std::int64_t seed) const {
        return complete(prompt, seed, cfg_.temperature);
    }

    json args_for(const ToolCall* prev, const std::string& tool, const std::vector<SubTaskResult>& prior) const {
        const auto k = static_cast<std::int64_t>(cfg_.k_paths);
        auto prior_payload = [&](const std::string& t) -> const json& {
            for (auto it = prior.rbegin(); it != prior.rend(); ++it)
                if (it->structured_payload.contains(t)) return it->structured_payload.at(t);
            throw ToolExecutionError(tool, "needs the output of " + t + " from an earlier subtask");
        };
        if (tool == "alarms.compress") return {{"window_ms", cfg_.window_ms}, {"batch_cap", cfg_.batch_cap}};
        if (tool == "alarms.correlate") return {{"events", prior_payload("alarms.compress").at("events")}};
        if (tool == "alarms.priority_scores")
            return {{"events", prior_payload("alarms.compress").at("events")}, {"matrix", prev->result.at("matrix")}};
        if (tool == "rag.retrieve") {
            const auto& top = prior_payload("alarms.priority_scores").at("ranking").at(0).at("event");
            return {{"query", top.at("alarm_type").get<std::string>() + " " +
                                  top.at("representative_description").get<std::string>()},
                    {"k", cfg_.k_manual},
                    {"store", "manual"}};
        }
        if (tool == "alarms.suggest")
            return {{"entry", prior_payload("alarms.priority_scores").at("ranking").at(0)}, {"k", cfg_.k_manual}};
        if (tool == "netops.provision" || tool == "qot.estimate_gsnr" || tool == "netops.analyze_network" ||
            tool == "netops.optimize_launch_power")
            return {{"k", k}};
        throw UnknownSubtaskError("no argument binding for tool '" + tool + "'");
    }

    std::optional<SubTaskResult> solve(const std::string& query, const Subtask& s, const Resources& r,
                                       const std::vector<SubTaskResult>& prior, ToolContext& ctx, ApprovalGate& gate,
                                       Transcript& tr) const {
        SubTaskResult res;
        res.subtask_id = s.id;
        res.kind = s.kind;
        for (const auto& tool : r.tools) {
            const auto& spec = registry_.at(tool);
            auto args = args_for(res.tool_calls.empty() ? nullptr : &res.tool_calls.back(), tool, prior);
            if (spec.mutating) {
                ApprovalRequest req{tr.job_id(), s.id, tool, spec.description, json::object()};
                req.proposed = {{"operation", tool},
                                {"args", args},
                                {"services", ctx.session.demands.size()},
                                {"current_launch_dbm", ctx.session.network_json().at("launch_dbm")},
                                {"state_digest", ctx.session.network_digest()}};
                const auto ticket = gate.open(req);
                tr.append(StepKind::PENDING_APPROVAL, {{"ticket_id", ticket},
                                                       {"subtask", s.id},
                                                       {"tool", tool},
                                                       {"action", req.action},
                                                       {"proposed", req.proposed}});
                const auto outcome = gate.await(ticket);
                tr.append(StepKind::APPROVAL_RESOLVED,
                          {{"ticket_id", ticket}, {"status", to_string(outcome.decision)}, {"note", outcome.note}});
                if (outcome.decision != Decision::APPROVED) {
                    tr.append(StepKind::FAILED, {{"status", to_string(RunStatus::REJECTED)},
                                                 {"subtask", s.id},
                                                 {"error", "operator rejected ticket " + ticket}});
                    return std::nullopt;
                }
            }
            auto result = registry_.invoke(tool, args, ctx);
            tr.append(StepKind::TOOL_CALL,
                      {{"subtask", s.id}, {"tool", tool}, {"args", args}, {"result_digest", digest(result)}});
            res.structured_payload[tool] = result;
            res.tool_calls.push_back({tool, std::move(args), std::move(result)});
        }

        std::string input = "Subtask: " + s.kind + "\nOperator request: " + query + "\n";
        input += summarize_payload(s.kind, res.structured_payload);
        for (const auto& p : prior) input += "Previous subtask " + p.kind + ": " + p.answer_text + "\n";
        while (!input.empty() && input.back() == '\n') input.pop_back();

        PromptTemplate t;
        TechniqueConfig tech;
        std::vector<Example> examples;
        switch (cfg_.style) {
            case PromptStyle::RAW: t.instruction = query; input.clear(); break;
            case PromptStyle::BRIEF: t.instruction = lib_.text(lib_.brief, s.kind); break;
            case PromptStyle::ADVANCED:
                t.instruction = lib_.text(lib_.advanced, s.kind);
                t.output_indicator = lib_.text(lib_.output_format, s.kind);
                tech = cfg_.technique;
                if (auto it = lib_.examples.find(s.kind); it != lib_.examples.end()) examples = it->second;
                if (tech.technique == Technique::FEW_SHOT && examples.empty()) tech.technique = Technique::ZERO_SHOT;
                break;
        }
        t.input_data = input;
        const auto prompt = render_prompt(t, tech, cfg_.retrieval ? r.chunks : std::vector<rag::RetrievalHit>{}, examples);

        if (tech.technique == Technique::COT_SELF_CONSISTENCY) {
            const double temp = cfg_.temperature > 0 ? cfg_.temperature : cfg_.sampling_temperature;
            std::vector<std::string> paths;
            for (std::size_t p = 0; p < tech.n_paths; ++p)
                paths.push_back(complete(prompt, cfg_.seed + static_cast<std::int64_t>(p), temp));
            res.answer_text = self_consistency_vote(paths);
        } else {
            res.answer_text = complete(prompt, cfg_.seed);
        }

        json calls = json::array();
        for (const auto& c : res.tool_calls) calls.push_back(c.tool);
        tr.append(StepKind::PROBLEM_SOLVING, {{"subtask", s.id},
                                              {"kind", s.kind},
                                              {"answer_text", res.answer_text},
                                              {"tool_calls", calls},
                                              {"payload", res.structured_payload}});
        return res;
    }

    LlmBackend& backend_;
    const ToolRegistry& registry_;
    const PromptLibrary& lib_;
    AgentConfig cfg_;
};

}  // namespace onet::agent

#endif  // ONET_AGENT_ORCHESTRATOR_HPP
