#ifndef ONET_GATEWAY_HPP
#define ONET_GATEWAY_HPP

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "agent.hpp"
#include "agent/http_backend.hpp"
#include "evalharness.hpp"

namespace onet::gateway {

class BusyError : public Error {
  public:
    using Error::Error;
};

class SessionNotFoundError : public NotFoundError {
  public:
    using NotFoundError::NotFoundError;
};

class TopologyNotFoundError : public NotFoundError {
  public:
    using NotFoundError::NotFoundError;
};

class UnknownTicketError : public NotFoundError {
  public:
    using NotFoundError::NotFoundError;
};

class AlreadyResolvedError : public Error {
  public:
    using Error::Error;
};

// --- configuration ---------------------------------------------------------

struct BackendSettings {
    std::string kind = "scripted";  // scripted | http
    std::string fixture;            // scripted rule table; defaults to <resource_dir>/agent/scripted_backend.json
    agent::HttpBackendConfig http;
};

struct GatewayConfig {
    std::string resource_dir = "data";  // topologies, manual, knowledge, prompts
    std::string state_dir = "onet-state";
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string token;  // static bearer token; empty disables auth
    BackendSettings backend;
    agent::AgentConfig agent;
};

/// Overlays the keys present in `j` onto `base`; unknown keys are rejected.
inline agent::AgentConfig agent_config_from_json(const json& j, agent::AgentConfig base = {},
                                                 const std::string& path = "agent") {
    onet::detail::Reader r(j, path);
    r.allow_only({"style", "retrieval", "technique", "n_examples", "n_paths", "k_context", "k_manual", "k_paths",
                  "temperature", "max_tokens", "seed", "window_ms", "batch_cap"});
    auto count = [&](const char* key, std::size_t fallback) {
        if (!r.has(key)) return fallback;
        const auto v = r.int64(key);
        if (v < 0) r.fail(std::string("field '") + key + "' must be >= 0");
        return static_cast<std::size_t>(v);
    };
    if (r.has("style")) {
        const auto s = r.str("style");
        if (s == "RAW") base.style = agent::PromptStyle::RAW;
        else if (s == "BRIEF") base.style = agent::PromptStyle::BRIEF;
        else if (s == "ADVANCED") base.style = agent::PromptStyle::ADVANCED;
        else r.fail("unknown style '" + s + "'");
    }
    if (r.has("retrieval")) base.retrieval = r.boolean("retrieval");
    if (r.has("technique")) {
        const auto t = r.str("technique");
        using agent::Technique;
        bool ok = false;
        for (auto x : {Technique::ZERO_SHOT, Technique::FEW_SHOT, Technique::COT, Technique::COT_SELF_CONSISTENCY})
            if (agent::to_string(x) == t) base.technique.technique = x, ok = true;
        if (!ok) r.fail("unknown technique '" + t + "'");
    }
    base.technique.n_examples = count("n_examples", base.technique.n_examples);
    base.technique.n_paths = count("n_paths", base.technique.n_paths);
    base.k_context = count("k_context", base.k_context);
    base.k_manual = count("k_manual", base.k_manual);
    base.k_paths = count("k_paths", base.k_paths);
    base.max_tokens = count("max_tokens", base.max_tokens);
    base.batch_cap = count("batch_cap", base.batch_cap);
    base.temperature = r.num_or("temperature", base.temperature);
    if (r.has("seed")) base.seed = r.int64("seed");
    if (r.has("window_ms")) base.window_ms = r.int64("window_ms");
    if (base.temperature < 0) r.fail("temperature must be >= 0");
    if (base.k_paths == 0) r.fail("k_paths must be >= 1");
    base.technique.check();
    return base;
}

inline GatewayConfig config_from_json(const json& j, const std::string& path = "config") {
    onet::detail::Reader r(j, path);
    r.allow_only({"resource_dir", "state_dir", "host", "port", "token", "backend", "agent"});
    GatewayConfig c;
    c.resource_dir = r.str_or("resource_dir", c.resource_dir);
    c.state_dir = r.str_or("state_dir", c.state_dir);
    c.host = r.str_or("host", c.host);
    if (r.has("port")) c.port = static_cast<int>(r.int64("port"));
    c.token = r.str_or("token", c.token);
    if (r.has("backend")) {
        onet::detail::Reader b(r.at("backend"), r.sub("backend"));
        b.allow_only({"kind", "fixture", "url", "model", "token_env", "timeout_s", "retries"});
        c.backend.kind = b.str_or("kind", c.backend.kind);
        if (c.backend.kind != "scripted" && c.backend.kind != "http") b.fail("kind must be 'scripted' or 'http'");
        c.backend.fixture = b.str_or("fixture", "");
        c.backend.http.url = b.str_or("url", "");
        c.backend.http.model = b.str_or("model", c.backend.http.model);
        c.backend.http.token_env = b.str_or("token_env", c.backend.http.token_env);
        if (b.has("timeout_s")) c.backend.http.timeout_s = static_cast<int>(b.int64("timeout_s"));
        if (b.has("retries")) c.backend.http.retries = static_cast<int>(b.int64("retries"));
    }
    if (r.has("agent")) c.agent = agent_config_from_json(r.at("agent"), c.agent, r.sub("agent"));
    if (c.port < 0 || c.port > 65535) r.fail("port out of range");
    return c;
}

inline GatewayConfig load_config(const std::string& path) {
    return config_from_json(onet::detail::parse_json_text(read_file(path), path), path);
}

/// Environment overrides: ONET_BACKEND_URL (switches to the HTTP backend),
/// ONET_TOKEN, ONET_DATA_DIR, ONET_STATE_DIR, ONET_PORT.
inline void apply_env(GatewayConfig& c, const std::function<const char*(const char*)>& getenv = ::getenv) {
    if (const char* v = getenv("ONET_BACKEND_URL"); v && *v) {
        c.backend.kind = "http";
        c.backend.http.url = v;
    }
    if (const char* v = getenv("ONET_TOKEN")) c.token = v;
    if (const char* v = getenv("ONET_DATA_DIR"); v && *v) c.resource_dir = v;
    if (const char* v = getenv("ONET_STATE_DIR"); v && *v) c.state_dir = v;
    if (const char* v = getenv("ONET_PORT"); v && *v) {
        try {
            c.port = std::stoi(v);
        } catch (const std::exception&) {
            throw ConfigError(std::string("ONET_PORT is not a number: ") + v);
        }
        if (c.port < 0 || c.port > 65535) throw ConfigError("ONET_PORT out of range");
    }
}

inline json to_json(const GatewayConfig& c) {
    return {{"resource_dir", c.resource_dir},
            {"state_dir", c.state_dir},
            {"host", c.host},
            {"port", c.port},
            {"auth", !c.token.empty()},
            {"backend", {{"kind", c.backend.kind}, {"fixture", c.backend.fixture}, {"url", c.backend.http.url}}},
            {"agent", agent::to_json(c.agent)}};
}

using BackendFactory = std::function<std::unique_ptr<agent::LlmBackend>()>;

inline BackendFactory make_backend_factory(const GatewayConfig& c) {
    if (c.backend.kind == "http") {
        const auto http = c.backend.http;
        agent::HttpBackend probe(http);  // validates the URL up front
        return [http] { return std::make_unique<agent::HttpBackend>(http); };
    }
    const auto fixture =
        c.backend.fixture.empty() ? c.resource_dir + "/agent/scripted_backend.json" : c.backend.fixture;
    std::shared_ptr<const agent::ScriptedBackend> proto = agent::load_scripted_backend(fixture);
    return [proto] { return std::make_unique<agent::ScriptedBackend>(*proto); };
}

/// Evaluation request body: {tasks, conditions, n, seed, k_paths, topology}.
/// tasks and conditions take "all" or a list of names.
inline eval::MatrixSpec matrix_spec_from_json(const json& j, std::string* topology = nullptr) {
    onet::detail::Reader r(j, "eval");
    r.allow_only({"tasks", "conditions", "n", "seed", "k_paths", "topology"});
    eval::MatrixSpec s;
    if (r.has("tasks") && r.at("tasks") != "all") {
        s.tasks.clear();
        for (const auto& t : r.arr("tasks")) s.tasks.push_back(eval::parse_task(t.get<std::string>()));
    }
    if (r.has("conditions") && r.at("conditions") != "all") {
        s.conditions.clear();
        for (const auto& c : r.arr("conditions")) s.conditions.push_back(eval::parse_condition(c.get<std::string>()));
    }
    if (r.has("n")) {
        const auto n = r.int64("n");
        if (n < 1) r.fail("n must be >= 1");
        s.n_per_cell = static_cast<std::size_t>(n);
    }
    if (r.has("seed")) s.seed = static_cast<std::uint64_t>(r.int64("seed"));
    if (r.has("k_paths")) {
        const auto k = r.int64("k_paths");
        if (k < 1) r.fail("k_paths must be >= 1");
        s.k_paths = static_cast<std::size_t>(k);
    }
    if (s.tasks.empty() || s.conditions.empty()) r.fail("empty task or condition list");
    if (topology) *topology = r.str_or("topology", "conus_synthetic");
    return s;
}

// --- tickets and jobs ------------------------------------------------------

enum class TicketStatus { PENDING, APPROVED, REJECTED };

inline std::string to_string(TicketStatus s) {
    switch (s) {
        case TicketStatus::PENDING: return "PENDING";
        case TicketStatus::APPROVED: return "APPROVED";
        case TicketStatus::REJECTED: return "REJECTED";
    }
    return "?";
}

inline TicketStatus parse_ticket_status(const std::string& s) {
    for (auto x : {TicketStatus::PENDING, TicketStatus::APPROVED, TicketStatus::REJECTED})
        if (to_string(x) == s) return x;
    throw ParseError("unknown ticket status '" + s + "'");
}

struct Ticket {
    std::string id;
    std::string session_id;
    std::string job_id;
    std::string subtask;
    std::string tool;
    std::string action;
    json proposed;
    TicketStatus status = TicketStatus::PENDING;
    std::string note;
};

inline json to_json(const Ticket& t) {
    return {{"id", t.id},         {"session_id", t.session_id}, {"job_id", t.job_id},
            {"subtask", t.subtask}, {"tool", t.tool},             {"action", t.action},
            {"proposed", t.proposed}, {"status", to_string(t.status)}, {"note", t.note}};
}

inline Ticket ticket_from_json(const json& j) {
    onet::detail::Reader r(j, "ticket");
    return {r.str("id"),     r.str("session_id"), r.str("job_id"),
            r.str("subtask"), r.str("tool"),      r.str("action"),
            r.at("proposed"), parse_ticket_status(r.str("status")), r.str("note")};
}

struct Job {
    std::string id;
    std::string query;
    std::string status;  // RUNNING | COMPLETED | REJECTED | FAILED
    std::uint64_t first_seq = 0;
};

inline json to_json(const Job& j) {
    return {{"job_id", j.id}, {"query", j.query}, {"status", j.status}, {"first_seq", j.first_seq}};
}

struct IngestResult {
    std::size_t accepted = 0;
    std::vector<std::pair<std::size_t, std::string>> errors;  // line number, message
};

inline json to_json(const IngestResult& r) {
    json errs = json::array();
    for (const auto& [line, msg] : r.errors) errs.push_back({{"line", line}, {"error", msg}});
    return {{"accepted", r.accepted}, {"errors", errs}};
}

/// Accepts every well-formed line; malformed lines are reported, not fatal.
inline std::pair<std::vector<alarms::Alarm>, IngestResult> parse_alarm_lines(const std::string& text) {
    std::vector<alarms::Alarm> ok;
    IngestResult res;
    std::size_t lineno = 0;
    for (const auto& line : split(text, '\n')) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto where = "line " + std::to_string(lineno);
        try {
            ok.push_back(alarms::alarm_from_json(onet::detail::parse_json_text(line, where), where));
        } catch (const Error& e) {
            res.errors.emplace_back(lineno, e.what());
        }
    }
    res.accepted = ok.size();
    return {std::move(ok), res};
}

namespace detail {

inline void append_line(const std::filesystem::path& file, const json& j) {
    std::ofstream out(file, std::ios::app | std::ios::binary);
    if (!out) throw Error("cannot append to " + file.string());
    out << j.dump() << '\n';
    out.flush();
}

inline void replace_file(const std::filesystem::path& file, const std::string& content) {
    const auto tmp = file.string() + ".tmp";
    write_file(tmp, content);
    std::filesystem::rename(tmp, file);
}

inline std::vector<json> read_lines(const std::filesystem::path& file) {
    std::vector<json> out;
    if (!std::filesystem::exists(file)) return out;
    std::size_t lineno = 0;
    for (const auto& line : split(read_file(file.string()), '\n')) {
        ++lineno;
        if (trim(line).empty()) continue;
        out.push_back(onet::detail::parse_json_text(line, file.string() + ":" + std::to_string(lineno)));
    }
    return out;
}

inline std::size_t id_number(const std::string& id, char prefix) {
    if (id.size() < 2 || id[0] != prefix) return 0;
    try {
        return static_cast<std::size_t>(std::stoull(id.substr(1)));
    } catch (const std::exception&) {
        return 0;
    }
}

inline std::int64_t wall_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

}  // namespace detail

// --- gateway ---------------------------------------------------------------

/// Sessions, agent jobs, approval tickets and evaluation runs, persisted as
/// append-only line files under <state_dir>/sessions/<id>/ and replayed on
/// construction. Pending tickets found on replay are rejected: their runs
/// died with the previous process.
class Gateway {
  public:
    explicit Gateway(GatewayConfig cfg, BackendFactory factory = {})
        : cfg_(std::move(cfg)), factory_(factory ? std::move(factory) : make_backend_factory(cfg_)) {
        wb_ = agent::Workbench::load(cfg_.resource_dir);
        backend_id_ = factory_()->id();
        std::filesystem::create_directories(sessions_dir());
        std::filesystem::create_directories(evals_dir());
        recover();
    }

    ~Gateway() { shutdown(); }

    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;

    /// Rejects pending tickets (their runs end REJECTED) and joins workers.
    void shutdown() {
        {
            std::lock_guard lock(tickets_mu_);
            if (stopping_) return;
            stopping_ = true;
        }
        tickets_cv_.notify_all();
        std::vector<std::shared_ptr<Session>> all;
        {
            std::lock_guard lock(sessions_mu_);
            for (auto& [_, s] : sessions_) all.push_back(s);
        }
        for (auto& s : all) {
            s->cv.notify_all();
            if (s->worker.joinable()) s->worker.join();
        }
        std::lock_guard lock(evals_mu_);
        for (auto& [_, e] : evals_)
            if (e->worker.joinable()) e->worker.join();
    }

    bool stopping() const {
        std::lock_guard lock(tickets_mu_);
        return stopping_;
    }

    const GatewayConfig& config() const { return cfg_; }
    const std::string& backend_id() const { return backend_id_; }
    const agent::Workbench& workbench() const { return *wb_; }

    NetworkTopology load_topology_ref(const std::string& ref) const {
        if (ref.empty() || ref.find('/') != std::string::npos || ref.find("..") != std::string::npos)
            throw TopologyNotFoundError("invalid topology reference '" + ref + "'");
        const auto path = std::filesystem::path(cfg_.resource_dir) / "topologies" / (ref + ".topo");
        if (!std::filesystem::exists(path)) throw TopologyNotFoundError("topology not found: " + ref);
        return load_topology(path.string());
    }

    /// `options`: {"demands": [...], "agent": {...}}, both optional.
    std::string create_session(const std::string& topology_ref, const json& options = json::object()) {
        auto topo = load_topology_ref(topology_ref);
        const json opts = options.is_null() ? json::object() : options;
        onet::detail::Reader r(opts, "session");
        r.allow_only({"demands", "agent"});
        std::vector<ServiceDemand> demands;
        if (r.has("demands")) {
            demands = demands_from_json(r.arr("demands"));
            for (const auto& d : demands)
                if (!topo.has_node(d.src) || !topo.has_node(d.dst))
                    throw ValidationError({"service " + d.id + " references a node outside " + topology_ref});
        }
        const auto cfg = r.has("agent") ? agent_config_from_json(r.at("agent"), cfg_.agent) : cfg_.agent;

        auto s = std::make_shared<Session>();
        s->topology_ref = topology_ref;
        s->cfg = cfg;
        s->state.topology = std::move(topo);
        s->state.demands = std::move(demands);
        {
            std::lock_guard lock(sessions_mu_);
            s->id = "S" + std::to_string(++session_counter_);
            s->dir = sessions_dir() / s->id;
            std::filesystem::create_directories(s->dir);
            write_file((s->dir / "session.json").string(),
                       json{{"id", s->id},
                            {"topology", topology_ref},
                            {"demands", to_json(s->state.demands)},
                            {"agent", opts.contains("agent") ? opts.at("agent") : json::object()}}
                               .dump(2));
            sessions_[s->id] = s;
        }
        return s->id;
    }

    std::vector<std::string> session_ids() const {
        std::lock_guard lock(sessions_mu_);
        std::vector<std::string> out;
        for (const auto& [id, _] : sessions_) out.push_back(id);
        return out;
    }

    /// Starts an agent run and returns its job. One run per session at a time.
    Job submit_query(const std::string& session_id, const std::string& query) {
        if (trim(query).empty()) throw ConfigError("query text is empty");
        auto s = session(session_id);
        std::unique_lock lock(s->mu);
        if (s->busy) throw BusyError("session " + session_id + " already has a run in flight");
        if (stopping()) throw BusyError("gateway is shutting down");
        if (s->worker.joinable()) s->worker.join();  // previous run has finished
        s->busy = true;
        Job job{"J" + std::to_string(++s->job_counter), query, "RUNNING", s->next_seq};
        s->jobs[job.id] = job;
        detail::append_line(s->dir / "jobs.jsonl", to_json(job));
        s->worker = std::thread([this, s, job] { run_job(s, job); });
        return job;
    }

    Job job(const std::string& session_id, const std::string& job_id) const {
        auto s = session(session_id);
        std::lock_guard lock(s->mu);
        auto it = s->jobs.find(job_id);
        if (it == s->jobs.end()) throw NotFoundError("job not found: " + job_id);
        return it->second;
    }

    /// Blocks until the job leaves RUNNING or the timeout expires.
    Job wait_job(const std::string& session_id, const std::string& job_id,
                 std::chrono::milliseconds timeout = std::chrono::seconds(30)) const {
        auto s = session(session_id);
        std::unique_lock lock(s->mu);
        auto it = s->jobs.find(job_id);
        if (it == s->jobs.end()) throw NotFoundError("job not found: " + job_id);
        s->cv.wait_for(lock, timeout, [&] { return s->jobs.at(job_id).status != "RUNNING"; });
        return s->jobs.at(job_id);
    }

    /// Events with seq >= from_seq, in order.
    std::vector<agent::StepRecord> events(const std::string& session_id, std::uint64_t from_seq = 1) const {
        auto s = session(session_id);
        std::lock_guard lock(s->mu);
        return events_from(*s, from_seq);
    }

    /// Like events() but waits up to `timeout` for at least one.
    std::vector<agent::StepRecord> wait_events(const std::string& session_id, std::uint64_t from_seq,
                                               std::chrono::milliseconds timeout) const {
        auto s = session(session_id);
        std::unique_lock lock(s->mu);
        s->cv.wait_for(lock, timeout, [&] { return s->next_seq > from_seq || stopping(); });
        return events_from(*s, from_seq);
    }

    json transcript(const std::string& session_id, const std::string& job_id) const {
        auto s = session(session_id);
        std::lock_guard lock(s->mu);
        auto it = s->jobs.find(job_id);
        if (it == s->jobs.end()) throw NotFoundError("job not found: " + job_id);
        json records = json::array();
        for (const auto& r : s->events)
            if (r.job_id == job_id) records.push_back(agent::to_json(r));
        auto out = to_json(it->second);
        out["session_id"] = session_id;
        out["records"] = std::move(records);
        return out;
    }

    IngestResult ingest_alarms(const std::string& session_id, const std::string& body) {
        auto s = session(session_id);
        auto [alarms, res] = parse_alarm_lines(body);
        std::lock_guard lock(s->mu);
        for (auto& a : alarms) {
            detail::append_line(s->dir / "alarms.jsonl", alarms::to_json(a));
            s->state.alarms.push_back(std::move(a));
        }
        return res;
    }

    json network_state(const std::string& session_id) const {
        auto s = session(session_id);
        std::lock_guard lock(s->mu);
        json jobs = json::array();
        for (const auto& [_, j] : s->jobs) jobs.push_back(to_json(j));
        return {{"session_id", s->id},
                {"topology",
                 {{"ref", s->topology_ref},
                  {"nodes", s->state.topology.nodes.size()},
                  {"links", s->state.topology.links.size()}}},
                {"network", s->state.network_json()},
                {"digest", s->state.network_digest()},
                {"alarm_count", s->state.alarms.size()},
                {"busy", s->busy},
                {"jobs", jobs},
                {"agent", agent::to_json(s->cfg)}};
    }

    /// Committed network state only; never mutates.
    json gsnr(const std::string& session_id, const std::optional<std::string>& service = std::nullopt) const {
        agent::SessionState snap;
        std::size_t k = 3;
        {
            auto s = session(session_id);
            std::lock_guard lock(s->mu);
            snap = s->state;
            k = s->cfg.k_paths;
        }
        const auto g = netops::carried_gsnr(snap.topology, snap.effective_demands(), snap.working_allocation(k));
        if (service) {
            auto it = g.find(*service);
            if (it == g.end()) throw NotFoundError("service not carried: " + *service);
            return {{"session_id", session_id},
                    {"service", *service},
                    {"report", agent::tools::gsnr_map_json({{it->first, it->second}}).at(*service)}};
        }
        return {{"session_id", session_id}, {"services", agent::tools::gsnr_map_json(g)}};
    }

    Ticket ticket(const std::string& id) const {
        std::lock_guard lock(tickets_mu_);
        auto it = tickets_.find(id);
        if (it == tickets_.end()) throw UnknownTicketError("unknown ticket: " + id);
        return it->second;
    }

    std::vector<Ticket> tickets(const std::optional<std::string>& session_id = std::nullopt,
                                const std::optional<TicketStatus>& status = std::nullopt) const {
        std::lock_guard lock(tickets_mu_);
        std::vector<Ticket> out;
        for (const auto& [_, t] : tickets_)
            if ((!session_id || t.session_id == *session_id) && (!status || t.status == *status)) out.push_back(t);
        return out;
    }

    /// PENDING -> APPROVED | REJECTED, once.
    Ticket resolve_approval(const std::string& ticket_id, agent::Decision decision, const std::string& note) {
        Ticket t;
        {
            std::lock_guard lock(tickets_mu_);
            auto it = tickets_.find(ticket_id);
            if (it == tickets_.end()) throw UnknownTicketError("unknown ticket: " + ticket_id);
            if (it->second.status != TicketStatus::PENDING)
                throw AlreadyResolvedError("ticket " + ticket_id + " is already " + to_string(it->second.status));
            it->second.status = decision == agent::Decision::APPROVED ? TicketStatus::APPROVED : TicketStatus::REJECTED;
            it->second.note = note;
            t = it->second;
            persist_ticket(t);
        }
        tickets_cv_.notify_all();
        return t;
    }

    /// Queues an evaluation run; the body is parsed before returning.
    std::string start_eval(const json& request) {
        std::string topo_ref;
        const json body = request.is_null() ? json::object() : request;
        auto spec = matrix_spec_from_json(body, &topo_ref);
        auto topo = load_topology_ref(topo_ref);
        auto run = std::make_shared<EvalRun>();
        run->request = body;
        run->status = "RUNNING";
        {
            std::lock_guard lock(evals_mu_);
            if (stopping()) throw BusyError("gateway is shutting down");
            run->id = "E" + std::to_string(++eval_counter_);
            run->dir = evals_dir() / run->id;
            std::filesystem::create_directories(run->dir);
            evals_[run->id] = run;
            save_eval(*run);
        }
        run->worker = std::thread([this, run, spec, topo = std::move(topo)] {
            try {
                auto report = eval::run_matrix(spec, *wb_, topo, [this](eval::Condition) { return factory_(); });
                eval::write_report(report, run->dir.string());
                std::lock_guard lock(evals_mu_);
                run->report = to_json(report);
                run->report["report_digest"] = eval::report_digest(report);
                run->status = "COMPLETED";
                save_eval(*run);
            } catch (const std::exception& e) {
                std::lock_guard lock(evals_mu_);
                run->status = "FAILED";
                run->error = e.what();
                save_eval(*run);
            }
            evals_cv_.notify_all();
        });
        return run->id;
    }

    json eval_run(const std::string& id, bool with_rows = true) const {
        std::lock_guard lock(evals_mu_);
        auto it = evals_.find(id);
        if (it == evals_.end()) throw NotFoundError("eval run not found: " + id);
        return eval_json(*it->second, with_rows);
    }

    json wait_eval(const std::string& id, std::chrono::milliseconds timeout = std::chrono::minutes(10)) const {
        std::unique_lock lock(evals_mu_);
        auto it = evals_.find(id);
        if (it == evals_.end()) throw NotFoundError("eval run not found: " + id);
        evals_cv_.wait_for(lock, timeout, [&] { return it->second->status != "RUNNING"; });
        return eval_json(*it->second, true);
    }

  private:
    struct Session {
        std::string id;
        std::string topology_ref;
        agent::AgentConfig cfg;
        std::filesystem::path dir;
        mutable std::mutex mu;
        mutable std::condition_variable cv;
        agent::SessionState state;
        std::vector<agent::StepRecord> events;
        std::map<std::string, Job> jobs;
        std::uint64_t next_seq = 1;
        std::size_t job_counter = 0;
        std::size_t ticket_counter = 0;
        bool busy = false;
        std::thread worker;
    };

    struct EvalRun {
        std::string id;
        std::filesystem::path dir;
        json request;
        std::string status;
        std::string error;
        json report;
        std::thread worker;
    };

    /// Bridges the orchestrator's gate to the ticket book; await blocks until
    /// an operator resolves the ticket from any connection.
    class TicketGate : public agent::ApprovalGate {
      public:
        TicketGate(Gateway& g, Session& s) : g_(g), s_(s) {}
        std::string open(const agent::ApprovalRequest& r) override { return g_.open_ticket(s_, r); }
        agent::ApprovalOutcome await(const std::string& id) override { return g_.await_ticket(id); }

      private:
        Gateway& g_;
        Session& s_;
    };

    std::filesystem::path sessions_dir() const { return std::filesystem::path(cfg_.state_dir) / "sessions"; }
    std::filesystem::path evals_dir() const { return std::filesystem::path(cfg_.state_dir) / "eval"; }

    std::shared_ptr<Session> session(const std::string& id) const {
        std::lock_guard lock(sessions_mu_);
        auto it = sessions_.find(id);
        if (it == sessions_.end()) throw SessionNotFoundError("session not found: " + id);
        return it->second;
    }

    static std::vector<agent::StepRecord> events_from(const Session& s, std::uint64_t from_seq) {
        std::vector<agent::StepRecord> out;
        for (const auto& r : s.events)
            if (r.seq >= from_seq) out.push_back(r);
        return out;
    }

    // Caller holds s.mu.
    void record_event(Session& s, const agent::StepRecord& r) {
        detail::append_line(s.dir / "events.jsonl", agent::to_json(r));
        s.events.push_back(r);
        s.next_seq = r.seq + 1;
    }

    void persist_ticket(const Ticket& t) {
        detail::append_line(sessions_dir() / t.session_id / "tickets.jsonl", to_json(t));
    }

    std::string open_ticket(Session& s, const agent::ApprovalRequest& r) {
        Ticket t;
        {
            std::lock_guard lock(s.mu);
            t.id = s.id + "-T" + std::to_string(++s.ticket_counter);
        }
        t.session_id = s.id;
        t.job_id = r.job_id;
        t.subtask = r.subtask_id;
        t.tool = r.tool;
        t.action = r.action;
        t.proposed = r.proposed;
        std::lock_guard lock(tickets_mu_);
        tickets_[t.id] = t;
        persist_ticket(t);
        return t.id;
    }

    agent::ApprovalOutcome await_ticket(const std::string& id) {
        std::unique_lock lock(tickets_mu_);
        tickets_cv_.wait(lock, [&] { return tickets_.at(id).status != TicketStatus::PENDING || stopping_; });
        auto& t = tickets_.at(id);
        if (t.status == TicketStatus::PENDING) {
            t.status = TicketStatus::REJECTED;
            t.note = "gateway stopped before resolution";
            persist_ticket(t);
        }
        return {t.status == TicketStatus::APPROVED ? agent::Decision::APPROVED : agent::Decision::REJECTED, t.note};
    }

    // Caller holds s.mu. Commits the run's network fields (alarms ingested
    // meanwhile stay) before the terminal record becomes visible, so a
    // client that has seen FINAL_ANSWER or FAILED reads the committed state.
    void finish_job(Session& s, const std::string& job_id, const std::string& status,
                    const agent::SessionState& work) {
        s.state.demands = work.demands;
        s.state.allocation = work.allocation;
        s.state.launch_dbm = work.launch_dbm;
        detail::replace_file(s.dir / "network.json", s.state.network_json().dump());
        auto& j = s.jobs.at(job_id);
        j.status = status;
        detail::append_line(s.dir / "jobs.jsonl", to_json(j));
        s.busy = false;
    }

    void run_job(std::shared_ptr<Session> s, Job job) {
        agent::SessionState work;
        agent::AgentConfig cfg;
        {
            std::lock_guard lock(s->mu);
            work = s->state;
            cfg = s->cfg;
        }
        bool finished = false;
        try {
            auto backend = factory_();
            agent::Agent ag(*backend, wb_->registry, wb_->prompts, cfg);
            auto ctx = wb_->context(work);
            TicketGate gate(*this, *s);
            agent::Transcript tr(
                job.id, job.first_seq,
                [&, s](const agent::StepRecord& r) {
                    {
                        std::lock_guard lock(s->mu);
                        if (r.step == agent::StepKind::FINAL_ANSWER || r.step == agent::StepKind::FAILED) {
                            finish_job(*s, job.id, r.payload.value("status", std::string("FAILED")), work);
                            finished = true;
                        }
                        record_event(*s, r);
                    }
                    s->cv.notify_all();
                },
                [](std::uint64_t) { return detail::wall_ms(); });
            ag.run(job.query, ctx, gate, tr);
        } catch (const std::exception& e) {
            // failure outside the orchestrator, e.g. backend construction
            std::lock_guard lock(s->mu);
            if (!finished) {
                finish_job(*s, job.id, "FAILED", work);
                finished = true;
                record_event(*s, {s->next_seq, detail::wall_ms(), job.id, agent::StepKind::FAILED,
                                  {{"status", "FAILED"}, {"error", e.what()}}});
            }
        }
        if (!finished) {
            std::lock_guard lock(s->mu);
            finish_job(*s, job.id, "FAILED", work);
        }
        s->cv.notify_all();
    }

    void save_eval(const EvalRun& r) const {
        detail::replace_file(r.dir / "run.json",
                             json{{"run_id", r.id}, {"status", r.status}, {"request", r.request}, {"error", r.error}}.dump(2));
    }

    static json eval_json(const EvalRun& r, bool with_rows) {
        json out = {{"run_id", r.id}, {"status", r.status}, {"request", r.request}, {"error", r.error}};
        if (!r.report.is_null()) {
            auto rep = r.report;
            if (!with_rows) rep.erase("rows");
            out["report"] = std::move(rep);
        }
        return out;
    }

    void recover() {
        namespace fs = std::filesystem;
        std::vector<fs::path> dirs;
        for (const auto& e : fs::directory_iterator(sessions_dir()))
            if (e.is_directory() && fs::exists(e.path() / "session.json")) dirs.push_back(e.path());
        std::sort(dirs.begin(), dirs.end());
        for (const auto& dir : dirs) recover_session(dir);

        for (const auto& e : fs::directory_iterator(evals_dir())) {
            if (!e.is_directory() || !fs::exists(e.path() / "run.json")) continue;
            auto run = std::make_shared<EvalRun>();
            const auto j = onet::detail::parse_json_text(read_file((e.path() / "run.json").string()), "run.json");
            run->id = j.at("run_id").get<std::string>();
            run->dir = e.path();
            run->request = j.at("request");
            run->status = j.at("status").get<std::string>();
            run->error = j.at("error").get<std::string>();
            if (run->status == "RUNNING") {
                run->status = "FAILED";
                run->error = "gateway restarted during the run";
                save_eval(*run);
            }
            if (fs::exists(e.path() / "report.json") && run->status == "COMPLETED") {
                run->report = json::parse(read_file((e.path() / "report.json").string()));
                run->report["report_digest"] = digest(run->report);
            }
            eval_counter_ = std::max(eval_counter_, detail::id_number(run->id, 'E'));
            evals_[run->id] = run;
        }
    }

    void recover_session(const std::filesystem::path& dir) {
        const auto meta = onet::detail::parse_json_text(read_file((dir / "session.json").string()), "session.json");
        auto s = std::make_shared<Session>();
        s->id = meta.at("id").get<std::string>();
        s->dir = dir;
        s->topology_ref = meta.at("topology").get<std::string>();
        s->cfg = agent_config_from_json(meta.at("agent"), cfg_.agent);
        s->state.topology = load_topology_ref(s->topology_ref);
        s->state.demands = demands_from_json(meta.at("demands"));
        if (std::filesystem::exists(dir / "network.json")) {
            const auto net = json::parse(read_file((dir / "network.json").string()));
            s->state.demands = demands_from_json(net.at("demands"));
            if (!net.at("allocation").is_null()) s->state.allocation = netops::allocation_from_json(net.at("allocation"));
            s->state.launch_dbm = net.at("launch_dbm").get<std::map<std::string, double>>();
        }
        if (std::filesystem::exists(dir / "alarms.jsonl"))
            s->state.alarms = alarms::parse_alarms_jsonl(read_file((dir / "alarms.jsonl").string()), "alarms.jsonl");
        for (const auto& j : detail::read_lines(dir / "events.jsonl")) {
            s->events.push_back(agent::step_from_json(j));
            s->next_seq = s->events.back().seq + 1;
        }
        for (const auto& j : detail::read_lines(dir / "jobs.jsonl")) {
            Job job{j.at("job_id"), j.at("query"), j.at("status"), j.at("first_seq")};
            s->jobs[job.id] = job;
            s->job_counter = std::max(s->job_counter, detail::id_number(job.id, 'J'));
        }
        std::map<std::string, Ticket> latest;
        for (const auto& j : detail::read_lines(dir / "tickets.jsonl")) {
            auto t = ticket_from_json(j);
            latest[t.id] = t;
        }
        s->ticket_counter = latest.size();

        // Runs that were in flight died with the previous process.
        for (auto& [id, t] : latest) {
            if (t.status != TicketStatus::PENDING) continue;
            t.status = TicketStatus::REJECTED;
            t.note = "gateway restarted before resolution";
            detail::append_line(dir / "tickets.jsonl", to_json(t));
            record_event(*s, {s->next_seq, detail::wall_ms(), t.job_id, agent::StepKind::APPROVAL_RESOLVED,
                              {{"ticket_id", t.id}, {"status", "REJECTED"}, {"note", t.note}}});
            record_event(*s, {s->next_seq, detail::wall_ms(), t.job_id, agent::StepKind::FAILED,
                              {{"status", "REJECTED"}, {"subtask", t.subtask}, {"error", "operator rejected ticket " + t.id}}});
            auto& job = s->jobs.at(t.job_id);
            job.status = "REJECTED";
            detail::append_line(dir / "jobs.jsonl", to_json(job));
        }
        for (auto& [_, job] : s->jobs) {
            if (job.status != "RUNNING") continue;
            record_event(*s, {s->next_seq, detail::wall_ms(), job.id, agent::StepKind::FAILED,
                              {{"status", "FAILED"}, {"error", "gateway restarted during the run"}}});
            job.status = "FAILED";
            detail::append_line(dir / "jobs.jsonl", to_json(job));
        }
        for (auto& [id, t] : latest) tickets_[id] = t;
        session_counter_ = std::max(session_counter_, detail::id_number(s->id, 'S'));
        sessions_[s->id] = s;
    }

    GatewayConfig cfg_;
    BackendFactory factory_;
    std::string backend_id_;
    std::unique_ptr<agent::Workbench> wb_;

    mutable std::mutex sessions_mu_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::size_t session_counter_ = 0;

    mutable std::mutex tickets_mu_;
    std::condition_variable tickets_cv_;
    std::map<std::string, Ticket> tickets_;
    bool stopping_ = false;

    mutable std::mutex evals_mu_;
    mutable std::condition_variable evals_cv_;
    std::map<std::string, std::shared_ptr<EvalRun>> evals_;
    std::size_t eval_counter_ = 0;
};

// --- HTTP ------------------------------------------------------------------

inline int http_status(const std::exception& e) {
    if (dynamic_cast<const NotFoundError*>(&e)) return 404;
    if (dynamic_cast<const BusyError*>(&e) || dynamic_cast<const AlreadyResolvedError*>(&e)) return 409;
    if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const ConfigError*>(&e) ||
        dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const json::exception*>(&e))
        return 400;
    if (dynamic_cast<const DomainError*>(&e)) return 422;
    return 500;
}

inline std::string error_name(const std::exception& e) {
    if (dynamic_cast<const SessionNotFoundError*>(&e)) return "SessionNotFoundError";
    if (dynamic_cast<const TopologyNotFoundError*>(&e)) return "TopologyNotFoundError";
    if (dynamic_cast<const UnknownTicketError*>(&e)) return "UnknownTicketError";
    if (dynamic_cast<const AlreadyResolvedError*>(&e)) return "AlreadyResolvedError";
    if (dynamic_cast<const BusyError*>(&e)) return "BusyError";
    if (dynamic_cast<const NotFoundError*>(&e)) return "NotFoundError";
    if (dynamic_cast<const ValidationError*>(&e)) return "ValidationError";
    if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const json::exception*>(&e)) return "ParseError";
    if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
    if (dynamic_cast<const DomainError*>(&e)) return "DomainError";
    return "Error";
}

/// One SSE frame: id is the record seq, event the step kind.
inline std::string sse_frame(const agent::StepRecord& r) {
    return "id: " + std::to_string(r.seq) + "\nevent: " + agent::to_string(r.step) + "\ndata: " + agent::to_json(r).dump() +
           "\n\n";
}

/// JSON-over-HTTP and SSE front end of a Gateway.
class Server {
  public:
    explicit Server(Gateway& g) : g_(g) { routes(); }
    ~Server() { stop(); }

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds and serves on a background thread; port 0 picks a free port.
    int start(const std::string& host, int port) {
        port_ = port == 0 ? http_.bind_to_any_port(host) : (http_.bind_to_port(host, port) ? port : -1);
        if (port_ < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
        thread_ = std::thread([this] { http_.listen_after_bind(); });
        http_.wait_until_ready();
        return port_;
    }

    /// Binds and serves on the calling thread until stop().
    void run(const std::string& host, int port) {
        if (!http_.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
        port_ = port;
        http_.listen_after_bind();
    }

    void stop() {
        stopped_ = true;
        http_.stop();
        if (thread_.joinable()) thread_.join();
    }

    int port() const { return port_; }

  private:
    using Req = httplib::Request;
    using Res = httplib::Response;

    static void send(Res& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static json body_json(const Req& req) {
        if (trim(req.body).empty()) return json::object();
        return onet::detail::parse_json_text(req.body, "request body");
    }

    template <class F>
    static auto guard(F f) {
        return [f](const Req& req, Res& res) {
            try {
                f(req, res);
            } catch (const std::exception& e) {
                send(res, http_status(e), {{"error", error_name(e)}, {"message", e.what()}});
            }
        };
    }

    bool authorized(const Req& req) const {
        const auto& token = g_.config().token;
        if (token.empty()) return true;
        if (req.get_header_value("Authorization") == "Bearer " + token) return true;
        // EventSource cannot set headers, so the stream also accepts a query token.
        return req.has_param("access_token") && req.get_param_value("access_token") == token;
    }

    void routes() {
        http_.set_pre_routing_handler([this](const Req& req, Res& res) {
            res.set_header("Access-Control-Allow-Origin", "*");
            if (req.method == "OPTIONS") {
                res.set_header("Access-Control-Allow-Headers", "Authorization, Content-Type, Last-Event-ID");
                res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
                res.status = 204;
                return httplib::Server::HandlerResponse::Handled;
            }
            if (req.path.rfind("/api/", 0) == 0 && !authorized(req)) {
                send(res, 401, {{"error", "Unauthorized"}, {"message", "missing or invalid bearer token"}});
                return httplib::Server::HandlerResponse::Handled;
            }
            return httplib::Server::HandlerResponse::Unhandled;
        });

        http_.Get("/api/health", guard([this](const Req&, Res& res) {
                      send(res, 200, {{"status", "ok"}, {"backend", g_.backend_id()}, {"sessions", g_.session_ids().size()}});
                  }));

        http_.Post("/api/sessions", guard([this](const Req& req, Res& res) {
                       const auto body = body_json(req);
                       onet::detail::Reader r(body, "request");
                       r.allow_only({"topology", "demands", "agent"});
                       json options = json::object();
                       if (r.has("demands")) options["demands"] = r.at("demands");
                       if (r.has("agent")) options["agent"] = r.at("agent");
                       const auto topo = r.str_or("topology", "conus_synthetic");
                       const auto id = g_.create_session(topo, options);
                       send(res, 200, {{"session_id", id}, {"topology", topo}});
                   }));

        http_.Get("/api/sessions", guard([this](const Req&, Res& res) { send(res, 200, {{"sessions", g_.session_ids()}}); }));

        http_.Post(R"(/api/sessions/([^/]+)/query)", guard([this](const Req& req, Res& res) {
                       const auto sid = req.matches[1].str();
                       const auto body = body_json(req);
                       onet::detail::Reader r(body, "request");
                       r.allow_only({"query"});
                       const auto job = g_.submit_query(sid, r.str("query"));
                       auto out = to_json(job);
                       out["session_id"] = sid;
                       out["events"] = "/api/sessions/" + sid + "/events?from_seq=" + std::to_string(job.first_seq);
                       send(res, 202, out);
                   }));

        http_.Get(R"(/api/sessions/([^/]+)/events)", guard([this](const Req& req, Res& res) { stream(req, res); }));

        http_.Get(R"(/api/sessions/([^/]+)/transcripts/([^/]+))", guard([this](const Req& req, Res& res) {
                      send(res, 200, g_.transcript(req.matches[1].str(), req.matches[2].str()));
                  }));

        http_.Post(R"(/api/sessions/([^/]+)/alarms)", guard([this](const Req& req, Res& res) {
                       send(res, 200, to_json(g_.ingest_alarms(req.matches[1].str(), req.body)));
                   }));

        http_.Get(R"(/api/network/([^/]+)/state)",
                  guard([this](const Req& req, Res& res) { send(res, 200, g_.network_state(req.matches[1].str())); }));

        http_.Get(R"(/api/network/([^/]+)/gsnr)", guard([this](const Req& req, Res& res) {
                      std::optional<std::string> service;
                      if (req.has_param("service")) service = req.get_param_value("service");
                      send(res, 200, g_.gsnr(req.matches[1].str(), service));
                  }));

        http_.Get("/api/approvals", guard([this](const Req& req, Res& res) {
                      std::optional<std::string> sid;
                      std::optional<TicketStatus> status;
                      if (req.has_param("session")) sid = req.get_param_value("session");
                      if (req.has_param("status")) status = parse_ticket_status(req.get_param_value("status"));
                      json out = json::array();
                      for (const auto& t : g_.tickets(sid, status)) out.push_back(to_json(t));
                      send(res, 200, {{"tickets", out}});
                  }));

        http_.Get(R"(/api/approvals/([^/]+))",
                  guard([this](const Req& req, Res& res) { send(res, 200, to_json(g_.ticket(req.matches[1].str()))); }));

        http_.Post(R"(/api/approvals/([^/]+))", guard([this](const Req& req, Res& res) {
                       const auto body = body_json(req);
                       onet::detail::Reader r(body, "request");
                       r.allow_only({"decision", "note"});
                       const auto d = r.str("decision");
                       if (d != "APPROVED" && d != "REJECTED") r.fail("decision must be APPROVED or REJECTED");
                       const auto t = g_.resolve_approval(
                           req.matches[1].str(), d == "APPROVED" ? agent::Decision::APPROVED : agent::Decision::REJECTED,
                           r.str_or("note", ""));
                       send(res, 200, to_json(t));
                   }));

        http_.Post("/api/eval/run", guard([this](const Req& req, Res& res) {
                       const auto id = g_.start_eval(body_json(req));
                       send(res, 202, {{"run_id", id}, {"status", "RUNNING"}});
                   }));

        http_.Get(R"(/api/eval/runs/([^/]+))", guard([this](const Req& req, Res& res) {
                      const bool rows = !req.has_param("rows") || req.get_param_value("rows") != "0";
                      send(res, 200, g_.eval_run(req.matches[1].str(), rows));
                  }));
    }

    /// SSE replay from `from_seq` (or Last-Event-ID + 1), then live events.
    /// `follow=0` closes after the replay.
    void stream(const Req& req, Res& res) {
        const auto sid = req.matches[1].str();
        std::uint64_t from = 1;
        auto parse_seq = [](const std::string& v, const char* what) -> std::uint64_t {
            try {
                std::size_t used = 0;
                const auto n = std::stoull(v, &used);
                if (used != v.size()) throw ConfigError("");
                return n;
            } catch (const std::exception&) {
                throw ConfigError(std::string(what) + " must be a non-negative integer");
            }
        };
        if (req.has_param("from_seq")) from = std::max<std::uint64_t>(1, parse_seq(req.get_param_value("from_seq"), "from_seq"));
        if (req.has_header("Last-Event-ID"))
            from = std::max(from, parse_seq(req.get_header_value("Last-Event-ID"), "Last-Event-ID") + 1);
        const bool follow = !req.has_param("follow") || req.get_param_value("follow") != "0";
        g_.events(sid, from);  // 404 before committing to a stream

        res.set_header("Cache-Control", "no-cache");
        if (!follow) {
            std::string body;
            for (const auto& r : g_.events(sid, from)) body += sse_frame(r);
            res.set_content(body, "text/event-stream");
            return;
        }
        res.set_chunked_content_provider(
            "text/event-stream", [this, sid, next = from, idle = 0](std::size_t, httplib::DataSink& sink) mutable {
                if (stopped_ || g_.stopping()) {
                    sink.done();
                    return true;
                }
                const auto evs = g_.wait_events(sid, next, std::chrono::milliseconds(250));
                if (evs.empty()) {
                    if (++idle >= 60) {  // comment line every ~15 s keeps proxies open
                        idle = 0;
                        if (!sink.write(": keepalive\n\n", 13)) return false;
                    }
                    return sink.is_writable();
                }
                idle = 0;
                for (const auto& r : evs) {
                    const auto f = sse_frame(r);
                    if (!sink.write(f.data(), f.size())) return false;
                    next = r.seq + 1;
                }
                return true;
            });
    }

    Gateway& g_;
    httplib::Server http_;
    std::thread thread_;
    std::atomic<bool> stopped_{false};
    int port_ = -1;
};

}  // namespace onet::gateway

#endif  // ONET_GATEWAY_HPP
