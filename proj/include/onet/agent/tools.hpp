#ifndef ONET_AGENT_TOOLS_HPP
#define ONET_AGENT_TOOLS_HPP

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "session.hpp"

namespace onet::agent {

class ToolExecutionError : public Error {
  public:
    ToolExecutionError(std::string tool, const std::string& msg) : Error(tool + ": " + msg), tool_(std::move(tool)) {}
    const std::string& tool() const { return tool_; }

  private:
    std::string tool_;
};

/// What a tool may touch. Retrievers may be empty when no store is loaded.
struct ToolContext {
    SessionState& session;
    rag::Retriever manual;
    rag::Retriever knowledge;
    const alarms::Rulebase& rulebase;
    rag::Embedder embed = rag::embed;
};

struct ArgSpec {
    std::string name;
    std::string type;  // string | integer | number | boolean | object | array
    bool required = true;
    std::string description;
};

struct ToolSpec {
    std::string name;
    std::string description;
    std::vector<ArgSpec> args;
    bool mutating = false;
    std::function<json(const json& args, ToolContext& ctx)> handler;
};

inline json to_json(const ToolSpec& t) {
    json args = json::array();
    for (const auto& a : t.args)
        args.push_back({{"name", a.name}, {"type", a.type}, {"required", a.required}, {"description", a.description}});
    return {{"name", t.name}, {"description", t.description}, {"args", args}, {"mutating", t.mutating}};
}

class ToolRegistry {
  public:
    void add(ToolSpec spec) {
        if (spec.name.empty() || !spec.handler) throw ConfigError("tool needs a name and a handler");
        if (tools_.count(spec.name)) throw ConfigError("duplicate tool name '" + spec.name + "'");
        tools_.emplace(spec.name, std::move(spec));
    }

    const ToolSpec& at(const std::string& name) const {
        auto it = tools_.find(name);
        if (it == tools_.end()) throw NotFoundError("unknown tool '" + name + "'");
        return it->second;
    }

    bool contains(const std::string& name) const { return tools_.count(name) > 0; }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& [n, _] : tools_) out.push_back(n);
        return out;
    }

    /// Checks args against the descriptors, then runs the handler. Any
    /// failure surfaces as ToolExecutionError.
    json invoke(const std::string& name, const json& args, ToolContext& ctx) const {
        const auto& spec = at(name);
        if (!args.is_object()) throw ToolExecutionError(name, "arguments must be an object");
        for (const auto& item : args.items()) {
            const auto& k = item.key();
            if (std::none_of(spec.args.begin(), spec.args.end(), [&](const ArgSpec& a) { return a.name == k; }))
                throw ToolExecutionError(name, "unknown argument '" + k + "'");
        }
        for (const auto& a : spec.args) {
            if (!args.contains(a.name)) {
                if (a.required) throw ToolExecutionError(name, "missing argument '" + a.name + "'");
                continue;
            }
            if (!type_ok(args.at(a.name), a.type))
                throw ToolExecutionError(name, "argument '" + a.name + "' must be of type " + a.type);
        }
        try {
            return spec.handler(args, ctx);
        } catch (const ToolExecutionError&) {
            throw;
        } catch (const std::exception& e) {
            throw ToolExecutionError(name, e.what());
        }
    }

  private:
    static bool type_ok(const json& v, const std::string& type) {
        if (type == "string") return v.is_string();
        if (type == "integer") return v.is_number_integer();
        if (type == "number") return v.is_number();
        if (type == "boolean") return v.is_boolean();
        if (type == "object") return v.is_object();
        if (type == "array") return v.is_array();
        return false;
    }

    std::map<std::string, ToolSpec> tools_;
};

namespace tools {

inline std::size_t arg_size(const json& args, const char* key, std::size_t fallback) {
    if (!args.contains(key)) return fallback;
    const auto v = args.at(key).get<std::int64_t>();
    if (v < 1) throw DomainError(std::string(key) + " must be >= 1");
    return static_cast<std::size_t>(v);
}

inline double arg_num(const json& args, const char* key, double fallback) {
    return args.contains(key) ? args.at(key).get<double>() : fallback;
}

inline alarms::PriorityConfig priority_config(const json& args) {
    alarms::PriorityConfig cfg;
    if (args.contains("weights")) {
        const auto& w = args.at("weights");
        onet::detail::Reader r(w, "weights");
        r.allow_only({"severity", "frequency", "correlation"});
        cfg.weights = {r.num("severity"), r.num("frequency"), r.num("correlation")};
    }
    return cfg;
}

inline netops::OptimizerConfig optimizer_config(const json& args) {
    netops::OptimizerConfig cfg;
    cfg.bounds.p_min_dbm = arg_num(args, "p_min_dbm", cfg.bounds.p_min_dbm);
    cfg.bounds.p_max_dbm = arg_num(args, "p_max_dbm", cfg.bounds.p_max_dbm);
    cfg.step_db = arg_num(args, "step_db", cfg.step_db);
    cfg.max_rounds = arg_size(args, "max_rounds", cfg.max_rounds);
    return cfg;
}

inline json gsnr_map_json(const std::map<std::string, qot::GsnrReport>& m) {
    json out = json::object();
    for (const auto& [id, r] : m) out[id] = qot::to_json(r);
    return out;
}

}  // namespace tools

/// The built-in tools bridging the agent to the domain modules.
inline ToolRegistry default_registry() {
    ToolRegistry reg;

    reg.add({"alarms.compress",
             "Compress the most recent alarm window by (alarm type, source NE).",
             {{"window_ms", "integer", false, "window length in ms"}, {"batch_cap", "integer", false, "alarms per batch"}},
             false,
             [](const json& args, ToolContext& ctx) {
                 const auto window = args.contains("window_ms") ? args.at("window_ms").get<std::int64_t>() : 180000;
                 const auto batch = ctx.session.latest_batch(window, tools::arg_size(args, "batch_cap", 25));
                 if (!batch) throw DomainError("session has no alarms");
                 return json{{"window_start", batch->window_start},
                             {"window_end", batch->window_end},
                             {"batch_size", batch->alarms.size()},
                             {"events", alarms::to_json(alarms::compress(*batch))}};
             }});

    reg.add({"alarms.correlate",
             "Pairwise correlation matrix of compressed events (rulebase, then description similarity).",
             {{"events", "array", true, "compressed events"}},
             false,
             [](const json& args, ToolContext& ctx) {
                 return json{{"matrix", alarms::correlate(alarms::events_from_json(args.at("events")), ctx.embed,
                                                          ctx.rulebase)}};
             }});

    reg.add({"alarms.priority_scores",
             "Rank compressed events by weighted severity, frequency and correlation.",
             {{"events", "array", true, "compressed events"},
              {"matrix", "array", true, "correlation matrix"},
              {"weights", "object", false, "severity/frequency/correlation weights"}},
             false,
             [](const json& args, ToolContext&) {
                 return json{{"ranking", alarms::to_json(alarms::priority_scores(
                                             alarms::events_from_json(args.at("events")),
                                             alarms::matrix_from_json(args.at("matrix")), tools::priority_config(args)))}};
             }});

    reg.add({"rag.retrieve",
             "Top-k chunks from the alarm manual or the knowledge base.",
             {{"query", "string", true, "query text"},
              {"k", "integer", false, "number of hits"},
              {"store", "string", false, "manual | knowledge"}},
             false,
             [](const json& args, ToolContext& ctx) {
                 const auto store = args.value("store", std::string("manual"));
                 const auto& r = store == "knowledge" ? ctx.knowledge : ctx.manual;
                 if (store != "manual" && store != "knowledge") throw DomainError("unknown store '" + store + "'");
                 if (!r) throw DomainError("no " + store + " store loaded");
                 return json{{"hits", rag::to_json(r(args.at("query").get<std::string>(), tools::arg_size(args, "k", 3)))}};
             }});

    reg.add({"alarms.suggest",
             "Cause and handling actions for a ranked event, extracted from the alarm manual.",
             {{"entry", "object", true, "priority entry"}, {"k", "integer", false, "manual chunks to consult"}},
             false,
             [](const json& args, ToolContext& ctx) {
                 rag::Retriever r = ctx.manual;
                 if (!r) r = [](const std::string&, std::size_t) { return std::vector<rag::RetrievalHit>{}; };
                 return alarms::to_json(
                     alarms::suggest(alarms::priority_entry_from_json(args.at("entry")), r, tools::arg_size(args, "k", 3)));
             }});

    reg.add({"netops.provision",
             "First-fit routing and spectrum assignment of the session's services over k shortest paths.",
             {{"k", "integer", false, "candidate paths per service"}},
             false,
             [](const json& args, ToolContext& ctx) {
                 return netops::to_json(ctx.session.working_allocation(tools::arg_size(args, "k", 3)));
             }});

    reg.add({"qot.estimate_gsnr",
             "GN-model GSNR, per-link power/ASE/NLI and margin of every carried service.",
             {{"k", "integer", false, "candidate paths per service"}},
             false,
             [](const json& args, ToolContext& ctx) {
                 const auto& s = ctx.session;
                 return tools::gsnr_map_json(
                     netops::carried_gsnr(s.topology, s.effective_demands(), s.working_allocation(tools::arg_size(args, "k", 3))));
             }});

    reg.add({"netops.analyze_network",
             "Findings on negative or low margins, blocked services and congested links.",
             {{"k", "integer", false, "candidate paths per service"},
              {"low_margin_db", "number", false, "low-margin threshold"},
              {"congestion", "number", false, "link utilization threshold"}},
             false,
             [](const json& args, ToolContext& ctx) {
                 const auto& s = ctx.session;
                 const auto alloc = s.working_allocation(tools::arg_size(args, "k", 3));
                 netops::AnalysisThresholds thr;
                 thr.low_margin_db = tools::arg_num(args, "low_margin_db", thr.low_margin_db);
                 thr.congestion = tools::arg_num(args, "congestion", thr.congestion);
                 return json{{"findings", netops::to_json(netops::analyze_network(
                                              alloc, netops::carried_gsnr(s.topology, s.effective_demands(), alloc), thr))}};
             }});

    reg.add({"netops.optimize_launch_power",
             "Max-min margin launch-power optimization; applies the resulting powers to the live network.",
             {{"k", "integer", false, "candidate paths per service"},
              {"step_db", "number", false, "coordinate step"},
              {"max_rounds", "integer", false, "round limit"},
              {"p_min_dbm", "number", false, "lower power bound"},
              {"p_max_dbm", "number", false, "upper power bound"}},
             true,
             [](const json& args, ToolContext& ctx) {
                 auto& s = ctx.session;
                 auto alloc = s.working_allocation(tools::arg_size(args, "k", 3));
                 const auto trace = netops::optimize_launch_power(s.effective_demands(), s.topology, alloc,
                                                                  tools::optimizer_config(args));
                 s.allocation = std::move(alloc);
                 for (const auto& [id, p] : trace.final_launch_dbm) s.launch_dbm[id] = p;
                 return netops::to_json(trace);
             }});

    return reg;
}

}  // namespace onet::agent

#endif  // ONET_AGENT_TOOLS_HPP
