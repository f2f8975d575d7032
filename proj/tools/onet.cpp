// onet: command-line front end for the network model, QoT, operations,
// alarm triage, retrieval, agent, evaluation harness and gateway.

#include <chrono>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <onet/gateway.hpp>

using namespace onet;

namespace {

std::string default_data_dir() {
    if (const char* v = std::getenv("ONET_DATA_DIR"); v && *v) return v;
    return ONET_DEFAULT_DATA_DIR;
}

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

std::vector<double> parse_weights(const std::string& s) {
    std::vector<double> out;
    for (const auto& part : split(s, ',')) {
        try {
            out.push_back(std::stod(trim(part)));
        } catch (const std::exception&) {
            throw ConfigError("weights must be three comma-separated numbers, got '" + s + "'");
        }
    }
    if (out.size() != 3) throw ConfigError("weights must be three comma-separated numbers, got '" + s + "'");
    return out;
}

// --- agent chat --------------------------------------------------------------

/// Prints the proposed instruction and asks on the terminal unless a fixed
/// decision was given on the command line.
class ConsoleGate : public agent::ApprovalGate {
  public:
    explicit ConsoleGate(std::optional<agent::Decision> fixed) : fixed_(fixed) {}

    std::string open(const agent::ApprovalRequest& r) override {
        const auto id = "T" + std::to_string(++n_);
        std::cerr << "\n[approval " << id << "] " << r.tool << ": " << r.action << "\n"
                  << r.proposed.dump(2) << "\n";
        return id;
    }

    agent::ApprovalOutcome await(const std::string& id) override {
        if (fixed_) {
            std::cerr << "[approval " << id << "] " << agent::to_string(*fixed_) << " (command line)\n";
            return {*fixed_, "decided on the command line"};
        }
        std::cerr << "Approve " << id << "? [y/N] " << std::flush;
        std::string line;
        std::getline(std::cin, line);
        const auto d = (trim(line) == "y" || trim(line) == "Y") ? agent::Decision::APPROVED : agent::Decision::REJECTED;
        return {d, "operator console"};
    }

  private:
    std::optional<agent::Decision> fixed_;
    std::size_t n_ = 0;
};

std::string step_line(const agent::StepRecord& r) {
    std::string s = "[" + std::to_string(r.seq) + "] " + agent::to_string(r.step);
    const auto& p = r.payload;
    switch (r.step) {
        case agent::StepKind::INTENT_ANALYSIS: return s + " " + p.value("task_kind", "");
        case agent::StepKind::TASK_DECOMPOSITION: {
            std::string kinds;
            for (const auto& st : p.at("plan").at("subtasks")) kinds += " " + st.at("kind").get<std::string>();
            return s + kinds;
        }
        case agent::StepKind::RESOURCE_SELECTION:
        case agent::StepKind::PROBLEM_SOLVING: return s + " " + p.value("subtask", "") + " " + p.value("kind", "");
        case agent::StepKind::TOOL_CALL: return s + " " + p.value("tool", "");
        case agent::StepKind::FAILED: return s + " " + p.value("status", "") + " " + p.value("error", "");
        default: return s;
    }
}

int agent_chat(const std::string& data, const std::string& topo_ref, const std::string& demands_file,
               const std::string& alarms_file, std::vector<std::string> query_words, const std::string& decision,
               bool jsonl, const std::string& backend_url) {
    gateway::GatewayConfig cfg;
    cfg.resource_dir = data;
    gateway::apply_env(cfg);
    cfg.resource_dir = data;
    if (!backend_url.empty()) {
        cfg.backend.kind = "http";
        cfg.backend.http.url = backend_url;
    }
    auto factory = gateway::make_backend_factory(cfg);
    auto backend = factory();
    const auto wb = agent::Workbench::load(data);

    agent::SessionState session;
    session.topology = load_topology(data + "/topologies/" + topo_ref + ".topo");
    if (!demands_file.empty()) session.demands = load_demands(demands_file);
    if (!alarms_file.empty()) session.alarms = alarms::load_alarms(alarms_file);

    std::optional<agent::Decision> fixed;
    if (decision == "approve") fixed = agent::Decision::APPROVED;
    else if (decision == "reject") fixed = agent::Decision::REJECTED;
    ConsoleGate gate(fixed);
    agent::Agent ag(*backend, wb->registry, wb->prompts, cfg.agent);

    auto run_one = [&](const std::string& query, std::size_t n) {
        auto ctx = wb->context(session);
        agent::Transcript tr("J" + std::to_string(n), 1, [&](const agent::StepRecord& r) {
            if (jsonl) std::cout << agent::to_json(r).dump() << "\n" << std::flush;
            else std::cerr << step_line(r) << "\n";
        });
        const auto res = ag.run(query, ctx, gate, tr);
        if (!jsonl) {
            if (res.answer) std::cout << res.answer->text << "\n";
            else std::cout << agent::to_string(res.status) << (res.error.empty() ? "" : ": " + res.error) << "\n";
        }
        return res.status == agent::RunStatus::COMPLETED ? 0 : 3;
    };

    if (!query_words.empty()) {
        std::string q;
        for (const auto& w : query_words) q += (q.empty() ? "" : " ") + w;
        return run_one(q, 1);
    }
    std::size_t n = 0;
    int rc = 0;
    std::string line;
    std::cerr << "> " << std::flush;
    while (std::getline(std::cin, line)) {
        if (!trim(line).empty()) rc = run_one(line, ++n);
        std::cerr << "> " << std::flush;
    }
    return rc;
}

// --- serve -------------------------------------------------------------------

int serve(gateway::GatewayConfig cfg) {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);  // inherited by worker threads

    gateway::Gateway g(cfg);
    gateway::Server server(g);
    const int port = server.start(cfg.host, cfg.port);
    std::cerr << "onet gateway listening on http://" << cfg.host << ":" << port << " (backend " << g.backend_id()
              << ", state " << cfg.state_dir << ")\n";
    int sig = 0;
    sigwait(&set, &sig);
    std::cerr << "stopping\n";
    server.stop();
    g.shutdown();
    return 0;
}

// --- api client --------------------------------------------------------------

int api_call(const std::string& server, const std::string& method, const std::string& path, const std::string& data,
             const std::string& token) {
    static const std::regex url_re(R"(^http://([^/:]+)(:(\d+))?/?$)");
    std::smatch m;
    if (!std::regex_match(server, m, url_re)) throw ConfigError("server must look like http://host[:port]");
    httplib::Client cli(m[1].str(), m[3].matched ? std::stoi(m[3].str()) : 80);
    cli.set_read_timeout(300);
    if (!token.empty()) cli.set_bearer_token_auth(token);
    std::string body = data;
    if (!data.empty() && data[0] == '@') body = read_file(data.substr(1));
    const auto type = path.find("/alarms") != std::string::npos ? "application/x-ndjson" : "application/json";

    httplib::Result res;
    if (method == "GET" && path.find("/events") != std::string::npos) {
        // stream SSE frames to stdout until the server closes or a run ends
        std::string buf;
        res = cli.Get(path, [&](const char* d, std::size_t n) {
            buf.append(d, n);
            std::cout.write(d, static_cast<std::streamsize>(n));
            std::cout.flush();
            return buf.find("event: FINAL_ANSWER") == std::string::npos && buf.find("event: FAILED") == std::string::npos;
        });
        if (!res && res.error() == httplib::Error::Canceled) return 0;
    } else if (method == "GET") {
        res = cli.Get(path);
    } else if (method == "POST") {
        res = cli.Post(path, body, type);
    } else {
        throw ConfigError("method must be GET or POST");
    }
    if (!res) throw Error("request failed: " + httplib::to_string(res.error()));
    if (res->get_header_value("Content-Type") == "application/json") {
        print(json::parse(res->body));
    } else {
        std::cout << res->body;
    }
    return res->status < 400 ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optical network operation and maintenance toolkit"};
    app.require_subcommand(1);
    std::string data = default_data_dir();
    app.add_option("--data", data, "Resource directory (topologies, manual, knowledge, prompts)");

    // topo
    auto* topo = app.add_subcommand("topo", "Topology files")->require_subcommand(1);
    std::size_t n_nodes = 77, n_links = 99;
    std::uint64_t topo_seed = 42;
    std::string out_file, in_file;
    auto* topo_gen = topo->add_subcommand("gen", "Generate a seeded synthetic topology");
    topo_gen->add_option("--nodes", n_nodes, "Node count")->capture_default_str();
    topo_gen->add_option("--links", n_links, "Link count")->capture_default_str();
    topo_gen->add_option("--seed", topo_seed, "Seed")->capture_default_str();
    topo_gen->add_option("--out", out_file, "Output file (stdout when omitted)");
    auto* topo_validate = topo->add_subcommand("validate", "Validate a topology file");
    topo_validate->add_option("file", in_file, "Topology file")->required();

    // qot
    auto* qot_cmd = app.add_subcommand("qot", "Quality of transmission")->require_subcommand(1);
    std::string topo_file, route, modulation = "QPSK";
    std::size_t channel = 0;
    double power_dbm = 0.0;
    auto* qot_est = qot_cmd->add_subcommand("estimate", "GSNR of one channel along a node route");
    qot_est->add_option("--topo", topo_file, "Topology file")->required();
    qot_est->add_option("--route", route, "Comma-separated node ids")->required();
    qot_est->add_option("--channel", channel, "Channel index")->capture_default_str();
    qot_est->add_option("--power-dbm", power_dbm, "Launch power")->capture_default_str();
    qot_est->add_option("--modulation", modulation, "QPSK, 8QAM, 16QAM or 64QAM")->capture_default_str();

    // netops
    auto* netops_cmd = app.add_subcommand("netops", "Provisioning, analysis and optimization")->require_subcommand(1);
    std::string demands_file;
    std::size_t k_paths = 3, max_rounds = 50;
    double step_db = 0.5;
    auto add_common = [&](CLI::App* c) {
        c->add_option("--topo", topo_file, "Topology file")->required();
        c->add_option("--demands", demands_file, "Service demands (JSON array)")->required();
        c->add_option("--k", k_paths, "Candidate paths per service")->capture_default_str();
    };
    auto* prov = netops_cmd->add_subcommand("provision", "First-fit routing and spectrum assignment");
    add_common(prov);
    auto* analyze = netops_cmd->add_subcommand("analyze", "Findings on margins, blocking and congestion");
    add_common(analyze);
    auto* optimize = netops_cmd->add_subcommand("optimize", "Max-min margin launch-power optimization");
    add_common(optimize);
    optimize->add_option("--step", step_db, "Coordinate step, dB")->capture_default_str();
    optimize->add_option("--max-rounds", max_rounds, "Round limit")->capture_default_str();

    // alarms
    auto* alarms_cmd = app.add_subcommand("alarms", "Alarm triage")->require_subcommand(1);
    std::string manual_dir, weights = "0.5,0.3,0.2", rulebase_file;
    std::int64_t window_ms = 180000;
    std::size_t batch_cap = 25, k_manual = 3;
    auto* alarms_an = alarms_cmd->add_subcommand("analyze", "Compress, correlate, rank and suggest per batch");
    alarms_an->add_option("--in", in_file, "Alarm records, one JSON object per line")->required();
    alarms_an->add_option("--manual", manual_dir, "Manual directory (default <data>/manual)");
    alarms_an->add_option("--weights", weights, "severity,frequency,correlation")->capture_default_str();
    alarms_an->add_option("--rulebase", rulebase_file, "Correlation rulebase (default <data>/rulebase.json)");
    alarms_an->add_option("--window-ms", window_ms, "Batch window")->capture_default_str();
    alarms_an->add_option("--cap", batch_cap, "Batch size cap")->capture_default_str();
    alarms_an->add_option("--k", k_manual, "Manual chunks for the suggestion")->capture_default_str();

    // rag
    auto* rag_cmd = app.add_subcommand("rag", "Retrieval store")->require_subcommand(1);
    std::string dir, kind = "manual", store_file;
    std::size_t max_tokens = 200, overlap = 40, k_hits = 3;
    std::vector<std::string> query_words;
    auto* rag_index = rag_cmd->add_subcommand("index", "Chunk, embed and store a document directory");
    rag_index->add_option("--dir", dir, "Document directory")->required();
    rag_index->add_option("--kind", kind, "manual or knowledge")->capture_default_str();
    rag_index->add_option("--out", out_file, "Store file")->required();
    rag_index->add_option("--max-tokens", max_tokens, "Chunk size")->capture_default_str();
    rag_index->add_option("--overlap", overlap, "Chunk overlap")->capture_default_str();
    auto* rag_query = rag_cmd->add_subcommand("query", "Top-k chunks for a query");
    rag_query->add_option("--store", store_file, "Store file")->required();
    rag_query->add_option("--k", k_hits, "Hits")->capture_default_str();
    rag_query->add_option("text", query_words, "Query text")->required();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluation harness")->require_subcommand(1);
    std::vector<std::string> tasks = {"all"}, conditions = {"all"};
    std::size_t n_per_cell = 20;
    std::uint64_t eval_seed = 11;
    std::string eval_topo = "conus_synthetic", out_dir = "report", backend_url;
    auto* eval_run = eval_cmd->add_subcommand("run", "Run the task x condition matrix");
    eval_run->add_option("--tasks", tasks, "Task names or 'all'")->delimiter(',')->capture_default_str();
    eval_run->add_option("--conditions", conditions, "Condition names or 'all'")->delimiter(',')->capture_default_str();
    eval_run->add_option("--n", n_per_cell, "Scenarios per cell")->capture_default_str();
    eval_run->add_option("--seed", eval_seed, "Seed")->capture_default_str();
    eval_run->add_option("--topo", eval_topo, "Topology name for the optimization family")->capture_default_str();
    eval_run->add_option("--out", out_dir, "Report directory")->capture_default_str();
    eval_run->add_option("--backend-url", backend_url, "Chat-completions endpoint instead of the scripted backend");

    // agent
    auto* agent_cmd = app.add_subcommand("agent", "Operator agent")->require_subcommand(1);
    std::string alarms_file, decision = "ask";
    bool jsonl = false;
    std::string chat_topo = "conus_synthetic";
    auto* chat = agent_cmd->add_subcommand("chat", "Run queries through the five-step agent (stdin when no query)");
    chat->add_option("--topo", chat_topo, "Topology name")->capture_default_str();
    chat->add_option("--demands", demands_file, "Service demands (JSON array)");
    chat->add_option("--alarms", alarms_file, "Alarm records (JSONL)");
    chat->add_option("--approval", decision, "ask, approve or reject")
        ->check(CLI::IsMember({"ask", "approve", "reject"}))
        ->capture_default_str();
    chat->add_flag("--jsonl", jsonl, "Print step records as JSON lines");
    chat->add_option("--backend-url", backend_url, "Chat-completions endpoint instead of the scripted backend");
    chat->add_option("query", query_words, "Query text");

    // serve
    std::string config_file, state_dir, host;
    int port = -1;
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP/SSE gateway");
    serve_cmd->add_option("--config", config_file, "JSON config file");
    serve_cmd->add_option("--port", port, "Port (overrides config and ONET_PORT)");
    serve_cmd->add_option("--host", host, "Bind address");
    serve_cmd->add_option("--state-dir", state_dir, "Session and report store");

    // api
    std::string server = "http://127.0.0.1:8080", method, path, body, token;
    auto* api = app.add_subcommand("api", "Call a gateway endpoint, e.g. api POST /api/sessions -d '{...}'");
    api->add_option("method", method, "GET or POST")->required();
    api->add_option("path", path, "Endpoint path with query string")->required();
    api->add_option("-d,--data", body, "Request body, or @file");
    api->add_option("--server", server, "Gateway base URL")->capture_default_str();
    api->add_option("--token", token, "Bearer token (default ONET_TOKEN)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*topo_gen) {
            const auto t = generate_synthetic_topology(n_nodes, n_links, topo_seed);
            if (out_file.empty()) std::cout << dump_topology(t);
            else save_topology(t, out_file);
        } else if (*topo_validate) {
            const auto t = load_topology(in_file);
            print({{"file", in_file}, {"valid", true}, {"nodes", t.nodes.size()}, {"links", t.links.size()}});
        } else if (*qot_est) {
            const auto t = load_topology(topo_file);
            const auto m = parse_modulation(modulation);
            if (!m) throw ConfigError("unknown modulation '" + modulation + "'");
            std::vector<std::string> nodes;
            for (const auto& n : split(route, ',')) nodes.push_back(trim(n));
            print(qot::to_json(qot::estimate_gsnr(route_links(t, nodes), {{channel, units::dbm_to_w(power_dbm)}}, t.grid, {}, *m)));
        } else if (*prov || *analyze || *optimize) {
            const auto t = load_topology(topo_file);
            const auto demands = load_demands(demands_file);
            const auto alloc = netops::provision(demands, t, k_paths);
            if (*prov) {
                print(netops::to_json(alloc));
            } else if (*analyze) {
                print(netops::to_json(netops::analyze_network(alloc, netops::carried_gsnr(t, demands, alloc))));
            } else {
                netops::OptimizerConfig oc;
                oc.step_db = step_db;
                oc.max_rounds = max_rounds;
                print(netops::to_json(netops::optimize_launch_power(demands, t, alloc, oc)));
            }
        } else if (*alarms_an) {
            const auto w = parse_weights(weights);
            alarms::PriorityConfig pc;
            pc.weights = {w[0], w[1], w[2]};
            pc.check();
            const auto rb = alarms::load_rulebase(rulebase_file.empty() ? data + "/rulebase.json" : rulebase_file);
            rag::VectorStore manual;
            rag::index_documents(manual, rag::load_directory(manual_dir.empty() ? data + "/manual" : manual_dir,
                                                             rag::DocKind::manual));
            json batches = json::array();
            for (const auto& b : alarms::window_batches(alarms::load_alarms(in_file), window_ms, batch_cap))
                batches.push_back(alarms::to_json(alarms::analyze_batch(b, rag::embed, rb, pc, manual.retriever(), k_manual)));
            print({{"batches", batches}});
        } else if (*rag_index) {
            rag::VectorStore store;
            const auto n = rag::index_documents(store, rag::load_directory(dir, rag::parse_doc_kind(kind)), max_tokens, overlap);
            store.save(out_file);
            print({{"store", out_file}, {"chunks", n}});
        } else if (*rag_query) {
            const auto store = rag::VectorStore::load(store_file);
            std::string q;
            for (const auto& w : query_words) q += (q.empty() ? "" : " ") + w;
            print(rag::to_json(store.retrieve(q, k_hits)));
        } else if (*eval_run) {
            json req = {{"n", n_per_cell}, {"seed", eval_seed}, {"k_paths", 3}, {"topology", eval_topo}};
            req["tasks"] = tasks.size() == 1 && tasks[0] == "all" ? json("all") : json(tasks);
            req["conditions"] = conditions.size() == 1 && conditions[0] == "all" ? json("all") : json(conditions);
            std::string topo_ref;
            const auto spec = gateway::matrix_spec_from_json(req, &topo_ref);
            gateway::GatewayConfig cfg;
            cfg.resource_dir = data;
            if (!backend_url.empty()) {
                cfg.backend.kind = "http";
                cfg.backend.http.url = backend_url;
            }
            const auto factory = gateway::make_backend_factory(cfg);
            const auto wb = agent::Workbench::load(data);
            const auto t = load_topology(data + "/topologies/" + topo_ref + ".topo");
            const auto t0 = std::chrono::steady_clock::now();
            const auto rep = eval::run_matrix(spec, *wb, t, [&](eval::Condition) { return factory(); });
            const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            eval::write_report(rep, out_dir);
            std::cout << eval::report_csv(rep);
            std::cerr << rep.rows.size() << " situations in " << secs << " s; report digest " << eval::report_digest(rep)
                      << "; written to " << out_dir << "\n";
        } else if (*chat) {
            return agent_chat(data, chat_topo, demands_file, alarms_file, query_words, decision, jsonl, backend_url);
        } else if (*serve_cmd) {
            auto cfg = config_file.empty() ? gateway::GatewayConfig{} : gateway::load_config(config_file);
            if (config_file.empty()) cfg.resource_dir = data;
            gateway::apply_env(cfg);
            if (port >= 0) cfg.port = port;
            if (!host.empty()) cfg.host = host;
            if (!state_dir.empty()) cfg.state_dir = state_dir;
            return serve(cfg);
        } else if (*api) {
            if (token.empty())
                if (const char* t = std::getenv("ONET_TOKEN")) token = t;
            return api_call(server, method, path, body, token);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
