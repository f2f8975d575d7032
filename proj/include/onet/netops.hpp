#ifndef ONET_NETOPS_HPP
#define ONET_NETOPS_HPP

#include <map>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "netmodel.hpp"
#include "qot.hpp"

namespace onet::netops {

class NoPathError : public Error {
  public:
    using Error::Error;
};

class ConsistencyError : public Error {
  public:
    using Error::Error;
};

class NoCarriedDemandError : public Error {
  public:
    using Error::Error;
};

struct Path {
    std::vector<std::string> nodes;
    double length_km = 0.0;

    // Total order used everywhere paths are ranked: length, then node sequence.
    bool operator<(const Path& o) const {
        if (length_km != o.length_km) return length_km < o.length_km;
        return nodes < o.nodes;
    }
    bool operator==(const Path& o) const { return nodes == o.nodes && length_km == o.length_km; }
};

// ---------------------------------------------------------------------------
// Routing

namespace detail {

using Adjacency = std::map<std::string, std::vector<std::pair<std::string, double>>>;
using EdgeKey = std::pair<std::string, std::string>;

inline Adjacency adjacency(const NetworkTopology& t) {
    Adjacency adj;
    for (const auto& n : t.nodes) adj[n.id];
    for (const auto& l : t.links) {
        const double len = l.length_km();
        adj[l.from].emplace_back(l.to, len);
        adj[l.to].emplace_back(l.from, len);
    }
    return adj;
}

inline double edge_length(const Adjacency& adj, const std::string& a, const std::string& b) {
    for (const auto& [nb, w] : adj.at(a))
        if (nb == b) return w;
    throw DomainError("no edge " + a + "-" + b);
}

inline EdgeKey edge_key(const std::string& a, const std::string& b) { return a < b ? EdgeKey{a, b} : EdgeKey{b, a}; }

// Label-setting search where each label is a full path and labels compare by
// (length, node sequence). Lengths accumulate hop by hop from the prefix so
// every path's length is the same left-to-right sum regardless of how it was
// discovered.
inline std::optional<Path> best_path(const Adjacency& adj, Path prefix, const std::string& dst,
                                     const std::set<std::string>& banned_nodes, const std::set<EdgeKey>& banned_edges) {
    auto worse = [](const Path& a, const Path& b) { return b < a; };
    std::priority_queue<Path, std::vector<Path>, decltype(worse)> open(worse);
    std::set<std::string> settled;
    open.push(std::move(prefix));
    while (!open.empty()) {
        Path cur = open.top();
        open.pop();
        const auto& at = cur.nodes.back();
        if (!settled.insert(at).second) continue;
        if (at == dst) return cur;
        for (const auto& [nb, w] : adj.at(at)) {
            if (settled.count(nb) || banned_nodes.count(nb) || banned_edges.count(edge_key(at, nb))) continue;
            if (std::find(cur.nodes.begin(), cur.nodes.end(), nb) != cur.nodes.end()) continue;
            Path next = cur;
            next.nodes.push_back(nb);
            next.length_km = cur.length_km + w;
            open.push(std::move(next));
        }
    }
    return std::nullopt;
}

}  // namespace detail

/// Up to k loopless paths ordered by (total length, node sequence); Yen's
/// deviation scheme over the same total order.
inline std::vector<Path> k_shortest_paths(const NetworkTopology& t, const std::string& src, const std::string& dst,
                                          std::size_t k) {
    if (src == dst) throw DomainError("k_shortest_paths: src equals dst");
    if (k == 0) throw DomainError("k_shortest_paths: k must be >= 1");
    if (!t.has_node(src) || !t.has_node(dst)) throw NoPathError("unknown endpoint " + src + " or " + dst);
    const auto adj = detail::adjacency(t);
    auto first = detail::best_path(adj, Path{{src}, 0.0}, dst, {}, {});
    if (!first) throw NoPathError("no path from " + src + " to " + dst);

    std::vector<Path> accepted{*first};
    std::set<Path> candidates;
    while (accepted.size() < k) {
        const auto& prev = accepted.back();
        for (std::size_t i = 0; i + 1 < prev.nodes.size(); ++i) {
            Path root;
            root.nodes.assign(prev.nodes.begin(), prev.nodes.begin() + static_cast<std::ptrdiff_t>(i) + 1);
            for (std::size_t h = 0; h < i; ++h) root.length_km += detail::edge_length(adj, root.nodes[h], root.nodes[h + 1]);
            std::set<detail::EdgeKey> banned_edges;
            for (const auto& p : accepted) {
                if (p.nodes.size() > i + 1 && std::equal(root.nodes.begin(), root.nodes.end(), p.nodes.begin()))
                    banned_edges.insert(detail::edge_key(p.nodes[i], p.nodes[i + 1]));
            }
            std::set<std::string> banned_nodes(root.nodes.begin(), root.nodes.end() - 1);
            if (auto spur = detail::best_path(adj, root, dst, banned_nodes, banned_edges)) {
                if (std::find(accepted.begin(), accepted.end(), *spur) == accepted.end())
                    candidates.insert(std::move(*spur));
            }
        }
        if (candidates.empty()) break;
        accepted.push_back(*candidates.begin());
        candidates.erase(candidates.begin());
    }
    return accepted;
}

// ---------------------------------------------------------------------------
// Spectrum assignment

/// Occupied channel indices per link id.
struct SpectrumState {
    std::map<std::string, std::set<std::size_t>> occupied;

    bool free_on(const std::vector<std::string>& link_ids, std::size_t ch) const {
        for (const auto& id : link_ids) {
            auto it = occupied.find(id);
            if (it != occupied.end() && it->second.count(ch)) return false;
        }
        return true;
    }

    std::size_t occupied_count() const {
        std::size_t n = 0;
        for (const auto& [_, s] : occupied) n += s.size();
        return n;
    }

    bool operator==(const SpectrumState&) const = default;
};

struct Assignment {
    std::string demand_id;
    bool blocked = true;
    std::vector<std::string> route;  // node ids
    std::size_t channel = 0;
};

struct AllocationReport {
    std::vector<Assignment> assignments;
    double blocking_probability = 0.0;
    double utilization = 0.0;
    std::map<std::string, double> link_utilization;

    const Assignment* find(const std::string& demand_id) const {
        for (const auto& a : assignments)
            if (a.demand_id == demand_id) return &a;
        return nullptr;
    }
};

inline std::vector<std::string> path_link_ids(const NetworkTopology& t, const std::vector<std::string>& nodes) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) ids.push_back(t.find_link(nodes[i], nodes[i + 1])->id);
    return ids;
}

inline void fill_metrics(AllocationReport& r, const NetworkTopology& t, const SpectrumState& state) {
    const auto n_ch = channel_count(t.grid);
    std::size_t blocked = 0;
    for (const auto& a : r.assignments) blocked += a.blocked ? 1 : 0;
    r.blocking_probability =
        r.assignments.empty() ? 0.0 : static_cast<double>(blocked) / static_cast<double>(r.assignments.size());
    const double slots = static_cast<double>(t.links.size()) * static_cast<double>(n_ch);
    r.utilization = slots > 0 ? static_cast<double>(state.occupied_count()) / slots : 0.0;
    r.link_utilization.clear();
    for (const auto& l : t.links) {
        auto it = state.occupied.find(l.id);
        const double used = it == state.occupied.end() ? 0.0 : static_cast<double>(it->second.size());
        r.link_utilization[l.id] = n_ch ? used / static_cast<double>(n_ch) : 0.0;
    }
}

/// First-fit RWA in input order: for each demand try its k shortest routes in
/// order and take the lowest channel free on every link of the route.
inline AllocationReport provision(const std::vector<ServiceDemand>& demands, const NetworkTopology& t, std::size_t k,
                                  SpectrumState& state) {
    if (demands.empty()) throw DomainError("provision: no demands");
    const auto n_ch = channel_count(t.grid);
    AllocationReport r;
    for (const auto& d : demands) {
        Assignment a;
        a.demand_id = d.id;
        std::vector<Path> routes;
        try {
            routes = k_shortest_paths(t, d.src, d.dst, k);
        } catch (const NoPathError&) {
        }
        for (const auto& p : routes) {
            const auto ids = path_link_ids(t, p.nodes);
            for (std::size_t ch = 0; ch < n_ch; ++ch) {
                if (!state.free_on(ids, ch)) continue;
                for (const auto& id : ids) state.occupied[id].insert(ch);
                a.blocked = false;
                a.route = p.nodes;
                a.channel = ch;
                break;
            }
            if (!a.blocked) break;
        }
        r.assignments.push_back(std::move(a));
    }
    fill_metrics(r, t, state);
    return r;
}

inline AllocationReport provision(const std::vector<ServiceDemand>& demands, const NetworkTopology& t,
                                  std::size_t k = 3) {
    SpectrumState state;
    return provision(demands, t, k, state);
}

inline json to_json(const SpectrumState& s) {
    json j = json::object();
    for (const auto& [id, chans] : s.occupied) j[id] = std::vector<std::size_t>(chans.begin(), chans.end());
    return j;
}

inline json to_json(const AllocationReport& r) {
    json rows = json::array();
    for (const auto& a : r.assignments) {
        json row = {{"demand_id", a.demand_id}, {"blocked", a.blocked}};
        if (!a.blocked) {
            row["route"] = a.route;
            row["channel"] = a.channel;
        }
        rows.push_back(row);
    }
    return {{"assignments", rows},
            {"blocking_probability", r.blocking_probability},
            {"utilization", r.utilization},
            {"link_utilization", r.link_utilization}};
}

inline AllocationReport allocation_from_json(const json& j) {
    onet::detail::Reader r(j, "allocation");
    r.allow_only({"assignments", "blocking_probability", "utilization", "link_utilization"});
    AllocationReport out;
    for (const auto& row : r.arr("assignments")) {
        onet::detail::Reader a(row, r.sub("assignments"));
        a.allow_only({"demand_id", "blocked", "route", "channel"});
        Assignment x;
        x.demand_id = a.str("demand_id");
        x.blocked = a.boolean("blocked");
        if (!x.blocked) {
            x.route = a.arr("route").get<std::vector<std::string>>();
            x.channel = static_cast<std::size_t>(a.int64("channel"));
        }
        out.assignments.push_back(std::move(x));
    }
    out.blocking_probability = r.num("blocking_probability");
    out.utilization = r.num("utilization");
    out.link_utilization = r.at("link_utilization").get<std::map<std::string, double>>();
    return out;
}

// ---------------------------------------------------------------------------
// QoT of carried demands

/// GSNR report for one carried demand at the given launch power.
inline qot::GsnrReport demand_gsnr(const NetworkTopology& t, const Assignment& a, Modulation m, double power_dbm,
                                   const qot::ModulationThresholds& thr) {
    return qot::estimate_gsnr(route_links(t, a.route), {{a.channel, units::dbm_to_w(power_dbm)}}, t.grid, thr, m);
}

inline std::map<std::string, qot::GsnrReport> carried_gsnr(const NetworkTopology& t,
                                                           const std::vector<ServiceDemand>& demands,
                                                           const AllocationReport& r,
                                                           const qot::ModulationThresholds& thr = {},
                                                           const std::map<std::string, double>& power_override = {}) {
    std::map<std::string, qot::GsnrReport> out;
    for (const auto& d : demands) {
        const auto* a = r.find(d.id);
        if (!a || a->blocked) continue;
        auto it = power_override.find(d.id);
        out.emplace(d.id, demand_gsnr(t, *a, d.modulation, it == power_override.end() ? d.launch_power_dbm : it->second, thr));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Network analysis

enum class FindingKind { NEGATIVE_MARGIN, LOW_MARGIN, BLOCKED_DEMAND, CONGESTED_LINK };

inline std::string to_string(FindingKind k) {
    switch (k) {
        case FindingKind::NEGATIVE_MARGIN: return "NEGATIVE_MARGIN";
        case FindingKind::LOW_MARGIN: return "LOW_MARGIN";
        case FindingKind::BLOCKED_DEMAND: return "BLOCKED_DEMAND";
        case FindingKind::CONGESTED_LINK: return "CONGESTED_LINK";
    }
    return "?";
}

/// metric: margin in dB for the margin kinds, utilization fraction for
/// CONGESTED_LINK, 1 for BLOCKED_DEMAND.
struct NetworkFinding {
    FindingKind kind;
    std::string subject;
    std::string detail;
    double metric = 0.0;
};

struct AnalysisThresholds {
    double low_margin_db = 2.0;
    double congestion = 0.8;
};

inline std::vector<NetworkFinding> analyze_network(const AllocationReport& report,
                                                   const std::map<std::string, qot::GsnrReport>& gsnr,
                                                   const AnalysisThresholds& thr = {}) {
    std::vector<NetworkFinding> out;
    for (const auto& a : report.assignments) {
        if (a.blocked) {
            out.push_back({FindingKind::BLOCKED_DEMAND, a.demand_id, "no route with a continuous free channel", 1.0});
            continue;
        }
        auto it = gsnr.find(a.demand_id);
        if (it == gsnr.end()) throw ConsistencyError("no GSNR report for carried demand " + a.demand_id);
        const double m = it->second.min_margin_db();
        std::ostringstream os;
        os << "margin " << std::fixed << std::setprecision(2) << m << " dB";
        if (m < 0)
            out.push_back({FindingKind::NEGATIVE_MARGIN, a.demand_id, os.str(), m});
        else if (m < thr.low_margin_db)
            out.push_back({FindingKind::LOW_MARGIN, a.demand_id, os.str(), m});
    }
    for (const auto& [id, u] : report.link_utilization) {
        if (u > thr.congestion) {
            std::ostringstream os;
            os << "utilization " << std::fixed << std::setprecision(3) << u;
            out.push_back({FindingKind::CONGESTED_LINK, id, os.str(), u});
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const NetworkFinding& a, const NetworkFinding& b) {
        if (a.kind != b.kind) return a.kind < b.kind;
        return a.subject < b.subject;
    });
    return out;
}

inline json to_json(const std::vector<NetworkFinding>& fs) {
    json out = json::array();
    for (const auto& f : fs)
        out.push_back({{"kind", to_string(f.kind)}, {"subject", f.subject}, {"detail", f.detail}, {"metric", f.metric}});
    return out;
}

// ---------------------------------------------------------------------------
// Launch power optimization

struct OptimizerConfig {
    PowerBounds bounds{};
    double step_db = 0.5;
    std::size_t max_rounds = 50;
    qot::ModulationThresholds thresholds{};
};

struct OptimizationStep {
    std::size_t step = 0;  // 1-based count of accepted moves
    std::size_t round = 0;
    std::string demand_id;
    std::size_t channel_index = 0;
    double delta_db = 0.0;
    double power_dbm = 0.0;
    double objective_db = 0.0;
};

struct OptimizationTrace {
    double initial_objective_db = 0.0;
    std::vector<OptimizationStep> iterations;
    std::map<std::string, double> final_launch_dbm;
    double final_objective_db = 0.0;
    std::size_t rounds = 0;
};

/// Coordinate ascent on the minimum margin over all carried channels.
/// Channels are visited in channel-index order (input order breaks ties);
/// for each, +step then -step (clamped to bounds) is tried and the first
/// move that raises the objective by more than 1e-9 dB is kept.
inline OptimizationTrace optimize_launch_power(const std::vector<ServiceDemand>& demands, const NetworkTopology& t,
                                               const AllocationReport& report, const OptimizerConfig& cfg = {}) {
    if (!(cfg.step_db > 0)) throw DomainError("optimize_launch_power: step_db must be positive");
    if (!(cfg.bounds.p_min_dbm <= cfg.bounds.p_max_dbm)) throw DomainError("optimize_launch_power: invalid bounds");

    struct Var {
        const ServiceDemand* demand;
        const Assignment* assignment;
        std::vector<Link> route;
        double power_dbm;
        double margin_db;
    };
    std::vector<Var> vars;
    for (const auto& d : demands) {
        const auto* a = report.find(d.id);
        if (!a || a->blocked) continue;
        vars.push_back({&d, a, route_links(t, a->route), d.launch_power_dbm, 0.0});
    }
    if (vars.empty()) throw NoCarriedDemandError("optimize_launch_power: no carried demand");
    std::stable_sort(vars.begin(), vars.end(),
                     [](const Var& a, const Var& b) { return a.assignment->channel < b.assignment->channel; });

    auto eval = [&](const Var& v, double p_dbm) {
        const auto r = qot::estimate_gsnr(v.route, {{v.assignment->channel, units::dbm_to_w(p_dbm)}}, t.grid,
                                          cfg.thresholds, v.demand->modulation);
        return r.channels.front().margin_db;
    };
    auto objective = [&] {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& v : vars) m = std::min(m, v.margin_db);
        return m;
    };

    for (auto& v : vars) v.margin_db = eval(v, v.power_dbm);
    OptimizationTrace trace;
    trace.initial_objective_db = objective();
    double current = trace.initial_objective_db;

    for (std::size_t round = 1; round <= cfg.max_rounds; ++round) {
        trace.rounds = round;
        bool moved = false;
        for (auto& v : vars) {
            for (const double dir : {+1.0, -1.0}) {
                const double target = std::clamp(v.power_dbm + dir * cfg.step_db, cfg.bounds.p_min_dbm,
                                                 cfg.bounds.p_max_dbm);
                if (target == v.power_dbm) continue;
                const double old_margin = v.margin_db;
                v.margin_db = eval(v, target);
                const double candidate = objective();
                if (candidate > current + 1e-9) {
                    const double delta = target - v.power_dbm;
                    v.power_dbm = target;
                    current = candidate;
                    moved = true;
                    trace.iterations.push_back({trace.iterations.size() + 1, round, v.demand->id,
                                                v.assignment->channel, delta, target, current});
                    break;
                }
                v.margin_db = old_margin;
            }
        }
        if (!moved) break;
    }
    for (const auto& v : vars) trace.final_launch_dbm[v.demand->id] = v.power_dbm;
    trace.final_objective_db = current;
    return trace;
}

inline json to_json(const OptimizationTrace& tr) {
    json its = json::array();
    for (const auto& s : tr.iterations)
        its.push_back({{"step", s.step},
                       {"round", s.round},
                       {"demand_id", s.demand_id},
                       {"channel_index", s.channel_index},
                       {"delta_db", s.delta_db},
                       {"power_dbm", s.power_dbm},
                       {"objective_db", s.objective_db}});
    return {{"initial_objective_db", tr.initial_objective_db},
            {"iterations", its},
            {"final_launch_dbm", tr.final_launch_dbm},
            {"final_objective_db", tr.final_objective_db},
            {"rounds", tr.rounds}};
}

}  // namespace onet::netops

#endif  // ONET_NETOPS_HPP
