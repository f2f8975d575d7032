#ifndef ONET_NETMODEL_HPP
#define ONET_NETMODEL_HPP

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "common.hpp"

namespace onet {

class InfeasibleError : public Error {
  public:
    using Error::Error;
};

enum class Modulation { QPSK, QAM8, QAM16, QAM64 };

inline std::string to_string(Modulation m) {
    switch (m) {
        case Modulation::QPSK: return "QPSK";
        case Modulation::QAM8: return "8QAM";
        case Modulation::QAM16: return "16QAM";
        case Modulation::QAM64: return "64QAM";
    }
    return "?";
}

inline std::optional<Modulation> parse_modulation(std::string_view s) {
    const auto u = to_upper(std::string(s));
    if (u == "QPSK") return Modulation::QPSK;
    if (u == "8QAM") return Modulation::QAM8;
    if (u == "16QAM") return Modulation::QAM16;
    if (u == "64QAM") return Modulation::QAM64;
    return std::nullopt;
}

struct FiberSpan {
    std::string id;
    double length_km = 0.0;
    double atten_db_per_km = 0.0;
    double beta2_ps2_per_km = 0.0;  // sign carried, magnitude used
    double gamma_per_w_km = 0.0;

    double loss_db() const { return length_km * atten_db_per_km; }

    bool operator==(const FiberSpan&) const = default;
};

struct Amplifier {
    std::string id;
    double gain_db = 0.0;
    double nf_db = 0.0;
    double tilt_db = 0.0;  // reserved

    bool operator==(const Amplifier&) const = default;
};

using LinkElement = std::variant<FiberSpan, Amplifier>;

/// A fiber link between two nodes: span, amplifier, span, amplifier, ...
/// Declared once; the reverse direction uses the mirrored element list.
struct Link {
    std::string id;
    std::string from;
    std::string to;
    std::vector<LinkElement> elements;

    double length_km() const {
        double total = 0.0;
        for (const auto& e : elements)
            if (const auto* s = std::get_if<FiberSpan>(&e)) total += s->length_km;
        return total;
    }

    std::size_t span_count() const {
        return static_cast<std::size_t>(std::count_if(
            elements.begin(), elements.end(),
            [](const LinkElement& e) { return std::holds_alternative<FiberSpan>(e); }));
    }

    bool connects(const std::string& a, const std::string& b) const {
        return (from == a && to == b) || (from == b && to == a);
    }

    bool operator==(const Link&) const = default;
};

struct Node {
    std::string id;
    std::string label;

    bool operator==(const Node&) const = default;
};

struct Band {
    std::string name;
    double start_thz = 0.0;
    double end_thz = 0.0;

    bool operator==(const Band&) const = default;
};

struct SpectrumGrid {
    std::vector<Band> bands;
    double spacing_ghz = 100.0;
    double symbol_rate_gbd = 64.0;
    double b_ref_ghz = 12.5;

    /// C = [191.6, 196.1] THz, L = [186.1, 190.6] THz, 100 GHz spacing.
    static SpectrumGrid c_plus_l() {
        SpectrumGrid g;
        g.bands = {{"C", 191.6, 196.1}, {"L", 186.1, 190.6}};
        return g;
    }

    bool operator==(const SpectrumGrid&) const = default;
};

struct Channel {
    std::size_t index = 0;
    double center_thz = 0.0;
    std::string band;
};

struct NetworkTopology {
    std::vector<Node> nodes;
    std::vector<Link> links;
    SpectrumGrid grid = SpectrumGrid::c_plus_l();

    bool has_node(const std::string& id) const {
        return std::any_of(nodes.begin(), nodes.end(), [&](const Node& n) { return n.id == id; });
    }

    const Link* find_link(const std::string& a, const std::string& b) const {
        for (const auto& l : links)
            if (l.connects(a, b)) return &l;
        return nullptr;
    }

    bool operator==(const NetworkTopology&) const = default;
};

struct ServiceDemand {
    std::string id;
    std::string src;
    std::string dst;
    double launch_power_dbm = 0.0;
    Modulation modulation = Modulation::QPSK;

    bool operator==(const ServiceDemand&) const = default;
};

struct ValidationOptions {
    bool require_connected = true;
    bool transparent = true;  // amplifier gain must equal preceding span loss
    double nf_floor_db = 3.0;
    double transparency_tol_db = 1e-9;
};

// ---------------------------------------------------------------------------
// Spectrum grid

inline std::size_t band_channel_count(const Band& b, double spacing_ghz) {
    const double n = (b.end_thz - b.start_thz) * 1e3 / spacing_ghz;
    // absorb representation error of decimal band edges (45.0 may come out 44.999...)
    return n <= 0.0 ? 0 : static_cast<std::size_t>(std::floor(n + 1e-6));
}

/// Channels of every band, ascending by center frequency, indexed from 0.
/// Centers sit at band_start + spacing/2 + k*spacing.
inline std::vector<Channel> grid_channels(const SpectrumGrid& grid) {
    std::vector<Channel> out;
    const double spacing_thz = grid.spacing_ghz * 1e-3;
    for (const auto& band : grid.bands) {
        const auto n = band_channel_count(band, grid.spacing_ghz);
        for (std::size_t k = 0; k < n; ++k)
            out.push_back({0, band.start_thz + spacing_thz * (0.5 + static_cast<double>(k)), band.name});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const Channel& a, const Channel& b) { return a.center_thz < b.center_thz; });
    for (std::size_t i = 0; i < out.size(); ++i) out[i].index = i;
    return out;
}

inline std::size_t channel_count(const SpectrumGrid& grid) {
    std::size_t n = 0;
    for (const auto& b : grid.bands) n += band_channel_count(b, grid.spacing_ghz);
    return n;
}

/// Occupied WDM bandwidth in Hz (channel count times spacing).
inline double total_wdm_bandwidth(const SpectrumGrid& grid) {
    return static_cast<double>(channel_count(grid)) * grid.spacing_ghz * 1e9;
}

inline std::vector<std::string> check_grid(const SpectrumGrid& g) {
    std::vector<std::string> v;
    if (!(g.spacing_ghz > 0)) v.push_back("grid.spacing_ghz must be positive");
    if (!(g.symbol_rate_gbd > 0)) v.push_back("grid.symbol_rate_gbd must be positive");
    if (!(g.b_ref_ghz > 0)) v.push_back("grid.b_ref_ghz must be positive");
    if (g.spacing_ghz < g.symbol_rate_gbd) v.push_back("grid.spacing_ghz must be >= symbol_rate_gbd");
    for (std::size_t i = 0; i < g.bands.size(); ++i) {
        const auto& a = g.bands[i];
        if (!(a.end_thz > a.start_thz)) v.push_back("band " + a.name + ": end_thz must exceed start_thz");
        for (std::size_t j = i + 1; j < g.bands.size(); ++j) {
            const auto& b = g.bands[j];
            if (a.start_thz < b.end_thz && b.start_thz < a.end_thz)
                v.push_back("bands " + a.name + " and " + b.name + " overlap");
        }
    }
    return v;
}

// ---------------------------------------------------------------------------
// Links

/// The link as traversed starting at `start`; the reverse direction mirrors
/// the (span, amplifier) pairs so each amplifier still follows its span.
inline Link oriented(const Link& link, const std::string& start) {
    if (link.from == start) return link;
    if (link.to != start) throw DomainError("link " + link.id + " does not touch node " + start);
    Link r;
    r.id = link.id;
    r.from = link.to;
    r.to = link.from;
    const auto& e = link.elements;
    for (std::size_t i = e.size(); i >= 2; i -= 2) {
        r.elements.push_back(e[i - 2]);
        r.elements.push_back(e[i - 1]);
    }
    return r;
}

/// Links along a node path, each oriented in travel direction.
inline std::vector<Link> route_links(const NetworkTopology& topo, const std::vector<std::string>& path) {
    std::vector<Link> out;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        const auto* l = topo.find_link(path[i], path[i + 1]);
        if (!l) throw NotFoundError("no link between " + path[i] + " and " + path[i + 1]);
        out.push_back(oriented(*l, path[i]));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Validation

inline bool is_connected(const NetworkTopology& t) {
    if (t.nodes.empty()) return true;
    std::map<std::string, std::vector<std::string>> adj;
    for (const auto& l : t.links) {
        adj[l.from].push_back(l.to);
        adj[l.to].push_back(l.from);
    }
    std::set<std::string> seen{t.nodes.front().id};
    std::vector<std::string> stack{t.nodes.front().id};
    while (!stack.empty()) {
        auto cur = stack.back();
        stack.pop_back();
        for (const auto& nb : adj[cur])
            if (seen.insert(nb).second) stack.push_back(nb);
    }
    return seen.size() == t.nodes.size();
}

inline std::vector<std::string> check_topology(const NetworkTopology& t, const ValidationOptions& opt = {}) {
    std::vector<std::string> v;
    std::set<std::string> node_ids;
    for (const auto& n : t.nodes) {
        if (n.id.empty()) v.push_back("node with empty id");
        if (!node_ids.insert(n.id).second) v.push_back("duplicate node id " + n.id);
    }
    std::set<std::string> link_ids;
    std::set<std::pair<std::string, std::string>> pairs;
    for (const auto& l : t.links) {
        const std::string where = "link " + l.id;
        if (!link_ids.insert(l.id).second) v.push_back("duplicate link id " + l.id);
        for (const auto* end : {&l.from, &l.to})
            if (!node_ids.count(*end)) v.push_back(where + " references unknown node " + *end);
        if (l.from == l.to) v.push_back(where + " is a self-loop");
        if (!pairs.insert(std::minmax(l.from, l.to)).second)
            v.push_back(where + " duplicates an existing connection " + l.from + "-" + l.to);
        if (l.elements.empty() || l.elements.size() % 2 != 0)
            v.push_back(where + " must alternate span, amplifier with at least one span");
        const FiberSpan* prev_span = nullptr;
        for (std::size_t i = 0; i < l.elements.size(); ++i) {
            const auto& e = l.elements[i];
            const bool want_span = i % 2 == 0;
            if (std::holds_alternative<FiberSpan>(e) != want_span) {
                v.push_back(where + " element " + std::to_string(i) + " breaks span/amplifier alternation");
                prev_span = nullptr;
                continue;
            }
            if (const auto* s = std::get_if<FiberSpan>(&e)) {
                if (!(s->length_km > 0)) v.push_back(where + " span " + s->id + ": length_km must be > 0");
                if (!(s->atten_db_per_km > 0))
                    v.push_back(where + " span " + s->id + ": atten_db_per_km must be > 0");
                if (!(s->gamma_per_w_km >= 0))
                    v.push_back(where + " span " + s->id + ": gamma_per_w_km must be >= 0");
                prev_span = s;
            } else {
                const auto& a = std::get<Amplifier>(e);
                if (!(a.gain_db >= 0)) v.push_back(where + " amplifier " + a.id + ": gain_db must be >= 0");
                if (a.gain_db > 0 && a.nf_db < opt.nf_floor_db)
                    v.push_back(where + " amplifier " + a.id + ": nf_db below floor");
                if (opt.transparent && prev_span &&
                    std::abs(a.gain_db - prev_span->loss_db()) > opt.transparency_tol_db)
                    v.push_back(where + " amplifier " + a.id + ": gain_db differs from preceding span loss");
            }
        }
    }
    for (auto& g : check_grid(t.grid)) v.push_back(std::move(g));
    if (opt.require_connected && !is_connected(t)) v.push_back("topology is not connected");
    return v;
}

inline void validate(const NetworkTopology& t, const ValidationOptions& opt = {}) {
    auto v = check_topology(t, opt);
    if (!v.empty()) throw ValidationError(std::move(v));
}

// ---------------------------------------------------------------------------
// JSON file format

inline json to_json(const FiberSpan& s) {
    return {{"kind", "span"},
            {"id", s.id},
            {"length_km", s.length_km},
            {"atten_db_per_km", s.atten_db_per_km},
            {"beta2_ps2_per_km", s.beta2_ps2_per_km},
            {"gamma_per_w_km", s.gamma_per_w_km}};
}

inline json to_json(const Amplifier& a) {
    return {{"kind", "amplifier"}, {"id", a.id}, {"gain_db", a.gain_db}, {"nf_db", a.nf_db}, {"tilt_db", a.tilt_db}};
}

inline json to_json(const SpectrumGrid& g) {
    json bands = json::array();
    for (const auto& b : g.bands) bands.push_back({{"name", b.name}, {"start_thz", b.start_thz}, {"end_thz", b.end_thz}});
    return {{"bands", bands},
            {"spacing_ghz", g.spacing_ghz},
            {"symbol_rate_gbd", g.symbol_rate_gbd},
            {"b_ref_ghz", g.b_ref_ghz}};
}

inline json to_json(const NetworkTopology& t) {
    json nodes = json::array();
    for (const auto& n : t.nodes) nodes.push_back({{"id", n.id}, {"label", n.label}});
    json links = json::array();
    for (const auto& l : t.links) {
        json elems = json::array();
        for (const auto& e : l.elements) std::visit([&](const auto& x) { elems.push_back(to_json(x)); }, e);
        links.push_back({{"id", l.id}, {"endpoints", {l.from, l.to}}, {"elements", elems}});
    }
    return {{"nodes", nodes}, {"links", links}, {"grid", to_json(t.grid)}};
}

inline SpectrumGrid grid_from_json(const json& j, const std::string& path = "grid") {
    detail::Reader r(j, path);
    r.allow_only({"bands", "spacing_ghz", "symbol_rate_gbd", "b_ref_ghz"});
    SpectrumGrid g;
    g.bands.clear();
    const auto& bands = r.arr("bands");
    for (std::size_t i = 0; i < bands.size(); ++i) {
        detail::Reader br(bands[i], path + ".bands[" + std::to_string(i) + "]");
        br.allow_only({"name", "start_thz", "end_thz"});
        g.bands.push_back({br.str("name"), br.num("start_thz"), br.num("end_thz")});
    }
    g.spacing_ghz = r.num("spacing_ghz");
    g.symbol_rate_gbd = r.num("symbol_rate_gbd");
    g.b_ref_ghz = r.num("b_ref_ghz");
    return g;
}

inline NetworkTopology topology_from_json(const json& j) {
    detail::Reader root(j, "topology");
    root.allow_only({"nodes", "links", "grid"});
    NetworkTopology t;
    const auto& nodes = root.arr("nodes");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        detail::Reader r(nodes[i], "nodes[" + std::to_string(i) + "]");
        r.allow_only({"id", "label"});
        t.nodes.push_back({r.str("id"), nodes[i].contains("label") ? r.str("label") : std::string{}});
    }
    const auto& links = root.arr("links");
    for (std::size_t i = 0; i < links.size(); ++i) {
        const std::string lp = "links[" + std::to_string(i) + "]";
        detail::Reader r(links[i], lp);
        r.allow_only({"id", "endpoints", "elements"});
        Link l;
        l.id = r.str("id");
        const auto& ends = r.arr("endpoints");
        if (ends.size() != 2 || !ends[0].is_string() || !ends[1].is_string())
            r.fail("endpoints must be a pair of node ids");
        l.from = ends[0].get<std::string>();
        l.to = ends[1].get<std::string>();
        const auto& elems = r.arr("elements");
        for (std::size_t k = 0; k < elems.size(); ++k) {
            detail::Reader er(elems[k], lp + ".elements[" + std::to_string(k) + "]");
            const auto kind = er.str("kind");
            if (kind == "span") {
                er.allow_only({"kind", "id", "length_km", "atten_db_per_km", "beta2_ps2_per_km", "gamma_per_w_km"});
                l.elements.emplace_back(FiberSpan{er.str("id"), er.num("length_km"), er.num("atten_db_per_km"),
                                                  er.num("beta2_ps2_per_km"), er.num("gamma_per_w_km")});
            } else if (kind == "amplifier") {
                er.allow_only({"kind", "id", "gain_db", "nf_db", "tilt_db"});
                l.elements.emplace_back(
                    Amplifier{er.str("id"), er.num("gain_db"), er.num("nf_db"), er.num_or("tilt_db", 0.0)});
            } else {
                er.fail("kind must be 'span' or 'amplifier'");
            }
        }
        t.links.push_back(std::move(l));
    }
    t.grid = grid_from_json(root.at("grid"));
    return t;
}

inline std::string dump_topology(const NetworkTopology& t) { return to_json(t).dump(2) + "\n"; }

inline NetworkTopology parse_topology(const std::string& text, const std::string& source = "<memory>",
                                      const ValidationOptions& opt = {}) {
    auto t = topology_from_json(detail::parse_json_text(text, source));
    validate(t, opt);
    return t;
}

inline NetworkTopology load_topology(const std::string& path, const ValidationOptions& opt = {}) {
    return parse_topology(read_file(path), path, opt);
}

inline void save_topology(const NetworkTopology& t, const std::string& path) { write_file(path, dump_topology(t)); }

// ---------------------------------------------------------------------------
// Demands

struct PowerBounds {
    double p_min_dbm = -4.0;
    double p_max_dbm = 4.0;

    bool contains(double p) const { return p >= p_min_dbm && p <= p_max_dbm; }
};

inline json to_json(const ServiceDemand& d) {
    return {{"id", d.id},
            {"src", d.src},
            {"dst", d.dst},
            {"launch_power_dbm", d.launch_power_dbm},
            {"modulation", to_string(d.modulation)}};
}

inline json to_json(const std::vector<ServiceDemand>& ds) {
    json out = json::array();
    for (const auto& d : ds) out.push_back(to_json(d));
    return out;
}

inline std::vector<ServiceDemand> demands_from_json(const json& j, const PowerBounds& bounds = {}) {
    if (!j.is_array()) throw ParseError("demands: expected array");
    std::vector<ServiceDemand> out;
    std::vector<std::string> violations;
    for (std::size_t i = 0; i < j.size(); ++i) {
        detail::Reader r(j[i], "demands[" + std::to_string(i) + "]");
        r.allow_only({"id", "src", "dst", "launch_power_dbm", "modulation"});
        ServiceDemand d{r.str("id"), r.str("src"), r.str("dst"), r.num("launch_power_dbm"), Modulation::QPSK};
        auto m = parse_modulation(r.str("modulation"));
        if (!m) r.fail("unknown modulation '" + r.str("modulation") + "'");
        d.modulation = *m;
        if (d.src == d.dst) violations.push_back("demand " + d.id + ": src equals dst");
        if (!bounds.contains(d.launch_power_dbm))
            violations.push_back("demand " + d.id + ": launch_power_dbm outside bounds");
        out.push_back(std::move(d));
    }
    if (!violations.empty()) throw ValidationError(std::move(violations));
    return out;
}

inline std::vector<ServiceDemand> load_demands(const std::string& path, const PowerBounds& bounds = {}) {
    return demands_from_json(detail::parse_json_text(read_file(path), path), bounds);
}

// ---------------------------------------------------------------------------
// Synthetic topology

struct SpanProfile {
    double length_min_km = 60.0;
    double length_max_km = 120.0;
    double atten_min_db_per_km = 0.19;
    double atten_max_db_per_km = 0.22;
    double beta2_ps2_per_km = -21.27;
    double gamma_per_w_km = 1.3;
    double amp_nf_db = 5.0;
    // Nodes are scattered over a box of this size; link span counts follow
    // from node distance.
    double area_width_km = 4500.0;
    double area_height_km = 2500.0;
};

/// Seeded random geometric graph with exactly `n_nodes` nodes and `n_links`
/// links: a nearest-predecessor spanning tree plus the shortest remaining
/// node pairs. Amplifiers are transparent.
inline NetworkTopology generate_synthetic_topology(std::size_t n_nodes, std::size_t n_links, std::uint64_t seed,
                                                   const SpanProfile& profile = {}) {
    if (n_nodes == 0) throw InfeasibleError("need at least one node");
    const std::size_t max_links = n_nodes * (n_nodes - 1) / 2;
    if (n_links + 1 < n_nodes || n_links > max_links)
        throw InfeasibleError("cannot build a connected simple graph with " + std::to_string(n_nodes) +
                              " nodes and " + std::to_string(n_links) + " links");
    Rng rng(seed);
    const auto width = std::to_string(n_nodes).size();
    auto pad = [](std::size_t v, std::size_t w) {
        auto s = std::to_string(v);
        return std::string(w > s.size() ? w - s.size() : 0, '0') + s;
    };

    NetworkTopology t;
    std::vector<std::pair<double, double>> pos;
    for (std::size_t i = 0; i < n_nodes; ++i) {
        t.nodes.push_back({"N" + pad(i + 1, width), "Node " + std::to_string(i + 1)});
        const double x = rng.uniform(0.0, profile.area_width_km);
        const double y = rng.uniform(0.0, profile.area_height_km);
        pos.emplace_back(x, y);
    }
    auto dist = [&](std::size_t a, std::size_t b) { return std::hypot(pos[a].first - pos[b].first, pos[a].second - pos[b].second); };

    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::set<std::pair<std::size_t, std::size_t>> used;
    for (std::size_t i = 1; i < n_nodes; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < i; ++j)
            if (dist(i, j) < dist(i, best)) best = j;
        edges.emplace_back(best, i);
        used.emplace(best, i);
    }
    if (edges.size() < n_links) {
        std::vector<std::tuple<double, std::size_t, std::size_t>> cand;
        for (std::size_t a = 0; a < n_nodes; ++a)
            for (std::size_t b = a + 1; b < n_nodes; ++b)
                if (!used.count({a, b})) cand.emplace_back(dist(a, b), a, b);
        std::sort(cand.begin(), cand.end());
        for (std::size_t i = 0; edges.size() < n_links; ++i) edges.emplace_back(std::get<1>(cand[i]), std::get<2>(cand[i]));
    }

    const auto lw = std::to_string(n_links).size();
    auto round_to = [](double v, double q) { return std::round(v / q) * q; };
    for (std::size_t k = 0; k < edges.size(); ++k) {
        const auto [a, b] = edges[k];
        Link l;
        l.id = "L" + pad(k + 1, lw);
        l.from = t.nodes[a].id;
        l.to = t.nodes[b].id;
        const auto n_spans = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::ceil(dist(a, b) / profile.length_max_km)));
        for (std::size_t s = 0; s < n_spans; ++s) {
            FiberSpan span;
            span.id = l.id + ".S" + std::to_string(s + 1);
            span.length_km = round_to(rng.uniform(profile.length_min_km, profile.length_max_km), 0.01);
            span.atten_db_per_km = round_to(rng.uniform(profile.atten_min_db_per_km, profile.atten_max_db_per_km), 1e-4);
            span.beta2_ps2_per_km = profile.beta2_ps2_per_km;
            span.gamma_per_w_km = profile.gamma_per_w_km;
            Amplifier amp{l.id + ".A" + std::to_string(s + 1), span.loss_db(), profile.amp_nf_db, 0.0};
            l.elements.emplace_back(std::move(span));
            l.elements.emplace_back(std::move(amp));
        }
        t.links.push_back(std::move(l));
    }
    return t;
}

}  // namespace onet

#endif  // ONET_NETMODEL_HPP
