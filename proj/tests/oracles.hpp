#ifndef ONET_TEST_ORACLES_HPP
#define ONET_TEST_ORACLES_HPP

// Independent reference implementations used by the unit tests and the
// acceptance binary. None of them call into the code under test beyond
// plain data accessors.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include <onet/alarms.hpp>
#include <onet/netops.hpp>
#include <onet/rag.hpp>

namespace onet::oracle {

// --- GN closed forms in long double ------------------------------------------

namespace gn {

inline constexpr long double kPlanck = 6.62607015e-34L;
inline constexpr long double kPi = 3.141592653589793238462643383279502884L;

inline long double alpha(long double atten_db_per_km) { return atten_db_per_km / (10.0L * std::log10(std::exp(1.0L))); }

inline long double l_eff(long double atten, long double length) {
    const long double a = alpha(atten);
    return (1.0L - std::exp(-a * length)) / a;
}

inline long double ase(long double nf_db, long double gain_db, long double nu, long double bref) {
    return kPlanck * nu * std::pow(10.0L, nf_db / 10.0L) * (std::pow(10.0L, gain_db / 10.0L) - 1.0L) * bref;
}

inline long double nli(long double gamma, long double atten, long double length, long double beta2_ps2,
                       long double p, long double bch, long double bwdm) {
    const long double le = l_eff(atten, length);
    const long double lea = 1.0L / alpha(atten);
    const long double b2 = std::fabs(beta2_ps2) * 1e-24L;
    const long double x = kPi * kPi / 2.0L * b2 * lea * bwdm * bwdm;
    const long double asinh_x = std::log(x + std::sqrt(x * x + 1.0L));
    const long double g = p / bch;
    return 8.0L / 27.0L * gamma * gamma * le * le * g * g * g * bch * asinh_x / (kPi * b2 * lea);
}

}  // namespace gn

// --- routing and first-fit -----------------------------------------------------

struct OraclePath {
    std::vector<std::string> nodes;
    double length;
};

inline double pair_length(const NetworkTopology& t, const std::string& a, const std::string& b) {
    for (const auto& l : t.links)
        if ((l.from == a && l.to == b) || (l.from == b && l.to == a)) return l.length_km();
    return -1.0;
}

/// Every simple path by depth-first enumeration, ranked by (length, nodes).
inline std::vector<OraclePath> all_simple_paths(const NetworkTopology& t, const std::string& src,
                                                const std::string& dst) {
    std::vector<OraclePath> out;
    std::vector<std::string> cur{src};
    std::function<void(double)> dfs = [&](double len) {
        if (cur.back() == dst) {
            out.push_back({cur, len});
            return;
        }
        for (const auto& n : t.nodes) {
            if (std::find(cur.begin(), cur.end(), n.id) != cur.end()) continue;
            const double w = pair_length(t, cur.back(), n.id);
            if (w < 0) continue;
            cur.push_back(n.id);
            dfs(len + w);
            cur.pop_back();
        }
    };
    dfs(0.0);
    std::sort(out.begin(), out.end(), [](const OraclePath& a, const OraclePath& b) {
        return a.length != b.length ? a.length < b.length : a.nodes < b.nodes;
    });
    return out;
}

struct FirstFitResult {
    bool blocked;
    std::vector<std::string> route;
    std::size_t channel;
};

/// Straightforward first-fit simulation keyed by node pairs.
inline std::vector<FirstFitResult> brute_first_fit(const NetworkTopology& t, const std::vector<ServiceDemand>& ds,
                                                   std::size_t k, std::size_t n_ch) {
    std::map<std::pair<std::string, std::string>, std::vector<bool>> busy;
    auto key = [](std::string a, std::string b) { return a < b ? std::pair{a, b} : std::pair{b, a}; };
    std::vector<FirstFitResult> out;
    for (const auto& d : ds) {
        auto paths = all_simple_paths(t, d.src, d.dst);
        if (paths.size() > k) paths.resize(k);
        FirstFitResult r{true, {}, 0};
        for (const auto& p : paths) {
            for (std::size_t ch = 0; ch < n_ch && r.blocked; ++ch) {
                bool ok = true;
                for (std::size_t i = 0; i + 1 < p.nodes.size(); ++i) {
                    auto& v = busy[key(p.nodes[i], p.nodes[i + 1])];
                    v.resize(n_ch, false);
                    ok = ok && !v[ch];
                }
                if (!ok) continue;
                for (std::size_t i = 0; i + 1 < p.nodes.size(); ++i) busy[key(p.nodes[i], p.nodes[i + 1])][ch] = true;
                r = {false, p.nodes, ch};
            }
            if (!r.blocked) break;
        }
        out.push_back(r);
    }
    return out;
}

// --- alarm priority ------------------------------------------------------------

struct Score {
    double sev, freq, corr, score;
};

/// Recomputes each term from the raw events and matrix with its own severity
/// table; entries are looked up by key.
inline std::map<alarms::EventKey, Score> priority_scores(const std::vector<alarms::CompressedEvent>& ev,
                                                         const alarms::Matrix& m) {
    const double table[4] = {0.25, 0.5, 0.75, 1.0};
    double maxc = 0;
    for (const auto& e : ev) maxc = std::max(maxc, static_cast<double>(e.count));
    std::map<alarms::EventKey, Score> out;
    for (std::size_t i = 0; i < ev.size(); ++i) {
        Score o{};
        o.sev = table[static_cast<int>(ev[i].max_severity)];
        o.freq = static_cast<double>(ev[i].count) / maxc;
        double s = 0;
        for (std::size_t j = 0; j < ev.size(); ++j) s += (i == j) ? 0.0 : m[i][j];
        o.corr = ev.size() > 1 ? s / static_cast<double>(ev.size() - 1) : 0.0;
        o.score = 100.0 * (0.5 * o.sev + 0.3 * o.freq + 0.2 * o.corr);
        out[ev[i].key] = o;
    }
    return out;
}

// --- retrieval -------------------------------------------------------------------

inline const std::vector<std::string>& vocabulary() {
    static const std::vector<std::string> v = {
        "edfa", "gain", "tilt", "noise", "figure", "span", "loss", "fiber", "launch", "power", "osnr", "gsnr",
        "ber", "fec", "los", "lof", "alarm", "laser", "bias", "current", "temperature", "wavelength", "channel",
        "route", "otn", "oms", "ots", "client", "frame", "signal", "degrade", "threshold", "card", "port",
        "reboot", "replace", "clean", "connector", "check", "patch"};
    return v;
}

inline std::string random_text(Rng& rng, std::size_t n) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + rng.pick(vocabulary());
    return s;
}

using Hit = std::tuple<std::string, std::size_t, double>;

/// Exhaustive scan: score everything with a separately written cosine, sort
/// the whole list, take the first k.
inline std::vector<Hit> brute_force_retrieve(const rag::VectorStore& store, const std::string& q, std::size_t k) {
    const auto qv = rag::embed(q);
    std::vector<Hit> all;
    for (const auto& [chunk, v] : store.entries()) {
        double dot = 0, nq = 0, nv = 0;
        for (std::size_t i = 0; i < rag::kEmbeddingDim; ++i) {
            dot += qv[i] * v[i];
            nq += qv[i] * qv[i];
            nv += v[i] * v[i];
        }
        const double s = (nq == 0 || nv == 0) ? 0.0 : dot / (std::sqrt(nq) * std::sqrt(nv));
        all.emplace_back(chunk.doc_id, chunk.seq, s);
    }
    std::sort(all.begin(), all.end(), [](const Hit& a, const Hit& b) {
        if (std::get<2>(a) != std::get<2>(b)) return std::get<2>(a) > std::get<2>(b);
        if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) < std::get<0>(b);
        return std::get<1>(a) < std::get<1>(b);
    });
    if (all.size() > k) all.resize(k);
    return all;
}

}  // namespace onet::oracle

#endif
