#ifndef ONET_ALARMS_HPP
#define ONET_ALARMS_HPP

#include <algorithm>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <tuple>
#include <vector>

#include "common.hpp"
#include "rag.hpp"

namespace onet::alarms {

class DimensionError : public Error {
  public:
    using Error::Error;
};

class EmptyKnowledgeBaseError : public Error {
  public:
    using Error::Error;
};

// Numeric order is the severity order.
enum class Severity { WARNING = 0, MINOR = 1, MAJOR = 2, CRITICAL = 3 };

inline std::string to_string(Severity s) {
    switch (s) {
        case Severity::WARNING: return "WARNING";
        case Severity::MINOR: return "MINOR";
        case Severity::MAJOR: return "MAJOR";
        case Severity::CRITICAL: return "CRITICAL";
    }
    return "?";
}

inline std::optional<Severity> parse_severity(std::string_view s) {
    const auto u = to_upper(std::string(s));
    if (u == "CRITICAL") return Severity::CRITICAL;
    if (u == "MAJOR") return Severity::MAJOR;
    if (u == "MINOR") return Severity::MINOR;
    if (u == "WARNING") return Severity::WARNING;
    return std::nullopt;
}

struct Alarm {
    std::string id;
    std::int64_t ts = 0;  // ms since epoch
    Severity severity = Severity::WARNING;
    std::string alarm_type;
    std::string source_ne;
    std::string description;

    bool operator==(const Alarm&) const = default;
};

struct AlarmBatch {
    std::vector<Alarm> alarms;
    std::int64_t window_start = 0;
    std::int64_t window_end = 0;
};

struct EventKey {
    std::string alarm_type;
    std::string source_ne;

    auto operator<=>(const EventKey&) const = default;
    bool operator==(const EventKey&) const = default;
};

struct CompressedEvent {
    EventKey key;
    std::size_t count = 0;
    Severity max_severity = Severity::WARNING;
    std::int64_t first_ts = 0;
    std::int64_t last_ts = 0;
    std::string representative_description;

    bool operator==(const CompressedEvent&) const = default;
};

using Matrix = std::vector<std::vector<double>>;

struct PriorityWeights {
    double severity = 0.5;
    double frequency = 0.3;
    double correlation = 0.2;
};

struct PriorityConfig {
    PriorityWeights weights;
    std::map<Severity, double> severity_map{
        {Severity::CRITICAL, 1.0}, {Severity::MAJOR, 0.75}, {Severity::MINOR, 0.5}, {Severity::WARNING, 0.25}};

    void check() const {
        const auto& w = weights;
        if (w.severity < 0 || w.frequency < 0 || w.correlation < 0 ||
            std::abs(w.severity + w.frequency + w.correlation - 1.0) > 1e-9)
            throw ConfigError("priority weights must be non-negative and sum to 1");
        for (auto s : {Severity::CRITICAL, Severity::MAJOR, Severity::MINOR, Severity::WARNING}) {
            auto it = severity_map.find(s);
            if (it == severity_map.end() || it->second < 0 || it->second > 1)
                throw ConfigError("severity map needs a value in [0,1] for " + to_string(s));
        }
    }
};

struct PriorityEntry {
    CompressedEvent event;
    double severity_term = 0.0;
    double frequency_term = 0.0;
    double correlation_term = 0.0;
    double score = 0.0;
};

struct Suggestion {
    std::string alarm_type;
    std::string cause;
    std::vector<std::string> actions;
    std::vector<std::string> source_refs;
};

/// Pairwise correlation rules keyed by unordered type pair and same-NE flag.
class Rulebase {
  public:
    void add(const std::string& a, const std::string& b, bool same_ne, double value) {
        if (value < 0 || value > 1) throw ConfigError("rule value must lie in [0,1]");
        rules_[key(a, b, same_ne)] = value;
    }

    std::optional<double> lookup(const std::string& a, const std::string& b, bool same_ne) const {
        auto it = rules_.find(key(a, b, same_ne));
        if (it == rules_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t size() const { return rules_.size(); }

  private:
    static std::tuple<std::string, std::string, bool> key(const std::string& a, const std::string& b, bool same) {
        return a <= b ? std::tuple{a, b, same} : std::tuple{b, a, same};
    }
    std::map<std::tuple<std::string, std::string, bool>, double> rules_;
};

inline Rulebase rulebase_from_json(const json& j) {
    detail::Reader root(j, "rulebase");
    root.allow_only({"rules"});
    const auto& rules = root.arr("rules");
    Rulebase rb;
    for (std::size_t i = 0; i < rules.size(); ++i) {
        detail::Reader r(rules[i], "rules[" + std::to_string(i) + "]");
        r.allow_only({"a", "b", "same_ne", "value"});
        rb.add(r.str("a"), r.str("b"), r.boolean("same_ne"), r.num("value"));
    }
    return rb;
}

inline Rulebase load_rulebase(const std::string& path) {
    return rulebase_from_json(detail::parse_json_text(read_file(path), path));
}

inline void check_alarm(const Alarm& a) {
    std::vector<std::string> v;
    if (a.ts < 0) v.push_back("alarm " + a.id + ": ts must be >= 0");
    if (a.alarm_type.empty()) v.push_back("alarm " + a.id + ": alarm_type must be non-empty");
    if (!v.empty()) throw ValidationError(v);
}

inline bool alarm_order(const Alarm& a, const Alarm& b) { return std::tie(a.ts, a.id) < std::tie(b.ts, b.id); }

/// Greedy left-to-right packing. A batch closes when it is full or the next
/// alarm falls outside [window_start, window_start + window_ms].
inline std::vector<AlarmBatch> window_batches(std::vector<Alarm> stream, std::int64_t window_ms = 180000,
                                              std::size_t batch_cap = 25) {
    if (window_ms < 0 || batch_cap == 0) throw ConfigError("window_batches: need window_ms >= 0 and batch_cap >= 1");
    std::stable_sort(stream.begin(), stream.end(), alarm_order);
    std::vector<AlarmBatch> out;
    for (auto& a : stream) {
        if (out.empty() || out.back().alarms.size() >= batch_cap || a.ts > out.back().window_start + window_ms)
            out.push_back({{}, a.ts, a.ts + window_ms});
        out.back().alarms.push_back(std::move(a));
    }
    return out;
}

inline bool event_order(const CompressedEvent& a, const CompressedEvent& b) {
    if (a.max_severity != b.max_severity) return a.max_severity > b.max_severity;
    if (a.count != b.count) return a.count > b.count;
    if (a.first_ts != b.first_ts) return a.first_ts < b.first_ts;
    return a.key < b.key;
}

/// Groups by (alarm_type, source_ne). The representative description is the
/// text of the earliest member by (ts, id).
inline std::vector<CompressedEvent> compress(const AlarmBatch& batch) {
    std::map<EventKey, std::pair<CompressedEvent, const Alarm*>> groups;
    for (const auto& a : batch.alarms) {
        EventKey k{a.alarm_type, a.source_ne};
        auto [it, fresh] = groups.try_emplace(k);
        auto& [e, earliest] = it->second;
        if (fresh) {
            e = {k, 0, a.severity, a.ts, a.ts, a.description};
            earliest = &a;
        } else if (alarm_order(a, *earliest)) {
            earliest = &a;
            e.representative_description = a.description;
        }
        ++e.count;
        e.max_severity = std::max(e.max_severity, a.severity);
        e.first_ts = std::min(e.first_ts, a.ts);
        e.last_ts = std::max(e.last_ts, a.ts);
    }
    std::vector<CompressedEvent> out;
    for (auto& [_, g] : groups) out.push_back(std::move(g.first));
    std::sort(out.begin(), out.end(), event_order);
    return out;
}

/// c_ij = max(rule for (type_i, type_j, same NE), clamp(cosine of the
/// description embeddings, 0, 1)); unit diagonal.
inline Matrix correlate(const std::vector<CompressedEvent>& events, const rag::Embedder& embed,
                        const Rulebase& rulebase) {
    if (events.empty()) throw DomainError("correlate: no events");
    const auto n = events.size();
    std::vector<rag::EmbeddingVector> vecs;
    vecs.reserve(n);
    for (const auto& e : events) vecs.push_back(embed(e.representative_description));
    Matrix m(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        m[i][i] = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            double c = std::clamp(rag::cosine(vecs[i], vecs[j]), 0.0, 1.0);
            const bool same_ne = events[i].key.source_ne == events[j].key.source_ne;
            if (auto r = rulebase.lookup(events[i].key.alarm_type, events[j].key.alarm_type, same_ne)) c = std::max(c, *r);
            m[i][j] = m[j][i] = c;
        }
    }
    return m;
}

inline bool priority_order(const PriorityEntry& a, const PriorityEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.event.max_severity != b.event.max_severity) return a.event.max_severity > b.event.max_severity;
    if (a.event.first_ts != b.event.first_ts) return a.event.first_ts < b.event.first_ts;
    return a.event.key < b.event.key;
}

inline std::vector<PriorityEntry> priority_scores(const std::vector<CompressedEvent>& events, const Matrix& matrix,
                                                  const PriorityConfig& cfg = {}) {
    cfg.check();
    const auto n = events.size();
    if (matrix.size() != n) throw DimensionError("priority_scores: matrix has " + std::to_string(matrix.size()) +
                                                 " rows for " + std::to_string(n) + " events");
    for (const auto& row : matrix)
        if (row.size() != n) throw DimensionError("priority_scores: matrix is not square");
    std::size_t max_count = 0;
    for (const auto& e : events) max_count = std::max(max_count, e.count);

    std::vector<PriorityEntry> out;
    for (std::size_t i = 0; i < n; ++i) {
        PriorityEntry p;
        p.event = events[i];
        p.severity_term = cfg.severity_map.at(events[i].max_severity);
        p.frequency_term = static_cast<double>(events[i].count) / static_cast<double>(max_count);
        if (n > 1) {
            double sum = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) sum += matrix[i][j];
            p.correlation_term = sum / static_cast<double>(n - 1);
        }
        const auto& w = cfg.weights;
        p.score = 100.0 * (w.severity * p.severity_term + w.frequency * p.frequency_term +
                           w.correlation * p.correlation_term);
        out.push_back(std::move(p));
    }
    std::sort(out.begin(), out.end(), priority_order);
    return out;
}

namespace manual {

// Manual entries carry "Cause: ..." and "Action: ..." fields. Chunking
// flattens line breaks, so fields are delimited by the next field marker.
inline std::vector<std::pair<std::string, std::string>> fields(const std::string& text) {
    static const std::regex marker(R"((Alarm|Severity|Description|Cause|Action):)");
    std::vector<std::pair<std::string, std::string>> out;
    std::vector<std::pair<std::string, std::size_t>> found;
    std::vector<std::size_t> ends;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), marker); it != std::sregex_iterator(); ++it) {
        found.emplace_back((*it)[1].str(), static_cast<std::size_t>(it->position() + it->length()));
        ends.push_back(static_cast<std::size_t>(it->position()));
    }
    for (std::size_t i = 0; i < found.size(); ++i) {
        const auto end = i + 1 < found.size() ? ends[i + 1] : text.size();
        out.emplace_back(found[i].first, trim(std::string_view(text).substr(found[i].second, end - found[i].second)));
    }
    return out;
}

}  // namespace manual

/// Retrieval-grounded suggestion: cause from the best-ranked manual chunk
/// that states one, actions collected across the top-k chunks.
inline Suggestion suggest(const PriorityEntry& top, const rag::Retriever& retriever, std::size_t k = 3) {
    if (k == 0) throw ConfigError("suggest: k must be >= 1");
    const auto query = top.event.key.alarm_type + " " + top.event.representative_description;
    const auto hits = retriever(query, k);
    if (hits.empty()) throw EmptyKnowledgeBaseError("suggest: the alarm manual index is empty");
    Suggestion s;
    s.alarm_type = top.event.key.alarm_type;
    for (const auto& h : hits) {
        s.source_refs.push_back(h.chunk.ref());
        for (const auto& [field, value] : manual::fields(h.chunk.text)) {
            if (value.empty()) continue;
            if (field == "Cause" && s.cause.empty()) s.cause = value;
            if (field == "Action" && std::find(s.actions.begin(), s.actions.end(), value) == s.actions.end())
                s.actions.push_back(value);
        }
    }
    return s;
}

struct BatchAnalysis {
    std::vector<CompressedEvent> events;
    Matrix correlation;
    std::vector<PriorityEntry> ranking;
    std::optional<Suggestion> suggestion;
};

/// compress, correlate, rank, then suggest for the top entry when a
/// retriever is supplied.
inline BatchAnalysis analyze_batch(const AlarmBatch& batch, const rag::Embedder& embed, const Rulebase& rulebase,
                                   const PriorityConfig& cfg = {}, const rag::Retriever& retriever = {},
                                   std::size_t k = 3) {
    BatchAnalysis out;
    out.events = compress(batch);
    if (out.events.empty()) return out;
    out.correlation = correlate(out.events, embed, rulebase);
    out.ranking = priority_scores(out.events, out.correlation, cfg);
    if (retriever) out.suggestion = suggest(out.ranking.front(), retriever, k);
    return out;
}

// --- serialization -------------------------------------------------------

inline json to_json(const Alarm& a) {
    return {{"id", a.id},
            {"ts", a.ts},
            {"severity", to_string(a.severity)},
            {"alarm_type", a.alarm_type},
            {"source_ne", a.source_ne},
            {"description", a.description}};
}

inline Alarm alarm_from_json(const json& j, const std::string& path = "alarm") {
    detail::Reader r(j, path);
    r.allow_only({"id", "ts", "severity", "alarm_type", "source_ne", "description"});
    Alarm a;
    a.id = r.str("id");
    a.ts = r.int64("ts");
    const auto sev = r.str("severity");
    const auto s = parse_severity(sev);
    if (!s) r.fail("unknown severity '" + sev + "'");
    a.severity = *s;
    a.alarm_type = r.str("alarm_type");
    a.source_ne = r.str("source_ne");
    a.description = r.str_or("description", "");
    check_alarm(a);
    return a;
}

/// One JSON object per line; blank lines are skipped.
inline std::vector<Alarm> parse_alarms_jsonl(const std::string& text, const std::string& source = "<alarms>") {
    std::vector<Alarm> out;
    std::size_t lineno = 0;
    for (const auto& line : split(text, '\n')) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto where = source + ":" + std::to_string(lineno);
        out.push_back(alarm_from_json(detail::parse_json_text(line, where), where));
    }
    return out;
}

inline std::vector<Alarm> load_alarms(const std::string& path) { return parse_alarms_jsonl(read_file(path), path); }

inline json to_json(const std::vector<Alarm>& alarms) {
    json out = json::array();
    for (const auto& a : alarms) out.push_back(to_json(a));
    return out;
}

inline std::string dump_alarms_jsonl(const std::vector<Alarm>& alarms) {
    std::string out;
    for (const auto& a : alarms) out += to_json(a).dump() + "\n";
    return out;
}

inline json to_json(const CompressedEvent& e) {
    return {{"alarm_type", e.key.alarm_type},
            {"source_ne", e.key.source_ne},
            {"count", e.count},
            {"max_severity", to_string(e.max_severity)},
            {"first_ts", e.first_ts},
            {"last_ts", e.last_ts},
            {"representative_description", e.representative_description}};
}

inline json to_json(const std::vector<CompressedEvent>& events) {
    json out = json::array();
    for (const auto& e : events) out.push_back(to_json(e));
    return out;
}

inline CompressedEvent event_from_json(const json& j, const std::string& path = "event") {
    detail::Reader r(j, path);
    r.allow_only({"alarm_type", "source_ne", "count", "max_severity", "first_ts", "last_ts",
                  "representative_description"});
    CompressedEvent e;
    e.key = {r.str("alarm_type"), r.str("source_ne")};
    const auto count = r.int64("count");
    if (count < 1) r.fail("count must be >= 1");
    e.count = static_cast<std::size_t>(count);
    const auto sev = parse_severity(r.str("max_severity"));
    if (!sev) r.fail("unknown severity");
    e.max_severity = *sev;
    e.first_ts = r.int64("first_ts");
    e.last_ts = r.int64("last_ts");
    e.representative_description = r.str("representative_description");
    return e;
}

inline std::vector<CompressedEvent> events_from_json(const json& j) {
    if (!j.is_array()) throw ParseError("events: expected array");
    std::vector<CompressedEvent> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(event_from_json(j[i], "events[" + std::to_string(i) + "]"));
    return out;
}

inline Matrix matrix_from_json(const json& j) {
    if (!j.is_array()) throw ParseError("matrix: expected array of rows");
    Matrix m;
    for (const auto& row : j) {
        if (!row.is_array()) throw ParseError("matrix: expected array of rows");
        auto& out = m.emplace_back();
        for (const auto& x : row) {
            if (!x.is_number()) throw ParseError("matrix: entries must be numbers");
            out.push_back(x.get<double>());
        }
    }
    return m;
}

inline json to_json(const PriorityEntry& p) {
    return {{"event", to_json(p.event)},
            {"severity_term", p.severity_term},
            {"frequency_term", p.frequency_term},
            {"correlation_term", p.correlation_term},
            {"score", p.score}};
}

inline PriorityEntry priority_entry_from_json(const json& j, const std::string& path = "entry") {
    detail::Reader r(j, path);
    r.allow_only({"event", "severity_term", "frequency_term", "correlation_term", "score"});
    return {event_from_json(r.at("event"), r.sub("event")), r.num("severity_term"), r.num("frequency_term"),
            r.num("correlation_term"), r.num("score")};
}

inline json to_json(const std::vector<PriorityEntry>& ranking) {
    json out = json::array();
    for (const auto& p : ranking) out.push_back(to_json(p));
    return out;
}

inline json to_json(const Suggestion& s) {
    return {{"alarm_type", s.alarm_type}, {"cause", s.cause}, {"actions", s.actions}, {"source_refs", s.source_refs}};
}

inline json to_json(const BatchAnalysis& a) {
    json j = {{"events", to_json(a.events)}, {"correlation", a.correlation}, {"ranking", to_json(a.ranking)}};
    j["suggestion"] = a.suggestion ? to_json(*a.suggestion) : json(nullptr);
    return j;
}

// --- synthetic streams -----------------------------------------------------

struct AlarmTemplate {
    std::string alarm_type;
    Severity severity;
    std::string description;
};

/// Alarm types covered by the bundled manual.
inline const std::vector<AlarmTemplate>& alarm_catalog() {
    static const std::vector<AlarmTemplate> c = {
        {"LOS", Severity::CRITICAL, "Loss of signal: no input optical power detected at the receiver"},
        {"LOF", Severity::CRITICAL, "Loss of frame: OTU frame alignment lost on received signal"},
        {"AIS", Severity::WARNING, "Alarm indication signal received from upstream"},
        {"BER_DEG", Severity::MAJOR, "Pre-FEC bit error rate above degrade threshold"},
        {"OPT_PWR_LOW", Severity::MINOR, "Input optical power below lower threshold"},
        {"TEMP_HIGH", Severity::MAJOR, "Board temperature above upper threshold"},
        {"LASER_EOL", Severity::MINOR, "Laser bias current beyond end of life threshold"},
        {"OSC_FAIL", Severity::MAJOR, "Optical supervisory channel lost between amplifier sites"},
        {"GAIN_TILT", Severity::WARNING, "EDFA output gain tilt out of tolerance"},
    };
    return c;
}

/// Seeded alarm stream: `n` alarms over `n_ne` network elements, starting at
/// `t0` with exponential-ish gaps averaging `mean_gap_ms`.
inline std::vector<Alarm> synthetic_stream(Rng& rng, std::size_t n, std::size_t n_ne = 8, std::int64_t t0 = 0,
                                           double mean_gap_ms = 4000.0) {
    const auto& cat = alarm_catalog();
    std::vector<Alarm> out;
    std::int64_t ts = t0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& t = rng.pick(cat);
        Alarm a;
        a.id = "A" + std::to_string(i + 1);
        a.ts = ts;
        a.severity = t.severity;
        a.alarm_type = t.alarm_type;
        a.source_ne = "NE-" + std::to_string(1 + rng.below(n_ne));
        a.description = t.description + " on " + a.source_ne;
        out.push_back(std::move(a));
        ts += static_cast<std::int64_t>(-std::log1p(-rng.uniform()) * mean_gap_ms);
    }
    return out;
}

}  // namespace onet::alarms

#endif  // ONET_ALARMS_HPP
