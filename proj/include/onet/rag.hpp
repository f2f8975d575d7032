#ifndef ONET_RAG_HPP
#define ONET_RAG_HPP

#include <algorithm>
#include <bit>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <vector>

#include "common.hpp"

namespace onet::rag {

enum class DocKind { manual, rule, knowledge, data_note };

inline std::string to_string(DocKind k) {
    switch (k) {
        case DocKind::manual: return "manual";
        case DocKind::rule: return "rule";
        case DocKind::knowledge: return "knowledge";
        case DocKind::data_note: return "data_note";
    }
    return "?";
}

inline DocKind parse_doc_kind(const std::string& s) {
    if (s == "manual") return DocKind::manual;
    if (s == "rule") return DocKind::rule;
    if (s == "knowledge") return DocKind::knowledge;
    if (s == "data_note") return DocKind::data_note;
    throw ConfigError("unknown document kind '" + s + "'");
}

struct Document {
    std::string id;
    std::string source;
    DocKind kind = DocKind::knowledge;
    std::string text;
};

struct Chunk {
    std::string doc_id;
    std::size_t seq = 0;
    std::string text;
    std::size_t token_count = 0;

    std::string ref() const { return doc_id + "#" + std::to_string(seq); }

    bool operator==(const Chunk&) const = default;
};

/// Whitespace-separated words; the unit of the chunk token limit.
inline std::vector<std::string> words(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        const auto start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) out.emplace_back(text.substr(start, i - start));
    }
    return out;
}

/// Lowercased alphanumeric runs; the unit the embedder hashes.
inline std::vector<std::string> terms(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

inline Document make_document(std::string id, std::string source, DocKind kind, std::string text) {
    if (words(text).empty()) throw ValidationError({"document " + id + ": text must be non-empty"});
    return {std::move(id), std::move(source), kind, std::move(text)};
}

/// Sliding window of `max_tokens` words advancing by max_tokens - overlap.
inline std::vector<Chunk> chunk_document(const Document& doc, std::size_t max_tokens = 200, std::size_t overlap = 40) {
    if (max_tokens == 0 || overlap >= max_tokens) throw ConfigError("chunk_document: need 0 <= overlap < max_tokens");
    const auto toks = words(doc.text);
    if (toks.empty()) throw ValidationError({"document " + doc.id + ": text must be non-empty"});
    std::vector<Chunk> out;
    for (std::size_t start = 0;; start += max_tokens - overlap) {
        const auto end = std::min(start + max_tokens, toks.size());
        std::string text;
        for (auto i = start; i < end; ++i) {
            if (i > start) text.push_back(' ');
            text += toks[i];
        }
        out.push_back({doc.id, out.size(), std::move(text), end - start});
        if (end == toks.size()) break;
    }
    return out;
}

using EmbeddingVector = std::vector<double>;
using Embedder = std::function<EmbeddingVector(std::string_view)>;

constexpr std::size_t kEmbeddingDim = 256;
// Hash seeds for bucket index and sign: FNV-1a 64 offset basis, and the same
// basis with its 32-bit halves swapped.
constexpr std::uint64_t kBucketSeed = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kSignSeed = 0x84222325cbf29ce4ULL;

/// Signed feature-hashing bag of words, L2-normalized. Term-free text maps to
/// the zero vector.
inline EmbeddingVector embed(std::string_view text) {
    EmbeddingVector v(kEmbeddingDim, 0.0);
    for (const auto& t : terms(text)) {
        const auto bucket = fnv1a64(t, kBucketSeed) % kEmbeddingDim;
        const double sign = (fnv1a64(t, kSignSeed) & 1ULL) ? -1.0 : 1.0;
        v[bucket] += sign;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm > 0.0) {
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;
    }
    return v;
}

/// Cosine similarity; defined as 0 when either operand is the zero vector.
inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

struct RetrievalHit {
    Chunk chunk;
    double score = 0.0;
};

inline bool hit_order(const RetrievalHit& a, const RetrievalHit& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.chunk.doc_id != b.chunk.doc_id) return a.chunk.doc_id < b.chunk.doc_id;
    return a.chunk.seq < b.chunk.seq;
}

using Retriever = std::function<std::vector<RetrievalHit>(const std::string& query, std::size_t k)>;

/// Exact-scan vector store keyed by (doc_id, seq). Many readers or one writer.
class VectorStore {
  public:
    explicit VectorStore(Embedder embedder = embed)
        : embedder_(std::move(embedder)), mutex_(std::make_unique<std::shared_mutex>()) {}

    std::size_t upsert(const std::vector<Chunk>& chunks) {
        std::unique_lock lock(*mutex_);
        for (const auto& c : chunks) entries_[{c.doc_id, c.seq}] = {c, embedder_(c.text)};
        return chunks.size();
    }

    /// Top-k by cosine; ties broken by doc_id, then seq.
    std::vector<RetrievalHit> retrieve(const std::string& query, std::size_t k) const {
        if (k == 0) throw ConfigError("retrieve: k must be >= 1");
        const auto q = embedder_(query);
        std::shared_lock lock(*mutex_);
        std::vector<RetrievalHit> hits;
        hits.reserve(entries_.size());
        for (const auto& [_, e] : entries_) hits.push_back({e.chunk, cosine(q, e.vector)});
        const auto n = std::min(k, hits.size());
        std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(n), hits.end(), hit_order);
        hits.resize(n);
        return hits;
    }

    Retriever retriever() const {
        return [this](const std::string& q, std::size_t k) { return retrieve(q, k); };
    }

    std::size_t size() const {
        std::shared_lock lock(*mutex_);
        return entries_.size();
    }

    /// Snapshot of (chunk, vector) pairs in key order.
    std::vector<std::pair<Chunk, EmbeddingVector>> entries() const {
        std::shared_lock lock(*mutex_);
        std::vector<std::pair<Chunk, EmbeddingVector>> out;
        for (const auto& [_, e] : entries_) out.emplace_back(e.chunk, e.vector);
        return out;
    }

    // Store file: "ONETRAG1" magic, u32 version, u32 dimension, u64 record
    // count, then per record: u32 len + doc_id, u64 seq, u32 len + text,
    // dimension x f64. All integers and floats little-endian.
    static constexpr std::uint32_t kFileVersion = 1;

    void save(const std::string& path) const {
        std::shared_lock lock(*mutex_);
        std::string out = "ONETRAG1";
        put_u32(out, kFileVersion);
        const auto dim = entries_.empty() ? kEmbeddingDim : entries_.begin()->second.vector.size();
        put_u32(out, static_cast<std::uint32_t>(dim));
        put_u64(out, entries_.size());
        for (const auto& [_, e] : entries_) {
            put_str(out, e.chunk.doc_id);
            put_u64(out, e.chunk.seq);
            put_str(out, e.chunk.text);
            for (double x : e.vector) put_u64(out, std::bit_cast<std::uint64_t>(x));
        }
        write_file(path, out);
    }

    static VectorStore load(const std::string& path, Embedder embedder = embed) {
        const auto data = read_file(path);
        std::size_t pos = 0;
        auto need = [&](std::size_t n) {
            if (pos + n > data.size()) throw ParseError(path + ": truncated store file at byte " + std::to_string(pos));
        };
        need(8);
        if (data.compare(0, 8, "ONETRAG1") != 0) throw ParseError(path + ": bad magic");
        pos = 8;
        auto u32 = [&] {
            need(4);
            std::uint32_t v = 0;
            for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
            pos += 4;
            return v;
        };
        auto u64 = [&] {
            need(8);
            std::uint64_t v = 0;
            for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
            pos += 8;
            return v;
        };
        auto str = [&] {
            const auto n = u32();
            need(n);
            std::string s = data.substr(pos, n);
            pos += n;
            return s;
        };
        if (const auto v = u32(); v != kFileVersion) throw ParseError(path + ": unsupported version " + std::to_string(v));
        const auto dim = u32();
        const auto count = u64();
        VectorStore store(std::move(embedder));
        for (std::uint64_t r = 0; r < count; ++r) {
            Entry e;
            e.chunk.doc_id = str();
            e.chunk.seq = u64();
            e.chunk.text = str();
            e.chunk.token_count = words(e.chunk.text).size();
            e.vector.resize(dim);
            for (auto& x : e.vector) x = std::bit_cast<double>(u64());
            store.entries_[{e.chunk.doc_id, e.chunk.seq}] = std::move(e);
        }
        if (pos != data.size()) throw ParseError(path + ": trailing bytes after last record");
        return store;
    }

  private:
    struct Entry {
        Chunk chunk;
        EmbeddingVector vector;
    };

    static void put_u32(std::string& out, std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    static void put_u64(std::string& out, std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    static void put_str(std::string& out, const std::string& s) {
        put_u32(out, static_cast<std::uint32_t>(s.size()));
        out += s;
    }

    Embedder embedder_;
    std::map<std::pair<std::string, std::size_t>, Entry> entries_;
    std::unique_ptr<std::shared_mutex> mutex_;
};

/// Plain-text documents (*.txt, *.md) of a directory in file-name order; the
/// file stem becomes the document id.
inline std::vector<Document> load_directory(const std::string& dir, DocKind kind) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw NotFoundError("not a directory: " + dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".txt" || ext == ".md")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<Document> docs;
    for (const auto& f : files) {
        auto text = read_file(f.string());
        if (words(text).empty()) continue;
        docs.push_back(make_document(f.stem().string(), f.string(), kind, std::move(text)));
    }
    return docs;
}

inline std::size_t index_documents(VectorStore& store, const std::vector<Document>& docs, std::size_t max_tokens = 200,
                                   std::size_t overlap = 40) {
    std::size_t n = 0;
    for (const auto& d : docs) n += store.upsert(chunk_document(d, max_tokens, overlap));
    return n;
}

inline json to_json(const RetrievalHit& h) {
    return {{"doc_id", h.chunk.doc_id}, {"seq", h.chunk.seq}, {"ref", h.chunk.ref()}, {"score", h.score},
            {"text", h.chunk.text}};
}

inline json to_json(const std::vector<RetrievalHit>& hits) {
    json out = json::array();
    for (const auto& h : hits) out.push_back(to_json(h));
    return out;
}

}  // namespace onet::rag

#endif  // ONET_RAG_HPP
