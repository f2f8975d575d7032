#ifndef ONET_COMMON_HPP
#define ONET_COMMON_HPP

#include <algorithm>
#include <cctype>
#include <initializer_list>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace onet {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// Error hierarchy. Every error raised by the library derives from Error so
// callers can catch at module boundaries.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
  public:
    using Error::Error;
};

class ValidationError : public Error {
  public:
    explicit ValidationError(std::vector<std::string> violations)
        : Error(join(violations)), violations_(std::move(violations)) {}

    const std::vector<std::string>& violations() const { return violations_; }

  private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out = "validation failed:";
        for (const auto& s : v) out += "\n  - " + s;
        return out;
    }
    std::vector<std::string> violations_;
};

class DomainError : public Error {
  public:
    using Error::Error;
};

class ConfigError : public Error {
  public:
    using Error::Error;
};

class NotFoundError : public Error {
  public:
    using Error::Error;
};

namespace units {

constexpr double planck = 6.62607015e-34;  // J*s

inline double dbm_to_w(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double w_to_dbm(double w) { return 10.0 * std::log10(w) + 30.0; }
inline double db_to_lin(double db) { return std::pow(10.0, db / 10.0); }
inline double lin_to_db(double lin) { return 10.0 * std::log10(lin); }

}  // namespace units

/// 64-bit FNV-1a. Used for content digests and for the feature-hashing
/// embedder; `basis` lets callers derive independent hash families.
constexpr std::uint64_t fnv1a64(std::string_view data,
                                std::uint64_t basis = 0xcbf29ce484222325ULL) {
    std::uint64_t h = basis;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

/// Digest of a JSON value's canonical dump (object keys sorted).
inline std::string digest(const json& j) { return hex64(fnv1a64(j.dump())); }

/// Portable seeded generator: std::mt19937_64 bit stream with hand-rolled
/// range mapping, since the standard distributions are not bit-reproducible
/// across standard library implementations.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        // rejection sampling keeps the mapping unbiased
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x;
        do {
            x = next();
        } while (x >= limit);
        return x % n;
    }

    template <typename T>
    const T& pick(const std::vector<T>& v) {
        return v[below(v.size())];
    }

  private:
    std::mt19937_64 engine_;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline void write_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

inline std::string trim(std::string_view s) {
    const auto* ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return std::string(s.substr(b, e - b + 1));
}

inline std::string to_lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

inline std::string to_upper(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.emplace_back(s.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

namespace detail {

// Strict field reader: tracks a path for error messages and rejects unknown keys.
class Reader {
  public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail("expected object");
    }

    void allow_only(std::initializer_list<const char*> keys) const {
        for (const auto& item : j_.items()) {
            const auto& k = item.key();
            if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; }))
                throw ParseError(path_ + ": unknown key '" + k + "'");
        }
    }

    const json& at(const char* key) const {
        if (!j_.contains(key)) fail(std::string("missing field '") + key + "'");
        return j_.at(key);
    }

    std::string str(const char* key) const {
        const auto& v = at(key);
        if (!v.is_string()) fail(std::string("field '") + key + "' must be a string");
        return v.get<std::string>();
    }

    double num(const char* key) const {
        const auto& v = at(key);
        if (!v.is_number()) fail(std::string("field '") + key + "' must be a number");
        return v.get<double>();
    }

    double num_or(const char* key, double fallback) const { return j_.contains(key) ? num(key) : fallback; }

    std::int64_t int64(const char* key) const {
        const auto& v = at(key);
        if (!v.is_number_integer()) fail(std::string("field '") + key + "' must be an integer");
        return v.get<std::int64_t>();
    }

    bool boolean(const char* key) const {
        const auto& v = at(key);
        if (!v.is_boolean()) fail(std::string("field '") + key + "' must be a boolean");
        return v.get<bool>();
    }

    std::string str_or(const char* key, const std::string& fallback) const {
        return j_.contains(key) ? str(key) : fallback;
    }

    bool has(const char* key) const { return j_.contains(key); }

    const json& arr(const char* key) const {
        const auto& v = at(key);
        if (!v.is_array()) fail(std::string("field '") + key + "' must be an array");
        return v;
    }

    std::string sub(const char* key) const { return path_ + "." + key; }

    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(path_ + ": " + msg); }

  private:
    const json& j_;
    std::string path_;
};

/// Parse text as JSON, reporting line:column on syntax errors.
inline json parse_json_text(const std::string& text, const std::string& source) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i < std::min(e.byte > 0 ? e.byte - 1 : 0, text.size()); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ParseError(source + ":" + std::to_string(line) + ":" + std::to_string(col) +
                         ": malformed JSON: " + e.what());
    }
}

}  // namespace detail

}  // namespace onet

#endif  // ONET_COMMON_HPP
