#ifndef ONET_AGENT_BACKEND_HPP
#define ONET_AGENT_BACKEND_HPP

#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "../common.hpp"

namespace onet::agent {

class BackendError : public Error {
  public:
    using Error::Error;
};

struct Message {
    std::string role;
    std::string content;
};

struct LlmRequest {
    std::vector<Message> messages;
    double temperature = 0.0;
    std::size_t max_tokens = 1024;
    std::optional<std::int64_t> seed;
};

inline json to_json(const LlmRequest& r, const std::string& model) {
    json msgs = json::array();
    for (const auto& m : r.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    json j = {{"model", model}, {"messages", msgs}, {"temperature", r.temperature}, {"max_tokens", r.max_tokens}};
    if (r.seed) j["seed"] = *r.seed;
    return j;
}

class LlmBackend {
  public:
    virtual ~LlmBackend() = default;
    virtual std::string complete(const LlmRequest& request) = 0;
    virtual std::string id() const = 0;
    virtual bool deterministic() const = 0;
};

/// Replays responses from an ordered rule table. The first rule whose
/// matcher accepts the prompt (all message contents joined) wins.
///
/// Responses may echo prompt text through `{{after:PREFIX}}`, which expands
/// to the rest of the line following the first occurrence of PREFIX (empty
/// when absent).
class ScriptedBackend : public LlmBackend {
  public:
    struct Rule {
        std::vector<std::string> all_of;  // every substring must occur
        std::optional<std::regex> pattern;
        std::string pattern_text;
        std::string response;
    };

    ScriptedBackend(std::string id, std::vector<Rule> rules, std::optional<std::string> fallback)
        : id_(std::move(id)), rules_(std::move(rules)), fallback_(std::move(fallback)) {}

    std::string complete(const LlmRequest& request) override {
        std::string prompt;
        for (const auto& m : request.messages) {
            if (!prompt.empty()) prompt += "\n";
            prompt += m.content;
        }
        for (const auto& r : rules_) {
            const bool subs = std::all_of(r.all_of.begin(), r.all_of.end(),
                                          [&](const std::string& s) { return prompt.find(s) != std::string::npos; });
            if (subs && (!r.pattern || std::regex_search(prompt, *r.pattern))) return expand(r.response, prompt);
        }
        if (fallback_) return expand(*fallback_, prompt);
        throw BackendError("scripted backend " + id_ + ": no rule matches the prompt");
    }

    std::string id() const override { return "scripted:" + id_; }
    bool deterministic() const override { return true; }

    std::size_t rule_count() const { return rules_.size(); }

    static std::string expand(const std::string& response, const std::string& prompt) {
        static const std::regex placeholder(R"(\{\{after:([^}]*)\}\})");
        std::string out;
        auto begin = response.cbegin();
        for (auto it = std::sregex_iterator(response.begin(), response.end(), placeholder);
             it != std::sregex_iterator(); ++it) {
            out.append(begin, response.cbegin() + it->position());
            const auto prefix = (*it)[1].str();
            const auto at = prompt.find(prefix);
            if (at != std::string::npos) {
                const auto from = at + prefix.size();
                const auto eol = prompt.find('\n', from);
                out += trim(std::string_view(prompt).substr(from, eol == std::string::npos ? eol : eol - from));
            }
            begin = response.cbegin() + it->position() + it->length();
        }
        out.append(begin, response.cend());
        return out;
    }

  private:
    std::string id_;
    std::vector<Rule> rules_;
    std::optional<std::string> fallback_;
};

/// Fixture: {"id", "rules": [{"match": str | [str], "pattern": regex,
/// "icase": bool, "response": str}], "default": str}
inline std::unique_ptr<ScriptedBackend> scripted_backend_from_json(const json& j) {
    onet::detail::Reader root(j, "scripted");
    root.allow_only({"id", "rules", "default"});
    std::vector<ScriptedBackend::Rule> rules;
    const auto& list = root.arr("rules");
    for (std::size_t i = 0; i < list.size(); ++i) {
        onet::detail::Reader r(list[i], "rules[" + std::to_string(i) + "]");
        r.allow_only({"match", "pattern", "icase", "response"});
        ScriptedBackend::Rule rule;
        if (r.has("match")) {
            const auto& m = r.at("match");
            if (m.is_string()) {
                rule.all_of.push_back(m.get<std::string>());
            } else if (m.is_array() && std::all_of(m.begin(), m.end(), [](const json& x) { return x.is_string(); })) {
                for (const auto& s : m) rule.all_of.push_back(s.get<std::string>());
            } else {
                r.fail("'match' must be a string or an array of strings");
            }
        }
        if (r.has("pattern")) {
            rule.pattern_text = r.str("pattern");
            auto flags = std::regex::ECMAScript;
            if (r.has("icase") && r.boolean("icase")) flags |= std::regex::icase;
            try {
                rule.pattern = std::regex(rule.pattern_text, flags);
            } catch (const std::regex_error& e) {
                r.fail("bad pattern: " + std::string(e.what()));
            }
        }
        if (rule.all_of.empty() && !rule.pattern) r.fail("rule needs 'match' or 'pattern'");
        rule.response = r.str("response");
        rules.push_back(std::move(rule));
    }
    std::optional<std::string> fallback;
    if (root.has("default")) fallback = root.str("default");
    return std::make_unique<ScriptedBackend>(root.str("id"), std::move(rules), std::move(fallback));
}

inline std::unique_ptr<ScriptedBackend> load_scripted_backend(const std::string& path) {
    return scripted_backend_from_json(onet::detail::parse_json_text(read_file(path), path));
}

}  // namespace onet::agent

#endif  // ONET_AGENT_BACKEND_HPP
