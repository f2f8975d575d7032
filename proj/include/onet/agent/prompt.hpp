#ifndef ONET_AGENT_PROMPT_HPP
#define ONET_AGENT_PROMPT_HPP

#include <map>
#include <string>
#include <vector>

#include "../common.hpp"
#include "../rag.hpp"

namespace onet::agent {

struct PromptTemplate {
    std::string instruction;
    std::string context;
    std::string input_data;
    std::string output_indicator;
};

enum class Technique { ZERO_SHOT, FEW_SHOT, COT, COT_SELF_CONSISTENCY };

inline std::string to_string(Technique t) {
    switch (t) {
        case Technique::ZERO_SHOT: return "ZERO_SHOT";
        case Technique::FEW_SHOT: return "FEW_SHOT";
        case Technique::COT: return "COT";
        case Technique::COT_SELF_CONSISTENCY: return "COT_SELF_CONSISTENCY";
    }
    return "?";
}

struct TechniqueConfig {
    Technique technique = Technique::ZERO_SHOT;
    std::size_t n_examples = 0;  // FEW_SHOT needs >= 1; CoT variants use them when > 0
    std::size_t n_paths = 3;     // self-consistency, odd and >= 3

    bool cot() const { return technique == Technique::COT || technique == Technique::COT_SELF_CONSISTENCY; }

    void check() const {
        if (technique == Technique::FEW_SHOT && n_examples == 0) throw ConfigError("FEW_SHOT needs n_examples >= 1");
        if (technique == Technique::COT_SELF_CONSISTENCY && (n_paths < 3 || n_paths % 2 == 0))
            throw ConfigError("self-consistency needs an odd n_paths >= 3");
    }
};

struct Example {
    std::string input;
    std::string output;
};

inline constexpr const char* kCotCue = "Let's think step by step.";

/// Assembles the prompt: instruction (plus the CoT cue line), context with
/// retrieved chunks tagged by their refs, few-shot examples, input data and
/// output indicator. Absent elements leave no trace.
inline std::string render_prompt(const PromptTemplate& t, const TechniqueConfig& tech,
                                 const std::vector<rag::RetrievalHit>& retrieved, const std::vector<Example>& examples) {
    if (trim(t.instruction).empty()) throw ConfigError("prompt template needs an instruction");
    tech.check();
    const bool want_examples = tech.technique == Technique::FEW_SHOT || (tech.cot() && tech.n_examples > 0);
    if (tech.technique == Technique::FEW_SHOT && examples.empty())
        throw ConfigError("FEW_SHOT requested with no examples");

    std::string out = t.instruction;
    if (tech.cot()) out += std::string("\n") + kCotCue;

    if (!t.context.empty() || !retrieved.empty()) {
        out += "\n\nContext:";
        if (!t.context.empty()) out += "\n" + t.context;
        for (const auto& h : retrieved) out += "\n[" + h.chunk.ref() + "] " + h.chunk.text;
    }
    if (want_examples && !examples.empty()) {
        out += "\n\nExamples:";
        const auto n = std::min(tech.n_examples, examples.size());
        for (std::size_t i = 0; i < n; ++i)
            out += "\nExample " + std::to_string(i + 1) + ":\nInput: " + examples[i].input +
                   "\nOutput: " + examples[i].output;
    }
    if (!t.input_data.empty()) out += "\n\nInput:\n" + t.input_data;
    if (!t.output_indicator.empty()) out += "\n\nOutput format:\n" + t.output_indicator;
    return out;
}

namespace detail {

inline std::string normalize_answer(const std::string& s) {
    std::string out;
    bool space = false;
    for (unsigned char c : trim(s)) {
        if (std::isspace(c)) {
            space = true;
            continue;
        }
        if (space && !out.empty()) out.push_back(' ');
        space = false;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

}  // namespace detail

/// Majority vote over normalized answers; returns the earliest original
/// answer of the winning class, ties going to the class seen first.
inline std::string self_consistency_vote(const std::vector<std::string>& answers) {
    if (answers.empty()) throw DomainError("self_consistency_vote: no answers");
    std::map<std::string, std::pair<std::size_t, std::size_t>> classes;  // norm -> (count, first index)
    for (std::size_t i = 0; i < answers.size(); ++i) {
        auto [it, fresh] = classes.try_emplace(detail::normalize_answer(answers[i]), 0, i);
        ++it->second.first;
    }
    std::size_t best_count = 0, best_index = 0;
    for (const auto& [_, v] : classes) {
        if (v.first > best_count || (v.first == best_count && v.second < best_index)) {
            best_count = v.first;
            best_index = v.second;
        }
    }
    return answers[best_index];
}

/// Instructions, output formats and worked examples per subtask kind.
struct PromptLibrary {
    std::string intent_instruction;
    std::string decompose_instruction;
    std::string select_instruction;
    std::string summary_instruction;
    std::map<std::string, std::string> brief;
    std::map<std::string, std::string> advanced;
    std::map<std::string, std::string> output_format;
    std::map<std::string, std::vector<Example>> examples;

    const std::string& text(const std::map<std::string, std::string>& m, const std::string& kind) const {
        auto it = m.find(kind);
        if (it == m.end()) throw ConfigError("prompt library has no entry for subtask '" + kind + "'");
        return it->second;
    }
};

inline PromptLibrary prompt_library_from_json(const json& j) {
    onet::detail::Reader r(j, "prompts");
    r.allow_only({"intent", "decompose", "select", "summary", "brief", "advanced", "output_format", "examples"});
    PromptLibrary lib;
    lib.intent_instruction = r.str("intent");
    lib.decompose_instruction = r.str("decompose");
    lib.select_instruction = r.str("select");
    lib.summary_instruction = r.str("summary");
    auto strings = [&](const char* key) {
        std::map<std::string, std::string> m;
        const auto& obj = r.at(key);
        if (!obj.is_object()) r.fail(std::string("field '") + key + "' must be an object");
        for (const auto& [k, v] : obj.items()) {
            if (!v.is_string()) r.fail(std::string(key) + "." + k + " must be a string");
            m[k] = v.get<std::string>();
        }
        return m;
    };
    lib.brief = strings("brief");
    lib.advanced = strings("advanced");
    lib.output_format = strings("output_format");
    const auto& ex = r.at("examples");
    if (!ex.is_object()) r.fail("field 'examples' must be an object");
    for (const auto& [kind, list] : ex.items()) {
        if (!list.is_array()) r.fail("examples." + kind + " must be an array");
        for (std::size_t i = 0; i < list.size(); ++i) {
            onet::detail::Reader er(list[i], "examples." + kind + "[" + std::to_string(i) + "]");
            er.allow_only({"input", "output"});
            lib.examples[kind].push_back({er.str("input"), er.str("output")});
        }
    }
    return lib;
}

inline PromptLibrary load_prompt_library(const std::string& path) {
    return prompt_library_from_json(onet::detail::parse_json_text(read_file(path), path));
}

}  // namespace onet::agent

#endif  // ONET_AGENT_PROMPT_HPP
