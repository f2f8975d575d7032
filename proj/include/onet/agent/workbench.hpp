#ifndef ONET_AGENT_WORKBENCH_HPP
#define ONET_AGENT_WORKBENCH_HPP

#include <filesystem>
#include <memory>
#include <string>

#include "prompt.hpp"
#include "tools.hpp"

namespace onet::agent {

/// Shared read-only resources of the agent: manual and knowledge stores,
/// correlation rulebase, prompt library and tool registry. Retrievers handed
/// out by context() point into this object, so it is heap-pinned.
class Workbench {
  public:
    rag::VectorStore manual;
    rag::VectorStore knowledge;
    alarms::Rulebase rulebase;
    PromptLibrary prompts;
    ToolRegistry registry = default_registry();

    Workbench() = default;
    Workbench(const Workbench&) = delete;
    Workbench& operator=(const Workbench&) = delete;

    /// Loads manual/, knowledge/, rulebase.json and agent/prompts.json from
    /// a data directory. A prebuilt index under index/ is used when present.
    static std::unique_ptr<Workbench> load(const std::string& data_dir) {
        namespace fs = std::filesystem;
        auto wb = std::make_unique<Workbench>();
        const fs::path root(data_dir);
        if (!fs::is_directory(root)) throw NotFoundError("data directory not found: " + data_dir);
        auto fill = [&](rag::VectorStore& store, const char* name, rag::DocKind kind) {
            const auto index = root / "index" / (std::string(name) + ".store");
            if (fs::exists(index)) {
                store = rag::VectorStore::load(index.string());
            } else if (fs::is_directory(root / name)) {
                rag::index_documents(store, rag::load_directory((root / name).string(), kind));
            }
        };
        fill(wb->manual, "manual", rag::DocKind::manual);
        fill(wb->knowledge, "knowledge", rag::DocKind::knowledge);
        wb->rulebase = alarms::load_rulebase((root / "rulebase.json").string());
        wb->prompts = load_prompt_library((root / "agent" / "prompts.json").string());
        return wb;
    }

    ToolContext context(SessionState& session) const {
        return {session, manual.size() ? manual.retriever() : rag::Retriever{},
                knowledge.size() ? knowledge.retriever() : rag::Retriever{}, rulebase, rag::embed};
    }
};

}  // namespace onet::agent

#endif  // ONET_AGENT_WORKBENCH_HPP
