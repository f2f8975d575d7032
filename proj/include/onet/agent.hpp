#ifndef ONET_AGENT_HPP
#define ONET_AGENT_HPP

// Orchestrator, prompts, scripted backend and tools. The HTTP backend lives in
// agent/http_backend.hpp so that only its users pull in the HTTP client.
#include "agent/backend.hpp"
#include "agent/orchestrator.hpp"
#include "agent/prompt.hpp"
#include "agent/session.hpp"
#include "agent/tools.hpp"
#include "agent/workbench.hpp"

#endif  // ONET_AGENT_HPP
