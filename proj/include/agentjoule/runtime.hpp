#pragma once

// Orchestrator / sub-agent turn loop over a git workspace.
//
// Config file layout (JSON):
//   {"name": "hyperagent", "method": "hyperagent", "orchestrator": "planner",
//    "plan_asset": "ha_plan",
//    "roles": {"planner": {"prompt_asset": "orchestrator", "tools": ["delegate_to_navigator", "submit"],
//                          "context": "persistent"},
//              "navigator": {"prompt_asset": "navigator", "tools": ["bash", "str_replace_editor", "submit"],
//                            "context": "fresh", "navigation": true}},
//    "delegations": {"delegate_to_navigator": "navigator"},
//    "safeguards": {"shell_timeout_minutes": 30, "observation_truncation": 30000, "loop_window": 3}}
// context is "fresh", "persistent", "sparse" or an object
// {"kind": ..., "last_n"?: N, "k"?: k}.

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "agentjoule/chat.hpp"
#include "agentjoule/gateway.hpp"
#include "agentjoule/librarian.hpp"
#include "agentjoule/trajectory.hpp"
#include "agentjoule/workspace.hpp"

namespace agentjoule {

struct ContextPolicy {
  enum class Kind { fresh, persistent, sparse };
  Kind kind = Kind::fresh;
  std::optional<std::size_t> last_n;  // observation window
  std::size_t sparse_k = 5;

  bool operator==(const ContextPolicy&) const = default;
};

struct RoleConfig {
  std::string prompt_asset;
  std::string prompt;  // used when prompt_asset is empty
  std::vector<std::string> tools;
  ContextPolicy context;
  bool navigation = false;
  bool librarian = false;

  bool operator==(const RoleConfig&) const = default;
};

struct SafeguardConfig {
  double shell_timeout_minutes = 30.0;
  std::size_t observation_truncation = 30000;
  std::size_t loop_window = 3;
  std::size_t max_turns_per_invocation = 100;
  std::size_t max_turns_per_episode = 400;

  void validate() const;
  std::chrono::milliseconds shell_timeout() const;
  bool operator==(const SafeguardConfig&) const = default;
};

struct MasConfig {
  std::string name;
  std::string method;
  std::string orchestrator;
  std::string swe_context_asset = "swe_context";
  std::string plan_asset;
  std::string policy_block;  // prepended to the plan
  std::map<std::string, RoleConfig> roles;
  std::map<std::string, std::string> delegations;   // tool name -> role
  std::map<std::string, std::string> tool_aliases;  // old tool name -> current tool name
  bool caveman = false;
  std::uint64_t prune_threshold = kDefaultPruneThreshold;
  SafeguardConfig safeguards;

  // Exactly one orchestrator, known roles and tools, acyclic delegation.
  void validate() const;
  nlohmann::json to_json() const;
  static MasConfig from_json(const nlohmann::json& j);
  static MasConfig from_file(const std::string& path);
  bool operator==(const MasConfig&) const = default;
};

std::string system_prompt(const MasConfig& mas, const std::string& role);
std::vector<ToolSchema> tool_schemas(const MasConfig& mas, const std::string& role);

// Replaces the single navigation role with the Librarian.
MasConfig integrate_librarian(const MasConfig& mas);

// "persistent" | "sparse" | "last-n". persistent and sparse change only the
// Librarian roles; last-n sets the default window on every role.
MasConfig apply_context_mode(const MasConfig& mas, const std::string& mode);

inline constexpr std::size_t kDefaultLastN = 5;
inline constexpr std::string_view kOmittedObservation = "[earlier observation omitted]";

// All but the newest n tool observations replaced by a placeholder.
std::vector<Message> apply_last_n(const std::vector<Message>& context, std::size_t n = kDefaultLastN);

// True when the newest k descriptors equal the k before them for some
// k in [1, window].
bool detect_loop(const std::vector<ActionDescriptor>& history, std::size_t window);

std::string truncate_observation(const std::string& observation, std::size_t limit);

struct Task {
  std::string task_id;
  std::string episode_id;
  std::string query;
};

struct InvocationResult {
  std::string invocation_id;
  std::string answer;
  std::size_t turns = 0;
  bool submitted = false;
  bool cap_exceeded = false;
  std::optional<LibrarianSession::CloseOutcome> librarian_outcome;
  std::uint64_t novelty_chars = 0;
};

class EpisodeRunner {
 public:
  EpisodeRunner(MasConfig mas, Gateway& gateway, Workspace& workspace, Task task);

  // Runs the orchestrator to submit. Errors in any role end the run with
  // the episode flagged incomplete; the log is still produced.
  Episode run();

  InvocationResult run_invocation(const std::string& role, const std::string& query);

  const std::vector<InvocationResult>& invocations() const noexcept { return invocations_; }
  const LibrarianSession* librarian_session(const std::string& role) const;

 private:
  struct RoleState {
    std::vector<Message> history;  // persistent policies
    std::size_t invocations = 0;
    std::unique_ptr<LibrarianSession> session;
  };
  struct TurnOutcome {
    TurnRecord record;
    std::string observation;
    std::optional<std::string> submitted;  // final answer when the turn was a successful submit
    ToolCall call;
    std::string model_message;
    bool well_formed = false;
  };

  TurnOutcome run_turn(const std::string& role, const std::string& invocation_id, std::vector<Message>& context,
                       std::vector<ActionDescriptor>& actions);
  std::string execute(const std::string& role, const ToolCall& call, std::optional<std::string>& submitted,
                      nlohmann::json& extra);
  std::string run_bash(const std::string& role, const nlohmann::json& args, nlohmann::json& extra);
  std::string run_editor(const nlohmann::json& args);
  std::string run_submit(const std::string& role, const nlohmann::json& args, std::optional<std::string>& submitted);
  std::string delegation_tool_for(const std::string& role) const;

  MasConfig mas_;
  Gateway& gateway_;
  Workspace& workspace_;
  Task task_;
  std::map<std::string, RoleState> states_;
  std::vector<TurnRecord> turns_;
  std::uint64_t next_turn_ = 0;
  std::vector<InvocationResult> invocations_;
  std::vector<std::string> delegation_stack_;
};

Episode run_episode(const MasConfig& mas, const Task& task, Gateway& gateway, Workspace& workspace);

}  // namespace agentjoule
