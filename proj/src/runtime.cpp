#include "agentjoule/runtime.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "agentjoule/assets.hpp"
#include "agentjoule/energy.hpp"
#include "agentjoule/error.hpp"
#include "agentjoule/read_ledger.hpp"

namespace agentjoule {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::set<std::string> kBaseTools = {"bash", "str_replace_editor", "submit"};
constexpr const char* kLibrarianRole = "librarian";
constexpr const char* kLibrarianTool = "delegate_to_librarian";

const std::map<std::string, std::string> kLibrarianPlans = {{"ha_plan", "ha_lib_plan"},
                                                            {"boad_plan", "boad_lib_plan"}};

std::string rtrim(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == ' ' || s.back() == '\r')) s.pop_back();
  return s;
}

json policy_to_json(const ContextPolicy& p) {
  const char* kind = p.kind == ContextPolicy::Kind::fresh        ? "fresh"
                     : p.kind == ContextPolicy::Kind::persistent ? "persistent"
                                                                 : "sparse";
  if (!p.last_n && p.sparse_k == 5) return kind;
  json j = {{"kind", kind}};
  if (p.last_n) j["last_n"] = *p.last_n;
  if (p.sparse_k != 5) j["k"] = p.sparse_k;
  return j;
}

ContextPolicy::Kind kind_from(const std::string& s) {
  if (s == "fresh") return ContextPolicy::Kind::fresh;
  if (s == "persistent") return ContextPolicy::Kind::persistent;
  if (s == "sparse") return ContextPolicy::Kind::sparse;
  throw ConfigError("unknown context policy '" + s + "'");
}

ContextPolicy policy_from_json(const json& j) {
  ContextPolicy p;
  if (j.is_string()) {
    p.kind = kind_from(j.get<std::string>());
    return p;
  }
  if (!j.is_object()) throw ConfigError("context policy must be a string or an object");
  p.kind = kind_from(j.value("kind", std::string("fresh")));
  if (j.contains("last_n")) p.last_n = j.at("last_n").get<std::size_t>();
  p.sparse_k = j.value("k", std::size_t{5});
  return p;
}

}  // namespace

// ---- config ----------------------------------------------------------------

void SafeguardConfig::validate() const {
  if (!(shell_timeout_minutes > 0)) throw ConfigError("shell_timeout_minutes must be positive");
  if (observation_truncation == 0) throw ConfigError("observation_truncation must be positive");
  if (loop_window == 0) throw ConfigError("loop_window must be positive");
  if (max_turns_per_invocation == 0 || max_turns_per_episode == 0) throw ConfigError("turn caps must be positive");
}

std::chrono::milliseconds SafeguardConfig::shell_timeout() const {
  return std::chrono::milliseconds(static_cast<long long>(shell_timeout_minutes * 60000.0));
}

void MasConfig::validate() const {
  safeguards.validate();
  if (!roles.contains(orchestrator)) throw ConfigError("orchestrator '" + orchestrator + "' is not a configured role");
  for (const auto& [tool, target] : delegations) {
    if (!roles.contains(target)) throw ConfigError("delegation tool '" + tool + "' targets unknown role '" + target + "'");
    if (kBaseTools.contains(tool)) throw ConfigError("delegation tool '" + tool + "' shadows a base tool");
  }
  std::set<std::string> targets;
  for (const auto& [_, target] : delegations) targets.insert(target);
  for (const auto& [name, role] : roles) {
    if (name != orchestrator && !targets.contains(name)) {
      throw ConfigError("role '" + name + "' is not reachable by delegation; only one orchestrator is allowed");
    }
    for (const auto& t : role.tools) {
      if (!kBaseTools.contains(t) && !delegations.contains(t)) {
        throw ConfigError("role '" + name + "' lists unknown tool '" + t + "'");
      }
    }
    if (role.librarian && role.context.kind == ContextPolicy::Kind::fresh) {
      throw ConfigError("librarian role '" + name + "' needs a persistent or sparse context");
    }
    if (!role.librarian && role.context.kind == ContextPolicy::Kind::sparse) {
      throw ConfigError("sparse retrieval applies to librarian roles only ('" + name + "')");
    }
    if (role.context.last_n && *role.context.last_n == 0) throw ConfigError("last_n must be >= 1");
    if (role.context.sparse_k == 0) throw ConfigError("sparse k must be >= 1");
    if (role.prompt_asset.empty() && role.prompt.empty()) throw ConfigError("role '" + name + "' has no prompt");
    if (!role.prompt_asset.empty()) (void)assets::get(role.prompt_asset);
  }
  if (targets.contains(orchestrator)) throw ConfigError("the orchestrator cannot be a delegation target");
  for (const auto& [from, to] : tool_aliases) {
    if (!delegations.contains(to)) throw ConfigError("alias '" + from + "' points at unknown tool '" + to + "'");
  }
  if (!plan_asset.empty()) (void)assets::get(plan_asset);

  // Delegation graph must be acyclic.
  std::map<std::string, int> mark;
  std::function<void(const std::string&)> visit = [&](const std::string& r) {
    if (mark[r] == 1) throw ConfigError("delegation cycle through role '" + r + "'");
    if (mark[r] == 2) return;
    mark[r] = 1;
    for (const auto& t : roles.at(r).tools) {
      auto d = delegations.find(t);
      if (d != delegations.end()) visit(d->second);
    }
    mark[r] = 2;
  };
  for (const auto& [name, _] : roles) visit(name);
}

json MasConfig::to_json() const {
  json jr = json::object();
  for (const auto& [name, r] : roles) {
    json j = {{"tools", r.tools}, {"context", policy_to_json(r.context)}};
    if (!r.prompt_asset.empty()) j["prompt_asset"] = r.prompt_asset;
    if (!r.prompt.empty()) j["prompt"] = r.prompt;
    if (r.navigation) j["navigation"] = true;
    if (r.librarian) j["librarian"] = true;
    jr[name] = j;
  }
  return {{"name", name},
          {"method", method},
          {"orchestrator", orchestrator},
          {"swe_context_asset", swe_context_asset},
          {"plan_asset", plan_asset},
          {"policy_block", policy_block},
          {"roles", jr},
          {"delegations", delegations},
          {"tool_aliases", tool_aliases},
          {"caveman", caveman},
          {"prune_threshold", prune_threshold},
          {"safeguards",
           {{"shell_timeout_minutes", safeguards.shell_timeout_minutes},
            {"observation_truncation", safeguards.observation_truncation},
            {"loop_window", safeguards.loop_window},
            {"max_turns_per_invocation", safeguards.max_turns_per_invocation},
            {"max_turns_per_episode", safeguards.max_turns_per_episode}}}};
}

MasConfig MasConfig::from_json(const json& j) {
  MasConfig m;
  try {
    m.name = j.value("name", std::string("mas"));
    m.method = j.value("method", m.name);
    m.orchestrator = j.at("orchestrator").get<std::string>();
    m.swe_context_asset = j.value("swe_context_asset", std::string("swe_context"));
    m.plan_asset = j.value("plan_asset", std::string{});
    m.policy_block = j.value("policy_block", std::string{});
    for (const auto& [name, jr] : j.at("roles").items()) {
      RoleConfig r;
      r.prompt_asset = jr.value("prompt_asset", std::string{});
      r.prompt = jr.value("prompt", std::string{});
      r.tools = jr.value("tools", std::vector<std::string>{});
      if (jr.contains("context")) r.context = policy_from_json(jr.at("context"));
      r.navigation = jr.value("navigation", false);
      r.librarian = jr.value("librarian", false);
      m.roles.emplace(name, std::move(r));
    }
    m.delegations = j.value("delegations", std::map<std::string, std::string>{});
    m.tool_aliases = j.value("tool_aliases", std::map<std::string, std::string>{});
    m.caveman = j.value("caveman", false);
    m.prune_threshold = j.value("prune_threshold", kDefaultPruneThreshold);
    if (j.contains("safeguards")) {
      const auto& s = j.at("safeguards");
      m.safeguards.shell_timeout_minutes = s.value("shell_timeout_minutes", 30.0);
      m.safeguards.observation_truncation = s.value("observation_truncation", std::size_t{30000});
      m.safeguards.loop_window = s.value("loop_window", std::size_t{3});
      m.safeguards.max_turns_per_invocation = s.value("max_turns_per_invocation", std::size_t{100});
      m.safeguards.max_turns_per_episode = s.value("max_turns_per_episode", std::size_t{400});
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
  m.validate();
  return m;
}

MasConfig MasConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config '" + path + "' is not valid JSON");
  return from_json(j);
}

std::string system_prompt(const MasConfig& mas, const std::string& role) {
  const RoleConfig& r = mas.roles.at(role);
  std::vector<std::string> parts;
  if (role == mas.orchestrator && !mas.swe_context_asset.empty()) parts.push_back(rtrim(assets::get(mas.swe_context_asset)));
  parts.push_back(rtrim(r.prompt_asset.empty() ? r.prompt : assets::get(r.prompt_asset)));
  if (role == mas.orchestrator) {
    if (!mas.policy_block.empty()) parts.push_back(rtrim(mas.policy_block));
    if (!mas.plan_asset.empty()) parts.push_back(rtrim(assets::get(mas.plan_asset)));
  }
  if (mas.caveman) parts.push_back(rtrim(assets::get("caveman")));
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += "\n\n";
    out += p;
  }
  return out;
}

std::vector<ToolSchema> tool_schemas(const MasConfig& mas, const std::string& role) {
  const RoleConfig& r = mas.roles.at(role);
  std::vector<ToolSchema> out;
  const json str = {{"type", "string"}};
  for (const auto& t : r.tools) {
    if (t == "bash") {
      out.push_back({t, "Run a shell command in the repository root.",
                     {{"type", "object"}, {"properties", {{"command", str}}}, {"required", {"command"}}}});
    } else if (t == "str_replace_editor") {
      out.push_back(
          {t, "View, create and edit files. view prints cat -n style numbered lines.",
           {{"type", "object"},
            {"properties",
             {{"command", {{"type", "string"}, {"enum", {"view", "create", "str_replace", "insert"}}}},
              {"path", str},
              {"view_range", {{"type", "array"}, {"items", {{"type", "integer"}}}}},
              {"file_text", str},
              {"old_str", str},
              {"new_str", str},
              {"insert_line", {{"type", "integer"}}}}},
            {"required", {"command", "path"}}}});
    } else if (t == "submit") {
      json props = {{"result", str}};
      json required = {"result"};
      if (r.librarian) {
        props["view_commands"] = {
            {"type", "array"},
            {"items", {{"type", "array"}, {"prefixItems", {str, {{"type", "integer"}}, {{"type", "integer"}}}}}}};
        required.push_back("view_commands");
      }
      out.push_back({t, r.librarian ? "Finish with a short result and [path, start, end] pointers." : "Finish with your answer.",
                     {{"type", "object"}, {"properties", props}, {"required", required}}});
    } else {
      out.push_back({t, "Delegate a query to the " + mas.delegations.at(t) + " sub-agent.",
                     {{"type", "object"}, {"properties", {{"query", str}}}, {"required", {"query"}}}});
    }
  }
  return out;
}

MasConfig integrate_librarian(const MasConfig& mas) {
  std::vector<std::string> nav;
  for (const auto& [name, r] : mas.roles)
    if (r.navigation) nav.push_back(name);
  if (nav.size() != 1) {
    throw ConfigError("integrate_librarian needs exactly one navigation role, found " + std::to_string(nav.size()));
  }
  const std::string old_role = nav.front();
  if (old_role != kLibrarianRole && mas.roles.contains(kLibrarianRole)) {
    throw ConfigError("config already has a role named 'librarian'");
  }
  auto plan = kLibrarianPlans.find(mas.plan_asset);
  if (plan == kLibrarianPlans.end()) {
    throw ConfigError("no librarian rewrite of plan asset '" + mas.plan_asset + "'");
  }

  MasConfig out = mas;
  std::vector<std::string> old_tools;
  for (const auto& [tool, target] : mas.delegations)
    if (target == old_role) old_tools.push_back(tool);
  out.roles.erase(old_role);
  RoleConfig lib;
  lib.prompt_asset = "librarian_system";
  lib.tools = {"bash", "str_replace_editor", "submit"};
  lib.context.kind = ContextPolicy::Kind::persistent;
  lib.context.last_n = mas.roles.at(old_role).context.last_n;
  lib.librarian = true;
  out.roles.emplace(kLibrarianRole, lib);

  for (const auto& old_tool : old_tools) {
    out.delegations.erase(old_tool);
    if (old_tool != kLibrarianTool) out.tool_aliases[old_tool] = kLibrarianTool;
    for (auto& [_, r] : out.roles) {
      for (auto& t : r.tools)
        if (t == old_tool) t = kLibrarianTool;
      std::vector<std::string> dedup;
      for (const auto& t : r.tools)
        if (std::find(dedup.begin(), dedup.end(), t) == dedup.end()) dedup.push_back(t);
      r.tools = std::move(dedup);
    }
  }
  out.delegations[kLibrarianTool] = kLibrarianRole;
  for (auto& [from, to] : out.tool_aliases)
    if (std::find(old_tools.begin(), old_tools.end(), to) != old_tools.end()) to = kLibrarianTool;
  out.policy_block = assets::substitute(assets::get("tool_policy"), "librarian_tool", kLibrarianTool);
  out.plan_asset = plan->second;
  out.validate();
  return out;
}

MasConfig apply_context_mode(const MasConfig& mas, const std::string& mode) {
  MasConfig out = mas;
  if (mode == "persistent") {
    for (auto& [_, r] : out.roles)
      if (r.librarian) r.context.kind = ContextPolicy::Kind::persistent;
  } else if (mode == "sparse") {
    for (auto& [_, r] : out.roles)
      if (r.librarian) r.context.kind = ContextPolicy::Kind::sparse;
  } else if (mode == "last-n") {
    for (auto& [_, r] : out.roles) r.context.last_n = kDefaultLastN;
  } else {
    throw ConfigError("unknown context mode '" + mode + "' (persistent|sparse|last-n)");
  }
  out.validate();
  return out;
}

// ---- context helpers -------------------------------------------------------

std::vector<Message> apply_last_n(const std::vector<Message>& context, std::size_t n) {
  if (n < 1) throw ConfigError("last-n window must be >= 1");
  std::vector<Message> out = context;
  std::size_t seen = 0;
  for (auto it = out.rbegin(); it != out.rend(); ++it) {
    if (it->role != Message::Role::tool) continue;
    if (++seen > n) it->content = std::string(kOmittedObservation);
  }
  return out;
}

bool detect_loop(const std::vector<ActionDescriptor>& history, std::size_t window) {
  const std::size_t n = history.size();
  for (std::size_t k = 1; k <= window && 2 * k <= n; ++k) {
    if (std::equal(history.end() - static_cast<std::ptrdiff_t>(k), history.end(),
                   history.end() - static_cast<std::ptrdiff_t>(2 * k))) {
      return true;
    }
  }
  return false;
}

std::string truncate_observation(const std::string& observation, std::size_t limit) {
  if (observation.size() <= limit) return observation;
  return observation.substr(0, limit) + "\n[observation truncated: showing " + std::to_string(limit) + " of " +
         std::to_string(observation.size()) + " characters]";
}

// ---- runner ----------------------------------------------------------------

EpisodeRunner::EpisodeRunner(MasConfig mas, Gateway& gateway, Workspace& workspace, Task task)
    : mas_(std::move(mas)), gateway_(gateway), workspace_(workspace), task_(std::move(task)) {
  mas_.validate();
  if (task_.episode_id.empty()) task_.episode_id = task_.task_id;
  if (task_.episode_id.empty()) throw ConfigError("task needs an id");
  if (task_.query.empty()) throw ConfigError("task '" + task_.task_id + "' has an empty query");
}

const LibrarianSession* EpisodeRunner::librarian_session(const std::string& role) const {
  auto it = states_.find(role);
  return it == states_.end() ? nullptr : it->second.session.get();
}

std::string EpisodeRunner::delegation_tool_for(const std::string& role) const {
  for (const auto& [tool, target] : mas_.delegations)
    if (target == role) return tool;
  return "submit";
}

Episode EpisodeRunner::run() {
  Episode ep;
  ep.episode_id = task_.episode_id;
  ep.method = mas_.method;
  ep.metadata["task_id"] = task_.task_id;
  ep.metadata["config"] = mas_.name;
  std::string error;
  InvocationResult top;
  try {
    top = run_invocation(mas_.orchestrator, task_.query);
  } catch (const Error& e) {
    error = e.what();
  }
  const bool complete = error.empty() && top.submitted;
  ep.metadata["complete"] = complete ? "true" : "false";
  if (!error.empty()) ep.metadata["error"] = error;
  else if (!top.submitted) ep.metadata["error"] = top.answer;
  if (top.submitted) ep.metadata["final_answer"] = top.answer;

  json lib = json::array();
  for (const auto& inv : invocations_) {
    if (!inv.librarian_outcome) continue;
    lib.push_back({{"invocation_id", inv.invocation_id},
                   {"outcome", *inv.librarian_outcome == LibrarianSession::CloseOutcome::kept ? "kept" : "pruned"},
                   {"novelty_chars", inv.novelty_chars},
                   {"turns", inv.turns}});
  }
  if (!lib.empty()) ep.metadata["librarian_invocations"] = lib.dump();

  ep.turns = turns_;
  std::sort(ep.turns.begin(), ep.turns.end(),
            [](const TurnRecord& a, const TurnRecord& b) { return a.turn_index < b.turn_index; });
  return ep;
}

InvocationResult EpisodeRunner::run_invocation(const std::string& role, const std::string& query) {
  if (!mas_.roles.contains(role)) throw ConfigError("unknown role '" + role + "'");
  const RoleConfig& cfg = mas_.roles.at(role);
  RoleState& state = states_[role];
  InvocationResult result;
  result.invocation_id = role + "#" + std::to_string(state.invocations++);
  delegation_stack_.push_back(role);

  const std::string system = system_prompt(mas_, role);
  std::vector<Message> context;
  std::string diff_text;
  if (cfg.librarian) {
    if (!state.session) state.session = std::make_unique<LibrarianSession>(task_.episode_id, mas_.prune_threshold);
    state.session->begin_invocation();
    diff_text = workspace_.diff();
    const FreshnessReport report = state.session->build_freshness_report(diff_text);
    ContextMode mode = PersistentContext{};
    if (cfg.context.kind == ContextPolicy::Kind::sparse) mode = SparseRetrievalContext{cfg.context.sparse_k, {}};
    context = assemble_context(*state.session, query, mode, system, &report);
  } else if (cfg.context.kind == ContextPolicy::Kind::persistent) {
    if (state.history.empty()) state.history.push_back(Message::system(system));
    context = state.history;
    context.push_back(Message::user(query));
  } else {
    context = {Message::system(system), Message::user(query)};
  }

  InvocationTranscript transcript{result.invocation_id, query, diff_text, {}, 0, {}};
  std::vector<ActionDescriptor> actions;
  while (result.turns < mas_.safeguards.max_turns_per_invocation) {
    TurnOutcome out = run_turn(role, result.invocation_id, context, actions);
    ++result.turns;
    if (cfg.librarian) {
      TranscriptTurn tt{out.model_message, out.call, out.observation, std::nullopt};
      if (auto ev = classify_action(out.record)) {
        transcript.novelty_chars += state.session->novelty_chars(*ev, out.observation);
        tt.read = *ev;
        transcript.reads.push_back(*ev);
      }
      transcript.turns.push_back(std::move(tt));
    }
    if (out.submitted) {
      result.answer = *out.submitted;
      result.submitted = true;
      break;
    }
  }
  if (!result.submitted) {
    result.cap_exceeded = true;
    result.answer = "[" + role + "] stopped after reaching the cap of " +
                    std::to_string(mas_.safeguards.max_turns_per_invocation) + " turns without submitting.";
  }
  if (cfg.librarian) {
    result.novelty_chars = transcript.novelty_chars;
    result.librarian_outcome = state.session->close_invocation(std::move(transcript));
  } else if (cfg.context.kind == ContextPolicy::Kind::persistent) {
    state.history = std::move(context);
  }
  delegation_stack_.pop_back();
  invocations_.push_back(result);
  return result;
}

EpisodeRunner::TurnOutcome EpisodeRunner::run_turn(const std::string& role, const std::string& invocation_id,
                                                    std::vector<Message>& context,
                                                    std::vector<ActionDescriptor>& actions) {
  if (next_turn_ >= mas_.safeguards.max_turns_per_episode) {
    throw Error("episode reached the cap of " + std::to_string(mas_.safeguards.max_turns_per_episode) + " turns");
  }
  const RoleConfig& cfg = mas_.roles.at(role);
  TurnOutcome out;
  TurnRecord& rec = out.record;
  rec.episode_id = task_.episode_id;
  rec.turn_index = next_turn_++;
  rec.role = RoleId(role);
  rec.invocation_id = invocation_id;

  ChatRequest req;
  req.messages = cfg.context.last_n ? apply_last_n(context, *cfg.context.last_n) : context;
  req.tools = tool_schemas(mas_, role);
  req.track = role;
  ChatResponse resp = gateway_.chat(req);
  rec.tokens = resp.usage;
  rec.energy = resp.energy;
  if (resp.usage_synthetic) rec.extra["usage_synthetic"] = true;
  if (resp.cached_field_missing) rec.extra["cached_field_missing"] = true;
  rec.extra["provider_usage"] = resp.provider_usage;
  out.model_message = resp.content;

  if (resp.tool_calls.empty()) {
    out.observation = "Error: no tool call found in the response. Reply with exactly one tool call.";
    rec.observation_chars = out.observation.size();
    rec.extra["error"] = "no_tool_call";
    actions.push_back(rec.action);
    context.push_back(Message::assistant(resp.content));
    context.push_back(Message::user(out.observation));
    turns_.push_back(rec);
    return out;
  }

  ToolCall call = resp.tool_calls.front();
  if (call.id.empty()) call.id = invocation_id + "-t" + std::to_string(rec.turn_index);
  if (auto a = mas_.tool_aliases.find(call.name); a != mas_.tool_aliases.end()) {
    rec.extra["alias_of"] = call.name;
    call.name = a->second;
  }
  rec.action = {call.name, call.arguments};
  out.call = call;
  out.well_formed = true;

  std::string observation;
  if (std::find(cfg.tools.begin(), cfg.tools.end(), call.name) == cfg.tools.end()) {
    observation = "Error: tool '" + call.name + "' is not available to " + role + ".";
  } else {
    try {
      observation = execute(role, call, out.submitted, rec.extra);
    } catch (const ScriptExhaustedError&) {
      throw;
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      if (mas_.delegations.contains(call.name)) throw;
      observation = std::string("Error: ") + e.what();
    }
  }
  observation = truncate_observation(observation, mas_.safeguards.observation_truncation);

  // Record the resolved read range so log consumers need not re-derive it.
  if (auto ev = classify_action(rec)) {
    const LineRange r = resolve_range(*ev, observation);
    rec.extra["read_range"] = {r.start, r.end};
  }

  if (resp.tool_calls.size() > 1) {
    const auto extra_calls = resp.tool_calls.size() - 1;
    observation += "\n[note: " + std::to_string(extra_calls) +
                   " additional tool call(s) ignored; one action is executed per turn]";
    rec.extra["ignored_tool_calls"] = extra_calls;
  }
  actions.push_back(rec.action);
  if (detect_loop(actions, mas_.safeguards.loop_window)) {
    observation += "\n[loop detected: your recent actions repeat; change approach]";
    rec.extra["loop_detected"] = true;
  }

  out.observation = observation;
  rec.observation_chars = observation.size();
  context.push_back(Message::assistant(resp.content, call));
  context.push_back(Message::tool(observation, call.id));
  turns_.push_back(rec);
  return out;
}

std::string EpisodeRunner::execute(const std::string& role, const ToolCall& call, std::optional<std::string>& submitted,
                                   json& extra) {
  const json& args = call.arguments;
  if (call.name == "bash") return run_bash(role, args, extra);
  if (call.name == "str_replace_editor") return run_editor(args);
  if (call.name == "submit") return run_submit(role, args, submitted);
  auto d = mas_.delegations.find(call.name);
  if (d == mas_.delegations.end()) return "Error: unknown tool '" + call.name + "'.";
  if (!args.is_object() || !args.contains("query") || !args.at("query").is_string() ||
      args.at("query").get<std::string>().empty()) {
    return "Error: " + call.name + " needs a nonempty 'query' string.";
  }
  InvocationResult sub = run_invocation(d->second, args.at("query").get<std::string>());
  extra["delegated_invocation"] = sub.invocation_id;
  return sub.answer;
}

std::string EpisodeRunner::run_bash(const std::string& role, const json& args, json& extra) {
  if (!args.is_object() || !args.contains("command") || !args.at("command").is_string()) {
    return "Error: bash needs a 'command' string.";
  }
  const std::string cmd = args.at("command").get<std::string>();
  if (mas_.roles.at(role).librarian) {
    TurnRecord probe;
    probe.action = {"bash", args};
    if (classify_action(probe)) return "Error: read file contents with str_replace_editor view, not the shell.";
  }
  // Paths that visibly leave the workspace are refused before running.
  std::istringstream words(cmd);
  for (std::string w; words >> w;) {
    w.erase(std::remove_if(w.begin(), w.end(), [](char c) { return c == '\'' || c == '"'; }), w.end());
    const auto eq = w.find('=');
    if (eq != std::string::npos && w.find('/') > eq) w = w.substr(eq + 1);
    if (w.empty() || (w.front() != '/' && w.find("..") == std::string::npos && w.front() != '~')) continue;
    if (w.front() == '~' || !workspace_.contains(fs::path(w))) {
      return "Error: path '" + w + "' is outside the workspace.";
    }
  }
  const auto r = workspace_.shell(cmd, mas_.safeguards.shell_timeout());
  extra["exit_status"] = r.exit_code;
  std::string obs = r.output;
  if (r.timed_out) {
    extra["timed_out"] = true;
    obs += "\n[command timed out after " + format_number(mas_.safeguards.shell_timeout_minutes) + " minutes]";
  } else if (r.exit_code != 0) {
    obs += "\n[exit status " + std::to_string(r.exit_code) + "]";
  }
  return obs;
}

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read '" + p.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  out << text;
}

std::string arg_string(const json& args, const char* key) {
  if (!args.contains(key) || !args.at(key).is_string()) throw Error(std::string("missing string argument '") + key + "'");
  return args.at(key).get<std::string>();
}

}  // namespace

std::string EpisodeRunner::run_editor(const json& args) {
  if (!args.is_object()) throw Error("editor arguments must be an object");
  const std::string command = arg_string(args, "command");
  const std::string path = arg_string(args, "path");
  const fs::path target = workspace_.resolve(path);

  if (command == "view") {
    if (fs::is_directory(target)) {
      std::vector<std::string> entries;
      for (const auto& e : fs::directory_iterator(target)) {
        const std::string name = e.path().filename().string();
        if (name.starts_with(".")) continue;
        entries.push_back(name + (e.is_directory() ? "/" : ""));
      }
      std::sort(entries.begin(), entries.end());
      std::string out;
      for (const auto& e : entries) out += e + "\n";
      return out;
    }
    if (!fs::exists(target)) throw Error("no such file: " + path);
    const auto lines = split_lines(read_file(target));
    std::uint64_t start = 1;
    std::uint64_t end = lines.size();
    if (args.contains("view_range")) {
      const auto& vr = args.at("view_range");
      if (!vr.is_array() || vr.size() != 2 || !vr[0].is_number_integer() || !vr[1].is_number_integer()) {
        throw Error("view_range must be [start, end]");
      }
      const auto lo = vr[0].get<std::int64_t>();
      const auto hi = vr[1].get<std::int64_t>();
      if (lo < 1 || static_cast<std::uint64_t>(lo) > std::max<std::uint64_t>(lines.size(), 1) ||
          (hi != -1 && (hi < lo || static_cast<std::uint64_t>(hi) > lines.size()))) {
        throw Error("view_range [" + std::to_string(lo) + ", " + std::to_string(hi) + "] is out of bounds for " + path +
                    " (" + std::to_string(lines.size()) + " lines)");
      }
      start = static_cast<std::uint64_t>(lo);
      end = hi == -1 ? lines.size() : static_cast<std::uint64_t>(hi);
    }
    return render_numbered(lines, start, end);
  }
  if (command == "create") {
    if (fs::exists(target)) throw Error("file already exists: " + path);
    fs::create_directories(target.parent_path());
    write_file(target, arg_string(args, "file_text"));
    return "File created successfully at: " + path;
  }
  if (command == "str_replace") {
    std::string text = read_file(target);
    const std::string old_str = arg_string(args, "old_str");
    const std::string new_str = args.contains("new_str") ? arg_string(args, "new_str") : std::string{};
    if (old_str.empty()) throw Error("old_str must not be empty");
    const auto pos = text.find(old_str);
    if (pos == std::string::npos) throw Error("old_str not found in " + path);
    if (text.find(old_str, pos + 1) != std::string::npos) throw Error("old_str occurs more than once in " + path);
    text.replace(pos, old_str.size(), new_str);
    write_file(target, text);
    return "The file " + path + " has been edited.";
  }
  if (command == "insert") {
    std::string text = read_file(target);
    if (!args.contains("insert_line") || !args.at("insert_line").is_number_integer()) {
      throw Error("insert needs an integer insert_line");
    }
    const auto after = args.at("insert_line").get<std::int64_t>();
    const auto lines = split_lines(text);
    if (after < 0 || static_cast<std::uint64_t>(after) > lines.size()) throw Error("insert_line out of bounds");
    std::size_t offset = 0;
    for (std::int64_t i = 0; i < after; ++i) {
      offset = text.find('\n', offset);
      offset = offset == std::string::npos ? text.size() : offset + 1;
    }
    std::string addition = arg_string(args, "new_str");
    if (offset == text.size() && !text.empty() && text.back() != '\n') addition.insert(0, "\n");
    if (addition.empty() || addition.back() != '\n') addition += '\n';
    text.insert(offset, addition);
    write_file(target, text);
    return "The file " + path + " has been edited.";
  }
  throw Error("unknown editor command '" + command + "'");
}

std::string EpisodeRunner::run_submit(const std::string& role, const json& args, std::optional<std::string>& submitted) {
  if (mas_.roles.at(role).librarian) {
    try {
      const Submission sub = parse_submission(args);
      submitted = expand_submission(sub, workspace_.root(), delegation_tool_for(role));
    } catch (const SubmissionError& e) {
      return std::string("Error: ") + e.what();
    }
    return "Submitted.";
  }
  if (!args.is_object() || !args.contains("result") || !args.at("result").is_string()) {
    return "Error: submit needs a 'result' string.";
  }
  submitted = args.at("result").get<std::string>();
  return "Submitted.";
}

Episode run_episode(const MasConfig& mas, const Task& task, Gateway& gateway, Workspace& workspace) {
  return EpisodeRunner(mas, gateway, workspace, task).run();
}

}  // namespace agentjoule
