#include "agentjoule/gateway.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>

#include <httplib.h>

#include "agentjoule/error.hpp"
#include "agentjoule/subprocess.hpp"

namespace agentjoule {

using nlohmann::json;

void SamplingConfig::validate() const {
  if (!(temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must lie in (0, 1]");
}

double SteadyClock::now_ms() {
  using namespace std::chrono;
  return duration<double, std::milli>(steady_clock::now().time_since_epoch()).count();
}

void SimulatedClock::on_call_complete(const TokenCounts& t) {
  now_ += base_ms + per_output_ms * static_cast<double>(t.output) + per_input_ms * static_cast<double>(t.input());
}

double LinearEnergyModel::net_mj(const TokenCounts& t) const noexcept {
  return alpha_mj + beta_uncached * static_cast<double>(t.uncached) + beta_cached * static_cast<double>(t.cached) +
         beta_output * static_cast<double>(t.output);
}

void MockLinearMeter::on_call_complete(const TokenCounts& t, double duration_ms) {
  counter_ += model_.net_mj(t) + idle_mw_ * duration_ms / 1000.0;
}

double parse_first_number(const std::string& text) {
  static const std::regex number(R"([-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?)");
  std::smatch m;
  if (!std::regex_search(text, m, number)) throw ParseError("no number in meter output: '" + text + "'");
  return std::stod(m.str());
}

ExternalCommandMeter::ExternalCommandMeter(std::string counter_command, std::string idle_command)
    : counter_command_(std::move(counter_command)), idle_command_(std::move(idle_command)) {
  if (counter_command_.empty() || idle_command_.empty()) throw ConfigError("external meter needs both commands");
}

namespace {

double run_meter_command(const std::string& cmd) {
  const auto r = run_shell(cmd, {}, std::chrono::seconds(30));
  if (r.timed_out || r.exit_code != 0) {
    throw Error("meter command '" + cmd + "' failed with status " + std::to_string(r.exit_code));
  }
  return parse_first_number(r.output);
}

}  // namespace

double ExternalCommandMeter::read_counter_mj() { return run_meter_command(counter_command_); }
double ExternalCommandMeter::read_idle_power_mw() { return run_meter_command(idle_command_); }

// ---- scripted --------------------------------------------------------------

std::uint64_t synthesized_tokens(std::size_t chars) noexcept { return (chars + 3) / 4; }

std::uint64_t message_tokens(const Message& m) { return synthesized_tokens(content_chars(m)); }

namespace {

TokenCounts usage_from_json(const json& j) {
  TokenCounts t;
  t.uncached = j.value("uncached", std::uint64_t{0});
  t.cached = j.value("cached", std::uint64_t{0});
  t.output = j.value("output", std::uint64_t{0});
  return t;
}

}  // namespace

ScriptedBackend::ScriptedBackend(json script) {
  if (!script.is_object() || !script.contains("tracks") || !script.at("tracks").is_object()) {
    throw ParseError("script must be an object with a 'tracks' object");
  }
  for (const auto& [role, steps] : script.at("tracks").items()) {
    if (!steps.is_array()) throw ParseError("track '" + role + "' must be a list of steps");
    Track track;
    for (const auto& js : steps) {
      if (!js.is_object()) throw ParseError("track '" + role + "': step must be an object");
      Step s;
      s.label = js.value("label", std::string{});
      if (js.size() == 1 && js.contains("label")) {
        s.marker = true;
        track.steps.push_back(std::move(s));
        continue;
      }
      if (!js.contains("reply")) throw ParseError("track '" + role + "': step without 'reply'");
      s.reply = js.at("reply").get<std::string>();
      if (js.contains("match")) {
        s.has_match = true;
        s.match = js.at("match").get<std::string>();
      }
      if (js.contains("tool_calls")) {
        for (const auto& c : js.at("tool_calls")) {
          s.tool_calls.push_back({"", c.at("name").get<std::string>(), c.value("arguments", json::object())});
        }
      }
      if (js.contains("usage")) s.usage = usage_from_json(js.at("usage"));
      s.goto_label = js.value("goto", std::string{});
      track.steps.push_back(std::move(s));
    }
    tracks_.emplace(role, std::move(track));
  }
  for (const auto& [role, t] : tracks_) {
    for (const auto& s : t.steps)
      if (!s.goto_label.empty()) (void)jump_target(t, s.goto_label, role);
  }
}

ScriptedBackend ScriptedBackend::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open script '" + path + "'");
  try {
    return ScriptedBackend(json::parse(in));
  } catch (const json::exception& e) {
    throw ParseError("script '" + path + "': " + e.what());
  }
}

std::size_t ScriptedBackend::cursor(const std::string& track) const {
  auto it = tracks_.find(track);
  return it == tracks_.end() ? 0 : it->second.cursor;
}

std::size_t ScriptedBackend::jump_target(const Track& t, const std::string& label, const std::string& track) const {
  for (std::size_t i = 0; i < t.steps.size(); ++i)
    if (t.steps[i].label == label) return i;
  throw ParseError("track '" + track + "': unknown goto label '" + label + "'");
}

std::uint64_t ScriptedBackend::cached_prefix_tokens(const std::vector<Message>& messages) {
  std::size_t node = 0;
  std::uint64_t cached = 0;
  bool matching = true;
  for (const auto& m : messages) {
    const std::string key = to_json(m).dump();
    auto it = prefix_nodes_[node].children.find(key);
    if (it != prefix_nodes_[node].children.end()) {
      node = it->second;
      if (matching) cached += message_tokens(m);
      continue;
    }
    matching = false;
    prefix_nodes_.push_back({});
    const std::size_t child = prefix_nodes_.size() - 1;
    prefix_nodes_[node].children.emplace(key, child);
    node = child;
  }
  return cached;
}

ChatResponse ScriptedBackend::complete(const ChatRequest& request) {
  std::lock_guard lk(mutex_);
  auto it = tracks_.find(request.track);
  if (it == tracks_.end()) throw ScriptExhaustedError("script has no track for role '" + request.track + "'");
  Track& t = it->second;

  std::string recent;
  for (auto m = request.messages.rbegin(); m != request.messages.rend() && m->role != Message::Role::assistant; ++m) {
    recent.insert(0, m->content + "\n");
  }

  while (t.cursor < t.steps.size() && t.steps[t.cursor].marker) ++t.cursor;
  if (t.cursor >= t.steps.size()) {
    throw ScriptExhaustedError("script for role '" + request.track + "' exhausted after " + std::to_string(t.calls) +
                               " calls");
  }
  std::size_t end = t.cursor;
  while (end < t.steps.size() && t.steps[end].has_match) ++end;
  std::size_t chosen = end;
  for (std::size_t i = t.cursor; i < end; ++i) {
    if (recent.find(t.steps[i].match) != std::string::npos) {
      chosen = i;
      break;
    }
  }
  if (chosen >= t.steps.size() || t.steps[chosen].marker) {
    throw ScriptExhaustedError("script for role '" + request.track + "': no branch matched and no default step");
  }
  const Step& step = t.steps[chosen];
  t.cursor = step.goto_label.empty() ? end + 1 : jump_target(t, step.goto_label, request.track);
  ++t.calls;

  ChatResponse r;
  r.content = step.reply;
  r.tool_calls = step.tool_calls;
  for (std::size_t i = 0; i < r.tool_calls.size(); ++i) {
    r.tool_calls[i].id = request.track + "-" + std::to_string(t.calls) + "-" + std::to_string(i);
  }
  const std::uint64_t cached = cached_prefix_tokens(request.messages);
  if (step.usage) {
    r.usage = *step.usage;
    r.provider_usage = {{"source", "script"}};
  } else {
    std::uint64_t prompt = 0;
    for (const auto& m : request.messages) prompt += message_tokens(m);
    std::size_t out_chars = step.reply.size();
    for (const auto& c : step.tool_calls) out_chars += c.name.size() + c.arguments.dump().size();
    r.usage = {prompt - cached, cached, std::max<std::uint64_t>(1, synthesized_tokens(out_chars))};
    r.usage_synthetic = true;
    r.provider_usage = {{"source", "synthesized"}, {"rule", "ceil(chars/4)"}};
  }
  return r;
}

// ---- remote ----------------------------------------------------------------

RemoteEndpoint RemoteEndpoint::from_env() {
  RemoteEndpoint e;
  auto get = [](const char* k) {
    const char* v = std::getenv(k);
    return std::string(v ? v : "");
  };
  e.base_url = get("AGENTJOULE_ENDPOINT");
  e.api_key = get("AGENTJOULE_API_KEY");
  e.model = get("AGENTJOULE_MODEL");
  if (e.base_url.empty()) throw ConfigError("AGENTJOULE_ENDPOINT is not set");
  if (e.model.empty()) throw ConfigError("AGENTJOULE_MODEL is not set");
  return e;
}

OpenAiBackend::OpenAiBackend(RemoteEndpoint endpoint) : endpoint_(std::move(endpoint)) {
  if (endpoint_.base_url.empty()) throw ConfigError("remote endpoint URL is empty");
}

json OpenAiBackend::request_body(const ChatRequest& request) const {
  json msgs = json::array();
  for (const auto& m : request.messages) {
    json jm = {{"role", to_string(m.role)}, {"content", m.content}};
    if (m.tool_call) {
      jm["tool_calls"] = json::array({{{"id", m.tool_call->id},
                                       {"type", "function"},
                                       {"function", {{"name", m.tool_call->name},
                                                     {"arguments", m.tool_call->arguments.dump()}}}}});
    }
    if (m.role == Message::Role::tool) jm["tool_call_id"] = m.tool_call_id;
    msgs.push_back(std::move(jm));
  }
  json body = {{"model", endpoint_.model},
               {"messages", msgs},
               {"temperature", request.sampling.temperature},
               {"top_p", request.sampling.top_p},
               {"top_k", request.sampling.top_k},
               {"min_p", request.sampling.min_p},
               {"presence_penalty", request.sampling.presence_penalty},
               {"repetition_penalty", request.sampling.repetition_penalty},
               {"stream", false}};
  if (!request.tools.empty()) {
    json tools = json::array();
    for (const auto& t : request.tools) {
      tools.push_back({{"type", "function"},
                       {"function", {{"name", t.name}, {"description", t.description}, {"parameters", t.parameters}}}});
    }
    body["tools"] = std::move(tools);
  }
  return body;
}

ChatResponse OpenAiBackend::parse_response(const json& body) {
  if (!body.contains("choices") || body.at("choices").empty()) throw ParseError("completion has no choices");
  const auto& msg = body.at("choices").at(0).at("message");
  ChatResponse r;
  if (msg.contains("content") && msg.at("content").is_string()) r.content = msg.at("content").get<std::string>();
  if (msg.contains("tool_calls") && msg.at("tool_calls").is_array()) {
    for (const auto& c : msg.at("tool_calls")) {
      const auto& fn = c.at("function");
      json args = json::object();
      const auto& raw = fn.value("arguments", json("{}"));
      if (raw.is_string()) {
        args = json::parse(raw.get<std::string>(), nullptr, false);
        if (args.is_discarded()) args = {{"_unparsed", raw}};
      } else {
        args = raw;
      }
      r.tool_calls.push_back({c.value("id", std::string{}), fn.at("name").get<std::string>(), std::move(args)});
    }
  }
  if (!body.contains("usage") || !body.at("usage").is_object()) throw ParseError("completion has no usage block");
  const auto& u = body.at("usage");
  const auto prompt = u.at("prompt_tokens").get<std::uint64_t>();
  r.usage.output = u.at("completion_tokens").get<std::uint64_t>();
  std::uint64_t cached = 0;
  if (u.contains("prompt_tokens_details") && u.at("prompt_tokens_details").is_object() &&
      u.at("prompt_tokens_details").contains("cached_tokens") &&
      u.at("prompt_tokens_details").at("cached_tokens").is_number_integer()) {
    cached = u.at("prompt_tokens_details").at("cached_tokens").get<std::uint64_t>();
  } else {
    r.cached_field_missing = true;
  }
  if (cached > prompt) throw ParseError("cached_tokens exceeds prompt_tokens");
  r.usage.cached = cached;
  r.usage.uncached = prompt - cached;
  r.provider_usage = u;
  return r;
}

ChatResponse OpenAiBackend::complete(const ChatRequest& request) {
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(endpoint_.base_url, m, url)) throw ConfigError("bad endpoint URL '" + endpoint_.base_url + "'");
  std::string prefix = m[2].str();
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  httplib::Client client(m[1].str());
  const auto secs = static_cast<time_t>(endpoint_.timeout.count());
  client.set_read_timeout(secs, 0);
  client.set_write_timeout(secs, 0);
  client.set_connection_timeout(30, 0);
  httplib::Headers headers;
  if (!endpoint_.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint_.api_key);

  auto res = client.Post(prefix + "/chat/completions", headers, request_body(request).dump(), "application/json");
  if (!res) throw RetriableError("chat request failed: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500) {
    throw RetriableError("endpoint returned HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) throw Error("endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body);
  json body = json::parse(res->body, nullptr, false);
  if (body.is_discarded()) throw RetriableError("endpoint returned a non-JSON body");
  return parse_response(body);
}

// ---- gateway ---------------------------------------------------------------

Gateway::Gateway(std::shared_ptr<ChatBackend> backend, std::shared_ptr<EnergyMeter> meter, std::shared_ptr<Clock> clock)
    : backend_(std::move(backend)), meter_(std::move(meter)), clock_(std::move(clock)) {
  if (!backend_) throw ConfigError("gateway needs a backend");
  if (!clock_) clock_ = std::make_shared<SteadyClock>();
}

ChatResponse Gateway::chat(const ChatRequest& request) {
  if (request.messages.empty()) throw ConfigError("chat request has no messages");
  request.sampling.validate();
  if (!meter_) {
    auto r = backend_->complete(request);
    clock_->on_call_complete(r.usage);
    return r;
  }
  std::unique_lock lock(meter_->call_mutex(), std::try_to_lock);
  if (!lock.owns_lock()) {
    auto r = backend_->complete(request);
    r.energy.reset();
    return r;
  }
  EnergyReading e;
  e.counter_start = meter_->read_counter_mj();
  const double t0 = clock_->now_ms();
  auto r = backend_->complete(request);
  clock_->on_call_complete(r.usage);
  e.duration_ms = clock_->now_ms() - t0;
  meter_->on_call_complete(r.usage, e.duration_ms);
  e.counter_end = meter_->read_counter_mj();
  e.idle_power_mw = meter_->read_idle_power_mw();
  r.energy = e;
  return r;
}

}  // namespace agentjoule
