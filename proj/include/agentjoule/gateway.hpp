#pragma once

// Chat gateway: one call interface over a remote OpenAI-compatible endpoint
// or a deterministic scripted driver, with usage capture and energy-counter
// bracketing.

#include <chrono>
#include <map>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "agentjoule/chat.hpp"
#include "agentjoule/trajectory.hpp"

namespace agentjoule {

struct SamplingConfig {
  double temperature = 0.6;
  double top_p = 0.95;
  int top_k = 20;
  double min_p = 0.0;
  double presence_penalty = 0.0;
  double repetition_penalty = 1.0;

  void validate() const;  // ConfigError
};

struct ToolSchema {
  std::string name;
  std::string description;
  nlohmann::json parameters = nlohmann::json::object();  // JSON schema of the arguments
};

struct ChatRequest {
  std::vector<Message> messages;
  std::vector<ToolSchema> tools;
  SamplingConfig sampling;
  std::string track;  // caller role; the scripted backend keys its steps on it
};

struct ChatResponse {
  std::string content;
  std::vector<ToolCall> tool_calls;
  TokenCounts usage;
  std::optional<EnergyReading> energy;
  bool usage_synthetic = false;
  bool cached_field_missing = false;
  nlohmann::json provider_usage = nlohmann::json::object();  // verbatim usage block or synthesis note
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string name() const = 0;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

// ---- clocks ----------------------------------------------------------------

class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now_ms() = 0;
  // Called once the backend returned; a simulated clock advances here.
  virtual void on_call_complete(const TokenCounts&) {}
};

class SteadyClock final : public Clock {
 public:
  double now_ms() override;
};

// Latency model: base + per_output * o + per_input * (u + c) milliseconds.
class SimulatedClock final : public Clock {
 public:
  double base_ms = 1000.0;
  double per_output_ms = 12.0;
  double per_input_ms = 0.02;

  double now_ms() override { return now_; }
  void on_call_complete(const TokenCounts& t) override;

 private:
  double now_ = 0.0;
};

// ---- meters ----------------------------------------------------------------

class EnergyMeter {
 public:
  virtual ~EnergyMeter() = default;
  virtual double read_counter_mj() = 0;  // cumulative, monotone
  virtual double read_idle_power_mw() = 0;
  // Lets simulated meters account for the call that just finished.
  virtual void on_call_complete(const TokenCounts&, double /*duration_ms*/) {}

  std::mutex& call_mutex() noexcept { return call_mutex_; }

 private:
  std::mutex call_mutex_;
};

struct LinearEnergyModel {
  double alpha_mj = 0.0;
  double beta_uncached = 30.50;
  double beta_cached = 1.36;
  double beta_output = 967.0;

  double net_mj(const TokenCounts& t) const noexcept;
};

// Counter grows by model.net_mj(tokens) + idle power * duration per call.
class MockLinearMeter final : public EnergyMeter {
 public:
  explicit MockLinearMeter(LinearEnergyModel model = {}, double idle_power_mw = 60000.0)
      : model_(model), idle_mw_(idle_power_mw) {}
  double read_counter_mj() override { return counter_; }
  double read_idle_power_mw() override { return idle_mw_; }
  void on_call_complete(const TokenCounts& t, double duration_ms) override;
  const LinearEnergyModel& model() const noexcept { return model_; }

 private:
  LinearEnergyModel model_;
  double idle_mw_;
  double counter_ = 0.0;
};

// Runs a vendor utility and reads the first number of its output. The
// counter command must print cumulative millijoules; the idle command
// milliwatts.
class ExternalCommandMeter final : public EnergyMeter {
 public:
  ExternalCommandMeter(std::string counter_command, std::string idle_command);
  double read_counter_mj() override;
  double read_idle_power_mw() override;

 private:
  std::string counter_command_;
  std::string idle_command_;
};

double parse_first_number(const std::string& text);  // ParseError when none

// ---- backends --------------------------------------------------------------

// Script layout:
//   {"tracks": {"<role>": [step, ...]}}
// step: {"match"?: str, "reply": str, "tool_calls"?: [{"name", "arguments"}],
//        "usage"?: {"uncached","cached","output"}, "label"?: str, "goto"?: str}
// A step holding only "label" is a jump target. Consecutive steps with
// "match" plus the default step that follows them form one choice: the first
// whose match occurs in the messages after the latest assistant message is
// taken, else the default. Without "usage", tokens are synthesized at one
// token per four characters and cached tokens follow a message-level prefix
// cache.
class ScriptedBackend final : public ChatBackend {
 public:
  explicit ScriptedBackend(nlohmann::json script);
  static ScriptedBackend from_file(const std::string& path);

  std::string name() const override { return "scripted"; }
  ChatResponse complete(const ChatRequest& request) override;

  std::size_t cursor(const std::string& track) const;

 private:
  struct Step {
    std::string match;
    bool has_match = false;
    std::string reply;
    std::vector<ToolCall> tool_calls;
    std::optional<TokenCounts> usage;
    std::string label;
    std::string goto_label;
    bool marker = false;
  };
  struct Track {
    std::vector<Step> steps;
    std::size_t cursor = 0;
    std::uint64_t calls = 0;
  };
  struct PrefixNode {
    std::map<std::string, std::size_t> children;
  };

  std::size_t jump_target(const Track& t, const std::string& label, const std::string& track) const;
  std::uint64_t cached_prefix_tokens(const std::vector<Message>& messages);

  std::map<std::string, Track> tracks_;
  std::vector<PrefixNode> prefix_nodes_{PrefixNode{}};
  std::mutex mutex_;
};

std::uint64_t synthesized_tokens(std::size_t chars) noexcept;  // ceil(chars / 4)
std::uint64_t message_tokens(const Message& m);

struct RemoteEndpoint {
  std::string base_url;  // e.g. http://127.0.0.1:8000/v1
  std::string api_key;
  std::string model;
  std::chrono::seconds timeout{600};

  // AGENTJOULE_ENDPOINT, AGENTJOULE_API_KEY, AGENTJOULE_MODEL.
  static RemoteEndpoint from_env();
};

class OpenAiBackend final : public ChatBackend {
 public:
  explicit OpenAiBackend(RemoteEndpoint endpoint);
  std::string name() const override { return "openai:" + endpoint_.model; }
  ChatResponse complete(const ChatRequest& request) override;

  nlohmann::json request_body(const ChatRequest& request) const;
  static ChatResponse parse_response(const nlohmann::json& body);

 private:
  RemoteEndpoint endpoint_;
};

// ---- gateway ---------------------------------------------------------------

class Gateway {
 public:
  Gateway(std::shared_ptr<ChatBackend> backend, std::shared_ptr<EnergyMeter> meter = nullptr,
          std::shared_ptr<Clock> clock = nullptr);

  // Energy is reported only when this call held the meter for its whole
  // duration; a concurrent call on the same meter gets energy absent.
  ChatResponse chat(const ChatRequest& request);

  ChatBackend& backend() noexcept { return *backend_; }
  EnergyMeter* meter() noexcept { return meter_.get(); }

 private:
  std::shared_ptr<ChatBackend> backend_;
  std::shared_ptr<EnergyMeter> meter_;
  std::shared_ptr<Clock> clock_;
};

}  // namespace agentjoule
