#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace agentjoule {

struct ToolCall {
  std::string id;
  std::string name;
  nlohmann::json arguments = nlohmann::json::object();
  bool operator==(const ToolCall&) const = default;
};

struct Message {
  enum class Role { system, user, assistant, tool };
  Role role = Role::user;
  std::string content;
  std::optional<ToolCall> tool_call;  // assistant messages
  std::string tool_call_id;           // tool messages

  static Message system(std::string c) { return {Role::system, std::move(c), std::nullopt, {}}; }
  static Message user(std::string c) { return {Role::user, std::move(c), std::nullopt, {}}; }
  static Message assistant(std::string c, std::optional<ToolCall> call = std::nullopt) {
    return {Role::assistant, std::move(c), std::move(call), {}};
  }
  static Message tool(std::string c, std::string call_id) { return {Role::tool, std::move(c), std::nullopt, std::move(call_id)}; }

  bool operator==(const Message&) const = default;
};

const char* to_string(Message::Role r);
nlohmann::json to_json(const Message& m);
Message message_from_json(const nlohmann::json& j);
std::size_t content_chars(const Message& m);

}  // namespace agentjoule
