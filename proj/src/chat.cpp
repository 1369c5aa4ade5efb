#include "agentjoule/chat.hpp"

#include "agentjoule/error.hpp"

namespace agentjoule {

const char* to_string(Message::Role r) {
  switch (r) {
    case Message::Role::system: return "system";
    case Message::Role::user: return "user";
    case Message::Role::assistant: return "assistant";
    case Message::Role::tool: return "tool";
  }
  return "user";
}

nlohmann::json to_json(const Message& m) {
  nlohmann::json j = {{"role", to_string(m.role)}, {"content", m.content}};
  if (m.tool_call) {
    j["tool_call"] = {{"id", m.tool_call->id}, {"name", m.tool_call->name}, {"arguments", m.tool_call->arguments}};
  }
  if (!m.tool_call_id.empty()) j["tool_call_id"] = m.tool_call_id;
  return j;
}

Message message_from_json(const nlohmann::json& j) {
  Message m;
  const std::string role = j.at("role").get<std::string>();
  if (role == "system") m.role = Message::Role::system;
  else if (role == "user") m.role = Message::Role::user;
  else if (role == "assistant") m.role = Message::Role::assistant;
  else if (role == "tool") m.role = Message::Role::tool;
  else throw ParseError("unknown message role '" + role + "'");
  m.content = j.value("content", std::string{});
  if (j.contains("tool_call")) {
    const auto& c = j.at("tool_call");
    m.tool_call = ToolCall{c.value("id", std::string{}), c.at("name").get<std::string>(),
                           c.value("arguments", nlohmann::json::object())};
  }
  m.tool_call_id = j.value("tool_call_id", std::string{});
  return m;
}

std::size_t content_chars(const Message& m) {
  std::size_t n = m.content.size();
  if (m.tool_call) n += m.tool_call->name.size() + m.tool_call->arguments.dump().size();
  return n;
}

}  // namespace agentjoule
