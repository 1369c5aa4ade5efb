#include "agentjoule/assets.hpp"

#include <cctype>
#include <map>

#include "agentjoule/error.hpp"

namespace agentjoule::assets {

namespace detail {
const std::map<std::string, std::string>& bundled();
}

const std::string& get(const std::string& name) {
  const auto& table = detail::bundled();
  auto it = table.find(name);
  if (it == table.end()) throw ConfigError("unknown prompt asset '" + name + "'");
  return it->second;
}

bool has(const std::string& name) { return detail::bundled().contains(name); }

std::vector<std::string> names() {
  std::vector<std::string> out;
  for (const auto& [k, _] : detail::bundled()) out.push_back(k);
  return out;
}

std::string substitute(std::string text, std::string_view key, std::string_view value) {
  const std::string needle = "{" + std::string(key) + "}";
  for (std::size_t pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + value.size())) {
    text.replace(pos, needle.size(), value);
  }
  return text;
}

std::vector<std::string> plan_steps(std::string_view plan) {
  std::vector<std::string> steps;
  std::size_t pos = 0;
  while (pos < plan.size()) {
    std::size_t end = plan.find("\n\n", pos);
    if (end == std::string_view::npos) end = plan.size();
    std::string_view para = plan.substr(pos, end - pos);
    while (!para.empty() && para.back() == '\n') para.remove_suffix(1);
    if (!para.empty() && std::isdigit(static_cast<unsigned char>(para.front()))) steps.emplace_back(para);
    pos = end + 2;
  }
  return steps;
}

}  // namespace agentjoule::assets
