#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace agentjoule::assets {

// Prompt assets compiled into the library, keyed by file stem.
const std::string& get(const std::string& name);  // ConfigError when unknown
bool has(const std::string& name);
std::vector<std::string> names();

// Replaces every "{key}" in text.
std::string substitute(std::string text, std::string_view key, std::string_view value);

// Numbered paragraphs of a plan asset ("1. ...", "2. ...").
std::vector<std::string> plan_steps(std::string_view plan);

}  // namespace agentjoule::assets
