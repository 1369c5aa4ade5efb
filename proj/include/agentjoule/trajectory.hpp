#pragma once

// Episode / turn data model and the newline-delimited trajectory log.
//
// Log layout: an optional header record followed by one record per turn.
//
//   {"record":"episode","episode_id":"e1","method":"hyperagent","metadata":{...}}
//   {"episode_id":"e1","turn_index":0,"role":"orchestrator","invocation_id":"orchestrator#0",
//    "tokens":{"uncached":812,"cached":0,"output":64},
//    "energy":{"counter_start":...,"counter_end":...,"idle_power_mw":...,"duration_ms":...},
//    "action":{"tool":"bash","args":{...}},"observation_chars":120}
//
// Energy is optional per turn. Output counts are whatever the serving
// gateway reported; whether hidden reasoning tokens are included depends on
// the provider. Unknown turn fields are kept in TurnRecord::extra and
// unknown header fields in Episode::metadata.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace agentjoule {

struct TokenCounts {
  std::uint64_t uncached = 0;
  std::uint64_t cached = 0;
  std::uint64_t output = 0;

  std::uint64_t input() const noexcept { return uncached + cached; }
  std::uint64_t total() const noexcept { return uncached + cached + output; }
  bool operator==(const TokenCounts&) const = default;
};

// Cumulative device counter bracketing one call, in mJ / mW / ms.
struct EnergyReading {
  double counter_start = 0.0;
  double counter_end = 0.0;
  double idle_power_mw = 0.0;
  double duration_ms = 0.0;

  // Throws StructuralError when the invariants do not hold.
  void validate() const;
  bool operator==(const EnergyReading&) const = default;
};

class RoleId {
 public:
  RoleId() = default;
  explicit RoleId(std::string name);
  const std::string& name() const noexcept { return name_; }
  auto operator<=>(const RoleId&) const = default;

 private:
  std::string name_;
};

struct ActionDescriptor {
  std::string tool;  // empty when the model produced no tool call
  nlohmann::json args = nlohmann::json::object();
  bool operator==(const ActionDescriptor&) const = default;
};

struct TurnRecord {
  std::string episode_id;
  std::uint64_t turn_index = 0;
  RoleId role;
  std::string invocation_id;
  TokenCounts tokens;
  std::optional<EnergyReading> energy;
  ActionDescriptor action;
  std::uint64_t observation_chars = 0;
  nlohmann::json extra = nlohmann::json::object();

  bool operator==(const TurnRecord&) const = default;
};

struct Episode {
  std::string episode_id;
  std::string method;
  std::vector<TurnRecord> turns;
  std::map<std::string, std::string> metadata;

  bool operator==(const Episode&) const = default;
};

class EpisodeTotals {
 public:
  EpisodeTotals() = default;
  EpisodeTotals(std::uint64_t uncached, std::uint64_t cached, std::uint64_t output,
                std::uint64_t total, std::optional<double> energy_j, bool energy_partial);

  std::uint64_t uncached() const noexcept { return uncached_; }
  std::uint64_t cached() const noexcept { return cached_; }
  std::uint64_t output() const noexcept { return output_; }
  std::uint64_t total() const noexcept { return total_; }
  // Present only when every turn carried a reading.
  std::optional<double> energy_j() const noexcept { return energy_j_; }
  // Some, but not all, turns carried a reading.
  bool energy_partial() const noexcept { return energy_partial_; }

 private:
  std::uint64_t uncached_ = 0;
  std::uint64_t cached_ = 0;
  std::uint64_t output_ = 0;
  std::uint64_t total_ = 0;
  std::optional<double> energy_j_ = 0.0;
  bool energy_partial_ = false;
};

struct GroupMean {
  std::string group;
  std::size_t episodes = 0;
  double uncached = 0.0;
  double cached = 0.0;
  double output = 0.0;
  double total = 0.0;
  std::optional<double> energy_j;        // mean over episodes with complete energy
  std::size_t episodes_with_energy = 0;
};

nlohmann::json turn_to_json(const TurnRecord& turn);
TurnRecord turn_from_json(const nlohmann::json& j, std::size_t line = 0);

Episode parse_episode_log(std::istream& in);
Episode parse_episode_file(const std::filesystem::path& path);
void write_episode_log(std::ostream& out, const Episode& ep);
std::string serialize_episode(const Episode& ep);

// Expands directories to their *.jsonl files (sorted) and parses each file
// as one episode. Result is ordered by episode_id for order-independence.
std::vector<Episode> load_episodes(const std::vector<std::filesystem::path>& paths);

EpisodeTotals aggregate_episode(const Episode& ep);

// group_by == "method" groups on Episode::method, any other key on metadata.
// Groups are returned in lexicographic order.
std::vector<GroupMean> aggregate_corpus(const std::vector<Episode>& eps, const std::string& group_by);

}  // namespace agentjoule
