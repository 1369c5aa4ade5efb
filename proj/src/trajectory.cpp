#include "agentjoule/trajectory.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "agentjoule/energy.hpp"
#include "agentjoule/error.hpp"

namespace agentjoule {

using nlohmann::json;

void EnergyReading::validate() const {
  if (counter_end < counter_start) throw StructuralError("energy counter_end < counter_start");
  if (duration_ms < 0) throw StructuralError("energy duration_ms < 0");
  if (idle_power_mw < 0) throw StructuralError("energy idle_power_mw < 0");
}

RoleId::RoleId(std::string name) : name_(std::move(name)) {
  if (name_.empty()) throw StructuralError("role name must be nonempty");
}

EpisodeTotals::EpisodeTotals(std::uint64_t uncached, std::uint64_t cached, std::uint64_t output,
                             std::uint64_t total, std::optional<double> energy_j, bool energy_partial)
    : uncached_(uncached), cached_(cached), output_(output), total_(total),
      energy_j_(energy_j), energy_partial_(energy_partial) {
  if (total_ != uncached_ + cached_ + output_) {
    throw StructuralError("EpisodeTotals: total != uncached + cached + output");
  }
}

namespace {

const std::set<std::string> kTurnFields{"episode_id", "turn_index", "role", "invocation_id", "tokens",
                                         "energy", "action", "observation_chars"};

std::uint64_t get_count(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key)) throw ParseError(std::string("missing field '") + key + "'", line);
  const json& v = j.at(key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    if (v.get<std::int64_t>() < 0) throw ParseError(std::string("negative count '") + key + "'", line);
    return v.get<std::uint64_t>();
  }
  throw ParseError(std::string("field '") + key + "' must be a non-negative integer", line);
}

double get_double(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw ParseError(std::string("missing numeric field '") + key + "'", line);
  }
  return j.at(key).get<double>();
}

std::string get_string(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw ParseError(std::string("missing string field '") + key + "'", line);
  }
  return j.at(key).get<std::string>();
}

}  // namespace

json turn_to_json(const TurnRecord& t) {
  json j = t.extra.is_object() ? t.extra : json::object();
  j["episode_id"] = t.episode_id;
  j["turn_index"] = t.turn_index;
  j["role"] = t.role.name();
  j["invocation_id"] = t.invocation_id;
  j["tokens"] = {{"uncached", t.tokens.uncached}, {"cached", t.tokens.cached}, {"output", t.tokens.output}};
  if (t.energy) {
    j["energy"] = {{"counter_start", t.energy->counter_start},
                   {"counter_end", t.energy->counter_end},
                   {"idle_power_mw", t.energy->idle_power_mw},
                   {"duration_ms", t.energy->duration_ms}};
  }
  j["action"] = {{"tool", t.action.tool}, {"args", t.action.args}};
  j["observation_chars"] = t.observation_chars;
  return j;
}

TurnRecord turn_from_json(const json& j, std::size_t line) {
  if (!j.is_object()) throw ParseError("turn record must be an object", line);
  TurnRecord t;
  t.episode_id = get_string(j, "episode_id", line);
  if (t.episode_id.empty()) throw ParseError("empty episode_id", line);
  t.turn_index = get_count(j, "turn_index", line);
  const std::string role = get_string(j, "role", line);
  if (role.empty()) throw ParseError("empty role", line);
  t.role = RoleId(role);
  t.invocation_id = get_string(j, "invocation_id", line);
  if (!j.contains("tokens") || !j.at("tokens").is_object()) throw ParseError("missing 'tokens' object", line);
  const json& tok = j.at("tokens");
  t.tokens = {get_count(tok, "uncached", line), get_count(tok, "cached", line), get_count(tok, "output", line)};
  if (j.contains("energy") && !j.at("energy").is_null()) {
    const json& e = j.at("energy");
    if (!e.is_object()) throw ParseError("'energy' must be an object", line);
    EnergyReading r{get_double(e, "counter_start", line), get_double(e, "counter_end", line),
                    get_double(e, "idle_power_mw", line), get_double(e, "duration_ms", line)};
    try {
      r.validate();
    } catch (const StructuralError& err) {
      throw ParseError(err.what(), line);
    }
    t.energy = r;
  }
  if (j.contains("action")) {
    const json& a = j.at("action");
    if (!a.is_object()) throw ParseError("'action' must be an object", line);
    t.action.tool = a.value("tool", std::string{});
    t.action.args = a.contains("args") ? a.at("args") : json::object();
  }
  t.observation_chars = j.contains("observation_chars") ? get_count(j, "observation_chars", line) : 0;
  for (const auto& [key, value] : j.items()) {
    if (!kTurnFields.contains(key)) t.extra[key] = value;
  }
  return t;
}

Episode parse_episode_log(std::istream& in) {
  Episode ep;
  std::string raw;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, raw)) {
    ++line_no;
    if (raw.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(raw);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed record: ") + e.what(), line_no);
    }
    if (j.is_object() && j.value("record", std::string{}) == "episode") {
      if (have_header || !ep.turns.empty()) throw ParseError("unexpected episode header", line_no);
      have_header = true;
      ep.episode_id = get_string(j, "episode_id", line_no);
      ep.method = j.value("method", std::string{});
      if (j.contains("metadata")) {
        if (!j.at("metadata").is_object()) throw ParseError("'metadata' must be an object", line_no);
        for (const auto& [k, v] : j.at("metadata").items()) ep.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
      }
      for (const auto& [k, v] : j.items()) {
        if (k == "record" || k == "episode_id" || k == "method" || k == "metadata") continue;
        ep.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
      }
      continue;
    }
    TurnRecord t = turn_from_json(j, line_no);
    if (ep.episode_id.empty()) ep.episode_id = t.episode_id;
    if (t.episode_id != ep.episode_id) {
      throw StructuralError("line " + std::to_string(line_no) + ": episode_id '" + t.episode_id +
                            "' differs from '" + ep.episode_id + "'");
    }
    if (!ep.turns.empty() && t.turn_index <= ep.turns.back().turn_index) {
      throw StructuralError("line " + std::to_string(line_no) + ": turn_index " + std::to_string(t.turn_index) +
                            " not greater than previous " + std::to_string(ep.turns.back().turn_index));
    }
    ep.turns.push_back(std::move(t));
  }
  if (ep.episode_id.empty()) throw ParseError("log contains no episode records");
  return ep;
}

Episode parse_episode_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return parse_episode_log(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const StructuralError& e) {
    throw StructuralError(path.string() + ": " + e.what());
  }
}

void write_episode_log(std::ostream& out, const Episode& ep) {
  json header = {{"record", "episode"}, {"episode_id", ep.episode_id}, {"method", ep.method}};
  header["metadata"] = json::object();
  for (const auto& [k, v] : ep.metadata) header["metadata"][k] = v;
  out << header.dump() << '\n';
  for (const auto& t : ep.turns) out << turn_to_json(t).dump() << '\n';
}

std::string serialize_episode(const Episode& ep) {
  std::ostringstream os;
  write_episode_log(os, ep);
  return os.str();
}

std::vector<Episode> load_episodes(const std::vector<std::filesystem::path>& paths) {
  std::vector<std::filesystem::path> files;
  for (const auto& p : paths) {
    if (std::filesystem::is_directory(p)) {
      std::vector<std::filesystem::path> found;
      for (const auto& entry : std::filesystem::recursive_directory_iterator(p)) {
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl") found.push_back(entry.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (std::filesystem::exists(p)) {
      files.push_back(p);
    } else {
      throw ParseError("no such log path: " + p.string());
    }
  }
  std::vector<Episode> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(parse_episode_file(f));
  std::stable_sort(out.begin(), out.end(),
                   [](const Episode& a, const Episode& b) { return a.episode_id < b.episode_id; });
  return out;
}

EpisodeTotals aggregate_episode(const Episode& ep) {
  std::uint64_t u = 0, c = 0, o = 0;
  double energy_mj = 0.0;
  std::size_t metered = 0;
  for (const auto& t : ep.turns) {
    u += t.tokens.uncached;
    c += t.tokens.cached;
    o += t.tokens.output;
    if (t.energy) {
      energy_mj += net_energy(*t.energy);
      ++metered;
    }
  }
  const bool complete = metered == ep.turns.size();
  std::optional<double> energy_j;
  if (complete) energy_j = energy_mj / 1000.0;
  return EpisodeTotals(u, c, o, u + c + o, energy_j, !complete && metered > 0);
}

std::vector<GroupMean> aggregate_corpus(const std::vector<Episode>& eps, const std::string& group_by) {
  struct Acc {
    std::size_t n = 0;
    double u = 0, c = 0, o = 0, t = 0, e = 0;
    std::size_t ne = 0;
  };
  std::map<std::string, Acc> groups;
  for (const auto& ep : eps) {
    std::string key;
    if (group_by == "method") {
      key = ep.method;
    } else {
      auto it = ep.metadata.find(group_by);
      if (it == ep.metadata.end()) {
        throw StructuralError("episode '" + ep.episode_id + "' lacks group key '" + group_by + "'");
      }
      key = it->second;
    }
    const EpisodeTotals tot = aggregate_episode(ep);
    Acc& a = groups[key];
    ++a.n;
    a.u += static_cast<double>(tot.uncached());
    a.c += static_cast<double>(tot.cached());
    a.o += static_cast<double>(tot.output());
    a.t += static_cast<double>(tot.total());
    if (tot.energy_j()) {
      a.e += *tot.energy_j();
      ++a.ne;
    }
  }
  std::vector<GroupMean> out;
  for (const auto& [key, a] : groups) {
    GroupMean g;
    g.group = key;
    g.episodes = a.n;
    const double n = static_cast<double>(a.n);
    g.uncached = a.u / n;
    g.cached = a.c / n;
    g.output = a.o / n;
    g.total = a.t / n;
    g.episodes_with_energy = a.ne;
    if (a.ne > 0) g.energy_j = a.e / static_cast<double>(a.ne);
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace agentjoule
