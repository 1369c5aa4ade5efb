#include "agentjoule/librarian.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "agentjoule/diff.hpp"

namespace agentjoule {

using nlohmann::json;

void LibrarianSession::begin_invocation() { snapshot_ = Snapshot{viewed_, diff_hashes_, kept_.size()}; }

std::uint64_t LibrarianSession::novelty_chars(const ReadEvent& event, std::string_view observation) {
  const LineRange range = resolve_range(event, observation);
  LineRangeSet& seen = viewed_[event.file];
  const std::uint64_t n_read = range.lines();
  const std::uint64_t n_new = n_read - seen.covered_in(range);
  seen.insert(range);
  const std::uint64_t chars = observation.size();
  if (n_new == 0) return 0;
  if (n_new == n_read) return chars;
  return chars * n_new / n_read;
}

LibrarianSession::CloseOutcome LibrarianSession::close_invocation(InvocationTranscript transcript) {
  if (transcript.novelty_chars < prune_threshold_) {
    if (snapshot_) {
      viewed_ = std::move(snapshot_->viewed);
      diff_hashes_ = std::move(snapshot_->diff_hashes);
      kept_.resize(snapshot_->kept);
    }
    snapshot_.reset();
    return CloseOutcome::pruned;
  }
  snapshot_.reset();
  kept_.push_back(std::move(transcript));
  return CloseOutcome::kept;
}

std::string render_line_ranges(const std::vector<LineRange>& ranges) {
  std::string out = "[";
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    if (i) out += ", ";
    const auto& r = ranges[i];
    out += std::to_string(r.start);
    if (r.end != r.start) out += "–" + std::to_string(r.end);
  }
  return out + "]";
}

FreshnessReport LibrarianSession::build_freshness_report(std::string_view diff_text) {
  FreshnessReport report;
  const auto files = parse_diff_files(diff_text);
  std::set<std::string> present;
  for (const auto& f : files) {
    present.insert(f.path);
    const std::string h = sha256_hex(f.section);
    auto it = diff_hashes_.find(f.path);
    if (it != diff_hashes_.end() && it->second == h) continue;
    diff_hashes_[f.path] = h;
    viewed_.erase(f.path);
    // A path can appear in several sections only in malformed input; merge.
    auto existing = std::find_if(report.changed.begin(), report.changed.end(),
                                 [&](const auto& c) { return c.first == f.path; });
    if (existing == report.changed.end()) {
      report.changed.emplace_back(f.path, f.ranges);
    } else {
      LineRangeSet merged;
      for (const auto& r : existing->second) merged.insert(r);
      for (const auto& r : f.ranges) merged.insert(r);
      existing->second = merged.intervals();
    }
  }
  for (auto it = diff_hashes_.begin(); it != diff_hashes_.end();) {
    if (present.contains(it->first)) {
      ++it;
      continue;
    }
    report.reverted.push_back(it->first);
    viewed_.erase(it->first);
    it = diff_hashes_.erase(it);
  }
  report.none_changed = report.changed.empty() && report.reverted.empty();

  std::ostringstream os;
  os << "<freshness_report>\n";
  if (report.none_changed) {
    os << "No file has changed since your previous invocation. Answer from history; do not re-view files you "
          "have already seen.\n";
  } else {
    if (!report.changed.empty()) {
      os << "Files modified since your previous invocation:\n";
      for (const auto& [path, ranges] : report.changed) {
        os << "- " << path << ": lines " << render_line_ranges(ranges) << "\n";
      }
      os << "Content outside the listed ranges is unchanged: quote it from your history. Re-view a listed range "
            "only if one of your earlier views intersects it.\n";
    }
    if (!report.reverted.empty()) {
      os << "Files reverted to the base revision (discard every cached excerpt of these files and view them "
            "again before quoting):\n";
      for (const auto& path : report.reverted) os << "- " << path << "\n";
    }
  }
  os << "</freshness_report>";
  report.rendered = os.str();
  return report;
}

namespace {

const char* form_name(ObservationForm f) {
  switch (f) {
    case ObservationForm::numbered: return "numbered";
    case ObservationForm::raw_from_start: return "raw_from_start";
    case ObservationForm::raw_other: return "raw_other";
  }
  return "numbered";
}

ObservationForm form_from(const std::string& s) {
  if (s == "raw_from_start") return ObservationForm::raw_from_start;
  if (s == "raw_other") return ObservationForm::raw_other;
  return ObservationForm::numbered;
}

json read_to_json(const ReadEvent& r) {
  return {{"file", r.file},
          {"start", r.range.start},
          {"end", r.range.end},
          {"turn_index", r.turn_index},
          {"role", r.role.name()},
          {"invocation_id", r.invocation_id},
          {"output_tokens", r.output_tokens},
          {"form", form_name(r.form)}};
}

ReadEvent read_from_json(const json& j) {
  ReadEvent r;
  r.file = j.at("file").get<std::string>();
  r.range = {j.at("start").get<std::uint64_t>(), j.at("end").get<std::uint64_t>()};
  r.turn_index = j.at("turn_index").get<std::uint64_t>();
  r.role = RoleId(j.at("role").get<std::string>());
  r.invocation_id = j.at("invocation_id").get<std::string>();
  r.output_tokens = j.at("output_tokens").get<std::uint64_t>();
  r.form = form_from(j.value("form", std::string{}));
  return r;
}

json transcript_to_json(const InvocationTranscript& t) {
  json turns = json::array();
  for (const auto& turn : t.turns) {
    json jt = {{"model_message", turn.model_message},
               {"action", {{"id", turn.action.id}, {"name", turn.action.name}, {"arguments", turn.action.arguments}}},
               {"observation", turn.observation}};
    if (turn.read) jt["read"] = read_to_json(*turn.read);
    turns.push_back(std::move(jt));
  }
  json reads = json::array();
  for (const auto& r : t.reads) reads.push_back(read_to_json(r));
  return {{"invocation_id", t.invocation_id}, {"query", t.query},       {"diff_text", t.diff_text},
          {"turns", turns},                   {"reads", reads},         {"novelty_chars", t.novelty_chars}};
}

InvocationTranscript transcript_from_json(const json& j) {
  InvocationTranscript t;
  t.invocation_id = j.at("invocation_id").get<std::string>();
  t.query = j.at("query").get<std::string>();
  t.diff_text = j.value("diff_text", std::string{});
  t.novelty_chars = j.at("novelty_chars").get<std::uint64_t>();
  for (const auto& jt : j.at("turns")) {
    TranscriptTurn turn;
    turn.model_message = jt.at("model_message").get<std::string>();
    const auto& a = jt.at("action");
    turn.action = {a.at("id").get<std::string>(), a.at("name").get<std::string>(), a.at("arguments")};
    turn.observation = jt.at("observation").get<std::string>();
    if (jt.contains("read")) turn.read = read_from_json(jt.at("read"));
    t.turns.push_back(std::move(turn));
  }
  for (const auto& r : j.at("reads")) t.reads.push_back(read_from_json(r));
  return t;
}

}  // namespace

json LibrarianSession::to_json() const {
  json viewed = json::object();
  for (const auto& [file, set] : viewed_) {
    if (set.empty()) continue;
    json arr = json::array();
    for (const auto& r : set.intervals()) arr.push_back({r.start, r.end});
    viewed[file] = arr;
  }
  json kept = json::array();
  for (const auto& t : kept_) kept.push_back(transcript_to_json(t));
  return {{"episode_id", episode_id_},
          {"prune_threshold", prune_threshold_},
          {"viewed_lines", viewed},
          {"diff_hashes", diff_hashes_},
          {"kept_invocations", kept}};
}

LibrarianSession LibrarianSession::from_json(const json& j) {
  LibrarianSession s(j.at("episode_id").get<std::string>(), j.value("prune_threshold", kDefaultPruneThreshold));
  for (const auto& [file, arr] : j.at("viewed_lines").items()) {
    for (const auto& r : arr) s.viewed_[file].insert({r[0].get<std::uint64_t>(), r[1].get<std::uint64_t>()});
  }
  s.diff_hashes_ = j.at("diff_hashes").get<std::map<std::string, std::string>>();
  for (const auto& t : j.at("kept_invocations")) s.kept_.push_back(transcript_from_json(t));
  return s;
}

LibrarianSession LibrarianSession::replay(const std::string& episode_id, const std::vector<InvocationTranscript>& kept,
                                          std::uint64_t prune_threshold) {
  LibrarianSession s(episode_id, prune_threshold);
  for (const auto& t : kept) {
    s.begin_invocation();
    s.build_freshness_report(t.diff_text);
    InvocationTranscript copy = t;
    copy.novelty_chars = 0;
    for (const auto& turn : t.turns) {
      if (turn.read) copy.novelty_chars += s.novelty_chars(*turn.read, turn.observation);
    }
    s.close_invocation(std::move(copy));
  }
  return s;
}

bool LibrarianSession::same_state(const LibrarianSession& other) const {
  // Empty per-file sets are equivalent to absent entries.
  auto strip = [](const FileRangeMap& m) {
    FileRangeMap out;
    for (const auto& [k, v] : m)
      if (!v.empty()) out.emplace(k, v);
    return out;
  };
  return episode_id_ == other.episode_id_ && strip(viewed_) == strip(other.viewed_) &&
         diff_hashes_ == other.diff_hashes_ && to_json() == other.to_json();
}

std::vector<Message> transcript_messages(const InvocationTranscript& t) {
  std::vector<Message> out;
  out.push_back(Message::user(t.query));
  for (const auto& turn : t.turns) {
    out.push_back(Message::assistant(turn.model_message, turn.action));
    out.push_back(Message::tool(turn.observation, turn.action.id));
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> read_store(const LibrarianSession& session) {
  std::vector<std::pair<std::string, std::string>> store;
  for (const auto& t : session.kept_invocations()) {
    for (const auto& turn : t.turns) {
      if (!turn.read) continue;
      store.emplace_back(turn.action.name + " " + turn.action.arguments.dump(), turn.observation);
    }
  }
  return store;
}

std::vector<Message> assemble_context(const LibrarianSession& session, std::string_view query, const ContextMode& mode,
                                      const std::string& system_prompt, const FreshnessReport* freshness) {
  if (query.empty()) throw ConfigError("assemble_context: empty query");
  std::vector<Message> out;
  out.push_back(Message::system(system_prompt));
  if (const auto* sparse = std::get_if<SparseRetrievalContext>(&mode)) {
    if (sparse->k < 1) throw ConfigError("sparse retrieval needs k >= 1");
    const auto store = read_store(session);
    const auto hits = bm25_rank(store, query, sparse->k, sparse->params);
    for (const auto& h : hits) {
      out.push_back(Message::user("Retrieved prior file read:\n$ " + store[h.index].first + "\n" +
                                  store[h.index].second));
    }
  } else {
    for (const auto& t : session.kept_invocations()) {
      auto msgs = transcript_messages(t);
      out.insert(out.end(), msgs.begin(), msgs.end());
    }
  }
  if (session.has_history() && freshness) out.push_back(Message::user(freshness->rendered));
  out.push_back(Message::user(std::string(query)));
  return out;
}

Submission parse_submission(const json& args) {
  if (!args.is_object()) throw SubmissionError("submit arguments must be an object");
  for (const auto& [k, _] : args.items()) {
    if (k != "result" && k != "view_commands") {
      throw SubmissionError("submit accepts only 'result' and 'view_commands'; got '" + k + "'");
    }
  }
  Submission s;
  if (!args.contains("result") || !args.at("result").is_string() || args.at("result").get<std::string>().empty()) {
    throw SubmissionError("submit needs a nonempty 'result' string");
  }
  s.result = args.at("result").get<std::string>();
  if (args.contains("view_commands")) {
    const auto& vc = args.at("view_commands");
    if (!vc.is_array()) throw SubmissionError("'view_commands' must be a list of [path, start, end]");
    for (const auto& c : vc) {
      if (!c.is_array() || c.size() != 3 || !c[0].is_string() || !c[1].is_number_integer() ||
          !c[2].is_number_integer()) {
        throw SubmissionError("view command " + c.dump() + " is not a [path, start, end] triple");
      }
      const auto start = c[1].get<std::int64_t>();
      const auto end = c[2].get<std::int64_t>();
      if (start < 1 || end < start) throw SubmissionError("view command " + c.dump() + " has an invalid line range");
      s.view_commands.push_back({c[0].get<std::string>(), static_cast<std::uint64_t>(start),
                                 static_cast<std::uint64_t>(end)});
    }
  }
  return s;
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      lines.emplace_back(text.substr(pos));
      break;
    }
    lines.emplace_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return lines;
}

std::string render_numbered(const std::vector<std::string>& lines, std::uint64_t start, std::uint64_t end) {
  std::string out;
  char num[32];
  for (std::uint64_t i = start; i <= end && i <= lines.size(); ++i) {
    std::snprintf(num, sizeof num, "%6llu\t", static_cast<unsigned long long>(i));
    out += num;
    out += lines[i - 1];
    out += '\n';
  }
  return out;
}

std::string expand_submission(const Submission& sub, const std::filesystem::path& root, const std::string& tool_name) {
  std::ostringstream os;
  os << "[" << tool_name << "]\n";
  for (const auto& vc : sub.view_commands) {
    const std::string triple = "[" + vc.path + ", " + std::to_string(vc.start) + ", " + std::to_string(vc.end) + "]";
    auto rel = repo_relative(vc.path, root.string());
    if (!rel) throw SubmissionError("view command " + triple + ": path is outside the repository");
    std::ifstream in(root / *rel, std::ios::binary);
    if (!in || std::filesystem::is_directory(root / *rel)) {
      throw SubmissionError("view command " + triple + ": no such file");
    }
    std::stringstream buf;
    buf << in.rdbuf();
    const auto lines = split_lines(buf.str());
    if (vc.start < 1 || vc.end < vc.start || vc.end > lines.size()) {
      throw SubmissionError("view command " + triple + ": range out of bounds (file has " +
                            std::to_string(lines.size()) + " lines)");
    }
    os << "File: " << *rel << " (lines " << vc.start << "-" << vc.end << ")\n";
    os << render_numbered(lines, vc.start, vc.end) << "\n";
  }
  os << sub.result;
  return os.str();
}

}  // namespace agentjoule
