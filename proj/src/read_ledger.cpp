#include "agentjoule/read_ledger.hpp"

#include <algorithm>
#include <cstdio>
#include <regex>
#include <set>
#include <sstream>

#include "agentjoule/error.hpp"

namespace agentjoule {

std::string_view to_string(DuplicateFlag::Kind k) {
  switch (k) {
    case DuplicateFlag::Kind::none: return "none";
    case DuplicateFlag::Kind::same_invocation: return "same_invocation";
    case DuplicateFlag::Kind::cross_invocation: return "cross_invocation";
  }
  return "none";
}

std::optional<std::string> repo_relative(std::string_view path, std::string_view repo_root) {
  std::string p(path);
  if (!repo_root.empty()) {
    std::string root(repo_root);
    while (root.size() > 1 && root.back() == '/') root.pop_back();
    if (p == root) return std::nullopt;
    if (p.rfind(root + "/", 0) == 0) p = p.substr(root.size() + 1);
  }
  while (p.rfind("./", 0) == 0) p = p.substr(2);
  if (p.empty() || p.front() == '/' || p.front() == '-' || p.front() == '~') return std::nullopt;
  std::istringstream parts(p);
  std::string part;
  while (std::getline(parts, part, '/')) {
    if (part == "..") return std::nullopt;
  }
  if (p.back() == '/') return std::nullopt;
  return p;
}

namespace {

// Empty when a quote is left open.
std::vector<std::vector<std::string>> shell_segments(std::string_view cmd) {
  std::vector<std::vector<std::string>> segments(1);
  std::string word;
  bool in_word = false;
  auto flush = [&] {
    if (in_word) segments.back().push_back(word);
    word.clear();
    in_word = false;
  };
  for (std::size_t i = 0; i < cmd.size(); ++i) {
    const char ch = cmd[i];
    if (ch == '\'') {
      in_word = true;
      const std::size_t close = cmd.find('\'', i + 1);
      if (close == std::string_view::npos) return {};
      word.append(cmd.substr(i + 1, close - i - 1));
      i = close;
    } else if (ch == '"') {
      in_word = true;
      for (++i; i < cmd.size() && cmd[i] != '"'; ++i) {
        if (cmd[i] == '\\' && i + 1 < cmd.size()) ++i;
        word.push_back(cmd[i]);
      }
      if (i >= cmd.size()) return {};
    } else if (ch == '\\' && i + 1 < cmd.size()) {
      in_word = true;
      word.push_back(cmd[++i]);
    } else if (ch == ' ' || ch == '\t' || ch == '\n') {
      flush();
    } else if (ch == '|' || ch == ';' || ch == '&') {
      flush();
      if ((ch == '|' || ch == '&') && i + 1 < cmd.size() && cmd[i + 1] == ch) ++i;
      segments.emplace_back();
    } else if (ch == '>') {
      flush();
      if (i + 1 < cmd.size() && cmd[i + 1] == '>') {
        ++i;
        segments.back().push_back(">>");
      } else {
        segments.back().push_back(">");
      }
    } else {
      in_word = true;
      word.push_back(ch);
    }
  }
  flush();
  std::erase_if(segments, [](const auto& s) { return s.empty(); });
  return segments;
}

const std::vector<std::string>* first_command(const std::vector<std::vector<std::string>>& segs) {
  for (const auto& s : segs) {
    if (s.front() == "cd") continue;
    return &s;
  }
  return nullptr;
}

bool is_number(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::uint64_t to_u64(const std::string& s) { return std::stoull(s); }

// Non-option operands, skipping option values listed in `with_value`.
std::vector<std::string> operands(const std::vector<std::string>& words, const std::set<std::string>& with_value) {
  std::vector<std::string> out;
  for (std::size_t i = 1; i < words.size(); ++i) {
    const std::string& w = words[i];
    if (w == ">" || w == ">>") break;
    if (w.size() > 1 && w[0] == '-') {
      if (with_value.contains(w)) ++i;
      continue;
    }
    out.push_back(w);
  }
  return out;
}

struct ShellRead {
  std::string path;
  LineRange range;
  ObservationForm form;
};

std::optional<LineRange> parse_sed_print(const std::string& script) {
  static const std::regex range_re(R"(^\s*(\d+)\s*(?:,\s*(\d+|\$))?\s*p\s*;?\s*$)");
  std::smatch m;
  if (!std::regex_match(script, m, range_re)) return std::nullopt;
  const std::uint64_t a = to_u64(m[1]);
  std::uint64_t b = a;
  if (m[2].matched) b = m[2] == "$" ? LineRange::kEof : to_u64(m[2]);
  if (a < 1 || b < a) return std::nullopt;
  return LineRange{a, b};
}

std::optional<LineRange> parse_awk_range(const std::string& script) {
  static const std::regex eq_re(R"(^\s*NR\s*==\s*(\d+)\s*(\{\s*print\s*(\$0)?\s*\})?\s*$)");
  static const std::regex between_re(
      R"(^\s*NR\s*(>=|>)\s*(\d+)\s*&&\s*NR\s*(<=|<)\s*(\d+)\s*(\{\s*print\s*(\$0)?\s*\})?\s*$)");
  std::smatch m;
  if (std::regex_match(script, m, eq_re)) {
    const std::uint64_t a = to_u64(m[1]);
    if (a >= 1) return LineRange{a, a};
  }
  if (std::regex_match(script, m, between_re)) {
    std::uint64_t a = to_u64(m[2]);
    std::uint64_t b = to_u64(m[4]);
    if (m[1] == ">") ++a;
    if (m[3] == "<") {
      if (b == 0) return std::nullopt;
      --b;
    }
    if (a >= 1 && a <= b) return LineRange{a, b};
  }
  return std::nullopt;
}

std::optional<ShellRead> classify_shell_read(const std::vector<std::string>& w) {
  const std::string& prog = w.front();
  if (prog == "cat") {
    auto ops = operands(w, {});
    if (ops.empty()) return std::nullopt;
    const bool numbered = std::any_of(w.begin() + 1, w.end(), [](const std::string& s) {
      return s.size() > 1 && s[0] == '-' && s[1] != '-' && s.find('n') != std::string::npos;
    });
    return ShellRead{ops.front(), LineRange::whole_file(),
                     numbered ? ObservationForm::numbered : ObservationForm::raw_from_start};
  }
  if (prog == "sed") {
    bool quiet = false;
    std::optional<std::string> script;
    std::vector<std::string> files;
    for (std::size_t i = 1; i < w.size(); ++i) {
      const std::string& s = w[i];
      if (s == ">" || s == ">>") break;
      if (s == "-n" || s == "--quiet" || s == "--silent") {
        quiet = true;
      } else if (s == "-e" && i + 1 < w.size()) {
        script = w[++i];
      } else if (s.size() > 1 && s[0] == '-') {
        if (s.find('i') != std::string::npos) return std::nullopt;  // in-place edit
        if (s.find('n') != std::string::npos) quiet = true;
      } else if (!script) {
        script = s;
      } else {
        files.push_back(s);
      }
    }
    if (!quiet || !script || files.empty()) return std::nullopt;
    auto range = parse_sed_print(*script);
    return ShellRead{files.front(), range.value_or(LineRange::whole_file()),
                     ObservationForm::raw_other};
  }
  if (prog == "head" || prog == "tail") {
    std::optional<std::string> count;
    std::vector<std::string> files;
    for (std::size_t i = 1; i < w.size(); ++i) {
      const std::string& s = w[i];
      if (s == ">" || s == ">>") break;
      if (s == "-n" && i + 1 < w.size()) {
        count = w[++i];
      } else if (s.rfind("--lines=", 0) == 0) {
        count = s.substr(8);
      } else if (s.rfind("-n", 0) == 0 && s.size() > 2) {
        count = s.substr(2);
      } else if (s.size() > 1 && s[0] == '-' && is_number(s.substr(1))) {
        count = s.substr(1);
      } else if (s.size() > 1 && s[0] == '-') {
        continue;
      } else {
        files.push_back(s);
      }
    }
    if (files.empty()) return std::nullopt;
    if (prog == "head") {
      std::uint64_t k = 10;
      if (count) {
        if (!is_number(*count)) return ShellRead{files.front(), LineRange::whole_file(), ObservationForm::raw_from_start};
        k = to_u64(*count);
      }
      if (k == 0) return std::nullopt;
      return ShellRead{files.front(), {1, k}, ObservationForm::raw_from_start};
    }
    if (count && count->size() > 1 && (*count)[0] == '+' && is_number(count->substr(1))) {
      const std::uint64_t from = std::max<std::uint64_t>(1, to_u64(count->substr(1)));
      return ShellRead{files.front(), {from, LineRange::kEof}, ObservationForm::raw_other};
    }
    return ShellRead{files.front(), LineRange::whole_file(), ObservationForm::raw_other};
  }
  if (prog == "awk") {
    auto ops = operands(w, {"-F", "-v", "-f"});
    if (ops.size() < 2) return std::nullopt;
    auto range = parse_awk_range(ops.front());
    return ShellRead{ops[1], range.value_or(LineRange::whole_file()),
                     range ? ObservationForm::raw_other : ObservationForm::raw_from_start};
  }
  return std::nullopt;
}

const std::set<std::string> kEditorTools{"str_replace_editor", "file_editor"};
const std::set<std::string> kShellTools{"bash", "shell", "execute_bash"};

std::optional<std::string> shell_command(const TurnRecord& t) {
  if (!kShellTools.contains(t.action.tool)) return std::nullopt;
  const auto& a = t.action.args;
  if (!a.is_object() || !a.contains("command") || !a.at("command").is_string()) return std::nullopt;
  return a.at("command").get<std::string>();
}

}  // namespace

std::vector<std::string> shell_words(std::string_view command) {
  const auto segs = shell_segments(command);
  const auto* first = first_command(segs);
  return first ? *first : std::vector<std::string>{};
}

std::optional<ReadEvent> classify_action(const TurnRecord& t, std::string_view repo_root) {
  ReadEvent ev;
  ev.turn_index = t.turn_index;
  ev.role = t.role;
  ev.invocation_id = t.invocation_id;
  ev.output_tokens = t.tokens.output;

  const auto& a = t.action.args;
  if (kEditorTools.contains(t.action.tool)) {
    if (!a.is_object() || a.value("command", std::string{}) != "view") return std::nullopt;
    if (!a.contains("path") || !a.at("path").is_string()) return std::nullopt;
    auto rel = repo_relative(a.at("path").get<std::string>(), repo_root);
    if (!rel) return std::nullopt;
    ev.file = *rel;
    ev.range = LineRange::whole_file();
    ev.form = ObservationForm::numbered;
    if (a.contains("view_range") && a.at("view_range").is_array() && a.at("view_range").size() == 2) {
      const auto& vr = a.at("view_range");
      if (vr[0].is_number_integer() && vr[1].is_number_integer()) {
        const std::int64_t lo = vr[0].get<std::int64_t>();
        const std::int64_t hi = vr[1].get<std::int64_t>();
        if (lo >= 1 && (hi == -1 || hi >= lo)) {
          ev.range = {static_cast<std::uint64_t>(lo), hi == -1 ? LineRange::kEof : static_cast<std::uint64_t>(hi)};
        }
      }
    }
  } else if (auto cmd = shell_command(t)) {
    const auto words = shell_words(*cmd);
    if (words.empty()) return std::nullopt;
    auto read = classify_shell_read(words);
    if (!read) return std::nullopt;
    auto rel = repo_relative(read->path, repo_root);
    if (!rel) return std::nullopt;
    ev.file = *rel;
    ev.range = read->range;
    ev.form = read->form;
  } else {
    return std::nullopt;
  }

  // The runtime records the range it resolved against the observation.
  if (t.extra.is_object() && t.extra.contains("read_range")) {
    const auto& rr = t.extra.at("read_range");
    if (rr.is_array() && rr.size() == 2 && rr[0].is_number_unsigned() && rr[1].is_number_unsigned()) {
      LineRange r{rr[0].get<std::uint64_t>(), rr[1].get<std::uint64_t>()};
      if (r.valid()) ev.range = r;
    }
  }
  return ev;
}

std::optional<std::string> classify_write(const TurnRecord& t, std::string_view repo_root) {
  const auto& a = t.action.args;
  if (kEditorTools.contains(t.action.tool)) {
    const std::string mode = a.is_object() ? a.value("command", std::string{}) : std::string{};
    if (mode == "create" || mode == "str_replace" || mode == "insert" || mode == "undo_edit") {
      if (a.contains("path") && a.at("path").is_string()) return repo_relative(a.at("path").get<std::string>(), repo_root);
    }
    return std::nullopt;
  }
  auto cmd = shell_command(t);
  if (!cmd) return std::nullopt;
  for (const auto& seg : shell_segments(*cmd)) {
    for (std::size_t i = 0; i + 1 < seg.size(); ++i) {
      if (seg[i] == ">" || seg[i] == ">>") return repo_relative(seg[i + 1], repo_root);
    }
    if (seg.front() == "tee") {
      auto ops = operands(seg, {});
      if (!ops.empty()) return repo_relative(ops.front(), repo_root);
    }
    if (seg.front() == "sed") {
      const bool in_place = std::any_of(seg.begin() + 1, seg.end(), [](const std::string& s) {
        return s.rfind("-i", 0) == 0 || s == "--in-place" || (s.size() > 1 && s[0] == '-' && s[1] != '-' && s.find('i') != std::string::npos);
      });
      if (in_place) {
        auto ops = operands(seg, {"-e"});
        if (ops.size() >= 2) return repo_relative(ops.back(), repo_root);
      }
    }
  }
  return std::nullopt;
}

LineRange resolve_range(const ReadEvent& ev, std::string_view obs) {
  if (!ev.range.open_ended()) return ev.range;
  if (ev.form == ObservationForm::numbered) {
    // Walk lines backwards to the last one with a leading number + tab.
    std::size_t end = obs.size();
    while (end > 0) {
      std::size_t begin = obs.rfind('\n', end - 1);
      begin = begin == std::string_view::npos ? 0 : begin + 1;
      std::string_view line = obs.substr(begin, end - begin);
      std::size_t i = 0;
      while (i < line.size() && line[i] == ' ') ++i;
      std::size_t j = i;
      while (j < line.size() && line[j] >= '0' && line[j] <= '9') ++j;
      if (j > i && j < line.size() && line[j] == '\t') {
        const std::uint64_t last = std::stoull(std::string(line.substr(i, j - i)));
        if (last >= ev.range.start) return {ev.range.start, last};
        break;
      }
      if (begin == 0) break;
      end = begin - 1;
    }
    return ev.range;
  }
  if (ev.form == ObservationForm::raw_from_start && ev.range.start == 1) {
    std::uint64_t lines = static_cast<std::uint64_t>(std::count(obs.begin(), obs.end(), '\n'));
    if (!obs.empty() && obs.back() != '\n') ++lines;
    if (lines >= 1) return {1, lines};
  }
  return ev.range;
}

DuplicateFlag ReadLedger::observe_read(const ReadEvent& ev) {
  if (last_turn_ && ev.turn_index <= *last_turn_) {
    throw StructuralError("read event at turn " + std::to_string(ev.turn_index) + " after turn " +
                          std::to_string(*last_turn_));
  }
  if (!ev.range.valid()) throw StructuralError("read event with empty range");
  last_turn_ = ev.turn_index;

  FileHistory& h = files_[ev.file];
  DuplicateFlag flag;
  auto own = h.by_invocation.find(ev.invocation_id);
  if (own != h.by_invocation.end() && own->second.overlaps(ev.range)) {
    flag.kind = DuplicateFlag::Kind::same_invocation;
  } else {
    for (auto it = h.reads.rbegin(); it != h.reads.rend(); ++it) {
      if (it->invocation_id != ev.invocation_id && it->range.overlaps(ev.range)) {
        flag.kind = DuplicateFlag::Kind::cross_invocation;
        flag.source_role = it->role;
        flag.source_invocation_id = it->invocation_id;
        break;
      }
    }
  }
  h.reads.push_back({ev.range, ev.role, ev.invocation_id});
  h.by_invocation[ev.invocation_id].insert(ev.range);
  return flag;
}

void ReadLedger::apply_write(const std::string& file) { files_.erase(file); }

std::size_t ReadLedger::recorded_reads(const std::string& file) const {
  auto it = files_.find(file);
  return it == files_.end() ? 0 : it->second.reads.size();
}

void DuplicationCounts::merge(const DuplicationCounts& o) {
  for (const auto& [k, v] : o.read_output) read_output[k] += v;
  for (const auto& [k, v] : o.within) within[k] += v;
  for (const auto& [k, v] : o.across) across[k] += v;
}

DuplicationCounts duplication_counts(const Episode& ep, std::string_view repo_root) {
  DuplicationCounts c;
  ReadLedger ledger;
  for (const auto& t : ep.turns) {
    if (auto w = classify_write(t, repo_root)) {
      ledger.apply_write(*w);
      continue;
    }
    auto ev = classify_action(t, repo_root);
    if (!ev) continue;
    const std::string& role = t.role.name();
    c.read_output[role] += t.tokens.output;
    const DuplicateFlag flag = ledger.observe_read(*ev);
    if (flag.kind == DuplicateFlag::Kind::same_invocation) {
      c.within[role] += t.tokens.output;
    } else if (flag.kind == DuplicateFlag::Kind::cross_invocation) {
      c.across[{role, flag.source_role->name()}] += t.tokens.output;
    }
  }
  return c;
}

DuplicationMatrix duplication_matrix(const DuplicationCounts& c) {
  DuplicationMatrix m;
  m.counts = c;
  std::set<std::string> roles;
  for (const auto& [r, _] : c.read_output) roles.insert(r);
  for (const auto& [key, _] : c.across) roles.insert(key.second);
  m.roles.assign(roles.begin(), roles.end());
  const std::size_t k = m.roles.size();
  m.across.assign(k, std::vector<double>(k, 0.0));
  m.within.assign(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    auto den_it = c.read_output.find(m.roles[i]);
    const double den = den_it == c.read_output.end() ? 0.0 : static_cast<double>(den_it->second);
    if (den == 0.0) continue;
    if (auto w = c.within.find(m.roles[i]); w != c.within.end()) m.within[i] = static_cast<double>(w->second) / den;
    for (std::size_t j = 0; j < k; ++j) {
      if (auto a = c.across.find({m.roles[i], m.roles[j]}); a != c.across.end()) {
        m.across[i][j] = static_cast<double>(a->second) / den;
      }
    }
  }
  return m;
}

double DuplicationMatrix::across_fraction(const std::string& current, const std::string& source) const {
  auto i = std::find(roles.begin(), roles.end(), current);
  auto j = std::find(roles.begin(), roles.end(), source);
  if (i == roles.end() || j == roles.end()) return 0.0;
  return across[i - roles.begin()][j - roles.begin()];
}

double DuplicationMatrix::within_fraction(const std::string& current) const {
  auto i = std::find(roles.begin(), roles.end(), current);
  return i == roles.end() ? 0.0 : within[i - roles.begin()];
}

namespace {
std::string pct(double f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * f);
  return buf;
}
}  // namespace

std::string render_duplication_text(const DuplicationMatrix& m, const std::string& title) {
  std::ostringstream os;
  os << "Output duplication (% of file-read output tokens): " << title << "\n";
  std::size_t w = 8;
  for (const auto& r : m.roles) w = std::max(w, r.size() + 1);
  auto cell = [&](const std::string& s) {
    os << std::string(w > s.size() ? w - s.size() : 0, ' ') << s;
  };
  os << std::string(w, ' ') << " | across invocations, source role\n";
  cell("current");
  os << " |";
  for (const auto& r : m.roles) cell(r);
  os << " |";
  cell("within");
  os << "\n";
  for (std::size_t i = 0; i < m.roles.size(); ++i) {
    cell(m.roles[i]);
    os << " |";
    for (std::size_t j = 0; j < m.roles.size(); ++j) cell(pct(m.across[i][j]));
    os << " |";
    cell(pct(m.within[i]));
    os << "\n";
  }
  return os.str();
}

std::string render_duplication_csv(const DuplicationMatrix& m) {
  std::ostringstream os;
  os << "current";
  for (const auto& r : m.roles) os << ",across_" << r;
  os << ",within\n";
  for (std::size_t i = 0; i < m.roles.size(); ++i) {
    os << m.roles[i];
    for (std::size_t j = 0; j < m.roles.size(); ++j) os << ',' << pct(m.across[i][j]);
    os << ',' << pct(m.within[i]) << '\n';
  }
  return os.str();
}

}  // namespace agentjoule
