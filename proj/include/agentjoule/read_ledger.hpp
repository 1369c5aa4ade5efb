#pragma once

// File-read detection and duplicate-read accounting.
//
// A read turn is a file-view call in view mode, or a shell command from the
// read family (cat, sed -n, head, tail, awk) on a repository file. Turns are
// classified by the recorded tool mode only: an editor call in an edit mode
// is a write, never a read. A read is a duplicate when its range shares at
// least one line with an earlier read of the same file since the last write
// to that file. Overlap is binary per turn; fractional novelty belongs to
// the Librarian's pruning, not here.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "agentjoule/line_range_set.hpp"
#include "agentjoule/trajectory.hpp"

namespace agentjoule {

// How the observation of a read is laid out; decides whether an open-ended
// range can be resolved against it.
enum class ObservationForm {
  numbered,        // "cat -n" style, line numbers in a left column
  raw_from_start,  // plain text starting at line 1 (cat)
  raw_other,       // plain text with unknown offset (tail)
};

struct ReadEvent {
  std::string file;  // repository-relative
  LineRange range;
  std::uint64_t turn_index = 0;
  RoleId role;
  std::string invocation_id;
  std::uint64_t output_tokens = 0;
  ObservationForm form = ObservationForm::numbered;
};

struct DuplicateFlag {
  enum class Kind { none, same_invocation, cross_invocation };
  Kind kind = Kind::none;
  std::optional<RoleId> source_role;               // iff cross_invocation
  std::optional<std::string> source_invocation_id;  // iff cross_invocation

  bool operator==(const DuplicateFlag&) const = default;
};

std::string_view to_string(DuplicateFlag::Kind k);

// Strips a leading repo_root (when given) and "./"; returns nullopt for
// paths outside the repository.
std::optional<std::string> repo_relative(std::string_view path, std::string_view repo_root = {});

// Shell words for the first simple command of a pipeline, with quotes
// removed. Operators (|, &&, ||, ;, >, >>) come back as their own words.
std::vector<std::string> shell_words(std::string_view command);

std::optional<ReadEvent> classify_action(const TurnRecord& turn, std::string_view repo_root = {});
// Target file of an editing action (editor create/str_replace/insert/undo_edit,
// sed -i, output redirection, tee).
std::optional<std::string> classify_write(const TurnRecord& turn, std::string_view repo_root = {});

// Resolves an open-ended range from the observation text when possible.
LineRange resolve_range(const ReadEvent& event, std::string_view observation);

class ReadLedger {
 public:
  // Events must arrive in strictly increasing turn order (StructuralError).
  DuplicateFlag observe_read(const ReadEvent& event);
  void apply_write(const std::string& file);

  std::size_t recorded_reads(const std::string& file) const;

 private:
  struct Recorded {
    LineRange range;
    RoleId role;
    std::string invocation_id;
  };
  struct FileHistory {
    std::vector<Recorded> reads;                       // chronological
    std::map<std::string, LineRangeSet> by_invocation;  // union per invocation
  };
  std::map<std::string, FileHistory> files_;
  std::optional<std::uint64_t> last_turn_;
};

// Token counts behind the duplication fractions; additive across episodes.
struct DuplicationCounts {
  std::map<std::string, std::uint64_t> read_output;    // per current role
  std::map<std::string, std::uint64_t> within;          // per current role
  std::map<std::pair<std::string, std::string>, std::uint64_t> across;  // (current, source)

  void merge(const DuplicationCounts& other);
};

struct DuplicationMatrix {
  std::vector<std::string> roles;  // rows and source columns, lexicographic
  // fraction[current][source], within[current]
  std::vector<std::vector<double>> across;
  std::vector<double> within;
  DuplicationCounts counts;

  double across_fraction(const std::string& current, const std::string& source) const;
  double within_fraction(const std::string& current) const;
};

DuplicationCounts duplication_counts(const Episode& episode, std::string_view repo_root = {});
DuplicationMatrix duplication_matrix(const DuplicationCounts& counts);
inline DuplicationMatrix duplication_report(const Episode& episode, std::string_view repo_root = {}) {
  return duplication_matrix(duplication_counts(episode, repo_root));
}

std::string render_duplication_text(const DuplicationMatrix& m, const std::string& title);
std::string render_duplication_csv(const DuplicationMatrix& m);

}  // namespace agentjoule
