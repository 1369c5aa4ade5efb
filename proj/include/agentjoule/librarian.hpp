#pragma once

// The Librarian's persistent per-episode session.
//
// A session keeps the transcripts of kept invocations, a cumulative record
// of viewed lines per file, and a hash of each file's diff section. Each
// invocation is bracketed by begin_invocation() / close_invocation(); an
// invocation whose new-content size falls below the prune threshold is
// discarded and the session is restored to its pre-invocation snapshot.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "agentjoule/bm25.hpp"
#include "agentjoule/chat.hpp"
#include "agentjoule/error.hpp"
#include "agentjoule/line_range_set.hpp"
#include "agentjoule/read_ledger.hpp"

namespace agentjoule {

struct TranscriptTurn {
  std::string model_message;
  ToolCall action;
  std::string observation;
  std::optional<ReadEvent> read;  // resolved range, when the turn was a file read
};

struct InvocationTranscript {
  std::string invocation_id;
  std::string query;
  std::string diff_text;  // repository diff captured when the invocation opened
  std::vector<TranscriptTurn> turns;
  std::uint64_t novelty_chars = 0;
  std::vector<ReadEvent> reads;
};

struct FreshnessReport {
  std::vector<std::pair<std::string, std::vector<LineRange>>> changed;
  std::vector<std::string> reverted;
  bool none_changed = true;
  std::string rendered;
};

struct Submission {
  struct ViewCommand {
    std::string path;
    std::uint64_t start = 0;
    std::uint64_t end = 0;
  };
  std::string result;
  std::vector<ViewCommand> view_commands;
};

class SubmissionError : public Error {
 public:
  using Error::Error;
};

struct PersistentContext {};
struct SparseRetrievalContext {
  std::size_t k = 5;
  Bm25Params params{};
};
using ContextMode = std::variant<PersistentContext, SparseRetrievalContext>;

inline constexpr std::uint64_t kDefaultPruneThreshold = 500;

class LibrarianSession {
 public:
  explicit LibrarianSession(std::string episode_id = {}, std::uint64_t prune_threshold = kDefaultPruneThreshold)
      : episode_id_(std::move(episode_id)), prune_threshold_(prune_threshold) {}

  const std::string& episode_id() const noexcept { return episode_id_; }
  std::uint64_t prune_threshold() const noexcept { return prune_threshold_; }
  const std::vector<InvocationTranscript>& kept_invocations() const noexcept { return kept_; }
  const FileRangeMap& viewed_lines() const noexcept { return viewed_; }
  const std::map<std::string, std::string>& diff_hashes() const noexcept { return diff_hashes_; }
  bool has_history() const noexcept { return !kept_.empty(); }

  // Snapshot the state the invocation may roll back to.
  void begin_invocation();
  bool invocation_open() const noexcept { return snapshot_.has_value(); }

  // C * n_new / n_read for the (resolved) read range, then records the new
  // lines as viewed.
  std::uint64_t novelty_chars(const ReadEvent& event, std::string_view observation);

  enum class CloseOutcome { kept, pruned };
  CloseOutcome close_invocation(InvocationTranscript transcript);

  FreshnessReport build_freshness_report(std::string_view diff_text);

  // Seeds viewed lines directly, bypassing novelty accounting.
  void mark_viewed(const std::string& file, LineRange r) { viewed_[file].insert(r); }

  // State only (the open snapshot is not part of the persisted form).
  nlohmann::json to_json() const;
  static LibrarianSession from_json(const nlohmann::json& j);

  // Rebuilds a session by re-running the freshness bookkeeping and reads of
  // each kept transcript in order.
  static LibrarianSession replay(const std::string& episode_id, const std::vector<InvocationTranscript>& kept,
                                 std::uint64_t prune_threshold = kDefaultPruneThreshold);

  bool same_state(const LibrarianSession& other) const;

 private:
  struct Snapshot {
    FileRangeMap viewed;
    std::map<std::string, std::string> diff_hashes;
    std::size_t kept = 0;
  };

  std::string episode_id_;
  std::uint64_t prune_threshold_;
  std::vector<InvocationTranscript> kept_;
  FileRangeMap viewed_;
  std::map<std::string, std::string> diff_hashes_;
  std::optional<Snapshot> snapshot_;
};

std::string render_line_ranges(const std::vector<LineRange>& ranges);

// Messages in order: system prompt, history (persistent: kept transcripts;
// sparse: top-k prior read command/observation pairs), freshness report when
// the session has history, then the query. Throws ConfigError for k < 1 and
// for an empty query.
std::vector<Message> assemble_context(const LibrarianSession& session, std::string_view query, const ContextMode& mode,
                                      const std::string& system_prompt, const FreshnessReport* freshness);

// (command, observation) pairs of the reads in kept transcripts.
std::vector<std::pair<std::string, std::string>> read_store(const LibrarianSession& session);

std::vector<Message> transcript_messages(const InvocationTranscript& t);

// Pointer-only: exactly {result, view_commands}, each command a
// [path, start, end] triple. Throws SubmissionError otherwise.
Submission parse_submission(const nlohmann::json& args);

// cat -n layout: line number right-aligned to width 6, a tab, the line.
std::string render_numbered(const std::vector<std::string>& lines, std::uint64_t start, std::uint64_t end);
std::vector<std::string> split_lines(std::string_view text);

std::string expand_submission(const Submission& sub, const std::filesystem::path& workspace_root,
                              const std::string& tool_name);

}  // namespace agentjoule
