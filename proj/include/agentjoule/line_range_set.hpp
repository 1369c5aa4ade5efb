#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace agentjoule {

// 1-based inclusive line interval. A range ending at kEof stands for "to the
// end of the file" when the length is unknown; it overlaps every range of
// the file that starts at or after its start.
struct LineRange {
  static constexpr std::uint64_t kEof = std::uint64_t{1} << 40;

  std::uint64_t start = 1;
  std::uint64_t end = 1;

  static LineRange whole_file() { return {1, kEof}; }
  bool open_ended() const noexcept { return end == kEof; }
  bool valid() const noexcept { return start >= 1 && start <= end; }
  std::uint64_t lines() const noexcept { return end - start + 1; }
  bool overlaps(const LineRange& o) const noexcept { return start <= o.end && o.start <= end; }
  bool operator==(const LineRange&) const = default;
};

std::string to_string(const LineRange& r);

// Disjoint, sorted, non-adjacent intervals; inserting merges.
class LineRangeSet {
 public:
  void insert(LineRange r);
  bool overlaps(const LineRange& r) const;
  // Number of lines of r already in the set.
  std::uint64_t covered_in(const LineRange& r) const;
  std::uint64_t covered_lines() const noexcept { return covered_; }
  bool empty() const noexcept { return intervals_.empty(); }
  void clear() noexcept {
    intervals_.clear();
    covered_ = 0;
  }
  std::vector<LineRange> intervals() const;

  bool operator==(const LineRangeSet&) const = default;

 private:
  std::map<std::uint64_t, std::uint64_t> intervals_;  // start -> end
  std::uint64_t covered_ = 0;
};

// Per-file sets keyed by repository-relative path.
using FileRangeMap = std::map<std::string, LineRangeSet>;

}  // namespace agentjoule
