#include "agentjoule/line_range_set.hpp"

#include <algorithm>

#include "agentjoule/error.hpp"

namespace agentjoule {

std::string to_string(const LineRange& r) {
  if (r.open_ended()) return std::to_string(r.start) + "-EOF";
  if (r.start == r.end) return std::to_string(r.start);
  return std::to_string(r.start) + "-" + std::to_string(r.end);
}

void LineRangeSet::insert(LineRange r) {
  if (!r.valid()) throw StructuralError("invalid line range " + std::to_string(r.start) + "-" + std::to_string(r.end));
  // First interval that could touch r: the one starting at or before r.start,
  // if it reaches r.start - 1.
  auto it = intervals_.upper_bound(r.start);
  if (it != intervals_.begin()) {
    auto prev = std::prev(it);
    if (prev->second + 1 >= r.start) it = prev;
  }
  while (it != intervals_.end() && it->first <= r.end + 1) {
    r.start = std::min(r.start, it->first);
    r.end = std::max(r.end, it->second);
    covered_ -= it->second - it->first + 1;
    it = intervals_.erase(it);
  }
  intervals_.emplace(r.start, r.end);
  covered_ += r.end - r.start + 1;
}

bool LineRangeSet::overlaps(const LineRange& r) const {
  auto it = intervals_.upper_bound(r.end);
  if (it == intervals_.begin()) return false;
  --it;
  return it->second >= r.start;
}

std::uint64_t LineRangeSet::covered_in(const LineRange& r) const {
  std::uint64_t n = 0;
  auto it = intervals_.upper_bound(r.start);
  if (it != intervals_.begin()) --it;
  for (; it != intervals_.end() && it->first <= r.end; ++it) {
    const std::uint64_t lo = std::max(it->first, r.start);
    const std::uint64_t hi = std::min(it->second, r.end);
    if (lo <= hi) n += hi - lo + 1;
  }
  return n;
}

std::vector<LineRange> LineRangeSet::intervals() const {
  std::vector<LineRange> out;
  out.reserve(intervals_.size());
  for (const auto& [s, e] : intervals_) out.push_back({s, e});
  return out;
}

}  // namespace agentjoule
