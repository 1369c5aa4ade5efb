#pragma once

// Zero-context unified diff parsing ("git diff -U0" style).

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "agentjoule/line_range_set.hpp"

namespace agentjoule {

struct DiffFile {
  std::string path;      // post-image path, or pre-image path for deletions
  std::string section;   // exact bytes of this file's section
  std::vector<LineRange> ranges;  // merged new-file line ranges
};

// Hunk "@@ -a,b +c,d @@": d > 0 gives [c, c+d-1]; a pure deletion (d = 0)
// gives the single-line pointer [max(c,1), max(c,1)]. Omitted counts are 1.
// Throws ParseError naming the offending line on a malformed hunk header.
std::vector<DiffFile> parse_diff_files(std::string_view diff_text);

std::map<std::string, std::vector<LineRange>> parse_unified_diff(std::string_view diff_text);

// Hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

}  // namespace agentjoule
