#include "agentjoule/diff.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cstdio>
#include <memory>

#include "agentjoule/error.hpp"

namespace agentjoule {

namespace {

bool parse_uint(std::string_view s, std::uint64_t& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

// "-a,b" or "+c,d" (count optional).
bool parse_side(std::string_view tok, char sign, std::uint64_t& start, std::uint64_t& count) {
  if (tok.empty() || tok[0] != sign) return false;
  tok.remove_prefix(1);
  const auto comma = tok.find(',');
  if (comma == std::string_view::npos) {
    count = 1;
    return parse_uint(tok, start);
  }
  return parse_uint(tok.substr(0, comma), start) && parse_uint(tok.substr(comma + 1), count);
}

struct Hunk {
  LineRange pointer;
  std::uint64_t old_count = 0;
  std::uint64_t new_count = 0;
};

Hunk parse_hunk_header(std::string_view line, std::size_t line_no) {
  // @@ -a,b +c,d @@ optional section heading
  auto fail = [&]() -> Hunk { throw ParseError("malformed hunk header: " + std::string(line), line_no); };
  if (line.substr(0, 3) != "@@ ") return fail();
  std::string_view rest = line.substr(3);
  const auto sp1 = rest.find(' ');
  if (sp1 == std::string_view::npos) return fail();
  const auto sp2 = rest.find(' ', sp1 + 1);
  if (sp2 == std::string_view::npos) return fail();
  if (rest.substr(sp2 + 1, 2) != "@@") return fail();
  std::uint64_t a = 0, b = 0, c = 0, d = 0;
  if (!parse_side(rest.substr(0, sp1), '-', a, b) || !parse_side(rest.substr(sp1 + 1, sp2 - sp1 - 1), '+', c, d)) {
    return fail();
  }
  if (d == 0) {
    const std::uint64_t at = c < 1 ? 1 : c;
    return {{at, at}, b, d};
  }
  return {{c, c + d - 1}, b, d};
}

std::string strip_prefix(std::string_view p) {
  std::string s(p);
  if (const auto tab = s.find('\t'); tab != std::string::npos) s.resize(tab);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  if (s.rfind("a/", 0) == 0 || s.rfind("b/", 0) == 0) s = s.substr(2);
  return s;
}

}  // namespace

std::vector<DiffFile> parse_diff_files(std::string_view text) {
  std::vector<DiffFile> files;
  std::vector<LineRangeSet> ranges;
  std::string minus_path;
  bool header_pending = false;  // saw "diff ..." or "--- ", waiting for "+++"
  std::size_t pos = 0;
  std::size_t line_no = 0;
  std::size_t section_start = 0;

  auto close_section = [&](std::size_t end) {
    if (!files.empty()) files.back().section = std::string(text.substr(section_start, end - section_start));
  };
  auto open_file = [&](std::size_t at) {
    close_section(at);
    files.push_back({});
    ranges.emplace_back();
    section_start = at;
  };

  std::uint64_t old_left = 0;  // hunk body lines still expected
  std::uint64_t new_left = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    const std::size_t next = eol == std::string_view::npos ? text.size() : eol + 1;
    std::string_view line = text.substr(pos, (eol == std::string_view::npos ? text.size() : eol) - pos);
    ++line_no;
    if (old_left > 0 || new_left > 0) {
      if (!line.empty() && line[0] == '-' && old_left > 0) {
        --old_left;
      } else if (!line.empty() && line[0] == '+' && new_left > 0) {
        --new_left;
      } else if (!line.empty() && line[0] == ' ' && old_left > 0 && new_left > 0) {
        --old_left;
        --new_left;
      } else if (!line.empty() && line[0] == '\\') {
        // "\ No newline at end of file"
      } else {
        throw ParseError("hunk body shorter than its header declares", line_no);
      }
      pos = next;
      continue;
    }
    if (line.rfind("diff ", 0) == 0) {
      open_file(pos);
      header_pending = true;
      // "diff --git a/x b/x": provisional path in case no ---/+++ follows
      // (mode-only or binary change).
      const auto b = line.rfind(" b/");
      if (b != std::string_view::npos) files.back().path = strip_prefix(line.substr(b + 1));
    } else if (line.rfind("--- ", 0) == 0) {
      if (!header_pending) open_file(pos);
      minus_path = strip_prefix(line.substr(4));
      header_pending = true;
    } else if (line.rfind("+++ ", 0) == 0 && header_pending) {
      const std::string plus = strip_prefix(line.substr(4));
      files.back().path = plus == "/dev/null" ? minus_path : plus;
      header_pending = false;
    } else if (line.rfind("@@", 0) == 0) {
      if (files.empty()) throw ParseError("hunk header before any file header: " + std::string(line), line_no);
      const Hunk h = parse_hunk_header(line, line_no);
      ranges.back().insert(h.pointer);
      old_left = h.old_count;
      new_left = h.new_count;
    }
    pos = next;
  }
  close_section(text.size());
  for (std::size_t i = 0; i < files.size(); ++i) files[i].ranges = ranges[i].intervals();
  std::erase_if(files, [](const DiffFile& f) { return f.path.empty(); });
  return files;
}

std::map<std::string, std::vector<LineRange>> parse_unified_diff(std::string_view text) {
  std::map<std::string, std::vector<LineRange>> out;
  for (auto& f : parse_diff_files(text)) {
    if (f.ranges.empty()) continue;
    LineRangeSet merged;
    for (const auto& r : out[f.path]) merged.insert(r);
    for (const auto& r : f.ranges) merged.insert(r);
    out[f.path] = merged.intervals();
  }
  return out;
}

std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error("sha256 failed");
  }
  std::string hex;
  hex.reserve(2 * len);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

}  // namespace agentjoule
