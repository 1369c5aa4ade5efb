#pragma once

// Okapi BM25 over (command, observation) documents.
//
//   score(D, Q) = sum over distinct q in Q of
//       idf(q) * tf(q, D) * (k1 + 1) / (tf(q, D) + k1 * (1 - b + b * |D| / avgdl))
//   idf(q) = ln(1 + (N - df(q) + 0.5) / (df(q) + 0.5))
//
// Tokens are maximal runs of ASCII letters and digits, lowercased; every
// other byte (whitespace, punctuation, underscore) separates tokens.

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace agentjoule {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct Bm25Hit {
  std::size_t index = 0;
  double score = 0.0;
};

std::vector<std::string> bm25_tokenize(std::string_view text);

// Top min(k, store.size()) documents by descending score; ties keep the
// earlier store index first. Throws ConfigError for k < 1.
std::vector<Bm25Hit> bm25_rank(const std::vector<std::pair<std::string, std::string>>& store, std::string_view query,
                               std::size_t k, const Bm25Params& params = {});

}  // namespace agentjoule
