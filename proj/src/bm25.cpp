#include "agentjoule/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

#include "agentjoule/error.hpp"

namespace agentjoule {

std::vector<std::string> bm25_tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if ((c >= '0' && c <= '9') || (c >= 'a' && c <= 'z')) {
      cur.push_back(ch);
    } else if (c >= 'A' && c <= 'Z') {
      cur.push_back(static_cast<char>(c - 'A' + 'a'));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<Bm25Hit> bm25_rank(const std::vector<std::pair<std::string, std::string>>& store, std::string_view query,
                               std::size_t k, const Bm25Params& params) {
  if (k < 1) throw ConfigError("bm25_rank: k must be >= 1");
  if (store.empty()) return {};

  std::vector<std::unordered_map<std::string, std::size_t>> tf(store.size());
  std::vector<double> length(store.size(), 0.0);
  std::unordered_map<std::string, std::size_t> df;
  for (std::size_t i = 0; i < store.size(); ++i) {
    for (auto& tok : bm25_tokenize(store[i].first + "\n" + store[i].second)) {
      if (++tf[i][tok] == 1) ++df[tok];
      length[i] += 1.0;
    }
  }
  double avgdl = 0.0;
  for (double l : length) avgdl += l;
  avgdl /= static_cast<double>(store.size());

  const auto qtok = bm25_tokenize(query);
  const std::set<std::string> terms(qtok.begin(), qtok.end());
  const double n_docs = static_cast<double>(store.size());

  std::vector<Bm25Hit> hits(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    double score = 0.0;
    for (const auto& q : terms) {
      auto it = tf[i].find(q);
      if (it == tf[i].end()) continue;
      const double f = static_cast<double>(it->second);
      const double d = static_cast<double>(df[q]);
      const double idf = std::log(1.0 + (n_docs - d + 0.5) / (d + 0.5));
      const double norm = avgdl > 0 ? length[i] / avgdl : 0.0;
      score += idf * f * (params.k1 + 1.0) / (f + params.k1 * (1.0 - params.b + params.b * norm));
    }
    hits[i] = {i, score};
  }
  std::stable_sort(hits.begin(), hits.end(), [](const Bm25Hit& a, const Bm25Hit& b) { return a.score > b.score; });
  hits.resize(std::min(k, hits.size()));
  return hits;
}

}  // namespace agentjoule
