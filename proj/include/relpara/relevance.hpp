#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "relpara/corpus.hpp"
#include "relpara/error.hpp"
#include "relpara/random.hpp"
#include "relpara/rouge.hpp"
#include "relpara/text.hpp"

namespace relpara::relevance {

using Tokens = std::vector<std::string>;

// Smoothed inverse document frequencies: idf(t) = ln((1 + N) / (1 + df(t))) + 1.
class TfidfModel {
 public:
  TfidfModel() = default;

  std::size_t doc_count() const { return doc_count_; }
  std::size_t vocabulary_size() const { return vocabulary_.size(); }
  const std::unordered_map<std::string, std::size_t>& vocabulary() const { return vocabulary_; }

  // 0 for out-of-vocabulary tokens.
  double idf(const std::string& token) const {
    auto it = vocabulary_.find(token);
    return it == vocabulary_.end() ? 0.0 : idf_[it->second];
  }

  // Sparse raw-tf * idf vector, L2-normalised; empty if every weight is 0.
  std::vector<std::pair<std::size_t, double>> vectorize(const Tokens& tokens) const {
    std::unordered_map<std::size_t, double> tf;
    for (const auto& t : tokens) {
      auto it = vocabulary_.find(t);
      if (it != vocabulary_.end()) tf[it->second] += 1.0;
    }
    std::vector<std::pair<std::size_t, double>> vec;
    vec.reserve(tf.size());
    double norm2 = 0.0;
    for (const auto& [col, count] : tf) {
      const double w = count * idf_[col];
      if (w == 0.0) continue;
      vec.emplace_back(col, w);
      norm2 += w * w;
    }
    std::sort(vec.begin(), vec.end());
    if (norm2 > 0.0) {
      const double norm = std::sqrt(norm2);
      for (auto& [col, w] : vec) w /= norm;
    }
    return vec;
  }

  friend TfidfModel fit_tfidf(const std::vector<Tokens>& documents);

 private:
  std::unordered_map<std::string, std::size_t> vocabulary_;
  std::vector<double> idf_;
  std::size_t doc_count_ = 0;
};

inline TfidfModel fit_tfidf(const std::vector<Tokens>& documents) {
  if (documents.empty()) throw Error("fit_tfidf: empty corpus");
  TfidfModel m;
  m.doc_count_ = documents.size();
  std::vector<std::size_t> df;
  for (const auto& doc : documents) {
    std::set<std::string> uniq(doc.begin(), doc.end());
    for (const auto& t : uniq) {
      auto [it, inserted] = m.vocabulary_.try_emplace(t, m.vocabulary_.size());
      if (inserted) df.push_back(0);
      ++df[it->second];
    }
  }
  const double n = static_cast<double>(m.doc_count_);
  m.idf_.resize(df.size());
  for (std::size_t i = 0; i < df.size(); ++i)
    m.idf_[i] = std::log((1.0 + n) / (1.0 + static_cast<double>(df[i]))) + 1.0;
  return m;
}

inline TfidfModel fit_tfidf(const corpus::Article& article) {
  std::vector<Tokens> docs;
  docs.reserve(article.size());
  for (const auto& s : article.sentences) docs.push_back(text::tokenize(s.text));
  return fit_tfidf(docs);
}

enum class MapperKind { TfidfCosine, Rouge1F1 };

struct MapperMode {
  MapperKind kind = MapperKind::TfidfCosine;
  int top_n = 1;
};

inline std::string to_string(MapperKind k) {
  return k == MapperKind::TfidfCosine ? "tfidf" : "rouge1";
}

inline MapperKind parse_mapper_kind(std::string_view s) {
  if (s == "tfidf" || s == "tfidf-cosine") return MapperKind::TfidfCosine;
  if (s == "rouge1" || s == "rouge1-f1") return MapperKind::Rouge1F1;
  throw ConfigError("unknown psi '" + std::string(s) + "' (expected tfidf or rouge1)");
}

inline double cosine(const std::vector<std::pair<std::size_t, double>>& a,
                     const std::vector<std::pair<std::size_t, double>>& b) {
  double dot = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].first < b[j].first) {
      ++i;
    } else if (b[j].first < a[i].first) {
      ++j;
    } else {
      dot += a[i].second * b[j].second;
      ++i;
      ++j;
    }
  }
  return std::clamp(dot, 0.0, 1.0);
}

inline double similarity(const MapperMode& mode, const Tokens& a, const Tokens& b,
                         const TfidfModel& model) {
  if (mode.kind == MapperKind::Rouge1F1) return metrics::rouge_n(a, b, 1).f1;
  return cosine(model.vectorize(a), model.vectorize(b));
}

inline double similarity(const MapperMode& mode, const corpus::Sentence& a,
                         const corpus::Sentence& b, const TfidfModel& model) {
  return similarity(mode, text::tokenize(a.text), text::tokenize(b.text), model);
}

struct RelevanceEntry {
  std::size_t summary_index = 0;
  std::vector<std::size_t> article_indices;  // best first

  bool operator==(const RelevanceEntry&) const = default;
};

struct RelevanceMap {
  std::string article_id;
  std::vector<RelevanceEntry> entries;
  std::vector<std::size_t> index_set;  // ascending, deduplicated

  bool operator==(const RelevanceMap&) const = default;
};

// Ranks the article's sentences for every summary sentence, keeping the best
// top_n (fewer if the article is shorter). Ties go to the lower index.
inline RelevanceMap map_summary(const corpus::Article& article,
                                const std::vector<corpus::Sentence>& summary,
                                const MapperMode& mode, const TfidfModel& model) {
  if (article.sentences.empty()) throw Error("map_summary: empty article " + article.id);
  if (summary.empty()) throw Error("map_summary: empty summary for " + article.id);
  if (mode.top_n < 1) throw ConfigError("top_n must be >= 1");

  std::vector<Tokens> art_tokens;
  art_tokens.reserve(article.size());
  for (const auto& s : article.sentences) art_tokens.push_back(text::tokenize(s.text));

  const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(mode.top_n), article.size());
  RelevanceMap rm;
  rm.article_id = article.id;
  std::set<std::size_t> uniq;
  for (const auto& s : summary) {
    const auto stoks = text::tokenize(s.text);
    std::vector<double> score(article.size());
    for (std::size_t j = 0; j < article.size(); ++j)
      score[j] = similarity(mode, stoks, art_tokens[j], model);
    std::vector<std::size_t> order(article.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return score[x] > score[y]; });
    order.resize(keep);
    uniq.insert(order.begin(), order.end());
    rm.entries.push_back({s.index, std::move(order)});
  }
  rm.index_set.assign(uniq.begin(), uniq.end());
  return rm;
}

inline RelevanceMap map_summary(const corpus::Article& article,
                                const std::vector<corpus::Sentence>& summary,
                                const MapperMode& mode) {
  return map_summary(article, summary, mode, fit_tfidf(article));
}

// Uniform sample without replacement from the indices outside the map's
// index set, in draw order.
inline std::vector<std::size_t> select_nonrelevant(const corpus::Article& article,
                                                   const RelevanceMap& relmap, std::size_t count,
                                                   std::uint64_t seed) {
  std::vector<std::size_t> complement;
  for (std::size_t j = 0; j < article.size(); ++j)
    if (!std::binary_search(relmap.index_set.begin(), relmap.index_set.end(), j))
      complement.push_back(j);
  if (complement.size() < count)
    throw Error("select_nonrelevant: requested " + std::to_string(count) +
                " non-relevant sentences but only " + std::to_string(complement.size()) +
                " are available in " + article.id);
  std::vector<std::size_t> out;
  for (auto pos : rng::sample_positions(complement.size(), count, seed))
    out.push_back(complement[pos]);
  return out;
}

inline nlohmann::json to_json(const RelevanceMap& rm) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : rm.entries) entries.push_back({e.summary_index, e.article_indices});
  return {{"article_id", rm.article_id}, {"entries", entries}, {"index_set", rm.index_set}};
}

inline RelevanceMap relevance_map_from_json(const nlohmann::json& j) {
  RelevanceMap rm;
  rm.article_id = j.at("article_id").get<std::string>();
  for (const auto& e : j.at("entries"))
    rm.entries.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::vector<std::size_t>>()});
  rm.index_set = j.at("index_set").get<std::vector<std::size_t>>();
  return rm;
}

}  // namespace relpara::relevance
