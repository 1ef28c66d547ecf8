#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "relpara/completion.hpp"
#include "relpara/corpus.hpp"
#include "relpara/error.hpp"
#include "relpara/relevance.hpp"

namespace relpara::analysis {

inline constexpr int kDefaultBins = 10;

struct PositionHistogram {
  std::vector<double> bins;
  std::size_t n_mapped = 0;
};

inline std::size_t position_bin(std::size_t index, std::size_t article_len, std::size_t bins) {
  const double pos = article_len > 1 ? static_cast<double>(index) / static_cast<double>(article_len - 1) : 0.0;
  const auto b = static_cast<std::size_t>(std::floor(pos * static_cast<double>(bins)));
  return std::min(b, bins - 1);
}

// Where in the article the summary sentences came from: each summary
// sentence is mapped to its single best article sentence, whose relative
// position j / (len - 1) is binned. Bins hold proportions of all mapped
// sentences.
inline PositionHistogram position_distribution(const std::vector<corpus::Article>& articles,
                                               const std::vector<llm::ParsedSummary>& summaries,
                                               relevance::MapperKind kind, int bins = kDefaultBins) {
  if (bins < 1) throw Error("position_distribution: bins must be >= 1");
  if (articles.size() != summaries.size())
    throw Error("position_distribution: " + std::to_string(articles.size()) + " articles vs " +
                std::to_string(summaries.size()) + " summaries");
  const auto nb = static_cast<std::size_t>(bins);
  std::vector<std::size_t> counts(nb, 0);
  PositionHistogram h;
  const relevance::MapperMode mode{kind, 1};
  for (std::size_t i = 0; i < articles.size(); ++i) {
    if (articles[i].id != summaries[i].article_id)
      throw Error("position_distribution: id mismatch at position " + std::to_string(i));
    if (summaries[i].sentences.empty()) continue;
    const auto rm = relevance::map_summary(articles[i], summaries[i].sentences, mode);
    for (const auto& e : rm.entries) {
      ++counts[position_bin(e.article_indices.front(), articles[i].size(), nb)];
      ++h.n_mapped;
    }
  }
  h.bins.assign(nb, 0.0);
  if (h.n_mapped > 0)
    for (std::size_t b = 0; b < nb; ++b)
      h.bins[b] = static_cast<double>(counts[b]) / static_cast<double>(h.n_mapped);
  return h;
}

// L1 distance between two histograms, in [0, 2].
inline double histogram_divergence(const PositionHistogram& a, const PositionHistogram& b) {
  if (a.bins.size() != b.bins.size())
    throw Error("histogram_divergence: " + std::to_string(a.bins.size()) + " vs " +
                std::to_string(b.bins.size()) + " bins");
  double d = 0.0;
  for (std::size_t i = 0; i < a.bins.size(); ++i) d += std::abs(a.bins[i] - b.bins[i]);
  return d;
}

}  // namespace relpara::analysis
