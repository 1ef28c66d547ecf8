#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "relpara/error.hpp"
#include "relpara/text.hpp"

namespace relpara::metrics {

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline double f_measure(double p, double r) { return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

inline RougeScore make_score(std::size_t overlap, std::size_t cand_total, std::size_t ref_total) {
  RougeScore s;
  s.precision = cand_total ? static_cast<double>(overlap) / static_cast<double>(cand_total) : 0.0;
  s.recall = ref_total ? static_cast<double>(overlap) / static_cast<double>(ref_total) : 0.0;
  s.f1 = f_measure(s.precision, s.recall);
  return s;
}

using Tokens = std::vector<std::string>;

namespace detail {

inline std::map<Tokens, std::size_t> ngram_counts(const Tokens& toks, std::size_t n) {
  std::map<Tokens, std::size_t> counts;
  if (toks.size() < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i)
    ++counts[Tokens(toks.begin() + static_cast<std::ptrdiff_t>(i),
                    toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

}  // namespace detail

// ROUGE-N with clipped n-gram counts.
inline RougeScore rouge_n(const Tokens& candidate, const Tokens& reference, int n) {
  if (n != 1 && n != 2) throw Error("rouge_n: n must be 1 or 2");
  const auto un = static_cast<std::size_t>(n);
  const auto cand = detail::ngram_counts(candidate, un);
  const auto ref = detail::ngram_counts(reference, un);
  std::size_t overlap = 0;
  for (const auto& [gram, c] : cand) {
    if (auto it = ref.find(gram); it != ref.end()) overlap += std::min(c, it->second);
  }
  const std::size_t cand_total = candidate.size() >= un ? candidate.size() - un + 1 : 0;
  const std::size_t ref_total = reference.size() >= un ? reference.size() - un + 1 : 0;
  return make_score(overlap, cand_total, ref_total);
}

inline std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// Summary-level ROUGE-L over the whole token sequence (no sentence splitting).
inline RougeScore rouge_l(const Tokens& candidate, const Tokens& reference) {
  return make_score(lcs_length(candidate, reference), candidate.size(), reference.size());
}

inline RougeScore rouge_n(std::string_view candidate, std::string_view reference, int n) {
  return rouge_n(text::tokenize(candidate), text::tokenize(reference), n);
}

inline RougeScore rouge_l(std::string_view candidate, std::string_view reference) {
  return rouge_l(text::tokenize(candidate), text::tokenize(reference));
}

}  // namespace relpara::metrics
