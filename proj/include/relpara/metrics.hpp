#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "relpara/bertscore.hpp"
#include "relpara/client.hpp"
#include "relpara/completion.hpp"
#include "relpara/corpus.hpp"
#include "relpara/error.hpp"
#include "relpara/executor.hpp"
#include "relpara/prompts.hpp"
#include "relpara/rouge.hpp"
#include "relpara/text.hpp"

namespace relpara::metrics {

// Relative change in percent. Evaluated in extended precision so the result
// is the correctly rounded value of the formula on the given doubles.
inline double performance_change(double old_value, double new_value) {
  if (old_value == 0.0) throw Error("performance_change: old value is 0");
  const long double o = old_value, n = new_value;
  return static_cast<double>((n - o) / o * 100.0L);
}

// ---- G-Eval ----

// Five comma-separated percentages for scores 5..1, renormalised to sum to
// 100 when they are off by more than one point.
inline double parse_geval(std::string_view completion) {
  std::istringstream lines{std::string(completion)};
  std::string line, last;
  while (std::getline(lines, line))
    if (line.find(',') != std::string::npos) last = line;
  if (last.empty()) throw ParseError("g-eval: no comma-separated percentages in completion");

  std::vector<double> pct;
  std::istringstream fields(last);
  for (std::string field; std::getline(fields, field, ',');) {
    auto f = std::string(text::trim(field));
    while (!f.empty() && (f.back() == '%' || f.back() == '.')) f.pop_back();
    char* end = nullptr;
    const double v = std::strtod(f.c_str(), &end);
    if (f.empty() || end != f.c_str() + f.size() || !std::isfinite(v) || v < 0.0)
      throw ParseError("g-eval: '" + std::string(text::trim(field)) + "' is not a percentage");
    pct.push_back(v);
  }
  if (pct.size() != 5)
    throw ParseError("g-eval: expected 5 percentages, got " + std::to_string(pct.size()));
  double total = 0.0;
  for (double v : pct) total += v;
  if (total <= 0.0) throw ParseError("g-eval: percentages sum to 0");
  const double scale = std::abs(total - 100.0) > 1.0 ? 100.0 / total : 1.0;
  double score = 0.0;
  for (std::size_t i = 0; i < 5; ++i) score += static_cast<double>(5 - i) * pct[i] * scale;
  return score / 100.0;
}

inline llm::GenerationConfig default_judge_config() { return {0.0, 64, std::nullopt}; }

inline double geval(const corpus::Article& article, std::string_view summary,
                    const llm::ChatClient& judge, const llm::GenerationConfig& cfg) {
  const auto prompt = llm::render_judge_prompt(article.joined(), summary);
  return parse_geval(judge.complete(prompt, cfg).text);
}

// ---- corpus evaluation ----

struct MetricReport {
  std::string dataset;
  std::string backend;
  std::size_t n_pairs = 0;
  double rouge1_f1 = 0.0;
  double rouge2_f1 = 0.0;
  double rougeL_f1 = 0.0;
  std::optional<double> bertscore_f1;
  std::optional<double> geval;

  std::vector<std::pair<std::string, double>> values() const {
    std::vector<std::pair<std::string, double>> v = {
        {"rouge1_f1", rouge1_f1}, {"rouge2_f1", rouge2_f1}, {"rougeL_f1", rougeL_f1}};
    if (bertscore_f1) v.emplace_back("bertscore_f1", *bertscore_f1);
    if (geval) v.emplace_back("geval", *geval);
    return v;
  }
};

struct JudgeSetup {
  const llm::ChatClient* client = nullptr;
  llm::GenerationConfig config = default_judge_config();
};

struct EvalOptions {
  const BertScoreClient* bertscore = nullptr;
  JudgeSetup judge;
  const std::vector<corpus::Article>* articles = nullptr;  // needed by the judge
  std::size_t max_inflight = 4;
  std::string dataset;
  std::string backend;
};

struct PairScores {
  RougeScore rouge1, rouge2, rougeL;
};

inline PairScores score_pair(std::string_view candidate, std::string_view reference) {
  const auto c = text::tokenize(candidate);
  const auto r = text::tokenize(reference);
  return {rouge_n(c, r, 1), rouge_n(c, r, 2), rouge_l(c, r)};
}

// Macro-averages every enabled metric over the aligned pairs. Candidate and
// reference are the sentence lists joined by single spaces.
inline MetricReport evaluate_corpus(const std::vector<corpus::GoldSummary>& gold,
                                    const std::vector<llm::ParsedSummary>& generated,
                                    const EvalOptions& opts = {}) {
  if (gold.size() != generated.size())
    throw Error("evaluate_corpus: " + std::to_string(gold.size()) + " gold vs " +
                std::to_string(generated.size()) + " generated summaries");
  for (std::size_t i = 0; i < gold.size(); ++i)
    if (gold[i].article_id != generated[i].article_id)
      throw Error("evaluate_corpus: id mismatch at position " + std::to_string(i) + " ('" +
                  gold[i].article_id + "' vs '" + generated[i].article_id + "')");
  if (gold.empty()) throw Error("evaluate_corpus: no pairs");

  MetricReport rep;
  rep.dataset = opts.dataset;
  rep.backend = opts.backend;
  rep.n_pairs = gold.size();
  const double n = static_cast<double>(gold.size());

  std::vector<std::pair<std::string, std::string>> texts;
  texts.reserve(gold.size());
  for (std::size_t i = 0; i < gold.size(); ++i) texts.emplace_back(generated[i].joined(), gold[i].joined());

  for (const auto& [cand, ref] : texts) {
    const auto s = score_pair(cand, ref);
    rep.rouge1_f1 += s.rouge1.f1;
    rep.rouge2_f1 += s.rouge2.f1;
    rep.rougeL_f1 += s.rougeL.f1;
  }
  rep.rouge1_f1 /= n;
  rep.rouge2_f1 /= n;
  rep.rougeL_f1 /= n;

  if (opts.bertscore) {
    const auto scores = opts.bertscore->score(texts);
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i].error)
        throw ProtocolError("bertscore failed for " + gold[i].article_id + ": " + *scores[i].error);
      total += scores[i].f1;
    }
    rep.bertscore_f1 = total / n;
  }

  if (opts.judge.client) {
    if (!opts.articles || opts.articles->size() != gold.size())
      throw Error("evaluate_corpus: g-eval needs the aligned articles");
    std::vector<double> g(gold.size());
    parallel_for(gold.size(), opts.max_inflight, [&](std::size_t i) {
      g[i] = geval((*opts.articles)[i], texts[i].first, *opts.judge.client, opts.judge.config);
    });
    double total = 0.0;
    for (double v : g) total += v;
    rep.geval = total / n;
  }
  return rep;
}

struct MetricChange {
  std::string metric;
  double original = 0.0;
  double perturbed = 0.0;
  std::optional<double> change_pct;  // empty when the original mean is 0
};

struct ChangeReport {
  std::vector<MetricChange> changes;
  MetricReport original;
  MetricReport perturbed;

  const MetricChange* find(std::string_view metric) const {
    for (const auto& c : changes)
      if (c.metric == metric) return &c;
    return nullptr;
  }
};

inline ChangeReport compare(const MetricReport& original, const MetricReport& perturbed) {
  ChangeReport cr{{}, original, perturbed};
  const auto after = perturbed.values();
  for (const auto& [name, old_v] : original.values()) {
    auto it = std::find_if(after.begin(), after.end(), [&](const auto& kv) { return kv.first == name; });
    if (it == after.end()) continue;
    MetricChange mc{name, old_v, it->second, std::nullopt};
    if (old_v != 0.0) mc.change_pct = performance_change(old_v, it->second);
    cr.changes.push_back(mc);
  }
  return cr;
}

}  // namespace relpara::metrics
