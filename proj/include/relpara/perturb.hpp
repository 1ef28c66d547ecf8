#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "relpara/client.hpp"
#include "relpara/completion.hpp"
#include "relpara/corpus.hpp"
#include "relpara/error.hpp"
#include "relpara/executor.hpp"
#include "relpara/prompts.hpp"
#include "relpara/random.hpp"
#include "relpara/relevance.hpp"
#include "relpara/rouge.hpp"

namespace relpara::perturb {

enum class PlanMode { Relevant, NonrelevantRandom, Identity, NoneRepeat };

inline std::string to_string(PlanMode m) {
  switch (m) {
    case PlanMode::Relevant: return "relevant";
    case PlanMode::NonrelevantRandom: return "nonrelevant";
    case PlanMode::Identity: return "identity";
    case PlanMode::NoneRepeat: return "none-repeat";
  }
  return "?";
}

inline PlanMode parse_plan_mode(std::string_view s) {
  if (s == "relevant") return PlanMode::Relevant;
  if (s == "nonrelevant" || s == "nonrelevant-random") return PlanMode::NonrelevantRandom;
  if (s == "identity") return PlanMode::Identity;
  if (s == "none-repeat" || s == "repeat") return PlanMode::NoneRepeat;
  throw ConfigError("unknown perturbation mode '" + std::string(s) +
                    "' (expected relevant, nonrelevant, identity or none-repeat)");
}

struct PerturbationPlan {
  PlanMode mode = PlanMode::Relevant;
  int top_n_paraphrase = 1;
  std::uint64_t seed = 0;
};

struct Substitution {
  std::size_t index = 0;
  std::string original;
  std::string paraphrased;

  bool operator==(const Substitution&) const = default;
};

struct PerturbedArticle {
  std::string article_id;
  std::vector<corpus::Sentence> sentences;
  std::vector<Substitution> substitutions;

  corpus::Article as_article() const { return {article_id, sentences}; }
};

struct ExclusionLog {
  std::vector<std::string> excluded_ids;
  std::map<std::string, std::string> reasons;
  std::size_t refused = 0;
  std::size_t attempted = 0;
  double refusal_rate = 0.0;
};

struct PerturbedPair {
  PerturbedArticle article;
  corpus::GoldSummary summary;
};

// Both corpora hold the same ids in the same order once exclusions apply.
struct PerturbationResult {
  corpus::Dataset original;
  std::vector<PerturbedPair> perturbed;
  std::vector<relevance::RelevanceMap> relevance;
  ExclusionLog exclusions;
};

inline PerturbedArticle apply_replacements(const corpus::Article& article,
                                           const std::map<std::size_t, std::string>& replacements) {
  PerturbedArticle out{article.id, article.sentences, {}};
  for (const auto& [idx, text] : replacements) {
    if (idx >= article.size())
      throw Error("apply_replacements: index " + std::to_string(idx) + " out of range for " +
                  article.id + " (" + std::to_string(article.size()) + " sentences)");
    out.substitutions.push_back({idx, article.sentences[idx].text, text});
    out.sentences[idx].text = text;
  }
  return out;
}

inline constexpr double kDefaultAbortFraction = 0.5;

inline void check_abort(std::size_t excluded, std::size_t total, double abort_fraction) {
  if (total > 0 && static_cast<double>(excluded) > abort_fraction * static_cast<double>(total))
    throw AbortError(std::to_string(excluded) + " of " + std::to_string(total) +
                     " articles excluded (limit " + std::to_string(abort_fraction * 100.0) + "%)");
}

struct BuildOptions {
  std::size_t max_inflight = 4;
  double abort_fraction = kDefaultAbortFraction;
};

namespace detail {

struct CallOutcome {
  std::string text;
  bool refused = false;
  std::optional<std::string> failure;
};

}  // namespace detail

// Relevance paraphrasing over a whole dataset. Each selected sentence gets
// its own paraphrase request; an article with any refused or failed sentence
// is dropped from both corpora.
inline PerturbationResult build_perturbed_corpus(const corpus::Dataset& dataset,
                                                 const PerturbationPlan& plan,
                                                 const relevance::MapperMode& mapper,
                                                 const llm::ChatClient& paraphraser,
                                                 const llm::GenerationConfig& config,
                                                 const BuildOptions& opts = {}) {
  if (dataset.pairs.empty()) throw Error("build_perturbed_corpus: empty dataset");
  if (plan.top_n_paraphrase < 1) throw ConfigError("top_n_paraphrase must be >= 1");
  const relevance::MapperMode mode{mapper.kind, plan.top_n_paraphrase};
  const std::size_t n_pairs = dataset.pairs.size();

  std::vector<relevance::RelevanceMap> maps(n_pairs);
  std::vector<std::vector<std::size_t>> targets(n_pairs);
  std::vector<std::optional<std::string>> reason(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const auto& p = dataset.pairs[i];
    maps[i] = relevance::map_summary(p.article, p.summary.sentences, mode);
    switch (plan.mode) {
      case PlanMode::Relevant:
      case PlanMode::Identity:
        targets[i] = maps[i].index_set;
        break;
      case PlanMode::NonrelevantRandom:
        try {
          targets[i] = relevance::select_nonrelevant(
              p.article, maps[i], maps[i].index_set.size(),
              rng::derive_seed(plan.seed, p.article.id, "nonrelevant"));
        } catch (const Error& e) {
          reason[i] = std::string("insufficient-nonrelevant: ") + e.what();
        }
        break;
      case PlanMode::NoneRepeat:
        break;
    }
  }

  struct Job {
    std::size_t pair;
    std::size_t sentence;
  };
  std::vector<Job> jobs;
  if (plan.mode == PlanMode::Relevant || plan.mode == PlanMode::NonrelevantRandom) {
    for (std::size_t i = 0; i < n_pairs; ++i)
      if (!reason[i])
        for (auto s : targets[i]) jobs.push_back({i, s});
  }

  std::vector<detail::CallOutcome> outcomes(jobs.size());
  parallel_for(jobs.size(), opts.max_inflight, [&](std::size_t k) {
    const auto& sentence = dataset.pairs[jobs[k].pair].article.sentences[jobs[k].sentence];
    auto& out = outcomes[k];
    try {
      auto c = paraphraser.complete(llm::render_paraphrase_prompt(sentence), config);
      out.refused = llm::detect_refusal(c.text);
      out.text = text::normalize_whitespace(c.text);
    } catch (const TransportError& e) {
      out.failure = e.what();
    } catch (const ProtocolError& e) {
      out.failure = e.what();
    }
  });

  std::vector<std::map<std::size_t, std::string>> replacements(n_pairs);
  ExclusionLog log;
  std::vector<bool> refused_any(n_pairs, false);
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    const auto i = jobs[k].pair;
    const auto& o = outcomes[k];
    if (o.failure) {
      if (!reason[i]) reason[i] = "transport: " + *o.failure;
      continue;
    }
    ++log.attempted;
    if (o.refused) {
      ++log.refused;
      refused_any[i] = true;
      continue;
    }
    replacements[i][jobs[k].sentence] = o.text;
  }
  if (plan.mode == PlanMode::Identity) {
    for (std::size_t i = 0; i < n_pairs; ++i)
      for (auto s : targets[i]) replacements[i][s] = dataset.pairs[i].article.sentences[s].text;
  }

  PerturbationResult result;
  result.original.name = dataset.name;
  result.original.profile = dataset.profile;
  result.original.dropped = dataset.dropped;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const auto& p = dataset.pairs[i];
    if (!reason[i] && refused_any[i]) reason[i] = "refusal";
    if (reason[i]) {
      log.excluded_ids.push_back(p.article.id);
      log.reasons[p.article.id] = *reason[i];
      continue;
    }
    result.original.pairs.push_back(p);
    result.perturbed.push_back({apply_replacements(p.article, replacements[i]), p.summary});
    result.relevance.push_back(std::move(maps[i]));
  }
  log.refusal_rate = log.attempted ? static_cast<double>(log.refused) / static_cast<double>(log.attempted) : 0.0;
  result.exclusions = std::move(log);
  check_abort(result.exclusions.excluded_ids.size(), n_pairs, opts.abort_fraction);
  return result;
}

using TextPairs = std::vector<std::pair<std::string, std::string>>;
// Scores (original, paraphrase) pairs; one score per pair, in order.
using FidelityScorer = std::function<std::vector<double>(const TextPairs&)>;

inline FidelityScorer rouge1_fidelity_scorer() {
  return [](const TextPairs& pairs) {
    std::vector<double> out;
    out.reserve(pairs.size());
    for (const auto& [orig, para] : pairs) out.push_back(metrics::rouge_n(para, orig, 1).f1);
    return out;
  };
}

inline double paraphrase_fidelity(const TextPairs& substitutions, const FidelityScorer& scorer) {
  if (substitutions.empty()) throw Error("paraphrase_fidelity: no substitutions");
  const auto scores = scorer(substitutions);
  if (scores.size() != substitutions.size())
    throw ProtocolError("paraphrase_fidelity: scorer returned " + std::to_string(scores.size()) +
                        " scores for " + std::to_string(substitutions.size()) + " pairs");
  return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
}

inline TextPairs substitution_pairs(const std::vector<PerturbedPair>& perturbed) {
  TextPairs out;
  for (const auto& p : perturbed)
    for (const auto& s : p.article.substitutions) out.emplace_back(s.original, s.paraphrased);
  return out;
}

// ---- persistence ----

inline nlohmann::json to_json(const ExclusionLog& log) {
  return {{"excluded_ids", log.excluded_ids},
          {"reasons", log.reasons},
          {"refused", log.refused},
          {"attempted", log.attempted},
          {"refusal_rate", log.refusal_rate}};
}

inline ExclusionLog exclusion_log_from_json(const nlohmann::json& j) {
  ExclusionLog log;
  log.excluded_ids = j.at("excluded_ids").get<std::vector<std::string>>();
  log.reasons = j.at("reasons").get<std::map<std::string, std::string>>();
  log.refused = j.at("refused").get<std::size_t>();
  log.attempted = j.at("attempted").get<std::size_t>();
  log.refusal_rate = j.at("refusal_rate").get<double>();
  return log;
}

inline nlohmann::json to_json(const PerturbedPair& p) {
  auto j = corpus::pair_to_json(p.article.as_article(), p.summary);
  nlohmann::json subs = nlohmann::json::array();
  for (const auto& s : p.article.substitutions)
    subs.push_back({{"index", s.index}, {"original", s.original}, {"paraphrase", s.paraphrased}});
  j["substitutions"] = subs;
  return j;
}

inline void write_perturbed(const std::vector<PerturbedPair>& pairs, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& p : pairs) out << to_json(p).dump() << '\n';
}

inline std::vector<PerturbedPair> read_perturbed(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<PerturbedPair> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    auto pair = corpus::parse_pair(j, line_no);
    PerturbedPair pp{{pair.article.id, pair.article.sentences, {}}, pair.summary};
    if (auto it = j.find("substitutions"); it != j.end())
      for (const auto& s : *it)
        pp.article.substitutions.push_back({s.at("index").get<std::size_t>(),
                                            s.at("original").get<std::string>(),
                                            s.at("paraphrase").get<std::string>()});
    out.push_back(std::move(pp));
  }
  return out;
}

inline corpus::Dataset as_dataset(const std::vector<PerturbedPair>& perturbed, const corpus::Dataset& like) {
  corpus::Dataset ds;
  ds.name = like.name;
  ds.profile = like.profile;
  for (const auto& p : perturbed) ds.pairs.push_back({p.article.as_article(), p.summary});
  return ds;
}

}  // namespace relpara::perturb
