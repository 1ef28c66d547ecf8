#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <tuple>
#include <string>
#include <vector>

#include <json.hpp>

#include "relpara/analysis.hpp"
#include "relpara/bertscore.hpp"
#include "relpara/client.hpp"
#include "relpara/completion.hpp"
#include "relpara/config.hpp"
#include "relpara/corpus.hpp"
#include "relpara/error.hpp"
#include "relpara/executor.hpp"
#include "relpara/metrics.hpp"
#include "relpara/mock.hpp"
#include "relpara/perturb.hpp"
#include "relpara/prompts.hpp"
#include "relpara/random.hpp"
#include "relpara/relevance.hpp"
#include "relpara/report.hpp"

namespace relpara::pipeline {

namespace fs = std::filesystem;

// ---- summaries ----

struct SummaryRun {
  std::vector<llm::ParsedSummary> summaries;   // one slot per article
  std::map<std::string, std::string> failures;  // article id -> reason
};

// One completion per article. Down-sampling seeds depend only on the global
// seed and the article id, so an article and its perturbed twin are sampled
// alike.
inline SummaryRun summarize_articles(const std::vector<corpus::Article>& articles,
                                     const llm::PromptTemplate& tmpl, const llm::ChatClient& client,
                                     const llm::GenerationConfig& gen, std::uint64_t seed,
                                     std::size_t max_inflight) {
  SummaryRun run;
  run.summaries.resize(articles.size());
  std::vector<std::optional<std::string>> failure(articles.size());
  parallel_for(articles.size(), max_inflight, [&](std::size_t i) {
    const auto& a = articles[i];
    try {
      const auto c = client.complete(llm::render_summary_prompt(a, tmpl), gen);
      run.summaries[i] = llm::parse_summary(c.text, tmpl.n_sentences, rng::derive_seed(seed, a.id, "summary"));
    } catch (const TransportError& e) {
      failure[i] = std::string("summarize transport: ") + e.what();
    } catch (const ProtocolError& e) {
      failure[i] = std::string("summarize protocol: ") + e.what();
    } catch (const ParseError& e) {
      failure[i] = std::string("summarize parse: ") + e.what();
    }
    run.summaries[i].article_id = a.id;
  });
  for (std::size_t i = 0; i < articles.size(); ++i)
    if (failure[i]) run.failures[articles[i].id] = *failure[i];
  return run;
}

inline nlohmann::json to_json(const llm::ParsedSummary& s) {
  return {{"id", s.article_id},
          {"sentences", corpus::texts_of(s.sentences)},
          {"raw", s.raw},
          {"truncated", s.truncated}};
}

inline void write_summaries(const std::vector<llm::ParsedSummary>& summaries, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& s : summaries) out << to_json(s).dump() << '\n';
}

inline std::vector<llm::ParsedSummary> read_summaries(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<llm::ParsedSummary> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      llm::ParsedSummary s;
      s.article_id = j.at("id").get<std::string>();
      s.sentences = corpus::make_sentences(j.at("sentences").get<std::vector<std::string>>());
      s.raw = j.value("raw", std::string());
      s.truncated = j.value("truncated", false);
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<relevance::RelevanceMap> map_dataset(const corpus::Dataset& ds,
                                                        const relevance::MapperMode& mode) {
  std::vector<relevance::RelevanceMap> out;
  out.reserve(ds.pairs.size());
  for (const auto& p : ds.pairs) out.push_back(relevance::map_summary(p.article, p.summary.sentences, mode));
  return out;
}

inline void write_relevance(const std::vector<relevance::RelevanceMap>& maps, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& m : maps) out << relevance::to_json(m).dump() << '\n';
}

inline std::vector<relevance::RelevanceMap> read_relevance(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<relevance::RelevanceMap> out;
  for (std::string line; std::getline(in, line);)
    if (!text::trim(line).empty()) out.push_back(relevance::relevance_map_from_json(nlohmann::json::parse(line)));
  return out;
}

inline void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline std::string report_rate(const perturb::ExclusionLog& log) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", log.refusal_rate);
  return std::string(buf) + " (" + std::to_string(log.refused) + "/" + std::to_string(log.attempted) + ")";
}

// ---- end-to-end run ----

using TransportFactory = std::function<std::shared_ptr<const llm::Transport>(const llm::Backend&)>;

struct RunOptions {
  bool resume = false;
  llm::Sleeper sleeper = llm::real_sleep;
  TransportFactory transports = llm::make_transport;
  std::ostream* log = &std::cerr;
};

struct RunFiles {
  fs::path dir;
  fs::path manifest() const { return dir / "run_manifest.json"; }
  fs::path relevance() const { return dir / "relevance.jsonl"; }
  fs::path original() const { return dir / "original.jsonl"; }
  fs::path perturbed() const { return dir / "perturbed.jsonl"; }
  fs::path exclusions() const { return dir / "exclusions.json"; }
  fs::path summaries_original() const { return dir / "summaries_original.jsonl"; }
  fs::path summaries_perturbed() const { return dir / "summaries_perturbed.jsonl"; }
  fs::path reports() const { return dir / "report"; }
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace detail {

template <class Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const AbortError&) {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

inline nlohmann::json backend_summary(const config::RunConfig& cfg, const std::string& name) {
  if (name.empty()) return nullptr;
  const auto& b = config::backend(cfg, name);
  return {{"name", b.name}, {"kind", b.kind}, {"model", b.model_id}};
}

inline bool manifest_matches(const RunFiles& files, const std::string& hash) {
  if (!fs::exists(files.manifest())) return false;
  try {
    return read_json(files.manifest()).value("config_hash", std::string()) == hash;
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace detail

struct ReportInputs {
  const corpus::Dataset& original;
  const std::vector<perturb::PerturbedPair>& perturbed;
  const std::vector<llm::ParsedSummary>& original_summaries;
  const std::vector<llm::ParsedSummary>& perturbed_summaries;
  const perturb::ExclusionLog& exclusions;
};

using ClientFactory = std::function<llm::ChatClient(const std::string& backend_name)>;

// Evaluates both corpora, compares them, builds the position histograms and
// writes the report files into report_dir.
inline std::pair<analysis::ReportBundle, std::vector<fs::path>> assemble_report(
    const config::RunConfig& cfg, const ReportInputs& in, const fs::path& report_dir,
    const ClientFactory& client_for) {
  std::vector<corpus::Article> orig_articles, pert_articles;
  std::vector<corpus::GoldSummary> gold;
  for (const auto& p : in.original.pairs) {
    orig_articles.push_back(p.article);
    gold.push_back(p.summary);
  }
  for (const auto& p : in.perturbed) pert_articles.push_back(p.article.as_article());

  analysis::ReportBundle bundle;
  bundle.plan_mode = perturb::to_string(cfg.plan.mode);
  detail::stage("evaluate", [&] {
    std::optional<metrics::BertScoreClient> bs;
    if (!cfg.metrics.bertscore_endpoint.empty())
      bs.emplace(cfg.metrics.bertscore_endpoint,
                 metrics::BertScoreOptions{32, cfg.max_inflight, std::chrono::milliseconds(120000)});
    std::optional<llm::ChatClient> judge;
    if (cfg.metrics.geval) judge.emplace(client_for(cfg.judge));

    metrics::EvalOptions eo;
    eo.bertscore = bs ? &*bs : nullptr;
    eo.judge = {judge ? &*judge : nullptr, cfg.judge_gen};
    eo.max_inflight = cfg.max_inflight;
    eo.dataset = in.original.name;
    eo.backend = cfg.summarizer;
    eo.articles = &orig_articles;
    bundle.original = metrics::evaluate_corpus(gold, in.original_summaries, eo);
    eo.articles = &pert_articles;
    bundle.perturbed = metrics::evaluate_corpus(gold, in.perturbed_summaries, eo);
    bundle.change = metrics::compare(bundle.original, bundle.perturbed);

    const auto subs = perturb::substitution_pairs(in.perturbed);
    if (subs.empty()) return 0;
    if (bs) {
      auto scorer = [&](const perturb::TextPairs& tp) {
        perturb::TextPairs cand_ref;
        for (const auto& [o, p] : tp) cand_ref.emplace_back(p, o);
        std::vector<double> f;
        for (const auto& s : bs->score(cand_ref)) {
          if (s.error) throw ProtocolError("bertscore: " + *s.error);
          f.push_back(s.f1);
        }
        return f;
      };
      bundle.fidelity = analysis::Fidelity{"bertscore", perturb::paraphrase_fidelity(subs, scorer), subs.size()};
    } else {
      bundle.fidelity = analysis::Fidelity{
          "rouge1", perturb::paraphrase_fidelity(subs, perturb::rouge1_fidelity_scorer()), subs.size()};
    }
    return 0;
  });

  std::vector<fs::path> artifacts;
  detail::stage("analyze", [&] {
    bundle.original_hist =
        analysis::position_distribution(orig_articles, in.original_summaries, cfg.mapper.kind, cfg.metrics.bins);
    bundle.perturbed_hist =
        analysis::position_distribution(pert_articles, in.perturbed_summaries, cfg.mapper.kind, cfg.metrics.bins);
    bundle.exclusions = in.exclusions;
    artifacts = analysis::emit_report(bundle, report_dir);
    return 0;
  });
  return {std::move(bundle), std::move(artifacts)};
}

// load -> map -> perturb -> summarise both corpora -> evaluate -> compare ->
// histograms -> emit. Every intermediate is written under cfg.out_dir; with
// resume set, intermediates from a run with the same config hash are reused.
inline analysis::ReportBundle run_experiment(const config::RunConfig& cfg, const RunOptions& opts = {}) {
  config::validate(cfg);
  const RunFiles files{cfg.out_dir};
  std::error_code ec;
  fs::create_directories(files.dir, ec);
  if (ec) throw StageError("setup", "cannot create " + files.dir.string() + ": " + ec.message());

  const auto hash = config::config_hash(cfg);
  const bool reuse = opts.resume && detail::manifest_matches(files, hash);
  nlohmann::json manifest = {
      {"config_hash", hash},
      {"config", config::to_json(cfg)},
      {"seed", cfg.seed},
      {"backends",
       {{"summarizer", detail::backend_summary(cfg, cfg.summarizer)},
        {"paraphraser", detail::backend_summary(cfg, cfg.paraphraser)},
        {"judge", detail::backend_summary(cfg, cfg.judge)}}},
      {"started_at", utc_timestamp()},
      {"status", "running"}};
  write_json(manifest, files.manifest());
  auto log = [&](const std::string& msg) {
    if (opts.log) *opts.log << "[relpara] " << msg << std::endl;
  };
  auto client_for = [&](const std::string& name) {
    const auto& b = config::backend(cfg, name);
    return llm::ChatClient(b, opts.transports(b), opts.sleeper);
  };

  const auto dataset = detail::stage("load", [&] {
    corpus::LoadOptions lo;
    lo.name = cfg.dataset.name;
    lo.target_override = cfg.dataset.target_summary_len;
    return corpus::take_first(corpus::load_dataset(cfg.dataset.path, lo), cfg.dataset.limit);
  });
  log("loaded " + std::to_string(dataset.pairs.size()) + " pairs from " + cfg.dataset.path +
      " (target summary length " + std::to_string(dataset.profile.target_summary_len) + ")");

  manifest["dataset"] = corpus::profile_to_json(dataset);
  write_json(manifest, files.manifest());
  const std::size_t total = dataset.pairs.size();
  auto pert = detail::stage("perturb", [&] {
    perturb::PerturbationResult r;
    if (reuse && fs::exists(files.perturbed()) && fs::exists(files.exclusions())) {
      log("resuming perturbation from " + files.perturbed().string());
      corpus::LoadOptions lo;
      lo.name = dataset.name;
      auto orig = corpus::load_dataset(files.original(), lo);
      r.original = dataset;
      r.original.pairs = std::move(orig.pairs);
      r.perturbed = perturb::read_perturbed(files.perturbed());
      r.relevance = read_relevance(files.relevance());
      r.exclusions = perturb::exclusion_log_from_json(read_json(files.exclusions()));
      return r;
    }
    const bool needs_paraphraser = cfg.plan.mode == perturb::PlanMode::Relevant ||
                                   cfg.plan.mode == perturb::PlanMode::NonrelevantRandom;
    const auto para = needs_paraphraser ? client_for(cfg.paraphraser)
                                        : llm::make_client(llm::mock_backend("mock-identity"));
    perturb::PerturbationPlan plan = cfg.plan;
    plan.seed = cfg.seed;
    r = perturb::build_perturbed_corpus(dataset, plan, cfg.mapper, para, cfg.paraphraser_gen,
                                        {cfg.max_inflight, cfg.abort_fraction});
    write_relevance(r.relevance, files.relevance());
    corpus::write_dataset(r.original, files.original());
    perturb::write_perturbed(r.perturbed, files.perturbed());
    write_json(perturb::to_json(r.exclusions), files.exclusions());
    return r;
  });
  log("paraphrase refusal rate " + report_rate(pert.exclusions) + "; " +
      std::to_string(pert.exclusions.excluded_ids.size()) + " articles excluded");

  const auto tmpl = llm::summary_template(cfg.dataset.prompt_style, dataset.profile.target_summary_len);
  std::vector<corpus::Article> orig_articles, pert_articles;
  for (const auto& p : pert.original.pairs) orig_articles.push_back(p.article);
  for (const auto& p : pert.perturbed) pert_articles.push_back(p.article.as_article());

  auto [orig_sum, pert_sum] = detail::stage("summarize", [&] {
    if (reuse && fs::exists(files.summaries_original()) && fs::exists(files.summaries_perturbed())) {
      log("resuming summaries from " + files.dir.string());
      return std::pair{read_summaries(files.summaries_original()), read_summaries(files.summaries_perturbed())};
    }
    const auto summarizer = client_for(cfg.summarizer);
    auto a = summarize_articles(orig_articles, tmpl, summarizer, cfg.summarizer_gen, cfg.seed, cfg.max_inflight);
    auto b = summarize_articles(pert_articles, tmpl, summarizer, cfg.summarizer_gen, cfg.seed, cfg.max_inflight);
    // A failure on either side drops the article from both.
    std::map<std::string, std::string> failed = a.failures;
    failed.insert(b.failures.begin(), b.failures.end());
    if (!failed.empty()) {
      std::vector<llm::ParsedSummary> ka, kb;
      std::vector<corpus::Pair> ko;
      std::vector<perturb::PerturbedPair> kp;
      std::vector<relevance::RelevanceMap> kr;
      for (std::size_t i = 0; i < orig_articles.size(); ++i) {
        const auto& id = orig_articles[i].id;
        if (auto it = failed.find(id); it != failed.end()) {
          pert.exclusions.excluded_ids.push_back(id);
          pert.exclusions.reasons[id] = it->second;
          continue;
        }
        ka.push_back(a.summaries[i]);
        kb.push_back(b.summaries[i]);
        ko.push_back(pert.original.pairs[i]);
        kp.push_back(pert.perturbed[i]);
        kr.push_back(pert.relevance[i]);
      }
      pert.original.pairs = std::move(ko);
      pert.perturbed = std::move(kp);
      pert.relevance = std::move(kr);
      a.summaries = std::move(ka);
      b.summaries = std::move(kb);
      write_json(perturb::to_json(pert.exclusions), files.exclusions());
      log(std::to_string(failed.size()) + " articles excluded after summarization failures");
      perturb::check_abort(pert.exclusions.excluded_ids.size(), total, cfg.abort_fraction);
    }
    write_summaries(a.summaries, files.summaries_original());
    write_summaries(b.summaries, files.summaries_perturbed());
    return std::pair{std::move(a.summaries), std::move(b.summaries)};
  });
  if (pert.original.pairs.empty()) throw StageError("summarize", "no articles left to evaluate");

  analysis::ReportBundle bundle;
  std::vector<fs::path> artifacts;
  std::tie(bundle, artifacts) = assemble_report(
      cfg, {pert.original, pert.perturbed, orig_sum, pert_sum, pert.exclusions}, files.reports(), client_for);

  for (const auto& c : bundle.change.changes)
    log(c.metric + ": " + analysis::fixed6(c.original) + " -> " + analysis::fixed6(c.perturbed) + " (" +
        (c.change_pct ? analysis::fixed6(*c.change_pct) + "%" : std::string("n/a")) + ")");

  manifest["status"] = "complete";
  manifest["finished_at"] = utc_timestamp();
  manifest["n_pairs_evaluated"] = bundle.original.n_pairs;
  manifest["refusal_rate"] = bundle.exclusions.refusal_rate;
  nlohmann::json art = nlohmann::json::array();
  for (const auto& p : artifacts) art.push_back(p.string());
  manifest["artifacts"] = art;
  write_json(manifest, files.manifest());
  return bundle;
}

}  // namespace relpara::pipeline
