// relpara: relevance-paraphrasing robustness harness for LLM summarizers.
//
//   relpara ingest     --in data.jsonl --profile-out profile.json
//   relpara map        --dataset data.jsonl --psi tfidf --top-n 1 --out relevance.jsonl
//   relpara paraphrase --dataset data.jsonl --mode relevant --top-n 1 --out run/
//   relpara summarize  --dataset run/perturbed.jsonl --out run/summaries_perturbed.jsonl
//   relpara evaluate   --dataset run/original.jsonl --summaries run/summaries_original.jsonl
//   relpara analyze    --run run/
//   relpara run        --config experiment.toml
//   relpara stats      --dataset data.jsonl | --run run/
//
// Exit codes: 0 ok, 1 config error, 2 pipeline error, 3 abort threshold hit.

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "relpara/relpara.hpp"

namespace fs = std::filesystem;
using namespace relpara;

namespace {

// Flags shared by the pipeline subcommands; unset ones leave the config alone.
struct Overrides {
  std::string config_path;
  std::string dataset;
  std::string name;
  std::optional<std::string> mode;
  std::optional<int> top_n;
  std::optional<std::string> psi;
  std::optional<double> temperature;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> limit;
  std::optional<std::string> out;
  std::optional<std::string> summarizer, paraphraser, judge;
  bool mock = false;
  std::optional<std::string> bertscore_endpoint;
  std::optional<std::size_t> max_inflight;
  std::optional<int> target_len;
  std::optional<std::string> prompt_style;
  std::optional<int> bins;
  bool geval = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "TOML run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--dataset", o.dataset, "JSONL dataset {id, article, summary}");
  cmd->add_option("--name", o.name, "dataset name (selects default summary length for cnn/xsum/reddit/news)");
  cmd->add_option("--psi", o.psi, "relevance mapping: tfidf or rouge1");
  cmd->add_option("--top-n", o.top_n, "article sentences kept per summary sentence");
  cmd->add_option("--seed", o.seed, "global seed");
  cmd->add_option("--limit", o.limit, "use only the first N pairs");
  cmd->add_option("--out", o.out, "output location");
  cmd->add_option("--max-inflight", o.max_inflight, "concurrent backend requests");
  cmd->add_option("--target-len", o.target_len, "summary sentences to request (overrides the profile)");
}

void add_backend_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--temperature", o.temperature, "sampling temperature for summarizer and paraphraser");
  cmd->add_option("--summarizer", o.summarizer, "backend name for summarization");
  cmd->add_option("--paraphraser", o.paraphraser, "backend name for paraphrasing");
  cmd->add_option("--judge", o.judge, "backend name for G-Eval");
  cmd->add_flag("--mock", o.mock, "use the deterministic mock backends");
  cmd->add_option("--bertscore-endpoint", o.bertscore_endpoint, "BertScore sidecar URL");
  cmd->add_option("--prompt-style", o.prompt_style, "summary prompt: numbered, dash or dolly");
  cmd->add_option("--bins", o.bins, "position histogram bins");
  cmd->add_flag("--geval", o.geval, "score summaries with the judge backend");
}

config::RunConfig resolve(const Overrides& o) {
  auto cfg = o.config_path.empty() ? config::defaults() : config::load_config(o.config_path);
  if (!o.dataset.empty()) cfg.dataset.path = o.dataset;
  if (!o.name.empty()) cfg.dataset.name = o.name;
  if (o.mode) cfg.plan.mode = perturb::parse_plan_mode(*o.mode);
  if (o.top_n) {
    cfg.plan.top_n_paraphrase = *o.top_n;
    cfg.mapper.top_n = *o.top_n;
  }
  if (o.psi) cfg.mapper.kind = relevance::parse_mapper_kind(*o.psi);
  if (o.temperature) {
    cfg.summarizer_gen.temperature = *o.temperature;
    cfg.paraphraser_gen.temperature = *o.temperature;
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.limit) cfg.dataset.limit = *o.limit;
  if (o.out) cfg.out_dir = *o.out;
  if (o.summarizer) cfg.summarizer = *o.summarizer;
  if (o.paraphraser) cfg.paraphraser = *o.paraphraser;
  if (o.judge) cfg.judge = *o.judge;
  if (o.geval) cfg.metrics.geval = true;
  if (o.bertscore_endpoint) cfg.metrics.bertscore_endpoint = *o.bertscore_endpoint;
  if (o.max_inflight) cfg.max_inflight = *o.max_inflight;
  if (o.target_len) cfg.dataset.target_summary_len = *o.target_len;
  if (o.prompt_style) cfg.dataset.prompt_style = *o.prompt_style;
  if (o.bins) cfg.metrics.bins = *o.bins;
  if (o.mock) config::force_mocks(cfg);
  return cfg;
}

corpus::Dataset load(const config::RunConfig& cfg) {
  if (cfg.dataset.path.empty()) throw ConfigError("--dataset is required");
  corpus::LoadOptions lo;
  lo.name = cfg.dataset.name;
  lo.target_override = cfg.dataset.target_summary_len;
  return corpus::take_first(corpus::load_dataset(cfg.dataset.path, lo), cfg.dataset.limit);
}

llm::ChatClient client(const config::RunConfig& cfg, const std::string& name) {
  return llm::make_client(config::backend(cfg, name));
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << std::endl; }

int cmd_ingest(const std::string& in, const std::string& profile_out, const Overrides& o) {
  corpus::LoadOptions lo;
  lo.name = o.name;
  lo.target_override = o.target_len;
  const auto ds = corpus::load_dataset(in, lo);
  const auto j = corpus::profile_to_json(ds);
  if (profile_out.empty()) {
    print_json(j);
  } else {
    pipeline::write_json(j, profile_out);
    std::cerr << "[relpara] profile of " << ds.pairs.size() << " pairs written to " << profile_out << "\n";
  }
  return 0;
}

int cmd_map(const Overrides& o) {
  auto cfg = resolve(o);
  const auto ds = load(cfg);
  const auto maps = pipeline::map_dataset(ds, cfg.mapper);
  if (o.out) {
    pipeline::write_relevance(maps, *o.out);
  } else {
    for (const auto& m : maps) std::cout << relevance::to_json(m).dump() << "\n";
  }
  return 0;
}

int cmd_paraphrase(const Overrides& o) {
  auto cfg = resolve(o);
  config::validate(cfg);
  const auto ds = load(cfg);
  const pipeline::RunFiles files{cfg.out_dir};
  fs::create_directories(files.dir);
  const bool needs_para = cfg.plan.mode == perturb::PlanMode::Relevant ||
                          cfg.plan.mode == perturb::PlanMode::NonrelevantRandom;
  const auto para = needs_para ? client(cfg, cfg.paraphraser) : llm::make_client(llm::mock_backend("mock-identity"));
  perturb::PerturbationPlan plan = cfg.plan;
  plan.seed = cfg.seed;
  const auto r = perturb::build_perturbed_corpus(ds, plan, cfg.mapper, para, cfg.paraphraser_gen,
                                                 {cfg.max_inflight, cfg.abort_fraction});
  pipeline::write_relevance(r.relevance, files.relevance());
  corpus::write_dataset(r.original, files.original());
  perturb::write_perturbed(r.perturbed, files.perturbed());
  pipeline::write_json(perturb::to_json(r.exclusions), files.exclusions());
  std::cerr << "[relpara] paraphrased " << perturb::substitution_pairs(r.perturbed).size() << " sentences in "
            << r.perturbed.size() << " articles; refusal rate " << pipeline::report_rate(r.exclusions) << "; "
            << r.exclusions.excluded_ids.size() << " excluded\n";
  return 0;
}

int cmd_summarize(const Overrides& o) {
  auto cfg = resolve(o);
  const auto ds = load(cfg);
  std::vector<corpus::Article> articles;
  for (const auto& p : ds.pairs) articles.push_back(p.article);
  const auto tmpl = llm::summary_template(cfg.dataset.prompt_style, ds.profile.target_summary_len);
  const auto run = pipeline::summarize_articles(articles, tmpl, client(cfg, cfg.summarizer), cfg.summarizer_gen,
                                                cfg.seed, cfg.max_inflight);
  for (const auto& [id, why] : run.failures) std::cerr << "[relpara] " << id << ": " << why << "\n";
  std::vector<llm::ParsedSummary> ok;
  for (const auto& s : run.summaries)
    if (!run.failures.count(s.article_id)) ok.push_back(s);
  if (o.out) {
    pipeline::write_summaries(ok, *o.out);
  } else {
    for (const auto& s : ok) std::cout << pipeline::to_json(s).dump() << "\n";
  }
  return run.failures.empty() ? 0 : 2;
}

int cmd_evaluate(const Overrides& o, const std::string& summaries_path) {
  auto cfg = resolve(o);
  const auto ds = load(cfg);
  const auto summaries = pipeline::read_summaries(summaries_path);
  std::map<std::string, const corpus::Pair*> by_id;
  for (const auto& p : ds.pairs) by_id[p.article.id] = &p;
  std::vector<corpus::GoldSummary> gold;
  std::vector<corpus::Article> articles;
  for (const auto& s : summaries) {
    auto it = by_id.find(s.article_id);
    if (it == by_id.end()) throw Error("summary for unknown id '" + s.article_id + "'");
    gold.push_back(it->second->summary);
    articles.push_back(it->second->article);
  }
  std::optional<metrics::BertScoreClient> bs;
  if (!cfg.metrics.bertscore_endpoint.empty()) bs.emplace(cfg.metrics.bertscore_endpoint);
  std::optional<llm::ChatClient> judge;
  if (cfg.metrics.geval) judge.emplace(client(cfg, cfg.judge));
  metrics::EvalOptions eo;
  eo.bertscore = bs ? &*bs : nullptr;
  eo.judge = {judge ? &*judge : nullptr, cfg.judge_gen};
  eo.articles = &articles;
  eo.max_inflight = cfg.max_inflight;
  eo.dataset = ds.name;
  eo.backend = cfg.summarizer;
  const auto rep = metrics::evaluate_corpus(gold, summaries, eo);
  const auto text = analysis::dump_fixed(analysis::to_json(rep));
  if (o.out) {
    std::ofstream(*o.out) << text;
  } else {
    std::cout << text;
  }
  return 0;
}

int cmd_analyze(const Overrides& o, const std::string& run_dir) {
  auto cfg = resolve(o);
  const pipeline::RunFiles files{run_dir};
  corpus::LoadOptions lo;
  lo.name = cfg.dataset.name;
  lo.target_override = cfg.dataset.target_summary_len;
  // original.jsonl does not carry the dataset name; the run manifest does.
  if (lo.name.empty() && fs::exists(files.manifest())) {
    const auto m = pipeline::read_json(files.manifest());
    if (m.contains("dataset")) lo.name = m["dataset"].value("dataset", std::string());
  }
  const auto original = corpus::load_dataset(files.original(), lo);
  const auto perturbed = perturb::read_perturbed(files.perturbed());
  const auto exclusions = perturb::exclusion_log_from_json(pipeline::read_json(files.exclusions()));
  const auto so = pipeline::read_summaries(files.summaries_original());
  const auto sp = pipeline::read_summaries(files.summaries_perturbed());
  const fs::path out = o.out ? fs::path(*o.out) : files.reports();
  auto [bundle, written] = pipeline::assemble_report(
      cfg, {original, perturbed, so, sp, exclusions}, out,
      [&](const std::string& name) { return client(cfg, name); });
  for (const auto& p : written) std::cout << p.string() << "\n";
  return 0;
}

int cmd_run(const Overrides& o, bool resume) {
  auto cfg = resolve(o);
  pipeline::RunOptions opts;
  opts.resume = resume;
  const auto bundle = pipeline::run_experiment(cfg, opts);
  std::cout << analysis::metrics_csv(bundle);
  std::cout << "histogram_l1," << analysis::fixed6(analysis::histogram_divergence(bundle.original_hist, bundle.perturbed_hist))
            << "\n";
  return 0;
}

int cmd_stats(const Overrides& o, const std::string& run_dir) {
  if (!run_dir.empty()) {
    const pipeline::RunFiles files{run_dir};
    const auto ex = perturb::exclusion_log_from_json(pipeline::read_json(files.exclusions()));
    nlohmann::json j = {{"run", run_dir},
                        {"excluded", ex.excluded_ids.size()},
                        {"refused", ex.refused},
                        {"attempted", ex.attempted},
                        {"refusal_rate", ex.refusal_rate}};
    if (fs::exists(files.perturbed())) {
      const auto pert = perturb::read_perturbed(files.perturbed());
      j["articles"] = pert.size();
      j["substitutions"] = perturb::substitution_pairs(pert).size();
    }
    if (fs::exists(files.reports() / "report.json"))
      j["change_pct"] = pipeline::read_json(files.reports() / "report.json").at("change_pct");
    print_json(j);
    return 0;
  }
  auto cfg = resolve(o);
  const auto ds = load(cfg);
  auto j = corpus::profile_to_json(ds);
  std::map<std::size_t, std::size_t> art_hist, sum_hist;
  for (const auto& p : ds.pairs) {
    ++art_hist[p.article.size()];
    ++sum_hist[p.summary.sentences.size()];
  }
  nlohmann::json a = nlohmann::json::object(), s = nlohmann::json::object();
  for (auto [k, v] : art_hist) a[std::to_string(k)] = v;
  for (auto [k, v] : sum_hist) s[std::to_string(k)] = v;
  j["article_sentence_counts"] = a;
  j["summary_sentence_counts"] = s;
  print_json(j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relpara: relevance paraphrasing robustness harness for LLM summarizers"};
  app.require_subcommand(1);
  Overrides o;

  std::string ingest_in, profile_out;
  auto* ingest = app.add_subcommand("ingest", "load a dataset and emit its profile");
  ingest->add_option("--in", ingest_in, "JSONL dataset")->required()->check(CLI::ExistingFile);
  ingest->add_option("--profile-out", profile_out, "where to write the profile JSON");
  ingest->add_option("--name", o.name, "dataset name");
  ingest->add_option("--target-len", o.target_len, "override the requested summary length");

  auto* map = app.add_subcommand("map", "compute relevance maps for every pair");
  add_common(map, o);

  auto* paraphrase = app.add_subcommand("paraphrase", "build the perturbed corpus");
  add_common(paraphrase, o);
  add_backend_flags(paraphrase, o);
  paraphrase->add_option("--mode", o.mode, "relevant | nonrelevant | identity | none-repeat");

  auto* summarize = app.add_subcommand("summarize", "summarize every article of a dataset");
  add_common(summarize, o);
  add_backend_flags(summarize, o);

  std::string summaries_path;
  auto* evaluate = app.add_subcommand("evaluate", "score summaries against the gold summaries");
  add_common(evaluate, o);
  add_backend_flags(evaluate, o);
  evaluate->add_option("--summaries", summaries_path, "summaries JSONL")->required();

  std::string run_dir;
  auto* analyze = app.add_subcommand("analyze", "evaluate a run directory and emit the report");
  add_common(analyze, o);
  add_backend_flags(analyze, o);
  analyze->add_option("--run", run_dir, "run directory")->required()->check(CLI::ExistingDirectory);

  bool resume = false;
  auto* run = app.add_subcommand("run", "end-to-end experiment");
  add_common(run, o);
  add_backend_flags(run, o);
  run->add_option("--mode", o.mode, "relevant | nonrelevant | identity | none-repeat");
  run->add_flag("--resume", resume, "reuse intermediates of a previous run with the same config");

  std::string stats_run;
  auto* stats = app.add_subcommand("stats", "dataset or run statistics");
  add_common(stats, o);
  stats->add_option("--run", stats_run, "run directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*ingest) return cmd_ingest(ingest_in, profile_out, o);
    if (*map) return cmd_map(o);
    if (*paraphrase) return cmd_paraphrase(o);
    if (*summarize) return cmd_summarize(o);
    if (*evaluate) return cmd_evaluate(o, summaries_path);
    if (*analyze) return cmd_analyze(o, run_dir);
    if (*run) return cmd_run(o, resume);
    if (*stats) return cmd_stats(o, stats_run);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const AbortError& e) {
    std::cerr << "aborted: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
