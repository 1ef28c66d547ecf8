#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "relpara/config.hpp"
#include "relpara/mock.hpp"
#include "relpara/pipeline.hpp"

using namespace relpara;
namespace fs = std::filesystem;

namespace {

const std::string kFixture = std::string(RELPARA_TEST_DATA) + "/fixture20.jsonl";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("relpara_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

config::RunConfig base_config(const fs::path& out) {
  auto cfg = config::defaults();
  cfg.dataset.path = kFixture;
  cfg.out_dir = out.string();
  return cfg;
}

pipeline::RunOptions quiet() {
  pipeline::RunOptions o;
  o.log = nullptr;
  o.sleeper = [](std::chrono::milliseconds) {};
  return o;
}

void expect_zero_change(const analysis::ReportBundle& b) {
  ASSERT_EQ(b.change.changes.size(), 3u);
  for (const auto& c : b.change.changes) {
    ASSERT_TRUE(c.change_pct) << c.metric;
    EXPECT_EQ(*c.change_pct, 0.0) << c.metric;
    EXPECT_EQ(analysis::fixed6(*c.change_pct), "0.000000");
  }
  EXPECT_EQ(analysis::histogram_divergence(b.original_hist, b.perturbed_hist), 0.0);
}

}  // namespace

TEST(Run, IdentityPlanHasZeroDelta) {
  auto cfg = base_config(scratch("identity"));
  cfg.plan.mode = perturb::PlanMode::Identity;
  config::force_mocks(cfg);
  const auto b = pipeline::run_experiment(cfg, quiet());
  EXPECT_EQ(b.original.n_pairs, 20u);
  expect_zero_change(b);
  EXPECT_EQ(b.exclusions.refusal_rate, 0.0);
}

TEST(Run, NoneRepeatHasZeroDelta) {
  auto cfg = base_config(scratch("repeat"));
  cfg.plan.mode = perturb::PlanMode::NoneRepeat;
  cfg.summarizer_gen.temperature = 0.0;
  const auto b = pipeline::run_experiment(cfg, quiet());
  expect_zero_change(b);
  EXPECT_FALSE(b.fidelity);
}

TEST(Run, RelevantPlanWritesEveryArtifact) {
  const auto dir = scratch("artifacts");
  const auto b = pipeline::run_experiment(base_config(dir), quiet());
  const pipeline::RunFiles f{dir};
  for (const auto& p : {f.manifest(), f.relevance(), f.original(), f.perturbed(), f.exclusions(),
                        f.summaries_original(), f.summaries_perturbed(), f.reports() / "report.json",
                        f.reports() / "metrics.csv", f.reports() / "histograms.csv",
                        f.reports() / "metrics.svg", f.reports() / "histograms.svg"})
    EXPECT_TRUE(fs::exists(p)) << p;
  const auto m = pipeline::read_json(f.manifest());
  EXPECT_EQ(m.at("status"), "complete");
  EXPECT_EQ(m.at("seed"), 0);
  EXPECT_EQ(m.at("config_hash"), config::config_hash(base_config(dir)));
  EXPECT_EQ(m.at("n_pairs_evaluated"), 20);
  EXPECT_EQ(m.at("artifacts").size(), 5u);
  EXPECT_EQ(m.at("backends").at("summarizer").at("kind"), "mock-extractive");
  ASSERT_TRUE(b.fidelity);
  EXPECT_EQ(b.fidelity->scorer, "rouge1");
  // Word reversal keeps the bag of words, so unigram overlap is unchanged.
  EXPECT_EQ(b.fidelity->mean, 1.0);
  EXPECT_EQ(*b.change.find("rouge1_f1")->change_pct, 0.0);
  EXPECT_LT(*b.change.find("rouge2_f1")->change_pct, 0.0);
}

TEST(Run, MatchesGoldenReport) {
  const auto dir = scratch("golden");
  pipeline::run_experiment(base_config(dir), quiet());
  EXPECT_EQ(slurp(dir / "report" / "report.json"), slurp(std::string(RELPARA_TEST_DATA) + "/golden/report.json"));
}

TEST(Run, RerunsAreByteIdentical) {
  const auto a = scratch("rerun_a"), b = scratch("rerun_b");
  auto ca = base_config(a), cb = base_config(b);
  ca.plan.mode = cb.plan.mode = perturb::PlanMode::NonrelevantRandom;
  ca.seed = cb.seed = 17;
  pipeline::run_experiment(ca, quiet());
  pipeline::run_experiment(cb, quiet());
  for (const char* f : {"report/report.json", "report/metrics.csv", "report/histograms.svg", "perturbed.jsonl",
                        "summaries_perturbed.jsonl", "relevance.jsonl", "exclusions.json"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(Run, InflightLimitDoesNotChangeOutput) {
  const auto a = scratch("k1"), b = scratch("k8");
  auto ca = base_config(a), cb = base_config(b);
  ca.max_inflight = 1;
  cb.max_inflight = 8;
  pipeline::run_experiment(ca, quiet());
  pipeline::run_experiment(cb, quiet());
  EXPECT_EQ(slurp(a / "report/report.json"), slurp(b / "report/report.json"));
}

TEST(Run, RefusalExcludedFromBothCorpora) {
  const auto dir = scratch("refusal");
  const auto ds = corpus::load_dataset(kFixture, {});
  std::set<std::string> refuse;
  for (const auto& s : ds.pairs[2].article.sentences) refuse.insert(s.text);
  auto opts = quiet();
  opts.transports = [refuse](const llm::Backend& b) -> std::shared_ptr<const llm::Transport> {
    if (b.kind != "mock-reversal") return llm::make_transport(b);
    return llm::reply_with([refuse](const std::string& prompt) {
      const auto s = llm::sentence_of_paraphrase_prompt(prompt);
      return refuse.count(s) ? std::string("As an AI, I can't rewrite that.") : llm::reverse_words(s);
    });
  };
  const auto b = pipeline::run_experiment(base_config(dir), opts);
  EXPECT_EQ(b.exclusions.excluded_ids, (std::vector<std::string>{"a03"}));
  EXPECT_EQ(b.original.n_pairs, 19u);
  EXPECT_EQ(b.perturbed.n_pairs, 19u);
  const auto orig = pipeline::read_summaries(dir / "summaries_original.jsonl");
  const auto pert = pipeline::read_summaries(dir / "summaries_perturbed.jsonl");
  ASSERT_EQ(orig.size(), pert.size());
  for (std::size_t i = 0; i < orig.size(); ++i) {
    EXPECT_EQ(orig[i].article_id, pert[i].article_id);
    EXPECT_NE(orig[i].article_id, "a03");
  }
  EXPECT_GT(b.exclusions.refused, 0u);
  EXPECT_EQ(b.exclusions.refusal_rate,
            static_cast<double>(b.exclusions.refused) / static_cast<double>(b.exclusions.attempted));
}

TEST(Run, SummaryFailureExcludesArticle) {
  const auto dir = scratch("sumfail");
  const auto ds = corpus::load_dataset(kFixture, {});
  const std::string marker = ds.pairs[4].article.sentences[0].text;
  auto opts = quiet();
  opts.transports = [marker](const llm::Backend& b) -> std::shared_ptr<const llm::Transport> {
    if (b.kind != "mock-extractive") return llm::make_transport(b);
    return std::make_shared<llm::FunctionTransport>([marker](const std::string& prompt) {
      if (prompt.find(marker) != std::string::npos) return llm::HttpResponse{500, "", ""};
      return llm::HttpResponse{200, llm::chat_response_body(llm::extractive_summary(prompt)), ""};
    });
  };
  const auto b = pipeline::run_experiment(base_config(dir), opts);
  EXPECT_EQ(b.original.n_pairs, 19u);
  EXPECT_EQ(b.perturbed.n_pairs, 19u);
  EXPECT_EQ(b.exclusions.excluded_ids, (std::vector<std::string>{"a05"}));
  EXPECT_EQ(b.exclusions.reasons.at("a05").rfind("summarize transport", 0), 0u);
}

TEST(Run, AbortsWhenMostArticlesRefused) {
  const auto dir = scratch("abort");
  auto opts = quiet();
  opts.transports = [](const llm::Backend& b) -> std::shared_ptr<const llm::Transport> {
    if (b.kind != "mock-reversal") return llm::make_transport(b);
    return llm::reply_with([](const std::string&) { return std::string("I cannot help."); });
  };
  EXPECT_THROW(pipeline::run_experiment(base_config(dir), opts), AbortError);
  EXPECT_TRUE(fs::exists(dir / "run_manifest.json"));
}

TEST(Run, ResumeReusesIntermediates) {
  const auto dir = scratch("resume");
  const auto first = pipeline::run_experiment(base_config(dir), quiet());
  const auto before = slurp(dir / "report/report.json");

  std::atomic<int> calls{0};
  auto opts = quiet();
  opts.resume = true;
  opts.transports = [&calls](const llm::Backend& b) -> std::shared_ptr<const llm::Transport> {
    return llm::reply_with([&calls](const std::string&) {
      ++calls;
      return std::string("unused");
    });
    (void)b;
  };
  pipeline::run_experiment(base_config(dir), opts);
  EXPECT_EQ(calls.load(), 0);
  EXPECT_EQ(slurp(dir / "report/report.json"), before);

  // A different config invalidates the saved intermediates.
  auto changed = base_config(dir);
  changed.seed = 3;
  pipeline::run_experiment(changed, opts);
  EXPECT_GT(calls.load(), 0);
}

TEST(Run, StageErrorsNameTheStage) {
  auto cfg = base_config(scratch("stage"));
  cfg.dataset.path = (scratch("missing") / "nope.jsonl").string();
  try {
    pipeline::run_experiment(cfg, quiet());
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "load");
  }
}

TEST(Config, HashTracksEveryField) {
  const auto base = base_config("out");
  const auto h = config::config_hash(base);
  EXPECT_EQ(config::config_hash(base_config("out")), h);
  EXPECT_EQ(h.size(), 16u);

  std::vector<std::function<void(config::RunConfig&)>> edits = {
      [](auto& c) { c.seed = 1; },
      [](auto& c) { c.out_dir = "elsewhere"; },
      [](auto& c) { c.max_inflight = 9; },
      [](auto& c) { c.abort_fraction = 0.25; },
      [](auto& c) { c.dataset.path += "x"; },
      [](auto& c) { c.dataset.name = "cnn"; },
      [](auto& c) { c.dataset.target_summary_len = 3; },
      [](auto& c) { c.dataset.prompt_style = "dolly"; },
      [](auto& c) { c.dataset.limit = 5; },
      [](auto& c) { c.summarizer = "mock-identity"; },
      [](auto& c) { c.paraphraser = "mock-identity"; },
      [](auto& c) { c.judge = "mock-judge"; },
      [](auto& c) { c.summarizer_gen.temperature = 0.0; },
      [](auto& c) { c.paraphraser_gen.max_tokens = 1; },
      [](auto& c) { c.judge_gen.seed_hint = 4; },
      [](auto& c) { c.plan.mode = perturb::PlanMode::Identity; },
      [](auto& c) { c.plan.top_n_paraphrase = 3; },
      [](auto& c) { c.mapper.kind = relevance::MapperKind::Rouge1F1; },
      [](auto& c) { c.mapper.top_n = 2; },
      [](auto& c) { c.metrics.bertscore_endpoint = "http://x"; },
      [](auto& c) { c.metrics.geval = true; },
      [](auto& c) { c.metrics.bins = 5; },
      [](auto& c) { c.backends["mock-reversal"].max_retries = 2; },
      [](auto& c) { c.backends["mock-reversal"].model_id = "other"; },
  };
  std::set<std::string> seen = {h};
  for (std::size_t i = 0; i < edits.size(); ++i) {
    auto c = base_config("out");
    edits[i](c);
    const auto hi = config::config_hash(c);
    EXPECT_NE(hi, h) << "edit " << i;
    seen.insert(hi);
  }
  EXPECT_EQ(seen.size(), edits.size() + 1);
}

TEST(Config, LoadToml) {
  const auto dir = scratch("toml");
  fs::create_directories(dir);
  std::ofstream(dir / "run.toml") << R"(
seed = 42
out = "runs/x"
max_inflight = 2

[dataset]
path = "data/cnn.jsonl"
name = "cnn"
target_summary_len = 3
prompt_style = "dash"
limit = 50

[mapper]
psi = "rouge1"

[plan]
mode = "nonrelevant"
top_n = 3

[metrics]
geval = true
bins = 20

[backends.gpt]
base_url = "https://api.example.com"
model = "gpt-3.5-turbo"
max_retries = 5
timeout_s = 30

[roles]
summarizer = "gpt"
paraphraser = "gpt"
judge = "gpt"

[generation.summarizer]
temperature = 0.0
max_tokens = 300
seed = 7
)";
  const auto c = config::load_config(dir / "run.toml");
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.out_dir, "runs/x");
  EXPECT_EQ(c.max_inflight, 2u);
  EXPECT_EQ(c.dataset.path, "data/cnn.jsonl");
  EXPECT_EQ(c.dataset.target_summary_len, 3);
  EXPECT_EQ(c.dataset.prompt_style, "dash");
  EXPECT_EQ(c.dataset.limit, 50u);
  EXPECT_EQ(c.mapper.kind, relevance::MapperKind::Rouge1F1);
  EXPECT_EQ(c.plan.mode, perturb::PlanMode::NonrelevantRandom);
  EXPECT_EQ(c.plan.top_n_paraphrase, 3);
  EXPECT_TRUE(c.metrics.geval);
  EXPECT_EQ(c.metrics.bins, 20);
  const auto& gpt = config::backend(c, "gpt");
  EXPECT_EQ(gpt.kind, "openai");
  EXPECT_EQ(gpt.model_id, "gpt-3.5-turbo");
  EXPECT_EQ(gpt.max_retries, 5);
  EXPECT_EQ(gpt.timeout.count(), 30000);
  EXPECT_EQ(gpt.api_key_env, "RELPARA_API_KEY");
  EXPECT_EQ(c.summarizer_gen.temperature, 0.0);
  EXPECT_EQ(c.summarizer_gen.max_tokens, 300);
  EXPECT_EQ(c.summarizer_gen.seed_hint, 7);
  EXPECT_EQ(c.paraphraser_gen.temperature, 0.7);
  EXPECT_EQ(c.judge_gen.temperature, 0.0);
  EXPECT_NO_THROW(config::validate(c));
  EXPECT_TRUE(c.backends.count("mock-extractive"));
}

TEST(Config, Errors) {
  const auto dir = scratch("toml_bad");
  fs::create_directories(dir);
  std::ofstream(dir / "syntax.toml") << "seed = = 1\n";
  EXPECT_THROW(config::load_config(dir / "syntax.toml"), ConfigError);
  std::ofstream(dir / "url.toml") << "[backends.x]\nbase_url = \"api.example.com\"\n";
  EXPECT_THROW(config::load_config(dir / "url.toml"), ConfigError);
  std::ofstream(dir / "psi.toml") << "[mapper]\npsi = \"bm25\"\n";
  EXPECT_THROW(config::load_config(dir / "psi.toml"), ConfigError);

  auto c = base_config("out");
  c.summarizer = "missing";
  EXPECT_THROW(config::validate(c), ConfigError);
  c = base_config("out");
  c.dataset.path.clear();
  EXPECT_THROW(config::validate(c), ConfigError);
  c = base_config("out");
  c.metrics.geval = true;
  EXPECT_THROW(config::validate(c), ConfigError);
  c = base_config("out");
  c.paraphraser_gen.temperature = -1;
  EXPECT_THROW(config::validate(c), ConfigError);
}

TEST(Config, ForceMocks) {
  auto c = base_config("out");
  c.summarizer = c.paraphraser = "gpt";
  c.judge = "gpt";
  config::force_mocks(c);
  EXPECT_EQ(c.summarizer, "mock-extractive");
  EXPECT_EQ(c.paraphraser, "mock-reversal");
  EXPECT_EQ(c.judge, "mock-judge");
}

TEST(Run, MockJudgeProducesGeval) {
  auto cfg = base_config(scratch("judge"));
  cfg.judge = "mock-judge";
  cfg.metrics.geval = true;
  const auto b = pipeline::run_experiment(cfg, quiet());
  ASSERT_TRUE(b.original.geval);
  // Extractive summaries only use article words.
  EXPECT_EQ(*b.original.geval, 5.0);
  ASSERT_TRUE(b.change.find("geval"));
}
