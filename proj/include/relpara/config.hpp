#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>
#include <toml.hpp>

#include "relpara/client.hpp"
#include "relpara/error.hpp"
#include "relpara/mock.hpp"
#include "relpara/perturb.hpp"
#include "relpara/random.hpp"
#include "relpara/relevance.hpp"

namespace relpara::config {

struct DatasetConfig {
  std::string path;
  std::string name;  // empty: file stem
  std::optional<int> target_summary_len;
  std::string prompt_style = "numbered";
  std::size_t limit = 0;  // 0: all pairs
};

struct MetricToggles {
  std::string bertscore_endpoint;  // empty: BertScore off
  bool geval = false;
  int bins = 10;
};

struct RunConfig {
  DatasetConfig dataset;
  std::map<std::string, llm::Backend> backends;
  std::string summarizer = "mock-extractive";
  std::string paraphraser = "mock-reversal";
  std::string judge;  // empty: no G-Eval
  llm::GenerationConfig summarizer_gen{0.7, 512, std::nullopt};
  llm::GenerationConfig paraphraser_gen{0.7, 256, std::nullopt};
  llm::GenerationConfig judge_gen{0.0, 64, std::nullopt};
  perturb::PerturbationPlan plan;
  relevance::MapperMode mapper;
  MetricToggles metrics;
  std::uint64_t seed = 0;
  std::string out_dir = "runs/latest";
  std::size_t max_inflight = 4;
  double abort_fraction = perturb::kDefaultAbortFraction;
};

inline void add_builtin_mocks(RunConfig& cfg) {
  for (const char* kind : {"mock-extractive", "mock-reversal", "mock-identity", "mock-judge"})
    cfg.backends.try_emplace(kind, llm::mock_backend(kind));
}

inline RunConfig defaults() {
  RunConfig cfg;
  add_builtin_mocks(cfg);
  return cfg;
}

// Points every role at the deterministic mock backends.
inline void force_mocks(RunConfig& cfg) {
  cfg.summarizer = "mock-extractive";
  cfg.paraphraser = cfg.plan.mode == perturb::PlanMode::Identity ? "mock-identity" : "mock-reversal";
  if (!cfg.judge.empty()) cfg.judge = "mock-judge";
}

inline const llm::Backend& backend(const RunConfig& cfg, const std::string& name) {
  auto it = cfg.backends.find(name);
  if (it == cfg.backends.end()) throw ConfigError("no backend named '" + name + "'");
  return it->second;
}

namespace detail {

inline llm::GenerationConfig generation_from(const toml::node_view<const toml::node>& t,
                                             llm::GenerationConfig g) {
  if (!t) return g;
  g.temperature = t["temperature"].value_or(g.temperature);
  g.max_tokens = static_cast<int>(t["max_tokens"].value_or<std::int64_t>(g.max_tokens));
  if (auto s = t["seed"].value<std::int64_t>()) g.seed_hint = *s;
  return g;
}

inline llm::Backend backend_from(const std::string& name, const toml::table& t) {
  llm::Backend b;
  b.name = name;
  b.kind = t["kind"].value_or(std::string("openai"));
  b.base_url = t["base_url"].value_or(std::string());
  b.model_id = t["model"].value_or(std::string());
  b.api_key_env = t["api_key_env"].value_or(std::string(llm::kDefaultKeyEnv));
  b.max_retries = static_cast<int>(t["max_retries"].value_or<std::int64_t>(3));
  b.timeout = std::chrono::milliseconds(
      static_cast<std::int64_t>(t["timeout_s"].value_or(60.0) * 1000.0));
  if (b.max_retries < 0) throw ConfigError("backend '" + name + "': max_retries must be >= 0");
  if (b.kind == "openai") {
    if (b.base_url.empty()) throw ConfigError("backend '" + name + "': base_url is required");
    llm::split_url(b.base_url);
  }
  return b;
}

}  // namespace detail

inline RunConfig load_config(const std::filesystem::path& path) {
  toml::table root;
  try {
    root = toml::parse_file(path.string());
  } catch (const toml::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + std::string(e.description()));
  }
  RunConfig cfg = defaults();
  const toml::table& t = root;
  cfg.seed = static_cast<std::uint64_t>(t["seed"].value_or<std::int64_t>(0));
  cfg.out_dir = t["out"].value_or(cfg.out_dir);
  cfg.max_inflight = static_cast<std::size_t>(t["max_inflight"].value_or<std::int64_t>(4));
  cfg.abort_fraction = t["abort_fraction"].value_or(cfg.abort_fraction);

  if (auto d = t["dataset"]) {
    cfg.dataset.path = d["path"].value_or(std::string());
    cfg.dataset.name = d["name"].value_or(std::string());
    if (auto n = d["target_summary_len"].value<std::int64_t>()) cfg.dataset.target_summary_len = static_cast<int>(*n);
    cfg.dataset.prompt_style = d["prompt_style"].value_or(cfg.dataset.prompt_style);
    cfg.dataset.limit = static_cast<std::size_t>(d["limit"].value_or<std::int64_t>(0));
  }
  if (auto m = t["mapper"]) {
    if (auto psi = m["psi"].value<std::string>()) cfg.mapper.kind = relevance::parse_mapper_kind(*psi);
    cfg.mapper.top_n = static_cast<int>(m["top_n"].value_or<std::int64_t>(1));
  }
  if (auto p = t["plan"]) {
    if (auto mode = p["mode"].value<std::string>()) cfg.plan.mode = perturb::parse_plan_mode(*mode);
    cfg.plan.top_n_paraphrase = static_cast<int>(p["top_n"].value_or<std::int64_t>(1));
  }
  if (auto m = t["metrics"]) {
    cfg.metrics.bertscore_endpoint = m["bertscore_endpoint"].value_or(std::string());
    cfg.metrics.geval = m["geval"].value_or(false);
    cfg.metrics.bins = static_cast<int>(m["bins"].value_or<std::int64_t>(10));
  }
  if (auto b = t["backends"].as_table()) {
    for (const auto& [key, node] : *b) {
      const auto* bt = node.as_table();
      if (!bt) throw ConfigError("backends." + std::string(key.str()) + " must be a table");
      cfg.backends[std::string(key.str())] = detail::backend_from(std::string(key.str()), *bt);
    }
  }
  if (auto r = t["roles"]) {
    cfg.summarizer = r["summarizer"].value_or(cfg.summarizer);
    cfg.paraphraser = r["paraphraser"].value_or(cfg.paraphraser);
    cfg.judge = r["judge"].value_or(cfg.judge);
  }
  const toml::node_view<const toml::node> gen = t["generation"];
  cfg.summarizer_gen = detail::generation_from(gen["summarizer"], cfg.summarizer_gen);
  cfg.paraphraser_gen = detail::generation_from(gen["paraphraser"], cfg.paraphraser_gen);
  cfg.judge_gen = detail::generation_from(gen["judge"], cfg.judge_gen);
  return cfg;
}

inline void validate(const RunConfig& cfg) {
  if (cfg.dataset.path.empty()) throw ConfigError("no dataset path configured");
  if (cfg.plan.top_n_paraphrase < 1) throw ConfigError("plan top_n must be >= 1");
  if (cfg.mapper.top_n < 1) throw ConfigError("mapper top_n must be >= 1");
  if (cfg.metrics.bins < 1) throw ConfigError("bins must be >= 1");
  if (cfg.max_inflight < 1) throw ConfigError("max_inflight must be >= 1");
  if (cfg.abort_fraction < 0.0 || cfg.abort_fraction > 1.0) throw ConfigError("abort_fraction must be in [0,1]");
  for (const auto* g : {&cfg.summarizer_gen, &cfg.paraphraser_gen, &cfg.judge_gen}) {
    if (g->temperature < 0.0) throw ConfigError("temperature must be >= 0");
    if (g->max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
  }
  backend(cfg, cfg.summarizer);
  if (cfg.plan.mode != perturb::PlanMode::Identity && cfg.plan.mode != perturb::PlanMode::NoneRepeat)
    backend(cfg, cfg.paraphraser);
  if (cfg.metrics.geval && cfg.judge.empty()) throw ConfigError("g-eval enabled but no judge backend set");
  if (!cfg.judge.empty()) backend(cfg, cfg.judge);
}

inline nlohmann::json to_json(const llm::Backend& b) {
  return {{"name", b.name},
          {"kind", b.kind},
          {"base_url", b.base_url},
          {"model", b.model_id},
          {"api_key_env", b.api_key_env},
          {"max_retries", b.max_retries},
          {"timeout_ms", b.timeout.count()}};
}

inline nlohmann::json to_json(const llm::GenerationConfig& g) {
  return {{"temperature", g.temperature},
          {"max_tokens", g.max_tokens},
          {"seed", g.seed_hint ? nlohmann::json(*g.seed_hint) : nlohmann::json(nullptr)}};
}

// Every field, keys sorted; the basis of the config hash.
inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json backends = nlohmann::json::object();
  for (const auto& [name, b] : c.backends) backends[name] = to_json(b);
  return {
      {"dataset",
       {{"path", c.dataset.path},
        {"name", c.dataset.name},
        {"target_summary_len", c.dataset.target_summary_len ? nlohmann::json(*c.dataset.target_summary_len)
                                                            : nlohmann::json(nullptr)},
        {"prompt_style", c.dataset.prompt_style},
        {"limit", c.dataset.limit}}},
      {"backends", backends},
      {"roles", {{"summarizer", c.summarizer}, {"paraphraser", c.paraphraser}, {"judge", c.judge}}},
      {"generation",
       {{"summarizer", to_json(c.summarizer_gen)},
        {"paraphraser", to_json(c.paraphraser_gen)},
        {"judge", to_json(c.judge_gen)}}},
      {"plan", {{"mode", perturb::to_string(c.plan.mode)}, {"top_n", c.plan.top_n_paraphrase}}},
      {"mapper", {{"psi", relevance::to_string(c.mapper.kind)}, {"top_n", c.mapper.top_n}}},
      {"metrics",
       {{"bertscore_endpoint", c.metrics.bertscore_endpoint},
        {"geval", c.metrics.geval},
        {"bins", c.metrics.bins}}},
      {"seed", c.seed},
      {"out", c.out_dir},
      {"max_inflight", c.max_inflight},
      {"abort_fraction", c.abort_fraction}};
}

inline std::string config_hash(const RunConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(rng::fnv1a(to_json(c).dump())));
  return buf;
}

}  // namespace relpara::config
