#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "relpara/error.hpp"
#include "relpara/random.hpp"

namespace relpara::llm {

inline constexpr const char* kDefaultKeyEnv = "RELPARA_API_KEY";
inline constexpr const char* kBaseUrlEnv = "RELPARA_BASE_URL";
inline constexpr const char* kChatPath = "/v1/chat/completions";

struct Backend {
  std::string name;
  std::string kind = "openai";  // openai | mock-extractive | mock-reversal | mock-identity | mock-judge
  std::string base_url;
  std::string model_id;
  std::string api_key_env = kDefaultKeyEnv;  // empty: send no Authorization header
  int max_retries = 3;
  std::chrono::milliseconds timeout{60000};

  bool is_mock() const { return kind.rfind("mock-", 0) == 0; }
};

struct GenerationConfig {
  double temperature = 0.7;
  int max_tokens = 512;
  std::optional<std::int64_t> seed_hint;
};

struct HttpRequest {
  std::string path;
  std::string body;
  std::vector<std::pair<std::string, std::string>> headers;
};

// status 0 means the request never produced an HTTP response.
struct HttpResponse {
  int status = 0;
  std::string body;
  std::string error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const HttpRequest& req) const = 0;
  virtual HttpResponse get(const std::string& /*path*/) const { return {0, "", "GET unsupported"}; }
};

struct Endpoint {
  std::string scheme_host_port;
  std::string path_prefix;
};

inline Endpoint split_url(std::string_view url) {
  const auto scheme = url.find("://");
  if (scheme == std::string_view::npos || scheme == 0)
    throw ConfigError("base_url must be absolute: '" + std::string(url) + "'");
  const auto path = url.find('/', scheme + 3);
  Endpoint ep;
  ep.scheme_host_port = std::string(url.substr(0, path));
  if (path != std::string_view::npos) {
    ep.path_prefix = std::string(url.substr(path));
    while (!ep.path_prefix.empty() && ep.path_prefix.back() == '/') ep.path_prefix.pop_back();
  }
  return ep;
}

// Plain HTTP(S) via cpp-httplib. A fresh client per request keeps the
// transport safe to share between threads.
class HttpTransport final : public Transport {
 public:
  HttpTransport(std::string_view base_url, std::chrono::milliseconds timeout)
      : endpoint_(split_url(base_url)), timeout_(timeout) {}

  HttpResponse post(const HttpRequest& req) const override {
    auto cli = make_client();
    httplib::Headers headers;
    for (const auto& [k, v] : req.headers) headers.emplace(k, v);
    auto res = cli.Post(endpoint_.path_prefix + req.path, headers, req.body, "application/json");
    if (!res) return {0, "", httplib::to_string(res.error())};
    return {res->status, res->body, ""};
  }

  HttpResponse get(const std::string& path) const override {
    auto cli = make_client();
    auto res = cli.Get(endpoint_.path_prefix + path);
    if (!res) return {0, "", httplib::to_string(res.error())};
    return {res->status, res->body, ""};
  }

 private:
  httplib::Client make_client() const {
    httplib::Client cli(endpoint_.scheme_host_port);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());
    return cli;
  }

  Endpoint endpoint_;
  std::chrono::milliseconds timeout_;
};

struct Completion {
  std::string text;
  int retries = 0;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

inline void real_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

inline bool retryable(int status) { return status == 0 || status == 429 || status >= 500; }

// Delay before retry number `attempt` (0-based): 1s * 2^attempt plus up to
// 250ms of jitter.
inline std::chrono::milliseconds backoff_delay(int attempt, std::mt19937_64& eng) {
  const auto base = std::chrono::milliseconds(1000LL << std::min(attempt, 16));
  return base + std::chrono::milliseconds(rng::uniform_below(eng, 250));
}

inline std::string build_chat_request(std::string_view model, std::string_view prompt,
                                      const GenerationConfig& cfg) {
  nlohmann::json body = {
      {"model", model},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
      {"temperature", cfg.temperature},
      {"max_tokens", cfg.max_tokens}};
  if (cfg.seed_hint) body["seed"] = *cfg.seed_hint;
  return body.dump();
}

inline std::string parse_chat_response(std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw ProtocolError(std::string("chat completion body is not JSON: ") + e.what());
  }
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_null()) return {};
    return content.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("chat completion lacks choices[0].message.content: ") + e.what());
  }
}

class ChatClient {
 public:
  ChatClient(Backend backend, std::shared_ptr<const Transport> transport, Sleeper sleeper = real_sleep)
      : backend_(std::move(backend)), transport_(std::move(transport)), sleeper_(std::move(sleeper)) {
    if (backend_.max_retries < 0) throw ConfigError("max_retries must be >= 0");
    if (!transport_) throw ConfigError("backend '" + backend_.name + "' has no transport");
  }

  const Backend& backend() const { return backend_; }

  // Retries transport failures, 429 and 5xx with exponential backoff; other
  // statuses fail immediately.
  Completion complete(std::string_view prompt, const GenerationConfig& cfg) const {
    if (cfg.temperature < 0.0) throw ConfigError("temperature must be >= 0");
    HttpRequest req;
    req.path = kChatPath;
    req.body = build_chat_request(backend_.model_id, prompt, cfg);
    req.headers.emplace_back("Accept", "application/json");
    if (!backend_.is_mock() && !backend_.api_key_env.empty()) {
      const char* key = std::getenv(backend_.api_key_env.c_str());
      if (!key || !*key)
        throw ConfigError("environment variable " + backend_.api_key_env + " is not set for backend '" +
                          backend_.name + "'");
      req.headers.emplace_back("Authorization", std::string("Bearer ") + key);
    }

    std::mt19937_64 jitter(rng::fnv1a(prompt) ^ rng::fnv1a(backend_.name));
    int retries = 0;
    HttpResponse res;
    for (int attempt = 0;; ++attempt) {
      res = transport_->post(req);
      if (res.status >= 200 && res.status < 300) return {parse_chat_response(res.body), retries};
      if (!retryable(res.status) || attempt >= backend_.max_retries) break;
      sleeper_(backoff_delay(attempt, jitter));
      ++retries;
    }
    std::string what = "backend '" + backend_.name + "' failed after " + std::to_string(retries) +
                       " retries: ";
    what += res.status ? "HTTP " + std::to_string(res.status) : "transport error " + res.error;
    throw TransportError(what, res.status);
  }

 private:
  Backend backend_;
  std::shared_ptr<const Transport> transport_;
  Sleeper sleeper_;
};

}  // namespace relpara::llm
