#pragma once

#include <algorithm>
#include <cstdlib>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "relpara/client.hpp"
#include "relpara/corpus.hpp"
#include "relpara/prompts.hpp"
#include "relpara/text.hpp"

// In-process stand-ins for a chat-completions server. They speak the same
// JSON request/response format as the HTTP transport.
namespace relpara::llm {

inline std::string chat_response_body(std::string_view content) {
  nlohmann::json j = {
      {"object", "chat.completion"},
      {"choices", nlohmann::json::array(
                      {{{"index", 0},
                        {"message", {{"role", "assistant"}, {"content", content}}},
                        {"finish_reason", "stop"}}})}};
  return j.dump();
}

inline std::string prompt_of(const HttpRequest& req) {
  auto j = nlohmann::json::parse(req.body);
  return j.at("messages").at(0).at("content").get<std::string>();
}

class FunctionTransport : public Transport {
 public:
  using Handler = std::function<HttpResponse(const std::string& prompt)>;

  explicit FunctionTransport(Handler h) : handler_(std::move(h)) {}

  HttpResponse post(const HttpRequest& req) const override { return handler_(prompt_of(req)); }

 private:
  Handler handler_;
};

inline std::shared_ptr<const Transport> reply_with(std::function<std::string(const std::string&)> fn) {
  return std::make_shared<FunctionTransport>([fn = std::move(fn)](const std::string& prompt) {
    return HttpResponse{200, chat_response_body(fn(prompt)), ""};
  });
}

// Replays a fixed list of responses in order and then repeats the last one.
class ScriptedTransport : public Transport {
 public:
  explicit ScriptedTransport(std::vector<HttpResponse> script) : script_(std::move(script)) {}

  static std::shared_ptr<ScriptedTransport> replies(const std::vector<std::string>& contents) {
    std::vector<HttpResponse> script;
    for (const auto& c : contents) script.push_back({200, chat_response_body(c), ""});
    return std::make_shared<ScriptedTransport>(std::move(script));
  }

  HttpResponse post(const HttpRequest& req) const override {
    std::lock_guard lock(mu_);
    prompts_.push_back(prompt_of(req));
    if (script_.empty()) return {500, "", "empty script"};
    const auto i = std::min(calls_++, script_.size() - 1);
    return script_[i];
  }

  std::size_t calls() const {
    std::lock_guard lock(mu_);
    return calls_;
  }

  std::vector<std::string> prompts() const {
    std::lock_guard lock(mu_);
    return prompts_;
  }

 private:
  std::vector<HttpResponse> script_;
  mutable std::mutex mu_;
  mutable std::size_t calls_ = 0;
  mutable std::vector<std::string> prompts_;
};

// Article text and requested sentence count recovered from a rendered
// summary prompt (numbered, dash or dolly style).
struct SummaryRequest {
  std::string article;
  int n_sentences = 1;
};

inline SummaryRequest parse_summary_prompt(std::string_view prompt) {
  SummaryRequest r;
  if (prompt.rfind(kSummaryLead, 0) == 0) {
    const auto tail = prompt.rfind(kSummaryTail);
    if (tail == std::string_view::npos) throw ProtocolError("unrecognised summary prompt");
    r.article = std::string(prompt.substr(kSummaryLead.size(), tail - kSummaryLead.size()));
    r.n_sentences = std::atoi(std::string(prompt.substr(tail + kSummaryTail.size())).c_str());
  } else if (prompt.rfind(kDollyLead, 0) == 0) {
    const auto mid = prompt.find(kDollyMid);
    if (mid == std::string_view::npos) throw ProtocolError("unrecognised summary prompt");
    r.n_sentences = std::atoi(std::string(prompt.substr(kDollyLead.size())).c_str());
    auto body = text::trim(prompt.substr(mid + kDollyMid.size()));
    if (!body.empty() && body.back() == '.') body.remove_suffix(1);
    r.article = std::string(body);
  } else {
    throw ProtocolError("unrecognised summary prompt");
  }
  if (r.n_sentences < 1) r.n_sentences = 1;
  return r;
}

inline std::string sentence_of_paraphrase_prompt(std::string_view prompt) {
  const auto at = prompt.rfind(kParaphraseLead);
  if (at == std::string_view::npos) throw ProtocolError("unrecognised paraphrase prompt");
  return std::string(text::trim(prompt.substr(at + kParaphraseLead.size())));
}

// Lead-n baseline: the first n sentences of the article as a numbered list.
inline std::string extractive_summary(std::string_view prompt) {
  const auto req = parse_summary_prompt(prompt);
  const auto sentences = corpus::segment_sentences(req.article);
  std::string out;
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(req.n_sentences), sentences.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += "\n";
    out += std::to_string(i + 1) + ". " + sentences[i].text;
  }
  return out;
}

// Reverses word order, keeping the terminal punctuation run at the end and
// capitalising the new first word.
inline std::string reverse_words(std::string_view sentence) {
  auto s = text::trim(sentence);
  std::size_t cut = s.size();
  while (cut > 0 && (s[cut - 1] == '.' || s[cut - 1] == '!' || s[cut - 1] == '?' ||
                     s[cut - 1] == '"' || s[cut - 1] == '\''))
    --cut;
  const std::string terminal(s.substr(cut));
  std::istringstream words{std::string(s.substr(0, cut))};
  std::vector<std::string> parts;
  for (std::string w; words >> w;) parts.push_back(w);
  std::reverse(parts.begin(), parts.end());
  std::string out = text::join(parts, " ");
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out + terminal;
}

inline std::string reversal_paraphrase(std::string_view prompt) {
  return reverse_words(sentence_of_paraphrase_prompt(prompt));
}

inline std::string identity_paraphrase(std::string_view prompt) {
  return sentence_of_paraphrase_prompt(prompt);
}

// Judge stand-in: puts the share of summary tokens found in the article on
// score 5 and the rest on score 1.
inline std::string coverage_judgement(std::string_view prompt) {
  const auto a = prompt.find(kJudgeArticleLead);
  const auto m = prompt.rfind(kJudgeSummaryLead);
  if (a == std::string_view::npos || m == std::string_view::npos || m < a)
    throw ProtocolError("unrecognised judge prompt");
  const auto article_start = a + kJudgeArticleLead.size();
  const auto art = text::tokenize(prompt.substr(article_start, m - article_start));
  const auto sum = text::tokenize(prompt.substr(m + kJudgeSummaryLead.size()));
  const std::set<std::string> vocab(art.begin(), art.end());
  std::size_t hit = 0;
  for (const auto& t : sum) hit += vocab.count(t);
  const int p5 = sum.empty() ? 0 : static_cast<int>((100 * hit + sum.size() / 2) / sum.size());
  return std::to_string(p5) + ", 0, 0, 0, " + std::to_string(100 - p5);
}

inline std::shared_ptr<const Transport> make_transport(const Backend& b) {
  if (b.kind == "openai") {
    std::string url = b.base_url;
    if (const char* env = std::getenv(kBaseUrlEnv); env && *env) url = env;
    if (url.empty()) throw ConfigError("backend '" + b.name + "' has no base_url");
    return std::make_shared<HttpTransport>(url, b.timeout);
  }
  if (b.kind == "mock-extractive") return reply_with([](const std::string& p) { return extractive_summary(p); });
  if (b.kind == "mock-reversal") return reply_with([](const std::string& p) { return reversal_paraphrase(p); });
  if (b.kind == "mock-identity") return reply_with([](const std::string& p) { return identity_paraphrase(p); });
  if (b.kind == "mock-judge") return reply_with([](const std::string& p) { return coverage_judgement(p); });
  throw ConfigError("backend '" + b.name + "' has unknown kind '" + b.kind + "'");
}

inline Backend mock_backend(std::string kind) {
  Backend b;
  b.name = kind;
  b.kind = std::move(kind);
  b.base_url = "mock://local";
  b.model_id = b.kind;
  b.api_key_env.clear();
  b.max_retries = 0;
  return b;
}

inline ChatClient make_client(const Backend& b, Sleeper sleeper = real_sleep) {
  return ChatClient(b, make_transport(b), std::move(sleeper));
}

}  // namespace relpara::llm
