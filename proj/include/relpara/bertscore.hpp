#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "relpara/client.hpp"
#include "relpara/error.hpp"
#include "relpara/executor.hpp"

namespace relpara::metrics {

struct BertScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<std::string> error;  // set when the sidecar rejected this pair
};

struct BertScoreOptions {
  std::size_t batch_size = 32;
  std::size_t max_inflight = 4;
  std::chrono::milliseconds timeout{120000};
};

// Client for the scoring sidecar:
//   POST {endpoint}/v1/score  {"pairs":[{"candidate","reference"}...]}
//     -> {"scores":[{"p","r","f1"} | {"error"}...]}
//   GET  {endpoint}/healthz -> 200
class BertScoreClient {
 public:
  explicit BertScoreClient(const std::string& endpoint, BertScoreOptions opts = {})
      : transport_(std::make_shared<llm::HttpTransport>(endpoint, opts.timeout)), opts_(opts) {}
  BertScoreClient(std::shared_ptr<const llm::Transport> transport, BertScoreOptions opts = {})
      : transport_(std::move(transport)), opts_(opts) {}

  bool healthy() const { return transport_->get("/healthz").status == 200; }

  // (candidate, reference) pairs; results keep input order.
  std::vector<BertScore> score(const std::vector<std::pair<std::string, std::string>>& pairs) const {
    const std::size_t bs = std::max<std::size_t>(1, opts_.batch_size);
    const std::size_t n_batches = (pairs.size() + bs - 1) / bs;
    std::vector<BertScore> out(pairs.size());
    parallel_for(n_batches, opts_.max_inflight, [&](std::size_t b) {
      const std::size_t lo = b * bs;
      const std::size_t hi = std::min(pairs.size(), lo + bs);
      nlohmann::json body = {{"pairs", nlohmann::json::array()}};
      for (std::size_t i = lo; i < hi; ++i)
        body["pairs"].push_back({{"candidate", pairs[i].first}, {"reference", pairs[i].second}});
      const auto res = transport_->post({"/v1/score", body.dump(), {}});
      if (res.status == 0) throw TransportError("bertscore sidecar unreachable: " + res.error, 0);
      if (res.status != 200)
        throw TransportError("bertscore sidecar returned HTTP " + std::to_string(res.status), res.status);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(res.body);
      } catch (const nlohmann::json::parse_error& e) {
        throw ProtocolError(std::string("bertscore response is not JSON: ") + e.what());
      }
      const auto it = j.find("scores");
      if (it == j.end() || !it->is_array() || it->size() != hi - lo)
        throw ProtocolError("bertscore response has " +
                            std::to_string(it == j.end() || !it->is_array() ? 0 : it->size()) +
                            " scores for " + std::to_string(hi - lo) + " pairs");
      for (std::size_t i = lo; i < hi; ++i) {
        const auto& s = (*it)[i - lo];
        auto& r = out[i];
        if (s.contains("error")) {
          r.error = s["error"].is_string() ? s["error"].get<std::string>() : s["error"].dump();
          continue;
        }
        try {
          r.precision = s.at("p").get<double>();
          r.recall = s.at("r").get<double>();
          r.f1 = s.at("f1").get<double>();
        } catch (const nlohmann::json::exception& e) {
          throw ProtocolError(std::string("malformed bertscore entry: ") + e.what());
        }
      }
    });
    return out;
  }

 private:
  std::shared_ptr<const llm::Transport> transport_;
  BertScoreOptions opts_;
};

}  // namespace relpara::metrics
