#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "relpara/corpus.hpp"
#include "relpara/error.hpp"
#include "relpara/random.hpp"
#include "relpara/text.hpp"

namespace relpara::llm {

inline constexpr std::size_t kRefusalWindow = 120;
inline constexpr std::array<std::string_view, 5> kRefusalMarkers = {
    "i cannot", "i can't", "i am not able", "i'm not able", "as an ai"};

// Empty completions count as refusals. Markers are matched case-insensitively
// in the first 120 characters; curly apostrophes are folded to ASCII first.
inline bool detect_refusal(std::string_view completion) {
  const auto trimmed = text::trim(completion);
  if (trimmed.empty()) return true;
  std::string head;
  for (std::size_t i = 0; i < trimmed.size() && head.size() < kRefusalWindow; ++i) {
    if (trimmed.compare(i, 3, "\xE2\x80\x99") == 0) {
      head.push_back('\'');
      i += 2;
      continue;
    }
    head.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(trimmed[i]))));
  }
  return std::any_of(kRefusalMarkers.begin(), kRefusalMarkers.end(),
                     [&](std::string_view m) { return head.find(m) != std::string::npos; });
}

struct ParsedSummary {
  std::string article_id;
  std::vector<corpus::Sentence> sentences;
  std::string raw;
  bool truncated = false;

  std::string joined() const { return corpus::join_sentences(sentences); }
};

namespace detail {

// Strips "12." / "12)" or "-" list prefixes; returns false for other lines.
inline bool strip_list_marker(std::string_view line, std::string& out) {
  line = text::trim(line);
  std::size_t i = 0;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')')) {
    out = std::string(text::trim(line.substr(i + 1)));
    return true;
  }
  if (!line.empty() && line[0] == '-') {
    out = std::string(text::trim(line.substr(1)));
    return true;
  }
  return false;
}

}  // namespace detail

// Numbered or dash-bulleted lines become the summary sentences; a completion
// with no list lines is segmented as prose. When more than n_required
// sentences come back, n_required are drawn uniformly (seeded) and kept in
// their original order.
inline ParsedSummary parse_summary(std::string_view completion, int n_required, std::uint64_t seed) {
  if (n_required < 1) throw Error("parse_summary: n_required must be >= 1");
  ParsedSummary ps;
  ps.raw = std::string(completion);

  std::vector<std::string> items;
  std::istringstream lines{std::string(completion)};
  std::string line, item;
  while (std::getline(lines, line)) {
    if (detail::strip_list_marker(line, item) && !item.empty())
      items.push_back(text::normalize_whitespace(item));
  }
  std::vector<corpus::Sentence> candidates =
      items.empty() ? corpus::segment_sentences(completion) : corpus::make_sentences(items);
  if (candidates.empty()) throw ParseError("completion contains no summary sentences");

  const auto n = static_cast<std::size_t>(n_required);
  if (candidates.size() > n) {
    auto keep = rng::sample_positions(candidates.size(), n, seed);
    std::sort(keep.begin(), keep.end());
    std::vector<std::string> chosen;
    for (auto k : keep) chosen.push_back(candidates[k].text);
    ps.sentences = corpus::make_sentences(chosen);
    ps.truncated = true;
  } else {
    ps.sentences = std::move(candidates);
  }
  return ps;
}

}  // namespace relpara::llm
