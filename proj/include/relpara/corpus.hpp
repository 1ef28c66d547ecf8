#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "relpara/error.hpp"
#include "relpara/text.hpp"

namespace relpara::corpus {

struct Sentence {
  std::size_t index = 0;
  std::string text;

  bool operator==(const Sentence&) const = default;
};

struct Article {
  std::string id;
  std::vector<Sentence> sentences;

  std::size_t size() const { return sentences.size(); }
  std::string joined() const;
};

struct GoldSummary {
  std::string article_id;
  std::vector<Sentence> sentences;

  std::string joined() const;
};

struct DatasetProfile {
  double avg_article_sentences = 0.0;
  double avg_summary_sentences = 0.0;
  int target_summary_len = 1;
};

struct Pair {
  Article article;
  GoldSummary summary;
};

struct Dataset {
  std::string name;
  std::vector<Pair> pairs;
  DatasetProfile profile;
  std::size_t dropped = 0;  // pairs removed because a side segmented to nothing
};

inline std::string join_sentences(const std::vector<Sentence>& sentences) {
  std::string out;
  for (const auto& s : sentences) {
    if (!out.empty()) out.push_back(' ');
    out += s.text;
  }
  return out;
}

inline std::string Article::joined() const { return join_sentences(sentences); }
inline std::string GoldSummary::joined() const { return join_sentences(sentences); }

inline std::vector<Sentence> make_sentences(const std::vector<std::string>& texts) {
  std::vector<Sentence> out;
  for (const auto& t : texts) {
    auto trimmed = text::trim(t);
    if (trimmed.empty()) continue;
    out.push_back({out.size(), std::string(trimmed)});
  }
  return out;
}

namespace detail {

inline constexpr std::array<std::string_view, 13> kAbbreviations = {
    "mr.", "mrs.", "ms.", "dr.", "prof.", "jr.", "sr.",
    "e.g.", "i.e.", "u.s.", "etc.", "vs.", "no."};

inline bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }
inline bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }
inline bool is_opener(char c) { return c == '"' || c == '\'' || c == '(' || c == '['; }

inline bool is_abbreviation(std::string_view norm, std::size_t period_pos) {
  std::size_t start = norm.rfind(' ', period_pos);
  start = (start == std::string_view::npos) ? 0 : start + 1;
  while (start < period_pos && is_opener(norm[start])) ++start;
  auto token = text::to_lower(norm.substr(start, period_pos - start + 1));
  return std::find(kAbbreviations.begin(), kAbbreviations.end(), token) != kAbbreviations.end();
}

}  // namespace detail

// Rule-based splitter. A sentence ends at a run of . ! ? (plus any closing
// quotes or brackets) that is followed by end-of-text, or by a space and an
// uppercase letter or digit. A lone period closing a known abbreviation does
// not end a sentence.
inline std::vector<Sentence> segment_sentences(std::string_view raw) {
  const std::string norm = text::normalize_whitespace(raw);
  std::vector<std::string> pieces;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < norm.size()) {
    if (!detail::is_terminator(norm[i])) {
      ++i;
      continue;
    }
    std::size_t end = i;
    while (end < norm.size() && detail::is_terminator(norm[end])) ++end;
    const bool single_period = (end - i == 1 && norm[i] == '.');
    while (end < norm.size() && detail::is_closer(norm[end])) ++end;

    bool boundary = false;
    if (end == norm.size()) {
      boundary = true;
    } else if (norm[end] == ' ') {
      std::size_t k = end + 1;
      while (k < norm.size() && detail::is_opener(norm[k])) ++k;
      if (k < norm.size()) {
        auto c = static_cast<unsigned char>(norm[k]);
        boundary = std::isupper(c) || std::isdigit(c);
      }
    }
    if (boundary && single_period && detail::is_abbreviation(norm, i)) boundary = false;

    if (boundary) {
      pieces.emplace_back(norm.substr(start, end - start));
      start = end + 1;
    }
    i = end;
  }
  if (start < norm.size()) pieces.emplace_back(norm.substr(start));
  return make_sentences(pieces);
}

inline int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

// Requested summary length for the four benchmark corpora, matching the
// prompts those experiments used rather than the rounded averages.
inline std::optional<int> default_target_for(std::string_view dataset_name) {
  const auto n = text::to_lower(dataset_name);
  if (n == "cnn" || n == "cnndm" || n == "cnn_dm" || n == "cnn/dm" || n == "cnn_dailymail")
    return 3;
  if (n == "xsum" || n == "reddit" || n == "news") return 1;
  return std::nullopt;
}

inline DatasetProfile dataset_profile(const std::vector<Pair>& pairs,
                                      std::optional<int> target_override = std::nullopt) {
  if (pairs.empty()) throw Error("dataset_profile: empty pair list");
  double art = 0.0, sum = 0.0;
  for (const auto& p : pairs) {
    art += static_cast<double>(p.article.size());
    sum += static_cast<double>(p.summary.sentences.size());
  }
  DatasetProfile prof;
  prof.avg_article_sentences = art / static_cast<double>(pairs.size());
  prof.avg_summary_sentences = sum / static_cast<double>(pairs.size());
  if (target_override) {
    if (*target_override < 1) throw ConfigError("target_summary_len override must be >= 1");
    prof.target_summary_len = *target_override;
  } else {
    prof.target_summary_len = std::max(1, round_half_up(prof.avg_summary_sentences));
  }
  return prof;
}

struct LoadOptions {
  std::string name;                       // defaults to the file stem
  std::optional<int> target_override;     // wins over the per-name default
  bool use_name_defaults = true;
};

namespace detail {

inline std::vector<Sentence> sentences_from(const nlohmann::json& obj, const char* array_key,
                                            const char* text_key, std::size_t line_no) {
  if (auto it = obj.find(array_key); it != obj.end()) {
    if (!it->is_array()) throw ParseError("line " + std::to_string(line_no) + ": \"" +
                                          array_key + "\" must be an array of strings");
    std::vector<std::string> texts;
    for (const auto& s : *it) {
      if (!s.is_string()) throw ParseError("line " + std::to_string(line_no) + ": \"" +
                                           array_key + "\" must be an array of strings");
      texts.push_back(s.get<std::string>());
    }
    return make_sentences(texts);
  }
  auto it = obj.find(text_key);
  if (it == obj.end() || !it->is_string())
    throw ParseError("line " + std::to_string(line_no) + ": missing string key \"" + text_key +
                     "\"");
  return segment_sentences(it->get<std::string>());
}

}  // namespace detail

// Parses one JSONL record. Records written by this library also carry
// pre-segmented "article_sentences"/"summary_sentences" arrays, which take
// precedence over re-segmenting the text fields.
inline Pair parse_pair(const nlohmann::json& obj, std::size_t line_no) {
  if (!obj.is_object()) throw ParseError("line " + std::to_string(line_no) + ": not a JSON object");
  auto id = obj.find("id");
  if (id == obj.end() || !id->is_string())
    throw ParseError("line " + std::to_string(line_no) + ": missing string key \"id\"");
  Pair p;
  p.article.id = id->get<std::string>();
  p.summary.article_id = p.article.id;
  p.article.sentences = detail::sentences_from(obj, "article_sentences", "article", line_no);
  p.summary.sentences = detail::sentences_from(obj, "summary_sentences", "summary", line_no);
  return p;
}

inline Dataset load_dataset(const std::filesystem::path& path, const LoadOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset " + path.string());
  Dataset ds;
  ds.name = opts.name.empty() ? path.stem().string() : opts.name;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    Pair p = parse_pair(obj, line_no);
    if (!seen.insert(p.article.id).second)
      throw ParseError("line " + std::to_string(line_no) + ": duplicate id \"" + p.article.id +
                       "\"");
    if (p.article.sentences.empty() || p.summary.sentences.empty()) {
      ++ds.dropped;
      continue;
    }
    ds.pairs.push_back(std::move(p));
  }
  if (ds.pairs.empty()) throw Error("dataset " + path.string() + " has no usable pairs");
  auto target = opts.target_override;
  if (!target && opts.use_name_defaults) target = default_target_for(ds.name);
  ds.profile = dataset_profile(ds.pairs, target);
  return ds;
}

// Keeps the first n pairs; the profile stays that of the full dataset.
inline Dataset take_first(Dataset ds, std::size_t n) {
  if (n > 0 && ds.pairs.size() > n) ds.pairs.resize(n);
  return ds;
}

inline std::vector<std::string> texts_of(const std::vector<Sentence>& sentences) {
  std::vector<std::string> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(s.text);
  return out;
}

inline nlohmann::json pair_to_json(const Article& article, const GoldSummary& summary) {
  nlohmann::json j;
  j["id"] = article.id;
  j["article"] = article.joined();
  j["summary"] = summary.joined();
  j["article_sentences"] = texts_of(article.sentences);
  j["summary_sentences"] = texts_of(summary.sentences);
  return j;
}

inline void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& p : ds.pairs) out << pair_to_json(p.article, p.summary).dump() << '\n';
}

inline nlohmann::json profile_to_json(const Dataset& ds) {
  return {{"dataset", ds.name},
          {"n_pairs", ds.pairs.size()},
          {"dropped", ds.dropped},
          {"avg_article_sentences", ds.profile.avg_article_sentences},
          {"avg_summary_sentences", ds.profile.avg_summary_sentences},
          {"target_summary_len", ds.profile.target_summary_len}};
}

}  // namespace relpara::corpus
