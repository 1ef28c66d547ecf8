#pragma once

#include <array>
#include <string>
#include <string_view>

#include "relpara/corpus.hpp"
#include "relpara/error.hpp"
#include "relpara/text.hpp"

namespace relpara::llm {

enum class PromptKind { Summary, Paraphrase, Judge };

struct PromptTemplate {
  std::string template_id;
  std::string body;
  int n_sentences = 0;  // summary templates only
  PromptKind kind = PromptKind::Summary;
};

inline constexpr std::string_view kArticleSlot = "{Article}";
inline constexpr std::string_view kSentenceSlot = "{Sentence}";
inline constexpr std::string_view kSummarySlot = "{Summary}";

inline constexpr std::string_view kParaphraseBody =
    "You are a helpful assistant that is an expert in paraphrasing sentences. "
    "Paraphrase the sentence I will provide. Please respond with just the paraphrased "
    "version of the sentence. Here is the sentence: {Sentence}";

inline constexpr std::string_view kParaphraseLead = "Here is the sentence: ";

inline constexpr std::string_view kJudgeBody =
    "You will be given one summary written for an article. Your task is to rate the summary "
    "based on the following criteria:\n"
    "Output format: PERCENTAGE, PERCENTAGE, PERCENTAGE, PERCENTAGE, PERCENTAGE\n"
    "\n"
    "Evaluation Criteria:\n"
    "1. Read the news article carefully and identify the main topic and key points.\n"
    "2. Read the summary and compare it to the news article. Check if the summary covers the "
    "main topic and key points of the news article, and if it resents them in a clear and "
    "logical order.\n"
    "3. Rate the summary with 5 percentages, where each one represents how likely the summary "
    "is going to get a score from 1 to 5. For example, if you think the summary is 80% likely "
    "to get a score of 5, 10% likely to get a score of 4, 5% likely to get a score of 3, 3% "
    "likely to get a score of 2, and 1% likely to get a score of 1, you should rate the "
    "summary as 80, 10, 5, 3, 2.\n"
    "\n"
    "Here is the article: {Article}\n"
    "\n"
    "Here is the summary: {Summary}";

inline constexpr std::string_view kJudgeArticleLead = "Here is the article: ";
inline constexpr std::string_view kJudgeSummaryLead = "\n\nHere is the summary: ";

// Summary prompt styles. "numbered" is the common instruction-model prompt,
// "dash" the variant that asks for dash bullets but still shows a numbered
// example, "dolly" the bare one-line instruction.
inline constexpr std::string_view kSummaryLead = "For the following article: ";
inline constexpr std::string_view kSummaryTail = ". Return a summary comprising of ";
inline constexpr std::string_view kDollyLead = "Generate a ";
inline constexpr std::string_view kDollyMid = " summary for the given article. Article: ";

inline std::string ordinal_word(int k) {
  static constexpr std::array<std::string_view, 10> words = {
      "First", "Second", "Third", "Fourth", "Fifth",
      "Sixth", "Seventh", "Eighth", "Ninth", "Tenth"};
  if (k >= 1 && k <= 10) return std::string(words[static_cast<std::size_t>(k - 1)]);
  return "Sentence " + std::to_string(k);
}

inline std::string numbered_example(int n) {
  std::string out = "For example:";
  for (int k = 1; k <= n; ++k) out += "\n" + std::to_string(k) + ". " + ordinal_word(k) + " sentence";
  return out;
}

inline std::string sentence_count(int n) {
  return std::to_string(n) + (n == 1 ? " sentence" : " sentences");
}

inline PromptTemplate summary_template(std::string_view style, int n_sentences) {
  if (n_sentences < 1) throw ConfigError("summary template needs n_sentences >= 1");
  PromptTemplate t;
  t.kind = PromptKind::Summary;
  t.n_sentences = n_sentences;
  t.template_id = std::string(style) + "-" + std::to_string(n_sentences);
  const std::string head = std::string(kSummaryLead) + std::string(kArticleSlot) +
                           std::string(kSummaryTail) + sentence_count(n_sentences) + ".";
  if (style == "numbered") {
    t.body = head + " With each sentence in a numbered list format.\n" + numbered_example(n_sentences);
  } else if (style == "dash") {
    t.body = head + " Write each sentence in a dash bulleted format. \n" + numbered_example(n_sentences);
  } else if (style == "dolly") {
    t.body = std::string(kDollyLead) + std::to_string(n_sentences) + " sentence" +
             std::string(kDollyMid) + std::string(kArticleSlot) + ".";
  } else {
    throw ConfigError("unknown prompt style '" + std::string(style) +
                      "' (expected numbered, dash or dolly)");
  }
  return t;
}

inline PromptTemplate paraphrase_template() {
  return {"paraphrase", std::string(kParaphraseBody), 0, PromptKind::Paraphrase};
}

inline PromptTemplate judge_template() {
  return {"geval", std::string(kJudgeBody), 0, PromptKind::Judge};
}

// Throws if the body does not carry exactly the slots its kind needs.
inline void validate(const PromptTemplate& t) {
  const auto a = text::count_occurrences(t.body, kArticleSlot);
  const auto s = text::count_occurrences(t.body, kSentenceSlot);
  const auto m = text::count_occurrences(t.body, kSummarySlot);
  bool ok = false;
  switch (t.kind) {
    case PromptKind::Summary: ok = a == 1 && s == 0 && m == 0 && t.n_sentences >= 1; break;
    case PromptKind::Paraphrase: ok = a == 0 && s == 1 && m == 0; break;
    case PromptKind::Judge: ok = a == 1 && s == 0 && m == 1; break;
  }
  if (!ok) throw ConfigError("prompt template '" + t.template_id + "' has the wrong placeholders");
}

inline std::string render_paraphrase_prompt(const corpus::Sentence& sentence) {
  const auto body = text::trim(sentence.text);
  if (body.empty()) throw Error("render_paraphrase_prompt: empty sentence");
  return text::substitute(kParaphraseBody, kSentenceSlot, body);
}

inline std::string render_summary_prompt(const corpus::Article& article, const PromptTemplate& t) {
  validate(t);
  return text::substitute(t.body, kArticleSlot, article.joined());
}

// Both slots are filled in one left-to-right pass so summary text that
// happens to contain "{Article}" is left alone.
inline std::string render_judge_prompt(std::string_view article_text, std::string_view summary_text) {
  const auto a = kJudgeBody.find(kArticleSlot);
  const auto m = kJudgeBody.find(kSummarySlot);
  std::string out(kJudgeBody.substr(0, a));
  out += article_text;
  out += kJudgeBody.substr(a + kArticleSlot.size(), m - a - kArticleSlot.size());
  out += summary_text;
  out += kJudgeBody.substr(m + kSummarySlot.size());
  return out;
}

}  // namespace relpara::llm
