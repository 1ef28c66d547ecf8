#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "oracles.hpp"
#include "relpara/mock.hpp"
#include "relpara/perturb.hpp"

using namespace relpara;
using namespace relpara::perturb;

namespace {

const relevance::MapperMode kTfidf{relevance::MapperKind::TfidfCosine, 1};

corpus::Dataset fixture() {
  return corpus::load_dataset(std::string(RELPARA_TEST_DATA) + "/fixture20.jsonl", {});
}

llm::ChatClient mock(const std::string& kind) { return llm::make_client(llm::mock_backend(kind)); }

// I_x for one pair computed by full scan with the dense oracle.
std::set<std::size_t> oracle_index_set(const corpus::Pair& p) {
  const auto art = corpus::texts_of(p.article.sentences);
  std::set<std::size_t> out;
  for (const auto& s : p.summary.sentences) out.insert(oracle::argmax_cosine(art, s.text));
  return out;
}

std::vector<std::string> ids_of(const corpus::Dataset& ds) {
  std::vector<std::string> out;
  for (const auto& p : ds.pairs) out.push_back(p.article.id);
  return out;
}

std::vector<std::string> ids_of(const std::vector<PerturbedPair>& ps) {
  std::vector<std::string> out;
  for (const auto& p : ps) out.push_back(p.article.article_id);
  return out;
}

std::string serialise(const PerturbationResult& r) {
  std::string out;
  for (const auto& p : r.perturbed) out += to_json(p).dump() + "\n";
  return out + to_json(r.exclusions).dump();
}

// Refuses every sentence of one article and reverses all others.
std::shared_ptr<const llm::Transport> refusing_for(const corpus::Pair& target) {
  std::set<std::string> refuse;
  for (const auto& s : target.article.sentences) refuse.insert(s.text);
  return llm::reply_with([refuse](const std::string& prompt) {
    const auto s = llm::sentence_of_paraphrase_prompt(prompt);
    return refuse.count(s) ? std::string("I cannot paraphrase this sentence.") : llm::reverse_words(s);
  });
}

}  // namespace

TEST(ApplyReplacements, EmptyMapIsIdentity) {
  const corpus::Article a{"x", corpus::make_sentences({"One.", "Two.", "Three."})};
  const auto p = apply_replacements(a, {});
  EXPECT_EQ(p.sentences, a.sentences);
  EXPECT_TRUE(p.substitutions.empty());
}

TEST(ApplyReplacements, OnlyTargetChanges) {
  const corpus::Article a{"x", corpus::make_sentences({"One.", "Two.", "Three."})};
  const auto p = apply_replacements(a, {{1, "New text."}});
  EXPECT_EQ(corpus::texts_of(p.sentences), (std::vector<std::string>{"One.", "New text.", "Three."}));
  EXPECT_EQ(p.substitutions, (std::vector<Substitution>{{1, "Two.", "New text."}}));
}

TEST(ApplyReplacements, OutOfRange) {
  const corpus::Article a{"x", corpus::make_sentences({"One.", "Two.", "Three."})};
  EXPECT_THROW(apply_replacements(a, {{5, "x"}}), Error);
}

TEST(PlanMode, ParseRoundTrip) {
  for (auto m : {PlanMode::Relevant, PlanMode::NonrelevantRandom, PlanMode::Identity, PlanMode::NoneRepeat})
    EXPECT_EQ(parse_plan_mode(to_string(m)), m);
  EXPECT_THROW(parse_plan_mode("adversarial"), ConfigError);
}

TEST(Build, IdentityModeIsByteIdentical) {
  const auto ds = fixture();
  auto t = llm::ScriptedTransport::replies({"should not be called"});
  llm::ChatClient c(llm::mock_backend("mock-identity"), t);
  const auto r = build_perturbed_corpus(ds, {PlanMode::Identity, 1, 0}, kTfidf, c, {});
  ASSERT_EQ(r.perturbed.size(), ds.pairs.size());
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
    EXPECT_EQ(r.perturbed[i].article.as_article().joined(), ds.pairs[i].article.joined());
    for (const auto& s : r.perturbed[i].article.substitutions) EXPECT_EQ(s.original, s.paraphrased);
  }
  EXPECT_EQ(r.exclusions.refusal_rate, 0.0);
  EXPECT_EQ(t->calls(), 0u);
}

TEST(Build, NoneRepeatMakesNoCalls) {
  const auto ds = fixture();
  auto t = llm::ScriptedTransport::replies({"x"});
  llm::ChatClient c(llm::mock_backend("mock-reversal"), t);
  const auto r = build_perturbed_corpus(ds, {PlanMode::NoneRepeat, 1, 0}, kTfidf, c, {});
  EXPECT_EQ(t->calls(), 0u);
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
    EXPECT_TRUE(r.perturbed[i].article.substitutions.empty());
    EXPECT_EQ(r.perturbed[i].article.sentences, ds.pairs[i].article.sentences);
  }
}

TEST(Build, RelevantSubstitutionsMatchOracle) {
  const auto ds = fixture();
  const auto r = build_perturbed_corpus(ds, {PlanMode::Relevant, 1, 0}, kTfidf, mock("mock-reversal"), {});
  ASSERT_EQ(r.perturbed.size(), ds.pairs.size());
  std::size_t total = 0;
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
    const auto expected = oracle_index_set(ds.pairs[i]);
    std::set<std::size_t> got;
    for (const auto& s : r.perturbed[i].article.substitutions) {
      got.insert(s.index);
      EXPECT_EQ(s.paraphrased, llm::reverse_words(s.original));
    }
    EXPECT_EQ(got, expected) << ds.pairs[i].article.id;
    EXPECT_EQ(std::vector<std::size_t>(expected.begin(), expected.end()), r.relevance[i].index_set);
    EXPECT_LE(got.size(), ds.pairs[i].summary.sentences.size());
    // Untouched sentences stay byte-identical.
    for (std::size_t j = 0; j < ds.pairs[i].article.size(); ++j)
      if (!got.count(j)) EXPECT_EQ(r.perturbed[i].article.sentences[j], ds.pairs[i].article.sentences[j]);
    total += got.size();
  }
  EXPECT_EQ(r.exclusions.attempted, total);
  EXPECT_EQ(r.exclusions.refused, 0u);
}

TEST(Build, TopThreePerSummarySentenceIsDeduplicated) {
  const auto ds = fixture();
  const auto r = build_perturbed_corpus(ds, {PlanMode::Relevant, 3, 0}, kTfidf, mock("mock-reversal"), {});
  for (std::size_t i = 0; i < r.perturbed.size(); ++i) {
    const auto& rm = r.relevance[i];
    std::set<std::size_t> uni;
    for (const auto& e : rm.entries) uni.insert(e.article_indices.begin(), e.article_indices.end());
    EXPECT_EQ(r.perturbed[i].article.substitutions.size(), uni.size());
    EXPECT_GE(uni.size(), 3u);
  }
}

TEST(Build, RefusalExcludesArticleFromBothCorpora) {
  const auto ds = fixture();
  const auto& a02 = ds.pairs[1];
  ASSERT_EQ(a02.article.id, "a02");
  llm::ChatClient c(llm::mock_backend("mock-scripted"), refusing_for(a02));
  const auto r = build_perturbed_corpus(ds, {PlanMode::Relevant, 1, 0}, kTfidf, c, {});

  EXPECT_EQ(r.exclusions.excluded_ids, (std::vector<std::string>{"a02"}));
  EXPECT_EQ(r.exclusions.reasons.at("a02"), "refusal");
  EXPECT_EQ(ids_of(r.original), ids_of(r.perturbed));
  EXPECT_EQ(r.original.pairs.size(), 19u);
  for (const auto& id : ids_of(r.original)) EXPECT_NE(id, "a02");

  std::size_t attempted = 0;
  for (const auto& p : ds.pairs) attempted += oracle_index_set(p).size();
  const std::size_t refused = oracle_index_set(a02).size();
  EXPECT_EQ(r.exclusions.attempted, attempted);
  EXPECT_EQ(r.exclusions.refused, refused);
  EXPECT_EQ(r.exclusions.refusal_rate, static_cast<double>(refused) / static_cast<double>(attempted));
}

TEST(Build, TransportFailureExcludesWithReason) {
  const auto ds = fixture();
  const auto target = ds.pairs[4].article;
  std::set<std::string> bad;
  for (const auto& s : target.sentences) bad.insert(s.text);
  auto t = std::make_shared<llm::FunctionTransport>([bad](const std::string& prompt) {
    const auto s = llm::sentence_of_paraphrase_prompt(prompt);
    if (bad.count(s)) return llm::HttpResponse{503, "", ""};
    return llm::HttpResponse{200, llm::chat_response_body(llm::reverse_words(s)), ""};
  });
  llm::ChatClient c(llm::mock_backend("mock-scripted"), t, [](auto) {});
  const auto r = build_perturbed_corpus(ds, {PlanMode::Relevant, 1, 0}, kTfidf, c, {});
  EXPECT_EQ(r.exclusions.excluded_ids, (std::vector<std::string>{target.id}));
  EXPECT_EQ(r.exclusions.reasons.at(target.id).rfind("transport", 0), 0u);
  EXPECT_EQ(ids_of(r.original), ids_of(r.perturbed));
}

TEST(Build, AbortsPastHalf) {
  const auto ds = fixture();
  llm::ChatClient refuse_all(llm::mock_backend("mock-scripted"), llm::ScriptedTransport::replies({"I cannot."}));
  EXPECT_THROW(build_perturbed_corpus(ds, {PlanMode::Relevant, 1, 0}, kTfidf, refuse_all, {}), AbortError);

  // Exactly half is still allowed.
  corpus::Dataset two = ds;
  two.pairs.resize(2);
  llm::ChatClient c(llm::mock_backend("mock-scripted"), refusing_for(two.pairs[0]));
  const auto r = build_perturbed_corpus(two, {PlanMode::Relevant, 1, 0}, kTfidf, c, {});
  EXPECT_EQ(r.perturbed.size(), 1u);
}

TEST(Build, CheckAbortBoundary) {
  EXPECT_NO_THROW(check_abort(10, 20, 0.5));
  EXPECT_THROW(check_abort(11, 20, 0.5), AbortError);
  EXPECT_NO_THROW(check_abort(0, 0, 0.5));
}

TEST(Build, NonrelevantCountsMatchIndexSets) {
  const auto ds = fixture();
  const auto r = build_perturbed_corpus(ds, {PlanMode::NonrelevantRandom, 1, 0}, kTfidf, mock("mock-reversal"), {});
  ASSERT_EQ(r.perturbed.size(), ds.pairs.size());
  for (std::size_t i = 0; i < r.perturbed.size(); ++i) {
    const auto& subs = r.perturbed[i].article.substitutions;
    EXPECT_EQ(subs.size(), r.relevance[i].index_set.size());
    for (const auto& s : subs)
      EXPECT_FALSE(std::binary_search(r.relevance[i].index_set.begin(), r.relevance[i].index_set.end(), s.index));
  }
}

TEST(Build, NonrelevantExcludesWhenComplementTooSmall) {
  corpus::Dataset ds;
  ds.name = "tiny";
  for (int k = 0; k < 3; ++k) {
    const std::string id = "t" + std::to_string(k);
    ds.pairs.push_back({{id, corpus::make_sentences({"Cats purr.", "Dogs bark."})},
                        {id, corpus::make_sentences(k == 0 ? std::vector<std::string>{"Cats purr.", "Dogs bark."}
                                                          : std::vector<std::string>{"Cats purr."})}});
  }
  const auto r = build_perturbed_corpus(ds, {PlanMode::NonrelevantRandom, 1, 0}, kTfidf, mock("mock-reversal"), {});
  EXPECT_EQ(r.exclusions.excluded_ids, (std::vector<std::string>{"t0"}));
  EXPECT_EQ(r.exclusions.reasons.at("t0").rfind("insufficient-nonrelevant", 0), 0u);
}

TEST(Build, RerunsAreByteIdentical) {
  const auto ds = fixture();
  for (auto mode : {PlanMode::Relevant, PlanMode::NonrelevantRandom}) {
    const auto a = build_perturbed_corpus(ds, {mode, 1, 5}, kTfidf, mock("mock-reversal"), {}, {1});
    const auto b = build_perturbed_corpus(ds, {mode, 1, 5}, kTfidf, mock("mock-reversal"), {}, {8});
    EXPECT_EQ(serialise(a), serialise(b));
  }
}

TEST(Build, SeedChangesNonrelevantSelection) {
  const auto ds = fixture();
  const auto a = build_perturbed_corpus(ds, {PlanMode::NonrelevantRandom, 1, 1}, kTfidf, mock("mock-reversal"), {});
  const auto b = build_perturbed_corpus(ds, {PlanMode::NonrelevantRandom, 1, 2}, kTfidf, mock("mock-reversal"), {});
  EXPECT_NE(serialise(a), serialise(b));
}

TEST(Build, RejectsBadInput) {
  EXPECT_THROW(build_perturbed_corpus({}, {}, kTfidf, mock("mock-reversal"), {}), Error);
  EXPECT_THROW(build_perturbed_corpus(fixture(), {PlanMode::Relevant, 0, 0}, kTfidf, mock("mock-reversal"), {}),
               ConfigError);
}

TEST(Fidelity, IdenticalPairsScoreOne) {
  EXPECT_DOUBLE_EQ(paraphrase_fidelity({{"a b c", "a b c"}, {"x", "x"}}, rouge1_fidelity_scorer()), 1.0);
}

TEST(Fidelity, RougeOneExample) {
  const TextPairs pairs = {{"the cat sat", "the cat ran"}, {"a b", "a b"}};
  const double expected = (oracle::rouge_n(oracle::words("the cat ran"), oracle::words("the cat sat"), 1).f +
                           oracle::rouge_n(oracle::words("a b"), oracle::words("a b"), 1).f) / 2;
  EXPECT_NEAR(paraphrase_fidelity(pairs, rouge1_fidelity_scorer()), expected, 1e-12);
  EXPECT_NEAR(paraphrase_fidelity(pairs, rouge1_fidelity_scorer()), 0.833333, 1e-6);
}

TEST(Fidelity, EmptyAndShortScorer) {
  EXPECT_THROW(paraphrase_fidelity({}, rouge1_fidelity_scorer()), Error);
  EXPECT_THROW(paraphrase_fidelity({{"a", "a"}}, [](const TextPairs&) { return std::vector<double>{}; }),
               ProtocolError);
}

TEST(Persistence, RoundTrip) {
  const auto ds = fixture();
  const auto r = build_perturbed_corpus(ds, {PlanMode::Relevant, 1, 0}, kTfidf, mock("mock-reversal"), {});
  const auto path = std::filesystem::temp_directory_path() / "relpara_perturbed_test.jsonl";
  write_perturbed(r.perturbed, path);
  const auto back = read_perturbed(path);
  ASSERT_EQ(back.size(), r.perturbed.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].article.sentences, r.perturbed[i].article.sentences);
    EXPECT_EQ(back[i].article.substitutions, r.perturbed[i].article.substitutions);
    EXPECT_EQ(back[i].summary.sentences, r.perturbed[i].summary.sentences);
  }
  const auto log = exclusion_log_from_json(to_json(r.exclusions));
  EXPECT_EQ(log.attempted, r.exclusions.attempted);
  EXPECT_EQ(log.refusal_rate, r.exclusions.refusal_rate);
  std::filesystem::remove(path);
}
