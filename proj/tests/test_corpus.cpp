#include <gtest/gtest.h>

#include <fstream>

#include "rateval/corpus.hpp"
#include "test_util.hpp"

using namespace rateval;

namespace {

Corpus small_corpus() {
  return Corpus({0, 6}, {{"e1", "p", "text one"}, {"e2", "p", "text two"}, {"e3", "p", "text three"}},
                {{"R1", RaterKind::human, "R1"}, {"L1", RaterKind::llm, "Model"}},
                {{"e1", "R1", 3, "ok"}, {"e2", "R1", 5, std::nullopt}, {"e1", "L1", 4, "fine"}, {"e3", "L1", 2, {}}});
}

}  // namespace

TEST(ScoreScale, RejectsEmptyRange) {
  EXPECT_THROW(ScoreScale(3, 3), ConfigError);
  EXPECT_THROW(ScoreScale(4, 1), ConfigError);
  ScoreScale s(0, 6);
  EXPECT_EQ(s.k(), 7);
  EXPECT_TRUE(s.contains(0));
  EXPECT_FALSE(s.contains(7));
  EXPECT_EQ(s.index(4), 4);
}

TEST(Corpus, ValidatesReferencesAndRanges) {
  std::vector<Essay> essays{{"e1", "p", "t"}};
  std::vector<RaterProfile> raters{{"R1", RaterKind::human, ""}};
  EXPECT_THROW(Corpus({0, 6}, essays, raters, {{"e9", "R1", 1, {}}}), IntegrityError);
  EXPECT_THROW(Corpus({0, 6}, essays, raters, {{"e1", "R9", 1, {}}}), IntegrityError);
  EXPECT_THROW(Corpus({0, 6}, essays, raters, {{"e1", "R1", 7, {}}}), IntegrityError);
  EXPECT_THROW(Corpus({0, 6}, essays, raters, {{"e1", "R1", 1, {}}, {"e1", "R1", 2, {}}}), IntegrityError);
  EXPECT_THROW(Corpus({0, 6}, {{"e1", "p", "t"}, {"e1", "p", "u"}}, raters, {}), IntegrityError);
  EXPECT_THROW(Corpus({0, 6}, {{"e1", "p", ""}}, raters, {}), IntegrityError);
  EXPECT_NO_THROW(Corpus({0, 6}, essays, raters, {{"e1", "R1", 6, {}}}));
}

TEST(Corpus, PairedScoresUseSharedEssaysInIdOrder) {
  const auto c = small_corpus();
  const auto pairs = paired_scores(c, "L1", "R1");
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0], (ScorePair{4, 3}));
  EXPECT_THROW(paired_scores(c, "L1", "nobody"), ConfigError);
}

TEST(Corpus, ScoreSummaryUsesSampleDeviation) {
  const std::vector<int> scores{2, 4, 4, 4, 5, 5, 7, 9};
  const auto s = summarize_scores(scores);
  EXPECT_DOUBLE_EQ(s.mean, 5.0);
  // Sum of squared deviations is 32; sample divisor 7.
  EXPECT_NEAR(*s.std_dev, std::sqrt(32.0 / 7.0), 1e-12);
  const std::vector<int> one{3};
  EXPECT_FALSE(summarize_scores(one).std_dev.has_value());
  EXPECT_THROW(summarize_scores(std::span<const int>{}), AnalysisError);
}

TEST(Corpus, RoundTripsThroughFiles) {
  test_util::TempDir dir;
  const auto c = small_corpus();
  save_corpus(c, CorpusPaths::in_directory(dir.path()));
  const auto back = load_corpus(dir.path(), {0, 6});
  EXPECT_TRUE(back == c);
}

TEST(Corpus, ParseErrorsCarryLineNumbers) {
  test_util::TempDir dir;
  save_corpus(small_corpus(), CorpusPaths::in_directory(dir.path()));
  {
    std::ofstream out(dir.path() / "ratings.jsonl", std::ios::app);
    out << "\n{\"essay_id\": \"e2\", \"rater_id\": \"L1\"}\n";
  }
  try {
    load_corpus(dir.path(), {0, 6});
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 6u);
  }
  {
    std::ofstream out(dir.path() / "ratings.jsonl");
    out << "{not json\n";
  }
  EXPECT_THROW(load_corpus(dir.path(), {0, 6}), ParseError);
}

TEST(Corpus, ErrorCategoriesMapToExitCodes) {
  EXPECT_EQ(exit_code_for(ConfigError("x").category()), exit_config);
  EXPECT_EQ(exit_code_for(ParseError("f", 1, "x").category()), exit_input);
  EXPECT_EQ(exit_code_for(IntegrityError("x").category()), exit_input);
  EXPECT_EQ(exit_code_for(TransportError("x").category()), exit_provider);
  EXPECT_EQ(exit_code_for(UndefinedMetric("x").category()), exit_analysis);
}
