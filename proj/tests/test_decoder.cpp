#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "pigram/pigram.hpp"

using namespace pigram;

namespace {

const std::vector<std::string> kAb{"a", "b"};

ProbMatrix two_frames() { return ProbMatrix::from_rows({{0.6, 0.4}, {0.6, 0.4}}, kAb); }

}  // namespace

TEST(Softmax, Values) {
  const std::vector<double> zero{0, 0}, big{1000, 0}, ramp{1, 2, 3};
  EXPECT_EQ(softmax(zero), (std::vector<double>{0.5, 0.5}));
  const auto b = softmax(big);
  EXPECT_NEAR(b[0], 1.0, 1e-15);
  EXPECT_GE(b[1], 0.0);
  EXPECT_TRUE(std::isfinite(b[0]) && std::isfinite(b[1]));
  const auto r = softmax(ramp);
  EXPECT_NEAR(r[0], 0.09003, 1e-5);
  EXPECT_NEAR(r[1], 0.24473, 1e-5);
  EXPECT_NEAR(r[2], 0.66524, 1e-5);
  EXPECT_NEAR(r[0] + r[1] + r[2], 1.0, 1e-12);
}

TEST(Softmax, ShiftInvariantAndRejectsNan) {
  const std::vector<double> a{0.3, -1.2, 4.0}, b{10.3, 8.8, 14.0};
  const auto pa = softmax(a), pb = softmax(b);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(pa[k], pb[k], 1e-12);
  const std::vector<double> bad{1.0, std::nan("")};
  EXPECT_THROW(softmax(bad), Error);
}

TEST(ProbMatrixTest, RejectsRowsThatDoNotSumToOne) {
  EXPECT_THROW(ProbMatrix::from_rows({{0.5, 0.3}}), Error);
  EXPECT_THROW(ProbMatrix::from_rows({{1.2, -0.2}}), Error);
  EXPECT_THROW(ProbMatrix::from_rows({{1.0}}), Error);
  EXPECT_NO_THROW(ProbMatrix::from_rows({{0.25, 0.75}}));
}

TEST(PrefixProbabilities, TwoFrameExample) {
  const auto m = two_frames();
  const std::vector<std::uint32_t> ab{0, 1}, a{0};
  const auto s = prefix_probabilities(m, ab);
  EXPECT_NEAR(s.f_row[2], 0.24, 1e-15);
  EXPECT_NEAR(prefix_probabilities(m, a).g, 0.6, 1e-15);
  EXPECT_NEAR(prefix_probabilities(m, a).f_row[2], 0.36, 1e-15);
}

TEST(PrefixProbabilities, OneHotMatrix) {
  const auto m = ProbMatrix::from_rows({{1, 0}, {1, 0}, {0, 1}}, kAb);
  const std::vector<std::uint32_t> ab{0, 1}, a{0}, ba{1, 0}, aba{0, 1, 0};
  EXPECT_NEAR(prefix_probabilities(m, ab).f_row[3], 1.0, 1e-9);
  for (const auto& l : {a, ba, aba}) EXPECT_LT(prefix_probabilities(m, l).f_row[3], 1e-9);
}

TEST(PrefixProbabilities, FirstTokenMassIsConserved) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    const auto m = oracle::random_matrix(rng, 1 + rng() % 7, 2 + rng() % 3);
    double total = 0.0;
    for (std::uint32_t k = 0; k < m.cols(); ++k) total += prefix_probabilities(m, std::vector<std::uint32_t>{k}).g;
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(PrefixProbabilities, RejectsAdjacentRepeats) {
  const std::vector<std::uint32_t> aa{0, 0};
  EXPECT_THROW(prefix_probabilities(two_frames(), aa), Error);
}

TEST(PrefixProbabilities, MatchesLabelingEnumeration) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 20; ++i) {
    const auto m = oracle::random_matrix(rng, 1 + rng() % 6, 2 + rng() % 2);
    const auto tables = oracle::enumerate_labelings(m);
    for (const auto& [l, row] : tables.f) {
      if (l.empty()) continue;
      const auto s = prefix_probabilities(m, l);
      for (std::size_t t = 0; t <= m.rows(); ++t) EXPECT_NEAR(s.f_row[t], row[t], 1e-12);
      EXPECT_NEAR(s.g, tables.g.at(l), 1e-12);
      // g(l) = f(l,T) + sum over k != last(l) of g(l k)
      double rest = s.f_row[m.rows()];
      for (std::uint32_t k = 0; k < m.cols(); ++k) {
        if (k == l.back()) continue;
        auto ext = l;
        ext.push_back(k);
        rest += prefix_probabilities(m, ext).g;
      }
      EXPECT_NEAR(s.g, rest, 1e-12);
    }
  }
}

TEST(AlignFrames, PrefersLaterBoundaryWhenItScoresHigher) {
  const auto m = ProbMatrix::from_rows({{0.9, 0.1}, {0.2, 0.8}, {0.6, 0.4}}, kAb);
  const std::vector<std::uint32_t> ab{0, 1};
  EXPECT_EQ(align_frames(ab, m), (std::vector<std::uint32_t>{0, 1, 1}));
}

TEST(AlignFrames, ForcedAndOneHotCases) {
  const auto m = ProbMatrix::from_rows({{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}}, kAb);
  const std::vector<std::uint32_t> aba{0, 1, 0}, abab{0, 1, 0, 1}, ab{0, 1};
  EXPECT_EQ(align_frames(aba, m), aba);
  EXPECT_THROW(align_frames(abab, m), Error);
  // uniform rows tie every boundary; the latest one wins
  EXPECT_EQ(align_frames(ab, m), (std::vector<std::uint32_t>{0, 0, 1}));
  const auto hot = ProbMatrix::from_rows({{1, 0}, {0, 1}, {0, 1}}, kAb);
  EXPECT_EQ(align_frames(ab, hot), (std::vector<std::uint32_t>{0, 1, 1}));
}

TEST(Gep, PicksTheOnlyGrammaticalSentence) {
  const auto g = parse_rules("S -> a b");
  const auto m = two_frames();
  EXPECT_EQ(oracle::collapse(m.argmax_labels()), (std::vector<std::uint32_t>{0}));
  const auto r = gep_parse(m, g);
  EXPECT_FALSE(r.fallback_used);
  EXPECT_EQ(r.sentence, (std::vector<std::uint32_t>{0, 1}));
  EXPECT_EQ(r.frame_labels, (std::vector<std::uint32_t>{0, 1}));
  EXPECT_NEAR(r.data_prob, 0.24, 1e-12);
  EXPECT_NEAR(r.grammar_prob, 1.0, 1e-12);
}

TEST(Gep, SingleFrameAgainstArgmax) {
  const auto g = parse_rules("S -> a");
  const auto r = gep_parse(ProbMatrix::from_rows({{0.3, 0.7}}, kAb), g);
  EXPECT_EQ(r.sentence, (std::vector<std::uint32_t>{0}));
  EXPECT_EQ(r.frame_labels, (std::vector<std::uint32_t>{0}));
  EXPECT_NEAR(r.data_prob, 0.3, 1e-12);
}

TEST(Gep, OneHotGrammaticalLabelingIsReturned) {
  const auto g = parse_rules("S -> SIL X SIL\nX -> a b [0.5] | b a [0.5]");
  const auto m = ProbMatrix::from_rows({{0, 1}, {0, 1}, {1, 0}}, kAb);
  const auto r = refine(m, g);
  EXPECT_EQ(r.frame_labels, (std::vector<std::uint32_t>{1, 1, 0}));
  EXPECT_NEAR(r.data_prob, 1.0, 1e-9);
  EXPECT_NEAR(r.grammar_prob, 0.5, 1e-12);
}

TEST(Refine, RestoresRunInterruptedByOneFrame) {
  // argmax reads a a a b a a b b b b; the grammar only allows "a b"
  const auto g = parse_rules("S -> SIL a b SIL");
  std::vector<std::vector<double>> rows;
  for (int t = 0; t < 6; ++t) rows.push_back(t == 3 ? std::vector<double>{0.4, 0.6} : std::vector<double>{0.8, 0.2});
  for (int t = 6; t < 10; ++t) rows.push_back({0.2, 0.8});
  const auto m = ProbMatrix::from_rows(rows, kAb);
  ASSERT_EQ(oracle::collapse(m.argmax_labels()), (std::vector<std::uint32_t>{0, 1, 0, 1}));

  // brute force over all 2^10 labelings that collapse to "a b"
  std::vector<std::uint32_t> best_labels;
  double best = -1.0;
  for (unsigned bits = 0; bits < 1024; ++bits) {
    std::vector<std::uint32_t> labels(10);
    double p = 1.0;
    for (std::size_t t = 0; t < 10; ++t) p *= m(t, labels[t] = (bits >> t) & 1u);
    if (oracle::collapse(labels) == std::vector<std::uint32_t>{0, 1} && p > best) {
      best = p;
      best_labels = labels;
    }
  }
  const auto r = refine(m, g);
  EXPECT_FALSE(r.fallback_used);
  EXPECT_EQ(r.frame_labels, best_labels);
  EXPECT_EQ(r.frame_labels, (std::vector<std::uint32_t>{0, 0, 0, 0, 0, 0, 1, 1, 1, 1}));
}

TEST(Refine, GrammaticalArgmaxIsKeptWhenItIsTheGlobalOptimum) {
  const std::vector<std::string> abc{"a", "b", "c"};
  const auto g = parse_rules("S -> SIL X SIL\nX -> a b c [0.5] | b a [0.5]");
  const auto m = ProbMatrix::from_rows({{0.7, 0.2, 0.1},
                                        {0.6, 0.3, 0.1},
                                        {0.2, 0.7, 0.1},
                                        {0.1, 0.8, 0.1},
                                        {0.1, 0.2, 0.7},
                                        {0.2, 0.1, 0.7}},
                                       abc);
  const auto argmax = m.argmax_labels();
  const auto best = oracle::best_sentence(g, m, oracle::enumerate_labelings(m), 1.0);
  ASSERT_TRUE(best.found);
  ASSERT_EQ(best.sentence, oracle::collapse(argmax));
  const auto r = refine(m, g);
  EXPECT_EQ(r.frame_labels, argmax);
}

TEST(Refine, FallsBackToArgmaxWhenNothingFits) {
  const auto g = parse_rules("S -> a b");
  const auto m = ProbMatrix::from_rows({{0.3, 0.7}}, kAb);
  const auto r = refine(m, g);
  EXPECT_TRUE(r.fallback_used);
  EXPECT_EQ(r.frame_labels, (std::vector<std::uint32_t>{1}));
  GepConfig strict;
  strict.fallback_on_failure = false;
  EXPECT_THROW(refine(m, g, strict), NoParseError);
}

TEST(Gep, ExpansionBudgetMarksResultPruned) {
  const auto g = parse_rules("S -> SIL X SIL\nX -> X a [0.3] | X b [0.3] | a [0.2] | b [0.2]");
  std::mt19937_64 rng(1);
  const auto m = oracle::random_matrix(rng, 40, 2).with_class_names(kAb);
  GepConfig cfg;
  cfg.max_expansions = 3;
  const auto r = gep_parse(m, g, cfg);
  EXPECT_TRUE(r.pruned);
  EXPECT_LE(r.expanded, 3u);
  cfg.max_expansions = 0;
  EXPECT_THROW(gep_parse(m, g, cfg), Error);
}

TEST(Gep, MatchesBruteForceOnRandomInstances) {
  std::mt19937_64 rng(99);
  int checked = 0;
  for (int i = 0; i < 40; ++i) {
    const std::size_t K = 2 + rng() % 2, T = 1 + rng() % 6;
    std::vector<std::string> names;
    for (std::size_t k = 0; k < K; ++k) names.push_back(std::string(1, static_cast<char>('a' + k)));
    auto g = oracle::random_grammar(rng, names, 5);
    if (i % 2) g = oracle::with_sil(g);
    const auto m = oracle::random_matrix(rng, T, K).with_class_names(names);
    const double w = (i % 3 == 0) ? 0.0 : 1.0;
    GepConfig cfg;
    cfg.prior_weight = w;
    const auto best = oracle::best_sentence(g, m, oracle::enumerate_labelings(m), w);
    const auto r = gep_parse(m, g, cfg);
    EXPECT_FALSE(r.pruned);
    if (!best.found) {
      EXPECT_TRUE(r.fallback_used);
      continue;
    }
    ++checked;
    EXPECT_EQ(r.sentence, best.sentence) << serialize(g);
    EXPECT_EQ(oracle::collapse(r.frame_labels), r.sentence);
    EXPECT_NEAR(r.combined_score, best.score, 1e-9 * std::max(1.0, std::abs(best.score)));
  }
  EXPECT_GT(checked, 20);
}

TEST(Gep, BatchOrderAndThreadCountDoNotChangeResults) {
  const auto g = reference_grammar();
  const auto dur = cholec_duration_model(0.5);
  std::vector<ProbMatrix> ms;
  for (std::uint64_t s = 0; s < 6; ++s) ms.push_back(make_episode(g, dur, {0.8, 1.0, 3}, s).matrix);
  const auto one = refine_batch(ms, g, {}, 1);
  const auto four = refine_batch(ms, g, {}, 4);
  ASSERT_EQ(one.size(), ms.size());
  for (std::size_t i = 0; i < ms.size(); ++i) {
    ASSERT_TRUE(one[i].result && four[i].result);
    EXPECT_EQ(one[i].result->frame_labels, four[i].result->frame_labels);
    EXPECT_EQ(one[i].result->frame_labels, refine(ms[i], g).frame_labels);
  }
}
