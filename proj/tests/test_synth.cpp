#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "pigram/pigram.hpp"

using namespace pigram;

namespace {

const DurationModel& durations() {
  static const DurationModel d = cholec_duration_model(0.5);
  return d;
}

}  // namespace

TEST(Episode, RowsAreStochasticAndGroundTruthCollapses) {
  const auto g = reference_grammar();
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto ep = make_episode(g, durations(), {0.7, 1.0, 4}, seed);
    ASSERT_EQ(ep.matrix.rows(), ep.gt_frames.size());
    ASSERT_EQ(ep.matrix.cols(), 6u);
    for (std::size_t t = 0; t < ep.matrix.rows(); ++t) {
      double sum = 0.0;
      for (double v : ep.matrix.row(t)) sum += v;
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
    EXPECT_EQ(oracle::collapse(ep.gt_frames), ep.class_sentence);
    auto stripped = strip_sil(g.decode(ep.source_sentence));
    EXPECT_EQ(class_tokens(ep.class_sentence, durations().classes), stripped);
  }
}

TEST(Episode, ZeroNoiseIsOneHot) {
  const auto ep = make_episode(reference_grammar(), durations(), {0.0, 1.0, 0}, 5);
  for (std::size_t t = 0; t < ep.matrix.rows(); ++t) EXPECT_EQ(ep.matrix(t, ep.gt_frames[t]), 1.0);
  EXPECT_EQ(ep.matrix.argmax_labels(), ep.gt_frames);
}

TEST(Episode, FullNoiseWithHighConcentrationIsNearUniform) {
  const NoiseModel noise{1.0, 1e4, 0};
  const double acc = baseline_accuracy(reference_grammar(), durations(), noise, 40);
  EXPECT_NEAR(acc, 1.0 / 6.0, 0.06);
}

TEST(Episode, SameSeedSameEpisode) {
  const auto g = reference_grammar();
  const auto a = make_episode(g, durations(), {0.5, 1.0, 9}, 42);
  const auto b = make_episode(g, durations(), {0.5, 1.0, 9}, 42);
  EXPECT_EQ(a.gt_frames, b.gt_frames);
  EXPECT_EQ(a.matrix.data(), b.matrix.data());
  const auto c = make_episode(g, durations(), {0.5, 1.0, 10}, 42);
  EXPECT_EQ(a.gt_frames.size() == c.gt_frames.size() && a.matrix.data() == c.matrix.data(), false);
}

TEST(Episode, RejectsBadModels) {
  const auto g = reference_grammar();
  EXPECT_THROW(make_episode(g, durations(), {1.5, 1.0, 0}, 0), Error);
  EXPECT_THROW(make_episode(g, durations(), {0.5, 0.0, 0}, 0), Error);
  EXPECT_THROW(make_episode(g, DurationModel{{"PI0", "PI1"}, {2.0, 2.0}}, {0.5, 1.0, 0}, 0), Error);
  EXPECT_THROW(make_episode(parse_rules("S -> SIL PI0 PI0 SIL"), durations(), {0.5, 1.0, 0}, 0), Error);
}

TEST(Calibration, HitsTargetBaseline) {
  const auto g = reference_grammar();
  const NoiseModel noise{0.0, 1.0, 2};
  const double eps = calibrate_epsilon(g, durations(), noise, 0.5, 30, 100, 1e-3);
  NoiseModel at = noise;
  at.epsilon = eps;
  EXPECT_LE(baseline_accuracy(g, durations(), at, 30, 100), 0.5);
  at.epsilon = eps - 2e-3;
  EXPECT_GT(baseline_accuracy(g, durations(), at, 30, 100), 0.5);
}

TEST(Benchmark, ZeroNoiseGivesZeroDelta) {
  const auto g = reference_grammar();
  BenchmarkOptions opt;
  opt.episodes = 10;
  const auto rows = run_benchmark(g, g, durations(), {0.0}, {0.0, 1.0, 0}, {}, opt);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_DOUBLE_EQ(rows[0].baseline_micro, 1.0);
  EXPECT_DOUBLE_EQ(rows[0].refined_micro, 1.0);
  EXPECT_DOUBLE_EQ(rows[0].delta, 0.0);
}

static Pcfg memorized_reference() {
  const auto truth = reference_grammar();
  std::vector<TokenSentence> seen;
  for (std::uint64_t i = 0; i < 200; ++i) seen.push_back(truth.decode(sample(truth, i)));
  AdiosParams p;
  p.max_iterations = 0;
  return induce(seen, p);
}

TEST(Benchmark, MemorizingGrammarHelpsUnderHeavyNoise) {
  BenchmarkOptions opt;
  opt.episodes = 30;
  opt.bootstrap_resamples = 200;
  const auto rows = run_benchmark(reference_grammar(), memorized_reference(), durations(), {0.85, 0.95},
                                  {0.0, 1.0, 1}, {}, opt);
  for (const auto& r : rows) {
    EXPECT_GT(r.refined_micro, r.baseline_micro) << "noise " << r.noise;
    EXPECT_LE(r.ci95[0], r.delta);
    EXPECT_GE(r.ci95[1], r.delta);
  }
}

TEST(Benchmark, ConstraintOnlyMemorizingGrammarNeverLosesToArgmax) {
  GepConfig constraint_only;
  constraint_only.prior_weight = 0.0;
  BenchmarkOptions opt;
  opt.episodes = 30;
  opt.bootstrap_resamples = 200;
  const auto rows = run_benchmark(reference_grammar(), memorized_reference(), durations(),
                                  {0.0, 0.3, 0.5, 0.6, 0.7, 0.85}, {0.0, 1.0, 1}, constraint_only, opt);
  for (const auto& r : rows) EXPECT_GE(r.refined_micro, r.baseline_micro) << "noise " << r.noise;
}

TEST(Benchmark, PriorCanOverrideACorrectOneFrameSegment) {
  // gt PI1 PI3 PI2 PI2: the argmax is right, but PI5 opens far more training
  // sentences and the one-frame PI1 segment cannot outweigh that
  const auto truth = reference_grammar();
  const auto memo = memorized_reference();
  const auto ep = make_episode(truth, durations(), {0.6, 1.0, 1}, 7);
  ASSERT_EQ(ep.gt_frames, (std::vector<std::uint32_t>{1, 3, 2, 2}));
  ASSERT_EQ(ep.matrix.argmax_labels(), ep.gt_frames);
  EXPECT_NE(refine(ep.matrix, memo).frame_labels, ep.gt_frames);
  GepConfig constraint_only;
  constraint_only.prior_weight = 0.0;
  EXPECT_EQ(refine(ep.matrix, memo, constraint_only).frame_labels, ep.gt_frames);
}

TEST(Benchmark, DeterministicAcrossThreadCounts) {
  const auto g = reference_grammar();
  BenchmarkOptions one;
  one.episodes = 12;
  one.bootstrap_resamples = 100;
  auto four = one;
  four.jobs = 4;
  const auto a = run_benchmark(g, g, durations(), {0.5, 0.8}, {0.0, 1.0, 3}, {}, one);
  const auto b = run_benchmark(g, g, durations(), {0.5, 0.8}, {0.0, 1.0, 3}, {}, four);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].baseline_micro, b[i].baseline_micro);
    EXPECT_EQ(a[i].refined_micro, b[i].refined_micro);
    EXPECT_EQ(a[i].ci95[0], b[i].ci95[0]);
    EXPECT_EQ(a[i].ci95[1], b[i].ci95[1]);
  }
}

TEST(Benchmark, JsonSchema) {
  BenchmarkRow row;
  row.noise = 0.5;
  row.n = 3;
  const auto j = to_json(std::vector<BenchmarkRow>{row});
  ASSERT_EQ(j.size(), 1u);
  for (const char* key : {"noise", "n", "baseline_micro", "refined_micro", "delta", "ci95", "mean_parse_ms"})
    EXPECT_TRUE(j[0].contains(key)) << key;
  EXPECT_EQ(j[0]["ci95"].size(), 2u);
  EXPECT_NE(format_benchmark({row}).find("0.500"), std::string::npos);
}
