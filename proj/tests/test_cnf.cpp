#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "pigram/pigram.hpp"

using namespace pigram;

TEST(Cnf, BinarizesLongRule) {
  const auto g = parse_rules("S -> a b c");
  const auto c = to_cnf(g);
  EXPECT_TRUE(is_cnf(c));
  EXPECT_TRUE(validate(c).empty());
  EXPECT_EQ(c.rules().size(), 5u);
  EXPECT_NEAR(inside(c, oracle::words(c, "a b c")), 1.0, 1e-12);
}

TEST(Cnf, AlreadyCnfIsIsomorphic) {
  const auto g = parse_rules("S -> S S [0.4] | a [0.6]");
  ASSERT_TRUE(is_cnf(g));
  const auto c = to_cnf(g);
  ASSERT_EQ(c.rules().size(), g.rules().size());
  for (std::size_t r = 0; r < g.rules().size(); ++r) EXPECT_DOUBLE_EQ(c.rules()[r].prob, g.rules()[r].prob);
}

TEST(Cnf, RejectsEpsilonRules) {
  Pcfg g("g", {"a"}, {{"S", NodeType::or_node}}, {{0, {SymbolRef::t(0)}, 0.5}, {0, {}, 0.5}}, 0);
  EXPECT_THROW(to_cnf(g), Error);
}

TEST(Cnf, FoldsUnitCycles) {
  // S -> A (0.5) | a (0.5); A -> S (0.5) | b (0.5): unit cycle S <-> A
  const auto g = parse_rules("S -> A [0.5] | a [0.5]\nA -> S [0.5] | b [0.5]");
  const auto c = to_cnf(g);
  EXPECT_TRUE(is_cnf(c));
  // P(a) = 0.5 + 0.25 P(a) = 2/3 and P(b) = 0.25 + 0.25 P(b) = 1/3
  EXPECT_NEAR(inside(c, oracle::words(c, "a")), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(inside(c, oracle::words(c, "b")), 1.0 / 3.0, 1e-12);
}

TEST(Cnf, PreservesSentenceProbabilitiesOnRandomGrammars) {
  std::mt19937_64 rng(2024);
  for (int gi = 0; gi < 40; ++gi) {
    auto g = oracle::random_grammar(rng, {"a", "b", "c"}, 5);
    const auto c = to_cnf(g);
    ASSERT_TRUE(is_cnf(c));
    ASSERT_TRUE(validate(c).empty());
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Sentence s;
      try {
        s = sample(g, seed, 32);
      } catch (const Error&) {
        continue;
      }
      if (s.size() > 10) continue;
      const double want = oracle::tree_sum(g, s);
      EXPECT_TRUE(oracle::close_rel(inside(c, s), want, 1e-9)) << serialize(g);
    }
  }
}
