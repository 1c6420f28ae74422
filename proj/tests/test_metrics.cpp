#include <gtest/gtest.h>

#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "oracles.hpp"
#include "qeforge/metrics/bleu.hpp"
#include "qeforge/metrics/correlation.hpp"
#include "qeforge/metrics/ter.hpp"
#include "qeforge/metrics/tokenize.hpp"
#include "qeforge/random.hpp"

using namespace qeforge;
using namespace qeforge::metrics;
using Tokens = std::vector<std::string>;

// --- tokenization ----------------------------------------------------------

TEST(Tokenize, Examples) {
  EXPECT_EQ(tokenize_tercom("Hello, world!"), (Tokens{"hello", ",", "world", "!"}));
  EXPECT_EQ(tokenize_tercom("ABC"), (Tokens{"abc"}));
  EXPECT_EQ(tokenize_tercom("  a   b "), (Tokens{"a", "b"}));
  EXPECT_TRUE(tokenize_tercom("").empty());
  EXPECT_EQ(tokenize_tercom("Hello, world!", {false, false}), (Tokens{"Hello", "world"}));
  EXPECT_EQ(tokenize_tercom("$5+x", {true, true}), (Tokens{"$", "5", "+", "x"}));
}

TEST(Tokenize, ConformanceFixture) {
  std::ifstream in(std::string(QEFORGE_FIXTURES) + "/tokenizer_conformance.jsonl");
  ASSERT_TRUE(in);
  std::string line;
  int cases = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    const TokenizeOptions opt{j["lowercase"].get<bool>(), j["keep_punct"].get<bool>()};
    EXPECT_EQ(tokenize_tercom(j["text"].get<std::string>(), opt), j["tokens"].get<Tokens>())
        << "text: " << j["text"] << " lc=" << opt.lowercase << " punct=" << opt.keep_punct;
    ++cases;
  }
  EXPECT_GE(cases, 200);
}

TEST(Tokenize, InvalidUtf8PassesThrough) {
  const std::string bad = "ab\xff" "cd";
  EXPECT_EQ(tokenize_tercom(bad), (Tokens{bad}));
}

// --- TER -------------------------------------------------------------------

TEST(Ter, FixedCases) {
  auto same = ter({"a", "b", "c"}, {"a", "b", "c"});
  EXPECT_EQ(same.edits(), 0u);
  EXPECT_EQ(same.score(), 0.0);

  auto empty = ter({}, {"a", "b"});
  EXPECT_EQ(empty.insertions, 2u);
  EXPECT_EQ(empty.score(), 1.0);

  auto disjoint = ter({"x", "y", "z"}, {"a", "b", "c"});
  EXPECT_EQ(disjoint.substitutions, 3u);
  EXPECT_EQ(disjoint.score(), 1.0);

  auto swap = ter({"c", "d", "a", "b"}, {"a", "b", "c", "d"});
  EXPECT_EQ(swap.shifts, 1u);
  EXPECT_EQ(swap.edits(), 1u);
  EXPECT_EQ(swap.score(), 0.25);
  EXPECT_EQ(oracle::exhaustive_ter_edits({"c", "d", "a", "b"}, {"a", "b", "c", "d"}), 1u);
}

TEST(Ter, EmptyReferenceIsAnError) {
  try {
    ter({"a"}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "undefined TER: empty reference");
  }
}

TEST(Ter, DeletionsAndInsertionsAreDirectional) {
  auto extra = ter({"a", "b", "c"}, {"a", "b"});
  EXPECT_EQ(extra.deletions, 1u);
  EXPECT_EQ(extra.insertions, 0u);
  auto missing = ter({"a"}, {"a", "b"});
  EXPECT_EQ(missing.insertions, 1u);
}

TEST(Ter, GreedyAloneMissesAnOptimumThatRefinementFinds) {
  const Tokens hyp{"b", "a", "d", "c"}, ref{"d", "a", "c", "b"};
  EXPECT_EQ(ter_greedy(hyp, ref).edits(), 3u);
  EXPECT_EQ(ter(hyp, ref).edits(), 2u);
  EXPECT_EQ(oracle::exhaustive_ter_edits(hyp, ref), 2u);
}

TEST(Ter, MatchesExhaustiveOracleOnShortSentences) {
  Rng rng(20240501);
  for (int trial = 0; trial < 300; ++trial) {
    auto hyp = oracle::random_tokens(rng, 0, 6, 4);
    auto ref = oracle::random_tokens(rng, 1, 6, 4);
    const auto got = ter(hyp, ref);
    ASSERT_EQ(got.edits(), oracle::exhaustive_ter_edits(hyp, ref))
        << oracle::join(hyp) << " | " << oracle::join(ref);
    ASSERT_EQ(got.ref_len, ref.size());
  }
}

TEST(Ter, BoundsAndIdentityProperty) {
  Rng rng(99);
  for (int trial = 0; trial < 400; ++trial) {
    auto hyp = oracle::random_tokens(rng, 0, 14, 6);
    auto ref = oracle::random_tokens(rng, 1, 14, 6);
    const auto s = ter(hyp, ref);
    EXPECT_LE(s.score(), static_cast<double>(std::max(hyp.size(), ref.size())) / ref.size());
    EXPECT_EQ(s.edits() == 0, hyp == ref);
    EXPECT_EQ(ter(ref, ref).edits(), 0u);
    // Alignment counts must be consistent with the sequence lengths.
    EXPECT_EQ(hyp.size() + s.insertions, ref.size() + s.deletions);
  }
}

TEST(Ter, GreedyShiftsEachCutDistanceByAtLeastTwo) {
  Rng rng(7);
  std::size_t observed = 0;
  for (int trial = 0; trial < 300; ++trial) {
    auto ref = oracle::random_tokens(rng, 3, 16, 8);
    auto hyp = ref;
    // Move a few random blocks around and perturb a word.
    for (int k = 0; k < 2; ++k) {
      const auto start = rng.below(hyp.size());
      const auto len = 1 + rng.below(std::min<std::size_t>(3, hyp.size() - start));
      Tokens block(hyp.begin() + start, hyp.begin() + start + len);
      hyp.erase(hyp.begin() + start, hyp.begin() + start + len);
      hyp.insert(hyp.begin() + rng.below(hyp.size() + 1), block.begin(), block.end());
    }
    std::vector<ShiftStep> trace;
    const auto s = ter_greedy(hyp, ref, &trace);
    ASSERT_EQ(trace.size(), s.shifts);
    for (const auto& step : trace) {
      ASSERT_GE(step.distance_before, step.distance_after + 2);
      ++observed;
    }
    // Refinement never does worse than greedy.
    EXPECT_LE(ter(hyp, ref).edits(), s.edits());
  }
  EXPECT_GT(observed, 50u);
}

TEST(TerSentence, Examples) {
  EXPECT_EQ(ter_sentence("good day", "good day").score(), 0.0);
  EXPECT_EQ(ter_sentence("", "good day").score(), 1.0);
  auto swapped = ter_sentence("day good", "good day");
  EXPECT_EQ(swapped.shifts, 1u);
  EXPECT_EQ(swapped.score(), 0.5);
  EXPECT_EQ(oracle::exhaustive_ter_edits({"day", "good"}, {"good", "day"}), 1u);
  EXPECT_EQ(ter_sentence("Good Day!", "good day !").score(), 0.0);
  EXPECT_THROW(ter_sentence("a", "  "), Error);
}

TEST(TerBatch, FormatAndErrors) {
  std::istringstream in("a b\ta b\nc\ta b\n");
  auto scores = score_batch(in);
  std::ostringstream out;
  const auto sum = write_batch(out, scores);
  EXPECT_EQ(out.str(), "0\t0\t0\t0\t2\t0.000000\n1\t0\t1\t0\t2\t1.000000\n");
  EXPECT_EQ(sum.pairs, 2u);
  EXPECT_DOUBLE_EQ(sum.corpus_ter(), 0.5);

  std::istringstream bad("a\tb\nno tab here\n");
  try {
    score_batch(bad);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  std::istringstream empty("");
  EXPECT_TRUE(score_batch(empty).empty());
}

// --- Pearson ---------------------------------------------------------------

TEST(Pearson, AnalyticCases) {
  EXPECT_NEAR(pearson({1, 2, 3}, {2, 4, 6}).rescaled, 100.0, 1e-9);
  EXPECT_NEAR(pearson({1, 2, 3}, {3, 2, 1}).rescaled, -100.0, 1e-9);
  // Closed form: centered x = (-1.5,-.5,.5,1.5), y = (-1.5,.5,-.5,1.5): 4 / sqrt(5 * 5).
  const auto r = pearson({1, 2, 3, 4}, {1, 3, 2, 4});
  EXPECT_NEAR(r.r, 4.0 / 5.0, 1e-12);
  EXPECT_NEAR(r.rescaled, 80.0, 1e-9);
  EXPECT_EQ(r.n, 4u);
}

TEST(Pearson, Errors) {
  EXPECT_THROW(pearson({1, 1, 1}, {1, 2, 3}), Error);
  EXPECT_THROW(pearson({0.1, 0.1, 0.1}, {1, 2, 3}), Error);
  EXPECT_THROW(pearson({1, 2}, {1, 2, 3}), ValidationError);
  EXPECT_THROW(pearson({1}, {1}), ValidationError);
}

TEST(Pearson, InvarianceProperties) {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 3 + rng.below(60);
    std::vector<double> x(n), y(n), ax(n), neg(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = rng.normal();
      y[i] = 0.5 * x[i] + rng.normal();
    }
    const double scale = 0.01 + 100.0 * rng.uniform(), shift = 50.0 * rng.normal();
    for (std::size_t i = 0; i < n; ++i) {
      ax[i] = scale * x[i] + shift;
      neg[i] = -y[i];
    }
    const double r = pearson(x, y).r;
    ASSERT_LE(std::abs(r), 1.0);
    ASSERT_NEAR(pearson(ax, y).r, r, 1e-9);
    ASSERT_NEAR(pearson(x, neg).r, -r, 1e-12);
    ASSERT_NEAR(pearson(y, x).r, r, 1e-12);
  }
}

// --- BLEU ------------------------------------------------------------------

TEST(Bleu, IdenticalAndDisjoint) {
  const std::vector<std::string> refs{"the cat sat on the mat", "a b c d e"};
  EXPECT_NEAR(bleu(refs, refs).score, 100.0, 1e-9);
  EXPECT_EQ(bleu(std::vector<std::string>{"x y z w", "q"}, refs).score, 0.0);
}

TEST(Bleu, HandCountedSmoothedCase) {
  const auto b = bleu(std::vector<std::string>{"a b c d"}, std::vector<std::string>{"a b c e"});
  EXPECT_EQ(b.matches, (std::array<std::size_t, 4>{3, 2, 1, 0}));
  EXPECT_EQ(b.totals, (std::array<std::size_t, 4>{4, 3, 2, 1}));
  // 0/1 at order 4 becomes 1/(2*1).
  const double expected = 100.0 * std::pow(3.0 / 4 * 2.0 / 3 * 1.0 / 2 * 1.0 / 2, 0.25);
  EXPECT_NEAR(b.score, expected, 1e-9);
  EXPECT_EQ(b.brevity_penalty, 1.0);
}

TEST(Bleu, BrevityPenaltyAndInvariant) {
  const auto b = bleu(std::vector<std::string>{"a b c"}, std::vector<std::string>{"a b c d e f"});
  EXPECT_NEAR(b.brevity_penalty, std::exp(1.0 - 6.0 / 3.0), 1e-12);
  double log_mean = 0;
  for (int n = 0; n < b.effective_order; ++n) log_mean += std::log(b.precisions[n]);
  log_mean /= b.effective_order;
  EXPECT_NEAR(b.score, 100.0 * b.brevity_penalty * std::exp(log_mean), 1e-9);
}

TEST(Bleu, CorpusOrderDoesNotMatter) {
  std::vector<std::string> hyps{"a b c d", "e f g", "h i j k l", "the cat"};
  std::vector<std::string> refs{"a b x d", "e f g", "h j i k l", "a cat"};
  const double s = bleu(hyps, refs).score;
  std::swap(hyps[0], hyps[3]);
  std::swap(refs[0], refs[3]);
  std::swap(hyps[1], hyps[2]);
  std::swap(refs[1], refs[2]);
  EXPECT_NEAR(bleu(hyps, refs).score, s, 1e-12);
}

TEST(Bleu, Errors) {
  EXPECT_THROW(bleu(std::vector<std::string>{"a"}, std::vector<std::string>{}), ValidationError);
  EXPECT_EQ(bleu(std::vector<std::string>{"", " "}, std::vector<std::string>{"a", "b"}).score, 0.0);
}

// --- Increase % ------------------------------------------------------------

TEST(IncreasePct, TableOneCells) {
  EXPECT_NEAR(round_half_even(increase_pct(51.90, 47.17)), 10.03, 1e-9);
  EXPECT_NEAR(round_half_even(increase_pct(36.60, 29.16)), 25.51, 1e-9);
  EXPECT_NEAR(round_half_even(increase_pct(84.40, 83.63)), 0.92, 1e-9);
  EXPECT_NEAR(round_half_even(increase_pct(47.16, 40.65)), 16.01, 1e-9);
  EXPECT_EQ(increase_pct(12.5, 12.5), 0.0);
  EXPECT_THROW(increase_pct(1.0, 0.0), ValidationError);
}

TEST(RoundHalfEven, Ties) {
  EXPECT_DOUBLE_EQ(round_half_even(4.485), 4.48);
  EXPECT_DOUBLE_EQ(round_half_even(4.475), 4.48);
  EXPECT_DOUBLE_EQ(round_half_even(14.3675), 14.37);
  EXPECT_DOUBLE_EQ(round_half_even(-9.705), -9.7);
  EXPECT_DOUBLE_EQ(round_half_even(2.0), 2.0);
}

// --- Williams test -----------------------------------------------------------

TEST(Williams, EqualCorrelationsGivePOne) {
  for (double r23 : {-0.5, 0.0, 0.7, 1.0}) {
    const auto w = williams_test(0.6, 0.6, r23, 37);
    EXPECT_EQ(w.t, 0.0);
    EXPECT_EQ(w.p, 1.0);
  }
}

TEST(Williams, AgreesWithQuadratureOracle) {
  struct Case {
    double r12, r13, r23;
    std::size_t n;
  };
  for (const auto& c : {Case{0.9, 0.1, 0.1, 100}, Case{0.50, 0.45, 0.90, 20},
                        Case{0.7, 0.5, 0.6, 50}, Case{0.3, 0.35, 0.2, 12}}) {
    const auto w = williams_test(c.r12, c.r13, c.r23, c.n);
    const double t = oracle::williams_t(c.r12, c.r13, c.r23, c.n);
    EXPECT_NEAR(w.t, t, 1e-12);
    EXPECT_NEAR(w.p, oracle::student_t_two_tailed(t, static_cast<double>(c.n) - 3), 1e-7);
  }
  EXPECT_LT(williams_test(0.9, 0.1, 0.1, 100).p, 0.001);
  EXPECT_GT(williams_test(0.50, 0.45, 0.90, 20).p, 0.05);
}

TEST(Williams, SymmetricAndValidated) {
  const auto a = williams_test(0.7, 0.4, 0.5, 60), b = williams_test(0.4, 0.7, 0.5, 60);
  EXPECT_NEAR(a.p, b.p, 1e-15);
  EXPECT_NEAR(a.t, -b.t, 1e-15);
  EXPECT_THROW(williams_test(0.5, 0.4, 0.3, 3), ValidationError);
  EXPECT_THROW(williams_test(1.5, 0.4, 0.3, 30), ValidationError);
  // r12 = 1 with r13 = r23 makes the correlation matrix singular.
  EXPECT_THROW(williams_test(1.0, 0.4, 0.4, 30), Error);
}

// --- significance grid -----------------------------------------------------

namespace {
std::vector<NamedPredictions> noisy_systems(const std::vector<double>& gold, Rng& rng) {
  std::vector<NamedPredictions> out{{"good", {}}, {"noise", {}}};
  for (double g : gold) {
    out[0].values.push_back(g + 0.1 * rng.normal());
    out[1].values.push_back(rng.normal());
  }
  return out;
}
}  // namespace

TEST(SignificanceGrid, IdenticalSystemsAreNotSignificant) {
  std::vector<double> gold{0.1, 0.4, 0.2, 0.8, 0.5, 0.3};
  std::vector<NamedPredictions> systems{{"a", {1, 2, 1, 4, 3, 2}}, {"b", {1, 2, 1, 4, 3, 2}}};
  const auto g = significance_grid(gold, systems);
  ASSERT_EQ(g.cells.size(), 1u);
  EXPECT_EQ(g.cells[0].p, 1.0);
  EXPECT_EQ(g.cells[0].mark(), 'N');
}

TEST(SignificanceGrid, GoldTrackingSystemBeatsNoise) {
  Rng rng(8);
  std::vector<double> gold(500);
  for (auto& g : gold) g = rng.uniform();
  const auto systems = noisy_systems(gold, rng);
  const auto g = significance_grid(gold, systems);
  ASSERT_EQ(g.cells.size(), 1u);
  EXPECT_EQ(g.cells[0].mark(), 'Y');
  // Same decision from the oracle route.
  const double r12 = pearson(gold, systems[0].values).r, r13 = pearson(gold, systems[1].values).r;
  const double r23 = pearson(systems[0].values, systems[1].values).r;
  EXPECT_LT(oracle::student_t_two_tailed(oracle::williams_t(r12, r13, r23, 500), 497), 0.05);

  const auto boot = significance_grid(gold, systems, 0.05, SignificanceTest::bootstrap);
  EXPECT_EQ(boot.cells[0].mark(), 'Y');
}

TEST(SignificanceGrid, FiveSystemsGiveTenCells) {
  Rng rng(1);
  std::vector<double> gold(40);
  for (auto& g : gold) g = rng.uniform();
  std::vector<NamedPredictions> systems;
  for (const char* name : {"Baseline", "NO TAG 1", "NO TAG 2", "TAG 1", "TAG 2"}) {
    NamedPredictions p{name, {}};
    for (double g : gold) p.values.push_back(g + rng.normal());
    systems.push_back(p);
  }
  const auto grid = significance_grid(gold, systems);
  EXPECT_EQ(grid.cells.size(), 10u);
  for (const auto& c : grid.cells) {
    EXPECT_LT(c.row, c.col);
    EXPECT_EQ(c.significant, c.p < 0.05);
  }
  EXPECT_NE(grid.find(0, 4), nullptr);
  EXPECT_EQ(grid.find(4, 0), nullptr);
}

TEST(SignificanceGrid, LengthMismatch) {
  std::vector<NamedPredictions> systems{{"a", {1, 2}}};
  EXPECT_THROW(significance_grid(std::vector<double>{1, 2, 3}, systems), ValidationError);
}
