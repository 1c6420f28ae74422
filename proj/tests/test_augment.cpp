#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <unistd.h>

#include "qeforge/augment.hpp"

namespace fs = std::filesystem;
using namespace qeforge;
using namespace qeforge::augment;

namespace {

const LangPair kEnDe{"en", "de"}, kEnZh{"en", "zh"}, kEtEn{"et", "en"}, kNeEn{"ne", "en"};

QEDataset make_set(std::size_t n, const LangPair& lp, Domain d, Origin o = Origin::authentic) {
  QEDataset out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({lp.str() + " s" + std::to_string(i), "t" + std::to_string(i), 0.1, lp, d, o});
  return out;
}

ParallelDataset copy_pairs(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  ParallelDataset out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string s;
    const auto len = 3 + rng.below(8);
    for (std::size_t k = 0; k < len; ++k) s += static_cast<char>('a' + rng.below(12));
    out.push_back({s, s, kEnDe});
  }
  return out;
}

class EmptyTranslator final : public Translator {
 public:
  std::vector<std::string> translate(std::span<const std::string> s) const override {
    return std::vector<std::string>(s.size());
  }
  std::string name() const override { return "empty"; }
  std::uint64_t fingerprint() const override { return 1; }
};

class ShortTranslator final : public Translator {
 public:
  std::vector<std::string> translate(std::span<const std::string> s) const override {
    return std::vector<std::string>(s.size() / 2, "x");
  }
  std::string name() const override { return "short"; }
  std::uint64_t fingerprint() const override { return 2; }
};

/// Drops the last word; labels are then non-trivial.
class DropLastTranslator final : public Translator {
 public:
  std::vector<std::string> translate(std::span<const std::string> s) const override {
    std::vector<std::string> out;
    for (const auto& x : s) out.push_back(x.substr(0, x.rfind(' ') == std::string::npos ? x.size() : x.rfind(' ')));
    return out;
  }
  std::string name() const override { return "drop-last"; }
  std::uint64_t fingerprint() const override { return 3; }
};

std::vector<QEDataset> four_id_sets(std::size_t n) {
  return {make_set(n, kEnDe, Domain::ID), make_set(n, kEnZh, Domain::ID),
          make_set(n, kEtEn, Domain::ID), make_set(n, kNeEn, Domain::ID)};
}

std::vector<QEDataset> four_synthetic_sets(std::size_t n) {
  std::vector<QEDataset> out;
  for (const auto& lp : {kEnDe, kEnZh, kEtEn, kNeEn}) out.push_back(make_set(n, lp, Domain::ID, Origin::synthetic));
  return out;
}

}  // namespace

TEST(Dag1Concat, FourSetsOfSevenThousand) {
  const auto sets = four_id_sets(7000);
  const auto all = dag1_concat(sets);
  ASSERT_EQ(all.size(), 28000u);
  EXPECT_EQ(all.front().lang_pair, kEnDe);
  EXPECT_EQ(all[7000].lang_pair, kEnZh);
  EXPECT_EQ(all.back().lang_pair, kNeEn);
}

TEST(Dag1Concat, SingleSetIsIdentityAndOodIsRejected) {
  std::vector<QEDataset> one{make_set(5, kEnDe, Domain::ID)};
  EXPECT_EQ(dag1_concat(one), one[0]);
  one[0][3].domain = Domain::OOD;
  EXPECT_THROW(dag1_concat(one), ValidationError);
  EXPECT_THROW(dag1_concat(std::vector<QEDataset>{}), ValidationError);
}

TEST(MakeHalves, EqualDisjointDeterministic) {
  const auto corpus = copy_pairs(500, 1);
  SynthesisPlan plan{kEnDe, 200, 8, 50};
  const auto a = make_halves(corpus, plan), b = make_halves(corpus, plan);
  ASSERT_EQ(a.s1.size(), 100u);
  ASSERT_EQ(a.s2.size(), 100u);
  EXPECT_EQ(a.s1, b.s1);
  EXPECT_EQ(a.s2, b.s2);
  // Positions are distinct even when texts repeat.
  const auto idx = subsample_indices(corpus.size(), plan.n, plan.seed);
  EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 200u);
  for (std::size_t i = 0; i < 100; ++i) {
    EXPECT_EQ(a.s1[i], corpus[idx[i]]);
    EXPECT_EQ(a.s2[i], corpus[idx[100 + i]]);
  }
}

TEST(MakeHalves, TinyOddAndInsufficient) {
  const auto corpus = copy_pairs(2, 3);
  const auto h = make_halves(corpus, SynthesisPlan{kEnDe, 2, 8, 1});
  EXPECT_EQ(h.s1.size(), 1u);
  EXPECT_EQ(h.s2.size(), 1u);
  try {
    make_halves(corpus, SynthesisPlan{kEnDe, 1, 8, 1});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_STREQ(e.what(), "n must be even");
  }
  EXPECT_THROW(make_halves(corpus, SynthesisPlan{kEnDe, 4, 8, 1}), ValidationError);
}

TEST(SynthesisPlan, Validation) {
  EXPECT_NO_THROW((SynthesisPlan{kEnDe, 14000, 8, 7000}.validate()));
  EXPECT_THROW((SynthesisPlan{kEnDe, 14000, 8, 7001}.validate()), ValidationError);
  EXPECT_THROW((SynthesisPlan{kEnDe, 15, 8, 7}.validate()), ValidationError);
  EXPECT_THROW((SynthesisPlan{kEnDe, 14, 8, 0}.validate()), ValidationError);
}

TEST(GenerateSynthetic, IdentityAndEmptyTranslators) {
  const auto corpus = copy_pairs(40, 4);
  SynthesisPlan plan{kEnDe, 40, 8, 15};
  const auto halves = make_halves(corpus, plan);
  IdentityTranslator identity;
  const auto same = generate_synthetic(identity, halves.s2, plan);
  ASSERT_EQ(same.samples.size(), 15u);
  for (const auto& s : same.samples) {
    EXPECT_EQ(s.label, 0.0);
    EXPECT_EQ(s.origin, Origin::synthetic);
    EXPECT_EQ(s.domain, Domain::ID);
  }
  const auto empty = generate_synthetic(EmptyTranslator{}, halves.s2, plan);
  for (const auto& s : empty.samples) EXPECT_EQ(s.label, 1.0);
  EXPECT_THROW(generate_synthetic(ShortTranslator{}, halves.s2, plan), Error);
  plan.portion = 21;
  EXPECT_THROW(generate_synthetic(identity, halves.s2, plan), ValidationError);
}

TEST(GenerateSynthetic, LabelsAreExactTerAndSelectionIsSeeded) {
  ParallelDataset corpus;
  for (int i = 0; i < 60; ++i)
    corpus.push_back({"w" + std::to_string(i) + " b c d", "W" + std::to_string(i) + " b c d", kEnDe});
  SynthesisPlan plan{kEnDe, 60, 9, 30};
  const auto halves = make_halves(corpus, plan);
  DropLastTranslator t;
  const auto a = generate_synthetic(t, halves.s2, plan), b = generate_synthetic(t, halves.s2, plan);
  EXPECT_EQ(a.samples, b.samples);
  ASSERT_EQ(a.samples.size(), 30u);
  for (std::size_t i = 0; i < a.samples.size(); ++i)
    EXPECT_EQ(a.samples[i].label, metrics::ter_sentence(a.samples[i].tgt, a.references[i]).score());
  EXPECT_EQ(a.samples[0].label, 0.25);  // lowercasing makes w/W match; one insertion
}

TEST(GenerateSynthetic, PersistsTripletsAndManifest) {
  const auto dir = fs::temp_directory_path() / ("qeforge_aug_" + std::to_string(::getpid()));
  const auto corpus = copy_pairs(20, 5);
  SynthesisPlan plan{kEnDe, 20, 8, 5};
  const auto syn = generate_synthetic(IdentityTranslator{}, make_halves(corpus, plan).s2, plan);
  save_synthetic(syn, dir);
  EXPECT_EQ(load_qe_tsv(dir / "data.tsv", kEnDe, Domain::ID, Origin::synthetic).size(), 5u);
  std::ifstream in(dir / "manifest.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["extra"]["plan"]["portion"], 5);
  EXPECT_EQ(j["extra"]["metric"], "TER");
  fs::remove_all(dir);
}

TEST(TrainTranslator, CopyTaskReachesHighBleu) {
  const auto s1 = copy_pairs(2000, 6);
  MTConfig cfg;
  cfg.model.hidden_width = 32;
  cfg.model.max_updates = 400;
  const auto trained = train_translator(s1, cfg);
  EXPECT_EQ(trained.report.dev_size, 20u);
  EXPECT_EQ(trained.report.test_size, 20u);
  EXPECT_EQ(trained.report.train_size, 1960u);
  EXPECT_GE(trained.report.dev_bleu, 90.0);
  EXPECT_THROW(train_translator(ParallelDataset{}, cfg), ValidationError);
}

TEST(TrainTranslator, SameSeedSameParameters) {
  const auto s1 = copy_pairs(300, 7);
  MTConfig cfg;
  cfg.model.hidden_width = 12;
  cfg.model.eval_interval = 10;
  cfg.model.max_updates = 20;
  const auto a = train_translator(s1, cfg), b = train_translator(s1, cfg);
  EXPECT_EQ(a.translator->fingerprint(), b.translator->fingerprint());
  cfg.model.seed = 9;
  EXPECT_NE(train_translator(s1, cfg).translator->fingerprint(), a.translator->fingerprint());
}

TEST(TrainTranslator, IdentityStubEchoes) {
  const std::vector<std::string> in{"a b", "c"};
  EXPECT_EQ(IdentityTranslator{}.translate(in), in);
}

TEST(ComposeStep2, Dag1Counts) {
  const auto id = four_id_sets(7000);
  const auto ood = make_set(60000, LangPair{"en", "de"}, Domain::OOD);
  const auto c = compose_step2_corpus(ood, id, {}, Approach::DAG1, 1.0, 8);
  EXPECT_EQ(c.id_count, 28000u);
  EXPECT_EQ(c.ood_count, 28000u);
  ASSERT_EQ(c.samples.size(), 56000u);
  std::size_t n_ood = 0;
  for (const auto& s : c.samples) n_ood += s.domain == Domain::OOD;
  EXPECT_EQ(n_ood, 28000u);
  const auto again = compose_step2_corpus(ood, id, {}, Approach::DAG1, 1.0, 8);
  EXPECT_EQ(again.samples, c.samples);
}

TEST(ComposeStep2, Dag2CountsAndMetadata) {
  const auto id = four_id_sets(7000);
  const auto syn = four_synthetic_sets(7000);
  const auto ood = make_set(120000, LangPair{"en", "de"}, Domain::OOD);
  const auto c = compose_step2_corpus(ood, id, syn, Approach::DAG2, 1.0, 8);
  EXPECT_EQ(c.id_count, 56000u);
  EXPECT_EQ(c.ood_count, 56000u);
  ASSERT_EQ(c.samples.size(), 112000u);
  std::size_t synthetic = 0, ood_n = 0;
  for (const auto& s : c.samples) {
    synthetic += s.origin == Origin::synthetic;
    ood_n += s.domain == Domain::OOD;
  }
  EXPECT_EQ(synthetic, 28000u);
  EXPECT_EQ(ood_n, 56000u);
  const auto only = compose_step2_corpus(ood, id, syn, Approach::DAG2, 0.5, 8, true);
  EXPECT_EQ(only.id_count, 28000u);
  EXPECT_EQ(only.ood_count, 14000u);
}

TEST(ComposeStep2, Errors) {
  const auto id = four_id_sets(10);
  auto syn = four_synthetic_sets(10);
  syn.pop_back();
  const auto ood = make_set(100, kEnDe, Domain::OOD);
  EXPECT_THROW(compose_step2_corpus(ood, id, syn, Approach::DAG2, 1.0, 8), ValidationError);
  EXPECT_THROW(compose_step2_corpus(ood, id, {}, Approach::DAG1, 0.0, 8), ValidationError);
  EXPECT_THROW(compose_step2_corpus(ood, id, {}, Approach::DAG1, -1.0, 8), ValidationError);
  EXPECT_THROW(compose_step2_corpus(ood, id, {}, Approach::DAG1, 3.0, 8), ValidationError);
  EXPECT_THROW(compose_step2_corpus(QEDataset{}, id, {}, Approach::DAG1, 1.0, 8), ValidationError);
}

TEST(ComposeStep2, RatioRounding) {
  const auto id = four_id_sets(3);  // 12 ID samples
  const auto ood = make_set(100, kEnDe, Domain::OOD);
  EXPECT_EQ(compose_step2_corpus(ood, id, {}, Approach::DAG1, 0.25, 8).ood_count, 3u);
  EXPECT_EQ(compose_step2_corpus(ood, id, {}, Approach::DAG1, 0.3, 8).ood_count, 4u);  // 3.6
}
