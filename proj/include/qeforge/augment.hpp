#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "qeforge/corpus.hpp"
#include "qeforge/error.hpp"
#include "qeforge/metrics/bleu.hpp"
#include "qeforge/metrics/ter.hpp"
#include "qeforge/modeling/seq2seq.hpp"
#include "qeforge/random.hpp"
#include "qeforge/translator.hpp"

namespace qeforge::augment {

inline constexpr std::string_view kLabelMetric = "TER";
inline constexpr std::string_view kLabelMetricVersion = "qeforge-ter/1 lc:yes punct:yes";

/// Approach 1: authentic ID data of every language pair, in input order.
inline QEDataset dag1_concat(std::span<const QEDataset> id_train_sets) {
  if (id_train_sets.empty()) throw ValidationError("dag1_concat needs at least one dataset");
  for (std::size_t k = 0; k < id_train_sets.size(); ++k)
    for (std::size_t i = 0; i < id_train_sets[k].size(); ++i)
      if (id_train_sets[k][i].domain != Domain::ID)
        throw ValidationError("dag1_concat: dataset " + std::to_string(k) + " sample " +
                              std::to_string(i) + " is OOD");
  return concat(id_train_sets);
}

inline QEDataset dag1_concat(const std::vector<QEDataset>& sets) {
  return dag1_concat(std::span<const QEDataset>(sets));
}

struct SynthesisPlan {
  LangPair lang_pair;
  std::size_t n = 0;        // samples drawn from the parallel corpus
  std::uint64_t seed = 8;
  std::size_t portion = 0;  // S2 sources to translate
  std::string metric = std::string(kLabelMetric);

  void validate() const {
    if (n == 0 || n % 2 != 0) throw ValidationError("n must be even and positive");
    if (portion == 0 || portion > n / 2)
      throw ValidationError("portion must be in 1.." + std::to_string(n / 2));
    if (metric != kLabelMetric) throw ValidationError("unsupported label metric '" + metric + "'");
  }

  nlohmann::json to_json() const {
    return {{"lang_pair", lang_pair.str()}, {"n", n}, {"seed", seed}, {"portion", portion},
            {"metric", metric}};
  }
};

struct SynthesisHalves {
  ParallelDataset s1, s2;
};

/// Draws plan.n samples under plan.seed; the first half becomes s1, the second s2.
inline SynthesisHalves make_halves(std::span<const ParallelSample> parallel, const SynthesisPlan& plan) {
  if (plan.n % 2 != 0) throw ValidationError("n must be even");
  if (plan.n == 0) throw ValidationError("n must be positive");
  if (parallel.size() < plan.n)
    throw ValidationError("parallel corpus has " + std::to_string(parallel.size()) +
                          " samples, plan needs " + std::to_string(plan.n));
  auto chosen = subsample(parallel, plan.n, plan.seed);
  SynthesisHalves h;
  const auto half = static_cast<std::ptrdiff_t>(plan.n / 2);
  h.s1.assign(chosen.begin(), chosen.begin() + half);
  h.s2.assign(chosen.begin() + half, chosen.end());
  return h;
}

struct MTConfig {
  modeling::Seq2SeqConfig model;
  /// Dev and test size for translator training on large corpora; smaller
  /// corpora use `small_fraction` of the data for each.
  std::size_t heldout_size = 7000;
  std::size_t large_corpus = 70000;
  double small_fraction = 0.01;
};

struct TranslatorReport {
  std::size_t train_size = 0, dev_size = 0, test_size = 0;
  std::size_t updates = 0;
  bool early_stopped = false;
  double dev_bleu = 0.0, test_bleu = 0.0;
  std::vector<modeling::Seq2SeqEval> history;

  nlohmann::json to_json() const {
    nlohmann::json h = nlohmann::json::array();
    for (const auto& e : history) h.push_back({{"updates", e.updates}, {"dev_loss", e.dev_loss}});
    return {{"train_size", train_size}, {"dev_size", dev_size},   {"test_size", test_size},
            {"updates", updates},       {"early_stopped", early_stopped},
            {"dev_bleu", dev_bleu},     {"test_bleu", test_bleu}, {"history", h}};
  }
};

struct TrainedTranslator {
  std::unique_ptr<modeling::ToySeq2Seq> translator;
  TranslatorReport report;
};

inline double corpus_bleu(const Translator& t, std::span<const ParallelSample> data) {
  if (data.empty()) return 0.0;
  std::vector<std::string> src, ref;
  for (const auto& p : data) {
    src.push_back(p.src);
    ref.push_back(p.ref);
  }
  return metrics::bleu(t.translate(src), ref).score;
}

/// Trains the toy translator on a train/dev/test split of s1 with dev-loss
/// early stopping, and reports BLEU on the held-out parts.
inline TrainedTranslator train_translator(std::span<const ParallelSample> s1, const MTConfig& cfg) {
  if (s1.empty()) throw ValidationError("translator training corpus is empty");
  const std::size_t n = s1.size();
  std::size_t held = n >= cfg.large_corpus
                         ? cfg.heldout_size
                         : static_cast<std::size_t>(std::floor(static_cast<double>(n) * cfg.small_fraction));
  held = std::min(held, (n - 1) / 2);
  SplitSpec spec;
  spec.dev = spec.test = static_cast<double>(held) / static_cast<double>(n);
  spec.train = 1.0 - 2 * spec.dev;
  spec.seed = cfg.model.seed;
  const auto parts = split(s1, spec);

  auto run = modeling::train_seq2seq(parts.train, parts.dev, cfg.model);
  TrainedTranslator out;
  out.report.train_size = parts.train.size();
  out.report.dev_size = parts.dev.size();
  out.report.test_size = parts.test.size();
  out.report.updates = run.updates;
  out.report.early_stopped = run.early_stopped;
  out.report.history = run.history;
  out.report.dev_bleu = corpus_bleu(*run.model, parts.dev);
  out.report.test_bleu = corpus_bleu(*run.model, parts.test);
  out.translator = std::move(run.model);
  return out;
}

struct SyntheticDataset {
  QEDataset samples;                    // (S2 source, hypothesis, TER), origin synthetic
  std::vector<std::string> references;  // parallel to samples
  SynthesisPlan plan;
  std::uint64_t translator_fingerprint = 0;
};

namespace detail {
/// Applies fn(i) for i in [0, n) on up to `workers` threads; results are written by index.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  for (auto& t : pool) t.join();
}
}  // namespace detail

/// Translates plan.portion sources of s2 and labels each hypothesis with its
/// TER against the S2 reference.
inline SyntheticDataset generate_synthetic(const Translator& translator,
                                           std::span<const ParallelSample> s2,
                                           const SynthesisPlan& plan) {
  if (plan.portion > s2.size())
    throw ValidationError("portion " + std::to_string(plan.portion) + " exceeds |S2| = " +
                          std::to_string(s2.size()));
  const auto picked = subsample(s2, plan.portion, derive_seed(plan.seed, 2));
  std::vector<std::string> sources;
  sources.reserve(picked.size());
  for (const auto& p : picked) sources.push_back(p.src);
  const auto hyps = translator.translate(sources);
  if (hyps.size() != sources.size())
    throw Error("translator returned " + std::to_string(hyps.size()) + " outputs for " +
                std::to_string(sources.size()) + " inputs");

  SyntheticDataset out;
  out.plan = plan;
  out.translator_fingerprint = translator.fingerprint();
  out.samples.resize(picked.size());
  out.references.resize(picked.size());
  detail::parallel_for(picked.size(), std::thread::hardware_concurrency(), [&](std::size_t i) {
    out.samples[i] = {picked[i].src,       hyps[i],     metrics::ter_sentence(hyps[i], picked[i].ref).score(),
                      picked[i].lang_pair, Domain::ID, Origin::synthetic};
    out.references[i] = picked[i].ref;
  });
  return out;
}

/// Writes data.tsv plus manifest.json describing plan, translator and metric.
inline void save_synthetic(const SyntheticDataset& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_qe_tsv(dir / "data.tsv", d.samples);
  auto m = DatasetManifest::describe(d.samples, {(dir / "data.tsv").string()});
  m.extra = {{"plan", d.plan.to_json()},
             {"translator_fingerprint", Fingerprint::to_hex(d.translator_fingerprint)},
             {"metric", kLabelMetric},
             {"metric_version", kLabelMetricVersion}};
  m.save(dir / "manifest.json");
}

enum class Approach { DAG1, DAG2 };

inline std::string_view to_string(Approach a) { return a == Approach::DAG1 ? "DAG1" : "DAG2"; }

inline Approach parse_approach(std::string_view s) {
  if (s == "DAG1" || s == "dag1") return Approach::DAG1;
  if (s == "DAG2" || s == "dag2") return Approach::DAG2;
  throw ValidationError("unknown approach '" + std::string(s) + "' (expected DAG1 or DAG2)");
}

struct Step2Corpus {
  QEDataset samples;
  std::size_t id_count = 0, ood_count = 0;
};

/// Step-2 training data: the ID part (plus synthetic data under DAG2) joined
/// with round(ood_ratio * |ID part|) OOD samples, shuffled under seed.
/// With `synthetic_only`, DAG2 drops the authentic ID data.
inline Step2Corpus compose_step2_corpus(std::span<const QESample> ood_train,
                                        std::span<const QEDataset> id_sets,
                                        std::span<const QEDataset> synthetic_sets,
                                        Approach approach, double ood_ratio, std::uint64_t seed,
                                        bool synthetic_only = false) {
  if (!(ood_ratio > 0)) throw ValidationError("ood_ratio must be positive");
  if (ood_train.empty()) throw ValidationError("OOD training data is empty");
  std::vector<QESample> id_part;
  if (approach == Approach::DAG1 || !synthetic_only) id_part = dag1_concat(id_sets);
  if (approach == Approach::DAG2) {
    std::vector<LangPair> covered;
    for (const auto& s : synthetic_sets)
      for (const auto& lp : lang_pairs(s)) covered.push_back(lp);
    for (const auto& set : id_sets)
      for (const auto& lp : lang_pairs(set))
        if (std::find(covered.begin(), covered.end(), lp) == covered.end())
          throw ValidationError("DAG2: no synthetic set for language pair " + lp.str());
    for (const auto& s : synthetic_sets) {
      for (const auto& x : s)
        if (x.domain != Domain::ID) throw ValidationError("synthetic samples must be ID");
      id_part.insert(id_part.end(), s.begin(), s.end());
    }
  }
  const auto n_ood =
      static_cast<std::size_t>(std::llround(ood_ratio * static_cast<double>(id_part.size())));
  if (n_ood > ood_train.size())
    throw ValidationError("ood_ratio asks for " + std::to_string(n_ood) + " OOD samples but only " +
                          std::to_string(ood_train.size()) + " are available");
  auto ood_part = subsample(ood_train, n_ood, seed);
  for (const auto& x : ood_part)
    if (x.domain != Domain::OOD) throw ValidationError("OOD training data contains ID samples");

  Step2Corpus out;
  out.id_count = id_part.size();
  out.ood_count = ood_part.size();
  std::vector<QESample> all = std::move(id_part);
  all.insert(all.end(), ood_part.begin(), ood_part.end());
  const auto order = permutation(all.size(), derive_seed(seed, 0x53544550ULL));
  out.samples.reserve(all.size());
  for (auto i : order) out.samples.push_back(all[i]);
  return out;
}

inline Step2Corpus compose_step2_corpus(const QEDataset& ood_train, const std::vector<QEDataset>& id_sets,
                                        const std::vector<QEDataset>& synthetic_sets,
                                        Approach approach, double ood_ratio, std::uint64_t seed,
                                        bool synthetic_only = false) {
  return compose_step2_corpus(std::span<const QESample>(ood_train), std::span<const QEDataset>(id_sets),
                              std::span<const QEDataset>(synthetic_sets), approach, ood_ratio, seed,
                              synthetic_only);
}

}  // namespace qeforge::augment
