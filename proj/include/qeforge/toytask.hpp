#pragma once

// Synthetic QE task: sentences over per-language word lists, reference
// translations through a fixed word lexicon, and machine outputs corrupted
// with noise words, deletions and block moves. Labels are exact TER of the
// corrupted output against the reference.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "qeforge/corpus.hpp"
#include "qeforge/metrics/ter.hpp"
#include "qeforge/random.hpp"

namespace qeforge::toytask {

struct DomainProfile {
  std::size_t word_begin = 0, word_end = 300;    // source word index range
  std::size_t noise_begin = 0, noise_end = 40;   // noise word index range
  double max_corruption = 0.6;
};

struct ToyTaskSpec {
  std::uint64_t seed = 8;
  std::vector<LangPair> id_pairs{{"en", "de"}, {"en", "zh"}, {"ro", "en"}, {"ru", "en"}};
  std::vector<LangPair> zero_shot_pairs{{"en", "cs"}, {"en", "ja"}};
  LangPair ood_pair{"en", "de"};
  std::size_t id_train = 600, id_dev = 150, id_test = 150;
  std::size_t ood_total = 6000;
  double ood_dev_ratio = 0.05, ood_test_ratio = 0.05;
  std::size_t zero_shot_test = 150;
  std::size_t parallel_size = 2000;  // per ID pair, for synthetic data
  std::size_t min_len = 4, max_len = 12;
  DomainProfile id_domain{0, 300, 0, 40, 0.6};
  DomainProfile ood_domain{200, 500, 25, 65, 0.6};

  nlohmann::json to_json() const {
    auto lps = [](const std::vector<LangPair>& v) {
      std::vector<std::string> out;
      for (const auto& lp : v) out.push_back(lp.str());
      return out;
    };
    auto prof = [](const DomainProfile& p) {
      return nlohmann::json{{"words", {p.word_begin, p.word_end}},
                            {"noise", {p.noise_begin, p.noise_end}},
                            {"max_corruption", p.max_corruption}};
    };
    return {{"seed", seed},
            {"id_pairs", lps(id_pairs)},
            {"zero_shot_pairs", lps(zero_shot_pairs)},
            {"ood_pair", ood_pair.str()},
            {"id_sizes", {id_train, id_dev, id_test}},
            {"ood_total", ood_total},
            {"ood_split", {ood_dev_ratio, ood_test_ratio}},
            {"zero_shot_test", zero_shot_test},
            {"parallel_size", parallel_size},
            {"sentence_length", {min_len, max_len}},
            {"id_domain", prof(id_domain)},
            {"ood_domain", prof(ood_domain)}};
  }
};

struct IdSets {
  LangPair lang_pair;
  QEDataset train, dev, test;
  ParallelDataset parallel;
};

struct ToyTask {
  QEDataset ood_train, ood_dev, ood_test;
  std::vector<IdSets> id;
  std::vector<QEDataset> zero_shot;  // parallel to spec.zero_shot_pairs
};

class Generator {
 public:
  explicit Generator(const ToyTaskSpec& spec) : spec_(spec) {}

  /// Reference translation of a source word list through the pair's lexicon.
  std::vector<std::string> translate(const LangPair& lp, const std::vector<std::size_t>& words) {
    const auto& lex = lexicon(lp);
    std::vector<std::string> out;
    for (auto w : words) out.push_back(lp.target + std::to_string(lex[w]));
    return out;
  }

  std::vector<std::size_t> sentence(const DomainProfile& p, Rng& rng) const {
    const auto len = spec_.min_len + rng.below(spec_.max_len - spec_.min_len + 1);
    std::vector<std::size_t> words(len);
    for (auto& w : words) w = p.word_begin + rng.below(p.word_end - p.word_begin);
    return words;
  }

  static std::string join(const std::vector<std::string>& toks) {
    std::string s;
    for (const auto& t : toks) s += (s.empty() ? "" : " ") + t;
    return s;
  }

  std::string source_text(const LangPair& lp, const std::vector<std::size_t>& words) const {
    std::vector<std::string> toks;
    for (auto w : words) toks.push_back(lp.source + std::to_string(w));
    return join(toks);
  }

  /// Noise substitutions, deletions and an occasional block move.
  std::vector<std::string> corrupt(const LangPair& lp, std::vector<std::string> ref,
                                   const DomainProfile& p, Rng& rng) const {
    const double rate = rng.uniform() * p.max_corruption;
    std::vector<std::string> out;
    for (auto& tok : ref) {
      const double u = rng.uniform();
      if (u < rate * 0.7) {
        out.push_back(lp.target + "x" + std::to_string(p.noise_begin + rng.below(p.noise_end - p.noise_begin)));
      } else if (u < rate) {
        continue;
      } else {
        out.push_back(std::move(tok));
      }
    }
    if (out.size() >= 4 && rng.uniform() < rate * 0.5) {
      const auto start = rng.below(out.size() - 1);
      const auto len = 1 + rng.below(std::min<std::size_t>(3, out.size() - start - 1));
      std::vector<std::string> block(out.begin() + static_cast<std::ptrdiff_t>(start),
                                     out.begin() + static_cast<std::ptrdiff_t>(start + len));
      out.erase(out.begin() + static_cast<std::ptrdiff_t>(start),
                out.begin() + static_cast<std::ptrdiff_t>(start + len));
      const auto dest = rng.below(out.size() + 1);
      out.insert(out.begin() + static_cast<std::ptrdiff_t>(dest), block.begin(), block.end());
    }
    if (out.empty()) out.push_back(lp.target + "x" + std::to_string(p.noise_begin));
    return out;
  }

  QESample qe_sample(const LangPair& lp, Domain d, Rng& rng) {
    const auto& p = d == Domain::ID ? spec_.id_domain : spec_.ood_domain;
    const auto words = sentence(p, rng);
    const auto ref = translate(lp, words);
    const auto hyp = join(corrupt(lp, ref, p, rng));
    const double label = metrics::ter_sentence(hyp, join(ref)).score();
    return {source_text(lp, words), hyp, label, lp, d, Origin::authentic};
  }

  QEDataset qe_set(const LangPair& lp, Domain d, std::size_t n, std::uint64_t salt) {
    Rng rng(derive_seed(spec_.seed, salt));
    QEDataset out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(qe_sample(lp, d, rng));
    return out;
  }

  ParallelDataset parallel(const LangPair& lp, std::size_t n, std::uint64_t salt) {
    Rng rng(derive_seed(spec_.seed, salt));
    ParallelDataset out;
    for (std::size_t i = 0; i < n; ++i) {
      const auto words = sentence(spec_.id_domain, rng);
      out.push_back({source_text(lp, words), join(translate(lp, words)), lp});
    }
    return out;
  }

 private:
  const std::vector<std::size_t>& lexicon(const LangPair& lp) {
    auto it = lexicons_.find(lp.str());
    if (it != lexicons_.end()) return it->second;
    Fingerprint fp;
    fp.text(lp.str());
    return lexicons_[lp.str()] = permutation(1000, derive_seed(spec_.seed, fp.value()));
  }

  ToyTaskSpec spec_;
  std::map<std::string, std::vector<std::size_t>> lexicons_;
};

inline ToyTask generate(const ToyTaskSpec& spec) {
  if (spec.id_domain.word_end > 1000 || spec.ood_domain.word_end > 1000)
    throw ValidationError("toy task word ranges must stay below 1000");
  Generator gen(spec);
  ToyTask task;
  std::uint64_t salt = 1;
  const auto ood = gen.qe_set(spec.ood_pair, Domain::OOD, spec.ood_total, salt++);
  SplitSpec ood_split{1.0 - spec.ood_dev_ratio - spec.ood_test_ratio, spec.ood_dev_ratio,
                      spec.ood_test_ratio, spec.seed, true};
  auto parts = split(ood, ood_split);
  task.ood_train = std::move(parts.train);
  task.ood_dev = std::move(parts.dev);
  task.ood_test = std::move(parts.test);

  const std::size_t id_total = spec.id_train + spec.id_dev + spec.id_test;
  for (const auto& lp : spec.id_pairs) {
    const auto all = gen.qe_set(lp, Domain::ID, id_total, salt++);
    SplitSpec s{0, static_cast<double>(spec.id_dev) / static_cast<double>(id_total),
                static_cast<double>(spec.id_test) / static_cast<double>(id_total), spec.seed, true};
    s.train = 1.0 - s.dev - s.test;
    auto p = split(all, s);
    task.id.push_back({lp, std::move(p.train), std::move(p.dev), std::move(p.test),
                       gen.parallel(lp, spec.parallel_size, 1000 + salt)});
  }
  for (const auto& lp : spec.zero_shot_pairs)
    task.zero_shot.push_back(gen.qe_set(lp, Domain::ID, spec.zero_shot_test, salt++));
  return task;
}

/// Lays the task out as QE triplet files and parallel text files:
/// ood/{train,dev,test}.tsv, id/<lp>/{train,dev,test}.tsv, id/<lp>/parallel.{src,ref},
/// zeroshot/<lp>/test.tsv and task.json.
inline void write(const ToyTask& task, const ToyTaskSpec& spec, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  auto put = [](const fs::path& p, const QEDataset& d) {
    fs::create_directories(p.parent_path());
    write_qe_tsv(p, d);
  };
  put(dir / "ood" / "train.tsv", task.ood_train);
  put(dir / "ood" / "dev.tsv", task.ood_dev);
  put(dir / "ood" / "test.tsv", task.ood_test);
  for (const auto& s : task.id) {
    const auto base = dir / "id" / s.lang_pair.str();
    put(base / "train.tsv", s.train);
    put(base / "dev.tsv", s.dev);
    put(base / "test.tsv", s.test);
    std::ofstream src(base / "parallel.src"), ref(base / "parallel.ref");
    for (const auto& p : s.parallel) {
      src << p.src << '\n';
      ref << p.ref << '\n';
    }
  }
  for (std::size_t k = 0; k < task.zero_shot.size(); ++k)
    put(dir / "zeroshot" / spec.zero_shot_pairs[k].str() / "test.tsv", task.zero_shot[k]);
  std::ofstream meta(dir / "task.json");
  meta << spec.to_json().dump(2) << '\n';
}

}  // namespace qeforge::toytask
