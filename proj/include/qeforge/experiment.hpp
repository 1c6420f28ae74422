#pragma once

// Experiment runs over an output directory: data splits, TER labelling,
// augmentation, training with a checkpoint cache, evaluation into prediction
// dumps, and reports. The CLI is a thin layer over these functions.

#include <fcntl.h>
#include <spawn.h>
#include <sys/file.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "qeforge/augment.hpp"
#include "qeforge/config.hpp"
#include "qeforge/corpus.hpp"
#include "qeforge/error.hpp"
#include "qeforge/eval_report.hpp"
#include "qeforge/log.hpp"
#include "qeforge/metrics/ter.hpp"
#include "qeforge/toytask.hpp"
#include "qeforge/trainer.hpp"

extern char** environ;

namespace qeforge::experiment {

namespace fs = std::filesystem;
using config::ExperimentConfig;
using config::Variant;
using nlohmann::json;
using trainer::Checkpoint;
using trainer::StepId;

inline constexpr std::string_view kLockFile = ".qeforge.lock";
inline constexpr std::string_view kStampFile = "config.json";

/// Advisory exclusive lock on an output directory, held for the object's lifetime.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& dir) {
    fs::create_directories(dir);
    const auto path = dir / kLockFile;
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error("cannot open lock file " + path.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw Error("output directory " + dir.string() + " is in use by another qeforge process");
    }
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;
  ~OutputLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }

 private:
  int fd_ = -1;
};

/// An output directory bound to one command invocation.
class Workspace {
 public:
  Workspace(fs::path out, std::optional<ExperimentConfig> cfg, json command)
      : out_(std::move(out)), lock_(out_), cfg_(std::move(cfg)), command_(std::move(command)),
        fixed_clock_(0.0) {}

  const fs::path& out() const { return out_; }
  fs::path dir(const fs::path& sub) const { return out_ / sub; }
  bool has_config() const { return cfg_.has_value(); }

  const ExperimentConfig& cfg() const {
    if (!cfg_) throw ValidationError("this command needs --config");
    return *cfg_;
  }

  trainer::Clock& clock() {
    return cfg_ && cfg_->fixed_clock ? static_cast<trainer::Clock&>(fixed_clock_) : trainer::default_clock();
  }

  /// Records the normalized config and the command that produced `d`.
  void stamp(const fs::path& d) const {
    fs::create_directories(d);
    json j{{"experiment", cfg_ ? cfg_->to_json() : json(nullptr)}, {"command", command_}};
    std::ofstream(d / kStampFile, std::ios::binary) << j.dump(2) << '\n';
  }

 private:
  fs::path out_;
  OutputLock lock_;
  std::optional<ExperimentConfig> cfg_;
  json command_;
  trainer::ManualClock fixed_clock_;
};

// ---------------------------------------------------------------------------
// Data

struct PairData {
  LangPair lang_pair;
  QEDataset train, dev, test;
  ParallelDataset parallel;
  const config::DatasetDecl* decl = nullptr;
};

struct TestSet {
  std::string name;
  QEDataset samples;
};

struct ExperimentData {
  bool has_ood = false;
  QEDataset ood_train, ood_dev, ood_test;
  std::vector<PairData> id;
  std::vector<TestSet> zero_shot;

  std::vector<QEDataset> id_train() const {
    std::vector<QEDataset> out;
    for (const auto& p : id) out.push_back(p.train);
    return out;
  }
  std::vector<QEDataset> id_dev() const {
    std::vector<QEDataset> out;
    for (const auto& p : id) out.push_back(p.dev);
    return out;
  }

  /// Vocabulary texts shared by baselines and the untrained backend.
  std::vector<std::string> base_vocab_texts() const {
    std::vector<QEDataset> sets{ood_train};
    for (const auto& p : id) sets.push_back(p.train);
    return trainer::texts_of(sets);
  }

  std::size_t pair_index(const std::string& lp) const {
    for (std::size_t k = 0; k < id.size(); ++k)
      if (id[k].lang_pair.str() == lp) return k;
    throw ValidationError("language pair " + lp + " is not an in-domain pair of this experiment");
  }
};

struct Splits {
  QEDataset train, dev, test;
};

inline Splits load_splits(const config::DatasetDecl& d, Origin origin = Origin::authentic) {
  auto load = [&](const fs::path& p) {
    return p.empty() ? QEDataset{} : load_qe_tsv(p, d.lang_pair, d.domain, origin, LabelScale::auto_detect);
  };
  if (!d.data.empty()) {
    auto parts = split(load(d.data), d.split.value_or(SplitSpec{}));
    return {std::move(parts.train), std::move(parts.dev), std::move(parts.test)};
  }
  return {load(d.train), load(d.dev), load(d.test)};
}

inline ExperimentData load_data(const ExperimentConfig& cfg, bool with_parallel = false) {
  ExperimentData out;
  if (cfg.ood) {
    auto s = load_splits(*cfg.ood);
    out.has_ood = true;
    out.ood_train = std::move(s.train);
    out.ood_dev = std::move(s.dev);
    out.ood_test = std::move(s.test);
  }
  for (const auto& d : cfg.id) {
    auto s = load_splits(d);
    PairData p{d.lang_pair, std::move(s.train), std::move(s.dev), std::move(s.test), {}, &d};
    if (with_parallel && d.has_parallel()) p.parallel = load_parallel(d.parallel_src, d.parallel_ref, d.lang_pair);
    out.id.push_back(std::move(p));
  }
  for (const auto& d : cfg.zero_shot) out.zero_shot.push_back({d.lang_pair.str(), load_splits(d).test});
  return out;
}

inline void save_dataset(const fs::path& dir, const std::string& file, const QEDataset& d) {
  fs::create_directories(dir);
  write_qe_tsv(dir / file, d);
}

/// Writes every declared dataset's train/dev/test split under splits/<name>/.
inline std::vector<std::string> write_splits(Workspace& ws, const ExperimentData& data) {
  std::vector<std::string> names;
  auto put = [&](const std::string& name, const QEDataset* train, const QEDataset* dev, const QEDataset& test) {
    const auto dir = ws.dir("splits") / name;
    json parts = json::object();
    auto one = [&](const char* part, const QEDataset& d) {
      save_dataset(dir, std::string(part) + ".tsv", d);
      parts[part] = DatasetManifest::describe(d, {std::string(part) + ".tsv"}).to_json();
    };
    if (train) one("train", *train);
    if (dev) one("dev", *dev);
    one("test", test);
    std::ofstream(dir / "manifest.json", std::ios::binary) << parts.dump(2) << '\n';
    ws.stamp(dir);
    names.push_back(name);
  };
  if (data.has_ood) put("ood", &data.ood_train, &data.ood_dev, data.ood_test);
  for (const auto& p : data.id) put("id-" + p.lang_pair.str(), &p.train, &p.dev, p.test);
  for (const auto& z : data.zero_shot) put("zeroshot-" + z.name, nullptr, nullptr, z.samples);
  return names;
}

// ---------------------------------------------------------------------------
// TER labelling, optionally through the native batch scorer

inline constexpr std::string_view kNativeEnv = "QEFORGE_TER_NATIVE";
inline constexpr std::string_view kNativeName = "qeforge-ter";

enum class NativeMode { off, on, automatic };

inline NativeMode parse_native_mode(std::string_view s) {
  if (s == "off") return NativeMode::off;
  if (s == "on") return NativeMode::on;
  if (s == "auto") return NativeMode::automatic;
  throw ValidationError("unknown --native value '" + std::string(s) + "' (expected on, off or auto)");
}

/// $QEFORGE_TER_NATIVE when set, else qeforge-ter on PATH.
inline std::optional<fs::path> find_native_scorer() {
  if (const char* env = std::getenv(std::string(kNativeEnv).c_str()); env && *env) {
    fs::path p(env);
    if (::access(p.c_str(), X_OK) == 0) return p;
    return std::nullopt;
  }
  const char* path = std::getenv("PATH");
  if (!path) return std::nullopt;
  std::stringstream ss(path);
  std::string entry;
  while (std::getline(ss, entry, ':')) {
    if (entry.empty()) continue;
    const auto p = fs::path(entry) / kNativeName;
    if (::access(p.c_str(), X_OK) == 0) return p;
  }
  return std::nullopt;
}

struct LabelJob {
  fs::path input, output;
  NativeMode native = NativeMode::off;
  std::size_t workers = 1;
  metrics::TokenizeOptions tokenize;
};

struct LabelOutcome {
  metrics::BatchSummary summary;
  bool native = false;
};

namespace detail {

inline fs::path temp_sibling(const fs::path& target) {
  return target.parent_path() / ("." + target.filename().string() + ".tmp" + std::to_string(::getpid()));
}

inline metrics::BatchSummary summarize_batch_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  metrics::BatchSummary sum;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::size_t ins = 0, del = 0, sub = 0, shft = 0, ref_len = 0;
    if (!(fields >> ins >> del >> sub >> shft >> ref_len))
      throw Error("native scorer wrote a malformed line " + std::to_string(sum.pairs + 1));
    ++sum.pairs;
    sum.total_edits += ins + del + sub + shft;
    sum.total_ref_len += ref_len;
  }
  return sum;
}

inline int spawn_and_wait(const fs::path& exe, const std::vector<std::string>& args) {
  std::vector<char*> argv;
  std::string exe_s = exe.string();
  argv.push_back(exe_s.data());
  std::vector<std::string> copy = args;
  for (auto& a : copy) argv.push_back(a.data());
  argv.push_back(nullptr);
  pid_t pid = 0;
  if (const int rc = ::posix_spawnp(&pid, exe_s.c_str(), nullptr, nullptr, argv.data(), environ); rc != 0)
    throw Error("cannot start native scorer " + exe_s);
  int status = 0;
  if (::waitpid(pid, &status, 0) < 0) throw Error("lost native scorer process");
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  return 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
}

}  // namespace detail

/// Scores input pairs into the batch output format. The output file appears
/// only on success.
inline LabelOutcome run_label_job(const LabelJob& job) {
  if (job.workers < 1) throw ValidationError("--workers must be at least 1");
  if (!fs::is_regular_file(job.input)) throw ValidationError("cannot open " + job.input.string());
  std::optional<fs::path> exe;
  if (job.native != NativeMode::off) {
    exe = find_native_scorer();
    if (!exe && job.native == NativeMode::on)
      throw ValidationError("--native=on but no native scorer found (set " + std::string(kNativeEnv) +
                            " or put " + std::string(kNativeName) + " on PATH)");
  }
  if (job.output.has_parent_path()) fs::create_directories(job.output.parent_path());
  const auto tmp = detail::temp_sibling(job.output);
  LabelOutcome out;
  try {
    if (exe) {
      std::vector<std::string> args{"--input", job.input.string(), "--output", tmp.string(), "--workers",
                                    std::to_string(job.workers)};
      if (!job.tokenize.lowercase) args.push_back("--no-lowercase");
      if (!job.tokenize.keep_punct) args.push_back("--no-punct");
      const int rc = detail::spawn_and_wait(*exe, args);
      if (rc != 0) {
        const std::string msg = "native scorer " + exe->string() + " exited with status " + std::to_string(rc);
        if (rc == 1) throw ValidationError(msg);
        throw Error(msg);
      }
      if (!fs::exists(tmp)) throw Error("native scorer produced no output");
      out.summary = detail::summarize_batch_file(tmp);
      out.native = true;
    } else {
      std::ifstream in(job.input, std::ios::binary);
      const auto scores = metrics::score_batch(in, job.tokenize);
      std::ofstream o(tmp, std::ios::binary);
      if (!o) throw Error("cannot write " + tmp.string());
      out.summary = metrics::write_batch(o, scores);
    }
    fs::rename(tmp, job.output);
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation

inline bool uses_dag2(const ExperimentConfig& cfg) {
  for (const auto& v : cfg.variants)
    if (v.approach == augment::Approach::DAG2) return true;
  return false;
}

/// Writes the Approach-1 concatenation and the Step-2 corpus of each variant.
inline json augment_concat(Workspace& ws, const ExperimentData& data, const std::vector<QEDataset>& synthetic) {
  const auto& cfg = ws.cfg();
  const auto id_train = data.id_train();
  json summary = json::object();
  {
    const auto dir = ws.dir("augment") / "dag1";
    const auto all = augment::dag1_concat(id_train);
    save_dataset(dir, "data.tsv", all);
    DatasetManifest::describe(all, {"data.tsv"}).save(dir / "manifest.json");
    ws.stamp(dir);
    summary["dag1"] = all.size();
  }
  if (!data.has_ood) return summary;
  for (const auto& v : cfg.variants) {
    const auto c = augment::compose_step2_corpus(data.ood_train, id_train, synthetic, v.approach, cfg.ood_ratio,
                                                 cfg.seed, cfg.synthetic_only);
    const std::string name = "step2-" + report::lower(std::string(augment::to_string(v.approach)));
    const auto dir = ws.dir("augment") / name;
    save_dataset(dir, "data.tsv", c.samples);
    auto m = DatasetManifest::describe(c.samples, {"data.tsv"});
    m.extra = {{"id_count", c.id_count}, {"ood_count", c.ood_count}, {"ood_ratio", cfg.ood_ratio}};
    m.save(dir / "manifest.json");
    ws.stamp(dir);
    summary[name] = {{"id", c.id_count}, {"ood", c.ood_count}};
  }
  return summary;
}

/// Synthetic ID triplets per language pair (Approach 2). Reuses synthetic/<lp>/
/// when it was built from the same parallel data and settings.
inline std::vector<QEDataset> ensure_synthetic(Workspace& ws, const ExperimentData& data, bool force = false) {
  const auto& cfg = ws.cfg();
  std::vector<QEDataset> out;
  for (const auto& p : data.id) {
    if (!p.decl || !p.decl->has_parallel()) {
      log::notice("no parallel data for " + p.lang_pair.str() + "; skipping synthesis");
      continue;
    }
    ParallelDataset parallel = p.parallel;
    if (parallel.empty()) parallel = load_parallel(p.decl->parallel_src, p.decl->parallel_ref, p.lang_pair);
    augment::SynthesisPlan plan;
    plan.lang_pair = p.lang_pair;
    plan.n = cfg.synthesis.n ? cfg.synthesis.n : parallel.size() / 2 * 2;
    plan.seed = cfg.synthesis.seed;
    plan.portion = cfg.synthesis.portion ? cfg.synthesis.portion : plan.n / 2;
    plan.validate();
    const std::string key = Fingerprint()
                                .text(plan.to_json().dump())
                                .text(json(cfg.synthesis.mt.model).dump())
                                .u64(cfg.synthesis.mt.heldout_size)
                                .u64(cfg.synthesis.mt.large_corpus)
                                .f64(cfg.synthesis.mt.small_fraction)
                                .text(fingerprint(parallel))
                                .hex();
    const auto dir = ws.dir("synthetic") / p.lang_pair.str();
    bool fresh = true;
    if (!force && fs::exists(dir / "manifest.json")) {
      std::ifstream in(dir / "manifest.json");
      const auto m = json::parse(in, nullptr, false);
      fresh = m.is_discarded() || m.value("extra", json::object()).value("key", "") != key;
    }
    if (fresh) {
      log::notice("training translator for " + p.lang_pair.str());
      const auto halves = augment::make_halves(parallel, plan);
      auto mt = cfg.synthesis.mt;
      const auto trained = augment::train_translator(halves.s1, mt);
      const auto synth = augment::generate_synthetic(*trained.translator, halves.s2, plan);
      augment::save_synthetic(synth, dir);
      std::ifstream in(dir / "manifest.json");
      auto m = DatasetManifest::from_json(json::parse(in));
      m.paths = {"data.tsv"};
      m.extra["key"] = key;
      m.save(dir / "manifest.json");
      std::ofstream(dir / "translator.json", std::ios::binary) << trained.report.to_json().dump(2) << '\n';
      ws.stamp(dir);
    }
    // Always read back from disk so fresh and reused runs see identical labels.
    out.push_back(load_qe_tsv(dir / "data.tsv", p.lang_pair, Domain::ID, Origin::synthetic, LabelScale::fraction));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Timing, merged across commands into timing.json

inline trainer::TimingReport load_timing(const fs::path& file) {
  trainer::TimingReport t;
  std::ifstream in(file);
  if (!in) return t;
  const auto j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.contains("rows")) return t;
  for (const auto& r : j.at("rows"))
    t.rows.push_back({r.at("label").get<std::string>(), trainer::parse_step_id(r.at("step").get<std::string>()),
                      r.at("seconds").get<double>(), r.at("reused").get<bool>()});
  return t;
}

/// A reused (zero-cost) row never replaces the row of a real training run.
inline void merge_timing(Workspace& ws, const std::vector<trainer::TimingRow>& rows) {
  const auto file = ws.out() / "timing.json";
  auto t = load_timing(file);
  for (const auto& r : rows) {
    auto it = std::find_if(t.rows.begin(), t.rows.end(), [&](const auto& x) { return x.label == r.label; });
    if (it == t.rows.end())
      t.rows.push_back(r);
    else if (!r.reused || it->reused)
      *it = r;
  }
  std::ofstream(file, std::ios::binary) << t.to_json().dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Training

inline std::string variant_name(const Variant& v) { return report::variant_name(v.tag_mode, v.approach); }

inline Variant parse_variant(std::string_view name) {
  for (auto mode : {modeling::TagMode::NOTAG, modeling::TagMode::TAG})
    for (auto ap : {augment::Approach::DAG1, augment::Approach::DAG2})
      if (report::variant_name(mode, ap) == name) return {mode, ap};
  throw ValidationError("unknown variant '" + std::string(name) +
                        "' (expected notag-dag1, notag-dag2, tag-dag1 or tag-dag2)");
}

inline void save_system(Workspace& ws, const std::string& system, const Checkpoint& ckpt) {
  const auto dir = ws.dir("checkpoints") / system;
  if (fs::exists(dir)) fs::remove_all(dir);
  trainer::save_checkpoint(ckpt, dir);
  ws.stamp(dir);
}

struct TrainRequest {
  Variant variant;
  StepId until = StepId::step3;
  std::optional<std::string> lang_pair;  // Step 3 for this pair only
  bool parents_required = false;
  std::optional<trainer::ReuseMode> reuse;  // overrides the config
};

/// Runs the pipeline up to `until` and saves every resulting checkpoint under
/// checkpoints/<system>/. Returns the trained system names.
inline std::vector<std::string> train_pipeline(Workspace& ws, const ExperimentData& data,
                                               const std::vector<QEDataset>& synthetic, const TrainRequest& req) {
  const auto& cfg = ws.cfg();
  if (!data.has_ood) throw ValidationError("the pipeline needs an OOD dataset");
  if (data.id.empty()) throw ValidationError("the pipeline needs at least one in-domain dataset");
  trainer::PipelineData pd{data.ood_train, data.ood_dev, data.id_train(), data.id_dev(), synthetic};
  trainer::PipelineConfig pc;
  pc.step1 = cfg.step1;
  pc.step2 = cfg.step2;
  pc.step3 = cfg.step3;
  pc.tag_mode = req.variant.tag_mode;
  pc.approach = req.variant.approach;
  pc.ood_ratio = cfg.ood_ratio;
  pc.synthetic_only = cfg.synthetic_only;
  pc.seed = cfg.seed;
  pc.model = cfg.model;
  pc.reuse = req.reuse.value_or(cfg.reuse);
  pc.cache_dir = ws.dir("cache");
  pc.until = req.until;
  pc.parents_required = req.parents_required;
  if (req.lang_pair) pc.only_pair = data.pair_index(*req.lang_pair);

  const auto vname = variant_name(req.variant);
  auto r = trainer::run_pipeline(pd, pc, ws.clock());

  std::vector<std::string> systems;
  const auto s1 = report::step1_system(req.variant.tag_mode);
  save_system(ws, s1, r.ckpt1);
  systems.push_back(s1);
  if (r.step1_runs) ws.stamp(pc.cache_dir / r.key1);
  if (req.until != StepId::step1) {
    const auto s2 = report::step2_system(vname);
    save_system(ws, s2, r.ckpt2);
    systems.push_back(s2);
    if (r.step2_runs) ws.stamp(pc.cache_dir / r.key2);
  }
  std::vector<std::size_t> pairs;
  for (std::size_t k = 0; k < data.id.size(); ++k)
    if (!pc.only_pair || *pc.only_pair == k) pairs.push_back(k);
  for (std::size_t i = 0; i < r.ckpt3.size(); ++i) {
    const auto sys = report::pipeline_system(vname, data.id[pairs[i]].lang_pair.str());
    save_system(ws, sys, r.ckpt3[i]);
    systems.push_back(sys);
  }

  std::vector<trainer::TimingRow> rows;
  for (auto row : r.timing.rows) {
    if (row.label == "step1")
      row.label = s1;
    else if (row.label == "step2")
      row.label = report::step2_system(vname);
    else if (row.label.rfind("step3-", 0) == 0)
      row.label = report::pipeline_system(vname, row.label.substr(6));
    rows.push_back(row);
  }
  merge_timing(ws, rows);
  return systems;
}

/// Single-stage baselines on each language pair's ID data.
inline std::vector<std::string> train_baselines(Workspace& ws, const ExperimentData& data,
                                                const std::optional<std::string>& lang_pair = std::nullopt,
                                                std::optional<trainer::ReuseMode> reuse_override = std::nullopt) {
  const auto& cfg = ws.cfg();
  if (data.id.empty()) throw ValidationError("baselines need at least one in-domain dataset");
  const auto reuse = reuse_override.value_or(cfg.reuse);
  const auto vocab = data.base_vocab_texts();
  Fingerprint vfp;
  for (const auto& t : vocab) vfp.text(t);
  const auto vocab_fp = vfp.hex();
  std::vector<std::string> systems;
  std::vector<trainer::TimingRow> rows;
  for (const auto& p : data.id) {
    const auto lp = p.lang_pair.str();
    if (lang_pair && *lang_pair != lp) continue;
    auto bcfg = cfg.baseline;
    bcfg.step_id = StepId::baseline;
    bcfg.tag_mode = modeling::TagMode::NOTAG;
    const auto key = trainer::step_cache_key(bcfg, cfg.model, fingerprint(p.train) + fingerprint(p.dev) + vocab_fp,
                                             "baseline");
    const auto cache = ws.dir("cache") / key;
    const auto system = report::baseline_system(lp);
    std::optional<Checkpoint> ckpt;
    if (reuse != trainer::ReuseMode::off && fs::exists(cache / "manifest.json")) ckpt = trainer::load_checkpoint(cache);
    if (ckpt) {
      rows.push_back({system, StepId::baseline, 0.0, true});
    } else {
      if (reuse == trainer::ReuseMode::require)
        throw ValidationError("missing cached checkpoint: expected manifest hash " + key + " under " +
                              ws.dir("cache").string());
      const double t0 = ws.clock().seconds();
      ckpt = trainer::train_baseline(p.train, p.dev, bcfg, cfg.model, vocab, ws.clock());
      rows.push_back({system, StepId::baseline, ws.clock().seconds() - t0, false});
      trainer::save_checkpoint(*ckpt, cache);
      ws.stamp(cache);
    }
    save_system(ws, system, *ckpt);
    systems.push_back(system);
  }
  if (lang_pair && systems.empty()) data.pair_index(*lang_pair);
  merge_timing(ws, rows);
  return systems;
}

// ---------------------------------------------------------------------------
// Evaluation

inline std::vector<std::string> trained_systems(const Workspace& ws) {
  std::vector<std::string> out;
  const auto dir = ws.dir("checkpoints");
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && fs::exists(e.path() / "manifest.json")) out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<TestSet> test_sets(const ExperimentConfig& cfg, const ExperimentData& data) {
  std::vector<TestSet> out;
  for (const auto& p : data.id) out.push_back({p.lang_pair.str(), p.test});
  if (data.has_ood) {
    TestSet t{std::string(report::kOodTestSet), data.ood_test};
    for (auto& s : t.samples) s.domain = cfg.ood_test_tag;
    out.push_back(std::move(t));
  }
  for (const auto& z : data.zero_shot) out.push_back(z);
  return out;
}

/// Evaluates systems on test sets ("all" selects everything) into predictions/.
/// Returns the number of dumps written.
inline std::size_t evaluate_systems(Workspace& ws, const ExperimentData& data, const std::string& system = "all",
                                    const std::string& testset = "all") {
  const auto& cfg = ws.cfg();
  auto systems = trained_systems(ws);
  systems.push_back(std::string(report::kUntrainedSystem));
  if (system != "all") {
    if (std::find(systems.begin(), systems.end(), system) == systems.end())
      throw ValidationError("no trained system '" + system + "' under " + ws.dir("checkpoints").string());
    systems = {system};
  }
  auto sets = test_sets(cfg, data);
  if (testset != "all") {
    auto it = std::find_if(sets.begin(), sets.end(), [&](const TestSet& t) { return t.name == testset; });
    if (it == sets.end()) throw ValidationError("unknown test set '" + testset + "'");
    sets = {*it};
  }
  for (const auto& t : sets)
    if (t.samples.empty()) throw ValidationError("test set '" + t.name + "' is empty");

  report::PredictionStore store(ws.dir("predictions"));
  std::size_t n = 0;
  for (const auto& s : systems) {
    std::optional<Checkpoint> ckpt;
    std::optional<modeling::QEModel> untrained;
    std::string model_id;
    std::vector<std::string> train_lps;
    if (s == report::kUntrainedSystem) {
      untrained = trainer::make_fresh_model(cfg.model, modeling::TagMode::NOTAG, data.base_vocab_texts());
      model_id = "untrained-" + Fingerprint::to_hex(untrained->parameter_hash());
    } else {
      ckpt = trainer::load_checkpoint(ws.dir("checkpoints") / s);
      model_id = ckpt->id();
      train_lps = ckpt->manifest.train_lang_pairs;
    }
    for (const auto& t : sets) {
      const auto ev = ckpt ? report::evaluate(*ckpt, t.samples)
                           : report::evaluate(*untrained, t.samples, modeling::TagMode::NOTAG, model_id);
      std::vector<std::string> test_lps;
      for (const auto& lp : lang_pairs(t.samples)) test_lps.push_back(lp.str());
      store.add(report::make_dump(s, t.name, ev), model_id, train_lps, test_lps);
      ++n;
    }
  }
  ws.stamp(store.dir());
  return n;
}

// ---------------------------------------------------------------------------
// Reports

inline const std::vector<std::string>& report_kinds() {
  static const std::vector<std::string> kinds{"main", "zeroshot", "crosslingual", "ood", "significance", "timing"};
  return kinds;
}

/// Builds and writes one report under reports/. Variant-specific reports are
/// named <kind>-<variant>.
inline report::EvalReport write_report(Workspace& ws, const std::string& kind, const std::string& variant = "notag-dag1",
                                       double alpha = 0.05) {
  parse_variant(variant);
  report::EvalReport rep;
  if (kind == "timing") {
    const auto file = ws.out() / "timing.json";
    if (!fs::exists(file)) throw ValidationError("no timing records under " + ws.out().string());
    rep = report::timing_table(load_timing(file));
    rep.name = "timing";
  } else {
    const report::PredictionStore store(ws.dir("predictions"));
    if (store.entries().empty()) throw ValidationError("no prediction dumps under " + store.dir().string());
    if (kind == "main") {
      rep = report::main_from_store(store);
      rep.name = "main";
    } else if (kind == "zeroshot") {
      rep = report::zeroshot_from_store(store);
      rep.name = "zeroshot";
    } else if (kind == "crosslingual") {
      rep = report::crosslingual_from_store(store, variant);
      rep.name = "crosslingual-" + variant;
    } else if (kind == "ood") {
      rep = report::ood_from_store(store, variant);
      rep.name = "ood-" + variant;
    } else if (kind == "significance") {
      rep = report::significance_from_store(store, alpha);
      rep.name = "significance";
    } else {
      throw ValidationError("unknown report '" + kind + "'");
    }
  }
  const auto dir = ws.dir("reports");
  report::write_report(rep, dir);
  ws.stamp(dir);
  return rep;
}

// ---------------------------------------------------------------------------
// Full experiment

struct RunSummary {
  std::vector<std::string> systems;
  std::size_t dumps = 0;
  std::vector<std::string> reports;
};

/// Synthesis when needed, every variant's pipeline, baselines, evaluation of
/// all systems on all test sets, and every report.
inline RunSummary run_experiment(Workspace& ws) {
  const auto& cfg = ws.cfg();
  const bool dag2 = uses_dag2(cfg);
  const auto data = load_data(cfg, dag2);
  const auto synthetic = dag2 ? ensure_synthetic(ws, data) : std::vector<QEDataset>{};
  RunSummary out;
  for (const auto& v : cfg.variants) {
    TrainRequest req;
    req.variant = v;
    for (auto& s : train_pipeline(ws, data, synthetic, req))
      if (std::find(out.systems.begin(), out.systems.end(), s) == out.systems.end()) out.systems.push_back(s);
  }
  for (auto& s : train_baselines(ws, data)) out.systems.push_back(s);
  out.dumps = evaluate_systems(ws, data);
  for (const auto& kind : report_kinds()) {
    if (kind == "crosslingual" || kind == "ood") {
      for (const auto& v : cfg.variants) out.reports.push_back(write_report(ws, kind, variant_name(v)).name);
    } else if (kind != "zeroshot" || !data.zero_shot.empty()) {
      out.reports.push_back(write_report(ws, kind).name);
    }
  }
  ws.stamp(ws.out());
  return out;
}

// ---------------------------------------------------------------------------
// Toy task presets

inline toytask::ToyTaskSpec toy_preset(const std::string& name, std::uint64_t seed) {
  toytask::ToyTaskSpec spec;
  spec.seed = seed;
  if (name == "small") {
    spec.id_train = 120;
    spec.id_dev = 40;
    spec.id_test = 40;
    spec.ood_total = 1000;
    spec.ood_dev_ratio = spec.ood_test_ratio = 0.1;
    spec.zero_shot_test = 40;
    spec.parallel_size = 200;
  } else if (name != "default") {
    throw ValidationError("unknown toy preset '" + name + "' (expected default or small)");
  }
  return spec;
}

/// Config for the toy task written by make-toy-task; paths are relative to it.
inline json toy_experiment(const toytask::ToyTaskSpec& spec, const std::string& preset,
                           const std::vector<std::string>& variants) {
  json id = json::array(), zs = json::array();
  for (const auto& lp : spec.id_pairs) {
    const auto base = "id/" + lp.str() + "/";
    id.push_back({{"lang_pair", lp.str()},
                  {"train", base + "train.tsv"},
                  {"dev", base + "dev.tsv"},
                  {"test", base + "test.tsv"},
                  {"parallel_src", base + "parallel.src"},
                  {"parallel_ref", base + "parallel.ref"}});
  }
  for (const auto& lp : spec.zero_shot_pairs)
    zs.push_back({{"lang_pair", lp.str()}, {"test", "zeroshot/" + lp.str() + "/test.tsv"}});
  json vars = json::array();
  for (const auto& v : variants) {
    const auto var = parse_variant(v);
    vars.push_back({{"tag_mode", modeling::to_string(var.tag_mode)}, {"approach", augment::to_string(var.approach)}});
  }
  json j{{"seed", spec.seed},
         {"datasets",
          {{"ood",
            {{"lang_pair", spec.ood_pair.str()},
             {"train", "ood/train.tsv"},
             {"dev", "ood/dev.tsv"},
             {"test", "ood/test.tsv"}}},
           {"id", id},
           {"zero_shot", zs}}},
         {"variants", vars}};
  if (preset == "small") {
    j["model"] = {{"hidden_width", 12}};
    j["steps"] = {{"step1", {{"eval_interval", 20}, {"max_updates", 200}, {"patience", 3}}},
                  {"step2", {{"eval_interval", 20}, {"max_updates", 200}, {"patience", 3}}},
                  {"step3", {{"eval_interval", 20}, {"max_updates", 200}, {"patience", 3}}},
                  {"baseline", {{"eval_interval", 20}, {"max_updates", 200}, {"patience", 3}}}};
    j["augmentation"] = {
        {"synthesis", {{"portion", 50}, {"mt", {{"hidden_width", 12}, {"eval_interval", 20}, {"max_updates", 100}}}}}};
  } else {
    // Keeps the DAG2 Step-2 corpus within the OOD training split at ratio 1.0.
    j["augmentation"] = {{"synthesis", {{"portion", 600}}}};
  }
  return j;
}

}  // namespace qeforge::experiment
