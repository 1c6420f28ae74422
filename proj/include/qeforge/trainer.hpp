#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "qeforge/augment.hpp"
#include "qeforge/corpus.hpp"
#include "qeforge/early_stopping.hpp"
#include "qeforge/error.hpp"
#include "qeforge/hash.hpp"
#include "qeforge/log.hpp"
#include "qeforge/metrics/correlation.hpp"
#include "qeforge/modeling.hpp"
#include "qeforge/random.hpp"

namespace qeforge::trainer {

using modeling::QEModel;
using modeling::TagMode;

/// Pipeline position of a training run. Baseline runs stand alone.
enum class StepId { baseline = 0, step1 = 1, step2 = 2, step3 = 3 };

inline std::string to_string(StepId s) {
  return s == StepId::baseline ? "baseline" : std::to_string(static_cast<int>(s));
}

inline StepId parse_step_id(std::string_view s) {
  if (s == "1") return StepId::step1;
  if (s == "2") return StepId::step2;
  if (s == "3") return StepId::step3;
  if (s == "baseline") return StepId::baseline;
  throw ValidationError("unknown step '" + std::string(s) + "' (expected 1, 2, 3 or baseline)");
}

struct StepConfig {
  StepId step_id = StepId::step1;
  std::size_t eval_interval = 1000;
  std::size_t patience = 5;
  std::size_t max_updates = 20000;
  std::size_t batch_size = 16;
  TagMode tag_mode = TagMode::NOTAG;
  std::uint64_t seed = 8;
  modeling::OptimizerConfig optimizer{};

  static StepConfig defaults(StepId step) {
    StepConfig c;
    c.step_id = step;
    c.eval_interval = step == StepId::step1 ? 1000 : 500;
    return c;
  }

  void validate() const {
    if (eval_interval < 1) throw ValidationError("eval_interval must be at least 1");
    if (patience < 1) throw ValidationError("patience must be at least 1");
    if (batch_size < 1) throw ValidationError("batch_size must be at least 1");
    if (max_updates < eval_interval)
      throw ValidationError("max_updates (" + std::to_string(max_updates) +
                            ") must be at least eval_interval (" + std::to_string(eval_interval) + ")");
    optimizer.validate();
  }

  nlohmann::json to_json() const {
    return {{"step_id", to_string(step_id)}, {"eval_interval", eval_interval},
            {"patience", patience},          {"max_updates", max_updates},
            {"batch_size", batch_size},      {"tag_mode", modeling::to_string(tag_mode)},
            {"seed", seed},                  {"optimizer", optimizer}};
  }
};

struct EvalRecord {
  std::size_t update_count = 0;
  double dev_loss = 0.0;
  std::optional<double> dev_pearson;  // rescaled; empty when undefined
  double timestamp = 0.0;             // seconds since the step started

  nlohmann::json to_json() const {
    nlohmann::json j{{"update_count", update_count}, {"dev_loss", dev_loss}, {"timestamp", timestamp}};
    j["dev_pearson"] = dev_pearson ? nlohmann::json(*dev_pearson) : nlohmann::json(nullptr);
    return j;
  }
  static EvalRecord from_json(const nlohmann::json& j) {
    EvalRecord r;
    r.update_count = j.at("update_count");
    r.dev_loss = j.at("dev_loss");
    if (!j.at("dev_pearson").is_null()) r.dev_pearson = j.at("dev_pearson").get<double>();
    r.timestamp = j.value("timestamp", 0.0);
    return r;
  }
};

/// Time source for wall-clock accounting; tests inject a fixed one.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual double seconds() = 0;
};

class SteadyClock final : public Clock {
 public:
  double seconds() override {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
  }
};

/// Advances by a fixed amount on every reading.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(double tick = 0.0) : tick_(tick) {}
  double seconds() override { return now_ += tick_; }

 private:
  double tick_, now_ = 0.0;
};

inline Clock& default_clock() {
  static SteadyClock clock;
  return clock;
}

struct CheckpointManifest {
  std::string id;
  StepId step_id = StepId::step1;
  std::optional<std::string> parent_id;
  std::uint64_t seed = 0;
  std::string data_fingerprint;
  std::vector<EvalRecord> history;
  double wall_seconds = 0.0;
  std::size_t best_update = 0;
  std::size_t updates = 0;
  bool early_stopped = false;
  TagMode tag_mode = TagMode::NOTAG;
  std::vector<std::string> train_lang_pairs;
  nlohmann::json model_config;
  nlohmann::json step_config;

  nlohmann::json to_json() const {
    nlohmann::json h = nlohmann::json::array();
    for (const auto& r : history) h.push_back(r.to_json());
    return {{"id", id},
            {"step_id", to_string(step_id)},
            {"parent_id", parent_id ? nlohmann::json(*parent_id) : nlohmann::json(nullptr)},
            {"seed", seed},
            {"data_fingerprint", data_fingerprint},
            {"eval_history", h},
            {"wall_clock_seconds", wall_seconds},
            {"best_update", best_update},
            {"updates", updates},
            {"early_stopped", early_stopped},
            {"tag_mode", modeling::to_string(tag_mode)},
            {"train_lang_pairs", train_lang_pairs},
            {"model_config", model_config},
            {"step_config", step_config}};
  }

  static CheckpointManifest from_json(const nlohmann::json& j) {
    CheckpointManifest m;
    m.id = j.at("id");
    m.step_id = parse_step_id(j.at("step_id").get<std::string>());
    if (!j.at("parent_id").is_null()) m.parent_id = j.at("parent_id").get<std::string>();
    m.seed = j.at("seed");
    m.data_fingerprint = j.at("data_fingerprint");
    for (const auto& r : j.at("eval_history")) m.history.push_back(EvalRecord::from_json(r));
    m.wall_seconds = j.at("wall_clock_seconds");
    m.best_update = j.at("best_update");
    m.updates = j.at("updates");
    m.early_stopped = j.at("early_stopped");
    m.tag_mode = modeling::parse_tag_mode(j.at("tag_mode").get<std::string>());
    m.train_lang_pairs = j.at("train_lang_pairs").get<std::vector<std::string>>();
    m.model_config = j.at("model_config");
    m.step_config = j.at("step_config");
    return m;
  }
};

struct Checkpoint {
  QEModel model;
  CheckpointManifest manifest;

  const std::string& id() const { return manifest.id; }
};

/// Identity of a checkpoint: lineage, seed, data and parameters. Wall-clock
/// time is deliberately left out so reruns reproduce ids.
inline std::string checkpoint_id(const CheckpointManifest& m, const QEModel& model) {
  Fingerprint fp;
  fp.text("checkpoint").text(to_string(m.step_id)).text(m.parent_id.value_or("-"));
  fp.u64(m.seed).text(m.data_fingerprint).u64(model.parameter_hash());
  for (const auto& t : model.backend().vocabulary().tokens()) fp.text(t);
  return fp.hex();
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto& model = const_cast<QEModel&>(ckpt.model);
  modeling::save_parameters(model.parameters(), dir / "parameters.bin");
  model.backend().vocabulary().save(dir / "vocab.txt");
  std::ofstream out(dir / "manifest.json");
  if (!out) throw Error("cannot write " + (dir / "manifest.json").string());
  out << ckpt.manifest.to_json().dump(2) << '\n';
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw ValidationError("no checkpoint manifest in " + dir.string());
  CheckpointManifest m;
  try {
    m = CheckpointManifest::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("bad checkpoint manifest in " + dir.string() + ": " + e.what());
  }
  auto vocab = modeling::Vocabulary::load(dir / "vocab.txt");
  QEModel model(modeling::make_encoder(m.model_config, std::move(vocab), 0), 0);
  auto groups = model.parameters();
  modeling::load_parameters(groups, dir / "parameters.bin");
  if (checkpoint_id(m, model) != m.id)
    throw ValidationError("checkpoint " + dir.string() + " does not match its manifest id");
  return {std::move(model), std::move(m)};
}

/// Settings for a freshly initialised model.
struct ModelSpec {
  std::string backend = "toy";
  std::size_t hidden_width = 32;
  std::size_t max_words = 4000;
  std::uint64_t seed = 8;
  /// Multiplies StepConfig optimizer lr for this backend.
  double lr_scale = 50.0;

  nlohmann::json to_json() const {
    return {{"backend", backend}, {"hidden_width", hidden_width}, {"max_words", max_words},
            {"seed", seed}, {"lr_scale", lr_scale}};
  }
};

/// Fresh model whose word vocabulary comes from `vocab_texts`. TAG models get
/// the two domain tags appended to the vocabulary.
inline QEModel make_fresh_model(const ModelSpec& spec, TagMode mode,
                                std::span<const std::string> vocab_texts) {
  auto vocab = modeling::base_vocabulary(modeling::build_vocab_spec(vocab_texts, spec.max_words));
  auto backend = modeling::make_encoder(
      {{"backend", spec.backend}, {"hidden_width", spec.hidden_width}}, std::move(vocab), spec.seed);
  if (mode == TagMode::TAG) {
    const std::vector<std::string> tags{std::string(modeling::SpecialTokens::id_tag),
                                        std::string(modeling::SpecialTokens::ood_tag)};
    backend->extend_vocabulary(tags, derive_seed(spec.seed, 0x544147ULL));
  }
  return QEModel(std::move(backend), spec.seed);
}

/// Word texts (sources and targets) of the given datasets, for vocabulary building.
inline std::vector<std::string> texts_of(std::span<const QEDataset> sets) {
  std::vector<std::string> out;
  for (const auto& s : sets)
    for (const auto& x : s) {
      out.push_back(x.src);
      out.push_back(x.tgt);
    }
  return out;
}

struct StepResult {
  Checkpoint best;
  std::vector<EvalRecord> history;
};

inline std::vector<std::string> render_all(std::span<const QESample> data, TagMode mode) {
  std::vector<std::string> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(modeling::render_input(s, mode));
  return out;
}

inline std::string lineage_error(StepId step, const Checkpoint* init) {
  const auto from = init ? "a step-" + to_string(init->manifest.step_id) + " checkpoint" : "no checkpoint";
  return "lineage violation: step " + to_string(step) + " cannot start from " + from;
}

/// One training stage. `init` is the parent checkpoint for steps 2 and 3 and
/// must be null for step 1 and baseline runs, which start from `fresh`.
inline StepResult train_step(const Checkpoint* init, std::optional<QEModel> fresh,
                             std::span<const QESample> train, std::span<const QESample> dev,
                             const StepConfig& cfg, const ModelSpec& spec, Clock& clock = default_clock()) {
  cfg.validate();
  if (train.empty()) throw ValidationError("training set is empty");
  if (dev.empty()) throw ValidationError("dev set is empty");
  const bool needs_parent = cfg.step_id == StepId::step2 || cfg.step_id == StepId::step3;
  if (needs_parent) {
    if (!init || static_cast<int>(init->manifest.step_id) != static_cast<int>(cfg.step_id) - 1)
      throw ValidationError(lineage_error(cfg.step_id, init));
    if (init->manifest.tag_mode != cfg.tag_mode)
      throw ValidationError("tag mode changes between steps (" +
                            std::string(modeling::to_string(init->manifest.tag_mode)) + " then " +
                            std::string(modeling::to_string(cfg.tag_mode)) + ")");
  } else {
    if (init) throw ValidationError(lineage_error(cfg.step_id, init));
    if (!fresh) throw ValidationError("step " + to_string(cfg.step_id) + " needs a fresh model");
  }

  const double start = clock.seconds();
  QEModel model = init ? init->model : std::move(*fresh);
  const auto train_inputs = render_all(train, cfg.tag_mode);
  const auto dev_inputs = render_all(dev, cfg.tag_mode);
  std::vector<double> train_labels, dev_labels;
  for (const auto& s : train) train_labels.push_back(s.label);
  for (const auto& s : dev) dev_labels.push_back(s.label);

  auto opt_cfg = cfg.optimizer;
  opt_cfg.lr *= spec.lr_scale;
  modeling::AdamW opt(opt_cfg);

  StepResult result{{model, {}}, {}};
  std::vector<double> losses;
  std::vector<std::size_t> order;
  std::size_t cursor = 0, epoch = 0, updates = 0;
  bool stopped = false;
  std::vector<std::string> batch;
  std::vector<double> labels;
  const std::size_t batch_size = std::min(cfg.batch_size, train.size());
  while (updates < cfg.max_updates && !stopped) {
    batch.clear();
    labels.clear();
    while (batch.size() < batch_size) {
      if (cursor == order.size()) {
        order = permutation(train.size(), derive_seed(cfg.seed, ++epoch));
        cursor = 0;
      }
      batch.push_back(train_inputs[order[cursor]]);
      labels.push_back(train_labels[order[cursor]]);
      ++cursor;
    }
    model.zero_grad();
    model.accumulate_gradients(batch, labels);
    opt.step(model.parameters());
    ++updates;
    if (updates % cfg.eval_interval != 0) continue;

    const auto preds = model.forward(dev_inputs);
    EvalRecord rec;
    rec.update_count = updates;
    rec.dev_loss = modeling::loss(preds, dev_labels);
    try {
      rec.dev_pearson = metrics::pearson(preds, dev_labels).rescaled;
    } catch (const Error&) {
      rec.dev_pearson.reset();
    }
    rec.timestamp = clock.seconds() - start;
    result.history.push_back(rec);
    losses.push_back(rec.dev_loss);
    if (best_index(losses) == losses.size() - 1) {
      result.best.model = model;
      result.best.manifest.best_update = updates;
    }
    stopped = should_stop(losses, cfg.patience);
  }

  auto& m = result.best.manifest;
  m.step_id = cfg.step_id;
  if (init) m.parent_id = init->id();
  m.seed = cfg.seed;
  m.data_fingerprint = Fingerprint().text(fingerprint(train)).text(fingerprint(dev)).hex();
  m.history = result.history;
  m.wall_seconds = clock.seconds() - start;
  m.updates = updates;
  m.early_stopped = stopped;
  m.tag_mode = cfg.tag_mode;
  for (const auto& lp : lang_pairs(train)) m.train_lang_pairs.push_back(lp.str());
  if (init)
    for (const auto& lp : init->manifest.train_lang_pairs)
      if (std::find(m.train_lang_pairs.begin(), m.train_lang_pairs.end(), lp) == m.train_lang_pairs.end())
        m.train_lang_pairs.push_back(lp);
  m.model_config = result.best.model.backend().config();
  m.step_config = cfg.to_json();
  m.id = checkpoint_id(m, result.best.model);
  log::notice("step " + to_string(cfg.step_id) + ": " + std::to_string(updates) + " updates, best dev loss " +
              std::to_string(losses[best_index(losses)]) + " at update " + std::to_string(m.best_update));
  return result;
}

/// Single-stage training of a fresh model on one language pair's ID data.
inline Checkpoint train_baseline(std::span<const QESample> id_train, std::span<const QESample> id_dev,
                                 StepConfig cfg, const ModelSpec& spec,
                                 std::span<const std::string> vocab_texts, Clock& clock = default_clock()) {
  cfg.step_id = StepId::baseline;
  return train_step(nullptr, make_fresh_model(spec, cfg.tag_mode, vocab_texts), id_train, id_dev, cfg,
                    spec, clock)
      .best;
}

/// Checks parent links and step numbering along a chain of checkpoints.
inline void validate_lineage(std::span<const Checkpoint* const> chain) {
  for (std::size_t i = 0; i < chain.size(); ++i) {
    const auto& m = chain[i]->manifest;
    if (static_cast<int>(m.step_id) != static_cast<int>(i) + 1)
      throw ValidationError("lineage violation: position " + std::to_string(i + 1) + " holds step " +
                            to_string(m.step_id));
    if (i == 0 && m.parent_id) throw ValidationError("lineage violation: step 1 has a parent");
    if (i > 0 && m.parent_id != chain[i - 1]->id())
      throw ValidationError("lineage violation: step " + to_string(m.step_id) + " parent mismatch");
  }
}

enum class ReuseMode { off, automatic, require };

inline ReuseMode parse_reuse_mode(std::string_view s) {
  if (s == "off") return ReuseMode::off;
  if (s == "auto") return ReuseMode::automatic;
  if (s == "require") return ReuseMode::require;
  throw ValidationError("unknown reuse mode '" + std::string(s) + "' (expected off, auto or require)");
}

inline std::string_view to_string(ReuseMode m) {
  return m == ReuseMode::off ? "off" : m == ReuseMode::automatic ? "auto" : "require";
}

struct PipelineData {
  QEDataset ood_train, ood_dev;
  std::vector<QEDataset> id_train, id_dev;  // one per language pair, same order
  std::vector<QEDataset> synthetic;         // used by DAG2
};

struct PipelineConfig {
  StepConfig step1 = StepConfig::defaults(StepId::step1);
  StepConfig step2 = StepConfig::defaults(StepId::step2);
  StepConfig step3 = StepConfig::defaults(StepId::step3);
  TagMode tag_mode = TagMode::NOTAG;
  augment::Approach approach = augment::Approach::DAG1;
  double ood_ratio = 1.0;
  bool synthetic_only = false;
  std::uint64_t seed = 8;
  ModelSpec model;
  ReuseMode reuse = ReuseMode::off;
  std::filesystem::path cache_dir;  // checkpoint cache; trained steps are stored here when set
  StepId until = StepId::step3;     // last step to run
  std::optional<std::size_t> only_pair;  // Step 3 for this index of id_train only
  /// Steps before `until` must come from the cache unless reuse is off.
  bool parents_required = false;
};

struct TimingRow {
  std::string label;
  StepId step = StepId::step1;
  double seconds = 0.0;
  bool reused = false;
};

struct TimingReport {
  std::vector<TimingRow> rows;

  double total_seconds() const {
    double s = 0;
    for (const auto& r : rows) s += r.seconds;
    return s;
  }

  std::string to_text() const {
    std::ostringstream out;
    out << "Training time (hours)\n";
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-24s %-9s %12s %12s %s\n", "run", "step", "seconds", "hours", "");
    out << buf;
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%-24s %-9s %12.3f %12.6f %s\n", r.label.c_str(),
                    to_string(r.step).c_str(), r.seconds, r.seconds / 3600.0, r.reused ? "reused" : "");
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "%-24s %-9s %12.3f %12.6f\n", "total", "", total_seconds(),
                  total_seconds() / 3600.0);
    out << buf;
    return out.str();
  }

  nlohmann::json to_json() const {
    nlohmann::json rows_j = nlohmann::json::array();
    for (const auto& r : rows)
      rows_j.push_back({{"label", r.label}, {"step", to_string(r.step)}, {"seconds", r.seconds},
                        {"hours", r.seconds / 3600.0}, {"reused", r.reused}});
    return {{"rows", rows_j}, {"total_seconds", total_seconds()}};
  }
};

struct PipelineResult {
  Checkpoint ckpt1, ckpt2;
  std::vector<Checkpoint> ckpt3;  // parallel to PipelineData::id_train
  TimingReport timing;
  std::size_t step1_runs = 0, step2_runs = 0, step3_runs = 0;
  std::string key1, key2;  // cache keys of steps 1 and 2
};

/// Cache key for a step: what it trains on, how, and from which parent.
inline std::string step_cache_key(const StepConfig& cfg, const ModelSpec& spec, const std::string& data_fp,
                                  const std::string& parent_key) {
  Fingerprint fp;
  fp.text("step-cache").text(cfg.to_json().dump()).text(spec.to_json().dump());
  fp.text(data_fp).text(parent_key);
  return fp.hex();
}

inline QEDataset step2_dev_set(const PipelineData& data, double ood_ratio, std::uint64_t seed) {
  std::size_t id_dev = 0;
  for (const auto& d : data.id_dev) id_dev += d.size();
  const auto n_ood = std::min<std::size_t>(
      data.ood_dev.size(), static_cast<std::size_t>(std::llround(ood_ratio * static_cast<double>(id_dev))));
  QEDataset out = subsample(data.ood_dev, n_ood, derive_seed(seed, 0x444556ULL));
  for (const auto& d : data.id_dev) out.insert(out.end(), d.begin(), d.end());
  return out;
}

namespace detail {

inline std::optional<Checkpoint> cached(const PipelineConfig& cfg, const std::string& key, StepId step) {
  if (cfg.reuse == ReuseMode::off) return std::nullopt;
  if (cfg.cache_dir.empty())
    throw ValidationError("checkpoint reuse requested but no cache directory is configured");
  const auto dir = cfg.cache_dir / key;
  if (std::filesystem::exists(dir / "manifest.json")) return load_checkpoint(dir);
  if (cfg.reuse == ReuseMode::require || (cfg.parents_required && step < cfg.until))
    throw ValidationError("missing cached checkpoint: expected manifest hash " + key + " under " +
                          cfg.cache_dir.string());
  return std::nullopt;
}

inline void store(const PipelineConfig& cfg, const std::string& key, const Checkpoint& ckpt) {
  if (cfg.cache_dir.empty()) return;
  save_checkpoint(ckpt, cfg.cache_dir / key);
}

}  // namespace detail

/// Step-2 training corpus under the pipeline's augmentation settings.
inline augment::Step2Corpus step2_train_set(const PipelineData& data, const PipelineConfig& cfg) {
  return augment::compose_step2_corpus(data.ood_train, data.id_train, data.synthetic, cfg.approach,
                                       cfg.ood_ratio, cfg.seed, cfg.synthetic_only);
}

/// Steps 1 and 2 once, then Step 3 for every ID language pair from the Step-2 best.
inline PipelineResult run_pipeline(const PipelineData& data, PipelineConfig cfg, Clock& clock = default_clock()) {
  if (data.id_train.size() != data.id_dev.size() || data.id_train.empty())
    throw ValidationError("pipeline needs matching, non-empty ID train and dev lists");
  for (auto* s : {&cfg.step1, &cfg.step2, &cfg.step3}) s->tag_mode = cfg.tag_mode;
  cfg.step1.step_id = StepId::step1;
  cfg.step2.step_id = StepId::step2;
  cfg.step3.step_id = StepId::step3;

  std::vector<QEDataset> vocab_sets{data.ood_train};
  vocab_sets.insert(vocab_sets.end(), data.id_train.begin(), data.id_train.end());
  vocab_sets.insert(vocab_sets.end(), data.synthetic.begin(), data.synthetic.end());
  const auto vocab_texts = texts_of(vocab_sets);
  const std::string vocab_fp = [&] {
    Fingerprint fp;
    for (const auto& t : vocab_texts) fp.text(t);
    return fp.hex();
  }();

  PipelineResult out;
  auto timed = [&](const std::string& label, StepId step, auto&& fn, bool reused) {
    const double t0 = clock.seconds();
    auto r = fn();
    out.timing.rows.push_back({label, step, clock.seconds() - t0, reused});
    return r;
  };

  // Step 1
  const std::string data1 = Fingerprint().text(fingerprint(data.ood_train)).text(fingerprint(data.ood_dev)).hex();
  const std::string key1 = step_cache_key(cfg.step1, cfg.model, data1 + vocab_fp, "");
  out.key1 = key1;
  if (auto c = detail::cached(cfg, key1, StepId::step1)) {
    out.ckpt1 = std::move(*c);
    out.timing.rows.push_back({"step1", StepId::step1, 0.0, true});
  } else {
    out.ckpt1 = timed("step1", StepId::step1, [&] {
      return train_step(nullptr, make_fresh_model(cfg.model, cfg.tag_mode, vocab_texts), data.ood_train,
                        data.ood_dev, cfg.step1, cfg.model, clock).best;
    }, false);
    ++out.step1_runs;
    detail::store(cfg, key1, out.ckpt1);
  }

  if (cfg.until == StepId::step1) return out;

  // Step 2
  const auto train2 = step2_train_set(data, cfg);
  const auto dev2 = step2_dev_set(data, cfg.ood_ratio, cfg.seed);
  const std::string data2 = Fingerprint().text(fingerprint(train2.samples)).text(fingerprint(dev2)).hex();
  const std::string key2 = step_cache_key(cfg.step2, cfg.model, data2, key1);
  out.key2 = key2;
  if (auto c = detail::cached(cfg, key2, StepId::step2); c && c->manifest.parent_id == out.ckpt1.id()) {
    out.ckpt2 = std::move(*c);
    out.timing.rows.push_back({"step2", StepId::step2, 0.0, true});
  } else {
    out.ckpt2 = timed("step2", StepId::step2, [&] {
      return train_step(&out.ckpt1, std::nullopt, train2.samples, dev2, cfg.step2, cfg.model, clock).best;
    }, false);
    ++out.step2_runs;
    detail::store(cfg, key2, out.ckpt2);
  }

  if (cfg.until == StepId::step2) return out;

  // Step 3, one run per language pair.
  if (cfg.only_pair && *cfg.only_pair >= data.id_train.size())
    throw ValidationError("step 3 language pair index out of range");
  for (std::size_t k = 0; k < data.id_train.size(); ++k) {
    if (cfg.only_pair && k != *cfg.only_pair) continue;
    const auto lps = lang_pairs(data.id_train[k]);
    const std::string label = "step3-" + (lps.empty() ? std::to_string(k) : lps.front().str());
    out.ckpt3.push_back(timed(label, StepId::step3, [&] {
      return train_step(&out.ckpt2, std::nullopt, data.id_train[k], data.id_dev[k], cfg.step3, cfg.model,
                        clock).best;
    }, false));
    ++out.step3_runs;
  }
  for (const auto& c3 : out.ckpt3) {
    const Checkpoint* chain[] = {&out.ckpt1, &out.ckpt2, &c3};
    validate_lineage(chain);
  }
  return out;
}

}  // namespace qeforge::trainer
