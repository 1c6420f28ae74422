#pragma once

// Declarative experiment configuration. Parsing is strict: unknown keys are
// errors, every default is filled in, and relative paths resolve against the
// config file's directory.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "qeforge/augment.hpp"
#include "qeforge/corpus.hpp"
#include "qeforge/error.hpp"
#include "qeforge/hash.hpp"
#include "qeforge/trainer.hpp"

namespace qeforge::config {

namespace fs = std::filesystem;
using nlohmann::json;
using trainer::StepConfig;
using trainer::StepId;

inline constexpr std::string_view kOutputEnv = "QEFORGE_OUT";
inline constexpr std::string_view kDefaultOutput = "qeforge_out";

struct DatasetDecl {
  LangPair lang_pair;
  Domain domain = Domain::ID;
  fs::path train, dev, test;
  fs::path data;                   // single file split on load, instead of train/dev/test
  std::optional<SplitSpec> split;
  fs::path parallel_src, parallel_ref;  // ID pairs only; used by Approach 2

  bool has_parallel() const { return !parallel_src.empty(); }
};

struct SynthesisDecl {
  std::size_t n = 0;        // 0: the whole parallel corpus, rounded down to even
  std::size_t portion = 0;  // 0: all of S2
  std::uint64_t seed = 8;
  augment::MTConfig mt;
};

struct Variant {
  modeling::TagMode tag_mode = modeling::TagMode::NOTAG;
  augment::Approach approach = augment::Approach::DAG1;

  friend bool operator==(const Variant&, const Variant&) = default;
};

struct ExperimentConfig {
  fs::path output_dir = kDefaultOutput;
  std::uint64_t seed = 8;
  trainer::ModelSpec model;
  std::optional<DatasetDecl> ood;
  std::vector<DatasetDecl> id, zero_shot;
  augment::Approach approach = augment::Approach::DAG1;
  double ood_ratio = 1.0;
  bool synthetic_only = false;
  SynthesisDecl synthesis;
  StepConfig step1 = StepConfig::defaults(StepId::step1);
  StepConfig step2 = StepConfig::defaults(StepId::step2);
  StepConfig step3 = StepConfig::defaults(StepId::step3);
  StepConfig baseline = baseline_defaults();
  modeling::TagMode tag_mode = modeling::TagMode::NOTAG;
  std::vector<Variant> variants{{}};
  trainer::ReuseMode reuse = trainer::ReuseMode::automatic;
  bool fixed_clock = false;       // "clock": "fixed" zeroes every wall-clock reading
  Domain ood_test_tag = Domain::OOD;

  static StepConfig baseline_defaults() {
    auto c = StepConfig::defaults(StepId::step3);
    c.step_id = StepId::baseline;
    return c;
  }

  json to_json() const;

  /// Hash of the normalized config. The output directory is not part of it.
  std::string fingerprint() const { return Fingerprint().text(to_json().dump()).hex(); }
};

// ---------------------------------------------------------------------------
// Strict readers

inline void expect_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError("config: " + where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || k == a;
    if (!ok) throw ValidationError("config: unknown key '" + k + "' in " + where);
  }
}

template <typename T>
void read(const json& j, std::string_view key, T& out, const std::string& where) {
  const std::string k(key);
  if (!j.contains(k)) return;
  try {
    out = j.at(k).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config: " + where + "." + k + " has the wrong type");
  }
}

inline fs::path read_path(const json& j, std::string_view key, const fs::path& base, const std::string& where) {
  std::string s;
  read(j, key, s, where);
  if (s.empty()) return {};
  fs::path p(s);
  return p.is_absolute() ? p.lexically_normal() : (base / p).lexically_normal();
}

inline void read_optimizer(const json& j, modeling::OptimizerConfig& o, const std::string& where) {
  expect_keys(j, {"lr", "beta1", "beta2", "eps", "weight_decay", "clip_norm"}, where);
  read(j, "lr", o.lr, where);
  read(j, "beta1", o.beta1, where);
  read(j, "beta2", o.beta2, where);
  read(j, "eps", o.eps, where);
  read(j, "weight_decay", o.weight_decay, where);
  read(j, "clip_norm", o.clip_norm, where);
}

inline void read_step(const json& j, StepConfig& s, const std::string& where) {
  expect_keys(j, {"eval_interval", "patience", "max_updates", "batch_size", "seed", "optimizer"}, where);
  read(j, "eval_interval", s.eval_interval, where);
  read(j, "patience", s.patience, where);
  read(j, "max_updates", s.max_updates, where);
  read(j, "batch_size", s.batch_size, where);
  read(j, "seed", s.seed, where);
  if (j.contains("optimizer")) read_optimizer(j.at("optimizer"), s.optimizer, where + ".optimizer");
}

inline json step_json(const StepConfig& s) {
  return {{"eval_interval", s.eval_interval}, {"patience", s.patience}, {"max_updates", s.max_updates},
          {"batch_size", s.batch_size},       {"seed", s.seed},         {"optimizer", s.optimizer}};
}

inline DatasetDecl read_dataset(const json& j, Domain domain, const fs::path& base, const std::string& where,
                                std::uint64_t seed, bool zero_shot) {
  expect_keys(j, {"lang_pair", "train", "dev", "test", "data", "split", "parallel_src", "parallel_ref"}, where);
  DatasetDecl d;
  d.domain = domain;
  std::string lp;
  read(j, "lang_pair", lp, where);
  if (lp.empty()) throw ValidationError("config: " + where + ".lang_pair is required");
  d.lang_pair = LangPair::parse(lp);
  d.train = read_path(j, "train", base, where);
  d.dev = read_path(j, "dev", base, where);
  d.test = read_path(j, "test", base, where);
  d.data = read_path(j, "data", base, where);
  d.parallel_src = read_path(j, "parallel_src", base, where);
  d.parallel_ref = read_path(j, "parallel_ref", base, where);
  if (d.parallel_src.empty() != d.parallel_ref.empty())
    throw ValidationError("config: " + where + " needs both parallel_src and parallel_ref");
  if (j.contains("split")) {
    const auto& s = j.at("split");
    expect_keys(s, {"train", "dev", "test", "seed", "shuffle"}, where + ".split");
    SplitSpec spec;
    spec.seed = seed;
    read(s, "train", spec.train, where + ".split");
    read(s, "dev", spec.dev, where + ".split");
    read(s, "test", spec.test, where + ".split");
    read(s, "seed", spec.seed, where + ".split");
    read(s, "shuffle", spec.shuffle, where + ".split");
    spec.validate();
    d.split = spec;
  }
  if (zero_shot) {
    if (d.test.empty() && d.data.empty()) throw ValidationError("config: " + where + " needs a test file");
    if (!d.train.empty() || !d.dev.empty())
      throw ValidationError("config: " + where + " is a zero-shot test set and takes no train/dev files");
  } else if (!d.data.empty()) {
    if (!d.train.empty() || !d.dev.empty() || !d.test.empty())
      throw ValidationError("config: " + where + " sets both data and train/dev/test");
    if (!d.split) d.split = SplitSpec{0.98, 0.01, 0.01, seed, true};
  } else if (d.train.empty() || d.dev.empty() || d.test.empty()) {
    throw ValidationError("config: " + where + " needs train, dev and test files (or data with a split)");
  }
  return d;
}

inline json dataset_json(const DatasetDecl& d) {
  json j{{"lang_pair", d.lang_pair.str()}};
  auto put = [&](const char* k, const fs::path& p) {
    if (!p.empty()) j[k] = p.string();
  };
  put("train", d.train);
  put("dev", d.dev);
  put("test", d.test);
  put("data", d.data);
  put("parallel_src", d.parallel_src);
  put("parallel_ref", d.parallel_ref);
  if (d.split)
    j["split"] = {{"train", d.split->train}, {"dev", d.split->dev}, {"test", d.split->test},
                  {"seed", d.split->seed}, {"shuffle", d.split->shuffle}};
  return j;
}

inline json ExperimentConfig::to_json() const {
  json datasets{{"id", json::array()}, {"zero_shot", json::array()}};
  if (ood) datasets["ood"] = dataset_json(*ood);
  for (const auto& d : id) datasets["id"].push_back(dataset_json(d));
  for (const auto& d : zero_shot) datasets["zero_shot"].push_back(dataset_json(d));
  json vars = json::array();
  for (const auto& v : variants)
    vars.push_back({{"tag_mode", modeling::to_string(v.tag_mode)}, {"approach", augment::to_string(v.approach)}});
  return {{"seed", seed},
          {"backend", model.backend},
          {"model", {{"hidden_width", model.hidden_width}, {"max_words", model.max_words}, {"lr_scale", model.lr_scale}}},
          {"datasets", datasets},
          {"augmentation",
           {{"approach", augment::to_string(approach)},
            {"ood_ratio", ood_ratio},
            {"synthetic_only", synthetic_only},
            {"synthesis",
             {{"n", synthesis.n},
              {"portion", synthesis.portion},
              {"seed", synthesis.seed},
              {"heldout_size", synthesis.mt.heldout_size},
              {"large_corpus", synthesis.mt.large_corpus},
              {"small_fraction", synthesis.mt.small_fraction},
              {"mt", synthesis.mt.model}}}}},
          {"steps",
           {{"step1", step_json(step1)}, {"step2", step_json(step2)}, {"step3", step_json(step3)},
            {"baseline", step_json(baseline)}}},
          {"tag_mode", modeling::to_string(tag_mode)},
          {"variants", vars},
          {"reuse", trainer::to_string(reuse)},
          {"clock", fixed_clock ? "fixed" : "wall"},
          {"ood_test_tag", qeforge::to_string(ood_test_tag)}};
}

/// Builds a normalized config from parsed JSON. `base` anchors relative paths.
inline ExperimentConfig parse_config(const json& j, const fs::path& base) {
  expect_keys(j,
              {"output_dir", "seed", "backend", "model", "datasets", "augmentation", "steps", "tag_mode", "variants",
               "reuse", "clock", "ood_test_tag"},
              "config");
  ExperimentConfig c;
  read(j, "seed", c.seed, "config");
  c.model.seed = c.seed;
  for (auto* s : {&c.step1, &c.step2, &c.step3, &c.baseline}) s->seed = c.seed;
  c.synthesis.seed = c.seed;
  c.synthesis.mt.model.seed = c.seed;
  c.output_dir = read_path(j, "output_dir", base, "config");
  if (c.output_dir.empty()) c.output_dir = base / kDefaultOutput;
  read(j, "backend", c.model.backend, "config");
  if (!modeling::encoder_registry().count(c.model.backend)) {
    if (modeling::is_translator_backend(c.model.backend))
      throw ValidationError("config: backend '" + c.model.backend + "' is a translator, not a QE encoder");
    throw ValidationError("config: unknown backend '" + c.model.backend + "'");
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    expect_keys(m, {"hidden_width", "max_words", "lr_scale"}, "config.model");
    read(m, "hidden_width", c.model.hidden_width, "config.model");
    read(m, "max_words", c.model.max_words, "config.model");
    read(m, "lr_scale", c.model.lr_scale, "config.model");
    if (!(c.model.lr_scale > 0)) throw ValidationError("config: model.lr_scale must be positive");
  }

  if (j.contains("datasets")) {
    const auto& d = j.at("datasets");
    expect_keys(d, {"ood", "id", "zero_shot"}, "config.datasets");
    if (d.contains("ood")) c.ood = read_dataset(d.at("ood"), Domain::OOD, base, "config.datasets.ood", c.seed, false);
    if (d.contains("id")) {
      if (!d.at("id").is_array()) throw ValidationError("config: datasets.id must be a list");
      for (std::size_t i = 0; i < d.at("id").size(); ++i)
        c.id.push_back(read_dataset(d.at("id")[i], Domain::ID, base,
                                    "config.datasets.id[" + std::to_string(i) + "]", c.seed, false));
    }
    if (d.contains("zero_shot")) {
      if (!d.at("zero_shot").is_array()) throw ValidationError("config: datasets.zero_shot must be a list");
      for (std::size_t i = 0; i < d.at("zero_shot").size(); ++i)
        c.zero_shot.push_back(read_dataset(d.at("zero_shot")[i], Domain::ID, base,
                                           "config.datasets.zero_shot[" + std::to_string(i) + "]", c.seed, true));
    }
  }
  std::vector<std::string> seen;
  for (const auto* list : {&c.id, &c.zero_shot})
    for (const auto& d : *list) {
      if (std::find(seen.begin(), seen.end(), d.lang_pair.str()) != seen.end())
        throw ValidationError("config: language pair " + d.lang_pair.str() + " is declared twice");
      seen.push_back(d.lang_pair.str());
    }

  if (j.contains("augmentation")) {
    const auto& a = j.at("augmentation");
    const std::string w = "config.augmentation";
    expect_keys(a, {"approach", "ood_ratio", "synthetic_only", "synthesis"}, w);
    std::string approach(augment::to_string(c.approach));
    read(a, "approach", approach, w);
    c.approach = augment::parse_approach(approach);
    read(a, "ood_ratio", c.ood_ratio, w);
    if (!(c.ood_ratio > 0)) throw ValidationError("config: augmentation.ood_ratio must be positive");
    read(a, "synthetic_only", c.synthetic_only, w);
    if (a.contains("synthesis")) {
      const auto& s = a.at("synthesis");
      const std::string ws = w + ".synthesis";
      expect_keys(s, {"n", "portion", "seed", "heldout_size", "large_corpus", "small_fraction", "mt"}, ws);
      read(s, "n", c.synthesis.n, ws);
      if (c.synthesis.n % 2 != 0) throw ValidationError("config: augmentation.synthesis.n must be even");
      read(s, "portion", c.synthesis.portion, ws);
      read(s, "seed", c.synthesis.seed, ws);
      read(s, "heldout_size", c.synthesis.mt.heldout_size, ws);
      read(s, "large_corpus", c.synthesis.mt.large_corpus, ws);
      read(s, "small_fraction", c.synthesis.mt.small_fraction, ws);
      if (s.contains("mt")) {
        const auto& m = s.at("mt");
        expect_keys(m,
                    {"hidden_width", "max_len", "max_vocab", "batch_size", "eval_interval", "patience",
                     "max_updates", "seed", "optimizer"},
                    ws + ".mt");
        auto& mc = c.synthesis.mt.model;
        read(m, "hidden_width", mc.hidden_width, ws + ".mt");
        read(m, "max_len", mc.max_len, ws + ".mt");
        read(m, "max_vocab", mc.max_vocab, ws + ".mt");
        read(m, "batch_size", mc.batch_size, ws + ".mt");
        read(m, "eval_interval", mc.eval_interval, ws + ".mt");
        read(m, "patience", mc.patience, ws + ".mt");
        read(m, "max_updates", mc.max_updates, ws + ".mt");
        read(m, "seed", mc.seed, ws + ".mt");
        if (m.contains("optimizer")) read_optimizer(m.at("optimizer"), mc.optimizer, ws + ".mt.optimizer");
      }
      c.synthesis.mt.model.validate();
    }
  }

  if (j.contains("steps")) {
    const auto& s = j.at("steps");
    expect_keys(s, {"step1", "step2", "step3", "baseline"}, "config.steps");
    if (s.contains("step1")) read_step(s.at("step1"), c.step1, "config.steps.step1");
    if (s.contains("step2")) read_step(s.at("step2"), c.step2, "config.steps.step2");
    if (s.contains("step3")) read_step(s.at("step3"), c.step3, "config.steps.step3");
    if (s.contains("baseline")) read_step(s.at("baseline"), c.baseline, "config.steps.baseline");
  }
  std::string text(modeling::to_string(c.tag_mode));
  read(j, "tag_mode", text, "config");
  c.tag_mode = modeling::parse_tag_mode(text);
  for (auto* s : {&c.step1, &c.step2, &c.step3, &c.baseline}) {
    s->tag_mode = c.tag_mode;
    s->validate();
  }
  c.baseline.tag_mode = modeling::TagMode::NOTAG;

  if (j.contains("variants")) {
    const auto& v = j.at("variants");
    if (!v.is_array() || v.empty()) throw ValidationError("config: variants must be a non-empty list");
    c.variants.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const auto w = "config.variants[" + std::to_string(i) + "]";
      expect_keys(v[i], {"tag_mode", "approach"}, w);
      Variant var;
      std::string tm = "NOTAG", ap = "DAG1";
      read(v[i], "tag_mode", tm, w);
      read(v[i], "approach", ap, w);
      var.tag_mode = modeling::parse_tag_mode(tm);
      var.approach = augment::parse_approach(ap);
      if (std::find(c.variants.begin(), c.variants.end(), var) != c.variants.end())
        throw ValidationError("config: " + w + " repeats an earlier variant");
      c.variants.push_back(var);
    }
  } else {
    c.variants = {{c.tag_mode, c.approach}};
  }
  text = std::string(trainer::to_string(c.reuse));
  read(j, "reuse", text, "config");
  c.reuse = trainer::parse_reuse_mode(text);
  text = "wall";
  read(j, "clock", text, "config");
  if (text != "wall" && text != "fixed") throw ValidationError("config: clock must be 'wall' or 'fixed'");
  c.fixed_clock = text == "fixed";
  text = "OOD";
  read(j, "ood_test_tag", text, "config");
  c.ood_test_tag = parse_domain(text);
  return c;
}

/// Every referenced input file; throws listing all that are missing.
inline void check_paths(const ExperimentConfig& c) {
  std::vector<std::string> missing;
  auto need = [&](const fs::path& p) {
    if (!p.empty() && !fs::is_regular_file(p)) missing.push_back(p.string());
  };
  auto decl = [&](const DatasetDecl& d) {
    for (const auto* p : {&d.train, &d.dev, &d.test, &d.data, &d.parallel_src, &d.parallel_ref}) need(*p);
  };
  if (c.ood) decl(*c.ood);
  for (const auto& d : c.id) decl(d);
  for (const auto& d : c.zero_shot) decl(d);
  if (!missing.empty()) {
    std::string msg = "config: missing dataset files:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw ValidationError(msg);
  }
}

inline ExperimentConfig validate_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path.string() + " does not parse: " + e.what());
  }
  auto c = parse_config(j, fs::absolute(path).parent_path());
  check_paths(c);
  return c;
}

/// QEFORGE_OUT, when set and non-empty, replaces the configured output directory.
inline fs::path output_dir(const ExperimentConfig& c) {
  if (const char* env = std::getenv(std::string(kOutputEnv).c_str()); env && *env) return fs::path(env);
  return c.output_dir;
}

}  // namespace qeforge::config
