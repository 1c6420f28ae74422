#pragma once

// Test-set scoring, prediction dump files, and the report tables built from
// them. Reports are computed from the dump files alone.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "qeforge/corpus.hpp"
#include "qeforge/error.hpp"
#include "qeforge/metrics/correlation.hpp"
#include "qeforge/trainer.hpp"

namespace qeforge::report {

using modeling::TagMode;
using trainer::Checkpoint;

/// Two decimals, ties to even, never "-0.00".
inline std::string format_score(double v) {
  double r = metrics::round_half_even(v, 2);
  if (r == 0.0) r = 0.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", r);
  return buf;
}

inline std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// ---------------------------------------------------------------------------
// Scoring

/// Rescaled Pearson of predictions against gold. An undefined correlation is
/// reported with the model it came from.
inline double score_predictions(std::span<const double> pred, std::span<const double> gold,
                                std::string_view model_id) {
  try {
    return metrics::pearson(pred, gold).rescaled;
  } catch (const ValidationError&) {
    throw;
  } catch (const Error& e) {
    throw Error(std::string(e.what()) + " (model " + std::string(model_id) + ")");
  }
}

struct Evaluation {
  std::string model_id;
  double pearson = 0.0;
  std::vector<double> gold, predictions;
};

inline Evaluation evaluate(const modeling::QEModel& model, std::span<const QESample> test, TagMode mode,
                           const std::string& model_id) {
  if (test.empty()) throw ValidationError("evaluate: empty test set");
  if (model.empty()) throw ValidationError("evaluate: model " + model_id + " is not loaded");
  Evaluation ev;
  ev.model_id = model_id;
  ev.predictions = model.forward(trainer::render_all(test, mode));
  for (const auto& s : test) ev.gold.push_back(s.label);
  ev.pearson = score_predictions(ev.predictions, ev.gold, model_id);
  return ev;
}

inline Evaluation evaluate(const Checkpoint& ckpt, std::span<const QESample> test) {
  return evaluate(ckpt.model, test, ckpt.manifest.tag_mode, ckpt.id());
}

// ---------------------------------------------------------------------------
// Prediction dumps: one file per (system, test set), "id<TAB>gold<TAB>pred"
// per line, plus an index describing where each came from.

inline void check_name(std::string_view name, std::string_view what) {
  const bool ok = !name.empty() && name.find("__") == std::string_view::npos &&
                  std::all_of(name.begin(), name.end(), [](char c) {
                    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
                  });
  if (!ok) throw ValidationError("invalid " + std::string(what) + " name '" + std::string(name) + "'");
}

inline std::string dump_filename(std::string_view system, std::string_view testset) {
  check_name(system, "system");
  check_name(testset, "test set");
  return std::string(system) + "__" + std::string(testset) + ".tsv";
}

struct PredictionDump {
  std::string system, testset;
  std::vector<std::string> ids;
  std::vector<double> gold, pred;

  double score() const { return score_predictions(pred, gold, system); }
};

inline std::string format_exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_dump(std::ostream& out, const PredictionDump& d) {
  for (std::size_t i = 0; i < d.pred.size(); ++i)
    out << d.ids[i] << '\t' << format_exact(d.gold[i]) << '\t' << format_exact(d.pred[i]) << '\n';
}

inline PredictionDump read_dump(std::istream& in, std::string system, std::string testset) {
  PredictionDump d{std::move(system), std::move(testset), {}, {}, {}};
  std::string line;
  std::size_t lineno = 0;
  while (detail::getline_stripped(in, line)) {
    ++lineno;
    const auto f = detail::split_tabs(line);
    std::optional<double> g, p;
    if (f.size() == 3) {
      g = detail::parse_double(f[1]);
      p = detail::parse_double(f[2]);
    }
    if (!g || !p) throw ValidationError("malformed prediction line" + detail::at_line(lineno));
    d.ids.emplace_back(f[0]);
    d.gold.push_back(*g);
    d.pred.push_back(*p);
  }
  return d;
}

inline PredictionDump make_dump(std::string system, std::string testset, const Evaluation& ev) {
  PredictionDump d{std::move(system), std::move(testset), {}, ev.gold, ev.predictions};
  for (std::size_t i = 0; i < ev.gold.size(); ++i) d.ids.push_back(std::to_string(i));
  return d;
}

struct DumpEntry {
  std::string system, testset, file, model_id;
  std::size_t n = 0;
  std::vector<std::string> train_lang_pairs, test_lang_pairs;

  nlohmann::json to_json() const {
    return {{"system", system},
            {"testset", testset},
            {"file", file},
            {"model_id", model_id},
            {"n", n},
            {"train_lang_pairs", train_lang_pairs},
            {"test_lang_pairs", test_lang_pairs}};
  }
  static DumpEntry from_json(const nlohmann::json& j) {
    return {j.at("system"), j.at("testset"), j.at("file"), j.at("model_id"), j.at("n"),
            j.at("train_lang_pairs").get<std::vector<std::string>>(),
            j.at("test_lang_pairs").get<std::vector<std::string>>()};
  }
};

/// A directory of prediction dumps with its index.json.
class PredictionStore {
 public:
  explicit PredictionStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::ifstream in(dir_ / "index.json");
    if (!in) return;
    try {
      const auto index = nlohmann::json::parse(in);
      for (const auto& e : index.at("entries")) {
        auto entry = DumpEntry::from_json(e);
        entries_[{entry.system, entry.testset}] = std::move(entry);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("bad prediction index in " + dir_.string() + ": " + e.what());
    }
  }

  const std::filesystem::path& dir() const { return dir_; }

  void add(const PredictionDump& d, const std::string& model_id, std::vector<std::string> train_lang_pairs,
           std::vector<std::string> test_lang_pairs) {
    std::filesystem::create_directories(dir_);
    const auto file = dump_filename(d.system, d.testset);
    {
      std::ofstream out(dir_ / file, std::ios::binary);
      if (!out) throw Error("cannot write " + (dir_ / file).string());
      write_dump(out, d);
    }
    entries_[{d.system, d.testset}] = {d.system,          d.testset, file, model_id, d.pred.size(),
                                       std::move(train_lang_pairs), std::move(test_lang_pairs)};
    save_index();
  }

  bool contains(const std::string& system, const std::string& testset) const {
    return entries_.count({system, testset}) > 0;
  }

  const DumpEntry& entry(const std::string& system, const std::string& testset) const {
    auto it = entries_.find({system, testset});
    if (it == entries_.end())
      throw ValidationError("no predictions for system '" + system + "' on test set '" + testset + "'");
    return it->second;
  }

  PredictionDump load(const std::string& system, const std::string& testset) const {
    const auto& e = entry(system, testset);
    std::ifstream in(dir_ / e.file, std::ios::binary);
    if (!in) throw ValidationError("missing prediction file " + (dir_ / e.file).string());
    auto d = read_dump(in, system, testset);
    if (d.pred.size() != e.n)
      throw ValidationError(e.file + " holds " + std::to_string(d.pred.size()) + " predictions, index says " +
                            std::to_string(e.n));
    return d;
  }

  std::optional<double> score(const std::string& system, const std::string& testset) const {
    if (!contains(system, testset)) return std::nullopt;
    return load(system, testset).score();
  }

  std::vector<DumpEntry> entries() const {
    std::vector<DumpEntry> out;
    for (const auto& [k, e] : entries_) out.push_back(e);
    return out;
  }

 private:
  void save_index() const {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& [k, e] : entries_) list.push_back(e.to_json());
    std::ofstream out(dir_ / "index.json", std::ios::binary);
    out << nlohmann::json{{"entries", list}}.dump(2) << '\n';
  }

  std::filesystem::path dir_;
  std::map<std::pair<std::string, std::string>, DumpEntry> entries_;
};

// ---------------------------------------------------------------------------
// Report tables

struct Cell {
  std::optional<double> value;
  std::string text;                // shown when there is no value
  bool bold = false;               // best in row; printed with a trailing '*'
  std::optional<double> p_value;   // significance cells only

  static Cell number(double v, bool bold = false) { return {v, "", bold, std::nullopt}; }
  static Cell number(std::optional<double> v) { return {v, "", false, std::nullopt}; }
  static Cell mark(std::string t) { return {std::nullopt, std::move(t), false, std::nullopt}; }

  std::string display() const {
    if (!value) return text;
    return format_score(*value) + (bold ? "*" : "");
  }
};

struct Row {
  std::string label;
  std::string kind = "score";  // score, delta, mark
  std::vector<Cell> cells;
  bool rule_before = false;
};

struct EvalReport {
  std::string name, title, corner;
  std::vector<std::string> columns;
  std::vector<Row> rows;
  std::vector<std::string> notes;

  const Row& row(std::string_view label) const {
    for (const auto& r : rows)
      if (r.label == label) return r;
    throw ValidationError(name + ": no row '" + std::string(label) + "'");
  }

  std::size_t column(std::string_view label) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == label) return i;
    throw ValidationError(name + ": no column '" + std::string(label) + "'");
  }

  const Cell& cell(std::string_view row_label, std::string_view col_label) const {
    return row(row_label).cells.at(column(col_label));
  }

  std::optional<double> value(std::string_view row_label, std::string_view col_label) const {
    return cell(row_label, col_label).value;
  }

  std::string to_text() const {
    std::size_t label_w = corner.size();
    for (const auto& r : rows) label_w = std::max(label_w, r.label.size());
    std::vector<std::size_t> w(columns.size());
    for (std::size_t c = 0; c < columns.size(); ++c) {
      w[c] = columns[c].size();
      for (const auto& r : rows)
        if (c < r.cells.size()) w[c] = std::max(w[c], r.cells[c].display().size() + 1);
    }
    std::size_t total = label_w;
    for (auto x : w) total += 2 + x;

    std::ostringstream out;
    out << title << '\n';
    auto pad_left = [](const std::string& s, std::size_t n) { return std::string(n - s.size(), ' ') + s; };
    auto pad_right = [](const std::string& s, std::size_t n) { return s + std::string(n - s.size(), ' '); };
    auto line = [&](const std::string& label, auto&& text_of) {
      std::string s = pad_right(label, label_w);
      for (std::size_t c = 0; c < columns.size(); ++c) {
        std::string t = text_of(c);
        // bold marks hang to the right of the number column
        if (!t.empty() && t.back() != '*' && t.size() < w[c]) t += ' ';
        s += "  " + pad_left(t, w[c]);
      }
      while (!s.empty() && s.back() == ' ') s.pop_back();
      out << s << '\n';
    };
    const std::string rule(total, '-');
    out << rule << '\n';
    line(corner, [&](std::size_t c) { return columns[c]; });
    out << rule << '\n';
    for (const auto& r : rows) {
      if (r.rule_before) out << rule << '\n';
      line(r.label, [&](std::size_t c) { return c < r.cells.size() ? r.cells[c].display() : std::string(); });
    }
    out << rule << '\n';
    for (const auto& n : notes) out << n << '\n';
    return out.str();
  }

  nlohmann::json to_json() const {
    nlohmann::json rows_j = nlohmann::json::array();
    for (const auto& r : rows) {
      nlohmann::json cells = nlohmann::json::array();
      for (const auto& c : r.cells) {
        nlohmann::json j{{"display", c.display()}, {"bold", c.bold}};
        j["value"] = c.value ? nlohmann::json(*c.value) : nlohmann::json(nullptr);
        if (c.p_value) j["p"] = *c.p_value;
        cells.push_back(j);
      }
      rows_j.push_back({{"label", r.label}, {"kind", r.kind}, {"cells", cells}});
    }
    return {{"table", name}, {"title", title}, {"corner", corner}, {"columns", columns},
            {"rows", rows_j},  {"notes", notes}};
  }
};

/// Model score against a reference score, and optionally against an
/// OOD-only model.
struct DeltaReport {
  double model = 0.0, baseline = 0.0, delta = 0.0;
  std::optional<double> ood, ood_delta;
};

inline DeltaReport delta_report(double model, double baseline, std::optional<double> ood = std::nullopt) {
  DeltaReport d{model, baseline, model - baseline, ood, std::nullopt};
  if (ood) d.ood_delta = model - *ood;
  return d;
}

inline double mean(std::span<const double> v) {
  if (v.empty()) throw ValidationError("mean of an empty row");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Pipeline variants in table column order.
inline constexpr std::array<std::string_view, 4> kVariants{"notag-dag1", "notag-dag2", "tag-dag1", "tag-dag2"};
inline constexpr std::array<std::string_view, 4> kVariantLabels{"NO TAG DAG 1", "NO TAG DAG 2", "TAG DAG 1",
                                                                "TAG DAG 2"};

inline std::string variant_name(TagMode mode, augment::Approach approach) {
  return std::string(mode == TagMode::TAG ? "tag-" : "notag-") +
         (approach == augment::Approach::DAG1 ? "dag1" : "dag2");
}

struct SystemScores {
  std::string lang_pair;
  std::optional<double> baseline;
  std::array<std::optional<double>, 4> variants;
};

/// Baseline, the four pipeline variants, and the relative gain of the best
/// variant over the baseline.
inline EvalReport main_results_table(std::span<const SystemScores> rows) {
  EvalReport rep;
  rep.name = "main";
  rep.title = "Pearson correlation (x100) per language pair";
  rep.corner = "Language pair";
  rep.columns = {"Baseline"};
  for (auto l : kVariantLabels) rep.columns.emplace_back(l);
  rep.columns.push_back("Increase %");
  for (const auto& s : rows) {
    Row r{upper(s.lang_pair), "score", {Cell::number(s.baseline)}, false};
    std::optional<double> best;
    for (const auto& v : s.variants)
      if (v && (!best || *v > *best)) best = v;
    for (const auto& v : s.variants) r.cells.push_back(Cell::number(v ? std::optional(*v) : std::nullopt));
    for (std::size_t k = 0; k < s.variants.size(); ++k)
      r.cells[k + 1].bold = s.variants[k] && best && *s.variants[k] == *best;
    if (best && s.baseline)
      r.cells.push_back(Cell::number(metrics::increase_pct(*best, *s.baseline)));
    else
      r.cells.push_back(Cell::number(std::nullopt));
    rep.rows.push_back(std::move(r));
  }
  rep.notes = {"* best pipeline variant; Increase % compares it with the baseline."};
  return rep;
}

struct ScoreRow {
  std::string label;
  std::vector<double> scores;  // one per test set
};

struct CrossLingualPair {
  std::string lang_pair;
  std::vector<double> model, baseline;
};

/// Every model on every test set, with the difference to its baseline and
/// a row average.
inline EvalReport crosslingual_matrix(std::span<const std::string> test_sets,
                                      std::span<const CrossLingualPair> pairs,
                                      std::span<const ScoreRow> extra = {}) {
  EvalReport rep;
  rep.name = "crosslingual";
  rep.title = "Pearson correlation (x100) of each model on every test set";
  rep.corner = "Model";
  for (const auto& t : test_sets) rep.columns.push_back(upper(t));
  rep.columns.push_back("AVG");
  auto check = [&](const std::vector<double>& v, const std::string& what) {
    if (v.size() != test_sets.size())
      throw ValidationError("crosslingual: " + what + " has " + std::to_string(v.size()) + " scores for " +
                            std::to_string(test_sets.size()) + " test sets");
  };
  auto score_row = [&](std::string label, const std::vector<double>& v, std::string kind, bool bold_avg) {
    Row r{std::move(label), std::move(kind), {}, false};
    for (double x : v) r.cells.push_back(Cell::number(x));
    r.cells.push_back(Cell::number(mean(v), bold_avg));
    return r;
  };
  for (const auto& p : pairs) {
    const auto lp = upper(p.lang_pair);
    check(p.model, lp);
    check(p.baseline, "baseline " + lp);
    std::vector<double> delta;
    for (std::size_t i = 0; i < p.model.size(); ++i) delta.push_back(delta_report(p.model[i], p.baseline[i]).delta);
    rep.rows.push_back(score_row("Baseline " + lp, p.baseline, "score", false));
    rep.rows.back().rule_before = rep.rows.size() > 1;
    rep.rows.push_back(score_row(lp, p.model, "score", false));
    rep.rows.push_back(score_row("Delta " + lp, delta, "delta", true));
  }
  for (const auto& e : extra) {
    check(e.scores, e.label);
    rep.rows.push_back(score_row(e.label, e.scores, "score", false));
    rep.rows.back().rule_before = true;
  }
  rep.notes = {"Delta rows: model minus its baseline; AVG: mean over the test sets (* marks the mean Delta)."};
  return rep;
}

/// Language pairs a model saw during training.
struct TrainingScope {
  std::string model_id;
  std::vector<std::string> lang_pairs;
};

struct TestScope {
  std::string name;
  std::vector<std::string> lang_pairs;
};

/// Throws unless no test set shares a language pair with any training scope.
inline void check_zero_shot(std::span<const TrainingScope> training, std::span<const TestScope> tests) {
  for (const auto& t : tests)
    for (const auto& tlp : t.lang_pairs)
      for (const auto& m : training)
        for (const auto& mlp : m.lang_pairs)
          if (lower(tlp) == lower(mlp))
            throw ValidationError("test set " + t.name + " is not zero-shot: model " + m.model_id +
                                  " was trained on " + lower(mlp));
}

struct ZeroShotRow {
  std::string trained_on, test_set;
  std::optional<double> baseline;
  std::array<std::optional<double>, 4> variants;
};

inline EvalReport zeroshot_table(std::span<const ZeroShotRow> rows, std::span<const TrainingScope> training,
                                 std::span<const TestScope> tests) {
  check_zero_shot(training, tests);
  EvalReport rep;
  rep.name = "zeroshot";
  rep.title = "Zero-shot Pearson correlation (x100) on unseen language pairs";
  rep.corner = "Trained on / test set";
  rep.columns = {"Baseline"};
  for (auto l : kVariantLabels) rep.columns.emplace_back(l);
  std::string last;
  for (const auto& z : rows) {
    Row r{upper(z.trained_on) + " / " + upper(z.test_set), "score", {Cell::number(z.baseline)},
          !last.empty() && last != z.trained_on};
    for (const auto& v : z.variants) r.cells.push_back(Cell::number(v));
    last = z.trained_on;
    rep.rows.push_back(std::move(r));
  }
  return rep;
}

struct OodColumn {
  std::string lang_pair;
  double baseline = 0.0, pipeline = 0.0;
};

/// Models trained only on OOD data: the Step-1 model and the Step-2 models.
struct OodReference {
  double ood = 0.0;
  std::optional<double> dag1, dag2;
};

inline EvalReport ood_table(std::span<const OodColumn> cols, const OodReference& ref) {
  EvalReport rep;
  rep.name = "ood";
  rep.title = "Pearson correlation (x100) on the OOD test set";
  rep.corner = "Trained with";
  for (const auto& c : cols) rep.columns.push_back(upper(c.lang_pair));
  rep.columns.insert(rep.columns.end(), {"OOD", "DAG 1", "DAG 2"});
  Row base{"Baseline", "score", {}, false}, pipe{"Our pipeline", "score", {}, false};
  Row d_base{"Delta Baseline", "delta", {}, true}, d_ood{"Delta OOD", "delta", {}, false};
  for (const auto& c : cols) {
    const auto d = delta_report(c.pipeline, c.baseline, ref.ood);
    base.cells.push_back(Cell::number(c.baseline));
    pipe.cells.push_back(Cell::number(c.pipeline));
    d_base.cells.push_back(Cell::number(d.delta));
    d_ood.cells.push_back(Cell::number(*d.ood_delta, true));
  }
  base.cells.insert(base.cells.end(), {Cell::number(ref.ood), Cell::number(ref.dag1), Cell::number(ref.dag2)});
  for (auto* r : {&pipe, &d_base, &d_ood}) r->cells.resize(rep.columns.size());
  rep.rows = {base, pipe, d_base, d_ood};
  rep.notes = {"Delta OOD compares each pipeline model with the model trained only on OOD data (Step 1)."};
  return rep;
}

struct SignificanceInput {
  std::string lang_pair;
  std::vector<double> gold;
  std::vector<metrics::NamedPredictions> systems;  // baseline first
};

/// Pairwise significance marks: Y when the two systems' correlations with
/// gold differ at p < alpha.
inline EvalReport significance_report(std::span<const SignificanceInput> inputs, double alpha = 0.05,
                                      metrics::SignificanceTest test = metrics::SignificanceTest::williams) {
  EvalReport rep;
  rep.name = "significance";
  rep.title = "Pairwise significance of Pearson differences (p < " + format_score(alpha) + ")";
  rep.corner = "Language pair / model";
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto& in = inputs[k];
    if (in.systems.size() < 2) throw ValidationError("significance: need at least two systems");
    std::vector<std::string> cols;
    for (std::size_t j = 1; j < in.systems.size(); ++j) cols.push_back(in.systems[j].name);
    if (rep.columns.empty()) rep.columns = cols;
    if (cols != rep.columns) throw ValidationError("significance: system lists differ between language pairs");
    const auto grid = metrics::significance_grid(in.gold, in.systems, alpha, test);
    for (std::size_t i = 0; i + 1 < in.systems.size(); ++i) {
      Row r{upper(in.lang_pair) + " " + in.systems[i].name, "mark", {}, k > 0 && i == 0};
      for (std::size_t j = 1; j < in.systems.size(); ++j) {
        if (j <= i) {
          r.cells.push_back(Cell::mark("-"));
          continue;
        }
        const auto* c = grid.find(i, j);
        auto cell = Cell::mark(std::string(1, c->mark()));
        cell.p_value = c->p;
        r.cells.push_back(cell);
      }
      rep.rows.push_back(std::move(r));
    }
  }
  rep.notes = {"Y: significant, N: not significant (Williams test unless stated otherwise)."};
  return rep;
}

/// Timing report in table form.
inline EvalReport timing_table(const trainer::TimingReport& t) {
  EvalReport rep;
  rep.name = "timing";
  rep.title = "Training time per run";
  rep.corner = "Run";
  rep.columns = {"Step", "Seconds", "Hours", "Reused"};
  for (const auto& r : t.rows)
    rep.rows.push_back({r.label, "score",
                        {Cell::mark(trainer::to_string(r.step)), Cell::number(r.seconds),
                         Cell::number(r.seconds / 3600.0), Cell::mark(r.reused ? "yes" : "no")},
                        false});
  rep.rows.push_back({"total", "score",
                      {Cell::mark(""), Cell::number(t.total_seconds()), Cell::number(t.total_seconds() / 3600.0),
                       Cell::mark("")},
                      true});
  return rep;
}

// ---------------------------------------------------------------------------
// Reports from a prediction store. System names follow the conventions below;
// test sets are named by language pair, with "ood" for the OOD test split.

inline std::string baseline_system(const std::string& lp) { return "baseline-" + lp; }
inline std::string pipeline_system(std::string_view variant, const std::string& lp) {
  return std::string(variant) + "-" + lp;
}
inline std::string step1_system(TagMode mode) { return mode == TagMode::TAG ? "step1-tag" : "step1-notag"; }
inline std::string step2_system(std::string_view variant) { return "step2-" + std::string(variant); }
inline constexpr std::string_view kUntrainedSystem = "untrained";
inline constexpr std::string_view kOodTestSet = "ood";

/// ID language pairs: every "baseline-<lp>" system, sorted.
inline std::vector<std::string> id_lang_pairs(const PredictionStore& store) {
  std::set<std::string> out;
  for (const auto& e : store.entries())
    if (e.system.rfind("baseline-", 0) == 0) out.insert(e.system.substr(9));
  return {out.begin(), out.end()};
}

inline EvalReport main_from_store(const PredictionStore& store) {
  std::vector<SystemScores> rows;
  for (const auto& lp : id_lang_pairs(store)) {
    SystemScores s{lp, store.score(baseline_system(lp), lp), {}};
    for (std::size_t k = 0; k < kVariants.size(); ++k) s.variants[k] = store.score(pipeline_system(kVariants[k], lp), lp);
    rows.push_back(s);
  }
  return main_results_table(rows);
}

inline EvalReport crosslingual_from_store(const PredictionStore& store, std::string_view variant = "notag-dag1") {
  const auto lps = id_lang_pairs(store);
  auto row_of = [&](const std::string& system) {
    std::vector<double> v;
    for (const auto& t : lps) {
      auto s = store.score(system, t);
      if (!s) return std::optional<std::vector<double>>();
      v.push_back(*s);
    }
    return std::optional(v);
  };
  std::vector<CrossLingualPair> pairs;
  for (const auto& lp : lps) {
    auto m = row_of(pipeline_system(variant, lp));
    auto b = row_of(baseline_system(lp));
    if (m && b) pairs.push_back({lp, *m, *b});
  }
  std::vector<ScoreRow> extra;
  const auto mode = variant.rfind("tag-", 0) == 0 ? TagMode::TAG : TagMode::NOTAG;
  if (auto s = row_of(step2_system(variant))) extra.push_back({"Step 2", *s});
  if (auto s = row_of(step1_system(mode))) extra.push_back({"Step 1", *s});
  if (auto s = row_of(std::string(kUntrainedSystem))) extra.push_back({"Untrained backend", *s});
  return crosslingual_matrix(lps, pairs, extra);
}

inline EvalReport zeroshot_from_store(const PredictionStore& store) {
  const auto lps = id_lang_pairs(store);
  std::set<std::string> zs;
  for (const auto& e : store.entries())
    if (e.testset != kOodTestSet && std::find(lps.begin(), lps.end(), e.testset) == lps.end()) zs.insert(e.testset);
  std::vector<ZeroShotRow> rows;
  std::vector<TrainingScope> training;
  std::vector<TestScope> tests;
  for (const auto& t : zs) {
    bool any = false;
    for (const auto& e : store.entries())
      if (e.testset == t) {
        training.push_back({e.model_id + " (" + e.system + ")", e.train_lang_pairs});
        if (!any) tests.push_back({t, e.test_lang_pairs});
        any = true;
      }
  }
  for (const auto& lp : lps)
    for (const auto& t : zs) {
      ZeroShotRow r{lp, t, store.score(baseline_system(lp), t), {}};
      for (std::size_t k = 0; k < kVariants.size(); ++k) r.variants[k] = store.score(pipeline_system(kVariants[k], lp), t);
      rows.push_back(r);
    }
  return zeroshot_table(rows, training, tests);
}

inline EvalReport ood_from_store(const PredictionStore& store, std::string_view variant = "notag-dag1") {
  const std::string t(kOodTestSet);
  std::vector<OodColumn> cols;
  for (const auto& lp : id_lang_pairs(store)) {
    auto b = store.score(baseline_system(lp), t);
    auto p = store.score(pipeline_system(variant, lp), t);
    if (b && p) cols.push_back({lp, *b, *p});
  }
  const auto mode = variant.rfind("tag-", 0) == 0 ? TagMode::TAG : TagMode::NOTAG;
  const std::string prefix = mode == TagMode::TAG ? "tag-" : "notag-";
  auto ood = store.score(step1_system(mode), t);
  if (!ood) throw ValidationError("ood report needs predictions of " + step1_system(mode) + " on the OOD test set");
  return ood_table(cols, {*ood, store.score(step2_system(prefix + "dag1"), t),
                          store.score(step2_system(prefix + "dag2"), t)});
}

inline EvalReport significance_from_store(const PredictionStore& store, double alpha = 0.05) {
  std::vector<SignificanceInput> inputs;
  for (const auto& lp : id_lang_pairs(store)) {
    SignificanceInput in{lp, {}, {}};
    std::vector<std::pair<std::string, std::string>> systems{{"Baseline", baseline_system(lp)}};
    for (std::size_t k = 0; k < kVariants.size(); ++k)
      systems.push_back({std::string(kVariantLabels[k]), pipeline_system(kVariants[k], lp)});
    for (const auto& [label, system] : systems) {
      if (!store.contains(system, lp)) continue;
      const auto d = store.load(system, lp);
      if (in.gold.empty()) in.gold = d.gold;
      if (d.gold != in.gold) throw ValidationError("significance: gold labels differ for " + system + " on " + lp);
      in.systems.push_back({label, d.pred});
    }
    if (in.systems.size() >= 2) inputs.push_back(std::move(in));
  }
  return significance_report(inputs, alpha);
}

/// Writes <dir>/<name>.txt and <dir>/<name>.json.
inline void write_report(const EvalReport& rep, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / (rep.name + ".txt"), std::ios::binary) << rep.to_text();
  std::ofstream(dir / (rep.name + ".json"), std::ios::binary) << rep.to_json().dump(2) << '\n';
}

}  // namespace qeforge::report
