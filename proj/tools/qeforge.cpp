// qeforge command-line interface. Exit codes: 0 success, 1 validation error
// (bad flags, config or preconditions), 2 runtime error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "qeforge/config.hpp"
#include "qeforge/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qeforge;

namespace {

/// Flags of the invoked subcommand, recorded next to every artifact.
json command_record(const CLI::App* sub) {
  json opts = json::object();
  for (const auto* o : sub->get_options()) {
    if (o->get_name() == "--help" || o->count() == 0) continue;
    const auto& r = o->results();
    opts[o->get_name()] = r.size() == 1 ? json(r.front()) : json(r);
  }
  return {{"name", sub->get_name()}, {"options", opts}};
}

fs::path default_output() {
  if (const char* env = std::getenv(std::string(config::kOutputEnv).c_str()); env && *env) return env;
  return fs::path(config::kDefaultOutput);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qeforge: domain-adapted translation quality estimation experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  bool quiet = false;
  app.add_option("-c,--config", config_path, "Experiment config (JSON)");
  app.add_flag("-q,--quiet", quiet, "Suppress progress messages");

  auto* validate = app.add_subcommand("validate", "Check a config and print its normalized form");

  auto* split_cmd = app.add_subcommand("data-split", "Write train/dev/test splits");
  std::string split_input, split_lp = "en-de", split_domain = "ID", split_name;
  double r_train = 0.98, r_dev = 0.01, r_test = 0.01;
  std::uint64_t split_seed = 8;
  bool no_shuffle = false;
  split_cmd->add_option("--input", split_input, "QE triplet file to split (default: every dataset in the config)");
  split_cmd->add_option("--lang-pair", split_lp, "Language pair of --input")->capture_default_str();
  split_cmd->add_option("--domain", split_domain, "ID or OOD")->capture_default_str();
  split_cmd->add_option("--name", split_name, "Output name under splits/ (default: input file stem)");
  split_cmd->add_option("--train", r_train)->capture_default_str();
  split_cmd->add_option("--dev", r_dev)->capture_default_str();
  split_cmd->add_option("--test", r_test)->capture_default_str();
  split_cmd->add_option("--seed", split_seed)->capture_default_str();
  split_cmd->add_flag("--no-shuffle", no_shuffle, "Keep file order");

  auto* label = app.add_subcommand("label-ter", "Score hyp<TAB>ref pairs with TER");
  std::string label_input, label_output, native = "off";
  std::size_t workers = 1;
  bool no_lower = false, no_punct = false;
  label->add_option("--input", label_input, "hyp<TAB>ref file")->required();
  label->add_option("--output", label_output, "Output file (default: labels/<input stem>.ter.tsv)");
  label->add_flag("--native{on}", native, "Native scorer: on, off or auto (bare flag means on)")
      ->capture_default_str();
  label->add_option("--workers", workers)->capture_default_str();
  label->add_flag("--no-lowercase", no_lower, "Keep case");
  label->add_flag("--no-punct", no_punct, "Do not split punctuation");

  auto* concat = app.add_subcommand("augment-concat", "Write the Approach-1 concatenation and Step-2 corpora");

  auto* synth = app.add_subcommand("augment-synth", "Build synthetic ID triplets (Approach 2)");
  bool force_synth = false;
  synth->add_flag("--force", force_synth, "Rebuild even when up to date");

  auto* train = app.add_subcommand("train", "Train one pipeline step or the baselines");
  std::string step, variant, train_lp, reuse;
  train->add_option("--step", step, "1, 2, 3 or baseline")->required();
  train->add_option("--variant", variant, "notag-dag1, notag-dag2, tag-dag1 or tag-dag2 (default: first in config)");
  train->add_option("--lang-pair", train_lp, "Step 3 or baseline for this pair only");
  train->add_option("--reuse", reuse, "off, auto or require (default: from config)");

  auto* eval = app.add_subcommand("evaluate", "Write prediction dumps for systems on test sets");
  std::string eval_system = "all", eval_test = "all";
  eval->add_option("--system", eval_system)->capture_default_str();
  eval->add_option("--test-set", eval_test)->capture_default_str();

  auto* rep = app.add_subcommand("report", "Build report tables from prediction dumps");
  std::string kind, rep_variant = "notag-dag1";
  double alpha = 0.05;
  rep->add_option("kind", kind, "main, zeroshot, crosslingual, ood, significance, timing or all")->required();
  rep->add_option("--variant", rep_variant, "Variant for crosslingual and ood")->capture_default_str();
  rep->add_option("--alpha", alpha, "Significance level")->capture_default_str();

  auto* toy = app.add_subcommand("make-toy-task", "Generate the synthetic QE task and a config for it");
  std::string toy_dir, preset = "default";
  std::vector<std::string> toy_variants{"notag-dag1"};
  std::uint64_t toy_seed = 8;
  toy->add_option("--dir", toy_dir)->required();
  toy->add_option("--preset", preset, "default or small")->capture_default_str();
  toy->add_option("--seed", toy_seed)->capture_default_str();
  toy->add_option("--variants", toy_variants)->capture_default_str();

  auto* run = app.add_subcommand("run", "Run the whole experiment: train, evaluate and report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  log::set_quiet(quiet);
  const CLI::App* sub = app.get_subcommands().front();

  try {
    std::optional<config::ExperimentConfig> cfg;
    if (!config_path.empty()) cfg = config::validate_config(config_path);
    auto need_cfg = [&]() -> const config::ExperimentConfig& {
      if (!cfg) throw ValidationError(sub->get_name() + " needs --config");
      return *cfg;
    };
    const fs::path out = cfg ? config::output_dir(*cfg) : default_output();
    auto workspace = [&] { return experiment::Workspace(out, cfg, command_record(sub)); };

    if (sub == validate) {
      const auto& c = need_cfg();
      std::cout << "fingerprint " << c.fingerprint() << "\n" << c.to_json().dump(2) << "\n";
    } else if (sub == toy) {
      const auto spec = experiment::toy_preset(preset, toy_seed);
      const auto j = experiment::toy_experiment(spec, preset, toy_variants);
      toytask::write(toytask::generate(spec), spec, toy_dir);
      std::ofstream(fs::path(toy_dir) / "experiment.json", std::ios::binary) << j.dump(2) << '\n';
      std::cout << (fs::path(toy_dir) / "experiment.json").string() << "\n";
    } else if (sub == label) {
      auto ws = workspace();
      experiment::LabelJob job;
      job.input = label_input;
      job.output = label_output.empty() ? ws.dir("labels") / (fs::path(label_input).stem().string() + ".ter.tsv")
                                        : fs::path(label_output);
      job.native = experiment::parse_native_mode(native);
      job.workers = workers;
      job.tokenize.lowercase = !no_lower;
      job.tokenize.keep_punct = !no_punct;
      const auto r = experiment::run_label_job(job);
      if (label_output.empty()) ws.stamp(job.output.parent_path());
      std::printf("pairs\t%zu\tcorpus_ter\t%.6f\tscorer\t%s\n", r.summary.pairs, r.summary.corpus_ter(),
                  r.native ? "native" : "reference");
    } else if (sub == split_cmd) {
      auto ws = workspace();
      if (!split_input.empty()) {
        SplitSpec spec{r_train, r_dev, r_test, split_seed, !no_shuffle};
        spec.validate();
        const auto lp = LangPair::parse(split_lp);
        const auto data =
            load_qe_tsv(split_input, lp, parse_domain(split_domain), Origin::authentic, LabelScale::auto_detect);
        const auto parts = split(data, spec);
        const auto name = split_name.empty() ? fs::path(split_input).stem().string() : split_name;
        const auto dir = ws.dir("splits") / name;
        json manifest = json::object();
        for (const auto& [part, d] : {std::pair{"train", &parts.train}, {"dev", &parts.dev}, {"test", &parts.test}}) {
          experiment::save_dataset(dir, std::string(part) + ".tsv", *d);
          manifest[part] = DatasetManifest::describe(*d, {std::string(part) + ".tsv"}).to_json();
        }
        std::ofstream(dir / "manifest.json", std::ios::binary) << manifest.dump(2) << '\n';
        ws.stamp(dir);
        std::cout << name << "\t" << parts.train.size() << "\t" << parts.dev.size() << "\t" << parts.test.size()
                  << "\n";
      } else {
        const auto data = experiment::load_data(need_cfg());
        for (const auto& n : experiment::write_splits(ws, data)) std::cout << n << "\n";
      }
    } else if (sub == concat) {
      const auto& c = need_cfg();
      auto ws = workspace();
      const bool dag2 = experiment::uses_dag2(c);
      const auto data = experiment::load_data(c, dag2);
      const auto syn = dag2 ? experiment::ensure_synthetic(ws, data) : std::vector<QEDataset>{};
      std::cout << experiment::augment_concat(ws, data, syn).dump(2) << "\n";
    } else if (sub == synth) {
      const auto& c = need_cfg();
      auto ws = workspace();
      const auto data = experiment::load_data(c, true);
      const auto syn = experiment::ensure_synthetic(ws, data, force_synth);
      for (const auto& s : syn) std::cout << lang_pairs(s).front().str() << "\t" << s.size() << "\n";
    } else if (sub == train) {
      const auto& c = need_cfg();
      const auto step_id = trainer::parse_step_id(step);
      std::optional<trainer::ReuseMode> reuse_mode;
      if (!reuse.empty()) reuse_mode = trainer::parse_reuse_mode(reuse);
      const auto var = variant.empty() ? c.variants.front() : experiment::parse_variant(variant);
      const bool dag2 = experiment::uses_dag2(c) || var.approach == augment::Approach::DAG2;
      auto ws = workspace();
      const auto data = experiment::load_data(c, dag2 && step_id != trainer::StepId::baseline);
      std::optional<std::string> lp;
      if (!train_lp.empty()) lp = LangPair::parse(train_lp).str();
      if (lp && (step_id == trainer::StepId::step1 || step_id == trainer::StepId::step2))
        throw ValidationError("--lang-pair applies to step 3 and baseline only");
      std::vector<std::string> systems;
      if (step_id == trainer::StepId::baseline) {
        systems = experiment::train_baselines(ws, data, lp, reuse_mode);
      } else {
        const auto syn = dag2 ? experiment::ensure_synthetic(ws, data) : std::vector<QEDataset>{};
        experiment::TrainRequest req{var, step_id, lp, true, reuse_mode};
        systems = experiment::train_pipeline(ws, data, syn, req);
      }
      for (const auto& s : systems) std::cout << s << "\n";
    } else if (sub == eval) {
      const auto& c = need_cfg();
      auto ws = workspace();
      const auto data = experiment::load_data(c);
      std::cout << experiment::evaluate_systems(ws, data, eval_system, eval_test) << " prediction dumps\n";
    } else if (sub == rep) {
      auto ws = workspace();
      std::vector<std::string> kinds{kind};
      if (kind == "all") kinds = experiment::report_kinds();
      for (const auto& k : kinds) std::cout << experiment::write_report(ws, k, rep_variant, alpha).to_text() << "\n";
    } else if (sub == run) {
      need_cfg();
      auto ws = workspace();
      const auto r = experiment::run_experiment(ws);
      std::cout << r.systems.size() << " systems, " << r.dumps << " prediction dumps, " << r.reports.size()
                << " reports under " << ws.out().string() << "\n";
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
