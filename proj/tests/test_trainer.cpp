#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "qeforge/toytask.hpp"
#include "qeforge/trainer.hpp"

namespace fs = std::filesystem;
using namespace qeforge;
using namespace qeforge::trainer;

namespace {

bool stop(std::vector<double> v, std::size_t patience) { return should_stop(v, patience); }

toytask::ToyTaskSpec small_spec() {
  toytask::ToyTaskSpec s;
  s.id_train = 120;
  s.id_dev = 40;
  s.id_test = 40;
  s.ood_total = 700;
  s.ood_dev_ratio = s.ood_test_ratio = 0.1;
  s.parallel_size = 10;
  s.zero_shot_test = 10;
  return s;
}

const toytask::ToyTask& small_task() {
  static const auto task = toytask::generate(small_spec());
  return task;
}

ModelSpec small_model() {
  ModelSpec m;
  m.hidden_width = 12;
  return m;
}

StepConfig quick(StepId step, std::size_t interval = 10, std::size_t max_updates = 60) {
  StepConfig c = StepConfig::defaults(step);
  c.eval_interval = interval;
  c.max_updates = max_updates;
  c.patience = 3;
  return c;
}

PipelineData small_data() {
  const auto& t = small_task();
  PipelineData d{t.ood_train, t.ood_dev, {}, {}, {}};
  for (const auto& s : t.id) {
    d.id_train.push_back(s.train);
    d.id_dev.push_back(s.dev);
  }
  return d;
}

PipelineConfig small_pipeline() {
  PipelineConfig c;
  c.step1 = quick(StepId::step1);
  c.step2 = quick(StepId::step2);
  c.step3 = quick(StepId::step3);
  c.model = small_model();
  return c;
}

std::vector<std::string> vocab_texts() {
  const auto& t = small_task();
  return texts_of(std::vector<QEDataset>{t.ood_train, t.id[0].train});
}

fs::path temp_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("qeforge_trainer_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

StepResult step1_run(const StepConfig& cfg, Clock& clock) {
  const auto& t = small_task();
  const auto model = make_fresh_model(small_model(), cfg.tag_mode, vocab_texts());
  return train_step(nullptr, model, t.id[0].train, t.id[0].dev, cfg, small_model(), clock);
}

}  // namespace

TEST(ShouldStop, Examples) {
  EXPECT_TRUE(stop({1.0, 0.9, 0.95, 0.94, 0.93, 0.92, 0.91}, 5));
  EXPECT_FALSE(stop({1.0, 0.9, 0.95, 0.94, 0.93, 0.92}, 5));
  EXPECT_FALSE(stop({5, 4, 3, 2, 1, 0.5, 0.25, 0.1}, 1));
  EXPECT_FALSE(stop({0.5, 0.5, 0.5, 0.5, 0.5}, 5));
  EXPECT_TRUE(stop({0.5, 0.5, 0.5, 0.5, 0.5, 0.5}, 5));
  EXPECT_FALSE(stop({}, 1));
  EXPECT_THROW(stop({1.0}, 0), ValidationError);
}

TEST(ShouldStop, ImprovementWithinToleranceDoesNotCount) {
  EXPECT_TRUE(stop({1.0, 1.0 - 5e-10}, 1));
  EXPECT_FALSE(stop({1.0, 1.0 - 2e-9}, 1));
}

TEST(ShouldStop, MonotoneUnderExtensionsWithoutNewMinimum) {
  Rng rng(8);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t patience = 1 + rng.below(6);
    std::vector<double> losses;
    const std::size_t len = 1 + rng.below(20);
    for (std::size_t i = 0; i < len; ++i) losses.push_back(std::round(rng.uniform() * 20) / 20);
    if (!should_stop(losses, patience)) continue;
    const double best = losses[best_index(losses)];
    // Extend with values that are not a new strict minimum.
    for (int k = 0; k < 5; ++k) {
      losses.push_back(best + std::round(rng.uniform() * 20) / 20);
      ASSERT_TRUE(should_stop(losses, patience)) << "trial " << trial;
    }
  }
}

TEST(StepConfig, DefaultsAndValidation) {
  EXPECT_EQ(StepConfig::defaults(StepId::step1).eval_interval, 1000u);
  EXPECT_EQ(StepConfig::defaults(StepId::step2).eval_interval, 500u);
  EXPECT_EQ(StepConfig::defaults(StepId::step3).eval_interval, 500u);
  EXPECT_EQ(StepConfig::defaults(StepId::step3).patience, 5u);
  PipelineConfig p;
  EXPECT_EQ(p.step1.eval_interval, 1000u);
  EXPECT_EQ(p.step2.eval_interval, 500u);
  EXPECT_EQ(p.step3.eval_interval, 500u);
  auto c = quick(StepId::step1);
  c.eval_interval = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = quick(StepId::step1);
  c.patience = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = quick(StepId::step1, 10, 9);
  EXPECT_THROW(c.validate(), ValidationError);
  EXPECT_EQ(parse_step_id("baseline"), StepId::baseline);
  EXPECT_THROW(parse_step_id("4"), ValidationError);
}

TEST(TrainStep, CadenceBestAndFrozenTrace) {
  ManualClock clock(0.5);
  const auto r = step1_run(quick(StepId::step1, 10, 200), clock);
  ASSERT_FALSE(r.history.empty());
  std::vector<double> losses;
  for (std::size_t i = 0; i < r.history.size(); ++i) {
    EXPECT_EQ(r.history[i].update_count, (i + 1) * 10);
    losses.push_back(r.history[i].dev_loss);
    EXPECT_TRUE(r.history[i].dev_pearson.has_value());
  }
  const auto best = best_index(losses);
  EXPECT_EQ(r.best.manifest.best_update, r.history[best].update_count);
  // The returned model reproduces the best dev loss.
  const auto& dev = small_task().id[0].dev;
  const auto preds = r.best.model.forward(render_all(dev, TagMode::NOTAG));
  std::vector<double> labels;
  for (const auto& s : dev) labels.push_back(s.label);
  EXPECT_DOUBLE_EQ(modeling::loss(preds, labels), losses[best]);
  // Trace frozen from the first run under this seed.
  EXPECT_EQ(r.history.size(), 9u);
  EXPECT_EQ(r.best.manifest.best_update, 60u);
  EXPECT_TRUE(r.best.manifest.early_stopped);
  EXPECT_EQ(r.best.manifest.step_id, StepId::step1);
  EXPECT_FALSE(r.best.manifest.parent_id.has_value());
}

TEST(TrainStep, EarlyStopsOnPlateau) {
  ManualClock clock;
  auto cfg = quick(StepId::step1, 5, 5000);
  cfg.patience = 2;
  cfg.optimizer.lr = 2e-3;  // far too high: dev loss stops improving quickly
  const auto r = step1_run(cfg, clock);
  EXPECT_TRUE(r.best.manifest.early_stopped);
  EXPECT_LT(r.best.manifest.updates, 5000u);
  std::vector<double> losses;
  for (const auto& h : r.history) losses.push_back(h.dev_loss);
  EXPECT_EQ(losses.size() - 1 - best_index(losses), 2u);
}

TEST(TrainStep, MaxUpdatesEqualToIntervalGivesOneEvaluation) {
  ManualClock clock;
  const auto r = step1_run(quick(StepId::step1, 25, 25), clock);
  ASSERT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.history[0].update_count, 25u);
}

TEST(TrainStep, Deterministic) {
  ManualClock c1, c2;
  const auto a = step1_run(quick(StepId::step1), c1), b = step1_run(quick(StepId::step1), c2);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) EXPECT_EQ(a.history[i].dev_loss, b.history[i].dev_loss);
  EXPECT_EQ(a.best.model.parameter_hash(), b.best.model.parameter_hash());
  EXPECT_EQ(a.best.id(), b.best.id());
}

TEST(TrainStep, WallClockComesFromTheClock) {
  ManualClock clock(1.0);
  const auto r = step1_run(quick(StepId::step1, 10, 30), clock);
  // One reading at start, one per evaluation, one at the end.
  EXPECT_EQ(r.best.manifest.wall_seconds, 4.0);
  EXPECT_EQ(r.history.back().timestamp, 3.0);
}

TEST(TrainStep, LineageViolations) {
  ManualClock clock;
  const auto& t = small_task();
  const auto s1 = step1_run(quick(StepId::step1), clock);
  try {
    train_step(&s1.best, std::nullopt, t.id[0].train, t.id[0].dev, quick(StepId::step3), small_model(), clock);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("lineage violation"), std::string::npos);
  }
  EXPECT_THROW(train_step(nullptr, std::nullopt, t.id[0].train, t.id[0].dev, quick(StepId::step2),
                          small_model(), clock),
               ValidationError);
  EXPECT_THROW(train_step(&s1.best, std::nullopt, t.id[0].train, t.id[0].dev, quick(StepId::step1),
                          small_model(), clock),
               ValidationError);
  auto tagged = quick(StepId::step2);
  tagged.tag_mode = TagMode::TAG;
  EXPECT_THROW(train_step(&s1.best, std::nullopt, t.id[0].train, t.id[0].dev, tagged, small_model(), clock),
               ValidationError);
  const auto s2 = train_step(&s1.best, std::nullopt, t.id[0].train, t.id[0].dev, quick(StepId::step2),
                             small_model(), clock);
  EXPECT_EQ(s2.best.manifest.parent_id, s1.best.id());
}

TEST(TrainStep, ConstantDevLabelsLeavePearsonUndefined) {
  ManualClock clock;
  const auto& t = small_task();
  auto dev = t.id[0].dev;
  for (auto& s : dev) s.label = 0.3;
  const auto model = make_fresh_model(small_model(), TagMode::NOTAG, vocab_texts());
  const auto r = train_step(nullptr, model, t.id[0].train, dev, quick(StepId::step1, 10, 20), small_model(), clock);
  ASSERT_EQ(r.history.size(), 2u);
  EXPECT_FALSE(r.history[0].dev_pearson.has_value());
  EXPECT_GE(r.history[0].dev_loss, 0.0);
  EXPECT_THROW(train_step(nullptr, model, QEDataset{}, dev, quick(StepId::step1), small_model(), clock),
               ValidationError);
}

TEST(Checkpoint, SaveLoadRoundTrip) {
  ManualClock clock;
  auto cfg = quick(StepId::step1);
  cfg.tag_mode = TagMode::TAG;
  const auto r = step1_run(cfg, clock);
  const auto dir = temp_dir("ckpt");
  save_checkpoint(r.best, dir / "c1");
  EXPECT_TRUE(fs::exists(dir / "c1" / "parameters.bin"));
  EXPECT_TRUE(fs::exists(dir / "c1" / "vocab.txt"));
  const auto loaded = load_checkpoint(dir / "c1");
  EXPECT_EQ(loaded.id(), r.best.id());
  EXPECT_EQ(loaded.model.parameter_hash(), r.best.model.parameter_hash());
  EXPECT_EQ(loaded.manifest.history.size(), r.history.size());
  EXPECT_EQ(loaded.manifest.tag_mode, TagMode::TAG);
  const auto input = modeling::render_input("en1 en2", "de3", Domain::ID, TagMode::TAG);
  EXPECT_EQ(loaded.model.predict(input), r.best.model.predict(input));

  // A manifest that no longer matches the parameters is rejected.
  auto m = r.best.manifest;
  m.seed += 1;
  std::ofstream(dir / "c1" / "manifest.json") << m.to_json().dump();
  EXPECT_THROW(load_checkpoint(dir / "c1"), ValidationError);
  EXPECT_THROW(load_checkpoint(dir / "missing"), ValidationError);
  fs::remove_all(dir);
}

TEST(Baseline, StandaloneAndDistinctFromStepThree) {
  ManualClock clock;
  const auto& t = small_task();
  const auto base = train_baseline(t.id[0].train, t.id[0].dev, quick(StepId::step3), small_model(),
                                   vocab_texts(), clock);
  EXPECT_EQ(base.manifest.step_id, StepId::baseline);
  EXPECT_EQ(to_string(base.manifest.step_id), "baseline");
  EXPECT_FALSE(base.manifest.parent_id.has_value());

  const auto s1 = step1_run(quick(StepId::step1), clock);
  const auto s2 = train_step(&s1.best, std::nullopt, t.id[0].train, t.id[0].dev, quick(StepId::step2),
                             small_model(), clock);
  const auto s3 = train_step(&s2.best, std::nullopt, t.id[0].train, t.id[0].dev, quick(StepId::step3),
                             small_model(), clock);
  EXPECT_NE(base.model.parameter_hash(), s3.best.model.parameter_hash());
}

TEST(Pipeline, LineageCountsAndTiming) {
  ManualClock clock(1.0);
  const auto r = run_pipeline(small_data(), small_pipeline(), clock);
  EXPECT_FALSE(r.ckpt1.manifest.parent_id.has_value());
  EXPECT_EQ(r.ckpt2.manifest.parent_id, r.ckpt1.id());
  ASSERT_EQ(r.ckpt3.size(), 4u);
  for (const auto& c : r.ckpt3) {
    EXPECT_EQ(c.manifest.parent_id, r.ckpt2.id());
    EXPECT_EQ(c.manifest.step_id, StepId::step3);
  }
  EXPECT_EQ(r.step1_runs, 1u);
  EXPECT_EQ(r.step2_runs, 1u);
  EXPECT_EQ(r.step3_runs, 4u);
  ASSERT_EQ(r.timing.rows.size(), 6u);
  EXPECT_EQ(r.timing.rows[0].label, "step1");
  EXPECT_EQ(r.timing.rows[5].label, "step3-ru-en");
  for (const auto& row : r.timing.rows) EXPECT_GT(row.seconds, 0.0);
  EXPECT_NE(r.timing.to_text().find("step3-en-zh"), std::string::npos);
  EXPECT_EQ(r.timing.to_json()["rows"].size(), 6u);
  // Step 3 runs know every language pair their lineage has seen.
  const auto& lps = r.ckpt3[1].manifest.train_lang_pairs;
  EXPECT_EQ(lps.front(), "en-zh");
  EXPECT_EQ(lps.size(), 4u);
}

TEST(Pipeline, Step2DevSetMixesOodAndAllIdDev) {
  const auto data = small_data();
  const auto dev = step2_dev_set(data, 1.0, 8);
  std::size_t ood = 0;
  for (const auto& s : dev) ood += s.domain == Domain::OOD;
  EXPECT_EQ(ood, data.ood_dev.size());  // capped by the OOD dev size (40 < 160)
  EXPECT_EQ(dev.size() - ood, 160u);
  EXPECT_EQ(step2_dev_set(data, 0.125, 8).size(), 20u + 160u);
}

TEST(Pipeline, ReuseTrainsStepsOneAndTwoOnlyOnce) {
  const auto dir = temp_dir("reuse");
  auto cfg = small_pipeline();
  cfg.reuse = ReuseMode::automatic;
  cfg.cache_dir = dir;
  ManualClock clock;
  const auto first = run_pipeline(small_data(), cfg, clock);
  const auto second = run_pipeline(small_data(), cfg, clock);
  EXPECT_EQ(second.step1_runs, 0u);
  EXPECT_EQ(second.step2_runs, 0u);
  EXPECT_EQ(second.step3_runs, 4u);
  EXPECT_TRUE(second.timing.rows[0].reused);
  EXPECT_EQ(second.ckpt2.id(), first.ckpt2.id());
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(second.ckpt3[k].id(), first.ckpt3[k].id());

  cfg.cache_dir = dir / "empty";
  cfg.reuse = ReuseMode::require;
  try {
    run_pipeline(small_data(), cfg, clock);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("expected manifest hash"), std::string::npos);
  }
  fs::remove_all(dir);
}

TEST(Pipeline, FullRunIsDeterministic) {
  ManualClock c1, c2;
  const auto a = run_pipeline(small_data(), small_pipeline(), c1);
  const auto b = run_pipeline(small_data(), small_pipeline(), c2);
  for (std::size_t k = 0; k < a.ckpt3.size(); ++k) {
    EXPECT_EQ(a.ckpt3[k].id(), b.ckpt3[k].id());
    EXPECT_EQ(a.ckpt3[k].model.parameter_hash(), b.ckpt3[k].model.parameter_hash());
  }
}

TEST(Pipeline, ValidatesLineageChains) {
  ManualClock clock;
  const auto r = run_pipeline(small_data(), small_pipeline(), clock);
  const Checkpoint* good[] = {&r.ckpt1, &r.ckpt2, &r.ckpt3[0]};
  EXPECT_NO_THROW(validate_lineage(good));
  const Checkpoint* skipped[] = {&r.ckpt1, &r.ckpt3[0]};
  EXPECT_THROW(validate_lineage(skipped), ValidationError);
  auto orphan = r.ckpt3[0];
  orphan.manifest.parent_id = r.ckpt1.id();
  const Checkpoint* wrong_parent[] = {&r.ckpt1, &r.ckpt2, &orphan};
  EXPECT_THROW(validate_lineage(wrong_parent), ValidationError);
}

TEST(Pipeline, StopsAfterTheRequestedStep) {
  ManualClock clock;
  auto cfg = small_pipeline();
  cfg.until = StepId::step1;
  const auto one = run_pipeline(small_data(), cfg, clock);
  EXPECT_EQ(one.step1_runs, 1u);
  EXPECT_EQ(one.step2_runs, 0u);
  EXPECT_TRUE(one.ckpt3.empty());
  EXPECT_TRUE(one.key2.empty());
  cfg.until = StepId::step2;
  const auto two = run_pipeline(small_data(), cfg, clock);
  EXPECT_EQ(two.step2_runs, 1u);
  EXPECT_TRUE(two.ckpt3.empty());
  EXPECT_EQ(two.ckpt1.id(), one.ckpt1.id());
  EXPECT_EQ(two.key1, one.key1);
}

TEST(Pipeline, OnlyPairTrainsOneStepThree) {
  ManualClock clock;
  auto cfg = small_pipeline();
  cfg.only_pair = 2;
  const auto r = run_pipeline(small_data(), cfg, clock);
  ASSERT_EQ(r.ckpt3.size(), 1u);
  EXPECT_EQ(r.step3_runs, 1u);
  const auto full = run_pipeline(small_data(), small_pipeline(), clock);
  EXPECT_EQ(r.ckpt3[0].id(), full.ckpt3[2].id());
  cfg.only_pair = 4;
  EXPECT_THROW(run_pipeline(small_data(), cfg, clock), ValidationError);
}

TEST(Pipeline, RequiredParentsMustBeCached) {
  const auto dir = temp_dir("parents");
  ManualClock clock;
  auto cfg = small_pipeline();
  cfg.cache_dir = dir;
  cfg.reuse = ReuseMode::automatic;
  cfg.parents_required = true;
  cfg.until = StepId::step2;
  try {
    run_pipeline(small_data(), cfg, clock);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("expected manifest hash"), std::string::npos);
  }
  // Step 1 is the requested step, so it trains and lands in the cache.
  cfg.until = StepId::step1;
  const auto one = run_pipeline(small_data(), cfg, clock);
  EXPECT_TRUE(fs::exists(dir / one.key1 / "manifest.json"));
  cfg.until = StepId::step2;
  const auto two = run_pipeline(small_data(), cfg, clock);
  EXPECT_EQ(two.step1_runs, 0u);
  EXPECT_EQ(two.step2_runs, 1u);
  cfg.until = StepId::step3;
  const auto three = run_pipeline(small_data(), cfg, clock);
  EXPECT_EQ(three.step2_runs, 0u);
  EXPECT_EQ(three.ckpt3.size(), 4u);
  // Reuse off retrains the parents instead of demanding them.
  cfg.cache_dir = dir / "fresh";
  cfg.reuse = ReuseMode::off;
  EXPECT_EQ(run_pipeline(small_data(), cfg, clock).step1_runs, 1u);
  fs::remove_all(dir);
}
