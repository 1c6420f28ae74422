#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "oracles.hpp"
#include "qeforge/eval_report.hpp"
#include "qeforge/toytask.hpp"

namespace fs = std::filesystem;
using namespace qeforge;
using namespace qeforge::report;

namespace {

fs::path temp_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("qeforge_report_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Table 1 of the paper: baseline, NO TAG DAG 1/2, TAG DAG 1/2.
const std::vector<SystemScores> kTable1{
    {"en-de", 47.17, {49.93, 49.54, 51.90, 51.25}},
    {"en-zh", 29.16, {34.75, 35.27, 35.62, 36.60}},
    {"ro-en", 83.63, {83.67, 83.74, 83.37, 84.40}},
    {"ru-en", 40.65, {44.91, 45.40, 47.16, 43.98}},
};

// Table 3 of the paper: per language pair, the model row then its baseline row.
const std::vector<std::string> kTestSets{"en-de", "en-zh", "ro-en", "ru-en"};
const std::vector<CrossLingualPair> kTable3{
    {"en-de", {49.93, 22.66, 78.97, 39.55}, {47.17, 19.67, 44.96, 32.91}},
    {"en-zh", {43.46, 34.75, 80.51, 42.67}, {30.34, 29.16, 47.55, 36.87}},
    {"ro-en", {43.02, 24.31, 83.67, 38.74}, {24.64, 23.56, 83.63, 39.97}},
    {"ru-en", {25.36, 26.06, 75.34, 44.91}, {22.40, 24.67, 57.17, 40.69}},
};

// Table 4 of the paper.
const std::vector<OodColumn> kTable4{
    {"en-de", 11.95, 54.62}, {"en-zh", 3.59, 59.30}, {"ro-en", 11.60, 52.51}, {"ru-en", 3.43, 47.36}};
const OodReference kTable4Ref{64.33, 65.24, 64.76};

std::vector<double> noisy(const std::vector<double>& base, double sd, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> out;
  for (double x : base) out.push_back(x + rng.normal(0.0, sd));
  return out;
}

}  // namespace

TEST(Format, TwoDecimalsHalfEven) {
  EXPECT_EQ(format_score(51.9), "51.90");
  EXPECT_EQ(format_score(4.485), "4.48");
  EXPECT_EQ(format_score(6.685), "6.68");
  EXPECT_EQ(format_score(14.3675), "14.37");
  EXPECT_EQ(format_score(-9.71), "-9.71");
  EXPECT_EQ(format_score(-0.001), "0.00");
}

TEST(Score, ExactAndAffinePredictions) {
  const std::vector<double> gold{0.1, 0.4, 0.35, 0.8, 0.0};
  EXPECT_NEAR(score_predictions(gold, gold, "m"), 100.0, 1e-9);
  std::vector<double> affine;
  for (double g : gold) affine.push_back(2 * g + 3);
  EXPECT_NEAR(score_predictions(affine, gold, "m"), 100.0, 1e-9);
}

TEST(Score, UndefinedCorrelationNamesTheModel) {
  const std::vector<double> gold{0.1, 0.4, 0.35}, flat{0.2, 0.2, 0.2};
  try {
    score_predictions(flat, gold, "abc123");
    FAIL();
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("undefined correlation"), std::string::npos);
    EXPECT_NE(msg.find("abc123"), std::string::npos);
  }
}

TEST(Score, AffineInvarianceProperty) {
  Rng rng(8);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> gold(20), pred(20), moved;
    for (auto& g : gold) g = rng.uniform();
    for (auto& p : pred) p = rng.uniform();
    const double a = 0.01 + 10 * rng.uniform(), b = 20 * rng.uniform() - 10;
    for (double p : pred) moved.push_back(a * p + b);
    ASSERT_NEAR(score_predictions(moved, gold, "m"), score_predictions(pred, gold, "m"), 1e-9);
  }
}

TEST(Score, RowArgmaxSurvivesSharedRescaling) {
  Rng rng(3);
  std::vector<double> gold(60);
  for (auto& g : gold) g = rng.uniform();
  std::vector<std::vector<double>> systems;
  for (int k = 0; k < 5; ++k) systems.push_back(noisy(gold, 0.1 + 0.1 * k, 100 + k));
  auto argmax = [&](double a, double b) {
    std::size_t best = 0;
    double best_s = -1e9;
    for (std::size_t k = 0; k < systems.size(); ++k) {
      std::vector<double> p;
      for (double x : systems[k]) p.push_back(a * x + b);
      const double s = score_predictions(p, gold, "m");
      if (s > best_s) best_s = s, best = k;
    }
    return best;
  };
  EXPECT_EQ(argmax(1, 0), argmax(7.5, -3));
  EXPECT_EQ(argmax(1, 0), argmax(0.001, 100));
}

TEST(Evaluate, ToyModelAgreesWithIndependentRecompute) {
  toytask::ToyTaskSpec spec;
  spec.id_train = 60, spec.id_dev = 20, spec.id_test = 80, spec.ood_total = 100, spec.parallel_size = 1;
  spec.zero_shot_test = 1;
  const auto task = toytask::generate(spec);
  trainer::ModelSpec ms;
  ms.hidden_width = 12;
  const auto texts = trainer::texts_of(std::vector<QEDataset>{task.id[0].train});
  const auto model = trainer::make_fresh_model(ms, TagMode::NOTAG, texts);
  const auto ev = evaluate(model, task.id[0].test, TagMode::NOTAG, "fresh");

  const auto dir = temp_dir("eval");
  PredictionStore store(dir);
  store.add(make_dump("untrained", "en-de", ev), "fresh", {}, {"en-de"});
  std::ifstream in(dir / "untrained__en-de.tsv");
  std::vector<double> g, p;
  std::string id;
  double a, b;
  while (in >> id >> a >> b) g.push_back(a), p.push_back(b);
  ASSERT_EQ(g.size(), task.id[0].test.size());
  EXPECT_NEAR(ev.pearson, 100.0 * oracle::pearson_raw(p, g), 1e-9);
  EXPECT_EQ(PredictionStore(dir).load("untrained", "en-de").pred, ev.predictions);
  EXPECT_THROW(evaluate(model, QEDataset{}, TagMode::NOTAG, "fresh"), ValidationError);
  fs::remove_all(dir);
}

TEST(Dumps, NamesAndMalformedLines) {
  EXPECT_EQ(dump_filename("baseline-en-de", "en-cs"), "baseline-en-de__en-cs.tsv");
  EXPECT_THROW(dump_filename("a__b", "x"), ValidationError);
  EXPECT_THROW(dump_filename("a/b", "x"), ValidationError);
  std::istringstream bad("0\t0.5\n");
  EXPECT_THROW(read_dump(bad, "s", "t"), ValidationError);
  PredictionStore empty(temp_dir("none"));
  EXPECT_THROW(empty.load("x", "y"), ValidationError);
  EXPECT_FALSE(empty.score("x", "y").has_value());
}

TEST(MainTable, PaperIncreaseColumn) {
  const auto rep = main_results_table(kTable1);
  const double expected[] = {10.03, 25.51, 0.92, 16.01};
  const char* rows[] = {"EN-DE", "EN-ZH", "RO-EN", "RU-EN"};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(*rep.value(rows[i], "Increase %"), expected[i], 0.01) << rows[i];
  EXPECT_TRUE(rep.cell("EN-DE", "TAG DAG 1").bold);
  EXPECT_FALSE(rep.cell("EN-DE", "TAG DAG 2").bold);
  EXPECT_TRUE(rep.cell("RO-EN", "TAG DAG 2").bold);
  EXPECT_EQ(rep.cell("RO-EN", "TAG DAG 2").display(), "84.40*");
  EXPECT_EQ(rep.cell("EN-DE", "Increase %").display(), "10.03");
}

TEST(MainTable, EqualCellsAndMissingCells) {
  const std::vector<SystemScores> equal{{"en-de", 50.0, {50.0, 50.0, 50.0, 50.0}}};
  EXPECT_EQ(main_results_table(equal).cell("EN-DE", "Increase %").display(), "0.00");
  const std::vector<SystemScores> gaps{{"en-de", 40.0, {std::nullopt, 44.0, std::nullopt, 42.0}}};
  const auto rep = main_results_table(gaps);
  EXPECT_EQ(rep.cell("EN-DE", "NO TAG DAG 1").display(), "");
  EXPECT_NEAR(*rep.value("EN-DE", "Increase %"), 10.0, 1e-12);
  const std::vector<SystemScores> no_base{{"en-de", std::nullopt, {44.0, 44.0, 44.0, 44.0}}};
  EXPECT_FALSE(main_results_table(no_base).value("EN-DE", "Increase %").has_value());
}

TEST(CrossLingual, PaperAverages) {
  const auto rep = crosslingual_matrix(kTestSets, kTable3);
  EXPECT_NEAR(*rep.value("Delta EN-DE", "AVG"), 11.60, 0.015);
  EXPECT_NEAR(*rep.value("Delta EN-ZH", "AVG"), 14.36, 0.015);
  EXPECT_NEAR(*rep.value("Delta RO-EN", "AVG"), 4.48, 0.015);
  EXPECT_NEAR(*rep.value("Delta RU-EN", "AVG"), 6.68, 0.015);
  EXPECT_NEAR(*rep.value("Delta EN-DE", "RO-EN"), 34.01, 1e-9);
  EXPECT_NEAR(*rep.value("Delta RO-EN", "RU-EN"), -1.23, 1e-9);
  EXPECT_EQ(rep.cell("Delta RO-EN", "AVG").display(), "4.48*");
}

TEST(CrossLingual, DerivedCellsRecomputeFromBaseCells) {
  const std::vector<ScoreRow> extra{{"Step 2", {38.29, 24.72, 76.96, 31.35}}};
  const auto rep = crosslingual_matrix(kTestSets, kTable3, extra);
  for (const auto& p : kTable3) {
    const auto lp = upper(p.lang_pair);
    double sum = 0;
    for (std::size_t i = 0; i < kTestSets.size(); ++i) {
      const auto col = upper(kTestSets[i]);
      const double d = *rep.value(lp, col) - *rep.value("Baseline " + lp, col);
      EXPECT_NEAR(*rep.value("Delta " + lp, col), d, 0.015);
      sum += d;
    }
    EXPECT_NEAR(*rep.value("Delta " + lp, "AVG"), sum / 4, 0.015);
  }
  EXPECT_NEAR(*rep.value("Step 2", "AVG"), 42.83, 0.015);
}

TEST(CrossLingual, ModelEqualToBaselineGivesZeroDelta) {
  const std::vector<CrossLingualPair> same{{"en-de", {1, 2, 3, 4}, {1, 2, 3, 4}}};
  const auto rep = crosslingual_matrix(kTestSets, same);
  for (const auto& c : rep.row("Delta EN-DE").cells) EXPECT_EQ(*c.value, 0.0);
  const std::vector<CrossLingualPair> short_row{{"en-de", {1, 2, 3}, {1, 2, 3, 4}}};
  EXPECT_THROW(crosslingual_matrix(kTestSets, short_row), ValidationError);
}

TEST(ZeroShot, PaperCellsAndManifestCheck) {
  const std::vector<ZeroShotRow> rows{{"en-zh", "en-cs", 35.56, {49.33, 48.54, 47.98, 46.83}},
                                      {"en-de", "en-ja", 9.67, {18.16, 8.00, 16.12, 17.36}}};
  const std::vector<TrainingScope> training{{"m1", {"en-de", "en-zh"}}};
  const std::vector<TestScope> tests{{"en-cs", {"en-cs"}}, {"en-ja", {"en-ja"}}};
  const auto rep = zeroshot_table(rows, training, tests);
  EXPECT_EQ(rep.cell("EN-ZH / EN-CS", "Baseline").display(), "35.56");
  EXPECT_EQ(rep.cell("EN-ZH / EN-CS", "NO TAG DAG 1").display(), "49.33");
  EXPECT_EQ(rep.cell("EN-DE / EN-JA", "Baseline").display(), "9.67");
  EXPECT_EQ(rep.cell("EN-DE / EN-JA", "NO TAG DAG 1").display(), "18.16");

  const std::vector<TrainingScope> leaky{{"m2", {"en-de", "EN-CS"}}};
  try {
    zeroshot_table(rows, leaky, tests);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("not zero-shot"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("m2"), std::string::npos);
  }
}

TEST(OodTable, PaperDeltas) {
  const auto rep = ood_table(kTable4, kTable4Ref);
  EXPECT_NEAR(*rep.value("Delta OOD", "EN-DE"), -9.71, 0.01);
  EXPECT_NEAR(*rep.value("Delta OOD", "EN-ZH"), -5.03, 0.01);
  EXPECT_NEAR(*rep.value("Delta OOD", "RO-EN"), -11.82, 0.01);
  EXPECT_NEAR(*rep.value("Delta OOD", "RU-EN"), -16.97, 0.01);
  EXPECT_NEAR(*rep.value("Delta Baseline", "EN-ZH"), 55.71, 0.01);
  EXPECT_NEAR(*rep.value("Delta Baseline", "EN-DE"), 42.67, 0.01);
  EXPECT_NEAR(*rep.value("Delta Baseline", "RU-EN"), 43.93, 0.01);
  EXPECT_EQ(rep.cell("Baseline", "OOD").display(), "64.33");
  EXPECT_EQ(rep.cell("Our pipeline", "OOD").display(), "");
  const std::vector<OodColumn> level{{"en-de", 10.0, 64.33}};
  EXPECT_EQ(ood_table(level, kTable4Ref).cell("Delta OOD", "EN-DE").display(), "0.00*");
}

TEST(DeltaReport, ExactBeforeRounding) {
  const auto d = delta_report(54.62, 11.95, 64.33);
  EXPECT_EQ(d.delta, 54.62 - 11.95);
  EXPECT_EQ(*d.ood_delta, 54.62 - 64.33);
  EXPECT_FALSE(delta_report(1, 2).ood_delta.has_value());
}

TEST(Significance, FiveSystemsTenCells) {
  Rng rng(8);
  std::vector<double> gold(500);
  for (auto& g : gold) g = rng.uniform();
  SignificanceInput in{"en-de", gold, {}};
  const char* names[] = {"Baseline", "NO TAG DAG 1", "NO TAG DAG 2", "TAG DAG 1", "TAG DAG 2"};
  for (int k = 0; k < 5; ++k) in.systems.push_back({names[k], noisy(gold, 0.2 + 0.3 * k, 10 + k)});
  const auto rep = significance_report(std::span<const SignificanceInput>(&in, 1));
  std::size_t marks = 0, dashes = 0;
  for (const auto& r : rep.rows)
    for (const auto& c : r.cells) (c.text == "-" ? dashes : marks) += (c.text == "-" || c.text == "Y" || c.text == "N");
  EXPECT_EQ(rep.rows.size(), 4u);
  EXPECT_EQ(marks, 10u);
  EXPECT_EQ(dashes, 6u);
  EXPECT_TRUE(rep.to_json()["rows"][0]["cells"][0].contains("p"));
}

TEST(Significance, DuplicatesAndGoldVersusNoise) {
  Rng rng(5);
  std::vector<double> gold(500), pure_noise(500);
  for (auto& g : gold) g = rng.uniform();
  for (auto& x : pure_noise) x = rng.uniform();
  const auto good = noisy(gold, 0.05, 2);
  SignificanceInput in{"en-de", gold, {{"A", good}, {"B", good}, {"C", pure_noise}}};
  const auto rep = significance_report(std::span<const SignificanceInput>(&in, 1));
  EXPECT_EQ(rep.cell("EN-DE A", "B").text, "N");
  EXPECT_EQ(rep.cell("EN-DE A", "C").text, "Y");
}

TEST(Store, ReportsRegenerateByteIdentical) {
  const auto dir = temp_dir("store");
  PredictionStore store(dir / "predictions");
  Rng rng(8);
  std::vector<double> gold(50);
  for (auto& g : gold) g = rng.uniform();
  auto add = [&](const std::string& system, const std::string& test, double sd, std::uint64_t seed,
                 std::vector<std::string> train_lps) {
    Evaluation ev{"id-" + system, 0, gold, noisy(gold, sd, seed)};
    store.add(make_dump(system, test, ev), ev.model_id, std::move(train_lps), {test});
  };
  std::uint64_t seed = 1;
  for (std::string lp : {"en-de", "ro-en"}) {
    for (std::string t : {std::string(lp == "en-de" ? "ro-en" : "en-de"), lp, std::string("ood"), std::string("en-cs")}) {
      add(baseline_system(lp), t, 0.4, seed++, {lp});
      for (auto v : kVariants) add(pipeline_system(v, lp), t, 0.2, seed++, {"en-de", "ro-en"});
    }
  }
  for (std::string t : {"en-de", "ro-en", "ood"}) {
    add(step1_system(TagMode::NOTAG), t, 0.3, seed++, {"en-de"});
    add(step2_system("notag-dag1"), t, 0.3, seed++, {"en-de", "ro-en"});
  }

  auto build = [&](const fs::path& out) {
    const PredictionStore fresh(dir / "predictions");
    write_report(main_from_store(fresh), out);
    write_report(crosslingual_from_store(fresh), out);
    write_report(zeroshot_from_store(fresh), out);
    write_report(ood_from_store(fresh), out);
    write_report(significance_from_store(fresh), out);
  };
  build(dir / "r1");
  build(dir / "r2");
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / "r1")) {
    ++files;
    EXPECT_EQ(slurp(e.path()), slurp(dir / "r2" / e.path().filename())) << e.path();
  }
  EXPECT_EQ(files, 10u);

  const PredictionStore fresh(dir / "predictions");
  const auto main = main_from_store(fresh);
  EXPECT_EQ(main.rows.size(), 2u);
  EXPECT_NEAR(*main.value("EN-DE", "Baseline"), *fresh.score("baseline-en-de", "en-de"), 1e-12);
  const auto cross = crosslingual_from_store(fresh);
  EXPECT_NO_THROW(cross.row("Step 1"));
  EXPECT_NO_THROW(cross.row("Step 2"));
  const auto zs = zeroshot_from_store(fresh);
  EXPECT_EQ(zs.rows.size(), 2u);
  EXPECT_FALSE(ood_from_store(fresh).value("Baseline", "DAG 2").has_value());
  fs::remove_all(dir);
}

TEST(Store, ZeroShotValidationUsesManifests) {
  const auto dir = temp_dir("zs");
  PredictionStore store(dir);
  std::vector<double> gold{0.1, 0.5, 0.3, 0.9}, pred{0.2, 0.4, 0.35, 0.7};
  Evaluation ev{"m", 0, gold, pred};
  store.add(make_dump("baseline-en-de", "en-de", ev), "m", {"en-de"}, {"en-de"});
  store.add(make_dump("baseline-en-de", "en-cs", ev), "m", {"en-de", "en-cs"}, {"en-cs"});
  EXPECT_THROW(zeroshot_from_store(PredictionStore(dir)), ValidationError);
  fs::remove_all(dir);
}

TEST(Text, AlignedTableLayout) {
  const auto text = main_results_table(kTable1).to_text();
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  EXPECT_EQ(lines[0], "Pearson correlation (x100) per language pair");
  EXPECT_NE(text.find("51.90*"), std::string::npos);
  EXPECT_NE(text.find("0.92"), std::string::npos);
  // Every data row ends its Increase column at the same offset.
  std::size_t width = 0;
  for (const auto& l : lines)
    if (l.rfind("EN-", 0) == 0 || l.rfind("RO-", 0) == 0 || l.rfind("RU-", 0) == 0) {
      if (width == 0) width = l.size();
      EXPECT_EQ(l.size(), width) << l;
    }
}
