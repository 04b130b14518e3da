#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fedsurv/experiment.hpp"

using namespace fedsurv;
using nlohmann::json;

namespace {

json small_grid(std::size_t zones, std::vector<std::string> families) {
  json z = json::array();
  const char* names[] = {"North", "South", "East", "West", "Andhra Pradesh", "Bihar"};
  for (std::size_t k = 0; k < zones; ++k) {
    z.push_back({{"name", names[k]},
                 {"n_patients", 160 + 20 * k},
                 {"censoring_target", 0.4},
                 {"risk_shift", 0.1 * static_cast<double>(k)},
                 {"feature_skew", 0.2 * static_cast<double>(k) - 0.5}});
  }
  return {{"seed", 3},
          {"families", families},
          {"scenario",
           {{"feature_model", "gaussian"}, {"n_features", 3}, {"seed", 9}, {"truth", {{"linear", {0.6, -0.4, 0.8}}}}, {"zones", z}}},
          {"neural", {{"epochs", 10}, {"grid", false}, {"learning_rate", 0.05}}},
          {"forest", {{"n_trees", 6}, {"min_leaf_events", 3}}}};
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("fedsurv_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(Config, ParsesDefaultsAndPaths) {
  auto j = small_grid(2, {"cox", "rsf"});
  j["output_dir"] = "out/run1";
  const auto c = parse_experiment_config(j, "/data/configs");
  EXPECT_EQ(c.output_dir, "/data/configs/out/run1");
  EXPECT_EQ(c.split_ratio, 0.8);
  EXPECT_EQ(c.repeats, 1);
  EXPECT_EQ(c.families, (std::vector<ModelFamily>{ModelFamily::cox, ModelFamily::rsf}));
  EXPECT_EQ(c.forest_plan.tree_budget, 6u);  // follows n_trees unless set
  EXPECT_EQ(c.neural_plan.rounds, 10);
  EXPECT_TRUE(c.settings.neural.grid.empty());
  ASSERT_TRUE(c.scenario.has_value());
  EXPECT_EQ(c.scenario->zones.size(), 2u);
}

TEST(Config, PresetAndCsvSources) {
  const auto preset = parse_experiment_config({{"families", {"cox"}}, {"scenario", {{"preset", "nephro6"}}}});
  EXPECT_EQ(preset.scenario->zones.size(), 6u);
  EXPECT_EQ(preset.settings.neural.grid.size(), 12u);
  const auto csv = parse_experiment_config(
      {{"families", {"cox"}},
       {"data", {{"schema", {{"gaussian", 2}}}, {"zones", {{{"name", "A"}, {"path", "a.csv"}}}}}}},
      "/base");
  ASSERT_EQ(csv.csv_zones.size(), 1u);
  EXPECT_EQ(csv.csv_zones[0].second, "/base/a.csv");
  EXPECT_EQ(csv.csv_schema.encoded_width(), 2u);
}

TEST(Config, Errors) {
  auto j = small_grid(1, {});
  EXPECT_THROW(parse_experiment_config(j), std::invalid_argument);
  j = small_grid(1, {"cox"});
  j["repeats"] = 0;
  EXPECT_THROW(parse_experiment_config(j), std::invalid_argument);
  j = small_grid(1, {"svm"});
  EXPECT_THROW(parse_experiment_config(j), std::invalid_argument);
  j = small_grid(1, {"cox"});
  j["federation"] = {{"cox", {{"rounds", 2}}}};
  EXPECT_THROW(parse_experiment_config(j), std::invalid_argument);
  EXPECT_THROW(parse_experiment_config({{"families", {"cox"}}}), std::invalid_argument);
  EXPECT_THROW(load_experiment_config("/nonexistent/config.json"), std::invalid_argument);
}

TEST(Experiment, SingleZoneCoxFederatedEqualsLocal) {
  const auto r = run_experiment(parse_experiment_config(small_grid(1, {"cox"})));
  ASSERT_EQ(r.cells.size(), 2u);
  ASSERT_TRUE(r.cells[0].cindex && r.cells[1].cindex);
  EXPECT_EQ(*r.cells[0].cindex, *r.cells[1].cindex);
  EXPECT_FALSE(r.any_failed());
}

TEST(Experiment, FullGridLayoutAndRoundTrip) {
  auto c = parse_experiment_config(small_grid(6, {"cox", "deepsurv", "coxnnet", "rsf"}));
  c.threads = 1;
  const auto r = run_experiment(c);
  ASSERT_EQ(r.cells.size(), 48u);
  EXPECT_FALSE(r.any_failed());

  const auto md = render_markdown(r);
  std::istringstream lines(md);
  std::string line;
  std::size_t model_rows = 0;
  while (std::getline(lines, line)) {
    if (line.rfind("| CoxPH", 0) == 0 || line.rfind("| DeepSurv", 0) == 0 || line.rfind("| Cox-nnet", 0) == 0 ||
        line.rfind("| RSF", 0) == 0) {
      ++model_rows;
      EXPECT_EQ(std::count(line.begin(), line.end(), '|'), 14);  // label + 6 pairs
    }
  }
  EXPECT_EQ(model_rows, 4u);
  EXPECT_NE(md.find("| Model | North Local | North Federated |"), std::string::npos);

  std::istringstream csv(render_csv(r));
  const auto back = parse_results_csv(csv);
  ASSERT_EQ(back.cells.size(), r.cells.size());
  for (std::size_t k = 0; k < r.cells.size(); ++k) {
    EXPECT_EQ(back.cells[k].client, r.cells[k].client);
    EXPECT_EQ(back.cells[k].family, r.cells[k].family);
    EXPECT_EQ(back.cells[k].setting, r.cells[k].setting);
    EXPECT_EQ(back.cells[k].cindex, r.cells[k].cindex);
  }
  EXPECT_EQ(render_markdown(back), md);

  // parallel execution must not change any byte
  c.threads = 4;
  EXPECT_EQ(render_csv(run_experiment(c)), render_csv(r));
}

TEST(Experiment, RepeatsUseDistinctSeeds) {
  auto j = small_grid(1, {"cox"});
  j["repeats"] = 2;
  const auto r = run_experiment(parse_experiment_config(j));
  ASSERT_EQ(r.cells.size(), 4u);
  EXPECT_EQ(r.cells[2].repeat, 1);
  EXPECT_NE(*r.cells[0].cindex, *r.cells[2].cindex);
  EXPECT_NE(render_markdown(r).find("mean over 2 repeats"), std::string::npos);
}

TEST(Experiment, CellFailuresAreRecorded) {
  auto j = small_grid(2, {"cox", "rsf"});
  j["federation"] = {{"rsf", {{"tree_budget", 1000}}}};
  const auto r = run_experiment(parse_experiment_config(j));
  ASSERT_EQ(r.cells.size(), 8u);
  EXPECT_TRUE(r.any_failed());
  std::size_t failed = 0;
  for (const auto& c : r.cells) {
    if (!c.cindex) {
      ++failed;
      EXPECT_EQ(c.family, ModelFamily::rsf);
      EXPECT_EQ(c.setting, "federated");
      EXPECT_FALSE(c.error.empty());
    }
  }
  EXPECT_EQ(failed, 2u);
  EXPECT_NE(render_csv(r).find(",rsf,federated,0,NA"), std::string::npos);
  EXPECT_NE(render_markdown(r).find("## Failed cells"), std::string::npos);
}

TEST(Report, BoldingAndTies) {
  ExperimentReport r;
  r.clients = {"A", "B"};
  r.families = {ModelFamily::cox};
  r.cells = {{"A", ModelFamily::cox, "local", 0, 0.6, ""},
             {"A", ModelFamily::cox, "federated", 0, 0.65, ""},
             {"B", ModelFamily::cox, "local", 0, 0.7001, ""},
             {"B", ModelFamily::cox, "federated", 0, 0.6999, ""}};
  const auto md = render_markdown(r);
  EXPECT_NE(md.find("| 0.600 | **0.650** |"), std::string::npos);
  // equal at the printed precision: bold, and a shared best
  EXPECT_NE(md.find("| 0.700 | **0.700** |"), std::string::npos);
  EXPECT_NE(md.find("| B | Federated & Local | 0.700 |"), std::string::npos);
  EXPECT_NE(md.find("| A | Federated | 0.650 |"), std::string::npos);
  r.cells[1].cindex = 0.5;
  EXPECT_NE(render_markdown(r).find("| 0.600 | 0.500 |"), std::string::npos);
}

TEST(Report, EmptyFamiliesErrorBeforeWriting) {
  const auto dir = scratch("empty");
  ExperimentReport r;
  r.clients = {"A"};
  EXPECT_THROW(emit_report(r, ReportFormat::csv, dir.string()), std::invalid_argument);
  EXPECT_FALSE(std::filesystem::exists(dir));
}

TEST(Report, EmitWritesFilesDeterministically) {
  const auto r = run_experiment(parse_experiment_config(small_grid(2, {"cox"})));
  const auto dir = scratch("emit");
  const auto csv_path = emit_report(r, ReportFormat::csv, dir.string());
  const auto md_path = emit_report(r, ReportFormat::markdown, dir.string());
  std::ifstream csv(csv_path), md(md_path);
  std::stringstream a, b;
  a << csv.rdbuf();
  b << md.rdbuf();
  EXPECT_EQ(a.str(), render_csv(r));
  EXPECT_EQ(b.str(), render_markdown(r));
  EXPECT_THROW(emit_report(r, ReportFormat::csv, "/proc/fedsurv/not-writable"), std::exception);
  std::filesystem::remove_all(dir);
}
