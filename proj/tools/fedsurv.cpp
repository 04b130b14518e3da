// fedsurv command line: generate scenario CSVs, run experiments, re-render reports.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "fedsurv/experiment.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kCellFailure = 1;
constexpr int kConfigError = 2;

int cmd_generate(const std::string& config_path) {
  fedsurv::ExperimentConfig config;
  try {
    config = fedsurv::load_experiment_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
  if (!config.scenario) {
    std::cerr << "error: config has no scenario to generate\n";
    return kConfigError;
  }
  const auto schema = config.scenario->schema();
  std::filesystem::create_directories(config.output_dir);
  for (const auto& [name, data] : fedsurv::generate_scenario(*config.scenario)) {
    const auto path = std::filesystem::path(config.output_dir) / (name + ".csv");
    fedsurv::save_csv(path.string(), data, schema);
    std::cout << path.string() << ": " << data.size() << " records, " << data.event_count() << " events\n";
  }
  return kOk;
}

int cmd_run(const std::string& config_path, const std::string& out_dir) {
  fedsurv::ExperimentConfig config;
  try {
    config = fedsurv::load_experiment_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
  const auto report = fedsurv::run_experiment(config);
  const std::string dir = out_dir.empty() ? config.output_dir : out_dir;
  try {
    std::cout << fedsurv::emit_report(report, fedsurv::ReportFormat::csv, dir) << '\n';
    std::cout << fedsurv::emit_report(report, fedsurv::ReportFormat::markdown, dir) << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCellFailure;
  }
  for (const auto& c : report.cells) {
    if (!c.cindex) {
      std::cerr << "failed: " << c.client << ' ' << fedsurv::to_string(c.family) << ' ' << c.setting
                << " repeat " << c.repeat << ": " << c.error << '\n';
    }
  }
  return report.any_failed() ? kCellFailure : kOk;
}

int cmd_report(const std::string& in_dir, const std::string& format) {
  const auto path = std::filesystem::path(in_dir) / "results.csv";
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error: cannot open " << path.string() << '\n';
    return kConfigError;
  }
  try {
    const auto report = fedsurv::parse_results_csv(in);
    std::cout << (format == "csv" ? fedsurv::render_csv(report) : fedsurv::render_markdown(report));
    return report.any_failed() ? kCellFailure : kOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated survival analysis experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string in_dir;
  std::string format = "markdown";

  auto* gen = app.add_subcommand("generate", "Write the scenario's zone CSVs into the config's output_dir");
  gen->add_option("--config", config_path, "Experiment config (JSON)")->required();

  auto* run = app.add_subcommand("run", "Run the local/federated experiment grid");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--out", out_dir, "Output directory (default: config output_dir)");

  auto* rep = app.add_subcommand("report", "Re-render a stored results.csv");
  rep->add_option("--in", in_dir, "Directory holding results.csv")->required();
  rep->add_option("--format", format, "markdown or csv")->check(CLI::IsMember({"markdown", "csv"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*gen) return cmd_generate(config_path);
    if (*run) return cmd_run(config_path, out_dir);
    return cmd_report(in_dir, format);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCellFailure;
  }
}
