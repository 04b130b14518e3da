#pragma once

// Experiment grid (clients x model families x {local, federated}) and its
// CSV / markdown reports.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fedsurv/cox.hpp"
#include "fedsurv/data.hpp"
#include "fedsurv/federation.hpp"
#include "fedsurv/forest.hpp"
#include "fedsurv/neural.hpp"
#include "fedsurv/parallel.hpp"

namespace fedsurv {

struct ExperimentConfig {
  std::optional<ScenarioConfig> scenario;
  std::vector<std::pair<std::string, std::string>> csv_zones;  // name -> path
  DatasetSchema csv_schema = DatasetSchema::clinical();
  std::vector<ModelFamily> families;
  FamilySettings settings;
  bool neural_grid = true;
  std::optional<double> federated_learning_rate;  // FedAvg step size; default: neural learning_rate
  FederationPlan cox_plan = FederationPlan::defaults(Strategy::cox_param_avg);
  FederationPlan neural_plan = FederationPlan::defaults(Strategy::fedavg_neural);
  FederationPlan forest_plan = FederationPlan::defaults(Strategy::tree_union);
  double split_ratio = 0.8;
  std::uint64_t seed = 0;
  int repeats = 1;
  std::string output_dir = "results";
  std::size_t threads = 0;  // 0: FEDSURV_THREADS or hardware

  void validate() const {
    if (families.empty()) throw std::invalid_argument("config: at least one model family is required");
    if (repeats < 1) throw std::invalid_argument("config: repeats must be >= 1");
    if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw std::invalid_argument("config: split_ratio must be in (0,1)");
    if (scenario.has_value() == !csv_zones.empty()) {
      throw std::invalid_argument("config: give exactly one of 'scenario' or 'data'");
    }
    if (scenario) scenario->validate();
    cox_plan.validate();
    neural_plan.validate();
    forest_plan.validate();
  }

  const FederationPlan& plan_for(ModelFamily f) const {
    switch (strategy_for(f)) {
      case Strategy::cox_param_avg: return cox_plan;
      case Strategy::fedavg_neural: return neural_plan;
      case Strategy::tree_union: return forest_plan;
    }
    return cox_plan;
  }
};

struct ReportCell {
  std::string client;
  ModelFamily family = ModelFamily::cox;
  std::string setting;  // "local" or "federated"
  int repeat = 0;
  std::optional<double> cindex;
  std::string error;  // non-empty when the cell failed
};

struct ExperimentReport {
  std::vector<std::string> clients;
  std::vector<ModelFamily> families;
  int repeats = 1;
  std::vector<ReportCell> cells;

  bool any_failed() const {
    return std::any_of(cells.begin(), cells.end(), [](const ReportCell& c) { return !c.cindex; });
  }

  /// Mean over repeats that produced a value.
  std::optional<double> mean(const std::string& client, ModelFamily family, const std::string& setting) const {
    double s = 0.0;
    int k = 0;
    for (const auto& c : cells) {
      if (c.client == client && c.family == family && c.setting == setting && c.cindex) {
        s += *c.cindex;
        ++k;
      }
    }
    if (k == 0) return std::nullopt;
    return s / k;
  }
};

// ---------------------------------------------------------------------------
// Config parsing

namespace detail {

using nlohmann::json;

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline ZoneSpec parse_zone(const json& j) {
  ZoneSpec z;
  z.name = j.at("name").get<std::string>();
  z.n_patients = j.at("n_patients").get<std::size_t>();
  read_opt(j, "censoring_target", z.censoring_target);
  read_opt(j, "risk_shift", z.risk_shift);
  read_opt(j, "feature_skew", z.feature_skew);
  if (z.name.find(',') != std::string::npos) throw std::invalid_argument("zone names may not contain commas");
  return z;
}

}  // namespace detail

/// Default log-hazard for the clinical feature model, indexed by encoded
/// column: mostly additive effects plus two pairwise interactions.
inline TruthModel clinical_truth() {
  TruthModel t;
  t.linear.assign(DatasetSchema::clinical().encoded_width(), 0.0);
  const auto names = DatasetSchema::clinical().encoded_names();
  auto at = [&](const std::string& name) -> std::size_t {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw std::logic_error("unknown encoded column " + name);
    return static_cast<std::size_t>(it - names.begin());
  };
  t.linear[at("guest_type=transit")] = 0.3;
  t.linear[at("age")] = 0.03;
  t.linear[at("esrd_cause=diabetic")] = 0.3;
  t.linear[at("hematuria")] = 0.2;
  t.linear[at("alcohol_intake=regular")] = 0.25;
  t.linear[at("diabetes")] = 0.3;
  t.linear[at("heart_attack_history")] = 0.4;
  t.linear[at("heart_failure_history")] = 0.5;
  t.linear[at("exercise_level=moderate")] = -0.2;
  t.linear[at("exercise_level=high")] = -0.35;
  t.linear[at("pvd_history")] = 0.3;
  t.linear[at("stroke_history")] = 0.35;
  t.linear[at("smoking_status=current")] = 0.3;
  t.linear[at("vas_value")] = -0.08;
  t.interactions.push_back({at("diabetes"), at("heart_failure_history"), 0.8});
  t.interactions.push_back({at("age"), at("hypertension_history"), 0.02});
  return t;
}

inline ScenarioConfig nephro_scenario(std::uint64_t seed = 0) {
  ScenarioConfig s;
  s.zones = nephro_zones();
  s.feature_model = FeatureModel::clinical;
  s.n_features = 17;
  s.truth = clinical_truth();
  s.baseline_rate = 0.002;
  s.seed = seed;
  return s;
}

inline ScenarioConfig parse_scenario(const nlohmann::json& j) {
  ScenarioConfig s;
  const std::string preset = j.value("preset", "");
  if (preset == "nephro6") {
    s = nephro_scenario();
  } else if (!preset.empty()) {
    throw std::invalid_argument("unknown scenario preset '" + preset + "'");
  }
  if (j.contains("feature_model")) {
    const auto fm = j.at("feature_model").get<std::string>();
    if (fm == "clinical") {
      s.feature_model = FeatureModel::clinical;
    } else if (fm == "gaussian") {
      s.feature_model = FeatureModel::gaussian;
    } else {
      throw std::invalid_argument("unknown feature_model '" + fm + "'");
    }
  }
  detail::read_opt(j, "n_features", s.n_features);
  detail::read_opt(j, "baseline_rate", s.baseline_rate);
  detail::read_opt(j, "seed", s.seed);
  if (j.contains("truth")) {
    const auto& t = j.at("truth");
    if (t.value("preset", "") == "clinical") s.truth = clinical_truth();
    if (t.contains("linear")) s.truth.linear = t.at("linear").get<std::vector<double>>();
    if (t.contains("interactions")) {
      s.truth.interactions.clear();
      for (const auto& term : t.at("interactions")) {
        s.truth.interactions.push_back(
            {term.at(0).get<std::size_t>(), term.at(1).get<std::size_t>(), term.at(2).get<double>()});
      }
    }
  }
  if (j.contains("zones")) {
    s.zones.clear();
    for (const auto& z : j.at("zones")) s.zones.push_back(detail::parse_zone(z));
  }
  s.validate();
  return s;
}

inline DatasetSchema parse_schema(const nlohmann::json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "clinical") return DatasetSchema::clinical();
    throw std::invalid_argument("unknown schema '" + j.get<std::string>() + "'");
  }
  if (j.contains("gaussian")) return DatasetSchema::gaussian(j.at("gaussian").get<std::size_t>());
  throw std::invalid_argument("schema must be \"clinical\" or {\"gaussian\": p}");
}

/// Parses an experiment document. Relative paths resolve against `base_dir`.
inline ExperimentConfig parse_experiment_config(const nlohmann::json& j,
                                                const std::filesystem::path& base_dir = ".") {
  ExperimentConfig c;
  detail::read_opt(j, "seed", c.seed);
  detail::read_opt(j, "repeats", c.repeats);
  detail::read_opt(j, "split_ratio", c.split_ratio);
  detail::read_opt(j, "threads", c.threads);
  std::string out = "results";
  detail::read_opt(j, "output_dir", out);
  c.output_dir = (base_dir / out).lexically_normal().string();
  if (j.contains("families")) {
    for (const auto& f : j.at("families")) c.families.push_back(parse_family(f.get<std::string>()));
  }
  if (j.contains("scenario")) c.scenario = parse_scenario(j.at("scenario"));
  if (j.contains("data")) {
    const auto& d = j.at("data");
    if (d.contains("schema")) c.csv_schema = parse_schema(d.at("schema"));
    for (const auto& z : d.at("zones")) {
      c.csv_zones.emplace_back(z.at("name").get<std::string>(),
                               (base_dir / z.at("path").get<std::string>()).lexically_normal().string());
    }
  }
  if (j.contains("cox")) {
    const auto& x = j.at("cox");
    detail::read_opt(x, "max_iterations", c.settings.cox.max_iterations);
    detail::read_opt(x, "tolerance", c.settings.cox.tolerance);
    detail::read_opt(x, "ridge", c.settings.cox.ridge);
    detail::read_opt(x, "step_halving_limit", c.settings.cox.step_halving_limit);
  }
  if (j.contains("neural")) {
    const auto& x = j.at("neural");
    auto& n = c.settings.neural;
    detail::read_opt(x, "epochs", n.epochs);
    detail::read_opt(x, "learning_rate", n.learning_rate);
    detail::read_opt(x, "l2", n.l2);
    detail::read_opt(x, "hidden_width", n.hidden_width);
    detail::read_opt(x, "hidden_layers", n.hidden_layers);
    detail::read_opt(x, "dropout_rate", n.dropout_rate);
    if (x.contains("grid")) {
      const auto& g = x.at("grid");
      if (g.is_boolean()) {
        c.neural_grid = g.get<bool>();
      } else {
        c.neural_grid = true;
        for (const auto& point : g) {
          n.grid.push_back({point.at(0).get<double>(), point.at(1).get<std::size_t>(), point.at(2).get<double>()});
        }
      }
    }
  }
  if (c.neural_grid && c.settings.neural.grid.empty()) c.settings.neural.grid = TrainConfig::default_grid();
  if (!c.neural_grid) c.settings.neural.grid.clear();
  if (j.contains("forest")) {
    const auto& x = j.at("forest");
    auto& f = c.settings.forest;
    detail::read_opt(x, "n_trees", f.n_trees);
    detail::read_opt(x, "mtry", f.mtry);
    detail::read_opt(x, "min_leaf_events", f.min_leaf_events);
    detail::read_opt(x, "max_depth", f.max_depth);
  }
  // a federated forest matches a local one in size unless told otherwise
  c.forest_plan.tree_budget = c.settings.forest.n_trees;
  if (j.contains("federation")) {
    const auto& x = j.at("federation");
    if (x.contains("cox")) {
      const auto& y = x.at("cox");
      detail::read_opt(y, "rounds", c.cox_plan.rounds);
      if (y.contains("client_weights") && y.at("client_weights").is_array()) {
        c.cox_plan.client_weights = y.at("client_weights").get<std::vector<double>>();
      }
    }
    if (x.contains("neural")) {
      const auto& y = x.at("neural");
      detail::read_opt(y, "rounds", c.neural_plan.rounds);
      detail::read_opt(y, "local_epochs_per_round", c.neural_plan.local_epochs_per_round);
      if (y.contains("learning_rate")) c.federated_learning_rate = y.at("learning_rate").get<double>();
    }
    if (x.contains("rsf")) {
      const auto& y = x.at("rsf");
      detail::read_opt(y, "rounds", c.forest_plan.rounds);
      detail::read_opt(y, "tree_budget", c.forest_plan.tree_budget);
    }
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  try {
    return parse_experiment_config(j, std::filesystem::path(path).parent_path());
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Running

/// Zones for one repeat: generated with a per-repeat seed, or loaded from CSV.
inline std::vector<std::pair<std::string, SurvivalDataset>> experiment_zones(const ExperimentConfig& config,
                                                                             int repeat) {
  if (config.scenario) {
    ScenarioConfig s = *config.scenario;
    s.seed = derive_seed(s.seed, static_cast<std::uint64_t>(repeat));
    return generate_scenario(s);
  }
  std::vector<std::pair<std::string, SurvivalDataset>> out;
  for (const auto& [name, path] : config.csv_zones) out.emplace_back(name, load_csv(path, config.csv_schema));
  return out;
}

inline std::vector<ClientState> make_clients(const std::vector<std::pair<std::string, SurvivalDataset>>& zones,
                                             double ratio, std::uint64_t seed) {
  std::vector<ClientState> clients;
  for (std::size_t z = 0; z < zones.size(); ++z) {
    auto [train, test] = split(zones[z].second, ratio, derive_seed(seed, z));
    clients.push_back({zones[z].first, std::move(train), std::move(test)});
  }
  return clients;
}

namespace detail {

inline std::vector<double> local_scores(ModelFamily family, const ClientState& c, const FamilySettings& s,
                                        std::uint64_t seed) {
  switch (family) {
    case ModelFamily::cox:
      return predict_risk(fit_cox(c.train, s.cox), c.test);
    case ModelFamily::deepsurv:
    case ModelFamily::coxnnet: {
      TrainConfig tc = s.neural;
      tc.seed = seed;
      const auto m = fit_neural(c.train,
                                family == ModelFamily::deepsurv ? NeuralVariant::deepsurv : NeuralVariant::coxnnet,
                                tc);
      return predict_risk(m, c.test);
    }
    case ModelFamily::rsf: {
      ForestConfig fc = s.forest;
      fc.seed = seed;
      fc.threads = 1;
      return predict_mortality(fit_forest(c.train, fc), c.test);
    }
  }
  return {};
}

inline std::vector<double> global_scores(const ModelState& model, const SurvivalDataset& test) {
  if (const auto* m = std::get_if<CoxModel>(&model)) return predict_risk(*m, test);
  if (const auto* m = std::get_if<NeuralRiskModel>(&model)) return predict_risk(*m, test);
  return predict_mortality(std::get<SurvivalForest>(model), test);
}

}  // namespace detail

/// Runs every (client, family, setting, repeat) cell. Failures are recorded
/// in the cell and do not stop the run. Output does not depend on threads.
inline ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  const std::size_t threads = config.threads ? config.threads : default_thread_count();
  ExperimentReport report;
  report.families = config.families;
  report.repeats = config.repeats;

  for (int rep = 0; rep < config.repeats; ++rep) {
    const auto split_seed = derive_seed(config.seed, 100 + static_cast<std::uint64_t>(rep));
    const auto model_seed = derive_seed(config.seed, 200 + static_cast<std::uint64_t>(rep));
    std::vector<ClientState> clients;
    std::string setup_error;
    std::vector<std::string> names;
    try {
      const auto zones = experiment_zones(config, rep);
      for (const auto& z : zones) names.push_back(z.first);
      clients = make_clients(zones, config.split_ratio, split_seed);
    } catch (const std::exception& e) {
      setup_error = e.what();
      if (config.scenario) {
        for (const auto& z : config.scenario->zones) names.push_back(z.name);
      } else {
        for (const auto& z : config.csv_zones) names.push_back(z.first);
      }
    }
    if (rep == 0) report.clients = names;

    const std::size_t n_clients = names.size();
    const std::size_t n_families = config.families.size();
    // local cells first (client-major), then one federated task per family
    struct Slot {
      std::optional<double> value;
      std::string error;
    };
    std::vector<Slot> local(n_clients * n_families);
    std::vector<std::vector<Slot>> federated(n_families, std::vector<Slot>(n_clients));
    const std::size_t tasks = setup_error.empty() ? local.size() + n_families : 0;

    parallel_for(tasks, threads, [&](std::size_t task) {
      if (task < local.size()) {
        const std::size_t ci = task / n_families;
        const std::size_t fi = task % n_families;
        auto& slot = local[task];
        try {
          const auto cell_seed =
              derive_seed(model_seed, 16 * ci + static_cast<std::uint64_t>(config.families[fi]));
          const auto scores = detail::local_scores(config.families[fi], clients[ci], config.settings, cell_seed);
          slot.value = concordance_index(scores, clients[ci].test);
        } catch (const std::exception& e) {
          slot.error = e.what();
        }
        return;
      }
      const std::size_t fi = task - local.size();
      const ModelFamily family = config.families[fi];
      try {
        FederationPlan plan = config.plan_for(family);
        plan.threads = 1;
        FamilySettings settings = config.settings;
        settings.neural.grid.clear();
        if (config.federated_learning_rate) settings.neural.learning_rate = *config.federated_learning_rate;
        const auto family_tag = static_cast<std::uint64_t>(family);
        settings.neural.seed = derive_seed(model_seed, 5000 + family_tag);
        settings.forest.seed = derive_seed(model_seed, 6000 + family_tag);
        settings.forest.threads = 1;
        const auto result = run_federation(clients, plan, family, settings);
        for (std::size_t ci = 0; ci < n_clients; ++ci) {
          try {
            federated[fi][ci].value =
                concordance_index(detail::global_scores(result.model, clients[ci].test), clients[ci].test);
          } catch (const std::exception& e) {
            federated[fi][ci].error = e.what();
          }
        }
      } catch (const std::exception& e) {
        for (auto& s : federated[fi]) s.error = e.what();
      }
    });

    for (std::size_t ci = 0; ci < n_clients; ++ci) {
      for (std::size_t fi = 0; fi < n_families; ++fi) {
        const Slot& l = setup_error.empty() ? local[ci * n_families + fi] : Slot{std::nullopt, setup_error};
        const Slot& f = setup_error.empty() ? federated[fi][ci] : Slot{std::nullopt, setup_error};
        report.cells.push_back({names[ci], config.families[fi], "local", rep, l.value, l.error});
        report.cells.push_back({names[ci], config.families[fi], "federated", rep, f.value, f.error});
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Reports

enum class ReportFormat { csv, markdown };

inline std::string family_label(ModelFamily f) {
  switch (f) {
    case ModelFamily::cox: return "CoxPH/FedCoxPH";
    case ModelFamily::deepsurv: return "DeepSurv/FedDeepSurv";
    case ModelFamily::coxnnet: return "Cox-nnet/FedCoxnnet";
    case ModelFamily::rsf: return "RSF/FedSurF";
  }
  return "?";
}

inline std::string format_cindex(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

inline std::string render_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "client,family,setting,repeat,cindex\n";
  for (const auto& c : report.cells) {
    out << c.client << ',' << to_string(c.family) << ',' << c.setting << ',' << c.repeat << ','
        << (c.cindex ? detail::format_double(*c.cindex) : std::string("NA")) << '\n';
  }
  return out.str();
}

inline ExperimentReport parse_results_csv(std::istream& in) {
  ExperimentReport report;
  report.repeats = 0;
  std::string line;
  if (!std::getline(in, line) || line != "client,family,setting,repeat,cindex") {
    throw std::invalid_argument("results: unexpected header");
  }
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 5) throw std::invalid_argument("results: row " + std::to_string(row) + " has wrong width");
    ReportCell c;
    c.client = cells[0];
    c.family = parse_family(cells[1]);
    c.setting = cells[2];
    if (c.setting != "local" && c.setting != "federated") {
      throw std::invalid_argument("results: row " + std::to_string(row) + " has unknown setting");
    }
    c.repeat = std::stoi(cells[3]);
    if (cells[4] == "NA") {
      c.error = "failed";
    } else {
      double v = 0.0;
      if (!detail::parse_double(cells[4], v)) {
        throw std::invalid_argument("results: row " + std::to_string(row) + " has a bad cindex");
      }
      c.cindex = v;
    }
    if (std::find(report.clients.begin(), report.clients.end(), c.client) == report.clients.end()) {
      report.clients.push_back(c.client);
    }
    if (std::find(report.families.begin(), report.families.end(), c.family) == report.families.end()) {
      report.families.push_back(c.family);
    }
    report.repeats = std::max(report.repeats, c.repeat + 1);
    report.cells.push_back(std::move(c));
  }
  return report;
}

/// Table of per-cell means (local / federated column pair per client) and a
/// best-setting-per-client summary. A federated value is bold when it is at
/// least the local value at the printed precision.
inline std::string render_markdown(const ExperimentReport& report) {
  if (report.families.empty()) throw std::invalid_argument("report has no model families");
  std::ostringstream out;
  out << "## Concordance index by client\n\n";
  out << "Test-set Harrell C-index, mean over " << report.repeats << " repeat"
      << (report.repeats == 1 ? "" : "s") << ". Bold: federated >= local.\n\n";
  out << "| Model |";
  for (const auto& c : report.clients) out << ' ' << c << " Local | " << c << " Federated |";
  out << "\n|---|";
  for (std::size_t k = 0; k < report.clients.size(); ++k) out << "---|---|";
  out << '\n';
  for (auto f : report.families) {
    out << "| " << family_label(f) << " |";
    for (const auto& c : report.clients) {
      const auto l = report.mean(c, f, "local");
      const auto g = report.mean(c, f, "federated");
      const std::string ls = l ? format_cindex(*l) : "failed";
      std::string gs = g ? format_cindex(*g) : "failed";
      if (l && g && gs >= ls) gs = "**" + gs + "**";
      out << ' ' << ls << " | " << gs << " |";
    }
    out << '\n';
  }

  out << "\n## Best performing model type per client\n\n";
  out << "| Client | Best Performing Model Type | Best C-index | Model(s) |\n|---|---|---|---|\n";
  for (const auto& c : report.clients) {
    std::string best;
    std::vector<std::string> settings;
    std::vector<std::string> models;
    for (auto f : report.families) {
      for (const char* s : {"local", "federated"}) {
        const auto v = report.mean(c, f, s);
        if (!v) continue;
        const auto shown = format_cindex(*v);
        if (best.empty() || shown > best) {
          best = shown;
          settings.clear();
          models.clear();
        }
        if (shown == best) {
          const std::string setting = std::string(s) == "local" ? "Local" : "Federated";
          if (std::find(settings.begin(), settings.end(), setting) == settings.end()) settings.push_back(setting);
          models.push_back(setting + " " + to_string(f));
        }
      }
    }
    std::sort(settings.begin(), settings.end());
    std::string kind;
    for (const auto& s : settings) kind += (kind.empty() ? "" : " & ") + s;
    std::string model_list;
    for (const auto& m : models) model_list += (model_list.empty() ? "" : ", ") + m;
    out << "| " << c << " | " << (kind.empty() ? "failed" : kind) << " | " << (best.empty() ? "-" : best) << " | "
        << model_list << " |\n";
  }

  bool any_error = false;
  for (const auto& cell : report.cells) {
    if (cell.cindex) continue;
    if (!any_error) out << "\n## Failed cells\n\n";
    any_error = true;
    out << "- " << cell.client << " / " << to_string(cell.family) << " / " << cell.setting << " / repeat "
        << cell.repeat << ": " << (cell.error.empty() ? "failed" : cell.error) << '\n';
  }
  return out.str();
}

/// Writes results.csv or report.md into `dir` and returns the file path.
inline std::string emit_report(const ExperimentReport& report, ReportFormat format, const std::string& dir) {
  if (report.families.empty()) throw std::invalid_argument("report has no model families");
  const std::string body = format == ReportFormat::csv ? render_csv(report) : render_markdown(report);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const auto path = (std::filesystem::path(dir) / (format == ReportFormat::csv ? "results.csv" : "report.md")).string();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << body;
  if (!out) throw std::runtime_error("cannot write " + path);
  return path;
}

}  // namespace fedsurv
