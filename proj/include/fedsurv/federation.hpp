#pragma once

// Client/round orchestration and the three aggregation strategies:
// weighted coefficient averaging for Cox models, FedAvg over neural
// weights, and importance-ranked tree union for forests.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "fedsurv/cox.hpp"
#include "fedsurv/data.hpp"
#include "fedsurv/forest.hpp"
#include "fedsurv/model_state.hpp"
#include "fedsurv/neural.hpp"
#include "fedsurv/parallel.hpp"
#include "fedsurv/survival.hpp"

namespace fedsurv {

/// One participant. Raw records stay inside the client; only model states
/// and standardization moments leave it.
struct ClientState {
  std::string client_id;
  SurvivalDataset train;
  SurvivalDataset test;

  std::size_t n() const { return train.size(); }
};

enum class Strategy { cox_param_avg, fedavg_neural, tree_union };
enum class ModelFamily { cox, deepsurv, coxnnet, rsf };

inline std::string to_string(ModelFamily f) {
  switch (f) {
    case ModelFamily::cox: return "cox";
    case ModelFamily::deepsurv: return "deepsurv";
    case ModelFamily::coxnnet: return "coxnnet";
    case ModelFamily::rsf: return "rsf";
  }
  return "?";
}

inline ModelFamily parse_family(const std::string& s) {
  if (s == "cox") return ModelFamily::cox;
  if (s == "deepsurv") return ModelFamily::deepsurv;
  if (s == "coxnnet") return ModelFamily::coxnnet;
  if (s == "rsf") return ModelFamily::rsf;
  throw std::invalid_argument("unknown model family '" + s + "'");
}

inline Strategy strategy_for(ModelFamily f) {
  switch (f) {
    case ModelFamily::cox: return Strategy::cox_param_avg;
    case ModelFamily::rsf: return Strategy::tree_union;
    default: return Strategy::fedavg_neural;
  }
}

struct FederationPlan {
  Strategy strategy = Strategy::cox_param_avg;
  int rounds = 1;
  int local_epochs_per_round = 10;
  std::size_t tree_budget = 100;
  std::vector<double> client_weights;  // cox only; empty means n_k
  std::size_t threads = 1;

  static FederationPlan defaults(Strategy s) {
    FederationPlan p;
    p.strategy = s;
    if (s == Strategy::fedavg_neural) p.rounds = 10;
    return p;
  }

  void validate() const {
    if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
    if (local_epochs_per_round < 1) throw std::invalid_argument("local epochs must be >= 1");
    if (strategy != Strategy::fedavg_neural && rounds != 1) {
      throw std::invalid_argument("cox and forest federation run a single round");
    }
    if (strategy == Strategy::tree_union && tree_budget == 0) {
      throw std::invalid_argument("tree budget must be positive");
    }
    for (double r : client_weights) {
      if (!(r > 0.0)) throw std::invalid_argument("client weights must be positive");
    }
  }
};

struct ClientRoundMetrics {
  std::string client_id;
  double local_loss = 0.0;
  std::optional<double> test_cindex;  // empty when the test set has no comparable pair
};

struct RoundReport {
  int round_index = 0;
  std::string global_snapshot;  // fingerprint of the aggregated model state
  std::vector<ClientRoundMetrics> clients;
};

/// Error raised while a specific client trains; the run is aborted.
class ClientError : public std::runtime_error {
 public:
  ClientError(std::string client_id, const std::string& what)
      : std::runtime_error("client '" + client_id + "': " + what), client_id_(std::move(client_id)) {}
  const std::string& client_id() const { return client_id_; }

 private:
  std::string client_id_;
};

namespace detail {

// Weighted mean of equal-length vectors. Each component is computed as
// ref + sum_k w_k (v_k - ref) with ref the componentwise minimum and terms
// summed in sorted order, so the result is independent of client order and
// reproduces a common input bit for bit.
inline std::vector<double> weighted_mean(std::span<const std::vector<double>> vectors,
                                         std::span<const double> weights) {
  if (vectors.empty()) throw std::invalid_argument("no client vectors to aggregate");
  if (weights.size() != vectors.size()) throw std::invalid_argument("weight count mismatch");
  const std::size_t len = vectors.front().size();
  double total = 0.0;
  std::vector<double> sorted_w(weights.begin(), weights.end());
  std::sort(sorted_w.begin(), sorted_w.end());
  for (double w : sorted_w) {
    if (!(w > 0.0) || !std::isfinite(w)) throw std::invalid_argument("weights must be positive");
    total += w;
  }
  for (const auto& v : vectors) {
    if (v.size() != len) throw std::invalid_argument("client vectors differ in length");
  }
  std::vector<double> out(len);
  std::vector<double> terms(vectors.size());
  for (std::size_t j = 0; j < len; ++j) {
    double ref = vectors.front()[j];
    for (const auto& v : vectors) ref = std::min(ref, v[j]);
    for (std::size_t k = 0; k < vectors.size(); ++k) {
      terms[k] = (weights[k] / total) * (vectors[k][j] - ref);
    }
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += t;
    out[j] = ref + s;
  }
  return out;
}

inline std::vector<std::size_t> client_order(std::span<const ClientState> clients) {
  std::vector<std::size_t> order(clients.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return clients[a].client_id < clients[b].client_id;
  });
  return order;
}

inline std::optional<double> safe_cindex(std::span<const double> scores, const SurvivalDataset& test) {
  if (test.empty()) return std::nullopt;
  const auto c = concordance_counts(scores, test);
  if (c.comparable == 0) return std::nullopt;
  return c.index();
}

}  // namespace detail

/// FedAvg: sum_k (n_k / N) w_k, componentwise.
inline std::vector<double> fedavg_weights(std::span<const std::vector<double>> client_vectors,
                                          std::span<const std::size_t> n) {
  if (n.size() != client_vectors.size()) throw std::invalid_argument("sample count mismatch");
  std::vector<double> w;
  for (std::size_t v : n) {
    if (v == 0) throw std::invalid_argument("sample counts must be positive");
    w.push_back(static_cast<double>(v));
  }
  return detail::weighted_mean(client_vectors, w);
}

/// beta_global = sum_k r_k beta_k / sum_k r_k.
inline std::vector<double> aggregate_cox(std::span<const std::vector<double>> local_betas,
                                         std::span<const double> r) {
  return detail::weighted_mean(local_betas, r);
}

/// Moments every client agrees on before fitting: n_k-weighted averages of
/// the clients' own means and scales.
inline Standardization federated_standardization(std::span<const ClientState> clients) {
  if (clients.empty()) throw std::invalid_argument("no clients");
  std::vector<std::vector<double>> means, scales;
  std::vector<std::size_t> n;
  for (const auto& c : clients) {
    const auto s = Standardization::fit(c.train);
    means.push_back(s.means);
    scales.push_back(s.scales);
    n.push_back(c.n());
  }
  return {fedavg_weights(means, n), fedavg_weights(scales, n)};
}

/// Pointwise weighted average of step curves over the union of their times.
inline CumulativeHazardCurve average_curves(std::span<const CumulativeHazardCurve> curves,
                                            std::span<const double> weights) {
  std::vector<double> times;
  for (const auto& c : curves) times.insert(times.end(), c.times().begin(), c.times().end());
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  std::vector<std::vector<double>> sampled;
  for (const auto& c : curves) {
    std::vector<double> v;
    v.reserve(times.size());
    for (double t : times) v.push_back(c.at(t));
    sampled.push_back(std::move(v));
  }
  auto values = times.empty() ? std::vector<double>{} : detail::weighted_mean(sampled, weights);
  for (std::size_t k = 1; k < values.size(); ++k) values[k] = std::max(values[k], values[k - 1]);
  return CumulativeHazardCurve(std::move(times), std::move(values));
}

/// Pools ranked trees from every client and keeps the tree_budget best.
/// Order: importance descending, then position in the client's ranking,
/// then client tag, so equal importances rotate across clients.
inline SurvivalForest union_forests(std::span<const SurvivalForest> client_forests,
                                    std::size_t tree_budget) {
  if (client_forests.empty()) throw std::invalid_argument("no client forests");
  struct Entry {
    double importance;
    std::size_t position;
    const std::string* tag;
    std::size_t forest;
    const SurvivalTree* tree;
  };
  std::vector<Entry> pool;
  SurvivalForest global;
  global.dimension = client_forests.front().dimension;
  for (std::size_t f = 0; f < client_forests.size(); ++f) {
    const auto& forest = client_forests[f];
    if (forest.dimension != global.dimension) throw std::invalid_argument("client forests differ in dimension");
    for (std::size_t t = 0; t < forest.trees.size(); ++t) {
      const auto& tree = forest.trees[t];
      if (!tree.importance) throw std::invalid_argument("unranked forest: tree without importance");
      pool.push_back({*tree.importance, t, &tree.client_tag, f, &tree});
    }
    global.grid.insert(global.grid.end(), forest.grid.begin(), forest.grid.end());
  }
  if (tree_budget == 0) throw std::invalid_argument("tree budget must be positive");
  if (tree_budget > pool.size()) throw std::invalid_argument("tree budget exceeds available trees");
  std::stable_sort(pool.begin(), pool.end(), [](const Entry& a, const Entry& b) {
    if (a.importance != b.importance) return a.importance > b.importance;
    if (a.position != b.position) return a.position < b.position;
    if (*a.tag != *b.tag) return *a.tag < *b.tag;
    return a.forest < b.forest;
  });
  for (std::size_t k = 0; k < tree_budget; ++k) global.trees.push_back(*pool[k].tree);
  std::sort(global.grid.begin(), global.grid.end());
  global.grid.erase(std::unique(global.grid.begin(), global.grid.end()), global.grid.end());
  return global;
}

// ---------------------------------------------------------------------------
// Orchestration

template <typename Model>
struct FederationResult {
  Model model;
  std::vector<RoundReport> rounds;
};

/// Cox coefficient averaging: shared standardization, local Newton fits,
/// weighted beta average, then the global baseline as the weighted average
/// of client Breslow curves under the global beta.
inline FederationResult<CoxModel> federate_cox(std::span<const ClientState> clients,
                                               const FederationPlan& plan,
                                               const CoxFitConfig& config = {}) {
  plan.validate();
  if (clients.empty()) throw std::invalid_argument("no clients");
  if (!plan.client_weights.empty() && plan.client_weights.size() != clients.size()) {
    throw std::invalid_argument("client weight count mismatch");
  }
  const auto order = detail::client_order(clients);
  const auto global_std = federated_standardization(clients);

  std::vector<CoxModel> local(clients.size());
  parallel_for(order.size(), plan.threads, [&](std::size_t k) {
    const auto& c = clients[order[k]];
    try {
      local[k] = fit_cox(c.train, config, global_std);
    } catch (const std::exception& e) {
      throw ClientError(c.client_id, e.what());
    }
  });

  std::vector<std::vector<double>> betas;
  std::vector<double> r;
  for (std::size_t k = 0; k < order.size(); ++k) {
    betas.push_back(local[k].beta);
    r.push_back(plan.client_weights.empty() ? static_cast<double>(clients[order[k]].n())
                                            : plan.client_weights[order[k]]);
  }
  CoxModel global;
  global.beta = aggregate_cox(betas, r);
  global.standardization = global_std;
  global.converged = std::all_of(local.begin(), local.end(), [](const CoxModel& m) { return m.converged; });

  std::vector<CumulativeHazardCurve> baselines;
  for (std::size_t k = 0; k < order.size(); ++k) {
    baselines.push_back(breslow_baseline(global.beta, global_std.apply(clients[order[k]].train)));
  }
  global.baseline = average_curves(baselines, r);

  RoundReport report;
  report.round_index = 0;
  report.global_snapshot = model_fingerprint(global);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& c = clients[order[k]];
    report.clients.push_back({c.client_id, local[k].loss,
                              detail::safe_cindex(predict_risk(global, c.test), c.test)});
  }
  return {std::move(global), {std::move(report)}};
}

/// FedAvg over full-batch neural training: each round broadcasts the global
/// weights, runs local_epochs_per_round local epochs per client, and averages
/// weights (and running norm statistics) with n_k / N.
inline FederationResult<NeuralRiskModel> federate_neural(std::span<const ClientState> clients,
                                                         const FederationPlan& plan,
                                                         NeuralVariant variant,
                                                         const TrainConfig& config) {
  plan.validate();
  config.validate();
  if (clients.empty()) throw std::invalid_argument("no clients");
  const auto order = detail::client_order(clients);
  const std::size_t p = clients.front().train.dimension();
  const auto global_std = federated_standardization(clients);
  NeuralRiskModel global = make_neural_model(variant, p, config, config.seed, global_std);

  std::vector<std::size_t> n;
  std::vector<NeuralTrainer> trainers;
  trainers.reserve(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& c = clients[order[k]];
    try {
      trainers.emplace_back(global, c.train, config.learning_rate, config.l2, dropout_seed(config.seed, k));
    } catch (const std::exception& e) {
      throw ClientError(c.client_id, e.what());
    }
    n.push_back(c.n());
  }

  std::vector<RoundReport> reports;
  for (int round = 0; round < plan.rounds; ++round) {
    const auto params = flatten_parameters(global);
    const auto stats = flatten_norm_stats(global);
    std::vector<std::vector<double>> client_params(order.size()), client_stats(order.size());
    std::vector<double> losses(order.size());
    parallel_for(order.size(), plan.threads, [&](std::size_t k) {
      auto& trainer = trainers[k];
      assign_parameters(trainer.model(), params);
      assign_norm_stats(trainer.model(), stats);
      if (!trainer.train(plan.local_epochs_per_round)) {
        throw ClientError(clients[order[k]].client_id, "local training diverged");
      }
      client_params[k] = flatten_parameters(trainer.model());
      client_stats[k] = flatten_norm_stats(trainer.model());
      losses[k] = trainer.loss_history().back();
    });
    assign_parameters(global, fedavg_weights(client_params, n));
    if (!stats.empty()) assign_norm_stats(global, fedavg_weights(client_stats, n));

    RoundReport report;
    report.round_index = round;
    report.global_snapshot = model_fingerprint(global);
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto& c = clients[order[k]];
      report.clients.push_back({c.client_id, losses[k],
                                detail::safe_cindex(predict_risk(global, c.test), c.test)});
    }
    reports.push_back(std::move(report));
  }
  return {std::move(global), std::move(reports)};
}

/// Forest union: each client grows a forest on 80% of its training split,
/// ranks the trees by C-index on the remaining 20%, and the orchestrator
/// keeps the tree_budget best trees across clients.
inline FederationResult<SurvivalForest> federate_forest(std::span<const ClientState> clients,
                                                        const FederationPlan& plan,
                                                        const ForestConfig& config,
                                                        double validation_ratio = 0.2) {
  plan.validate();
  if (clients.empty()) throw std::invalid_argument("no clients");
  const auto order = detail::client_order(clients);
  std::vector<SurvivalForest> ranked(order.size());
  parallel_for(order.size(), plan.threads, [&](std::size_t k) {
    const auto& c = clients[order[k]];
    try {
      auto [fit_part, val_part] = split(c.train, 1.0 - validation_ratio, derive_seed(config.seed, 99));
      auto forest = fit_forest(fit_part, config);
      for (auto& t : forest.trees) t.client_tag = c.client_id;
      ranked[k] = rank_trees(std::move(forest), val_part);
    } catch (const std::exception& e) {
      throw ClientError(c.client_id, e.what());
    }
  });
  SurvivalForest global = union_forests(ranked, plan.tree_budget);

  RoundReport report;
  report.round_index = 0;
  report.global_snapshot = model_fingerprint(global);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& c = clients[order[k]];
    const double mean_importance = [&] {
      double s = 0.0;
      for (const auto& t : ranked[k].trees) s += *t.importance;
      return s / static_cast<double>(ranked[k].trees.size());
    }();
    // forests have no training loss; report 1 - mean tree importance
    report.clients.push_back({c.client_id, 1.0 - mean_importance,
                              detail::safe_cindex(predict_mortality(global, c.test), c.test)});
  }
  return {std::move(global), {std::move(report)}};
}

struct FamilySettings {
  CoxFitConfig cox;
  TrainConfig neural;
  ForestConfig forest;
};

/// Dispatches on the model family after checking it matches the plan.
inline FederationResult<ModelState> run_federation(std::span<const ClientState> clients,
                                                   const FederationPlan& plan, ModelFamily family,
                                                   const FamilySettings& settings = {}) {
  if (strategy_for(family) != plan.strategy) {
    throw std::invalid_argument("strategy does not match model family " + to_string(family));
  }
  switch (family) {
    case ModelFamily::cox: {
      auto r = federate_cox(clients, plan, settings.cox);
      return {std::move(r.model), std::move(r.rounds)};
    }
    case ModelFamily::deepsurv:
    case ModelFamily::coxnnet: {
      auto r = federate_neural(clients, plan,
                               family == ModelFamily::deepsurv ? NeuralVariant::deepsurv : NeuralVariant::coxnnet,
                               settings.neural);
      return {std::move(r.model), std::move(r.rounds)};
    }
    case ModelFamily::rsf: {
      auto r = federate_forest(clients, plan, settings.forest);
      return {std::move(r.model), std::move(r.rounds)};
    }
  }
  throw std::logic_error("unreachable");
}

}  // namespace fedsurv
