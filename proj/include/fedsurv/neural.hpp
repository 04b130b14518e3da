#pragma once

// Neural risk functions trained on the Cox partial likelihood: a plain MLP
// (DeepSurv style) and a variant with batch normalization and dropout
// (Cox-nnet style). Training is full batch so every risk set is complete.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fedsurv/data.hpp"
#include "fedsurv/rng.hpp"
#include "fedsurv/survival.hpp"

namespace fedsurv {

enum class Activation { relu, linear };
enum class NeuralVariant { deepsurv, coxnnet };

inline std::string to_string(NeuralVariant v) {
  return v == NeuralVariant::deepsurv ? "deepsurv" : "coxnnet";
}

/// Dense layer: z = W a + b, then optional batch normalization (no affine
/// parameters), activation, and inverted dropout in training mode.
struct DenseLayer {
  Eigen::MatrixXd weights;  // outputs x inputs
  Eigen::VectorXd bias;
  Activation activation = Activation::linear;
  bool batch_norm = false;
  double dropout = 0.0;
  Eigen::VectorXd running_mean;  // batch_norm only
  Eigen::VectorXd running_var;

  std::size_t inputs() const { return static_cast<std::size_t>(weights.cols()); }
  std::size_t outputs() const { return static_cast<std::size_t>(weights.rows()); }
};

struct NeuralRiskModel {
  NeuralVariant variant = NeuralVariant::deepsurv;
  std::vector<DenseLayer> layers;
  Standardization input;  // applied to raw features before the first layer

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().inputs(); }

  void validate() const {
    if (layers.empty()) throw std::invalid_argument("neural model has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& L = layers[l];
      if (static_cast<std::size_t>(L.bias.size()) != L.outputs()) {
        throw std::invalid_argument("layer " + std::to_string(l) + ": bias size");
      }
      if (l > 0 && L.inputs() != layers[l - 1].outputs()) {
        throw std::invalid_argument("layer " + std::to_string(l) + ": dimensions do not chain");
      }
      if (!(L.dropout >= 0.0 && L.dropout < 1.0)) {
        throw std::invalid_argument("dropout rate must be in [0,1)");
      }
      if (L.batch_norm && (static_cast<std::size_t>(L.running_mean.size()) != L.outputs() ||
                           static_cast<std::size_t>(L.running_var.size()) != L.outputs())) {
        throw std::invalid_argument("layer " + std::to_string(l) + ": norm stats size");
      }
    }
    if (layers.back().outputs() != 1) throw std::invalid_argument("final layer must output one value");
    if (input.dimension() != input_dim()) throw std::invalid_argument("input standardization size");
  }
};

struct GridPoint {
  double learning_rate = 0.01;
  std::size_t hidden_width = 32;
  double l2 = 0.0;
};

struct TrainConfig {
  int epochs = 100;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
  double l2 = 0.0;
  std::size_t hidden_width = 0;   // 0: variant default (32 deepsurv, 16 coxnnet)
  int hidden_layers = -1;         // -1: variant default (2 deepsurv, 1 coxnnet)
  double dropout_rate = 0.3;      // coxnnet only
  std::vector<GridPoint> grid;    // empty: no search

  static std::vector<GridPoint> default_grid() {
    std::vector<GridPoint> g;
    for (double lr : {0.1, 0.01, 0.001}) {
      for (std::size_t w : {16, 32}) {
        for (double l2 : {0.0, 1e-4}) g.push_back({lr, w, l2});
      }
    }
    return g;
  }

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (!(l2 >= 0.0)) throw std::invalid_argument("l2 must be non-negative");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("dropout must be in [0,1)");
  }
};

/// Builds a freshly initialized network: Glorot-uniform weights, zero biases.
inline NeuralRiskModel make_neural_model(NeuralVariant variant, std::size_t input_dim,
                                         const TrainConfig& config, std::uint64_t seed,
                                         Standardization input = {}) {
  const bool cnn = variant == NeuralVariant::coxnnet;
  const std::size_t width = config.hidden_width ? config.hidden_width : (cnn ? 16 : 32);
  const int depth = config.hidden_layers >= 0 ? config.hidden_layers : (cnn ? 1 : 2);
  NeuralRiskModel m;
  m.variant = variant;
  m.input = input.dimension() == input_dim ? std::move(input) : Standardization::identity(input_dim);
  Rng rng(seed);
  auto add_layer = [&](std::size_t in, std::size_t out, Activation act, bool hidden) {
    DenseLayer L;
    const double s = std::sqrt(6.0 / static_cast<double>(in + out));
    L.weights.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    for (Eigen::Index r = 0; r < L.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < L.weights.cols(); ++c) L.weights(r, c) = rng.uniform(-s, s);
    }
    L.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out));
    L.activation = act;
    if (hidden && cnn) {
      L.batch_norm = true;
      L.dropout = config.dropout_rate;
      L.running_mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out));
      L.running_var = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(out));
    }
    m.layers.push_back(std::move(L));
  };
  std::size_t in = input_dim;
  for (int h = 0; h < depth; ++h) {
    add_layer(in, width, Activation::relu, true);
    in = width;
  }
  add_layer(in, 1, Activation::linear, false);
  return m;
}

/// Flattened parameter count: per layer, weights row-major then bias.
inline std::size_t parameter_count(const NeuralRiskModel& m) {
  std::size_t n = 0;
  for (const auto& L : m.layers) n += L.outputs() * L.inputs() + L.outputs();
  return n;
}

inline std::vector<double> flatten_parameters(const NeuralRiskModel& m) {
  std::vector<double> out;
  out.reserve(parameter_count(m));
  for (const auto& L : m.layers) {
    for (Eigen::Index r = 0; r < L.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < L.weights.cols(); ++c) out.push_back(L.weights(r, c));
    }
    for (Eigen::Index r = 0; r < L.bias.size(); ++r) out.push_back(L.bias(r));
  }
  return out;
}

inline void assign_parameters(NeuralRiskModel& m, std::span<const double> flat) {
  if (flat.size() != parameter_count(m)) throw std::invalid_argument("parameter vector length mismatch");
  std::size_t k = 0;
  for (auto& L : m.layers) {
    for (Eigen::Index r = 0; r < L.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < L.weights.cols(); ++c) L.weights(r, c) = flat[k++];
    }
    for (Eigen::Index r = 0; r < L.bias.size(); ++r) L.bias(r) = flat[k++];
  }
}

/// Running batch-norm statistics, per normalized layer: means then variances.
inline std::vector<double> flatten_norm_stats(const NeuralRiskModel& m) {
  std::vector<double> out;
  for (const auto& L : m.layers) {
    if (!L.batch_norm) continue;
    out.insert(out.end(), L.running_mean.data(), L.running_mean.data() + L.running_mean.size());
    out.insert(out.end(), L.running_var.data(), L.running_var.data() + L.running_var.size());
  }
  return out;
}

inline void assign_norm_stats(NeuralRiskModel& m, std::span<const double> flat) {
  std::size_t k = 0;
  for (auto& L : m.layers) {
    if (!L.batch_norm) continue;
    if (k + 2 * L.outputs() > flat.size()) throw std::invalid_argument("norm stats length mismatch");
    for (Eigen::Index r = 0; r < L.running_mean.size(); ++r) L.running_mean(r) = flat[k++];
    for (Eigen::Index r = 0; r < L.running_var.size(); ++r) L.running_var(r) = flat[k++];
  }
  if (k != flat.size()) throw std::invalid_argument("norm stats length mismatch");
}

namespace detail {

inline constexpr double kNormEpsilon = 1e-5;

struct LayerCache {
  Eigen::MatrixXd input;       // n x in
  Eigen::MatrixXd normalized;  // n x out, after batch norm (or z when none)
  Eigen::RowVectorXd inv_std;  // batch-norm scale used
  Eigen::RowVectorXd batch_mean;
  Eigen::RowVectorXd batch_var;
  Eigen::MatrixXd mask;  // dropout multipliers, empty when unused
};

struct ForwardPass {
  Eigen::VectorXd output;
  std::vector<LayerCache> caches;
};

inline Eigen::MatrixXd design_matrix(const SurvivalDataset& data, const Standardization& input) {
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto p = static_cast<Eigen::Index>(data.dimension());
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& f = data[static_cast<std::size_t>(i)].features;
    for (Eigen::Index j = 0; j < p; ++j) {
      x(i, j) = (f[static_cast<std::size_t>(j)] - input.means[static_cast<std::size_t>(j)]) /
                input.scales[static_cast<std::size_t>(j)];
    }
  }
  return x;
}

// `x` is already standardized. Dropout masks are drawn row by row from `rng`
// only in training mode.
inline ForwardPass forward_batch(const NeuralRiskModel& model, const Eigen::MatrixXd& x,
                                 bool training, Rng* rng) {
  if (static_cast<std::size_t>(x.cols()) != model.input_dim()) {
    throw std::invalid_argument("feature dimension mismatch");
  }
  ForwardPass pass;
  pass.caches.resize(model.layers.size());
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& L = model.layers[l];
    auto& cache = pass.caches[l];
    cache.input = a;
    Eigen::MatrixXd z = a * L.weights.transpose();
    z.rowwise() += L.bias.transpose();
    if (L.batch_norm) {
      if (training) {
        cache.batch_mean = z.colwise().mean();
        z.rowwise() -= cache.batch_mean;
        cache.batch_var = z.array().square().colwise().mean();
        cache.inv_std = (cache.batch_var.array() + kNormEpsilon).rsqrt();
      } else {
        z.rowwise() -= L.running_mean.transpose();
        cache.inv_std = (L.running_var.transpose().array() + kNormEpsilon).rsqrt();
      }
      z.array().rowwise() *= cache.inv_std.array();
    }
    cache.normalized = z;
    if (L.activation == Activation::relu) z = z.cwiseMax(0.0);
    if (training && L.dropout > 0.0) {
      if (rng == nullptr) throw std::invalid_argument("dropout in training mode needs a random stream");
      const double keep = 1.0 - L.dropout;
      cache.mask.resize(z.rows(), z.cols());
      for (Eigen::Index i = 0; i < z.rows(); ++i) {
        for (Eigen::Index j = 0; j < z.cols(); ++j) {
          cache.mask(i, j) = rng->uniform() < keep ? 1.0 / keep : 0.0;
        }
      }
      z.array() *= cache.mask.array();
    }
    a = std::move(z);
  }
  pass.output = a.col(0);
  return pass;
}

struct PartialLikelihood {
  double loss = 0.0;
  std::vector<double> d_eta;  // dloss/deta, empty unless requested
  std::size_t events = 0;
};

// Breslow negative log partial likelihood as a function of per-record
// log-risks eta.
inline PartialLikelihood partial_likelihood(std::span<const double> eta,
                                            const SurvivalDataset& data, bool gradient) {
  if (eta.size() != data.size()) throw std::invalid_argument("score count mismatch");
  PartialLikelihood out;
  const auto& order = data.sort_index();
  const std::size_t n = order.size();
  struct Group {
    std::size_t begin, end;
    double log_weight;  // log(d / S0)
  };
  std::vector<Group> groups;
  double shift = -std::numeric_limits<double>::infinity();
  double s0 = 0.0;
  std::size_t end = n;
  while (end > 0) {
    const double t = data[order[end - 1]].time;
    std::size_t begin = end;
    while (begin > 0 && data[order[begin - 1]].time == t) --begin;
    for (std::size_t k = begin; k < end; ++k) {
      const double e = eta[order[k]];
      if (e > shift) {
        s0 *= std::exp(shift - e);
        shift = e;
      }
      s0 += std::exp(e - shift);
    }
    const double log_s0 = std::log(s0) + shift;
    std::size_t d = 0;
    for (std::size_t k = begin; k < end; ++k) {
      if (!data[order[k]].event) continue;
      ++d;
      out.loss += log_s0 - eta[order[k]];
    }
    out.events += d;
    groups.push_back({begin, end, d > 0 ? std::log(static_cast<double>(d)) - log_s0
                                        : -std::numeric_limits<double>::infinity()});
    end = begin;
  }
  if (!gradient) return out;

  out.d_eta.assign(n, 0.0);
  // ascending: running log-sum over event groups at or before each time
  double acc = -std::numeric_limits<double>::infinity();
  for (auto g = groups.rbegin(); g != groups.rend(); ++g) {
    if (std::isfinite(g->log_weight)) {
      const double hi = std::max(acc, g->log_weight);
      acc = hi + std::log(std::exp(acc - hi) + std::exp(g->log_weight - hi));
    }
    for (std::size_t k = g->begin; k < g->end; ++k) {
      const std::size_t i = order[k];
      const double hazard = std::isfinite(acc) ? std::exp(eta[i] + acc) : 0.0;
      out.d_eta[i] = hazard - (data[i].event ? 1.0 : 0.0);
    }
  }
  return out;
}

}  // namespace detail

/// phi_w(x) for one raw feature vector. Inference mode uses running norm
/// statistics and no dropout, so it is deterministic.
inline double forward(const NeuralRiskModel& model, std::span<const double> features,
                      bool training_mode = false, Rng* rng = nullptr) {
  const auto z = model.input.apply(features);
  Eigen::MatrixXd x(1, static_cast<Eigen::Index>(z.size()));
  for (std::size_t j = 0; j < z.size(); ++j) x(0, static_cast<Eigen::Index>(j)) = z[j];
  return detail::forward_batch(model, x, training_mode, rng).output(0);
}

inline std::vector<double> predict_risk(const NeuralRiskModel& model, const SurvivalDataset& data) {
  if (data.dimension() != model.input_dim()) throw std::invalid_argument("feature dimension mismatch");
  const auto pass = detail::forward_batch(model, detail::design_matrix(data, model.input), false, nullptr);
  return {pass.output.data(), pass.output.data() + pass.output.size()};
}

/// Negative log partial likelihood with g = phi_w, over the full dataset.
inline double neural_cox_loss(const NeuralRiskModel& model, const SurvivalDataset& data,
                              bool training_mode = false, Rng* rng = nullptr) {
  const auto pass = detail::forward_batch(model, detail::design_matrix(data, model.input),
                                          training_mode, rng);
  return detail::partial_likelihood({pass.output.data(), static_cast<std::size_t>(pass.output.size())},
                                    data, false)
      .loss;
}

struct LayerGradient {
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;
};

struct NeuralGradient {
  double loss = 0.0;
  std::size_t events = 0;
  std::vector<LayerGradient> layers;
  // batch statistics seen in training mode, for running-average updates
  std::vector<Eigen::RowVectorXd> batch_means;
  std::vector<Eigen::RowVectorXd> batch_vars;

  std::vector<double> flatten() const {
    std::vector<double> out;
    for (const auto& g : layers) {
      for (Eigen::Index r = 0; r < g.weights.rows(); ++r) {
        for (Eigen::Index c = 0; c < g.weights.cols(); ++c) out.push_back(g.weights(r, c));
      }
      for (Eigen::Index r = 0; r < g.bias.size(); ++r) out.push_back(g.bias(r));
    }
    return out;
  }
};

namespace detail {

inline NeuralGradient backward_matrix(const NeuralRiskModel& model, const Eigen::MatrixXd& x,
                                      const SurvivalDataset& data, bool training, Rng* rng) {
  const auto pass = forward_batch(model, x, training, rng);
  const auto pl = partial_likelihood(
      {pass.output.data(), static_cast<std::size_t>(pass.output.size())}, data, true);
  NeuralGradient grad;
  grad.loss = pl.loss;
  grad.events = pl.events;
  grad.layers.resize(model.layers.size());

  Eigen::MatrixXd upstream(static_cast<Eigen::Index>(data.size()), 1);
  for (std::size_t i = 0; i < data.size(); ++i) upstream(static_cast<Eigen::Index>(i), 0) = pl.d_eta[i];

  for (std::size_t l = model.layers.size(); l-- > 0;) {
    const auto& L = model.layers[l];
    const auto& cache = pass.caches[l];
    Eigen::MatrixXd d = std::move(upstream);
    if (cache.mask.size() > 0) d.array() *= cache.mask.array();
    if (L.activation == Activation::relu) {
      d.array() *= (cache.normalized.array() > 0.0).cast<double>();
    }
    if (L.batch_norm) {
      if (training) {
        const Eigen::RowVectorXd mean_d = d.colwise().mean();
        const Eigen::RowVectorXd mean_dx = (d.array() * cache.normalized.array()).colwise().mean();
        Eigen::MatrixXd centered = d.rowwise() - mean_d;
        centered.array() -= cache.normalized.array().rowwise() * mean_dx.array();
        centered.array().rowwise() *= cache.inv_std.array();
        d = std::move(centered);
      } else {
        d.array().rowwise() *= cache.inv_std.array();
      }
    }
    grad.layers[l].weights = d.transpose() * cache.input;
    grad.layers[l].bias = d.colwise().sum().transpose();
    if (l > 0) upstream = d * L.weights;
  }
  for (const auto& c : pass.caches) {
    grad.batch_means.push_back(c.batch_mean);
    grad.batch_vars.push_back(c.batch_var);
  }
  return grad;
}

}  // namespace detail

/// Exact gradient of neural_cox_loss with respect to every weight and bias.
/// In training mode the dropout mask comes from `rng`, so passing copies of
/// the same stream reproduces the same objective.
inline NeuralGradient backward(const NeuralRiskModel& model, const SurvivalDataset& data,
                               bool training_mode = false, Rng* rng = nullptr) {
  if (data.dimension() != model.input_dim()) throw std::invalid_argument("feature dimension mismatch");
  return detail::backward_matrix(model, detail::design_matrix(data, model.input), data,
                                 training_mode, rng);
}

/// Full-batch gradient descent on one client's data. The objective is the
/// partial likelihood averaged over events plus l2 * |W|^2.
class NeuralTrainer {
 public:
  static constexpr double kNormMomentum = 0.1;

  NeuralTrainer(NeuralRiskModel model, const SurvivalDataset& train, double learning_rate,
                double l2, std::uint64_t dropout_seed)
      : model_(std::move(model)),
        data_(train),
        x_(detail::design_matrix(train, model_.input)),
        learning_rate_(learning_rate),
        l2_(l2),
        rng_(dropout_seed) {
    model_.validate();
    if (train.event_count() == 0) throw std::invalid_argument("cannot fit: zero events");
  }

  /// One epoch; returns the training loss evaluated before the update.
  double step() {
    auto g = detail::backward_matrix(model_, x_, data_, true, &rng_);
    const double scale = 1.0 / static_cast<double>(g.events);
    for (std::size_t l = 0; l < model_.layers.size(); ++l) {
      auto& L = model_.layers[l];
      L.weights -= learning_rate_ * (scale * g.layers[l].weights + 2.0 * l2_ * L.weights);
      L.bias -= learning_rate_ * scale * g.layers[l].bias;
      if (L.batch_norm) {
        L.running_mean = (1.0 - kNormMomentum) * L.running_mean +
                         kNormMomentum * g.batch_means[l].transpose();
        L.running_var = (1.0 - kNormMomentum) * L.running_var +
                        kNormMomentum * g.batch_vars[l].transpose();
      }
    }
    history_.push_back(g.loss);
    return g.loss;
  }

  /// Runs `epochs` steps; returns false as soon as the loss or any weight
  /// stops being finite.
  bool train(int epochs) {
    for (int e = 0; e < epochs; ++e) {
      const double loss = step();
      if (!std::isfinite(loss) || !finite_weights()) return false;
    }
    return true;
  }

  bool finite_weights() const {
    for (const auto& L : model_.layers) {
      if (!L.weights.allFinite() || !L.bias.allFinite()) return false;
    }
    return true;
  }

  const NeuralRiskModel& model() const { return model_; }
  NeuralRiskModel& model() { return model_; }
  const std::vector<double>& loss_history() const { return history_; }

 private:
  NeuralRiskModel model_;
  const SurvivalDataset& data_;
  Eigen::MatrixXd x_;
  double learning_rate_;
  double l2_;
  Rng rng_;
  std::vector<double> history_;
};

/// Dropout stream for client `k`; local training uses stream 0.
inline std::uint64_t dropout_seed(std::uint64_t seed, std::size_t client) {
  return derive_seed(seed, 1000 + client);
}

namespace detail {

inline NeuralRiskModel train_neural_once(const SurvivalDataset& train, NeuralVariant variant,
                                         TrainConfig config, const Standardization& input,
                                         std::vector<double>* history) {
  double lr = config.learning_rate;
  for (int attempt = 0; attempt <= 3; ++attempt) {
    NeuralTrainer trainer(make_neural_model(variant, train.dimension(), config, config.seed, input),
                          train, lr, config.l2, dropout_seed(config.seed, 0));
    if (trainer.train(config.epochs)) {
      if (history) *history = trainer.loss_history();
      return trainer.model();
    }
    lr *= 0.5;
  }
  throw std::runtime_error("neural training diverged after 3 learning-rate halvings");
}

}  // namespace detail

/// Trains a network for config.epochs full-batch epochs. With a grid, picks
/// the point with the best C-index on an internal 80/20 split of `train`,
/// then refits on all of `train`.
inline NeuralRiskModel fit_neural(const SurvivalDataset& train, NeuralVariant variant,
                                  const TrainConfig& config,
                                  std::optional<Standardization> standardization = std::nullopt,
                                  std::vector<double>* loss_history = nullptr) {
  config.validate();
  if (train.event_count() == 0) throw std::invalid_argument("cannot fit: zero events");
  const Standardization input = standardization ? *standardization : Standardization::fit(train);
  TrainConfig chosen = config;
  chosen.grid.clear();
  if (!config.grid.empty()) {
    auto [fit_part, val_part] = split(train, 0.8, derive_seed(config.seed, 77));
    double best = -1.0;
    for (const auto& point : config.grid) {
      TrainConfig trial = chosen;
      trial.learning_rate = point.learning_rate;
      trial.hidden_width = point.hidden_width;
      trial.l2 = point.l2;
      double score = -1.0;
      try {
        const auto m = detail::train_neural_once(fit_part, variant, trial, input, nullptr);
        score = concordance_index(predict_risk(m, val_part), val_part);
      } catch (const std::runtime_error&) {
        // diverged or no comparable validation pairs: the point loses
      } catch (const std::invalid_argument&) {
      }
      if (score > best) {
        best = score;
        chosen.learning_rate = trial.learning_rate;
        chosen.hidden_width = trial.hidden_width;
        chosen.l2 = trial.l2;
      }
    }
  }
  return detail::train_neural_once(train, variant, chosen, input, loss_history);
}

}  // namespace fedsurv
