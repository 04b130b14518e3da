#pragma once

// Linear Cox proportional-hazards model with Breslow ties.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "fedsurv/survival.hpp"

namespace fedsurv {

struct CoxFitConfig {
  int max_iterations = 50;
  double tolerance = 1e-9;  // on the change in penalized loss
  double ridge = 1e-6;
  int step_halving_limit = 10;

  void validate() const {
    if (max_iterations < 1 || step_halving_limit < 1 || !(tolerance > 0.0) ||
        !(ridge >= 0.0)) {
      throw std::invalid_argument("invalid CoxFitConfig");
    }
  }
};

struct CoxModel {
  std::vector<double> beta;  // on the standardized scale
  CumulativeHazardCurve baseline;
  Standardization standardization;
  bool converged = false;
  int iterations = 0;
  double loss = 0.0;  // penalized training loss at beta
};

/// Loss, gradient and (optionally) Hessian of the ridge-penalized negative
/// log partial likelihood. `events == 0` flags the degenerate empty-sum case.
struct CoxEvaluation {
  double loss = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
  std::size_t events = 0;

  bool no_events() const { return events == 0; }
};

enum class CoxDerivatives { none, gradient, hessian };

inline double linear_predictor(std::span<const double> beta,
                               std::span<const double> x) {
  if (beta.size() != x.size()) throw std::invalid_argument("feature dimension mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) s += beta[j] * x[j];
  return s;
}

inline CoxEvaluation cox_evaluate(std::span<const double> beta,
                                  const SurvivalDataset& data, double ridge = 0.0,
                                  CoxDerivatives want = CoxDerivatives::gradient) {
  const std::size_t p = data.dimension();
  if (beta.size() != p) throw std::invalid_argument("beta dimension mismatch");
  const bool grad = want != CoxDerivatives::none;
  const bool hess = want == CoxDerivatives::hessian;

  CoxEvaluation out;
  out.gradient = Eigen::VectorXd::Zero(grad ? static_cast<Eigen::Index>(p) : 0);
  out.hessian = Eigen::MatrixXd::Zero(hess ? static_cast<Eigen::Index>(p) : 0,
                                      hess ? static_cast<Eigen::Index>(p) : 0);
  const Eigen::Map<const Eigen::VectorXd> b(beta.data(), static_cast<Eigen::Index>(p));

  // Walk times from latest to earliest, keeping risk-set sums scaled by
  // exp(-shift) where shift is the running maximum linear predictor.
  double shift = -std::numeric_limits<double>::infinity();
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(grad ? static_cast<Eigen::Index>(p) : 0);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(hess ? static_cast<Eigen::Index>(p) : 0,
                                             hess ? static_cast<Eigen::Index>(p) : 0);

  const auto& order = data.sort_index();
  std::size_t end = order.size();
  while (end > 0) {
    const double t = data[order[end - 1]].time;
    std::size_t begin = end;
    while (begin > 0 && data[order[begin - 1]].time == t) --begin;

    for (std::size_t k = begin; k < end; ++k) {
      const auto& r = data[order[k]];
      const Eigen::Map<const Eigen::VectorXd> x(r.features.data(),
                                                static_cast<Eigen::Index>(p));
      const double eta = b.dot(x);
      if (eta > shift) {
        const double f = std::exp(shift - eta);
        s0 *= f;
        if (grad) s1 *= f;
        if (hess) s2 *= f;
        shift = eta;
      }
      const double w = std::exp(eta - shift);
      s0 += w;
      if (grad) s1.noalias() += w * x;
      if (hess) s2.noalias() += w * x * x.transpose();
    }

    Eigen::VectorXd mean;
    if (grad) mean = s1 / s0;
    for (std::size_t k = begin; k < end; ++k) {
      const auto& r = data[order[k]];
      if (!r.event) continue;
      const Eigen::Map<const Eigen::VectorXd> x(r.features.data(),
                                                static_cast<Eigen::Index>(p));
      ++out.events;
      out.loss += std::log(s0) + shift - b.dot(x);
      if (grad) out.gradient.noalias() -= x - mean;
      if (hess) out.hessian.noalias() += s2 / s0 - mean * mean.transpose();
    }
    end = begin;
  }

  if (ridge > 0.0) {
    out.loss += ridge * b.squaredNorm();
    if (grad) out.gradient.noalias() += 2.0 * ridge * b;
    if (hess) out.hessian.diagonal().array() += 2.0 * ridge;
  }
  return out;
}

/// Negative log partial likelihood, plus ridge * |beta|^2 when ridge > 0.
inline double cox_loss(std::span<const double> beta, const SurvivalDataset& data,
                       double ridge = 0.0) {
  return cox_evaluate(beta, data, ridge, CoxDerivatives::none).loss;
}

inline std::vector<double> cox_gradient(std::span<const double> beta,
                                        const SurvivalDataset& data,
                                        double ridge = 0.0) {
  const auto e = cox_evaluate(beta, data, ridge, CoxDerivatives::gradient);
  return {e.gradient.data(), e.gradient.data() + e.gradient.size()};
}

/// Breslow estimate of the cumulative baseline hazard for a fixed beta.
inline CumulativeHazardCurve breslow_baseline(std::span<const double> beta,
                                              const SurvivalDataset& data) {
  if (beta.size() != data.dimension()) {
    throw std::invalid_argument("beta dimension mismatch");
  }
  if (data.empty()) throw std::invalid_argument("empty dataset");
  const auto& order = data.sort_index();
  struct Step {
    double time;
    std::size_t events;
    double denom;
  };
  std::vector<Step> steps;
  double s0 = 0.0;
  std::size_t end = order.size();
  while (end > 0) {
    const double t = data[order[end - 1]].time;
    std::size_t begin = end;
    std::size_t d = 0;
    while (begin > 0 && data[order[begin - 1]].time == t) {
      --begin;
      const auto& r = data[order[begin]];
      s0 += std::exp(linear_predictor(beta, r.features));
      if (r.event) ++d;
    }
    if (d > 0) steps.push_back({t, d, s0});
    end = begin;
  }
  std::vector<double> ts;
  std::vector<double> hs;
  double h = 0.0;
  for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
    h += static_cast<double>(it->events) / it->denom;
    ts.push_back(it->time);
    hs.push_back(h);
  }
  return CumulativeHazardCurve(std::move(ts), std::move(hs));
}

namespace detail {

inline Eigen::VectorXd newton_direction(Eigen::MatrixXd hessian,
                                        const Eigen::VectorXd& gradient) {
  Eigen::LLT<Eigen::MatrixXd> llt(hessian);
  if (llt.info() == Eigen::Success) return llt.solve(-gradient);
  // ridge bump, once
  const double p = static_cast<double>(hessian.rows());
  const double bump = 1e-4 * (1.0 + std::abs(hessian.trace()) / p);
  hessian.diagonal().array() += bump;
  llt.compute(hessian);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("cannot fit: singular Hessian");
  }
  return llt.solve(-gradient);
}

}  // namespace detail

/// Newton-Raphson with step halving on the ridge-penalized loss. Features are
/// standardized first, with `standardization` when given (federated runs
/// share one) or with the training moments otherwise.
inline CoxModel fit_cox(const SurvivalDataset& train, const CoxFitConfig& config = {},
                        std::optional<Standardization> standardization = std::nullopt) {
  config.validate();
  if (train.dimension() == 0) throw std::invalid_argument("cannot fit: no features");
  if (train.event_count() == 0) throw std::invalid_argument("cannot fit: zero events");

  CoxModel model;
  model.standardization = standardization ? std::move(*standardization)
                                          : Standardization::fit(train);
  model.standardization.validate();
  if (model.standardization.dimension() != train.dimension()) {
    throw std::invalid_argument("standardization dimension mismatch");
  }
  const SurvivalDataset z = model.standardization.apply(train);
  const std::size_t p = train.dimension();

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  auto span_of = [p](const Eigen::VectorXd& v) {
    return std::span<const double>(v.data(), p);
  };
  CoxEvaluation current = cox_evaluate(span_of(beta), z, config.ridge, CoxDerivatives::hessian);

  for (int iter = 0; iter < config.max_iterations; ++iter) {
    model.iterations = iter + 1;
    const Eigen::VectorXd direction =
        detail::newton_direction(current.hessian, current.gradient);
    double step = 1.0;
    bool accepted = false;
    Eigen::VectorXd candidate;
    for (int h = 0; h <= config.step_halving_limit; ++h) {
      candidate = beta + step * direction;
      const double loss = cox_loss(span_of(candidate), z, config.ridge);
      if (std::isfinite(loss) && loss <= current.loss) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const double previous = current.loss;
    beta = candidate;
    current = cox_evaluate(span_of(beta), z, config.ridge, CoxDerivatives::hessian);
    if (previous - current.loss < config.tolerance) {
      model.converged = true;
      break;
    }
  }

  model.beta.assign(beta.data(), beta.data() + beta.size());
  model.loss = current.loss;
  model.baseline = breslow_baseline(model.beta, z);
  return model;
}

/// Linear predictor on the model's standardized scale (not exponentiated).
inline double predict_risk(const CoxModel& model, std::span<const double> features) {
  return linear_predictor(model.beta, model.standardization.apply(features));
}

inline std::vector<double> predict_risk(const CoxModel& model, const SurvivalDataset& data) {
  std::vector<double> out;
  out.reserve(data.size());
  for (const auto& r : data.records()) out.push_back(predict_risk(model, r.features));
  return out;
}

}  // namespace fedsurv
