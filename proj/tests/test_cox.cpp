#include <gtest/gtest.h>

#include <cmath>

#include "fedsurv/cox.hpp"
#include "fedsurv/data.hpp"
#include "helpers.hpp"

using namespace fedsurv;
using fedsurv::oracle::make_data;

namespace {

std::vector<double> fd_gradient(const std::vector<double>& beta, const SurvivalDataset& d, double h = 1e-5) {
  std::vector<double> g(beta.size());
  for (std::size_t j = 0; j < beta.size(); ++j) {
    auto up = beta, dn = beta;
    up[j] += h;
    dn[j] -= h;
    g[j] = (cox_loss(up, d) - cox_loss(dn, d)) / (2 * h);
  }
  return g;
}

double sum_log_risk_sets(const SurvivalDataset& d) {
  double s = 0.0;
  for (const auto& r : d.records()) {
    if (!r.event) continue;
    std::size_t at_risk = 0;
    for (const auto& q : d.records()) at_risk += q.time >= r.time;
    s += std::log(static_cast<double>(at_risk));
  }
  return s;
}

}  // namespace

TEST(CoxLoss, ZeroBetaTwoEvents) {
  const auto d = make_data({1, 2}, {1, 1});
  EXPECT_NEAR(cox_loss(std::vector<double>{0.0}, d), std::log(2.0), 1e-15);
}

TEST(CoxLoss, HandEvaluated) {
  const auto d = make_data({1, 2}, {1, 1}, {{1}, {0}});
  EXPECT_NEAR(cox_loss(std::vector<double>{1.0}, d), std::log(std::exp(1.0) + 1) - 1, 1e-14);
}

TEST(CoxLoss, AllCensoredIsZeroAndFlagged) {
  const auto d = make_data({1, 2, 3}, {0, 0, 0}, {{1}, {2}, {3}});
  const auto ev = cox_evaluate(std::vector<double>{0.7}, d);
  EXPECT_EQ(ev.loss, 0.0);
  EXPECT_TRUE(ev.no_events());
  EXPECT_EQ(cox_gradient(std::vector<double>{0.7}, d), std::vector<double>{0.0});
}

TEST(CoxLoss, DimensionMismatch) {
  const auto d = make_data({1, 2}, {1, 1});
  EXPECT_THROW(cox_loss(std::vector<double>{1, 2}, d), std::invalid_argument);
}

TEST(CoxLoss, MatchesNaiveTwoLoop) {
  Rng rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const auto d = oracle::random_data(rng, 2 + rng.index(25), 3);
    std::vector<double> beta{rng.normal(), rng.normal(), rng.normal()};
    std::vector<double> g;
    for (const auto& r : d.records()) g.push_back(linear_predictor(beta, r.features));
    EXPECT_LE(oracle::rel_error(cox_loss(beta, d), oracle::naive_partial_likelihood(g, d)), 1e-12);
  }
}

TEST(CoxLoss, LargePredictorsStayFinite) {
  const auto d = make_data({1, 2, 3}, {1, 1, 1}, {{800}, {-800}, {400}});
  EXPECT_TRUE(std::isfinite(cox_loss(std::vector<double>{1.0}, d)));
}

TEST(CoxGradient, HandEvaluated) {
  const auto d = make_data({1, 2}, {1, 1}, {{1}, {0}});
  EXPECT_NEAR(cox_gradient(std::vector<double>{0.0}, d)[0], -0.5, 1e-15);
}

TEST(CoxGradient, MatchesFiniteDifferences) {
  Rng rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t p = 1 + rng.index(5);
    const auto d = oracle::random_data(rng, 2 + rng.index(19), p);
    std::vector<double> beta(p);
    for (auto& b : beta) b = rng.normal();
    const auto g = cox_gradient(beta, d);
    const auto fd = fd_gradient(beta, d);
    for (std::size_t j = 0; j < p; ++j) EXPECT_LE(oracle::rel_error(g[j], fd[j]), 1e-6);
  }
}

TEST(CoxGradient, RidgeTermAdded) {
  const auto d = make_data({1, 2, 3}, {1, 0, 1}, {{0.2}, {1.0}, {-0.4}});
  const std::vector<double> beta{0.3};
  const auto plain = cox_evaluate(beta, d, 0.0);
  const auto ridged = cox_evaluate(beta, d, 0.5);
  EXPECT_NEAR(ridged.gradient(0) - plain.gradient(0), 2 * 0.5 * 0.3, 1e-14);
  EXPECT_NEAR(ridged.loss - plain.loss, 0.5 * 0.09, 1e-14);
}

TEST(CoxHessian, MatchesFiniteDifferenceOfGradient) {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const auto d = oracle::random_data(rng, 15, 3);
    std::vector<double> beta{rng.normal(), rng.normal(), rng.normal()};
    const auto ev = cox_evaluate(beta, d, 0.0, CoxDerivatives::hessian);
    for (std::size_t j = 0; j < 3; ++j) {
      auto up = beta, dn = beta;
      up[j] += 1e-5;
      dn[j] -= 1e-5;
      const auto gu = cox_gradient(up, d), gd = cox_gradient(dn, d);
      for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_NEAR(ev.hessian(k, j), (gu[k] - gd[k]) / 2e-5, 1e-6);
      }
    }
  }
}

TEST(CoxLoss, Convex) {
  Rng rng(24);
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = oracle::random_data(rng, 20, 2);
    std::vector<double> a{rng.normal(), rng.normal()}, b{rng.normal(), rng.normal()};
    const double lam = rng.uniform();
    std::vector<double> mid{lam * a[0] + (1 - lam) * b[0], lam * a[1] + (1 - lam) * b[1]};
    EXPECT_LE(cox_loss(mid, d), lam * cox_loss(a, d) + (1 - lam) * cox_loss(b, d) + 1e-9);
  }
}

TEST(CoxLoss, ZeroBetaEqualsSumLogRiskSets) {
  Rng rng(25);
  for (int trial = 0; trial < 20; ++trial) {
    const auto d = oracle::random_data(rng, 5 + rng.index(40), 2);
    EXPECT_NEAR(cox_loss(std::vector<double>{0, 0}, d), sum_log_risk_sets(d), 1e-12);
  }
}

TEST(Breslow, ZeroBetaIsNelsonAalen) {
  Rng rng(26);
  for (int trial = 0; trial < 20; ++trial) {
    const auto d = oracle::random_data(rng, 5 + rng.index(40), 2);
    EXPECT_EQ(breslow_baseline(std::vector<double>{0, 0}, d), nelson_aalen(d));
  }
}

TEST(Breslow, HandEvaluated) {
  const auto d = make_data({1, 2}, {1, 1}, {{1}, {0}});
  const auto h = breslow_baseline(std::vector<double>{std::log(2.0)}, d);
  EXPECT_NEAR(h.at(1), 1.0 / 3, 1e-15);
  EXPECT_NEAR(h.at(2), 4.0 / 3, 1e-15);
}

TEST(Breslow, AllCensoredIsFlat) {
  EXPECT_TRUE(breslow_baseline(std::vector<double>{0.5}, make_data({1, 2}, {0, 0}, {{1}, {0}})).empty());
}

TEST(FitCox, ZeroEventsError) {
  try {
    fit_cox(make_data({1, 2, 3}, {0, 0, 0}, {{1}, {2}, {3}}));
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_STREQ(e.what(), "cannot fit: zero events");
  }
}

TEST(FitCox, RecoversLinearTruth) {
  const std::vector<double> truth{0.5, -0.5, 1.0};
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto d = generate_scenario(linear_scenario(truth, 2000, 0.3, seed)).front().second;
    const auto m = fit_cox(d);
    EXPECT_TRUE(m.converged);
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_NEAR(m.beta[j] / m.standardization.scales[j], truth[j], 0.15);
    }
  }
}

TEST(FitCox, NullCovariateNearZero) {
  const auto d = generate_scenario(linear_scenario({0.0}, 2000, 0.3, 9)).front().second;
  EXPECT_LE(std::abs(fit_cox(d).beta[0]), 0.1);
}

TEST(FitCox, PerfectSeparationStaysBounded) {
  // x decreasing in time: the likelihood keeps improving as beta grows
  const auto d = make_data({1, 2, 3, 4, 5, 6}, {1, 1, 1, 1, 1, 1}, {{6}, {5}, {4}, {3}, {2}, {1}});
  const auto m = fit_cox(d);
  EXPECT_TRUE(std::isfinite(m.beta[0]));
  EXPECT_GT(m.beta[0], 0.0);
}

TEST(FitCox, DeterministicAndLossDescends) {
  const auto d = generate_scenario(linear_scenario({0.4, 0.2}, 500, 0.4, 4)).front().second;
  const auto a = fit_cox(d), b = fit_cox(d);
  EXPECT_EQ(a.beta, b.beta);
  const auto z = a.standardization.apply(d);
  const double at_zero = cox_loss(std::vector<double>{0, 0}, z, 1e-6);
  EXPECT_LT(a.loss, at_zero);
  // the fitted point is stationary
  const auto g = cox_evaluate(a.beta, z, 1e-6).gradient;
  EXPECT_LT(g.cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Predict, LinearPredictorOnStandardizedScale) {
  CoxModel m;
  m.beta = {1.0, -1.0};
  m.standardization = Standardization::identity(2);
  EXPECT_EQ(predict_risk(m, std::vector<double>{2.0, 1.0}), 1.0);
  m.beta = {0.0, 0.0};
  EXPECT_EQ(predict_risk(m, std::vector<double>{5.0, -3.0}), 0.0);
  EXPECT_THROW(predict_risk(m, std::vector<double>{1.0}), std::invalid_argument);
}

TEST(Predict, DoublingBetaKeepsConcordance) {
  const auto d = generate_scenario(linear_scenario({0.5, -0.5}, 300, 0.3, 5)).front().second;
  auto m = fit_cox(d);
  const double c1 = concordance_index(predict_risk(m, d), d);
  for (auto& b : m.beta) b *= 2;
  EXPECT_EQ(concordance_index(predict_risk(m, d), d), c1);
}
