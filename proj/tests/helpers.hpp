#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "fedsurv/rng.hpp"
#include "fedsurv/survival.hpp"

namespace fedsurv::oracle {

inline SurvivalDataset make_data(const std::vector<double>& times, const std::vector<int>& events,
                                 const std::vector<std::vector<double>>& x = {}) {
  std::vector<SurvivalRecord> records;
  const std::size_t p = x.empty() ? 1 : x.front().size();
  for (std::size_t i = 0; i < times.size(); ++i) {
    SurvivalRecord r;
    r.features = x.empty() ? std::vector<double>(1, 0.0) : x[i];
    r.time = times[i];
    r.event = events[i] != 0;
    records.push_back(std::move(r));
  }
  return SurvivalDataset(std::move(records), default_feature_names(p));
}

/// Random dataset with coarse integer times so ties occur.
inline SurvivalDataset random_data(Rng& rng, std::size_t n, std::size_t p, double censor_prob = 0.4,
                                   int time_levels = 10) {
  std::vector<SurvivalRecord> records;
  for (std::size_t i = 0; i < n; ++i) {
    SurvivalRecord r;
    for (std::size_t j = 0; j < p; ++j) r.features.push_back(rng.normal());
    r.time = 1.0 + static_cast<double>(rng.index(static_cast<std::uint64_t>(time_levels)));
    r.event = !rng.bernoulli(censor_prob);
    records.push_back(std::move(r));
  }
  return SurvivalDataset(std::move(records), default_feature_names(p));
}

struct PairCount {
  double numerator = 0.0;
  std::size_t comparable = 0;
};

/// O(n^2) enumeration of comparable pairs.
inline PairCount brute_force_pairs(const std::vector<double>& s, const SurvivalDataset& d) {
  PairCount out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = 0; j < d.size(); ++j) {
      if (i == j || !d[i].event) continue;
      const bool comparable = d[i].time < d[j].time || (d[i].time == d[j].time && !d[j].event);
      if (!comparable) continue;
      ++out.comparable;
      if (s[i] > s[j]) {
        out.numerator += 1.0;
      } else if (s[i] == s[j]) {
        out.numerator += 0.5;
      }
    }
  }
  return out;
}

/// Two-loop Breslow negative log partial likelihood on arbitrary scores.
inline double naive_partial_likelihood(const std::vector<double>& g, const SurvivalDataset& d) {
  double loss = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!d[i].event) continue;
    double denom = 0.0;
    for (std::size_t j = 0; j < d.size(); ++j) {
      if (d[j].time >= d[i].time) denom += std::exp(g[j]);
    }
    loss -= g[i] - std::log(denom);
  }
  return loss;
}

inline double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace fedsurv::oracle
