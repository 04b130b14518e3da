#pragma once

// Survival data types, risk-set bookkeeping, the Nelson-Aalen estimator and
// Harrell's concordance index.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fedsurv {

/// One subject: covariates, observed time (event or censoring) and whether
/// the event was observed at that time.
struct SurvivalRecord {
  std::vector<double> features;
  double time = 1.0;
  bool event = false;

  bool operator==(const SurvivalRecord&) const = default;
};

inline std::vector<std::string> default_feature_names(std::size_t p) {
  std::vector<std::string> names;
  names.reserve(p);
  for (std::size_t j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
  return names;
}

/// Immutable collection of records sharing one feature space. Records are
/// kept in input order; sort_index() lists them by ascending time (stable).
class SurvivalDataset {
 public:
  SurvivalDataset() = default;

  SurvivalDataset(std::vector<SurvivalRecord> records,
                  std::vector<std::string> feature_names)
      : records_(std::move(records)), feature_names_(std::move(feature_names)) {
    const std::size_t p = feature_names_.size();
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const auto& r = records_[i];
      if (r.features.size() != p) {
        throw std::invalid_argument("record " + std::to_string(i) + " has " +
                                    std::to_string(r.features.size()) +
                                    " features, expected " + std::to_string(p));
      }
      if (!(r.time > 0.0) || !std::isfinite(r.time)) {
        throw std::invalid_argument("record " + std::to_string(i) +
                                    ": time must be positive and finite");
      }
      for (double v : r.features) {
        if (!std::isfinite(v)) {
          throw std::invalid_argument("record " + std::to_string(i) +
                                      ": non-finite feature value");
        }
      }
      if (r.event) ++event_count_;
    }
    sort_index_.resize(records_.size());
    std::iota(sort_index_.begin(), sort_index_.end(), std::size_t{0});
    std::stable_sort(sort_index_.begin(), sort_index_.end(),
                     [this](std::size_t a, std::size_t b) {
                       return records_[a].time < records_[b].time;
                     });
  }

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  std::size_t dimension() const { return feature_names_.size(); }
  std::size_t event_count() const { return event_count_; }

  const SurvivalRecord& operator[](std::size_t i) const { return records_[i]; }
  const std::vector<SurvivalRecord>& records() const { return records_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const std::vector<std::size_t>& sort_index() const { return sort_index_; }

  SurvivalDataset subset(std::span<const std::size_t> rows) const {
    std::vector<SurvivalRecord> out;
    out.reserve(rows.size());
    for (std::size_t i : rows) out.push_back(records_.at(i));
    return SurvivalDataset(std::move(out), feature_names_);
  }

  bool operator==(const SurvivalDataset& other) const {
    return records_ == other.records_ && feature_names_ == other.feature_names_;
  }

 private:
  std::vector<SurvivalRecord> records_;
  std::vector<std::string> feature_names_;
  std::vector<std::size_t> sort_index_;
  std::size_t event_count_ = 0;
};

inline SurvivalDataset concatenate(std::span<const SurvivalDataset> parts) {
  if (parts.empty()) return {};
  std::vector<SurvivalRecord> all;
  for (const auto& d : parts) {
    if (d.feature_names() != parts.front().feature_names()) {
      throw std::invalid_argument("concatenate: feature spaces differ");
    }
    all.insert(all.end(), d.records().begin(), d.records().end());
  }
  return SurvivalDataset(std::move(all), parts.front().feature_names());
}

/// Right-continuous step function H(t); zero before the first step.
class CumulativeHazardCurve {
 public:
  CumulativeHazardCurve() = default;

  CumulativeHazardCurve(std::vector<double> times, std::vector<double> values)
      : times_(std::move(times)), values_(std::move(values)) {
    if (times_.size() != values_.size()) {
      throw std::invalid_argument("hazard curve: times/values length mismatch");
    }
    for (std::size_t k = 0; k < times_.size(); ++k) {
      if (!(times_[k] > 0.0) || !std::isfinite(values_[k]) || values_[k] < 0.0) {
        throw std::invalid_argument("hazard curve: invalid point");
      }
      if (k > 0 && (times_[k] <= times_[k - 1] || values_[k] < values_[k - 1])) {
        throw std::invalid_argument("hazard curve: not monotone");
      }
    }
  }

  double at(double t) const {
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    if (it == times_.begin()) return 0.0;
    return values_[static_cast<std::size_t>(it - times_.begin()) - 1];
  }

  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return times_.size(); }
  bool empty() const { return times_.empty(); }

  bool operator==(const CumulativeHazardCurve&) const = default;

 private:
  std::vector<double> times_;
  std::vector<double> values_;
};

struct RiskSetEntry {
  double time = 0.0;
  std::size_t at_risk = 0;
  std::size_t events = 0;

  bool operator==(const RiskSetEntry&) const = default;
};

/// One entry per unique event time: |{j : t_j >= t}| and the number of
/// events at exactly t.
inline std::vector<RiskSetEntry> risk_set_sizes(const SurvivalDataset& data) {
  if (data.empty()) throw std::invalid_argument("empty dataset");
  const auto& order = data.sort_index();
  const std::size_t n = order.size();
  std::vector<RiskSetEntry> out;
  std::size_t k = 0;
  while (k < n) {
    const double t = data[order[k]].time;
    std::size_t events = 0;
    std::size_t end = k;
    while (end < n && data[order[end]].time == t) {
      if (data[order[end]].event) ++events;
      ++end;
    }
    if (events > 0) out.push_back({t, n - k, events});
    k = end;
  }
  return out;
}

namespace detail {

// Nelson-Aalen curve for parallel (time, event) arrays already sorted by
// ascending time.
inline CumulativeHazardCurve nelson_aalen_sorted(std::span<const double> times,
                                                 std::span<const char> events) {
  const std::size_t n = times.size();
  std::vector<double> ts;
  std::vector<double> hs;
  double h = 0.0;
  std::size_t k = 0;
  while (k < n) {
    const double t = times[k];
    std::size_t d = 0;
    std::size_t end = k;
    while (end < n && times[end] == t) {
      if (events[end]) ++d;
      ++end;
    }
    if (d > 0) {
      h += static_cast<double>(d) / static_cast<double>(n - k);
      ts.push_back(t);
      hs.push_back(h);
    }
    k = end;
  }
  return CumulativeHazardCurve(std::move(ts), std::move(hs));
}

}  // namespace detail

inline CumulativeHazardCurve nelson_aalen(const SurvivalDataset& data) {
  if (data.empty()) throw std::invalid_argument("empty dataset");
  std::vector<double> ts;
  ts.reserve(data.size());
  std::vector<double> hs;
  double h = 0.0;
  for (const auto& e : risk_set_sizes(data)) {
    h += static_cast<double>(e.events) / static_cast<double>(e.at_risk);
    ts.push_back(e.time);
    hs.push_back(h);
  }
  return CumulativeHazardCurve(std::move(ts), std::move(hs));
}

struct ConcordanceCounts {
  std::uint64_t concordant = 0;
  std::uint64_t tied = 0;
  std::uint64_t comparable = 0;

  double index() const {
    if (comparable == 0) throw std::invalid_argument("no comparable pairs");
    return (static_cast<double>(concordant) + 0.5 * static_cast<double>(tied)) /
           static_cast<double>(comparable);
  }
};

namespace detail {

class FenwickCounter {
 public:
  explicit FenwickCounter(std::size_t n) : tree_(n + 1, 0) {}

  void add(std::size_t pos) {
    for (std::size_t i = pos + 1; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
  }

  // number of inserted positions < pos
  std::uint64_t count_below(std::size_t pos) const {
    std::uint64_t s = 0;
    for (std::size_t i = pos; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<std::uint64_t> tree_;
};

}  // namespace detail

/// Pair counts for Harrell's C. A pair is comparable when the shorter time
/// is an event, or when times tie and only the first is an event. The
/// concordant member has the strictly higher score.
inline ConcordanceCounts concordance_counts(std::span<const double> scores,
                                            const SurvivalDataset& data) {
  if (scores.size() != data.size()) {
    throw std::invalid_argument("concordance: score count does not match dataset");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw std::invalid_argument("concordance: non-finite score");
  }
  const std::size_t n = data.size();
  std::vector<double> levels(scores.begin(), scores.end());
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  auto rank_of = [&](double s) {
    return static_cast<std::size_t>(std::lower_bound(levels.begin(), levels.end(), s) -
                                    levels.begin());
  };

  ConcordanceCounts c;
  detail::FenwickCounter later(levels.size());
  std::uint64_t later_total = 0;
  const auto& order = data.sort_index();
  std::size_t end = n;
  while (end > 0) {
    const double t = data[order[end - 1]].time;
    std::size_t begin = end;
    while (begin > 0 && data[order[begin - 1]].time == t) --begin;

    std::vector<double> censored_here;
    for (std::size_t k = begin; k < end; ++k) {
      if (!data[order[k]].event) censored_here.push_back(scores[order[k]]);
    }
    std::sort(censored_here.begin(), censored_here.end());

    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t i = order[k];
      if (!data[i].event) continue;
      const double s = scores[i];
      const std::size_t r = rank_of(s);
      const std::uint64_t below = later.count_below(r);
      const std::uint64_t at_or_below = later.count_below(r + 1);
      c.concordant += below;
      c.tied += at_or_below - below;
      c.comparable += later_total;

      auto lo = std::lower_bound(censored_here.begin(), censored_here.end(), s);
      auto hi = std::upper_bound(censored_here.begin(), censored_here.end(), s);
      c.concordant += static_cast<std::uint64_t>(lo - censored_here.begin());
      c.tied += static_cast<std::uint64_t>(hi - lo);
      c.comparable += censored_here.size();
    }
    for (std::size_t k = begin; k < end; ++k) {
      later.add(rank_of(scores[order[k]]));
      ++later_total;
    }
    end = begin;
  }
  return c;
}

/// Harrell's concordance index in [0, 1]; throws when no pair is comparable.
inline double concordance_index(std::span<const double> scores,
                                const SurvivalDataset& data) {
  return concordance_counts(scores, data).index();
}

/// Per-feature centering and scaling. Constant features keep scale 1.
struct Standardization {
  std::vector<double> means;
  std::vector<double> scales;

  static Standardization identity(std::size_t p) {
    return {std::vector<double>(p, 0.0), std::vector<double>(p, 1.0)};
  }

  static Standardization fit(const SurvivalDataset& data) {
    const std::size_t p = data.dimension();
    Standardization s = identity(p);
    if (data.empty()) return s;
    const double n = static_cast<double>(data.size());
    for (const auto& r : data.records()) {
      for (std::size_t j = 0; j < p; ++j) s.means[j] += r.features[j];
    }
    for (auto& m : s.means) m /= n;
    std::vector<double> ss(p, 0.0);
    for (const auto& r : data.records()) {
      for (std::size_t j = 0; j < p; ++j) {
        const double d = r.features[j] - s.means[j];
        ss[j] += d * d;
      }
    }
    for (std::size_t j = 0; j < p; ++j) {
      const double sd = std::sqrt(ss[j] / n);
      s.scales[j] = sd > 1e-12 ? sd : 1.0;
    }
    return s;
  }

  std::size_t dimension() const { return means.size(); }

  std::vector<double> apply(std::span<const double> x) const {
    if (x.size() != means.size()) {
      throw std::invalid_argument("feature dimension mismatch");
    }
    std::vector<double> z(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) z[j] = (x[j] - means[j]) / scales[j];
    return z;
  }

  SurvivalDataset apply(const SurvivalDataset& data) const {
    std::vector<SurvivalRecord> out;
    out.reserve(data.size());
    for (const auto& r : data.records()) out.push_back({apply(r.features), r.time, r.event});
    return SurvivalDataset(std::move(out), data.feature_names());
  }

  void validate() const {
    if (means.size() != scales.size()) {
      throw std::invalid_argument("standardization: length mismatch");
    }
    for (double s : scales) {
      if (!(s > 0.0) || !std::isfinite(s)) {
        throw std::invalid_argument("standardization: scales must be positive");
      }
    }
  }

  bool operator==(const Standardization&) const = default;
};

}  // namespace fedsurv
