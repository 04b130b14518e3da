#pragma once

// Synthetic cohorts, CSV ingestion and seeded train/test splitting.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedsurv/rng.hpp"
#include "fedsurv/survival.hpp"

namespace fedsurv {

// ---------------------------------------------------------------------------
// Schema

enum class ColumnKind { continuous, binary, categorical };

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  std::vector<std::string> levels;  // categorical only; levels[0] is the reference
};

/// Raw column layout of a cohort file. Categorical columns are dummy-coded
/// against their first level, so each contributes levels.size() - 1 features.
struct DatasetSchema {
  std::vector<Column> columns;
  std::string time_column = "time";
  std::string event_column = "event";

  std::vector<std::string> encoded_names() const {
    std::vector<std::string> names;
    for (const auto& c : columns) {
      if (c.kind == ColumnKind::categorical) {
        for (std::size_t l = 1; l < c.levels.size(); ++l) {
          names.push_back(c.name + "=" + c.levels[l]);
        }
      } else {
        names.push_back(c.name);
      }
    }
    return names;
  }

  std::size_t encoded_width() const { return encoded_names().size(); }

  static DatasetSchema gaussian(std::size_t p) {
    DatasetSchema s;
    for (const auto& n : default_feature_names(p)) s.columns.push_back({n, ColumnKind::continuous, {}});
    return s;
  }

  /// The 17-variable hemodialysis layout: 2 continuous, 10 binary and 5
  /// categorical columns.
  static DatasetSchema clinical() {
    using K = ColumnKind;
    DatasetSchema s;
    s.columns = {
        {"guest_type", K::categorical, {"regular", "walk_in", "transit"}},
        {"age", K::continuous, {}},
        {"gender", K::binary, {}},
        {"esrd_cause", K::categorical, {"other", "diabetic", "hypertensive", "glomerular"}},
        {"hematuria", K::binary, {}},
        {"alcohol_intake", K::categorical, {"never", "occasional", "regular"}},
        {"diabetes", K::binary, {}},
        {"dyslipidemia", K::binary, {}},
        {"ecg_abnormality", K::binary, {}},
        {"heart_attack_history", K::binary, {}},
        {"heart_failure_history", K::binary, {}},
        {"exercise_level", K::categorical, {"none", "light", "moderate", "high"}},
        {"pvd_history", K::binary, {}},
        {"stroke_history", K::binary, {}},
        {"hypertension_history", K::binary, {}},
        {"smoking_status", K::categorical, {"never", "former", "current"}},
        {"vas_value", K::continuous, {}},
    };
    return s;
  }
};

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else if (ch != '\r') {
      cell.push_back(ch);
    }
  }
  cells.push_back(std::move(cell));
  for (auto& c : cells) {
    auto b = c.find_first_not_of(' ');
    auto e = c.find_last_not_of(' ');
    c = b == std::string::npos ? std::string() : c.substr(b, e - b + 1);
  }
  return cells;
}

}  // namespace detail

class CsvError : public std::runtime_error {
 public:
  CsvError(std::size_t row, const std::string& column, const std::string& what)
      : std::runtime_error("row " + std::to_string(row) + ", column '" + column +
                           "': " + what),
        row_(row),
        column_(column) {}

  std::size_t row() const { return row_; }
  const std::string& column() const { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

/// Parses a cohort file. Rows are numbered from 1 after the header. Columns
/// may appear in any order but must match the schema exactly.
inline SurvivalDataset read_csv(std::istream& in, const DatasetSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw CsvError(0, "", "missing header");
  const auto header = detail::split_csv_line(line);
  std::map<std::string, std::size_t> position;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto& name = header[c];
    bool known = name == schema.time_column || name == schema.event_column;
    for (const auto& col : schema.columns) known = known || col.name == name;
    if (!known) throw CsvError(0, name, "unknown column");
    if (!position.emplace(name, c).second) throw CsvError(0, name, "duplicate column");
  }
  auto require = [&](const std::string& name) {
    auto it = position.find(name);
    if (it == position.end()) throw CsvError(0, name, "missing column");
    return it->second;
  };
  std::vector<std::size_t> col_pos;
  for (const auto& col : schema.columns) col_pos.push_back(require(col.name));
  const std::size_t time_pos = require(schema.time_column);
  const std::size_t event_pos = require(schema.event_column);

  std::vector<SurvivalRecord> records;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw CsvError(row, "", "expected " + std::to_string(header.size()) + " cells, found " +
                                  std::to_string(cells.size()));
    }
    auto cell = [&](std::size_t pos, const std::string& name) -> const std::string& {
      if (cells[pos].empty()) throw CsvError(row, name, "missing value");
      return cells[pos];
    };
    SurvivalRecord rec;
    for (std::size_t k = 0; k < schema.columns.size(); ++k) {
      const auto& col = schema.columns[k];
      const auto& text = cell(col_pos[k], col.name);
      switch (col.kind) {
        case ColumnKind::continuous: {
          double v = 0.0;
          if (!detail::parse_double(text, v) || !std::isfinite(v)) {
            throw CsvError(row, col.name, "not a number: '" + text + "'");
          }
          rec.features.push_back(v);
          break;
        }
        case ColumnKind::binary: {
          if (text != "0" && text != "1") throw CsvError(row, col.name, "expected 0 or 1");
          rec.features.push_back(text == "1" ? 1.0 : 0.0);
          break;
        }
        case ColumnKind::categorical: {
          auto it = std::find(col.levels.begin(), col.levels.end(), text);
          if (it == col.levels.end()) throw CsvError(row, col.name, "unknown level '" + text + "'");
          const auto level = static_cast<std::size_t>(it - col.levels.begin());
          for (std::size_t l = 1; l < col.levels.size(); ++l) {
            rec.features.push_back(l == level ? 1.0 : 0.0);
          }
          break;
        }
      }
    }
    const auto& time_text = cell(time_pos, schema.time_column);
    if (!detail::parse_double(time_text, rec.time)) {
      throw CsvError(row, schema.time_column, "not a number: '" + time_text + "'");
    }
    if (!(rec.time > 0.0) || !std::isfinite(rec.time)) {
      throw CsvError(row, schema.time_column, "time must be positive");
    }
    const auto& event_text = cell(event_pos, schema.event_column);
    if (event_text != "0" && event_text != "1") {
      throw CsvError(row, schema.event_column, "event must be 0 or 1");
    }
    rec.event = event_text == "1";
    records.push_back(std::move(rec));
  }
  return SurvivalDataset(std::move(records), schema.encoded_names());
}

inline SurvivalDataset load_csv(const std::string& path, const DatasetSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_csv(in, schema);
}

inline void write_csv(std::ostream& out, const SurvivalDataset& data,
                      const DatasetSchema& schema) {
  if (data.feature_names() != schema.encoded_names()) {
    throw std::invalid_argument("write_csv: dataset does not match schema");
  }
  for (const auto& col : schema.columns) out << col.name << ',';
  out << schema.time_column << ',' << schema.event_column << '\n';
  for (const auto& r : data.records()) {
    std::size_t j = 0;
    for (const auto& col : schema.columns) {
      switch (col.kind) {
        case ColumnKind::continuous:
          out << detail::format_double(r.features[j++]);
          break;
        case ColumnKind::binary:
          out << (r.features[j++] != 0.0 ? '1' : '0');
          break;
        case ColumnKind::categorical: {
          std::size_t level = 0;
          for (std::size_t l = 1; l < col.levels.size(); ++l) {
            if (r.features[j++] != 0.0) level = l;
          }
          out << col.levels[level];
          break;
        }
      }
      out << ',';
    }
    out << detail::format_double(r.time) << ',' << (r.event ? '1' : '0') << '\n';
  }
}

inline void save_csv(const std::string& path, const SurvivalDataset& data,
                     const DatasetSchema& schema) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_csv(out, data, schema);
}

// ---------------------------------------------------------------------------
// Train/test split

/// Seeded partition. Records are first put in a canonical order (time,
/// event, features) so the result depends only on the multiset of records.
/// Train receives ceil(ratio * n) records; both parts must contain an event.
inline std::pair<SurvivalDataset, SurvivalDataset> split(const SurvivalDataset& data,
                                                          double ratio,
                                                          std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("split ratio must be in (0,1)");
  const std::size_t n = data.size();
  if (n < 5) throw std::invalid_argument("split needs at least 5 records");

  std::vector<std::size_t> canonical(n);
  std::iota(canonical.begin(), canonical.end(), std::size_t{0});
  std::stable_sort(canonical.begin(), canonical.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = data[a];
    const auto& rb = data[b];
    if (ra.time != rb.time) return ra.time < rb.time;
    if (ra.event != rb.event) return ra.event < rb.event;
    return ra.features < rb.features;
  });

  std::size_t n_train = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-9));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

  Rng rng(seed);
  std::vector<std::size_t> positions(n);
  for (int attempt = 0; attempt <= 20; ++attempt) {
    std::iota(positions.begin(), positions.end(), std::size_t{0});
    for (std::size_t i = n - 1; i > 0; --i) {
      std::swap(positions[i], positions[rng.index(i + 1)]);
    }
    std::vector<std::size_t> train_pos(positions.begin(), positions.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> test_pos(positions.begin() + static_cast<std::ptrdiff_t>(n_train), positions.end());
    std::sort(train_pos.begin(), train_pos.end());
    std::sort(test_pos.begin(), test_pos.end());
    auto to_rows = [&](const std::vector<std::size_t>& pos) {
      std::vector<std::size_t> rows;
      rows.reserve(pos.size());
      for (std::size_t q : pos) rows.push_back(canonical[q]);
      return rows;
    };
    auto train_rows = to_rows(train_pos);
    auto test_rows = to_rows(test_pos);
    auto has_event = [&](const std::vector<std::size_t>& rows) {
      return std::any_of(rows.begin(), rows.end(), [&](std::size_t i) { return data[i].event; });
    };
    if (has_event(train_rows) && has_event(test_rows)) {
      return {data.subset(train_rows), data.subset(test_rows)};
    }
  }
  throw std::runtime_error("no events in partition");
}

// ---------------------------------------------------------------------------
// Synthetic scenarios

enum class FeatureModel { gaussian, clinical };

struct ZoneSpec {
  std::string name;
  std::size_t n_patients = 0;
  double censoring_target = 0.3;  // 0 disables censoring
  double risk_shift = 0.0;        // added to the log-hazard of every patient
  double feature_skew = 0.0;      // shifts covariate distributions
};

struct InteractionTerm {
  std::size_t first = 0;
  std::size_t second = 0;
  double coefficient = 0.0;
};

/// Log-hazard g(x) = linear . x + sum coefficient * x_first * x_second over
/// the encoded feature vector. An empty linear part means zero.
struct TruthModel {
  std::vector<double> linear;
  std::vector<InteractionTerm> interactions;

  double log_hazard(std::span<const double> x) const {
    double g = 0.0;
    for (std::size_t j = 0; j < linear.size(); ++j) g += linear[j] * x[j];
    for (const auto& t : interactions) g += t.coefficient * x[t.first] * x[t.second];
    return g;
  }
};

struct ScenarioConfig {
  std::vector<ZoneSpec> zones;
  FeatureModel feature_model = FeatureModel::clinical;
  std::size_t n_features = 17;  // raw variables; gaussian: also the encoded width
  TruthModel truth;
  double baseline_rate = 0.01;  // events per month at g(x) = 0
  std::uint64_t seed = 0;

  DatasetSchema schema() const {
    return feature_model == FeatureModel::clinical ? DatasetSchema::clinical()
                                                   : DatasetSchema::gaussian(n_features);
  }

  void validate() const {
    if (zones.empty()) throw std::invalid_argument("scenario: no zones");
    if (!(baseline_rate > 0.0)) throw std::invalid_argument("scenario: baseline_rate must be positive");
    if (feature_model == FeatureModel::clinical && n_features != 17) {
      throw std::invalid_argument("scenario: clinical feature model has 17 variables");
    }
    if (n_features == 0) throw std::invalid_argument("scenario: n_features must be positive");
    const std::size_t width = schema().encoded_width();
    if (truth.linear.size() > width) throw std::invalid_argument("scenario: truth longer than feature width");
    for (const auto& t : truth.interactions) {
      if (t.first >= width || t.second >= width) {
        throw std::invalid_argument("scenario: interaction index out of range");
      }
    }
    for (const auto& z : zones) {
      if (z.n_patients == 0) throw std::invalid_argument("scenario: zone '" + z.name + "' is empty");
      if (!(z.censoring_target >= 0.0 && z.censoring_target < 1.0)) {
        throw std::invalid_argument("scenario: censoring target must be in [0,1)");
      }
    }
  }
};

namespace detail {

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline std::vector<double> draw_clinical(Rng& rng, double skew) {
  static constexpr double kBinaryPrevalence[10] = {0.62, 0.08, 0.45, 0.30, 0.25,
                                                   0.12, 0.15, 0.07, 0.06, 0.70};
  auto categorical = [&](std::vector<double>& out, std::initializer_list<double> base) {
    std::vector<double> w;
    double l = 0.0;
    for (double b : base) {
      w.push_back(b * std::exp(0.35 * skew * l));
      l += 1.0;
    }
    double total = 0.0;
    for (double v : w) total += v;
    double u = rng.uniform() * total;
    std::size_t level = w.size() - 1;
    for (std::size_t k = 0; k < w.size(); ++k) {
      if (u < w[k]) {
        level = k;
        break;
      }
      u -= w[k];
    }
    for (std::size_t k = 1; k < w.size(); ++k) out.push_back(k == level ? 1.0 : 0.0);
  };
  auto binary = [&](std::vector<double>& out, int k) {
    const double p0 = kBinaryPrevalence[k];
    const double p = logistic(std::log(p0 / (1.0 - p0)) + 0.4 * skew);
    out.push_back(rng.bernoulli(p) ? 1.0 : 0.0);
  };

  std::vector<double> x;
  categorical(x, {0.7, 0.2, 0.1});                                    // guest_type
  x.push_back(std::clamp(55.0 + 4.0 * skew + 12.0 * rng.normal(), 18.0, 95.0));  // age
  binary(x, 0);                                                      // gender
  categorical(x, {0.25, 0.40, 0.25, 0.10});                          // esrd_cause
  binary(x, 1);                                                      // hematuria
  categorical(x, {0.6, 0.3, 0.1});                                   // alcohol_intake
  for (int k = 2; k <= 6; ++k) binary(x, k);                         // diabetes .. heart failure
  categorical(x, {0.35, 0.35, 0.2, 0.1});                            // exercise_level
  for (int k = 7; k <= 9; ++k) binary(x, k);                         // pvd, stroke, hypertension
  categorical(x, {0.6, 0.25, 0.15});                                 // smoking_status
  x.push_back(std::clamp(5.0 + 0.8 * skew + 2.0 * rng.normal(), 0.0, 10.0));  // vas_value
  return x;
}

struct LatentDraw {
  std::vector<double> features;
  double event_time;
  double censor_unit;  // Exp(1) draw; censoring time = censor_unit / rate
};

inline double censored_fraction(const std::vector<LatentDraw>& draws, double rate) {
  std::size_t censored = 0;
  for (const auto& d : draws) {
    if (d.censor_unit / rate < d.event_time) ++censored;
  }
  return static_cast<double>(censored) / static_cast<double>(draws.size());
}

}  // namespace detail

/// Draws one zone. Event times follow an exponential law with hazard
/// baseline_rate * exp(g(x) + risk_shift); independent exponential censoring
/// has its rate bisected until the censored share matches the target.
inline SurvivalDataset generate_zone(const ScenarioConfig& config, std::size_t zone_index) {
  const ZoneSpec& zone = config.zones.at(zone_index);
  Rng rng(derive_seed(config.seed, zone_index));
  std::vector<detail::LatentDraw> draws;
  draws.reserve(zone.n_patients);
  for (std::size_t i = 0; i < zone.n_patients; ++i) {
    detail::LatentDraw d;
    if (config.feature_model == FeatureModel::clinical) {
      d.features = detail::draw_clinical(rng, zone.feature_skew);
    } else {
      d.features.resize(config.n_features);
      for (auto& v : d.features) v = zone.feature_skew + rng.normal();
    }
    const double hazard =
        config.baseline_rate * std::exp(config.truth.log_hazard(d.features) + zone.risk_shift);
    d.event_time = rng.exponential(hazard);
    d.censor_unit = rng.exponential(1.0);
    draws.push_back(std::move(d));
  }

  double rate = 0.0;
  if (zone.censoring_target > 0.0) {
    double lo = -40.0;
    double hi = 40.0;
    double achieved = 0.0;
    for (int step = 0; step < 50; ++step) {
      const double mid = 0.5 * (lo + hi);
      achieved = detail::censored_fraction(draws, std::exp(mid));
      if (std::abs(achieved - zone.censoring_target) <= 0.0025) {
        lo = hi = mid;
        break;
      }
      (achieved < zone.censoring_target ? lo : hi) = mid;
    }
    rate = std::exp(0.5 * (lo + hi));
    achieved = detail::censored_fraction(draws, rate);
    if (std::abs(achieved - zone.censoring_target) > 0.03) {
      throw std::runtime_error("censoring calibration failed for zone '" + zone.name +
                               "': achieved " + detail::format_double(achieved));
    }
  }

  std::vector<SurvivalRecord> records;
  records.reserve(draws.size());
  for (auto& d : draws) {
    SurvivalRecord r;
    r.features = std::move(d.features);
    const double censor_time = rate > 0.0 ? d.censor_unit / rate : std::numeric_limits<double>::infinity();
    r.event = d.event_time <= censor_time;
    r.time = r.event ? d.event_time : censor_time;
    records.push_back(std::move(r));
  }
  return SurvivalDataset(std::move(records), config.schema().encoded_names());
}

/// Zone name -> dataset, in config order.
inline std::vector<std::pair<std::string, SurvivalDataset>> generate_scenario(
    const ScenarioConfig& config) {
  config.validate();
  std::vector<std::pair<std::string, SurvivalDataset>> out;
  for (std::size_t z = 0; z < config.zones.size(); ++z) {
    out.emplace_back(config.zones[z].name, generate_zone(config, z));
  }
  return out;
}

/// Six client zones with the hemodialysis network's patient counts and
/// censored shares (censored / total).
/// Single-zone gaussian scenario with log-hazard beta^T x.
inline ScenarioConfig linear_scenario(std::vector<double> beta, std::size_t n, double censoring,
                                      std::uint64_t seed) {
  ScenarioConfig s;
  s.zones = {{"linear", n, censoring, 0.0, 0.0}};
  s.feature_model = FeatureModel::gaussian;
  s.n_features = beta.size();
  s.truth.linear = std::move(beta);
  s.baseline_rate = 0.1;
  s.seed = seed;
  return s;
}

/// Single-zone gaussian scenario whose risk is driven only by x1 * x2.
inline ScenarioConfig interaction_scenario(std::size_t p, double coefficient, std::size_t n, double censoring,
                                           std::uint64_t seed) {
  ScenarioConfig s;
  s.zones = {{"interaction", n, censoring, 0.0, 0.0}};
  s.feature_model = FeatureModel::gaussian;
  s.n_features = p;
  s.truth.interactions = {{0, 1, coefficient}};
  s.baseline_rate = 0.1;
  s.seed = seed;
  return s;
}

inline std::vector<ZoneSpec> nephro_zones() {
  return {
      {"North", 5094, 3077.0 / 5094.0, 0.00, 0.0},
      {"South", 5046, 2897.0 / 5046.0, 0.10, 0.3},
      {"East", 3494, 2342.0 / 3494.0, -0.15, -0.4},
      {"West", 3085, 1883.0 / 3085.0, 0.05, 0.6},
      {"Andhra Pradesh", 6032, 3798.0 / 6032.0, -0.05, -0.2},
      {"Bihar", 1301, 808.0 / 1301.0, 0.20, 0.9},
  };
}

}  // namespace fedsurv
