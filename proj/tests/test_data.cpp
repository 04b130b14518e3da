#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

#include "fedsurv/data.hpp"
#include "helpers.hpp"

using namespace fedsurv;
using fedsurv::oracle::make_data;

namespace {

SurvivalDataset ten_records() {
  std::vector<double> t;
  std::vector<int> e;
  std::vector<std::vector<double>> x;
  for (int i = 1; i <= 10; ++i) {
    t.push_back(i);
    e.push_back(i % 3 != 0);
    x.push_back({static_cast<double>(i)});
  }
  return make_data(t, e, x);
}

std::vector<double> times_of(const SurvivalDataset& d) {
  std::vector<double> t;
  for (const auto& r : d.records()) t.push_back(r.time);
  return t;
}

const char* kGaussianHeader = "x1,x2,time,event\n";

}  // namespace

TEST(Schema, ClinicalLayout) {
  const auto s = DatasetSchema::clinical();
  ASSERT_EQ(s.columns.size(), 17u);
  std::size_t cont = 0, bin = 0, cat = 0;
  for (const auto& c : s.columns) {
    cont += c.kind == ColumnKind::continuous;
    bin += c.kind == ColumnKind::binary;
    cat += c.kind == ColumnKind::categorical;
  }
  EXPECT_EQ(cont, 2u);
  EXPECT_EQ(bin, 10u);
  EXPECT_EQ(cat, 5u);
  EXPECT_EQ(s.encoded_width(), 24u);
  EXPECT_EQ(s.encoded_names().front(), "guest_type=walk_in");
}

TEST(Csv, TwoRowFile) {
  std::istringstream in(std::string(kGaussianHeader) + "0.5,-1,3.25,1\n1e-3,2,7,0\n");
  const auto d = read_csv(in, DatasetSchema::gaussian(2));
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.dimension(), 2u);
  EXPECT_EQ(d[0].time, 3.25);
  EXPECT_TRUE(d[0].event);
  EXPECT_EQ(d[1].features[0], 1e-3);
}

TEST(Csv, ColumnsInAnyOrder) {
  std::istringstream in("event,time,x2,x1\n1,2,20,10\n");
  const auto d = read_csv(in, DatasetSchema::gaussian(2));
  EXPECT_EQ(d[0].features, (std::vector<double>{10, 20}));
}

TEST(Csv, ZeroTimeCitesRow) {
  std::string text = kGaussianHeader;
  for (int r = 1; r <= 6; ++r) text += r == 5 ? "1,1,0,1\n" : "1,1,2,1\n";
  std::istringstream in(text);
  try {
    read_csv(in, DatasetSchema::gaussian(2));
    FAIL();
  } catch (const CsvError& e) {
    EXPECT_EQ(e.row(), 5u);
    EXPECT_EQ(e.column(), "time");
    EXPECT_NE(std::string(e.what()).find("row 5"), std::string::npos);
  }
}

TEST(Csv, ValidationErrorsNameRowAndColumn) {
  auto expect_error = [](const std::string& body, std::size_t row, const std::string& column) {
    std::istringstream in(body);
    try {
      read_csv(in, DatasetSchema::gaussian(2));
      ADD_FAILURE() << body;
    } catch (const CsvError& e) {
      EXPECT_EQ(e.row(), row) << body;
      EXPECT_EQ(e.column(), column) << body;
    }
  };
  expect_error("x1,x2,x9,time,event\n", 0, "x9");
  expect_error("x1,time,event\n", 0, "x2");
  expect_error(std::string(kGaussianHeader) + "1,,2,1\n", 1, "x2");
  expect_error(std::string(kGaussianHeader) + "1,1,2,1\n1,1,2,2\n", 2, "event");
  expect_error(std::string(kGaussianHeader) + "1,1,-3,1\n", 1, "time");
  expect_error(std::string(kGaussianHeader) + "1,abc,3,1\n", 1, "x2");
}

TEST(Csv, ClinicalLevelsAndErrors) {
  const auto schema = DatasetSchema::clinical();
  std::string header;
  for (const auto& c : schema.columns) header += c.name + ",";
  header += "time,event\n";
  const std::string good =
      "transit,61.5,1,glomerular,0,never,1,0,0,1,0,high,0,0,1,current,4.5,12.25,1\n";
  std::istringstream in(header + good);
  const auto d = read_csv(in, schema);
  ASSERT_EQ(d.dimension(), 24u);
  const auto names = schema.encoded_names();
  auto value = [&](const std::string& n) {
    return d[0].features[static_cast<std::size_t>(std::find(names.begin(), names.end(), n) - names.begin())];
  };
  EXPECT_EQ(value("guest_type=transit"), 1.0);
  EXPECT_EQ(value("guest_type=walk_in"), 0.0);
  EXPECT_EQ(value("age"), 61.5);
  EXPECT_EQ(value("exercise_level=high"), 1.0);
  EXPECT_EQ(value("alcohol_intake=occasional"), 0.0);
  std::istringstream bad(header + "spaceship" + good.substr(good.find(',')));
  EXPECT_THROW(read_csv(bad, schema), CsvError);
}

TEST(Csv, GeneratedZoneRoundTrips) {
  ScenarioConfig s;
  s.zones = {{"z", 300, 0.5, 0.1, 0.4}};
  s.truth.linear.assign(24, 0.05);
  s.seed = 3;
  const auto d = generate_scenario(s).front().second;
  std::ostringstream out;
  write_csv(out, d, s.schema());
  std::istringstream in(out.str());
  EXPECT_EQ(read_csv(in, s.schema()), d);
}

TEST(Split, SizesAndPartition) {
  const auto d = ten_records();
  const auto [train, test] = split(d, 0.8, 42);
  EXPECT_EQ(train.size(), 8u);
  EXPECT_EQ(test.size(), 2u);
  auto all = times_of(train);
  const auto t = times_of(test);
  all.insert(all.end(), t.begin(), t.end());
  std::sort(all.begin(), all.end());
  EXPECT_EQ(all, times_of(d));
  EXPECT_GT(train.event_count(), 0u);
  EXPECT_GT(test.event_count(), 0u);
}

TEST(Split, CeilOfRatio) {
  std::vector<double> t(7);
  std::iota(t.begin(), t.end(), 1.0);
  const auto d = make_data(t, {1, 1, 1, 1, 1, 1, 1});
  EXPECT_EQ(split(d, 0.5, 1).first.size(), 4u);
  EXPECT_EQ(split(d, 0.7, 1).first.size(), 5u);  // 4.9 -> 5
}

TEST(Split, SeedGolden) {
  const auto d = ten_records();
  EXPECT_EQ(split(d, 0.8, 7).second, split(d, 0.8, 7).second);
  EXPECT_NE(times_of(split(d, 0.8, 1).second), times_of(split(d, 0.8, 2).second));
}

TEST(Split, IndependentOfInputOrder) {
  Rng rng(61);
  const auto d = oracle::random_data(rng, 40, 2, 0.3, 1000);
  std::vector<std::size_t> rows(d.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  std::reverse(rows.begin(), rows.end());
  EXPECT_EQ(split(d.subset(rows), 0.8, 5), split(d, 0.8, 5));
}

TEST(Split, Errors) {
  const auto censored = make_data({1, 2, 3, 4, 5, 6}, {0, 0, 0, 0, 0, 0});
  try {
    split(censored, 0.8, 1);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "no events in partition");
  }
  EXPECT_THROW(split(make_data({1, 2, 3}, {1, 1, 1}), 0.8, 1), std::invalid_argument);
  EXPECT_THROW(split(ten_records(), 1.0, 1), std::invalid_argument);
}

TEST(Generator, ExponentialMean) {
  ScenarioConfig s = linear_scenario({0.0}, 10000, 0.0, 12);
  s.baseline_rate = 1.0;
  const auto d = generate_scenario(s).front().second;
  EXPECT_EQ(d.event_count(), d.size());
  double mean = 0.0;
  for (const auto& r : d.records()) mean += r.time / static_cast<double>(d.size());
  EXPECT_GE(mean, 0.95);
  EXPECT_LE(mean, 1.05);
}

TEST(Generator, NephroPresetSizesAndCensoring) {
  ScenarioConfig s;
  s.zones = nephro_zones();
  s.truth.linear.assign(24, 0.1);
  s.seed = 4;
  const std::vector<std::size_t> sizes{5094, 5046, 3494, 3085, 6032, 1301};
  const auto zones = generate_scenario(s);
  ASSERT_EQ(zones.size(), 6u);
  for (std::size_t z = 0; z < zones.size(); ++z) {
    const auto& d = zones[z].second;
    EXPECT_EQ(d.size(), sizes[z]);
    const double censored = 1.0 - static_cast<double>(d.event_count()) / static_cast<double>(d.size());
    EXPECT_NEAR(censored, s.zones[z].censoring_target, 0.03) << zones[z].first;
  }
  EXPECT_EQ(zones[0].first, "North");
  EXPECT_EQ(zones[5].first, "Bihar");
}

TEST(Generator, Deterministic) {
  const auto s = linear_scenario({0.3, 0.3}, 500, 0.4, 77);
  std::ostringstream a, b;
  write_csv(a, generate_scenario(s).front().second, s.schema());
  write_csv(b, generate_scenario(s).front().second, s.schema());
  EXPECT_EQ(a.str(), b.str());
}

TEST(Generator, SkewShiftsCovariates) {
  ScenarioConfig s;
  s.zones = {{"low", 3000, 0.3, 0.0, -0.8}, {"high", 3000, 0.3, 0.0, 0.8}};
  s.truth.linear.assign(24, 0.0);
  const auto zones = generate_scenario(s);
  auto mean_of = [](const SurvivalDataset& d, std::size_t j) {
    double m = 0.0;
    for (const auto& r : d.records()) m += r.features[j] / static_cast<double>(d.size());
    return m;
  };
  const auto names = s.schema().encoded_names();
  const auto diabetes = static_cast<std::size_t>(std::find(names.begin(), names.end(), "diabetes") - names.begin());
  EXPECT_GT(mean_of(zones[1].second, diabetes), mean_of(zones[0].second, diabetes));
}

TEST(Generator, Validation) {
  ScenarioConfig s;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s.zones = {{"z", 0, 0.3, 0, 0}};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s.zones = {{"z", 10, 1.0, 0, 0}};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s.zones = {{"z", 10, 0.3, 0, 0}};
  s.truth.interactions = {{0, 99, 1.0}};
  EXPECT_THROW(s.validate(), std::invalid_argument);
}
