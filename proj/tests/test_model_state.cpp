#include <gtest/gtest.h>

#include "fedsurv/data.hpp"
#include "fedsurv/model_state.hpp"

using namespace fedsurv;

namespace {

SurvivalDataset sample_data() {
  return generate_scenario(linear_scenario({0.7, -0.2, 0.4}, 300, 0.4, 8)).front().second;
}

}  // namespace

TEST(ModelState, CoxRoundTripsBitExact) {
  const auto m = fit_cox(sample_data());
  const auto back = std::get<CoxModel>(decode_model_state(encode_model_state(m)));
  EXPECT_EQ(back.beta, m.beta);
  EXPECT_EQ(back.baseline, m.baseline);
  EXPECT_EQ(back.standardization.means, m.standardization.means);
  EXPECT_EQ(back.standardization.scales, m.standardization.scales);
  EXPECT_EQ(back.converged, m.converged);
  EXPECT_EQ(back.iterations, m.iterations);
  EXPECT_EQ(back.loss, m.loss);
}

TEST(ModelState, NeuralRoundTripsBitExact) {
  TrainConfig c;
  c.epochs = 5;
  for (auto variant : {NeuralVariant::deepsurv, NeuralVariant::coxnnet}) {
    const auto m = fit_neural(sample_data(), variant, c);
    const auto back = std::get<NeuralRiskModel>(decode_model_state(encode_model_state(m)));
    EXPECT_EQ(back.variant, m.variant);
    EXPECT_EQ(flatten_parameters(back), flatten_parameters(m));
    EXPECT_EQ(flatten_norm_stats(back), flatten_norm_stats(m));
    ASSERT_EQ(back.layers.size(), m.layers.size());
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      EXPECT_EQ(back.layers[l].activation, m.layers[l].activation);
      EXPECT_EQ(back.layers[l].dropout, m.layers[l].dropout);
      EXPECT_EQ(back.layers[l].batch_norm, m.layers[l].batch_norm);
    }
    EXPECT_EQ(encode_model_state(back), encode_model_state(m));
  }
}

TEST(ModelState, ForestRoundTripsBitExact) {
  ForestConfig c;
  c.n_trees = 4;
  auto f = rank_trees(fit_forest(sample_data(), c), sample_data());
  f.trees[0].client_tag = "Andhra Pradesh 100%";
  f.trees[1].importance.reset();
  const auto back = std::get<SurvivalForest>(decode_model_state(encode_model_state(f)));
  EXPECT_EQ(back, f);
}

TEST(ModelState, ExtremeDoubles) {
  CoxModel m;
  m.beta = {5e-324, -1.7976931348623157e308, 0.1, -0.0};
  m.standardization = Standardization::identity(4);
  m.baseline = CumulativeHazardCurve({1e-300, 2.5}, {0.0, 1e300});
  const auto back = std::get<CoxModel>(decode_model_state(encode_model_state(m)));
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(std::signbit(back.beta[j]), std::signbit(m.beta[j]));
  EXPECT_EQ(back.beta, m.beta);
  EXPECT_EQ(back.baseline, m.baseline);
}

TEST(ModelState, RejectsMalformedInput) {
  const auto blob = encode_model_state(fit_cox(sample_data()));
  EXPECT_THROW(decode_model_state("fedsurv-model 2\nfamily cox\n"), ModelStateError);
  EXPECT_THROW(decode_model_state("fedsurv-model 1\nfamily svm\n"), ModelStateError);
  EXPECT_THROW(decode_model_state("garbage"), ModelStateError);
  EXPECT_THROW(decode_model_state(blob.substr(0, blob.size() / 2)), ModelStateError);
  auto wrong_dim = blob;
  wrong_dim.replace(wrong_dim.find("dimension 3"), 11, "dimension 4");
  EXPECT_THROW(decode_model_state(wrong_dim), ModelStateError);
  EXPECT_THROW(decode_model_state("fedsurv-model 1\nfamily forest\ndimension 1\ngrid 0\ntrees 1\n"
                                  "tree 0 'a - 1\nsplit 0 0.5 1 2\nend\n"),
               ModelStateError);
}

TEST(ModelState, FingerprintTracksContent) {
  auto m = fit_cox(sample_data());
  const auto a = model_fingerprint(m);
  EXPECT_EQ(a, model_fingerprint(m));
  m.beta[0] = std::nextafter(m.beta[0], 1.0);
  EXPECT_NE(a, model_fingerprint(m));
}
