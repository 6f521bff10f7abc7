#include <klabc/discrepancy.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace klabc;

namespace {

Dataset normal_data(Eigen::Index n, Eigen::Index p, double mean, double sd, std::uint64_t seed) {
  RandomStream rng(derive_stream(seed, 0, 0));
  Dataset d(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) d(i, j) = mean + sd * rng.normal();
  return d;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace

TEST(Logit, KnownValues) {
  EXPECT_DOUBLE_EQ(logit_from_probability(0.5), 0.0);
  EXPECT_NEAR(logit_from_probability(0.8), std::log(4.0), 1e-15);
  EXPECT_NEAR(logit_from_probability(1.0), 16.118095550958316, 1e-9);
  EXPECT_NEAR(logit_from_probability(0.0), -16.118095550958316, 1e-9);
  EXPECT_NEAR(logit_from_probability(1.0, 1e-3), std::log(999.0), 1e-12);
}

TEST(Presets, Shapes) {
  const auto lrd = discriminator_preset("lrd");
  EXPECT_EQ(lrd.kind, DiscriminatorKind::kL1Logistic);
  EXPECT_EQ(lrd.features.kind, FeatureKind::kPoly2);
  EXPECT_TRUE(lrd.features.standardize);

  const auto nnd1 = discriminator_preset("nnd1");
  EXPECT_EQ(nnd1.kind, DiscriminatorKind::kMlp);
  EXPECT_EQ(nnd1.features.kind, FeatureKind::kRaw);
  EXPECT_EQ(nnd1.layer_sizes, (std::vector<std::size_t>{10, 10, 10}));
  EXPECT_EQ(nnd1.activations, (std::vector<Activation>{Activation::kRelu, Activation::kTanh, Activation::kTanh}));

  const auto nnd2 = discriminator_preset("nnd2");
  EXPECT_EQ(nnd2.features.kind, FeatureKind::kPoly2);
  EXPECT_EQ(nnd2.layer_sizes, (std::vector<std::size_t>{10, 10}));
  EXPECT_EQ(nnd2.activations, (std::vector<Activation>{Activation::kRelu, Activation::kTanh}));

  const auto gk = discriminator_preset("gk_net");
  EXPECT_EQ(gk.features.kind, FeatureKind::kPowers3);
  EXPECT_EQ(gk.layer_sizes, nnd2.layer_sizes);

  for (const char* name : {"lrd", "nnd1", "nnd2", "gk_net"}) EXPECT_NO_THROW(discriminator_preset(name).validate());
  EXPECT_THROW(discriminator_preset("svm"), ConfigError);
}

TEST(Presets, ValidationErrors) {
  auto s = preset_lrd();
  s.clip_eps = 0.5;
  EXPECT_THROW(s.validate(), ConfigError);
  s = preset_lrd();
  s.lambda_grid = {0.1, -1.0};
  EXPECT_THROW(s.validate(), ConfigError);
  s = preset_lrd();
  s.cv_folds = 1;
  EXPECT_THROW(s.validate(), ConfigError);
  s = preset_nnd2();
  s.activations.pop_back();
  EXPECT_THROW(s.validate(), ConfigError);
  s = preset_nnd2();
  s.training.learning_rate = 0.0;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Discriminator, SeparableCloudsAreClassified) {
  const Dataset real = normal_data(200, 1, 5.0, 0.1, 1);
  const Dataset fake = normal_data(200, 1, -5.0, 0.1, 2);
  for (const char* name : {"lrd", "nnd1"}) {
    const auto d = train_discriminator(discriminator_preset(name), real, fake, derive_stream(3, 0, 0));
    EXPECT_GE(soft_accuracy(d, real, fake), 0.99) << name;
  }
}

TEST(Discriminator, NullHeldOutAccuracyIsChance) {
  std::vector<double> ca;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Dataset real = normal_data(300, 1, 0.0, 1.0, 100 + s);
    const Dataset fake = normal_data(300, 1, 0.0, 1.0, 200 + s);
    const auto d = train_discriminator(preset_lrd(), real, fake, derive_stream(s, 0, 0));
    ca.push_back(soft_accuracy(d, normal_data(300, 1, 0.0, 1.0, 300 + s), normal_data(300, 1, 0.0, 1.0, 400 + s)));
  }
  const double m = median(ca);
  EXPECT_GE(m, 0.42);
  EXPECT_LE(m, 0.58);
}

TEST(Discriminator, LabelSwapFlipsLogits) {
  const Dataset a = normal_data(150, 2, 0.5, 1.0, 5);
  const Dataset b = normal_data(150, 2, 0.0, 1.0, 6);
  const Dataset probe = normal_data(20, 2, 0.2, 1.0, 7);
  auto spec = preset_lrd();
  const auto ab = train_discriminator(spec, a, b, derive_stream(8, 0, 0));
  const auto ba = train_discriminator(spec, b, a, derive_stream(8, 0, 0));
  EXPECT_NEAR((ab.logits(probe) + ba.logits(probe)).cwiseAbs().maxCoeff(), 0.0, 1e-6);
  EXPECT_NEAR(klc_from_discriminator(ab, a), klc_reverse_from_discriminator(ba, a), 1e-6);
}

TEST(Discriminator, LogitsRespectClipBound) {
  const Dataset real = normal_data(100, 1, 50.0, 0.1, 9);
  const Dataset fake = normal_data(100, 1, -50.0, 0.1, 10);
  auto spec = preset_lrd();
  spec.lambda_grid = {1e-6};
  const auto d = train_discriminator(spec, real, fake, derive_stream(1, 0, 0));
  const double bound = std::log((1.0 - 1e-7) / 1e-7);
  EXPECT_LE(d.logits(real).cwiseAbs().maxCoeff(), bound + 1e-12);
  EXPECT_LE(d.logits(fake).cwiseAbs().maxCoeff(), bound + 1e-12);
  const Eigen::VectorXd p = d.probabilities(real);
  EXPECT_LE(p.maxCoeff(), 1.0 - 1e-7);
}

TEST(Discriminator, FixedLambdaSkipsCrossValidation) {
  const Dataset real = normal_data(100, 2, 0.3, 1.0, 11);
  const Dataset fake = normal_data(100, 2, 0.0, 1.0, 12);
  auto spec = preset_lrd();
  spec.lambda_grid = {0.002};
  const auto a = train_discriminator(spec, real, fake, derive_stream(1, 0, 0));
  const auto b = train_discriminator(spec, real, fake, derive_stream(2, 0, 0));
  EXPECT_EQ(a.logistic().lambda, 0.002);
  EXPECT_EQ(a.logits(real), b.logits(real));
}

TEST(Discriminator, RejectsBadInput) {
  EXPECT_THROW(train_discriminator(preset_lrd(), normal_data(1, 1, 0, 1, 1), normal_data(5, 1, 0, 1, 2),
                                   derive_stream(1, 0, 0)),
               DataError);
  EXPECT_THROW(train_discriminator(preset_lrd(), normal_data(5, 2, 0, 1, 1), normal_data(5, 1, 0, 1, 2),
                                   derive_stream(1, 0, 0)),
               DataError);
}
