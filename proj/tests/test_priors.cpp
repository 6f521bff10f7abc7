#include <klabc/priors.hpp>

#include <gtest/gtest.h>

using namespace klabc;

namespace {

UniformBoxPrior box(std::initializer_list<double> lo, std::initializer_list<double> hi) {
  UniformBoxPrior p;
  p.lower = Eigen::Map<const Eigen::VectorXd>(lo.begin(), static_cast<Eigen::Index>(lo.size()));
  p.upper = Eigen::Map<const Eigen::VectorXd>(hi.begin(), static_cast<Eigen::Index>(hi.size()));
  return p;
}

NIWPrior niw(Eigen::Index d, double lambda, double nu) {
  NIWPrior p;
  p.mu0 = Eigen::VectorXd::Zero(d);
  p.lambda = lambda;
  p.phi = Eigen::MatrixXd::Identity(d, d);
  p.nu = nu;
  return p;
}

}  // namespace

TEST(UniformBox, IdentityTransformMidpoint) {
  const auto p = box({0.0}, {1.0});
  Eigen::VectorXd u(1);
  u << 0.5;
  EXPECT_DOUBLE_EQ(p.apply_transform(u)[0], 0.5);
}

TEST(UniformBox, QueueGapTransform) {
  auto p = box({0, 0, 0}, {10, 10, 0.5});
  p.transform_matrix = mg1_gap_transform();
  Eigen::VectorXd u(3);
  u << 1.0, 4.0, 0.2;
  const ParamVector theta = p.apply_transform(u);
  EXPECT_DOUBLE_EQ(theta[0], 1.0);
  EXPECT_DOUBLE_EQ(theta[1], 5.0);
  EXPECT_DOUBLE_EQ(theta[2], 0.2);
}

TEST(UniformBox, QueueDrawsRespectOrdering) {
  auto p = box({0, 0, 0}, {10, 10, 0.5});
  p.transform_matrix = mg1_gap_transform();
  for (std::uint64_t j = 0; j < 5000; ++j) {
    const ParamVector t = sample_uniform_box(p, derive_stream(1, Purpose::kPrior, j));
    ASSERT_GE(t[1], t[0]);
    ASSERT_GE(t[2], 0.0);
    ASSERT_LE(t[2], 0.5);
  }
}

TEST(UniformBox, EmpiricalMean) {
  const auto p = box({0.0}, {10.0});
  double s = 0.0;
  const int n = 100000;
  for (int j = 0; j < n; ++j) s += sample_uniform_box(p, derive_stream(4, Purpose::kPrior, j))[0];
  EXPECT_NEAR(s / n, 5.0, 0.05);
}

TEST(UniformBox, ValidationErrors) {
  EXPECT_THROW(box({1.0}, {1.0}).validate(), ConfigError);
  EXPECT_THROW(box({0.0, 0.0}, {1.0}).validate(), ConfigError);
  auto p = box({0, 0}, {1, 1});
  p.transform_matrix = Eigen::MatrixXd::Ones(2, 2);
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(NIW, DrawsAreSymmetricPositiveDefinite) {
  const auto p = niw(3, 1.0, 5.0);
  for (std::uint64_t j = 0; j < 500; ++j) {
    const NIWDraw d = sample_niw(p, derive_stream(2, Purpose::kPrior, j));
    ASSERT_TRUE(d.sigma.isApprox(d.sigma.transpose(), 1e-14));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(d.sigma);
    ASSERT_GT(es.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(NIW, RootReconstructsSigma) {
  const auto p = niw(3, 2.0, 6.0);
  for (std::uint64_t j = 0; j < 200; ++j) {
    const NIWDraw d = sample_niw(p, derive_stream(3, Purpose::kPrior, j));
    const double rel = (d.root * d.root.transpose() - d.sigma).norm() / d.sigma.norm();
    ASSERT_LE(rel, 1e-12);
    ASSERT_TRUE(d.root.isLowerTriangular());
  }
}

TEST(NIW, MeanMatchesInverseWishartMean) {
  const Eigen::Index d = 2;
  const double nu = 10.0;
  const auto p = niw(d, 1.0, nu);
  const Eigen::MatrixXd expected = p.phi / (nu - static_cast<double>(d) - 1.0);
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(d, d);
  const int n = 100000;
  for (int j = 0; j < n; ++j) sum += sample_niw(p, derive_stream(5, Purpose::kPrior, j)).sigma;
  const Eigen::MatrixXd mean = sum / n;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index k = 0; k < d; ++k) EXPECT_NEAR(mean(i, k), expected(i, k), 0.01);
}

TEST(NIW, LargeLambdaConcentratesMean) {
  auto p = niw(2, 1e6, 5.0);
  p.mu0 << 0.3, -0.7;
  for (std::uint64_t j = 0; j < 200; ++j) {
    const NIWDraw d = sample_niw(p, derive_stream(6, Purpose::kPrior, j));
    ASSERT_LE((d.mu - p.mu0).cwiseAbs().maxCoeff(), 0.01);
  }
}

TEST(NIW, PackRoundTrip) {
  Eigen::VectorXd mu(2);
  mu << 0.1, 0.2;
  Eigen::MatrixXd sigma(2, 2);
  sigma << 2.0, 0.5, 0.5, 1.0;
  const ParamVector theta = pack_mean_covariance(mu, sigma);
  ASSERT_EQ(theta.size(), 5);
  EXPECT_DOUBLE_EQ(theta[2], 2.0);
  EXPECT_DOUBLE_EQ(theta[3], 0.5);
  EXPECT_DOUBLE_EQ(theta[4], 1.0);
  const auto [m2, s2] = unpack_mean_covariance(theta, 2);
  EXPECT_EQ(m2, mu);
  EXPECT_EQ(s2, sigma);
}

TEST(NIW, ValidationErrors) {
  auto p = niw(2, 1.0, 1.5);
  EXPECT_THROW(p.validate(), ConfigError);
  p = niw(2, 0.0, 5.0);
  EXPECT_THROW(p.validate(), ConfigError);
  p = niw(2, 1.0, 5.0);
  p.phi(0, 1) = 3.0;
  p.phi(1, 0) = 3.0;
  EXPECT_THROW(p.validate(), ConfigError);
}
