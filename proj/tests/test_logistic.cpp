#include <klabc/logistic.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace klabc;

namespace {

Eigen::MatrixXd gaussian(Eigen::Index n, Eigen::Index p, double shift, std::uint64_t seed) {
  RandomStream rng(derive_stream(seed, 0, 0));
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = rng.normal() + (j == 0 ? shift : 0.0);
  return x;
}

// Subgradient conditions for the penalized maximum, computed from scratch.
void expect_kkt(const LogisticProblem& pr, const LogisticFit& fit, double tol) {
  Eigen::VectorXd r(pr.rows());
  for (Eigen::Index i = 0; i < pr.rows(); ++i) {
    const double eta = pr.design.row(i).dot(fit.coefficients) + fit.intercept;
    r[i] = pr.weights[i] * (pr.labels[i] - 1.0 / (1.0 + std::exp(-eta)));
  }
  EXPECT_NEAR(r.sum(), 0.0, tol);
  const Eigen::VectorXd g = pr.design.transpose() * r;
  for (Eigen::Index j = 0; j < g.size(); ++j) {
    const double b = fit.coefficients[j];
    if (b == 0.0) {
      EXPECT_LE(std::abs(g[j]), fit.lambda + tol) << "coordinate " << j;
    } else {
      EXPECT_NEAR(g[j], fit.lambda * (b > 0 ? 1.0 : -1.0), tol) << "coordinate " << j;
    }
  }
}

}  // namespace

TEST(Logistic, LikelihoodTermIsStable) {
  EXPECT_NEAR(log_likelihood_term(1.0, 800.0), 0.0, 1e-300);
  EXPECT_DOUBLE_EQ(log_likelihood_term(0.0, 800.0), -800.0);
  EXPECT_DOUBLE_EQ(log_likelihood_term(1.0, 0.0), -std::log(2.0));
  EXPECT_DOUBLE_EQ(sigmoid(-800.0) + sigmoid(800.0), 1.0);
}

TEST(Logistic, ProblemWeightsBalanceClasses) {
  const auto pr = make_logistic_problem(gaussian(30, 2, 0, 1), gaussian(70, 2, 0, 2));
  EXPECT_NEAR(pr.weights.head(30).sum(), 1.0, 1e-14);
  EXPECT_NEAR(pr.weights.tail(70).sum(), 1.0, 1e-14);
  EXPECT_EQ(pr.labels.sum(), 30.0);
}

TEST(Logistic, AscentTraceNeverDecreases) {
  const auto pr = make_logistic_problem(gaussian(200, 4, 1.0, 3), gaussian(300, 4, 0.0, 4));
  for (double lambda : {0.0, 1e-3, 1e-2}) {
    const auto fit = fit_l1_logistic(pr, lambda);
    ASSERT_GE(fit.objective_trace.size(), 2u);
    for (std::size_t k = 1; k < fit.objective_trace.size(); ++k) {
      EXPECT_GE(fit.objective_trace[k], fit.objective_trace[k - 1]);
    }
    EXPECT_TRUE(fit.converged);
    EXPECT_DOUBLE_EQ(fit.objective_trace.back(),
                     penalized_objective(pr, fit.intercept, fit.coefficients, lambda));
  }
}

TEST(Logistic, SolutionSatisfiesSubgradientConditions) {
  const auto pr = make_logistic_problem(gaussian(250, 5, 0.7, 5), gaussian(250, 5, 0.0, 6));
  const double lmax = lambda_max(pr);
  for (double frac : {0.5, 0.1, 0.01}) expect_kkt(pr, fit_l1_logistic(pr, frac * lmax), 1e-6);
}

TEST(Logistic, LambdaMaxZeroesEverySlope) {
  const auto pr = make_logistic_problem(gaussian(100, 3, 0.5, 7), gaussian(100, 3, 0.0, 8));
  const double lmax = lambda_max(pr);
  EXPECT_EQ(fit_l1_logistic(pr, lmax * 1.0001).nonzero(), 0);
  EXPECT_GT(fit_l1_logistic(pr, lmax * 0.9).nonzero(), 0);
}

TEST(Logistic, InterceptOnlyFitIsOneHalfForAnyClassSizes) {
  for (auto [n, m] : {std::pair{10, 10}, std::pair{30, 170}, std::pair{500, 7}}) {
    const auto pr = make_logistic_problem(gaussian(n, 2, 0.3, n), gaussian(m, 2, 0.0, m + 1000));
    const auto fit = fit_l1_logistic(pr, 10.0 * lambda_max(pr) + 1.0);
    EXPECT_EQ(fit.nonzero(), 0);
    EXPECT_NEAR(sigmoid(fit.intercept), 0.5, 1e-9);
  }
}

TEST(Logistic, UnpenalizedOneDimensionalMatchesNewtonOracle) {
  Eigen::MatrixXd real(4, 1), fake(4, 1);
  real << 0.5, 1.0, 2.0, -0.5;
  fake << -1.0, 0.0, 0.3, -2.0;
  const auto pr = make_logistic_problem(real, fake);
  double a = 0.0, b = 0.0;
  for (int it = 0; it < 100; ++it) {
    double ga = 0, gb = 0, haa = 0, hab = 0, hbb = 0;
    for (Eigen::Index i = 0; i < 8; ++i) {
      const double x = pr.design(i, 0);
      const double p = 1.0 / (1.0 + std::exp(-(a + b * x)));
      const double w = pr.weights[i];
      ga += w * (pr.labels[i] - p);
      gb += w * (pr.labels[i] - p) * x;
      haa += w * p * (1 - p);
      hab += w * p * (1 - p) * x;
      hbb += w * p * (1 - p) * x * x;
    }
    const double det = haa * hbb - hab * hab;
    a += (hbb * ga - hab * gb) / det;
    b += (haa * gb - hab * ga) / det;
  }
  const auto fit = fit_l1_logistic(pr, 0.0);
  EXPECT_NEAR(fit.intercept, a, 1e-6);
  EXPECT_NEAR(fit.coefficients[0], b, 1e-6);
}

TEST(Logistic, PathStartsEmptyAndEachPointIsOptimal) {
  const auto pr = make_logistic_problem(gaussian(300, 6, 0.6, 9), gaussian(300, 6, 0.0, 10));
  const auto grid = default_lambda_grid(lambda_max(pr), 12, 1e-3);
  ASSERT_EQ(grid.size(), 12u);
  EXPECT_DOUBLE_EQ(grid.front(), lambda_max(pr));
  const Eigen::VectorXd residual = pr.weights.cwiseProduct((pr.labels.array() - 0.5).matrix());
  EXPECT_NEAR(grid.front(), (pr.design.transpose() * residual).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(grid.back(), lambda_max(pr) * 1e-3, 1e-15);
  for (std::size_t k = 1; k < grid.size(); ++k) EXPECT_LT(grid[k], grid[k - 1]);
  const auto path = fit_l1_logistic_path(pr, grid);
  EXPECT_EQ(path.front().nonzero(), 0);
  EXPECT_EQ(path.back().nonzero(), 6);
  for (const auto& fit : path) expect_kkt(pr, fit, 1e-6);
}

TEST(Logistic, WarmStartReachesSameOptimum) {
  const auto pr = make_logistic_problem(gaussian(200, 3, 0.8, 11), gaussian(200, 3, 0.0, 12));
  const double lambda = 0.05 * lambda_max(pr);
  const auto cold = fit_l1_logistic(pr, lambda);
  const auto warm_from = fit_l1_logistic(pr, 0.5 * lambda_max(pr));
  const auto warm = fit_l1_logistic(pr, lambda, &warm_from);
  EXPECT_NEAR(penalized_objective(pr, cold.intercept, cold.coefficients, lambda),
              penalized_objective(pr, warm.intercept, warm.coefficients, lambda), 1e-9);
}

TEST(Logistic, FoldsAreBalancedAndSeeded) {
  const auto f = assign_folds(103, 5, derive_stream(1, 0, 0));
  std::vector<int> count(5, 0);
  for (auto v : f) ++count[v];
  for (int c : count) EXPECT_TRUE(c == 20 || c == 21);
  EXPECT_EQ(f, assign_folds(103, 5, derive_stream(1, 0, 0)));
  EXPECT_NE(f, assign_folds(103, 5, derive_stream(2, 0, 0)));
}

TEST(Logistic, CrossValidationTiesPickLargerLambda) {
  const Eigen::MatrixXd real = gaussian(60, 2, 0.0, 13);
  const Eigen::MatrixXd fake = gaussian(60, 2, 0.0, 14);
  const double big = 1e3;
  const auto cv = cross_validate_lambda(real, fake, {big * 3, big * 2, big}, 5, derive_stream(1, 0, 0), 1e-7);
  ASSERT_EQ(cv.scores.size(), 3u);
  EXPECT_NEAR(cv.scores[0], cv.scores[1], 1e-14);
  EXPECT_NEAR(cv.scores[1], cv.scores[2], 1e-14);
  EXPECT_EQ(cv.selected, 0u);
}

TEST(Logistic, CrossValidationPrefersSignalOverEmptyModel) {
  const Eigen::MatrixXd real = gaussian(200, 2, 2.0, 15);
  const Eigen::MatrixXd fake = gaussian(200, 2, 0.0, 16);
  const auto pr = make_logistic_problem(real, fake);
  const auto grid = default_lambda_grid(lambda_max(pr) * 1.01, 10, 1e-3);
  const auto cv = cross_validate_lambda(real, fake, grid, 5, derive_stream(3, 0, 0), 1e-7);
  EXPECT_GT(cv.selected, 0u);
  EXPECT_GT(cv.scores[cv.selected], cv.scores[0]);
}

TEST(Logistic, HeldoutObjectiveClips) {
  LogisticFit fit;
  fit.coefficients = Eigen::VectorXd::Ones(1);
  fit.intercept = 0.0;
  Eigen::MatrixXd real(1, 1), fake(1, 1);
  real << -1000.0;
  fake << 1000.0;
  EXPECT_NEAR(heldout_objective(fit, real, fake, 1e-7), 2.0 * std::log(1e-7), 1e-9);
}
