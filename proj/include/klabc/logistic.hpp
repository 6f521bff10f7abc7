#ifndef KLABC_LOGISTIC_HPP
#define KLABC_LOGISTIC_HPP

#include <klabc/core.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace klabc {

/// Weighted binary problem over a standardized design. Labels are 1 (real) or
/// 0 (fake); weights are 1/n on real rows and 1/m on fake rows so the smooth
/// part of the objective is P_n log D + P_m log(1 - D).
struct LogisticProblem {
  Eigen::MatrixXd design;
  Eigen::VectorXd labels;
  Eigen::VectorXd weights;

  Eigen::Index rows() const { return design.rows(); }
  Eigen::Index features() const { return design.cols(); }
};

/// log sigma(eta) for label 1, log(1 - sigma(eta)) for label 0, overflow-safe.
inline double log_likelihood_term(double label, double eta) {
  const double softplus = std::max(eta, 0.0) + std::log1p(std::exp(-std::abs(eta)));
  return label * eta - softplus;
}

inline double sigmoid(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

/// Class-weighted problem with mean-form weights.
inline LogisticProblem make_logistic_problem(const Eigen::MatrixXd& real_features,
                                             const Eigen::MatrixXd& fake_features) {
  const Eigen::Index n = real_features.rows();
  const Eigen::Index m = fake_features.rows();
  LogisticProblem problem;
  problem.design.resize(n + m, real_features.cols());
  problem.design.topRows(n) = real_features;
  problem.design.bottomRows(m) = fake_features;
  problem.labels.resize(n + m);
  problem.labels.head(n).setOnes();
  problem.labels.tail(m).setZero();
  problem.weights.resize(n + m);
  problem.weights.head(n).setConstant(1.0 / static_cast<double>(n));
  problem.weights.tail(m).setConstant(1.0 / static_cast<double>(m));
  return problem;
}

struct LogisticFit {
  double intercept = 0.0;
  Eigen::VectorXd coefficients;
  double lambda = 0.0;
  bool converged = true;
  int iterations = 0;
  /// Penalized objective after each outer iteration (non-decreasing).
  std::vector<double> objective_trace;

  Eigen::Index nonzero() const { return (coefficients.array() != 0.0).count(); }
};

struct LogisticOptions {
  int max_iterations = 100;
  int max_inner_sweeps = 200;
  double tolerance = 1e-10;
};

/// sum_i w_i l_i(eta_i) - lambda * ||beta||_1 (intercept unpenalized).
inline double penalized_objective(const LogisticProblem& problem, double intercept,
                                  const Eigen::VectorXd& beta, double lambda) {
  const Eigen::VectorXd eta = (problem.design * beta).array() + intercept;
  double total = 0.0;
  for (Eigen::Index i = 0; i < problem.rows(); ++i) {
    total += problem.weights[i] * log_likelihood_term(problem.labels[i], eta[i]);
  }
  return total - lambda * beta.lpNorm<1>();
}

namespace detail {

inline double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

}  // namespace detail

/// Proximal Newton ascent: each outer iteration builds the weighted quadratic
/// model of the log-likelihood, solves the l1-penalized model by cyclic
/// coordinate descent with soft-thresholding, then backtracks along the step
/// until the penalized objective does not decrease.
inline LogisticFit fit_l1_logistic(const LogisticProblem& problem, double lambda,
                                   const LogisticFit* warm_start = nullptr,
                                   const LogisticOptions& options = {}) {
  const Eigen::Index p = problem.features();
  const Eigen::Index n = problem.rows();
  LogisticFit fit;
  fit.lambda = lambda;
  fit.coefficients = Eigen::VectorXd::Zero(p);
  if (warm_start != nullptr && warm_start->coefficients.size() == p) {
    fit.intercept = warm_start->intercept;
    fit.coefficients = warm_start->coefficients;
  }

  double current = penalized_objective(problem, fit.intercept, fit.coefficients, lambda);
  fit.objective_trace.push_back(current);
  fit.converged = false;

  Eigen::VectorXd eta(n), residual(n), curvature(n);
  Eigen::MatrixXd scaled(n, p + 1);
  Eigen::MatrixXd hessian(p + 1, p + 1);
  Eigen::VectorXd gradient(p + 1), step(p + 1), hstep(p + 1);

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    fit.iterations = iter + 1;
    eta = (problem.design * fit.coefficients).array() + fit.intercept;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double prob = sigmoid(eta[i]);
      const double w = problem.weights[i];
      residual[i] = w * (problem.labels[i] - prob);
      curvature[i] = w * std::max(prob * (1.0 - prob), 1e-5);
    }
    gradient[0] = residual.sum();
    gradient.tail(p).noalias() = problem.design.transpose() * residual;

    const Eigen::VectorXd root = curvature.cwiseSqrt();
    scaled.col(0) = root;
    scaled.rightCols(p) = problem.design.array().colwise() * root.array();
    hessian.setZero();
    hessian.selfadjointView<Eigen::Lower>().rankUpdate(scaled.transpose());
    for (Eigen::Index c = 1; c <= p; ++c)
      for (Eigen::Index r = 0; r < c; ++r) hessian(r, c) = hessian(c, r);

    // Coordinate descent on the quadratic model; step = new - current.
    step.setZero();
    hstep.setZero();
    for (int sweep = 0; sweep < options.max_inner_sweeps; ++sweep) {
      double largest = 0.0;
      for (Eigen::Index j = 0; j <= p; ++j) {
        const double hjj = hessian(j, j);
        if (hjj <= 0.0) continue;
        const double a = gradient[j] - hstep[j] + hjj * step[j];
        double updated;
        if (j == 0) {
          updated = a / hjj;
        } else {
          const double beta_j = fit.coefficients[j - 1];
          updated = detail::soft_threshold(hjj * beta_j + a, lambda) / hjj - beta_j;
        }
        const double delta = updated - step[j];
        if (delta != 0.0) {
          hstep.noalias() += hessian.col(j) * delta;
          step[j] = updated;
          largest = std::max(largest, std::abs(delta) * std::sqrt(hjj));
        }
      }
      if (largest < 1e-12) break;
    }

    if (step.cwiseAbs().maxCoeff() == 0.0) {
      fit.converged = true;
      break;
    }

    // Backtracking keeps the ascent property of the outer iterations.
    const double predicted =
        gradient.dot(step) - lambda * ((fit.coefficients + step.tail(p)).lpNorm<1>() - fit.coefficients.lpNorm<1>());
    double scale = 1.0;
    bool accepted = false;
    double candidate_value = current;
    double candidate_intercept = fit.intercept;
    Eigen::VectorXd candidate_beta = fit.coefficients;
    for (int halving = 0; halving < 40; ++halving) {
      candidate_intercept = fit.intercept + scale * step[0];
      candidate_beta = fit.coefficients + scale * step.tail(p);
      candidate_value = penalized_objective(problem, candidate_intercept, candidate_beta, lambda);
      if (candidate_value >= current + 1e-4 * scale * std::max(predicted, 0.0)) {
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) {
      fit.converged = true;
      break;
    }
    const double gain = candidate_value - current;
    fit.intercept = candidate_intercept;
    fit.coefficients = candidate_beta;
    current = candidate_value;
    fit.objective_trace.push_back(current);
    if (gain <= options.tolerance * (std::abs(current) + options.tolerance)) {
      fit.converged = true;
      break;
    }
  }
  return fit;
}

/// Smallest lambda at which every slope is zero.
inline double lambda_max(const LogisticProblem& problem) {
  // Fitted probability of the intercept-only optimum is the weighted label mean.
  const double base_rate = problem.weights.dot(problem.labels) / problem.weights.sum();
  const Eigen::VectorXd residual =
      problem.weights.cwiseProduct(problem.labels - Eigen::VectorXd::Constant(problem.rows(), base_rate));
  const Eigen::VectorXd g = problem.design.transpose() * residual;
  // Relative slack so rounding in the solver cannot leave a slope at exactly lambda_max.
  return g.size() ? g.cwiseAbs().maxCoeff() * (1.0 + 1e-12) : 0.0;
}

/// Descending log-spaced grid from lambda_max down to lambda_max * min_ratio.
inline std::vector<double> default_lambda_grid(double lmax, std::size_t count, double min_ratio) {
  std::vector<double> grid;
  if (count == 0) return grid;
  lmax = std::max(lmax, 1e-12);
  if (count == 1) return {lmax * min_ratio};
  for (std::size_t k = 0; k < count; ++k) {
    const double frac = static_cast<double>(k) / static_cast<double>(count - 1);
    grid.push_back(lmax * std::pow(min_ratio, frac));
  }
  return grid;
}

/// Warm-started fits along a grid sorted in decreasing order.
inline std::vector<LogisticFit> fit_l1_logistic_path(const LogisticProblem& problem,
                                                     const std::vector<double>& descending_grid,
                                                     const LogisticOptions& options = {}) {
  std::vector<LogisticFit> path;
  path.reserve(descending_grid.size());
  const LogisticFit* previous = nullptr;
  for (double lambda : descending_grid) {
    path.push_back(fit_l1_logistic(problem, lambda, previous, options));
    previous = &path.back();
  }
  return path;
}

/// Clipped log P_n D + P_m log(1 - D) for a fitted model on held-out rows.
inline double heldout_objective(const LogisticFit& fit, const Eigen::MatrixXd& real,
                                const Eigen::MatrixXd& fake, double clip_eps) {
  auto clipped = [clip_eps](double eta) {
    return std::clamp(sigmoid(eta), clip_eps, 1.0 - clip_eps);
  };
  double score = 0.0;
  if (real.rows() > 0) {
    const Eigen::VectorXd eta = (real * fit.coefficients).array() + fit.intercept;
    double s = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) s += std::log(clipped(eta[i]));
    score += s / static_cast<double>(eta.size());
  }
  if (fake.rows() > 0) {
    const Eigen::VectorXd eta = (fake * fit.coefficients).array() + fit.intercept;
    double s = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) s += std::log(1.0 - clipped(eta[i]));
    score += s / static_cast<double>(eta.size());
  }
  return score;
}

/// Fold of row i within its class is perm[i] mod k, with one permutation of
/// 0..max(n, m)-1 shared by both classes so swapping labels swaps nothing else.
inline std::vector<std::size_t> assign_folds(std::size_t longest, std::size_t folds, SeedSpec seed) {
  std::vector<std::size_t> perm(longest);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  RandomStream rng(seed);
  for (std::size_t i = longest; i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(perm[i - 1], perm[j]);
  }
  for (auto& v : perm) v %= folds;
  return perm;
}

inline constexpr double kCvTieTolerance = 1e-12;

struct CrossValidationResult {
  std::vector<double> grid;
  std::vector<double> scores;
  std::size_t selected = 0;
};

/// k-fold cross-validated held-out objective per lambda; the best score wins,
/// ties go to the larger lambda (earlier grid entry).
inline CrossValidationResult cross_validate_lambda(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake,
                                                   const std::vector<double>& descending_grid, std::size_t folds,
                                                   SeedSpec seed, double clip_eps,
                                                   const LogisticOptions& options = {}) {
  const auto n = static_cast<std::size_t>(real.rows());
  const auto m = static_cast<std::size_t>(fake.rows());
  folds = std::min({folds, n, m});
  CrossValidationResult result{descending_grid, std::vector<double>(descending_grid.size(), 0.0), 0};
  if (folds < 2 || descending_grid.size() < 2) return result;

  const auto fold_of = assign_folds(std::max(n, m), folds, seed);
  auto select = [&](const Eigen::MatrixXd& x, std::size_t rows, std::size_t f, bool inside) {
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < rows; ++i)
      if ((fold_of[i] == f) == inside) idx.push_back(static_cast<Eigen::Index>(i));
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), x.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = x.row(idx[r]);
    return out;
  };

  for (std::size_t f = 0; f < folds; ++f) {
    const Eigen::MatrixXd train_real = select(real, n, f, false);
    const Eigen::MatrixXd train_fake = select(fake, m, f, false);
    const Eigen::MatrixXd test_real = select(real, n, f, true);
    const Eigen::MatrixXd test_fake = select(fake, m, f, true);
    if (train_real.rows() == 0 || train_fake.rows() == 0) continue;
    const auto problem = make_logistic_problem(train_real, train_fake);
    const auto path = fit_l1_logistic_path(problem, descending_grid, options);
    for (std::size_t k = 0; k < path.size(); ++k) {
      result.scores[k] += heldout_objective(path[k], test_real, test_fake, clip_eps) / static_cast<double>(folds);
    }
  }
  // Scores equal up to rounding count as ties.
  for (std::size_t k = 1; k < result.scores.size(); ++k) {
    const double best = result.scores[result.selected];
    if (result.scores[k] > best + kCvTieTolerance * std::max(1.0, std::abs(best))) result.selected = k;
  }
  return result;
}

}  // namespace klabc

#endif  // KLABC_LOGISTIC_HPP
