#ifndef KLABC_DISCRIMINATOR_HPP
#define KLABC_DISCRIMINATOR_HPP

#include <klabc/core.hpp>
#include <klabc/features.hpp>
#include <klabc/logistic.hpp>
#include <klabc/mlp.hpp>

#include <string>
#include <vector>

namespace klabc {

inline constexpr double kDefaultClipEps = 1e-7;

enum class DiscriminatorKind { kL1Logistic, kMlp };

struct DiscriminatorSpec {
  DiscriminatorKind kind = DiscriminatorKind::kL1Logistic;
  FeatureMap features{FeatureKind::kPoly2, true};

  // l1 logistic
  /// Explicit grid; when empty a log-spaced grid below lambda_max is used.
  std::vector<double> lambda_grid;
  std::size_t lambda_count = 50;
  double lambda_min_ratio = 1e-3;
  std::size_t cv_folds = 5;
  LogisticOptions solver;

  // mlp
  std::vector<std::size_t> layer_sizes;
  std::vector<Activation> activations;
  MlpTrainOptions training;

  double clip_eps = kDefaultClipEps;

  void validate() const {
    if (!(clip_eps > 0.0 && clip_eps < 0.5)) throw ConfigError("discriminator: clip_eps must lie in (0, 0.5)");
    if (kind == DiscriminatorKind::kL1Logistic) {
      for (double l : lambda_grid) {
        if (!(l > 0.0) || !std::isfinite(l)) throw ConfigError("discriminator: lambda values must be > 0");
      }
      if (lambda_grid.empty() && lambda_count == 0) throw ConfigError("discriminator: lambda grid is empty");
      if (!(lambda_min_ratio > 0.0 && lambda_min_ratio <= 1.0)) {
        throw ConfigError("discriminator: lambda_min_ratio must lie in (0, 1]");
      }
      if (cv_folds < 2) throw ConfigError("discriminator: cv_folds must be >= 2");
    } else {
      if (layer_sizes.empty()) throw ConfigError("discriminator: mlp needs at least one hidden layer");
      if (layer_sizes.size() != activations.size()) {
        throw ConfigError("discriminator: layer_sizes and activations must have equal length");
      }
      if (training.epochs == 0) throw ConfigError("discriminator: epochs must be >= 1");
      if (!(training.learning_rate > 0.0)) throw ConfigError("discriminator: learning_rate must be > 0");
      if (training.batch_size == 0) throw ConfigError("discriminator: batch_size must be >= 1");
    }
  }
};

/// Logistic regression on degree-2 polynomial terms.
inline DiscriminatorSpec preset_lrd() { return {}; }

/// raw -> 10 relu -> 10 tanh -> 10 tanh -> logit.
inline DiscriminatorSpec preset_nnd1() {
  DiscriminatorSpec s;
  s.kind = DiscriminatorKind::kMlp;
  s.features = {FeatureKind::kRaw, true};
  s.layer_sizes = {10, 10, 10};
  s.activations = {Activation::kRelu, Activation::kTanh, Activation::kTanh};
  return s;
}

/// poly2 -> 10 relu -> 10 tanh -> logit.
inline DiscriminatorSpec preset_nnd2() {
  DiscriminatorSpec s;
  s.kind = DiscriminatorKind::kMlp;
  s.features = {FeatureKind::kPoly2, true};
  s.layer_sizes = {10, 10};
  s.activations = {Activation::kRelu, Activation::kTanh};
  return s;
}

/// powers3 -> 10 relu -> 10 tanh -> logit, for the g-and-k model.
inline DiscriminatorSpec preset_gk_net() {
  DiscriminatorSpec s = preset_nnd2();
  s.features = {FeatureKind::kPowers3, true};
  return s;
}

inline DiscriminatorSpec discriminator_preset(const std::string& name) {
  if (name == "lrd") return preset_lrd();
  if (name == "nnd1") return preset_nnd1();
  if (name == "nnd2") return preset_nnd2();
  if (name == "gk_net") return preset_gk_net();
  throw ConfigError("unknown discriminator preset '" + name + "' (expected lrd, nnd1, nnd2, gk_net)");
}

/// Clipped log-odds of a probability.
inline double logit_from_probability(double d, double clip_eps = kDefaultClipEps) {
  const double c = std::clamp(d, clip_eps, 1.0 - clip_eps);
  return std::log(c / (1.0 - c));
}

class TrainedDiscriminator {
 public:
  TrainedDiscriminator() = default;

  static TrainedDiscriminator from_logistic(FittedFeatureMap fm, LogisticFit fit, double clip_eps) {
    TrainedDiscriminator d;
    d.kind_ = DiscriminatorKind::kL1Logistic;
    d.features_ = std::move(fm);
    d.logistic_ = std::move(fit);
    d.clip_eps_ = clip_eps;
    d.converged_ = d.logistic_.converged;
    return d;
  }

  static TrainedDiscriminator from_mlp(FittedFeatureMap fm, MlpModel model, double clip_eps) {
    TrainedDiscriminator d;
    d.kind_ = DiscriminatorKind::kMlp;
    d.features_ = std::move(fm);
    d.mlp_ = std::move(model);
    d.clip_eps_ = clip_eps;
    return d;
  }

  DiscriminatorKind kind() const { return kind_; }
  double clip_eps() const { return clip_eps_; }
  bool converged() const { return converged_; }
  const LogisticFit& logistic() const { return logistic_; }
  const MlpModel& mlp() const { return mlp_; }
  const FittedFeatureMap& feature_map() const { return features_; }

  /// Unclipped scores on already transformed features.
  Eigen::VectorXd raw_scores(const Eigen::MatrixXd& transformed) const {
    if (kind_ == DiscriminatorKind::kL1Logistic) {
      return (transformed * logistic_.coefficients).array() + logistic_.intercept;
    }
    return mlp_.logits(transformed);
  }

  /// log(D / (1 - D)) per row with D clipped to [clip_eps, 1 - clip_eps].
  Eigen::VectorXd logits(const Dataset& data) const {
    const double bound = std::log((1.0 - clip_eps_) / clip_eps_);
    return raw_scores(features_.transform(data.matrix())).cwiseMax(-bound).cwiseMin(bound);
  }

  Eigen::VectorXd probabilities(const Dataset& data) const {
    Eigen::VectorXd eta = logits(data);
    for (Eigen::Index i = 0; i < eta.size(); ++i) eta[i] = std::clamp(sigmoid(eta[i]), clip_eps_, 1.0 - clip_eps_);
    return eta;
  }

 private:
  DiscriminatorKind kind_ = DiscriminatorKind::kL1Logistic;
  FittedFeatureMap features_;
  LogisticFit logistic_;
  MlpModel mlp_;
  double clip_eps_ = kDefaultClipEps;
  bool converged_ = true;
};

/// Fits a classifier with real rows labelled 1 and fake rows labelled 0,
/// maximizing P_n log D + P_m log(1 - D).
inline TrainedDiscriminator train_discriminator(const DiscriminatorSpec& spec, const Dataset& real,
                                                const Dataset& fake, SeedSpec seed) {
  if (real.rows() < 2 || fake.rows() < 2) throw DataError("discriminator: need at least two rows per class");
  if (real.cols() != fake.cols()) throw DataError("discriminator: real and fake column counts differ");

  const Eigen::MatrixXd real_x = expand_features(spec.features.kind, real.matrix());
  const Eigen::MatrixXd fake_x = expand_features(spec.features.kind, fake.matrix());
  Eigen::MatrixXd pool(real_x.rows() + fake_x.rows(), real_x.cols());
  pool << real_x, fake_x;
  FittedFeatureMap fm(spec.features, pool);
  const Eigen::MatrixXd real_z = fm.standardize(real_x);
  const Eigen::MatrixXd fake_z = fm.standardize(fake_x);
  const LogisticProblem problem = make_logistic_problem(real_z, fake_z);

  if (spec.kind == DiscriminatorKind::kMlp) {
    MlpModel model = train_mlp(problem, spec.layer_sizes, spec.activations, spec.training, seed);
    return TrainedDiscriminator::from_mlp(std::move(fm), std::move(model), spec.clip_eps);
  }

  std::vector<double> grid = spec.lambda_grid;
  if (grid.empty()) {
    grid = default_lambda_grid(lambda_max(problem), spec.lambda_count, spec.lambda_min_ratio);
  }
  std::sort(grid.begin(), grid.end(), std::greater<>());
  std::size_t chosen = 0;
  if (grid.size() > 1) {
    chosen = cross_validate_lambda(real_z, fake_z, grid, spec.cv_folds, seed, spec.clip_eps, spec.solver).selected;
  }
  grid.resize(chosen + 1);
  auto path = fit_l1_logistic_path(problem, grid, spec.solver);
  return TrainedDiscriminator::from_logistic(std::move(fm), std::move(path.back()), spec.clip_eps);
}

}  // namespace klabc

#endif  // KLABC_DISCRIMINATOR_HPP
