#ifndef KLABC_PRIORS_HPP
#define KLABC_PRIORS_HPP

#include <klabc/core.hpp>

#include <boost/math/special_functions/gamma.hpp>

#include <optional>

namespace klabc {

/// Independent uniforms on [lower_i, upper_i], optionally pushed through an
/// invertible affine map theta = matrix * u + offset.
struct UniformBoxPrior {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  std::optional<Eigen::MatrixXd> transform_matrix;
  std::optional<Eigen::VectorXd> transform_offset;

  Eigen::Index dim() const { return lower.size(); }

  void validate() const {
    if (lower.size() == 0 || lower.size() != upper.size()) {
      throw ConfigError("uniform_box prior: lower and upper must be nonempty and of equal length");
    }
    for (Eigen::Index i = 0; i < lower.size(); ++i) {
      if (!(lower[i] < upper[i])) {
        throw ConfigError("uniform_box prior: lower[" + std::to_string(i) + "] must be < upper[" +
                          std::to_string(i) + "]");
      }
    }
    if (transform_matrix) {
      const auto& a = *transform_matrix;
      if (a.rows() != dim() || a.cols() != dim()) {
        throw ConfigError("uniform_box prior: transform matrix must be d x d");
      }
      if (a.fullPivLu().rank() != dim()) {
        throw ConfigError("uniform_box prior: transform matrix is not invertible");
      }
    }
    if (transform_offset && transform_offset->size() != dim()) {
      throw ConfigError("uniform_box prior: transform offset must have length d");
    }
  }

  /// Maps a pre-transform draw to model coordinates.
  ParamVector apply_transform(const Eigen::VectorXd& u) const {
    ParamVector theta = transform_matrix ? Eigen::VectorXd(*transform_matrix * u) : u;
    if (transform_offset) theta += *transform_offset;
    return theta;
  }
};

/// (theta1, theta2 - theta1, theta3) -> (theta1, theta2, theta3) for the
/// M/G/1 queue, so that theta2 >= theta1 holds for every draw.
inline Eigen::MatrixXd mg1_gap_transform() {
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(3, 3);
  a(1, 0) = 1.0;
  return a;
}

inline ParamVector sample_uniform_box(const UniformBoxPrior& prior, SeedSpec seed) {
  RandomStream rng(seed);
  Eigen::VectorXd u(prior.dim());
  for (Eigen::Index i = 0; i < prior.dim(); ++i) {
    u[i] = prior.lower[i] + (prior.upper[i] - prior.lower[i]) * rng.uniform();
  }
  return prior.apply_transform(u);
}

/// Normal-inverse-Wishart: Sigma ~ W^{-1}(phi, nu), mu | Sigma ~ N(mu0, Sigma / lambda).
struct NIWPrior {
  Eigen::VectorXd mu0;
  double lambda = 1.0;
  Eigen::MatrixXd phi;
  double nu = 0.0;

  Eigen::Index dim() const { return mu0.size(); }

  void validate() const {
    const auto d = dim();
    if (d == 0) throw ConfigError("niw prior: mu0 must be nonempty");
    if (phi.rows() != d || phi.cols() != d) throw ConfigError("niw prior: Phi must be d x d");
    if (!phi.isApprox(phi.transpose(), 1e-12)) throw ConfigError("niw prior: Phi must be symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(phi);
    if (llt.info() != Eigen::Success) throw ConfigError("niw prior: Phi must be positive definite");
    if (!(lambda > 0.0)) throw ConfigError("niw prior: lambda must be > 0");
    if (!(nu >= static_cast<double>(d))) throw ConfigError("niw prior: nu must be >= d");
  }
};

struct NIWDraw {
  ParamVector mu;
  Eigen::MatrixXd sigma;
  /// Lower-triangular, root * root' == sigma.
  Eigen::MatrixXd root;
};

namespace detail {

inline double chi_square_quantile(double dof, double u) {
  return 2.0 * boost::math::gamma_p_inv(0.5 * dof, u);
}

}  // namespace detail

/// Bartlett decomposition of the Wishart followed by a triangular solve.
/// With phi = C C' and the Bartlett factor A, Sigma = C A^{-T} A^{-1} C'.
inline NIWDraw sample_niw(const NIWPrior& prior, SeedSpec seed) {
  const auto d = prior.dim();
  RandomStream rng(seed);
  const Eigen::MatrixXd c = Eigen::LLT<Eigen::MatrixXd>(prior.phi).matrixL();

  for (int attempt = 0; attempt < 1000; ++attempt) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      a(i, i) = std::sqrt(detail::chi_square_quantile(prior.nu - static_cast<double>(i), rng.uniform()));
      for (Eigen::Index j = 0; j < i; ++j) a(i, j) = rng.normal();
    }
    Eigen::VectorXd z(d);
    for (Eigen::Index i = 0; i < d; ++i) z[i] = rng.normal();

    if (a.diagonal().minCoeff() < 1e-150) continue;
    const Eigen::MatrixXd a_inv =
        a.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(d, d));
    const Eigen::MatrixXd t = c * a_inv.transpose();
    Eigen::MatrixXd sigma = t * t.transpose();
    sigma = 0.5 * (sigma + sigma.transpose());

    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success || !sigma.allFinite()) continue;
    Eigen::MatrixXd root = llt.matrixL();
    if (root.diagonal().minCoeff() <= 0.0) continue;

    ParamVector mu = prior.mu0 + root * z / std::sqrt(prior.lambda);
    return {std::move(mu), std::move(sigma), std::move(root)};
  }
  throw std::runtime_error("niw prior: sampled Wishart matrix repeatedly singular");
}

/// Packs (mu, sigma) as (mu_1..mu_d, sigma_11, sigma_12, .., sigma_1d, sigma_22, ..).
inline ParamVector pack_mean_covariance(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma) {
  const auto d = mu.size();
  ParamVector theta(d + d * (d + 1) / 2);
  theta.head(d) = mu;
  Eigen::Index k = d;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i; j < d; ++j) theta[k++] = sigma(i, j);
  return theta;
}

/// Inverse of pack_mean_covariance; `assets` is d.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> unpack_mean_covariance(const ParamVector& theta,
                                                                         Eigen::Index assets) {
  const auto d = assets;
  if (theta.size() != d + d * (d + 1) / 2) {
    throw std::invalid_argument("parameter vector length does not match asset count");
  }
  Eigen::VectorXd mu = theta.head(d);
  Eigen::MatrixXd sigma(d, d);
  Eigen::Index k = d;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i; j < d; ++j) sigma(i, j) = sigma(j, i) = theta[k++];
  return {std::move(mu), std::move(sigma)};
}

}  // namespace klabc

#endif  // KLABC_PRIORS_HPP
