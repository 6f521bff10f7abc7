#ifndef KLABC_DISCREPANCY_HPP
#define KLABC_DISCREPANCY_HPP

#include <klabc/assignment.hpp>
#include <klabc/core.hpp>
#include <klabc/discriminator.hpp>
#include <klabc/features.hpp>

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace klabc {

/// Row flags carried into the reference table.
enum RowFlag : std::uint32_t {
  kFlagTruncated = 1u << 0,
  kFlagNotConverged = 1u << 1,
  kFlagFailed = 1u << 2,
};

namespace detail {

inline void check_pair(const Dataset& real, const Dataset& fake) {
  if (real.rows() == 0 || fake.rows() == 0) throw DataError("discrepancy: datasets must be nonempty");
  if (real.cols() != fake.cols()) throw DataError("discrepancy: real and fake column counts differ");
}

inline double mean_of(const Eigen::VectorXd& v) { return v.size() ? v.sum() / static_cast<double>(v.size()) : 0.0; }

}  // namespace detail

// ---- classification based ----

/// Mean logit over real rows.
inline double klc_from_discriminator(const TrainedDiscriminator& d, const Dataset& real) {
  return detail::mean_of(d.logits(real));
}

/// Mean of log((1 - D) / D) over fake rows.
inline double klc_reverse_from_discriminator(const TrainedDiscriminator& d, const Dataset& fake) {
  return -detail::mean_of(d.logits(fake));
}

/// (sum D(real) + sum (1 - D(fake))) / (n + m).
inline double soft_accuracy(const Eigen::VectorXd& real_prob, const Eigen::VectorXd& fake_prob) {
  const double total = real_prob.sum() + (1.0 - fake_prob.array()).sum();
  return total / static_cast<double>(real_prob.size() + fake_prob.size());
}

inline double soft_accuracy(const TrainedDiscriminator& d, const Dataset& real, const Dataset& fake) {
  return soft_accuracy(d.probabilities(real), d.probabilities(fake));
}

inline double estimate_klc(const Dataset& real, const Dataset& fake, const DiscriminatorSpec& spec, SeedSpec seed) {
  detail::check_pair(real, fake);
  return klc_from_discriminator(train_discriminator(spec, real, fake, seed), real);
}

inline double estimate_klc_reverse(const Dataset& real, const Dataset& fake, const DiscriminatorSpec& spec,
                                   SeedSpec seed) {
  detail::check_pair(real, fake);
  return klc_reverse_from_discriminator(train_discriminator(spec, real, fake, seed), fake);
}

inline double estimate_ca(const Dataset& real, const Dataset& fake, const DiscriminatorSpec& spec, SeedSpec seed) {
  detail::check_pair(real, fake);
  return soft_accuracy(train_discriminator(spec, real, fake, seed), real, fake);
}

// ---- nearest neighbour ----

inline constexpr double kDistanceFloor = 1e-12;

/// 1-nearest-neighbour KL estimate
/// (d/n) sum_i log(nu_i / rho_i) + log(m / (n - 1)).
inline double estimate_knn_kl(const Dataset& real, const Dataset& fake) {
  detail::check_pair(real, fake);
  const Eigen::Index n = real.rows();
  const Eigen::Index m = fake.rows();
  if (n < 2) throw DataError("knn: need at least two real rows");
  const auto d = static_cast<double>(real.cols());
  const Eigen::MatrixXd xt = real.matrix().transpose();
  const Eigen::MatrixXd yt = fake.matrix().transpose();

  std::vector<double> terms(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    double rho = std::numeric_limits<double>::infinity();
    double nu = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) rho = std::min(rho, (xt.col(i) - xt.col(j)).squaredNorm());
    }
    for (Eigen::Index j = 0; j < m; ++j) nu = std::min(nu, (xt.col(i) - yt.col(j)).squaredNorm());
    rho = std::max(std::sqrt(rho), kDistanceFloor);
    nu = std::max(std::sqrt(nu), kDistanceFloor);
    terms[static_cast<std::size_t>(i)] = std::log(nu / rho);
  }
  // Summing in sorted order makes the result independent of row order.
  std::sort(terms.begin(), terms.end());
  const double sum = std::accumulate(terms.begin(), terms.end(), 0.0);
  return d / static_cast<double>(n) * sum + std::log(static_cast<double>(m) / static_cast<double>(n - 1));
}

// ---- Wasserstein ----

inline constexpr std::size_t kMaxExactAssignment = 2000;

/// W2 between two point clouds. Both sets are replicated to L = lcm(n, m)
/// points and matched one-to-one; the value is sqrt(min(n, m) / L * cost),
/// which for n = m is the square root of the optimal matched squared cost.
/// Univariate data are matched by sorting.
inline double estimate_w2(const Dataset& real, const Dataset& fake) {
  detail::check_pair(real, fake);
  const auto n = static_cast<std::size_t>(real.rows());
  const auto m = static_cast<std::size_t>(fake.rows());
  const std::size_t big = std::lcm(n, m);
  const std::size_t rn = big / n;
  const std::size_t rm = big / m;
  const double scale = static_cast<double>(std::min(n, m)) / static_cast<double>(big);

  if (real.cols() == 1) {
    std::vector<double> a(real.matrix().data(), real.matrix().data() + n);
    std::vector<double> b(fake.matrix().data(), fake.matrix().data() + m);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double cost = 0.0;
    for (std::size_t k = 0; k < big; ++k) {
      const double diff = a[k / rn] - b[k / rm];
      cost += diff * diff;
    }
    return std::sqrt(scale * cost);
  }

  if (big > kMaxExactAssignment) {
    throw ConfigError("w2: exact assignment limited to " + std::to_string(kMaxExactAssignment) +
                      " points per side after replication (got " + std::to_string(big) + ")");
  }
  const auto size = static_cast<Eigen::Index>(big);
  Eigen::MatrixXd cost(size, size);
  for (Eigen::Index i = 0; i < size; ++i) {
    const auto ri = real.row(static_cast<Eigen::Index>(static_cast<std::size_t>(i) / rn));
    for (Eigen::Index j = 0; j < size; ++j) {
      cost(i, j) = (ri - fake.row(static_cast<Eigen::Index>(static_cast<std::size_t>(j) / rm))).squaredNorm();
    }
  }
  const auto match = solve_assignment(cost);
  double total = 0.0;
  for (Eigen::Index i = 0; i < size; ++i) total += cost(i, match[static_cast<std::size_t>(i)]);
  return std::sqrt(scale * total);
}

// ---- summary statistics ----

enum class SummaryKind { kMean, kVariance, kQuantiles, kSeriesStats };

inline SummaryKind parse_summary_kind(const std::string& name) {
  if (name == "mean") return SummaryKind::kMean;
  if (name == "variance") return SummaryKind::kVariance;
  if (name == "quantiles") return SummaryKind::kQuantiles;
  if (name == "series_stats") return SummaryKind::kSeriesStats;
  throw ConfigError("unknown summary '" + name + "' (expected mean, variance, quantiles, series_stats)");
}

inline std::string to_string(SummaryKind kind) {
  switch (kind) {
    case SummaryKind::kMean: return "mean";
    case SummaryKind::kVariance: return "variance";
    case SummaryKind::kQuantiles: return "quantiles";
    case SummaryKind::kSeriesStats: return "series_stats";
  }
  return "mean";
}

/// Dataset-level statistic. quantiles are the deciles 0.1..0.9 per column
/// (order statistic at floor(p * (n - 1))); series_stats averages the nine
/// per-row series features.
inline Eigen::VectorXd dataset_summary(SummaryKind kind, const Dataset& data) {
  const Eigen::MatrixXd& x = data.matrix();
  switch (kind) {
    case SummaryKind::kMean: return x.colwise().mean().transpose();
    case SummaryKind::kVariance: {
      const Eigen::RowVectorXd mean = x.colwise().mean();
      return (x.rowwise() - mean).array().square().colwise().mean().transpose();
    }
    case SummaryKind::kQuantiles: {
      Eigen::VectorXd out(9 * x.cols());
      std::vector<double> col(static_cast<std::size_t>(x.rows()));
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        for (Eigen::Index i = 0; i < x.rows(); ++i) col[static_cast<std::size_t>(i)] = x(i, j);
        std::sort(col.begin(), col.end());
        for (int q = 1; q <= 9; ++q) {
          const auto pos = static_cast<std::size_t>(0.1 * q * static_cast<double>(col.size() - 1));
          out[9 * j + q - 1] = col[pos];
        }
      }
      return out;
    }
    case SummaryKind::kSeriesStats:
      return expand_features(FeatureKind::kSeriesStats, x).colwise().mean().transpose();
  }
  return {};
}

inline Eigen::VectorXd dataset_summary(const std::vector<SummaryKind>& kinds, const Dataset& data) {
  std::vector<Eigen::VectorXd> parts;
  Eigen::Index total = 0;
  for (auto k : kinds) {
    parts.push_back(dataset_summary(k, data));
    total += parts.back().size();
  }
  Eigen::VectorXd out(total);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.segment(at, p.size()) = p;
    at += p.size();
  }
  return out;
}

inline double summary_l2(const Dataset& real, const Dataset& fake, const std::vector<SummaryKind>& summaries) {
  detail::check_pair(real, fake);
  const Eigen::VectorXd a = dataset_summary(summaries, real);
  const Eigen::VectorXd b = dataset_summary(summaries, fake);
  if (a.size() != b.size()) throw DataError("summary_l2: summary lengths differ");
  return (a - b).norm();
}

// ---- semi-automatic summaries ----

/// Column means of the expanded features of a dataset.
inline Eigen::VectorXd semi_auto_features(FeatureKind kind, const Dataset& data) {
  return expand_features(kind, data.matrix()).colwise().mean().transpose();
}

struct SemiAutoSummary {
  FeatureKind features = FeatureKind::kPoly2;
  Eigen::VectorXd intercept;
  Eigen::MatrixXd coefficients;  // d x q
  std::size_t pilot_size = 0;
  bool ridge = false;

  Eigen::VectorXd predict_from_features(const Eigen::VectorXd& phi) const { return intercept + coefficients * phi; }
  Eigen::VectorXd predict(const Dataset& data) const { return predict_from_features(semi_auto_features(features, data)); }
};

inline constexpr double kSemiAutoRidge = 1e-6;

/// Least squares theta ~ c + B phi on a pilot sample (rows are pilot draws).
inline SemiAutoSummary fit_semi_auto(const Eigen::MatrixXd& thetas, const Eigen::MatrixXd& phis, FeatureKind kind) {
  if (thetas.rows() != phis.rows() || thetas.rows() < 1) {
    throw DataError("semi_auto: pilot parameter and feature rows must match and be nonempty");
  }
  SemiAutoSummary s;
  s.features = kind;
  s.pilot_size = static_cast<std::size_t>(thetas.rows());
  const Eigen::RowVectorXd theta_mean = thetas.colwise().mean();
  const Eigen::RowVectorXd phi_mean = phis.colwise().mean();
  const Eigen::MatrixXd tc = thetas.rowwise() - theta_mean;
  const Eigen::MatrixXd pc = phis.rowwise() - phi_mean;

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(pc);
  Eigen::MatrixXd bt;  // q x d
  if (qr.rank() == pc.cols()) {
    bt = qr.solve(tc);
  } else {
    s.ridge = true;
    Eigen::MatrixXd gram = pc.transpose() * pc;
    gram.diagonal().array() += kSemiAutoRidge;
    bt = gram.ldlt().solve(pc.transpose() * tc);
  }
  s.coefficients = bt.transpose();
  s.intercept = theta_mean.transpose() - s.coefficients * phi_mean.transpose();
  return s;
}

inline SemiAutoSummary fit_semi_auto(const Eigen::MatrixXd& thetas, const std::vector<Dataset>& pilot_data,
                                     FeatureKind kind) {
  if (pilot_data.empty()) throw DataError("semi_auto: empty pilot");
  Eigen::MatrixXd phis(static_cast<Eigen::Index>(pilot_data.size()), 0);
  for (std::size_t j = 0; j < pilot_data.size(); ++j) {
    const Eigen::VectorXd phi = semi_auto_features(kind, pilot_data[j]);
    if (j == 0) phis.resize(phis.rows(), phi.size());
    phis.row(static_cast<Eigen::Index>(j)) = phi.transpose();
  }
  return fit_semi_auto(thetas, phis, kind);
}

inline double semi_auto_distance(const SemiAutoSummary& s, const Dataset& real, const Dataset& fake) {
  detail::check_pair(real, fake);
  return (s.predict(real) - s.predict(fake)).norm();
}

// ---- auxiliary likelihood ----

inline constexpr double kAuxRidge = 1e-8;

namespace detail {

struct GaussianFit {
  Eigen::VectorXd mean;
  Eigen::LLT<Eigen::MatrixXd> llt;
  double log_det = 0.0;
};

inline GaussianFit fit_gaussian(const Eigen::MatrixXd& x) {
  const Eigen::Index d = x.cols();
  GaussianFit g;
  g.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - g.mean.transpose();
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(x.rows());
  if (x.rows() < d + 2) cov.diagonal().array() += kAuxRidge;
  g.llt.compute(cov);
  if (g.llt.info() != Eigen::Success) {
    cov.diagonal().array() += kAuxRidge;
    g.llt.compute(cov);
    if (g.llt.info() != Eigen::Success) throw ConfigError("aux_likelihood: covariance singular after ridge");
  }
  const Eigen::VectorXd diag = g.llt.matrixL().toDenseMatrix().diagonal();
  if ((diag.array() <= 0.0).any()) throw ConfigError("aux_likelihood: covariance singular after ridge");
  g.log_det = 2.0 * diag.array().log().sum();
  return g;
}

inline double mean_log_density(const GaussianFit& g, const Eigen::MatrixXd& x) {
  const auto d = static_cast<double>(x.cols());
  const Eigen::MatrixXd centered = (x.rowwise() - g.mean.transpose()).transpose();
  const Eigen::MatrixXd z = g.llt.matrixL().solve(centered);
  const double quad = z.colwise().squaredNorm().mean();
  return -0.5 * (d * std::log(2.0 * std::numbers::pi) + g.log_det + quad);
}

}  // namespace detail

/// (1/m) log p(fake | phi(fake)) - (1/m) log p(fake | phi(real)) under a
/// Gaussian with plug-in mean and (1/m) covariance.
inline double aux_likelihood(const Dataset& real, const Dataset& fake) {
  detail::check_pair(real, fake);
  const auto own = detail::fit_gaussian(fake.matrix());
  const auto other = detail::fit_gaussian(real.matrix());
  return detail::mean_log_density(own, fake.matrix()) - detail::mean_log_density(other, fake.matrix());
}

// ---- dispatch ----

enum class DiscrepancyKind { kKlc, kKlcReverse, kCa, kKnn, kW2, kSummaryL2, kSemiAuto, kAuxLik };

inline std::string to_string(DiscrepancyKind kind) {
  switch (kind) {
    case DiscrepancyKind::kKlc: return "klc";
    case DiscrepancyKind::kKlcReverse: return "klc_reverse";
    case DiscrepancyKind::kCa: return "ca";
    case DiscrepancyKind::kKnn: return "knn";
    case DiscrepancyKind::kW2: return "w2";
    case DiscrepancyKind::kSummaryL2: return "summary_l2";
    case DiscrepancyKind::kSemiAuto: return "semi_auto";
    case DiscrepancyKind::kAuxLik: return "aux_lik";
  }
  return "klc";
}

inline DiscrepancyKind parse_discrepancy_kind(const std::string& name) {
  for (auto k : {DiscrepancyKind::kKlc, DiscrepancyKind::kKlcReverse, DiscrepancyKind::kCa, DiscrepancyKind::kKnn,
                 DiscrepancyKind::kW2, DiscrepancyKind::kSummaryL2, DiscrepancyKind::kSemiAuto,
                 DiscrepancyKind::kAuxLik}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown discrepancy '" + name +
                    "' (expected klc, klc_reverse, ca, knn, w2, summary_l2, semi_auto, aux_lik)");
}

inline bool uses_discriminator(DiscrepancyKind k) {
  return k == DiscrepancyKind::kKlc || k == DiscrepancyKind::kKlcReverse || k == DiscrepancyKind::kCa;
}

struct DiscrepancySpec {
  DiscrepancyKind kind = DiscrepancyKind::kKlc;
  DiscriminatorSpec discriminator;
  std::vector<SummaryKind> summaries{SummaryKind::kMean, SummaryKind::kVariance};
  FeatureKind semi_auto_features = FeatureKind::kPoly2;
  /// 0 selects 10% of the proposal budget.
  std::size_t pilot_size = 0;

  void validate() const {
    if (uses_discriminator(kind)) discriminator.validate();
    if (kind == DiscrepancyKind::kSummaryL2 && summaries.empty()) {
      throw ConfigError("discrepancy: summary_l2 needs at least one summary");
    }
  }
};

struct MetricValue {
  double value = 0.0;
  std::uint32_t flags = 0;
};

/// Callable discrepancy (real, fake, training seed) -> value.
class Discrepancy {
 public:
  explicit Discrepancy(DiscrepancySpec spec, std::optional<SemiAutoSummary> semi_auto = std::nullopt)
      : spec_(std::move(spec)), semi_auto_(std::move(semi_auto)) {
    spec_.validate();
    if (spec_.kind == DiscrepancyKind::kSemiAuto && !semi_auto_) {
      throw ConfigError("discrepancy: semi_auto requires a fitted pilot summary");
    }
  }

  const DiscrepancySpec& spec() const { return spec_; }
  const std::optional<SemiAutoSummary>& semi_auto() const { return semi_auto_; }

  MetricValue operator()(const Dataset& real, const Dataset& fake, SeedSpec seed) const {
    MetricValue out;
    switch (spec_.kind) {
      case DiscrepancyKind::kKlc:
      case DiscrepancyKind::kKlcReverse:
      case DiscrepancyKind::kCa: {
        detail::check_pair(real, fake);
        const auto d = train_discriminator(spec_.discriminator, real, fake, seed);
        if (!d.converged()) out.flags |= kFlagNotConverged;
        if (spec_.kind == DiscrepancyKind::kKlc) {
          out.value = klc_from_discriminator(d, real);
        } else if (spec_.kind == DiscrepancyKind::kKlcReverse) {
          out.value = klc_reverse_from_discriminator(d, fake);
        } else {
          out.value = soft_accuracy(d, real, fake);
        }
        break;
      }
      case DiscrepancyKind::kKnn: out.value = estimate_knn_kl(real, fake); break;
      case DiscrepancyKind::kW2: out.value = estimate_w2(real, fake); break;
      case DiscrepancyKind::kSummaryL2: out.value = summary_l2(real, fake, spec_.summaries); break;
      case DiscrepancyKind::kSemiAuto: out.value = semi_auto_distance(*semi_auto_, real, fake); break;
      case DiscrepancyKind::kAuxLik: out.value = aux_likelihood(real, fake); break;
    }
    return out;
  }

 private:
  DiscrepancySpec spec_;
  std::optional<SemiAutoSummary> semi_auto_;
};

}  // namespace klabc

#endif  // KLABC_DISCREPANCY_HPP
