#ifndef KLABC_FEATURES_HPP
#define KLABC_FEATURES_HPP

#include <klabc/core.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace klabc {

enum class FeatureKind {
  kRaw,
  /// Linear block, squares block, then pairwise products in lexicographic order.
  kPoly2,
  /// (x, x^2, x^3) per coordinate.
  kPowers3,
  /// Nine statistics of a (predator, prey) series pair stored as one row of
  /// 2T values: per component mean, log-variance, lag-1 and lag-2
  /// autocorrelation, then the cross-correlation.
  kSeriesStats,
};

/// Pooled centre/scale used by standardization: mean and standard deviation,
/// or median and IQR/1.349 (insensitive to a few extreme rows).
enum class Scaling { kMoments, kRobust };

struct FeatureMap {
  FeatureKind kind = FeatureKind::kRaw;
  bool standardize = true;
  Scaling scaling = Scaling::kMoments;
};

inline std::string to_string(Scaling s) { return s == Scaling::kRobust ? "robust" : "moments"; }

inline Scaling parse_scaling(const std::string& name) {
  if (name == "moments") return Scaling::kMoments;
  if (name == "robust") return Scaling::kRobust;
  throw ConfigError("unknown scaling '" + name + "' (expected moments, robust)");
}

inline std::string to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kRaw: return "raw";
    case FeatureKind::kPoly2: return "poly2";
    case FeatureKind::kPowers3: return "powers3";
    case FeatureKind::kSeriesStats: return "series_stats";
  }
  return "raw";
}

inline FeatureKind parse_feature_kind(const std::string& name) {
  if (name == "raw") return FeatureKind::kRaw;
  if (name == "poly2") return FeatureKind::kPoly2;
  if (name == "powers3") return FeatureKind::kPowers3;
  if (name == "series_stats") return FeatureKind::kSeriesStats;
  throw ConfigError("unknown feature map '" + name + "' (expected raw, poly2, powers3, series_stats)");
}

inline Eigen::Index feature_count(FeatureKind kind, Eigen::Index p) {
  switch (kind) {
    case FeatureKind::kRaw: return p;
    case FeatureKind::kPoly2: return p + p + p * (p - 1) / 2;
    case FeatureKind::kPowers3: return 3 * p;
    case FeatureKind::kSeriesStats: return 9;
  }
  return p;
}

namespace detail {

/// Biased lag-k autocorrelation; 0 for a constant series.
inline double autocorrelation(const Eigen::Ref<const Eigen::RowVectorXd>& x, Eigen::Index lag) {
  const double mean = x.mean();
  double num = 0.0;
  double den = 0.0;
  for (Eigen::Index t = 0; t < x.size(); ++t) {
    const double dev = x[t] - mean;
    den += dev * dev;
    if (t + lag < x.size()) num += dev * (x[t + lag] - mean);
  }
  return den > 0.0 ? num / den : 0.0;
}

inline double cross_correlation(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                                const Eigen::Ref<const Eigen::RowVectorXd>& b) {
  const double ma = a.mean();
  const double mb = b.mean();
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (Eigen::Index t = 0; t < a.size(); ++t) {
    sab += (a[t] - ma) * (b[t] - mb);
    saa += (a[t] - ma) * (a[t] - ma);
    sbb += (b[t] - mb) * (b[t] - mb);
  }
  return (saa > 0.0 && sbb > 0.0) ? sab / std::sqrt(saa * sbb) : 0.0;
}

inline constexpr double kVarianceFloor = 1e-8;

}  // namespace detail

/// The nine per-series statistics for one row of 2T values.
inline Eigen::RowVectorXd series_statistics(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  if (row.size() < 4 || row.size() % 2 != 0) {
    throw std::invalid_argument("series_stats: row must hold two equal-length series");
  }
  const Eigen::Index t = row.size() / 2;
  Eigen::RowVectorXd out(9);
  for (int c = 0; c < 2; ++c) {
    const Eigen::RowVectorXd s = row.segment(c * t, t);
    const double mean = s.mean();
    const double var = (s.array() - mean).square().mean();
    out[4 * c] = mean;
    out[4 * c + 1] = std::log(var + detail::kVarianceFloor);
    out[4 * c + 2] = detail::autocorrelation(s, 1);
    out[4 * c + 3] = detail::autocorrelation(s, 2);
  }
  out[8] = detail::cross_correlation(row.segment(0, t), row.segment(t, t));
  return out;
}

/// Row-wise expansion without standardization.
inline Eigen::MatrixXd expand_features(FeatureKind kind, const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  switch (kind) {
    case FeatureKind::kRaw: return x;
    case FeatureKind::kPoly2: {
      Eigen::MatrixXd out(n, feature_count(kind, p));
      out.leftCols(p) = x;
      out.middleCols(p, p) = x.array().square().matrix();
      Eigen::Index col = 2 * p;
      for (Eigen::Index a = 0; a < p; ++a)
        for (Eigen::Index b = a + 1; b < p; ++b) out.col(col++) = x.col(a).cwiseProduct(x.col(b));
      return out;
    }
    case FeatureKind::kPowers3: {
      Eigen::MatrixXd out(n, 3 * p);
      for (Eigen::Index j = 0; j < p; ++j) {
        out.col(3 * j) = x.col(j);
        out.col(3 * j + 1) = x.col(j).array().square().matrix();
        out.col(3 * j + 2) = x.col(j).array().cube().matrix();
      }
      return out;
    }
    case FeatureKind::kSeriesStats: {
      Eigen::MatrixXd out(n, 9);
      for (Eigen::Index i = 0; i < n; ++i) out.row(i) = series_statistics(x.row(i));
      return out;
    }
  }
  return x;
}

namespace detail {

/// Linearly interpolated quantile of sorted values.
inline double sorted_quantile(const std::vector<double>& v, double p) {
  const double h = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace detail

/// Feature map with standardization statistics frozen from a training pool.
class FittedFeatureMap {
 public:
  FittedFeatureMap() = default;

  /// Statistics come from the pooled (real + fake) expanded features.
  FittedFeatureMap(FeatureMap map, const Eigen::MatrixXd& expanded_pool) : map_(map) {
    const Eigen::Index q = expanded_pool.cols();
    mean_ = Eigen::VectorXd::Zero(q);
    scale_ = Eigen::VectorXd::Ones(q);
    if (!map.standardize || expanded_pool.rows() == 0) return;
    for (Eigen::Index j = 0; j < q; ++j) {
      const auto col = expanded_pool.col(j);
      const double mean = col.mean();
      const double var = (col.array() - mean).square().mean();
      const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
      mean_[j] = mean;
      scale_[j] = sd;
      if (map.scaling == Scaling::kRobust) {
        std::vector<double> v(col.data(), col.data() + col.size());
        std::sort(v.begin(), v.end());
        const double q1 = detail::sorted_quantile(v, 0.25);
        const double q3 = detail::sorted_quantile(v, 0.75);
        mean_[j] = detail::sorted_quantile(v, 0.5);
        scale_[j] = q3 > q1 ? (q3 - q1) / 1.349 : sd;
      }
    }
  }

  const FeatureMap& map() const { return map_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& scale() const { return scale_; }

  Eigen::MatrixXd standardize(Eigen::MatrixXd expanded) const {
    if (!map_.standardize) return expanded;
    expanded.rowwise() -= mean_.transpose();
    expanded.array().rowwise() /= scale_.transpose().array();
    return expanded;
  }

  Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const {
    return standardize(expand_features(map_.kind, x));
  }

 private:
  FeatureMap map_;
  Eigen::VectorXd mean_;
  Eigen::VectorXd scale_;
};

/// Deterministic row-wise expansion; standardizes with `fitted` statistics when given.
inline Dataset apply_feature_map(const FeatureMap& fm, const Dataset& data,
                                 const FittedFeatureMap* fitted = nullptr) {
  Eigen::MatrixXd expanded = expand_features(fm.kind, data.matrix());
  if (fm.standardize && fitted != nullptr) expanded = fitted->standardize(std::move(expanded));
  return Dataset(std::move(expanded));
}

}  // namespace klabc

#endif  // KLABC_FEATURES_HPP
