#ifndef KLABC_EVALUATION_HPP
#define KLABC_EVALUATION_HPP

#include <klabc/core.hpp>
#include <klabc/engine.hpp>

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

namespace klabc {

namespace detail {

/// (value, weight) pairs of one coordinate sorted by value then weight, so
/// reductions do not depend on table row order.
inline std::vector<std::pair<double, double>> sorted_coordinate(const ReferenceTable& table, Eigen::Index coord) {
  std::vector<std::pair<double, double>> v;
  v.reserve(table.size());
  for (const auto& row : table.rows) v.emplace_back(row.theta[coord], row.weight);
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace detail

inline double weighted_mean(const ReferenceTable& table, Eigen::Index coord) {
  double s = 0.0;
  for (const auto& [value, weight] : detail::sorted_coordinate(table, coord)) s += weight * value;
  return s;
}

/// Smallest value whose cumulative weight reaches p (left-continuous inverse
/// CDF, no interpolation). Comparisons allow 1e-12 of rounding slack.
inline double weighted_quantile(const ReferenceTable& table, Eigen::Index coord, double p) {
  const auto v = detail::sorted_coordinate(table, coord);
  if (v.empty()) throw DataError("weighted_quantile: empty table");
  double cum = 0.0;
  for (const auto& [value, weight] : v) {
    cum += weight;
    if (weight > 0.0 && cum >= p - 1e-12) return value;
  }
  for (auto it = v.rbegin(); it != v.rend(); ++it) {
    if (it->second > 0.0) return it->first;
  }
  return v.back().first;
}

struct CoordinateSummary {
  std::string name;
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double ci_width = 0.0;
  std::optional<double> sq_error;
  std::optional<bool> coverage;
};

struct PosteriorSummary {
  std::string metric;
  std::string kernel;
  std::vector<CoordinateSummary> coords;
  double ess = 0.0;
};

inline std::vector<std::string> default_coordinate_names(Eigen::Index d) {
  std::vector<std::string> names;
  for (Eigen::Index i = 0; i < d; ++i) names.push_back("theta_" + std::to_string(i + 1));
  return names;
}

inline PosteriorSummary summarize(const ReferenceTable& table, const std::optional<ParamVector>& truth = std::nullopt,
                                  std::vector<std::string> names = {}) {
  const auto d = table.dim();
  if (names.size() != static_cast<std::size_t>(d)) names = default_coordinate_names(d);
  if (truth && truth->size() != d) throw DataError("summarize: truth length differs from parameter dimension");
  PosteriorSummary s;
  s.metric = table.metric;
  s.kernel = table.kernel;
  s.ess = effective_sample_size(table);
  for (Eigen::Index i = 0; i < d; ++i) {
    CoordinateSummary c;
    c.name = names[static_cast<std::size_t>(i)];
    c.mean = weighted_mean(table, i);
    c.ci_low = weighted_quantile(table, i, 0.025);
    c.ci_high = weighted_quantile(table, i, 0.975);
    c.ci_width = c.ci_high - c.ci_low;
    if (truth) {
      const double t = (*truth)[i];
      c.sq_error = (c.mean - t) * (c.mean - t);
      c.coverage = c.ci_low <= t && t <= c.ci_high;
    }
    s.coords.push_back(std::move(c));
  }
  return s;
}

inline void write_summary_header(std::ostream& out) {
  out << "metric,kernel,coordinate,mean,sq_error,ci_low,ci_high,ci_width,coverage\n";
}

inline void write_summary_rows(const PosteriorSummary& s, std::ostream& out) {
  for (const auto& c : s.coords) {
    out << s.metric << ',' << s.kernel << ',' << c.name << ',' << format_double(c.mean) << ','
        << (c.sq_error ? format_double(*c.sq_error) : "") << ',' << format_double(c.ci_low) << ','
        << format_double(c.ci_high) << ',' << format_double(c.ci_width) << ','
        << (c.coverage ? (*c.coverage ? "1" : "0") : "") << '\n';
  }
}

inline void write_summary_csv(const PosteriorSummary& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  write_summary_header(out);
  write_summary_rows(s, out);
}

// ---------------------------------------------------------------------------
// Repetitions

struct RepeatCoordinate {
  std::string name;
  double mean_sq_error = 0.0;
  double mean_ci_width = 0.0;
  double coverage_rate = 0.0;
  std::size_t reps = 0;
};

struct RepeatSummary {
  std::string metric;
  std::string kernel;
  std::vector<RepeatCoordinate> coords;
  std::size_t failures = 0;
};

/// Averages per-replicate summaries (all with known truth) coordinate-wise.
inline RepeatSummary aggregate_summaries(const std::vector<PosteriorSummary>& reps, std::size_t failures = 0) {
  RepeatSummary out;
  out.failures = failures;
  if (reps.empty()) return out;
  out.metric = reps.front().metric;
  out.kernel = reps.front().kernel;
  const std::size_t d = reps.front().coords.size();
  for (std::size_t i = 0; i < d; ++i) {
    RepeatCoordinate c;
    c.name = reps.front().coords[i].name;
    double se = 0.0, width = 0.0, cover = 0.0;
    for (const auto& r : reps) {
      const auto& rc = r.coords.at(i);
      se += rc.sq_error.value_or(std::numeric_limits<double>::quiet_NaN());
      width += rc.ci_width;
      cover += rc.coverage.value_or(false) ? 1.0 : 0.0;
    }
    const auto k = static_cast<double>(reps.size());
    c.mean_sq_error = se / k;
    c.mean_ci_width = width / k;
    c.coverage_rate = cover / k;
    c.reps = reps.size();
    out.coords.push_back(std::move(c));
  }
  return out;
}

inline void write_repeat_csv(const RepeatSummary& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "metric,kernel,coordinate,mean_sq_error,mean_ci_width,coverage_rate,reps,failures\n";
  for (const auto& c : s.coords) {
    out << s.metric << ',' << s.kernel << ',' << c.name << ',' << format_double(c.mean_sq_error) << ','
        << format_double(c.mean_ci_width) << ',' << format_double(c.coverage_rate) << ',' << c.reps << ','
        << s.failures << '\n';
  }
}

// ---------------------------------------------------------------------------
// Discrepancy surfaces

struct GridAxis {
  Eigen::Index coord = 0;
  std::vector<double> values;
};

inline std::vector<double> linspace(double start, double stop, std::size_t count) {
  std::vector<double> v;
  if (count == 1) return {start};
  for (std::size_t k = 0; k + 1 < count; ++k) {
    v.push_back(start + (stop - start) * static_cast<double>(k) / static_cast<double>(count - 1));
  }
  if (count > 1) v.push_back(stop);
  return v;
}

struct GridResult {
  std::vector<GridAxis> axes;
  /// Nodes in row-major order over the axes (last axis fastest).
  std::vector<ParamVector> nodes;
  std::vector<double> khat;
  std::vector<double> khat_rescaled;
  std::vector<std::uint32_t> flags;

  std::size_t argmin() const {
    return static_cast<std::size_t>(std::min_element(khat.begin(), khat.end()) - khat.begin());
  }
};

struct GridOptions {
  std::size_t fake_rows = 0;
  std::size_t nlatent = 1;
  std::uint64_t master_seed = 0;
  std::size_t threads = 0;
};

/// khat at every node of the Cartesian product of the axes, other coordinates
/// fixed. Fake data use the shared streams (fake, l); node k trains with
/// (train, k * nlatent + l).
template <class Simulator, class Metric>
GridResult kl_grid(const Dataset& real, Simulator&& simulator, const std::vector<GridAxis>& axes,
                   const ParamVector& fixed, Metric&& metric, const GridOptions& options) {
  if (axes.empty()) throw ConfigError("kl_grid: at least one axis required");
  if (options.nlatent < 1) throw ConfigError("kl_grid: nlatent must be >= 1");
  std::size_t total = 1;
  for (const auto& a : axes) {
    if (a.values.empty()) throw ConfigError("kl_grid: empty axis");
    if (a.coord < 0 || a.coord >= fixed.size()) throw ConfigError("kl_grid: axis coordinate out of range");
    total *= a.values.size();
  }
  GridResult g;
  g.axes = axes;
  g.nodes.resize(total);
  g.khat.assign(total, 0.0);
  g.flags.assign(total, 0);
  for (std::size_t k = 0; k < total; ++k) {
    ParamVector theta = fixed;
    std::size_t rest = k;
    for (std::size_t a = axes.size(); a-- > 0;) {
      theta[axes[a].coord] = axes[a].values[rest % axes[a].values.size()];
      rest /= axes[a].values.size();
    }
    g.nodes[k] = std::move(theta);
  }
  const std::size_t m = options.fake_rows > 0 ? options.fake_rows : static_cast<std::size_t>(real.rows());
  parallel_for(total, options.threads, [&](std::size_t k) {
    double sum = 0.0;
    for (std::size_t l = 0; l < options.nlatent; ++l) {
      const SimOutput sim = simulator(g.nodes[k], m, derive_stream(options.master_seed, Purpose::kFake, l));
      if (sim.truncated_rows > 0) g.flags[k] |= kFlagTruncated;
      const MetricValue v =
          metric(real, sim.data, derive_stream(options.master_seed, Purpose::kTrain, k * options.nlatent + l));
      g.flags[k] |= v.flags;
      sum += v.value;
    }
    g.khat[k] = sum / static_cast<double>(options.nlatent);
  });
  const double low = *std::min_element(g.khat.begin(), g.khat.end());
  g.khat_rescaled.resize(total);
  for (std::size_t k = 0; k < total; ++k) g.khat_rescaled[k] = g.khat[k] - low;
  return g;
}

inline void write_grid_csv(const GridResult& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  for (const auto& a : g.axes) out << "theta_" << a.coord + 1 << ',';
  out << "khat,khat_rescaled,flags\n";
  for (std::size_t k = 0; k < g.nodes.size(); ++k) {
    for (const auto& a : g.axes) out << format_double(g.nodes[k][a.coord]) << ',';
    out << format_double(g.khat[k]) << ',' << format_double(g.khat_rescaled[k]) << ',' << g.flags[k] << '\n';
  }
}

}  // namespace klabc

#endif  // KLABC_EVALUATION_HPP
