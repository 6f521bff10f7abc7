#ifndef KLABC_ENGINE_HPP
#define KLABC_ENGINE_HPP

#include <klabc/core.hpp>
#include <klabc/discrepancy.hpp>
#include <klabc/parallel.hpp>
#include <klabc/simulators.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

namespace klabc {

enum class KernelKind { kAcceptReject, kExponential };
enum class Aggregation { kMeanKhat, kMeanExp };

inline std::string to_string(KernelKind k) { return k == KernelKind::kAcceptReject ? "accept_reject" : "exponential"; }
inline std::string to_string(Aggregation a) { return a == Aggregation::kMeanKhat ? "mean_khat" : "mean_exp"; }

inline KernelKind parse_kernel_kind(const std::string& s) {
  if (s == "accept_reject") return KernelKind::kAcceptReject;
  if (s == "exponential") return KernelKind::kExponential;
  throw ConfigError("unknown kernel '" + s + "' (expected accept_reject or exponential)");
}

inline Aggregation parse_aggregation(const std::string& s) {
  if (s == "mean_khat") return Aggregation::kMeanKhat;
  if (s == "mean_exp") return Aggregation::kMeanExp;
  throw ConfigError("unknown aggregation '" + s + "' (expected mean_khat or mean_exp)");
}

struct KernelSpec {
  KernelKind kind = KernelKind::kExponential;
  double accept_fraction = 0.01;
  /// Exponential scale; zero selects the real sample size n.
  double scale = 0.0;
  Aggregation aggregation = Aggregation::kMeanKhat;

  void validate() const {
    if (!(accept_fraction > 0.0 && accept_fraction <= 1.0)) {
      throw ConfigError("kernel.accept_fraction must lie in (0, 1]");
    }
    if (!(scale >= 0.0) || !std::isfinite(scale)) throw ConfigError("kernel.scale must be > 0");
  }
};

struct AbcConfig {
  std::size_t n_proposals = 1000;
  double m_ratio = 3.0;
  std::size_t nlatent = 10;
  KernelSpec kernel;
  std::uint64_t master_seed = 0;
  std::size_t threads = 0;

  void validate() const {
    if (n_proposals < 1) throw ConfigError("n_proposals must be >= 1");
    if (!(m_ratio > 0.0) || !std::isfinite(m_ratio)) throw ConfigError("m_ratio must be > 0");
    if (nlatent < 1) throw ConfigError("nlatent must be >= 1");
    kernel.validate();
  }

  std::size_t fake_rows(std::size_t n) const {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(m_ratio * static_cast<double>(n))));
  }
};

struct ReferenceRow {
  std::size_t j = 0;
  ParamVector theta;
  std::vector<double> khat;
  double khat_mean = 0.0;
  double weight = 0.0;
  bool accepted = false;
  std::uint32_t flags = 0;
};

struct ReferenceTable {
  std::vector<ReferenceRow> rows;
  std::string metric = "klc";
  std::string kernel = "none";

  std::size_t size() const { return rows.size(); }
  Eigen::Index dim() const { return rows.empty() ? 0 : rows.front().theta.size(); }
  std::size_t nlatent() const { return rows.empty() ? 0 : rows.front().khat.size(); }
};

/// Algorithm steps 1-2: proposals theta_j from stream (prior, j); fake data
/// for bundle l from stream (fake, l) shared by every proposal; training seed
/// (train, j * nlatent + l).
///
/// prior: ParamVector(SeedSpec)
/// simulator: SimOutput(const ParamVector&, std::size_t rows, SeedSpec)
/// metric: MetricValue(const Dataset& real, const Dataset& fake, SeedSpec)
template <class Prior, class Simulator, class Metric>
ReferenceTable build_reference_table(const AbcConfig& cfg, Prior&& prior, Simulator&& simulator, Metric&& metric,
                                     const Dataset& real, const std::string& metric_name = "klc") {
  cfg.validate();
  const std::size_t m = cfg.fake_rows(static_cast<std::size_t>(real.rows()));
  ReferenceTable table;
  table.metric = metric_name;
  table.rows.resize(cfg.n_proposals);

  parallel_for(cfg.n_proposals, cfg.threads, [&](std::size_t j) {
    ReferenceRow& row = table.rows[j];
    row.j = j;
    row.theta = prior(derive_stream(cfg.master_seed, Purpose::kPrior, j));
    row.khat.assign(cfg.nlatent, 0.0);
    for (std::size_t l = 0; l < cfg.nlatent; ++l) {
      try {
        const SimOutput sim = simulator(row.theta, m, derive_stream(cfg.master_seed, Purpose::kFake, l));
        if (sim.truncated_rows > 0) row.flags |= kFlagTruncated;
        const MetricValue v = metric(real, sim.data, derive_stream(cfg.master_seed, Purpose::kTrain, j * cfg.nlatent + l));
        row.flags |= v.flags;
        row.khat[l] = std::isnan(v.value) ? std::numeric_limits<double>::infinity() : v.value;
      } catch (const std::invalid_argument&) {
        row.flags |= kFlagFailed;
        row.khat[l] = std::numeric_limits<double>::infinity();
      } catch (const DataError&) {
        row.flags |= kFlagFailed;
        row.khat[l] = std::numeric_limits<double>::infinity();
      }
    }
    double sum = 0.0;
    for (double k : row.khat) sum += k;
    row.khat_mean = sum / static_cast<double>(cfg.nlatent);
  });
  return table;
}

/// Number accepted for fraction q of N proposals, ceil(qN) with q*N computed
/// in floating point and snapped to the nearest integer when within 1e-9.
inline std::size_t accept_count(double q, std::size_t n) {
  const double target = q * static_cast<double>(n);
  if (target < 1.0 - 1e-9) {
    throw ConfigError("accept_fraction * n_proposals < 1: no proposal would be accepted");
  }
  const double nearest = std::round(target);
  const double count = std::abs(target - nearest) < 1e-9 ? nearest : std::ceil(target);
  return std::min(n, static_cast<std::size_t>(count));
}

/// Accepts the ceil(qN) smallest khat_mean values (ties by lower index).
inline ReferenceTable accept_reject(ReferenceTable table, double q) {
  if (!(q > 0.0 && q <= 1.0)) throw ConfigError("accept_fraction must lie in (0, 1]");
  const std::size_t n = table.size();
  if (n == 0) return table;
  const std::size_t keep = accept_count(q, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return table.rows[a].khat_mean < table.rows[b].khat_mean;
  });
  for (auto& row : table.rows) {
    row.accepted = false;
    row.weight = 0.0;
  }
  const double w = 1.0 / static_cast<double>(keep);
  for (std::size_t r = 0; r < keep; ++r) {
    table.rows[order[r]].accepted = true;
    table.rows[order[r]].weight = w;
  }
  table.kernel = to_string(KernelKind::kAcceptReject);
  return table;
}

/// Value fed to exp(-scale * value). Classification accuracy is mapped to
/// max(0, 2 (CA - 0.5)); every other metric is used as is.
inline double kernel_discrepancy(const std::string& metric, double khat) {
  if (metric == "ca") return std::max(0.0, 2.0 * (khat - 0.5));
  return khat;
}

/// Weights proportional to exp(-scale * khat_mean) (mean_khat) or to
/// mean_l exp(-scale * khat_l) (mean_exp), normalized via log-sum-exp.
inline ReferenceTable exponential_weights(ReferenceTable table, double scale,
                                          Aggregation aggregation = Aggregation::kMeanKhat) {
  if (!(scale >= 0.0)) throw ConfigError("exponential scale must be >= 0");
  const std::size_t n = table.size();
  if (n == 0) return table;
  std::vector<double> logw(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto& row = table.rows[j];
    if (aggregation == Aggregation::kMeanKhat || row.khat.empty()) {
      const double k = kernel_discrepancy(table.metric, row.khat_mean);
      logw[j] = scale == 0.0 ? 0.0 : -scale * k;
    } else {
      std::vector<double> terms;
      for (double k : row.khat) terms.push_back(scale == 0.0 ? 0.0 : -scale * kernel_discrepancy(table.metric, k));
      const double top = *std::max_element(terms.begin(), terms.end());
      if (std::isinf(top)) {
        logw[j] = top;
      } else {
        double s = 0.0;
        for (double t : terms) s += std::exp(t - top);
        logw[j] = top + std::log(s / static_cast<double>(terms.size()));
      }
    }
  }
  const double top = *std::max_element(logw.begin(), logw.end());
  if (!std::isfinite(top)) throw std::runtime_error("exponential weights: every proposal has infinite discrepancy");
  double total = 0.0;
  for (auto& v : logw) {
    v = std::exp(v - top);
    total += v;
  }
  for (std::size_t j = 0; j < n; ++j) {
    table.rows[j].weight = logw[j] / total;
    table.rows[j].accepted = true;
  }
  table.kernel = to_string(KernelKind::kExponential);
  return table;
}

inline ReferenceTable apply_kernel(ReferenceTable table, const KernelSpec& kernel, std::size_t n_real) {
  if (kernel.kind == KernelKind::kAcceptReject) return accept_reject(std::move(table), kernel.accept_fraction);
  const double scale = kernel.scale > 0.0 ? kernel.scale : static_cast<double>(n_real);
  return exponential_weights(std::move(table), scale, kernel.aggregation);
}

inline double effective_sample_size(const ReferenceTable& table) {
  double s = 0.0;
  for (const auto& row : table.rows) s += row.weight * row.weight;
  return s > 0.0 ? 1.0 / s : 0.0;
}

/// Semi-automatic summary fitted on a pilot: theta_j from stream (pilot, j),
/// fake data of `rows` rows from stream (pilot_fake, j).
template <class Prior, class Simulator>
SemiAutoSummary run_semi_auto_pilot(Prior&& prior, Simulator&& simulator, std::size_t pilot_size, std::size_t rows,
                                    FeatureKind features, std::uint64_t master_seed, std::size_t threads) {
  if (pilot_size < 2) throw ConfigError("semi_auto: pilot size must be >= 2");
  std::vector<ParamVector> thetas(pilot_size);
  std::vector<Eigen::VectorXd> phis(pilot_size);
  parallel_for(pilot_size, threads, [&](std::size_t j) {
    thetas[j] = prior(derive_stream(master_seed, Purpose::kPilot, j));
    const SimOutput sim = simulator(thetas[j], rows, derive_stream(master_seed, Purpose::kPilotFake, j));
    phis[j] = semi_auto_features(features, sim.data);
  });
  Eigen::MatrixXd t(static_cast<Eigen::Index>(pilot_size), thetas.front().size());
  Eigen::MatrixXd p(static_cast<Eigen::Index>(pilot_size), phis.front().size());
  for (std::size_t j = 0; j < pilot_size; ++j) {
    t.row(static_cast<Eigen::Index>(j)) = thetas[j].transpose();
    p.row(static_cast<Eigen::Index>(j)) = phis[j].transpose();
  }
  return fit_semi_auto(t, p, features);
}

// ---------------------------------------------------------------------------
// Persistence

inline void write_reference_table(const ReferenceTable& table, std::ostream& out) {
  const auto d = table.dim();
  const std::size_t nl = table.nlatent();
  out << "j";
  for (Eigen::Index i = 0; i < d; ++i) out << ",theta_" << i + 1;
  for (std::size_t l = 0; l < nl; ++l) out << ",khat_" << l + 1;
  out << ",khat_mean,weight,accepted,flags,metric,kernel\n";
  for (const auto& row : table.rows) {
    out << row.j;
    for (Eigen::Index i = 0; i < d; ++i) out << ',' << format_double(row.theta[i]);
    for (double k : row.khat) out << ',' << format_double(k);
    out << ',' << format_double(row.khat_mean) << ',' << format_double(row.weight) << ',' << (row.accepted ? 1 : 0)
        << ',' << row.flags << ',' << table.metric << ',' << table.kernel << '\n';
  }
}

inline void write_reference_table(const ReferenceTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  write_reference_table(table, out);
}

inline ReferenceTable read_reference_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open reference table '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty reference table");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t c = 0; c < header.size(); ++c) col[header[c]] = c;
  auto need = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw DataError(path + ": reference table is missing column '" + name + "'");
    return it->second;
  };
  const std::size_t c_j = need("j");
  const std::size_t c_mean = need("khat_mean");
  const std::size_t c_weight = need("weight");
  const std::size_t c_acc = need("accepted");
  const std::size_t c_flags = need("flags");
  std::vector<std::size_t> c_theta, c_khat;
  for (std::size_t i = 1; col.count("theta_" + std::to_string(i)); ++i) c_theta.push_back(col["theta_" + std::to_string(i)]);
  for (std::size_t l = 1; col.count("khat_" + std::to_string(l)); ++l) c_khat.push_back(col["khat_" + std::to_string(l)]);
  if (c_theta.empty()) throw DataError(path + ": reference table is missing column 'theta_1'");
  const auto c_metric = col.find("metric");
  const auto c_kernel = col.find("kernel");

  ReferenceTable table;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " fields, found " + std::to_string(f.size()));
    }
    try {
      ReferenceRow row;
      row.j = static_cast<std::size_t>(std::stoull(f[c_j]));
      row.theta.resize(static_cast<Eigen::Index>(c_theta.size()));
      for (std::size_t i = 0; i < c_theta.size(); ++i) row.theta[static_cast<Eigen::Index>(i)] = parse_double(f[c_theta[i]]);
      for (auto c : c_khat) row.khat.push_back(parse_double(f[c]));
      row.khat_mean = parse_double(f[c_mean]);
      row.weight = parse_double(f[c_weight]);
      row.accepted = f[c_acc] == "1";
      row.flags = static_cast<std::uint32_t>(std::stoul(f[c_flags]));
      if (c_metric != col.end()) table.metric = f[c_metric->second];
      if (c_kernel != col.end()) table.kernel = f[c_kernel->second];
      table.rows.push_back(std::move(row));
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const std::logic_error&) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed integer field");
    }
  }
  return table;
}

}  // namespace klabc

#endif  // KLABC_ENGINE_HPP
