#ifndef KLABC_SIMULATORS_HPP
#define KLABC_SIMULATORS_HPP

#include <klabc/core.hpp>
#include <klabc/priors.hpp>

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>

namespace klabc {

/// Simulator output: the dataset plus the number of rows that were truncated
/// (Gillespie event cap); truncated rows are kept.
struct SimOutput {
  Dataset data;
  std::size_t truncated_rows = 0;
};

// ---------------------------------------------------------------------------
// M/G/1 queue

inline constexpr int kMg1Departures = 5;

/// x_k = u_k + max(0, sum_{j<=k} w_j - sum_{j<k} x_j) for service times u and
/// inter-arrival gaps w.
inline std::array<double, kMg1Departures> mg1_interdepartures(std::span<const double, kMg1Departures> service,
                                                             std::span<const double, kMg1Departures> gaps) {
  std::array<double, kMg1Departures> x{};
  double arrival = 0.0;
  double departed = 0.0;
  for (int k = 0; k < kMg1Departures; ++k) {
    arrival += gaps[k];
    x[k] = service[k] + std::max(0.0, arrival - departed);
    departed += x[k];
  }
  return x;
}

inline void validate_mg1(const ParamVector& theta) {
  if (theta.size() != 3) throw std::invalid_argument("mg1: theta must have 3 entries");
  if (!(theta[0] >= 0.0) || !(theta[1] >= theta[0])) {
    throw std::invalid_argument("mg1: requires 0 <= theta1 <= theta2");
  }
  if (!(theta[2] > 0.0)) throw std::invalid_argument("mg1: arrival rate theta3 must be > 0");
}

/// Rows of the first five inter-departure times; service ~ U[theta1, theta2],
/// inter-arrivals ~ Exp(theta3). Each row consumes 5 service uniforms then 5
/// arrival uniforms.
inline SimOutput simulate_mg1(const ParamVector& theta, std::size_t n_obs, SeedSpec seed) {
  validate_mg1(theta);
  RandomStream rng(seed);
  Dataset out(static_cast<Eigen::Index>(n_obs), kMg1Departures);
  std::array<double, kMg1Departures> service{};
  std::array<double, kMg1Departures> gaps{};
  for (std::size_t i = 0; i < n_obs; ++i) {
    for (auto& u : service) u = theta[0] + (theta[1] - theta[0]) * rng.uniform();
    for (auto& w : gaps) w = rng.exponential(theta[2]);
    const auto x = mg1_interdepartures(service, gaps);
    for (int k = 0; k < kMg1Departures; ++k) out(static_cast<Eigen::Index>(i), k) = x[k];
  }
  return {std::move(out), 0};
}

// ---------------------------------------------------------------------------
// Lotka-Volterra via Gillespie

struct LVConfig {
  std::int64_t x0 = 50;
  std::int64_t y0 = 100;
  double record_dt = 0.1;
  double horizon = 20.0;
  std::uint64_t max_events = 1'000'000;

  Eigen::Index series_length() const {
    return static_cast<Eigen::Index>(std::llround(horizon / record_dt)) + 1;
  }

  void validate() const {
    if (x0 < 0 || y0 < 0) throw ConfigError("lv: initial populations must be >= 0");
    if (!(record_dt > 0.0)) throw ConfigError("lv: record_dt must be > 0");
    if (!(horizon > 0.0)) throw ConfigError("lv: horizon must be > 0");
    if (max_events == 0) throw ConfigError("lv: max_events must be >= 1");
  }
};

struct LVPath {
  std::vector<double> predators;
  std::vector<double> prey;
  bool truncated = false;
};

/// One predator (X) / prey (Y) trajectory recorded on the grid k * record_dt.
/// Reactions: theta1*X*Y -> X+1, theta2*X -> X-1, theta3*Y -> Y+1, theta4*X*Y -> Y-1.
inline LVPath simulate_lv_path(const ParamVector& theta, const LVConfig& cfg, RandomStream& rng) {
  const Eigen::Index grid = cfg.series_length();
  LVPath path;
  path.predators.resize(grid);
  path.prey.resize(grid);

  std::int64_t x = cfg.x0;
  std::int64_t y = cfg.y0;
  double t = 0.0;
  Eigen::Index next = 0;
  std::uint64_t events = 0;

  auto record_until = [&](double limit) {
    while (next < grid && static_cast<double>(next) * cfg.record_dt < limit) {
      path.predators[next] = static_cast<double>(x);
      path.prey[next] = static_cast<double>(y);
      ++next;
    }
  };

  while (next < grid) {
    const double xd = static_cast<double>(x);
    const double yd = static_cast<double>(y);
    const std::array<double, 4> rates{theta[0] * xd * yd, theta[1] * xd, theta[2] * yd,
                                      theta[3] * xd * yd};
    const double total = rates[0] + rates[1] + rates[2] + rates[3];
    if (!(total > 0.0)) break;
    if (events >= cfg.max_events) {
      path.truncated = true;
      break;
    }
    const double tau = rng.exponential(total);
    const double pick = rng.uniform() * total;
    t += tau;
    record_until(t);
    if (next >= grid) break;

    int reaction = 3;
    double acc = 0.0;
    for (int r = 0; r < 4; ++r) {
      acc += rates[r];
      if (pick < acc) {
        reaction = r;
        break;
      }
    }
    switch (reaction) {
      case 0: ++x; break;
      case 1: --x; break;
      case 2: ++y; break;
      default: --y; break;
    }
    ++events;
  }
  // Frozen state (zero total rate or event cap) fills the remaining grid.
  record_until(std::numeric_limits<double>::infinity());
  return path;
}

inline void validate_lv(const ParamVector& theta) {
  if (theta.size() != 4) throw std::invalid_argument("lv: theta must have 4 entries");
  for (Eigen::Index i = 0; i < 4; ++i) {
    if (!(theta[i] >= 0.0)) throw std::invalid_argument("lv: rates must be >= 0");
  }
}

/// Each row is (X_0..X_{T-1}, Y_0..Y_{T-1}); series are independent.
inline SimOutput simulate_lv(const ParamVector& theta, const LVConfig& cfg, std::size_t n_series,
                             SeedSpec seed) {
  validate_lv(theta);
  const Eigen::Index grid = cfg.series_length();
  RandomStream rng(seed);
  SimOutput out{Dataset(static_cast<Eigen::Index>(n_series), 2 * grid), 0};
  for (std::size_t s = 0; s < n_series; ++s) {
    const LVPath path = simulate_lv_path(theta, cfg, rng);
    const auto row = static_cast<Eigen::Index>(s);
    for (Eigen::Index k = 0; k < grid; ++k) {
      out.data(row, k) = path.predators[k];
      out.data(row, grid + k) = path.prey[k];
    }
    if (path.truncated) ++out.truncated_rows;
  }
  return out;
}

// ---------------------------------------------------------------------------
// g-and-k

inline constexpr double kGkSkewConstant = 0.8;

/// A + B (1 + c tanh(g z / 2)) (1 + z^2)^k z, using (1 - e^{-gz}) / (1 + e^{-gz}) = tanh(gz/2).
inline double gk_quantile(double a, double b, double g, double k, double z) {
  return a + b * (1.0 + kGkSkewConstant * std::tanh(0.5 * g * z)) * std::pow(1.0 + z * z, k) * z;
}

inline SimOutput simulate_gk(const ParamVector& theta, std::size_t n_obs, SeedSpec seed) {
  if (theta.size() != 4) throw std::invalid_argument("gk: theta must have 4 entries (A, B, g, k)");
  if (!(theta[1] > 0.0)) throw std::invalid_argument("gk: B must be > 0");
  if (!(theta[3] > -0.5)) throw std::invalid_argument("gk: k must be > -0.5");
  RandomStream rng(seed);
  Dataset out(static_cast<Eigen::Index>(n_obs), 1);
  for (std::size_t i = 0; i < n_obs; ++i) {
    out(static_cast<Eigen::Index>(i), 0) = gk_quantile(theta[0], theta[1], theta[2], theta[3], rng.normal());
  }
  return {std::move(out), 0};
}

// ---------------------------------------------------------------------------
// Correlated Brownian motion observed through daily high / low / close

struct OHLCConfig {
  std::size_t days = 1000;
  std::size_t steps_per_day = 500;
  Eigen::Index assets = 2;

  void validate() const {
    if (days < 1) throw ConfigError("brownian: days must be >= 1");
    if (steps_per_day < 1) throw ConfigError("brownian: steps_per_day must be >= 1");
    if (assets < 1) throw ConfigError("brownian: assets must be >= 1");
  }
};

/// Euler path X_k = mu t_k + sum of root * sqrt(dt) * Z over a day, X_0 = 0.
/// Row = (H_1, L_1, S_1, ..., H_d, L_d, S_d) with extrema over the grid
/// including t = 0. Drift enters as mu * t_k so a zero-volatility day ends at
/// exactly mu.
inline SimOutput simulate_brownian_ohlc(const Eigen::VectorXd& mu, const Eigen::MatrixXd& root,
                                        const OHLCConfig& cfg, SeedSpec seed) {
  const Eigen::Index d = mu.size();
  if (root.rows() != d || root.cols() != d) {
    throw std::invalid_argument("brownian: root must be d x d");
  }
  RandomStream rng(seed);
  const double dt = 1.0 / static_cast<double>(cfg.steps_per_day);
  const Eigen::MatrixXd scaled = Eigen::MatrixXd(root.triangularView<Eigen::Lower>()) * std::sqrt(dt);
  Dataset out(static_cast<Eigen::Index>(cfg.days), 3 * d);
  Eigen::VectorXd noise(d);
  Eigen::VectorXd z(d);
  Eigen::VectorXd hi(d);
  Eigen::VectorXd lo(d);
  for (std::size_t day = 0; day < cfg.days; ++day) {
    noise.setZero();
    hi.setZero();
    lo.setZero();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
    for (std::size_t k = 1; k <= cfg.steps_per_day; ++k) {
      for (Eigen::Index j = 0; j < d; ++j) z[j] = rng.normal();
      noise.noalias() += scaled * z;
      const double t = static_cast<double>(k) / static_cast<double>(cfg.steps_per_day);
      x = mu * t + noise;
      hi = hi.cwiseMax(x);
      lo = lo.cwiseMin(x);
    }
    const auto row = static_cast<Eigen::Index>(day);
    for (Eigen::Index j = 0; j < d; ++j) {
      out(row, 3 * j) = hi[j];
      out(row, 3 * j + 1) = lo[j];
      out(row, 3 * j + 2) = x[j];
    }
  }
  return {std::move(out), 0};
}

/// Brownian model in packed (mu, Sigma entries) coordinates.
inline SimOutput simulate_brownian_packed(const ParamVector& theta, const OHLCConfig& cfg, SeedSpec seed) {
  auto [mu, sigma] = unpack_mean_covariance(theta, cfg.assets);
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("brownian: Sigma not positive definite");
  return simulate_brownian_ohlc(mu, llt.matrixL(), cfg, seed);
}

// ---------------------------------------------------------------------------
// Gaussian toy model

inline SimOutput simulate_gaussian_toy(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                                       std::size_t n_obs, SeedSpec seed) {
  const Eigen::Index d = mu.size();
  if (sigma.rows() != d || sigma.cols() != d) throw std::invalid_argument("gauss: sigma must be d x d");
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success || !sigma.isApprox(sigma.transpose())) {
    throw std::invalid_argument("gauss: sigma must be symmetric positive definite");
  }
  const Eigen::MatrixXd root = llt.matrixL();
  RandomStream rng(seed);
  Eigen::MatrixXd values(static_cast<Eigen::Index>(n_obs), d);
  Eigen::VectorXd z(d);
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) z[j] = rng.normal();
    values.row(i) = (mu + root * z).transpose();
  }
  return {Dataset(std::move(values)), 0};
}

}  // namespace klabc

#endif  // KLABC_SIMULATORS_HPP
