#ifndef KLABC_CORE_HPP
#define KLABC_CORE_HPP

#include <Eigen/Dense>
#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace klabc {

/// Malformed or inconsistent configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input data (CLI exit code 3).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A point in parameter space; length equals the model's parameter dimension.
using ParamVector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Seeds

/// Identifies one pseudo-random stream. The pair fully determines the draws.
struct SeedSpec {
  std::uint64_t master_seed = 0;
  std::uint64_t stream_id = 0;

  friend bool operator==(const SeedSpec&, const SeedSpec&) = default;
};

/// Purpose tags partition the stream space so that prior draws, latent
/// (fake-data) noise, discriminator training, and observed-data generation
/// never share a stream.
enum class Purpose : std::uint8_t {
  kPrior = 0,
  kFake = 1,
  kTrain = 2,
  kObserved = 3,
  kPilot = 4,
  kPilotFake = 5,
  kHoldout = 6,
  kReplicate = 7,
};

inline constexpr std::uint64_t kMaxStreamIndex = (std::uint64_t{1} << 56) - 1;

/// Counter-based derivation: the stream id packs (tag, index) injectively, so
/// a proposal's randomness never depends on execution order.
inline SeedSpec derive_stream(std::uint64_t master_seed, std::uint8_t purpose_tag,
                              std::uint64_t index) {
  if (index > kMaxStreamIndex) {
    throw std::out_of_range("stream index exceeds 56 bits");
  }
  return {master_seed, (std::uint64_t{purpose_tag} << 56) | index};
}

inline SeedSpec derive_stream(std::uint64_t master_seed, Purpose purpose,
                              std::uint64_t index) {
  return derive_stream(master_seed, static_cast<std::uint8_t>(purpose), index);
}

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed fed to the engine; also used to derive per-replicate master seeds.
constexpr std::uint64_t hash_seed(SeedSpec seed) {
  return mix64(mix64(seed.master_seed) ^ (seed.stream_id * 0xd1342543de82ef95ULL));
}

/// Standard normal quantile.
inline double normal_quantile(double p) {
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

/// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Uniform, Gaussian and exponential draws from one seed. Every Gaussian
/// consumes exactly one uniform (inverse CDF), so stream positions are
/// predictable regardless of the values drawn.
class RandomStream {
 public:
  explicit RandomStream(SeedSpec seed) : engine_(hash_seed(seed)) {}

  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() { return normal_quantile(uniform()); }

  double exponential(double rate) { return exponential_from_uniform(uniform(), rate); }

  static double exponential_from_uniform(double u, double rate) { return -std::log(u) / rate; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Dataset

/// n x p matrix of i.i.d. observation rows. Row order is identity and is
/// never changed by downstream code.
class Dataset {
 public:
  Dataset() = default;

  explicit Dataset(Eigen::MatrixXd values) : values_(std::move(values)) {
    if (!values_.allFinite()) {
      throw DataError("dataset contains non-finite entries");
    }
  }

  Dataset(Eigen::Index n, Eigen::Index p) : values_(Eigen::MatrixXd::Zero(n, p)) {}

  Eigen::Index rows() const { return values_.rows(); }
  Eigen::Index cols() const { return values_.cols(); }
  bool empty() const { return values_.rows() == 0; }

  const Eigen::MatrixXd& matrix() const { return values_; }
  Eigen::MatrixXd& mutable_matrix() { return values_; }

  double operator()(Eigen::Index i, Eigen::Index j) const { return values_(i, j); }
  double& operator()(Eigen::Index i, Eigen::Index j) { return values_(i, j); }

  auto row(Eigen::Index i) const { return values_.row(i); }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.values_.rows() == b.values_.rows() && a.values_.cols() == b.values_.cols() &&
           a.values_ == b.values_;
  }

 private:
  Eigen::MatrixXd values_;
};

// ---------------------------------------------------------------------------
// Text I/O

/// Decimal with 17 significant digits; parses back to the identical double.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_double(std::string_view text) {
  std::string s(text);
  std::size_t start = s.find_first_not_of(" \t\r");
  std::size_t end = s.find_last_not_of(" \t\r");
  if (start == std::string::npos) throw DataError("empty numeric field");
  s = s.substr(start, end - start + 1);
  if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(s, &used);
  } catch (const std::exception&) {
    throw DataError("not a number: '" + s + "'");
  }
  if (used != s.size()) throw DataError("not a number: '" + s + "'");
  return value;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

/// Headerless CSV, one observation per row.
inline Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    try {
      for (const auto& f : split_csv_line(line)) row.push_back(parse_double(f));
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(rows.front().size()) + " columns, found " +
                      std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("dataset '" + path + "' has no rows");
  Eigen::MatrixXd m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return Dataset(std::move(m));
}

inline void write_dataset_csv(const Dataset& data, std::ostream& out) {
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
      if (j) out << ',';
      out << format_double(data(i, j));
    }
    out << '\n';
  }
}

inline void write_dataset_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  write_dataset_csv(data, out);
}

}  // namespace klabc

#endif  // KLABC_CORE_HPP
