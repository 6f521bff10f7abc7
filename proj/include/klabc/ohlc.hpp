#ifndef KLABC_OHLC_HPP
#define KLABC_OHLC_HPP

#include <klabc/core.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

namespace klabc {

struct OhlcRecord {
  std::string date;
  double open = 0.0;
  double high = 0.0;
  double low = 0.0;
  double close = 0.0;
};

/// (ln(high/open), ln(low/open), ln(close/open)).
inline std::array<double, 3> ohlc_log_features(const OhlcRecord& r) {
  return {std::log(r.high / r.open), std::log(r.low / r.open), std::log(r.close / r.open)};
}

/// Reads `date,open,high,low,close` (header required, any column order).
/// Rows are validated: prices > 0, low <= open <= high, low <= close <= high.
inline std::vector<OhlcRecord> read_ohlc_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_csv_line(line);
  for (auto& h : header) {
    h.erase(std::remove_if(h.begin(), h.end(), [](unsigned char c) { return std::isspace(c); }), h.end());
    std::transform(h.begin(), h.end(), h.begin(), [](unsigned char c) { return std::tolower(c); });
  }
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError(path + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_date = column("date");
  const std::size_t c_open = column("open");
  const std::size_t c_high = column("high");
  const std::size_t c_low = column("low");
  const std::size_t c_close = column("close");

  std::vector<OhlcRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto f = split_csv_line(line);
    const std::string where = path + ":" + std::to_string(line_no) + ": ";
    if (f.size() != header.size()) throw DataError(where + "expected " + std::to_string(header.size()) + " fields");
    OhlcRecord r;
    try {
      r.date = f[c_date];
      r.open = parse_double(f[c_open]);
      r.high = parse_double(f[c_high]);
      r.low = parse_double(f[c_low]);
      r.close = parse_double(f[c_close]);
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
    if (!(r.open > 0.0 && r.high > 0.0 && r.low > 0.0 && r.close > 0.0) ||
        !std::isfinite(r.open + r.high + r.low + r.close)) {
      throw DataError(where + "nonpositive price");
    }
    if (r.high < r.open) throw DataError(where + "high below open");
    if (r.low > r.open) throw DataError(where + "low above open");
    if (r.close > r.high || r.close < r.low) throw DataError(where + "close outside [low, high]");
    out.push_back(std::move(r));
  }
  std::sort(out.begin(), out.end(), [](const OhlcRecord& a, const OhlcRecord& b) { return a.date < b.date; });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].date == out[i - 1].date) throw DataError(path + ": duplicate date " + out[i].date);
  }
  return out;
}

/// Days x 3d dataset (H_1, L_1, S_1, ..., H_d, L_d, S_d) in ascending date
/// order. Every asset must list exactly the same dates.
inline Dataset ingest_ohlc(const std::vector<std::vector<OhlcRecord>>& assets,
                           const std::vector<std::string>& names = {}) {
  if (assets.empty()) throw DataError("ingest-ohlc: no input files");
  const std::size_t days = assets.front().size();
  if (days == 0) throw DataError("ingest-ohlc: no rows");
  auto label = [&](std::size_t a) { return a < names.size() ? names[a] : "asset " + std::to_string(a + 1); };
  for (std::size_t a = 1; a < assets.size(); ++a) {
    const std::size_t common = std::min(days, assets[a].size());
    for (std::size_t i = 0; i < common; ++i) {
      if (assets[a][i].date != assets.front()[i].date) {
        throw DataError("ingest-ohlc: dates misaligned at row " + std::to_string(i + 1) + ": " + label(0) + " has " +
                        assets.front()[i].date + ", " + label(a) + " has " + assets[a][i].date);
      }
    }
    if (assets[a].size() != days) {
      const bool first_longer = days > assets[a].size();
      const std::string extra = first_longer ? assets.front()[common].date : assets[a][common].date;
      throw DataError("ingest-ohlc: dates misaligned at row " + std::to_string(common + 1) + ": " +
                      (first_longer ? label(0) : label(a)) + " has extra date " + extra);
    }
  }
  Eigen::MatrixXd values(static_cast<Eigen::Index>(days), static_cast<Eigen::Index>(3 * assets.size()));
  for (std::size_t a = 0; a < assets.size(); ++a) {
    for (std::size_t i = 0; i < days; ++i) {
      const auto f = ohlc_log_features(assets[a][i]);
      for (int k = 0; k < 3; ++k) values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(3 * a + k)) = f[k];
    }
  }
  return Dataset(std::move(values));
}

}  // namespace klabc

#endif  // KLABC_OHLC_HPP
