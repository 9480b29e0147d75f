#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "flowcount/error.hpp"
#include "flowcount/format.hpp"
#include "flowcount/problem.hpp"

namespace flowcount {

/// How a bin's statistics correct a raw prediction tau.
enum class CorrectionMode {
  replace_with_mean,  // corrected = mean(G(tau))
  subtract_bias,      // corrected = raw - (mean(G(tau)) - tau)
};

enum class WeightMode {
  variance,          // w = var(G(tau))
  inverse_variance,  // w = 1 / var(G(tau))
};

enum class Binning { round_nearest };

inline std::string to_string(CorrectionMode m) {
  return m == CorrectionMode::replace_with_mean ? "replace-mean" : "subtract-bias";
}
inline std::string to_string(WeightMode m) { return m == WeightMode::variance ? "variance" : "inverse-variance"; }

inline CorrectionMode parse_correction_mode(const std::string& s) {
  if (s == "replace-mean") return CorrectionMode::replace_with_mean;
  if (s == "subtract-bias") return CorrectionMode::subtract_bias;
  throw InputError("unknown correction mode '" + s + "'");
}
inline WeightMode parse_weight_mode(const std::string& s) {
  if (s == "variance") return WeightMode::variance;
  if (s == "inverse-variance") return WeightMode::inverse_variance;
  throw InputError("unknown weight mode '" + s + "'");
}

/// One training triple: regressor output and the true count of the group.
struct CalibrationSample {
  double predicted = 0.0;
  std::int64_t actual = 0;
};

struct BinStats {
  double mean = 0.0;
  double variance = 0.0;
  std::size_t count = 0;

  friend bool operator==(const BinStats&, const BinStats&) = default;
};

/// Per-bin statistics of true counts G(tau), plus a global fallback.
///
/// The fallback holds the mean and variance of (actual - tau) over all samples; an unseen
/// bin behaves as if its mean were tau plus that offset.
struct CalibrationTable {
  CorrectionMode correction = CorrectionMode::replace_with_mean;
  WeightMode weight_mode = WeightMode::variance;
  Binning binning = Binning::round_nearest;
  std::map<std::int64_t, BinStats> bins;
  BinStats fallback;

  friend bool operator==(const CalibrationTable&, const CalibrationTable&) = default;
};

inline std::int64_t bin_of(double predicted) { return std::llround(predicted); }

namespace detail {

inline BinStats population_stats(const std::vector<double>& xs) {
  BinStats s;
  s.count = xs.size();
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  double sq = 0.0;
  for (double x : xs) sq += (x - s.mean) * (x - s.mean);
  s.variance = sq / static_cast<double>(xs.size());
  return s;
}

}  // namespace detail

inline CalibrationTable fit_calibration(std::span<const CalibrationSample> samples,
                                        CorrectionMode correction = CorrectionMode::replace_with_mean,
                                        WeightMode weight_mode = WeightMode::variance,
                                        Binning binning = Binning::round_nearest) {
  if (samples.empty()) throw InputError("calibration needs at least one sample");
  std::map<std::int64_t, std::vector<double>> groups;
  std::vector<double> offsets;
  offsets.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.actual < 0) throw InputError("calibration sample with negative true count");
    if (!std::isfinite(s.predicted)) throw InputError("calibration sample with non-finite prediction");
    const std::int64_t tau = bin_of(s.predicted);
    groups[tau].push_back(static_cast<double>(s.actual));
    offsets.push_back(static_cast<double>(s.actual) - static_cast<double>(tau));
  }
  CalibrationTable t;
  t.correction = correction;
  t.weight_mode = weight_mode;
  t.binning = binning;
  for (const auto& [tau, xs] : groups) t.bins[tau] = detail::population_stats(xs);
  t.fallback = detail::population_stats(offsets);
  return t;
}

struct CalibratedPrediction {
  double corrected = 0.0;
  double weight = 1.0;
};

inline CalibratedPrediction apply_calibration(double raw, const CalibrationTable& table) {
  const std::int64_t tau = bin_of(raw);
  double mean = 0.0;
  double variance = 0.0;
  if (auto it = table.bins.find(tau); it != table.bins.end()) {
    mean = it->second.mean;
    variance = it->second.variance;
  } else {
    mean = static_cast<double>(tau) + table.fallback.mean;
    variance = table.fallback.variance;
  }
  CalibratedPrediction out;
  out.corrected = table.correction == CorrectionMode::replace_with_mean ? mean
                                                                         : raw - (mean - static_cast<double>(tau));
  const double v = std::max(variance, kWeightFloor);
  out.weight = table.weight_mode == WeightMode::variance ? v : 1.0 / v;
  return out;
}

/// Text form: a header naming the modes, one fallback line, one line per bin.
inline std::string to_text(const CalibrationTable& t) {
  std::ostringstream os;
  os << "# flowcount calibration v1\n";
  os << "mode " << to_string(t.correction) << "\n";
  os << "weight " << to_string(t.weight_mode) << "\n";
  os << "binning round-nearest\n";
  os << "fallback " << format_double(t.fallback.mean) << ' ' << format_double(t.fallback.variance) << ' '
     << t.fallback.count << "\n";
  for (const auto& [tau, s] : t.bins) {
    os << "bin " << tau << ' ' << format_double(s.mean) << ' ' << format_double(s.variance) << ' ' << s.count << "\n";
  }
  return os.str();
}

inline CalibrationTable calibration_from_text(const std::string& text) {
  CalibrationTable t;
  bool have_fallback = false;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto f = split_ws(line);
    if (f.empty() || f[0].front() == '#') continue;
    try {
      if (f[0] == "mode" && f.size() == 2) {
        t.correction = parse_correction_mode(std::string(f[1]));
      } else if (f[0] == "weight" && f.size() == 2) {
        t.weight_mode = parse_weight_mode(std::string(f[1]));
      } else if (f[0] == "binning" && f.size() == 2) {
        if (f[1] != "round-nearest") throw InputError("unknown binning rule");
      } else if (f[0] == "fallback" && f.size() == 4) {
        t.fallback = {parse_double(f[1]), parse_double(f[2]), static_cast<std::size_t>(parse_int(f[3]))};
        have_fallback = true;
      } else if (f[0] == "bin" && f.size() == 5) {
        BinStats s{parse_double(f[2]), parse_double(f[3]), static_cast<std::size_t>(parse_int(f[4]))};
        if (s.count < 1 || s.variance < 0.0) throw InputError("invalid bin statistics");
        t.bins[parse_int(f[1])] = s;
      } else {
        throw InputError("unrecognised line");
      }
    } catch (const InputError& e) {
      throw InputError("calibration table line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_fallback) throw InputError("calibration table has no fallback line");
  return t;
}

}  // namespace flowcount
