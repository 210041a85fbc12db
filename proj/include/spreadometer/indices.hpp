// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"  // nlohmann/json, vendored

#include "spreadometer/error.hpp"
#include "spreadometer/frame.hpp"
#include "spreadometer/spatial.hpp"
#include "spreadometer/weights.hpp"

namespace spreadometer {

/// Values centred on the W-row-sum weighted mean, with their local means.
struct CenteredValues {
  std::vector<double> z;
  double weighted_mean = 0.0;
  /// Z̄_i; NaN where w_i. = 0.
  std::vector<double> local_means;
  double grand_local_mean = 0.0;
};

inline CenteredValues center_values(std::span<const double> y, const WeightsMatrix& w) {
  if (y.size() != w.size()) throw DomainError("values and weights have different lengths");
  if (!(w.total() > 0.0)) throw DegenerateWeightsError("total weight is zero");
  CenteredValues out;
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += w.row_sum(i) * y[i];
  out.weighted_mean = acc / w.total();
  out.z.resize(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out.z[i] = y[i] - out.weighted_mean;

  const auto wz = DerivedOperators(w).apply_w(out.z);
  out.local_means.resize(y.size());
  double grand = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    out.local_means[i] = w.zero_row(i) ? std::numeric_limits<double>::quiet_NaN() : wz[i] / w.row_sum(i);
    grand += w.col_sum(i) * out.z[i];
  }
  out.grand_local_mean = grand / w.total();
  return out;
}

/// Classical Moran's I with the mean taken over all N units.
inline double moran_i(std::span<const double> y, const WeightsMatrix& w) {
  if (y.size() != w.size()) throw DomainError("values and weights have different lengths");
  if (!(w.total() > 0.0)) throw DegenerateWeightsError("total weight is zero");
  const auto n = static_cast<double>(y.size());
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= n;
  std::vector<double> z(y.size());
  double ss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    z[i] = y[i] - mean;
    ss += z[i] * z[i];
  }
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  if (*hi == *lo) throw DegenerateVarianceError("values are constant");
  return n * DerivedOperators(w).quadratic_w(z) / (w.total() * ss);
}

/// The three quadratic forms of the normalized index, kept apart so callers
/// can inspect them.
struct NormalizedMoranParts {
  double numerator = 0.0;  ///< zᵀWz
  double z_d_z = 0.0;      ///< zᵀDz
  double z_b_z = 0.0;      ///< zᵀBz
  /// numerator / sqrt(zᵀDz zᵀBz); rounding overshoot beyond ±1 is clipped.
  double value = 0.0;
};

inline NormalizedMoranParts moran_normalized_parts(std::span<const double> y, const WeightsMatrix& w) {
  const auto centered = center_values(y, w);
  const DerivedOperators ops(w);
  NormalizedMoranParts parts;
  parts.numerator = ops.quadratic_w(centered.z);
  parts.z_d_z = ops.quadratic_d(centered.z);
  parts.z_b_z = ops.quadratic_b(centered.z);

  // Degeneracy is judged relative to the spread of y, so that rounding
  // residue of an exactly constant input is not mistaken for variation.
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  const double range = *hi - *lo;
  const double tiny = 1e-24 * w.total() * range * range;
  if (range == 0.0) throw DegenerateVarianceError("values are constant");
  if (parts.z_d_z <= tiny) throw DegenerateVarianceError("values are constant on the weighted support");
  if (parts.z_b_z <= tiny) throw DegenerateLocalMeansError("all local means are equal");
  parts.value = std::clamp(parts.numerator / std::sqrt(parts.z_d_z * parts.z_b_z), -1.0, 1.0);
  return parts;
}

/// Weighted correlation between z_i and the local means Z̄_i, in [-1, 1].
inline double moran_normalized(std::span<const double> y, const WeightsMatrix& w) {
  return moran_normalized_parts(y, w).value;
}

/// 0/1 inclusion indicator from sample positions.
inline std::vector<double> indicator_values(std::size_t n_units, std::span<const std::size_t> sample) {
  std::vector<double> delta(n_units, 0.0);
  for (auto s : sample) delta.at(s) = 1.0;
  return delta;
}

namespace detail {

inline void require_nonconstant(std::size_t n_units, std::span<const std::size_t> sample) {
  if (sample.empty()) throw DegenerateIndicatorError("the sample is empty");
  if (sample.size() >= n_units) throw DegenerateIndicatorError("the sample is the whole population");
}

}  // namespace detail

/// Normalized Moran index of the inclusion indicator: negative for spread
/// samples, positive for clustered ones, about zero for random placement.
inline double spatial_balance_ib(const PopulationFrame& frame, std::span<const std::size_t> sample,
                                 const WeightsMatrix& w) {
  detail::require_nonconstant(frame.size(), sample);
  return moran_normalized(indicator_values(frame.size(), sample), w);
}

struct VoronoiBalance {
  double b = 0.0;
  /// Inclusion-probability mass collected by each sample unit, in sample order.
  std::vector<double> v;
};

/// B = (1/n) Σ (v_i - 1)², with v_i the π-mass of the units closest to
/// sample unit i. Sample units with π = 1 take part like any other.
inline VoronoiBalance spatial_balance_voronoi(const PopulationFrame& frame, std::span<const std::size_t> sample) {
  if (sample.empty()) throw DomainError("voronoi: the sample is empty");
  const auto assignment = voronoi_assign(frame.population(), sample);
  std::vector<double> mass(frame.size(), 0.0);
  for (std::size_t i = 0; i < frame.size(); ++i) {
    for (const auto& s : assignment.shares[i]) mass[s.sample_unit] += s.share * frame.pi(i);
  }
  VoronoiBalance out;
  out.v.reserve(sample.size());
  double acc = 0.0;
  for (auto s : sample) {
    out.v.push_back(mass[s]);
    acc += (mass[s] - 1.0) * (mass[s] - 1.0);
  }
  out.b = acc / static_cast<double>(sample.size());
  return out;
}

/// The three balance measures for one sample. An index whose denominator
/// degenerates is left empty and named in `flags`.
struct BalanceReport {
  std::optional<double> b;
  std::optional<double> i_m;
  std::optional<double> i_b;
  std::vector<double> voronoi_sums;
  std::size_t n = 0;
  std::size_t population_size = 0;
  std::vector<std::string> flags;
};

inline BalanceReport measure_balance(const PopulationFrame& frame, std::span<const std::size_t> sample,
                                     const WeightsMatrix& w) {
  BalanceReport report;
  report.n = sample.size();
  report.population_size = frame.size();
  if (sample.empty()) {
    report.flags.emplace_back("empty_sample");
    return report;
  }
  auto vor = spatial_balance_voronoi(frame, sample);
  report.b = vor.b;
  report.voronoi_sums = std::move(vor.v);

  if (sample.size() >= frame.size()) {
    report.flags.emplace_back("DegenerateIndicatorError");
    return report;
  }
  const auto delta = indicator_values(frame.size(), sample);
  try {
    report.i_m = moran_i(delta, w);
  } catch (const DegenerateError& e) {
    report.flags.push_back(std::string("i_m:") + e.kind());
  }
  try {
    report.i_b = moran_normalized(delta, w);
  } catch (const DegenerateError& e) {
    report.flags.push_back(std::string("i_b:") + e.kind());
  }
  return report;
}

/// JSON object with keys b, i_m, i_b, n, N, flags (degenerate values are null).
inline nlohmann::json to_json(const BalanceReport& report) {
  const auto value = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
  return nlohmann::json{{"b", value(report.b)},
                        {"i_m", value(report.i_m)},
                        {"i_b", value(report.i_b)},
                        {"n", report.n},
                        {"N", report.population_size},
                        {"flags", report.flags}};
}

}  // namespace spreadometer
