// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "spreadometer/csv.hpp"
#include "spreadometer/error.hpp"

namespace spreadometer {

/// Planar coordinates. No projection is applied; distances are Euclidean.
struct Point {
  double x = 0.0;
  double y = 0.0;
};

inline double squared_distance(const Point& a, const Point& b) noexcept {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

/// Axis-aligned bounding rectangle.
struct Bounds {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  static Bounds of(std::span<const Point> points) {
    Bounds b{points.front().x, points.front().y, points.front().x, points.front().y};
    for (const auto& p : points) {
      b.x_min = std::min(b.x_min, p.x);
      b.y_min = std::min(b.y_min, p.y);
      b.x_max = std::max(b.x_max, p.x);
      b.y_max = std::max(b.y_max, p.y);
    }
    return b;
  }
};

/// Unit identifiers and locations, without any design information.
class Population {
 public:
  Population() = default;

  Population(std::vector<std::int64_t> ids, std::vector<Point> points)
      : ids_(std::move(ids)), points_(std::move(points)) {
    if (ids_.size() != points_.size()) {
      throw DomainError("population: " + std::to_string(ids_.size()) + " ids but " +
                        std::to_string(points_.size()) + " points");
    }
    if (ids_.empty()) throw DomainError("population: at least one unit is required");
    index_.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      if (!std::isfinite(points_[i].x) || !std::isfinite(points_[i].y)) {
        throw DomainError("population: unit " + std::to_string(ids_[i]) + " has non-finite coordinates");
      }
      if (!index_.emplace(ids_[i], i).second) {
        throw DomainError("population: duplicate id " + std::to_string(ids_[i]));
      }
    }
  }

  /// Units numbered 0..N-1 in the given order.
  static Population from_points(std::vector<Point> points) {
    std::vector<std::int64_t> ids(points.size());
    std::iota(ids.begin(), ids.end(), std::int64_t{0});
    return Population(std::move(ids), std::move(points));
  }

  std::size_t size() const noexcept { return ids_.size(); }
  std::int64_t id(std::size_t index) const { return ids_[index]; }
  const Point& point(std::size_t index) const { return points_[index]; }
  std::span<const std::int64_t> ids() const noexcept { return ids_; }
  std::span<const Point> points() const noexcept { return points_; }
  Bounds bounds() const { return Bounds::of(points_); }

  std::size_t index_of(std::int64_t id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) throw LookupError("unknown unit id " + std::to_string(id));
    return it->second;
  }

  bool contains(std::int64_t id) const { return index_.count(id) != 0; }

  /// Keeps the units at the given positions, in that order.
  Population subset(std::span<const std::size_t> positions) const {
    std::vector<std::int64_t> ids;
    std::vector<Point> points;
    ids.reserve(positions.size());
    points.reserve(positions.size());
    for (auto i : positions) {
      ids.push_back(ids_[i]);
      points.push_back(points_[i]);
    }
    return Population(std::move(ids), std::move(points));
  }

 private:
  std::vector<std::int64_t> ids_;
  std::vector<Point> points_;
  std::unordered_map<std::int64_t, std::size_t> index_;
};

/// A population together with first-order inclusion probabilities.
/// Immutable after construction.
class PopulationFrame {
 public:
  PopulationFrame(Population population, std::vector<double> pi)
      : population_(std::move(population)), pi_(std::move(pi)) {
    if (pi_.size() != population_.size()) {
      throw DomainError("frame: " + std::to_string(pi_.size()) + " probabilities for " +
                        std::to_string(population_.size()) + " units");
    }
    for (std::size_t i = 0; i < pi_.size(); ++i) {
      if (!(pi_[i] > 0.0 && pi_[i] <= 1.0)) {
        throw DomainError("frame: inclusion probability of unit " + std::to_string(population_.id(i)) +
                          " is outside (0,1]: " + csv::format_double(pi_[i]));
      }
    }
    // Pairwise summation would change the last bit for some inputs; plain
    // left-to-right order keeps n_target reproducible.
    n_target_ = std::accumulate(pi_.begin(), pi_.end(), 0.0);
  }

  /// Equal probabilities n/N.
  static PopulationFrame equal_probability(Population population, double n) {
    const auto N = static_cast<double>(population.size());
    if (!(n > 0.0 && n <= N)) {
      throw InfeasibilityError("sample size " + csv::format_double(n) + " is not in (0, N=" +
                               std::to_string(population.size()) + "]");
    }
    std::vector<double> pi(population.size(), n / N);
    return PopulationFrame(std::move(population), std::move(pi));
  }

  std::size_t size() const noexcept { return population_.size(); }
  const Population& population() const noexcept { return population_; }
  std::int64_t id(std::size_t index) const { return population_.id(index); }
  const Point& point(std::size_t index) const { return population_.point(index); }
  std::span<const Point> points() const noexcept { return population_.points(); }
  std::size_t index_of(std::int64_t id) const { return population_.index_of(id); }
  double pi(std::size_t index) const { return pi_[index]; }
  std::span<const double> pi() const noexcept { return pi_; }
  double n_target() const noexcept { return n_target_; }

  /// True when Σπ is an integer within 1e-9 relative tolerance.
  bool has_integer_size() const noexcept {
    return std::abs(n_target_ - std::round(n_target_)) <= 1e-9 * std::max(1.0, n_target_);
  }

 private:
  Population population_;
  std::vector<double> pi_;
  double n_target_ = 0.0;
};

/// Column names used when reading a population file.
struct PopulationSchema {
  std::string id = "id";
  std::string x = "x";
  std::string y = "y";
  std::string pi = "pi";
  std::string size = "size";
  /// Accept files that carry neither a pi nor a size column.
  bool allow_coordinates_only = false;
};

struct LoadedPopulation {
  Population population;
  std::optional<std::vector<double>> pi;
  std::optional<std::vector<double>> size;
};

/// Reads id,x,y plus a pi or size column from comma-delimited text.
/// Probabilities are taken verbatim; sizes must go through pps_probabilities.
inline LoadedPopulation load_population(std::istream& in, const PopulationSchema& schema = {}) {
  const auto table = csv::read(in);
  auto require = [&](const std::string& name) {
    const auto c = table.column(name);
    if (!c) throw SchemaError("missing required column \"" + name + "\"");
    return *c;
  };
  const auto c_id = require(schema.id);
  const auto c_x = require(schema.x);
  const auto c_y = require(schema.y);
  const auto c_pi = table.column(schema.pi);
  const auto c_size = table.column(schema.size);
  if (!c_pi && !c_size && !schema.allow_coordinates_only) {
    throw SchemaError("missing column \"" + schema.pi + "\" or \"" + schema.size + "\"");
  }

  std::vector<std::int64_t> ids;
  std::vector<Point> points;
  std::vector<double> pi;
  std::vector<double> size;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto line = table.line_numbers[r];
    ids.push_back(csv::parse_int(row[c_id], line, schema.id));
    points.push_back({csv::parse_double(row[c_x], line, schema.x), csv::parse_double(row[c_y], line, schema.y)});
    if (c_pi) {
      const double p = csv::parse_double(row[*c_pi], line, schema.pi);
      if (!(p > 0.0 && p <= 1.0)) {
        throw DomainError("row " + std::to_string(line) + ": inclusion probability " + row[*c_pi] +
                          " is outside (0,1]");
      }
      pi.push_back(p);
    }
    if (c_size) {
      const double v = csv::parse_double(row[*c_size], line, schema.size);
      if (v < 0.0) {
        throw DomainError("row " + std::to_string(line) + ": negative size " + row[*c_size]);
      }
      size.push_back(v);
    }
  }
  if (ids.empty()) throw SchemaError("population file has a header but no rows");

  LoadedPopulation out{Population(std::move(ids), std::move(points)), std::nullopt, std::nullopt};
  if (c_pi) out.pi = std::move(pi);
  if (c_size) out.size = std::move(size);
  return out;
}

/// Writes id,x,y[,pi] with round-trip precision.
inline void write_population(std::ostream& out, const Population& population,
                             std::span<const double> pi = {}) {
  out << (pi.empty() ? "id,x,y\n" : "id,x,y,pi\n");
  for (std::size_t i = 0; i < population.size(); ++i) {
    out << population.id(i) << ',' << csv::format_double(population.point(i).x) << ','
        << csv::format_double(population.point(i).y);
    if (!pi.empty()) out << ',' << csv::format_double(pi[i]);
    out << '\n';
  }
}

inline void write_population(std::ostream& out, const PopulationFrame& frame) {
  write_population(out, frame.population(), frame.pi());
}

/// Inclusion probabilities proportional to size, π_i = min(1, C v_i / Σv),
/// with C fixed so that Σπ = n. Capping is repeated until no further unit
/// exceeds one. Units with v_i = 0 receive π_i = 0.
inline std::vector<double> pps_probabilities(std::span<const double> sizes, std::size_t n) {
  const std::size_t N = sizes.size();
  if (n == 0) throw DomainError("pps: sample size must be positive");
  if (n > N) {
    throw InfeasibilityError("pps: sample size " + std::to_string(n) + " exceeds population size " +
                             std::to_string(N));
  }
  std::size_t positive = 0;
  for (double v : sizes) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("pps: sizes must be finite and nonnegative");
    if (v > 0.0) ++positive;
  }
  if (positive == 0) throw DomainError("pps: all sizes are zero");
  if (n > positive) {
    throw InfeasibilityError("pps: sample size " + std::to_string(n) + " exceeds the " +
                             std::to_string(positive) + " units with positive size");
  }

  std::vector<double> pi(N, 0.0);
  std::vector<bool> capped(N, false);
  std::size_t n_capped = 0;
  while (true) {
    double open_total = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      if (!capped[i]) open_total += sizes[i];
    }
    const double remaining = static_cast<double>(n - n_capped);
    bool newly_capped = false;
    for (std::size_t i = 0; i < N; ++i) {
      if (capped[i]) continue;
      const double value = remaining * sizes[i] / open_total;
      if (value >= 1.0) {
        capped[i] = true;
        ++n_capped;
        newly_capped = true;
      }
    }
    if (!newly_capped) {
      for (std::size_t i = 0; i < N; ++i) {
        pi[i] = capped[i] ? 1.0 : remaining * sizes[i] / open_total;
      }
      return pi;
    }
    if (n_capped == n) {
      for (std::size_t i = 0; i < N; ++i) pi[i] = capped[i] ? 1.0 : 0.0;
      return pi;
    }
  }
}

struct PpsFrame {
  PopulationFrame frame;
  /// Ids of zero-size units, which cannot carry a positive probability and
  /// are left out of the frame.
  std::vector<std::int64_t> dropped_ids;
};

/// Builds a frame with PPS probabilities, dropping units whose π is zero.
inline PpsFrame make_pps_frame(const Population& population, std::span<const double> sizes, std::size_t n) {
  if (sizes.size() != population.size()) {
    throw DomainError("pps: " + std::to_string(sizes.size()) + " sizes for " +
                      std::to_string(population.size()) + " units");
  }
  const auto pi = pps_probabilities(sizes, n);
  std::vector<std::size_t> kept;
  std::vector<double> kept_pi;
  std::vector<std::int64_t> dropped;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    if (pi[i] > 0.0) {
      kept.push_back(i);
      kept_pi.push_back(pi[i]);
    } else {
      dropped.push_back(population.id(i));
    }
  }
  return PpsFrame{PopulationFrame(population.subset(kept), std::move(kept_pi)), std::move(dropped)};
}

}  // namespace spreadometer
