// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "spreadometer/csv.hpp"
#include "spreadometer/error.hpp"
#include "spreadometer/frame.hpp"
#include "spreadometer/rng.hpp"

namespace spreadometer {

/// Selected units (frame positions, ascending) and the matching 0/1
/// indicator of length N.
class SampleSelection {
 public:
  SampleSelection() = default;

  static SampleSelection from_units(std::size_t n_units, std::vector<std::size_t> units) {
    std::sort(units.begin(), units.end());
    if (std::adjacent_find(units.begin(), units.end()) != units.end()) {
      throw DomainError("sample: a unit is selected twice");
    }
    if (!units.empty() && units.back() >= n_units) throw DomainError("sample: unit position out of range");
    SampleSelection s;
    s.indicator_.assign(n_units, 0);
    for (auto u : units) s.indicator_[u] = 1;
    s.units_ = std::move(units);
    return s;
  }

  std::size_t size() const noexcept { return units_.size(); }
  bool empty() const noexcept { return units_.empty(); }
  std::span<const std::size_t> units() const noexcept { return units_; }
  std::span<const std::uint8_t> indicator() const noexcept { return indicator_; }
  bool contains(std::size_t unit) const { return indicator_.at(unit) != 0; }

  std::vector<std::int64_t> ids(const Population& population) const {
    std::vector<std::int64_t> out;
    out.reserve(units_.size());
    for (auto u : units_) out.push_back(population.id(u));
    return out;
  }

  /// False when the design could only hit the target size in expectation
  /// (non-integer Σπ).
  bool fixed_size = true;

 private:
  std::vector<std::size_t> units_;
  std::vector<std::uint8_t> indicator_;
};

/// Writes one selected id per line under an "id" header.
inline void write_sample(std::ostream& out, const SampleSelection& sample, const Population& population) {
  out << "id\n";
  for (auto id : sample.ids(population)) out << id << '\n';
}

inline SampleSelection read_sample(std::istream& in, const Population& population) {
  const auto table = csv::read(in);
  const auto c = table.column("id");
  if (!c) throw SchemaError("missing required column \"id\"");
  std::vector<std::size_t> units;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    units.push_back(population.index_of(csv::parse_int(table.rows[r][*c], table.line_numbers[r], "id")));
  }
  return SampleSelection::from_units(population.size(), std::move(units));
}

/// Simple random sampling without replacement (partial Fisher-Yates).
inline SampleSelection srs(std::size_t n_units, std::size_t n, RngStream& rng) {
  if (n > n_units) {
    throw InfeasibilityError("srs: sample size " + std::to_string(n) + " exceeds population size " +
                             std::to_string(n_units));
  }
  std::vector<std::size_t> pool(n_units);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) std::swap(pool[i], pool[i + rng.below(n_units - i)]);
  pool.resize(n);
  return SampleSelection::from_units(n_units, std::move(pool));
}

inline SampleSelection srs(const PopulationFrame& frame, std::size_t n, RngStream& rng) {
  return srs(frame.size(), n, rng);
}

enum class LpmVariant {
  /// Pair a random undecided unit with its nearest undecided neighbour.
  kNearestOfRandom,
  /// As above, but only update when the two units are mutual nearest
  /// neighbours; otherwise draw again.
  kMutualNearest,
};

namespace detail {

/// Undecided-unit pool with O(1) removal.
class UndecidedPool {
 public:
  explicit UndecidedPool(std::size_t n_units) : slot_(n_units, kAbsent) {}

  void add(std::size_t unit) {
    slot_[unit] = members_.size();
    members_.push_back(unit);
  }
  void remove(std::size_t unit) {
    const auto s = slot_[unit];
    members_[s] = members_.back();
    slot_[members_[s]] = s;
    members_.pop_back();
    slot_[unit] = kAbsent;
  }
  std::size_t size() const noexcept { return members_.size(); }
  std::size_t operator[](std::size_t k) const { return members_[k]; }
  std::span<const std::size_t> members() const noexcept { return members_; }

 private:
  static constexpr std::size_t kAbsent = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> members_;
  std::vector<std::size_t> slot_;
};

/// Nearest undecided neighbour of `unit`; equidistant candidates are chosen
/// uniformly at random.
inline std::size_t nearest_undecided(std::span<const Point> points, const UndecidedPool& pool, std::size_t unit,
                                     RngStream& rng) {
  double best = std::numeric_limits<double>::infinity();
  std::size_t chosen = unit;
  std::size_t ties = 0;
  const auto& p = points[unit];
  for (auto other : pool.members()) {
    if (other == unit) continue;
    const double d2 = squared_distance(p, points[other]);
    if (d2 < best) {
      best = d2;
      chosen = other;
      ties = 1;
    } else if (d2 == best) {
      ++ties;
      if (rng.below(ties) == 0) chosen = other;
    }
  }
  return chosen;
}

/// True when `unit` is at the minimum distance from `other` among the pool.
inline bool is_nearest_of(std::span<const Point> points, const UndecidedPool& pool, std::size_t unit,
                          std::size_t other) {
  const double target = squared_distance(points[unit], points[other]);
  for (auto cand : pool.members()) {
    if (cand == other || cand == unit) continue;
    if (squared_distance(points[cand], points[other]) < target) return false;
  }
  return true;
}

}  // namespace detail

/// Local pivotal method. Each step pairs two undecided units and moves
/// probability mass between them until one is decided at 0 or 1; the
/// pairing rule comes from `variant`. Inclusion probabilities are π.
inline SampleSelection lpm(const PopulationFrame& frame, RngStream& rng,
                           LpmVariant variant = LpmVariant::kNearestOfRandom) {
  constexpr double kSnap = 1e-12;
  const std::size_t n_units = frame.size();
  const auto points = frame.points();
  std::vector<double> p(frame.pi().begin(), frame.pi().end());
  std::vector<std::size_t> selected;
  detail::UndecidedPool pool(n_units);
  for (std::size_t i = 0; i < n_units; ++i) {
    if (p[i] >= 1.0 - kSnap) {
      selected.push_back(i);
    } else {
      pool.add(i);
    }
  }

  const auto settle = [&](std::size_t unit) {
    if (p[unit] <= kSnap) {
      pool.remove(unit);
    } else if (p[unit] >= 1.0 - kSnap) {
      pool.remove(unit);
      selected.push_back(unit);
    }
  };

  while (pool.size() > 1) {
    const auto i = pool[rng.below(pool.size())];
    const auto j = detail::nearest_undecided(points, pool, i, rng);
    if (variant == LpmVariant::kMutualNearest && !detail::is_nearest_of(points, pool, i, j)) continue;

    const double pi_i = p[i];
    const double pi_j = p[j];
    const double sum = pi_i + pi_j;
    if (sum <= 1.0) {
      if (rng.uniform() * sum < pi_j) {
        p[i] = 0.0;
        p[j] = sum;
      } else {
        p[i] = sum;
        p[j] = 0.0;
      }
    } else {
      if (rng.uniform() * (2.0 - sum) < 1.0 - pi_j) {
        p[i] = 1.0;
        p[j] = sum - 1.0;
      } else {
        p[i] = sum - 1.0;
        p[j] = 1.0;
      }
    }
    settle(i);
    settle(j);
  }

  bool fixed = frame.has_integer_size();
  if (pool.size() == 1) {
    const auto last = pool[0];
    if (p[last] >= 1.0 - 1e-9) {
      selected.push_back(last);
    } else if (p[last] > 1e-9) {
      fixed = false;
      if (rng.bernoulli(p[last])) selected.push_back(last);
    }
  }
  auto out = SampleSelection::from_units(n_units, std::move(selected));
  out.fixed_size = fixed;
  return out;
}

/// Two-stage clustered sampling. The bounding box of the population is cut
/// into grid x grid cells; k cells are drawn at random (more are drawn one at
/// a time while they hold fewer than n units) and n units are then drawn by
/// SRS from the units inside the chosen cells.
inline SampleSelection kclust(const PopulationFrame& frame, std::size_t n, std::size_t k, std::size_t grid,
                              RngStream& rng) {
  if (grid == 0) throw DomainError("kclust: grid must have at least one cell per side");
  const std::size_t n_cells = grid * grid;
  if (k == 0 || k > n_cells) {
    throw DomainError("kclust: k = " + std::to_string(k) + " is outside [1, " + std::to_string(n_cells) + "]");
  }
  if (n > frame.size()) {
    throw InfeasibilityError("kclust: sample size " + std::to_string(n) + " exceeds population size " +
                             std::to_string(frame.size()));
  }

  const auto bounds = frame.population().bounds();
  const auto cell_coord = [grid](double v, double lo, double hi) -> std::size_t {
    if (!(hi > lo)) return 0;
    const auto c = static_cast<std::size_t>(std::floor((v - lo) / (hi - lo) * static_cast<double>(grid)));
    return std::min(c, grid - 1);
  };
  std::vector<std::vector<std::size_t>> members(n_cells);
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const auto& pt = frame.point(i);
    const auto cx = cell_coord(pt.x, bounds.x_min, bounds.x_max);
    const auto cy = cell_coord(pt.y, bounds.y_min, bounds.y_max);
    members[cy * grid + cx].push_back(i);
  }

  std::vector<std::size_t> cells(n_cells);
  std::iota(cells.begin(), cells.end(), std::size_t{0});
  std::vector<std::size_t> pooled;
  for (std::size_t drawn = 0; drawn < n_cells; ++drawn) {
    if (drawn >= k && pooled.size() >= n) break;
    std::swap(cells[drawn], cells[drawn + rng.below(n_cells - drawn)]);
    const auto& in_cell = members[cells[drawn]];
    pooled.insert(pooled.end(), in_cell.begin(), in_cell.end());
  }
  std::sort(pooled.begin(), pooled.end());

  const auto inner = srs(pooled.size(), n, rng);
  std::vector<std::size_t> units;
  units.reserve(n);
  for (auto u : inner.units()) units.push_back(pooled[u]);
  return SampleSelection::from_units(frame.size(), std::move(units));
}

namespace detail {

inline double logistic(double t) { return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t)); }

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

}  // namespace detail

/// First-order inclusion probabilities of Poisson sampling with
/// probabilities `p`, conditioned on drawing exactly `m` units. Uses
/// prefix/suffix distributions of the Poisson-binomial count, which stay in
/// [0,1] and avoid the cancellation of the classical recursion.
/// Memory and time are O(N m).
inline std::vector<double> conditional_poisson_inclusion(std::span<const double> p, std::size_t m) {
  const std::size_t n_units = p.size();
  std::vector<double> result(n_units, 0.0);
  if (m == 0) return result;
  if (m > n_units) throw InfeasibilityError("conditional Poisson: size exceeds population");
  const std::size_t width = m + 1;
  std::vector<double> prefix((n_units + 1) * width, 0.0);
  std::vector<double> suffix((n_units + 1) * width, 0.0);
  prefix[0] = 1.0;
  for (std::size_t k = 0; k < n_units; ++k) {
    const double* src = &prefix[k * width];
    double* dst = &prefix[(k + 1) * width];
    for (std::size_t s = 0; s < width; ++s) {
      dst[s] = src[s] * (1.0 - p[k]) + (s > 0 ? src[s - 1] * p[k] : 0.0);
    }
  }
  suffix[n_units * width] = 1.0;
  for (std::size_t k = n_units; k-- > 0;) {
    const double* src = &suffix[(k + 1) * width];
    double* dst = &suffix[k * width];
    for (std::size_t s = 0; s < width; ++s) {
      dst[s] = src[s] * (1.0 - p[k]) + (s > 0 ? src[s - 1] * p[k] : 0.0);
    }
  }
  const double total = prefix[n_units * width + m];
  if (!(total > 0.0)) throw NumericError("conditional Poisson: size probability underflows");
  for (std::size_t k = 0; k < n_units; ++k) {
    double others = 0.0;
    for (std::size_t s = 0; s < m; ++s) others += prefix[k * width + s] * suffix[(k + 1) * width + (m - 1 - s)];
    result[k] = p[k] * others / total;
  }
  return result;
}

/// Fixed-size maximum-entropy design (conditional Poisson sampling) with
/// prescribed inclusion probabilities. Construction calibrates the Poisson
/// working probabilities; draws are rejective Poisson samples.
class ConditionalPoissonDesign {
 public:
  static constexpr double kTolerance = 1e-6;

  explicit ConditionalPoissonDesign(const PopulationFrame& frame) : n_units_(frame.size()) {
    if (!frame.has_integer_size()) {
      throw InfeasibilityError("uMES: the inclusion probabilities sum to " + csv::format_double(frame.n_target()) +
                               ", not an integer");
    }
    const auto n = static_cast<std::size_t>(std::llround(frame.n_target()));
    std::vector<double> target;
    for (std::size_t i = 0; i < frame.size(); ++i) {
      if (frame.pi(i) >= 1.0 - 1e-12) {
        certain_.push_back(i);
      } else {
        random_.push_back(i);
        target.push_back(frame.pi(i));
      }
    }
    if (random_.empty()) throw DomainError("uMES: every inclusion probability is 1");
    if (certain_.size() > n) throw InfeasibilityError("uMES: more certainty units than the sample size");
    size_ = n - certain_.size();
    calibrate(target);
  }

  std::size_t sample_size() const noexcept { return size_ + certain_.size(); }

  /// Poisson probabilities of the non-certain units, scaled to sum to the
  /// random part of the sample size.
  std::span<const double> working_probabilities() const noexcept { return working_; }

  /// Conditional inclusion probabilities implied by the calibrated working
  /// probabilities, for every frame unit.
  std::vector<double> inclusion_probabilities() const {
    std::vector<double> out(n_units_, 1.0);
    const auto part = conditional_poisson_inclusion(working_, size_);
    for (std::size_t r = 0; r < random_.size(); ++r) out[random_[r]] = part[r];
    return out;
  }

  /// Largest |achieved - target| after calibration.
  double calibration_error() const noexcept { return calibration_error_; }

  SampleSelection draw(RngStream& rng) const {
    constexpr std::size_t kMaxAttempts = 10'000'000;
    std::vector<std::size_t> units;
    for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
      units.assign(certain_.begin(), certain_.end());
      for (std::size_t r = 0; r < random_.size(); ++r) {
        if (rng.uniform() < working_[r]) {
          units.push_back(random_[r]);
          if (units.size() > sample_size()) break;
        }
      }
      if (units.size() == sample_size()) return SampleSelection::from_units(n_units_, std::move(units));
    }
    throw NumericError("uMES: rejective sampling did not hit the sample size");
  }

 private:
  void calibrate(std::span<const double> target) {
    constexpr int kMaxIterations = 2000;
    std::vector<double> theta(target.size());
    for (std::size_t r = 0; r < target.size(); ++r) theta[r] = detail::logit(target[r]);
    for (int iter = 0; iter < kMaxIterations; ++iter) {
      set_working(theta);
      const auto achieved = conditional_poisson_inclusion(working_, size_);
      calibration_error_ = 0.0;
      for (std::size_t r = 0; r < target.size(); ++r) {
        calibration_error_ = std::max(calibration_error_, std::abs(achieved[r] - target[r]));
      }
      if (calibration_error_ < 1e-12) return;
      for (std::size_t r = 0; r < target.size(); ++r) {
        const double a = std::clamp(achieved[r], 1e-300, 1.0 - 1e-16);
        theta[r] += detail::logit(target[r]) - detail::logit(a);
      }
    }
    if (!(calibration_error_ <= kTolerance)) {
      throw NumericError("uMES: calibration did not converge (error " + csv::format_double(calibration_error_) + ")");
    }
  }

  // Working probabilities logistic(theta + shift), the shift chosen so that
  // they sum to the sample size; this maximises the rejective acceptance rate.
  void set_working(std::span<const double> theta) {
    const auto target_sum = static_cast<double>(size_);
    const auto sum_at = [&](double shift) {
      double s = 0.0;
      for (double t : theta) s += detail::logistic(t + shift);
      return s;
    };
    double lo = -50.0;
    double hi = 50.0;
    while (sum_at(lo) > target_sum) lo *= 2.0;
    while (sum_at(hi) < target_sum) hi *= 2.0;
    for (int i = 0; i < 200 && hi - lo > 1e-14; ++i) {
      const double mid = 0.5 * (lo + hi);
      (sum_at(mid) < target_sum ? lo : hi) = mid;
    }
    const double shift = 0.5 * (lo + hi);
    working_.resize(theta.size());
    for (std::size_t r = 0; r < theta.size(); ++r) working_[r] = detail::logistic(theta[r] + shift);
  }

  std::size_t n_units_;
  std::size_t size_ = 0;
  std::vector<std::size_t> certain_;
  std::vector<std::size_t> random_;
  std::vector<double> working_;
  double calibration_error_ = 0.0;
};

/// One maximum-entropy draw. Prefer constructing ConditionalPoissonDesign
/// once when drawing repeatedly.
inline SampleSelection umes(const PopulationFrame& frame, RngStream& rng) {
  return ConditionalPoissonDesign(frame).draw(rng);
}

}  // namespace spreadometer
