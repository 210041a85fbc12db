// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "spreadometer/error.hpp"
#include "spreadometer/frame.hpp"
#include "spreadometer/rng.hpp"

namespace spreadometer {

/// Rectangular observation window.
struct Window {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 1.0;
  double y_max = 1.0;

  static Window square(double side) { return {0.0, 0.0, side, side}; }

  double width() const noexcept { return x_max - x_min; }
  double height() const noexcept { return y_max - y_min; }
  double area() const noexcept { return width() * height(); }
  bool contains(const Point& p) const noexcept {
    return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max;
  }

  void validate() const {
    if (!(width() > 0.0 && height() > 0.0)) throw DomainError("window: side lengths must be positive");
  }

  Point uniform_point(RngStream& rng) const { return {rng.uniform(x_min, x_max), rng.uniform(y_min, y_max)}; }
};

/// Complete spatial randomness: N i.i.d. uniform points, i.e. a homogeneous
/// Poisson process conditioned on its count.
inline Population gen_csr(std::size_t n_points, const Window& window, RngStream& rng) {
  window.validate();
  if (n_points == 0) throw DomainError("csr: N must be positive");
  std::vector<Point> points(n_points);
  for (auto& p : points) p = window.uniform_point(rng);
  return Population::from_points(std::move(points));
}

/// Neyman-Scott cluster process with a fixed number of offspring per parent,
/// each uniform on a disc around its parent. Offspring landing outside the
/// window are redrawn, so the output has exactly n_clusters * per_cluster
/// points.
inline Population gen_neyman_scott(std::size_t n_clusters, std::size_t per_cluster, double radius,
                                   const Window& window, RngStream& rng) {
  window.validate();
  if (n_clusters == 0 || per_cluster == 0) throw DomainError("neyman-scott: empty process");
  if (!(radius >= 0.0)) throw DomainError("neyman-scott: radius must be nonnegative");
  std::vector<Point> points;
  points.reserve(n_clusters * per_cluster);
  for (std::size_t c = 0; c < n_clusters; ++c) {
    const Point parent = window.uniform_point(rng);
    for (std::size_t o = 0; o < per_cluster; ++o) {
      Point child;
      do {
        const double r = radius * std::sqrt(rng.uniform());
        const double angle = 2.0 * std::numbers::pi * rng.uniform();
        child = {parent.x + r * std::cos(angle), parent.y + r * std::sin(angle)};
      } while (!window.contains(child));
      points.push_back(child);
    }
  }
  return Population::from_points(std::move(points));
}

/// Regular pattern by simple sequential inhibition: uniform proposals are
/// kept only when no accepted point lies closer than `inhibition`. Used in
/// place of a Matérn I process conditioned on N points.
inline Population gen_matern1(std::size_t n_points, double inhibition, const Window& window, RngStream& rng,
                              std::size_t max_attempts_per_point = 10'000) {
  window.validate();
  if (n_points == 0) throw DomainError("inhibition: N must be positive");
  if (!(inhibition >= 0.0)) throw DomainError("inhibition: distance must be nonnegative");
  const double disc = std::numbers::pi * (inhibition / 2.0) * (inhibition / 2.0);
  if (!(static_cast<double>(n_points) * disc < window.area())) {
    throw DomainError("inhibition: " + std::to_string(n_points) + " discs of diameter " +
                      csv::format_double(inhibition) + " cannot fit in the window");
  }

  // Bucket grid with cell side >= inhibition: conflicts are in the 3x3 block.
  const double cell = inhibition > 0.0 ? inhibition : std::max(window.width(), window.height());
  const auto nx = static_cast<std::size_t>(std::max(1.0, std::floor(window.width() / cell)));
  const auto ny = static_cast<std::size_t>(std::max(1.0, std::floor(window.height() / cell)));
  const double cw = window.width() / static_cast<double>(nx);
  const double ch = window.height() / static_cast<double>(ny);
  std::vector<std::vector<std::size_t>> buckets(nx * ny);
  const auto bucket_of = [&](const Point& p) {
    const auto cx = std::min(nx - 1, static_cast<std::size_t>((p.x - window.x_min) / cw));
    const auto cy = std::min(ny - 1, static_cast<std::size_t>((p.y - window.y_min) / ch));
    return std::pair{cx, cy};
  };

  const double min_d2 = inhibition * inhibition;
  std::vector<Point> points;
  points.reserve(n_points);
  std::size_t attempts = 0;
  const std::size_t budget = max_attempts_per_point * n_points;
  while (points.size() < n_points) {
    if (attempts++ >= budget) {
      throw SaturationError("inhibition: placed only " + std::to_string(points.size()) + " of " +
                            std::to_string(n_points) + " points");
    }
    const Point cand = window.uniform_point(rng);
    const auto [cx, cy] = bucket_of(cand);
    bool clear = true;
    for (std::size_t bx = cx == 0 ? 0 : cx - 1; clear && bx <= std::min(nx - 1, cx + 1); ++bx) {
      for (std::size_t by = cy == 0 ? 0 : cy - 1; clear && by <= std::min(ny - 1, cy + 1); ++by) {
        for (auto idx : buckets[by * nx + bx]) {
          if (squared_distance(cand, points[idx]) < min_d2) {
            clear = false;
            break;
          }
        }
      }
    }
    if (!clear) continue;
    buckets[cy * nx + cx].push_back(points.size());
    points.push_back(cand);
  }
  return Population::from_points(std::move(points));
}

}  // namespace spreadometer
