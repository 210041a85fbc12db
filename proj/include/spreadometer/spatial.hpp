// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "spreadometer/error.hpp"
#include "spreadometer/frame.hpp"

namespace spreadometer {

struct Neighbor {
  std::size_t unit;  ///< position in the population
  double distance;
};

/// Neighbours of `owner`, ascending by distance; equal distances are listed
/// by ascending unit id. The owner never appears in its own list.
struct NeighborList {
  std::size_t owner;
  std::vector<Neighbor> ordered;
};

/// Exact nearest-neighbour queries over a fixed point set, accelerated by a
/// uniform grid. Results are identical to an exhaustive distance sort,
/// including the complete set of units tied at the boundary distance.
class PointIndex {
 public:
  /// `members` are positions into `points` that the index should contain;
  /// `tie_keys[i]` orders equidistant members (typically the unit ids).
  /// `bounds` must enclose every member.
  PointIndex(std::span<const Point> points, std::span<const std::size_t> members,
             std::span<const std::int64_t> tie_keys, Bounds bounds)
      : points_(points), tie_keys_(tie_keys), bounds_(bounds) {
    const double width = bounds.x_max - bounds.x_min;
    const double height = bounds.y_max - bounds.y_min;
    const double extent = std::max(width, height);
    const auto per_side = static_cast<double>(
        std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(members.size()))))));
    cell_ = extent > 0.0 ? extent / per_side : 1.0;
    nx_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(width / cell_)));
    ny_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(height / cell_)));

    // Counting sort of members into cells.
    offsets_.assign(nx_ * ny_ + 1, 0);
    std::vector<std::size_t> cell_of(members.size());
    for (std::size_t m = 0; m < members.size(); ++m) {
      const auto& p = points_[members[m]];
      cell_of[m] = cell_index(column_of(p.x), row_of(p.y));
      ++offsets_[cell_of[m] + 1];
    }
    for (std::size_t c = 1; c < offsets_.size(); ++c) offsets_[c] += offsets_[c - 1];
    entries_.resize(members.size());
    auto cursor = offsets_;
    for (std::size_t m = 0; m < members.size(); ++m) entries_[cursor[cell_of[m]]++] = members[m];
  }

  std::size_t size() const noexcept { return entries_.size(); }

  /// The ⌈k⌉ members nearest to `query` plus every member tied with the
  /// ⌈k⌉-th distance. `exclude` is left out (used for self-queries).
  std::vector<Neighbor> nearest(const Point& query, double k,
                                std::optional<std::size_t> exclude = std::nullopt) const {
    const auto wanted = static_cast<std::size_t>(std::ceil(k));
    std::vector<Candidate> found;
    if (wanted == 0 || entries_.empty()) return {};

    const std::size_t qc = column_of(query.x);
    const std::size_t qr = row_of(query.y);
    const std::size_t max_ring = std::max(nx_, ny_);
    for (std::size_t ring = 0; ring <= max_ring; ++ring) {
      visit_ring(query, qc, qr, ring, exclude, found);
      const double bound = unvisited_bound(query, qc, qr, ring);
      if (found.size() >= wanted) {
        std::nth_element(found.begin(), found.begin() + static_cast<std::ptrdiff_t>(wanted - 1), found.end(),
                         [](const Candidate& a, const Candidate& b) { return a.d2 < b.d2; });
        const double kth = found[wanted - 1].d2;
        if (kth < bound * bound) break;
      }
      if (std::isinf(bound)) break;
    }
    return finish(found, wanted);
  }

  /// All members at the minimum distance from `query`.
  std::vector<Neighbor> nearest_all(const Point& query) const { return nearest(query, 1.0); }

 private:
  struct Candidate {
    double d2;
    std::int64_t key;
    std::size_t unit;
  };

  std::size_t column_of(double x) const {
    const double c = std::floor((x - bounds_.x_min) / cell_);
    if (!(c > 0.0)) return 0;
    return std::min(nx_ - 1, static_cast<std::size_t>(c));
  }
  std::size_t row_of(double y) const {
    const double r = std::floor((y - bounds_.y_min) / cell_);
    if (!(r > 0.0)) return 0;
    return std::min(ny_ - 1, static_cast<std::size_t>(r));
  }
  std::size_t cell_index(std::size_t c, std::size_t r) const { return r * nx_ + c; }

  void visit_cell(const Point& query, std::size_t c, std::size_t r, std::optional<std::size_t> exclude,
                  std::vector<Candidate>& found) const {
    const auto cell = cell_index(c, r);
    for (std::size_t e = offsets_[cell]; e < offsets_[cell + 1]; ++e) {
      const auto unit = entries_[e];
      if (exclude && *exclude == unit) continue;
      found.push_back({squared_distance(query, points_[unit]), tie_keys_[unit], unit});
    }
  }

  void visit_ring(const Point& query, std::size_t qc, std::size_t qr, std::size_t ring,
                  std::optional<std::size_t> exclude, std::vector<Candidate>& found) const {
    const auto lo_c = static_cast<std::ptrdiff_t>(qc) - static_cast<std::ptrdiff_t>(ring);
    const auto hi_c = static_cast<std::ptrdiff_t>(qc + ring);
    const auto lo_r = static_cast<std::ptrdiff_t>(qr) - static_cast<std::ptrdiff_t>(ring);
    const auto hi_r = static_cast<std::ptrdiff_t>(qr + ring);
    const auto inside = [&](std::ptrdiff_t c, std::ptrdiff_t r) {
      return c >= 0 && r >= 0 && c < static_cast<std::ptrdiff_t>(nx_) && r < static_cast<std::ptrdiff_t>(ny_);
    };
    const auto visit = [&](std::ptrdiff_t c, std::ptrdiff_t r) {
      if (inside(c, r)) visit_cell(query, static_cast<std::size_t>(c), static_cast<std::size_t>(r), exclude, found);
    };
    if (ring == 0) {
      visit(lo_c, lo_r);
      return;
    }
    for (auto c = lo_c; c <= hi_c; ++c) {
      visit(c, lo_r);
      visit(c, hi_r);
    }
    for (auto r = lo_r + 1; r < hi_r; ++r) {
      visit(lo_c, r);
      visit(hi_c, r);
    }
  }

  // Lower bound on the distance from `query` to any member outside the block
  // of cells visited so far; infinite once the block covers the grid.
  double unvisited_bound(const Point& query, std::size_t qc, std::size_t qr, std::size_t ring) const {
    double bound = std::numeric_limits<double>::infinity();
    if (qc >= ring + 1) {
      bound = std::min(bound, query.x - (bounds_.x_min + static_cast<double>(qc - ring) * cell_));
    }
    if (qc + ring + 1 < nx_) {
      bound = std::min(bound, bounds_.x_min + static_cast<double>(qc + ring + 1) * cell_ - query.x);
    }
    if (qr >= ring + 1) {
      bound = std::min(bound, query.y - (bounds_.y_min + static_cast<double>(qr - ring) * cell_));
    }
    if (qr + ring + 1 < ny_) {
      bound = std::min(bound, bounds_.y_min + static_cast<double>(qr + ring + 1) * cell_ - query.y);
    }
    // Slack for members whose computed cell differs from their exact cell
    // by a rounding step.
    return std::max(bound - 1e-9 * cell_, 0.0);
  }

  static std::vector<Neighbor> finish(std::vector<Candidate>& found, std::size_t wanted) {
    std::sort(found.begin(), found.end(), [](const Candidate& a, const Candidate& b) {
      return a.d2 < b.d2 || (a.d2 == b.d2 && a.key < b.key);
    });
    std::size_t count = std::min(wanted, found.size());
    while (count > 0 && count < found.size() && found[count].d2 == found[count - 1].d2) ++count;
    std::vector<Neighbor> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back({found[i].unit, std::sqrt(found[i].d2)});
    return out;
  }

  std::span<const Point> points_;
  std::span<const std::int64_t> tie_keys_;
  Bounds bounds_;
  double cell_ = 1.0;
  std::size_t nx_ = 1;
  std::size_t ny_ = 1;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> entries_;
};

/// Neighbour queries over all units of a population.
class SpatialIndex {
 public:
  explicit SpatialIndex(const Population& population)
      : population_(&population), all_(population.size()) {
    for (std::size_t i = 0; i < all_.size(); ++i) all_[i] = i;
    index_.emplace(population.points(), all_, population.ids(), population.bounds());
  }

  /// Neighbours of the unit at `position` for a real neighbourhood size k.
  NeighborList knn(std::size_t position, double k) const {
    if (!(k >= 0.0)) throw DomainError("knn: k must be nonnegative");
    return {position, index_->nearest(population_->point(position), k, position)};
  }

 private:
  const Population* population_;
  std::vector<std::size_t> all_;
  std::optional<PointIndex> index_;
};

/// The ⌈k⌉ nearest neighbours of unit `id`, plus all units tied with the
/// ⌈k⌉-th. Requires 0 <= k <= N-1.
inline NeighborList knn_query(const PopulationFrame& frame, std::int64_t id, double k) {
  const auto position = frame.index_of(id);
  const auto max_k = static_cast<double>(frame.size() - 1);
  if (!(k >= 0.0 && k <= max_k)) {
    throw DomainError("knn: k = " + csv::format_double(k) + " is outside [0, N-1]");
  }
  return SpatialIndex(frame.population()).knn(position, k);
}

struct VoronoiShare {
  std::size_t sample_unit;  ///< population position of the sample unit
  double share;
};

/// For each population unit, the sample units it is closest to. Units at
/// equal minimum distance from several sample units are split equally.
struct VoronoiAssignment {
  std::vector<std::vector<VoronoiShare>> shares;
};

inline VoronoiAssignment voronoi_assign(const Population& population, std::span<const std::size_t> sample) {
  if (sample.empty()) throw DomainError("voronoi: the sample is empty");
  const PointIndex index(population.points(), sample, population.ids(), population.bounds());
  VoronoiAssignment out;
  out.shares.resize(population.size());
  for (std::size_t i = 0; i < population.size(); ++i) {
    const auto nearest = index.nearest_all(population.point(i));
    const double share = 1.0 / static_cast<double>(nearest.size());
    auto& row = out.shares[i];
    row.reserve(nearest.size());
    for (const auto& nb : nearest) row.push_back({nb.unit, share});
  }
  return out;
}

}  // namespace spreadometer
