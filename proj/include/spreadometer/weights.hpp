// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "spreadometer/csv.hpp"
#include "spreadometer/error.hpp"
#include "spreadometer/frame.hpp"
#include "spreadometer/spatial.hpp"

namespace spreadometer {

struct Triplet {
  std::size_t row;
  std::size_t col;
  double value;
};

/// Sparse nonnegative spatial weights in compressed-row form, with cached
/// row sums w_i., column sums w_.j and total w. Immutable once built.
///
/// Memory is one (column, value) pair per nonzero; with equal probabilities
/// n/N the matrix holds about N * (N/n) entries.
class WeightsMatrix {
 public:
  WeightsMatrix() = default;

  /// Duplicate (row, col) entries are summed; explicit zeros are dropped.
  static WeightsMatrix from_triplets(std::size_t n_units, std::vector<Triplet> triplets) {
    for (const auto& t : triplets) {
      if (t.row >= n_units || t.col >= n_units) {
        throw DomainError("weights: entry (" + std::to_string(t.row) + "," + std::to_string(t.col) +
                          ") outside a " + std::to_string(n_units) + "-unit matrix");
      }
      if (t.row == t.col && t.value != 0.0) throw DomainError("weights: diagonal entries must be zero");
      if (!(t.value >= 0.0) || !std::isfinite(t.value)) {
        throw DomainError("weights: entries must be finite and nonnegative");
      }
    }
    std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
      return std::tie(a.row, a.col) < std::tie(b.row, b.col);
    });

    WeightsMatrix w;
    w.row_start_.assign(n_units + 1, 0);
    for (std::size_t t = 0; t < triplets.size();) {
      std::size_t u = t;
      double value = 0.0;
      while (u < triplets.size() && triplets[u].row == triplets[t].row && triplets[u].col == triplets[t].col) {
        value += triplets[u].value;
        ++u;
      }
      if (value > 0.0) {
        w.cols_.push_back(triplets[t].col);
        w.values_.push_back(value);
        ++w.row_start_[triplets[t].row + 1];
      }
      t = u;
    }
    for (std::size_t i = 1; i <= n_units; ++i) w.row_start_[i] += w.row_start_[i - 1];
    w.finalize();
    return w;
  }

  std::size_t size() const noexcept { return row_sums_.size(); }
  std::size_t nonzeros() const noexcept { return values_.size(); }

  std::span<const std::size_t> row_cols(std::size_t i) const {
    return {cols_.data() + row_start_[i], row_start_[i + 1] - row_start_[i]};
  }
  std::span<const double> row_values(std::size_t i) const {
    return {values_.data() + row_start_[i], row_start_[i + 1] - row_start_[i]};
  }

  double at(std::size_t i, std::size_t j) const {
    const auto cols = row_cols(i);
    const auto it = std::lower_bound(cols.begin(), cols.end(), j);
    if (it == cols.end() || *it != j) return 0.0;
    return row_values(i)[static_cast<std::size_t>(it - cols.begin())];
  }

  std::span<const double> row_sums() const noexcept { return row_sums_; }
  std::span<const double> col_sums() const noexcept { return col_sums_; }
  double row_sum(std::size_t i) const { return row_sums_[i]; }
  double col_sum(std::size_t j) const { return col_sums_[j]; }
  double total() const noexcept { return total_; }
  bool zero_row(std::size_t i) const { return row_sums_[i] == 0.0; }

  std::vector<Triplet> triplets() const {
    std::vector<Triplet> out;
    out.reserve(nonzeros());
    for (std::size_t i = 0; i < size(); ++i) {
      const auto cols = row_cols(i);
      const auto vals = row_values(i);
      for (std::size_t e = 0; e < cols.size(); ++e) out.push_back({i, cols[e], vals[e]});
    }
    return out;
  }

 private:
  friend WeightsMatrix build_weights(const PopulationFrame& frame);

  void finalize() {
    const std::size_t n = row_start_.size() - 1;
    row_sums_.assign(n, 0.0);
    col_sums_.assign(n, 0.0);
    total_ = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t e = row_start_[i]; e < row_start_[i + 1]; ++e) {
        row_sums_[i] += values_[e];
        col_sums_[cols_[e]] += values_[e];
      }
      total_ += row_sums_[i];
    }
  }

  std::vector<std::size_t> row_start_{0};
  std::vector<std::size_t> cols_;
  std::vector<double> values_;
  std::vector<double> row_sums_;
  std::vector<double> col_sums_;
  double total_ = 0.0;
};

/// Neighbourhood size k_i = 1/π_i - 1, capped at N-1. Values within 1e-9 of
/// an integer are snapped to it so that, e.g., π = 0.05 gives exactly 19
/// neighbours rather than 19 plus a 1e-15 sliver.
inline double neighbourhood_size(double pi, std::size_t n_units) {
  if (!(pi > 0.0 && pi <= 1.0)) throw DomainError("weights: inclusion probability outside (0,1]");
  double k = 1.0 / pi - 1.0;
  const double nearest = std::round(k);
  if (std::abs(k - nearest) <= 1e-9 * std::max(1.0, k)) k = nearest;
  return std::min(k, static_cast<double>(n_units - 1));
}

/// Weights built from inclusion probabilities: the ⌊k_i⌋ nearest neighbours
/// of i get 1, the ⌈k_i⌉-th gets k_i - ⌊k_i⌋. Positional weights falling on
/// a block of equidistant neighbours are pooled and shared equally within the
/// block, so every row sums to k_i.
inline WeightsMatrix build_weights(const PopulationFrame& frame) {
  const std::size_t n_units = frame.size();
  const SpatialIndex index(frame.population());

  WeightsMatrix w;
  w.row_start_.assign(n_units + 1, 0);
  std::vector<std::size_t> row_cols;
  std::vector<double> row_vals;
  for (std::size_t i = 0; i < n_units; ++i) {
    const double k = neighbourhood_size(frame.pi(i), n_units);
    const auto whole = static_cast<std::size_t>(std::floor(k));
    const double fraction = k - static_cast<double>(whole);
    const auto positional = [&](std::size_t position) {  // 0-based rank
      if (position < whole) return 1.0;
      if (position == whole) return fraction;
      return 0.0;
    };

    const auto neighbours = index.knn(i, k).ordered;
    row_cols.clear();
    row_vals.clear();
    for (std::size_t start = 0; start < neighbours.size();) {
      std::size_t end = start + 1;
      while (end < neighbours.size() && neighbours[end].distance == neighbours[start].distance) ++end;
      double pooled = 0.0;
      for (std::size_t p = start; p < end; ++p) pooled += positional(p);
      const double each = pooled / static_cast<double>(end - start);
      if (each > 0.0) {
        for (std::size_t p = start; p < end; ++p) {
          row_cols.push_back(neighbours[p].unit);
          row_vals.push_back(each);
        }
      }
      start = end;
    }

    std::vector<std::size_t> order(row_cols.size());
    for (std::size_t e = 0; e < order.size(); ++e) order[e] = e;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return row_cols[a] < row_cols[b]; });
    for (auto e : order) {
      w.cols_.push_back(row_cols[e]);
      w.values_.push_back(row_vals[e]);
    }
    w.row_start_[i + 1] = w.cols_.size();
  }
  w.finalize();
  return w;
}

/// Matrix-free access to the operators built on W:
///   D = diag(w_i.),  A = D⁺W - 1 1ᵀW / w,  B = AᵀDA,
/// where D⁺ leaves zero rows of W at zero.
class DerivedOperators {
 public:
  explicit DerivedOperators(const WeightsMatrix& w) : w_(&w) {}

  std::vector<double> apply_w(std::span<const double> z) const {
    std::vector<double> out(w_->size(), 0.0);
    for (std::size_t i = 0; i < w_->size(); ++i) {
      const auto cols = w_->row_cols(i);
      const auto vals = w_->row_values(i);
      double acc = 0.0;
      for (std::size_t e = 0; e < cols.size(); ++e) acc += vals[e] * z[cols[e]];
      out[i] = acc;
    }
    return out;
  }

  std::vector<double> apply_w_transpose(std::span<const double> u) const {
    std::vector<double> out(w_->size(), 0.0);
    for (std::size_t i = 0; i < w_->size(); ++i) {
      const auto cols = w_->row_cols(i);
      const auto vals = w_->row_values(i);
      for (std::size_t e = 0; e < cols.size(); ++e) out[cols[e]] += vals[e] * u[i];
    }
    return out;
  }

  std::vector<double> apply_d(std::span<const double> z) const {
    std::vector<double> out(z.begin(), z.end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= w_->row_sum(i);
    return out;
  }

  /// (A z)_i = Z̄_i - Z̄̄: local mean minus the grand local mean.
  std::vector<double> apply_a(std::span<const double> z) const {
    auto out = apply_w(z);
    double grand = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) grand += w_->col_sum(j) * z[j];
    grand /= w_->total();
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double local = w_->zero_row(i) ? 0.0 : out[i] / w_->row_sum(i);
      out[i] = local - grand;
    }
    return out;
  }

  std::vector<double> apply_a_transpose(std::span<const double> u) const {
    std::vector<double> scaled(u.size(), 0.0);
    double sum_u = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (!w_->zero_row(i)) scaled[i] = u[i] / w_->row_sum(i);
      sum_u += u[i];
    }
    auto out = apply_w_transpose(scaled);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] -= w_->col_sum(j) * sum_u / w_->total();
    return out;
  }

  std::vector<double> apply_b(std::span<const double> z) const { return apply_a_transpose(apply_d(apply_a(z))); }

  double quadratic_w(std::span<const double> z) const { return dot(z, apply_w(z)); }

  double quadratic_d(std::span<const double> z) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) acc += w_->row_sum(i) * z[i] * z[i];
    return acc;
  }

  /// zᵀBz evaluated as Σ w_i. (Az)_i², which is nonnegative by construction.
  double quadratic_b(std::span<const double> z) const {
    const auto az = apply_a(z);
    double acc = 0.0;
    for (std::size_t i = 0; i < az.size(); ++i) acc += w_->row_sum(i) * az[i] * az[i];
    return acc;
  }

  static double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
  }

 private:
  const WeightsMatrix* w_;
};

inline DerivedOperators derived_operators(const WeightsMatrix& w) { return DerivedOperators(w); }

/// Debug dump of W as i,j,w rows (unit ids, not positions).
inline void write_weight_triplets(std::ostream& out, const WeightsMatrix& w, const Population& population) {
  out << "i,j,w\n";
  for (const auto& t : w.triplets()) {
    out << population.id(t.row) << ',' << population.id(t.col) << ',' << csv::format_double(t.value) << '\n';
  }
}

/// Reads a triplet file written by write_weight_triplets.
inline WeightsMatrix read_weight_triplets(std::istream& in, const Population& population) {
  const auto table = csv::read(in);
  const auto ci = table.column("i");
  const auto cj = table.column("j");
  const auto cw = table.column("w");
  if (!ci || !cj || !cw) throw SchemaError("weights triplets need columns i,j,w");
  std::vector<Triplet> triplets;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto line = table.line_numbers[r];
    triplets.push_back({population.index_of(csv::parse_int(row[*ci], line, "i")),
                        population.index_of(csv::parse_int(row[*cj], line, "j")),
                        csv::parse_double(row[*cw], line, "w")});
  }
  return WeightsMatrix::from_triplets(population.size(), std::move(triplets));
}

}  // namespace spreadometer
