#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "teta/annot_model.hpp"

namespace teta {

/// Intersection over union of two boxes; 0 for disjoint boxes.
inline double iou(const BBox& a, const BBox& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  if (inter <= 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// Dense row-major matrix of finite values.
class CostMatrix {
 public:
  CostMatrix() = default;
  CostMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  CostMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) throw Error("cost matrix: value count does not match shape");
    for (double v : values_)
      if (!std::isfinite(v)) throw Error("cost matrix: non-finite entry");
  }
  /// Builds from nested rows, e.g. {{1, 2}, {3, 1}}.
  static CostMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.front().size();
    std::vector<double> v;
    v.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw Error("cost matrix: ragged rows");
      v.insert(v.end(), row.begin(), row.end());
    }
    return CostMatrix(r, c, std::move(v));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  std::span<const double> values() const { return values_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

struct Assignment {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // sorted by row
  double objective = 0.0;
};

/// Entry (i, j) is iou(gts[i], preds[j]).
inline CostMatrix iou_matrix(std::span<const BBox> gts, std::span<const BBox> preds) {
  CostMatrix m(gts.size(), preds.size());
  for (std::size_t i = 0; i < gts.size(); ++i)
    for (std::size_t j = 0; j < preds.size(); ++j) m(i, j) = iou(gts[i], preds[j]);
  return m;
}

namespace detail {

/// Ties closer than this (scaled by the largest magnitude) are treated as equal.
inline double tie_tolerance(const CostMatrix& m) {
  double scale = 1.0;
  for (double v : m.values()) scale = std::max(scale, std::abs(v));
  return 1e-9 * scale;
}

inline double sum_pairs(const CostMatrix& m, const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  double s = 0.0;
  for (auto [r, c] : pairs) s += m(r, c);
  return s;
}

}  // namespace detail

/// Maximum-total-value matching of rows to columns.
///
/// Rectangular inputs are padded to square with zero entries; padded pairs are dropped,
/// so the result always has min(rows, cols) pairs. Among all optimal matchings the
/// lexicographically smallest (row, col) pair list is returned.
///
/// Runs the O(n^3) shortest-augmenting-path Hungarian method, then walks rows in order
/// and moves each row to the smallest column that keeps an optimal perfect matching in
/// the equality subgraph of the final dual solution.
inline Assignment solve_max_assignment(const CostMatrix& m) {
  Assignment out;
  const std::size_t rows = m.rows(), cols = m.cols();
  if (rows == 0 || cols == 0) return out;
  const std::size_t n = std::max(rows, cols);
  const double inf = std::numeric_limits<double>::infinity();
  auto cost = [&](std::size_t i, std::size_t j) -> double {  // 0-based, minimization
    return (i < rows && j < cols) ? -m(i, j) : 0.0;
  };

  // 1-based potentials; p[j] = row matched to column j, 0 for none.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<std::size_t> row_to_col(n), col_to_row(n);
  for (std::size_t j = 1; j <= n; ++j) {
    row_to_col[p[j] - 1] = j - 1;
    col_to_row[j - 1] = p[j] - 1;
  }
  const double tol = detail::tie_tolerance(m);
  auto tight = [&](std::size_t i, std::size_t j) {
    return cost(i, j) - u[i + 1] - v[j + 1] <= tol;
  };

  std::vector<char> col_fixed(n, 0);
  std::vector<std::size_t> prev_row(n);
  std::vector<char> row_seen(n);
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t current = row_to_col[i];
    const std::size_t limit = std::min(current, cols);
    for (std::size_t j = 0; j < limit; ++j) {
      if (col_fixed[j] || !tight(i, j)) continue;
      // Row i takes column j, freeing `current`. Search the equality subgraph for an
      // alternating path from the displaced row to `current`.
      const std::size_t start = col_to_row[j];
      std::fill(row_seen.begin(), row_seen.end(), 0);
      std::vector<std::size_t> queue{start};
      row_seen[start] = 1;
      row_seen[i] = 1;
      bool found = false;
      std::size_t end_row = 0;
      for (std::size_t q = 0; q < queue.size() && !found; ++q) {
        const std::size_t r = queue[q];
        for (std::size_t c = 0; c < n; ++c) {
          if (c == j || col_fixed[c] || !tight(r, c)) continue;
          if (c == current) {
            end_row = r;
            found = true;
            break;
          }
          const std::size_t next = col_to_row[c];
          if (row_seen[next]) continue;
          row_seen[next] = 1;
          prev_row[next] = r;
          queue.push_back(next);
        }
      }
      if (!found) continue;
      std::size_t r = end_row;
      std::size_t take = current;
      while (true) {
        const std::size_t owned = row_to_col[r];
        row_to_col[r] = take;
        col_to_row[take] = r;
        if (r == start) break;
        take = owned;
        r = prev_row[r];
      }
      row_to_col[i] = j;
      col_to_row[j] = i;
      break;
    }
    col_fixed[row_to_col[i]] = 1;
  }

  for (std::size_t i = 0; i < rows; ++i)
    if (row_to_col[i] < cols) out.pairs.emplace_back(i, row_to_col[i]);
  out.objective = detail::sum_pairs(m, out.pairs);
  return out;
}

/// Exhaustive optimum with the same tie-break as solve_max_assignment. Test oracle.
/// Rejects matrices with min(rows, cols) > 8.
inline Assignment brute_force_assignment(const CostMatrix& m) {
  const std::size_t rows = m.rows(), cols = m.cols();
  if (std::min(rows, cols) > 8) throw Error("brute_force_assignment: min dimension exceeds 8");
  Assignment best;
  if (rows == 0 || cols == 0) return best;
  const std::size_t target = std::min(rows, cols);
  const std::size_t may_skip = rows - target;

  // Enumerate complete matchings in lexicographic order of their pair lists: each row tries
  // real columns ascending, then being left unmatched.
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> all;
  std::vector<std::pair<std::size_t, std::size_t>> cur;
  std::vector<char> used(cols, 0);
  auto rec = [&](auto&& self, std::size_t row, std::size_t skipped) -> void {
    if (row == rows) {
      all.push_back(cur);
      return;
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (used[c]) continue;
      used[c] = 1;
      cur.emplace_back(row, c);
      self(self, row + 1, skipped);
      cur.pop_back();
      used[c] = 0;
    }
    if (skipped < may_skip) self(self, row + 1, skipped + 1);
  };
  rec(rec, 0, 0);

  double max_obj = -std::numeric_limits<double>::infinity();
  std::vector<double> objs;
  objs.reserve(all.size());
  for (const auto& pairs : all) {
    objs.push_back(detail::sum_pairs(m, pairs));
    max_obj = std::max(max_obj, objs.back());
  }
  const double tol = detail::tie_tolerance(m);
  for (std::size_t k = 0; k < all.size(); ++k) {
    if (objs[k] >= max_obj - tol) {
      best.pairs = all[k];
      best.objective = objs[k];
      break;
    }
  }
  return best;
}

}  // namespace teta
