#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "weakhyp/errors.hpp"
#include "weakhyp/grid.hpp"

namespace weakhyp {

// Samples of a scalar coefficient on a grid together with its spatial
// derivatives up to `order` (0, 1 or 2). Arithmetic follows the product rule,
// so derived coefficients (Q A_k, Q B, ...) carry exact derivative samples.
class Field {
 public:
  Field() = default;

  static Field constant(std::shared_ptr<const Grid> grid, double c, int order = 2) {
    Field f;
    f.grid_ = std::move(grid);
    f.order_ = order;
    f.is_constant_ = true;
    f.constant_ = c;
    return f;
  }

  // value[p], gradient[a][p], hessian[a*n+b][p]; missing levels lower the order.
  static Field from_samples(std::shared_ptr<const Grid> grid, std::vector<double> value,
                            std::vector<std::vector<double>> gradient = {},
                            std::vector<std::vector<double>> hessian = {}) {
    Field f;
    const int n = grid->dim();
    f.grid_ = std::move(grid);
    f.value_ = std::move(value);
    f.order_ = 0;
    if (static_cast<int>(gradient.size()) == n) {
      f.grad_ = std::move(gradient);
      f.order_ = 1;
      if (static_cast<int>(hessian.size()) == n * n) {
        f.hess_ = std::move(hessian);
        f.order_ = 2;
      }
    }
    return f;
  }

  const Grid& grid() const { return *grid_; }
  const std::shared_ptr<const Grid>& grid_ptr() const { return grid_; }
  int order() const { return order_; }
  bool is_constant() const { return is_constant_; }
  bool is_zero() const { return is_constant_ && constant_ == 0.0; }
  double constant_value() const { return constant_; }
  std::size_t size() const { return grid_->size(); }

  double at(std::size_t p) const { return is_constant_ ? constant_ : value_[p]; }
  double d(int a, std::size_t p) const {
    require(1);
    return is_constant_ ? 0.0 : grad_[a][p];
  }
  double dd(int a, int b, std::size_t p) const {
    require(2);
    return is_constant_ ? 0.0 : hess_[a * grid_->dim() + b][p];
  }

  // Value samples as a dense vector (materializes constants).
  std::vector<double> values() const {
    if (is_constant_) return std::vector<double>(size(), constant_);
    return value_;
  }

  // The field d/dx_a, one derivative order lower.
  Field derivative(int a) const {
    require(1);
    if (is_constant_) return constant(grid_, 0.0, order_ - 1);
    const int n = grid_->dim();
    std::vector<std::vector<double>> g;
    if (order_ >= 2) {
      g.resize(n);
      for (int b = 0; b < n; ++b) g[b] = hess_[a * n + b];
    }
    return from_samples(grid_, grad_[a], std::move(g));
  }

  Field truncated(int order) const {
    Field f = *this;
    f.order_ = std::min(order_, order);
    if (!is_constant_) {
      if (f.order_ < 2) f.hess_.clear();
      if (f.order_ < 1) f.grad_.clear();
    }
    return f;
  }

  double sup_abs() const {
    if (is_constant_) return std::abs(constant_);
    double m = 0.0;
    for (double v : value_) m = std::max(m, std::abs(v));
    return m;
  }

  friend Field operator+(const Field& x, const Field& y) { return combine(x, y, 1.0, 1.0); }
  friend Field operator-(const Field& x, const Field& y) { return combine(x, y, 1.0, -1.0); }
  friend Field operator*(double s, const Field& x) { return combine(x, x, s, 0.0); }
  friend Field operator-(const Field& x) { return combine(x, x, -1.0, 0.0); }

  friend Field operator*(const Field& x, const Field& y) {
    if (x.is_constant_) return x.constant_ * y;
    if (y.is_constant_) return y.constant_ * x;
    const int order = std::min(x.order_, y.order_);
    const int n = x.grid_->dim();
    const std::size_t P = x.size();
    Field f;
    f.grid_ = x.grid_;
    f.order_ = order;
    f.value_.resize(P);
    for (std::size_t p = 0; p < P; ++p) f.value_[p] = x.value_[p] * y.value_[p];
    if (order >= 1) {
      f.grad_.assign(n, std::vector<double>(P));
      for (int a = 0; a < n; ++a) {
        for (std::size_t p = 0; p < P; ++p) {
          f.grad_[a][p] = x.grad_[a][p] * y.value_[p] + x.value_[p] * y.grad_[a][p];
        }
      }
    }
    if (order >= 2) {
      f.hess_.assign(n * n, std::vector<double>(P));
      for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
          auto& h = f.hess_[a * n + b];
          const auto& xh = x.hess_[a * n + b];
          const auto& yh = y.hess_[a * n + b];
          for (std::size_t p = 0; p < P; ++p) {
            h[p] = xh[p] * y.value_[p] + x.grad_[a][p] * y.grad_[b][p] +
                   x.grad_[b][p] * y.grad_[a][p] + x.value_[p] * yh[p];
          }
        }
      }
    }
    return f;
  }

 private:
  void require(int k) const {
    if (order_ < k) throw ArgumentError("field carries derivatives only up to order " +
                                        std::to_string(order_));
  }

  // sx*x + sy*y with order = min of the operands.
  static Field combine(const Field& x, const Field& y, double sx, double sy) {
    const int order = std::min(x.order_, y.order_);
    if (x.is_constant_ && y.is_constant_) {
      return constant(x.grid_, sx * x.constant_ + sy * y.constant_, order);
    }
    const int n = x.grid_->dim();
    const std::size_t P = x.size();
    Field f;
    f.grid_ = x.grid_;
    f.order_ = order;
    f.value_.resize(P);
    for (std::size_t p = 0; p < P; ++p) f.value_[p] = sx * x.at(p) + (sy == 0.0 ? 0.0 : sy * y.at(p));
    const auto level = [&](auto member, int count) {
      std::vector<std::vector<double>> out(count, std::vector<double>(P, 0.0));
      for (int c = 0; c < count; ++c) {
        if (!x.is_constant_ && sx != 0.0) {
          const auto& src = (x.*member)[c];
          for (std::size_t p = 0; p < P; ++p) out[c][p] += sx * src[p];
        }
        if (!y.is_constant_ && sy != 0.0) {
          const auto& src = (y.*member)[c];
          for (std::size_t p = 0; p < P; ++p) out[c][p] += sy * src[p];
        }
      }
      return out;
    };
    if (order >= 1) f.grad_ = level(&Field::grad_, n);
    if (order >= 2) f.hess_ = level(&Field::hess_, n * n);
    return f;
  }

  std::shared_ptr<const Grid> grid_;
  int order_ = 0;
  bool is_constant_ = false;
  double constant_ = 0.0;
  std::vector<double> value_;
  std::vector<std::vector<double>> grad_;
  std::vector<std::vector<double>> hess_;
};

// Matrix of fields, stored as a list of structurally nonzero entries.
class MatrixField {
 public:
  struct Entry {
    int row = 0, col = 0;
    Field f;
  };

  MatrixField() = default;
  MatrixField(std::shared_ptr<const Grid> grid, int rows, int cols)
      : grid_(std::move(grid)), rows_(rows), cols_(cols) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  const std::shared_ptr<const Grid>& grid_ptr() const { return grid_; }
  const std::vector<Entry>& entries() const { return entries_; }

  // Adds f to entry (r, c); zero constants are not stored.
  void add(int r, int c, const Field& f) {
    if (r < 0 || r >= rows_ || c < 0 || c >= cols_) throw ArgumentError("matrix entry out of range");
    if (f.is_zero()) return;
    for (auto& e : entries_) {
      if (e.row == r && e.col == c) {
        e.f = e.f + f;
        return;
      }
    }
    entries_.push_back({r, c, f});
  }

  const Field* find(int r, int c) const {
    for (const auto& e : entries_) {
      if (e.row == r && e.col == c) return &e.f;
    }
    return nullptr;
  }

  double at(int r, int c, std::size_t p) const {
    const Field* f = find(r, c);
    return f ? f->at(p) : 0.0;
  }

  Eigen::MatrixXd dense(std::size_t p) const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rows_, cols_);
    for (const auto& e : entries_) m(e.row, e.col) += e.f.at(p);
    return m;
  }

  MatrixField derivative(int a) const {
    MatrixField out(grid_, rows_, cols_);
    for (const auto& e : entries_) out.add(e.row, e.col, e.f.derivative(a));
    return out;
  }

  MatrixField transpose() const {
    MatrixField out(grid_, cols_, rows_);
    for (const auto& e : entries_) out.add(e.col, e.row, e.f);
    return out;
  }

  bool empty() const { return entries_.empty(); }

  friend MatrixField operator*(const MatrixField& x, const MatrixField& y) {
    if (x.cols_ != y.rows_) throw ArgumentError("matrix field product size mismatch");
    MatrixField out(x.grid_, x.rows_, y.cols_);
    for (const auto& ex : x.entries_) {
      for (const auto& ey : y.entries_) {
        if (ex.col == ey.row) out.add(ex.row, ey.col, ex.f * ey.f);
      }
    }
    return out;
  }

  friend MatrixField operator+(const MatrixField& x, const MatrixField& y) {
    if (x.rows_ != y.rows_ || x.cols_ != y.cols_) throw ArgumentError("matrix field sum size mismatch");
    MatrixField out = x;
    for (const auto& e : y.entries_) out.add(e.row, e.col, e.f);
    return out;
  }

  // Block-diagonal matrix with `copies` repetitions of this matrix.
  MatrixField block_diagonal(int copies) const {
    MatrixField out(grid_, rows_ * copies, cols_ * copies);
    for (int b = 0; b < copies; ++b) {
      for (const auto& e : entries_) out.add(b * rows_ + e.row, b * cols_ + e.col, e.f);
    }
    return out;
  }

  // Writes this matrix into rows r0.., cols c0.. of `target`.
  void place_into(MatrixField& target, int r0, int c0) const {
    for (const auto& e : entries_) target.add(r0 + e.row, c0 + e.col, e.f);
  }

 private:
  std::shared_ptr<const Grid> grid_;
  int rows_ = 0, cols_ = 0;
  std::vector<Entry> entries_;
};

}  // namespace weakhyp
