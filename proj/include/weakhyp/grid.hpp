#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "weakhyp/errors.hpp"

namespace weakhyp {

// Uniform periodic box origin + [0, L)^n. Points are stored row-major with the
// last axis fastest.
class Grid {
 public:
  Grid() = default;

  Grid(std::vector<int> points, std::vector<double> lengths, std::vector<double> origin = {})
      : points_(std::move(points)), lengths_(std::move(lengths)), origin_(std::move(origin)) {
    if (points_.empty()) throw ArgumentError("grid needs at least one axis");
    if (lengths_.size() != points_.size()) throw ArgumentError("grid lengths/points size mismatch");
    if (origin_.empty()) origin_.assign(points_.size(), 0.0);
    if (origin_.size() != points_.size()) throw ArgumentError("grid origin size mismatch");
    for (std::size_t a = 0; a < points_.size(); ++a) {
      const int p = points_[a];
      if (p < 2 || (p & (p - 1)) != 0) {
        throw ArgumentError("grid points per axis must be a power of two >= 2, got " +
                            std::to_string(p));
      }
      if (!(lengths_[a] > 0.0)) throw ArgumentError("grid box length must be positive");
    }
    size_ = 1;
    for (int p : points_) size_ *= static_cast<std::size_t>(p);
    coords_.resize(points_.size());
    for (std::size_t a = 0; a < points_.size(); ++a) {
      coords_[a].resize(size_);
      for (std::size_t idx = 0; idx < size_; ++idx) {
        coords_[a][idx] = origin_[a] + spacing(static_cast<int>(a)) * multi_index(idx)[a];
      }
    }
  }

  // Cubic grid helper: same points and length on every axis.
  static Grid cube(int dim, int points, double length, double origin = 0.0) {
    return Grid(std::vector<int>(dim, points), std::vector<double>(dim, length),
                std::vector<double>(dim, origin));
  }

  int dim() const { return static_cast<int>(points_.size()); }
  std::size_t size() const { return size_; }
  int points(int axis) const { return points_[axis]; }
  const std::vector<int>& shape() const { return points_; }
  double length(int axis) const { return lengths_[axis]; }
  double origin(int axis) const { return origin_[axis]; }
  const std::vector<double>& lengths() const { return lengths_; }
  const std::vector<double>& origins() const { return origin_; }
  double spacing(int axis) const { return lengths_[axis] / points_[axis]; }
  double min_spacing() const {
    double h = spacing(0);
    for (int a = 1; a < dim(); ++a) h = std::min(h, spacing(a));
    return h;
  }
  double cell_volume() const {
    double v = 1.0;
    for (int a = 0; a < dim(); ++a) v *= spacing(a);
    return v;
  }
  // Coordinate of axis `axis` at every point.
  std::span<const double> coordinates(int axis) const { return coords_[axis]; }

  std::vector<int> multi_index(std::size_t idx) const {
    std::vector<int> mi(points_.size());
    for (int a = dim() - 1; a >= 0; --a) {
      mi[a] = static_cast<int>(idx % points_[a]);
      idx /= points_[a];
    }
    return mi;
  }

  std::vector<double> point(std::size_t idx) const {
    std::vector<double> x(points_.size());
    for (int a = 0; a < dim(); ++a) x[a] = coords_[a][idx];
    return x;
  }

  // Highest frequency (in radians per unit length) that rough data may carry
  // on this grid: a quarter of the points per axis, so compressed waves stay resolved.
  double band_limit() const {
    double b = 0.0;
    for (int a = 0; a < dim(); ++a) {
      const double k = (points_[a] / 4) * 2.0 * std::numbers::pi / lengths_[a];
      b = a == 0 ? k : std::min(b, k);
    }
    return b;
  }

  // Same box, points per axis multiplied by `factor` (a power of two).
  Grid refined(int factor) const {
    std::vector<int> p = points_;
    for (int& v : p) v *= factor;
    return Grid(p, lengths_, origin_);
  }

  bool operator==(const Grid& o) const {
    return points_ == o.points_ && lengths_ == o.lengths_ && origin_ == o.origin_;
  }

 private:
  std::vector<int> points_;
  std::vector<double> lengths_;
  std::vector<double> origin_;
  std::size_t size_ = 0;
  std::vector<std::vector<double>> coords_;
};

// Vector-valued field with `components` values per grid point, stored
// component-major: component c occupies [c*size, (c+1)*size).
class GridFunction {
 public:
  GridFunction() = default;
  GridFunction(std::shared_ptr<const Grid> grid, int components = 1)
      : grid_(std::move(grid)), components_(components),
        values_(grid_->size() * static_cast<std::size_t>(components), 0.0) {}

  const Grid& grid() const { return *grid_; }
  const std::shared_ptr<const Grid>& grid_ptr() const { return grid_; }
  int components() const { return components_; }
  std::size_t points() const { return grid_->size(); }

  std::span<double> component(int c) {
    return {values_.data() + static_cast<std::size_t>(c) * points(), points()};
  }
  std::span<const double> component(int c) const {
    return {values_.data() + static_cast<std::size_t>(c) * points(), points()};
  }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  double max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }
  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

 private:
  std::shared_ptr<const Grid> grid_;
  int components_ = 0;
  std::vector<double> values_;
};

namespace detail {

// FFTW r2c/c2r pair for one grid shape, with aligned scratch buffers.
class SpectralPlan {
 public:
  explicit SpectralPlan(const std::vector<int>& shape) : shape_(shape) {
    real_size_ = 1;
    for (int p : shape_) real_size_ *= static_cast<std::size_t>(p);
    complex_size_ = real_size_ / shape_.back() * (shape_.back() / 2 + 1);
    real_ = fftw_alloc_real(real_size_);
    spec_ = fftw_alloc_complex(complex_size_);
    work_ = fftw_alloc_complex(complex_size_);
    const int rank = static_cast<int>(shape_.size());
    forward_ = fftw_plan_dft_r2c(rank, shape_.data(), real_, spec_, FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_c2r(rank, shape_.data(), work_, real_, FFTW_ESTIMATE);
  }
  SpectralPlan(const SpectralPlan&) = delete;
  SpectralPlan& operator=(const SpectralPlan&) = delete;
  ~SpectralPlan() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
    fftw_free(real_);
    fftw_free(spec_);
    fftw_free(work_);
  }

  std::size_t complex_size() const { return complex_size_; }
  std::complex<double>* spectrum() { return reinterpret_cast<std::complex<double>*>(spec_); }
  std::complex<double>* work() { return reinterpret_cast<std::complex<double>*>(work_); }

  void forward(std::span<const double> in) {
    std::copy(in.begin(), in.end(), real_);
    fftw_execute(forward_);
  }
  // Inverse of work(); scales by 1/size. work() is destroyed by c2r.
  void backward(std::span<double> out) {
    fftw_execute(backward_);
    const double s = 1.0 / static_cast<double>(real_size_);
    for (std::size_t i = 0; i < real_size_; ++i) out[i] = real_[i] * s;
  }

 private:
  std::vector<int> shape_;
  std::size_t real_size_ = 0, complex_size_ = 0;
  double* real_ = nullptr;
  fftw_complex* spec_ = nullptr;
  fftw_complex* work_ = nullptr;
  fftw_plan forward_ = nullptr, backward_ = nullptr;
};

// FFTW's planner is not re-entrant, so each thread keeps its own plans.
inline SpectralPlan& plan_for(const std::vector<int>& shape) {
  thread_local std::map<std::vector<int>, std::unique_ptr<SpectralPlan>> cache;
  auto& slot = cache[shape];
  if (!slot) slot = std::make_unique<SpectralPlan>(shape);
  return *slot;
}

// Signed integer wavenumber index of half-spectrum position `pos` along every axis.
inline void half_spectrum_modes(const Grid& g, std::size_t pos, std::vector<int>& k) {
  const int d = g.dim();
  const int last = g.points(d - 1) / 2 + 1;
  k.resize(d);
  k[d - 1] = static_cast<int>(pos % last);
  pos /= last;
  for (int a = d - 2; a >= 0; --a) {
    const int p = g.points(a);
    const int i = static_cast<int>(pos % p);
    pos /= p;
    k[a] = i <= p / 2 ? i : i - p;
  }
}

}  // namespace detail

// Derivative operators on a fixed grid. Holds per-mode wavenumbers so that a
// single forward transform serves derivatives along every axis.
class SpectralOps {
 public:
  explicit SpectralOps(const Grid& grid) : grid_(grid) {
    auto& plan = detail::plan_for(grid_.shape());
    const std::size_t nc = plan.complex_size();
    const int d = grid_.dim();
    wavenumber_.assign(d, std::vector<double>(nc));
    nyquist_.assign(d, std::vector<char>(nc));
    keep_two_thirds_.assign(nc, 1);
    std::vector<int> k;
    for (std::size_t pos = 0; pos < nc; ++pos) {
      detail::half_spectrum_modes(grid_, pos, k);
      for (int a = 0; a < d; ++a) {
        const int p = grid_.points(a);
        wavenumber_[a][pos] = 2.0 * std::numbers::pi / grid_.length(a) * k[a];
        nyquist_[a][pos] = std::abs(k[a]) == p / 2;
        if (3 * std::abs(k[a]) > p) keep_two_thirds_[pos] = 0;
      }
    }
  }

  const Grid& grid() const { return grid_; }

  // Writes d^order/dx_axis^order of `in` into `out`.
  void derivative(std::span<const double> in, std::span<double> out, int axis, int order) const {
    auto& plan = detail::plan_for(grid_.shape());
    plan.forward(in);
    apply_derivative(plan, axis, order);
    plan.backward(out);
  }

  // Computes the first derivative along each requested axis from one forward
  // transform. outs[a] may be empty to skip an axis.
  void gradient(std::span<const double> in, std::vector<std::span<double>> outs) const {
    auto& plan = detail::plan_for(grid_.shape());
    plan.forward(in);
    for (int a = 0; a < grid_.dim(); ++a) {
      if (outs[a].empty()) continue;
      apply_derivative(plan, a, 1);
      plan.backward(outs[a]);
    }
  }

  // Zeroes modes outside the 2/3 band.
  void dealias(std::span<double> f) const {
    auto& plan = detail::plan_for(grid_.shape());
    plan.forward(f);
    const std::size_t nc = plan.complex_size();
    const auto* s = plan.spectrum();
    auto* w = plan.work();
    for (std::size_t i = 0; i < nc; ++i) w[i] = keep_two_thirds_[i] ? s[i] : 0.0;
    plan.backward(f);
  }

  // Squared H^s norm, (h^n / P) * sum_xi (1+|xi|^2)^s |F(xi)|^2 over the full
  // spectrum, s may be negative or fractional.
  double sobolev_norm_squared(std::span<const double> f, double s) const {
    auto& plan = detail::plan_for(grid_.shape());
    plan.forward(f);
    const auto* spec = plan.spectrum();
    const std::size_t nc = plan.complex_size();
    const int d = grid_.dim();
    const int last_points = grid_.points(d - 1);
    const int last_modes = last_points / 2 + 1;
    double sum = 0.0;
    for (std::size_t pos = 0; pos < nc; ++pos) {
      double xi2 = 0.0;
      for (int a = 0; a < d; ++a) xi2 += wavenumber_[a][pos] * wavenumber_[a][pos];
      const int k_last = static_cast<int>(pos % last_modes);
      // Modes with 0 < k_last < N/2 stand for themselves and their conjugates.
      const double mult = (k_last == 0 || 2 * k_last == last_points) ? 1.0 : 2.0;
      const double weight = s == 0.0 ? 1.0 : std::pow(1.0 + xi2, s);
      sum += mult * weight * std::norm(spec[pos]);
    }
    return sum * grid_.cell_volume() / static_cast<double>(grid_.size());
  }

  // Fraction of the spectral energy of f carried by the outer half of the
  // resolved band; a cheap resolution-doubling surrogate for differentiation accuracy.
  double spectral_tail(std::span<const double> f) const {
    auto& plan = detail::plan_for(grid_.shape());
    plan.forward(f);
    const auto* spec = plan.spectrum();
    const std::size_t nc = plan.complex_size();
    const int d = grid_.dim();
    double total = 0.0, tail = 0.0;
    for (std::size_t pos = 0; pos < nc; ++pos) {
      bool outer = false;
      for (int a = 0; a < d; ++a) {
        const double kmax = std::numbers::pi * grid_.points(a) / grid_.length(a);
        if (std::abs(wavenumber_[a][pos]) > 0.5 * kmax) outer = true;
      }
      const double e = std::norm(spec[pos]);
      total += e;
      if (outer) tail += e;
    }
    return total > 0.0 ? std::sqrt(tail / total) : 0.0;
  }

 private:
  void apply_derivative(detail::SpectralPlan& plan, int axis, int order) const {
    const std::size_t nc = plan.complex_size();
    const auto* s = plan.spectrum();
    auto* w = plan.work();
    const auto& k = wavenumber_[axis];
    const auto& nyq = nyquist_[axis];
    const std::complex<double> i(0.0, 1.0);
    for (std::size_t pos = 0; pos < nc; ++pos) {
      // The Nyquist mode has no sign; odd derivatives drop it to stay real.
      if (order % 2 == 1 && nyq[pos]) {
        w[pos] = 0.0;
        continue;
      }
      std::complex<double> factor = 1.0;
      for (int o = 0; o < order; ++o) factor *= i * k[pos];
      w[pos] = factor * s[pos];
    }
  }

  Grid grid_;
  std::vector<std::vector<double>> wavenumber_;
  std::vector<std::vector<char>> nyquist_;
  std::vector<char> keep_two_thirds_;
};

// d^order f / dx_axis^order for every component of f.
inline GridFunction spectral_derivative(const GridFunction& f, int axis, int order) {
  if (order < 0 || order > 4) throw ArgumentError("spectral_derivative order must be in [0, 4]");
  if (axis < 0 || axis >= f.grid().dim()) throw ArgumentError("spectral_derivative axis out of range");
  GridFunction out(f.grid_ptr(), f.components());
  if (order == 0) {
    out.values() = f.values();
    return out;
  }
  const SpectralOps ops(f.grid());
  for (int c = 0; c < f.components(); ++c) ops.derivative(f.component(c), out.component(c), axis, order);
  return out;
}

// H^k norm of a scalar field (component 0); H^0 equals the grid L^2 norm.
inline double sobolev_norm(const GridFunction& f, int k) {
  if (k > 6) throw ArgumentError("sobolev_norm supports k <= 6");
  const SpectralOps ops(f.grid());
  double sum = 0.0;
  for (int c = 0; c < f.components(); ++c) sum += ops.sobolev_norm_squared(f.component(c), k);
  return std::sqrt(sum);
}

inline double l2_norm(std::span<const double> f, const Grid& g) {
  double s = 0.0;
  for (double v : f) s += v * v;
  return std::sqrt(s * g.cell_volume());
}

}  // namespace weakhyp
