#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "weakhyp/errors.hpp"
#include "weakhyp/expression.hpp"
#include "weakhyp/field.hpp"
#include "weakhyp/grid.hpp"

namespace weakhyp {

// A coefficient, forcing or datum: either an analytic expression in x1..xn, t
// (derivatives are symbolic) or samples on a fixed grid (derivatives are spectral).
class CoefficientFunction {
 public:
  CoefficientFunction() : expr_(expr::constant(0.0)) {}

  static CoefficientFunction analytic(expr::NodePtr e) {
    CoefficientFunction c;
    c.expr_ = std::move(e);
    return c;
  }
  static CoefficientFunction parse(std::string_view text, const std::string& field = "") {
    return analytic(expr::parse(text, field));
  }
  static CoefficientFunction constant(double v) { return analytic(expr::constant(v)); }

  static CoefficientFunction samples(std::shared_ptr<const Grid> grid, std::vector<double> values) {
    if (values.size() != grid->size()) throw ArgumentError("sample count does not match grid");
    CoefficientFunction c;
    c.expr_ = nullptr;
    c.grid_ = std::move(grid);
    c.samples_ = std::move(values);
    return c;
  }

  bool is_analytic() const { return expr_ != nullptr; }
  const expr::NodePtr& expression() const { return expr_; }
  bool is_zero() const { return expr_ && expr_->op == expr::Op::Const && expr_->value == 0.0; }
  bool is_constant() const { return expr_ && expr_->op == expr::Op::Const; }
  bool time_dependent() const { return expr_ && expr::depends_on_time(expr_); }

  std::string describe() const {
    return expr_ ? expr::to_string(expr_) : "<samples on " + std::to_string(grid_->size()) + " points>";
  }

  // Values at every grid point at time t.
  std::vector<double> values(const Grid& g, double t = 0.0) const {
    if (!expr_) {
      check_grid(g);
      return samples_;
    }
    expr::EvalContext ctx;
    ctx.size = g.size();
    ctx.t = t;
    ctx.band_limit = g.band_limit();
    for (int a = 0; a < g.dim(); ++a) ctx.coords.push_back(g.coordinates(a));
    if (expr::max_axis(expr_) >= g.dim()) {
      throw ArgumentError("expression " + describe() + " uses a coordinate beyond dimension " +
                          std::to_string(g.dim()));
    }
    return expr::evaluate(expr_, ctx);
  }

  CoefficientFunction derivative(int axis) const {
    if (expr_) return analytic(expr::derivative(expr_, axis));
    GridFunction f(grid_, 1);
    f.values() = samples_;
    return samples(grid_, spectral_derivative(f, axis, 1).values());
  }

  CoefficientFunction time_derivative() const {
    if (!expr_) return constant(0.0);
    return analytic(expr::derivative(expr_, -1));
  }

  // Jet field with value and spatial derivatives up to `order`.
  Field sample(const std::shared_ptr<const Grid>& g, int order = 2, double t = 0.0) const {
    if (is_constant()) return Field::constant(g, expr_->value, order);
    const int n = g->dim();
    std::vector<std::vector<double>> grad, hess;
    if (order >= 1) {
      for (int a = 0; a < n; ++a) grad.push_back(derivative(a).values(*g, t));
    }
    if (order >= 2) {
      for (int a = 0; a < n; ++a) {
        const CoefficientFunction da = derivative(a);
        for (int b = 0; b < n; ++b) hess.push_back(da.derivative(b).values(*g, t));
      }
    }
    return Field::from_samples(g, values(*g, t), std::move(grad), std::move(hess));
  }

  // Relative spectral tail of the samples (0 for analytic input); large values
  // mean spectral derivatives of this function are unreliable on g.
  double differentiation_error_estimate(const Grid& g) const {
    if (expr_) return 0.0;
    return SpectralOps(g).spectral_tail(samples_);
  }

 private:
  void check_grid(const Grid& g) const {
    if (!(g == *grid_)) throw ArgumentError("grid-sampled coefficient used on a different grid");
  }

  expr::NodePtr expr_;
  std::shared_ptr<const Grid> grid_;
  std::vector<double> samples_;
};

}  // namespace weakhyp
