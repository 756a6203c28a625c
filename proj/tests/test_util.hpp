#pragma once

#include <cmath>
#include <algorithm>
#include <map>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "weakhyp/equation.hpp"
#include "weakhyp/grid.hpp"
#include "weakhyp/reduction.hpp"

namespace testutil {

inline weakhyp::EquationSpec make_spec(int order, int dim, const std::vector<std::string>& a,
                                       const std::map<std::string, std::string>& lower = {},
                                       const std::vector<std::string>& data = {}, const std::string& f = "0",
                                       double length = 2.0 * std::numbers::pi, double T = 1.0) {
  weakhyp::EquationSpec s;
  s.order = order;
  s.dim = dim;
  s.box_length.assign(dim, length);
  s.origin.assign(dim, 0.0);
  s.T = T;
  for (const auto& e : a) s.principal.push_back(weakhyp::CoefficientFunction::parse(e));
  for (const auto& [k, v] : lower) s.lower[k] = weakhyp::CoefficientFunction::parse(v);
  for (const auto& g : data) s.data.push_back(weakhyp::CoefficientFunction::parse(g));
  s.forcing = weakhyp::CoefficientFunction::parse(f);
  return s;
}

inline std::shared_ptr<const weakhyp::Grid> grid_for(const weakhyp::EquationSpec& s, int points) {
  return std::make_shared<const weakhyp::Grid>(s.grid(points));
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({1e-300, std::abs(a), std::abs(b)}); }

// exp(M) by scaling and squaring with a truncated Taylor series.
inline Eigen::MatrixXd expm(const Eigen::MatrixXd& m) {
  int squarings = 0;
  double norm = m.cwiseAbs().rowwise().sum().maxCoeff();
  while (norm > 0.5) {
    norm /= 2;
    ++squarings;
  }
  const Eigen::MatrixXd a = m / std::ldexp(1.0, squarings);
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(m.rows(), m.cols()), sum = term;
  for (int k = 1; k <= 24; ++k) {
    term = term * a / k;
    sum += term;
  }
  for (int i = 0; i < squarings; ++i) sum = sum * sum;
  return sum;
}

// Exact solution u(t, x) fed through a reduced system: every component of the
// state is a mixed derivative of u, evaluated symbolically.
class Manufactured {
 public:
  Manufactured(std::string u, weakhyp::EquationSpec spec) : u_(weakhyp::expr::parse(u)), spec_(std::move(spec)) {}

  // d_t^time d^alpha u.
  weakhyp::expr::NodePtr derivative(int time, std::vector<int> alpha) const {
    std::sort(alpha.begin(), alpha.end());
    const auto key = std::make_pair(time, alpha);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    weakhyp::expr::NodePtr e = u_;
    for (int i = 0; i < time; ++i) e = weakhyp::expr::derivative(e, -1);
    for (int a : alpha) e = weakhyp::expr::derivative(e, a);
    cache_[key] = e;
    return e;
  }

  double value(int time, const std::vector<int>& alpha, const std::vector<double>& x, double t) const {
    return weakhyp::expr::evaluate_at(derivative(time, alpha), x, t);
  }

  // Right-hand side f for which u solves the equation.
  weakhyp::expr::NodePtr forcing() const {
    using namespace weakhyp::expr;
    const int m = spec_.order, n = spec_.dim;
    const auto coef = [&](const std::string& name) { return spec_.lower_term(name).expression(); };
    const auto ax = [](const std::string& p, int i) { return p + std::to_string(i + 1); };
    NodePtr f = derivative(m, {});
    for (int i = 0; i < n; ++i) f = sub(f, mul(spec_.principal[i].expression(), derivative(m - 2, {i, i})));
    if (m == 2) {
      for (int i = 0; i < n; ++i) f = add(f, mul(coef(ax("b", i)), derivative(0, {i})));
      f = add(f, mul(coef("c"), derivative(1, {})));
      f = add(f, mul(coef("d"), derivative(0, {})));
    } else if (m == 4) {
      for (int i = 0; i < n; ++i) {
        f = add(f, mul(coef(ax("b", i)), derivative(0, {i, i, i})));
        f = add(f, mul(coef(ax("b2_", i)), derivative(1, {i, i})));
        f = add(f, mul(coef(ax("b3_", i)), derivative(2, {i})));
      }
      f = add(f, mul(coef("b4"), derivative(3, {})));
    } else {
      for (int i = 0; i < n; ++i) {
        f = add(f, mul(coef(ax("b1_", i)), derivative(m - 3, {i, i})));
        f = add(f, mul(coef(ax("b2_", i)), derivative(m - 2, {i})));
      }
      f = add(f, mul(coef("b3"), derivative(m - 1, {})));
    }
    return f;
  }

  // Spec with the manufactured forcing and initial data filled in.
  weakhyp::EquationSpec spec_with_forcing() const {
    weakhyp::EquationSpec s = spec_;
    s.forcing = weakhyp::CoefficientFunction::analytic(forcing());
    s.data.clear();
    for (int j = 0; j < s.order; ++j) {
      s.data.push_back(weakhyp::CoefficientFunction::analytic(time_zero(derivative(j, {}))));
    }
    return s;
  }

  // (time order, spatial multi-index) of each base component.
  static std::vector<std::pair<int, std::vector<int>>> layout(const weakhyp::FirstOrderSystem& s) {
    using weakhyp::SystemKind;
    const int n = s.dim;
    std::vector<std::pair<int, std::vector<int>>> c;
    if (s.kind == SystemKind::M2) {
      c.push_back({0, {}});
      for (int i = 0; i < n; ++i) c.push_back({0, {i}});
      c.push_back({1, {}});
    } else if (s.kind == SystemKind::M4) {
      for (int j = 0; j < 3; ++j) {
        for (int k = 0; k < n; ++k) c.push_back({j, std::vector<int>(3 - j, k)});
      }
      c.push_back({3, {}});
    } else {
      const int shift = s.equation_order - 3;
      for (int k = 0; k < n; ++k) c.push_back({shift, {k, k}});
      for (int k = 0; k < n; ++k) c.push_back({shift + 1, {k}});
      c.push_back({shift + 2, {}});
    }
    return c;
  }

  // Exact state of system s at grid point p, time t, with extra time and
  // spatial derivatives applied to every component.
  Eigen::VectorXd state(const weakhyp::FirstOrderSystem& s, std::size_t p, double t, int dt = 0,
                        std::vector<int> extra = {}) const {
    const auto lay = layout(s);
    const auto x = s.grid->point(p);
    Eigen::VectorXd v(s.size());
    for (int b = 0; b < s.blocks(); ++b) {
      auto gamma = weakhyp::detail::decode_block(b, s.level, s.dim);
      for (int c = 0; c < s.N; ++c) {
        auto alpha = lay[c].second;
        alpha.insert(alpha.end(), gamma.begin(), gamma.end());
        alpha.insert(alpha.end(), extra.begin(), extra.end());
        v(b * s.N + c) = value(lay[c].first + dt, alpha, x, t);
      }
    }
    return v;
  }

  // d_t U - (sum A_k d_k U + B U + couplings + forcing) at (p, t).
  Eigen::VectorXd residual(const weakhyp::FirstOrderSystem& s, std::size_t p, double t) const {
    Eigen::VectorXd r = state(s, p, t, 1);
    for (int k = 0; k < s.dim; ++k) r -= s.full_A(k).dense(p) * state(s, p, t, 0, {k});
    r -= s.full_B().dense(p) * state(s, p, t);
    weakhyp::FirstOrderSystem base = s;
    base.level = 0;
    for (const auto& c : s.coupling) {
      r.segment(c.block * s.N, s.N) -= c.M.dense(p) * state(base, p, t, 0, c.gamma);
    }
    const auto x = s.grid->point(p);
    for (const auto& f : s.forcing) {
      r(f.block * s.N + f.component) -= weakhyp::expr::evaluate_at(f.f.expression(), x, t);
    }
    return r;
  }

 private:
  static weakhyp::expr::NodePtr time_zero(const weakhyp::expr::NodePtr& e) {
    using namespace weakhyp::expr;
    if (!e) return e;
    if (e->op == Op::Time) return constant(0.0);
    if (e->op == Op::Const || e->op == Op::Var) return e;
    auto n = std::make_shared<Node>(*e);
    n->lhs = time_zero(e->lhs);
    n->rhs = time_zero(e->rhs);
    return n;
  }

  weakhyp::expr::NodePtr u_;
  weakhyp::EquationSpec spec_;
  mutable std::map<std::pair<int, std::vector<int>>, weakhyp::expr::NodePtr> cache_;
};

}  // namespace testutil
