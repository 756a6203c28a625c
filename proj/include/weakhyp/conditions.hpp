#pragma once

// Sampled verification of the pointwise hypotheses on coefficients. A bound
// f <= C g is quantified on a finite grid: the fitted C is the sup of f/g over
// the samples, and a condition fails when that sup is infinite or grows by
// more than `growth_limit` when the grid is refined.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "weakhyp/coefficient.hpp"
#include "weakhyp/equation.hpp"
#include "weakhyp/errors.hpp"
#include "weakhyp/grid.hpp"
#include "weakhyp/reduction.hpp"

namespace weakhyp {

enum class ConditionId { glaeser, oleinik_m2, lc_m2, lc_m3, lc1_m3, lc_m3_nd, lc_m4 };
enum class Verdict { holds, fails, vacuous };

inline const char* to_string(ConditionId id) {
  switch (id) {
    case ConditionId::glaeser: return "glaeser";
    case ConditionId::oleinik_m2: return "oleinik_m2";
    case ConditionId::lc_m2: return "lc_m2";
    case ConditionId::lc_m3: return "lc_m3";
    case ConditionId::lc1_m3: return "lc1_m3";
    case ConditionId::lc_m3_nd: return "lc_m3_nd";
    case ConditionId::lc_m4: return "lc_m4";
  }
  return "?";
}

inline std::optional<ConditionId> condition_from_string(const std::string& s) {
  for (auto id : {ConditionId::glaeser, ConditionId::oleinik_m2, ConditionId::lc_m2, ConditionId::lc_m3,
                  ConditionId::lc1_m3, ConditionId::lc_m3_nd, ConditionId::lc_m4}) {
    if (s == to_string(id)) return id;
  }
  return std::nullopt;
}

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::holds: return "holds";
    case Verdict::fails: return "fails";
    case Verdict::vacuous: return "vacuous";
  }
  return "?";
}

struct LeviReport {
  ConditionId condition_id = ConditionId::glaeser;
  std::string clause;
  double fitted_constant = 0.0;   // on the refined grid
  double coarse_constant = 0.0;   // on the base grid
  std::vector<double> worst_point;
  Verdict verdict = Verdict::holds;
  std::optional<CoefficientFunction> lambda_estimate;
  std::string note;
};

struct CheckOptions {
  std::vector<int> points{256};
  int refinement = 8;          // fine grid = base grid with points * refinement
  double growth_limit = 2.0;
  int xi_samples = 64;
  std::uint64_t seed = 1;
  int lambda_derivative_order = 2;
  double glaeser_tol = 1e-6;
  double factor_floor = 1e-6;  // lambda is recovered where a_i > factor_floor * sup a_i
  double agreement_tol = 1e-6;
};

namespace detail {

struct Sup {
  double value = 0.0;
  std::size_t arg = 0;
  bool infinite = false;
};

// sup num/den over points with den > 0; a point with den == 0 and
// num > num_zero makes the sup infinite.
inline Sup sup_ratio(const std::vector<double>& num, const std::vector<double>& den, double num_zero) {
  Sup s;
  for (std::size_t p = 0; p < num.size(); ++p) {
    if (den[p] > 0.0) {
      const double r = num[p] / den[p];
      if (!s.infinite && r > s.value) {
        s.value = r;
        s.arg = p;
      }
    } else if (num[p] > num_zero && !s.infinite) {
      s.infinite = true;
      s.arg = p;
    }
  }
  if (s.infinite) s.value = std::numeric_limits<double>::infinity();
  return s;
}

inline double sup_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline std::vector<double> abs_of(std::vector<double> v) {
  for (double& x : v) x = std::abs(x);
  return v;
}
inline std::vector<double> square_of(std::vector<double> v) {
  for (double& x : v) x *= x;
  return v;
}
inline std::vector<double> sqrt_pos(std::vector<double> v) {
  for (double& x : v) x = x > 0.0 ? std::sqrt(x) : 0.0;
  return v;
}

// A ratio-type measurement evaluated on a grid.
using Measure = std::function<Sup(const Grid&)>;

// Runs `measure` on the base and refined grids and fills a report.
inline LeviReport refine_report(ConditionId id, std::string clause, const Grid& base,
                                const CheckOptions& opt, const Measure& measure) {
  LeviReport r;
  r.condition_id = id;
  r.clause = std::move(clause);
  const Sup coarse = measure(base);
  const Grid fine = base.refined(opt.refinement);
  Sup s;
  bool refined = true;
  try {
    s = measure(fine);
  } catch (const ArgumentError&) {
    // Grid-sampled coefficients exist only on the base grid.
    s = coarse;
    refined = false;
  }
  r.coarse_constant = coarse.value;
  r.fitted_constant = s.value;
  r.worst_point = refined ? fine.point(s.arg) : base.point(s.arg);
  if (!refined) r.note = "grid-sampled input: refinement test skipped";
  if (s.infinite || !std::isfinite(s.value)) {
    r.verdict = Verdict::fails;
    r.note = "ratio unbounded: denominator vanishes where the numerator does not";
  } else if (coarse.value > 0.0 && s.value > opt.growth_limit * coarse.value) {
    r.verdict = Verdict::fails;
    r.note = "constant grows by " + std::to_string(s.value / coarse.value) + "x under " +
             std::to_string(opt.refinement) + "x refinement";
  } else if (coarse.value == 0.0 && s.value > 0.0 && s.value > 1e-8) {
    r.verdict = Verdict::fails;
    r.note = "constant appears only on the refined grid";
  } else {
    r.verdict = Verdict::holds;
  }
  return r;
}

inline double num_zero_tolerance(const std::vector<double>& num) {
  return 1e-24 * std::max(1.0, sup_abs(num));
}

inline LeviReport nonnegativity_report(ConditionId id, const EquationSpec& spec, const Grid& base) {
  LeviReport r;
  r.condition_id = id;
  r.clause = "a_i >= 0";
  for (int i = 0; i < spec.dim; ++i) {
    const auto a = spec.principal[i].values(base);
    const double scale = std::max(1.0, sup_abs(a));
    for (std::size_t p = 0; p < a.size(); ++p) {
      if (a[p] < -1e-12 * scale && a[p] < r.fitted_constant) {
        r.fitted_constant = a[p];
        r.worst_point = base.point(p);
      }
    }
  }
  r.verdict = r.fitted_constant < 0.0 ? Verdict::fails : Verdict::holds;
  if (r.verdict == Verdict::fails) r.note = "principal coefficient negative: not weakly hyperbolic";
  return r;
}

// |f|^2 <= C a, reported as the linear constant sup |f|/sqrt(a).
inline Measure sqrt_bound(const CoefficientFunction& f, const CoefficientFunction& a) {
  return [f, a](const Grid& g) {
    auto num = abs_of(f.values(g));
    auto den = sqrt_pos(a.values(g));
    return sup_ratio(num, den, 1e-12 * std::max(1.0, sup_abs(num)));
  };
}

inline Measure linear_bound(const CoefficientFunction& f, const CoefficientFunction& a) {
  return [f, a](const Grid& g) {
    auto num = abs_of(f.values(g));
    auto den = a.values(g);
    return sup_ratio(num, den, 1e-12 * std::max(1.0, sup_abs(num)));
  };
}

inline Measure bounded(const CoefficientFunction& f) {
  return [f](const Grid& g) {
    const auto v = f.values(g);
    Sup s;
    for (std::size_t p = 0; p < v.size(); ++p) {
      if (!std::isfinite(v[p])) {
        s.infinite = true;
        s.arg = p;
        s.value = std::numeric_limits<double>::infinity();
        return s;
      }
      if (std::abs(v[p]) > s.value) {
        s.value = std::abs(v[p]);
        s.arg = p;
      }
    }
    return s;
  };
}

}  // namespace detail

// |d_i a|^2 <= 2 M a with M = sum_i sup |d_i^2 a|; fitted constant is
// sup |d_i a|^2 / (2 M a).
inline LeviReport glaeser_check(const CoefficientFunction& a, const Grid& grid, const CheckOptions& opt = {}) {
  const auto measure = [&](const Grid& g) {
    const int n = g.dim();
    double M = 0.0;
    for (int i = 0; i < n; ++i) M += detail::sup_abs(a.derivative(i).derivative(i).values(g));
    const auto av = a.values(g);
    detail::Sup best;
    for (int i = 0; i < n; ++i) {
      const auto num = detail::square_of(a.derivative(i).values(g));
      std::vector<double> den(av.size());
      for (std::size_t p = 0; p < av.size(); ++p) den[p] = 2.0 * M * av[p];
      const auto s = detail::sup_ratio(num, den, detail::num_zero_tolerance(num));
      if (s.infinite || s.value > best.value) best = s;
      if (best.infinite) break;
    }
    return best;
  };
  LeviReport r;
  const auto av = a.values(grid);
  const double scale = std::max(1.0, detail::sup_abs(av));
  for (std::size_t p = 0; p < av.size(); ++p) {
    if (av[p] < -1e-12 * scale) {
      r.condition_id = ConditionId::glaeser;
      r.clause = "|d_i a|^2 <= 2 M a";
      r.verdict = Verdict::vacuous;
      r.fitted_constant = av[p];
      r.worst_point = grid.point(p);
      r.note = "a takes negative values";
      return r;
    }
  }
  // The inequality is scale-free, so refinement growth is not the criterion here.
  const detail::Sup s = measure(grid);
  r.condition_id = ConditionId::glaeser;
  r.clause = "|d_i a|^2 <= 2 M a";
  r.fitted_constant = s.value;
  r.coarse_constant = s.value;
  r.worst_point = grid.point(s.arg);
  r.verdict = (!s.infinite && s.value <= 1.0 + opt.glaeser_tol) ? Verdict::holds : Verdict::fails;
  return r;
}

// (sum b_i xi_i)^2 <= C sum a_i xi_i^2 over sampled unit xi; b defaults to b_i = d_i a_i.
inline LeviReport oleinik_check(const std::vector<CoefficientFunction>& a, const Grid& grid,
                                const CheckOptions& opt = {},
                                std::optional<std::vector<CoefficientFunction>> b = std::nullopt) {
  const int n = static_cast<int>(a.size());
  if (grid.dim() != n) throw ArgumentError("oleinik_check: dimension mismatch");
  std::vector<CoefficientFunction> bs;
  if (b) bs = *b;
  else for (int i = 0; i < n; ++i) bs.push_back(a[i].derivative(i));
  std::vector<Eigen::VectorXd> xis;
  for (int i = 0; i < n; ++i) xis.push_back(Eigen::VectorXd::Unit(n, i));
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal;
  for (int k = 0; k < opt.xi_samples; ++k) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = normal(rng);
    xis.push_back(v.normalized());
  }
  const auto measure = [&](const Grid& g) {
    std::vector<std::vector<double>> av, bv;
    for (int i = 0; i < n; ++i) {
      av.push_back(a[i].values(g));
      bv.push_back(bs[i].values(g));
    }
    double bscale = 0.0;
    for (const auto& v : bv) bscale = std::max(bscale, detail::sup_abs(v));
    const double zero = 1e-24 * std::max(1.0, bscale * bscale);
    detail::Sup best;
    for (std::size_t p = 0; p < g.size(); ++p) {
      auto candidates = xis;
      // The maximizing direction where all a_i > 0: xi_i proportional to b_i / a_i.
      Eigen::VectorXd opt_xi(n);
      bool usable = true;
      for (int i = 0; i < n; ++i) {
        if (av[i][p] <= 0.0) usable = false;
        else opt_xi(i) = bv[i][p] / av[i][p];
      }
      if (usable && opt_xi.norm() > 0.0) candidates.push_back(opt_xi.normalized());
      for (const auto& xi : candidates) {
        double lhs = 0.0, rhs = 0.0;
        for (int i = 0; i < n; ++i) {
          lhs += bv[i][p] * xi(i);
          rhs += av[i][p] * xi(i) * xi(i);
        }
        lhs *= lhs;
        if (rhs > 0.0) {
          if (lhs / rhs > best.value && !best.infinite) {
            best.value = lhs / rhs;
            best.arg = p;
          }
        } else if (lhs > zero) {
          best.infinite = true;
          best.arg = p;
          best.value = std::numeric_limits<double>::infinity();
          return best;
        }
      }
    }
    return best;
  };
  return detail::refine_report(ConditionId::oleinik_m2, "(sum b_i xi_i)^2 <= C sum a_i xi_i^2", grid, opt,
                               measure);
}

inline std::vector<LeviReport> levi_check_m2(const EquationSpec& spec, const CheckOptions& opt = {}) {
  if (spec.order != 2) throw ArgumentError("levi_check_m2 needs an order-2 equation");
  const Grid base = spec.grid(opt.points.size() == 1 ? std::vector<int>(spec.dim, opt.points[0]) : opt.points);
  std::vector<LeviReport> out;
  out.push_back(detail::nonnegativity_report(ConditionId::lc_m2, spec, base));
  for (int i = 0; i < spec.dim; ++i) {
    const auto& b = spec.lower_term("b" + std::to_string(i + 1));
    auto r = detail::refine_report(ConditionId::lc_m2, "b" + std::to_string(i + 1) + "^2 <= C a" +
                                       std::to_string(i + 1), base, opt,
                                   [&](const Grid& g) {
                                     const auto num = detail::square_of(b.values(g));
                                     return detail::sup_ratio(num, spec.principal[i].values(g),
                                                              detail::num_zero_tolerance(num));
                                   });
    out.push_back(std::move(r));
  }
  out.push_back(detail::refine_report(ConditionId::lc_m2, "c bounded", base, opt, detail::bounded(spec.lower_term("c"))));
  out.push_back(detail::refine_report(ConditionId::lc_m2, "d bounded", base, opt, detail::bounded(spec.lower_term("d"))));
  // Bounded first derivatives of the lower-order coefficients.
  std::vector<std::string> names;
  for (int i = 0; i < spec.dim; ++i) names.push_back("b" + std::to_string(i + 1));
  names.push_back("c");
  names.push_back("d");
  for (const auto& name : names) {
    const auto& f = spec.lower_term(name);
    for (int a = 0; a < spec.dim; ++a) {
      out.push_back(detail::refine_report(ConditionId::lc_m2,
                                          "d_" + std::to_string(a + 1) + " " + name + " bounded", base, opt,
                                          detail::bounded(f.derivative(a))));
    }
  }
  auto ole = oleinik_check(spec.principal, base, opt);
  out.push_back(std::move(ole));
  return out;
}

enum class LeviLevel { LC, LC1 };

// One-dimensional order-3 conditions: |b1| <= C a, |b2| <= C sqrt(a), b3
// bounded, and for LC1 additionally |b1'| <= C sqrt(a).
inline std::vector<LeviReport> levi_check_m3(const EquationSpec& spec, LeviLevel level,
                                             const CheckOptions& opt = {}) {
  if (spec.order != 3) throw ArgumentError("levi_check_m3 needs an order-3 equation");
  if (spec.dim != 1) throw ArgumentError("levi_check_m3 is one-dimensional; use levi_check_m3_nd");
  const Grid base = spec.grid(opt.points.front());
  const auto& a = spec.principal[0];
  const auto& b1 = spec.lower_term("b1_1");
  const auto& b2 = spec.lower_term("b2_1");
  const auto& b3 = spec.lower_term("b3");
  std::vector<LeviReport> out;
  out.push_back(detail::nonnegativity_report(ConditionId::lc_m3, spec, base));
  out.push_back(detail::refine_report(ConditionId::lc_m3, "|b1| <= C a", base, opt, detail::linear_bound(b1, a)));
  out.push_back(detail::refine_report(ConditionId::lc_m3, "|b2| <= C sqrt(a)", base, opt, detail::sqrt_bound(b2, a)));
  out.push_back(detail::refine_report(ConditionId::lc_m3, "|b3| <= C", base, opt, detail::bounded(b3)));
  if (level == LeviLevel::LC1) {
    out.push_back(detail::refine_report(ConditionId::lc1_m3, "|b1'| <= C sqrt(a)", base, opt,
                                        detail::sqrt_bound(b1.derivative(0), a)));
  }
  return out;
}

namespace detail {

// Recovers lambda = b_i / a_i on {a_i > floor}, checks agreement across i,
// boundedness of lambda and its derivatives, and |b_i| <= C a_i everywhere.
inline void factorization_reports(std::vector<LeviReport>& out, ConditionId id, const EquationSpec& spec,
                                  const std::string& prefix, const Grid& base, const CheckOptions& opt) {
  const int n = spec.dim;
  std::vector<CoefficientFunction> b;
  for (int i = 0; i < n; ++i) b.push_back(spec.lower_term(prefix + std::to_string(i + 1)));

  const auto estimate = [&](const Grid& g, std::vector<double>& lambda, std::vector<char>& defined,
                            double& disagreement, std::size_t& worst) {
    lambda.assign(g.size(), 0.0);
    defined.assign(g.size(), 0);
    disagreement = 0.0;
    worst = 0;
    std::vector<double> best_a(g.size(), 0.0);
    for (int i = 0; i < n; ++i) {
      const auto av = spec.principal[i].values(g);
      const auto bv = b[i].values(g);
      const double floor = opt.factor_floor * sup_abs(av);
      for (std::size_t p = 0; p < g.size(); ++p) {
        if (!(av[p] > floor)) continue;
        const double l = bv[p] / av[p];
        if (defined[p]) {
          const double diff = std::abs(l - lambda[p]) / (1.0 + std::abs(l));
          if (diff > disagreement) {
            disagreement = diff;
            worst = p;
          }
        }
        if (!defined[p] || av[p] > best_a[p]) {
          lambda[p] = l;
          best_a[p] = av[p];
        }
        defined[p] = 1;
      }
    }
  };

  std::vector<double> lambda;
  std::vector<char> defined;
  double disagreement = 0.0;
  std::size_t worst = 0;
  estimate(base, lambda, defined, disagreement, worst);
  {
    LeviReport r;
    r.condition_id = id;
    r.clause = prefix + "i = lambda a_i with a single lambda";
    r.fitted_constant = disagreement;
    r.coarse_constant = disagreement;
    r.worst_point = base.point(worst);
    r.verdict = disagreement <= opt.agreement_tol ? Verdict::holds : Verdict::fails;
    if (r.verdict == Verdict::fails) r.note = "ratios b_i / a_i disagree across i";
    r.lambda_estimate = CoefficientFunction::samples(std::make_shared<const Grid>(base), lambda);
    out.push_back(std::move(r));
  }

  // lambda and its derivatives up to the requested order, on {a_i > floor}.
  // Analytic input uses the symbolic quotient b_i / a_i of the dominant axis.
  const bool analytic = std::all_of(b.begin(), b.end(), [](const auto& f) { return f.is_analytic(); }) &&
                        std::all_of(spec.principal.begin(), spec.principal.end(),
                                    [](const auto& f) { return f.is_analytic(); });
  std::vector<CoefficientFunction> quotients;
  if (analytic) {
    for (int i = 0; i < n; ++i) {
      quotients.push_back(CoefficientFunction::analytic(expr::div(b[i].expression(), spec.principal[i].expression())));
    }
  }
  const auto derivative_measure = [&](int order) {
    return [&, order](const Grid& g) {
      std::vector<double> lam;
      std::vector<char> def;
      double dis;
      std::size_t w;
      estimate(g, lam, def, dis, w);
      Sup s;
      if (order == 0 || !analytic) {
        for (std::size_t p = 0; p < g.size(); ++p) {
          if (def[p] && std::abs(lam[p]) > s.value) {
            s.value = std::abs(lam[p]);
            s.arg = p;
          }
        }
        return s;
      }
      // Dominant axis per point, then the symbolic derivatives of that quotient.
      std::vector<int> axis(g.size(), -1);
      std::vector<double> best(g.size(), 0.0);
      for (int i = 0; i < n; ++i) {
        const auto av = spec.principal[i].values(g);
        const double floor = opt.factor_floor * sup_abs(av);
        for (std::size_t p = 0; p < g.size(); ++p) {
          if (av[p] > floor && av[p] > best[p]) {
            best[p] = av[p];
            axis[p] = i;
          }
        }
      }
      for (int i = 0; i < n; ++i) {
        std::vector<CoefficientFunction> derivs;
        if (order == 1) {
          for (int x = 0; x < n; ++x) derivs.push_back(quotients[i].derivative(x));
        } else {
          for (int x = 0; x < n; ++x) {
            for (int y = 0; y < n; ++y) derivs.push_back(quotients[i].derivative(x).derivative(y));
          }
        }
        for (const auto& d : derivs) {
          const auto v = d.values(g);
          for (std::size_t p = 0; p < g.size(); ++p) {
            if (axis[p] == i && std::isfinite(v[p]) && std::abs(v[p]) > s.value) {
              s.value = std::abs(v[p]);
              s.arg = p;
            }
          }
        }
      }
      return s;
    };
  };
  for (int order = 0; order <= opt.lambda_derivative_order; ++order) {
    const std::string what = order == 0 ? "lambda bounded" : "derivatives of lambda of order " + std::to_string(order) + " bounded";
    auto r = refine_report(id, what, base, opt, derivative_measure(order));
    if (order > 0 && !analytic) r.note = "grid-sampled input: derivative bound not evaluated";
    out.push_back(std::move(r));
  }
  for (int i = 0; i < n; ++i) {
    out.push_back(refine_report(id, "|" + prefix + std::to_string(i + 1) + "| <= C a" + std::to_string(i + 1),
                                base, opt, linear_bound(b[i], spec.principal[i])));
  }
}

}  // namespace detail

// Order-3 conditions in n dimensions: b1_i = lambda a_i with bounded lambda,
// |b2_i| <= C sqrt(a_i), b3 bounded.
inline std::vector<LeviReport> levi_check_m3_nd(const EquationSpec& spec, const CheckOptions& opt = {}) {
  if (spec.order != 3) throw ArgumentError("levi_check_m3_nd needs an order-3 equation");
  const Grid base = spec.grid(opt.points.size() == 1 ? std::vector<int>(spec.dim, opt.points[0]) : opt.points);
  std::vector<LeviReport> out;
  out.push_back(detail::nonnegativity_report(ConditionId::lc_m3_nd, spec, base));
  detail::factorization_reports(out, ConditionId::lc_m3_nd, spec, "b1_", base, opt);
  for (int i = 0; i < spec.dim; ++i) {
    const std::string k = std::to_string(i + 1);
    out.push_back(detail::refine_report(ConditionId::lc_m3_nd, "|b2_" + k + "| <= C sqrt(a" + k + ")", base, opt,
                                        detail::sqrt_bound(spec.lower_term("b2_" + k), spec.principal[i])));
  }
  out.push_back(detail::refine_report(ConditionId::lc_m3_nd, "|b3| <= C", base, opt,
                                      detail::bounded(spec.lower_term("b3"))));
  return out;
}

// Order-4 conditions: b_i = 0, b2_i = lambda a_i, |b3_i| <= C sqrt(a_i), b4 bounded.
inline std::vector<LeviReport> levi_check_m4(const EquationSpec& spec, const CheckOptions& opt = {}) {
  if (spec.order != 4) throw ArgumentError("levi_check_m4 needs an order-4 equation");
  const Grid base = spec.grid(opt.points.size() == 1 ? std::vector<int>(spec.dim, opt.points[0]) : opt.points);
  std::vector<LeviReport> out;
  out.push_back(detail::nonnegativity_report(ConditionId::lc_m4, spec, base));
  double scale = 1.0;
  for (const auto& a : spec.principal) scale = std::max(scale, detail::sup_abs(a.values(base)));
  for (int i = 0; i < spec.dim; ++i) {
    const std::string k = std::to_string(i + 1);
    LeviReport r;
    r.condition_id = ConditionId::lc_m4;
    r.clause = "b" + k + " = 0";
    const auto v = spec.lower_term("b" + k).values(base);
    std::size_t arg = 0;
    for (std::size_t p = 0; p < v.size(); ++p) {
      if (std::abs(v[p]) > r.fitted_constant) {
        r.fitted_constant = std::abs(v[p]);
        arg = p;
      }
    }
    r.coarse_constant = r.fitted_constant;
    r.worst_point = base.point(arg);
    r.verdict = r.fitted_constant <= 1e-12 * scale ? Verdict::holds : Verdict::fails;
    if (r.verdict == Verdict::fails) r.note = "a d_i^3 u term is incompatible with the order-4 energy";
    out.push_back(std::move(r));
  }
  detail::factorization_reports(out, ConditionId::lc_m4, spec, "b2_", base, opt);
  for (int i = 0; i < spec.dim; ++i) {
    const std::string k = std::to_string(i + 1);
    out.push_back(detail::refine_report(ConditionId::lc_m4, "|b3_" + k + "| <= C sqrt(a" + k + ")", base, opt,
                                        detail::sqrt_bound(spec.lower_term("b3_" + k), spec.principal[i])));
  }
  out.push_back(detail::refine_report(ConditionId::lc_m4, "|b4| <= C", base, opt, detail::bounded(spec.lower_term("b4"))));
  return out;
}

inline bool all_hold(const std::vector<LeviReport>& reports) {
  return std::all_of(reports.begin(), reports.end(), [](const auto& r) { return r.verdict == Verdict::holds; });
}

// The Levi check matching the equation's order (the theorem's hypotheses).
inline std::vector<LeviReport> theorem_levi_check(const EquationSpec& spec, const CheckOptions& opt = {}) {
  switch (spec.order) {
    case 2: return levi_check_m2(spec, opt);
    case 3: return spec.dim == 1 ? levi_check_m3(spec, LeviLevel::LC1, opt) : levi_check_m3_nd(spec, opt);
    case 4: return levi_check_m4(spec, opt);
    default: {
      // The 2m family satisfies the order-3 conditions for w = d_t^{2m-3} u.
      EquationSpec w = spec;
      w.order = 3;
      return spec.dim == 1 ? levi_check_m3(w, LeviLevel::LC1, opt) : levi_check_m3_nd(w, opt);
    }
  }
}

// Coercive minorant of 3<Qv,v> used to weigh the zero-order energy term:
//   1/2 (sum a_k v_k)^2 + 2 sum a_k v_{n+k}^2 + v_last^2
// on the order-3 block (shifted past the zero block for order 4).
inline double lower_bound_energy_form(const FirstOrderSystem& system, std::size_t p, const Eigen::VectorXd& v) {
  if (system.kind == SystemKind::M2) throw ArgumentError("minorant is defined for order-3 and order-4 systems");
  const int n = system.dim;
  const int o = system.kind == SystemKind::M4 ? n : 0;
  if (v.size() != system.N) throw ArgumentError("minorant: vector size mismatch");
  // a_k is the (last, n+k) entry of A_k in both layouts.
  double s = 0.0, diag = 0.0;
  for (int k = 0; k < n; ++k) {
    const double ak = system.A[k].at(system.N - 1, o + n + k, p);
    s += ak * v(o + k);
    diag += ak * v(o + n + k) * v(o + n + k);
  }
  const double last = v(system.N - 1);
  return 0.5 * s * s + 2.0 * diag + last * last;
}

// Matrix of the minorant at point p (so minorant = v^T M v).
inline Eigen::MatrixXd minorant_matrix(const FirstOrderSystem& system, std::size_t p) {
  const int n = system.dim;
  const int N = system.N;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(N, N);
  if (system.kind == SystemKind::M2) return system.Q.dense(p);
  const int o = system.kind == SystemKind::M4 ? n : 0;
  Eigen::VectorXd a(n);
  for (int k = 0; k < n; ++k) a(k) = system.A[k].at(N - 1, o + n + k, p);
  M.block(o, o, n, n) = 0.5 * a * a.transpose();
  for (int k = 0; k < n; ++k) M(o + n + k, o + n + k) = 2.0 * a(k);
  M(N - 1, N - 1) = 1.0;
  return M;
}

}  // namespace weakhyp
