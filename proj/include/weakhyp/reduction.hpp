#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "weakhyp/coefficient.hpp"
#include "weakhyp/equation.hpp"
#include "weakhyp/errors.hpp"
#include "weakhyp/field.hpp"
#include "weakhyp/grid.hpp"

namespace weakhyp {

enum class SystemKind { M2, M3, M4, Family2m };

inline const char* to_string(SystemKind k) {
  switch (k) {
    case SystemKind::M2: return "m2";
    case SystemKind::M3: return "m3";
    case SystemKind::M4: return "m4";
    case SystemKind::Family2m: return "family_2m";
  }
  return "?";
}

// Source term d^alpha f placed in one component of one block.
struct ForcingTerm {
  int block = 0;
  int component = 0;
  CoefficientFunction f;      // already differentiated
  std::vector<int> alpha;     // applied derivative axes, for bookkeeping
};

// Source term M * (d^gamma U) placed in one block, where U is the base
// unknown and d^gamma U is a block of the level-|gamma| state.
struct CouplingTerm {
  int block = 0;
  MatrixField M;
  std::vector<int> gamma;
};

// One N x N block of the zero-order coefficient at a given level.
struct BlockEntry {
  int row = 0;
  int col = 0;
  MatrixField M;
};

// d_t U = sum_k A_k d_k U + B U + F on a grid. At level L the unknown stacks
// n^L blocks of size N (all L-th order spatial derivatives of the base
// unknown); A_k and Q act blockwise, B is stored by blocks.
struct FirstOrderSystem {
  SystemKind kind = SystemKind::M2;
  int equation_order = 2;
  int dim = 1;
  int N = 0;
  int level = 0;
  std::shared_ptr<const Grid> grid;
  std::vector<MatrixField> A;  // N x N each
  MatrixField Q;               // N x N
  std::vector<BlockEntry> B;
  std::vector<ForcingTerm> forcing;
  std::vector<CouplingTerm> coupling;
  GridFunction U0;
  std::string provenance;
  double eps_reg = 0.0;
  // u is recovered by integrating component `recovery_component` in time
  // `recovery_steps` times, seeded by recovery_seeds (innermost first).
  int recovery_component = 0;
  int recovery_steps = 0;
  std::vector<CoefficientFunction> recovery_seeds;
  std::vector<std::string> warnings;

  int blocks() const {
    int b = 1;
    for (int l = 0; l < level; ++l) b *= dim;
    return b;
  }
  int size() const { return N * blocks(); }

  // Base zero-order coefficient (the single level-0 block).
  const MatrixField& base_B() const { return B.front().M; }

  // Materialized (block-diagonal) principal matrix for axis k.
  MatrixField full_A(int k) const { return A[k].block_diagonal(blocks()); }
  MatrixField full_Q() const { return Q.block_diagonal(blocks()); }
  MatrixField full_B() const {
    MatrixField out(grid, size(), size());
    for (const auto& b : B) b.M.place_into(out, b.row * N, b.col * N);
    return out;
  }
};

// Gradient-augmented hierarchy: levels[0] is the base system, levels[L] the
// system for the L-th spatial derivatives.
struct AugmentedSystem {
  std::vector<FirstOrderSystem> levels;

  int level() const { return static_cast<int>(levels.size()) - 1; }
  const FirstOrderSystem& base() const { return levels.front(); }
  const FirstOrderSystem& top() const { return levels.back(); }
  MatrixField Atilde(int k) const { return top().full_A(k); }
  MatrixField Btilde() const { return top().full_B(); }
  MatrixField Qtilde() const { return top().full_Q(); }
};

namespace detail {

inline Field one(const std::shared_ptr<const Grid>& g) { return Field::constant(g, 1.0); }

inline Field sample_principal(const EquationSpec& spec, int i, const std::shared_ptr<const Grid>& g,
                              double eps_reg) {
  Field a = spec.principal[i].sample(g, 2);
  if (eps_reg != 0.0) a = a + Field::constant(g, eps_reg * eps_reg);
  return a;
}

inline Field sample_lower(const EquationSpec& spec, const std::string& name,
                          const std::shared_ptr<const Grid>& g) {
  return spec.lower_term(name).sample(g, 2);
}

inline std::string axis_name(const std::string& prefix, int i) { return prefix + std::to_string(i + 1); }

// Order-3 block symmetriser on 2n+1 unknowns, placed at offset `o`:
// (1/3) [[a a^T, 0, -a], [0, diag(2a), 0], [-a^T, 0, 3]].
inline void place_m3_symmetriser(MatrixField& q, const std::vector<Field>& a, int o) {
  const int n = static_cast<int>(a.size());
  const double third = 1.0 / 3.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) q.add(o + i, o + j, third * (a[i] * a[j]));
    q.add(o + n + i, o + n + i, (2.0 * third) * a[i]);
    q.add(o + i, o + 2 * n, -third * a[i]);
    q.add(o + 2 * n, o + i, -third * a[i]);
  }
  q.add(o + 2 * n, o + 2 * n, Field::constant(q.grid_ptr(), 1.0));
}

inline std::vector<double> sampled(const CoefficientFunction& c, const Grid& g) { return c.values(g, 0.0); }

// Spectral d^alpha of sampled values; alpha lists axes.
inline std::vector<double> spectral_partial(std::vector<double> v, const SpectralOps& ops,
                                            const std::vector<int>& alpha) {
  std::vector<double> tmp(v.size());
  for (int axis : alpha) {
    ops.derivative(v, tmp, axis, 1);
    v.swap(tmp);
  }
  return v;
}

// Relative mismatch between the coarse-grid spectral derivative and the
// fine-grid one at shared points: the resolution-doubling accuracy estimate.
inline double doubling_error(const CoefficientFunction& g, const Grid& coarse, int axis, int order) {
  if (order == 0) return 0.0;
  const Grid fine = coarse.refined(2);
  std::vector<double> dc(coarse.size()), df(fine.size());
  SpectralOps(coarse).derivative(g.values(coarse), dc, axis, order);
  SpectralOps(fine).derivative(g.values(fine), df, axis, order);
  double err = 0.0, scale = 0.0;
  for (std::size_t p = 0; p < coarse.size(); ++p) {
    auto mi = coarse.multi_index(p);
    std::size_t q = 0;
    for (int a = 0; a < coarse.dim(); ++a) q = q * fine.points(a) + 2 * mi[a];
    err = std::max(err, std::abs(dc[p] - df[q]));
  }
  for (double v : df) scale = std::max(scale, std::abs(v));
  return scale > 0.0 ? err / scale : 0.0;
}

inline void check_data_smoothness(FirstOrderSystem& s, const CoefficientFunction& g, int datum,
                                  int order) {
  if (g.is_zero() || order == 0) return;
  const double tol = 1e-6;
  for (int a = 0; a < s.dim; ++a) {
    const double e = g.is_analytic() ? doubling_error(g, *s.grid, a, order)
                                     : g.differentiation_error_estimate(*s.grid);
    if (e > tol) {
      s.warnings.push_back("g" + std::to_string(datum) + ": derivative of order " +
                           std::to_string(order) + " along x" + std::to_string(a + 1) +
                           " changes by " + std::to_string(e) + " (relative) under grid doubling");
      return;
    }
  }
}

inline void check_compact_support(const EquationSpec& spec, const Grid& g, double max_speed) {
  if (spec.domain != Domain::Compact) return;
  const double margin = max_speed * spec.T;
  for (int j = 0; j < static_cast<int>(spec.data.size()); ++j) {
    const auto v = spec.data[j].values(g);
    double peak = 0.0;
    for (double x : v) peak = std::max(peak, std::abs(x));
    if (peak == 0.0) continue;
    for (std::size_t p = 0; p < g.size(); ++p) {
      if (std::abs(v[p]) <= 1e-12 * peak) continue;
      for (int a = 0; a < g.dim(); ++a) {
        const double x = g.coordinates(a)[p] - g.origin(a);
        if (x < margin || x > g.length(a) - g.spacing(a) - margin) {
          throw ArgumentError("g" + std::to_string(j) + " is not supported inside the box with margin " +
                              std::to_string(margin) + " = max speed * T");
        }
      }
    }
  }
}

inline double max_speed(const std::vector<Field>& a) {
  double s = 0.0;
  for (const auto& f : a) s = std::max(s, f.sup_abs());
  return std::sqrt(s);
}

// Assembles U0 for an order-3 layout from data (w0, w1, w2).
inline void set_m3_initial(FirstOrderSystem& s, const CoefficientFunction& w0,
                           const CoefficientFunction& w1, const CoefficientFunction& w2) {
  const int n = s.dim;
  const SpectralOps ops(*s.grid);
  const auto v0 = sampled(w0, *s.grid), v1 = sampled(w1, *s.grid);
  s.U0 = GridFunction(s.grid, s.N);
  for (int k = 0; k < n; ++k) {
    auto d2 = spectral_partial(v0, ops, {k, k});
    std::copy(d2.begin(), d2.end(), s.U0.component(k).begin());
    auto d1 = spectral_partial(v1, ops, {k});
    std::copy(d1.begin(), d1.end(), s.U0.component(n + k).begin());
  }
  const auto v2 = sampled(w2, *s.grid);
  std::copy(v2.begin(), v2.end(), s.U0.component(2 * n).begin());
}

inline FirstOrderSystem m3_system(const EquationSpec& spec, const std::shared_ptr<const Grid>& g,
                                  double eps_reg, const std::vector<Field>& a,
                                  const std::vector<Field>& b1, const std::vector<Field>& b2,
                                  const Field& b3) {
  const int n = spec.dim;
  FirstOrderSystem s;
  s.dim = n;
  s.N = 2 * n + 1;
  s.grid = g;
  s.eps_reg = eps_reg;
  for (int k = 0; k < n; ++k) {
    MatrixField ak(g, s.N, s.N);
    ak.add(k, n + k, one(g));
    ak.add(n + k, 2 * n, one(g));
    ak.add(2 * n, n + k, a[k]);
    s.A.push_back(std::move(ak));
  }
  MatrixField b(g, s.N, s.N);
  for (int k = 0; k < n; ++k) {
    b.add(2 * n, k, -b1[k]);
    b.add(2 * n, n + k, -b2[k]);
  }
  b.add(2 * n, 2 * n, -b3);
  s.B.push_back({0, 0, std::move(b)});
  s.Q = MatrixField(g, s.N, s.N);
  place_m3_symmetriser(s.Q, a, 0);
  s.forcing.push_back({0, 2 * n, spec.forcing, {}});
  return s;
}

}  // namespace detail

// Order 2: U = (u, d_1 u, ..., d_n u, d_t u), N = n + 2.
inline FirstOrderSystem reduce_m2(const EquationSpec& spec, std::shared_ptr<const Grid> g,
                                  double eps_reg = 0.0) {
  validate(spec);
  if (spec.order != 2) throw ArgumentError("reduce_m2 needs an order-2 equation");
  if (g->dim() != spec.dim) throw ArgumentError("grid dimension does not match the equation");
  const int n = spec.dim;
  FirstOrderSystem s;
  s.kind = SystemKind::M2;
  s.equation_order = 2;
  s.dim = n;
  s.N = n + 2;
  s.grid = g;
  s.eps_reg = eps_reg;
  const int last = n + 1;
  std::vector<Field> a;
  for (int i = 0; i < n; ++i) a.push_back(detail::sample_principal(spec, i, g, eps_reg));
  for (int i = 0; i < n; ++i) {
    MatrixField ai(g, s.N, s.N);
    ai.add(1 + i, last, detail::one(g));
    ai.add(last, 1 + i, a[i]);
    s.A.push_back(std::move(ai));
  }
  MatrixField b(g, s.N, s.N);
  b.add(0, last, detail::one(g));
  b.add(last, 0, -detail::sample_lower(spec, "d", g));
  for (int i = 0; i < n; ++i) b.add(last, 1 + i, -detail::sample_lower(spec, detail::axis_name("b", i), g));
  b.add(last, last, -detail::sample_lower(spec, "c", g));
  s.B.push_back({0, 0, std::move(b)});
  s.Q = MatrixField(g, s.N, s.N);
  s.Q.add(0, 0, detail::one(g));
  for (int i = 0; i < n; ++i) s.Q.add(1 + i, 1 + i, a[i]);
  s.Q.add(last, last, detail::one(g));
  s.forcing.push_back({0, last, spec.forcing, {}});

  detail::check_compact_support(spec, *g, detail::max_speed(a));
  const SpectralOps ops(*g);
  const auto g0 = detail::sampled(spec.datum(0), *g);
  s.U0 = GridFunction(g, s.N);
  std::copy(g0.begin(), g0.end(), s.U0.component(0).begin());
  for (int i = 0; i < n; ++i) {
    const auto d = detail::spectral_partial(g0, ops, {i});
    std::copy(d.begin(), d.end(), s.U0.component(1 + i).begin());
  }
  const auto g1 = detail::sampled(spec.datum(1), *g);
  std::copy(g1.begin(), g1.end(), s.U0.component(last).begin());
  detail::check_data_smoothness(s, spec.datum(0), 0, 1);

  s.recovery_component = 0;
  s.recovery_steps = 0;
  s.provenance = "order-2 reduction: U = (u, grad u, d_t u), N = n+2, Q = diag(1, a_1..a_n, 1)";
  return s;
}

// Order 3: U = (d_k^2 u, d_k d_t u, d_t^2 u), N = 2n + 1.
inline FirstOrderSystem reduce_m3(const EquationSpec& spec, std::shared_ptr<const Grid> g,
                                  double eps_reg = 0.0) {
  validate(spec);
  if (spec.order != 3) throw ArgumentError("reduce_m3 needs an order-3 equation");
  if (g->dim() != spec.dim) throw ArgumentError("grid dimension does not match the equation");
  const int n = spec.dim;
  std::vector<Field> a, b1, b2;
  for (int i = 0; i < n; ++i) {
    a.push_back(detail::sample_principal(spec, i, g, eps_reg));
    b1.push_back(detail::sample_lower(spec, detail::axis_name("b1_", i), g));
    b2.push_back(detail::sample_lower(spec, detail::axis_name("b2_", i), g));
  }
  FirstOrderSystem s = detail::m3_system(spec, g, eps_reg, a, b1, b2, detail::sample_lower(spec, "b3", g));
  s.kind = SystemKind::M3;
  s.equation_order = 3;
  detail::check_compact_support(spec, *g, detail::max_speed(a));
  detail::set_m3_initial(s, spec.datum(0), spec.datum(1), spec.datum(2));
  detail::check_data_smoothness(s, spec.datum(0), 0, 2);
  detail::check_data_smoothness(s, spec.datum(1), 1, 1);
  s.recovery_component = 2 * n;
  s.recovery_steps = 2;
  s.recovery_seeds = {spec.datum(1), spec.datum(0)};
  s.provenance = "order-3 reduction: U = (d_k^2 u, d_k d_t u, d_t^2 u), N = 2n+1, block symmetriser (S, D, C)";
  return s;
}

// Order 4: U = (d_k^3 u, d_t d_k^2 u, d_t^2 d_k u, d_t^3 u), N = 3n + 1.
inline FirstOrderSystem reduce_m4(const EquationSpec& spec, std::shared_ptr<const Grid> g,
                                  double eps_reg = 0.0) {
  validate(spec);
  if (spec.order != 4) throw ArgumentError("reduce_m4 needs an order-4 equation");
  if (g->dim() != spec.dim) throw ArgumentError("grid dimension does not match the equation");
  const int n = spec.dim;
  FirstOrderSystem s;
  s.kind = SystemKind::M4;
  s.equation_order = 4;
  s.dim = n;
  s.N = 3 * n + 1;
  s.grid = g;
  s.eps_reg = eps_reg;
  const int last = 3 * n;
  std::vector<Field> a;
  for (int k = 0; k < n; ++k) a.push_back(detail::sample_principal(spec, k, g, eps_reg));
  for (int k = 0; k < n; ++k) {
    MatrixField ak(g, s.N, s.N);
    ak.add(k, n + k, detail::one(g));
    ak.add(n + k, 2 * n + k, detail::one(g));
    ak.add(2 * n + k, last, detail::one(g));
    ak.add(last, 2 * n + k, a[k]);
    s.A.push_back(std::move(ak));
  }
  MatrixField b(g, s.N, s.N);
  for (int k = 0; k < n; ++k) {
    b.add(last, k, -detail::sample_lower(spec, detail::axis_name("b", k), g));
    b.add(last, n + k, -detail::sample_lower(spec, detail::axis_name("b2_", k), g));
    b.add(last, 2 * n + k, -detail::sample_lower(spec, detail::axis_name("b3_", k), g));
  }
  b.add(last, last, -detail::sample_lower(spec, "b4", g));
  s.B.push_back({0, 0, std::move(b)});
  s.Q = MatrixField(g, s.N, s.N);
  detail::place_m3_symmetriser(s.Q, a, n);
  s.forcing.push_back({0, last, spec.forcing, {}});

  detail::check_compact_support(spec, *g, detail::max_speed(a));
  const SpectralOps ops(*g);
  s.U0 = GridFunction(g, s.N);
  for (int j = 0; j < 3; ++j) {
    const auto v = detail::sampled(spec.datum(j), *g);
    for (int k = 0; k < n; ++k) {
      const auto d = detail::spectral_partial(v, ops, std::vector<int>(3 - j, k));
      std::copy(d.begin(), d.end(), s.U0.component(j * n + k).begin());
    }
    detail::check_data_smoothness(s, spec.datum(j), j, 3 - j);
  }
  const auto g3 = detail::sampled(spec.datum(3), *g);
  std::copy(g3.begin(), g3.end(), s.U0.component(last).begin());
  s.recovery_component = last;
  s.recovery_steps = 3;
  s.recovery_seeds = {spec.datum(2), spec.datum(1), spec.datum(0)};
  s.provenance = "order-4 reduction: U = (d_k^3 u, d_t d_k^2 u, d_t^2 d_k u, d_t^3 u), N = 3n+1, Q = blockdiag(0_n, Q_{2n+1})";
  return s;
}

// Even order 2m >= 4 in the family d_t^{2m} u - sum a_i d_t^{2m-2} d_i^2 u
// + b1_i d_t^{2m-3} d_i^2 u + b2_i d_t^{2m-2} d_i u + b3 d_t^{2m-1} u = f:
// the order-3 system for w = d_t^{2m-3} u, plus 2m-1 time integrations back to u.
// Order-4 input written with the order-4 names is accepted when b_i = 0.
inline FirstOrderSystem reduce_2m(const EquationSpec& spec, std::shared_ptr<const Grid> g,
                                  double eps_reg = 0.0) {
  validate(spec);
  const int order = spec.order;
  if (order < 4 || order % 2 != 0) throw UnsupportedStructure("reduce_2m needs an even order >= 4");
  if (g->dim() != spec.dim) throw ArgumentError("grid dimension does not match the equation");
  const int n = spec.dim;
  std::vector<std::string> b1_names, b2_names;
  std::string b3_name = "b3";
  if (order == 4) {
    for (int i = 0; i < n; ++i) {
      if (!spec.lower_term(detail::axis_name("b", i)).is_zero()) {
        throw UnsupportedStructure("order-4 input with a d_i^3 u term is outside the 2m family");
      }
      b1_names.push_back(detail::axis_name("b2_", i));
      b2_names.push_back(detail::axis_name("b3_", i));
    }
    b3_name = "b4";
  } else {
    for (int i = 0; i < n; ++i) {
      b1_names.push_back(detail::axis_name("b1_", i));
      b2_names.push_back(detail::axis_name("b2_", i));
    }
  }
  std::vector<Field> a, b1, b2;
  for (int i = 0; i < n; ++i) {
    a.push_back(detail::sample_principal(spec, i, g, eps_reg));
    b1.push_back(detail::sample_lower(spec, b1_names[i], g));
    b2.push_back(detail::sample_lower(spec, b2_names[i], g));
  }
  FirstOrderSystem s = detail::m3_system(spec, g, eps_reg, a, b1, b2, detail::sample_lower(spec, b3_name, g));
  s.kind = SystemKind::Family2m;
  s.equation_order = order;
  detail::check_compact_support(spec, *g, detail::max_speed(a));
  const int shift = order - 3;
  detail::set_m3_initial(s, spec.datum(shift), spec.datum(shift + 1), spec.datum(shift + 2));
  s.recovery_component = 2 * n;
  s.recovery_steps = order - 1;
  for (int j = order - 2; j >= 0; --j) s.recovery_seeds.push_back(spec.datum(j));
  s.provenance = "order-" + std::to_string(order) +
                 " family through w = d_t^" + std::to_string(shift) +
                 " u: order-3 reduction of w, N = 2n+1, u recovered by " + std::to_string(order - 1) +
                 " time integrations";
  return s;
}

inline FirstOrderSystem reduce(const EquationSpec& spec, std::shared_ptr<const Grid> g, double eps_reg = 0.0) {
  validate(spec);
  switch (spec.order) {
    case 2: return reduce_m2(spec, std::move(g), eps_reg);
    case 3: return reduce_m3(spec, std::move(g), eps_reg);
    case 4: return reduce_m4(spec, std::move(g), eps_reg);
    default: return reduce_2m(spec, std::move(g), eps_reg);
  }
}

// Block index of d^gamma U inside the level-|gamma| unknown, gamma listing
// derivative axes innermost first.
inline int block_index(const std::vector<int>& gamma, int n) {
  int idx = 0, scale = 1;
  for (int g : gamma) {
    idx += g * scale;
    scale *= n;
  }
  return idx;
}

namespace detail {

// Inverse of block_index for a level-L unknown.
inline std::vector<int> decode_block(int b, int level, int n) {
  std::vector<int> gamma(level);
  for (int l = 0; l < level; ++l) {
    gamma[l] = b % n;
    b /= n;
  }
  return gamma;
}

// Next level: differentiate the level-L system along every axis j. Block
// (j, b) of the new unknown is d_j of block b of the old one.
inline FirstOrderSystem differentiate(const FirstOrderSystem& s) {
  const int n = s.dim;
  const int old_blocks = s.blocks();
  FirstOrderSystem t = s;
  t.level = s.level + 1;
  t.B.clear();
  t.forcing.clear();
  t.coupling.clear();
  t.warnings.clear();
  const auto target = [&](int j, int b) { return j * old_blocks + b; };
  for (int j = 0; j < n; ++j) {
    // d_j A_i acting on block b of d_i U_old lands in block (j, b) from block (i, b).
    for (int i = 0; i < n; ++i) {
      const MatrixField dA = s.A[i].derivative(j);
      if (dA.empty()) continue;
      for (int b = 0; b < old_blocks; ++b) t.B.push_back({target(j, b), target(i, b), dA});
    }
    for (const auto& e : s.B) {
      t.B.push_back({target(j, e.row), target(j, e.col), e.M});
      // (d_j B_old) U_old: U_old block c is d^{gamma_c} U at level L.
      const MatrixField dB = e.M.derivative(j);
      if (!dB.empty()) t.coupling.push_back({target(j, e.row), dB, decode_block(e.col, s.level, s.dim)});
    }
    for (const auto& f : s.forcing) {
      ForcingTerm g = f;
      g.block = target(j, f.block);
      g.f = f.f.derivative(j);
      g.alpha.push_back(j);
      if (!g.f.is_zero()) t.forcing.push_back(std::move(g));
    }
    for (const auto& c : s.coupling) {
      const MatrixField dM = c.M.derivative(j);
      if (!dM.empty()) t.coupling.push_back({target(j, c.block), dM, c.gamma});
      auto gamma = c.gamma;
      gamma.push_back(j);
      t.coupling.push_back({target(j, c.block), c.M, gamma});
    }
  }
  // Merge B blocks that share a position.
  std::vector<BlockEntry> merged;
  for (auto& e : t.B) {
    auto it = std::find_if(merged.begin(), merged.end(),
                           [&](const BlockEntry& m) { return m.row == e.row && m.col == e.col; });
    if (it == merged.end()) merged.push_back(std::move(e));
    else it->M = it->M + e.M;
  }
  t.B = std::move(merged);
  // Initial state: spatial derivatives of the previous level's initial state.
  const SpectralOps ops(*s.grid);
  t.U0 = GridFunction(s.grid, t.size());
  for (int j = 0; j < n; ++j) {
    for (int c = 0; c < s.size(); ++c) {
      ops.derivative(s.U0.component(c), t.U0.component(j * s.size() + c), j, 1);
    }
  }
  t.provenance = s.provenance + "; differentiated to level " + std::to_string(t.level);
  return t;
}

}  // namespace detail

// Completed-square form of 3<Qv,v> for the order-3 block (shifted by n for
// order 4): |sum a_k v_k - v_last|^2 + 2 sum a_k v_{n+k}^2 + 2 v_last^2.
inline double completed_square_form(const FirstOrderSystem& s, std::size_t p, const Eigen::VectorXd& v) {
  if (s.kind == SystemKind::M2) throw ArgumentError("completed_square_form needs an order-3 block");
  const int n = s.dim;
  const int o = s.kind == SystemKind::M4 ? n : 0;
  const int last = s.N - 1;
  double lin = -v(last), diag = 0.0;
  for (int k = 0; k < n; ++k) {
    const double ak = s.A[k].at(last, o + n + k, p);
    lin += ak * v(o + k);
    diag += ak * v(o + n + k) * v(o + n + k);
  }
  return lin * lin + 2.0 * diag + 2.0 * v(last) * v(last);
}

inline AugmentedSystem augment(const FirstOrderSystem& system, int level) {
  if (level < 1) throw ArgumentError("augment needs level >= 1");
  if (level > 2) throw UnsupportedStructure("augmentation is implemented up to level 2");
  if (system.level != 0) throw ArgumentError("augment expects a base system");
  AugmentedSystem aug;
  aug.levels.push_back(system);
  for (int l = 1; l <= level; ++l) aug.levels.push_back(detail::differentiate(aug.levels.back()));
  return aug;
}

}  // namespace weakhyp
