#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "weakhyp/conditions.hpp"
#include "weakhyp/errors.hpp"
#include "weakhyp/grid.hpp"
#include "weakhyp/reduction.hpp"
#include "weakhyp/solver.hpp"

namespace weakhyp {

struct EnergySample {
  double t = 0.0;
  double E = 0.0;
  double principal = 0.0;  // -sum_k (d_k(Q A_k) U, U)
  double lot = 0.0;        // ((QB + B^T Q) U, U)
  double source = 0.0;     // 2 (QU, F)
  double f_norm_sq = 0.0;  // ||F||^2
};

struct EnergyTrace {
  int level = 0;
  std::vector<double> times, E, term_principal, term_lot, term_source, dE_dt_numeric, f_norm_sq;
  bool blew_up = false;
  double blowup_time = std::numeric_limits<double>::quiet_NaN();

  std::size_t size() const { return times.size(); }
  double max_E() const { return E.empty() ? 0.0 : *std::max_element(E.begin(), E.end()); }
  // |dE/dt - sum of the three terms| at sample i.
  double decomposition_residual(std::size_t i) const {
    return std::abs(dE_dt_numeric[i] - (term_principal[i] + term_lot[i] + term_source[i]));
  }
};

// First derivative at nodes[i] from the (up to) five nearest samples, via
// Lagrange basis derivatives. On a uniform grid this is the usual fourth-order
// centered stencil, with one-sided stencils at the ends.
inline std::vector<double> differentiate_series(const std::vector<double>& t, const std::vector<double>& y) {
  const std::size_t n = t.size();
  std::vector<double> d(n, 0.0);
  if (n < 2) return d;
  const std::size_t w = std::min<std::size_t>(5, n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t lo = i >= w / 2 ? i - w / 2 : 0;
    if (lo + w > n) lo = n - w;
    double acc = 0.0;
    for (std::size_t j = lo; j < lo + w; ++j) {
      double lj = 0.0;
      for (std::size_t m = lo; m < lo + w; ++m) {
        if (m == j) continue;
        double prod = 1.0 / (t[j] - t[m]);
        for (std::size_t l = lo; l < lo + w; ++l) {
          if (l == j || l == m) continue;
          prod *= (t[i] - t[l]) / (t[j] - t[l]);
        }
        lj += prod;
      }
      acc += lj * y[j];
    }
    d[i] = acc;
  }
  return d;
}

// Evaluates the energy of one level of an augmented stack and its decomposition.
class EnergyEvaluator {
 public:
  EnergyEvaluator(const AugmentedSystem& system, int level) : system_(system), level_(level) {
    if (level < 0 || level > system.level()) throw ArgumentError("energy level out of range");
    const auto& s = system.levels[level];
    for (const auto& e : s.Q.entries()) Q_.emplace_back(e.row, e.col, e.f);
    MatrixField S(s.grid, s.N, s.N);
    for (int k = 0; k < s.dim; ++k) S = S + (s.Q * s.A[k]).derivative(k);
    for (const auto& e : S.entries()) S_.emplace_back(e.row, e.col, e.f);
    for (const auto& b : s.B) {
      detail::SampledBlock blk{b.row, level, b.col, {}};
      const MatrixField qb = s.Q * b.M;
      for (const auto& e : qb.entries()) blk.entries.emplace_back(e.row, e.col, e.f);
      QB_.push_back(std::move(blk));
    }
    for (const auto& c : s.coupling) {
      detail::SampledBlock blk{c.block, static_cast<int>(c.gamma.size()), block_index(c.gamma, s.dim), {}};
      for (const auto& e : c.M.entries()) blk.entries.emplace_back(e.row, e.col, e.f);
      coupling_.push_back(std::move(blk));
    }
  }

  // Source vector F of this level at the snapshot (forcing plus couplings to lower levels).
  GridFunction source(const Snapshot& snap) const {
    const auto& s = system_.levels[level_];
    GridFunction F(s.grid, s.size());
    for (const auto& f : s.forcing) {
      const auto v = f.f.values(*s.grid, snap.t);
      auto dst = F.component(f.block * s.N + f.component);
      for (std::size_t p = 0; p < v.size(); ++p) dst[p] += v[p];
    }
    for (const auto& blk : coupling_) {
      const auto& src = snap.levels.at(blk.src_level);
      const int srcN = system_.levels[blk.src_level].N;
      for (const auto& e : blk.entries) {
        e.apply(F.component(blk.row_block * s.N + e.row), src.component(blk.src_block * srcN + e.col));
      }
    }
    return F;
  }

  EnergySample evaluate(const Snapshot& snap) const {
    const auto& s = system_.levels[level_];
    const auto& U = snap.levels.at(level_);
    const double dV = s.grid->cell_volume();
    const std::size_t P = s.grid->size();
    const auto form = [&](const detail::SampledEntry& e, std::span<const double> x, std::span<const double> y) {
      double acc = 0.0;
      if (e.is_const) {
        for (std::size_t p = 0; p < P; ++p) acc += x[p] * y[p];
        return e.c * acc;
      }
      for (std::size_t p = 0; p < P; ++p) acc += e.v[p] * x[p] * y[p];
      return acc;
    };
    EnergySample out;
    out.t = snap.t;
    const GridFunction F = source(snap);
    for (int b = 0; b < s.blocks(); ++b) {
      const int o = b * s.N;
      for (const auto& e : Q_) {
        out.E += form(e, U.component(o + e.col), U.component(o + e.row));
        out.source += 2.0 * form(e, U.component(o + e.col), F.component(o + e.row));
      }
      for (const auto& e : S_) out.principal -= form(e, U.component(o + e.col), U.component(o + e.row));
    }
    for (const auto& blk : QB_) {
      for (const auto& e : blk.entries) {
        out.lot += 2.0 * form(e, U.component(blk.src_block * s.N + e.col), U.component(blk.row_block * s.N + e.row));
      }
    }
    for (double v : F.values()) out.f_norm_sq += v * v;
    out.E *= dV;
    out.source *= dV;
    out.principal *= dV;
    out.lot *= dV;
    out.f_norm_sq *= dV;
    return out;
  }

 private:
  const AugmentedSystem& system_;
  int level_;
  std::vector<detail::SampledEntry> Q_, S_;
  std::vector<detail::SampledBlock> QB_, coupling_;
};

inline EnergyTrace energy(const std::vector<Snapshot>& snapshots, const AugmentedSystem& system, int level = 0) {
  EnergyEvaluator ev(system, level);
  EnergyTrace tr;
  tr.level = level;
  for (const auto& snap : snapshots) {
    const auto s = ev.evaluate(snap);
    tr.times.push_back(s.t);
    tr.E.push_back(s.E);
    tr.term_principal.push_back(s.principal);
    tr.term_lot.push_back(s.lot);
    tr.term_source.push_back(s.source);
    tr.f_norm_sq.push_back(s.f_norm_sq);
  }
  tr.dE_dt_numeric = differentiate_series(tr.times, tr.E);
  return tr;
}

inline EnergyTrace energy(const SolveResult& result, const AugmentedSystem& system, int level = 0) {
  EnergyTrace tr = energy(result.snapshots, system, level);
  tr.blew_up = result.blew_up;
  tr.blowup_time = result.blowup_time;
  return tr;
}

struct GronwallFit {
  bool valid = false;
  std::string failure;
  double c_prime = 0.0;
  std::vector<double> bound_curve;
  double margin = std::numeric_limits<double>::infinity();
  // Form with the integral of E (augmented systems).
  bool augmented = false;
  double C_integral = 0.0;
  std::vector<double> bound_curve_integral;
  double margin_integral = std::numeric_limits<double>::infinity();
  double blowup_time = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline std::vector<double> cumulative_trapezoid(const std::vector<double>& t, const std::vector<double>& y) {
  std::vector<double> out(t.size(), 0.0);
  for (std::size_t i = 1; i < t.size(); ++i) out[i] = out[i - 1] + 0.5 * (t[i] - t[i - 1]) * (y[i] + y[i - 1]);
  return out;
}

inline double min_margin(const std::vector<double>& bound, const std::vector<double>& E, double floor) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < E.size(); ++i) {
    if (E[i] > floor) m = std::min(m, bound[i] / E[i]);
  }
  return m;
}

}  // namespace detail

// Fits dE/dt <= c' E + ||f||^2 on the trace (after skipping the first
// `skip_fraction` of samples) and evaluates the resulting Gronwall bound.
inline GronwallFit gronwall_fit(const EnergyTrace& tr, bool augmented = false, double skip_fraction = 0.02) {
  GronwallFit fit;
  fit.augmented = augmented;
  if (tr.blew_up) {
    fit.failure = "blow-up";
    fit.blowup_time = tr.blowup_time;
    fit.c_prime = std::numeric_limits<double>::infinity();
    return fit;
  }
  const std::size_t n = tr.size();
  if (n < 10) {
    fit.failure = "fewer than 10 samples";
    return fit;
  }
  for (double e : tr.E) {
    if (!std::isfinite(e)) {
      fit.failure = "non-finite energy";
      fit.c_prime = std::numeric_limits<double>::infinity();
      return fit;
    }
  }
  const std::size_t skip = static_cast<std::size_t>(std::floor(skip_fraction * static_cast<double>(n)));
  const double floor = 1e-14 * std::max(tr.max_E(), std::numeric_limits<double>::min());
  const auto F = detail::cumulative_trapezoid(tr.times, tr.f_norm_sq);
  for (std::size_t i = skip; i < n; ++i) {
    if (tr.E[i] > floor) fit.c_prime = std::max(fit.c_prime, (tr.dE_dt_numeric[i] - tr.f_norm_sq[i]) / tr.E[i]);
  }
  fit.bound_curve.resize(n);
  for (std::size_t i = 0; i < n; ++i) fit.bound_curve[i] = (tr.E[0] + F[i]) * std::exp(fit.c_prime * tr.times[i]);
  fit.margin = detail::min_margin(fit.bound_curve, tr.E, floor);
  fit.valid = std::isfinite(fit.c_prime) && fit.margin >= 1.0 - 1e-9;
  if (!fit.valid) fit.failure = "bound violated: margin " + std::to_string(fit.margin);

  if (augmented) {
    const auto intE = detail::cumulative_trapezoid(tr.times, tr.E);
    for (std::size_t i = skip; i < n; ++i) {
      const double den = tr.E[i] + intE[i];
      if (den > floor) fit.C_integral = std::max(fit.C_integral, (tr.dE_dt_numeric[i] - tr.f_norm_sq[i]) / den);
    }
    // Comparison system z' = C (z + Z) + s, Z' = z, z(0) = E(0), by RK4 with
    // linear interpolation of s between samples.
    fit.bound_curve_integral.assign(n, 0.0);
    fit.bound_curve_integral[0] = tr.E[0];
    double z = tr.E[0], Z = 0.0;
    const double C = fit.C_integral;
    for (std::size_t i = 1; i < n; ++i) {
      const double t0 = tr.times[i - 1], t1 = tr.times[i];
      const int sub = 16;
      const double h = (t1 - t0) / sub;
      const auto s_at = [&](double t) {
        const double w = (t - t0) / (t1 - t0);
        return (1.0 - w) * tr.f_norm_sq[i - 1] + w * tr.f_norm_sq[i];
      };
      for (int k = 0; k < sub; ++k) {
        const double t = t0 + k * h;
        const auto f = [&](double tt, double zz, double ZZ, double& dz, double& dZ) {
          dz = C * (zz + ZZ) + s_at(tt);
          dZ = zz;
        };
        double k1z, k1Z, k2z, k2Z, k3z, k3Z, k4z, k4Z;
        f(t, z, Z, k1z, k1Z);
        f(t + h / 2, z + h / 2 * k1z, Z + h / 2 * k1Z, k2z, k2Z);
        f(t + h / 2, z + h / 2 * k2z, Z + h / 2 * k2Z, k3z, k3Z);
        f(t + h, z + h * k3z, Z + h * k3Z, k4z, k4Z);
        z += h / 6 * (k1z + 2 * k2z + 2 * k3z + k4z);
        Z += h / 6 * (k1Z + 2 * k2Z + 2 * k3Z + k4Z);
      }
      fit.bound_curve_integral[i] = z;
    }
    fit.margin_integral = detail::min_margin(fit.bound_curve_integral, tr.E, floor);
  }
  return fit;
}

struct LotBoundOptions {
  std::uint64_t seed = 7;
  int random_vectors = 16;
  double t_max = 1e12;
};

struct LotBound {
  double C_sweep = 0.0;      // largest sampled ratio <Kv,v> / minorant(v)
  double C_pencil = 0.0;     // largest pencil eigenvalue on the range of the minorant
  double C_assembled = 0.0;  // constant assembled from the Levi constants
  bool unbounded = false;    // K couples to a direction the minorant does not see
  double null_direction_ratio = 0.0;
  std::vector<double> worst_point;
  std::string note;
};

namespace detail {

// Levi constants read off the system samples: sup |b1|/a, sup b2^2/a, sup |b3|
// on the order-3 block, or (D, kappa, gamma) for order 2.
struct LeviConstants {
  double lambda = 0.0, kappa = 0.0, beta = 0.0;
  double d_shift = 0.0, gamma = 0.0;
  bool cubic_term = false;  // order 4 with b_i != 0
};

inline double safe_ratio(double num, double den, double num_scale) {
  if (den > 0.0) return num / den;
  return std::abs(num) <= 1e-12 * std::max(1.0, num_scale) ? 0.0 : std::numeric_limits<double>::infinity();
}

inline LeviConstants levi_constants(const FirstOrderSystem& s) {
  LeviConstants c;
  const int n = s.dim;
  const int last = s.N - 1;
  const auto& B = s.base_B();
  const std::size_t P = s.grid->size();
  if (s.kind == SystemKind::M2) {
    for (std::size_t p = 0; p < P; ++p) {
      c.d_shift = std::max(c.d_shift, std::abs(1.0 + B.at(last, 0, p)));
      c.gamma = std::max(c.gamma, std::abs(B.at(last, last, p)));
      for (int i = 0; i < n; ++i) {
        const double b = B.at(last, 1 + i, p);
        const double a = s.A[i].at(last, 1 + i, p);
        c.kappa = std::max(c.kappa, safe_ratio(b * b, a, b * b));
      }
    }
    return c;
  }
  const int o = s.kind == SystemKind::M4 ? n : 0;
  for (std::size_t p = 0; p < P; ++p) {
    if (s.kind == SystemKind::M4) {
      for (int i = 0; i < n; ++i) {
        if (B.at(last, i, p) != 0.0) c.cubic_term = true;
      }
    }
    c.beta = std::max(c.beta, std::abs(B.at(last, last, p)));
    for (int i = 0; i < n; ++i) {
      const double a = s.A[i].at(last, o + n + i, p);
      const double b1 = B.at(last, o + i, p);
      const double b2 = B.at(last, o + n + i, p);
      c.lambda = std::max(c.lambda, safe_ratio(std::abs(b1), a, std::abs(b1)));
      c.kappa = std::max(c.kappa, safe_ratio(b2 * b2, a, b2 * b2));
    }
  }
  return c;
}

// Upper bound for <(QB + B^T Q) v, v> / minorant(v) from the Levi constants.
// Order 3 (and the order-4 block), with s = sum a_k v_k, q^2 = sum a_k v_{n+k}^2:
//   <Kv,v> <= (2/3)(3|v_L| + |s|)(lambda |s| + sqrt(n kappa) q + beta |v_L|),
// split by 2xy <= x^2 + y^2 against 1/2 s^2 + 2 q^2 + v_L^2.
// Order 2, against (v_0^2 + sum a_i v_i^2 + v_L^2): D + sqrt(n kappa) + 2 gamma.
inline double assembled_constant(const LeviConstants& c, const FirstOrderSystem& s) {
  const double r = std::sqrt(s.dim * c.kappa);
  if (s.kind == SystemKind::M2) return c.d_shift + r + 2.0 * c.gamma;
  if (c.cubic_term) return std::numeric_limits<double>::infinity();
  const double cs = 2.0 * (5.0 * c.lambda / 3.0 + r / 3.0 + c.beta / 3.0);
  const double cq = (2.0 / 3.0) * r;
  const double cl = c.lambda + r + 7.0 * c.beta / 3.0;
  return std::max({cs, cq, cl});
}

}  // namespace detail

// Sweeps grid points and vectors for the smallest C with
// <(QB + B^T Q)(x) v, v> <= C * minorant(x, v), where the minorant is the
// coercive lower bound of 3<Qv,v> (order 3/4) or <Qv,v> itself (order 2).
inline LotBound pointwise_lot_bound(const FirstOrderSystem& s, const LotBoundOptions& opt = {}) {
  LotBound out;
  const int N = s.N;
  const auto& B = s.base_B();
  const MatrixField QB = s.Q * B;
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal;
  std::vector<Eigen::VectorXd> randoms;
  for (int r = 0; r < opt.random_vectors; ++r) {
    Eigen::VectorXd v(N);
    for (int i = 0; i < N; ++i) v(i) = normal(rng);
    randoms.push_back(v);
  }
  const auto ratio = [](const Eigen::MatrixXd& K, const Eigen::MatrixXd& M, const Eigen::VectorXd& v) {
    const double den = v.dot(M * v);
    const double num = v.dot(K * v);
    if (den > 0.0) return num / den;
    return num > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  };
  double worst = -1.0;
  for (std::size_t p = 0; p < s.grid->size(); ++p) {
    const Eigen::MatrixXd qb = QB.dense(p);
    const Eigen::MatrixXd K = qb + qb.transpose();
    const Eigen::MatrixXd M = minorant_matrix(s, p);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    const Eigen::VectorXd ev = es.eigenvalues();
    const double mtol = 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    const double ktol = 1e-12 * std::max(1.0, K.cwiseAbs().maxCoeff());
    std::vector<int> range, null;
    for (int i = 0; i < N; ++i) (ev(i) > mtol ? range : null).push_back(i);
    Eigen::MatrixXd R(N, range.size()), Z(N, null.size());
    for (std::size_t i = 0; i < range.size(); ++i) R.col(i) = es.eigenvectors().col(range[i]) / std::sqrt(ev(range[i]));
    for (std::size_t i = 0; i < null.size(); ++i) Z.col(i) = es.eigenvectors().col(null[i]);

    std::vector<Eigen::VectorXd> candidates = randoms;
    double pencil = 0.0;
    if (!range.empty()) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ps(R.transpose() * K * R);
      pencil = ps.eigenvalues().maxCoeff();
      candidates.push_back(R * ps.eigenvectors().col(ps.eigenvalues().size() - 1));
    }
    out.C_pencil = std::max(out.C_pencil, pencil);
    bool unbounded_here = false;
    if (!null.empty()) {
      // Along r + t z with z in the null space of M the numerator grows like
      // t^2 <Kz,z> + 2t <Kr,z>: unbounded when <Kz,z> > 0, or when <Kz,z> = 0
      // and z couples to the range.
      const Eigen::MatrixXd KZ = K * Z;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> zs(Z.transpose() * KZ);
      Eigen::MatrixXd Vr(N, range.size());
      for (std::size_t i = 0; i < range.size(); ++i) Vr.col(i) = es.eigenvectors().col(range[i]);
      for (int i = 0; i < zs.eigenvalues().size(); ++i) {
        const double lam = zs.eigenvalues()(i);
        if (lam > ktol) unbounded_here = true;
        else if (lam >= -ktol && !range.empty()) {
          const Eigen::VectorXd z = Z * zs.eigenvectors().col(i);
          if ((Vr.transpose() * (K * z)).cwiseAbs().maxCoeff() > ktol) unbounded_here = true;
        }
      }
      // Adversarial vectors r +- t z along the directions the minorant does not see.
      const std::size_t base_count = candidates.size();
      for (std::size_t c = 0; c < std::min<std::size_t>(base_count, 4); ++c) {
        const Eigen::VectorXd r = candidates[base_count - 1 - c];
        for (std::size_t zi = 0; zi < null.size(); ++zi) {
          for (double t = 1.0; t <= opt.t_max * 1.0000001; t *= 10.0) {
            for (double sgn : {1.0, -1.0}) {
              const double q = ratio(K, M, r + sgn * t * Z.col(zi));
              if (q > out.null_direction_ratio) out.null_direction_ratio = q;
              if (q > out.C_sweep) {
                out.C_sweep = q;
                worst = static_cast<double>(p);
                out.worst_point = s.grid->point(p);
              }
            }
          }
        }
      }
    }
    out.unbounded = out.unbounded || unbounded_here;
    for (const auto& v : candidates) {
      const double q = ratio(K, M, v);
      if (q > out.C_sweep) {
        out.C_sweep = q;
        worst = static_cast<double>(p);
        out.worst_point = s.grid->point(p);
      }
    }
  }
  if (worst < 0.0) out.worst_point = s.grid->point(0);
  out.C_assembled = detail::assembled_constant(detail::levi_constants(s), s);
  if (out.unbounded) out.note = "lower-order terms act on a direction with zero energy: no finite constant";
  return out;
}

enum class EstimateId { L2_m2, H1_m2, Hk_m2, L2_m3, H1_m3, Hk_m3, L2_m3_nd, H1_m3_nd, Hk_m3_nd, Hk_m4 };

inline const char* to_string(EstimateId id) {
  switch (id) {
    case EstimateId::L2_m2: return "L2_m2";
    case EstimateId::H1_m2: return "H1_m2";
    case EstimateId::Hk_m2: return "Hk_m2";
    case EstimateId::L2_m3: return "L2_m3";
    case EstimateId::H1_m3: return "H1_m3";
    case EstimateId::Hk_m3: return "Hk_m3";
    case EstimateId::L2_m3_nd: return "L2_m3_nd";
    case EstimateId::H1_m3_nd: return "H1_m3_nd";
    case EstimateId::Hk_m3_nd: return "Hk_m3_nd";
    case EstimateId::Hk_m4: return "Hk_m4";
  }
  return "?";
}

inline std::optional<EstimateId> estimate_from_string(const std::string& s) {
  for (int i = 0; i <= static_cast<int>(EstimateId::Hk_m4); ++i) {
    const auto id = static_cast<EstimateId>(i);
    if (s == to_string(id)) return id;
  }
  return std::nullopt;
}

struct CertifyOptions {
  std::vector<int> resolutions{128, 256};
  int k = 2;  // Sobolev order for the Hk estimates
  SolveConfig solve;
  double eps_reg = 0.0;
  CheckOptions check;
  double stability_limit = 2.0;
  bool no_loss_variant = false;  // also evaluate the rhs without derivative loss
};

struct EstimateCertificate {
  EstimateId estimate_id = EstimateId::L2_m2;
  int k = 0;
  bool loss = true;                // rhs with the derivative-loss offsets
  std::vector<int> data_orders;    // Sobolev order used for each g_j
  std::vector<int> resolutions;
  std::vector<double> lhs, rhs, fitted_c;
  double stability_under_refinement = std::numeric_limits<double>::quiet_NaN();
  bool passes = false;
  bool refused = false;
  std::string refusal;
  bool blew_up = false;
};

namespace detail {

inline int estimate_order(EstimateId id) {
  switch (id) {
    case EstimateId::L2_m2:
    case EstimateId::H1_m2:
    case EstimateId::Hk_m2: return 2;
    case EstimateId::Hk_m4: return 4;
    default: return 3;
  }
}

inline bool estimate_multid(EstimateId id) {
  return id == EstimateId::L2_m3_nd || id == EstimateId::H1_m3_nd || id == EstimateId::Hk_m3_nd;
}

inline int estimate_k(EstimateId id, int k) {
  switch (id) {
    case EstimateId::L2_m2:
    case EstimateId::L2_m3:
    case EstimateId::L2_m3_nd: return 0;
    case EstimateId::H1_m2:
    case EstimateId::H1_m3:
    case EstimateId::H1_m3_nd: return 1;
    default: return k;
  }
}

// Sobolev order required of g_j: k + (m - 1 - j) with loss, k - j without.
inline std::vector<int> data_orders(int order, int k, bool loss) {
  std::vector<int> s;
  for (int j = 0; j < order; ++j) s.push_back(loss ? k + order - 1 - j : k - j);
  return s;
}

struct RunNorms {
  double lhs = 0.0;          // sup_t ||u||_{H^k}^2
  double f_integral = 0.0;   // int ||f||_{H^k}^2
  double f_sup = 0.0;        // sup_t ||f||_{H^{k-1}}^2
  std::vector<double> g_loss, g_noloss;
  bool blew_up = false;
};

}  // namespace detail

// Theorem right-hand side evaluated on the data: int ||f||^2_{H^k} +
// sup_t ||f||^2_{H^{k-1}} (k >= 1) + sum_j ||g_j||^2_{H^{s_j}}.
inline double certificate_rhs(const EquationSpec& spec, const Grid& grid, int k, const std::vector<int>& orders,
                              const std::vector<double>& times) {
  const SpectralOps ops(grid);
  double rhs = 0.0;
  for (int j = 0; j < spec.order; ++j) {
    if (spec.datum(j).is_zero()) continue;
    rhs += ops.sobolev_norm_squared(spec.datum(j).values(grid), orders[j]);
  }
  if (!spec.forcing.is_zero()) {
    std::vector<double> fk, fk1;
    for (double t : times) {
      const auto f = spec.forcing.values(grid, t);
      fk.push_back(ops.sobolev_norm_squared(f, k));
      fk1.push_back(k >= 1 ? ops.sobolev_norm_squared(f, k - 1) : 0.0);
    }
    rhs += detail::cumulative_trapezoid(times, fk).back();
    if (k >= 1) rhs += *std::max_element(fk1.begin(), fk1.end());
  }
  return rhs;
}

// Runs the solve at every resolution and evaluates the requested estimates
// (with and, if asked, without the derivative-loss offsets).
inline std::vector<EstimateCertificate> certify_estimates(const EquationSpec& spec, const std::vector<EstimateId>& ids,
                                                          const CertifyOptions& opt = {}) {
  validate(spec);
  for (auto id : ids) {
    const int order = detail::estimate_order(id);
    const bool nd = detail::estimate_multid(id);
    const bool ok = order == spec.order && (order != 3 || nd == (spec.dim > 1) || (nd && spec.dim == 1));
    if (!ok) {
      throw ArgumentError(std::string("estimate ") + to_string(id) + " does not match an order-" +
                          std::to_string(spec.order) + " equation in dimension " + std::to_string(spec.dim));
    }
  }
  if (opt.resolutions.empty()) throw ArgumentError("certify needs at least one resolution");

  std::vector<EstimateCertificate> certs;
  const auto make = [&](EstimateId id, bool loss) {
    EstimateCertificate c;
    c.estimate_id = id;
    c.k = detail::estimate_k(id, opt.k);
    c.loss = loss;
    c.data_orders = detail::data_orders(spec.order, c.k, loss);
    c.resolutions = opt.resolutions;
    return c;
  };
  for (auto id : ids) {
    certs.push_back(make(id, true));
    if (opt.no_loss_variant) certs.push_back(make(id, false));
  }

  // Gate: the theorem's hypotheses must hold, or the certificate is vacuous.
  CheckOptions chk = opt.check;
  if (chk.points.size() == 1 && chk.points[0] == CheckOptions{}.points[0]) chk.points = {opt.resolutions.front()};
  const auto reports = theorem_levi_check(spec, chk);
  if (!all_hold(reports)) {
    std::string failed;
    for (const auto& r : reports) {
      if (r.verdict != Verdict::holds) failed += (failed.empty() ? "" : "; ") + std::string(to_string(r.condition_id)) + ": " + r.clause;
    }
    for (auto& c : certs) {
      c.refused = true;
      c.refusal = "Levi check failed (" + failed + "); see the check command output";
    }
    return certs;
  }

  for (int res : opt.resolutions) {
    auto grid = std::make_shared<const Grid>(spec.grid(res));
    const FirstOrderSystem sys = reduce(spec, grid, opt.eps_reg);
    SolveConfig cfg = opt.solve;
    cfg.T = spec.T;
    cfg.keep_snapshots = false;
    const SpectralOps ops(*grid);
    std::vector<double> sup_u(certs.size(), 0.0);
    const auto observer = [&](const Snapshot& snap) {
      for (std::size_t i = 0; i < certs.size(); ++i) {
        sup_u[i] = std::max(sup_u[i], ops.sobolev_norm_squared(snap.u, certs[i].k));
      }
    };
    const SolveResult run = integrate(sys, cfg, observer);
    for (std::size_t i = 0; i < certs.size(); ++i) {
      auto& c = certs[i];
      const double rhs = certificate_rhs(spec, *grid, c.k, c.data_orders, run.record_times);
      double lhs = sup_u[i];
      if (run.blew_up) {
        c.blew_up = true;
        lhs = std::numeric_limits<double>::infinity();
      }
      c.lhs.push_back(lhs);
      c.rhs.push_back(rhs);
      double fc;
      if (rhs == 0.0) fc = lhs == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
      else fc = lhs / rhs;
      c.fitted_c.push_back(fc);
    }
  }
  for (auto& c : certs) {
    const bool finite = std::all_of(c.fitted_c.begin(), c.fitted_c.end(), [](double v) { return std::isfinite(v); });
    if (c.fitted_c.size() >= 2) {
      const double a = c.fitted_c[c.fitted_c.size() - 2], b = c.fitted_c.back();
      c.stability_under_refinement = a == 0.0 ? (b == 0.0 ? 1.0 : std::numeric_limits<double>::infinity()) : b / a;
    } else {
      c.stability_under_refinement = 1.0;
    }
    c.passes = finite && !c.blew_up && c.stability_under_refinement <= opt.stability_limit;
  }
  return certs;
}

}  // namespace weakhyp
