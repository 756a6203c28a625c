#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "weakhyp/errors.hpp"
#include "weakhyp/grid.hpp"
#include "weakhyp/reduction.hpp"

namespace weakhyp {

struct SolveConfig {
  double T = 1.0;
  double cfl = 0.4;
  bool dealias = false;
  // Record every this many steps; 0 picks a stride giving about `target_records` records.
  int record_every = 0;
  int target_records = 200;
  bool keep_snapshots = true;
  double blowup_threshold = 1e12;
  long max_steps = 10'000'000;
};

struct Snapshot {
  double t = 0.0;
  std::vector<GridFunction> levels;  // state of each level
  std::vector<double> u;             // recovered scalar solution
};

using Observer = std::function<void(const Snapshot&)>;

struct SolveResult {
  std::vector<Snapshot> snapshots;
  std::vector<double> record_times;
  Snapshot final_state;
  double dt = 0.0;
  long steps = 0;
  bool blew_up = false;
  double blowup_time = std::numeric_limits<double>::quiet_NaN();
  std::string abort_reason;
};

namespace detail {

// Dense samples of one sparse matrix entry.
struct SampledEntry {
  int row = 0, col = 0;
  bool is_const = false;
  double c = 0.0;
  std::vector<double> v;

  SampledEntry(int r, int cc, const Field& f) : row(r), col(cc) {
    if (f.is_constant()) {
      is_const = true;
      c = f.constant_value();
    } else {
      v = f.values();
    }
  }

  // out += entry * in
  void apply(std::span<double> out, std::span<const double> in) const {
    const std::size_t P = out.size();
    if (is_const) {
      for (std::size_t p = 0; p < P; ++p) out[p] += c * in[p];
    } else {
      for (std::size_t p = 0; p < P; ++p) out[p] += v[p] * in[p];
    }
  }
};

struct SampledBlock {
  int row_block = 0;   // target block at this level
  int src_level = 0;   // level the source block lives on
  int src_block = 0;
  std::vector<SampledEntry> entries;
};

struct SampledForcing {
  int block = 0;
  int component = 0;
  CoefficientFunction f;
  bool cached = false;
  std::vector<double> values;
};

struct LevelOperator {
  int N = 0;
  int blocks = 0;
  std::vector<std::vector<SampledEntry>> A;  // per axis
  std::vector<std::vector<int>> needed_cols; // per axis: columns hit by A_k
  std::vector<SampledBlock> lower;           // B blocks and couplings
  std::vector<SampledForcing> forcing;
};

inline LevelOperator build_level_operator(const FirstOrderSystem& s) {
  LevelOperator op;
  op.N = s.N;
  op.blocks = s.blocks();
  for (int k = 0; k < s.dim; ++k) {
    std::vector<SampledEntry> entries;
    std::vector<int> cols;
    for (const auto& e : s.A[k].entries()) {
      entries.emplace_back(e.row, e.col, e.f);
      if (std::find(cols.begin(), cols.end(), e.col) == cols.end()) cols.push_back(e.col);
    }
    op.A.push_back(std::move(entries));
    op.needed_cols.push_back(std::move(cols));
  }
  for (const auto& b : s.B) {
    SampledBlock sb{b.row, s.level, b.col, {}};
    for (const auto& e : b.M.entries()) sb.entries.emplace_back(e.row, e.col, e.f);
    op.lower.push_back(std::move(sb));
  }
  for (const auto& c : s.coupling) {
    SampledBlock sb{c.block, static_cast<int>(c.gamma.size()), block_index(c.gamma, s.dim), {}};
    for (const auto& e : c.M.entries()) sb.entries.emplace_back(e.row, e.col, e.f);
    op.lower.push_back(std::move(sb));
  }
  for (const auto& f : s.forcing) {
    SampledForcing sf{f.block, f.component, f.f, false, {}};
    if (!f.f.time_dependent()) {
      sf.cached = true;
      sf.values = f.f.values(*s.grid, 0.0);
    }
    op.forcing.push_back(std::move(sf));
  }
  return op;
}

}  // namespace detail

// Right-hand side of the stacked level systems plus the time integrations
// that recover u. The state is (level 0, ..., level L, z_1..z_s) with
// z_1 = d_t^{s-1} u, ..., z_s = u.
class Evolution {
 public:
  explicit Evolution(const AugmentedSystem& system, bool dealias = false)
      : system_(system), dealias_(dealias), ops_(*system.base().grid) {
    for (const auto& lvl : system_.levels) {
      if (lvl.grid != system_.base().grid && !(*lvl.grid == *system_.base().grid)) {
        throw ArgumentError("all levels must share one grid");
      }
      levels_.push_back(detail::build_level_operator(lvl));
    }
    scratch_.resize(system.base().grid->size());
  }

  const AugmentedSystem& system() const { return system_; }
  int recovery_steps() const { return system_.base().recovery_steps; }
  std::size_t points() const { return system_.base().grid->size(); }

  // Total component count of the joint state.
  int components() const {
    int c = 0;
    for (const auto& l : system_.levels) c += l.size();
    return c + recovery_steps();
  }

  GridFunction initial_state() const {
    GridFunction x(system_.base().grid, components());
    int off = 0;
    for (const auto& l : system_.levels) {
      std::copy(l.U0.values().begin(), l.U0.values().end(), x.values().begin() + off * points());
      off += l.size();
    }
    const auto& base = system_.base();
    for (int j = 0; j < recovery_steps(); ++j) {
      const auto v = base.recovery_seeds[j].values(*base.grid, 0.0);
      std::copy(v.begin(), v.end(), x.component(off + j).begin());
    }
    return x;
  }

  int level_offset(int level) const {
    int off = 0;
    for (int l = 0; l < level; ++l) off += system_.levels[l].size();
    return off;
  }

  void rhs(double t, const GridFunction& x, GridFunction& out) {
    std::fill(out.values().begin(), out.values().end(), 0.0);
    const auto& grid = *system_.base().grid;
    const std::size_t P = points();
    for (std::size_t L = 0; L < levels_.size(); ++L) {
      const auto& op = levels_[L];
      const int off = level_offset(static_cast<int>(L));
      for (int k = 0; k < static_cast<int>(op.A.size()); ++k) {
        for (int b = 0; b < op.blocks; ++b) {
          for (int col : op.needed_cols[k]) {
            ops_.derivative(x.component(off + b * op.N + col), scratch_, k, 1);
            for (const auto& e : op.A[k]) {
              if (e.col != col) continue;
              e.apply(out.component(off + b * op.N + e.row), scratch_);
            }
          }
        }
      }
      for (const auto& blk : op.lower) {
        const int src = level_offset(blk.src_level) + blk.src_block * system_.levels[blk.src_level].N;
        for (const auto& e : blk.entries) {
          e.apply(out.component(off + blk.row_block * op.N + e.row), x.component(src + e.col));
        }
      }
      for (const auto& f : op.forcing) {
        auto dst = out.component(off + f.block * op.N + f.component);
        if (f.cached) {
          for (std::size_t p = 0; p < P; ++p) dst[p] += f.values[p];
        } else {
          const auto v = f.f.values(grid, t);
          for (std::size_t p = 0; p < P; ++p) dst[p] += v[p];
        }
      }
    }
    if (dealias_) {
      const int total = level_offset(static_cast<int>(levels_.size()));
      for (int c = 0; c < total; ++c) ops_.dealias(out.component(c));
    }
    // z_1' = U_rec, z_{j+1}' = z_j.
    const int s = recovery_steps();
    if (s > 0) {
      const int zoff = level_offset(static_cast<int>(levels_.size()));
      const auto src = x.component(system_.base().recovery_component);
      std::copy(src.begin(), src.end(), out.component(zoff).begin());
      for (int j = 1; j < s; ++j) {
        const auto prev = x.component(zoff + j - 1);
        std::copy(prev.begin(), prev.end(), out.component(zoff + j).begin());
      }
    }
  }

  Snapshot snapshot(double t, const GridFunction& x) const {
    Snapshot snap;
    snap.t = t;
    const auto& grid = system_.base().grid;
    for (std::size_t L = 0; L < system_.levels.size(); ++L) {
      GridFunction g(grid, system_.levels[L].size());
      const auto begin = x.values().begin() + static_cast<std::ptrdiff_t>(level_offset(static_cast<int>(L)) * points());
      std::copy(begin, begin + static_cast<std::ptrdiff_t>(g.values().size()), g.values().begin());
      snap.levels.push_back(std::move(g));
    }
    const int s = recovery_steps();
    const auto u = s > 0 ? x.component(level_offset(static_cast<int>(levels_.size())) + s - 1)
                         : x.component(system_.base().recovery_component);
    snap.u.assign(u.begin(), u.end());
    return snap;
  }

 private:
  AugmentedSystem system_;
  bool dealias_;
  SpectralOps ops_;
  std::vector<detail::LevelOperator> levels_;
  std::vector<double> scratch_;
};

// Largest characteristic speed sup sqrt(a_k) over the base principal matrices.
inline double characteristic_speed(const FirstOrderSystem& s) {
  double speed = 0.0;
  for (int k = 0; k < s.dim; ++k) {
    for (const auto& e : s.A[k].entries()) {
      // a_k sits below the diagonal of the wave pair; the other entries are 1.
      if (e.row > e.col) speed = std::max(speed, std::sqrt(std::max(0.0, e.f.sup_abs())));
    }
  }
  return speed;
}

inline double stable_dt(const FirstOrderSystem& s, double cfl, double T) {
  const double dt_cfl = cfl * s.grid->min_spacing() / std::max(1.0, characteristic_speed(s));
  const double steps = std::ceil(T / dt_cfl);
  return T / steps;
}

// Classical RK4 on the stacked system up to cfg.T. A state exceeding the
// blow-up threshold (or turning non-finite) stops the run and is reported.
inline SolveResult integrate(const AugmentedSystem& system, const SolveConfig& cfg, const Observer& observer = {}) {
  if (!(cfg.T > 0.0)) throw ArgumentError("final time must be positive");
  if (!(cfg.cfl > 0.0)) throw ArgumentError("cfl must be positive");
  Evolution ev(system, cfg.dealias);
  SolveResult res;
  res.dt = stable_dt(system.base(), cfg.cfl, cfg.T);
  const long total = static_cast<long>(std::llround(cfg.T / res.dt));
  if (total > cfg.max_steps) throw ArgumentError("step count " + std::to_string(total) + " exceeds max_steps");
  const long stride = cfg.record_every > 0 ? cfg.record_every
                                           : std::max<long>(1, total / std::max(1, cfg.target_records));

  GridFunction x = ev.initial_state();
  GridFunction k1(x.grid_ptr(), x.components()), k2 = k1, k3 = k1, k4 = k1, tmp = k1;
  const auto record = [&](double t) {
    Snapshot snap = ev.snapshot(t, x);
    res.record_times.push_back(t);
    if (observer) observer(snap);
    if (cfg.keep_snapshots) res.snapshots.push_back(snap);
    res.final_state = std::move(snap);
  };
  const auto axpy = [](GridFunction& out, const GridFunction& a, double h, const GridFunction& b) {
    auto& o = out.values();
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + h * bv[i];
  };

  record(0.0);
  const double h = res.dt;
  for (long n = 0; n < total; ++n) {
    const double t = n * h;
    ev.rhs(t, x, k1);
    axpy(tmp, x, 0.5 * h, k1);
    ev.rhs(t + 0.5 * h, tmp, k2);
    axpy(tmp, x, 0.5 * h, k2);
    ev.rhs(t + 0.5 * h, tmp, k3);
    axpy(tmp, x, h, k3);
    ev.rhs(t + h, tmp, k4);
    auto& xv = x.values();
    for (std::size_t i = 0; i < xv.size(); ++i) {
      xv[i] += h / 6.0 * (k1.values()[i] + 2.0 * k2.values()[i] + 2.0 * k3.values()[i] + k4.values()[i]);
    }
    res.steps = n + 1;
    const double tn = (n + 1 == total) ? cfg.T : (n + 1) * h;
    const bool finite = x.all_finite();
    if (!finite || x.max_abs() > cfg.blowup_threshold) {
      res.blew_up = true;
      res.blowup_time = tn;
      res.abort_reason = finite ? "state exceeded the blow-up threshold" : "state became non-finite";
      if (finite) record(tn);
      return res;
    }
    if ((n + 1) % stride == 0 || n + 1 == total) record(tn);
  }
  return res;
}

inline SolveResult integrate(const FirstOrderSystem& system, const SolveConfig& cfg, const Observer& observer = {}) {
  AugmentedSystem aug;
  aug.levels.push_back(system);
  return integrate(aug, cfg, observer);
}

// u(t) from the recorded trajectory by composite trapezoidal integration of
// the recovery chain (d_t^s u -> ... -> u), seeded by the initial data. The
// solver's own u (integrated with RK4 alongside the system) is more accurate;
// this is the post-processing route and needs record_every = 1.
struct RecoveredScalar {
  std::vector<double> times;
  std::vector<std::vector<double>> u;
  bool sparse_recording = false;
};

inline RecoveredScalar recover_scalar(const SolveResult& traj, const FirstOrderSystem& sys) {
  RecoveredScalar out;
  out.times = traj.record_times;
  if (traj.snapshots.empty()) throw ArgumentError("recover_scalar needs kept snapshots");
  const std::size_t P = sys.grid->size();
  const auto rec = [&](const Snapshot& s) { return s.levels.front().component(sys.recovery_component); };
  if (sys.recovery_steps == 0) {
    for (const auto& s : traj.snapshots) {
      const auto c = rec(s);
      out.u.emplace_back(c.begin(), c.end());
    }
    return out;
  }
  for (std::size_t i = 1; i < out.times.size(); ++i) {
    if (out.times[i] - out.times[i - 1] > 1.5 * traj.dt) out.sparse_recording = true;
  }
  // chain[j] holds the current value of z_{j+1}.
  std::vector<std::vector<double>> chain;
  for (int j = 0; j < sys.recovery_steps; ++j) chain.push_back(sys.recovery_seeds[j].values(*sys.grid, 0.0));
  out.u.push_back(chain.back());
  for (std::size_t i = 1; i < traj.snapshots.size(); ++i) {
    const double h = out.times[i] - out.times[i - 1];
    const auto prev_src = rec(traj.snapshots[i - 1]);
    const auto next_src = rec(traj.snapshots[i]);
    std::vector<double> lo(prev_src.begin(), prev_src.end()), hi(next_src.begin(), next_src.end());
    for (int j = 0; j < sys.recovery_steps; ++j) {
      std::vector<double> old = chain[j];
      for (std::size_t p = 0; p < P; ++p) chain[j][p] += 0.5 * h * (lo[p] + hi[p]);
      lo = std::move(old);
      hi = chain[j];
    }
    out.u.push_back(chain.back());
  }
  return out;
}

}  // namespace weakhyp
