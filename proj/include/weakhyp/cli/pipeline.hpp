#pragma once

// Pipelines behind the command-line verbs. Each command fills a JSON section
// and a set of output files; run_commands() stages everything in a sibling
// directory and renames it into place once all files are written.

#include <unistd.h>

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "weakhyp/cli/config.hpp"
#include "weakhyp/conditions.hpp"
#include "weakhyp/energy.hpp"
#include "weakhyp/reduction.hpp"
#include "weakhyp/solver.hpp"

namespace weakhyp::cli {

using json = nlohmann::ordered_json;

// Exit codes of the tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConditionFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumericalAbort = 3;

struct CommandOutput {
  json report = json::object();
  int exit_code = kExitOk;
  std::map<std::string, std::string> files;  // name -> contents
};

// Trajectory files are a sequence of self-describing records, one per
// snapshot, in native byte order:
//   char[8]  magic "WKHYTRJ1"
//   uint32   n        spatial dimension
//   uint32   N        state components
//   uint32   shape[n] grid points per axis
//   float64  time
//   float64  values[N * prod(shape)]  component-major, each component row-major
inline constexpr char kTrajectoryMagic[8] = {'W', 'K', 'H', 'Y', 'T', 'R', 'J', '1'};

struct TrajectoryRecord {
  std::vector<std::uint32_t> shape;
  std::uint32_t components = 0;
  double time = 0.0;
  std::vector<double> values;
};

inline void append_trajectory_record(std::string& out, const GridFunction& U, double t) {
  const auto put = [&](const void* p, std::size_t n) { out.append(static_cast<const char*>(p), n); };
  put(kTrajectoryMagic, sizeof kTrajectoryMagic);
  const auto n = static_cast<std::uint32_t>(U.grid().dim());
  const auto N = static_cast<std::uint32_t>(U.components());
  put(&n, sizeof n);
  put(&N, sizeof N);
  for (int a = 0; a < U.grid().dim(); ++a) {
    const auto s = static_cast<std::uint32_t>(U.grid().points(a));
    put(&s, sizeof s);
  }
  put(&t, sizeof t);
  put(U.values().data(), U.values().size() * sizeof(double));
}

inline std::vector<TrajectoryRecord> read_trajectory(const std::string& bytes) {
  std::vector<TrajectoryRecord> out;
  std::size_t pos = 0;
  const auto get = [&](void* p, std::size_t n) {
    if (pos + n > bytes.size()) throw ParseError("trajectory", "truncated record");
    std::memcpy(p, bytes.data() + pos, n);
    pos += n;
  };
  while (pos < bytes.size()) {
    char magic[8];
    get(magic, sizeof magic);
    if (std::memcmp(magic, kTrajectoryMagic, sizeof magic) != 0) throw ParseError("trajectory", "bad magic");
    TrajectoryRecord r;
    std::uint32_t n = 0;
    get(&n, sizeof n);
    get(&r.components, sizeof r.components);
    r.shape.resize(n);
    std::size_t points = 1;
    for (auto& s : r.shape) {
      get(&s, sizeof s);
      points *= s;
    }
    get(&r.time, sizeof r.time);
    r.values.resize(points * r.components);
    get(r.values.data(), r.values.size() * sizeof(double));
    out.push_back(std::move(r));
  }
  return out;
}

namespace detail {

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline json to_json(const LeviReport& r) {
  json j;
  j["condition"] = to_string(r.condition_id);
  j["clause"] = r.clause;
  j["verdict"] = to_string(r.verdict);
  j["fitted_constant"] = finite_or_null(r.fitted_constant);
  j["coarse_constant"] = finite_or_null(r.coarse_constant);
  j["worst_point"] = r.worst_point;
  if (r.lambda_estimate) j["lambda_estimate"] = r.lambda_estimate->describe();
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

inline std::vector<std::string> pattern(const MatrixField& m) {
  std::vector<std::string> rows(m.rows(), std::string(m.cols(), '.'));
  for (const auto& e : m.entries()) {
    if (!e.f.is_zero()) rows[e.row][e.col] = e.f.is_constant() ? 'c' : 'x';
  }
  return rows;
}

inline double max_abs(const MatrixField& m) {
  double s = 0.0;
  for (const auto& e : m.entries()) {
    for (std::size_t p = 0; p < m.grid_ptr()->size(); ++p) s = std::max(s, std::abs(e.f.at(p)));
  }
  return s;
}

inline std::vector<int> shape_for(const EquationSpec& spec, int points) { return std::vector<int>(spec.dim, points); }

inline std::shared_ptr<const Grid> make_grid(const EquationSpec& spec, int points) {
  return std::make_shared<const Grid>(spec.grid(points));
}

}  // namespace detail

inline CommandOutput cmd_reduce(const ExperimentConfig& cfg) {
  CommandOutput out;
  const int res = cfg.resolutions.front();
  const auto grid = detail::make_grid(cfg.spec, res);
  const FirstOrderSystem sys = reduce(cfg.spec, grid, cfg.eps_reg);
  json& r = out.report;
  r["kind"] = to_string(sys.kind);
  r["equation_order"] = sys.equation_order;
  r["dim"] = sys.dim;
  r["N"] = sys.N;
  r["resolution"] = res;
  r["provenance"] = sys.provenance;
  r["recovery"] = {{"component", sys.recovery_component}, {"steps", sys.recovery_steps}};
  json A = json::array();
  for (int k = 0; k < sys.dim; ++k) A.push_back(detail::pattern(sys.A[k]));
  r["A_pattern"] = A;
  r["Q_pattern"] = detail::pattern(sys.Q);
  r["B_pattern"] = detail::pattern(sys.base_B());

  // Symmetriser residual max_x |QA_k - (QA_k)^T| / (max|Q| max|A_k|).
  double sym = 0.0;
  const double qscale = std::max(detail::max_abs(sys.Q), 1e-300);
  for (int k = 0; k < sys.dim; ++k) {
    const MatrixField QA = sys.Q * sys.A[k];
    const double scale = qscale * std::max(detail::max_abs(sys.A[k]), 1e-300);
    for (std::size_t p = 0; p < grid->size(); ++p) {
      const Eigen::MatrixXd m = QA.dense(p);
      sym = std::max(sym, (m - m.transpose()).cwiseAbs().maxCoeff() / scale);
    }
  }
  r["symmetriser_residual"] = sym;

  // Completed-square identity 3<Qv,v> = |sum a_k v_k - v_L|^2 + 2 sum a_k v_{n+k}^2 + 2 v_L^2
  // at seeded random points and vectors.
  if (sys.kind != SystemKind::M2) {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> point(0, grid->size() - 1);
    std::normal_distribution<double> normal;
    double worst = 0.0;
    for (int s = 0; s < 1000; ++s) {
      const std::size_t p = point(rng);
      Eigen::VectorXd v(sys.N);
      for (int i = 0; i < sys.N; ++i) v(i) = normal(rng);
      const double lhs = 3.0 * v.dot(sys.Q.dense(p) * v);
      const double rhs = completed_square_form(sys, p, v);
      worst = std::max(worst, std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1e-300}));
    }
    r["quadratic_form_residual"] = worst;
  } else {
    r["quadratic_form_residual"] = nullptr;
  }
  r["warnings"] = sys.warnings;
  return out;
}

inline std::vector<LeviReport> run_condition(const EquationSpec& spec, const std::string& id, const CheckOptions& opt) {
  if (id == "theorem") return theorem_levi_check(spec, opt);
  const auto cid = condition_from_string(id);
  if (!cid) throw ArgumentError("unknown condition '" + id + "'");
  const Grid base = spec.grid(opt.points.front());
  const auto need = [&](bool ok, const std::string& what) {
    if (!ok) throw ArgumentError("condition " + id + " needs " + what);
  };
  switch (*cid) {
    case ConditionId::glaeser: {
      std::vector<LeviReport> out;
      for (const auto& a : spec.principal) out.push_back(glaeser_check(a, base, opt));
      return out;
    }
    case ConditionId::oleinik_m2:
      need(spec.order == 2, "an order-2 equation");
      return {oleinik_check(spec.principal, base, opt)};
    case ConditionId::lc_m2:
      need(spec.order == 2, "an order-2 equation");
      return levi_check_m2(spec, opt);
    case ConditionId::lc_m3:
    case ConditionId::lc1_m3:
      need(spec.order == 3 && spec.dim == 1, "a one-dimensional order-3 equation");
      return levi_check_m3(spec, *cid == ConditionId::lc_m3 ? LeviLevel::LC : LeviLevel::LC1, opt);
    case ConditionId::lc_m3_nd:
      need(spec.order == 3, "an order-3 equation");
      return levi_check_m3_nd(spec, opt);
    case ConditionId::lc_m4:
      need(spec.order == 4, "an order-4 equation");
      return levi_check_m4(spec, opt);
  }
  return {};
}

inline CheckOptions check_options(const ExperimentConfig& cfg) {
  CheckOptions opt = cfg.check;
  opt.points = {cfg.resolutions.front()};
  opt.seed = cfg.seed;
  return opt;
}

inline CommandOutput cmd_check(const ExperimentConfig& cfg) {
  CommandOutput out;
  json reports = json::array();
  bool ok = true;
  const auto opt = check_options(cfg);
  for (const auto& id : cfg.checks) {
    for (const auto& rep : run_condition(cfg.spec, id, opt)) {
      if (rep.verdict == Verdict::fails) ok = false;
      reports.push_back(detail::to_json(rep));
    }
  }
  out.report["requested"] = cfg.checks;
  out.report["all_hold"] = ok;
  out.report["reports"] = reports;
  if (!cfg.checks.empty()) {
    // Sampled constant of the zero-order energy term against the coercive minorant.
    const auto sys = reduce(cfg.spec, detail::make_grid(cfg.spec, cfg.resolutions.front()), cfg.eps_reg);
    LotBoundOptions lo;
    lo.seed = cfg.seed;
    const auto b = pointwise_lot_bound(sys, lo);
    out.report["lot_bound"] = {{"C_sweep", detail::finite_or_null(b.C_sweep)},
                               {"C_pencil", detail::finite_or_null(b.C_pencil)},
                               {"C_assembled", detail::finite_or_null(b.C_assembled)},
                               {"unbounded", b.unbounded},
                               {"worst_point", b.worst_point},
                               {"note", b.note}};
  }
  out.exit_code = ok ? kExitOk : kExitConditionFailed;
  return out;
}

struct SolveOutputOptions {
  int trajectory_snapshots = 11;  // evenly spaced in time, first and last included
};

// Solves at the finest configured resolution.
inline CommandOutput cmd_solve(const ExperimentConfig& cfg, const SolveOutputOptions& oo = {}) {
  CommandOutput out;
  const int res = *std::max_element(cfg.resolutions.begin(), cfg.resolutions.end());
  const auto grid = detail::make_grid(cfg.spec, res);
  const FirstOrderSystem sys = reduce(cfg.spec, grid, cfg.eps_reg);
  const AugmentedSystem aug = cfg.solve.augment_level > 0 ? augment(sys, cfg.solve.augment_level)
                                                          : AugmentedSystem{{sys}};
  SolveConfig sc = cfg.solve.config;
  sc.T = cfg.spec.T;
  sc.keep_snapshots = false;

  const SpectralOps ops(*grid);
  const EnergyEvaluator ev(aug, 0);
  EnergyTrace trace;
  std::ostringstream norms;
  norms << "t,L2,H1,H2\n";
  std::string trajectory;
  int next_mark = 0;
  const int marks = std::max(2, oo.trajectory_snapshots);
  const auto observer = [&](const Snapshot& snap) {
    const double l2 = std::sqrt(ops.sobolev_norm_squared(snap.u, 0));
    const double h1 = std::sqrt(ops.sobolev_norm_squared(snap.u, 1));
    const double h2 = std::sqrt(ops.sobolev_norm_squared(snap.u, 2));
    norms << detail::fmt(snap.t) << ',' << detail::fmt(l2) << ',' << detail::fmt(h1) << ',' << detail::fmt(h2) << '\n';
    const auto s = ev.evaluate(snap);
    trace.times.push_back(s.t);
    trace.E.push_back(s.E);
    trace.term_principal.push_back(s.principal);
    trace.term_lot.push_back(s.lot);
    trace.term_source.push_back(s.source);
    trace.f_norm_sq.push_back(s.f_norm_sq);
    if (next_mark < marks && snap.t >= sc.T * next_mark / (marks - 1) - 1e-9 * sc.T) {
      append_trajectory_record(trajectory, snap.levels[0], snap.t);
      while (next_mark < marks && snap.t >= sc.T * next_mark / (marks - 1) - 1e-9 * sc.T) ++next_mark;
    }
  };
  const SolveResult run = integrate(aug, sc, observer);
  trace.dE_dt_numeric = differentiate_series(trace.times, trace.E);
  trace.blew_up = run.blew_up;
  trace.blowup_time = run.blowup_time;

  std::ostringstream ecsv;
  ecsv << "t,E,term_principal,term_lot,term_source\n";
  double decomposition = 0.0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    ecsv << detail::fmt(trace.times[i]) << ',' << detail::fmt(trace.E[i]) << ',' << detail::fmt(trace.term_principal[i])
         << ',' << detail::fmt(trace.term_lot[i]) << ',' << detail::fmt(trace.term_source[i]) << '\n';
    if (std::isfinite(trace.E[i])) decomposition = std::max(decomposition, trace.decomposition_residual(i));
  }
  const auto fit = gronwall_fit(trace, aug.level() > 0);

  json& r = out.report;
  r["resolution"] = res;
  r["dt"] = run.dt;
  r["steps"] = run.steps;
  r["records"] = run.record_times.size();
  r["T_reached"] = run.record_times.empty() ? 0.0 : run.record_times.back();
  r["augment_level"] = aug.level();
  r["blew_up"] = run.blew_up;
  r["blowup_time"] = detail::finite_or_null(run.blowup_time);
  r["expect_blowup"] = cfg.solve.expect_blowup;
  if (!run.abort_reason.empty()) r["abort_reason"] = run.abort_reason;
  r["energy"] = {{"E0", trace.E.empty() ? 0.0 : trace.E.front()},
                 {"max_E", detail::finite_or_null(trace.max_E())},
                 {"max_decomposition_residual", detail::finite_or_null(decomposition)}};
  r["gronwall"] = {{"valid", fit.valid},
                   {"c_prime", detail::finite_or_null(fit.c_prime)},
                   {"margin", detail::finite_or_null(fit.margin)},
                   {"failure", fit.failure}};
  if (fit.augmented) {
    r["gronwall"]["C_integral"] = detail::finite_or_null(fit.C_integral);
    r["gronwall"]["margin_integral"] = detail::finite_or_null(fit.margin_integral);
  }
  r["trajectory"] = {{"file", "trajectory.bin"}, {"components", sys.N}, {"shape", detail::shape_for(cfg.spec, res)}};
  out.files["norms.csv"] = norms.str();
  out.files["energy.csv"] = ecsv.str();
  out.files["trajectory.bin"] = std::move(trajectory);
  if (run.blew_up && !cfg.solve.expect_blowup) out.exit_code = kExitNumericalAbort;
  return out;
}

inline CommandOutput cmd_certify(const ExperimentConfig& cfg) {
  CommandOutput out;
  json certs = json::array();
  out.report["requested"] = json::array();
  for (auto id : cfg.certificates) out.report["requested"].push_back(to_string(id));
  if (cfg.certificates.empty()) {
    out.report["certificates"] = certs;
    return out;
  }
  CertifyOptions opt;
  opt.resolutions = cfg.resolutions;
  opt.k = cfg.certify_k;
  opt.solve = cfg.solve.config;
  opt.eps_reg = cfg.eps_reg;
  opt.check = check_options(cfg);
  opt.stability_limit = cfg.stability_limit;
  opt.no_loss_variant = cfg.no_loss_variant;
  const auto results = certify_estimates(cfg.spec, cfg.certificates, opt);
  bool ok = true, refused = false, blew = false;
  for (const auto& c : results) {
    json j;
    j["estimate_id"] = to_string(c.estimate_id);
    j["k"] = c.k;
    j["variant"] = c.loss ? "loss" : "no_loss";
    j["data_orders"] = c.data_orders;
    j["resolutions"] = c.resolutions;
    json lhs = json::array(), rhs = json::array(), fc = json::array();
    for (double v : c.lhs) lhs.push_back(detail::finite_or_null(v));
    for (double v : c.rhs) rhs.push_back(detail::finite_or_null(v));
    for (double v : c.fitted_c) fc.push_back(detail::finite_or_null(v));
    j["lhs"] = lhs;
    j["rhs"] = rhs;
    j["fitted_c"] = fc;
    j["stability_under_refinement"] = detail::finite_or_null(c.stability_under_refinement);
    j["passes"] = c.passes;
    j["refused"] = c.refused;
    if (c.refused) j["refusal"] = c.refusal;
    j["blew_up"] = c.blew_up;
    certs.push_back(j);
    refused = refused || c.refused;
    blew = blew || c.blew_up;
    // The no-loss variants are a diagnostic: they are expected to fail on rough data.
    if (c.loss && !c.passes) ok = false;
  }
  out.report["certificates"] = certs;
  out.report["all_pass"] = ok;
  if (refused) out.report["refusal"] = results.front().refusal;
  if (blew && !cfg.solve.expect_blowup) out.exit_code = kExitNumericalAbort;
  else if (!ok) out.exit_code = kExitConditionFailed;
  return out;
}

inline CommandOutput run_command(Command c, const ExperimentConfig& cfg) {
  switch (c) {
    case Command::reduce: return cmd_reduce(cfg);
    case Command::check: return cmd_check(cfg);
    case Command::solve: return cmd_solve(cfg);
    case Command::certify: return cmd_certify(cfg);
  }
  return {};
}

struct RunSummary {
  json summary;
  int exit_code = kExitOk;
  std::filesystem::path output_dir;
};

inline json config_echo(const ExperimentConfig& cfg) {
  json j;
  j["name"] = cfg.name;
  if (!cfg.description.empty()) j["description"] = cfg.description;
  j["order"] = cfg.spec.order;
  j["dim"] = cfg.spec.dim;
  j["domain"] = cfg.spec.domain == Domain::Periodic ? "periodic" : "compact";
  j["T"] = cfg.spec.T;
  j["expressions"] = cfg.expression_text;
  j["resolutions"] = cfg.resolutions;
  j["seed"] = cfg.seed;
  j["eps_reg"] = cfg.eps_reg;
  return j;
}

// Runs the commands and writes summary.json plus every command's files into
// cfg.output_dir. The directory appears complete or not at all.
inline RunSummary run_commands(const ExperimentConfig& cfg, const std::vector<Command>& commands) {
  namespace fs = std::filesystem;
  RunSummary rs;
  rs.output_dir = fs::absolute(cfg.output_dir).lexically_normal();
  if (rs.output_dir.filename().empty()) rs.output_dir = rs.output_dir.parent_path();
  json& s = rs.summary;
  s["schema"] = kSchemaVersion;
  s["config"] = config_echo(cfg);
  s["commands"] = json::array();
  std::map<std::string, std::string> files;
  json results = json::object();
  for (auto c : commands) {
    s["commands"].push_back(to_string(c));
    auto o = run_command(c, cfg);
    o.report["exit_code"] = o.exit_code;
    results[to_string(c)] = o.report;
    rs.exit_code = std::max(rs.exit_code, o.exit_code);
    for (auto& [name, body] : o.files) files[name] = std::move(body);
    files[std::string(to_string(c)) + ".json"] = o.report.dump(2) + "\n";
  }
  s["results"] = results;
  s["exit_code"] = rs.exit_code;
  files["summary.json"] = s.dump(2) + "\n";

  const fs::path parent = rs.output_dir.parent_path();
  fs::create_directories(parent);
  const fs::path staging = parent / ("." + rs.output_dir.filename().string() + ".staging-" + std::to_string(::getpid()));
  fs::remove_all(staging);
  fs::create_directory(staging);
  for (const auto& [name, body] : files) {
    std::ofstream f(staging / name, std::ios::binary);
    f.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!f) throw Error("cannot write " + (staging / name).string());
  }
  fs::remove_all(rs.output_dir);
  fs::rename(staging, rs.output_dir);
  return rs;
}

}  // namespace weakhyp::cli
