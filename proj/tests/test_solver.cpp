#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "test_util.hpp"
#include "weakhyp/solver.hpp"

using namespace weakhyp;
using testutil::make_spec;

namespace {

double l2_diff(const std::vector<double>& a, const std::vector<double>& b, const Grid& g) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return l2_norm(d, g);
}

// Time coefficient of one spatial mode for d_t^m c + a k^2 d_t^{m-2} c = 0.
double mode_oracle(int m, double a, double k, const std::vector<double>& c0, double T) {
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i + 1 < m; ++i) C(i, i + 1) = 1.0;
  C(m - 1, m - 2) = -a * k * k;
  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(c0.data(), m);
  return (testutil::expm(C * T) * v)(0);
}

}  // namespace

TEST(Solver, ZeroDataZeroForcingStaysZero) {
  for (int order : {2, 3, 4}) {
    const auto spec = make_spec(order, 1, {"sin(x1)^2"});
    const auto sys = reduce(spec, testutil::grid_for(spec, 32));
    SolveConfig cfg;
    cfg.T = 0.5;
    const auto res = integrate(sys, cfg);
    EXPECT_FALSE(res.blew_up);
    EXPECT_EQ(res.final_state.levels[0].max_abs(), 0.0);
    for (double v : res.final_state.u) EXPECT_EQ(v, 0.0);
  }
}

TEST(Solver, RhsOfZeroStateIsForcing) {
  const auto spec = make_spec(3, 1, {"1"}, {}, {}, "cos(x1) + t");
  const auto sys = reduce(spec, testutil::grid_for(spec, 16));
  Evolution ev(augment(sys, 1));
  GridFunction x(sys.grid, ev.components()), out = x;
  ev.rhs(0.5, x, out);
  for (std::size_t p = 0; p < sys.grid->size(); ++p) {
    const double xp = sys.grid->point(p)[0];
    EXPECT_NEAR(out.component(2)[p], std::cos(xp) + 0.5, 1e-14);
    EXPECT_NEAR(out.component(3 + 2)[p], -std::sin(xp), 1e-14);
    EXPECT_EQ(out.component(0)[p], 0.0);
  }
}

TEST(Solver, ConstantSymbolPerMode) {
  // rhs(cos(k x) v) = -k sin(k x) A v for constant A and B = 0.
  const auto spec = make_spec(3, 1, {"1"});
  const auto sys = reduce(spec, testutil::grid_for(spec, 32));
  Evolution ev(augment(sys, 1));
  const Eigen::MatrixXd A = sys.A[0].dense(0);
  const Eigen::Vector3d v(0.3, -1.0, 2.0);
  const int k = 5;
  GridFunction x(sys.grid, ev.components()), out = x;
  for (int c = 0; c < 3; ++c) {
    for (std::size_t p = 0; p < sys.grid->size(); ++p) x.component(c)[p] = std::cos(k * sys.grid->point(p)[0]) * v(c);
  }
  // Fill the level-1 block consistently so the base rows are unaffected.
  ev.rhs(0.0, x, out);
  const Eigen::Vector3d Av = A * v;
  for (std::size_t p = 0; p < sys.grid->size(); ++p) {
    const double s = -k * std::sin(k * sys.grid->point(p)[0]);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(out.component(c)[p], s * Av(c), 1e-11);
  }
  // Symbol eigenfrequencies are {0, +-xi}, the roots -sqrt(a), 0, sqrt(a) scaled by xi.
  Eigen::VectorXcd ev_sym = (A * double(k)).eigenvalues();
  std::vector<double> re;
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(ev_sym(i).imag(), 0.0, 1e-12);
    re.push_back(ev_sym(i).real());
  }
  std::sort(re.begin(), re.end());
  EXPECT_NEAR(re[0], -k, 1e-12);
  EXPECT_NEAR(re[1], 0.0, 1e-12);
  EXPECT_NEAR(re[2], k, 1e-12);
}

TEST(Solver, DAlembertTravellingWaves) {
  const auto spec = make_spec(2, 1, {"1"}, {}, {"exp(sin(x1))", "0"});
  const auto sys = reduce(spec, testutil::grid_for(spec, 256));
  SolveConfig cfg;
  cfg.T = 1.0;
  const auto res = integrate(sys, cfg);
  std::vector<double> exact(sys.grid->size());
  for (std::size_t p = 0; p < exact.size(); ++p) {
    const double x = sys.grid->point(p)[0];
    exact[p] = 0.5 * (std::exp(std::sin(x - 1.0)) + std::exp(std::sin(x + 1.0)));
  }
  EXPECT_LE(l2_diff(res.final_state.u, exact, *sys.grid), 1e-6);
}

TEST(Solver, ThirdOrderModeExponential) {
  const auto spec = make_spec(3, 1, {"1"}, {}, {"sin(x1)", "cos(2*x1)", "sin(3*x1)"});
  const auto sys = reduce(spec, testutil::grid_for(spec, 64));
  SolveConfig cfg;
  cfg.T = 1.0;
  const auto res = integrate(sys, cfg);
  const double c1 = mode_oracle(3, 1.0, 1, {1, 0, 0}, 1.0), c2 = mode_oracle(3, 1.0, 2, {0, 1, 0}, 1.0),
               c3 = mode_oracle(3, 1.0, 3, {0, 0, 1}, 1.0);
  std::vector<double> exact(sys.grid->size());
  for (std::size_t p = 0; p < exact.size(); ++p) {
    const double x = sys.grid->point(p)[0];
    exact[p] = c1 * std::sin(x) + c2 * std::cos(2 * x) + c3 * std::sin(3 * x);
  }
  EXPECT_LE(l2_diff(res.final_state.u, exact, *sys.grid), 1e-6);
}

TEST(Solver, SixthOrderFamilyModeExponential) {
  // Characteristic roots 0 (four times) and +-i k per mode.
  const auto spec = make_spec(6, 1, {"1"}, {}, {"sin(x1)", "0", "cos(2*x1)", "0", "0", "sin(x1)"});
  const auto sys = reduce(spec, testutil::grid_for(spec, 32));
  SolveConfig cfg;
  cfg.T = 1.0;
  cfg.cfl = 0.2;
  const auto res = integrate(sys, cfg);
  const double c1 = mode_oracle(6, 1.0, 1, {1, 0, 0, 0, 0, 1}, 1.0);
  const double c2 = mode_oracle(6, 1.0, 2, {0, 0, 1, 0, 0, 0}, 1.0);
  std::vector<double> exact(sys.grid->size());
  for (std::size_t p = 0; p < exact.size(); ++p) {
    const double x = sys.grid->point(p)[0];
    exact[p] = c1 * std::sin(x) + c2 * std::cos(2 * x);
  }
  EXPECT_LE(l2_diff(res.final_state.u, exact, *sys.grid), 1e-6);
}

TEST(Solver, FourthOrderFamilyMatchesDirectReduction) {
  const auto spec = make_spec(4, 1, {"1 + 0.5*sin(x1)"}, {{"b2_1", "0.3*(1 + 0.5*sin(x1))"}, {"b3_1", "0.2"}, {"b4", "0.1"}},
                              {"sin(x1)", "cos(x1)", "0", "0.5*sin(2*x1)"});
  const auto g = testutil::grid_for(spec, 32);
  SolveConfig cfg;
  cfg.T = 0.5;
  const auto direct = integrate(reduce_m4(spec, g), cfg);
  const auto family = integrate(reduce_2m(spec, g), cfg);
  for (int c = 0; c < 3; ++c) {
    const auto a = direct.final_state.levels[0].component(1 + c);
    const auto b = family.final_state.levels[0].component(c);
    for (std::size_t p = 0; p < g->size(); ++p) EXPECT_NEAR(a[p], b[p], 1e-9);
  }
  EXPECT_LE(l2_diff(direct.final_state.u, family.final_state.u, *g), 1e-9);
}

TEST(Solver, ManufacturedSolutionsAllOrders) {
  struct Case {
    int order;
    std::map<std::string, std::string> lower;
  };
  const std::vector<Case> cases = {
      {2, {{"b1", "0.3*cos(x1)"}, {"c", "0.2"}, {"d", "sin(x1)"}}},
      {3, {{"b1_1", "sin(x1)^2*cos(x1)"}, {"b2_1", "sin(x1)*cos(x1)"}, {"b3", "1"}}},
      {4, {{"b2_1", "cos(x1)*sin(x1)^2"}, {"b3_1", "0.5*sin(x1)"}, {"b4", "0.1"}}},
  };
  for (const auto& c : cases) {
    const testutil::Manufactured mf("cos(t)*sin(x1)", make_spec(c.order, 1, {"sin(x1)^2"}, c.lower));
    const auto spec = mf.spec_with_forcing();
    const auto sys = reduce(spec, testutil::grid_for(spec, 32));
    SolveConfig cfg;
    cfg.T = 1.0;
    cfg.cfl = 0.1;
    const auto res = integrate(sys, cfg);
    double err = 0.0;
    for (std::size_t p = 0; p < sys.grid->size(); ++p) {
      err = std::max(err, std::abs(res.final_state.u[p] - std::cos(1.0) * std::sin(sys.grid->point(p)[0])));
    }
    EXPECT_LT(err, 1e-7) << "order " << c.order;
  }
}

TEST(RecoverScalar, ManufacturedThirdOrder) {
  const testutil::Manufactured mf("cos(t)*sin(x1)", make_spec(3, 1, {"1 + 0.5*sin(x1)"}, {{"b3", "0.5"}}));
  const auto spec = mf.spec_with_forcing();
  const auto sys = reduce(spec, testutil::grid_for(spec, 32));
  SolveConfig cfg;
  cfg.T = 1.0;
  cfg.cfl = 0.005;
  cfg.record_every = 1;
  const auto res = integrate(sys, cfg);
  ASSERT_LE(res.dt, 1e-3);
  const auto rec = recover_scalar(res, sys);
  EXPECT_FALSE(rec.sparse_recording);
  double err = 0.0;
  for (std::size_t i = 0; i < rec.times.size(); i += 50) {
    for (std::size_t p = 0; p < sys.grid->size(); ++p) {
      err = std::max(err, std::abs(rec.u[i][p] - std::cos(rec.times[i]) * std::sin(sys.grid->point(p)[0])));
    }
  }
  EXPECT_LE(err, 1e-6);
}

TEST(RecoverScalar, IdentityForWaveAndZeroData) {
  const auto spec = make_spec(2, 1, {"1"}, {}, {"sin(x1)"});
  const auto sys = reduce(spec, testutil::grid_for(spec, 16));
  SolveConfig cfg;
  cfg.T = 0.2;
  const auto res = integrate(sys, cfg);
  const auto rec = recover_scalar(res, sys);
  for (std::size_t i = 0; i < rec.times.size(); ++i) EXPECT_EQ(rec.u[i], res.snapshots[i].u);

  const auto zero = make_spec(3, 1, {"sin(x1)^2"});
  const auto zs = reduce(zero, testutil::grid_for(zero, 16));
  cfg.record_every = 5;
  const auto zr = recover_scalar(integrate(zs, cfg), zs);
  EXPECT_TRUE(zr.sparse_recording);
  for (const auto& u : zr.u) {
    for (double v : u) EXPECT_EQ(v, 0.0);
  }
}

TEST(Solver, TemporalOrderOfRk4) {
  const auto spec = make_spec(2, 1, {"1 + 0.5*sin(x1)"}, {{"c", "0.3"}}, {"exp(sin(x1))", "cos(x1)"});
  const auto sys = reduce(spec, testutil::grid_for(spec, 32));
  const auto run = [&](double cfl) {
    SolveConfig cfg;
    cfg.T = 1.0;
    cfg.cfl = cfl;
    return integrate(sys, cfg).final_state.u;
  };
  const auto ref = run(0.05);
  const double e1 = l2_diff(run(0.8), ref, *sys.grid), e2 = l2_diff(run(0.4), ref, *sys.grid);
  EXPECT_GE(std::log2(e1 / e2), 3.5);
}

TEST(Solver, RegularisationContinuity) {
  const auto spec = make_spec(3, 1, {"sin(x1)^2"}, {{"b1_1", "cos(x1)*sin(x1)^2"}}, {"sin(x1)", "0", "cos(x1)"});
  const auto g = testutil::grid_for(spec, 64);
  SolveConfig cfg;
  cfg.T = 1.0;
  std::vector<std::vector<double>> u;
  for (double eps : {0.4, 0.2, 0.1, 0.05}) u.push_back(integrate(reduce(spec, g, eps), cfg).final_state.u);
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < u.size(); ++i) {
    const double d = l2_diff(u[i], u[i + 1], *g);
    EXPECT_LT(d, prev);
    prev = d;
  }
}

TEST(Solver, DegenerateRunBoundedUnderRefinement) {
  const auto spec = make_spec(3, 1, {"sin(x1)^2"}, {{"b1_1", "cos(x1)*sin(x1)^2"}, {"b2_1", "sin(x1)"}},
                              {"sin(x1)", "cos(x1)", "0"});
  std::vector<double> sup;
  for (int n : {64, 128}) {
    const auto sys = reduce(spec, testutil::grid_for(spec, n));
    SolveConfig cfg;
    cfg.T = 1.0;
    double s = 0.0;
    integrate(sys, cfg, [&](const Snapshot& snap) {
      s = std::max(s, l2_norm(snap.levels[0].values(), *sys.grid) / std::sqrt(3.0));
    });
    sup.push_back(s);
  }
  EXPECT_TRUE(std::isfinite(sup[1]));
  EXPECT_LT(std::abs(sup[1] / sup[0] - 1.0), 0.05);
}

TEST(Solver, AugmentCommutesWithDifferentiation) {
  const auto spec = make_spec(3, 1, {"1 + 0.5*sin(x1)"}, {{"b1_1", "0.2*cos(x1)"}, {"b3", "0.3"}},
                              {"sin(x1)", "0", "cos(2*x1)"}, "0.1*cos(x1)");
  const auto base = reduce(spec, testutil::grid_for(spec, 64));
  SolveConfig cfg;
  cfg.T = 0.5;
  const auto res = integrate(augment(base, 2), cfg);
  const auto& lv = res.final_state.levels;
  for (int c = 0; c < 3; ++c) {
    GridFunction f(base.grid, 1);
    const auto src = lv[0].component(c);
    std::copy(src.begin(), src.end(), f.values().begin());
    const auto d1 = spectral_derivative(f, 0, 1), d2 = spectral_derivative(f, 0, 2);
    for (std::size_t p = 0; p < base.grid->size(); ++p) {
      EXPECT_NEAR(lv[1].component(c)[p], d1.values()[p], 1e-8);
      EXPECT_NEAR(lv[2].component(c)[p], d2.values()[p], 1e-7);
    }
  }
}

TEST(Solver, BlowUpIsReported) {
  const auto spec = make_spec(2, 1, {"1"}, {{"d", "-100"}}, {"1"});
  const auto sys = reduce(spec, testutil::grid_for(spec, 16));
  SolveConfig cfg;
  cfg.T = 5.0;
  cfg.blowup_threshold = 1e6;
  const auto res = integrate(sys, cfg);
  ASSERT_TRUE(res.blew_up);
  // u = cosh(10 t); the first component past 1e6 is d_t u = 10 sinh(10 t).
  const double crossing = std::asinh(1e5) / 10.0;
  EXPECT_GE(res.blowup_time, crossing);
  EXPECT_LE(res.blowup_time, crossing + res.dt + 1e-12);
  EXPECT_FALSE(res.abort_reason.empty());
}

TEST(Solver, StepSizeAndRecording) {
  const auto spec = make_spec(3, 1, {"4 + sin(x1)"});
  const auto sys = reduce(spec, testutil::grid_for(spec, 32));
  EXPECT_NEAR(characteristic_speed(sys), std::sqrt(5.0), 1e-12);
  const double h = 2 * std::numbers::pi / 32;
  const double dt = stable_dt(sys, 0.4, 1.0);
  EXPECT_LE(dt, 0.4 * h / std::sqrt(5.0) + 1e-15);
  EXPECT_NEAR(1.0 / dt, std::round(1.0 / dt), 1e-9);
  SolveConfig cfg;
  cfg.T = 1.0;
  cfg.record_every = 7;
  int calls = 0;
  const auto res = integrate(sys, cfg, [&](const Snapshot&) { ++calls; });
  EXPECT_EQ(static_cast<std::size_t>(calls), res.record_times.size());
  EXPECT_DOUBLE_EQ(res.record_times.back(), 1.0);
  for (std::size_t i = 1; i < res.record_times.size(); ++i) EXPECT_GT(res.record_times[i], res.record_times[i - 1]);
  EXPECT_THROW(integrate(sys, SolveConfig{.T = -1.0}), ArgumentError);
}

TEST(Solver, DealiasedRunStaysClose) {
  const auto spec = make_spec(2, 1, {"1 + 0.5*sin(x1)"}, {}, {"sin(x1)"});
  const auto sys = reduce(spec, testutil::grid_for(spec, 64));
  SolveConfig cfg;
  cfg.T = 1.0;
  const auto plain = integrate(sys, cfg);
  cfg.dealias = true;
  const auto dealiased = integrate(sys, cfg);
  EXPECT_LT(l2_diff(plain.final_state.u, dealiased.final_state.u, *sys.grid), 1e-6);
}
