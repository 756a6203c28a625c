#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "weakhyp/grid.hpp"

using namespace weakhyp;

namespace {

std::shared_ptr<const Grid> periodic(int dim, int points) {
  return std::make_shared<const Grid>(Grid::cube(dim, points, 2 * std::numbers::pi));
}

GridFunction sample(const std::shared_ptr<const Grid>& g, auto f) {
  GridFunction out(g, 1);
  for (std::size_t p = 0; p < g->size(); ++p) out.values()[p] = f(g->point(p));
  return out;
}

}  // namespace

TEST(Grid, LayoutAndRefinement) {
  const Grid g({4, 8}, {1.0, 2.0}, {0.5, -1.0});
  EXPECT_EQ(g.size(), 32u);
  EXPECT_DOUBLE_EQ(g.spacing(0), 0.25);
  EXPECT_DOUBLE_EQ(g.cell_volume(), 0.25 * 0.25);
  EXPECT_EQ(g.multi_index(9), (std::vector<int>{1, 1}));
  EXPECT_DOUBLE_EQ(g.point(9)[0], 0.75);
  EXPECT_DOUBLE_EQ(g.point(9)[1], -0.75);
  EXPECT_EQ(g.refined(2).size(), 128u);
  EXPECT_THROW(Grid({6}, {1.0}), ArgumentError);
  EXPECT_THROW(Grid({8}, {0.0}), ArgumentError);
}

TEST(SpectralDerivative, ExactForTrigPolynomials) {
  const auto g = periodic(1, 64);
  const auto f = sample(g, [](const std::vector<double>& x) { return std::sin(3 * x[0]) + std::cos(5 * x[0]); });
  for (int order = 1; order <= 4; ++order) {
    const auto d = spectral_derivative(f, 0, order);
    for (std::size_t p = 0; p < g->size(); ++p) {
      const double x = g->point(p)[0];
      const double expect = std::pow(3.0, order) * std::sin(3 * x + order * std::numbers::pi / 2) +
                            std::pow(5.0, order) * std::cos(5 * x + order * std::numbers::pi / 2);
      EXPECT_NEAR(d.values()[p], expect, 1e-10 * std::pow(5.0, order));
    }
  }
  EXPECT_THROW(spectral_derivative(f, 0, 5), ArgumentError);
  EXPECT_THROW(spectral_derivative(f, 1, 1), ArgumentError);
}

TEST(SpectralDerivative, MixedAxesIn2d) {
  const auto g = periodic(2, 32);
  const auto f = sample(g, [](const std::vector<double>& x) { return std::sin(2 * x[0]) * std::cos(x[1]); });
  const auto dxy = spectral_derivative(spectral_derivative(f, 0, 1), 1, 1);
  for (std::size_t p = 0; p < g->size(); p += 5) {
    const auto x = g->point(p);
    EXPECT_NEAR(dxy.values()[p], -2 * std::cos(2 * x[0]) * std::sin(x[1]), 1e-12);
  }
}

TEST(SpectralDerivative, OddDerivativeDropsNyquist) {
  const auto g = periodic(1, 16);
  const auto f = sample(g, [](const std::vector<double>& x) { return std::cos(8 * x[0]); });
  const auto d = spectral_derivative(f, 0, 1);
  EXPECT_LT(d.max_abs(), 1e-12);
}

TEST(SpectralDerivative, ConvergesForSmoothNonTrig) {
  double prev = 1.0;
  for (int n : {16, 32}) {
    const auto g = periodic(1, n);
    const auto f = sample(g, [](const std::vector<double>& x) { return std::exp(std::sin(x[0])); });
    const auto d = spectral_derivative(f, 0, 1);
    double err = 0.0;
    for (std::size_t p = 0; p < g->size(); ++p) {
      const double x = g->point(p)[0];
      err = std::max(err, std::abs(d.values()[p] - std::cos(x) * std::exp(std::sin(x))));
    }
    EXPECT_LT(err, prev);
    prev = err;
  }
  EXPECT_LT(prev, 1e-10);
}

TEST(SobolevNorm, H0EqualsL2) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  for (int dim : {1, 2}) {
    const auto g = periodic(dim, dim == 1 ? 128 : 16);
    GridFunction f(g, 1);
    for (double& v : f.values()) v = normal(rng);
    EXPECT_NEAR(sobolev_norm(f, 0), l2_norm(f.values(), *g), 1e-10 * l2_norm(f.values(), *g));
  }
}

TEST(SobolevNorm, SingleModeClosedForm) {
  // ||sin(kx)||_{H^s}^2 on [0, 2pi) is pi (1 + k^2)^s.
  const auto g = periodic(1, 64);
  const auto f = sample(g, [](const std::vector<double>& x) { return std::sin(4 * x[0]); });
  for (int s = 0; s <= 3; ++s) {
    EXPECT_NEAR(sobolev_norm(f, s), std::sqrt(std::numbers::pi * std::pow(17.0, s)), 1e-9 * std::pow(17.0, s));
  }
  const SpectralOps ops(*g);
  EXPECT_NEAR(ops.sobolev_norm_squared(f.values(), -1.0), std::numbers::pi / 17.0, 1e-12);
  EXPECT_THROW(sobolev_norm(f, 7), ArgumentError);
}

TEST(Dealias, RemovesUpperThird) {
  const auto g = periodic(1, 32);
  auto f = sample(g, [](const std::vector<double>& x) { return std::sin(3 * x[0]) + std::sin(14 * x[0]); });
  SpectralOps(*g).dealias(f.values());
  for (std::size_t p = 0; p < g->size(); ++p) EXPECT_NEAR(f.values()[p], std::sin(3 * g->point(p)[0]), 1e-12);
}
