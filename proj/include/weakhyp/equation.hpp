#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "weakhyp/coefficient.hpp"
#include "weakhyp/errors.hpp"
#include "weakhyp/grid.hpp"

namespace weakhyp {

enum class Domain {
  // The box is a torus; coefficients and data are periodic.
  Periodic,
  // The box stands in for R^n; data must keep clear of the boundary.
  Compact,
};

// Cauchy problem
//   d_t^m u - sum_i a_i(x) d_t^{m-2} d_i^2 u + (lower order terms) = f,
//   d_t^j u(0) = g_j,  j < m.
// Lower-order coefficient names per order:
//   m = 2     : b<i> (d_i u), c (d_t u), d (u)
//   m = 3     : b1_<i> (d_i^2 u), b2_<i> (d_t d_i u), b3 (d_t^2 u)
//   m = 4     : b<i> (d_i^3 u), b2_<i> (d_t d_i^2 u), b3_<i> (d_t^2 d_i u), b4 (d_t^3 u)
//   m = 2k > 4: b1_<i> (d_t^{m-3} d_i^2 u), b2_<i> (d_t^{m-2} d_i u), b3 (d_t^{m-1} u)
// with <i> in 1..n. Every term enters with a plus sign on the left-hand side.
struct EquationSpec {
  int order = 2;
  int dim = 1;
  std::vector<double> box_length{1.0};
  std::vector<double> origin{0.0};
  Domain domain = Domain::Periodic;
  double T = 1.0;
  std::vector<CoefficientFunction> principal;
  std::map<std::string, CoefficientFunction> lower;
  CoefficientFunction forcing;
  std::vector<CoefficientFunction> data;

  const CoefficientFunction& lower_term(const std::string& name) const {
    static const CoefficientFunction zero;
    const auto it = lower.find(name);
    return it == lower.end() ? zero : it->second;
  }

  const CoefficientFunction& datum(int j) const {
    static const CoefficientFunction zero;
    return j < static_cast<int>(data.size()) ? data[j] : zero;
  }

  Grid grid(int points) const { return Grid(std::vector<int>(dim, points), box_length, origin); }
  Grid grid(const std::vector<int>& points) const { return Grid(points, box_length, origin); }
};

inline bool is_supported_order(int order) { return order == 2 || order == 3 || (order >= 4 && order % 2 == 0); }

inline std::vector<std::string> lower_term_names(int order, int dim) {
  std::vector<std::string> names;
  const auto per_axis = [&](const std::string& prefix) {
    for (int i = 1; i <= dim; ++i) names.push_back(prefix + std::to_string(i));
  };
  if (order == 2) {
    per_axis("b");
    names.push_back("c");
    names.push_back("d");
  } else if (order == 3 || order >= 6) {
    per_axis("b1_");
    per_axis("b2_");
    names.push_back("b3");
  } else if (order == 4) {
    per_axis("b");
    per_axis("b2_");
    per_axis("b3_");
    names.push_back("b4");
  }
  return names;
}

// Structural validation; numerical conditions live in conditions.hpp.
inline void validate(const EquationSpec& spec) {
  if (!is_supported_order(spec.order)) {
    throw UnsupportedStructure("order " + std::to_string(spec.order) +
                               " is not supported (orders 2, 3 and even orders >= 4)");
  }
  if (spec.dim < 1) throw ArgumentError("dimension must be at least 1");
  if (static_cast<int>(spec.principal.size()) != spec.dim) {
    throw ArgumentError("need one principal coefficient a_i per dimension");
  }
  if (static_cast<int>(spec.box_length.size()) != spec.dim ||
      static_cast<int>(spec.origin.size()) != spec.dim) {
    throw ArgumentError("box length/origin must have one entry per dimension");
  }
  if (static_cast<int>(spec.data.size()) > spec.order) {
    throw ArgumentError("at most " + std::to_string(spec.order) + " initial data g_j");
  }
  if (!(spec.T > 0.0)) throw ArgumentError("final time T must be positive");
  for (const auto& a : spec.principal) {
    if (a.time_dependent()) throw UnsupportedStructure("time-dependent coefficients are not supported");
  }
  for (const auto& [name, f] : spec.lower) {
    if (f.time_dependent()) throw UnsupportedStructure("time-dependent coefficient '" + name + "' is not supported");
  }
  for (const auto& g : spec.data) {
    if (g.time_dependent()) throw ArgumentError("initial data cannot depend on t");
  }
  const auto names = lower_term_names(spec.order, spec.dim);
  for (const auto& [name, f] : spec.lower) {
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      throw UnsupportedStructure("lower-order term '" + name + "' is outside the order-" +
                                 std::to_string(spec.order) + " family");
    }
  }
}

}  // namespace weakhyp
