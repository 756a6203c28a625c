#pragma once

// Standard symmetriser of a Sylvester matrix, its diagonal comparison matrix
// Psi, and the Kinoshita-Spagnolo condition on the characteristic roots.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "weakhyp/errors.hpp"

namespace weakhyp {

class EigenvalueTuple {
 public:
  EigenvalueTuple() = default;
  EigenvalueTuple(std::vector<double> values) : values_(std::move(values)) {
    if (values_.size() < 2) throw ArgumentError("eigenvalue tuple needs m >= 2 roots");
    for (double v : values_) {
      if (!std::isfinite(v)) throw ArgumentError("eigenvalue tuple entries must be finite");
    }
  }
  EigenvalueTuple(std::initializer_list<double> values) : EigenvalueTuple(std::vector<double>(values)) {}

  int size() const { return static_cast<int>(values_.size()); }
  double operator[](int i) const { return values_[i]; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> values_;
};

// Symmetric m x m matrix with a single packed lower triangle, so (i,j) and
// (j,i) are the same storage cell.
class SymmetricMatrix {
 public:
  SymmetricMatrix() = default;
  explicit SymmetricMatrix(int m) : m_(m), packed_(static_cast<std::size_t>(m) * (m + 1) / 2, 0.0) {}

  int size() const { return m_; }
  double& operator()(int i, int j) { return packed_[slot(i, j)]; }
  double operator()(int i, int j) const { return packed_[slot(i, j)]; }

  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd d(m_, m_);
    for (int i = 0; i < m_; ++i) {
      for (int j = 0; j < m_; ++j) d(i, j) = (*this)(i, j);
    }
    return d;
  }

  double max_abs() const {
    double s = 0.0;
    for (double v : packed_) s = std::max(s, std::abs(v));
    return s;
  }

 private:
  std::size_t slot(int i, int j) const {
    if (i < j) std::swap(i, j);
    return static_cast<std::size_t>(i) * (i + 1) / 2 + j;
  }
  int m_ = 0;
  std::vector<double> packed_;
};

// Companion matrix: ones on the superdiagonal, coefficients in the last row.
struct SylvesterMatrix {
  std::vector<double> last_row;

  int size() const { return static_cast<int>(last_row.size()); }

  Eigen::MatrixXd dense() const {
    const int m = size();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i + 1 < m; ++i) a(i, i + 1) = 1.0;
    for (int j = 0; j < m; ++j) a(m - 1, j) = last_row[j];
    return a;
  }

  // Largest entry modulus, counting the superdiagonal ones.
  double max_abs() const {
    double s = 1.0;
    for (double v : last_row) s = std::max(s, std::abs(v));
    return s;
  }
};

struct ComparisonReport {
  double gamma_lower = 0.0;
  double gamma_upper = 0.0;
  Eigen::VectorXd worst_vector_lower;
  Eigen::VectorXd worst_vector_upper;
  int samples = 0;
};

namespace detail {

// Elementary symmetric polynomials e_0..e_len of `x`, skipping index `omit` (-1: none).
inline std::vector<double> elementary_symmetric(const std::vector<double>& x, int omit = -1) {
  std::vector<double> e(x.size() + 1, 0.0);
  e[0] = 1.0;
  int used = 0;
  for (int i = 0; i < static_cast<int>(x.size()); ++i) {
    if (i == omit) continue;
    ++used;
    for (int k = used; k >= 1; --k) e[k] += x[i] * e[k - 1];
  }
  return e;
}

}  // namespace detail

// (-1)^h e_h(lambda without lambda_k), with the root index k in 1..m.
inline double elementary_sigma(const EigenvalueTuple& lambda, int h, int k) {
  const int m = lambda.size();
  if (h < 0 || h > m - 1) throw ArgumentError("elementary_sigma: h must lie in [0, m-1]");
  if (k < 1 || k > m) throw ArgumentError("elementary_sigma: root index must lie in [1, m]");
  const auto e = detail::elementary_symmetric(lambda.values(), k - 1);
  return (h % 2 == 0 ? 1.0 : -1.0) * e[h];
}

inline SymmetricMatrix standard_symmetriser(const EigenvalueTuple& lambda) {
  const int m = lambda.size();
  if (m < 2) throw ArgumentError("standard_symmetriser needs m >= 2");
  // sigma[h][k]
  std::vector<std::vector<double>> sigma(m, std::vector<double>(m));
  for (int k = 0; k < m; ++k) {
    const auto e = detail::elementary_symmetric(lambda.values(), k);
    for (int h = 0; h < m; ++h) sigma[h][k] = (h % 2 == 0 ? 1.0 : -1.0) * e[h];
  }
  SymmetricMatrix q(m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j <= i; ++j) {
      // Row i (0-based) pairs with sigma_{m-1-i}.
      double s = 0.0;
      for (int k = 0; k < m; ++k) s += sigma[m - 1 - i][k] * sigma[m - 1 - j][k];
      q(i, j) = s / m;
    }
  }
  return q;
}

inline SylvesterMatrix sylvester_from_roots(const EigenvalueTuple& lambda) {
  // prod (tau - lambda_i) = tau^m + c_{m-1} tau^{m-1} + ... + c_0 and the
  // companion last row is (-c_0, ..., -c_{m-1}).
  const int m = lambda.size();
  const auto e = detail::elementary_symmetric(lambda.values());
  SylvesterMatrix a;
  a.last_row.resize(m);
  for (int j = 0; j < m; ++j) {
    const int h = m - j;  // c_j = (-1)^h e_h
    const double c = (h % 2 == 0 ? 1.0 : -1.0) * e[h];
    a.last_row[j] = c == 0.0 ? 0.0 : -c;
  }
  return a;
}

// max |QA - (QA)^T|.
inline double symmetrise_check(const SymmetricMatrix& q, const SylvesterMatrix& a) {
  if (q.size() != a.size()) throw ArgumentError("symmetrise_check: size mismatch");
  const Eigen::MatrixXd qa = q.dense() * a.dense();
  return (qa - qa.transpose()).cwiseAbs().maxCoeff();
}

// prod_{i<j} (lambda_i - lambda_j)^2.
inline double discriminant_delta(const EigenvalueTuple& lambda) {
  double d = 1.0;
  for (int i = 0; i < lambda.size(); ++i) {
    for (int j = i + 1; j < lambda.size(); ++j) d *= (lambda[i] - lambda[j]) * (lambda[i] - lambda[j]);
  }
  return d;
}

// psi_k = e_k(lambda_1^2, ..., lambda_m^2).
inline std::vector<double> psi_values(const EigenvalueTuple& lambda) {
  std::vector<double> sq(lambda.values());
  for (double& v : sq) v *= v;
  return detail::elementary_symmetric(sq);
}

// diag(psi_{m-1}, ..., psi_1, psi_0).
inline SymmetricMatrix psi_matrix(const EigenvalueTuple& lambda) {
  const int m = lambda.size();
  const auto psi = psi_values(lambda);
  SymmetricMatrix p(m);
  for (int i = 0; i < m; ++i) p(i, i) = psi[m - 1 - i];
  return p;
}

// Extremal ratios <Qv,v>/<Psi v,v> over coordinate axes, pencil eigenvectors
// and `samples` seeded random unit vectors.
inline ComparisonReport compare_q_psi(const EigenvalueTuple& lambda, int samples = 4096,
                                      std::uint64_t seed = 20240601) {
  if (samples < 1) throw ArgumentError("compare_q_psi needs samples >= 1");
  const int m = lambda.size();
  const Eigen::MatrixXd q = standard_symmetriser(lambda).dense();
  const Eigen::MatrixXd psi = psi_matrix(lambda).dense();
  const double psi_scale = psi.diagonal().cwiseAbs().maxCoeff();
  if (psi_scale == 0.0) throw DegenerateInput("Psi vanishes identically");
  const double floor = 1e-14 * psi_scale;

  ComparisonReport report;
  report.gamma_lower = std::numeric_limits<double>::infinity();
  report.gamma_upper = -std::numeric_limits<double>::infinity();
  const auto consider = [&](Eigen::VectorXd v) {
    const double norm = v.norm();
    if (norm == 0.0) return;
    v /= norm;
    const double den = v.dot(psi * v);
    if (den <= floor) return;
    const double r = v.dot(q * v) / den;
    ++report.samples;
    if (r < report.gamma_lower) {
      report.gamma_lower = r;
      report.worst_vector_lower = v;
    }
    if (r > report.gamma_upper) {
      report.gamma_upper = r;
      report.worst_vector_upper = v;
    }
  };

  for (int i = 0; i < m; ++i) consider(Eigen::VectorXd::Unit(m, i));

  // Psi is diagonal: on its support the pencil reduces to a symmetric
  // eigenproblem for D^{-1/2} Q D^{-1/2}.
  std::vector<int> support;
  for (int i = 0; i < m; ++i) {
    if (psi(i, i) > floor) support.push_back(i);
  }
  const int s = static_cast<int>(support.size());
  Eigen::MatrixXd scaled(s, s);
  for (int i = 0; i < s; ++i) {
    for (int j = 0; j < s; ++j) {
      scaled(i, j) = q(support[i], support[j]) /
                     std::sqrt(psi(support[i], support[i]) * psi(support[j], support[j]));
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scaled);
  for (int c = 0; c < s; ++c) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(m);
    for (int i = 0; i < s; ++i) v(support[i]) = eig.eigenvectors()(i, c) / std::sqrt(psi(support[i], support[i]));
    consider(v);
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (int k = 0; k < samples; ++k) {
    Eigen::VectorXd v(m);
    for (int i = 0; i < m; ++i) v(i) = normal(rng);
    consider(v);
  }
  if (report.samples == 0) throw DegenerateInput("Psi vanishes on every sampled vector");
  report.gamma_lower = std::max(report.gamma_lower, 0.0);
  return report;
}

struct KsResult {
  double M = 0.0;
  bool infinite = false;
  std::size_t worst_sample = 0;
};

// Smallest M with lambda_i^2 + lambda_j^2 <= M (lambda_i - lambda_j)^2 over all samples and pairs.
inline KsResult ks_condition(const std::vector<EigenvalueTuple>& lambda_field) {
  if (lambda_field.empty()) throw ArgumentError("ks_condition needs at least one sample");
  KsResult r;
  for (std::size_t s = 0; s < lambda_field.size(); ++s) {
    const auto& l = lambda_field[s];
    for (int i = 0; i < l.size(); ++i) {
      for (int j = i + 1; j < l.size(); ++j) {
        const double num = l[i] * l[i] + l[j] * l[j];
        const double den = (l[i] - l[j]) * (l[i] - l[j]);
        if (den == 0.0) {
          if (num > 0.0 && !r.infinite) {
            r.infinite = true;
            r.worst_sample = s;
          }
          continue;
        }
        if (!r.infinite && num / den > r.M) {
          r.M = num / den;
          r.worst_sample = s;
        }
      }
    }
  }
  if (r.infinite) r.M = std::numeric_limits<double>::infinity();
  return r;
}

struct KsEquivalents {
  double lhs1 = 0.0;  // prod_{i<j} (lambda_i^2 + lambda_j^2)
  double rhs1 = 0.0;  // Delta
  double lhs2 = 0.0;  // psi_1 ... psi_{m-1}
  double rhs2 = 0.0;  // Delta
};

inline KsEquivalents ks_equivalents(const EigenvalueTuple& lambda) {
  KsEquivalents k;
  k.lhs1 = 1.0;
  for (int i = 0; i < lambda.size(); ++i) {
    for (int j = i + 1; j < lambda.size(); ++j) k.lhs1 *= lambda[i] * lambda[i] + lambda[j] * lambda[j];
  }
  const auto psi = psi_values(lambda);
  k.lhs2 = 1.0;
  for (int h = 1; h < lambda.size(); ++h) k.lhs2 *= psi[h];
  k.rhs1 = k.rhs2 = discriminant_delta(lambda);
  return k;
}

// Separates a leading block of zero roots: lambda_i -> eps (lambda_k / k) i
// for i < k, where k (1-based) is the first nonzero root.
inline EigenvalueTuple eps_separate(const EigenvalueTuple& lambda, double eps) {
  if (!(eps > 0.0 && eps <= 1.0)) throw ArgumentError("eps_separate needs 0 < eps <= 1");
  if (discriminant_delta(lambda) != 0.0) return lambda;
  const int m = lambda.size();
  int k = 0;
  while (k < m && lambda[k] == 0.0) ++k;
  if (k == m) throw DegenerateInput("eps_separate: all roots vanish");
  std::vector<double> out = lambda.values();
  const double step = eps * lambda[k] / (k + 1);
  for (int i = 0; i < k; ++i) out[i] = step * (i + 1);
  EigenvalueTuple separated(out);
  if (discriminant_delta(separated) == 0.0) {
    throw ArgumentError("eps_separate: coincident roots must form a leading block of zeros");
  }
  return separated;
}

}  // namespace weakhyp
