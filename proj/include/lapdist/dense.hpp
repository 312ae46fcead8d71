// Copyright 2026 The lapdist Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense reference linear algebra. Everything here is O(n^3) and meant for
// verification, never for the distributed code paths.

#ifndef LAPDIST_DENSE_HPP_
#define LAPDIST_DENSE_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lapdist/graph.hpp"

namespace lapdist {

class oracle_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline double max_abs(const DenseMatrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

inline void require_symmetric(const DenseMatrix& m, double tol, const char* who) {
  if (m.rows() != m.cols()) throw oracle_error(std::string(who) + ": matrix is not square");
  const double asym = m.size() ? (m - m.transpose()).cwiseAbs().maxCoeff() : 0.0;
  if (asym > tol * std::max(1.0, max_abs(m))) {
    throw oracle_error(std::string(who) + ": asymmetry " + std::to_string(asym) + " beyond tolerance");
  }
}

/// Eigen-decomposition split into range and kernel.
struct RangeSplit {
  DenseMatrix range;      // orthonormal columns
  Vector range_values;    // matching eigenvalues
  DenseMatrix kernel;     // orthonormal columns
};

inline RangeSplit split_range(const DenseMatrix& a, double rel_tol) {
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(0.5 * (a + a.transpose()));
  const auto& vals = es.eigenvalues();
  const double scale = vals.size() ? std::max(std::abs(vals.minCoeff()), std::abs(vals.maxCoeff())) : 0.0;
  const double cut = rel_tol * std::max(scale, std::numeric_limits<double>::min());
  std::vector<Eigen::Index> in_range, in_kernel;
  for (Eigen::Index i = 0; i < vals.size(); ++i) (std::abs(vals[i]) > cut ? in_range : in_kernel).push_back(i);
  RangeSplit out;
  out.range.resize(a.rows(), static_cast<Eigen::Index>(in_range.size()));
  out.range_values.resize(static_cast<Eigen::Index>(in_range.size()));
  out.kernel.resize(a.rows(), static_cast<Eigen::Index>(in_kernel.size()));
  for (std::size_t j = 0; j < in_range.size(); ++j) {
    out.range.col(static_cast<Eigen::Index>(j)) = es.eigenvectors().col(in_range[j]);
    out.range_values[static_cast<Eigen::Index>(j)] = vals[in_range[j]];
  }
  for (std::size_t j = 0; j < in_kernel.size(); ++j) {
    out.kernel.col(static_cast<Eigen::Index>(j)) = es.eigenvectors().col(in_kernel[j]);
  }
  return out;
}

}  // namespace detail

/// Moore-Penrose pseudoinverse of a symmetric PSD matrix.
inline DenseMatrix pseudo_inverse(const DenseMatrix& m, double rel_tol = 1e-10) {
  detail::require_symmetric(m, 1e-10, "pseudo_inverse");
  if (m.size() == 0) return m;
  const auto split = detail::split_range(m, rel_tol);
  const Vector inv = split.range_values.cwiseInverse();
  return split.range * inv.asDiagonal() * split.range.transpose();
}

/// SC(A, T) = A_TT - A_TS A_SS^+ A_ST, indexed in the order given by `t`.
inline DenseMatrix schur_complement(const DenseMatrix& a, const std::vector<NodeId>& t) {
  const auto n = a.rows();
  std::vector<char> keep(static_cast<std::size_t>(n), 0);
  for (NodeId i : t) {
    if (i < 0 || i >= n) throw oracle_error("schur_complement: index out of range");
    keep[static_cast<std::size_t>(i)] = 1;
  }
  std::vector<Eigen::Index> s;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!keep[static_cast<std::size_t>(i)]) s.push_back(i);
  }
  const auto nt = static_cast<Eigen::Index>(t.size());
  const auto ns = static_cast<Eigen::Index>(s.size());
  DenseMatrix att(nt, nt), ats(nt, ns), ass(ns, ns);
  for (Eigen::Index i = 0; i < nt; ++i) {
    for (Eigen::Index j = 0; j < nt; ++j) att(i, j) = a(t[static_cast<std::size_t>(i)], t[static_cast<std::size_t>(j)]);
    for (Eigen::Index j = 0; j < ns; ++j) ats(i, j) = a(t[static_cast<std::size_t>(i)], s[static_cast<std::size_t>(j)]);
  }
  for (Eigen::Index i = 0; i < ns; ++i) {
    for (Eigen::Index j = 0; j < ns; ++j) ass(i, j) = a(s[static_cast<std::size_t>(i)], s[static_cast<std::size_t>(j)]);
  }
  if (ns == 0) return att;
  DenseMatrix sc = att - ats * pseudo_inverse(0.5 * (ass + ass.transpose())) * ats.transpose();
  return 0.5 * (sc + sc.transpose());
}

/// Extremal generalized eigenvalues of (B, A) on range(A).
struct GeneralizedRange {
  double min = 1.0;
  double max = 1.0;
};

/// Generalized eigenvalues of (B, A) restricted to range(A). Throws when
/// the kernels differ (relative tolerance `kernel_tol`).
inline GeneralizedRange generalized_range(const DenseMatrix& a, const DenseMatrix& b, double kernel_tol = 1e-8) {
  detail::require_symmetric(a, 1e-8, "generalized_range(A)");
  detail::require_symmetric(b, 1e-8, "generalized_range(B)");
  if (a.rows() != b.rows()) throw oracle_error("generalized_range: dimension mismatch");
  const auto sa = detail::split_range(a, kernel_tol);
  const auto sb = detail::split_range(b, kernel_tol);
  const double scale_b = std::max(detail::max_abs(b), 1e-300);
  if (sa.kernel.cols() != sb.kernel.cols() ||
      (sa.kernel.cols() > 0 && (b * sa.kernel).cwiseAbs().maxCoeff() > 1e3 * kernel_tol * scale_b)) {
    throw oracle_error("kernel mismatch: dim(ker A)=" + std::to_string(sa.kernel.cols()) +
                       ", dim(ker B)=" + std::to_string(sb.kernel.cols()));
  }
  if (sa.range.cols() == 0) return {};
  const Vector inv_sqrt = sa.range_values.cwiseSqrt().cwiseInverse();
  const DenseMatrix w = sa.range * inv_sqrt.asDiagonal();
  DenseMatrix m = w.transpose() * b * w;
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(m, Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

struct ApproxCheck {
  bool ok = false;
  double witness = 1.0;  // extremal generalized eigenvalue (farthest from 1 in log scale)
  GeneralizedRange range;
};

/// A ~_eps B iff exp(-eps) A <= B <= exp(eps) A.
inline ApproxCheck spectral_approx_check(const DenseMatrix& a, const DenseMatrix& b, double eps, double tol = 1e-9) {
  const auto r = generalized_range(a, b);
  ApproxCheck out;
  out.range = r;
  const double lo = std::exp(-eps) * (1.0 - tol);
  const double hi = std::exp(eps) * (1.0 + tol);
  out.ok = r.min >= lo && r.max <= hi;
  const double d_lo = r.min > 0 ? -std::log(r.min) : std::numeric_limits<double>::infinity();
  const double d_hi = r.max > 0 ? std::log(r.max) : -std::numeric_limits<double>::infinity();
  out.witness = d_hi >= d_lo ? r.max : r.min;
  return out;
}

/// lo A <= B <= hi A, with relative tolerance `tol` on both ends.
inline bool loewner_sandwich_check(const DenseMatrix& a, const DenseMatrix& b, double lo, double hi,
                                   double tol = 1e-9, GeneralizedRange* range = nullptr) {
  const auto r = generalized_range(a, b);
  if (range != nullptr) *range = r;
  return r.min >= lo * (1.0 - tol) && r.max <= hi * (1.0 + tol);
}

/// sqrt(x^T A x); negative rounding noise is clamped.
inline double mahalanobis_norm(const Vector& x, const DenseMatrix& a) {
  return std::sqrt(std::max(0.0, x.dot(a * x)));
}

/// b_e = 1_u - 1_v.
inline Vector edge_vector(NodeId n, NodeId u, NodeId v) {
  Vector b = Vector::Zero(n);
  b[u] += 1.0;
  b[v] -= 1.0;
  return b;
}

/// Exact pseudoinverse solver for a graph Laplacian. Connected graphs use a
/// Cholesky factor of L + J/n; otherwise falls back to an eigen pseudoinverse.
class LaplacianPinv {
 public:
  LaplacianPinv() = default;
  explicit LaplacianPinv(const DenseMatrix& l) { reset(l); }

  void reset(const DenseMatrix& l) {
    n_ = l.rows();
    if (n_ == 0) return;
    const DenseMatrix shifted = l + DenseMatrix::Constant(n_, n_, 1.0 / static_cast<double>(n_));
    llt_.compute(shifted);
    use_llt_ = llt_.info() == Eigen::Success;
    if (use_llt_) {
      // Reject near-singular factors (disconnected graphs).
      const Vector d = llt_.matrixLLT().diagonal();
      use_llt_ = d.minCoeff() > 1e-7 * std::max(1.0, d.maxCoeff());
    }
    if (!use_llt_) pinv_ = pseudo_inverse(l);
  }

  Eigen::Index size() const { return n_; }

  Vector solve(const Vector& b) const {
    if (n_ == 0) return b;
    if (!use_llt_) return pinv_ * b;
    Vector x = llt_.solve(project_out_constant(b));
    return project_out_constant(x);
  }

  DenseMatrix solve(const DenseMatrix& b) const {
    if (n_ == 0) return b;
    if (!use_llt_) return pinv_ * b;
    DenseMatrix centred = b.rowwise() - b.colwise().mean();
    DenseMatrix x = llt_.solve(centred);
    return x.rowwise() - x.colwise().mean();
  }

  DenseMatrix matrix() const {
    if (!use_llt_) return pinv_;
    return solve(DenseMatrix(DenseMatrix::Identity(n_, n_)));
  }

 private:
  Eigen::Index n_ = 0;
  bool use_llt_ = false;
  Eigen::LLT<DenseMatrix> llt_;
  DenseMatrix pinv_;
};

/// x = L^+ b. Components of b in ker(L) are ignored.
inline Vector exact_solve(const DenseMatrix& l, const Vector& b) { return LaplacianPinv(l).solve(b); }

/// r_e^{-1} b_e^T L^+ b_e = w_e * R_eff(u, v).
inline double leverage_score_exact(const WeightedGraph& g, EdgeId e) {
  const auto& edge = g.edge(e);
  if (edge.is_self_loop()) return 0.0;
  const DenseMatrix pinv = pseudo_inverse(laplacian(g));
  const double reff = pinv(edge.u, edge.u) + pinv(edge.v, edge.v) - 2.0 * pinv(edge.u, edge.v);
  return std::clamp(edge.weight * reff, 0.0, 1.0);
}

/// All leverage scores from one pseudoinverse.
inline std::vector<double> leverage_scores_exact(const WeightedGraph& g) {
  const DenseMatrix pinv = LaplacianPinv(laplacian(g)).matrix();
  std::vector<double> out(g.num_edges(), 0.0);
  for (const auto& e : g.edges()) {
    if (e.is_self_loop()) continue;
    const double reff = pinv(e.u, e.u) + pinv(e.v, e.v) - 2.0 * pinv(e.u, e.v);
    out[static_cast<std::size_t>(e.id)] = std::clamp(e.weight * reff, 0.0, 1.0);
  }
  return out;
}

/// Schur complement of L(G) onto `t`, returned as a graph on 0..|t|-1
/// (entry i of `t` becomes node i). Off-diagonals below `drop` are omitted.
inline WeightedGraph schur_complement_graph(const WeightedGraph& g, const std::vector<NodeId>& t, double drop = 1e-12) {
  const DenseMatrix sc = schur_complement(laplacian(g), t);
  WeightedGraph h(static_cast<NodeId>(t.size()));
  for (Eigen::Index i = 0; i < sc.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < sc.cols(); ++j) {
      if (-sc(i, j) > drop) h.add_edge(static_cast<NodeId>(i), static_cast<NodeId>(j), -sc(i, j));
    }
  }
  return h;
}

}  // namespace lapdist

#endif  // LAPDIST_DENSE_HPP_
