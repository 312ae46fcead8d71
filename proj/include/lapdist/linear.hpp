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

#ifndef LAPDIST_LINEAR_HPP_
#define LAPDIST_LINEAR_HPP_

#include <functional>
#include <memory>
#include <vector>

#include "lapdist/dense.hpp"
#include "lapdist/graph.hpp"

namespace lapdist {

/// Black-box Laplacian solver handed to the estimators. Counts calls.
class LaplacianSolver {
 public:
  virtual ~LaplacianSolver() = default;

  Vector solve(const Vector& b) {
    ++calls_;
    return do_solve(b);
  }

  /// Column-wise solve; counts one call per column.
  DenseMatrix solve_many(const DenseMatrix& b) {
    calls_ += b.cols();
    return do_solve_many(b);
  }

  std::int64_t calls() const { return calls_; }

 protected:
  virtual Vector do_solve(const Vector& b) = 0;
  virtual DenseMatrix do_solve_many(const DenseMatrix& b) {
    DenseMatrix x(b.rows(), b.cols());
    for (Eigen::Index j = 0; j < b.cols(); ++j) x.col(j) = do_solve(b.col(j));
    return x;
  }

 private:
  std::int64_t calls_ = 0;
};

/// Dense pseudoinverse solver.
class OracleSolver : public LaplacianSolver {
 public:
  explicit OracleSolver(const WeightedGraph& g) : pinv_(laplacian(g)) {}

 protected:
  Vector do_solve(const Vector& b) override { return pinv_.solve(b); }
  DenseMatrix do_solve_many(const DenseMatrix& b) override { return pinv_.solve(b); }

 private:
  LaplacianPinv pinv_;
};

using SolverFactory = std::function<std::unique_ptr<LaplacianSolver>(const WeightedGraph&)>;

inline SolverFactory oracle_solver_factory() {
  return [](const WeightedGraph& g) { return std::make_unique<OracleSolver>(g); };
}

/// One block-elimination step on an n-coordinate level. Coordinates in
/// `kept()` survive (in that order); the rest are eliminated. For an inner
/// operator S on the kept block,
///   apply(b, S) = Z1^T diag(Z2, S) Z1 b.
/// `reduce` computes the kept block of Z1 b and pushes what `lift` needs
/// onto `carry`; `lift` pops it.
class SchurReduction {
 public:
  virtual ~SchurReduction() = default;

  virtual NodeId size() const = 0;
  virtual const std::vector<NodeId>& kept() const = 0;
  virtual Vector reduce(const Vector& b, std::vector<Vector>& carry) const = 0;
  virtual Vector lift(std::vector<Vector>& carry, const Vector& x_kept) const = 0;

  /// Aggregation batches one application costs on the level's minor.
  virtual int aggregations_per_apply() const = 0;

  Vector apply(const Vector& b, const std::function<Vector(const Vector&)>& inner) const {
    std::vector<Vector> carry;
    const Vector bc = reduce(b, carry);
    return lift(carry, inner(bc));
  }
};

/// Identity reduction: nothing eliminated.
class IdentityReduction : public SchurReduction {
 public:
  explicit IdentityReduction(NodeId n) : n_(n), kept_(static_cast<std::size_t>(n)) {
    std::iota(kept_.begin(), kept_.end(), 0);
  }
  NodeId size() const override { return n_; }
  const std::vector<NodeId>& kept() const override { return kept_; }
  Vector reduce(const Vector& b, std::vector<Vector>&) const override { return b; }
  Vector lift(std::vector<Vector>&, const Vector& x) const override { return x; }
  int aggregations_per_apply() const override { return 0; }

 private:
  NodeId n_;
  std::vector<NodeId> kept_;
};

/// Sequential composition: step i+1 acts on the kept block of step i.
class ComposedReduction : public SchurReduction {
 public:
  explicit ComposedReduction(NodeId n) : n_(n), kept_(static_cast<std::size_t>(n)) {
    std::iota(kept_.begin(), kept_.end(), 0);
  }

  void push(std::shared_ptr<const SchurReduction> step) {
    if (step->size() != static_cast<NodeId>(kept_.size())) {
      throw std::invalid_argument("ComposedReduction: step size does not match the current kept block");
    }
    std::vector<NodeId> next;
    next.reserve(step->kept().size());
    for (NodeId i : step->kept()) next.push_back(kept_[static_cast<std::size_t>(i)]);
    kept_ = std::move(next);
    steps_.push_back(std::move(step));
  }

  std::size_t steps() const { return steps_.size(); }
  const SchurReduction& step(std::size_t i) const { return *steps_.at(i); }

  NodeId size() const override { return n_; }
  const std::vector<NodeId>& kept() const override { return kept_; }

  Vector reduce(const Vector& b, std::vector<Vector>& carry) const override {
    Vector cur = b;
    for (const auto& s : steps_) cur = s->reduce(cur, carry);
    return cur;
  }

  Vector lift(std::vector<Vector>& carry, const Vector& x) const override {
    Vector cur = x;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) cur = (*it)->lift(carry, cur);
    return cur;
  }

  int aggregations_per_apply() const override {
    int total = 0;
    for (const auto& s : steps_) total += s->aggregations_per_apply();
    return total;
  }

 private:
  NodeId n_;
  std::vector<NodeId> kept_;
  std::vector<std::shared_ptr<const SchurReduction>> steps_;
};

/// Dense matrix of b -> apply(b, inner) for a dense inner operator.
inline DenseMatrix materialize(const SchurReduction& r, const DenseMatrix& inner) {
  const NodeId n = r.size();
  DenseMatrix out(n, n);
  for (NodeId j = 0; j < n; ++j) {
    Vector e = Vector::Zero(n);
    e[j] = 1.0;
    out.col(j) = r.apply(e, [&](const Vector& bc) { return Vector(inner * bc); });
  }
  return out;
}

/// Pi M Pi with Pi the projection orthogonal to the all-ones vector.
inline DenseMatrix project_kernel(const DenseMatrix& m) {
  const Eigen::Index n = m.rows();
  const DenseMatrix p = DenseMatrix::Identity(n, n) - DenseMatrix::Constant(n, n, 1.0 / static_cast<double>(n));
  DenseMatrix out = p * m * p;
  return 0.5 * (out + out.transpose());
}

}  // namespace lapdist

#endif  // LAPDIST_LINEAR_HPP_
