#pragma once

#include <Eigen/Dense>

#include "fairkrr/grid.hpp"

namespace fairkrr {

struct KernelSpec {
  enum class Kind { linear, gaussian };
  Kind kind = Kind::linear;
  double gamma = 1.0;  // gaussian only, > 0

  static KernelSpec linear() { return {Kind::linear, 0.0}; }
  static KernelSpec gaussian(double gamma) { return {Kind::gaussian, gamma}; }
};

// Pairwise squared Euclidean distances via the expanded form
// |a|^2 + |b|^2 - 2 a.b, clamped at 0 against negative round-off.
// Parallelized over rows with OpenMP; every entry is computed entirely by one
// thread, so the result is bitwise independent of the worker count.
Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// Gram matrix: entry (i, j) = kernel(a_i, b_j). Same parallel layout as
// squared_distances.
Eigen::MatrixXd gram(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                     const KernelSpec& spec);

// Gaussian Gram from a precomputed squared-distance matrix.
Eigen::MatrixXd gram_from_distances(const Eigen::MatrixXd& d2, double gamma);

// Plain-loop reference implementations used by tests to pin down the parallel
// versions (results must match bitwise) and by the benchmark target.
namespace serial {
Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
Eigen::MatrixXd gram(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                     const KernelSpec& spec);
}  // namespace serial

// The fairness constraint system. One column per (target bin k, sensitive bin
// pair p < q) with both cells nonempty; pairs with an empty cell are dropped
// and recorded. Only p < q is stored: swapping p and q negates the column,
// which an absolute-value constraint cannot see.
//
// representer mode: column c of M has +1/n_{k,p} on the rows of D_{k,p} and
// -1/n_{k,q} on the rows of D_{k,q}, so that for a kernel expansion with
// coefficients alpha the constraint values are M^T K alpha.
// primal mode (linear kernel only): column c of A is u_{k,p} - u_{k,q}, the
// difference of per-cell means of the model inputs; constraint values are
// A^T w.
struct ConstraintSystem {
  enum class Mode { primal, representer };

  struct PairId {
    int k = 0, p = 0, q = 0;
  };

  Mode mode = Mode::representer;
  Eigen::MatrixXd M;  // n x C (representer)
  Eigen::MatrixXd A;  // d x C (primal; empty unless linear kernel)
  std::vector<PairId> pair_index;
  std::vector<PairId> dropped;

  int C() const { return static_cast<int>(pair_index.size()); }

  // The same system addressed through its primal form. Only valid when A was
  // populated (linear kernel).
  ConstraintSystem primal_view() const;
};

// Build the constraint system for a binned dataset. The representer form is
// always populated; the primal form additionally when the kernel is linear.
// Throws when no column survives (every pair has an empty cell): the grid is
// too fine for the data.
ConstraintSystem build_constraints(const BinnedDataset& binned, const KernelSpec& spec);

// Constraint values for fitted coefficients: M^T (K alpha) in representer
// mode (pass the training Gram matrix), A^T w in primal mode (the matrix
// argument is unused). The fairness constraint is |result|_1 <= epsilon_hat.
Eigen::VectorXd constraint_values(const Eigen::VectorXd& coefficients,
                                  const Eigen::MatrixXd& gram_or_features,
                                  const ConstraintSystem& system);

// Project feature vectors onto the orthogonal complement of span(columns of
// A), so any linear model on the transformed features satisfies A^T w = 0
// exactly. Rank is read off a singular value decomposition of A. A zero (or
// column-free) A yields the identity transform.
Eigen::MatrixXd null_space_features(const Eigen::MatrixXd& features,
                                    const ConstraintSystem& system);

}  // namespace fairkrr
