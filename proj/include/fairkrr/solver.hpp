#pragma once

#include <Eigen/Dense>
#include <limits>

#include "fairkrr/grid.hpp"
#include "fairkrr/kernel.hpp"

namespace fairkrr {

// Thrown when a fit fails numerically (singular system after retry, gross
// infeasibility at return). CLI maps this to exit code 3.
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Diagonal bump applied to the Gram matrix wherever it enters a factorized
// system. Keeps numerically semidefinite kernels (gaussian with tiny gamma,
// linear with n > d) safely positive definite. Well below every solver
// tolerance. Also the constant tests use when they rebuild the fitted
// problem.
inline constexpr double kGramJitter = 1e-10;

// Slack allowed on the L1 feasibility check at return.
inline constexpr double kFeasibilitySlack = 1e-6;

struct SolverConfig {
  enum class Loss { squared, hinge };

  Loss loss = Loss::squared;
  double lambda = 1.0;  // > 0
  // L1 budget for the constraint values; 0 enforces exact equality and
  // infinity disables the constraint.
  double epsilon_hat = std::numeric_limits<double>::infinity();

  // Splitting-method controls (used when 0 < epsilon_hat < inf, and for every
  // hinge fit). Defaults follow common practice; the stopping rule combines
  // relative primal/dual residual tolerances with an absolute floor of 1e-9.
  double rho = 1.0;
  double over_relaxation = 1.6;  // in [1, 2)
  bool adaptive_rho = true;
  double tol_primal = 1e-7;
  double tol_dual = 1e-7;
  int max_iter = 20000;

  // Subtract the training-target mean before fitting and add it back at
  // prediction (squared loss only). The constraint is unaffected: a constant
  // shift moves every cell mean equally. Recorded in reports.
  bool centered = false;

  std::uint64_t seed = 0;  // carried into reports; the solver itself is deterministic

  // Record (iteration, objective, constraint L1 norm) triples while
  // iterating. Used by diagnostics tests; off by default.
  bool record_trace = false;
};

struct TracePoint {
  int iteration = 0;
  double objective = 0.0;
  double constraint_l1 = 0.0;
};

struct FitDiagnostics {
  int iterations = 0;           // 0 for the direct (non-iterative) paths
  bool converged = true;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double objective = 0.0;
  double constraint_l1 = 0.0;
  double kkt_residual = 0.0;    // scaled stationarity residual, equality path
  double final_rho = 0.0;
  bool rescaled_for_feasibility = false;
  std::vector<TracePoint> trace;
};

// Coefficients plus fit metadata, without the training-set copy that a full
// FairModel carries. This is the work item the model-selection loops use.
struct AlphaSolution {
  Eigen::VectorXd alpha;
  double intercept = 0.0;
  FitDiagnostics diagnostics;
};

struct FairModel {
  Eigen::VectorXd alpha;
  double intercept = 0.0;
  KernelSpec kernel;
  Eigen::MatrixXd training_inputs;  // rows aligned with alpha
  ConstraintSystem system;
  SolverConfig config;
  FitDiagnostics diagnostics;
};

// Euclidean projection onto {u : |u|_1 <= radius}. radius 0 projects to the
// zero vector.
Eigen::VectorXd project_l1_ball(const Eigen::VectorXd& v, double radius);

// Solve for the kernel-expansion coefficients given the training Gram matrix
// (unjittered; the jitter is applied internally) and the constraint columns M
// (n x C; pass a 0-column matrix to drop the constraint). Dispatch:
//   squared, epsilon_hat = inf: ridge normal equations, one Cholesky solve.
//   squared, epsilon_hat = 0:   block elimination of the equality-constrained
//                               stationarity system; exact, no iteration.
//   everything else:            ADMM, constraint values split against the
//                               L1 ball (hinge adds a split on the margins).
// `warm_alpha` seeds the iterative path.
AlphaSolution solve_coefficients(const Eigen::VectorXd& y, const Eigen::MatrixXd& gram,
                                 const Eigen::MatrixXd& M, const SolverConfig& config,
                                 const Eigen::VectorXd* warm_alpha = nullptr);

// Fit on a binned dataset: builds the Gram matrix from the dataset's model
// inputs, solves, checks feasibility (|constraint values|_1 within
// kFeasibilitySlack of epsilon_hat, asserted on every fit), and packages a
// predictable model.
FairModel fit(const BinnedDataset& binned, const KernelSpec& kernel,
              const ConstraintSystem& system, const SolverConfig& config);

// Same, with a caller-supplied training Gram matrix (must equal
// gram(Z, Z, kernel) for the dataset's model inputs Z).
FairModel fit(const BinnedDataset& binned, const KernelSpec& kernel,
              const ConstraintSystem& system, const SolverConfig& config,
              const Eigen::MatrixXd& gram_train);

// Predictions K(inputs, training inputs) alpha + intercept.
std::vector<double> predict(const FairModel& model, const Eigen::MatrixXd& inputs);

// Objective of the fitted problem: sum of losses plus lambda alpha^T K alpha,
// evaluated with the same jittered Gram matrix the solver used. Targets are
// centered with the model's intercept, matching what was solved.
double objective(const FairModel& model, const BinnedDataset& binned,
                 const SolverConfig& config);

}  // namespace fairkrr
