#pragma once

#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "fairkrr/grid.hpp"
#include "fairkrr/kernel.hpp"
#include "fairkrr/metrics.hpp"
#include "fairkrr/solver.hpp"

namespace fairkrr {

struct HyperGrid {
  std::vector<double> lambdas;  // positive, ascending
  std::vector<double> gammas;   // positive, ascending; empty for linear kernel

  // lambda in {10^-4, 10^-3.5, ..., 10^4} (17 values); gamma in
  // {10^-4, ..., 10^4} (9 values) for the gaussian kernel, none for linear.
  static HyperGrid defaults(KernelSpec::Kind kind);
};

struct SelectionPolicy {
  enum class Kind { naive, nvp };
  Kind kind = Kind::nvp;
  // nvp only: a combo joins the shortlist when its error is within
  // best / error_fraction; at 1.0 the band collapses to the exact best.
  double error_fraction = 0.9;
};

// Inner-CV means for one hyperparameter combo. gamma is 0 for the linear
// kernel (no width parameter).
struct ComboScore {
  double lambda = 0.0;
  double gamma = 0.0;
  double mape = 0.0;
  double dgf = 0.0;      // kq_qm1 normalization
  int folds_used = 0;    // inner folds that produced a fit
};

// The selection rule, applied to recorded per-combo scores.
//   naive: minimize mape.
//   nvp:   shortlist combos with mape <= best/error_fraction, then minimize
//          dgf within the shortlist.
// All ties break toward larger lambda, then smaller gamma (stronger
// regularization preferred). Pure function so tests can replay it against
// the recorded tables.
std::size_t pick_combo(const std::vector<ComboScore>& combos,
                       const SelectionPolicy& policy);

struct InnerSelection {
  double lambda = 0.0;
  double gamma = 0.0;
  std::vector<ComboScore> table;  // canonical order: gamma-major, lambda-minor
  std::vector<std::string> warnings;
};

struct InnerSelectConfig {
  KernelSpec::Kind kernel_kind = KernelSpec::Kind::gaussian;
  SolverConfig solver_template;  // loss, epsilon_hat, tolerances, centering
  int folds = 10;
  std::uint64_t seed = 0;
  bool clamp_predictions = true;
};

// Inner cross-validation over the grid on an already-binned training set.
// Each inner fold rebins its own training portion (target grid fit on that
// portion only) and scores on its validation portion.
InnerSelection inner_select(const BinnedDataset& train, const HyperGrid& grid,
                            const SelectionPolicy& policy,
                            const InnerSelectConfig& config);

// Deterministic shuffled k-fold partition of 0..n-1. Fold sizes differ by at
// most one; test sets are disjoint and cover all indices; both index lists
// come back sorted ascending.
std::vector<std::pair<std::vector<int>, std::vector<int>>> kfold_split(
    int n, int folds, std::uint64_t seed);

struct ExperimentSpec {
  KernelSpec::Kind kernel_kind = KernelSpec::Kind::gaussian;
  double epsilon_hat = 0.0;  // infinity for the unconstrained baseline
  int y_bins = 10;           // K; target grids are fit per training fold
  DiscretizationGrid s_grid; // prescribed sensitive grid
  bool include_sensitive = false;
  HyperGrid grid;
  SelectionPolicy policy;
  int repetitions = 30;
  int folds = 10;
  std::uint64_t seed = 1;
  SolverConfig solver_template;
  bool clamp_predictions = true;
};

struct FoldResult {
  int repetition = 0;
  int fold = 0;
  double lambda = 0.0;
  double gamma = 0.0;
  double mape = 0.0;
  double dgf = 0.0;        // kq_qm1
  double dgf_kq2 = 0.0;
  double dgf_raw = 0.0;
  double delta_hat = 0.0;  // normalized
  double delta_hat_raw = 0.0;
};

struct ExperimentReport {
  std::vector<FoldResult> folds;  // repetition-major, fold-minor
  std::vector<double> per_repetition_mape;
  std::vector<double> per_repetition_dgf;

  double mape_mean = 0.0, mape_std = 0.0;
  double dgf_mean = 0.0, dgf_std = 0.0;
  double dgf_kq2_mean = 0.0, dgf_raw_mean = 0.0;
  double delta_hat_mean = 0.0, delta_hat_raw_mean = 0.0;

  // (lambda, gamma, times chosen), ordered by lambda then gamma.
  std::vector<std::tuple<double, double, int>> chosen_histogram;

  // Mean test-fold conditional probability per cell, over the folds where the
  // cell was defined, plus that fold count. K x Q.
  Eigen::MatrixXd p_hat_mean;
  Eigen::MatrixXi p_hat_folds;

  int repetitions = 0;
  int folds_per_rep = 0;
  bool incomplete = false;
  std::vector<std::string> warnings;
};

// The full nested protocol: `repetitions` times, reshuffle an outer k-fold
// split; per outer fold run inner_select on the training portion, refit with
// the chosen combo on the whole training portion, and score the held-out
// fold. The (repetition x fold) units run in parallel under `jobs`;
// aggregation folds the canonically ordered results, so numbers are
// independent of the worker count.
ExperimentReport run_experiment(const std::vector<Sample>& data,
                                const ExperimentSpec& spec, int jobs);

}  // namespace fairkrr
