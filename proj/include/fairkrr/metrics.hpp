#pragma once

#include <Eigen/Dense>

#include "fairkrr/grid.hpp"

namespace fairkrr {

// A K x Q table of per-cell statistics, entry (k, q) describing cell D_{k,q}.
// Entries of empty cells are undefined and masked out; downstream sums never
// read them.
struct ConditionalTable {
  enum class Kind { probability, loss_risk };

  Eigen::MatrixXd values;                              // K x Q
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> defined;  // K x Q
  Kind kind = Kind::probability;

  int K() const { return static_cast<int>(values.rows()); }
  int Q() const { return static_cast<int>(values.cols()); }
};

enum class LossId { zero_one_bin, linear, squared, hinge, absolute_percentage };

struct LossSpec {
  LossId id = LossId::squared;
};

// Normalization of the pairwise gap sum S = sum_k sum_{p,q} |v_{k,p} - v_{k,q}|
// (ordered pairs, so (p,q) and (q,p) both count):
//   none   - raw S.
//   kq2    - S / (K * Q^2): divisor counts all ordered pairs including p == q.
//   kq_qm1 - S / (K * Q * (Q-1)): divisor counts only the pairs that can be
//            nonzero, so the value is the mean absolute pairwise difference.
// With masked cells the divisor is reduced to the number of defined pairs of
// the corresponding kind. Reports carry all three; the headline fairness
// number uses kq_qm1 (see report.hpp).
enum class GapNorm { none, kq2, kq_qm1 };

// Entry (k,q) = fraction of cell D_{k,q} whose prediction falls in target bin
// k. With `clamp` (default on) predictions outside the grid count toward the
// nearest end bin; otherwise they fall in no bin.
ConditionalTable conditional_probabilities(const std::vector<double>& predictions,
                                           const BinnedDataset& binned,
                                           bool clamp = true);

// Entry (k,q) = mean loss over cell D_{k,q}. zero_one_bin is the indicator
// that the prediction misses bin k (same membership rule as
// conditional_probabilities, clamped), linear is yhat - y (signed), squared
// is (yhat - y)^2, hinge is max(0, 1 - y*yhat) and requires labels in {-1,+1},
// absolute_percentage is 100*|y - yhat|/|y| and requires nonzero labels.
ConditionalTable conditional_risks(const std::vector<double>& predictions,
                                   const BinnedDataset& binned, LossSpec loss);

// The double sum over ordered column pairs described at GapNorm. If every row
// has fewer than two defined cells there are no pairs; the result is 0 and
// *degenerate (when given) is set.
double pairwise_gap_sum(const ConditionalTable& table, GapNorm norm = GapNorm::kq2,
                        bool* degenerate = nullptr);

struct LgfResult {
  double value = 0.0;
  bool is_fair = false;
};

// Loss-based fairness check: the normalized pairwise gap sum of the
// conditional risks under `loss`, compared against epsilon in [0, 1].
LgfResult lgf(const std::vector<double>& predictions, const BinnedDataset& binned,
              LossSpec loss, double epsilon, GapNorm norm = GapNorm::kq2);

// Mean absolute percentage error, 100*|y - yhat|/|y|. Zero targets are an
// error.
double mape(const std::vector<double>& predictions, const std::vector<double>& targets);

struct DeltaHatResult {
  double raw = 0.0;
  double normalized = 0.0;  // raw / number of defined ordered pairs
};

// Gap between the indicator-based fairness sum and its linear-loss
// relaxation: sum over defined ordered pairs of
//   |P^{k,p} - P^{k,q}| - |L^{k,p} - L^{k,q}|
// with L the conditional risks under the linear loss. Small values certify
// that the relaxation tracks the indicator quantity.
DeltaHatResult delta_hat(const std::vector<double>& predictions,
                         const BinnedDataset& binned);

}  // namespace fairkrr
