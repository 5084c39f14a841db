#include "fairkrr/metrics.hpp"

#include <cmath>

namespace fairkrr {

namespace {

void check_alignment(const std::vector<double>& predictions, const BinnedDataset& binned) {
  if (static_cast<int>(predictions.size()) != binned.n())
    throw InvalidArgument("predictions not aligned with dataset");
}

}  // namespace

ConditionalTable conditional_probabilities(const std::vector<double>& predictions,
                                           const BinnedDataset& binned, bool clamp) {
  check_alignment(predictions, binned);
  int K = binned.K(), Q = binned.Q();
  ConditionalTable table;
  table.kind = ConditionalTable::Kind::probability;
  table.values = Eigen::MatrixXd::Zero(K, Q);
  table.defined.resize(K, Q);
  for (int k = 0; k < K; ++k) {
    for (int q = 0; q < Q; ++q) {
      int n_kq = binned.count(k, q);
      table.defined(k, q) = n_kq > 0;
      if (n_kq == 0) continue;
      int hits = 0;
      for (int i : binned.cell(k, q)) {
        double p = predictions[static_cast<std::size_t>(i)];
        int bin = clamp ? binned.y_grid.bin_clamped(p) : binned.y_grid.bin(p);
        if (bin == k) ++hits;
      }
      table.values(k, q) = static_cast<double>(hits) / static_cast<double>(n_kq);
    }
  }
  return table;
}

ConditionalTable conditional_risks(const std::vector<double>& predictions,
                                   const BinnedDataset& binned, LossSpec loss) {
  check_alignment(predictions, binned);
  int K = binned.K(), Q = binned.Q();
  ConditionalTable table;
  table.kind = ConditionalTable::Kind::loss_risk;
  table.values = Eigen::MatrixXd::Zero(K, Q);
  table.defined.resize(K, Q);
  for (int k = 0; k < K; ++k) {
    for (int q = 0; q < Q; ++q) {
      int n_kq = binned.count(k, q);
      table.defined(k, q) = n_kq > 0;
      if (n_kq == 0) continue;
      double sum = 0.0;
      for (int i : binned.cell(k, q)) {
        double yhat = predictions[static_cast<std::size_t>(i)];
        double y = binned.samples[static_cast<std::size_t>(i)].y;
        switch (loss.id) {
          case LossId::zero_one_bin:
            sum += binned.y_grid.bin_clamped(yhat) == k ? 0.0 : 1.0;
            break;
          case LossId::linear:
            sum += yhat - y;
            break;
          case LossId::squared:
            sum += (yhat - y) * (yhat - y);
            break;
          case LossId::hinge: {
            if (y != 1.0 && y != -1.0)
              throw InvalidArgument("hinge risk needs labels in {-1,+1}");
            double margin = 1.0 - y * yhat;
            sum += margin > 0.0 ? margin : 0.0;
            break;
          }
          case LossId::absolute_percentage:
            if (y == 0.0) throw InvalidArgument("absolute percentage risk needs nonzero labels");
            sum += 100.0 * std::abs(y - yhat) / std::abs(y);
            break;
        }
      }
      table.values(k, q) = sum / static_cast<double>(n_kq);
    }
  }
  return table;
}

double pairwise_gap_sum(const ConditionalTable& table, GapNorm norm, bool* degenerate) {
  int K = table.K(), Q = table.Q();
  double sum = 0.0;
  long pairs_off_diagonal = 0;  // defined ordered pairs with p != q
  long pairs_all = 0;           // defined ordered pairs including p == q
  for (int k = 0; k < K; ++k) {
    for (int p = 0; p < Q; ++p) {
      if (!table.defined(k, p)) continue;
      for (int q = 0; q < Q; ++q) {
        if (!table.defined(k, q)) continue;
        ++pairs_all;
        if (p == q) continue;
        ++pairs_off_diagonal;
        sum += std::abs(table.values(k, p) - table.values(k, q));
      }
    }
  }
  if (degenerate) *degenerate = pairs_off_diagonal == 0;
  if (pairs_off_diagonal == 0) return 0.0;
  switch (norm) {
    case GapNorm::none:
      return sum;
    case GapNorm::kq2:
      return sum / static_cast<double>(pairs_all);
    case GapNorm::kq_qm1:
      return sum / static_cast<double>(pairs_off_diagonal);
  }
  return sum;
}

LgfResult lgf(const std::vector<double>& predictions, const BinnedDataset& binned,
              LossSpec loss, double epsilon, GapNorm norm) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw InvalidArgument("lgf: epsilon must lie in [0, 1]");
  ConditionalTable risks = conditional_risks(predictions, binned, loss);
  LgfResult result;
  result.value = pairwise_gap_sum(risks, norm);
  result.is_fair = result.value <= epsilon;
  return result;
}

double mape(const std::vector<double>& predictions, const std::vector<double>& targets) {
  if (predictions.size() != targets.size())
    throw InvalidArgument("mape: length mismatch");
  if (predictions.empty()) throw InvalidArgument("mape: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] == 0.0) throw InvalidArgument("mape: zero target");
    sum += 100.0 * std::abs(targets[i] - predictions[i]) / std::abs(targets[i]);
  }
  return sum / static_cast<double>(targets.size());
}

DeltaHatResult delta_hat(const std::vector<double>& predictions,
                         const BinnedDataset& binned) {
  ConditionalTable probs = conditional_probabilities(predictions, binned);
  ConditionalTable linear = conditional_risks(predictions, binned, {LossId::linear});
  int K = binned.K(), Q = binned.Q();
  DeltaHatResult result;
  long pairs = 0;
  for (int k = 0; k < K; ++k) {
    for (int p = 0; p < Q; ++p) {
      if (!probs.defined(k, p)) continue;
      for (int q = 0; q < Q; ++q) {
        if (q == p || !probs.defined(k, q)) continue;
        ++pairs;
        result.raw += std::abs(probs.values(k, p) - probs.values(k, q)) -
                      std::abs(linear.values(k, p) - linear.values(k, q));
      }
    }
  }
  result.normalized = pairs > 0 ? result.raw / static_cast<double>(pairs) : 0.0;
  return result;
}

}  // namespace fairkrr
