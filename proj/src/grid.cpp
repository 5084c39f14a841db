#include "fairkrr/grid.hpp"

#include <algorithm>
#include <cmath>

namespace fairkrr {

int DiscretizationGrid::bin(double v) const {
  if (v < cut_points.front() || v >= cut_points.back()) return -1;
  // First cut point strictly greater than v opens the next bin.
  auto it = std::upper_bound(cut_points.begin(), cut_points.end(), v);
  return static_cast<int>(it - cut_points.begin()) - 1;
}

int DiscretizationGrid::bin_clamped(double v) const {
  if (v < cut_points.front()) return 0;
  if (v >= cut_points.back()) return bins() - 1;
  return bin(v);
}

namespace {

void validate_cut_points(const std::vector<double>& cuts) {
  if (cuts.size() < 2) throw InvalidArgument("grid needs at least 2 cut points");
  for (std::size_t i = 0; i < cuts.size(); ++i) {
    if (!std::isfinite(cuts[i])) throw InvalidArgument("grid cut points must be finite");
    if (i > 0 && !(cuts[i - 1] < cuts[i]))
      throw InvalidArgument("grid cut points must be strictly increasing");
  }
}

// Empirical quantile with linear interpolation between order statistics.
double quantile_of_sorted(const std::vector<double>& sorted, double p) {
  double pos = p * static_cast<double>(sorted.size() - 1);
  std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
  double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

DiscretizationGrid make_grid(const std::vector<double>& values, int bins,
                             GridStrategy strategy,
                             const std::vector<double>& cut_points) {
  if (strategy == GridStrategy::explicit_points) {
    validate_cut_points(cut_points);
    return DiscretizationGrid{cut_points};
  }

  if (bins < 1) throw InvalidArgument("bins must be >= 1");
  if (values.empty()) throw InvalidArgument("values must be non-empty");
  for (double v : values)
    if (!std::isfinite(v)) throw InvalidArgument("values must be finite");

  double lo = *std::min_element(values.begin(), values.end());
  double hi = *std::max_element(values.begin(), values.end());
  double range = hi - lo;
  if (range <= 0.0) throw InvalidArgument("all values identical; no grid spans them");
  // The top cut is padded so the observed maximum falls inside the last
  // half-open bin instead of on its open edge.
  double pad = 1e-9 * range;

  std::vector<double> cuts;
  cuts.reserve(static_cast<std::size_t>(bins) + 1);
  if (strategy == GridStrategy::uniform) {
    double step = range / static_cast<double>(bins);
    for (int b = 0; b <= bins; ++b) cuts.push_back(lo + step * static_cast<double>(b));
    cuts.back() = hi + pad;
  } else {  // quantile
    std::vector<double> sorted(values);
    std::sort(sorted.begin(), sorted.end());
    for (int b = 0; b <= bins; ++b)
      cuts.push_back(quantile_of_sorted(sorted, static_cast<double>(b) / bins));
    cuts.back() = hi + pad;
    auto last = std::unique(cuts.begin(), cuts.end());
    cuts.erase(last, cuts.end());
    if (static_cast<int>(cuts.size()) - 1 < bins)
      throw InvalidArgument("quantile grid collapsed to " +
                            std::to_string(cuts.size() - 1) + " bins, requested " +
                            std::to_string(bins) + " (duplicate quantiles)");
  }
  validate_cut_points(cuts);
  return DiscretizationGrid{cuts};
}

std::vector<double> model_input(const Sample& sample, bool include_s_in_model) {
  std::vector<double> z = sample.x;
  if (include_s_in_model) z.push_back(sample.s);
  return z;
}

Eigen::MatrixXd BinnedDataset::model_matrix() const {
  Eigen::MatrixXd Z(n(), model_dim());
  for (int i = 0; i < n(); ++i) {
    const Sample& smp = samples[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < smp.x.size(); ++j)
      Z(i, static_cast<int>(j)) = smp.x[j];
    if (include_s_in_model) Z(i, Z.cols() - 1) = smp.s;
  }
  return Z;
}

Eigen::VectorXd BinnedDataset::targets() const {
  Eigen::VectorXd y(n());
  for (int i = 0; i < n(); ++i) y(i) = samples[static_cast<std::size_t>(i)].y;
  return y;
}

BinnedDataset assign_bins(std::vector<Sample> samples, DiscretizationGrid y_grid,
                          DiscretizationGrid s_grid, bool include_s_in_model) {
  if (samples.empty()) throw InvalidArgument("assign_bins: samples must be non-empty");
  validate_cut_points(y_grid.cut_points);
  validate_cut_points(s_grid.cut_points);
  std::size_t dim = samples.front().x.size();
  for (const Sample& smp : samples) {
    if (smp.x.size() != dim)
      throw InvalidArgument("assign_bins: inconsistent feature dimension");
    for (double v : smp.x)
      if (!std::isfinite(v)) throw InvalidArgument("assign_bins: non-finite feature");
    if (!std::isfinite(smp.s) || !std::isfinite(smp.y))
      throw InvalidArgument("assign_bins: non-finite sample value");
  }

  BinnedDataset binned;
  binned.samples = std::move(samples);
  binned.y_grid = std::move(y_grid);
  binned.s_grid = std::move(s_grid);
  binned.include_s_in_model = include_s_in_model;
  int K = binned.K(), Q = binned.Q();
  binned.cells.assign(static_cast<std::size_t>(K) * Q, {});
  binned.counts.assign(static_cast<std::size_t>(K) * Q, 0);

  for (int i = 0; i < binned.n(); ++i) {
    const Sample& smp = binned.samples[static_cast<std::size_t>(i)];
    int k = binned.y_grid.bin(smp.y);
    int q = binned.s_grid.bin(smp.s);
    if (k < 0 || q < 0) {
      binned.unassigned.push_back(i);
      continue;
    }
    binned.cells[static_cast<std::size_t>(k) * Q + q].push_back(i);
    ++binned.counts[static_cast<std::size_t>(k) * Q + q];
  }
  return binned;
}

}  // namespace fairkrr
