#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace fairkrr {

// Thrown for invalid construction arguments across the library.
struct InvalidArgument : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Ordered cut points t_1 < t_2 < ... < t_{B+1} defining B half-open bins
// [t_b, t_{b+1}). Used both for target values and for sensitive values.
struct DiscretizationGrid {
  std::vector<double> cut_points;

  int bins() const { return static_cast<int>(cut_points.size()) - 1; }

  // Bin index in [0, bins) for v, or -1 when v is out of range. Interior cut
  // points belong to the bin they open: bin(t_b) == b.
  int bin(double v) const;

  // Bin index with out-of-range values clamped to the nearest end bin.
  int bin_clamped(double v) const;
};

enum class GridStrategy { uniform, quantile, explicit_points };

// Build a grid over `values`.
//   uniform  - equally spaced cut points over [min, max], top cut padded by
//              1e-9 * range so the observed maximum lands in the last
//              half-open bin.
//   quantile - cut points at empirical quantiles, duplicates collapsed; if
//              collapsing leaves fewer bins than requested this is an error.
//   explicit_points - validated passthrough of `cut_points` (no padding).
DiscretizationGrid make_grid(const std::vector<double>& values, int bins,
                             GridStrategy strategy,
                             const std::vector<double>& cut_points = {});

struct Sample {
  std::vector<double> x;  // features
  double s = 0.0;         // sensitive value (categoricals pre-encoded as reals)
  double y = 0.0;         // target
};

// The model input for one sample: x, optionally with s appended.
std::vector<double> model_input(const Sample& sample, bool include_s_in_model);

// A dataset partitioned into the cells D_{k,q}: samples whose target falls in
// target bin k and whose sensitive value falls in sensitive bin q. Samples
// outside either grid's range are listed in `unassigned`, never silently
// dropped. Immutable after construction.
struct BinnedDataset {
  std::vector<Sample> samples;
  DiscretizationGrid y_grid;
  DiscretizationGrid s_grid;
  bool include_s_in_model = false;

  // Flattened K*Q cell storage, row-major in (k, q).
  std::vector<std::vector<int>> cells;
  std::vector<int> counts;
  std::vector<int> unassigned;

  int K() const { return y_grid.bins(); }
  int Q() const { return s_grid.bins(); }
  int n() const { return static_cast<int>(samples.size()); }

  const std::vector<int>& cell(int k, int q) const { return cells[k * Q() + q]; }
  int count(int k, int q) const { return counts[k * Q() + q]; }

  int model_dim() const {
    return static_cast<int>(samples.front().x.size()) + (include_s_in_model ? 1 : 0);
  }

  // n x model_dim matrix of model inputs, rows aligned with `samples`.
  Eigen::MatrixXd model_matrix() const;

  // Targets aligned with `samples`.
  Eigen::VectorXd targets() const;
};

BinnedDataset assign_bins(std::vector<Sample> samples, DiscretizationGrid y_grid,
                          DiscretizationGrid s_grid, bool include_s_in_model);

}  // namespace fairkrr
