#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fairkrr/grid.hpp"

namespace fairkrr {

enum class MissingPolicy { drop_row, drop_column, mean_impute };

struct ColumnSpec {
  std::string target_column;
  std::string sensitive_column;
  // Empty means "all other columns are features".
  std::vector<std::string> feature_columns;
  // drop_row: discard any row with a missing value in a used column.
  // drop_column: discard feature columns whose missing fraction exceeds
  //   drop_column_threshold, then mean-impute what remains.
  // mean_impute: fill missing feature values with the column mean.
  // A missing target or sensitive value always drops the row (labels cannot
  // be imputed).
  MissingPolicy missing_policy = MissingPolicy::mean_impute;
  double drop_column_threshold = 0.5;
  bool standardize = false;
};

struct LoadedCsv {
  std::vector<Sample> samples;
  std::vector<std::string> feature_names;
  // Populated when spec.standardize is set, for reuse on later data.
  std::vector<double> feature_means;
  std::vector<double> feature_stds;
  std::vector<std::string> dropped_columns;
  std::vector<std::string> warnings;
};

// Plain comma-separated file with a header row; "?" or an empty cell marks a
// missing value. No quoting support. Standardization z-scores the features
// with a 1e-12 floor on the standard deviation (constant columns become zero
// with a warning).
LoadedCsv load_csv(const std::string& path, const ColumnSpec& spec);

enum class CrimeVariant { binary_sensitive, continuous_sensitive };

struct CrimeData {
  std::vector<Sample> samples;
  DiscretizationGrid s_grid;
  std::vector<std::string> feature_names;
  std::vector<std::string> dropped_columns;

  // Binary variant: the calibrated cut on the sensitive column and the
  // resulting group statistics (counts and mean target per group, means taken
  // before any target shift).
  double threshold = 0.0;
  int high_count = 0;  // s = 1
  int low_count = 0;   // s = 0
  double high_mean_y = 0.0;
  double low_mean_y = 0.0;

  // Continuous variant: samples per sensitive bin.
  std::vector<int> bin_occupancy;

  bool target_shifted = false;  // +0.01 applied because zero targets exist
};

// Communities-and-crime preparation. Expects the raw UCI data file: no
// header, 128 comma-separated columns, "?" for missing. Identifier columns
// (state, county, community, communityname, fold) are dropped, columns more
// than half missing are dropped, remaining gaps are mean-imputed. The target
// is the violent-crime rate (last column); the sensitive attribute is the
// black-population percentage, removed from the features in both variants.
//
// binary_sensitive: s = 1 above a threshold calibrated to split the data
// 970/1024; a split off by more than 5 either way is a hard error (wrong
// file). Sensitive grid {-0.5, 0.5, 1.5}.
// continuous_sensitive: s is the raw column value; sensitive grid is 5
// uniform bins over [0, 1].
CrimeData prepare_crime(const std::string& path, CrimeVariant variant);

// Columns: features..., sensitive, target, with a header row.
void write_normalized_csv(const std::string& path, const std::vector<Sample>& samples,
                          const std::vector<std::string>& feature_names);

enum class SensitiveKind { binary, continuous_uniform };

struct SyntheticSpec {
  int n = 0;
  int d = 0;
  double group_effect = 0.0;  // mean shift of y between sensitive groups
  double noise_std = 1.0;
  SensitiveKind sensitive_kind = SensitiveKind::binary;
  std::uint64_t seed = 0;
};

// Deterministic synthetic regression data:
//   y = 5 + beta.z / sqrt(d) + group_effect * (s - 1/2) + noise_std * N(0,1)
//   x = z + group_effect * (s - 1/2) / 2
// with beta and z standard normal and s either Bernoulli(1/2) in {0,1} or
// uniform on [0,1). The offset keeps targets away from zero so percentage
// errors stay defined. The feature shift makes the sensitive value readable
// from x, so with nonzero group_effect a model fit on the features alone is
// measurably unfair; group_effect = 0 removes the channel entirely.
std::vector<Sample> generate_synthetic(const SyntheticSpec& spec);

// The matching sensitive grid: {-0.5, 0.5, 1.5} for binary, `bins` uniform
// bins over [0, 1] otherwise.
DiscretizationGrid synthetic_s_grid(SensitiveKind kind, int bins = 5);

}  // namespace fairkrr
