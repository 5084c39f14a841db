#pragma once

#include <cstdint>
#include <string>

#include "fairkrr/ingest.hpp"
#include "fairkrr/selection.hpp"

namespace fairkrr {

// Process exit codes, stable across subcommands: 0 success, 2 configuration
// or data validation failure, 3 numerical failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

// A fully resolved run configuration. Parsed from a JSON document with
// sections dataset / model / selection / grids / output; unknown keys are
// rejected and every value is type- and range-checked before any compute.
struct RunConfig {
  // dataset
  std::string dataset_kind;  // crime-binary | crime-continuous | csv | synthetic
  std::string dataset_path;  // unused for synthetic data
  SyntheticSpec synthetic;
  ColumnSpec csv;

  // model
  KernelSpec::Kind kernel = KernelSpec::Kind::gaussian;
  bool fair = true;
  double epsilon_hat = 0.0;  // raw L1 budget; infinity when fair is false
  int K = 10;
  int Q = 2;
  bool include_sensitive = false;
  bool centered = false;

  // selection
  SelectionPolicy policy;
  int repetitions = 30;
  int folds = 10;
  std::uint64_t seed = 1;

  HyperGrid grids;  // defaults filled in when the section is absent

  // output
  std::string out_dir = ".";
  bool emit_histograms = false;
};

RunConfig parse_run_config_text(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Canonical JSON (sorted keys, defaults explicit) for embedding in reports.
// Feeding this back in reproduces the run.
std::string resolved_config_json(const RunConfig& config);

// The dataset a config describes, with the prescribed sensitive grid and a
// content hash for report headers.
struct LoadedData {
  std::vector<Sample> samples;
  DiscretizationGrid s_grid;
  std::uint64_t hash = 0;
};
LoadedData load_dataset(const RunConfig& config);

// Worker count: the FAIR_ERM_JOBS environment variable overrides the --jobs
// flag; <= 0 means all logical cores.
int effective_jobs(int cli_jobs);

int cmd_prepare(const std::string& input, const std::string& variant,
                const std::string& out);
int cmd_fit(const std::string& config_path);
int cmd_experiment(const std::string& config_path, int jobs);
int cmd_sweep(const std::string& config_path, const std::string& vary, int jobs);

}  // namespace fairkrr
