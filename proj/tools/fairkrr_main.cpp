#include <string>

#include "CLI11.hpp"

#include "fairkrr/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"fair kernel regression workbench"};
  app.require_subcommand(1);

  std::string prepare_input, prepare_variant, prepare_out;
  auto* prepare = app.add_subcommand(
      "prepare", "preprocess the communities-and-crime file into a normalized CSV");
  prepare->add_option("--input", prepare_input, "raw communities-and-crime data file")
      ->required();
  prepare->add_option("--variant", prepare_variant, "binary or continuous")->required();
  prepare->add_option("--out", prepare_out, "output CSV path")->required();

  std::string fit_config;
  auto* fit = app.add_subcommand(
      "fit", "single 80/20 fit with fixed hyperparameters from a JSON config");
  fit->add_option("--config", fit_config, "run configuration JSON")->required();

  std::string exp_config;
  int exp_jobs = 0;
  auto* experiment = app.add_subcommand(
      "experiment", "nested cross-validation experiment from a JSON config");
  experiment->add_option("--config", exp_config, "run configuration JSON")->required();
  experiment->add_option("--jobs", exp_jobs,
                         "worker threads (0 = all cores; FAIR_ERM_JOBS overrides)");

  std::string sweep_config, sweep_vary;
  int sweep_jobs = 0;
  auto* sweep = app.add_subcommand(
      "sweep", "run the experiment across a list of epsilon or K values");
  sweep->add_option("--config", sweep_config, "run configuration JSON")->required();
  sweep->add_option("--vary", sweep_vary,
                    "epsilon:v1,v2,... or K:v1,v2,... (values to sweep)")
      ->required();
  sweep->add_option("--jobs", sweep_jobs,
                    "worker threads (0 = all cores; FAIR_ERM_JOBS overrides)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    // Help and version requests exit cleanly; anything else is a usage error.
    return code == 0 ? fairkrr::kExitOk : fairkrr::kExitConfig;
  }

  if (prepare->parsed())
    return fairkrr::cmd_prepare(prepare_input, prepare_variant, prepare_out);
  if (fit->parsed()) return fairkrr::cmd_fit(fit_config);
  if (experiment->parsed()) return fairkrr::cmd_experiment(exp_config, exp_jobs);
  return fairkrr::cmd_sweep(sweep_config, sweep_vary, sweep_jobs);
}
