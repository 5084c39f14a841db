#include "fairkrr/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <initializer_list>
#include <iostream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "fairkrr/metrics.hpp"
#include "fairkrr/parallel.hpp"
#include "fairkrr/report.hpp"
#include "fairkrr/rng.hpp"

namespace fairkrr {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& where,
                    std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || item.key() == a;
    if (!known)
      throw InvalidArgument("unknown key '" + item.key() + "' in " + where);
  }
}

const json* opt(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

const json& need(const json& obj, const char* key, const std::string& where) {
  const json* v = opt(obj, key);
  if (!v) throw InvalidArgument(where + ": missing required key '" + key + "'");
  return *v;
}

double as_number(const json& v, const std::string& where) {
  if (!v.is_number()) throw InvalidArgument(where + " must be a number");
  return v.get<double>();
}

int as_int(const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw InvalidArgument(where + " must be an integer");
  return v.get<int>();
}

bool as_bool(const json& v, const std::string& where) {
  if (!v.is_boolean()) throw InvalidArgument(where + " must be a boolean");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& where) {
  if (!v.is_string()) throw InvalidArgument(where + " must be a string");
  return v.get<std::string>();
}

std::uint64_t as_seed(const json& v, const std::string& where) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                 v.get<std::int64_t>() < 0))
    throw InvalidArgument(where + " must be a nonnegative integer");
  return v.get<std::uint64_t>();
}

std::vector<double> as_positive_array(const json& v, const std::string& where) {
  if (!v.is_array()) throw InvalidArgument(where + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    double x = as_number(e, where + " entry");
    if (!(x > 0.0) || !std::isfinite(x))
      throw InvalidArgument(where + " entries must be positive and finite");
    out.push_back(x);
  }
  return out;
}

void parse_dataset(const json& doc, RunConfig& cfg) {
  const json& ds = need(doc, "dataset", "config");
  if (!ds.is_object()) throw InvalidArgument("dataset must be an object");
  reject_unknown(ds, "dataset", {"kind", "path", "synthetic", "csv"});
  cfg.dataset_kind = as_string(need(ds, "kind", "dataset"), "dataset.kind");
  const bool is_synthetic = cfg.dataset_kind == "synthetic";
  const bool is_csv = cfg.dataset_kind == "csv";
  if (!is_synthetic && !is_csv && cfg.dataset_kind != "crime-binary" &&
      cfg.dataset_kind != "crime-continuous")
    throw InvalidArgument(
        "dataset.kind must be one of crime-binary, crime-continuous, csv, synthetic");

  if (is_synthetic) {
    if (opt(ds, "path"))
      throw InvalidArgument("dataset.path is not used with synthetic data");
    const json& syn = need(ds, "synthetic", "dataset");
    if (!syn.is_object()) throw InvalidArgument("dataset.synthetic must be an object");
    reject_unknown(syn, "dataset.synthetic",
                   {"n", "d", "group_effect", "noise_std", "sensitive_kind", "seed"});
    cfg.synthetic.n = as_int(need(syn, "n", "dataset.synthetic"), "synthetic n");
    cfg.synthetic.d = as_int(need(syn, "d", "dataset.synthetic"), "synthetic d");
    if (cfg.synthetic.n <= 0 || cfg.synthetic.d <= 0)
      throw InvalidArgument("synthetic n and d must be positive");
    if (const json* v = opt(syn, "group_effect"))
      cfg.synthetic.group_effect = as_number(*v, "synthetic group_effect");
    if (const json* v = opt(syn, "noise_std")) {
      cfg.synthetic.noise_std = as_number(*v, "synthetic noise_std");
      if (cfg.synthetic.noise_std < 0)
        throw InvalidArgument("synthetic noise_std must be >= 0");
    }
    if (const json* v = opt(syn, "sensitive_kind")) {
      std::string kind = as_string(*v, "synthetic sensitive_kind");
      if (kind == "binary")
        cfg.synthetic.sensitive_kind = SensitiveKind::binary;
      else if (kind == "continuous-uniform")
        cfg.synthetic.sensitive_kind = SensitiveKind::continuous_uniform;
      else
        throw InvalidArgument(
            "synthetic sensitive_kind must be 'binary' or 'continuous-uniform'");
    }
    if (const json* v = opt(syn, "seed")) cfg.synthetic.seed = as_seed(*v, "synthetic seed");
  } else {
    cfg.dataset_path = as_string(need(ds, "path", "dataset"), "dataset.path");
    if (opt(ds, "synthetic"))
      throw InvalidArgument("dataset.synthetic is only valid with kind 'synthetic'");
  }

  if (is_csv) {
    const json& c = need(ds, "csv", "dataset");
    if (!c.is_object()) throw InvalidArgument("dataset.csv must be an object");
    reject_unknown(c, "dataset.csv",
                   {"target_column", "sensitive_column", "feature_columns",
                    "missing_policy", "drop_column_threshold", "standardize"});
    cfg.csv.target_column =
        as_string(need(c, "target_column", "dataset.csv"), "csv target_column");
    cfg.csv.sensitive_column =
        as_string(need(c, "sensitive_column", "dataset.csv"), "csv sensitive_column");
    if (const json* v = opt(c, "feature_columns")) {
      if (!v->is_array()) throw InvalidArgument("csv feature_columns must be an array");
      for (const auto& e : *v)
        cfg.csv.feature_columns.push_back(as_string(e, "csv feature_columns entry"));
    }
    if (const json* v = opt(c, "missing_policy")) {
      std::string p = as_string(*v, "csv missing_policy");
      if (p == "drop-row")
        cfg.csv.missing_policy = MissingPolicy::drop_row;
      else if (p == "drop-column")
        cfg.csv.missing_policy = MissingPolicy::drop_column;
      else if (p == "mean-impute")
        cfg.csv.missing_policy = MissingPolicy::mean_impute;
      else
        throw InvalidArgument(
            "csv missing_policy must be drop-row, drop-column, or mean-impute");
    }
    if (const json* v = opt(c, "drop_column_threshold")) {
      cfg.csv.drop_column_threshold = as_number(*v, "csv drop_column_threshold");
      if (cfg.csv.drop_column_threshold < 0 || cfg.csv.drop_column_threshold > 1)
        throw InvalidArgument("csv drop_column_threshold must lie in [0, 1]");
    }
    if (const json* v = opt(c, "standardize"))
      cfg.csv.standardize = as_bool(*v, "csv standardize");
  } else if (opt(ds, "csv")) {
    throw InvalidArgument("dataset.csv is only valid with kind 'csv'");
  }
}

int default_q(const RunConfig& cfg) {
  if (cfg.dataset_kind == "crime-binary") return 2;
  if (cfg.dataset_kind == "crime-continuous") return 5;
  if (cfg.dataset_kind == "synthetic")
    return cfg.synthetic.sensitive_kind == SensitiveKind::binary ? 2 : 5;
  return 2;
}

void parse_model(const json& doc, RunConfig& cfg) {
  const json& m = need(doc, "model", "config");
  if (!m.is_object()) throw InvalidArgument("model must be an object");
  reject_unknown(m, "model",
                 {"kernel", "fair", "epsilon_hat", "epsilon_normalized", "K", "Q",
                  "include_sensitive", "centered"});
  if (const json* v = opt(m, "kernel")) {
    std::string k = as_string(*v, "model.kernel");
    if (k == "linear")
      cfg.kernel = KernelSpec::Kind::linear;
    else if (k == "gaussian")
      cfg.kernel = KernelSpec::Kind::gaussian;
    else
      throw InvalidArgument("model.kernel must be 'linear' or 'gaussian'");
  }
  if (const json* v = opt(m, "fair")) cfg.fair = as_bool(*v, "model.fair");
  if (const json* v = opt(m, "K")) cfg.K = as_int(*v, "model.K");
  if (cfg.K < 2) throw InvalidArgument("model.K must be >= 2");
  cfg.Q = default_q(cfg);
  if (const json* v = opt(m, "Q")) cfg.Q = as_int(*v, "model.Q");
  if (cfg.Q < 2) throw InvalidArgument("model.Q must be >= 2");
  if (cfg.dataset_kind == "crime-binary" && cfg.Q != 2)
    throw InvalidArgument("crime-binary data has a fixed 2-bin sensitive grid");
  if (cfg.dataset_kind == "crime-continuous" && cfg.Q != 5)
    throw InvalidArgument("crime-continuous data has a fixed 5-bin sensitive grid");
  if (cfg.dataset_kind == "synthetic" &&
      cfg.synthetic.sensitive_kind == SensitiveKind::binary && cfg.Q != 2)
    throw InvalidArgument("binary synthetic data has a fixed 2-bin sensitive grid");

  const json* eh = opt(m, "epsilon_hat");
  const json* en = opt(m, "epsilon_normalized");
  if (!cfg.fair) {
    // Resolved configs spell the implied budget out as "inf"; accept that
    // spelling back so a report's embedded config reproduces the run.
    if (en || (eh && !(eh->is_string() && eh->get<std::string>() == "inf")))
      throw InvalidArgument("epsilon settings require model.fair = true");
    cfg.epsilon_hat = std::numeric_limits<double>::infinity();
  } else {
    if (eh && en)
      throw InvalidArgument("give either epsilon_hat or epsilon_normalized, not both");
    cfg.epsilon_hat = 0.0;
    if (eh) {
      if (eh->is_string()) {
        if (eh->get<std::string>() != "inf")
          throw InvalidArgument("model.epsilon_hat string form must be \"inf\"");
        cfg.epsilon_hat = std::numeric_limits<double>::infinity();
      } else {
        cfg.epsilon_hat = as_number(*eh, "model.epsilon_hat");
        if (cfg.epsilon_hat < 0 || std::isnan(cfg.epsilon_hat))
          throw InvalidArgument("model.epsilon_hat must be >= 0");
      }
    } else if (en) {
      double v = as_number(*en, "model.epsilon_normalized");
      if (v < 0 || !std::isfinite(v))
        throw InvalidArgument("model.epsilon_normalized must be a finite value >= 0");
      // The normalized budget counts ordered bin pairs (divisor K*Q^2); the
      // constraint carries each unordered pair once, hence the half.
      cfg.epsilon_hat = v * cfg.K * cfg.Q * cfg.Q / 2.0;
    }
  }
  if (const json* v = opt(m, "include_sensitive"))
    cfg.include_sensitive = as_bool(*v, "model.include_sensitive");
  if (const json* v = opt(m, "centered")) cfg.centered = as_bool(*v, "model.centered");
}

void parse_selection(const json& doc, RunConfig& cfg) {
  const json* s = opt(doc, "selection");
  if (!s) return;
  if (!s->is_object()) throw InvalidArgument("selection must be an object");
  reject_unknown(*s, "selection",
                 {"policy", "error_fraction", "repetitions", "folds", "seed"});
  if (const json* v = opt(*s, "policy")) {
    std::string p = as_string(*v, "selection.policy");
    if (p == "naive")
      cfg.policy.kind = SelectionPolicy::Kind::naive;
    else if (p == "nvp" || p == "nvm")  // nvm is the tables' name for the same rule
      cfg.policy.kind = SelectionPolicy::Kind::nvp;
    else
      throw InvalidArgument("selection.policy must be 'naive' or 'nvp'");
  }
  if (const json* v = opt(*s, "error_fraction")) {
    cfg.policy.error_fraction = as_number(*v, "selection.error_fraction");
    if (!(cfg.policy.error_fraction > 0.0) || cfg.policy.error_fraction > 1.0)
      throw InvalidArgument("selection.error_fraction must lie in (0, 1]");
  }
  if (const json* v = opt(*s, "repetitions")) {
    cfg.repetitions = as_int(*v, "selection.repetitions");
    if (cfg.repetitions < 1) throw InvalidArgument("selection.repetitions must be >= 1");
  }
  if (const json* v = opt(*s, "folds")) {
    cfg.folds = as_int(*v, "selection.folds");
    if (cfg.folds < 2) throw InvalidArgument("selection.folds must be >= 2");
  }
  if (const json* v = opt(*s, "seed")) cfg.seed = as_seed(*v, "selection.seed");
}

void parse_grids(const json& doc, RunConfig& cfg) {
  cfg.grids = HyperGrid::defaults(cfg.kernel);
  const json* g = opt(doc, "grids");
  if (!g) return;
  if (!g->is_object()) throw InvalidArgument("grids must be an object");
  reject_unknown(*g, "grids", {"lambdas", "gammas"});
  if (const json* v = opt(*g, "lambdas"))
    cfg.grids.lambdas = as_positive_array(*v, "grids.lambdas");
  if (cfg.grids.lambdas.empty()) throw InvalidArgument("grids.lambdas must be nonempty");
  if (const json* v = opt(*g, "gammas")) {
    auto gammas = as_positive_array(*v, "grids.gammas");
    if (cfg.kernel == KernelSpec::Kind::linear && !gammas.empty())
      throw InvalidArgument("grids.gammas is not used with the linear kernel");
    cfg.grids.gammas = gammas;
  }
  if (cfg.kernel == KernelSpec::Kind::gaussian && cfg.grids.gammas.empty())
    throw InvalidArgument("grids.gammas must be nonempty for the gaussian kernel");
}

void parse_output(const json& doc, RunConfig& cfg) {
  const json* o = opt(doc, "output");
  if (!o) return;
  if (!o->is_object()) throw InvalidArgument("output must be an object");
  reject_unknown(*o, "output", {"dir", "emit_histograms"});
  if (const json* v = opt(*o, "dir")) cfg.out_dir = as_string(*v, "output.dir");
  if (const json* v = opt(*o, "emit_histograms"))
    cfg.emit_histograms = as_bool(*v, "output.emit_histograms");
}

ConstraintSystem empty_system(int n) {
  ConstraintSystem sys;
  sys.M.resize(n, 0);
  return sys;
}

ExperimentSpec experiment_spec(const RunConfig& cfg, const DiscretizationGrid& s_grid) {
  ExperimentSpec spec;
  spec.kernel_kind = cfg.kernel;
  spec.epsilon_hat = cfg.fair ? cfg.epsilon_hat
                              : std::numeric_limits<double>::infinity();
  spec.y_bins = cfg.K;
  spec.s_grid = s_grid;
  spec.include_sensitive = cfg.include_sensitive;
  spec.grid = cfg.grids;
  spec.policy = cfg.policy;
  spec.repetitions = cfg.repetitions;
  spec.folds = cfg.folds;
  spec.seed = cfg.seed;
  spec.solver_template.loss = SolverConfig::Loss::squared;
  spec.solver_template.centered = cfg.centered;
  spec.solver_template.seed = cfg.seed;
  return spec;
}

struct ExperimentOutcome {
  ExperimentReport report;
  std::uint64_t data_hash = 0;
};

ExperimentOutcome execute_experiment(const RunConfig& cfg, int jobs) {
  LoadedData data = load_dataset(cfg);
  ExperimentOutcome out;
  out.data_hash = data.hash;
  out.report = run_experiment(data.samples, experiment_spec(cfg, data.s_grid), jobs);
  return out;
}

void write_experiment_outputs(const std::string& dir, const RunConfig& cfg,
                              const ExperimentOutcome& outcome) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw InvalidArgument("cannot create output directory " + dir);
  write_text_file(dir + "/report.json",
                  experiment_document(outcome.report, resolved_config_json(cfg),
                                      outcome.data_hash));
  write_text_file(dir + "/folds.csv", folds_csv(outcome.report));
  if (cfg.emit_histograms)
    write_text_file(dir + "/histograms.csv", histogram_csv(outcome.report));
}

template <typename F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const SolverError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
}

}  // namespace

RunConfig parse_run_config_text(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw InvalidArgument("config root must be a JSON object");
  reject_unknown(doc, "config", {"dataset", "model", "selection", "grids", "output"});

  RunConfig cfg;
  parse_dataset(doc, cfg);
  parse_model(doc, cfg);
  parse_selection(doc, cfg);
  parse_grids(doc, cfg);
  parse_output(doc, cfg);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  return parse_run_config_text(read_text_file(path));
}

std::string resolved_config_json(const RunConfig& cfg) {
  json doc;
  json ds;
  ds["kind"] = cfg.dataset_kind;
  if (cfg.dataset_kind == "synthetic") {
    json syn;
    syn["n"] = cfg.synthetic.n;
    syn["d"] = cfg.synthetic.d;
    syn["group_effect"] = cfg.synthetic.group_effect;
    syn["noise_std"] = cfg.synthetic.noise_std;
    syn["sensitive_kind"] = cfg.synthetic.sensitive_kind == SensitiveKind::binary
                                ? "binary"
                                : "continuous-uniform";
    syn["seed"] = cfg.synthetic.seed;
    ds["synthetic"] = syn;
  } else {
    ds["path"] = cfg.dataset_path;
  }
  if (cfg.dataset_kind == "csv") {
    json c;
    c["target_column"] = cfg.csv.target_column;
    c["sensitive_column"] = cfg.csv.sensitive_column;
    c["feature_columns"] = cfg.csv.feature_columns;
    switch (cfg.csv.missing_policy) {
      case MissingPolicy::drop_row: c["missing_policy"] = "drop-row"; break;
      case MissingPolicy::drop_column: c["missing_policy"] = "drop-column"; break;
      case MissingPolicy::mean_impute: c["missing_policy"] = "mean-impute"; break;
    }
    c["drop_column_threshold"] = cfg.csv.drop_column_threshold;
    c["standardize"] = cfg.csv.standardize;
    ds["csv"] = c;
  }
  doc["dataset"] = ds;

  json m;
  m["kernel"] = cfg.kernel == KernelSpec::Kind::linear ? "linear" : "gaussian";
  m["fair"] = cfg.fair;
  if (std::isinf(cfg.epsilon_hat))
    m["epsilon_hat"] = "inf";
  else
    m["epsilon_hat"] = cfg.epsilon_hat;
  m["K"] = cfg.K;
  m["Q"] = cfg.Q;
  m["include_sensitive"] = cfg.include_sensitive;
  m["centered"] = cfg.centered;
  doc["model"] = m;

  json sel;
  sel["policy"] = cfg.policy.kind == SelectionPolicy::Kind::naive ? "naive" : "nvp";
  sel["error_fraction"] = cfg.policy.error_fraction;
  sel["repetitions"] = cfg.repetitions;
  sel["folds"] = cfg.folds;
  sel["seed"] = cfg.seed;
  doc["selection"] = sel;

  doc["grids"] = {{"lambdas", cfg.grids.lambdas}, {"gammas", cfg.grids.gammas}};
  doc["output"] = {{"dir", cfg.out_dir}, {"emit_histograms", cfg.emit_histograms}};
  return doc.dump(2) + "\n";
}

LoadedData load_dataset(const RunConfig& cfg) {
  LoadedData out;
  if (cfg.dataset_kind == "crime-binary" || cfg.dataset_kind == "crime-continuous") {
    auto crime = prepare_crime(cfg.dataset_path,
                               cfg.dataset_kind == "crime-binary"
                                   ? CrimeVariant::binary_sensitive
                                   : CrimeVariant::continuous_sensitive);
    out.samples = std::move(crime.samples);
    out.s_grid = crime.s_grid;
    out.hash = hash_file(cfg.dataset_path);
  } else if (cfg.dataset_kind == "csv") {
    auto loaded = load_csv(cfg.dataset_path, cfg.csv);
    out.samples = std::move(loaded.samples);
    std::vector<double> s_values;
    s_values.reserve(out.samples.size());
    for (const auto& s : out.samples) s_values.push_back(s.s);
    out.s_grid = make_grid(s_values, cfg.Q, GridStrategy::uniform);
    out.hash = hash_file(cfg.dataset_path);
  } else {  // synthetic
    out.samples = generate_synthetic(cfg.synthetic);
    out.s_grid = cfg.synthetic.sensitive_kind == SensitiveKind::binary
                     ? synthetic_s_grid(SensitiveKind::binary)
                     : synthetic_s_grid(SensitiveKind::continuous_uniform, cfg.Q);
    out.hash = hash_samples(out.samples);
  }
  return out;
}

int effective_jobs(int cli_jobs) {
  if (const char* env = std::getenv("FAIR_ERM_JOBS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0') return resolve_jobs(static_cast<int>(v));
    std::cerr << "warning: FAIR_ERM_JOBS is not a number, using --jobs\n";
  }
  return resolve_jobs(cli_jobs);
}

int cmd_prepare(const std::string& input, const std::string& variant,
                const std::string& out) {
  return guarded([&]() -> int {
    CrimeVariant v;
    if (variant == "binary")
      v = CrimeVariant::binary_sensitive;
    else if (variant == "continuous")
      v = CrimeVariant::continuous_sensitive;
    else
      throw InvalidArgument("variant must be 'binary' or 'continuous'");

    CrimeData crime = prepare_crime(input, v);
    write_normalized_csv(out, crime.samples, crime.feature_names);

    if (v == CrimeVariant::binary_sensitive) {
      std::cout << "s=1: " << crime.high_count << ", s=0: " << crime.low_count << "\n";
      std::cout << "mean target | s=1: " << format_double(crime.high_mean_y)
                << ", s=0: " << format_double(crime.low_mean_y) << "\n";
      std::cout << "sensitive threshold: " << format_double(crime.threshold) << "\n";
    } else {
      int total = 0;
      for (std::size_t b = 0; b < crime.bin_occupancy.size(); ++b) {
        std::cout << "sensitive bin " << b << ": " << crime.bin_occupancy[b] << "\n";
        total += crime.bin_occupancy[b];
      }
      std::cout << "total: " << total << "\n";
    }
    if (crime.target_shifted)
      std::cout << "targets shifted by +0.01 (zero crime rates present)\n";
    if (!crime.dropped_columns.empty())
      std::cout << crime.dropped_columns.size()
                << " mostly-missing columns dropped\n";
    std::cout << "wrote " << out << " (" << crime.samples.size() << " rows, "
              << crime.feature_names.size() << " features)\n";
    return kExitOk;
  });
}

int cmd_fit(const std::string& config_path) {
  return guarded([&]() -> int {
    RunConfig cfg = load_run_config(config_path);
    if (cfg.grids.lambdas.size() != 1 ||
        (cfg.kernel == KernelSpec::Kind::gaussian && cfg.grids.gammas.size() != 1))
      throw InvalidArgument(
          "fit uses fixed hyperparameters: provide exactly one lambda (and one "
          "gamma for the gaussian kernel) in grids");

    LoadedData data = load_dataset(cfg);
    const int n = static_cast<int>(data.samples.size());

    // 80/20 split: the first fold of a seeded 5-fold partition is the test set.
    auto splits = kfold_split(n, 5, mix_seed(cfg.seed, 0xF17));
    const std::vector<int>& tr = splits[0].first;
    const std::vector<int>& te = splits[0].second;

    std::vector<Sample> train_s, test_s;
    std::vector<double> y_tr, y_te;
    for (int i : tr) {
      train_s.push_back(data.samples[static_cast<std::size_t>(i)]);
      y_tr.push_back(train_s.back().y);
    }
    for (int i : te) {
      test_s.push_back(data.samples[static_cast<std::size_t>(i)]);
      y_te.push_back(test_s.back().y);
    }

    auto y_grid = make_grid(y_tr, cfg.K, GridStrategy::uniform);
    auto binned_tr =
        assign_bins(std::move(train_s), y_grid, data.s_grid, cfg.include_sensitive);
    auto binned_te =
        assign_bins(std::move(test_s), y_grid, data.s_grid, cfg.include_sensitive);

    KernelSpec kern = cfg.kernel == KernelSpec::Kind::gaussian
                          ? KernelSpec::gaussian(cfg.grids.gammas[0])
                          : KernelSpec::linear();
    SolverConfig scfg;
    scfg.loss = SolverConfig::Loss::squared;
    scfg.lambda = cfg.grids.lambdas[0];
    scfg.epsilon_hat =
        cfg.fair ? cfg.epsilon_hat : std::numeric_limits<double>::infinity();
    scfg.centered = cfg.centered;
    scfg.seed = cfg.seed;

    ConstraintSystem sys = cfg.fair && std::isfinite(cfg.epsilon_hat)
                               ? build_constraints(binned_tr, kern)
                               : empty_system(binned_tr.n());
    FairModel model = fit(binned_tr, kern, sys, scfg);
    std::vector<double> preds = predict(model, binned_te.model_matrix());

    auto tab = conditional_probabilities(preds, binned_te, true);
    auto dh = delta_hat(preds, binned_te);

    json metrics;
    metrics["mape"] = mape(preds, y_te);
    metrics["dgf_raw"] = pairwise_gap_sum(tab, GapNorm::none);
    metrics["dgf_normalized"] = pairwise_gap_sum(tab, GapNorm::kq_qm1);
    metrics["dgf_kq2"] = pairwise_gap_sum(tab, GapNorm::kq2);
    metrics["delta_hat"] = dh.normalized;
    metrics["delta_hat_raw"] = dh.raw;
    metrics["constraint_l1_norm"] = model.diagnostics.constraint_l1;
    metrics["iterations"] = model.diagnostics.iterations;
    metrics["converged"] = model.diagnostics.converged;
    metrics["objective"] = model.diagnostics.objective;
    metrics["n_train"] = binned_tr.n();
    metrics["n_test"] = binned_te.n();

    json doc;
    doc["config"] = json::parse(resolved_config_json(cfg));
    doc["data_hash"] = "fnv1a64:" + hex64(data.hash);
    doc["metrics"] = metrics;

    json model_doc;
    model_doc["kernel"] = {{"kind", cfg.kernel == KernelSpec::Kind::linear
                                        ? "linear"
                                        : "gaussian"},
                           {"gamma", kern.gamma}};
    model_doc["lambda"] = scfg.lambda;
    if (std::isinf(scfg.epsilon_hat))
      model_doc["epsilon_hat"] = "inf";
    else
      model_doc["epsilon_hat"] = scfg.epsilon_hat;
    model_doc["centered"] = cfg.centered;
    model_doc["include_sensitive"] = cfg.include_sensitive;
    model_doc["intercept"] = model.intercept;
    model_doc["alpha"] = std::vector<double>(model.alpha.data(),
                                             model.alpha.data() + model.alpha.size());
    {
      json rows = json::array();
      for (Eigen::Index i = 0; i < model.training_inputs.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < model.training_inputs.cols(); ++j)
          row.push_back(model.training_inputs(i, j));
        rows.push_back(row);
      }
      model_doc["training_inputs"] = rows;
    }

    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) throw InvalidArgument("cannot create output directory " + cfg.out_dir);
    write_text_file(cfg.out_dir + "/fit_metrics.json", doc.dump(2) + "\n");
    write_text_file(cfg.out_dir + "/fit_model.json", model_doc.dump(2) + "\n");

    std::cout << "mape " << format_double(metrics["mape"].get<double>()) << ", dgf "
              << format_double(metrics["dgf_normalized"].get<double>())
              << ", constraint L1 "
              << format_double(model.diagnostics.constraint_l1) << ", iterations "
              << model.diagnostics.iterations << "\n";
    std::cout << "wrote " << cfg.out_dir << "/fit_metrics.json\n";
    return kExitOk;
  });
}

int cmd_experiment(const std::string& config_path, int jobs) {
  return guarded([&]() -> int {
    RunConfig cfg = load_run_config(config_path);
    ExperimentOutcome outcome = execute_experiment(cfg, effective_jobs(jobs));
    write_experiment_outputs(cfg.out_dir, cfg, outcome);

    const ExperimentReport& r = outcome.report;
    std::cout << "mape " << format_double(r.mape_mean) << " +/- "
              << format_double(r.mape_std) << "\n";
    std::cout << "dgf " << format_double(r.dgf_mean) << " +/- "
              << format_double(r.dgf_std) << "\n";
    std::cout << "delta_hat " << format_double(r.delta_hat_mean) << "\n";
    if (r.incomplete)
      std::cout << "warning: report incomplete (" << r.warnings.size()
                << " warnings)\n";
    std::cout << "wrote " << cfg.out_dir << "/report.json\n";
    if (r.folds.empty()) {
      std::cerr << "error: every fold failed; partial report written\n";
      return kExitNumeric;
    }
    return kExitOk;
  });
}

int cmd_sweep(const std::string& config_path, const std::string& vary, int jobs) {
  return guarded([&]() -> int {
    RunConfig base = load_run_config(config_path);

    const std::size_t colon = vary.find(':');
    if (colon == std::string::npos)
      throw InvalidArgument("--vary must look like epsilon:0,0.005,0.01 or K:5,10,20");
    const std::string key = vary.substr(0, colon);
    if (key != "epsilon" && key != "K")
      throw InvalidArgument("--vary key must be 'epsilon' or 'K'");

    std::vector<double> values;
    {
      std::stringstream list(vary.substr(colon + 1));
      std::string tok;
      while (std::getline(list, tok, ',')) {
        if (tok.empty()) continue;
        const char* begin = tok.c_str();
        char* end = nullptr;
        double v = std::strtod(begin, &end);
        if (end != begin + tok.size())
          throw InvalidArgument("unparseable sweep value '" + tok + "'");
        values.push_back(v);
      }
    }
    if (values.empty()) throw InvalidArgument("empty sweep list");
    if (key == "epsilon") {
      if (!base.fair)
        throw InvalidArgument("an epsilon sweep needs model.fair = true");
      for (double v : values)
        if (v < 0 || !std::isfinite(v))
          throw InvalidArgument("epsilon sweep values must be finite and >= 0");
    } else {
      for (double v : values)
        if (v != std::floor(v) || v < 2)
          throw InvalidArgument("K sweep values must be integers >= 2");
    }

    // One run per (value, method). For an epsilon sweep the unconstrained
    // baseline does not depend on the swept value, so it runs once, listed
    // with sweep value "inf".
    struct Job {
      double value;
      bool fair;
    };
    std::vector<Job> runs;
    if (key == "epsilon") {
      for (double v : values) runs.push_back({v, true});
      runs.push_back({std::numeric_limits<double>::infinity(), false});
    } else {
      for (double v : values) {
        if (base.fair) runs.push_back({v, true});
        runs.push_back({v, false});
      }
    }

    std::ostringstream csv;
    csv << "sweep_key,sweep_value,method,mape_mean,mape_std,dgf_mean,dgf_std,"
           "dgf_kq2_mean,delta_hat_mean,incomplete\n";

    const int resolved_jobs = effective_jobs(jobs);
    for (const Job& job : runs) {
      const std::string method = job.fair ? "fair" : "unconstrained";
      RunConfig sub = base;
      if (key == "epsilon")
        sub.epsilon_hat = job.value;
      else
        sub.K = static_cast<int>(job.value);
      if (!job.fair) {
        sub.fair = false;
        sub.epsilon_hat = std::numeric_limits<double>::infinity();
      }
      sub.out_dir = base.out_dir + "/sweep_" + key + "_" + format_double(job.value) +
                    "_" + method;
      ExperimentOutcome outcome = execute_experiment(sub, resolved_jobs);
      write_experiment_outputs(sub.out_dir, sub, outcome);
      const ExperimentReport& r = outcome.report;
      csv << key << ',' << format_double(job.value) << ',' << method << ','
          << format_double(r.mape_mean) << ',' << format_double(r.mape_std) << ','
          << format_double(r.dgf_mean) << ',' << format_double(r.dgf_std) << ','
          << format_double(r.dgf_kq2_mean) << ',' << format_double(r.delta_hat_mean)
          << ',' << (r.incomplete ? 1 : 0) << '\n';
      std::cout << key << "=" << format_double(job.value) << " " << method
                << ": mape " << format_double(r.mape_mean) << ", dgf "
                << format_double(r.dgf_mean) << "\n";
    }

    std::error_code ec;
    std::filesystem::create_directories(base.out_dir, ec);
    if (ec) throw InvalidArgument("cannot create output directory " + base.out_dir);
    write_text_file(base.out_dir + "/sweep.csv", csv.str());
    std::cout << "wrote " << base.out_dir << "/sweep.csv\n";
    return kExitOk;
  });
}

}  // namespace fairkrr
