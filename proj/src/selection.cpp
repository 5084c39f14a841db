#include "fairkrr/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <utility>

#include "fairkrr/parallel.hpp"
#include "fairkrr/rng.hpp"

namespace fairkrr {

namespace {

constexpr std::size_t kMaxWarnings = 12;

void add_warning(std::vector<std::string>& list, const std::string& w) {
  if (list.size() < kMaxWarnings) {
    list.push_back(w);
  } else if (list.size() == kMaxWarnings) {
    list.push_back("further warnings suppressed");
  }
}

// Prefer stronger regularization on ties: larger lambda first, then smaller
// gamma.
bool tie_prefers(const ComboScore& a, const ComboScore& b) {
  if (a.lambda != b.lambda) return a.lambda > b.lambda;
  return a.gamma < b.gamma;
}

bool usable(const ComboScore& c) {
  return c.folds_used > 0 && std::isfinite(c.mape);
}

Eigen::MatrixXd submatrix(const Eigen::MatrixXd& m, const std::vector<int>& rows,
                          const std::vector<int>& cols) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t i = 0; i < rows.size(); ++i) out(i, j) = m(rows[i], cols[j]);
  return out;
}

std::vector<double> gather_targets(const std::vector<Sample>& samples,
                                   const std::vector<int>& idx) {
  std::vector<double> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(samples[static_cast<std::size_t>(i)].y);
  return out;
}

std::vector<Sample> gather_samples(const std::vector<Sample>& samples,
                                   const std::vector<int>& idx) {
  std::vector<Sample> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(samples[static_cast<std::size_t>(i)]);
  return out;
}

std::vector<double> ascending_positive(std::vector<double> v, const char* what) {
  if (v.empty()) throw InvalidArgument(std::string(what) + ": empty grid");
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  if (v.front() <= 0.0 || !std::isfinite(v.back()))
    throw InvalidArgument(std::string(what) + ": values must be positive and finite");
  return v;
}

// Per-inner-fold state that does not depend on the hyperparameters.
struct InnerFold {
  std::vector<int> tr, va;
  BinnedDataset binned_tr, binned_va;
  Eigen::MatrixXd M;  // constraint columns; 0 columns when unconstrained
  std::vector<double> y_va;
  bool ok = false;
};

}  // namespace

HyperGrid HyperGrid::defaults(KernelSpec::Kind kind) {
  HyperGrid g;
  for (int i = 0; i <= 16; ++i) g.lambdas.push_back(std::pow(10.0, -4.0 + 0.5 * i));
  if (kind == KernelSpec::Kind::gaussian)
    for (int i = 0; i <= 8; ++i) g.gammas.push_back(std::pow(10.0, -4.0 + i));
  return g;
}

std::size_t pick_combo(const std::vector<ComboScore>& combos,
                       const SelectionPolicy& policy) {
  if (combos.empty()) throw InvalidArgument("pick_combo: empty score table");

  std::size_t best = combos.size();
  for (std::size_t i = 0; i < combos.size(); ++i) {
    if (!usable(combos[i])) continue;
    if (best == combos.size() || combos[i].mape < combos[best].mape ||
        (combos[i].mape == combos[best].mape && tie_prefers(combos[i], combos[best])))
      best = i;
  }
  if (best == combos.size())
    throw SolverError("model selection: no hyperparameter combination produced a fit");
  if (policy.kind == SelectionPolicy::Kind::naive) return best;

  if (!(policy.error_fraction > 0.0) || policy.error_fraction > 1.0)
    throw InvalidArgument("selection policy: error_fraction must lie in (0, 1]");
  const double cutoff = combos[best].mape / policy.error_fraction;
  std::size_t pick = combos.size();
  for (std::size_t i = 0; i < combos.size(); ++i) {
    if (!usable(combos[i]) || combos[i].mape > cutoff) continue;
    if (pick == combos.size() || combos[i].dgf < combos[pick].dgf ||
        (combos[i].dgf == combos[pick].dgf && tie_prefers(combos[i], combos[pick])))
      pick = i;
  }
  return pick;  // the naive winner is always in the shortlist, so pick is set
}

std::vector<std::pair<std::vector<int>, std::vector<int>>> kfold_split(
    int n, int folds, std::uint64_t seed) {
  if (folds < 2) throw InvalidArgument("kfold_split: need at least 2 folds");
  if (n < folds) throw InvalidArgument("kfold_split: fewer samples than folds");

  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  rng.shuffle(perm);

  std::vector<std::pair<std::vector<int>, std::vector<int>>> out(
      static_cast<std::size_t>(folds));
  const int base = n / folds, extra = n % folds;
  int pos = 0;
  for (int f = 0; f < folds; ++f) {
    const int size = base + (f < extra ? 1 : 0);
    auto& test = out[static_cast<std::size_t>(f)].second;
    test.assign(perm.begin() + pos, perm.begin() + pos + size);
    std::sort(test.begin(), test.end());
    pos += size;
  }
  std::vector<char> in_test(static_cast<std::size_t>(n));
  for (int f = 0; f < folds; ++f) {
    std::fill(in_test.begin(), in_test.end(), 0);
    for (int i : out[static_cast<std::size_t>(f)].second)
      in_test[static_cast<std::size_t>(i)] = 1;
    auto& train = out[static_cast<std::size_t>(f)].first;
    train.reserve(static_cast<std::size_t>(n - static_cast<int>(
                      out[static_cast<std::size_t>(f)].second.size())));
    for (int i = 0; i < n; ++i)
      if (!in_test[static_cast<std::size_t>(i)]) train.push_back(i);
  }
  return out;
}

InnerSelection inner_select(const BinnedDataset& train, const HyperGrid& grid,
                            const SelectionPolicy& policy,
                            const InnerSelectConfig& config) {
  const bool gaussian = config.kernel_kind == KernelSpec::Kind::gaussian;
  const std::vector<double> lambdas = ascending_positive(grid.lambdas, "lambda grid");
  std::vector<double> gammas{0.0};
  if (gaussian) gammas = ascending_positive(grid.gammas, "gamma grid");

  const bool constrained = std::isfinite(config.solver_template.epsilon_hat);
  const int n = train.n();
  const int K = train.K();

  InnerSelection result;
  auto splits = kfold_split(n, config.folds, config.seed);

  // Fold state shared by every hyperparameter combo; the target grid is fit
  // on the fold's training portion only, and the validation portion is binned
  // with that grid.
  std::vector<InnerFold> fold_state(splits.size());
  for (std::size_t f = 0; f < splits.size(); ++f) {
    InnerFold& ctx = fold_state[f];
    ctx.tr = splits[f].first;
    ctx.va = splits[f].second;
    try {
      auto y_grid = make_grid(gather_targets(train.samples, ctx.tr), K,
                              GridStrategy::uniform);
      ctx.binned_tr = assign_bins(gather_samples(train.samples, ctx.tr), y_grid,
                                  train.s_grid, train.include_s_in_model);
      ctx.binned_va = assign_bins(gather_samples(train.samples, ctx.va), y_grid,
                                  train.s_grid, train.include_s_in_model);
      if (constrained) {
        KernelSpec probe = gaussian ? KernelSpec::gaussian(1.0) : KernelSpec::linear();
        ctx.M = build_constraints(ctx.binned_tr, probe).M;
      } else {
        ctx.M.resize(static_cast<Eigen::Index>(ctx.tr.size()), 0);
      }
      ctx.y_va = gather_targets(train.samples, ctx.va);
      for (double y : ctx.y_va)
        if (y == 0.0)
          throw InvalidArgument("validation target of exactly zero (undefined MAPE)");
      ctx.ok = true;
    } catch (const std::exception& e) {
      std::ostringstream msg;
      msg << "inner fold " << f << " skipped: " << e.what();
      add_warning(result.warnings, msg.str());
    }
  }

  // One squared-distance matrix per call, shared by every gamma.
  const Eigen::MatrixXd Z = train.model_matrix();
  Eigen::MatrixXd D;
  if (gaussian) D = squared_distances(Z, Z);

  std::vector<ComboScore> table(gammas.size() * lambdas.size());
  for (std::size_t gi = 0; gi < gammas.size(); ++gi)
    for (std::size_t li = 0; li < lambdas.size(); ++li) {
      auto& c = table[gi * lambdas.size() + li];
      c.lambda = lambdas[li];
      c.gamma = gammas[gi];
    }

  std::size_t failures = 0;
  for (std::size_t gi = 0; gi < gammas.size(); ++gi) {
    const Eigen::MatrixXd Kfull =
        gaussian ? gram_from_distances(D, gammas[gi])
                 : gram(Z, Z, KernelSpec::linear());
    for (std::size_t f = 0; f < fold_state.size(); ++f) {
      const InnerFold& ctx = fold_state[f];
      if (!ctx.ok) continue;
      const Eigen::MatrixXd K_tr = submatrix(Kfull, ctx.tr, ctx.tr);
      const Eigen::MatrixXd K_va = submatrix(Kfull, ctx.va, ctx.tr);
      const Eigen::VectorXd y_tr = ctx.binned_tr.targets();

      Eigen::VectorXd warm;
      for (std::size_t li = 0; li < lambdas.size(); ++li) {
        SolverConfig cfg = config.solver_template;
        cfg.lambda = lambdas[li];
        AlphaSolution sol;
        try {
          sol = solve_coefficients(y_tr, K_tr, ctx.M, cfg,
                                   warm.size() > 0 ? &warm : nullptr);
        } catch (const std::exception& e) {
          if (failures++ == 0)
            add_warning(result.warnings,
                        std::string("combo fit failed (first instance): ") + e.what());
          continue;
        }
        warm = sol.alpha;

        const Eigen::VectorXd p = K_va * sol.alpha;
        std::vector<double> preds(p.size());
        for (Eigen::Index i = 0; i < p.size(); ++i) preds[static_cast<std::size_t>(i)] = p(i) + sol.intercept;

        auto& c = table[gi * lambdas.size() + li];
        c.mape += mape(preds, ctx.y_va);
        auto tab = conditional_probabilities(preds, ctx.binned_va,
                                             config.clamp_predictions);
        c.dgf += pairwise_gap_sum(tab, GapNorm::kq_qm1);
        c.folds_used += 1;
      }
    }
  }
  if (failures > 1)
    add_warning(result.warnings,
                std::to_string(failures) + " combo fits failed during inner CV");

  for (auto& c : table) {
    if (c.folds_used > 0) {
      c.mape /= c.folds_used;
      c.dgf /= c.folds_used;
    } else {
      c.mape = std::numeric_limits<double>::infinity();
      c.dgf = std::numeric_limits<double>::infinity();
    }
  }

  const std::size_t pick = pick_combo(table, policy);
  result.lambda = table[pick].lambda;
  result.gamma = table[pick].gamma;
  result.table = std::move(table);
  return result;
}

namespace {

struct UnitResult {
  FoldResult fold;
  Eigen::MatrixXd p_hat;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> defined;
  std::vector<std::string> warnings;
  bool ok = false;
};

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

}  // namespace

ExperimentReport run_experiment(const std::vector<Sample>& data,
                                const ExperimentSpec& spec, int jobs) {
  const int n = static_cast<int>(data.size());
  if (n == 0) throw InvalidArgument("run_experiment: empty dataset");
  if (spec.repetitions < 1) throw InvalidArgument("run_experiment: repetitions must be >= 1");
  if (spec.folds < 2) throw InvalidArgument("run_experiment: folds must be >= 2");
  if (spec.y_bins < 2) throw InvalidArgument("run_experiment: y_bins must be >= 2");
  if (spec.s_grid.bins() < 1) throw InvalidArgument("run_experiment: sensitive grid has no bins");
  if (std::isnan(spec.epsilon_hat) || spec.epsilon_hat < 0.0)
    throw InvalidArgument("run_experiment: epsilon_hat must be >= 0");
  ascending_positive(spec.grid.lambdas, "lambda grid");
  if (spec.kernel_kind == KernelSpec::Kind::gaussian)
    ascending_positive(spec.grid.gammas, "gamma grid");

  const std::size_t units =
      static_cast<std::size_t>(spec.repetitions) * static_cast<std::size_t>(spec.folds);
  std::vector<UnitResult> results(units);

  parallel_for_indexed(units, jobs, [&](std::size_t u) {
    const int rep = static_cast<int>(u) / spec.folds;
    const int f = static_cast<int>(u) % spec.folds;
    UnitResult& out = results[u];
    out.fold.repetition = rep;
    out.fold.fold = f;
    try {
      const std::uint64_t rep_seed = mix_seed(spec.seed, static_cast<std::uint64_t>(rep));
      auto splits = kfold_split(n, spec.folds, mix_seed(rep_seed, 0));
      const std::vector<int>& tr = splits[static_cast<std::size_t>(f)].first;
      const std::vector<int>& te = splits[static_cast<std::size_t>(f)].second;

      auto train_s = gather_samples(data, tr);
      auto y_grid = make_grid(gather_targets(data, tr), spec.y_bins, GridStrategy::uniform);
      auto binned_tr =
          assign_bins(std::move(train_s), y_grid, spec.s_grid, spec.include_sensitive);

      InnerSelectConfig icfg;
      icfg.kernel_kind = spec.kernel_kind;
      icfg.solver_template = spec.solver_template;
      icfg.solver_template.epsilon_hat = spec.epsilon_hat;
      icfg.folds = spec.folds;
      icfg.seed = mix_seed(rep_seed, 1000 + static_cast<std::uint64_t>(f));
      icfg.clamp_predictions = spec.clamp_predictions;
      InnerSelection sel = inner_select(binned_tr, spec.grid, spec.policy, icfg);
      out.warnings = sel.warnings;

      KernelSpec kern = spec.kernel_kind == KernelSpec::Kind::gaussian
                            ? KernelSpec::gaussian(sel.gamma)
                            : KernelSpec::linear();
      SolverConfig cfg = spec.solver_template;
      cfg.lambda = sel.lambda;
      cfg.epsilon_hat = spec.epsilon_hat;
      ConstraintSystem sys;
      if (std::isfinite(spec.epsilon_hat))
        sys = build_constraints(binned_tr, kern);
      else
        sys.M.resize(binned_tr.n(), 0);
      FairModel model = fit(binned_tr, kern, sys, cfg);

      auto binned_te = assign_bins(gather_samples(data, te), y_grid, spec.s_grid,
                                   spec.include_sensitive);
      std::vector<double> preds = predict(model, binned_te.model_matrix());

      out.fold.lambda = sel.lambda;
      out.fold.gamma = sel.gamma;
      out.fold.mape = mape(preds, gather_targets(data, te));
      auto tab = conditional_probabilities(preds, binned_te, spec.clamp_predictions);
      out.fold.dgf = pairwise_gap_sum(tab, GapNorm::kq_qm1);
      out.fold.dgf_kq2 = pairwise_gap_sum(tab, GapNorm::kq2);
      out.fold.dgf_raw = pairwise_gap_sum(tab, GapNorm::none);
      auto dh = delta_hat(preds, binned_te);
      out.fold.delta_hat = dh.normalized;
      out.fold.delta_hat_raw = dh.raw;
      out.p_hat = tab.values;
      out.defined = tab.defined;
      out.ok = true;
    } catch (const std::exception& e) {
      std::ostringstream msg;
      msg << "repetition " << out.fold.repetition << " fold " << out.fold.fold
          << " skipped: " << e.what();
      add_warning(out.warnings, msg.str());
    }
  });

  ExperimentReport report;
  report.repetitions = spec.repetitions;
  report.folds_per_rep = spec.folds;
  report.p_hat_mean = Eigen::MatrixXd::Zero(spec.y_bins, spec.s_grid.bins());
  report.p_hat_folds = Eigen::MatrixXi::Zero(spec.y_bins, spec.s_grid.bins());

  std::vector<double> all_mape, all_dgf, all_dgf_kq2, all_dgf_raw, all_dh, all_dh_raw;
  std::map<std::pair<double, double>, int> histogram;
  for (int rep = 0; rep < spec.repetitions; ++rep) {
    std::vector<double> rep_mape, rep_dgf;
    for (int f = 0; f < spec.folds; ++f) {
      const UnitResult& r = results[static_cast<std::size_t>(rep * spec.folds + f)];
      for (const auto& w : r.warnings) add_warning(report.warnings, w);
      if (!r.ok) {
        report.incomplete = true;
        continue;
      }
      report.folds.push_back(r.fold);
      all_mape.push_back(r.fold.mape);
      all_dgf.push_back(r.fold.dgf);
      all_dgf_kq2.push_back(r.fold.dgf_kq2);
      all_dgf_raw.push_back(r.fold.dgf_raw);
      all_dh.push_back(r.fold.delta_hat);
      all_dh_raw.push_back(r.fold.delta_hat_raw);
      rep_mape.push_back(r.fold.mape);
      rep_dgf.push_back(r.fold.dgf);
      histogram[{r.fold.lambda, r.fold.gamma}] += 1;
      for (Eigen::Index k = 0; k < r.p_hat.rows(); ++k)
        for (Eigen::Index q = 0; q < r.p_hat.cols(); ++q)
          if (r.defined(k, q)) {
            report.p_hat_mean(k, q) += r.p_hat(k, q);
            report.p_hat_folds(k, q) += 1;
          }
    }
    report.per_repetition_mape.push_back(mean_of(rep_mape));
    report.per_repetition_dgf.push_back(mean_of(rep_dgf));
  }

  report.mape_mean = mean_of(all_mape);
  report.mape_std = sample_std(all_mape);
  report.dgf_mean = mean_of(all_dgf);
  report.dgf_std = sample_std(all_dgf);
  report.dgf_kq2_mean = mean_of(all_dgf_kq2);
  report.dgf_raw_mean = mean_of(all_dgf_raw);
  report.delta_hat_mean = mean_of(all_dh);
  report.delta_hat_raw_mean = mean_of(all_dh_raw);
  for (const auto& [combo, count] : histogram)
    report.chosen_histogram.emplace_back(combo.first, combo.second, count);
  for (Eigen::Index k = 0; k < report.p_hat_mean.rows(); ++k)
    for (Eigen::Index q = 0; q < report.p_hat_mean.cols(); ++q)
      if (report.p_hat_folds(k, q) > 0)
        report.p_hat_mean(k, q) /= report.p_hat_folds(k, q);
  if (all_mape.empty()) report.incomplete = true;
  return report;
}

}  // namespace fairkrr
