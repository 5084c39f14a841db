#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "doctest.h"
#include "fairkrr/grid.hpp"
#include "fairkrr/kernel.hpp"
#include "fairkrr/rng.hpp"
#include "fairkrr/solver.hpp"
#include "oracles.hpp"

using namespace fairkrr;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Toy {
  BinnedDataset binned;
  ConstraintSystem system;
  Eigen::MatrixXd X;
  Eigen::MatrixXd K;   // raw Gram
  Eigen::MatrixXd Kj;  // jittered, what the solver factorizes
  Eigen::VectorXd y;
};

DiscretizationGrid explicit_grid(std::vector<double> cuts) {
  return make_grid({}, static_cast<int>(cuts.size()) - 1, GridStrategy::explicit_points, cuts);
}

// Regression toy with binary groups and a group-dependent target shift, so
// the unconstrained fit is measurably unfair and the constraint binds.
Toy make_toy(std::uint64_t seed, int n, int d, const KernelSpec& kernel, int K_bins = 2) {
  Rng rng(seed);
  std::vector<Sample> samples;
  std::vector<double> ys;
  for (int i = 0; i < n; ++i) {
    Sample sm;
    for (int j = 0; j < d; ++j) sm.x.push_back(rng.gaussian());
    sm.s = (i % 2 == 0) ? 0.0 : 1.0;
    sm.y = sm.x[0] * 0.8 + (sm.s - 0.5) * 1.6 + 0.3 * rng.gaussian();
    samples.push_back(sm);
    ys.push_back(sm.y);
  }
  Toy toy{assign_bins(samples, make_grid(ys, K_bins, GridStrategy::uniform),
                      explicit_grid({-0.5, 0.5, 1.5}), false),
          {}, {}, {}, {}, {}};
  toy.system = build_constraints(toy.binned, kernel);
  toy.X = toy.binned.model_matrix();
  toy.K = gram(toy.X, toy.X, kernel);
  toy.Kj = toy.K + kGramJitter * Eigen::MatrixXd::Identity(n, n);
  toy.y = toy.binned.targets();
  return toy;
}

SolverConfig squared_config(double lambda, double eps) {
  SolverConfig cfg;
  cfg.loss = SolverConfig::Loss::squared;
  cfg.lambda = lambda;
  cfg.epsilon_hat = eps;
  return cfg;
}

// The fixed classification instance whose optima were computed offline with
// an interior-point solver; the literals here must stay in sync with the
// frozen objectives below.
struct HingeInstance {
  BinnedDataset binned;
  ConstraintSystem system;
  Eigen::MatrixXd K;
  Eigen::MatrixXd Kj;
  Eigen::VectorXd y;
};

HingeInstance make_hinge_instance() {
  const double xs[8][2] = {{0.2, 1.1}, {-0.3, 0.8}, {1.5, -0.2}, {0.9, 0.4},
                           {-1.2, -0.7}, {0.4, -1.5}, {-0.8, 0.3}, {1.1, 0.9}};
  std::vector<Sample> samples;
  for (int i = 0; i < 8; ++i) {
    Sample sm;
    sm.x = {xs[i][0], xs[i][1]};
    sm.y = i < 4 ? 1.0 : -1.0;
    sm.s = (i % 2 == 0) ? 0.0 : 1.0;
    samples.push_back(sm);
  }
  HingeInstance inst{assign_bins(samples, explicit_grid({-1.5, 0.0, 1.5}),
                                 explicit_grid({-0.5, 0.5, 1.5}), false),
                     {}, {}, {}, {}};
  inst.system = build_constraints(inst.binned, KernelSpec::gaussian(0.5));
  Eigen::MatrixXd X = inst.binned.model_matrix();
  inst.K = gram(X, X, KernelSpec::gaussian(0.5));
  inst.Kj = inst.K + kGramJitter * Eigen::MatrixXd::Identity(8, 8);
  inst.y = inst.binned.targets();
  return inst;
}

}  // namespace

TEST_CASE("l1 ball projection on the stated examples") {
  Eigen::VectorXd inside(2);
  inside << 0.2, -0.3;
  CHECK((project_l1_ball(inside, 1.0) - inside).cwiseAbs().maxCoeff() == 0.0);

  Eigen::VectorXd spike(2);
  spike << 3.0, 0.0;
  Eigen::VectorXd p1 = project_l1_ball(spike, 1.0);
  CHECK(p1(0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(p1(1) == doctest::Approx(0.0).epsilon(1e-15));

  Eigen::VectorXd diag(2);
  diag << 1.0, 1.0;
  Eigen::VectorXd p2 = project_l1_ball(diag, 1.0);
  CHECK(p2(0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(p2(1) == doctest::Approx(0.5).epsilon(1e-14));

  CHECK(project_l1_ball(spike, 0.0).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(project_l1_ball(spike, -1.0), InvalidArgument);
}

TEST_CASE("l1 ball projection agrees with the bisection oracle") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    int dim = 1 + static_cast<int>(rng.uniform_int(8));
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v(i) = rng.gaussian() * 2.0;
    double radius = rng.uniform() * 3.0;
    Eigen::VectorXd mine = project_l1_ball(v, radius);
    Eigen::VectorXd ref = oracle::project_l1_bisect(v, radius);
    CHECK((mine - ref).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(mine.lpNorm<1>() <= radius + 1e-12);
    // idempotence
    CHECK((project_l1_ball(mine, radius) - mine).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("unconstrained squared loss reduces to the ridge closed form") {
  Toy toy = make_toy(31, 10, 3, KernelSpec::gaussian(0.6));
  AlphaSolution sol = solve_coefficients(toy.y, toy.K, toy.system.M,
                                         squared_config(0.5, kInf));
  Eigen::MatrixXd ridge = toy.K + 0.5 * Eigen::MatrixXd::Identity(10, 10);
  Eigen::VectorXd closed = ridge.ldlt().solve(toy.y);
  CHECK((sol.alpha - closed).norm() / closed.norm() <= 1e-6);
  CHECK(sol.diagnostics.iterations == 0);

  // a column-free constraint matrix takes the same path for any budget
  Eigen::MatrixXd empty(10, 0);
  AlphaSolution sol2 = solve_coefficients(toy.y, toy.K, empty, squared_config(0.5, 0.1));
  CHECK((sol2.alpha - sol.alpha).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("equality path matches the saddle-system reference solve") {
  for (std::uint64_t seed : {41, 42, 43}) {
    Toy toy = make_toy(seed, 12, 2, KernelSpec::gaussian(0.8));
    AlphaSolution sol = solve_coefficients(toy.y, toy.K, toy.system.M,
                                           squared_config(0.1, 0.0));
    Eigen::VectorXd cv = constraint_values(sol.alpha, toy.K, toy.system);
    CHECK(cv.cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(sol.diagnostics.kkt_residual <= 1e-5);
    CHECK(sol.diagnostics.iterations == 0);

    Eigen::VectorXd ref = oracle::equality_solve(toy.Kj, toy.system.M, toy.y, 0.1);
    CHECK((sol.alpha - ref).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("zero-budget fit agrees with the null-space reduction") {
  Rng rng(51);
  Toy toy = make_toy(52, 20, 3, KernelSpec::linear());
  SolverConfig cfg = squared_config(0.1, 0.0);
  FairModel constrained = fit(toy.binned, KernelSpec::linear(), toy.system, cfg);

  // independent route: project the features, fit without any constraint
  Eigen::MatrixXd Xt = null_space_features(toy.X, toy.system);
  Eigen::MatrixXd Kt = gram(Xt, Xt, KernelSpec::linear());
  AlphaSolution unconstrained =
      solve_coefficients(toy.y, Kt, Eigen::MatrixXd(20, 0), squared_config(0.1, kInf));

  Eigen::MatrixXd test_points(6, 3);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 3; ++j) test_points(i, j) = rng.gaussian();
  std::vector<double> via_constraint = predict(constrained, test_points);
  Eigen::MatrixXd projected = null_space_features(test_points, toy.system);
  Eigen::VectorXd via_projection =
      gram(projected, Xt, KernelSpec::linear()) * unconstrained.alpha;
  for (int i = 0; i < 6; ++i)
    CHECK(via_constraint[i] == doctest::Approx(via_projection(i)).epsilon(1e-6));
}

TEST_CASE("twelve-sample budgeted problem matches the first-order reference") {
  Toy toy = make_toy(61, 12, 2, KernelSpec::gaussian(0.5));
  SolverConfig cfg = squared_config(0.2, 0.1);
  cfg.tol_primal = cfg.tol_dual = 1e-9;
  cfg.max_iter = 200000;
  AlphaSolution sol = solve_coefficients(toy.y, toy.K, toy.system.M, cfg);
  CHECK(sol.diagnostics.converged);
  CHECK(sol.diagnostics.constraint_l1 <= 0.1 + kFeasibilitySlack);

  oracle::FirstOrderResult ref =
      oracle::constrained_squared_oracle(toy.Kj, toy.system.M, toy.y, 0.2, 0.1);
  CHECK(ref.converged);
  double mine = oracle::squared_objective(toy.Kj, toy.y, 0.2, sol.alpha);
  CHECK(std::abs(mine - ref.objective) <= 1e-5);
}

TEST_CASE("every fit returns feasible coefficients") {
  Toy toy = make_toy(71, 16, 2, KernelSpec::gaussian(0.7));
  for (double eps : {0.0, 0.02, 0.1, 0.5, 2.0, kInf}) {
    FairModel model = fit(toy.binned, KernelSpec::gaussian(0.7), toy.system,
                          squared_config(0.3, eps));
    Eigen::VectorXd cv = constraint_values(model.alpha, toy.K, toy.system);
    CHECK(cv.lpNorm<1>() <= eps + kFeasibilitySlack);
    CHECK(model.diagnostics.constraint_l1 <= eps + kFeasibilitySlack);
  }
}

TEST_CASE("training objective is non-increasing in the budget") {
  Toy toy = make_toy(81, 18, 2, KernelSpec::gaussian(0.6));
  SolverConfig base = squared_config(0.2, 0.0);
  base.tol_primal = base.tol_dual = 1e-9;
  base.max_iter = 100000;
  std::vector<double> objectives;
  for (double eps : {0.0, 0.005, 0.01}) {
    SolverConfig cfg = base;
    cfg.epsilon_hat = eps;
    AlphaSolution sol = solve_coefficients(toy.y, toy.K, toy.system.M, cfg);
    objectives.push_back(oracle::squared_objective(toy.Kj, toy.y, 0.2, sol.alpha));
  }
  CHECK(objectives[1] <= objectives[0] + 1e-9);
  CHECK(objectives[2] <= objectives[1] + 1e-9);
}

TEST_CASE("identical inputs give bitwise identical coefficients") {
  Toy toy = make_toy(91, 14, 3, KernelSpec::gaussian(0.4));
  SolverConfig cfg = squared_config(0.25, 0.05);
  AlphaSolution a = solve_coefficients(toy.y, toy.K, toy.system.M, cfg);
  AlphaSolution b = solve_coefficients(toy.y, toy.K, toy.system.M, cfg);
  REQUIRE(a.alpha.size() == b.alpha.size());
  CHECK(std::memcmp(a.alpha.data(), b.alpha.data(), sizeof(double) * a.alpha.size()) == 0);
}

TEST_CASE("midpoints of feasible solutions stay feasible with bounded objective") {
  Toy toy = make_toy(101, 15, 2, KernelSpec::gaussian(0.5));
  AlphaSolution a = solve_coefficients(toy.y, toy.K, toy.system.M, squared_config(0.2, 0.05));
  AlphaSolution b = solve_coefficients(toy.y, toy.K, toy.system.M, squared_config(0.2, 0.02));
  Eigen::VectorXd mid = 0.5 * (a.alpha + b.alpha);
  Eigen::VectorXd cv = constraint_values(mid, toy.K, toy.system);
  CHECK(cv.lpNorm<1>() <= 0.05 + kFeasibilitySlack);
  double oa = oracle::squared_objective(toy.Kj, toy.y, 0.2, a.alpha);
  double ob = oracle::squared_objective(toy.Kj, toy.y, 0.2, b.alpha);
  double om = oracle::squared_objective(toy.Kj, toy.y, 0.2, mid);
  CHECK(om <= std::max(oa, ob) + 1e-10);
}

TEST_CASE("recorded iterate trace settles monotonically once feasible") {
  Toy toy = make_toy(111, 20, 2, KernelSpec::gaussian(0.5));
  SolverConfig cfg = squared_config(0.3, 0.05);
  cfg.record_trace = true;
  AlphaSolution sol = solve_coefficients(toy.y, toy.K, toy.system.M, cfg);
  const auto& trace = sol.diagnostics.trace;
  REQUIRE(!trace.empty());
  std::size_t start = trace.size();
  for (std::size_t i = 0; i < trace.size(); ++i)
    if (trace[i].constraint_l1 <= 0.05 + kFeasibilitySlack) {
      start = i;
      break;
    }
  REQUIRE(start < trace.size());
  int violations = 0;
  for (std::size_t i = start + 1; i < trace.size(); ++i) {
    double slack = 1e-6 * std::max(1.0, std::abs(trace[i - 1].objective));
    if (trace[i].objective > trace[i - 1].objective + slack) ++violations;
  }
  CHECK(violations == 0);
  // the trace ends where the diagnostics report the final objective
  CHECK(trace.back().objective ==
        doctest::Approx(sol.diagnostics.objective).epsilon(1e-9));
}

TEST_CASE("interpolation in the small-regularization limit") {
  Rng rng(121);
  std::vector<Sample> samples;
  std::vector<double> ys;
  for (int i = 0; i < 8; ++i) {
    Sample sm;
    sm.x = {static_cast<double>(i), rng.uniform()};
    sm.s = (i % 2 == 0) ? 0.0 : 1.0;
    sm.y = rng.uniform(0.5, 1.5);
    samples.push_back(sm);
    ys.push_back(sm.y);
  }
  BinnedDataset binned = assign_bins(samples, make_grid(ys, 1, GridStrategy::uniform),
                                     explicit_grid({-0.5, 0.5, 1.5}), false);
  ConstraintSystem sys = build_constraints(binned, KernelSpec::gaussian(1.0));
  SolverConfig cfg = squared_config(1e-7, kInf);
  FairModel model = fit(binned, KernelSpec::gaussian(1.0), sys, cfg);
  std::vector<double> preds = predict(model, binned.model_matrix());
  for (int i = 0; i < 8; ++i) CHECK(std::abs(preds[i] - ys[i]) <= 1e-3);
}

TEST_CASE("zero coefficients predict zero") {
  Toy toy = make_toy(131, 10, 2, KernelSpec::gaussian(0.5));
  FairModel model;
  model.alpha = Eigen::VectorXd::Zero(10);
  model.intercept = 0.0;
  model.kernel = KernelSpec::gaussian(0.5);
  model.training_inputs = toy.X;
  std::vector<double> preds = predict(model, toy.X);
  for (double p : preds) CHECK(p == 0.0);
}

TEST_CASE("linear-kernel predictions equal the primal form") {
  Toy toy = make_toy(141, 14, 3, KernelSpec::linear());
  FairModel model = fit(toy.binned, KernelSpec::linear(), toy.system,
                        squared_config(0.4, 0.1));
  Eigen::VectorXd w = toy.X.transpose() * model.alpha;
  std::vector<double> preds = predict(model, toy.X);
  Eigen::VectorXd primal = toy.X * w;
  for (int i = 0; i < 14; ++i)
    CHECK(preds[i] == doctest::Approx(primal(i)).epsilon(1e-10));
}

TEST_CASE("prediction input dimension is validated") {
  Toy toy = make_toy(151, 10, 2, KernelSpec::gaussian(0.5));
  FairModel model = fit(toy.binned, KernelSpec::gaussian(0.5), toy.system,
                        squared_config(0.4, kInf));
  Eigen::MatrixXd wrong(2, 5);
  wrong.setZero();
  CHECK_THROWS_AS(predict(model, wrong), InvalidArgument);
}

TEST_CASE("objective of the zero solution is the squared target norm") {
  Toy toy = make_toy(161, 9, 2, KernelSpec::gaussian(0.5));
  FairModel model;
  model.alpha = Eigen::VectorXd::Zero(9);
  model.kernel = KernelSpec::gaussian(0.5);
  model.training_inputs = toy.X;
  SolverConfig cfg = squared_config(0.7, kInf);
  model.config = cfg;
  double obj = objective(model, toy.binned, cfg);
  CHECK(obj == doctest::Approx(toy.y.squaredNorm()).epsilon(1e-12));
}

TEST_CASE("objective matches a brute-force evaluation") {
  Toy toy = make_toy(171, 11, 2, KernelSpec::gaussian(0.5));
  SolverConfig cfg = squared_config(0.3, 0.05);
  FairModel model = fit(toy.binned, KernelSpec::gaussian(0.5), toy.system, cfg);
  double expected = oracle::squared_objective(toy.Kj, toy.y, 0.3, model.alpha);
  CHECK(objective(model, toy.binned, cfg) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("centering shifts predictions with the target mean") {
  Toy toy = make_toy(181, 12, 2, KernelSpec::gaussian(0.5));
  SolverConfig cfg = squared_config(0.5, kInf);
  cfg.centered = true;
  FairModel model = fit(toy.binned, KernelSpec::gaussian(0.5), toy.system, cfg);
  CHECK(model.intercept == doctest::Approx(toy.y.mean()).epsilon(1e-12));

  // shifting every target by a constant shifts every prediction by it
  std::vector<Sample> shifted = toy.binned.samples;
  for (Sample& sm : shifted) sm.y += 10.0;
  BinnedDataset shifted_binned =
      assign_bins(shifted, toy.binned.y_grid, toy.binned.s_grid, false);
  FairModel model2 = fit(shifted_binned, KernelSpec::gaussian(0.5), toy.system, cfg);
  std::vector<double> p1 = predict(model, toy.X);
  std::vector<double> p2 = predict(model2, toy.X);
  for (std::size_t i = 0; i < p1.size(); ++i)
    CHECK(p2[i] - p1[i] == doctest::Approx(10.0).epsilon(1e-9));
}

TEST_CASE("hinge optimum matches the interior-point solution computed offline") {
  HingeInstance inst = make_hinge_instance();
  SolverConfig cfg;
  cfg.loss = SolverConfig::Loss::hinge;
  cfg.lambda = 0.3;
  cfg.tol_primal = cfg.tol_dual = 1e-9;
  cfg.max_iter = 200000;

  // interior-point objectives computed offline for this exact instance
  const double frozen_unconstrained = 4.100590928658;
  const double frozen_budget = 4.178349200347;
  const double frozen_equality = 4.392146600022;

  cfg.epsilon_hat = kInf;
  AlphaSolution free = solve_coefficients(inst.y, inst.K, inst.system.M, cfg);
  CHECK(std::abs(oracle::hinge_objective(inst.Kj, inst.y, 0.3, free.alpha) -
                 frozen_unconstrained) <= 1e-4);

  cfg.epsilon_hat = 0.2;
  AlphaSolution budget = solve_coefficients(inst.y, inst.K, inst.system.M, cfg);
  CHECK(std::abs(oracle::hinge_objective(inst.Kj, inst.y, 0.3, budget.alpha) -
                 frozen_budget) <= 1e-4);
  Eigen::VectorXd cv = constraint_values(budget.alpha, inst.K, inst.system);
  CHECK(cv.lpNorm<1>() <= 0.2 + kFeasibilitySlack);

  cfg.epsilon_hat = 0.0;
  AlphaSolution tight = solve_coefficients(inst.y, inst.K, inst.system.M, cfg);
  CHECK(std::abs(oracle::hinge_objective(inst.Kj, inst.y, 0.3, tight.alpha) -
                 frozen_equality) <= 1e-4);
  Eigen::VectorXd cv0 = constraint_values(tight.alpha, inst.K, inst.system);
  CHECK(cv0.lpNorm<1>() <= kFeasibilitySlack);
}

TEST_CASE("hinge beats a long subgradient run") {
  HingeInstance inst = make_hinge_instance();
  SolverConfig cfg;
  cfg.loss = SolverConfig::Loss::hinge;
  cfg.lambda = 0.3;
  cfg.epsilon_hat = kInf;
  AlphaSolution sol = solve_coefficients(inst.y, inst.K, inst.system.M, cfg);
  Eigen::VectorXd ref = oracle::hinge_subgradient_solve(inst.Kj, inst.y, 0.3);
  double mine = oracle::hinge_objective(inst.Kj, inst.y, 0.3, sol.alpha);
  double theirs = oracle::hinge_objective(inst.Kj, inst.y, 0.3, ref);
  CHECK(mine <= theirs + 1e-4);
}

TEST_CASE("hinge rejects labels outside minus-one plus-one") {
  Toy toy = make_toy(191, 10, 2, KernelSpec::gaussian(0.5));  // regression targets
  SolverConfig cfg;
  cfg.loss = SolverConfig::Loss::hinge;
  cfg.lambda = 0.3;
  cfg.epsilon_hat = kInf;
  CHECK_THROWS_AS(solve_coefficients(toy.y, toy.K, toy.system.M, cfg), InvalidArgument);
}

TEST_CASE("iteration cap yields a feasible best effort and says so") {
  Toy toy = make_toy(201, 16, 2, KernelSpec::gaussian(0.5));
  SolverConfig cfg = squared_config(0.3, 0.01);
  cfg.max_iter = 3;
  cfg.adaptive_rho = false;
  AlphaSolution sol = solve_coefficients(toy.y, toy.K, toy.system.M, cfg);
  CHECK_FALSE(sol.diagnostics.converged);
  CHECK(sol.diagnostics.constraint_l1 <= 0.01 + kFeasibilitySlack);
}

TEST_CASE("warm starts do not change the answer") {
  Toy toy = make_toy(211, 14, 2, KernelSpec::gaussian(0.5));
  SolverConfig cfg = squared_config(0.25, 0.05);
  AlphaSolution cold = solve_coefficients(toy.y, toy.K, toy.system.M, cfg);
  AlphaSolution warm = solve_coefficients(toy.y, toy.K, toy.system.M, cfg, &cold.alpha);
  double oc = oracle::squared_objective(toy.Kj, toy.y, 0.25, cold.alpha);
  double ow = oracle::squared_objective(toy.Kj, toy.y, 0.25, warm.alpha);
  CHECK(std::abs(oc - ow) <= 1e-6 * std::max(1.0, std::abs(oc)));
  CHECK(warm.diagnostics.iterations <= cold.diagnostics.iterations);
}

TEST_CASE("solver configuration is validated") {
  Toy toy = make_toy(221, 8, 2, KernelSpec::gaussian(0.5));
  SolverConfig cfg = squared_config(0.0, kInf);
  CHECK_THROWS_AS(solve_coefficients(toy.y, toy.K, toy.system.M, cfg), InvalidArgument);
  cfg = squared_config(0.5, -0.1);
  CHECK_THROWS_AS(solve_coefficients(toy.y, toy.K, toy.system.M, cfg), InvalidArgument);
  cfg = squared_config(0.5, kInf);
  cfg.max_iter = 0;
  CHECK_THROWS_AS(solve_coefficients(toy.y, toy.K, toy.system.M, cfg), InvalidArgument);
  cfg = squared_config(0.5, kInf);
  Eigen::VectorXd short_y = toy.y.head(4);
  CHECK_THROWS_AS(solve_coefficients(short_y, toy.K, toy.system.M, cfg), InvalidArgument);
}
