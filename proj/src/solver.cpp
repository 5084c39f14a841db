#include "fairkrr/solver.hpp"

#include <algorithm>
#include <cmath>

namespace fairkrr {

namespace {

void validate_config(const SolverConfig& config) {
  if (!(config.lambda > 0.0)) throw InvalidArgument("solver: lambda must be > 0");
  if (!(config.epsilon_hat >= 0.0)) throw InvalidArgument("solver: epsilon_hat must be >= 0");
  if (!(config.tol_primal > 0.0) || !(config.tol_dual > 0.0))
    throw InvalidArgument("solver: tolerances must be > 0");
  if (config.max_iter < 1) throw InvalidArgument("solver: max_iter must be >= 1");
  if (!(config.rho > 0.0)) throw InvalidArgument("solver: rho must be > 0");
  if (!(config.over_relaxation >= 1.0) || !(config.over_relaxation < 2.0))
    throw InvalidArgument("solver: over_relaxation must lie in [1, 2)");
}

constexpr double kAbsTol = 1e-9;  // absolute floor under the relative stopping rule

double squared_loss_sum(const Eigen::VectorXd& yc, const Eigen::VectorXd& k_alpha) {
  return (yc - k_alpha).squaredNorm();
}

double hinge_loss_sum(const Eigen::VectorXd& y, const Eigen::VectorXd& k_alpha) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    sum += std::max(0.0, 1.0 - y(i) * k_alpha(i));
  return sum;
}

double objective_value(const SolverConfig& config, const Eigen::VectorXd& yc,
                       const Eigen::VectorXd& alpha, const Eigen::VectorXd& k_alpha) {
  double loss = config.loss == SolverConfig::Loss::squared
                    ? squared_loss_sum(yc, k_alpha)
                    : hinge_loss_sum(yc, k_alpha);
  return loss + config.lambda * alpha.dot(k_alpha);
}

// Margin-space proximal map of the hinge loss with penalty weight rho.
inline double hinge_prox(double a, double label, double rho) {
  double z = label * a;
  if (z >= 1.0) return a;
  if (z <= 1.0 - 1.0 / rho) return label * (z + 1.0 / rho);
  return label;
}

// Ridge path: alpha = (K + lambda I)^{-1} y. One Cholesky factorization, with
// one ridge-bumped retry should it fail.
AlphaSolution solve_unconstrained_squared(const Eigen::VectorXd& yc,
                                          const Eigen::MatrixXd& Kj,
                                          const SolverConfig& config) {
  Eigen::MatrixXd system = Kj;
  system.diagonal().array() += config.lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(system);
  if (llt.info() != Eigen::Success) {
    system.diagonal().array() += 1e-8;
    llt.compute(system);
    if (llt.info() != Eigen::Success)
      throw SolverError("ridge system not positive definite after retry");
  }
  AlphaSolution out;
  out.alpha = llt.solve(yc);
  out.diagnostics.iterations = 0;
  out.diagnostics.converged = true;
  return out;
}

// Equality path (squared loss, epsilon_hat = 0). The stationarity system of
//   min |yc - K alpha|^2 + lambda alpha^T K alpha  s.t.  M^T K alpha = 0
// is, after cancelling one factor of the (positive definite, jittered) K:
//   (K + lambda I) alpha + M nu/2 = yc,   M^T K alpha = 0.
// Block elimination with R = (K + lambda I)^{-1} and T = M^T K R M gives
//   nu/2 = T^+ (M^T K R yc),   alpha = R yc - R M (nu/2).
// T is C x C and may be rank-deficient (for three or more sensitive bins the
// pair columns are linearly dependent), so T^+ goes through a symmetric
// eigendecomposition with a relative rank cutoff. The right-hand side
// M^T K R yc lies in range(T), which makes the constraint exact up to
// round-off. No iteration is involved.
AlphaSolution solve_equality_squared(const Eigen::VectorXd& yc, const Eigen::MatrixXd& Kj,
                                     const Eigen::MatrixXd& M, const SolverConfig& config) {
  const int C = static_cast<int>(M.cols());
  Eigen::MatrixXd system = Kj;
  system.diagonal().array() += config.lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(system);
  if (llt.info() != Eigen::Success) {
    system.diagonal().array() += 1e-8;
    llt.compute(system);
    if (llt.info() != Eigen::Success)
      throw SolverError("equality-path system not positive definite after retry");
  }

  Eigen::VectorXd Ry = llt.solve(yc);
  Eigen::MatrixXd KM = Kj * M;            // n x C
  Eigen::MatrixXd RM = llt.solve(M);      // n x C
  Eigen::MatrixXd T = KM.transpose() * RM;
  T = 0.5 * (T + T.transpose().eval());
  Eigen::VectorXd g = KM.transpose() * Ry;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(T);
  if (eig.info() != Eigen::Success)
    throw SolverError("eigendecomposition of the constraint Schur complement failed");
  double cutoff = eig.eigenvalues().cwiseAbs().maxCoeff() * C *
                  std::numeric_limits<double>::epsilon();
  Eigen::VectorXd nu_half = Eigen::VectorXd::Zero(C);
  for (int i = 0; i < C; ++i) {
    double ev = eig.eigenvalues()(i);
    if (ev > cutoff) {
      const auto u = eig.eigenvectors().col(i);
      nu_half += u * (u.dot(g) / ev);
    }
  }

  AlphaSolution out;
  out.alpha = Ry - RM * nu_half;
  out.diagnostics.iterations = 0;
  out.diagnostics.converged = true;

  // Stationarity spot check with the recovered multipliers: the gradient of
  // the objective must be (numerically) a combination of constraint rows.
  Eigen::VectorXd k_alpha = Kj * out.alpha;
  Eigen::VectorXd grad =
      2.0 * (Kj * (k_alpha - yc)) + 2.0 * config.lambda * k_alpha;
  Eigen::VectorXd nu = Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(KM).solve(-grad);
  out.diagnostics.kkt_residual =
      (grad + KM * nu).norm() / std::max(1.0, grad.norm());
  if (!(out.diagnostics.kkt_residual < 1e-3))
    throw SolverError("stationarity check failed on the equality path");
  return out;
}

struct AdmmScratch {
  Eigen::MatrixXd base;  // rho-independent part of the reduced system
  Eigen::MatrixXd W;     // rho-dependent part
  Eigen::PartialPivLU<Eigen::MatrixXd> lu;
  double rho = 0.0;

  void factorize(double new_rho) {
    rho = new_rho;
    lu.compute(base + rho * W);
  }
};

// ADMM for 0 < epsilon_hat < inf with squared loss. Split v = M^T K alpha and
// put the L1-ball indicator on v. The alpha update solves
//   (2K + 2 lambda I + rho M M^T K) alpha = 2 yc + rho M (v - u),
// which is the stationarity condition of the update objective with one factor
// of K cancelled; the matrix is nonsingular for any PSD K and lambda > 0, and
// far better conditioned than the uncancelled normal equations. It changes
// only with rho, so the LU factorization is reused across iterations.
AlphaSolution solve_admm_squared(const Eigen::VectorXd& yc, const Eigen::MatrixXd& Kj,
                                 const Eigen::MatrixXd& M, const SolverConfig& config,
                                 const Eigen::VectorXd* warm_alpha) {
  const int n = static_cast<int>(Kj.rows());
  const int C = static_cast<int>(M.cols());
  const double theta = config.over_relaxation;
  const double eps = config.epsilon_hat;

  Eigen::MatrixXd KM = Kj * M;  // n x C; constraint map G = KM^T

  AdmmScratch scratch;
  scratch.base = 2.0 * Kj;
  scratch.base.diagonal().array() += 2.0 * config.lambda;
  scratch.W = M * KM.transpose();
  scratch.factorize(config.rho);

  Eigen::VectorXd alpha = warm_alpha && warm_alpha->size() == n
                              ? *warm_alpha
                              : Eigen::VectorXd::Zero(n);
  Eigen::VectorXd g_alpha = KM.transpose() * alpha;
  Eigen::VectorXd v = project_l1_ball(g_alpha, eps);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(C);

  AlphaSolution out;
  out.diagnostics.converged = false;
  int refactorizations = 0;

  int iter = 0;
  for (; iter < config.max_iter; ++iter) {
    Eigen::VectorXd rhs = 2.0 * yc + scratch.rho * (M * (v - u));
    alpha = scratch.lu.solve(rhs);
    g_alpha = KM.transpose() * alpha;

    Eigen::VectorXd g_hat = theta * g_alpha + (1.0 - theta) * v;
    Eigen::VectorXd v_prev = v;
    v = project_l1_ball(g_hat + u, eps);
    u += g_hat - v;

    double r_pri = (g_alpha - v).norm();
    double s_dual = scratch.rho * (KM * (v - v_prev)).norm();
    double eps_pri = std::sqrt(static_cast<double>(C)) * kAbsTol +
                     config.tol_primal * std::max(g_alpha.norm(), v.norm());
    double eps_dual = std::sqrt(static_cast<double>(n)) * kAbsTol +
                      config.tol_dual * scratch.rho * (KM * u).norm();
    out.diagnostics.primal_residual = r_pri;
    out.diagnostics.dual_residual = s_dual;

    if (config.record_trace) {
      Eigen::VectorXd k_alpha = Kj * alpha;
      out.diagnostics.trace.push_back(
          {iter, objective_value(config, yc, alpha, k_alpha), g_alpha.lpNorm<1>()});
    }

    if (r_pri <= eps_pri && s_dual <= eps_dual) {
      out.diagnostics.converged = true;
      ++iter;
      break;
    }

    if (config.adaptive_rho && (iter + 1) % 10 == 0 && refactorizations < 40) {
      if (r_pri > 10.0 * s_dual) {
        scratch.factorize(scratch.rho * 2.0);
        u *= 0.5;
        ++refactorizations;
      } else if (s_dual > 10.0 * r_pri) {
        scratch.factorize(scratch.rho * 0.5);
        u *= 2.0;
        ++refactorizations;
      }
    }
  }

  out.alpha = alpha;
  out.diagnostics.iterations = iter;
  out.diagnostics.final_rho = scratch.rho;
  return out;
}

// ADMM for the hinge loss (any epsilon_hat; an infinite radius turns the ball
// projection into the identity). Both the margins r = K alpha and the
// constraint values v = M^T K alpha are split, so the nonsmooth pieces
// separate: the hinge proximal map acts per sample on r, the ball projection
// on v. The alpha update solves
//   (2 lambda I + rho K + rho M M^T K) alpha = rho (r - u_r) + rho M (v - u_v).
AlphaSolution solve_admm_hinge(const Eigen::VectorXd& y, const Eigen::MatrixXd& Kj,
                               const Eigen::MatrixXd& M, const SolverConfig& config,
                               const Eigen::VectorXd* warm_alpha) {
  const int n = static_cast<int>(Kj.rows());
  const int C = static_cast<int>(M.cols());
  const double theta = config.over_relaxation;
  const double eps = config.epsilon_hat;

  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y(i) != 1.0 && y(i) != -1.0)
      throw InvalidArgument("hinge loss needs labels in {-1,+1}");

  Eigen::MatrixXd KM = Kj * M;

  AdmmScratch scratch;
  scratch.base = Eigen::MatrixXd::Zero(n, n);
  scratch.base.diagonal().array() = 2.0 * config.lambda;
  scratch.W = Kj + M * KM.transpose();
  scratch.factorize(config.rho);

  Eigen::VectorXd alpha = warm_alpha && warm_alpha->size() == n
                              ? *warm_alpha
                              : Eigen::VectorXd::Zero(n);
  Eigen::VectorXd k_alpha = Kj * alpha;
  Eigen::VectorXd g_alpha = KM.transpose() * alpha;
  Eigen::VectorXd r = k_alpha;
  Eigen::VectorXd v = std::isfinite(eps) ? project_l1_ball(g_alpha, eps) : g_alpha;
  Eigen::VectorXd u_r = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd u_v = Eigen::VectorXd::Zero(C);

  AlphaSolution out;
  out.diagnostics.converged = false;
  int refactorizations = 0;

  int iter = 0;
  for (; iter < config.max_iter; ++iter) {
    Eigen::VectorXd rhs = scratch.rho * (r - u_r) + scratch.rho * (M * (v - u_v));
    alpha = scratch.lu.solve(rhs);
    k_alpha = Kj * alpha;
    g_alpha = KM.transpose() * alpha;

    Eigen::VectorXd k_hat = theta * k_alpha + (1.0 - theta) * r;
    Eigen::VectorXd g_hat = theta * g_alpha + (1.0 - theta) * v;
    Eigen::VectorXd r_prev = r;
    Eigen::VectorXd v_prev = v;
    for (int i = 0; i < n; ++i)
      r(i) = hinge_prox(k_hat(i) + u_r(i), y(i), scratch.rho);
    v = std::isfinite(eps) ? project_l1_ball(g_hat + u_v, eps) : (g_hat + u_v);
    u_r += k_hat - r;
    u_v += g_hat - v;

    double r_pri = std::sqrt((k_alpha - r).squaredNorm() + (g_alpha - v).squaredNorm());
    double s_dual = scratch.rho * (Kj * (r - r_prev) + KM * (v - v_prev)).norm();
    double norm_px = std::sqrt(k_alpha.squaredNorm() + g_alpha.squaredNorm());
    double norm_z = std::sqrt(r.squaredNorm() + v.squaredNorm());
    double eps_pri = std::sqrt(static_cast<double>(n + C)) * kAbsTol +
                     config.tol_primal * std::max(norm_px, norm_z);
    double eps_dual = std::sqrt(static_cast<double>(n)) * kAbsTol +
                      config.tol_dual * scratch.rho * (Kj * u_r + KM * u_v).norm();
    out.diagnostics.primal_residual = r_pri;
    out.diagnostics.dual_residual = s_dual;

    if (config.record_trace)
      out.diagnostics.trace.push_back(
          {iter, objective_value(config, y, alpha, k_alpha), g_alpha.lpNorm<1>()});

    if (r_pri <= eps_pri && s_dual <= eps_dual) {
      out.diagnostics.converged = true;
      ++iter;
      break;
    }

    if (config.adaptive_rho && (iter + 1) % 10 == 0 && refactorizations < 40) {
      if (r_pri > 10.0 * s_dual) {
        scratch.factorize(scratch.rho * 2.0);
        u_r *= 0.5;
        u_v *= 0.5;
        ++refactorizations;
      } else if (s_dual > 10.0 * r_pri) {
        scratch.factorize(scratch.rho * 0.5);
        u_r *= 2.0;
        u_v *= 2.0;
        ++refactorizations;
      }
    }
  }

  out.alpha = alpha;
  out.diagnostics.iterations = iter;
  out.diagnostics.final_rho = scratch.rho;
  return out;
}

}  // namespace

Eigen::VectorXd project_l1_ball(const Eigen::VectorXd& v, double radius) {
  if (!(radius >= 0.0)) throw InvalidArgument("project_l1_ball: radius must be >= 0");
  if (radius == 0.0) return Eigen::VectorXd::Zero(v.size());
  if (v.lpNorm<1>() <= radius) return v;
  // Sort |v| descending and find the largest prefix whose soft threshold is
  // positive; that threshold solves sum max(|v_i| - t, 0) = radius.
  std::vector<double> mags(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) mags[static_cast<std::size_t>(i)] = std::abs(v(i));
  std::sort(mags.begin(), mags.end(), std::greater<double>());
  double cumulative = 0.0, threshold = 0.0;
  for (std::size_t j = 0; j < mags.size(); ++j) {
    cumulative += mags[j];
    double candidate = (cumulative - radius) / static_cast<double>(j + 1);
    if (mags[j] - candidate > 0.0)
      threshold = candidate;
    else
      break;
  }
  Eigen::VectorXd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    double mag = std::abs(v(i)) - threshold;
    out(i) = mag > 0.0 ? (v(i) > 0.0 ? mag : -mag) : 0.0;
  }
  return out;
}

AlphaSolution solve_coefficients(const Eigen::VectorXd& y, const Eigen::MatrixXd& gram,
                                 const Eigen::MatrixXd& M, const SolverConfig& config,
                                 const Eigen::VectorXd* warm_alpha) {
  validate_config(config);
  const Eigen::Index n = gram.rows();
  if (gram.cols() != n) throw InvalidArgument("solver: Gram matrix must be square");
  if (y.size() != n) throw InvalidArgument("solver: target length mismatch");
  if (M.size() > 0 && M.rows() != n)
    throw InvalidArgument("solver: constraint rows mismatch");

  Eigen::MatrixXd Kj = gram;
  Kj.diagonal().array() += kGramJitter;

  const bool unconstrained = M.cols() == 0 || !std::isfinite(config.epsilon_hat);

  AlphaSolution out;
  double intercept = 0.0;
  if (config.loss == SolverConfig::Loss::squared) {
    Eigen::VectorXd yc = y;
    if (config.centered) {
      intercept = y.mean();
      yc.array() -= intercept;
    }
    if (unconstrained)
      out = solve_unconstrained_squared(yc, Kj, config);
    else if (config.epsilon_hat == 0.0)
      out = solve_equality_squared(yc, Kj, M, config);
    else
      out = solve_admm_squared(yc, Kj, M, config, warm_alpha);
    out.intercept = intercept;

    Eigen::VectorXd k_alpha = Kj * out.alpha;
    out.diagnostics.objective = objective_value(config, yc, out.alpha, k_alpha);
    out.diagnostics.constraint_l1 =
        M.cols() > 0 ? (M.transpose() * k_alpha).lpNorm<1>() : 0.0;
  } else {
    Eigen::MatrixXd Mc = unconstrained ? Eigen::MatrixXd::Zero(n, 0) : M;
    out = solve_admm_hinge(y, Kj, Mc, config, warm_alpha);
    Eigen::VectorXd k_alpha = Kj * out.alpha;
    out.diagnostics.objective = objective_value(config, y, out.alpha, k_alpha);
    out.diagnostics.constraint_l1 =
        M.cols() > 0 ? (M.transpose() * k_alpha).lpNorm<1>() : 0.0;
  }

  // Feasibility is part of the contract of every fit. The iterative path can
  // sit a hair outside the ball at loose tolerances; a uniform rescale of
  // alpha moves the constraint values linearly and costs a vanishing amount
  // of objective there. The equality path has nothing to rescale toward, so
  // a violation is a hard failure.
  if (M.cols() > 0 && std::isfinite(config.epsilon_hat)) {
    double c1 = out.diagnostics.constraint_l1;
    if (c1 > config.epsilon_hat + kFeasibilitySlack) {
      if (config.epsilon_hat > 0.0 && c1 > 0.0) {
        double scale = (config.epsilon_hat + 0.5 * kFeasibilitySlack) / c1;
        out.alpha *= scale;
        out.diagnostics.rescaled_for_feasibility = true;
        Eigen::VectorXd k_alpha = Kj * out.alpha;
        Eigen::VectorXd yc = y;
        if (config.centered && config.loss == SolverConfig::Loss::squared)
          yc.array() -= out.intercept;
        out.diagnostics.objective = objective_value(config, yc, out.alpha, k_alpha);
        out.diagnostics.constraint_l1 = (M.transpose() * k_alpha).lpNorm<1>();
      }
      if (out.diagnostics.constraint_l1 > config.epsilon_hat + kFeasibilitySlack)
        throw SolverError("fit did not reach the feasible region");
    }
  }
  return out;
}

FairModel fit(const BinnedDataset& binned, const KernelSpec& kernel,
              const ConstraintSystem& system, const SolverConfig& config) {
  Eigen::MatrixXd Z = binned.model_matrix();
  return fit(binned, kernel, system, config, gram(Z, Z, kernel));
}

FairModel fit(const BinnedDataset& binned, const KernelSpec& kernel,
              const ConstraintSystem& system, const SolverConfig& config,
              const Eigen::MatrixXd& gram_train) {
  if (system.mode != ConstraintSystem::Mode::representer)
    throw InvalidArgument("fit needs the representer form of the constraints");
  AlphaSolution solution =
      solve_coefficients(binned.targets(), gram_train, system.M, config, nullptr);

  FairModel model;
  model.alpha = std::move(solution.alpha);
  model.intercept = solution.intercept;
  model.kernel = kernel;
  model.training_inputs = binned.model_matrix();
  model.system = system;
  model.config = config;
  model.diagnostics = std::move(solution.diagnostics);
  return model;
}

std::vector<double> predict(const FairModel& model, const Eigen::MatrixXd& inputs) {
  if (inputs.cols() != model.training_inputs.cols())
    throw InvalidArgument("predict: input dimension does not match training");
  Eigen::VectorXd yhat =
      gram(inputs, model.training_inputs, model.kernel) * model.alpha;
  yhat.array() += model.intercept;
  return {yhat.data(), yhat.data() + yhat.size()};
}

double objective(const FairModel& model, const BinnedDataset& binned,
                 const SolverConfig& config) {
  Eigen::MatrixXd Z = binned.model_matrix();
  Eigen::MatrixXd Kj = gram(Z, Z, model.kernel);
  Kj.diagonal().array() += kGramJitter;
  Eigen::VectorXd yc = binned.targets();
  if (config.loss == SolverConfig::Loss::squared) yc.array() -= model.intercept;
  Eigen::VectorXd k_alpha = Kj * model.alpha;
  return objective_value(config, yc, model.alpha, k_alpha);
}

}  // namespace fairkrr
