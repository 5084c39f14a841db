#include "fairkrr/kernel.hpp"

#include <cmath>
#include <limits>

namespace fairkrr {

ConstraintSystem ConstraintSystem::primal_view() const {
  if (A.size() == 0)
    throw InvalidArgument("primal form only exists for linear-kernel systems");
  ConstraintSystem out = *this;
  out.mode = Mode::primal;
  return out;
}

namespace {

// Scalar per-entry arithmetic shared by the serial and the parallel paths, so
// the two produce bitwise-identical matrices and neither depends on SIMD or
// reduction order.
inline double dot_scalar(const double* a, const double* b, int d) {
  double acc = 0.0;
  for (int j = 0; j < d; ++j) acc += a[j] * b[j];
  return acc;
}

inline double sq_norm_scalar(const double* a, int d) {
  double acc = 0.0;
  for (int j = 0; j < d; ++j) acc += a[j] * a[j];
  return acc;
}

inline double sq_dist_entry(const double* a, const double* b, int d,
                            double norm_a, double norm_b) {
  double v = norm_a + norm_b - 2.0 * dot_scalar(a, b, d);
  return v > 0.0 ? v : 0.0;
}

void check_inputs(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols())
    throw InvalidArgument("kernel inputs have mismatched feature dimensions");
  if (!a.allFinite() || !b.allFinite())
    throw InvalidArgument("kernel inputs must be finite");
}

}  // namespace

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  check_inputs(a, b);
  const int na = static_cast<int>(a.rows()), nb = static_cast<int>(b.rows());
  const int d = static_cast<int>(a.cols());
  // Row-major copies so each row is contiguous for the scalar helpers.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> ar = a, br = b;
  Eigen::VectorXd norm_a(na), norm_b(nb);
  for (int i = 0; i < na; ++i) norm_a(i) = sq_norm_scalar(ar.row(i).data(), d);
  for (int j = 0; j < nb; ++j) norm_b(j) = sq_norm_scalar(br.row(j).data(), d);
  Eigen::MatrixXd out(na, nb);
#pragma omp parallel for
  for (int i = 0; i < na; ++i)
    for (int j = 0; j < nb; ++j)
      out(i, j) = sq_dist_entry(ar.row(i).data(), br.row(j).data(), d, norm_a(i), norm_b(j));
  return out;
}

Eigen::MatrixXd gram(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                     const KernelSpec& spec) {
  check_inputs(a, b);
  const int na = static_cast<int>(a.rows()), nb = static_cast<int>(b.rows());
  const int d = static_cast<int>(a.cols());
  Eigen::MatrixXd out(na, nb);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> ar = a, br = b;
  if (spec.kind == KernelSpec::Kind::linear) {
#pragma omp parallel for
    for (int i = 0; i < na; ++i)
      for (int j = 0; j < nb; ++j)
        out(i, j) = dot_scalar(ar.row(i).data(), br.row(j).data(), d);
    return out;
  }
  if (!(spec.gamma > 0.0)) throw InvalidArgument("gaussian kernel needs gamma > 0");
  Eigen::VectorXd norm_a(na), norm_b(nb);
  for (int i = 0; i < na; ++i) norm_a(i) = sq_norm_scalar(ar.row(i).data(), d);
  for (int j = 0; j < nb; ++j) norm_b(j) = sq_norm_scalar(br.row(j).data(), d);
  const double gamma = spec.gamma;
#pragma omp parallel for
  for (int i = 0; i < na; ++i)
    for (int j = 0; j < nb; ++j)
      out(i, j) = std::exp(-gamma * sq_dist_entry(ar.row(i).data(), br.row(j).data(), d,
                                                  norm_a(i), norm_b(j)));
  return out;
}

Eigen::MatrixXd gram_from_distances(const Eigen::MatrixXd& d2, double gamma) {
  if (!(gamma > 0.0)) throw InvalidArgument("gaussian kernel needs gamma > 0");
  const int rows = static_cast<int>(d2.rows()), cols = static_cast<int>(d2.cols());
  Eigen::MatrixXd out(rows, cols);
  // Scalar std::exp, not Eigen's vectorized exp, so entries match gram() bitwise.
#pragma omp parallel for
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out(i, j) = std::exp(-gamma * d2(i, j));
  return out;
}

namespace serial {

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  check_inputs(a, b);
  const int na = static_cast<int>(a.rows()), nb = static_cast<int>(b.rows());
  const int d = static_cast<int>(a.cols());
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> ar = a, br = b;
  Eigen::VectorXd norm_a(na), norm_b(nb);
  for (int i = 0; i < na; ++i) norm_a(i) = sq_norm_scalar(ar.row(i).data(), d);
  for (int j = 0; j < nb; ++j) norm_b(j) = sq_norm_scalar(br.row(j).data(), d);
  Eigen::MatrixXd out(na, nb);
  for (int i = 0; i < na; ++i)
    for (int j = 0; j < nb; ++j)
      out(i, j) = sq_dist_entry(ar.row(i).data(), br.row(j).data(), d, norm_a(i), norm_b(j));
  return out;
}

Eigen::MatrixXd gram(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                     const KernelSpec& spec) {
  check_inputs(a, b);
  const int na = static_cast<int>(a.rows()), nb = static_cast<int>(b.rows());
  const int d = static_cast<int>(a.cols());
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> ar = a, br = b;
  Eigen::MatrixXd out(na, nb);
  if (spec.kind == KernelSpec::Kind::linear) {
    for (int i = 0; i < na; ++i)
      for (int j = 0; j < nb; ++j)
        out(i, j) = dot_scalar(ar.row(i).data(), br.row(j).data(), d);
    return out;
  }
  if (!(spec.gamma > 0.0)) throw InvalidArgument("gaussian kernel needs gamma > 0");
  Eigen::VectorXd norm_a(na), norm_b(nb);
  for (int i = 0; i < na; ++i) norm_a(i) = sq_norm_scalar(ar.row(i).data(), d);
  for (int j = 0; j < nb; ++j) norm_b(j) = sq_norm_scalar(br.row(j).data(), d);
  for (int i = 0; i < na; ++i)
    for (int j = 0; j < nb; ++j)
      out(i, j) = std::exp(-spec.gamma * sq_dist_entry(ar.row(i).data(), br.row(j).data(), d,
                                                       norm_a(i), norm_b(j)));
  return out;
}

}  // namespace serial

ConstraintSystem build_constraints(const BinnedDataset& binned, const KernelSpec& spec) {
  const int K = binned.K(), Q = binned.Q(), n = binned.n();
  ConstraintSystem system;
  system.mode = ConstraintSystem::Mode::representer;

  for (int k = 0; k < K; ++k)
    for (int p = 0; p < Q; ++p)
      for (int q = p + 1; q < Q; ++q) {
        if (binned.count(k, p) > 0 && binned.count(k, q) > 0)
          system.pair_index.push_back({k, p, q});
        else
          system.dropped.push_back({k, p, q});
      }
  if (system.pair_index.empty())
    throw InvalidArgument(
        "no constraint column has both cells populated; use a coarser grid");

  const int C = system.C();
  system.M = Eigen::MatrixXd::Zero(n, C);
  for (int c = 0; c < C; ++c) {
    const auto& id = system.pair_index[static_cast<std::size_t>(c)];
    double wp = 1.0 / binned.count(id.k, id.p);
    double wq = 1.0 / binned.count(id.k, id.q);
    for (int i : binned.cell(id.k, id.p)) system.M(i, c) = wp;
    for (int i : binned.cell(id.k, id.q)) system.M(i, c) = -wq;
  }

  if (spec.kind == KernelSpec::Kind::linear) {
    // Explicit features exist, so the primal columns u_{k,p} - u_{k,q} do too.
    Eigen::MatrixXd Z = binned.model_matrix();
    system.A = Z.transpose() * system.M;
  }
  return system;
}

Eigen::VectorXd constraint_values(const Eigen::VectorXd& coefficients,
                                  const Eigen::MatrixXd& gram_or_features,
                                  const ConstraintSystem& system) {
  if (system.mode == ConstraintSystem::Mode::primal) {
    if (system.A.rows() != coefficients.size())
      throw InvalidArgument("constraint_values: coefficient size does not match A");
    return system.A.transpose() * coefficients;
  }
  if (gram_or_features.cols() != coefficients.size() ||
      gram_or_features.rows() != system.M.rows())
    throw InvalidArgument("constraint_values: shape mismatch");
  return system.M.transpose() * (gram_or_features * coefficients);
}

Eigen::MatrixXd null_space_features(const Eigen::MatrixXd& features,
                                    const ConstraintSystem& system) {
  if (system.A.size() == 0)
    throw InvalidArgument("null_space_features needs a primal (linear-kernel) system");
  if (!system.A.allFinite())
    throw InvalidArgument("null_space_features: non-finite constraint matrix");
  if (features.cols() != system.A.rows())
    throw InvalidArgument("null_space_features: feature dimension does not match A");

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(system.A, Eigen::ComputeThinU);
  double tol = std::max(system.A.rows(), system.A.cols()) *
               std::numeric_limits<double>::epsilon() * svd.singularValues()(0);
  int rank = 0;
  for (int i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()(i) > tol) ++rank;
  if (rank == 0) return features;  // A is (numerically) zero: identity transform
  Eigen::MatrixXd basis = svd.matrixU().leftCols(rank);
  return features - (features * basis) * basis.transpose();
}

}  // namespace fairkrr
