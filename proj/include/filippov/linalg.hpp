#pragma once

#include <algorithm>
#include <cmath>
#include <optional>

#include <Eigen/Dense>

namespace filippov {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

/// Decision tolerances. Every verdict in the library is a function of these
/// values and the system data only.
struct Tolerances {
  double rank = 1e-9;   // relative singular-value threshold
  double fact = 1e-8;   // factorization / equality residuals
  double diag = 1e-8;   // minimum accepted diagonal entry of M
  double lex = 1e-9;    // entries with |v_i| <= lex count as zero
};

namespace linalg {

inline double max_abs(const MatrixXd& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

/// Residual bound scaled by the magnitude of the data it compares.
inline double scaled(double tol, double magnitude) {
  return tol * std::max(1.0, magnitude);
}

/// Numerical rank with threshold tol_rank * sigma_max.
inline Index rank(const MatrixXd& m, double tol_rank) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<MatrixXd> svd(m);
  const VectorXd& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  const double cutoff = tol_rank * s(0);
  Index r = 0;
  for (Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff) ++r;
  }
  return r;
}

inline bool full_row_rank(const MatrixXd& m, double tol_rank) {
  return rank(m, tol_rank) == m.rows();
}

/// Least-squares X with X * basis ~= rhs (rows of rhs expressed in the row
/// space of basis). Exact when basis has full row rank and rhs lies in its
/// row space.
inline MatrixXd left_coefficients(const MatrixXd& basis, const MatrixXd& rhs) {
  return basis.transpose().completeOrthogonalDecomposition().solve(rhs.transpose()).transpose();
}

/// Orthonormal basis of ker(m) as columns (n x (n - rank)).
inline MatrixXd null_space(const MatrixXd& m, double tol_rank) {
  const Index n = m.cols();
  if (m.rows() == 0) return MatrixXd::Identity(n, n);
  Eigen::JacobiSVD<MatrixXd> svd(m, Eigen::ComputeFullV);
  const Index r = rank(m, tol_rank);
  return svd.matrixV().rightCols(n - r);
}

struct AffineSolution {
  VectorXd particular;
  MatrixXd kernel;  // columns span ker(m)
};

/// Solves m * x = rhs. Returns nullopt when the system is inconsistent.
inline std::optional<AffineSolution> solve_affine(const MatrixXd& m, const VectorXd& rhs,
                                                  double tol_rank, double tol_fact) {
  AffineSolution out;
  if (m.rows() == 0) {
    out.particular = VectorXd::Zero(m.cols());
    out.kernel = MatrixXd::Identity(m.cols(), m.cols());
    return out;
  }
  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(m);
  cod.setThreshold(tol_rank);
  out.particular = cod.solve(rhs);
  const double resid = max_abs(m * out.particular - rhs);
  if (resid > scaled(tol_fact, std::max(max_abs(m), max_abs(rhs)))) return std::nullopt;
  out.kernel = null_space(m, tol_rank);
  return out;
}

/// Two-norm of a matrix (largest singular value).
inline double spectral_norm(const MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<MatrixXd> svd(m);
  return svd.singularValues()(0);
}

inline bool all_finite(const MatrixXd& m) { return m.allFinite(); }

}  // namespace linalg
}  // namespace filippov
