#pragma once

#include "filippov/error.hpp"
#include "filippov/linalg.hpp"
#include "filippov/model.hpp"

namespace filippov {

/// Rows c^T, c^T A, ..., c^T A^k and offsets (f, c^T e, ..., c^T A^{k-1} e).
struct StackedData {
  ModeId mode = ModeId::Mode1;
  Index k = 0;
  MatrixXd T;     // (k+1) x n
  VectorXd evec;  // k+1
};

/// Builds the stack by propagating the row c^T through A; powers of A are
/// never formed.
inline StackedData stacked(const MatrixXd& A, const VectorXd& e, const VectorXd& c, double f, Index k) {
  const Index n = c.size();
  StackedData s;
  s.k = k;
  s.T.resize(k + 1, n);
  s.evec.resize(k + 1);
  s.T.row(0) = c.transpose();
  s.evec(0) = f;
  for (Index j = 1; j <= k; ++j) {
    s.T.row(j) = s.T.row(j - 1) * A;
    s.evec(j) = s.T.row(j - 1).dot(e);
  }
  return s;
}

inline StackedData stacked(const BimodalSystem& sys, ModeId mode, Index k) {
  StackedData s = stacked(sys.A(mode), sys.e(mode), sys.c(), sys.f(), k);
  s.mode = mode;
  return s;
}

/// Largest h such that c^T, c^T A, ..., c^T A^h are linearly independent.
inline Index observability_index(const MatrixXd& A, const VectorXd& c, double tol_rank) {
  const Index n = c.size();
  MatrixXd T(1, n);
  T.row(0) = c.transpose();
  Index h = 0;
  while (h + 1 < n) {
    MatrixXd next(h + 2, n);
    next.topRows(h + 1) = T;
    next.row(h + 1) = T.row(h) * A;
    if (linalg::rank(next, tol_rank) < h + 2) break;
    T = std::move(next);
    ++h;
  }
  return h;
}

inline Index observability_index(const BimodalSystem& sys, ModeId mode, double tol_rank) {
  return observability_index(sys.A(mode), sys.c(), tol_rank);
}

struct ObservabilityInfo {
  ModeId mode = ModeId::Mode1;
  Index h = 0;
  VectorXd p;    // c^T A^{h+1} = p^T T^h
  MatrixXd P_k;  // rows c^T A^{h+1}, ..., c^T A^{h+k} in the basis T^h
  StackedData stack;  // T^h with evec e^h
};

/// Observability index, companion row p and the k x (h+1) coefficient
/// matrix reproducing c^T A^{h+1}, ..., c^T A^{h+k} from T^h.
inline ObservabilityInfo companion(const BimodalSystem& sys, ModeId mode, const Tolerances& tol, Index k = 1) {
  ObservabilityInfo info;
  info.mode = mode;
  info.h = observability_index(sys, mode, tol.rank);
  info.stack = stacked(sys, mode, info.h);
  const MatrixXd& T = info.stack.T;
  const MatrixXd& A = sys.A(mode);

  const Index rows = std::max<Index>(k, 1);
  MatrixXd higher(rows, sys.n());
  RowVectorXd r = T.row(info.h) * A;
  for (Index j = 0; j < rows; ++j) {
    higher.row(j) = r;
    r = r * A;
  }
  info.P_k = linalg::left_coefficients(T, higher);
  for (Index j = 0; j < rows; ++j) {
    const double resid = linalg::max_abs(higher.row(j) - info.P_k.row(j) * T);
    if (resid > linalg::scaled(tol.fact, std::max(linalg::max_abs(higher.row(j)), linalg::max_abs(T))))
      throw Error(ErrorKind::ResidualTooLarge,
                  "c^T A^" + std::to_string(info.h + 1 + j) + " is not in the span of T^h (residual " +
                      std::to_string(resid) + ")");
  }
  info.p = info.P_k.row(0).transpose();
  if (k == 0) info.P_k.resize(0, T.rows());
  return info;
}

/// c^T A^h e - p^T e^h: the offset left in the (h+1)-th output derivative
/// once the lower ones vanish.
inline double companion_offset(const BimodalSystem& sys, const ObservabilityInfo& info) {
  const double top = info.stack.T.row(info.h).dot(sys.e(info.mode));
  return top - info.p.dot(info.stack.evec);
}

}  // namespace filippov
