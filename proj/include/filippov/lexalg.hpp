#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

#include "filippov/error.hpp"
#include "filippov/linalg.hpp"

namespace filippov {

enum class LexSign { Negative = -1, Zero = 0, Positive = 1 };

constexpr std::string_view to_string(LexSign s) {
  switch (s) {
    case LexSign::Negative: return "Negative";
    case LexSign::Zero: return "Zero";
    case LexSign::Positive: return "Positive";
  }
  return "?";
}

/// Sign of the first entry with |v_i| > tol; Zero if there is none.
inline LexSign lex_sign(const VectorXd& v, double tol) {
  for (Index i = 0; i < v.size(); ++i) {
    if (v(i) > tol) return LexSign::Positive;
    if (v(i) < -tol) return LexSign::Negative;
  }
  return LexSign::Zero;
}

inline LexSign negate(LexSign s) { return static_cast<LexSign>(-static_cast<int>(s)); }

// ---------------------------------------------------------------------------
// Lower-triangular factorization T1 = M * T2

struct FactorNone {};

struct FactorUnique {
  MatrixXd M;
};

/// One-parameter family: M(alpha) equals M0 with its last row set to
/// base + alpha * direction in the leading columns and alpha on the diagonal.
struct FactorParametric {
  MatrixXd M0;
  RowVectorXd base;
  RowVectorXd direction;
  Index diagonal_slot = 0;

  MatrixXd instantiate(double alpha) const {
    MatrixXd M = M0;
    M.row(diagonal_slot).setZero();
    M.row(diagonal_slot).head(diagonal_slot) = base + alpha * direction;
    M(diagonal_slot, diagonal_slot) = alpha;
    return M;
  }

  /// Leading block shared by every member of the family.
  MatrixXd leading() const { return M0.topLeftCorner(diagonal_slot, diagonal_slot); }
};

using TriangularFactorization = std::variant<FactorNone, FactorUnique, FactorParametric>;

namespace detail {

/// Unique coefficients C with T1 = C * T2 for T2 of full row rank, accepted
/// only when C is lower triangular with a positive diagonal.
inline std::optional<MatrixXd> unique_triangular(const MatrixXd& T1, const MatrixXd& T2, double tol_fact,
                                                 double tol_diag) {
  MatrixXd C = linalg::left_coefficients(T2, T1);
  const double scale = std::max(linalg::max_abs(T1), linalg::max_abs(T2));
  if (linalg::max_abs(T1 - C * T2) > linalg::scaled(tol_fact, scale)) return std::nullopt;
  for (Index i = 0; i < C.rows(); ++i) {
    for (Index j = i + 1; j < C.cols(); ++j) {
      if (std::abs(C(i, j)) > tol_fact) return std::nullopt;
      C(i, j) = 0.0;
    }
    if (!(C(i, i) > tol_diag)) return std::nullopt;
  }
  if (linalg::max_abs(T1 - C * T2) > linalg::scaled(tol_fact, scale)) return std::nullopt;
  return C;
}

}  // namespace detail

/// Solves T1 = M * T2 for lower-triangular M with positive diagonal.
///
/// Full row rank T2 gives a unique candidate that is either accepted or not.
/// When only the last row of T2 is dependent on the others, the last row of
/// M is a one-parameter family indexed by its diagonal entry. Deeper rank
/// deficiency throws RankDeficiencyUnsupported.
inline TriangularFactorization solve_triangular_factor(const MatrixXd& T1, const MatrixXd& T2, double tol_fact,
                                                       double tol_diag, double tol_rank = Tolerances{}.rank) {
  if (T1.rows() != T2.rows() || T1.cols() != T2.cols())
    throw Error(ErrorKind::DimensionMismatch, "factorization operands differ in shape");
  const Index k = T2.rows();
  if (k == 0) return FactorUnique{MatrixXd(0, 0)};
  const Index r = linalg::rank(T2, tol_rank);
  if (r == k) {
    if (auto M = detail::unique_triangular(T1, T2, tol_fact, tol_diag)) return FactorUnique{*M};
    return FactorNone{};
  }
  const MatrixXd top2 = T2.topRows(k - 1);
  if (r != k - 1 || linalg::rank(top2, tol_rank) != k - 1)
    throw Error(ErrorKind::RankDeficiencyUnsupported,
                "T2 has rank " + std::to_string(r) + " with " + std::to_string(k) +
                    " rows; only a dependent last row is supported");

  auto sub = detail::unique_triangular(T1.topRows(k - 1), top2, tol_fact, tol_diag);
  if (!sub) return FactorNone{};

  const double scale = std::max(linalg::max_abs(T1), linalg::max_abs(T2));
  const RowVectorXd last1 = T1.row(k - 1);
  const RowVectorXd last2 = T2.row(k - 1);
  const RowVectorXd base = linalg::left_coefficients(top2, last1);
  if (linalg::max_abs(last1 - base * top2) > linalg::scaled(tol_fact, scale)) return FactorNone{};
  const RowVectorXd companion = linalg::left_coefficients(top2, last2);
  if (linalg::max_abs(last2 - companion * top2) > linalg::scaled(tol_fact, scale))
    throw Error(ErrorKind::ResidualTooLarge, "dependent row of T2 not reproduced by its leading rows");

  FactorParametric fam;
  fam.M0 = MatrixXd::Zero(k, k);
  fam.M0.topLeftCorner(k - 1, k - 1) = *sub;
  fam.M0.row(k - 1).head(k - 1) = base;
  fam.base = base;
  fam.direction = -companion;
  fam.diagonal_slot = k - 1;
  return fam;
}

// ---------------------------------------------------------------------------
// Implication P1 x < q1  =>  P2 x <= q2 (lexicographic)

enum class LexImplicationBranch { Equality, StrictPrefix };
enum class LexFailureReason { NoTriangularFactor, PositiveGap };

struct LexImplicationHolds {
  LexImplicationBranch branch;
  Index prefix = 0;  // number of leading rows used
  MatrixXd M;        // prefix x prefix
};

struct LexImplicationFails {
  /// 0-based row at which the decision was made; every earlier row factors
  /// with zero offset gap.
  Index failure_row = 0;
  LexFailureReason reason;
};

using LexImplication = std::variant<LexImplicationHolds, LexImplicationFails>;

/// Decides whether P1 x < q1 implies P2 x <= q2 by scanning prefixes: each
/// prefix either factors as P1 = M P2 with its offset gap q1 - M q2 zero
/// (continue), lex-negative (holds), lex-positive or not factorable (fails).
/// Both matrices must have full row rank.
inline LexImplication decide_lex_implication(const MatrixXd& P1, const VectorXd& q1, const MatrixXd& P2,
                                             const VectorXd& q2, const Tolerances& tol = {}) {
  if (P1.rows() != P2.rows() || P1.cols() != P2.cols() || q1.size() != P1.rows() || q2.size() != P2.rows())
    throw Error(ErrorKind::DimensionMismatch, "lex implication operands differ in shape");
  if (!linalg::full_row_rank(P1, tol.rank)) throw Error(ErrorKind::NotFullRowRank, "P1 lacks full row rank");
  if (!linalg::full_row_rank(P2, tol.rank)) throw Error(ErrorKind::NotFullRowRank, "P2 lacks full row rank");

  const Index m = P1.rows();
  for (Index l = 1; l <= m; ++l) {
    auto M = detail::unique_triangular(P1.topRows(l), P2.topRows(l), tol.fact, tol.diag);
    if (!M) return LexImplicationFails{l - 1, LexFailureReason::NoTriangularFactor};
    const VectorXd gap = q1.head(l) - (*M) * q2.head(l);
    switch (lex_sign(gap, tol.lex)) {
      case LexSign::Negative:
        return LexImplicationHolds{LexImplicationBranch::StrictPrefix, l, *M};
      case LexSign::Positive:
        return LexImplicationFails{l - 1, LexFailureReason::PositiveGap};
      case LexSign::Zero:
        if (l == m) return LexImplicationHolds{LexImplicationBranch::Equality, l, *M};
        break;
    }
  }
  return LexImplicationFails{0, LexFailureReason::NoTriangularFactor};  // unreachable for m >= 1
}

/// Builds x with P1 x < q1 and not (P2 x <= q2), using the failure row of a
/// Fails verdict. Rows before the failure row are held at equality, the
/// failure row of P1 x - q1 is pushed negative and that of P2 x - q2
/// positive. Returns nullopt if the construction cannot satisfy both signs.
inline std::optional<VectorXd> construct_lex_counterexample(const MatrixXd& P1, const VectorXd& q1,
                                                            const MatrixXd& P2, const VectorXd& q2,
                                                            Index failure_row, const Tolerances& tol = {}) {
  const Index n = P1.cols();
  const Index l = failure_row;
  VectorXd xp = VectorXd::Zero(n);
  MatrixXd N = MatrixXd::Identity(n, n);
  if (l > 0) {
    auto sol = linalg::solve_affine(P2.topRows(l), q2.head(l), tol.rank, tol.fact);
    if (!sol) return std::nullopt;
    xp = sol->particular;
    N = sol->kernel;
  }
  // On {xp + N w}: a(w) = a0 + alpha.w (row l of P1 x - q1), b(w) = b0 + beta.w.
  const double a0 = P1.row(l).dot(xp) - q1(l);
  const double b0 = P2.row(l).dot(xp) - q2(l);
  const VectorXd alpha = (P1.row(l) * N).transpose();
  const VectorXd beta = (P2.row(l) * N).transpose();

  auto verify = [&](const VectorXd& x) -> bool {
    const VectorXd y1 = P1 * x - q1;
    const VectorXd y2 = P2 * x - q2;
    return lex_sign(y1, tol.lex) == LexSign::Negative && lex_sign(y2, tol.lex) == LexSign::Positive;
  };

  std::vector<VectorXd> candidates;
  if (N.cols() > 0) {
    MatrixXd G(2, N.cols());
    G.row(0) = alpha.transpose();
    G.row(1) = beta.transpose();
    if (linalg::rank(G, tol.rank) == 2) {
      const Eigen::Vector2d target(-1.0 - a0, 1.0 - b0);
      candidates.push_back(xp + N * linalg::left_coefficients(G.transpose(), target.transpose()).transpose());
    } else {
      // beta = kappa * alpha (or alpha = 0); move along the common direction.
      const double aa = alpha.squaredNorm();
      const double bb = beta.squaredNorm();
      const VectorXd dir = aa > 0 ? VectorXd(alpha / aa) : (bb > 0 ? VectorXd(beta / bb) : VectorXd::Zero(N.cols()));
      const double ka = alpha.dot(dir);
      const double kb = beta.dot(dir);
      // a = a0 + ka t, b = b0 + kb t; pick t in the feasible interval.
      double lo = -std::numeric_limits<double>::infinity();
      double hi = std::numeric_limits<double>::infinity();
      auto constrain = [&](double k0, double k1, bool want_negative) {
        // want_negative: k0 + k1 t < 0, else k0 + k1 t > 0.
        const double s = want_negative ? -1.0 : 1.0;
        if (k1 == 0.0) {
          if (!(s * k0 > 0)) hi = lo - 1.0;
          return;
        }
        const double root = -k0 / k1;
        if (s * k1 > 0) lo = std::max(lo, root);
        else hi = std::min(hi, root);
      };
      constrain(a0, ka, true);
      constrain(b0, kb, false);
      if (lo < hi) {
        double t = 0.0;
        if (std::isfinite(lo) && std::isfinite(hi)) t = 0.5 * (lo + hi);
        else if (std::isfinite(lo)) t = lo + 1.0 + std::abs(lo);
        else if (std::isfinite(hi)) t = hi - 1.0 - std::abs(hi);
        candidates.push_back(xp + N * (t * dir));
      }
    }
  }
  candidates.push_back(xp);
  for (const auto& x : candidates) {
    if (verify(x)) return x;
  }
  return std::nullopt;
}

}  // namespace filippov
