#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "filippov/error.hpp"
#include "filippov/lexalg.hpp"
#include "filippov/linalg.hpp"
#include "filippov/model.hpp"
#include "filippov/observability.hpp"
#include "filippov/wsets.hpp"

namespace filippov {

enum class StatementId { S3, S4, S5, S6, Thm0, Thm2, Thm3, Cor1, Continuity, ZenoFree };

constexpr std::string_view to_string(StatementId id) {
  switch (id) {
    case StatementId::S3: return "S3";
    case StatementId::S4: return "S4";
    case StatementId::S5: return "S5";
    case StatementId::S6: return "S6";
    case StatementId::Thm0: return "Thm0";
    case StatementId::Thm2: return "Thm2";
    case StatementId::Thm3: return "Thm3";
    case StatementId::Cor1: return "Cor1";
    case StatementId::Continuity: return "Continuity";
    case StatementId::ZenoFree: return "ZenoFree";
  }
  return "?";
}

struct Certificate {
  std::optional<Index> k;
  std::optional<MatrixXd> M;
  std::optional<double> alpha;
  std::optional<VectorXd> g;
  std::optional<double> mu;
  std::optional<double> lipschitz_bound;
  std::optional<double> rho1;
  std::optional<double> rho2;
  std::optional<VectorXd> witness;  // state where a failed implication is exhibited
  std::optional<bool> vacuous;
  std::optional<Index> h1;
  std::optional<Index> h2;
};

struct StatementVerdict {
  StatementId id = StatementId::S3;
  bool holds = false;
  bool applicable = true;
  Certificate certificate;
  std::string note;
};

namespace detail {

struct ModePair {
  StackedData s1;
  StackedData s2;
};

inline ModePair stacks(const BimodalSystem& sys, Index k) {
  return {stacked(sys, ModeId::Mode1, k), stacked(sys, ModeId::Mode2, k)};
}

inline double data_scale(const MatrixXd& a, const MatrixXd& b) {
  return std::max(linalg::max_abs(a), linalg::max_abs(b));
}

inline bool near_zero(const MatrixXd& r, double tol, double magnitude) {
  return linalg::max_abs(r) <= linalg::scaled(tol, magnitude);
}

/// Smallest-effort alpha > 0 with sigma - alpha * rho2 > tol, if one exists.
inline std::optional<double> choose_alpha(double sigma, double rho2, double tol) {
  if (sigma - rho2 > tol) return 1.0;
  if (sigma > tol) return sigma / (2.0 * rho2);  // rho2 > 0 here
  if (rho2 < -tol) return (std::max(0.0, -sigma) + 1.0) / (-rho2);
  return std::nullopt;
}

/// Statement 3 restricted to k in [kmin, kmax].
inline StatementVerdict lex_factor_range(const BimodalSystem& sys, const Tolerances& tol, Index kmin, Index kmax,
                                         StatementId id) {
  StatementVerdict v;
  v.id = id;
  for (Index k = kmin; k <= kmax; ++k) {
    const ModePair st = stacks(sys, k);
    const auto fac = solve_triangular_factor(st.s1.T, st.s2.T, tol.fact, tol.diag, tol.rank);
    if (const auto* u = std::get_if<FactorUnique>(&fac)) {
      const VectorXd d = st.s1.evec - u->M * st.s2.evec;
      if (lex_sign(d, tol.lex) == LexSign::Positive) {
        v.holds = true;
        v.certificate.k = k;
        v.certificate.M = u->M;
        return v;
      }
    } else if (const auto* fam = std::get_if<FactorParametric>(&fac)) {
      const Index s = fam->diagonal_slot;
      const VectorXd lead = st.s1.evec.head(s) - fam->leading() * st.s2.evec.head(s);
      const LexSign ls = lex_sign(lead, tol.lex);
      if (ls == LexSign::Negative) continue;
      const double sigma = st.s1.evec(s) - fam->base.dot(st.s2.evec.head(s));
      const double rho2 = st.s2.evec(s) + fam->direction.dot(st.s2.evec.head(s));
      std::optional<double> alpha = ls == LexSign::Positive ? std::optional<double>(1.0)
                                                             : choose_alpha(sigma, rho2, tol.lex);
      if (!alpha) continue;
      const MatrixXd M = fam->instantiate(*alpha);
      if (lex_sign(st.s1.evec - M * st.s2.evec, tol.lex) != LexSign::Positive) continue;
      v.holds = true;
      v.certificate.k = k;
      v.certificate.M = M;
      v.certificate.alpha = *alpha;
      if (ls == LexSign::Zero) {
        v.certificate.rho1 = sigma;
        v.certificate.rho2 = rho2;
      }
      return v;
    }
  }
  return v;
}

/// Unique factor T1^h = M T2^h together with e1^h = M e2^h.
inline std::optional<MatrixXd> equality_factor(const BimodalSystem& sys, Index h, const Tolerances& tol) {
  const ModePair st = stacks(sys, h);
  const auto fac = solve_triangular_factor(st.s1.T, st.s2.T, tol.fact, tol.diag, tol.rank);
  const auto* u = std::get_if<FactorUnique>(&fac);
  if (!u) return std::nullopt;
  if (!near_zero(st.s1.evec - u->M * st.s2.evec, tol.fact, data_scale(st.s1.evec, st.s2.evec)))
    return std::nullopt;
  return u->M;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Individual checkers

/// Holds iff both fields agree everywhere on the surface.
inline StatementVerdict check_continuity(const BimodalSystem& sys, const Tolerances& tol = {}) {
  StatementVerdict v;
  v.id = StatementId::Continuity;
  const VectorXd& c = sys.c();
  const VectorXd xi0 = -sys.f() * c / c.squaredNorm();
  const MatrixXd dA = sys.A1() - sys.A2();
  const MatrixXd N = linalg::null_space(c.transpose(), tol.rank);
  const double scale = std::max({linalg::max_abs(sys.A1()), linalg::max_abs(sys.A2()),
                                 linalg::max_abs(sys.e1()), linalg::max_abs(sys.e2())});
  const VectorXd r0 = dA * xi0 + sys.e1() - sys.e2();
  const bool ok0 = detail::near_zero(r0, tol.fact, scale * std::max(1.0, linalg::max_abs(xi0)));
  const bool okN = detail::near_zero(dA * N, tol.fact, scale);
  v.holds = ok0 && okN;
  if (!ok0) {
    v.certificate.witness = xi0;
  } else if (!okN) {
    Index j = 0;
    (dA * N).colwise().norm().maxCoeff(&j);
    v.certificate.witness = VectorXd(xi0 + N.col(j));
  }
  return v;
}

/// One-sided Lipschitz test: A1 - A2 = g c^T and e1 - e2 = f g + mu c with
/// mu >= 0. The bound carried in the certificate is the largest logarithmic
/// norm of the two modes.
inline StatementVerdict check_one_sided_lipschitz(const BimodalSystem& sys, const Tolerances& tol = {}) {
  StatementVerdict v;
  v.id = StatementId::Thm0;
  const VectorXd& c = sys.c();
  const double cc = c.squaredNorm();
  const MatrixXd dA = sys.A1() - sys.A2();
  const VectorXd g = dA * c / cc;
  const double scale = std::max({linalg::max_abs(sys.A1()), linalg::max_abs(sys.A2()),
                                 linalg::max_abs(sys.e1()), linalg::max_abs(sys.e2())});
  const bool rank_one = detail::near_zero(dA - g * c.transpose(), tol.fact, scale * linalg::max_abs(c));
  const VectorXd r = sys.e1() - sys.e2() - sys.f() * g;
  const double mu = c.dot(r) / cc;
  const bool aligned = detail::near_zero(r - mu * c, tol.fact, scale * std::max(1.0, std::abs(sys.f())));
  v.certificate.g = g;
  v.certificate.mu = mu;
  auto lognorm = [](const MatrixXd& A) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (A + A.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
  };
  v.certificate.lipschitz_bound = std::max(lognorm(sys.A1()), lognorm(sys.A2()));
  v.holds = rank_one && aligned && mu >= -tol.fact;
  if (!rank_one) v.note = "A1 - A2 is not of the form g c^T";
  else if (!aligned) v.note = "e1 - e2 - f g is not parallel to c";
  else if (!v.holds) v.note = "mu is negative";
  return v;
}

inline StatementVerdict check_statement3(const BimodalSystem& sys, const Tolerances& tol = {}) {
  const Index h1 = observability_index(sys, ModeId::Mode1, tol.rank);
  const Index h2 = observability_index(sys, ModeId::Mode2, tol.rank);
  const Index h = std::min(h1, h2);
  StatementVerdict v = detail::lex_factor_range(sys, tol, 1, h + 1, StatementId::S3);
  v.certificate.h1 = h1;
  v.certificate.h2 = h2;
  return v;
}

inline StatementVerdict check_thm2(const BimodalSystem& sys, const Tolerances& tol = {}) {
  return detail::lex_factor_range(sys, tol, 1, 1, StatementId::Thm2);
}

inline StatementVerdict check_thm3(const BimodalSystem& sys, const Tolerances& tol = {}) {
  try {
    return detail::lex_factor_range(sys, tol, 2, 2, StatementId::Thm3);
  } catch (const Error& ex) {
    if (ex.kind() != ErrorKind::RankDeficiencyUnsupported) throw;
    StatementVerdict v;
    v.id = StatementId::Thm3;
    v.applicable = false;
    v.note = "T2^2 has rank below 2; no 3x3 factor can be parametrized";
    return v;
  }
}

inline StatementVerdict check_statement4(const BimodalSystem& sys, const Tolerances& tol = {}) {
  StatementVerdict v;
  v.id = StatementId::S4;
  const Index h1 = observability_index(sys, ModeId::Mode1, tol.rank);
  const Index h2 = observability_index(sys, ModeId::Mode2, tol.rank);
  v.certificate.h1 = h1;
  v.certificate.h2 = h2;
  if (h1 == h2) {
    v.applicable = false;
    v.note = "observability indices coincide";
    return v;
  }
  const Index h = std::min(h1, h2);
  const auto M = detail::equality_factor(sys, h, tol);
  if (!M) {
    v.note = "no triangular factor with matching offsets on T^h";
    return v;
  }
  v.certificate.M = *M;
  if (h1 < h2) {
    const double rho1 = companion_offset(sys, companion(sys, ModeId::Mode1, tol));
    v.certificate.rho1 = rho1;
    v.holds = rho1 > tol.lex;
  } else {
    const double rho2 = companion_offset(sys, companion(sys, ModeId::Mode2, tol));
    v.certificate.rho2 = rho2;
    v.holds = rho2 < -tol.lex;
  }
  return v;
}

inline StatementVerdict check_statement5(const BimodalSystem& sys, const Tolerances& tol = {}) {
  StatementVerdict v;
  v.id = StatementId::S5;
  const Index h1 = observability_index(sys, ModeId::Mode1, tol.rank);
  const Index h2 = observability_index(sys, ModeId::Mode2, tol.rank);
  v.certificate.h1 = h1;
  v.certificate.h2 = h2;
  if (h1 != h2) {
    v.applicable = false;
    v.note = "observability indices differ";
    return v;
  }
  const Index h = h1;
  const double rho1 = companion_offset(sys, companion(sys, ModeId::Mode1, tol));
  const double rho2 = companion_offset(sys, companion(sys, ModeId::Mode2, tol));
  v.certificate.rho1 = rho1;
  v.certificate.rho2 = rho2;
  if (!detail::equality_factor(sys, h, tol)) {
    v.note = "no triangular factor with matching offsets on T^h";
    return v;
  }
  const detail::ModePair st = detail::stacks(sys, h + 1);
  const auto fac = solve_triangular_factor(st.s1.T, st.s2.T, tol.fact, tol.diag, tol.rank);
  const auto* fam = std::get_if<FactorParametric>(&fac);
  if (!fam) {
    v.note = "T^{h+1} admits no one-parameter triangular factor";
    return v;
  }
  double alpha = 0.0;
  if (std::abs(rho1) <= tol.lex && std::abs(rho2) <= tol.lex) {
    alpha = 1.0;
  } else if (std::abs(rho2) > tol.lex) {
    alpha = rho1 / rho2;
  } else {
    v.note = "rho2 vanishes while rho1 does not";
    return v;
  }
  v.certificate.alpha = alpha;
  if (!(alpha > tol.diag)) {
    v.note = "alpha = rho1 / rho2 is not positive";
    return v;
  }
  const MatrixXd M = fam->instantiate(alpha);
  const double scale = detail::data_scale(st.s1.evec, st.s2.evec);
  if (!detail::near_zero(st.s1.evec - M * st.s2.evec, tol.fact, scale * std::max(1.0, alpha))) {
    v.note = "instantiated factor does not match the offsets";
    return v;
  }
  v.holds = true;
  v.certificate.k = h + 1;
  v.certificate.M = M;
  return v;
}

inline StatementVerdict check_statement6(const BimodalSystem& sys, const Tolerances& tol = {}) {
  StatementVerdict v;
  v.id = StatementId::S6;
  const Index h = std::min(observability_index(sys, ModeId::Mode1, tol.rank),
                           observability_index(sys, ModeId::Mode2, tol.rank));
  const StackedData s = stacked(sys, ModeId::Mode1, h + 1);
  const auto sol = linalg::solve_affine(s.T, -s.evec, tol.rank, tol.fact);
  if (!sol) {
    v.holds = true;
    v.certificate.vacuous = true;
    v.note = "premise has no solution";
    return v;
  }
  v.certificate.vacuous = false;
  const MatrixXd dA = sys.A1() - sys.A2();
  const double scale = std::max({linalg::max_abs(sys.A1()), linalg::max_abs(sys.A2()),
                                 linalg::max_abs(sys.e1()), linalg::max_abs(sys.e2())});
  const VectorXd r0 = dA * sol->particular + sys.e1() - sys.e2();
  const bool ok0 = detail::near_zero(r0, tol.fact, scale * std::max(1.0, linalg::max_abs(sol->particular)));
  const bool okN = detail::near_zero(dA * sol->kernel, tol.fact, scale);
  v.holds = ok0 && okN;
  if (!ok0) {
    v.certificate.witness = sol->particular;
  } else if (!okN) {
    Index j = 0;
    (dA * sol->kernel).colwise().norm().maxCoeff(&j);
    v.certificate.witness = VectorXd(sol->particular + sol->kernel.col(j));
  }
  return v;
}

/// Linear case (e1 = e2 = 0, f = 0) only; otherwise not applicable.
inline StatementVerdict check_corollary1(const BimodalSystem& sys, const Tolerances& tol = {}) {
  StatementVerdict v;
  v.id = StatementId::Cor1;
  if (!sys.e1().isZero(0.0) || !sys.e2().isZero(0.0) || sys.f() != 0.0) {
    v.applicable = false;
    v.note = "system has affine terms";
    return v;
  }
  const Index h1 = observability_index(sys, ModeId::Mode1, tol.rank);
  const Index h2 = observability_index(sys, ModeId::Mode2, tol.rank);
  v.certificate.h1 = h1;
  v.certificate.h2 = h2;
  if (h1 != h2) {
    v.note = "observability indices differ";
    return v;
  }
  const detail::ModePair st = detail::stacks(sys, h1);
  const auto fac = solve_triangular_factor(st.s1.T, st.s2.T, tol.fact, tol.diag, tol.rank);
  const auto* u = std::get_if<FactorUnique>(&fac);
  if (!u) {
    v.note = "no triangular factor on T^h";
    return v;
  }
  v.certificate.M = u->M;
  const MatrixXd N = linalg::null_space(st.s1.T, tol.rank);
  const MatrixXd dA = sys.A1() - sys.A2();
  if (!detail::near_zero(dA * N, tol.fact, std::max(linalg::max_abs(sys.A1()), linalg::max_abs(sys.A2())))) {
    Index j = 0;
    (dA * N).colwise().norm().maxCoeff(&j);
    v.certificate.witness = VectorXd(N.col(j));
    v.note = "kernel of T1^h is not mapped to zero by A1 - A2";
    return v;
  }
  v.holds = true;
  return v;
}

inline StatementVerdict check_zeno_free(const BimodalSystem& sys, const Tolerances& tol = {}) {
  StatementVerdict v;
  v.id = StatementId::ZenoFree;
  const StatementVerdict s5 = check_statement5(sys, tol);
  const StatementVerdict s6 = check_statement6(sys, tol);
  v.holds = s5.holds && s6.holds;
  v.certificate = s5.certificate;
  if (s6.certificate.vacuous) v.certificate.vacuous = s6.certificate.vacuous;
  if (!v.holds) v.note = "sufficient condition not met; Zeno behavior not excluded";
  return v;
}

/// States where the k = 2 sufficiency result gives no guarantee.
inline bool omega_membership(const BimodalSystem& sys, const VectorXd& xi, const Tolerances& tol = {}) {
  if (xi.size() != sys.n()) throw Error(ErrorKind::DimensionMismatch, "state has wrong dimension");
  for (const ModeId j : {ModeId::Mode1, ModeId::Mode2}) {
    const ModeId k = other(j);
    const StackedData sj = stacked(sys, j, 2);
    const VectorXd vj = sj.T * xi + sj.evec;
    if (!detail::near_zero(vj, tol.fact, linalg::max_abs(sj.T) * std::max(1.0, linalg::max_abs(xi)))) continue;
    const StackedData sk = stacked(sys, k, 2);
    const double val = sk.T.row(2).dot(xi) + sk.evec(2);
    const double sign = index_of(k) % 2 == 0 ? 1.0 : -1.0;
    if (sign * val < -tol.lex) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Certificate re-verification

/// Re-checks a holding verdict's certificate from scratch with 10x the
/// decision tolerances. Verdicts that do not hold verify trivially.
inline bool verify_certificate(const BimodalSystem& sys, const StatementVerdict& v, const Tolerances& tol = {}) {
  if (!v.holds) return true;
  Tolerances loose = tol;
  loose.fact *= 10;
  loose.lex *= 10;
  const Certificate& c = v.certificate;

  auto triangular_positive = [&](const MatrixXd& M) {
    for (Index i = 0; i < M.rows(); ++i) {
      if (!(M(i, i) > tol.diag)) return false;
      for (Index j = i + 1; j < M.cols(); ++j)
        if (std::abs(M(i, j)) > loose.fact) return false;
    }
    return true;
  };
  auto factor_ok = [&](const MatrixXd& M, Index k) {
    const detail::ModePair st = detail::stacks(sys, k);
    return M.rows() == k + 1 && triangular_positive(M) &&
           detail::near_zero(st.s1.T - M * st.s2.T, loose.fact,
                             detail::data_scale(st.s1.T, st.s2.T) * std::max(1.0, linalg::max_abs(M)));
  };
  const double field_scale = std::max({linalg::max_abs(sys.A1()), linalg::max_abs(sys.A2()),
                                       linalg::max_abs(sys.e1()), linalg::max_abs(sys.e2())});

  switch (v.id) {
    case StatementId::S3:
    case StatementId::Thm2:
    case StatementId::Thm3: {
      if (!c.k || !c.M || !factor_ok(*c.M, *c.k)) return false;
      const detail::ModePair st = detail::stacks(sys, *c.k);
      return lex_sign(st.s1.evec - (*c.M) * st.s2.evec, tol.lex) == LexSign::Positive;
    }
    case StatementId::S4: {
      if (!c.M || !c.h1 || !c.h2) return false;
      const Index h = std::min(*c.h1, *c.h2);
      if (!factor_ok(*c.M, h)) return false;
      const detail::ModePair st = detail::stacks(sys, h);
      if (!detail::near_zero(st.s1.evec - (*c.M) * st.s2.evec, loose.fact, detail::data_scale(st.s1.evec, st.s2.evec)))
        return false;
      if (*c.h1 < *c.h2) return companion_offset(sys, companion(sys, ModeId::Mode1, tol)) > tol.lex;
      return companion_offset(sys, companion(sys, ModeId::Mode2, tol)) < -tol.lex;
    }
    case StatementId::S5:
    case StatementId::ZenoFree: {
      if (!c.M || !c.k || !factor_ok(*c.M, *c.k)) return false;
      const detail::ModePair st = detail::stacks(sys, *c.k);
      if (!detail::near_zero(st.s1.evec - (*c.M) * st.s2.evec, loose.fact,
                             detail::data_scale(st.s1.evec, st.s2.evec) * std::max(1.0, linalg::max_abs(*c.M))))
        return false;
      if (v.id == StatementId::ZenoFree) {
        StatementVerdict s6 = check_statement6(sys, loose);
        return s6.holds;
      }
      return true;
    }
    case StatementId::S6: {
      const Index h = std::min(observability_index(sys, ModeId::Mode1, tol.rank),
                               observability_index(sys, ModeId::Mode2, tol.rank));
      const StackedData s = stacked(sys, ModeId::Mode1, h + 1);
      const auto sol = linalg::solve_affine(s.T, -s.evec, tol.rank, tol.fact);
      if (c.vacuous.value_or(false)) return !sol.has_value();
      if (!sol) return false;
      const MatrixXd dA = sys.A1() - sys.A2();
      return detail::near_zero(dA * sol->particular + sys.e1() - sys.e2(), loose.fact,
                               field_scale * std::max(1.0, linalg::max_abs(sol->particular))) &&
             detail::near_zero(dA * sol->kernel, loose.fact, field_scale);
    }
    case StatementId::Thm0: {
      if (!c.g || !c.mu) return false;
      const MatrixXd dA = sys.A1() - sys.A2();
      return detail::near_zero(dA - (*c.g) * sys.c().transpose(), loose.fact,
                               field_scale * linalg::max_abs(sys.c())) &&
             detail::near_zero(sys.e1() - sys.e2() - sys.f() * (*c.g) - (*c.mu) * sys.c(), loose.fact,
                               field_scale * std::max(1.0, std::abs(sys.f()))) &&
             *c.mu >= -loose.fact;
    }
    case StatementId::Cor1:
    case StatementId::Continuity: {
      const StatementVerdict again = v.id == StatementId::Cor1 ? check_corollary1(sys, loose) : check_continuity(sys, loose);
      if (v.id == StatementId::Cor1 && (!c.M || !c.h1 || !factor_ok(*c.M, *c.h1))) return false;
      return again.holds;
    }
  }
  return false;
}

// ---------------------------------------------------------------------------
// Verdict lattice

enum class OverallVerdict { RightUniqueEverywhere, RightUniqueOutsideOmega, NotRightUnique, Inconclusive };

constexpr std::string_view to_string(OverallVerdict v) {
  switch (v) {
    case OverallVerdict::RightUniqueEverywhere: return "RightUniqueEverywhere";
    case OverallVerdict::RightUniqueOutsideOmega: return "RightUniqueOutsideOmega";
    case OverallVerdict::NotRightUnique: return "NotRightUnique";
    case OverallVerdict::Inconclusive: return "Inconclusive";
  }
  return "?";
}

enum class ZenoStatus { Certified, Unknown };

constexpr std::string_view to_string(ZenoStatus z) { return z == ZenoStatus::Certified ? "Certified" : "Unknown"; }

/// A state at which two distinct forward continuations exist.
struct UniquenessWitness {
  VectorXd state;
  std::string kind;  // "Branching" or "W0Divergence"
  StateClassification classification;
};

struct LatticeResult {
  OverallVerdict verdict = OverallVerdict::Inconclusive;
  std::string reason;
  std::optional<UniquenessWitness> witness;

  bool operator==(const LatticeResult& o) const { return verdict == o.verdict && reason == o.reason; }
};

namespace detail {

inline std::optional<UniquenessWitness> accept_witness(const BimodalSystem& sys, const VectorXd& x,
                                                       const Tolerances& tol) {
  if (!x.allFinite()) return std::nullopt;
  const StateClassification cls = classify_initial_state(sys, x, tol);
  if (cls.continuation == ContinuationKind::Branching) return UniquenessWitness{x, "Branching", cls};
  if (cls.continuation == ContinuationKind::OnW0) {
    const VectorXd d = sys.field(ModeId::Mode1, x) - sys.field(ModeId::Mode2, x);
    const double scale = std::max({linalg::max_abs(sys.A1()), linalg::max_abs(sys.A2()), linalg::max_abs(sys.e1()),
                                   linalg::max_abs(sys.e2())});
    if (!near_zero(d, tol.fact, scale * std::max(1.0, linalg::max_abs(x))))
      return UniquenessWitness{x, "W0Divergence", cls};
  }
  return std::nullopt;
}

}  // namespace detail

/// Deterministic search for a state with two forward continuations. Each
/// candidate comes from a closed-form construction and is accepted only after
/// pointwise classification confirms it.
inline std::optional<UniquenessWitness> find_uniqueness_witness(const BimodalSystem& sys, const Tolerances& tol = {}) {
  const Index h1 = observability_index(sys, ModeId::Mode1, tol.rank);
  const Index h2 = observability_index(sys, ModeId::Mode2, tol.rank);
  const Index h = std::min(h1, h2);
  const detail::ModePair st = detail::stacks(sys, h);
  std::vector<VectorXd> cands;

  // Mode 1 leaves downwards while mode 2 leaves upwards at order <= h.
  const auto fwd = decide_lex_implication(st.s1.T, -st.s1.evec, st.s2.T, -st.s2.evec, tol);
  if (const auto* f = std::get_if<LexImplicationFails>(&fwd)) {
    if (auto x = construct_lex_counterexample(st.s1.T, -st.s1.evec, st.s2.T, -st.s2.evec, f->failure_row, tol))
      cands.push_back(*x);
  }
  const auto bwd = decide_lex_implication(-st.s2.T, st.s2.evec, -st.s1.T, st.s1.evec, tol);
  if (const auto* f = std::get_if<LexImplicationFails>(&bwd)) {
    if (auto x = construct_lex_counterexample(-st.s2.T, st.s2.evec, -st.s1.T, st.s1.evec, f->failure_row, tol))
      cands.push_back(*x);
  }

  // Both outputs vanish to order h; the next derivatives decide.
  if (auto sol = linalg::solve_affine(st.s1.T, -st.s1.evec, tol.rank, tol.fact)) {
    cands.push_back(sol->particular);
    if (h1 != h2) {
      // The mode with the larger index has one more free output derivative:
      // push it into its own region.
      const ModeId big = h1 < h2 ? ModeId::Mode2 : ModeId::Mode1;
      const StackedData sb = stacked(sys, big, h + 1);
      VectorXd rhs = -sb.evec;
      rhs(h + 1) += big == ModeId::Mode2 ? 1.0 : -1.0;
      if (auto s2 = linalg::solve_affine(sb.T, rhs, tol.rank, tol.fact)) cands.push_back(s2->particular);
    }
  }

  // Both outputs identically zero but the fields differ.
  const StackedData w0 = stacked(sys, ModeId::Mode1, h + 1);
  if (auto sol = linalg::solve_affine(w0.T, -w0.evec, tol.rank, tol.fact)) {
    cands.push_back(sol->particular);
    for (Index j = 0; j < sol->kernel.cols(); ++j) cands.push_back(sol->particular + sol->kernel.col(j));
  }

  for (const auto& x : cands) {
    if (auto w = detail::accept_witness(sys, x, tol)) return w;
  }
  return std::nullopt;
}

struct StatementSet {
  StatementVerdict continuity, thm0, s3, s4, s5, s6, thm2, thm3, cor1, zeno;

  std::vector<const StatementVerdict*> all() const {
    return {&continuity, &thm0, &s3, &s4, &s5, &s6, &thm2, &thm3, &cor1, &zeno};
  }
};

inline StatementSet run_checkers(const BimodalSystem& sys, const Tolerances& tol) {
  StatementSet s;
  s.continuity = check_continuity(sys, tol);
  s.thm0 = check_one_sided_lipschitz(sys, tol);
  s.s3 = check_statement3(sys, tol);
  s.s4 = check_statement4(sys, tol);
  s.s5 = check_statement5(sys, tol);
  s.s6 = check_statement6(sys, tol);
  s.thm2 = check_thm2(sys, tol);
  s.thm3 = check_thm3(sys, tol);
  s.cor1 = check_corollary1(sys, tol);
  s.zeno = check_zeno_free(sys, tol);
  return s;
}

/// Fixed-order resolution of the checker results into one verdict.
inline LatticeResult resolve_lattice(const BimodalSystem& sys, const StatementSet& s, const Tolerances& tol) {
  LatticeResult r;
  if (s.continuity.holds) {
    r.verdict = OverallVerdict::RightUniqueEverywhere;
    r.reason = "Continuity";
  } else if (s.thm2.holds) {
    r.verdict = OverallVerdict::RightUniqueEverywhere;
    r.reason = "Thm2";
  } else if (s.s5.holds && s.s6.holds) {
    r.verdict = OverallVerdict::RightUniqueEverywhere;
    r.reason = "S5+S6";
  } else if (s.cor1.applicable) {
    r.verdict = s.cor1.holds ? OverallVerdict::RightUniqueEverywhere : OverallVerdict::NotRightUnique;
    r.reason = "Cor1";
  } else if (s.thm3.holds) {
    r.verdict = OverallVerdict::RightUniqueOutsideOmega;
    r.reason = "Thm3";
  } else if (!s.s3.holds && !s.s4.holds && !s.s5.holds) {
    r.verdict = OverallVerdict::NotRightUnique;
    r.reason = "Necessity";
  } else {
    r.verdict = OverallVerdict::Inconclusive;
    r.reason = "NoApplicableSufficientCondition";
  }
  if (r.verdict == OverallVerdict::NotRightUnique) r.witness = find_uniqueness_witness(sys, tol);
  return r;
}

struct ProbeAnnotation {
  VectorXd state;
  StateClassification classification;
  std::string message;
};

struct WellPosednessReport {
  StatementSet statements;
  LatticeResult overall;
  LatticeResult left_uniqueness;
  ZenoStatus zeno_free = ZenoStatus::Unknown;
  bool forward_backward_caratheodory = false;
  Index h1 = 0;
  Index h2 = 0;
  VectorXd p1;
  VectorXd p2;
  std::optional<ProbeAnnotation> probe;
  std::vector<std::string> notes;
  Tolerances tolerances;
};

namespace detail {

/// Classifies the state where both outputs vanish to order h, the natural
/// place for higher-order trapping.
inline std::optional<ProbeAnnotation> probe_state(const BimodalSystem& sys, const Tolerances& tol, Index h) {
  const StackedData s = stacked(sys, ModeId::Mode1, h);
  const auto sol = linalg::solve_affine(s.T, -s.evec, tol.rank, tol.fact);
  if (!sol) return std::nullopt;
  ProbeAnnotation p;
  p.state = sol->particular;
  p.classification = classify_initial_state(sys, p.state, tol);
  switch (p.classification.continuation) {
    case ContinuationKind::NoCaratheodory:
      p.message = "no forward Caratheodory continuation: higher-order contact of both fields with the surface";
      break;
    case ContinuationKind::Branching:
      p.message = "two forward Caratheodory continuations";
      break;
    default:
      p.message = "continuation is " + std::string(to_string(p.classification.continuation));
      break;
  }
  return p;
}

}  // namespace detail

inline WellPosednessReport analyze(const BimodalSystem& sys, const Tolerances& tol = {}) {
  WellPosednessReport rep;
  rep.tolerances = tol;
  rep.statements = run_checkers(sys, tol);
  rep.overall = resolve_lattice(sys, rep.statements, tol);
  const BimodalSystem rev = reverse_time(sys);
  rep.left_uniqueness = resolve_lattice(rev, run_checkers(rev, tol), tol);
  rep.zeno_free = rep.statements.zeno.holds ? ZenoStatus::Certified : ZenoStatus::Unknown;
  rep.forward_backward_caratheodory = rep.statements.s5.holds && rep.statements.s6.holds;

  const ObservabilityInfo o1 = companion(sys, ModeId::Mode1, tol);
  const ObservabilityInfo o2 = companion(sys, ModeId::Mode2, tol);
  rep.h1 = o1.h;
  rep.h2 = o2.h;
  rep.p1 = o1.p;
  rep.p2 = o2.p;
  rep.probe = detail::probe_state(sys, tol, std::min(o1.h, o2.h));
  rep.notes.push_back("right-uniqueness together with S5 implies S6; informational, not checked at runtime");
  if (rep.overall.verdict == OverallVerdict::RightUniqueOutsideOmega)
    rep.notes.push_back("uniqueness is not guaranteed on the exception set; see omega_membership");
  if (rep.overall.verdict == OverallVerdict::NotRightUnique && !rep.overall.witness)
    rep.notes.push_back("verdict follows from the necessary conditions; no explicit witness state was constructed");
  return rep;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const Certificate& c) {
  nlohmann::json j = nlohmann::json::object();
  if (c.k) j["k"] = *c.k;
  if (c.M) j["M"] = matrix_json(*c.M);
  if (c.alpha) j["alpha"] = *c.alpha;
  if (c.g) j["g"] = vector_json(*c.g);
  if (c.mu) j["mu"] = *c.mu;
  if (c.lipschitz_bound) j["lipschitz_bound"] = *c.lipschitz_bound;
  if (c.rho1) j["rho1"] = *c.rho1;
  if (c.rho2) j["rho2"] = *c.rho2;
  if (c.witness) j["witness"] = vector_json(*c.witness);
  if (c.vacuous) j["vacuous"] = *c.vacuous;
  if (c.h1) j["h1"] = *c.h1;
  if (c.h2) j["h2"] = *c.h2;
  return j;
}

inline nlohmann::json to_json(const StatementVerdict& v) {
  nlohmann::json j{{"id", std::string(to_string(v.id))},
                   {"holds", v.holds},
                   {"applicable", v.applicable},
                   {"certificate", to_json(v.certificate)}};
  if (!v.note.empty()) j["note"] = v.note;
  return j;
}

inline nlohmann::json to_json(const LatticeResult& r) {
  nlohmann::json j{{"verdict", std::string(to_string(r.verdict))}, {"reason", r.reason}};
  if (r.witness) {
    j["witness"] = {{"state", vector_json(r.witness->state)},
                    {"kind", r.witness->kind},
                    {"classification", to_json(r.witness->classification)}};
  }
  return j;
}

inline nlohmann::json to_json(const Tolerances& t) {
  return {{"rank", t.rank}, {"fact", t.fact}, {"diag", t.diag}, {"lex", t.lex}};
}

inline nlohmann::json to_json(const WellPosednessReport& r) {
  nlohmann::json stmts = nlohmann::json::array();
  for (const StatementVerdict* v : r.statements.all()) stmts.push_back(to_json(*v));
  nlohmann::json j{{"statements", stmts},
                   {"overall", to_json(r.overall)},
                   {"left_uniqueness", to_json(r.left_uniqueness)},
                   {"zeno_free", std::string(to_string(r.zeno_free))},
                   {"forward_backward_caratheodory", r.forward_backward_caratheodory},
                   {"observability", {{"h1", r.h1}, {"h2", r.h2}, {"p1", vector_json(r.p1)}, {"p2", vector_json(r.p2)}}},
                   {"notes", r.notes},
                   {"tolerances", to_json(r.tolerances)}};
  if (r.probe) {
    j["probe"] = {{"state", vector_json(r.probe->state)},
                  {"classification", to_json(r.probe->classification)},
                  {"message", r.probe->message}};
  }
  return j;
}

}  // namespace filippov
