#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "filippov/lexalg.hpp"
#include "filippov/linalg.hpp"
#include "filippov/model.hpp"

// Sampling oracles. They never call the algebraic deciders; they only draw
// states and test the defining inequalities directly.

namespace filippov::oracle {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline VectorXd uniform_vector(Rng& rng, Index n, double lo, double hi) {
  VectorXd v(n);
  for (Index i = 0; i < n; ++i) v(i) = uniform(rng, lo, hi);
  return v;
}

inline MatrixXd uniform_matrix(Rng& rng, Index r, Index c, double lo, double hi) {
  MatrixXd m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = uniform(rng, lo, hi);
  return m;
}

// ---------------------------------------------------------------------------
// Lexicographic implication P1 x < q1 => P2 x <= q2

struct LexSampleResult {
  std::size_t samples = 0;
  std::size_t violations = 0;
  std::optional<VectorXd> violating;
};

/// Draws x with P1 x - q1 lex-negative by prescribing y = P1 x - q1 stratum
/// by stratum: zeros before a random row j, a negative entry of random
/// magnitude at j, anything after. A random kernel component of P1 is added.
/// Half of the draws use focus_row as the stratum when it is given.
inline LexSampleResult sample_lex_implication(const MatrixXd& P1, const VectorXd& q1, const MatrixXd& P2,
                                              const VectorXd& q2, std::size_t draws, Rng& rng,
                                              std::optional<Index> focus_row = std::nullopt,
                                              const Tolerances& tol = {}) {
  const Index m = P1.rows();
  const MatrixXd pinv = P1.completeOrthogonalDecomposition().pseudoInverse();
  const MatrixXd N = linalg::null_space(P1, tol.rank);
  std::uniform_int_distribution<Index> pick(0, m - 1);
  LexSampleResult out;
  for (std::size_t s = 0; s < draws; ++s) {
    const Index j = (focus_row && s % 2 == 0) ? *focus_row : pick(rng);
    VectorXd y = VectorXd::Zero(m);
    y(j) = -std::pow(10.0, uniform(rng, -6.0, 3.0));
    for (Index i = j + 1; i < m; ++i) y(i) = uniform(rng, -10.0, 10.0);
    VectorXd x = pinv * (q1 + y);
    if (N.cols() > 0) x += N * uniform_vector(rng, N.cols(), -10.0, 10.0);
    ++out.samples;
    if (lex_sign(P1 * x - q1, tol.lex) != LexSign::Negative) continue;  // premise lost to rounding
    if (lex_sign(P2 * x - q2, tol.lex) == LexSign::Positive) {
      ++out.violations;
      if (!out.violating) out.violating = x;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// One-sided Lipschitz inequality (x1 - x2)^T (y1 - y2) <= L |x1 - x2|^2

struct PairDraw {
  VectorXd x1, x2, y1, y2;
  // Nominal x1 - x2. Recomputing it from the rounded points leaves a normal
  // component of order 1e-16 that the field jump amplifies by 1 / |d|^2.
  VectorXd d;

  double lhs() const { return d.dot(y1 - y2); }
  double dist2() const { return d.squaredNorm(); }
};

/// A random element of the convexified field at x: the active vertex off the
/// surface, a random convex combination on it.
inline VectorXd selection(const BimodalSystem& sys, const VectorXd& x, Rng& rng, double band = 1e-12) {
  const double s = sys.surface(x);
  if (s < -band) return sys.field(ModeId::Mode1, x);
  if (s > band) return sys.field(ModeId::Mode2, x);
  const double l = uniform(rng, 0.0, 1.0);
  return l * sys.field(ModeId::Mode1, x) + (1.0 - l) * sys.field(ModeId::Mode2, x);
}

inline VectorXd surface_point(const BimodalSystem& sys, Rng& rng, double radius) {
  const VectorXd& c = sys.c();
  const VectorXd x = uniform_vector(rng, sys.n(), -radius, radius);
  return x - c * (sys.surface(x) / c.squaredNorm());
}

/// Random pairs of three kinds: unconstrained, straddling the surface at
/// distance eps, and both on the surface with independent selections.
inline PairDraw draw_pair(const BimodalSystem& sys, Rng& rng, int kind, double eps) {
  PairDraw d;
  const Index n = sys.n();
  const VectorXd& c = sys.c();
  if (kind == 0) {
    d.x1 = uniform_vector(rng, n, -2.0, 2.0);
    d.x2 = uniform_vector(rng, n, -2.0, 2.0);
    d.y1 = selection(sys, d.x1, rng);
    d.y2 = selection(sys, d.x2, rng);
    d.d = d.x1 - d.x2;
    return d;
  }
  const VectorXd p = surface_point(sys, rng, 1.0);
  VectorXd dir = uniform_vector(rng, n, -1.0, 1.0);
  if (kind == 1) {
    // x1 strictly on the mode-1 side, x2 on the mode-2 side.
    if (c.dot(dir) < 0) dir = -dir;
    if (c.dot(dir) < 1e-3 * c.norm() * dir.norm()) dir += c / c.norm();
    d.x1 = p - eps * dir;
    d.x2 = p + eps * dir;
    d.y1 = sys.field(ModeId::Mode1, d.x1);
    d.y2 = sys.field(ModeId::Mode2, d.x2);
    d.d = -2.0 * eps * dir;
    return d;
  }
  dir -= c * (c.dot(dir) / c.squaredNorm());
  // No tangent directions for n = 1; the zero difference is skipped.
  if (dir.norm() <= 1e-6) dir.setZero();
  else dir.normalize();
  d.x1 = p + eps * dir;
  d.x2 = p - eps * dir;
  d.x1 -= c * (sys.surface(d.x1) / c.squaredNorm());
  d.x2 -= c * (sys.surface(d.x2) / c.squaredNorm());
  const bool flip = uniform(rng, 0.0, 1.0) < 0.5;
  d.y1 = sys.field(flip ? ModeId::Mode2 : ModeId::Mode1, d.x1);
  d.y2 = sys.field(flip ? ModeId::Mode1 : ModeId::Mode2, d.x2);
  d.d = 2.0 * eps * dir;
  return d;
}

struct LipschitzSampleResult {
  std::size_t draws = 0;
  std::size_t violations = 0;
  double worst_excess = -std::numeric_limits<double>::infinity();  // max of lhs / dist2 - L
};

/// Checks the inequality with constant L on random draws of all three kinds.
inline LipschitzSampleResult sample_one_sided_lipschitz(const BimodalSystem& sys, double L, std::size_t draws,
                                                        Rng& rng, double margin = 1e-7) {
  LipschitzSampleResult out;
  for (std::size_t s = 0; s < draws; ++s) {
    const int kind = static_cast<int>(s % 3);
    const double eps = std::pow(10.0, uniform(rng, -8.0, 0.0));
    const PairDraw d = draw_pair(sys, rng, kind, eps);
    const double dist2 = d.dist2();
    if (!(dist2 > 0)) continue;
    ++out.draws;
    const double excess = d.lhs() / dist2 - L;
    out.worst_excess = std::max(out.worst_excess, excess);
    if (excess > margin * std::max(1.0, std::abs(L))) ++out.violations;
  }
  return out;
}

struct LipschitzRefutation {
  double largest_refuted = 0.0;  // every tested L up to this value was violated
  bool refuted_all = false;
  std::vector<std::pair<double, PairDraw>> witnesses;
};

/// Escalating refutation: for L = 1, 10, ..., l_max, search straddling and
/// on-surface pairs with shrinking eps for one violating the inequality.
inline LipschitzRefutation refute_one_sided_lipschitz(const BimodalSystem& sys, double l_max, Rng& rng,
                                                      std::size_t attempts_per_level = 4000) {
  LipschitzRefutation out;
  for (double L = 1.0; L <= l_max * (1.0 + 1e-12); L *= 10.0) {
    bool found = false;
    for (std::size_t a = 0; a < attempts_per_level && !found; ++a) {
      const int kind = 1 + static_cast<int>(a % 2);
      const double eps = std::pow(10.0, -1.0 - 10.0 * static_cast<double>(a) / attempts_per_level);
      const PairDraw d = draw_pair(sys, rng, kind, eps);
      const double dist2 = d.dist2();
      if (dist2 > 0 && d.lhs() > L * dist2) {
        out.witnesses.emplace_back(L, d);
        found = true;
      }
    }
    if (!found) return out;
    out.largest_refuted = L;
  }
  out.refuted_all = true;
  return out;
}

}  // namespace filippov::oracle
