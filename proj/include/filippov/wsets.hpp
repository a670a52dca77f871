#pragma once

#include <cmath>
#include <string_view>

#include "json.hpp"

#include "filippov/lexalg.hpp"
#include "filippov/model.hpp"
#include "filippov/observability.hpp"

namespace filippov {

enum class ContinuationKind { Mode1Flow, Mode2Flow, FirstOrderSliding, OnW0, Branching, NoCaratheodory };

constexpr std::string_view to_string(ContinuationKind k) {
  switch (k) {
    case ContinuationKind::Mode1Flow: return "Mode1Flow";
    case ContinuationKind::Mode2Flow: return "Mode2Flow";
    case ContinuationKind::FirstOrderSliding: return "FirstOrderSliding";
    case ContinuationKind::OnW0: return "OnW0";
    case ContinuationKind::Branching: return "Branching";
    case ContinuationKind::NoCaratheodory: return "NoCaratheodory";
  }
  return "?";
}

/// T^{h+1} xi + e^{h+1} for one mode, h being that mode's observability index.
/// Its entries are the output y = c^T x + f and its first h+1 derivatives at
/// t = 0 along the mode's flow.
inline VectorXd output_derivatives(const BimodalSystem& sys, ModeId mode, const VectorXd& xi, double tol_rank) {
  const Index h = observability_index(sys, mode, tol_rank);
  const StackedData s = stacked(sys, mode, h + 1);
  return s.T * xi + s.evec;
}

/// Lex sign of the mode's output derivative vector at xi.
inline LexSign classify_wset(const BimodalSystem& sys, ModeId mode, const VectorXd& xi, const Tolerances& tol = {}) {
  if (xi.size() != sys.n()) throw Error(ErrorKind::DimensionMismatch, "state has wrong dimension");
  return lex_sign(output_derivatives(sys, mode, xi, tol.rank), tol.lex);
}

struct StateClassification {
  LexSign w1 = LexSign::Zero;
  LexSign w2 = LexSign::Zero;
  VectorXd w1vec;
  VectorXd w2vec;
  double beta1 = 0.0;  // c^T (A1 xi + e1)
  double beta2 = 0.0;  // c^T (A2 xi + e2)
  bool on_surface = false;
  ContinuationKind continuation = ContinuationKind::Mode1Flow;
};

/// Pointwise continuation type of xi. Off the surface the active mode flows.
/// On it, the signs of both output derivative vectors decide: a mode whose
/// output leaves its own region cannot be followed, and two followable modes
/// mean two forward continuations.
inline StateClassification classify_initial_state(const BimodalSystem& sys, const VectorXd& xi,
                                                   const Tolerances& tol = {}, double surface_tol = 1e-9) {
  if (xi.size() != sys.n()) throw Error(ErrorKind::DimensionMismatch, "state has wrong dimension");
  StateClassification out;
  out.w1vec = output_derivatives(sys, ModeId::Mode1, xi, tol.rank);
  out.w2vec = output_derivatives(sys, ModeId::Mode2, xi, tol.rank);
  out.beta1 = sys.c().dot(sys.field(ModeId::Mode1, xi));
  out.beta2 = sys.c().dot(sys.field(ModeId::Mode2, xi));

  const double s = sys.surface(xi);
  if (std::abs(s) > surface_tol) {
    out.w1 = lex_sign(out.w1vec, tol.lex);
    out.w2 = lex_sign(out.w2vec, tol.lex);
    out.continuation = s < 0 ? ContinuationKind::Mode1Flow : ContinuationKind::Mode2Flow;
    return out;
  }
  out.on_surface = true;
  // The surface value is zero at this resolution; decide on the derivatives.
  VectorXd v1 = out.w1vec;
  VectorXd v2 = out.w2vec;
  v1(0) = 0.0;
  v2(0) = 0.0;
  out.w1 = lex_sign(v1, tol.lex);
  out.w2 = lex_sign(v2, tol.lex);

  using L = LexSign;
  const L w1 = out.w1;
  const L w2 = out.w2;
  if ((w1 == L::Negative && w2 != L::Negative) || (w1 == L::Zero && w2 == L::Positive)) {
    out.continuation = ContinuationKind::Branching;
  } else if (w1 == L::Negative || (w1 == L::Zero && w2 == L::Negative)) {
    out.continuation = ContinuationKind::Mode1Flow;
  } else if (w2 == L::Positive || (w1 == L::Positive && w2 == L::Zero)) {
    out.continuation = ContinuationKind::Mode2Flow;
  } else if (w1 == L::Zero && w2 == L::Zero) {
    out.continuation = ContinuationKind::OnW0;
  } else {
    // w1 Positive, w2 Negative: both fields push towards the surface.
    out.continuation = (out.beta1 > tol.lex && out.beta2 < -tol.lex) ? ContinuationKind::FirstOrderSliding
                                                                      : ContinuationKind::NoCaratheodory;
  }
  return out;
}

inline nlohmann::json vector_json(const VectorXd& v) {
  nlohmann::json j = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) j.push_back(v(i) + 0.0);  // drops negative zeros
  return j;
}

inline nlohmann::json matrix_json(const MatrixXd& m) {
  nlohmann::json j = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k) + 0.0);
    j.push_back(row);
  }
  return j;
}

inline nlohmann::json to_json(const StateClassification& c) {
  return {{"continuation", std::string(to_string(c.continuation))},
          {"on_surface", c.on_surface},
          {"w1", std::string(to_string(c.w1))},
          {"w2", std::string(to_string(c.w2))},
          {"w1vec", vector_json(c.w1vec)},
          {"w2vec", vector_json(c.w2vec)},
          {"beta1", c.beta1},
          {"beta2", c.beta2}};
}

}  // namespace filippov
