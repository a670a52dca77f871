#include <gtest/gtest.h>

#include "generators.hpp"

using namespace filippov;

TEST(WSets, PogromskyOrigin) {
  const BimodalSystem p = fixture("pogromsky");
  const VectorXd zero = VectorXd::Zero(3);
  EXPECT_EQ(classify_wset(p, ModeId::Mode1, zero), LexSign::Positive);
  EXPECT_EQ(classify_wset(p, ModeId::Mode2, zero), LexSign::Negative);
  EXPECT_EQ(output_derivatives(p, ModeId::Mode1, zero, 1e-9), (VectorXd(4) << 0, 0, 0, 1).finished());
  EXPECT_EQ(output_derivatives(p, ModeId::Mode2, zero, 1e-9), (VectorXd(4) << 0, 0, 0, -1).finished());

  const StateClassification c = classify_initial_state(p, zero);
  EXPECT_EQ(c.continuation, ContinuationKind::NoCaratheodory);
  EXPECT_EQ(c.beta1, 0.0);
  EXPECT_EQ(c.beta2, 0.0);
  EXPECT_TRUE(c.on_surface);
}

TEST(WSets, OffSurfaceFirstEntryDominates) {
  const BimodalSystem t = fixture("two_tank");
  const VectorXd below = (VectorXd(2) << 3.0, 0.0).finished();  // c^T x + f = -1
  EXPECT_EQ(classify_wset(t, ModeId::Mode1, below), LexSign::Negative);
  EXPECT_EQ(classify_wset(t, ModeId::Mode2, below), LexSign::Negative);
  EXPECT_EQ(classify_initial_state(t, below).continuation, ContinuationKind::Mode1Flow);
  const VectorXd above = (VectorXd(2) << 0.0, 2.0).finished();
  EXPECT_EQ(classify_initial_state(t, above).continuation, ContinuationKind::Mode2Flow);
}

TEST(WSets, ScalarRelaySlides) {
  const StateClassification c = classify_initial_state(fixture("scalar_relay"), VectorXd::Zero(1));
  EXPECT_EQ(c.continuation, ContinuationKind::FirstOrderSliding);
  EXPECT_EQ(c.beta1, 1.0);
  EXPECT_EQ(c.beta2, -1.0);
}

TEST(WSets, SurfaceCases) {
  // Reversed scalar relay: the surface repels, both modes can be followed.
  const BimodalSystem r = reverse_time(fixture("scalar_relay"));
  EXPECT_EQ(classify_initial_state(r, VectorXd::Zero(1)).continuation, ContinuationKind::Branching);

  // Both fields point into mode 2 across the surface: transversal crossing.
  const BimodalSystem up = make_system(MatrixXd::Zero(1, 1), MatrixXd::Zero(1, 1), VectorXd::Ones(1),
                                       VectorXd::Ones(1), VectorXd::Ones(1), 0.0);
  EXPECT_EQ(classify_initial_state(up, VectorXd::Zero(1)).continuation, ContinuationKind::Mode2Flow);
  const BimodalSystem down = reverse_time(up);
  EXPECT_EQ(classify_initial_state(down, VectorXd::Zero(1)).continuation, ContinuationKind::Mode1Flow);

  // Identical zero dynamics: the state never leaves the surface.
  const BimodalSystem still = make_system(MatrixXd::Zero(1, 1), MatrixXd::Zero(1, 1), VectorXd::Zero(1),
                                          VectorXd::Zero(1), VectorXd::Ones(1), 0.0);
  EXPECT_EQ(classify_initial_state(still, VectorXd::Zero(1)).continuation, ContinuationKind::OnW0);
}

TEST(WSets, DimensionChecked) {
  EXPECT_THROW(classify_initial_state(fixture("pogromsky"), VectorXd::Zero(2)), Error);
  EXPECT_THROW(classify_wset(fixture("pogromsky"), ModeId::Mode1, VectorXd::Zero(4)), Error);
}

namespace {

/// Output of one mode after time t, by fine RK4 of that mode's field.
double output_after(const BimodalSystem& s, ModeId m, const VectorXd& xi, double t) {
  const detail::Field f = [&](const VectorXd& x) { return s.field(m, x); };
  return s.surface(detail::integrate(f, xi, t, t / 20.0));
}

}  // namespace

TEST(WSetsProperty, SignMatchesIntegration) {
  // xi is placed on the surface and, for half of the draws, also on the zero
  // set of the first output derivative, so the sign is decided at depth 1 or 2.
  gen::Rng rng(41);
  int checked = 0;
  for (int i = 0; i < 100; ++i) {
    const Index n = gen::integer(rng, 1, 4);
    const BimodalSystem s = gen::generic(rng, n);
    for (const ModeId m : {ModeId::Mode1, ModeId::Mode2}) {
      const Index h = observability_index(s, m, 1e-9);
      const Index depth = std::min<Index>(h, gen::coin(rng) ? 1 : 0);
      const StackedData d = stacked(s, m, depth);
      const auto sol = linalg::solve_affine(d.T, -d.evec, 1e-9, 1e-8);
      ASSERT_TRUE(sol.has_value());
      VectorXd xi = sol->particular;
      if (sol->kernel.cols() > 0) xi += sol->kernel * gen::vector(rng, sol->kernel.cols());
      const VectorXd w = output_derivatives(s, m, xi, 1e-9);
      // Skip draws whose leading nonzero derivative is too small to resolve.
      Index lead = 0;
      while (lead < w.size() && std::abs(w(lead)) <= 1e-9) ++lead;
      if (lead == w.size() || std::abs(w(lead)) < 1e-2) continue;
      const LexSign sign = classify_wset(s, m, xi);
      // Find a horizon where the output is resolved, then check it and two
      // shorter ones.
      bool ok = false;
      for (double eps = 1e-1; eps > 1e-5 && !ok; eps *= 0.1) {
        bool all = true;
        for (double t : {eps, eps / 2, eps / 4}) {
          const double y = output_after(s, m, xi, t);
          all = all && ((sign == LexSign::Negative && y < 0) || (sign == LexSign::Positive && y > 0));
        }
        ok = all;
      }
      EXPECT_TRUE(ok) << "system " << i << " mode " << index_of(m);
      ++checked;
    }
  }
  EXPECT_GT(checked, 100);
}

TEST(WSetsProperty, W0StatesCarryEqualFieldsUnderStatement6) {
  gen::Rng rng(42);
  int hits = 0;
  for (int i = 0; i < 300; ++i) {
    const Index n = gen::integer(rng, 1, 4);
    const BimodalSystem s = gen::coin(rng) ? gen::continuous(rng, n) : gen::mixed(rng, n);
    if (!check_statement6(s).holds) continue;
    const Index h = std::min(observability_index(s, ModeId::Mode1, 1e-9), observability_index(s, ModeId::Mode2, 1e-9));
    const StackedData d = stacked(s, ModeId::Mode1, h + 1);
    const auto sol = linalg::solve_affine(d.T, -d.evec, 1e-9, 1e-8);
    if (!sol) continue;
    for (int j = 0; j < 5; ++j) {
      VectorXd xi = sol->particular;
      if (sol->kernel.cols() > 0) xi += sol->kernel * gen::vector(rng, sol->kernel.cols());
      const StateClassification c = classify_initial_state(s, xi);
      if (c.continuation != ContinuationKind::OnW0) continue;
      ++hits;
      const double scale = std::max(1.0, std::max(linalg::max_abs(s.A1()), linalg::max_abs(s.A2())) * xi.norm());
      EXPECT_LE((s.field(ModeId::Mode1, xi) - s.field(ModeId::Mode2, xi)).norm(), 1e-7 * scale);
    }
  }
  EXPECT_GT(hits, 20);
}

TEST(WSetsProperty, NoBranchingWhenRightUniqueEverywhere) {
  gen::Rng rng(43);
  int unique_systems = 0;
  for (int i = 0; i < 300; ++i) {
    const Index n = gen::integer(rng, 1, 3);
    BimodalSystem s = gen::mixed(rng, n);
    if (gen::coin(rng, 0.3)) s = gen::relay(rng, n, gen::real(rng, 0.1, 2.0) * gen::nonzero_vector(rng, n));
    const WellPosednessReport rep = analyze(s);
    if (rep.overall.verdict != OverallVerdict::RightUniqueEverywhere) continue;
    ++unique_systems;
    for (int j = 0; j < 50; ++j) {
      const VectorXd xi = gen::surface_point(rng, s, 2.0);
      EXPECT_NE(classify_initial_state(s, xi).continuation, ContinuationKind::Branching)
          << "system " << i << " via " << rep.overall.reason;
    }
  }
  EXPECT_GT(unique_systems, 30);
}
