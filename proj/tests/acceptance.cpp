// Acceptance run: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>

#include "generators.hpp"

using namespace filippov;

namespace {

// Pinned tolerances.
constexpr double kMuTol = 1e-8;
constexpr double kAlphaTol = 1e-8;
constexpr double kEquilibriumTol = 1e-3;
constexpr double kSlidingArrivalTol = 1e-6;
constexpr double kLambdaTol = 1e-6;
constexpr double kContinuityTol = 1e-6;
constexpr double kLipschitzCeiling = 1e6;
constexpr std::size_t kLexSamples = 10000;
constexpr std::size_t kLipschitzDraws = 10000;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (!pass) detail << "; ";
      detail << what;
      pass = false;
    }
  }
};

SimOptions sim(double t_end, double dt) {
  SimOptions o;
  o.t_end = t_end;
  o.dt = dt;
  return o;
}

const StatementVerdict& statement(const WellPosednessReport& r, StatementId id) {
  for (const StatementVerdict* v : r.statements.all())
    if (v->id == id) return *v;
  throw std::logic_error("missing statement");
}

double min_crossing_gap(const Trajectory& tr) {
  double gap = std::numeric_limits<double>::infinity();
  double last = -std::numeric_limits<double>::infinity();
  for (const Event& e : tr.events) {
    if (e.kind != EventKind::Crossing) continue;
    gap = std::min(gap, e.t - last);
    last = e.t;
  }
  return gap;
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  Outcome o;
  const BimodalSystem p = fixture("pogromsky");
  const WellPosednessReport r = analyze(p);
  const StatementVerdict& s3 = statement(r, StatementId::S3);
  const StatementVerdict& s5 = statement(r, StatementId::S5);
  const StatementVerdict& s6 = statement(r, StatementId::S6);
  o.require(s3.holds && s3.certificate.k && *s3.certificate.k == 3, "S3 must hold with k=3");
  o.require(!s5.holds, "S5 must fail");
  o.require(s5.certificate.rho1 && *s5.certificate.rho1 == 1.0, "rho1 must equal 1");
  o.require(s5.certificate.rho2 && *s5.certificate.rho2 == -1.0, "rho2 must equal -1");
  o.require(s6.holds && s6.certificate.vacuous && *s6.certificate.vacuous, "S6 must hold vacuously");
  o.require(r.overall.verdict == OverallVerdict::Inconclusive, "overall must be Inconclusive");
  o.require(classify_initial_state(p, VectorXd::Zero(3)).continuation == ContinuationKind::NoCaratheodory,
            "origin must classify NoCaratheodory");
  const std::string a = to_json(r).dump();
  bool stable = true;
  for (int i = 0; i < 5; ++i) stable = stable && to_json(analyze(p)).dump() == a;
  o.require(stable, "report differs across runs");
  o.detail << (o.pass ? "S3 k=3, rho=(1,-1), S6 vacuous, Inconclusive, origin NoCaratheodory, 6 identical runs" : "");
  return o;
}

Outcome criterion2() {
  Outcome o;
  const BimodalSystem base = fixture("relay");
  const VectorXd& c = base.c();
  for (double a : {0.0, 0.5, 2.0}) {
    const BimodalSystem s = make_system(base.A1(), base.A2(), a * c, -a * c, c, 0.0);
    const StatementVerdict v = check_one_sided_lipschitz(s);
    o.require(v.holds && v.certificate.mu && std::abs(*v.certificate.mu - 2 * a) <= kMuTol,
              "alpha=" + std::to_string(a) + " must hold with mu=2 alpha");
  }
  gen::Rng rng(2024);
  oracle::Rng orng(7);
  int refuted = 0;
  for (int i = 0; i < 20; ++i) {
    const VectorXd along = gen::real(rng, -2, 2) * c;
    VectorXd off = gen::vector(rng, c.size(), -2, 2);
    off -= c * (c.dot(off) / c.squaredNorm());
    while (off.norm() < 0.1) {
      off = gen::vector(rng, c.size(), -2, 2);
      off -= c * (c.dot(off) / c.squaredNorm());
    }
    const VectorXd b = along + off;
    const BimodalSystem s = make_system(base.A1(), base.A2(), b, -b, c, 0.0);
    const StatementVerdict v = check_one_sided_lipschitz(s);
    o.require(!v.holds, "random b #" + std::to_string(i) + " must fail");
    const auto ref = oracle::refute_one_sided_lipschitz(s, kLipschitzCeiling, orng);
    o.require(ref.refuted_all, "random b #" + std::to_string(i) + " refuted only up to L=" +
                                   std::to_string(ref.largest_refuted));
    refuted += ref.refuted_all ? 1 : 0;
  }
  // The sampler also confirms the three holding cases at the certified bound.
  int confirmed = 0;
  for (double a : {0.0, 0.5, 2.0}) {
    const BimodalSystem s = make_system(base.A1(), base.A2(), a * c, -a * c, c, 0.0);
    const auto v = check_one_sided_lipschitz(s);
    const auto smp = oracle::sample_one_sided_lipschitz(s, *v.certificate.lipschitz_bound, kLipschitzDraws, orng);
    o.require(smp.violations == 0, "sampler found a violation for alpha=" + std::to_string(a));
    confirmed += smp.violations == 0 ? 1 : 0;
  }
  if (o.pass)
    o.detail << "mu=2 alpha for alpha in {0,0.5,2} (sampler confirms " << confirmed << "/3); " << refuted
             << "/20 off-span b refuted for every L up to 1e6";
  return o;
}

Outcome criterion3() {
  Outcome o;
  const BimodalSystem t05 = fixture_from_uri("two_tank?u=0.5");
  const WellPosednessReport r = analyze(t05);
  const StatementVerdict& s5 = statement(r, StatementId::S5);
  o.require(r.overall.verdict == OverallVerdict::RightUniqueEverywhere && r.overall.reason == "S5+S6",
            "u=0.5 must be RightUniqueEverywhere via S5+S6");
  o.require(s5.certificate.alpha && std::abs(*s5.certificate.alpha - 0.5) <= kAlphaTol, "alpha must be 1-u");
  o.require(r.zeno_free == ZenoStatus::Certified, "ZenoFree must be Certified");
  const Trajectory tr = simulate(t05, VectorXd::Zero(2), sim(20, 1e-3));
  const double dist = (tr.samples.back().x - VectorXd::Constant(2, 0.5)).cwiseAbs().maxCoeff();
  o.require(dist <= kEquilibriumTol, "u=0.5 run ends " + std::to_string(dist) + " from (0.5,0.5)");
  o.require(tr.events.empty(), "u=0.5 run must have zero events");

  const BimodalSystem t2 = fixture_from_uri("two_tank?u=2");
  SimOptions o2 = sim(20, 1e-3);
  const Trajectory tr2 = simulate(t2, VectorXd::Zero(2), o2);
  const std::size_t crossings = tr2.count(EventKind::Crossing);
  const double gap = min_crossing_gap(tr2);
  o.require(crossings >= 1, "u=2 run must cross the surface");
  o.require(gap > 10 * o2.event_tol, "u=2 crossing gap " + std::to_string(gap) + " not isolated");
  for (double u : {0.5, 1.0, 2.0, -0.5})
    o.require(!check_one_sided_lipschitz(fixture_from_uri("two_tank?u=" + std::to_string(u))).holds,
              "Thm0 must fail for u=" + std::to_string(u));
  if (o.pass)
    o.detail << "alpha=" << *s5.certificate.alpha << ", end distance " << dist << ", u=2: " << crossings
             << " crossings, min gap " << gap << " s";
  return o;
}

Outcome criterion4() {
  Outcome o;
  const BimodalSystem s = fixture("scalar_relay");
  const WellPosednessReport r = analyze(s);
  o.require(r.overall.verdict == OverallVerdict::RightUniqueEverywhere && r.overall.reason == "Thm2",
            "must be RightUniqueEverywhere via Thm2");
  const Trajectory tr = simulate(s, VectorXd::Ones(1), sim(2, 1e-3));
  double arrival = std::numeric_limits<double>::infinity();
  for (const Sample& smp : tr.samples)
    if (std::abs(smp.x(0)) <= kSlidingArrivalTol) {
      arrival = smp.t;
      break;
    }
  o.require(arrival <= 1.0 + 1e-2, "|x| <= 1e-6 first reached at t=" + std::to_string(arrival));
  double worst = 0.0;
  bool sliding = true;
  for (const Sample& smp : tr.samples) {
    if (smp.t < arrival) continue;
    sliding = sliding && smp.regime == RegimeKind::Sliding && std::abs(smp.x(0)) <= kSlidingArrivalTol;
    worst = std::max(worst, std::abs(smp.lambda - 0.5));
  }
  o.require(sliding, "must stay in Sliding on the surface after arrival");
  o.require(worst <= kLambdaTol, "lambda deviates by " + std::to_string(worst));
  if (o.pass) o.detail << "arrival t=" << arrival << ", max |lambda-0.5|=" << worst;
  return o;
}

/// Instance with entries in [-2, 2]. Half are pure draws; the other half
/// are rejection-sampled factorable pairs so both verdicts occur.
void lex_instance(gen::Rng& rng, MatrixXd& P1, VectorXd& q1, MatrixXd& P2, VectorXd& q2) {
  const Index n = gen::integer(rng, 1, 4);
  const Index m = gen::integer(rng, 1, static_cast<int>(n));
  auto in_range = [](const MatrixXd& x) { return x.size() == 0 || x.cwiseAbs().maxCoeff() <= 2.0; };
  for (;;) {
    P2 = gen::full_row_rank(rng, m, n);
    q2 = gen::vector(rng, m, -2, 2);
    if (gen::coin(rng)) {
      P1 = gen::full_row_rank(rng, m, n);
      q1 = gen::vector(rng, m, -2, 2);
      return;
    }
    MatrixXd M = MatrixXd::Zero(m, m);
    for (Index i = 0; i < m; ++i) {
      for (Index j = 0; j < i; ++j) M(i, j) = gen::real(rng, -0.5, 0.5);
      M(i, i) = gen::real(rng, 0.2, 1.0);
    }
    P1 = M * P2;
    q1 = M * q2;
    if (gen::coin(rng, 0.6)) q1(gen::integer(rng, 0, static_cast<int>(m) - 1)) += gen::real(rng, -1, 1);
    if (in_range(P1) && in_range(q1) && linalg::full_row_rank(P1, 1e-9)) return;
  }
}

Outcome criterion5() {
  Outcome o;
  gen::Rng rng(5005);
  oracle::Rng orng(5006);
  int disagreements = 0, holds = 0, fails = 0;
  for (int i = 0; i < 500; ++i) {
    MatrixXd P1, P2;
    VectorXd q1, q2;
    lex_instance(rng, P1, q1, P2, q2);
    const auto v = decide_lex_implication(P1, q1, P2, q2);
    std::optional<Index> focus;
    if (const auto* f = std::get_if<LexImplicationFails>(&v)) focus = f->failure_row;
    const auto s = oracle::sample_lex_implication(P1, q1, P2, q2, kLexSamples, orng, focus);
    const bool agree = focus ? s.violations > 0 : s.violations == 0;
    (focus ? fails : holds) += 1;
    if (!agree) ++disagreements;
  }
  o.require(disagreements == 0, std::to_string(disagreements) + " disagreements");
  o.detail << (o.pass ? "" : ", ") << "500 instances (" << holds << " Holds, " << fails << " Fails), "
           << disagreements << " disagreements";
  return o;
}

Outcome criterion6() {
  Outcome o;
  const double dt = 1e-3;
  const double tol = 10 * dt * dt;
  struct Run {
    std::string name;
    std::string uri;
    VectorXd xi;
    double t_end;
  };
  const std::vector<Run> runs{{"two_tank u=0.5", "two_tank?u=0.5", VectorXd::Zero(2), 20},
                              {"two_tank u=2", "two_tank?u=2", VectorXd::Zero(2), 20},
                              {"scalar_relay", "scalar_relay", VectorXd::Ones(1), 2},
                              {"pogromsky", "pogromsky", (VectorXd(3) << -0.1, 0, 0).finished(), 5},
                              {"pogromsky origin", "pogromsky", VectorXd::Zero(3), 5},
                              {"relay", "relay", (VectorXd(2) << 1, 0).finished(), 5}};
  double worst = 0.0;
  for (const Run& r : runs) {
    const BimodalSystem s = fixture_from_uri(r.uri);
    const Trajectory tr = simulate(s, r.xi, sim(r.t_end, dt));
    const double res = filippov_residual(s, tr);
    worst = std::max(worst, res);
    o.require(check_filippov_residual(s, tr, tol), r.name + " residual " + std::to_string(res));
  }
  if (o.pass) o.detail << runs.size() << " fixture runs, worst residual " << worst << " <= " << tol;
  return o;
}

Outcome criterion7() {
  Outcome o;
  gen::Rng rng(7007);
  const double dt = 1e-3, t_end = 5.0;
  double worst = 0.0;
  int with_crossings = 0;
  for (int i = 0; i < 50; ++i) {
    const Index n = gen::integer(rng, 1, 4);
    const BimodalSystem s = gen::continuous(rng, n);
    VectorXd xi = gen::vector(rng, n);
    const Trajectory tr = simulate(s, xi, sim(t_end, dt));
    if (tr.count(EventKind::Crossing) + tr.count(EventKind::SlidingEntry) > 0) ++with_crossings;
    // Plain RK4 of the continuous piecewise field on the same grid.
    const detail::Field f = [&](const VectorXd& x) {
      return s.field(s.surface(x) <= 0 ? ModeId::Mode1 : ModeId::Mode2, x);
    };
    VectorXd x = xi;
    std::size_t k = 0;
    double err = 0.0;
    for (const Sample& smp : tr.samples) {
      const double grid = static_cast<double>(k) * dt;
      if (std::abs(smp.t - grid) > 1e-12) continue;  // event samples lie off the grid
      err = std::max(err, (smp.x - x).cwiseAbs().maxCoeff());
      x = detail::rk4(f, x, dt);
      ++k;
    }
    o.require(k == static_cast<std::size_t>(std::llround(t_end / dt)) + 1,
              "system " + std::to_string(i) + " grid samples missing");
    o.require(err <= kContinuityTol, "system " + std::to_string(i) + " sup error " + std::to_string(err));
    worst = std::max(worst, err);
  }
  if (o.pass) o.detail << "50 systems (" << with_crossings << " touch the surface), worst sup error " << worst;
  return o;
}

Outcome criterion8() {
  Outcome o;
  gen::Rng rng(8008);
  int cor_holds = 0, cor_fails = 0, paths = 0;
  double worst_ratio = 0.0;
  for (int i = 0; i < 200; ++i) {
    const Index n = gen::integer(rng, 1, 4);
    const BimodalSystem s = gen::homogeneous(rng, n);
    const WellPosednessReport r = analyze(s);
    const StatementVerdict& c = r.statements.cor1;
    if (!c.holds) {
      ++cor_fails;
      o.require(r.overall.verdict != OverallVerdict::RightUniqueEverywhere,
                "system " + std::to_string(i) + " claims uniqueness although Cor1 fails");
      continue;
    }
    ++cor_holds;
    for (int j = 0; j < 20; ++j) {
      const VectorXd xi = gen::vector(rng, n);
      SimOptions opt = sim(1.0, 8e-3);
      opt.branch_policy = {BranchPolicyKind::ExploreAll, 4};
      std::vector<VectorXd> ends;
      bool single = true;
      for (int q = 0; q < 5; ++q, opt.dt /= 2) {
        const Trajectory tr = simulate(s, xi, opt);
        single = single && tr.branch_count() == 1;
        ends.push_back(tr.samples.back().x);
      }
      o.require(single, "system " + std::to_string(i) + " state " + std::to_string(j) + " forked");
      // Successive end-state differences over four halvings must shrink by
      // at least 4x and end small. Plain RK4 across a kink is not monotone
      // per halving, so single ratios are not compared.
      const double scale = std::max(1.0, ends.back().norm());
      std::vector<double> d;
      for (std::size_t q = 0; q + 1 < ends.size(); ++q) d.push_back((ends[q] - ends[q + 1]).norm() / scale);
      const bool converges = d.back() <= 1e-10 || (d.back() <= d.front() / 4 && d.back() <= 1e-6);
      if (!converges) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "system %d state %d differences %.3e -> %.3e", i, j, d.front(), d.back());
        o.require(false, buf);
      }
      if (d.front() > 1e-12) worst_ratio = std::max(worst_ratio, d.back() / d.front());
      paths += single ? 1 : 0;
    }
  }
  o.require(cor_holds > 0 && cor_fails > 0, "both Cor1 outcomes must occur");
  if (o.pass)
    o.detail << cor_holds << " systems with Cor1 (" << paths << " single-path runs, worst four-halving contraction "
             << worst_ratio << "), " << cor_fails << " without, none claims uniqueness";
  return o;
}

Outcome criterion9() {
  Outcome o;
  int n = 0;
  for (const char* uri : {"relay", "relay?b=1,1", "two_tank?u=0.5", "two_tank?u=1", "two_tank?u=2", "pogromsky",
                          "scalar_relay"}) {
    const BimodalSystem s = fixture_from_uri(uri);
    const LatticeResult left = analyze(s).left_uniqueness;
    const LatticeResult right_rev = analyze(reverse_time(s)).overall;
    o.require(left == right_rev, std::string(uri) + ": " + std::string(to_string(left.verdict)) + " vs " +
                                     std::string(to_string(right_rev.verdict)));
    ++n;
  }
  if (o.pass) o.detail << n << " fixtures, left verdicts equal reversed right verdicts";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                       criterion6, criterion7, criterion8, criterion9};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i]();
    } catch (const std::exception& ex) {
      o.pass = false;
      o.detail << "exception: " << ex.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s criterion %zu: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", i + 1, o.detail.str().c_str(), secs);
    failed += o.pass ? 0 : 1;
  }
  return failed;
}
