#pragma once

#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "filippov/error.hpp"
#include "filippov/linalg.hpp"
#include "filippov/model.hpp"
#include "filippov/observability.hpp"
#include "filippov/wsets.hpp"
#include "filippov/wellposed.hpp"

namespace filippov {

enum class BranchPolicyKind { FollowMode1, FollowMode2, ExploreAll };

struct BranchPolicy {
  BranchPolicyKind kind = BranchPolicyKind::FollowMode1;
  int depth = 1;  // fork levels for ExploreAll
};

struct SimOptions {
  double t_end = 10.0;
  double dt = 1e-3;
  double event_tol = 1e-10;
  double surface_tol = 1e-9;
  int max_switches = 50;
  BranchPolicy branch_policy;
  Tolerances tol;
};

inline constexpr int kMaxExploreDepth = 8;

inline void validate(const SimOptions& o) {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive(o.t_end) || !positive(o.dt) || !positive(o.event_tol) || !positive(o.surface_tol))
    throw Error(ErrorKind::InvalidOptions, "t_end, dt, event_tol and surface_tol must be positive and finite");
  if (o.max_switches < 1) throw Error(ErrorKind::InvalidOptions, "max_switches must be at least 1");
  if (o.branch_policy.kind == BranchPolicyKind::ExploreAll &&
      (o.branch_policy.depth < 1 || o.branch_policy.depth > kMaxExploreDepth))
    throw Error(ErrorKind::InvalidOptions, "explore depth must lie in [1, 8]");
  if (o.dt <= o.event_tol || o.t_end / o.dt > 1e8)
    throw Error(ErrorKind::StepSizeUnderflow, "dt is too small for the requested horizon and event tolerance");
}

enum class RegimeKind { Mode1, Mode2, Sliding };

constexpr std::string_view to_csv_label(RegimeKind r) {
  switch (r) {
    case RegimeKind::Mode1: return "1";
    case RegimeKind::Mode2: return "2";
    case RegimeKind::Sliding: return "S";
  }
  return "?";
}

enum class EventKind { Crossing, SlidingEntry, SlidingExit, Branch, NoCaratheodory, ZenoGuardTrip };

constexpr std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::Crossing: return "Crossing";
    case EventKind::SlidingEntry: return "SlidingEntry";
    case EventKind::SlidingExit: return "SlidingExit";
    case EventKind::Branch: return "Branch";
    case EventKind::NoCaratheodory: return "NoCaratheodory";
    case EventKind::ZenoGuardTrip: return "ZenoGuardTrip";
  }
  return "?";
}

/// State at time t; regime and lambda describe the motion that starts here.
struct Sample {
  double t = 0.0;
  VectorXd x;
  RegimeKind regime = RegimeKind::Mode1;
  double lambda = std::numeric_limits<double>::quiet_NaN();  // weight on mode 1 while on the surface
};

struct Event {
  double t = 0.0;
  EventKind kind = EventKind::Crossing;
  VectorXd x;
  std::string detail;
};

struct Trajectory {
  std::string id = "0";
  std::vector<Sample> samples;
  std::vector<Event> events;
  std::vector<std::string> diagnostics;
  std::vector<Trajectory> children;
  std::string termination;
  bool representative = false;  // passed through a state with no canonical continuation

  std::size_t count(EventKind k) const {
    std::size_t n = 0;
    for (const auto& e : events) n += e.kind == k ? 1 : 0;
    return n;
  }
  std::size_t branch_count() const {
    std::size_t n = 1;
    for (const auto& c : children) n += c.branch_count();
    return n;
  }
};

// ---------------------------------------------------------------------------
// Building blocks

/// Convex weight on mode 1 that nulls the normal velocity, for an attractive
/// surface only.
inline std::optional<double> sliding_weight(const BimodalSystem& sys, const VectorXd& x, double tol = 1e-9) {
  const double b1 = sys.c().dot(sys.field(ModeId::Mode1, x));
  const double b2 = sys.c().dot(sys.field(ModeId::Mode2, x));
  if (b1 > tol && b2 < -tol) return b2 / (b2 - b1);
  return std::nullopt;
}

namespace detail {

using Field = std::function<VectorXd(const VectorXd&)>;

inline VectorXd rk4(const Field& f, const VectorXd& x, double h) {
  const VectorXd k1 = f(x);
  const VectorXd k2 = f(x + 0.5 * h * k1);
  const VectorXd k3 = f(x + 0.5 * h * k2);
  const VectorXd k4 = f(x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// RK4 over [0, tau] with substeps no longer than dt.
inline VectorXd integrate(const Field& f, const VectorXd& x, double tau, double dt) {
  const int n = std::max(1, static_cast<int>(std::ceil(tau / dt - 1e-9)));
  VectorXd y = x;
  for (int i = 0; i < n; ++i) y = rk4(f, y, tau / n);
  return y;
}

inline VectorXd project(const BimodalSystem& sys, const VectorXd& x) {
  return x - sys.c() * (sys.surface(x) / sys.c().squaredNorm());
}

}  // namespace detail

struct EventPoint {
  double t = 0.0;
  VectorXd x;
};

/// Surface hit of the single-mode flow started at (t0, x0) before t1. The
/// segment must start in the mode's region and end outside it. The
/// flow is re-integrated from x0 for every bisection probe, and the hit is
/// projected onto the surface along c.
inline EventPoint locate_event(const BimodalSystem& sys, ModeId mode, double t0, const VectorXd& x0, double t1,
                               const SimOptions& opts) {
  const detail::Field f = [&](const VectorXd& x) { return sys.field(mode, x); };
  auto outside = [&](const VectorXd& x) {
    const double s = sys.surface(x);
    return mode == ModeId::Mode1 ? s > opts.surface_tol : s < -opts.surface_tol;
  };
  if (outside(x0) || !(t1 > t0)) throw Error(ErrorKind::EventNotBracketed, "segment does not start in the mode's region");
  if (!outside(detail::integrate(f, x0, t1 - t0, opts.dt)))
    throw Error(ErrorKind::EventNotBracketed, "no surface crossing on the segment");
  // Detection uses the surface band; the root itself is bisected on the sign.
  const double side = mode == ModeId::Mode1 ? 1.0 : -1.0;
  double lo = 0.0;
  double hi = t1 - t0;
  while (hi - lo > opts.event_tol) {
    const double mid = 0.5 * (lo + hi);
    if (side * sys.surface(detail::integrate(f, x0, mid, opts.dt)) > 0.0) hi = mid;
    else lo = mid;
  }
  return {t0 + hi, detail::project(sys, detail::integrate(f, x0, hi, opts.dt))};
}

// ---------------------------------------------------------------------------
// Branch integration

namespace detail {

enum class Motion { Flow, Sliding, Hold, W0 };

struct Regime {
  Motion motion = Motion::Flow;
  ModeId mode = ModeId::Mode1;  // Flow and W0 only
};

/// What to do at a state on the surface: either one regime, or a fork.
struct Decision {
  Regime regime;
  std::optional<Regime> alternative;
  std::optional<EventKind> event;
  std::string detail;
};

class BranchRunner {
 public:
  BranchRunner(const BimodalSystem& sys, const SimOptions& opts) : sys_(sys), opts_(opts) {
    scale_ = std::max({linalg::max_abs(sys.A1()), linalg::max_abs(sys.A2()), linalg::max_abs(sys.e1()),
                       linalg::max_abs(sys.e2()), 1.0});
  }

  Trajectory run(double t0, const VectorXd& x0, std::optional<Regime> forced, int depth, std::string id) const {
    Trajectory tr;
    tr.id = std::move(id);
    double t = t0;
    VectorXd x = x0;
    Regime reg;
    if (forced) {
      reg = *forced;
    } else {
      const Decision d = decide(x, std::nullopt);
      if (d.event) add_event(tr, t, *d.event, x, d.detail);
      if (d.alternative && fork(tr, t, x, d, depth)) return tr;
      reg = resolve(tr, d, depth);
    }
    if (reg.motion == Motion::Hold) tr.representative = true;
    push_sample(tr, t, x, reg);

    std::deque<double> switches;
    int stalled = 0;
    double last_event_t = -std::numeric_limits<double>::infinity();
    long k = 0;  // index of the last grid point reached
    const double t_end = t0 + opts_.t_end;

    while (t < t_end - 1e-12 * std::max(1.0, std::abs(t_end))) {
      const double t_next = std::min(t0 + static_cast<double>(k + 1) * opts_.dt, t_end);
      const double h = t_next - t;
      if (h <= 1e-13 * std::max(1.0, std::abs(t_next))) {
        ++k;
        continue;
      }
      const Step st = advance(reg, x, h);
      if (!st.event_at) {
        t = t_next;
        x = st.x;
        ++k;
        push_sample(tr, t, x, reg);
        continue;
      }

      // An event at t + tau.
      t += *st.event_at;
      x = st.x;
      const Regime before = reg;
      Decision d = decide(x, before);
      if (st.exit_kind) {
        add_event(tr, t, *st.exit_kind, x, "");
      }
      const bool is_switch = !same_motion(before, d.regime) || d.alternative.has_value();
      if (d.event) {
        add_event(tr, t, *d.event, x, d.detail);
      } else if (!st.exit_kind && is_switch) {
        add_event(tr, t, classify_change(before, d.regime), x, "");
      }
      if (d.alternative && fork(tr, t, x, d, depth)) return tr;
      reg = resolve(tr, d, depth);
      if (reg.motion == Motion::Hold) tr.representative = true;
      push_sample(tr, t, x, reg);

      stalled = (t - last_event_t <= 10.0 * opts_.event_tol) ? stalled + 1 : 0;
      last_event_t = t;
      if (is_switch || st.exit_kind) {
        switches.push_back(t);
        while (!switches.empty() && switches.front() < t - 100.0 * opts_.dt) switches.pop_front();
      }
      {
        if (static_cast<int>(switches.size()) > opts_.max_switches || stalled > 16) {
          add_event(tr, t, EventKind::ZenoGuardTrip, x,
                    stalled > 16 ? "events stalled at one time instant"
                                 : std::to_string(switches.size()) + " switches within 100 dt");
          zeno_diagnostic(tr, x);
          tr.termination = "ZenoGuard";
          return tr;
        }
      }
    }
    tr.termination = "TEnd";
    return tr;
  }

 private:
  struct Step {
    VectorXd x;
    std::optional<double> event_at;  // offset into the step
    std::optional<EventKind> exit_kind;
  };

  const BimodalSystem& sys_;
  const SimOptions& opts_;
  double scale_ = 1.0;

  double beta(ModeId m, const VectorXd& x) const { return sys_.c().dot(sys_.field(m, x)); }

  /// Second-order weight when both normal velocities vanish, else 1/2.
  double hold_weight(const VectorXd& x) const {
    const RowVectorXd cA1 = sys_.c().transpose() * sys_.A1();
    const RowVectorXd cA2 = sys_.c().transpose() * sys_.A2();
    const double g1 = cA1.dot(sys_.field(ModeId::Mode1, x));
    const double g2 = cA2.dot(sys_.field(ModeId::Mode2, x));
    if (g1 > opts_.tol.lex && g2 < -opts_.tol.lex) return g2 / (g2 - g1);
    return 0.5;
  }

  double raw_sliding_weight(const VectorXd& x) const {
    const double b1 = beta(ModeId::Mode1, x);
    const double b2 = beta(ModeId::Mode2, x);
    const double den = b2 - b1;
    if (std::abs(den) <= opts_.tol.lex * scale_) return 0.5;
    return b2 / den;
  }

  double weight(const Regime& r, const VectorXd& x) const {
    switch (r.motion) {
      case Motion::Flow: return std::numeric_limits<double>::quiet_NaN();
      case Motion::Sliding: return raw_sliding_weight(x);
      case Motion::Hold: return hold_weight(x);
      case Motion::W0: return r.mode == ModeId::Mode1 ? 1.0 : 0.0;
    }
    return 0.5;
  }

  Field field_of(const Regime& r) const {
    switch (r.motion) {
      case Motion::Flow:
      case Motion::W0:
        return [this, m = r.mode](const VectorXd& x) { return sys_.field(m, x); };
      case Motion::Sliding:
      case Motion::Hold:
        return [this, r](const VectorXd& x) {
          const double l = weight(r, x);
          return VectorXd(l * sys_.field(ModeId::Mode1, x) + (1.0 - l) * sys_.field(ModeId::Mode2, x));
        };
    }
    return {};
  }

  bool outside(ModeId m, const VectorXd& x) const {
    const double s = sys_.surface(x);
    return m == ModeId::Mode1 ? s > opts_.surface_tol : s < -opts_.surface_tol;
  }

  /// Sliding stops when the weight leaves [0, 1] or becomes undefined.
  bool sliding_lost(const VectorXd& x) const {
    const double b1 = beta(ModeId::Mode1, x);
    const double b2 = beta(ModeId::Mode2, x);
    if (b2 - b1 >= -opts_.tol.lex * scale_) return true;
    const double l = b2 / (b2 - b1);
    return l < -opts_.tol.lex || l > 1.0 + opts_.tol.lex;
  }

  Step advance(const Regime& r, const VectorXd& x, double h) const {
    const Field f = field_of(r);
    Step st;
    switch (r.motion) {
      case Motion::Flow: {
        st.x = rk4(f, x, h);
        if (!outside(r.mode, st.x)) {
          // Landing inside the band from off the surface is a hit at the step end.
          if (std::abs(sys_.surface(st.x)) <= opts_.surface_tol && std::abs(sys_.surface(x)) > opts_.surface_tol) {
            st.event_at = h;
            st.x = project(sys_, st.x);
          }
          return st;
        }
        const double side = r.mode == ModeId::Mode1 ? 1.0 : -1.0;
        double lo = 0.0;
        double hi = h;
        while (hi - lo > opts_.event_tol) {
          const double mid = 0.5 * (lo + hi);
          if (side * sys_.surface(rk4(f, x, mid)) > 0.0) hi = mid;
          else lo = mid;
        }
        st.event_at = hi;
        st.x = project(sys_, rk4(f, x, hi));
        return st;
      }
      case Motion::Sliding: {
        st.x = project(sys_, rk4(f, x, h));
        if (!sliding_lost(st.x)) return st;
        double lo = 0.0;
        double hi = h;
        while (hi - lo > opts_.event_tol) {
          const double mid = 0.5 * (lo + hi);
          if (sliding_lost(project(sys_, rk4(f, x, mid)))) hi = mid;
          else lo = mid;
        }
        st.event_at = hi;
        st.x = project(sys_, rk4(f, x, hi));
        st.exit_kind = EventKind::SlidingExit;
        return st;
      }
      case Motion::Hold:
      case Motion::W0: {
        st.x = project(sys_, rk4(f, x, h));
        const auto cls = classify_initial_state(sys_, st.x, opts_.tol, opts_.surface_tol);
        const ContinuationKind keep =
            r.motion == Motion::Hold ? ContinuationKind::NoCaratheodory : ContinuationKind::OnW0;
        if (cls.continuation != keep) {
          st.event_at = h;
          st.exit_kind = EventKind::SlidingExit;
        }
        return st;
      }
    }
    return st;
  }

  static bool same_motion(const Regime& a, const Regime& b) {
    if (a.motion != b.motion) return false;
    return (a.motion != Motion::Flow && a.motion != Motion::W0) || a.mode == b.mode;
  }

  static EventKind classify_change(const Regime& before, const Regime& after) {
    if (after.motion == Motion::Sliding) return EventKind::SlidingEntry;
    if (before.motion != Motion::Flow) return EventKind::SlidingExit;
    return EventKind::Crossing;
  }

  /// One step of mode m from x stays on m's side of the surface.
  bool probe_consistent(ModeId m, const VectorXd& x) const {
    const VectorXd y = rk4([&](const VectorXd& z) { return sys_.field(m, z); }, x, opts_.dt);
    return !outside(m, y);
  }

  Decision decide(const VectorXd& x, const std::optional<Regime>& before) const {
    Decision d;
    const auto cls = classify_initial_state(sys_, x, opts_.tol, opts_.surface_tol);
    switch (cls.continuation) {
      case ContinuationKind::Mode1Flow:
      case ContinuationKind::Mode2Flow: {
        const ModeId m = cls.continuation == ContinuationKind::Mode1Flow ? ModeId::Mode1 : ModeId::Mode2;
        d.regime = {Motion::Flow, m};
        if (cls.on_surface && std::abs(beta(m, x)) <= 1e-7 * scale_ && !probe_consistent(m, x)) {
          // Tangential contact: trust the probe when the exact test is at the edge of resolution.
          if (probe_consistent(other(m), x)) d.regime = {Motion::Flow, other(m)};
          else d.regime = {Motion::Hold, m};
        }
        break;
      }
      case ContinuationKind::FirstOrderSliding:
        d.regime = {Motion::Sliding, ModeId::Mode1};
        break;
      case ContinuationKind::OnW0: {
        d.regime = {Motion::W0, ModeId::Mode1};
        const VectorXd diff = sys_.field(ModeId::Mode1, x) - sys_.field(ModeId::Mode2, x);
        if (linalg::max_abs(diff) > linalg::scaled(opts_.tol.fact, scale_ * std::max(1.0, linalg::max_abs(x)))) {
          d.alternative = Regime{Motion::W0, ModeId::Mode2};
          d.event = EventKind::Branch;
          d.detail = "both outputs vanish identically but the fields differ";
        }
        break;
      }
      case ContinuationKind::Branching:
        d.regime = {Motion::Flow, ModeId::Mode1};
        d.alternative = Regime{Motion::Flow, ModeId::Mode2};
        d.event = EventKind::Branch;
        d.detail = "both modes admit a forward continuation";
        break;
      case ContinuationKind::NoCaratheodory:
        d.regime = {Motion::Hold, ModeId::Mode1};
        if (!before || before->motion != Motion::Hold) {
          d.event = EventKind::NoCaratheodory;
          d.detail = "one representative Filippov solution, possibly not unique";
        }
        break;
    }
    return d;
  }

  Regime resolve(Trajectory& tr, const Decision& d, int depth) const {
    if (!d.alternative) return d.regime;
    switch (opts_.branch_policy.kind) {
      case BranchPolicyKind::FollowMode1: return d.regime;
      case BranchPolicyKind::FollowMode2: return *d.alternative;
      case BranchPolicyKind::ExploreAll:
        if (depth <= 0) tr.diagnostics.push_back("explore depth exhausted; following mode 1");
        return d.regime;
    }
    return d.regime;
  }

  bool fork(Trajectory& tr, double t, const VectorXd& x, const Decision& d, int depth) const {
    if (opts_.branch_policy.kind != BranchPolicyKind::ExploreAll || depth <= 0) return false;
    push_sample(tr, t, x, d.regime);
    tr.termination = "Forked";
    const double remaining = opts_.t_end - (t - start_time(tr));
    SimOptions child = opts_;
    child.t_end = remaining;
    BranchRunner runner(sys_, child);
    if (remaining <= opts_.dt * 1e-9) return true;
    tr.children.push_back(runner.run(t, x, d.regime, depth - 1, tr.id + ".1"));
    tr.children.push_back(runner.run(t, x, *d.alternative, depth - 1, tr.id + ".2"));
    return true;
  }

  static double start_time(const Trajectory& tr) { return tr.samples.empty() ? 0.0 : tr.samples.front().t; }

  void push_sample(Trajectory& tr, double t, const VectorXd& x, const Regime& r) const {
    Sample s;
    s.t = t;
    s.x = x;
    s.regime = r.motion == Motion::Flow ? (r.mode == ModeId::Mode1 ? RegimeKind::Mode1 : RegimeKind::Mode2)
                                        : RegimeKind::Sliding;
    if (r.motion != Motion::Flow) s.lambda = std::clamp(weight(r, x), 0.0, 1.0);
    if (!tr.samples.empty() && t - tr.samples.back().t <= 1e-13 * std::max(1.0, std::abs(t))) {
      tr.samples.back() = s;
    } else {
      tr.samples.push_back(s);
    }
  }

  static void add_event(Trajectory& tr, double t, EventKind k, const VectorXd& x, std::string detail) {
    tr.events.push_back({t, k, x, std::move(detail)});
  }

  /// Relates accumulating switches to the state where both outputs vanish to
  /// the common observability order.
  void zeno_diagnostic(Trajectory& tr, const VectorXd& x) const {
    const Index h = std::min(observability_index(sys_, ModeId::Mode1, opts_.tol.rank),
                             observability_index(sys_, ModeId::Mode2, opts_.tol.rank));
    const StackedData s = stacked(sys_, ModeId::Mode1, h);
    const VectorXd r = s.T * x + s.evec;
    const VectorXd corr = s.T.completeOrthogonalDecomposition().solve(r);
    const VectorXd p = x - corr;
    const auto cls = classify_initial_state(sys_, p, opts_.tol, opts_.surface_tol);
    std::ostringstream os;
    os << "switches accumulate at distance " << corr.norm() << " from a state classified "
       << to_string(cls.continuation);
    tr.diagnostics.push_back(os.str());
  }
};

/// Continuous right-hand side: the piecewise map is one Lipschitz field, so
/// the state is integrated by plain RK4 on the grid. Crossings are located
/// for the record only and do not restart the step.
inline Trajectory run_continuous(const BimodalSystem& sys, const VectorXd& xi, const SimOptions& opts) {
  const Field f = [&](const VectorXd& x) {
    return sys.field(sys.surface(x) <= 0.0 ? ModeId::Mode1 : ModeId::Mode2, x);
  };
  auto sample = [&](double t, const VectorXd& x) {
    Sample s;
    s.t = t;
    s.x = x;
    s.regime = sys.surface(x) <= 0.0 ? RegimeKind::Mode1 : RegimeKind::Mode2;
    return s;
  };
  auto side_of = [&](const VectorXd& x) {
    const double s = sys.surface(x);
    return s > opts.surface_tol ? 1 : (s < -opts.surface_tol ? -1 : 0);
  };

  Trajectory tr;
  tr.id = "0";
  tr.samples.push_back(sample(0.0, xi));
  VectorXd x = xi;
  // Last grid point strictly off the surface band.
  double t_off = 0.0;
  VectorXd x_off = xi;
  int side = side_of(xi);
  std::deque<double> switches;
  const long steps = static_cast<long>(std::ceil(opts.t_end / opts.dt - 1e-9));
  for (long k = 1; k <= steps; ++k) {
    const double t0 = static_cast<double>(k - 1) * opts.dt;
    const double t = std::min(static_cast<double>(k) * opts.dt, opts.t_end);
    x = rk4(f, x, t - t0);
    const int now = side_of(x);
    if (now != 0 && side != 0 && now != side) {
      double lo = 0.0;
      double hi = t - t_off;
      while (hi - lo > opts.event_tol) {
        const double mid = 0.5 * (lo + hi);
        if (side * sys.surface(integrate(f, x_off, mid, opts.dt)) < 0.0) hi = mid;
        else lo = mid;
      }
      const VectorXd xe = project(sys, integrate(f, x_off, hi, opts.dt));
      tr.events.push_back({t_off + hi, EventKind::Crossing, xe, ""});
      if (t_off + hi < t) tr.samples.push_back(sample(t_off + hi, xe));
      switches.push_back(t_off + hi);
      while (!switches.empty() && switches.front() < t - 100.0 * opts.dt) switches.pop_front();
      if (static_cast<int>(switches.size()) > opts.max_switches) {
        tr.samples.push_back(sample(t, x));
        tr.events.push_back({t, EventKind::ZenoGuardTrip, x, std::to_string(switches.size()) + " switches within 100 dt"});
        tr.termination = "ZenoGuard";
        return tr;
      }
    }
    if (now != 0) {
      side = now;
      t_off = t;
      x_off = x;
    } else if (side == 0) {
      t_off = t;
      x_off = x;
    }
    tr.samples.push_back(sample(t, x));
  }
  tr.termination = "TEnd";
  return tr;
}

}  // namespace detail

inline Trajectory simulate(const BimodalSystem& sys, const VectorXd& xi, const SimOptions& opts) {
  validate(opts);
  if (xi.size() != sys.n()) throw Error(ErrorKind::DimensionMismatch, "initial state has wrong dimension");
  if (!xi.allFinite()) throw Error(ErrorKind::NonFiniteEntry, "initial state is not finite");
  if (check_continuity(sys, opts.tol).holds) return detail::run_continuous(sys, xi, opts);
  const int depth = opts.branch_policy.kind == BranchPolicyKind::ExploreAll ? opts.branch_policy.depth : 0;
  Trajectory tr = detail::BranchRunner(sys, opts).run(0.0, xi, std::nullopt, depth, "0");
  if (tr.representative)
    tr.diagnostics.push_back("one representative Filippov solution, possibly not unique");
  return tr;
}

// ---------------------------------------------------------------------------
// Inclusion residual

namespace detail {

inline double distance_to_segment(const VectorXd& v, const VectorXd& a, const VectorXd& b) {
  const VectorXd ab = b - a;
  const double den = ab.squaredNorm();
  const double s = den > 0 ? std::clamp((v - a).dot(ab) / den, 0.0, 1.0) : 0.0;
  return (v - a - s * ab).norm();
}

}  // namespace detail

/// Largest distance between a finite-difference velocity and the convexified
/// field at the segment midpoint, over all branches.
inline double filippov_residual(const BimodalSystem& sys, const Trajectory& tr, double surface_band = 1e-8) {
  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < tr.samples.size(); ++i) {
    const Sample& a = tr.samples[i];
    const Sample& b = tr.samples[i + 1];
    const double h = b.t - a.t;
    if (!(h > 1e-12)) continue;
    const VectorXd v = (b.x - a.x) / h;
    const VectorXd xm = 0.5 * (a.x + b.x);
    const double s = sys.surface(xm);
    const double band = surface_band * std::max(1.0, sys.c().norm() * xm.norm());
    double dist = 0.0;
    if (std::abs(s) <= band) {
      dist = detail::distance_to_segment(v, sys.field(ModeId::Mode1, xm), sys.field(ModeId::Mode2, xm));
    } else {
      dist = (v - sys.field(s < 0 ? ModeId::Mode1 : ModeId::Mode2, xm)).norm();
    }
    worst = std::max(worst, dist);
  }
  for (const auto& c : tr.children) worst = std::max(worst, filippov_residual(sys, c, surface_band));
  return worst;
}

inline bool check_filippov_residual(const BimodalSystem& sys, const Trajectory& tr, double tol) {
  return filippov_residual(sys, tr) <= tol;
}

// ---------------------------------------------------------------------------
// Output

inline void write_csv(const Trajectory& tr, std::ostream& os) {
  const Index n = tr.samples.empty() ? 0 : tr.samples.front().x.size();
  os << "t";
  for (Index i = 0; i < n; ++i) os << ",x" << (i + 1);
  os << ",regime,lambda,event\n";
  os.precision(17);
  auto row = [&](double t, const VectorXd& x, RegimeKind r, double lambda, std::string_view ev) {
    os << t;
    for (Index i = 0; i < x.size(); ++i) os << ',' << x(i);
    os << ',' << to_csv_label(r) << ',';
    if (!std::isnan(lambda)) os << lambda;
    os << ',' << ev << '\n';
  };
  std::size_t e = 0;
  for (const Sample& s : tr.samples) {
    while (e < tr.events.size() && tr.events[e].t <= s.t) {
      row(tr.events[e].t, tr.events[e].x, s.regime, s.t == tr.events[e].t ? s.lambda : std::nan(""),
          to_string(tr.events[e].kind));
      ++e;
    }
    row(s.t, s.x, s.regime, s.lambda, "");
  }
  for (; e < tr.events.size(); ++e) {
    const RegimeKind r = tr.samples.empty() ? RegimeKind::Mode1 : tr.samples.back().regime;
    row(tr.events[e].t, tr.events[e].x, r, std::nan(""), to_string(tr.events[e].kind));
  }
}

inline nlohmann::json index_json(const Trajectory& tr, const std::string& stem, const std::string& parent = "") {
  nlohmann::json branches = nlohmann::json::array();
  std::function<void(const Trajectory&, const std::string&)> walk = [&](const Trajectory& b, const std::string& par) {
    nlohmann::json events = nlohmann::json::array();
    for (const auto& ev : b.events) {
      nlohmann::json je{{"t", ev.t}, {"kind", std::string(to_string(ev.kind))}, {"x", vector_json(ev.x)}};
      if (!ev.detail.empty()) je["detail"] = ev.detail;
      events.push_back(je);
    }
    branches.push_back({{"id", b.id},
                        {"parent", par},
                        {"file", stem + "_" + b.id + ".csv"},
                        {"t_start", b.samples.empty() ? 0.0 : b.samples.front().t},
                        {"t_stop", b.samples.empty() ? 0.0 : b.samples.back().t},
                        {"termination", b.termination},
                        {"representative", b.representative},
                        {"diagnostics", b.diagnostics},
                        {"events", events}});
    for (const auto& c : b.children) walk(c, b.id);
  };
  walk(tr, parent);
  return {{"branches", branches}};
}

/// One CSV per branch plus index.json, all inside dir.
inline std::vector<std::filesystem::path> write_tree(const Trajectory& tr, const std::filesystem::path& dir,
                                                     const std::string& stem = "trajectory") {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> files;
  std::function<void(const Trajectory&)> walk = [&](const Trajectory& b) {
    const auto path = dir / (stem + "_" + b.id + ".csv");
    std::ofstream os(path);
    if (!os) throw Error(ErrorKind::InvalidOptions, "cannot write " + path.string());
    write_csv(b, os);
    files.push_back(path);
    for (const auto& c : b.children) walk(c);
  };
  walk(tr);
  const auto idx = dir / "index.json";
  std::ofstream os(idx);
  if (!os) throw Error(ErrorKind::InvalidOptions, "cannot write " + idx.string());
  os << index_json(tr, stem).dump(2) << '\n';
  files.push_back(idx);
  return files;
}

}  // namespace filippov
