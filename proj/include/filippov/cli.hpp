#pragma once

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "filippov/error.hpp"
#include "filippov/model.hpp"
#include "filippov/oracles.hpp"
#include "filippov/simulator.hpp"
#include "filippov/wellposed.hpp"
#include "filippov/wsets.hpp"

namespace filippov::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

/// "fixture:name?k=v" or a path to a JSON system description.
inline BimodalSystem load_system(const std::string& source) {
  constexpr std::string_view prefix = "fixture:";
  if (source.rfind(prefix, 0) == 0) return fixture_from_uri(source.substr(prefix.size()));
  std::ifstream in(source);
  if (!in) throw Error(ErrorKind::MalformedInput, "cannot open system file '" + source + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_system(ss.str());
}

inline VectorXd parse_state(const std::string& text, Index n) {
  if (text.empty()) throw Error(ErrorKind::InvalidOptions, "--state is required");
  const std::vector<double> v = filippov::detail::parse_list(text);
  if (static_cast<Index>(v.size()) != n)
    throw Error(ErrorKind::DimensionMismatch,
                "state has " + std::to_string(v.size()) + " entries, system has n = " + std::to_string(n));
  return Eigen::Map<const VectorXd>(v.data(), n);
}

inline BranchPolicy parse_branch_policy(const std::string& s) {
  if (s == "follow1") return {BranchPolicyKind::FollowMode1, 1};
  if (s == "follow2") return {BranchPolicyKind::FollowMode2, 1};
  constexpr std::string_view explore = "explore:";
  if (s.rfind(explore, 0) == 0) {
    const std::string d = s.substr(explore.size());
    int depth = 0;
    try {
      std::size_t used = 0;
      depth = std::stoi(d, &used);
      if (used != d.size()) throw std::invalid_argument(d);
    } catch (const std::exception&) {
      throw Error(ErrorKind::InvalidOptions, "explore depth '" + d + "' is not an integer");
    }
    return {BranchPolicyKind::ExploreAll, depth};
  }
  throw Error(ErrorKind::InvalidOptions, "branch policy must be follow1, follow2 or explore:<depth>");
}

inline nlohmann::json error_json(std::string_view kind, const std::string& message, int code) {
  return {{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}};
}

struct Options {
  std::string system;
  std::string out;
  std::string state;
  std::string branch_policy = "follow1";
  std::string dump;
  Tolerances tol;
  SimOptions sim;
  std::uint64_t seed = 1;
  std::size_t samples = 10000;
};

// ---------------------------------------------------------------------------
// Verbs

namespace detail {

inline void emit(const nlohmann::json& j, const std::string& out_path, std::ostream& out) {
  if (out_path.empty()) {
    out << j.dump(2) << '\n';
    return;
  }
  std::ofstream f(out_path);
  if (!f) throw Error(ErrorKind::InvalidOptions, "cannot write " + out_path);
  f << j.dump(2) << '\n';
}

inline nlohmann::json lex_oracle_entry(const MatrixXd& P1, const VectorXd& q1, const MatrixXd& P2,
                                       const VectorXd& q2, const Options& o, oracle::Rng& rng) {
  const LexImplication v = decide_lex_implication(P1, q1, P2, q2, o.tol);
  const auto* fails = std::get_if<LexImplicationFails>(&v);
  std::optional<Index> focus;
  if (fails) focus = fails->failure_row;
  const oracle::LexSampleResult s = oracle::sample_lex_implication(P1, q1, P2, q2, o.samples, rng, focus, o.tol);
  const bool agree = fails ? s.violations > 0 : s.violations == 0;
  nlohmann::json j{{"checker", fails ? "Fails" : "Holds"},
                   {"samples", s.samples},
                   {"violations", s.violations},
                   {"agree", agree}};
  if (fails) j["failure_row"] = fails->failure_row;
  if (s.violating) j["violating_state"] = vector_json(*s.violating);
  return j;
}

inline nlohmann::json run_oracle(const BimodalSystem& sys, const Options& o) {
  oracle::Rng rng(o.seed);
  bool all_agree = true;

  const StatementVerdict lip = check_one_sided_lipschitz(sys, o.tol);
  nlohmann::json jl{{"checker_holds", lip.holds}};
  if (lip.holds) {
    const double L = lip.certificate.lipschitz_bound.value_or(0.0);
    const auto s = oracle::sample_one_sided_lipschitz(sys, L, o.samples, rng);
    jl["L"] = L;
    jl["draws"] = s.draws;
    jl["violations"] = s.violations;
    jl["agree"] = s.violations == 0;
  } else {
    const auto r = oracle::refute_one_sided_lipschitz(sys, 1e6, rng);
    jl["refuted_up_to"] = r.largest_refuted;
    jl["agree"] = r.refuted_all;
  }
  all_agree = all_agree && jl["agree"].get<bool>();

  const Index h = std::min(observability_index(sys, ModeId::Mode1, o.tol.rank),
                           observability_index(sys, ModeId::Mode2, o.tol.rank));
  nlohmann::json jx = nlohmann::json::array();
  for (Index k = 0; k <= h; ++k) {
    const StackedData s1 = stacked(sys, ModeId::Mode1, k);
    const StackedData s2 = stacked(sys, ModeId::Mode2, k);
    // Mode 1 output negative implies mode 2 output nonpositive, and the mirror.
    nlohmann::json fwd = lex_oracle_entry(s1.T, -s1.evec, s2.T, -s2.evec, o, rng);
    nlohmann::json bwd = lex_oracle_entry(-s2.T, s2.evec, -s1.T, s1.evec, o, rng);
    fwd["k"] = k;
    fwd["direction"] = "mode1_negative_implies_mode2_nonpositive";
    bwd["k"] = k;
    bwd["direction"] = "mode2_positive_implies_mode1_nonnegative";
    all_agree = all_agree && fwd["agree"].get<bool>() && bwd["agree"].get<bool>();
    jx.push_back(fwd);
    jx.push_back(bwd);
  }
  return {{"seed", o.seed}, {"one_sided_lipschitz", jl}, {"lex_implication", jx}, {"agree", all_agree}};
}

inline void run_simulate(const BimodalSystem& sys, const Options& o, std::ostream& out, spdlog::logger& log) {
  SimOptions sim = o.sim;
  sim.tol = o.tol;
  sim.branch_policy = parse_branch_policy(o.branch_policy);
  const VectorXd xi = parse_state(o.state, sys.n());
  const Trajectory tr = simulate(sys, xi, sim);
  const double resid = filippov_residual(sys, tr);
  log.info("simulate: {} samples, {} events, residual {:.3e}", tr.samples.size(), tr.events.size(), resid);
  if (!o.out.empty()) {
    write_tree(tr, o.out);
    nlohmann::json idx = index_json(tr, "trajectory");
    idx["directory"] = o.out;
    idx["filippov_residual"] = resid;
    out << idx.dump(2) << '\n';
    return;
  }
  // Without --out every branch goes to stdout, each introduced by a comment line.
  std::function<void(const Trajectory&)> walk = [&](const Trajectory& b) {
    if (!tr.children.empty()) out << "# branch " << b.id << '\n';
    write_csv(b, out);
    for (const auto& c : b.children) walk(c);
  };
  walk(tr);
}

inline void run_fixtures(const Options& o, std::ostream& out) {
  if (o.dump.empty()) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& name : fixture_names()) j.push_back(name);
    out << nlohmann::json{{"fixtures", j}}.dump(2) << '\n';
    return;
  }
  emit(to_json(fixture_from_uri(o.dump)), o.out, out);
}

}  // namespace detail

inline spdlog::level::level_enum log_level_from_env() {
  const char* v = std::getenv("FILIPPOV_LAB_LOG");
  if (!v || !*v) return spdlog::level::warn;
  return spdlog::level::from_str(v);
}

/// Runs one command line (without the program name) and returns the exit
/// status. Failures print an error JSON on err.
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  spdlog::logger log("filippov_lab", sink);
  log.set_level(log_level_from_env());
  log.set_pattern("[%l] %v");

  CLI::App app{"Well-posedness analysis and simulation of bimodal piecewise affine systems", "filippov_lab"};
  app.require_subcommand(1);
  Options o;

  auto add_tol = [&](CLI::App* c) {
    c->add_option("--tol-rank", o.tol.rank, "relative rank threshold")->capture_default_str();
    c->add_option("--tol-fact", o.tol.fact, "factorization residual tolerance")->capture_default_str();
    c->add_option("--tol-lex", o.tol.lex, "lexicographic zero threshold")->capture_default_str();
    c->add_option("--tol-diag", o.tol.diag, "minimum positive diagonal")->capture_default_str();
  };
  auto add_system = [&](CLI::App* c) { c->add_option("system", o.system, "JSON file or fixture:name?k=v")->required(); };

  CLI::App* cmd_analyze = app.add_subcommand("analyze", "well-posedness report");
  add_system(cmd_analyze);
  add_tol(cmd_analyze);
  cmd_analyze->add_option("--out", o.out, "write the report here instead of stdout");

  CLI::App* cmd_classify = app.add_subcommand("classify", "continuation type of one initial state");
  add_system(cmd_classify);
  add_tol(cmd_classify);
  cmd_classify->add_option("--state", o.state, "comma separated initial state")->required();
  cmd_classify->add_option("--surface-tol", o.sim.surface_tol, "surface band")->capture_default_str();
  cmd_classify->add_option("--out", o.out, "write the classification here instead of stdout");

  CLI::App* cmd_sim = app.add_subcommand("simulate", "integrate a Filippov solution");
  add_system(cmd_sim);
  add_tol(cmd_sim);
  cmd_sim->add_option("--state", o.state, "comma separated initial state")->required();
  cmd_sim->add_option("--t-end", o.sim.t_end, "final time")->capture_default_str();
  cmd_sim->add_option("--dt", o.sim.dt, "step size")->capture_default_str();
  cmd_sim->add_option("--event-tol", o.sim.event_tol, "event time tolerance")->capture_default_str();
  cmd_sim->add_option("--surface-tol", o.sim.surface_tol, "surface band")->capture_default_str();
  cmd_sim->add_option("--max-switches", o.sim.max_switches, "switches tolerated within 100 dt")->capture_default_str();
  cmd_sim->add_option("--branch-policy", o.branch_policy, "follow1, follow2 or explore:<depth>")->capture_default_str();
  cmd_sim->add_option("--out", o.out, "directory for per-branch CSVs and index.json");

  CLI::App* cmd_fixtures = app.add_subcommand("fixtures", "list built-in systems or dump one as JSON");
  cmd_fixtures->add_option("--dump", o.dump, "fixture URI to print, e.g. two_tank?u=0.5");
  cmd_fixtures->add_option("--out", o.out, "write the dump here instead of stdout");

  CLI::App* cmd_oracle = app.add_subcommand("oracle", "compare sampling oracles with the algebraic checkers");
  add_system(cmd_oracle);
  add_tol(cmd_oracle);
  cmd_oracle->add_option("--seed", o.seed, "random seed")->capture_default_str();
  cmd_oracle->add_option("--samples", o.samples, "draws per sampled implication")->capture_default_str();
  cmd_oracle->add_option("--out", o.out, "write the report here instead of stdout");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << error_json("UsageError", ex.what(), kExitInput).dump() << '\n';
    return kExitInput;
  }

  try {
    if (*cmd_fixtures) {
      detail::run_fixtures(o, out);
      return kExitOk;
    }
    const BimodalSystem sys = load_system(o.system);
    log.debug("loaded system with n = {}", sys.n());
    if (*cmd_analyze) {
      const WellPosednessReport rep = analyze(sys, o.tol);
      log.info("analyze: {} via {}", to_string(rep.overall.verdict), rep.overall.reason);
      detail::emit(to_json(rep), o.out, out);
    } else if (*cmd_classify) {
      const VectorXd xi = parse_state(o.state, sys.n());
      detail::emit(to_json(classify_initial_state(sys, xi, o.tol, o.sim.surface_tol)), o.out, out);
    } else if (*cmd_sim) {
      detail::run_simulate(sys, o, out, log);
    } else if (*cmd_oracle) {
      const nlohmann::json rep = detail::run_oracle(sys, o);
      log.info("oracle: agree = {}", rep["agree"].get<bool>());
      detail::emit(rep, o.out, out);
    }
  } catch (const Error& ex) {
    const int code = is_input_error(ex.kind()) ? kExitInput : kExitNumerical;
    err << error_json(to_string(ex.kind()), ex.what(), code).dump() << '\n';
    return code;
  } catch (const std::exception& ex) {
    err << error_json("InternalError", ex.what(), kExitNumerical).dump() << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}

}  // namespace filippov::cli
