#pragma once

// Command-line front end: ad, nash, best-response, limits, verify, replicate.
// Exit codes: 0 certified, 2 solved but a residual is out of tolerance,
// 3 invalid input, 4 solver failure.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "risksharing/builtin_scenarios.hpp"
#include "risksharing/bundle.hpp"
#include "risksharing/scenario.hpp"

namespace risksharing {

enum ExitCode : int {
  kExitCertified = 0,
  kExitResiduals = 2,
  kExitValidation = 3,
  kExitSolver = 4,
};

struct RunOptions {
  std::optional<double> tol;
  std::optional<int> max_iter;
  std::optional<std::uint64_t> seed;
  std::optional<int> quadrature_order;
  std::optional<std::size_t> samples;
  std::vector<std::string> hist;
  std::size_t bins = 40;
  std::optional<std::string> out;
  std::size_t agent = 0;
  bool truthful_others = false;
};

struct Stages {
  bool ad = false;
  bool nash = false;
  bool best_response = false;
  bool limits = false;
};

namespace detail {

inline std::string fmt(double x, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

inline std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

inline std::string join(const std::vector<double>& xs, int digits = 6) {
  std::string out = "(";
  for (std::size_t k = 0; k < xs.size(); ++k) out += (k ? ", " : "") + fmt(xs[k], digits);
  return out + ")";
}

/// ISO-8601 UTC; SOURCE_DATE_EPOCH pins it for reproducible builds.
inline std::string timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    try {
      t = static_cast<std::time_t>(std::stoll(epoch));
    } catch (const std::exception&) {
      throw ValidationError("SOURCE_DATE_EPOCH is not an integer");
    }
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Command-line flags override the scenario document before it is parsed,
/// so the echoed scenario is exactly what was solved.
inline Json apply_overrides(Json doc, const RunOptions& opt) {
  if (opt.tol || opt.max_iter) {
    if (!doc.contains("solver")) doc["solver"] = Json::object();
    if (opt.tol) doc["solver"]["tol"] = *opt.tol;
    if (opt.max_iter) doc["solver"]["max_iter"] = *opt.max_iter;
  }
  const bool touches_states = opt.seed || opt.quadrature_order || opt.samples;
  if (touches_states) {
    if (!doc.contains("states") || !doc["states"].is_object() ||
        doc["states"].value("model", "") != "gaussian") {
      throw ValidationError("--seed, --samples and --quadrature-order need a gaussian state model");
    }
    Json& st = doc["states"];
    if (opt.quadrature_order) {
      st.erase("samples");
      st.erase("seed");
      st["quadrature_order"] = *opt.quadrature_order;
    }
    if (opt.samples) {
      st.erase("quadrature_order");
      st["samples"] = *opt.samples;
    }
    if (opt.seed) st["seed"] = *opt.seed;
  }
  return doc;
}

struct Session {
  Scenario scenario;
  ModelStates states;
  std::optional<Market> market;
};

inline Session open_session(const Json& doc) {
  Session s{parse_scenario(doc), {}, std::nullopt};
  s.states = build_state_space(s.scenario);
  if (s.scenario.agents.size() >= 2) s.market.emplace(build_market(s.scenario, s.states));
  return s;
}

inline void add_histograms(ResultBundle& b, const Session& s, const RunOptions& opt) {
  if (opt.hist.empty()) return;
  std::vector<std::string> names = s.states.names;
  std::vector<RandomVariable> values = s.states.variables;
  std::vector<std::pair<std::string, Measure>> measures{{"P", s.states.space.baseline()}};
  for (std::size_t i = 0; i < b.beliefs.size(); ++i) {
    measures.emplace_back("P" + std::to_string(i), b.beliefs[i]);
  }
  if (b.arrow_debreu) {
    measures.emplace_back("Qstar", b.arrow_debreu->pricing);
    for (std::size_t i = 0; i < b.arrow_debreu->securities.size(); ++i) {
      names.push_back("Cstar" + std::to_string(i));
      values.push_back(b.arrow_debreu->securities[i]);
    }
  }
  if (b.nash) {
    measures.emplace_back("Qnash", b.nash->pricing);
    for (std::size_t i = 0; i < b.nash->securities.size(); ++i) {
      names.push_back("Cnash" + std::to_string(i));
      values.push_back(b.nash->securities[i]);
      measures.emplace_back("R" + std::to_string(i), b.nash->revealed[i]);
    }
  }
  if (b.best_response) {
    names.push_back("Cbr");
    values.push_back(b.best_response->response.security);
    measures.emplace_back("Rbr", b.best_response->response.reported);
  }
  for (const std::string& text : opt.hist) {
    const RandomVariable x = Expression::parse(text).evaluate(names, values, s.scenario.parameters);
    for (const auto& [name, m] : measures) b.histograms.push_back(histogram(text, name, x, m, opt.bins));
  }
}

inline ResultBundle run_stages(const Session& s, const Stages& st, const RunOptions& opt,
                               const std::string& command) {
  ResultBundle b;
  b.command = command;
  b.scenario = s.scenario.source;
  b.provenance.created = timestamp();
  if (const auto* g = std::get_if<GaussianModel>(&s.scenario.states)) {
    b.provenance.seed = g->seed;
    b.provenance.quadrature_order = g->quadrature_order;
    b.provenance.samples = g->samples;
  }
  b.labels = s.states.space.labels();
  b.baseline = s.states.space.baseline();
  b.variable_names = s.states.names;
  b.variables = s.states.variables;

  if (s.market) {
    const Market& m = *s.market;
    for (std::size_t i = 0; i < m.size(); ++i) {
      b.agent_names.push_back(s.scenario.agents[i].name);
      b.deltas.push_back(m.delta_i(i));
      b.beliefs.push_back(m.agent(i).beliefs);
    }
    if (st.ad || st.nash || st.best_response) b.arrow_debreu = solve_arrow_debreu(m);
    if (st.nash) {
      b.nash = solve_nash(m, *b.arrow_debreu, s.scenario.solver);
      b.diagnostics = compute_diagnostics(m, *b.arrow_debreu, *b.nash);
    }
    if (st.best_response) {
      if (opt.agent >= m.size()) {
        throw ValidationError("--agent " + std::to_string(opt.agent) + " is out of range");
      }
      BestResponseRecord r;
      r.agent = opt.agent;
      const bool scenario_reports =
          std::any_of(s.scenario.agents.begin(), s.scenario.agents.end(),
                      [](const AgentSpec& a) { return a.report.has_value(); });
      r.truthful_others = opt.truthful_others || !scenario_reports;
      r.others = r.truthful_others ? truthful_others(m, opt.agent)
                                   : others_of(build_reports(s.scenario, s.states, m), opt.agent);
      r.response = solve_best_response(m, opt.agent, r.others);
      b.best_response = std::move(r);
    }
  }
  if (st.limits) {
    const LimitSpec spec = s.scenario.limits.value_or(LimitSpec{});
    if (spec.mode == LimitSpec::Mode::both) {
      const RandomVariable xi0 = evaluate_on_states(spec.xi0, s.states, s.scenario.parameters);
      const RandomVariable xi1 = evaluate_on_states(spec.xi1, s.states, s.scenario.parameters);
      b.both_limits = both_limit_check(s.states.space.baseline(), xi0, xi1, spec.lambda0,
                                       spec.deltas, s.scenario.solver);
    } else {
      if (!s.market || s.market->size() != 2) {
        throw ValidationError("one-agent limits need exactly two agents");
      }
      const std::vector<double> deltas =
          s.scenario.limits ? spec.deltas : default_limit_deltas();
      b.limits = limit_report(s.market->agent(0).beliefs, s.market->agent(1), deltas,
                              s.scenario.solver);
    }
  }
  add_histograms(b, s, opt);
  certify(b);
  return b;
}

inline void print_ledger(std::ostream& out, const std::vector<Check>& ledger) {
  out << "residual ledger\n";
  for (const Check& c : ledger) {
    out << "  " << pad(c.name, 44) << pad(fmt(c.value, 3), 12)
        << (c.kind == Check::Kind::residual ? "<= " : ">= -") << pad(fmt(c.tolerance, 1), 9)
        << (c.ok() ? "ok" : "FAIL") << "\n";
  }
}

inline void print_bundle(std::ostream& out, const ResultBundle& b) {
  out << "scenario " << b.scenario.value("name", std::string("scenario")) << ": "
      << b.labels.size() << " states";
  if (!b.deltas.empty()) out << ", " << b.deltas.size() << " agents, deltas " << join(b.deltas);
  out << "\n";
  if (b.arrow_debreu) {
    const auto& ad = *b.arrow_debreu;
    out << "Arrow-Debreu\n";
    out << "  gains u*_i           " << join(ad.agent_gains) << "\n";
    out << "  aggregate u*         " << fmt(ad.aggregate_gain) << "\n";
  }
  if (b.nash) {
    const auto& e = *b.nash;
    out << "Nash (" << e.method << ", " << e.evaluations << " evaluations)\n";
    out << "  z                    " << join(e.z) << "\n";
    out << "  values u_i           " << join(e.agent_values) << "\n";
    out << "  aggregate u          " << fmt(e.aggregate_value) << "\n";
    out << "  distance             " << fmt(e.distance, 3) << "\n";
    std::vector<double> lo, hi;
    for (const auto& c : e.securities) {
      lo.push_back(c.min());
      hi.push_back(c.max());
    }
    out << "  security range       min " << join(lo, 4) << "  max " << join(hi, 4) << "\n";
    for (const auto& r : e.other_roots) out << "  further root         " << join(r) << "\n";
  }
  if (b.diagnostics) {
    const auto& d = *b.diagnostics;
    out << "Diagnostics\n";
    out << "  efficiency loss      " << fmt(d.efficiency_loss) << "\n";
    out << "  u_i - u*_i           " << join(d.per_agent_delta) << "\n";
    out << "  E_Q*[C_i]            " << join(d.undervaluation) << "\n";
    out << "  H(P_i|R_i)           " << join(d.belief_distance) << "\n";
  }
  if (b.best_response) {
    const auto& r = *b.best_response;
    out << "Best response of agent " << r.agent
        << (r.truthful_others ? " (others truthful)" : " (others as reported)") << "\n";
    out << "  zeta                 " << fmt(r.response.zeta) << "\n";
    out << "  value                " << fmt(r.response.response_value) << "\n";
    out << "  security range       [" << fmt(r.response.security.min(), 4) << ", "
        << fmt(r.response.security.max(), 4) << "]\n";
  }
  if (b.limits) {
    const auto& l = *b.limits;
    out << "One agent risk neutral\n";
    out << "  z_inf                " << fmt(l.z_infinity, 10) << "\n";
    out << "  AD gains (0, 1)      " << join({l.ad_gain_agent0, l.ad_gain_agent1}) << "\n";
    out << "  Nash gain / loss     " << join({l.gain_agent0, l.loss_agent1}) << "\n";
    out << "  " << pad("delta0", 10) << pad("|C*-lim|", 12) << pad("|C-lim|", 12)
        << pad("|Cbr-lim|", 12) << pad("|z-z_inf|", 12) << pad("gain gap0", 12) << "gain gap1\n";
    for (const auto& row : l.convergence_table) {
      out << "  " << pad(fmt(row.delta0), 10) << pad(fmt(row.ad_distance, 3), 12)
          << pad(fmt(row.nash_distance, 3), 12) << pad(fmt(row.best_response_distance, 3), 12)
          << pad(fmt(row.z_distance, 3), 12) << pad(fmt(row.gain_gap0, 3), 12)
          << fmt(row.gain_gap1, 3) << "\n";
    }
  }
  if (b.both_limits) {
    const auto& l = *b.both_limits;
    out << "Both agents risk neutral (lambda0 = " << fmt(l.lambda0) << ")\n";
    out << "  " << pad("delta", 10) << pad("|C*-lim|", 12) << pad("|C-lim/2|", 12) << "ratio\n";
    for (const auto& row : l.rows) {
      out << "  " << pad(fmt(row.delta), 10) << pad(fmt(row.ad_distance, 3), 12)
          << pad(fmt(row.nash_distance, 3), 12) << fmt(row.volume_ratio, 6) << "\n";
    }
  }
  for (const auto& h : b.histograms) {
    out << "histogram " << h.variable << " under " << h.measure << " on [" << fmt(h.lo, 4) << ", "
        << fmt(h.hi, 4) << "]: " << h.mass.size() << " bins\n";
  }
  print_ledger(out, b.ledger);
  out << (b.certified ? "certified" : "NOT certified") << "\n";
}

inline std::string default_out(const ResultBundle& b) {
  std::string name = b.scenario.value("name", std::string("scenario"));
  for (char& c : name) {
    if (c == '/' || c == '\\' || c == ' ') c = '_';
  }
  return name + "." + b.command + ".bundle.json";
}

inline int finish(std::ostream& out, const ResultBundle& b, const RunOptions& opt) {
  print_bundle(out, b);
  const std::string path = opt.out.value_or(default_out(b));
  write_bundle(path, b);
  out << "bundle written to " << path << "\n";
  return b.certified ? kExitCertified : kExitResiduals;
}

inline int run_scenario_command(std::ostream& out, const std::string& command, const Json& doc,
                                const Stages& st, const RunOptions& opt) {
  const Session s = open_session(apply_overrides(doc, opt));
  if ((st.ad || st.nash || st.best_response) && !s.market) {
    throw ValidationError(command + " needs at least two agents");
  }
  return finish(out, run_stages(s, st, opt, command), opt);
}

inline int run_verify(std::ostream& out, const std::string& path) {
  ResultBundle b = read_bundle(path);
  const bool claimed = b.certified;
  certify(b);
  out << "bundle " << path << " (" << b.command << ", created " << b.provenance.created << ")\n";
  print_ledger(out, b.ledger);
  if (claimed && !b.certified) out << "bundle claims certification but the ledger fails\n";
  out << (b.certified ? "verified" : "NOT verified") << "\n";
  return b.certified ? kExitCertified : kExitResiduals;
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Arrow-Debreu and Nash risk sharing for CARA agents with heterogeneous beliefs",
               "risksharing"};
  app.require_subcommand(1);
  RunOptions opt;
  std::string target;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--tol", opt.tol, "Nash acceptance tolerance on the distance, relative to delta")
        ->check(CLI::PositiveNumber);
    sub->add_option("--max-iter", opt.max_iter, "Fixed-point iterations per start")
        ->check(CLI::PositiveNumber);
    sub->add_option("--seed", opt.seed, "Seed for Monte Carlo states");
    sub->add_option("--quadrature-order", opt.quadrature_order, "Gauss-Hermite points per variable")
        ->check(CLI::Range(1, 400));
    sub->add_option("--samples", opt.samples, "Monte Carlo states instead of quadrature")
        ->check(CLI::PositiveNumber);
    sub->add_option("--hist", opt.hist,
                    "Variable or expression to bin (state variables, Cstar<i>, Cnash<i>, Cbr)");
    sub->add_option("--bins", opt.bins, "Number of histogram bins")->check(CLI::PositiveNumber);
    sub->add_option("--out", opt.out, "Bundle path (default <name>.<command>.bundle.json)");
  };

  auto* ad = app.add_subcommand("ad", "Solve the Arrow-Debreu equilibrium");
  auto* nash = app.add_subcommand("nash", "Solve the Nash equilibrium with diagnostics");
  auto* br = app.add_subcommand("best-response", "Best probability response of one agent");
  auto* limits = app.add_subcommand("limits", "Extreme risk tolerance analysis");
  auto* verify = app.add_subcommand("verify", "Recompute the residual ledger of a bundle");
  auto* replicate = app.add_subcommand("replicate", "Run a built-in scenario");
  for (auto* sub : {ad, nash, br, limits}) {
    sub->add_option("scenario", target, "Scenario file")->required()->check(CLI::ExistingFile);
    add_common(sub);
  }
  br->add_option("--agent", opt.agent, "Index of the strategic agent");
  br->add_flag("--truthful-others", opt.truthful_others,
               "Others report true beliefs even when the scenario gives reports");
  verify->add_option("bundle", target, "Bundle file")->required()->check(CLI::ExistingFile);
  replicate->add_option("name", target, "Built-in scenario")
      ->required()
      ->check(CLI::IsMember(builtin_scenario_names()));
  add_common(replicate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    app.exit(e, out, err);
    return kExitCertified;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitValidation;
  }

  try {
    if (verify->parsed()) return detail::run_verify(out, target);
    if (replicate->parsed()) {
      const Json doc = Json::parse(builtin_scenarios().find(target)->second);
      Stages st{true, true, true, false};
      st.limits = doc.contains("limits");
      if (!doc.contains("agents")) st = Stages{false, false, false, true};
      return detail::run_scenario_command(out, "replicate", doc, st, opt);
    }
    const Json doc = read_json_file(target);
    if (ad->parsed()) return detail::run_scenario_command(out, "ad", doc, {true}, opt);
    if (nash->parsed()) return detail::run_scenario_command(out, "nash", doc, {true, true}, opt);
    if (br->parsed()) {
      return detail::run_scenario_command(out, "best-response", doc, {true, false, true}, opt);
    }
    return detail::run_scenario_command(out, "limits", doc, {false, false, false, true}, opt);
  } catch (const NashSolveError& e) {
    err << "solver failure: " << e.what() << "\n  best z " << detail::join(e.best_z())
        << ", distance " << detail::fmt(e.best_distance(), 3) << "\n";
    return kExitSolver;
  } catch (const SolverError& e) {
    err << "solver failure: " << e.what() << "\n";
    return kExitSolver;
  } catch (const ValidationError& e) {
    err << "invalid input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "file error: " << e.what() << "\n";
    return kExitValidation;
  }
}

}  // namespace risksharing
