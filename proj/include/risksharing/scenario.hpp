#pragma once

// Scenario files: a JSON document with sections "states", "agents",
// "solver" and optionally "parameters" and "limits". The schema is
// documented in docs/scenario_format.md.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "risksharing/agents.hpp"
#include "risksharing/error.hpp"
#include "risksharing/expression.hpp"
#include "risksharing/limits.hpp"
#include "risksharing/measures.hpp"
#include "risksharing/nash.hpp"
#include "risksharing/quadrature.hpp"

namespace risksharing {

using Json = nlohmann::json;

struct ExplicitModel {
  std::vector<std::string> labels;
  std::vector<double> weights;
  std::vector<std::string> names;
  std::vector<std::vector<double>> values;
};

struct GaussianModel {
  std::vector<std::string> names;
  std::vector<double> mean;
  /// Resolved covariance, after any requested repair.
  std::vector<std::vector<double>> covariance;
  std::string psd_repair = "none";
  std::optional<int> quadrature_order;
  std::optional<std::size_t> samples;
  std::optional<std::uint64_t> seed;
};

using StateModel = std::variant<ExplicitModel, GaussianModel>;

struct BeliefSpec {
  enum class Kind { baseline, weights, log_density, endowment };
  Kind kind = Kind::baseline;
  std::vector<double> weights;
  std::string expression;
  /// Beliefs before the endowment is folded in; baseline when absent.
  std::shared_ptr<BeliefSpec> actual;
};

struct AgentSpec {
  std::string name;
  double delta = 1.0;
  BeliefSpec beliefs;
  /// Reported beliefs used by best-response runs; truthful when absent.
  std::optional<BeliefSpec> report;
};

struct LimitSpec {
  enum class Mode { one_agent, both };
  Mode mode = Mode::one_agent;
  std::vector<double> deltas;
  double lambda0 = 0.5;
  std::string xi0;
  std::string xi1;
};

struct Scenario {
  std::string name;
  Json source;
  StateModel states;
  Expression::Bindings parameters;
  std::vector<AgentSpec> agents;
  NashConfig solver;
  std::optional<LimitSpec> limits;
  std::size_t state_cap = kDefaultStateCap;
};

namespace detail {

inline void check_keys(const Json& obj, const std::string& where,
                       std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ValidationError(where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : obj.items()) {
    if (!ok.count(item.key())) {
      throw ValidationError(where + ": unknown key '" + item.key() + "'");
    }
  }
}

template <class T>
T get_as(const Json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ValidationError(where + ": missing '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(where + "." + key + ": " + e.what());
  }
}

template <class T>
std::optional<T> get_optional(const Json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  return get_as<T>(obj, key, where);
}

inline void require_finite(const std::vector<double>& v, const std::string& where) {
  for (double x : v) {
    if (!std::isfinite(x)) throw ValidationError(where + " has a non-finite entry");
  }
}

/// Clips negative eigenvalues to zero. With `unit_diagonal` the result is
/// rescaled back to a correlation matrix.
inline std::vector<std::vector<double>> clip_psd(const std::vector<std::vector<double>>& m,
                                                 bool unit_diagonal) {
  const auto d = static_cast<Eigen::Index>(m.size());
  Eigen::MatrixXd a(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      a(i, j) = m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  a = 0.5 * (a + a.transpose());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
  const Eigen::VectorXd ev = eig.eigenvalues().cwiseMax(0.0);
  Eigen::MatrixXd b = eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
  if (unit_diagonal) {
    const Eigen::VectorXd s = b.diagonal().cwiseSqrt().cwiseInverse();
    b = s.asDiagonal() * b * s.asDiagonal();
  }
  b = 0.5 * (b + b.transpose());
  std::vector<std::vector<double>> out(m.size(), std::vector<double>(m.size()));
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = b(i, j);
    }
  }
  return out;
}

inline void check_square(const std::vector<std::vector<double>>& m, std::size_t d,
                         const std::string& where) {
  if (m.size() != d) throw ValidationError(where + " must be " + std::to_string(d) + "x" +
                                           std::to_string(d));
  for (const auto& row : m) {
    if (row.size() != d) throw ValidationError(where + " must be square");
    require_finite(row, where);
  }
}

inline ExplicitModel parse_explicit(const Json& j) {
  check_keys(j, "states", {"model", "labels", "weights", "variables"});
  ExplicitModel m;
  m.weights = get_as<std::vector<double>>(j, "weights", "states");
  if (m.weights.empty()) throw ValidationError("states.weights must not be empty");
  require_finite(m.weights, "states.weights");
  if (auto labels = get_optional<std::vector<std::string>>(j, "labels", "states")) {
    if (labels->size() != m.weights.size()) {
      throw ValidationError("states.labels and states.weights differ in length");
    }
    m.labels = std::move(*labels);
  } else {
    for (std::size_t s = 0; s < m.weights.size(); ++s) m.labels.push_back("s" + std::to_string(s));
  }
  if (j.contains("variables")) {
    const Json& vars = j.at("variables");
    if (!vars.is_object()) throw ValidationError("states.variables must be an object");
    for (const auto& item : vars.items()) {
      std::vector<double> v;
      try {
        v = item.value().get<std::vector<double>>();
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError("states.variables." + item.key() + ": " + e.what());
      }
      if (v.size() != m.weights.size()) {
        throw ValidationError("states.variables." + item.key() + " has " +
                              std::to_string(v.size()) + " values for " +
                              std::to_string(m.weights.size()) + " states");
      }
      require_finite(v, "states.variables." + item.key());
      m.names.push_back(item.key());
      m.values.push_back(std::move(v));
    }
  }
  return m;
}

inline GaussianModel parse_gaussian(const Json& j) {
  check_keys(j, "states", {"model", "variables", "mean", "covariance", "stddev", "correlation",
                           "psd_repair", "quadrature_order", "samples", "seed"});
  GaussianModel g;
  g.names = get_as<std::vector<std::string>>(j, "variables", "states");
  const std::size_t d = g.names.size();
  if (d == 0) throw ValidationError("states.variables must name at least one variable");
  g.mean = get_optional<std::vector<double>>(j, "mean", "states").value_or(std::vector<double>(d));
  if (g.mean.size() != d) throw ValidationError("states.mean has the wrong length");
  require_finite(g.mean, "states.mean");
  g.psd_repair = get_optional<std::string>(j, "psd_repair", "states").value_or("none");
  if (g.psd_repair != "none" && g.psd_repair != "clip") {
    throw ValidationError("states.psd_repair must be \"none\" or \"clip\"");
  }
  const bool repair = g.psd_repair == "clip";

  const bool has_cov = j.contains("covariance");
  const bool has_corr = j.contains("stddev") || j.contains("correlation");
  if (has_cov == has_corr) {
    throw ValidationError("states: give either covariance, or stddev with correlation");
  }
  if (has_cov) {
    g.covariance = get_as<std::vector<std::vector<double>>>(j, "covariance", "states");
    check_square(g.covariance, d, "states.covariance");
    if (repair) g.covariance = clip_psd(g.covariance, false);
  } else {
    const auto sd = get_as<std::vector<double>>(j, "stddev", "states");
    if (sd.size() != d) throw ValidationError("states.stddev has the wrong length");
    for (double s : sd) {
      if (!(std::isfinite(s) && s >= 0.0)) throw ValidationError("states.stddev must be >= 0");
    }
    auto corr = get_optional<std::vector<std::vector<double>>>(j, "correlation", "states");
    std::vector<std::vector<double>> r(d, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < d; ++i) r[i][i] = 1.0;
    if (corr) {
      check_square(*corr, d, "states.correlation");
      for (std::size_t i = 0; i < d; ++i) {
        if ((*corr)[i][i] != 1.0) throw ValidationError("states.correlation needs a unit diagonal");
        for (std::size_t k = 0; k < d; ++k) {
          if (std::abs((*corr)[i][k]) > 1.0) {
            throw ValidationError("states.correlation entries must lie in [-1, 1]");
          }
        }
      }
      r = *corr;
    }
    if (repair) r = clip_psd(r, true);
    g.covariance.assign(d, std::vector<double>(d));
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t k = 0; k < d; ++k) g.covariance[i][k] = sd[i] * sd[k] * r[i][k];
    }
  }
  // Fails here, not later, when the matrix is not a covariance.
  (void)covariance_root(g.covariance);

  g.quadrature_order = get_optional<int>(j, "quadrature_order", "states");
  g.samples = get_optional<std::size_t>(j, "samples", "states");
  g.seed = get_optional<std::uint64_t>(j, "seed", "states");
  if (g.quadrature_order && g.samples) {
    throw ValidationError("states: quadrature_order and samples are mutually exclusive");
  }
  if (g.samples && !g.seed) throw ValidationError("states: sampling requires a seed");
  if (!g.samples && !g.quadrature_order) g.quadrature_order = 16;
  if (g.quadrature_order && (*g.quadrature_order < 1 || *g.quadrature_order > 400)) {
    throw ValidationError("states.quadrature_order must lie in [1, 400]");
  }
  return g;
}

inline BeliefSpec parse_beliefs(const Json& j, const std::string& where) {
  BeliefSpec b;
  if (j.is_null()) return b;
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s != "baseline") throw ValidationError(where + ": the only named belief is \"baseline\"");
    return b;
  }
  check_keys(j, where, {"weights", "log_density", "endowment", "actual"});
  const int given = int(j.contains("weights")) + int(j.contains("log_density")) +
                    int(j.contains("endowment"));
  if (given > 1) throw ValidationError(where + ": give one of weights, log_density, endowment");
  if (j.contains("actual") && !j.contains("endowment")) {
    throw ValidationError(where + ": 'actual' only applies together with 'endowment'");
  }
  if (j.contains("weights")) {
    b.kind = BeliefSpec::Kind::weights;
    b.weights = get_as<std::vector<double>>(j, "weights", where);
    require_finite(b.weights, where + ".weights");
  } else if (j.contains("log_density")) {
    b.kind = BeliefSpec::Kind::log_density;
    b.expression = get_as<std::string>(j, "log_density", where);
    (void)Expression::parse(b.expression);
  } else if (j.contains("endowment")) {
    b.kind = BeliefSpec::Kind::endowment;
    b.expression = get_as<std::string>(j, "endowment", where);
    (void)Expression::parse(b.expression);
    if (j.contains("actual")) {
      b.actual = std::make_shared<BeliefSpec>(parse_beliefs(j.at("actual"), where + ".actual"));
      if (b.actual->kind == BeliefSpec::Kind::endowment) {
        throw ValidationError(where + ".actual cannot itself carry an endowment");
      }
    }
  }
  return b;
}

inline LimitSpec parse_limits(const Json& j) {
  check_keys(j, "limits", {"mode", "deltas", "lambda0", "xi"});
  LimitSpec l;
  const auto mode = get_optional<std::string>(j, "mode", "limits").value_or("one-agent");
  if (mode == "one-agent") {
    l.mode = LimitSpec::Mode::one_agent;
    l.deltas = default_limit_deltas();
  } else if (mode == "both") {
    l.mode = LimitSpec::Mode::both;
    l.deltas = {1e1, 1e2, 1e3, 1e4};
    const auto xi = get_as<std::vector<std::string>>(j, "xi", "limits");
    if (xi.size() != 2) throw ValidationError("limits.xi must hold two expressions");
    l.xi0 = xi[0];
    l.xi1 = xi[1];
    (void)Expression::parse(l.xi0);
    (void)Expression::parse(l.xi1);
    l.lambda0 = get_optional<double>(j, "lambda0", "limits").value_or(0.5);
    if (!(l.lambda0 > 0.0 && l.lambda0 < 1.0)) {
      throw ValidationError("limits.lambda0 must lie in (0, 1)");
    }
  } else {
    throw ValidationError("limits.mode must be \"one-agent\" or \"both\"");
  }
  if (l.mode == LimitSpec::Mode::one_agent && (j.contains("xi") || j.contains("lambda0"))) {
    throw ValidationError("limits: xi and lambda0 belong to mode \"both\"");
  }
  if (auto d = get_optional<std::vector<double>>(j, "deltas", "limits")) l.deltas = std::move(*d);
  if (l.deltas.empty()) throw ValidationError("limits.deltas must not be empty");
  for (double d : l.deltas) {
    if (!(d >= kMinDelta && d <= kMaxDelta)) {
      throw ValidationError("limits.deltas entries must lie in [1e-9, 1e12]");
    }
  }
  return l;
}

inline NashConfig parse_solver(const Json& j) {
  check_keys(j, "solver", {"tol", "pricing_tol", "max_iter", "damping", "multistart",
                           "newton_iter", "simplex_iter", "root_separation"});
  NashConfig c;
  c.tol = get_optional<double>(j, "tol", "solver").value_or(c.tol);
  c.pricing_tol = get_optional<double>(j, "pricing_tol", "solver").value_or(c.pricing_tol);
  c.max_iter = get_optional<int>(j, "max_iter", "solver").value_or(c.max_iter);
  c.damping = get_optional<double>(j, "damping", "solver").value_or(c.damping);
  c.multistart = get_optional<bool>(j, "multistart", "solver").value_or(c.multistart);
  c.newton_iter = get_optional<int>(j, "newton_iter", "solver").value_or(c.newton_iter);
  c.simplex_iter = get_optional<int>(j, "simplex_iter", "solver").value_or(c.simplex_iter);
  c.root_separation =
      get_optional<double>(j, "root_separation", "solver").value_or(c.root_separation);
  if (!(c.tol > 0.0) || !(c.pricing_tol > 0.0)) {
    throw ValidationError("solver tolerances must be positive");
  }
  if (c.max_iter < 1 || c.newton_iter < 0 || c.simplex_iter < 0) {
    throw ValidationError("solver iteration budgets must be non-negative (max_iter >= 1)");
  }
  if (!(c.damping > 0.0 && c.damping <= 1.0)) {
    throw ValidationError("solver.damping must lie in (0, 1]");
  }
  return c;
}

}  // namespace detail

inline Scenario parse_scenario(const Json& j) {
  detail::check_keys(j, "scenario",
                     {"name", "description", "states", "parameters", "agents", "solver", "limits",
                      "state_cap"});
  Scenario sc;
  sc.source = j;
  sc.name = detail::get_optional<std::string>(j, "name", "scenario").value_or("scenario");
  sc.state_cap =
      detail::get_optional<std::size_t>(j, "state_cap", "scenario").value_or(kDefaultStateCap);

  const Json& states = j.contains("states") ? j.at("states") : Json();
  if (!states.is_object()) throw ValidationError("scenario: missing 'states' section");
  const auto model = detail::get_as<std::string>(states, "model", "states");
  if (model == "explicit") {
    sc.states = detail::parse_explicit(states);
  } else if (model == "gaussian") {
    sc.states = detail::parse_gaussian(states);
  } else {
    throw ValidationError("states.model must be \"explicit\" or \"gaussian\"");
  }

  if (j.contains("parameters")) {
    const Json& p = j.at("parameters");
    if (!p.is_object()) throw ValidationError("parameters must be an object");
    for (const auto& item : p.items()) {
      if (!item.value().is_number()) {
        throw ValidationError("parameters." + item.key() + " must be a number");
      }
      sc.parameters[item.key()] = item.value().get<double>();
    }
  }

  if (j.contains("limits")) sc.limits = detail::parse_limits(j.at("limits"));

  if (j.contains("agents")) {
    const Json& agents = j.at("agents");
    if (!agents.is_array()) throw ValidationError("agents must be an array");
    for (std::size_t k = 0; k < agents.size(); ++k) {
      const std::string where = "agents[" + std::to_string(k) + "]";
      const Json& a = agents[k];
      detail::check_keys(a, where, {"name", "delta", "beliefs", "report"});
      AgentSpec spec;
      spec.name = detail::get_optional<std::string>(a, "name", where).value_or(std::to_string(k));
      spec.delta = detail::get_as<double>(a, "delta", where);
      if (!(spec.delta >= kMinDelta && spec.delta <= kMaxDelta)) {
        throw ValidationError(where + ".delta must lie in [1e-9, 1e12]");
      }
      spec.beliefs = detail::parse_beliefs(a.contains("beliefs") ? a.at("beliefs") : Json(),
                                           where + ".beliefs");
      if (a.contains("report")) spec.report = detail::parse_beliefs(a.at("report"), where + ".report");
      sc.agents.push_back(std::move(spec));
    }
  }
  const bool both = sc.limits && sc.limits->mode == LimitSpec::Mode::both;
  if (sc.agents.size() < 2 && !both) {
    throw ValidationError("scenario: at least two agents are required");
  }

  sc.solver = j.contains("solver") ? detail::parse_solver(j.at("solver")) : NashConfig{};
  return sc;
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  return parse_scenario(read_json_file(path));
}

/// Realizes the state model: explicit passthrough, Gauss-Hermite grid or
/// seeded sample. Deterministic in the scenario.
inline ModelStates build_state_space(const Scenario& sc) {
  if (const auto* e = std::get_if<ExplicitModel>(&sc.states)) {
    if (e->weights.size() > sc.state_cap) {
      throw ValidationError("explicit model has more states than the cap of " +
                            std::to_string(sc.state_cap));
    }
    ModelStates out{StateSpace(e->labels, Measure::from_weights(e->weights)), e->names, {}};
    for (const auto& v : e->values) out.variables.emplace_back(v);
    return out;
  }
  const auto& g = std::get<GaussianModel>(sc.states);
  if (g.samples) {
    return gaussian_sample_states(g.names, g.mean, g.covariance, *g.samples, *g.seed, sc.state_cap);
  }
  return gaussian_quadrature_states(g.names, g.mean, g.covariance, *g.quadrature_order,
                                    sc.state_cap);
}

inline Measure realize_beliefs(const BeliefSpec& spec, const ModelStates& ms,
                               const Expression::Bindings& parameters, double delta) {
  const Measure& base = ms.space.baseline();
  switch (spec.kind) {
    case BeliefSpec::Kind::baseline:
      return base;
    case BeliefSpec::Kind::weights:
      if (spec.weights.size() != base.size()) {
        throw ValidationError("belief weights have " + std::to_string(spec.weights.size()) +
                              " entries for " + std::to_string(base.size()) + " states");
      }
      return Measure::from_weights(spec.weights);
    case BeliefSpec::Kind::log_density:
      return normalize_log_density(
          base, Expression::parse(spec.expression).evaluate(ms.names, ms.variables, parameters));
    case BeliefSpec::Kind::endowment: {
      const Measure actual =
          spec.actual ? realize_beliefs(*spec.actual, ms, parameters, delta) : base;
      const RandomVariable e =
          Expression::parse(spec.expression).evaluate(ms.names, ms.variables, parameters);
      return endowment_to_beliefs(actual, e, delta).beliefs;
    }
  }
  throw ValidationError("unknown belief specification");
}

inline Market build_market(const Scenario& sc, const ModelStates& ms) {
  if (sc.agents.size() < 2) throw ValidationError("scenario: at least two agents are required");
  std::vector<Agent> agents;
  for (const AgentSpec& a : sc.agents) {
    agents.push_back(Agent{a.delta, realize_beliefs(a.beliefs, ms, sc.parameters, a.delta)});
  }
  return Market(std::move(agents));
}

/// Reports of every agent: the scenario's report when given, else the beliefs.
inline std::vector<Measure> build_reports(const Scenario& sc, const ModelStates& ms,
                                          const Market& market) {
  std::vector<Measure> out;
  for (std::size_t i = 0; i < sc.agents.size(); ++i) {
    const AgentSpec& a = sc.agents[i];
    out.push_back(a.report ? realize_beliefs(*a.report, ms, sc.parameters, a.delta)
                           : market.agent(i).beliefs);
  }
  return out;
}

/// Named variable on the realized states, or an expression over them.
inline RandomVariable evaluate_on_states(const std::string& text, const ModelStates& ms,
                                         const Expression::Bindings& parameters) {
  return Expression::parse(text).evaluate(ms.names, ms.variables, parameters);
}

}  // namespace risksharing
