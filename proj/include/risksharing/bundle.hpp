#pragma once

// Result bundles: one JSON document holding the realized market, every
// solved object and a residual ledger that is recomputed from scratch on
// verification. Doubles are written in shortest round-trip form, so a
// write/read cycle is bit-exact. Schema: docs/bundle_format.md.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <system_error>
#include <unistd.h>
#include <utility>
#include <vector>

#include "json.hpp"

#include "risksharing/agents.hpp"
#include "risksharing/arrow_debreu.hpp"
#include "risksharing/best_response.hpp"
#include "risksharing/diagnostics.hpp"
#include "risksharing/error.hpp"
#include "risksharing/limits.hpp"
#include "risksharing/measures.hpp"
#include "risksharing/nash.hpp"

namespace risksharing {

inline constexpr const char* kBundleSchema = "risksharing.bundle";
inline constexpr int kBundleSchemaVersion = 1;
inline constexpr const char* kArtifactVersion = "1.0.0";

struct Provenance {
  std::string artifact_version = kArtifactVersion;
  std::optional<std::uint64_t> seed;
  std::optional<int> quadrature_order;
  std::optional<std::size_t> samples;
  std::string created;
};

struct BestResponseRecord {
  std::size_t agent = 0;
  bool truthful_others = true;
  std::vector<Measure> others;
  BestResponse response;
};

/// Equal-width bins over [lo, hi]; mass sums to one under `measure`.
struct Histogram {
  std::string variable;
  std::string measure;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> mass;
};

struct ResultBundle {
  std::string command;
  nlohmann::json scenario;
  Provenance provenance;
  std::vector<std::string> labels;
  Measure baseline;
  std::vector<std::string> variable_names;
  std::vector<RandomVariable> variables;
  std::vector<std::string> agent_names;
  std::vector<double> deltas;
  std::vector<Measure> beliefs;
  std::optional<ArrowDebreuEquilibrium> arrow_debreu;
  std::optional<NashEquilibrium> nash;
  std::optional<NashDiagnostics> diagnostics;
  std::optional<BestResponseRecord> best_response;
  std::optional<LimitReport> limits;
  std::optional<BothLimitReport> both_limits;
  std::vector<Histogram> histograms;
  std::vector<Check> ledger;
  bool certified = false;

  bool has_market() const { return deltas.size() >= 2; }
  Market market() const {
    std::vector<Agent> agents;
    for (std::size_t i = 0; i < deltas.size(); ++i) agents.push_back(Agent{deltas[i], beliefs[i]});
    return Market(std::move(agents));
  }
};

inline Histogram histogram(std::string variable, std::string measure_name, const RandomVariable& x,
                           const Measure& measure, std::size_t bins, double lo, double hi) {
  detail::require_same_size(x.size(), measure.size(), "histogram");
  if (bins < 1) throw ContractError("histogram: at least one bin is required");
  Histogram h{std::move(variable), std::move(measure_name), lo, hi, std::vector<double>(bins, 0.0)};
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t s = 0; s < x.size(); ++s) {
    std::size_t k = 0;
    if (width > 0.0) {
      const double pos = std::floor((x[s] - lo) / width);
      k = pos <= 0.0 ? 0 : std::min(bins - 1, static_cast<std::size_t>(pos));
    }
    h.mass[k] += measure.weight(s);
  }
  return h;
}

inline Histogram histogram(std::string variable, std::string measure_name, const RandomVariable& x,
                           const Measure& measure, std::size_t bins) {
  return histogram(std::move(variable), std::move(measure_name), x, measure, bins, x.min(), x.max());
}

namespace detail {

using nlohmann::json;

inline json num(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

inline double read_num(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw ValidationError("bundle: expected a number, got " + j.dump());
}

inline json nums(std::span<const double> v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

inline std::vector<double> read_nums(const json& j) {
  if (!j.is_array()) throw ValidationError("bundle: expected an array of numbers");
  std::vector<double> v;
  v.reserve(j.size());
  for (const auto& x : j) v.push_back(read_num(x));
  return v;
}

inline json rv(const RandomVariable& x) { return nums(x.values()); }
inline RandomVariable read_rv(const json& j) { return RandomVariable(read_nums(j)); }

inline json measure(const Measure& m) { return nums(m.log_weights()); }
inline Measure read_measure(const json& j) {
  return Measure::from_normalized_log_weights(read_nums(j));
}

inline json rvs(const std::vector<RandomVariable>& xs) {
  json a = json::array();
  for (const auto& x : xs) a.push_back(rv(x));
  return a;
}
inline std::vector<RandomVariable> read_rvs(const json& j) {
  std::vector<RandomVariable> out;
  for (const auto& x : j) out.push_back(read_rv(x));
  return out;
}

inline json measures(const std::vector<Measure>& ms) {
  json a = json::array();
  for (const auto& m : ms) a.push_back(measure(m));
  return a;
}
inline std::vector<Measure> read_measures(const json& j) {
  std::vector<Measure> out;
  for (const auto& x : j) out.push_back(read_measure(x));
  return out;
}

inline const json& at(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw ValidationError(std::string("bundle: missing field '") + key + "'");
  }
  return j.at(key);
}

inline const char* kind_name(Check::Kind k) { return k == Check::Kind::residual ? "residual" : "slack"; }

inline json checks(const std::vector<Check>& cs) {
  json a = json::array();
  for (const Check& c : cs) {
    a.push_back({{"name", c.name},
                 {"kind", kind_name(c.kind)},
                 {"value", num(c.value)},
                 {"tolerance", num(c.tolerance)},
                 {"ok", c.ok()}});
  }
  return a;
}
inline std::vector<Check> read_checks(const json& j) {
  std::vector<Check> out;
  for (const auto& c : j) {
    const auto kind = at(c, "kind").get<std::string>();
    out.push_back(Check{at(c, "name").get<std::string>(), read_num(at(c, "value")),
                        read_num(at(c, "tolerance")),
                        kind == "slack" ? Check::Kind::slack : Check::Kind::residual});
  }
  return out;
}

inline json to_json(const ArrowDebreuEquilibrium& ad) {
  return {{"pricing", measure(ad.pricing)},
          {"securities", rvs(ad.securities)},
          {"agent_gains", nums(ad.agent_gains)},
          {"aggregate_gain", num(ad.aggregate_gain)}};
}
inline ArrowDebreuEquilibrium read_ad(const json& j) {
  return {read_measure(at(j, "pricing")), read_rvs(at(j, "securities")),
          read_nums(at(j, "agent_gains")), read_num(at(j, "aggregate_gain"))};
}

inline json to_json(const NashEquilibrium& e) {
  json roots = json::array();
  for (const auto& r : e.other_roots) roots.push_back(nums(r));
  return {{"z", nums(e.z)},
          {"securities", rvs(e.securities)},
          {"pricing", measure(e.pricing)},
          {"L", rv(e.L)},
          {"log_theta", rvs(e.log_theta)},
          {"revealed", measures(e.revealed)},
          {"agent_values", nums(e.agent_values)},
          {"aggregate_value", num(e.aggregate_value)},
          {"distance", num(e.distance)},
          {"prices", nums(e.prices)},
          {"other_roots", roots},
          {"method", e.method},
          {"evaluations", e.evaluations},
          {"trace", nums(e.trace)}};
}
inline NashEquilibrium read_nash(const json& j) {
  NashEquilibrium e;
  e.z = read_nums(at(j, "z"));
  e.securities = read_rvs(at(j, "securities"));
  e.pricing = read_measure(at(j, "pricing"));
  e.L = read_rv(at(j, "L"));
  e.log_theta = read_rvs(at(j, "log_theta"));
  e.revealed = read_measures(at(j, "revealed"));
  e.agent_values = read_nums(at(j, "agent_values"));
  e.aggregate_value = read_num(at(j, "aggregate_value"));
  e.distance = read_num(at(j, "distance"));
  e.prices = read_nums(at(j, "prices"));
  for (const auto& r : at(j, "other_roots")) e.other_roots.push_back(read_nums(r));
  e.method = at(j, "method").get<std::string>();
  e.evaluations = at(j, "evaluations").get<int>();
  e.trace = read_nums(at(j, "trace"));
  return e;
}

inline json to_json(const NashDiagnostics& d) {
  return {{"efficiency_loss", num(d.efficiency_loss)},
          {"per_agent_delta", nums(d.per_agent_delta)},
          {"marginal_measures", measures(d.marginal_measures)},
          {"alpha_weights", nums(d.alpha_weights)},
          {"entropy_terms", nums(d.entropy_terms)},
          {"undervaluation", nums(d.undervaluation)},
          {"belief_distance", nums(d.belief_distance)},
          {"marginal_prices", nums(d.marginal_prices)},
          {"checks", checks(d.checks)}};
}
inline NashDiagnostics read_diagnostics(const json& j) {
  NashDiagnostics d;
  d.efficiency_loss = read_num(at(j, "efficiency_loss"));
  d.per_agent_delta = read_nums(at(j, "per_agent_delta"));
  d.marginal_measures = read_measures(at(j, "marginal_measures"));
  d.alpha_weights = read_nums(at(j, "alpha_weights"));
  d.entropy_terms = read_nums(at(j, "entropy_terms"));
  d.undervaluation = read_nums(at(j, "undervaluation"));
  d.belief_distance = read_nums(at(j, "belief_distance"));
  d.marginal_prices = read_nums(at(j, "marginal_prices"));
  d.checks = read_checks(at(j, "checks"));
  return d;
}

inline json to_json(const BestResponseRecord& b) {
  const BestResponse& r = b.response;
  return {{"agent", b.agent},
          {"truthful_others", b.truthful_others},
          {"others", measures(b.others)},
          {"reported", measure(r.reported)},
          {"security", rv(r.security)},
          {"log_d", rv(r.log_d)},
          {"valuation", measure(r.valuation)},
          {"zeta", num(r.zeta)},
          {"response_value", num(r.response_value)},
          {"root_residual", num(r.root_residual)}};
}
inline BestResponseRecord read_best_response(const json& j) {
  BestResponseRecord b;
  b.agent = at(j, "agent").get<std::size_t>();
  b.truthful_others = at(j, "truthful_others").get<bool>();
  b.others = read_measures(at(j, "others"));
  b.response.reported = read_measure(at(j, "reported"));
  b.response.security = read_rv(at(j, "security"));
  b.response.log_d = read_rv(at(j, "log_d"));
  b.response.valuation = read_measure(at(j, "valuation"));
  b.response.zeta = read_num(at(j, "zeta"));
  b.response.response_value = read_num(at(j, "response_value"));
  b.response.root_residual = read_num(at(j, "root_residual"));
  return b;
}

inline json to_json(const LimitReport& r) {
  json rows = json::array();
  for (const auto& row : r.convergence_table) {
    rows.push_back({{"delta0", num(row.delta0)},
                    {"ad_distance", num(row.ad_distance)},
                    {"nash_distance", num(row.nash_distance)},
                    {"best_response_distance", num(row.best_response_distance)},
                    {"z_distance", num(row.z_distance)},
                    {"gain_gap0", num(row.gain_gap0)},
                    {"gain_gap1", num(row.gain_gap1)}});
  }
  return {{"limiting_ad_security", rv(r.limiting_ad_security)},
          {"ad_gain_agent0", num(r.ad_gain_agent0)},
          {"ad_gain_agent1", num(r.ad_gain_agent1)},
          {"limiting_nash_security", rv(r.limiting_nash_security)},
          {"z_infinity", num(r.z_infinity)},
          {"limiting_pricing", measure(r.limiting_pricing)},
          {"gain_agent0", num(r.gain_agent0)},
          {"loss_agent1", num(r.loss_agent1)},
          {"root_residual", num(r.root_residual)},
          {"accounting_residual", num(r.accounting_residual)},
          {"convergence_table", rows}};
}
inline LimitReport read_limits(const json& j) {
  LimitReport r;
  r.limiting_ad_security = read_rv(at(j, "limiting_ad_security"));
  r.ad_gain_agent0 = read_num(at(j, "ad_gain_agent0"));
  r.ad_gain_agent1 = read_num(at(j, "ad_gain_agent1"));
  r.limiting_nash_security = read_rv(at(j, "limiting_nash_security"));
  r.z_infinity = read_num(at(j, "z_infinity"));
  r.limiting_pricing = read_measure(at(j, "limiting_pricing"));
  r.gain_agent0 = read_num(at(j, "gain_agent0"));
  r.loss_agent1 = read_num(at(j, "loss_agent1"));
  r.root_residual = read_num(at(j, "root_residual"));
  r.accounting_residual = read_num(at(j, "accounting_residual"));
  for (const auto& row : at(j, "convergence_table")) {
    r.convergence_table.push_back(LimitConvergenceRow{
        read_num(at(row, "delta0")), read_num(at(row, "ad_distance")),
        read_num(at(row, "nash_distance")), read_num(at(row, "best_response_distance")),
        read_num(at(row, "z_distance")), read_num(at(row, "gain_gap0")),
        read_num(at(row, "gain_gap1"))});
  }
  return r;
}

inline json to_json(const BothLimitReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"delta", num(row.delta)},
                    {"ad_distance", num(row.ad_distance)},
                    {"nash_distance", num(row.nash_distance)},
                    {"volume_ratio", num(row.volume_ratio)}});
  }
  return {{"lambda0", num(r.lambda0)},
          {"xi0", rv(r.xi0)},
          {"xi1", rv(r.xi1)},
          {"limiting_ad_security", rv(r.limiting_ad_security)},
          {"limiting_nash_security", rv(r.limiting_nash_security)},
          {"rows", rows}};
}
inline BothLimitReport read_both_limits(const json& j) {
  BothLimitReport r;
  r.lambda0 = read_num(at(j, "lambda0"));
  r.xi0 = read_rv(at(j, "xi0"));
  r.xi1 = read_rv(at(j, "xi1"));
  r.limiting_ad_security = read_rv(at(j, "limiting_ad_security"));
  r.limiting_nash_security = read_rv(at(j, "limiting_nash_security"));
  for (const auto& row : at(j, "rows")) {
    r.rows.push_back(BothLimitRow{read_num(at(row, "delta")), read_num(at(row, "ad_distance")),
                                  read_num(at(row, "nash_distance")),
                                  read_num(at(row, "volume_ratio"))});
  }
  return r;
}

}  // namespace detail

inline nlohmann::json bundle_to_json(const ResultBundle& b) {
  using detail::num;
  using nlohmann::json;
  json prov = {{"artifact_version", b.provenance.artifact_version},
               {"created", b.provenance.created}};
  prov["seed"] = b.provenance.seed ? json(*b.provenance.seed) : json();
  prov["quadrature_order"] =
      b.provenance.quadrature_order ? json(*b.provenance.quadrature_order) : json();
  prov["samples"] = b.provenance.samples ? json(*b.provenance.samples) : json();

  json vars = json::object();
  for (std::size_t k = 0; k < b.variable_names.size(); ++k) {
    vars[b.variable_names[k]] = detail::rv(b.variables[k]);
  }
  json agents = json::array();
  for (std::size_t i = 0; i < b.deltas.size(); ++i) {
    agents.push_back({{"name", i < b.agent_names.size() ? b.agent_names[i] : std::to_string(i)},
                      {"delta", num(b.deltas[i])},
                      {"log_beliefs", detail::measure(b.beliefs[i])}});
  }
  json hist = json::array();
  for (const Histogram& h : b.histograms) {
    hist.push_back({{"variable", h.variable},
                    {"measure", h.measure},
                    {"lo", num(h.lo)},
                    {"hi", num(h.hi)},
                    {"mass", detail::nums(h.mass)}});
  }

  json j = {{"schema", kBundleSchema},
            {"schema_version", kBundleSchemaVersion},
            {"command", b.command},
            {"provenance", prov},
            {"scenario", b.scenario},
            {"states",
             {{"labels", b.labels},
              {"log_weights", detail::measure(b.baseline)},
              {"variables", vars}}},
            {"agents", agents}};
  j["arrow_debreu"] = b.arrow_debreu ? detail::to_json(*b.arrow_debreu) : json();
  j["nash"] = b.nash ? detail::to_json(*b.nash) : json();
  j["diagnostics"] = b.diagnostics ? detail::to_json(*b.diagnostics) : json();
  j["best_response"] = b.best_response ? detail::to_json(*b.best_response) : json();
  j["limits"] = b.limits ? detail::to_json(*b.limits) : json();
  j["both_limits"] = b.both_limits ? detail::to_json(*b.both_limits) : json();
  j["histograms"] = hist;
  j["ledger"] = detail::checks(b.ledger);
  j["certified"] = b.certified;
  return j;
}

inline ResultBundle bundle_from_json(const nlohmann::json& j) {
  using detail::at;
  try {
    if (at(j, "schema").get<std::string>() != kBundleSchema) {
      throw ValidationError("not a result bundle (schema " + at(j, "schema").dump() + ")");
    }
    if (at(j, "schema_version").get<int>() != kBundleSchemaVersion) {
      throw ValidationError("unsupported bundle schema version " + at(j, "schema_version").dump());
    }
    ResultBundle b;
    b.command = at(j, "command").get<std::string>();
    b.scenario = at(j, "scenario");
    const auto& prov = at(j, "provenance");
    b.provenance.artifact_version = at(prov, "artifact_version").get<std::string>();
    b.provenance.created = at(prov, "created").get<std::string>();
    if (!at(prov, "seed").is_null()) b.provenance.seed = prov.at("seed").get<std::uint64_t>();
    if (!at(prov, "quadrature_order").is_null()) {
      b.provenance.quadrature_order = prov.at("quadrature_order").get<int>();
    }
    if (!at(prov, "samples").is_null()) b.provenance.samples = prov.at("samples").get<std::size_t>();

    const auto& states = at(j, "states");
    b.labels = at(states, "labels").get<std::vector<std::string>>();
    b.baseline = detail::read_measure(at(states, "log_weights"));
    detail::require_same_size(b.labels.size(), b.baseline.size(), "bundle states");
    for (const auto& item : at(states, "variables").items()) {
      b.variable_names.push_back(item.key());
      b.variables.push_back(detail::read_rv(item.value()));
    }
    for (const auto& a : at(j, "agents")) {
      b.agent_names.push_back(at(a, "name").get<std::string>());
      b.deltas.push_back(detail::read_num(at(a, "delta")));
      b.beliefs.push_back(detail::read_measure(at(a, "log_beliefs")));
    }
    if (!at(j, "arrow_debreu").is_null()) b.arrow_debreu = detail::read_ad(j.at("arrow_debreu"));
    if (!at(j, "nash").is_null()) b.nash = detail::read_nash(j.at("nash"));
    if (!at(j, "diagnostics").is_null()) {
      b.diagnostics = detail::read_diagnostics(j.at("diagnostics"));
    }
    if (!at(j, "best_response").is_null()) {
      b.best_response = detail::read_best_response(j.at("best_response"));
    }
    if (!at(j, "limits").is_null()) b.limits = detail::read_limits(j.at("limits"));
    if (!at(j, "both_limits").is_null()) b.both_limits = detail::read_both_limits(j.at("both_limits"));
    for (const auto& h : at(j, "histograms")) {
      b.histograms.push_back(Histogram{at(h, "variable").get<std::string>(),
                                       at(h, "measure").get<std::string>(),
                                       detail::read_num(at(h, "lo")), detail::read_num(at(h, "hi")),
                                       detail::read_nums(at(h, "mass"))});
    }
    b.ledger = detail::read_checks(at(j, "ledger"));
    b.certified = at(j, "certified").get<bool>();
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed bundle: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ValidationError(std::string("malformed bundle: ") + e.what());
  }
}

inline std::string bundle_to_string(const ResultBundle& b) {
  return bundle_to_json(b).dump(1) + "\n";
}

/// Writes next to the target and renames, so readers never see a partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw ValidationError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw ValidationError("cannot move bundle into place at " + path.string() + ": " +
                          ec.message());
  }
}

inline void write_bundle(const std::filesystem::path& path, const ResultBundle& b) {
  write_file_atomic(path, bundle_to_string(b));
}

inline ResultBundle read_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return bundle_from_json(j);
}

// ---------------------------------------------------------------------------
// Residual ledger

inline constexpr double kLedgerTolerance = 1e-8;
inline constexpr double kLedgerTightTolerance = 1e-10;

namespace detail {

class LedgerBuilder {
 public:
  void residual(std::string name, double value, double tol) {
    checks_.push_back(Check{std::move(name), value, tol, Check::Kind::residual});
  }
  void slack(std::string name, double value, double tol = kBoundTolerance) {
    checks_.push_back(Check{std::move(name), value, tol, Check::Kind::slack});
  }
  void add(const std::string& prefix, const std::vector<Check>& cs) {
    for (Check c : cs) {
      c.name = prefix + c.name;
      checks_.push_back(std::move(c));
    }
  }
  std::vector<Check> take() { return std::move(checks_); }

 private:
  std::vector<Check> checks_;
};

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double sum_sup(std::span<const RandomVariable> cs, std::size_t states) {
  double worst = 0.0;
  for (std::size_t s = 0; s < states; ++s) {
    CompensatedSum sum;
    for (const auto& c : cs) sum.add(c[s]);
    worst = std::max(worst, std::abs(sum.value()));
  }
  return worst;
}

/// min over consecutive rows of (previous - next); negative if a distance grew.
template <class Row, class Get>
double monotone_slack(const std::vector<Row>& rows, Get get) {
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < rows.size(); ++k) worst = std::min(worst, get(rows[k - 1]) - get(rows[k]));
  return rows.size() < 2 ? 0.0 : worst;
}

inline void check_market_shapes(const ResultBundle& b, const Market& market) {
  const std::size_t n = market.size();
  const std::size_t states = market.states();
  auto rvs_ok = [&](const std::vector<RandomVariable>& xs) {
    if (xs.size() != n) return false;
    return std::all_of(xs.begin(), xs.end(), [&](const auto& x) { return x.size() == states; });
  };
  if (b.arrow_debreu && (!rvs_ok(b.arrow_debreu->securities) ||
                         b.arrow_debreu->pricing.size() != states ||
                         b.arrow_debreu->agent_gains.size() != n)) {
    throw ValidationError("bundle: Arrow-Debreu section does not match the market");
  }
  if (b.nash && (!rvs_ok(b.nash->securities) || !rvs_ok(b.nash->log_theta) || b.nash->z.size() != n ||
                 b.nash->revealed.size() != n || b.nash->pricing.size() != states ||
                 b.nash->agent_values.size() != n || b.nash->L.size() != states)) {
    throw ValidationError("bundle: Nash section does not match the market");
  }
  if (b.best_response && (b.best_response->agent >= n || b.best_response->others.size() != n - 1 ||
                          b.best_response->response.security.size() != states ||
                          b.best_response->response.log_d.size() != states)) {
    throw ValidationError("bundle: best-response section does not match the market");
  }
}

}  // namespace detail

/// Recomputes every invariant from the raw numbers in the bundle. Nothing
/// stored as a by-product (ledger, diagnostics) is trusted.
inline std::vector<Check> build_ledger(const ResultBundle& b) {
  detail::LedgerBuilder led;
  if (b.baseline.size() != b.labels.size()) {
    throw ValidationError("bundle: state labels and baseline differ in length");
  }

  if (b.has_market()) {
    const Market market = b.market();
    detail::check_market_shapes(b, market);
    const double scale = std::max(1.0, market.delta());
    const std::size_t states = market.states();
    const ArrowDebreuEquilibrium ad = solve_arrow_debreu(market);

    if (b.arrow_debreu) {
      const ArrowDebreuEquilibrium& s = *b.arrow_debreu;
      led.residual("ad.pricing", weight_distance(s.pricing, ad.pricing), kLedgerTightTolerance);
      double worst = 0.0;
      double gains = 0.0;
      double prices = 0.0;
      for (std::size_t i = 0; i < market.size(); ++i) {
        const RandomVariable direct =
            sharing_rule_security(market.delta_i(i), market.agent(i).beliefs, s.pricing);
        worst = std::max(worst, sup_distance(s.securities[i], direct));
        gains = std::max(
            gains, std::abs(s.agent_gains[i] - cara_utility(market.agent(i), s.securities[i])));
        prices = std::max(prices, std::abs(expect(s.pricing, s.securities[i])));
      }
      led.residual("ad.sharing_rule", worst, kLedgerTolerance * scale);
      led.residual("ad.clearing", detail::sum_sup(s.securities, states), kLedgerTolerance * scale);
      led.residual("ad.zero_price", prices, kLedgerTolerance * scale);
      led.residual("ad.agent_gains", gains, kLedgerTolerance * scale);
    }

    if (b.nash) {
      const NashEquilibrium& e = *b.nash;
      const std::size_t n = market.size();
      double z_sum = 0.0;
      for (double z : e.z) z_sum += z;
      led.residual("nash.z_sum", std::abs(z_sum), kLedgerTolerance * scale);
      led.residual("nash.clearing", detail::sum_sup(e.securities, states), kLedgerTolerance * scale);

      double bound = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) {
        const double upper = static_cast<double>(n - 1) * market.delta() + market.delta_i(i);
        bound = std::min(bound, e.securities[i].min() + market.delta_minus(i));
        bound = std::min(bound, upper - e.securities[i].max());
      }
      led.slack("nash.security_bounds", bound, 0.0);

      double theta = 0.0;
      std::vector<double> l(states, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const RandomVariable c = e.log_theta[i].map(
            [dm = market.delta_minus(i)](double t) { return dm * std::expm1(t); });
        theta = std::max(theta, sup_distance(c, e.securities[i]));
        for (std::size_t s = 0; s < states; ++s) l[s] += market.lambda(i) * e.log_theta[i][s];
      }
      led.residual("nash.log_theta", theta, kLedgerTolerance * scale);
      led.residual("nash.c_system", c_system_residual_log(market, ad, e.z, e.log_theta),
                   kLedgerTolerance * scale);
      const RandomVariable lv(l);
      led.residual("nash.L", sup_distance(lv, e.L), kLedgerTolerance);
      const Measure q = normalize_log_density(ad.pricing, -lv);
      led.residual("nash.pricing_measure", weight_distance(q, e.pricing), kLedgerTightTolerance);

      std::vector<double> prices(n);
      double revealed = 0.0;
      double values = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        prices[i] = expect(e.pricing, e.securities[i]);
        const Measure r = normalize_log_density(market.agent(i).beliefs, -e.log_theta[i]);
        revealed = std::max(revealed, weight_distance(r, e.revealed[i]));
        revealed = std::max(revealed, weight_distance(
                                          r, revealed_beliefs_from_pricing(market, i, e.securities[i],
                                                                           e.pricing)));
        values = std::max(values,
                          std::abs(e.agent_values[i] - cara_utility(market.agent(i), e.securities[i])));
      }
      led.residual("nash.zero_price", detail::max_abs(prices), kLedgerTolerance * scale);
      led.residual("nash.distance", distance_from_prices(market, prices), kLedgerTolerance * scale);
      led.residual("nash.revealed_beliefs", revealed, kLedgerTightTolerance);
      led.residual("nash.agent_values", values, kLedgerTolerance * scale);

      const NashDiagnostics dg = compute_diagnostics(market, ad, e);
      led.add("diagnostics.", dg.checks);
    }

    if (b.best_response) {
      const BestResponseRecord& r = *b.best_response;
      const std::size_t i = r.agent;
      const BestResponse& br = r.response;
      const std::vector<Measure> all = detail::full_profile(r.others, i, br.reported);
      const Measure q = geometric_mean_measure(all, market.lambdas());
      const RandomVariable c = sharing_rule_security(market.delta_i(i), br.reported, q);
      led.residual("best_response.sharing_rule", sup_distance(c, br.security),
                   kLedgerTolerance * scale);
      const RandomVariable r_minus = counterparty_log_density(market, i, r.others);
      const double dm = market.delta_minus(i);
      led.slack("best_response.lower_bound", br.security.min() + dm, 0.0);
      led.residual("best_response.log_d",
                   sup_distance(br.log_d.map([dm](double t) { return dm * std::expm1(t); }),
                                br.security),
                   kLedgerTolerance * scale);
      led.residual("best_response.reported",
                   weight_distance(normalize_log_density(market.agent(i).beliefs, -br.log_d),
                                   br.reported),
                   kLedgerTightTolerance);
      const Measure qi = best_response_valuation(market, i, br.log_d, r_minus);
      led.residual("best_response.root",
                   std::abs(expect(qi, br.log_d.map([](double t) { return std::exp(t); })) - 1.0),
                   kLedgerTolerance);
      led.residual("best_response.zeta_formula",
                   std::abs(br.zeta - best_response_zeta_formula(market, i, br.security, r.others)),
                   kLedgerTolerance * scale);
      led.residual("best_response.first_order",
                   sup_distance(solve_inner_log_D(market, i, br.zeta, r_minus), br.log_d),
                   kLedgerTolerance);
      led.residual("best_response.value",
                   std::abs(br.response_value - response_value(market, i, br.reported, r.others)),
                   kLedgerTolerance * scale);
    }

    if (b.limits) {
      const LimitReport& lr = *b.limits;
      const Measure& p0 = market.agent(0).beliefs;
      const Agent& a1 = market.agent(1);
      if (market.size() != 2) throw ValidationError("bundle: limits need a two-agent market");
      const LimitingArrowDebreu lad = limiting_arrow_debreu(p0, a1);
      led.residual("limits.ad_security", sup_distance(lad.security, lr.limiting_ad_security),
                   kLedgerTolerance * std::max(1.0, a1.delta));
      led.residual("limits.root", std::abs(limiting_root_function(p0, a1.delta, lr.z_infinity,
                                                                   lad.security)),
                   kLedgerTightTolerance);
      const RandomVariable c = limiting_security(a1.delta, lr.z_infinity, lad.security);
      led.residual("limits.nash_security", sup_distance(c, lr.limiting_nash_security),
                   kLedgerTolerance * std::max(1.0, a1.delta));
      led.slack("limits.nash_lower_bound", lr.limiting_nash_security.min() + a1.delta, 0.0);
      const LimitingNash ln{lr.z_infinity, lr.limiting_nash_security, lr.limiting_pricing, 0.0};
      led.residual("limits.accounting", limiting_accounting_residual(p0, a1, ln), kLedgerTolerance);
      const LimitingGains g = limiting_gains(p0, a1, ln);
      led.residual("limits.gains",
                   std::max(std::abs(g.gain_agent0 - lr.gain_agent0),
                            std::abs(g.loss_agent1 - lr.loss_agent1)),
                   kLedgerTolerance);
      const auto& rows = lr.convergence_table;
      led.slack("limits.monotone_ad",
                detail::monotone_slack(rows, [](const auto& r) { return r.ad_distance; }));
      led.slack("limits.monotone_nash",
                detail::monotone_slack(rows, [](const auto& r) { return r.nash_distance; }));
      led.slack("limits.monotone_best_response",
                detail::monotone_slack(rows, [](const auto& r) { return r.best_response_distance; }));
    }
  }

  if (b.both_limits) {
    const BothLimitReport& r = *b.both_limits;
    detail::require_same_size(b.baseline.size(), r.xi0.size(), "bundle both_limits");
    const RandomVariable xi0 = r.xi0 - expect(b.baseline, r.xi0);
    const RandomVariable xi1 = r.xi1 - expect(b.baseline, r.xi1);
    const RandomVariable c = xi0 * (1.0 - r.lambda0) - xi1 * r.lambda0;
    const double scale = std::max(1.0, c.sup_norm());
    led.residual("both_limits.ad_formula", sup_distance(c, r.limiting_ad_security),
                 kLedgerTolerance * scale);
    led.residual("both_limits.nash_formula", sup_distance(c * 0.5, r.limiting_nash_security),
                 kLedgerTolerance * scale);
    led.slack("both_limits.monotone_nash",
              detail::monotone_slack(r.rows, [](const auto& row) { return row.nash_distance; }));
  }
  return led.take();
}

inline bool ledger_ok(const std::vector<Check>& ledger) {
  return std::all_of(ledger.begin(), ledger.end(), [](const Check& c) { return c.ok(); });
}

/// Fills the ledger and the certified flag.
inline void certify(ResultBundle& b) {
  b.ledger = build_ledger(b);
  b.certified = ledger_ok(b.ledger);
}

}  // namespace risksharing
