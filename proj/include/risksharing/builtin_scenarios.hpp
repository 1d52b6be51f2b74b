#pragma once

// Scenarios behind `replicate <name>`. The same documents ship as
// scenarios/<name>.json; a test keeps the two in sync.

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace risksharing {

inline const std::map<std::string, std::string_view, std::less<>>& builtin_scenarios() {
  static const std::map<std::string, std::string_view, std::less<>> table{
      {"example-2.7", R"json({
  "name": "example-2.7",
  "description": "Two agents with unit risk tolerance and common beliefs, exposed to standard normal endowments E0, E1 with correlation -0.5.",
  "states": {
    "model": "gaussian",
    "variables": ["E0", "E1"],
    "stddev": [1, 1],
    "correlation": [[1, -0.5], [-0.5, 1]],
    "quadrature_order": 48
  },
  "agents": [
    {"name": "0", "delta": 1, "beliefs": {"endowment": "E0"}},
    {"name": "1", "delta": 1, "beliefs": {"endowment": "E1"}}
  ]
})json"},
      {"beta-symmetric", R"json({
  "name": "beta-symmetric",
  "description": "Two agents with unit risk tolerance whose beliefs tilt a standard normal X by +beta and -beta.",
  "parameters": {"beta": 1},
  "states": {
    "model": "gaussian",
    "variables": ["X"],
    "covariance": [[1]],
    "quadrature_order": 64
  },
  "agents": [
    {"name": "0", "delta": 1, "beliefs": {"log_density": "beta * X"}},
    {"name": "1", "delta": 1, "beliefs": {"log_density": "-beta * X"}}
  ]
})json"},
      {"example-3.9", R"json({
  "name": "example-3.9",
  "description": "Three agents with unit risk tolerance and log-densities X0, X1, X2 jointly normal. The stated correlations are not positive semi-definite and are clipped to the nearest valid correlation matrix.",
  "states": {
    "model": "gaussian",
    "variables": ["X0", "X1", "X2"],
    "stddev": [0.4, 2.7, 1.1],
    "correlation": [[1, -0.9, 0.7], [-0.9, 1, -0.3], [0.7, -0.3, 1]],
    "psd_repair": "clip",
    "quadrature_order": 20
  },
  "agents": [
    {"name": "0", "delta": 1, "beliefs": {"log_density": "X0"}},
    {"name": "1", "delta": 1, "beliefs": {"log_density": "X1"}},
    {"name": "2", "delta": 1, "beliefs": {"log_density": "X2"}}
  ]
})json"},
      {"limit-one-agent", R"json({
  "name": "limit-one-agent",
  "description": "Two states. Agent 0 (beliefs 0.6/0.4) becomes risk neutral against agent 1 (beliefs 0.5/0.5, risk tolerance 1).",
  "states": {"model": "explicit", "labels": ["up", "down"], "weights": [0.5, 0.5]},
  "agents": [
    {"name": "0", "delta": 100, "beliefs": {"weights": [0.6, 0.4]}},
    {"name": "1", "delta": 1, "beliefs": {"weights": [0.5, 0.5]}}
  ],
  "limits": {"mode": "one-agent", "deltas": [100, 1000, 10000, 100000]}
})json"},
      {"limit-both", R"json({
  "name": "limit-both",
  "description": "Two states. Both risk tolerances grow with equal shares; beliefs tilt the common measure by xi_i / delta_i.",
  "states": {
    "model": "explicit",
    "labels": ["up", "down"],
    "weights": [0.5, 0.5],
    "variables": {"xi0": [1, -1], "xi1": [-1, 1]}
  },
  "limits": {"mode": "both", "lambda0": 0.5, "xi": ["xi0", "xi1"], "deltas": [10, 100, 1000, 10000]}
})json"},
  };
  return table;
}

inline std::vector<std::string> builtin_scenario_names() {
  std::vector<std::string> names;
  for (const auto& [name, text] : builtin_scenarios()) names.push_back(name);
  return names;
}

}  // namespace risksharing
