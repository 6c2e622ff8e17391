#include <cmath>
#include <map>

#include "json.hpp"
#include "probode/experiments.hpp"

namespace probode::experiments {

namespace {

using nlohmann::json;

json fn_problem(double T) {
  return json{{"kind", "fitzhugh_nagumo"}, {"a", 0.2}, {"b", 0.2}, {"c", 3.0},
              {"v0", -1.0},                {"r0", 1.0}, {"T", T}};
}

json preset_fn_forward() {
  return json{{"experiment", "fn-forward"},
              {"seed", 2024},
              {"problem", fn_problem(20.0)},
              {"method", "euler"},
              {"p", 1},
              {"sigma", 0.1},
              {"h_values", {0.005, 0.01, 0.02, 0.05, 0.1}},
              {"draws", 100},
              {"reference_h", 0.001}};
}

json preset_fn_calibrate() {
  return json{{"experiment", "fn-calibrate"},
              {"seed", 2025},
              {"problem", fn_problem(20.0)},
              {"method", "euler"},
              {"h", 0.1},
              {"p", 1},
              {"n_mc", 100},
              {"sigma_grid", json{{"min", 0.02}, {"max", 2.0}, {"count", 13}}}};
}

json fn_posterior_base() {
  return json{
      {"problem", fn_problem(40.0)},
      {"h", 0.1},
      {"observations", json{{"times_start", 1.0},
                            {"times_step", 1.0},
                            {"times_count", 40},
                            {"gamma", 0.001},
                            {"data_seed", 90210},
                            {"reference_h", 0.001}}},
      {"priors", json::array({json{{"type", "log_normal"}, {"location", std::log(0.2)}, {"scale", 1.0}},
                              json{{"type", "log_normal"}, {"location", std::log(0.2)}, {"scale", 1.0}},
                              json{{"type", "log_normal"}, {"location", std::log(3.0)}, {"scale", 1.0}}})},
      {"mcmc", json{{"n_steps", 100000}, {"adapt_interval", 50}, {"initial_scale", 0.2},
                    {"inner_draws", 10}}}};
}

json preset_fn_posterior_det() {
  json cfg = fn_posterior_base();
  cfg["experiment"] = "fn-posterior-det";
  cfg["seed"] = 3031;
  cfg["solver"] = json{{"type", "deterministic"}};
  return cfg;
}

json preset_fn_posterior_rand() {
  json cfg = fn_posterior_base();
  cfg["experiment"] = "fn-posterior-rand";
  cfg["seed"] = 3032;
  cfg["solver"] = json{{"type", "randomized"}, {"sigma", 0.2}, {"p", 1}, {"inner_draws", 10}};
  return cfg;
}

json preset_linear_conjugate() {
  return json{{"experiment", "linear-conjugate"},
              {"seed", 4041},
              {"lambda", 1.0},
              {"h", 0.1},
              {"obs_index", 10},
              {"gamma", 0.1},
              {"sigma", 0.2},
              {"p", 1},
              {"prior", json{{"mean", 0.0}, {"sd", 1.0}}},
              {"u0_true", 1.0},
              {"data_seed", 555},
              {"mcmc", json{{"n_steps", 50000}, {"inner_draws", 10}, {"adapt_interval", 50},
                            {"initial_scale", 1.0}}}};
}

json preset_strong_order() {
  return json{{"experiment", "strong-order"},
              {"seed", 5051},
              {"problem", json{{"kind", "linear"}, {"lambda", 1.0}, {"u0", 1.0}, {"T", 1.0}}},
              {"h_ladder", {0.1, 0.05, 0.025, 0.0125}},
              {"replicates", 200},
              {"cases", json::array({json{{"method", "euler"}, {"p", 1}, {"sigma", 0.2}},
                                     json{{"method", "rk4"}, {"p", 4}, {"sigma", 1.0}}})}};
}

json preset_weak_order_linear() {
  return json{{"experiment", "weak-order-linear"},
              {"seed", 6061},
              {"lambda", 1.0},
              {"u0", 1.0},
              {"T", 1.0},
              {"p", 1},
              {"sigma", 0.5},
              {"h_ladder", {0.1, 0.05, 0.025, 0.0125}}};
}

json preset_fem_rates() {
  return json{{"experiment", "fem-rates"},
              {"seed", 7071},
              {"log_kappa", {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0}},
              {"p", 1},
              {"sigma_fem", 1.0},
              {"n_kl", 20},
              {"element_ladder", {10, 20, 40, 80}},
              {"draws", 100},
              {"ref_elements", 800},
              {"modes", {"deterministic", "randomized"}}};
}

json preset_elliptic_inverse() {
  return json{
      {"experiment", "elliptic-inverse"},
      {"seed", 8081},
      {"theta_true", {0.35, -0.62, 0.18, -0.25, 0.48, -0.1, 0.3, -0.45, 0.2}},
      {"obs_x", {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}},
      {"noise_var", 1e-5},
      {"data", json{{"ref_elements", 800}, {"data_seed", 424242}}},
      {"grids", {10, 20, 40, 80}},
      {"solver",
       json{{"type", "randomized"}, {"sigma_fem", 0.05}, {"p", 1}, {"n_kl", 20}, {"inner_draws", 10}}},
      {"calibrate",
       json{{"n_mc", 30},
            {"n_prior_draws", 5},
            {"sigma_grid", json{{"min", 0.01}, {"max", 30.0}, {"count", 13}}},
            // Off-node comparison points (odd multiples of 1/160 miss the
            // nodes of every grid in `grids`).
            {"points", {0.04375, 0.14375, 0.24375, 0.34375, 0.44375, 0.54375, 0.64375, 0.74375,
                        0.84375, 0.94375}}}},
      {"mcmc", json{{"n_steps", 10000}, {"adapt_interval", 50}, {"initial_scale", 0.3}}}};
}

struct PresetEntry {
  std::string description;
  json (*build)();
};

const std::map<std::string, PresetEntry>& preset_registry() {
  static const std::map<std::string, PresetEntry> registry = {
      {"fn-forward",
       {"FitzHugh-Nagumo forward ensembles: 100 randomized Euler draws per step size",
        preset_fn_forward}},
      {"fn-calibrate",
       {"Noise-scale calibration for FitzHugh-Nagumo against a step-halving error indicator",
        preset_fn_calibrate}},
      {"fn-posterior-det",
       {"FitzHugh-Nagumo parameter posterior with the deterministic Euler solver",
        preset_fn_posterior_det}},
      {"fn-posterior-rand",
       {"FitzHugh-Nagumo parameter posterior with the randomized Euler solver (pseudo-marginal)",
        preset_fn_posterior_rand}},
      {"linear-conjugate",
       {"Linear-ODE single-observation inference checked against the closed-form posterior",
        preset_linear_conjugate}},
      {"strong-order",
       {"Empirical strong convergence order of randomized Euler and RK4 on a linear problem",
        preset_strong_order}},
      {"weak-order-linear",
       {"Closed-form weak error of randomized Euler against the original ODE and its modified SDE",
        preset_weak_order_linear}},
      {"fem-rates",
       {"Energy and L2 convergence rates of the deterministic and randomized Galerkin solvers",
        preset_fem_rates}},
      {"elliptic-inverse",
       {"1D elliptic coefficient inverse problem across grid sizes with a randomized solver",
        preset_elliptic_inverse}},
  };
  return registry;
}

}  // namespace

const std::vector<PresetInfo>& presets() {
  static const std::vector<PresetInfo> list = [] {
    std::vector<PresetInfo> out;
    for (const auto& [name, entry] : preset_registry()) {
      out.push_back(PresetInfo{name, entry.description});
    }
    return out;
  }();
  return list;
}

std::string preset_config_text(const std::string& name) {
  const auto it = preset_registry().find(name);
  if (it == preset_registry().end()) throw ConfigError("unknown preset '" + name + "'");
  return it->second.build().dump(2) + "\n";
}

}  // namespace probode::experiments
