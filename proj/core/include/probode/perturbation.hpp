#pragma once

#include <Eigen/Core>
#include <optional>
#include <utility>
#include <vector>

#include "probode/rng.hpp"

namespace probode::perturbation {

// Scale and order of the additive per-step Gaussian perturbation. A step of
// length h receives an end-of-step increment
//   xi(h) ~ N(0, sigma^2 h^{2p+1} I_dim).
// Inside the step the increment is a scaled Brownian motion,
// xi(t) = sigma h^p B(t), which meets the end-of-step covariance exactly and
// makes every conditional law a standard Brownian / bridge formula.
struct PerturbationSpec {
  int p = 1;         // perturbation order, >= 1
  double sigma = 0;  // noise scale, >= 0; 0 means exactly-zero increments
  int dim = 1;       // state dimension, >= 1

  void validate() const;  // throws std::invalid_argument on a bad field
};

// Everything revealed about one step's noise process so far: the end-of-step
// increment once drawn, and interior values at strictly increasing times in
// (0, h). Later draws condition on all recorded entries.
struct StepNoiseState {
  double h = 0.0;
  std::optional<Eigen::VectorXd> end_increment;
  std::vector<std::pair<double, Eigen::VectorXd>> interior;
};

// Fresh end-of-step increment xi(h) ~ N(0, sigma^2 h^{2p+1} I). Successive
// calls on one stream are independent.
Eigen::VectorXd draw_end_increment(const PerturbationSpec& spec, double h, RngStream& rng);

// Interior value xi(s), 0 < s < h, drawn from the conditional law given all
// entries already recorded in `state` (including the end increment when
// present), and recorded. Interior times must be queried in increasing order.
Eigen::VectorXd draw_interior_increment(StepNoiseState& state, const PerturbationSpec& spec,
                                        double s, RngStream& rng);

// End-of-step increment conditional on previously drawn interior values;
// records it. Requires at least one interior draw and no end draw yet.
Eigen::VectorXd complete_end_increment(StepNoiseState& state, const PerturbationSpec& spec,
                                       RngStream& rng);

}  // namespace probode::perturbation
