#include "probode/perturbation.hpp"

#include <cmath>
#include <stdexcept>

namespace probode::perturbation {

void PerturbationSpec::validate() const {
  if (p < 1) throw std::invalid_argument("perturbation order p must be >= 1");
  if (!(sigma >= 0.0)) throw std::invalid_argument("perturbation scale sigma must be >= 0");
  if (dim < 1) throw std::invalid_argument("state dimension must be >= 1");
}

Eigen::VectorXd draw_end_increment(const PerturbationSpec& spec, double h, RngStream& rng) {
  spec.validate();
  if (!(h > 0.0)) throw std::invalid_argument("step length h must be positive");
  if (spec.sigma == 0.0) return Eigen::VectorXd::Zero(spec.dim);
  const double sd = spec.sigma * std::pow(h, spec.p + 0.5);
  Eigen::VectorXd xi(spec.dim);
  for (int i = 0; i < spec.dim; ++i) xi[i] = sd * rng.gauss();
  return xi;
}

Eigen::VectorXd draw_interior_increment(StepNoiseState& state, const PerturbationSpec& spec,
                                        double s, RngStream& rng) {
  spec.validate();
  const double h = state.h;
  if (!(h > 0.0)) throw std::invalid_argument("noise state has no positive step length");
  if (!(s > 0.0 && s < h)) {
    throw std::invalid_argument("interior time must lie strictly inside (0, h)");
  }
  if (!state.interior.empty() && !(s > state.interior.back().first)) {
    throw std::invalid_argument("interior times must be strictly increasing");
  }

  if (spec.sigma == 0.0) {
    Eigen::VectorXd zero = Eigen::VectorXd::Zero(spec.dim);
    state.interior.emplace_back(s, zero);
    return zero;
  }

  // Work in units of the underlying standard Brownian motion B = xi / (sigma h^p).
  const double scale = spec.sigma * std::pow(h, spec.p);
  double t_left = 0.0;
  Eigen::VectorXd b_left = Eigen::VectorXd::Zero(spec.dim);
  if (!state.interior.empty()) {
    t_left = state.interior.back().first;
    b_left = state.interior.back().second / scale;
  }

  Eigen::VectorXd b(spec.dim);
  if (state.end_increment) {
    // Bridge between the last revealed value and the end-of-step value.
    const Eigen::VectorXd b_right = *state.end_increment / scale;
    const double w = (s - t_left) / (h - t_left);
    const double sd = std::sqrt((s - t_left) * (h - s) / (h - t_left));
    for (int i = 0; i < spec.dim; ++i) {
      b[i] = b_left[i] + w * (b_right[i] - b_left[i]) + sd * rng.gauss();
    }
  } else {
    const double sd = std::sqrt(s - t_left);
    for (int i = 0; i < spec.dim; ++i) b[i] = b_left[i] + sd * rng.gauss();
  }

  Eigen::VectorXd xi = scale * b;
  state.interior.emplace_back(s, xi);
  return xi;
}

Eigen::VectorXd complete_end_increment(StepNoiseState& state, const PerturbationSpec& spec,
                                       RngStream& rng) {
  spec.validate();
  const double h = state.h;
  if (!(h > 0.0)) throw std::invalid_argument("noise state has no positive step length");
  if (state.end_increment) throw std::logic_error("end increment already drawn for this step");
  if (state.interior.empty()) {
    throw std::logic_error("complete_end_increment requires at least one interior draw");
  }

  if (spec.sigma == 0.0) {
    Eigen::VectorXd zero = Eigen::VectorXd::Zero(spec.dim);
    state.end_increment = zero;
    return zero;
  }

  const double scale = spec.sigma * std::pow(h, spec.p);
  const double t_left = state.interior.back().first;
  const Eigen::VectorXd b_left = state.interior.back().second / scale;
  const double sd = std::sqrt(h - t_left);

  Eigen::VectorXd xi(spec.dim);
  for (int i = 0; i < spec.dim; ++i) xi[i] = scale * (b_left[i] + sd * rng.gauss());
  state.end_increment = xi;
  return xi;
}

}  // namespace probode::perturbation
