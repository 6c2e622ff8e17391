#pragma once

#include "probode/ode.hpp"

namespace probode::problems {

// du/dt = lambda u, u(0) = u0.
inline ode::ODEProblem linear(double lambda, double u0, double T) {
  ode::ODEProblem p;
  p.f = [lambda](const ode::State& u) { return ode::State(lambda * u); };
  p.u0 = ode::State::Constant(1, u0);
  p.T = T;
  return p;
}

// Two-state oscillator with states (V, R):
//   dV/dt = c (V - V^3/3 + R),   dR/dt = -(V - a + b R) / c.
inline ode::ODEProblem fitzhugh_nagumo(double a, double b, double c, double v0, double r0,
                                       double T) {
  ode::ODEProblem p;
  p.f = [a, b, c](const ode::State& u) {
    ode::State d(2);
    d[0] = c * (u[0] - u[0] * u[0] * u[0] / 3.0 + u[1]);
    d[1] = -(u[0] - a + b * u[1]) / c;
    return d;
  };
  p.u0 = ode::State(2);
  p.u0 << v0, r0;
  p.T = T;
  return p;
}

}  // namespace probode::problems
