#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "probode/calibration.hpp"
#include "probode/convergence.hpp"
#include "probode/rng.hpp"

namespace probode::fem1d {

// Uniform mesh of [0, 1]. Node j sits at j h with h = 1/n_elements; nodes 0
// and n_elements carry Dirichlet data, the rest are unknowns.
struct Mesh1D {
  int n_elements = 10;

  double h() const { return 1.0 / n_elements; }
  int interior_nodes() const { return n_elements - 1; }
  double node(int j) const { return static_cast<double>(j) * h(); }

  static Mesh1D with_elements(int m);
};

// log kappa piecewise constant over ten equal intervals of [0, 1]; the first
// interval is pinned at kappa = 1, leaving nine free parameters.
class CoefficientField {
 public:
  static constexpr int kIntervals = 10;

  CoefficientField();  // kappa == 1 everywhere
  explicit CoefficientField(const Eigen::VectorXd& free_log_kappa);  // 9 entries

  double value_in_interval(int i) const { return kappa_[i]; }
  double value_at(double x) const;
  Eigen::VectorXd log_values() const;  // all ten intervals

 private:
  double kappa_[kIntervals];
};

// Scale of the Brownian-bridge basis perturbations. Each basis function's
// random part is an independent truncated sine expansion on each of its two
// support elements,
//   b(x) = a sum_{n=1}^{n_kl} (sqrt(2)/(n pi)) sin(n pi (x - x_e)/h) eta_n,
// with amplitude a = sigma_fem h^{p+1} / sqrt(n_kl), which vanishes at all
// nodes and carries energy a^2/h per mode.
struct RandomBasisSpec {
  int p = 1;
  double sigma_fem = 0.0;
  int n_kl = 20;

  void validate() const;
};

struct RandomBasisDraw {
  double amplitude = 0.0;
  Eigen::MatrixXd eta_left;   // row j-1: modes of node j on its left element
  Eigen::MatrixXd eta_right;  // row j-1: modes of node j on its right element
};

RandomBasisDraw draw_random_basis(const Mesh1D& mesh, const RandomBasisSpec& spec, RngStream& rng);

// Exact energy sum_j ||phi_j^r||_a^2 of one draw (closed form via mode
// orthogonality; no quadrature).
double random_basis_energy_sum(const Mesh1D& mesh, const CoefficientField& kappa,
                               const RandomBasisDraw& draw);

using SourceFn = std::function<double(double)>;

// Right-hand side of the module's elliptic problem, grad.(kappa grad u) = 4x.
inline SourceFn source_4x() {
  return [](double x) { return 4.0 * x; };
}

// Symmetric tridiagonal Galerkin system A U = r for the interior nodal
// coefficients, with Dirichlet data carried by a linear lift into the load.
struct Fem1DSystem {
  Mesh1D mesh;
  CoefficientField kappa;
  Eigen::VectorXd diag;      // J entries
  Eigen::VectorXd off_diag;  // J-1 entries
  Eigen::VectorXd load;      // J entries
  double u_left = 0.0;
  double u_right = 2.0;
  std::optional<RandomBasisDraw> basis;        // randomized assembly only
  std::optional<std::uint64_t> draw_key;       // stream key of the basis draw
};

// Hat-function assembly; exact for element-constant kappa. Load integrals use
// two-point Gauss per element (exact for an affine source against hats).
Fem1DSystem assemble_deterministic(const Mesh1D& mesh, const CoefficientField& kappa,
                                   const SourceFn& source, double u_left, double u_right);
Fem1DSystem assemble_deterministic(const Mesh1D& mesh, const CoefficientField& kappa);

// Assembly with bridge-perturbed basis functions, same sparsity pattern.
// Element integrals use Gauss-Legendre with max(10, 2 n_kl + 2) points, which
// resolves the product trig modes to ~1e-6 or better. sigma_fem = 0 delegates
// to the deterministic assembly (bitwise equal).
Fem1DSystem assemble_randomized(const Mesh1D& mesh, const CoefficientField& kappa,
                                const RandomBasisSpec& spec, RngStream& rng,
                                const SourceFn& source, double u_left, double u_right);
Fem1DSystem assemble_randomized(const Mesh1D& mesh, const CoefficientField& kappa,
                                const RandomBasisSpec& spec, RngStream& rng);
// Assembly from an existing draw (the draw, not the stream, defines the system).
Fem1DSystem assemble_with_basis(const Mesh1D& mesh, const CoefficientField& kappa,
                                const RandomBasisSpec& spec, RandomBasisDraw draw,
                                const SourceFn& source, double u_left, double u_right);

// Piecewise solution evaluator. Nodal queries (to within 1e-12 relative of a
// node coordinate) return the stored nodal value exactly; the bridge parts
// vanish there by construction.
class Fem1DSolution {
 public:
  Fem1DSolution(Mesh1D mesh, double u_left, double u_right, Eigen::VectorXd coefficients,
                std::optional<RandomBasisDraw> basis);

  double operator()(double x) const;
  double derivative(double x) const;
  Eigen::VectorXd nodal_values() const;  // J+2 values including the boundary
  const Eigen::VectorXd& coefficients() const { return coefficients_; }
  const Mesh1D& mesh() const { return mesh_; }

 private:
  Mesh1D mesh_;
  double u_left_;
  double u_right_;
  Eigen::VectorXd coefficients_;
  std::optional<RandomBasisDraw> basis_;
};

// Direct solve of the assembled system.
Fem1DSolution solve_system(const Fem1DSystem& system);

// Deterministic quadratic-element reference solver (used for fine references
// and as the second half of the linear-vs-quadratic error indicator).
class QuadraticSolution {
 public:
  QuadraticSolution(Mesh1D mesh, double u_left, double u_right, Eigen::VectorXd node_values);

  double operator()(double x) const;
  double derivative(double x) const;

 private:
  Mesh1D mesh_;
  double u_left_;
  double u_right_;
  Eigen::VectorXd node_values_;  // 2 m + 1 values including endpoints and midpoints
};

QuadraticSolution solve_quadratic(const Mesh1D& mesh, const CoefficientField& kappa,
                                  const SourceFn& source, double u_left, double u_right);

struct ErrorNorms {
  double energy = 0.0;
  double l2 = 0.0;
};

// Integrated against a quadratic reference over `cells` uniform cells (the
// reference mesh count; must be a multiple of the solution mesh count).
ErrorNorms error_vs_reference(const Fem1DSolution& u, const QuadraticSolution& ref,
                              const CoefficientField& kappa, int cells);

struct FemRatePair {
  convergence::OrderFit energy;
  convergence::OrderFit l2;
};

// Mean energy / L2 errors against a fine quadratic reference over an element
// ladder, with log-log slope fits. With sigma_fem = 0 each ladder entry is a
// single deterministic solve; otherwise errors average over n_draws draws.
FemRatePair estimate_fem_rates(const CoefficientField& kappa, const RandomBasisSpec& spec,
                               const std::vector<int>& element_ladder, int n_draws,
                               std::uint64_t seed, int ref_elements = 800);

// Error indicator comparing linear to quadratic elements at the given points.
std::vector<double> linear_vs_quadratic_indicator(const Mesh1D& mesh,
                                                  const CoefficientField& kappa,
                                                  std::span<const double> obs_x);

// Noise-scale calibration for the randomized assembly: the spread of the
// randomized solution at obs_x is matched to the linear-vs-quadratic
// indicator, averaged over draws of kappa from its prior (nine standard
// normal log-values).
calibration::CalibrationResult calibrate_fem_sigma(const Mesh1D& mesh,
                                                   const RandomBasisSpec& spec_template,
                                                   std::span<const double> obs_x, int n_mc,
                                                   int n_prior_draws, std::uint64_t seed,
                                                   const std::vector<double>& sigma_grid);

// Header `x,u` on the given query grid.
void write_solution_csv(const Fem1DSolution& u, std::span<const double> xs,
                        const std::filesystem::path& path);

// Banded system dump for debugging.
void write_system_json(const Fem1DSystem& system, const std::filesystem::path& path);

}  // namespace probode::fem1d
