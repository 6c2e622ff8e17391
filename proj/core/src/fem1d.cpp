#include "probode/fem1d.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include "json.hpp"
#include "probode/io.hpp"

namespace probode::fem1d {

namespace {

constexpr double kPi = std::numbers::pi;

struct GaussRule {
  std::vector<double> x;  // nodes on [0, 1]
  std::vector<double> w;  // weights summing to 1
};

// Gauss-Legendre by Newton iteration on the Legendre recurrence.
GaussRule make_gauss_rule(int n) {
  GaussRule rule;
  rule.x.resize(n);
  rule.w.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (z * p0 - p1) / (z * z - 1.0);
      const double z_prev = z;
      z -= p0 / pp;
      if (std::abs(z - z_prev) < 1e-15) break;
    }
    rule.x[i] = 0.5 * (1.0 - z);
    rule.x[n - 1 - i] = 0.5 * (1.0 + z);
    const double w = 1.0 / ((1.0 - z * z) * pp * pp);
    rule.w[i] = w;
    rule.w[n - 1 - i] = w;
  }
  return rule;
}

const GaussRule& gauss_rule(int n) {
  static std::mutex mutex;
  static std::map<int, GaussRule> cache;
  std::scoped_lock lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, make_gauss_rule(n)).first;
  return it->second;
}

// Bridge mode tables at the quadrature points of one element, local
// coordinate y in [0, 1]:
//   value(q, n)      = (sqrt(2)/((n+1) pi)) sin((n+1) pi y_q)
//   derivative(q, n) = sqrt(2) cos((n+1) pi y_q)   [times amplitude/h in x units]
struct ModeTables {
  Eigen::MatrixXd value;
  Eigen::MatrixXd derivative;
};

const ModeTables& mode_tables(int n_kl, const GaussRule& rule) {
  static std::mutex mutex;
  static std::map<std::pair<int, int>, ModeTables> cache;
  std::scoped_lock lock(mutex);
  const auto key = std::make_pair(n_kl, static_cast<int>(rule.x.size()));
  auto it = cache.find(key);
  if (it == cache.end()) {
    ModeTables t;
    const int nq = static_cast<int>(rule.x.size());
    t.value.resize(nq, n_kl);
    t.derivative.resize(nq, n_kl);
    const double sqrt2 = std::numbers::sqrt2;
    for (int q = 0; q < nq; ++q) {
      for (int n = 0; n < n_kl; ++n) {
        const double freq = (n + 1) * kPi;
        t.value(q, n) = sqrt2 / freq * std::sin(freq * rule.x[q]);
        t.derivative(q, n) = sqrt2 * std::cos(freq * rule.x[q]);
      }
    }
    it = cache.emplace(key, std::move(t)).first;
  }
  return it->second;
}

int kappa_interval_of_element(const Mesh1D& mesh, int element) {
  return element * CoefficientField::kIntervals / mesh.n_elements;
}

void require_alignment(const Mesh1D& mesh) {
  if (mesh.n_elements % CoefficientField::kIntervals != 0) {
    throw std::invalid_argument("mesh does not align with the coefficient breakpoints");
  }
}

// Bridge value/derivative for direct evaluation (outside quadrature).
double bridge_value(const RandomBasisDraw& draw, const Eigen::MatrixXd& eta, int row, double y) {
  double v = 0.0;
  for (int n = 0; n < eta.cols(); ++n) {
    const double freq = (n + 1) * kPi;
    v += std::numbers::sqrt2 / freq * std::sin(freq * y) * eta(row, n);
  }
  return draw.amplitude * v;
}

double bridge_derivative(const RandomBasisDraw& draw, const Eigen::MatrixXd& eta, int row,
                         double y, double h) {
  double v = 0.0;
  for (int n = 0; n < eta.cols(); ++n) {
    const double freq = (n + 1) * kPi;
    v += std::numbers::sqrt2 * std::cos(freq * y) * eta(row, n);
  }
  return draw.amplitude / h * v;
}

}  // namespace

Mesh1D Mesh1D::with_elements(int m) {
  if (m < 2) throw std::invalid_argument("mesh needs at least two elements");
  return Mesh1D{m};
}

CoefficientField::CoefficientField() {
  for (double& k : kappa_) k = 1.0;
}

CoefficientField::CoefficientField(const Eigen::VectorXd& free_log_kappa) {
  if (free_log_kappa.size() != kIntervals - 1) {
    throw std::invalid_argument("coefficient field has exactly nine free parameters");
  }
  kappa_[0] = 1.0;
  for (int i = 1; i < kIntervals; ++i) {
    kappa_[i] = std::exp(free_log_kappa[i - 1]);
    if (!(kappa_[i] > 0.0) || !std::isfinite(kappa_[i])) {
      throw std::invalid_argument("coefficient field must be positive and finite");
    }
  }
}

double CoefficientField::value_at(double x) const {
  int i = static_cast<int>(std::floor(x * kIntervals));
  if (i < 0) i = 0;
  if (i >= kIntervals) i = kIntervals - 1;
  return kappa_[i];
}

Eigen::VectorXd CoefficientField::log_values() const {
  Eigen::VectorXd out(kIntervals);
  for (int i = 0; i < kIntervals; ++i) out[i] = std::log(kappa_[i]);
  return out;
}

void RandomBasisSpec::validate() const {
  if (p < 1) throw std::invalid_argument("basis perturbation order p must be >= 1");
  if (!(sigma_fem >= 0.0)) throw std::invalid_argument("sigma_fem must be >= 0");
  if (n_kl < 1) throw std::invalid_argument("KL truncation order must be >= 1");
}

RandomBasisDraw draw_random_basis(const Mesh1D& mesh, const RandomBasisSpec& spec,
                                  RngStream& rng) {
  spec.validate();
  const int J = mesh.interior_nodes();
  RandomBasisDraw draw;
  draw.amplitude = spec.sigma_fem * std::pow(mesh.h(), spec.p + 1) / std::sqrt(spec.n_kl);
  draw.eta_left = Eigen::MatrixXd::Zero(J, spec.n_kl);
  draw.eta_right = Eigen::MatrixXd::Zero(J, spec.n_kl);
  if (spec.sigma_fem == 0.0) return draw;
  for (int j = 0; j < J; ++j) {
    for (int n = 0; n < spec.n_kl; ++n) {
      draw.eta_left(j, n) = rng.gauss();
      draw.eta_right(j, n) = rng.gauss();
    }
  }
  return draw;
}

double random_basis_energy_sum(const Mesh1D& mesh, const CoefficientField& kappa,
                               const RandomBasisDraw& draw) {
  require_alignment(mesh);
  const int J = mesh.interior_nodes();
  const double a2_over_h = draw.amplitude * draw.amplitude / mesh.h();
  double total = 0.0;
  for (int j = 1; j <= J; ++j) {
    const double k_left = kappa.value_in_interval(kappa_interval_of_element(mesh, j - 1));
    const double k_right = kappa.value_in_interval(kappa_interval_of_element(mesh, j));
    total += a2_over_h * (k_left * draw.eta_left.row(j - 1).squaredNorm() +
                          k_right * draw.eta_right.row(j - 1).squaredNorm());
  }
  return total;
}

Fem1DSystem assemble_deterministic(const Mesh1D& mesh, const CoefficientField& kappa,
                                   const SourceFn& source, double u_left, double u_right) {
  require_alignment(mesh);
  const int m = mesh.n_elements;
  const int J = mesh.interior_nodes();
  const double h = mesh.h();
  const double du = u_right - u_left;

  Fem1DSystem sys;
  sys.mesh = mesh;
  sys.kappa = kappa;
  sys.u_left = u_left;
  sys.u_right = u_right;
  sys.diag = Eigen::VectorXd::Zero(J);
  sys.off_diag = Eigen::VectorXd::Zero(std::max(0, J - 1));
  sys.load = Eigen::VectorXd::Zero(J);

  const GaussRule& rule = gauss_rule(2);
  for (int e = 0; e < m; ++e) {
    const double k_e = kappa.value_in_interval(kappa_interval_of_element(mesh, e));
    const bool left_active = e >= 1;
    const bool right_active = e + 1 <= J;
    if (left_active) sys.diag[e - 1] += k_e / h;
    if (right_active) sys.diag[e] += k_e / h;
    if (left_active && right_active) sys.off_diag[e - 1] -= k_e / h;

    for (std::size_t q = 0; q < rule.x.size(); ++q) {
      const double y = rule.x[q];
      const double s = source((e + y) * h);
      if (left_active) sys.load[e - 1] -= rule.w[q] * h * s * (1.0 - y);
      if (right_active) sys.load[e] -= rule.w[q] * h * s * y;
    }
    // Dirichlet lift: a(lift, phi) with lift' = du.
    if (left_active) sys.load[e - 1] += k_e * du;
    if (right_active) sys.load[e] -= k_e * du;
  }
  return sys;
}

Fem1DSystem assemble_deterministic(const Mesh1D& mesh, const CoefficientField& kappa) {
  return assemble_deterministic(mesh, kappa, source_4x(), 0.0, 2.0);
}

Fem1DSystem assemble_with_basis(const Mesh1D& mesh, const CoefficientField& kappa,
                                const RandomBasisSpec& spec, RandomBasisDraw draw,
                                const SourceFn& source, double u_left, double u_right) {
  require_alignment(mesh);
  spec.validate();
  if (spec.sigma_fem == 0.0) return assemble_deterministic(mesh, kappa, source, u_left, u_right);

  const int m = mesh.n_elements;
  const int J = mesh.interior_nodes();
  const double h = mesh.h();
  const double du = u_right - u_left;
  if (draw.eta_left.rows() != J || draw.eta_left.cols() != spec.n_kl) {
    throw std::invalid_argument("basis draw does not match the mesh and spec");
  }

  Fem1DSystem sys;
  sys.mesh = mesh;
  sys.kappa = kappa;
  sys.u_left = u_left;
  sys.u_right = u_right;
  sys.diag = Eigen::VectorXd::Zero(J);
  sys.off_diag = Eigen::VectorXd::Zero(std::max(0, J - 1));
  sys.load = Eigen::VectorXd::Zero(J);

  const int nq = std::max(10, 2 * spec.n_kl + 2);
  const GaussRule& rule = gauss_rule(nq);
  const ModeTables& tables = mode_tables(spec.n_kl, rule);
  const double a_over_h = draw.amplitude / h;

  Eigen::VectorXd dl(nq), dr(nq), vl(nq), vr(nq);
  for (int e = 0; e < m; ++e) {
    const double k_e = kappa.value_in_interval(kappa_interval_of_element(mesh, e));
    const bool left_active = e >= 1;
    const bool right_active = e + 1 <= J;

    // Perturbed derivatives and values of the two active functions at all
    // quadrature points of the element. The left node's bridge on this
    // element is its right-support bridge, and vice versa.
    if (left_active) {
      dl = (tables.derivative * draw.eta_right.row(e - 1).transpose()) * a_over_h;
      vl = (tables.value * draw.eta_right.row(e - 1).transpose()) * draw.amplitude;
      for (int q = 0; q < nq; ++q) {
        dl[q] += -1.0 / h;
        vl[q] += 1.0 - rule.x[q];
      }
    }
    if (right_active) {
      dr = (tables.derivative * draw.eta_left.row(e).transpose()) * a_over_h;
      vr = (tables.value * draw.eta_left.row(e).transpose()) * draw.amplitude;
      for (int q = 0; q < nq; ++q) {
        dr[q] += 1.0 / h;
        vr[q] += rule.x[q];
      }
    }

    double a_ll = 0.0, a_lr = 0.0, a_rr = 0.0;
    double load_l = 0.0, load_r = 0.0;
    for (int q = 0; q < nq; ++q) {
      const double w = rule.w[q] * h;
      const double s = source((e + rule.x[q]) * h);
      if (left_active) {
        a_ll += w * k_e * dl[q] * dl[q];
        load_l -= w * (s * vl[q] + k_e * du * dl[q]);
      }
      if (right_active) {
        a_rr += w * k_e * dr[q] * dr[q];
        load_r -= w * (s * vr[q] + k_e * du * dr[q]);
      }
      if (left_active && right_active) a_lr += w * k_e * dl[q] * dr[q];
    }
    if (left_active) {
      sys.diag[e - 1] += a_ll;
      sys.load[e - 1] += load_l;
    }
    if (right_active) {
      sys.diag[e] += a_rr;
      sys.load[e] += load_r;
    }
    if (left_active && right_active) sys.off_diag[e - 1] += a_lr;
  }

  sys.basis = std::move(draw);
  return sys;
}

Fem1DSystem assemble_randomized(const Mesh1D& mesh, const CoefficientField& kappa,
                                const RandomBasisSpec& spec, RngStream& rng,
                                const SourceFn& source, double u_left, double u_right) {
  RandomBasisDraw draw = draw_random_basis(mesh, spec, rng);
  Fem1DSystem sys = assemble_with_basis(mesh, kappa, spec, std::move(draw), source, u_left, u_right);
  sys.draw_key = rng.key();
  return sys;
}

Fem1DSystem assemble_randomized(const Mesh1D& mesh, const CoefficientField& kappa,
                                const RandomBasisSpec& spec, RngStream& rng) {
  return assemble_randomized(mesh, kappa, spec, rng, source_4x(), 0.0, 2.0);
}

Fem1DSolution::Fem1DSolution(Mesh1D mesh, double u_left, double u_right,
                             Eigen::VectorXd coefficients, std::optional<RandomBasisDraw> basis)
    : mesh_(mesh),
      u_left_(u_left),
      u_right_(u_right),
      coefficients_(std::move(coefficients)),
      basis_(std::move(basis)) {}

double Fem1DSolution::operator()(double x) const {
  const int m = mesh_.n_elements;
  const int J = mesh_.interior_nodes();
  const double xm = x * m;
  const double rounded = std::round(xm);
  if (std::abs(xm - rounded) <= 1e-12 * std::max(1.0, std::abs(xm))) {
    const int j = static_cast<int>(rounded);
    if (j <= 0) return u_left_;
    if (j >= m) return u_right_;
    return u_left_ + (u_right_ - u_left_) * mesh_.node(j) + coefficients_[j - 1];
  }
  int e = static_cast<int>(std::floor(xm));
  if (e < 0) e = 0;
  if (e >= m) e = m - 1;
  const double y = xm - e;

  double val = u_left_ + (u_right_ - u_left_) * x;
  if (e >= 1) {
    val += coefficients_[e - 1] * (1.0 - y);
    if (basis_) val += coefficients_[e - 1] * bridge_value(*basis_, basis_->eta_right, e - 1, y);
  }
  if (e + 1 <= J) {
    val += coefficients_[e] * y;
    if (basis_) val += coefficients_[e] * bridge_value(*basis_, basis_->eta_left, e, y);
  }
  return val;
}

double Fem1DSolution::derivative(double x) const {
  const int m = mesh_.n_elements;
  const int J = mesh_.interior_nodes();
  const double h = mesh_.h();
  int e = static_cast<int>(std::floor(x * m));
  if (e < 0) e = 0;
  if (e >= m) e = m - 1;
  const double y = x * m - e;

  double val = u_right_ - u_left_;
  if (e >= 1) {
    val += -coefficients_[e - 1] / h;
    if (basis_) {
      val += coefficients_[e - 1] * bridge_derivative(*basis_, basis_->eta_right, e - 1, y, h);
    }
  }
  if (e + 1 <= J) {
    val += coefficients_[e] / h;
    if (basis_) val += coefficients_[e] * bridge_derivative(*basis_, basis_->eta_left, e, y, h);
  }
  return val;
}

Eigen::VectorXd Fem1DSolution::nodal_values() const {
  const int m = mesh_.n_elements;
  Eigen::VectorXd out(m + 1);
  out[0] = u_left_;
  out[m] = u_right_;
  for (int j = 1; j < m; ++j) {
    out[j] = u_left_ + (u_right_ - u_left_) * mesh_.node(j) + coefficients_[j - 1];
  }
  return out;
}

Fem1DSolution solve_system(const Fem1DSystem& sys) {
  const int J = static_cast<int>(sys.diag.size());
  if (J < 1) throw std::invalid_argument("system has no unknowns");

  Eigen::SparseMatrix<double> A(J, J);
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(3 * J);
  for (int j = 0; j < J; ++j) {
    triplets.emplace_back(j, j, sys.diag[j]);
    if (j + 1 < J) {
      triplets.emplace_back(j, j + 1, sys.off_diag[j]);
      triplets.emplace_back(j + 1, j, sys.off_diag[j]);
    }
  }
  A.setFromTriplets(triplets.begin(), triplets.end());

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) {
    std::string msg = "FEM system solve failed (singular to working precision): n_elements=" +
                      std::to_string(sys.mesh.n_elements) +
                      ", max|diag|=" + io::format_double(sys.diag.cwiseAbs().maxCoeff()) +
                      ", min|diag|=" + io::format_double(sys.diag.cwiseAbs().minCoeff());
    if (sys.draw_key) msg += ", draw_key=" + std::to_string(*sys.draw_key);
    throw std::runtime_error(msg);
  }
  Eigen::VectorXd coeffs = lu.solve(sys.load);

  return Fem1DSolution(sys.mesh, sys.u_left, sys.u_right, std::move(coeffs), sys.basis);
}

QuadraticSolution::QuadraticSolution(Mesh1D mesh, double u_left, double u_right,
                                     Eigen::VectorXd node_values)
    : mesh_(mesh), u_left_(u_left), u_right_(u_right), node_values_(std::move(node_values)) {}

double QuadraticSolution::operator()(double x) const {
  const int m = mesh_.n_elements;
  int e = static_cast<int>(std::floor(x * m));
  if (e < 0) e = 0;
  if (e >= m) e = m - 1;
  const double y = x * m - e;
  const double n0 = (1.0 - y) * (1.0 - 2.0 * y);
  const double n1 = 4.0 * y * (1.0 - y);
  const double n2 = y * (2.0 * y - 1.0);
  return n0 * node_values_[2 * e] + n1 * node_values_[2 * e + 1] + n2 * node_values_[2 * e + 2];
}

double QuadraticSolution::derivative(double x) const {
  const int m = mesh_.n_elements;
  const double h = mesh_.h();
  int e = static_cast<int>(std::floor(x * m));
  if (e < 0) e = 0;
  if (e >= m) e = m - 1;
  const double y = x * m - e;
  const double d0 = (4.0 * y - 3.0) / h;
  const double d1 = (4.0 - 8.0 * y) / h;
  const double d2 = (4.0 * y - 1.0) / h;
  return d0 * node_values_[2 * e] + d1 * node_values_[2 * e + 1] + d2 * node_values_[2 * e + 2];
}

QuadraticSolution solve_quadratic(const Mesh1D& mesh, const CoefficientField& kappa,
                                  const SourceFn& source, double u_left, double u_right) {
  require_alignment(mesh);
  const int m = mesh.n_elements;
  const double h = mesh.h();
  const double du = u_right - u_left;
  const int n_unknowns = 2 * m - 1;  // all nodes except the Dirichlet endpoints

  // Reference-element stiffness for quadratic Lagrange shapes, times kappa/h.
  const double k_ref[3][3] = {{7.0 / 3, -8.0 / 3, 1.0 / 3},
                              {-8.0 / 3, 16.0 / 3, -8.0 / 3},
                              {1.0 / 3, -8.0 / 3, 7.0 / 3}};

  Eigen::SparseMatrix<double> A(n_unknowns, n_unknowns);
  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_unknowns);
  const GaussRule& rule = gauss_rule(3);

  for (int e = 0; e < m; ++e) {
    const double k_e = kappa.value_in_interval(kappa_interval_of_element(mesh, e));
    const int global[3] = {2 * e, 2 * e + 1, 2 * e + 2};
    for (int i = 0; i < 3; ++i) {
      const int gi = global[i];
      if (gi == 0 || gi == 2 * m) continue;
      for (int j = 0; j < 3; ++j) {
        const int gj = global[j];
        if (gj == 0 || gj == 2 * m) continue;
        triplets.emplace_back(gi - 1, gj - 1, k_e / h * k_ref[i][j]);
      }
      // Lift: a(lift, phi_i) = kappa du [N_i(1) - N_i(0)] on this element.
      const double endpoint_delta = (i == 0) ? -1.0 : (i == 2 ? 1.0 : 0.0);
      rhs[gi - 1] -= k_e * du * endpoint_delta;
      for (std::size_t q = 0; q < rule.x.size(); ++q) {
        const double y = rule.x[q];
        const double shape = (i == 0)   ? (1.0 - y) * (1.0 - 2.0 * y)
                             : (i == 1) ? 4.0 * y * (1.0 - y)
                                        : y * (2.0 * y - 1.0);
        rhs[gi - 1] -= rule.w[q] * h * source((e + y) * h) * shape;
      }
    }
  }
  A.setFromTriplets(triplets.begin(), triplets.end());

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) {
    throw std::runtime_error("quadratic reference solve failed: n_elements=" +
                             std::to_string(m));
  }
  const Eigen::VectorXd c = lu.solve(rhs);

  Eigen::VectorXd values(2 * m + 1);
  for (int g = 0; g <= 2 * m; ++g) {
    const double x = 0.5 * g * h;
    values[g] = u_left + du * x;
    if (g != 0 && g != 2 * m) values[g] += c[g - 1];
  }
  return QuadraticSolution(mesh, u_left, u_right, std::move(values));
}

ErrorNorms error_vs_reference(const Fem1DSolution& u, const QuadraticSolution& ref,
                              const CoefficientField& kappa, int cells) {
  if (cells % u.mesh().n_elements != 0) {
    throw std::invalid_argument("integration cells must refine the solution mesh");
  }
  const GaussRule& rule = gauss_rule(10);
  const double dx = 1.0 / cells;
  double energy = 0.0, l2 = 0.0;
  for (int c = 0; c < cells; ++c) {
    for (std::size_t q = 0; q < rule.x.size(); ++q) {
      const double x = (c + rule.x[q]) * dx;
      const double w = rule.w[q] * dx;
      const double dv = u.derivative(x) - ref.derivative(x);
      const double v = u(x) - ref(x);
      energy += w * kappa.value_at(x) * dv * dv;
      l2 += w * v * v;
    }
  }
  return {std::sqrt(energy), std::sqrt(l2)};
}

FemRatePair estimate_fem_rates(const CoefficientField& kappa, const RandomBasisSpec& spec,
                               const std::vector<int>& element_ladder, int n_draws,
                               std::uint64_t seed, int ref_elements) {
  spec.validate();
  if (element_ladder.size() < 3) {
    throw std::invalid_argument("need at least three ladder meshes");
  }
  for (int m : element_ladder) {
    if (m < CoefficientField::kIntervals || ref_elements % m != 0) {
      throw std::invalid_argument("ladder meshes must align with kappa and divide the reference");
    }
  }
  const QuadraticSolution ref =
      solve_quadratic(Mesh1D::with_elements(ref_elements), kappa, source_4x(), 0.0, 2.0);
  const RngStream root = RngStream(seed).child("fem-rates");

  std::vector<double> hs(element_ladder.size());
  std::vector<double> energy_err(element_ladder.size());
  std::vector<double> l2_err(element_ladder.size());
  std::vector<double> energy_se(element_ladder.size(), 0.0);
  std::vector<double> l2_se(element_ladder.size(), 0.0);
  for (std::size_t i = 0; i < element_ladder.size(); ++i) {
    const Mesh1D mesh = Mesh1D::with_elements(element_ladder[i]);
    hs[i] = mesh.h();
    if (spec.sigma_fem == 0.0) {
      const Fem1DSolution sol = solve_system(assemble_deterministic(mesh, kappa));
      const ErrorNorms norms = error_vs_reference(sol, ref, kappa, ref_elements);
      energy_err[i] = norms.energy;
      l2_err[i] = norms.l2;
    } else {
      if (n_draws < 2) throw std::invalid_argument("randomized rates need at least two draws");
      double sum_e = 0.0, sum_e2 = 0.0, sum_l = 0.0, sum_l2sq = 0.0;
      const RngStream mesh_rng = root.child(i);
      for (int r = 0; r < n_draws; ++r) {
        RngStream draw_rng = mesh_rng.child(static_cast<std::uint64_t>(r));
        const Fem1DSolution sol = solve_system(assemble_randomized(mesh, kappa, spec, draw_rng));
        const ErrorNorms norms = error_vs_reference(sol, ref, kappa, ref_elements);
        sum_e += norms.energy;
        sum_e2 += norms.energy * norms.energy;
        sum_l += norms.l2;
        sum_l2sq += norms.l2 * norms.l2;
      }
      energy_err[i] = sum_e / n_draws;
      l2_err[i] = sum_l / n_draws;
      const double var_e =
          std::max(0.0, (sum_e2 - n_draws * energy_err[i] * energy_err[i]) / (n_draws - 1));
      const double var_l =
          std::max(0.0, (sum_l2sq - n_draws * l2_err[i] * l2_err[i]) / (n_draws - 1));
      energy_se[i] = std::sqrt(var_e / n_draws);
      l2_se[i] = std::sqrt(var_l / n_draws);
    }
  }

  FemRatePair pair;
  pair.energy = convergence::fit_loglog(hs, energy_err);
  pair.energy.errors_stderr = energy_se;
  pair.l2 = convergence::fit_loglog(hs, l2_err);
  pair.l2.errors_stderr = l2_se;
  return pair;
}

std::vector<double> linear_vs_quadratic_indicator(const Mesh1D& mesh,
                                                  const CoefficientField& kappa,
                                                  std::span<const double> obs_x) {
  const Fem1DSolution lin = solve_system(assemble_deterministic(mesh, kappa));
  const QuadraticSolution quad = solve_quadratic(mesh, kappa, source_4x(), 0.0, 2.0);
  std::vector<double> indicator;
  indicator.reserve(obs_x.size());
  for (double x : obs_x) indicator.push_back(lin(x) - quad(x));
  return indicator;
}

calibration::CalibrationResult calibrate_fem_sigma(const Mesh1D& mesh,
                                                   const RandomBasisSpec& spec_template,
                                                   std::span<const double> obs_x, int n_mc,
                                                   int n_prior_draws, std::uint64_t seed,
                                                   const std::vector<double>& sigma_grid) {
  if (n_mc < 2) throw std::invalid_argument("need at least two Monte-Carlo draws");
  if (n_prior_draws < 1) throw std::invalid_argument("need at least one prior draw");
  const RngStream root = RngStream(seed).child("fem-calibration");

  // Fixed prior sample of coefficient fields, shared across sigma (common
  // random numbers), each with its deterministic solution and indicator.
  struct PriorCase {
    CoefficientField kappa;
    std::vector<double> u_lin;
    std::vector<double> indicator;
  };
  std::vector<PriorCase> cases;
  cases.reserve(n_prior_draws);
  for (int j = 0; j < n_prior_draws; ++j) {
    RngStream prior_rng = root.child("prior").child(static_cast<std::uint64_t>(j));
    Eigen::VectorXd theta(CoefficientField::kIntervals - 1);
    for (int i = 0; i < theta.size(); ++i) theta[i] = prior_rng.gauss();
    PriorCase pc{CoefficientField(theta), {}, {}};
    const Fem1DSolution lin = solve_system(assemble_deterministic(mesh, pc.kappa));
    for (double x : obs_x) pc.u_lin.push_back(lin(x));
    pc.indicator = linear_vs_quadratic_indicator(mesh, pc.kappa, obs_x);
    cases.push_back(std::move(pc));
  }

  auto log_pi = [&](double sigma) {
    RandomBasisSpec spec = spec_template;
    spec.sigma_fem = sigma;
    double total = 0.0;
    for (int j = 0; j < n_prior_draws; ++j) {
      const PriorCase& pc = cases[j];
      std::vector<double> mean(obs_x.size(), 0.0), m2(obs_x.size(), 0.0);
      const RngStream case_rng = root.child("draw").child(static_cast<std::uint64_t>(j));
      for (int m = 0; m < n_mc; ++m) {
        RngStream draw_rng = case_rng.child(static_cast<std::uint64_t>(m));
        const Fem1DSolution sol =
            solve_system(assemble_randomized(mesh, pc.kappa, spec, draw_rng));
        for (std::size_t i = 0; i < obs_x.size(); ++i) {
          const double x = sol(obs_x[i]);
          const double delta = x - mean[i];
          mean[i] += delta / (m + 1);
          m2[i] += delta * (x - mean[i]);
        }
      }
      for (std::size_t i = 0; i < obs_x.size(); ++i) {
        const double var_hat = m2[i] / (n_mc - 1);
        const double eps = 1e-12 * (1.0 + std::abs(pc.u_lin[i]));
        const double nu_var = std::max(pc.indicator[i] * pc.indicator[i], eps * eps);
        total -= calibration::bhattacharyya_gaussian(mean[i], var_hat, pc.u_lin[i], nu_var);
      }
    }
    return total / n_prior_draws;
  };

  calibration::CalibrationResult result = calibration::maximize_profile(log_pi, sigma_grid);
  result.mc_samples = n_mc;
  result.seed = seed;
  return result;
}

void write_solution_csv(const Fem1DSolution& u, std::span<const double> xs,
                        const std::filesystem::path& path) {
  io::CsvWriter csv(path);
  const std::vector<std::string> header = {"x", "u"};
  csv.write_header(header);
  for (double x : xs) csv.write_row(x, u(x));
}

void write_system_json(const Fem1DSystem& sys, const std::filesystem::path& path) {
  nlohmann::json j;
  j["n_elements"] = sys.mesh.n_elements;
  j["h"] = sys.mesh.h();
  j["u_left"] = sys.u_left;
  j["u_right"] = sys.u_right;
  j["diag"] = std::vector<double>(sys.diag.begin(), sys.diag.end());
  j["off_diag"] = std::vector<double>(sys.off_diag.begin(), sys.off_diag.end());
  j["load"] = std::vector<double>(sys.load.begin(), sys.load.end());
  if (sys.draw_key) j["draw_key"] = *sys.draw_key;
  io::write_text_file(path, j.dump(2) + "\n");
}

}  // namespace probode::fem1d
