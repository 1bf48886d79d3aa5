#pragma once

// One-dimensional weighted Sturm-Liouville operators A = grad^* grad in
// L2(rho) on cell-centred grids, plus the quantities built from their
// spectrum: Poincare constants, functions of L = A^{1/2}, and the dual norm
// of H1 with Dirichlet conditions in time used by the audits.
//
// Discretisation. Nodes sit at cell centres x_i = lo + (i + 1/2) h. Node
// masses are m_i = rho(x_i) h / Z and edge weights w_e = rho(x_{e+1/2}) h / Z,
// where Z normalises the node masses to one. With D the forward difference
// divided by h, A = D^T W D and eigenvectors are orthonormal for diag(m).
// On a line the outer edges are absent (natural Neumann condition); on a
// torus the last edge wraps around.

#include <functional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "kfp/model.hpp"

namespace kfp {

enum class Boundary { line, torus };

struct Grid1D {
  Boundary boundary = Boundary::line;
  double lo = -1.0;
  double hi = 1.0;
  int n = 512;

  double h() const { return (hi - lo) / n; }
  double node(int i) const { return lo + (i + 0.5) * h(); }
  // Edge e joins node e and node e+1 (mod n on a torus).
  double edge(int e) const { return lo + (e + 1) * h(); }
  int edges() const { return boundary == Boundary::torus ? n : n - 1; }
};

class SpectralOperator {
 public:
  // With vectors = false only node eigenvalues are computed (cheap path for
  // convergence studies); eigenvector-based members are then empty.
  SpectralOperator(const Grid1D& grid, const std::function<double(double)>& density,
                   bool vectors = true);

  const Grid1D& grid() const { return grid_; }
  int size() const { return grid_.n; }
  const Eigen::VectorXd& mass() const { return mass_; }
  const Eigen::VectorXd& edge_weight() const { return edge_weight_; }
  const Eigen::SparseMatrix<double>& gradient() const { return grad_; }
  Eigen::MatrixXd stiffness() const;

  // Node eigenpairs of A, ascending; the first is the constant mode.
  const Eigen::VectorXd& eigenvalues() const { return evals_; }
  const Eigen::MatrixXd& eigenvectors() const { return evecs_; }
  // Eigenpairs for fields living on edges: stiffness K_e = D_e^T M D_e
  // against the edge weights W, ascending, orthonormal for diag(w).
  const Eigen::VectorXd& edge_eigenvalues() const { return edge_evals_; }
  const Eigen::MatrixXd& edge_eigenvectors() const { return edge_evecs_; }

  Eigen::VectorXd grad(const Eigen::VectorXd& g) const { return grad_ * g; }
  // Edge-to-node difference (z_i - z_{i-1}) / h, zero ghost edges on a line.
  Eigen::VectorXd edge_difference(const Eigen::VectorXd& z) const;

  double weighted_mean(const Eigen::VectorXd& g) const { return mass_.dot(g); }
  Eigen::VectorXd remove_mean(const Eigen::VectorXd& g) const;
  double norm_sq(const Eigen::VectorXd& g) const { return g.dot(mass_.asDiagonal() * g); }
  double edge_norm_sq(const Eigen::VectorXd& z) const { return z.dot(edge_weight_.asDiagonal() * z); }

  Eigen::VectorXd to_modes(const Eigen::VectorXd& g) const;
  Eigen::VectorXd from_modes(const Eigen::VectorXd& c) const { return evecs_ * c; }

 private:
  Grid1D grid_;
  Eigen::VectorXd mass_;
  Eigen::VectorXd edge_weight_;
  Eigen::SparseMatrix<double> grad_;
  Eigen::VectorXd evals_;
  Eigen::MatrixXd evecs_;
  Eigen::VectorXd edge_evals_;
  Eigen::MatrixXd edge_evecs_;
};

// Smallest nonzero eigenvalue. Throws NoSpectralGap below 1e-8.
double poincare_constant(const SpectralOperator& op);

struct PoincareEstimate {
  double value = 0.0;   // Richardson extrapolation (4 c_fine - c_coarse) / 3
  double coarse = 0.0;  // n points
  double fine = 0.0;    // 2n points
};

// Two-resolution estimate. On a truncated line the domain is also doubled
// at fixed spacing: a gap that collapses (ratio below 0.6) signals a heavy
// tail and raises NoSpectralGap.
PoincareEstimate poincare_constant(const std::function<double(double)>& density, Boundary boundary,
                                   double lo, double hi, int n = 512);

struct WeightedPoincare {
  Eigen::VectorXd weight;  // weight at nodes, >= 1
  double constant = 0.0;   // P_psi
  double sigma_max = 0.0;  // moment exponents below this are integrable
};

// P_psi = 1 / lambda_min of A g = lambda diag(m / weight) g on {sum m_i g_i = 0}.
WeightedPoincare weighted_poincare_constant(const SpectralOperator& op,
                                            const std::function<double(double)>& weight,
                                            double sigma_max);

// Largest sigma with (1 + |v|^2)^{sigma * exponent} integrable against gamma
// for the built-in kinetic families, minus a 0.01 margin; infinity when every
// power is integrable.
double sigma_max(const HamiltonianSpec& spec, double weight_exponent);

// Returns g -> f(L) g for mean-zero g, L the square root of A. The constant
// mode is excluded. Throws MeanNotZero if |sum m_i g_i| > 1e-10.
std::function<Eigen::VectorXd(const Eigen::VectorXd&)> operator_sqrt(
    const SpectralOperator& op, std::function<double(double)> f);

// Dual norm of H1_0 in time (Dirichlet at t = 0 and t = tau) times H1 in
// space, for fields sampled on m equispaced times including both ends.
// Rows are times. The H1 norm is |z|^2 + |d_t z|^2 + |d_x z|^2, with the
// time inner product the normalised trapezoid rule; the sine basis is exactly
// orthogonal for that rule.
class DualNorm {
 public:
  DualNorm(const SpectralOperator& op, double tau, int m);

  double tau() const { return tau_; }
  int times() const { return m_; }
  double time(int j) const { return tau_ * j / (m_ - 1); }
  double trapezoid_weight(int j) const;

  // Node fields (rows = times, cols = nodes).
  double nodes(const Eigen::MatrixXd& w) const;
  // Edge fields (cols = edges), paired with W and measured with D_e.
  double edges(const Eigen::MatrixXd& w) const;
  // Dual norm of the time derivative of the cosine interpolant of g.
  double time_derivative(const Eigen::MatrixXd& g) const;
  // Full space-time gradient of a node field g.
  double gradient(const Eigen::MatrixXd& g) const;

  // Riesz representative u of a node field, so that <w, u> = nodes(w)^2 and
  // |u|_{H1} = nodes(w).
  Eigen::MatrixXd riesz_nodes(const Eigen::MatrixXd& w) const;
  // Squared H1 norm of a node field vanishing at both time ends, evaluated
  // from its sine interpolant.
  double h1_norm_sq_nodes(const Eigen::MatrixXd& z) const;
  // L2(U x mu) inner product of node fields.
  double inner_nodes(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) const;

 private:
  Eigen::MatrixXd sine_coefficients(const Eigen::MatrixXd& w) const;

  const SpectralOperator* op_;
  double tau_;
  int m_;
  Eigen::MatrixXd sine_;    // (m-2) x m, sqrt(2) sin(k pi t_j / tau) times trapezoid weight
  Eigen::MatrixXd cosine_;  // (m-2) x m, sqrt(2) cos(k pi t_j / tau) times trapezoid weight
  Eigen::VectorXd omega_;   // k pi / tau, k = 1..m-2
};

double dual_h1_norm(const SpectralOperator& op, const Eigen::MatrixXd& w, double tau);

}  // namespace kfp
