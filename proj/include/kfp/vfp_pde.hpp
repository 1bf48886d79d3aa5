#pragma once

// Grid solver for the kinetic Ornstein-Uhlenbeck equation
//
//   d_t h + psi'(v) d_x h - phi'(x) d_v h = xi (d_v^2 h - psi'(v) d_v h)
//
// in one space and one velocity dimension, written for h = f / Theta with
// Theta the Gibbs density. Everything is measured in L2(Theta).
//
// Discretisation. Cells carry the masses mu_i gamma_j of the two
// SpectralOperator grids, so the discrete L2(Theta) inner product is
// diag(mu (x) gamma). Transport fluxes come from a discrete stream function
// (the Gibbs density sampled at cell corners, zero on no-flux walls), which
// makes the transport matrix exactly antisymmetric and its discrete
// divergence exactly zero. A Cayley (midpoint) step of it therefore keeps
// both the Gibbs mass and the L2(Theta) norm. Velocity diffusion is the
// weighted Neumann operator of the v grid, stepped by Crank-Nicolson.
// One step is transport dt/2, diffusion dt, transport dt/2.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kfp/certificates.hpp"
#include "kfp/spectral1d.hpp"

namespace kfp {

struct PhaseGridOptions {
  int nx = 128;
  int nv = 128;
  // Gibbs tail mass left outside a truncated velocity line; heavy tails
  // default to 1e-8 since 1e-10 pushes the wall too far out for 128 cells.
  std::optional<double> v_tail_mass;
};

class PhaseGrid {
 public:
  // The spec is normalised here with the grid's own truncation radii.
  PhaseGrid(const HamiltonianSpec& spec, const PhaseGridOptions& options = {});

  const HamiltonianSpec& spec() const { return spec_; }
  const SpectralOperator& x() const { return *x_; }
  const SpectralOperator& v() const { return *v_; }
  int nx() const { return x_->size(); }
  int nv() const { return v_->size(); }
  double x_node(int i) const { return x_->grid().node(i); }
  double v_node(int j) const { return v_->grid().node(j); }

  // Largest |psi'| and |phi'| over the nodes, used by the CFL rule.
  double max_kinetic_slope() const { return max_dpsi_; }
  double max_potential_slope() const { return max_dphi_; }
  double cfl_limit() const;

  // Samples f(x, v) at the nodes (rows = x, cols = v).
  Eigen::MatrixXd sample(const std::function<double(double, double)>& f) const;

  double mass(const Eigen::MatrixXd& h) const;  // sum h Theta
  double norm_sq(const Eigen::MatrixXd& h) const;
  double grad_v_sq(const Eigen::MatrixXd& h) const;
  Eigen::MatrixXd remove_mean(const Eigen::MatrixXd& h) const;
  // Velocity average Pi h at the x nodes.
  Eigen::VectorXd velocity_average(const Eigen::MatrixXd& h) const;
  // Theta-weighted transport T h on the grid (the discrete d_x, d_v part).
  Eigen::MatrixXd transport(const Eigen::MatrixXd& h) const;
  // Velocity Laplacian S h = -grad_v^* grad_v h on the grid.
  Eigen::MatrixXd collision(const Eigen::MatrixXd& h) const;
  // sum_i mu_i |g_i|^2_{H^-1(gamma)} with the full H1(gamma) norm
  // |u|^2 + |d_v u|^2 on the test side.
  double dual_v_norm_sq(const Eigen::MatrixXd& g) const;

  // Antisymmetric flux matrix of the transport, flattened column-major.
  const Eigen::SparseMatrix<double>& flux() const { return flux_; }
  Eigen::VectorXd cell_mass() const;  // flattened mu_i gamma_j
  Eigen::MatrixXd velocity_stiffness() const;

 private:
  HamiltonianSpec spec_;
  std::unique_ptr<SpectralOperator> x_;
  std::unique_ptr<SpectralOperator> v_;
  double max_dpsi_ = 0.0;
  double max_dphi_ = 0.0;
  Eigen::SparseMatrix<double> flux_;
  Eigen::MatrixXd kv_;  // D^T W D on the velocity grid
  Eigen::LLT<Eigen::MatrixXd> dual_factor_;
};

class KineticStepper {
 public:
  // Throws CFLViolation if dt exceeds grid.cfl_limit().
  KineticStepper(const PhaseGrid& grid, double xi, double dt);
  ~KineticStepper();
  KineticStepper(const KineticStepper&) = delete;
  KineticStepper& operator=(const KineticStepper&) = delete;

  double dt() const { return dt_; }
  double xi() const { return xi_; }
  void step(Eigen::MatrixXd& h) const;

 private:
  struct Factors;
  const PhaseGrid* grid_;
  double xi_;
  double dt_;
  std::unique_ptr<Factors> factors_;
};

// Samples of h on an equispaced window [start, start + tau], both ends
// included. The time derivative is only present for synthetic fields; for
// solutions the transport residual is bounded through xi |grad_v h|.
struct Trajectory {
  double start = 0.0;
  double tau = 1.0;
  std::vector<Eigen::MatrixXd> fields;
  std::vector<Eigen::MatrixXd> time_derivative;
};

struct DecaySeries {
  double xi = 1.0;
  double tau = 1.0;
  double dt = 0.0;
  double h0_sup = 0.0;
  double h0_norm_sq = 0.0;
  std::vector<double> t;
  std::vector<double> norm_sq;
  std::vector<double> grad_v_sq;
  std::vector<double> H_tau;            // NaN where t + tau exceeds the run
  std::vector<double> dissip_residual;  // largest |r| over the steps since the previous row
  std::vector<double> mass_drift;
  std::vector<double> sup;              // max |h|
  std::vector<double> bound_value;      // filled by check_decay_bound, NaN otherwise
  std::vector<int> violated;
  std::vector<Trajectory> snapshots;

  double max_dissip_residual() const;
  bool monotone(double tolerance) const;
  void write_csv(const std::string& path) const;
};

struct RunOptions {
  double tau = 1.0;
  double t_end = 20.0;
  int samples_per_tau = 32;  // rows of the series per tau; also the window resolution
  double cfl_fraction = 0.9;
  std::vector<double> snapshot_starts;  // windows recorded as Trajectory
};

// Smooth bounded default initial datum: a cosine (torus) or tanh (line) in
// x plus tanh(v), before mean removal.
Eigen::MatrixXd default_initial(const PhaseGrid& grid);

// Largest dt = tau / (samples_per_tau k) below cfl_fraction times the CFL limit.
double choose_time_step(const PhaseGrid& grid, const RunOptions& options);

DecaySeries run(const PhaseGrid& grid, const Eigen::MatrixXd& h0, double xi, const RunOptions& options);

struct BoundReport {
  double max_ratio = 0.0;      // max over t of H_tau(t) / bound(t)
  double slack = 0.05;
  bool pass = false;
  double pointwise_ratio = 0.0;  // worst corollary ratio |h(t)|^2 / pointwise bound
  bool pointwise_pass = false;
  int worst_row = -1;
};

// Compares H_tau with bound(t) and the pointwise form with pointwise(t)
// (both optional in the sense that an empty function skips that part).
// Writes bound_value and violated into the series.
BoundReport check_decay_bound(DecaySeries& series, const std::function<double(double)>& bound,
                              const std::function<double(double)>& pointwise, double slack = 0.05);

// Pointwise companions of the two decay theorems.
std::function<double(double)> exponential_pointwise(double lambda_bar, double tau, double h0_norm_sq);
std::function<double(double)> algebraic_pointwise(const AlgebraicEnvelope& envelope, double tau,
                                                  double h0_norm_sq);

struct InequalityCheck {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  bool ok = false;
};

InequalityCheck averaging_lemma_check(const PhaseGrid& grid, const Trajectory& trajectory, double xi,
                                      double K_avg);
InequalityCheck modified_poincare_check(const PhaseGrid& grid, const Trajectory& trajectory, double xi,
                                        double lambda_P);

// Least-squares slope of -log H_tau over the rows where H_tau lies between
// floor and ceiling times H_tau(0).
double fitted_rate(const DecaySeries& series, double ceiling = 0.5, double floor = 1e-9);

// Random smooth mean-zero trajectory with an exact time derivative: a sum of
// separable modes a(t) b(x) c(v) on low frequencies.
Trajectory random_smooth_trajectory(const PhaseGrid& grid, double tau, int samples, std::uint64_t seed);

}  // namespace kfp
