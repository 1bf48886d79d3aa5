#pragma once

// Ensemble simulation of the Langevin dynamics
//
//   dX = grad psi(V) dt,  dV = -grad phi(X) dt - xi grad psi(V) dt + sqrt(2 xi) dW
//
// for separable energies, and relaxation-rate estimates from ensemble means.
//
// Integrator: half kick in V from the potential, half drift in X, a full
// friction step, half drift, half kick. The friction step is the exact
// Ornstein-Uhlenbeck flow when psi = |v|^2 / 2 and an Euler-Maruyama step
// otherwise. Every path owns its random stream, derived from (seed, path),
// so results do not depend on the order in which paths are run.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kfp/model.hpp"

namespace kfp {

enum class Observable { second_moment_x, second_moment_v, energy, tabulated_x };

const char* observable_name(Observable o);

enum class InitialState { gibbs, dilated };

struct SdeConfig {
  HamiltonianSpec spec;
  double xi = 1.0;
  double dt = 1e-3;
  int n_steps = 1000;
  int n_paths = 1000;
  std::uint64_t seed = 0;
  Observable observable = Observable::energy;
  std::optional<Table1D> g_table;  // g(x) for Observable::tabulated_x
  InitialState initial = InitialState::gibbs;
  double dilation = std::sqrt(2.0);  // scale applied to a Gibbs draw (positions on a line, velocities)
  int record_every = 10;
  int blocks = 20;  // path blocks for jackknife errors and the bootstrap
};

struct SdeSeries {
  Observable observable = Observable::energy;
  double equilibrium = 0.0;  // by quadrature, not simulation
  std::vector<double> t;
  std::vector<double> mean;
  std::vector<double> stderr_;
  Eigen::MatrixXd block_means;  // rows = records, cols = path blocks

  void write_csv(const std::string& path) const;
};

// Expected value of the observable under the Gibbs measure.
double equilibrium_value(const HamiltonianSpec& spec, Observable observable,
                         const std::optional<Table1D>& g_table = std::nullopt);

// Throws Blowup if any |V| exceeds 1e6.
SdeSeries integrate(const SdeConfig& config);

struct DecayFit {
  double rate = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double t_start = 0.0;
  double t_stop = 0.0;
  int points = 0;
};

// Slope of log |mean - equilibrium| over the leading stretch of records where
// the deviation exceeds five standard errors. The 95% interval comes from a
// bootstrap over path blocks when block means are present, otherwise from the
// least-squares standard error. Throws NoDecay if the interval contains 0.
DecayFit empirical_decay(const SdeSeries& series, std::uint64_t seed = 1);

struct SweepRow {
  double xi = 0.0;
  double empirical_rate = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double certified_lambda_bar = 0.0;
};

struct FrictionSweep {
  std::vector<SweepRow> rows;
  bool rising_at_small_xi = false;   // rate(xi_0) < rate(xi_1)
  bool falling_at_large_xi = false;  // rate(xi_{n-1}) < rate(xi_{n-2})

  void write_csv(const std::string& path) const;
};

// One integrate + empirical_decay per friction value (same seed for every
// member); certified rates from the certificate at the given tau. A member
// without detectable decay gets NaN rates, and the shape flags stay false.
FrictionSweep friction_sweep(const SdeConfig& base, const std::vector<double>& xis, double tau = 1.0);

}  // namespace kfp
