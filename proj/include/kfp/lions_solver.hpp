#pragma once

// Constructive solution of the space-time divergence equation
//
//   -d_t Z0 + grad_x^* Zx = f   on [0, tau] x X,  Z = 0 at t = 0 and t = tau,
//
// for a one-dimensional spatial operator, and the Lions-constant audit built
// on it.
//
// The solver is semi-discrete. Space is the SpectralOperator's grid; time is
// continuous. A space-time field is stored per spatial eigenchannel k (rate
// zeta_k = sqrt(lambda_k)) as a combination of five time profiles,
//
//   cos(omega_j t)  (j = 0 .. J-1, omega_j = j pi / tau),
//   exp(-zeta t),   exp(-zeta (tau - t)),
//   t exp(-zeta t), (tau - t) exp(-zeta (tau - t)),
//
// which is closed under the wave projector, the Neumann-in-time elliptic
// solve and time differentiation. Sampled sources enter through their
// cosine interpolant on the uniform time grid (a type-I DCT), which matches
// the samples exactly. Every subsequent step is then exact per channel, up
// to rounding.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "kfp/spectral1d.hpp"

namespace kfp {

struct ChannelField {
  Eigen::MatrixXd cosine;         // J x n, coefficient of cos(omega_j t) e_k
  Eigen::VectorXd forward;        // n, exp(-zeta t)
  Eigen::VectorXd backward;       // n, exp(-zeta (tau - t))
  Eigen::VectorXd forward_ramp;   // n, t exp(-zeta t)
  Eigen::VectorXd backward_ramp;  // n, (tau - t) exp(-zeta (tau - t))

  static ChannelField zero(int cosines, int channels);
  ChannelField& operator+=(const ChannelField& o);
  ChannelField& operator-=(const ChannelField& o);
  ChannelField& operator*=(double s);
};

// Scalar profiles of the wave correction for one channel rate zeta > 0.
// wave_f0 and wave_f1 vanish at both ends of [0, tau].
double wave_f0(double t, double zeta, double tau);
double wave_f1(double t, double zeta, double tau);
double wave_f0_dt(double t, double zeta, double tau);
double wave_f1_dt(double t, double zeta, double tau);
// B(z) = (1 - e^{-z})^2 - z^2 e^{-z}, accurate for small z.
double wave_b(double z);

struct WaveProjection {
  ChannelField plus;   // multiples of exp(-zeta t)
  ChannelField minus;  // multiples of exp(-zeta (tau - t))
  ChannelField perp;   // f - plus - minus
  Eigen::VectorXd q_plus;
  Eigen::VectorXd q_minus;
};

struct LaxMilgram {
  ChannelField u;
  double grad_h1_sq = 0.0;  // ||grad_{t,x} u||^2 in H1
  double source_norm = 0.0;
  double end_trace = 0.0;   // max of ||grad_x u(0)||, ||grad_x u(tau)||
};

struct DivergenceSolution {
  std::vector<double> times;
  Eigen::MatrixXd Z0;  // times x nodes
  Eigen::MatrixXd Zx;  // times x edges
  Eigen::MatrixXd u;   // times x nodes
  Eigen::MatrixXd plus;   // P_{N,+} f sampled
  Eigen::MatrixXd minus;  // P_{N,-} f sampled
  double source_norm = 0.0;
  double residual = 0.0;        // L2 norm of -d_t Z0 + grad^* Zx - f on the grid
  double h1_norm = 0.0;         // ||Z||_{H1}
  double boundary_trace = 0.0;  // largest L2 norm of a trace at t = 0 or tau
  double lm_grad_h1_sq = 0.0;
};

class LionsSolver {
 public:
  // m uniform time samples on [0, tau] including both ends. Throws
  // IllConditioned when tau sqrt(lambda_1) < 1e-6 or B(2 tau zeta_k) < 1e-12.
  LionsSolver(const SpectralOperator& op, double tau, int m = 256);

  double tau() const { return tau_; }
  int times() const { return m_; }
  double time(int j) const { return tau_ * j / (m_ - 1); }
  const SpectralOperator& op() const { return *op_; }
  const Eigen::VectorXd& rates() const { return zeta_; }

  // Cosine interpolant of nodal samples (rows = the m grid times); the
  // space-time mean is removed.
  ChannelField interpolate(const Eigen::MatrixXd& samples) const;
  // Nodal values (rows = times) of the field or of its time derivatives.
  Eigen::MatrixXd evaluate(const ChannelField& f, const std::vector<double>& times, int derivative = 0) const;
  std::vector<double> grid() const;

  // L2(U_tau x mu) inner product, in closed form.
  double inner(const ChannelField& a, const ChannelField& b) const;
  double norm(const ChannelField& f) const { return std::sqrt(std::max(0.0, inner(f, f))); }

  WaveProjection project_n(const ChannelField& f) const;

  // Neumann-in-time solve of (-d_t^2 + A) u = f. Throws SourceNotOrthogonal
  // if the wave component of f exceeds 1e-8 relative to |f|.
  LaxMilgram solve_lax_milgram(const ChannelField& f) const;

  DivergenceSolution solve_divergence(const Eigen::MatrixXd& samples) const;

 private:
  double wave_denominator(int k) const;

  const SpectralOperator* op_;
  double tau_;
  int m_;
  Eigen::VectorXd zeta_;
  Eigen::MatrixXd dct_;  // m x m, samples -> cosine coefficients
};

struct LionsAudit {
  double constant = 0.0;  // max ratio |g|^2 / |grad g|_{H^-1}^2
  int samples = 0;
  int argmax = -1;
  std::vector<double> ratios;
};

// Ratios over the low space-time modes (products of cos(j pi t / tau),
// j <= 3, and the first four spatial eigenvectors, constant excluded) plus
// n_random random mean-zero fields.
LionsAudit empirical_lions_constant(const SpectralOperator& op, double tau, int n_random,
                                    std::uint64_t seed, int m = 256);

}  // namespace kfp
