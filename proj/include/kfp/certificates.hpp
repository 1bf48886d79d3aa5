#pragma once

// Explicit constants of the hypocoercive decay estimates and the records
// that carry them, with a note on where every number came from.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kfp/model.hpp"

namespace kfp {

enum class ConstantSource { declared, eigensolve, empirical, closed_form };
const char* source_name(ConstantSource source);

struct Provenance {
  std::string name;
  double value = 0.0;
  std::string note;
};

struct AveragingConstant {
  double C1 = 0.0;
  double C2 = 0.0;
  double K_avg = 0.0;
  // Tensorised route only: extra term for factors whose fourth derivative
  // does not average to zero. It scales like sqrt(d) through |grad phi|.
  bool correction = false;
  double correction_term = 0.0;
  double sqrt_d_coefficient = 0.0;
};

struct LionsConstants {
  double C_P = 0.0;
  double C_LM = 0.0;
  double C_N = 0.0;
  double C_div_sq = 0.0;
  double C_lions = 0.0;
};

struct RateCertificate {
  double xi = 0.0;
  double tau = 0.0;
  int dim = 1;
  double L_phi = 0.0;
  double c_phi = 0.0;
  ConstantSource c_phi_source = ConstantSource::eigensolve;
  double c_psi = 0.0;
  ConstantSource c_psi_source = ConstantSource::eigensolve;
  bool has_c_psi = false;  // false when the velocity marginal has no gap
  double c1_phi = 0.0;
  double c2_phi = 0.0;
  bool c1_empirical = false;
  bool c2_empirical = false;
  double rho_scaled = 0.0;  // spectral radius of ||grad psi||^2 M^{-1}
  double rho_second = 0.0;  // spectral radius of int grad psi (x) grad psi
  AveragingConstant averaging;              // the one used for the rate
  AveragingConstant averaging_general;      // general route, when computable
  std::optional<AveragingConstant> averaging_tensorised;
  bool tensorised = false;
  LionsConstants lions;
  double lambda_P = 0.0;     // modified Poincare constant
  double lambda_bar = 0.0;   // exponential rate, 0 when c_psi is unavailable
  std::vector<Provenance> entries;

  const Provenance* entry(const std::string& name) const;
};

double l_phi(double c2_phi, int dim);

AveragingConstant k_avg_general(const MatrixM& matrix, const MomentTable& table, double L_phi);

// Factor moments come from the MomentTable of a separable kinetic energy.
AveragingConstant k_avg_tensorised(const MomentTable& table, int dim, double grad_phi_norm,
                                   double quad_tol);

LionsConstants lions_constant(double c_phi, double c1_phi, double c2_phi, int dim, double tau);

struct Rates {
  double lambda_P = 0.0;
  double lambda_bar = 0.0;
};
Rates exponential_rate(double C_lions, double K_avg, double c_psi, double xi);

double optimal_friction(double c_psi);

double m0_constant(double tau, double lambda_P, double P_psi, double weight_moment, double h0_sup,
                   double sigma);

// Root of y -> xi y / (2 lambda_P) + M0 (y / xi)^{sigma/(sigma+1)} = H0.
double y0_root(double M0, double xi, double lambda_P, double H0, double sigma);
// Plain bisection on the same equation, kept as an independent check.
double y0_bisection(double M0, double xi, double lambda_P, double H0, double sigma);

struct AlgebraicEnvelope {
  double sigma = 0.0;
  double p = 0.0;
  double q = 0.0;
  double xi = 0.0;
  double H0 = 0.0;
  double P_psi = 0.0;
  double weight_moment = 0.0;  // || G^sigma ||_{L1(gamma)}
  double h0_sup = 0.0;
  double lambda_P = 0.0;
  double M0 = 0.0;
  double y0 = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double rate = 0.0;  // (xi^{-sigma/(sigma+1)} c1 + xi c2)^{-(sigma+1)/sigma}
  bool zero_initial = false;

  double operator()(double t) const;
};

AlgebraicEnvelope algebraic_envelope(double H0, double xi, double sigma, double M0, double y0,
                                     double lambda_P);

// int (1 + |v|^2)^{sigma * exponent} d gamma for a one-dimensional or radial
// kinetic energy. Throws DivergentMoment outside the integrable range.
double weight_moment(const HamiltonianSpec& spec, double exponent, double sigma);

// Envelope of the algebraic decay theorem for the weight
// G(v) = (1 + |v|^2)^weight_exponent: P_psi from the weighted eigensolve on
// `grid` cells, the moment of G^sigma by quadrature, then M0, y0, c1, c2.
// H0 is H_tau(0) of the run being bounded.
AlgebraicEnvelope algebraic_certificate(const HamiltonianSpec& spec, const RateCertificate& cert,
                                        double weight_exponent, double sigma, double h0_sup, double H0,
                                        int grid = 1024);

struct CertifyOptions {
  int grid = 512;  // coarse resolution of the Poincare eigensolves
  std::optional<double> c_psi;  // overrides the eigensolve
};

// Assembles the certificate for a normalised or raw spec.
RateCertificate certify(const HamiltonianSpec& spec, double xi, double tau,
                        const CertifyOptions& options = {});

}  // namespace kfp
