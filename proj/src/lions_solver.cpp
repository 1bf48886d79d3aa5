#include "kfp/lions_solver.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "kfp/errors.hpp"
#include "quadrature.hpp"

namespace kfp {

namespace {

std::string sci(double x) {
  std::ostringstream os;
  os << std::setprecision(3) << x;
  return os.str();
}

constexpr double kPi = std::numbers::pi;

// Integrals over [0, tau] of products of the time profiles, divided by tau,
// for one channel with rate zeta > 0.
struct ChannelIntegrals {
  double zeta, tau, E, V;

  ChannelIntegrals(double z, double t) : zeta(z), tau(t), E(std::exp(-z * t)), V(-std::expm1(-2.0 * z * t) / (2.0 * z * t)) {}

  // cos(omega t) against exp(-zeta t); against exp(-zeta (tau - t)) multiply by (-1)^j.
  double cos_exp(int j) const {
    const double w = j * kPi / tau;
    const double sign = (j % 2 == 0) ? 1.0 : -1.0;
    return zeta * (1.0 - sign * E) / (tau * (zeta * zeta + w * w));
  }
  // cos(omega t) against t exp(-zeta t); the mirrored ramp picks up (-1)^j.
  double cos_ramp(int j) const {
    const double w = j * kPi / tau;
    const std::complex<double> s(zeta, -w);
    const std::complex<double> es = std::exp(-s * tau);
    return std::real((1.0 - es * (1.0 + s * tau)) / (s * s)) / tau;
  }
  double exp_ramp_same() const {  // exp(-zeta t) against t exp(-zeta t)
    const double x = 2.0 * zeta * tau;
    return -(std::expm1(-x) + x * std::exp(-x)) / (4.0 * zeta * zeta * tau);
  }
  double exp_ramp_cross() const { return 0.5 * E * tau; }
  double ramp_ramp_same() const {
    const double a = 2.0 * zeta;
    const double x = a * tau;
    return (2.0 - std::exp(-x) * (x * x + 2.0 * x + 2.0)) / (a * a * a * tau);
  }
  double ramp_ramp_cross() const { return E * tau * tau / 6.0; }
};

// Profile values (derivative order 0, 1, 2) at time t.
struct Profiles {
  double fwd, bwd, fwd_ramp, bwd_ramp;
};

Profiles profiles(double t, double zeta, double tau, int order) {
  const double s = tau - t;
  const double a = std::exp(-zeta * t);
  const double b = std::exp(-zeta * s);
  Profiles p{};
  switch (order) {
    case 0:
      p = {a, b, t * a, s * b};
      break;
    case 1:
      p = {-zeta * a, zeta * b, (1.0 - zeta * t) * a, -(1.0 - zeta * s) * b};
      break;
    default:
      p = {zeta * zeta * a, zeta * zeta * b, (zeta * zeta * t - 2.0 * zeta) * a,
           (zeta * zeta * s - 2.0 * zeta) * b};
      break;
  }
  return p;
}

double cos_profile(double w, double t, int order) {
  switch (order) {
    case 0: return std::cos(w * t);
    case 1: return -w * std::sin(w * t);
    default: return -w * w * std::cos(w * t);
  }
}

// Composite Gauss nodes and weights on [0, tau], weights divided by tau.
void time_quadrature(double tau, int panels, std::vector<double>& nodes, std::vector<double>& weights) {
  detail::composite_gauss(0.0, tau, panels, nodes, weights);
  for (double& w : weights) w /= tau;
}

}  // namespace

ChannelField ChannelField::zero(int cosines, int channels) {
  ChannelField f;
  f.cosine = Eigen::MatrixXd::Zero(cosines, channels);
  f.forward = f.backward = f.forward_ramp = f.backward_ramp = Eigen::VectorXd::Zero(channels);
  return f;
}

ChannelField& ChannelField::operator+=(const ChannelField& o) {
  cosine += o.cosine;
  forward += o.forward;
  backward += o.backward;
  forward_ramp += o.forward_ramp;
  backward_ramp += o.backward_ramp;
  return *this;
}

ChannelField& ChannelField::operator-=(const ChannelField& o) {
  cosine -= o.cosine;
  forward -= o.forward;
  backward -= o.backward;
  forward_ramp -= o.forward_ramp;
  backward_ramp -= o.backward_ramp;
  return *this;
}

ChannelField& ChannelField::operator*=(double s) {
  cosine *= s;
  forward *= s;
  backward *= s;
  forward_ramp *= s;
  backward_ramp *= s;
  return *this;
}

double wave_b(double z) {
  if (z < 0.5) {
    // Taylor series; the z^2 and z^3 terms cancel exactly.
    double sum = 0.0;
    double zn = z * z * z;  // z^n / n! built incrementally from n = 3
    double fact = 6.0;
    double fact2 = 1.0;  // (n-2)!
    for (int n = 4; n < 40; ++n) {
      zn *= z;
      fact *= n;
      fact2 *= (n - 2);
      const double c = (std::ldexp(1.0, n) - 2.0) / fact - 1.0 / fact2;
      sum += ((n % 2 == 0) ? 1.0 : -1.0) * c * zn;
    }
    return sum;
  }
  const double one_minus = -std::expm1(-z);
  return one_minus * one_minus - z * z * std::exp(-z);
}

double wave_f0(double t, double zeta, double tau) {
  const double a = std::exp(-zeta * t);
  const double k = -std::expm1(-zeta * tau);
  const double E = 1.0 - k;
  return -2.0 / (zeta * k * k) * (-std::expm1(-zeta * t)) * (-std::expm1(-zeta * (tau - t))) *
         (a - 0.5 * (1.0 + E));
}

double wave_f1(double t, double zeta, double tau) {
  const double a = std::exp(-zeta * t);
  const double k = -std::expm1(-zeta * tau);
  return 6.0 / (zeta * zeta * k * k) * (-std::expm1(-zeta * t)) * (-std::expm1(-zeta * (tau - t))) * a;
}

double wave_f0_dt(double t, double zeta, double tau) {
  const double a = std::exp(-zeta * t);
  const double b = std::exp(-zeta * (tau - t));
  const double k = -std::expm1(-zeta * tau);
  const double c = 0.5 * (2.0 - k);
  const double ma = -std::expm1(-zeta * t);
  const double mb = -std::expm1(-zeta * (tau - t));
  return -2.0 / (k * k) * (a * mb * (a - c) - b * ma * (a - c) - a * ma * mb);
}

double wave_f1_dt(double t, double zeta, double tau) {
  const double a = std::exp(-zeta * t);
  const double b = std::exp(-zeta * (tau - t));
  const double k = -std::expm1(-zeta * tau);
  const double ma = -std::expm1(-zeta * t);
  const double mb = -std::expm1(-zeta * (tau - t));
  return 6.0 / (zeta * k * k) * a * (a * mb - b * ma - ma * mb);
}

LionsSolver::LionsSolver(const SpectralOperator& op, double tau, int m) : op_(&op), tau_(tau), m_(m) {
  if (op.eigenvectors().size() == 0) {
    throw ValidationError("lions.operator", "the divergence solver needs eigenvectors");
  }
  if (!(tau > 0.0) || m < 4) throw ValidationError("lions.tau", "need tau > 0 and at least 4 time samples");
  const int n = op.size();
  zeta_.resize(n);
  zeta_[0] = 0.0;
  for (int k = 1; k < n; ++k) zeta_[k] = std::sqrt(std::max(0.0, op.eigenvalues()[k]));
  if (tau * zeta_[1] < 1e-6) {
    throw Error(ErrorKind::IllConditioned, "tau sqrt(c_phi) = " + sci(tau * zeta_[1]) + " < 1e-6");
  }
  for (int k = 1; k < n; ++k) {
    if (wave_b(2.0 * tau * zeta_[k]) < 1e-12) {
      throw Error(ErrorKind::IllConditioned,
                  "B(2 tau zeta) = " + sci(wave_b(2.0 * tau * zeta_[k])) + " < 1e-12 in channel " +
                      std::to_string(k));
    }
  }
  // Type-I DCT: f(t_i) = sum_j a_j cos(pi i j / (m-1)).
  const int big_n = m - 1;
  dct_.resize(m, m);
  for (int j = 0; j < m; ++j) {
    const double end_j = (j == 0 || j == big_n) ? 0.5 : 1.0;
    for (int i = 0; i < m; ++i) {
      const double end_i = (i == 0 || i == big_n) ? 0.5 : 1.0;
      dct_(j, i) = 2.0 / big_n * end_i * end_j * std::cos(kPi * static_cast<double>(i) * j / big_n);
    }
  }
}

std::vector<double> LionsSolver::grid() const {
  std::vector<double> t(m_);
  for (int j = 0; j < m_; ++j) t[j] = time(j);
  t.back() = tau_;
  return t;
}

ChannelField LionsSolver::interpolate(const Eigen::MatrixXd& samples) const {
  if (samples.rows() != m_ || samples.cols() != op_->size()) {
    throw ValidationError("lions.source", "source samples must be times x nodes");
  }
  const Eigen::MatrixXd modes = samples * op_->mass().asDiagonal() * op_->eigenvectors();
  ChannelField f = ChannelField::zero(m_, op_->size());
  f.cosine = dct_ * modes;
  f.cosine(0, 0) = 0.0;  // space-time mean
  return f;
}

Eigen::MatrixXd LionsSolver::evaluate(const ChannelField& f, const std::vector<double>& times,
                                      int derivative) const {
  const int nt = static_cast<int>(times.size());
  const int nc = static_cast<int>(f.cosine.rows());
  const int n = op_->size();
  Eigen::MatrixXd basis(nt, nc);
  for (int i = 0; i < nt; ++i) {
    for (int j = 0; j < nc; ++j) basis(i, j) = cos_profile(j * kPi / tau_, times[i], derivative);
  }
  Eigen::MatrixXd channels = basis * f.cosine;
  for (int i = 0; i < nt; ++i) {
    for (int k = 1; k < n; ++k) {
      if (f.forward[k] == 0.0 && f.backward[k] == 0.0 && f.forward_ramp[k] == 0.0 && f.backward_ramp[k] == 0.0) {
        continue;
      }
      const Profiles p = profiles(times[i], zeta_[k], tau_, derivative);
      channels(i, k) += f.forward[k] * p.fwd + f.backward[k] * p.bwd + f.forward_ramp[k] * p.fwd_ramp +
                        f.backward_ramp[k] * p.bwd_ramp;
    }
  }
  return channels * op_->eigenvectors().transpose();
}

double LionsSolver::inner(const ChannelField& a, const ChannelField& b) const {
  const int nc = static_cast<int>(a.cosine.rows());
  double s = a.cosine.row(0).dot(b.cosine.row(0)) + 0.5 * (a.cosine.bottomRows(nc - 1).cwiseProduct(b.cosine.bottomRows(nc - 1))).sum();
  for (int k = 1; k < op_->size(); ++k) {
    const ChannelIntegrals ci(zeta_[k], tau_);
    const double ea[4] = {a.forward[k], a.backward[k], a.forward_ramp[k], a.backward_ramp[k]};
    const double eb[4] = {b.forward[k], b.backward[k], b.forward_ramp[k], b.backward_ramp[k]};
    const bool any_a = ea[0] != 0.0 || ea[1] != 0.0 || ea[2] != 0.0 || ea[3] != 0.0;
    const bool any_b = eb[0] != 0.0 || eb[1] != 0.0 || eb[2] != 0.0 || eb[3] != 0.0;
    if (!any_a && !any_b) continue;
    // Cosine against the four exponential profiles, both directions.
    for (int j = 0; j < nc; ++j) {
      const double sign = (j % 2 == 0) ? 1.0 : -1.0;
      const double ce = ci.cos_exp(j);
      const double cr = ci.cos_ramp(j);
      const double prof[4] = {ce, sign * ce, cr, sign * cr};
      for (int p = 0; p < 4; ++p) {
        s += prof[p] * (a.cosine(j, k) * eb[p] + b.cosine(j, k) * ea[p]);
      }
    }
    // Exponential profiles against each other (symmetric Gram matrix).
    const double g[4][4] = {
        {ci.V, ci.E, ci.exp_ramp_same(), ci.exp_ramp_cross()},
        {ci.E, ci.V, ci.exp_ramp_cross(), ci.exp_ramp_same()},
        {ci.exp_ramp_same(), ci.exp_ramp_cross(), ci.ramp_ramp_same(), ci.ramp_ramp_cross()},
        {ci.exp_ramp_cross(), ci.exp_ramp_same(), ci.ramp_ramp_cross(), ci.ramp_ramp_same()},
    };
    for (int p = 0; p < 4; ++p) {
      for (int q = 0; q < 4; ++q) s += ea[p] * g[p][q] * eb[q];
    }
  }
  return s;
}

double LionsSolver::wave_denominator(int k) const {
  // int G_+ e^{-zeta s} dU = V^{-1} E^2 - V = -B(2 tau zeta) / (2 tau zeta (1 - E^2)).
  const double z = 2.0 * tau_ * zeta_[k];
  return -wave_b(z) / (z * -std::expm1(-z));
}

WaveProjection LionsSolver::project_n(const ChannelField& f) const {
  const int n = op_->size();
  const int nc = static_cast<int>(f.cosine.rows());
  WaveProjection out;
  out.plus = ChannelField::zero(nc, n);
  out.minus = ChannelField::zero(nc, n);
  out.q_plus = Eigen::VectorXd::Zero(n);
  out.q_minus = Eigen::VectorXd::Zero(n);
  for (int k = 1; k < n; ++k) {
    const ChannelIntegrals ci(zeta_[k], tau_);
    // <e^{-zeta t}, f_k> and <e^{-zeta (tau - t)}, f_k>.
    double fwd = 0.0, bwd = 0.0;
    for (int j = 0; j < nc; ++j) {
      const double c = ci.cos_exp(j) * f.cosine(j, k);
      fwd += c;
      bwd += (j % 2 == 0) ? c : -c;
    }
    fwd += f.forward[k] * ci.V + f.backward[k] * ci.E + f.forward_ramp[k] * ci.exp_ramp_same() +
           f.backward_ramp[k] * ci.exp_ramp_cross();
    bwd += f.forward[k] * ci.E + f.backward[k] * ci.V + f.forward_ramp[k] * ci.exp_ramp_cross() +
           f.backward_ramp[k] * ci.exp_ramp_same();
    // V^{-1} E = 2 tau zeta E / (1 - E^2).
    const double z = 2.0 * tau_ * zeta_[k];
    const double vinv_e = z * ci.E / -std::expm1(-z);
    const double den = wave_denominator(k);
    out.q_plus[k] = (vinv_e * bwd - fwd) / den;
    out.q_minus[k] = (vinv_e * fwd - bwd) / den;
  }
  out.plus.forward = out.q_plus;
  out.minus.backward = out.q_minus;
  out.perp = f;
  out.perp -= out.plus;
  out.perp -= out.minus;
  return out;
}

LaxMilgram LionsSolver::solve_lax_milgram(const ChannelField& f) const {
  const int n = op_->size();
  const int nc = static_cast<int>(f.cosine.rows());
  LaxMilgram out;
  out.source_norm = norm(f);
  {
    const WaveProjection p = project_n(f);
    ChannelField wave = p.plus;
    wave += p.minus;
    const double wn = norm(wave);
    if (wn > 1e-8 * std::max(1.0, out.source_norm)) {
      throw Error(ErrorKind::SourceNotOrthogonal,
                  "source has a wave component of norm " + std::to_string(wn));
    }
  }
  if (f.forward_ramp.cwiseAbs().maxCoeff() > 0.0 || f.backward_ramp.cwiseAbs().maxCoeff() > 0.0) {
    throw ValidationError("lions.source", "ramp profiles are not accepted as sources");
  }
  ChannelField u = ChannelField::zero(nc, n);
  const Eigen::VectorXd& lam = op_->eigenvalues();
  for (int k = 0; k < n; ++k) {
    const double l = k == 0 ? 0.0 : lam[k];
    for (int j = (k == 0 ? 1 : 0); j < nc; ++j) {
      const double w = j * kPi / tau_;
      u.cosine(j, k) = f.cosine(j, k) / (w * w + l);
    }
    if (k == 0) continue;
    // Neumann solution for exp(-zeta t):
    //   t e^{-zeta t} / (2 zeta) + A e^{-zeta t} + B e^{-zeta (tau - t)},
    // and its mirror image for exp(-zeta (tau - t)).
    const double zeta = zeta_[k];
    const double E = std::exp(-zeta * tau_);
    const double one_minus = -std::expm1(-2.0 * zeta * tau_);
    const double A = 1.0 / (2.0 * zeta * zeta) + tau_ * E * E / (2.0 * zeta * one_minus);
    const double B = tau_ * E / (2.0 * zeta * one_minus);
    const double p = f.forward[k], q = f.backward[k];
    u.forward_ramp[k] = p / (2.0 * zeta);
    u.backward_ramp[k] = q / (2.0 * zeta);
    u.forward[k] = p * A + q * B;
    u.backward[k] = p * B + q * A;
  }
  out.u = u;

  std::vector<double> tq, wq;
  time_quadrature(tau_, std::max(32, nc / 4), tq, wq);
  const Eigen::MatrixXd ut = evaluate(u, tq, 1);
  const Eigen::MatrixXd utt = evaluate(u, tq, 2);
  const Eigen::MatrixXd u0 = evaluate(u, tq, 0);
  const Eigen::MatrixXd dense_grad = Eigen::MatrixXd(op_->gradient());
  double s = 0.0;
  for (std::size_t i = 0; i < tq.size(); ++i) {
    const Eigen::VectorXd a = ut.row(i).transpose();
    const Eigen::VectorXd b = utt.row(i).transpose();
    const Eigen::VectorXd gx = dense_grad * u0.row(i).transpose();
    const Eigen::VectorXd gxt = dense_grad * a;
    s += wq[i] * (op_->norm_sq(a) + op_->norm_sq(b) + op_->edge_norm_sq(dense_grad * a) + op_->edge_norm_sq(gx) +
                  op_->edge_norm_sq(gxt) + op_->norm_sq(op_->edge_difference(gx)));
  }
  out.grad_h1_sq = s;
  const Eigen::MatrixXd ends = evaluate(u, {0.0, tau_}, 0);
  out.end_trace = std::max(std::sqrt(op_->edge_norm_sq(dense_grad * ends.row(0).transpose())),
                           std::sqrt(op_->edge_norm_sq(dense_grad * ends.row(1).transpose())));
  return out;
}

DivergenceSolution LionsSolver::solve_divergence(const Eigen::MatrixXd& samples) const {
  const int n = op_->size();
  const ChannelField f = interpolate(samples);
  const WaveProjection proj = project_n(f);
  const LaxMilgram lm = solve_lax_milgram(proj.perp);
  const Eigen::MatrixXd& vecs = op_->eigenvectors();
  const Eigen::MatrixXd dense_grad = Eigen::MatrixXd(op_->gradient());

  // Z0 and the spatial potential w (Zx = grad w), with time derivatives.
  struct Fields {
    Eigen::MatrixXd z0, z0t, w, wt;
  };
  auto fields = [&](const std::vector<double>& times) {
    Fields out;
    out.z0 = evaluate(lm.u, times, 1);
    out.z0t = evaluate(lm.u, times, 2);
    out.w = evaluate(lm.u, times, 0);
    out.wt = out.z0;
    const int nt = static_cast<int>(times.size());
    Eigen::MatrixXd c0 = Eigen::MatrixXd::Zero(nt, n), c0t = c0, cw = c0, cwt = c0;
    for (int i = 0; i < nt; ++i) {
      const double t = times[i];
      const double s = tau_ - t;
      for (int k = 1; k < n; ++k) {
        const double z = zeta_[k];
        const double qp = proj.q_plus[k], qm = proj.q_minus[k];
        const double a = std::exp(-z * t), b = std::exp(-z * s);
        const double f0a = wave_f0(t, z, tau_), f0b = wave_f0(s, z, tau_);
        const double f1a = wave_f1(t, z, tau_), f1b = wave_f1(s, z, tau_);
        const double d0a = wave_f0_dt(t, z, tau_), d0b = wave_f0_dt(s, z, tau_);
        const double d1a = wave_f1_dt(t, z, tau_), d1b = wave_f1_dt(s, z, tau_);
        // The backward wave solves the mirrored problem, so its time slot
        // changes sign.
        c0(i, k) = qp * f0a * a - qm * f0b * b;
        c0t(i, k) = qp * (d0a - z * f0a) * a - qm * (-d0b + z * f0b) * b;
        cw(i, k) = qp * f1a * a + qm * f1b * b;
        cwt(i, k) = qp * (d1a - z * f1a) * a + qm * (-d1b + z * f1b) * b;
      }
    }
    out.z0 += c0 * vecs.transpose();
    out.z0t += c0t * vecs.transpose();
    out.w += cw * vecs.transpose();
    out.wt += cwt * vecs.transpose();
    return out;
  };

  DivergenceSolution sol;
  sol.times = grid();
  const Fields g = fields(sol.times);
  sol.Z0 = g.z0;
  sol.Zx = g.w * dense_grad.transpose();
  sol.u = evaluate(lm.u, sol.times, 0);
  sol.plus = evaluate(proj.plus, sol.times, 0);
  sol.minus = evaluate(proj.minus, sol.times, 0);
  sol.lm_grad_h1_sq = lm.grad_h1_sq;

  // Residual of -d_t Z0 + grad^* Zx = f at the grid times, with grad^* the
  // discrete adjoint M^{-1} D^T W.
  const Eigen::VectorXd mean_removed_shift = Eigen::VectorXd::Constant(
      n, [&] {
        double s = 0.0;
        for (int j = 0; j < m_; ++j) {
          const double w = (j == 0 || j == m_ - 1) ? 0.5 / (m_ - 1) : 1.0 / (m_ - 1);
          s += w * op_->weighted_mean(samples.row(j).transpose());
        }
        return s;
      }());
  double res = 0.0, fn = 0.0;
  const Eigen::VectorXd minv = op_->mass().cwiseInverse();
  for (int j = 0; j < m_; ++j) {
    const double w = (j == 0 || j == m_ - 1) ? 0.5 / (m_ - 1) : 1.0 / (m_ - 1);
    const Eigen::VectorXd fj = samples.row(j).transpose() - mean_removed_shift;
    const Eigen::VectorXd zx = sol.Zx.row(j).transpose();
    const Eigen::VectorXd adj = minv.cwiseProduct(op_->gradient().transpose() * op_->edge_weight().cwiseProduct(zx));
    const Eigen::VectorXd r = -g.z0t.row(j).transpose() + adj - fj;
    res += w * op_->norm_sq(r);
    fn += w * op_->norm_sq(fj);
  }
  sol.residual = std::sqrt(res);
  sol.source_norm = std::sqrt(fn);

  // Traces at both ends.
  const Fields e = fields({0.0, tau_});
  double trace = 0.0;
  for (int i = 0; i < 2; ++i) {
    trace = std::max(trace, std::sqrt(op_->norm_sq(e.z0.row(i).transpose())));
    trace = std::max(trace, std::sqrt(op_->edge_norm_sq(dense_grad * e.w.row(i).transpose())));
  }
  sol.boundary_trace = trace;

  // H1 norm of (Z0, Zx) by composite Gauss quadrature in time.
  std::vector<double> tq, wq;
  time_quadrature(tau_, std::max(32, m_ / 4), tq, wq);
  const Fields q = fields(tq);
  double h1 = 0.0;
  for (std::size_t i = 0; i < tq.size(); ++i) {
    const Eigen::VectorXd z0 = q.z0.row(i).transpose();
    const Eigen::VectorXd z0t = q.z0t.row(i).transpose();
    const Eigen::VectorXd zx = dense_grad * q.w.row(i).transpose();
    const Eigen::VectorXd zxt = dense_grad * q.wt.row(i).transpose();
    h1 += wq[i] * (op_->norm_sq(z0) + op_->norm_sq(z0t) + op_->edge_norm_sq(dense_grad * z0) +
                   op_->edge_norm_sq(zx) + op_->edge_norm_sq(zxt) + op_->norm_sq(op_->edge_difference(zx)));
  }
  sol.h1_norm = std::sqrt(h1);
  return sol;
}

LionsAudit empirical_lions_constant(const SpectralOperator& op, double tau, int n_random, std::uint64_t seed,
                                    int m) {
  const DualNorm dual(op, tau, m);
  const int n = op.size();
  const Eigen::MatrixXd& vecs = op.eigenvectors();
  auto mean_zero = [&](Eigen::MatrixXd g) {
    double mean = 0.0;
    for (int j = 0; j < m; ++j) mean += dual.trapezoid_weight(j) * op.weighted_mean(g.row(j).transpose());
    g.array() -= mean;
    return g;
  };
  LionsAudit audit;
  auto record = [&](const Eigen::MatrixXd& g) {
    const double num = dual.inner_nodes(g, g);
    const double den = dual.gradient(g);
    if (!(num > 1e-24) || !(den > 0.0)) return;
    const double r = num / (den * den);
    audit.ratios.push_back(r);
    if (r > audit.constant) {
      audit.constant = r;
      audit.argmax = static_cast<int>(audit.ratios.size()) - 1;
    }
  };
  const int kmax = std::min(4, n);
  for (int j = 0; j <= 3; ++j) {
    for (int k = 0; k < kmax; ++k) {
      if (j == 0 && k == 0) continue;
      Eigen::MatrixXd g(m, n);
      for (int i = 0; i < m; ++i) g.row(i) = std::cos(j * kPi * i / (m - 1)) * vecs.col(k).transpose();
      record(mean_zero(g));
    }
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const int kr = std::min(8, n);
  for (int s = 0; s < n_random; ++s) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(m, n);
    for (int j = 0; j < 8; ++j) {
      for (int k = 0; k < kr; ++k) {
        const double c = normal(rng) / (1.0 + j + k);
        for (int i = 0; i < m; ++i) g.row(i) += c * std::cos(j * kPi * i / (m - 1)) * vecs.col(k).transpose();
      }
    }
    record(mean_zero(g));
  }
  audit.samples = static_cast<int>(audit.ratios.size());
  return audit;
}

}  // namespace kfp
