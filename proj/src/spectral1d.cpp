#include "kfp/spectral1d.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "kfp/errors.hpp"

namespace kfp {

namespace {

struct Eig {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;  // orthonormal for diag(weights)
};

// Solves K y = lambda diag(weights) y for a symmetric K that is tridiagonal
// (optionally with a periodic corner). Symmetric scaling by diag(weights)^{-1/2}
// turns it into a standard problem.
Eig weighted_eig(const Eigen::VectorXd& diag, const Eigen::VectorXd& off, double corner,
                 bool periodic, const Eigen::VectorXd& weights, bool vectors) {
  const Eigen::Index n = diag.size();
  const Eigen::VectorXd s = weights.cwiseSqrt().cwiseInverse();
  Eig out;
  const int opts = vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  if (!periodic) {
    Eigen::VectorXd d = diag.cwiseProduct(s).cwiseProduct(s);
    Eigen::VectorXd e(n > 1 ? n - 1 : 0);
    for (Eigen::Index i = 0; i + 1 < n; ++i) e[i] = off[i] * s[i] * s[i + 1];
    es.computeFromTridiagonal(d, e, opts);
  } else {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) a(i, i) = diag[i] * s[i] * s[i];
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
      a(i, i + 1) = a(i + 1, i) = off[i] * s[i] * s[i + 1];
    }
    a(0, n - 1) += corner * s[0] * s[n - 1];
    a(n - 1, 0) = a(0, n - 1);
    es.compute(a, opts);
  }
  out.values = es.eigenvalues();
  if (vectors) {
    out.vectors = s.asDiagonal() * es.eigenvectors();
    // Deterministic signs: first nonnegligible entry positive.
    for (Eigen::Index k = 0; k < n; ++k) {
      Eigen::Index i = 0;
      out.vectors.col(k).cwiseAbs().maxCoeff(&i);
      if (out.vectors(i, k) < 0) out.vectors.col(k) *= -1.0;
    }
  }
  return out;
}

}  // namespace

SpectralOperator::SpectralOperator(const Grid1D& grid, const std::function<double(double)>& density,
                                   bool vectors)
    : grid_(grid) {
  const int n = grid.n;
  const int ne = grid.edges();
  const double h = grid.h();
  const bool periodic = grid.boundary == Boundary::torus;
  mass_.resize(n);
  for (int i = 0; i < n; ++i) mass_[i] = density(grid.node(i)) * h;
  const double z = mass_.sum();
  mass_ /= z;
  edge_weight_.resize(ne);
  for (int e = 0; e < ne; ++e) edge_weight_[e] = density(grid.edge(e)) * h / z;

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(2 * ne);
  for (int e = 0; e < ne; ++e) {
    trip.emplace_back(e, e, -1.0 / h);
    trip.emplace_back(e, (e + 1) % n, 1.0 / h);
  }
  grad_.resize(ne, n);
  grad_.setFromTriplets(trip.begin(), trip.end());

  // Node stiffness D^T W D.
  const double ih2 = 1.0 / (h * h);
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd off = Eigen::VectorXd::Zero(std::max(n - 1, 0));
  double corner = 0.0;
  for (int e = 0; e < ne; ++e) {
    const int a = e;
    const int b = (e + 1) % n;
    diag[a] += edge_weight_[e] * ih2;
    diag[b] += edge_weight_[e] * ih2;
    if (b == a + 1) {
      off[a] = -edge_weight_[e] * ih2;
    } else {
      corner = -edge_weight_[e] * ih2;
    }
  }
  Eig node = weighted_eig(diag, off, corner, periodic, mass_, vectors);
  evals_ = node.values;
  evecs_ = node.vectors;
  if (!vectors) return;

  // Edge stiffness D_e^T M D_e with (D_e z)_i = (z_i - z_{i-1}) / h.
  Eigen::VectorXd ediag = Eigen::VectorXd::Zero(ne);
  Eigen::VectorXd eoff = Eigen::VectorXd::Zero(std::max(ne - 1, 0));
  double ecorner = 0.0;
  for (int e = 0; e < ne; ++e) {
    const int left = e;             // node where edge e enters with +1
    const int right = (e + 1) % n;  // node where it enters with -1
    ediag[e] = (mass_[left] + mass_[right]) * ih2;
    if (e + 1 < ne) eoff[e] = -mass_[right] * ih2;
  }
  if (periodic) ecorner = -mass_[0] * ih2;
  Eig edge = weighted_eig(ediag, eoff, ecorner, periodic, edge_weight_, true);
  edge_evals_ = edge.values;
  edge_evecs_ = edge.vectors;
}

Eigen::MatrixXd SpectralOperator::stiffness() const {
  const Eigen::MatrixXd d = Eigen::MatrixXd(grad_);
  return d.transpose() * edge_weight_.asDiagonal() * d;
}

Eigen::VectorXd SpectralOperator::edge_difference(const Eigen::VectorXd& z) const {
  const int n = grid_.n;
  const int ne = grid_.edges();
  const double h = grid_.h();
  Eigen::VectorXd out(n);
  for (int i = 0; i < n; ++i) {
    const double cur = i < ne ? z[i] : 0.0;
    double prev = 0.0;
    if (i > 0) {
      prev = z[i - 1];
    } else if (grid_.boundary == Boundary::torus) {
      prev = z[ne - 1];
    }
    out[i] = (cur - prev) / h;
  }
  return out;
}

Eigen::VectorXd SpectralOperator::remove_mean(const Eigen::VectorXd& g) const {
  return g.array() - weighted_mean(g);
}

Eigen::VectorXd SpectralOperator::to_modes(const Eigen::VectorXd& g) const {
  return evecs_.transpose() * mass_.cwiseProduct(g);
}

double poincare_constant(const SpectralOperator& op) {
  const double lam = op.eigenvalues()[1];
  if (lam < 1e-8) {
    throw Error(ErrorKind::NoSpectralGap,
                "smallest nonzero eigenvalue " + std::to_string(lam) + " is below 1e-8");
  }
  return lam;
}

PoincareEstimate poincare_constant(const std::function<double(double)>& density, Boundary boundary,
                                   double lo, double hi, int n) {
  PoincareEstimate est;
  est.coarse = poincare_constant(SpectralOperator(Grid1D{boundary, lo, hi, n}, density, false));
  est.fine = poincare_constant(SpectralOperator(Grid1D{boundary, lo, hi, 2 * n}, density, false));
  est.value = (4.0 * est.fine - est.coarse) / 3.0;
  if (boundary == Boundary::line) {
    const double mid = 0.5 * (lo + hi);
    const double half = hi - mid;
    const double wide = poincare_constant(
        SpectralOperator(Grid1D{boundary, mid - 2.0 * half, mid + 2.0 * half, 2 * n}, density, false));
    if (wide < 0.6 * est.fine) {
      throw Error(ErrorKind::NoSpectralGap,
                  "spectral gap collapses under domain growth (" + std::to_string(est.fine) + " -> " +
                      std::to_string(wide) + "); use the weighted route");
    }
  }
  return est;
}

WeightedPoincare weighted_poincare_constant(const SpectralOperator& op,
                                            const std::function<double(double)>& weight,
                                            double sigma_max) {
  const int n = op.size();
  WeightedPoincare out;
  out.sigma_max = sigma_max;
  out.weight.resize(n);
  for (int i = 0; i < n; ++i) out.weight[i] = weight(op.grid().node(i));
  const double wmin = out.weight.minCoeff();
  if (wmin < 1.0) {
    throw Error(ErrorKind::WeightBelowOne, "weight minimum " + std::to_string(wmin) + " < 1");
  }
  // Orthonormal basis of {g : sum m_i g_i = 0} from a Householder reflector
  // that maps m / |m| to the first unit vector.
  Eigen::VectorXd u = op.mass().normalized();
  u[0] -= 1.0;
  const double un = u.norm();
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
  if (un > 1e-14) h -= 2.0 * (u / un) * (u / un).transpose();
  const Eigen::MatrixXd q = h.rightCols(n - 1);
  const Eigen::MatrixXd a = q.transpose() * op.stiffness() * q;
  const Eigen::VectorXd b_diag = op.mass().cwiseQuotient(out.weight);
  const Eigen::MatrixXd b = q.transpose() * b_diag.asDiagonal() * q;
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(a, b, Eigen::EigenvaluesOnly);
  const double lam = es.eigenvalues().minCoeff();
  if (!(lam > 0.0)) throw Error(ErrorKind::NoSpectralGap, "weighted eigenproblem has no positive gap");
  out.constant = 1.0 / lam;
  return out;
}

double sigma_max(const HamiltonianSpec& spec, double e) {
  constexpr double margin = 0.01;
  const double inf = std::numeric_limits<double>::infinity();
  if (e <= 0.0) return inf;
  const auto& k = spec.kinetic;
  if (k.family == KineticFamily::heavytail) return (k.beta - spec.dim) / (2.0 * e) - margin;
  if (k.family == KineticFamily::tensorised && k.factor == FactorShape::heavytail) {
    return (k.beta - 1.0) / (2.0 * e) - margin;
  }
  return inf;
}

std::function<Eigen::VectorXd(const Eigen::VectorXd&)> operator_sqrt(
    const SpectralOperator& op, std::function<double(double)> f) {
  const SpectralOperator* p = &op;
  return [p, f = std::move(f)](const Eigen::VectorXd& g) -> Eigen::VectorXd {
    const double mean = p->weighted_mean(g);
    if (std::abs(mean) > 1e-10) {
      throw Error(ErrorKind::MeanNotZero, "weighted mean " + std::to_string(mean) + " exceeds 1e-10");
    }
    Eigen::VectorXd c = p->to_modes(g);
    c[0] = 0.0;
    for (Eigen::Index k = 1; k < c.size(); ++k) c[k] *= f(std::sqrt(p->eigenvalues()[k]));
    return p->from_modes(c);
  };
}

DualNorm::DualNorm(const SpectralOperator& op, double tau, int m) : op_(&op), tau_(tau), m_(m) {
  const int nk = m - 2;
  const int big_n = m - 1;
  sine_.resize(nk, m);
  cosine_.resize(nk, m);
  omega_.resize(nk);
  for (int k = 1; k <= nk; ++k) {
    omega_[k - 1] = k * std::numbers::pi / tau;
    for (int j = 0; j < m; ++j) {
      const double arg = std::numbers::pi * k * j / big_n;
      sine_(k - 1, j) = std::sqrt(2.0) * std::sin(arg) * trapezoid_weight(j);
      cosine_(k - 1, j) = std::sqrt(2.0) * std::cos(arg) * trapezoid_weight(j);
    }
  }
}

double DualNorm::trapezoid_weight(int j) const {
  const double w = 1.0 / (m_ - 1);
  return (j == 0 || j == m_ - 1) ? 0.5 * w : w;
}

Eigen::MatrixXd DualNorm::sine_coefficients(const Eigen::MatrixXd& w) const {
  return sine_ * w * op_->mass().asDiagonal() * op_->eigenvectors();
}

double DualNorm::nodes(const Eigen::MatrixXd& w) const {
  const Eigen::MatrixXd b = sine_coefficients(w);
  const Eigen::VectorXd& lam = op_->eigenvalues();
  double s = 0.0;
  for (Eigen::Index k = 0; k < b.rows(); ++k) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      s += b(k, j) * b(k, j) / (1.0 + omega_[k] * omega_[k] + lam[j]);
    }
  }
  return std::sqrt(s);
}

double DualNorm::edges(const Eigen::MatrixXd& w) const {
  const Eigen::MatrixXd b = sine_ * w * op_->edge_weight().asDiagonal() * op_->edge_eigenvectors();
  const Eigen::VectorXd& lam = op_->edge_eigenvalues();
  double s = 0.0;
  for (Eigen::Index k = 0; k < b.rows(); ++k) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      s += b(k, j) * b(k, j) / (1.0 + omega_[k] * omega_[k] + lam[j]);
    }
  }
  return std::sqrt(s);
}

double DualNorm::time_derivative(const Eigen::MatrixXd& g) const {
  // <d_t g, sqrt2 sin_k> = -omega_k <g, sqrt2 cos_k>, and the trapezoid rule
  // is exact for the cosine interpolant at these k.
  const Eigen::MatrixXd c = cosine_ * g * op_->mass().asDiagonal() * op_->eigenvectors();
  const Eigen::VectorXd& lam = op_->eigenvalues();
  double s = 0.0;
  for (Eigen::Index k = 0; k < c.rows(); ++k) {
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      const double b = omega_[k] * c(k, j);
      s += b * b / (1.0 + omega_[k] * omega_[k] + lam[j]);
    }
  }
  return std::sqrt(s);
}

double DualNorm::gradient(const Eigen::MatrixXd& g) const {
  const Eigen::MatrixXd dg = g * Eigen::MatrixXd(op_->gradient()).transpose();
  const double t = time_derivative(g);
  const double x = edges(dg);
  return std::sqrt(t * t + x * x);
}

Eigen::MatrixXd DualNorm::riesz_nodes(const Eigen::MatrixXd& w) const {
  Eigen::MatrixXd b = sine_coefficients(w);
  const Eigen::VectorXd& lam = op_->eigenvalues();
  for (Eigen::Index k = 0; k < b.rows(); ++k) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) b(k, j) /= 1.0 + omega_[k] * omega_[k] + lam[j];
  }
  // Evaluate sum_k b_kj sqrt2 sin(k pi t / tau) e_j on the time grid.
  Eigen::MatrixXd basis(m_, b.rows());
  for (int j = 0; j < m_; ++j) {
    for (Eigen::Index k = 0; k < b.rows(); ++k) {
      basis(j, k) = std::sqrt(2.0) * std::sin(omega_[k] * time(j));
    }
  }
  return basis * b * op_->eigenvectors().transpose();
}

double DualNorm::h1_norm_sq_nodes(const Eigen::MatrixXd& z) const {
  const Eigen::MatrixXd b = sine_coefficients(z);
  const Eigen::VectorXd& lam = op_->eigenvalues();
  double s = 0.0;
  for (Eigen::Index k = 0; k < b.rows(); ++k) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      s += b(k, j) * b(k, j) * (1.0 + omega_[k] * omega_[k] + lam[j]);
    }
  }
  return s;
}

double DualNorm::inner_nodes(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) const {
  double s = 0.0;
  for (int j = 0; j < m_; ++j) {
    s += trapezoid_weight(j) * a.row(j).cwiseProduct(b.row(j)).dot(op_->mass().transpose());
  }
  return s;
}

double dual_h1_norm(const SpectralOperator& op, const Eigen::MatrixXd& w, double tau) {
  return DualNorm(op, tau, static_cast<int>(w.rows())).nodes(w);
}

}  // namespace kfp
