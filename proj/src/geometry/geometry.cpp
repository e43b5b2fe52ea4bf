#include "gat/geometry.hpp"

#include <cmath>
#include <string>

#include "gat/errors.hpp"
#include "gat/quadrature.hpp"

namespace gat::geometry {

void ItoCoefficients::validate() const {
  const auto n = alpha.size();
  if (n < 1 || sigma.cols() < 1) throw ShapeError("ito coefficients: need N >= 1 and K >= 1");
  if (sigma.rows() != n || r.size() != n)
    throw ShapeError("ito coefficients: alpha, sigma rows and r must share N");
  if (!alpha.allFinite() || !sigma.allFinite() || !r.allFinite() || !std::isfinite(t))
    throw DomainError("ito coefficients: non-finite entry");
}

Eigen::VectorXd diag_of(const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols()) throw ShapeError("diag_of: matrix must be square");
  return A.diagonal();
}

std::size_t numerical_rank(const Eigen::MatrixXd& sigma, double rel_tol) {
  if (sigma.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(sigma);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  std::size_t rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > rel_tol * s(0)) ++rank;
  return rank;
}

RangeProjections range_projections(const Eigen::MatrixXd& sigma) {
  const auto n = sigma.rows();
  RangeProjections out;
  out.range = Eigen::MatrixXd::Zero(n, n);
  if (sigma.size() > 0) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(sigma, Eigen::ComputeFullU);
    const auto& s = svd.singularValues();
    if (s.size() > 0 && s(0) > 0.0) {
      for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > 1e-12 * s(0)) ++out.rank;
      const auto U = svd.matrixU().leftCols(static_cast<Eigen::Index>(out.rank));
      out.range = U * U.transpose();
    }
  }
  out.range = 0.5 * (out.range + out.range.transpose()).eval();
  out.complement = Eigen::MatrixXd::Identity(n, n) - out.range;
  return out;
}

KernelBasis kernel_basis(const Eigen::MatrixXd& sigma, Orientation orientation) {
  const auto proj = range_projections(sigma);
  const auto n = sigma.rows();
  const auto b = n - static_cast<Eigen::Index>(proj.rank);
  KernelBasis out;
  if (b <= 0) {
    out.J = Eigen::MatrixXd(n, 0);
    return out;
  }
  // Column-pivoted QR of the complement projector: its leading B Householder
  // vectors span Range(P_perp) and come out in a deterministic order.
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(proj.complement);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, b);
  // Clean residual range components and re-orthonormalise.
  Q = proj.complement * Q;
  Eigen::HouseholderQR<Eigen::MatrixXd> ortho(Q);
  Eigen::MatrixXd J = ortho.householderQ() * Eigen::MatrixXd::Identity(n, b);
  for (Eigen::Index c = 0; c < b; ++c) {
    const double tiny = 1e-12;
    double pivot = 0.0;
    if (orientation == Orientation::first_positive) {
      for (Eigen::Index i = 0; i < n && pivot == 0.0; ++i)
        if (std::abs(J(i, c)) > tiny) pivot = J(i, c);
    } else {
      for (Eigen::Index i = n - 1; i >= 0 && pivot == 0.0; --i)
        if (std::abs(J(i, c)) > tiny) pivot = J(i, c);
    }
    if (pivot < 0.0) J.col(c) *= -1.0;
  }
  out.J = std::move(J);
  return out;
}

Eigen::VectorXd rho(const ItoCoefficients& c, Orientation orientation) {
  c.validate();
  return kernel_basis(c.sigma, orientation).J.transpose() * (c.alpha + c.r);
}

double zc_residual(const ItoCoefficients& c) {
  c.validate();
  return (range_projections(c.sigma).complement * (c.alpha + c.r)).norm();
}

Eigen::VectorXd curvature_spread(const ItoCoefficients& c, const Eigen::VectorXd& W, double t, double t_min) {
  c.validate();
  if (W.size() != c.sigma.cols()) throw ShapeError("curvature_spread: W must have K entries");
  if (!(t > 0.0) || t < t_min)
    throw DomainError("curvature_spread: t = " + std::to_string(t) + " below t_min = " + std::to_string(t_min));
  const Eigen::VectorXd half_var = 0.5 * c.sigma.rowwise().squaredNorm();
  Eigen::VectorXd v = c.alpha + c.r - half_var + c.sigma * W / (2.0 * t);
  v.array() -= v.mean();
  return v;
}

std::vector<double> implied_beta(std::span<const double> C, std::span<const double> times) {
  if (C.size() != times.size()) throw ShapeError("implied_beta: C and times differ in length");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1])) throw GridError("implied_beta: times must increase");
  auto integral = quad::cumulative_trapezoid(times, C);
  for (double& v : integral) v = std::exp(-v);
  return integral;
}

double rho_tilde(double rho, double X, double Phi, double dPhi_dx) {
  if (Phi == 0.0) throw DomainError("rho_tilde: Phi = 0");
  const double e = X * dPhi_dx / Phi;
  const double den = 1.0 - e + e * e;
  if (!(den > 0.0)) throw DomainError("rho_tilde: nonpositive denominator");
  return -std::sqrt((1.0 + e * e) / den) * rho / std::sqrt(2.0);
}

}  // namespace gat::geometry
