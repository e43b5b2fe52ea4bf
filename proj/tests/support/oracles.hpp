#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <string>

// Test-side reference values, written independently of the library code.
namespace oracle {

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Black-Scholes call with rate r and time to maturity tau (years).
inline double bs_call(double S, double K, double sigma, double tau, double r = 0.0) {
  if (tau <= 0.0) return std::max(S - K, 0.0);
  const double v = sigma * std::sqrt(tau);
  const double d1 = (std::log(S / K) + (r + 0.5 * sigma * sigma) * tau) / v;
  return S * norm_cdf(d1) - K * std::exp(-r * tau) * norm_cdf(d1 - v);
}

/// Adaptive Simpson on [a, b].
inline double simpson(const std::function<double(double)>& f, double a, double b, double tol = 1e-10,
                      int depth = 40) {
  std::function<double(double, double, double, double, double, double, int)> rec =
      [&](double lo, double hi, double flo, double fmid, double fhi, double whole, int d) {
        const double mid = 0.5 * (lo + hi);
        const double lm = 0.5 * (lo + mid), rm = 0.5 * (mid + hi);
        const double flm = f(lm), frm = f(rm);
        const double left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
        const double right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
        if (d <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
          return left + right + (left + right - whole) / 15.0;
        return rec(lo, mid, flo, flm, fmid, left, d - 1) + rec(mid, hi, fmid, frm, fhi, right, d - 1);
      };
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return rec(a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), depth);
}

/// Heat solution from e^{y/2} - e^{-y/2} (positive part) by direct integration.
inline double heat_call(double tau, double y) {
  if (tau <= 0.0) return y > 0.0 ? 2.0 * std::sinh(0.5 * y) : 0.0;
  const double w = std::sqrt(2.0 * tau);
  auto g = [&](double z) {
    return std::exp(-(y - z) * (y - z) / (4.0 * tau)) / (2.0 * std::sqrt(std::numbers::pi * tau)) *
           2.0 * std::sinh(0.5 * z);
  };
  const double hi = std::max(y, 0.0) + 14.0 * w;
  return simpson(g, 0.0, hi, 1e-13);
}

/// Closed form of the same heat solution and its y-derivatives:
/// u = e^{tau/4} (e^{y/2} N(d+) - e^{-y/2} N(d-)), d+- = (y +- tau) / sqrt(2 tau).
inline double heat_call_closed(double tau, double y) {
  const double rt = std::sqrt(2.0 * tau);
  return std::exp(0.25 * tau) *
         (std::exp(0.5 * y) * norm_cdf((y + tau) / rt) - std::exp(-0.5 * y) * norm_cdf((y - tau) / rt));
}
inline double heat_call_y(double tau, double y) {
  const double rt = std::sqrt(2.0 * tau);
  return 0.5 * std::exp(0.25 * tau) *
         (std::exp(0.5 * y) * norm_cdf((y + tau) / rt) + std::exp(-0.5 * y) * norm_cdf((y - tau) / rt));
}
inline double heat_call_yy(double tau, double y) {
  const double rt = std::sqrt(2.0 * tau);
  const double dp = (y + tau) / rt;
  const double pdf = std::exp(-0.5 * dp * dp) / std::sqrt(2.0 * std::numbers::pi);
  // The two kernel terms of u_y cancel; those of u_yy coincide.
  return 0.25 * heat_call_closed(tau, y) + std::exp(0.5 * y + 0.25 * tau) * pdf / rt;
}

/// Corrections for the linear source f(v1, v2) = a v1 + b v2: the Duhamel
/// integral of a heat solution w is tau w, so U1 = tau (a u + b u_y) and
/// U2 = tau^2 / 2 (a^2 u + 2 a b u_y + b^2 u_yy).
inline double linear_U1(double tau, double y, double a, double b) {
  return tau * (a * heat_call_closed(tau, y) + b * heat_call_y(tau, y));
}
inline double linear_U2(double tau, double y, double a, double b) {
  return 0.5 * tau * tau *
         (a * a * heat_call_closed(tau, y) + 2.0 * a * b * heat_call_y(tau, y) + b * b * heat_call_yy(tau, y));
}

/// Seeded normal matrix.
inline Eigen::MatrixXd normal_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

/// Orthonormal basis of ker(A^T) from a full SVD, for cross-checks.
inline Eigen::MatrixXd null_space_of_transpose(const Eigen::MatrixXd& A) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullU);
  Eigen::Index rank = 0;
  const auto& s = svd.singularValues();
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > 1e-12 * s(0)) ++rank;
  return svd.matrixU().rightCols(A.rows() - rank);
}

/// Fresh scratch directory under the system temp path.
inline std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("gat_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace oracle
