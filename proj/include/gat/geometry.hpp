#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <vector>

// Arbitrage geometry of Ito market models: projections onto the volatility
// range, the kernel basis J, the arbitrage measure rho and related residuals.
namespace gat::geometry {

/// Coefficients of dS/S = alpha dt + sigma dW at one time point.
struct ItoCoefficients {
  Eigen::VectorXd alpha;  // N, per unit time
  Eigen::MatrixXd sigma;  // N x K, per sqrt(time)
  Eigen::VectorXd r;      // N, per unit time
  double t = 0.0;

  std::size_t assets() const { return static_cast<std::size_t>(alpha.size()); }
  std::size_t factors() const { return static_cast<std::size_t>(sigma.cols()); }

  /// Throws ShapeError on inconsistent sizes, DomainError on non-finite entries.
  void validate() const;
};

/// Sign convention for kernel basis vectors. `first_positive` makes the first
/// nonzero entry of each column positive (the default, reproducible choice);
/// `last_positive` does the same for the last nonzero entry, which for a
/// 2 x 1 volatility [s, tau] yields J = [-tau, s] / |.|.
enum class Orientation { first_positive, last_positive };

/// Orthonormal basis of Range(sigma)^perp, i.e. ker(sigma^T), as columns of J.
struct KernelBasis {
  Eigen::MatrixXd J;  // N x B
  std::size_t dimension() const { return static_cast<std::size_t>(J.cols()); }
};

struct RangeProjections {
  Eigen::MatrixXd range;       // onto Range(sigma)
  Eigen::MatrixXd complement;  // onto Range(sigma)^perp
  std::size_t rank = 0;
};

/// Diagonal A_jj in the standard basis. Throws ShapeError for non-square A.
Eigen::VectorXd diag_of(const Eigen::MatrixXd& A);

/// Number of singular values above rel_tol times the largest one.
std::size_t numerical_rank(const Eigen::MatrixXd& sigma, double rel_tol = 1e-12);

RangeProjections range_projections(const Eigen::MatrixXd& sigma);

KernelBasis kernel_basis(const Eigen::MatrixXd& sigma, Orientation orientation = Orientation::first_positive);

/// rho_t = J^T (alpha + r); length B = N - rank(sigma).
Eigen::VectorXd rho(const ItoCoefficients& c, Orientation orientation = Orientation::first_positive);

/// |P_perp (alpha + r)|_2.
double zc_residual(const ItoCoefficients& c);

/// Cross-asset spread of D log S_j + r_j = alpha_j + r_j - sigma_j.sigma_j / 2
/// + (sigma W)_j / (2t), returned with its mean removed. Throws DomainError
/// for t < t_min.
Eigen::VectorXd curvature_spread(const ItoCoefficients& c, const Eigen::VectorXd& W, double t,
                                 double t_min = 1e-6);

/// beta_t = exp(-int_0^t C du) with the trapezoid rule on the sample times.
std::vector<double> implied_beta(std::span<const double> C, std::span<const double> times);

/// Coefficient of the equivalent representation of the nonlinear term in
/// terms of Phi and X dPhi/dx.
double rho_tilde(double rho, double X, double Phi, double dPhi_dx);

}  // namespace gat::geometry
