#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gat/axis.hpp"
#include "gat/call_spec.hpp"
#include "gat/surface.hpp"

// Second-order perturbation solution of the arbitrage Black-Scholes PDE for
// a European call, in heat-equation variables x = K e^y, t = T - 2 tau / sigma^2,
// Phi = K e^{y/2 - tau/4} u.
namespace gat::pricing {

/// G(tau, y; s, z) = exp(-(y - z)^2 / (4 (tau - s))) / (2 sqrt(pi (tau - s))).
/// Throws DomainError for tau <= s.
double heat_kernel(double tau, double y, double s, double z);

/// Heat solution from the call payoff e^{y/2} - e^{-y/2} (positive part), and
/// its y-derivative. At tau = 0 both return the initial data (u0' = 1/2 at y = 0).
double u0(double tau, double y);
double u0_prime(double tau, double y);

/// Prefactor of the nonlinear source. `dimensionless` is 2 / sigma^2, which is
/// what the change of variables produces; `strike_scaled` is 2 K / sigma^2.
enum class SourceScale { dimensionless, strike_scaled };
/// Sign of the expansion parameter. `minus` expands u = u0 - rho U1 +
/// rho^2 U2, which solves the PDE; `plus` uses u0 + rho U1 + rho^2 U2.
enum class SourceSign { minus, plus };

struct SourceConvention {
  SourceScale scale = SourceScale::dimensionless;
  SourceSign sign = SourceSign::minus;

  /// Prefactor c in f = c * sqrt(5/4 v1^2 + v1 v2 + v2^2).
  double coefficient(const CallSpec& spec) const;
  /// Expansion parameter eps with u = u0 + eps U1_unit + eps^2 U2_unit.
  double expansion(const CallSpec& spec) const;
};

std::string to_string(SourceScale s);
std::string to_string(SourceSign s);
SourceScale parse_scale(const std::string& s);
SourceSign parse_sign(const std::string& s);

struct SourceValue {
  double f = 0.0;
  double f1 = 0.0;  // d f / d v1
  double f2 = 0.0;  // d f / d v2
};

/// f(v1, v2) = c sqrt(5/4 v1^2 + v1 v2 + v2^2) with its partials; the
/// gradient is reported as (0, 0) at the origin where f is not differentiable.
SourceValue nonlinear_f(double v1, double v2, double c);
SourceValue nonlinear_f(double v1, double v2, const CallSpec& spec, const SourceConvention& conv = {});

/// Source term used by the Duhamel integrals (unit prefactor by default).
struct SourceTerm {
  std::function<SourceValue(double, double)> eval;
  static SourceTerm unit();
};

/// Uniform (tau, y) grid. tau runs from 0 to sigma^2 T / 2 inclusive.
struct TransformGrid {
  UniformAxis tau;
  UniformAxis y;
  double z_halfwidth_sd = 10.0;  // z window is y +- z_halfwidth_sd * sqrt(2 (tau - s))

  static TransformGrid for_spec(const CallSpec& spec, std::size_t tau_intervals = 64, std::size_t y_intervals = 800,
                                double y_halfwidth = 0.0);
  void validate() const;
  TransformGrid refined() const;  // both axes halved
};

struct QuadratureOptions {
  std::size_t s_panels = 1;        // Gauss-Legendre panels per half of [0, tau]
  std::size_t order = 8;           // Gauss-Legendre order
  double z_panel_scale = 0.75;     // z panel length in units of sqrt(2 (tau - s))
  bool check_refinement = true;    // re-evaluate a probe with a refined rule
  double tolerance = 1e-8;         // relative, for the refinement check
};

/// Row-major (tau, y) field.
struct GridField {
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;
  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
};

/// U1 and U2 of the unit source (prefactor 1), with the refinement diagnostic.
struct CorrectionFields {
  GridField U1;
  GridField U2;
  double probe_tau = 0.0, probe_y = 0.0;
  double probe_u1 = 0.0, probe_u1_refined = 0.0;
};

/// U1(tau, y) = int_0^tau ds int dz G f(u0, u0') on every grid node.
/// Throws QuadratureError when the refinement probe misses the tolerance.
GridField compute_U1(const TransformGrid& grid, const SourceTerm& source, const QuadratureOptions& opts = {},
                     CorrectionFields* diagnostics = nullptr);
/// U2 from a U1 field on the same grid; U1 and U1' are interpolated bilinearly.
GridField compute_U2(const TransformGrid& grid, const SourceTerm& source, const GridField& U1,
                     const QuadratureOptions& opts = {});

CorrectionFields compute_corrections(const TransformGrid& grid, const SourceTerm& source = SourceTerm::unit(),
                                     const QuadratureOptions& opts = {});

/// Bilinear interpolation; throws ExtrapolationError outside the grid.
double interpolate(const TransformGrid& grid, const GridField& field, double tau, double y);

/// Assembled series u = u0 + eps U1 + eps^2 U2 for one spec.
class PerturbationSolution {
 public:
  PerturbationSolution(CallSpec spec, TransformGrid grid, SourceConvention convention,
                       std::shared_ptr<const CorrectionFields> fields);

  const CallSpec& spec() const { return spec_; }
  const TransformGrid& grid() const { return grid_; }
  const SourceConvention& convention() const { return convention_; }
  const CorrectionFields* fields() const { return fields_.get(); }
  double expansion() const { return convention_.expansion(spec_); }

  /// Same fields, different rho or convention (U1, U2 never depend on either).
  PerturbationSolution with_rho(double rho) const;
  PerturbationSolution with_convention(SourceConvention conv) const;

  double U1(double tau, double y) const;  // c * U1_unit
  double U2(double tau, double y) const;  // c^2 * U2_unit
  double u(double tau, double y) const;

  /// Phi(t, X) for the discounted underlying X. Exact payoff at t = T.
  double price_discounted(double X, double t) const;
  /// Psi(t, S) = e^{rt} Phi(t, e^{-rt} S). Exact payoff at t = T.
  double price_undiscounted(double S, double t) const;

  PriceSurface surface(const std::vector<double>& t, const std::vector<double>& x) const;

 private:
  CallSpec spec_;
  TransformGrid grid_;
  SourceConvention convention_;
  std::shared_ptr<const CorrectionFields> fields_;
};

/// Computes the correction fields (skipped when rho = 0, where they carry no weight).
PerturbationSolution solve_perturbation(const CallSpec& spec, const TransformGrid& grid,
                                        const SourceConvention& convention = {},
                                        const QuadratureOptions& opts = {});

struct BssOptions {
  double alpha = 0.0;            // underlying drift; the implied rho does not depend on it
  double phi_floor = 1e-4;       // nodes with Phi < phi_floor * K are excluded
  std::size_t edge_nodes = 2;    // excluded at each x boundary
  double x_min = 0.0, x_max = 0.0;  // optional window (ignored when x_max <= x_min)
};

struct BssNode {
  double t, x, phi, tau, beta, rho;
};

struct BssReport {
  double rho_input = 0.0;
  std::size_t nodes = 0;
  double max_abs_error = 0.0;
  double mean_abs_error = 0.0;
  double mean_rho = 0.0;
  std::vector<BssNode> detail;
};

/// Reads tau_t = sigma X Phi_x / Phi and beta_t off the surface, rebuilds
/// (alpha, beta) against (sigma, tau) and recomputes rho with the geometry
/// module. The final time row (payoff kink) is excluded.
BssReport bss_consistency(const PriceSurface& surface, const CallSpec& spec, const BssOptions& opts = {});

}  // namespace gat::pricing
