#pragma once

#include <cstddef>
#include <vector>

#include "gat/call_spec.hpp"
#include "gat/surface.hpp"

// Finite-difference solver for the arbitrage Black-Scholes PDE
//   Phi_t + sigma^2/2 X^2 Phi_xx = rho sqrt(Phi^2 + (X Phi_x)^2)
// (and its undiscounted form), stepped backward from the call payoff.
namespace gat::fd {

/// Space-time mesh and solved surface. Space nodes are log-uniform and
/// centred on the payoff strike so the kink sits on a node; the lower
/// boundary is Dirichlet zero, the upper boundary has zero second
/// derivative in the price variable.
struct PdeGrid {
  double strike = 0.0;       // centre of the log grid
  double half_width = 0.0;   // in log(x / strike)
  std::size_t space_intervals = 0;
  std::size_t time_intervals = 0;
  double T = 0.0;
  std::size_t store_every = 1;  // keep every n-th time slice (0 and T always kept)

  PriceSurface surface;       // filled by solve: rows t ascending, columns x ascending
  std::size_t halvings_used = 0;

  std::vector<double> x_nodes() const;
  std::vector<double> t_nodes() const;
  double dy() const { return 2.0 * half_width / static_cast<double>(space_intervals); }
  void validate() const;
};

/// Grid for a spec with half-width `width_sd * sigma * sqrt(T)` in log space.
/// `undiscounted` centres on K instead of the discounted strike K e^{-rT}.
PdeGrid make_grid(const CallSpec& spec, std::size_t space_intervals, std::size_t time_intervals,
                  double width_sd = 4.0, bool undiscounted = false);

struct SolveOptions {
  std::size_t rannacher_steps = 2;  // leading Crank-Nicolson steps replaced by implicit half steps
  std::size_t max_halvings = 10;
  double negativity_tol = 1e-10;    // relative to the strike
};

/// Discounted problem: terminal payoff (X - K e^{-rT})^+.
PdeGrid solve(const CallSpec& spec, PdeGrid grid, const SolveOptions& opts = {});

/// Undiscounted problem Psi_t + r S Psi_s + sigma^2/2 S^2 Psi_ss - r Psi =
/// rho sqrt(Psi^2 + (S Psi_s)^2) with payoff (S - K)^+.
PdeGrid solve_undiscounted(const CallSpec& spec, PdeGrid grid, const SolveOptions& opts = {});

/// Cubic Lagrange interpolation in log x on a stored time slice. Throws
/// ExtrapolationError outside the space grid.
double interpolate(const PdeGrid& grid, std::size_t slice, double x);

/// Index of the stored slice at time t (exact match within 1e-12), or throws GridError.
std::size_t slice_at(const PdeGrid& grid, double t);

}  // namespace gat::fd
