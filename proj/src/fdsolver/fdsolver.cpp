#include "gat/fdsolver.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gat/errors.hpp"

namespace gat::fd {
namespace {

// Coefficients of L phi = a phi_yy + b phi_y + c phi in y = log(x / strike).
struct Operator {
  double a, b, c;
  double lo, di, up;  // three-point weights of L
};

Operator make_operator(double a, double b, double c, double dy) {
  return {a, b, c, a / (dy * dy) - b / (2.0 * dy), -2.0 * a / (dy * dy) + c, a / (dy * dy) + b / (2.0 * dy)};
}

class Stepper {
 public:
  Stepper(const Operator& op, double rho, double dy, std::size_t n)
      : op_(op), rho_(rho), dy_(dy), n_(n), q_(std::exp(dy)), src_(n + 1), lphi_(n + 1), rhs_(n + 1),
        cp_(n + 1), dp_(n + 1) {}

  // One theta-step of length h from phi (at the later time) to the earlier
  // time, Heun predictor-corrector on the explicit source.
  void step(std::vector<double>& phi, double theta, double h) {
    source(phi, src_);
    apply(phi, lphi_);
    std::vector<double> s0 = src_;
    for (std::size_t j = 1; j < n_; ++j) rhs_[j] = phi[j] + (1.0 - theta) * h * lphi_[j] + h * s0[j];
    std::vector<double> pred(n_ + 1);
    implicit(theta, h, pred);
    source(pred, src_);
    for (std::size_t j = 1; j < n_; ++j)
      rhs_[j] = phi[j] + (1.0 - theta) * h * lphi_[j] + 0.5 * h * (s0[j] + src_[j]);
    implicit(theta, h, phi);
  }

 private:
  void apply(const std::vector<double>& p, std::vector<double>& out) const {
    for (std::size_t j = 1; j < n_; ++j) out[j] = op_.lo * p[j - 1] + op_.di * p[j] + op_.up * p[j + 1];
  }

  // -rho sqrt(phi^2 + phi_y^2), where phi_y = X phi_x.
  void source(const std::vector<double>& p, std::vector<double>& out) const {
    if (rho_ == 0.0) {
      std::fill(out.begin(), out.end(), 0.0);
      return;
    }
    for (std::size_t j = 1; j < n_; ++j) {
      const double py = (p[j + 1] - p[j - 1]) / (2.0 * dy_);
      out[j] = -rho_ * std::hypot(p[j], py);
    }
  }

  // Solves (I - theta h L) phi = rhs on interior nodes with phi_0 = 0 and
  // phi_N = (1 + q) phi_{N-1} - q phi_{N-2} (linear in x at the top).
  void implicit(double theta, double h, std::vector<double>& out) {
    const std::size_t m = n_ - 1;  // unknowns 1..n-1
    std::vector<double> lo(m), di(m), up(m), b(m);
    for (std::size_t k = 0; k < m; ++k) {
      lo[k] = -theta * h * op_.lo;
      di[k] = 1.0 - theta * h * op_.di;
      up[k] = -theta * h * op_.up;
      b[k] = rhs_[k + 1];
    }
    const double c = up[m - 1];
    di[m - 1] += c * (1.0 + q_);
    lo[m - 1] += -c * q_;
    // Thomas algorithm.
    cp_[0] = up[0] / di[0];
    dp_[0] = b[0] / di[0];
    for (std::size_t k = 1; k < m; ++k) {
      const double den = di[k] - lo[k] * cp_[k - 1];
      cp_[k] = up[k] / den;
      dp_[k] = (b[k] - lo[k] * dp_[k - 1]) / den;
    }
    out[m] = dp_[m - 1];
    for (std::size_t k = m - 1; k-- > 0;) out[k + 1] = dp_[k] - cp_[k] * out[k + 2];
    out[0] = 0.0;
    out[n_] = (1.0 + q_) * out[n_ - 1] - q_ * out[n_ - 2];
  }

  Operator op_;
  double rho_, dy_;
  std::size_t n_;
  double q_;
  std::vector<double> src_, lphi_, rhs_, cp_, dp_;
};

bool healthy(const std::vector<double>& phi, double floor) {
  for (double v : phi)
    if (!std::isfinite(v) || v < floor) return false;
  return true;
}

// Advances phi over one time interval of length dt, splitting it into 2^k
// equal pieces when the result is non-finite or negative.
void advance(Stepper& st, std::vector<double>& phi, double theta, double dt, std::size_t rannacher_pieces,
             const SolveOptions& opts, double floor, std::size_t& halvings) {
  for (std::size_t k = halvings;; ++k) {
    std::vector<double> trial = phi;
    const std::size_t pieces = std::size_t{1} << k;
    const double h = dt / static_cast<double>(pieces);
    for (std::size_t p = 0; p < pieces; ++p) {
      if (rannacher_pieces > 0) {
        // Implicit Euler in half steps damps the payoff kink.
        for (std::size_t r = 0; r < rannacher_pieces; ++r) st.step(trial, 1.0, h / static_cast<double>(rannacher_pieces));
      } else {
        st.step(trial, theta, h);
      }
    }
    if (healthy(trial, floor)) {
      phi = std::move(trial);
      halvings = k;
      return;
    }
    if (k + 1 > opts.max_halvings)
      throw ConvergenceError("fd solve: step still unstable after " + std::to_string(opts.max_halvings) +
                             " halvings");
  }
}

PdeGrid run(const CallSpec& spec, PdeGrid grid, const SolveOptions& opts, const Operator& op, double strike) {
  spec.validate();
  grid.validate();
  const std::size_t n = grid.space_intervals;
  const auto xs = grid.x_nodes();
  const auto ts = grid.t_nodes();
  std::vector<double> phi(n + 1);
  for (std::size_t j = 0; j <= n; ++j) phi[j] = std::max(xs[j] - strike, 0.0);
  phi[0] = 0.0;

  // Stored rows: t index 0, every store_every-th, and the last.
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i <= grid.time_intervals; ++i)
    if (i % grid.store_every == 0 || i == grid.time_intervals) keep.push_back(i);
  grid.surface.x = xs;
  grid.surface.t.clear();
  for (auto i : keep) grid.surface.t.push_back(ts[i]);
  grid.surface.values.assign(keep.size() * (n + 1), 0.0);
  auto store = [&](std::size_t ti) {
    const auto pos = std::lower_bound(keep.begin(), keep.end(), ti);
    if (pos == keep.end() || *pos != ti) return;
    const auto row = static_cast<std::size_t>(pos - keep.begin());
    std::copy(phi.begin(), phi.end(), grid.surface.values.begin() + static_cast<std::ptrdiff_t>(row * (n + 1)));
  };
  store(grid.time_intervals);

  Stepper st(op, spec.rho, grid.dy(), n);
  const double dt = grid.T / static_cast<double>(grid.time_intervals);
  const double floor = -opts.negativity_tol * strike;
  std::size_t halvings = 0;
  for (std::size_t k = 0; k < grid.time_intervals; ++k) {
    const std::size_t ti = grid.time_intervals - k - 1;
    const std::size_t pieces = k < opts.rannacher_steps ? 2 : 0;
    advance(st, phi, 0.5, dt, pieces, opts, floor, halvings);
    store(ti);
  }
  grid.halvings_used = halvings;
  return grid;
}

}  // namespace

std::vector<double> PdeGrid::x_nodes() const {
  std::vector<double> x(space_intervals + 1);
  const double h = dy();
  for (std::size_t j = 0; j <= space_intervals; ++j)
    x[j] = strike * std::exp(-half_width + h * static_cast<double>(j));
  x[space_intervals / 2] = strike;
  return x;
}

std::vector<double> PdeGrid::t_nodes() const {
  std::vector<double> t(time_intervals + 1);
  for (std::size_t i = 0; i <= time_intervals; ++i)
    t[i] = T * static_cast<double>(i) / static_cast<double>(time_intervals);
  t.back() = T;
  return t;
}

void PdeGrid::validate() const {
  if (space_intervals < 64 || time_intervals < 64) throw GridError("fd grid: resolution must be at least 64 x 64");
  if (space_intervals % 2 != 0) throw GridError("fd grid: space intervals must be even (strike on a node)");
  if (!(strike > 0.0) || !(half_width > 0.0) || !(T > 0.0)) throw GridError("fd grid: strike, width, T must be positive");
  if (store_every == 0) throw GridError("fd grid: store_every must be positive");
}

PdeGrid make_grid(const CallSpec& spec, std::size_t space_intervals, std::size_t time_intervals, double width_sd,
                  bool undiscounted) {
  spec.validate();
  PdeGrid g;
  g.strike = undiscounted ? spec.K : spec.discounted_strike();
  g.half_width = width_sd * spec.sigma * std::sqrt(spec.T);
  g.space_intervals = space_intervals;
  g.time_intervals = time_intervals;
  g.T = spec.T;
  g.validate();
  return g;
}

PdeGrid solve(const CallSpec& spec, PdeGrid grid, const SolveOptions& opts) {
  grid.validate();
  const double a = 0.5 * spec.sigma * spec.sigma;
  const double strike = spec.discounted_strike();
  if (std::abs(grid.strike - strike) > 1e-12 * strike)
    throw GridError("fd solve: grid must be centred on the discounted strike");
  const Operator op = make_operator(a, -a, 0.0, grid.dy());
  return run(spec, std::move(grid), opts, op, strike);
}

PdeGrid solve_undiscounted(const CallSpec& spec, PdeGrid grid, const SolveOptions& opts) {
  grid.validate();
  const double a = 0.5 * spec.sigma * spec.sigma;
  if (std::abs(grid.strike - spec.K) > 1e-12 * spec.K)
    throw GridError("fd solve_undiscounted: grid must be centred on the strike");
  const Operator op = make_operator(a, spec.r - a, -spec.r, grid.dy());
  return run(spec, std::move(grid), opts, op, spec.K);
}

double interpolate(const PdeGrid& grid, std::size_t slice, double x) {
  const auto& s = grid.surface;
  if (slice >= s.t.size()) throw GridError("fd interpolate: slice out of range");
  if (!(x > 0.0)) throw ExtrapolationError("fd interpolate: x must be positive");
  const double y = std::log(x / grid.strike) + grid.half_width;
  const double h = grid.dy();
  const double pos = y / h;
  const auto n = grid.space_intervals;
  if (pos < -1e-9 || pos > static_cast<double>(n) + 1e-9)
    throw ExtrapolationError("fd interpolate: x = " + std::to_string(x) + " outside the space grid");
  auto j0 = static_cast<std::ptrdiff_t>(std::floor(pos)) - 1;
  j0 = std::clamp<std::ptrdiff_t>(j0, 0, static_cast<std::ptrdiff_t>(n) - 3);
  double out = 0.0;
  for (std::ptrdiff_t a = 0; a < 4; ++a) {
    double w = 1.0;
    for (std::ptrdiff_t b = 0; b < 4; ++b)
      if (a != b) w *= (pos - static_cast<double>(j0 + b)) / static_cast<double>(a - b);
    out += w * s(slice, static_cast<std::size_t>(j0 + a));
  }
  return out;
}

std::size_t slice_at(const PdeGrid& grid, double t) {
  const auto& ts = grid.surface.t;
  for (std::size_t i = 0; i < ts.size(); ++i)
    if (std::abs(ts[i] - t) <= 1e-12 * std::max(1.0, grid.T)) return i;
  throw GridError("fd: no stored slice at t = " + std::to_string(t));
}

}  // namespace gat::fd
