#include "gat/pricing.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gat/errors.hpp"
#include "gat/geometry.hpp"
#include "gat/parallel.hpp"
#include "gat/quadrature.hpp"

namespace gat::pricing {
namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// G as a function of the elapsed time q = tau - s and the offset d = y - z.
inline double kernel(double q, double d) {
  return std::exp(-d * d / (4.0 * q)) / (2.0 * std::sqrt(std::numbers::pi * q));
}

struct ZRule {
  std::vector<double> z, w;
};

// Composite Gauss-Legendre nodes on [lo, hi]. Panels are at most `panel`
// long, with extra breakpoints graded geometrically towards z = 0 at scale
// `grade` (the payoff kink smoothed over sqrt(s)).
ZRule z_rule(double lo, double hi, double panel, double grade, const quad::Rule& gl) {
  std::vector<double> bp{lo, hi};
  if (lo < 0.0 && 0.0 < hi) bp.push_back(0.0);
  if (grade > 0.0) {
    const double reach = std::max(std::abs(lo), std::abs(hi));
    for (double k = grade / 8.0; k < reach; k *= 2.0) {
      if (lo < k && k < hi) bp.push_back(k);
      if (lo < -k && -k < hi) bp.push_back(-k);
    }
  }
  std::sort(bp.begin(), bp.end());
  bp.erase(std::unique(bp.begin(), bp.end()), bp.end());
  ZRule r;
  for (std::size_t p = 0; p + 1 < bp.size(); ++p) {
    const double a = bp[p], b = bp[p + 1];
    const auto m = static_cast<std::size_t>(std::max(1.0, std::ceil((b - a) / panel)));
    const double len = (b - a) / static_cast<double>(m);
    for (std::size_t k = 0; k < m; ++k) {
      const double c = a + (static_cast<double>(k) + 0.5) * len;
      for (std::size_t g = 0; g < gl.nodes.size(); ++g) {
        r.z.push_back(c + 0.5 * len * gl.nodes[g]);
        r.w.push_back(0.5 * len * gl.weights[g]);
      }
    }
  }
  return r;
}

struct SNode {
  double s, q, weight;
};

// Time rule on [0, tau]: s = v^2 on the first half and s = tau - w^2 on the
// second, which absorbs the (tau - s)^{-1/2} singularity of the kernel.
std::vector<SNode> s_rule(double tau, std::size_t panels, const quad::Rule& gl) {
  std::vector<SNode> out;
  const double vmax = std::sqrt(0.5 * tau);
  for (int half = 0; half < 2; ++half)
    for (std::size_t p = 0; p < panels; ++p) {
      const double a = vmax * static_cast<double>(p) / static_cast<double>(panels);
      const double b = vmax * static_cast<double>(p + 1) / static_cast<double>(panels);
      for (std::size_t g = 0; g < gl.nodes.size(); ++g) {
        const double v = 0.5 * (a + b) + 0.5 * (b - a) * gl.nodes[g];
        const double w = 0.5 * (b - a) * gl.weights[g] * 2.0 * v;
        const double s = half == 0 ? v * v : tau - v * v;
        out.push_back({s, tau - s, w});
      }
    }
  return out;
}

// Duhamel integral int_0^tau ds int dz G(tau, y; s, z) F(s, z) at each y in ys.
template <typename F>
std::vector<double> duhamel(double tau, const std::vector<double>& ys, double zsd, const QuadratureOptions& opts,
                            F&& source) {
  std::vector<double> out(ys.size(), 0.0);
  if (tau <= 0.0) return out;
  const auto gl = quad::gauss_legendre(opts.order);
  const double ylo = *std::min_element(ys.begin(), ys.end());
  const double yhi = *std::max_element(ys.begin(), ys.end());
  std::vector<double> fz;
  for (const auto& sn : s_rule(tau, opts.s_panels, gl)) {
    const double width = std::sqrt(2.0 * sn.q);
    const double hw = zsd * width;
    const ZRule zr = z_rule(ylo - hw, yhi + hw, opts.z_panel_scale * width, std::sqrt(sn.s), gl);
    fz.resize(zr.z.size());
    for (std::size_t k = 0; k < zr.z.size(); ++k) fz[k] = zr.w[k] * source(sn.s, zr.z[k]);
    const double norm = 1.0 / (2.0 * std::sqrt(std::numbers::pi * sn.q));
    const double inv4q = 1.0 / (4.0 * sn.q);
    for (std::size_t j = 0; j < ys.size(); ++j) {
      const auto first = std::lower_bound(zr.z.begin(), zr.z.end(), ys[j] - hw) - zr.z.begin();
      const auto last = std::upper_bound(zr.z.begin(), zr.z.end(), ys[j] + hw) - zr.z.begin();
      double acc = 0.0;
      for (auto k = first; k < last; ++k) {
        const double d = ys[j] - zr.z[static_cast<std::size_t>(k)];
        acc += fz[static_cast<std::size_t>(k)] * std::exp(-d * d * inv4q);
      }
      out[j] += sn.weight * norm * acc;
    }
  }
  return out;
}

// Bilinear lookup that clamps y to the grid (used for integrands whose z
// window reaches past the y range, where the kernel weight is negligible).
double lookup_clamped(const TransformGrid& g, const GridField& f, double tau, double y) {
  const double ti = std::clamp((tau - g.tau.start) / g.tau.step, 0.0, static_cast<double>(g.tau.size - 1));
  const double yi = std::clamp((y - g.y.start) / g.y.step, 0.0, static_cast<double>(g.y.size - 1));
  const auto i0 = std::min(static_cast<std::size_t>(ti), g.tau.size - 2);
  const auto j0 = std::min(static_cast<std::size_t>(yi), g.y.size - 2);
  const double a = ti - static_cast<double>(i0);
  const double b = yi - static_cast<double>(j0);
  return (1 - a) * ((1 - b) * f(i0, j0) + b * f(i0, j0 + 1)) + a * ((1 - b) * f(i0 + 1, j0) + b * f(i0 + 1, j0 + 1));
}

GridField y_derivative(const TransformGrid& g, const GridField& f) {
  GridField d{f.rows, f.cols, std::vector<double>(f.values.size())};
  const double h = g.y.step;
  for (std::size_t i = 0; i < f.rows; ++i) {
    for (std::size_t j = 1; j + 1 < f.cols; ++j) d(i, j) = (f(i, j + 1) - f(i, j - 1)) / (2.0 * h);
    d(i, 0) = (-3.0 * f(i, 0) + 4.0 * f(i, 1) - f(i, 2)) / (2.0 * h);
    const auto n = f.cols - 1;
    d(i, n) = (3.0 * f(i, n) - 4.0 * f(i, n - 1) + f(i, n - 2)) / (2.0 * h);
  }
  return d;
}

}  // namespace

double heat_kernel(double tau, double y, double s, double z) {
  if (!(tau > s)) throw DomainError("heat_kernel: requires tau > s");
  return kernel(tau - s, y - z);
}

double u0(double tau, double y) {
  if (tau <= 0.0) return y > 0.0 ? std::exp(0.5 * y) - std::exp(-0.5 * y) : 0.0;
  const double rt = std::sqrt(2.0 * tau);
  return std::exp(0.5 * y + 0.25 * tau) * normal_cdf((y + tau) / rt) -
         std::exp(-0.5 * y + 0.25 * tau) * normal_cdf((y - tau) / rt);
}

double u0_prime(double tau, double y) {
  if (tau <= 0.0) {
    if (y > 0.0) return 0.5 * (std::exp(0.5 * y) + std::exp(-0.5 * y));
    return y == 0.0 ? 0.5 : 0.0;
  }
  const double rt = std::sqrt(2.0 * tau);
  return 0.5 * (std::exp(0.5 * y + 0.25 * tau) * normal_cdf((y + tau) / rt) +
                std::exp(-0.5 * y + 0.25 * tau) * normal_cdf((y - tau) / rt));
}

double SourceConvention::coefficient(const CallSpec& spec) const {
  const double base = 2.0 / (spec.sigma * spec.sigma);
  return scale == SourceScale::dimensionless ? base : base * spec.discounted_strike();
}

double SourceConvention::expansion(const CallSpec& spec) const {
  const double e = spec.rho * coefficient(spec);
  return sign == SourceSign::minus ? -e : e;
}

std::string to_string(SourceScale s) { return s == SourceScale::dimensionless ? "dimensionless" : "strike_scaled"; }
std::string to_string(SourceSign s) { return s == SourceSign::minus ? "minus" : "plus"; }

SourceScale parse_scale(const std::string& s) {
  if (s == "dimensionless") return SourceScale::dimensionless;
  if (s == "strike_scaled") return SourceScale::strike_scaled;
  throw DomainError("unknown source scale '" + s + "' (dimensionless | strike_scaled)");
}

SourceSign parse_sign(const std::string& s) {
  if (s == "minus") return SourceSign::minus;
  if (s == "plus") return SourceSign::plus;
  throw DomainError("unknown source sign '" + s + "' (minus | plus)");
}

SourceValue nonlinear_f(double v1, double v2, double c) {
  const double q = std::sqrt(1.25 * v1 * v1 + v1 * v2 + v2 * v2);
  SourceValue out{c * q, 0.0, 0.0};
  if (q > 0.0) {
    out.f1 = c * (2.5 * v1 + v2) / (2.0 * q);
    out.f2 = c * (v1 + 2.0 * v2) / (2.0 * q);
  }
  return out;
}

SourceValue nonlinear_f(double v1, double v2, const CallSpec& spec, const SourceConvention& conv) {
  return nonlinear_f(v1, v2, conv.coefficient(spec));
}

SourceTerm SourceTerm::unit() {
  return SourceTerm{[](double a, double b) { return nonlinear_f(a, b, 1.0); }};
}

TransformGrid TransformGrid::for_spec(const CallSpec& spec, std::size_t tau_intervals, std::size_t y_intervals,
                                      double y_halfwidth) {
  spec.validate();
  if (y_halfwidth <= 0.0) y_halfwidth = std::max(0.5, 6.0 * spec.sigma * std::sqrt(spec.T));
  TransformGrid g;
  g.tau = UniformAxis{0.0, spec.tau_max() / static_cast<double>(tau_intervals), tau_intervals + 1};
  g.y = UniformAxis{-y_halfwidth, 2.0 * y_halfwidth / static_cast<double>(y_intervals), y_intervals + 1};
  g.validate();
  return g;
}

void TransformGrid::validate() const {
  tau.validate("transform grid tau");
  y.validate("transform grid y");
  if (tau.size < 17 || y.size < 17) throw GridError("transform grid: need at least 16 intervals per axis");
  if (tau.start != 0.0) throw GridError("transform grid: tau must start at 0");
  if (!(y.start < 0.0 && y.back() > 0.0)) throw GridError("transform grid: y range must straddle 0");
  if (!(z_halfwidth_sd > 0.0)) throw GridError("transform grid: z half-width must be positive");
}

TransformGrid TransformGrid::refined() const {
  TransformGrid g = *this;
  g.tau = UniformAxis{tau.start, tau.step / 2.0, 2 * (tau.size - 1) + 1};
  g.y = UniformAxis{y.start, y.step / 2.0, 2 * (y.size - 1) + 1};
  return g;
}

GridField compute_U1(const TransformGrid& grid, const SourceTerm& source, const QuadratureOptions& opts,
                     CorrectionFields* diagnostics) {
  grid.validate();
  const auto ys = grid.y.nodes();
  GridField U{grid.tau.size, grid.y.size, std::vector<double>(grid.tau.size * grid.y.size, 0.0)};
  auto f = [&source](double s, double z) { return source.eval(u0(s, z), u0_prime(s, z)).f; };
  parallel_for(grid.tau.size - 1, [&](std::size_t k) {
    const std::size_t i = k + 1;
    const auto row = duhamel(grid.tau[i], ys, grid.z_halfwidth_sd, opts, f);
    std::copy(row.begin(), row.end(), U.values.begin() + static_cast<std::ptrdiff_t>(i * grid.y.size));
  });

  if (opts.check_refinement || diagnostics) {
    const std::size_t i = grid.tau.size - 1;
    std::size_t j = 0;
    for (std::size_t k = 0; k < ys.size(); ++k)
      if (std::abs(ys[k]) < std::abs(ys[j])) j = k;
    QuadratureOptions fine = opts;
    fine.s_panels *= 2;
    fine.z_panel_scale *= 0.5;
    const double refined = duhamel(grid.tau[i], {ys[j]}, grid.z_halfwidth_sd, fine, f)[0];
    const double base = U(i, j);
    if (diagnostics) {
      diagnostics->probe_tau = grid.tau[i];
      diagnostics->probe_y = ys[j];
      diagnostics->probe_u1 = base;
      diagnostics->probe_u1_refined = refined;
    }
    const double achieved = std::abs(refined - base) / std::max(std::abs(refined), 1e-300);
    if (opts.check_refinement && achieved > opts.tolerance && std::abs(refined - base) > 1e-300)
      throw QuadratureError("U1 quadrature did not converge under refinement", achieved);
  }
  return U;
}

GridField compute_U2(const TransformGrid& grid, const SourceTerm& source, const GridField& U1,
                     const QuadratureOptions& opts) {
  grid.validate();
  if (U1.rows != grid.tau.size || U1.cols != grid.y.size) throw ShapeError("compute_U2: U1 does not match grid");
  const GridField dU1 = y_derivative(grid, U1);
  const auto ys = grid.y.nodes();
  GridField U{grid.tau.size, grid.y.size, std::vector<double>(grid.tau.size * grid.y.size, 0.0)};
  auto f = [&](double s, double z) {
    const SourceValue sv = source.eval(u0(s, z), u0_prime(s, z));
    if (sv.f1 == 0.0 && sv.f2 == 0.0) return 0.0;
    return sv.f1 * lookup_clamped(grid, U1, s, z) + sv.f2 * lookup_clamped(grid, dU1, s, z);
  };
  QuadratureOptions o = opts;
  o.check_refinement = false;
  parallel_for(grid.tau.size - 1, [&](std::size_t k) {
    const std::size_t i = k + 1;
    const auto row = duhamel(grid.tau[i], ys, grid.z_halfwidth_sd, o, f);
    std::copy(row.begin(), row.end(), U.values.begin() + static_cast<std::ptrdiff_t>(i * grid.y.size));
  });
  return U;
}

CorrectionFields compute_corrections(const TransformGrid& grid, const SourceTerm& source,
                                     const QuadratureOptions& opts) {
  CorrectionFields out;
  out.U1 = compute_U1(grid, source, opts, &out);
  out.U2 = compute_U2(grid, source, out.U1, opts);
  return out;
}

namespace {

void check_coverage(const TransformGrid& grid, double tau, double y) {
  const double eps = 1e-12;
  const double tlo = grid.tau.start, thi = grid.tau.back();
  const double ylo = grid.y.start, yhi = grid.y.back();
  if (tau < tlo - eps * (thi - tlo) || tau > thi + eps * (thi - tlo) || y < ylo - eps * (yhi - ylo) ||
      y > yhi + eps * (yhi - ylo))
    throw ExtrapolationError("point (tau=" + std::to_string(tau) + ", y=" + std::to_string(y) +
                             ") outside the transform grid");
}

}  // namespace

double interpolate(const TransformGrid& grid, const GridField& field, double tau, double y) {
  check_coverage(grid, tau, y);
  return lookup_clamped(grid, field, tau, y);
}

PerturbationSolution::PerturbationSolution(CallSpec spec, TransformGrid grid, SourceConvention convention,
                                           std::shared_ptr<const CorrectionFields> fields)
    : spec_(spec), grid_(std::move(grid)), convention_(convention), fields_(std::move(fields)) {
  spec_.validate();
  grid_.validate();
}

PerturbationSolution PerturbationSolution::with_rho(double rho) const {
  CallSpec s = spec_;
  s.rho = rho;
  return PerturbationSolution(s, grid_, convention_, fields_);
}

PerturbationSolution PerturbationSolution::with_convention(SourceConvention conv) const {
  return PerturbationSolution(spec_, grid_, conv, fields_);
}

double PerturbationSolution::U1(double tau, double y) const {
  if (!fields_) throw Error("perturbation solution has no correction fields");
  return convention_.coefficient(spec_) * interpolate(grid_, fields_->U1, tau, y);
}

double PerturbationSolution::U2(double tau, double y) const {
  if (!fields_) throw Error("perturbation solution has no correction fields");
  const double c = convention_.coefficient(spec_);
  return c * c * interpolate(grid_, fields_->U2, tau, y);
}

double PerturbationSolution::u(double tau, double y) const {
  const double eps = expansion();
  check_coverage(grid_, tau, y);
  if (eps == 0.0) return u0(tau, y);
  if (!fields_) throw Error("perturbation solution has no correction fields");
  return u0(tau, y) + eps * interpolate(grid_, fields_->U1, tau, y) +
         eps * eps * interpolate(grid_, fields_->U2, tau, y);
}

double PerturbationSolution::price_discounted(double X, double t) const {
  const double Kd = spec_.discounted_strike();
  if (!(X > 0.0)) throw DomainError("price_discounted: X must be positive");
  if (t == spec_.T) return std::max(X - Kd, 0.0);
  if (t < 0.0 || t > spec_.T) throw DomainError("price_discounted: t outside [0, T]");
  const double tau = 0.5 * spec_.sigma * spec_.sigma * (spec_.T - t);
  const double y = std::log(X / Kd);
  return Kd * std::exp(0.5 * y - 0.25 * tau) * u(tau, y);
}

double PerturbationSolution::price_undiscounted(double S, double t) const {
  if (t == spec_.T) {
    if (!(S > 0.0)) throw DomainError("price_undiscounted: S must be positive");
    return std::max(S - spec_.K, 0.0);
  }
  const double g = std::exp(spec_.r * t);
  return g * price_discounted(S / g, t);
}

PriceSurface PerturbationSolution::surface(const std::vector<double>& t, const std::vector<double>& x) const {
  PriceSurface s{t, x, std::vector<double>(t.size() * x.size())};
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) s(i, j) = price_discounted(x[j], t[i]);
  return s;
}

PerturbationSolution solve_perturbation(const CallSpec& spec, const TransformGrid& grid,
                                        const SourceConvention& convention, const QuadratureOptions& opts) {
  spec.validate();
  grid.validate();
  if (std::abs(grid.tau.back() - spec.tau_max()) > 1e-12 * spec.tau_max())
    throw GridError("transform grid does not end at sigma^2 T / 2");
  std::shared_ptr<const CorrectionFields> fields;
  if (spec.rho != 0.0)
    fields = std::make_shared<const CorrectionFields>(compute_corrections(grid, SourceTerm::unit(), opts));
  return PerturbationSolution(spec, grid, convention, std::move(fields));
}

namespace {

// Three-point first and second derivatives on a nonuniform stencil.
struct Stencil {
  double d1m, d10, d1p;  // first derivative weights
  double d2m, d20, d2p;  // second derivative weights
};

Stencil central(double h1, double h2) {
  return {-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2)),
          2.0 / (h1 * (h1 + h2)), -2.0 / (h1 * h2), 2.0 / (h2 * (h1 + h2))};
}

}  // namespace

BssReport bss_consistency(const PriceSurface& surface, const CallSpec& spec, const BssOptions& opts) {
  spec.validate();
  const auto nt = surface.t.size();
  const auto nx = surface.x.size();
  if (nt < 3 || nx < 3 || surface.values.size() != nt * nx) throw ShapeError("bss_consistency: surface too small");
  BssReport rep;
  rep.rho_input = spec.rho;
  double sum_err = 0.0, sum_rho = 0.0;
  const double sigma = spec.sigma;
  for (std::size_t i = 0; i + 1 < nt; ++i) {
    // d/dt: central inside, second-order forward at the first row.
    double wa, wb, wc;
    std::size_t ia, ib, ic;
    if (i == 0) {
      const double h1 = surface.t[1] - surface.t[0], h2 = surface.t[2] - surface.t[1];
      ia = 0, ib = 1, ic = 2;
      wa = -(2.0 * h1 + h2) / (h1 * (h1 + h2));
      wb = (h1 + h2) / (h1 * h2);
      wc = -h1 / (h2 * (h1 + h2));
    } else {
      const auto st = central(surface.t[i] - surface.t[i - 1], surface.t[i + 1] - surface.t[i]);
      ia = i - 1, ib = i, ic = i + 1;
      wa = st.d1m, wb = st.d10, wc = st.d1p;
    }
    for (std::size_t j = std::max<std::size_t>(1, opts.edge_nodes); j + std::max<std::size_t>(1, opts.edge_nodes) < nx;
         ++j) {
      const double X = surface.x[j];
      if (opts.x_max > opts.x_min && (X < opts.x_min || X > opts.x_max)) continue;
      const double phi = surface(i, j);
      if (!(phi > opts.phi_floor * spec.K)) continue;
      const auto sx = central(X - surface.x[j - 1], surface.x[j + 1] - X);
      const double px = sx.d1m * surface(i, j - 1) + sx.d10 * phi + sx.d1p * surface(i, j + 1);
      const double pxx = sx.d2m * surface(i, j - 1) + sx.d20 * phi + sx.d2p * surface(i, j + 1);
      const double pt = wa * surface(ia, j) + wb * surface(ib, j) + wc * surface(ic, j);
      const double tau = sigma * X * px / phi;
      const double beta = (pt + X * px * opts.alpha + 0.5 * sigma * sigma * X * X * pxx) / phi;
      geometry::ItoCoefficients c;
      c.alpha = Eigen::Vector2d(opts.alpha, beta);
      c.sigma = Eigen::MatrixXd(2, 1);
      c.sigma << sigma, tau;
      c.r = Eigen::Vector2d::Zero();
      c.t = surface.t[i];
      const Eigen::VectorXd rv = geometry::rho(c, geometry::Orientation::last_positive);
      const double rho = rv.size() == 1 ? rv(0) : 0.0;
      const double err = std::abs(rho - spec.rho);
      rep.detail.push_back({surface.t[i], X, phi, tau, beta, rho});
      rep.max_abs_error = std::max(rep.max_abs_error, err);
      sum_err += err;
      sum_rho += rho;
    }
  }
  rep.nodes = rep.detail.size();
  if (rep.nodes > 0) {
    rep.mean_abs_error = sum_err / static_cast<double>(rep.nodes);
    rep.mean_rho = sum_rho / static_cast<double>(rep.nodes);
  }
  return rep;
}

}  // namespace gat::pricing
