#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "gat/axis.hpp"

// Deflators, term structures and their algebra: cashflow intensities, gauge
// transforms, forward and short rates, portfolio aggregation.
namespace gat::gauges {

/// Deterministic cashflow intensity sampled on a uniform grid h_k = k * step.
///
/// A single-sample intensity is a point mass at h = 0 with total mass
/// `step * samples[0]`; `dirac(step)` is the unit mass. Densities with more
/// than one sample are treated as piecewise-linear between samples.
class CashflowIntensity {
 public:
  CashflowIntensity(double step, std::vector<double> samples);

  static CashflowIntensity dirac(double step);

  template <typename F>
  static CashflowIntensity sampled(double step, double support_end, F&& density) {
    const auto n = static_cast<std::size_t>(std::llround(support_end / step)) + 1;
    std::vector<double> s(n);
    for (std::size_t k = 0; k < n; ++k) s[k] = density(step * static_cast<double>(k));
    return CashflowIntensity(step, std::move(s));
  }

  double step() const { return step_; }
  std::span<const double> samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  double support_end() const { return step_ * static_cast<double>(samples_.size() - 1); }
  bool is_point_mass() const { return samples_.size() == 1; }
  double total_mass() const;

  /// Same intensity on a commensurate grid (one step an integer multiple of
  /// the other). Point masses keep their mass; densities are interpolated
  /// linearly. Throws GridError for incommensurate steps.
  CashflowIntensity resampled(double new_step) const;

 private:
  double step_;
  std::vector<double> samples_;
};

/// Discrete convolution (pi * nu)_n = step * sum_k pi_k nu_{n-k}.
CashflowIntensity convolve(const CashflowIntensity& pi, const CashflowIntensity& nu);

/// Row-major surface over (valuation time, maturity offset). Entry (i, m)
/// refers to valuation time t_i and maturity s = t_i + m * maturity_step.
struct TimeOffsetSurface {
  UniformAxis valuation;
  double maturity_step = 0.0;
  std::size_t maturities = 0;
  std::vector<double> values;

  double operator()(std::size_t i, std::size_t m) const { return values[i * maturities + m]; }
  double& operator()(std::size_t i, std::size_t m) { return values[i * maturities + m]; }
};

using ForwardSurface = TimeOffsetSurface;

/// Deflator path and term structure of one instrument.
///
/// Invariants checked at construction: P(t, t) = 1 within 1e-12 and
/// P(t, s) > 0 everywhere (DomainError otherwise).
class Gauge {
 public:
  Gauge(UniformAxis valuation, double maturity_step, std::vector<double> deflator,
        std::vector<double> term_structure);

  const UniformAxis& valuation() const { return surface_.valuation; }
  double maturity_step() const { return surface_.maturity_step; }
  std::size_t maturities() const { return surface_.maturities; }
  std::span<const double> deflator() const { return deflator_; }
  double deflator(std::size_t i) const { return deflator_[i]; }
  double discount(std::size_t i, std::size_t m) const { return surface_(i, m); }
  const TimeOffsetSurface& term_structure() const { return surface_; }

  bool shares_grid_with(const Gauge& other) const;

 private:
  std::vector<double> deflator_;
  TimeOffsetSurface surface_;
};

/// Gauge transform (D, P) -> (D^pi, P^pi). Integrals over the intensity use
/// the same cell-mass rule as `convolve`, so composition is exact on a shared
/// grid. The output term structure loses the maturities consumed by the
/// intensity's support.
Gauge gauge_transform(const Gauge& g, const CashflowIntensity& pi);

/// f(t, s) = -d/ds log P(t, s): central differences inside, second-order
/// one-sided differences at the maturity edges.
ForwardSurface forward_rate(const Gauge& g);

/// Term structure exp(-int_t^s f) rebuilt from forward rates with the
/// cumulative trapezoid rule.
TimeOffsetSurface term_structure_from_forward(const ForwardSurface& f);

/// Forward rate at the first off-diagonal maturity node of every valuation
/// time. Converges to lim_{s->t+} f(t, s) as the maturity step shrinks.
std::vector<double> short_rate(const ForwardSurface& f);

/// w_j = x_j D_j / sum_k x_k D_k. Throws DegenerateError if the portfolio
/// deflator vanishes.
std::vector<double> portfolio_weights(std::span<const double> nominals, std::span<const double> deflators);

Gauge portfolio_gauge(std::span<const double> nominals, std::span<const Gauge> gauges);
std::vector<double> portfolio_short_rate(std::span<const double> nominals, std::span<const Gauge> gauges);

// CSV persistence. Deflators: "t,value"; term structures: "t,s,value";
// intensities: "h,value". Writers emit the same schemas.
Gauge read_gauge_csv(const std::filesystem::path& deflator_csv, const std::filesystem::path& term_structure_csv);
void write_gauge_csv(const Gauge& g, const std::filesystem::path& deflator_csv,
                     const std::filesystem::path& term_structure_csv);
CashflowIntensity read_intensity_csv(const std::filesystem::path& path);
void write_intensity_csv(const CashflowIntensity& pi, const std::filesystem::path& path);

}  // namespace gat::gauges
