#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "gat/gauges.hpp"
#include "gat/geometry.hpp"

// Monte Carlo for dS/S = alpha dt + sigma dW and ensemble estimators of
// Nelson's stochastic derivatives.
namespace gat::sim {

/// Coefficients per simulation step (piecewise constant on [t_k, t_k + dt)).
/// A single entry is used for every step.
struct ModelSchedule {
  Eigen::VectorXd S0;
  std::vector<geometry::ItoCoefficients> steps;
  double dt = 0.0;  // step length of `steps`; required when there is more than one entry

  static ModelSchedule constant(const geometry::ItoCoefficients& c, Eigen::VectorXd S0);
  const geometry::ItoCoefficients& at(std::size_t step) const { return steps.size() == 1 ? steps[0] : steps[step]; }
  /// Coefficients in force at time t.
  const geometry::ItoCoefficients& at_time(double t) const;
  std::size_t assets() const { return static_cast<std::size_t>(S0.size()); }
  std::size_t factors() const { return steps.empty() ? 0 : steps[0].factors(); }
  void validate(std::size_t n_steps) const;
};

struct SimConfig {
  std::size_t paths = 1000;
  double dt = 1e-3;
  std::size_t steps = 1000;        // T = steps * dt
  std::uint64_t seed = 1;
  std::size_t record_every = 1;    // keep every n-th step
};

/// Recorded states: for every kept time, every path, N asset values then K
/// Brownian coordinates.
class PathEnsemble {
 public:
  PathEnsemble(std::size_t paths, std::size_t assets, std::size_t factors, std::size_t records, double record_dt,
               std::uint64_t seed);

  std::size_t paths() const { return m_; }
  std::size_t assets() const { return n_; }
  std::size_t factors() const { return k_; }
  std::size_t records() const { return records_; }
  double record_dt() const { return dt_; }
  std::uint64_t seed() const { return seed_; }
  double time(std::size_t i) const { return dt_ * static_cast<double>(i); }

  double S(std::size_t i, std::size_t path, std::size_t j) const { return data_[offset(i, path) + j]; }
  double W(std::size_t i, std::size_t path, std::size_t k) const { return data_[offset(i, path) + n_ + k]; }
  double& S(std::size_t i, std::size_t path, std::size_t j) { return data_[offset(i, path) + j]; }
  double& W(std::size_t i, std::size_t path, std::size_t k) { return data_[offset(i, path) + n_ + k]; }

  std::span<const double> raw() const { return data_; }
  std::span<double> raw() { return data_; }
  bool operator==(const PathEnsemble& o) const;

 private:
  std::size_t offset(std::size_t i, std::size_t path) const { return (i * m_ + path) * (n_ + k_); }
  std::size_t m_, n_, k_, records_;
  double dt_;
  std::uint64_t seed_;
  std::vector<double> data_;
};

/// Seed of path p's generator: splitmix64(seed + (p + 1) * 0x9E3779B97F4A7C15).
std::uint64_t path_seed(std::uint64_t master, std::size_t path);

/// Log-Euler scheme S <- S exp((alpha - diag(sigma sigma^T)/2) dt + sigma dW).
PathEnsemble simulate(const ModelSchedule& model, const SimConfig& cfg);

struct EstimatorConfig {
  double h = 0.0;           // derivative lag; 0 selects 5 dt (rounded to whole records)
  std::size_t k = 0;        // neighbours; 0 selects max(8, M / 200)
  double t_min = 0.0;       // 0 selects 10 dt
};

/// Scalar functional Q(record, path) of the ensemble.
using PathFunctional = std::function<double(const PathEnsemble&, std::size_t, std::size_t)>;

/// Raw per-path quotients at one record time.
struct RawDifferences {
  double t = 0.0;
  std::vector<double> forward;   // (Q_{t+h} - Q_t) / h
  std::vector<double> backward;  // (Q_t - Q_{t-h}) / h
  std::vector<double> mean;      // (Q_{t+h} - Q_{t-h}) / (2h)
};

/// Conditional-expectation estimates per path at one record time.
struct NelsonSlice {
  double t = 0.0;
  std::vector<double> D, Dstar, Dmean;
  RawDifferences raw;
};

/// Resolved estimator settings for an ensemble (lag in records, neighbour count).
struct ResolvedEstimator {
  std::size_t lag = 1;
  double h = 0.0;
  std::size_t k = 8;
  double t_min = 0.0;
};
ResolvedEstimator resolve(const PathEnsemble& e, const EstimatorConfig& cfg);

/// k-nearest-neighbour average of `values` over the Brownian state W_t at
/// record i. Throws EstimationError if there are fewer than k paths.
std::vector<double> knn_conditional_mean(const PathEnsemble& e, std::size_t i, std::span<const double> values,
                                         std::size_t k);

RawDifferences raw_differences(const PathEnsemble& e, const PathFunctional& Q, std::size_t i, std::size_t lag);
NelsonSlice nelson_at(const PathEnsemble& e, const PathFunctional& Q, std::size_t i, const EstimatorConfig& cfg = {});

/// Ensemble averages of the conditional estimates over time.
struct NelsonSeries {
  std::vector<double> t;
  std::vector<double> D, Dstar, Dmean;
  std::vector<double> D_se, Dstar_se, Dmean_se;
};
NelsonSeries nelson_derivatives(const PathEnsemble& e, const PathFunctional& Q, const EstimatorConfig& cfg = {});

/// Raw values grouped into equal-count bins of a scalar state, compared with
/// an expected value per path.
struct BinnedComparison {
  std::vector<double> state_mean, estimate, se, expected;
  std::vector<std::size_t> count;
  double max_z = 0.0;  // max |estimate - expected| / se
};
BinnedComparison bin_by_state(std::span<const double> state, std::span<const double> raw,
                              std::span<const double> expected, std::size_t bins);

/// Mean and standard error per time.
struct Series {
  std::vector<double> t, mean, se;
};

/// Ret^x_t = D log D^x_t + r^x_t, with D^x = sum_j x_j S_j on each path and
/// r^x the D-weighted short rate of the gauges (sampled at the record times).
Series instantaneous_return(const PathEnsemble& e, std::span<const double> nominals,
                            std::span<const gauges::Gauge> gauges, const EstimatorConfig& cfg = {});

/// Estimate of rho_t per bucket with its standard error.
struct RhoEstimate {
  std::size_t dimension = 0;             // B
  std::vector<double> t;                 // record times used
  std::vector<Eigen::VectorXd> mean;     // per time
  std::vector<Eigen::VectorXd> se;
  Eigen::VectorXd bucket_mean;           // per-path time average over [t_lo, t_hi]
  Eigen::VectorXd bucket_se;
  double t_lo = 0.0, t_hi = 0.0;
};

/// Recovers alpha + r from D log S via the correction diag(sigma sigma^T)/2 -
/// sigma W_t / (2t), then projects on J_t. The SE is floored at 64 ulp of the
/// largest term so exactly constant estimates do not report zero spread.
RhoEstimate empirical_rho(const PathEnsemble& e, const ModelSchedule& model, double t_lo, double t_hi,
                          const EstimatorConfig& cfg = {},
                          geometry::Orientation orientation = geometry::Orientation::first_positive);

/// Self-financing residual D(x.D) - x.D D + (1/2) D*<x, D> with D the asset
/// paths. `strategy` holds x per record and path, N entries each.
struct SelfFinancingReport {
  Series residual;
  Series covariation;  // (1/2) D*<x, D>
};
SelfFinancingReport self_financing_residual(const PathEnsemble& e, std::span<const double> strategy,
                                            const EstimatorConfig& cfg = {});

// Binary layout: "GATE", u32 version = 1, u64 M, u32 N, u32 K, u64 records - 1,
// f64 record dt, u64 seed, then the payload as f64; all little-endian.
void write_ensemble(const PathEnsemble& e, const std::filesystem::path& path);
PathEnsemble read_ensemble(const std::filesystem::path& path);
/// Columns t, path, S0.., W0..; at most max_paths paths.
void write_ensemble_csv(const PathEnsemble& e, const std::filesystem::path& path, std::size_t max_paths = 100);

}  // namespace gat::sim
