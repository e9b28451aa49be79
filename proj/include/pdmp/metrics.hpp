#pragma once

#include <cstddef>
#include <vector>

#include "pdmp/measure.hpp"
#include "pdmp/model.hpp"
#include "pdmp/rng.hpp"

namespace pdmp {

/// Parameters of the product metric rho_c((u,i),(v,j)) = |u - v| + c [i != j].
struct MetricConfig {
  double c = 1.0;
  void validate() const;
};

double rho_c(const MetricConfig& cfg, const State& x1, const State& x2);

/// Exact Fortet-Mourier distance between two normalized discrete measures.
///
/// Computed as optimal transport for the truncated cost min(rho_c, 1) on the
/// pooled support (min-cost flow, see NetworkSimplex). Throws on empty or
/// unnormalized input and on mixed dimensions.
double fm_distance(const MetricConfig& cfg, const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

/// Mean d_FM between the two halves of `n_boot` random splits of mu; the
/// statistical resolution used as a noise floor. Split b uses rng.split(b).
double half_split_noise_floor(const MetricConfig& cfg, const EmpiricalMeasure& mu, std::size_t n_boot,
                              const RngStream& rng);

struct RateRow {
  int n = 0;
  double d_n = 0.0;
  double noise_floor = 0.0;
  bool used = false;
};

/// Least-squares fit of log d_n = log C + n log beta.
struct RateFit {
  double beta = 0.0;
  double C = 0.0;
  double residual = 0.0;  // RMS residual of the log fit
  int n_lo = 0;
  int n_hi = 0;
  double c = 1.0;
  double noise_floor = 0.0;
  std::vector<RateRow> table;
};

struct RateOptions {
  int n_max = 10;
  std::size_t n_rep = 10000;
  std::size_t n_boot = 5;
  int workers = 1;
};

/// Estimates d_n = d_FM(law of the n-step chain from init, mu_star) for
/// n = 1..n_max (n uses rng.split(n), replicate r its child r) and fits the
/// geometric rate over the leading run of d_n above the noise floor
/// (rng.split(0) drives the half splits).
RateFit fit_rate(const MetricConfig& cfg, const PdmpModel& model, const State& init,
                 const EmpiricalMeasure& mu_star, const RateOptions& opts, const RngStream& rng);

}  // namespace pdmp
