#pragma once

#include <cstddef>
#include <vector>

#include "pdmp/measure.hpp"
#include "pdmp/metrics.hpp"
#include "pdmp/model.hpp"
#include "pdmp/rng.hpp"

namespace pdmp {

/// One draw from P(x, .): flow for an Exp(lambda) time, then jump and switch.
State sample_P(const PdmpModel& model, const State& x, RngStream& rng);
/// One draw from G(x, .): flow for an Exp(lambda) time; the mode is kept.
State sample_G(const PdmpModel& model, const State& x, RngStream& rng);
/// One draw from W(x, .): theta ~ p(., y), y' = w_theta(y), j ~ pi_{i.}(y').
State sample_W(const PdmpModel& model, const State& x, RngStream& rng);

enum class Operator { P, G, W };

const char* to_string(Operator op);
Operator parse_operator(const std::string& name);

/// Empirical push-forward: one draw per atom (atom k on rng.split(k)),
/// weights and origins preserved.
EmpiricalMeasure pushforward(Operator op, const PdmpModel& model, const EmpiricalMeasure& mu,
                             const RngStream& rng, int workers = 1);

struct CorrespondenceReport {
  double d_WG = 0.0;
  double d_null = 0.0;
  std::size_t n_atoms = 0;
  std::size_t n_boot = 0;
  double c = 1.0;
};

/// Compares W(G(mu_hat)) with mu_hat and reports the half-split resolution
/// of mu_hat alongside. Uses rng.split(0) for G, split(1) for W and
/// split(2) for the half splits.
CorrespondenceReport check_correspondence(const PdmpModel& model, const EmpiricalMeasure& mu_hat,
                                          const RngStream& rng, const MetricConfig& cfg,
                                          std::size_t n_boot, int workers = 1);

/// A path (j_0..j_{n-1}, t_1..t_n, theta_1..theta_n) of the n-step maps.
struct PathSpec {
  std::vector<int> modes;
  std::vector<double> times;
  std::vector<double> thetas;

  std::size_t n() const { return times.size(); }
  /// Throws PreconditionError for inconsistent lengths, n = 0, negative
  /// times, invalid modes or theta outside Theta.
  void validate(const PdmpModel& model) const;
};

/// W_n(y, j, t, theta): W_0 = y, W_k = w_{theta_k}(S_{j_{k-1}}(t_k, W_{k-1})).
Vector compose_Wn(const PdmpModel& model, const Vector& y, const PathSpec& path);

/// Pi_n: product of pi_{j_{k-1} j_k}(W_k) with j_n = j_final.
double weight_Pi_n(const PdmpModel& model, const Vector& y, const PathSpec& path, int j_final);

/// P_n: product of p_{theta_k}(S_{j_{k-1}}(t_k, W_{k-1})).
double weight_P_n(const PdmpModel& model, const Vector& y, const PathSpec& path);

/// T_n = lambda^n exp(-lambda sum t) P_n Pi_n.
double weight_T_n(const PdmpModel& model, const Vector& y, const PathSpec& path, int j_final);

}  // namespace pdmp
