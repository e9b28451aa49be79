#pragma once

#include <cstdint>
#include <vector>

#include "pdmp/measure.hpp"
#include "pdmp/model.hpp"
#include "pdmp/rng.hpp"

namespace pdmp {

inline constexpr std::uint64_t kDefaultMaxRejections = 1'000'000;

/// Post-jump chain path: jump times tau_0 = 0 < tau_1 < ..., gaps, the
/// post-jump states (Y_n, xi_n) and the drawn theta_n.
///
/// Sizes: tau and states hold n_steps + 1 entries; dtau and thetas hold
/// n_steps (dtau[k] and thetas[k] belong to jump k + 1).
struct Trajectory {
  std::vector<double> tau;
  std::vector<double> dtau;
  std::vector<State> states;
  std::vector<double> thetas;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  std::size_t steps() const { return dtau.size(); }
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct StepResult {
  State state;
  double dtau = 0.0;
  double theta = 0.0;
};

/// Draws theta with density p(., z) w.r.t. the base measure of Theta:
/// categorical for finite Theta, rejection against M(z) for an interval.
double sample_theta(const PdmpModel& model, const Vector& z, RngStream& rng,
                    std::uint64_t max_attempts = kDefaultMaxRejections);

/// Draws the next mode j with probabilities pi_{from, j}(y).
int sample_mode(const PdmpModel& model, int from, const Vector& y, RngStream& rng);

/// One transition of the post-jump chain: dtau ~ Exp(lambda),
/// z = S_i(dtau, y), theta ~ p(., z), y' = w_theta(z), j ~ pi_{i.}(y').
StepResult step_chain(const PdmpModel& model, const State& state, RngStream& rng,
                      std::uint64_t max_attempts = kDefaultMaxRejections);

Trajectory simulate_chain(const PdmpModel& model, const State& init, std::size_t n_steps,
                          RngStream rng);

/// Continuous-time interpolation Phi(t) = (S_{xi_n}(t - tau_n, Y_n), xi_n)
/// for tau_n <= t < tau_{n+1}.
State interpolate(const PdmpModel& model, const Trajectory& traj, double t);

struct InvariantSampling {
  std::size_t n_traj = 100;
  std::size_t burn_in = 200;
  std::size_t n_keep = 100;  // kept states per trajectory
  std::size_t thin = 1;
  int workers = 1;
};

/// Pools post-jump states from independent chains. Chain r uses
/// rng.split(r); from each chain the states at steps burn_in + k * thin,
/// k = 1..n_keep, are kept with equal weights.
EmpiricalMeasure sample_invariant(const PdmpModel& model, const State& init,
                                  const InvariantSampling& cfg, const RngStream& rng);

/// Runs n_traj chains of n_steps each (chain r on rng.split(r)).
std::vector<Trajectory> simulate_many(const PdmpModel& model, const State& init,
                                      std::size_t n_traj, std::size_t n_steps,
                                      const RngStream& rng, int workers = 1);

}  // namespace pdmp
