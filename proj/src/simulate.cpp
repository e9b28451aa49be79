#include "pdmp/simulate.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "pdmp/parallel.hpp"

namespace pdmp {

double sample_theta(const PdmpModel& model, const Vector& z, RngStream& rng,
                    std::uint64_t max_attempts) {
  const ThetaSpace& theta = model.theta();
  const JumpFamily& jumps = model.jumps();

  if (theta.is_finite()) {
    const auto labels = theta.labels();
    const auto weights = theta.weights();
    if (labels.size() == 1) return labels[0];
    double total = 0.0;
    for (std::size_t k = 0; k < labels.size(); ++k) total += jumps.density(labels[k], z) * weights[k];
    if (!(total > 0.0)) throw SimulationError("jump densities vanish at the pre-jump location");
    double u = rng.uniform() * total;
    for (std::size_t k = 0; k + 1 < labels.size(); ++k) {
      u -= jumps.density(labels[k], z) * weights[k];
      if (u < 0.0) return labels[k];
    }
    return labels.back();
  }

  const double envelope = jumps.envelope(z) * theta.density_bound();
  if (!(envelope > 0.0) || !std::isfinite(envelope)) {
    throw SimulationError("interval Theta needs a finite, positive density envelope M(y)");
  }
  for (std::uint64_t attempt = 0; attempt < max_attempts; ++attempt) {
    const double candidate = rng.uniform(theta.lo(), theta.hi());
    const double target = jumps.density(candidate, z) * theta.base_density(candidate);
    if (target > envelope * (1.0 + 1e-12)) {
      throw SimulationError(fmt::format(
          "density envelope violated: p(theta={}) * base = {} exceeds M(y) * bound = {}", candidate,
          target, envelope));
    }
    if (rng.uniform() * envelope <= target) return candidate;
  }
  throw SimulationError(fmt::format(
      "rejection sampler for theta gave up after {} attempts; the envelope M(y) is too loose",
      max_attempts));
}

int sample_mode(const PdmpModel& model, int from, const Vector& y, RngStream& rng) {
  const int n = model.modes();
  if (n == 1) return 1;
  const SwitchKernel& pi = model.switching();
  double u = rng.uniform();
  for (int j = 1; j < n; ++j) {
    u -= pi.prob(from, j, y);
    if (u < 0.0) return j;
  }
  return n;
}

StepResult step_chain(const PdmpModel& model, const State& state, RngStream& rng,
                      std::uint64_t max_attempts) {
  StepResult out;
  out.dtau = rng.exponential(model.lambda());
  const Vector z = model.semiflow().eval(state.mode, out.dtau, state.y);
  out.theta = sample_theta(model, z, rng, max_attempts);
  out.state.y = model.jumps().map(out.theta, z);
  out.state.mode = sample_mode(model, state.mode, out.state.y, rng);
  return out;
}

Trajectory simulate_chain(const PdmpModel& model, const State& init, std::size_t n_steps,
                          RngStream rng) {
  model.check_state(init);
  Trajectory traj;
  traj.seed = rng.seed();
  traj.stream = rng.stream();
  traj.tau.reserve(n_steps + 1);
  traj.states.reserve(n_steps + 1);
  traj.dtau.reserve(n_steps);
  traj.thetas.reserve(n_steps);
  traj.tau.push_back(0.0);
  traj.states.push_back(init);
  for (std::size_t n = 1; n <= n_steps; ++n) {
    StepResult step;
    try {
      step = step_chain(model, traj.states.back(), rng);
    } catch (const Error& e) {
      throw SimulationError(fmt::format("step {}: {}", n, e.what()));
    }
    traj.dtau.push_back(step.dtau);
    traj.tau.push_back(traj.tau.back() + step.dtau);
    traj.thetas.push_back(step.theta);
    traj.states.push_back(std::move(step.state));
  }
  return traj;
}

State interpolate(const PdmpModel& model, const Trajectory& traj, double t) {
  if (traj.tau.empty()) throw PreconditionError("interpolate: empty trajectory");
  if (!(t >= 0.0)) throw PreconditionError("interpolate: t must be >= 0");
  if (t > traj.tau.back()) {
    throw PreconditionError(fmt::format(
        "t = {} lies beyond the simulated horizon tau = {}; simulate more steps", t,
        traj.tau.back()));
  }
  // Last n with tau_n <= t.
  const auto it = std::upper_bound(traj.tau.begin(), traj.tau.end(), t);
  const auto n = static_cast<std::size_t>(std::distance(traj.tau.begin(), it)) - 1;
  const State& base = traj.states[n];
  const double elapsed = t - traj.tau[n];
  if (elapsed == 0.0) return base;
  return State{model.semiflow().eval(base.mode, elapsed, base.y), base.mode};
}

std::vector<Trajectory> simulate_many(const PdmpModel& model, const State& init,
                                      std::size_t n_traj, std::size_t n_steps,
                                      const RngStream& rng, int workers) {
  std::vector<Trajectory> out(n_traj);
  parallel_for(n_traj, workers, [&](std::size_t r) {
    out[r] = simulate_chain(model, init, n_steps, rng.split(r));
  });
  return out;
}

EmpiricalMeasure sample_invariant(const PdmpModel& model, const State& init,
                                  const InvariantSampling& cfg, const RngStream& rng) {
  if (cfg.n_traj < 1) throw PreconditionError("sample_invariant: n_traj must be >= 1");
  if (cfg.n_keep < 1) throw PreconditionError("sample_invariant: n_keep must be >= 1");
  if (cfg.thin < 1) throw PreconditionError("sample_invariant: thin must be >= 1");
  model.check_state(init);

  struct Kept {
    State state;
    AtomOrigin origin;
  };
  std::vector<std::vector<Kept>> per_chain(cfg.n_traj);

  parallel_for(cfg.n_traj, cfg.workers, [&](std::size_t r) {
    RngStream stream = rng.split(r);
    auto& kept = per_chain[r];
    kept.reserve(cfg.n_keep);
    State current = init;
    double tau = 0.0;
    const std::size_t last = cfg.burn_in + cfg.n_keep * cfg.thin;
    for (std::size_t n = 1; n <= last; ++n) {
      StepResult step;
      try {
        step = step_chain(model, current, stream);
      } catch (const Error& e) {
        throw SimulationError(fmt::format("chain {} step {}: {}", r, n, e.what()));
      }
      tau += step.dtau;
      current = std::move(step.state);
      if (n > cfg.burn_in && (n - cfg.burn_in) % cfg.thin == 0) {
        kept.push_back({current, AtomOrigin{r, static_cast<std::int64_t>(n), tau, step.theta}});
      }
    }
  });

  EmpiricalMeasure mu;
  const double w = 1.0 / static_cast<double>(cfg.n_traj * cfg.n_keep);
  for (auto& chain : per_chain) {
    for (auto& k : chain) mu.add(std::move(k.state), w, k.origin);
  }
  return mu;
}

}  // namespace pdmp
