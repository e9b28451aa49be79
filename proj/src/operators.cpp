#include "pdmp/operators.hpp"

#include <cmath>

#include <fmt/format.h>

#include "pdmp/parallel.hpp"
#include "pdmp/simulate.hpp"

namespace pdmp {

State sample_P(const PdmpModel& model, const State& x, RngStream& rng) {
  model.check_state(x);
  return step_chain(model, x, rng).state;
}

State sample_G(const PdmpModel& model, const State& x, RngStream& rng) {
  model.check_state(x);
  const double t = rng.exponential(model.lambda());
  return State{model.semiflow().eval(x.mode, t, x.y), x.mode};
}

State sample_W(const PdmpModel& model, const State& x, RngStream& rng) {
  model.check_state(x);
  const double theta = sample_theta(model, x.y, rng);
  State out{model.jumps().map(theta, x.y), x.mode};
  out.mode = sample_mode(model, x.mode, out.y, rng);
  return out;
}

const char* to_string(Operator op) {
  switch (op) {
    case Operator::P: return "P";
    case Operator::G: return "G";
    case Operator::W: return "W";
  }
  return "?";
}

Operator parse_operator(const std::string& name) {
  if (name == "P") return Operator::P;
  if (name == "G") return Operator::G;
  if (name == "W") return Operator::W;
  throw PreconditionError(fmt::format("unknown operator '{}' (expected P, G or W)", name));
}

EmpiricalMeasure pushforward(Operator op, const PdmpModel& model, const EmpiricalMeasure& mu,
                             const RngStream& rng, int workers) {
  if (!mu.is_normalized(1e-9)) throw PreconditionError("pushforward: measure must be normalized");
  std::vector<State> images(mu.size());
  parallel_for(mu.size(), workers, [&](std::size_t k) {
    RngStream stream = rng.split(k);
    const State& x = mu.atoms()[k];
    switch (op) {
      case Operator::P: images[k] = sample_P(model, x, stream); break;
      case Operator::G: images[k] = sample_G(model, x, stream); break;
      case Operator::W: images[k] = sample_W(model, x, stream); break;
    }
  });
  EmpiricalMeasure out;
  for (std::size_t k = 0; k < images.size(); ++k) {
    if (mu.has_origins()) {
      out.add(std::move(images[k]), mu.weights()[k], mu.origins()[k]);
    } else {
      out.add(std::move(images[k]), mu.weights()[k]);
    }
  }
  return out;
}

CorrespondenceReport check_correspondence(const PdmpModel& model, const EmpiricalMeasure& mu_hat,
                                          const RngStream& rng, const MetricConfig& cfg,
                                          std::size_t n_boot, int workers) {
  if (mu_hat.size() < 10) {
    throw PreconditionError(fmt::format(
        "check_correspondence needs at least 10 atoms (got {}); sample a larger measure", mu_hat.size()));
  }
  const auto g = pushforward(Operator::G, model, mu_hat, rng.split(0), workers);
  const auto wg = pushforward(Operator::W, model, g, rng.split(1), workers);
  CorrespondenceReport report;
  report.d_WG = fm_distance(cfg, wg, mu_hat);
  report.d_null = half_split_noise_floor(cfg, mu_hat, n_boot, rng.split(2));
  report.n_atoms = mu_hat.size();
  report.n_boot = n_boot;
  report.c = cfg.c;
  return report;
}

void PathSpec::validate(const PdmpModel& model) const {
  if (times.empty()) throw PreconditionError("path needs n >= 1 steps");
  if (modes.size() != times.size() || thetas.size() != times.size()) {
    throw PreconditionError(fmt::format("path lengths differ: {} modes, {} times, {} thetas", modes.size(),
                                        times.size(), thetas.size()));
  }
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (!(times[k] >= 0.0) || !std::isfinite(times[k])) {
      throw PreconditionError(fmt::format("path time t_{} must be finite and >= 0", k + 1));
    }
    if (!model.valid_mode(modes[k])) {
      throw PreconditionError(fmt::format("path mode j_{} = {} out of range 1..{}", k, modes[k], model.modes()));
    }
    if (!model.theta().contains(thetas[k])) {
      throw PreconditionError(fmt::format("path theta_{} = {} is not in Theta", k + 1, thetas[k]));
    }
  }
}

namespace {

struct PathTrace {
  std::vector<Vector> pre_jump;  // S_{j_{k-1}}(t_k, W_{k-1})
  std::vector<Vector> post_jump;  // W_k
};

PathTrace trace(const PdmpModel& model, const Vector& y, const PathSpec& path) {
  path.validate(model);
  if (y.size() != model.dim()) throw PreconditionError("path start has the wrong dimension");
  PathTrace out;
  Vector w = y;
  for (std::size_t k = 0; k < path.n(); ++k) {
    out.pre_jump.push_back(model.semiflow().eval(path.modes[k], path.times[k], w));
    w = model.jumps().map(path.thetas[k], out.pre_jump.back());
    out.post_jump.push_back(w);
  }
  return out;
}

}  // namespace

Vector compose_Wn(const PdmpModel& model, const Vector& y, const PathSpec& path) {
  return trace(model, y, path).post_jump.back();
}

double weight_Pi_n(const PdmpModel& model, const Vector& y, const PathSpec& path, int j_final) {
  if (!model.valid_mode(j_final)) {
    throw PreconditionError(fmt::format("terminal mode {} out of range 1..{}", j_final, model.modes()));
  }
  const auto tr = trace(model, y, path);
  double product = 1.0;
  for (std::size_t k = 0; k < path.n(); ++k) {
    const int next = k + 1 < path.n() ? path.modes[k + 1] : j_final;
    product *= model.switching().prob(path.modes[k], next, tr.post_jump[k]);
  }
  return product;
}

double weight_P_n(const PdmpModel& model, const Vector& y, const PathSpec& path) {
  const auto tr = trace(model, y, path);
  double product = 1.0;
  for (std::size_t k = 0; k < path.n(); ++k) product *= model.jumps().density(path.thetas[k], tr.pre_jump[k]);
  return product;
}

double weight_T_n(const PdmpModel& model, const Vector& y, const PathSpec& path, int j_final) {
  double total_time = 0.0;
  for (double t : path.times) total_time += t;
  const double lambda = model.lambda();
  const double n = static_cast<double>(path.n());
  return std::pow(lambda, n) * std::exp(-lambda * total_time) * weight_P_n(model, y, path) *
         weight_Pi_n(model, y, path, j_final);
}

}  // namespace pdmp
