#include "pdmp/diagnostics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/SVD>
#include <fmt/format.h>

#include "pdmp/parallel.hpp"
#include "pdmp/simulate.hpp"

namespace pdmp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool theta_interior(const ThetaSpace& theta, double value) {
  if (theta.is_finite()) return theta.contains(value);
  return value > theta.lo() && value < theta.hi();
}

bool is_builtin(const PdmpModel& model) {
  const auto names = builtin_model_names();
  return std::find(names.begin(), names.end(), model.family()) != names.end();
}

double param(const PdmpModel& model, const std::string& key) {
  const auto it = model.params().find(key);
  if (it == model.params().end()) throw PreconditionError(fmt::format("model has no parameter '{}'", key));
  return std::get<double>(it->second);
}

// Points of a regular grid with `per_dim` points per coordinate on centre +- halfwidth.
std::vector<Vector> box_grid(const Vector& centre, double halfwidth, int per_dim) {
  const auto d = static_cast<int>(centre.size());
  const int m = std::max(per_dim, 1);
  std::size_t count = 1;
  for (int k = 0; k < d; ++k) count *= static_cast<std::size_t>(m);
  std::vector<Vector> points;
  points.reserve(count);
  for (std::size_t idx = 0; idx < count; ++idx) {
    Vector p = centre;
    std::size_t rest = idx;
    for (int k = 0; k < d; ++k) {
      const auto q = static_cast<int>(rest % static_cast<std::size_t>(m));
      rest /= static_cast<std::size_t>(m);
      if (m > 1) p(k) += halfwidth * (2.0 * q / (m - 1) - 1.0);
    }
    points.push_back(std::move(p));
  }
  return points;
}

}  // namespace

Json to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(v(k));
  return out;
}

namespace {

Json path_json(const PathSpec& path) {
  return Json{{"modes", path.modes}, {"times", path.times}, {"thetas", path.thetas}};
}

}  // namespace

// --- report ------------------------------------------------------------------

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Fail: return "fail";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "?";
}

Verdict DiagnosticsReport::overall() const {
  bool inconclusive = false;
  for (const auto& c : checks) {
    if (c.verdict == Verdict::Fail) return Verdict::Fail;
    inconclusive |= c.verdict == Verdict::Inconclusive;
  }
  return inconclusive ? Verdict::Inconclusive : Verdict::Pass;
}

const CheckResult* DiagnosticsReport::find(const std::string& name) const {
  for (const auto& c : checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

Json DiagnosticsReport::to_json() const {
  Json out;
  out["overall"] = to_string(overall());
  Json list = Json::array();
  for (const auto& c : checks) {
    list.push_back(Json{{"name", c.name}, {"verdict", to_string(c.verdict)}, {"evidence", c.evidence},
                        {"params", c.params}});
  }
  out["checks"] = std::move(list);
  return out;
}

// --- rank and positivity -----------------------------------------------------

void RankProbe::validate(const PdmpModel& model) const {
  path.validate(model);
  if (y_hat.size() != model.dim()) {
    throw PreconditionError(fmt::format("rank probe: y_hat has dimension {}, model has {}", y_hat.size(), model.dim()));
  }
  if (!model.valid_mode(mode)) throw PreconditionError(fmt::format("rank probe: mode {} out of range", mode));
  if (path.modes.front() != mode) {
    throw PreconditionError(fmt::format("rank probe: path starts in mode {} but the anchor mode is {}",
                                        path.modes.front(), mode));
  }
  if (path.n() < static_cast<std::size_t>(model.dim())) {
    throw PreconditionError(fmt::format("rank probe: need n >= d (n = {}, d = {})", path.n(), model.dim()));
  }
  for (std::size_t k = 0; k < path.n(); ++k) {
    if (!(path.times[k] > 0.0)) throw PreconditionError(fmt::format("rank probe: t_{} must be > 0", k + 1));
    if (!theta_interior(model.theta(), path.thetas[k])) {
      throw PreconditionError(fmt::format("rank probe: theta_{} = {} is not interior to Theta", k + 1, path.thetas[k]));
    }
  }
  if (!(fd_step >= 0.0) || !(svd_rtol > 0.0)) throw PreconditionError("rank probe: fd_step >= 0 and svd_rtol > 0 required");
}

namespace {

std::optional<Eigen::MatrixXd> analytic_jacobian(const PdmpModel& model, const RankProbe& probe) {
  const auto& path = probe.path;
  const auto d = model.dim();
  const auto n = static_cast<Eigen::Index>(path.n());
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(d, n);
  Vector w = probe.y_hat;
  for (Eigen::Index k = 0; k < n; ++k) {
    const int mode = path.modes[k];
    const double t = path.times[k];
    const double theta = path.thetas[k];
    const auto flow_jac = model.semiflow().jacobian(mode, t, w);
    const auto velocity = model.semiflow().velocity(mode, t, w);
    const Vector z = model.semiflow().eval(mode, t, w);
    const auto jump_jac = model.jumps().jacobian(theta, z);
    if (!flow_jac || !velocity || !jump_jac) return std::nullopt;
    // Earlier columns propagate through this step; column k is new.
    const Eigen::MatrixXd step = (*jump_jac) * (*flow_jac);
    if (k > 0) J.leftCols(k) = step * J.leftCols(k);
    J.col(k) = (*jump_jac) * (*velocity);
    w = model.jumps().map(theta, z);
  }
  return J;
}

}  // namespace

JacobianResult jacobian_t_Wn(const PdmpModel& model, const RankProbe& probe, JacobianMethod method) {
  probe.validate(model);
  JacobianResult out;
  if (method != JacobianMethod::FiniteDifference) {
    if (auto J = analytic_jacobian(model, probe)) {
      out.matrix = std::move(*J);
      out.method = JacobianMethod::Analytic;
      return out;
    }
    if (method == JacobianMethod::Analytic) {
      throw PreconditionError("analytic Jacobian requested but the model lacks velocity or Jacobian hooks");
    }
  }
  out.method = JacobianMethod::FiniteDifference;
  const auto n = static_cast<Eigen::Index>(probe.path.n());
  out.matrix = Eigen::MatrixXd::Zero(model.dim(), n);
  out.min_step = kInf;
  PathSpec shifted = probe.path;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double t = probe.path.times[k];
    double h = probe.fd_step > 0.0 ? probe.fd_step : std::max(1e-6, 1e-6 * std::abs(t));
    if (t - h < 0.0) h = 0.5 * t;
    if (h < 1e-12) out.step_too_small = true;
    out.min_step = std::min(out.min_step, h);
    shifted.times[k] = t + h;
    const Vector plus = compose_Wn(model, probe.y_hat, shifted);
    shifted.times[k] = t - h;
    const Vector minus = compose_Wn(model, probe.y_hat, shifted);
    shifted.times[k] = t;
    out.matrix.col(k) = (plus - minus) / (2.0 * h);
  }
  return out;
}

RankReport check_rank(const PdmpModel& model, const RankProbe& probe, JacobianMethod method) {
  RankReport report;
  report.jacobian = jacobian_t_Wn(model, probe, method);
  const auto& J = report.jacobian.matrix;
  if (!J.allFinite()) throw Error("check_rank: the time-Jacobian has non-finite entries");
  report.dim = model.dim();
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
  const auto& sigma = svd.singularValues();
  report.singular_values.assign(sigma.data(), sigma.data() + sigma.size());
  const double top = sigma.size() > 0 ? sigma(0) : 0.0;
  for (Eigen::Index k = 0; k < sigma.size(); ++k) {
    if (top > 0.0 && sigma(k) > probe.svd_rtol * top) ++report.rank;
  }
  report.pass = report.rank == report.dim;
  return report;
}

PositivityReport check_positivity(const PdmpModel& model, const RankProbe& probe) {
  probe.validate(model);
  PositivityReport report;
  const double p_n = weight_P_n(model, probe.y_hat, probe.path);
  for (int j = 1; j <= model.modes(); ++j) {
    report.per_mode.push_back(p_n * weight_Pi_n(model, probe.y_hat, probe.path, j));
  }
  report.min_over_j = *std::min_element(report.per_mode.begin(), report.per_mode.end());
  report.pass = report.min_over_j > 0.0;
  return report;
}

// --- anchors -----------------------------------------------------------------

namespace {

// Largest observed ratio |w(u) - w(v)| / |u - v| over the sample points.
double lipschitz_estimate(const PdmpModel& model, double theta, const std::vector<Vector>& points) {
  double factor = 0.0;
  for (std::size_t a = 0; a < points.size(); ++a) {
    const Vector wa = model.jumps().map(theta, points[a]);
    for (std::size_t b = a + 1; b < points.size(); ++b) {
      const double dist = (points[a] - points[b]).norm();
      if (dist == 0.0) continue;
      factor = std::max(factor, (wa - model.jumps().map(theta, points[b])).norm() / dist);
    }
  }
  return factor;
}

bool density_positive(const PdmpModel& model, double theta, const std::vector<Vector>& points) {
  return std::all_of(points.begin(), points.end(),
                     [&](const Vector& y) { return model.jumps().density(theta, y) > 0.0; });
}

// Modes i reachable with positive switching probability from every mode,
// checked at each sample point (n steps of the switching graph, n <= N).
std::vector<int> reachable_modes(const PdmpModel& model, const std::vector<Vector>& points) {
  const int N = model.modes();
  std::vector<int> out;
  for (int i = 1; i <= N; ++i) {
    bool ok = true;
    for (const auto& y : points) {
      for (int j0 = 1; j0 <= N && ok; ++j0) {
        std::vector<bool> seen(static_cast<std::size_t>(N) + 1, false);
        std::vector<int> frontier{j0};
        bool hit = false;
        for (int step = 0; step < N && !hit; ++step) {
          std::vector<int> next;
          for (int from : frontier) {
            for (int to = 1; to <= N; ++to) {
              if (model.switching().prob(from, to, y) > 0.0 && !seen[to]) {
                seen[to] = true;
                next.push_back(to);
              }
            }
          }
          hit = seen[i];
          frontier = std::move(next);
        }
        ok = hit;
      }
      if (!ok) break;
    }
    if (ok) out.push_back(i);
  }
  return out;
}

// Modes i with pi_jk(y) pi_ki(y) > 0 for every j, at every sample point.
std::vector<int> two_step_modes(const PdmpModel& model, int k, const std::vector<Vector>& points) {
  std::vector<int> out;
  for (int i = 1; i <= model.modes(); ++i) {
    bool ok = true;
    for (const auto& y : points) {
      for (int j = 1; j <= model.modes() && ok; ++j) {
        ok = model.switching().prob(j, k, y) * model.switching().prob(k, i, y) > 0.0;
      }
      if (!ok) break;
    }
    if (ok) out.push_back(i);
  }
  return out;
}

}  // namespace

std::vector<AnchorCandidate> suggest_anchors(const PdmpModel& model, const AnchorSearch& cfg) {
  const Vector origin = Vector::Zero(model.dim());
  const auto starts = box_grid(origin, cfg.radius, cfg.starts_per_dim);
  const auto thetas = model.theta().grid(cfg.theta_points);
  std::vector<AnchorCandidate> out;

  auto push_unique = [&](AnchorCandidate c) {
    for (const auto& e : out) {
      if (e.mode == c.mode && e.provenance == c.provenance && (e.y_hat - c.y_hat).norm() < 1e-8) return;
    }
    out.push_back(std::move(c));
  };

  // Contracting jump maps with a fixed point.
  for (double theta : thetas) {
    auto sample = starts;
    const double factor = lipschitz_estimate(model, theta, sample);
    if (!(factor < 1.0)) continue;
    Vector z = origin;
    for (int it = 0; it < cfg.iterations; ++it) z = model.jumps().map(theta, z);
    if (!z.allFinite() || (model.jumps().map(theta, z) - z).norm() >= cfg.tol) continue;
    std::vector<Vector> image;
    for (const auto& y : sample) image.push_back(model.jumps().map(theta, y));
    image.push_back(z);
    sample.push_back(z);
    if (!density_positive(model, theta, sample)) continue;
    for (int i : reachable_modes(model, image)) {
      push_unique({.y_hat = z, .mode = i, .provenance = "contraction-fixed-point", .theta = theta, .flow_mode = 0,
                   .z = z, .contraction = factor});
    }
  }

  // Flow equilibria z = S_k(t, z), followed by one jump.
  const std::vector<double> t_check{0.1, 0.5, 1.0, 2.0, 5.0, 10.0};
  for (int k = 1; k <= model.modes(); ++k) {
    std::vector<Vector> equilibria;
    for (const auto& start : starts) {
      Vector z = start;
      for (int it = 0; it < cfg.iterations; ++it) z = model.semiflow().eval(k, 1.0, z);
      if (!z.allFinite()) continue;
      double deviation = 0.0;
      for (double t : t_check) deviation = std::max(deviation, (model.semiflow().eval(k, t, z) - z).norm());
      if (deviation >= cfg.tol) continue;
      const bool known = std::any_of(equilibria.begin(), equilibria.end(),
                                     [&](const Vector& e) { return (e - z).norm() < 1e-8; });
      if (!known) equilibria.push_back(z);
    }
    for (const auto& z : equilibria) {
      for (double theta : thetas) {
        auto sample = starts;
        sample.push_back(z);
        const double factor = lipschitz_estimate(model, theta, sample);
        if (!std::isfinite(factor) || !density_positive(model, theta, sample)) continue;
        std::vector<Vector> image;
        for (const auto& y : sample) image.push_back(model.jumps().map(theta, y));
        const Vector y_hat = model.jumps().map(theta, z);
        for (int i : two_step_modes(model, k, image)) {
          push_unique({.y_hat = y_hat, .mode = i, .provenance = "flow-equilibrium", .theta = theta, .flow_mode = k,
                       .z = z, .contraction = factor});
        }
      }
    }
  }
  return out;
}

// --- accessibility -------------------------------------------------------------

namespace {

struct Candidate {
  PathSpec path;
  double distance = kInf;
  double weight = 0.0;
};

// Orders candidates: positive weight first, then by distance.
bool better(const Candidate& a, const Candidate& b) {
  const bool pa = a.weight > 0.0;
  const bool pb = b.weight > 0.0;
  if (pa != pb) return pa;
  return a.distance < b.distance;
}

void evaluate(const PdmpModel& model, const Vector& y, const Vector& y_hat, int mode, Candidate& c) {
  c.distance = (compose_Wn(model, y, c.path) - y_hat).norm();
  if (!std::isfinite(c.distance)) c.distance = kInf;
  c.weight = weight_P_n(model, y, c.path) * weight_Pi_n(model, y, c.path, mode);
}

}  // namespace

AccessibilityReport probe_accessibility(const PdmpModel& model, const Vector& y_hat, int mode, double radius,
                                        const std::vector<State>& starts, const AccessibilitySearch& cfg,
                                        const RngStream& rng) {
  if (!(radius > 0.0)) throw PreconditionError("probe_accessibility: radius must be > 0");
  if (starts.empty()) throw PreconditionError("probe_accessibility: starts must be non-empty");
  if (y_hat.size() != model.dim()) throw PreconditionError("probe_accessibility: y_hat has the wrong dimension");
  if (!model.valid_mode(mode)) throw PreconditionError(fmt::format("probe_accessibility: mode {} out of range", mode));
  if (cfg.n_max < 1 || cfg.attempts_per_n < 1 || !(cfg.t_max > 0.0)) {
    throw PreconditionError("probe_accessibility: n_max, attempts_per_n and t_max must be positive");
  }
  for (const auto& s : starts) model.check_state(s);

  const auto thetas = model.theta().grid(cfg.theta_points);
  AccessibilityReport report;
  report.y_hat = y_hat;
  report.mode = mode;
  report.radius = radius;
  report.per_start.resize(starts.size());

  parallel_for(starts.size(), 1, [&](std::size_t s) {
    RngStream stream = rng.split(s);
    const State& start = starts[s];
    Candidate best;
    int best_n = 0;
    bool reached = false;
    auto consider = [&](Candidate& c, int n) {
      evaluate(model, start.y, y_hat, mode, c);
      if (better(c, best) || best_n == 0) {
        best = c;
        best_n = n;
      }
      return c.weight > 0.0 && c.distance < radius;
    };

    for (int n = 1; n <= cfg.n_max && !reached; ++n) {
      const auto un = static_cast<std::size_t>(n);
      std::vector<Candidate> pool;
      for (int a = 0; a < cfg.attempts_per_n && !reached; ++a) {
        Candidate c;
        c.path.modes.resize(un);
        c.path.times.resize(un);
        c.path.thetas.resize(un);
        c.path.modes[0] = start.mode;
        for (std::size_t k = 1; k < un; ++k) c.path.modes[k] = 1 + static_cast<int>(stream.below(model.modes()));
        for (std::size_t k = 0; k < un; ++k) {
          c.path.thetas[k] = thetas[stream.below(thetas.size())];
          if (a == 0) {
            c.path.times[k] = cfg.t_max;  // pure dwell at the longest time
          } else {
            const auto pick = stream.below(3);
            c.path.times[k] = pick == 0 ? 0.0 : pick == 1 ? cfg.t_max : cfg.t_max * stream.uniform();
          }
        }
        reached = consider(c, n);
        pool.push_back(std::move(c));
      }
      if (reached) break;

      // Coordinate descent on the times of the most promising attempts.
      std::stable_sort(pool.begin(), pool.end(), better);
      const auto n_refine = std::min(pool.size(), static_cast<std::size_t>(std::max(cfg.refine, 0)));
      for (std::size_t r = 0; r < n_refine && !reached; ++r) {
        Candidate c = pool[r];
        if (!(c.weight > 0.0)) break;
        double step = 0.25 * cfg.t_max;
        for (int sweep = 0; sweep < cfg.descent_sweeps && !reached; ++sweep) {
          for (std::size_t k = 0; k < un && !reached; ++k) {
            for (double delta : {-step, step}) {
              Candidate trial = c;
              trial.path.times[k] = std::clamp(c.path.times[k] + delta, 0.0, cfg.t_max);
              reached = consider(trial, n);
              if (better(trial, c)) c = trial;
              if (reached) break;
            }
          }
          step *= 0.5;
        }
      }
    }

    auto& out = report.per_start[s];
    out.start = start;
    out.reached = reached;
    out.n = best_n;
    out.path = best.path;
    out.distance = best.distance;
    out.weight = best.weight;
  });

  report.all_reached = std::all_of(report.per_start.begin(), report.per_start.end(),
                                   [](const AccessAttempt& a) { return a.reached; });
  return report;
}

// --- small sets ----------------------------------------------------------------

SmallSetReport estimate_small_set(const PdmpModel& model, const Vector& y_hat, int mode, int n, std::size_t n_mc,
                                  const RngStream& rng, const SmallSetConfig& cfg) {
  if (n < 1) throw PreconditionError("estimate_small_set: n must be >= 1");
  if (n_mc < 1000) {
    throw PreconditionError(fmt::format("estimate_small_set: n_mc must be >= 1000 (got {})", n_mc));
  }
  if (cfg.bins < 1 || cfg.window < 1 || cfg.window > cfg.bins || !(cfg.u_halfwidth >= 0.0)) {
    throw PreconditionError("estimate_small_set: need 1 <= window <= bins and u_halfwidth >= 0");
  }
  model.check_state(State{y_hat, mode});
  const int d = model.dim();
  std::size_t cells = 1;
  for (int k = 0; k < d; ++k) {
    cells *= static_cast<std::size_t>(cfg.bins);
    if (cells > 10'000'000) throw PreconditionError("estimate_small_set: bins^d exceeds 1e7 cells; use fewer bins");
  }

  const auto starts = box_grid(y_hat, cfg.u_halfwidth, cfg.starts_per_dim);
  std::vector<std::vector<State>> draws(starts.size());
  parallel_for(starts.size(), cfg.workers, [&](std::size_t s) {
    RngStream stream = rng.split(s);
    draws[s].reserve(n_mc);
    for (std::size_t r = 0; r < n_mc; ++r) {
      State x{starts[s], mode};
      for (int step = 0; step < n; ++step) x = step_chain(model, x, stream).state;
      draws[s].push_back(std::move(x));
    }
  });

  SmallSetReport report;
  report.n = n;
  report.n_mc = n_mc;
  report.n_starts = starts.size();
  Vector lo = Vector::Constant(d, kInf);
  Vector hi = Vector::Constant(d, -kInf);
  for (const auto& batch : draws) {
    for (const auto& x : batch) {
      lo = lo.cwiseMin(x.y);
      hi = hi.cwiseMax(x.y);
    }
  }
  report.v_lo = lo;
  report.v_hi = lo;
  Vector width(d);
  double volume = 1.0;
  for (int k = 0; k < d; ++k) {
    width(k) = (hi(k) - lo(k)) / cfg.bins;
    volume *= width(k);
  }
  // A degenerate cloud (all draws on a lower-dimensional set) has no density.
  if (!(volume > 0.0) || !std::isfinite(volume)) return report;

  auto cell_of = [&](const Vector& y) {
    std::size_t idx = 0;
    for (int k = d - 1; k >= 0; --k) {
      auto b = static_cast<int>((y(k) - lo(k)) / width(k));
      b = std::clamp(b, 0, cfg.bins - 1);
      idx = idx * static_cast<std::size_t>(cfg.bins) + static_cast<std::size_t>(b);
    }
    return idx;
  };

  std::vector<double> floor(cells, kInf);
  std::vector<std::size_t> counts(cells);
  for (const auto& batch : draws) {
    for (int j = 1; j <= model.modes(); ++j) {
      std::fill(counts.begin(), counts.end(), 0);
      for (const auto& x : batch) {
        if (x.mode == j) ++counts[cell_of(x.y)];
      }
      for (std::size_t c = 0; c < cells; ++c) {
        floor[c] = std::min(floor[c], static_cast<double>(counts[c]) / (static_cast<double>(n_mc) * volume));
      }
    }
  }

  // Best window: maximize the minimum floor over window^d adjacent cells.
  const int span = cfg.bins - cfg.window + 1;
  std::size_t n_windows = 1;
  for (int k = 0; k < d; ++k) n_windows *= static_cast<std::size_t>(span);
  double best = 0.0;
  std::vector<int> best_corner(static_cast<std::size_t>(d), 0);
  std::vector<int> corner(static_cast<std::size_t>(d));
  std::vector<int> offset(static_cast<std::size_t>(d));
  std::size_t window_cells = 1;
  for (int k = 0; k < d; ++k) window_cells *= static_cast<std::size_t>(cfg.window);
  for (std::size_t w = 0; w < n_windows; ++w) {
    std::size_t rest = w;
    for (int k = 0; k < d; ++k) {
      corner[k] = static_cast<int>(rest % static_cast<std::size_t>(span));
      rest /= static_cast<std::size_t>(span);
    }
    double m = kInf;
    for (std::size_t q = 0; q < window_cells && m > best; ++q) {
      std::size_t r = q;
      std::size_t idx = 0;
      for (int k = 0; k < d; ++k) {
        offset[k] = static_cast<int>(r % static_cast<std::size_t>(cfg.window));
        r /= static_cast<std::size_t>(cfg.window);
      }
      for (int k = d - 1; k >= 0; --k) idx = idx * static_cast<std::size_t>(cfg.bins) + (corner[k] + offset[k]);
      m = std::min(m, floor[idx]);
    }
    if (m > best) {
      best = m;
      best_corner = corner;
    }
  }
  report.c_bar = best;
  if (best > 0.0) {
    for (int k = 0; k < d; ++k) {
      report.v_lo(k) = lo(k) + best_corner[k] * width(k);
      report.v_hi(k) = lo(k) + (best_corner[k] + cfg.window) * width(k);
    }
    report.verdict = Verdict::Pass;
  }
  return report;
}

// --- hypothesis checks -------------------------------------------------------

HypothesisConstants builtin_constants(const PdmpModel& model) {
  HypothesisConstants c;
  c.y_star = Vector::Zero(model.dim());
  c.L = 1.0;
  c.L_w = 1.0;
  c.L_p = 1.0;
  c.L_func = [](const Vector&) { return 1.0; };
  const std::string& family = model.family();
  if (family == "dirac-trap") {
    c.alpha = -1.0;
    c.c_pi = 1.0;
    c.c_p = 1.0;
    c.phi = [](double) { return 0.0; };
  } else if (family == "contracting-lines") {
    const double alpha = param(model, "alpha");
    const double a = param(model, "a");
    const double stay = param(model, "pi_stay");
    c.alpha = alpha;
    // Degenerate switching has no positive overlap constant; the nominal
    // value of the family is declared so that the overlap check reports it.
    const double overlap = 2.0 * std::min(stay, 1.0 - stay);
    c.c_pi = overlap > 0.0 ? overlap : 1.0;
    c.c_p = 1.0 - std::abs(param(model, "tilt"));
    c.phi = [alpha, a](double t) { return std::abs(a) * (1.0 - std::exp(alpha * t)); };
  } else if (family == "planar-rotor") {
    const double stay = param(model, "pi_stay");
    c.alpha = -param(model, "kappa");
    const double overlap = 2.0 * std::min(stay, 1.0 - stay);
    c.c_pi = overlap > 0.0 ? overlap : 1.0;
    c.c_p = 1.0;
    c.phi = [](double) { return 1.0; };
    c.L_func = [](const Vector& u) { return 4.0 + 2.0 * u.norm(); };
  } else {
    throw PreconditionError(fmt::format("no built-in constants for model '{}'", family));
  }
  return c;
}

namespace {

struct Violation {
  std::size_t count = 0;
  double worst = 0.0;  // largest excess over the bound
  Json witness;
};

void record(Violation& v, double excess, double margin, const std::function<Json()>& witness) {
  if (!(excess > margin) && std::isfinite(excess)) return;
  ++v.count;
  if (v.count == 1 || excess > v.worst || !std::isfinite(excess)) {
    v.worst = excess;
    v.witness = witness();
  }
}

void merge(Violation& into, const Violation& from) {
  if (from.count == 0) return;
  if (into.count == 0 || from.worst > into.worst) {
    into.worst = from.worst;
    into.witness = from.witness;
  }
  into.count += from.count;
}

enum Falsifier { kFlowLipschitz, kFlowSpread, kJumpLipschitz, kDensityLipschitz, kOverlap, kFalsifiers };

const char* falsifier_name(int f) {
  switch (f) {
    case kFlowLipschitz: return "flow-lipschitz";
    case kFlowSpread: return "flow-spread";
    case kJumpLipschitz: return "jump-lipschitz";
    case kDensityLipschitz: return "density-lipschitz";
    case kOverlap: return "overlap";
  }
  return "?";
}

const char* falsifier_bound(int f) {
  switch (f) {
    case kFlowLipschitz: return "|S_i(t,u) - S_i(t,v)| <= L exp(alpha t) |u - v|";
    case kFlowSpread: return "|S_i(t,u) - S_j(t,u)| <= phi(t) Lfunc(u)";
    case kJumpLipschitz: return "int |w(u) - w(v)| p(u) <= L_w |u - v|";
    case kDensityLipschitz: return "int |p(u) - p(v)| <= L_p |u - v|";
    case kOverlap: return "sum_k min(pi_ik, pi_jk) >= c_pi and int_Theta(u,v) min(p(u), p(v)) >= c_p";
  }
  return "";
}

Vector draw_point(const PdmpModel& model, double radius, RngStream& rng) {
  const auto& space = model.space();
  Vector y(model.dim());
  for (int k = 0; k < model.dim(); ++k) {
    double lo = -radius;
    double hi = radius;
    if (space.bounded()) {
      lo = std::max(lo, space.lo()(k));
      hi = std::min(hi, space.hi()(k));
      if (hi < lo) lo = hi = space.lo()(k);
    }
    y(k) = lo + (hi - lo) * rng.uniform();
  }
  return y;
}

CheckResult jump_moment_check(const PdmpModel& model, const HypothesisConstants& c, const HypothesisConfig& cfg,
                              const RngStream& rng) {
  CheckResult out;
  out.name = "jump-moment";
  if (!is_builtin(model)) {
    out.verdict = Verdict::Inconclusive;
    out.evidence = Json{{"status", "declared by author"}};
    return out;
  }
  // Quadrature of int_Theta int_0^T e^{-lambda t} |w(S_i(t, y*)) - y*| p(S_i(t, y)) dt over
  // sampled y; T = 40 / lambda leaves a tail below e^{-40} times the moment growth.
  const double lambda = model.lambda();
  const double T = 40.0 / lambda;
  const int nt = 2001;
  const double h = T / (nt - 1);
  const auto nodes = model.theta().quadrature(cfg.theta_nodes);
  const Vector& y_star = *c.y_star;
  RngStream stream = rng;
  std::vector<Vector> ys{y_star};
  for (int k = 0; k < 64; ++k) ys.push_back(draw_point(model, cfg.sample_radius, stream));

  double sup = 0.0;
  double tail_ratio = 0.0;
  for (int i = 1; i <= model.modes(); ++i) {
    for (const auto& y : ys) {
      double total = 0.0;
      double tail = 0.0;
      for (int q = 0; q < nt; ++q) {
        const double t = q * h;
        const double simpson = (q == 0 || q == nt - 1) ? 1.0 : (q % 2 == 1 ? 4.0 : 2.0);
        const Vector s_star = model.semiflow().eval(i, t, y_star);
        const Vector s_y = model.semiflow().eval(i, t, y);
        double inner = 0.0;
        for (const auto& [theta, wq] : nodes) {
          inner += wq * (model.jumps().map(theta, s_star) - y_star).norm() * model.jumps().density(theta, s_y);
        }
        const double term = simpson * h / 3.0 * std::exp(-lambda * t) * inner;
        total += term;
        if (t >= 0.5 * T) tail += term;
      }
      sup = std::max(sup, total);
      if (total > 0.0) tail_ratio = std::max(tail_ratio, tail / total);
    }
  }
  const bool ok = std::isfinite(sup) && tail_ratio < 1e-6;
  out.verdict = ok ? Verdict::Pass : Verdict::Fail;
  out.evidence = Json{{"sup_estimate", sup}, {"tail_ratio", tail_ratio}, {"samples", ys.size()},
                      {"condition", "compact Theta with a common Lipschitz constant for all w_theta"}};
  out.params = Json{{"t_max", T}, {"t_nodes", nt}, {"theta_nodes", nodes.size()}};
  return out;
}

}  // namespace

DiagnosticsReport check_hypotheses(const PdmpModel& model, const HypothesisConstants& c, std::size_t n_pairs,
                                   const RngStream& rng, const HypothesisConfig& cfg) {
  std::vector<std::string> missing;
  if (!c.alpha) missing.push_back("alpha");
  if (!c.L) missing.push_back("L");
  if (!c.L_w) missing.push_back("L_w");
  if (!c.L_p) missing.push_back("L_p");
  if (!c.c_pi) missing.push_back("c_pi");
  if (!c.c_p) missing.push_back("c_p");
  if (!c.y_star) missing.push_back("y_star");
  if (!c.phi) missing.push_back("phi");
  if (!c.L_func) missing.push_back("L_func");
  if (!missing.empty()) {
    throw PreconditionError(fmt::format("check_hypotheses: missing constants: {}", fmt::join(missing, ", ")));
  }
  for (const auto& [name, value] : {std::pair{"L", *c.L}, std::pair{"L_w", *c.L_w}, std::pair{"L_p", *c.L_p},
                                    std::pair{"c_pi", *c.c_pi}, std::pair{"c_p", *c.c_p}}) {
    if (!(value > 0.0) || !std::isfinite(value)) {
      throw PreconditionError(fmt::format("check_hypotheses: constant {} must be > 0 (got {})", name, value));
    }
  }
  if (!std::isfinite(*c.alpha)) throw PreconditionError("check_hypotheses: alpha must be finite");
  if (c.y_star->size() != model.dim()) throw PreconditionError("check_hypotheses: y_star has the wrong dimension");
  if (n_pairs < 1) throw PreconditionError("check_hypotheses: n_pairs must be >= 1");

  const Json constants{{"alpha", *c.alpha}, {"L", *c.L},       {"L_w", *c.L_w},          {"L_p", *c.L_p},
                       {"c_pi", *c.c_pi},   {"c_p", *c.c_p},   {"y_star", to_json(*c.y_star)}};
  DiagnosticsReport report;

  {
    CheckResult balance;
    balance.name = "contraction-balance";
    const double value = *c.L * *c.L_w + *c.alpha / model.lambda();
    balance.verdict = value < 1.0 ? Verdict::Pass : Verdict::Fail;
    balance.evidence = Json{{"value", value}, {"bound", 1.0}, {"formula", "L L_w + alpha / lambda < 1"}};
    balance.params = Json{{"L", *c.L}, {"L_w", *c.L_w}, {"alpha", *c.alpha}, {"lambda", model.lambda()}};
    report.add(std::move(balance));
  }

  const auto nodes = model.theta().quadrature(cfg.theta_nodes);
  const int N = model.modes();
  constexpr std::size_t kBlock = 4096;
  const std::size_t n_blocks = (n_pairs + kBlock - 1) / kBlock;
  std::vector<std::array<Violation, kFalsifiers>> found(n_blocks);

  parallel_for(n_blocks, cfg.workers, [&](std::size_t b) {
    RngStream stream = rng.split(b);
    auto& v = found[b];
    const std::size_t end = std::min(n_pairs, (b + 1) * kBlock);
    for (std::size_t draw = b * kBlock; draw < end; ++draw) {
      const Vector u = draw_point(model, cfg.sample_radius, stream);
      Vector w;
      if (draw % 2 == 0) {
        w = draw_point(model, cfg.sample_radius, stream);
      } else {
        w = u;
        const double scale = std::pow(10.0, -6.0 * stream.uniform());
        for (int k = 0; k < model.dim(); ++k) w(k) += scale * stream.normal();
        if (model.space().bounded()) w = w.cwiseMax(model.space().lo()).cwiseMin(model.space().hi());
      }
      const double t = cfg.t_max * stream.uniform();
      const int i = 1 + static_cast<int>(stream.below(N));
      const int j = 1 + static_cast<int>(stream.below(N));
      const double dist = (u - w).norm();
      auto witness = [&] {
        return Json{{"u", to_json(u)}, {"v", to_json(w)}, {"i", i}, {"j", j}, {"t", t}};
      };

      const double lip = (model.semiflow().eval(i, t, u) - model.semiflow().eval(i, t, w)).norm() -
                         *c.L * std::exp(*c.alpha * t) * dist;
      record(v[kFlowLipschitz], lip, cfg.margin, witness);

      const double spread = (model.semiflow().eval(i, t, u) - model.semiflow().eval(j, t, u)).norm() -
                            c.phi(t) * c.L_func(u);
      record(v[kFlowSpread], spread, cfg.margin, witness);

      double jump = 0.0;
      double dens = 0.0;
      double common = 0.0;
      for (const auto& [theta, wq] : nodes) {
        const double pu = model.jumps().density(theta, u);
        const double pv = model.jumps().density(theta, w);
        const double moved = (model.jumps().map(theta, u) - model.jumps().map(theta, w)).norm();
        jump += wq * moved * pu;
        dens += wq * std::abs(pu - pv);
        if (moved <= *c.L_w * dist + cfg.margin) common += wq * std::min(pu, pv);
      }
      record(v[kJumpLipschitz], jump - *c.L_w * dist, cfg.margin, witness);
      record(v[kDensityLipschitz], dens - *c.L_p * dist, cfg.margin, witness);

      double overlap = kInf;
      for (int a = 1; a <= N; ++a) {
        for (int bb = a + 1; bb <= N; ++bb) {
          double sum = 0.0;
          for (int k = 1; k <= N; ++k) {
            sum += std::min(model.switching().prob(a, k, u), model.switching().prob(bb, k, u));
          }
          overlap = std::min(overlap, sum);
        }
      }
      if (N == 1) overlap = 1.0;
      const double deficit = std::max(*c.c_pi - overlap, *c.c_p - common);
      record(v[kOverlap], deficit, cfg.margin, witness);
    }
  });

  std::array<Violation, kFalsifiers> total;
  for (const auto& block : found) {
    for (int f = 0; f < kFalsifiers; ++f) merge(total[f], block[f]);
  }
  for (int f = 0; f < kFalsifiers; ++f) {
    if (f == kDensityLipschitz) report.add(jump_moment_check(model, c, cfg, rng.split(n_blocks)));
    CheckResult check;
    check.name = falsifier_name(f);
    check.verdict = total[f].count == 0 ? Verdict::Pass : Verdict::Fail;
    check.evidence = Json{{"draws", n_pairs}, {"violations", total[f].count}, {"worst_excess", total[f].worst},
                          {"bound", falsifier_bound(f)}};
    if (total[f].count > 0) check.evidence["witness"] = total[f].witness;
    check.params = Json{{"margin", cfg.margin}, {"sample_radius", cfg.sample_radius}, {"t_max", cfg.t_max},
                        {"theta_nodes", nodes.size()}, {"constants", constants}};
    report.add(std::move(check));
  }
  return report;
}

// --- continuity classification ---------------------------------------------

namespace {

struct DisjointSets {
  std::vector<std::size_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

ContinuityReport classify_continuity(const EmpiricalMeasure& mu, double atom_eps, const GridConfig& grid) {
  if (mu.empty()) throw PreconditionError("classify_continuity: measure is empty");
  mu.validate();
  if (!mu.is_normalized(1e-9)) throw PreconditionError("classify_continuity: measure is not normalized");
  if (grid.bins < 1) throw PreconditionError("classify_continuity: bins must be >= 1");

  const auto& atoms = mu.atoms();
  const auto& weights = mu.weights();
  ContinuityReport report;
  double scale = 1.0;
  for (const auto& x : atoms) scale = std::max(scale, x.y.cwiseAbs().maxCoeff());
  report.atom_eps = atom_eps > 0.0 ? atom_eps : 1e-9 * scale;
  const double eps = report.atom_eps;

  // Sort by (mode, first coordinate, ...) and link neighbours within eps.
  std::vector<std::size_t> order(atoms.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (atoms[a].mode != atoms[b].mode) return atoms[a].mode < atoms[b].mode;
    for (Eigen::Index k = 0; k < atoms[a].y.size(); ++k) {
      if (atoms[a].y(k) != atoms[b].y(k)) return atoms[a].y(k) < atoms[b].y(k);
    }
    return false;
  });
  DisjointSets sets(atoms.size());
  for (std::size_t p = 0; p < order.size(); ++p) {
    const State& x = atoms[order[p]];
    for (std::size_t q = p + 1; q < order.size(); ++q) {
      const State& z = atoms[order[q]];
      if (z.mode != x.mode || z.y(0) - x.y(0) > eps) break;
      if (z == x) {
        sets.unite(order[p], order[q]);
        break;  // later duplicates are linked through q
      }
      if ((z.y - x.y).norm() <= eps) sets.unite(order[p], order[q]);
    }
  }

  std::vector<double> mass(atoms.size(), 0.0);
  std::vector<Vector> centre(atoms.size());
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    const auto root = sets.find(k);
    if (mass[root] == 0.0) centre[root] = Vector::Zero(atoms[k].y.size());
    mass[root] += weights[k];
    centre[root] += weights[k] * atoms[k].y;
  }
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    if (sets.find(k) != k || !(mass[k] > 0.01)) continue;
    report.atom_fraction += mass[k];
    report.atoms.emplace_back(State{centre[k] / mass[k], atoms[k].mode}, mass[k]);
  }
  std::stable_sort(report.atoms.begin(), report.atoms.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  report.verdict = report.atom_fraction > 0.5 ? "atomic-singular" : report.atom_fraction < 0.01 ? "diffuse" : "mixed";

  double lo = kInf;
  double hi = -kInf;
  int max_mode = 1;
  for (const auto& x : atoms) {
    lo = std::min(lo, x.y(0));
    hi = std::max(hi, x.y(0));
    max_mode = std::max(max_mode, x.mode);
  }
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double width = (hi - lo) / grid.bins;
  std::vector<double> hist(static_cast<std::size_t>(max_mode) * grid.bins, 0.0);
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    const int b = std::clamp(static_cast<int>((atoms[k].y(0) - lo) / width), 0, grid.bins - 1);
    hist[static_cast<std::size_t>(atoms[k].mode - 1) * grid.bins + b] += weights[k];
  }
  for (int m = 1; m <= max_mode; ++m) {
    for (int b = 0; b < grid.bins; ++b) {
      report.histogram.push_back({m, lo + b * width, b + 1 == grid.bins ? hi : lo + (b + 1) * width,
                                  hist[static_cast<std::size_t>(m - 1) * grid.bins + b]});
    }
  }
  return report;
}

// --- report entries ------------------------------------------------------------

CheckResult to_check(const RankProbe& probe, const RankReport& report) {
  CheckResult out;
  out.name = "rank";
  out.verdict = report.pass ? Verdict::Pass : Verdict::Fail;
  Json jac = Json::array();
  for (Eigen::Index r = 0; r < report.jacobian.matrix.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < report.jacobian.matrix.cols(); ++k) row.push_back(report.jacobian.matrix(r, k));
    jac.push_back(std::move(row));
  }
  out.evidence = Json{{"rank", report.rank},
                      {"dim", report.dim},
                      {"singular_values", report.singular_values},
                      {"jacobian", std::move(jac)},
                      {"method", report.jacobian.method == JacobianMethod::Analytic ? "analytic" : "finite-difference"},
                      {"step_too_small", report.jacobian.step_too_small}};
  out.params = Json{{"y_hat", to_json(probe.y_hat)}, {"mode", probe.mode}, {"path", path_json(probe.path)},
                    {"fd_step", probe.fd_step}, {"svd_rtol", probe.svd_rtol}};
  return out;
}

CheckResult to_check(const RankProbe& probe, const PositivityReport& report) {
  CheckResult out;
  out.name = "positivity";
  out.verdict = report.pass ? Verdict::Pass : Verdict::Fail;
  out.evidence = Json{{"per_terminal_mode", report.per_mode}, {"min_over_j", report.min_over_j}};
  out.params = Json{{"y_hat", to_json(probe.y_hat)}, {"mode", probe.mode}, {"path", path_json(probe.path)}};
  return out;
}

CheckResult to_check(const AccessibilityReport& report) {
  CheckResult out;
  out.name = "accessibility";
  out.verdict = report.all_reached ? Verdict::Pass : Verdict::Inconclusive;
  Json starts = Json::array();
  for (const auto& a : report.per_start) {
    starts.push_back(Json{{"start", to_json(a.start.y)},
                          {"start_mode", a.start.mode},
                          {"reached", a.reached},
                          {"n", a.n},
                          {"distance", a.distance},
                          {"weight", a.weight},
                          {"path", path_json(a.path)}});
  }
  out.evidence = Json{{"per_start", std::move(starts)}};
  out.params = Json{{"y_hat", to_json(report.y_hat)}, {"mode", report.mode}, {"radius", report.radius}};
  return out;
}

CheckResult to_check(const Vector& y_hat, int mode, const SmallSetReport& report) {
  CheckResult out;
  out.name = "small-set";
  out.verdict = report.verdict;
  out.evidence = Json{{"c_bar", report.c_bar}, {"v_lo", to_json(report.v_lo)}, {"v_hi", to_json(report.v_hi)}};
  out.params = Json{{"y_hat", to_json(y_hat)}, {"mode", mode}, {"n", report.n}, {"n_mc", report.n_mc},
                    {"n_starts", report.n_starts}};
  return out;
}

CheckResult to_check(const ContinuityReport& report) {
  CheckResult out;
  out.name = "continuity";
  out.verdict = Verdict::Pass;
  Json atoms = Json::array();
  for (const auto& [x, m] : report.atoms) atoms.push_back(Json{{"y", to_json(x.y)}, {"mode", x.mode}, {"mass", m}});
  out.evidence = Json{{"verdict", report.verdict}, {"atom_fraction", report.atom_fraction}, {"atoms", std::move(atoms)}};
  out.params = Json{{"atom_eps", report.atom_eps}, {"atom_mass_threshold", 0.01}, {"atomic_above", 0.5},
                    {"diffuse_below", 0.01}};
  return out;
}

}  // namespace pdmp
