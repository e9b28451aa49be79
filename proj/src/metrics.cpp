#include "pdmp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "pdmp/parallel.hpp"
#include "pdmp/simulate.hpp"
#include "pdmp/transport.hpp"

namespace pdmp {

namespace {

constexpr double kNormTol = 1e-9;
constexpr std::size_t kMaxArcs = 10'000'000;

struct PooledNode {
  State x;
  double mass;
};

bool state_less(const State& a, const State& b) {
  if (a.mode != b.mode) return a.mode < b.mode;
  for (Eigen::Index k = 0; k < a.y.size(); ++k) {
    if (a.y(k) != b.y(k)) return a.y(k) < b.y(k);
  }
  return false;
}

void check_input(const EmpiricalMeasure& m, const char* name) {
  if (m.empty()) throw PreconditionError(fmt::format("fm_distance: measure {} is empty", name));
  m.validate();
  if (!m.is_normalized(kNormTol)) {
    throw PreconditionError(fmt::format("fm_distance: measure {} is not normalized (total weight {:.17g})",
                                        name, m.total_weight()));
  }
}

// Net mass mu - nu on the union of the supports. Atoms whose net mass is
// rounding noise are dropped (transport between a point and itself is free).
// The sign is normalized so that swapping mu and nu yields the same problem,
// which makes the result exactly symmetric.
std::vector<PooledNode> pool(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  struct Entry {
    const State* x;
    double w;
    bool from_mu;
  };
  std::vector<Entry> all;
  all.reserve(mu.size() + nu.size());
  for (std::size_t k = 0; k < mu.size(); ++k) all.push_back({&mu.atoms()[k], mu.weights()[k], true});
  for (std::size_t k = 0; k < nu.size(); ++k) all.push_back({&nu.atoms()[k], nu.weights()[k], false});
  std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) {
    if (state_less(*a.x, *b.x)) return true;
    if (state_less(*b.x, *a.x)) return false;
    return a.w < b.w;
  });

  std::vector<PooledNode> merged;
  std::size_t k = 0;
  while (k < all.size()) {
    double pos = 0.0;
    double neg = 0.0;
    std::size_t j = k;
    for (; j < all.size() && *all[j].x == *all[k].x; ++j) (all[j].from_mu ? pos : neg) += all[j].w;
    const double net = pos - neg;
    if (std::abs(net) > 1e-12 * (pos + neg)) merged.push_back({*all[k].x, net});
    k = j;
  }
  if (!merged.empty() && merged.front().mass < 0.0) {
    for (auto& node : merged) node.mass = -node.mass;
  }
  return merged;
}

// d = 1: within a mode, the shortest-path metric of the sorted chain equals
// |u - v| wherever that is below 1. Cross-mode moves (only relevant when
// c < 1) go through a shared backbone of positions via rungs of cost c/2.
double solve_line(const MetricConfig& cfg, const std::vector<PooledNode>& nodes) {
  const int n = static_cast<int>(nodes.size());
  std::vector<double> position(nodes.size());
  for (int k = 0; k < n; ++k) position[k] = nodes[k].x.y(0);

  const bool multi_mode = nodes.front().x.mode != nodes.back().x.mode;
  const bool backbone = multi_mode && cfg.c < 1.0;
  std::vector<double> rails;
  if (backbone) {
    rails = position;
    std::sort(rails.begin(), rails.end());
    rails.erase(std::unique(rails.begin(), rails.end()), rails.end());
  }

  std::vector<double> supply(static_cast<std::size_t>(n) + rails.size(), 0.0);
  for (int k = 0; k < n; ++k) supply[k] = nodes[k].mass;
  NetworkSimplex solver(std::move(supply), 0.5);

  for (int k = 0; k + 1 < n; ++k) {
    if (nodes[k].x.mode != nodes[k + 1].x.mode) continue;
    const double gap = position[k + 1] - position[k];
    if (gap < 1.0) {
      solver.add_arc(k, k + 1, gap);
      solver.add_arc(k + 1, k, gap);
    }
  }
  if (backbone) {
    const int base = n;
    for (std::size_t r = 0; r + 1 < rails.size(); ++r) {
      const double gap = rails[r + 1] - rails[r];
      if (gap < 1.0) {
        solver.add_arc(base + static_cast<int>(r), base + static_cast<int>(r) + 1, gap);
        solver.add_arc(base + static_cast<int>(r) + 1, base + static_cast<int>(r), gap);
      }
    }
    for (int k = 0; k < n; ++k) {
      const auto r = std::lower_bound(rails.begin(), rails.end(), position[k]) - rails.begin();
      solver.add_arc(k, base + static_cast<int>(r), 0.5 * cfg.c);
      solver.add_arc(base + static_cast<int>(r), k, 0.5 * cfg.c);
    }
  }
  return solver.solve();
}

// d >= 2: arcs from surplus to deficit atoms closer than 1. Small problems
// get every such arc. Large ones start from the nearest few sinks of each
// source (and sources of each sink) and add arcs with negative reduced cost
// until none is left, which certifies optimality over the full arc set.
class GeneralProblem {
 public:
  GeneralProblem(const MetricConfig& cfg, const std::vector<PooledNode>& nodes) : cfg_(cfg), nodes_(nodes) {
    dim_ = static_cast<int>(nodes.front().x.y.size());
    coords_.resize(nodes.size() * static_cast<std::size_t>(dim_));
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      for (int q = 0; q < dim_; ++q) coords_[k * static_cast<std::size_t>(dim_) + static_cast<std::size_t>(q)] = nodes[k].x.y(q);
      (nodes[k].mass > 0.0 ? sources_ : sinks_).push_back(static_cast<int>(k));
    }
    std::sort(sinks_.begin(), sinks_.end(), [&](int a, int b) { return coord(a, 0) < coord(b, 0); });
    sink_x0_.resize(sinks_.size());
    for (std::size_t k = 0; k < sinks_.size(); ++k) sink_x0_[k] = coord(sinks_[k], 0);
  }

  double solve() {
    std::size_t candidates = 0;
    for_each_pair([&](int, int, double) { ++candidates; });
    if (candidates <= kDenseArcs) {
      std::vector<std::pair<int, int>> arcs;
      arcs.reserve(candidates);
      for_each_pair([&](int s, int t, double) { arcs.emplace_back(s, t); });
      return run(arcs);
    }
    return column_generation();
  }

 private:
  static constexpr std::size_t kDenseArcs = 2'000'000;
  static constexpr std::size_t kNeighbours = 12;
  static constexpr std::size_t kEntering = 64;
  static constexpr double kPriceTol = 1e-12;

  double coord(int node, int q) const {
    return coords_[static_cast<std::size_t>(node) * static_cast<std::size_t>(dim_) + static_cast<std::size_t>(q)];
  }

  double cost(int s, int t) const {
    double sq = 0.0;
    for (int q = 0; q < dim_; ++q) {
      const double diff = coord(s, q) - coord(t, q);
      sq += diff * diff;
    }
    return std::sqrt(sq) + (nodes_[static_cast<std::size_t>(s)].x.mode == nodes_[static_cast<std::size_t>(t)].x.mode ? 0.0 : cfg_.c);
  }

  // Calls f(source, sink, cost) for every pair with cost < 1, sources in
  // index order and sinks by first coordinate.
  template <typename F>
  void for_each_pair(F&& f) const {
    for (int s : sources_) {
      const double x0 = coord(s, 0);
      const auto lo = std::upper_bound(sink_x0_.begin(), sink_x0_.end(), x0 - 1.0) - sink_x0_.begin();
      for (auto q = static_cast<std::size_t>(lo); q < sinks_.size() && sink_x0_[q] < x0 + 1.0; ++q) {
        const double c = cost(s, sinks_[q]);
        if (c < 1.0) f(s, sinks_[q], c);
      }
    }
  }

  double run(const std::vector<std::pair<int, int>>& arcs) const {
    NetworkSimplex solver(supplies(), 0.5);
    for (const auto& [s, t] : arcs) solver.add_arc(s, t, cost(s, t));
    return solver.solve();
  }

  std::vector<double> supplies() const {
    std::vector<double> supply(nodes_.size());
    for (std::size_t k = 0; k < nodes_.size(); ++k) supply[k] = nodes_[k].mass;
    return supply;
  }

  double column_generation() const {
    // Seed: k nearest partners on both sides.
    std::vector<std::vector<std::pair<double, int>>> by_source(nodes_.size());
    std::vector<std::vector<std::pair<double, int>>> by_sink(nodes_.size());
    auto keep = [](std::vector<std::pair<double, int>>& best, double c, int other, std::size_t limit) {
      if (best.size() < limit) {
        best.emplace_back(c, other);
        std::push_heap(best.begin(), best.end());
      } else if (c < best.front().first) {
        std::pop_heap(best.begin(), best.end());
        best.back() = {c, other};
        std::push_heap(best.begin(), best.end());
      }
    };
    for_each_pair([&](int s, int t, double c) {
      keep(by_source[static_cast<std::size_t>(s)], c, t, kNeighbours);
      keep(by_sink[static_cast<std::size_t>(t)], c, s, kNeighbours);
    });
    std::vector<std::pair<int, int>> arcs;
    for (int s : sources_) {
      for (const auto& [c, t] : by_source[static_cast<std::size_t>(s)]) arcs.emplace_back(s, t);
    }
    for (int t : sinks_) {
      for (const auto& [c, s] : by_sink[static_cast<std::size_t>(t)]) arcs.emplace_back(s, t);
    }
    std::sort(arcs.begin(), arcs.end());
    arcs.erase(std::unique(arcs.begin(), arcs.end()), arcs.end());

    NetworkSimplex solver(supplies(), 0.5);
    for (const auto& [s, t] : arcs) solver.add_arc(s, t, cost(s, t));
    std::size_t active = arcs.size();
    while (true) {
      const double value = solver.solve();
      // The most negative reduced costs of each source enter the basis.
      std::vector<std::vector<std::pair<double, int>>> entering(nodes_.size());
      for_each_pair([&](int s, int t, double c) {
        const double reduced = c + solver.potential(s) - solver.potential(t);
        if (reduced < -kPriceTol) keep(entering[static_cast<std::size_t>(s)], reduced, t, kEntering);
      });
      std::size_t added = 0;
      for (int s : sources_) {
        for (const auto& [r, t] : entering[static_cast<std::size_t>(s)]) {
          solver.add_arc(s, t, cost(s, t));
          ++added;
        }
      }
      if (added == 0) return value;
      active += added;
      if (active > kMaxArcs) {
        throw PreconditionError(
            fmt::format("fm_distance: more than {} active arcs; subsample the measures", kMaxArcs));
      }
    }
  }

  const MetricConfig& cfg_;
  const std::vector<PooledNode>& nodes_;
  int dim_ = 0;
  std::vector<double> coords_;
  std::vector<int> sources_;
  std::vector<int> sinks_;
  std::vector<double> sink_x0_;
};

double solve_general(const MetricConfig& cfg, const std::vector<PooledNode>& nodes) {
  return GeneralProblem(cfg, nodes).solve();
}

}  // namespace

void MetricConfig::validate() const {
  if (!(c > 0.0) || !std::isfinite(c)) throw PreconditionError("metric constant c must be > 0");
}

double rho_c(const MetricConfig& cfg, const State& x1, const State& x2) {
  if (x1.y.size() != x2.y.size()) {
    throw PreconditionError(fmt::format("rho_c: dimension mismatch ({} vs {})", x1.y.size(), x2.y.size()));
  }
  return (x1.y - x2.y).norm() + (x1.mode == x2.mode ? 0.0 : cfg.c);
}

double fm_distance(const MetricConfig& cfg, const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  cfg.validate();
  check_input(mu, "mu");
  check_input(nu, "nu");
  if (mu.dim() != nu.dim()) {
    throw PreconditionError(fmt::format("fm_distance: dimension mismatch ({} vs {})", mu.dim(), nu.dim()));
  }
  const auto nodes = pool(mu, nu);
  if (nodes.empty()) return 0.0;
  const double value = mu.dim() == 1 ? solve_line(cfg, nodes) : solve_general(cfg, nodes);
  return std::clamp(value, 0.0, 1.0);
}

double half_split_noise_floor(const MetricConfig& cfg, const EmpiricalMeasure& mu, std::size_t n_boot,
                              const RngStream& rng) {
  if (mu.size() < 2) throw PreconditionError("noise floor needs at least two atoms");
  if (n_boot < 1) throw PreconditionError("noise floor needs n_boot >= 1");
  double total = 0.0;
  std::vector<std::size_t> perm(mu.size());
  for (std::size_t b = 0; b < n_boot; ++b) {
    RngStream stream = rng.split(b);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t k = perm.size() - 1; k > 0; --k) std::swap(perm[k], perm[stream.below(k + 1)]);
    const auto half = static_cast<std::ptrdiff_t>(perm.size() / 2);
    const std::vector<std::size_t> first(perm.begin(), perm.begin() + half);
    const std::vector<std::size_t> second(perm.begin() + half, perm.end());
    total += fm_distance(cfg, mu.subset(first), mu.subset(second));
  }
  return total / static_cast<double>(n_boot);
}

RateFit fit_rate(const MetricConfig& cfg, const PdmpModel& model, const State& init,
                 const EmpiricalMeasure& mu_star, const RateOptions& opts, const RngStream& rng) {
  cfg.validate();
  if (opts.n_max < 4) throw PreconditionError(fmt::format("fit_rate: n_max must be >= 4 (got {})", opts.n_max));
  if (opts.n_rep < 2) throw PreconditionError("fit_rate: n_rep must be >= 2");
  model.check_state(init);

  RateFit fit;
  fit.c = cfg.c;
  fit.noise_floor = half_split_noise_floor(cfg, mu_star, opts.n_boot, rng.split(0));
  fit.table.resize(static_cast<std::size_t>(opts.n_max));

  parallel_for(fit.table.size(), opts.workers, [&](std::size_t k) {
    const int n = static_cast<int>(k) + 1;
    const RngStream stream = rng.split(static_cast<std::uint64_t>(n));
    std::vector<State> finals;
    finals.reserve(opts.n_rep);
    for (std::size_t r = 0; r < opts.n_rep; ++r) {
      RngStream chain = stream.split(r);
      State x = init;
      for (int s = 0; s < n; ++s) x = step_chain(model, x, chain).state;
      finals.push_back(std::move(x));
    }
    auto& row = fit.table[k];
    row.n = n;
    row.d_n = fm_distance(cfg, EmpiricalMeasure::uniform(std::move(finals)), mu_star);
    row.noise_floor = fit.noise_floor;
  });

  std::vector<double> xs;
  std::vector<double> ys;
  for (auto& row : fit.table) {
    if (!(row.d_n > fit.noise_floor)) break;
    row.used = true;
    xs.push_back(row.n);
    ys.push_back(std::log(row.d_n));
  }
  if (xs.size() < 2) throw PreconditionError("already converged; reduce n or enlarge samples");

  const double m = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / m;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / m;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sxy += (xs[k] - mx) * (ys[k] - my);
    sxx += (xs[k] - mx) * (xs[k] - mx);
  }
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double sse = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double r = ys[k] - (intercept + slope * xs[k]);
    sse += r * r;
  }
  fit.beta = std::exp(slope);
  fit.C = std::exp(intercept);
  fit.residual = std::sqrt(sse / m);
  fit.n_lo = static_cast<int>(xs.front());
  fit.n_hi = static_cast<int>(xs.back());
  if (!std::isfinite(fit.beta) || fit.beta > 1.0) {
    throw Error(fmt::format("fit_rate: no geometric decay detected (fitted beta = {:.6g})", fit.beta));
  }
  return fit;
}

}  // namespace pdmp
