#include <chrono>
#include <cmath>

#include "doctest.h"
#include "lp_oracle.hpp"
#include "pdmp/metrics.hpp"
#include "pdmp/simulate.hpp"
#include "pdmp/transport.hpp"

using namespace pdmp;

namespace {

State random_state(RngStream& rng, int dim, int modes, double scale, bool gridded) {
  State x{Vector(dim), 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(modes)))};
  for (int k = 0; k < dim; ++k) {
    x.y(k) = gridded ? 0.25 * static_cast<double>(rng.below(9)) - 1.0 : rng.uniform(-scale, scale);
  }
  return x;
}

EmpiricalMeasure random_measure(RngStream& rng, int dim, int modes, std::size_t max_atoms, bool gridded) {
  const std::size_t n = 1 + rng.below(max_atoms);
  EmpiricalMeasure mu;
  for (std::size_t k = 0; k < n; ++k) mu.add(random_state(rng, dim, modes, 1.5, gridded), 0.05 + rng.uniform());
  mu.normalize();
  return mu;
}

}  // namespace

TEST_CASE("rho_c examples and errors") {
  const MetricConfig two{2.0};
  CHECK(rho_c(MetricConfig{}, make_state({1.0}, 1), make_state({1.0}, 1)) == 0.0);
  CHECK(rho_c(two, make_state({0.0}, 1), make_state({0.0}, 2)) == 2.0);
  CHECK(rho_c(two, make_state({3.0}, 1), make_state({0.0}, 2)) == 5.0);
  CHECK_THROWS_AS(rho_c(two, make_state({0.0}, 1), make_state({0.0, 1.0}, 1)), PreconditionError);
  CHECK_THROWS_AS(MetricConfig{0.0}.validate(), PreconditionError);
}

TEST_CASE("rho_c metric axioms") {
  RngStream rng(1);
  int violations = 0;
  for (int k = 0; k < 10000; ++k) {
    const MetricConfig cfg{rng.uniform(0.1, 3.0)};
    const int dim = 1 + static_cast<int>(rng.below(3));
    const State a = random_state(rng, dim, 3, 5.0, k % 3 == 0);
    const State b = random_state(rng, dim, 3, 5.0, k % 3 == 0);
    const State c = random_state(rng, dim, 3, 5.0, k % 3 == 0);
    violations += rho_c(cfg, a, b) != rho_c(cfg, b, a);
    violations += (rho_c(cfg, a, b) == 0.0) != (a == b);
    violations += rho_c(cfg, a, a) != 0.0;
    violations += rho_c(cfg, a, c) > rho_c(cfg, a, b) + rho_c(cfg, b, c) + 1e-12;
  }
  CHECK(violations == 0);
}

TEST_CASE("fm_distance examples") {
  const MetricConfig cfg;
  RngStream rng(2);
  const auto mu = random_measure(rng, 1, 2, 6, false);
  CHECK(fm_distance(cfg, mu, mu) == 0.0);
  const auto d0 = EmpiricalMeasure::dirac(make_state({0.0}, 1));
  CHECK(fm_distance(cfg, d0, EmpiricalMeasure::dirac(make_state({0.3}, 1))) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(fm_distance(cfg, d0, EmpiricalMeasure::dirac(make_state({5.0}, 1))) == 1.0);

  const auto a = EmpiricalMeasure::uniform({make_state({0.0}, 1), make_state({0.4}, 1), make_state({1.1}, 1)});
  const auto b = EmpiricalMeasure::uniform({make_state({0.2}, 1), make_state({0.9}, 1), make_state({3.0}, 1)});
  CHECK(std::abs(fm_distance(cfg, a, b) - oracle::fm_distance_lp(cfg, a, b)) < 1e-9);
}

TEST_CASE("fm_distance input checks") {
  const MetricConfig cfg;
  const auto d0 = EmpiricalMeasure::dirac(make_state({0.0}, 1));
  CHECK_THROWS_WITH_AS(fm_distance(cfg, EmpiricalMeasure{}, d0), doctest::Contains("empty"), PreconditionError);
  EmpiricalMeasure heavy;
  heavy.add(make_state({0.0}, 1), 2.0);
  CHECK_THROWS_WITH_AS(fm_distance(cfg, heavy, d0), doctest::Contains("not normalized"), PreconditionError);
  CHECK_THROWS_AS(fm_distance(cfg, d0, EmpiricalMeasure::dirac(make_state({0.0, 0.0}, 1))), PreconditionError);
}

TEST_CASE("transport agrees with the dual LP oracle") {
  RngStream rng(3);
  double worst = 0.0;
  for (int k = 0; k < 400; ++k) {
    const MetricConfig cfg{k % 4 == 0 ? 0.3 : (k % 4 == 1 ? 1.0 : rng.uniform(0.05, 2.5))};
    const int dim = k % 2 == 0 ? 1 : 2;
    const bool gridded = k % 5 == 0;
    const auto mu = random_measure(rng, dim, 1 + static_cast<int>(rng.below(3)), 6, gridded);
    const auto nu = random_measure(rng, dim, 1 + static_cast<int>(rng.below(3)), 6, gridded);
    const double fast = fm_distance(cfg, mu, nu);
    const double lp = oracle::fm_distance_lp(cfg, mu, nu);
    worst = std::max(worst, std::abs(fast - lp));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("Dirac closed form and d_FM axioms") {
  RngStream rng(4);
  int violations = 0;
  for (int k = 0; k < 1000; ++k) {
    const MetricConfig cfg{rng.uniform(0.1, 2.0)};
    const int dim = 1 + static_cast<int>(rng.below(3));
    const State x = random_state(rng, dim, 2, 1.0, false);
    const State z = random_state(rng, dim, 2, 1.0, false);
    const double d = fm_distance(cfg, EmpiricalMeasure::dirac(x), EmpiricalMeasure::dirac(z));
    violations += std::abs(d - std::min(rho_c(cfg, x, z), 1.0)) > 1e-12;

    const auto a = random_measure(rng, dim, 2, 6, k % 2 == 0);
    const auto b = random_measure(rng, dim, 2, 6, k % 2 == 0);
    const auto c = random_measure(rng, dim, 2, 6, k % 2 == 0);
    const double ab = fm_distance(cfg, a, b);
    violations += ab != fm_distance(cfg, b, a);
    violations += ab < 0.0 || ab > 1.0;
    violations += fm_distance(cfg, a, c) > ab + fm_distance(cfg, b, c) + 1e-9;
  }
  CHECK(violations == 0);
}

TEST_CASE("network simplex basis stays consistent on every pivot") {
  RngStream rng(5);
  for (int inst = 0; inst < 60; ++inst) {
    const int n = 3 + static_cast<int>(rng.below(40));
    std::vector<double> supply(static_cast<std::size_t>(n));
    double sum = 0.0;
    for (int k = 0; k + 1 < n; ++k) {
      supply[k] = inst % 3 == 0 ? static_cast<double>(rng.below(5)) - 2.0 : rng.uniform(-1.0, 1.0);
      sum += supply[k];
    }
    supply[n - 1] = -sum;
    NetworkSimplex ns(supply, 0.5);
    const int arcs = static_cast<int>(rng.below(static_cast<std::uint64_t>(4 * n))) + n;
    for (int e = 0; e < arcs; ++e) {
      const int s = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
      int t = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
      if (t == s) t = (t + 1) % n;
      ns.add_arc(s, t, inst % 3 == 1 ? 0.1 * static_cast<double>(rng.below(10)) : rng.uniform(0.0, 1.2));
    }
    std::string failure;
    ns.solve([&](const NetworkSimplex& s) {
      if (failure.empty()) failure = s.audit(1e-9);
    });
    CAPTURE(inst);
    CHECK(failure.empty());
    CHECK(ns.audit(1e-9).empty());
    CHECK(ns.min_reduced_cost() > -1e-9);
  }
}

TEST_CASE("network simplex resumes after arcs are added") {
  RngStream rng(12);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 6 + static_cast<int>(rng.below(10));
    std::vector<double> supply(static_cast<std::size_t>(n));
    double total = 0.0;
    for (int k = 0; k + 1 < n; ++k) total += supply[static_cast<std::size_t>(k)] = rng.uniform(-1.0, 1.0);
    supply.back() = -total;
    struct Arc {
      int s, t;
      double c;
    };
    std::vector<Arc> arcs;
    for (int k = 0; k < 3 * n; ++k) {
      const int s = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
      const int t = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
      if (s != t) arcs.push_back({s, t, rng.uniform(0.0, 1.0)});
    }
    NetworkSimplex all(supply, 0.5);
    for (const auto& a : arcs) all.add_arc(a.s, a.t, a.c);
    const double direct = all.solve();

    NetworkSimplex staged(supply, 0.5);
    const std::size_t half = arcs.size() / 2;
    for (std::size_t k = 0; k < half; ++k) staged.add_arc(arcs[k].s, arcs[k].t, arcs[k].c);
    const double partial = staged.solve();
    for (std::size_t k = half; k < arcs.size(); ++k) staged.add_arc(arcs[k].s, arcs[k].t, arcs[k].c);
    const double resumed = staged.solve();
    CHECK(partial >= direct - 1e-12);
    CHECK(std::abs(resumed - direct) < 1e-12);
    CHECK(staged.audit().empty());
    CHECK(staged.min_reduced_cost() > -1e-12);
  }
}

TEST_CASE("large measures against a Dirac match the closed form") {
  RngStream rng(6);
  for (const double c : {0.4, 1.0}) {
    for (const int dim : {1, 2}) {
      const std::size_t n = dim == 1 ? 20000 : 3000;
      std::vector<State> atoms;
      double expected = 0.0;
      const MetricConfig cfg{c};
      const State origin{Vector::Zero(dim), 1};
      for (std::size_t k = 0; k < n; ++k) {
        atoms.push_back(random_state(rng, dim, 2, 1.2, false));
        expected += std::min(rho_c(cfg, origin, atoms.back()), 1.0);
      }
      expected /= static_cast<double>(n);
      const double d = fm_distance(cfg, EmpiricalMeasure::dirac(origin), EmpiricalMeasure::uniform(atoms));
      CAPTURE(c);
      CAPTURE(dim);
      CHECK(std::abs(d - expected) < 1e-9);
    }
  }
}

TEST_CASE("two large samples of the same law are close") {
  const auto lines = builtin_model("contracting-lines");
  InvariantSampling cfg{.n_traj = 100, .burn_in = 50, .n_keep = 100, .thin = 1, .workers = 1};
  const auto a = sample_invariant(lines, make_state({0.0}, 1), cfg, RngStream(7, 1));
  const auto b = sample_invariant(lines, make_state({0.0}, 1), cfg, RngStream(7, 2));
  const auto start = std::chrono::steady_clock::now();
  const double d = fm_distance(MetricConfig{}, a, b);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  MESSAGE("10^4 vs 10^4 atoms: d_FM = " << d << " in " << secs << " s");
  CHECK(d < 0.05);
  CHECK(d > 0.0);
  const double floor = half_split_noise_floor(MetricConfig{}, a, 3, RngStream(8));
  CHECK(floor > 0.0);
  CHECK(floor < 0.05);
}

TEST_CASE("large planar problems match the line solver") {
  // Points on the axis y_2 = 0 have the same distances as their first
  // coordinates, so the chain solver serves as the reference. Sizes are
  // above the dense-arc limit, which exercises the pricing loop.
  RngStream rng(11);
  for (const double c : {0.3, 2.0}) {
    const MetricConfig cfg{c};
    std::vector<State> a_line, b_line, a_plane, b_plane;
    for (int k = 0; k < 2500; ++k) {
      for (auto* pair : {&a_line, &b_line}) {
        const double x = rng.normal() * (pair == &a_line ? 0.3 : 0.35) + (pair == &a_line ? 0.0 : 0.1);
        const int mode = 1 + static_cast<int>(rng.below(2));
        pair->push_back(make_state({x}, mode));
        (pair == &a_line ? a_plane : b_plane).push_back(make_state({x, 0.0}, mode));
      }
    }
    const double line = fm_distance(cfg, EmpiricalMeasure::uniform(a_line), EmpiricalMeasure::uniform(b_line));
    const auto start = std::chrono::steady_clock::now();
    const double plane = fm_distance(cfg, EmpiricalMeasure::uniform(a_plane), EmpiricalMeasure::uniform(b_plane));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    MESSAGE("c = " << c << ": line " << line << ", plane " << plane << " in " << secs << " s");
    CHECK(std::abs(line - plane) < 1e-9);
  }
}

TEST_CASE("fit_rate") {
  const auto trap = builtin_model("dirac-trap", {{"lambda", 1.0}});
  InvariantSampling inv{.n_traj = 20, .burn_in = 200, .n_keep = 50, .thin = 1, .workers = 1};
  const auto mu_star = sample_invariant(trap, make_state({1.0}, 1), inv, RngStream(9));
  const RateOptions opts{.n_max = 8, .n_rep = 4000, .n_boot = 3, .workers = 2};
  const auto fit = fit_rate(MetricConfig{}, trap, make_state({1.0}, 1), mu_star, opts, RngStream(10));
  CHECK(fit.beta >= 0.45);
  CHECK(fit.beta <= 0.55);
  CHECK(fit.n_lo == 1);
  CHECK(fit.n_hi == 8);
  CHECK(fit.table.size() == 8);
  CHECK(std::isfinite(fit.residual));

  auto two = opts;
  two.n_max = 2;
  CHECK_THROWS_AS(fit_rate(MetricConfig{}, trap, make_state({1.0}, 1), mu_star, two, RngStream(10)),
                  PreconditionError);
  const auto exact = EmpiricalMeasure::dirac(make_state({0.0}, 1), 100);
  CHECK_THROWS_WITH(fit_rate(MetricConfig{}, trap, make_state({0.0}, 1), exact, opts, RngStream(10)),
                    doctest::Contains("already converged"));

  auto serial = opts;
  serial.workers = 1;
  const auto again = fit_rate(MetricConfig{}, trap, make_state({1.0}, 1), mu_star, serial, RngStream(10));
  CHECK(again.beta == fit.beta);
}
