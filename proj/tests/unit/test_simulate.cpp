#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "pdmp/simulate.hpp"

using namespace pdmp;

namespace {

double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double f = cdf(xs[k]);
    d = std::max({d, std::abs(f - static_cast<double>(k) / n), std::abs(static_cast<double>(k + 1) / n - f)});
  }
  return d;
}

double ks_critical_1pct(std::size_t n) { return 1.628 / std::sqrt(static_cast<double>(n)); }

class LooseJump final : public JumpFamily {
 public:
  explicit LooseJump(double envelope) : envelope_(envelope) {}
  Vector map(double, const Vector& y) const override { return y; }
  double density(double, const Vector&) const override { return 0.5; }
  double envelope(const Vector&) const override { return envelope_; }

 private:
  double envelope_;
};

class StillFlow final : public Semiflow {
 public:
  Vector eval(int, double, const Vector& y) const override { return y; }
};

PdmpModel loose_model(double envelope) {
  return PdmpModel(ModelParts{
      .family = "loose",
      .lambda = 1.0,
      .modes = 1,
      .dim = 1,
      .semiflow = std::make_shared<StillFlow>(),
      .jumps = std::make_shared<LooseJump>(envelope),
      .switching = std::make_shared<ConstantSwitch>(std::vector<std::vector<double>>{{1.0}}),
      .theta = ThetaSpace::interval(0.0, 2.0),
  });
}

}  // namespace

TEST_CASE("dirac-trap step is a pure flow") {
  const auto trap = builtin_model("dirac-trap");
  RngStream rng(1);
  for (int k = 0; k < 100; ++k) {
    const auto step = step_chain(trap, make_state({1.0}, 1), rng);
    CHECK(step.state.mode == 1);
    CHECK(step.state.y(0) == std::exp(-step.dtau));
  }
}

TEST_CASE("inter-jump gaps are Exp(lambda)") {
  const auto lines = builtin_model("contracting-lines", {{"lambda", 1.0}});
  const auto traj = simulate_chain(lines, make_state({0.0}, 1), 100000, RngStream(3));
  double mean = 0.0;
  for (double g : traj.dtau) mean += g;
  mean /= static_cast<double>(traj.dtau.size());
  CHECK(std::abs(mean - 1.0) < 0.02);
  const double d = ks_statistic(traj.dtau, [](double x) { return 1.0 - std::exp(-x); });
  CHECK(d < ks_critical_1pct(traj.dtau.size()));

  const auto fast = builtin_model("contracting-lines", {{"lambda", 3.0}});
  const auto traj3 = simulate_chain(fast, make_state({0.0}, 1), 20000, RngStream(4));
  CHECK(ks_statistic(traj3.dtau, [](double x) { return 1.0 - std::exp(-3.0 * x); }) <
        ks_critical_1pct(traj3.dtau.size()));
}

TEST_CASE("mode switch frequency matches pi = 1/2") {
  const auto lines = builtin_model("contracting-lines");
  const auto traj = simulate_chain(lines, make_state({0.0}, 1), 100000, RngStream(5));
  int switches = 0;
  for (std::size_t n = 1; n < traj.states.size(); ++n) switches += traj.states[n].mode != traj.states[n - 1].mode;
  CHECK(std::abs(switches / 100000.0 - 0.5) < 0.01);
}

TEST_CASE("trajectory invariants and reconstruction") {
  for (const auto& model : {builtin_model("contracting-lines"), builtin_model("planar-rotor"),
                            builtin_model("contracting-lines", {{"theta", std::string("interval")}, {"tilt", 0.5}})}) {
    CAPTURE(model.family());
    const State init{Vector::Zero(model.dim()), 1};
    const auto traj = simulate_chain(model, init, 500, RngStream(6, 2));
    REQUIRE(traj.tau.size() == 501);
    REQUIRE(traj.states.size() == 501);
    REQUIRE(traj.dtau.size() == 500);
    REQUIRE(traj.thetas.size() == 500);
    CHECK(traj.tau[0] == 0.0);
    double running = 0.0;
    for (std::size_t n = 1; n <= 500; ++n) {
      running += traj.dtau[n - 1];
      REQUIRE(traj.tau[n] == running);
      REQUIRE(traj.tau[n] > traj.tau[n - 1]);
      REQUIRE(model.theta().contains(traj.thetas[n - 1]));
      const Vector rebuilt = model.jumps().map(
          traj.thetas[n - 1], model.semiflow().eval(traj.states[n - 1].mode, traj.dtau[n - 1], traj.states[n - 1].y));
      REQUIRE((rebuilt - traj.states[n].y).norm() <= 1e-12);
    }
  }
}

TEST_CASE("dirac-trap chain mean decays like (lambda / (lambda + 1))^n") {
  const auto trap = builtin_model("dirac-trap", {{"lambda", 1.0}});
  const RngStream root(77);
  double mean = 0.0;
  const int n_traj = 100000;
  for (int r = 0; r < n_traj; ++r) {
    mean += simulate_chain(trap, make_state({1.0}, 1), 10, root.split(static_cast<std::uint64_t>(r))).states.back().y(0);
  }
  mean /= n_traj;
  CHECK(std::abs(mean - std::pow(0.5, 10)) < 3e-4);
}

TEST_CASE("zero steps and determinism") {
  const auto lines = builtin_model("contracting-lines");
  const auto empty = simulate_chain(lines, make_state({0.3}, 2), 0, RngStream(1));
  CHECK(empty.states.size() == 1);
  CHECK(empty.states[0] == make_state({0.3}, 2));
  CHECK(empty.dtau.empty());

  const auto a = simulate_chain(lines, make_state({0.3}, 2), 1000, RngStream(9, 4));
  const auto b = simulate_chain(lines, make_state({0.3}, 2), 1000, RngStream(9, 4));
  CHECK(a == b);
  CHECK(a.seed == 9);
  CHECK(a.stream == 4);
}

TEST_CASE("interpolate") {
  const auto trap = builtin_model("dirac-trap");
  const auto traj = simulate_chain(trap, make_state({1.0}, 1), 20, RngStream(10));
  CHECK(interpolate(trap, traj, 0.0) == traj.states[0]);
  for (std::size_t n = 0; n <= 20; ++n) CHECK(interpolate(trap, traj, traj.tau[n]) == traj.states[n]);
  for (std::size_t n = 0; n < 20; ++n) {
    const double t = 0.5 * (traj.tau[n] + traj.tau[n + 1]);
    const State x = interpolate(trap, traj, t);
    CHECK(x.y(0) == doctest::Approx(std::exp(-(t - traj.tau[n])) * traj.states[n].y(0)).epsilon(1e-14));
  }
  CHECK_THROWS_WITH_AS(interpolate(trap, traj, traj.tau.back() + 1.0), doctest::Contains("simulate more steps"),
                       PreconditionError);
}

TEST_CASE("interval theta draws follow p(., y)") {
  const double tilt = 0.8;
  const auto model = builtin_model("contracting-lines", {{"theta", std::string("interval")},
                                                         {"theta_lo", -1.0},
                                                         {"theta_hi", 3.0},
                                                         {"tilt", tilt}});
  RngStream rng(12);
  for (double y : {-2.0, 0.0, 1.5}) {
    std::vector<double> draws(100000);
    for (double& th : draws) th = sample_theta(model, make_vector({y}), rng);
    const double k = tilt * std::tanh(y);
    const auto cdf = [k](double th) {
      const double s = (2.0 * th - 2.0) / 4.0;
      return (s + 1.0) / 2.0 + k * (s * s - 1.0) / 4.0;
    };
    CAPTURE(y);
    CHECK(ks_statistic(draws, cdf) < ks_critical_1pct(draws.size()));
  }
}

TEST_CASE("rejection sampler errors") {
  RngStream rng(13);
  CHECK_THROWS_WITH_AS(sample_theta(loose_model(1e9), make_vector({0.0}), rng, 1000),
                       doctest::Contains("envelope M(y) is too loose"), SimulationError);
  CHECK_THROWS_WITH_AS(sample_theta(loose_model(0.1), make_vector({0.0}), rng),
                       doctest::Contains("envelope violated"), SimulationError);
  CHECK_THROWS_WITH_AS(simulate_chain(loose_model(0.1), make_state({0.0}, 1), 5, RngStream(1)),
                       doctest::Contains("step 1"), SimulationError);
}

TEST_CASE("sample_invariant") {
  const auto trap = builtin_model("dirac-trap");
  InvariantSampling cfg{.n_traj = 100, .burn_in = 200, .n_keep = 100, .thin = 1, .workers = 1};
  const auto mu = sample_invariant(trap, make_state({1.0}, 1), cfg, RngStream(14));
  CHECK(mu.size() == 10000);
  CHECK(mu.is_normalized());
  for (const auto& x : mu.atoms()) REQUIRE(std::abs(x.y(0)) < 1e-40);

  const auto lines = builtin_model("contracting-lines");
  cfg.n_traj = 20;
  cfg.thin = 3;
  const auto nu = sample_invariant(lines, make_state({0.0}, 1), cfg, RngStream(15));
  CHECK(nu.size() == 2000);
  REQUIRE(nu.has_origins());
  double lo = 1e9;
  double hi = -1e9;
  for (std::size_t k = 0; k < nu.size(); ++k) {
    lo = std::min(lo, nu.atoms()[k].y(0));
    hi = std::max(hi, nu.atoms()[k].y(0));
    CHECK((nu.origins()[k].step - 200) % 3 == 0);
  }
  // Support lies in the hull of the fixed points -1, 1 and the equilibrium a = 2.
  CHECK(lo >= -1.0);
  CHECK(hi <= 2.0);
  CHECK(hi - lo > 1.0);

  cfg.n_traj = 1;
  cfg.n_keep = 50;
  const auto a = sample_invariant(lines, make_state({0.0}, 1), cfg, RngStream(15, 0));
  const auto b = sample_invariant(lines, make_state({0.0}, 1), cfg, RngStream(15, 1));
  std::multiset<double> sa;
  std::multiset<double> sb;
  for (const auto& x : a.atoms()) sa.insert(x.y(0));
  for (const auto& x : b.atoms()) sb.insert(x.y(0));
  CHECK(sa != sb);
}

TEST_CASE("sample_invariant does not depend on the worker count") {
  const auto lines = builtin_model("contracting-lines");
  InvariantSampling cfg{.n_traj = 37, .burn_in = 20, .n_keep = 30, .thin = 2, .workers = 1};
  const auto one = sample_invariant(lines, make_state({0.0}, 1), cfg, RngStream(16));
  cfg.workers = 8;
  const auto many = sample_invariant(lines, make_state({0.0}, 1), cfg, RngStream(16));
  CHECK(one == many);
}
