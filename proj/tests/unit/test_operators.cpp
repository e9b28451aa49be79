#include <cmath>

#include "doctest.h"
#include "pdmp/operators.hpp"
#include "pdmp/simulate.hpp"

using namespace pdmp;

TEST_CASE("sample_P, sample_G and sample_W examples") {
  const auto trap = builtin_model("dirac-trap", {{"lambda", 1.0}});
  const auto lines = builtin_model("contracting-lines");
  RngStream rng(1);
  const int n = 100000;
  double mean_p = 0.0;
  double mean_g = 0.0;
  int plus = 0;
  for (int k = 0; k < n; ++k) {
    mean_p += sample_P(trap, make_state({1.0}, 1), rng).y(0);
    mean_g += sample_G(trap, make_state({1.0}, 1), rng).y(0);
    const State w = sample_W(lines, make_state({0.0}, 1), rng);
    REQUIRE((w.y(0) == 0.5 || w.y(0) == -0.5));
    plus += w.y(0) > 0.0;
    const State g = sample_G(lines, make_state({0.7}, 2), rng);
    REQUIRE(g.mode == 2);
  }
  CHECK(std::abs(mean_p / n - 0.5) < 0.005);
  CHECK(std::abs(mean_g / n - 0.5) < 0.005);
  CHECK(std::abs(static_cast<double>(plus) / n - 0.5) < 0.01);

  CHECK(sample_W(trap, make_state({0.37}, 1), rng) == make_state({0.37}, 1));

  RngStream a(5, 5);
  RngStream b(5, 5);
  CHECK(sample_P(lines, make_state({0.2}, 1), a) == sample_P(lines, make_state({0.2}, 1), b));
  CHECK(sample_G(lines, make_state({0.2}, 1), a) == sample_G(lines, make_state({0.2}, 1), b));
}

TEST_CASE("mode marginal of P follows the switching row") {
  const auto lines = builtin_model("contracting-lines", {{"pi_stay", 0.8}});
  RngStream rng(2);
  int stay = 0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) stay += sample_P(lines, make_state({0.0}, 2), rng).mode == 2;
  CHECK(std::abs(static_cast<double>(stay) / n - 0.8) < 0.01);
}

TEST_CASE("pushforward") {
  const auto trap = builtin_model("dirac-trap");
  const auto lines = builtin_model("contracting-lines");
  const auto cloud = EmpiricalMeasure::dirac(make_state({0.4}, 1), 500);
  const auto image = pushforward(Operator::P, lines, cloud, RngStream(3));
  CHECK(image.size() == 500);
  CHECK(std::abs(image.total_weight() - 1.0) < 1e-12);

  InvariantSampling cfg{.n_traj = 100, .burn_in = 0, .n_keep = 100, .thin = 1, .workers = 1};
  auto start = EmpiricalMeasure::uniform(std::vector<State>(20000, make_state({1.0}, 1)));
  double before = 0.0;
  for (const auto& x : start.atoms()) before += x.y(0);
  const auto moved = pushforward(Operator::P, trap, start, RngStream(4));
  double after = 0.0;
  for (const auto& x : moved.atoms()) after += x.y(0);
  CHECK(std::abs(after / before - 0.5) < 0.01);

  const auto zero = EmpiricalMeasure::dirac(make_state({0.0}, 1), 100);
  CHECK(pushforward(Operator::P, trap, zero, RngStream(5)) == zero);

  const auto one = pushforward(Operator::W, lines, image, RngStream(6), 1);
  const auto many = pushforward(Operator::W, lines, image, RngStream(6), 8);
  CHECK(one == many);
  CHECK(parse_operator("G") == Operator::G);
  CHECK_THROWS_AS(parse_operator("Q"), PreconditionError);
}

TEST_CASE("check_correspondence") {
  const auto trap = builtin_model("dirac-trap");
  const auto delta = EmpiricalMeasure::dirac(make_state({0.0}, 1), 1000);
  const auto exact = check_correspondence(trap, delta, RngStream(7), MetricConfig{}, 3);
  CHECK(exact.d_WG < 1e-12);
  CHECK(exact.n_atoms == 1000);

  const auto lines = builtin_model("contracting-lines");
  InvariantSampling cfg{.n_traj = 100, .burn_in = 200, .n_keep = 100, .thin = 1, .workers = 1};
  const auto mu = sample_invariant(lines, make_state({0.0}, 1), cfg, RngStream(8));
  const auto rep = check_correspondence(lines, mu, RngStream(9), MetricConfig{}, 5);
  MESSAGE("contracting-lines d_WG = " << rep.d_WG << ", d_null = " << rep.d_null);
  CHECK(rep.d_WG <= 3.0 * rep.d_null);

  CHECK_THROWS_WITH_AS(check_correspondence(lines, EmpiricalMeasure::dirac(make_state({0.0}, 1), 5), RngStream(1),
                                            MetricConfig{}, 3),
                       doctest::Contains("at least 10 atoms"), PreconditionError);
}

TEST_CASE("compose_Wn and path weights") {
  const auto lines = builtin_model("contracting-lines");
  const auto trap = builtin_model("dirac-trap");
  CHECK(compose_Wn(lines, make_vector({0.0}), PathSpec{{1}, {0.0}, {1.0}})(0) == 0.5);
  CHECK(compose_Wn(trap, make_vector({2.0}), PathSpec{{1, 1, 1}, {1.0, 1.0, 1.0}, {1.0, 1.0, 1.0}})(0) ==
        doctest::Approx(2.0 * std::exp(-3.0)).epsilon(1e-15));

  const PathSpec three{{1, 2, 1}, {0.3, 0.1, 0.5}, {1.0, -1.0, 1.0}};
  CHECK(weight_Pi_n(lines, make_vector({0.4}), three, 2) == 0.125);
  const PathSpec two{{1, 1}, {0.0, 0.0}, {1.0, -1.0}};
  CHECK(weight_P_n(lines, make_vector({0.4}), two) == 0.25);
  CHECK(weight_T_n(lines, make_vector({0.4}), two, 1) == 1.0 / 16.0);
  CHECK(weight_Pi_n(lines, make_vector({0.4}), PathSpec{{2}, {0.7}, {1.0}}, 1) == lines.switching().prob(2, 1, make_vector({0.0})));

  CHECK_THROWS_AS(compose_Wn(lines, make_vector({0.0}), PathSpec{{1}, {-1.0}, {1.0}}), PreconditionError);
  CHECK_THROWS_AS(compose_Wn(lines, make_vector({0.0}), PathSpec{{1, 2}, {1.0}, {1.0}}), PreconditionError);
  CHECK_THROWS_AS(compose_Wn(lines, make_vector({0.0}), PathSpec{{1}, {1.0}, {0.5}}), PreconditionError);
  CHECK_THROWS_AS(compose_Wn(lines, make_vector({0.0}), PathSpec{}), PreconditionError);
}

TEST_CASE("randomized path identities") {
  RngStream rng(10);
  const auto lines = builtin_model("contracting-lines", {{"theta", std::string("interval")}, {"tilt", 0.7}, {"pi_stay", 0.3}});
  const auto rotor = builtin_model("planar-rotor", {{"pi_stay", 0.9}});
  for (const auto* model : {&lines, &rotor}) {
    for (int k = 0; k < 500; ++k) {
      const auto n = 1 + rng.below(4);
      PathSpec path;
      for (std::size_t s = 0; s < n; ++s) {
        path.modes.push_back(1 + static_cast<int>(rng.below(2)));
        path.times.push_back(rng.uniform(0.0, 3.0));
        path.thetas.push_back(model->theta().is_finite() ? (rng.uniform() < 0.5 ? -1.0 : 1.0) : rng.uniform(-1.0, 1.0));
      }
      Vector y(model->dim());
      for (int c = 0; c < model->dim(); ++c) y(c) = rng.uniform(-3.0, 3.0);
      const int j = 1 + static_cast<int>(rng.below(2));

      // Manual unrolling of the recursion.
      Vector w = y;
      double p = 1.0;
      double pi = 1.0;
      for (std::size_t s = 0; s < n; ++s) {
        const Vector z = model->semiflow().eval(path.modes[s], path.times[s], w);
        p *= model->jumps().density(path.thetas[s], z);
        w = model->jumps().map(path.thetas[s], z);
        pi *= model->switching().prob(path.modes[s], s + 1 < n ? path.modes[s + 1] : j, w);
      }
      REQUIRE((compose_Wn(*model, y, path) - w).norm() <= 1e-12);
      REQUIRE(weight_P_n(*model, y, path) == doctest::Approx(p).epsilon(1e-15));
      REQUIRE(weight_Pi_n(*model, y, path, j) == doctest::Approx(pi).epsilon(1e-15));
      double total = 0.0;
      for (double t : path.times) total += t;
      const double expected = std::exp(-total) * weight_P_n(*model, y, path) * weight_Pi_n(*model, y, path, j);
      REQUIRE(std::abs(weight_T_n(*model, y, path, j) - expected) <= 1e-15);
      REQUIRE(weight_Pi_n(*model, y, path, j) >= 0.0);
      REQUIRE(weight_Pi_n(*model, y, path, j) <= 1.0);
      REQUIRE(weight_P_n(*model, y, path) > 0.0);

      // T_n decreases in every time coordinate when p and pi are constant.
      if (model == &rotor) {
        PathSpec later = path;
        later.times[rng.below(n)] += 0.25;
        REQUIRE(weight_T_n(*model, y, later, j) < weight_T_n(*model, y, path, j));
      }
    }
  }
}

TEST_CASE("two iterated P draws match quadrature of the two-step kernel") {
  const auto lines = builtin_model("contracting-lines");
  const State x0 = make_state({0.3}, 1);
  const double lo = -1.5;
  const double hi = 2.5;
  const int bins = 20;
  auto bin_of = [&](double y) { return std::clamp(static_cast<int>((y - lo) / (hi - lo) * bins), 0, bins - 1); };

  // Quadrature: substitute u = 1 - exp(-lambda t), so lambda e^{-lambda t} dt = du.
  std::vector<double> exact(2 * bins, 0.0);
  const int grid = 400;
  const double lambda = lines.lambda();
  for (int a = 0; a < grid; ++a) {
    const double t1 = -std::log(1.0 - (a + 0.5) / grid) / lambda;
    for (int b = 0; b < grid; ++b) {
      const double t2 = -std::log(1.0 - (b + 0.5) / grid) / lambda;
      for (int j1 = 1; j1 <= 2; ++j1) {
        for (double th1 : {-1.0, 1.0}) {
          for (double th2 : {-1.0, 1.0}) {
            const PathSpec path{{x0.mode, j1}, {t1, t2}, {th1, th2}};
            const double y = compose_Wn(lines, x0.y, path)(0);
            const double pn = weight_P_n(lines, x0.y, path);
            for (int j = 1; j <= 2; ++j) {
              const double mass = pn * weight_Pi_n(lines, x0.y, path, j) / (grid * grid);
              exact[(j - 1) * bins + bin_of(y)] += mass;
            }
          }
        }
      }
    }
  }

  std::vector<double> empirical(2 * bins, 0.0);
  RngStream rng(11);
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    const State x = sample_P(lines, sample_P(lines, x0, rng), rng);
    empirical[(x.mode - 1) * bins + bin_of(x.y(0))] += 1.0 / n;
  }
  double l1 = 0.0;
  double total = 0.0;
  for (int k = 0; k < 2 * bins; ++k) {
    l1 += std::abs(exact[k] - empirical[k]);
    total += exact[k];
  }
  CHECK(std::abs(total - 1.0) < 1e-9);
  CHECK(l1 < 0.05);
}

TEST_CASE("P and W after G agree in law") {
  const auto lines = builtin_model("contracting-lines");
  RngStream rng(12);
  for (int rep = 0; rep < 3; ++rep) {
    const State x = make_state({rng.uniform(-2.0, 3.0)}, 1 + static_cast<int>(rng.below(2)));
    std::vector<State> p;
    std::vector<State> wg;
    for (int k = 0; k < 4000; ++k) {
      p.push_back(sample_P(lines, x, rng));
      wg.push_back(sample_W(lines, sample_G(lines, x, rng), rng));
    }
    const auto mp = EmpiricalMeasure::uniform(p);
    const double d = fm_distance(MetricConfig{}, mp, EmpiricalMeasure::uniform(wg));
    const double floor = half_split_noise_floor(MetricConfig{}, mp, 5, rng.split(rep));
    CHECK(d < 3.0 * floor);
  }
}
