#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "pdmp/cli.hpp"
#include "pdmp/diagnostics.hpp"
#include "pdmp/metrics.hpp"
#include "pdmp/operators.hpp"
#include "pdmp/simulate.hpp"

namespace py = pybind11;
using namespace pdmp;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

py::object to_py(const Json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

Json check_json(const CheckResult& c) {
  return Json{{"name", c.name}, {"verdict", to_string(c.verdict)}, {"evidence", c.evidence}, {"params", c.params}};
}

State make_init(const PdmpModel& model, const std::optional<Vector>& y0, int mode) {
  State x{y0 ? *y0 : Vector(Vector::Ones(model.dim())), mode};
  model.check_state(x);
  return x;
}

EmpiricalMeasure measure_from_arrays(const Array& y, const IntArray& modes, const std::optional<Array>& weights) {
  const auto yb = y.unchecked();
  if (y.ndim() != 2) throw PreconditionError("y must be a 2-D array of shape (n, d)");
  const auto n = static_cast<std::size_t>(y.shape(0));
  const auto d = static_cast<Eigen::Index>(y.shape(1));
  if (static_cast<std::size_t>(modes.size()) != n) throw PreconditionError("mode must have one entry per atom");
  if (weights && static_cast<std::size_t>(weights->size()) != n) {
    throw PreconditionError("weight must have one entry per atom");
  }
  std::vector<State> atoms(n);
  for (std::size_t a = 0; a < n; ++a) {
    atoms[a].y.resize(d);
    for (Eigen::Index k = 0; k < d; ++k) atoms[a].y(k) = yb(static_cast<py::ssize_t>(a), k);
    atoms[a].mode = modes.data()[a];
  }
  if (!weights) return EmpiricalMeasure::uniform(std::move(atoms));
  EmpiricalMeasure mu;
  for (std::size_t a = 0; a < n; ++a) mu.add(std::move(atoms[a]), weights->data()[a]);
  mu.validate();
  return mu;
}

Array measure_y(const EmpiricalMeasure& mu) {
  const auto d = static_cast<py::ssize_t>(std::max(mu.dim(), 1));
  Array out({static_cast<py::ssize_t>(mu.size()), d});
  auto w = out.mutable_unchecked<2>();
  for (std::size_t a = 0; a < mu.size(); ++a) {
    for (py::ssize_t k = 0; k < d; ++k) w(static_cast<py::ssize_t>(a), k) = mu.atoms()[a].y(k);
  }
  return out;
}

PathSpec make_path(std::vector<int> modes, std::vector<double> times, std::vector<double> thetas) {
  return PathSpec{std::move(modes), std::move(times), std::move(thetas)};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Simulation, metrics and diagnostics for piecewise-deterministic Markov processes";
  m.attr("__version__") = PDMP_VERSION;

  static py::exception<Error> base_error(m, "PdmpError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const PreconditionError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const Error& e) {
      py::set_error(base_error, e.what());
    }
  });

  m.def("model_names", &builtin_model_names);
  m.def(
      "model_params",
      [](const std::string& name) {
        py::dict out;
        for (const auto& spec : builtin_model_params(name)) {
          out[py::str(spec.key)] = std::visit([](const auto& v) { return py::cast(v); }, spec.default_value);
        }
        return out;
      },
      py::arg("name"), "Default parameters of a built-in family.");

  py::class_<PdmpModel>(m, "Model")
      .def(py::init([](const std::string& name, const std::map<std::string, std::variant<double, std::string>>& params) {
             return builtin_model(name, ModelParams(params.begin(), params.end()));
           }),
           py::arg("name"), py::arg("params") = std::map<std::string, std::variant<double, std::string>>{})
      .def_property_readonly("family", &PdmpModel::family)
      .def_property_readonly("params", &PdmpModel::params)
      .def_property_readonly("rate", &PdmpModel::lambda)
      .def_property_readonly("modes", &PdmpModel::modes)
      .def_property_readonly("dim", &PdmpModel::dim)
      .def(
          "flow", [](const PdmpModel& model, int mode, double t, const Vector& y) { return flow(model, mode, t, y); },
          py::arg("mode"), py::arg("t"), py::arg("y"))
      .def(
          "jump", [](const PdmpModel& model, double theta, const Vector& y) { return model.jumps().map(theta, y); },
          py::arg("theta"), py::arg("y"))
      .def("__repr__", [](const PdmpModel& model) {
        return "<pdmp_lab.Model '" + model.family() + "' dim=" + std::to_string(model.dim()) +
               " modes=" + std::to_string(model.modes()) + ">";
      });

  py::class_<EmpiricalMeasure>(m, "Measure")
      .def(py::init(&measure_from_arrays), py::arg("y"), py::arg("mode"), py::arg("weight") = py::none())
      .def_property_readonly("y", &measure_y)
      .def_property_readonly("mode",
                             [](const EmpiricalMeasure& mu) {
                               std::vector<int> modes;
                               for (const auto& x : mu.atoms()) modes.push_back(x.mode);
                               return IntArray(static_cast<py::ssize_t>(modes.size()), modes.data());
                             })
      .def_property_readonly("weight",
                             [](const EmpiricalMeasure& mu) {
                               return Array(static_cast<py::ssize_t>(mu.size()), mu.weights().data());
                             })
      .def_property_readonly("dim", &EmpiricalMeasure::dim)
      .def("__len__", &EmpiricalMeasure::size);

  m.def(
      "simulate",
      [](const PdmpModel& model, std::optional<Vector> y0, int mode, std::size_t n_traj, std::size_t n_steps,
         std::uint64_t seed, int workers) {
        const State init = make_init(model, y0, mode);
        std::vector<Trajectory> trajs;
        {
          py::gil_scoped_release release;
          trajs = simulate_many(model, init, n_traj, n_steps, RngStream(seed), workers);
        }
        const auto r = static_cast<py::ssize_t>(n_traj);
        const auto s = static_cast<py::ssize_t>(n_steps + 1);
        const auto d = static_cast<py::ssize_t>(model.dim());
        Array tau({r, s});
        Array y({r, s, d});
        IntArray modes({r, s});
        Array theta({r, s - 1});
        auto tw = tau.mutable_unchecked<2>();
        auto yw = y.mutable_unchecked<3>();
        auto mw = modes.mutable_unchecked<2>();
        auto thw = theta.mutable_unchecked<2>();
        for (py::ssize_t i = 0; i < r; ++i) {
          const auto& traj = trajs[static_cast<std::size_t>(i)];
          for (py::ssize_t n = 0; n < s; ++n) {
            const auto& x = traj.states[static_cast<std::size_t>(n)];
            tw(i, n) = traj.tau[static_cast<std::size_t>(n)];
            mw(i, n) = x.mode;
            for (py::ssize_t k = 0; k < d; ++k) yw(i, n, k) = x.y(k);
            if (n > 0) thw(i, n - 1) = traj.thetas[static_cast<std::size_t>(n - 1)];
          }
        }
        py::dict out;
        out["tau"] = tau;
        out["y"] = y;
        out["mode"] = modes;
        out["theta"] = theta;
        return out;
      },
      py::arg("model"), py::arg("y0") = py::none(), py::arg("mode") = 1, py::arg("n_traj") = 100,
      py::arg("n_steps") = 100, py::arg("seed") = 0, py::arg("workers") = 1,
      "Post-jump chains; returns arrays tau (r, n+1), y (r, n+1, d), mode (r, n+1) and theta (r, n).");

  m.def(
      "sample_invariant",
      [](const PdmpModel& model, std::optional<Vector> y0, int mode, std::size_t n_traj, std::size_t burn_in,
         std::size_t n_keep, std::size_t thin, std::uint64_t seed, int workers) {
        const State init = make_init(model, y0, mode);
        const InvariantSampling cfg{.n_traj = n_traj, .burn_in = burn_in, .n_keep = n_keep, .thin = thin,
                                    .workers = workers};
        py::gil_scoped_release release;
        return sample_invariant(model, init, cfg, RngStream(seed));
      },
      py::arg("model"), py::arg("y0") = py::none(), py::arg("mode") = 1, py::arg("n_traj") = 100,
      py::arg("burn_in") = 200, py::arg("n_keep") = 100, py::arg("thin") = 1, py::arg("seed") = 0,
      py::arg("workers") = 1);

  m.def(
      "fm_distance",
      [](const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double c) {
        py::gil_scoped_release release;
        return fm_distance(MetricConfig{c}, mu, nu);
      },
      py::arg("mu"), py::arg("nu"), py::arg("c") = 1.0);

  m.def(
      "pushforward",
      [](const std::string& op, const PdmpModel& model, const EmpiricalMeasure& mu, std::uint64_t seed, int workers) {
        const Operator which = parse_operator(op);
        py::gil_scoped_release release;
        return pushforward(which, model, mu, RngStream(seed), workers);
      },
      py::arg("op"), py::arg("model"), py::arg("mu"), py::arg("seed") = 0, py::arg("workers") = 1,
      "One draw of P, G or W per atom.");

  m.def(
      "fit_rate",
      [](const PdmpModel& model, const EmpiricalMeasure& mu_star, std::optional<Vector> y0, int mode, int n_max,
         std::size_t n_rep, std::size_t n_boot, double c, std::uint64_t seed, int workers) {
        const State init = make_init(model, y0, mode);
        RateFit fit;
        {
          py::gil_scoped_release release;
          fit = fit_rate(MetricConfig{c}, model, init, mu_star,
                         RateOptions{.n_max = n_max, .n_rep = n_rep, .n_boot = n_boot, .workers = workers},
                         RngStream(seed));
        }
        py::list table;
        for (const auto& row : fit.table) {
          table.append(py::dict(py::arg("n") = row.n, py::arg("d_n") = row.d_n,
                                py::arg("noise_floor") = row.noise_floor, py::arg("used") = row.used));
        }
        return py::dict(py::arg("beta") = fit.beta, py::arg("C") = fit.C, py::arg("residual") = fit.residual,
                        py::arg("n_lo") = fit.n_lo, py::arg("n_hi") = fit.n_hi, py::arg("c") = fit.c,
                        py::arg("noise_floor") = fit.noise_floor, py::arg("table") = table);
      },
      py::arg("model"), py::arg("mu_star"), py::arg("y0") = py::none(), py::arg("mode") = 1, py::arg("n_max") = 10,
      py::arg("n_rep") = 10000, py::arg("n_boot") = 5, py::arg("c") = 1.0, py::arg("seed") = 0,
      py::arg("workers") = 1);

  m.def(
      "check_correspondence",
      [](const PdmpModel& model, const EmpiricalMeasure& mu_hat, double c, std::size_t n_boot, std::uint64_t seed,
         int workers) {
        CorrespondenceReport r;
        {
          py::gil_scoped_release release;
          r = check_correspondence(model, mu_hat, RngStream(seed), MetricConfig{c}, n_boot, workers);
        }
        return py::dict(py::arg("d_WG") = r.d_WG, py::arg("d_null") = r.d_null, py::arg("n_atoms") = r.n_atoms,
                        py::arg("n_boot") = r.n_boot, py::arg("c") = r.c);
      },
      py::arg("model"), py::arg("mu_hat"), py::arg("c") = 1.0, py::arg("n_boot") = 5, py::arg("seed") = 0,
      py::arg("workers") = 1);

  m.def(
      "compose_Wn",
      [](const PdmpModel& model, const Vector& y, std::vector<int> modes, std::vector<double> times,
         std::vector<double> thetas) { return compose_Wn(model, y, make_path(modes, times, thetas)); },
      py::arg("model"), py::arg("y"), py::arg("modes"), py::arg("times"), py::arg("thetas"));
  m.def(
      "weight_T_n",
      [](const PdmpModel& model, const Vector& y, std::vector<int> modes, std::vector<double> times,
         std::vector<double> thetas, int j_final) {
        return weight_T_n(model, y, make_path(modes, times, thetas), j_final);
      },
      py::arg("model"), py::arg("y"), py::arg("modes"), py::arg("times"), py::arg("thetas"), py::arg("j_final"));

  m.def(
      "check_rank",
      [](const PdmpModel& model, const Vector& y_hat, int mode, std::vector<int> modes, std::vector<double> times,
         std::vector<double> thetas, double fd_step, double svd_rtol, const std::string& method) {
        const RankProbe probe{.y_hat = y_hat, .mode = mode, .path = make_path(modes, times, thetas),
                              .fd_step = fd_step, .svd_rtol = svd_rtol};
        JacobianMethod how = JacobianMethod::Auto;
        if (method == "fd") how = JacobianMethod::FiniteDifference;
        else if (method == "analytic") how = JacobianMethod::Analytic;
        else if (method != "auto") throw PreconditionError("method must be auto, fd or analytic");
        const auto report = check_rank(model, probe, how);
        py::dict out = to_py(check_json(to_check(probe, report)));
        out["jacobian"] = report.jacobian.matrix;
        return out;
      },
      py::arg("model"), py::arg("y_hat"), py::arg("mode"), py::arg("modes"), py::arg("times"), py::arg("thetas"),
      py::arg("fd_step") = 0.0, py::arg("svd_rtol") = 1e-8, py::arg("method") = "auto");

  m.def(
      "check_positivity",
      [](const PdmpModel& model, const Vector& y_hat, int mode, std::vector<int> modes, std::vector<double> times,
         std::vector<double> thetas) {
        const RankProbe probe{.y_hat = y_hat, .mode = mode, .path = make_path(modes, times, thetas)};
        return to_py(check_json(to_check(probe, check_positivity(model, probe))));
      },
      py::arg("model"), py::arg("y_hat"), py::arg("mode"), py::arg("modes"), py::arg("times"), py::arg("thetas"));

  m.def(
      "check_hypotheses",
      [](const PdmpModel& model, std::size_t n_pairs, std::uint64_t seed, int workers,
         const std::map<std::string, double>& overrides) {
        auto constants = builtin_constants(model);
        for (const auto& [key, value] : overrides) {
          if (key == "alpha") constants.alpha = value;
          else if (key == "L") constants.L = value;
          else if (key == "L_w") constants.L_w = value;
          else if (key == "L_p") constants.L_p = value;
          else if (key == "c_pi") constants.c_pi = value;
          else if (key == "c_p") constants.c_p = value;
          else throw PreconditionError("unknown constant '" + key + "' (alpha, L, L_w, L_p, c_pi, c_p)");
        }
        HypothesisConfig cfg;
        cfg.workers = workers;
        DiagnosticsReport report;
        {
          py::gil_scoped_release release;
          report = check_hypotheses(model, constants, n_pairs, RngStream(seed), cfg);
        }
        return to_py(report.to_json());
      },
      py::arg("model"), py::arg("n_pairs") = 100000, py::arg("seed") = 0, py::arg("workers") = 1,
      py::arg("constants") = std::map<std::string, double>{});

  m.def(
      "suggest_anchors",
      [](const PdmpModel& model) {
        py::list out;
        for (const auto& a : suggest_anchors(model)) {
          out.append(py::dict(py::arg("y_hat") = a.y_hat, py::arg("mode") = a.mode,
                              py::arg("provenance") = a.provenance, py::arg("theta") = a.theta,
                              py::arg("contraction") = a.contraction));
        }
        return out;
      },
      py::arg("model"));

  m.def(
      "classify_continuity",
      [](const EmpiricalMeasure& mu, double atom_eps, int bins) {
        return to_py(check_json(to_check(classify_continuity(mu, atom_eps, GridConfig{bins}))));
      },
      py::arg("mu"), py::arg("atom_eps") = 0.0, py::arg("bins") = 50);

  m.def(
      "run_cli",
      [](const std::string& subcommand, const std::string& config, std::optional<std::string> out_dir,
         std::optional<std::uint64_t> seed, std::optional<std::string> format, std::optional<int> workers,
         std::optional<std::string> check, std::vector<std::string> inputs) {
        RunOptions opts{.config_path = config, .seed = seed, .out_dir = std::move(out_dir),
                        .format = std::move(format), .workers = workers, .check = std::move(check),
                        .inputs = std::move(inputs)};
        std::ostringstream out;
        std::ostringstream err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = run(subcommand, opts, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("subcommand"), py::arg("config") = "", py::arg("out") = py::none(), py::arg("seed") = py::none(),
      py::arg("format") = py::none(), py::arg("workers") = py::none(), py::arg("check") = py::none(),
      py::arg("inputs") = std::vector<std::string>{},
      "Runs a pdmp-lab subcommand in-process; returns (exit_code, stdout, stderr).");
}
