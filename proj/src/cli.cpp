#include "pdmp/cli.hpp"

#include <filesystem>
#include <ostream>
#include <sstream>

#include <Eigen/Core>
#include <fmt/format.h>

#include "pdmp/config.hpp"
#include "pdmp/diagnostics.hpp"
#include "pdmp/io.hpp"

namespace pdmp {

namespace fs = std::filesystem;

namespace {

// Stream ids derived from the seed, one per pipeline stage.
enum Stage : std::uint64_t {
  kSimulate = 1,
  kInvariant = 2,
  kRateReference = 3,
  kRate = 4,
  kCorrespondSample = 5,
  kCorrespond = 6,
  kAccessibility = 7,
  kHypotheses = 8,
  kSmallSet = 9,
};

struct Session {
  const ExperimentConfig* config = nullptr;
  fs::path dir;
  std::vector<std::string> outputs;
  std::ostream* out = nullptr;

  void write(const std::string& name, const std::string& text) {
    write_text(dir / name, text);
    outputs.push_back(name);
  }
  void write_json(const std::string& name, const Json& j) { write(name, j.dump(2) + "\n"); }
};

State initial_state(const ExperimentConfig& c, const PdmpModel& model) {
  State x;
  if (c.init.empty()) {
    x.y = Vector::Ones(model.dim());
  } else {
    if (static_cast<int>(c.init.size()) != model.dim()) {
      throw PreconditionError(fmt::format("simulation.init has {} coordinates but model '{}' has dimension {}",
                                          c.init.size(), model.family(), model.dim()));
    }
    x.y.resize(model.dim());
    for (int k = 0; k < model.dim(); ++k) x.y(k) = c.init[static_cast<std::size_t>(k)];
  }
  x.mode = c.init_mode;
  model.check_state(x);
  return x;
}

InvariantSampling sampling(const ExperimentConfig& c) {
  return InvariantSampling{.n_traj = c.n_traj, .burn_in = c.burn_in, .n_keep = c.n_keep, .thin = c.thin,
                           .workers = c.workers};
}

int cmd_simulate(Session& s, const PdmpModel& model) {
  const auto& c = *s.config;
  const auto trajs = simulate_many(model, initial_state(c, model), c.n_traj, c.n_steps, RngStream(c.seed).split(kSimulate),
                                   c.workers);
  if (c.format == "csv") {
    std::ostringstream csv;
    write_trajectories_csv(csv, trajs);
    s.write("trajectories.csv", csv.str());
  } else {
    s.write_json("trajectories.json", trajectories_json(trajs));
  }
  *s.out << fmt::format("simulated {} trajectories of {} steps\n", c.n_traj, c.n_steps);
  return kExitOk;
}

int cmd_invariant(Session& s, const PdmpModel& model) {
  const auto& c = *s.config;
  const auto mu = sample_invariant(model, initial_state(c, model), sampling(c), RngStream(c.seed).split(kInvariant));
  if (c.format == "csv") {
    std::ostringstream csv;
    write_measure_csv(csv, mu);
    s.write("measure.csv", csv.str());
  } else {
    s.write_json("measure.json", measure_json(mu));
  }
  const auto report = classify_continuity(mu);
  std::ostringstream hist;
  write_histogram_csv(hist, report.histogram);
  s.write("histogram.csv", hist.str());
  const auto check = to_check(report);
  s.write_json("continuity.json", Json{{"verdict", report.verdict},
                                       {"atom_fraction", report.atom_fraction},
                                       {"n_atoms", mu.size()},
                                       {"evidence", check.evidence},
                                       {"params", check.params}});
  *s.out << fmt::format("invariant sample: {} atoms, atom_fraction {:.6g}, verdict {}\n", mu.size(),
                        report.atom_fraction, report.verdict);
  return kExitOk;
}

int cmd_fm_distance(Session& s, const RunOptions& opts) {
  if (opts.inputs.size() != 2) {
    throw PreconditionError(fmt::format("fm-distance needs exactly two measure files (got {})", opts.inputs.size()));
  }
  const auto mu = read_measure_file(opts.inputs[0]);
  const auto nu = read_measure_file(opts.inputs[1]);
  const MetricConfig metric{s.config->c};
  const double d = fm_distance(metric, mu, nu);
  s.write_json("fm_distance.json", Json{{"d_fm", d}, {"c", metric.c}, {"mu", opts.inputs[0]}, {"nu", opts.inputs[1]},
                                        {"n_mu", mu.size()}, {"n_nu", nu.size()}});
  *s.out << format_double(d) << "\n";
  return kExitOk;
}

int cmd_rate(Session& s, const PdmpModel& model) {
  const auto& c = *s.config;
  const RngStream root(c.seed);
  const State init = initial_state(c, model);
  const auto mu_star = sample_invariant(model, init, sampling(c), root.split(kRateReference));
  const RateOptions ro{.n_max = c.rate_n_max, .n_rep = c.rate_n_rep, .n_boot = c.rate_n_boot, .workers = c.workers};
  const auto fit = fit_rate(MetricConfig{c.c}, model, init, mu_star, ro, root.split(kRate));
  if (c.format == "csv") {
    std::ostringstream csv;
    write_rate_csv(csv, fit);
    s.write("rate.csv", csv.str());
  }
  s.write_json("rate_fit.json", rate_json(fit));
  *s.out << fmt::format("beta = {:.6g} (C = {:.6g}, fitted on n = {}..{})\n", fit.beta, fit.C, fit.n_lo, fit.n_hi);
  return kExitOk;
}

int cmd_correspond(Session& s, const PdmpModel& model) {
  const auto& c = *s.config;
  const RngStream root(c.seed);
  const auto mu_hat = sample_invariant(model, initial_state(c, model), sampling(c), root.split(kCorrespondSample));
  const auto report = check_correspondence(model, mu_hat, root.split(kCorrespond), MetricConfig{c.c},
                                           c.correspond_n_boot, c.workers);
  const bool pass = report.d_WG < 1e-12 || report.d_WG <= 3.0 * report.d_null;
  auto j = correspondence_json(report);
  j["criterion"] = "d_WG <= 3 d_null";
  j["pass"] = pass;
  s.write_json("correspondence.json", j);
  *s.out << fmt::format("d_WG = {:.6g}, d_null = {:.6g}: {}\n", report.d_WG, report.d_null, pass ? "pass" : "fail");
  return pass ? kExitOk : kExitCheckFailed;
}

Vector to_vector(const std::vector<double>& xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  for (std::size_t k = 0; k < xs.size(); ++k) v(static_cast<Eigen::Index>(k)) = xs[k];
  return v;
}

int to_mode(double x, const char* what) {
  if (x != std::floor(x) || x < 1) throw PreconditionError(fmt::format("{} must hold positive integers", what));
  return static_cast<int>(x);
}

int cmd_diagnose(Session& s, const PdmpModel& model, const std::optional<std::string>& only) {
  const auto& c = *s.config;
  const RngStream root(c.seed);
  std::vector<std::string> checks = c.checks;
  if (only) {
    const std::vector<std::string> known{"rank", "positivity", "accessibility", "small-set", "hypotheses", "anchors"};
    if (std::find(known.begin(), known.end(), *only) == known.end()) {
      throw PreconditionError(fmt::format("unknown check '{}' (known: {})", *only, fmt::join(known, ", ")));
    }
    checks = {*only};
  }
  auto wants = [&](const char* name) { return std::find(checks.begin(), checks.end(), name) != checks.end(); };

  // Anchor: configured, or the first suggestion for the configured mode.
  Vector y_hat;
  int mode = c.anchor_mode;
  std::optional<double> anchor_theta;
  const auto anchors = suggest_anchors(model);
  if (!c.y_hat.empty()) {
    y_hat = to_vector(c.y_hat);
  } else {
    const auto it = std::find_if(anchors.begin(), anchors.end(), [&](const auto& a) { return a.mode == mode; });
    if (it == anchors.end()) {
      throw PreconditionError("no anchor candidate found for the configured mode; set diagnose.y_hat");
    }
    y_hat = it->y_hat;
    anchor_theta = it->theta;
  }
  if (y_hat.size() != model.dim()) {
    throw PreconditionError(fmt::format("diagnose.y_hat has {} coordinates, model has {}", y_hat.size(), model.dim()));
  }

  RankProbe probe{.y_hat = y_hat, .mode = mode, .fd_step = c.fd_step, .svd_rtol = c.svd_rtol};
  if (c.path_times.empty()) {
    const double theta = anchor_theta.value_or(model.theta().grid(1).front());
    for (int k = 0; k < model.dim(); ++k) {
      probe.path.modes.push_back(mode);
      probe.path.times.push_back(0.1);
      probe.path.thetas.push_back(theta);
    }
  } else {
    for (double m : c.path_modes) probe.path.modes.push_back(to_mode(m, "diagnose.path_modes"));
    probe.path.times = c.path_times;
    probe.path.thetas = c.path_thetas;
  }

  DiagnosticsReport report;
  if (wants("anchors")) {
    CheckResult a;
    a.name = "anchors";
    a.verdict = anchors.empty() ? Verdict::Inconclusive : Verdict::Pass;
    Json list = Json::array();
    for (const auto& cand : anchors) {
      list.push_back(Json{{"y_hat", to_json(cand.y_hat)}, {"mode", cand.mode}, {"provenance", cand.provenance},
                          {"theta", cand.theta}, {"flow_mode", cand.flow_mode}, {"z", to_json(cand.z)},
                          {"contraction", cand.contraction}});
    }
    a.evidence = Json{{"count", anchors.size()}, {"candidates", std::move(list)}};
    report.add(std::move(a));
  }
  if (wants("rank")) report.add(to_check(probe, check_rank(model, probe)));
  if (wants("positivity")) report.add(to_check(probe, check_positivity(model, probe)));
  if (wants("accessibility")) {
    std::vector<State> starts;
    if (c.starts.empty()) {
      for (int m = 1; m <= model.modes(); ++m) {
        for (double x : {-5.0, 0.0, 5.0}) starts.push_back(State{Vector::Constant(model.dim(), x), m});
      }
    } else {
      const auto d = static_cast<std::size_t>(model.dim());
      if (c.starts.size() % d != 0 || c.starts.size() / d != c.start_modes.size()) {
        throw PreconditionError("diagnose.starts must hold d coordinates per entry of diagnose.start_modes");
      }
      for (std::size_t k = 0; k < c.start_modes.size(); ++k) {
        State x{Vector(model.dim()), to_mode(c.start_modes[k], "diagnose.start_modes")};
        for (std::size_t q = 0; q < d; ++q) x.y(static_cast<Eigen::Index>(q)) = c.starts[k * d + q];
        starts.push_back(std::move(x));
      }
    }
    AccessibilitySearch search;
    search.n_max = c.access_n_max;
    search.attempts_per_n = c.access_attempts;
    search.t_max = c.access_t_max;
    report.add(to_check(probe_accessibility(model, y_hat, mode, c.radius, starts, search, root.split(kAccessibility))));
  }
  if (wants("small-set")) {
    SmallSetConfig sc;
    sc.workers = c.workers;
    report.add(to_check(y_hat, mode,
                        estimate_small_set(model, y_hat, mode, c.small_set_n, c.small_set_n_mc, root.split(kSmallSet), sc)));
  }
  if (wants("hypotheses")) {
    auto constants = builtin_constants(model);
    if (c.alpha) constants.alpha = c.alpha;
    if (c.L) constants.L = c.L;
    if (c.L_w) constants.L_w = c.L_w;
    if (c.L_p) constants.L_p = c.L_p;
    if (c.c_pi) constants.c_pi = c.c_pi;
    if (c.c_p) constants.c_p = c.c_p;
    HypothesisConfig hc;
    hc.workers = c.workers;
    for (auto& check : check_hypotheses(model, constants, c.n_pairs, root.split(kHypotheses), hc).checks) {
      report.add(std::move(check));
    }
  }

  s.write_json("diagnostics.json", report.to_json());
  for (const auto& check : report.checks) {
    std::string detail;
    if (check.name == "rank") detail = fmt::format(", rank {}", check.evidence["rank"].get<int>());
    *s.out << fmt::format("{}: {}{}\n", check.name, to_string(check.verdict), detail);
  }
  *s.out << fmt::format("overall: {}\n", to_string(report.overall()));
  return report.overall() == Verdict::Fail ? kExitCheckFailed : kExitOk;
}

Json build_info() {
  return Json{{"compiler", __VERSION__},
              {"cxx_standard", static_cast<long>(__cplusplus)},
              {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
              {"fmt", FMT_VERSION},
              {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                                            NLOHMANN_JSON_VERSION_PATCH)}};
}

Json manifest_base(const std::string& subcommand, const RunOptions& options, const std::string& status, int code,
                   const std::string& message) {
  return Json{{"tool", "pdmp-lab"},
              {"version", PDMP_VERSION},
              {"subcommand", subcommand},
              {"status", status},
              {"exit_code", code},
              {"message", message},
              {"seed", nullptr},
              {"workers", nullptr},
              {"format", nullptr},
              {"config_path", options.config_path},
              {"config", nullptr},
              {"inputs", options.inputs},
              {"outputs", Json::array()},
              {"build", nullptr}};
}

bool write_manifest(const fs::path& dir, const Json& manifest, std::ostream& err) {
  try {
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    return true;
  } catch (const std::exception& e) {
    err << "error: cannot write manifest: " << e.what() << "\n";
    return false;
  }
}

}  // namespace

std::vector<std::string> subcommands() {
  return {"simulate", "invariant", "fm-distance", "rate", "diagnose", "correspond"};
}

int run(const std::string& subcommand, const RunOptions& options, std::ostream& out, std::ostream& err) {
  ExperimentConfig config;
  bool have_config = false;
  Session session;
  session.out = &out;
  session.config = &config;
  int code = kExitOk;
  std::string status;
  std::string message;

  auto finish_dir = [&] { session.dir = options.out_dir.value_or(have_config ? config.out_dir : std::string("out")); };

  try {
    const auto known = subcommands();
    if (std::find(known.begin(), known.end(), subcommand) == known.end()) {
      throw PreconditionError(fmt::format("unknown subcommand '{}' (known: {})", subcommand, fmt::join(known, ", ")));
    }
    if (!options.config_path.empty()) {
      config = load_config(options.config_path);
      have_config = true;
    } else if (subcommand != "fm-distance") {
      throw PreconditionError(fmt::format("{} needs --config PATH", subcommand));
    }
    if (options.seed) config.seed = *options.seed;
    if (options.out_dir) config.out_dir = *options.out_dir;
    if (options.format) {
      if (*options.format != "csv" && *options.format != "json") {
        throw PreconditionError(fmt::format("--format must be csv or json (got '{}')", *options.format));
      }
      config.format = *options.format;
    }
    if (options.workers) {
      if (*options.workers < 1) throw PreconditionError("--workers must be >= 1");
      config.workers = *options.workers;
    }
    finish_dir();
    fs::create_directories(session.dir);

    if (subcommand == "fm-distance") {
      code = cmd_fm_distance(session, options);
    } else {
      const PdmpModel model = make_model(config);
      if (subcommand == "simulate") code = cmd_simulate(session, model);
      if (subcommand == "invariant") code = cmd_invariant(session, model);
      if (subcommand == "rate") code = cmd_rate(session, model);
      if (subcommand == "correspond") code = cmd_correspond(session, model);
      if (subcommand == "diagnose") code = cmd_diagnose(session, model, options.check);
    }
  } catch (const PreconditionError& e) {
    code = kExitUsage;
    status = "usage-error";
    message = e.what();
    if (const auto* ce = dynamic_cast<const ConfigError*>(&e)) {
      err << "error: invalid config '" << options.config_path << "':\n" << message << "\n";
      const auto& issues = ce->issues();
      if (std::any_of(issues.begin(), issues.end(), [](const auto& i) { return i.line > 0; })) {
        err << "hint: fix the listed lines of the config file\n";
      }
    } else {
      err << "error: " << message << "\n";
    }
  } catch (const Error& e) {
    code = kExitCheckFailed;
    status = "error";
    message = e.what();
    err << "error: " << message << "\n";
    err << "hint: adjust the sample sizes or model parameters in the config and re-run\n";
  } catch (const std::exception& e) {
    code = kExitCheckFailed;
    status = "error";
    message = e.what();
    err << "error: " << message << "\n";
  }

  if (status.empty()) status = code == kExitOk ? "ok" : "check-failed";
  if (session.dir.empty()) finish_dir();
  Json manifest = manifest_base(subcommand, options, status, code, message);
  manifest["seed"] = have_config ? Json(config.seed) : Json(nullptr);
  manifest["workers"] = config.workers;
  manifest["format"] = config.format;
  manifest["config"] = have_config ? Json(render(config)) : Json(nullptr);
  manifest["outputs"] = session.outputs;
  manifest["build"] = build_info();
  if (!write_manifest(session.dir, manifest, err) && code == kExitOk) code = kExitCheckFailed;
  return code;
}

int report_usage_error(const std::string& subcommand, const RunOptions& options, const std::string& message,
                       std::ostream& err) {
  Json manifest = manifest_base(subcommand, options, "usage-error", kExitUsage, message);
  manifest["build"] = build_info();
  write_manifest(options.out_dir.value_or("out"), manifest, err);
  return kExitUsage;
}

}  // namespace pdmp
