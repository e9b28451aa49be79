#include <iostream>

#include "CLI11.hpp"
#include "pdmp/cli.hpp"

namespace {

const char* describe(const std::string& sub) {
  if (sub == "simulate") return "Simulate post-jump trajectories (trajectories CSV)";
  if (sub == "invariant") return "Sample the invariant measure and classify its continuity";
  if (sub == "fm-distance") return "Fortet-Mourier distance between two measure files";
  if (sub == "rate") return "Fit the geometric convergence rate";
  if (sub == "diagnose") return "Rank, positivity, accessibility, small-set and hypothesis checks";
  return "Check that W G preserves the sampled invariant measure";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pdmp-lab: simulation and diagnostics for piecewise-deterministic Markov processes"};
  app.require_subcommand(1);
  pdmp::RunOptions options;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string format;
  int workers = 1;
  std::string check;

  for (const auto& name : pdmp::subcommands()) {
    auto* sub = app.add_subcommand(name, describe(name));
    sub->add_option("--config", options.config_path, "Experiment config file");
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
    if (name == "diagnose") sub->add_option("--check", check, "Run a single check");
    if (name == "fm-distance") sub->add_option("inputs", options.inputs, "Two measure CSV files")->expected(2);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    const auto parsed = app.get_subcommands();
    const std::string name = parsed.empty() ? std::string() : parsed.front()->get_name();
    if (!parsed.empty() && parsed.front()->count("--out") > 0) options.out_dir = out_dir;
    return pdmp::report_usage_error(name, options, e.what(), std::cerr);
  }

  auto* sub = app.get_subcommands().front();
  if (sub->count("--seed") > 0) options.seed = seed;
  if (sub->count("--out") > 0) options.out_dir = out_dir;
  if (sub->count("--format") > 0) options.format = format;
  if (sub->count("--workers") > 0) options.workers = workers;
  if (sub->get_option_no_throw("--check") != nullptr && sub->count("--check") > 0) options.check = check;
  return pdmp::run(sub->get_name(), options, std::cout, std::cerr);
}
