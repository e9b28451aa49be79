#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pdmp {

enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitUsage = 2 };

/// Command-line overrides; unset fields keep the config values.
struct RunOptions {
  std::string config_path;  // required except for fm-distance
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> format;  // csv | json
  std::optional<int> workers;
  std::optional<std::string> check;   // restricts diagnose to one check
  std::vector<std::string> inputs;    // fm-distance: two measure files
};

std::vector<std::string> subcommands();

/// Runs one subcommand (simulate, invariant, fm-distance, rate, diagnose,
/// correspond). Artifacts and manifest.json go to the output directory; a
/// short summary goes to `out`, problems to `err`. Returns 0 on success, 1
/// when a check fails or a computation cannot complete, 2 on usage errors.
int run(const std::string& subcommand, const RunOptions& options, std::ostream& out, std::ostream& err);

/// Records a command line that could not be parsed: writes a usage-error
/// manifest to the requested output directory (default "out") and returns 2.
int report_usage_error(const std::string& subcommand, const RunOptions& options, const std::string& message,
                       std::ostream& err);

}  // namespace pdmp
