#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "pdmp/diagnostics.hpp"
#include "pdmp/measure.hpp"
#include "pdmp/metrics.hpp"
#include "pdmp/operators.hpp"
#include "pdmp/simulate.hpp"

namespace pdmp {

/// Round-trip text for a double ("{:.17g}").
std::string format_double(double x);

/// Columns: traj_id, n, tau, y_1..y_d, mode, theta (theta empty at n = 0).
void write_trajectories_csv(std::ostream& out, const std::vector<Trajectory>& trajectories);
Json trajectories_json(const std::vector<Trajectory>& trajectories);

/// Columns: y_1..y_d, mode, weight.
void write_measure_csv(std::ostream& out, const EmpiricalMeasure& mu);
Json measure_json(const EmpiricalMeasure& mu);

/// Reads the measure CSV layout (header required). Without a weight column
/// atoms get equal weights. Throws PreconditionError with the line number on
/// malformed input.
EmpiricalMeasure read_measure_csv(std::istream& in);
EmpiricalMeasure read_measure_file(const std::filesystem::path& path);

/// Columns: mode, bin_lo, bin_hi, mass.
void write_histogram_csv(std::ostream& out, const std::vector<HistogramBin>& bins);

/// Columns: n, d_n, noise_floor, used.
void write_rate_csv(std::ostream& out, const RateFit& fit);
Json rate_json(const RateFit& fit);

Json correspondence_json(const CorrespondenceReport& report);

/// Writes `text` to `path`, creating parent directories.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace pdmp
