#include "pdmp/io.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

namespace pdmp {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    fields.push_back(field);
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_number(const std::string& text, std::size_t line) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw PreconditionError(fmt::format("measure CSV line {}: '{}' is not a number", line, text));
  }
  return value;
}

}  // namespace

std::string format_double(double x) { return fmt::format("{:.17g}", x); }

void write_trajectories_csv(std::ostream& out, const std::vector<Trajectory>& trajectories) {
  const auto d = trajectories.empty() || trajectories.front().states.empty() ? 1 : trajectories.front().states[0].y.size();
  out << "traj_id,n,tau";
  for (Eigen::Index k = 1; k <= d; ++k) out << ",y_" << k;
  out << ",mode,theta\n";
  for (std::size_t r = 0; r < trajectories.size(); ++r) {
    const auto& traj = trajectories[r];
    for (std::size_t n = 0; n < traj.states.size(); ++n) {
      out << r << ',' << n << ',' << format_double(traj.tau[n]);
      for (Eigen::Index k = 0; k < d; ++k) out << ',' << format_double(traj.states[n].y(k));
      out << ',' << traj.states[n].mode << ',';
      if (n > 0) out << format_double(traj.thetas[n - 1]);
      out << '\n';
    }
  }
}

Json trajectories_json(const std::vector<Trajectory>& trajectories) {
  Json list = Json::array();
  for (std::size_t r = 0; r < trajectories.size(); ++r) {
    const auto& traj = trajectories[r];
    Json states = Json::array();
    Json modes = Json::array();
    for (const auto& x : traj.states) {
      states.push_back(to_json(x.y));
      modes.push_back(x.mode);
    }
    list.push_back(Json{{"traj_id", r}, {"seed", traj.seed},     {"stream", traj.stream}, {"tau", traj.tau},
                        {"y", std::move(states)}, {"mode", std::move(modes)}, {"theta", traj.thetas}});
  }
  return list;
}

void write_measure_csv(std::ostream& out, const EmpiricalMeasure& mu) {
  const int d = std::max(mu.dim(), 1);
  for (int k = 1; k <= d; ++k) out << "y_" << k << ',';
  out << "mode,weight\n";
  for (std::size_t a = 0; a < mu.size(); ++a) {
    for (int k = 0; k < d; ++k) out << format_double(mu.atoms()[a].y(k)) << ',';
    out << mu.atoms()[a].mode << ',' << format_double(mu.weights()[a]) << '\n';
  }
}

Json measure_json(const EmpiricalMeasure& mu) {
  Json y = Json::array();
  Json modes = Json::array();
  for (const auto& x : mu.atoms()) {
    y.push_back(to_json(x.y));
    modes.push_back(x.mode);
  }
  return Json{{"dim", mu.dim()}, {"size", mu.size()}, {"y", std::move(y)}, {"mode", std::move(modes)},
              {"weight", mu.weights()}};
}

EmpiricalMeasure read_measure_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw PreconditionError("measure CSV is empty (expected a header line)");
  const auto header = split_csv_line(line);
  std::vector<std::size_t> y_cols;
  std::size_t mode_col = header.size();
  std::size_t weight_col = header.size();
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == fmt::format("y_{}", y_cols.size() + 1)) {
      y_cols.push_back(c);
    } else if (header[c] == "mode") {
      mode_col = c;
    } else if (header[c] == "weight") {
      weight_col = c;
    }
  }
  if (y_cols.empty() || mode_col == header.size()) {
    throw PreconditionError("measure CSV line 1: header needs columns y_1..y_d and mode");
  }
  if (static_cast<int>(y_cols.size()) > kMaxDim) {
    throw PreconditionError(fmt::format("measure CSV line 1: at most {} coordinates supported", kMaxDim));
  }

  EmpiricalMeasure mu;
  std::size_t line_no = 1;
  std::vector<State> atoms;
  std::vector<double> weights;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw PreconditionError(fmt::format("measure CSV line {}: expected {} fields, found {}", line_no,
                                          header.size(), fields.size()));
    }
    State x;
    x.y.resize(static_cast<Eigen::Index>(y_cols.size()));
    for (std::size_t k = 0; k < y_cols.size(); ++k) x.y(static_cast<Eigen::Index>(k)) = parse_number(fields[y_cols[k]], line_no);
    const double mode = parse_number(fields[mode_col], line_no);
    if (mode != std::floor(mode) || mode < 1) {
      throw PreconditionError(fmt::format("measure CSV line {}: mode must be a positive integer", line_no));
    }
    x.mode = static_cast<int>(mode);
    atoms.push_back(std::move(x));
    weights.push_back(weight_col < header.size() ? parse_number(fields[weight_col], line_no) : 1.0);
  }
  if (atoms.empty()) throw PreconditionError("measure CSV has no atoms");
  if (weight_col == header.size()) return EmpiricalMeasure::uniform(std::move(atoms));
  for (std::size_t a = 0; a < atoms.size(); ++a) mu.add(std::move(atoms[a]), weights[a]);
  mu.validate();
  return mu;
}

EmpiricalMeasure read_measure_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PreconditionError(fmt::format("cannot open measure file '{}'", path.string()));
  try {
    return read_measure_csv(in);
  } catch (const PreconditionError& e) {
    throw PreconditionError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_histogram_csv(std::ostream& out, const std::vector<HistogramBin>& bins) {
  out << "mode,bin_lo,bin_hi,mass\n";
  for (const auto& b : bins) {
    out << b.mode << ',' << format_double(b.lo) << ',' << format_double(b.hi) << ',' << format_double(b.mass) << '\n';
  }
}

void write_rate_csv(std::ostream& out, const RateFit& fit) {
  out << "n,d_n,noise_floor,used\n";
  for (const auto& row : fit.table) {
    out << row.n << ',' << format_double(row.d_n) << ',' << format_double(row.noise_floor) << ','
        << (row.used ? 1 : 0) << '\n';
  }
}

Json rate_json(const RateFit& fit) {
  Json rows = Json::array();
  for (const auto& row : fit.table) {
    rows.push_back(Json{{"n", row.n}, {"d_n", row.d_n}, {"noise_floor", row.noise_floor}, {"used", row.used}});
  }
  return Json{{"beta", fit.beta},   {"C", fit.C},         {"residual", fit.residual},
              {"n_lo", fit.n_lo},   {"n_hi", fit.n_hi},   {"c", fit.c},
              {"noise_floor", fit.noise_floor}, {"table", std::move(rows)}};
}

Json correspondence_json(const CorrespondenceReport& report) {
  return Json{{"d_WG", report.d_WG}, {"d_null", report.d_null}, {"n_atoms", report.n_atoms},
              {"n_boot", report.n_boot}, {"c", report.c}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  out << text;
  if (!out) throw Error(fmt::format("write to '{}' failed", path.string()));
}

}  // namespace pdmp
