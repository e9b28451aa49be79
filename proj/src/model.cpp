#include "pdmp/model.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace pdmp {

ThetaSpace ThetaSpace::finite(std::vector<double> labels, std::vector<double> weights) {
  if (labels.empty()) throw PreconditionError("finite Theta needs at least one label");
  if (weights.empty()) weights.assign(labels.size(), 1.0);
  if (weights.size() != labels.size()) {
    throw PreconditionError("finite Theta: label and weight counts differ");
  }
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw PreconditionError("finite Theta: base weights must be strictly positive");
    }
  }
  ThetaSpace space;
  space.finite_ = true;
  space.labels_ = std::move(labels);
  space.weights_ = std::move(weights);
  return space;
}

ThetaSpace ThetaSpace::interval(double lo, double hi, Density base_density, double density_bound) {
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw PreconditionError("interval Theta requires finite lo < hi");
  }
  if (!(density_bound > 0.0)) {
    throw PreconditionError("interval Theta: density bound must be positive");
  }
  ThetaSpace space;
  space.finite_ = false;
  space.lo_ = lo;
  space.hi_ = hi;
  space.base_density_ = std::move(base_density);
  space.density_bound_ = density_bound;
  return space;
}

double ThetaSpace::base_density(double theta) const {
  if (finite_) return 1.0;
  if (theta < lo_ || theta > hi_) return 0.0;
  return base_density_ ? base_density_(theta) : 1.0;
}

bool ThetaSpace::contains(double theta) const {
  if (!finite_) return theta >= lo_ && theta <= hi_;
  for (double label : labels_) {
    if (label == theta) return true;
  }
  return false;
}

std::vector<std::pair<double, double>> ThetaSpace::quadrature(int interval_nodes) const {
  std::vector<std::pair<double, double>> nodes;
  if (finite_) {
    nodes.reserve(labels_.size());
    for (std::size_t k = 0; k < labels_.size(); ++k) nodes.emplace_back(labels_[k], weights_[k]);
    return nodes;
  }
  int m = std::max(interval_nodes, 3);
  if (m % 2 == 0) ++m;
  const double h = (hi_ - lo_) / (m - 1);
  nodes.reserve(static_cast<std::size_t>(m));
  for (int k = 0; k < m; ++k) {
    const double theta = (k == m - 1) ? hi_ : lo_ + k * h;
    const double simpson = (k == 0 || k == m - 1) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
    nodes.emplace_back(theta, simpson * h / 3.0 * base_density(theta));
  }
  return nodes;
}

std::vector<double> ThetaSpace::grid(int interval_points) const {
  if (finite_) return labels_;
  const int m = std::max(interval_points, 1);
  std::vector<double> points(static_cast<std::size_t>(m));
  for (int k = 0; k < m; ++k) points[k] = lo_ + (hi_ - lo_) * (k + 0.5) / m;
  return points;
}

StateSpace StateSpace::whole(int dim) {
  if (dim < 1 || dim > kMaxDim) {
    throw PreconditionError(fmt::format("dimension must be in 1..{}", kMaxDim));
  }
  StateSpace space;
  space.dim_ = dim;
  return space;
}

StateSpace StateSpace::box(Vector lo, Vector hi) {
  if (lo.size() != hi.size() || lo.size() < 1) {
    throw PreconditionError("box bounds must have equal, positive dimension");
  }
  for (Eigen::Index k = 0; k < lo.size(); ++k) {
    if (!(lo(k) <= hi(k))) throw PreconditionError("box requires lo <= hi in every coordinate");
  }
  StateSpace space;
  space.dim_ = static_cast<int>(lo.size());
  space.bounded_ = true;
  space.lo_ = std::move(lo);
  space.hi_ = std::move(hi);
  return space;
}

bool StateSpace::contains(const Vector& y) const {
  if (y.size() != dim_) return false;
  if (!bounded_) return true;
  for (Eigen::Index k = 0; k < y.size(); ++k) {
    if (y(k) < lo_(k) || y(k) > hi_(k)) return false;
  }
  return true;
}

double JumpFamily::envelope(const Vector&) const { return std::numeric_limits<double>::infinity(); }

ConstantSwitch::ConstantSwitch(std::vector<std::vector<double>> matrix) : matrix_(std::move(matrix)) {
  for (const auto& row : matrix_) {
    if (row.size() != matrix_.size()) throw PreconditionError("switching matrix must be square");
    double sum = 0.0;
    for (double p : row) {
      if (!(p >= 0.0 && p <= 1.0)) throw PreconditionError("switching probabilities must lie in [0, 1]");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw PreconditionError("switching matrix rows must sum to 1");
  }
}

double ConstantSwitch::prob(int from, int to, const Vector&) const {
  return matrix_[static_cast<std::size_t>(from - 1)][static_cast<std::size_t>(to - 1)];
}

std::string to_string(const ParamValue& value) {
  if (const auto* text = std::get_if<std::string>(&value)) return *text;
  return fmt::format("{:.17g}", std::get<double>(value));
}

PdmpModel::PdmpModel(ModelParts parts) : parts_(std::move(parts)) {
  if (!(parts_.lambda > 0.0) || !std::isfinite(parts_.lambda)) {
    throw PreconditionError("lambda must be > 0");
  }
  if (parts_.modes < 1) throw PreconditionError("a model needs at least one mode");
  if (parts_.dim < 1 || parts_.dim > kMaxDim) {
    throw PreconditionError(fmt::format("dimension must be in 1..{}", kMaxDim));
  }
  if (!parts_.semiflow || !parts_.jumps || !parts_.switching) {
    throw PreconditionError("model is missing a semiflow, jump family or switching kernel");
  }
  if (!parts_.space) parts_.space = StateSpace::whole(parts_.dim);
  if (parts_.space->dim() != parts_.dim) {
    throw PreconditionError("state space dimension does not match the model dimension");
  }
}

void PdmpModel::check_state(const State& x) const {
  if (x.y.size() != parts_.dim) {
    throw PreconditionError(
        fmt::format("state has dimension {}, model expects {}", x.y.size(), parts_.dim));
  }
  if (!valid_mode(x.mode)) {
    throw PreconditionError(fmt::format("mode {} out of range 1..{}", x.mode, parts_.modes));
  }
  if (!x.y.allFinite()) throw PreconditionError("state has non-finite coordinates");
  if (!parts_.space->contains(x.y)) throw PreconditionError("state lies outside the state space");
}

Vector flow(const PdmpModel& model, int mode, double t, const Vector& y) {
  if (!(t >= 0.0)) throw PreconditionError(fmt::format("flow time must be >= 0 (got {})", t));
  if (!model.valid_mode(mode)) {
    throw PreconditionError(fmt::format("mode {} out of range 1..{}", mode, model.modes()));
  }
  if (y.size() != model.dim()) throw PreconditionError("flow: dimension mismatch");
  return model.semiflow().eval(mode, t, y);
}

}  // namespace pdmp
