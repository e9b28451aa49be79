#include "pdmp/measure.hpp"

#include <cmath>
#include <numeric>

namespace pdmp {

EmpiricalMeasure EmpiricalMeasure::uniform(std::vector<State> atoms) {
  EmpiricalMeasure mu;
  const double w = atoms.empty() ? 0.0 : 1.0 / static_cast<double>(atoms.size());
  mu.weights_.assign(atoms.size(), w);
  mu.atoms_ = std::move(atoms);
  return mu;
}

EmpiricalMeasure EmpiricalMeasure::dirac(const State& x, std::size_t copies) {
  return uniform(std::vector<State>(std::max<std::size_t>(copies, 1), x));
}

void EmpiricalMeasure::add(State atom, double weight) {
  if (!origins_.empty()) throw PreconditionError("measure tracks atom origins; pass one");
  atoms_.push_back(std::move(atom));
  weights_.push_back(weight);
}

void EmpiricalMeasure::add(State atom, double weight, const AtomOrigin& origin) {
  if (origins_.size() != atoms_.size()) {
    throw PreconditionError("cannot mix atoms with and without origins");
  }
  atoms_.push_back(std::move(atom));
  weights_.push_back(weight);
  origins_.push_back(origin);
}

double EmpiricalMeasure::total_weight() const {
  return std::accumulate(weights_.begin(), weights_.end(), 0.0);
}

bool EmpiricalMeasure::is_normalized(double tol) const {
  return !atoms_.empty() && std::abs(total_weight() - 1.0) <= tol;
}

void EmpiricalMeasure::normalize() {
  const double total = total_weight();
  if (!(total > 0.0)) throw PreconditionError("cannot normalize a measure with zero total weight");
  for (double& w : weights_) w /= total;
}

void EmpiricalMeasure::validate() const {
  const auto d = atoms_.empty() ? 0 : atoms_.front().y.size();
  for (std::size_t k = 0; k < atoms_.size(); ++k) {
    if (atoms_[k].y.size() != d) throw PreconditionError("measure atoms have mixed dimensions");
    if (!atoms_[k].y.allFinite()) throw PreconditionError("measure atom has non-finite coordinates");
    if (!(weights_[k] >= 0.0) || !std::isfinite(weights_[k])) {
      throw PreconditionError("measure weights must be finite and non-negative");
    }
  }
}

EmpiricalMeasure EmpiricalMeasure::subset(const std::vector<std::size_t>& indices) const {
  EmpiricalMeasure out;
  out.atoms_.reserve(indices.size());
  out.weights_.reserve(indices.size());
  for (std::size_t k : indices) {
    out.atoms_.push_back(atoms_.at(k));
    out.weights_.push_back(weights_.at(k));
    if (has_origins()) out.origins_.push_back(origins_[k]);
  }
  if (!out.empty()) out.normalize();
  return out;
}

}  // namespace pdmp
