#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "pdmp/types.hpp"

namespace pdmp {

/// Where an atom came from when it was produced by simulation.
struct AtomOrigin {
  std::uint64_t traj_id = 0;
  std::int64_t step = 0;
  double tau = 0.0;
  double theta = std::numeric_limits<double>::quiet_NaN();

  friend bool operator==(const AtomOrigin&, const AtomOrigin&) = default;
};

/// Weighted cloud of states on Y x I; the finite-sample stand-in for a
/// probability measure.
class EmpiricalMeasure {
 public:
  EmpiricalMeasure() = default;

  /// Equal weights 1/n.
  static EmpiricalMeasure uniform(std::vector<State> atoms);
  /// `copies` identical atoms at x (weight 1/copies each).
  static EmpiricalMeasure dirac(const State& x, std::size_t copies = 1);

  void add(State atom, double weight);
  void add(State atom, double weight, const AtomOrigin& origin);

  std::size_t size() const { return atoms_.size(); }
  bool empty() const { return atoms_.empty(); }
  /// Dimension of the atoms (0 when empty).
  int dim() const { return atoms_.empty() ? 0 : static_cast<int>(atoms_.front().y.size()); }

  const std::vector<State>& atoms() const { return atoms_; }
  const std::vector<double>& weights() const { return weights_; }
  /// Either empty or one entry per atom.
  const std::vector<AtomOrigin>& origins() const { return origins_; }
  bool has_origins() const { return !origins_.empty() && origins_.size() == atoms_.size(); }

  double total_weight() const;
  bool is_normalized(double tol = 1e-12) const;
  /// Rescales weights to sum to one; throws when the total is not positive.
  void normalize();
  /// Throws PreconditionError on NaN coordinates, mixed dimensions or
  /// negative weights.
  void validate() const;

  /// Sub-measure made of the given atom indices, renormalized.
  EmpiricalMeasure subset(const std::vector<std::size_t>& indices) const;

  friend bool operator==(const EmpiricalMeasure&, const EmpiricalMeasure&) = default;

 private:
  std::vector<State> atoms_;
  std::vector<double> weights_;
  std::vector<AtomOrigin> origins_;
};

}  // namespace pdmp
