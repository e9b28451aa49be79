#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "pdmp/types.hpp"

namespace pdmp {

/// Index set Theta of the jump maps together with its base measure.
///
/// Finite: labels theta_k with counting-measure weights (default 1 each).
/// Interval: [lo, hi] with a base-measure density (default Lebesgue).
class ThetaSpace {
 public:
  using Density = std::function<double(double)>;

  static ThetaSpace finite(std::vector<double> labels, std::vector<double> weights = {});
  /// `density_bound` must dominate the base density on [lo, hi]; it scales
  /// the uniform proposal used by the rejection sampler.
  static ThetaSpace interval(double lo, double hi, Density base_density = {},
                             double density_bound = 1.0);

  bool is_finite() const { return finite_; }
  std::span<const double> labels() const { return labels_; }
  std::span<const double> weights() const { return weights_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  double base_density(double theta) const;
  double density_bound() const { return density_bound_; }
  bool contains(double theta) const;

  /// Nodes and weights approximating integrals against the base measure.
  /// Exact (labels, weights) for finite Theta; composite Simpson with
  /// `interval_nodes` points (rounded up to odd) otherwise.
  std::vector<std::pair<double, double>> quadrature(int interval_nodes = 401) const;

  /// Evenly spaced representatives: all labels, or `interval_points` interior
  /// points of the interval.
  std::vector<double> grid(int interval_points) const;

 private:
  bool finite_ = true;
  std::vector<double> labels_;
  std::vector<double> weights_;
  double lo_ = 0.0;
  double hi_ = 0.0;
  Density base_density_;
  double density_bound_ = 1.0;
};

/// Axis-aligned closed box, or all of R^d.
class StateSpace {
 public:
  static StateSpace whole(int dim);
  static StateSpace box(Vector lo, Vector hi);

  int dim() const { return dim_; }
  bool bounded() const { return bounded_; }
  const Vector& lo() const { return lo_; }
  const Vector& hi() const { return hi_; }
  bool contains(const Vector& y) const;

 private:
  int dim_ = 1;
  bool bounded_ = false;
  Vector lo_;
  Vector hi_;
};

/// Family {S_i} of semiflows, S_i : [0, inf) x Y -> Y.
///
/// Implementations must satisfy S_i(0, y) = y and the semigroup law. The
/// optional derivatives enable analytic Jacobians in the diagnostics.
class Semiflow {
 public:
  virtual ~Semiflow() = default;
  virtual Vector eval(int mode, double t, const Vector& y) const = 0;
  /// d/dt S_i(t, y).
  virtual std::optional<Vector> velocity(int, double, const Vector&) const { return std::nullopt; }
  /// D_y S_i(t, y).
  virtual std::optional<SquareMatrix> jacobian(int, double, const Vector&) const {
    return std::nullopt;
  }
};

/// Jump maps w_theta and the place-dependent densities p_theta(y).
class JumpFamily {
 public:
  virtual ~JumpFamily() = default;
  virtual Vector map(double theta, const Vector& y) const = 0;
  /// Density of theta at pre-jump location y, w.r.t. the base measure.
  virtual double density(double theta, const Vector& y) const = 0;
  /// Upper bound M(y) >= sup_theta p_theta(y). Required for interval Theta.
  virtual double envelope(const Vector&) const;
  /// D_y w_theta(y).
  virtual std::optional<SquareMatrix> jacobian(double, const Vector&) const { return std::nullopt; }
  /// d/dtheta w_theta(y).
  virtual std::optional<Vector> theta_derivative(double, const Vector&) const {
    return std::nullopt;
  }
};

/// Place-dependent switching probabilities pi_ij(y); rows sum to one.
class SwitchKernel {
 public:
  virtual ~SwitchKernel() = default;
  virtual double prob(int from, int to, const Vector& y) const = 0;
};

/// Switching that does not depend on the location.
class ConstantSwitch final : public SwitchKernel {
 public:
  /// Row-major N x N stochastic matrix.
  explicit ConstantSwitch(std::vector<std::vector<double>> matrix);
  double prob(int from, int to, const Vector&) const override;

 private:
  std::vector<std::vector<double>> matrix_;
};

/// Model parameter value: numbers for rates and coefficients, text for
/// choices such as the kind of Theta.
using ParamValue = std::variant<double, std::string>;
using ModelParams = std::map<std::string, ParamValue>;

std::string to_string(const ParamValue& value);

struct ModelParts {
  std::string family;  // registry name, or a free-form label for custom models
  ModelParams params;  // echo of the parameters the model was built from
  double lambda = 1.0;
  int modes = 1;
  int dim = 1;
  std::shared_ptr<const Semiflow> semiflow;
  std::shared_ptr<const JumpFamily> jumps;
  std::shared_ptr<const SwitchKernel> switching;
  ThetaSpace theta = ThetaSpace::finite({1.0});
  std::optional<StateSpace> space;  // defaults to R^dim
};

/// Immutable description of a PDMP: jump rate, semiflows, jump maps, jump
/// densities, switching matrix, Theta and the state space Y. Safe to share
/// across threads.
class PdmpModel {
 public:
  explicit PdmpModel(ModelParts parts);

  const std::string& family() const { return parts_.family; }
  const ModelParams& params() const { return parts_.params; }
  double lambda() const { return parts_.lambda; }
  int modes() const { return parts_.modes; }
  int dim() const { return parts_.dim; }
  const Semiflow& semiflow() const { return *parts_.semiflow; }
  const JumpFamily& jumps() const { return *parts_.jumps; }
  const SwitchKernel& switching() const { return *parts_.switching; }
  const ThetaSpace& theta() const { return parts_.theta; }
  const StateSpace& space() const { return *parts_.space; }

  bool valid_mode(int mode) const { return mode >= 1 && mode <= parts_.modes; }
  /// Throws PreconditionError for wrong dimension, out-of-range mode, NaN
  /// coordinates or a point outside Y.
  void check_state(const State& x) const;

 private:
  ModelParts parts_;
};

/// S_i(t, y) with precondition checks (t >= 0, mode in range, matching dim).
Vector flow(const PdmpModel& model, int mode, double t, const Vector& y);

// ---------------------------------------------------------------------------
// Registry of closed-form model families.

struct ParamSpec {
  std::string key;
  ParamValue default_value;
  std::string help;
  /// Returns an error message for an invalid value.
  std::function<std::optional<std::string>(const ParamValue&)> check;
};

/// Names of the built-in families.
std::vector<std::string> builtin_model_names();

/// Parameter schema of a family; throws PreconditionError("unknown model ...").
const std::vector<ParamSpec>& builtin_model_params(const std::string& name);

/// Validates one parameter against a family's schema; returns the error
/// message, or nullopt when the value is acceptable.
std::optional<std::string> validate_model_param(const std::string& name, const std::string& key,
                                                const ParamValue& value);

/// Builds a fully wired built-in model. Missing parameters take their
/// documented defaults; unknown or invalid ones raise PreconditionError.
///
///   dirac-trap         Y = R, I = {1}, Theta = {1}, S(t, y) = e^{-t} y, w = id.
///   contracting-lines  Y = R, I = {1, 2}, S_1 = e^{alpha t} y,
///                      S_2 = e^{alpha t}(y - a) + a,
///                      w_theta(y) = r y + (1 - r) theta (r = 1/2 by default),
///                      Theta = {-1, +1} with p = 1/2, or an interval with
///                      p_theta(y) = (1 + tilt s(theta) tanh y) / |Theta|,
///                      pi_ii = pi_stay, pi_ij = 1 - pi_stay.
///   planar-rotor       Y = R^2, I = {1, 2}, spiral flows
///                      S_k(t, y) = c_k + e^{-kappa t} R(+-omega t)(y - c_k)
///                      around c_1 = (-1, 0), c_2 = (1, 0); translation jumps
///                      w_theta(y) = y + theta (0, shift), Theta = {-1, +1}.
PdmpModel builtin_model(const std::string& name, const ModelParams& params = {});

}  // namespace pdmp
