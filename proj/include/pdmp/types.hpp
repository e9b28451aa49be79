#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace pdmp {

/// Largest supported state-space dimension. Points are stored inline (no heap
/// allocation), which keeps the simulation hot loop allocation-free.
inline constexpr int kMaxDim = 8;

using Vector = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using SquareMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;

/// A point (y, i) of the state space Y x I. Modes are 1-based: I = {1..N}.
struct State {
  Vector y;
  int mode = 1;

  friend bool operator==(const State& a, const State& b) {
    return a.mode == b.mode && a.y.size() == b.y.size() && a.y == b.y;
  }
};

inline Vector make_vector(std::initializer_list<double> values) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index k = 0;
  for (double x : values) v(k++) = x;
  return v;
}

inline State make_state(std::initializer_list<double> y, int mode) {
  return State{make_vector(y), mode};
}

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller violated an operation's precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A stochastic routine could not complete (e.g. rejection sampling gave up).
class SimulationError : public Error {
 public:
  using Error::Error;
};

}  // namespace pdmp
