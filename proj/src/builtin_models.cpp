#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "pdmp/model.hpp"

namespace pdmp {

namespace {

// --- parameter checks ------------------------------------------------------

using Check = std::function<std::optional<std::string>(const ParamValue&)>;

Check number(std::function<bool(double)> ok, std::string message) {
  return [ok = std::move(ok), message = std::move(message)](const ParamValue& v)
             -> std::optional<std::string> {
    const auto* x = std::get_if<double>(&v);
    if (x == nullptr) return std::string("expected a number");
    if (!std::isfinite(*x) || !ok(*x)) return message;
    return std::nullopt;
  };
}

Check one_of(std::vector<std::string> choices) {
  return [choices = std::move(choices)](const ParamValue& v) -> std::optional<std::string> {
    const auto* s = std::get_if<std::string>(&v);
    if (s == nullptr || std::find(choices.begin(), choices.end(), *s) == choices.end()) {
      return fmt::format("expected one of: {}", fmt::join(choices, ", "));
    }
    return std::nullopt;
  };
}

ParamSpec lambda_spec() {
  return {"lambda", 1.0, "jump rate (1/time)", number([](double x) { return x > 0; }, "lambda must be > 0")};
}

ParamSpec pi_stay_spec() {
  return {"pi_stay", 0.5, "probability of keeping the current mode at a jump",
          number([](double x) { return x >= 0 && x <= 1; }, "pi_stay must lie in [0, 1]")};
}

const std::vector<ParamSpec>& dirac_trap_params() {
  static const std::vector<ParamSpec> specs{lambda_spec()};
  return specs;
}

const std::vector<ParamSpec>& contracting_lines_params() {
  static const std::vector<ParamSpec> specs{
      lambda_spec(),
      {"alpha", -1.0, "common contraction exponent of both semiflows",
       number([](double x) { return x < 0; }, "alpha must be < 0")},
      {"a", 2.0, "equilibrium of the second semiflow",
       number([](double x) { return x != 0; }, "a must be nonzero")},
      {"theta", std::string("finite"), "kind of Theta: finite {theta_lo, theta_hi} or interval",
       one_of({"finite", "interval"})},
      {"theta_lo", -1.0, "smallest theta", number([](double) { return true; }, "")},
      {"theta_hi", 1.0, "largest theta", number([](double) { return true; }, "")},
      {"contraction", 0.5, "slope r of w_theta(y) = r y + (1 - r) theta",
       number([](double x) { return x > 0 && x <= 1; }, "contraction must lie in (0, 1]")},
      {"tilt", 0.0, "y-dependence of p_theta for interval Theta",
       number([](double x) { return std::abs(x) < 1; }, "tilt must satisfy |tilt| < 1")},
      pi_stay_spec(),
  };
  return specs;
}

const std::vector<ParamSpec>& planar_rotor_params() {
  static const std::vector<ParamSpec> specs{
      lambda_spec(),
      {"kappa", 1.0, "contraction rate of both spiral flows",
       number([](double x) { return x > 0; }, "kappa must be > 0")},
      {"omega", 1.0, "angular velocity (mode 1 turns +omega, mode 2 turns -omega)",
       number([](double) { return true; }, "")},
      {"shift", 0.5, "length of the vertical translation jumps",
       number([](double x) { return x != 0; }, "shift must be nonzero")},
      pi_stay_spec(),
  };
  return specs;
}

// Resolved parameter lookup: schema defaults overridden by user values.
class Resolved {
 public:
  Resolved(const std::string& name, const ModelParams& given) {
    const auto& specs = builtin_model_params(name);
    for (const auto& spec : specs) values_[spec.key] = spec.default_value;
    for (const auto& [key, value] : given) {
      if (auto err = validate_model_param(name, key, value)) {
        throw PreconditionError(fmt::format("model '{}': {}", name, *err));
      }
      values_[key] = value;
    }
  }
  double num(const std::string& key) const { return std::get<double>(values_.at(key)); }
  const std::string& text(const std::string& key) const { return std::get<std::string>(values_.at(key)); }
  const ModelParams& all() const { return values_; }

 private:
  ModelParams values_;
};

std::shared_ptr<const SwitchKernel> two_mode_switch(double stay) {
  return std::make_shared<ConstantSwitch>(
      std::vector<std::vector<double>>{{stay, 1.0 - stay}, {1.0 - stay, stay}});
}

// --- dirac-trap ---------------------------------------------------------------

class ExpDecayFlow final : public Semiflow {
 public:
  Vector eval(int, double t, const Vector& y) const override { return std::exp(-t) * y; }
  std::optional<Vector> velocity(int, double t, const Vector& y) const override {
    return Vector(-std::exp(-t) * y);
  }
  std::optional<SquareMatrix> jacobian(int, double t, const Vector& y) const override {
    return SquareMatrix(std::exp(-t) * SquareMatrix::Identity(y.size(), y.size()));
  }
};

class IdentityJump final : public JumpFamily {
 public:
  Vector map(double, const Vector& y) const override { return y; }
  double density(double, const Vector&) const override { return 1.0; }
  double envelope(const Vector&) const override { return 1.0; }
  std::optional<SquareMatrix> jacobian(double, const Vector& y) const override {
    return SquareMatrix(SquareMatrix::Identity(y.size(), y.size()));
  }
  std::optional<Vector> theta_derivative(double, const Vector& y) const override {
    return Vector(Vector::Zero(y.size()));
  }
};

PdmpModel make_dirac_trap(const Resolved& p) {
  return PdmpModel(ModelParts{
      .family = "dirac-trap",
      .params = p.all(),
      .lambda = p.num("lambda"),
      .modes = 1,
      .dim = 1,
      .semiflow = std::make_shared<ExpDecayFlow>(),
      .jumps = std::make_shared<IdentityJump>(),
      .switching = std::make_shared<ConstantSwitch>(std::vector<std::vector<double>>{{1.0}}),
      .theta = ThetaSpace::finite({1.0}),
  });
}

// --- contracting-lines -------------------------------------------------------

class ContractingLinesFlow final : public Semiflow {
 public:
  ContractingLinesFlow(double alpha, double a) : alpha_(alpha), a_(a) {}
  Vector eval(int mode, double t, const Vector& y) const override {
    const double c = centre(mode);
    Vector out(1);
    out(0) = std::exp(alpha_ * t) * (y(0) - c) + c;
    return out;
  }
  std::optional<Vector> velocity(int mode, double t, const Vector& y) const override {
    Vector out(1);
    out(0) = alpha_ * std::exp(alpha_ * t) * (y(0) - centre(mode));
    return out;
  }
  std::optional<SquareMatrix> jacobian(int, double t, const Vector&) const override {
    SquareMatrix m(1, 1);
    m(0, 0) = std::exp(alpha_ * t);
    return m;
  }

 private:
  double centre(int mode) const { return mode == 1 ? 0.0 : a_; }
  double alpha_;
  double a_;
};

class AffineAverageJump final : public JumpFamily {
 public:
  AffineAverageJump(double r, ThetaSpace theta, double tilt)
      : r_(r), finite_(theta.is_finite()), lo_(theta.lo()), hi_(theta.hi()), tilt_(tilt) {
    if (finite_) p_const_ = 1.0 / static_cast<double>(theta.labels().size());
  }
  Vector map(double theta, const Vector& y) const override {
    Vector out(1);
    out(0) = r_ * y(0) + (1.0 - r_) * theta;
    return out;
  }
  double density(double theta, const Vector& y) const override {
    if (finite_) return p_const_;
    const double s = (2.0 * theta - lo_ - hi_) / (hi_ - lo_);
    return (1.0 + tilt_ * s * std::tanh(y(0))) / (hi_ - lo_);
  }
  double envelope(const Vector&) const override {
    return finite_ ? p_const_ : (1.0 + std::abs(tilt_)) / (hi_ - lo_);
  }
  std::optional<SquareMatrix> jacobian(double, const Vector&) const override {
    SquareMatrix m(1, 1);
    m(0, 0) = r_;
    return m;
  }
  std::optional<Vector> theta_derivative(double, const Vector&) const override {
    Vector out(1);
    out(0) = 1.0 - r_;
    return out;
  }

 private:
  double r_;
  bool finite_;
  double lo_;
  double hi_;
  double tilt_;
  double p_const_ = 0.0;
};

PdmpModel make_contracting_lines(const Resolved& p) {
  const double lo = p.num("theta_lo");
  const double hi = p.num("theta_hi");
  if (!(lo < hi)) throw PreconditionError("model 'contracting-lines': theta_lo must be < theta_hi");
  const bool interval = p.text("theta") == "interval";
  if (!interval && p.num("tilt") != 0.0) {
    throw PreconditionError("model 'contracting-lines': tilt requires theta = interval");
  }
  ThetaSpace theta = interval ? ThetaSpace::interval(lo, hi) : ThetaSpace::finite({lo, hi});
  auto jumps = std::make_shared<AffineAverageJump>(p.num("contraction"), theta, p.num("tilt"));
  return PdmpModel(ModelParts{
      .family = "contracting-lines",
      .params = p.all(),
      .lambda = p.num("lambda"),
      .modes = 2,
      .dim = 1,
      .semiflow = std::make_shared<ContractingLinesFlow>(p.num("alpha"), p.num("a")),
      .jumps = std::move(jumps),
      .switching = two_mode_switch(p.num("pi_stay")),
      .theta = std::move(theta),
  });
}

// --- planar-rotor ------------------------------------------------------------

class SpiralFlow final : public Semiflow {
 public:
  SpiralFlow(double kappa, double omega) : kappa_(kappa), omega_(omega) {}
  Vector eval(int mode, double t, const Vector& y) const override {
    return centre(mode) + propagator(mode, t) * (y - centre(mode));
  }
  std::optional<Vector> velocity(int mode, double t, const Vector& y) const override {
    SquareMatrix generator(2, 2);
    const double w = spin(mode);
    generator << -kappa_, -w, w, -kappa_;
    return Vector(generator * (propagator(mode, t) * (y - centre(mode))));
  }
  std::optional<SquareMatrix> jacobian(int mode, double t, const Vector&) const override {
    return propagator(mode, t);
  }

 private:
  Vector centre(int mode) const { return make_vector({mode == 1 ? -1.0 : 1.0, 0.0}); }
  double spin(int mode) const { return mode == 1 ? omega_ : -omega_; }
  SquareMatrix propagator(int mode, double t) const {
    const double angle = spin(mode) * t;
    const double decay = std::exp(-kappa_ * t);
    SquareMatrix m(2, 2);
    m << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
    return decay * m;
  }
  double kappa_;
  double omega_;
};

class VerticalShiftJump final : public JumpFamily {
 public:
  explicit VerticalShiftJump(double shift) : shift_(shift) {}
  Vector map(double theta, const Vector& y) const override {
    Vector out = y;
    out(1) += theta * shift_;
    return out;
  }
  double density(double, const Vector&) const override { return 0.5; }
  double envelope(const Vector&) const override { return 0.5; }
  std::optional<SquareMatrix> jacobian(double, const Vector&) const override {
    return SquareMatrix(SquareMatrix::Identity(2, 2));
  }
  std::optional<Vector> theta_derivative(double, const Vector&) const override {
    return make_vector({0.0, shift_});
  }

 private:
  double shift_;
};

PdmpModel make_planar_rotor(const Resolved& p) {
  return PdmpModel(ModelParts{
      .family = "planar-rotor",
      .params = p.all(),
      .lambda = p.num("lambda"),
      .modes = 2,
      .dim = 2,
      .semiflow = std::make_shared<SpiralFlow>(p.num("kappa"), p.num("omega")),
      .jumps = std::make_shared<VerticalShiftJump>(p.num("shift")),
      .switching = two_mode_switch(p.num("pi_stay")),
      .theta = ThetaSpace::finite({-1.0, 1.0}),
  });
}

}  // namespace

std::vector<std::string> builtin_model_names() {
  return {"contracting-lines", "dirac-trap", "planar-rotor"};
}

const std::vector<ParamSpec>& builtin_model_params(const std::string& name) {
  if (name == "dirac-trap") return dirac_trap_params();
  if (name == "contracting-lines") return contracting_lines_params();
  if (name == "planar-rotor") return planar_rotor_params();
  throw PreconditionError(fmt::format("unknown model '{}' (known: {})", name,
                                      fmt::join(builtin_model_names(), ", ")));
}

std::optional<std::string> validate_model_param(const std::string& name, const std::string& key,
                                                const ParamValue& value) {
  for (const auto& spec : builtin_model_params(name)) {
    if (spec.key != key) continue;
    return spec.check ? spec.check(value) : std::nullopt;
  }
  return fmt::format("unknown parameter '{}' for model '{}'", key, name);
}

PdmpModel builtin_model(const std::string& name, const ModelParams& params) {
  const Resolved resolved(name, params);
  if (name == "dirac-trap") return make_dirac_trap(resolved);
  if (name == "contracting-lines") return make_contracting_lines(resolved);
  return make_planar_rotor(resolved);
}

}  // namespace pdmp
