#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "pdmp/measure.hpp"
#include "pdmp/model.hpp"
#include "pdmp/operators.hpp"
#include "pdmp/rng.hpp"

namespace pdmp {

using Json = nlohmann::ordered_json;

// --- report ------------------------------------------------------------------

enum class Verdict { Pass, Fail, Inconclusive };

const char* to_string(Verdict v);

struct CheckResult {
  std::string name;
  Verdict verdict = Verdict::Inconclusive;
  Json evidence = Json::object();
  Json params = Json::object();
};

/// Ordered collection of check results. Serializes to JSON.
struct DiagnosticsReport {
  std::vector<CheckResult> checks;

  void add(CheckResult check) { checks.push_back(std::move(check)); }
  /// Fail if any check failed, otherwise Inconclusive if any was, else Pass.
  Verdict overall() const;
  const CheckResult* find(const std::string& name) const;
  Json to_json() const;
};

// --- rank and positivity -----------------------------------------------------

/// Anchor (y_hat, i) and a path along which the rank of the time-Jacobian of
/// W_n is probed. fd_step = 0 selects max(1e-6, 1e-6 |t_k|).
struct RankProbe {
  Vector y_hat;
  int mode = 1;
  PathSpec path;  // path.modes[0] must equal `mode`
  double fd_step = 0.0;
  double svd_rtol = 1e-8;

  /// Throws PreconditionError unless n >= d, every t_k > 0, every theta_k is
  /// interior to Theta and the path starts in `mode`.
  void validate(const PdmpModel& model) const;
};

enum class JacobianMethod { Auto, FiniteDifference, Analytic };

struct JacobianResult {
  Eigen::MatrixXd matrix;  // d x n, column k = d W_n / d t_k
  JacobianMethod method = JacobianMethod::Analytic;
  double min_step = 0.0;       // smallest FD step used (0 for analytic)
  bool step_too_small = false;  // some step had to shrink below 1e-12
};

/// Jacobian of t -> W_n(y_hat, j, t, theta). Auto uses the chain rule when
/// the model supplies velocities and Jacobians, central differences
/// otherwise (steps shrink to t_k / 2 near t_k = 0).
JacobianResult jacobian_t_Wn(const PdmpModel& model, const RankProbe& probe,
                             JacobianMethod method = JacobianMethod::Auto);

struct RankReport {
  int rank = 0;
  int dim = 0;
  std::vector<double> singular_values;
  bool pass = false;
  JacobianResult jacobian;
};

/// SVD rank of the time-Jacobian: count of sigma_k > svd_rtol * sigma_max.
/// Passes iff rank = d. Throws Error on non-finite entries.
RankReport check_rank(const PdmpModel& model, const RankProbe& probe,
                      JacobianMethod method = JacobianMethod::Auto);

struct PositivityReport {
  std::vector<double> per_mode;  // P_n * Pi_n for terminal mode j = 1..N
  double min_over_j = 0.0;
  bool pass = false;
};

PositivityReport check_positivity(const PdmpModel& model, const RankProbe& probe);

// --- anchors and accessibility -----------------------------------------------

struct AnchorCandidate {
  Vector y_hat;
  int mode = 1;
  /// "contraction-fixed-point" (y_hat = z with w_theta(z) = z, w_theta a
  /// contraction) or "flow-equilibrium" (y_hat = w_theta(z) with S_k(t, z) = z).
  std::string provenance;
  double theta = 0.0;
  int flow_mode = 0;  // k for flow equilibria
  Vector z;
  double contraction = 0.0;  // estimated Lipschitz factor of w_theta
};

struct AnchorSearch {
  int theta_points = 21;     // grid size for interval Theta
  double radius = 10.0;      // starts are spread over [-radius, radius]^d
  int starts_per_dim = 3;
  int iterations = 2000;
  double tol = 1e-10;
};

std::vector<AnchorCandidate> suggest_anchors(const PdmpModel& model, const AnchorSearch& cfg = {});

struct AccessibilitySearch {
  int n_max = 8;
  int attempts_per_n = 200;
  double t_max = 10.0;
  int refine = 5;          // best random attempts refined by coordinate descent
  int descent_sweeps = 20;
  int theta_points = 21;   // candidate thetas for interval Theta
};

struct AccessAttempt {
  State start;
  bool reached = false;
  int n = 0;
  PathSpec path;
  double distance = 0.0;
  double weight = 0.0;  // P_n * Pi_n with terminal mode i
};

struct AccessibilityReport {
  Vector y_hat;
  int mode = 1;
  double radius = 0.0;
  std::vector<AccessAttempt> per_start;
  bool all_reached = false;
};

/// Searches, per start, for the smallest n <= n_max and a path ending in
/// mode i with |W_n - y_hat| < radius and positive weight. Start s uses
/// rng.split(s). Failure to reach is inconclusive, not a disproof.
AccessibilityReport probe_accessibility(const PdmpModel& model, const Vector& y_hat, int mode, double radius,
                                        const std::vector<State>& starts, const AccessibilitySearch& cfg,
                                        const RngStream& rng);

// --- small sets ----------------------------------------------------------------

struct SmallSetConfig {
  double u_halfwidth = 1e-2;  // starts form a grid on y_hat +- u_halfwidth
  int starts_per_dim = 3;
  int bins = 40;              // histogram bins per dimension
  int window = 3;             // V spans `window` bins per dimension
  int workers = 1;
};

struct SmallSetReport {
  Vector v_lo;
  Vector v_hi;
  double c_bar = 0.0;
  int n = 0;
  std::size_t n_mc = 0;
  std::size_t n_starts = 0;
  Verdict verdict = Verdict::Inconclusive;
};

/// Monte Carlo lower bound c_bar for P^n(x, B x {j}) >= c_bar leb(B cap V):
/// the histogram density of n-step draws, minimized over starts x in U and
/// terminal modes j, maximized over windows V. n_mc is the number of draws
/// per start (>= 1000); start s uses rng.split(s).
SmallSetReport estimate_small_set(const PdmpModel& model, const Vector& y_hat, int mode, int n, std::size_t n_mc,
                                  const RngStream& rng, const SmallSetConfig& cfg = {});

// --- hypothesis checks -------------------------------------------------------

/// Constants and bound functions declared for the ergodicity hypotheses.
struct HypothesisConstants {
  std::optional<double> alpha;
  std::optional<double> L;
  std::optional<double> L_w;
  std::optional<double> L_p;
  std::optional<double> c_pi;
  std::optional<double> c_p;
  std::optional<Vector> y_star;
  std::function<double(double)> phi;            // phi(t)
  std::function<double(const Vector&)> L_func;  // script-L(u)
};

/// Constants known to hold for a built-in family at its parameters.
HypothesisConstants builtin_constants(const PdmpModel& model);

struct HypothesisConfig {
  double sample_radius = 10.0;  // u, v drawn from [-r, r]^d
  double t_max = 10.0;          // t drawn from [0, t_max]
  double margin = 1e-9;         // absolute slack before a draw counts as a violation
  int theta_nodes = 201;        // quadrature nodes for interval Theta
  int workers = 1;
};

/// Verifies the rate balance L L_w + alpha / lambda < 1 and falsification-
/// tests the Lipschitz, spread, density and overlap inequalities on n_pairs
/// random draws (block b uses rng.split(b)). "pass" means not falsified.
DiagnosticsReport check_hypotheses(const PdmpModel& model, const HypothesisConstants& constants,
                                   std::size_t n_pairs, const RngStream& rng, const HypothesisConfig& cfg = {});

// --- continuity classification ---------------------------------------------

struct GridConfig {
  int bins = 50;
};

struct HistogramBin {
  int mode = 1;
  double lo = 0.0;
  double hi = 0.0;
  double mass = 0.0;
};

struct ContinuityReport {
  double atom_fraction = 0.0;
  double atom_eps = 0.0;
  std::vector<std::pair<State, double>> atoms;  // cluster centres and masses
  std::vector<HistogramBin> histogram;         // first coordinate, per mode
  std::string verdict;                         // atomic-singular | diffuse | mixed
};

/// Clusters atoms per mode within atom_eps (<= 0 selects 1e-9 * max(1, max|y|));
/// clusters holding more than 1% of the mass count as atoms. Verdict:
/// atomic-singular above 0.5, diffuse below 0.01, mixed otherwise.
ContinuityReport classify_continuity(const EmpiricalMeasure& mu, double atom_eps = 0.0, const GridConfig& grid = {});

// Report entries for the individual checks.
CheckResult to_check(const RankProbe& probe, const RankReport& report);
CheckResult to_check(const RankProbe& probe, const PositivityReport& report);
CheckResult to_check(const AccessibilityReport& report);
CheckResult to_check(const Vector& y_hat, int mode, const SmallSetReport& report);
CheckResult to_check(const ContinuityReport& report);

Json to_json(const Vector& v);

}  // namespace pdmp
