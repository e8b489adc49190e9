#pragma once

// The two worked examples: allometric rate r = 1 (example 1) and r = x a
// (example 2), their closed-form averaged coefficients, and the extinction
// machinery for example 1 (Lambda bound, dominating diffusion, hitting bound).

#include <cstdint>
#include <optional>
#include <vector>

#include "json.hpp"

#include "agetrait/model.hpp"
#include "agetrait/simulate.hpp"

namespace agetrait {

struct Example1Params {
  double x0 = 4.0;
  double d0 = 0.25;
  double eta = 1.7;
  double sigma = 1.0;  // mutation standard deviation before the 1/sqrt(n) scaling
  double p = 1.0;      // mutation probability

  void check() const;
};

struct Example2Params : Example1Params {
  double x1 = 0.05;
  double x2 = 3.95;

  void check() const;
};

ModelSpec build_example1(const Example1Params& params = {});
ModelSpec build_example2(const Example2Params& params = {});
// `overrides` holds any subset of the parameter fields; unknown keys and
// values outside the invariants raise ConfigError.
ModelSpec build_example(int id, const nlohmann::json& overrides = nlohmann::json::object());

// b = d = U = 0, p = 0, r = rate: critical binary branching with no interaction.
ModelSpec build_critical(double rate = 1.0);

Example1Params example1_params_from_json(const nlohmann::json& j);
Example2Params example2_params_from_json(const nlohmann::json& j);

// Standard normal CDF.
double normal_cdf(double z);

enum class HattedKind { b, d, r, U };

// 2 exp(1/(2x)) Phi(-1/sqrt(x)), the ratio b_hat / (x (x0 - x)) of example 2.
double example2_birth_factor(double x);
double closed_form_hatted(int id, HattedKind which, double x, const Example1Params& params = {});

struct DominationConfig {
  Example1Params params;
  double zeta = 0.1;
  double ceiling = 0.0;         // M; 0 means 10 m0
  double step = 1e-4;           // Euler step
  double absorption = 1e-6;     // Z <= absorption counts as 0
  double truncation_tolerance = 1e-3;
  double horizon = 200.0;       // censoring time for the hitting problem

  double m0() const;
  double ceiling_value() const { return ceiling > 0.0 ? ceiling : 10.0 * m0(); }
  // Drift and diffusion of the dominating process at Z.
  double drift(double z) const;
  void check(double initial) const;
  nlohmann::json to_json() const;
};

struct LambdaBound {
  double lambda = 0.0;
  double bound = 0.0;
};

LambdaBound lambda_bound(const Example1Params& params, const DominationConfig& cfg, double x, double mass);

struct LambdaCheck {
  std::size_t draws = 0;
  std::size_t violations = 0;
  double worst_excess = -kInfinity;  // max of lambda - bound over the draws
  double worst_x = 0.0;
  double worst_mass = 0.0;

  nlohmann::json to_json() const;
};

// x uniform on [0, x0]; the mass is uniform on [0, 2 m0] for half the draws
// (dense around the switch at m0) and uniform on [0, M] for the rest.
LambdaCheck lambda_bound_check(const DominationConfig& cfg, std::size_t draws, std::uint64_t seed);

struct DiffusionPath {
  std::vector<double> times;  // empty unless recording was requested
  std::vector<double> values;
  std::optional<double> tau_m0;
  std::optional<double> tau_zero;
  std::optional<double> rho_ceiling;
  double final_time = 0.0;
  double final_value = 0.0;
  bool step_warning = false;  // an Euler step went below -truncation_tolerance
};

struct DiffusionOptions {
  bool noise = true;
  bool record = false;
  // Stop once tau_m0 or rho_ceiling is known.
  bool stop_at_exit = false;
};

// Euler-Maruyama with full truncation and absorption at 0.
DiffusionPath dominating_diffusion(const DominationConfig& cfg, double initial, double horizon,
                                   std::uint64_t seed, const DiffusionOptions& opts = {});

struct HittingBoundRecord {
  double z = 0.0;
  double m0 = 0.0;
  double bound = 0.0;       // 2 z / (zeta x0)
  double estimate = 0.0;    // m0 E[tau_m0 ^ rho_M]
  double standard_error = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  std::size_t replicates = 0;
  std::size_t censored = 0;
  std::size_t step_warnings = 0;
  bool holds = false;       // ci_upper <= bound

  nlohmann::json to_json() const;
};

HittingBoundRecord hitting_bound_check(const DominationConfig& cfg, double z, std::size_t replicates,
                                       std::uint64_t seed, std::size_t threads = 0,
                                       bool noise = true);

struct ExtinctionRecord {
  int example_id = 0;
  std::uint64_t seed = 0;
  std::optional<double> extinction_time;
  double horizon = 0.0;
};

// Runs `count` replicates and keeps only extinction times. Trajectories are
// recorded coarsely since only the extinction time is needed.
std::vector<ExtinctionRecord> extinction_times(int example_id, const ModelSpec& spec,
                                               SimConfig cfg, std::size_t count,
                                               std::size_t threads = 0);

// Median with censored entries treated as +inf.
double median_extinction_time(const std::vector<ExtinctionRecord>& records);

}  // namespace agetrait
