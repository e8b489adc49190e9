#include "agetrait/examples.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "agetrait/errors.hpp"
#include "agetrait/parallel.hpp"

namespace agetrait {

namespace {

void read_fields(const nlohmann::json& j, const std::set<std::string>& allowed,
                 const std::function<void(const std::string&, const nlohmann::json&)>& set) {
  if (j.is_null()) return;
  if (!j.is_object()) throw ConfigError("example overrides must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown example parameter '" + key + "'");
    if (!value.is_number()) throw ConfigError("example parameter '" + key + "' must be a number");
    set(key, value);
  }
}

void assign_common(Example1Params& p, const std::string& key, const nlohmann::json& v) {
  const double d = v.get<double>();
  if (key == "x0") p.x0 = d;
  else if (key == "d0") p.d0 = d;
  else if (key == "eta") p.eta = d;
  else if (key == "sigma") p.sigma = d;
  else if (key == "p") p.p = d;
}

void fill_common(ModelSpec& spec, const Example1Params& p) {
  const double x0 = p.x0, d0 = p.d0, eta = p.eta, prob = p.p;
  spec.trait_dim = 1;
  spec.birth = [x0](TraitView x, double a) { return x[0] * (x0 - x[0]) * std::exp(-a); };
  spec.birth_bound = x0 * x0 / 4.0;
  spec.death = [d0](TraitView, double) { return d0; };
  spec.death_bound = d0;
  set_focal_interaction(spec, [x0, eta](TraitView x, double) { return eta * (x0 - x[0]); }, eta * x0);
  spec.mutation_prob = [prob](TraitView, double) { return prob; };
  if (p.sigma > 0.0) {
    spec.mutation = std::make_shared<ConditionedGaussianKernel>(std::vector<double>{p.sigma * p.sigma});
  } else {
    spec.mutation = std::make_shared<PointMassZeroKernel>();
  }
}

}  // namespace

void Example1Params::check() const {
  if (!(x0 > 0.0)) throw ConfigError("x0 must be > 0");
  if (!(eta > 0.0)) throw ConfigError("eta must be > 0");
  if (!(d0 >= 0.0)) throw ConfigError("d0 must be >= 0");
  if (!(sigma >= 0.0)) throw ConfigError("sigma must be >= 0");
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("p must lie in [0, 1]");
}

void Example2Params::check() const {
  Example1Params::check();
  if (!(0.0 < x1 && x1 < x2 && x2 < x0)) throw ConfigError("need 0 < x1 < x2 < x0");
}

Example1Params example1_params_from_json(const nlohmann::json& j) {
  Example1Params p;
  read_fields(j, {"x0", "d0", "eta", "sigma", "p"},
              [&](const std::string& k, const nlohmann::json& v) { assign_common(p, k, v); });
  p.check();
  return p;
}

Example2Params example2_params_from_json(const nlohmann::json& j) {
  Example2Params p;
  read_fields(j, {"x0", "d0", "eta", "sigma", "p", "x1", "x2"},
              [&](const std::string& k, const nlohmann::json& v) {
                if (k == "x1") p.x1 = v.get<double>();
                else if (k == "x2") p.x2 = v.get<double>();
                else assign_common(p, k, v);
              });
  p.check();
  return p;
}

ModelSpec build_example1(const Example1Params& params) {
  params.check();
  ModelSpec spec;
  spec.name = "example1";
  spec.domain = TraitDomain::box({0.0}, {params.x0});
  fill_common(spec, params);
  spec.allometric = [](TraitView, double) { return 1.0; };
  spec.allometric_bound = 1.0;
  spec.allometric_floor = [](double) { return 1.0; };
  spec.allometric_primitive = AllometricPrimitive{
      [](TraitView, double a) { return a; },
      [](TraitView, double value) { return value; }};
  return spec;
}

ModelSpec build_example2(const Example2Params& params) {
  params.check();
  ModelSpec spec;
  spec.name = "example2";
  spec.domain = TraitDomain::box({params.x1}, {params.x2});
  fill_common(spec, params);
  const double x1 = params.x1;
  spec.allometric = [](TraitView x, double a) { return x[0] * a; };
  spec.allometric_bound = kInfinity;
  spec.allometric_floor = [x1](double a) { return x1 * a; };
  spec.allometric_primitive = AllometricPrimitive{
      [](TraitView x, double a) { return 0.5 * x[0] * a * a; },
      [](TraitView x, double value) { return std::sqrt(2.0 * value / x[0]); }};
  return spec;
}

ModelSpec build_example(int id, const nlohmann::json& overrides) {
  if (id == 1) return build_example1(example1_params_from_json(overrides));
  if (id == 2) return build_example2(example2_params_from_json(overrides));
  throw ConfigError("example id must be 1 or 2");
}

ModelSpec build_critical(double rate) {
  if (!(rate >= 0.0) || !std::isfinite(rate)) throw ConfigError("critical rate must be finite and >= 0");
  ModelSpec spec;
  spec.name = "critical";
  spec.domain = TraitDomain::box({0.0}, {4.0});
  spec.birth = [](TraitView, double) { return 0.0; };
  spec.death = [](TraitView, double) { return 0.0; };
  spec.allometric = [rate](TraitView, double) { return rate; };
  spec.allometric_bound = rate;
  spec.allometric_floor = [rate](double) { return rate; };
  spec.allometric_primitive = AllometricPrimitive{
      [rate](TraitView, double a) { return rate * a; },
      [rate](TraitView, double value) { return rate > 0.0 ? value / rate : kInfinity; }};
  set_focal_interaction(spec, [](TraitView, double) { return 0.0; }, 0.0);
  spec.mutation_prob = [](TraitView, double) { return 0.0; };
  spec.mutation = std::make_shared<PointMassZeroKernel>();
  return spec;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double example2_birth_factor(double x) {
  return 2.0 * std::exp(1.0 / (2.0 * x)) * normal_cdf(-1.0 / std::sqrt(x));
}

double closed_form_hatted(int id, HattedKind which, double x, const Example1Params& params) {
  if (id != 1 && id != 2) throw ConfigError("example id must be 1 or 2");
  switch (which) {
    case HattedKind::b:
      return id == 1 ? x * (params.x0 - x) / 2.0 : x * (params.x0 - x) * example2_birth_factor(x);
    case HattedKind::d: return params.d0;
    case HattedKind::U: return params.eta * (params.x0 - x);
    case HattedKind::r: return id == 1 ? 1.0 : std::sqrt(2.0 * x / std::numbers::pi);
  }
  return 0.0;
}

double DominationConfig::m0() const {
  const double x0 = params.x0, d0 = params.d0;
  return (x0 * (x0 + zeta) / 2.0 - d0) / (params.eta * (2.0 * d0 / x0 - zeta));
}

double DominationConfig::drift(double z) const {
  const double x0 = params.x0, d0 = params.d0;
  const double m = m0();
  return -zeta * x0 / 2.0 * z + (z <= m ? m * (x0 * (x0 + zeta) / 2.0 - d0) : 0.0);
}

void DominationConfig::check(double initial) const {
  params.check();
  const double upper = std::min(2.0 * params.d0 / params.x0, 1.0);
  if (!(zeta > 0.0 && zeta < upper)) throw ConfigError("zeta must lie strictly inside (0, min(2 d0 / x0, 1))");
  if (!(m0() > 0.0)) throw ConfigError("m0 must be > 0");
  if (!(ceiling_value() > std::max(initial, m0()))) throw ConfigError("ceiling M must exceed max(z, m0)");
  if (!(step > 0.0)) throw ConfigError("Euler step must be > 0");
  if (!(absorption >= 0.0)) throw ConfigError("absorption threshold must be >= 0");
  if (!(horizon > 0.0)) throw ConfigError("horizon must be > 0");
  if (!(initial >= 0.0)) throw ConfigError("initial mass must be >= 0");
}

nlohmann::json DominationConfig::to_json() const {
  return {{"x0", params.x0}, {"d0", params.d0}, {"eta", params.eta},
          {"zeta", zeta}, {"ceiling", ceiling_value()}, {"step", step},
          {"absorption", absorption}, {"truncation_tolerance", truncation_tolerance},
          {"horizon", horizon}, {"m0", m0()}};
}

LambdaBound lambda_bound(const Example1Params& params, const DominationConfig& cfg, double x,
                         double mass) {
  const double x0 = params.x0, d0 = params.d0;
  LambdaBound out;
  out.lambda = x * (x0 - x) / 2.0 - (d0 + params.eta * (x0 - x) * mass);
  const double m0 = cfg.m0();
  // At Z = m0 both indicator terms are active.
  out.bound = (mass >= m0 ? -cfg.zeta * x0 / 2.0 : 0.0) + (mass <= m0 ? x0 * x0 / 2.0 - d0 : 0.0);
  return out;
}

nlohmann::json LambdaCheck::to_json() const {
  return {{"draws", draws}, {"violations", violations}, {"worst_excess", worst_excess},
          {"worst_x", worst_x}, {"worst_mass", worst_mass}};
}

LambdaCheck lambda_bound_check(const DominationConfig& cfg, std::size_t draws, std::uint64_t seed) {
  cfg.check(0.0);
  RandomStream rng(seed);
  const double m0 = cfg.m0();
  const double ceiling = cfg.ceiling_value();
  LambdaCheck out;
  out.draws = draws;
  for (std::size_t k = 0; k < draws; ++k) {
    const double x = cfg.params.x0 * rng.uniform();
    const double mass = (k % 2 == 0 ? 2.0 * m0 : ceiling) * rng.uniform();
    const LambdaBound lb = lambda_bound(cfg.params, cfg, x, mass);
    const double excess = lb.lambda - lb.bound;
    if (excess > 0.0) ++out.violations;
    if (excess > out.worst_excess) {
      out.worst_excess = excess;
      out.worst_x = x;
      out.worst_mass = mass;
    }
  }
  return out;
}

DiffusionPath dominating_diffusion(const DominationConfig& cfg, double initial, double horizon,
                                   std::uint64_t seed, const DiffusionOptions& opts) {
  cfg.check(initial);
  DiffusionPath path;
  RandomStream rng(seed);
  const double m0 = cfg.m0();
  const double ceiling = cfg.ceiling_value();
  const double h = cfg.step;
  const double sqrt_h = std::sqrt(h);
  double z = initial;
  double t = 0.0;
  auto note = [&] {
    if (!path.tau_m0 && z <= m0) path.tau_m0 = t;
    if (!path.rho_ceiling && z >= ceiling) path.rho_ceiling = t;
    if (opts.record) {
      path.times.push_back(t);
      path.values.push_back(z);
    }
  };
  if (z <= cfg.absorption) {
    z = 0.0;
    path.tau_zero = 0.0;
  }
  note();
  const auto steps = static_cast<std::size_t>(std::ceil(horizon / h - 1e-9));
  for (std::size_t k = 1; k <= steps && !path.tau_zero; ++k) {
    if (opts.stop_at_exit && (path.tau_m0 || path.rho_ceiling)) break;
    const double noise = opts.noise ? std::sqrt(2.0 * std::max(z, 0.0)) * sqrt_h * rng.normal() : 0.0;
    double next = z + cfg.drift(z) * h + noise;
    if (next < -cfg.truncation_tolerance) path.step_warning = true;
    t = std::min(horizon, static_cast<double>(k) * h);
    if (next <= cfg.absorption) {
      next = 0.0;
      path.tau_zero = t;
    }
    z = next;
    note();
  }
  path.final_time = t;
  path.final_value = z;
  return path;
}

nlohmann::json HittingBoundRecord::to_json() const {
  return {{"z", z}, {"m0", m0}, {"bound", bound}, {"estimate", estimate},
          {"standard_error", standard_error}, {"ci_lower", ci_lower}, {"ci_upper", ci_upper},
          {"replicates", replicates}, {"censored", censored}, {"step_warnings", step_warnings},
          {"holds", holds}};
}

HittingBoundRecord hitting_bound_check(const DominationConfig& cfg, double z, std::size_t replicates,
                                       std::uint64_t seed, std::size_t threads, bool noise) {
  if (replicates == 0) throw ConfigError("replicate count must be >= 1");
  cfg.check(z);
  HittingBoundRecord rec;
  rec.z = z;
  rec.m0 = cfg.m0();
  rec.bound = 2.0 * z / (cfg.zeta * cfg.params.x0);
  rec.replicates = replicates;
  std::vector<double> samples(replicates, 0.0);
  std::vector<char> censored(replicates, 0), warned(replicates, 0);
  if (z > rec.m0) {
    DiffusionOptions opts;
    opts.noise = noise;
    opts.stop_at_exit = true;
    parallel_for(replicates, threads, [&](std::size_t k) {
      const DiffusionPath path = dominating_diffusion(cfg, z, cfg.horizon, derive_seed(seed, k), opts);
      double tau = path.final_time;
      if (path.tau_m0) tau = *path.tau_m0;
      if (path.rho_ceiling) tau = std::min(tau, *path.rho_ceiling);
      if (!path.tau_m0 && !path.rho_ceiling) censored[k] = 1;
      warned[k] = path.step_warning ? 1 : 0;
      samples[k] = rec.m0 * tau;
    });
  }
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= static_cast<double>(replicates);
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  var = replicates > 1 ? var / static_cast<double>(replicates - 1) : 0.0;
  rec.estimate = mean;
  rec.standard_error = std::sqrt(var / static_cast<double>(replicates));
  rec.ci_lower = mean - 1.96 * rec.standard_error;
  rec.ci_upper = mean + 1.96 * rec.standard_error;
  rec.censored = static_cast<std::size_t>(std::count(censored.begin(), censored.end(), 1));
  rec.step_warnings = static_cast<std::size_t>(std::count(warned.begin(), warned.end(), 1));
  rec.holds = rec.ci_upper <= rec.bound;
  return rec;
}

std::vector<ExtinctionRecord> extinction_times(int example_id, const ModelSpec& spec, SimConfig cfg,
                                               std::size_t count, std::size_t threads) {
  if (count == 0) throw ConfigError("replicate count must be >= 1");
  cfg.snapshot_cadence = cfg.horizon;
  if (cfg.mass_cadence == 0.0) cfg.mass_cadence = cfg.horizon / 100.0;
  cfg.check();
  std::vector<ExtinctionRecord> out(count);
  parallel_for(count, threads, [&](std::size_t k) {
    SimConfig local = cfg;
    local.seed = derive_seed(cfg.seed, k);
    const Trajectory traj = simulate(spec, local);
    out[k] = {example_id, local.seed, traj.extinction_time, cfg.horizon};
  });
  return out;
}

double median_extinction_time(const std::vector<ExtinctionRecord>& records) {
  if (records.empty()) return kInfinity;
  std::vector<double> t;
  t.reserve(records.size());
  for (const auto& r : records) t.push_back(r.extinction_time.value_or(kInfinity));
  std::sort(t.begin(), t.end());
  const std::size_t m = t.size() / 2;
  if (t.size() % 2 == 1) return t[m];
  return 0.5 * (t[m - 1] + t[m]);
}

}  // namespace agetrait
