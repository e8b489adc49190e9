#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "agetrait/model.hpp"
#include "agetrait/population.hpp"

namespace agetrait {

enum class Scheme {
  exact,        // uniform thinning against N[(n r_bar + b_bar) + (n r_bar + d_bar + U_bar N/n)]
  exact_split,  // per-individual clocks for the n r part, thinning for b, d, XU
  discretized,  // frozen-rate Bernoulli steps of length dt
};

std::string to_string(Scheme scheme);
Scheme scheme_from_string(const std::string& name);

struct InitialCondition {
  enum class TraitLaw { point, uniform_box };
  enum class AgeLaw { fixed, exponential };

  std::size_t count = 1;
  TraitLaw trait_law = TraitLaw::point;
  Trait trait{0.0};  // used by TraitLaw::point
  AgeLaw age_law = AgeLaw::fixed;
  double age = 0.0;  // fixed age, or rate of the exponential law
};

struct SimConfig {
  double horizon = 1.0;
  double snapshot_cadence = 0.0;  // 0 means horizon / 100
  double mass_cadence = 0.0;      // 0 means one point per accepted event (or step)
  Scheme scheme = Scheme::exact;
  double dt = 0.0;                // step length for Scheme::discretized
  SimScale scale{1};
  InitialCondition initial;
  std::uint64_t seed = 0;

  void check() const;
  std::vector<double> snapshot_times() const;
};

struct EventCounters {
  std::uint64_t births = 0;
  std::uint64_t deaths = 0;
  std::uint64_t mutations = 0;
  std::uint64_t rejections = 0;

  bool operator==(const EventCounters&) const = default;
};

struct Trajectory {
  std::vector<double> snapshot_times;
  std::vector<MeasureSample> snapshots;
  std::vector<double> mass_times;
  std::vector<double> mass_values;
  EventCounters counters;
  std::size_t initial_count = 0;
  std::size_t final_count = 0;
  std::optional<double> extinction_time;
  std::uint64_t seed = 0;
  double horizon = 0.0;
  std::int64_t scale_n = 1;

  // Right-continuous step lookup in the recorded mass series.
  double mass_at(double t) const;
  // Index of the snapshot whose time is nearest to t.
  std::size_t nearest_snapshot(double t) const;
};

Population initial_population(const ModelSpec& spec, const SimConfig& cfg, RandomStream& rng);

Trajectory simulate_exact(const ModelSpec& spec, const SimConfig& cfg);
Trajectory simulate_exact_split(const ModelSpec& spec, const SimConfig& cfg);
Trajectory simulate_discretized(const ModelSpec& spec, const SimConfig& cfg);
// Dispatches on cfg.scheme.
Trajectory simulate(const ModelSpec& spec, const SimConfig& cfg);

// Replicate k runs with seed derive_seed(cfg.seed, k). Output does not depend
// on `threads` (0 means hardware concurrency).
std::vector<Trajectory> run_replicates(const ModelSpec& spec, const SimConfig& cfg,
                                       std::size_t count, std::size_t threads = 0);
// Same, with replicate indices [first, first + count).
std::vector<Trajectory> run_replicates(const ModelSpec& spec, const SimConfig& cfg,
                                       std::size_t first, std::size_t count,
                                       std::size_t threads);

}  // namespace agetrait
