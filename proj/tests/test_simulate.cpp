#include <cmath>

#include "doctest.h"

#include "agetrait/errors.hpp"
#include "agetrait/examples.hpp"
#include "agetrait/simulate.hpp"
#include "support.hpp"

using namespace agetrait;

namespace {

SimConfig critical_config(Scheme scheme, std::int64_t n, std::size_t count, double horizon) {
  SimConfig cfg;
  cfg.scheme = scheme;
  cfg.scale = SimScale(n);
  cfg.horizon = horizon;
  cfg.snapshot_cadence = horizon;
  cfg.mass_cadence = horizon;
  cfg.initial.count = count;
  cfg.initial.trait = {1.0};
  return cfg;
}

void require_identical(const Trajectory& a, const Trajectory& b) {
  REQUIRE(a.snapshot_times == b.snapshot_times);
  REQUIRE(a.mass_times == b.mass_times);
  REQUIRE(a.mass_values == b.mass_values);
  REQUIRE(a.counters == b.counters);
  REQUIRE(a.extinction_time == b.extinction_time);
  REQUIRE(a.seed == b.seed);
  REQUIRE(a.snapshots.size() == b.snapshots.size());
  for (std::size_t k = 0; k < a.snapshots.size(); ++k) {
    REQUIRE(a.snapshots[k].traits == b.snapshots[k].traits);
    REQUIRE(a.snapshots[k].ages == b.snapshots[k].ages);
  }
}

SimConfig example1_config(double horizon) {
  SimConfig cfg;
  cfg.scale = SimScale(1000);
  cfg.horizon = horizon;
  cfg.initial.count = 1000;
  cfg.initial.trait = {1.5};
  cfg.snapshot_cadence = horizon / 4;
  return cfg;
}

}  // namespace

TEST_CASE("critical branching extinction fraction") {
  // Binary splitting at rate 1: P(extinct by t) = t / (1 + t).
  const ModelSpec spec = build_critical();
  for (Scheme scheme : {Scheme::exact, Scheme::exact_split}) {
    const auto trajs = run_replicates(spec, critical_config(scheme, 1, 1, 1.0), 4000, 0);
    double extinct = 0.0;
    for (const auto& t : trajs) extinct += t.extinction_time ? 1.0 : 0.0;
    const double frac = extinct / 4000.0;
    // sd is 0.0079 at p = 0.5
    CHECK(std::abs(frac - 0.5) < 0.032);
  }
}

TEST_CASE("no events without rates") {
  const ModelSpec spec = testing::constant_model({{"r", 0.0}});
  SimConfig cfg = critical_config(Scheme::exact, 10, 25, 5.0);
  cfg.snapshot_cadence = 1.0;
  for (Scheme scheme : {Scheme::exact, Scheme::exact_split, Scheme::discretized}) {
    cfg.scheme = scheme;
    cfg.dt = 0.01;
    const Trajectory traj = simulate(spec, cfg);
    CHECK(traj.counters.births == 0);
    CHECK(traj.counters.deaths == 0);
    CHECK(traj.final_count == 25);
    for (double m : traj.mass_values) CHECK(m == doctest::Approx(2.5));
    // ages advance at speed n
    CHECK(traj.snapshots.back().ages[0] == doctest::Approx(50.0));
  }
}

TEST_CASE("discretized step size is enforced") {
  const ModelSpec spec = build_example1();
  SimConfig cfg = example1_config(0.1);
  cfg.scheme = Scheme::discretized;
  cfg.dt = 0.005;
  // n r_bar dt = 5 > 1: the figure caption's step cannot be a Bernoulli step at n = 1000.
  CHECK_THROWS_AS(simulate(spec, cfg), StepSizeError);
  cfg.dt = 1e-5;
  CHECK_NOTHROW(simulate(spec, cfg));
}

TEST_CASE("replicates") {
  const ModelSpec spec = build_example1();
  SimConfig cfg = example1_config(0.2);
  cfg.scale = SimScale(100);
  cfg.initial.count = 100;
  cfg.seed = 99;
  SUBCASE("count 1 equals a single run with the derived seed") {
    const auto reps = run_replicates(spec, cfg, 1, 1);
    SimConfig single = cfg;
    single.seed = derive_seed(cfg.seed, 0);
    require_identical(reps[0], simulate(spec, single));
  }
  SUBCASE("same seed twice and any thread count: identical") {
    const auto a = run_replicates(spec, cfg, 6, 1);
    const auto b = run_replicates(spec, cfg, 6, 3);
    for (std::size_t k = 0; k < a.size(); ++k) require_identical(a[k], b[k]);
  }
  SUBCASE("offset batches match the full run") {
    const auto all = run_replicates(spec, cfg, 5, 1);
    const auto tail = run_replicates(spec, cfg, 3, 2, 2);
    require_identical(all[3], tail[0]);
    require_identical(all[4], tail[1]);
  }
}

TEST_CASE("trajectory invariants") {
  const ModelSpec spec = build_example2();
  SimConfig cfg = example1_config(0.3);
  cfg.scale = SimScale(200);
  cfg.initial.count = 300;
  cfg.scheme = Scheme::exact_split;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    cfg.seed = seed;
    const Trajectory traj = simulate(spec, cfg);
    CHECK(traj.initial_count + traj.counters.births - traj.counters.deaths == traj.final_count);
    CHECK(traj.counters.mutations <= traj.counters.births);
    for (std::size_t k = 1; k < traj.mass_times.size(); ++k) REQUIRE(traj.mass_times[k] >= traj.mass_times[k - 1]);
    for (double m : traj.mass_values) REQUIRE(m >= 0.0);
    for (const auto& s : traj.snapshots) {
      CHECK(s.weight == doctest::Approx(1.0 / 200));
      CHECK(traj.mass_at(s.time) == doctest::Approx(s.total_mass()));
      for (std::size_t i = 0; i < s.size(); ++i) {
        REQUIRE(s.ages[i] >= 0.0);
        REQUIRE(spec.domain.contains(s.trait(i)));
      }
    }
    if (traj.extinction_time) CHECK(traj.final_count == 0);
  }
}

TEST_CASE("exact scheme needs a finite allometric bound") {
  SimConfig cfg = example1_config(0.1);
  cfg.scheme = Scheme::exact;
  CHECK_THROWS(simulate(build_example2(), cfg));
}

TEST_CASE("scheme names") {
  for (Scheme s : {Scheme::exact, Scheme::exact_split, Scheme::discretized}) CHECK(scheme_from_string(to_string(s)) == s);
  CHECK_THROWS_AS(scheme_from_string("gillespie"), ConfigError);
}

TEST_CASE("snapshot grid") {
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.snapshot_cadence = 0.3;
  const auto t = cfg.snapshot_times();
  REQUIRE(t.size() == 5);
  CHECK(t.front() == 0.0);
  CHECK(t.back() == 1.0);
  cfg.snapshot_cadence = 0.0;
  CHECK(cfg.snapshot_times().size() == 101);
}
