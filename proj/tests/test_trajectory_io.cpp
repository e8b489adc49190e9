#include "doctest.h"

#include "agetrait/errors.hpp"
#include "agetrait/examples.hpp"
#include "agetrait/trajectory_io.hpp"
#include "support.hpp"

using namespace agetrait;

TEST_CASE("trajectory directory round trip") {
  const ModelSpec spec = build_example1();
  SimConfig cfg;
  cfg.scale = SimScale(100);
  cfg.horizon = 0.5;
  cfg.snapshot_cadence = 0.1;
  cfg.initial.count = 100;
  cfg.initial.trait = {1.5};
  cfg.seed = 4;
  const Trajectory traj = simulate(spec, cfg);
  const auto dir = testing::scratch_dir("roundtrip");
  write_trajectory(dir, traj, sim_config_to_json(cfg));
  const Trajectory back = read_trajectory(dir);
  CHECK(back.seed == traj.seed);
  CHECK(back.horizon == traj.horizon);
  CHECK(back.counters == traj.counters);
  CHECK(back.extinction_time == traj.extinction_time);
  CHECK(back.mass_times == traj.mass_times);
  CHECK(back.mass_values == traj.mass_values);
  REQUIRE(back.snapshots.size() == traj.snapshots.size());
  for (std::size_t k = 0; k < traj.snapshots.size(); ++k) {
    CHECK(back.snapshots[k].traits == traj.snapshots[k].traits);
    CHECK(back.snapshots[k].ages == traj.snapshots[k].ages);
    CHECK(back.snapshots[k].weight == traj.snapshots[k].weight);
  }
  const auto meta = nlohmann::json::parse(testing::slurp(dir / "meta.json"));
  CHECK(sim_config_from_json(meta.at("config")).seed == 4);
}

TEST_CASE("measure csv schema") {
  MeasureSample s;
  s.time = 0.25;
  s.trait_dim = 2;
  s.traits = {0.1, 0.2, 1.0 / 3.0, 4.0};
  s.ages = {0.5, 2.0};
  s.weight = 0.01;
  const auto dir = testing::scratch_dir("measure");
  write_measure_csv(dir / "m.csv", s);
  const auto rows = testing::read_csv(dir / "m.csv");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == std::vector<std::string>{"t", "trait_1", "trait_2", "age", "weight"});
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].size() == 5);
  const MeasureSample back = read_measure_csv(dir / "m.csv", 0.25, 0.01);
  CHECK(back.traits == s.traits);
  CHECK(back.ages == s.ages);
  CHECK(back.trait_dim == 2);

  MeasureSample empty;
  empty.time = 1.0;
  write_measure_csv(dir / "empty.csv", empty);
  CHECK(read_measure_csv(dir / "empty.csv", 1.0, 0.5).size() == 0);
}

TEST_CASE("simulation config json") {
  SimConfig cfg;
  cfg.horizon = 2.5;
  cfg.snapshot_cadence = 0.1;
  cfg.scheme = Scheme::discretized;
  cfg.dt = 1e-4;
  cfg.scale = SimScale(77);
  cfg.seed = 18446744073709551557ull;
  cfg.initial.count = 12;
  cfg.initial.trait_law = InitialCondition::TraitLaw::uniform_box;
  cfg.initial.trait = {0.5, 1.5};
  cfg.initial.age_law = InitialCondition::AgeLaw::exponential;
  cfg.initial.age = 3.0;
  const auto j = sim_config_to_json(cfg);
  const SimConfig back = sim_config_from_json(nlohmann::json::parse(j.dump()));
  CHECK(sim_config_to_json(back) == j);
  CHECK(back.seed == cfg.seed);

  CHECK_THROWS_AS(sim_config_from_json({{"horizon", 1.0}, {"colour", "red"}}), ConfigError);
  CHECK_THROWS_AS(sim_config_from_json({{"horizon", -1.0}}), ConfigError);
  CHECK_THROWS_AS(sim_config_from_json({{"scheme", "euler"}}), ConfigError);
  CHECK_THROWS_AS(sim_config_from_json({{"horizon", "long"}}), ConfigError);
}

TEST_CASE("unwritable output") {
  CHECK_THROWS_AS(open_output("/dev/null/sub/file.csv"), OutputError);
}
