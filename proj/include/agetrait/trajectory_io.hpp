#pragma once

// On-disk layout of a trajectory directory:
//   mass.csv               t,mass
//   snapshots/t_<k>.csv    t,trait_1..trait_d,age,weight
//   meta.json              config echo, counters, extinction_time, seed, snapshot times

#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"

#include "agetrait/population.hpp"
#include "agetrait/simulate.hpp"

namespace agetrait {

void write_measure_csv(std::ostream& os, const MeasureSample& sample);
void write_measure_csv(const std::filesystem::path& path, const MeasureSample& sample);
// `time` and `weight` fill in what an empty file cannot carry.
MeasureSample read_measure_csv(const std::filesystem::path& path, double time, double weight);

void write_mass_csv(const std::filesystem::path& path, const Trajectory& traj);

nlohmann::json trajectory_meta(const Trajectory& traj);

// `config` is echoed under "config" in meta.json.
void write_trajectory(const std::filesystem::path& dir, const Trajectory& traj,
                      const nlohmann::json& config);
Trajectory read_trajectory(const std::filesystem::path& dir);

// Flat JSON form of SimConfig, keys as in the CLI flags:
//   horizon, snapshot_cadence, mass_cadence, scheme, dt, n, seed,
//   initial_count, trait_law, initial_trait, age_law, initial_age
nlohmann::json sim_config_to_json(const SimConfig& cfg);
// Missing keys keep their defaults; unknown keys raise ConfigError.
SimConfig sim_config_from_json(const nlohmann::json& j);

// Opens a file for writing or throws OutputError naming the path.
std::ofstream open_output(const std::filesystem::path& path);

}  // namespace agetrait
