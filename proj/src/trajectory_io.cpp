#include "agetrait/trajectory_io.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "agetrait/errors.hpp"

namespace agetrait {

namespace fs = std::filesystem;

namespace {

// Shortest representation that round-trips.
void put(std::ostream& os, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  os.write(buf, res.ptr - buf);
}

double parse_double(const std::string& field, const fs::path& path) {
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw std::runtime_error("malformed number '" + field + "' in " + path.string());
  }
  return v;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string snapshot_name(std::size_t k) { return "t_" + std::to_string(k) + ".csv"; }

}  // namespace

std::ofstream open_output(const fs::path& path) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream os(path);
  if (!os) throw OutputError("cannot write " + path.string());
  return os;
}

void write_measure_csv(std::ostream& os, const MeasureSample& sample) {
  os << "t";
  for (std::size_t k = 1; k <= sample.trait_dim; ++k) os << ",trait_" << k;
  os << ",age,weight\n";
  for (std::size_t i = 0; i < sample.size(); ++i) {
    put(os, sample.time);
    for (double v : sample.trait(i)) {
      os << ',';
      put(os, v);
    }
    os << ',';
    put(os, sample.ages[i]);
    os << ',';
    put(os, sample.weight);
    os << '\n';
  }
}

void write_measure_csv(const fs::path& path, const MeasureSample& sample) {
  auto os = open_output(path);
  write_measure_csv(os, sample);
  if (!os) throw OutputError("failed writing " + path.string());
}

MeasureSample read_measure_csv(const fs::path& path, double time, double weight) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty measure file " + path.string());
  const auto header = split(line);
  if (header.size() < 4 || header.front() != "t" || header[header.size() - 2] != "age" ||
      header.back() != "weight") {
    throw std::runtime_error("unexpected measure header in " + path.string());
  }
  MeasureSample s;
  s.time = time;
  s.weight = weight;
  s.trait_dim = header.size() - 3;
  for (std::size_t k = 0; k < s.trait_dim; ++k) {
    if (header[k + 1] != "trait_" + std::to_string(k + 1)) {
      throw std::runtime_error("unexpected trait column in " + path.string());
    }
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != header.size()) throw std::runtime_error("ragged row in " + path.string());
    s.time = parse_double(fields[0], path);
    for (std::size_t k = 0; k < s.trait_dim; ++k) s.traits.push_back(parse_double(fields[k + 1], path));
    s.ages.push_back(parse_double(fields[s.trait_dim + 1], path));
    s.weight = parse_double(fields.back(), path);
  }
  return s;
}

void write_mass_csv(const fs::path& path, const Trajectory& traj) {
  auto os = open_output(path);
  os << "t,mass\n";
  for (std::size_t k = 0; k < traj.mass_times.size(); ++k) {
    put(os, traj.mass_times[k]);
    os << ',';
    put(os, traj.mass_values[k]);
    os << '\n';
  }
  if (!os) throw OutputError("failed writing " + path.string());
}

nlohmann::json trajectory_meta(const Trajectory& traj) {
  nlohmann::json j;
  j["seed"] = traj.seed;
  j["horizon"] = traj.horizon;
  j["n"] = traj.scale_n;
  j["counters"] = {{"births", traj.counters.births},
                   {"deaths", traj.counters.deaths},
                   {"mutations", traj.counters.mutations},
                   {"rejections", traj.counters.rejections}};
  j["initial_count"] = traj.initial_count;
  j["final_count"] = traj.final_count;
  j["extinction_time"] = traj.extinction_time ? nlohmann::json(*traj.extinction_time) : nlohmann::json();
  j["snapshot_times"] = traj.snapshot_times;
  j["trait_dim"] = traj.snapshots.empty() ? 1 : traj.snapshots.front().trait_dim;
  return j;
}

void write_trajectory(const fs::path& dir, const Trajectory& traj, const nlohmann::json& config) {
  std::error_code ec;
  fs::create_directories(dir / "snapshots", ec);
  if (ec) throw OutputError("cannot create " + (dir / "snapshots").string() + ": " + ec.message());
  write_mass_csv(dir / "mass.csv", traj);
  for (std::size_t k = 0; k < traj.snapshots.size(); ++k) {
    write_measure_csv(dir / "snapshots" / snapshot_name(k), traj.snapshots[k]);
  }
  nlohmann::json meta = trajectory_meta(traj);
  meta["config"] = config;
  auto os = open_output(dir / "meta.json");
  os << meta.dump(2) << '\n';
  if (!os) throw OutputError("failed writing " + (dir / "meta.json").string());
}

Trajectory read_trajectory(const fs::path& dir) {
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in) throw std::runtime_error("cannot read " + (dir / "meta.json").string());
  const nlohmann::json meta = nlohmann::json::parse(meta_in);
  Trajectory traj;
  traj.seed = meta.at("seed").get<std::uint64_t>();
  traj.horizon = meta.at("horizon").get<double>();
  traj.scale_n = meta.at("n").get<std::int64_t>();
  const auto& c = meta.at("counters");
  traj.counters = {c.at("births").get<std::uint64_t>(), c.at("deaths").get<std::uint64_t>(),
                   c.at("mutations").get<std::uint64_t>(), c.at("rejections").get<std::uint64_t>()};
  traj.initial_count = meta.at("initial_count").get<std::size_t>();
  traj.final_count = meta.at("final_count").get<std::size_t>();
  if (!meta.at("extinction_time").is_null()) traj.extinction_time = meta.at("extinction_time").get<double>();
  traj.snapshot_times = meta.at("snapshot_times").get<std::vector<double>>();
  const double weight = 1.0 / static_cast<double>(traj.scale_n);
  const auto dim = meta.value("trait_dim", std::size_t{1});
  for (std::size_t k = 0; k < traj.snapshot_times.size(); ++k) {
    MeasureSample s = read_measure_csv(dir / "snapshots" / snapshot_name(k), traj.snapshot_times[k], weight);
    s.time = traj.snapshot_times[k];
    if (s.size() == 0) s.trait_dim = dim;
    traj.snapshots.push_back(std::move(s));
  }
  std::ifstream mass_in(dir / "mass.csv");
  if (!mass_in) throw std::runtime_error("cannot read " + (dir / "mass.csv").string());
  std::string line;
  std::getline(mass_in, line);
  if (line != "t,mass") throw std::runtime_error("unexpected header in mass.csv");
  while (std::getline(mass_in, line)) {
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 2) throw std::runtime_error("ragged row in mass.csv");
    traj.mass_times.push_back(parse_double(f[0], dir / "mass.csv"));
    traj.mass_values.push_back(parse_double(f[1], dir / "mass.csv"));
  }
  return traj;
}

nlohmann::json sim_config_to_json(const SimConfig& cfg) {
  const auto& init = cfg.initial;
  return {{"horizon", cfg.horizon},
          {"snapshot_cadence", cfg.snapshot_cadence},
          {"mass_cadence", cfg.mass_cadence},
          {"scheme", to_string(cfg.scheme)},
          {"dt", cfg.dt},
          {"n", cfg.scale.n},
          {"seed", cfg.seed},
          {"initial_count", init.count},
          {"trait_law", init.trait_law == InitialCondition::TraitLaw::point ? "point" : "uniform_box"},
          {"initial_trait", init.trait},
          {"age_law", init.age_law == InitialCondition::AgeLaw::fixed ? "fixed" : "exponential"},
          {"initial_age", init.age}};
}

SimConfig sim_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> keys = {"horizon", "snapshot_cadence", "mass_cadence", "scheme",
                                             "dt", "n", "seed", "initial_count", "trait_law",
                                             "initial_trait", "age_law", "initial_age"};
  if (!j.is_object()) throw ConfigError("simulation config must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!keys.count(k)) throw ConfigError("unknown simulation config key '" + k + "'");
  }
  SimConfig cfg;
  try {
    cfg.horizon = j.value("horizon", cfg.horizon);
    cfg.snapshot_cadence = j.value("snapshot_cadence", cfg.snapshot_cadence);
    cfg.mass_cadence = j.value("mass_cadence", cfg.mass_cadence);
    cfg.scheme = scheme_from_string(j.value("scheme", to_string(cfg.scheme)));
    cfg.dt = j.value("dt", cfg.dt);
    cfg.scale = SimScale(j.value("n", cfg.scale.n));
    cfg.seed = j.value("seed", cfg.seed);
    auto& init = cfg.initial;
    init.count = j.value("initial_count", init.count);
    const auto trait_law = j.value("trait_law", std::string("point"));
    if (trait_law == "point") {
      init.trait_law = InitialCondition::TraitLaw::point;
    } else if (trait_law == "uniform_box") {
      init.trait_law = InitialCondition::TraitLaw::uniform_box;
    } else {
      throw ConfigError("unknown trait law '" + trait_law + "'");
    }
    if (j.contains("initial_trait")) init.trait = j.at("initial_trait").get<Trait>();
    const auto age_law = j.value("age_law", std::string("fixed"));
    if (age_law == "fixed") {
      init.age_law = InitialCondition::AgeLaw::fixed;
    } else if (age_law == "exponential") {
      init.age_law = InitialCondition::AgeLaw::exponential;
    } else {
      throw ConfigError("unknown age law '" + age_law + "'");
    }
    init.age = j.value("initial_age", init.age);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed simulation config: ") + e.what());
  }
  cfg.check();
  return cfg;
}

}  // namespace agetrait
