// agetrait: simulations, equilibrium tables, limit diagnostics and example
// reproductions from the command line.
//
// Every subcommand takes its settings from flags, from --config (a raw config
// object or a meta.json whose "config" member is used), or both; flags win.
// Each flag --some-key mirrors the JSON key some_key.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "agetrait/equilibrium.hpp"
#include "agetrait/errors.hpp"
#include "agetrait/examples.hpp"
#include "agetrait/limitdiag.hpp"
#include "agetrait/model_json.hpp"
#include "agetrait/simulate.hpp"
#include "agetrait/trajectory_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace agetrait;

namespace {

enum ExitCode : int {
  kOk = 0,
  kInvalidFlags = 2,
  kUnknownModel = 3,
  kUnwritableOutput = 4,
  kInvalidCombination = 5,
  kRuntimeFailure = 6,
};

struct CombinationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Kind { number, integer, count, text, list };

struct Field {
  std::string key;
  Kind kind;
  json fallback;  // null: derived at run time
  std::string help;
};

std::string flag_of(const std::string& key) {
  std::string f = key;
  for (char& c : f) {
    if (c == '_') c = '-';
  }
  return "--" + f;
}

const std::vector<Field>& sim_fields() {
  static const std::vector<Field> fields = {
      {"horizon", Kind::number, 1.0, "final time T"},
      {"snapshot_cadence", Kind::number, 0.0, "time between snapshots (0: T/100)"},
      {"mass_cadence", Kind::number, 0.0, "time between mass records (0: every event)"},
      {"scheme", Kind::text, "auto", "exact, exact_split, discretized or auto"},
      {"dt", Kind::number, 0.0, "step of the discretized scheme"},
      {"n", Kind::integer, 1000, "scale parameter n"},
      {"seed", Kind::count, 0, "base seed"},
      {"initial_count", Kind::count, 1000, "initial number of individuals"},
      {"trait_law", Kind::text, "point", "point or uniform_box"},
      {"initial_trait", Kind::list, nullptr, "initial trait, comma separated (default: domain midpoint)"},
      {"age_law", Kind::text, "fixed", "fixed or exponential"},
      {"initial_age", Kind::number, 0.0, "fixed initial age, or rate of the exponential law"},
  };
  return fields;
}

std::vector<Field> with_sim(std::vector<Field> fields) {
  fields.insert(fields.begin(), sim_fields().begin(), sim_fields().end());
  return fields;
}

const Field kModel{"model", Kind::text, "example1", "registered model name or JSON model file"};

json convert(const Field& f, const std::string& raw) {
  const auto fail = [&] { return ConfigError("invalid value '" + raw + "' for " + flag_of(f.key)); };
  try {
    std::size_t used = 0;
    switch (f.kind) {
      case Kind::number: {
        const double v = std::stod(raw, &used);
        if (used != raw.size()) throw fail();
        return v;
      }
      case Kind::integer: {
        const long long v = std::stoll(raw, &used);
        if (used != raw.size()) throw fail();
        return v;
      }
      case Kind::count: {
        if (!raw.empty() && raw[0] == '-') throw fail();
        const unsigned long long v = std::stoull(raw, &used);
        if (used != raw.size()) throw fail();
        return v;
      }
      case Kind::text:
        return raw;
      case Kind::list: {
        json out = json::array();
        std::istringstream is(raw);
        std::string item;
        while (std::getline(is, item, ',')) {
          const double v = std::stod(item, &used);
          if (used != item.size()) throw fail();
          out.push_back(v);
        }
        if (out.empty()) throw fail();
        return out;
      }
    }
  } catch (const std::logic_error&) {
    throw fail();
  }
  return nullptr;
}

// Checks a value read from a config file against the field kind.
void check_kind(const Field& f, const json& v) {
  if (v.is_null()) return;
  bool ok = false;
  switch (f.kind) {
    case Kind::number: ok = v.is_number(); break;
    case Kind::integer: ok = v.is_number_integer(); break;
    case Kind::count: ok = v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0); break;
    case Kind::text: ok = v.is_string() || (f.key == "model" && v.is_object()); break;
    case Kind::list:
      ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number(); });
      break;
  }
  if (!ok) throw ConfigError("config key '" + f.key + "' has the wrong type");
}

struct Invocation {
  json cfg;
  fs::path out;
  std::size_t threads = 0;
};

using Runner = std::function<void(Invocation&)>;

struct Command {
  std::string name;
  std::string help;
  std::vector<Field> fields;
  Runner run;
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw OutputError("cannot create output directory " + dir.string());
  const fs::path probe = dir / ".agetrait-probe";
  {
    std::ofstream os(probe);
    if (!os) throw OutputError("output directory " + dir.string() + " is not writable");
  }
  fs::remove(probe, ec);
}

void write_json(const fs::path& path, const json& j) {
  auto os = open_output(path);
  os << j.dump(2) << '\n';
  if (!os) throw OutputError("failed writing " + path.string());
}

// Resolves the model and replaces the config entry by its canonical document.
LoadedModel load_model(json& cfg) {
  LoadedModel model = cfg.at("model").is_object() ? model_from_json(cfg.at("model"))
                                                  : resolve_model(cfg.at("model").get<std::string>());
  cfg["model"] = model.document;
  return model;
}

SimConfig sim_from(json& cfg, const ModelSpec& spec) {
  if (cfg.at("scheme") == "auto") cfg["scheme"] = std::isfinite(spec.allometric_bound) ? "exact" : "exact_split";
  if (cfg.at("initial_trait").is_null()) {
    Trait x(spec.trait_dim, 0.0);
    if (spec.domain.bounded()) {
      for (std::size_t k = 0; k < x.size(); ++k) x[k] = 0.5 * (spec.domain.lower()[k] + spec.domain.upper()[k]);
    }
    cfg["initial_trait"] = x;
  }
  json j = json::object();
  for (const auto& f : sim_fields()) j[f.key] = cfg.at(f.key);
  SimConfig sim = sim_config_from_json(j);
  if (sim.scheme == Scheme::exact && !std::isfinite(spec.allometric_bound)) {
    throw CombinationError("scheme exact needs a finite allometric bound; use exact_split");
  }
  if (sim.initial.trait_law == InitialCondition::TraitLaw::point && sim.initial.trait.size() != spec.trait_dim) {
    throw CombinationError("initial_trait has the wrong dimension for this model");
  }
  return sim;
}

std::size_t positive_count(const json& cfg, const std::string& key) {
  const auto v = cfg.at(key).get<std::size_t>();
  if (v == 0) throw ConfigError(key + " must be >= 1");
  return v;
}

Generator generator_for(const ModelSpec& spec) {
  Generator g;
  const auto* k = dynamic_cast<const ConditionedGaussianKernel*>(spec.mutation.get());
  if (!k || k->has_covariance_fn() || k->variances().empty()) return g;
  const auto& v = k->variances();
  if (std::any_of(v.begin(), v.end(), [&](double s) { return s != v.front(); })) {
    throw PreconditionError("the Laplacian generator needs equal mutation variances in every coordinate");
  }
  if (v.front() > 0.0) {
    g.kind = Generator::Kind::laplacian;
    g.sigma2 = v.front();
  }
  return g;
}

std::vector<Trajectory> read_trajectories(const fs::path& dir) {
  if (fs::exists(dir / "mass.csv")) return {read_trajectory(dir)};
  std::map<std::size_t, fs::path> found;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_directory() && name.rfind("replicate_", 0) == 0) {
      found[std::stoul(name.substr(10))] = entry.path();
    }
  }
  if (ec || found.empty()) throw ConfigError("no trajectories under " + dir.string());
  std::vector<Trajectory> out;
  for (const auto& [k, path] : found) out.push_back(read_trajectory(path));
  return out;
}

json echo(const std::string& command, const json& cfg) {
  json c = cfg;
  c["command"] = command;
  return c;
}

// Runs replicates in batches so that only one batch is held in memory.
void for_each_replicate(const ModelSpec& spec, const SimConfig& sim, std::size_t count, std::size_t threads,
                        const std::function<void(std::size_t, const Trajectory&)>& visit) {
  const std::size_t workers = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  const std::size_t batch = 4 * workers;
  for (std::size_t first = 0; first < count; first += batch) {
    const std::size_t m = std::min(batch, count - first);
    const auto trajs = run_replicates(spec, sim, first, m, threads);
    for (std::size_t k = 0; k < m; ++k) visit(first + k, trajs[k]);
  }
}

// ---- simulate ------------------------------------------------------------

void run_simulate(Invocation& inv) {
  auto& cfg = inv.cfg;
  const LoadedModel model = load_model(cfg);
  const SimConfig sim = sim_from(cfg, model.spec);
  const std::size_t replicates = positive_count(cfg, "replicates");
  ensure_dir(inv.out);
  const json config = echo("simulate", cfg);
  json summary = json::array();
  for_each_replicate(model.spec, sim, replicates, inv.threads, [&](std::size_t k, const Trajectory& traj) {
    const fs::path dir = replicates == 1 ? inv.out : inv.out / ("replicate_" + std::to_string(k));
    write_trajectory(dir, traj, config);
    summary.push_back({{"replicate", k},
                       {"seed", traj.seed},
                       {"extinction_time", traj.extinction_time ? json(*traj.extinction_time) : json()}});
  });
  if (replicates > 1) write_json(inv.out / "meta.json", {{"config", config}, {"replicates", summary}});
}

// ---- equilibrium ---------------------------------------------------------

EquilibriumOptions equilibrium_options(const json& cfg) {
  EquilibriumOptions opts;
  opts.age_step = cfg.at("age_step").get<double>();
  opts.tail_epsilon = cfg.at("tail_epsilon").get<double>();
  opts.search_limit = cfg.at("search_limit").get<double>();
  if (!(opts.tail_epsilon > 0.0 && opts.tail_epsilon < 1.0)) throw ConfigError("tail_epsilon must lie in (0, 1)");
  return opts;
}

std::vector<Trait> trait_grid(const json& cfg, const ModelSpec& spec) {
  if (cfg.at("traits").is_null()) return EquilibriumTable::uniform_grid(spec, positive_count(cfg, "points"));
  if (spec.trait_dim != 1) throw CombinationError("traits lists one-dimensional traits only");
  std::vector<Trait> grid;
  for (double x : cfg.at("traits").get<std::vector<double>>()) {
    if (!spec.domain.contains(std::vector<double>{x})) throw ConfigError("trait outside the model domain");
    grid.push_back({x});
  }
  return grid;
}

const std::vector<Field> kEquilibriumFields = {
    {"points", Kind::count, 101, "trait grid points per coordinate"},
    {"traits", Kind::list, nullptr, "explicit one-dimensional traits instead of the uniform grid"},
    {"age_step", Kind::number, 1.0 / 32.0, "age knot spacing"},
    {"tail_epsilon", Kind::number, 1e-10, "truncate ages where exp(-R) <= tail_epsilon"},
    {"search_limit", Kind::number, 1e4, "largest age searched for the truncation point"},
};

void run_equilibrium(Invocation& inv) {
  auto& cfg = inv.cfg;
  const LoadedModel model = load_model(cfg);
  const auto opts = equilibrium_options(cfg);
  auto grid = trait_grid(cfg, model.spec);
  ensure_dir(inv.out);
  const auto table = EquilibriumTable::build(model.spec, std::move(grid), opts, inv.threads);
  write_equilibrium_csv(inv.out / "equilibrium.csv", table);
  write_json(inv.out / "meta.json", {{"config", echo("equilibrium", cfg)}});
}

// ---- diagnose ------------------------------------------------------------

TraitFn test_function(const std::string& name) {
  if (name == "one") return [](TraitView) { return 1.0; };
  if (name == "cos") return [](TraitView x) { return std::cos(x[0]); };
  throw ConfigError("unknown test function '" + name + "' (one, cos)");
}

void run_diagnose(Invocation& inv) {
  auto& cfg = inv.cfg;
  const LoadedModel model = load_model(cfg);
  const ModelSpec& spec = model.spec;
  const SimConfig sim = sim_from(cfg, spec);
  const std::size_t replicates = positive_count(cfg, "replicates");
  const auto opts = equilibrium_options(cfg);
  if (!spec.domain.bounded()) throw CombinationError("diagnose needs a bounded trait domain");

  const auto snaps = sim.snapshot_times();
  const auto on_grid = [&](double t) {
    return std::any_of(snaps.begin(), snaps.end(), [&](double s) { return std::abs(s - t) <= 1e-9 * sim.horizon; });
  };
  if (cfg.at("time").is_null()) cfg["time"] = 0.5 * sim.horizon;
  const double time = cfg.at("time").get<double>();
  if (!on_grid(time)) throw CombinationError("time must be a snapshot time");
  if (cfg.at("martingale_times").is_null()) cfg["martingale_times"] = {0.5 * sim.horizon, sim.horizon};
  const auto mtimes = cfg.at("martingale_times").get<std::vector<double>>();
  for (double t : mtimes) {
    if (!on_grid(t)) throw CombinationError("martingale_times must be snapshot times");
  }
  if (cfg.at("bins").is_null()) {
    const double lo = spec.domain.lower()[0], hi = spec.domain.upper()[0];
    json edges = json::array();
    for (int k = 0; k <= 4; ++k) edges.push_back(lo + (hi - lo) * k / 4.0);
    cfg["bins"] = edges;
  }
  const auto bins = cfg.at("bins").get<std::vector<double>>();
  const TraitFn f = test_function(cfg.at("test_function").get<std::string>());

  ensure_dir(inv.out);
  const auto table =
      EquilibriumTable::build(spec, EquilibriumTable::uniform_grid(spec, positive_count(cfg, "points")), opts,
                              inv.threads);
  const CoefficientField coef(table);
  MartingaleOptions mopts;
  std::string martingale_skip;
  try {
    mopts.generator = generator_for(spec);
  } catch (const PreconditionError& e) {
    martingale_skip = e.what();
  }
  if (martingale_skip.empty() && !spec.focal_only() && spec.interaction_bound > 0.0) {
    martingale_skip = "martingale check needs a focal-only or vanishing interaction kernel";
  }

  std::vector<MeasureSample> samples;
  std::vector<MartingaleSample> msamples;
  for_each_replicate(spec, sim, replicates, inv.threads, [&](std::size_t, const Trajectory& traj) {
    samples.push_back(traj.snapshots[traj.nearest_snapshot(time)]);
    if (martingale_skip.empty()) msamples.push_back(martingale_sample(traj, spec, coef, f, mtimes, mopts));
  });
  const AveragingReport avg = averaging_ks(samples, table, bins);
  json report = {{"config", echo("diagnose", cfg)}, {"averaging", avg.to_json()}};
  if (martingale_skip.empty()) {
    json m = summarize_martingale(msamples, mtimes).to_json();
    m["generator"] = mopts.generator.name();
    report["martingale"] = m;
  } else {
    report["martingale"] = {{"skipped", martingale_skip}};
  }
  write_json(inv.out / "diagnostics.json", report);
  write_json(inv.out / "meta.json", {{"config", report["config"]}});
}

const std::vector<Field> kDiagnoseFields = {
    {"replicates", Kind::count, 20, "number of replicates"},
    {"time", Kind::number, nullptr, "averaging time (default T/2)"},
    {"bins", Kind::list, nullptr, "trait bin edges (default: four equal bins over the domain)"},
    {"martingale_times", Kind::list, nullptr, "martingale evaluation times (default T/2,T)"},
    {"test_function", Kind::text, "one", "martingale test function: one or cos"},
    {"points", Kind::count, 101, "equilibrium grid points per coordinate"},
    {"age_step", Kind::number, 1.0 / 32.0, "age knot spacing"},
    {"tail_epsilon", Kind::number, 1e-10, "age truncation level"},
    {"search_limit", Kind::number, 1e4, "largest age searched for the truncation point"},
};

// ---- cumulant ------------------------------------------------------------

void run_cumulant(Invocation& inv) {
  auto& cfg = inv.cfg;
  const LoadedModel model = load_model(cfg);
  const ModelSpec& spec = model.spec;
  if (spec.trait_dim != 1) throw CombinationError("the cumulant solver handles one-dimensional traits only");
  const auto opts = equilibrium_options(cfg);
  CumulantGrid grid;
  grid.horizon = cfg.at("horizon").get<double>();
  grid.steps = positive_count(cfg, "steps");
  grid.output_every = positive_count(cfg, "output_every");
  const double lambda = cfg.at("lambda").get<double>();
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  const auto f0 = [lambda](double) { return lambda; };
  if (cfg.at("time").is_null()) cfg["time"] = grid.horizon;

  ensure_dir(inv.out);
  const auto table = EquilibriumTable::build(
      spec, EquilibriumTable::uniform_grid(spec, positive_count(cfg, "points")), opts, inv.threads);
  const auto sol = cumulant_solve(table, generator_for(spec), f0, grid);
  write_cumulant_csv(inv.out / "cumulant.csv", sol);
  const json config = echo("cumulant", cfg);
  if (!cfg.at("input").is_null()) {
    const auto trajs = read_trajectories(cfg.at("input").get<std::string>());
    const auto cmp = laplace_crosscheck(spec, table, trajs, sol, f0, cfg.at("time").get<double>());
    write_json(inv.out / "laplace.json", {{"config", config}, {"comparison", cmp.to_json()}});
  }
  write_json(inv.out / "meta.json", {{"config", config}});
}

const std::vector<Field> kCumulantFields = {
    {"points", Kind::count, 101, "trait grid points"},
    {"horizon", Kind::number, 1.0, "solver horizon"},
    {"steps", Kind::count, 10000, "time steps"},
    {"output_every", Kind::count, 100, "steps between stored solution rows"},
    {"lambda", Kind::number, 1.0, "constant initial condition u(0, x) = lambda"},
    {"input", Kind::text, nullptr, "trajectory directory for the Laplace cross-check"},
    {"time", Kind::number, nullptr, "cross-check time (default: horizon)"},
    {"age_step", Kind::number, 1.0 / 32.0, "age knot spacing"},
    {"tail_epsilon", Kind::number, 1e-10, "age truncation level"},
    {"search_limit", Kind::number, 1e4, "largest age searched for the truncation point"},
};

// ---- extinction ----------------------------------------------------------

void run_extinction(Invocation& inv) {
  auto& cfg = inv.cfg;
  const LoadedModel model = load_model(cfg);
  const std::string family = model.document.at("family").get<std::string>();
  int id = 0;
  if (family == "example1") id = 1;
  if (family == "example2") id = 2;
  if (id == 0) throw CombinationError("extinction needs model example1 or example2");
  const SimConfig sim = sim_from(cfg, model.spec);
  const std::size_t replicates = positive_count(cfg, "replicates");

  DominationConfig dom;
  json common = model.document.at("params");
  common.erase("x1");
  common.erase("x2");
  dom.params = example1_params_from_json(common);
  dom.zeta = cfg.at("zeta").get<double>();
  dom.ceiling = cfg.at("ceiling").get<double>();
  dom.step = cfg.at("euler_step").get<double>();
  dom.absorption = cfg.at("absorption").get<double>();
  dom.horizon = cfg.at("domination_horizon").get<double>();
  const double z = cfg.at("z_factor").get<double>() * dom.m0();
  dom.check(z);

  ensure_dir(inv.out);
  const auto records = extinction_times(id, model.spec, sim, replicates, inv.threads);
  {
    auto os = open_output(inv.out / "extinction.csv");
    os << "example_id,seed,extinction_time,censored\n";
    os.precision(17);
    for (const auto& r : records) {
      os << r.example_id << ',' << r.seed << ',' << r.extinction_time.value_or(r.horizon) << ','
         << (r.extinction_time ? 0 : 1) << '\n';
    }
    if (!os) throw OutputError("failed writing extinction.csv");
  }
  const auto dom_seed = derive_seed(sim.seed, std::uint64_t{1} << 40);
  const auto hitting = hitting_bound_check(dom, z, positive_count(cfg, "domination_replicates"), dom_seed,
                                           inv.threads);
  const auto lambda = lambda_bound_check(dom, cfg.at("lambda_draws").get<std::size_t>(), derive_seed(dom_seed, 1));
  std::size_t extinct = 0;
  for (const auto& r : records) extinct += r.extinction_time ? 1 : 0;
  const double median = median_extinction_time(records);
  const json config = echo("extinction", cfg);
  write_json(inv.out / "domination.json",
             {{"config", config},
              {"domination", dom.to_json()},
              {"m0", dom.m0()},
              {"hitting", hitting.to_json()},
              {"lambda_check", lambda.to_json()},
              {"extinct_fraction", static_cast<double>(extinct) / static_cast<double>(records.size())},
              {"median_extinction_time", std::isfinite(median) ? json(median) : json()}});
  write_json(inv.out / "meta.json", {{"config", config}});
}

const std::vector<Field> kExtinctionFields = {
    {"replicates", Kind::count, 50, "particle replicates"},
    {"z_factor", Kind::number, 1.5, "start of the dominating diffusion, in units of m0"},
    {"domination_replicates", Kind::count, 1000, "Euler replicates for the hitting bound"},
    {"zeta", Kind::number, 0.1, "slack zeta of the dominating drift"},
    {"ceiling", Kind::number, 0.0, "upper exit level M (0: 10 m0)"},
    {"euler_step", Kind::number, 1e-4, "Euler step of the dominating diffusion"},
    {"absorption", Kind::number, 1e-6, "absorption threshold of the dominating diffusion"},
    {"domination_horizon", Kind::number, 200.0, "censoring time of the hitting problem"},
    {"lambda_draws", Kind::count, 1000000, "random draws for the Lambda bound check"},
};

// ---- reproduce-figure ----------------------------------------------------

void run_figure(Invocation& inv) {
  auto& cfg = inv.cfg;
  const std::string id = cfg.at("id").is_null() ? "" : cfg.at("id").get<std::string>();
  static const std::vector<std::string> ids = {"1a", "1b", "1c", "2a", "2b", "2c", "3"};
  if (std::find(ids.begin(), ids.end(), id) == ids.end()) {
    throw ConfigError("--id must be one of 1a, 1b, 1c, 2a, 2b, 2c, 3");
  }
  const bool first = id[0] == '1';
  const bool snapshot_panel = id == "1c" || id == "2c" || id == "3";
  if (cfg.at("sigma").is_null()) cfg["sigma"] = 1.0;
  const LoadedModel model =
      model_from_json({{"family", first ? "example1" : "example2"}, {"params", {{"sigma", cfg.at("sigma")}}}});

  json sim_json = {{"horizon", snapshot_panel ? cfg.at("time").get<double>() : cfg.at("horizon").is_null()
                                                                                     ? (first ? 2.0 : 20.0)
                                                                                     : cfg.at("horizon").get<double>()},
                   {"snapshot_cadence", 0.0},
                   {"mass_cadence", 0.0},
                   {"scheme", cfg.at("scheme")},
                   {"dt", cfg.at("dt")},
                   {"n", cfg.at("n")},
                   {"seed", cfg.at("seed")},
                   {"initial_count", cfg.at("initial_count")},
                   {"trait_law", "point"},
                   {"initial_trait", json::array({cfg.at("initial_trait")})},
                   {"age_law", "fixed"},
                   {"initial_age", 0.0}};
  const double horizon = sim_json["horizon"].get<double>();
  if (!snapshot_panel && cfg.at("snapshot_cadence").is_null()) cfg["snapshot_cadence"] = first ? 0.01 : 0.1;
  sim_json["snapshot_cadence"] = snapshot_panel ? horizon : cfg.at("snapshot_cadence").get<double>();
  if (!snapshot_panel) cfg["horizon"] = horizon;
  const SimConfig sim = sim_from(sim_json, model.spec);
  cfg["scheme"] = sim_json["scheme"];

  ensure_dir(inv.out);
  const json config = echo("reproduce-figure", cfg);
  const Trajectory traj = simulate(model.spec, sim);
  if (!snapshot_panel) {
    write_trajectory(inv.out, traj, config);
    return;
  }
  write_measure_csv(inv.out / "snapshot.csv", traj.snapshots.back());
  if (id != "3") {
    std::vector<Trait> grid = first ? std::vector<Trait>{{cfg.at("initial_trait").get<double>()}}
                                    : std::vector<Trait>{{1.0}, {0.5}, {3.0}};
    const auto table = EquilibriumTable::build(model.spec, grid, {}, inv.threads);
    write_equilibrium_csv(inv.out / "equilibrium.csv", table);
  }
  json meta = trajectory_meta(traj);
  meta["config"] = config;
  meta["model"] = model.document;
  write_json(inv.out / "meta.json", meta);
}

const std::vector<Field> kFigureFields = {
    {"id", Kind::text, nullptr, "panel: 1a, 1b, 1c, 2a, 2b, 2c or 3"},
    {"sigma", Kind::number, nullptr, "mutation standard deviation (figure rows: 1, then 0.8 or 0.2)"},
    {"horizon", Kind::number, nullptr, "final time of the a/b panels (default 2 for figure 1, 20 for figure 2)"},
    {"time", Kind::number, 0.5, "snapshot time of the c panels and figure 3"},
    {"snapshot_cadence", Kind::number, nullptr, "snapshot spacing of the a/b panels (0.01 or 0.1)"},
    {"scheme", Kind::text, "auto", "simulation scheme"},
    {"dt", Kind::number, 0.0, "step of the discretized scheme"},
    {"n", Kind::integer, 1000, "scale parameter n"},
    {"seed", Kind::count, 0, "seed"},
    {"initial_count", Kind::count, 1000, "initial number of individuals"},
    {"initial_trait", Kind::number, 1.5, "initial trait of every individual"},
};

std::vector<Command> commands() {
  std::vector<Field> simulate = with_sim({{"replicates", Kind::count, 1, "number of replicates"}});
  std::vector<Field> equilibrium = kEquilibriumFields;
  std::vector<Field> diagnose = with_sim(kDiagnoseFields);
  std::vector<Field> cumulant = kCumulantFields;
  std::vector<Field> extinction = with_sim(kExtinctionFields);
  for (auto* fields : {&simulate, &equilibrium, &diagnose, &cumulant, &extinction}) {
    fields->insert(fields->begin(), kModel);
  }
  for (auto& f : extinction) {
    if (f.key == "horizon") f.fallback = 20.0;
    if (f.key == "initial_trait") f.fallback = json::array({1.5});
  }
  return {
      {"simulate", "simulate trajectories", simulate, run_simulate},
      {"equilibrium", "stable age densities and averaged coefficients", equilibrium, run_equilibrium},
      {"diagnose", "averaging and martingale diagnostics", diagnose, run_diagnose},
      {"cumulant", "cumulant equation, with a Laplace cross-check given trajectories", cumulant, run_cumulant},
      {"extinction", "extinction times and the dominating-diffusion bound", extinction, run_extinction},
      {"reproduce-figure", "data behind one figure panel", kFigureFields, run_figure},
  };
}

json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  if (j.is_object() && j.contains("config")) j = j.at("config");
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  return j;
}

fs::path default_output(const std::string& command, const json& cfg) {
  const char* root = std::getenv("AGETRAIT_OUTPUT_ROOT");
  fs::path base = root && *root ? fs::path(root) : fs::path("agetrait-out");
  std::string leaf = command;
  if (command == "reproduce-figure" && cfg.at("id").is_string()) leaf = "figure-" + cfg.at("id").get<std::string>();
  return base / leaf;
}

int report_error(int code, const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Age-structured trait populations: simulation and limit diagnostics"};
  app.require_subcommand(1);
  const auto cmds = commands();
  struct Parsed {
    CLI::App* sub = nullptr;
    std::map<std::string, std::string> raw;
    std::string config;
    std::string out;
    std::size_t threads = 0;
  };
  std::vector<Parsed> parsed(cmds.size());
  for (std::size_t c = 0; c < cmds.size(); ++c) {
    auto* sub = app.add_subcommand(cmds[c].name, cmds[c].help);
    parsed[c].sub = sub;
    sub->add_option("--config", parsed[c].config, "JSON config or meta.json to start from");
    sub->add_option("--out", parsed[c].out, "output directory (default $AGETRAIT_OUTPUT_ROOT/<command>)");
    sub->add_option("--threads", parsed[c].threads, "worker threads (0: all cores)");
    for (const auto& f : cmds[c].fields) {
      std::string help = f.help;
      if (!f.fallback.is_null()) help += " [" + f.fallback.dump() + "]";
      sub->add_option(flag_of(f.key), parsed[c].raw[f.key], help);
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error(kInvalidFlags, "invalid_flags", e.what());
  }

  std::size_t c = 0;
  while (!parsed[c].sub->parsed()) ++c;
  const Command& cmd = cmds[c];
  const Parsed& p = parsed[c];
  try {
    Invocation inv;
    inv.threads = p.threads;
    json cfg = json::object();
    for (const auto& f : cmd.fields) cfg[f.key] = f.fallback;
    if (!p.config.empty()) {
      const json file = read_config_file(p.config);
      if (file.contains("command") && file.at("command") != cmd.name) {
        throw CombinationError("config was written by " + file.at("command").dump() + ", not '" + cmd.name + "'");
      }
      for (auto item = file.begin(); item != file.end(); ++item) {
        const std::string& k = item.key();
        const json& v = item.value();
        if (k == "command") continue;
        const auto it = std::find_if(cmd.fields.begin(), cmd.fields.end(), [&](const Field& f) { return f.key == k; });
        if (it == cmd.fields.end()) throw ConfigError("unknown config key '" + k + "' for " + cmd.name);
        check_kind(*it, v);
        cfg[k] = v;
      }
    }
    for (const auto& f : cmd.fields) {
      if (p.sub->get_option(flag_of(f.key))->count() > 0) cfg[f.key] = convert(f, p.raw.at(f.key));
    }
    inv.cfg = cfg;
    inv.out = p.out.empty() ? default_output(cmd.name, cfg) : fs::path(p.out);
    cmd.run(inv);
    std::cout << json{{"status", "ok"}, {"command", cmd.name}, {"out", inv.out.string()}}.dump() << '\n';
    return kOk;
  } catch (const UnknownModelError& e) {
    return report_error(kUnknownModel, "unknown_model", e.what());
  } catch (const ConfigError& e) {
    return report_error(kInvalidFlags, "invalid_config", e.what());
  } catch (const CombinationError& e) {
    return report_error(kInvalidCombination, "invalid_combination", e.what());
  } catch (const PreconditionError& e) {
    return report_error(kInvalidCombination, "invalid_combination", e.what());
  } catch (const OutputError& e) {
    return report_error(kUnwritableOutput, "unwritable_output", e.what());
  } catch (const fs::filesystem_error& e) {
    return report_error(kUnwritableOutput, "unwritable_output", e.what());
  } catch (const std::exception& e) {
    return report_error(kRuntimeFailure, "runtime_error", e.what());
  }
}
