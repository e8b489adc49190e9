#include "agetrait/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "agetrait/errors.hpp"
#include "agetrait/parallel.hpp"
#include "agetrait/quadrature.hpp"

namespace agetrait {

std::string to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::exact: return "exact";
    case Scheme::exact_split: return "exact_split";
    case Scheme::discretized: return "discretized";
  }
  return "exact";
}

Scheme scheme_from_string(const std::string& name) {
  if (name == "exact") return Scheme::exact;
  if (name == "exact_split") return Scheme::exact_split;
  if (name == "discretized") return Scheme::discretized;
  throw ConfigError("unknown scheme '" + name + "'");
}

void SimConfig::check() const {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ConfigError("horizon must be > 0");
  if (snapshot_cadence < 0.0) throw ConfigError("snapshot cadence must be >= 0");
  if (mass_cadence < 0.0) throw ConfigError("mass cadence must be >= 0");
  if (scheme == Scheme::discretized && !(dt > 0.0)) throw ConfigError("dt must be > 0 for the discretized scheme");
}

std::vector<double> SimConfig::snapshot_times() const {
  const double cadence = snapshot_cadence > 0.0 ? snapshot_cadence : horizon / 100.0;
  std::vector<double> times;
  const auto steps = static_cast<std::size_t>(std::floor(horizon / cadence + 1e-9));
  for (std::size_t k = 0; k <= steps; ++k) times.push_back(std::min(horizon, cadence * static_cast<double>(k)));
  if (horizon - times.back() > 1e-12 * horizon) times.push_back(horizon);
  // Guard against a duplicated final point from rounding.
  times.erase(std::unique(times.begin(), times.end()), times.end());
  return times;
}

double Trajectory::mass_at(double t) const {
  if (mass_times.empty()) return 0.0;
  auto it = std::upper_bound(mass_times.begin(), mass_times.end(), t);
  if (it == mass_times.begin()) return mass_values.front();
  return mass_values[static_cast<std::size_t>(it - mass_times.begin()) - 1];
}

std::size_t Trajectory::nearest_snapshot(double t) const {
  std::size_t best = 0;
  for (std::size_t k = 1; k < snapshot_times.size(); ++k) {
    if (std::abs(snapshot_times[k] - t) < std::abs(snapshot_times[best] - t)) best = k;
  }
  return best;
}

Population initial_population(const ModelSpec& spec, const SimConfig& cfg, RandomStream& rng) {
  const InitialCondition& ic = cfg.initial;
  Population pop(spec.trait_dim, cfg.scale, 0.0);
  pop.reserve(ic.count);
  Trait x(spec.trait_dim);
  for (std::size_t i = 0; i < ic.count; ++i) {
    if (ic.trait_law == InitialCondition::TraitLaw::point) {
      if (ic.trait.size() != spec.trait_dim) throw ConfigError("initial trait has the wrong dimension");
      x = ic.trait;
    } else {
      if (!spec.domain.bounded()) throw ConfigError("uniform initial traits need a bounded domain");
      for (std::size_t k = 0; k < spec.trait_dim; ++k) {
        const double lo = spec.domain.lower()[k], hi = spec.domain.upper()[k];
        x[k] = lo + (hi - lo) * rng.uniform();
      }
    }
    if (!spec.domain.contains(x)) throw ConfigError("initial trait lies outside the trait domain");
    double age = ic.age;
    if (ic.age_law == InitialCondition::AgeLaw::exponential) {
      if (!(ic.age > 0.0)) throw ConfigError("exponential initial-age law needs a positive rate");
      age = rng.exponential(ic.age);
    }
    if (age < 0.0) throw ConfigError("initial age must be >= 0");
    pop.add_with_age(x, age);
  }
  return pop;
}

namespace {

// Writes snapshots and the mass series as the clock advances.
class Recorder {
 public:
  Recorder(const SimConfig& cfg, Trajectory& traj, const Population& pop)
      : cfg_(cfg), traj_(traj), times_(cfg.snapshot_times()) {
    traj_.seed = cfg.seed;
    traj_.horizon = cfg.horizon;
    traj_.scale_n = cfg.scale.n;
    traj_.initial_count = pop.size();
    traj_.snapshot_times.reserve(times_.size());
    traj_.snapshots.reserve(times_.size());
    if (cfg.mass_cadence > 0.0) {
      const auto steps = static_cast<std::size_t>(std::floor(cfg.horizon / cfg.mass_cadence + 1e-9));
      for (std::size_t k = 0; k <= steps; ++k) grid_.push_back(cfg.mass_cadence * static_cast<double>(k));
      if (cfg.horizon - grid_.back() > 1e-12 * cfg.horizon) grid_.push_back(cfg.horizon);
    } else {
      push_mass(0.0, pop.mass());
    }
  }

  // Records everything strictly before t from the current (pre-event) state.
  void advance(const Population& pop, double t) {
    while (next_snapshot_ < times_.size() && times_[next_snapshot_] < t) {
      take_snapshot(pop, times_[next_snapshot_]);
      ++next_snapshot_;
    }
    while (next_grid_ < grid_.size() && grid_[next_grid_] < t) {
      push_mass(grid_[next_grid_], pop.mass());
      ++next_grid_;
    }
  }

  void event(const Population& pop, double t) {
    if (grid_.empty()) push_mass(t, pop.mass());
  }

  void finish(const Population& pop, std::optional<double> extinction) {
    const double horizon = cfg_.horizon;
    while (next_snapshot_ < times_.size()) {
      take_snapshot(pop, times_[next_snapshot_]);
      ++next_snapshot_;
    }
    while (next_grid_ < grid_.size()) {
      push_mass(grid_[next_grid_], pop.mass());
      ++next_grid_;
    }
    if (grid_.empty() && traj_.mass_times.back() < horizon) push_mass(horizon, pop.mass());
    traj_.final_count = pop.size();
    traj_.extinction_time = extinction;
  }

 private:
  void take_snapshot(const Population& pop, double s) {
    traj_.snapshot_times.push_back(s);
    traj_.snapshots.push_back(pop.sample_at(s));
  }
  void push_mass(double t, double m) {
    traj_.mass_times.push_back(t);
    traj_.mass_values.push_back(m);
  }

  const SimConfig& cfg_;
  Trajectory& traj_;
  std::vector<double> times_;
  std::vector<double> grid_;
  std::size_t next_snapshot_ = 0;
  std::size_t next_grid_ = 0;
};

[[noreturn]] void bound_violation(const char* which, double ratio, TraitView x, double a) {
  std::ostringstream os;
  os.precision(17);
  os << which << " acceptance ratio " << ratio << " outside [0,1] at x=[";
  for (std::size_t k = 0; k < x.size(); ++k) os << (k ? "," : "") << x[k];
  os << "], a=" << a << "; a declared bound is false";
  throw BoundViolationError(os.str());
}

double accept_ratio(const char* which, double rate, double bound, TraitView x, double a) {
  const double ratio = rate / bound;
  if (!(ratio >= 0.0 && ratio <= 1.0)) bound_violation(which, ratio, x, a);
  return ratio;
}

void give_birth(const ModelSpec& spec, Population& pop, std::size_t parent, double age, double t,
                RandomStream& rng, EventCounters& counters, Trait& scratch) {
  const OffspringDraw draw =
      sample_offspring_trait(spec, pop.scale(), pop.trait(parent), age, rng, scratch);
  pop.add(scratch, t);
  ++counters.births;
  if (draw.mutated) ++counters.mutations;
}

}  // namespace

Trajectory simulate_exact(const ModelSpec& spec, const SimConfig& cfg) {
  require_complete(spec);
  cfg.check();
  if (!std::isfinite(spec.allometric_bound)) {
    throw InvalidModelError("model '" + spec.name +
                            "' has an unbounded allometric rate; uniform thinning needs a finite "
                            "bound (use the exact_split scheme)");
  }
  RandomStream rng(cfg.seed);
  Population pop = initial_population(spec, cfg, rng);
  Trajectory traj;
  Recorder rec(cfg, traj, pop);
  const double n = cfg.scale.value();
  const double birth_bound = n * spec.allometric_bound + spec.birth_bound;
  Trait scratch(spec.trait_dim);
  double t = 0.0;
  std::optional<double> extinction;
  if (pop.empty()) extinction = 0.0;

  while (!pop.empty()) {
    const double count = static_cast<double>(pop.size());
    const double death_bound =
        n * spec.allometric_bound + spec.death_bound + spec.interaction_bound * count / n;
    const double per_individual = birth_bound + death_bound;
    const double total = count * per_individual;
    if (!std::isfinite(total)) throw InvalidModelError("thinning rate bound is not finite");
    if (total <= 0.0) break;
    t += rng.exponential(total);
    if (t > cfg.horizon) break;
    rec.advance(pop, t);
    pop.set_clock(t);

    // One uniform picks the individual; its fractional part picks the proposal.
    const double u = rng.uniform() * count;
    const std::size_t i = std::min(static_cast<std::size_t>(u), pop.size() - 1);
    const TraitView x = pop.trait(i);
    const double a = pop.age(i);
    const bool birth_proposal = (u - static_cast<double>(i)) * per_individual < birth_bound;
    if (birth_proposal) {
      const double rate = n * spec.allometric(x, a) + spec.birth(x, a);
      const double ratio = accept_ratio("birth", rate, birth_bound, x, a);
      if (ratio == 1.0 || rng.uniform() < ratio) {
        give_birth(spec, pop, i, a, t, rng, traj.counters, scratch);
        rec.event(pop, t);
      } else {
        ++traj.counters.rejections;
      }
    } else {
      const double rate =
          n * spec.allometric(x, a) + spec.death(x, a) + interaction_total(pop, spec, x, a);
      const double ratio = accept_ratio("death", rate, death_bound, x, a);
      if (ratio == 1.0 || rng.uniform() < ratio) {
        pop.remove(i);
        ++traj.counters.deaths;
        rec.event(pop, t);
        if (pop.empty()) extinction = t;
      } else {
        ++traj.counters.rejections;
      }
    }
  }
  rec.finish(pop, extinction);
  return traj;
}

namespace {

// Min-heap of per-individual clock times indexed by population slot; mirrors
// the population's swap-with-last removal.
class ClockHeap {
 public:
  bool empty() const { return heap_.empty(); }
  std::size_t top() const { return heap_.front(); }
  double top_time() const { return heap_.empty() ? kInfinity : time_[heap_.front()]; }

  void push(double t) {
    const std::size_t id = time_.size();
    time_.push_back(t);
    pos_.push_back(heap_.size());
    heap_.push_back(id);
    sift_up(heap_.size() - 1);
  }

  void update(std::size_t id, double t) {
    const double old = time_[id];
    time_[id] = t;
    if (t < old) {
      sift_up(pos_[id]);
    } else {
      sift_down(pos_[id]);
    }
  }

  // Removes slot `id`; the last slot is renamed to `id`.
  void remove(std::size_t id) {
    const std::size_t hole = pos_[id];
    const std::size_t back = heap_.size() - 1;
    if (hole != back) {
      heap_[hole] = heap_[back];
      pos_[heap_[hole]] = hole;
      heap_.pop_back();
      const std::size_t moved = heap_[hole];
      sift_up(hole);
      sift_down(pos_[moved]);
    } else {
      heap_.pop_back();
    }
    const std::size_t last = time_.size() - 1;
    if (id != last) {
      time_[id] = time_[last];
      pos_[id] = pos_[last];
      heap_[pos_[id]] = id;
    }
    time_.pop_back();
    pos_.pop_back();
  }

 private:
  bool less(std::size_t a, std::size_t b) const {
    const double ta = time_[heap_[a]], tb = time_[heap_[b]];
    return ta < tb || (ta == tb && heap_[a] < heap_[b]);
  }
  void swap_nodes(std::size_t a, std::size_t b) {
    std::swap(heap_[a], heap_[b]);
    pos_[heap_[a]] = a;
    pos_[heap_[b]] = b;
  }
  void sift_up(std::size_t k) {
    while (k > 0) {
      const std::size_t parent = (k - 1) / 2;
      if (!less(k, parent)) break;
      swap_nodes(k, parent);
      k = parent;
    }
  }
  void sift_down(std::size_t k) {
    const std::size_t size = heap_.size();
    for (;;) {
      const std::size_t l = 2 * k + 1, r = l + 1;
      std::size_t best = k;
      if (l < size && less(l, best)) best = l;
      if (r < size && less(r, best)) best = r;
      if (best == k) break;
      swap_nodes(k, best);
      k = best;
    }
  }

  std::vector<std::size_t> heap_;
  std::vector<std::size_t> pos_;
  std::vector<double> time_;
};

// Age a1 > a0 with int_{a0}^{a1} r(x, s) ds = target, or +inf.
double advance_cumulative_rate(const ModelSpec& spec, TraitView x, double a0, double target) {
  if (spec.allometric_primitive) {
    const auto& prim = *spec.allometric_primitive;
    return prim.inverse(x, prim.cumulative(x, a0) + target);
  }
  QuadratureOptions opts;
  opts.abs_tol = 1e-12;
  opts.initial_panels = 2;
  auto r = [&](double s) {
    const double v = spec.allometric(x, s);
    if (v < 0.0) throw InvalidModelError("exact_split requires a nonnegative allometric rate");
    return v;
  };
  constexpr double kSearchLimit = 1e4;
  double acc = 0.0;
  double a = a0;
  double width = 1.0;
  while (a - a0 < kSearchLimit) {
    const double panel = adaptive_simpson(r, a, a + width, opts).value;
    if (acc + panel >= target) {
      double lo = a, hi = a + width;
      double lo_acc = acc;
      for (int it = 0; it < 100 && hi - lo > 1e-14 * std::max(1.0, hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        const double part = adaptive_simpson(r, lo, mid, opts).value;
        if (lo_acc + part >= target) {
          hi = mid;
        } else {
          lo = mid;
          lo_acc += part;
        }
      }
      return hi;
    }
    acc += panel;
    a += width;
  }
  return kInfinity;
}

// Time of the next fast (n r driven) event of an individual; hazard 2 n r.
double next_fast_time(const ModelSpec& spec, const Population& pop, TraitView x, double birth_time,
                      double age, RandomStream& rng) {
  const double target = 0.5 * rng.exponential(1.0);
  const double a1 = advance_cumulative_rate(spec, x, age, target);
  if (!std::isfinite(a1)) return kInfinity;
  return birth_time + a1 / pop.scale().value();
}

}  // namespace

Trajectory simulate_exact_split(const ModelSpec& spec, const SimConfig& cfg) {
  require_complete(spec);
  cfg.check();
  RandomStream rng(cfg.seed);
  Population pop = initial_population(spec, cfg, rng);
  Trajectory traj;
  Recorder rec(cfg, traj, pop);
  const double n = cfg.scale.value();
  Trait scratch(spec.trait_dim);

  ClockHeap clocks;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    clocks.push(next_fast_time(spec, pop, pop.trait(i), pop.birth_time(i), pop.age(i), rng));
  }

  double t = 0.0;
  std::optional<double> extinction;
  if (pop.empty()) extinction = 0.0;

  while (!pop.empty()) {
    const double count = static_cast<double>(pop.size());
    const double birth_bound = spec.birth_bound;
    const double death_bound = spec.death_bound + spec.interaction_bound * count / n;
    const double per_individual = birth_bound + death_bound;
    const double slow_total = count * per_individual;
    const double t_slow = slow_total > 0.0 ? t + rng.exponential(slow_total) : kInfinity;
    const double t_fast = clocks.top_time();
    const double t_next = std::min(t_slow, t_fast);
    if (!(t_next <= cfg.horizon)) break;
    rec.advance(pop, t_next);
    t = t_next;
    pop.set_clock(t);

    if (t_fast <= t_slow) {
      const std::size_t i = clocks.top();
      const double a = pop.age(i);
      if (rng.uniform() < 0.5) {
        give_birth(spec, pop, i, a, t, rng, traj.counters, scratch);
        const std::size_t child = pop.size() - 1;
        clocks.push(next_fast_time(spec, pop, pop.trait(child), t, 0.0, rng));
        clocks.update(i, next_fast_time(spec, pop, pop.trait(i), pop.birth_time(i), a, rng));
        rec.event(pop, t);
      } else {
        pop.remove(i);
        clocks.remove(i);
        ++traj.counters.deaths;
        rec.event(pop, t);
        if (pop.empty()) extinction = t;
      }
      continue;
    }

    const double u = rng.uniform() * count;
    const std::size_t i = std::min(static_cast<std::size_t>(u), pop.size() - 1);
    const TraitView x = pop.trait(i);
    const double a = pop.age(i);
    if ((u - static_cast<double>(i)) * per_individual < birth_bound) {
      const double ratio = accept_ratio("birth", spec.birth(x, a), birth_bound, x, a);
      if (ratio == 1.0 || rng.uniform() < ratio) {
        give_birth(spec, pop, i, a, t, rng, traj.counters, scratch);
        const std::size_t child = pop.size() - 1;
        clocks.push(next_fast_time(spec, pop, pop.trait(child), t, 0.0, rng));
        rec.event(pop, t);
      } else {
        ++traj.counters.rejections;
      }
    } else {
      const double rate = spec.death(x, a) + interaction_total(pop, spec, x, a);
      const double ratio = accept_ratio("death", rate, death_bound, x, a);
      if (ratio == 1.0 || rng.uniform() < ratio) {
        pop.remove(i);
        clocks.remove(i);
        ++traj.counters.deaths;
        rec.event(pop, t);
        if (pop.empty()) extinction = t;
      } else {
        ++traj.counters.rejections;
      }
    }
  }
  rec.finish(pop, extinction);
  return traj;
}

Trajectory simulate_discretized(const ModelSpec& spec, const SimConfig& cfg) {
  require_complete(spec);
  cfg.check();
  if (cfg.scheme != Scheme::discretized) throw ConfigError("simulate_discretized needs scheme=discretized");
  RandomStream rng(cfg.seed);
  Population pop = initial_population(spec, cfg, rng);
  Trajectory traj;
  Recorder rec(cfg, traj, pop);
  const double n = cfg.scale.value();
  const double dt = cfg.dt;
  const auto steps = static_cast<std::size_t>(std::ceil(cfg.horizon / dt - 1e-9));

  std::vector<std::size_t> dead;
  std::vector<double> newborn;  // flattened traits
  Trait scratch(spec.trait_dim);
  std::optional<double> extinction;
  if (pop.empty()) extinction = 0.0;

  for (std::size_t k = 0; k < steps && !pop.empty(); ++k) {
    const double t = dt * static_cast<double>(k);
    const double t_end = std::min(cfg.horizon, dt * static_cast<double>(k + 1));
    const double h = t_end - t;
    rec.advance(pop, t_end - 1e-9 * dt);
    pop.set_clock(t);

    const double count = static_cast<double>(pop.size());
    if (std::isfinite(spec.allometric_bound)) {
      const double worst = h * (n * spec.allometric_bound +
                                std::max(spec.birth_bound,
                                         spec.death_bound + spec.interaction_bound * count / n));
      if (!(worst < 1.0)) {
        throw StepSizeError("per-step event probability bound " + std::to_string(worst) +
                            " >= 1; use a smaller dt");
      }
    }

    dead.clear();
    newborn.clear();
    for (std::size_t i = 0; i < pop.size(); ++i) {
      const TraitView x = pop.trait(i);
      const double a = pop.age(i);
      const double r = spec.allometric(x, a);
      const double p_death = (n * r + spec.death(x, a) + interaction_total(pop, spec, x, a)) * h;
      const double p_birth = (n * r + spec.birth(x, a)) * h;
      if (!(p_death < 1.0 && p_birth < 1.0)) {
        throw StepSizeError("per-step event probability >= 1; use a smaller dt");
      }
      if (p_death < 0.0 || p_birth < 0.0) throw BoundViolationError("negative event rate");
      if (rng.uniform() < p_death) {
        dead.push_back(i);
      } else if (rng.uniform() < p_birth) {
        const OffspringDraw draw = sample_offspring_trait(spec, pop.scale(), x, a, rng, scratch);
        newborn.insert(newborn.end(), scratch.begin(), scratch.end());
        if (draw.mutated) ++traj.counters.mutations;
      }
    }
    for (auto it = dead.rbegin(); it != dead.rend(); ++it) pop.remove(*it);
    traj.counters.deaths += dead.size();
    const std::size_t births = newborn.size() / spec.trait_dim;
    for (std::size_t b = 0; b < births; ++b) {
      pop.add(TraitView(newborn.data() + b * spec.trait_dim, spec.trait_dim), t_end);
    }
    traj.counters.births += births;
    pop.set_clock(t_end);
    rec.event(pop, t_end);
    if (pop.empty()) extinction = t_end;
  }
  rec.finish(pop, extinction);
  return traj;
}

Trajectory simulate(const ModelSpec& spec, const SimConfig& cfg) {
  switch (cfg.scheme) {
    case Scheme::exact: return simulate_exact(spec, cfg);
    case Scheme::exact_split: return simulate_exact_split(spec, cfg);
    case Scheme::discretized: return simulate_discretized(spec, cfg);
  }
  throw ConfigError("unknown scheme");
}

std::vector<Trajectory> run_replicates(const ModelSpec& spec, const SimConfig& cfg,
                                       std::size_t count, std::size_t threads) {
  return run_replicates(spec, cfg, 0, count, threads);
}

std::vector<Trajectory> run_replicates(const ModelSpec& spec, const SimConfig& cfg,
                                       std::size_t first, std::size_t count,
                                       std::size_t threads) {
  if (count == 0) throw ConfigError("replicate count must be >= 1");
  std::vector<Trajectory> out(count);
  parallel_for(count, threads, [&](std::size_t k) {
    SimConfig local = cfg;
    local.seed = derive_seed(cfg.seed, first + k);
    out[k] = simulate(spec, local);
  });
  return out;
}

}  // namespace agetrait
