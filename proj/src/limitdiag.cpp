#include "agetrait/limitdiag.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <tuple>
#include <sstream>

#include "agetrait/errors.hpp"
#include "agetrait/trajectory_io.hpp"

namespace agetrait {

namespace {

bool same_time(double a, double b, double scale) { return std::abs(a - b) <= 1e-9 * std::max(1.0, scale); }

// Index of the snapshot at time t, or PreconditionError.
std::size_t snapshot_index(const Trajectory& traj, double t) {
  for (std::size_t k = 0; k < traj.snapshot_times.size(); ++k) {
    if (same_time(traj.snapshot_times[k], t, traj.horizon)) return k;
  }
  std::ostringstream os;
  os << "no snapshot at t=" << t << "; request times on the snapshot grid";
  throw PreconditionError(os.str());
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

// ---- coefficients ------------------------------------------------------

CoefficientField::CoefficientField(const EquilibriumTable& table) : table_(&table) {
  for (const auto& row : table.rows()) {
    b_.push_back(row.b_hat);
    d_.push_back(row.d_hat);
    r_.push_back(row.r_hat);
    pr_.push_back(row.pr_hat);
    u_.push_back(row.u_hat.value_or(0.0));
    has_u_ = row.u_hat.has_value();
  }
  if (table.trait_dim() == 1) {
    for (const auto& row : table.rows()) grid_.push_back(row.x[0]);
    if (!std::is_sorted(grid_.begin(), grid_.end()) ||
        std::adjacent_find(grid_.begin(), grid_.end()) != grid_.end()) {
      throw ConfigError("one-dimensional equilibrium grid must be strictly increasing");
    }
  }
}

double CoefficientField::u_hat(TraitView x) const {
  if (!has_u_) throw PreconditionError("averaged interaction needs a focal-only kernel");
  return eval(u_, x);
}

double CoefficientField::eval(const std::vector<double>& values, TraitView x) const {
  if (grid_.empty()) return values[table_->nearest(x)];
  const std::size_t n = grid_.size();
  const double xq = x[0];
  auto it = std::lower_bound(grid_.begin(), grid_.end(), xq);
  if (it != grid_.end() && *it == xq) return values[static_cast<std::size_t>(it - grid_.begin())];
  if (n < 4) {
    // Linear on short grids.
    std::size_t k = std::clamp<std::size_t>(static_cast<std::size_t>(it - grid_.begin()), 1, n - 1);
    const double s = (xq - grid_[k - 1]) / (grid_[k] - grid_[k - 1]);
    return values[k - 1] + s * (values[k] - values[k - 1]);
  }
  const auto right = static_cast<std::ptrdiff_t>(it - grid_.begin());
  const auto first = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(right - 2, 0, static_cast<std::ptrdiff_t>(n) - 4));
  double out = 0.0;
  for (std::size_t i = first; i < first + 4; ++i) {
    double w = 1.0;
    for (std::size_t j = first; j < first + 4; ++j) {
      if (j != i) w *= (xq - grid_[j]) / (grid_[i] - grid_[j]);
    }
    out += w * values[i];
  }
  return out;
}

// ---- averaging ---------------------------------------------------------

double ks_statistic(std::vector<double> ages, const std::function<double(double)>& cdf) {
  if (ages.empty()) return 0.0;
  std::sort(ages.begin(), ages.end());
  const double n = static_cast<double>(ages.size());
  double d = 0.0;
  std::size_t i = 0;
  while (i < ages.size()) {
    std::size_t j = i;
    while (j < ages.size() && ages[j] == ages[i]) ++j;
    const double f = cdf(ages[i]);
    d = std::max({d, std::abs(static_cast<double>(j) / n - f), std::abs(static_cast<double>(i) / n - f)});
    i = j;
  }
  return d;
}

nlohmann::json AveragingReport::to_json() const {
  nlohmann::json b = nlohmann::json::array();
  for (const auto& bin : bins) {
    b.push_back({{"lower", bin.lower}, {"upper", bin.upper}, {"atoms", bin.atoms}, {"mass", bin.mass},
                 {"ks", bin.skipped ? nlohmann::json() : nlohmann::json(bin.statistic)},
                 {"skipped", bin.skipped}});
  }
  return {{"time", time}, {"replicates", replicates}, {"extinct", extinct}, {"atoms", atoms},
          {"components", components}, {"aggregated", aggregated}, {"pooled_ks", pooled}, {"bins", b}};
}

AveragingReport averaging_ks(const std::vector<MeasureSample>& samples, const EquilibriumTable& eq,
                             const std::vector<double>& bin_edges, const AveragingOptions& opts) {
  if (bin_edges.size() < 2 || !std::is_sorted(bin_edges.begin(), bin_edges.end())) {
    throw ConfigError("trait bins need at least two increasing edges");
  }
  AveragingReport report;
  report.replicates = samples.size();
  if (!samples.empty()) report.time = samples.front().time;
  std::map<Trait, double> traits;
  for (const auto& s : samples) {
    if (s.size() == 0) {
      ++report.extinct;
      continue;
    }
    report.atoms += s.size();
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto x = s.trait(i);
      traits[Trait(x.begin(), x.end())] += s.weight;
    }
  }
  report.aggregated = traits.size() > opts.max_components;

  // Each atom trait maps to a reference profile: its own exact one, or the
  // nearest grid trait when there are too many distinct traits.
  std::deque<AgeProfile> owned;
  std::vector<const AgeProfile*> profiles;
  std::map<std::size_t, std::size_t> grid_component;
  std::map<Trait, std::size_t> component_of;
  for (const auto& entry : traits) {
    const Trait& x = entry.first;
    const std::size_t g = eq.nearest(x);
    if (report.aggregated || eq.row(g).x == x) {
      auto [it, fresh] = grid_component.try_emplace(g, profiles.size());
      if (fresh) profiles.push_back(&eq.profile(g));
      component_of[x] = it->second;
    } else {
      owned.push_back(eq.profile_at(x));
      component_of[x] = profiles.size();
      profiles.push_back(&owned.back());
    }
  }
  report.components = profiles.size();

  auto ks_over = [&](auto&& keep) {
    std::vector<double> ages;
    std::vector<double> weights(profiles.size(), 0.0);
    for (const auto& s : samples) {
      for (std::size_t i = 0; i < s.size(); ++i) {
        const auto x = s.trait(i);
        if (!keep(x)) continue;
        ages.push_back(s.ages[i]);
        weights[component_of.at(Trait(x.begin(), x.end()))] += s.weight;
      }
    }
    double total = 0.0;
    for (double w : weights) total += w;
    std::vector<std::pair<const AgeProfile*, double>> mix;
    for (std::size_t c = 0; c < weights.size(); ++c) {
      if (weights[c] > 0.0) mix.emplace_back(profiles[c], weights[c] / total);
    }
    const auto cdf = [&](double a) {
      double f = 0.0;
      for (const auto& [p, w] : mix) f += w * p->cdf_interpolated(a);
      return f;
    };
    const std::size_t count = ages.size();
    return std::tuple{ks_statistic(std::move(ages), cdf), count, total};
  };

  report.pooled = std::get<0>(ks_over([](TraitView) { return true; }));
  for (std::size_t b = 0; b + 1 < bin_edges.size(); ++b) {
    const double lo = bin_edges[b], hi = bin_edges[b + 1];
    const bool last = b + 2 == bin_edges.size();
    KsBin bin;
    bin.lower = lo;
    bin.upper = hi;
    auto [stat, count, mass] = ks_over([&](TraitView x) { return x[0] >= lo && (x[0] < hi || (last && x[0] == hi)); });
    bin.atoms = count;
    bin.mass = mass;
    bin.statistic = stat;
    bin.skipped = count == 0;
    report.bins.push_back(bin);
  }
  return report;
}

AveragingReport averaging_ks(const std::vector<Trajectory>& trajs, const EquilibriumTable& eq, double t,
                             const std::vector<double>& bin_edges, const AveragingOptions& opts) {
  std::vector<MeasureSample> samples;
  samples.reserve(trajs.size());
  for (const auto& traj : trajs) {
    if (traj.snapshots.empty()) throw PreconditionError("trajectory has no snapshots");
    samples.push_back(traj.snapshots[traj.nearest_snapshot(t)]);
  }
  AveragingReport report = averaging_ks(samples, eq, bin_edges, opts);
  report.time = t;
  return report;
}

// ---- martingale problem ------------------------------------------------

double Generator::apply(const TraitFn& f, TraitView x, double h) const {
  if (kind == Kind::none || sigma2 == 0.0) return 0.0;
  Trait y(x.begin(), x.end());
  const double fx = f(x);
  double lap = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double keep = y[k];
    y[k] = keep + h;
    const double up = f(y);
    y[k] = keep - h;
    const double down = f(y);
    y[k] = keep;
    lap += (up - 2.0 * fx + down) / (h * h);
  }
  return 0.5 * sigma2 * lap;
}

std::string Generator::name() const { return kind == Kind::none ? "none" : "laplacian"; }

MartingaleSample martingale_sample(const Trajectory& traj, const ModelSpec& spec, const CoefficientField& coef,
                                   const TraitFn& f, const std::vector<double>& times,
                                   const MartingaleOptions& opts) {
  const bool interacting = !(spec.interaction_bound == 0.0);
  if (interacting && !spec.focal_only()) {
    throw PreconditionError("martingale check needs a focal-only interaction kernel");
  }
  std::size_t last = 0;
  std::vector<std::size_t> index;
  for (double t : times) {
    index.push_back(snapshot_index(traj, t));
    last = std::max(last, index.back());
  }
  const std::size_t count = last + 1;
  std::vector<double> pair_f(count), drift(count), qv(count);
  for (std::size_t k = 0; k < count; ++k) {
    const MeasureSample& s = traj.snapshots[k];
    const double mass = s.total_mass();
    double pf = 0.0, dr = 0.0, q = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto x = s.trait(i);
      const double fx = f(x);
      pf += fx;
      if (!opts.drop_drift) {
        double growth = coef.b_hat(x) - coef.d_hat(x);
        if (interacting) growth -= coef.u_hat(x) * mass;
        dr += coef.pr_hat(x) * opts.generator.apply(f, x, opts.fd_step) + growth * fx;
      }
      q += 2.0 * coef.r_hat(x) * fx * fx;
    }
    pair_f[k] = pf * s.weight;
    drift[k] = dr * s.weight;
    qv[k] = q * s.weight;
  }
  const auto& ts = traj.snapshot_times;
  auto trapezoid_upto = [&](const std::vector<double>& y, std::size_t end, std::size_t stride) {
    double acc = 0.0;
    std::size_t k = 0;
    while (k < end) {
      const std::size_t j = std::min(end, k + stride);
      acc += 0.5 * (ts[j] - ts[k]) * (y[k] + y[j]);
      k = j;
    }
    return acc;
  };
  MartingaleSample out;
  for (std::size_t idx : index) {
    const double fine_drift = trapezoid_upto(drift, idx, 1);
    const double coarse_drift = trapezoid_upto(drift, idx, 2);
    out.value.push_back(pair_f[idx] - pair_f[0] - fine_drift);
    out.coarse.push_back(pair_f[idx] - pair_f[0] - coarse_drift);
    out.qv_integral.push_back(trapezoid_upto(qv, idx, 1));
  }
  return out;
}

MartingaleReport summarize_martingale(const std::vector<MartingaleSample>& samples,
                                      const std::vector<double>& times) {
  MartingaleReport report;
  report.replicates = samples.size();
  if (samples.size() < 30) {
    report.warnings.push_back("fewer than 30 replicates; confidence intervals are unreliable");
  }
  const double r = static_cast<double>(samples.size());
  for (std::size_t j = 0; j < times.size(); ++j) {
    MartingaleTimeStat st;
    st.time = times[j];
    std::vector<double> v, pred, bias;
    for (const auto& s : samples) {
      v.push_back(s.value.at(j));
      pred.push_back(s.qv_integral.at(j));
      bias.push_back((s.value.at(j) - s.coarse.at(j)) / 3.0);
    }
    st.mean = mean_of(v);
    double m2 = 0.0, m4 = 0.0;
    for (double x : v) {
      const double d = x - st.mean;
      m2 += d * d;
      m4 += d * d * d * d;
    }
    st.variance = r > 1.0 ? m2 / (r - 1.0) : 0.0;
    m4 /= std::max(r, 1.0);
    st.standard_error = r > 0.0 ? std::sqrt(st.variance / r) : 0.0;
    if (st.mean == 0.0) {
      st.z = 0.0;
    } else {
      st.z = st.standard_error > 0.0 ? st.mean / st.standard_error : std::copysign(kInfinity, st.mean);
    }
    st.predicted = mean_of(pred);
    st.richardson_bias = mean_of(bias);
    if (st.predicted == 0.0) {
      st.ratio = st.variance == 0.0 ? 1.0 : kInfinity;
      st.ratio_ci_lower = st.ratio_ci_upper = st.ratio;
    } else {
      st.ratio = st.variance / st.predicted;
      // Normal-theory-free standard error of the sample variance.
      const double var_se =
          r > 3.0 ? std::sqrt(std::max(0.0, (m4 - st.variance * st.variance * (r - 3.0) / (r - 1.0)) / r)) : kInfinity;
      st.ratio_ci_lower = (st.variance - 1.96 * var_se) / st.predicted;
      st.ratio_ci_upper = (st.variance + 1.96 * var_se) / st.predicted;
    }
    report.stats.push_back(st);
  }
  return report;
}

MartingaleReport martingale_check(const std::vector<Trajectory>& trajs, const ModelSpec& spec,
                                  const EquilibriumTable& eq, const TraitFn& f,
                                  const std::vector<double>& times, const MartingaleOptions& opts) {
  const CoefficientField coef(eq);
  std::vector<MartingaleSample> samples;
  samples.reserve(trajs.size());
  for (const auto& traj : trajs) samples.push_back(martingale_sample(traj, spec, coef, f, times, opts));
  return summarize_martingale(samples, times);
}

nlohmann::json MartingaleReport::to_json() const {
  nlohmann::json s = nlohmann::json::array();
  for (const auto& st : stats) {
    s.push_back({{"time", st.time}, {"mean", st.mean}, {"standard_error", st.standard_error}, {"z", st.z},
                 {"variance", st.variance}, {"predicted_variance", st.predicted}, {"ratio", st.ratio},
                 {"ratio_ci", {st.ratio_ci_lower, st.ratio_ci_upper}},
                 {"richardson_bias", st.richardson_bias}});
  }
  return {{"replicates", replicates}, {"warnings", warnings}, {"times", s}};
}

// ---- occupation measure ------------------------------------------------

OccupationMeasure::OccupationMeasure(const Trajectory& traj) : traj_(&traj), times_(traj.snapshot_times) {
  if (times_.size() < 2) throw PreconditionError("occupation measure needs at least two snapshots");
  const std::size_t n = times_.size();
  weights_.assign(n, 0.0);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double half = 0.5 * (times_[k + 1] - times_[k]);
    weights_[k] += half;
    weights_[k + 1] += half;
  }
}

double OccupationMeasure::total_mass() const {
  double acc = 0.0;
  for (std::size_t k = 0; k < times_.size(); ++k) acc += weights_[k] * traj_->snapshots[k].total_mass();
  return acc;
}

double OccupationMeasure::pair(const std::function<double(double, TraitView, double)>& phi) const {
  double acc = 0.0;
  for (std::size_t k = 0; k < times_.size(); ++k) {
    const MeasureSample& s = traj_->snapshots[k];
    const double t = times_[k];
    acc += weights_[k] * agetrait::pair(s, [&](TraitView x, double a) { return phi(t, x, a); });
  }
  return acc;
}

// ---- cumulant equation -------------------------------------------------

double CumulantSolution::value(std::size_t k, double xq) const {
  const auto& row = u.at(k);
  if (x.size() == 1 || xq <= x.front()) return row.front();
  if (xq >= x.back()) return row.back();
  const auto it = std::upper_bound(x.begin(), x.end(), xq);
  const auto j = static_cast<std::size_t>(it - x.begin());
  const double s = (xq - x[j - 1]) / (x[j] - x[j - 1]);
  return row[j - 1] + s * (row[j] - row[j - 1]);
}

std::size_t CumulantSolution::time_index(double tq) const {
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (same_time(t[k], tq, t.back())) return k;
  }
  std::ostringstream os;
  os << "cumulant solution has no output at t=" << tq;
  throw PreconditionError(os.str());
}

CumulantSolution cumulant_solve(const std::vector<double>& x, const std::vector<double>& r_hat,
                                const std::vector<double>& diffusion, const std::vector<double>& f0,
                                const CumulantGrid& grid, const std::string& generator_name) {
  const std::size_t n = x.size();
  if (n == 0 || r_hat.size() != n || diffusion.size() != n || f0.size() != n) {
    throw ConfigError("cumulant grid arrays must be non-empty and of equal length");
  }
  if (!(grid.horizon >= 0.0) || grid.steps == 0) throw ConfigError("cumulant solve needs T >= 0 and steps >= 1");
  double dx = 0.0;
  if (n > 1) {
    dx = (x.back() - x.front()) / static_cast<double>(n - 1);
    for (std::size_t i = 1; i < n; ++i) {
      if (std::abs(x[i] - x[i - 1] - dx) > 1e-9 * std::max(1.0, std::abs(dx))) {
        throw ConfigError("cumulant solve needs a uniform trait grid");
      }
    }
  }
  double cmax = 0.0, rmax = 0.0, fmax = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (f0[i] < 0.0 || !std::isfinite(f0[i])) throw PreconditionError("initial condition must be finite and >= 0");
    if (diffusion[i] < 0.0) throw ConfigError("diffusion coefficient must be >= 0");
    cmax = std::max(cmax, diffusion[i]);
    rmax = std::max(rmax, r_hat[i]);
    fmax = std::max(fmax, f0[i]);
  }
  if (cmax > 0.0 && n < 2) throw ConfigError("diffusion needs at least two grid points");
  const double dt = grid.horizon / static_cast<double>(grid.steps);
  if (cmax > 0.0 && dt > dx * dx / (2.0 * cmax)) {
    std::ostringstream os;
    os << "time step " << dt << " exceeds the diffusion stability bound " << dx * dx / (2.0 * cmax)
       << "; increase steps";
    throw StepSizeError(os.str());
  }
  if (dt * rmax * fmax > 1.0) {
    std::ostringstream os;
    os << "time step " << dt << " exceeds the reaction stability bound " << 1.0 / (rmax * fmax) << "; increase steps";
    throw StepSizeError(os.str());
  }
  CumulantSolution sol;
  sol.x = x;
  sol.dt = dt;
  sol.dx = dx;
  sol.steps = grid.steps;
  sol.generator = generator_name;
  const double inv_dx2 = n > 1 ? 1.0 / (dx * dx) : 0.0;
  auto rhs = [&](const std::vector<double>& u, std::vector<double>& out) {
    for (std::size_t i = 0; i < n; ++i) {
      double lap = 0.0;
      if (cmax > 0.0) {
        // Reflecting ends via mirrored ghost points.
        const double left = i == 0 ? u[1] : u[i - 1];
        const double right = i + 1 == n ? u[n - 2] : u[i + 1];
        lap = diffusion[i] * (left - 2.0 * u[i] + right) * inv_dx2;
      }
      out[i] = lap - r_hat[i] * u[i] * u[i];
    }
  };
  std::vector<double> u = f0, k1(n), k2(n), k3(n), k4(n), tmp(n);
  const std::size_t every = std::max<std::size_t>(1, grid.output_every);
  sol.t.push_back(0.0);
  sol.u.push_back(u);
  for (std::size_t step = 1; step <= grid.steps; ++step) {
    rhs(u, k1);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = u[i] + 0.5 * dt * k1[i];
    rhs(tmp, k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = u[i] + 0.5 * dt * k2[i];
    rhs(tmp, k3);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = u[i] + dt * k3[i];
    rhs(tmp, k4);
    for (std::size_t i = 0; i < n; ++i) u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    if (step % every == 0 || step == grid.steps) {
      sol.t.push_back(step == grid.steps ? grid.horizon : dt * static_cast<double>(step));
      sol.u.push_back(u);
    }
  }
  return sol;
}

CumulantSolution cumulant_solve(const EquilibriumTable& eq, const Generator& generator,
                                const std::function<double(double)>& f0, const CumulantGrid& grid) {
  if (eq.trait_dim() != 1) throw ConfigError("cumulant solve supports one-dimensional traits only");
  std::vector<double> x, r, c, f;
  for (const auto& row : eq.rows()) {
    x.push_back(row.x[0]);
    r.push_back(row.r_hat);
    c.push_back(generator.kind == Generator::Kind::laplacian ? row.pr_hat * generator.sigma2 / 2.0 : 0.0);
    f.push_back(f0(row.x[0]));
  }
  return cumulant_solve(x, r, c, f, grid, generator.name());
}

void write_cumulant_csv(const std::filesystem::path& path, const CumulantSolution& sol) {
  auto os = open_output(path);
  os.precision(17);
  os << "t,x,u\n";
  for (std::size_t k = 0; k < sol.t.size(); ++k) {
    for (std::size_t i = 0; i < sol.x.size(); ++i) os << sol.t[k] << ',' << sol.x[i] << ',' << sol.u[k][i] << '\n';
  }
  if (!os) throw OutputError("failed writing " + path.string());
}

nlohmann::json LaplaceComparison::to_json() const {
  return {{"time", time}, {"estimate", estimate}, {"standard_error", standard_error},
          {"prediction", prediction}, {"z", z}, {"replicates", replicates}};
}

LaplaceComparison laplace_crosscheck(const ModelSpec& spec, const EquilibriumTable& eq,
                                     const std::vector<Trajectory>& trajs, const CumulantSolution& sol,
                                     const std::function<double(double)>& f0, double t) {
  if (spec.interaction_bound != 0.0) {
    throw PreconditionError("Laplace cross-check needs an interaction-free model (branching property)");
  }
  for (const auto& row : eq.rows()) {
    if (std::abs(row.b_hat - row.d_hat) > 1e-9 * std::max(1.0, std::abs(row.b_hat))) {
      throw PreconditionError("Laplace cross-check needs b_hat = d_hat on the trait grid");
    }
  }
  if (trajs.empty()) throw PreconditionError("Laplace cross-check needs trajectories");
  const std::size_t kt = sol.time_index(t);
  LaplaceComparison out;
  out.time = t;
  out.replicates = trajs.size();
  std::vector<double> est, pred;
  for (const auto& traj : trajs) {
    const MeasureSample& now = traj.snapshots[snapshot_index(traj, t)];
    const MeasureSample& start = traj.snapshots[snapshot_index(traj, 0.0)];
    est.push_back(std::exp(-agetrait::pair(now, [&](TraitView x, double) { return f0(x[0]); })));
    pred.push_back(std::exp(-agetrait::pair(start, [&](TraitView x, double) { return sol.value(kt, x[0]); })));
  }
  out.estimate = mean_of(est);
  out.prediction = mean_of(pred);
  double m2 = 0.0;
  for (double v : est) m2 += (v - out.estimate) * (v - out.estimate);
  const double r = static_cast<double>(est.size());
  out.standard_error = r > 1.0 ? std::sqrt(m2 / (r - 1.0) / r) : 0.0;
  const double diff = out.estimate - out.prediction;
  if (diff == 0.0) {
    out.z = 0.0;
  } else {
    out.z = out.standard_error > 0.0 ? diff / out.standard_error : std::copysign(kInfinity, diff);
  }
  return out;
}

}  // namespace agetrait
