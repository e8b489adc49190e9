#pragma once

// Empirical checks of the superprocess limit: age averaging (KS against the
// stable age density), the limiting martingale problem, occupation measures,
// and the cumulant equation u_t = A u - r_hat u^2 with a Laplace-functional
// cross-check.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "agetrait/equilibrium.hpp"
#include "agetrait/model.hpp"
#include "agetrait/population.hpp"
#include "agetrait/simulate.hpp"

namespace agetrait {

using TraitFn = std::function<double(TraitView)>;

// Averaged coefficients at arbitrary traits, read from an equilibrium table.
// One-dimensional tables use 4-point Lagrange interpolation; higher
// dimensions take the nearest grid trait.
class CoefficientField {
 public:
  explicit CoefficientField(const EquilibriumTable& table);

  double b_hat(TraitView x) const { return eval(b_, x); }
  double d_hat(TraitView x) const { return eval(d_, x); }
  double r_hat(TraitView x) const { return eval(r_, x); }
  double pr_hat(TraitView x) const { return eval(pr_, x); }
  // Throws PreconditionError unless the kernel is focal-only.
  double u_hat(TraitView x) const;

 private:
  double eval(const std::vector<double>& values, TraitView x) const;

  const EquilibriumTable* table_;
  std::vector<double> grid_;  // first coordinate, 1-D tables only
  std::vector<double> b_, d_, r_, pr_, u_;
  bool has_u_ = false;
};

// ---- averaging ---------------------------------------------------------

struct KsBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t atoms = 0;
  double mass = 0.0;
  double statistic = 0.0;
  bool skipped = false;  // no atoms fell in the bin
};

struct AveragingReport {
  double time = 0.0;
  std::size_t replicates = 0;
  std::size_t extinct = 0;
  std::size_t atoms = 0;
  std::size_t components = 0;  // distinct traits in the reference mixture
  bool aggregated = false;     // traits were pooled onto grid traits
  double pooled = 0.0;
  std::vector<KsBin> bins;

  nlohmann::json to_json() const;
};

struct AveragingOptions {
  // Above this many distinct traits, mixture weights move to the nearest grid trait.
  std::size_t max_components = 256;
};

// Uses the snapshot nearest to t in each trajectory; empty snapshots count as extinct.
AveragingReport averaging_ks(const std::vector<Trajectory>& trajs, const EquilibriumTable& eq, double t,
                             const std::vector<double>& bin_edges, const AveragingOptions& opts = {});
AveragingReport averaging_ks(const std::vector<MeasureSample>& samples, const EquilibriumTable& eq,
                             const std::vector<double>& bin_edges, const AveragingOptions& opts = {});

// KS distance between the empirical law of `ages` (equal weights) and `cdf`.
double ks_statistic(std::vector<double> ages, const std::function<double(double)>& cdf);

// ---- martingale problem ------------------------------------------------

struct Generator {
  enum class Kind { none, laplacian };
  Kind kind = Kind::none;
  double sigma2 = 0.0;  // A f = sigma2 / 2 * Laplacian f

  // A f(x) by central differences with step h.
  double apply(const TraitFn& f, TraitView x, double h = 1e-3) const;
  std::string name() const;
};

struct MartingaleOptions {
  Generator generator;
  bool drop_drift = false;  // negative control: omit the drift integral
  double fd_step = 1e-3;
};

// One replicate's values at the requested times.
struct MartingaleSample {
  std::vector<double> value;       // M^f_t
  std::vector<double> coarse;      // same, drift integrated on every other snapshot
  std::vector<double> qv_integral; // int_0^t 2 r_hat f^2 X_s ds
};

MartingaleSample martingale_sample(const Trajectory& traj, const ModelSpec& spec, const CoefficientField& coef,
                                   const TraitFn& f, const std::vector<double>& times,
                                   const MartingaleOptions& opts = {});

struct MartingaleTimeStat {
  double time = 0.0;
  double mean = 0.0;
  double standard_error = 0.0;
  double z = 0.0;
  double variance = 0.0;
  double predicted = 0.0;
  double ratio = 0.0;
  double ratio_ci_lower = 0.0;
  double ratio_ci_upper = 0.0;
  double richardson_bias = 0.0;  // mean (fine - coarse) / 3 across replicates
};

struct MartingaleReport {
  std::size_t replicates = 0;
  std::vector<std::string> warnings;
  std::vector<MartingaleTimeStat> stats;

  nlohmann::json to_json() const;
};

MartingaleReport summarize_martingale(const std::vector<MartingaleSample>& samples,
                                      const std::vector<double>& times);
MartingaleReport martingale_check(const std::vector<Trajectory>& trajs, const ModelSpec& spec,
                                  const EquilibriumTable& eq, const TraitFn& f,
                                  const std::vector<double>& times, const MartingaleOptions& opts = {});

// ---- occupation measure ------------------------------------------------

// Gamma(ds, dx, da) = X_s(dx, da) ds with trapezoid weights over snapshot times.
class OccupationMeasure {
 public:
  explicit OccupationMeasure(const Trajectory& traj);

  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& time_weights() const { return weights_; }
  double total_mass() const;
  double pair(const std::function<double(double, TraitView, double)>& phi) const;

 private:
  const Trajectory* traj_;
  std::vector<double> times_;
  std::vector<double> weights_;
};

// ---- cumulant equation -------------------------------------------------

struct CumulantSolution {
  std::vector<double> x;
  std::vector<double> t;               // output times
  std::vector<std::vector<double>> u;  // u[k][i] = u(t[k], x[i])
  double dt = 0.0;
  double dx = 0.0;
  std::size_t steps = 0;
  std::string generator;
  std::string boundary = "neumann";

  // Linear interpolation in x at output time index k, clamped to the grid.
  double value(std::size_t k, double xq) const;
  std::size_t time_index(double tq) const;
};

struct CumulantGrid {
  double horizon = 1.0;
  std::size_t steps = 10000;
  std::size_t output_every = 100;
};

// Explicit RK4 in time, second differences with reflecting ends in x.
// `r_hat` and `diffusion` (the coefficient multiplying f'') are given on the grid x.
CumulantSolution cumulant_solve(const std::vector<double>& x, const std::vector<double>& r_hat,
                                const std::vector<double>& diffusion, const std::vector<double>& f0,
                                const CumulantGrid& grid, const std::string& generator_name = "none");
// Coefficients from a one-dimensional equilibrium table: diffusion = pr_hat sigma2 / 2.
CumulantSolution cumulant_solve(const EquilibriumTable& eq, const Generator& generator,
                                const std::function<double(double)>& f0, const CumulantGrid& grid);

void write_cumulant_csv(const std::filesystem::path& path, const CumulantSolution& sol);

struct LaplaceComparison {
  double time = 0.0;
  double estimate = 0.0;
  double standard_error = 0.0;
  double prediction = 0.0;
  double z = 0.0;
  std::size_t replicates = 0;

  nlohmann::json to_json() const;
};

// E exp(-<X_t, f0>) against exp(-<X_0, u(t, .)>).
LaplaceComparison laplace_crosscheck(const ModelSpec& spec, const EquilibriumTable& eq,
                                     const std::vector<Trajectory>& trajs, const CumulantSolution& sol,
                                     const std::function<double(double)>& f0, double t);

}  // namespace agetrait
