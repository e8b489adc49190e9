#pragma once

// Stable age density m_hat(x, a) = exp(-R(x, a)) / Z(x), R(x, a) = int_0^a r(x, s) ds,
// and age-averaged coefficients psi_hat(x) = int psi(x, a) m_hat(x, a) da.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "agetrait/model.hpp"
#include "agetrait/quadrature.hpp"

namespace agetrait {

struct EquilibriumOptions {
  double age_step = 1.0 / 32.0;  // knot spacing for R and the tabulated density
  double tail_epsilon = 1e-10;   // truncate where exp(-R) <= tail_epsilon
  double search_limit = 1e4;     // HeavyTailError beyond this age
  double abs_tol = 1e-10;        // quadrature tolerance of averages
};

// Equilibrium age profile of one trait.
class AgeProfile {
 public:
  AgeProfile(const ModelSpec& spec, Trait x, const EquilibriumOptions& opts = {});

  const Trait& trait() const { return x_; }
  double normalizer() const { return z_; }
  double normalizer_error() const { return z_error_; }
  double tail_age() const { return tail_age_; }
  // Upper bound on int_{A_tail}^inf m_hat, derived from r_under.
  double tail_mass() const { return tail_mass_; }

  double cumulative_rate(double a) const;  // R(x, a)
  double density(double a) const;          // m_hat(x, a)
  double cdf(double a) const;              // int_0^a m_hat
  // Cubic Hermite interpolation of the tabulated CDF (slope m_hat); 1 past A_tail.
  double cdf_interpolated(double a) const;
  double rate(double a) const { return r_(x_, a); }

  // Tabulation on the knot grid [0, A_tail].
  const std::vector<double>& ages() const { return ages_; }
  const std::vector<double>& densities() const { return dens_; }
  const std::vector<double>& cdfs() const { return cdf_; }

  // int_0^A_tail psi m_hat; the error adds max |psi| on the grid times tail_mass().
  QuadratureResult average(const std::function<double(double)>& psi) const;

 private:
  double partial_rate(std::size_t knot, double a) const;

  Trait x_;
  RateFn r_;
  EquilibriumOptions opts_;
  double h_;
  std::vector<double> ages_;
  std::vector<double> cum_;   // R at knots
  std::vector<double> dens_;
  std::vector<double> cdf_;
  double z_ = 1.0;
  double z_error_ = 0.0;
  double tail_age_ = 0.0;
  double tail_mass_ = 0.0;
};

// Single queries by exact recomputation.
double stable_age_density(const ModelSpec& spec, TraitView x, double a, const EquilibriumOptions& opts = {});
QuadratureResult hatted(const ModelSpec& spec, const RateFn& psi, TraitView x,
                        const EquilibriumOptions& opts = {});

// Atoms of a finite trait measure.
using TraitMeasure = std::vector<std::pair<Trait, double>>;

// X U_hat(x) = int int U((x,a),(y,alpha)) m_hat(y,alpha) dalpha m_hat(x,a) da X(dy).
double averaged_interaction(const ModelSpec& spec, TraitView x, const TraitMeasure& measure,
                            const EquilibriumOptions& opts = {});

struct EquilibriumRow {
  Trait x;
  double normalizer = 0.0;
  double tail_age = 0.0;
  double tail_mass = 0.0;
  double b_hat = 0.0;
  double d_hat = 0.0;
  double r_hat = 0.0;
  double pr_hat = 0.0;
  std::optional<double> u_hat;  // focal-only kernels
};

class EquilibriumTable {
 public:
  static EquilibriumTable build(const ModelSpec& spec, std::vector<Trait> grid,
                                const EquilibriumOptions& opts = {}, std::size_t threads = 0);
  // `points` per coordinate, uniform over the trait box.
  static std::vector<Trait> uniform_grid(const ModelSpec& spec, std::size_t points = 101);

  std::size_t size() const { return rows_.size(); }
  const std::vector<EquilibriumRow>& rows() const { return rows_; }
  const EquilibriumRow& row(std::size_t k) const { return rows_[k]; }
  const AgeProfile& profile(std::size_t k) const { return profiles_[k]; }
  const EquilibriumOptions& options() const { return opts_; }
  std::size_t trait_dim() const { return dim_; }
  const ModelSpec& spec() const { return *spec_; }
  // Nearest grid trait in Euclidean distance.
  std::size_t nearest(TraitView x) const;
  // Exact profile at an arbitrary trait (not interpolated).
  AgeProfile profile_at(TraitView x) const;

 private:
  std::size_t dim_ = 1;
  std::shared_ptr<const ModelSpec> spec_;
  EquilibriumOptions opts_;
  std::vector<EquilibriumRow> rows_;
  std::vector<AgeProfile> profiles_;
};

void write_equilibrium_csv(const std::filesystem::path& path, const EquilibriumTable& table);

// Compactly supported age test function with its derivative.
struct TestFunction {
  std::string name;
  double lower = 0.0;
  double upper = 1.0;
  std::function<double(double)> value;
  std::function<double(double)> derivative;
};

using TestFunctionFamily = std::vector<TestFunction>;

// (a - l)^3 (u - a)^3 scaled to maximum 1; vanishes with its derivative at l and u.
TestFunction polynomial_bump(double lower, double upper);
// (1 - a/u)^3 on [0, u]; equal to 1 at age 0 so the boundary term is exercised.
TestFunction boundary_polynomial(double upper);
TestFunctionFamily builtin_test_functions();

struct StationaryResidual {
  double weak = 0.0;      // max_k |int psi_k' m - int psi_k r m + psi_k(0) int r m|
  double strong = 0.0;    // max over the age grid of |dm/da + r m|
  double boundary = 0.0;  // |m(0) - int r m|
  std::string worst_function;
  double max() const;
};

StationaryResidual stationary_residual(const ModelSpec& spec, TraitView x, const TestFunctionFamily& family,
                                       const EquilibriumOptions& opts = {});
// Same checks for an arbitrary candidate density on [0, A] (used for negative controls).
StationaryResidual stationary_residual(const std::function<double(double)>& density,
                                       const std::function<double(double)>& rate, double tail_age,
                                       const TestFunctionFamily& family, double abs_tol = 1e-10);

}  // namespace agetrait
