#pragma once

// A model instance: rate functions of (trait, age), their declared bounds,
// the interaction kernel and the mutation kernel, plus the scale parameter n.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agetrait/rng.hpp"

namespace agetrait {

using TraitView = std::span<const double>;
using Trait = std::vector<double>;

// f(trait, age)
using RateFn = std::function<double(TraitView, double)>;
// U((x, a), (y, alpha))
using KernelFn = std::function<double(TraitView, double, TraitView, double)>;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct SimScale {
  std::int64_t n = 1;

  explicit SimScale(std::int64_t value = 1);
  double value() const { return static_cast<double>(n); }
};

// Closed set of traits: an axis-aligned box or the whole space.
class TraitDomain {
 public:
  static TraitDomain box(Trait lower, Trait upper);
  static TraitDomain whole_space(std::size_t dim);

  std::size_t dim() const { return lower_.size(); }
  bool bounded() const { return bounded_; }
  const Trait& lower() const { return lower_; }
  const Trait& upper() const { return upper_; }
  bool contains(TraitView x) const;

 private:
  Trait lower_;
  Trait upper_;
  bool bounded_ = true;
};

// Law of the trait increment h of a mutant. Implementations draw h for a
// given scale; the caller handles domain conditioning.
class MutationKernel {
 public:
  virtual ~MutationKernel() = default;
  virtual std::string name() const = 0;
  // Writes one unconditioned increment into `out`.
  virtual void draw_increment(TraitView parent, const SimScale& scale, RandomStream& rng,
                              std::span<double> out) const = 0;
  // True when every increment is zero (no conditioning loop needed).
  virtual bool degenerate() const { return false; }
};

// Centered Gaussian with covariance Sigma(x)/n, conditioned to the domain by
// rejection. Either per-coordinate variances or a covariance function.
class ConditionedGaussianKernel : public MutationKernel {
 public:
  explicit ConditionedGaussianKernel(std::vector<double> variances);
  // covariance(x) returns a dim x dim row-major symmetric positive definite matrix.
  ConditionedGaussianKernel(std::size_t dim, std::function<std::vector<double>(TraitView)> covariance);

  std::string name() const override { return "gaussian_conditioned"; }
  void draw_increment(TraitView parent, const SimScale& scale, RandomStream& rng,
                      std::span<double> out) const override;
  const std::vector<double>& variances() const { return variances_; }
  bool has_covariance_fn() const { return static_cast<bool>(covariance_); }

 private:
  std::size_t dim_;
  std::vector<double> variances_;
  std::function<std::vector<double>(TraitView)> covariance_;
};

class PointMassZeroKernel : public MutationKernel {
 public:
  std::string name() const override { return "point_mass_zero"; }
  void draw_increment(TraitView, const SimScale&, RandomStream&,
                      std::span<double> out) const override;
  bool degenerate() const override { return true; }
};

// Optional closed-form primitive R(x, a) = int_0^a r(x, s) ds and its inverse
// in a. Only the simulators use it, to schedule per-individual clocks.
struct AllometricPrimitive {
  std::function<double(TraitView, double)> cumulative;
  std::function<double(TraitView, double)> inverse;
};

struct ModelSpec {
  std::string name;
  std::size_t trait_dim = 1;
  TraitDomain domain = TraitDomain::whole_space(1);

  RateFn birth;
  double birth_bound = 0.0;
  RateFn death;
  double death_bound = 0.0;

  RateFn allometric;
  double allometric_bound = 0.0;  // may be +inf; then only exact_split can simulate
  std::function<double(double)> allometric_floor;  // r_under(a) <= |r(x, a)|
  std::optional<AllometricPrimitive> allometric_primitive;

  KernelFn interaction;
  double interaction_bound = 0.0;
  // Set iff U((x,a),(y,alpha)) = focal(x, a): the kernel ignores the other individual.
  RateFn interaction_focal;

  RateFn mutation_prob;
  std::shared_ptr<const MutationKernel> mutation;

  bool focal_only() const { return static_cast<bool>(interaction_focal); }
};

// Makes `interaction` from a focal-only function and marks the spec focal-only.
void set_focal_interaction(ModelSpec& spec, RateFn focal, double bound);

struct BoundViolation {
  std::string function;  // which declared property failed
  std::size_t count = 0;
  Trait worst_trait;
  double worst_age = 0.0;
  double worst_value = 0.0;
  double bound = 0.0;
};

struct ValidationReport {
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  std::vector<BoundViolation> violations;
  double tail_epsilon = 1e-6;
  std::optional<double> tail_age;  // A_tail(eps); empty when not reached
  double tail_search_limit = 0.0;
  bool ok() const { return violations.empty() && tail_age.has_value(); }
};

struct ValidationOptions {
  double tail_epsilon = 1e-6;
  double tail_search_limit = 1e4;
};

// Randomized spot-check of the declared bounds plus the tail age of r_under.
ValidationReport validate(const ModelSpec& spec, std::size_t samples, std::uint64_t seed,
                          const ValidationOptions& opts = {});

// A_tail(eps) = min{A : exp(-int_0^A r_under) <= eps}, or empty when the
// cumulative floor stays below -ln(eps) up to `search_limit`.
std::optional<double> tail_age(const std::function<double(double)>& floor, double epsilon,
                               double search_limit = 1e4);

struct OffspringDraw {
  bool mutated = false;
};

// Offspring trait under K^n(x, a, dh) = p(x,a) pi^n(x, dh) + (1 - p(x,a)) delta_0(dh).
OffspringDraw sample_offspring_trait(const ModelSpec& spec, const SimScale& scale,
                                     TraitView parent, double age, RandomStream& rng,
                                     std::span<double> out, std::size_t max_attempts = 1000000);
Trait sample_offspring_trait(const ModelSpec& spec, const SimScale& scale, TraitView parent,
                             double age, RandomStream& rng);

// S^n(l) = exp(-int_0^l n r_under(n u) du).
double survival_bound(const ModelSpec& spec, const SimScale& scale, double elapsed);

// Throws InvalidModelError unless the spec has every callable and a consistent dimension.
void require_complete(const ModelSpec& spec);

}  // namespace agetrait
