#include "agetrait/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <sstream>

#include "agetrait/errors.hpp"
#include "agetrait/quadrature.hpp"

namespace agetrait {

namespace {

std::string describe_point(TraitView x, double a) {
  std::ostringstream os;
  os.precision(17);
  os << "(x=[";
  for (std::size_t k = 0; k < x.size(); ++k) os << (k ? "," : "") << x[k];
  os << "], a=" << a << ")";
  return os.str();
}

double checked(const char* what, double value, TraitView x, double a) {
  if (!std::isfinite(value)) {
    throw InvalidModelError(std::string(what) + " is not finite at " + describe_point(x, a));
  }
  return value;
}

// Lower-triangular Cholesky factor of a row-major SPD matrix.
std::vector<double> cholesky(const std::vector<double>& m, std::size_t dim) {
  std::vector<double> l(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double sum = m[i * dim + j];
      for (std::size_t k = 0; k < j; ++k) sum -= l[i * dim + k] * l[j * dim + k];
      if (i == j) {
        if (!(sum > 0.0)) throw InvalidModelError("mutation covariance is not positive definite");
        l[i * dim + i] = std::sqrt(sum);
      } else {
        l[i * dim + j] = sum / l[j * dim + j];
      }
    }
  }
  return l;
}

}  // namespace

SimScale::SimScale(std::int64_t value) : n(value) {
  if (value < 1) throw ConfigError("scale n must be >= 1");
}

TraitDomain TraitDomain::box(Trait lower, Trait upper) {
  if (lower.size() != upper.size() || lower.empty()) {
    throw ConfigError("trait box bounds must have equal, positive dimension");
  }
  for (std::size_t k = 0; k < lower.size(); ++k) {
    if (!(lower[k] <= upper[k])) throw ConfigError("trait box has lower > upper");
  }
  TraitDomain d;
  d.lower_ = std::move(lower);
  d.upper_ = std::move(upper);
  d.bounded_ = true;
  return d;
}

TraitDomain TraitDomain::whole_space(std::size_t dim) {
  TraitDomain d;
  d.lower_.assign(dim, -kInfinity);
  d.upper_.assign(dim, kInfinity);
  d.bounded_ = false;
  return d;
}

bool TraitDomain::contains(TraitView x) const {
  if (x.size() != lower_.size()) return false;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!(x[k] >= lower_[k] && x[k] <= upper_[k])) return false;
  }
  return true;
}

ConditionedGaussianKernel::ConditionedGaussianKernel(std::vector<double> variances)
    : dim_(variances.size()), variances_(std::move(variances)) {
  for (double v : variances_) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("mutation variance must be finite and >= 0");
  }
}

ConditionedGaussianKernel::ConditionedGaussianKernel(
    std::size_t dim, std::function<std::vector<double>(TraitView)> covariance)
    : dim_(dim), covariance_(std::move(covariance)) {}

void ConditionedGaussianKernel::draw_increment(TraitView parent, const SimScale& scale,
                                               RandomStream& rng, std::span<double> out) const {
  const double inv_n = 1.0 / scale.value();
  if (!covariance_) {
    for (std::size_t k = 0; k < dim_; ++k) out[k] = std::sqrt(variances_[k] * inv_n) * rng.normal();
    return;
  }
  const std::vector<double> l = cholesky(covariance_(parent), dim_);
  std::vector<double> z(dim_);
  for (auto& v : z) v = rng.normal();
  const double s = std::sqrt(inv_n);
  for (std::size_t i = 0; i < dim_; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j <= i; ++j) sum += l[i * dim_ + j] * z[j];
    out[i] = s * sum;
  }
}

void PointMassZeroKernel::draw_increment(TraitView, const SimScale&, RandomStream&,
                                         std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
}

void set_focal_interaction(ModelSpec& spec, RateFn focal, double bound) {
  spec.interaction_focal = focal;
  spec.interaction = [focal](TraitView x, double a, TraitView, double) { return focal(x, a); };
  spec.interaction_bound = bound;
}

void require_complete(const ModelSpec& spec) {
  if (!spec.birth || !spec.death || !spec.allometric || !spec.allometric_floor ||
      !spec.interaction || !spec.mutation_prob || !spec.mutation) {
    throw InvalidModelError("model '" + spec.name + "' is missing a rate function or kernel");
  }
  if (spec.trait_dim == 0 || spec.domain.dim() != spec.trait_dim) {
    throw InvalidModelError("model '" + spec.name + "' trait dimension mismatch");
  }
  for (double b : {spec.birth_bound, spec.death_bound, spec.interaction_bound}) {
    if (!(b >= 0.0) || !std::isfinite(b)) {
      throw InvalidModelError("model '" + spec.name + "' declares a non-finite or negative bound");
    }
  }
  if (!(spec.allometric_bound >= 0.0)) {
    throw InvalidModelError("model '" + spec.name + "' declares a negative allometric bound");
  }
}

std::optional<double> tail_age(const std::function<double(double)>& floor, double epsilon,
                               double search_limit) {
  const double target = -std::log(epsilon);
  if (target <= 0.0) return 0.0;
  QuadratureOptions opts;
  opts.abs_tol = 1e-12;
  opts.initial_panels = 2;
  double cumulative = 0.0;
  double a = 0.0;
  const double width = 1.0;
  while (a < search_limit) {
    const double b = std::min(a + width, search_limit);
    const double panel = adaptive_simpson(floor, a, b, opts).value;
    if (cumulative + panel >= target) {
      double lo = a, hi = b;
      for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        const double partial = adaptive_simpson(floor, a, mid, opts).value;
        if (cumulative + partial >= target) {
          hi = mid;
        } else {
          lo = mid;
        }
      }
      return hi;
    }
    cumulative += panel;
    a = b;
  }
  return std::nullopt;
}

ValidationReport validate(const ModelSpec& spec, std::size_t samples, std::uint64_t seed,
                          const ValidationOptions& opts) {
  require_complete(spec);
  ValidationReport report;
  report.samples = samples;
  report.seed = seed;
  report.tail_epsilon = opts.tail_epsilon;
  report.tail_search_limit = opts.tail_search_limit;
  report.tail_age = tail_age(spec.allometric_floor, opts.tail_epsilon, opts.tail_search_limit);

  const double age_span = report.tail_age ? std::max(1.0, 2.0 * *report.tail_age) : 100.0;
  RandomStream rng(seed);
  const std::size_t dim = spec.trait_dim;
  Trait x(dim), y(dim);

  auto draw_trait = [&](Trait& t) {
    for (std::size_t k = 0; k < dim; ++k) {
      if (spec.domain.bounded()) {
        const double lo = spec.domain.lower()[k], hi = spec.domain.upper()[k];
        t[k] = lo + (hi - lo) * rng.uniform();
      } else {
        t[k] = 10.0 * rng.normal();
      }
    }
  };
  auto draw_age = [&] { return rng.uniform() < 0.125 ? 0.0 : age_span * rng.uniform(); };

  // Keyed by check name so each failing property appears once.
  std::map<std::string, BoundViolation> found;
  std::vector<std::string> order;
  auto record = [&](const std::string& what, TraitView t, double a, double value, double bound,
                    double excess) {
    auto it = found.find(what);
    if (it == found.end()) {
      order.push_back(what);
      it = found.emplace(what, BoundViolation{what, 0, {}, 0.0, value, bound}).first;
      it->second.worst_trait.assign(t.begin(), t.end());
      it->second.worst_age = a;
      it->second.worst_value = value;
    }
    BoundViolation& v = it->second;
    const double prev_excess = std::abs(v.worst_value) - v.bound;
    if (excess > prev_excess) {
      v.worst_trait.assign(t.begin(), t.end());
      v.worst_age = a;
      v.worst_value = value;
    }
    ++v.count;
  };

  for (std::size_t s = 0; s < samples; ++s) {
    draw_trait(x);
    draw_trait(y);
    const double a = draw_age();
    const double alpha = draw_age();

    const double b = checked("birth_rate", spec.birth(x, a), x, a);
    const double d = checked("death_rate", spec.death(x, a), x, a);
    const double r = checked("allometric_rate", spec.allometric(x, a), x, a);
    const double floor = checked("allometric_floor", spec.allometric_floor(a), x, a);
    const double p = checked("mutation_prob", spec.mutation_prob(x, a), x, a);
    const double u = checked("interaction", spec.interaction(x, a, y, alpha), x, a);

    if (b < 0.0 || b > spec.birth_bound) record("birth_rate", x, a, b, spec.birth_bound, std::max(-b, b - spec.birth_bound));
    if (d < 0.0 || d > spec.death_bound) record("death_rate", x, a, d, spec.death_bound, std::max(-d, d - spec.death_bound));
    if (std::abs(r) > spec.allometric_bound) record("allometric_rate", x, a, r, spec.allometric_bound, std::abs(r) - spec.allometric_bound);
    if (floor < 0.0 || floor > std::abs(r)) record("allometric_floor", x, a, floor, std::abs(r), floor - std::abs(r));
    if (p < 0.0 || p > 1.0) record("mutation_prob", x, a, p, 1.0, std::max(-p, p - 1.0));
    if (u < 0.0 || u > spec.interaction_bound) record("interaction", x, a, u, spec.interaction_bound, std::max(-u, u - spec.interaction_bound));
  }
  for (const auto& name : order) report.violations.push_back(found.at(name));
  return report;
}

OffspringDraw sample_offspring_trait(const ModelSpec& spec, const SimScale& scale,
                                     TraitView parent, double age, RandomStream& rng,
                                     std::span<double> out, std::size_t max_attempts) {
  std::copy(parent.begin(), parent.end(), out.begin());
  const double p = spec.mutation_prob(parent, age);
  // Certain outcomes consume no randomness.
  if (!(p > 0.0)) return {false};
  if (p < 1.0 && !(rng.uniform() < p)) return {false};
  if (spec.mutation->degenerate()) return {true};
  std::array<double, 8> small{};
  std::vector<double> large;
  std::span<double> h(small.data(), parent.size());
  if (parent.size() > small.size()) {
    large.resize(parent.size());
    h = large;
  }
  for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
    spec.mutation->draw_increment(parent, scale, rng, h);
    for (std::size_t k = 0; k < parent.size(); ++k) out[k] = parent[k] + h[k];
    if (spec.domain.contains(TraitView(out.data(), out.size()))) return {true};
  }
  std::copy(parent.begin(), parent.end(), out.begin());
  throw DegenerateKernelError("mutation kernel '" + spec.mutation->name() +
                              "' failed to land in the trait domain after " +
                              std::to_string(max_attempts) + " attempts");
}

Trait sample_offspring_trait(const ModelSpec& spec, const SimScale& scale, TraitView parent,
                             double age, RandomStream& rng) {
  Trait out(parent.size());
  sample_offspring_trait(spec, scale, parent, age, rng, out);
  return out;
}

double survival_bound(const ModelSpec& spec, const SimScale& scale, double elapsed) {
  if (!(elapsed > 0.0)) return 1.0;
  const double n = scale.value();
  const auto& floor = spec.allometric_floor;
  QuadratureOptions opts;
  opts.initial_panels = 16;
  const double integral =
      adaptive_simpson([&](double u) { return n * floor(n * u); }, 0.0, elapsed, opts).value;
  return std::exp(-integral);
}

}  // namespace agetrait
