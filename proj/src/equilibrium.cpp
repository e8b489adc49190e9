#include "agetrait/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "agetrait/errors.hpp"
#include "agetrait/parallel.hpp"
#include "agetrait/trajectory_io.hpp"

namespace agetrait {

namespace {

QuadratureOptions fine(double tol) {
  QuadratureOptions q;
  q.abs_tol = tol;
  q.initial_panels = 1;
  return q;
}

std::string trait_text(TraitView x) {
  std::ostringstream os;
  os << '[';
  for (std::size_t k = 0; k < x.size(); ++k) os << (k ? "," : "") << x[k];
  os << ']';
  return os.str();
}

// int_0^inf exp(-int_0^s floor(start + u) du) ds, in unit panels.
double floor_tail(const std::function<double(double)>& floor, double start, double limit) {
  double acc_rate = 0.0;
  double total = 0.0;
  const auto q = fine(1e-14);
  for (double s = 0.0; s < limit; s += 1.0) {
    double inner = acc_rate;
    auto g = [&](double u) {
      return std::exp(-(inner + adaptive_simpson([&](double v) { return floor(start + v); }, s, u, q).value));
    };
    total += adaptive_simpson(g, s, s + 1.0, fine(1e-14)).value;
    acc_rate += adaptive_simpson([&](double v) { return floor(start + v); }, s, s + 1.0, q).value;
    if (std::exp(-acc_rate) < 1e-20 * std::max(total, 1e-300)) return total;
  }
  return kInfinity;
}

}  // namespace

AgeProfile::AgeProfile(const ModelSpec& spec, Trait x, const EquilibriumOptions& opts)
    : x_(std::move(x)), r_(spec.allometric), opts_(opts), h_(opts.age_step) {
  if (!r_ || !spec.allometric_floor) throw InvalidModelError("allometric rate and floor are required");
  if (x_.size() != spec.trait_dim) throw ConfigError("trait has the wrong dimension");
  if (!(h_ > 0.0)) throw ConfigError("age step must be > 0");
  const double log_eps = -std::log(opts.tail_epsilon);
  const auto q = fine(1e-14);
  auto rate = [&](double a) {
    const double v = r_(x_, a);
    if (!std::isfinite(v)) {
      throw InvalidModelError("allometric rate is not finite at x=" + trait_text(x_) +
                              ", a=" + std::to_string(a));
    }
    return v;
  };
  ages_.push_back(0.0);
  cum_.push_back(0.0);
  while (cum_.back() < log_eps) {
    const double a = ages_.back();
    if (a >= opts.search_limit) {
      throw HeavyTailError("normalizer of the stable age density did not converge by age " +
                           std::to_string(opts.search_limit) + " at x=" + trait_text(x_) +
                           " (the allometric rate must have a non-integrable lower envelope)");
    }
    const double next = static_cast<double>(ages_.size()) * h_;
    cum_.push_back(cum_.back() + adaptive_simpson(rate, a, next, q).value);
    ages_.push_back(next);
  }
  tail_age_ = ages_.back();
  // Normalizer: exact Simpson on each knot panel, refining inside.
  QuadratureResult z{};
  for (std::size_t k = 0; k + 1 < ages_.size(); ++k) {
    auto e = [&](double a) { return std::exp(-(cum_[k] + adaptive_simpson(rate, ages_[k], a, q).value)); };
    const auto part = adaptive_simpson(e, ages_[k], ages_[k + 1], fine(opts.abs_tol * h_ / tail_age_));
    z.value += part.value;
    z.error += part.error;
  }
  z_ = z.value;
  z_error_ = z.error;
  const double tail = floor_tail(spec.allometric_floor, tail_age_, opts.search_limit);
  if (!std::isfinite(tail)) {
    throw HeavyTailError("tail of the stable age density is not controlled by the allometric floor at x=" +
                         trait_text(x_));
  }
  tail_mass_ = std::exp(-cum_.back()) * tail / z_;
  dens_.resize(ages_.size());
  cdf_.assign(ages_.size(), 0.0);
  for (std::size_t k = 0; k < ages_.size(); ++k) dens_[k] = std::exp(-cum_[k]) / z_;
  for (std::size_t k = 0; k + 1 < ages_.size(); ++k) {
    auto m = [&](double a) { return density(a); };
    cdf_[k + 1] = cdf_[k] + adaptive_simpson(m, ages_[k], ages_[k + 1], fine(1e-13)).value;
  }
}

double AgeProfile::partial_rate(std::size_t knot, double a) const {
  if (a == ages_[knot]) return cum_[knot];
  auto rate = [&](double s) { return r_(x_, s); };
  return cum_[knot] + adaptive_simpson(rate, ages_[knot], a, fine(1e-14)).value;
}

double AgeProfile::cumulative_rate(double a) const {
  if (a <= 0.0) return 0.0;
  const auto k = std::min(static_cast<std::size_t>(a / h_), ages_.size() - 1);
  return partial_rate(k, a);
}

double AgeProfile::density(double a) const {
  if (a < 0.0) return 0.0;
  return std::exp(-cumulative_rate(a)) / z_;
}

double AgeProfile::cdf(double a) const {
  if (a <= 0.0) return 0.0;
  const auto k = std::min(static_cast<std::size_t>(a / h_), ages_.size() - 1);
  if (a == ages_[k]) return cdf_[k];
  auto m = [&](double s) { return density(s); };
  return std::min(1.0, cdf_[k] + adaptive_simpson(m, ages_[k], a, fine(1e-13)).value);
}

double AgeProfile::cdf_interpolated(double a) const {
  if (a <= 0.0) return 0.0;
  if (a >= tail_age_) return 1.0;
  const auto k = std::min(static_cast<std::size_t>(a / h_), ages_.size() - 2);
  const double s = (a - ages_[k]) / h_;
  const double s2 = s * s, s3 = s2 * s;
  const double v = (2 * s3 - 3 * s2 + 1) * cdf_[k] + (s3 - 2 * s2 + s) * h_ * dens_[k] +
                   (-2 * s3 + 3 * s2) * cdf_[k + 1] + (s3 - s2) * h_ * dens_[k + 1];
  return std::clamp(v, 0.0, 1.0);
}

QuadratureResult AgeProfile::average(const std::function<double(double)>& psi) const {
  QuadratureResult out;
  double sup = 0.0;
  const double tol = opts_.abs_tol * h_ / tail_age_;
  for (std::size_t k = 0; k + 1 < ages_.size(); ++k) {
    auto g = [&](double a) { return psi(a) * density(a); };
    const auto part = adaptive_simpson(g, ages_[k], ages_[k + 1], fine(tol));
    out.value += part.value;
    out.error += part.error;
    out.converged = out.converged && part.converged;
    sup = std::max(sup, std::abs(psi(ages_[k])));
  }
  sup = std::max(sup, std::abs(psi(ages_.back())));
  out.error += sup * tail_mass_;
  return out;
}

double stable_age_density(const ModelSpec& spec, TraitView x, double a, const EquilibriumOptions& opts) {
  return AgeProfile(spec, Trait(x.begin(), x.end()), opts).density(a);
}

QuadratureResult hatted(const ModelSpec& spec, const RateFn& psi, TraitView x, const EquilibriumOptions& opts) {
  const AgeProfile profile(spec, Trait(x.begin(), x.end()), opts);
  return profile.average([&](double a) { return psi(x, a); });
}

double averaged_interaction(const ModelSpec& spec, TraitView x, const TraitMeasure& measure,
                            const EquilibriumOptions& opts) {
  double mass = 0.0;
  for (const auto& [y, w] : measure) mass += w;
  if (mass == 0.0) return 0.0;
  const AgeProfile focal(spec, Trait(x.begin(), x.end()), opts);
  if (spec.focal_only()) {
    return focal.average([&](double a) { return spec.interaction_focal(x, a); }).value * mass;
  }
  double total = 0.0;
  for (const auto& [y, w] : measure) {
    const AgeProfile other(spec, y, opts);
    const double inner = focal.average([&](double a) {
      return other.average([&](double alpha) { return spec.interaction(x, a, y, alpha); }).value;
    }).value;
    total += w * inner;
  }
  return total;
}

EquilibriumTable EquilibriumTable::build(const ModelSpec& spec, std::vector<Trait> grid,
                                         const EquilibriumOptions& opts, std::size_t threads) {
  require_complete(spec);
  if (grid.empty()) throw ConfigError("trait grid is empty");
  EquilibriumTable table;
  table.dim_ = spec.trait_dim;
  table.spec_ = std::make_shared<const ModelSpec>(spec);
  table.opts_ = opts;
  std::vector<std::optional<AgeProfile>> profiles(grid.size());
  table.rows_.resize(grid.size());
  parallel_for(grid.size(), threads, [&](std::size_t k) {
    const Trait& x = grid[k];
    profiles[k].emplace(spec, x, opts);
    const AgeProfile& p = *profiles[k];
    EquilibriumRow& row = table.rows_[k];
    row.x = x;
    row.normalizer = p.normalizer();
    row.tail_age = p.tail_age();
    row.tail_mass = p.tail_mass();
    row.b_hat = p.average([&](double a) { return spec.birth(x, a); }).value;
    row.d_hat = p.average([&](double a) { return spec.death(x, a); }).value;
    row.r_hat = p.average([&](double a) { return spec.allometric(x, a); }).value;
    row.pr_hat = p.average([&](double a) { return spec.mutation_prob(x, a) * spec.allometric(x, a); }).value;
    if (spec.focal_only()) row.u_hat = p.average([&](double a) { return spec.interaction_focal(x, a); }).value;
  });
  table.profiles_.reserve(grid.size());
  for (auto& p : profiles) table.profiles_.push_back(std::move(*p));
  return table;
}

std::vector<Trait> EquilibriumTable::uniform_grid(const ModelSpec& spec, std::size_t points) {
  if (!spec.domain.bounded()) throw ConfigError("a uniform trait grid needs a bounded trait domain");
  if (points < 2) throw ConfigError("trait grid needs at least 2 points per coordinate");
  const std::size_t dim = spec.trait_dim;
  std::size_t total = 1;
  for (std::size_t k = 0; k < dim; ++k) total *= points;
  std::vector<Trait> grid;
  grid.reserve(total);
  for (std::size_t flat = 0; flat < total; ++flat) {
    Trait x(dim);
    std::size_t rest = flat;
    for (std::size_t k = dim; k-- > 0;) {
      const std::size_t i = rest % points;
      rest /= points;
      const double lo = spec.domain.lower()[k], hi = spec.domain.upper()[k];
      x[k] = i + 1 == points ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    }
    grid.push_back(std::move(x));
  }
  return grid;
}

std::size_t EquilibriumTable::nearest(TraitView x) const {
  std::size_t best = 0;
  double best_d = kInfinity;
  for (std::size_t k = 0; k < rows_.size(); ++k) {
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) d += (rows_[k].x[i] - x[i]) * (rows_[k].x[i] - x[i]);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

AgeProfile EquilibriumTable::profile_at(TraitView x) const {
  return AgeProfile(*spec_, Trait(x.begin(), x.end()), opts_);
}

void write_equilibrium_csv(const std::filesystem::path& path, const EquilibriumTable& table) {
  auto os = open_output(path);
  os.precision(17);
  const std::size_t dim = table.trait_dim();
  os << "kind";
  if (dim == 1) {
    os << ",x";
  } else {
    for (std::size_t k = 1; k <= dim; ++k) os << ",x_" << k;
  }
  os << ",a,m_hat,Z,A_tail,b_hat,d_hat,r_hat,pr_hat,U_hat\n";
  for (std::size_t k = 0; k < table.size(); ++k) {
    const auto& row = table.row(k);
    std::ostringstream x;
    x.precision(17);
    for (double v : row.x) x << ',' << v;
    os << "summary" << x.str() << ",,," << row.normalizer << ',' << row.tail_age << ',' << row.b_hat << ','
       << row.d_hat << ',' << row.r_hat << ',' << row.pr_hat << ',';
    if (row.u_hat) os << *row.u_hat;
    os << '\n';
    const auto& p = table.profile(k);
    for (std::size_t i = 0; i < p.ages().size(); ++i) {
      os << "density" << x.str() << ',' << p.ages()[i] << ',' << p.densities()[i] << ",,,,,,,\n";
    }
  }
  if (!os) throw OutputError("failed writing " + path.string());
}

TestFunction polynomial_bump(double lower, double upper) {
  if (!(upper > lower)) throw ConfigError("bump needs lower < upper");
  const double half = 0.5 * (upper - lower);
  const double scale = 1.0 / std::pow(half, 6);
  TestFunction f;
  f.name = "bump[" + std::to_string(lower) + "," + std::to_string(upper) + "]";
  f.lower = lower;
  f.upper = upper;
  f.value = [=](double a) {
    if (a <= lower || a >= upper) return 0.0;
    const double p = (a - lower) * (upper - a);
    return scale * p * p * p;
  };
  f.derivative = [=](double a) {
    if (a <= lower || a >= upper) return 0.0;
    const double l = a - lower, u = upper - a;
    return scale * 3.0 * l * l * u * u * (u - l);
  };
  return f;
}

TestFunction boundary_polynomial(double upper) {
  if (!(upper > 0.0)) throw ConfigError("boundary test function needs upper > 0");
  TestFunction f;
  f.name = "boundary[0," + std::to_string(upper) + "]";
  f.lower = 0.0;
  f.upper = upper;
  f.value = [=](double a) {
    if (a < 0.0 || a >= upper) return 0.0;
    const double s = 1.0 - a / upper;
    return s * s * s;
  };
  f.derivative = [=](double a) {
    if (a < 0.0 || a >= upper) return 0.0;
    const double s = 1.0 - a / upper;
    return -3.0 * s * s / upper;
  };
  return f;
}

TestFunctionFamily builtin_test_functions() {
  TestFunctionFamily family;
  for (auto [l, u] : {std::pair{0.0, 1.0}, {0.0, 2.0}, {0.5, 3.0}, {1.0, 4.0}, {2.0, 6.0}, {0.0, 8.0}}) {
    family.push_back(polynomial_bump(l, u));
  }
  for (double u : {1.0, 3.0, 6.0}) family.push_back(boundary_polynomial(u));
  return family;
}

double StationaryResidual::max() const { return std::max({weak, strong, boundary}); }

StationaryResidual stationary_residual(const std::function<double(double)>& density,
                                       const std::function<double(double)>& rate, double tail_age,
                                       const TestFunctionFamily& family, double abs_tol) {
  StationaryResidual out;
  QuadratureOptions q;
  q.abs_tol = abs_tol;
  q.initial_panels = 64;
  const double rm =
      adaptive_simpson([&](double a) { return rate(a) * density(a); }, 0.0, tail_age, q).value;
  out.boundary = std::abs(density(0.0) - rm);
  for (const auto& f : family) {
    const double hi = std::min(f.upper, tail_age);
    double lhs = 0.0;
    if (hi > f.lower) {
      lhs = adaptive_simpson([&](double a) { return (f.derivative(a) - f.value(a) * rate(a)) * density(a); },
                             f.lower, hi, q)
                .value;
    }
    const double res = std::abs(lhs + f.value(0.0) * rm);
    if (res >= out.weak) {
      out.weak = res;
      out.worst_function = f.name;
    }
  }
  // Fourth-order differences; one-sided near age 0.
  constexpr double h = 2e-3;
  const double step = 1.0 / 32.0;
  for (double a = 0.0; a <= tail_age; a += step) {
    double deriv;
    if (a < 2.0 * h) {
      deriv = (-25.0 * density(a) + 48.0 * density(a + h) - 36.0 * density(a + 2 * h) +
               16.0 * density(a + 3 * h) - 3.0 * density(a + 4 * h)) / (12.0 * h);
    } else {
      deriv = (density(a - 2 * h) - 8.0 * density(a - h) + 8.0 * density(a + h) - density(a + 2 * h)) / (12.0 * h);
    }
    out.strong = std::max(out.strong, std::abs(deriv + rate(a) * density(a)));
  }
  return out;
}

StationaryResidual stationary_residual(const ModelSpec& spec, TraitView x, const TestFunctionFamily& family,
                                       const EquilibriumOptions& opts) {
  const AgeProfile profile(spec, Trait(x.begin(), x.end()), opts);
  return stationary_residual([&](double a) { return profile.density(a); },
                             [&](double a) { return profile.rate(a); }, profile.tail_age(), family,
                             opts.abs_tol);
}

}  // namespace agetrait
