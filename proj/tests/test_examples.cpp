#include <cmath>
#include <numbers>

#include "doctest.h"

#include "agetrait/equilibrium.hpp"
#include "agetrait/errors.hpp"
#include "agetrait/examples.hpp"

using namespace agetrait;

TEST_CASE("example rate functions") {
  const ModelSpec ex1 = build_example(1);
  const ModelSpec ex2 = build_example(2);
  CHECK(ex1.birth(Trait{2.0}, 0.0) == doctest::Approx(4.0));
  CHECK(ex1.birth(Trait{2.0}, 60.0) < 1e-25);
  CHECK(ex2.allometric(Trait{1.5}, 2.0) == doctest::Approx(3.0));
  CHECK(ex1.allometric(Trait{3.0}, 5.0) == 1.0);
  CHECK(ex1.death(Trait{1.0}, 1.0) == 0.25);
  CHECK(ex1.interaction_focal(Trait{1.0}, 0.0) == doctest::Approx(1.7 * 3.0));
  CHECK(ex1.birth_bound == doctest::Approx(4.0));
  CHECK(ex1.interaction_bound == doctest::Approx(6.8));
  CHECK(std::isinf(ex2.allometric_bound));
  CHECK(ex2.domain.lower()[0] == 0.05);
  CHECK(ex2.domain.upper()[0] == 3.95);
}

TEST_CASE("example parameters") {
  CHECK(build_example(1, {{"sigma", 0.8}}).name == build_example1().name);
  CHECK_THROWS_AS(build_example(1, {{"colour", 1}}), ConfigError);
  CHECK_THROWS_AS(build_example(1, {{"x1", 0.1}}), ConfigError);
  CHECK_THROWS_AS(build_example(1, {{"p", 1.5}}), ConfigError);
  CHECK_THROWS_AS(build_example(2, {{"x1", 2.0}, {"x2", 1.0}}), ConfigError);
  CHECK_THROWS_AS(build_example(3), ConfigError);
  CHECK(example2_params_from_json({{"x1", 0.1}}).x1 == 0.1);
}

TEST_CASE("closed-form averaged coefficients") {
  SUBCASE("example 2 birth factor, as printed") {
    CHECK(std::abs(example2_birth_factor(1.5) - 0.58) < 0.005);
    CHECK(std::abs(example2_birth_factor(3.0) - 0.67) < 0.005);
  }
  SUBCASE("normal cdf") {
    CHECK(normal_cdf(0.0) == 0.5);
    CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
    CHECK(normal_cdf(-8.0) == doctest::Approx(6.22096057427178e-16).epsilon(1e-9));
  }
  SUBCASE("example 1 allometric average") {
    for (double x : {0.0, 2.0, 4.0}) CHECK(closed_form_hatted(1, HattedKind::r, x) == 1.0);
  }
  SUBCASE("closed forms agree with quadrature") {
    for (int id : {1, 2}) {
      const ModelSpec spec = build_example(id);
      for (double x : {0.1, 0.9, 1.5, 2.6, 3.9}) {
        const AgeProfile prof(spec, {x});
        const Trait xv{x};
        auto avg = [&](const RateFn& f) { return prof.average([&](double a) { return f(xv, a); }).value; };
        CHECK(avg(spec.birth) == doctest::Approx(closed_form_hatted(id, HattedKind::b, x)).epsilon(1e-8));
        CHECK(avg(spec.death) == doctest::Approx(closed_form_hatted(id, HattedKind::d, x)).epsilon(1e-8));
        CHECK(avg(spec.allometric) == doctest::Approx(closed_form_hatted(id, HattedKind::r, x)).epsilon(1e-8));
        CHECK(avg(spec.interaction_focal) == doctest::Approx(closed_form_hatted(id, HattedKind::U, x)).epsilon(1e-8));
      }
    }
  }
}

TEST_CASE("dominating diffusion parameters") {
  const DominationConfig cfg;
  CHECK(cfg.m0() == doctest::Approx((8.2 - 0.25) / (1.7 * 0.025)));
  CHECK(std::abs(cfg.m0() - 187.06) < 0.01);
  CHECK(cfg.ceiling_value() == doctest::Approx(10.0 * cfg.m0()));
  DominationConfig bad = cfg;
  bad.zeta = 0.2;  // needs zeta < 2 d0 / x0 = 0.125
  CHECK_THROWS_AS(bad.check(1.0), ConfigError);
}

TEST_CASE("Lambda bound") {
  const DominationConfig cfg;
  const Example1Params p;
  SUBCASE("x = 2, Z = 0") {
    const auto lb = lambda_bound(p, cfg, 2.0, 0.0);
    CHECK(lb.lambda == doctest::Approx(1.75));
    CHECK(lb.bound == doctest::Approx(7.75));
  }
  SUBCASE("Z above m0") {
    for (double x : {0.0, 1.0, 3.9}) CHECK(lambda_bound(p, cfg, x, 2.0 * cfg.m0()).bound == doctest::Approx(-0.2));
  }
  SUBCASE("randomized") {
    const auto check = lambda_bound_check(cfg, 1000000, 17);
    CHECK(check.draws == 1000000);
    CHECK(check.violations == 0);
    CHECK(check.worst_excess <= 0.0);
  }
}

TEST_CASE("dominating diffusion paths") {
  const DominationConfig cfg;
  SUBCASE("z = 0 is absorbed at once") {
    const auto path = dominating_diffusion(cfg, 0.0, 1.0, 1);
    REQUIRE(path.tau_zero.has_value());
    CHECK(*path.tau_zero == 0.0);
  }
  SUBCASE("drift only: exponential decay to m0") {
    DiffusionOptions opts;
    opts.noise = false;
    opts.stop_at_exit = true;
    const double z = 1.5 * cfg.m0();
    const auto path = dominating_diffusion(cfg, z, 100.0, 1, opts);
    REQUIRE(path.tau_m0.has_value());
    const double exact = 2.0 / (0.1 * 4.0) * std::log(1.5);
    CHECK(std::abs(*path.tau_m0 - exact) < 1e-3 * exact);
  }
  SUBCASE("same seed, same path") {
    DiffusionOptions opts;
    opts.record = true;
    const auto a = dominating_diffusion(cfg, 300.0, 0.5, 8, opts);
    const auto b = dominating_diffusion(cfg, 300.0, 0.5, 8, opts);
    CHECK(a.values == b.values);
  }
}

TEST_CASE("hitting bound") {
  const DominationConfig cfg;
  SUBCASE("z below m0: tau = 0") {
    const auto rec = hitting_bound_check(cfg, 0.5 * cfg.m0(), 10, 1);
    CHECK(rec.estimate == 0.0);
    CHECK(rec.holds);
  }
  SUBCASE("noise disabled: m0 ln(z / m0) <= z") {
    const double z = 1.5 * cfg.m0();
    const auto rec = hitting_bound_check(cfg, z, 1, 1, 1, false);
    CHECK(rec.estimate == doctest::Approx(cfg.m0() * 5.0 * std::log(1.5)).epsilon(1e-3));
    CHECK(rec.bound == doctest::Approx(2.0 * z / 0.4));
    CHECK(rec.holds);
  }
  SUBCASE("Monte Carlo at z = 1.5 m0") {
    const auto rec = hitting_bound_check(cfg, 1.5 * cfg.m0(), 200, 5, 0);
    CHECK(std::abs(rec.bound - 1403.0) < 0.5);
    CHECK(rec.censored == 0);
    CHECK(rec.holds);
    CHECK(rec.ci_upper <= rec.bound);
    // thread count does not change the estimate
    CHECK(hitting_bound_check(cfg, 1.5 * cfg.m0(), 200, 5, 1).estimate == rec.estimate);
  }
}

TEST_CASE("extinction records") {
  SimConfig cfg;
  cfg.scale = SimScale(100);
  cfg.initial.count = 100;
  cfg.initial.trait = {1.5};
  cfg.horizon = 0.05;
  const auto recs = extinction_times(1, build_example1(), cfg, 4, 0);
  REQUIRE(recs.size() == 4);
  for (std::size_t k = 0; k < recs.size(); ++k) {
    CHECK(recs[k].example_id == 1);
    CHECK(recs[k].seed == derive_seed(0, k));
    CHECK(recs[k].horizon == 0.05);
  }
  std::vector<ExtinctionRecord> fake = {{1, 0, 0.5, 2.0}, {1, 1, std::nullopt, 2.0}, {1, 2, 1.0, 2.0}};
  CHECK(median_extinction_time(fake) == 1.0);
  fake.push_back({1, 3, std::nullopt, 2.0});
  CHECK(std::isinf(median_extinction_time(fake)));
}
