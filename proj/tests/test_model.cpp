#include <cmath>
#include <set>

#include "doctest.h"

#include "agetrait/errors.hpp"
#include "agetrait/examples.hpp"
#include "agetrait/model.hpp"
#include "agetrait/rng.hpp"
#include "support.hpp"

using namespace agetrait;

TEST_CASE("philox known answers") {
  using B = Philox4x32::block_type;
  CHECK(Philox4x32::generate(B{0, 0, 0, 0}, {0, 0}) == B{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(Philox4x32::generate(B{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        B{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("random streams") {
  SUBCASE("same seed, same stream") {
    RandomStream a(42), b(42);
    for (int k = 0; k < 1000; ++k) CHECK(a.uniform() == b.uniform());
  }
  SUBCASE("uniforms lie in [0, 1)") {
    RandomStream rng(3);
    for (int k = 0; k < 100000; ++k) {
      const double u = rng.uniform();
      REQUIRE(u >= 0.0);
      REQUIRE(u < 1.0);
    }
  }
  SUBCASE("exponential mean") {
    RandomStream rng(5);
    double s = 0.0;
    const int m = 200000;
    for (int k = 0; k < m; ++k) s += rng.exponential(2.0);
    // sd of the mean is 0.5 / sqrt(m)
    CHECK(std::abs(s / m - 0.5) < 5 * 0.5 / std::sqrt(m));
  }
  SUBCASE("derived seeds are distinct") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t k = 0; k < 10000; ++k) seen.insert(derive_seed(11, k));
    CHECK(seen.size() == 10000);
    CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  }
}

TEST_CASE("tail age of the allometric floor") {
  SUBCASE("example 1: r_under = 1") {
    const auto a = tail_age(build_example1().allometric_floor, 1e-6);
    REQUIRE(a.has_value());
    CHECK(*a == doctest::Approx(-std::log(1e-6)).epsilon(1e-9));
    CHECK(std::abs(*a - 13.8155) < 1e-4);
  }
  SUBCASE("example 2: r_under = x1 a") {
    const auto a = tail_age(build_example2().allometric_floor, 1e-6);
    REQUIRE(a.has_value());
    CHECK(*a == doctest::Approx(std::sqrt(2.0 * std::log(1e6) / 0.05)).epsilon(1e-9));
    CHECK(std::abs(*a - 23.51) < 0.01);
  }
  SUBCASE("a non-integrable floor never reaches the level") {
    CHECK_FALSE(tail_age([](double a) { return 1.0 / (1.0 + a); }, 1e-6, 1e3).has_value());
  }
}

TEST_CASE("validate") {
  SUBCASE("shipped examples pass") {
    CHECK(validate(build_example1(), 20000, 1).ok());
    CHECK(validate(build_example2(), 20000, 1).ok());
  }
  SUBCASE("declared birth bound 1 while b(2, 0) = 4") {
    ModelSpec spec = build_example1();
    spec.birth_bound = 1.0;
    CHECK(spec.birth(Trait{2.0}, 0.0) == doctest::Approx(4.0));
    const auto report = validate(spec, 20000, 2);
    REQUIRE(report.violations.size() == 1);
    CHECK(report.violations[0].function == "birth_rate");
    CHECK(report.violations[0].worst_value > 1.0);
    CHECK(report.violations[0].worst_value <= 4.0);
  }
  SUBCASE("same seed, same report") {
    ModelSpec spec = build_example1();
    spec.death_bound = 0.1;
    const auto a = validate(spec, 500, 9), b = validate(spec, 500, 9);
    REQUIRE(a.violations.size() == b.violations.size());
    CHECK(a.violations[0].count == b.violations[0].count);
    CHECK(a.violations[0].worst_age == b.violations[0].worst_age);
  }
}

TEST_CASE("require_complete and scale") {
  ModelSpec spec = build_example1();
  CHECK_NOTHROW(require_complete(spec));
  spec.death = nullptr;
  CHECK_THROWS_AS(require_complete(spec), InvalidModelError);
  CHECK_THROWS_AS(SimScale(0), ConfigError);
  CHECK_THROWS_AS(TraitDomain::box({1.0}, {0.0}), std::exception);
}

TEST_CASE("offspring traits") {
  SUBCASE("p = 0 keeps the parent trait exactly") {
    const ModelSpec spec = testing::constant_model({{"lower", {0}}, {"upper", {4}}, {"p", 0.0}, {"sigma", 1.0}});
    RandomStream rng(1);
    for (double x : {0.0, 0.3, 2.0, 4.0}) {
      CHECK(sample_offspring_trait(spec, SimScale(10), Trait{x}, 0.0, rng) == Trait{x});
    }
  }
  SUBCASE("p = 1, sigma = 1, n = 1e4: sd sigma / sqrt(n)") {
    const ModelSpec spec = testing::constant_model({{"lower", {0}}, {"upper", {4}}, {"p", 1.0}, {"sigma", 1.0}});
    RandomStream rng(2);
    std::vector<double> xs;
    for (int k = 0; k < 100000; ++k) xs.push_back(sample_offspring_trait(spec, SimScale(10000), Trait{2.0}, 0.0, rng)[0]);
    CHECK(std::abs(testing::sample_sd(xs) - 0.01) < 0.0005);
    CHECK(std::abs(testing::mean(xs) - 2.0) < 5 * 0.01 / std::sqrt(1e5));
  }
  SUBCASE("conditioning at the boundary keeps offspring inside") {
    const ModelSpec spec = testing::constant_model({{"lower", {0}}, {"upper", {4}}, {"p", 1.0}, {"sigma", 1.0}});
    RandomStream rng(3);
    for (int k = 0; k < 20000; ++k) {
      const double y = sample_offspring_trait(spec, SimScale(100), Trait{0.0}, 0.0, rng)[0];
      REQUIRE(y >= 0.0);
      REQUIRE(y <= 4.0);
    }
  }
  SUBCASE("degenerate kernel with p = 1 returns the parent") {
    const ModelSpec spec = testing::constant_model({{"lower", {0}}, {"upper", {4}}, {"p", 1.0}, {"sigma", 0.0}});
    RandomStream rng(4);
    CHECK(sample_offspring_trait(spec, SimScale(100), Trait{1.0}, 0.0, rng) == Trait{1.0});
  }
}

TEST_CASE("survival bound") {
  const ModelSpec spec = build_example1();
  CHECK(survival_bound(spec, SimScale(1), 1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-10));
  CHECK(std::abs(survival_bound(spec, SimScale(1), 1.0) - 0.3679) < 1e-4);
  for (std::int64_t n : {1, 10, 1000}) {
    CHECK(survival_bound(spec, SimScale(n), 3.0 / static_cast<double>(n)) ==
          doctest::Approx(std::exp(-3.0)).epsilon(1e-10));
  }
  CHECK(survival_bound(spec, SimScale(1000), 0.0) == 1.0);
  // example 2: r_under(a) = x1 a gives exp(-x1 A^2 / 2) at elapsed A / n
  const ModelSpec ex2 = build_example2();
  CHECK(survival_bound(ex2, SimScale(100), 0.1) == doctest::Approx(std::exp(-0.05 * 100.0 / 2.0)).epsilon(1e-9));
}
