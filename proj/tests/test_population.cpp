#include <cmath>

#include "doctest.h"

#include "agetrait/examples.hpp"
#include "agetrait/population.hpp"
#include "support.hpp"

using namespace agetrait;

TEST_CASE("pairing with the population measure") {
  SUBCASE("f = 1 gives count / n") {
    Population pop(1, SimScale(1000));
    for (int k = 0; k < 3; ++k) pop.add(Trait{1.0}, 0.0);
    CHECK(pair(pop, [](TraitView, double) { return 1.0; }) == doctest::Approx(0.003));
    CHECK(pop.mass() == doctest::Approx(0.003));
  }
  SUBCASE("empty population") {
    Population pop(1, SimScale(1000));
    CHECK(pair(pop, [](TraitView, double) { return 1.0; }) == 0.0);
  }
  SUBCASE("ages are n times elapsed time") {
    Population pop(1, SimScale(1000));
    pop.add(Trait{0.0}, -0.001);
    pop.add(Trait{0.0}, 0.0);
    CHECK(pop.age(0) == doctest::Approx(1.0));
    CHECK(pop.age(1) == 0.0);
    CHECK(pair(pop, [](TraitView, double a) { return a; }) == doctest::Approx(0.001));
  }
  SUBCASE("pairing is linear in f") {
    Population pop(2, SimScale(50));
    RandomStream rng(1);
    for (int k = 0; k < 40; ++k) pop.add(Trait{rng.uniform(), rng.uniform()}, -rng.uniform());
    auto f = [](TraitView x, double a) { return x[0] * a; };
    auto g = [](TraitView x, double a) { return std::cos(x[1]) + a * a; };
    const double lhs = pair(pop, [&](TraitView x, double a) { return 2.0 * f(x, a) - 3.0 * g(x, a); });
    CHECK(lhs == doctest::Approx(2.0 * pair(pop, f) - 3.0 * pair(pop, g)).epsilon(1e-12));
  }
}

TEST_CASE("population bookkeeping") {
  Population pop(1, SimScale(10), 1.0);
  pop.add_with_age(Trait{1.0}, 2.0);
  pop.add(Trait{2.0}, 0.5);
  pop.add(Trait{3.0}, 0.9);
  CHECK(pop.age(0) == doctest::Approx(2.0));
  CHECK(pop.age_at(1, 2.0) == doctest::Approx(15.0));
  pop.remove(0);
  REQUIRE(pop.size() == 2);
  // swap-with-last: the former last individual now sits at index 0
  CHECK(pop.trait(0)[0] == 3.0);
  CHECK(pop.trait(1)[0] == 2.0);
  const MeasureSample s = pop.sample_at(1.5);
  CHECK(s.size() == 2);
  CHECK(s.weight == doctest::Approx(0.1));
  CHECK(s.ages[0] == doctest::Approx(6.0));
  CHECK(s.total_mass() == doctest::Approx(pop.mass()));
}

TEST_CASE("interaction totals") {
  SUBCASE("example 1 focal-only kernel") {
    const ModelSpec spec = build_example1();
    Population pop(1, SimScale(1000));
    for (double y : {0.5, 2.0, 3.9}) pop.add(Trait{y}, -0.001 * y);
    const double expected = 1.7 * (4.0 - 1.0) * 0.003;
    CHECK(expected == doctest::Approx(0.0153));
    CHECK(interaction_total(pop, spec, Trait{1.0}, 0.3) == doctest::Approx(expected));
    CHECK(interaction_total_naive(pop, spec, Trait{1.0}, 0.3) == doctest::Approx(expected));
  }
  SUBCASE("empty population") {
    const ModelSpec spec = build_example1();
    Population pop(1, SimScale(1000));
    CHECK(interaction_total(pop, spec, Trait{1.0}, 0.0) == 0.0);
    CHECK(interaction_total_naive(pop, spec, Trait{1.0}, 0.0) == 0.0);
  }
  SUBCASE("constant kernel gives U N / n") {
    const ModelSpec spec = testing::constant_model({{"U", 2.5}});
    Population pop(1, SimScale(100));
    for (int k = 0; k < 37; ++k) pop.add(Trait{0.5}, 0.0);
    CHECK(interaction_total(pop, spec, Trait{0.5}, 0.0) == doctest::Approx(2.5 * 37 / 100.0));
  }
  SUBCASE("shortcut agrees with the naive sum") {
    const ModelSpec spec = build_example2();
    Population pop(1, SimScale(200));
    RandomStream rng(7);
    for (int k = 0; k < 150; ++k) pop.add(Trait{0.05 + 3.9 * rng.uniform()}, -rng.uniform() / 200.0);
    for (double x : {0.1, 1.0, 3.5}) {
      CHECK(interaction_total(pop, spec, Trait{x}, 1.0) ==
            doctest::Approx(interaction_total_naive(pop, spec, Trait{x}, 1.0)).epsilon(1e-12));
    }
  }
}

TEST_CASE("total event rate bound") {
  SUBCASE("empty population") {
    Population pop(1, SimScale(1000));
    CHECK(total_event_rate_bound(pop, build_example1()) == 0.0);
  }
  SUBCASE("example 1, n = 1000, N = 1000") {
    Population pop(1, SimScale(1000));
    for (int k = 0; k < 1000; ++k) pop.add(Trait{1.5}, 0.0);
    // 1000 [(1000 + 4) + (1000 + 0.25 + 6.8 * 1000 / 1000)]
    CHECK(total_event_rate_bound(pop, build_example1()) == doctest::Approx(2011050.0));
  }
  SUBCASE("single individual, all bounds 1, n = 1") {
    const ModelSpec spec = testing::constant_model({{"r", 1.0}, {"b", 1.0}, {"d", 1.0}, {"U", 1.0}});
    Population pop(1, SimScale(1));
    pop.add(Trait{0.5}, 0.0);
    CHECK(total_event_rate_bound(pop, spec) == doctest::Approx(5.0));
  }
}
