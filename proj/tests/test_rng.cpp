#include "doctest.h"

#include <cmath>
#include <set>

#include "pmia/rng.hpp"

using namespace pmia;

TEST_CASE("same seed gives identical streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("split streams are stable and disjoint from the parent") {
  Rng parent(9);
  Rng c1 = parent.split(0);
  Rng c2 = parent.split(1);
  CHECK(c1.next_u64() != c2.next_u64());
  // Splitting is independent of how far the parent has advanced.
  Rng parent2(9);
  parent2.next_u64();
  Rng c1_again = parent2.split(0);
  Rng c1_ref = Rng(9).split(0);
  CHECK(c1_again.next_u64() == c1_ref.next_u64());
}

TEST_CASE("uniform01 stays in range with a sane mean") {
  Rng rng(3);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = rng.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
  }
  CHECK(sum / 20000 == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("normal has roughly standard moments") {
  Rng rng(5);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(sum / n == doctest::Approx(0.0).epsilon(0.02));
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(sq / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("below covers the range") {
  Rng rng(8);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto v = rng.below(7);
    CHECK(v < 7);
    seen.insert(v);
  }
  CHECK(seen.size() == 7);
}
