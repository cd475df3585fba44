#include "doctest.h"

#include <cmath>

#include "pmia/rng.hpp"
#include "pmia/vec.hpp"

using namespace pmia;

namespace {

// Quadrature oracle for the standard normal CDF: Phi(z) = 1/2 + integral of
// the density over [0, z], by composite Simpson on a fine grid. Independent of
// the erfc route used by the implementation.
double phi_oracle(double z) {
  const int steps = 20000;
  const double h = z / steps;
  auto density = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); };
  double acc = density(0.0) + density(z);
  for (int i = 1; i < steps; ++i) acc += (i % 2 ? 4.0 : 2.0) * density(i * h);
  return 0.5 + acc * h / 3.0;
}

}  // namespace

TEST_CASE("cosine similarity on the worked examples") {
  CHECK(cosine_similarity({1, 0}, {1, 0}) == doctest::Approx(1.0));
  CHECK(cosine_similarity({1, 0}, {0, 1}) == doctest::Approx(0.0));
  // dot = 8, norms = 3 * 3
  CHECK(cosine_similarity({1, 2, 2}, {2, 1, 2}) == doctest::Approx(8.0 / 9.0).epsilon(1e-12));
  CHECK(cosine_distance({1, 0}, {0, 1}) == doctest::Approx(1.0));
}

TEST_CASE("cosine similarity rejects degenerate input and names the argument") {
  CHECK_THROWS_WITH_AS(cosine_similarity({0, 0}, {1, 0}),
                       "cosine_similarity: first argument has zero norm", std::domain_error);
  CHECK_THROWS_WITH_AS(cosine_similarity({1, 0}, {0, 0}),
                       "cosine_similarity: second argument has zero norm", std::domain_error);
}

TEST_CASE("cosine similarity is symmetric and scale invariant") {
  Rng rng(7);
  for (int it = 0; it < 50; ++it) {
    Vec a(6), b(6);
    for (auto& x : a) x = rng.normal();
    for (auto& x : b) x = rng.normal();
    const double lambda = std::exp(rng.uniform(-3, 3));
    const double mu = std::exp(rng.uniform(-3, 3));
    const double k = cosine_similarity(a, b);
    CHECK(cosine_similarity(b, a) == doctest::Approx(k).epsilon(1e-12));
    CHECK(cosine_similarity(scaled(a, lambda), scaled(b, mu)) ==
          doctest::Approx(k).epsilon(1e-12));
    CHECK(k >= -1.0 - 1e-12);
    CHECK(k <= 1.0 + 1e-12);
  }
}

TEST_CASE("orthogonal_component examples") {
  const Vec r1 = orthogonal_component({1, 1}, {1, 0});
  CHECK(r1[0] == doctest::Approx(0.0));
  CHECK(r1[1] == doctest::Approx(1.0));

  CHECK_THROWS_AS(orthogonal_component({3, 0}, {1, 0}), degenerate_direction_error);

  const Vec r2 = orthogonal_component({2, 1, 0}, {0, 0, 1});
  CHECK(r2[0] == doctest::Approx(2.0));
  CHECK(r2[1] == doctest::Approx(1.0));
  CHECK(r2[2] == doctest::Approx(0.0));

  CHECK_THROWS_AS(orthogonal_component({1, 1}, {2, 0}), std::invalid_argument);
}

TEST_CASE("orthogonal_component output is orthogonal to the axis") {
  Rng rng(11);
  for (int it = 0; it < 100; ++it) {
    Vec r(8), q(8);
    for (auto& x : r) x = rng.normal();
    for (auto& x : q) x = rng.normal();
    const Vec q_hat = normalized(q);
    const Vec o = orthogonal_component(r, q_hat);
    CHECK(std::abs(dot(o, q_hat)) <= 1e-9 * norm(o));
    CHECK(std::abs(dot(normalized(o), q_hat)) <= 1e-9);
  }
}

TEST_CASE("standard normal cdf values") {
  CHECK(std_normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std_normal_cdf(1.959964) == doctest::Approx(phi_oracle(1.959964)).epsilon(1e-9));
  CHECK(std::abs(std_normal_cdf(1.959964) - 0.975) < 1e-6);
  CHECK(std::abs(std_normal_cdf(-2.0) - phi_oracle(-2.0)) < 1e-9);
  CHECK(std::abs(std_normal_cdf(-2.0) - 0.022750) < 1e-6);
}

TEST_CASE("standard normal cdf is monotone with exact reflection") {
  double prev = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double z = -8.0 + 16.0 * i / 9999.0;
    const double p = std_normal_cdf(z);
    CHECK(p >= prev);
    CHECK(std::abs(p + std_normal_cdf(-z) - 1.0) <= 1e-12);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    prev = p;
  }
}
