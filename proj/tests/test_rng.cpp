#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mnar/rng.hpp"

using mnar::CounterRng;
using mnar::inverse_normal_cdf;
using mnar::normal_cdf;

TEST_CASE("inverse normal cdf hits reference quantiles") {
  // Reference values computed with scipy.stats.norm.ppf.
  CHECK(inverse_normal_cdf(0.975) == Catch::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(inverse_normal_cdf(0.995) == Catch::Approx(2.5758293035489004).epsilon(1e-12));
  CHECK(inverse_normal_cdf(0.95) == Catch::Approx(1.6448536269514722).epsilon(1e-12));
  CHECK(inverse_normal_cdf(0.5) == Catch::Approx(0.0).margin(1e-15));
  CHECK(inverse_normal_cdf(1.0 - 0.025 / 252.0) ==
        Catch::Approx(3.7210289374042733).epsilon(1e-12));
  CHECK(inverse_normal_cdf(1e-8) == Catch::Approx(-5.612001244174789).epsilon(1e-9));
}

TEST_CASE("inverse normal cdf inverts the cdf over a wide grid") {
  for (int i = 1; i < 2000; ++i) {
    const double p = i / 2000.0;
    CHECK(std::abs(normal_cdf(inverse_normal_cdf(p)) - p) < 1e-12);
  }
  // Tails down to the accuracy the inference module relies on.
  for (double p : {1e-8, 1e-6, 1e-4, 1.0 - 1e-4, 1.0 - 1e-6, 1.0 - 1e-8}) {
    CHECK(std::abs(normal_cdf(inverse_normal_cdf(p)) - p) < 1e-9 * std::max(p, 1.0 - p));
  }
  CHECK_THROWS_AS(inverse_normal_cdf(0.0), mnar::input_error);
  CHECK_THROWS_AS(inverse_normal_cdf(1.0), mnar::input_error);
}

TEST_CASE("counter rng is deterministic and substreams are independent of order") {
  CounterRng a(42, 7), b(42, 7);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  // Consuming stream 3 must not change what stream 4 produces.
  CounterRng s4_fresh = CounterRng::substream(9, 4);
  CounterRng s3 = CounterRng::substream(9, 3);
  for (int i = 0; i < 57; ++i) s3.next_u64();
  CounterRng s4_after = CounterRng::substream(9, 4);
  for (int i = 0; i < 20; ++i) CHECK(s4_fresh.next_u64() == s4_after.next_u64());

  // Different seeds and streams decorrelate.
  CHECK(CounterRng(1, 0).next_u64() != CounterRng(2, 0).next_u64());
  CHECK(CounterRng(1, 0).next_u64() != CounterRng(1, 1).next_u64());
}

TEST_CASE("uniforms stay strictly inside (0,1) and pass basic moment checks") {
  CounterRng rng(12345);
  const int n = 200000;
  double sum = 0, sum2 = 0, lo = 1, hi = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.next_uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    sum2 += u * u;
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean - 0.5) < 0.005);          // se ~ 0.00065
  CHECK(std::abs(var - 1.0 / 12.0) < 0.002);    // se ~ 0.0002
  CHECK(lo < 0.001);
  CHECK(hi > 0.999);
}

TEST_CASE("normal variates match the first two moments and tail mass") {
  CounterRng rng(2024, 1);
  const int n = 200000;
  double sum = 0, sum2 = 0;
  int beyond2 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.next_normal();
    sum += z;
    sum2 += z * z;
    if (std::abs(z) > 2.0) ++beyond2;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
  // P(|Z| > 2) = 0.04550.
  CHECK(std::abs(beyond2 / static_cast<double>(n) - 0.0455) < 0.004);
}
