#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "metaforge/pooling.hpp"

using namespace metaforge;
using mftest::make_dataset;
using mftest::near;

TEST_CASE("fixed-effect pooling hand values") {
  const MetaDataset d = make_dataset({1.0, 3.0}, {1.0, 0.5});
  const PoolResult r = pool_fixed(d);
  CHECK(near(r.mu, 2.6, 1e-14));
  CHECK(near(r.var, 0.2, 1e-14));
  CHECK(r.model == PoolModel::fixed);
  CHECK(r.tau2 == 0.0);
  CHECK(r.k == 2);
}

TEST_CASE("random-effects pooling hand values") {
  const MetaDataset d = make_dataset({0.0, 2.0}, {1.0, 1.0});
  const PoolResult r = pool_random(d, 1.0);
  CHECK(near(r.mu, 1.0, 1e-14));
  CHECK(near(r.var, 1.0, 1e-14));

  const MetaDataset d2 = make_dataset({0.0, 2.0}, {1.0, 3.0});
  const PoolResult r2 = pool_random(d2, 1.0);
  CHECK(near(r2.mu, 1.0 / 3.0, 1e-14));

  CHECK_THROWS_AS(pool_random(d, -0.1), Error);
}

TEST_CASE("random pooling with tau2 = 0 collapses to fixed") {
  const MetaDataset d = make_dataset({0.3, -0.1, 0.9, 0.2}, {0.2, 0.5, 0.33, 0.41});
  const PoolResult fe = pool_fixed(d);
  const PoolResult re = pool_random(d, 0.0);
  CHECK(near(fe.mu, re.mu, 1e-14));
  CHECK(near(fe.var, re.var, 1e-14));
}

TEST_CASE("an infinitely imprecise study adds nothing") {
  const MetaDataset base = make_dataset({0.3, -0.1, 0.9}, {0.2, 0.5, 0.33});
  const MetaDataset padded = make_dataset({0.3, -0.1, 0.9, 123.0}, {0.2, 0.5, 0.33, 1e8});
  const PoolResult a = pool_fixed(base);
  const PoolResult b = pool_fixed(padded);
  CHECK(near(a.mu, b.mu, 1e-6 * std::abs(a.mu)));
  CHECK(near(a.var, b.var, 1e-6 * a.var));
}

TEST_CASE("standard intervals and df rules") {
  const MetaDataset d = make_dataset({1.0, 1.0}, {std::numbers::sqrt2, std::numbers::sqrt2});
  const PoolResult r = pool_fixed(d);  // mu = 1, var = 1
  REQUIRE(near(r.mu, 1.0, 1e-14));
  REQUIRE(near(r.var, 1.0, 1e-14));

  const Interval z = ci_standard(r, 0.95, CiRule::wald_z);
  CHECK(near(z.lo, -0.959964, 1e-6));
  CHECK(near(z.hi, 2.959964, 1e-6));
  CHECK(z.level == 0.95);

  // k = 2: t with k-1 df works, k-2 and k-4 are out of reach.
  const Interval t1 = ci_standard(r, 0.95, CiRule::t_km1);
  CHECK(near(t1.hi - t1.lo, 2.0 * 12.706204736432095, 1e-6));
  CHECK_THROWS_AS(ci_standard(r, 0.95, CiRule::t_km2), Error);
  CHECK_THROWS_AS(ci_standard(r, 0.95, CiRule::t_km4), Error);

  CHECK_THROWS_AS(ci_standard(r, 0.0, CiRule::wald_z), Error);
  CHECK_THROWS_AS(ci_standard(r, 1.0, CiRule::wald_z), Error);

  // Level ordering: wider level, wider interval.
  const MetaDataset d6 = make_dataset({0.1, 0.4, 0.2, 0.6, -0.2, 0.3},
                                      {0.2, 0.3, 0.25, 0.5, 0.31, 0.27});
  const PoolResult r6 = pool_fixed(d6);
  const Interval i90 = ci_standard(r6, 0.90, CiRule::wald_z);
  const Interval i99 = ci_standard(r6, 0.99, CiRule::wald_z);
  CHECK(i99.hi - i99.lo > i90.hi - i90.lo);
  CHECK(i90.lo <= r6.mu);
  CHECK(r6.mu <= i90.hi);
}

TEST_CASE("weighted-residual rescaled interval") {
  // Two unit-variance studies at 0 and 2, tau2 = 1: q = 1, scaled var = 1,
  // interval 1 +- 12.706.
  const MetaDataset d = make_dataset({0.0, 2.0}, {1.0, 1.0});
  const PoolResult r = pool_random(d, 1.0);
  const HksjInterval h = ci_hksj(d, r, 0.95, false);
  CHECK(near(h.q_scale, 1.0, 1e-14));
  CHECK(near(h.var_scaled, 1.0, 1e-14));
  CHECK(near(h.interval.lo, 1.0 - 12.706204736432095, 1e-8));
  CHECK(near(h.interval.hi, 1.0 + 12.706204736432095, 1e-8));
  CHECK(!h.interval.degenerate);

  // Identical effects collapse the scale; without the floor the interval is
  // degenerate, with it the interval matches the plain t width.
  const MetaDataset same = make_dataset({0.7, 0.7, 0.7}, {0.4, 0.5, 0.6});
  const PoolResult rs = pool_random(same, 0.0);
  const HksjInterval flat = ci_hksj(same, rs, 0.95, false);
  CHECK(flat.interval.degenerate);
  CHECK(near(flat.interval.hi - flat.interval.lo, 0.0, 1e-14));
  const HksjInterval floored = ci_hksj(same, rs, 0.95, true);
  CHECK(!floored.interval.degenerate);
  CHECK(near(floored.q_scale, 1.0, 0.0));

  // The floored variant never undercuts the plain t_{k-1} interval.
  const MetaDataset d8 =
      make_dataset({0.12, 0.8, -0.3, 0.45, 0.22, 0.9, -0.05, 0.51},
                   {0.2, 0.4, 0.33, 0.25, 0.6, 0.45, 0.3, 0.38});
  const PoolResult r8 = pool_random(d8, 0.05);
  const HksjInterval hm = ci_hksj(d8, r8, 0.95, true);
  const Interval plain = ci_standard(r8, 0.95, CiRule::t_km1);
  CHECK(hm.interval.hi - hm.interval.lo >= plain.hi - plain.lo - 1e-14);

  CHECK_THROWS_AS(ci_hksj(d8, pool_fixed(d8), 0.95, false), Error);
}

TEST_CASE("prediction interval") {
  const MetaDataset d = make_dataset({0.1, 0.5, 0.3}, {0.2, 0.2, 0.2});
  const PoolResult r = pool_random(d, 0.04);
  const Interval pi = prediction_interval(r, 0.04, 0.95);
  const double half = t_quantile(0.975, 1.0) * std::sqrt(r.var + 0.04);
  CHECK(near(pi.lo, r.mu - half, 1e-12));
  CHECK(near(pi.hi, r.mu + half, 1e-12));

  // Always at least as wide as the corresponding confidence interval.
  const MetaDataset d10 = make_dataset({0.1, 0.5, 0.3, 0.2, 0.6, -0.1, 0.4, 0.25, 0.05, 0.35},
                                       {0.2, 0.25, 0.2, 0.3, 0.22, 0.28, 0.2, 0.24, 0.26, 0.2});
  const PoolResult r10 = pool_random(d10, 0.02);
  const Interval ci = ci_standard(r10, 0.95, CiRule::t_km2);
  const Interval pi10 = prediction_interval(r10, 0.02, 0.95);
  CHECK(pi10.hi - pi10.lo >= ci.hi - ci.lo - 1e-14);

  const MetaDataset two = make_dataset({0.0, 1.0}, {1.0, 1.0});
  CHECK_THROWS_AS(prediction_interval(pool_random(two, 0.0), 0.0, 0.95), Error);
  CHECK_THROWS_AS(prediction_interval(r, -0.01, 0.95), Error);
}
