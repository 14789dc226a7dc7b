#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "metaforge/heterogeneity.hpp"
#include "metaforge/pooling.hpp"

using namespace metaforge;
using mftest::make_dataset;
using mftest::near;

TEST_CASE("Q hand value") {
  // y = (1,3), se = (1,0.5): mu_F = 2.6, Q = 2.56 + 0.64 = 3.2.
  const MetaDataset d = make_dataset({1.0, 3.0}, {1.0, 0.5});
  const QTest q = cochran_q(d);
  CHECK(near(q.q, 3.2, 1e-12));
  CHECK(q.df == 1.0);
  CHECK(near(q.p_value, chisq_sf(3.2, 1.0), 1e-15));

  const MetaDataset one = make_dataset({1.0}, {1.0});
  CHECK_THROWS_AS(cochran_q(one), Error);
}

TEST_CASE("moment estimate of tau2") {
  // y = (0,2), unit ses: Q = 2, denominator 2 - 2/2 = 1, tau2 = 1.
  const MetaDataset d = make_dataset({0.0, 2.0}, {1.0, 1.0});
  CHECK(near(tau2_dl(d), 1.0, 1e-14));

  // Homogeneous data truncates at zero.
  const MetaDataset flat = make_dataset({0.5, 0.5, 0.5}, {0.3, 0.4, 0.5});
  CHECK(tau2_dl(flat) == 0.0);
}

TEST_CASE("full heterogeneity panel") {
  const MetaDataset d = make_dataset({0.0, 2.0}, {1.0, 1.0});
  const HeterogeneityReport h = heterogeneity_report(d);
  CHECK(near(h.q, 2.0, 1e-14));
  CHECK(near(h.tau2, 1.0, 1e-14));
  CHECK(near(h.i2, 0.5, 1e-12));
  CHECK(std::string(h.impact_label) == "moderate");
  CHECK(near(h.h, std::numbers::sqrt2, 1e-12));
  // R: sqrt(sum 1/S^2 / sum 1/(S^2+tau2)) = sqrt(2 / 1) here.
  CHECK(near(h.r_ratio, std::numbers::sqrt2, 1e-12));
  CHECK(h.h >= 1.0);

  // Homogeneous data: tau2 = 0, i2 = 0, h < 1, r = 1.
  const MetaDataset flat = make_dataset({0.5, 0.5, 0.5}, {0.3, 0.4, 0.5});
  const HeterogeneityReport hf = heterogeneity_report(flat);
  CHECK(hf.tau2 == 0.0);
  CHECK(hf.i2 == 0.0);
  CHECK(near(hf.r_ratio, 1.0, 1e-14));
  CHECK(std::string(hf.impact_label) == "low");
}

TEST_CASE("impact label band edges go to the higher band") {
  CHECK(std::string(i2_impact_label(0.10)) == "low");
  CHECK(std::string(i2_impact_label(0.25)) == "moderate");
  CHECK(std::string(i2_impact_label(0.50)) == "moderate");
  CHECK(std::string(i2_impact_label(0.75)) == "high");
  CHECK(std::string(i2_impact_label(0.97)) == "high");
}

TEST_CASE("scale invariance of the panel") {
  // Rescaling every effect and se by c leaves Q, I2, H invariant and scales
  // tau2 by c^2.
  const std::vector<double> y{0.2, 0.9, -0.4, 0.55, 0.3};
  const std::vector<double> s{0.15, 0.4, 0.3, 0.2, 0.36};
  const MetaDataset base = make_dataset(y, s);
  for (double c : {0.1, 3.7}) {
    std::vector<double> yc, sc;
    for (size_t i = 0; i < y.size(); ++i) {
      yc.push_back(c * y[i]);
      sc.push_back(c * s[i]);
    }
    const MetaDataset scaled = make_dataset(yc, sc);
    const HeterogeneityReport a = heterogeneity_report(base);
    const HeterogeneityReport b = heterogeneity_report(scaled);
    CHECK(near(a.q, b.q, 1e-9 * (1.0 + a.q)));
    CHECK(near(a.i2, b.i2, 1e-10));
    CHECK(near(a.h, b.h, 1e-10));
    CHECK(near(b.tau2, c * c * a.tau2, 1e-9 * (1.0 + c * c * a.tau2)));
  }
}

TEST_CASE("typical within variance of equal-variance studies is that variance") {
  const MetaDataset d = make_dataset({0.1, 0.5, 0.9}, {0.3, 0.3, 0.3});
  CHECK(near(s2_typical(d), 0.09, 1e-14));
}
