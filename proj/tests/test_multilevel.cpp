#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "helpers.hpp"
#include "metaforge/multilevel.hpp"
#include "oracles.hpp"

using namespace metaforge;
using mftest::near;

namespace {

ClusteredDataset make_clustered(const std::vector<double>& y, const std::vector<double>& s,
                                const std::vector<std::string>& ids) {
  std::vector<EffectRecord> recs;
  for (size_t i = 0; i < y.size(); ++i) {
    EffectRecord r;
    r.effect = y[i];
    r.se = s[i];
    r.study_id = ids[i];
    recs.push_back(std::move(r));
  }
  return ClusteredDataset::group_by(MetaDataset::create(std::move(recs), Metric::generic),
                                    "study_id");
}

ClusteredDataset make_clustered_x(const std::vector<double>& y, const std::vector<double>& s,
                                  const std::vector<std::string>& ids,
                                  const std::vector<double>& x) {
  std::vector<EffectRecord> recs;
  for (size_t i = 0; i < y.size(); ++i) {
    EffectRecord r;
    r.effect = y[i];
    r.se = s[i];
    r.study_id = ids[i];
    r.moderators = {x[i]};
    recs.push_back(std::move(r));
  }
  return ClusteredDataset::group_by(
      MetaDataset::create(std::move(recs), Metric::generic, {"x"}), "study_id");
}

// Mixed within/between heterogeneity over six clusters.
ClusteredDataset mixed_fixture() {
  return make_clustered(
      {0.30, 0.45, 0.38, 0.85, 0.92, 0.15, 0.08, 0.22, 0.60, 0.52, 0.95, 1.10, 0.40, 0.33},
      {0.12, 0.15, 0.10, 0.14, 0.18, 0.11, 0.16, 0.12, 0.13, 0.15, 0.20, 0.17, 0.12, 0.14},
      {"a", "a", "a", "b", "b", "c", "c", "c", "d", "d", "e", "e", "f", "f"});
}

}  // namespace

TEST_CASE("identical effects collapse both variance components") {
  const ClusteredDataset d = make_clustered({0.4, 0.4, 0.4, 0.4, 0.4}, {0.1, 0.2, 0.15, 0.3, 0.25},
                                            {"a", "a", "b", "b", "c"});
  for (const FitMethod method : {FitMethod::ml, FitMethod::reml}) {
    const ThreeLevelFit fit = fit_three_level(d, {}, method);
    CHECK(fit.converged);
    CHECK(fit.omega2 <= 1e-10);
    CHECK(fit.tau2 <= 1e-10);
    CHECK(near(fit.beta[0], 0.4, 1e-10));
  }
}

TEST_CASE("singleton clusters collapse to the two-level model") {
  const std::vector<double> y{0.82, 0.12, 0.55, 0.33, 0.61, 0.27,
                              0.95, 0.08, 0.44, 0.70, 0.19, 0.51};
  const std::vector<double> s{0.15, 0.20, 0.10, 0.25, 0.12, 0.30,
                              0.18, 0.22, 0.14, 0.16, 0.28, 0.11};
  const std::vector<std::string> ids{"a", "b", "c", "d", "e", "f",
                                     "g", "h", "i", "j", "k", "l"};
  const ClusteredDataset d = make_clustered(y, s, ids);

  // The profile surface depends only on omega2 + tau2 here, so the two
  // routes must agree pointwise.
  const MetaDataset flat = d.flat();
  for (const double t2 : {0.0, 0.01, 0.05, 0.2}) {
    CHECK(near(three_level_profile(d, {}, FitMethod::reml, 0.0, t2).loglik,
               profile_loglik(flat, {}, t2, VarianceMethod::reml), 1e-10));
    CHECK(near(three_level_profile(d, {}, FitMethod::ml, 0.0, t2).loglik,
               profile_loglik(flat, {}, t2, VarianceMethod::ml), 1e-10));
  }

  const ThreeLevelFit fit = fit_three_level(d, {}, FitMethod::reml);
  const RegressionFit two = fit_mixed(flat, {}, VarianceMethod::reml);
  CHECK(fit.converged);
  CHECK(fit.omega2 <= 1e-6);
  CHECK(near(fit.tau2, two.tau2_res, 1e-4));
  CHECK(near(fit.beta[0], two.beta[0], 1e-6));
}

TEST_CASE("singleton clusters collapse with a moderator too") {
  const std::vector<double> y{0.30, 0.52, 0.41, 0.83, 0.67, 0.95, 0.25, 0.74};
  const std::vector<double> s{0.12, 0.15, 0.10, 0.14, 0.18, 0.20, 0.11, 0.16};
  const std::vector<double> x{0.5, 1.0, 0.8, 2.0, 1.5, 2.4, 0.4, 1.8};
  const ClusteredDataset d =
      make_clustered_x(y, s, {"a", "b", "c", "d", "e", "f", "g", "h"}, x);
  for (const double t2 : {0.0, 0.02, 0.1}) {
    CHECK(near(three_level_profile(d, {"x"}, FitMethod::reml, 0.0, t2).loglik,
               profile_loglik(d.flat(), {"x"}, t2, VarianceMethod::reml), 1e-10));
  }
  const ThreeLevelFit fit = fit_three_level(d, {"x"}, FitMethod::reml);
  const RegressionFit two = fit_mixed(d.flat(), {"x"}, VarianceMethod::reml);
  CHECK(fit.omega2 <= 1e-6);
  CHECK(near(fit.tau2, two.tau2_res, 1e-4));
  CHECK(near(fit.beta[1], two.beta[1], 1e-6));
}

TEST_CASE("profile matches an explicit long-double construction") {
  const std::vector<double> y{0.2, 0.4, 0.9, 0.5, 0.7};
  const std::vector<double> s{0.1, 0.2, 0.3, 0.15, 0.25};
  const std::vector<std::string> ids{"a", "a", "b", "c", "c"};
  const ClusteredDataset d = make_clustered(y, s, ids);
  const double w2 = 0.07, t2 = 0.12;

  // Direct block inverses: 2x2 clusters by the closed-form inverse, the
  // singleton as a scalar; everything accumulated in long double.
  long double xtvx = 0.0L, xtvy = 0.0L, logdet = 0.0L;
  const auto block2 = [&](int i, int j) {
    const long double d1 = (long double)(s[(size_t)i] * s[(size_t)i]) + w2 + t2;
    const long double d2 = (long double)(s[(size_t)j] * s[(size_t)j]) + w2 + t2;
    const long double off = t2;
    const long double det = d1 * d2 - off * off;
    // inverse entries
    const long double i11 = d2 / det, i22 = d1 / det, i12 = -off / det;
    xtvx += i11 + i22 + 2.0L * i12;
    xtvy += (i11 + i12) * y[(size_t)i] + (i22 + i12) * y[(size_t)j];
    logdet += std::log(det);
  };
  block2(0, 1);
  block2(3, 4);
  {
    const long double dd = (long double)(s[2] * s[2]) + w2 + t2;
    xtvx += 1.0L / dd;
    xtvy += y[2] / dd;
    logdet += std::log(dd);
  }
  const long double mu = xtvy / xtvx;

  // Residual quadratic form with the same block inverses.
  long double rss = 0.0L;
  const auto rss2 = [&](int i, int j) {
    const long double d1 = (long double)(s[(size_t)i] * s[(size_t)i]) + w2 + t2;
    const long double d2 = (long double)(s[(size_t)j] * s[(size_t)j]) + w2 + t2;
    const long double det = d1 * d2 - (long double)t2 * t2;
    const long double r1 = y[(size_t)i] - mu, r2 = y[(size_t)j] - mu;
    rss += (d2 * r1 * r1 - 2.0L * t2 * r1 * r2 + d1 * r2 * r2) / det;
  };
  rss2(0, 1);
  rss2(3, 4);
  {
    const long double dd = (long double)(s[2] * s[2]) + w2 + t2;
    const long double r = y[2] - mu;
    rss += r * r / dd;
  }
  const long double ln2pi = 1.837877066409345483560659472811L;
  const long double ml = -0.5L * (5.0L * ln2pi + logdet + rss);
  const long double reml = -0.5L * (4.0L * ln2pi + logdet + std::log(xtvx) + rss);

  const ThreeLevelProfile pml = three_level_profile(d, {}, FitMethod::ml, w2, t2);
  const ThreeLevelProfile prm = three_level_profile(d, {}, FitMethod::reml, w2, t2);
  CHECK(near(pml.beta[0], (double)mu, 1e-12));
  CHECK(near(pml.loglik, (double)ml, 1e-11));
  CHECK(near(prm.loglik, (double)reml, 1e-11));
  CHECK(near(prm.weighted_rss, (double)rss, 1e-11));
  CHECK(near(pml.cov(0, 0), (double)(1.0L / xtvx), 1e-12));

  // Marginal-variance identity: every record's model variance is its own
  // sampling variance plus both heterogeneity components.
  for (size_t i = 0; i < y.size(); ++i) {
    const double marginal = s[i] * s[i] + w2 + t2;
    CHECK(marginal > s[i] * s[i]);  // components enter additively, nothing absorbed
  }
}

TEST_CASE("grid oracle pins the restricted optimum") {
  const ClusteredDataset d = mixed_fixture();
  const ThreeLevelFit fit = fit_three_level(d, {}, FitMethod::reml);
  CHECK(fit.converged);

  const double hi = 2.5 * (fit.omega2 + fit.tau2) + 0.05;
  constexpr int kGrid = 200;
  double best = -1e300, best_w = 0.0, best_t = 0.0;
  for (int i = 0; i < kGrid; ++i) {
    for (int j = 0; j < kGrid; ++j) {
      const double w2 = hi * i / (kGrid - 1);
      const double t2 = hi * j / (kGrid - 1);
      const double ll = three_level_profile(d, {}, FitMethod::reml, w2, t2).loglik;
      if (ll > best) {
        best = ll;
        best_w = w2;
        best_t = t2;
      }
    }
  }
  const double step = hi / (kGrid - 1);
  CHECK(fit.loglik + 1e-9 >= best);
  CHECK(std::fabs(fit.omega2 - best_w) <= step);
  CHECK(std::fabs(fit.tau2 - best_t) <= step);
}

TEST_CASE("cluster order leaves the fit unchanged") {
  const ClusteredDataset d = mixed_fixture();
  // Same records with the cluster blocks reversed.
  const ClusteredDataset r = make_clustered(
      {0.40, 0.33, 0.95, 1.10, 0.60, 0.52, 0.15, 0.08, 0.22, 0.85, 0.92, 0.30, 0.45, 0.38},
      {0.12, 0.14, 0.20, 0.17, 0.13, 0.15, 0.11, 0.16, 0.12, 0.14, 0.18, 0.12, 0.15, 0.10},
      {"f", "f", "e", "e", "d", "d", "c", "c", "c", "b", "b", "a", "a", "a"});
  for (const FitMethod method : {FitMethod::ml, FitMethod::reml}) {
    const ThreeLevelFit f1 = fit_three_level(d, {}, method);
    const ThreeLevelFit f2 = fit_three_level(r, {}, method);
    CHECK(near(f1.beta[0], f2.beta[0], 1e-10));
    CHECK(near(f1.omega2, f2.omega2, 1e-10));
    CHECK(near(f1.tau2, f2.tau2, 1e-10));
    CHECK(near(f1.loglik, f2.loglik, 1e-10));
  }
}

TEST_CASE("ml and reml stay close on a large balanced panel") {
  std::mt19937 gen(20240817u);
  const auto unif = [&] { return (static_cast<double>(gen()) + 0.5) / 4294967296.0; };
  const auto normal = [&] { return mftest::oracle_norm_quantile(unif()); };

  const double tau = std::sqrt(0.1), omega = std::sqrt(0.05);
  std::vector<double> y, s;
  std::vector<std::string> ids;
  for (int j = 0; j < 50; ++j) {
    const double uj = tau * normal();
    for (int i = 0; i < 4; ++i) {
      const double se = 0.1 + 0.2 * unif();
      y.push_back(0.5 + uj + omega * normal() + se * normal());
      s.push_back(se);
      ids.push_back("s" + std::to_string(j));
    }
  }
  const ClusteredDataset d = make_clustered(y, s, ids);
  const ThreeLevelFit ml = fit_three_level(d, {}, FitMethod::ml);
  const ThreeLevelFit reml = fit_three_level(d, {}, FitMethod::reml);
  CHECK(ml.converged);
  CHECK(reml.converged);
  CHECK(reml.tau2 > 0.03);
  CHECK(reml.tau2 < 0.3);
  CHECK(reml.omega2 > 0.005);
  CHECK(reml.omega2 < 0.2);
  CHECK(std::fabs(ml.tau2 - reml.tau2) <= 0.15 * (reml.tau2 + 0.01));
  CHECK(std::fabs(ml.omega2 - reml.omega2) <= 0.15 * (reml.omega2 + 0.01));
  CHECK(std::fabs(ml.beta[0] - reml.beta[0]) < 0.02);
}

TEST_CASE("boundary likelihood ratio test halves the tail") {
  const ClusteredDataset d = mixed_fixture();
  const ThreeLevelFit full = fit_three_level(d, {}, FitMethod::ml);

  VarianceConstraint no_tau;
  no_tau.tau2_zero = true;
  const ThreeLevelFit red_t = fit_three_level(d, {}, FitMethod::ml, no_tau);
  const BoundaryLrTest lt = lr_variance_test(full, red_t, VarianceComponentTag::tau2);
  CHECK(lt.lr >= 0.0);
  CHECK(near(lt.halved_p, 0.5 * chisq_sf(lt.lr, 1.0), 1e-15));
  CHECK(lt.lr > 1.0);  // fixture has strong between-cluster spread

  VarianceConstraint no_omega;
  no_omega.omega2_zero = true;
  const ThreeLevelFit red_w = fit_three_level(d, {}, FitMethod::ml, no_omega);
  const BoundaryLrTest lw = lr_variance_test(full, red_w, VarianceComponentTag::omega2);
  CHECK(lw.lr >= 0.0);
  CHECK(lw.halved_p <= 0.5);

  // Equal likelihoods: statistic zero, tail probability exactly one half.
  ThreeLevelFit a = full, b = red_t;
  b.loglik = a.loglik;
  const BoundaryLrTest eq = lr_variance_test(a, b, VarianceComponentTag::tau2);
  CHECK(eq.lr == 0.0);
  CHECK(eq.halved_p == 0.5);
  CHECK(!eq.clamped);

  // Reduced nominally above full: noise, clamped to zero.
  b.loglik = a.loglik + 1e-9;
  const BoundaryLrTest cl = lr_variance_test(a, b, VarianceComponentTag::tau2);
  CHECK(cl.lr == 0.0);
  CHECK(cl.halved_p == 0.5);
  CHECK(cl.clamped);

  ThreeLevelFit wrong_method = red_t;
  wrong_method.method = FitMethod::reml;
  CHECK_THROWS_AS(lr_variance_test(full, wrong_method, VarianceComponentTag::tau2), Error);
  // Reduced fit that never pinned the component.
  try {
    lr_variance_test(full, full, VarianceComponentTag::tau2);
    FAIL("expected a throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidComparison);
  }
  ThreeLevelFit wrong_mods = red_t;
  wrong_mods.moderators = {"x"};
  CHECK_THROWS_AS(lr_variance_test(full, wrong_mods, VarianceComponentTag::tau2), Error);
}

TEST_CASE("level shares follow the arithmetic") {
  const ClusteredDataset d = mixed_fixture();
  ThreeLevelFit fit = fit_three_level(d, {}, FitMethod::reml);
  fit.omega2 = 1.0;
  fit.tau2 = 3.0;

  // Typical sampling variance by direct accumulation.
  double sw = 0.0, sw2 = 0.0;
  for (Eigen::Index i = 0; i < d.k(); ++i) {
    const double w = 1.0 / (d.flat().ses()[i] * d.flat().ses()[i]);
    sw += w;
    sw2 += w * w;
  }
  const double s2 = (static_cast<double>(d.k()) - 1.0) * sw / (sw * sw - sw2);

  const LevelDecomposition dec = level_decomposition(fit, d);
  CHECK(dec.icc2.has_value());
  CHECK(*dec.icc2 == 0.25);
  CHECK(*dec.icc3 == 0.75);
  CHECK(*dec.icc2 + *dec.icc3 == 1.0);
  CHECK(near(dec.i2_level2, 1.0 / (s2 + 4.0), 1e-12));
  CHECK(near(dec.i2_level3, 3.0 / (s2 + 4.0), 1e-12));
  CHECK(!dec.r2_level2.has_value());

  ThreeLevelFit none = fit;
  none.omega2 = 0.0;
  none.tau2 = 0.0;
  const LevelDecomposition zero = level_decomposition(none, d);
  CHECK(!zero.icc2.has_value());
  CHECK(!zero.icc3.has_value());
  CHECK(zero.i2_level2 == 0.0);
  CHECK(zero.i2_level3 == 0.0);

  // Explained-share fields against a moderator-free reference.
  ThreeLevelFit null_fit = fit;
  null_fit.omega2 = 1.0;
  null_fit.tau2 = 2.0;
  ThreeLevelFit moderated = fit;
  moderated.p = 1;
  moderated.moderators = {"x"};
  moderated.omega2 = 0.5;
  moderated.tau2 = 1.0;
  const LevelDecomposition r2 = level_decomposition(moderated, d, null_fit);
  CHECK(r2.r2_level2.has_value());
  CHECK(*r2.r2_level2 == 0.5);
  CHECK(*r2.r2_level3 == 0.5);
  CHECK(!r2.r2_truncated);

  moderated.tau2 = 3.0;  // "explains" negatively
  const LevelDecomposition tr = level_decomposition(moderated, d, null_fit);
  CHECK(*tr.r2_level3 == 0.0);
  CHECK(tr.r2_truncated);

  ThreeLevelFit bad_ref = null_fit;
  bad_ref.p = 1;
  CHECK_THROWS_AS(level_decomposition(moderated, d, bad_ref), Error);
  ThreeLevelFit stale = fit;
  stale.converged = false;
  try {
    level_decomposition(stale, d);
    FAIL("expected a throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonConvergence);
  }
}

TEST_CASE("total heterogeneity test flattens the hierarchy") {
  const ClusteredDataset d = mixed_fixture();
  const QTest q3 = q_total_three_level(d);
  const QTest q2 = cochran_q(d.flat());
  CHECK(near(q3.q, q2.q, 1e-12));
  CHECK(q3.df == q2.df);
  CHECK(q3.df == 13.0);
  CHECK(near(q3.p_value, q2.p_value, 1e-12));

  const ClusteredDataset flat = make_clustered({0.4, 0.4, 0.4}, {0.1, 0.2, 0.3}, {"a", "a", "b"});
  CHECK(q_total_three_level(flat).q <= 1e-20);
}

TEST_CASE("moderated fits recover a planted slope") {
  // y = 0.2 + 0.8 x with cluster bumps and frozen measurement noise.
  const std::vector<double> x{0.4, 1.2, 0.8, 2.0, 1.5, 0.6, 2.4, 1.0,
                              0.5, 1.8, 2.2, 0.9, 1.4, 2.6, 0.7, 1.6};
  const std::vector<double> bump{0.10,  0.10,  -0.15, -0.15, 0.05,  0.05,  -0.02, -0.02,
                                 0.12,  0.12,  -0.08, -0.08, 0.03,  0.03,  -0.10, -0.10};
  const std::vector<double> noise{0.02,  -0.03, 0.01,  0.04,  -0.02, 0.03,  -0.04, 0.01,
                                  -0.01, 0.02,  0.03,  -0.02, 0.01,  -0.03, 0.02,  0.04};
  std::vector<double> y;
  std::vector<double> s(16, 0.12);
  std::vector<std::string> ids;
  for (size_t i = 0; i < x.size(); ++i) {
    y.push_back(0.2 + 0.8 * x[i] + bump[i] + noise[i]);
    ids.push_back("s" + std::to_string(i / 2));
  }
  const ClusteredDataset d = make_clustered_x(y, s, ids, x);

  const ThreeLevelFit fit = fit_three_level(d, {"x"}, FitMethod::reml);
  const ThreeLevelFit null_fit = fit_three_level(d, {}, FitMethod::reml);
  CHECK(fit.converged);
  CHECK(fit.p == 1);
  CHECK(std::fabs(fit.beta[1] - 0.8) < 0.1);

  const LevelDecomposition dec = level_decomposition(fit, d, null_fit);
  CHECK(dec.r2_level2.has_value());
  CHECK(*dec.r2_level2 >= 0.0);
  CHECK(*dec.r2_level2 <= 1.0);
  CHECK(*dec.r2_level3 >= 0.0);
  CHECK(*dec.r2_level3 <= 1.0);

  const KhCoefTest t = three_level_coef_test_kh(fit, d, 1);
  CHECK(t.df == 7.0);  // eight clusters
  CHECK(t.q_scale >= 1.0);
  CHECK(t.interval.lo < t.estimate);
  CHECK(t.estimate < t.interval.hi);
  CHECK(t.p_value < 0.01);  // strong planted slope
}

TEST_CASE("mu test scales like the two-level construction") {
  const std::vector<double> y{0.82, 0.12, 0.55, 0.33, 0.61, 0.27};
  const std::vector<double> s{0.15, 0.20, 0.10, 0.25, 0.12, 0.30};
  const ClusteredDataset d = make_clustered(y, s, {"a", "b", "c", "d", "e", "f"});
  const ThreeLevelFit fit = fit_three_level(d, {}, FitMethod::reml);
  const KhCoefTest t = three_level_coef_test_kh(fit, d, 0);

  // Hand route: diagonal covariance because every cluster is a singleton.
  double sw = 0.0, swy = 0.0;
  std::vector<double> w;
  for (size_t i = 0; i < y.size(); ++i) {
    w.push_back(1.0 / (s[i] * s[i] + fit.omega2 + fit.tau2));
    sw += w[i];
    swy += w[i] * y[i];
  }
  const double mu = swy / sw;
  double rss = 0.0;
  for (size_t i = 0; i < y.size(); ++i) rss += w[i] * (y[i] - mu) * (y[i] - mu);
  const double q = std::max(1.0, rss / 5.0);
  const double se = std::sqrt(q / sw);

  CHECK(t.df == 5.0);
  CHECK(near(t.estimate, mu, 1e-10));
  CHECK(near(t.se, se, 1e-10));
  CHECK(near(t.p_value, t_two_sided_p(mu / se, 5.0), 1e-12));

  // Same construction as the two-level scaled test on the flattened data.
  const RegressionFit two = fit_mixed(d.flat(), {}, VarianceMethod::reml);
  const KhCoefTest kt = coef_test_kh(two, d.flat(), {}, 0);
  CHECK(kt.df == 5.0);
  CHECK(near(t.estimate, kt.estimate, 1e-5));
  CHECK(near(t.se, kt.se, 1e-5));
}

TEST_CASE("degenerate and invalid hierarchical inputs are rejected") {
  try {
    fit_three_level(make_clustered({0.1, 0.2}, {0.1, 0.1}, {"a", "a"}), {}, FitMethod::reml);
    FAIL("expected a throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TooFewClusters);
  }

  try {
    fit_three_level(make_clustered_x({0.1, 0.2}, {0.1, 0.1}, {"a", "b"}, {1.0, 2.0}), {"x"},
                    FitMethod::reml);
    FAIL("expected a throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TooFewStudies);
  }

  // Collinear design: moderator constant at one duplicates the intercept.
  try {
    fit_three_level(make_clustered_x({0.1, 0.2, 0.3, 0.4}, {0.1, 0.1, 0.1, 0.1},
                                     {"a", "b", "c", "d"}, {1.0, 1.0, 1.0, 1.0}),
                    {"x"}, FitMethod::reml);
    FAIL("expected a throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::RankDeficient);
  }

  const ClusteredDataset d = mixed_fixture();
  CHECK_THROWS_AS(three_level_profile(d, {}, FitMethod::reml, -0.1, 0.0), Error);
  CHECK_THROWS_AS(three_level_profile(d, {}, FitMethod::reml, 0.0, -0.1), Error);

  const ThreeLevelFit fit = fit_three_level(d, {}, FitMethod::reml);
  CHECK_THROWS_AS(three_level_coef_test_kh(fit, d, 5), Error);
  CHECK_THROWS_AS(three_level_coef_test_kh(fit, d, 0, 1.0), Error);

  CHECK(fit_method_from_name("ml") == FitMethod::ml);
  CHECK(fit_method_from_name("reml") == FitMethod::reml);
  CHECK(fit_method_name(FitMethod::reml) == std::string("reml"));
  CHECK_THROWS_AS(fit_method_from_name("mm"), Error);
}
