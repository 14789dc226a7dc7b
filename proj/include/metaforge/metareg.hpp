#pragma once

#include <optional>
#include <string>
#include <vector>

#include "metaforge/heterogeneity.hpp"
#include "metaforge/pooling.hpp"

namespace metaforge {

enum class RegModel { fixed, mixed };
enum class VarianceMethod { mm, ml, reml };

// Maps the user-facing estimator tag.  "eb" is recognized and rejected
// explicitly; no moment construction for it is implemented here.
VarianceMethod variance_method_from_name(const std::string& name);
const char* variance_method_name(VarianceMethod m);

struct RegressionFit {
  Vector beta;           // intercept first, then one slope per moderator
  Matrix cov;            // (X' W X)^{-1} at the weights actually used
  RegModel model = RegModel::fixed;
  std::optional<VarianceMethod> variance_method;  // engaged on mixed fits
  double tau2_res = 0.0;
  double q_res = 0.0;    // fixed-weight residual heterogeneity statistic
  double df_res = 0.0;   // k - p - 1
  double p_res = 1.0;
  double i2_res = 0.0;   // max{0, (q_res - df_res)/q_res}
  std::optional<double> loglik;  // populated for ml/reml
  std::vector<std::string> moderators;
  Eigen::Index k = 0;
  Eigen::Index p = 0;    // slope count
};

// Fixed-effects meta-regression: weights 1/S_i^2.  k = p+1 fits exactly with
// zero residual degrees of freedom.
RegressionFit fit_fixed(const MetaDataset& data, const std::vector<std::string>& mods);

// Moment estimate of residual between-study variance:
// max{0, (Q_res - (k-p-1)) / tr(M)} with M = W - WX(X'WX)^{-1}X'W.
double tau2_res_mm(const MetaDataset& data, const std::vector<std::string>& mods);

// Mixed-effects meta-regression: weights 1/(S_i^2 + tau2_res) with tau2_res
// from the moment estimator (mm) or from maximizing the (restricted) Gaussian
// likelihood of N(X beta, diag(S_i^2) + tau2 I) (ml, reml).
RegressionFit fit_mixed(const MetaDataset& data, const std::vector<std::string>& mods,
                        VarianceMethod method);

// Residual heterogeneity test: Q_res on fixed weights vs chi squared k-p-1.
QTest q_res_test(const MetaDataset& data, const std::vector<std::string>& mods);

// Proportion of between-study variance explained by the moderators, truncated
// to [0,1]; zero by convention when the total is zero.
double pseudo_r2(double tau2_total, double tau2_res);

struct WaldTest {
  double q = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};

// Joint chi-squared test that every slope is zero.
WaldTest omnibus_test(const RegressionFit& fit);

struct LrTest {
  double lr = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};

// Likelihood-ratio test between nested fits; the caller asserts nesting and
// passes the fixed-part parameter difference as df.  Under REML, fits with
// different fixed parts are not comparable, so df > 0 is rejected.
LrTest lr_test(double full_loglik, double reduced_loglik, int df, VarianceMethod estimation);

struct KhCoefTest {
  double estimate = 0.0;
  double se = 0.0;        // after scaling
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;
  double q_scale = 1.0;   // max{1, Q_res*/(k-p-1)}
  Interval interval;
};

// Scaled-variance coefficient test: the residual dispersion under the mixed
// weights, floored at one, rescales the Wald variance; reference t_{k-p-1}.
KhCoefTest coef_test_kh(const RegressionFit& fit, const MetaDataset& data,
                        const std::vector<std::string>& mods, Eigen::Index coef_index,
                        double level = 0.95);

// Profile (restricted) log-likelihood of the two-level model at a given tau2,
// exposed so oracle tests can scan it directly.
double profile_loglik(const MetaDataset& data, const std::vector<std::string>& mods, double tau2,
                      VarianceMethod method);

}  // namespace metaforge
