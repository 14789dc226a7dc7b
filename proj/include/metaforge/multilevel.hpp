#pragma once

#include <optional>
#include <string>
#include <vector>

#include "metaforge/dataset.hpp"
#include "metaforge/heterogeneity.hpp"
#include "metaforge/metareg.hpp"

namespace metaforge {

// Estimation principle for the hierarchical model.
enum class FitMethod { ml, reml };

const char* fit_method_name(FitMethod m);
FitMethod fit_method_from_name(const std::string& name);

// Components an estimation run pins at zero (for nested comparisons).
struct VarianceConstraint {
  bool omega2_zero = false;
  bool tau2_zero = false;
};

// Hierarchical random-effects fit: effects nest in clusters, and every record
// carries marginal variance S_ij^2 + omega2 + tau2.  Per-cluster covariance is
// diag(S_ij^2) + omega2 I + tau2 J.
struct ThreeLevelFit {
  Vector beta;           // intercept first, then one slope per moderator
  double omega2 = 0.0;   // within-cluster heterogeneity
  double tau2 = 0.0;     // between-cluster heterogeneity
  Matrix cov;            // (X' V^-1 X)^-1 at the optimum
  double loglik = 0.0;
  FitMethod method = FitMethod::reml;
  bool converged = false;
  VarianceConstraint constraint;
  Eigen::Index m = 0;    // clusters
  Eigen::Index k = 0;    // effects
  Eigen::Index p = 0;    // slope count
  std::vector<std::string> moderators;
};

// Generalized-least-squares profile of the model at fixed variance
// components, exposed so verification can scan the surface directly.
struct ThreeLevelProfile {
  double loglik = 0.0;
  Vector beta;
  Matrix cov;            // (X' V^-1 X)^-1
  double weighted_rss = 0.0;  // residual quadratic form r' V^-1 r
};

ThreeLevelProfile three_level_profile(const ClusteredDataset& data,
                                      const std::vector<std::string>& mods, FitMethod method,
                                      double omega2, double tau2);

// Joint (restricted) maximum likelihood over the nonnegative orthant, with
// the coefficient vector profiled out analytically at each candidate point.
ThreeLevelFit fit_three_level(const ClusteredDataset& data, const std::vector<std::string>& mods,
                              FitMethod method, VarianceConstraint constraint = {});

enum class VarianceComponentTag { omega2, tau2 };

// Likelihood-ratio test of one variance component against zero.  The null
// value sits on the boundary of the parameter space, so the chi-squared tail
// is halved; negative statistics from optimizer noise clamp to zero.
struct BoundaryLrTest {
  double lr = 0.0;
  double halved_p = 0.5;
  bool clamped = false;
};

BoundaryLrTest lr_variance_test(const ThreeLevelFit& full, const ThreeLevelFit& reduced,
                                VarianceComponentTag component);

// Share accounting across the two heterogeneity levels.  The i2 fields put
// each component over sampling variance plus total heterogeneity; the ICCs
// split the heterogeneity alone and are absent when there is none.  R^2
// fields compare a moderated fit against a moderator-free reference.
struct LevelDecomposition {
  double i2_level2 = 0.0;
  double i2_level3 = 0.0;
  std::optional<double> icc2;
  std::optional<double> icc3;
  std::optional<double> r2_level2;
  std::optional<double> r2_level3;
  bool r2_truncated = false;  // a residual component exceeded its total
};

LevelDecomposition level_decomposition(const ThreeLevelFit& fit, const ClusteredDataset& data,
                                       const std::optional<ThreeLevelFit>& null_fit = std::nullopt);

// Homogeneity of all k effects, ignoring the grouping entirely.
QTest q_total_three_level(const ClusteredDataset& data);

// Scaled-variance coefficient test mirroring the two-level construction: the
// residual dispersion r'V^-1 r/(m-1), floored at one, rescales the model
// variance; reference t_{m-1}.
KhCoefTest three_level_coef_test_kh(const ThreeLevelFit& fit, const ClusteredDataset& data,
                                    Eigen::Index coef_index, double level = 0.95);

}  // namespace metaforge
