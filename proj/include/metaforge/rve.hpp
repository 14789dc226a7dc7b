#pragma once

#include <string>
#include <vector>

#include "metaforge/heterogeneity.hpp"
#include "metaforge/pooling.hpp"

namespace metaforge {

// ============================================================================
// Working models
// ============================================================================
// The robust covariance below is valid for any weights; the working model
// only chooses approximately efficient ones.  Correlated effects treat every
// pair within a cluster as sharing one correlation rho and one sampling
// variance; hierarchical effects add a within-cluster heterogeneity
// component on top of per-record sampling variances.

enum class WorkingModelKind { correlated_effects, hierarchical_effects };

const char* working_model_name(WorkingModelKind kind);
WorkingModelKind working_model_from_name(const std::string& name);

struct WorkingModel {
  WorkingModelKind kind = WorkingModelKind::correlated_effects;
  double rho = 0.8;     // pair correlation read of the correlated model; the
                        // weights do not depend on it (see working_ce)
  double tau2 = 0.0;    // between-cluster variance
  double omega2 = 0.0;  // within-cluster variance (hierarchical only)
};

// Correlated-effects model with the between-cluster component estimated by
// the canonical moment estimator applied to the precision-weighted cluster
// means.  rho is validated and recorded but does not enter the component:
// collapsing to cluster means sidesteps the pairwise correlation entirely,
// which the robust covariance tolerates by construction.
WorkingModel working_ce(const ClusteredDataset& data, double rho = 0.8);

// Hierarchical-effects model with caller-supplied components (typically a
// three-level likelihood fit).
WorkingModel working_he(double omega2, double tau2);

// Between-cluster variance used by working_ce, exposed for inspection.
double ce_tau2(const ClusteredDataset& data, double rho = 0.8);

// True when some cluster mixes sampling variances differing by more than a
// factor of two; the correlated-effects weights average them, so the shared
// per-cluster weight is a strained reading of such data.
bool ce_variance_spread(const ClusteredDataset& data);

// Flat per-record diagonal weights implied by a working model:
// correlated effects share 1/(k_j (mean S^2 + tau2)) across cluster j,
// hierarchical effects give 1/(S_ij^2 + omega2 + tau2) per record.
Vector rve_weights(const ClusteredDataset& data, const WorkingModel& wm);

// Convenience forms of the two weighting schemes.
Vector rve_weights_ce(const ClusteredDataset& data, double rho = 0.8);
Vector rve_weights_he(const ClusteredDataset& data, double omega2, double tau2);

// ============================================================================
// Robust fit
// ============================================================================

struct RveFit {
  Vector beta;        // intercept first, then one slope per moderator
  Matrix robust_cov;  // cluster-sandwich covariance of beta
  Vector weights;     // flat per-record weights actually used
  WorkingModel working;
  double df = 0.0;    // m - p - 1
  bool adjusted = false;  // small-sample residual inflation applied
  // Correlated-effects weights averaged within-cluster variances spanning
  // more than a factor of two.
  bool variance_warning = false;
  Eigen::Index m = 0;
  Eigen::Index k = 0;
  Eigen::Index p = 0;  // slope count
  std::vector<std::string> moderators;
};

// Weighted least squares over the flat records with the covariance rebuilt
// from within-cluster residual cross-products.  With small_sample, residuals
// are inflated by sqrt(m/(m-p-1)) before entering the cross-products; the
// reference df stays m-p-1.  Requires m > p+1 so that inference is defined.
RveFit rve_fit(const ClusteredDataset& data, const std::vector<std::string>& mods,
               const WorkingModel& wm, bool small_sample = false);

struct RveCoefTest {
  double estimate = 0.0;
  double se = 0.0;
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;
  Interval interval;
};

// t test of one coefficient against the cluster-count degrees of freedom.
RveCoefTest rve_coef_test(const RveFit& fit, Eigen::Index coef_index, double level = 0.95);

struct RhoSensitivityRow {
  double rho = 0.0;
  double tau2 = 0.0;
  Vector beta;
  Vector se;  // sqrt of the robust diagonal
};

// One correlated-effects fit per grid value, in grid order.
std::vector<RhoSensitivityRow> rho_sensitivity(const ClusteredDataset& data,
                                               const std::vector<std::string>& mods,
                                               const std::vector<double>& rho_grid,
                                               bool small_sample = false);

// Exact covariance of the weighted estimator when the per-cluster covariance
// blocks are known, for validating the robust form on synthetic data.
Matrix rve_model_cov(const ClusteredDataset& data, const std::vector<std::string>& mods,
                     const Vector& weights, const std::vector<Matrix>& sigma);

}  // namespace metaforge
