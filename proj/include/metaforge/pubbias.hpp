#pragma once

#include <optional>
#include <string>
#include <vector>

#include "metaforge/metareg.hpp"
#include "metaforge/uwls.hpp"

namespace metaforge {

// ============================================================================
// Plot data
// ============================================================================

// Vertical-axis flavour of the funnel scatter.
enum class FunnelAxis { se, variance, precision, inv_variance };

FunnelAxis funnel_axis_from_name(const std::string& name);
const char* funnel_axis_name(FunnelAxis a);

// One two-sided significance boundary: effect = +-z * se, sampled on the
// observed se range so the region between the curves is non-significance.
struct ContourBand {
  double level = 0.0;  // two-sided significance level in (0,1)
  double z = 0.0;      // normal critical value for that level
  std::vector<double> se;
  std::vector<double> lower;  // -z * se
  std::vector<double> upper;  // +z * se
};

struct FunnelPoint {
  double effect = 0.0;
  double axis_value = 0.0;
};

struct FunnelData {
  FunnelAxis axis = FunnelAxis::se;
  std::vector<FunnelPoint> points;  // input order
  double reference_line = 0.0;      // fixed-effect pooled mean
  std::vector<ContourBand> bands;   // empty unless contours were requested
};

// Scatter of effects against the chosen scale axis.  Passing contour_levels
// (engaged optional) requests significance bands; an empty list selects the
// milestone levels 0.10 / 0.05 / 0.01.
FunnelData funnel_data(const MetaDataset& data, FunnelAxis axis,
                       const std::optional<std::vector<double>>& contour_levels = std::nullopt);

struct GalbraithPoint {
  double precision = 0.0;     // 1 / se
  double standardized = 0.0;  // (effect - mu) / se
};

// Standardized effects against precision.  Under no significance-driven
// selection, roughly 5% of points should fall outside +-2.
struct GalbraithData {
  std::vector<GalbraithPoint> points;  // input order
  double frac_outside = 0.0;           // share with |standardized| > 2
  double benchmark = 0.05;
};

GalbraithData galbraith_data(const MetaDataset& data, double mu);

// ============================================================================
// Asymmetry regressions
// ============================================================================
// All bias regressions weight by inverse variance and are reported in the
// transformed parameterization (t statistic on precision); the untransformed
// weighted fit is solved as well and the two coefficient sets are required to
// agree, which guards the solver against conditioning artifacts.  Standard
// errors scale the unscaled covariance by the regression MSE and t statistics
// refer to k minus the coefficient count degrees of freedom.

// Severity reading of a funnel-asymmetry result: bands on |b0| apply only
// when the test rejects at the 5% level, and a boundary value falls into the
// more severe band.
enum class BiasSeverity { little_to_modest, substantial, severe };

const char* bias_severity_name(BiasSeverity s);

struct FatResult {
  double b0 = 0.0;  // asymmetry coefficient (intercept of the t-on-precision form)
  double b1 = 0.0;  // genuine-effect coefficient (slope on precision)
  double se_b0 = 0.0;
  double se_b1 = 0.0;
  double t_b0 = 0.0;
  double df = 0.0;
  double p_value = 1.0;  // two-sided, asymmetry coefficient = 0
  BiasSeverity severity = BiasSeverity::little_to_modest;
};

// Funnel-asymmetry test: effects regressed on their standard errors.
FatResult egger_fat(const MetaDataset& data);

struct BiasCoefTest {
  double estimate = 0.0;
  double se = 0.0;
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};

// Hollow-funnel check for significance-driven selection: |effect| on se.
// Reported coefficient is the asymmetry term, as in egger_fat.
BiasCoefTest type2_test(const MetaDataset& data);

// Genuine-effect test: the precision coefficient of the egger_fat regression.
BiasCoefTest pet(const MetaDataset& data);

struct PeeseResult {
  double lambda1 = 0.0;  // bias-corrected effect (coefficient on precision)
  double lambda0 = 0.0;  // quadratic small-study coefficient (on se)
  double se_lambda1 = 0.0;
  double se_lambda0 = 0.0;
  double t = 0.0;  // lambda1 / se_lambda1
  double df = 0.0;
  double p_value = 1.0;  // two-sided, lambda1 = 0
};

// Quadratic correction: effects on their variances; the level term is the
// corrected effect.  Transformed form has no intercept (regressors se and
// precision).
PeeseResult peese(const MetaDataset& data);

enum class PetPeeseBranch { pet, peese };

const char* pet_peese_branch_name(PetPeeseBranch b);

struct PetPeeseResult {
  double estimate = 0.0;
  PetPeeseBranch branch = PetPeeseBranch::pet;
  double alpha = 0.05;
  BiasCoefTest pet_test;                  // stage one, always computed
  std::optional<PeeseResult> peese_fit;   // engaged when the branch is peese
};

// Conditional estimator: the quadratic correction when the genuine-effect
// test rejects at alpha, the linear one otherwise.
PetPeeseResult pet_peese(const MetaDataset& data, double alpha = 0.05);

// ============================================================================
// Moderator-augmented asymmetry regression
// ============================================================================

struct ExtendedBiasFit {
  Vector beta;   // transformed-model order, matching names
  Matrix cov;    // MSE-scaled
  double mse = 0.0;
  double df = 0.0;  // k minus coefficient count
  // "bias", "bias:<K name>"..., "effect", "effect:<Z name>"...
  std::vector<std::string> names;
  WaldTest selection;   // joint: bias term and all K coefficients zero
  WaldTest moderators;  // joint: all Z coefficients zero
  bool peese_variant = false;
  Eigen::Index k = 0;
};

// Asymmetry regression with Z columns shifting the genuine effect and K
// columns shifting the selection term.  peese_variant squares the selection
// regressors, mirroring the quadratic correction.
ExtendedBiasFit extended_fat_pet(const MetaDataset& data, const std::vector<std::string>& z_names,
                                 const std::vector<std::string>& k_names,
                                 bool peese_variant = false);

// ============================================================================
// Power-trace and restriction estimators
// ============================================================================

struct MstResult {
  double delta1 = 0.0;  // slope of ln|t| on ln(df)
  double delta0 = 0.0;
  double se = 0.0;      // se of delta1
  double t = 0.0;
  double df = 0.0;      // regression residual df
  double p_value = 1.0; // one-sided, delta1 <= 0
  Eigen::Index dropped = 0;  // records removed for a zero t statistic
};

// Power-trace regression: a genuine effect makes |t| grow with the primary
// study's degrees of freedom.  Records need a df column; zero-t records are
// dropped (their log is undefined) and counted.
MstResult mst(const MetaDataset& data);

struct Top10Result {
  PoolResult pooled;
  std::vector<Eigen::Index> selected;  // ascending row indices of the kept records
};

// Fixed-effect pool over the most precise tenth of the records (ceiling
// count, ties by input order).
Top10Result top10(const MetaDataset& data);

struct WaapResult {
  PoolResult pooled;
  bool inadequate_set = false;  // no record met the power rule; pooled falls
                                // back to the first-stage estimate
  std::vector<Eigen::Index> selected;
  double threshold = 0.0;       // |first-stage mu| / 2.8
  double mu_first_stage = 0.0;
};

// Fixed-effect pool restricted to adequately powered records: se no larger
// than the first-stage |mu|/2.8 (80% power against zero at the 5% level).
// The first stage is the multiplicative-dispersion weighted average.
WaapResult waap(const MetaDataset& data);

}  // namespace metaforge
