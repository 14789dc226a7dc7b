#pragma once

#include <Eigen/Dense>

#include "metaforge/error.hpp"

namespace metaforge {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// ============================================================================
// Design matrices
// ============================================================================

// Dense k x (p+1) regressor matrix whose first column is identically one.
// The intercept column is a structural invariant, not a convention: every
// downstream fit assumes column 0 is the constant term.
class DesignMatrix {
 public:
  // Prepends the intercept column to a k x p moderator block.
  static DesignMatrix with_intercept(const Matrix& moderators);

  // k x 1 matrix of ones.
  static DesignMatrix intercept_only(Eigen::Index k);

  // Accepts a fully formed matrix; validates finiteness and the ones column.
  static DesignMatrix from_raw(Matrix values);

  const Matrix& values() const noexcept { return values_; }
  Eigen::Index rows() const noexcept { return values_.rows(); }
  Eigen::Index cols() const noexcept { return values_.cols(); }

 private:
  explicit DesignMatrix(Matrix values) : values_(std::move(values)) {}
  Matrix values_;
};

// ============================================================================
// Weighted least squares
// ============================================================================

struct WlsSolution {
  Vector beta;
  Matrix cov_unscaled;  // (X' W X)^{-1}
  double mse = 0.0;     // weighted RSS / (k - q); 0 when the fit is saturated
  Vector residuals;     // y - X beta, on the original (unweighted) scale
};

// Solves min_b sum_i w_i (y_i - x_i' b)^2 through an orthogonal decomposition
// of W^{1/2} X rather than the normal equations; column-pivoted so rank
// deficiency is detected against a 1e-12 relative pivot threshold.
// Requires strictly positive finite weights.
WlsSolution wls_solve(const DesignMatrix& X, const Vector& y, const Vector& w);

// Ordinary least squares, i.e. unit weights.
WlsSolution ols_solve(const DesignMatrix& X, const Vector& y);

// Overloads on a plain coefficient matrix for fits whose regressor layout has
// no leading intercept column (e.g. precision-on-scale transforms).
WlsSolution wls_solve(const Matrix& X, const Vector& y, const Vector& w);
WlsSolution ols_solve(const Matrix& X, const Vector& y);

// ============================================================================
// Distribution kernels
// ============================================================================
// Quantiles are accurate to well below 1e-8 absolute over the supported
// domain; CDFs are accurate to near machine precision.  All functions reject
// out-of-domain arguments with DomainError.

double norm_cdf(double x);
double norm_sf(double x);
double norm_quantile(double p);  // p in (0,1)

double t_cdf(double x, double df);  // df > 0
double t_sf(double x, double df);
double t_quantile(double p, double df);  // p in (0,1)

double chisq_cdf(double x, double df);  // x >= 0, df > 0
double chisq_sf(double x, double df);

// Two-sided p-value of a t statistic.
double t_two_sided_p(double t, double df);

// Regularized incomplete gamma P(a,x) and Q(a,x), exposed because the
// simulation harness reuses them.
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// Regularized incomplete beta I_x(a,b).
double beta_inc(double a, double b, double x);

}  // namespace metaforge
