#include "metaforge/statkernel.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace metaforge {

namespace {

constexpr double kRankTol = 1e-12;  // relative pivot threshold

bool all_finite(const Matrix& m) { return m.allFinite(); }
bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace

// ============================================================================
// DesignMatrix
// ============================================================================

DesignMatrix DesignMatrix::with_intercept(const Matrix& moderators) {
  if (!all_finite(moderators))
    fail(ErrorKind::NonFiniteInput, "moderator block contains non-finite values");
  Matrix m(moderators.rows(), moderators.cols() + 1);
  m.col(0).setOnes();
  if (moderators.cols() > 0) m.rightCols(moderators.cols()) = moderators;
  return DesignMatrix(std::move(m));
}

DesignMatrix DesignMatrix::intercept_only(Eigen::Index k) {
  if (k < 1) fail(ErrorKind::EmptyDataset, "design matrix needs at least one row");
  return DesignMatrix(Matrix::Ones(k, 1));
}

DesignMatrix DesignMatrix::from_raw(Matrix values) {
  if (values.rows() < 1 || values.cols() < 1)
    fail(ErrorKind::EmptyDataset, "design matrix needs at least one row and column");
  if (!all_finite(values))
    fail(ErrorKind::NonFiniteInput, "design matrix contains non-finite values");
  if ((values.col(0).array() != 1.0).any())
    fail(ErrorKind::ValidationError, "design matrix column 0 must be identically one");
  return DesignMatrix(std::move(values));
}

// ============================================================================
// Weighted least squares
// ============================================================================

WlsSolution wls_solve(const Matrix& X, const Vector& y, const Vector& w) {
  const Eigen::Index k = X.rows();
  const Eigen::Index q = X.cols();
  if (y.size() != k || w.size() != k)
    fail(ErrorKind::DimensionMismatch, "wls_solve: y and w must have one entry per design row");
  if (!all_finite(X)) fail(ErrorKind::NonFiniteInput, "wls_solve: X contains non-finite values");
  if (!all_finite(y)) fail(ErrorKind::NonFiniteInput, "wls_solve: y contains non-finite values");
  if (!all_finite(w) || (w.array() <= 0.0).any())
    fail(ErrorKind::DomainError, "wls_solve: weights must be strictly positive and finite");
  if (k < q)
    fail(ErrorKind::InsufficientStudies, "wls_solve: fewer rows than coefficients");

  const Vector sw = w.array().sqrt();
  const Matrix A = sw.asDiagonal() * X;
  const Vector b = sw.asDiagonal() * y;

  Eigen::ColPivHouseholderQR<Matrix> qr(A);
  qr.setThreshold(kRankTol);
  if (qr.rank() < q)
    fail(ErrorKind::RankDeficient, "wls_solve: design is rank deficient under the given weights");

  WlsSolution out;
  out.beta = qr.solve(b);

  // (X'WX)^{-1} from the triangular factor: A P = Q R implies
  // (A'A)^{-1} = P R^{-1} R^{-T} P'.
  const Matrix R = qr.matrixR().topLeftCorner(q, q).template triangularView<Eigen::Upper>();
  const Matrix Rinv = R.triangularView<Eigen::Upper>().solve(Matrix::Identity(q, q));
  const Matrix cov = Rinv * Rinv.transpose();
  out.cov_unscaled = qr.colsPermutation() * cov * qr.colsPermutation().transpose();

  out.residuals = y - X * out.beta;
  const double wrss = (w.array() * out.residuals.array().square()).sum();
  out.mse = (k > q) ? wrss / static_cast<double>(k - q) : 0.0;
  return out;
}

WlsSolution ols_solve(const Matrix& X, const Vector& y) {
  return wls_solve(X, y, Vector::Ones(X.rows()));
}

WlsSolution wls_solve(const DesignMatrix& X, const Vector& y, const Vector& w) {
  return wls_solve(X.values(), y, w);
}

WlsSolution ols_solve(const DesignMatrix& X, const Vector& y) {
  return wls_solve(X.values(), y, Vector::Ones(X.rows()));
}

// ============================================================================
// Distribution kernels
// ============================================================================

double norm_cdf(double x) {
  if (!std::isfinite(x)) fail(ErrorKind::DomainError, "norm_cdf: non-finite argument");
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double norm_sf(double x) { return norm_cdf(-x); }

// Wichura's rational approximation of the normal quantile.  Accurate to
// about 1e-15 over the full open unit interval.
double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    fail(ErrorKind::DomainError, "norm_quantile: p must lie strictly inside (0,1)");

  static const double a[8] = {
      3.3871328727963666080e0,  1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4,  4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4,  2.5090809287301226727e3};
  static const double b[8] = {
      1.0,                      4.2313330701600911252e1, 6.8718700749205790830e2,
      5.3941960214247511077e3,  2.1213794301586595867e4, 3.9307895800092710610e4,
      2.8729085735721942674e4,  5.2264952788528545610e3};
  static const double c[8] = {
      1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
      3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4};
  static const double d[8] = {
      1.0,                      2.05319162663775882187e0, 1.67638483018380384940e0,
      6.89767334985100004550e-1, 1.48103976427480074590e-1, 1.51986665636164571966e-2,
      5.47593808499534494600e-4, 1.05075007164441684324e-9};
  static const double e[8] = {
      6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
      2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7};
  static const double f[8] = {
      1.0,                      5.99832206555887937690e-1, 1.36929880922735805310e-1,
      1.48753612908506148525e-2, 7.86869131145613259100e-4, 1.84631831751005468180e-5,
      1.42151175831644588870e-7, 2.04426310338993978564e-15};

  auto poly = [](const double* coeff, double r) {
    double s = coeff[7];
    for (int i = 6; i >= 0; --i) s = s * r + coeff[i];
    return s;
  };

  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q * poly(a, r) / poly(b, r);
  }
  double r = (q < 0.0) ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double value;
  if (r <= 5.0) {
    r -= 1.6;
    value = poly(c, r) / poly(d, r);
  } else {
    r -= 5.0;
    value = poly(e, r) / poly(f, r);
  }
  return (q < 0.0) ? -value : value;
}

// --- incomplete gamma -------------------------------------------------------

namespace {

constexpr int kMaxIter = 500;
constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kFpMin = std::numeric_limits<double>::min() / kEps;

// Series expansion of P(a,x); converges fast for x < a + 1.
double gamma_p_series(double a, double x) {
  double ap = a;
  double term = 1.0 / a;
  double sum = term;
  for (int n = 0; n < kMaxIter; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps)
      return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  fail(ErrorKind::NumericalError, "incomplete gamma series failed to converge");
}

// Modified Lentz continued fraction for Q(a,x); converges fast for x > a + 1.
double gamma_q_cf(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kFpMin;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxIter; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = b + an / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps)
      return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  fail(ErrorKind::NumericalError, "incomplete gamma continued fraction failed to converge");
}

}  // namespace

double gamma_p(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0) || !std::isfinite(a) || !std::isfinite(x))
    fail(ErrorKind::DomainError, "gamma_p: requires a > 0 and x >= 0");
  if (x == 0.0) return 0.0;
  return (x < a + 1.0) ? gamma_p_series(a, x) : 1.0 - gamma_q_cf(a, x);
}

double gamma_q(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0) || !std::isfinite(a) || !std::isfinite(x))
    fail(ErrorKind::DomainError, "gamma_q: requires a > 0 and x >= 0");
  if (x == 0.0) return 1.0;
  return (x < a + 1.0) ? 1.0 - gamma_p_series(a, x) : gamma_q_cf(a, x);
}

// --- incomplete beta --------------------------------------------------------

namespace {

double beta_cf(double a, double b, double x) {
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) return h;
  }
  fail(ErrorKind::NumericalError, "incomplete beta continued fraction failed to converge");
}

}  // namespace

double beta_inc(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0) || !(x >= 0.0 && x <= 1.0))
    fail(ErrorKind::DomainError, "beta_inc: requires a,b > 0 and x in [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double front = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                                a * std::log(x) + b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

// --- Student t --------------------------------------------------------------

double t_cdf(double x, double df) {
  if (!(df > 0.0) || !std::isfinite(df)) fail(ErrorKind::DomainError, "t_cdf: df must be positive");
  if (!std::isfinite(x)) fail(ErrorKind::DomainError, "t_cdf: non-finite argument");
  if (x == 0.0) return 0.5;
  const double tail = 0.5 * beta_inc(0.5 * df, 0.5, df / (df + x * x));
  return (x > 0.0) ? 1.0 - tail : tail;
}

double t_sf(double x, double df) { return t_cdf(-x, df); }

double t_two_sided_p(double t, double df) {
  if (!(df > 0.0) || !std::isfinite(df))
    fail(ErrorKind::DomainError, "t_two_sided_p: df must be positive");
  if (!std::isfinite(t)) fail(ErrorKind::DomainError, "t_two_sided_p: non-finite statistic");
  return beta_inc(0.5 * df, 0.5, df / (df + t * t));
}

namespace {

double t_pdf(double x, double df) {
  const double lg = std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) -
                    0.5 * std::log(df * std::numbers::pi);
  return std::exp(lg - 0.5 * (df + 1.0) * std::log1p(x * x / df));
}

}  // namespace

// Safeguarded Newton iteration on the CDF; the normal quantile seeds the
// search and bisection bounds keep every step inside a verified bracket.
double t_quantile(double p, double df) {
  if (!(df > 0.0) || !std::isfinite(df))
    fail(ErrorKind::DomainError, "t_quantile: df must be positive");
  if (!(p > 0.0 && p < 1.0))
    fail(ErrorKind::DomainError, "t_quantile: p must lie strictly inside (0,1)");
  if (p == 0.5) return 0.0;

  const double pmax = std::max(p, 1.0 - p);
  const double sign = (p >= 0.5) ? 1.0 : -1.0;

  double lo = 0.0;
  double hi = std::max(1.0, std::abs(norm_quantile(pmax)) * 2.0);
  for (int i = 0; i < 200 && t_cdf(hi, df) < pmax; ++i) hi *= 2.0;
  if (t_cdf(hi, df) < pmax)
    fail(ErrorKind::NumericalError, "t_quantile: failed to bracket the root");

  double x = std::min(hi, std::max(lo, std::abs(norm_quantile(pmax))));
  for (int i = 0; i < 200; ++i) {
    const double err = t_cdf(x, df) - pmax;
    if (err > 0.0) hi = x; else lo = x;
    const double dens = t_pdf(x, df);
    double next = (dens > 0.0) ? x - err / dens : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) < 1e-12 * (1.0 + std::abs(next))) return sign * next;
    x = next;
  }
  return sign * x;
}

// --- chi squared ------------------------------------------------------------

double chisq_cdf(double x, double df) {
  if (!(df > 0.0)) fail(ErrorKind::DomainError, "chisq_cdf: df must be positive");
  if (!(x >= 0.0) || !std::isfinite(x))
    fail(ErrorKind::DomainError, "chisq_cdf: x must be finite and nonnegative");
  return gamma_p(0.5 * df, 0.5 * x);
}

double chisq_sf(double x, double df) {
  if (!(df > 0.0)) fail(ErrorKind::DomainError, "chisq_sf: df must be positive");
  if (!(x >= 0.0) || !std::isfinite(x))
    fail(ErrorKind::DomainError, "chisq_sf: x must be finite and nonnegative");
  return gamma_q(0.5 * df, 0.5 * x);
}

}  // namespace metaforge
