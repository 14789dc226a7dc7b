#include "metaforge/metareg.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace metaforge {

namespace {

DesignMatrix build_design(const MetaDataset& data, const std::vector<std::string>& mods) {
  {
    auto names = mods;
    std::sort(names.begin(), names.end());
    if (std::adjacent_find(names.begin(), names.end()) != names.end())
      fail(ErrorKind::SchemaError, "moderator list contains a duplicate column");
  }
  if (mods.empty()) return DesignMatrix::intercept_only(data.k());
  return DesignMatrix::with_intercept(data.moderator_block(mods));
}

void need_rows(const MetaDataset& data, Eigen::Index q, bool strict) {
  // strict: residual degrees of freedom required, k > q.
  if (data.k() < q + (strict ? 1 : 0))
    fail(ErrorKind::TooFewStudies,
         "meta-regression with " + std::to_string(q - 1) + " moderator(s) needs more than " +
             std::to_string(q) + " studies, got " + std::to_string(data.k()));
}

double sample_variance(const Vector& y) {
  if (y.size() < 2) return 0.0;
  const double mean = y.mean();
  return (y.array() - mean).square().sum() / static_cast<double>(y.size() - 1);
}

struct QResParts {
  double q_res;
  double df_res;
};

QResParts q_res_fixed(const MetaDataset& data, const DesignMatrix& X) {
  const Vector w = data.fixed_weights();
  const WlsSolution s = wls_solve(X, data.effects(), w);
  QResParts out;
  out.q_res = (w.array() * s.residuals.array().square()).sum();
  out.df_res = static_cast<double>(data.k() - X.cols());
  return out;
}

RegressionFit finish_fit(const MetaDataset& data, const DesignMatrix& X, const Vector& weights,
                         RegModel model, double tau2, const std::vector<std::string>& mods) {
  const WlsSolution s = wls_solve(X, data.effects(), weights);
  const QResParts qr = q_res_fixed(data, X);
  RegressionFit fit;
  fit.beta = s.beta;
  fit.cov = s.cov_unscaled;
  fit.model = model;
  fit.tau2_res = tau2;
  fit.q_res = qr.q_res;
  fit.df_res = qr.df_res;
  fit.p_res = (qr.df_res >= 1.0) ? chisq_sf(qr.q_res, qr.df_res) : 1.0;
  fit.i2_res = (qr.q_res > 0.0) ? std::max(0.0, (qr.q_res - qr.df_res) / qr.q_res) : 0.0;
  fit.moderators = mods;
  fit.k = data.k();
  fit.p = X.cols() - 1;
  return fit;
}

}  // namespace

VarianceMethod variance_method_from_name(const std::string& name) {
  if (name == "mm") return VarianceMethod::mm;
  if (name == "ml") return VarianceMethod::ml;
  if (name == "reml") return VarianceMethod::reml;
  if (name == "eb")
    fail(ErrorKind::UsageError,
         "variance method 'eb' is recognized but not implemented; choose mm, ml, or reml");
  fail(ErrorKind::UsageError, "unknown variance method '" + name + "'");
}

const char* variance_method_name(VarianceMethod m) {
  switch (m) {
    case VarianceMethod::mm: return "mm";
    case VarianceMethod::ml: return "ml";
    case VarianceMethod::reml: return "reml";
  }
  return "mm";
}

RegressionFit fit_fixed(const MetaDataset& data, const std::vector<std::string>& mods) {
  const DesignMatrix X = build_design(data, mods);
  need_rows(data, X.cols(), false);
  return finish_fit(data, X, data.fixed_weights(), RegModel::fixed, 0.0, mods);
}

double tau2_res_mm(const MetaDataset& data, const std::vector<std::string>& mods) {
  const DesignMatrix X = build_design(data, mods);
  need_rows(data, X.cols(), true);
  const Vector w = data.fixed_weights();
  const QResParts qr = q_res_fixed(data, X);

  // tr(M) = sum(w) - tr((X'WX)^{-1} X'W^2X).
  const Matrix Xv = X.values();
  const Matrix xtwx = Xv.transpose() * w.asDiagonal() * Xv;
  const Matrix xtw2x = Xv.transpose() * w.array().square().matrix().asDiagonal() * Xv;
  Eigen::LDLT<Matrix> ldlt(xtwx);
  if (ldlt.info() != Eigen::Success)
    fail(ErrorKind::RankDeficient, "tau2_res_mm: weighted design has no usable factorization");
  const double trace_m = w.sum() - ldlt.solve(xtw2x).trace();
  if (!(trace_m > 0.0) || !std::isfinite(trace_m))
    fail(ErrorKind::DegenerateWeights, "tau2_res_mm: tr(M) must be positive");
  return std::max(0.0, (qr.q_res - qr.df_res) / trace_m);
}

double profile_loglik(const MetaDataset& data, const std::vector<std::string>& mods, double tau2,
                      VarianceMethod method) {
  if (method == VarianceMethod::mm)
    fail(ErrorKind::DomainError, "profile_loglik: defined for ml and reml only");
  if (!(tau2 >= 0.0)) fail(ErrorKind::NegativeTau2, "profile_loglik: tau2 must be nonnegative");
  const DesignMatrix X = build_design(data, mods);
  const Eigen::Index k = data.k();
  const Eigen::Index q = X.cols();

  const Vector v = data.variances().array() + tau2;
  const Vector w = v.array().inverse();
  const WlsSolution s = wls_solve(X, data.effects(), w);
  const double rss = (w.array() * s.residuals.array().square()).sum();
  const double log_v = v.array().log().sum();
  constexpr double ln2pi = 1.8378770664093454836;

  if (method == VarianceMethod::ml)
    return -0.5 * (static_cast<double>(k) * ln2pi + log_v + rss);

  // REML adds the information of the profiled fixed part.
  const Matrix xtwx = X.values().transpose() * w.asDiagonal() * X.values();
  Eigen::LLT<Matrix> llt(xtwx);
  if (llt.info() != Eigen::Success)
    fail(ErrorKind::RankDeficient, "profile_loglik: X'V^-1X is not positive definite");
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < q; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * (static_cast<double>(k - q) * ln2pi + log_v + log_det + rss);
}

namespace {

// Bounded golden-section ascent with a bracketing prepass; budget and
// tolerance fixed by the two-level profile contract.
struct GoldenResult {
  double x;
  double f;
};

GoldenResult golden_maximize(const std::function<double(double)>& f, double lo, double hi,
                             double tol, int max_iter) {
  constexpr int kScan = 64;
  double best_x = lo, best_f = f(lo);
  for (int i = 1; i <= kScan; ++i) {
    const double x = lo + (hi - lo) * static_cast<double>(i) / kScan;
    const double fx = f(x);
    if (fx > best_f) {
      best_f = fx;
      best_x = x;
    }
  }
  const double step = (hi - lo) / kScan;
  double a = std::max(lo, best_x - step);
  double b = std::min(hi, best_x + step);

  constexpr double phi = 0.6180339887498949;
  double x1 = b - phi * (b - a);
  double x2 = a + phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  int it = 0;
  while (b - a > tol) {
    if (++it > max_iter)
      fail(ErrorKind::NonConvergence, "profile maximizer exhausted its iteration budget");
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = f(x1);
    }
  }
  const double xm = 0.5 * (a + b);
  const double fm = f(xm);
  GoldenResult out{xm, fm};
  if (f1 > out.f) out = {x1, f1};
  if (f2 > out.f) out = {x2, f2};
  if (best_f > out.f) out = {best_x, best_f};
  return out;
}

}  // namespace

RegressionFit fit_mixed(const MetaDataset& data, const std::vector<std::string>& mods,
                        VarianceMethod method) {
  const DesignMatrix X = build_design(data, mods);
  need_rows(data, X.cols(), true);

  double tau2 = 0.0;
  std::optional<double> loglik;
  if (method == VarianceMethod::mm) {
    tau2 = tau2_res_mm(data, mods);
  } else {
    const double upper = 100.0 * sample_variance(data.effects());
    if (upper <= 0.0) {
      tau2 = 0.0;
    } else {
      auto objective = [&](double t) { return profile_loglik(data, mods, t, method); };
      const GoldenResult r = golden_maximize(objective, 0.0, upper, 1e-10, 500);
      tau2 = r.x;
    }
    loglik = profile_loglik(data, mods, tau2, method);
  }

  const Vector w = (data.variances().array() + tau2).inverse();
  RegressionFit fit = finish_fit(data, X, w, RegModel::mixed, tau2, mods);
  fit.variance_method = method;
  fit.loglik = loglik;
  return fit;
}

QTest q_res_test(const MetaDataset& data, const std::vector<std::string>& mods) {
  const DesignMatrix X = build_design(data, mods);
  need_rows(data, X.cols(), true);
  const QResParts qr = q_res_fixed(data, X);
  QTest out;
  out.q = qr.q_res;
  out.df = qr.df_res;
  out.p_value = chisq_sf(qr.q_res, qr.df_res);
  return out;
}

double pseudo_r2(double tau2_total, double tau2_res) {
  if (!(tau2_total >= 0.0) || !(tau2_res >= 0.0))
    fail(ErrorKind::NegativeTau2, "pseudo_r2: variance components must be nonnegative");
  if (tau2_total == 0.0) return 0.0;
  return std::min(1.0, std::max(0.0, 1.0 - tau2_res / tau2_total));
}

WaldTest omnibus_test(const RegressionFit& fit) {
  if (fit.p < 1) fail(ErrorKind::DomainError, "omnibus_test: fit has no slopes");
  const Vector slopes = fit.beta.tail(fit.p);
  const Matrix vs = fit.cov.bottomRightCorner(fit.p, fit.p);
  Eigen::LDLT<Matrix> ldlt(vs);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    fail(ErrorKind::SingularCovariance, "omnibus_test: slope covariance is not positive definite");
  const Vector solved = ldlt.solve(slopes);
  if (!solved.allFinite() || (vs * solved - slopes).norm() > 1e-8 * (1.0 + slopes.norm()))
    fail(ErrorKind::SingularCovariance, "omnibus_test: slope covariance is numerically singular");
  WaldTest out;
  out.q = slopes.dot(solved);
  out.df = static_cast<double>(fit.p);
  out.p_value = chisq_sf(std::max(0.0, out.q), out.df);
  return out;
}

LrTest lr_test(double full_loglik, double reduced_loglik, int df, VarianceMethod estimation) {
  if (estimation == VarianceMethod::mm)
    fail(ErrorKind::InvalidComparison, "lr_test: requires ml or reml log-likelihoods");
  if (df < 0) fail(ErrorKind::DomainError, "lr_test: df must be nonnegative");
  if (estimation == VarianceMethod::reml && df > 0)
    fail(ErrorKind::InvalidComparison,
         "lr_test: restricted likelihoods are not comparable across different fixed parts");
  if (!std::isfinite(full_loglik) || !std::isfinite(reduced_loglik))
    fail(ErrorKind::NonFiniteInput, "lr_test: non-finite log-likelihood");

  double lr = -2.0 * (reduced_loglik - full_loglik);
  if (lr < 0.0) {
    if (lr < -1e-6)
      fail(ErrorKind::InvalidComparison,
           "lr_test: reduced model outscores full model; fits are not nested or not converged");
    lr = 0.0;
  }
  LrTest out;
  out.lr = lr;
  out.df = df;
  out.p_value = (df == 0) ? (lr == 0.0 ? 1.0 : 0.0) : chisq_sf(lr, static_cast<double>(df));
  return out;
}

KhCoefTest coef_test_kh(const RegressionFit& fit, const MetaDataset& data,
                        const std::vector<std::string>& mods, Eigen::Index coef_index,
                        double level) {
  if (fit.model != RegModel::mixed)
    fail(ErrorKind::DomainError, "coef_test_kh: requires a mixed-model fit");
  if (!(level > 0.0 && level < 1.0))
    fail(ErrorKind::DomainError, "coef_test_kh: level must lie inside (0,1)");
  const DesignMatrix X = build_design(data, mods);
  if (X.cols() != fit.beta.size() || data.k() != fit.k)
    fail(ErrorKind::DimensionMismatch, "coef_test_kh: fit does not match data and moderators");
  if (coef_index < 0 || coef_index >= fit.beta.size())
    fail(ErrorKind::DomainError, "coef_test_kh: coefficient index out of range");
  const double df = static_cast<double>(data.k() - X.cols());
  if (df < 1.0) fail(ErrorKind::TooFewStudies, "coef_test_kh: no residual degrees of freedom");

  const Vector resid = data.effects() - X.values() * fit.beta;
  const Vector w = (data.variances().array() + fit.tau2_res).inverse();
  const double q_star = (w.array() * resid.array().square()).sum() / df;
  const double q_scale = std::max(1.0, q_star);

  KhCoefTest out;
  out.estimate = fit.beta[coef_index];
  out.se = std::sqrt(q_scale * fit.cov(coef_index, coef_index));
  out.t = out.estimate / out.se;
  out.df = df;
  out.p_value = t_two_sided_p(out.t, df);
  out.q_scale = q_scale;
  const double crit = t_quantile(1.0 - 0.5 * (1.0 - level), df);
  out.interval = Interval{out.estimate - crit * out.se, out.estimate + crit * out.se, level,
                          "kh_t", false};
  return out;
}

}  // namespace metaforge
