#include "metaforge/rve.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace metaforge {

namespace {

void require_unit_interval(double rho, const char* who) {
  if (!(rho >= 0.0 && rho <= 1.0))
    fail(ErrorKind::DomainError, std::string(who) + ": rho must lie in [0,1]");
}

void require_nonneg(double v, const char* who, const char* what) {
  if (!(v >= 0.0) || !std::isfinite(v))
    fail(ErrorKind::DomainError,
         std::string(who) + ": " + what + " must be a nonnegative finite value");
}

DesignMatrix build_design(const ClusteredDataset& data, const std::vector<std::string>& mods) {
  if (mods.empty()) return DesignMatrix::intercept_only(data.k());
  return DesignMatrix::with_intercept(data.flat().moderator_block(mods));
}

// Mean within-cluster sampling variance.
double cluster_mean_var(const ClusteredDataset& data, const Cluster& c) {
  double acc = 0.0;
  for (const Eigen::Index r : c.rows) {
    const double s = data.flat().ses()[r];
    acc += s * s;
  }
  return acc / static_cast<double>(c.rows.size());
}

}  // namespace

// ============================================================================
// Working models
// ============================================================================

const char* working_model_name(WorkingModelKind kind) {
  return kind == WorkingModelKind::hierarchical_effects ? "he" : "ce";
}

WorkingModelKind working_model_from_name(const std::string& name) {
  if (name == "ce") return WorkingModelKind::correlated_effects;
  if (name == "he") return WorkingModelKind::hierarchical_effects;
  fail(ErrorKind::UsageError, "working model must be 'ce' or 'he'; got '" + name + "'");
}

double ce_tau2(const ClusteredDataset& data, double rho) {
  require_unit_interval(rho, "ce_tau2");
  if (data.m() < 2) return 0.0;  // no between-cluster information

  // Collapse each cluster to its precision-weighted mean, then apply the
  // canonical moment estimator to the collapsed records.  The collapse uses
  // only marginal variances, so the pairwise correlation never enters.
  std::vector<EffectRecord> collapsed;
  collapsed.reserve(static_cast<std::size_t>(data.m()));
  for (const Cluster& c : data.clusters()) {
    double sw = 0.0, swy = 0.0;
    for (const Eigen::Index r : c.rows) {
      const double s = data.flat().ses()[r];
      const double w = 1.0 / (s * s);
      sw += w;
      swy += w * data.flat().effects()[r];
    }
    EffectRecord rec;
    rec.effect = swy / sw;
    rec.se = std::sqrt(1.0 / sw);
    collapsed.push_back(std::move(rec));
  }
  return tau2_dl(MetaDataset::create(std::move(collapsed), Metric::generic));
}

WorkingModel working_ce(const ClusteredDataset& data, double rho) {
  require_unit_interval(rho, "working_ce");
  WorkingModel wm;
  wm.kind = WorkingModelKind::correlated_effects;
  wm.rho = rho;
  wm.tau2 = ce_tau2(data, rho);
  return wm;
}

WorkingModel working_he(double omega2, double tau2) {
  require_nonneg(omega2, "working_he", "omega2");
  require_nonneg(tau2, "working_he", "tau2");
  WorkingModel wm;
  wm.kind = WorkingModelKind::hierarchical_effects;
  wm.omega2 = omega2;
  wm.tau2 = tau2;
  return wm;
}

bool ce_variance_spread(const ClusteredDataset& data) {
  for (const Cluster& c : data.clusters()) {
    if (c.rows.size() < 2) continue;
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (const Eigen::Index r : c.rows) {
      const double v = data.flat().ses()[r] * data.flat().ses()[r];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi > 2.0 * lo) return true;
  }
  return false;
}

Vector rve_weights(const ClusteredDataset& data, const WorkingModel& wm) {
  require_nonneg(wm.tau2, "rve_weights", "tau2");
  Vector w(data.k());
  if (wm.kind == WorkingModelKind::correlated_effects) {
    require_unit_interval(wm.rho, "rve_weights");
    for (const Cluster& c : data.clusters()) {
      const double kj = static_cast<double>(c.rows.size());
      const double wj = 1.0 / (kj * (cluster_mean_var(data, c) + wm.tau2));
      for (const Eigen::Index r : c.rows) w[r] = wj;
    }
  } else {
    require_nonneg(wm.omega2, "rve_weights", "omega2");
    for (Eigen::Index i = 0; i < data.k(); ++i) {
      const double s = data.flat().ses()[i];
      w[i] = 1.0 / (s * s + wm.omega2 + wm.tau2);
    }
  }
  if (!w.allFinite() || (w.array() <= 0.0).any())
    fail(ErrorKind::DegenerateWeights, "rve_weights: weights must be positive and finite");
  return w;
}

Vector rve_weights_ce(const ClusteredDataset& data, double rho) {
  return rve_weights(data, working_ce(data, rho));
}

Vector rve_weights_he(const ClusteredDataset& data, double omega2, double tau2) {
  return rve_weights(data, working_he(omega2, tau2));
}

// ============================================================================
// Robust fit
// ============================================================================

RveFit rve_fit(const ClusteredDataset& data, const std::vector<std::string>& mods,
               const WorkingModel& wm, bool small_sample) {
  const Eigen::Index m = data.m();
  const Eigen::Index p = static_cast<Eigen::Index>(mods.size());
  const Eigen::Index q = p + 1;
  if (m <= q)
    fail(ErrorKind::TooFewClusters,
         "rve_fit: needs more clusters than coefficients (" + std::to_string(q) +
             ") for inference, got " + std::to_string(m));

  const DesignMatrix X = build_design(data, mods);
  const Vector& y = data.flat().effects();
  const Vector w = rve_weights(data, wm);
  const WlsSolution sol = wls_solve(X, y, w);

  // Residual inflation keeps the cross-products from understating the
  // covariance when few clusters carry the estimate.
  const double df = static_cast<double>(m - q);
  const double inflate = small_sample ? std::sqrt(static_cast<double>(m) / df) : 1.0;

  Matrix meat = Matrix::Zero(q, q);
  for (const Cluster& c : data.clusters()) {
    Vector g = Vector::Zero(q);
    for (const Eigen::Index r : c.rows)
      g += w[r] * (inflate * sol.residuals[r]) * X.values().row(r).transpose();
    meat += g * g.transpose();
  }

  const Matrix cov = sol.cov_unscaled * meat * sol.cov_unscaled;

  RveFit out;
  out.beta = sol.beta;
  out.robust_cov = 0.5 * (cov + cov.transpose());
  out.weights = w;
  out.working = wm;
  out.df = df;
  out.adjusted = small_sample;
  out.variance_warning =
      wm.kind == WorkingModelKind::correlated_effects && ce_variance_spread(data);
  out.m = m;
  out.k = data.k();
  out.p = p;
  out.moderators = mods;
  return out;
}

RveCoefTest rve_coef_test(const RveFit& fit, Eigen::Index coef_index, double level) {
  if (coef_index < 0 || coef_index >= fit.beta.size())
    fail(ErrorKind::DomainError, "rve_coef_test: coefficient index out of range");
  if (!(level > 0.0 && level < 1.0))
    fail(ErrorKind::DomainError, "rve_coef_test: level must lie strictly inside (0,1)");

  RveCoefTest out;
  out.estimate = fit.beta[coef_index];
  out.se = std::sqrt(fit.robust_cov(coef_index, coef_index));
  out.df = fit.df;
  if (out.se == 0.0) {
    out.t = 0.0;
    out.p_value = (out.estimate == 0.0) ? 1.0 : 0.0;
    out.interval = Interval{out.estimate, out.estimate, level, "rve_t", true};
    return out;
  }
  out.t = out.estimate / out.se;
  out.p_value = t_two_sided_p(out.t, out.df);
  const double crit = t_quantile(1.0 - 0.5 * (1.0 - level), out.df);
  out.interval =
      Interval{out.estimate - crit * out.se, out.estimate + crit * out.se, level, "rve_t", false};
  return out;
}

std::vector<RhoSensitivityRow> rho_sensitivity(const ClusteredDataset& data,
                                               const std::vector<std::string>& mods,
                                               const std::vector<double>& rho_grid,
                                               bool small_sample) {
  if (rho_grid.empty())
    fail(ErrorKind::DomainError, "rho_sensitivity: grid must contain at least one value");
  std::vector<RhoSensitivityRow> rows;
  rows.reserve(rho_grid.size());
  for (const double rho : rho_grid) {
    const WorkingModel wm = working_ce(data, rho);
    const RveFit fit = rve_fit(data, mods, wm, small_sample);
    RhoSensitivityRow row;
    row.rho = rho;
    row.tau2 = wm.tau2;
    row.beta = fit.beta;
    row.se = fit.robust_cov.diagonal().cwiseSqrt();
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix rve_model_cov(const ClusteredDataset& data, const std::vector<std::string>& mods,
                     const Vector& weights, const std::vector<Matrix>& sigma) {
  if (weights.size() != data.k())
    fail(ErrorKind::DimensionMismatch, "rve_model_cov: one weight per record required");
  if (static_cast<Eigen::Index>(sigma.size()) != data.m())
    fail(ErrorKind::DimensionMismatch, "rve_model_cov: one covariance block per cluster required");
  if (!weights.allFinite() || (weights.array() <= 0.0).any())
    fail(ErrorKind::DegenerateWeights, "rve_model_cov: weights must be positive and finite");

  const DesignMatrix X = build_design(data, mods);
  const Eigen::Index q = X.cols();

  const Matrix bread = X.values().transpose() * weights.asDiagonal() * X.values();
  Eigen::LDLT<Matrix> ldlt(bread);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    fail(ErrorKind::RankDeficient, "rve_model_cov: weighted design is not full rank");

  Matrix meat = Matrix::Zero(q, q);
  for (Eigen::Index j = 0; j < data.m(); ++j) {
    const Cluster& c = data.cluster(j);
    const Eigen::Index kj = static_cast<Eigen::Index>(c.rows.size());
    if (sigma[static_cast<std::size_t>(j)].rows() != kj ||
        sigma[static_cast<std::size_t>(j)].cols() != kj)
      fail(ErrorKind::DimensionMismatch,
           "rve_model_cov: covariance block " + std::to_string(j) + " must be " +
               std::to_string(kj) + "x" + std::to_string(kj));
    Matrix xw(q, kj);  // X_j' W_j
    for (Eigen::Index a = 0; a < kj; ++a)
      xw.col(a) = weights[c.rows[static_cast<std::size_t>(a)]] *
                  X.values().row(c.rows[static_cast<std::size_t>(a)]).transpose();
    meat += xw * sigma[static_cast<std::size_t>(j)] * xw.transpose();
  }

  const Matrix cov = ldlt.solve(ldlt.solve(meat).transpose());
  return 0.5 * (cov + cov.transpose());
}

}  // namespace metaforge
