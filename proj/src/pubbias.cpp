#include "metaforge/pubbias.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace metaforge {

namespace {

constexpr double kDualRouteTol = 1e-10;
constexpr double kSeverityAlpha = 0.05;

void require_k(const MetaDataset& data, Eigen::Index k_min, const char* who) {
  if (data.k() < k_min)
    fail(ErrorKind::TooFewStudies,
         std::string(who) + ": needs at least " + std::to_string(k_min) + " records");
}

void require_spread(const MetaDataset& data, const char* who) {
  const Vector& s = data.ses();
  if (s.maxCoeff() == s.minCoeff())
    fail(ErrorKind::DegenerateDesign,
         std::string(who) + ": standard errors are all equal, the scale term is not identifiable");
}

// The weighted fit of the level model and the unit-weight fit of its
// precision-transformed counterpart are the same estimator written two ways;
// a disagreement means the solve cannot be trusted.  raw_of_t maps each
// transformed coefficient to its position in the level parameterization.
void check_dual_route(const Vector& t_beta, const Vector& raw_beta,
                      const std::vector<Eigen::Index>& raw_of_t, const char* who) {
  for (std::size_t i = 0; i < raw_of_t.size(); ++i) {
    const double a = t_beta[static_cast<Eigen::Index>(i)];
    const double b = raw_beta[raw_of_t[i]];
    if (std::fabs(a - b) > kDualRouteTol * std::max(1.0, std::fabs(a)))
      fail(ErrorKind::NumericalError,
           std::string(who) + ": weighted and transformed solution routes disagree");
  }
}

struct ScaledCoef {
  double est = 0.0;
  double se = 0.0;
  double t = 0.0;
  double p = 1.0;
};

// MSE-scaled coefficient read-out.  An exact fit collapses the residual
// scale; in that limit a zero coefficient is an exact null and a nonzero one
// an exact rejection.
ScaledCoef read_coef(const WlsSolution& s, Eigen::Index j, double df) {
  ScaledCoef out;
  out.est = s.beta[j];
  out.se = std::sqrt(s.mse * s.cov_unscaled(j, j));
  if (out.se == 0.0) {
    out.t = (out.est == 0.0)
                ? 0.0
                : std::copysign(std::numeric_limits<double>::infinity(), out.est);
    out.p = (out.est == 0.0) ? 1.0 : 0.0;
  } else {
    out.t = out.est / out.se;
    out.p = t_two_sided_p(out.t, df);
  }
  return out;
}

BiasSeverity severity_of(double b0, double p) {
  if (!(p < kSeverityAlpha)) return BiasSeverity::little_to_modest;
  const double a = std::fabs(b0);
  if (a < 1.0) return BiasSeverity::little_to_modest;
  return (a >= 2.0) ? BiasSeverity::severe : BiasSeverity::substantial;
}

struct EggerFit {
  WlsSolution t_route;  // coefficients (asymmetry, effect)
  double df = 0.0;
};

// Shared core of the asymmetry regressions: effects (or their absolute
// values) on the standard error, inverse-variance weighted, reported from the
// t-on-precision form.
EggerFit egger_core(const MetaDataset& data, bool absolute, const char* who) {
  require_k(data, 3, who);
  require_spread(data, who);
  const Eigen::Index k = data.k();
  const Vector& s = data.ses();
  Vector y = data.effects();
  if (absolute) y = y.array().abs();

  Matrix x_raw(k, 2);
  x_raw.col(0).setOnes();
  x_raw.col(1) = s;
  const WlsSolution raw = wls_solve(x_raw, y, data.fixed_weights());

  Matrix x_t(k, 2);
  x_t.col(0).setOnes();
  x_t.col(1) = s.array().inverse();
  const Vector yt = y.array() / s.array();

  EggerFit out;
  out.t_route = ols_solve(x_t, yt);
  out.df = static_cast<double>(k - 2);
  check_dual_route(out.t_route.beta, raw.beta, {1, 0}, who);
  return out;
}

WaldTest joint_wald(const Vector& beta, const Matrix& cov, const std::vector<Eigen::Index>& idx,
                    const char* who) {
  WaldTest out;
  out.df = static_cast<double>(idx.size());
  if (idx.empty()) return out;

  const Eigen::Index m = static_cast<Eigen::Index>(idx.size());
  Vector b(m);
  Matrix c(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    b[i] = beta[idx[static_cast<std::size_t>(i)]];
    for (Eigen::Index j = 0; j < m; ++j)
      c(i, j) = cov(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }

  // Exact-fit limit: a vanished covariance block decides the test outright.
  if ((c.array() == 0.0).all()) {
    if ((b.array() == 0.0).all()) return out;
    out.q = std::numeric_limits<double>::infinity();
    out.p_value = 0.0;
    return out;
  }

  Eigen::LDLT<Matrix> ldlt(c);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    fail(ErrorKind::SingularCovariance,
         std::string(who) + ": joint-test covariance block is not positive definite");
  const Vector solved = ldlt.solve(b);
  if (!solved.allFinite() || (c * solved - b).norm() > 1e-8 * (1.0 + b.norm()))
    fail(ErrorKind::SingularCovariance,
         std::string(who) + ": joint-test covariance block is numerically singular");
  out.q = std::max(0.0, b.dot(solved));
  out.p_value = chisq_sf(out.q, out.df);
  return out;
}

}  // namespace

// ============================================================================
// Plot data
// ============================================================================

FunnelAxis funnel_axis_from_name(const std::string& name) {
  if (name == "se") return FunnelAxis::se;
  if (name == "variance") return FunnelAxis::variance;
  if (name == "precision") return FunnelAxis::precision;
  if (name == "inv_variance") return FunnelAxis::inv_variance;
  fail(ErrorKind::UsageError,
       "funnel axis must be one of se, variance, precision, inv_variance; got '" + name + "'");
}

const char* funnel_axis_name(FunnelAxis a) {
  switch (a) {
    case FunnelAxis::se: return "se";
    case FunnelAxis::variance: return "variance";
    case FunnelAxis::precision: return "precision";
    case FunnelAxis::inv_variance: return "inv_variance";
  }
  return "se";
}

FunnelData funnel_data(const MetaDataset& data, FunnelAxis axis,
                       const std::optional<std::vector<double>>& contour_levels) {
  FunnelData out;
  out.axis = axis;
  out.reference_line = pool_fixed(data).mu;

  out.points.reserve(static_cast<std::size_t>(data.k()));
  for (Eigen::Index i = 0; i < data.k(); ++i) {
    const double s = data.ses()[i];
    double av = s;
    switch (axis) {
      case FunnelAxis::se: av = s; break;
      case FunnelAxis::variance: av = s * s; break;
      case FunnelAxis::precision: av = 1.0 / s; break;
      case FunnelAxis::inv_variance: av = 1.0 / (s * s); break;
    }
    out.points.push_back({data.effects()[i], av});
  }

  if (contour_levels) {
    static const std::vector<double> kMilestones{0.10, 0.05, 0.01};
    const std::vector<double>& levels = contour_levels->empty() ? kMilestones : *contour_levels;
    const double lo = data.ses().minCoeff();
    const double hi = data.ses().maxCoeff();
    constexpr int kSamples = 64;
    for (const double level : levels) {
      if (!(level > 0.0 && level < 1.0))
        fail(ErrorKind::DomainError, "funnel_data: contour level must lie strictly inside (0,1)");
      ContourBand band;
      band.level = level;
      band.z = norm_quantile(1.0 - 0.5 * level);
      band.se.reserve(kSamples);
      band.lower.reserve(kSamples);
      band.upper.reserve(kSamples);
      for (int j = 0; j < kSamples; ++j) {
        const double s = lo + (hi - lo) * static_cast<double>(j) / (kSamples - 1);
        band.se.push_back(s);
        band.lower.push_back(-band.z * s);
        band.upper.push_back(band.z * s);
      }
      out.bands.push_back(std::move(band));
    }
  }
  return out;
}

GalbraithData galbraith_data(const MetaDataset& data, double mu) {
  if (!std::isfinite(mu))
    fail(ErrorKind::NonFiniteInput, "galbraith_data: reference mean must be finite");
  GalbraithData out;
  out.points.reserve(static_cast<std::size_t>(data.k()));
  Eigen::Index outside = 0;
  for (Eigen::Index i = 0; i < data.k(); ++i) {
    const double s = data.ses()[i];
    const double z = (data.effects()[i] - mu) / s;
    if (std::fabs(z) > 2.0) ++outside;
    out.points.push_back({1.0 / s, z});
  }
  out.frac_outside = static_cast<double>(outside) / static_cast<double>(data.k());
  return out;
}

// ============================================================================
// Asymmetry regressions
// ============================================================================

const char* bias_severity_name(BiasSeverity s) {
  switch (s) {
    case BiasSeverity::little_to_modest: return "little_to_modest";
    case BiasSeverity::substantial: return "substantial";
    case BiasSeverity::severe: return "severe";
  }
  return "little_to_modest";
}

FatResult egger_fat(const MetaDataset& data) {
  const EggerFit f = egger_core(data, false, "egger_fat");
  const ScaledCoef c0 = read_coef(f.t_route, 0, f.df);
  const ScaledCoef c1 = read_coef(f.t_route, 1, f.df);
  FatResult out;
  out.b0 = c0.est;
  out.b1 = c1.est;
  out.se_b0 = c0.se;
  out.se_b1 = c1.se;
  out.t_b0 = c0.t;
  out.df = f.df;
  out.p_value = c0.p;
  out.severity = severity_of(out.b0, out.p_value);
  return out;
}

BiasCoefTest type2_test(const MetaDataset& data) {
  const EggerFit f = egger_core(data, true, "type2_test");
  const ScaledCoef c0 = read_coef(f.t_route, 0, f.df);
  return {c0.est, c0.se, c0.t, f.df, c0.p};
}

BiasCoefTest pet(const MetaDataset& data) {
  const EggerFit f = egger_core(data, false, "pet");
  const ScaledCoef c1 = read_coef(f.t_route, 1, f.df);
  return {c1.est, c1.se, c1.t, f.df, c1.p};
}

PeeseResult peese(const MetaDataset& data) {
  require_k(data, 3, "peese");
  require_spread(data, "peese");
  const Eigen::Index k = data.k();
  const Vector& s = data.ses();
  const Vector& y = data.effects();

  Matrix x_raw(k, 2);
  x_raw.col(0).setOnes();
  x_raw.col(1) = s.array().square();
  const WlsSolution raw = wls_solve(x_raw, y, data.fixed_weights());

  // Dividing the quadratic model by the standard error removes the intercept:
  // the regressors become the standard error and the precision.
  Matrix x_t(k, 2);
  x_t.col(0) = s;
  x_t.col(1) = s.array().inverse();
  const Vector yt = y.array() / s.array();
  const WlsSolution t_route = ols_solve(x_t, yt);

  check_dual_route(t_route.beta, raw.beta, {1, 0}, "peese");

  const double df = static_cast<double>(k - 2);
  const ScaledCoef c0 = read_coef(t_route, 0, df);
  const ScaledCoef c1 = read_coef(t_route, 1, df);

  PeeseResult out;
  out.lambda0 = c0.est;
  out.lambda1 = c1.est;
  out.se_lambda0 = c0.se;
  out.se_lambda1 = c1.se;
  out.t = c1.t;
  out.df = df;
  out.p_value = c1.p;
  return out;
}

const char* pet_peese_branch_name(PetPeeseBranch b) {
  return b == PetPeeseBranch::peese ? "peese" : "pet";
}

PetPeeseResult pet_peese(const MetaDataset& data, double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0))
    fail(ErrorKind::DomainError, "pet_peese: alpha must lie in [0,1)");
  PetPeeseResult out;
  out.alpha = alpha;
  out.pet_test = pet(data);
  if (out.pet_test.p_value < alpha) {
    out.peese_fit = peese(data);
    out.branch = PetPeeseBranch::peese;
    out.estimate = out.peese_fit->lambda1;
  } else {
    out.branch = PetPeeseBranch::pet;
    out.estimate = out.pet_test.estimate;
  }
  return out;
}

// ============================================================================
// Moderator-augmented asymmetry regression
// ============================================================================

ExtendedBiasFit extended_fat_pet(const MetaDataset& data, const std::vector<std::string>& z_names,
                                 const std::vector<std::string>& k_names, bool peese_variant) {
  const Eigen::Index k = data.k();
  const Eigen::Index nz = static_cast<Eigen::Index>(z_names.size());
  const Eigen::Index nk = static_cast<Eigen::Index>(k_names.size());
  const Eigen::Index q = 2 + nz + nk;
  if (k <= q)
    fail(ErrorKind::TooFewStudies,
         "extended_fat_pet: needs more records than coefficients (" + std::to_string(q) + ")");
  require_spread(data, "extended_fat_pet");

  const Vector& s = data.ses();
  const Vector& y = data.effects();
  const Matrix Z = data.moderator_block(z_names);
  const Matrix K = data.moderator_block(k_names);
  const Vector prec = s.array().inverse();
  const Vector scale = peese_variant ? Vector(s.array().square()) : s;

  // Level form: effect on [1 | Z | scale | K*scale], inverse-variance weights.
  Matrix x_raw(k, q);
  x_raw.col(0).setOnes();
  for (Eigen::Index i = 0; i < nz; ++i) x_raw.col(1 + i) = Z.col(i);
  x_raw.col(1 + nz) = scale;
  for (Eigen::Index j = 0; j < nk; ++j) x_raw.col(2 + nz + j) = K.col(j).cwiseProduct(scale);
  const WlsSolution raw = wls_solve(x_raw, y, data.fixed_weights());

  // Transformed form: everything divided by the standard error.  The
  // selection block becomes constant (or the se itself under the quadratic
  // variant); the effect block rides on the precision.
  const Vector sel = scale.cwiseProduct(prec);
  Matrix x_t(k, q);
  x_t.col(0) = sel;
  for (Eigen::Index j = 0; j < nk; ++j) x_t.col(1 + j) = K.col(j).cwiseProduct(sel);
  x_t.col(1 + nk) = prec;
  for (Eigen::Index i = 0; i < nz; ++i) x_t.col(2 + nk + i) = Z.col(i).cwiseProduct(prec);
  const Vector yt = y.cwiseProduct(prec);
  const WlsSolution t_route = ols_solve(x_t, yt);

  std::vector<Eigen::Index> raw_of_t(static_cast<std::size_t>(q));
  raw_of_t[0] = 1 + nz;
  for (Eigen::Index j = 0; j < nk; ++j) raw_of_t[static_cast<std::size_t>(1 + j)] = 2 + nz + j;
  raw_of_t[static_cast<std::size_t>(1 + nk)] = 0;
  for (Eigen::Index i = 0; i < nz; ++i) raw_of_t[static_cast<std::size_t>(2 + nk + i)] = 1 + i;
  check_dual_route(t_route.beta, raw.beta, raw_of_t, "extended_fat_pet");

  ExtendedBiasFit out;
  out.beta = t_route.beta;
  out.mse = t_route.mse;
  out.cov = t_route.mse * t_route.cov_unscaled;
  out.df = static_cast<double>(k - q);
  out.peese_variant = peese_variant;
  out.k = k;

  out.names.reserve(static_cast<std::size_t>(q));
  out.names.push_back("bias");
  for (const auto& n : k_names) out.names.push_back("bias:" + n);
  out.names.push_back("effect");
  for (const auto& n : z_names) out.names.push_back("effect:" + n);

  std::vector<Eigen::Index> sel_idx;
  for (Eigen::Index j = 0; j <= nk; ++j) sel_idx.push_back(j);
  std::vector<Eigen::Index> mod_idx;
  for (Eigen::Index i = 0; i < nz; ++i) mod_idx.push_back(2 + nk + i);
  out.selection = joint_wald(out.beta, out.cov, sel_idx, "extended_fat_pet");
  out.moderators = joint_wald(out.beta, out.cov, mod_idx, "extended_fat_pet");
  return out;
}

// ============================================================================
// Power-trace and restriction estimators
// ============================================================================

MstResult mst(const MetaDataset& data) {
  std::vector<double> lt, ldf;
  Eigen::Index dropped = 0;
  for (Eigen::Index i = 0; i < data.k(); ++i) {
    const EffectRecord& r = data.record(i);
    const double t_i = r.effect / r.se;
    if (t_i == 0.0) {
      ++dropped;
      continue;
    }
    if (!r.df)
      fail(ErrorKind::MissingDf, "mst: record " + std::to_string(i + 1) + " has no df");
    if (!(*r.df >= 1.0))
      fail(ErrorKind::MissingDf,
           "mst: record " + std::to_string(i + 1) + " needs df >= 1, got " +
               std::to_string(*r.df));
    lt.push_back(std::log(std::fabs(t_i)));
    ldf.push_back(std::log(*r.df));
  }
  if (lt.empty())
    fail(ErrorKind::ZeroTStatistic, "mst: every record has a zero t statistic");
  const Eigen::Index n = static_cast<Eigen::Index>(lt.size());
  if (n < 3)
    fail(ErrorKind::TooFewStudies, "mst: needs at least 3 records with a nonzero t statistic");

  Matrix X(n, 2);
  X.col(0).setOnes();
  X.col(1) = Eigen::Map<Vector>(ldf.data(), n);
  const WlsSolution fit = ols_solve(X, Eigen::Map<Vector>(lt.data(), n));

  const double df_reg = static_cast<double>(n - 2);
  const ScaledCoef c1 = read_coef(fit, 1, df_reg);

  MstResult out;
  out.delta0 = fit.beta[0];
  out.delta1 = c1.est;
  out.se = c1.se;
  out.t = c1.t;
  out.df = df_reg;
  out.dropped = dropped;
  // One-sided alternative: the power trace rises with df.
  if (c1.se == 0.0)
    out.p_value = (out.delta1 > 0.0) ? 0.0 : 1.0;
  else
    out.p_value = t_sf(c1.t, df_reg);
  return out;
}

Top10Result top10(const MetaDataset& data) {
  const Eigen::Index k = data.k();
  const Eigen::Index n = (k + 9) / 10;  // ceil(k / 10)
  std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return data.ses()[a] < data.ses()[b]; });

  Top10Result out;
  out.selected.assign(order.begin(), order.begin() + n);
  std::sort(out.selected.begin(), out.selected.end());
  out.pooled = pool_fixed(data.subset(out.selected));
  return out;
}

WaapResult waap(const MetaDataset& data) {
  WaapResult out;
  double fallback_var = 0.0;
  if (data.k() >= 2) {
    const UwlsResult first = uwls_pool(data);
    out.mu_first_stage = first.estimate[0];
    fallback_var = first.cov(0, 0);
  } else {
    // A single record carries no dispersion information; the first stage
    // degenerates to the record itself.
    const PoolResult p = pool_fixed(data);
    out.mu_first_stage = p.mu;
    fallback_var = p.var;
  }
  out.threshold = std::fabs(out.mu_first_stage) / 2.8;

  for (Eigen::Index i = 0; i < data.k(); ++i)
    if (data.ses()[i] <= out.threshold) out.selected.push_back(i);

  if (!out.selected.empty()) {
    out.pooled = pool_fixed(data.subset(out.selected));
    return out;
  }
  out.inadequate_set = true;
  out.pooled.mu = out.mu_first_stage;
  out.pooled.var = fallback_var;
  out.pooled.weights = data.fixed_weights();
  out.pooled.model = PoolModel::fixed;
  out.pooled.tau2 = 0.0;
  out.pooled.k = data.k();
  return out;
}

}  // namespace metaforge
