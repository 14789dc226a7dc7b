#include "metaforge/multilevel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>

namespace metaforge {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kSearchTol = 1e-8;
constexpr int kEvalBudget = 1000;

Matrix build_design(const ClusteredDataset& data, const std::vector<std::string>& mods) {
  if (mods.empty()) return DesignMatrix::intercept_only(data.k()).values();
  return DesignMatrix::with_intercept(data.flat().moderator_block(mods)).values();
}

void require_rank(const Matrix& X, const char* who) {
  Eigen::ColPivHouseholderQR<Matrix> qr(X);
  qr.setThreshold(1e-12);
  if (qr.rank() < X.cols())
    fail(ErrorKind::RankDeficient, std::string(who) + ": design matrix is rank deficient");
}

struct ProfileContext {
  const ClusteredDataset* data;
  Matrix X;
  Vector y;
  Vector s2;
  FitMethod method;
};

// Gaussian (restricted) log-likelihood with the coefficients profiled out by
// GLS.  Each cluster block diag(S^2 + omega2) + tau2 11' is handled in closed
// form: with a = 1/(S^2 + omega2), the block inverse is diag(a) minus the
// rank-one correction tau2/(1 + tau2 sum a) aa', and the block log-determinant
// is sum log(S^2 + omega2) + log(1 + tau2 sum a).
ThreeLevelProfile eval_profile(const ProfileContext& ctx, double omega2, double tau2) {
  const Eigen::Index q = ctx.X.cols();
  Matrix xtvx = Matrix::Zero(q, q);
  Vector xtvy = Vector::Zero(q);
  double logdet = 0.0;
  for (const Cluster& c : ctx.data->clusters()) {
    double csum = 0.0;
    double ya = 0.0;
    Vector xa = Vector::Zero(q);
    for (const Eigen::Index r : c.rows) {
      const double d = ctx.s2[r] + omega2;
      const double a = 1.0 / d;
      logdet += std::log(d);
      csum += a;
      ya += a * ctx.y[r];
      xa.noalias() += a * ctx.X.row(r).transpose();
      xtvx.noalias() += a * ctx.X.row(r).transpose() * ctx.X.row(r);
      xtvy.noalias() += a * ctx.X.row(r).transpose() * ctx.y[r];
    }
    const double h = 1.0 + tau2 * csum;
    logdet += std::log(h);
    const double f = tau2 / h;
    xtvx.noalias() -= f * xa * xa.transpose();
    xtvy.noalias() -= f * ya * xa;
  }

  Eigen::LDLT<Matrix> ldlt(xtvx);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    fail(ErrorKind::RankDeficient, "three_level_profile: singular weighted normal equations");
  const Vector beta = ldlt.solve(xtvy);

  // Residual quadratic form on a second pass; avoids the cancellation of the
  // y'V^-1 y - beta'X'V^-1 y shortcut near exact fits.
  const Vector resid = ctx.y - ctx.X * beta;
  double rss = 0.0;
  for (const Cluster& c : ctx.data->clusters()) {
    double csum = 0.0;
    double ra = 0.0;
    for (const Eigen::Index r : c.rows) {
      const double a = 1.0 / (ctx.s2[r] + omega2);
      csum += a;
      ra += a * resid[r];
      rss += a * resid[r] * resid[r];
    }
    rss -= tau2 / (1.0 + tau2 * csum) * ra * ra;
  }

  const double k = static_cast<double>(ctx.X.rows());
  ThreeLevelProfile out;
  if (ctx.method == FitMethod::ml) {
    out.loglik = -0.5 * (k * kLog2Pi + logdet + rss);
  } else {
    double ld = 0.0;
    for (Eigen::Index i = 0; i < q; ++i) ld += std::log(ldlt.vectorD()[i]);
    out.loglik = -0.5 * ((k - static_cast<double>(q)) * kLog2Pi + logdet + ld + rss);
  }
  if (!std::isfinite(out.loglik))
    fail(ErrorKind::NumericalError, "three_level_profile: non-finite likelihood");
  out.beta = beta;
  Matrix cov = ldlt.solve(Matrix::Identity(q, q));
  out.cov = 0.5 * (cov + cov.transpose());
  out.weighted_rss = rss;
  return out;
}

struct SearchState {
  const ProfileContext* ctx;
  int used = 0;
  double best_uw = 0.0;
  double best_ut = 0.0;
  double best_f = -std::numeric_limits<double>::infinity();

  bool spent() const { return used >= kEvalBudget; }

  // Components search in u = log1p(theta); expm1 maps u = 0 back to exactly 0.
  // A new best must clear a small margin: along a flat ridge (all clusters
  // singletons, only omega2 + tau2 identified) rounding noise must not drag
  // the incumbent off the tau2 axis.
  double at(double uw, double ut) {
    ++used;
    const double f = eval_profile(*ctx, std::expm1(uw), std::expm1(ut)).loglik;
    if (!std::isfinite(best_f) || f > best_f + 1e-12 * (1.0 + std::fabs(best_f))) {
      best_f = f;
      best_uw = uw;
      best_ut = ut;
    }
    return f;
  }
};

// Coarse scan then golden-section ascent of a one-dimensional slice.
double line_max(const std::function<double(double)>& f, double lo, double hi,
                SearchState& state) {
  constexpr int kScan = 17;
  double best_u = lo;
  double best_f = -std::numeric_limits<double>::infinity();
  int best_i = 0;
  for (int i = 0; i < kScan && !state.spent(); ++i) {
    const double u = lo + (hi - lo) * i / (kScan - 1);
    const double v = f(u);
    if (v > best_f) {
      best_f = v;
      best_u = u;
      best_i = i;
    }
  }
  double a = lo + (hi - lo) * std::max(0, best_i - 1) / (kScan - 1);
  double b = lo + (hi - lo) * std::min(kScan - 1, best_i + 1) / (kScan - 1);
  constexpr double kInvPhi = 0.6180339887498949;
  double x1 = b - kInvPhi * (b - a);
  double x2 = a + kInvPhi * (b - a);
  double f1 = f(x1);
  double f2 = f(x2);
  while (b - a > kSearchTol && !state.spent()) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kInvPhi * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kInvPhi * (b - a);
      f1 = f(x1);
    }
  }
  const double mid = 0.5 * (a + b);
  const double fm = f(mid);
  return fm >= best_f ? mid : best_u;
}

// Nelder-Mead ascent over both components, vertices projected into the box.
// Returns true when it stopped on the spread tolerance rather than budget.
bool polish(SearchState& state, double u_hi, double uw, double ut) {
  using Vertex = std::pair<std::array<double, 2>, double>;
  const auto clip = [u_hi](double v) { return std::min(std::max(v, 0.0), u_hi); };
  const auto make = [&](double w, double t) {
    return Vertex{{clip(w), clip(t)}, state.at(clip(w), clip(t))};
  };
  const double h = std::min(0.1, 0.5 * u_hi);
  std::array<Vertex, 3> v = {make(uw, ut),
                             make(uw + h <= u_hi ? uw + h : uw - h, ut),
                             make(uw, ut + h <= u_hi ? ut + h : ut - h)};
  const auto order = [&] {
    std::sort(v.begin(), v.end(),
              [](const Vertex& a, const Vertex& b) { return a.second > b.second; });
  };
  order();
  for (int it = 0; it < 200 && !state.spent(); ++it) {
    if (v[0].second - v[2].second < kSearchTol) return true;
    const double cw = 0.5 * (v[0].first[0] + v[1].first[0]);
    const double ct = 0.5 * (v[0].first[1] + v[1].first[1]);
    Vertex refl = make(cw + (cw - v[2].first[0]), ct + (ct - v[2].first[1]));
    if (refl.second > v[0].second) {
      Vertex expd = make(cw + 2.0 * (cw - v[2].first[0]), ct + 2.0 * (ct - v[2].first[1]));
      v[2] = expd.second > refl.second ? expd : refl;
    } else if (refl.second > v[1].second) {
      v[2] = refl;
    } else {
      Vertex contr = make(cw + 0.5 * (v[2].first[0] - cw), ct + 0.5 * (v[2].first[1] - ct));
      if (contr.second > v[2].second) {
        v[2] = contr;
      } else {
        for (int i = 1; i < 3; ++i)
          v[static_cast<size_t>(i)] =
              make(0.5 * (v[0].first[0] + v[static_cast<size_t>(i)].first[0]),
                   0.5 * (v[0].first[1] + v[static_cast<size_t>(i)].first[1]));
      }
    }
    order();
  }
  return !state.spent() && v[0].second - v[2].second < kSearchTol;
}

}  // namespace

const char* fit_method_name(FitMethod m) { return m == FitMethod::ml ? "ml" : "reml"; }

FitMethod fit_method_from_name(const std::string& name) {
  if (name == "ml") return FitMethod::ml;
  if (name == "reml") return FitMethod::reml;
  fail(ErrorKind::UsageError, "fit method must be 'ml' or 'reml'; got '" + name + "'");
}

ThreeLevelProfile three_level_profile(const ClusteredDataset& data,
                                      const std::vector<std::string>& mods, FitMethod method,
                                      double omega2, double tau2) {
  if (!(omega2 >= 0.0) || !std::isfinite(omega2) || !(tau2 >= 0.0) || !std::isfinite(tau2))
    fail(ErrorKind::DomainError, "three_level_profile: variance components must be nonnegative");
  ProfileContext ctx{&data, build_design(data, mods), data.flat().effects(),
                     data.flat().variances(), method};
  require_rank(ctx.X, "three_level_profile");
  return eval_profile(ctx, omega2, tau2);
}

ThreeLevelFit fit_three_level(const ClusteredDataset& data, const std::vector<std::string>& mods,
                              FitMethod method, VarianceConstraint constraint) {
  if (data.m() < 2)
    fail(ErrorKind::TooFewClusters, "fit_three_level: needs at least two clusters");
  ProfileContext ctx{&data, build_design(data, mods), data.flat().effects(),
                     data.flat().variances(), method};
  const Eigen::Index q = ctx.X.cols();
  if (data.k() <= q)
    fail(ErrorKind::TooFewStudies, "fit_three_level: needs more effects than coefficients");
  require_rank(ctx.X, "fit_three_level");

  // Search box: neither component can usefully exceed a large multiple of the
  // raw effect variance.
  const double var_y = (ctx.y.array() - ctx.y.mean()).square().sum() /
                       static_cast<double>(std::max<Eigen::Index>(ctx.y.size() - 1, 1));
  const double bound = var_y > 0.0 ? 100.0 * var_y : 1.0;
  const double u_hi = std::log1p(bound);

  SearchState state{&ctx};
  double cur_w = 0.0;
  double cur_t = 0.0;
  double cur_f = state.at(0.0, 0.0);

  // Coordinate ascent, between-cluster component first: when the surface is
  // flat along omega2 + tau2 (every cluster a singleton), this ordering parks
  // the whole heterogeneity estimate in tau2 and leaves omega2 at zero.
  bool coord_done = constraint.omega2_zero && constraint.tau2_zero;
  for (int sweep = 0; sweep < 8 && !coord_done && !state.spent(); ++sweep) {
    const double before = cur_f;
    if (!constraint.tau2_zero)
      cur_t = line_max([&](double u) { return state.at(cur_w, u); }, 0.0, u_hi, state);
    if (!constraint.omega2_zero)
      cur_w = line_max([&](double u) { return state.at(u, cur_t); }, 0.0, u_hi, state);
    cur_f = state.at(cur_w, cur_t);
    if (cur_f - before < kSearchTol) coord_done = true;
  }

  bool polish_done = true;
  if (!constraint.omega2_zero && !constraint.tau2_zero && !state.spent())
    polish_done = polish(state, u_hi, state.best_uw, state.best_ut);

  if (!std::isfinite(state.best_f))
    fail(ErrorKind::NonConvergence, "fit_three_level: likelihood never evaluated finite");

  const double omega2 = constraint.omega2_zero ? 0.0 : std::expm1(state.best_uw);
  const double tau2 = constraint.tau2_zero ? 0.0 : std::expm1(state.best_ut);
  const ThreeLevelProfile at_opt = eval_profile(ctx, omega2, tau2);

  ThreeLevelFit fit;
  fit.beta = at_opt.beta;
  fit.omega2 = omega2;
  fit.tau2 = tau2;
  fit.cov = at_opt.cov;
  fit.loglik = at_opt.loglik;
  fit.method = method;
  fit.converged = coord_done && polish_done;
  fit.constraint = constraint;
  fit.m = data.m();
  fit.k = data.k();
  fit.p = q - 1;
  fit.moderators = mods;
  return fit;
}

BoundaryLrTest lr_variance_test(const ThreeLevelFit& full, const ThreeLevelFit& reduced,
                                VarianceComponentTag component) {
  if (full.method != reduced.method)
    fail(ErrorKind::InvalidComparison, "lr_variance_test: fits use different likelihoods");
  if (full.moderators != reduced.moderators || full.k != reduced.k || full.m != reduced.m)
    fail(ErrorKind::InvalidComparison, "lr_variance_test: fits describe different models");
  const bool on_omega = component == VarianceComponentTag::omega2;
  const bool reduced_pins = on_omega ? reduced.constraint.omega2_zero : reduced.constraint.tau2_zero;
  const bool full_pins = on_omega ? full.constraint.omega2_zero : full.constraint.tau2_zero;
  if (!reduced_pins || full_pins)
    fail(ErrorKind::InvalidComparison,
         "lr_variance_test: reduced fit must pin the tested component at zero");
  const bool other_reduced = on_omega ? reduced.constraint.tau2_zero : reduced.constraint.omega2_zero;
  const bool other_full = on_omega ? full.constraint.tau2_zero : full.constraint.omega2_zero;
  if (other_reduced != other_full)
    fail(ErrorKind::InvalidComparison, "lr_variance_test: fits differ beyond the tested component");

  BoundaryLrTest out;
  double lr = 2.0 * (full.loglik - reduced.loglik);
  if (lr < 0.0) {
    // Nesting bounds the statistic below by zero; anything negative is
    // optimizer noise.
    out.clamped = true;
    lr = 0.0;
  }
  out.lr = lr;
  out.halved_p = 0.5 * chisq_sf(lr, 1.0);
  return out;
}

LevelDecomposition level_decomposition(const ThreeLevelFit& fit, const ClusteredDataset& data,
                                       const std::optional<ThreeLevelFit>& null_fit) {
  if (!fit.converged)
    fail(ErrorKind::NonConvergence, "level_decomposition: fit did not converge");
  if (fit.k != data.k() || fit.m != data.m())
    fail(ErrorKind::InvalidComparison, "level_decomposition: fit does not describe this dataset");

  LevelDecomposition out;
  const double s2 = s2_typical(data.flat());
  const double total = s2 + fit.omega2 + fit.tau2;
  out.i2_level2 = fit.omega2 / total;
  out.i2_level3 = fit.tau2 / total;
  const double het = fit.omega2 + fit.tau2;
  if (het > 0.0) {
    out.icc2 = fit.omega2 / het;
    out.icc3 = fit.tau2 / het;
  }
  if (null_fit) {
    if (null_fit->p != 0)
      fail(ErrorKind::InvalidComparison,
           "level_decomposition: reference fit must be moderator-free");
    if (null_fit->method != fit.method || null_fit->k != fit.k || null_fit->m != fit.m)
      fail(ErrorKind::InvalidComparison, "level_decomposition: reference fit does not match");
    out.r2_level2 = pseudo_r2(null_fit->omega2, fit.omega2);
    out.r2_level3 = pseudo_r2(null_fit->tau2, fit.tau2);
    out.r2_truncated = (null_fit->omega2 > 0.0 && fit.omega2 > null_fit->omega2) ||
                       (null_fit->tau2 > 0.0 && fit.tau2 > null_fit->tau2);
  }
  return out;
}

QTest q_total_three_level(const ClusteredDataset& data) { return cochran_q(data.flat()); }

KhCoefTest three_level_coef_test_kh(const ThreeLevelFit& fit, const ClusteredDataset& data,
                                    Eigen::Index coef_index, double level) {
  if (!(level > 0.0 && level < 1.0))
    fail(ErrorKind::DomainError, "three_level_coef_test_kh: level must lie inside (0,1)");
  if (coef_index < 0 || coef_index >= fit.beta.size())
    fail(ErrorKind::DomainError, "three_level_coef_test_kh: coefficient index out of range");
  if (fit.k != data.k() || fit.m != data.m())
    fail(ErrorKind::InvalidComparison,
         "three_level_coef_test_kh: fit does not describe this dataset");
  const double df = static_cast<double>(fit.m) - 1.0;
  if (df < 1.0)
    fail(ErrorKind::TooFewClusters, "three_level_coef_test_kh: no cluster degrees of freedom");

  const ThreeLevelProfile pr =
      three_level_profile(data, fit.moderators, fit.method, fit.omega2, fit.tau2);
  const double q_scale = std::max(1.0, pr.weighted_rss / df);

  KhCoefTest out;
  out.estimate = pr.beta[coef_index];
  out.se = std::sqrt(q_scale * pr.cov(coef_index, coef_index));
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
