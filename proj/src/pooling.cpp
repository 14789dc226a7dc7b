#include "metaforge/pooling.hpp"

#include <cmath>

namespace metaforge {

namespace {

void check_level(double level) {
  if (!(level > 0.0 && level < 1.0))
    fail(ErrorKind::DomainError, "confidence level must lie strictly inside (0,1)");
}

PoolResult pool_with_weights(const MetaDataset& data, Vector w, PoolModel model, double tau2) {
  const double sum_w = w.sum();
  if (!std::isfinite(sum_w) || sum_w <= 0.0)
    fail(ErrorKind::DegenerateWeights, "pooled weights sum to a non-positive or non-finite value");
  PoolResult out;
  out.mu = w.dot(data.effects()) / sum_w;
  out.var = 1.0 / sum_w;
  out.weights = std::move(w);
  out.model = model;
  out.tau2 = tau2;
  out.k = data.k();
  return out;
}

}  // namespace

PoolResult pool_fixed(const MetaDataset& data) {
  return pool_with_weights(data, data.fixed_weights(), PoolModel::fixed, 0.0);
}

PoolResult pool_random(const MetaDataset& data, double tau2) {
  if (!std::isfinite(tau2)) fail(ErrorKind::NonFiniteInput, "pool_random: tau2 is not finite");
  if (tau2 < 0.0) fail(ErrorKind::NegativeTau2, "pool_random: tau2 must be nonnegative");
  const Vector w = (data.variances().array() + tau2).inverse();
  return pool_with_weights(data, w, PoolModel::random, tau2);
}

Interval ci_standard(const PoolResult& result, double level, CiRule rule) {
  check_level(level);
  const double half_alpha = 0.5 * (1.0 - level);
  double crit = 0.0;
  const char* method = "wald_z";
  switch (rule) {
    case CiRule::wald_z:
      crit = norm_quantile(1.0 - half_alpha);
      method = "wald_z";
      break;
    case CiRule::t_km1:
    case CiRule::t_km2:
    case CiRule::t_km4: {
      const int drop = (rule == CiRule::t_km1) ? 1 : (rule == CiRule::t_km2) ? 2 : 4;
      const double df = static_cast<double>(result.k) - drop;
      if (df < 1.0)
        fail(ErrorKind::InsufficientStudies,
             "t-based interval needs at least " + std::to_string(drop + 1) + " studies");
      crit = t_quantile(1.0 - half_alpha, df);
      method = (drop == 1) ? "t_km1" : (drop == 2) ? "t_km2" : "t_km4";
      break;
    }
  }
  const double half = crit * std::sqrt(result.var);
  return Interval{result.mu - half, result.mu + half, level, method, false};
}

HksjInterval ci_hksj(const MetaDataset& data, const PoolResult& result, double level,
                     bool rover_mod) {
  check_level(level);
  if (result.model != PoolModel::random)
    fail(ErrorKind::DomainError, "ci_hksj: requires a random-effects pool result");
  const Eigen::Index k = result.k;
  if (k < 2) fail(ErrorKind::InsufficientStudies, "ci_hksj: needs at least two studies");
  if (data.k() != k)
    fail(ErrorKind::DimensionMismatch, "ci_hksj: dataset does not match the pool result");

  const Vector dev = data.effects().array() - result.mu;
  double q = (result.weights.array() * dev.array().square()).sum() /
             static_cast<double>(k - 1);
  bool degenerate = false;
  if (rover_mod) {
    q = std::max(1.0, q);
  } else if (q <= 1e-12) {
    // All effects identical up to rounding: the rescaled variance collapses
    // and the interval carries zero width.  Surfaced via the degenerate flag.
    q = 0.0;
    degenerate = true;
  }

  HksjInterval out;
  out.q_scale = q;
  out.var_scaled = q * result.var;
  const double crit = t_quantile(1.0 - 0.5 * (1.0 - level), static_cast<double>(k - 1));
  const double half = crit * std::sqrt(out.var_scaled);
  out.interval = Interval{result.mu - half, result.mu + half, level,
                          rover_mod ? "hksj_mod" : "hksj", degenerate};
  return out;
}

Interval prediction_interval(const PoolResult& result, double tau2, double level) {
  check_level(level);
  if (result.model != PoolModel::random)
    fail(ErrorKind::DomainError, "prediction_interval: requires a random-effects pool result");
  if (!std::isfinite(tau2) || tau2 < 0.0)
    fail(ErrorKind::NegativeTau2, "prediction_interval: tau2 must be nonnegative");
  if (result.k < 3)
    fail(ErrorKind::InsufficientStudies, "prediction_interval: needs at least three studies");
  const double crit = t_quantile(1.0 - 0.5 * (1.0 - level), static_cast<double>(result.k - 2));
  const double half = crit * std::sqrt(result.var + tau2);
  return Interval{result.mu - half, result.mu + half, level, "prediction", false};
}

}  // namespace metaforge
