#include "metaforge/heterogeneity.hpp"

#include <cmath>

#include "metaforge/pooling.hpp"

namespace metaforge {

namespace {

void need_two(const MetaDataset& data, const char* what) {
  if (data.k() < 2)
    fail(ErrorKind::InsufficientStudies, std::string(what) + ": needs at least two studies");
}

}  // namespace

QTest cochran_q(const MetaDataset& data) {
  need_two(data, "cochran_q");
  const PoolResult fe = pool_fixed(data);
  const Vector dev = data.effects().array() - fe.mu;
  QTest out;
  out.q = (fe.weights.array() * dev.array().square()).sum();
  out.df = static_cast<double>(data.k() - 1);
  out.p_value = chisq_sf(out.q, out.df);
  return out;
}

double tau2_dl(const MetaDataset& data) {
  need_two(data, "tau2_dl");
  const Vector w = data.fixed_weights();
  const double sw = w.sum();
  const double sw2 = w.array().square().sum();
  const double denom = sw - sw2 / sw;
  if (!(denom > 0.0) || !std::isfinite(denom))
    fail(ErrorKind::DegenerateWeights, "tau2_dl: weight spread collapsed, denominator not positive");
  const QTest qt = cochran_q(data);
  return std::max(0.0, (qt.q - qt.df) / denom);
}

double s2_typical(const MetaDataset& data) {
  need_two(data, "s2_typical");
  const Vector w = data.fixed_weights();
  const double sw = w.sum();
  const double sw2 = w.array().square().sum();
  const double denom = sw * sw - sw2;
  if (!(denom > 0.0) || !std::isfinite(denom))
    fail(ErrorKind::DegenerateWeights, "s2_typical: weight spread collapsed, denominator not positive");
  return static_cast<double>(data.k() - 1) * sw / denom;
}

const char* i2_impact_label(double i2) {
  // Band edges at 0.25 and 0.75; boundary values take the higher band.
  if (i2 >= 0.75) return "high";
  if (i2 >= 0.25) return "moderate";
  return "low";
}

HeterogeneityReport heterogeneity_report(const MetaDataset& data) {
  const QTest qt = cochran_q(data);
  HeterogeneityReport out;
  out.q = qt.q;
  out.df = qt.df;
  out.p_value = qt.p_value;
  out.tau2 = tau2_dl(data);
  out.s2_typical = s2_typical(data);

  const double i2_share = out.tau2 / (out.s2_typical + out.tau2);
  const double i2_excess = (qt.q > 0.0) ? std::max(0.0, (qt.q - qt.df) / qt.q) : 0.0;
  if (std::abs(i2_share - i2_excess) > 1e-10)
    fail(ErrorKind::NumericalError, "heterogeneity_report: i2 routes disagree beyond 1e-10");
  out.i2 = i2_excess;

  out.h = std::sqrt(qt.q / qt.df);
  const Vector w_fixed = data.fixed_weights();
  const Vector w_random = (data.variances().array() + out.tau2).inverse();
  out.r_ratio = std::sqrt(w_fixed.sum() / w_random.sum());
  out.impact_label = i2_impact_label(out.i2);
  return out;
}

}  // namespace metaforge
