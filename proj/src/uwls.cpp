#include "metaforge/uwls.hpp"

#include <cmath>

namespace metaforge {

UwlsResult uwls_pool(const MetaDataset& data) {
  if (data.k() < 2) fail(ErrorKind::InsufficientStudies, "uwls_pool: needs at least two studies");
  const PoolResult fe = pool_fixed(data);
  const Vector dev = data.effects().array() - fe.mu;
  double s2 =
      (fe.weights.array() * dev.array().square()).sum() / static_cast<double>(data.k() - 1);
  // Identical effects leave rounding residue only; snap it to an exact zero so
  // the degenerate case is unambiguous downstream.
  const bool degenerate = (s2 <= 1e-12);
  if (degenerate) s2 = 0.0;

  UwlsResult out;
  out.estimate = Vector::Constant(1, fe.mu);
  out.cov = Matrix::Constant(1, 1, s2 * fe.var);
  out.s2 = s2;
  out.df = static_cast<double>(data.k() - 1);
  out.degenerate = degenerate;
  out.base_pool = fe;
  out.pooled = true;
  return out;
}

UwlsResult uwls_regress(const MetaDataset& data, const std::vector<std::string>& mods) {
  const RegressionFit fe = fit_fixed(data, mods);
  if (fe.df_res < 1.0)
    fail(ErrorKind::TooFewStudies, "uwls_regress: needs residual degrees of freedom");
  double s2 = fe.q_res / fe.df_res;
  const bool degenerate = (s2 <= 1e-12);
  if (degenerate) s2 = 0.0;

  UwlsResult out;
  out.estimate = fe.beta;
  out.cov = s2 * fe.cov;
  out.s2 = s2;
  out.df = fe.df_res;
  out.degenerate = degenerate;
  out.base_fit = fe;
  out.pooled = false;
  return out;
}

Interval uwls_interval(const UwlsResult& r, Eigen::Index coef_index, double level) {
  if (!(level > 0.0 && level < 1.0))
    fail(ErrorKind::DomainError, "uwls_interval: level must lie inside (0,1)");
  if (coef_index < 0 || coef_index >= r.estimate.size())
    fail(ErrorKind::DomainError, "uwls_interval: coefficient index out of range");
  const double crit = t_quantile(1.0 - 0.5 * (1.0 - level), r.df);
  const double half = crit * std::sqrt(r.cov(coef_index, coef_index));
  return Interval{r.estimate[coef_index] - half, r.estimate[coef_index] + half, level, "uwls_t",
                  r.degenerate};
}

UwlsTest uwls_test(const UwlsResult& r, Eigen::Index coef_index) {
  if (coef_index < 0 || coef_index >= r.estimate.size())
    fail(ErrorKind::DomainError, "uwls_test: coefficient index out of range");
  const double se = std::sqrt(r.cov(coef_index, coef_index));
  UwlsTest out;
  out.df = r.df;
  if (se == 0.0) {
    // Degenerate scale: the statistic is undefined; report a flat non-test.
    out.t = 0.0;
    out.p_value = 1.0;
    return out;
  }
  out.t = r.estimate[coef_index] / se;
  out.p_value = t_two_sided_p(out.t, r.df);
  return out;
}

}  // namespace metaforge
