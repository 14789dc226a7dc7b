#pragma once

#include "metaforge/metareg.hpp"
#include "metaforge/pooling.hpp"

namespace metaforge {

// Unrestricted weighted least squares: fixed-effect point estimates with a
// multiplicative variance scale estimated from the weighted residuals.
struct UwlsResult {
  Vector estimate;   // size 1 for pooling
  Matrix cov;        // s2 x fixed-effect covariance
  double s2 = 0.0;   // multiplicative overdispersion
  double df = 0.0;   // k-1 (pool) or k-p-1 (regression)
  bool degenerate = false;  // s2 collapsed to zero
  PoolResult base_pool;     // engaged for uwls_pool
  RegressionFit base_fit;   // engaged for uwls_regress
  bool pooled = true;
};

UwlsResult uwls_pool(const MetaDataset& data);

UwlsResult uwls_regress(const MetaDataset& data, const std::vector<std::string>& mods);

// t-based interval around one coefficient (index 0 for pooling).
Interval uwls_interval(const UwlsResult& r, Eigen::Index coef_index, double level);

// Two-sided t test of one coefficient against zero.
struct UwlsTest {
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};
UwlsTest uwls_test(const UwlsResult& r, Eigen::Index coef_index);

}  // namespace metaforge
