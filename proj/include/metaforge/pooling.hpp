#pragma once

#include "metaforge/dataset.hpp"

namespace metaforge {

enum class PoolModel { fixed, random };

struct PoolResult {
  double mu = 0.0;      // pooled point estimate
  double var = 0.0;     // 1 / sum of weights
  Vector weights;       // per-record inverse-variance weights actually used
  PoolModel model = PoolModel::fixed;
  double tau2 = 0.0;    // 0 under the fixed model
  Eigen::Index k = 0;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double level = 0.95;
  const char* method = "wald_z";
  bool degenerate = false;  // zero width produced by a degenerate scale
};

// Inverse-variance pooling with weights 1/S_i^2.
PoolResult pool_fixed(const MetaDataset& data);

// Inverse-variance pooling with weights 1/(S_i^2 + tau2).
PoolResult pool_random(const MetaDataset& data, double tau2);

// Degrees-of-freedom rule for the standard interval around the pooled mean.
enum class CiRule { wald_z, t_km1, t_km2, t_km4 };

Interval ci_standard(const PoolResult& result, double level, CiRule rule);

// Weighted-residual rescaling of the random-effects variance with t_{k-1}
// critical values.  With rover_mod the scale q is floored at one, which
// guarantees the interval is never shorter than the plain t_{k-1} interval.
struct HksjInterval {
  Interval interval;
  double q_scale = 0.0;    // after flooring when rover_mod is set
  double var_scaled = 0.0;
};

HksjInterval ci_hksj(const MetaDataset& data, const PoolResult& result, double level,
                     bool rover_mod);

// Range expected to contain the true effect of a fresh study:
// mu +- t_{k-2} * sqrt(var + tau2).
Interval prediction_interval(const PoolResult& result, double tau2, double level);

}  // namespace metaforge
