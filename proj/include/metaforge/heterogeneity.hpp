#pragma once

#include "metaforge/dataset.hpp"

namespace metaforge {

struct QTest {
  double q = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};

// Weighted squared deviation of every effect from the fixed-effect mean,
// referred to chi squared with k-1 degrees of freedom.
QTest cochran_q(const MetaDataset& data);

// Method-of-moments between-study variance, truncated at zero.  The canonical
// denominator sum(w) - sum(w^2)/sum(w) is used; it is strictly positive for
// k >= 2 positive weights.
double tau2_dl(const MetaDataset& data);

// Typical within-study variance: (k-1) sum(w) / ((sum w)^2 - sum(w^2)).
double s2_typical(const MetaDataset& data);

struct HeterogeneityReport {
  double q = 0.0;
  double df = 0.0;
  double p_value = 1.0;
  double tau2 = 0.0;
  double s2_typical = 0.0;
  double i2 = 0.0;      // share of total variation due to heterogeneity, in [0,1)
  double h = 1.0;       // sqrt(Q / (k-1)); >= 1 iff Q >= k-1
  double r_ratio = 1.0; // sqrt(sum fixed weights / sum random weights)
  const char* impact_label = "low";
};

// Full heterogeneity panel.  i2 is computed on two algebraically equivalent
// routes (variance-share and Q-excess) and cross-checked to 1e-10 before
// reporting.
HeterogeneityReport heterogeneity_report(const MetaDataset& data);

const char* i2_impact_label(double i2);

}  // namespace metaforge
