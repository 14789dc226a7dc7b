#pragma once

#include <optional>
#include <string>
#include <vector>

#include "metaforge/statkernel.hpp"

namespace metaforge {

// What the effect column measures.  partial_r and fisher_z get extra domain
// validation; generic passes any finite effect through.
enum class Metric { partial_r, fisher_z, generic };

const char* metric_name(Metric m);
Metric metric_from_name(const std::string& name);

struct EffectRecord {
  double effect = 0.0;
  double se = 0.0;                 // > 0 always
  std::string study_id;            // empty when absent
  std::optional<double> n;         // sample size
  std::optional<double> df;        // degrees of freedom of the primary test
  std::vector<double> moderators;  // aligned with MetaDataset::moderator_names()
};

// Immutable collection of effect records sharing one metric and one moderator
// schema.  All validation happens at construction; downstream code can assume
// finite effects and strictly positive standard errors.
class MetaDataset {
 public:
  static MetaDataset create(std::vector<EffectRecord> records, Metric metric,
                            std::vector<std::string> moderator_names = {},
                            std::string cluster_column = "");

  Eigen::Index k() const noexcept { return static_cast<Eigen::Index>(records_.size()); }
  const std::vector<EffectRecord>& records() const noexcept { return records_; }
  const EffectRecord& record(Eigen::Index i) const { return records_.at(static_cast<size_t>(i)); }
  Metric metric() const noexcept { return metric_; }

  const Vector& effects() const noexcept { return effects_; }
  const Vector& ses() const noexcept { return ses_; }
  Vector variances() const { return ses_.array().square(); }
  Vector fixed_weights() const { return ses_.array().square().inverse(); }

  const std::vector<std::string>& moderator_names() const noexcept { return moderator_names_; }
  bool has_moderator(const std::string& name) const;
  // k-vector of one named moderator; rejects names outside the schema and
  // missing (NaN) cells, which are tolerated at load but not in fits.
  Vector moderator_column(const std::string& name) const;
  // k x |names| block in the order given.
  Matrix moderator_block(const std::vector<std::string>& names) const;

  const std::string& cluster_column() const noexcept { return cluster_column_; }

  // Row indices whose effect fell outside the metric's nominal domain but was
  // accepted (e.g. |r| >= 1 for partial correlations).
  const std::vector<Eigen::Index>& flagged_rows() const noexcept { return flagged_rows_; }

  // New dataset restricted to the given rows (in the given order).
  MetaDataset subset(const std::vector<Eigen::Index>& rows) const;

 private:
  friend class ClusteredDataset;
  MetaDataset() = default;
  std::vector<EffectRecord> records_;
  Metric metric_ = Metric::generic;
  Vector effects_;
  Vector ses_;
  std::vector<std::string> moderator_names_;
  std::string cluster_column_;
  std::vector<Eigen::Index> flagged_rows_;
};

// Grouping of a MetaDataset into clusters (studies contributing several
// estimates each).  Cluster order is first appearance in the flat dataset;
// row indices refer to the flat dataset.
struct Cluster {
  std::string label;
  std::vector<Eigen::Index> rows;
};

class ClusteredDataset {
 public:
  // Groups by study_id when column == "study_id" (or empty with study ids
  // present), otherwise by the named moderator's value.
  static ClusteredDataset group_by(MetaDataset data, const std::string& column);

  const MetaDataset& flat() const noexcept { return flat_; }
  Eigen::Index m() const noexcept { return static_cast<Eigen::Index>(clusters_.size()); }
  Eigen::Index k() const noexcept { return flat_.k(); }
  const std::vector<Cluster>& clusters() const noexcept { return clusters_; }
  const Cluster& cluster(Eigen::Index j) const { return clusters_.at(static_cast<size_t>(j)); }

 private:
  MetaDataset flat_;
  std::vector<Cluster> clusters_;
};

// ============================================================================
// Effect-size construction
// ============================================================================

struct PartialCorrelation {
  double r;
  double se;
};

// Partial correlation and its standard error from a primary-study t statistic
// and its degrees of freedom.
PartialCorrelation partial_correlation(double t_stat, double df);

// Approximate partial correlation recovered from a reported z statistic.
double partial_correlation_from_z(double z_stat, double n);

double fisher_z(double r);          // requires |r| < 1
double fisher_z_inverse(double z);  // tanh
// Variance of a Fisher z transformed partial correlation; p is the number of
// partialled-out covariates.  Requires n - 3 - p > 0.
double fisher_z_variance(double n, double p_covariates);

}  // namespace metaforge
