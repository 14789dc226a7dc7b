#include "metaforge/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace metaforge {

const char* metric_name(Metric m) {
  switch (m) {
    case Metric::partial_r: return "partial_r";
    case Metric::fisher_z: return "fisher_z";
    case Metric::generic: return "generic";
  }
  return "generic";
}

Metric metric_from_name(const std::string& name) {
  if (name == "partial_r") return Metric::partial_r;
  if (name == "fisher_z") return Metric::fisher_z;
  if (name == "generic") return Metric::generic;
  fail(ErrorKind::UsageError, "unknown metric '" + name + "'");
}

MetaDataset MetaDataset::create(std::vector<EffectRecord> records, Metric metric,
                                std::vector<std::string> moderator_names,
                                std::string cluster_column) {
  if (records.empty()) fail(ErrorKind::EmptyDataset, "dataset has no records");
  {
    auto names = moderator_names;
    std::sort(names.begin(), names.end());
    if (std::adjacent_find(names.begin(), names.end()) != names.end())
      fail(ErrorKind::SchemaError, "duplicate moderator name");
  }

  MetaDataset d;
  d.metric_ = metric;
  d.moderator_names_ = std::move(moderator_names);
  d.cluster_column_ = std::move(cluster_column);
  d.effects_.resize(static_cast<Eigen::Index>(records.size()));
  d.ses_.resize(static_cast<Eigen::Index>(records.size()));

  for (size_t i = 0; i < records.size(); ++i) {
    const EffectRecord& r = records[i];
    const std::string row = "record " + std::to_string(i + 1);
    if (!std::isfinite(r.effect))
      fail(ErrorKind::ValidationError, row + ": effect is not finite");
    if (!std::isfinite(r.se) || r.se <= 0.0)
      fail(ErrorKind::ValidationError, row + ": se must be a positive finite number");
    if (r.n && (!std::isfinite(*r.n) || *r.n <= 0.0))
      fail(ErrorKind::ValidationError, row + ": n must be positive when present");
    if (r.df && (!std::isfinite(*r.df) || *r.df < 1.0))
      fail(ErrorKind::ValidationError, row + ": df must be >= 1 when present");
    if (r.moderators.size() != d.moderator_names_.size())
      fail(ErrorKind::DimensionMismatch, row + ": moderator count does not match schema");
    for (double v : r.moderators)
      if (std::isinf(v))
        fail(ErrorKind::ValidationError, row + ": moderator value is infinite");
    // Out-of-domain correlations are kept (downstream transforms reject them)
    // but remembered, so reports can surface the anomaly.
    if (metric == Metric::partial_r && std::abs(r.effect) >= 1.0)
      d.flagged_rows_.push_back(static_cast<Eigen::Index>(i));
    d.effects_[static_cast<Eigen::Index>(i)] = r.effect;
    d.ses_[static_cast<Eigen::Index>(i)] = r.se;
  }
  d.records_ = std::move(records);
  return d;
}

bool MetaDataset::has_moderator(const std::string& name) const {
  return std::find(moderator_names_.begin(), moderator_names_.end(), name) !=
         moderator_names_.end();
}

Vector MetaDataset::moderator_column(const std::string& name) const {
  const auto it = std::find(moderator_names_.begin(), moderator_names_.end(), name);
  if (it == moderator_names_.end())
    fail(ErrorKind::SchemaError, "moderator '" + name + "' is not in the dataset");
  const size_t col = static_cast<size_t>(it - moderator_names_.begin());
  Vector out(k());
  for (Eigen::Index i = 0; i < k(); ++i) {
    const double v = records_[static_cast<size_t>(i)].moderators[col];
    if (std::isnan(v))
      fail(ErrorKind::ValidationError,
           "moderator '" + name + "' has a missing value in record " + std::to_string(i + 1));
    out[i] = v;
  }
  return out;
}

Matrix MetaDataset::moderator_block(const std::vector<std::string>& names) const {
  Matrix block(k(), static_cast<Eigen::Index>(names.size()));
  for (size_t j = 0; j < names.size(); ++j)
    block.col(static_cast<Eigen::Index>(j)) = moderator_column(names[j]);
  return block;
}

MetaDataset MetaDataset::subset(const std::vector<Eigen::Index>& rows) const {
  if (rows.empty()) fail(ErrorKind::EmptyDataset, "subset selects no records");
  std::vector<EffectRecord> sel;
  sel.reserve(rows.size());
  for (Eigen::Index i : rows) {
    if (i < 0 || i >= k()) fail(ErrorKind::DomainError, "subset row index out of range");
    sel.push_back(records_[static_cast<size_t>(i)]);
  }
  return create(std::move(sel), metric_, moderator_names_, cluster_column_);
}

ClusteredDataset ClusteredDataset::group_by(MetaDataset data, const std::string& column) {
  const bool by_study = column.empty() || column == "study_id";

  std::vector<std::string> labels(static_cast<size_t>(data.k()));
  if (by_study) {
    for (Eigen::Index i = 0; i < data.k(); ++i) {
      const std::string& id = data.record(i).study_id;
      if (id.empty())
        fail(ErrorKind::ValidationError,
             "record " + std::to_string(i + 1) + " has no study_id to cluster by");
      labels[static_cast<size_t>(i)] = id;
    }
  } else {
    const Vector col = data.moderator_column(column);
    for (Eigen::Index i = 0; i < data.k(); ++i) {
      std::ostringstream os;
      os << col[i];
      labels[static_cast<size_t>(i)] = os.str();
    }
  }

  ClusteredDataset out;
  std::map<std::string, size_t> seen;
  for (Eigen::Index i = 0; i < data.k(); ++i) {
    const std::string& lab = labels[static_cast<size_t>(i)];
    auto it = seen.find(lab);
    if (it == seen.end()) {
      seen.emplace(lab, out.clusters_.size());
      out.clusters_.push_back({lab, {i}});
    } else {
      out.clusters_[it->second].rows.push_back(i);
    }
  }
  out.flat_ = std::move(data);
  return out;
}

// ============================================================================
// Effect-size construction
// ============================================================================

PartialCorrelation partial_correlation(double t_stat, double df) {
  if (!std::isfinite(t_stat)) fail(ErrorKind::NonFiniteInput, "partial_correlation: t is not finite");
  if (!std::isfinite(df) || df < 1.0)
    fail(ErrorKind::DomainError, "partial_correlation: df must be >= 1");
  const double denom = t_stat * t_stat + df;
  PartialCorrelation out;
  out.r = t_stat / std::sqrt(denom);
  out.se = std::sqrt((1.0 - out.r * out.r) / df);
  return out;
}

double partial_correlation_from_z(double z_stat, double n) {
  if (!std::isfinite(z_stat)) fail(ErrorKind::NonFiniteInput, "partial_correlation_from_z: z is not finite");
  if (!std::isfinite(n) || n <= 0.0)
    fail(ErrorKind::DomainError, "partial_correlation_from_z: n must be positive");
  return z_stat / std::sqrt(n);
}

double fisher_z(double r) {
  if (!std::isfinite(r) || std::abs(r) >= 1.0)
    fail(ErrorKind::DomainError, "fisher_z: requires |r| < 1");
  return std::atanh(r);
}

double fisher_z_inverse(double z) {
  if (!std::isfinite(z)) fail(ErrorKind::NonFiniteInput, "fisher_z_inverse: z is not finite");
  return std::tanh(z);
}

double fisher_z_variance(double n, double p_covariates) {
  if (!std::isfinite(n) || !std::isfinite(p_covariates) || p_covariates < 0.0)
    fail(ErrorKind::DomainError, "fisher_z_variance: bad arguments");
  const double denom = n - 3.0 - p_covariates;
  if (denom <= 0.0)
    fail(ErrorKind::DomainError, "fisher_z_variance: requires n - 3 - p > 0");
  return 1.0 / denom;
}

}  // namespace metaforge
