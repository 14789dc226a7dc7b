#pragma once

#include <string>

#include <json.hpp>

#include "metaforge/dataset.hpp"
#include "metaforge/pooling.hpp"
#include "metaforge/pubbias.hpp"

namespace metaforge {

// Insertion-ordered JSON so reports serialize with stable key order.
using Json = nlohmann::ordered_json;

inline constexpr const char* kToolkitName = "metaforge";
inline constexpr const char* kToolkitVersion = "0.1.0";

// 64-bit FNV-1a over raw bytes, as 16 lowercase hex digits.
std::string fnv1a64_hex(const std::string& bytes);

// Numeric statistic leaf: the value wrapped next to the tag naming its
// defining formula.  Every number below results/ must sit inside one of
// these; require_tagged_leaves enforces that shape.
Json tagged(double value, const char* eq);

// Interval as an object of tagged endpoints plus the method label.
Json tagged_interval(const Interval& ci, const char* eq);

// Walks a results subtree and rejects any numeric leaf that is not the
// "value" of a {value, eq} pair (SchemaError).
void require_tagged_leaves(const Json& node);

// Report skeleton shared by every subcommand: tool identity, the digest of
// the input bytes, the configuration echo, and the tagged results tree.
class ReportDocument {
 public:
  ReportDocument(const std::string& command, const std::string& input_digest);

  Json& config() { return root_["config"]; }
  Json& results() { return root_["results"]; }
  const Json& root() const { return root_; }

  // Validates the tagging invariant and serializes.
  std::string to_json() const;

 private:
  Json root_;
};

// Serialization with numbers at 12 significant digits, two-space indent, and
// a trailing newline.  Reserialize(parse(dump(x))) == dump(x), which is the
// byte-stability contract golden tests rely on.  Non-finite numbers have no
// JSON form and raise NumericalError.
std::string dump_json(const Json& j);

// ============================================================================
// Plot data (tab-separated, one header row, numbers at 12 significant digits)
// ============================================================================

// (label, effect, lo, hi, weight_pct): one row per record with a Wald
// interval at the requested level, then the pooled row.  Pooling is
// random-effects with the moment estimate of the between-study variance when
// k >= 2, fixed-effect for a single record; study weights are percentages of
// the pooled total and the pooled row leaves the weight cell empty.
std::string forest_tsv(const MetaDataset& data, double level);

// (effect, axis_value) in input order.
std::string funnel_tsv(const FunnelData& fd);

// Funnel points and significance-band samples in one rectangular table:
// (kind, level, effect, axis_value, lower, upper).  Point rows leave the
// band columns empty; band rows carry their significance level and the
// boundary curves sampled on the observed se range.
std::string contour_tsv(const FunnelData& fd);

// (precision, standardized_effect) in input order.
std::string galbraith_tsv(const GalbraithData& gd);

}  // namespace metaforge
