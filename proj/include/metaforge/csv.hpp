#pragma once

#include <string>

#include "metaforge/dataset.hpp"

namespace metaforge {

// How effect and se are obtained from the file: read directly, recovered
// from a t statistic and its degrees of freedom, or approximated from a z
// statistic and the sample size.
enum class DeriveMode { none, from_t, from_z };

const char* derive_mode_name(DeriveMode m);
DeriveMode derive_mode_from_name(const std::string& name);

struct CsvOptions {
  Metric metric = Metric::generic;
  DeriveMode derive = DeriveMode::none;
  std::string cluster_column;  // recorded on the dataset; grouping happens in load_csv_clustered
};

// Whole file as a byte string; unreadable path raises ParseError.
std::string read_file(const std::string& path);

// Comma-separated text with a mandatory header row.  Required columns are
// `effect` and `se` (or the pair a derive mode computes them from); the
// columns `study_id`, `n`, `df`, `t_stat`, `z_stat` are recognized when
// present; every remaining column is a numeric moderator.  Empty moderator
// cells load as missing and are rejected only when a fit uses that column;
// empty special cells mean absent.  Error rows are reported by file line
// number, counting the header as line 1.
MetaDataset parse_csv(const std::string& text, const CsvOptions& opts = {});

MetaDataset load_csv(const std::string& path, const CsvOptions& opts = {});

// Same loading path, then groups rows by opts.cluster_column ("study_id" or
// a moderator name); an empty option falls back to "study_id".
ClusteredDataset load_csv_clustered(const std::string& path, const CsvOptions& opts = {});

// Dataset back to CSV text that reloads to an identical dataset: numbers are
// printed with the fewest digits that survive a parse round trip, special
// columns appear only when some record carries them, and missing cells stay
// empty.
std::string dataset_to_csv(const MetaDataset& data);

}  // namespace metaforge
