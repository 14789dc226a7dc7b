#include "metaforge/csv.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <unordered_map>

#include "metaforge/error.hpp"

namespace metaforge {

namespace {

// Column roles recognized by name; everything else is a moderator.
constexpr const char* kSpecialColumns[] = {"effect", "se", "study_id", "n", "df", "t_stat", "z_stat"};

bool is_special(const std::string& name) {
  for (const char* s : kSpecialColumns)
    if (name == s) return true;
  return false;
}

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t')) --e;
  return s.substr(b, e - b);
}

// One physical line into cells.  Double quotes delimit fields that contain
// commas; a doubled quote inside a quoted field is a literal quote; blanks
// may pad a quoted field but any other text around it is an error.  Records
// are line-based, so embedded newlines are not representable.
std::vector<std::string> split_fields(const std::string& line, Eigen::Index row) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;      // currently inside quotes
  bool was_quoted = false;  // this cell had a quoted section
  bool closed = false;      // quoted section ended; only blanks may follow
  auto push = [&] {
    out.push_back(was_quoted ? cell : trim(cell));
    cell.clear();
    was_quoted = false;
    closed = false;
  };
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          quoted = false;
          closed = true;
        }
      } else {
        cell += c;
      }
      continue;
    }
    if (c == ',') {
      push();
      continue;
    }
    if (closed) {
      if (c == ' ' || c == '\t') continue;
      fail(ErrorKind::ParseError,
           "row " + std::to_string(row) + ": text after a closing quote");
    }
    if (c == '"') {
      if (!trim(cell).empty())
        fail(ErrorKind::ParseError,
             "row " + std::to_string(row) + ": quote inside an unquoted field");
      cell.clear();
      quoted = true;
      was_quoted = true;
      continue;
    }
    cell += c;
  }
  if (quoted)
    fail(ErrorKind::ParseError, "row " + std::to_string(row) + ": unterminated quoted field");
  push();
  return out;
}

double parse_number(const std::string& cell, Eigen::Index row, const std::string& column) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    fail(ErrorKind::ParseError, "row " + std::to_string(row) + ", column '" + column +
                                    "': cannot parse '" + cell + "' as a number");
  if (!std::isfinite(v))
    fail(ErrorKind::ValidationError,
         "row " + std::to_string(row) + ", column '" + column + "': non-finite value");
  return v;
}

// Numeric cell that may be absent.
std::optional<double> parse_optional(const std::string& cell, Eigen::Index row,
                                     const std::string& column) {
  if (cell.empty()) return std::nullopt;
  return parse_number(cell, row, column);
}

double require_cell(const std::optional<double>& v, Eigen::Index row, const std::string& column) {
  if (!v)
    fail(ErrorKind::ValidationError,
         "row " + std::to_string(row) + ": missing required value in column '" + column + "'");
  return *v;
}

// Fewest-digits decimal form that parses back to the identical double.
std::string round_trip_number(double v) {
  char buf[64];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    double back = 0.0;
    auto [ptr, ec] = std::from_chars(buf, buf + std::char_traits<char>::length(buf), back);
    (void)ptr;
    if (ec == std::errc() && back == v) break;
  }
  return buf;
}

// Cells containing the delimiter, quotes, or surrounding blanks need quoting
// to survive the parse.
std::string quote_cell(const std::string& cell) {
  bool needs = cell.find_first_of(",\"") != std::string::npos ||
               (!cell.empty() && (cell != trim(cell)));
  if (!needs) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

const char* derive_mode_name(DeriveMode m) {
  switch (m) {
    case DeriveMode::none: return "none";
    case DeriveMode::from_t: return "from_t";
    case DeriveMode::from_z: return "from_z";
  }
  return "none";
}

DeriveMode derive_mode_from_name(const std::string& name) {
  if (name == "none") return DeriveMode::none;
  if (name == "from_t") return DeriveMode::from_t;
  if (name == "from_z") return DeriveMode::from_z;
  fail(ErrorKind::UsageError, "unknown derive mode '" + name + "'");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::ParseError, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) fail(ErrorKind::ParseError, "cannot read '" + path + "'");
  return buf.str();
}

MetaDataset parse_csv(const std::string& text, const CsvOptions& opts) {
  // Byte-order mark tolerated, then line-based records; blank lines are
  // skipped so trailing newlines do not turn into phantom rows.
  std::string body = text;
  if (body.size() >= 3 && body.compare(0, 3, "\xEF\xBB\xBF") == 0) body.erase(0, 3);

  std::vector<std::pair<Eigen::Index, std::string>> lines;  // (file line, content)
  {
    Eigen::Index line_no = 0;
    size_t pos = 0;
    while (pos <= body.size()) {
      size_t nl = body.find('\n', pos);
      std::string line = body.substr(pos, nl == std::string::npos ? nl : nl - pos);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      ++line_no;
      if (!line.empty()) lines.emplace_back(line_no, line);
      if (nl == std::string::npos) break;
      pos = nl + 1;
    }
  }
  if (lines.empty()) fail(ErrorKind::SchemaError, "empty input: header row required");

  const std::vector<std::string> header = split_fields(lines[0].second, lines[0].first);
  std::unordered_map<std::string, size_t> col;
  std::vector<std::string> moderator_names;
  for (size_t c = 0; c < header.size(); ++c) {
    if (header[c].empty())
      fail(ErrorKind::SchemaError, "column " + std::to_string(c + 1) + " has an empty name");
    if (!col.emplace(header[c], c).second)
      fail(ErrorKind::SchemaError, "duplicate column name '" + header[c] + "'");
    if (!is_special(header[c])) moderator_names.push_back(header[c]);
  }

  auto require_column = [&](const char* name) {
    if (!col.count(name))
      fail(ErrorKind::SchemaError, std::string("missing required column '") + name + "'");
  };
  switch (opts.derive) {
    case DeriveMode::none:
      require_column("effect");
      require_column("se");
      break;
    case DeriveMode::from_t:
      require_column("t_stat");
      require_column("df");
      break;
    case DeriveMode::from_z:
      require_column("z_stat");
      require_column("n");
      break;
  }

  auto cell_at = [&](const std::vector<std::string>& cells, const char* name) -> const std::string* {
    auto it = col.find(name);
    if (it == col.end()) return nullptr;
    return &cells[it->second];
  };

  std::vector<EffectRecord> records;
  records.reserve(lines.size() - 1);
  for (size_t li = 1; li < lines.size(); ++li) {
    const Eigen::Index row = lines[li].first;
    const std::vector<std::string> cells = split_fields(lines[li].second, row);
    if (cells.size() != header.size())
      fail(ErrorKind::ParseError, "row " + std::to_string(row) + ": expected " +
                                      std::to_string(header.size()) + " fields, got " +
                                      std::to_string(cells.size()));

    EffectRecord rec;
    if (const std::string* s = cell_at(cells, "study_id")) rec.study_id = *s;
    if (const std::string* s = cell_at(cells, "n")) rec.n = parse_optional(*s, row, "n");
    if (const std::string* s = cell_at(cells, "df")) rec.df = parse_optional(*s, row, "df");

    switch (opts.derive) {
      case DeriveMode::none: {
        rec.effect = require_cell(parse_optional(*cell_at(cells, "effect"), row, "effect"), row,
                                  "effect");
        rec.se = require_cell(parse_optional(*cell_at(cells, "se"), row, "se"), row, "se");
        break;
      }
      case DeriveMode::from_t: {
        double t = require_cell(parse_optional(*cell_at(cells, "t_stat"), row, "t_stat"), row,
                                "t_stat");
        double df = require_cell(rec.df, row, "df");
        if (df <= 0.0)
          fail(ErrorKind::ValidationError,
               "row " + std::to_string(row) + ": df must be positive to derive an effect");
        PartialCorrelation pc = partial_correlation(t, df);
        rec.effect = pc.r;
        rec.se = pc.se;
        break;
      }
      case DeriveMode::from_z: {
        double z = require_cell(parse_optional(*cell_at(cells, "z_stat"), row, "z_stat"), row,
                                "z_stat");
        double n = require_cell(rec.n, row, "n");
        if (n <= 0.0)
          fail(ErrorKind::ValidationError,
               "row " + std::to_string(row) + ": n must be positive to derive an effect");
        rec.effect = partial_correlation_from_z(z, n);
        rec.se = 1.0 / std::sqrt(n);
        break;
      }
    }
    if (rec.se <= 0.0)
      fail(ErrorKind::ValidationError, "row " + std::to_string(row) + ": se must be positive");

    rec.moderators.reserve(moderator_names.size());
    for (const std::string& name : moderator_names) {
      const std::string& cell = cells[col.at(name)];
      std::optional<double> v = parse_optional(cell, row, name);
      rec.moderators.push_back(v ? *v : std::numeric_limits<double>::quiet_NaN());
    }
    records.push_back(std::move(rec));
  }

  return MetaDataset::create(std::move(records), opts.metric, std::move(moderator_names),
                             opts.cluster_column);
}

MetaDataset load_csv(const std::string& path, const CsvOptions& opts) {
  return parse_csv(read_file(path), opts);
}

ClusteredDataset load_csv_clustered(const std::string& path, const CsvOptions& opts) {
  MetaDataset flat = load_csv(path, opts);
  const std::string column = opts.cluster_column.empty() ? "study_id" : opts.cluster_column;
  return ClusteredDataset::group_by(std::move(flat), column);
}

std::string dataset_to_csv(const MetaDataset& data) {
  bool any_study = false, any_n = false, any_df = false;
  for (const EffectRecord& r : data.records()) {
    any_study = any_study || !r.study_id.empty();
    any_n = any_n || r.n.has_value();
    any_df = any_df || r.df.has_value();
  }

  std::string out = "effect,se";
  if (any_study) out += ",study_id";
  if (any_n) out += ",n";
  if (any_df) out += ",df";
  for (const std::string& name : data.moderator_names()) out += "," + quote_cell(name);
  out += '\n';

  for (const EffectRecord& r : data.records()) {
    out += round_trip_number(r.effect);
    out += ',';
    out += round_trip_number(r.se);
    if (any_study) {
      out += ',';
      out += quote_cell(r.study_id);
    }
    if (any_n) {
      out += ',';
      if (r.n) out += round_trip_number(*r.n);
    }
    if (any_df) {
      out += ',';
      if (r.df) out += round_trip_number(*r.df);
    }
    for (double v : r.moderators) {
      out += ',';
      if (std::isfinite(v)) out += round_trip_number(v);
    }
    out += '\n';
  }
  return out;
}

}  // namespace metaforge
