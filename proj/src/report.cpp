#include "metaforge/report.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>

#include "metaforge/error.hpp"
#include "metaforge/heterogeneity.hpp"
#include "metaforge/statkernel.hpp"

namespace metaforge {

namespace {

std::string fmt12(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

void write_escaped(const std::string& s, std::string& out) {
  out += '"';
  for (unsigned char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (c < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out += static_cast<char>(c);
        }
    }
  }
  out += '"';
}

void write_json(const Json& j, std::string& out, int indent) {
  const std::string pad(static_cast<size_t>(indent), ' ');
  const std::string pad_in(static_cast<size_t>(indent) + 2, ' ');
  switch (j.type()) {
    case Json::value_t::null: out += "null"; break;
    case Json::value_t::boolean: out += j.get<bool>() ? "true" : "false"; break;
    case Json::value_t::string: write_escaped(j.get<std::string>(), out); break;
    case Json::value_t::number_integer:
      out += std::to_string(j.get<std::int64_t>());
      break;
    case Json::value_t::number_unsigned:
      out += std::to_string(j.get<std::uint64_t>());
      break;
    case Json::value_t::number_float: {
      double v = j.get<double>();
      if (!std::isfinite(v))
        fail(ErrorKind::NumericalError, "report contains a non-finite number");
      out += fmt12(v);
      break;
    }
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        break;
      }
      out += "{\n";
      size_t i = 0;
      for (auto it = j.begin(); it != j.end(); ++it, ++i) {
        out += pad_in;
        write_escaped(it.key(), out);
        out += ": ";
        write_json(it.value(), out, indent + 2);
        if (i + 1 < j.size()) out += ',';
        out += '\n';
      }
      out += pad + "}";
      break;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        break;
      }
      out += "[\n";
      for (size_t i = 0; i < j.size(); ++i) {
        out += pad_in;
        write_json(j[i], out, indent + 2);
        if (i + 1 < j.size()) out += ',';
        out += '\n';
      }
      out += pad + "]";
      break;
    }
    default:
      fail(ErrorKind::NumericalError, "report contains an unserializable node");
  }
}

bool is_tagged_leaf(const Json& n) {
  return n.is_object() && n.size() == 2 && n.contains("value") && n.contains("eq") &&
         n["value"].is_number() && n["eq"].is_string();
}

void walk_tagged(const Json& n, const std::string& path) {
  if (n.is_object()) {
    if (is_tagged_leaf(n)) return;
    for (auto it = n.begin(); it != n.end(); ++it) {
      if (it.value().is_number())
        fail(ErrorKind::SchemaError, "untagged numeric leaf at " + path + "/" + it.key());
      walk_tagged(it.value(), path + "/" + it.key());
    }
    return;
  }
  if (n.is_array()) {
    for (size_t i = 0; i < n.size(); ++i) {
      if (n[i].is_number())
        fail(ErrorKind::SchemaError,
             "untagged numeric leaf at " + path + "[" + std::to_string(i) + "]");
      walk_tagged(n[i], path + "[" + std::to_string(i) + "]");
    }
    return;
  }
  if (n.is_number()) fail(ErrorKind::SchemaError, "untagged numeric leaf at " + path);
}

// TSV cells never carry the separators they would corrupt.
std::string tsv_safe(const std::string& s) {
  std::string out = s;
  for (char& c : out)
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  return out;
}

}  // namespace

std::string fnv1a64_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Json tagged(double value, const char* eq) {
  Json j;
  j["value"] = value;
  j["eq"] = eq;
  return j;
}

Json tagged_interval(const Interval& ci, const char* eq) {
  Json j;
  j["lo"] = tagged(ci.lo, eq);
  j["hi"] = tagged(ci.hi, eq);
  j["level"] = tagged(ci.level, eq);
  j["method"] = ci.method;
  j["degenerate"] = ci.degenerate;
  return j;
}

void require_tagged_leaves(const Json& node) { walk_tagged(node, "results"); }

ReportDocument::ReportDocument(const std::string& command, const std::string& input_digest) {
  root_["tool"] = kToolkitName;
  root_["version"] = kToolkitVersion;
  root_["command"] = command;
  root_["input_digest"] = input_digest;
  root_["config"] = Json::object();
  root_["results"] = Json::object();
}

std::string ReportDocument::to_json() const {
  require_tagged_leaves(root_.at("results"));
  return dump_json(root_);
}

std::string dump_json(const Json& j) {
  std::string out;
  write_json(j, out, 0);
  out += '\n';
  return out;
}

std::string forest_tsv(const MetaDataset& data, double level) {
  if (!(level > 0.0 && level < 1.0))
    fail(ErrorKind::DomainError, "forest_tsv: level must be in (0,1)");
  const PoolResult pooled =
      data.k() >= 2 ? pool_random(data, tau2_dl(data)) : pool_fixed(data);
  const double z = norm_quantile(0.5 + level / 2.0);
  const double total = pooled.weights.sum();

  std::string out = "label\teffect\tlo\thi\tweight_pct\n";
  for (Eigen::Index i = 0; i < data.k(); ++i) {
    const EffectRecord& r = data.record(i);
    const std::string label =
        r.study_id.empty() ? "record_" + std::to_string(i + 1) : tsv_safe(r.study_id);
    out += label + '\t' + fmt12(r.effect) + '\t' + fmt12(r.effect - z * r.se) + '\t' +
           fmt12(r.effect + z * r.se) + '\t' + fmt12(100.0 * pooled.weights[i] / total) + '\n';
  }
  const Interval ci = ci_standard(pooled, level, CiRule::wald_z);
  out += "pooled\t" + fmt12(pooled.mu) + '\t' + fmt12(ci.lo) + '\t' + fmt12(ci.hi) + "\t\n";
  return out;
}

std::string funnel_tsv(const FunnelData& fd) {
  std::string out = "effect\taxis_value\n";
  for (const FunnelPoint& p : fd.points)
    out += fmt12(p.effect) + '\t' + fmt12(p.axis_value) + '\n';
  return out;
}

std::string contour_tsv(const FunnelData& fd) {
  std::string out = "kind\tlevel\teffect\taxis_value\tlower\tupper\n";
  for (const FunnelPoint& p : fd.points)
    out += "point\t\t" + fmt12(p.effect) + '\t' + fmt12(p.axis_value) + "\t\t\n";
  for (const ContourBand& b : fd.bands)
    for (size_t i = 0; i < b.se.size(); ++i)
      out += "band\t" + fmt12(b.level) + "\t\t" + fmt12(b.se[i]) + '\t' + fmt12(b.lower[i]) +
             '\t' + fmt12(b.upper[i]) + '\n';
  return out;
}

std::string galbraith_tsv(const GalbraithData& gd) {
  std::string out = "precision\tstandardized_effect\n";
  for (const GalbraithPoint& p : gd.points)
    out += fmt12(p.precision) + '\t' + fmt12(p.standardized) + '\n';
  return out;
}

}  // namespace metaforge
