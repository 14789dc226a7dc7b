#include <doctest.h>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "metaforge/csv.hpp"
#include "metaforge/error.hpp"
#include "metaforge/pooling.hpp"
#include "metaforge/pubbias.hpp"
#include "metaforge/report.hpp"

#include "helpers.hpp"

using namespace metaforge;
using mftest::near;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  REQUIRE(false);
  return ErrorKind::UsageError;
}

// Parsed TSV body: rows of cells, header dropped.
std::vector<std::vector<std::string>> tsv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  size_t pos = 0;
  bool header = true;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    std::string line = text.substr(pos, nl - pos);
    pos = (nl == std::string::npos) ? text.size() : nl + 1;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> cells;
    size_t c = 0;
    while (c <= line.size()) {
      size_t tab = line.find('\t', c);
      cells.push_back(line.substr(c, tab == std::string::npos ? tab : tab - c));
      if (tab == std::string::npos) break;
      c = tab + 1;
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

TEST_CASE("csv loading reads the documented schema") {
  const std::string text =
      "\xEF\xBB\xBF"
      "effect,se,study_id,n,df,quality, \"region, coastal\" \r\n"
      "0.2,0.1,alpha,120,118,1,0.5\r\n"
      "\r\n"
      "0.5,0.2,\"beta, replica\",,,0,\n"
      "-0.1,0.05,,88,,1,2.5\n";
  const MetaDataset d = parse_csv(text);

  REQUIRE(d.k() == 3);
  CHECK(d.metric() == Metric::generic);
  CHECK(d.record(0).effect == 0.2);
  CHECK(d.record(0).se == 0.1);
  CHECK(d.record(0).study_id == "alpha");
  REQUIRE(d.record(0).n.has_value());
  CHECK(*d.record(0).n == 120.0);
  REQUIRE(d.record(0).df.has_value());
  CHECK(*d.record(0).df == 118.0);

  // Quoted cells keep their commas; empty special cells mean absent.
  CHECK(d.record(1).study_id == "beta, replica");
  CHECK(!d.record(1).n.has_value());
  CHECK(!d.record(1).df.has_value());
  CHECK(d.record(2).study_id.empty());
  REQUIRE(d.record(2).n.has_value());
  CHECK(*d.record(2).n == 88.0);

  // Unrecognized columns are moderators in file order; empty cells load as
  // missing and only fail once a fit asks for the column.
  REQUIRE(d.moderator_names() == std::vector<std::string>{"quality", "region, coastal"});
  CHECK(d.record(0).moderators == std::vector<double>{1.0, 0.5});
  CHECK(d.record(1).moderators[0] == 0.0);
  CHECK(std::isnan(d.record(1).moderators[1]));
  CHECK_THROWS_AS(d.moderator_column("region, coastal"), Error);
  CHECK(d.moderator_column("quality")[2] == 1.0);
}

TEST_CASE("csv derivations recover effects from reported statistics") {
  SUBCASE("from a t statistic and its degrees of freedom") {
    CsvOptions opts;
    opts.derive = DeriveMode::from_t;
    opts.metric = Metric::partial_r;
    const MetaDataset d = parse_csv("t_stat,df\n2,100\n-1.5,60\n", opts);
    REQUIRE(d.k() == 2);
    CHECK(near(d.record(0).effect, 0.196116, 5e-7));
    const PartialCorrelation pc = partial_correlation(2.0, 100.0);
    CHECK(d.record(0).effect == pc.r);
    CHECK(d.record(0).se == pc.se);
    CHECK(d.record(1).effect < 0.0);
    REQUIRE(d.record(1).df.has_value());
    CHECK(*d.record(1).df == 60.0);

    CHECK(kind_of([] {
            CsvOptions o;
            o.derive = DeriveMode::from_t;
            parse_csv("t_stat,df\n2,\n", o);
          }) == ErrorKind::ValidationError);
    CHECK(kind_of([] {
            CsvOptions o;
            o.derive = DeriveMode::from_t;
            parse_csv("t_stat,df\n2,0\n", o);
          }) == ErrorKind::ValidationError);
    CHECK(kind_of([] {
            CsvOptions o;
            o.derive = DeriveMode::from_t;
            parse_csv("effect,se\n0.2,0.1\n", o);
          }) == ErrorKind::SchemaError);
  }

  SUBCASE("from a z statistic and the sample size") {
    CsvOptions opts;
    opts.derive = DeriveMode::from_z;
    opts.metric = Metric::partial_r;
    const MetaDataset d = parse_csv("z_stat,n\n1.96,100\n", opts);
    CHECK(d.record(0).effect == partial_correlation_from_z(1.96, 100.0));
    CHECK(d.record(0).effect == 0.196);
    CHECK(d.record(0).se == 0.1);
    REQUIRE(d.record(0).n.has_value());

    CHECK(kind_of([] {
            CsvOptions o;
            o.derive = DeriveMode::from_z;
            parse_csv("z_stat,n\n1.96,0\n", o);
          }) == ErrorKind::ValidationError);
  }

  SUBCASE("derive mode names round trip") {
    for (DeriveMode m : {DeriveMode::none, DeriveMode::from_t, DeriveMode::from_z})
      CHECK(derive_mode_from_name(derive_mode_name(m)) == m);
    CHECK(kind_of([] { derive_mode_from_name("from_p"); }) == ErrorKind::UsageError);
  }
}

TEST_CASE("csv parse and validation failures carry row positions") {
  CHECK(kind_of([] { parse_csv(""); }) == ErrorKind::SchemaError);
  CHECK(kind_of([] { parse_csv("effect\n0.2\n"); }) == ErrorKind::SchemaError);
  CHECK(kind_of([] { parse_csv("effect,se,effect\n0.2,0.1,0.3\n"); }) == ErrorKind::SchemaError);
  CHECK(kind_of([] { parse_csv("effect,se,\n0.2,0.1,1\n"); }) == ErrorKind::SchemaError);

  CHECK(kind_of([] { parse_csv("effect,se\n0.2\n"); }) == ErrorKind::ParseError);
  CHECK(kind_of([] { parse_csv("effect,se\nzero,0.1\n"); }) == ErrorKind::ParseError);
  CHECK(kind_of([] { parse_csv("effect,se\n\"0.2,0.1\n"); }) == ErrorKind::ParseError);
  CHECK(kind_of([] { parse_csv("effect,se\n0.2,0.1e\n"); }) == ErrorKind::ParseError);

  CHECK(kind_of([] { parse_csv("effect,se\n0.2,0\n"); }) == ErrorKind::ValidationError);
  CHECK(kind_of([] { parse_csv("effect,se\n0.2,-0.1\n"); }) == ErrorKind::ValidationError);
  CHECK(kind_of([] { parse_csv("effect,se\ninf,0.1\n"); }) == ErrorKind::ValidationError);
  CHECK(kind_of([] { parse_csv("effect,se\nnan,0.1\n"); }) == ErrorKind::ValidationError);
  CHECK(kind_of([] { parse_csv("effect,se\n,0.1\n"); }) == ErrorKind::ValidationError);

  // Failures name the offending file line (header is line 1).
  try {
    parse_csv("effect,se\n0.2,0.1\n0.3,bad\n");
    REQUIRE(false);
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("row 3") != std::string::npos);
    CHECK(std::string(e.what()).find("se") != std::string::npos);
  }
}

TEST_CASE("csv serialization round-trips a dataset exactly") {
  std::vector<EffectRecord> recs(4);
  recs[0].effect = 0.1;
  recs[0].se = 1.0 / 3.0;
  recs[0].study_id = "plain";
  recs[0].n = 120.0;
  recs[0].moderators = {1.0, std::nan("")};
  recs[1].effect = -2.5000000000000004e-3;
  recs[1].se = 0.1 + 1e-17;
  recs[1].study_id = "quote\"and,comma";
  recs[1].df = 57.0;
  recs[1].moderators = {std::nan(""), 2.0 / 7.0};
  recs[2].effect = 1e-300;
  recs[2].se = 12345.678901234567;
  recs[2].moderators = {0.0, -1.0};
  recs[3].effect = 0.3333333333333333;
  recs[3].se = 0.25;
  recs[3].study_id = " padded ";
  recs[3].moderators = {5e-324, 1.7976931348623157e308};
  const MetaDataset original =
      MetaDataset::create(recs, Metric::generic, {"m one", "m,two"});

  const std::string text = dataset_to_csv(original);
  const MetaDataset back = parse_csv(text);

  REQUIRE(back.k() == original.k());
  CHECK(back.moderator_names() == original.moderator_names());
  for (Eigen::Index i = 0; i < original.k(); ++i) {
    const EffectRecord& a = original.record(i);
    const EffectRecord& b = back.record(i);
    CHECK(a.effect == b.effect);
    CHECK(a.se == b.se);
    CHECK(a.study_id == b.study_id);
    CHECK(a.n == b.n);
    CHECK(a.df == b.df);
    REQUIRE(a.moderators.size() == b.moderators.size());
    for (size_t j = 0; j < a.moderators.size(); ++j) {
      if (std::isnan(a.moderators[j]))
        CHECK(std::isnan(b.moderators[j]));
      else
        CHECK(a.moderators[j] == b.moderators[j]);
    }
  }

  // A second pass is byte-stable.
  CHECK(dataset_to_csv(back) == text);
}

TEST_CASE("input digest matches known byte vectors") {
  CHECK(fnv1a64_hex("") == "cbf29ce484222325");
  CHECK(fnv1a64_hex("a") == "af63dc4c8601ec8c");
  CHECK(fnv1a64_hex("foobar") == "85944171f73967e8");
  CHECK(fnv1a64_hex(std::string("\0", 1)) != fnv1a64_hex(""));
}

TEST_CASE("report documents wrap every statistic with its formula tag") {
  ReportDocument doc("pool", "0123456789abcdef");
  doc.config()["input"] = "demo.csv";
  doc.config()["level"] = 0.95;
  doc.results()["mu"] = tagged(0.25, "Eq. 3");
  Json block;
  block["labels"] = Json::array({"a", "b"});
  block["nested"] = tagged(1.5, "Eq. 6");
  block["flag"] = true;
  doc.results()["extra"] = block;

  const std::string out = doc.to_json();
  CHECK(out.find("\"tool\": \"metaforge\"") != std::string::npos);
  CHECK(out.find("\"version\": \"0.1.0\"") != std::string::npos);
  CHECK(out.find("\"input_digest\": \"0123456789abcdef\"") != std::string::npos);
  CHECK(out.rfind("{\n", 0) == 0);
  CHECK(out.back() == '\n');

  SUBCASE("untagged numeric leaves are rejected wherever they hide") {
    Json ok = doc.root()["results"];
    CHECK_NOTHROW(require_tagged_leaves(ok));

    Json bare = ok;
    bare["loose"] = 3.14;
    CHECK(kind_of([&] { require_tagged_leaves(bare); }) == ErrorKind::SchemaError);

    Json in_array = ok;
    in_array["rows"] = Json::array({tagged(1.0, "Eq. 7"), Json(2.0)});
    CHECK(kind_of([&] { require_tagged_leaves(in_array); }) == ErrorKind::SchemaError);

    Json wrong_shape = ok;
    wrong_shape["pair"] = Json{{"value", 1.0}, {"note", "missing tag"}};
    CHECK(kind_of([&] { require_tagged_leaves(wrong_shape); }) == ErrorKind::SchemaError);

    ReportDocument bad("pool", "x");
    bad.results()["mu"] = 0.25;
    CHECK_THROWS_AS(bad.to_json(), Error);
  }
}

TEST_CASE("json serialization uses 12 significant digits and is reparse-stable") {
  CHECK(dump_json(Json(2.0 / 3.0)) == "0.666666666667\n");
  CHECK(dump_json(Json(0.95)) == "0.95\n");
  CHECK(dump_json(Json(1234567890123456.0)) == "1.23456789012e+15\n");
  CHECK(dump_json(Json(-0.0001)) == "-0.0001\n");
  CHECK(dump_json(Json(7)) == "7\n");
  CHECK(dump_json(Json("tab\there\"quote")) == "\"tab\\there\\\"quote\"\n");

  Json doc;
  doc["a"] = tagged(1.0 / 7.0, "Eq. 3");
  doc["b"] = Json::array({Json::object(), Json::array()});
  doc["c"] = nullptr;
  doc["d"] = tagged(6.02214076e23, "Eq. 6");
  const std::string once = dump_json(doc);
  const Json back = Json::parse(once);
  CHECK(dump_json(back) == once);

  CHECK_THROWS_AS(dump_json(Json(std::nan(""))), Error);
  CHECK(kind_of([] { dump_json(Json(INFINITY)); }) == ErrorKind::NumericalError);
}

TEST_CASE("forest rows carry per-record intervals and normalized weights") {
  std::vector<EffectRecord> recs(4);
  const double effects[] = {0.2, 0.5, 0.3, 0.8};
  const double ses[] = {0.1, 0.2, 0.15, 0.4};
  const char* ids[] = {"alpha", "beta", "", "delta"};
  for (int i = 0; i < 4; ++i) {
    recs[i].effect = effects[i];
    recs[i].se = ses[i];
    recs[i].study_id = ids[i];
  }
  const MetaDataset d = MetaDataset::create(recs, Metric::generic);
  const auto rows = tsv_rows(forest_tsv(d, 0.95));

  REQUIRE(rows.size() == 5);
  CHECK(rows[0][0] == "alpha");
  CHECK(rows[2][0] == "record_3");
  CHECK(rows[4][0] == "pooled");
  CHECK(rows[4][4].empty());

  // Record intervals are symmetric Wald bands at the requested level.
  const double z = norm_quantile(0.975);
  for (int i = 0; i < 4; ++i) {
    CHECK(near(std::stod(rows[i][1]), effects[i], 1e-12));
    CHECK(near(std::stod(rows[i][2]), effects[i] - z * ses[i], 1e-10));
    CHECK(near(std::stod(rows[i][3]), effects[i] + z * ses[i], 1e-10));
  }

  double pct = 0.0;
  for (int i = 0; i < 4; ++i) pct += std::stod(rows[i][4]);
  CHECK(near(pct, 100.0, 1e-6));

  // Single record: one study row plus the pooled row, full weight.
  const auto single = tsv_rows(forest_tsv(mftest::make_dataset({0.2}, {0.1}), 0.95));
  REQUIRE(single.size() == 2);
  CHECK(near(std::stod(single[0][4]), 100.0, 1e-12));
  CHECK(single[1][0] == "pooled");
  CHECK(near(std::stod(single[1][1]), 0.2, 1e-12));

  CHECK_THROWS_AS(forest_tsv(d, 1.0), Error);
}

TEST_CASE("scatter emitters mirror the plot data they are handed") {
  const MetaDataset d = mftest::make_dataset({0.2, 0.5, 0.3}, {0.1, 0.2, 0.15});

  SUBCASE("funnel with a precision axis") {
    const auto rows = tsv_rows(funnel_tsv(funnel_data(d, FunnelAxis::precision)));
    REQUIRE(rows.size() == 3);
    CHECK(near(std::stod(rows[0][0]), 0.2, 1e-12));
    CHECK(near(std::stod(rows[0][1]), 10.0, 1e-12));
    // Plot numbers print at 12 significant digits, so allow that much slack.
    CHECK(near(std::stod(rows[2][1]), 1.0 / 0.15, 1e-10));
  }

  SUBCASE("contour appends band rows tagged with their level") {
    const auto rows = tsv_rows(contour_tsv(
        funnel_data(d, FunnelAxis::se, std::optional<std::vector<double>>(std::in_place))));
    size_t points = 0, bands = 0;
    std::vector<std::string> seen_levels;
    for (const auto& r : rows) {
      REQUIRE(r.size() == 6);
      if (r[0] == "point") {
        ++points;
        CHECK(r[1].empty());
        CHECK(r[4].empty());
      } else {
        REQUIRE(r[0] == "band");
        ++bands;
        if (seen_levels.empty() || seen_levels.back() != r[1]) seen_levels.push_back(r[1]);
        // Boundaries are symmetric about zero at every sampled se.
        CHECK(near(std::stod(r[4]) + std::stod(r[5]), 0.0, 1e-12));
      }
    }
    CHECK(points == 3);
    CHECK(bands > 0);
    CHECK(seen_levels == std::vector<std::string>{"0.1", "0.05", "0.01"});
  }

  SUBCASE("galbraith standardizes against the supplied center") {
    const double mu = pool_fixed(d).mu;
    const auto rows = tsv_rows(galbraith_tsv(galbraith_data(d, mu)));
    REQUIRE(rows.size() == 3);
    CHECK(near(std::stod(rows[1][0]), 5.0, 1e-12));
    CHECK(near(std::stod(rows[1][1]), (0.5 - mu) / 0.2, 1e-10));
  }
}
