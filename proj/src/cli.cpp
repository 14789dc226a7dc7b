#include "metaforge/cli.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "metaforge/csv.hpp"
#include "metaforge/error.hpp"
#include "metaforge/heterogeneity.hpp"
#include "metaforge/metareg.hpp"
#include "metaforge/multilevel.hpp"
#include "metaforge/pooling.hpp"
#include "metaforge/pubbias.hpp"
#include "metaforge/report.hpp"
#include "metaforge/rve.hpp"
#include "metaforge/simlab.hpp"
#include "metaforge/statkernel.hpp"
#include "metaforge/uwls.hpp"

namespace metaforge {

namespace {

// ----------------------------------------------------------------------------
// Shared option plumbing
// ----------------------------------------------------------------------------

struct CommonOpts {
  std::string input;
  std::string metric = "generic";
  std::string derive = "none";
  double level = 0.95;
  std::string output;
  std::string cluster_col;
  std::string moderators;
  CLI::Option* metric_opt = nullptr;
  CLI::Option* level_opt = nullptr;
};

// Registers the flags every dataset-consuming subcommand shares.  The output
// default names the only format the subcommand produces; asking for the other
// one is a usage error caught in the handler.
void add_common(CLI::App* sub, CommonOpts& o, const std::string& output_default) {
  sub->add_option("--input", o.input, "input CSV file")->required();
  o.metric_opt = sub->add_option("--metric", o.metric, "effect metric: generic|partial_r|fisher_z");
  sub->add_option("--derive", o.derive, "effect derivation: none|from_t|from_z");
  o.level_opt = sub->add_option("--level", o.level, "confidence level (default 0.95)");
  o.output = output_default;
  sub->add_option("--output", o.output, "output format: json|tsv");
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos <= csv.size()) {
    size_t comma = csv.find(',', pos);
    std::string item = csv.substr(pos, comma == std::string::npos ? comma : comma - pos);
    size_t b = item.find_first_not_of(" \t");
    size_t e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

struct LoadedInput {
  std::string digest;
  MetaDataset data;
};

// Reads the file once: the digest covers exactly the bytes that were parsed.
// With a derive mode and no explicit metric, records hold derived partial
// correlations, so that metric is the honest default.
LoadedInput load_input(const CommonOpts& o) {
  CsvOptions opts;
  opts.derive = derive_mode_from_name(o.derive);
  const bool metric_given = o.metric_opt != nullptr && o.metric_opt->count() > 0;
  opts.metric = (!metric_given && opts.derive != DeriveMode::none) ? Metric::partial_r
                                                                   : metric_from_name(o.metric);
  opts.cluster_column = o.cluster_col;
  std::string text = read_file(o.input);
  return {fnv1a64_hex(text), parse_csv(text, opts)};
}

void require_output(const CommonOpts& o, const std::string& format, const char* subcommand) {
  if (o.output != format)
    fail(ErrorKind::UsageError,
         std::string(subcommand) + " emits " + format + "; --output " + o.output +
             " is not available here");
}

void echo_common(ReportDocument& doc, const CommonOpts& o, Metric metric_used) {
  Json& cfg = doc.config();
  cfg["input"] = o.input;
  cfg["metric"] = metric_name(metric_used);
  cfg["derive"] = o.derive;
  cfg["level"] = o.level;
}

void emit(const ReportDocument& doc) { std::cout << doc.to_json(); }

Json coef_block(const std::string& name, const KhCoefTest& test, const char* estimate_eq,
                const char* se_eq, const char* test_eq) {
  Json j;
  j["name"] = name;
  j["estimate"] = tagged(test.estimate, estimate_eq);
  j["se"] = tagged(test.se, se_eq);
  j["t"] = tagged(test.t, test_eq);
  j["df"] = tagged(test.df, test_eq);
  j["p_value"] = tagged(test.p_value, test_eq);
  j["q_scale"] = tagged(test.q_scale, test_eq);
  j["interval"] = tagged_interval(test.interval, test_eq);
  return j;
}

// ----------------------------------------------------------------------------
// Subcommand handlers
// ----------------------------------------------------------------------------

void run_pool(const CommonOpts& o, const std::string& ci) {
  require_output(o, "json", "pool");
  LoadedInput in = load_input(o);
  ReportDocument doc("pool", in.digest);
  echo_common(doc, o, in.data.metric());
  doc.config()["ci"] = ci;

  Json& res = doc.results();
  res["k"] = tagged(static_cast<double>(in.data.k()), "§2");

  const PoolResult fe = pool_fixed(in.data);
  Json& fixed = res["fixed"];
  fixed["mu"] = tagged(fe.mu, "Eq. 3");
  fixed["var"] = tagged(fe.var, "Eq. 3");
  fixed["interval"] = tagged_interval(ci_standard(fe, o.level, CiRule::wald_z), "Eq. 3");

  const double tau2 = tau2_dl(in.data);
  const PoolResult re = pool_random(in.data, tau2);
  const QTest q = cochran_q(in.data);
  Json& random = res["random"];
  random["mu"] = tagged(re.mu, "Eq. 5");
  random["var"] = tagged(re.var, "Eq. 5");
  random["tau2"] = tagged(tau2, "Eq. 6");
  random["q"] = tagged(q.q, "Eq. 7");
  random["q_df"] = tagged(q.df, "Eq. 7");
  random["q_p_value"] = tagged(q.p_value, "Eq. 7");

  if (ci == "wald") {
    random["interval"] = tagged_interval(ci_standard(re, o.level, CiRule::wald_z), "Eq. 5");
  } else if (ci == "t") {
    random["interval"] = tagged_interval(ci_standard(re, o.level, CiRule::t_km1), "Eq. 8");
  } else if (ci == "hksj" || ci == "hksj-mod") {
    const HksjInterval h = ci_hksj(in.data, re, o.level, ci == "hksj-mod");
    random["interval"] = tagged_interval(h.interval, "Eq. 9");
    random["q_scale"] = tagged(h.q_scale, "Eq. 9");
    random["var_scaled"] = tagged(h.var_scaled, "Eq. 9");
  } else {
    fail(ErrorKind::UsageError, "unknown --ci rule '" + ci + "' (wald|t|hksj|hksj-mod)");
  }

  if (in.data.k() >= 3)
    res["prediction_interval"] = tagged_interval(prediction_interval(re, tau2, o.level), "§2");
  emit(doc);
}

void run_hetero(const CommonOpts& o) {
  require_output(o, "json", "hetero");
  LoadedInput in = load_input(o);
  ReportDocument doc("hetero", in.digest);
  echo_common(doc, o, in.data.metric());

  const HeterogeneityReport h = heterogeneity_report(in.data);
  Json& res = doc.results();
  res["k"] = tagged(static_cast<double>(in.data.k()), "§2");
  res["q"] = tagged(h.q, "Eq. 7");
  res["q_df"] = tagged(h.df, "Eq. 7");
  res["q_p_value"] = tagged(h.p_value, "Eq. 7");
  res["tau2"] = tagged(h.tau2, "Eq. 6");
  res["s2_typical"] = tagged(h.s2_typical, "Eq. 11");
  res["i2"] = tagged(h.i2, "Eq. 10");
  res["h"] = tagged(h.h, "§2");
  res["r_ratio"] = tagged(h.r_ratio, "§2");
  res["impact"] = h.impact_label;
  emit(doc);
}

void run_regress(const CommonOpts& o, const std::string& model, const std::string& variance) {
  require_output(o, "json", "regress");
  LoadedInput in = load_input(o);
  const std::vector<std::string> mods = split_list(o.moderators);

  ReportDocument doc("regress", in.digest);
  echo_common(doc, o, in.data.metric());
  doc.config()["model"] = model;
  doc.config()["moderators"] = mods;

  RegressionFit fit;
  const char* beta_eq = nullptr;
  const char* cov_eq = nullptr;
  if (model == "fixed") {
    fit = fit_fixed(in.data, mods);
    beta_eq = "Eq. 14";
    cov_eq = "Eq. 16";
  } else if (model == "mixed") {
    doc.config()["variance"] = variance;
    fit = fit_mixed(in.data, mods, variance_method_from_name(variance));
    beta_eq = "Eq. 18";
    cov_eq = "Eq. 19";
  } else {
    fail(ErrorKind::UsageError, "unknown --model '" + model + "' (fixed|mixed)");
  }

  Json& res = doc.results();
  res["k"] = tagged(static_cast<double>(fit.k), "§3");
  res["p"] = tagged(static_cast<double>(fit.p), "§3");

  // Mixed fits get the scaled-variance t test; fixed-effects inference stays
  // on the plain Wald normal reference.
  Json coefs = Json::array();
  for (Eigen::Index i = 0; i < fit.beta.size(); ++i) {
    const std::string name = i == 0 ? "intercept" : fit.moderators[static_cast<size_t>(i - 1)];
    if (fit.model == RegModel::mixed) {
      coefs.push_back(coef_block(name, coef_test_kh(fit, in.data, mods, i, o.level), beta_eq,
                                 cov_eq, "§3"));
    } else {
      const double se = std::sqrt(fit.cov(i, i));
      const double z = fit.beta[i] / se;
      const double crit = norm_quantile(0.5 + o.level / 2.0);
      Json c;
      c["name"] = name;
      c["estimate"] = tagged(fit.beta[i], beta_eq);
      c["se"] = tagged(se, cov_eq);
      c["z"] = tagged(z, "§3");
      c["p_value"] = tagged(2.0 * norm_sf(std::fabs(z)), "§3");
      Json& ci = c["interval"];
      ci["lo"] = tagged(fit.beta[i] - crit * se, "§3");
      ci["hi"] = tagged(fit.beta[i] + crit * se, "§3");
      ci["level"] = tagged(o.level, "§3");
      ci["method"] = "wald_z";
      coefs.push_back(std::move(c));
    }
  }
  res["coefficients"] = std::move(coefs);

  Json& het = res["residual_heterogeneity"];
  het["tau2_res"] = tagged(fit.tau2_res, "§3");
  het["q_res"] = tagged(fit.q_res, "Eq. 20");
  het["df_res"] = tagged(fit.df_res, "Eq. 20");
  het["p_res"] = tagged(fit.p_res, "Eq. 20");
  het["i2_res"] = tagged(fit.i2_res, "Eq. 21");

  if (!mods.empty()) {
    const WaldTest omnibus = omnibus_test(fit);
    Json& joint = res["omnibus"];
    joint["q"] = tagged(omnibus.q, "§3");
    joint["df"] = tagged(omnibus.df, "§3");
    joint["p_value"] = tagged(omnibus.p_value, "§3");
  }

  if (fit.loglik) res["loglik"] = tagged(*fit.loglik, "§3");
  if (model == "mixed" && !mods.empty()) {
    const double total =
        fit_mixed(in.data, {}, variance_method_from_name(variance)).tau2_res;
    res["r2"] = tagged(pseudo_r2(total, fit.tau2_res), "Eq. 22");
  }
  emit(doc);
}

void append_bias_test(Json& res, const std::string& name, const BiasCoefTest& t, const char* eq) {
  Json& j = res[name];
  j["estimate"] = tagged(t.estimate, eq);
  j["se"] = tagged(t.se, eq);
  j["t"] = tagged(t.t, eq);
  j["df"] = tagged(t.df, eq);
  j["p_value"] = tagged(t.p_value, eq);
}

Json pooled_block(const PoolResult& p, const char* eq) {
  Json j;
  j["mu"] = tagged(p.mu, eq);
  j["var"] = tagged(p.var, eq);
  j["k"] = tagged(static_cast<double>(p.k), eq);
  return j;
}

void run_bias(const CommonOpts& o, const std::string& tests, double alpha,
              const std::string& effect_mods, const std::string& bias_mods, bool peese_variant) {
  require_output(o, "json", "bias");
  LoadedInput in = load_input(o);
  ReportDocument doc("bias", in.digest);
  echo_common(doc, o, in.data.metric());
  doc.config()["tests"] = tests;
  doc.config()["alpha"] = alpha;

  Json& res = doc.results();
  res["k"] = tagged(static_cast<double>(in.data.k()), "§4");

  for (const std::string& name : split_list(tests)) {
    if (name == "fat") {
      const FatResult f = egger_fat(in.data);
      Json& j = res["fat"];
      j["b0"] = tagged(f.b0, "Eq. 24");
      j["b1"] = tagged(f.b1, "Eq. 24");
      j["se_b0"] = tagged(f.se_b0, "Eq. 24");
      j["se_b1"] = tagged(f.se_b1, "Eq. 24");
      j["t_b0"] = tagged(f.t_b0, "Eq. 24");
      j["df"] = tagged(f.df, "Eq. 24");
      j["p_value"] = tagged(f.p_value, "Eq. 24");
      j["severity"] = bias_severity_name(f.severity);
    } else if (name == "type2") {
      append_bias_test(res, "type2", type2_test(in.data), "Eq. 26");
    } else if (name == "pet") {
      append_bias_test(res, "pet", pet(in.data), "Eq. 24");
    } else if (name == "peese") {
      const PeeseResult p = peese(in.data);
      Json& j = res["peese"];
      j["lambda1"] = tagged(p.lambda1, "Eq. 28");
      j["lambda0"] = tagged(p.lambda0, "Eq. 28");
      j["se_lambda1"] = tagged(p.se_lambda1, "Eq. 28");
      j["se_lambda0"] = tagged(p.se_lambda0, "Eq. 28");
      j["t"] = tagged(p.t, "Eq. 28");
      j["df"] = tagged(p.df, "Eq. 28");
      j["p_value"] = tagged(p.p_value, "Eq. 28");
    } else if (name == "pet-peese") {
      const PetPeeseResult pp = pet_peese(in.data, alpha);
      Json& j = res["pet_peese"];
      j["estimate"] = tagged(pp.estimate, "§4");
      j["branch"] = pet_peese_branch_name(pp.branch);
      j["alpha"] = tagged(pp.alpha, "§4");
      Json& stage = j["pet_stage"];
      stage["estimate"] = tagged(pp.pet_test.estimate, "Eq. 24");
      stage["p_value"] = tagged(pp.pet_test.p_value, "Eq. 24");
    } else if (name == "mst") {
      const MstResult m = mst(in.data);
      Json& j = res["mst"];
      j["delta1"] = tagged(m.delta1, "§4");
      j["delta0"] = tagged(m.delta0, "§4");
      j["se"] = tagged(m.se, "§4");
      j["t"] = tagged(m.t, "§4");
      j["df"] = tagged(m.df, "§4");
      j["p_value"] = tagged(m.p_value, "§4");
      j["dropped"] = tagged(static_cast<double>(m.dropped), "§4");
    } else if (name == "top10") {
      const Top10Result t = top10(in.data);
      Json& j = res["top10"];
      j["pooled"] = pooled_block(t.pooled, "§4");
      j["n_selected"] = tagged(static_cast<double>(t.selected.size()), "§4");
    } else if (name == "waap") {
      const WaapResult w = waap(in.data);
      Json& j = res["waap"];
      j["pooled"] = pooled_block(w.pooled, "§4");
      j["n_selected"] = tagged(static_cast<double>(w.selected.size()), "§4");
      j["threshold"] = tagged(w.threshold, "§4");
      j["mu_first_stage"] = tagged(w.mu_first_stage, "§4");
      j["inadequate_set"] = w.inadequate_set;
    } else if (name == "extended") {
      const ExtendedBiasFit e = extended_fat_pet(in.data, split_list(effect_mods),
                                                 split_list(bias_mods), peese_variant);
      Json& j = res["extended"];
      Json coefs = Json::array();
      for (Eigen::Index i = 0; i < e.beta.size(); ++i) {
        Json c;
        c["name"] = e.names[static_cast<size_t>(i)];
        c["estimate"] = tagged(e.beta[i], "Eq. 30");
        c["se"] = tagged(std::sqrt(e.cov(i, i)), "Eq. 30");
        coefs.push_back(std::move(c));
      }
      j["coefficients"] = std::move(coefs);
      j["df"] = tagged(e.df, "Eq. 30");
      Json& sel = j["selection_test"];
      sel["q"] = tagged(e.selection.q, "Eq. 30");
      sel["df"] = tagged(e.selection.df, "Eq. 30");
      sel["p_value"] = tagged(e.selection.p_value, "Eq. 30");
      Json& mod = j["moderator_test"];
      mod["q"] = tagged(e.moderators.q, "Eq. 30");
      mod["df"] = tagged(e.moderators.df, "Eq. 30");
      mod["p_value"] = tagged(e.moderators.p_value, "Eq. 30");
      j["peese_variant"] = e.peese_variant;
    } else {
      fail(ErrorKind::UsageError,
           "unknown bias test '" + name +
               "' (fat|type2|pet|peese|pet-peese|mst|top10|waap|extended)");
    }
  }
  emit(doc);
}

void run_uwls(const CommonOpts& o) {
  require_output(o, "json", "uwls");
  LoadedInput in = load_input(o);
  const std::vector<std::string> mods = split_list(o.moderators);

  ReportDocument doc("uwls", in.digest);
  echo_common(doc, o, in.data.metric());
  doc.config()["moderators"] = mods;

  const UwlsResult r = mods.empty() ? uwls_pool(in.data) : uwls_regress(in.data, mods);
  const char* est_eq = r.pooled ? "Eq. 35" : "Eq. 38";
  const char* var_eq = r.pooled ? "Eq. 36" : "Eq. 39";
  const char* s2_eq = r.pooled ? "Eq. 34" : "Eq. 40";

  Json& res = doc.results();
  res["k"] = tagged(static_cast<double>(in.data.k()), "§5");
  res["s2"] = tagged(r.s2, s2_eq);
  res["df"] = tagged(r.df, "§5");
  res["degenerate"] = r.degenerate;

  Json coefs = Json::array();
  for (Eigen::Index i = 0; i < r.estimate.size(); ++i) {
    const std::string name =
        r.pooled ? "mu" : (i == 0 ? "intercept" : mods[static_cast<size_t>(i - 1)]);
    const UwlsTest t = uwls_test(r, i);
    Json c;
    c["name"] = name;
    c["estimate"] = tagged(r.estimate[i], est_eq);
    c["se"] = tagged(std::sqrt(r.cov(i, i)), var_eq);
    c["t"] = tagged(t.t, "§5");
    c["df"] = tagged(t.df, "§5");
    c["p_value"] = tagged(t.p_value, "§5");
    c["interval"] = tagged_interval(uwls_interval(r, i, o.level), "§5");
    coefs.push_back(std::move(c));
  }
  res["coefficients"] = std::move(coefs);
  emit(doc);
}

void run_rve(const CommonOpts& o, const std::string& working, double rho, bool small_sample) {
  require_output(o, "json", "rve");
  LoadedInput in = load_input(o);
  const std::string column = o.cluster_col.empty() ? "study_id" : o.cluster_col;
  const ClusteredDataset cd = ClusteredDataset::group_by(in.data, column);
  const std::vector<std::string> mods = split_list(o.moderators);

  ReportDocument doc("rve", in.digest);
  echo_common(doc, o, in.data.metric());
  doc.config()["cluster_col"] = column;
  doc.config()["moderators"] = mods;
  doc.config()["working"] = working;
  doc.config()["small_sample"] = small_sample;

  WorkingModel wm;
  if (working == "ce") {
    doc.config()["rho"] = rho;
    wm = working_ce(cd, rho);
  } else if (working == "he") {
    const ThreeLevelFit components = fit_three_level(cd, mods, FitMethod::reml);
    wm = working_he(components.omega2, components.tau2);
    doc.config()["components_converged"] = components.converged;
  } else {
    fail(ErrorKind::UsageError, "unknown --working model '" + working + "' (ce|he)");
  }

  const RveFit fit = rve_fit(cd, mods, wm, small_sample);
  Json& res = doc.results();
  res["m"] = tagged(static_cast<double>(fit.m), "§6.1");
  res["k"] = tagged(static_cast<double>(fit.k), "§6.1");
  res["p"] = tagged(static_cast<double>(fit.p), "§6.1");

  Json& model = res["working_model"];
  model["kind"] = working_model_name(fit.working.kind);
  if (fit.working.kind == WorkingModelKind::correlated_effects) {
    model["rho"] = tagged(fit.working.rho, "Eq. 45");
    model["tau2"] = tagged(fit.working.tau2, "Eq. 46");
  } else {
    model["omega2"] = tagged(fit.working.omega2, "Eq. 48");
    model["tau2"] = tagged(fit.working.tau2, "Eq. 48");
  }

  const char* se_eq = fit.adjusted ? "Eq. 49" : "Eq. 44";
  Json coefs = Json::array();
  for (Eigen::Index i = 0; i < fit.beta.size(); ++i) {
    const std::string name = i == 0 ? "intercept" : fit.moderators[static_cast<size_t>(i - 1)];
    const RveCoefTest t = rve_coef_test(fit, i, o.level);
    Json c;
    c["name"] = name;
    c["estimate"] = tagged(t.estimate, "Eq. 42");
    c["se"] = tagged(t.se, se_eq);
    c["t"] = tagged(t.t, "§6.1");
    c["df"] = tagged(t.df, "§6.1");
    c["p_value"] = tagged(t.p_value, "§6.1");
    c["interval"] = tagged_interval(t.interval, "§6.1");
    coefs.push_back(std::move(c));
  }
  res["coefficients"] = std::move(coefs);
  res["adjusted"] = fit.adjusted;
  res["variance_warning"] = fit.variance_warning;
  emit(doc);
}

void run_mlma(const CommonOpts& o, const std::string& method_name) {
  require_output(o, "json", "mlma");
  LoadedInput in = load_input(o);
  const std::string column = o.cluster_col.empty() ? "study_id" : o.cluster_col;
  const ClusteredDataset cd = ClusteredDataset::group_by(in.data, column);
  const std::vector<std::string> mods = split_list(o.moderators);
  const FitMethod method = fit_method_from_name(method_name);

  ReportDocument doc("mlma", in.digest);
  echo_common(doc, o, in.data.metric());
  doc.config()["cluster_col"] = column;
  doc.config()["moderators"] = mods;
  doc.config()["method"] = method_name;

  const ThreeLevelFit fit = fit_three_level(cd, mods, method);
  const char* beta_eq = mods.empty() ? "Eq. 52" : "Eq. 57";

  Json& res = doc.results();
  res["m"] = tagged(static_cast<double>(fit.m), "§6.2");
  res["k"] = tagged(static_cast<double>(fit.k), "§6.2");
  res["p"] = tagged(static_cast<double>(fit.p), "§6.2");
  res["converged"] = fit.converged;
  res["omega2"] = tagged(fit.omega2, "Eq. 51");
  res["tau2"] = tagged(fit.tau2, "Eq. 51");
  res["loglik"] = tagged(fit.loglik, "§6.2");

  Json coefs = Json::array();
  for (Eigen::Index i = 0; i < fit.beta.size(); ++i) {
    const std::string name = i == 0 ? "intercept" : fit.moderators[static_cast<size_t>(i - 1)];
    coefs.push_back(coef_block(name, three_level_coef_test_kh(fit, cd, i, o.level), beta_eq,
                               beta_eq, "§6.2"));
  }
  res["coefficients"] = std::move(coefs);

  const QTest q = q_total_three_level(cd);
  Json& qt = res["q_total"];
  qt["q"] = tagged(q.q, "Eq. 7");
  qt["df"] = tagged(q.df, "Eq. 7");
  qt["p_value"] = tagged(q.p_value, "Eq. 7");

  // Boundary-halved likelihood-ratio tests of each component against zero.
  Json& lr = res["lr_tests"];
  {
    VarianceConstraint pin;
    pin.omega2_zero = true;
    const BoundaryLrTest t = lr_variance_test(fit, fit_three_level(cd, mods, method, pin),
                                              VarianceComponentTag::omega2);
    Json& j = lr["omega2"];
    j["lr"] = tagged(t.lr, "§6.2");
    j["halved_p"] = tagged(t.halved_p, "§6.2");
    j["clamped"] = t.clamped;
  }
  {
    VarianceConstraint pin;
    pin.tau2_zero = true;
    const BoundaryLrTest t = lr_variance_test(fit, fit_three_level(cd, mods, method, pin),
                                              VarianceComponentTag::tau2);
    Json& j = lr["tau2"];
    j["lr"] = tagged(t.lr, "§6.2");
    j["halved_p"] = tagged(t.halved_p, "§6.2");
    j["clamped"] = t.clamped;
  }

  std::optional<ThreeLevelFit> null_fit;
  if (!mods.empty()) null_fit = fit_three_level(cd, {}, method);
  const LevelDecomposition dec = level_decomposition(fit, cd, null_fit);
  Json& shares = res["heterogeneity_shares"];
  shares["i2_level2"] = tagged(dec.i2_level2, "Eq. 53");
  shares["i2_level3"] = tagged(dec.i2_level3, "Eq. 54");
  if (dec.icc2) shares["icc2"] = tagged(*dec.icc2, "Eq. 55");
  if (dec.icc3) shares["icc3"] = tagged(*dec.icc3, "Eq. 56");
  if (dec.r2_level2) shares["r2_level2"] = tagged(*dec.r2_level2, "Eq. 58");
  if (dec.r2_level3) shares["r2_level3"] = tagged(*dec.r2_level3, "Eq. 59");
  shares["r2_truncated"] = dec.r2_truncated;
  emit(doc);
}

// ----------------------------------------------------------------------------
// Simulation scenario schema
// ----------------------------------------------------------------------------

const Json& scenario_field(const Json& sj, const char* key) { return sj.at(key); }

double scenario_number(const Json& sj, const char* key, double dflt) {
  if (!sj.contains(key)) return dflt;
  const Json& v = scenario_field(sj, key);
  if (!v.is_number()) fail(ErrorKind::SchemaError, std::string("scenario: '") + key + "' must be a number");
  return v.get<double>();
}

Eigen::Index scenario_count(const Json& sj, const char* key, Eigen::Index dflt) {
  if (!sj.contains(key)) return dflt;
  const Json& v = scenario_field(sj, key);
  if (!v.is_number_integer() && !v.is_number_unsigned())
    fail(ErrorKind::SchemaError, std::string("scenario: '") + key + "' must be an integer");
  return static_cast<Eigen::Index>(v.get<std::int64_t>());
}

SimScenario parse_scenario(const Json& sj) {
  static const std::vector<std::string> allowed = {
      "k",  "m",         "cluster_size", "mu",          "tau2",    "omega2",
      "se", "selection", "reps",         "master_seed", "methods", "level"};
  if (!sj.is_object()) fail(ErrorKind::SchemaError, "scenario: top level must be an object");
  for (auto it = sj.begin(); it != sj.end(); ++it)
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      fail(ErrorKind::SchemaError, "scenario: unknown key '" + it.key() + "'");

  SimScenario sc;
  sc.k = scenario_count(sj, "k", sc.k);
  sc.m = scenario_count(sj, "m", sc.m);
  sc.cluster_size = scenario_count(sj, "cluster_size", sc.cluster_size);
  sc.mu = scenario_number(sj, "mu", sc.mu);
  sc.tau2 = scenario_number(sj, "tau2", sc.tau2);
  sc.omega2 = scenario_number(sj, "omega2", sc.omega2);
  sc.reps = scenario_count(sj, "reps", sc.reps);
  if (sj.contains("master_seed")) {
    const Json& v = sj.at("master_seed");
    if (!v.is_number_integer() && !v.is_number_unsigned())
      fail(ErrorKind::SchemaError, "scenario: 'master_seed' must be an integer");
    sc.master_seed = v.get<std::uint64_t>();
  }

  if (sj.contains("se")) {
    const Json& se = sj.at("se");
    if (!se.is_object()) fail(ErrorKind::SchemaError, "scenario: 'se' must be an object");
    const std::string law = se.value("law", "uniform");
    if (law == "fixed") {
      sc.se.law = SeLaw::fixed_list;
      if (!se.contains("values") || !se.at("values").is_array())
        fail(ErrorKind::SchemaError, "scenario: fixed se law needs a 'values' array");
      sc.se.values.clear();
      for (const Json& v : se.at("values")) {
        if (!v.is_number()) fail(ErrorKind::SchemaError, "scenario: se values must be numbers");
        sc.se.values.push_back(v.get<double>());
      }
    } else if (law == "uniform") {
      sc.se.law = SeLaw::uniform;
      sc.se.lo = scenario_number(se, "lo", sc.se.lo);
      sc.se.hi = scenario_number(se, "hi", sc.se.hi);
    } else {
      fail(ErrorKind::SchemaError, "scenario: unknown se law '" + law + "' (fixed|uniform)");
    }
  }

  if (sj.contains("selection")) {
    const Json& sel = sj.at("selection");
    if (!sel.is_object()) fail(ErrorKind::SchemaError, "scenario: 'selection' must be an object");
    const std::string rule = sel.value("rule", "none");
    if (rule == "none")
      sc.selection.rule = SelectionRule::none;
    else if (rule == "one_sided_sig")
      sc.selection.rule = SelectionRule::one_sided_sig;
    else if (rule == "directional")
      sc.selection.rule = SelectionRule::directional;
    else
      fail(ErrorKind::SchemaError,
           "scenario: unknown selection rule '" + rule + "' (none|one_sided_sig|directional)");
    sc.selection.alpha = scenario_number(sel, "alpha", sc.selection.alpha);
  }
  return sc;
}

void run_simulate(const std::string& scenario_path, const std::string& methods_csv,
                  std::optional<Eigen::Index> reps, std::optional<std::uint64_t> seed,
                  std::optional<double> level) {
  const std::string text = read_file(scenario_path);
  const Json sj = Json::parse(text, nullptr, false);
  if (sj.is_discarded()) fail(ErrorKind::ParseError, "scenario file is not valid JSON");

  SimScenario sc = parse_scenario(sj);
  if (reps) sc.reps = *reps;
  if (seed) sc.master_seed = *seed;

  std::vector<CoverageMethodKind> methods;
  if (!methods_csv.empty()) {
    for (const std::string& name : split_list(methods_csv))
      methods.push_back(coverage_method_from_name(name));
  } else if (sj.contains("methods")) {
    if (!sj.at("methods").is_array())
      fail(ErrorKind::SchemaError, "scenario: 'methods' must be an array of names");
    for (const Json& v : sj.at("methods")) {
      if (!v.is_string()) fail(ErrorKind::SchemaError, "scenario: method names must be strings");
      methods.push_back(coverage_method_from_name(v.get<std::string>()));
    }
  } else {
    methods = {CoverageMethodKind::fe_wald, CoverageMethodKind::re_wald,
               CoverageMethodKind::hksj};
  }
  double lvl = 0.95;
  if (sj.contains("level")) lvl = scenario_number(sj, "level", lvl);
  if (level) lvl = *level;

  ReportDocument doc("simulate", fnv1a64_hex(text));
  Json& cfg = doc.config();
  cfg["scenario"] = scenario_path;
  cfg["k"] = static_cast<std::int64_t>(sc.k);
  cfg["m"] = static_cast<std::int64_t>(sc.m);
  cfg["cluster_size"] = static_cast<std::int64_t>(sc.cluster_size);
  cfg["mu"] = sc.mu;
  cfg["tau2"] = sc.tau2;
  cfg["omega2"] = sc.omega2;
  Json se_cfg;
  se_cfg["law"] = sc.se.law == SeLaw::uniform ? "uniform" : "fixed";
  if (sc.se.law == SeLaw::uniform) {
    se_cfg["lo"] = sc.se.lo;
    se_cfg["hi"] = sc.se.hi;
  } else {
    se_cfg["values"] = sc.se.values;
  }
  cfg["se"] = std::move(se_cfg);
  Json sel_cfg;
  sel_cfg["rule"] = sc.selection.rule == SelectionRule::none ? "none"
                    : sc.selection.rule == SelectionRule::one_sided_sig ? "one_sided_sig"
                                                                        : "directional";
  sel_cfg["alpha"] = sc.selection.alpha;
  cfg["selection"] = std::move(sel_cfg);
  cfg["reps"] = static_cast<std::int64_t>(sc.reps);
  cfg["master_seed"] = sc.master_seed;
  Json names = Json::array();
  for (CoverageMethodKind m : methods) names.push_back(coverage_method_name(m));
  cfg["methods"] = std::move(names);
  cfg["level"] = lvl;

  const std::vector<CoverageRow> table = coverage_experiment(sc, methods, lvl);
  Json rows = Json::array();
  for (const CoverageRow& row : table) {
    Json j;
    j["method"] = coverage_method_name(row.method);
    j["coverage"] = tagged(row.coverage, "§2");
    j["mc_se"] = tagged(row.mc_se, "§2");
    j["mean_width"] = tagged(row.mean_width, "§2");
    j["rejection_rate"] = tagged(row.rejection_rate, "§2");
    rows.push_back(std::move(j));
  }
  doc.results()["table"] = std::move(rows);
  emit(doc);
}

void run_plotdata(const CommonOpts& o, const std::string& kind, const std::string& axis) {
  require_output(o, "tsv", "plotdata");
  LoadedInput in = load_input(o);
  if (kind == "forest") {
    std::cout << forest_tsv(in.data, o.level);
  } else if (kind == "funnel") {
    std::cout << funnel_tsv(funnel_data(in.data, funnel_axis_from_name(axis)));
  } else if (kind == "contour") {
    std::cout << contour_tsv(
        funnel_data(in.data, FunnelAxis::se, std::optional<std::vector<double>>(std::in_place)));
  } else if (kind == "galbraith") {
    std::cout << galbraith_tsv(galbraith_data(in.data, pool_fixed(in.data).mu));
  } else {
    fail(ErrorKind::UsageError,
         "unknown --kind '" + kind + "' (forest|funnel|contour|galbraith)");
  }
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"meta-analysis and meta-regression toolkit"};
  app.require_subcommand(1);

  CommonOpts pool_opts;
  std::string pool_ci = "wald";
  CLI::App* pool_cmd = app.add_subcommand("pool", "inverse-variance pooled mean effect");
  add_common(pool_cmd, pool_opts, "json");
  pool_cmd->add_option("--ci", pool_ci, "interval rule: wald|t|hksj|hksj-mod");
  pool_cmd->callback([&] { run_pool(pool_opts, pool_ci); });

  CommonOpts hetero_opts;
  CLI::App* hetero_cmd = app.add_subcommand("hetero", "heterogeneity statistics");
  add_common(hetero_cmd, hetero_opts, "json");
  hetero_cmd->callback([&] { run_hetero(hetero_opts); });

  CommonOpts regress_opts;
  std::string regress_model = "mixed";
  std::string regress_variance = "mm";
  CLI::App* regress_cmd = app.add_subcommand("regress", "weighted meta-regression");
  add_common(regress_cmd, regress_opts, "json");
  regress_cmd->add_option("--moderators", regress_opts.moderators, "comma-separated moderator columns");
  regress_cmd->add_option("--model", regress_model, "effects model: fixed|mixed");
  regress_cmd->add_option("--variance", regress_variance, "between-study variance estimator: mm|ml|reml");
  regress_cmd->callback([&] { run_regress(regress_opts, regress_model, regress_variance); });

  CommonOpts bias_opts;
  std::string bias_tests = "fat,pet,peese,pet-peese";
  std::string bias_effect_mods;
  std::string bias_bias_mods;
  double bias_alpha = 0.05;
  bool bias_peese_variant = false;
  CLI::App* bias_cmd = app.add_subcommand("bias", "publication-bias tests and corrections");
  add_common(bias_cmd, bias_opts, "json");
  bias_cmd->add_option("--tests", bias_tests,
                       "comma-separated: fat|type2|pet|peese|pet-peese|mst|top10|waap|extended");
  bias_cmd->add_option("--alpha", bias_alpha, "branch significance level for pet-peese");
  bias_cmd->add_option("--effect-mods", bias_effect_mods,
                       "extended test: columns shifting the genuine effect");
  bias_cmd->add_option("--bias-mods", bias_bias_mods,
                       "extended test: columns shifting the selection term");
  bias_cmd->add_flag("--peese-variant", bias_peese_variant,
                     "extended test: square the selection regressors");
  bias_cmd->callback([&] {
    run_bias(bias_opts, bias_tests, bias_alpha, bias_effect_mods, bias_bias_mods,
             bias_peese_variant);
  });

  CommonOpts uwls_opts;
  CLI::App* uwls_cmd = app.add_subcommand("uwls", "unrestricted weighted least squares");
  add_common(uwls_cmd, uwls_opts, "json");
  uwls_cmd->add_option("--moderators", uwls_opts.moderators, "comma-separated moderator columns");
  uwls_cmd->callback([&] { run_uwls(uwls_opts); });

  CommonOpts rve_opts;
  std::string rve_working = "ce";
  double rve_rho = 0.8;
  bool rve_small_sample = false;
  CLI::App* rve_cmd = app.add_subcommand("rve", "cluster-robust variance estimation");
  add_common(rve_cmd, rve_opts, "json");
  rve_cmd->add_option("--cluster-col", rve_opts.cluster_col, "grouping column (default study_id)");
  rve_cmd->add_option("--moderators", rve_opts.moderators, "comma-separated moderator columns");
  rve_cmd->add_option("--working", rve_working, "working model: ce|he");
  rve_cmd->add_option("--rho", rve_rho, "assumed within-cluster correlation (ce)");
  rve_cmd->add_flag("--small-sample", rve_small_sample, "residual inflation adjustment");
  rve_cmd->callback([&] { run_rve(rve_opts, rve_working, rve_rho, rve_small_sample); });

  CommonOpts mlma_opts;
  std::string mlma_method = "reml";
  CLI::App* mlma_cmd = app.add_subcommand("mlma", "three-level hierarchical meta-analysis");
  add_common(mlma_cmd, mlma_opts, "json");
  mlma_cmd->add_option("--cluster-col", mlma_opts.cluster_col, "grouping column (default study_id)");
  mlma_cmd->add_option("--moderators", mlma_opts.moderators, "comma-separated moderator columns");
  mlma_cmd->add_option("--method", mlma_method, "estimation: ml|reml");
  mlma_cmd->callback([&] { run_mlma(mlma_opts, mlma_method); });

  std::string sim_scenario;
  std::string sim_methods;
  Eigen::Index sim_reps = -1;
  std::int64_t sim_seed = -1;
  double sim_level = 0.95;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "Monte Carlo coverage experiment");
  sim_cmd->add_option("--scenario", sim_scenario, "scenario JSON file")->required();
  CLI::Option* sim_reps_opt = sim_cmd->add_option("--reps", sim_reps, "replication count override");
  CLI::Option* sim_seed_opt = sim_cmd->add_option("--seed", sim_seed, "master seed override");
  CLI::Option* sim_level_opt = sim_cmd->add_option("--level", sim_level, "confidence level override");
  sim_cmd->add_option("--methods", sim_methods,
                      "comma-separated: fe_wald|re_wald|hksj|hk_plain|prediction");
  sim_cmd->callback([&] {
    std::optional<Eigen::Index> reps;
    std::optional<std::uint64_t> seed;
    std::optional<double> level;
    if (sim_reps_opt->count() > 0) reps = sim_reps;
    if (sim_seed_opt->count() > 0) {
      if (sim_seed < 0) fail(ErrorKind::UsageError, "--seed must be nonnegative");
      seed = static_cast<std::uint64_t>(sim_seed);
    }
    if (sim_level_opt->count() > 0) level = sim_level;
    run_simulate(sim_scenario, sim_methods, reps, seed, level);
  });

  CommonOpts plot_opts;
  std::string plot_kind;
  std::string plot_axis = "se";
  CLI::App* plot_cmd = app.add_subcommand("plotdata", "tab-separated plot inputs");
  add_common(plot_cmd, plot_opts, "tsv");
  plot_cmd->add_option("--kind", plot_kind, "forest|funnel|contour|galbraith")->required();
  plot_cmd->add_option("--axis", plot_axis, "funnel axis: se|variance|precision|inv_variance");
  plot_cmd->callback([&] { run_plotdata(plot_opts, plot_kind, plot_axis); });

  // Render the top-level synopsis up front: after a failed parse CLI11 would
  // report help for whichever subcommand it had descended into.
  const std::string synopsis = app.help();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << synopsis;
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.user_fault() ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace metaforge
