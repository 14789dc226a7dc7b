#include "metaforge/simlab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <utility>

#include "metaforge/heterogeneity.hpp"

namespace metaforge {

namespace {

std::uint64_t splitmix_next(std::uint64_t& s) {
  std::uint64_t z = (s += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a + 0x9E3779B97F4A7C15ull * (b + 1);
  return splitmix_next(s);
}

void validate(const SimScenario& sc, const char* who) {
  const auto bad = [who](const std::string& msg) {
    fail(ErrorKind::DomainError, std::string(who) + ": " + msg);
  };
  if (sc.reps < 1) bad("reps must be at least one");
  if (!std::isfinite(sc.mu)) bad("mu must be finite");
  if (!(sc.tau2 >= 0.0) || !std::isfinite(sc.tau2)) bad("tau2 must be nonnegative");
  if (!(sc.omega2 >= 0.0) || !std::isfinite(sc.omega2)) bad("omega2 must be nonnegative");
  if (sc.m == 0) {
    if (sc.k < 1) bad("k must be at least one");
    if (sc.omega2 > 0.0) bad("omega2 needs a clustered scenario (m > 0)");
  } else {
    if (sc.m < 1 || sc.cluster_size < 1) bad("m and cluster_size must be at least one");
  }
  if (sc.se.law == SeLaw::fixed_list) {
    if (sc.se.values.empty()) bad("fixed se list must not be empty");
    for (const double v : sc.se.values)
      if (!(v > 0.0) || !std::isfinite(v)) bad("fixed se values must be positive and finite");
  } else {
    if (!(sc.se.lo > 0.0) || !(sc.se.hi >= sc.se.lo) || !std::isfinite(sc.se.hi))
      bad("uniform se law needs 0 < lo <= hi");
  }
  if (sc.selection.rule == SelectionRule::one_sided_sig &&
      !(sc.selection.alpha > 0.0 && sc.selection.alpha < 1.0))
    bad("selection alpha must lie inside (0,1)");
}

double draw_se(const SimScenario& sc, std::uint64_t rep, Eigen::Index r, std::uint64_t stream) {
  if (sc.se.law == SeLaw::fixed_list)
    return sc.se.values[static_cast<size_t>(r) % sc.se.values.size()];
  return sc.se.lo + (sc.se.hi - sc.se.lo) * sim_uniform(sc.master_seed, rep, stream);
}

bool survives(const SelectionSpec& sel, double y, double se) {
  switch (sel.rule) {
    case SelectionRule::none:
      return true;
    case SelectionRule::directional:
      return y > 0.0;
    case SelectionRule::one_sided_sig:
      return y / se >= norm_quantile(1.0 - 0.5 * sel.alpha);
  }
  return true;
}

}  // namespace

double sim_uniform(std::uint64_t master_seed, std::uint64_t rep, std::uint64_t stream) {
  std::uint64_t key = mix(mix(master_seed, rep), stream);
  const std::uint64_t bits = splitmix_next(key);
  // 53 high bits, centered: strictly inside (0,1) so quantiles stay finite.
  return (static_cast<double>(bits >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

double sim_normal(std::uint64_t master_seed, std::uint64_t rep, std::uint64_t stream) {
  return norm_quantile(sim_uniform(master_seed, rep, stream));
}

SimDraw simulate_dataset(const SimScenario& sc, std::uint64_t rep_index) {
  validate(sc, "simulate_dataset");
  if (sc.m != 0)
    fail(ErrorKind::DomainError,
         "simulate_dataset: scenario is clustered; use simulate_clustered");
  const double tau = std::sqrt(sc.tau2);
  std::vector<EffectRecord> recs;
  recs.reserve(static_cast<size_t>(sc.k));
  Eigen::Index censored = 0;
  for (Eigen::Index r = 0; r < sc.k; ++r) {
    const std::uint64_t base = 1 + 3 * static_cast<std::uint64_t>(r);
    const double se = draw_se(sc, rep_index, r, base + 2);
    const double y = sc.mu + tau * sim_normal(sc.master_seed, rep_index, base) +
                     se * sim_normal(sc.master_seed, rep_index, base + 1);
    if (!survives(sc.selection, y, se)) {
      ++censored;
      continue;
    }
    EffectRecord rec;
    rec.effect = y;
    rec.se = se;
    rec.study_id = "s" + std::to_string(r);
    recs.push_back(std::move(rec));
  }
  SimDraw out{MetaDataset::create(std::move(recs), Metric::generic), censored,
              sc.mu + tau * sim_normal(sc.master_seed, rep_index, 0)};
  return out;
}

SimClusterDraw simulate_clustered(const SimScenario& sc, std::uint64_t rep_index) {
  validate(sc, "simulate_clustered");
  if (sc.m == 0)
    fail(ErrorKind::DomainError, "simulate_clustered: scenario is flat; use simulate_dataset");
  const double tau = std::sqrt(sc.tau2);
  const double omega = std::sqrt(sc.omega2);
  const std::uint64_t m = static_cast<std::uint64_t>(sc.m);
  std::vector<EffectRecord> recs;
  recs.reserve(static_cast<size_t>(sc.m * sc.cluster_size));
  Eigen::Index censored = 0;
  for (Eigen::Index j = 0; j < sc.m; ++j) {
    const double uj = tau * sim_normal(sc.master_seed, rep_index, 1 + static_cast<std::uint64_t>(j));
    for (Eigen::Index i = 0; i < sc.cluster_size; ++i) {
      const Eigen::Index r = j * sc.cluster_size + i;
      const std::uint64_t base = 1 + m + 3 * static_cast<std::uint64_t>(r);
      const double se = draw_se(sc, rep_index, r, base + 2);
      const double y = sc.mu + uj + omega * sim_normal(sc.master_seed, rep_index, base) +
                       se * sim_normal(sc.master_seed, rep_index, base + 1);
      if (!survives(sc.selection, y, se)) {
        ++censored;
        continue;
      }
      EffectRecord rec;
      rec.effect = y;
      rec.se = se;
      rec.study_id = "s" + std::to_string(j);
      recs.push_back(std::move(rec));
    }
  }
  SimClusterDraw out{
      ClusteredDataset::group_by(MetaDataset::create(std::move(recs), Metric::generic),
                                 "study_id"),
      censored, sc.mu + tau * sim_normal(sc.master_seed, rep_index, 0)};
  return out;
}

const char* coverage_method_name(CoverageMethodKind kind) {
  switch (kind) {
    case CoverageMethodKind::fe_wald:
      return "fe_wald";
    case CoverageMethodKind::re_wald:
      return "re_wald";
    case CoverageMethodKind::hksj:
      return "hksj";
    case CoverageMethodKind::hk_plain:
      return "hk_plain";
    case CoverageMethodKind::prediction:
      return "prediction";
  }
  return "fe_wald";
}

CoverageMethodKind coverage_method_from_name(const std::string& name) {
  if (name == "fe_wald") return CoverageMethodKind::fe_wald;
  if (name == "re_wald") return CoverageMethodKind::re_wald;
  if (name == "hksj") return CoverageMethodKind::hksj;
  if (name == "hk_plain") return CoverageMethodKind::hk_plain;
  if (name == "prediction") return CoverageMethodKind::prediction;
  fail(ErrorKind::UsageError, "unknown coverage method '" + name + "'");
}

int experiment_threads(Eigen::Index reps) {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  long n = static_cast<long>(hw);
  if (const char* env = std::getenv("METAFORGE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) n = std::min<long>(v, 64);
  }
  return static_cast<int>(std::min<long>(n, std::max<Eigen::Index>(reps, 1)));
}

namespace {

struct RepCell {
  double covered = 0.0;
  double width = 0.0;
  double rejected = 0.0;
};

RepCell score(const Interval& ci, double target) {
  RepCell c;
  c.covered = (ci.lo <= target && target <= ci.hi) ? 1.0 : 0.0;
  c.width = ci.hi - ci.lo;
  c.rejected = (ci.lo > 0.0 || ci.hi < 0.0) ? 1.0 : 0.0;
  return c;
}

}  // namespace

std::vector<CoverageRow> coverage_experiment(const SimScenario& sc,
                                             const std::vector<CoverageMethodKind>& methods,
                                             double level) {
  validate(sc, "coverage_experiment");
  if (sc.m != 0)
    fail(ErrorKind::DomainError, "coverage_experiment: flat scenarios only");
  if (methods.empty())
    fail(ErrorKind::DomainError, "coverage_experiment: at least one method required");
  if (!(level > 0.0 && level < 1.0))
    fail(ErrorKind::DomainError, "coverage_experiment: level must lie inside (0,1)");

  const Eigen::Index reps = sc.reps;
  const size_t nm = methods.size();
  std::vector<RepCell> cells(static_cast<size_t>(reps) * nm);

  std::atomic<Eigen::Index> next{0};
  std::mutex error_gate;
  std::exception_ptr first_error = nullptr;

  const auto worker = [&] {
    for (;;) {
      const Eigen::Index rep = next.fetch_add(1);
      if (rep >= reps) return;
      try {
        const SimDraw draw = simulate_dataset(sc, static_cast<std::uint64_t>(rep));
        const PoolResult fe = pool_fixed(draw.data);
        const double t2 = tau2_dl(draw.data);
        const PoolResult re = pool_random(draw.data, t2);
        for (size_t j = 0; j < nm; ++j) {
          RepCell cell;
          switch (methods[j]) {
            case CoverageMethodKind::fe_wald:
              cell = score(ci_standard(fe, level, CiRule::wald_z), sc.mu);
              break;
            case CoverageMethodKind::re_wald:
              cell = score(ci_standard(re, level, CiRule::wald_z), sc.mu);
              break;
            case CoverageMethodKind::hksj:
              cell = score(ci_hksj(draw.data, re, level, true).interval, sc.mu);
              break;
            case CoverageMethodKind::hk_plain:
              cell = score(ci_hksj(draw.data, re, level, false).interval, sc.mu);
              break;
            case CoverageMethodKind::prediction:
              cell = score(prediction_interval(re, t2, level), draw.fresh_true);
              break;
          }
          cells[static_cast<size_t>(rep) * nm + j] = cell;
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_gate);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  const int nthreads = experiment_threads(reps);
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(nthreads));
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  // Merge strictly in replication order so the schedule cannot leak in.
  std::vector<CoverageRow> rows(nm);
  for (size_t j = 0; j < nm; ++j) {
    double cov = 0.0, width = 0.0, rej = 0.0;
    for (Eigen::Index rep = 0; rep < reps; ++rep) {
      const RepCell& c = cells[static_cast<size_t>(rep) * nm + j];
      cov += c.covered;
      width += c.width;
      rej += c.rejected;
    }
    const double n = static_cast<double>(reps);
    rows[j].method = methods[j];
    rows[j].coverage = cov / n;
    rows[j].mc_se = std::sqrt(rows[j].coverage * (1.0 - rows[j].coverage) / n);
    rows[j].mean_width = width / n;
    rows[j].rejection_rate = rej / n;
  }
  return rows;
}

}  // namespace metaforge
