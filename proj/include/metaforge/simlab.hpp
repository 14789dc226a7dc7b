#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metaforge/dataset.hpp"
#include "metaforge/pooling.hpp"

namespace metaforge {

// ============================================================================
// Scenario description
// ============================================================================

enum class SeLaw { fixed_list, uniform };

struct SeSpec {
  SeLaw law = SeLaw::uniform;
  std::vector<double> values;  // fixed_list: recycled over record index
  double lo = 0.1;             // uniform bounds on the standard error
  double hi = 0.3;
};

enum class SelectionRule { none, one_sided_sig, directional };

struct SelectionSpec {
  SelectionRule rule = SelectionRule::none;
  double alpha = 0.05;  // significance cut for one_sided_sig
};

// Hierarchical normal data-generating process.  m == 0 draws a flat two-level
// sample of k effects; m > 0 draws m clusters of cluster_size effects each,
// with an extra within-cluster variance component omega2.
struct SimScenario {
  Eigen::Index k = 10;
  Eigen::Index m = 0;
  Eigen::Index cluster_size = 1;
  double mu = 0.0;
  double tau2 = 0.0;
  double omega2 = 0.0;  // requires m > 0
  SeSpec se;
  SelectionSpec selection;
  Eigen::Index reps = 1000;
  std::uint64_t master_seed = 0;
};

// ============================================================================
// Counter-based randomness
// ============================================================================
// Every random quantity lives on its own (master_seed, rep, stream) channel,
// so draws are reproducible under any evaluation order or thread schedule.
// Stream layout per replication:
//   0                      fresh true effect (prediction-interval target)
//   1 .. m                 cluster effects
//   1 + m + 3r + {0,1,2}   record r: heterogeneity draw, sampling error, se

double sim_uniform(std::uint64_t master_seed, std::uint64_t rep, std::uint64_t stream);
double sim_normal(std::uint64_t master_seed, std::uint64_t rep, std::uint64_t stream);

struct SimDraw {
  MetaDataset data;
  Eigen::Index censored = 0;  // records removed by the selection rule
  double fresh_true = 0.0;    // one further true effect from the same process
};

// Flat scenario draw (m == 0).
SimDraw simulate_dataset(const SimScenario& sc, std::uint64_t rep_index);

struct SimClusterDraw {
  ClusteredDataset data;
  Eigen::Index censored = 0;
  double fresh_true = 0.0;
};

// Clustered scenario draw (m > 0).
SimClusterDraw simulate_clustered(const SimScenario& sc, std::uint64_t rep_index);

// ============================================================================
// Coverage experiment
// ============================================================================

enum class CoverageMethodKind {
  fe_wald,     // fixed-effect pooling, normal interval
  re_wald,     // moment-estimated random effects, normal interval
  hksj,        // weighted-residual rescaling, floored, t_{k-1}
  hk_plain,    // same without the floor
  prediction,  // predictive range, judged against the fresh true effect
};

const char* coverage_method_name(CoverageMethodKind kind);
CoverageMethodKind coverage_method_from_name(const std::string& name);

struct CoverageRow {
  CoverageMethodKind method;
  double coverage = 0.0;        // share of replications containing the target
  double mc_se = 0.0;           // binomial Monte Carlo error of that share
  double mean_width = 0.0;
  double rejection_rate = 0.0;  // share of replications excluding zero
};

// Runs the scenario reps times and scores each method's interval.  Work is
// split across threads (METAFORGE_THREADS caps the pool) but replications
// merge in index order, so results do not depend on the schedule.
std::vector<CoverageRow> coverage_experiment(const SimScenario& sc,
                                             const std::vector<CoverageMethodKind>& methods,
                                             double level = 0.95);

// Thread-pool size used by experiments: the hardware default, overridden by
// METAFORGE_THREADS when set, never more than reps.
int experiment_threads(Eigen::Index reps);

}  // namespace metaforge
