#pragma once

#include <functional>
#include <optional>
#include <set>

#include "mrpack/cost.hpp"
#include "mrpack/rrs.hpp"
#include "mrpack/transforms.hpp"

namespace mrpack {

enum class Phase { Vertical, Horizontal };

std::string phase_name(Phase p);

struct OptimizationUnit {
  std::vector<JobId> producers;  // concurrently runnable
  std::vector<JobId> consumers;  // all direct consumers of the producers' outputs
  Phase phase = Phase::Vertical;
};

// Traversal state for dynamic unit generation; rebuilt from the covered set
// against the current (possibly rewritten) plan after every commit.
struct UnitCursor {
  std::set<JobId> covered;  // jobs that already led a unit as producers
};

std::optional<OptimizationUnit> next_optimization_unit(const Plan& plan, UnitCursor& cursor, Phase phase);

struct Subplan {
  Plan basePlan;
  std::vector<std::string> applied;  // transform signatures, in application order
  Plan resultPlan;

  std::string signature() const;
};

// Exhaustive closure of the unit's non-configuration transformations,
// restricted to the unit's jobs: identity first, duplicates removed, then
// lexicographic by applied-transform signature. At most one partition-function
// respec per subplan (pruning composes freely).
std::vector<Subplan> enumerate_subplans(const Plan& plan, const OptimizationUnit& unit);

struct SubplanReport {
  std::string sig;  // empty for identity
  double cost = 0;
  int jobCount = 0;
  std::map<JobId, Configuration> configs;
};

struct UnitReport {
  int index = 0;
  Phase phase = Phase::Vertical;
  std::vector<JobId> producers, consumers;
  std::vector<SubplanReport> subplans;
  int chosen = 0;
  bool usedFallback = false;
};

struct OptimizationReport {
  CostModel model = CostModel::Analytical;
  uint64_t seed = 0;
  int jobsBefore = 0, jobsAfter = 0;
  double costBefore = 0, costAfter = 0;
  std::vector<UnitReport> units;
  std::vector<std::string> appliedSequence;  // full replay script (transforms + configurations)

  std::string to_text() const;
  static OptimizationReport from_text(const std::string& text);
};

struct OptimizerOptions {
  bool vertical = true;
  bool horizontal = true;
  bool horizontalFirst = false;  // ablation/testing hook: run the Horizontal phase first
  CostModel model = CostModel::Analytical;
  RrsParams rrs;
  ConfigBounds bounds;
};

// Optimizes one unit: enumerates subplans, tunes each with RRS, retains the
// cheapest (ties: fewer jobs, then identity, then enumeration order).
Plan optimize_unit(const Plan& plan, const OptimizationUnit& unit, const CostEstimator& estimator,
                   const OptimizerOptions& options, UnitReport* report = nullptr);

std::pair<Plan, OptimizationReport> optimize(const Plan& plan, const ClusterSpec& cluster,
                                             const OptimizerOptions& options);

// Replays a report's applied sequence onto the input plan.
Plan replay_report(const Plan& input, const OptimizationReport& report);

// Read-only listing of every candidate transformation per unit with its
// tri-state check outcome.
std::string explain_plan(const Plan& plan);

}  // namespace mrpack
