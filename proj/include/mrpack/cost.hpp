#pragma once

#include <map>
#include <string>
#include <vector>

#include "mrpack/ir.hpp"

namespace mrpack {

struct InputStats {
  double records = 0;
  double bytes = 0;
};

struct JobCostEstimate {
  std::map<std::string, double> phaseSeconds;  // read, mapCompute, spillSort, shuffle, merge, reduceCompute, write
  int mapWaves = 1;
  int reduceWaves = 0;
  double totalSeconds = 0;
  double outRecords = 0;
  double outBytes = 0;
};

struct PlanCostEstimate {
  std::map<JobId, JobCostEstimate> perJob;
  double totalSeconds = 0;
  std::vector<JobId> criticalPath;  // the per-level maximum job, in level order
};

// Analytical phase model over profile annotations, configurations and the
// cluster spec. Throws ProfileError when a needed profile is missing so the
// caller can fall back to the job-count model.
JobCostEstimate estimate_job(const Job& job, const InputStats& input, const ClusterSpec& cluster);

PlanCostEstimate estimate_plan(const Plan& plan, const ClusterSpec& cluster);

// Job-count model: every job costs one unit.
PlanCostEstimate fallback_cost(const Plan& plan);

enum class CostModel { Analytical, JobCount };

std::string cost_model_name(CostModel m);
CostModel cost_model_from_name(const std::string& name);

// Bound cost function handed to the search.
struct CostEstimator {
  CostModel model = CostModel::Analytical;
  ClusterSpec cluster;

  PlanCostEstimate estimate(const Plan& plan) const;
  double plan_cost(const Plan& plan) const { return estimate(plan).totalSeconds; }
};

}  // namespace mrpack
