#pragma once

#include <functional>
#include <map>
#include <optional>

#include "mrpack/cost.hpp"
#include "mrpack/ir.hpp"

namespace mrpack {

struct RrsParams {
  int exploreSamples = 20;
  int exploitSamples = 40;  // cap on samples spent inside one region before a forced restart
  double shrinkRatio = 0.5;
  int restartThreshold = 5;
  int totalBudget = 200;
  uint64_t seed = 42;
};

struct RrsTrace {
  std::vector<double> bestSoFar;  // non-increasing, one entry per evaluation
  int evaluations = 0;
};

// Recursive random search over a finite grid: explore uniformly, exploit a
// shrinking box around the best point, restart exploration when the box
// collapses below one grid step. Deterministic for a fixed seed. Returns the
// best index vector and its cost; never worse than the incumbent when given.
std::pair<std::vector<size_t>, double> rrs_minimize(
    const std::vector<size_t>& domainSizes, const std::function<double(const std::vector<size_t>&)>& costAt,
    const RrsParams& params, RrsTrace* trace = nullptr,
    const std::optional<std::vector<size_t>>& incumbent = std::nullopt);

// --- configuration space over plan jobs ---

struct ConfigBounds {
  int maxMapTasks = 64;
  int maxReduceTasks = 64;
  std::vector<int> sortBufferMB = {64, 128, 256, 512};
};

struct ConfigDim {
  JobId job;  // representative
  enum class Field { MapTasks, ReduceTasks, SortBuffer, MapOutputCompression, OutputCompression, Combiner } field;
  int lo = 1, hi = 1;        // MapTasks / ReduceTasks
  std::vector<int> choices;  // SortBuffer

  // Task-count dimensions cover a whole alignment class: every (job, role)
  // member moves in lockstep. role true = output partition count (reduce
  // tasks, or map tasks of a Map-only job), false = map task count.
  std::vector<std::pair<JobId, bool>> members;

  size_t size() const;
  std::string name() const;
};

struct ConfigSpaceDescriptor {
  std::vector<ConfigDim> dims;  // free dimensions; constraint-pinned ones are excluded
  std::vector<JobId> jobs;      // jobs under search (ascending)

  size_t dimension() const { return dims.size(); }
};

// Free dimensions for `jobs` after the plan's ConfigConstraints pin the rest.
ConfigSpaceDescriptor build_config_space(const Plan& plan, const std::vector<JobId>& jobs,
                                         const ConfigBounds& bounds = {});

// Decodes one grid point into per-job configurations (constraint propagation
// for pinned task counts happens in with_configurations).
std::map<JobId, Configuration> decode_config_point(const Plan& plan, const ConfigSpaceDescriptor& space,
                                                   const std::vector<size_t>& point);

struct RrsConfigResult {
  std::map<JobId, Configuration> configs;  // assignment for every job under search
  double cost = 0;
  RrsTrace trace;
};

// Tunes the configurations of `space.jobs` against costFn; the incumbent plan
// configuration is always evaluated first, so the result is never worse.
RrsConfigResult rrs_optimize_config(const Plan& plan, const ConfigSpaceDescriptor& space, const RrsParams& params,
                                    const std::function<double(const Plan&)>& costFn);

}  // namespace mrpack
