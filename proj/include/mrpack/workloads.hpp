#pragma once

#include "mrpack/engine.hpp"
#include "mrpack/ir.hpp"

namespace mrpack {

struct GeneratedWorkload {
  Plan plan;
  std::map<DatasetId, InMemoryDataset> inputs;
};

std::vector<std::string> workload_names();

// Desk-scale analogs of the evaluation workflows. `scale` is the approximate
// base record count; every workload is deterministic for a fixed seed and
// ships with full annotations (schemas, filters, layouts, measured profiles).
GeneratedWorkload generate_workload(const std::string& name, int scale, uint64_t seed);

// Randomized small workflow from a safe generator: annotations are truthful
// by construction, all functions come from the builtin registry.
GeneratedWorkload generate_random_workflow(uint64_t seed);

// Writes plan.json plus one delimited-text directory per base dataset.
std::string write_workload(const GeneratedWorkload& w, const std::string& dir);

}  // namespace mrpack
