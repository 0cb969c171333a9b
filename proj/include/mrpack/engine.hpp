#pragma once

#include <map>
#include <string>
#include <vector>

#include "mrpack/ir.hpp"
#include "mrpack/registry.hpp"

namespace mrpack {

struct ExecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InMemoryDataset {
  DatasetLayout layout;
  std::vector<std::vector<Record>> partitions;

  size_t record_count() const;
  double byte_size() const;
  std::vector<Record> all_records() const;
};

struct JobTrace {
  double mapInRecords = 0, mapInBytes = 0;
  double mapOutRecords = 0, mapOutBytes = 0;
  double combineOutRecords = -1, combineOutBytes = -1;
  double shuffleRecords = 0, shuffleBytes = 0;
  double reduceInRecords = 0, reduceInBytes = 0;
  double reduceOutRecords = 0, reduceOutBytes = 0;
  double mapOutDistinctKeys = 0;
  int spillCount = 0;
  std::map<DatasetId, std::vector<double>> bytesReadPerPartition;
  std::map<DatasetId, double> outputRecords, outputBytes;
  std::map<int, double> recordsPerTag;  // reduce-side pipeline isolation counters
  std::map<std::string, std::vector<Scalar>> keySamples;  // map-output key fields, for histograms

  // wall-clock per phase (excluded from determinism guarantees)
  double readSeconds = 0, mapSeconds = 0, sortSeconds = 0, shuffleSeconds = 0, reduceSeconds = 0, writeSeconds = 0;

  double total_seconds() const {
    return readSeconds + mapSeconds + sortSeconds + shuffleSeconds + reduceSeconds + writeSeconds;
  }
};

struct RunTrace {
  std::map<JobId, JobTrace> jobs;

  double total_seconds() const;
};

struct RunResult {
  std::map<DatasetId, InMemoryDataset> datasets;  // every materialized dataset, inputs included
  RunTrace trace;
};

// Executes the plan's jobs in topological order over in-memory data. Identical
// (plan, registry, inputs) produce bit-identical outputs and counters.
RunResult run_plan(const Plan& plan, const UdfRegistry& registry,
                   const std::map<DatasetId, InMemoryDataset>& inputs);

struct DiffReport {
  bool equal = true;
  std::vector<std::string> diffs;  // first 10 discrepancies

  std::string to_string() const;
};

// Multiset equality per dataset id, ignoring partition boundaries and order.
DiffReport compare_outputs(const std::map<DatasetId, InMemoryDataset>& a,
                           const std::map<DatasetId, InMemoryDataset>& b);

// Runs the plan and converts the trace into per-job profile annotations.
std::map<JobId, ProfileAnnotation> collect_profile(const Plan& plan, const UdfRegistry& registry,
                                                   const std::map<DatasetId, InMemoryDataset>& inputs);

// Installs collected profiles and refreshes dataset size annotations.
void install_profiles(Plan& plan, const UdfRegistry& registry, const std::map<DatasetId, InMemoryDataset>& inputs);

// Delimited-text storage: one `part-NNNNN.tsv` file per partition under
// <dir>/<datasetId>/, fields tab separated, typed by the dataset schema.
void save_dataset(const InMemoryDataset& ds, const RecordSchema& schema, const std::string& dir,
                  const DatasetId& id);
InMemoryDataset load_dataset(const Dataset& meta, const std::string& dir);

std::map<DatasetId, InMemoryDataset> load_base_datasets(const Plan& plan, const std::string& dir);

}  // namespace mrpack
