#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "mrpack/scalar.hpp"

namespace mrpack {

using JobId = std::string;
using DatasetId = std::string;

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ProfileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class PartitionKind { Hash, Range };

// Empty partitionKey/sortKey means "the whole map-output key". Transformations
// that repurpose a partition function always write explicit field lists.
struct PartitionSpec {
  PartitionKind kind = PartitionKind::Hash;
  std::vector<std::string> partitionKey;
  std::vector<std::string> sortKey;
  std::vector<Scalar> rangeSplits;  // range kind: strictly increasing, over the leading key field

  bool operator==(const PartitionSpec&) const = default;
};

enum class StageRole { Map, Reduce, Combine };

// One function application inside a task pipeline. Reduce-role stages group
// their input buffer on `group` (empty = whole key). outKey/outValue describe
// the stage's output schema when known; they drive downstream field lookups.
struct FuncStage {
  StageRole role = StageRole::Map;
  std::string fn;
  std::vector<std::string> group;
  std::vector<std::string> outKey;
  std::vector<std::string> outValue;
  std::optional<DatasetId> tee;  // materialize the stream after this stage

  bool operator==(const FuncStage&) const = default;
};

struct SchemaAnnotation {
  std::vector<std::string> k1, v1, k2, v2, k3, v3;

  bool operator==(const SchemaAnnotation&) const = default;
};

// One parallel pipeline of a packed job. `sources` limits which input datasets
// feed the branch (empty = every input record). A branch with `mapSink` writes
// its map-side output directly; `sink` receives the branch's reduce output.
struct BundleBranch {
  int tag = 0;
  std::vector<DatasetId> sources;
  std::vector<FuncStage> stages;
  std::optional<DatasetId> sink;
  std::optional<DatasetId> mapSink;
  std::optional<std::string> combineFn;
  PartitionSpec partition;  // per-branch shuffle spec under the tag
  std::optional<SchemaAnnotation> schema;

  bool operator==(const BundleBranch&) const = default;
};

struct BundleStage {
  std::vector<BundleBranch> branches;

  bool operator==(const BundleStage&) const = default;
};

struct Stage {
  std::variant<FuncStage, BundleStage> op;

  bool is_bundle() const { return op.index() == 1; }
  const FuncStage& func() const { return std::get<FuncStage>(op); }
  FuncStage& func() { return std::get<FuncStage>(op); }
  const BundleStage& bundle() const { return std::get<BundleStage>(op); }
  BundleStage& bundle() { return std::get<BundleStage>(op); }

  bool operator==(const Stage&) const = default;
};

// mapPipeline/reducePipeline, when non-empty, override mapFn/reduceFn; packing
// transformations populate them. A job is Map-only when both the reduce
// pipeline and reduceFn are absent.
struct Program {
  std::string mapFn;
  std::optional<std::string> reduceFn;
  std::optional<std::string> combineFn;
  PartitionSpec partition;
  std::vector<Stage> mapPipeline;
  std::vector<Stage> reducePipeline;

  bool map_only() const { return !reduceFn.has_value() && reducePipeline.empty(); }
  bool has_bundle() const;

  bool operator==(const Program&) const = default;
};

struct Configuration {
  int numMapTasks = 1;
  int numReduceTasks = 1;
  int sortBufferMB = 128;
  bool mapOutputCompression = false;
  bool outputCompression = false;
  bool combinerEnabled = false;

  bool operator==(const Configuration&) const = default;
};

struct ConfigConstraint {
  enum class Kind {
    MapTasksEqualProducerReduceTasks,  // numMapTasks tracks the producer's output partition count
    OrderPreservingInput,              // one input partition per map task, in order
    PartitionKeyFixed,
    SortKeyFixed,
    RangeSplitsFixed,
  };
  Kind kind = Kind::OrderPreservingInput;
  JobId producer;                   // MapTasksEqualProducerReduceTasks
  std::vector<std::string> fields;  // PartitionKeyFixed / SortKeyFixed
  std::vector<Scalar> splits;       // RangeSplitsFixed

  bool operator==(const ConfigConstraint&) const = default;
};

std::string constraint_kind_name(ConfigConstraint::Kind k);
ConfigConstraint::Kind constraint_kind_from_name(std::string_view name);

enum class Cmp { LT, LE, EQ, GE, GT };

std::string cmp_name(Cmp c);
Cmp cmp_from_name(std::string_view name);
bool cmp_eval(Cmp c, const Scalar& lhs, const Scalar& rhs);

struct FilterPredicate {
  std::string field;
  Cmp cmp = Cmp::LT;
  Scalar literal;

  bool operator==(const FilterPredicate&) const = default;
};

struct FilterAnnotation {
  std::vector<FilterPredicate> predicates;  // conjunction
  std::optional<double> passFraction;       // in (0,1]

  bool operator==(const FilterAnnotation&) const = default;
};

// Key histogram for one field: explicit value->count when the domain is small,
// 64-bucket equi-width over a numeric domain otherwise.
struct Histogram {
  bool equiWidth = false;
  std::vector<std::pair<Scalar, double>> entries;  // explicit form, sorted by value
  double lo = 0, hi = 0;
  std::vector<double> buckets;

  double total() const;
  double distinct() const;

  bool operator==(const Histogram&) const = default;
};

Histogram build_histogram(std::vector<Scalar> values, size_t explicitLimit = 1024);

struct DataflowStats {
  double mapInRecords = 0, mapInBytes = 0;
  double mapOutRecords = 0, mapOutBytes = 0;
  double combineOutRecords = -1, combineOutBytes = -1;  // <0: combiner not run
  double reduceInRecords = 0, reduceInBytes = 0;
  double reduceOutRecords = 0, reduceOutBytes = 0;
  double mapOutDistinctKeys = 0;
  std::map<std::string, Histogram> keyHistograms;  // map-output key fields

  double map_sel_records() const { return mapInRecords > 0 ? mapOutRecords / mapInRecords : 1.0; }
  double map_sel_bytes() const { return mapInBytes > 0 ? mapOutBytes / mapInBytes : 1.0; }
  double combine_sel_records() const {
    return (combineOutRecords >= 0 && mapOutRecords > 0) ? combineOutRecords / mapOutRecords : 1.0;
  }
  double combine_sel_bytes() const {
    return (combineOutBytes >= 0 && mapOutBytes > 0) ? combineOutBytes / mapOutBytes : 1.0;
  }
  double reduce_sel_records() const { return reduceInRecords > 0 ? reduceOutRecords / reduceInRecords : 1.0; }
  double reduce_sel_bytes() const { return reduceInBytes > 0 ? reduceOutBytes / reduceInBytes : 1.0; }

  bool operator==(const DataflowStats&) const = default;
};

struct CostStats {
  double readSecPerByte = 0;
  double mapSecPerRecord = 0;
  double combineSecPerRecord = 0;
  double spillSortSecPerByte = 0;
  double shuffleSecPerByte = 0;
  double mergeSecPerByte = 0;
  double reduceSecPerRecord = 0;
  double writeSecPerByte = 0;

  bool operator==(const CostStats&) const = default;
};

struct ProfileAnnotation {
  DataflowStats dataflow;
  CostStats costs;
  std::vector<std::pair<JobId, std::string>> provenance;  // (job, phase) the profile was adjusted from

  bool operator==(const ProfileAnnotation&) const = default;
};

struct JobAnnotations {
  std::optional<SchemaAnnotation> schema;
  std::optional<FilterAnnotation> filter;
  std::optional<ProfileAnnotation> profile;

  bool operator==(const JobAnnotations&) const = default;
};

struct Job {
  JobId id;
  Program program;
  Configuration config;
  JobAnnotations annotations;
  std::vector<ConfigConstraint> constraints;

  bool operator==(const Job&) const = default;
};

struct FieldDecl {
  std::string name;
  FieldType type = FieldType::Int64;

  bool operator==(const FieldDecl&) const = default;
};

struct RecordSchema {
  std::vector<FieldDecl> key, value;

  bool operator==(const RecordSchema&) const = default;
};

struct DatasetLayout {
  PartitionKind kind = PartitionKind::Hash;
  std::vector<std::string> partitionFields;  // empty: not partitioned by field
  std::vector<std::string> orderingFields;
  bool compressed = false;
  int partitionCount = 1;
  std::vector<Scalar> rangeBoundaries;  // range kind: strictly increasing split points

  bool operator==(const DatasetLayout&) const = default;
};

struct DatasetAnnotations {
  std::optional<double> sizeBytes;
  std::optional<double> recordCount;

  bool operator==(const DatasetAnnotations&) const = default;
};

struct Dataset {
  DatasetId id;
  std::string descriptor;
  DatasetLayout layout;
  DatasetAnnotations annotations;
  std::optional<RecordSchema> recordSchema;

  bool operator==(const Dataset&) const = default;
};

enum class EdgeDir { Input, Output };

struct Edge {
  JobId job;
  DatasetId dataset;
  EdgeDir dir = EdgeDir::Input;
  std::vector<int> partitions;  // pruned input subset; empty = all partitions

  bool operator==(const Edge&) const = default;
};

struct ClusterCalibration {
  double compressionFactor = 0.4;
  double startupFloorSec = 0.5;
  double contentionCoeff = 0.5;
  double stageBufferMB = 64;

  bool operator==(const ClusterCalibration&) const = default;
};

struct ClusterSpec {
  int nodeCount = 4;
  int mapSlotsPerNode = 3;
  int reduceSlotsPerNode = 2;
  double perSlotMemoryMB = 1024;
  double diskMBps = 100;
  double networkMBps = 50;
  ClusterCalibration calibration;

  int map_wave_width() const { return nodeCount * mapSlotsPerNode; }
  int reduce_wave_width() const { return nodeCount * reduceSlotsPerNode; }

  bool operator==(const ClusterSpec&) const = default;
};

enum class SubgraphKind { OneToOne, OneToMany, ManyToOne, NoneToOne, OneToNone, Hybrid };

std::string subgraph_kind_name(SubgraphKind k);

// Tri-state result for annotation-dependent predicates: Unknown means the
// information needed to prove the condition is missing, which disables a
// transformation without being a hard "no".
enum class Tri { True, False, Unknown };

struct Plan {
  std::map<JobId, Job> jobs;
  std::map<DatasetId, Dataset> datasets;
  std::vector<Edge> edges;
  std::optional<ClusterSpec> cluster;

  // Structural queries (all ids returned in ascending order).
  std::optional<JobId> producer_of(const DatasetId& d) const;
  std::vector<JobId> consumers_of(const DatasetId& d) const;
  std::vector<DatasetId> inputs_of(const JobId& j) const;
  std::vector<DatasetId> outputs_of(const JobId& j) const;
  std::vector<DatasetId> base_datasets() const;
  std::vector<DatasetId> terminal_datasets() const;
  const Edge* input_edge(const JobId& j, const DatasetId& d) const;
  Edge* input_edge(const JobId& j, const DatasetId& d);

  // True when a dependency path exists from job `from` to job `to`.
  bool path_between(const JobId& from, const JobId& to) const;

  void validate() const;  // throws ValidationError naming the violated invariant

  bool operator==(const Plan&) const = default;
};

SubgraphKind classify_subgraph(const Plan& plan, const DatasetId& dataset);

std::vector<JobId> topological_job_order(const Plan& plan);

enum class SlotSet { MapInput, MapOutput, ReduceInput, ReduceOutput };

std::string slot_set_name(SlotSet s);

// Name-identity flow check: true iff every field appears, with the same name,
// in both endpoint slots and in every slot along every dataflow path between
// the two jobs. Unknown when a required schema annotation is missing.
Tri fields_flow_unchanged(const Plan& plan, const JobId& fromJob, SlotSet fromSlot, const JobId& toJob,
                          SlotSet toSlot, const std::vector<std::string>& fields);

// Output layout a job's primary output assumes under the current program and
// configuration; used by layout-gated packing checks and by the executor.
DatasetLayout derive_output_layout(const Plan& plan, const JobId& job);

// Explicit stage lists for execution and packing. When the pipelines are
// empty these synthesize single-function stages from mapFn/reduceFn, with
// stage schemas prefilled from the job's schema annotation.
std::vector<Stage> effective_map_stages(const Job& job);
std::vector<Stage> effective_reduce_stages(const Job& job);

}  // namespace mrpack
