#pragma once

#include <variant>

#include "mrpack/ir.hpp"

namespace mrpack {

struct StaleApplication : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TransformError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Applicability { Applicable, NotApplicable, Unknown };

enum class TransformKind { IntraVertical, InterVertical, Horizontal, PartitionFn, Configuration };

struct IntraParams {
  JobId consumer;
};

struct InterParams {
  DatasetId dataset;
  enum class Variant { Simple, ReplicateAll, PackOne } variant = Variant::Simple;
  JobId packConsumer;  // PackOne only

  bool operator==(const InterParams&) const = default;
};

struct HorizontalParams {
  std::vector<JobId> members;  // ascending id order; branch tags follow it
};

struct PartitionParams {
  JobId job;
  PartitionSpec newSpec;
};

struct PruneParams {
  JobId consumer;
  DatasetId dataset;
  std::vector<int> partitions;
};

struct ConfigParams {
  JobId job;
  Configuration newConfig;
};

// One checked rewrite, bound to the exact plan it was checked against via the
// plan fingerprint; applying it to any other plan is a stale-application error.
struct TransformApplication {
  TransformKind kind = TransformKind::IntraVertical;
  std::vector<JobId> targetJobs;
  std::variant<IntraParams, InterParams, HorizontalParams, PartitionParams, PruneParams, ConfigParams> params;
  uint64_t planFingerprint = 0;

  std::string signature() const;
};

// Parses a signature produced by TransformApplication::signature back into an
// application bound to `plan` (for report replay).
TransformApplication parse_application(const Plan& plan, const std::string& signature);

Plan apply_application(const Plan& plan, const TransformApplication& app);

struct CheckResult {
  Applicability state = Applicability::NotApplicable;
  std::string reason;  // names the failing precondition when not applicable/unknown
  std::vector<TransformApplication> applications;

  bool applicable() const { return state == Applicability::Applicable; }
};

// --- vertical packing ---
CheckResult check_intra_vertical(const Plan& plan, const JobId& consumer);
Plan apply_intra_vertical(const Plan& plan, const TransformApplication& app);

CheckResult check_inter_vertical(const Plan& plan, const DatasetId& dataset);
Plan apply_inter_vertical(const Plan& plan, const TransformApplication& app);

// --- horizontal packing ---
CheckResult check_horizontal(const Plan& plan, const std::vector<JobId>& jobs);
Plan apply_horizontal(const Plan& plan, const TransformApplication& app);

// --- partition function ---
Plan apply_partition_transform(const Plan& plan, const JobId& job, const PartitionSpec& newSpec);

struct RangeSplitResult {
  std::vector<Scalar> splits;
  bool skewed = false;  // degenerate key domain; range transform should be skipped
};

// Equi-depth split points from the profile's key histogram for `field`.
RangeSplitResult derive_range_splits(const ProfileAnnotation& profile, const std::string& field, int partitions);

// --- partition pruning ---
// Returns the prune applications available on the consumer (one per eligible
// range-partitioned input with a matching leading-field filter).
CheckResult check_partition_pruning(const Plan& plan, const JobId& consumer);
Plan apply_partition_pruning(const Plan& plan, const JobId& consumer);
Plan apply_prune(const Plan& plan, const TransformApplication& app);

// --- configuration ---
Plan apply_configuration(const Plan& plan, const JobId& job, const Configuration& newConfig);

// Bulk assignment used by the configuration search: sets the given configs,
// propagates task-count constraints and refreshes layouts. `validate` may be
// disabled on the hot sampling path.
Plan with_configurations(const Plan& plan, const std::map<JobId, Configuration>& configs, bool validate = true);

// --- profile adjustment ---
enum class AdjustKind { Pipelined, Horizontal };

// Composes two independently measured phase profiles: pipelined packing takes
// the product of record selectivities and the sum of CPU costs; horizontal
// packing sums the flows.
ProfileAnnotation adjust_profile(const ProfileAnnotation& upstream, const ProfileAnnotation& downstream,
                                 AdjustKind kind);

}  // namespace mrpack
