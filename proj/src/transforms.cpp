#include "mrpack/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "mrpack/plan_io.hpp"
#include "mrpack/registry.hpp"

namespace mrpack {

namespace {

// --- ordered set helpers over field-name lists ---

std::vector<std::string> ordered_intersect(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::string> out;
  for (const auto& f : a)
    if (std::count(b.begin(), b.end(), f)) out.push_back(f);
  return out;
}

std::vector<std::string> ordered_minus(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::string> out;
  for (const auto& f : a)
    if (!std::count(b.begin(), b.end(), f)) out.push_back(f);
  return out;
}

bool subset_of(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  for (const auto& f : a)
    if (!std::count(b.begin(), b.end(), f)) return false;
  return true;
}

bool same_set(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  return subset_of(a, b) && subset_of(b, a);
}

std::vector<std::string> dedup_concat(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::string> out = a;
  for (const auto& f : b)
    if (!std::count(out.begin(), out.end(), f)) out.push_back(f);
  return out;
}

bool has_constraint(const Job& job, ConfigConstraint::Kind kind) {
  return std::any_of(job.constraints.begin(), job.constraints.end(),
                     [&](const auto& c) { return c.kind == kind; });
}

bool has_partition_pin(const Job& job) {
  return has_constraint(job, ConfigConstraint::Kind::PartitionKeyFixed) ||
         has_constraint(job, ConfigConstraint::Kind::SortKeyFixed) ||
         has_constraint(job, ConfigConstraint::Kind::RangeSplitsFixed);
}

void add_constraint(Job& job, ConfigConstraint c) {
  for (const auto& have : job.constraints)
    if (have == c) return;
  job.constraints.push_back(std::move(c));
}

// Tag-routed jobs (horizontal packs) write through per-branch sinks; their
// combined map-output key blocks downstream vertical packing.
bool is_tag_routed(const Job& job) {
  auto scan = [](const std::vector<Stage>& pipe) {
    for (const auto& s : pipe)
      if (s.is_bundle())
        for (const auto& b : s.bundle().branches)
          if (b.sink || b.mapSink) return true;
    return false;
  };
  return scan(job.program.mapPipeline) || scan(job.program.reducePipeline);
}

std::vector<FuncStage> flat_stages(const std::vector<Stage>& stages, const JobId& job) {
  std::vector<FuncStage> out;
  for (const auto& s : stages) {
    if (s.is_bundle()) throw TransformError("job '" + job + "': pipeline bundle where flat stages were required");
    out.push_back(s.func());
  }
  return out;
}

bool stages_flat(const std::vector<Stage>& stages) {
  return std::none_of(stages.begin(), stages.end(), [](const Stage& s) { return s.is_bundle(); });
}

int output_partition_count(const Job& job) {
  return job.program.map_only() ? job.config.numMapTasks : job.config.numReduceTasks;
}

// Refreshes produced-dataset layouts, sorts edges canonically and validates.
Plan finalize(Plan plan) {
  for (auto& [id, ds] : plan.datasets) {
    auto p = plan.producer_of(id);
    if (!p) continue;
    DatasetLayout derived = derive_output_layout(plan, *p);
    derived.partitionCount = output_partition_count(plan.jobs.at(*p));
    ds.layout = derived;
  }
  std::sort(plan.edges.begin(), plan.edges.end(), [](const Edge& a, const Edge& b) {
    return std::tie(a.job, a.dataset, a.dir) < std::tie(b.job, b.dataset, b.dir);
  });
  plan.validate();
  return plan;
}

void check_fingerprint(const Plan& plan, const TransformApplication& app) {
  if (app.planFingerprint != plan_fingerprint(plan))
    throw StaleApplication("transform application is stale: the plan changed since it was checked");
}

// mapTasksEqualProducerReduceTasks propagation after a config/partition change.
void propagate_task_counts(Plan& plan) {
  bool changed = true;
  int guard = static_cast<int>(plan.jobs.size()) + 2;
  while (changed && guard-- > 0) {
    changed = false;
    for (auto& [id, job] : plan.jobs) {
      for (const auto& c : job.constraints) {
        if (c.kind != ConfigConstraint::Kind::MapTasksEqualProducerReduceTasks) continue;
        auto it = plan.jobs.find(c.producer);
        if (it == plan.jobs.end()) continue;
        int want = output_partition_count(it->second);
        if (job.config.numMapTasks != want) {
          job.config.numMapTasks = want;
          changed = true;
        }
      }
    }
  }
}

// --- profile adjustment helpers used by the packing rewrites ---

void scale_histograms(std::map<std::string, Histogram>& hs, double factor) {
  for (auto& [f, h] : hs) {
    if (h.equiWidth)
      for (auto& b : h.buckets) b *= factor;
    else
      for (auto& [v, c] : h.entries) c *= factor;
  }
}

// Consumer becomes Map-only: its whole pipeline is the new "map function".
std::optional<ProfileAnnotation> intra_adjust(const Job& consumer) {
  const auto& prof = consumer.annotations.profile;
  if (!prof) return std::nullopt;
  const auto& d = prof->dataflow;
  ProfileAnnotation out;
  out.dataflow.mapInRecords = d.mapInRecords;
  out.dataflow.mapInBytes = d.mapInBytes;
  out.dataflow.mapOutRecords = d.reduceOutRecords;
  out.dataflow.mapOutBytes = d.reduceOutBytes;
  out.costs = prof->costs;
  double combineCost = d.combineOutRecords >= 0 ? prof->costs.combineSecPerRecord * d.map_sel_records() : 0.0;
  out.costs.mapSecPerRecord = prof->costs.mapSecPerRecord + combineCost +
                              (d.mapInRecords > 0 ? d.reduceInRecords / d.mapInRecords : 1.0) *
                                  prof->costs.reduceSecPerRecord;
  out.costs.spillSortSecPerByte = 0;
  out.costs.shuffleSecPerByte = 0;
  out.costs.mergeSecPerByte = 0;
  out.costs.reduceSecPerRecord = 0;
  out.provenance = prof->provenance;
  out.provenance.push_back({consumer.id, "map"});
  out.provenance.push_back({consumer.id, "reduce"});
  return out;
}

// Map-only consumer's pipeline appended after the producer's reduce.
std::optional<ProfileAnnotation> merge_into_reduce_adjust(const Job& producer, const Job& consumer) {
  const auto& pp = producer.annotations.profile;
  const auto& cp = consumer.annotations.profile;
  if (!pp || !cp) return std::nullopt;
  ProfileAnnotation out = *pp;
  double selR = cp->dataflow.map_sel_records();
  double selB = cp->dataflow.map_sel_bytes();
  out.dataflow.reduceOutRecords = pp->dataflow.reduceOutRecords * selR;
  out.dataflow.reduceOutBytes = pp->dataflow.reduceOutBytes * selB;
  out.costs.reduceSecPerRecord =
      pp->costs.reduceSecPerRecord + pp->dataflow.reduce_sel_records() * cp->costs.mapSecPerRecord;
  out.costs.writeSecPerByte = cp->costs.writeSecPerByte;
  out.provenance = pp->provenance;
  out.provenance.insert(out.provenance.end(), cp->provenance.begin(), cp->provenance.end());
  out.provenance.push_back({producer.id, "reduce"});
  out.provenance.push_back({consumer.id, "map"});
  return out;
}

// Map-only producer's pipeline prepended to the consumer's map side.
std::optional<ProfileAnnotation> merge_into_map_adjust(const Job& producer, const Job& consumer) {
  const auto& pp = producer.annotations.profile;
  const auto& cp = consumer.annotations.profile;
  if (!pp || !cp) return std::nullopt;
  ProfileAnnotation out = *cp;
  double inR = cp->dataflow.mapInRecords - pp->dataflow.mapOutRecords + pp->dataflow.mapInRecords;
  double inB = cp->dataflow.mapInBytes - pp->dataflow.mapOutBytes + pp->dataflow.mapInBytes;
  inR = std::max(inR, pp->dataflow.mapInRecords);
  inB = std::max(inB, pp->dataflow.mapInBytes);
  double totalCpu = pp->dataflow.mapInRecords * pp->costs.mapSecPerRecord +
                    cp->dataflow.mapInRecords * cp->costs.mapSecPerRecord;
  out.dataflow.mapInRecords = inR;
  out.dataflow.mapInBytes = inB;
  out.costs.mapSecPerRecord = inR > 0 ? totalCpu / inR : 0;
  out.costs.readSecPerByte = pp->costs.readSecPerByte > 0 ? pp->costs.readSecPerByte : cp->costs.readSecPerByte;
  out.provenance = pp->provenance;
  out.provenance.insert(out.provenance.end(), cp->provenance.begin(), cp->provenance.end());
  out.provenance.push_back({producer.id, "map"});
  out.provenance.push_back({consumer.id, "map"});
  return out;
}

std::optional<ProfileAnnotation> horizontal_adjust(const Plan& plan, const std::vector<JobId>& members) {
  bool sharedInput = true;
  auto first = plan.inputs_of(members.front());
  for (const auto& m : members)
    if (plan.inputs_of(m) != first) sharedInput = false;

  ProfileAnnotation out;
  double cpuMapTotal = 0, cpuReduceTotal = 0, spillW = 0, mergeW = 0, spillBytes = 0;
  bool allCombine = true;
  for (const auto& m : members) {
    const auto& prof = plan.jobs.at(m).annotations.profile;
    if (!prof) return std::nullopt;
    const auto& d = prof->dataflow;
    if (sharedInput) {
      out.dataflow.mapInRecords = std::max(out.dataflow.mapInRecords, d.mapInRecords);
      out.dataflow.mapInBytes = std::max(out.dataflow.mapInBytes, d.mapInBytes);
    } else {
      out.dataflow.mapInRecords += d.mapInRecords;
      out.dataflow.mapInBytes += d.mapInBytes;
    }
    out.dataflow.mapOutRecords += d.mapOutRecords;
    out.dataflow.mapOutBytes += d.mapOutBytes;
    if (d.combineOutRecords >= 0) {
      out.dataflow.combineOutRecords = std::max(out.dataflow.combineOutRecords, 0.0) + d.combineOutRecords;
      out.dataflow.combineOutBytes = std::max(out.dataflow.combineOutBytes, 0.0) + d.combineOutBytes;
    } else {
      allCombine = false;
    }
    out.dataflow.reduceInRecords += d.reduceInRecords;
    out.dataflow.reduceInBytes += d.reduceInBytes;
    out.dataflow.reduceOutRecords += d.reduceOutRecords;
    out.dataflow.reduceOutBytes += d.reduceOutBytes;
    out.dataflow.mapOutDistinctKeys += d.mapOutDistinctKeys;
    cpuMapTotal += d.mapInRecords * prof->costs.mapSecPerRecord;
    cpuReduceTotal += d.reduceInRecords * prof->costs.reduceSecPerRecord;
    double sb = d.combineOutBytes >= 0 ? d.combineOutBytes : d.mapOutBytes;
    spillW += sb * prof->costs.spillSortSecPerByte;
    mergeW += sb * prof->costs.mergeSecPerByte;
    spillBytes += sb;
    out.costs.readSecPerByte = std::max(out.costs.readSecPerByte, prof->costs.readSecPerByte);
    out.costs.shuffleSecPerByte = std::max(out.costs.shuffleSecPerByte, prof->costs.shuffleSecPerByte);
    out.costs.writeSecPerByte = std::max(out.costs.writeSecPerByte, prof->costs.writeSecPerByte);
    for (const auto& [job, phase] : prof->provenance) out.provenance.push_back({job, phase});
  }
  if (!allCombine) {
    out.dataflow.combineOutRecords = -1;
    out.dataflow.combineOutBytes = -1;
  }
  out.costs.mapSecPerRecord = out.dataflow.mapInRecords > 0 ? cpuMapTotal / out.dataflow.mapInRecords : 0;
  out.costs.reduceSecPerRecord = out.dataflow.reduceInRecords > 0 ? cpuReduceTotal / out.dataflow.reduceInRecords : 0;
  out.costs.spillSortSecPerByte = spillBytes > 0 ? spillW / spillBytes : 0;
  out.costs.mergeSecPerByte = spillBytes > 0 ? mergeW / spillBytes : 0;
  for (const auto& m : members) {
    out.provenance.push_back({m, "map"});
    if (!plan.jobs.at(m).program.map_only()) out.provenance.push_back({m, "reduce"});
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// intra-job vertical packing
// ---------------------------------------------------------------------------

namespace {

struct IntraAnalysis {
  std::vector<JobId> flowProducers;    // producers whose partition function gets repurposed
  std::vector<DatasetId> inputs;       // all consumer inputs, ascending
  std::vector<std::string> partitionKey;  // for flow producers: Jp.K2 ∩ Jc.K2
};

CheckResult intra_not(const std::string& reason) {
  CheckResult r;
  r.state = Applicability::NotApplicable;
  r.reason = reason;
  return r;
}

CheckResult intra_unknown(const std::string& reason) {
  CheckResult r;
  r.state = Applicability::Unknown;
  r.reason = reason;
  return r;
}

// Layout condition for inputs whose grouping arrives pre-established: the
// dataset must be partitioned on a subset of the consumer's grouping key and
// ordered on it.
bool layout_serves_grouping(const DatasetLayout& l, const std::vector<std::string>& k2) {
  if (l.partitionFields.empty() || !subset_of(l.partitionFields, k2)) return false;
  if (l.orderingFields.size() < k2.size()) return false;
  std::vector<std::string> prefix(l.orderingFields.begin(), l.orderingFields.begin() + k2.size());
  return same_set(prefix, k2);
}

}  // namespace

CheckResult check_intra_vertical(const Plan& plan, const JobId& consumer) {
  auto it = plan.jobs.find(consumer);
  if (it == plan.jobs.end()) throw TransformError("unknown job '" + consumer + "'");
  const Job& jc = it->second;
  if (jc.program.map_only()) return intra_not("consumer is already Map-only");
  if (is_tag_routed(jc)) return intra_not("consumer output is tag-routed by horizontal packing");
  if (has_partition_pin(jc))
    return intra_not("consumer partition function is pinned by a prior packing");
  if (!jc.annotations.schema) return intra_unknown("missing schema annotation on consumer '" + consumer + "'");
  const auto& k2 = jc.annotations.schema->k2;

  // K2 must flow unchanged through the consumer's own map function.
  Tri own = fields_flow_unchanged(plan, consumer, SlotSet::MapInput, consumer, SlotSet::MapOutput, k2);
  if (own == Tri::False)
    return intra_not("consumer grouping key is synthesized in its own map function");
  if (own == Tri::Unknown) return intra_unknown("missing schema annotation on consumer '" + consumer + "'");

  auto inputs = plan.inputs_of(consumer);
  std::vector<DatasetId> produced, bases;
  for (const auto& d : inputs)
    (plan.producer_of(d) ? produced : bases).push_back(d);
  if (!produced.empty() && !bases.empty())
    return intra_not("hybrid producer-consumer subgraph (mixed base and produced inputs)");

  IntraAnalysis ia;
  ia.inputs = inputs;

  if (produced.empty()) {
    // none-to-one: postcondition 1 becomes a precondition on the input layout
    std::optional<DatasetLayout> common;
    for (const auto& d : bases) {
      const auto& l = plan.datasets.at(d).layout;
      if (!layout_serves_grouping(l, k2))
        return intra_not("input dataset '" + d + "' is not partitioned and sorted on the consumer grouping key");
      if (!common) {
        common = l;
      } else if (common->partitionFields != l.partitionFields || common->kind != l.kind ||
                 common->rangeBoundaries != l.rangeBoundaries || common->partitionCount != l.partitionCount) {
        return intra_not("input datasets are not identically partitioned");
      }
    }
  } else {
    std::set<JobId> producerSet;
    for (const auto& d : produced) {
      auto cons = plan.consumers_of(d);
      if (cons.size() != 1)
        return intra_not("dataset '" + d + "' has other consumers (not a one-to-one subgraph)");
      producerSet.insert(*plan.producer_of(d));
    }
    std::optional<std::vector<std::string>> commonIntersection;
    std::optional<DatasetLayout> commonLayout;
    for (const auto& p : producerSet) {
      const Job& jp = plan.jobs.at(p);
      if (is_tag_routed(jp)) return intra_not("producer '" + p + "' output is tag-routed by horizontal packing");
      if (jp.program.map_only()) {
        // grouping must arrive through the producer's output layout
        DatasetLayout l = derive_output_layout(plan, p);
        l.partitionCount = output_partition_count(jp);
        if (!layout_serves_grouping(l, k2))
          return intra_not("Map-only producer '" + p + "' output is not partitioned and sorted on the grouping key");
        if (!commonLayout)
          commonLayout = l;
        else if (commonLayout->partitionFields != l.partitionFields || commonLayout->partitionCount != l.partitionCount)
          return intra_not("producer outputs are not identically partitioned");
        if (commonIntersection && !same_set(*commonIntersection, l.partitionFields))
          return intra_not("producers disagree on the packed partition key");
        if (!commonIntersection && producerSet.size() > 1) commonIntersection = l.partitionFields;
      } else {
        if (!jp.annotations.schema)
          return intra_unknown("missing schema annotation on producer '" + p + "'");
        Tri flows = fields_flow_unchanged(plan, p, SlotSet::ReduceInput, consumer, SlotSet::MapOutput, k2);
        if (flows == Tri::Unknown)
          return intra_unknown("schema annotations cannot prove unchanged flow from '" + p + "'");
        if (flows == Tri::False)
          return intra_not("consumer grouping key does not flow unchanged from producer '" + p + "' reduce input");
        std::vector<std::string> inter = ordered_intersect(jp.annotations.schema->k2, k2);
        if (inter.empty())
          return intra_not("no shared grouping fields with producer '" + p + "' (packing would serialize the job)");
        if (commonIntersection && !same_set(*commonIntersection, inter))
          return intra_not("producers disagree on the packed partition key");
        commonIntersection = inter;
        ia.flowProducers.push_back(p);
        ia.partitionKey = inter;
      }
    }
    // aligned task counts are enforced at apply time; Map-only producers with
    // reduce producers must already agree on partition fields
    if (commonLayout && commonIntersection && !same_set(commonLayout->partitionFields, *commonIntersection))
      return intra_not("producers disagree on the packed partition key");
  }

  CheckResult r;
  r.state = Applicability::Applicable;
  TransformApplication app;
  app.kind = TransformKind::IntraVertical;
  app.targetJobs.push_back(consumer);
  for (const auto& p : ia.flowProducers) app.targetJobs.push_back(p);
  app.params = IntraParams{consumer};
  app.planFingerprint = plan_fingerprint(plan);
  r.applications.push_back(std::move(app));
  return r;
}

Plan apply_intra_vertical(const Plan& plan, const TransformApplication& app) {
  check_fingerprint(plan, app);
  const auto& params = std::get<IntraParams>(app.params);
  CheckResult chk = check_intra_vertical(plan, params.consumer);
  if (!chk.applicable()) throw StaleApplication("intra-vertical packing no longer applicable: " + chk.reason);

  Plan out = plan;
  Job& jc = out.jobs.at(params.consumer);
  const auto k2 = jc.annotations.schema->k2;

  // producers with reduce sides: repartition on the intersection, sort on the
  // combined key, pin both
  std::vector<JobId> flowProducers;
  for (const auto& d : out.inputs_of(params.consumer)) {
    auto p = out.producer_of(d);
    if (!p) continue;
    const Job& jp = out.jobs.at(*p);
    if (!jp.program.map_only() &&
        !std::count(flowProducers.begin(), flowProducers.end(), *p))
      flowProducers.push_back(*p);
  }
  int alignedTasks = -1;
  for (const auto& p : flowProducers) {
    Job& jp = out.jobs.at(p);
    const auto& pk2 = jp.annotations.schema->k2;
    const auto& pv2 = jp.annotations.schema->v2;
    std::vector<std::string> inter = ordered_intersect(pk2, k2);
    std::vector<std::string> producerRest = ordered_minus(pk2, inter);
    std::vector<std::string> consumerRest = ordered_minus(k2, pk2);
    consumerRest = ordered_intersect(dedup_concat(pk2, pv2), consumerRest);  // keep resolvable fields only
    PartitionSpec spec;
    spec.kind = PartitionKind::Hash;
    spec.partitionKey = inter;
    spec.sortKey = inter;
    spec.sortKey.insert(spec.sortKey.end(), producerRest.begin(), producerRest.end());
    spec.sortKey.insert(spec.sortKey.end(), consumerRest.begin(), consumerRest.end());
    jp.program.partition = spec;
    add_constraint(jp, {ConfigConstraint::Kind::PartitionKeyFixed, "", spec.partitionKey, {}});
    add_constraint(jp, {ConfigConstraint::Kind::SortKeyFixed, "", spec.sortKey, {}});
    if (alignedTasks < 0) alignedTasks = jp.config.numReduceTasks;
    jp.config.numReduceTasks = alignedTasks;
  }

  // consumer becomes Map-only: reduce (and combine) move into the map pipeline
  std::vector<Stage> pipeline = effective_map_stages(jc);
  if (jc.program.combineFn) {
    FuncStage combine;
    combine.role = StageRole::Combine;
    combine.fn = *jc.program.combineFn;
    pipeline.push_back(Stage{combine});
  }
  for (auto st : effective_reduce_stages(jc)) {
    if (!st.is_bundle() && st.func().role == StageRole::Reduce && st.func().group.empty())
      st.func().group = k2;
    pipeline.push_back(std::move(st));
  }
  jc.program.mapPipeline = std::move(pipeline);
  jc.program.reduceFn.reset();
  jc.program.reducePipeline.clear();
  jc.program.combineFn.reset();
  jc.program.partition = PartitionSpec{};
  jc.config.numReduceTasks = 0;
  jc.config.combinerEnabled = false;

  add_constraint(jc, {ConfigConstraint::Kind::OrderPreservingInput, "", {}, {}});
  int common = -1;
  for (const auto& d : out.inputs_of(params.consumer)) {
    auto p = out.producer_of(d);
    if (p) add_constraint(jc, {ConfigConstraint::Kind::MapTasksEqualProducerReduceTasks, *p, {}, {}});
    const Edge* e = out.input_edge(params.consumer, d);
    int parts = (e && !e->partitions.empty()) ? static_cast<int>(e->partitions.size())
: p ? output_partition_count(out.jobs.at(*p))
                                              : out.datasets.at(d).layout.partitionCount;
    if (common < 0) common = parts;
    if (parts != common)
      throw TransformError("intra-vertical packing needs aligned input partition counts on '" + params.consumer + "'");
  }
  jc.config.numMapTasks = common;

  if (auto adjusted = intra_adjust(plan.jobs.at(params.consumer))) jc.annotations.profile = std::move(adjusted);

  return finalize(std::move(out));
}

// ---------------------------------------------------------------------------
// inter-job vertical packing
// ---------------------------------------------------------------------------

namespace {

bool producer_absorbable(const Plan& plan, const Job& jp, const Job& jc, const DatasetId& d, std::string& why) {
  if (!jp.program.map_only()) {
    why = "neither job is Map-only";
    return false;
  }
  if (plan.outputs_of(jp.id).size() != 1) {
    why = "producer '" + jp.id + "' writes multiple datasets";
    return false;
  }
  auto otherInputs = plan.inputs_of(jc.id);
  otherInputs.erase(std::remove(otherInputs.begin(), otherInputs.end(), d), otherInputs.end());
  auto jcStages = effective_map_stages(jc);
  bool jcBundle = !jcStages.empty() && jcStages[0].is_bundle();
  auto jpStages = effective_map_stages(jp);
  bool jpBundle = !jpStages.empty() && jpStages[0].is_bundle();
  if (jcBundle) {
    if (jpBundle) {
      why = "both pipelines are source-routed; merging would nest bundles";
      return false;
    }
    bool found = false;
    for (const auto& b : jcStages[0].bundle().branches) {
      if (std::count(b.sources.begin(), b.sources.end(), d)) found = true;
      if (b.sources.empty()) {
        why = "consumer pipeline consumes all sources; cannot splice the producer in";
        return false;
      }
    }
    if (!found) {
      why = "consumer pipeline has no branch reading the packed dataset";
      return false;
    }
  }
  for (size_t i = 1; i < jcStages.size(); ++i)
    if (jcStages[i].is_bundle()) {
      why = "consumer pipeline has an interior bundle";
      return false;
    }
  // order-preserving splits must stay aligned across the merged input set
  if (has_constraint(jc, ConfigConstraint::Kind::OrderPreservingInput) ||
      has_constraint(jp, ConfigConstraint::Kind::OrderPreservingInput)) {
    int common = -1;
    auto jpInputs = plan.inputs_of(jp.id);
    std::vector<DatasetId> all = jpInputs;
    all.insert(all.end(), otherInputs.begin(), otherInputs.end());
    for (const auto& in : all) {
      const Edge* e = plan.input_edge(jp.id, in);
      if (!e) e = plan.input_edge(jc.id, in);
      int parts = (e && !e->partitions.empty()) ? static_cast<int>(e->partitions.size())
                                                : plan.datasets.at(in).layout.partitionCount;
      if (common >= 0 && parts != common) {
        why = "order-preserving split cannot align the merged inputs";
        return false;
      }
      common = parts;
    }
  }
  return true;
}

Job make_producer_absorbed(const Plan& plan, const Job& jpIn, const Job& jcIn, const DatasetId& d,
                           bool materialize) {
  Job jc = jcIn;
  const Job& jp = jpIn;
  auto jpStages = effective_map_stages(jp);
  auto jcStages = effective_map_stages(jc);
  auto otherInputs = plan.inputs_of(jc.id);
  otherInputs.erase(std::remove(otherInputs.begin(), otherInputs.end(), d), otherInputs.end());
  bool jpBundle = !jpStages.empty() && jpStages[0].is_bundle();
  bool jcBundle = !jcStages.empty() && jcStages[0].is_bundle();

  std::vector<FuncStage> jpFlat;
  for (size_t i = jpBundle ? 1 : 0; i < jpStages.size(); ++i) jpFlat.push_back(jpStages[i].func());
  if (materialize) {
    if (jpFlat.empty()) throw TransformError("materializing pack needs a flat producer pipeline");
    jpFlat.back().tee = d;
  }

  std::vector<Stage> pipeline;
  if (jcBundle) {
    BundleStage bundle = jcStages[0].bundle();
    for (auto& b : bundle.branches) {
      if (!std::count(b.sources.begin(), b.sources.end(), d)) continue;
      b.sources.erase(std::remove(b.sources.begin(), b.sources.end(), d), b.sources.end());
      for (const auto& in : plan.inputs_of(jp.id))
        if (!std::count(b.sources.begin(), b.sources.end(), in)) b.sources.push_back(in);
      std::sort(b.sources.begin(), b.sources.end());
      std::vector<FuncStage> stages = jpFlat;
      stages.insert(stages.end(), b.stages.begin(), b.stages.end());
      b.stages = std::move(stages);
      if (jp.annotations.schema) b.schema = jp.annotations.schema;
    }
    pipeline.push_back(Stage{bundle});
    for (size_t i = 1; i < jcStages.size(); ++i) pipeline.push_back(jcStages[i]);
  } else if (otherInputs.empty()) {
    pipeline = jpStages;
    for (const auto& s : jcStages) pipeline.push_back(s);
  } else {
    BundleStage bundle;
    if (jpBundle) {
      bundle = jpStages[0].bundle();
      for (auto& b : bundle.branches) {
        b.stages.insert(b.stages.end(), jpFlat.begin(), jpFlat.end());
      }
    } else {
      BundleBranch pb;
      pb.sources = plan.inputs_of(jp.id);
      pb.stages = jpFlat;
      pb.schema = jp.annotations.schema;
      bundle.branches.push_back(std::move(pb));
    }
    BundleBranch pass;
    pass.sources = otherInputs;
    pass.schema = jc.annotations.schema;
    bundle.branches.push_back(std::move(pass));
    for (size_t i = 0; i < bundle.branches.size(); ++i) bundle.branches[i].tag = static_cast<int>(i);
    pipeline.push_back(Stage{bundle});
    for (const auto& s : jcStages) {
      if (s.is_bundle()) throw TransformError("consumer pipeline has an interior bundle");
      pipeline.push_back(s);
    }
  }
  jc.program.mapPipeline = std::move(pipeline);
  jc.program.mapFn = jp.program.mapFn;

  // constraints: inherit the producer's input-side conditions, drop the edge
  // that just disappeared
  std::vector<ConfigConstraint> kept;
  for (const auto& c : jc.constraints) {
    if (c.kind == ConfigConstraint::Kind::MapTasksEqualProducerReduceTasks && c.producer == jp.id) continue;
    kept.push_back(c);
  }
  jc.constraints = std::move(kept);
  for (const auto& c : jp.constraints) add_constraint(jc, c);
  if (has_constraint(jc, ConfigConstraint::Kind::OrderPreservingInput)) jc.config.numMapTasks = jp.config.numMapTasks;

  // schema: the merged map side reads the producer's inputs (plus any other
  // surviving inputs)
  if (jc.annotations.schema && jp.annotations.schema) {
    jc.annotations.schema->k1 = dedup_concat(jp.annotations.schema->k1, jc.annotations.schema->k1);
    jc.annotations.schema->v1 = dedup_concat(jp.annotations.schema->v1, jc.annotations.schema->v1);
  } else if (jp.annotations.schema && !jc.annotations.schema) {
    // leave absent: downstream checks stay conservative
  }
  if (jp.annotations.filter) {
    if (!jc.annotations.filter)
      jc.annotations.filter = jp.annotations.filter;
    else
      jc.annotations.filter->predicates.insert(jc.annotations.filter->predicates.end(),
                                               jp.annotations.filter->predicates.begin(),
                                               jp.annotations.filter->predicates.end());
  }
  if (auto adjusted = merge_into_map_adjust(jpIn, jcIn))
    jc.annotations.profile = std::move(adjusted);
  else
    jc.annotations.profile.reset();
  return jc;
}

void rewire_producer_absorbed(Plan& out, const JobId& jpId, const JobId& jcId, const DatasetId& d,
                              bool keepDataset) {
  std::vector<Edge> jpInputs;
  for (const auto& e : out.edges)
    if (e.dir == EdgeDir::Input && e.job == jpId) jpInputs.push_back(e);
  out.edges.erase(std::remove_if(out.edges.begin(), out.edges.end(),
                                 [&](const Edge& e) {
                                   if (e.job == jpId) return true;
                                   if (e.job == jcId && e.dir == EdgeDir::Input && e.dataset == d) return true;
                                   return false;
                                 }),
                  out.edges.end());
  for (auto e : jpInputs) {
    e.job = jcId;
    if (!out.input_edge(jcId, e.dataset)) out.edges.push_back(std::move(e));
  }
  if (keepDataset) {
    out.edges.push_back({jcId, d, EdgeDir::Output, {}});
  } else {
    out.datasets.erase(d);
  }
  out.jobs.erase(jpId);
}

}  // namespace

CheckResult check_inter_vertical(const Plan& plan, const DatasetId& dataset) {
  if (!plan.datasets.count(dataset)) throw TransformError("unknown dataset '" + dataset + "'");
  CheckResult r;
  r.state = Applicability::NotApplicable;
  auto producer = plan.producer_of(dataset);
  if (!producer) {
    r.reason = "dataset has no producing job";
    return r;
  }
  auto consumers = plan.consumers_of(dataset);
  if (consumers.empty()) {
    r.reason = "dataset has no consumers";
    return r;
  }
  const Job& jp = plan.jobs.at(*producer);
  if (is_tag_routed(jp)) {
    r.reason = "producer output is tag-routed by horizontal packing";
    return r;
  }
  uint64_t fp = plan_fingerprint(plan);

  if (consumers.size() == 1) {
    const Job& jc = plan.jobs.at(consumers.front());
    if (is_tag_routed(jc)) {
      r.reason = "consumer is tag-routed by horizontal packing";
      return r;
    }
    std::string why = "neither job is Map-only";
    if (jp.program.map_only() && producer_absorbable(plan, jp, jc, dataset, why)) {
      TransformApplication app;
      app.kind = TransformKind::InterVertical;
      app.targetJobs = {*producer, jc.id};
      app.params = InterParams{dataset, InterParams::Variant::Simple, ""};
      app.planFingerprint = fp;
      r.state = Applicability::Applicable;
      r.applications.push_back(std::move(app));
      return r;
    }
    if (jc.program.map_only()) {
      if (plan.inputs_of(jc.id).size() != 1) {
        r.reason = "Map-only consumer reads other datasets besides the packed one";
        return r;
      }
      if (!stages_flat(jc.program.mapPipeline)) {
        r.reason = "consumer pipeline is source-routed";
        return r;
      }
      TransformApplication app;
      app.kind = TransformKind::InterVertical;
      app.targetJobs = {*producer, jc.id};
      app.params = InterParams{dataset, InterParams::Variant::Simple, ""};
      app.planFingerprint = fp;
      r.state = Applicability::Applicable;
      r.applications.push_back(std::move(app));
      return r;
    }
    r.reason = why;
    return r;
  }

  // one-to-many: a Map-only producer can replicate into all consumers or pack
  // with one of them while materializing the dataset for the rest
  if (!jp.program.map_only()) {
    r.reason = "one-to-many packing requires a Map-only producer";
    return r;
  }
  bool flatProducer = stages_flat(jp.program.mapPipeline);
  std::vector<JobId> absorbable;
  for (const auto& c : consumers) {
    const Job& jc = plan.jobs.at(c);
    std::string why;
    if (!is_tag_routed(jc) && producer_absorbable(plan, jp, jc, dataset, why)) absorbable.push_back(c);
  }
  if (absorbable.size() == consumers.size()) {
    TransformApplication app;
    app.kind = TransformKind::InterVertical;
    app.targetJobs = consumers;
    app.targetJobs.insert(app.targetJobs.begin(), *producer);
    app.params = InterParams{dataset, InterParams::Variant::ReplicateAll, ""};
    app.planFingerprint = fp;
    r.applications.push_back(std::move(app));
  }
  if (flatProducer) {
    for (const auto& c : absorbable) {
      TransformApplication app;
      app.kind = TransformKind::InterVertical;
      app.targetJobs = {*producer, c};
      app.params = InterParams{dataset, InterParams::Variant::PackOne, c};
      app.planFingerprint = fp;
      r.applications.push_back(std::move(app));
    }
  }
  if (r.applications.empty()) {
    r.reason = "no consumer can absorb the producer pipeline";
    return r;
  }
  r.state = Applicability::Applicable;
  return r;
}

Plan apply_inter_vertical(const Plan& plan, const TransformApplication& app) {
  check_fingerprint(plan, app);
  const auto& params = std::get<InterParams>(app.params);
  const DatasetId& d = params.dataset;
  auto producer = plan.producer_of(d);
  if (!producer) throw StaleApplication("inter-vertical packing target dataset lost its producer");
  const Job& jp = plan.jobs.at(*producer);
  auto consumers = plan.consumers_of(d);

  Plan out = plan;
  switch (params.variant) {
    case InterParams::Variant::Simple: {
      const Job& jc = plan.jobs.at(consumers.front());
      if (jp.program.map_only()) {
        out.jobs.at(jc.id) = make_producer_absorbed(plan, jp, jc, d, false);
        rewire_producer_absorbed(out, jp.id, jc.id, d, false);
      } else {
        // Map-only consumer moves into the producer's reduce side; the
        // surviving job keeps the consumer's identity.
        Job merged = jp;
        merged.id = jc.id;
        std::vector<FuncStage> reduceStages = flat_stages(effective_reduce_stages(jp), jp.id);
        for (const auto& s : flat_stages(effective_map_stages(jc), jc.id)) reduceStages.push_back(s);
        merged.program.reducePipeline.clear();
        for (auto& s : reduceStages) merged.program.reducePipeline.push_back(Stage{s});
        merged.program.reduceFn.reset();
        merged.config.outputCompression = jc.config.outputCompression;
        for (const auto& c : jc.constraints) {
          if (c.kind == ConfigConstraint::Kind::OrderPreservingInput) continue;
          if (c.kind == ConfigConstraint::Kind::MapTasksEqualProducerReduceTasks && c.producer == jp.id) continue;
          add_constraint(merged, c);
        }
        if (jp.annotations.schema && jc.annotations.schema) {
          SchemaAnnotation sch = *jp.annotations.schema;
          const auto& cs = *jc.annotations.schema;
          if (!cs.k3.empty() || !cs.v3.empty()) {
            sch.k3 = cs.k3;
            sch.v3 = cs.v3;
          } else {
            sch.k3 = cs.k2;
            sch.v3 = cs.v2;
          }
          merged.annotations.schema = std::move(sch);
        } else {
          merged.annotations.schema.reset();
        }
        merged.annotations.filter = jp.annotations.filter;
        if (auto adjusted = merge_into_reduce_adjust(jp, jc))
          merged.annotations.profile = std::move(adjusted);
        else
          merged.annotations.profile.reset();

        out.jobs.erase(jp.id);
        out.jobs.erase(jc.id);
        out.edges.erase(std::remove_if(out.edges.begin(), out.edges.end(),
                                       [&](const Edge& e) { return e.job == jp.id || e.job == jc.id; }),
                        out.edges.end());
        for (const auto& e : plan.edges) {
          if (e.job == jp.id && e.dir == EdgeDir::Input) out.edges.push_back({jc.id, e.dataset, e.dir, e.partitions});
          if (e.job == jc.id && e.dir == EdgeDir::Output) out.edges.push_back({jc.id, e.dataset, e.dir, {}});
        }
        out.datasets.erase(d);
        out.jobs[merged.id] = std::move(merged);
        // downstream jobs pinned to the consumer keep their alignment via the
        // surviving id; pins to the producer id must follow the merge
        for (auto& [id, job] : out.jobs)
          for (auto& c : job.constraints)
            if (c.kind == ConfigConstraint::Kind::MapTasksEqualProducerReduceTasks && c.producer == jp.id)
              c.producer = jc.id;
      }
      break;
    }
    case InterParams::Variant::ReplicateAll: {
      for (const auto& c : consumers) out.jobs.at(c) = make_producer_absorbed(plan, jp, plan.jobs.at(c), d, false);
      std::vector<Edge> jpInputs;
      for (const auto& e : plan.edges)
        if (e.dir == EdgeDir::Input && e.job == jp.id) jpInputs.push_back(e);
      out.edges.erase(std::remove_if(out.edges.begin(), out.edges.end(),
                                     [&](const Edge& e) {
                                       return e.job == jp.id || (e.dataset == d && e.dir == EdgeDir::Input);
                                     }),
                      out.edges.end());
      for (const auto& c : consumers)
        for (auto e : jpInputs)
          if (!out.input_edge(c, e.dataset)) out.edges.push_back({c, e.dataset, EdgeDir::Input, e.partitions});
      out.datasets.erase(d);
      out.jobs.erase(jp.id);
      break;
    }
    case InterParams::Variant::PackOne: {
      const Job& jc = plan.jobs.at(params.packConsumer);
      out.jobs.at(jc.id) = make_producer_absorbed(plan, jp, jc, d, true);
      rewire_producer_absorbed(out, jp.id, jc.id, d, true);
      break;
    }
  }
  propagate_task_counts(out);
  return finalize(std::move(out));
}

// ---------------------------------------------------------------------------
// horizontal packing
// ---------------------------------------------------------------------------

CheckResult check_horizontal(const Plan& plan, const std::vector<JobId>& jobs) {
  CheckResult r;
  r.state = Applicability::NotApplicable;
  if (jobs.size() < 2) {
    r.reason = "horizontal packing needs at least two jobs";
    return r;
  }
  std::vector<JobId> members = jobs;
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  if (members.size() != jobs.size()) {
    r.reason = "duplicate job in the candidate set";
    return r;
  }
  for (const auto& m : members)
    if (!plan.jobs.count(m)) throw TransformError("unknown job '" + m + "'");

  bool sharedInput = true;
  auto firstInputs = plan.inputs_of(members.front());
  for (const auto& m : members)
    if (plan.inputs_of(m) != firstInputs) sharedInput = false;

  if (!sharedInput) {
    for (size_t i = 0; i < members.size(); ++i)
      for (size_t j = 0; j < members.size(); ++j)
        if (i != j && plan.path_between(members[i], members[j])) {
          r.reason = "dependency path between '" + members[i] + "' and '" + members[j] + "'";
          return r;
        }
  }

  bool mapOnly = plan.jobs.at(members.front()).program.map_only();
  for (const auto& m : members) {
    const Job& job = plan.jobs.at(m);
    if (job.program.map_only() != mapOnly) {
      r.reason = "mixed Map-only and reduce jobs";
      return r;
    }
    if (job.program.has_bundle()) {
      r.reason = "job '" + m + "' is already packed";
      return r;
    }
    if (has_partition_pin(job)) {
      r.reason = "partition function of '" + m + "' is pinned by a prior packing";
      return r;
    }
    if (plan.outputs_of(m).size() != 1) {
      r.reason = "job '" + m + "' writes multiple datasets";
      return r;
    }
    if ((has_constraint(job, ConfigConstraint::Kind::OrderPreservingInput) ||
         has_constraint(job, ConfigConstraint::Kind::MapTasksEqualProducerReduceTasks)) &&
        !sharedInput) {
      r.reason = "chunk-aligned inputs of '" + m + "' cannot be merged";
      return r;
    }
  }
  if (sharedInput) {
    // members must agree on any chunk-alignment constraints and pruned subsets
    const Job& first = plan.jobs.at(members.front());
    for (const auto& m : members) {
      const Job& job = plan.jobs.at(m);
      if (has_constraint(job, ConfigConstraint::Kind::OrderPreservingInput) !=
          has_constraint(first, ConfigConstraint::Kind::OrderPreservingInput)) {
        r.reason = "members disagree on order-preserving input splits";
        return r;
      }
      for (const auto& d : firstInputs) {
        const Edge* ea = plan.input_edge(members.front(), d);
        const Edge* eb = plan.input_edge(m, d);
        if ((ea ? ea->partitions : std::vector<int>{}) != (eb ? eb->partitions : std::vector<int>{})) {
          r.reason = "members read different pruned subsets of '" + d + "'";
          return r;
        }
      }
    }
  }

  TransformApplication app;
  app.kind = TransformKind::Horizontal;
  app.targetJobs = members;
  app.params = HorizontalParams{members};
  app.planFingerprint = plan_fingerprint(plan);
  r.state = Applicability::Applicable;
  r.applications.push_back(std::move(app));
  return r;
}

Plan apply_horizontal(const Plan& plan, const TransformApplication& app) {
  check_fingerprint(plan, app);
  const auto& params = std::get<HorizontalParams>(app.params);
  CheckResult chk = check_horizontal(plan, params.members);
  if (!chk.applicable()) throw StaleApplication("horizontal packing no longer applicable: " + chk.reason);
  const auto& members = params.members;

  Job packed;
  packed.id = members.front();
  for (size_t i = 1; i < members.size(); ++i) packed.id += "+" + members[i];
  while (plan.jobs.count(packed.id)) packed.id += "x";

  bool mapOnly = plan.jobs.at(members.front()).program.map_only();
  BundleStage mapBundle, reduceBundle;
  Configuration cfg;
  cfg.numMapTasks = 0;
  cfg.numReduceTasks = 0;
  cfg.sortBufferMB = 0;
  for (size_t i = 0; i < members.size(); ++i) {
    const Job& m = plan.jobs.at(members[i]);
    BundleBranch mb;
    mb.tag = static_cast<int>(i);
    mb.sources = plan.inputs_of(m.id);
    mb.stages = flat_stages(effective_map_stages(m), m.id);
    mb.schema = m.annotations.schema;
    mb.partition = m.program.partition;
    if (m.config.combinerEnabled && m.program.combineFn) mb.combineFn = m.program.combineFn;
    if (mapOnly) mb.mapSink = plan.outputs_of(m.id).front();
    mapBundle.branches.push_back(std::move(mb));

    if (!mapOnly) {
      BundleBranch rb;
      rb.tag = static_cast<int>(i);
      rb.stages = flat_stages(effective_reduce_stages(m), m.id);
      rb.sink = plan.outputs_of(m.id).front();
      rb.schema = m.annotations.schema;
      rb.partition = m.program.partition;
      reduceBundle.branches.push_back(std::move(rb));
    }
    cfg.numMapTasks = std::max(cfg.numMapTasks, m.config.numMapTasks);
    cfg.numReduceTasks = std::max(cfg.numReduceTasks, m.config.numReduceTasks);
    cfg.sortBufferMB = std::max(cfg.sortBufferMB, m.config.sortBufferMB);
    cfg.mapOutputCompression = cfg.mapOutputCompression || m.config.mapOutputCompression;
    cfg.outputCompression = cfg.outputCompression || m.config.outputCompression;
    cfg.combinerEnabled = cfg.combinerEnabled || (m.config.combinerEnabled && m.program.combineFn.has_value());
    for (const auto& c : m.constraints) add_constraint(packed, c);
  }
  packed.program.mapFn = plan.jobs.at(members.front()).program.mapFn;
  packed.program.mapPipeline.push_back(Stage{std::move(mapBundle)});
  if (!mapOnly) packed.program.reducePipeline.push_back(Stage{std::move(reduceBundle)});
  packed.config = cfg;
  if (has_constraint(packed, ConfigConstraint::Kind::OrderPreservingInput))
    packed.config.numMapTasks = plan.jobs.at(members.front()).config.numMapTasks;
  if (auto adjusted = horizontal_adjust(plan, members)) packed.annotations.profile = std::move(adjusted);

  Plan out = plan;
  std::set<JobId> memberSet(members.begin(), members.end());
  std::vector<Edge> newEdges;
  std::set<std::pair<DatasetId, int>> seen;
  for (const auto& e : plan.edges) {
    if (!memberSet.count(e.job)) {
      newEdges.push_back(e);
      continue;
    }
    if (!seen.insert({e.dataset, static_cast<int>(e.dir)}).second) continue;
    newEdges.push_back({packed.id, e.dataset, e.dir, e.partitions});
  }
  out.edges = std::move(newEdges);
  for (const auto& m : members) out.jobs.erase(m);
  out.jobs[packed.id] = std::move(packed);
  return finalize(std::move(out));
}

// ---------------------------------------------------------------------------
// partition function transformation and pruning
// ---------------------------------------------------------------------------

Plan apply_partition_transform(const Plan& plan, const JobId& jobId, const PartitionSpec& newSpec) {
  auto it = plan.jobs.find(jobId);
  if (it == plan.jobs.end()) throw TransformError("unknown job '" + jobId + "'");
  if (it->second.program.map_only())
    throw TransformError("job '" + jobId + "' is Map-only and has no partition function");

  for (const auto& c : it->second.constraints) {
    switch (c.kind) {
      case ConfigConstraint::Kind::PartitionKeyFixed:
        if (newSpec.partitionKey != c.fields)
          throw TransformError("new partition function violates partitionKeyFixed on '" + jobId + "'");
        break;
      case ConfigConstraint::Kind::SortKeyFixed:
        if (newSpec.sortKey != c.fields)
          throw TransformError("new partition function violates sortKeyFixed on '" + jobId + "'");
        break;
      case ConfigConstraint::Kind::RangeSplitsFixed:
        if (newSpec.kind != PartitionKind::Range || newSpec.rangeSplits != c.splits)
          throw TransformError("new partition function violates rangeSplitsFixed on '" + jobId + "'");
        break;
      default: break;
    }
  }

  Plan out = plan;
  Job& job = out.jobs.at(jobId);
  job.program.partition = newSpec;
  if (newSpec.kind == PartitionKind::Range)
    job.config.numReduceTasks = static_cast<int>(newSpec.rangeSplits.size()) + 1;
  propagate_task_counts(out);
  return finalize(std::move(out));
}

RangeSplitResult derive_range_splits(const ProfileAnnotation& profile, const std::string& field, int partitions) {
  if (partitions < 2) throw TransformError("range splitting needs at least two partitions");
  auto it = profile.dataflow.keyHistograms.find(field);
  if (it == profile.dataflow.keyHistograms.end())
    throw ProfileError("partition transform needs a profile annotation with a key histogram for field '" + field +
                       "'");
  const Histogram& h = it->second;
  RangeSplitResult out;
  double total = h.total();
  if (total <= 0) {
    out.skewed = true;
    return out;
  }

  if (!h.equiWidth) {
    if (h.entries.size() < 2) {
      out.skewed = true;
      return out;
    }
    double cum = 0;
    size_t idx = 0;
    for (int k = 1; k < partitions; ++k) {
      double quota = total * static_cast<double>(k) / partitions;
      while (idx < h.entries.size() && cum < quota) cum += h.entries[idx++].second;
      if (idx >= h.entries.size()) break;
      const Scalar& split = h.entries[idx].first;
      if (out.splits.empty() || compare_ordered(out.splits.back(), split) < 0) out.splits.push_back(split);
    }
  } else {
    double width = (h.hi - h.lo) / static_cast<double>(h.buckets.size());
    double cum = 0;
    size_t b = 0;
    for (int k = 1; k < partitions; ++k) {
      double quota = total * static_cast<double>(k) / partitions;
      while (b < h.buckets.size() && cum + h.buckets[b] < quota) cum += h.buckets[b++];
      if (b >= h.buckets.size()) break;
      double frac = h.buckets[b] > 0 ? (quota - cum) / h.buckets[b] : 0;
      Scalar split = h.lo + width * (static_cast<double>(b) + frac);
      if (out.splits.empty() || compare_ordered(out.splits.back(), split) < 0) out.splits.push_back(split);
    }
  }
  if (out.splits.empty()) out.skewed = true;
  return out;
}

namespace {

// Keeps partition i iff its value interval can intersect the filter.
std::vector<int> intersect_partitions(const std::vector<Scalar>& boundaries, int partitionCount,
                                      const std::vector<FilterPredicate>& preds, const std::string& field) {
  std::vector<int> keep;
  for (int i = 0; i < partitionCount; ++i) {
    const Scalar* lo = i > 0 ? &boundaries[i - 1] : nullptr;                                   // inclusive
    const Scalar* hi = i < static_cast<int>(boundaries.size()) ? &boundaries[i] : nullptr;      // exclusive
    bool possible = true;
    for (const auto& p : preds) {
      if (p.field != field) continue;
      switch (p.cmp) {
        case Cmp::LT:
          if (lo && compare_ordered(*lo, p.literal) >= 0) possible = false;
          break;
        case Cmp::LE:
          if (lo && compare_ordered(*lo, p.literal) > 0) possible = false;
          break;
        case Cmp::EQ:
          if (lo && compare_ordered(p.literal, *lo) < 0) possible = false;
          if (hi && compare_ordered(p.literal, *hi) >= 0) possible = false;
          break;
        case Cmp::GE:
          if (hi && compare_ordered(*hi, p.literal) <= 0) possible = false;
          break;
        case Cmp::GT:
          if (hi && compare_ordered(*hi, p.literal) <= 0) possible = false;
          break;
      }
      if (!possible) break;
    }
    if (possible) keep.push_back(i);
  }
  return keep;
}

}  // namespace

CheckResult check_partition_pruning(const Plan& plan, const JobId& consumer) {
  auto it = plan.jobs.find(consumer);
  if (it == plan.jobs.end()) throw TransformError("unknown job '" + consumer + "'");
  CheckResult r;
  r.state = Applicability::NotApplicable;
  const Job& jc = it->second;
  if (!jc.annotations.filter) {
    r.reason = "consumer has no filter annotation";
    return r;
  }
  auto inputs = plan.inputs_of(consumer);
  bool orderPreserving = has_constraint(jc, ConfigConstraint::Kind::OrderPreservingInput);
  if (orderPreserving && inputs.size() > 1) {
    r.reason = "pruning would break the aligned input split";
    return r;
  }
  uint64_t fp = plan_fingerprint(plan);
  for (const auto& d : inputs) {
    const auto& l = plan.datasets.at(d).layout;
    if (l.kind != PartitionKind::Range || l.partitionFields.empty() || l.rangeBoundaries.empty()) continue;
    const std::string& field = l.partitionFields.front();
    bool filtered = std::any_of(jc.annotations.filter->predicates.begin(), jc.annotations.filter->predicates.end(),
                                [&](const auto& p) { return p.field == field; });
    if (!filtered) continue;
    std::vector<int> keep =
        intersect_partitions(l.rangeBoundaries, l.partitionCount, jc.annotations.filter->predicates, field);
    if (static_cast<int>(keep.size()) == l.partitionCount) continue;  // nothing to prune
    TransformApplication app;
    app.kind = TransformKind::PartitionFn;
    app.targetJobs = {consumer};
    app.params = PruneParams{consumer, d, keep};
    app.planFingerprint = fp;
    r.applications.push_back(std::move(app));
  }
  if (r.applications.empty()) {
    if (r.reason.empty())
      r.reason = "no range-partitioned input whose leading partition field matches the filter";
    return r;
  }
  r.state = Applicability::Applicable;
  return r;
}

Plan apply_prune(const Plan& plan, const TransformApplication& app) {
  check_fingerprint(plan, app);
  const auto& params = std::get<PruneParams>(app.params);
  Plan out = plan;
  Edge* e = out.input_edge(params.consumer, params.dataset);
  if (!e) throw StaleApplication("pruned input edge no longer exists");
  if (params.partitions.empty())
    throw TransformError("pruning '" + params.consumer + "' would remove every partition of '" + params.dataset +
                         "'");
  e->partitions = params.partitions;
  Job& jc = out.jobs.at(params.consumer);
  // drop the task-count pin tied to the producer; the order-preserving split
  // now follows the pruned subset
  if (auto producer = out.producer_of(params.dataset)) {
    jc.constraints.erase(std::remove_if(jc.constraints.begin(), jc.constraints.end(),
                                        [&](const ConfigConstraint& c) {
                                          return c.kind ==
                                                     ConfigConstraint::Kind::MapTasksEqualProducerReduceTasks &&
                                                 c.producer == *producer;
                                        }),
                         jc.constraints.end());
    Job& jp = out.jobs.at(*producer);
    if (jp.program.partition.kind == PartitionKind::Range)
      add_constraint(jp, {ConfigConstraint::Kind::RangeSplitsFixed, "", {}, jp.program.partition.rangeSplits});
  }
  if (has_constraint(jc, ConfigConstraint::Kind::OrderPreservingInput))
    jc.config.numMapTasks = static_cast<int>(params.partitions.size());
  return finalize(std::move(out));
}

Plan apply_partition_pruning(const Plan& plan, const JobId& consumer) {
  CheckResult chk = check_partition_pruning(plan, consumer);
  if (!chk.applicable()) {
    // distinguish "all partitions relevant" (identity) from real failures
    const Job& jc = plan.jobs.at(consumer);
    if (jc.annotations.filter) {
      for (const auto& d : plan.inputs_of(consumer)) {
        const auto& l = plan.datasets.at(d).layout;
        if (l.kind == PartitionKind::Range && !l.partitionFields.empty() && !l.rangeBoundaries.empty()) {
          const std::string& field = l.partitionFields.front();
          bool filtered =
              std::any_of(jc.annotations.filter->predicates.begin(), jc.annotations.filter->predicates.end(),
                          [&](const auto& p) { return p.field == field; });
          if (filtered) return plan;  // filter spans the whole domain: all partitions retained
        }
      }
    }
    throw TransformError("partition pruning not applicable on '" + consumer + "': " + chk.reason);
  }
  Plan out = plan;
  for (const auto& app : chk.applications) {
    TransformApplication bound = app;
    bound.planFingerprint = plan_fingerprint(out);
    out = apply_prune(out, bound);
  }
  return out;
}

// ---------------------------------------------------------------------------
// configuration transformation
// ---------------------------------------------------------------------------

Plan apply_configuration(const Plan& plan, const JobId& jobId, const Configuration& newConfig) {
  auto it = plan.jobs.find(jobId);
  if (it == plan.jobs.end()) throw TransformError("unknown job '" + jobId + "'");
  const Job& job = it->second;
  if (job.program.map_only() && newConfig.numReduceTasks != 0)
    throw TransformError("job '" + jobId + "' is Map-only; numReduceTasks must stay 0");
  if (!job.program.map_only() && newConfig.numReduceTasks < 1)
    throw TransformError("job '" + jobId + "' needs at least one reduce task");
  for (const auto& c : job.constraints) {
    if (c.kind == ConfigConstraint::Kind::RangeSplitsFixed &&
        newConfig.numReduceTasks != static_cast<int>(c.splits.size()) + 1)
      throw TransformError("new configuration violates rangeSplitsFixed on '" + jobId + "'");
  }
  Plan out = plan;
  out.jobs.at(jobId).config = newConfig;
  propagate_task_counts(out);
  return finalize(std::move(out));
}

Plan with_configurations(const Plan& plan, const std::map<JobId, Configuration>& configs, bool validate) {
  Plan out = plan;
  for (const auto& [id, cfg] : configs) {
    auto it = out.jobs.find(id);
    if (it == out.jobs.end()) throw TransformError("unknown job '" + id + "' in configuration assignment");
    it->second.config = cfg;
  }
  propagate_task_counts(out);
  for (auto& [id, ds] : out.datasets) {
    auto p = out.producer_of(id);
    if (!p) continue;
    DatasetLayout derived = derive_output_layout(out, *p);
    derived.partitionCount = output_partition_count(out.jobs.at(*p));
    ds.layout = derived;
  }
  if (validate) {
    std::sort(out.edges.begin(), out.edges.end(), [](const Edge& a, const Edge& b) {
      return std::tie(a.job, a.dataset, a.dir) < std::tie(b.job, b.dataset, b.dir);
    });
    out.validate();
  }
  return out;
}

// ---------------------------------------------------------------------------
// profile adjustment (public composition rule)
// ---------------------------------------------------------------------------

ProfileAnnotation adjust_profile(const ProfileAnnotation& upstream, const ProfileAnnotation& downstream,
                                 AdjustKind kind) {
  if (upstream.dataflow.mapInRecords <= 0 || downstream.dataflow.mapInRecords <= 0)
    throw ProfileError("profile adjustment needs measured record flows on both sides; fall back to the job-count "
                       "cost model");
  ProfileAnnotation out;
  const auto& a = upstream.dataflow;
  const auto& b = downstream.dataflow;
  if (kind == AdjustKind::Pipelined) {
    double selA = a.map_sel_records(), selB = b.map_sel_records();
    double selAb = a.map_sel_bytes(), selBb = b.map_sel_bytes();
    out.dataflow.mapInRecords = a.mapInRecords;
    out.dataflow.mapInBytes = a.mapInBytes;
    out.dataflow.mapOutRecords = a.mapInRecords * selA * selB;
    out.dataflow.mapOutBytes = a.mapInBytes * selAb * selBb;
    out.dataflow.reduceInRecords = b.reduceInRecords * selA;
    out.dataflow.reduceInBytes = b.reduceInBytes * selAb;
    out.dataflow.reduceOutRecords = b.reduceOutRecords * selA;
    out.dataflow.reduceOutBytes = b.reduceOutBytes * selAb;
    out.dataflow.mapOutDistinctKeys = b.mapOutDistinctKeys * std::min(1.0, selA);
    out.dataflow.keyHistograms = b.keyHistograms;
    scale_histograms(out.dataflow.keyHistograms, selA);
    out.costs = downstream.costs;
    out.costs.mapSecPerRecord = upstream.costs.mapSecPerRecord + selA * downstream.costs.mapSecPerRecord;
  } else {
    ProfileAnnotation tmpUp = upstream, tmpDown = downstream;
    out.dataflow.mapInRecords = std::max(a.mapInRecords, b.mapInRecords);
    out.dataflow.mapInBytes = std::max(a.mapInBytes, b.mapInBytes);
    out.dataflow.mapOutRecords = a.mapOutRecords + b.mapOutRecords;
    out.dataflow.mapOutBytes = a.mapOutBytes + b.mapOutBytes;
    out.dataflow.reduceInRecords = a.reduceInRecords + b.reduceInRecords;
    out.dataflow.reduceInBytes = a.reduceInBytes + b.reduceInBytes;
    out.dataflow.reduceOutRecords = a.reduceOutRecords + b.reduceOutRecords;
    out.dataflow.reduceOutBytes = a.reduceOutBytes + b.reduceOutBytes;
    out.dataflow.mapOutDistinctKeys = a.mapOutDistinctKeys + b.mapOutDistinctKeys;
    out.costs.mapSecPerRecord =
        (a.mapInRecords * upstream.costs.mapSecPerRecord + b.mapInRecords * downstream.costs.mapSecPerRecord) /
        out.dataflow.mapInRecords;
    double rin = out.dataflow.reduceInRecords;
    out.costs.reduceSecPerRecord =
        rin > 0 ? (a.reduceInRecords * upstream.costs.reduceSecPerRecord +
                   b.reduceInRecords * downstream.costs.reduceSecPerRecord) /
                      rin
                : 0;
    out.costs.readSecPerByte = std::max(upstream.costs.readSecPerByte, downstream.costs.readSecPerByte);
    out.costs.spillSortSecPerByte =
        std::max(upstream.costs.spillSortSecPerByte, downstream.costs.spillSortSecPerByte);
    out.costs.shuffleSecPerByte = std::max(upstream.costs.shuffleSecPerByte, downstream.costs.shuffleSecPerByte);
    out.costs.mergeSecPerByte = std::max(upstream.costs.mergeSecPerByte, downstream.costs.mergeSecPerByte);
    out.costs.writeSecPerByte = std::max(upstream.costs.writeSecPerByte, downstream.costs.writeSecPerByte);
  }
  out.provenance = upstream.provenance;
  out.provenance.insert(out.provenance.end(), downstream.provenance.begin(), downstream.provenance.end());
  if (out.provenance.empty()) out.provenance.push_back({"packed", kind == AdjustKind::Pipelined ? "map" : "bundle"});
  return out;
}

// ---------------------------------------------------------------------------
// signatures and replay
// ---------------------------------------------------------------------------

namespace {

std::string scalar_sig(const Scalar& s) {
  switch (s.index()) {
    case 0: return "i:" + scalar_to_text(s);
    case 1: return "f:" + scalar_to_text(s);
    case 2: return "s:" + scalar_to_text(s);
    default: return "b:" + scalar_to_text(s);
  }
}

Scalar scalar_from_sig(const std::string& text) {
  if (text.size() < 2 || text[1] != ':') throw TransformError("malformed scalar in signature: " + text);
  std::string body = text.substr(2);
  switch (text[0]) {
    case 'i': return scalar_from_text(FieldType::Int64, body);
    case 'f': return scalar_from_text(FieldType::Float64, body);
    case 's': return Scalar(body);
    case 'b': return scalar_from_text(FieldType::Bool, body);
  }
  throw TransformError("malformed scalar in signature: " + text);
}

std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep))
    if (!part.empty()) out.push_back(part);
  return out;
}

}  // namespace

std::string TransformApplication::signature() const {
  switch (kind) {
    case TransformKind::IntraVertical:
      return "intra(" + std::get<IntraParams>(params).consumer + ")";
    case TransformKind::InterVertical: {
      const auto& p = std::get<InterParams>(params);
      std::string s = "inter(" + p.dataset;
      if (p.variant == InterParams::Variant::ReplicateAll) s += ";replicate";
      if (p.variant == InterParams::Variant::PackOne) s += ";pack=" + p.packConsumer;
      return s + ")";
    }
    case TransformKind::Horizontal: {
      const auto& p = std::get<HorizontalParams>(params);
      std::string s;
      for (size_t i = 0; i < p.members.size(); ++i) s += (i ? "+" : "") + p.members[i];
      return "horizontal(" + s + ")";
    }
    case TransformKind::PartitionFn: {
      if (std::holds_alternative<PruneParams>(params)) {
        const auto& p = std::get<PruneParams>(params);
        std::vector<std::string> parts;
        for (int i : p.partitions) parts.push_back(std::to_string(i));
        return "prune(" + p.consumer + ";" + p.dataset + ";parts=" + join(parts, ",") + ")";
      }
      const auto& p = std::get<PartitionParams>(params);
      std::vector<std::string> splits;
      for (const auto& s : p.newSpec.rangeSplits) splits.push_back(scalar_sig(s));
      return "partition(" + p.job + ";kind=" + (p.newSpec.kind == PartitionKind::Hash ? "hash" : "range") +
             ";key=" + join(p.newSpec.partitionKey, ",") + ";sort=" + join(p.newSpec.sortKey, ",") +
             ";splits=" + join(splits, "|") + ")";
    }
    case TransformKind::Configuration: {
      const auto& p = std::get<ConfigParams>(params);
      const auto& c = p.newConfig;
      return "config(" + p.job + ";m=" + std::to_string(c.numMapTasks) + ",r=" + std::to_string(c.numReduceTasks) +
             ",buf=" + std::to_string(c.sortBufferMB) + ",moc=" + std::to_string(c.mapOutputCompression ? 1 : 0) +
             ",oc=" + std::to_string(c.outputCompression ? 1 : 0) +
             ",comb=" + std::to_string(c.combinerEnabled ? 1 : 0) + ")";
    }
  }
  return "identity";
}

TransformApplication parse_application(const Plan& plan, const std::string& signature) {
  auto open = signature.find('(');
  if (open == std::string::npos || signature.back() != ')')
    throw TransformError("malformed transform signature '" + signature + "'");
  std::string name = signature.substr(0, open);
  std::string body = signature.substr(open + 1, signature.size() - open - 2);
  auto args = split(body, ';');

  TransformApplication app;
  app.planFingerprint = plan_fingerprint(plan);
  if (name == "intra") {
    app.kind = TransformKind::IntraVertical;
    app.targetJobs = {body};
    app.params = IntraParams{body};
    return app;
  }
  if (name == "inter") {
    app.kind = TransformKind::InterVertical;
    InterParams p;
    p.dataset = args.at(0);
    for (size_t i = 1; i < args.size(); ++i) {
      if (args[i] == "replicate") p.variant = InterParams::Variant::ReplicateAll;
      if (args[i].rfind("pack=", 0) == 0) {
        p.variant = InterParams::Variant::PackOne;
        p.packConsumer = args[i].substr(5);
      }
    }
    app.params = p;
    return app;
  }
  if (name == "horizontal") {
    app.kind = TransformKind::Horizontal;
    HorizontalParams p;
    p.members = split(args.at(0), '+');
    app.targetJobs = p.members;
    app.params = p;
    return app;
  }
  if (name == "prune") {
    app.kind = TransformKind::PartitionFn;
    PruneParams p;
    p.consumer = args.at(0);
    p.dataset = args.at(1);
    for (const auto& a : args)
      if (a.rfind("parts=", 0) == 0)
        for (const auto& x : split(a.substr(6), ',')) p.partitions.push_back(std::stoi(x));
    app.targetJobs = {p.consumer};
    app.params = p;
    return app;
  }
  if (name == "partition") {
    app.kind = TransformKind::PartitionFn;
    PartitionParams p;
    p.job = args.at(0);
    for (const auto& a : args) {
      if (a.rfind("kind=", 0) == 0)
        p.newSpec.kind = a.substr(5) == "range" ? PartitionKind::Range : PartitionKind::Hash;
      if (a.rfind("key=", 0) == 0) p.newSpec.partitionKey = split(a.substr(4), ',');
      if (a.rfind("sort=", 0) == 0) p.newSpec.sortKey = split(a.substr(5), ',');
      if (a.rfind("splits=", 0) == 0)
        for (const auto& x : split(a.substr(7), '|')) p.newSpec.rangeSplits.push_back(scalar_from_sig(x));
    }
    app.targetJobs = {p.job};
    app.params = p;
    return app;
  }
  if (name == "config") {
    app.kind = TransformKind::Configuration;
    ConfigParams p;
    p.job = args.at(0);
    for (const auto& kv : split(args.at(1), ',')) {
      auto eq = kv.find('=');
      std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
      if (k == "m") p.newConfig.numMapTasks = std::stoi(v);
      if (k == "r") p.newConfig.numReduceTasks = std::stoi(v);
      if (k == "buf") p.newConfig.sortBufferMB = std::stoi(v);
      if (k == "moc") p.newConfig.mapOutputCompression = v == "1";
      if (k == "oc") p.newConfig.outputCompression = v == "1";
      if (k == "comb") p.newConfig.combinerEnabled = v == "1";
    }
    app.targetJobs = {p.job};
    app.params = p;
    return app;
  }
  throw TransformError("unknown transform signature '" + signature + "'");
}

Plan apply_application(const Plan& plan, const TransformApplication& app) {
  switch (app.kind) {
    case TransformKind::IntraVertical: return apply_intra_vertical(plan, app);
    case TransformKind::InterVertical: return apply_inter_vertical(plan, app);
    case TransformKind::Horizontal: return apply_horizontal(plan, app);
    case TransformKind::PartitionFn:
      if (std::holds_alternative<PruneParams>(app.params)) return apply_prune(plan, app);
      check_fingerprint(plan, app);
      return apply_partition_transform(plan, std::get<PartitionParams>(app.params).job,
                                       std::get<PartitionParams>(app.params).newSpec);
    case TransformKind::Configuration:
      check_fingerprint(plan, app);
      return apply_configuration(plan, std::get<ConfigParams>(app.params).job,
                                 std::get<ConfigParams>(app.params).newConfig);
  }
  throw TransformError("unhandled transform kind");
}

}  // namespace mrpack
