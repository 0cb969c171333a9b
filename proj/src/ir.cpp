#include "mrpack/ir.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

namespace mrpack {

bool Program::has_bundle() const {
  for (const auto& s : mapPipeline)
    if (s.is_bundle()) return true;
  for (const auto& s : reducePipeline)
    if (s.is_bundle()) return true;
  return false;
}

std::string constraint_kind_name(ConfigConstraint::Kind k) {
  switch (k) {
    case ConfigConstraint::Kind::MapTasksEqualProducerReduceTasks: return "mapTasksEqualProducerReduceTasks";
    case ConfigConstraint::Kind::OrderPreservingInput: return "orderPreservingInput";
    case ConfigConstraint::Kind::PartitionKeyFixed: return "partitionKeyFixed";
    case ConfigConstraint::Kind::SortKeyFixed: return "sortKeyFixed";
    case ConfigConstraint::Kind::RangeSplitsFixed: return "rangeSplitsFixed";
  }
  return "orderPreservingInput";
}

ConfigConstraint::Kind constraint_kind_from_name(std::string_view name) {
  if (name == "mapTasksEqualProducerReduceTasks") return ConfigConstraint::Kind::MapTasksEqualProducerReduceTasks;
  if (name == "orderPreservingInput") return ConfigConstraint::Kind::OrderPreservingInput;
  if (name == "partitionKeyFixed") return ConfigConstraint::Kind::PartitionKeyFixed;
  if (name == "sortKeyFixed") return ConfigConstraint::Kind::SortKeyFixed;
  if (name == "rangeSplitsFixed") return ConfigConstraint::Kind::RangeSplitsFixed;
  throw ParseError("unknown constraint kind: " + std::string(name));
}

std::string cmp_name(Cmp c) {
  switch (c) {
    case Cmp::LT: return "<";
    case Cmp::LE: return "<=";
    case Cmp::EQ: return "==";
    case Cmp::GE: return ">=";
    case Cmp::GT: return ">";
  }
  return "<";
}

Cmp cmp_from_name(std::string_view name) {
  if (name == "<") return Cmp::LT;
  if (name == "<=") return Cmp::LE;
  if (name == "==" || name == "=") return Cmp::EQ;
  if (name == ">=") return Cmp::GE;
  if (name == ">") return Cmp::GT;
  throw ParseError("unknown comparator: " + std::string(name));
}

bool cmp_eval(Cmp c, const Scalar& lhs, const Scalar& rhs) {
  int r = compare_scalar(lhs, rhs);
  switch (c) {
    case Cmp::LT: return r < 0;
    case Cmp::LE: return r <= 0;
    case Cmp::EQ: return r == 0;
    case Cmp::GE: return r >= 0;
    case Cmp::GT: return r > 0;
  }
  return false;
}

double Histogram::total() const {
  double t = 0;
  if (equiWidth) {
    for (double b : buckets) t += b;
  } else {
    for (const auto& [v, c] : entries) t += c;
  }
  return t;
}

double Histogram::distinct() const {
  if (!equiWidth) return static_cast<double>(entries.size());
  // Equi-width buckets do not track exact distinct counts; assume each
  // occupied bucket holds at least one distinct value and scale by width.
  double occupied = 0;
  for (double b : buckets) occupied += (b > 0) ? 1 : 0;
  double span = hi - lo;
  return std::max(occupied, std::min(span, total()));
}

Histogram build_histogram(std::vector<Scalar> values, size_t explicitLimit) {
  Histogram h;
  std::sort(values.begin(), values.end(), [](const Scalar& a, const Scalar& b) { return compare_scalar(a, b) < 0; });
  std::vector<std::pair<Scalar, double>> counted;
  for (const auto& v : values) {
    if (!counted.empty() && compare_scalar(counted.back().first, v) == 0)
      counted.back().second += 1;
    else
      counted.push_back({v, 1});
  }
  bool numeric = std::all_of(values.begin(), values.end(), [](const Scalar& s) { return s.index() <= 1; });
  if (counted.size() <= explicitLimit || !numeric) {
    h.entries = std::move(counted);
    return h;
  }
  h.equiWidth = true;
  h.lo = scalar_as_double(counted.front().first);
  h.hi = scalar_as_double(counted.back().first);
  double span = h.hi - h.lo;
  if (span <= 0) span = 1;
  h.buckets.assign(64, 0.0);
  for (const auto& [v, c] : counted) {
    int idx = static_cast<int>(std::floor((scalar_as_double(v) - h.lo) / span * 64));
    idx = std::clamp(idx, 0, 63);
    h.buckets[idx] += c;
  }
  return h;
}

std::string subgraph_kind_name(SubgraphKind k) {
  switch (k) {
    case SubgraphKind::OneToOne: return "one-to-one";
    case SubgraphKind::OneToMany: return "one-to-many";
    case SubgraphKind::ManyToOne: return "many-to-one";
    case SubgraphKind::NoneToOne: return "none-to-one";
    case SubgraphKind::OneToNone: return "one-to-none";
    case SubgraphKind::Hybrid: return "hybrid";
  }
  return "hybrid";
}

std::string slot_set_name(SlotSet s) {
  switch (s) {
    case SlotSet::MapInput: return "mapInput";
    case SlotSet::MapOutput: return "mapOutput";
    case SlotSet::ReduceInput: return "reduceInput";
    case SlotSet::ReduceOutput: return "reduceOutput";
  }
  return "mapInput";
}

std::optional<JobId> Plan::producer_of(const DatasetId& d) const {
  for (const auto& e : edges)
    if (e.dir == EdgeDir::Output && e.dataset == d) return e.job;
  return std::nullopt;
}

std::vector<JobId> Plan::consumers_of(const DatasetId& d) const {
  std::vector<JobId> out;
  for (const auto& e : edges)
    if (e.dir == EdgeDir::Input && e.dataset == d) out.push_back(e.job);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<DatasetId> Plan::inputs_of(const JobId& j) const {
  std::vector<DatasetId> out;
  for (const auto& e : edges)
    if (e.dir == EdgeDir::Input && e.job == j) out.push_back(e.dataset);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<DatasetId> Plan::outputs_of(const JobId& j) const {
  std::vector<DatasetId> out;
  for (const auto& e : edges)
    if (e.dir == EdgeDir::Output && e.job == j) out.push_back(e.dataset);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<DatasetId> Plan::base_datasets() const {
  std::vector<DatasetId> out;
  for (const auto& [id, d] : datasets)
    if (!producer_of(id)) out.push_back(id);
  return out;
}

std::vector<DatasetId> Plan::terminal_datasets() const {
  std::vector<DatasetId> out;
  for (const auto& [id, d] : datasets)
    if (consumers_of(id).empty()) out.push_back(id);
  return out;
}

const Edge* Plan::input_edge(const JobId& j, const DatasetId& d) const {
  for (const auto& e : edges)
    if (e.dir == EdgeDir::Input && e.job == j && e.dataset == d) return &e;
  return nullptr;
}

Edge* Plan::input_edge(const JobId& j, const DatasetId& d) {
  for (auto& e : edges)
    if (e.dir == EdgeDir::Input && e.job == j && e.dataset == d) return &e;
  return nullptr;
}

bool Plan::path_between(const JobId& from, const JobId& to) const {
  if (from == to) return false;
  std::vector<JobId> stack{from};
  std::set<JobId> seen;
  while (!stack.empty()) {
    JobId cur = stack.back();
    stack.pop_back();
    if (!seen.insert(cur).second) continue;
    for (const auto& d : outputs_of(cur)) {
      for (const auto& c : consumers_of(d)) {
        if (c == to) return true;
        stack.push_back(c);
      }
    }
  }
  return false;
}

namespace {

int selected_partition_count(const Plan& plan, const Edge& e) {
  if (!e.partitions.empty()) return static_cast<int>(e.partitions.size());
  return plan.datasets.at(e.dataset).layout.partitionCount;
}

void validate_partition_spec(const PartitionSpec& p, const std::string& where) {
  if (!p.partitionKey.empty()) {
    if (p.partitionKey.size() > p.sortKey.size() ||
        !std::equal(p.partitionKey.begin(), p.partitionKey.end(), p.sortKey.begin()))
      throw ValidationError(where + ": partitionKeyFields must be a prefix of sortKeyFields");
  }
  if (p.kind == PartitionKind::Range) {
    if (p.rangeSplits.empty()) throw ValidationError(where + ": range partitioning requires rangeSplits");
    if (p.partitionKey.empty()) throw ValidationError(where + ": range partitioning requires named partition key fields");
    for (size_t i = 1; i < p.rangeSplits.size(); ++i)
      if (compare_scalar(p.rangeSplits[i - 1], p.rangeSplits[i]) >= 0)
        throw ValidationError(where + ": rangeSplits must be strictly increasing");
  }
}

void validate_unique(const std::vector<std::string>& names, const std::string& where) {
  std::set<std::string> seen;
  for (const auto& n : names)
    if (!seen.insert(n).second) throw ValidationError(where + ": duplicate field name '" + n + "'");
}

}  // namespace

void Plan::validate() const {
  for (const auto& [id, job] : jobs)
    if (id != job.id) throw ValidationError("job map key '" + id + "' does not match job id '" + job.id + "'");
  for (const auto& [id, ds] : datasets)
    if (id != ds.id) throw ValidationError("dataset map key '" + id + "' does not match dataset id '" + id + "'");

  std::set<std::tuple<JobId, DatasetId, int>> edgeSet;
  std::map<DatasetId, std::vector<JobId>> producers;
  for (const auto& e : edges) {
    if (!jobs.count(e.job)) throw ValidationError("edge references unknown job '" + e.job + "'");
    if (!datasets.count(e.dataset)) throw ValidationError("edge references unknown dataset '" + e.dataset + "'");
    if (!edgeSet.insert({e.job, e.dataset, static_cast<int>(e.dir)}).second)
      throw ValidationError("duplicate edge between job '" + e.job + "' and dataset '" + e.dataset + "'");
    if (e.dir == EdgeDir::Output) {
      producers[e.dataset].push_back(e.job);
      if (!e.partitions.empty()) throw ValidationError("output edges cannot carry a partition subset");
    } else {
      const auto& layout = datasets.at(e.dataset).layout;
      int last = -1;
      for (int p : e.partitions) {
        if (p <= last) throw ValidationError("edge partition subset must be sorted and unique");
        if (p < 0 || p >= layout.partitionCount)
          throw ValidationError("edge partition index out of range for dataset '" + e.dataset + "'");
        last = p;
      }
    }
  }
  for (const auto& [d, ps] : producers)
    if (ps.size() > 1) throw ValidationError("dataset '" + d + "' has more than one producing job");

  for (const auto& [id, job] : jobs) {
    if (inputs_of(id).empty()) throw ValidationError("job '" + id + "' has no input dataset");
    if (outputs_of(id).empty()) throw ValidationError("job '" + id + "' has no output dataset");

    const auto& cfg = job.config;
    if (cfg.numMapTasks < 1) throw ValidationError("job '" + id + "': numMapTasks must be positive");
    if (cfg.numReduceTasks < 0) throw ValidationError("job '" + id + "': numReduceTasks must be non-negative");
    if (job.program.map_only() && cfg.numReduceTasks != 0)
      throw ValidationError("job '" + id + "': Map-only jobs must use numReduceTasks = 0");
    if (!job.program.map_only() && cfg.numReduceTasks == 0)
      throw ValidationError("job '" + id + "': jobs with a reduce side need numReduceTasks >= 1");
    if (cfg.sortBufferMB < 1) throw ValidationError("job '" + id + "': sortBufferMB must be positive");
    if (job.program.mapFn.empty()) throw ValidationError("job '" + id + "': map function required");

    validate_partition_spec(job.program.partition, "job '" + id + "'");

    for (const auto& c : job.constraints) {
      switch (c.kind) {
        case ConfigConstraint::Kind::MapTasksEqualProducerReduceTasks: {
          auto it = jobs.find(c.producer);
          if (it == jobs.end())
            throw ValidationError("job '" + id + "': constraint references unknown producer '" + c.producer + "'");
          const Job& prod = it->second;
          int prodParts = prod.program.map_only() ? prod.config.numMapTasks : prod.config.numReduceTasks;
          if (cfg.numMapTasks != prodParts)
            throw ValidationError("job '" + id + "': numMapTasks violates mapTasksEqualProducerReduceTasks(" +
                                  c.producer + ")");
          break;
        }
        case ConfigConstraint::Kind::OrderPreservingInput: {
          int common = -1;
          for (const auto& e : edges) {
            if (e.dir != EdgeDir::Input || e.job != id) continue;
            int parts = selected_partition_count(*this, e);
            if (common >= 0 && parts != common)
              throw ValidationError("job '" + id + "': orderPreservingInput requires aligned input partition counts");
            common = parts;
          }
          if (cfg.numMapTasks != common)
            throw ValidationError("job '" + id + "': numMapTasks violates orderPreservingInput");
          break;
        }
        case ConfigConstraint::Kind::PartitionKeyFixed:
          if (job.program.partition.partitionKey != c.fields)
            throw ValidationError("job '" + id + "': partition key violates partitionKeyFixed");
          break;
        case ConfigConstraint::Kind::SortKeyFixed:
          if (job.program.partition.sortKey != c.fields)
            throw ValidationError("job '" + id + "': sort key violates sortKeyFixed");
          break;
        case ConfigConstraint::Kind::RangeSplitsFixed:
          if (job.program.partition.kind != PartitionKind::Range || job.program.partition.rangeSplits != c.splits)
            throw ValidationError("job '" + id + "': partition function violates rangeSplitsFixed");
          if (cfg.numReduceTasks != static_cast<int>(c.splits.size()) + 1)
            throw ValidationError("job '" + id + "': numReduceTasks violates rangeSplitsFixed");
          break;
      }
    }

    if (const auto& sch = job.annotations.schema) {
      validate_unique(sch->k1, "job '" + id + "' K1");
      validate_unique(sch->v1, "job '" + id + "' V1");
      validate_unique(sch->k2, "job '" + id + "' K2");
      validate_unique(sch->v2, "job '" + id + "' V2");
      validate_unique(sch->k3, "job '" + id + "' K3");
      validate_unique(sch->v3, "job '" + id + "' V3");
      if (!job.program.map_only() && sch->k2.empty())
        throw ValidationError("job '" + id + "': K2 schema must be non-empty for jobs with a reduce function");
    }
    if (const auto& f = job.annotations.filter) {
      if (!job.annotations.schema)
        throw ValidationError("job '" + id + "': filter annotation requires a schema annotation");
      const auto& sch = *job.annotations.schema;
      for (const auto& p : f->predicates) {
        bool found = std::count(sch.k1.begin(), sch.k1.end(), p.field) ||
                     std::count(sch.v1.begin(), sch.v1.end(), p.field);
        if (!found)
          throw ValidationError("job '" + id + "': filter field '" + p.field + "' not present in K1/V1 schema");
      }
      if (f->passFraction && (*f->passFraction <= 0 || *f->passFraction > 1))
        throw ValidationError("job '" + id + "': filter pass fraction must be in (0,1]");
    }
    if (const auto& prof = job.annotations.profile) {
      const auto& df = prof->dataflow;
      if (df.mapInRecords <= 0 || df.mapOutRecords <= 0)
        throw ValidationError("job '" + id + "': profile record selectivities must be derivable and positive");
      if (!job.program.map_only() && (df.reduceInRecords <= 0 || df.reduceOutRecords <= 0))
        throw ValidationError("job '" + id + "': profile reduce selectivities must be derivable and positive");
      for (const auto& [field, h] : df.keyHistograms) {
        double t = h.total();
        if (std::abs(t - df.mapOutRecords) > 0.01 * df.mapOutRecords)
          throw ValidationError("job '" + id + "': histogram for '" + field +
                                "' does not sum to map-output record count within 1%");
      }
    }
  }

  for (const auto& [id, ds] : datasets) {
    const auto& l = ds.layout;
    if (l.partitionCount < 1) throw ValidationError("dataset '" + id + "': partition count must be >= 1");
    for (size_t i = 1; i < l.rangeBoundaries.size(); ++i)
      if (compare_scalar(l.rangeBoundaries[i - 1], l.rangeBoundaries[i]) >= 0)
        throw ValidationError("dataset '" + id + "': range boundaries must be strictly increasing");
    if (l.kind == PartitionKind::Range && !l.rangeBoundaries.empty() &&
        static_cast<int>(l.rangeBoundaries.size()) + 1 != l.partitionCount)
      throw ValidationError("dataset '" + id + "': range boundary count inconsistent with partition count");
  }

  if (cluster) {
    const auto& c = *cluster;
    if (c.nodeCount < 1 || c.mapSlotsPerNode < 1 || c.reduceSlotsPerNode < 1 || c.perSlotMemoryMB <= 0 ||
        c.diskMBps <= 0 || c.networkMBps <= 0)
      throw ValidationError("cluster spec fields must all be positive");
  }

  // Acyclicity: topological_job_order throws on a cycle.
  (void)topological_job_order(*this);
}

SubgraphKind classify_subgraph(const Plan& plan, const DatasetId& dataset) {
  if (!plan.datasets.count(dataset)) throw ValidationError("unknown dataset id '" + dataset + "'");
  auto producer = plan.producer_of(dataset);
  auto consumers = plan.consumers_of(dataset);

  if (consumers.empty()) return producer ? SubgraphKind::OneToNone : SubgraphKind::Hybrid;
  if (consumers.size() >= 2) return producer ? SubgraphKind::OneToMany : SubgraphKind::Hybrid;
  if (!producer) return SubgraphKind::NoneToOne;

  // Single producer, single consumer: look at the consumer's full input set to
  // separate one-to-one from many-to-one and mixed (hybrid) shapes.
  const JobId& c = consumers.front();
  std::set<JobId> prodJobs;
  bool hasBase = false;
  for (const auto& in : plan.inputs_of(c)) {
    if (auto p = plan.producer_of(in))
      prodJobs.insert(*p);
    else
      hasBase = true;
  }
  if (hasBase) return SubgraphKind::Hybrid;
  if (prodJobs.size() >= 2) return SubgraphKind::ManyToOne;
  return SubgraphKind::OneToOne;
}

std::vector<JobId> topological_job_order(const Plan& plan) {
  std::map<JobId, std::set<JobId>> upstream;
  for (const auto& [id, job] : plan.jobs) upstream[id];
  for (const auto& [id, job] : plan.jobs)
    for (const auto& d : plan.inputs_of(id))
      if (auto p = plan.producer_of(d)) upstream[id].insert(*p);

  std::set<JobId> ready;
  for (const auto& [id, ups] : upstream)
    if (ups.empty()) ready.insert(id);

  std::vector<JobId> order;
  std::set<JobId> done;
  while (!ready.empty()) {
    JobId next = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(next);
    done.insert(next);
    for (auto& [id, ups] : upstream) {
      if (done.count(id) || ready.count(id)) continue;
      ups.erase(next);
      if (ups.empty()) ready.insert(id);
    }
  }
  if (order.size() != plan.jobs.size()) throw ValidationError("cycle detected in workflow graph");
  return order;
}

namespace {

// A job's slot chain: [K1∪V1, K2∪V2, K3∪V3 (when a reduce side exists)].
int slot_ordinal(const Job& job, SlotSet s) {
  switch (s) {
    case SlotSet::MapInput: return 0;
    case SlotSet::MapOutput:
    case SlotSet::ReduceInput: return 1;
    case SlotSet::ReduceOutput: return job.program.map_only() ? 1 : 2;
  }
  return 0;
}

int chain_length(const Job& job) { return job.program.map_only() ? 2 : 3; }

Tri fields_in_slot(const Job& job, int ordinal, const std::vector<std::string>& fields) {
  const auto& sch = job.annotations.schema;
  if (!sch) return Tri::Unknown;
  const std::vector<std::string>*a = nullptr, *b = nullptr;
  switch (ordinal) {
    case 0: a = &sch->k1; b = &sch->v1; break;
    case 1: a = &sch->k2; b = &sch->v2; break;
    default: a = &sch->k3; b = &sch->v3; break;
  }
  for (const auto& f : fields) {
    if (!std::count(a->begin(), a->end(), f) && !std::count(b->begin(), b->end(), f)) return Tri::False;
  }
  return Tri::True;
}

void merge(Tri& acc, Tri t) {
  if (t == Tri::False) acc = Tri::False;
  else if (t == Tri::Unknown && acc == Tri::True) acc = Tri::Unknown;
}

void all_paths(const Plan& plan, const JobId& from, const JobId& to, std::vector<JobId>& cur,
               std::vector<std::vector<JobId>>& out) {
  cur.push_back(from);
  if (from == to) {
    out.push_back(cur);
  } else {
    for (const auto& d : plan.outputs_of(from))
      for (const auto& c : plan.consumers_of(d)) all_paths(plan, c, to, cur, out);
  }
  cur.pop_back();
}

}  // namespace

Tri fields_flow_unchanged(const Plan& plan, const JobId& fromJob, SlotSet fromSlot, const JobId& toJob,
                          SlotSet toSlot, const std::vector<std::string>& fields) {
  if (!plan.jobs.count(fromJob) || !plan.jobs.count(toJob))
    throw ValidationError("fields_flow_unchanged: unknown job id");
  if (fields.empty()) return Tri::True;

  Tri acc = Tri::True;
  if (fromJob == toJob) {
    const Job& j = plan.jobs.at(fromJob);
    int lo = slot_ordinal(j, fromSlot), hi = slot_ordinal(j, toSlot);
    if (lo > hi) return Tri::False;
    for (int s = lo; s <= hi; ++s) merge(acc, fields_in_slot(j, s, fields));
    return acc;
  }

  std::vector<std::vector<JobId>> paths;
  std::vector<JobId> cur;
  all_paths(plan, fromJob, toJob, cur, paths);
  if (paths.empty()) return Tri::False;

  for (const auto& path : paths) {
    for (size_t i = 0; i < path.size(); ++i) {
      const Job& j = plan.jobs.at(path[i]);
      int lo = (i == 0) ? slot_ordinal(j, fromSlot) : 0;
      int hi = (i + 1 == path.size()) ? slot_ordinal(j, toSlot) : chain_length(j) - 1;
      if (lo > hi) return Tri::False;
      for (int s = lo; s <= hi; ++s) merge(acc, fields_in_slot(j, s, fields));
      if (acc == Tri::False) return acc;
    }
  }
  return acc;
}

namespace {

// Output field names of a job's final stage, from explicit stage schemas when
// present, else from the job-level schema annotation.
std::optional<std::vector<std::string>> job_output_names(const Job& job) {
  const std::vector<Stage>* pipe = nullptr;
  if (!job.program.reducePipeline.empty())
    pipe = &job.program.reducePipeline;
  else if (job.program.map_only() && !job.program.mapPipeline.empty())
    pipe = &job.program.mapPipeline;
  if (pipe) {
    for (auto it = pipe->rbegin(); it != pipe->rend(); ++it) {
      if (it->is_bundle()) return std::nullopt;  // per-branch outputs, no single schema
      const FuncStage& f = it->func();
      if (!f.outKey.empty() || !f.outValue.empty()) {
        std::vector<std::string> names = f.outKey;
        names.insert(names.end(), f.outValue.begin(), f.outValue.end());
        return names;
      }
    }
  }
  const auto& sch = job.annotations.schema;
  if (!sch) return std::nullopt;
  std::vector<std::string> names;
  if (job.program.map_only() && sch->k3.empty() && sch->v3.empty()) {
    names = sch->k2;
    names.insert(names.end(), sch->v2.begin(), sch->v2.end());
  } else {
    names = sch->k3;
    names.insert(names.end(), sch->v3.begin(), sch->v3.end());
  }
  if (names.empty()) return std::nullopt;
  return names;
}

bool all_present(const std::vector<std::string>& fields, const std::vector<std::string>& names) {
  for (const auto& f : fields)
    if (!std::count(names.begin(), names.end(), f)) return false;
  return !fields.empty();
}

// Grouping fields of the last reduce-role stage; they give the emission order
// of the job's output when the names survive into the output schema.
std::vector<std::string> last_group_fields(const Job& job) {
  const std::vector<Stage>& pipe =
      job.program.map_only() ? job.program.mapPipeline : job.program.reducePipeline;
  for (auto it = pipe.rbegin(); it != pipe.rend(); ++it) {
    if (it->is_bundle()) return {};
    const FuncStage& f = it->func();
    if (f.role == StageRole::Reduce) {
      if (!f.group.empty()) return f.group;
      // whole-key grouping: the stage input key is the previous stage's outKey
      // or the job's K2 schema
      if (it + 1 != pipe.rend() && !(it + 1)->is_bundle() && !(it + 1)->func().outKey.empty())
        return (it + 1)->func().outKey;
      if (job.annotations.schema) return job.annotations.schema->k2;
      return {};
    }
    if (f.role == StageRole::Map) return {};  // a trailing map stage re-orders nothing but renames
  }
  if (!job.program.map_only()) {
    if (job.annotations.schema) return job.annotations.schema->k2;
  }
  return {};
}

}  // namespace

std::vector<Stage> effective_map_stages(const Job& job) {
  if (!job.program.mapPipeline.empty()) return job.program.mapPipeline;
  FuncStage f;
  f.role = StageRole::Map;
  f.fn = job.program.mapFn;
  if (job.annotations.schema) {
    f.outKey = job.annotations.schema->k2;
    f.outValue = job.annotations.schema->v2;
  }
  return {Stage{f}};
}

std::vector<Stage> effective_reduce_stages(const Job& job) {
  if (!job.program.reducePipeline.empty()) return job.program.reducePipeline;
  if (!job.program.reduceFn) return {};
  FuncStage f;
  f.role = StageRole::Reduce;
  f.fn = *job.program.reduceFn;
  // group left empty: whole-key grouping, the MapReduce default
  if (job.annotations.schema) {
    f.outKey = job.annotations.schema->k3;
    f.outValue = job.annotations.schema->v3;
  }
  return {Stage{f}};
}

DatasetLayout derive_output_layout(const Plan& plan, const JobId& jobId) {
  const Job& job = plan.jobs.at(jobId);
  DatasetLayout l;
  l.compressed = job.config.outputCompression;
  auto outNames = job_output_names(job);

  if (!job.program.map_only()) {
    l.partitionCount = job.config.numReduceTasks;
    if (job.program.has_bundle()) return l;  // tag-routed output: no field-level layout
    const auto& p = job.program.partition;
    if (!p.partitionKey.empty() && outNames && all_present(p.partitionKey, *outNames)) {
      l.partitionFields = p.partitionKey;
      l.kind = p.kind;
      if (p.kind == PartitionKind::Range) l.rangeBoundaries = p.rangeSplits;
    }
  } else {
    l.partitionCount = job.config.numMapTasks;
    bool orderPreserving = std::any_of(job.constraints.begin(), job.constraints.end(), [](const auto& c) {
      return c.kind == ConfigConstraint::Kind::OrderPreservingInput;
    });
    if (orderPreserving && outNames) {
      // Chunk-per-partition execution mirrors the input partitioning.
      auto inputs = plan.inputs_of(jobId);
      std::optional<DatasetLayout> common;
      for (const auto& d : inputs) {
        const auto& dl = plan.datasets.at(d).layout;
        if (!common)
          common = dl;
        else if (common->partitionFields != dl.partitionFields || common->kind != dl.kind ||
                 common->rangeBoundaries != dl.rangeBoundaries)
          common.reset();
        if (!common) break;
      }
      if (common && !common->partitionFields.empty() && all_present(common->partitionFields, *outNames)) {
        l.partitionFields = common->partitionFields;
        l.kind = common->kind;
        l.rangeBoundaries = common->rangeBoundaries;
      }
    }
  }

  auto group = last_group_fields(job);
  if (!group.empty() && outNames && all_present(group, *outNames)) l.orderingFields = group;
  return l;
}

}  // namespace mrpack
