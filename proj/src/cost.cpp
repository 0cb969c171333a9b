#include "mrpack/cost.hpp"

#include <algorithm>
#include <cmath>

namespace mrpack {

namespace {

constexpr double kMB = 1024.0 * 1024.0;

int count_stages(const Job& job) {
  int n = 0;
  auto scan = [&](const std::vector<Stage>& pipe) {
    for (const auto& s : pipe) {
      if (s.is_bundle()) {
        for (const auto& b : s.bundle().branches) n += static_cast<int>(b.stages.size());
      } else {
        ++n;
      }
    }
  };
  scan(job.program.mapPipeline);
  scan(job.program.reducePipeline);
  if (job.program.mapPipeline.empty()) ++n;
  if (job.program.reducePipeline.empty() && job.program.reduceFn) ++n;
  return std::max(n, 1);
}

// Distinct count of the partition-key tuple, from histograms. A lower bound:
// the max per-field distinct count over the partition fields.
double partition_key_distinct(const Job& job) {
  const auto& prof = job.annotations.profile;
  if (!prof) return 0;
  const auto& d = prof->dataflow;
  const auto& fields = job.program.partition.partitionKey;
  if (fields.empty()) return d.mapOutDistinctKeys;
  double best = 0;
  bool found = false;
  for (const auto& f : fields) {
    auto it = d.keyHistograms.find(f);
    if (it == d.keyHistograms.end()) continue;
    found = true;
    best = std::max(best, it->second.distinct());
  }
  if (!found) return d.mapOutDistinctKeys;
  return best;
}

}  // namespace

JobCostEstimate estimate_job(const Job& job, const InputStats& input, const ClusterSpec& cluster) {
  if (!job.annotations.profile)
    throw ProfileError("job '" + job.id + "' has no profile annotation; use the job-count fallback model");
  const ProfileAnnotation& prof = *job.annotations.profile;
  const auto& cal = cluster.calibration;

  JobCostEstimate est;
  int m = std::max(1, job.config.numMapTasks);
  int wm = cluster.map_wave_width();
  est.mapWaves = static_cast<int>(std::ceil(static_cast<double>(m) / wm));
  double pm = static_cast<double>(std::min(m, wm));

  bool mapOnly = job.program.map_only();
  int r = job.config.numReduceTasks;
  if (!mapOnly) {
    int wr = cluster.reduce_wave_width();
    est.reduceWaves = static_cast<int>(std::ceil(static_cast<double>(r) / wr));
  }

  if (input.records <= 0) {
    // Startup floor: task scheduling cost dominates an empty run.
    est.phaseSeconds = {{"read", 0}, {"mapCompute", 0}, {"spillSort", 0}, {"shuffle", 0},
                        {"merge", 0}, {"reduceCompute", 0}, {"write", 0}};
    est.totalSeconds = cal.startupFloorSec * (est.mapWaves + est.reduceWaves);
    return est;
  }

  double read = input.bytes / (cluster.diskMBps * kMB) / pm * est.mapWaves;
  double mapCompute =
      input.records * prof.costs.mapSecPerRecord / pm * est.mapWaves + cal.startupFloorSec * est.mapWaves;

  double mapOutRecords = input.records * prof.dataflow.map_sel_records();
  double mapOutBytes = input.bytes * prof.dataflow.map_sel_bytes();

  double spillSort = 0, shuffle = 0, merge = 0, reduceCompute = 0, write = 0;
  double outRecords, outBytes;

  if (mapOnly) {
    outRecords = mapOutRecords;
    outBytes = mapOutBytes;
    double wrBytes = outBytes * (job.config.outputCompression ? cal.compressionFactor : 1.0);
    write = wrBytes / (cluster.diskMBps * kMB) / pm * est.mapWaves;
  } else {
    double shuffleRecords = mapOutRecords;
    double shuffleBytes = mapOutBytes;
    if (job.config.combinerEnabled && prof.dataflow.combineOutRecords >= 0) {
      shuffleRecords *= prof.dataflow.combine_sel_records();
      shuffleBytes *= prof.dataflow.combine_sel_bytes();
    }

    double distinct = partition_key_distinct(job);
    int rEff = distinct > 0 ? std::min(r, static_cast<int>(std::ceil(distinct))) : r;
    double pr = static_cast<double>(std::min(rEff, cluster.reduce_wave_width()));
    pr = std::max(pr, 1.0);

    double perTaskOut = mapOutBytes / m;
    double bufBytes = static_cast<double>(job.config.sortBufferMB) * kMB;
    double spillFactor = 1.0 + std::max(0.0, std::ceil(perTaskOut / bufBytes) - 1.0);
    double pressure = count_stages(job) * cal.stageBufferMB / cluster.perSlotMemoryMB;
    double contention = pressure > 1.0 ? 1.0 + cal.contentionCoeff * (pressure - 1.0) : 1.0;
    spillSort = mapOutBytes * prof.costs.spillSortSecPerByte * spillFactor * contention / pm * est.mapWaves;

    double netBytes = shuffleBytes * (job.config.mapOutputCompression ? cal.compressionFactor : 1.0);
    shuffle = netBytes / (cluster.networkMBps * kMB) / pr * est.reduceWaves;
    merge = shuffleBytes * prof.costs.mergeSecPerByte / pr * est.reduceWaves;
    reduceCompute = shuffleRecords * prof.costs.reduceSecPerRecord / pr * est.reduceWaves +
                    cal.startupFloorSec * est.reduceWaves;

    outRecords = shuffleRecords * prof.dataflow.reduce_sel_records();
    outBytes = shuffleBytes * prof.dataflow.reduce_sel_bytes();
    double wrBytes = outBytes * (job.config.outputCompression ? cal.compressionFactor : 1.0);
    write = wrBytes / (cluster.diskMBps * kMB) / pr * est.reduceWaves;
  }

  est.phaseSeconds = {{"read", read},   {"mapCompute", mapCompute}, {"spillSort", spillSort}, {"shuffle", shuffle},
                      {"merge", merge}, {"reduceCompute", reduceCompute}, {"write", write}};
  est.totalSeconds = 0;
  for (const auto& [k, v] : est.phaseSeconds) est.totalSeconds += v;
  est.outRecords = outRecords;
  est.outBytes = outBytes;
  return est;
}

PlanCostEstimate estimate_plan(const Plan& plan, const ClusterSpec& cluster) {
  PlanCostEstimate out;
  std::map<DatasetId, InputStats> stats;
  for (const auto& d : plan.base_datasets()) {
    const auto& ann = plan.datasets.at(d).annotations;
    if (!ann.sizeBytes || !ann.recordCount)
      throw ProfileError("base dataset '" + d + "' has no size annotations; use the job-count fallback model");
    stats[d] = {*ann.recordCount, *ann.sizeBytes};
  }

  std::map<JobId, int> depth;
  for (const auto& j : topological_job_order(plan)) {
    InputStats in;
    int dep = 0;
    for (const auto& d : plan.inputs_of(j)) {
      auto it = stats.find(d);
      if (it == stats.end())
        throw ProfileError("dataset '" + d + "' has no propagated statistics; use the job-count fallback model");
      double share = 1.0;
      const Edge* e = plan.input_edge(j, d);
      const auto& layout = plan.datasets.at(d).layout;
      if (e && !e->partitions.empty() && layout.partitionCount > 0)
        share = static_cast<double>(e->partitions.size()) / layout.partitionCount;
      in.records += it->second.records * share;
      in.bytes += it->second.bytes * share;
      if (auto p = plan.producer_of(d)) dep = std::max(dep, depth.at(*p) + 1);
    }
    depth[j] = dep;
    JobCostEstimate je = estimate_job(plan.jobs.at(j), in, cluster);
    for (const auto& d : plan.outputs_of(j)) {
      // a job's primary output carries the predicted flow; auxiliary
      // (materialized) outputs reuse it
      stats[d] = {je.outRecords, je.outBytes};
    }
    out.perJob[j] = std::move(je);
  }

  std::map<int, std::pair<double, JobId>> levelMax;
  for (const auto& [j, d] : depth) {
    double t = out.perJob.at(j).totalSeconds;
    auto it = levelMax.find(d);
    if (it == levelMax.end() || t > it->second.first) levelMax[d] = {t, j};
  }
  for (const auto& [lvl, best] : levelMax) {
    out.totalSeconds += best.first;
    out.criticalPath.push_back(best.second);
  }
  return out;
}

PlanCostEstimate fallback_cost(const Plan& plan) {
  PlanCostEstimate out;
  for (const auto& [id, job] : plan.jobs) {
    JobCostEstimate je;
    je.totalSeconds = 1;
    out.perJob[id] = je;
    out.totalSeconds += 1;
  }
  return out;
}

std::string cost_model_name(CostModel m) { return m == CostModel::Analytical ? "analytical" : "jobcount"; }

CostModel cost_model_from_name(const std::string& name) {
  if (name == "analytical") return CostModel::Analytical;
  if (name == "jobcount") return CostModel::JobCount;
  throw ParseError("unknown cost model '" + name + "' (expected analytical or jobcount)");
}

PlanCostEstimate CostEstimator::estimate(const Plan& plan) const {
  if (model == CostModel::JobCount) return fallback_cost(plan);
  return estimate_plan(plan, cluster);
}

}  // namespace mrpack
