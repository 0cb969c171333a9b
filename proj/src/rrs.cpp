#include "mrpack/rrs.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mrpack/transforms.hpp"

namespace mrpack {

namespace {

double unit_rand(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;  // uniform in [0,1)
}

size_t to_index(double u, size_t n) { return std::min(n - 1, static_cast<size_t>(u * static_cast<double>(n))); }

}  // namespace

std::pair<std::vector<size_t>, double> rrs_minimize(const std::vector<size_t>& domainSizes,
                                                    const std::function<double(const std::vector<size_t>&)>& costAt,
                                                    const RrsParams& params, RrsTrace* trace,
                                                    const std::optional<std::vector<size_t>>& incumbent) {
  const size_t d = domainSizes.size();
  std::mt19937_64 rng(params.seed);

  std::vector<size_t> bestIdx(d, 0);
  double bestCost = std::numeric_limits<double>::infinity();
  int evals = 0;

  auto evaluate = [&](const std::vector<size_t>& idx) {
    double c = costAt(idx);
    ++evals;
    if (c < bestCost) {
      bestCost = c;
      bestIdx = idx;
    }
    if (trace) trace->bestSoFar.push_back(bestCost);
    return c;
  };

  if (d == 0) {
    evaluate({});
    if (trace) trace->evaluations = evals;
    return {bestIdx, bestCost};
  }

  double minStep = 1.0;
  for (size_t n : domainSizes) minStep = std::min(minStep, 1.0 / static_cast<double>(std::max<size_t>(n, 1)));

  std::vector<double> center(d, 0.5);
  if (incumbent) {
    std::vector<size_t> idx = *incumbent;
    for (size_t i = 0; i < d; ++i) {
      idx[i] = std::min(idx[i], domainSizes[i] - 1);
      center[i] = (static_cast<double>(idx[i]) + 0.5) / static_cast<double>(domainSizes[i]);
    }
    evaluate(idx);
  }

  auto sample_global = [&]() {
    std::vector<size_t> idx(d);
    std::vector<double> pt(d);
    for (size_t i = 0; i < d; ++i) {
      pt[i] = unit_rand(rng);
      idx[i] = to_index(pt[i], domainSizes[i]);
    }
    return std::pair{pt, idx};
  };

  while (evals < params.totalBudget) {
    // explore: uniform samples, keep the best as the region center
    std::vector<double> regionCenter = center;
    double regionBest = std::numeric_limits<double>::infinity();
    for (int k = 0; k < params.exploreSamples && evals < params.totalBudget; ++k) {
      auto [pt, idx] = sample_global();
      double c = evaluate(idx);
      if (c < regionBest) {
        regionBest = c;
        regionCenter = pt;
      }
    }
    if (evals >= params.totalBudget) break;

    // exploit: shrink a box around the region center
    double radius = 0.25;
    int nonImproving = 0;
    int regionSamples = 0;
    while (evals < params.totalBudget && radius >= minStep && regionSamples < params.exploitSamples) {
      std::vector<size_t> idx(d);
      std::vector<double> pt(d);
      for (size_t i = 0; i < d; ++i) {
        double lo = std::max(0.0, regionCenter[i] - radius);
        double hi = std::min(1.0, regionCenter[i] + radius);
        pt[i] = lo + unit_rand(rng) * (hi - lo);
        idx[i] = to_index(pt[i], domainSizes[i]);
      }
      double c = evaluate(idx);
      ++regionSamples;
      if (c < regionBest) {
        regionBest = c;
        regionCenter = pt;
        nonImproving = 0;
      } else if (++nonImproving >= params.restartThreshold) {
        radius *= params.shrinkRatio;
        nonImproving = 0;
      }
    }
  }

  if (trace) trace->evaluations = evals;
  return {bestIdx, bestCost};
}

size_t ConfigDim::size() const {
  switch (field) {
    case Field::MapTasks:
    case Field::ReduceTasks: return static_cast<size_t>(hi - lo + 1);
    case Field::SortBuffer: return choices.size();
    case Field::MapOutputCompression:
    case Field::OutputCompression:
    case Field::Combiner: return 2;
  }
  return 1;
}

std::string ConfigDim::name() const {
  switch (field) {
    case Field::MapTasks: return job + ".numMapTasks";
    case Field::ReduceTasks: return job + ".numReduceTasks";
    case Field::SortBuffer: return job + ".sortBufferMB";
    case Field::MapOutputCompression: return job + ".mapOutputCompression";
    case Field::OutputCompression: return job + ".outputCompression";
    case Field::Combiner: return job + ".combinerEnabled";
  }
  return job;
}

namespace {

// Union-find over "partition count" variables. Each job contributes a map
// task count and an output partition count (the same variable for Map-only
// jobs). Alignment constraints merge classes; base datasets, pinned splits
// and out-of-scope jobs pin a class to a constant.
struct CountClasses {
  std::map<std::string, std::string> parent;
  std::map<std::string, int> pin;  // root -> pinned value

  static std::string var(const Plan& plan, const JobId& j, bool output) {
    if (plan.jobs.at(j).program.map_only()) return j + "#o";
    return j + (output ? "#o" : "#m");
  }

  std::string find(const std::string& x) {
    auto it = parent.find(x);
    if (it == parent.end()) {
      parent[x] = x;
      return x;
    }
    if (it->second == x) return x;
    std::string root = find(it->second);
    parent[x] = root;
    return root;
  }

  void unite(const std::string& a, const std::string& b) {
    std::string ra = find(a), rb = find(b);
    if (ra == rb) return;
    // keep a deterministic root and merge pins
    if (rb < ra) std::swap(ra, rb);
    parent[rb] = ra;
    auto it = pin.find(rb);
    if (it != pin.end()) {
      pin[ra] = it->second;
      pin.erase(it);
    }
  }

  void pin_to(const std::string& x, int value) { pin[find(x)] = value; }
  std::optional<int> pinned(const std::string& x) {
    auto it = pin.find(find(x));
    if (it == pin.end()) return std::nullopt;
    return it->second;
  }
};

CountClasses build_count_classes(const Plan& plan, const std::set<JobId>& searchSet) {
  CountClasses cc;
  for (const auto& [id, job] : plan.jobs) {
    for (const auto& c : job.constraints) {
      switch (c.kind) {
        case ConfigConstraint::Kind::MapTasksEqualProducerReduceTasks:
          if (plan.jobs.count(c.producer))
            cc.unite(CountClasses::var(plan, id, false), CountClasses::var(plan, c.producer, true));
          break;
        case ConfigConstraint::Kind::OrderPreservingInput:
          for (const auto& d : plan.inputs_of(id)) {
            auto p = plan.producer_of(d);
            const Edge* e = plan.input_edge(id, d);
            if (e && !e->partitions.empty()) {
              // pruned input: the split is fixed by the pruned subset
              cc.pin_to(CountClasses::var(plan, id, false), static_cast<int>(e->partitions.size()));
            } else if (p) {
              cc.unite(CountClasses::var(plan, id, false), CountClasses::var(plan, *p, true));
            } else {
              cc.pin_to(CountClasses::var(plan, id, false), plan.datasets.at(d).layout.partitionCount);
            }
          }
          break;
        case ConfigConstraint::Kind::RangeSplitsFixed:
          cc.pin_to(CountClasses::var(plan, id, true), static_cast<int>(c.splits.size()) + 1);
          break;
        default: break;
      }
    }
    if (!job.program.map_only() && job.program.partition.kind == PartitionKind::Range)
      cc.pin_to(CountClasses::var(plan, id, true), static_cast<int>(job.program.partition.rangeSplits.size()) + 1);
  }
  // jobs outside the search scope keep their current counts
  for (const auto& [id, job] : plan.jobs) {
    if (searchSet.count(id)) continue;
    cc.pin_to(CountClasses::var(plan, id, false), job.config.numMapTasks);
    cc.pin_to(CountClasses::var(plan, id, true),
              job.program.map_only() ? job.config.numMapTasks : job.config.numReduceTasks);
  }
  return cc;
}

}  // namespace

ConfigSpaceDescriptor build_config_space(const Plan& plan, const std::vector<JobId>& jobs,
                                         const ConfigBounds& bounds) {
  ConfigSpaceDescriptor space;
  space.jobs = jobs;
  std::sort(space.jobs.begin(), space.jobs.end());
  std::set<JobId> searchSet(space.jobs.begin(), space.jobs.end());
  CountClasses cc = build_count_classes(plan, searchSet);

  // one task-count dimension per free alignment class
  std::map<std::string, std::vector<std::pair<JobId, bool>>> classes;
  for (const auto& id : space.jobs) {
    const Job& job = plan.jobs.at(id);
    classes[cc.find(CountClasses::var(plan, id, false))].push_back({id, job.program.map_only()});
    if (!job.program.map_only()) classes[cc.find(CountClasses::var(plan, id, true))].push_back({id, true});
  }
  for (auto& [root, members] : classes) {
    if (cc.pinned(root)) continue;
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    bool anyOutput = std::any_of(members.begin(), members.end(), [](const auto& m) { return m.second; });
    int hi = anyOutput ? std::min(bounds.maxMapTasks, bounds.maxReduceTasks) : bounds.maxMapTasks;
    if (!anyOutput) hi = bounds.maxMapTasks;
    if (members.size() == 1) hi = members.front().second ? bounds.maxReduceTasks : bounds.maxMapTasks;
    ConfigDim dim;
    dim.job = members.front().first;
    dim.field = anyOutput ? ConfigDim::Field::ReduceTasks : ConfigDim::Field::MapTasks;
    dim.lo = 1;
    dim.hi = hi;
    dim.members = members;
    space.dims.push_back(std::move(dim));
  }

  for (const auto& id : space.jobs) {
    const Job& job = plan.jobs.at(id);
    bool mapOnly = job.program.map_only();
    if (!mapOnly) {
      space.dims.push_back({id, ConfigDim::Field::SortBuffer, 0, 0, bounds.sortBufferMB, {}});
      space.dims.push_back({id, ConfigDim::Field::MapOutputCompression, 0, 0, {}, {}});
    }
    space.dims.push_back({id, ConfigDim::Field::OutputCompression, 0, 0, {}, {}});
    bool hasCombiner = job.program.combineFn.has_value();
    if (!hasCombiner)
      for (const auto& s : job.program.mapPipeline)
        if (s.is_bundle())
          for (const auto& b : s.bundle().branches)
            if (b.combineFn) hasCombiner = true;
    if (!mapOnly && hasCombiner) space.dims.push_back({id, ConfigDim::Field::Combiner, 0, 0, {}, {}});
  }

  std::sort(space.dims.begin(), space.dims.end(), [](const ConfigDim& a, const ConfigDim& b) {
    return std::tie(a.job, a.field) < std::tie(b.job, b.field);
  });
  return space;
}

std::map<JobId, Configuration> decode_config_point(const Plan& plan, const ConfigSpaceDescriptor& space,
                                                   const std::vector<size_t>& point) {
  std::map<JobId, Configuration> out;
  for (const auto& id : space.jobs) out[id] = plan.jobs.at(id).config;
  for (size_t i = 0; i < space.dims.size(); ++i) {
    const ConfigDim& dim = space.dims[i];
    size_t v = point[i];
    if (dim.field == ConfigDim::Field::MapTasks || dim.field == ConfigDim::Field::ReduceTasks) {
      int count = dim.lo + static_cast<int>(v);
      for (const auto& [job, isOutput] : dim.members) {
        Configuration& cfg = out[job];
        if (isOutput && !plan.jobs.at(job).program.map_only())
          cfg.numReduceTasks = count;
        else
          cfg.numMapTasks = count;
      }
      continue;
    }
    Configuration& cfg = out[dim.job];
    switch (dim.field) {
      case ConfigDim::Field::SortBuffer: cfg.sortBufferMB = dim.choices[v]; break;
      case ConfigDim::Field::MapOutputCompression: cfg.mapOutputCompression = v == 1; break;
      case ConfigDim::Field::OutputCompression: cfg.outputCompression = v == 1; break;
      case ConfigDim::Field::Combiner: cfg.combinerEnabled = v == 1; break;
      default: break;
    }
  }
  return out;
}

RrsConfigResult rrs_optimize_config(const Plan& plan, const ConfigSpaceDescriptor& space, const RrsParams& params,
                                    const std::function<double(const Plan&)>& costFn) {
  RrsConfigResult result;
  std::vector<size_t> sizes;
  sizes.reserve(space.dims.size());
  for (const auto& d : space.dims) sizes.push_back(d.size());

  // incumbent point: the plan's current configuration
  std::vector<size_t> incumbent;
  for (const auto& dim : space.dims) {
    const Configuration& cfg = plan.jobs.at(dim.job).config;
    size_t v = 0;
    switch (dim.field) {
      case ConfigDim::Field::MapTasks:
      case ConfigDim::Field::ReduceTasks: {
        const auto& [job, isOutput] = dim.members.front();
        const Job& member = plan.jobs.at(job);
        int cur = (isOutput && !member.program.map_only()) ? member.config.numReduceTasks
                                                           : member.config.numMapTasks;
        v = static_cast<size_t>(std::clamp(cur - dim.lo, 0, dim.hi - dim.lo));
        break;
      }
      case ConfigDim::Field::SortBuffer: {
        auto it = std::find(dim.choices.begin(), dim.choices.end(), cfg.sortBufferMB);
        v = it == dim.choices.end() ? 0 : static_cast<size_t>(it - dim.choices.begin());
        break;
      }
      case ConfigDim::Field::MapOutputCompression: v = cfg.mapOutputCompression ? 1 : 0; break;
      case ConfigDim::Field::OutputCompression: v = cfg.outputCompression ? 1 : 0; break;
      case ConfigDim::Field::Combiner: v = cfg.combinerEnabled ? 1 : 0; break;
    }
    incumbent.push_back(v);
  }

  auto costAt = [&](const std::vector<size_t>& idx) {
    auto configs = decode_config_point(plan, space, idx);
    Plan candidate = with_configurations(plan, configs, false);
    return costFn(candidate);
  };

  auto [bestIdx, bestCost] = rrs_minimize(sizes, costAt, params, &result.trace, incumbent);
  result.configs = decode_config_point(plan, space, bestIdx);
  // re-apply propagation so dependent task counts land in the reported assignment
  Plan finalPlan = with_configurations(plan, result.configs, true);
  for (auto& [id, cfg] : result.configs) cfg = finalPlan.jobs.at(id).config;
  result.cost = bestCost;
  return result;
}

}  // namespace mrpack
