#include "mrpack/search.hpp"

#include <algorithm>
#include <sstream>

#include "mrpack/plan_io.hpp"

namespace mrpack {

std::string phase_name(Phase p) { return p == Phase::Vertical ? "Vertical" : "Horizontal"; }

std::optional<OptimizationUnit> next_optimization_unit(const Plan& plan, UnitCursor& cursor, Phase phase) {
  // frontier: not yet covered as producers, all upstream producers covered
  std::vector<JobId> frontier;
  for (const auto& j : topological_job_order(plan)) {
    if (cursor.covered.count(j)) continue;
    bool ready = true;
    for (const auto& d : plan.inputs_of(j)) {
      auto p = plan.producer_of(d);
      if (p && !cursor.covered.count(*p)) ready = false;
    }
    if (ready) frontier.push_back(j);
  }
  if (frontier.empty()) return std::nullopt;
  std::sort(frontier.begin(), frontier.end());

  OptimizationUnit unit;
  unit.phase = phase;
  unit.producers = frontier;
  std::set<JobId> consumers;
  for (const auto& p : frontier)
    for (const auto& d : plan.outputs_of(p))
      for (const auto& c : plan.consumers_of(d)) consumers.insert(c);
  unit.consumers.assign(consumers.begin(), consumers.end());
  for (const auto& p : frontier) cursor.covered.insert(p);
  return unit;
}

std::string Subplan::signature() const {
  std::string out;
  for (size_t i = 0; i < applied.size(); ++i) out += (i ? ";" : "") + applied[i];
  return out;
}

namespace {

struct EnumState {
  Plan plan;
  std::vector<std::string> applied;
  std::set<JobId> universe;  // unit jobs and everything derived from them
  bool partitionUsed = false;
};

std::set<JobId> advance_universe(const std::set<JobId>& universe, const Plan& before, const Plan& after) {
  std::set<JobId> out;
  for (const auto& j : universe)
    if (after.jobs.count(j)) out.insert(j);
  for (const auto& [id, job] : after.jobs)
    if (!before.jobs.count(id)) out.insert(id);
  return out;
}

bool targets_in_universe(const TransformApplication& app, const std::set<JobId>& universe) {
  return std::all_of(app.targetJobs.begin(), app.targetJobs.end(),
                     [&](const JobId& j) { return universe.count(j) > 0; });
}

// Candidate partition respec: range-partition the job's current key using
// equi-depth splits from its profile histogram.
std::optional<TransformApplication> range_candidate(const Plan& plan, const JobId& id) {
  const Job& job = plan.jobs.at(id);
  if (job.program.map_only() || job.program.has_bundle()) return std::nullopt;
  if (!job.annotations.profile) return std::nullopt;
  std::vector<std::string> fields = job.program.partition.partitionKey;
  if (fields.empty() && job.annotations.schema) fields = job.annotations.schema->k2;
  if (fields.empty()) return std::nullopt;
  if (job.config.numReduceTasks < 2) return std::nullopt;
  RangeSplitResult splits;
  try {
    splits = derive_range_splits(*job.annotations.profile, fields.front(), job.config.numReduceTasks);
  } catch (const ProfileError&) {
    return std::nullopt;
  }
  if (splits.skewed || splits.splits.empty()) return std::nullopt;

  PartitionSpec spec;
  spec.kind = PartitionKind::Range;
  spec.partitionKey = fields;
  spec.sortKey = job.program.partition.sortKey.empty() ? fields : job.program.partition.sortKey;
  if (spec.sortKey.size() < spec.partitionKey.size() ||
      !std::equal(spec.partitionKey.begin(), spec.partitionKey.end(), spec.sortKey.begin()))
    spec.sortKey = spec.partitionKey;
  spec.rangeSplits = splits.splits;
  if (spec == job.program.partition) return std::nullopt;
  for (const auto& c : job.constraints) {
    if (c.kind == ConfigConstraint::Kind::PartitionKeyFixed && c.fields != spec.partitionKey) return std::nullopt;
    if (c.kind == ConfigConstraint::Kind::SortKeyFixed && c.fields != spec.sortKey) return std::nullopt;
    if (c.kind == ConfigConstraint::Kind::RangeSplitsFixed && c.splits != spec.rangeSplits) return std::nullopt;
  }
  TransformApplication app;
  app.kind = TransformKind::PartitionFn;
  app.targetJobs = {id};
  app.params = PartitionParams{id, spec};
  app.planFingerprint = plan_fingerprint(plan);
  return app;
}

std::vector<TransformApplication> moves_for(const EnumState& state, const OptimizationUnit& unit) {
  std::vector<TransformApplication> moves;
  const Plan& plan = state.plan;
  std::vector<JobId> jobs(state.universe.begin(), state.universe.end());

  if (unit.phase == Phase::Vertical) {
    for (const auto& j : jobs) {
      if (!plan.jobs.count(j)) continue;
      CheckResult r = check_intra_vertical(plan, j);
      if (r.applicable() && targets_in_universe(r.applications.front(), state.universe))
        moves.push_back(r.applications.front());
    }
    std::set<DatasetId> seen;
    for (const auto& j : jobs) {
      if (!plan.jobs.count(j)) continue;
      for (const auto& d : plan.outputs_of(j)) {
        if (!seen.insert(d).second) continue;
        auto consumers = plan.consumers_of(d);
        if (consumers.empty()) continue;
        bool inUniverse = std::all_of(consumers.begin(), consumers.end(),
                                      [&](const JobId& c) { return state.universe.count(c) > 0; });
        if (!inUniverse) continue;
        CheckResult r = check_inter_vertical(plan, d);
        if (!r.applicable()) continue;
        for (auto& app : r.applications)
          if (targets_in_universe(app, state.universe)) moves.push_back(app);
      }
    }
  } else {
    // same-input groups (maximal) plus concurrently runnable pairs
    std::map<std::string, std::vector<JobId>> byInputs;
    for (const auto& j : jobs) {
      if (!plan.jobs.count(j)) continue;
      std::string key;
      for (const auto& d : plan.inputs_of(j)) key += d + ",";
      byInputs[key].push_back(j);
    }
    std::vector<std::vector<JobId>> candidates;
    for (auto& [key, group] : byInputs)
      if (group.size() >= 2) candidates.push_back(group);
    for (size_t i = 0; i < jobs.size(); ++i)
      for (size_t k = i + 1; k < jobs.size(); ++k)
        if (plan.jobs.count(jobs[i]) && plan.jobs.count(jobs[k])) candidates.push_back({jobs[i], jobs[k]});
    std::set<std::string> seenSets;
    for (auto& cand : candidates) {
      std::sort(cand.begin(), cand.end());
      std::string key;
      for (const auto& j : cand) key += j + "+";
      if (!seenSets.insert(key).second) continue;
      CheckResult r = check_horizontal(plan, cand);
      if (r.applicable()) moves.push_back(r.applications.front());
    }
  }

  if (!state.partitionUsed) {
    for (const auto& j : jobs) {
      if (!plan.jobs.count(j)) continue;
      if (auto app = range_candidate(plan, j)) moves.push_back(*app);
    }
  }
  for (const auto& j : jobs) {
    if (!plan.jobs.count(j)) continue;
    CheckResult r = check_partition_pruning(plan, j);
    if (!r.applicable()) continue;
    for (auto& app : r.applications) {
      const auto& p = std::get<PruneParams>(app.params);
      auto producer = plan.producer_of(p.dataset);
      if (producer && !state.universe.count(*producer)) continue;
      moves.push_back(app);
    }
  }

  std::sort(moves.begin(), moves.end(), [](const TransformApplication& a, const TransformApplication& b) {
    return a.signature() < b.signature();
  });
  return moves;
}

}  // namespace

std::vector<Subplan> enumerate_subplans(const Plan& plan, const OptimizationUnit& unit) {
  constexpr size_t kMaxStates = 128;

  EnumState init;
  init.plan = plan;
  for (const auto& j : unit.producers) init.universe.insert(j);
  for (const auto& j : unit.consumers) init.universe.insert(j);

  std::vector<EnumState> states;
  std::set<uint64_t> seen;
  seen.insert(structural_fingerprint(plan));
  states.push_back(init);

  for (size_t i = 0; i < states.size() && states.size() < kMaxStates; ++i) {
    EnumState cur = states[i];  // copy: states grows below
    for (const auto& move : moves_for(cur, unit)) {
      Plan next;
      try {
        next = apply_application(cur.plan, move);
      } catch (const StaleApplication&) {
        continue;
      } catch (const TransformError&) {
        continue;
      }
      if (!seen.insert(structural_fingerprint(next)).second) continue;
      EnumState ns;
      ns.universe = advance_universe(cur.universe, cur.plan, next);
      ns.plan = std::move(next);
      ns.applied = cur.applied;
      ns.applied.push_back(move.signature());
      ns.partitionUsed = cur.partitionUsed || std::holds_alternative<PartitionParams>(move.params);
      states.push_back(std::move(ns));
      if (states.size() >= kMaxStates) break;
    }
  }

  std::vector<Subplan> out;
  for (auto& s : states) {
    Subplan sp;
    sp.basePlan = plan;
    sp.applied = std::move(s.applied);
    sp.resultPlan = std::move(s.plan);
    out.push_back(std::move(sp));
  }
  std::stable_sort(out.begin(), out.end(), [](const Subplan& a, const Subplan& b) {
    bool ia = a.applied.empty(), ib = b.applied.empty();
    if (ia != ib) return ia;
    return a.signature() < b.signature();
  });
  // states are unique by fingerprint already; the sort keeps identity first
  return out;
}

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b, uint64_t c) {
  std::string buf = std::to_string(seed) + ":" + std::to_string(a) + ":" + std::to_string(b) + ":" +
                    std::to_string(c);
  return fnv1a64(buf);
}

std::string ids_csv_for_seed(const std::vector<JobId>& ids) {
  std::string out;
  for (const auto& id : ids) out += id + ",";
  return out;
}

Plan commit_subplan(const Plan& resultPlan, const std::map<JobId, Configuration>& configs) {
  return with_configurations(resultPlan, configs, true);
}

}  // namespace

Plan optimize_unit(const Plan& plan, const OptimizationUnit& unit, const CostEstimator& estimator,
                   const OptimizerOptions& options, UnitReport* report) {
  auto subplans = enumerate_subplans(plan, unit);

  auto run = [&](const CostEstimator& est, UnitReport* rep) -> std::pair<Plan, double> {
    double bestCost = 0;
    int bestIdx = -1;
    int bestJobs = 0;
    Plan bestPlan;
    for (size_t i = 0; i < subplans.size(); ++i) {
      const Subplan& sp = subplans[i];
      std::vector<JobId> unitJobs;
      std::set<JobId> universe;
      for (const auto& j : unit.producers) universe.insert(j);
      for (const auto& j : unit.consumers) universe.insert(j);
      universe = advance_universe(universe, plan, sp.resultPlan);
      for (const auto& j : universe) unitJobs.push_back(j);

      ConfigSpaceDescriptor space = build_config_space(sp.resultPlan, unitJobs, options.bounds);
      RrsParams params = options.rrs;
      params.seed = mix_seed(options.rrs.seed, unit.phase == Phase::Vertical ? 1 : 2,
                             fnv1a64(ids_csv_for_seed(unit.producers)), i);
      auto rrs = rrs_optimize_config(sp.resultPlan, space, params,
                                     [&](const Plan& p) { return est.plan_cost(p); });
      int jobs = static_cast<int>(sp.resultPlan.jobs.size());
      if (rep) {
        SubplanReport sr;
        sr.sig = sp.signature();
        sr.cost = rrs.cost;
        sr.jobCount = jobs;
        sr.configs = rrs.configs;
        rep->subplans.push_back(std::move(sr));
      }
      bool better = bestIdx < 0 || rrs.cost < bestCost ||
                    (rrs.cost == bestCost && (jobs < bestJobs || (jobs == bestJobs && sp.applied.empty())));
      if (better) {
        bestCost = rrs.cost;
        bestIdx = static_cast<int>(i);
        bestJobs = jobs;
        bestPlan = commit_subplan(sp.resultPlan, rrs.configs);
      }
    }
    if (rep) rep->chosen = bestIdx;
    return {bestPlan, bestCost};
  };

  if (report) {
    report->phase = unit.phase;
    report->producers = unit.producers;
    report->consumers = unit.consumers;
  }
  try {
    return run(estimator, report).first;
  } catch (const ProfileError&) {
    // missing statistics: re-cost the whole unit with the job-count model
    if (report) {
      report->subplans.clear();
      report->usedFallback = true;
    }
    CostEstimator fallback{CostModel::JobCount, estimator.cluster};
    return run(fallback, report).first;
  }
}

std::pair<Plan, OptimizationReport> optimize(const Plan& plan, const ClusterSpec& cluster,
                                             const OptimizerOptions& options) {
  OptimizationReport report;
  report.model = options.model;
  report.seed = options.rrs.seed;
  report.jobsBefore = static_cast<int>(plan.jobs.size());

  CostEstimator estimator{options.model, cluster};
  auto safeCost = [&](const Plan& p) {
    try {
      return estimator.plan_cost(p);
    } catch (const ProfileError&) {
      return fallback_cost(p).totalSeconds;
    }
  };
  report.costBefore = safeCost(plan);

  std::vector<Phase> phases;
  if (options.horizontalFirst) {
    if (options.horizontal) phases.push_back(Phase::Horizontal);
    if (options.vertical) phases.push_back(Phase::Vertical);
  } else {
    if (options.vertical) phases.push_back(Phase::Vertical);
    if (options.horizontal) phases.push_back(Phase::Horizontal);
  }

  Plan current = plan;
  int unitIndex = 0;
  for (Phase phase : phases) {
    UnitCursor cursor;
    while (auto unit = next_optimization_unit(current, cursor, phase)) {
      UnitReport ur;
      ur.index = ++unitIndex;
      Plan before = current;
      current = optimize_unit(current, *unit, estimator, options, &ur);
      if (ur.chosen >= 0 && ur.chosen < static_cast<int>(ur.subplans.size())) {
        const SubplanReport& chosen = ur.subplans[ur.chosen];
        if (!chosen.sig.empty()) {
          std::stringstream ss(chosen.sig);
          std::string part;
          while (std::getline(ss, part, ';'))
            if (!part.empty()) report.appliedSequence.push_back(part);
        }
        for (const auto& [id, cfg] : chosen.configs) {
          if (!current.jobs.count(id)) continue;
          Configuration committed = current.jobs.at(id).config;
          bool changed = !before.jobs.count(id) || !(before.jobs.at(id).config == committed);
          if (changed) {
            TransformApplication app;
            app.kind = TransformKind::Configuration;
            app.targetJobs = {id};
            app.params = ConfigParams{id, committed};
            report.appliedSequence.push_back(app.signature());
          }
        }
      }
      report.units.push_back(std::move(ur));
    }
  }

  report.jobsAfter = static_cast<int>(current.jobs.size());
  report.costAfter = safeCost(current);
  return {current, report};
}

Plan replay_report(const Plan& input, const OptimizationReport& report) {
  Plan cur = input;
  for (const auto& sig : report.appliedSequence) {
    TransformApplication app = parse_application(cur, sig);
    cur = apply_application(cur, app);
  }
  return cur;
}

// ---------------------------------------------------------------------------
// report text format (machine parseable)
// ---------------------------------------------------------------------------

namespace {

std::string ids_csv(const std::vector<JobId>& ids) {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) out += (i ? "," : "") + ids[i];
  return out;
}

std::vector<JobId> csv_ids(const std::string& csv) {
  std::vector<JobId> out;
  std::stringstream ss(csv);
  std::string part;
  while (std::getline(ss, part, ','))
    if (!part.empty()) out.push_back(part);
  return out;
}

std::string config_sig(const JobId& job, const Configuration& c) {
  TransformApplication app;
  app.kind = TransformKind::Configuration;
  app.params = ConfigParams{job, c};
  return app.signature();
}

}  // namespace

std::string OptimizationReport::to_text() const {
  std::ostringstream out;
  out.precision(9);
  out << "# workflow optimization report\n";
  out << "model " << cost_model_name(model) << "\n";
  out << "seed " << seed << "\n";
  out << "jobsBefore " << jobsBefore << "\n";
  out << "jobsAfter " << jobsAfter << "\n";
  out << "costBefore " << costBefore << "\n";
  out << "costAfter " << costAfter << "\n";
  for (const auto& u : units) {
    out << "unit " << u.index << " phase=" << phase_name(u.phase) << " producers=" << ids_csv(u.producers)
        << " consumers=" << ids_csv(u.consumers) << " fallback=" << (u.usedFallback ? 1 : 0) << "\n";
    for (size_t i = 0; i < u.subplans.size(); ++i) {
      const auto& sp = u.subplans[i];
      out << "subplan " << i << " jobs=" << sp.jobCount << " cost=" << sp.cost << " sig=" << sp.sig << "\n";
      for (const auto& [job, cfg] : sp.configs) out << "subplanConfig " << i << " " << config_sig(job, cfg) << "\n";
    }
    out << "chosen " << u.chosen << "\n";
  }
  out << "replay begin\n";
  for (const auto& sig : appliedSequence) out << "apply " << sig << "\n";
  out << "replay end\n";
  return out.str();
}

OptimizationReport OptimizationReport::from_text(const std::string& text) {
  OptimizationReport rep;
  std::istringstream in(text);
  std::string line;
  UnitReport* cur = nullptr;
  auto field = [](const std::string& l, const std::string& key) -> std::string {
    auto pos = l.find(key + "=");
    if (pos == std::string::npos) return "";
    auto end = l.find(' ', pos);
    return l.substr(pos + key.size() + 1, end == std::string::npos ? std::string::npos : end - pos - key.size() - 1);
  };
  while (std::getline(in, line)) {
    if (line.rfind("model ", 0) == 0) rep.model = cost_model_from_name(line.substr(6));
    else if (line.rfind("seed ", 0) == 0) rep.seed = std::stoull(line.substr(5));
    else if (line.rfind("jobsBefore ", 0) == 0) rep.jobsBefore = std::stoi(line.substr(11));
    else if (line.rfind("jobsAfter ", 0) == 0) rep.jobsAfter = std::stoi(line.substr(10));
    else if (line.rfind("costBefore ", 0) == 0) rep.costBefore = std::stod(line.substr(11));
    else if (line.rfind("costAfter ", 0) == 0) rep.costAfter = std::stod(line.substr(10));
    else if (line.rfind("unit ", 0) == 0) {
      UnitReport u;
      u.index = std::stoi(line.substr(5));
      u.phase = field(line, "phase") == "Horizontal" ? Phase::Horizontal : Phase::Vertical;
      u.producers = csv_ids(field(line, "producers"));
      u.consumers = csv_ids(field(line, "consumers"));
      u.usedFallback = field(line, "fallback") == "1";
      rep.units.push_back(std::move(u));
      cur = &rep.units.back();
    } else if (line.rfind("subplan ", 0) == 0 && cur) {
      SubplanReport sp;
      sp.jobCount = std::stoi(field(line, "jobs"));
      sp.cost = std::stod(field(line, "cost"));
      auto pos = line.find("sig=");
      sp.sig = pos == std::string::npos ? "" : line.substr(pos + 4);
      cur->subplans.push_back(std::move(sp));
    } else if (line.rfind("chosen ", 0) == 0 && cur) {
      cur->chosen = std::stoi(line.substr(7));
    } else if (line.rfind("apply ", 0) == 0) {
      rep.appliedSequence.push_back(line.substr(6));
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// explain
// ---------------------------------------------------------------------------

namespace {

std::string tri_name(Applicability a) {
  switch (a) {
    case Applicability::Applicable: return "applicable";
    case Applicability::NotApplicable: return "not applicable";
    case Applicability::Unknown: return "unknown";
  }
  return "unknown";
}

void explain_check(std::ostringstream& out, const std::string& what, const CheckResult& r) {
  out << "  " << what << ": " << tri_name(r.state);
  if (r.state == Applicability::Applicable) {
    for (const auto& app : r.applications) out << " [" << app.signature() << "]";
  } else if (!r.reason.empty()) {
    out << ": " << r.reason;
  }
  out << "\n";
}

}  // namespace

std::string explain_plan(const Plan& plan) {
  std::ostringstream out;
  for (Phase phase : {Phase::Vertical, Phase::Horizontal}) {
    out << "phase " << phase_name(phase) << "\n";
    UnitCursor cursor;
    int idx = 0;
    while (auto unit = next_optimization_unit(plan, cursor, phase)) {
      out << "unit " << ++idx << " producers=" << ids_csv(unit->producers)
          << " consumers=" << ids_csv(unit->consumers) << "\n";
      std::set<JobId> universe(unit->producers.begin(), unit->producers.end());
      universe.insert(unit->consumers.begin(), unit->consumers.end());
      if (phase == Phase::Vertical) {
        for (const auto& j : universe) {
          out << "  [subgraphs] ";
          for (const auto& d : plan.inputs_of(j)) out << d << ":" << subgraph_kind_name(classify_subgraph(plan, d)) << " ";
          out << "-> " << j << "\n";
          explain_check(out, "intra-vertical at " + j, check_intra_vertical(plan, j));
        }
        std::set<DatasetId> seen;
        for (const auto& j : universe)
          for (const auto& d : plan.outputs_of(j)) {
            if (!seen.insert(d).second) continue;
            if (plan.consumers_of(d).empty()) continue;
            explain_check(out, "inter-vertical at " + d, check_inter_vertical(plan, d));
          }
      } else {
        std::vector<JobId> jobs(universe.begin(), universe.end());
        for (size_t i = 0; i < jobs.size(); ++i)
          for (size_t k = i + 1; k < jobs.size(); ++k)
            explain_check(out, "horizontal {" + jobs[i] + "," + jobs[k] + "}",
                          check_horizontal(plan, {jobs[i], jobs[k]}));
      }
      for (const auto& j : universe) {
        explain_check(out, "partition pruning at " + j, check_partition_pruning(plan, j));
      }
    }
  }
  return out.str();
}

}  // namespace mrpack
