#include "mrpack/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace mrpack {

namespace fs = std::filesystem;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

struct FieldRef {
  bool inKey = false;
  int index = 0;
};

FieldRef resolve_field(const StageSchema& schema, const std::string& field, const JobId& job,
                       const std::string& what) {
  if (!schema.known)
    throw ExecError("job '" + job + "': " + what + " references field '" + field + "' but no schema is available");
  auto hit = schema.find(field);
  if (!hit) throw ExecError("job '" + job + "': " + what + " field '" + field + "' missing from the record schema");
  return {hit->first, hit->second};
}

const Scalar& field_value(const Record& r, const FieldRef& f, const JobId& job) {
  const auto& vec = f.inKey ? r.key : r.value;
  if (f.index >= static_cast<int>(vec.size()))
    throw ExecError("job '" + job + "': partition-key field missing from a record");
  return vec[f.index];
}

struct LabeledRecord {
  int src = -1;  // index into the job's input dataset list; -1 once merged
  Record rec;
};

StageSchema schema_after(const StageSchema& in, const FuncStage& f) {
  if (f.outKey.empty() && f.outValue.empty()) {
    if (f.role == StageRole::Combine) return in;  // combine preserves shape
    return StageSchema{};                          // unknown from here on
  }
  StageSchema out;
  out.keyNames = f.outKey;
  out.valueNames = f.outValue;
  out.known = true;
  return out;
}

StageSchema chain_output_schema(StageSchema cur, const std::vector<FuncStage>& stages) {
  for (const auto& f : stages) cur = schema_after(cur, f);
  return cur;
}

// Groups a buffer by the given key extractor in canonical order.
template <typename KeyFn>
std::vector<std::pair<std::vector<Scalar>, std::vector<Record>>> group_records(const std::vector<Record>& buf,
                                                                               KeyFn keyOf) {
  std::vector<std::pair<std::vector<Scalar>, std::vector<Record>>> groups;
  std::map<std::string, size_t> index;
  for (const auto& r : buf) {
    std::vector<Scalar> key = keyOf(r);
    std::string enc;
    for (const auto& s : key) encode_scalar(s, enc);
    auto it = index.find(enc);
    if (it == index.end()) {
      index.emplace(std::move(enc), groups.size());
      groups.push_back({std::move(key), {r}});
    } else {
      groups[it->second].second.push_back(r);
    }
  }
  std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) {
    const auto& ka = a.first;
    const auto& kb = b.first;
    size_t n = std::min(ka.size(), kb.size());
    for (size_t i = 0; i < n; ++i)
      if (int c = compare_scalar(ka[i], kb[i])) return c < 0;
    return ka.size() < kb.size();
  });
  for (auto& [k, recs] : groups)
    std::sort(recs.begin(), recs.end(), [](const Record& a, const Record& b) { return compare_record(a, b) < 0; });
  return groups;
}

struct Executor {
  const Plan& plan;
  const UdfRegistry& registry;
  std::map<DatasetId, InMemoryDataset>& store;
  RunTrace& trace;

  struct SinkBuffer {
    std::vector<std::vector<Record>> partitions;
  };
  std::map<DatasetId, SinkBuffer> sinks;  // per-job scratch for tee/mapSink/sink targets
  JobId curJob;
  JobTrace* jt = nullptr;

  void write_sink(const DatasetId& d, int partition, const std::vector<Record>& recs) {
    auto& sb = sinks[d];
    if (partition >= static_cast<int>(sb.partitions.size())) sb.partitions.resize(partition + 1);
    auto& p = sb.partitions[partition];
    p.insert(p.end(), recs.begin(), recs.end());
  }

  std::vector<Record> run_func_stage(const FuncStage& f, std::vector<Record> buf, const StageSchema& in,
                                     int taskIndex) {
    std::vector<Record> out;
    switch (f.role) {
      case StageRole::Map: {
        MapUdf fn = registry.bind_map(f.fn, in);
        for (const auto& r : buf) fn(r, out);
        break;
      }
      case StageRole::Combine: {
        ReduceUdf fn = registry.bind_combine(f.fn, in);
        for (auto& [key, group] : group_records(buf, [](const Record& r) { return r.key; })) fn(key, group, out);
        break;
      }
      case StageRole::Reduce: {
        ReduceUdf fn = registry.bind_reduce(f.fn, in);
        std::vector<FieldRef> refs;
        for (const auto& g : f.group) refs.push_back(resolve_field(in, g, curJob, "grouping"));
        auto keyOf = [&](const Record& r) {
          if (refs.empty()) return r.key;
          std::vector<Scalar> k;
          for (const auto& ref : refs) k.push_back(field_value(r, ref, curJob));
          return k;
        };
        for (auto& [key, group] : group_records(buf, keyOf)) fn(key, group, out);
        break;
      }
    }
    if (f.tee) write_sink(*f.tee, taskIndex, out);
    return out;
  }

  std::vector<Record> run_chain(const std::vector<FuncStage>& stages, std::vector<Record> buf, StageSchema cur,
                                int taskIndex) {
    for (const auto& f : stages) {
      buf = run_func_stage(f, std::move(buf), cur, taskIndex);
      cur = schema_after(cur, f);
    }
    return buf;
  }

  // Runs the map-side pipeline over one task chunk. Returns the records bound
  // for the shuffle (or the job output when Map-only).
  std::vector<Record> run_map_side(const Job& job, const std::vector<Stage>& stages,
                                   const std::vector<DatasetId>& inputIds, std::vector<LabeledRecord> chunk,
                                   const StageSchema& entry, bool tagOutputs, int taskIndex) {
    std::vector<Record> buf;
    size_t pos = 0;
    StageSchema cur = entry;

    if (!stages.empty() && stages[0].is_bundle()) {
      const BundleStage& bundle = stages[0].bundle();
      pos = 1;
      for (const auto& branch : bundle.branches) {
        std::vector<Record> sub;
        for (const auto& lr : chunk) {
          if (branch.sources.empty() ||
              (lr.src >= 0 && std::count(branch.sources.begin(), branch.sources.end(), inputIds[lr.src])))
            sub.push_back(lr.rec);
        }
        StageSchema branchEntry = cur;
        if (branch.schema) {
          branchEntry.keyNames = branch.schema->k1;
          branchEntry.valueNames = branch.schema->v1;
          branchEntry.known = true;
        }
        std::vector<Record> bout = run_chain(branch.stages, std::move(sub), branchEntry, taskIndex);
        StageSchema bSchema = chain_output_schema(branchEntry, branch.stages);
        if (job.config.combinerEnabled && branch.combineFn) {
          ReduceUdf cfn = registry.bind_combine(*branch.combineFn, bSchema);
          std::vector<Record> combined;
          for (auto& [key, group] : group_records(bout, [](const Record& r) { return r.key; }))
            cfn(key, group, combined);
          bout = std::move(combined);
        }
        if (branch.mapSink) {
          write_sink(*branch.mapSink, taskIndex, bout);
          continue;
        }
        if (tagOutputs) {
          for (auto& r : bout) r.key.insert(r.key.begin(), Scalar(static_cast<int64_t>(branch.tag)));
        }
        buf.insert(buf.end(), bout.begin(), bout.end());
      }
      cur = StageSchema{};  // merged stream: common stages use explicit stage schemas
    } else {
      buf.reserve(chunk.size());
      for (auto& lr : chunk) buf.push_back(std::move(lr.rec));
    }

    std::vector<FuncStage> rest;
    for (size_t i = pos; i < stages.size(); ++i) {
      if (stages[i].is_bundle()) throw ExecError("job '" + job.id + "': nested pipeline bundles are not executable");
      rest.push_back(stages[i].func());
    }
    return run_chain(rest, std::move(buf), pos == 1 ? cur : entry, taskIndex);
  }

  void run_job(const Job& job) {
    curJob = job.id;
    jt = &trace.jobs[job.id];
    auto inputIds = plan.inputs_of(job.id);
    bool orderPreserving = std::any_of(job.constraints.begin(), job.constraints.end(), [](const auto& c) {
      return c.kind == ConfigConstraint::Kind::OrderPreservingInput;
    });

    // --- read: assemble map task chunks ---
    double t0 = now_seconds();
    std::vector<std::vector<LabeledRecord>> chunks;
    auto selected = [&](const DatasetId& d) {
      const Edge* e = plan.input_edge(job.id, d);
      std::vector<int> parts;
      const auto& ds = store.at(d);
      if (e && !e->partitions.empty())
        parts = e->partitions;
      else
        for (int i = 0; i < static_cast<int>(ds.partitions.size()); ++i) parts.push_back(i);
      return parts;
    };
    for (const auto& d : inputIds)
      if (!store.count(d)) throw ExecError("job '" + job.id + "': input dataset '" + d + "' was not materialized");

    if (orderPreserving) {
      int common = -1;
      for (const auto& d : inputIds) {
        int n = static_cast<int>(selected(d).size());
        if (common >= 0 && n != common)
          throw ExecError("job '" + job.id + "': order-preserving split needs aligned input partition counts");
        common = n;
      }
      if (common != job.config.numMapTasks)
        throw ExecError("job '" + job.id + "': numMapTasks=" + std::to_string(job.config.numMapTasks) +
                        " violates the order-preserving split (" + std::to_string(common) + " input partitions)");
      chunks.resize(common);
      for (size_t si = 0; si < inputIds.size(); ++si) {
        const auto& d = inputIds[si];
        auto parts = selected(d);
        auto& perPart = jt->bytesReadPerPartition[d];
        perPart.assign(store.at(d).partitions.size(), 0.0);
        for (int i = 0; i < common; ++i) {
          const auto& recs = store.at(d).partitions[parts[i]];
          for (const auto& r : recs) {
            perPart[parts[i]] += static_cast<double>(canonical_size(r));
            chunks[i].push_back({static_cast<int>(si), r});
          }
        }
      }
    } else {
      std::vector<LabeledRecord> all;
      for (size_t si = 0; si < inputIds.size(); ++si) {
        const auto& d = inputIds[si];
        auto& perPart = jt->bytesReadPerPartition[d];
        perPart.assign(store.at(d).partitions.size(), 0.0);
        for (int p : selected(d)) {
          for (const auto& r : store.at(d).partitions[p]) {
            perPart[p] += static_cast<double>(canonical_size(r));
            all.push_back({static_cast<int>(si), r});
          }
        }
      }
      int m = job.config.numMapTasks;
      chunks.resize(m);
      size_t n = all.size(), base = n / m, extra = n % m, idx = 0;
      for (int i = 0; i < m; ++i) {
        size_t take = base + (static_cast<size_t>(i) < extra ? 1 : 0);
        for (size_t k = 0; k < take; ++k) chunks[i].push_back(std::move(all[idx++]));
      }
    }
    for (const auto& c : chunks) {
      jt->mapInRecords += static_cast<double>(c.size());
      for (const auto& lr : c) jt->mapInBytes += static_cast<double>(canonical_size(lr.rec));
    }
    jt->readSeconds += now_seconds() - t0;

    // --- map phase ---
    t0 = now_seconds();
    StageSchema entry;
    if (job.annotations.schema) {
      entry.keyNames = job.annotations.schema->k1;
      entry.valueNames = job.annotations.schema->v1;
      entry.known = true;
    } else if (!inputIds.empty()) {
      const auto& ds = plan.datasets.at(inputIds.front());
      if (ds.recordSchema && inputIds.size() == 1) {
        for (const auto& f : ds.recordSchema->key) entry.keyNames.push_back(f.name);
        for (const auto& f : ds.recordSchema->value) entry.valueNames.push_back(f.name);
        entry.known = true;
      }
    }

    auto mapStages = effective_map_stages(job);
    auto reduceStages = effective_reduce_stages(job);
    bool reduceBundle = !reduceStages.empty() && reduceStages[0].is_bundle();
    bool mapOnly = job.program.map_only();

    StageSchema mapOutSchema;
    {
      StageSchema cur = entry;
      for (const auto& s : mapStages) {
        if (s.is_bundle())
          cur = StageSchema{};  // merged stream: later stages re-establish the schema
        else
          cur = schema_after(cur, s.func());
      }
      mapOutSchema = cur;
    }

    std::vector<std::vector<Record>> mapOutputs(chunks.size());
    for (size_t i = 0; i < chunks.size(); ++i)
      mapOutputs[i] =
          run_map_side(job, mapStages, inputIds, std::move(chunks[i]), entry, reduceBundle, static_cast<int>(i));
    jt->mapSeconds += now_seconds() - t0;

    auto outputs = plan.outputs_of(job.id);
    std::set<DatasetId> pipelineSinks;
    for (const auto& s : mapStages) {
      if (s.is_bundle()) {
        for (const auto& b : s.bundle().branches) {
          if (b.mapSink) pipelineSinks.insert(*b.mapSink);
          if (b.sink) pipelineSinks.insert(*b.sink);
        }
      } else if (s.func().tee) {
        pipelineSinks.insert(*s.func().tee);
      }
    }
    for (const auto& s : reduceStages) {
      if (s.is_bundle()) {
        for (const auto& b : s.bundle().branches)
          if (b.sink) pipelineSinks.insert(*b.sink);
      } else if (s.func().tee) {
        pipelineSinks.insert(*s.func().tee);
      }
    }
    std::vector<DatasetId> primary;
    for (const auto& d : outputs)
      if (!pipelineSinks.count(d)) primary.push_back(d);

    if (mapOnly) {
      for (const auto& buf : mapOutputs) {
        jt->mapOutRecords += static_cast<double>(buf.size());
        for (const auto& r : buf) jt->mapOutBytes += static_cast<double>(canonical_size(r));
      }
      if (primary.size() > 1)
        throw ExecError("job '" + job.id + "': multiple primary outputs on a Map-only job");
      double tw = now_seconds();
      if (!primary.empty()) materialize(primary.front(), std::move(mapOutputs), job.id);
      flush_sinks(job);
      jt->writeSeconds += now_seconds() - tw;
      collect_key_samples_mapout(job, primary);
      return;
    }

    // --- shuffle: combine, partition, sort ---
    t0 = now_seconds();
    int R = job.config.numReduceTasks;
    std::vector<std::vector<Record>> reduceIn(R);

    // per-branch resolved partition specs for tagged shuffles
    struct BranchSpec {
      PartitionSpec spec;
      std::vector<FieldRef> partRefs;
      std::vector<FieldRef> sortRefs;
    };
    std::map<int, BranchSpec> branchSpecs;
    if (reduceBundle) {
      const BundleStage& mb = mapStages[0].bundle();
      for (const auto& br : mb.branches) {
        BranchSpec bs;
        bs.spec = br.partition;
        StageSchema bEntry = entry;
        if (br.schema) {
          bEntry.keyNames = br.schema->k1;
          bEntry.valueNames = br.schema->v1;
          bEntry.known = true;
        }
        StageSchema bOut = chain_output_schema(bEntry, br.stages);
        for (const auto& f : bs.spec.partitionKey)
          bs.partRefs.push_back(resolve_field(bOut, f, job.id, "partition key"));
        for (const auto& f : bs.spec.sortKey) bs.sortRefs.push_back(resolve_field(bOut, f, job.id, "sort key"));
        branchSpecs[br.tag] = std::move(bs);
      }
    }
    std::vector<FieldRef> partRefs, sortRefs;
    if (!reduceBundle) {
      for (const auto& f : job.program.partition.partitionKey)
        partRefs.push_back(resolve_field(mapOutSchema, f, job.id, "partition key"));
      for (const auto& f : job.program.partition.sortKey)
        sortRefs.push_back(resolve_field(mapOutSchema, f, job.id, "sort key"));
    }

    auto range_index = [&](const PartitionSpec& spec, const Scalar& v) {
      int idx = 0;
      for (const auto& split : spec.rangeSplits) {
        if (compare_ordered(v, split) < 0) break;
        ++idx;
      }
      return std::min(idx, R - 1);
    };

    double sortBufBytes = static_cast<double>(job.config.sortBufferMB) * 1024.0 * 1024.0;
    for (auto& buf : mapOutputs) {
      jt->mapOutRecords += static_cast<double>(buf.size());
      for (const auto& r : buf) jt->mapOutBytes += static_cast<double>(canonical_size(r));

      if (!reduceBundle && job.config.combinerEnabled && job.program.combineFn) {
        ReduceUdf cfn = registry.bind_combine(*job.program.combineFn, mapOutSchema);
        std::vector<Record> combined;
        for (auto& [key, group] : group_records(buf, [](const Record& r) { return r.key; })) cfn(key, group, combined);
        buf = std::move(combined);
        jt->combineOutRecords = std::max(jt->combineOutRecords, 0.0) + static_cast<double>(buf.size());
        if (jt->combineOutBytes < 0) jt->combineOutBytes = 0;
        for (const auto& r : buf) jt->combineOutBytes += static_cast<double>(canonical_size(r));
      }

      double taskBytes = 0;
      for (const auto& r : buf) taskBytes += static_cast<double>(canonical_size(r));
      jt->spillCount += static_cast<int>(std::max(0.0, std::ceil(taskBytes / sortBufBytes) - 1));

      for (auto& r : buf) {
        int p;
        if (reduceBundle) {
          if (r.key.empty() || r.key[0].index() != 0)
            throw ExecError("job '" + job.id + "': tagged shuffle record lacks a pipeline tag");
          int tag = static_cast<int>(std::get<int64_t>(r.key[0]));
          auto it = branchSpecs.find(tag);
          if (it == branchSpecs.end()) throw ExecError("job '" + job.id + "': record tag has no pipeline");
          const BranchSpec& bs = it->second;
          if (bs.spec.kind == PartitionKind::Range && !bs.partRefs.empty()) {
            Record detag = r;
            detag.key.erase(detag.key.begin());
            p = range_index(bs.spec, field_value(detag, bs.partRefs[0], job.id));
          } else {
            std::string enc;
            encode_scalar(r.key[0], enc);
            if (bs.partRefs.empty()) {
              for (size_t i = 1; i < r.key.size(); ++i) encode_scalar(r.key[i], enc);
            } else {
              Record detag = r;
              detag.key.erase(detag.key.begin());
              for (const auto& ref : bs.partRefs) encode_scalar(field_value(detag, ref, job.id), enc);
            }
            p = static_cast<int>(fnv1a64(enc) % static_cast<uint64_t>(R));
          }
        } else if (job.program.partition.kind == PartitionKind::Range) {
          p = range_index(job.program.partition, field_value(r, partRefs[0], job.id));
        } else {
          std::string enc;
          if (partRefs.empty()) {
            for (const auto& s : r.key) encode_scalar(s, enc);
          } else {
            for (const auto& ref : partRefs) encode_scalar(field_value(r, ref, job.id), enc);
          }
          p = static_cast<int>(fnv1a64(enc) % static_cast<uint64_t>(R));
        }
        jt->shuffleRecords += 1;
        jt->shuffleBytes += static_cast<double>(canonical_size(r));
        reduceIn[p].push_back(std::move(r));
      }
      buf.clear();
    }

    // distinct map-output keys (post-combine stream feeding the shuffle)
    {
      std::set<std::string> keys;
      for (const auto& part : reduceIn)
        for (const auto& r : part) {
          std::string enc;
          for (const auto& s : r.key) encode_scalar(s, enc);
          keys.insert(std::move(enc));
        }
      jt->mapOutDistinctKeys = static_cast<double>(keys.size());
    }
    collect_key_samples_shuffle(job, reduceIn, reduceBundle, mapStages);

    for (auto& part : reduceIn) {
      std::stable_sort(part.begin(), part.end(), [&](const Record& a, const Record& b) {
        if (reduceBundle) {
          int c = compare_scalar(a.key[0], b.key[0]);
          if (c) return c < 0;
          int tag = static_cast<int>(std::get<int64_t>(a.key[0]));
          const BranchSpec& bs = branchSpecs.at(tag);
          Record da = a, db = b;
          da.key.erase(da.key.begin());
          db.key.erase(db.key.begin());
          for (const auto& ref : bs.sortRefs) {
            int cc = compare_scalar(field_value(da, ref, job.id), field_value(db, ref, job.id));
            if (cc) return cc < 0;
          }
          return compare_record(da, db) < 0;
        }
        for (const auto& ref : sortRefs) {
          int c = compare_scalar(field_value(a, ref, job.id), field_value(b, ref, job.id));
          if (c) return c < 0;
        }
        return compare_record(a, b) < 0;
      });
      jt->reduceInRecords += static_cast<double>(part.size());
      for (const auto& r : part) jt->reduceInBytes += static_cast<double>(canonical_size(r));
    }
    jt->sortSeconds += now_seconds() - t0;

    // --- reduce phase ---
    t0 = now_seconds();
    std::vector<std::vector<Record>> primaryOut(R);
    StageSchema reduceEntry = mapOutSchema;
    for (int t = 0; t < R; ++t) {
      if (reduceBundle) {
        const BundleStage& rb = reduceStages[0].bundle();
        if (reduceStages.size() > 1)
          throw ExecError("job '" + job.id + "': stages after a reduce-side bundle are not executable");
        for (const auto& br : rb.branches) {
          std::vector<Record> sub;
          for (const auto& r : reduceIn[t]) {
            if (static_cast<int>(std::get<int64_t>(r.key[0])) != br.tag) continue;
            Record d = r;
            d.key.erase(d.key.begin());
            sub.push_back(std::move(d));
          }
          jt->recordsPerTag[br.tag] += static_cast<double>(sub.size());
          StageSchema bEntry;
          if (br.schema) {
            bEntry.keyNames = br.schema->k2;
            bEntry.valueNames = br.schema->v2;
            bEntry.known = true;
          }
          std::vector<FuncStage> stages;
          for (const auto& s : br.stages) stages.push_back(s);
          std::vector<Record> bout = run_chain(stages, std::move(sub), bEntry, t);
          if (!br.sink) throw ExecError("job '" + job.id + "': reduce pipeline branch lacks an output dataset");
          write_sink(*br.sink, t, bout);
        }
      } else {
        std::vector<FuncStage> stages;
        for (const auto& s : reduceStages) {
          if (s.is_bundle()) throw ExecError("job '" + job.id + "': unexpected bundle inside the reduce pipeline");
          stages.push_back(s.func());
        }
        primaryOut[t] = run_chain(stages, std::move(reduceIn[t]), reduceEntry, t);
      }
    }
    jt->reduceSeconds += now_seconds() - t0;

    t0 = now_seconds();
    if (!reduceBundle) {
      if (primary.size() != 1)
        throw ExecError("job '" + job.id + "': expected exactly one primary output dataset");
      for (const auto& buf : primaryOut) {
        jt->reduceOutRecords += static_cast<double>(buf.size());
        for (const auto& r : buf) jt->reduceOutBytes += static_cast<double>(canonical_size(r));
      }
      materialize(primary.front(), std::move(primaryOut), job.id);
    }
    flush_sinks(job);
    jt->writeSeconds += now_seconds() - t0;
  }

  void materialize(const DatasetId& d, std::vector<std::vector<Record>> partitions, const JobId& producer) {
    InMemoryDataset ds;
    ds.layout = derive_output_layout(plan, producer);
    ds.layout.partitionCount = static_cast<int>(partitions.size());
    ds.partitions = std::move(partitions);
    for (const auto& p : ds.partitions) {
      jt->outputRecords[d] += static_cast<double>(p.size());
      for (const auto& r : p) jt->outputBytes[d] += static_cast<double>(canonical_size(r));
    }
    store[d] = std::move(ds);
  }

  void flush_sinks(const Job& job) {
    for (auto& [d, sb] : sinks) {
      // normalize: reduce-side totals for sink datasets
      for (const auto& p : sb.partitions) {
        jt->reduceOutRecords += static_cast<double>(p.size());
        for (const auto& r : p) jt->reduceOutBytes += static_cast<double>(canonical_size(r));
      }
      materialize(d, std::move(sb.partitions), job.id);
    }
    sinks.clear();
  }

  // Samples map-output key fields for histogram building (shuffled jobs).
  void collect_key_samples_shuffle(const Job& job, const std::vector<std::vector<Record>>& parts, bool tagged,
                                   const std::vector<Stage>& mapStages) {
    if (tagged) return;
    const auto& sch = job.annotations.schema;
    std::vector<std::string> names;
    if (sch && !sch->k2.empty()) {
      names = sch->k2;
    } else if (!mapStages.empty() && !mapStages.back().is_bundle() && !mapStages.back().func().outKey.empty()) {
      names = mapStages.back().func().outKey;
    }
    if (names.empty()) return;
    for (const auto& part : parts)
      for (const auto& r : part)
        for (size_t i = 0; i < names.size() && i < r.key.size(); ++i) jt->keySamples[names[i]].push_back(r.key[i]);
  }

  void collect_key_samples_mapout(const Job& job, const std::vector<DatasetId>& primary) {
    if (primary.empty()) return;
    (void)job;
  }
};

}  // namespace

size_t InMemoryDataset::record_count() const {
  size_t n = 0;
  for (const auto& p : partitions) n += p.size();
  return n;
}

double InMemoryDataset::byte_size() const {
  double b = 0;
  for (const auto& p : partitions)
    for (const auto& r : p) b += static_cast<double>(canonical_size(r));
  return b;
}

std::vector<Record> InMemoryDataset::all_records() const {
  std::vector<Record> out;
  for (const auto& p : partitions) out.insert(out.end(), p.begin(), p.end());
  return out;
}

double RunTrace::total_seconds() const {
  double t = 0;
  for (const auto& [id, jt] : jobs) t += jt.total_seconds();
  return t;
}

RunResult run_plan(const Plan& plan, const UdfRegistry& registry,
                   const std::map<DatasetId, InMemoryDataset>& inputs) {
  plan.validate();
  RunResult result;
  for (const auto& d : plan.base_datasets()) {
    auto it = inputs.find(d);
    if (it == inputs.end()) throw ExecError("base dataset '" + d + "' was not supplied");
    result.datasets[d] = it->second;
  }
  Executor ex{plan, registry, result.datasets, result.trace, {}, {}, nullptr};
  for (const auto& j : topological_job_order(plan)) ex.run_job(plan.jobs.at(j));
  return result;
}

std::string DiffReport::to_string() const {
  if (equal) return "equal";
  std::string out = "different:\n";
  for (const auto& d : diffs) out += "  " + d + "\n";
  return out;
}

namespace {

std::string record_text(const Record& r) {
  std::string out = "(";
  for (size_t i = 0; i < r.key.size(); ++i) out += (i ? "," : "") + scalar_to_text(r.key[i]);
  out += " | ";
  for (size_t i = 0; i < r.value.size(); ++i) out += (i ? "," : "") + scalar_to_text(r.value[i]);
  return out + ")";
}

}  // namespace

DiffReport compare_outputs(const std::map<DatasetId, InMemoryDataset>& a,
                           const std::map<DatasetId, InMemoryDataset>& b) {
  DiffReport rep;
  auto addDiff = [&](std::string d) {
    rep.equal = false;
    if (rep.diffs.size() < 10) rep.diffs.push_back(std::move(d));
  };
  for (const auto& [id, ds] : a)
    if (!b.count(id)) addDiff("dataset '" + id + "' missing from right side");
  for (const auto& [id, ds] : b)
    if (!a.count(id)) addDiff("dataset '" + id + "' missing from left side");
  if (!rep.equal) return rep;

  for (const auto& [id, dsa] : a) {
    auto ra = dsa.all_records();
    auto rb = b.at(id).all_records();
    std::sort(ra.begin(), ra.end(), [](const Record& x, const Record& y) { return compare_record(x, y) < 0; });
    std::sort(rb.begin(), rb.end(), [](const Record& x, const Record& y) { return compare_record(x, y) < 0; });
    size_t i = 0, j = 0;
    while (i < ra.size() || j < rb.size()) {
      if (rep.diffs.size() >= 10) break;
      if (i >= ra.size()) {
        addDiff("'" + id + "': extra on right " + record_text(rb[j++]));
      } else if (j >= rb.size()) {
        addDiff("'" + id + "': extra on left " + record_text(ra[i++]));
      } else {
        int c = compare_record(ra[i], rb[j]);
        if (c == 0) {
          ++i;
          ++j;
        } else if (c < 0) {
          addDiff("'" + id + "': extra on left " + record_text(ra[i++]));
        } else {
          addDiff("'" + id + "': extra on right " + record_text(rb[j++]));
        }
      }
    }
    if (i < ra.size() || j < rb.size()) rep.equal = false;
  }
  return rep;
}

std::map<JobId, ProfileAnnotation> collect_profile(const Plan& plan, const UdfRegistry& registry,
                                                   const std::map<DatasetId, InMemoryDataset>& inputs) {
  RunResult run = run_plan(plan, registry, inputs);
  std::map<JobId, ProfileAnnotation> out;
  for (const auto& [id, jt] : run.trace.jobs) {
    if (jt.mapInRecords <= 0)
      throw ProfileError("job '" + id +
                         "' processed zero input records; empty inputs are costed with the per-task startup floor "
                         "and cannot be profiled");
    if (jt.mapOutRecords <= 0) continue;  // nothing measurable to annotate
    const Job& job = plan.jobs.at(id);
    if (!job.program.map_only() && jt.reduceOutRecords <= 0) continue;
    ProfileAnnotation p;
    auto& d = p.dataflow;
    d.mapInRecords = jt.mapInRecords;
    d.mapInBytes = jt.mapInBytes;
    d.mapOutRecords = jt.mapOutRecords;
    d.mapOutBytes = jt.mapOutBytes;
    d.combineOutRecords = jt.combineOutRecords;
    d.combineOutBytes = jt.combineOutBytes;
    d.reduceInRecords = jt.reduceInRecords;
    d.reduceInBytes = jt.reduceInBytes;
    d.reduceOutRecords = jt.reduceOutRecords;
    d.reduceOutBytes = jt.reduceOutBytes;
    d.mapOutDistinctKeys = jt.mapOutDistinctKeys;
    for (const auto& [field, samples] : jt.keySamples) d.keyHistograms[field] = build_histogram(samples);
    auto& c = p.costs;
    c.readSecPerByte = jt.mapInBytes > 0 ? jt.readSeconds / jt.mapInBytes : 0;
    c.mapSecPerRecord = jt.mapInRecords > 0 ? jt.mapSeconds / jt.mapInRecords : 0;
    c.spillSortSecPerByte = jt.shuffleBytes > 0 ? jt.sortSeconds / jt.shuffleBytes : 0;
    c.shuffleSecPerByte = jt.shuffleBytes > 0 ? jt.shuffleSeconds / jt.shuffleBytes : 0;
    c.mergeSecPerByte = 0;
    c.reduceSecPerRecord = jt.reduceInRecords > 0 ? jt.reduceSeconds / jt.reduceInRecords : 0;
    double outBytes = 0;
    for (const auto& [ds, b] : jt.outputBytes) outBytes += b;
    c.writeSecPerByte = outBytes > 0 ? jt.writeSeconds / outBytes : 0;
    out[id] = std::move(p);
  }
  return out;
}

void install_profiles(Plan& plan, const UdfRegistry& registry,
                      const std::map<DatasetId, InMemoryDataset>& inputs) {
  RunResult run = run_plan(plan, registry, inputs);
  auto profiles = collect_profile(plan, registry, inputs);
  for (auto& [id, prof] : profiles) plan.jobs.at(id).annotations.profile = std::move(prof);
  for (auto& [id, ds] : plan.datasets) {
    auto it = run.datasets.find(id);
    if (it == run.datasets.end()) continue;
    ds.annotations.recordCount = static_cast<double>(it->second.record_count());
    ds.annotations.sizeBytes = it->second.byte_size();
    ds.layout.partitionCount = static_cast<int>(it->second.partitions.size());
  }
}

void save_dataset(const InMemoryDataset& ds, const RecordSchema& schema, const std::string& dir,
                  const DatasetId& id) {
  fs::path base = fs::path(dir) / id;
  fs::create_directories(base);
  for (size_t p = 0; p < ds.partitions.size(); ++p) {
    char name[32];
    std::snprintf(name, sizeof(name), "part-%05zu.tsv", p);
    std::ofstream out(base / name);
    for (const auto& r : ds.partitions[p]) {
      std::string line;
      for (size_t i = 0; i < r.key.size(); ++i) line += (i ? "\t" : "") + scalar_to_text(r.key[i]);
      for (size_t i = 0; i < r.value.size(); ++i) line += "\t" + scalar_to_text(r.value[i]);
      out << line << "\n";
    }
  }
  (void)schema;
}

InMemoryDataset load_dataset(const Dataset& meta, const std::string& dir) {
  if (!meta.recordSchema)
    throw ExecError("dataset '" + meta.id + "' has no record schema; cannot load delimited text");
  const RecordSchema& schema = *meta.recordSchema;
  fs::path base = fs::path(dir) / meta.id;
  if (!fs::exists(base)) throw ExecError("dataset directory '" + base.string() + "' not found");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(base))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  InMemoryDataset ds;
  ds.layout = meta.layout;
  for (const auto& f : files) {
    std::ifstream in(f);
    std::vector<Record> part;
    std::string line;
    size_t lineNo = 0;
    while (std::getline(in, line)) {
      ++lineNo;
      if (line.empty()) continue;
      std::vector<std::string> cells;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, '\t')) cells.push_back(cell);
      size_t want = schema.key.size() + schema.value.size();
      if (cells.size() != want)
        throw ExecError("dataset '" + meta.id + "' file " + f.filename().string() + " line " +
                        std::to_string(lineNo) + ": expected " + std::to_string(want) + " fields, got " +
                        std::to_string(cells.size()));
      Record r;
      size_t idx = 0;
      for (const auto& fd : schema.key) r.key.push_back(scalar_from_text(fd.type, cells[idx++]));
      for (const auto& fd : schema.value) r.value.push_back(scalar_from_text(fd.type, cells[idx++]));
      part.push_back(std::move(r));
    }
    ds.partitions.push_back(std::move(part));
  }
  if (ds.partitions.empty()) ds.partitions.push_back({});
  ds.layout.partitionCount = static_cast<int>(ds.partitions.size());
  return ds;
}

std::map<DatasetId, InMemoryDataset> load_base_datasets(const Plan& plan, const std::string& dir) {
  std::map<DatasetId, InMemoryDataset> out;
  for (const auto& d : plan.base_datasets()) out[d] = load_dataset(plan.datasets.at(d), dir);
  return out;
}

}  // namespace mrpack
