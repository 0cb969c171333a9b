#include "mrpack/plan_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace mrpack {

using json = nlohmann::ordered_json;

namespace {

json scalar_to_json(const Scalar& s) {
  return std::visit([](const auto& v) { return json(v); }, s);
}

Scalar scalar_from_json(const json& j) {
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number_integer()) return j.get<int64_t>();
  if (j.is_number_float()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  throw ParseError("expected scalar value, got " + std::string(j.type_name()));
}

json scalars_to_json(const std::vector<Scalar>& v) {
  json a = json::array();
  for (const auto& s : v) a.push_back(scalar_to_json(s));
  return a;
}

std::vector<Scalar> scalars_from_json(const json& j) {
  std::vector<Scalar> out;
  for (const auto& e : j) out.push_back(scalar_from_json(e));
  return out;
}

json partition_to_json(const PartitionSpec& p) {
  json j;
  j["kind"] = p.kind == PartitionKind::Hash ? "hash" : "range";
  j["partitionKey"] = p.partitionKey;
  j["sortKey"] = p.sortKey;
  if (!p.rangeSplits.empty()) j["rangeSplits"] = scalars_to_json(p.rangeSplits);
  return j;
}

PartitionSpec partition_from_json(const json& j) {
  PartitionSpec p;
  std::string kind = j.value("kind", "hash");
  if (kind == "hash")
    p.kind = PartitionKind::Hash;
  else if (kind == "range")
    p.kind = PartitionKind::Range;
  else
    throw ParseError("unknown partition kind '" + kind + "'");
  p.partitionKey = j.value("partitionKey", std::vector<std::string>{});
  p.sortKey = j.value("sortKey", std::vector<std::string>{});
  if (j.contains("rangeSplits")) p.rangeSplits = scalars_from_json(j.at("rangeSplits"));
  return p;
}

json stage_to_json(const Stage& s);

json func_stage_to_json(const FuncStage& f) {
  json j;
  j["role"] = f.role == StageRole::Map ? "map" : (f.role == StageRole::Reduce ? "reduce" : "combine");
  j["fn"] = f.fn;
  if (!f.group.empty()) j["group"] = f.group;
  if (!f.outKey.empty()) j["outKey"] = f.outKey;
  if (!f.outValue.empty()) j["outValue"] = f.outValue;
  if (f.tee) j["tee"] = *f.tee;
  return j;
}

FuncStage func_stage_from_json(const json& j) {
  FuncStage f;
  std::string role = j.value("role", "map");
  if (role == "map")
    f.role = StageRole::Map;
  else if (role == "reduce")
    f.role = StageRole::Reduce;
  else if (role == "combine")
    f.role = StageRole::Combine;
  else
    throw ParseError("unknown stage role '" + role + "'");
  f.fn = j.at("fn").get<std::string>();
  f.group = j.value("group", std::vector<std::string>{});
  f.outKey = j.value("outKey", std::vector<std::string>{});
  f.outValue = j.value("outValue", std::vector<std::string>{});
  if (j.contains("tee")) f.tee = j.at("tee").get<std::string>();
  return f;
}

json schema_to_json(const SchemaAnnotation& s) {
  json j;
  j["k1"] = s.k1;
  j["v1"] = s.v1;
  j["k2"] = s.k2;
  j["v2"] = s.v2;
  j["k3"] = s.k3;
  j["v3"] = s.v3;
  return j;
}

SchemaAnnotation schema_from_json(const json& j) {
  SchemaAnnotation s;
  s.k1 = j.value("k1", std::vector<std::string>{});
  s.v1 = j.value("v1", std::vector<std::string>{});
  s.k2 = j.value("k2", std::vector<std::string>{});
  s.v2 = j.value("v2", std::vector<std::string>{});
  s.k3 = j.value("k3", std::vector<std::string>{});
  s.v3 = j.value("v3", std::vector<std::string>{});
  return s;
}

json bundle_to_json(const BundleStage& b) {
  json branches = json::array();
  for (const auto& br : b.branches) {
    json j;
    j["tag"] = br.tag;
    j["sources"] = br.sources;
    json stages = json::array();
    for (const auto& st : br.stages) stages.push_back(func_stage_to_json(st));
    j["stages"] = stages;
    if (br.sink) j["sink"] = *br.sink;
    if (br.mapSink) j["mapSink"] = *br.mapSink;
    if (br.combineFn) j["combine"] = *br.combineFn;
    j["partition"] = partition_to_json(br.partition);
    if (br.schema) j["schema"] = schema_to_json(*br.schema);
    branches.push_back(std::move(j));
  }
  return json{{"branches", std::move(branches)}};
}

BundleStage bundle_from_json(const json& j) {
  BundleStage b;
  for (const auto& e : j.at("branches")) {
    BundleBranch br;
    br.tag = e.at("tag").get<int>();
    br.sources = e.value("sources", std::vector<std::string>{});
    for (const auto& st : e.at("stages")) br.stages.push_back(func_stage_from_json(st));
    if (e.contains("sink")) br.sink = e.at("sink").get<std::string>();
    if (e.contains("mapSink")) br.mapSink = e.at("mapSink").get<std::string>();
    if (e.contains("combine")) br.combineFn = e.at("combine").get<std::string>();
    if (e.contains("partition")) br.partition = partition_from_json(e.at("partition"));
    if (e.contains("schema")) br.schema = schema_from_json(e.at("schema"));
    b.branches.push_back(std::move(br));
  }
  return b;
}

json stage_to_json(const Stage& s) {
  if (s.is_bundle()) return json{{"bundle", bundle_to_json(s.bundle())}};
  return func_stage_to_json(s.func());
}

Stage stage_from_json(const json& j) {
  Stage s;
  if (j.contains("bundle"))
    s.op = bundle_from_json(j.at("bundle"));
  else
    s.op = func_stage_from_json(j);
  return s;
}

json pipeline_to_json(const std::vector<Stage>& p) {
  json a = json::array();
  for (const auto& s : p) a.push_back(stage_to_json(s));
  return a;
}

std::vector<Stage> pipeline_from_json(const json& j) {
  std::vector<Stage> p;
  for (const auto& e : j) p.push_back(stage_from_json(e));
  return p;
}

json constraint_to_json(const ConfigConstraint& c) {
  json j;
  j["kind"] = constraint_kind_name(c.kind);
  switch (c.kind) {
    case ConfigConstraint::Kind::MapTasksEqualProducerReduceTasks: j["producer"] = c.producer; break;
    case ConfigConstraint::Kind::PartitionKeyFixed:
    case ConfigConstraint::Kind::SortKeyFixed: j["fields"] = c.fields; break;
    case ConfigConstraint::Kind::RangeSplitsFixed: j["splits"] = scalars_to_json(c.splits); break;
    case ConfigConstraint::Kind::OrderPreservingInput: break;
  }
  return j;
}

ConfigConstraint constraint_from_json(const json& j) {
  ConfigConstraint c;
  c.kind = constraint_kind_from_name(j.at("kind").get<std::string>());
  c.producer = j.value("producer", std::string{});
  c.fields = j.value("fields", std::vector<std::string>{});
  if (j.contains("splits")) c.splits = scalars_from_json(j.at("splits"));
  return c;
}

json histogram_to_json(const Histogram& h) {
  json j;
  if (h.equiWidth) {
    j["kind"] = "equiWidth";
    j["lo"] = h.lo;
    j["hi"] = h.hi;
    j["buckets"] = h.buckets;
  } else {
    j["kind"] = "explicit";
    json entries = json::array();
    for (const auto& [v, c] : h.entries) entries.push_back(json::array({scalar_to_json(v), c}));
    j["entries"] = std::move(entries);
  }
  return j;
}

Histogram histogram_from_json(const json& j) {
  Histogram h;
  std::string kind = j.value("kind", "explicit");
  if (kind == "equiWidth") {
    h.equiWidth = true;
    h.lo = j.at("lo").get<double>();
    h.hi = j.at("hi").get<double>();
    h.buckets = j.at("buckets").get<std::vector<double>>();
  } else {
    for (const auto& e : j.at("entries")) h.entries.push_back({scalar_from_json(e.at(0)), e.at(1).get<double>()});
  }
  return h;
}

json profile_to_json(const ProfileAnnotation& p) {
  json df;
  const auto& d = p.dataflow;
  df["mapInRecords"] = d.mapInRecords;
  df["mapInBytes"] = d.mapInBytes;
  df["mapOutRecords"] = d.mapOutRecords;
  df["mapOutBytes"] = d.mapOutBytes;
  if (d.combineOutRecords >= 0) {
    df["combineOutRecords"] = d.combineOutRecords;
    df["combineOutBytes"] = d.combineOutBytes;
  }
  df["reduceInRecords"] = d.reduceInRecords;
  df["reduceInBytes"] = d.reduceInBytes;
  df["reduceOutRecords"] = d.reduceOutRecords;
  df["reduceOutBytes"] = d.reduceOutBytes;
  df["mapOutDistinctKeys"] = d.mapOutDistinctKeys;
  if (!d.keyHistograms.empty()) {
    json hs;
    for (const auto& [f, h] : d.keyHistograms) hs[f] = histogram_to_json(h);
    df["histograms"] = std::move(hs);
  }
  json cs;
  const auto& c = p.costs;
  cs["readSecPerByte"] = c.readSecPerByte;
  cs["mapSecPerRecord"] = c.mapSecPerRecord;
  cs["combineSecPerRecord"] = c.combineSecPerRecord;
  cs["spillSortSecPerByte"] = c.spillSortSecPerByte;
  cs["shuffleSecPerByte"] = c.shuffleSecPerByte;
  cs["mergeSecPerByte"] = c.mergeSecPerByte;
  cs["reduceSecPerRecord"] = c.reduceSecPerRecord;
  cs["writeSecPerByte"] = c.writeSecPerByte;
  json j;
  j["dataflow"] = std::move(df);
  j["costs"] = std::move(cs);
  if (!p.provenance.empty()) {
    json prov = json::array();
    for (const auto& [job, phase] : p.provenance) prov.push_back(json::array({job, phase}));
    j["provenance"] = std::move(prov);
  }
  return j;
}

ProfileAnnotation profile_from_json(const json& j) {
  ProfileAnnotation p;
  const json& df = j.at("dataflow");
  auto& d = p.dataflow;
  d.mapInRecords = df.value("mapInRecords", 0.0);
  d.mapInBytes = df.value("mapInBytes", 0.0);
  d.mapOutRecords = df.value("mapOutRecords", 0.0);
  d.mapOutBytes = df.value("mapOutBytes", 0.0);
  d.combineOutRecords = df.value("combineOutRecords", -1.0);
  d.combineOutBytes = df.value("combineOutBytes", -1.0);
  d.reduceInRecords = df.value("reduceInRecords", 0.0);
  d.reduceInBytes = df.value("reduceInBytes", 0.0);
  d.reduceOutRecords = df.value("reduceOutRecords", 0.0);
  d.reduceOutBytes = df.value("reduceOutBytes", 0.0);
  d.mapOutDistinctKeys = df.value("mapOutDistinctKeys", 0.0);
  if (df.contains("histograms"))
    for (auto it = df.at("histograms").begin(); it != df.at("histograms").end(); ++it)
      d.keyHistograms[it.key()] = histogram_from_json(it.value());
  if (j.contains("costs")) {
    const json& cs = j.at("costs");
    auto& c = p.costs;
    c.readSecPerByte = cs.value("readSecPerByte", 0.0);
    c.mapSecPerRecord = cs.value("mapSecPerRecord", 0.0);
    c.combineSecPerRecord = cs.value("combineSecPerRecord", 0.0);
    c.spillSortSecPerByte = cs.value("spillSortSecPerByte", 0.0);
    c.shuffleSecPerByte = cs.value("shuffleSecPerByte", 0.0);
    c.mergeSecPerByte = cs.value("mergeSecPerByte", 0.0);
    c.reduceSecPerRecord = cs.value("reduceSecPerRecord", 0.0);
    c.writeSecPerByte = cs.value("writeSecPerByte", 0.0);
  }
  if (j.contains("provenance"))
    for (const auto& e : j.at("provenance"))
      p.provenance.push_back({e.at(0).get<std::string>(), e.at(1).get<std::string>()});
  return p;
}

json cluster_to_json(const ClusterSpec& c) {
  json j;
  j["nodeCount"] = c.nodeCount;
  j["mapSlotsPerNode"] = c.mapSlotsPerNode;
  j["reduceSlotsPerNode"] = c.reduceSlotsPerNode;
  j["perSlotMemoryMB"] = c.perSlotMemoryMB;
  j["diskMBps"] = c.diskMBps;
  j["networkMBps"] = c.networkMBps;
  json cal;
  cal["compressionFactor"] = c.calibration.compressionFactor;
  cal["startupFloorSec"] = c.calibration.startupFloorSec;
  cal["contentionCoeff"] = c.calibration.contentionCoeff;
  cal["stageBufferMB"] = c.calibration.stageBufferMB;
  j["calibration"] = std::move(cal);
  return j;
}

ClusterSpec cluster_from_json(const json& j) {
  ClusterSpec c;
  c.nodeCount = j.value("nodeCount", c.nodeCount);
  c.mapSlotsPerNode = j.value("mapSlotsPerNode", c.mapSlotsPerNode);
  c.reduceSlotsPerNode = j.value("reduceSlotsPerNode", c.reduceSlotsPerNode);
  c.perSlotMemoryMB = j.value("perSlotMemoryMB", c.perSlotMemoryMB);
  c.diskMBps = j.value("diskMBps", c.diskMBps);
  c.networkMBps = j.value("networkMBps", c.networkMBps);
  if (j.contains("calibration")) {
    const json& cal = j.at("calibration");
    c.calibration.compressionFactor = cal.value("compressionFactor", c.calibration.compressionFactor);
    c.calibration.startupFloorSec = cal.value("startupFloorSec", c.calibration.startupFloorSec);
    c.calibration.contentionCoeff = cal.value("contentionCoeff", c.calibration.contentionCoeff);
    c.calibration.stageBufferMB = cal.value("stageBufferMB", c.calibration.stageBufferMB);
  }
  return c;
}

json record_schema_to_json(const RecordSchema& s) {
  auto decls = [](const std::vector<FieldDecl>& ds) {
    json a = json::array();
    for (const auto& d : ds) a.push_back(json{{"name", d.name}, {"type", type_name(d.type)}});
    return a;
  };
  return json{{"key", decls(s.key)}, {"value", decls(s.value)}};
}

RecordSchema record_schema_from_json(const json& j) {
  auto decls = [](const json& a) {
    std::vector<FieldDecl> ds;
    for (const auto& e : a) ds.push_back({e.at("name").get<std::string>(), type_from_name(e.at("type").get<std::string>())});
    return ds;
  };
  RecordSchema s;
  s.key = decls(j.value("key", json::array()));
  s.value = decls(j.value("value", json::array()));
  return s;
}

}  // namespace

std::string serialize_plan(const Plan& plan) {
  json root;

  json jobs;
  for (const auto& [id, job] : plan.jobs) {
    json pj;
    pj["map"] = job.program.mapFn;
    if (job.program.reduceFn) pj["reduce"] = *job.program.reduceFn;
    if (job.program.combineFn) pj["combine"] = *job.program.combineFn;
    pj["partition"] = partition_to_json(job.program.partition);
    if (!job.program.mapPipeline.empty()) pj["mapPipeline"] = pipeline_to_json(job.program.mapPipeline);
    if (!job.program.reducePipeline.empty()) pj["reducePipeline"] = pipeline_to_json(job.program.reducePipeline);

    json cj;
    cj["numMapTasks"] = job.config.numMapTasks;
    cj["numReduceTasks"] = job.config.numReduceTasks;
    cj["sortBufferMB"] = job.config.sortBufferMB;
    cj["mapOutputCompression"] = job.config.mapOutputCompression;
    cj["outputCompression"] = job.config.outputCompression;
    cj["combinerEnabled"] = job.config.combinerEnabled;

    json jj;
    jj["program"] = std::move(pj);
    jj["config"] = std::move(cj);
    if (!job.constraints.empty()) {
      json cs = json::array();
      for (const auto& c : job.constraints) cs.push_back(constraint_to_json(c));
      jj["constraints"] = std::move(cs);
    }
    jobs[id] = std::move(jj);
  }
  root["jobs"] = std::move(jobs);

  json datasets;
  for (const auto& [id, ds] : plan.datasets) {
    json dj;
    dj["descriptor"] = ds.descriptor;
    json lj;
    lj["kind"] = ds.layout.kind == PartitionKind::Hash ? "hash" : "range";
    lj["partitionFields"] = ds.layout.partitionFields;
    lj["orderingFields"] = ds.layout.orderingFields;
    lj["partitionCount"] = ds.layout.partitionCount;
    lj["compressed"] = ds.layout.compressed;
    if (!ds.layout.rangeBoundaries.empty()) lj["rangeBoundaries"] = scalars_to_json(ds.layout.rangeBoundaries);
    dj["layout"] = std::move(lj);
    if (ds.recordSchema) dj["schema"] = record_schema_to_json(*ds.recordSchema);
    datasets[id] = std::move(dj);
  }
  root["datasets"] = std::move(datasets);

  json edges = json::array();
  std::vector<Edge> sorted = plan.edges;
  std::sort(sorted.begin(), sorted.end(), [](const Edge& a, const Edge& b) {
    return std::tie(a.job, a.dataset, a.dir) < std::tie(b.job, b.dataset, b.dir);
  });
  for (const auto& e : sorted) {
    json ej;
    ej["job"] = e.job;
    ej["dataset"] = e.dataset;
    ej["dir"] = e.dir == EdgeDir::Input ? "input" : "output";
    if (!e.partitions.empty()) ej["partitions"] = e.partitions;
    edges.push_back(std::move(ej));
  }
  root["edges"] = std::move(edges);

  json jobAnn, dsAnn;
  for (const auto& [id, job] : plan.jobs) {
    json a;
    if (job.annotations.schema) a["schema"] = schema_to_json(*job.annotations.schema);
    if (job.annotations.filter) {
      json f;
      json preds = json::array();
      for (const auto& p : job.annotations.filter->predicates)
        preds.push_back(json{{"field", p.field}, {"cmp", cmp_name(p.cmp)}, {"value", scalar_to_json(p.literal)}});
      f["predicates"] = std::move(preds);
      if (job.annotations.filter->passFraction) f["passFraction"] = *job.annotations.filter->passFraction;
      a["filter"] = std::move(f);
    }
    if (job.annotations.profile) a["profile"] = profile_to_json(*job.annotations.profile);
    if (!a.empty()) jobAnn[id] = std::move(a);
  }
  for (const auto& [id, ds] : plan.datasets) {
    json a;
    if (ds.annotations.sizeBytes) a["sizeBytes"] = *ds.annotations.sizeBytes;
    if (ds.annotations.recordCount) a["recordCount"] = *ds.annotations.recordCount;
    if (!a.empty()) dsAnn[id] = std::move(a);
  }
  json ann;
  ann["jobs"] = std::move(jobAnn);
  ann["datasets"] = std::move(dsAnn);
  root["annotations"] = std::move(ann);

  if (plan.cluster) root["cluster"] = cluster_to_json(*plan.cluster);

  return root.dump(2) + "\n";
}

Plan parse_plan_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // Map the byte offset to a line/column position for the diagnostic.
    size_t line = 1, col = 1;
    for (size_t i = 0; i < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError("plan parse error at line " + std::to_string(line) + ", column " + std::to_string(col) + ": " +
                     e.what());
  }

  Plan plan;
  try {
    if (root.contains("jobs")) {
      for (auto it = root.at("jobs").begin(); it != root.at("jobs").end(); ++it) {
        Job job;
        job.id = it.key();
        const json& jj = it.value();
        const json& pj = jj.at("program");
        job.program.mapFn = pj.at("map").get<std::string>();
        if (pj.contains("reduce")) job.program.reduceFn = pj.at("reduce").get<std::string>();
        if (pj.contains("combine")) job.program.combineFn = pj.at("combine").get<std::string>();
        if (pj.contains("partition")) job.program.partition = partition_from_json(pj.at("partition"));
        if (pj.contains("mapPipeline")) job.program.mapPipeline = pipeline_from_json(pj.at("mapPipeline"));
        if (pj.contains("reducePipeline")) job.program.reducePipeline = pipeline_from_json(pj.at("reducePipeline"));
        const json& cj = jj.at("config");
        job.config.numMapTasks = cj.value("numMapTasks", 1);
        job.config.numReduceTasks = cj.value("numReduceTasks", job.program.map_only() ? 0 : 1);
        job.config.sortBufferMB = cj.value("sortBufferMB", 128);
        job.config.mapOutputCompression = cj.value("mapOutputCompression", false);
        job.config.outputCompression = cj.value("outputCompression", false);
        job.config.combinerEnabled = cj.value("combinerEnabled", false);
        if (jj.contains("constraints"))
          for (const auto& c : jj.at("constraints")) job.constraints.push_back(constraint_from_json(c));
        plan.jobs[job.id] = std::move(job);
      }
    }
    if (root.contains("datasets")) {
      for (auto it = root.at("datasets").begin(); it != root.at("datasets").end(); ++it) {
        Dataset ds;
        ds.id = it.key();
        const json& dj = it.value();
        ds.descriptor = dj.value("descriptor", ds.id);
        if (dj.contains("layout")) {
          const json& lj = dj.at("layout");
          std::string kind = lj.value("kind", "hash");
          ds.layout.kind = kind == "range" ? PartitionKind::Range : PartitionKind::Hash;
          ds.layout.partitionFields = lj.value("partitionFields", std::vector<std::string>{});
          ds.layout.orderingFields = lj.value("orderingFields", std::vector<std::string>{});
          ds.layout.partitionCount = lj.value("partitionCount", 1);
          ds.layout.compressed = lj.value("compressed", false);
          if (lj.contains("rangeBoundaries")) ds.layout.rangeBoundaries = scalars_from_json(lj.at("rangeBoundaries"));
        }
        if (dj.contains("schema")) ds.recordSchema = record_schema_from_json(dj.at("schema"));
        plan.datasets[ds.id] = std::move(ds);
      }
    }
    if (root.contains("edges")) {
      for (const auto& ej : root.at("edges")) {
        Edge e;
        e.job = ej.at("job").get<std::string>();
        e.dataset = ej.at("dataset").get<std::string>();
        std::string dir = ej.at("dir").get<std::string>();
        if (dir == "input")
          e.dir = EdgeDir::Input;
        else if (dir == "output")
          e.dir = EdgeDir::Output;
        else
          throw ParseError("edge dir must be 'input' or 'output'");
        e.partitions = ej.value("partitions", std::vector<int>{});
        plan.edges.push_back(std::move(e));
      }
    }
    if (root.contains("annotations")) {
      const json& ann = root.at("annotations");
      if (ann.contains("jobs")) {
        for (auto it = ann.at("jobs").begin(); it != ann.at("jobs").end(); ++it) {
          auto jobIt = plan.jobs.find(it.key());
          if (jobIt == plan.jobs.end()) throw ParseError("annotations reference unknown job '" + it.key() + "'");
          const json& a = it.value();
          if (a.contains("schema")) jobIt->second.annotations.schema = schema_from_json(a.at("schema"));
          if (a.contains("filter")) {
            FilterAnnotation f;
            for (const auto& p : a.at("filter").at("predicates")) {
              FilterPredicate fp;
              fp.field = p.at("field").get<std::string>();
              fp.cmp = cmp_from_name(p.at("cmp").get<std::string>());
              fp.literal = scalar_from_json(p.at("value"));
              f.predicates.push_back(std::move(fp));
            }
            if (a.at("filter").contains("passFraction")) f.passFraction = a.at("filter").at("passFraction").get<double>();
            jobIt->second.annotations.filter = std::move(f);
          }
          if (a.contains("profile")) jobIt->second.annotations.profile = profile_from_json(a.at("profile"));
        }
      }
      if (ann.contains("datasets")) {
        for (auto it = ann.at("datasets").begin(); it != ann.at("datasets").end(); ++it) {
          auto dsIt = plan.datasets.find(it.key());
          if (dsIt == plan.datasets.end()) throw ParseError("annotations reference unknown dataset '" + it.key() + "'");
          const json& a = it.value();
          if (a.contains("sizeBytes")) dsIt->second.annotations.sizeBytes = a.at("sizeBytes").get<double>();
          if (a.contains("recordCount")) dsIt->second.annotations.recordCount = a.at("recordCount").get<double>();
        }
      }
    }
    if (root.contains("cluster")) plan.cluster = cluster_from_json(root.at("cluster"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("plan parse error: ") + e.what());
  }

  plan.validate();
  return plan;
}

Plan parse_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open plan file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_plan_text(ss.str());
}

void write_plan(const Plan& plan, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write plan file '" + path + "'");
  out << serialize_plan(plan);
}

uint64_t plan_fingerprint(const Plan& plan) { return fnv1a64(serialize_plan(plan)); }

uint64_t structural_fingerprint(const Plan& plan) {
  Plan stripped = plan;
  for (auto& [id, job] : stripped.jobs) job.annotations.profile.reset();
  return fnv1a64(serialize_plan(stripped));
}

ClusterSpec parse_cluster_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open cluster file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    json j = json::parse(ss.str());
    if (j.contains("cluster")) j = j.at("cluster");
    return cluster_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("cluster parse error: ") + e.what());
  }
}

void write_cluster_file(const ClusterSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write cluster file '" + path + "'");
  out << cluster_to_json(spec).dump(2) << "\n";
}

}  // namespace mrpack
