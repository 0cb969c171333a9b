#include "mrpack/workloads.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "mrpack/plan_io.hpp"
#include "mrpack/registry.hpp"

namespace mrpack {

namespace {

double unit_rand(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

int64_t rand_int(std::mt19937_64& rng, int64_t lo, int64_t hi) {
  return lo + static_cast<int64_t>(rng() % static_cast<uint64_t>(hi - lo + 1));
}

// Power-law-ish value in [1, n]: heavy mass on small ids.
int64_t zipf_int(std::mt19937_64& rng, int64_t n) {
  double u = unit_rand(rng);
  double v = std::pow(static_cast<double>(n), u);
  return std::max<int64_t>(1, std::min<int64_t>(n, static_cast<int64_t>(v)));
}

struct Builder {
  Plan plan;

  Dataset& dataset(const DatasetId& id, RecordSchema schema, DatasetLayout layout) {
    Dataset ds;
    ds.id = id;
    ds.descriptor = id;
    ds.layout = std::move(layout);
    ds.recordSchema = std::move(schema);
    plan.datasets[id] = std::move(ds);
    return plan.datasets[id];
  }

  Job& job(const JobId& id, const std::string& mapFn, std::optional<std::string> reduceFn, int numMap,
           int numReduce) {
    Job j;
    j.id = id;
    j.program.mapFn = mapFn;
    j.program.reduceFn = std::move(reduceFn);
    j.config.numMapTasks = numMap;
    j.config.numReduceTasks = numReduce;
    plan.jobs[id] = std::move(j);
    return plan.jobs[id];
  }

  void reads(const JobId& j, const DatasetId& d) { plan.edges.push_back({j, d, EdgeDir::Input, {}}); }
  void writes(const JobId& j, const DatasetId& d) { plan.edges.push_back({j, d, EdgeDir::Output, {}}); }
};

SchemaAnnotation schema(std::vector<std::string> k1, std::vector<std::string> v1, std::vector<std::string> k2,
                        std::vector<std::string> v2, std::vector<std::string> k3, std::vector<std::string> v3) {
  SchemaAnnotation s;
  s.k1 = std::move(k1);
  s.v1 = std::move(v1);
  s.k2 = std::move(k2);
  s.v2 = std::move(v2);
  s.k3 = std::move(k3);
  s.v3 = std::move(v3);
  return s;
}

RecordSchema record_schema(std::vector<FieldDecl> key, std::vector<FieldDecl> value) {
  RecordSchema s;
  s.key = std::move(key);
  s.value = std::move(value);
  return s;
}

// Places records into partitions per the declared layout and sorts them on
// the declared ordering fields.
InMemoryDataset place(std::vector<Record> records, const Dataset& meta) {
  const DatasetLayout& l = meta.layout;
  InMemoryDataset ds;
  ds.layout = l;
  ds.partitions.assign(std::max(1, l.partitionCount), {});

  std::vector<std::pair<bool, int>> partRefs, orderRefs;
  auto resolve = [&](const std::string& name) -> std::pair<bool, int> {
    const RecordSchema& rs = *meta.recordSchema;
    for (size_t i = 0; i < rs.key.size(); ++i)
      if (rs.key[i].name == name) return {true, static_cast<int>(i)};
    for (size_t i = 0; i < rs.value.size(); ++i)
      if (rs.value[i].name == name) return {false, static_cast<int>(i)};
    throw ValidationError("dataset '" + meta.id + "' layout references unknown field '" + name + "'");
  };
  for (const auto& f : l.partitionFields) partRefs.push_back(resolve(f));
  for (const auto& f : l.orderingFields) orderRefs.push_back(resolve(f));

  auto get = [](const Record& r, std::pair<bool, int> ref) -> const Scalar& {
    return ref.first ? r.key[ref.second] : r.value[ref.second];
  };

  for (auto& r : records) {
    int p = 0;
    if (!partRefs.empty()) {
      if (l.kind == PartitionKind::Range) {
        const Scalar& v = get(r, partRefs[0]);
        for (const auto& b : l.rangeBoundaries) {
          if (compare_ordered(v, b) < 0) break;
          ++p;
        }
        p = std::min(p, l.partitionCount - 1);
      } else {
        std::string enc;
        for (const auto& ref : partRefs) encode_scalar(get(r, ref), enc);
        p = static_cast<int>(fnv1a64(enc) % static_cast<uint64_t>(l.partitionCount));
      }
    } else {
      p = static_cast<int>(ds.partitions.empty() ? 0 : (&r - records.data()) % ds.partitions.size());
    }
    ds.partitions[p].push_back(std::move(r));
  }
  for (auto& part : ds.partitions) {
    std::sort(part.begin(), part.end(), [&](const Record& a, const Record& b) {
      for (const auto& ref : orderRefs) {
        int c = compare_scalar(get(a, ref), get(b, ref));
        if (c) return c < 0;
      }
      return compare_record(a, b) < 0;
    });
  }
  return ds;
}

void finish(GeneratedWorkload& w, bool keepHistograms = true) {
  w.plan.cluster = ClusterSpec{};
  w.plan.validate();
  install_profiles(w.plan, UdfRegistry::builtin(), w.inputs);
  if (!keepHistograms) {
    for (auto& [id, job] : w.plan.jobs)
      if (job.annotations.profile) job.annotations.profile->dataflow.keyHistograms.clear();
  }
  w.plan.validate();
}

// --- the seven-job report generation workflow (the running example) ---
GeneratedWorkload make_reportgen(int scale, uint64_t seed) {
  GeneratedWorkload w;
  Builder b;
  std::mt19937_64 rng(seed);

  auto& d01 = b.dataset("D01",
                        record_schema({{"custid", FieldType::Int64}},
                                      {{"orderid", FieldType::Int64},
                                       {"partid", FieldType::Int64},
                                       {"shipzipcode", FieldType::Int64},
                                       {"price", FieldType::Float64}}),
                        {PartitionKind::Hash, {"custid"}, {"custid"}, false, 8, {}});
  b.dataset("D1", record_schema({}, {}), {});
  b.dataset("D2", record_schema({}, {}), {});
  b.dataset("D3", record_schema({}, {}), {});
  b.dataset("D4", record_schema({}, {}), {});
  b.dataset("D5", record_schema({}, {}), {});
  b.dataset("D6", record_schema({}, {}), {});
  b.dataset("D7", record_schema({}, {}), {});

  {
    Job& j = b.job("J1", "rekey(key=custid;keep=orderid,shipzipcode,price;where=price>0)", "identity", 8, 8);
    j.annotations.schema = schema({"custid"}, {"orderid", "partid", "shipzipcode", "price"}, {"custid"},
                                  {"orderid", "shipzipcode", "price"}, {"custid"}, {"orderid", "shipzipcode", "price"});
    b.reads("J1", "D01");
    b.writes("J1", "D1");
  }
  {
    Job& j = b.job("J2", "rekey(key=custid;keep=price)", "sum(field=price)", 8, 8);
    j.program.combineFn = "csum(field=price)";
    j.config.combinerEnabled = true;
    j.annotations.schema = schema({"custid"}, {"orderid", "partid", "shipzipcode", "price"}, {"custid"}, {"price"},
                                  {"custid"}, {"custtotal"});
    b.reads("J2", "D01");
    b.writes("J2", "D2");
  }
  {
    Job& j = b.job("J3", "identity", "enrich_with_total", 16, 8);
    j.annotations.schema = schema({"custid"}, {"orderid", "shipzipcode", "price", "custtotal"}, {"custid"},
                                  {"orderid", "shipzipcode", "price", "custtotal"}, {"custid"},
                                  {"orderid", "shipzipcode", "price", "custtotal"});
    b.reads("J3", "D1");
    b.reads("J3", "D2");
    b.writes("J3", "D3");
  }
  {
    Job& j =
        b.job("J4", "identity", "normalize_lines(price=price;total=custtotal;carry=orderid,shipzipcode)", 8, 8);
    j.annotations.schema = schema({"custid"}, {"orderid", "shipzipcode", "price", "custtotal"}, {"custid"},
                                  {"orderid", "shipzipcode", "price", "custtotal"}, {"custid"},
                                  {"orderid", "shipzipcode", "relprice"});
    b.reads("J4", "D3");
    b.writes("J4", "D4");
  }
  {
    Job& j = b.job("J5", "rekey(key=orderid,shipzipcode;keep=relprice;where=shipzipcode<10010)",
                   "agg(ops=sum:relprice)", 8, 8);
    j.annotations.schema = schema({"custid"}, {"orderid", "shipzipcode", "relprice"}, {"orderid", "shipzipcode"},
                                  {"relprice"}, {"orderid", "shipzipcode"}, {"sumrel"});
    j.annotations.filter = FilterAnnotation{{{"shipzipcode", Cmp::LT, int64_t{10010}}}, 0.5};
    b.reads("J5", "D4");
    b.writes("J5", "D5");
  }
  {
    Job& j = b.job("J6", "rekey(key=orderid;keep=relprice;where=orderid<100)", "agg(ops=max:relprice)", 8, 8);
    j.annotations.schema = schema({"custid"}, {"orderid", "shipzipcode", "relprice"}, {"orderid"}, {"relprice"},
                                  {"orderid"}, {"maxrel"});
    j.annotations.filter = FilterAnnotation{{{"orderid", Cmp::LT, int64_t{100}}}, 0.1};
    b.reads("J6", "D4");
    b.writes("J6", "D6");
  }
  {
    Job& j = b.job("J7", "rekey(key=orderid;keep=sumrel)", "distinct_count(field=sumrel)", 8, 4);
    j.annotations.schema = schema({"orderid", "shipzipcode"}, {"sumrel"}, {"orderid"}, {"sumrel"}, {"orderid"},
                                  {"ndistinct"});
    b.reads("J7", "D5");
    b.writes("J7", "D7");
  }

  std::vector<Record> rows;
  for (int i = 0; i < scale; ++i) {
    Record r;
    r.key = {rand_int(rng, 0, 199)};
    r.value = {rand_int(rng, 0, 999), rand_int(rng, 0, 49), rand_int(rng, 10000, 10019),
               1.0 + std::floor(unit_rand(rng) * 990.0) / 10.0};
    rows.push_back(std::move(r));
  }
  w.inputs["D01"] = place(std::move(rows), d01);
  w.plan = std::move(b.plan);
  // histogram-free profiles: the report workflow exercises packing, not range
  // partitioning
  finish(w, false);
  return w;
}

// --- term weighting over a document corpus ---
GeneratedWorkload make_tfidf(int scale, uint64_t seed) {
  GeneratedWorkload w;
  Builder b;
  std::mt19937_64 rng(seed);
  int docs = std::max(20, scale / 10);

  auto& d0 = b.dataset("D0", record_schema({{"doc", FieldType::String}}, {{"text", FieldType::String}}),
                       {PartitionKind::Hash, {"doc"}, {}, false, 4, {}});
  b.dataset("D1", record_schema({}, {}), {});
  b.dataset("D2", record_schema({}, {}), {});
  b.dataset("D3", record_schema({}, {}), {});

  {
    Job& j = b.job("J1", "tokenize(doc=doc;text=text)", "sum(field=one)", 4, 6);
    j.program.combineFn = "csum(field=one)";
    j.config.combinerEnabled = true;
    j.annotations.schema =
        schema({"doc"}, {"text"}, {"word", "doc"}, {"one"}, {"word", "doc"}, {"freq"});
    b.reads("J1", "D0");
    b.writes("J1", "D1");
  }
  {
    Job& j = b.job("J2", "rekey(key=doc;keep=word,freq)", "doc_totals(word=word;freq=freq)", 6, 5);
    j.annotations.schema =
        schema({"word", "doc"}, {"freq"}, {"doc"}, {"word", "freq"}, {"word", "doc"}, {"freq", "doctotal"});
    b.reads("J2", "D1");
    b.writes("J2", "D2");
  }
  {
    Job& j = b.job("J3", "rekey(key=word;keep=doc,freq,doctotal)",
                   "term_weight(docs=" + std::to_string(docs) + ";doc=doc;freq=freq;total=doctotal)", 5, 4);
    j.annotations.schema = schema({"word", "doc"}, {"freq", "doctotal"}, {"word"}, {"doc", "freq", "doctotal"},
                                  {"word", "doc"}, {"weight"});
    b.reads("J3", "D2");
    b.writes("J3", "D3");
  }

  const std::vector<std::string> pool = {"data", "plan",  "graph", "query", "merge", "scan",  "sort", "key",
                                         "task", "node",  "cost",  "flow",  "batch", "cache", "disk", "wave",
                                         "page", "index", "range", "hash"};
  std::vector<Record> rows;
  for (int i = 0; i < docs; ++i) {
    std::string text;
    int words = 8 + static_cast<int>(rng() % 5);
    for (int k = 0; k < words; ++k) {
      if (k) text += " ";
      text += pool[static_cast<size_t>(zipf_int(rng, static_cast<int64_t>(pool.size()))) - 1];
    }
    Record r;
    r.key = {std::string("doc") + std::to_string(1000 + i)};
    r.value = {text};
    rows.push_back(std::move(r));
  }
  w.inputs["D0"] = place(std::move(rows), d0);
  w.plan = std::move(b.plan);
  finish(w);
  return w;
}

// --- coauthor pair counting with a sort tail ---
GeneratedWorkload make_coauthor(int scale, uint64_t seed) {
  GeneratedWorkload w;
  Builder b;
  std::mt19937_64 rng(seed);

  auto& d0 = b.dataset("D0", record_schema({{"paper", FieldType::Int64}}, {{"author", FieldType::Int64}}),
                       {PartitionKind::Hash, {"paper"}, {"paper"}, false, 4, {}});
  b.dataset("D1", record_schema({}, {}), {});
  b.dataset("D2", record_schema({}, {}), {});
  b.dataset("D3", record_schema({}, {}), {});
  b.dataset("D4", record_schema({}, {}), {});

  {
    Job& j = b.job("J1", "rekey(key=paper;keep=author)", "author_pairs(author=author)", 4, 4);
    j.annotations.schema = schema({"paper"}, {"author"}, {"paper"}, {"author"}, {"a1", "a2"}, {"one"});
    b.reads("J1", "D0");
    b.writes("J1", "D1");
  }
  {
    Job& j = b.job("J2", "rekey(key=a1,a2;keep=one)", "sum(field=one)", 4, 4);
    j.program.combineFn = "csum(field=one)";
    j.config.combinerEnabled = true;
    j.annotations.schema = schema({"a1", "a2"}, {"one"}, {"a1", "a2"}, {"one"}, {"a1", "a2"}, {"cnt"});
    b.reads("J2", "D1");
    b.writes("J2", "D2");
  }
  {
    Job& j = b.job("J3", "rekey(key=cnt;keep=a1,a2)", "identity", 4, 4);
    j.annotations.schema = schema({"a1", "a2"}, {"cnt"}, {"cnt"}, {"a1", "a2"}, {"cnt"}, {"a1", "a2"});
    b.reads("J3", "D2");
    b.writes("J3", "D3");
  }
  {
    // a sort job: range partitioning is an initial condition on the plan
    Job& j = b.job("J4", "identity", "topk(k=20;by=cnt)", 4, 4);
    j.annotations.schema = schema({"cnt"}, {"a1", "a2"}, {"cnt"}, {"a1", "a2"}, {"cnt"}, {"a1", "a2"});
    j.program.partition.kind = PartitionKind::Range;
    j.program.partition.partitionKey = {"cnt"};
    j.program.partition.sortKey = {"cnt"};
    j.program.partition.rangeSplits = {int64_t{2}, int64_t{3}, int64_t{5}};
    j.constraints.push_back(
        {ConfigConstraint::Kind::RangeSplitsFixed, "", {}, j.program.partition.rangeSplits});
    b.reads("J4", "D3");
    b.writes("J4", "D4");
  }

  std::vector<Record> rows;
  int papers = std::max(10, scale / 4);
  for (int i = 0; i < scale; ++i) {
    Record r;
    r.key = {rand_int(rng, 0, papers - 1)};
    r.value = {zipf_int(rng, 40)};
    rows.push_back(std::move(r));
  }
  w.inputs["D0"] = place(std::move(rows), d0);
  w.plan = std::move(b.plan);
  finish(w);
  return w;
}

// --- log analysis: filtered join, aggregate, sorted top entry ---
GeneratedWorkload make_loganalysis(int scale, uint64_t seed) {
  GeneratedWorkload w;
  Builder b;
  std::mt19937_64 rng(seed);

  auto& visits = b.dataset(
      "D0visits",
      record_schema({{"url", FieldType::String}},
                    {{"date", FieldType::Int64}, {"user", FieldType::Int64}, {"revenue", FieldType::Float64}}),
      {PartitionKind::Range, {"date"}, {"date"}, false, 4, {int64_t{25}, int64_t{50}, int64_t{75}}});
  auto& ranks = b.dataset("D0ranks", record_schema({{"url", FieldType::String}}, {{"rank", FieldType::Float64}}),
                          {PartitionKind::Hash, {"url"}, {}, false, 2, {}});
  b.dataset("D1", record_schema({}, {}), {});
  b.dataset("D2", record_schema({}, {}), {});
  b.dataset("D3", record_schema({}, {}), {});
  b.dataset("D4", record_schema({}, {}), {});

  {
    Job& j = b.job("J1", "visit_rank_prep(datelt=50)", "visit_rank_join", 6, 6);
    j.annotations.schema = schema({"url"}, {"date", "user", "revenue", "rank"}, {"url"},
                                  {"side", "payload", "user"}, {"user"}, {"rank", "revenue"});
    j.annotations.filter = FilterAnnotation{{{"date", Cmp::LT, int64_t{50}}}, 0.5};
    b.reads("J1", "D0visits");
    b.reads("J1", "D0ranks");
    b.writes("J1", "D1");
  }
  {
    Job& j = b.job("J2", "identity", "agg(ops=avg:rank,sum:revenue)", 6, 4);
    j.annotations.schema =
        schema({"user"}, {"rank", "revenue"}, {"user"}, {"rank", "revenue"}, {"user"}, {"avgrank", "sumrev"});
    b.reads("J2", "D1");
    b.writes("J2", "D2");
  }
  {
    Job& j = b.job("J3", "rekey(key=sumrev;keep=user,avgrank)", "identity", 4, 4);
    j.annotations.schema =
        schema({"user"}, {"avgrank", "sumrev"}, {"sumrev"}, {"user", "avgrank"}, {"sumrev"}, {"user", "avgrank"});
    b.reads("J3", "D2");
    b.writes("J3", "D3");
  }
  {
    Job& j = b.job("J4", "rekey(key=~all:0;keep=sumrev,user)", "topk(k=1;by=sumrev)", 4, 1);
    j.annotations.schema = schema({"sumrev"}, {"user", "avgrank"}, {"all"}, {"sumrev", "user"}, {"all"},
                                  {"sumrev", "user"});
    b.reads("J4", "D3");
    b.writes("J4", "D4");
  }

  std::vector<Record> visitRows, rankRows;
  int urls = std::max(10, scale / 20);
  for (int i = 0; i < scale; ++i) {
    Record r;
    r.key = {std::string("u") + std::to_string(rand_int(rng, 0, urls - 1))};
    r.value = {rand_int(rng, 0, 99), rand_int(rng, 0, 49), std::floor(unit_rand(rng) * 1000.0) / 100.0};
    visitRows.push_back(std::move(r));
  }
  for (int i = 0; i < urls; ++i) {
    Record r;
    r.key = {std::string("u") + std::to_string(i)};
    r.value = {std::floor(unit_rand(rng) * 1000.0) / 1000.0};
    rankRows.push_back(std::move(r));
  }
  w.inputs["D0visits"] = place(std::move(visitRows), visits);
  w.inputs["D0ranks"] = place(std::move(rankRows), ranks);
  w.plan = std::move(b.plan);
  finish(w);
  return w;
}

// --- one iteration of a page-rank style graph computation ---
GeneratedWorkload make_pagerank(int scale, uint64_t seed) {
  GeneratedWorkload w;
  Builder b;
  std::mt19937_64 rng(seed);
  int pages = std::max(20, scale / 10);

  auto& adj = b.dataset("D0adj", record_schema({{"src", FieldType::Int64}}, {{"page", FieldType::Int64}}),
                        {PartitionKind::Hash, {"src"}, {}, false, 4, {}});
  auto& pr = b.dataset("D0rank", record_schema({{"src", FieldType::Int64}}, {{"rank", FieldType::Float64}}),
                       {PartitionKind::Hash, {"src"}, {}, false, 4, {}});
  b.dataset("D1", record_schema({}, {}), {});
  b.dataset("D2", record_schema({}, {}), {});

  {
    Job& j = b.job("J1", "adj_rank_prep", "rank_contrib", 4, 4);
    j.annotations.schema =
        schema({"src"}, {"page", "rank"}, {"src"}, {"side", "page", "rank"}, {"page"}, {"contrib"});
    b.reads("J1", "D0adj");
    b.reads("J1", "D0rank");
    b.writes("J1", "D1");
  }
  {
    Job& j = b.job("J2", "identity",
                   "rank_update(damping=0.85;pages=" + std::to_string(pages) + ";contrib=contrib)", 4, 4);
    j.annotations.schema = schema({"page"}, {"contrib"}, {"page"}, {"contrib"}, {"page"}, {"rank"});
    b.reads("J2", "D1");
    b.writes("J2", "D2");
  }

  std::vector<Record> adjRows, rankRows;
  for (int i = 0; i < scale; ++i) {
    Record r;
    r.key = {zipf_int(rng, pages) - 1};
    r.value = {rand_int(rng, 0, pages - 1)};
    adjRows.push_back(std::move(r));
  }
  for (int i = 0; i < pages; ++i) {
    Record r;
    r.key = {static_cast<int64_t>(i)};
    r.value = {1.0 / pages};
    rankRows.push_back(std::move(r));
  }
  w.inputs["D0adj"] = place(std::move(adjRows), adj);
  w.inputs["D0rank"] = place(std::move(rankRows), pr);
  w.plan = std::move(b.plan);
  finish(w);
  return w;
}

// --- small-quantity revenue query over lineitem and part ---
GeneratedWorkload make_tpch17(int scale, uint64_t seed) {
  GeneratedWorkload w;
  Builder b;
  std::mt19937_64 rng(seed);
  int parts = std::max(10, scale / 50);

  auto& lineitem = b.dataset(
      "D0lineitem",
      record_schema({{"partid", FieldType::Int64}}, {{"qty", FieldType::Float64}, {"price", FieldType::Float64}}),
      {PartitionKind::Hash, {"partid"}, {}, false, 8, {}});
  auto& part = b.dataset(
      "D0part",
      record_schema({{"partid", FieldType::Int64}}, {{"brand", FieldType::String}, {"container", FieldType::String}}),
      {PartitionKind::Hash, {"partid"}, {}, false, 2, {}});
  b.dataset("D1", record_schema({}, {}), {});
  b.dataset("D2", record_schema({}, {}), {});
  b.dataset("D3", record_schema({}, {}), {});
  b.dataset("D4", record_schema({}, {}), {});

  {
    Job& j = b.job("J1", "rekey(key=partid;keep=qty,price)", "identity", 8, 8);
    j.annotations.schema =
        schema({"partid"}, {"qty", "price"}, {"partid"}, {"qty", "price"}, {"partid"}, {"qty", "price"});
    b.reads("J1", "D0lineitem");
    b.writes("J1", "D1");
  }
  {
    Job& j = b.job("J2", "part_join_prep(brand=B1)", "avg_qty_join", 8, 4);
    j.annotations.schema = schema({"partid"}, {"qty", "price", "brand", "container"}, {"partid"},
                                  {"side", "qty", "price"}, {"partid"}, {"avgqty"});
    b.reads("J2", "D1");
    b.reads("J2", "D0part");
    b.writes("J2", "D2");
  }
  {
    Job& j = b.job("J3", "detail_avg_prep", "small_qty_total", 8, 4);
    j.annotations.schema = schema({"partid"}, {"qty", "price", "avgqty"}, {"partid"}, {"side", "qty", "price"},
                                  {"partid"}, {"subtotal"});
    b.reads("J3", "D1");
    b.reads("J3", "D2");
    b.writes("J3", "D3");
  }
  {
    Job& j = b.job("J4", "rekey(key=~all:0;keep=subtotal)", "agg(ops=sum:subtotal)", 4, 1);
    j.annotations.schema = schema({"partid"}, {"subtotal"}, {"all"}, {"subtotal"}, {"all"}, {"total"});
    b.reads("J4", "D3");
    b.writes("J4", "D4");
  }

  std::vector<Record> liRows, partRows;
  for (int i = 0; i < scale; ++i) {
    Record r;
    r.key = {rand_int(rng, 0, parts - 1)};
    r.value = {1.0 + std::floor(unit_rand(rng) * 490.0) / 10.0, 1.0 + std::floor(unit_rand(rng) * 990.0) / 10.0};
    liRows.push_back(std::move(r));
  }
  const std::vector<std::string> brands = {"B1", "B2", "B3"};
  for (int i = 0; i < parts; ++i) {
    Record r;
    r.key = {static_cast<int64_t>(i)};
    r.value = {brands[static_cast<size_t>(rand_int(rng, 0, 2))], std::string("JUMBO")};
    partRows.push_back(std::move(r));
  }
  w.inputs["D0lineitem"] = place(std::move(liRows), lineitem);
  w.inputs["D0part"] = place(std::move(partRows), part);
  w.plan = std::move(b.plan);
  finish(w);
  return w;
}

// --- small-data post-processing aggregates ---
GeneratedWorkload make_postproc(int scale, uint64_t seed) {
  GeneratedWorkload w;
  Builder b;
  std::mt19937_64 rng(seed);
  int n = std::max(100, scale / 10);

  auto& d0 = b.dataset(
      "D0",
      record_schema({{"grp", FieldType::Int64}}, {{"x", FieldType::Float64}, {"y", FieldType::Float64}}),
      {PartitionKind::Hash, {"grp"}, {}, false, 2, {}});
  b.dataset("D1", record_schema({}, {}), {});
  b.dataset("D2", record_schema({}, {}), {});
  b.dataset("D3", record_schema({}, {}), {});

  {
    Job& j = b.job("J1", "rekey(key=grp;keep=x,y)", "identity", 2, 2);
    j.annotations.schema = schema({"grp"}, {"x", "y"}, {"grp"}, {"x", "y"}, {"grp"}, {"x", "y"});
    b.reads("J1", "D0");
    b.writes("J1", "D1");
  }
  {
    Job& j = b.job("J2", "identity", "covariance(x=x;y=y)", 2, 2);
    j.annotations.schema = schema({"grp"}, {"x", "y"}, {"grp"}, {"x", "y"}, {"grp"}, {"cov"});
    b.reads("J2", "D1");
    b.writes("J2", "D2");
  }
  {
    Job& j = b.job("J3", "identity", "correlation(x=x;y=y)", 2, 2);
    j.annotations.schema = schema({"grp"}, {"x", "y"}, {"grp"}, {"x", "y"}, {"grp"}, {"corr"});
    b.reads("J3", "D1");
    b.writes("J3", "D3");
  }

  std::vector<Record> rows;
  for (int i = 0; i < n; ++i) {
    Record r;
    double x = unit_rand(rng) * 10.0;
    r.key = {rand_int(rng, 0, 7)};
    r.value = {std::floor(x * 100.0) / 100.0, std::floor((x * 0.5 + unit_rand(rng)) * 100.0) / 100.0};
    rows.push_back(std::move(r));
  }
  w.inputs["D0"] = place(std::move(rows), d0);
  w.plan = std::move(b.plan);
  finish(w);
  return w;
}

// --- user-defined logical splits: one producer, two filtered consumers ---
GeneratedWorkload make_logicalsplit(int scale, uint64_t seed) {
  GeneratedWorkload w;
  Builder b;
  std::mt19937_64 rng(seed);

  auto& d0 = b.dataset(
      "D0",
      record_schema({{"orderid", FieldType::Int64}}, {{"v1", FieldType::Float64}, {"v2", FieldType::Int64}}),
      {PartitionKind::Hash, {"orderid"}, {}, false, 4, {}});
  b.dataset("D1", record_schema({}, {}), {});
  b.dataset("D2", record_schema({}, {}), {});
  b.dataset("D3", record_schema({}, {}), {});

  {
    Job& j = b.job("J1", "rekey(key=orderid;keep=v1,v2)", "identity", 4, 10);
    j.annotations.schema =
        schema({"orderid"}, {"v1", "v2"}, {"orderid"}, {"v1", "v2"}, {"orderid"}, {"v1", "v2"});
    b.reads("J1", "D0");
    b.writes("J1", "D1");
  }
  {
    Job& j = b.job("J2", "rekey(key=orderid;keep=v1;where=orderid<100)", "agg(ops=sum:v1)", 4, 4);
    j.annotations.schema = schema({"orderid"}, {"v1", "v2"}, {"orderid"}, {"v1"}, {"orderid"}, {"sumv1"});
    j.annotations.filter = FilterAnnotation{{{"orderid", Cmp::LT, int64_t{100}}}, 0.1};
    b.reads("J2", "D1");
    b.writes("J2", "D2");
  }
  {
    Job& j = b.job("J3", "rekey(key=orderid;keep=v2;where=orderid>=700)", "agg(ops=count)", 4, 4);
    j.annotations.schema = schema({"orderid"}, {"v1", "v2"}, {"orderid"}, {"v2"}, {"orderid"}, {"n"});
    j.annotations.filter = FilterAnnotation{{{"orderid", Cmp::GE, int64_t{700}}}, 0.3};
    b.reads("J3", "D1");
    b.writes("J3", "D3");
  }

  std::vector<Record> rows;
  for (int i = 0; i < scale; ++i) {
    Record r;
    r.key = {static_cast<int64_t>(i % 1000)};  // uniform, covers [0, 1000)
    r.value = {std::floor(unit_rand(rng) * 100.0) / 10.0, rand_int(rng, 0, 9)};
    rows.push_back(std::move(r));
  }
  w.inputs["D0"] = place(std::move(rows), d0);
  w.plan = std::move(b.plan);
  finish(w);
  return w;
}

}  // namespace

std::vector<std::string> workload_names() {
  return {"tfidf", "coauthor", "loganalysis", "pagerank", "tpch17", "reportgen", "postproc", "logicalsplit"};
}

GeneratedWorkload generate_workload(const std::string& name, int scale, uint64_t seed) {
  if (scale <= 0) scale = 10000;
  if (name == "tfidf") return make_tfidf(scale, seed);
  if (name == "coauthor") return make_coauthor(scale, seed);
  if (name == "loganalysis") return make_loganalysis(scale, seed);
  if (name == "pagerank") return make_pagerank(scale, seed);
  if (name == "tpch17") return make_tpch17(scale, seed);
  if (name == "reportgen") return make_reportgen(scale, seed);
  if (name == "postproc") return make_postproc(scale, seed);
  if (name == "logicalsplit") return make_logicalsplit(scale, seed);
  throw ValidationError("unknown workload '" + name + "'");
}

std::string write_workload(const GeneratedWorkload& w, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::string planPath = (fs::path(dir) / "plan.json").string();
  write_plan(w.plan, planPath);
  std::string dataDir = (fs::path(dir) / "data").string();
  for (const auto& [id, ds] : w.inputs) save_dataset(ds, *w.plan.datasets.at(id).recordSchema, dataDir, id);
  return planPath;
}

// ---------------------------------------------------------------------------
// randomized corpus generator
// ---------------------------------------------------------------------------

GeneratedWorkload generate_random_workflow(uint64_t seed) {
  std::mt19937_64 rng(seed);
  GeneratedWorkload w;
  Builder b;

  struct Shape {
    std::vector<std::string> key, value;  // field names; all int64
  };
  std::map<DatasetId, Shape> shapes;
  std::vector<DatasetId> available;

  // base datasets
  int bases = 1 + static_cast<int>(rng() % 2);
  for (int i = 0; i < bases; ++i) {
    DatasetId id = "B" + std::to_string(i);
    Shape sh;
    int nk = 1 + static_cast<int>(rng() % 2);
    int nv = 1 + static_cast<int>(rng() % 2);
    for (int k = 0; k < nk; ++k) sh.key.push_back("k" + std::to_string(i) + std::to_string(k));
    for (int v = 0; v < nv; ++v) sh.value.push_back("w" + std::to_string(i) + std::to_string(v));
    std::vector<FieldDecl> kd, vd;
    for (const auto& f : sh.key) kd.push_back({f, FieldType::Int64});
    for (const auto& f : sh.value) vd.push_back({f, FieldType::Int64});
    DatasetLayout layout;
    layout.partitionCount = 2 + static_cast<int>(rng() % 3);
    if (rng() % 2 == 0) {
      // pre-partitioned and sorted base: enables packing without a producer
      layout.kind = PartitionKind::Hash;
      layout.partitionFields = {sh.key.front()};
      layout.orderingFields = sh.key;
    }
    b.dataset(id, record_schema(kd, vd), layout);
    int n = 120 + static_cast<int>(rng() % 260);
    std::vector<Record> rows;
    bool degenerate = rng() % 12 == 0;  // single-value key domain now and then
    for (int r = 0; r < n; ++r) {
      Record rec;
      for (size_t k = 0; k < sh.key.size(); ++k)
        rec.key.push_back(degenerate ? int64_t{7} : rand_int(rng, 0, 24));
      for (size_t v = 0; v < sh.value.size(); ++v) rec.value.push_back(rand_int(rng, 0, 30));
      rows.push_back(std::move(rec));
    }
    w.inputs[id] = place(std::move(rows), b.plan.datasets.at(id));
    shapes[id] = sh;
    available.push_back(id);
  }

  int jobs = 2 + static_cast<int>(rng() % 5);
  for (int i = 0; i < jobs; ++i) {
    JobId id = "J" + std::to_string(i + 1);
    DatasetId outId = "D" + std::to_string(i + 1);

    // inputs: one dataset, or two identically shaped ones
    std::vector<DatasetId> ins;
    DatasetId first = available[rng() % available.size()];
    ins.push_back(first);
    if (rng() % 4 == 0) {
      std::vector<DatasetId> sameShape;
      for (const auto& d : available)
        if (d != first && shapes.at(d).key == shapes.at(first).key && shapes.at(d).value == shapes.at(first).value)
          sameShape.push_back(d);
      if (!sameShape.empty()) ins.push_back(sameShape[rng() % sameShape.size()]);
    }
    const Shape& in = shapes.at(first);

    // map op
    std::string mapFn = "identity";
    Shape mid = in;
    int mapKind = static_cast<int>(rng() % 4);
    if (mapKind == 1 && !in.value.empty()) {
      // филter on a value field
      const std::string& f = in.value[rng() % in.value.size()];
      int64_t lit = rand_int(rng, 5, 25);
      mapFn = "filter(where=" + f + "<" + std::to_string(lit) + ")";
    } else if (mapKind == 2) {
      // re-key: mostly a subset of the current key (keeps packing provable)
      std::vector<std::string> newKey;
      if (rng() % 3 != 0 || in.value.empty()) {
        newKey.push_back(in.key[rng() % in.key.size()]);
      } else {
        newKey.push_back(in.value[rng() % in.value.size()]);
      }
      std::vector<std::string> keep;
      for (const auto& f : in.key)
        if (!std::count(newKey.begin(), newKey.end(), f)) keep.push_back(f);
      for (const auto& f : in.value)
        if (!std::count(newKey.begin(), newKey.end(), f)) keep.push_back(f);
      if (keep.empty()) keep.push_back(in.key.front());
      std::string keyCsv, keepCsv;
      for (size_t k = 0; k < newKey.size(); ++k) keyCsv += (k ? "," : "") + newKey[k];
      for (size_t k = 0; k < keep.size(); ++k) keepCsv += (k ? "," : "") + keep[k];
      mapFn = "rekey(key=" + keyCsv + ";keep=" + keepCsv + ")";
      mid.key = newKey;
      mid.value = keep;
    } else if (mapKind == 3) {
      mapFn = "explode(copies=2)";
      mid.value.push_back("copy" + std::to_string(i));
    }

    // reduce op (or Map-only)
    std::optional<std::string> reduceFn;
    std::optional<std::string> combineFn;
    Shape out = mid;
    int reduceKind = static_cast<int>(rng() % 5);
    if (reduceKind == 0) {
      reduceFn.reset();  // Map-only
    } else if (reduceKind == 1) {
      reduceFn = "identity";
    } else if (reduceKind == 2) {
      reduceFn = "count";
      out.value = {"cnt" + std::to_string(i)};
    } else if (!mid.value.empty()) {
      const std::string& f = mid.value[rng() % mid.value.size()];
      reduceFn = "sum(field=" + f + ")";
      out.value = {"s" + std::to_string(i)};
      if (rng() % 2 == 0) combineFn = "csum(field=" + f + ")";
    } else {
      reduceFn = "identity";
    }

    int numMap = 2 + static_cast<int>(rng() % 3);
    int numReduce = reduceFn ? 2 + static_cast<int>(rng() % 3) : 0;
    Job& j = b.job(id, mapFn, reduceFn, numMap, numReduce);
    if (combineFn) {
      j.program.combineFn = combineFn;
      j.config.combinerEnabled = rng() % 2 == 0;
    }
    SchemaAnnotation sch;
    sch.k1 = in.key;
    sch.v1 = in.value;
    sch.k2 = mid.key;
    sch.v2 = mid.value;
    sch.k3 = out.key;
    sch.v3 = out.value;
    j.annotations.schema = std::move(sch);
    if (mapFn.rfind("filter(", 0) == 0) {
      FilterPredicate p = parse_predicate(mapFn.substr(13, mapFn.size() - 14));
      j.annotations.filter = FilterAnnotation{{p}, std::nullopt};
    }
    for (const auto& d : ins) b.reads(id, d);
    b.writes(id, outId);
    b.dataset(outId, record_schema({}, {}), {});
    shapes[outId] = out;
    available.push_back(outId);
  }

  w.plan = std::move(b.plan);
  w.plan.cluster = ClusterSpec{};
  w.plan.validate();
  try {
    install_profiles(w.plan, UdfRegistry::builtin(), w.inputs);
  } catch (const ProfileError&) {
    // heavily filtered plans may starve a job; leave those unprofiled
  }
  w.plan.validate();
  return w;
}

}  // namespace mrpack
