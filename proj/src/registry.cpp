#include "mrpack/registry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mrpack {

std::optional<std::pair<bool, int>> StageSchema::find(const std::string& field) const {
  for (size_t i = 0; i < keyNames.size(); ++i)
    if (keyNames[i] == field) return {{true, static_cast<int>(i)}};
  for (size_t i = 0; i < valueNames.size(); ++i)
    if (valueNames[i] == field) return {{false, static_cast<int>(i)}};
  return std::nullopt;
}

UdfSpec UdfSpec::parse(const std::string& ref) {
  UdfSpec spec;
  auto open = ref.find('(');
  if (open == std::string::npos) {
    spec.name = ref;
    return spec;
  }
  if (ref.back() != ')') throw UnresolvedUdf("malformed function reference '" + ref + "'");
  spec.name = ref.substr(0, open);
  std::string body = ref.substr(open + 1, ref.size() - open - 2);
  std::stringstream ss(body);
  std::string part;
  while (std::getline(ss, part, ';')) {
    if (part.empty()) continue;
    auto eq = part.find('=');
    if (eq == std::string::npos)
      spec.args[part] = "";
    else
      spec.args[part.substr(0, eq)] = part.substr(eq + 1);
  }
  return spec;
}

std::string UdfSpec::arg(const std::string& key, const std::string& dflt) const {
  auto it = args.find(key);
  return it == args.end() ? dflt : it->second;
}

std::vector<std::string> UdfSpec::list_arg(const std::string& key) const {
  std::vector<std::string> out;
  auto it = args.find(key);
  if (it == args.end()) return out;
  std::stringstream ss(it->second);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

Scalar parse_literal(const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  if (!text.empty() && (std::isdigit(static_cast<unsigned char>(text[0])) || text[0] == '-')) {
    bool isFloat = text.find('.') != std::string::npos || text.find('e') != std::string::npos;
    try {
      if (isFloat) return scalar_from_text(FieldType::Float64, text);
      return scalar_from_text(FieldType::Int64, text);
    } catch (const std::invalid_argument&) {
      // fall through to string
    }
  }
  return text;
}

FilterPredicate parse_predicate(const std::string& text) {
  static const std::vector<std::pair<std::string, Cmp>> ops = {
      {"<=", Cmp::LE}, {">=", Cmp::GE}, {"==", Cmp::EQ}, {"<", Cmp::LT}, {">", Cmp::GT}, {"=", Cmp::EQ}};
  for (const auto& [tok, cmp] : ops) {
    auto pos = text.find(tok);
    if (pos != std::string::npos) {
      FilterPredicate p;
      p.field = text.substr(0, pos);
      p.cmp = cmp;
      p.literal = parse_literal(text.substr(pos + tok.size()));
      if (p.field.empty()) throw UnresolvedUdf("malformed predicate '" + text + "'");
      return p;
    }
  }
  throw UnresolvedUdf("malformed predicate '" + text + "'");
}

bool filter_eval(Cmp cmp, const Scalar& fieldValue, const Scalar& literal) {
  int r = compare_ordered(fieldValue, literal);
  switch (cmp) {
    case Cmp::LT: return r < 0;
    case Cmp::LE: return r <= 0;
    case Cmp::EQ: return r == 0;
    case Cmp::GE: return r >= 0;
    case Cmp::GT: return r > 0;
  }
  return false;
}

namespace {

struct FieldRef {
  bool inKey = false;
  int index = 0;

  const Scalar& get(const Record& r) const { return inKey ? r.key[index] : r.value[index]; }
};

FieldRef resolve(const StageSchema& in, const std::string& field, const std::string& fn) {
  if (!in.known) throw UnresolvedUdf("function '" + fn + "' needs field '" + field + "' but the stage schema is unknown");
  auto hit = in.find(field);
  if (!hit) throw UnresolvedUdf("function '" + fn + "' references unknown field '" + field + "'");
  return {hit->first, hit->second};
}

double num(const Scalar& s) { return scalar_as_double(s); }

// Aggregation op parsed from specs like `sum:price` or `max:price`.
struct AggOp {
  enum class Kind { Sum, Max, Min, Avg, Count } kind;
  FieldRef field;  // unused for Count
};

AggOp::Kind agg_kind(const std::string& name) {
  if (name == "sum") return AggOp::Kind::Sum;
  if (name == "max") return AggOp::Kind::Max;
  if (name == "min") return AggOp::Kind::Min;
  if (name == "avg") return AggOp::Kind::Avg;
  if (name == "count") return AggOp::Kind::Count;
  throw UnresolvedUdf("unknown aggregation op '" + name + "'");
}

void register_generic(UdfRegistry& reg) {
  reg.register_map("identity", [](const UdfSpec&, const StageSchema&) -> MapUdf {
    return [](const Record& r, std::vector<Record>& out) { out.push_back(r); };
  });

  // rekey(key=f1,f2;keep=g1,g2;where=f<lit): re-keys the record; `~name:lit`
  // inside key= adds a constant key field.
  reg.register_map("rekey", [](const UdfSpec& spec, const StageSchema& in) -> MapUdf {
    struct KeyPart {
      bool constant = false;
      Scalar lit;
      FieldRef ref;
    };
    std::vector<KeyPart> keyParts;
    for (const auto& k : spec.list_arg("key")) {
      KeyPart p;
      if (!k.empty() && k[0] == '~') {
        p.constant = true;
        auto colon = k.find(':');
        p.lit = colon == std::string::npos ? Scalar(int64_t{0}) : parse_literal(k.substr(colon + 1));
      } else {
        p.ref = resolve(in, k, "rekey");
      }
      keyParts.push_back(p);
    }
    std::vector<FieldRef> keep;
    for (const auto& g : spec.list_arg("keep")) keep.push_back(resolve(in, g, "rekey"));
    std::optional<FilterPredicate> where;
    std::optional<FieldRef> whereRef;
    if (!spec.arg("where").empty()) {
      where = parse_predicate(spec.arg("where"));
      whereRef = resolve(in, where->field, "rekey");
    }
    if (keyParts.empty()) throw UnresolvedUdf("rekey requires at least one key field");
    return [keyParts, keep, where, whereRef](const Record& r, std::vector<Record>& out) {
      if (where && !filter_eval(where->cmp, whereRef->get(r), where->literal)) return;
      Record o;
      for (const auto& p : keyParts) o.key.push_back(p.constant ? p.lit : p.ref.get(r));
      for (const auto& g : keep) o.value.push_back(g.get(r));
      out.push_back(std::move(o));
    };
  });

  reg.register_map("filter", [](const UdfSpec& spec, const StageSchema& in) -> MapUdf {
    auto pred = parse_predicate(spec.arg("where", spec.args.empty() ? "" : spec.args.begin()->first));
    FieldRef ref = resolve(in, pred.field, "filter");
    return [pred, ref](const Record& r, std::vector<Record>& out) {
      if (filter_eval(pred.cmp, ref.get(r), pred.literal)) out.push_back(r);
    };
  });

  // explode(copies=k): emits k copies with a sequence value appended; gives the
  // random corpus a record-multiplying map.
  reg.register_map("explode", [](const UdfSpec& spec, const StageSchema&) -> MapUdf {
    int copies = std::max(1, std::stoi(spec.arg("copies", "2")));
    return [copies](const Record& r, std::vector<Record>& out) {
      for (int i = 0; i < copies; ++i) {
        Record o = r;
        o.value.push_back(int64_t{i});
        out.push_back(std::move(o));
      }
    };
  });

  // agg(ops=sum:price,max:price): grouped aggregation; output value fields in
  // op order, key = grouping key.
  auto aggFactory = [](const UdfSpec& spec, const StageSchema& in) -> ReduceUdf {
    std::vector<AggOp> ops;
    for (const auto& o : spec.list_arg("ops")) {
      auto colon = o.find(':');
      AggOp op;
      op.kind = agg_kind(o.substr(0, colon == std::string::npos ? o.size() : colon));
      if (op.kind != AggOp::Kind::Count) {
        if (colon == std::string::npos) throw UnresolvedUdf("agg op '" + o + "' needs a field");
        op.field = resolve(in, o.substr(colon + 1), "agg");
      }
      ops.push_back(op);
    }
    if (ops.empty()) throw UnresolvedUdf("agg requires ops=");
    return [ops](const std::vector<Scalar>& key, const std::vector<Record>& group, std::vector<Record>& out) {
      Record o;
      o.key = key;
      for (const auto& op : ops) {
        switch (op.kind) {
          case AggOp::Kind::Count: o.value.push_back(static_cast<int64_t>(group.size())); break;
          case AggOp::Kind::Sum: {
            double s = 0;
            for (const auto& r : group) s += num(op.field.get(r));
            o.value.push_back(s);
            break;
          }
          case AggOp::Kind::Avg: {
            double s = 0;
            for (const auto& r : group) s += num(op.field.get(r));
            o.value.push_back(group.empty() ? 0.0 : s / static_cast<double>(group.size()));
            break;
          }
          case AggOp::Kind::Max:
          case AggOp::Kind::Min: {
            const Scalar* best = nullptr;
            for (const auto& r : group) {
              const Scalar& v = op.field.get(r);
              if (!best || (op.kind == AggOp::Kind::Max ? compare_scalar(v, *best) > 0 : compare_scalar(v, *best) < 0))
                best = &v;
            }
            o.value.push_back(best ? *best : Scalar(int64_t{0}));
            break;
          }
        }
      }
      out.push_back(std::move(o));
    };
  };
  reg.register_reduce("agg", aggFactory);

  reg.register_reduce("identity", [](const UdfSpec&, const StageSchema&) -> ReduceUdf {
    return [](const std::vector<Scalar>&, const std::vector<Record>& group, std::vector<Record>& out) {
      out.insert(out.end(), group.begin(), group.end());
    };
  });

  reg.register_reduce("count", [](const UdfSpec&, const StageSchema&) -> ReduceUdf {
    return [](const std::vector<Scalar>& key, const std::vector<Record>& group, std::vector<Record>& out) {
      Record o;
      o.key = key;
      o.value.push_back(static_cast<int64_t>(group.size()));
      out.push_back(std::move(o));
    };
  });

  reg.register_reduce("sum", [](const UdfSpec& spec, const StageSchema& in) -> ReduceUdf {
    FieldRef f = resolve(in, spec.arg("field"), "sum");
    return [f](const std::vector<Scalar>& key, const std::vector<Record>& group, std::vector<Record>& out) {
      double s = 0;
      for (const auto& r : group) s += num(f.get(r));
      Record o;
      o.key = key;
      o.value.push_back(s);
      out.push_back(std::move(o));
    };
  });

  reg.register_reduce("distinct_count", [](const UdfSpec& spec, const StageSchema& in) -> ReduceUdf {
    FieldRef f = resolve(in, spec.arg("field"), "distinct_count");
    return [f](const std::vector<Scalar>& key, const std::vector<Record>& group, std::vector<Record>& out) {
      std::vector<Scalar> vals;
      for (const auto& r : group) vals.push_back(f.get(r));
      std::sort(vals.begin(), vals.end(), [](const Scalar& a, const Scalar& b) { return compare_scalar(a, b) < 0; });
      vals.erase(std::unique(vals.begin(), vals.end(),
                             [](const Scalar& a, const Scalar& b) { return compare_scalar(a, b) == 0; }),
                 vals.end());
      Record o;
      o.key = key;
      o.value.push_back(static_cast<int64_t>(vals.size()));
      out.push_back(std::move(o));
    };
  });

  // topk(k=20;by=f;desc=1): emits the top-k records of the group.
  reg.register_reduce("topk", [](const UdfSpec& spec, const StageSchema& in) -> ReduceUdf {
    int k = std::max(1, std::stoi(spec.arg("k", "20")));
    bool desc = spec.arg("desc", "1") != "0";
    FieldRef f = resolve(in, spec.arg("by"), "topk");
    return [k, desc, f](const std::vector<Scalar>&, const std::vector<Record>& group, std::vector<Record>& out) {
      std::vector<Record> sorted = group;
      std::stable_sort(sorted.begin(), sorted.end(), [&](const Record& a, const Record& b) {
        int c = compare_scalar(f.get(a), f.get(b));
        if (c != 0) return desc ? c > 0 : c < 0;
        return compare_record(a, b) < 0;
      });
      if (static_cast<int>(sorted.size()) > k) sorted.resize(k);
      out.insert(out.end(), sorted.begin(), sorted.end());
    };
  });

  // Combiners emit records in the same key/value shape they consume.
  reg.register_combine("csum", [](const UdfSpec& spec, const StageSchema& in) -> ReduceUdf {
    FieldRef f = resolve(in, spec.arg("field"), "csum");
    if (f.inKey) throw UnresolvedUdf("csum field must be a value field");
    return [f](const std::vector<Scalar>& key, const std::vector<Record>& group, std::vector<Record>& out) {
      Record o = group.front();
      o.key = key;
      double s = 0;
      bool allInt = true;
      for (const auto& r : group) {
        const Scalar& v = f.get(r);
        if (v.index() != 0) allInt = false;
        s += num(v);
      }
      o.value[f.index] = allInt ? Scalar(static_cast<int64_t>(s)) : Scalar(s);
      out.push_back(std::move(o));
    };
  });

  reg.register_combine("cmax", [](const UdfSpec& spec, const StageSchema& in) -> ReduceUdf {
    FieldRef f = resolve(in, spec.arg("field"), "cmax");
    if (f.inKey) throw UnresolvedUdf("cmax field must be a value field");
    return [f](const std::vector<Scalar>& key, const std::vector<Record>& group, std::vector<Record>& out) {
      Record o = group.front();
      o.key = key;
      const Scalar* best = nullptr;
      for (const auto& r : group) {
        const Scalar& v = f.get(r);
        if (!best || compare_scalar(v, *best) > 0) best = &v;
      }
      o.value[f.index] = *best;
      out.push_back(std::move(o));
    };
  });
}

void register_workload_udfs(UdfRegistry& reg) {
  // --- information retrieval (term weighting over a document corpus) ---
  reg.register_map("tokenize", [](const UdfSpec& spec, const StageSchema& in) -> MapUdf {
    FieldRef doc = resolve(in, spec.arg("doc", "doc"), "tokenize");
    FieldRef text = resolve(in, spec.arg("text", "text"), "tokenize");
    return [doc, text](const Record& r, std::vector<Record>& out) {
      std::stringstream ss(std::get<std::string>(text.get(r)));
      std::string word;
      while (ss >> word) {
        Record o;
        o.key = {word, doc.get(r)};
        o.value = {int64_t{1}};
        out.push_back(std::move(o));
      }
    };
  });

  // Group by doc; re-emit each (word, doc, freq) with the document total.
  reg.register_reduce("doc_totals", [](const UdfSpec& spec, const StageSchema& in) -> ReduceUdf {
    FieldRef word = resolve(in, spec.arg("word", "word"), "doc_totals");
    FieldRef freq = resolve(in, spec.arg("freq", "freq"), "doc_totals");
    return [word, freq](const std::vector<Scalar>& key, const std::vector<Record>& group, std::vector<Record>& out) {
      double total = 0;
      for (const auto& r : group) total += num(freq.get(r));
      for (const auto& r : group) {
        Record o;
        o.key = {word.get(r), key[0]};
        o.value = {freq.get(r), total};
        out.push_back(std::move(o));
      }
    };
  });

  // Group by word; weight = (freq / docTotal) * log(docs / docFreq).
  reg.register_reduce("term_weight", [](const UdfSpec& spec, const StageSchema& in) -> ReduceUdf {
    double docs = std::stod(spec.arg("docs", "100"));
    FieldRef docField = resolve(in, spec.arg("doc", "doc"), "term_weight");
    FieldRef freq = resolve(in, spec.arg("freq", "freq"), "term_weight");
    FieldRef total = resolve(in, spec.arg("total", "doctotal"), "term_weight");
    return [docs, docField, freq, total](const std::vector<Scalar>& key, const std::vector<Record>& group,
                                         std::vector<Record>& out) {
      double docFreq = static_cast<double>(group.size());
      for (const auto& r : group) {
        Record o;
        o.key = {key[0], docField.get(r)};
        o.value = {num(freq.get(r)) / std::max(1.0, num(total.get(r))) * std::log(docs / docFreq)};
        out.push_back(std::move(o));
      }
    };
  });

  // --- coauthor analysis ---
  reg.register_reduce("author_pairs", [](const UdfSpec& spec, const StageSchema& in) -> ReduceUdf {
    FieldRef author = resolve(in, spec.arg("author", "author"), "author_pairs");
    return [author](const std::vector<Scalar>&, const std::vector<Record>& group, std::vector<Record>& out) {
      std::vector<Scalar> authors;
      for (const auto& r : group) authors.push_back(author.get(r));
      std::sort(authors.begin(), authors.end(),
                [](const Scalar& a, const Scalar& b) { return compare_scalar(a, b) < 0; });
      authors.erase(std::unique(authors.begin(), authors.end(),
                                [](const Scalar& a, const Scalar& b) { return compare_scalar(a, b) == 0; }),
                    authors.end());
      for (size_t i = 0; i < authors.size(); ++i)
        for (size_t j = i + 1; j < authors.size(); ++j) {
          Record o;
          o.key = {authors[i], authors[j]};
          o.value = {int64_t{1}};
          out.push_back(std::move(o));
        }
    };
  });

  // --- page graph rank iteration ---
  // Normalizes adjacency and rank records into one value shape so a single
  // map function can feed the join: value = (kind, dst, rank).
  reg.register_map("graph_join_prep", [](const UdfSpec& spec, const StageSchema& in) -> MapUdf {
    FieldRef src = resolve(in, spec.arg("src", "src"), "graph_join_prep");
    std::string kindArg = spec.arg("side");  // "adj" or "rank"
    if (kindArg == "adj") {
      FieldRef dst = resolve(in, spec.arg("dst", "dst"), "graph_join_prep");
      return [src, dst](const Record& r, std::vector<Record>& out) {
        Record o;
        o.key = {src.get(r)};
        o.value = {std::string("A"), dst.get(r), 0.0};
        out.push_back(std::move(o));
      };
    }
    FieldRef rank = resolve(in, spec.arg("rank", "rank"), "graph_join_prep");
    return [src, rank](const Record& r, std::vector<Record>& out) {
      Record o;
      o.key = {src.get(r)};
      o.value = {std::string("R"), std::string(), num(rank.get(r))};
      out.push_back(std::move(o));
    };
  });

  // Records from both sides of the join arrive in one value shape; `kind`
  // separates them.
  reg.register_map("join_prep", [](const UdfSpec& spec, const StageSchema& in) -> MapUdf {
    FieldRef key = resolve(in, spec.arg("key"), "join_prep");
    std::string side = spec.arg("side");
    std::vector<FieldRef> carry;
    for (const auto& f : spec.list_arg("carry")) carry.push_back(resolve(in, f, "join_prep"));
    std::optional<FilterPredicate> where;
    std::optional<FieldRef> whereRef;
    if (!spec.arg("where").empty()) {
      where = parse_predicate(spec.arg("where"));
      whereRef = resolve(in, where->field, "join_prep");
    }
    int width = std::stoi(spec.arg("width", "2"));
    int offset = std::stoi(spec.arg("offset", "0"));
    return [key, side, carry, where, whereRef, width, offset](const Record& r, std::vector<Record>& out) {
      if (where && !filter_eval(where->cmp, whereRef->get(r), where->literal)) return;
      Record o;
      o.key = {key.get(r)};
      o.value.push_back(side);
      for (int i = 0; i < width; ++i) o.value.push_back(0.0);
      for (size_t i = 0; i < carry.size(); ++i) o.value[1 + offset + i] = Scalar(num(carry[i].get(r)));
      out.push_back(std::move(o));
    };
  });

  reg.register_reduce("rank_contrib", [](const UdfSpec&, const StageSchema&) -> ReduceUdf {
    return [](const std::vector<Scalar>&, const std::vector<Record>& group, std::vector<Record>& out) {
      double rank = 0;
      std::vector<Scalar> dsts;
      for (const auto& r : group) {
        if (std::get<std::string>(r.value[0]) == "R")
          rank = num(r.value[2]);
        else
          dsts.push_back(r.value[1]);
      }
      if (dsts.empty()) return;
      double share = rank / static_cast<double>(dsts.size());
      for (const auto& d : dsts) {
        Record o;
        o.key = {d};
        o.value = {share};
        out.push_back(std::move(o));
      }
    };
  });

  reg.register_reduce("rank_update", [](const UdfSpec& spec, const StageSchema& in) -> ReduceUdf {
    double damping = std::stod(spec.arg("damping", "0.85"));
    double pages = std::stod(spec.arg("pages", "100"));
    FieldRef contrib = resolve(in, spec.arg("contrib", "contrib"), "rank_update");
    return [damping, pages, contrib](const std::vector<Scalar>& key, const std::vector<Record>& group,
                                     std::vector<Record>& out) {
      double s = 0;
      for (const auto& r : group) s += num(contrib.get(r));
      Record o;
      o.key = key;
      o.value = {(1.0 - damping) / pages + damping * s};
      out.push_back(std::move(o));
    };
  });

  // Generic side-tagged equi-join: rank-style records on side "L" carry one
  // numeric payload; "R" records are re-emitted joined with it.
  reg.register_reduce("hash_join", [](const UdfSpec& spec, const StageSchema&) -> ReduceUdf {
    // Group value layout from join_prep: (side, p0, p1, ...).
    bool emitBoth = spec.arg("emit", "right") == "both";
    return [emitBoth](const std::vector<Scalar>& key, const std::vector<Record>& group, std::vector<Record>& out) {
      std::vector<const Record*> left, right;
      for (const auto& r : group)
        (std::get<std::string>(r.value[0]) == "L" ? left : right).push_back(&r);
      for (const Record* l : left)
        for (const Record* r : right) {
          Record o;
          o.key = key;
          for (size_t i = 1; i < l->value.size(); ++i) o.value.push_back(l->value[i]);
          for (size_t i = 1; i < r->value.size(); ++i) o.value.push_back(r->value[i]);
          if (!emitBoth) o.value.resize(r->value.size() - 1 + (l->value.size() - 1));
          out.push_back(std::move(o));
        }
    };
  });

  // --- log analysis join ---
  // One map function sees both inputs; visit records carry three value fields
  // (date, user, revenue), rank records one (rank).
  reg.register_map("visit_rank_prep", [](const UdfSpec& spec, const StageSchema&) -> MapUdf {
    std::optional<FilterPredicate> where;
    if (!spec.arg("datelt").empty()) {
      where = FilterPredicate{"date", Cmp::LT, parse_literal(spec.arg("datelt"))};
    }
    return [where](const Record& r, std::vector<Record>& out) {
      Record o;
      o.key = r.key;
      if (r.value.size() >= 3) {
        if (where && !filter_eval(where->cmp, r.value[0], where->literal)) return;
        o.value = {std::string("V"), Scalar(scalar_as_double(r.value[2])), r.value[1]};
      } else {
        o.value = {std::string("R"), Scalar(scalar_as_double(r.value[0])), Scalar(int64_t{0})};
      }
      out.push_back(std::move(o));
    };
  });

  // Group by url: emit (user, rank, revenue) for every visit joined with the
  // url's rank record.
  reg.register_reduce("visit_rank_join", [](const UdfSpec&, const StageSchema&) -> ReduceUdf {
    return [](const std::vector<Scalar>&, const std::vector<Record>& group, std::vector<Record>& out) {
      double rank = 0;
      for (const auto& r : group)
        if (std::get<std::string>(r.value[0]) == "R") rank = scalar_as_double(r.value[1]);
      for (const auto& r : group) {
        if (std::get<std::string>(r.value[0]) != "V") continue;
        Record o;
        o.key = {r.value[2]};
        o.value = {rank, scalar_as_double(r.value[1])};
        out.push_back(std::move(o));
      }
    };
  });

  // --- page graph rank iteration: single prep for both input shapes ---
  reg.register_map("adj_rank_prep", [](const UdfSpec&, const StageSchema&) -> MapUdf {
    return [](const Record& r, std::vector<Record>& out) {
      Record o;
      o.key = r.key;
      if (r.value[0].index() == 0)  // int64 payload: adjacency edge
        o.value = {std::string("A"), r.value[0], 0.0};
      else
        o.value = {std::string("R"), std::string(), scalar_as_double(r.value[0])};
      out.push_back(std::move(o));
    };
  });

  // --- business analytics query (small-quantity revenue) ---
  // Lineitem rows carry (qty, price); part rows carry (brand, container).
  reg.register_map("part_join_prep", [](const UdfSpec& spec, const StageSchema&) -> MapUdf {
    std::string brand = spec.arg("brand", "B1");
    return [brand](const Record& r, std::vector<Record>& out) {
      Record o;
      o.key = r.key;
      if (!r.value.empty() && r.value[0].index() == 2) {  // string: part side
        if (std::get<std::string>(r.value[0]) != brand) return;
        o.value = {std::string("P"), 0.0, 0.0};
      } else {
        o.value = {std::string("L"), Scalar(scalar_as_double(r.value[0])), Scalar(scalar_as_double(r.value[1]))};
      }
      out.push_back(std::move(o));
    };
  });

  // Group by partid: average lineitem quantity for parts that passed the
  // brand filter.
  reg.register_reduce("avg_qty_join", [](const UdfSpec&, const StageSchema&) -> ReduceUdf {
    return [](const std::vector<Scalar>& key, const std::vector<Record>& group, std::vector<Record>& out) {
      bool part = false;
      double sum = 0, n = 0;
      for (const auto& r : group) {
        const std::string& side = std::get<std::string>(r.value[0]);
        if (side == "P") part = true;
        if (side == "L") {
          sum += scalar_as_double(r.value[1]);
          n += 1;
        }
      }
      if (!part || n == 0) return;
      Record o;
      o.key = key;
      o.value = {sum / n};
      out.push_back(std::move(o));
    };
  });

  // Joins lineitem detail with the per-part average quantity.
  reg.register_map("detail_avg_prep", [](const UdfSpec&, const StageSchema&) -> MapUdf {
    return [](const Record& r, std::vector<Record>& out) {
      Record o;
      o.key = r.key;
      if (r.value.size() >= 2)
        o.value = {std::string("L"), Scalar(scalar_as_double(r.value[0])), Scalar(scalar_as_double(r.value[1]))};
      else
        o.value = {std::string("A"), Scalar(scalar_as_double(r.value[0])), 0.0};
      out.push_back(std::move(o));
    };
  });

  // Group by partid: total price of rows whose quantity is below one fifth of
  // the part's average quantity.
  reg.register_reduce("small_qty_total", [](const UdfSpec&, const StageSchema&) -> ReduceUdf {
    return [](const std::vector<Scalar>& key, const std::vector<Record>& group, std::vector<Record>& out) {
      double avg = -1;
      for (const auto& r : group)
        if (std::get<std::string>(r.value[0]) == "A") avg = scalar_as_double(r.value[1]);
      if (avg < 0) return;
      double total = 0;
      bool any = false;
      for (const auto& r : group) {
        if (std::get<std::string>(r.value[0]) != "L") continue;
        if (scalar_as_double(r.value[1]) < 0.2 * avg) {
          total += scalar_as_double(r.value[2]);
          any = true;
        }
      }
      if (!any) return;
      Record o;
      o.key = key;
      o.value = {total};
      out.push_back(std::move(o));
    };
  });

  // --- statistics post-processing ---
  reg.register_reduce("covariance", [](const UdfSpec& spec, const StageSchema& in) -> ReduceUdf {
    FieldRef x = resolve(in, spec.arg("x", "x"), "covariance");
    FieldRef y = resolve(in, spec.arg("y", "y"), "covariance");
    return [x, y](const std::vector<Scalar>& key, const std::vector<Record>& group, std::vector<Record>& out) {
      double mx = 0, my = 0;
      for (const auto& r : group) {
        mx += num(x.get(r));
        my += num(y.get(r));
      }
      double n = static_cast<double>(group.size());
      mx /= n;
      my /= n;
      double cov = 0;
      for (const auto& r : group) cov += (num(x.get(r)) - mx) * (num(y.get(r)) - my);
      Record o;
      o.key = key;
      o.value = {cov / n};
      out.push_back(std::move(o));
    };
  });

  reg.register_reduce("correlation", [](const UdfSpec& spec, const StageSchema& in) -> ReduceUdf {
    FieldRef x = resolve(in, spec.arg("x", "x"), "correlation");
    FieldRef y = resolve(in, spec.arg("y", "y"), "correlation");
    return [x, y](const std::vector<Scalar>& key, const std::vector<Record>& group, std::vector<Record>& out) {
      double mx = 0, my = 0;
      for (const auto& r : group) {
        mx += num(x.get(r));
        my += num(y.get(r));
      }
      double n = static_cast<double>(group.size());
      mx /= n;
      my /= n;
      double cov = 0, vx = 0, vy = 0;
      for (const auto& r : group) {
        double dx = num(x.get(r)) - mx, dy = num(y.get(r)) - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
      }
      double denom = std::sqrt(vx * vy);
      Record o;
      o.key = key;
      o.value = {denom > 0 ? cov / denom : 0.0};
      out.push_back(std::move(o));
    };
  });

  // --- report generation (the seven-job example workflow) ---
  // Group by custid; mixed arities: per-line records (4 values) enriched with
  // the customer's total (1 value).
  reg.register_reduce("enrich_with_total", [](const UdfSpec&, const StageSchema&) -> ReduceUdf {
    return [](const std::vector<Scalar>& key, const std::vector<Record>& group, std::vector<Record>& out) {
      double total = 0;
      for (const auto& r : group)
        if (r.value.size() == 1) total += num(r.value[0]);
      for (const auto& r : group) {
        if (r.value.size() == 1) continue;
        Record o;
        o.key = key;
        o.value = r.value;
        o.value.push_back(total);
        out.push_back(std::move(o));
      }
    };
  });

  // Group by custid; emits order lines with prices normalized by the customer
  // total carried in the last value field.
  reg.register_reduce("normalize_lines", [](const UdfSpec& spec, const StageSchema& in) -> ReduceUdf {
    FieldRef price = resolve(in, spec.arg("price", "price"), "normalize_lines");
    FieldRef total = resolve(in, spec.arg("total", "custtotal"), "normalize_lines");
    std::vector<FieldRef> carry;
    for (const auto& f : spec.list_arg("carry")) carry.push_back(resolve(in, f, "normalize_lines"));
    return [price, total, carry](const std::vector<Scalar>& key, const std::vector<Record>& group,
                                 std::vector<Record>& out) {
      for (const auto& r : group) {
        Record o;
        o.key = key;
        for (const auto& c : carry) o.value.push_back(c.get(r));
        double t = num(total.get(r));
        o.value.push_back(t > 0 ? num(price.get(r)) / t : 0.0);
        out.push_back(std::move(o));
      }
    };
  });
}

}  // namespace

bool UdfRegistry::has_map(const std::string& ref) const {
  return mapFactories_.count(UdfSpec::parse(ref).name) > 0;
}
bool UdfRegistry::has_reduce(const std::string& ref) const {
  return reduceFactories_.count(UdfSpec::parse(ref).name) > 0;
}
bool UdfRegistry::has_combine(const std::string& ref) const {
  return combineFactories_.count(UdfSpec::parse(ref).name) > 0;
}

MapUdf UdfRegistry::bind_map(const std::string& ref, const StageSchema& in) const {
  UdfSpec spec = UdfSpec::parse(ref);
  auto it = mapFactories_.find(spec.name);
  if (it == mapFactories_.end()) throw UnresolvedUdf("unresolved map function '" + ref + "'");
  return it->second(spec, in);
}

ReduceUdf UdfRegistry::bind_reduce(const std::string& ref, const StageSchema& in) const {
  UdfSpec spec = UdfSpec::parse(ref);
  auto it = reduceFactories_.find(spec.name);
  if (it == reduceFactories_.end()) throw UnresolvedUdf("unresolved reduce function '" + ref + "'");
  return it->second(spec, in);
}

ReduceUdf UdfRegistry::bind_combine(const std::string& ref, const StageSchema& in) const {
  UdfSpec spec = UdfSpec::parse(ref);
  auto it = combineFactories_.find(spec.name);
  if (it == combineFactories_.end()) throw UnresolvedUdf("unresolved combine function '" + ref + "'");
  return it->second(spec, in);
}

const UdfRegistry& UdfRegistry::builtin() {
  static UdfRegistry* reg = [] {
    auto* r = new UdfRegistry();
    register_generic(*r);
    register_workload_udfs(*r);
    return r;
  }();
  return *reg;
}

}  // namespace mrpack
