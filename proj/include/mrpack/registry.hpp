#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mrpack/ir.hpp"
#include "mrpack/scalar.hpp"

namespace mrpack {

struct UnresolvedUdf : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Field names of the records entering a stage; drives name -> position
// binding for user functions.
struct StageSchema {
  std::vector<std::string> keyNames;
  std::vector<std::string> valueNames;
  bool known = false;

  std::optional<std::pair<bool, int>> find(const std::string& field) const;  // (inKey, index)
};

using MapUdf = std::function<void(const Record&, std::vector<Record>&)>;
// Reduce/combine functions receive the grouping-key values and the group's
// records in canonical order. Registered functions must be pure and either
// order-insensitive or accept the canonical order.
using ReduceUdf = std::function<void(const std::vector<Scalar>& groupKey, const std::vector<Record>& group,
                                     std::vector<Record>& out)>;

// Parsed `name(arg;arg;...)` reference. List-valued args are comma separated.
struct UdfSpec {
  std::string name;
  std::map<std::string, std::string> args;

  static UdfSpec parse(const std::string& ref);
  std::string arg(const std::string& key, const std::string& dflt = "") const;
  std::vector<std::string> list_arg(const std::string& key) const;
};

// Numeric-coercing comparison used by filters and pruning: int64 and float64
// compare by value, other type mixes fall back to the canonical scalar order.
bool filter_eval(Cmp cmp, const Scalar& fieldValue, const Scalar& literal);

FilterPredicate parse_predicate(const std::string& text);
Scalar parse_literal(const std::string& text);

class UdfRegistry {
 public:
  using MapFactory = std::function<MapUdf(const UdfSpec&, const StageSchema&)>;
  using ReduceFactory = std::function<ReduceUdf(const UdfSpec&, const StageSchema&)>;

  static const UdfRegistry& builtin();

  void register_map(const std::string& name, MapFactory f) { mapFactories_[name] = std::move(f); }
  void register_reduce(const std::string& name, ReduceFactory f) { reduceFactories_[name] = std::move(f); }
  void register_combine(const std::string& name, ReduceFactory f) { combineFactories_[name] = std::move(f); }

  bool has_map(const std::string& ref) const;
  bool has_reduce(const std::string& ref) const;
  bool has_combine(const std::string& ref) const;

  MapUdf bind_map(const std::string& ref, const StageSchema& in) const;
  ReduceUdf bind_reduce(const std::string& ref, const StageSchema& in) const;
  ReduceUdf bind_combine(const std::string& ref, const StageSchema& in) const;

 private:
  std::map<std::string, MapFactory> mapFactories_;
  std::map<std::string, ReduceFactory> reduceFactories_;
  std::map<std::string, ReduceFactory> combineFactories_;
};

}  // namespace mrpack
