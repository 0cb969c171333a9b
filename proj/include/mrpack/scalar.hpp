#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace mrpack {

// Flat record model: every field is one of these four scalar types.
using Scalar = std::variant<int64_t, double, std::string, bool>;

enum class FieldType { Int64, Float64, String, Bool };

std::string type_name(FieldType t);
FieldType type_from_name(std::string_view name);

// Total order over scalars: type tag first, then value. Gives the executor a
// canonical order that is stable across runs and platforms.
int compare_scalar(const Scalar& a, const Scalar& b);

// Like compare_scalar, but int64 and float64 compare by numeric value; used
// wherever user-facing boundaries (range splits, filter literals) meet data.
int compare_ordered(const Scalar& a, const Scalar& b);

// Canonical byte encoding used for hashing and byte accounting.
void encode_scalar(const Scalar& s, std::string& out);

std::string scalar_to_text(const Scalar& s);
Scalar scalar_from_text(FieldType type, std::string_view text);

double scalar_as_double(const Scalar& s);  // strings/bools get a stable numeric image

uint64_t fnv1a64(std::string_view bytes);

struct Record {
  std::vector<Scalar> key;
  std::vector<Scalar> value;

  bool operator==(const Record& other) const { return key == other.key && value == other.value; }
};

int compare_record(const Record& a, const Record& b);

// Serialized size of the canonical encoding; used for all byte counters so
// pruning and compression accounting are exact rather than estimated.
size_t canonical_size(const Record& r);

uint64_t hash_scalars(const std::vector<Scalar>& values);

}  // namespace mrpack
