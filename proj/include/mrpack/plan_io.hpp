#pragma once

#include <string>

#include "mrpack/ir.hpp"

namespace mrpack {

// Plan file format: one JSON document with top-level sections `jobs`,
// `datasets`, `edges`, `annotations`, and optional `cluster`. Serialization is
// canonical (sorted ids, fixed key order), so serialize -> parse -> serialize
// is bit-stable.
std::string serialize_plan(const Plan& plan);
Plan parse_plan_text(const std::string& text);

Plan parse_plan(const std::string& path);
void write_plan(const Plan& plan, const std::string& path);

// Hash of the canonical serialization; used for stale-application detection
// and duplicate-subplan elimination.
uint64_t plan_fingerprint(const Plan& plan);

// Fingerprint over structure only: profile annotations are ignored, so two
// rewrite orders that reach the same shape compare equal even when their
// adjusted statistics differ in the last float digit.
uint64_t structural_fingerprint(const Plan& plan);

ClusterSpec parse_cluster_file(const std::string& path);
void write_cluster_file(const ClusterSpec& spec, const std::string& path);

}  // namespace mrpack
