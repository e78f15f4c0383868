// Copyright 2026 The w2vs Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Single-file model container:
//
//   "W2VS" | u32 LE version | u64 LE header length | JSON header | payload
//
// The header holds the model spec, the tensor table (name, shape, byte offset
// into the payload), the provenance list, the FNV-1a 64 hash of the payload
// and the FNV-1a 64 hash of the header itself computed with that one field
// removed. The header is written in canonical form (compact, sorted keys) and
// a loader rejects any header that is not, so every byte of it is covered.
// The payload is the tensors' float32 values, little-endian, in name order.

#ifndef W2VS_CHECKPOINT_CHECKPOINT_H_
#define W2VS_CHECKPOINT_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "w2vs/encoder/model.h"
#include "w2vs/features/conv_stack.h"

namespace w2vs::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr char kMagic[4] = {'W', '2', 'V', 'S'};

/// One step of a checkpoint's history. Kinds: "init" (name "random" with the
/// init seed), "surgery" (name like "truncate 2"), "stage" (a training run).
struct ProvenanceEntry {
  std::string kind;
  std::string name;
  std::string objective;  // stage only
  std::uint64_t seed = 0;  // init and stage
  std::int64_t steps = 0;  // stage only
  std::string source;     // stage only: payload hash of the initialising checkpoint, or "random"

  friend bool operator==(const ProvenanceEntry&, const ProvenanceEntry&) = default;
};

struct Checkpoint {
  encoder::Model model;
  std::vector<ProvenanceEntry> provenance;
};

/// Fresh model with an "init random" provenance entry.
Checkpoint InitCheckpoint(const encoder::ModelSpec& spec, std::uint64_t seed);

std::string Serialize(const Checkpoint& ckpt);
Checkpoint Deserialize(const std::string& bytes);

/// Atomic write (temp file + rename).
void Save(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint Load(const std::filesystem::path& path);

/// FNV-1a 64 of the payload, as 16 hex digits.
std::string PayloadHash(const Checkpoint& ckpt);

// Surgery ---------------------------------------------------------------------

struct SurgeryOp {
  enum class Kind { kTruncate, kAdaptBandwidth, kAttachHead, kDetachHead };
  Kind kind = Kind::kTruncate;
  int value = 0;                          // N for truncate, C for attach_head
  features::StrideSurgeryPlan plan;       // adapt_bandwidth

  /// Provenance form, e.g. "truncate 2", "adapt_bandwidth first+fold".
  std::string ToString() const;
};

/// "truncate:2" | "adapt_bandwidth:<plan>" | "attach_head:<C>" | "detach_head".
/// The space-separated provenance form is accepted too.
SurgeryOp ParseSurgeryOp(const std::string& text);

/// Applies `ops` in order to a copy; each appends a provenance entry. Errors
/// name the op and the conflict with the model spec.
Checkpoint ApplySurgery(const Checkpoint& ckpt, const std::vector<SurgeryOp>& ops);

/// Surgery names in provenance order.
std::vector<std::string> Surgeries(const Checkpoint& ckpt);

// Reporting -------------------------------------------------------------------

/// Spec, geometry, parameter counts per component, block count, provenance.
nlohmann::json InspectReport(const Checkpoint& ckpt);
std::string InspectText(const nlohmann::json& report);

struct TensorDiff {
  std::string name;
  std::string status;  // "added" | "removed" | "changed" | "unchanged" | "reshaped"
  double max_abs_delta = 0;  // over common elements of same-shape tensors

  friend bool operator==(const TensorDiff&, const TensorDiff&) = default;
};

/// One entry per tensor name in either model, ordered by name.
std::vector<TensorDiff> Diff(const encoder::Model& a, const encoder::Model& b);
/// Entries whose status is not "unchanged".
std::vector<TensorDiff> Changes(const std::vector<TensorDiff>& diff);
nlohmann::json DiffReport(const std::vector<TensorDiff>& diff);

}  // namespace w2vs::checkpoint

#endif  // W2VS_CHECKPOINT_CHECKPOINT_H_
