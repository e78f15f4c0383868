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


#include "w2vs/checkpoint/checkpoint.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <map>
#include <set>
#include <span>
#include <sstream>

#include "w2vs/common/error.h"
#include "w2vs/common/file_util.h"
#include "w2vs/common/hash.h"
#include "w2vs/common/json_reader.h"
#include "w2vs/encoder/spec_json.h"

namespace w2vs::checkpoint {

using nlohmann::json;

namespace {

constexpr std::size_t kPreambleBytes = 4 + 4 + 8;
constexpr char kHeaderHashKey[] = "header_fnv1a64";

template <typename U>
void PutLe(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

template <typename U>
U GetLe(const std::string& in, std::size_t at) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<U>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  }
  return v;
}

void AppendFloats(std::string& out, std::span<const float> values) {
  for (float f : values) PutLe(out, std::bit_cast<std::uint32_t>(f));
}

json ProvenanceToJson(const std::vector<ProvenanceEntry>& entries) {
  json out = json::array();
  for (const auto& e : entries) {
    out.push_back({{"kind", e.kind},
                   {"name", e.name},
                   {"objective", e.objective},
                   {"seed", e.seed},
                   {"steps", e.steps},
                   {"source", e.source}});
  }
  return out;
}

std::vector<ProvenanceEntry> ProvenanceFromJson(std::vector<JsonReader> items) {
  std::vector<ProvenanceEntry> out;
  for (JsonReader& r : items) {
    ProvenanceEntry e;
    r.Require("kind", e.kind);
    r.Require("name", e.name);
    r.Get("objective", e.objective);
    r.Get("seed", e.seed);
    r.Get("steps", e.steps);
    r.Get("source", e.source);
    r.Finish();
    if (e.kind != "init" && e.kind != "surgery" && e.kind != "stage") {
      throw ConfigError(r.PathOf("kind"), "init|surgery|stage", "unknown provenance kind '" + e.kind + "'");
    }
    out.push_back(std::move(e));
  }
  return out;
}

[[noreturn]] void Corrupt(const std::string& what) {
  throw CheckpointError("corrupt checkpoint: " + what);
}

}  // namespace

Checkpoint InitCheckpoint(const encoder::ModelSpec& spec, std::uint64_t seed) {
  Checkpoint c;
  c.model = encoder::InitModel(spec, seed);
  ProvenanceEntry e;
  e.kind = "init";
  e.name = "random";
  e.seed = seed;
  c.provenance.push_back(e);
  return c;
}

std::string PayloadHash(const Checkpoint& ckpt) {
  std::string payload;
  for (const auto& [name, t] : ckpt.model.params) AppendFloats(payload, t.data());
  return HashToHex(Fnv1a64(payload));
}

std::string Serialize(const Checkpoint& ckpt) {
  encoder::CheckParams(ckpt.model.spec, ckpt.model.params);
  std::string payload;
  json tensors = json::array();
  for (const auto& [name, t] : ckpt.model.params) {
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"offset", payload.size()}});
    AppendFloats(payload, t.data());
  }
  json header = {{"format", "w2vs-checkpoint"},
                 {"spec", encoder::ModelSpecToJson(ckpt.model.spec)},
                 {"tensors", tensors},
                 {"provenance", ProvenanceToJson(ckpt.provenance)},
                 {"payload_bytes", payload.size()},
                 {"payload_fnv1a64", HashToHex(Fnv1a64(payload))}};
  header[kHeaderHashKey] = HashToHex(Fnv1a64(header.dump()));
  const std::string text = header.dump();

  std::string out(kMagic, 4);
  PutLe<std::uint32_t>(out, kFormatVersion);
  PutLe<std::uint64_t>(out, text.size());
  out += text;
  out += payload;
  return out;
}

Checkpoint Deserialize(const std::string& bytes) {
  if (bytes.size() < kPreambleBytes || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError("not a w2vs checkpoint (bad magic)");
  }
  const auto version = GetLe<std::uint32_t>(bytes, 4);
  if (version != kFormatVersion) {
    throw CheckpointError("unsupported checkpoint format version " + std::to_string(version) +
                          " (expected " + std::to_string(kFormatVersion) + ")");
  }
  const auto header_len = GetLe<std::uint64_t>(bytes, 8);
  if (header_len > bytes.size() - kPreambleBytes) Corrupt("header length exceeds file size");
  const std::string text = bytes.substr(kPreambleBytes, header_len);
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception&) {
    Corrupt("header is not valid JSON");
  }
  if (!header.is_object() || header.dump() != text) Corrupt("header is not in canonical form");
  if (!header.contains(kHeaderHashKey) || !header[kHeaderHashKey].is_string()) {
    Corrupt("header hash missing");
  }
  const std::string stored = header[kHeaderHashKey].get<std::string>();
  header.erase(kHeaderHashKey);
  if (HashToHex(Fnv1a64(header.dump())) != stored) Corrupt("header hash mismatch");

  const std::string payload = bytes.substr(kPreambleBytes + header_len);
  Checkpoint out;
  std::vector<std::pair<std::string, num::Shape>> table;
  std::vector<std::size_t> offsets;
  try {
    JsonReader r(header, "header");
    std::string format;
    r.Require("format", format);
    if (format != "w2vs-checkpoint") throw CheckpointError("unknown container format '" + format + "'");
    std::uint64_t payload_bytes = 0;
    r.Require("payload_bytes", payload_bytes);
    std::string payload_hash;
    r.Require("payload_fnv1a64", payload_hash);
    if (payload_bytes != payload.size()) Corrupt("payload size differs from header");
    if (HashToHex(Fnv1a64(payload)) != payload_hash) Corrupt("payload hash mismatch");

    out.model.spec = encoder::ModelSpecFromJson(r.Object("spec"));
    for (JsonReader t : r.Array("tensors")) {
      std::string name;
      t.Require("name", name);
      num::Shape shape;
      for (const JsonReader& d : t.Array("shape")) shape.push_back(static_cast<std::size_t>(d.AsUint64()));
      std::uint64_t offset = 0;
      t.Require("offset", offset);
      t.Finish();
      table.emplace_back(name, shape);
      offsets.push_back(static_cast<std::size_t>(offset));
    }
    out.provenance = ProvenanceFromJson(r.Array("provenance"));
    r.Finish();
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
  }

  // The tensors must tile the payload exactly, in table order.
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& [name, shape] = table[i];
    std::size_t count = 1;
    for (std::size_t d : shape) count *= d;
    if (offsets[i] != cursor || cursor + 4 * count > payload.size()) {
      throw CheckpointError("tensor '" + name + "' does not match its payload span");
    }
    if (out.model.params.count(name)) throw CheckpointError("duplicate tensor name '" + name + "'");
    num::Tensor t(shape);
    for (std::size_t k = 0; k < count; ++k) {
      t[k] = std::bit_cast<float>(GetLe<std::uint32_t>(payload, cursor + 4 * k));
    }
    out.model.params.emplace(name, std::move(t));
    cursor += 4 * count;
  }
  if (cursor != payload.size()) throw CheckpointError("payload has bytes not owned by any tensor");
  encoder::CheckParams(out.model.spec, out.model.params);
  return out;
}

void Save(const Checkpoint& ckpt, const std::filesystem::path& path) {
  WriteFileAtomic(path, Serialize(ckpt));
}

Checkpoint Load(const std::filesystem::path& path) {
  const std::string bytes = ReadFile(path);
  try {
    return Deserialize(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

std::string SurgeryOp::ToString() const {
  switch (kind) {
    case Kind::kTruncate: return "truncate " + std::to_string(value);
    case Kind::kAdaptBandwidth: return "adapt_bandwidth " + features::FormatSurgeryPlan(plan);
    case Kind::kAttachHead: return "attach_head " + std::to_string(value);
    case Kind::kDetachHead: return "detach_head";
  }
  return "?";
}

SurgeryOp ParseSurgeryOp(const std::string& text) {
  const std::size_t sep = text.find_first_of(": ");
  const std::string op = text.substr(0, sep);
  const std::string arg = sep == std::string::npos ? "" : text.substr(sep + 1);
  auto integer = [&]() {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(arg, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (arg.empty() || used != arg.size()) {
      throw SurgeryError("surgery op '" + text + "': expected an integer argument");
    }
    return v;
  };
  SurgeryOp out;
  if (op == "truncate") {
    out.kind = SurgeryOp::Kind::kTruncate;
    out.value = integer();
  } else if (op == "adapt_bandwidth") {
    out.kind = SurgeryOp::Kind::kAdaptBandwidth;
    try {
      out.plan = features::ParseSurgeryPlan(arg);
    } catch (const Error& e) {
      throw SurgeryError("surgery op '" + text + "': " + e.what());
    }
  } else if (op == "attach_head") {
    out.kind = SurgeryOp::Kind::kAttachHead;
    out.value = integer();
  } else if (op == "detach_head" && arg.empty()) {
    out.kind = SurgeryOp::Kind::kDetachHead;
  } else {
    throw SurgeryError("unknown surgery op '" + text +
                       "' (expected truncate:N, adapt_bandwidth:PLAN, attach_head:C or detach_head)");
  }
  return out;
}

Checkpoint ApplySurgery(const Checkpoint& ckpt, const std::vector<SurgeryOp>& ops) {
  Checkpoint out = ckpt;
  for (const SurgeryOp& op : ops) {
    try {
      switch (op.kind) {
        case SurgeryOp::Kind::kTruncate:
          out.model = encoder::Truncate(out.model, op.value);
          break;
        case SurgeryOp::Kind::kAdaptBandwidth: {
          auto [stack, params] = features::AdaptBandwidth(out.model.spec.stack, out.model.params, op.plan);
          out.model.spec.stack = std::move(stack);
          out.model.params = std::move(params);
          break;
        }
        case SurgeryOp::Kind::kAttachHead:
          out.model = encoder::AttachHead(out.model, op.value);
          break;
        case SurgeryOp::Kind::kDetachHead:
          out.model = encoder::DetachHead(out.model);
          break;
      }
    } catch (const Error& e) {
      throw SurgeryError("surgery '" + op.ToString() + "' on model '" + out.model.spec.name +
                         "': " + e.what());
    }
    ProvenanceEntry e;
    e.kind = "surgery";
    e.name = op.ToString();
    out.provenance.push_back(e);
  }
  return out;
}

std::vector<std::string> Surgeries(const Checkpoint& ckpt) {
  std::vector<std::string> out;
  for (const auto& e : ckpt.provenance)
    if (e.kind == "surgery") out.push_back(e.name);
  return out;
}

// ---------------------------------------------------------------------------

json InspectReport(const Checkpoint& ckpt) {
  const encoder::ModelSpec& spec = ckpt.model.spec;
  const features::FrameGeometry geo = features::Geometry(spec.stack);
  std::map<std::string, std::size_t> components;
  std::size_t total = 0;
  for (const auto& [name, t] : ckpt.model.params) {
    components[encoder::ComponentOf(name)] += t.size();
    total += t.size();
  }
  return {{"format_version", kFormatVersion},
          {"spec", encoder::ModelSpecToJson(spec)},
          {"geometry",
           {{"sample_rate", geo.sample_rate},
            {"frame_shift_samples_num", geo.shift_num},
            {"frame_shift_samples_den", geo.shift_den},
            {"frame_shift_ms", geo.frame_shift_ms},
            {"receptive_field_samples", geo.receptive_field_samples},
            {"receptive_field_ms", geo.receptive_field_ms}}},
          {"blocks", spec.encoder.num_blocks},
          {"num_classes", spec.num_classes},
          {"parameters", {{"total", total}, {"components", components}}},
          {"provenance", ProvenanceToJson(ckpt.provenance)},
          {"payload_fnv1a64", PayloadHash(ckpt)}};
}

std::string InspectText(const json& report) {
  std::ostringstream s;
  const json& g = report["geometry"];
  s << "model        " << report["spec"]["name"].get<std::string>() << "\n";
  s << "format       v" << report["format_version"] << "\n";
  s << "sample rate  " << g["sample_rate"] << " Hz\n";
  s << "frame shift  " << g["frame_shift_ms"].get<double>() << " ms ("
    << g["frame_shift_samples_num"] << "/" << g["frame_shift_samples_den"] << " samples)\n";
  s << "receptive    " << g["receptive_field_samples"] << " samples ("
    << g["receptive_field_ms"].get<double>() << " ms)\n";
  s << "blocks       " << report["blocks"] << "\n";
  const int classes = report["num_classes"].get<int>();
  s << "head         " << (classes > 0 ? std::to_string(classes) + " classes" : "none") << "\n";
  s << "parameters   " << report["parameters"]["total"] << "\n";
  for (const auto& [component, count] : report["parameters"]["components"].items()) {
    s << "  " << std::left << std::setw(20) << component << count << "\n";
  }
  s << "provenance\n";
  std::size_t i = 0;
  for (const auto& e : report["provenance"]) {
    s << "  " << ++i << ". " << e["kind"].get<std::string>() << " " << e["name"].get<std::string>();
    if (e["kind"] == "stage") {
      s << " (" << e["objective"].get<std::string>() << ", " << e["steps"] << " steps, seed "
        << e["seed"] << ", from " << e["source"].get<std::string>() << ")";
    } else if (e["kind"] == "init") {
      s << " (seed " << e["seed"] << ")";
    }
    s << "\n";
  }
  s << "payload      fnv1a64 " << report["payload_fnv1a64"].get<std::string>() << "\n";
  return s.str();
}

std::vector<TensorDiff> Diff(const encoder::Model& a, const encoder::Model& b) {
  std::set<std::string> names;
  for (const auto& [n, t] : a.params) names.insert(n);
  for (const auto& [n, t] : b.params) names.insert(n);
  std::vector<TensorDiff> out;
  for (const std::string& name : names) {
    auto ia = a.params.find(name);
    auto ib = b.params.find(name);
    TensorDiff d{name, "", 0.0};
    if (ia == a.params.end()) {
      d.status = "added";
    } else if (ib == b.params.end()) {
      d.status = "removed";
    } else if (ia->second.shape() != ib->second.shape()) {
      d.status = "reshaped";
    } else {
      const auto& x = ia->second.data();
      const auto& y = ib->second.data();
      bool identical = std::memcmp(x.data(), y.data(), x.size() * sizeof(float)) == 0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        d.max_abs_delta = std::max(d.max_abs_delta,
                                   std::abs(static_cast<double>(x[i]) - static_cast<double>(y[i])));
      }
      d.status = identical ? "unchanged" : "changed";
    }
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<TensorDiff> Changes(const std::vector<TensorDiff>& diff) {
  std::vector<TensorDiff> out;
  for (const auto& d : diff)
    if (d.status != "unchanged") out.push_back(d);
  return out;
}

json DiffReport(const std::vector<TensorDiff>& diff) {
  json tensors = json::array();
  std::map<std::string, std::size_t> counts;
  double max_delta = 0;
  for (const auto& d : diff) {
    tensors.push_back({{"name", d.name}, {"status", d.status}, {"max_abs_delta", d.max_abs_delta}});
    ++counts[d.status];
    max_delta = std::max(max_delta, d.max_abs_delta);
  }
  return {{"tensors", tensors}, {"counts", counts}, {"max_abs_delta", max_delta},
          {"changed", Changes(diff).size()}};
}

}  // namespace w2vs::checkpoint
