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


#include "w2vs/common/json_reader.h"

#include <limits>

#include "w2vs/common/error.h"

namespace w2vs {

using nlohmann::json;

std::string JsonTypeName(const json& value) {
  if (value.is_boolean()) return "boolean";
  if (value.is_number_integer()) return "integer";
  if (value.is_number()) return "number";
  if (value.is_string()) return "string";
  if (value.is_array()) return "array";
  if (value.is_object()) return "object";
  return "null";
}

JsonReader::JsonReader(const json& value, std::string path)
    : value_(&value), path_(std::move(path)) {}

std::string JsonReader::PathOf(const std::string& key) const {
  return path_.empty() ? key : path_ + "." + key;
}

void JsonReader::RequireObject() const {
  if (!value_->is_object()) {
    throw ConfigError(path_, "object", "expected object, got " + JsonTypeName(*value_));
  }
}

bool JsonReader::Has(const std::string& key) const {
  RequireObject();
  return value_->contains(key);
}

void JsonReader::RequireKey(const std::string& key) const {
  RequireObject();
  if (!value_->contains(key)) throw ConfigError(PathOf(key), "", "required key is missing");
}

const json& JsonReader::At(const std::string& key) {
  RequireObject();
  seen_.insert(key);
  return value_->at(key);
}

namespace {

[[noreturn]] void TypeError(const std::string& path, const std::string& expected, const json& got) {
  throw ConfigError(path, expected, "expected " + expected + ", got " + JsonTypeName(got));
}

std::int64_t ToInt64(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) {
    const auto u = v.get<std::uint64_t>();
    if (u > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
      throw ConfigError(path, "integer", "integer out of range");
    }
    return static_cast<std::int64_t>(u);
  }
  if (v.is_number_integer()) return v.get<std::int64_t>();
  TypeError(path, "integer", v);
}

}  // namespace

void JsonReader::Get(const std::string& key, int& out) {
  if (!Has(key)) return;
  out = JsonReader(At(key), PathOf(key)).AsInt();
}

void JsonReader::Get(const std::string& key, std::int64_t& out) {
  if (!Has(key)) return;
  out = ToInt64(At(key), PathOf(key));
}

void JsonReader::Get(const std::string& key, std::uint64_t& out) {
  if (!Has(key)) return;
  out = JsonReader(At(key), PathOf(key)).AsUint64();
}

void JsonReader::Get(const std::string& key, double& out) {
  if (!Has(key)) return;
  out = JsonReader(At(key), PathOf(key)).AsDouble();
}

void JsonReader::Get(const std::string& key, bool& out) {
  if (!Has(key)) return;
  out = JsonReader(At(key), PathOf(key)).AsBool();
}

void JsonReader::Get(const std::string& key, std::string& out) {
  if (!Has(key)) return;
  out = JsonReader(At(key), PathOf(key)).AsString();
}

void JsonReader::Get(const std::string& key, std::vector<std::string>& out) {
  if (!Has(key)) return;
  std::vector<std::string> values;
  for (const JsonReader& item : Array(key)) values.push_back(item.AsString());
  out = std::move(values);
}

JsonReader JsonReader::Object(const std::string& key) {
  RequireKey(key);
  JsonReader r(At(key), PathOf(key));
  r.RequireObject();
  return r;
}

std::vector<JsonReader> JsonReader::Array(const std::string& key) {
  RequireKey(key);
  return JsonReader(At(key), PathOf(key)).Items();
}

std::vector<JsonReader> JsonReader::Items() const {
  if (!value_->is_array()) TypeError(path_, "array", *value_);
  std::vector<JsonReader> out;
  for (std::size_t i = 0; i < value_->size(); ++i) {
    out.emplace_back((*value_)[i], path_ + "[" + std::to_string(i) + "]");
  }
  return out;
}

void JsonReader::Finish() const {
  RequireObject();
  for (const auto& [key, v] : value_->items()) {
    if (!seen_.count(key)) throw ConfigError(PathOf(key), "", "unknown key");
  }
}

int JsonReader::AsInt() const {
  const std::int64_t v = ToInt64(*value_, path_);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw ConfigError(path_, "integer", "integer out of range");
  }
  return static_cast<int>(v);
}

std::uint64_t JsonReader::AsUint64() const {
  if (value_->is_number_unsigned()) return value_->get<std::uint64_t>();
  if (value_->is_number_integer()) {
    throw ConfigError(path_, "non-negative integer", "expected non-negative integer");
  }
  TypeError(path_, "non-negative integer", *value_);
}

double JsonReader::AsDouble() const {
  if (!value_->is_number()) TypeError(path_, "number", *value_);
  return value_->get<double>();
}

bool JsonReader::AsBool() const {
  if (!value_->is_boolean()) TypeError(path_, "boolean", *value_);
  return value_->get<bool>();
}

std::string JsonReader::AsString() const {
  if (!value_->is_string()) TypeError(path_, "string", *value_);
  return value_->get<std::string>();
}

json ParseJson(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", "", what + ": invalid JSON: " + e.what());
  }
}

void ApplyOverride(json& doc, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("", "", "override '" + assignment + "' is not of the form key.path=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &doc;
  std::size_t start = 0;
  std::string walked;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError(path, "", "empty component in override path");
    if (node->is_array()) {
      // Array elements are addressed by index: stages.0.steps=20.
      if (key.find_first_not_of("0123456789") != std::string::npos) {
        throw ConfigError(walked, "array index", "'" + key + "' is not an index into an array");
      }
      const std::size_t index = std::stoul(key);
      if (index >= node->size()) {
        throw ConfigError(walked, "array index", "index " + key + " is out of range (size " +
                                                     std::to_string(node->size()) + ")");
      }
      walked += "[" + key + "]";
      if (dot == std::string::npos) {
        (*node)[index] = value;
        return;
      }
      node = &(*node)[index];
      start = dot + 1;
      continue;
    }
    if (!node->is_object()) {
      throw ConfigError(walked, "object", "cannot override inside " + JsonTypeName(*node));
    }
    walked = walked.empty() ? key : walked + "." + key;
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    if (!node->contains(key)) (*node)[key] = json::object();
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace w2vs
