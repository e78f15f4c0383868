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


// Strict, path-tracking access to JSON documents: every key must be known,
// every value must have the expected type, and errors name the dotted path.

#ifndef W2VS_COMMON_JSON_READER_H_
#define W2VS_COMMON_JSON_READER_H_

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace w2vs {

class JsonReader {
 public:
  /// `path` is the dotted location of `value` ("" for the document root).
  JsonReader(const nlohmann::json& value, std::string path);

  const nlohmann::json& value() const { return *value_; }
  const std::string& path() const { return path_; }
  std::string PathOf(const std::string& key) const;

  bool Has(const std::string& key) const;

  // Optional keys leave `out` untouched when absent.
  void Get(const std::string& key, int& out);
  void Get(const std::string& key, std::int64_t& out);
  void Get(const std::string& key, std::uint64_t& out);
  void Get(const std::string& key, double& out);
  void Get(const std::string& key, bool& out);
  void Get(const std::string& key, std::string& out);
  void Get(const std::string& key, std::vector<std::string>& out);

  template <typename T>
  void Require(const std::string& key, T& out) {
    RequireKey(key);
    Get(key, out);
  }

  /// Nested object; marks the key as known.
  JsonReader Object(const std::string& key);
  /// Elements of a nested array, each with an indexed path ("a.b[2]").
  std::vector<JsonReader> Array(const std::string& key);
  /// Elements when this reader itself holds an array.
  std::vector<JsonReader> Items() const;

  /// Throws ConfigError for the first key never looked up.
  void Finish() const;

  // Scalar conversions of the held value itself.
  int AsInt() const;
  std::uint64_t AsUint64() const;
  double AsDouble() const;
  bool AsBool() const;
  std::string AsString() const;

 private:
  const nlohmann::json& At(const std::string& key);
  void RequireKey(const std::string& key) const;
  void RequireObject() const;

  const nlohmann::json* value_;
  std::string path_;
  std::set<std::string> seen_;
};

/// Parses JSON text; syntax errors become ConfigError naming `what`.
nlohmann::json ParseJson(const std::string& text, const std::string& what);

/// Applies a dotted-path override "a.b.c=value" to `doc`. The value is parsed
/// as JSON when possible and taken as a string otherwise. Missing intermediate
/// objects are created; unknown keys are left for the reader to reject.
void ApplyOverride(nlohmann::json& doc, const std::string& assignment);

/// Name of a JSON value's type as used in error messages.
std::string JsonTypeName(const nlohmann::json& value);

}  // namespace w2vs

#endif  // W2VS_COMMON_JSON_READER_H_
