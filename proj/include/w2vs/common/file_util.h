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

#ifndef W2VS_COMMON_FILE_UTIL_H_
#define W2VS_COMMON_FILE_UTIL_H_

#include <filesystem>
#include <string>
#include <string_view>

namespace w2vs {

/// Whole file as bytes; throws IoError.
std::string ReadFile(const std::filesystem::path& path);

/// Writes to a sibling temp file, then renames over `path`. Parent
/// directories are created. Throws IoError.
void WriteFileAtomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace w2vs

#endif  // W2VS_COMMON_FILE_UTIL_H_
