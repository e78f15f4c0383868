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

#ifndef W2VS_COMMON_ERROR_H_
#define W2VS_COMMON_ERROR_H_

#include <stdexcept>
#include <string>

namespace w2vs {

/// Base class of every error thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A sequence is shorter than one receptive field of the operator applied to it.
class InputTooShort : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf reached an operator boundary.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed WAV data; the message names the offending header field.
class WavError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// A surgery op that cannot be applied to the model it was given.
class SurgeryError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Config schema violation. `path` is the dotted location of the bad value.
class ConfigError : public Error {
 public:
  ConfigError(std::string path, std::string expected, const std::string& message)
      : Error(path.empty() ? message : path + ": " + message),
        path_(std::move(path)),
        expected_(std::move(expected)),
        message_(message) {}

  const std::string& path() const { return path_; }
  const std::string& expected() const { return expected_; }
  const std::string& message() const { return message_; }

 private:
  std::string path_;
  std::string expected_;
  std::string message_;
};

}  // namespace w2vs

#endif  // W2VS_COMMON_ERROR_H_
