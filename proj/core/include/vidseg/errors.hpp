/* Copyright 2026 The vidseg Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vidseg {

// Base of every error raised by the library. The CLI maps subclasses onto
// process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes or sizes of inputs disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or parameter layout (e.g. LoRA matrices vs rank).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Invalid user input that is not a shape problem (duplicate prompts, empty
// dataset, out-of-range precondition).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Memory-bank insert with a frame index that is not strictly increasing.
class OrderingError : public Error {
 public:
  using Error::Error;
};

// A case does not qualify for instrument augmentation.
class EligibilityError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Checkpoint format or model configuration mismatch.
class VersionError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed serialized input. `offset` is the byte offset of the bad record.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace vidseg
