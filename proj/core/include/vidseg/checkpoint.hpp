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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vidseg/model.hpp"

namespace vidseg {

// Layout (little-endian):
//   "VSEGCKPT" u32 version
//   u64 length + JSON header {"model": ModelConfig, "meta": caller metadata}
//   u32 count, then per array: u8 kind (0 parameter, 1 buffer),
//   u32 name length + name, u32 rank, rank x i32 dims, f64 values.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Model& model, const std::string& meta_json = "{}");
Model decode_checkpoint(const std::vector<std::uint8_t>& bytes, std::string* meta_json = nullptr);

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const std::string& meta_json = "{}");
Model load_checkpoint(const std::filesystem::path& path, std::string* meta_json = nullptr);

// Loads weights into an existing model. Throws VersionError when the stored
// configuration differs from the model's.
void load_checkpoint_into(const std::filesystem::path& path, Model& model);

}  // namespace vidseg
