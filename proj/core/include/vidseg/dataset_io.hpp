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

#include <filesystem>

#include "vidseg/data.hpp"

namespace vidseg {

// Directory layout:
//   manifest.json                  seed, dataset config, case list with splits
//   <case_id>/meta.json            case id, class presence, provenance, seed
//   <case_id>/frame_000.png ...    RGB frames
//   <case_id>/label_000.png ...    palette-indexed labels
// Output is byte-identical for equal datasets.
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& dir);

void write_case(const std::filesystem::path& case_dir, const VideoSample& video);
VideoSample read_case(const std::filesystem::path& case_dir);

// Rewrites only the manifest.
void write_manifest(const std::filesystem::path& dir, const Dataset& dataset);

}  // namespace vidseg
