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

#include "vidseg/image.hpp"

namespace vidseg {

// 8-bit RGB PNG.
void write_png_rgb(const std::filesystem::path& path, const Image& image);
Image read_png_rgb(const std::filesystem::path& path);

// Single-channel palette-indexed PNG; pixel value is the class id.
void write_png_labels(const std::filesystem::path& path, const LabelMap& labels);
LabelMap read_png_labels(const std::filesystem::path& path);

}  // namespace vidseg
