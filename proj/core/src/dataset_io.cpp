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

#include "vidseg/dataset_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "vidseg/config.hpp"
#include "vidseg/errors.hpp"
#include "vidseg/png_io.hpp"

namespace vidseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string numbered(const char* stem, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%03zu.png", stem, i);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write: " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

void check_case_id(const std::string& id) {
  if (id.empty() || id.find('/') != std::string::npos || id.find('\\') != std::string::npos || id == "." ||
      id == "..") {
    throw ValidationError("invalid case id: '" + id + "'");
  }
}

}  // namespace

void write_case(const fs::path& case_dir, const VideoSample& video) {
  check_case_id(video.case_id);
  if (video.frames.size() != video.labels.size()) throw DimensionError("frames and labels differ in length");
  ensure_dir(case_dir);
  json present = json::object();
  for (int c = 1; c < kNumClasses; ++c) present[class_name(c)] = video.present[c];
  const json meta = {{"case_id", video.case_id},
                     {"frames", video.size()},
                     {"present", present},
                     {"provenance", video.provenance},
                     {"seed", video.seed}};
  write_text(case_dir / "meta.json", meta.dump(2) + "\n");
  for (std::size_t t = 0; t < video.size(); ++t) {
    write_png_rgb(case_dir / numbered("frame", t), video.frames[t]);
    write_png_labels(case_dir / numbered("label", t), video.labels[t]);
  }
}

VideoSample read_case(const fs::path& case_dir) {
  const json meta = read_json(case_dir / "meta.json");
  VideoSample v;
  try {
    v.case_id = meta.at("case_id").get<std::string>();
    v.provenance = meta.at("provenance").get<std::string>();
    v.seed = meta.at("seed").get<std::uint64_t>();
    const auto n = meta.at("frames").get<std::size_t>();
    for (int c = 1; c < kNumClasses; ++c) v.present[c] = meta.at("present").at(class_name(c)).get<bool>();
    for (std::size_t t = 0; t < n; ++t) {
      v.frames.push_back(read_png_rgb(case_dir / numbered("frame", t)));
      v.labels.push_back(read_png_labels(case_dir / numbered("label", t)));
    }
  } catch (const json::exception& e) {
    throw ValidationError(case_dir.string() + "/meta.json: " + e.what());
  }
  for (std::size_t t = 0; t < v.size(); ++t) {
    if (v.frames[t].width != v.labels[t].width || v.frames[t].height != v.labels[t].height ||
        v.frames[t].width != v.frames[0].width || v.frames[t].height != v.frames[0].height) {
      throw DimensionError("frame/label size mismatch in " + case_dir.string());
    }
  }
  if (presence_from_labels(v.labels) != v.present) {
    throw ValidationError("class presence in " + case_dir.string() + " disagrees with the labels");
  }
  return v;
}

void write_manifest(const fs::path& dir, const Dataset& dataset) {
  ensure_dir(dir);
  json cases = json::array();
  for (const DatasetCase& c : dataset.cases) {
    cases.push_back({{"case_id", c.video.case_id},
                     {"split", to_string(c.split)},
                     {"frames", c.video.size()},
                     {"provenance", c.video.provenance}});
  }
  const auto counts = [&](Split s) { return dataset.split(s).size(); };
  const json manifest = {{"format", "vidseg-dataset"},
                         {"version", 1},
                         {"seed", dataset.seed},
                         {"config", json::parse(to_json(dataset.config))},
                         {"splits",
                          {{"train", counts(Split::Train)},
                           {"val", counts(Split::Val)},
                           {"test", counts(Split::Test)}}},
                         {"cases", cases}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

void write_dataset(const fs::path& dir, const Dataset& dataset) {
  ensure_dir(dir);
  for (const DatasetCase& c : dataset.cases) write_case(dir / c.video.case_id, c.video);
  write_manifest(dir, dataset);
}

Dataset read_dataset(const fs::path& dir) {
  const json manifest = read_json(dir / "manifest.json");
  Dataset ds;
  try {
    if (manifest.at("format").get<std::string>() != "vidseg-dataset") throw ValidationError("not a dataset manifest");
    if (manifest.at("version").get<int>() != 1) throw VersionError("unsupported dataset manifest version");
    ds.seed = manifest.at("seed").get<std::uint64_t>();
    ds.config = dataset_config_from_json(manifest.at("config").dump());
    for (const json& c : manifest.at("cases")) {
      DatasetCase dc;
      const auto id = c.at("case_id").get<std::string>();
      check_case_id(id);
      dc.split = split_from_string(c.at("split").get<std::string>());
      dc.video = read_case(dir / id);
      if (dc.video.case_id != id) throw ValidationError("case directory " + id + " holds case " + dc.video.case_id);
      ds.cases.push_back(std::move(dc));
    }
  } catch (const json::exception& e) {
    throw ValidationError((dir / "manifest.json").string() + ": " + e.what());
  }
  return ds;
}

}  // namespace vidseg
