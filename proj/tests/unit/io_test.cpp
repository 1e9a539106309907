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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "vidseg/checkpoint.hpp"
#include "vidseg/config.hpp"
#include "vidseg/data.hpp"
#include "vidseg/dataset_io.hpp"
#include "vidseg/errors.hpp"
#include "vidseg/png_io.hpp"

namespace fs = std::filesystem;

namespace vidseg {
namespace {

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Sorted relative paths of every regular file under `dir`.
std::vector<fs::path> files_under(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), dir));
  std::sort(out.begin(), out.end());
  return out;
}

class TempDir : public ::testing::Test {
 protected:
  fs::path dir;
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() / (std::string("vidseg_io_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
};

using PngIo = TempDir;
using CheckpointIo = TempDir;
using DatasetIo = TempDir;
using ConfigIo = TempDir;

TEST_F(PngIo, RoundTrips) {
  const VideoSample v = generate_synthetic_case(1, GenConfig{});
  write_png_rgb(dir / "f.png", v.frames[0]);
  write_png_labels(dir / "l.png", v.labels[0]);
  EXPECT_EQ(read_png_rgb(dir / "f.png"), v.frames[0]);
  EXPECT_EQ(read_png_labels(dir / "l.png"), v.labels[0]);
  EXPECT_THROW(read_png_rgb(dir / "missing.png"), IoError);
  std::ofstream(dir / "junk.png") << "not a png";
  EXPECT_THROW(read_png_rgb(dir / "junk.png"), Error);
  EXPECT_THROW(write_png_rgb(dir / "no" / "such" / "dir.png", v.frames[0]), IoError);
}

TEST_F(CheckpointIo, RoundTripIsByteIdentical) {
  ModelConfig cfg;
  cfg.memory_capacity = 4;
  Model model(cfg, 77);
  save_checkpoint(dir / "a.ckpt", model, R"({"epoch":3})");
  std::string meta;
  Model loaded = load_checkpoint(dir / "a.ckpt", &meta);
  EXPECT_EQ(loaded.config(), cfg);
  EXPECT_EQ(nlohmann::json::parse(meta).at("epoch"), 3);
  save_checkpoint(dir / "b.ckpt", loaded, meta);
  EXPECT_EQ(read_bytes(dir / "a.ckpt"), read_bytes(dir / "b.ckpt"));
  const auto pa = model.named_parameters(), pb = loaded.named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].first, pb[i].first);
    EXPECT_TRUE(std::equal(pa[i].second.values().begin(), pa[i].second.values().end(),
                           pb[i].second.values().begin()));
  }
}

TEST_F(CheckpointIo, RejectsCorruptionAndMismatch) {
  Model model(ModelConfig{}, 1);
  std::vector<std::uint8_t> bytes = encode_checkpoint(model);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), Error);
  auto bad_version = bytes;
  bad_version[8] = 99;
  EXPECT_THROW(decode_checkpoint(bad_version), VersionError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 5);
  EXPECT_THROW(decode_checkpoint(truncated), ParseError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_checkpoint(trailing), ParseError);

  save_checkpoint(dir / "m.ckpt", model);
  ModelConfig other;
  other.fusion_enabled = false;
  Model target(other, 1);
  EXPECT_THROW(load_checkpoint_into(dir / "m.ckpt", target), VersionError);
  Model same(ModelConfig{}, 2);
  load_checkpoint_into(dir / "m.ckpt", same);
  EXPECT_EQ(encode_checkpoint(same), bytes);
  EXPECT_THROW(load_checkpoint(dir / "absent.ckpt"), IoError);
}

TEST_F(DatasetIo, WriteReadIsDeterministic) {
  DatasetConfig cfg;
  cfg.num_cases = 10;
  cfg.gen.frames = 3;
  const Dataset ds = generate_dataset(5, cfg);
  write_dataset(dir / "a", ds);
  write_dataset(dir / "b", generate_dataset(5, cfg));
  const auto files = files_under(dir / "a");
  ASSERT_EQ(files, files_under(dir / "b"));
  for (const auto& f : files) EXPECT_EQ(read_bytes(dir / "a" / f), read_bytes(dir / "b" / f)) << f;
  EXPECT_EQ(read_dataset(dir / "a"), ds);

  const auto manifest = nlohmann::json::parse(read_bytes(dir / "a" / "manifest.json"));
  EXPECT_EQ(manifest.at("cases").size(), 10u);
  int train = 0, val = 0, test = 0;
  for (const auto& c : manifest.at("cases")) {
    const std::string s = c.at("split");
    train += s == "train";
    val += s == "val";
    test += s == "test";
  }
  EXPECT_EQ(train, 7);
  EXPECT_EQ(val, 1);
  EXPECT_EQ(test, 2);

  write_dataset(dir / "c", generate_dataset(6, cfg));
  EXPECT_EQ(files_under(dir / "c"), files);
  EXPECT_NE(read_bytes(dir / "a" / "case_0000" / "frame_000.png"),
            read_bytes(dir / "c" / "case_0000" / "frame_000.png"));
}

TEST_F(DatasetIo, CaseMetadataIsChecked) {
  const VideoSample v = generate_synthetic_case(3, GenConfig{}, "case_x");
  write_case(dir / "case_x", v);
  EXPECT_EQ(read_case(dir / "case_x"), v);
  auto meta = nlohmann::json::parse(read_bytes(dir / "case_x" / "meta.json"));
  EXPECT_EQ(meta.at("case_id"), "case_x");
  meta["present"]["OP"] = !meta["present"]["OP"].get<bool>();
  std::ofstream(dir / "case_x" / "meta.json") << meta.dump();
  EXPECT_THROW(read_case(dir / "case_x"), ValidationError);
  EXPECT_THROW(read_dataset(dir / "nothing"), IoError);
}

TEST_F(ConfigIo, ParsesBothFormats) {
  const ExperimentConfig from_lines = parse_experiment_config(
      "# toy run\n"
      "seed = 9\n"
      "train.epochs = 5\n"
      "train.optimizer.learning_rate = 0.02  # faster\n"
      "model.fusion_enabled = false\n"
      "data.gen.classes = [1, 3]\n"
      "augmentation_enabled = false\n");
  EXPECT_EQ(from_lines.seed, 9u);
  EXPECT_EQ(from_lines.train.epochs, 5);
  EXPECT_EQ(from_lines.train.optimizer.learning_rate, 0.02);
  EXPECT_FALSE(from_lines.model.fusion_enabled);
  EXPECT_EQ(from_lines.data.gen.classes, (std::vector<int>{1, 3}));
  EXPECT_FALSE(from_lines.augmentation_enabled);

  const ExperimentConfig from_json = parse_experiment_config(to_json(from_lines));
  EXPECT_EQ(from_json, from_lines);
  EXPECT_EQ(parse_experiment_config("{}"), ExperimentConfig{});
  EXPECT_EQ(model_config_from_json(to_json(from_lines.model)), from_lines.model);
  EXPECT_EQ(dataset_config_from_json(to_json(from_lines.data)), from_lines.data);
}

TEST_F(ConfigIo, DefaultsMatchDeskScale) {
  const ExperimentConfig c;
  EXPECT_EQ(c.train.epochs, 40);
  EXPECT_EQ(c.train.optimizer.beta1, 0.9);
  EXPECT_EQ(c.train.optimizer.beta2, 0.999);
  EXPECT_EQ(c.train.loss_weights, LossWeights{});
  EXPECT_EQ(c.data.num_cases, 28);
  EXPECT_EQ(split_counts(c.data.num_cases, c.data.ratios), (std::array<int, 3>{20, 3, 5}));
  EXPECT_EQ(c.data.gen.width, 32);
  EXPECT_EQ(c.data.gen.frames, 8);
  EXPECT_EQ(c.model.prompt_interval, 10);
  EXPECT_EQ(c.model.lora_rank, 4);
  EXPECT_EQ(c.model.lora_alpha, 1.0);
  EXPECT_EQ(c.model.memory_capacity, 6);
}

TEST_F(ConfigIo, RejectsBadInput) {
  EXPECT_THROW(parse_experiment_config("train.epochs = 0\n"), ConfigError);
  EXPECT_THROW(parse_experiment_config("train.optimizer.learning_rate = -1\n"), ConfigError);
  EXPECT_THROW(parse_experiment_config("data.ratios.train = 0.9\n"), ConfigError);
  EXPECT_THROW(parse_experiment_config("train.epoch = 3\n"), ConfigError);
  EXPECT_THROW(parse_experiment_config("{\"model\": {\"widht_s4\": 8}}"), ConfigError);
  EXPECT_THROW(parse_experiment_config("model.input_height = 40\n"), ConfigError);
  EXPECT_THROW(parse_experiment_config("seed 4\n"), ParseError);
  EXPECT_THROW(parse_experiment_config("{\"seed\": "), ParseError);
  EXPECT_THROW(parse_experiment_config("train.epochs = \"many\"\n"), ConfigError);
  std::ofstream(dir / "c.cfg") << "seed = 3\n";
  EXPECT_EQ(load_experiment_config(dir / "c.cfg").seed, 3u);
  EXPECT_THROW(load_experiment_config(dir / "missing.cfg"), IoError);
}

}  // namespace
}  // namespace vidseg
