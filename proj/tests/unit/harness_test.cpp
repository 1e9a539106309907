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

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "vidseg/checkpoint.hpp"
#include "vidseg/config.hpp"
#include "vidseg/dataset_io.hpp"
#include "vidseg/errors.hpp"
#include "vidseg/harness.hpp"
#include "vidseg/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace vidseg {
namespace {

// Six 3-frame cases: 4 train, 1 val, 1 test.
ExperimentConfig tiny_config(std::uint64_t seed = 1) {
  ExperimentConfig c;
  c.seed = seed;
  c.data.num_cases = 6;
  c.data.gen.frames = 3;
  c.train.epochs = 2;
  c.train.batch_size = 2;
  c.ablation_seeds = 1;
  return c;
}

std::vector<std::vector<double>> param_values(const Model& m, const std::string& prefix) {
  std::vector<std::vector<double>> out;
  for (const auto& [name, t] : m.named_parameters())
    if (name.rfind(prefix, 0) == 0) out.emplace_back(t.values().begin(), t.values().end());
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class HarnessDir : public ::testing::Test {
 protected:
  fs::path dir;
  void SetUp() override {
    dir = fs::temp_directory_path() /
          (std::string("vidseg_harness_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
};

TEST(Train, StepBookkeepingAndLogIdentity) {
  const ExperimentConfig cfg = tiny_config();
  const Dataset ds = generate_dataset(cfg.seed, cfg.data);
  const TrainResult r = train_model(cfg, ds);
  ASSERT_EQ(r.log.size(), 4u);
  for (std::size_t i = 0; i < r.log.size(); ++i) {
    EXPECT_EQ(r.log[i].step, static_cast<int>(i) + 1);
    EXPECT_EQ(r.log[i].epoch, static_cast<int>(i) / 2 + 1);
    const LossBreakdown& b = r.log[i].loss;
    const LossWeights& w = cfg.train.loss_weights;
    EXPECT_NEAR(b.total, w.focal * b.focal + w.dice * b.dice + w.mae * b.mae + w.ce * b.ce, 1e-12);
  }
  EXPECT_EQ(r.val_mean_dice.size(), 2u);
  EXPECT_GE(r.best_epoch, 1);
  EXPECT_EQ(r.best_val_dice, *std::max_element(r.val_mean_dice.begin(), r.val_mean_dice.end()));

  // The CSV log carries every term and parses back exactly.
  std::istringstream csv(format_train_log(r.log));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "step,epoch,focal,dice,mae,ce,total");
  for (const StepRecord& rec : r.log) {
    ASSERT_TRUE(std::getline(csv, line));
    int step = 0, epoch = 0;
    double f = 0, d = 0, m = 0, c = 0, t = 0;
    ASSERT_EQ(std::sscanf(line.c_str(), "%d,%d,%lf,%lf,%lf,%lf,%lf", &step, &epoch, &f, &d, &m, &c, &t), 7);
    EXPECT_EQ(step, rec.step);
    EXPECT_EQ(f, rec.loss.focal);
    EXPECT_EQ(t, rec.loss.total);
    EXPECT_NEAR(t, 20 * f + d + m + c, 1e-12);
  }
}

TEST(Train, MaxStepsCapsTraining) {
  ExperimentConfig cfg = tiny_config();
  cfg.train.max_steps = 3;
  cfg.train.epochs = 5;
  EXPECT_EQ(train_model(cfg, generate_dataset(cfg.seed, cfg.data)).log.size(), 3u);
}

TEST(Train, IsDeterministic) {
  const ExperimentConfig cfg = tiny_config(3);
  const Dataset ds = generate_dataset(cfg.seed, cfg.data);
  const TrainResult a = train_model(cfg, ds), b = train_model(cfg, ds);
  EXPECT_EQ(format_train_log(a.log), format_train_log(b.log));
  EXPECT_EQ(encode_checkpoint(*a.model), encode_checkpoint(*b.model));
}

// Briefly trained model, prompts only on frame 0: memory alone must keep every
// prompted class on screen for the rest of the video.
TEST(Train, MemoryCarriesObjectsWithoutLaterPrompts) {
  ExperimentConfig cfg;
  cfg.seed = 5;
  cfg.data.num_cases = 12;
  cfg.train.max_steps = 60;
  const Dataset ds = generate_dataset(cfg.seed, cfg.data);
  const TrainResult trained = train_model(cfg, ds);
  Model& model = *trained.model;
  model.set_training(false);
  NoGradGuard no_grad;
  const VideoSample video = generate_synthetic_case(cfg.seed + 100, cfg.data.gen);
  const PromptSchedule schedule = make_prompt_schedule(video, 1000);
  ASSERT_TRUE(schedule[0].prompted);
  ASSERT_FALSE(schedule[0].boxes.empty());
  for (std::size_t t = 1; t < schedule.size(); ++t) ASSERT_FALSE(schedule[t].prompted);
  const auto preds = model.forward_video(video, schedule);
  ASSERT_EQ(preds.size(), video.size());
  for (std::size_t t = 0; t < preds.size(); ++t) {
    for (double v : preds[t].probs.values()) ASSERT_TRUE(std::isfinite(v));
    const LabelMap labels = preds[t].labels();
    const std::set<int> seen(labels.labels.begin(), labels.labels.end());
    for (const BoxPrompt& b : schedule[0].boxes)
      EXPECT_TRUE(seen.count(b.class_id)) << "frame " << t << " class " << b.class_id;
  }
}

TEST(Train, FreezeFlagsHoldParametersFixed) {
  ExperimentConfig cfg = tiny_config();
  const Dataset ds = generate_dataset(cfg.seed, cfg.data);
  const Model init(cfg.model, cfg.seed);

  cfg.train.freeze_fusion = true;
  const TrainResult frozen_fusion = train_model(cfg, ds);
  EXPECT_EQ(param_values(*frozen_fusion.model, "fusion."), param_values(init, "fusion."));
  EXPECT_NE(param_values(*frozen_fusion.model, "decoder."), param_values(init, "decoder."));

  cfg.train.freeze_fusion = false;
  cfg.train.freeze_decoder = true;
  const TrainResult frozen_decoder = train_model(cfg, ds);
  EXPECT_EQ(param_values(*frozen_decoder.model, "decoder."), param_values(init, "decoder."));
  EXPECT_NE(param_values(*frozen_decoder.model, "fusion."), param_values(init, "fusion."));

  std::size_t fusion = 0;
  for (const auto& [name, t] : init.named_parameters()) fusion += name.rfind("fusion.", 0) == 0;
  TrainConfig tc;
  tc.freeze_fusion = true;
  EXPECT_EQ(trainable_parameters(init, tc).size(), init.named_parameters().size() - fusion);
}

TEST_F(HarnessDir, NonFiniteLossAbortsWithLastGoodCheckpoint) {
  const ExperimentConfig cfg = tiny_config();
  const Dataset ds = generate_dataset(cfg.seed, cfg.data);
  TrainOptions opts;
  opts.abort_checkpoint = dir / "last_good.ckpt";
  std::vector<std::vector<double>> before_fault;
  opts.before_step = [&](int step, Model& model) {
    if (step != 3) return;
    before_fault = param_values(model, "");
    for (auto& [name, t] : model.named_parameters()) {
      if (name == "decoder.classifier.bias") t.mutable_values()[0] = std::nan("");
    }
  };
  EXPECT_THROW(train_model(cfg, ds, opts), NumericError);
  ASSERT_TRUE(fs::exists(opts.abort_checkpoint));
  std::string meta;
  const Model saved = load_checkpoint(opts.abort_checkpoint, &meta);
  EXPECT_EQ(json::parse(meta).at("aborted_at_step"), 3);
  for (const auto& values : param_values(saved, ""))
    for (double v : values) ASSERT_TRUE(std::isfinite(v));
  // Last good weights produced step 2's loss: one update before the fault.
  EXPECT_NE(param_values(saved, ""), before_fault);
}

TEST(Evaluate, GroundTruthReplayScoresOne) {
  const Dataset ds = generate_dataset(2, tiny_config().data);
  ConfusionCounts counts;
  for (const DatasetCase& c : ds.cases)
    for (const LabelMap& l : c.video.labels) accumulate(counts, l, l);
  const MetricsReport rep = make_report(counts);
  EXPECT_EQ(rep.dice.mean, 1.0);
  EXPECT_EQ(rep.iou.mean, 1.0);
}

TEST(Evaluate, RepeatedEvaluationIsIdentical) {
  const ExperimentConfig cfg = tiny_config();
  const Dataset ds = generate_dataset(cfg.seed, cfg.data);
  Model model(cfg.model, 4);
  const auto test = ds.split(Split::Test);
  const MetricsReport a = evaluate(model, test), b = evaluate(model, test);
  EXPECT_EQ(a.dice.mean, b.dice.mean);
  EXPECT_EQ(a.iou.mean, b.iou.mean);
  const ConfusionCounts prompted = evaluate_counts(model, test, true);
  EXPECT_EQ(prompted.frames, test.size());
}

TEST(Ablation, GridShapeAndReferenceColumns) {
  ExperimentConfig cfg = tiny_config();
  cfg.train.max_steps = 1;
  cfg.train.epochs = 1;
  cfg.data.gen.classes = {1, 3, 5};
  const Dataset ds = generate_dataset(cfg.seed, cfg.data);
  const auto grid = run_ablation(cfg, ds);
  ASSERT_EQ(grid.size(), 4u);
  const std::vector<std::pair<bool, bool>> flags{{false, false}, {false, true}, {true, false}, {true, true}};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(grid[i].fusion, flags[i].first);
    EXPECT_EQ(grid[i].augmentation, flags[i].second);
    EXPECT_EQ(grid[i].mean_dice.size(), 1u);
  }
  const json j = json::parse(ablation_json(grid));
  const std::vector<double> ref_dice{0.8397, 0.8531, 0.8559, 0.8635};
  const std::vector<double> ref_miou{0.7681, 0.7697, 0.7701, 0.7796};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(j.at("rows")[i].at("reference_mean_dice").get<double>(), ref_dice[i]);
    EXPECT_EQ(j.at("rows")[i].at("reference_miou").get<double>(), ref_miou[i]);
  }
  EXPECT_NE(ablation_table(grid).find("0.8635"), std::string::npos);
  EXPECT_EQ(median({3, 1, 2}), 2);
  EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
  EXPECT_THROW(median({}), ValidationError);
}

TEST_F(HarnessDir, GenerateSplitsTenCasesSevenOneTwo) {
  ExperimentConfig cfg = tiny_config(8);
  cfg.data.num_cases = 10;
  cmd_generate(cfg, dir / "ds");
  const json manifest = json::parse(slurp(dir / "ds" / "manifest.json"));
  std::map<std::string, int> counts;
  for (const auto& c : manifest.at("cases")) counts[c.at("split").get<std::string>()]++;
  EXPECT_EQ(counts["train"], 7);
  EXPECT_EQ(counts["val"], 1);
  EXPECT_EQ(counts["test"], 2);
}

TEST_F(HarnessDir, AugmentAppendsEligibleTrainCases) {
  // Seven train cases, two of them with IP or OCR.
  Dataset ds;
  ds.seed = 1;
  ds.config = tiny_config().data;
  ds.config.num_cases = 10;
  for (int i = 0; i < 10; ++i) {
    GenConfig gen = ds.config.gen;
    gen.classes = (i == 2) ? std::vector<int>{1, 3} : (i == 5) ? std::vector<int>{2, 5} : std::vector<int>{1, 2, 4};
    if (i >= 7) gen.classes = {1, 3, 5};
    DatasetCase c;
    c.split = i < 7 ? Split::Train : i < 8 ? Split::Val : Split::Test;
    char id[16];
    std::snprintf(id, sizeof(id), "case_%04d", i);
    c.video = generate_synthetic_case(static_cast<std::uint64_t>(i), gen, id);
    ds.cases.push_back(std::move(c));
  }
  write_dataset(dir / "ds", ds);
  const std::string test_before = slurp(dir / "ds" / "case_0009" / "frame_001.png");
  EXPECT_EQ(cmd_augment(tiny_config(), dir / "ds", ""), 2u);
  const Dataset after = read_dataset(dir / "ds");
  EXPECT_EQ(after.split(Split::Train).size(), 9u);
  EXPECT_EQ(after.split(Split::Test).size(), 2u);
  EXPECT_EQ(slurp(dir / "ds" / "case_0009" / "frame_001.png"), test_before);
  const auto before_dist = class_distribution(std::span<const VideoSample* const>(ds.split(Split::Train)));
  const auto after_dist = class_distribution(std::span<const VideoSample* const>(after.split(Split::Train)));
  EXPECT_GT(after_dist[kIcaProminence], before_dist[kIcaProminence]);

  // Nothing eligible.
  for (DatasetCase& c : ds.cases)
    if (c.split == Split::Train) {
      GenConfig gen = ds.config.gen;
      gen.classes = {1, 2};
      c.video = generate_synthetic_case(1, gen, c.video.case_id);
    }
  write_dataset(dir / "plain", ds);
  EXPECT_THROW(cmd_augment(tiny_config(), dir / "plain", dir / "plain_out"), EligibilityError);
}

TEST_F(HarnessDir, TrainEvalReportPipeline) {
  ExperimentConfig cfg = tiny_config(5);
  cfg.train.epochs = 1;
  cmd_generate(cfg, dir / "ds");
  const TrainResult r = cmd_train(cfg, dir / "ds", dir / "run", nullptr, true);
  for (const char* f : {"model.ckpt", "train_log.csv", "train_summary.json", "loss_curve.png"})
    EXPECT_TRUE(fs::exists(dir / "run" / f)) << f;
  EXPECT_EQ(slurp(dir / "run" / "train_log.csv"), format_train_log(r.log));
  EXPECT_EQ(read_png_rgb(dir / "run" / "loss_curve.png").width, 320);

  const MetricsReport a = cmd_eval(dir / "run" / "model.ckpt", dir / "ds", Split::Test, dir / "run");
  const MetricsReport b = cmd_eval(dir / "run" / "model.ckpt", dir / "ds", Split::Test, dir / "run2", cfg.model);
  EXPECT_EQ(a.dice.mean, b.dice.mean);
  const json j = json::parse(slurp(dir / "run" / "metrics_test.json"));
  EXPECT_EQ(j.at("dice").size(), 6u);
  EXPECT_TRUE(j.contains("mean_dice"));
  EXPECT_TRUE(j.contains("miou"));
  EXPECT_TRUE(fs::exists(dir / "run" / "metrics_test.txt"));

  ModelConfig other = cfg.model;
  other.lora_rank = 2;
  EXPECT_THROW(cmd_eval(dir / "run" / "model.ckpt", dir / "ds", Split::Test, dir / "run3", other), VersionError);

  const std::string report = cmd_report(dir / "run");
  EXPECT_EQ(report, slurp(dir / "run" / "report.txt"));
  EXPECT_NE(report.find("mIoU"), std::string::npos);
  EXPECT_THROW(cmd_report(dir / "missing"), IoError);
}

}  // namespace
}  // namespace vidseg
