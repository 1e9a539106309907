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

#include "vidseg/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "vidseg/checkpoint.hpp"
#include "vidseg/dataset_io.hpp"
#include "vidseg/errors.hpp"
#include "vidseg/ops.hpp"
#include "vidseg/optim.hpp"
#include "vidseg/png_io.hpp"
#include "vidseg/rng.hpp"

namespace vidseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kShuffleSalt = 0x5F1E;
constexpr std::uint64_t kAugmentSalt = 0xA4C;

// Mean Dice / mIoU at the reference scale, rows (-,-), (-,+), (+,-), (+,+).
constexpr double kReferenceDice[4] = {0.8397, 0.8531, 0.8559, 0.8635};
constexpr double kReferenceMiou[4] = {0.7681, 0.7697, 0.7701, 0.7796};

struct Snapshot {
  std::vector<std::vector<double>> params;
  NamedTensors buffers;

  static Snapshot take(const Model& model) {
    Snapshot s;
    for (const auto& [name, t] : model.named_parameters()) {
      s.params.emplace_back(t.values().begin(), t.values().end());
    }
    for (const auto& [name, t] : model.named_buffers()) s.buffers.emplace_back(name, t.clone());
    return s;
  }

  void restore(Model& model) const {
    const NamedTensors params_now = model.named_parameters();
    for (std::size_t i = 0; i < params_now.size(); ++i) {
      Tensor t = params_now[i].second;
      std::copy(params[i].begin(), params[i].end(), t.mutable_values().begin());
    }
    model.load_buffers(buffers);
  }
};

std::vector<double> one_hot(const std::vector<const LabelMap*>& labels, int classes) {
  const int h = labels[0]->height, w = labels[0]->width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> out(labels.size() * classes * plane, 0.0);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      const int c = labels[n]->labels[i];
      out[(n * classes + c) * plane + i] = 1.0;
    }
  }
  return out;
}

bool finite(const LossBreakdown& b) {
  return std::isfinite(b.focal) && std::isfinite(b.dice) && std::isfinite(b.mae) && std::isfinite(b.ce) &&
         std::isfinite(b.total);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

Dataset without_augmented(const Dataset& ds) {
  Dataset out;
  out.seed = ds.seed;
  out.config = ds.config;
  for (const DatasetCase& c : ds.cases) {
    if (!is_augmented(c.video)) out.cases.push_back(c);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Training

std::vector<Tensor> trainable_parameters(const Model& model, const TrainConfig& config) {
  std::vector<Tensor> out;
  for (const auto& [name, t] : model.named_parameters()) {
    const bool frozen = (config.freeze_fusion && name.rfind("fusion.", 0) == 0) ||
                        (config.freeze_decoder && name.rfind("decoder.", 0) == 0);
    if (!frozen) out.push_back(t);
  }
  return out;
}

TrainResult train_model(const ExperimentConfig& config, const Dataset& dataset, const TrainOptions& options) {
  config.validate();
  const TrainConfig& tc = config.train;
  auto model = std::make_unique<Model>(config.model, config.seed);

  std::vector<const VideoSample*> train_cases;
  for (const DatasetCase& c : dataset.cases) {
    if (c.split != Split::Train) continue;
    if (is_augmented(c.video) && !config.augmentation_enabled) continue;
    train_cases.push_back(&c.video);
  }
  if (train_cases.empty()) throw ValidationError("dataset has no training cases");
  const std::size_t frames = train_cases[0]->size();
  for (const VideoSample* v : train_cases) {
    if (v->size() != frames || frames == 0) throw ValidationError("training cases must share one nonzero length");
    if (v->frames[0].width != config.model.input_width || v->frames[0].height != config.model.input_height) {
      throw DimensionError("case " + v->case_id + " does not match the model input size");
    }
  }
  const std::vector<const VideoSample*> val_cases = dataset.split(Split::Val);

  std::vector<PromptSchedule> schedules;
  for (const VideoSample* v : train_cases) schedules.push_back(make_prompt_schedule(*v, config.model.prompt_interval));

  // Frozen tensors stop collecting gradients altogether.
  const std::vector<Tensor> params = trainable_parameters(*model, tc);
  for (auto& [name, t] : model->named_parameters()) {
    Tensor handle = t;
    handle.set_requires_grad(std::find_if(params.begin(), params.end(), [&](const Tensor& p) {
                               return p.node() == t.node();
                             }) != params.end());
  }
  AdamW optimizer(params, tc.optimizer);

  TrainResult result;
  Rng shuffle(mix_seed(config.seed, kShuffleSalt));
  Snapshot best = Snapshot::take(*model);
  // Weights that last produced a finite loss.
  Snapshot last_good = best;
  double best_dice = -1.0;
  int step = 0;
  bool capped = false;
  for (int epoch = 1; epoch <= tc.epochs && !capped; ++epoch) {
    model->set_training(true);
    std::vector<std::size_t> order(train_cases.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tc.batch_size)) {
      if (tc.max_steps > 0 && step >= tc.max_steps) {
        capped = true;
        break;
      }
      ++step;
      if (options.before_step) options.before_step(step, *model);
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
      std::vector<Tensor> clip_frames;
      std::vector<std::vector<FramePrompts>> clip_prompts;
      std::vector<std::vector<double>> targets;
      for (std::size_t t = 0; t < frames; ++t) {
        std::vector<const Image*> imgs;
        std::vector<const LabelMap*> labs;
        std::vector<FramePrompts> prompts;
        for (std::size_t b = start; b < end; ++b) {
          imgs.push_back(&train_cases[order[b]]->frames[t]);
          labs.push_back(&train_cases[order[b]]->labels[t]);
          prompts.push_back(schedules[order[b]][t]);
        }
        clip_frames.push_back(frames_to_tensor(imgs));
        clip_prompts.push_back(std::move(prompts));
        targets.push_back(one_hot(labs, config.model.num_classes));
      }

      // The weights that produced a non-finite value are suspect.
      auto abort = [&](const std::string& what) {
        last_good.restore(*model);
        std::string where = "not written";
        if (!options.abort_checkpoint.empty()) {
          save_checkpoint(options.abort_checkpoint, *model,
                          json({{"aborted_at_step", step}, {"epoch", epoch}}).dump());
          where = options.abort_checkpoint.string();
        }
        throw NumericError(what + " at step " + std::to_string(step) + " (epoch " + std::to_string(epoch) +
                           "); last-good checkpoint: " + where);
      };

      Tensor loss;
      LossBreakdown mean_bd;
      const double inv = 1.0 / static_cast<double>(frames);
      try {
        const std::vector<MaskPrediction> preds = model->forward_clip(clip_frames, clip_prompts);
        for (std::size_t t = 0; t < frames; ++t) {
          LossBreakdown bd;
          Tensor term = composite_loss(preds[t].probs, targets[t], tc.loss_weights, tc.focal_gamma, &bd);
          loss = loss.defined() ? nn::add(loss, term) : term;
          mean_bd.focal += bd.focal * inv;
          mean_bd.dice += bd.dice * inv;
          mean_bd.mae += bd.mae * inv;
          mean_bd.ce += bd.ce * inv;
        }
        loss = nn::scale(loss, inv);
        mean_bd.total = loss.item();
      } catch (const NumericError& e) {
        abort(std::string("non-finite forward pass (") + e.what() + ")");
      }
      if (!finite(mean_bd)) {
        abort("non-finite loss");
      }
      result.log.push_back({step, epoch, mean_bd});
      last_good = Snapshot::take(*model);
      optimizer.zero_grad();
      loss.backward();
      optimizer.step();
    }

    double val_dice = 0.0;
    if (!val_cases.empty()) {
      val_dice = evaluate(*model, val_cases).dice.mean;
    }
    result.val_mean_dice.push_back(val_dice);
    if (val_dice > best_dice) {
      best_dice = val_dice;
      best = Snapshot::take(*model);
      result.best_epoch = epoch;
    }
    if (options.progress) {
      char buf[160];
      const LossBreakdown& last = result.log.empty() ? LossBreakdown{} : result.log.back().loss;
      std::snprintf(buf, sizeof(buf), "epoch %d step %d loss %.5f val_dice %.4f\n", epoch, step, last.total,
                    val_dice);
      *options.progress << buf << std::flush;
    }
  }
  best.restore(*model);
  model->set_training(false);
  result.best_val_dice = best_dice;
  result.model = std::move(model);
  return result;
}

std::string format_train_log(const std::vector<StepRecord>& log) {
  std::string out = "step,epoch,focal,dice,mae,ce,total\n";
  char buf[256];
  for (const StepRecord& r : log) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step, r.epoch, r.loss.focal,
                  r.loss.dice, r.loss.mae, r.loss.ce, r.loss.total);
    out += buf;
  }
  return out;
}

Image render_loss_curve(const std::vector<StepRecord>& log, int width, int height) {
  Image img(width, height);
  std::fill(img.rgb.begin(), img.rgb.end(), std::uint8_t{255});
  const int margin = 8;
  for (int x = margin; x < width - margin; ++x) {
    std::uint8_t* p = img.pixel(x, height - margin);
    p[0] = p[1] = p[2] = 0;
  }
  for (int y = margin; y <= height - margin; ++y) {
    std::uint8_t* p = img.pixel(margin, y);
    p[0] = p[1] = p[2] = 0;
  }
  if (log.empty()) return img;
  double hi = 0.0;
  for (const StepRecord& r : log) hi = std::max(hi, r.loss.total);
  if (!(hi > 0.0)) hi = 1.0;
  const int plot_w = width - 2 * margin - 1, plot_h = height - 2 * margin - 1;
  auto point = [&](std::size_t i) {
    const double fx = log.size() > 1 ? static_cast<double>(i) / (log.size() - 1) : 0.0;
    return std::pair<double, double>{margin + 1 + fx * plot_w, height - margin - 1 - log[i].loss.total / hi * plot_h};
  };
  for (std::size_t i = 0; i + 1 < log.size() || i == 0; ++i) {
    const auto [x0, y0] = point(i);
    const auto [x1, y1] = log.size() > 1 ? point(i + 1) : point(i);
    const int n = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
    for (int k = 0; k <= n; ++k) {
      const int x = static_cast<int>(std::lround(x0 + (x1 - x0) * k / n));
      const int y = static_cast<int>(std::lround(y0 + (y1 - y0) * k / n));
      if (x < 0 || y < 0 || x >= width || y >= height) continue;
      std::uint8_t* p = img.pixel(x, y);
      p[0] = 200;
      p[1] = 30;
      p[2] = 30;
    }
    if (log.size() == 1) break;
  }
  return img;
}

// ---------------------------------------------------------------------------
// Evaluation

ConfusionCounts evaluate_counts(Model& model, const std::vector<const VideoSample*>& cases,
                                bool prompted_frames_only) {
  const bool was_training = model.training();
  model.set_training(false);
  NoGradGuard no_grad;
  ConfusionCounts counts;
  for (const VideoSample* v : cases) {
    const PromptSchedule schedule = make_prompt_schedule(*v, model.config().prompt_interval);
    const std::vector<MaskPrediction> preds = model.forward_video(*v, schedule);
    for (std::size_t t = 0; t < v->size(); ++t) {
      if (prompted_frames_only && !schedule[t].prompted) continue;
      accumulate(counts, preds[t].labels(0), v->labels[t]);
    }
  }
  model.set_training(was_training);
  return counts;
}

MetricsReport evaluate(Model& model, const std::vector<const VideoSample*>& cases, const EvalOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  const ConfusionCounts counts = evaluate_counts(model, cases, options.prompted_frames_only);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  MetricsReport report = make_report(counts, options.averaging);
  std::size_t frames = 0;
  for (const VideoSample* v : cases) frames += v->size();
  report.frames_per_second = secs > 0.0 ? static_cast<double>(frames) / secs : 0.0;
  return report;
}

// ---------------------------------------------------------------------------
// Ablation

double median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<AblationCell> run_ablation(const ExperimentConfig& config, const Dataset& dataset,
                                       std::ostream* progress) {
  config.validate();
  const Dataset plain = without_augmented(dataset);
  Dataset augmented = plain;
  augment_dataset(augmented, mix_seed(config.seed, kAugmentSalt));
  const std::vector<const VideoSample*> test = plain.split(Split::Test);
  if (test.empty()) throw ValidationError("ablation needs a test split");

  std::vector<AblationCell> grid;
  for (bool fusion : {false, true}) {
    for (bool aug : {false, true}) {
      AblationCell cell;
      cell.fusion = fusion;
      cell.augmentation = aug;
      for (int i = 0; i < config.ablation_seeds; ++i) {
        ExperimentConfig cfg = config;
        cfg.seed = config.seed + static_cast<std::uint64_t>(i);
        cfg.model.fusion_enabled = fusion;
        cfg.augmentation_enabled = aug;
        TrainResult r = train_model(cfg, aug ? augmented : plain);
        const MetricsReport rep = evaluate(*r.model, test);
        cell.mean_dice.push_back(rep.dice.mean);
        cell.miou.push_back(rep.iou.mean);
        if (progress) {
          char buf[160];
          std::snprintf(buf, sizeof(buf), "fusion=%d aug=%d seed=%llu mean_dice=%.4f miou=%.4f\n", fusion, aug,
                        static_cast<unsigned long long>(cfg.seed), rep.dice.mean, rep.iou.mean);
          *progress << buf << std::flush;
        }
      }
      cell.median_dice = median(cell.mean_dice);
      cell.median_miou = median(cell.miou);
      grid.push_back(std::move(cell));
    }
  }
  return grid;
}

std::string ablation_json(const std::vector<AblationCell>& grid) {
  json rows = json::array();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const AblationCell& c = grid[i];
    json row = {{"fusion", c.fusion},
                {"augmentation", c.augmentation},
                {"mean_dice", c.mean_dice},
                {"miou", c.miou},
                {"median_mean_dice", c.median_dice},
                {"median_miou", c.median_miou}};
    if (i < 4) {
      row["reference_mean_dice"] = kReferenceDice[i];
      row["reference_miou"] = kReferenceMiou[i];
    }
    rows.push_back(row);
  }
  return json({{"rows", rows}}).dump(2);
}

std::string ablation_table(const std::vector<AblationCell>& grid) {
  std::ostringstream out;
  out << "fusion  aug   mDice   mIoU    (reference mDice / mIoU)\n";
  char buf[128];
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const AblationCell& c = grid[i];
    std::snprintf(buf, sizeof(buf), "  %c      %c   %6.4f  %6.4f", c.fusion ? '+' : '-', c.augmentation ? '+' : '-',
                  c.median_dice, c.median_miou);
    out << buf;
    if (i < 4) {
      std::snprintf(buf, sizeof(buf), "  (%6.4f / %6.4f)", kReferenceDice[i], kReferenceMiou[i]);
      out << buf;
    }
    out << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Commands

Dataset cmd_generate(const ExperimentConfig& config, const fs::path& out) {
  config.validate();
  Dataset ds = generate_dataset(config.seed, config.data);
  write_dataset(out, ds);
  return ds;
}

std::size_t cmd_augment(const ExperimentConfig& config, const fs::path& dataset_dir, const fs::path& out) {
  Dataset ds = read_dataset(dataset_dir);
  const bool eligible = std::any_of(ds.cases.begin(), ds.cases.end(), [](const DatasetCase& c) {
    return c.split == Split::Train && !is_augmented(c.video) &&
           (c.video.present[kIcaProminence] || c.video.present[kOpticCarotidRecess]);
  });
  if (!eligible) throw EligibilityError("no training case contains IP or OCR");
  const std::size_t before = ds.cases.size();
  const std::size_t added = augment_dataset(ds, mix_seed(config.seed, kAugmentSalt));
  std::error_code ec;
  const bool in_place = out.empty() || fs::equivalent(out, dataset_dir, ec);
  if (in_place) {
    for (std::size_t i = before; i < ds.cases.size(); ++i) {
      write_case(dataset_dir / ds.cases[i].video.case_id, ds.cases[i].video);
    }
    write_manifest(dataset_dir, ds);
  } else {
    write_dataset(out, ds);
  }
  return added;
}

TrainResult cmd_train(const ExperimentConfig& config, const fs::path& dataset_dir, const fs::path& out,
                      std::ostream* progress, bool loss_curve) {
  const Dataset ds = read_dataset(dataset_dir);
  ensure_dir(out);
  TrainOptions opts;
  opts.progress = progress;
  opts.abort_checkpoint = out / "last_good.ckpt";
  TrainResult r = train_model(config, ds, opts);
  const json meta = {{"seed", config.seed},
                     {"steps", r.log.size()},
                     {"best_epoch", r.best_epoch},
                     {"best_val_mean_dice", r.best_val_dice}};
  save_checkpoint(out / "model.ckpt", *r.model, meta.dump());
  write_text(out / "train_log.csv", format_train_log(r.log));
  const json summary = {{"best_epoch", r.best_epoch},
                        {"best_val_mean_dice", r.best_val_dice},
                        {"val_mean_dice", r.val_mean_dice},
                        {"steps", r.log.size()},
                        {"config", json::parse(to_json(config))}};
  write_text(out / "train_summary.json", summary.dump(2) + "\n");
  if (loss_curve) write_png_rgb(out / "loss_curve.png", render_loss_curve(r.log));
  return r;
}

MetricsReport cmd_eval(const fs::path& checkpoint, const fs::path& dataset_dir, Split split, const fs::path& out,
                       const std::optional<ModelConfig>& model_config, Averaging averaging,
                       bool prompted_frames_only) {
  std::unique_ptr<Model> model;
  if (model_config) {
    model = std::make_unique<Model>(*model_config, 0);
    load_checkpoint_into(checkpoint, *model);
  } else {
    model = std::make_unique<Model>(load_checkpoint(checkpoint));
  }
  const Dataset ds = read_dataset(dataset_dir);
  const std::vector<const VideoSample*> cases = ds.split(split);
  if (cases.empty()) throw ValidationError(std::string("split is empty: ") + to_string(split));
  EvalOptions opts;
  opts.averaging = averaging;
  opts.prompted_frames_only = prompted_frames_only;
  MetricsReport report = evaluate(*model, cases, opts);
  ensure_dir(out);
  const std::string stem = std::string("metrics_") + to_string(split) + (prompted_frames_only ? "_prompted" : "");
  write_text(out / (stem + ".json"), report_json(report) + "\n");
  write_text(out / (stem + ".txt"), report_table(report));
  return report;
}

std::vector<AblationCell> cmd_ablate(const ExperimentConfig& config, const fs::path& dataset_dir, const fs::path& out,
                                     std::ostream* progress) {
  const Dataset ds = read_dataset(dataset_dir);
  std::vector<AblationCell> grid = run_ablation(config, ds, progress);
  ensure_dir(out);
  write_text(out / "ablation.json", ablation_json(grid) + "\n");
  write_text(out / "ablation.txt", ablation_table(grid));
  return grid;
}

std::string cmd_report(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::ostringstream out;
  bool any = false;
  for (const fs::path& p : files) {
    const std::string name = p.filename().string();
    if (name.rfind("metrics_", 0) == 0 && p.extension() == ".json") {
      json j;
      try {
        j = json::parse(read_text(p));
        MetricsReport r;
        r.dice.mean = j.at("mean_dice").get<double>();
        r.iou.mean = j.at("miou").get<double>();
        r.frames = j.at("frames").get<std::uint64_t>();
        r.frames_per_second = j.at("frames_per_second").get<double>();
        for (int c = 1; c < kNumClasses; ++c) {
          const json& d = j.at("dice").at(class_name(c));
          if (!d.is_null()) r.dice.per_class[c] = d.get<double>();
        }
        out << name.substr(8, name.size() - 13) << " (" << r.frames << " frames, "
            << static_cast<long long>(std::lround(r.frames_per_second)) << " fps)\n"
            << report_table(r) << "\n";
      } catch (const json::exception& e) {
        throw ValidationError(p.string() + ": " + e.what());
      }
      any = true;
    } else if (name == "ablation.txt" || name == "train_log.csv") {
      if (name == "ablation.txt") {
        out << "ablation (median over seeds)\n" << read_text(p) << "\n";
      } else {
        std::istringstream in(read_text(p));
        std::string line, first, last;
        std::getline(in, line);
        std::size_t steps = 0;
        while (std::getline(in, line)) {
          if (steps++ == 0) first = line;
          last = line;
        }
        out << "training: " << steps << " steps\n  first " << first << "\n  last  " << last << "\n\n";
      }
      any = true;
    }
  }
  if (!any) throw IoError("no metrics, ablation or training outputs in " + dir.string());
  write_text(dir / "report.txt", out.str());
  return out.str();
}

}  // namespace vidseg
