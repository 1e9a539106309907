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

#include "vidseg/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "vidseg/errors.hpp"
#include "vidseg/ops.hpp"

namespace vidseg {

namespace {

constexpr int kAnatomyClasses = 6;
constexpr int kBoxFeatures = 20;

Tensor uniform_param(Shape shape, double bound, Rng& rng) {
  std::vector<double> v(numel(shape));
  for (double& e : v) e = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor he_conv(int out, int in, int k, Rng& rng) {
  return uniform_param({out, in, k, k}, std::sqrt(6.0 / (in * k * k)), rng);
}

Tensor zeros_param(Shape shape) { return Tensor::zeros(std::move(shape), true); }

// Fraction of each grid cell covered by the box.
void rasterize_box(const BoxPrompt& box, int gh, int gw, double* out) {
  for (int y = 0; y < gh; ++y) {
    const double y0 = static_cast<double>(y) / gh, y1 = static_cast<double>(y + 1) / gh;
    const double oy = std::max(0.0, std::min(y1, box.y_max) - std::max(y0, box.y_min));
    for (int x = 0; x < gw; ++x) {
      const double x0 = static_cast<double>(x) / gw, x1 = static_cast<double>(x + 1) / gw;
      const double ox = std::max(0.0, std::min(x1, box.x_max) - std::max(x0, box.x_min));
      out[y * gw + x] = (ox * gw) * (oy * gh);
    }
  }
}

constexpr double kPromptExclusion = 50.0;

// log(box-blur3x3(p) + floor) per channel; a constant (no gradient).
Tensor mask_prior(const Tensor& probs) {
  constexpr double kFloor = 0.02;
  const int n = probs.dim(0), c = probs.dim(1), h = probs.dim(2), w = probs.dim(3);
  const auto src = probs.values();
  std::vector<double> out(src.size());
  for (int p = 0; p < n * c; ++p) {
    const double* in = src.data() + static_cast<std::size_t>(p) * h * w;
    double* o = out.data() + static_cast<std::size_t>(p) * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        int cnt = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || xx < 0 || yy >= h || xx >= w) continue;
            acc += in[yy * w + xx];
            ++cnt;
          }
        }
        o[y * w + x] = std::log(acc / cnt + kFloor);
      }
    }
  }
  return Tensor::from(probs.shape(), std::move(out));
}

void box_features(const BoxPrompt& box, double* f) {
  const double c[4] = {box.x_min, box.y_min, box.x_max, box.y_max};
  int i = 0;
  for (double v : c) f[i++] = v;
  for (double v : c) {
    for (int k = 1; k <= 2; ++k) {
      f[i++] = std::sin(M_PI * k * v);
      f[i++] = std::cos(M_PI * k * v);
    }
  }
}

void validate_prompts(const FramePrompts& fp) {
  std::set<int> seen;
  for (const BoxPrompt& b : fp.boxes) {
    if (b.class_id < 1 || b.class_id > kAnatomyClasses) {
      throw ValidationError("prompt class " + std::to_string(b.class_id) + " outside 1..6");
    }
    if (!seen.insert(b.class_id).second) {
      throw ValidationError("duplicate prompt for class " + std::to_string(b.class_id));
    }
    if (!(b.x_min < b.x_max && b.y_min < b.y_max) || b.x_min < 0.0 || b.y_min < 0.0 ||
        b.x_max > 1.0 || b.y_max > 1.0) {
      throw ValidationError("degenerate prompt box for class " + std::to_string(b.class_id));
    }
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (input_height <= 0 || input_width <= 0 || input_height % 16 != 0 || input_width % 16 != 0) {
    throw ConfigError("input size must be positive and divisible by 16");
  }
  if (width_s4 <= 0 || width_s8 <= 0 || width_s16 <= 0 || head_channels <= 0) {
    throw ConfigError("channel widths must be positive");
  }
  if (num_classes != kNumClasses) throw ConfigError("num_classes must be 7 (background + 6)");
  if (lora_rank <= 0 || lora_rank >= width_s4 || lora_rank >= width_s8) {
    throw ConfigError("LoRA rank must be positive and below both fusion widths");
  }
  if (attention_heads <= 0 || width_s16 % attention_heads != 0) {
    throw ConfigError("attention heads must divide width_s16");
  }
  if (pointer_dim != width_s16) throw ConfigError("pointer_dim must equal width_s16");
  if (prompt_interval < 1) throw ConfigError("prompt interval must be >= 1");
  if (memory_capacity < 0) throw ConfigError("memory capacity must be nonnegative");
}

LabelMap MaskPrediction::labels(int b) const {
  const int c = probs.dim(1), h = probs.dim(2), w = probs.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  LabelMap out(w, h);
  auto pv = probs.values();
  const std::size_t base = static_cast<std::size_t>(b) * c * plane;
  for (std::size_t i = 0; i < plane; ++i) {
    int best = 0;
    for (int k = 1; k < c; ++k) {
      if (pv[base + k * plane + i] > pv[base + best * plane + i]) best = k;
    }
    out.labels[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

BoxPrompt box_from_label(const LabelMap& label, int class_id) {
  int x0 = label.width, y0 = label.height, x1 = -1, y1 = -1;
  for (int y = 0; y < label.height; ++y) {
    for (int x = 0; x < label.width; ++x) {
      if (label.at(x, y) == class_id) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
    }
  }
  if (x1 < 0) throw ValidationError("class " + std::to_string(class_id) + " absent from label");
  return {class_id, static_cast<double>(x0) / label.width, static_cast<double>(y0) / label.height,
          static_cast<double>(x1 + 1) / label.width, static_cast<double>(y1 + 1) / label.height};
}

PromptSchedule make_prompt_schedule(const VideoSample& video, int interval) {
  if (interval < 1) throw ConfigError("prompt interval must be >= 1");
  PromptSchedule schedule(video.size());
  for (std::size_t t = 0; t < video.size(); t += interval) {
    schedule[t].prompted = true;
    std::array<bool, kNumClasses> seen{};
    for (std::uint8_t v : video.labels[t].labels) seen[v] = true;
    for (int c = 1; c < kNumClasses; ++c) {
      if (seen[c]) schedule[t].boxes.push_back(box_from_label(video.labels[t], c));
    }
  }
  return schedule;
}

Tensor frames_to_tensor(const std::vector<const Image*>& frames) {
  if (frames.empty()) throw DimensionError("no frames");
  const int h = frames[0]->height, w = frames[0]->width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> v(frames.size() * 3 * plane);
  for (std::size_t b = 0; b < frames.size(); ++b) {
    if (frames[b]->height != h || frames[b]->width != w) {
      throw DimensionError("frames in a batch differ in size");
    }
    for (std::size_t i = 0; i < plane; ++i) {
      for (int c = 0; c < 3; ++c) {
        v[(b * 3 + c) * plane + i] = (frames[b]->rgb[i * 3 + c] / 255.0 - 0.5) / 0.25;
      }
    }
  }
  return Tensor::from({static_cast<int>(frames.size()), 3, h, w}, std::move(v));
}

Model::Model(ModelConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const int c4 = config_.width_s4, c8 = config_.width_s8, c16 = config_.width_s16;
  const int ch = config_.head_channels;

  enc_stem_ = {he_conv(c4, 3, 3, rng), zeros_param({c4})};
  enc_down4_ = {he_conv(c4, c4, 3, rng), zeros_param({c4})};
  enc_ref4_ = {he_conv(c4, c4, 3, rng), zeros_param({c4})};
  enc_down8_ = {he_conv(c8, c4, 3, rng), zeros_param({c8})};
  enc_ref8_ = {he_conv(c8, c8, 3, rng), zeros_param({c8})};
  enc_down16_ = {he_conv(c16, c8, 3, rng), zeros_param({c16})};
  enc_ref16_ = {he_conv(c16, c16, 3, rng), zeros_param({c16})};

  prompt_w_ = uniform_param({kBoxFeatures, c16}, std::sqrt(3.0 / kBoxFeatures), rng);
  prompt_b_ = zeros_param({c16});
  class_emb_ = uniform_param({kAnatomyClasses, c16}, 0.5, rng);
  no_prompt_emb_ = uniform_param({kAnatomyClasses, c16}, 0.1, rng);

  const double attn_bound = std::sqrt(3.0 / c16);
  attn_q_ = uniform_param({c16, c16}, attn_bound, rng);
  attn_k_ = uniform_param({c16, c16}, attn_bound, rng);
  attn_v_ = uniform_param({c16, c16}, attn_bound, rng);
  attn_o_ = uniform_param({c16, c16}, 0.1 * attn_bound, rng);
  for (int p = 0; p < MemoryConfig::kPromptCapacity + config_.memory_capacity; ++p) {
    context_pos_.push_back(uniform_param({c16}, 0.1, rng));
  }
  pointer_type_ = uniform_param({c16}, 0.1, rng);
  mem_mask_w_ = uniform_param({c16, config_.num_classes}, std::sqrt(3.0 / config_.num_classes), rng);

  up8_ = {uniform_param({c16, c8, 2, 2}, std::sqrt(6.0 / c16), rng), zeros_param({c8})};
  up4_ = {uniform_param({c8, c4, 2, 2}, std::sqrt(6.0 / c8), rng), zeros_param({c4})};
  up1_ = {uniform_param({c4, ch, 4, 4}, std::sqrt(6.0 / c4), rng), zeros_param({ch})};
  detail_ = {he_conv(ch, 3, 3, rng), zeros_param({ch})};
  refine_ = {he_conv(ch, ch, 3, rng), zeros_param({ch})};
  foreground_w_ = uniform_param({ch}, std::sqrt(3.0 / ch) * 0.1, rng);
  classifier_ = {uniform_param({config_.num_classes, ch, 1, 1}, std::sqrt(3.0 / ch), rng),
                 zeros_param({config_.num_classes})};
  hyper_w_ = uniform_param({c16, ch}, std::sqrt(3.0 / c16) * 0.1, rng);
  box_gain_ = Tensor::full({1}, 4.0, true);
  mask_gain_ = Tensor::full({1}, 3.0, true);

  fusion_s8_ = FusionBlockParams::create(c8, config_.lora_rank, config_.lora_alpha, rng,
                                         config_.alpha_trainable);
  fusion_s8_.lora_enabled = config_.lora_s8;
  fusion_s4_ = FusionBlockParams::create(c4, config_.lora_rank, config_.lora_alpha, rng,
                                         config_.alpha_trainable);
  fusion_s4_.lora_enabled = config_.lora_s4;
  set_training(true);
}

MemoryConfig Model::memory_config() const {
  MemoryConfig mc;
  mc.prediction_capacity = config_.memory_capacity;
  mc.pointer_dim = config_.pointer_dim;
  return mc;
}

void Model::set_training(bool training) {
  training_ = training;
  const BatchNormMode mode = training ? BatchNormMode::Train : BatchNormMode::Eval;
  for (FusionBlockParams* f : {&fusion_s8_, &fusion_s4_}) {
    if (f->residual.bn.mode != BatchNormMode::Identity) f->residual.bn.mode = mode;
    if (f->main.bn.mode != BatchNormMode::Identity) f->main.bn.mode = mode;
  }
}

EncoderFeatures Model::encode_image(const Tensor& frames) const {
  if (frames.rank() != 4 || frames.dim(1) != 3 || frames.dim(2) != config_.input_height ||
      frames.dim(3) != config_.input_width) {
    throw DimensionError("encode_image: expected (N, 3, " + std::to_string(config_.input_height) +
                         ", " + std::to_string(config_.input_width) + "), got " +
                         shape_str(frames.shape()));
  }
  auto conv = [](const Tensor& x, const Conv& c, int stride) {
    return nn::relu(nn::conv2d(x, c.weight, c.bias, stride, 1));
  };
  Tensor e = conv(frames, enc_stem_, 2);
  Tensor s4 = conv(conv(e, enc_down4_, 2), enc_ref4_, 1);
  Tensor s8 = conv(conv(s4, enc_down8_, 2), enc_ref8_, 1);
  Tensor s16 = conv(conv(s8, enc_down16_, 2), enc_ref16_, 1);
  return {FeatureMap(s4, 4), FeatureMap(s8, 8), FeatureMap(s16, 16)};
}

PromptEmbedding Model::encode_prompt(const std::vector<FramePrompts>& batch) const {
  if (batch.empty()) throw ValidationError("encode_prompt: empty batch");
  const int n = static_cast<int>(batch.size());
  const int h = config_.input_height, w = config_.input_width;
  const int h16 = h / 16, w16 = w / 16;
  std::vector<double> feats(static_cast<std::size_t>(n) * kAnatomyClasses * kBoxFeatures, 0.0);
  std::vector<double> on(static_cast<std::size_t>(n) * kAnatomyClasses, 0.0);
  std::vector<double> cov(static_cast<std::size_t>(n) * config_.num_classes * h * w, 0.0);
  std::vector<double> cov16(static_cast<std::size_t>(n) * kAnatomyClasses * h16 * w16, 0.0);
  std::vector<double> dense(cov.size(), 0.0);
  for (int b = 0; b < n; ++b) {
    validate_prompts(batch[b]);
    for (const BoxPrompt& box : batch[b].boxes) {
      const int k = box.class_id - 1;
      const std::size_t slot = static_cast<std::size_t>(b) * kAnatomyClasses + k;
      on[slot] = 1.0;
      box_features(box, feats.data() + slot * kBoxFeatures);
      rasterize_box(box, h, w,
                    cov.data() + (static_cast<std::size_t>(b) * config_.num_classes + box.class_id) * h * w);
      rasterize_box(box, h16, w16, cov16.data() + slot * h16 * w16);
    }
    if (!batch[b].prompted) continue;
    for (int c = 1; c < config_.num_classes; ++c) {
      const std::size_t base = (static_cast<std::size_t>(b) * config_.num_classes + c) * h * w;
      for (int i = 0; i < h * w; ++i) dense[base + i] = std::min(cov[base + i], 1.0) - 1.0;
    }
  }
  Tensor f = Tensor::from({n, kAnatomyClasses, kBoxFeatures}, std::move(feats));
  PromptEmbedding pe;
  pe.sparse = nn::select_embedding(nn::linear(f, prompt_w_, prompt_b_), class_emb_, no_prompt_emb_, on);
  pe.coverage = Tensor::from({n, config_.num_classes, h, w}, std::move(cov));
  pe.dense = Tensor::from({n, config_.num_classes, h, w}, std::move(dense));
  pe.coverage_s16 = Tensor::from({n, kAnatomyClasses, h16, w16}, std::move(cov16));
  return pe;
}

FeatureMap Model::memory_attend(const FeatureMap& s16, const std::vector<MemoryEntry>& context,
                                std::vector<double>* attention_weights) const {
  if (context.empty()) {
    if (attention_weights) attention_weights->clear();
    return s16;
  }
  const int n = s16.batch(), c = s16.channels();
  if (c != config_.width_s16) throw ConfigError("memory_attend: query width mismatch");
  if (context.size() > context_pos_.size()) throw ConfigError("memory_attend: context too long");
  std::vector<Tensor> tokens;
  for (std::size_t p = 0; p < context.size(); ++p) {
    const MemoryEntry& e = context[p];
    if (!e.spatial_features.data.defined() || e.spatial_features.data.shape() != s16.data.shape()) {
      throw ConfigError("memory_attend: context entry features do not match query shape " +
                        shape_str(s16.data.shape()));
    }
    if (e.object_pointer.shape() != Shape{n, config_.pointer_dim}) {
      throw ConfigError("memory_attend: object pointer shape " + shape_str(e.object_pointer.shape()));
    }
    tokens.push_back(nn::add_row(nn::to_tokens(e.spatial_features.data), context_pos_[p]));
    Tensor ptr = nn::reshape(e.object_pointer, {n, 1, config_.pointer_dim});
    tokens.push_back(nn::add_row(nn::add_row(ptr, context_pos_[p]), pointer_type_));
  }
  Tensor kv = nn::concat(tokens);
  Tensor q = nn::linear(nn::to_tokens(s16.data), attn_q_, Tensor());
  Tensor k = nn::linear(kv, attn_k_, Tensor());
  Tensor v = nn::linear(kv, attn_v_, Tensor());
  Tensor att = nn::attention(q, k, v, config_.attention_heads, attention_weights);
  Tensor out = nn::from_tokens(nn::linear(att, attn_o_, Tensor()), s16.height(), s16.width());
  return {nn::add(s16.data, out), s16.stride};
}

Tensor Model::fuse_skip(const Tensor& high, const Tensor& up, FusionBlockParams& block, int stride) {
  if (high.shape() != up.shape()) {
    throw DimensionError("decode_masks: skip " + shape_str(high.shape()) + " vs upsampled " +
                         shape_str(up.shape()));
  }
  if (!config_.fusion_enabled) return nn::add(high, up);
  return fusion_forward(FeatureMap(high, stride), FeatureMap(up, stride), block).value.data;
}

MaskPrediction Model::decode_masks(const FeatureMap& attended_s16, const EncoderFeatures& feats,
                                   const PromptEmbedding& prompts, const Tensor& frames,
                                   const Tensor& memory_mask) {
  const int n = attended_s16.batch();
  Tensor x16 = nn::add(attended_s16.data, nn::mask_embed(prompts.coverage_s16, prompts.sparse));
  Tensor u8 = nn::relu(nn::conv_transpose2d(x16, up8_.weight, up8_.bias, 2));
  Tensor y8 = fuse_skip(feats.s8.data, u8, fusion_s8_, 8);
  Tensor u4 = nn::relu(nn::conv_transpose2d(y8, up4_.weight, up4_.bias, 2));
  Tensor y4 = fuse_skip(feats.s4.data, u4, fusion_s4_, 4);
  Tensor u1 = nn::conv_transpose2d(y4, up1_.weight, up1_.bias, 4);
  if (config_.detail_skip) u1 = nn::add(u1, nn::conv2d(frames, detail_.weight, detail_.bias, 1, 1));
  u1 = nn::relu(u1);
  u1 = nn::relu(nn::add(u1, nn::conv2d(u1, refine_.weight, refine_.bias, 1, 1)));

  Tensor logits = nn::conv2d(u1, classifier_.weight, classifier_.bias, 1, 0);
  Tensor hyper = nn::linear(prompts.sparse, hyper_w_, Tensor());
  Tensor bg = Tensor::zeros({n, 1, config_.head_channels});
  logits = nn::add(logits, nn::pixel_dot(u1, nn::concat({bg, hyper})));
  // Inside a box, a class-agnostic foreground score decides between the
  // prompted class and background.
  Tensor fg_token = nn::add_row(Tensor::zeros({n, 1, config_.head_channels}), foreground_w_);
  std::vector<Tensor> fg_parts = {bg};
  for (int c = 1; c < config_.num_classes; ++c) fg_parts.push_back(fg_token);
  Tensor fg = nn::pixel_dot(u1, nn::concat(fg_parts));
  logits = nn::add(logits, nn::mul(prompts.coverage, nn::add(fg, nn::scale_by(prompts.coverage, box_gain_))));
  // Ground-truth boxes make a class impossible outside its box.
  logits = nn::add(logits, nn::scale(prompts.dense, kPromptExclusion));
  if (memory_mask.defined()) {
    if (memory_mask.shape() != logits.shape()) {
      throw DimensionError("decode_masks: memory mask " + shape_str(memory_mask.shape()) + " vs logits " +
                           shape_str(logits.shape()));
    }
    logits = nn::add(logits, nn::scale_by(mask_prior(memory_mask), mask_gain_));
  }
  return {logits, nn::softmax_channels(logits)};
}

MemoryEntry Model::encode_memory(const FeatureMap& s16, const MaskPrediction& prediction,
                                 std::int64_t frame_index, EntryKind kind) const {
  Tensor pooled = nn::avg_pool(prediction.probs, 16);
  Tensor feats = nn::add(s16.data, nn::channel_mix(pooled, mem_mask_w_));
  MemoryEntry e;
  e.frame_index = frame_index;
  e.kind = kind;
  e.spatial_features = FeatureMap(feats, 16);
  e.object_pointer = nn::global_avg_pool(feats);
  e.mask = prediction.probs.detach();
  return e;
}

MaskPrediction Model::forward_frame(const Tensor& frames, std::int64_t frame_index,
                                    const std::vector<FramePrompts>& prompts, MemoryBank& bank) {
  if (static_cast<int>(prompts.size()) != frames.dim(0)) {
    throw ValidationError("forward_frame: prompt batch does not match frame batch");
  }
  EncoderFeatures feats = encode_image(frames);
  const std::vector<MemoryEntry> context = bank.gather_context(frame_index);
  FeatureMap attended = memory_attend(feats.s16, context);
  Tensor latest_mask;
  std::int64_t latest = -1;
  for (const MemoryEntry& e : context) {
    if (e.frame_index > latest && e.mask.defined()) {
      latest = e.frame_index;
      latest_mask = e.mask;
    }
  }
  MaskPrediction pred = decode_masks(attended, feats, encode_prompt(prompts), frames, latest_mask);
  const bool prompted = std::any_of(prompts.begin(), prompts.end(),
                                    [](const FramePrompts& p) { return p.prompted; });
  bank.insert(encode_memory(feats.s16, pred, frame_index,
                            prompted ? EntryKind::Prompt : EntryKind::Prediction));
  return pred;
}

std::vector<MaskPrediction> Model::forward_video(const VideoSample& video,
                                                 const PromptSchedule& schedule) {
  if (schedule.size() != video.size()) {
    throw ValidationError("forward_video: schedule has " + std::to_string(schedule.size()) +
                          " entries for " + std::to_string(video.size()) + " frames");
  }
  std::vector<Tensor> frames;
  std::vector<std::vector<FramePrompts>> prompts;
  for (std::size_t t = 0; t < video.size(); ++t) {
    frames.push_back(frames_to_tensor({&video.frames[t]}));
    prompts.push_back({schedule[t]});
  }
  return forward_clip(frames, prompts);
}

std::vector<MaskPrediction> Model::forward_clip(
    const std::vector<Tensor>& frames, const std::vector<std::vector<FramePrompts>>& prompts) {
  if (frames.size() != prompts.size()) throw ValidationError("forward_clip: prompt/frame count mismatch");
  MemoryBank bank(memory_config());
  std::vector<MaskPrediction> out;
  out.reserve(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    out.push_back(forward_frame(frames[t], static_cast<std::int64_t>(t), prompts[t], bank));
  }
  bank.reset();
  return out;
}

NamedTensors Model::named_parameters() const {
  NamedTensors out;
  auto conv = [&](const std::string& name, const Conv& c) {
    out.emplace_back(name + ".weight", c.weight);
    out.emplace_back(name + ".bias", c.bias);
  };
  conv("encoder.stem", enc_stem_);
  conv("encoder.down4", enc_down4_);
  conv("encoder.refine4", enc_ref4_);
  conv("encoder.down8", enc_down8_);
  conv("encoder.refine8", enc_ref8_);
  conv("encoder.down16", enc_down16_);
  conv("encoder.refine16", enc_ref16_);
  out.emplace_back("prompt.box_weight", prompt_w_);
  out.emplace_back("prompt.box_bias", prompt_b_);
  out.emplace_back("prompt.class_embedding", class_emb_);
  out.emplace_back("prompt.no_prompt_embedding", no_prompt_emb_);
  out.emplace_back("memory.query", attn_q_);
  out.emplace_back("memory.key", attn_k_);
  out.emplace_back("memory.value", attn_v_);
  out.emplace_back("memory.output", attn_o_);
  for (std::size_t p = 0; p < context_pos_.size(); ++p) {
    out.emplace_back("memory.position." + std::to_string(p), context_pos_[p]);
  }
  out.emplace_back("memory.pointer_type", pointer_type_);
  out.emplace_back("memory.mask_encoder", mem_mask_w_);
  conv("decoder.up8", up8_);
  conv("decoder.up4", up4_);
  conv("decoder.up1", up1_);
  if (config_.detail_skip) conv("decoder.detail", detail_);
  conv("decoder.refine", refine_);
  conv("decoder.classifier", classifier_);
  out.emplace_back("decoder.foreground", foreground_w_);
  out.emplace_back("decoder.hypernetwork", hyper_w_);
  out.emplace_back("decoder.box_gain", box_gain_);
  out.emplace_back("decoder.mask_prior_gain", mask_gain_);
  for (auto& nt : fusion_s8_.named_parameters("fusion.s8.")) out.push_back(nt);
  for (auto& nt : fusion_s4_.named_parameters("fusion.s4.")) out.push_back(nt);
  return out;
}

NamedTensors Model::named_buffers() const {
  NamedTensors out = fusion_s8_.named_buffers("fusion.s8.");
  for (auto& nt : fusion_s4_.named_buffers("fusion.s4.")) out.push_back(nt);
  return out;
}

void Model::load_buffers(const NamedTensors& buffers) {
  fusion_s8_.load_buffers("fusion.s8.", buffers);
  fusion_s4_.load_buffers("fusion.s4.", buffers);
}

}  // namespace vidseg
