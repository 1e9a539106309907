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
#include <optional>
#include <vector>

#include "vidseg/fusion.hpp"
#include "vidseg/image.hpp"
#include "vidseg/memory.hpp"
#include "vidseg/rng.hpp"
#include "vidseg/tensor.hpp"

namespace vidseg {

struct ModelConfig {
  int input_height = 32;
  int input_width = 32;
  int width_s4 = 16;
  int width_s8 = 32;
  int width_s16 = 64;
  int num_classes = kNumClasses;
  int lora_rank = 4;
  double lora_alpha = 1.0;
  bool lora_s4 = true;
  bool lora_s8 = true;
  bool alpha_trainable = false;
  int attention_heads = 2;
  int pointer_dim = 64;  // must equal width_s16
  bool fusion_enabled = true;
  int prompt_interval = 10;
  int memory_capacity = 6;
  // Channels of the full-resolution head; the head also sees a 3x3
  // convolution of the input frame when detail_skip is set.
  int head_channels = 8;
  bool detail_skip = true;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct EncoderFeatures {
  FeatureMap s4;
  FeatureMap s8;
  FeatureMap s16;
};

/// Box in normalized [0, 1] coordinates.
struct BoxPrompt {
  int class_id = 1;
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 1.0;
  double y_max = 1.0;
};

struct FramePrompts {
  bool prompted = false;
  std::vector<BoxPrompt> boxes;
};

struct PromptEmbedding {
  Tensor sparse;       // (N, 6, width_s16), one vector per anatomy class
  Tensor coverage;     // (N, num_classes, H, W) box coverage, channel 0 zero
  Tensor coverage_s16; // (N, 6, H/16, W/16)
  // (N, num_classes, H, W) logit bias: -1 where the prompts of a prompted
  // frame rule a class out (outside its box, or class not prompted), else 0.
  Tensor dense;
};

struct MaskPrediction {
  Tensor logits;  // (N, num_classes, H, W)
  Tensor probs;

  // Argmax labels of batch element `b`.
  LabelMap labels(int b = 0) const;
};

// Per-frame prompt list of a whole video.
using PromptSchedule = std::vector<FramePrompts>;

// Ground-truth boxes for every class present at frames t with t % interval == 0.
PromptSchedule make_prompt_schedule(const VideoSample& video, int interval);
BoxPrompt box_from_label(const LabelMap& label, int class_id);

// Normalized (N, 3, H, W) tensor of a batch of frames.
Tensor frames_to_tensor(const std::vector<const Image*>& frames);

class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  EncoderFeatures encode_image(const Tensor& frames) const;
  PromptEmbedding encode_prompt(const std::vector<FramePrompts>& batch) const;

  // Cross-attention of the current stride-16 features over the context.
  // Returns `s16` itself when the context is empty.
  FeatureMap memory_attend(const FeatureMap& s16, const std::vector<MemoryEntry>& context,
                           std::vector<double>* attention_weights = nullptr) const;

  // `memory_mask` is the most recent stored prediction; when given, its
  // blurred log-probabilities enter the logits as a prior.
  MaskPrediction decode_masks(const FeatureMap& attended_s16, const EncoderFeatures& feats,
                              const PromptEmbedding& prompts, const Tensor& frames,
                              const Tensor& memory_mask = Tensor());

  MemoryEntry encode_memory(const FeatureMap& s16, const MaskPrediction& prediction,
                            std::int64_t frame_index, EntryKind kind) const;

  // encode -> context -> attend -> decode, then stores the frame in `bank`.
  MaskPrediction forward_frame(const Tensor& frames, std::int64_t frame_index,
                               const std::vector<FramePrompts>& prompts, MemoryBank& bank);

  // Streams a whole video with a fresh memory bank.
  std::vector<MaskPrediction> forward_video(const VideoSample& video,
                                            const PromptSchedule& schedule);

  // Lockstep streaming of a batch of equally long videos. frames[t] is the
  // (N, 3, H, W) batch at time t and prompts[t] its per-video prompts.
  std::vector<MaskPrediction> forward_clip(const std::vector<Tensor>& frames,
                                           const std::vector<std::vector<FramePrompts>>& prompts);

  MemoryConfig memory_config() const;

  void set_training(bool training);
  bool training() const { return training_; }

  // Learnable tensors in a fixed order with stable names. Fusion blocks are
  // prefixed "fusion.", the rest of the mask decoder "decoder.".
  NamedTensors named_parameters() const;
  // Non-learned state (batch-norm running statistics, fixed alpha).
  NamedTensors named_buffers() const;
  void load_buffers(const NamedTensors& buffers);

  FusionBlockParams& fusion_s8() { return fusion_s8_; }
  FusionBlockParams& fusion_s4() { return fusion_s4_; }
  const FusionBlockParams& fusion_s8() const { return fusion_s8_; }
  const FusionBlockParams& fusion_s4() const { return fusion_s4_; }

 private:
  struct Conv {
    Tensor weight;
    Tensor bias;
  };

  Tensor fuse_skip(const Tensor& high, const Tensor& up, FusionBlockParams& block, int stride);

  ModelConfig config_;
  bool training_ = true;

  Conv enc_stem_, enc_down4_, enc_ref4_, enc_down8_, enc_ref8_, enc_down16_, enc_ref16_;

  Tensor prompt_w_, prompt_b_, class_emb_, no_prompt_emb_;

  Tensor attn_q_, attn_k_, attn_v_, attn_o_;
  std::vector<Tensor> context_pos_;
  Tensor pointer_type_;
  Tensor mem_mask_w_;

  Conv up8_, up4_, up1_, detail_, refine_, classifier_;
  Tensor foreground_w_;
  Tensor hyper_w_;
  Tensor box_gain_;
  Tensor mask_gain_;
  FusionBlockParams fusion_s8_;
  FusionBlockParams fusion_s4_;
};

}  // namespace vidseg
