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
#include <deque>
#include <string>
#include <string_view>
#include <vector>

#include "vidseg/fusion.hpp"
#include "vidseg/tensor.hpp"

namespace vidseg {

enum class EntryKind { Prompt, Prediction };

const char* to_string(EntryKind kind);

struct MemoryEntry {
  std::int64_t frame_index = 0;
  EntryKind kind = EntryKind::Prediction;
  FeatureMap spatial_features;  // stride 16; may be empty in structural replays
  Tensor object_pointer;        // (batch, pointer_dim)
  Tensor mask;                  // (batch, classes, H, W) detached probabilities; optional
};

struct MemoryConfig {
  static constexpr int kPromptCapacity = 2;
  int prediction_capacity = 6;
  int pointer_dim = 64;
};

enum class BankOp { Insert, Evict, Reset };

struct BankEvent {
  BankOp op = BankOp::Insert;
  std::int64_t frame_index = 0;
  EntryKind kind = EntryKind::Prediction;

  friend bool operator==(const BankEvent&, const BankEvent&) = default;
};

/// Per-video memory: the two most recent prompt frames plus a FIFO of recent
/// predicted frames. A bank has exactly one owner at a time.
class MemoryBank {
 public:
  explicit MemoryBank(MemoryConfig config = {});

  // Entry indices must strictly increase across the whole bank. A full
  // partition drops its oldest entry.
  void insert(MemoryEntry entry);

  // Prompt slots followed by queued predictions, each ascending by frame.
  std::vector<MemoryEntry> gather_context(std::int64_t current_frame) const;

  void reset();

  const std::deque<MemoryEntry>& prompt_slots() const { return prompts_; }
  const std::deque<MemoryEntry>& prediction_queue() const { return predictions_; }
  const MemoryConfig& config() const { return config_; }
  std::size_t size() const { return prompts_.size() + predictions_.size(); }
  bool empty() const { return size() == 0; }

  // Every insert, eviction and reset applied so far.
  const std::vector<BankEvent>& history() const { return history_; }

  // Same configuration and the same (frame, kind) sequence in each partition.
  bool structurally_equal(const MemoryBank& other) const;

 private:
  MemoryConfig config_;
  std::deque<MemoryEntry> prompts_;
  std::deque<MemoryEntry> predictions_;
  std::vector<BankEvent> history_;
  std::int64_t last_frame_ = -1;
};

// One event per line: "<op> <frame> <kind>", or "reset".
std::string serialize_trace(const std::vector<BankEvent>& history);
std::vector<BankEvent> parse_trace(std::string_view trace);

// Rebuilds a bank from a trace, checking recorded evictions against the ones
// the replay performs. Entries carry zero pointers and no spatial features.
MemoryBank replay_trace(std::string_view trace, MemoryConfig config);

}  // namespace vidseg
