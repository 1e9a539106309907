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

#include "vidseg/memory.hpp"

#include <charconv>
#include <sstream>

#include "vidseg/errors.hpp"

namespace vidseg {

const char* to_string(EntryKind kind) {
  return kind == EntryKind::Prompt ? "prompt" : "prediction";
}

MemoryBank::MemoryBank(MemoryConfig config) : config_(config) {
  if (config_.prediction_capacity < 0) throw ConfigError("memory: negative prediction capacity");
  if (config_.pointer_dim <= 0) throw ConfigError("memory: pointer dimension must be positive");
}

void MemoryBank::insert(MemoryEntry entry) {
  if (entry.frame_index < 0 || entry.frame_index <= last_frame_) {
    throw OrderingError("memory: frame " + std::to_string(entry.frame_index) +
                        " is not after the last stored frame " + std::to_string(last_frame_));
  }
  if (!entry.object_pointer.defined() || entry.object_pointer.rank() != 2 ||
      entry.object_pointer.dim(1) != config_.pointer_dim) {
    throw ConfigError("memory: object pointer must be (batch, " +
                      std::to_string(config_.pointer_dim) + ")");
  }
  last_frame_ = entry.frame_index;
  history_.push_back({BankOp::Insert, entry.frame_index, entry.kind});

  auto& partition = entry.kind == EntryKind::Prompt ? prompts_ : predictions_;
  const std::size_t capacity = entry.kind == EntryKind::Prompt
                                   ? MemoryConfig::kPromptCapacity
                                   : static_cast<std::size_t>(config_.prediction_capacity);
  if (capacity == 0) {
    history_.push_back({BankOp::Evict, entry.frame_index, entry.kind});
    return;
  }
  if (partition.size() == capacity) {
    history_.push_back({BankOp::Evict, partition.front().frame_index, entry.kind});
    partition.pop_front();
  }
  partition.push_back(std::move(entry));
}

std::vector<MemoryEntry> MemoryBank::gather_context(std::int64_t current_frame) const {
  if (current_frame <= last_frame_ && !empty()) {
    throw OrderingError("memory: context requested for frame " + std::to_string(current_frame) +
                        " not after stored frame " + std::to_string(last_frame_));
  }
  std::vector<MemoryEntry> out(prompts_.begin(), prompts_.end());
  out.insert(out.end(), predictions_.begin(), predictions_.end());
  return out;
}

void MemoryBank::reset() {
  prompts_.clear();
  predictions_.clear();
  last_frame_ = -1;
  history_.push_back({BankOp::Reset, 0, EntryKind::Prediction});
}

bool MemoryBank::structurally_equal(const MemoryBank& other) const {
  auto same = [](const std::deque<MemoryEntry>& a, const std::deque<MemoryEntry>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].frame_index != b[i].frame_index || a[i].kind != b[i].kind) return false;
    }
    return true;
  };
  return config_.prediction_capacity == other.config_.prediction_capacity &&
         config_.pointer_dim == other.config_.pointer_dim && same(prompts_, other.prompts_) &&
         same(predictions_, other.predictions_);
}

std::string serialize_trace(const std::vector<BankEvent>& history) {
  std::ostringstream os;
  for (const BankEvent& e : history) {
    switch (e.op) {
      case BankOp::Insert:
        os << "insert " << e.frame_index << ' ' << to_string(e.kind) << '\n';
        break;
      case BankOp::Evict:
        os << "evict " << e.frame_index << ' ' << to_string(e.kind) << '\n';
        break;
      case BankOp::Reset:
        os << "reset\n";
        break;
    }
  }
  return os.str();
}

std::vector<BankEvent> parse_trace(std::string_view trace) {
  std::vector<BankEvent> out;
  std::size_t pos = 0;
  while (pos < trace.size()) {
    std::size_t end = trace.find('\n', pos);
    if (end == std::string_view::npos) end = trace.size();
    const std::string_view line = trace.substr(pos, end - pos);
    const std::size_t offset = pos;
    pos = end + 1;
    if (line.empty()) continue;

    std::vector<std::string_view> fields;
    std::size_t f = 0;
    while (f < line.size()) {
      const std::size_t sp = line.find(' ', f);
      const std::size_t stop = sp == std::string_view::npos ? line.size() : sp;
      if (stop > f) fields.push_back(line.substr(f, stop - f));
      f = stop + 1;
    }
    if (fields.size() == 1 && fields[0] == "reset") {
      out.push_back({BankOp::Reset, 0, EntryKind::Prediction});
      continue;
    }
    if (fields.size() != 3) throw ParseError("trace: expected '<op> <frame> <kind>'", offset);

    BankEvent e;
    if (fields[0] == "insert") e.op = BankOp::Insert;
    else if (fields[0] == "evict") e.op = BankOp::Evict;
    else throw ParseError("trace: unknown op '" + std::string(fields[0]) + "'", offset);

    const auto* first = fields[1].data();
    const auto* last = first + fields[1].size();
    auto [ptr, ec] = std::from_chars(first, last, e.frame_index);
    if (ec != std::errc() || ptr != last || e.frame_index < 0) {
      throw ParseError("trace: bad frame index '" + std::string(fields[1]) + "'", offset);
    }
    if (fields[2] == "prompt") e.kind = EntryKind::Prompt;
    else if (fields[2] == "prediction") e.kind = EntryKind::Prediction;
    else throw ParseError("trace: unknown kind '" + std::string(fields[2]) + "'", offset);
    out.push_back(e);
  }
  return out;
}

MemoryBank replay_trace(std::string_view trace, MemoryConfig config) {
  const std::vector<BankEvent> events = parse_trace(trace);
  MemoryBank bank(config);
  const Tensor pointer = Tensor::zeros({1, config.pointer_dim});
  for (const BankEvent& e : events) {
    switch (e.op) {
      case BankOp::Insert:
        bank.insert({e.frame_index, e.kind, FeatureMap(), pointer});
        break;
      case BankOp::Reset:
        bank.reset();
        break;
      case BankOp::Evict:
        break;  // verified below
    }
  }
  if (bank.history() != events) {
    throw ParseError("trace: recorded evictions disagree with replay", 0);
  }
  return bank;
}

}  // namespace vidseg
