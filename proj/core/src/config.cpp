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

#include "vidseg/config.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "vidseg/errors.hpp"

namespace vidseg {

using nlohmann::json;

namespace {

// Reads fields from one JSON object, remembering which keys were consumed.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw ConfigError("");
        if constexpr (std::is_unsigned_v<T>) {
          if (it->is_number_integer() && !it->is_number_unsigned() && it->template get<std::int64_t>() < 0) {
            throw ConfigError("");
          }
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError("");
      }
      out = it->template get<T>();
    } catch (const std::exception&) {
      throw ConfigError(where_ + key + ": invalid value " + it->dump());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key: " + where_ + it.key());
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json gen_json(const GenConfig& g) {
  return {{"width", g.width},
          {"height", g.height},
          {"frames", g.frames},
          {"classes", g.classes},
          {"rare_class_probability", g.rare_class_probability},
          {"pan_amplitude", g.pan_amplitude},
          {"noise", g.noise},
          {"bleeding_probability", g.bleeding_probability},
          {"max_step", g.max_step}};
}

void read_gen(const json& j, GenConfig& g, const std::string& where) {
  Reader r(j, where);
  r.get("width", g.width);
  r.get("height", g.height);
  r.get("frames", g.frames);
  if (const json* c = r.child("classes")) {
    if (!c->is_array()) throw ConfigError(where + "classes: expected an array");
    g.classes.clear();
    for (const json& v : *c) {
      if (!v.is_number_integer()) throw ConfigError(where + "classes: expected integers");
      g.classes.push_back(v.get<int>());
    }
  }
  r.get("rare_class_probability", g.rare_class_probability);
  r.get("pan_amplitude", g.pan_amplitude);
  r.get("noise", g.noise);
  r.get("bleeding_probability", g.bleeding_probability);
  r.get("max_step", g.max_step);
  r.finish();
}

json data_json(const DatasetConfig& d) {
  return {{"num_cases", d.num_cases},
          {"ratios", {{"train", d.ratios.train}, {"val", d.ratios.val}, {"test", d.ratios.test}}},
          {"gen", gen_json(d.gen)},
          {"occlude_test", d.occlude_test}};
}

void read_data(const json& j, DatasetConfig& d, const std::string& where) {
  Reader r(j, where);
  r.get("num_cases", d.num_cases);
  if (const json* s = r.child("ratios")) {
    Reader rr(*s, where + "ratios.");
    rr.get("train", d.ratios.train);
    rr.get("val", d.ratios.val);
    rr.get("test", d.ratios.test);
    rr.finish();
  }
  if (const json* g = r.child("gen")) read_gen(*g, d.gen, where + "gen.");
  r.get("occlude_test", d.occlude_test);
  r.finish();
}

json model_json(const ModelConfig& m) {
  return {{"input_height", m.input_height},
          {"input_width", m.input_width},
          {"width_s4", m.width_s4},
          {"width_s8", m.width_s8},
          {"width_s16", m.width_s16},
          {"num_classes", m.num_classes},
          {"lora_rank", m.lora_rank},
          {"lora_alpha", m.lora_alpha},
          {"lora_s4", m.lora_s4},
          {"lora_s8", m.lora_s8},
          {"alpha_trainable", m.alpha_trainable},
          {"attention_heads", m.attention_heads},
          {"pointer_dim", m.pointer_dim},
          {"fusion_enabled", m.fusion_enabled},
          {"prompt_interval", m.prompt_interval},
          {"memory_capacity", m.memory_capacity},
          {"head_channels", m.head_channels},
          {"detail_skip", m.detail_skip}};
}

void read_model(const json& j, ModelConfig& m, const std::string& where) {
  Reader r(j, where);
  r.get("input_height", m.input_height);
  r.get("input_width", m.input_width);
  r.get("width_s4", m.width_s4);
  r.get("width_s8", m.width_s8);
  r.get("width_s16", m.width_s16);
  r.get("num_classes", m.num_classes);
  r.get("lora_rank", m.lora_rank);
  r.get("lora_alpha", m.lora_alpha);
  r.get("lora_s4", m.lora_s4);
  r.get("lora_s8", m.lora_s8);
  r.get("alpha_trainable", m.alpha_trainable);
  r.get("attention_heads", m.attention_heads);
  r.get("pointer_dim", m.pointer_dim);
  r.get("fusion_enabled", m.fusion_enabled);
  r.get("prompt_interval", m.prompt_interval);
  r.get("memory_capacity", m.memory_capacity);
  r.get("head_channels", m.head_channels);
  r.get("detail_skip", m.detail_skip);
  r.finish();
}

json train_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"optimizer",
           {{"learning_rate", t.optimizer.learning_rate},
            {"beta1", t.optimizer.beta1},
            {"beta2", t.optimizer.beta2},
            {"eps", t.optimizer.eps},
            {"weight_decay", t.optimizer.weight_decay}}},
          {"loss_weights",
           {{"focal", t.loss_weights.focal},
            {"dice", t.loss_weights.dice},
            {"mae", t.loss_weights.mae},
            {"ce", t.loss_weights.ce}}},
          {"focal_gamma", t.focal_gamma},
          {"freeze_fusion", t.freeze_fusion},
          {"freeze_decoder", t.freeze_decoder},
          {"max_steps", t.max_steps}};
}

void read_train(const json& j, TrainConfig& t, const std::string& where) {
  Reader r(j, where);
  r.get("epochs", t.epochs);
  r.get("batch_size", t.batch_size);
  if (const json* o = r.child("optimizer")) {
    Reader ro(*o, where + "optimizer.");
    ro.get("learning_rate", t.optimizer.learning_rate);
    ro.get("beta1", t.optimizer.beta1);
    ro.get("beta2", t.optimizer.beta2);
    ro.get("eps", t.optimizer.eps);
    ro.get("weight_decay", t.optimizer.weight_decay);
    ro.finish();
  }
  if (const json* w = r.child("loss_weights")) {
    Reader rw(*w, where + "loss_weights.");
    rw.get("focal", t.loss_weights.focal);
    rw.get("dice", t.loss_weights.dice);
    rw.get("mae", t.loss_weights.mae);
    rw.get("ce", t.loss_weights.ce);
    rw.finish();
  }
  r.get("focal_gamma", t.focal_gamma);
  r.get("freeze_fusion", t.freeze_fusion);
  r.get("freeze_decoder", t.freeze_decoder);
  r.get("max_steps", t.max_steps);
  r.finish();
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), e.byte);
  }
}

// `a.b.c = value` lines become {"a": {"b": {"c": value}}}.
json parse_key_values(const std::string& text) {
  json root = json::object();
  std::istringstream in(text);
  std::string line;
  std::size_t offset = 0;
  const auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    const std::size_t line_offset = offset;
    offset += line.size() + 1;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", line_offset);
    const std::string key = trim(line.substr(0, eq));
    const std::string raw = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError("empty key", line_offset);
    json value;
    if (raw == "true" || raw == "false") {
      value = raw == "true";
    } else if (!raw.empty() && (raw.front() == '[' || raw.front() == '"')) {
      try {
        value = json::parse(raw);
      } catch (const json::parse_error& e) {
        throw ParseError("invalid value for " + key, line_offset + eq + 1 + e.byte);
      }
    } else {
      char* end = nullptr;
      const long long iv = std::strtoll(raw.c_str(), &end, 10);
      if (!raw.empty() && *end == '\0') {
        value = iv;
      } else {
        const double dv = std::strtod(raw.c_str(), &end);
        if (!raw.empty() && *end == '\0') {
          value = dv;
        } else {
          value = raw;
        }
      }
    }
    json* node = &root;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (part.empty()) throw ParseError("malformed key " + key, line_offset);
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      json& next = (*node)[part];
      if (next.is_null()) next = json::object();
      if (!next.is_object()) throw ParseError("key " + key + " conflicts with a scalar", line_offset);
      node = &next;
      start = dot + 1;
    }
  }
  return root;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(optimizer.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) || !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
    throw ConfigError("moment decays must be in [0, 1)");
  }
  if (!(optimizer.eps > 0.0) || !(optimizer.weight_decay >= 0.0)) throw ConfigError("invalid optimizer eps or decay");
  if (!(focal_gamma >= 0.0)) throw ConfigError("focal_gamma must be non-negative");
  if (max_steps < 0) throw ConfigError("max_steps must be non-negative");
  loss_weights.validate();
}

void ExperimentConfig::validate() const {
  data.ratios.validate();
  data.gen.validate();
  if (data.num_cases < 1) throw ConfigError("num_cases must be positive");
  model.validate();
  if (model.input_height != data.gen.height || model.input_width != data.gen.width) {
    throw ConfigError("model input size must match the generated frame size");
  }
  train.validate();
  if (ablation_seeds < 1) throw ConfigError("ablation_seeds must be positive");
}

std::string to_json(const ExperimentConfig& c) {
  const json j = {{"seed", c.seed},
                  {"data", data_json(c.data)},
                  {"model", model_json(c.model)},
                  {"train", train_json(c.train)},
                  {"augmentation_enabled", c.augmentation_enabled},
                  {"micro_average", c.micro_average},
                  {"ablation_seeds", c.ablation_seeds}};
  return j.dump(2);
}

std::string to_json(const ModelConfig& config) { return model_json(config).dump(); }
std::string to_json(const DatasetConfig& config) { return data_json(config).dump(); }

ModelConfig model_config_from_json(const std::string& text) {
  ModelConfig m;
  read_model(parse_json(text), m, "model.");
  return m;
}

DatasetConfig dataset_config_from_json(const std::string& text) {
  DatasetConfig d;
  read_data(parse_json(text), d, "data.");
  return d;
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  const json j = (first != std::string::npos && text[first] == '{') ? parse_json(text) : parse_key_values(text);
  ExperimentConfig c;
  Reader r(j, "");
  r.get("seed", c.seed);
  if (const json* d = r.child("data")) read_data(*d, c.data, "data.");
  if (const json* m = r.child("model")) read_model(*m, c.model, "model.");
  if (const json* t = r.child("train")) read_train(*t, c.train, "train.");
  r.get("augmentation_enabled", c.augmentation_enabled);
  r.get("micro_average", c.micro_average);
  r.get("ablation_seeds", c.ablation_seeds);
  r.finish();
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

}  // namespace vidseg
