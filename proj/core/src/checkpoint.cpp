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

#include "vidseg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "json.hpp"
#include "vidseg/config.hpp"
#include "vidseg/errors.hpp"

namespace vidseg {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'V', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes.insert(bytes.end(), p, p + n);
  }
  std::vector<std::uint8_t> bytes;
};

class Cursor {
 public:
  explicit Cursor(const std::vector<std::uint8_t>& b) : b_(b) {}
  template <typename T>
  T get() {
    T v;
    take(&v, sizeof(T));
    return v;
  }
  void take(void* out, std::size_t n) {
    if (n > b_.size() - pos_) throw ParseError("checkpoint truncated", pos_);
    std::memcpy(out, b_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

struct Array {
  std::uint8_t kind = 0;
  Shape shape;
  std::vector<double> values;
};

struct Decoded {
  ModelConfig config;
  std::string meta;
  std::map<std::string, Array> arrays;
};

Decoded decode(const std::vector<std::uint8_t>& bytes) {
  Cursor c(bytes);
  char magic[8];
  c.take(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw ParseError("not a checkpoint file", 0);
  const auto version = c.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint format version " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointVersion));
  }
  const auto hlen = c.get<std::uint64_t>();
  if (hlen > bytes.size()) throw ParseError("checkpoint header length out of range", c.pos());
  std::string header(hlen, '\0');
  c.take(header.data(), hlen);
  Decoded d;
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("checkpoint header is not JSON", 12 + 8 + e.byte);
  }
  if (!h.is_object() || !h.contains("model") || !h.contains("meta")) {
    throw ParseError("checkpoint header lacks model or meta", 20);
  }
  d.config = model_config_from_json(h["model"].dump());
  d.meta = h["meta"].dump();
  const auto count = c.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    Array a;
    a.kind = c.get<std::uint8_t>();
    const auto nlen = c.get<std::uint32_t>();
    if (nlen > bytes.size()) throw ParseError("name length out of range", c.pos());
    std::string name(nlen, '\0');
    c.take(name.data(), nlen);
    const auto rank = c.get<std::uint32_t>();
    if (rank > 8) throw ParseError("array rank out of range", c.pos());
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto dim = c.get<std::int32_t>();
      if (dim <= 0) throw ParseError("non-positive dimension", c.pos());
      a.shape.push_back(dim);
      n *= static_cast<std::size_t>(dim);
    }
    if (n > bytes.size() / 8) throw ParseError("array larger than file", c.pos());
    a.values.resize(n);
    c.take(a.values.data(), n * sizeof(double));
    if (!d.arrays.emplace(name, std::move(a)).second) throw ParseError("duplicate array " + name, c.pos());
  }
  if (!c.done()) throw ParseError("trailing bytes after checkpoint", c.pos());
  return d;
}

void apply(const Decoded& d, Model& model) {
  std::size_t used = 0;
  for (const auto& [name, t] : model.named_parameters()) {
    auto it = d.arrays.find(name);
    if (it == d.arrays.end() || it->second.kind != 0) throw VersionError("checkpoint lacks parameter " + name);
    if (it->second.shape != t.shape()) {
      throw VersionError("parameter " + name + " has shape " + shape_str(it->second.shape) + ", expected " +
                         shape_str(t.shape()));
    }
    Tensor copy = t;
    std::copy(it->second.values.begin(), it->second.values.end(), copy.mutable_values().begin());
    ++used;
  }
  NamedTensors buffers;
  for (const auto& [name, t] : model.named_buffers()) {
    auto it = d.arrays.find(name);
    if (it == d.arrays.end() || it->second.kind != 1) throw VersionError("checkpoint lacks buffer " + name);
    buffers.emplace_back(name, Tensor::from(it->second.shape, it->second.values));
    ++used;
  }
  if (used != d.arrays.size()) throw VersionError("checkpoint holds arrays the model does not have");
  model.load_buffers(buffers);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Model& model, const std::string& meta_json) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_json);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("checkpoint metadata is not JSON: ") + e.what());
  }
  const nlohmann::json header = {{"model", nlohmann::json::parse(to_json(model.config()))}, {"meta", meta}};
  const std::string h = header.dump();

  Writer w;
  w.put_bytes(kMagic, 8);
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint64_t>(h.size()));
  w.put_bytes(h.data(), h.size());
  const NamedTensors params = model.named_parameters();
  const NamedTensors buffers = model.named_buffers();
  w.put(static_cast<std::uint32_t>(params.size() + buffers.size()));
  const auto put_array = [&](std::uint8_t kind, const std::string& name, const Tensor& t) {
    w.put(kind);
    w.put(static_cast<std::uint32_t>(name.size()));
    w.put_bytes(name.data(), name.size());
    w.put(static_cast<std::uint32_t>(t.rank()));
    for (int dim : t.shape()) w.put(static_cast<std::int32_t>(dim));
    w.put_bytes(t.values().data(), t.size() * sizeof(double));
  };
  for (const auto& [name, t] : params) put_array(0, name, t);
  for (const auto& [name, t] : buffers) put_array(1, name, t);
  return std::move(w.bytes);
}

Model decode_checkpoint(const std::vector<std::uint8_t>& bytes, std::string* meta_json) {
  const Decoded d = decode(bytes);
  Model model(d.config, 0);
  apply(d, model);
  if (meta_json) *meta_json = d.meta;
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const std::string& meta_json) {
  const auto bytes = encode_checkpoint(model, meta_json);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + ec.message());
}

Model load_checkpoint(const std::filesystem::path& path, std::string* meta_json) {
  return decode_checkpoint(read_file(path), meta_json);
}

void load_checkpoint_into(const std::filesystem::path& path, Model& model) {
  const Decoded d = decode(read_file(path));
  if (!(d.config == model.config())) {
    throw VersionError("checkpoint model config " + to_json(d.config) + " differs from " + to_json(model.config()));
  }
  apply(d, model);
}

}  // namespace vidseg
