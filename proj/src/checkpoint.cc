// Copyright 2026 The MultiBiSage Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "multibisage/trainer.h"

namespace multibisage {

namespace {

constexpr char kMagic[4] = {'B', 'S', 'C', 'K'};
constexpr std::size_t kLimbs = 4;

struct Entry {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

using Entries = std::map<std::string, Entry>;

Entry from_tensor(const Tensor& t) {
  Entry e;
  for (std::size_t d : t.dims()) e.dims.push_back(static_cast<std::uint32_t>(d));
  e.values.assign(t.values().begin(), t.values().end());
  return e;
}

Tensor to_tensor(const Entry& e) {
  std::vector<std::size_t> dims(e.dims.begin(), e.dims.end());
  return Tensor::from_values(std::move(dims), std::vector<double>(e.values.begin(), e.values.end()));
}

// 64-bit integers as four 16-bit limbs, each exact in f32.
Entry from_integers(std::span<const std::uint64_t> xs) {
  Entry e;
  e.dims = {static_cast<std::uint32_t>(xs.size()), static_cast<std::uint32_t>(kLimbs)};
  for (std::uint64_t x : xs) {
    for (std::size_t l = 0; l < kLimbs; ++l) e.values.push_back(static_cast<float>((x >> (16 * l)) & 0xffff));
  }
  return e;
}

std::vector<std::uint64_t> to_integers(const Entry& e, const std::string& name) {
  if (e.dims.size() != 2 || e.dims[1] != kLimbs) throw DataError("checkpoint: bad integer entry " + name);
  std::vector<std::uint64_t> out(e.dims[0]);
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t l = 0; l < kLimbs; ++l) {
      const float f = e.values[i * kLimbs + l];
      if (!(f >= 0.0f && f <= 65535.0f) || f != static_cast<float>(static_cast<std::uint32_t>(f))) {
        throw DataError("checkpoint: corrupt integer entry " + name);
      }
      out[i] |= static_cast<std::uint64_t>(f) << (16 * l);
    }
  }
  return out;
}

Entry model_entry(const ModelConfig& m) {
  Entry e;
  e.values = {static_cast<float>(m.num_graphs), static_cast<float>(m.neighbors),
              static_cast<float>(m.visual_dim), static_cast<float>(m.text_dim),
              static_cast<float>(m.token_dim),  static_cast<float>(m.embed_dim),
              static_cast<float>(m.heads),      static_cast<float>(m.variant),
              static_cast<float>(m.encoder_mode), static_cast<float>(m.dropout),
              static_cast<float>(m.logit_scale)};
  e.dims = {static_cast<std::uint32_t>(e.values.size())};
  return e;
}

ModelConfig model_from(const Entry& e) {
  if (e.values.size() != 11) throw DataError("checkpoint: bad model entry");
  const auto& v = e.values;
  ModelConfig m;
  m.num_graphs = static_cast<std::size_t>(v[0]);
  m.neighbors = static_cast<std::size_t>(v[1]);
  m.visual_dim = static_cast<std::size_t>(v[2]);
  m.text_dim = static_cast<std::size_t>(v[3]);
  m.token_dim = static_cast<std::size_t>(v[4]);
  m.embed_dim = static_cast<std::size_t>(v[5]);
  m.heads = static_cast<std::size_t>(v[6]);
  const int variant = static_cast<int>(v[7]);
  if (variant < 0 || variant >= static_cast<int>(all_variants().size())) throw DataError("checkpoint: bad variant");
  m.variant = static_cast<Variant>(variant);
  m.encoder_mode = static_cast<EncoderMode>(static_cast<int>(v[8]) != 0);
  m.dropout = v[9];
  m.logit_scale = v[10];
  try {
    m.validate();
  } catch (const ConfigError& err) {
    throw DataError(std::string("checkpoint: ") + err.what());
  }
  return m;
}

void add_sketch(Entries& out, const std::string& prefix, const CountMinSketch& s) {
  out[prefix + ".row_seeds"] = from_integers(s.row_seeds());
  out[prefix + ".counters"] = from_integers(s.counters());
  const std::uint64_t meta[] = {s.width(), s.total()};
  out[prefix + ".meta"] = from_integers(meta);
}

const Entry& need(const Entries& in, const std::string& name) {
  const auto it = in.find(name);
  if (it == in.end()) throw DataError("checkpoint: missing entry " + name);
  return it->second;
}

CountMinSketch sketch_from(const Entries& in, const std::string& prefix) {
  const auto meta = to_integers(need(in, prefix + ".meta"), prefix);
  if (meta.size() != 2) throw DataError("checkpoint: bad sketch meta");
  auto seeds = to_integers(need(in, prefix + ".row_seeds"), prefix);
  auto counters = to_integers(need(in, prefix + ".counters"), prefix);
  if (meta[0] == 0 || counters.size() != meta[0] * seeds.size()) throw DataError("checkpoint: bad sketch shape");
  return CountMinSketch(meta[0], std::move(seeds), std::move(counters), meta[1]);
}

void load_group(const Entries& in, const std::string& prefix, ModelParams& params) {
  params.for_each([&](const std::string& name, Tensor& t) {
    const Tensor loaded = to_tensor(need(in, prefix + name));
    if (!loaded.same_shape(t)) throw DataError("checkpoint: shape mismatch for " + prefix + name);
    t = loaded;
  });
}

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const std::string& path) {
  T v;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError(path + ": truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::string& path) {
  Entries entries;
  entries["meta.model"] = model_entry(state.model);
  {
    Entry g;
    for (int id : state.graph_ids) g.values.push_back(static_cast<float>(id));
    g.dims = {static_cast<std::uint32_t>(g.values.size())};
    entries["meta.graph_ids"] = g;
  }
  const std::uint64_t step[] = {state.step};
  entries["meta.step"] = from_integers(step);
  state.params.for_each([&](const std::string& n, const Tensor& t) { entries["param." + n] = from_tensor(t); });
  state.adam_m.for_each([&](const std::string& n, const Tensor& t) { entries["adam_m." + n] = from_tensor(t); });
  state.adam_v.for_each([&](const std::string& n, const Tensor& t) { entries["adam_v." + n] = from_tensor(t); });
  add_sketch(entries, "sketch.positive", state.positive_stream);
  add_sketch(entries, "sketch.negative", state.negative_stream);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write " + tmp);
    os.write(kMagic, 4);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(entries.size()));
    for (const auto& [name, e] : entries) {
      put<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<std::uint32_t>(os, static_cast<std::uint32_t>(e.dims.size()));
      for (std::uint32_t d : e.dims) put(os, d);
      os.write(reinterpret_cast<const char*>(e.values.data()),
               static_cast<std::streamsize>(e.values.size() * sizeof(float)));
    }
    if (!os) throw DataError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw DataError("cannot move checkpoint into " + path);
}

TrainState load_checkpoint(const std::string& path) {
  static_assert(std::endian::native == std::endian::little);
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw DataError(path + ": bad checkpoint magic");
  const auto count = get<std::uint32_t>(is, path);
  Entries entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint16_t>(is, path);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw DataError(path + ": truncated checkpoint");
    Entry e;
    const auto rank = get<std::uint32_t>(is, path);
    if (rank > 8) throw DataError(path + ": implausible rank in " + name);
    std::size_t size = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      e.dims.push_back(get<std::uint32_t>(is, path));
      size *= e.dims.back();
    }
    if (size > (std::size_t{1} << 32)) throw DataError(path + ": implausible entry size in " + name);
    e.values.resize(size);
    if (!is.read(reinterpret_cast<char*>(e.values.data()), static_cast<std::streamsize>(size * sizeof(float)))) {
      throw DataError(path + ": truncated checkpoint");
    }
    entries[name] = std::move(e);
  }
  if (is.peek() != std::char_traits<char>::eof()) throw DataError(path + ": trailing bytes in checkpoint");

  TrainState s;
  s.model = model_from(need(entries, "meta.model"));
  for (float g : need(entries, "meta.graph_ids").values) s.graph_ids.push_back(static_cast<int>(g));
  if (s.graph_ids.size() != s.model.num_graphs) throw DataError("checkpoint: graph list length != k");
  const auto step = to_integers(need(entries, "meta.step"), "meta.step");
  if (step.size() != 1) throw DataError("checkpoint: bad step entry");
  s.step = step[0];
  s.params = init_params(s.model, 0);
  s.adam_m = s.params.zeros_like();
  s.adam_v = s.params.zeros_like();
  load_group(entries, "param.", s.params);
  load_group(entries, "adam_m.", s.adam_m);
  load_group(entries, "adam_v.", s.adam_v);
  s.positive_stream = sketch_from(entries, "sketch.positive");
  s.negative_stream = sketch_from(entries, "sketch.negative");
  return s;
}

}  // namespace multibisage
