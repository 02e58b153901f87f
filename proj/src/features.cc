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

#include "multibisage/features.h"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace multibisage {

static_assert(std::endian::native == std::endian::little, "binary formats assume little-endian");

namespace {

constexpr char kMagic[4] = {'B', 'S', 'F', 'T'};

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const std::string& path) {
  T v;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw DataError(path + ": truncated feature file");
  }
  return v;
}

}  // namespace

void FeatureStore::set(NodeId pin, std::span<const double> visual, std::span<const double> text) {
  if (visual.size() != visual_dim_ || text.size() != text_dim_) {
    throw ConfigError("feature width mismatch for pin " + std::to_string(pin));
  }
  auto [it, inserted] = index_.try_emplace(pin, ids_.size());
  if (inserted) {
    ids_.push_back(pin);
    values_.resize(values_.size() + visual_dim_ + text_dim_);
  }
  float* dst = values_.data() + it->second * (visual_dim_ + text_dim_);
  for (double v : visual) *dst++ = static_cast<float>(v);
  for (double v : text) *dst++ = static_cast<float>(v);
}

std::size_t FeatureStore::slot(NodeId pin) const {
  const auto it = index_.find(pin);
  if (it == index_.end()) throw DataError("no features for pin " + std::to_string(pin));
  return it->second;
}

std::span<const float> FeatureStore::visual(NodeId pin) const {
  return {values_.data() + slot(pin) * (visual_dim_ + text_dim_), visual_dim_};
}

std::span<const float> FeatureStore::text(NodeId pin) const {
  return {values_.data() + slot(pin) * (visual_dim_ + text_dim_) + visual_dim_, text_dim_};
}

void save_features(const FeatureStore& store, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path);
  os.write(kMagic, 4);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(store.size()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(store.visual_dim()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(store.text_dim()));
  for (NodeId id : store.ids()) {
    put<std::uint64_t>(os, id);
    for (float v : store.visual(id)) put(os, v);
    for (float v : store.text(id)) put(os, v);
  }
  if (!os) throw DataError("write failed: " + path);
}

FeatureStore load_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError(path + ": not a feature file (bad magic)");
  }
  const auto count = get<std::uint32_t>(is, path);
  const auto dv = get<std::uint32_t>(is, path);
  const auto dt = get<std::uint32_t>(is, path);
  FeatureStore store(dv, dt);
  std::vector<double> vis(dv), txt(dt);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto id = get<std::uint64_t>(is, path);
    for (auto& v : vis) v = get<float>(is, path);
    for (auto& v : txt) v = get<float>(is, path);
    if (store.contains(id)) throw DataError(path + ": duplicate pin " + std::to_string(id));
    store.set(id, vis, txt);
  }
  if (is.peek() != std::char_traits<char>::eof()) throw DataError(path + ": trailing bytes");
  return store;
}

PinContext build_context(NodeId pin, const FeatureStore& features, const NeighborTable& table,
                         std::span<const int> graph_ids, const ModelConfig& cfg) {
  if (features.visual_dim() != cfg.visual_dim || features.text_dim() != cfg.text_dim) {
    throw ConfigError("feature widths do not match the model config");
  }
  if (graph_ids.size() != cfg.num_graphs) throw ConfigError("graph list length != k");
  auto copy = [](std::span<const float> src, double* dst) {
    std::copy(src.begin(), src.end(), dst);
  };
  PinContext ctx;
  ctx.pin = pin;
  ctx.visual = Tensor::matrix(1, cfg.visual_dim);
  ctx.text = Tensor::matrix(1, cfg.text_dim);
  copy(features.visual(pin), ctx.visual.data());
  copy(features.text(pin), ctx.text.data());
  for (int g : graph_ids) {
    GraphNeighbors block{Tensor::matrix(cfg.neighbors, cfg.visual_dim),
                         Tensor::matrix(cfg.neighbors, cfg.text_dim),
                         std::vector<std::uint8_t>(cfg.neighbors, 0)};
    const auto nbrs = table.neighbors(g, pin);
    for (std::size_t r = 0; r < std::min(nbrs.size(), cfg.neighbors); ++r) {
      copy(features.visual(nbrs[r].id), block.visual.data() + r * cfg.visual_dim);
      copy(features.text(nbrs[r].id), block.text.data() + r * cfg.text_dim);
      block.mask[r] = 1;
    }
    ctx.graphs.push_back(std::move(block));
  }
  return ctx;
}

}  // namespace multibisage
