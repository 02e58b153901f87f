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

#include "multibisage/sketch.h"

#include <algorithm>
#include <limits>

namespace multibisage {

CountMinSketch::CountMinSketch(std::size_t width, std::size_t depth,
                               std::uint64_t seed)
    : width_(width) {
  if (width < 1 || depth < 1) throw ConfigError("count-min sketch: width and depth must be >= 1");
  seeds_.reserve(depth);
  for (std::size_t r = 0; r < depth; ++r) seeds_.push_back(derive_seed(seed, r, 0x636d73));
  counters_.assign(width * depth, 0);
}

CountMinSketch::CountMinSketch(std::size_t width, std::vector<std::uint64_t> row_seeds,
                               std::vector<std::uint64_t> counters, std::uint64_t total)
    : width_(width), seeds_(std::move(row_seeds)), counters_(std::move(counters)),
      total_(total) {
  if (width_ < 1 || seeds_.empty() || counters_.size() != width_ * seeds_.size()) {
    throw DataError("count-min sketch: inconsistent serialized state");
  }
}

void CountMinSketch::increment(NodeId item) {
  for (std::size_t r = 0; r < seeds_.size(); ++r) ++counters_[cell(r, item)];
  ++total_;
}

std::uint64_t CountMinSketch::estimate(NodeId item) const {
  std::uint64_t best = std::numeric_limits<std::uint64_t>::max();
  for (std::size_t r = 0; r < seeds_.size(); ++r) best = std::min(best, counters_[cell(r, item)]);
  return best;
}

double CountMinSketch::probability(NodeId item, double floor) const {
  if (!(floor > 0.0)) throw ConfigError("count-min sketch: probability floor must be > 0");
  const double p = static_cast<double>(estimate(item)) /
                   static_cast<double>(std::max<std::uint64_t>(total_, 1));
  return std::max(p, floor);
}

void CountMinSketch::merge(const CountMinSketch& other) {
  if (other.width_ != width_ || other.seeds_ != seeds_) {
    throw ConfigError("count-min sketch: merge requires identical shape and seeds");
  }
  for (std::size_t i = 0; i < counters_.size(); ++i) counters_[i] += other.counters_[i];
  total_ += other.total_;
}

}  // namespace multibisage
