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

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "multibisage/common.h"

namespace multibisage {

/// Count-min sketch over 64-bit item ids. Estimates never undercount.
/// Single writer; concurrent readers are fine while no write is in flight.
class CountMinSketch {
 public:
  static constexpr std::size_t kDefaultWidth = 2048;
  static constexpr std::size_t kDefaultDepth = 4;
  static constexpr double kDefaultFloor = 1e-9;

  explicit CountMinSketch(std::size_t width = kDefaultWidth,
                          std::size_t depth = kDefaultDepth,
                          std::uint64_t seed = 0);

  /// Rebuilds a sketch from serialized parts.
  CountMinSketch(std::size_t width, std::vector<std::uint64_t> row_seeds,
                 std::vector<std::uint64_t> counters, std::uint64_t total);

  void increment(NodeId item);
  std::uint64_t estimate(NodeId item) const;
  /// max(estimate / max(total, 1), floor).
  double probability(NodeId item, double floor = kDefaultFloor) const;

  /// Cell-wise sum; requires identical dimensions and row seeds.
  void merge(const CountMinSketch& other);

  std::size_t width() const { return width_; }
  std::size_t depth() const { return seeds_.size(); }
  std::uint64_t total() const { return total_; }
  std::span<const std::uint64_t> row_seeds() const { return seeds_; }
  std::span<const std::uint64_t> counters() const { return counters_; }

  friend bool operator==(const CountMinSketch&, const CountMinSketch&) = default;

 private:
  std::size_t cell(std::size_t row, NodeId item) const {
    return row * width_ + mix64(item ^ seeds_[row]) % width_;
  }

  std::size_t width_;
  std::vector<std::uint64_t> seeds_;
  std::vector<std::uint64_t> counters_;  // depth x width, row-major
  std::uint64_t total_ = 0;
};

}  // namespace multibisage
