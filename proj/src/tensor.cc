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

#include "multibisage/tensor.h"

#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "multibisage/common.h"

namespace multibisage {

Tensor::Tensor(std::vector<std::size_t> dims, double fill) : dims_(std::move(dims)) {
  const std::size_t n = std::accumulate(dims_.begin(), dims_.end(), std::size_t{1},
                                        std::multiplies<>());
  data_.assign(dims_.empty() ? 0 : n, fill);
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Tensor t = matrix(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw ConfigError("Tensor::from_rows: ragged rows");
    for (double v : row) t.data_[i++] = v;
  }
  return t;
}

Tensor Tensor::from_values(std::vector<std::size_t> dims, std::vector<double> values) {
  Tensor t(std::move(dims));
  if (t.size() != values.size()) {
    throw ConfigError("Tensor::from_values: expected " + std::to_string(t.size()) +
                      " values, got " + std::to_string(values.size()));
  }
  t.data_ = std::move(values);
  return t;
}

std::size_t Tensor::rows() const {
  if (dims_.empty()) return 0;
  if (dims_.size() == 1) return 1;
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < dims_.size(); ++i) r *= dims_[i];
  return r;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor& Tensor::operator+=(const Tensor& o) {
  if (o.size() != size()) throw ConfigError("Tensor +=: size mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

}  // namespace multibisage
