// Copyright 2026 The ldmric Authors
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

#include "ldmric/tensor.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ldmric/errors.h"

namespace ldmric {

std::string ShapeToString(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

int64_t NumElements(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in " + ShapeToString(shape));
    n *= d;
  }
  return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(NumElements(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(values.begin(), values.end()) {
  if (NumElements(shape_) != static_cast<int64_t>(data_.size())) {
    throw ShapeError("value count " + std::to_string(data_.size()) +
                     " does not match shape " + ShapeToString(shape_));
  }
}

Tensor Tensor::Uninitialized(Shape shape) {
  Tensor t;
  t.data_ = Storage(NumElements(shape));
  t.shape_ = std::move(shape);
  return t;
}

Tensor Tensor::Reshaped(Shape shape) const {
  if (NumElements(shape) != size()) {
    throw ShapeError("cannot reshape " + ShapeToString(shape_) + " to " +
                     ShapeToString(shape));
  }
  Tensor out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

void Tensor::Fill(double v) { std::fill(data_.begin(), data_.end(), v); }

double Tensor::Sum() const {
  return std::accumulate(data_.begin(), data_.end(), 0.0);
}

double Tensor::MaxAbs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

bool Tensor::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

double MaxAbsDiff(const Tensor& a, const Tensor& b) {
  if (!a.SameShape(b)) {
    throw ShapeError("MaxAbsDiff shape mismatch " + ShapeToString(a.shape()) +
                     " vs " + ShapeToString(b.shape()));
  }
  double m = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void AddInPlace(Tensor& dst, const Tensor& src, double scale) {
  if (dst.size() != src.size()) {
    throw ShapeError("AddInPlace size mismatch " + ShapeToString(dst.shape()) +
                     " vs " + ShapeToString(src.shape()));
  }
  double* d = dst.data();
  const double* s = src.data();
  for (int64_t i = 0; i < dst.size(); ++i) d[i] += scale * s[i];
}

}  // namespace ldmric
