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

#ifndef LDMRIC_TENSOR_H_
#define LDMRIC_TENSOR_H_

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ldmric {

using Shape = std::vector<int>;

// Cache-line aligned allocation. Vectorized kernels choose their split
// between peeled and packet loops from the buffer address, so a fixed
// alignment keeps results bit-reproducible from run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlignment));
  }
  void deallocate(T* p, size_t) { ::operator delete(p, kAlignment); }

  // Sized construction leaves elements uninitialized; fills stay explicit.
  template <typename U>
  void construct(U* p) noexcept {
    ::new (static_cast<void*>(p)) U;
  }
  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Storage = std::vector<double, AlignedAllocator<double>>;

std::string ShapeToString(const Shape& shape);
int64_t NumElements(const Shape& shape);

// Dense row-major array of doubles. Feature maps are stored channel-first
// as {C, H, W}; token matrices as {C, L}.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor Scalar(double v) { return Tensor(Shape{1}, v); }
  // Contents are unspecified; for outputs that are overwritten in full.
  static Tensor Uninitialized(Shape shape);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[i]; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  Storage& storage() { return data_; }
  const Storage& storage() const { return data_; }
  std::vector<double> ToVector() const { return {data_.begin(), data_.end()}; }

  double& operator[](int64_t i) { return data_[i]; }
  double operator[](int64_t i) const { return data_[i]; }

  // {C, H, W} accessors.
  double& at(int c, int y, int x) {
    return data_[(static_cast<int64_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  const double& at(int c, int y, int x) const {
    return data_[(static_cast<int64_t>(c) * shape_[1] + y) * shape_[2] + x];
  }

  // Same data, new shape with equal element count.
  Tensor Reshaped(Shape shape) const;
  void Fill(double v);
  bool SameShape(const Tensor& other) const { return shape_ == other.shape_; }

  double Sum() const;
  double MaxAbs() const;
  bool AllFinite() const;

 private:
  Shape shape_;
  Storage data_;
};

// Elementwise helpers used outside the autograd graph.
double MaxAbsDiff(const Tensor& a, const Tensor& b);
void AddInPlace(Tensor& dst, const Tensor& src, double scale = 1.0);

}  // namespace ldmric

#endif  // LDMRIC_TENSOR_H_
