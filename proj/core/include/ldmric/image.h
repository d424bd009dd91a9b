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

#ifndef LDMRIC_IMAGE_H_
#define LDMRIC_IMAGE_H_

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ldmric/tensor.h"

namespace ldmric {

// H x W x C image with intensities in [0, 1], stored channel-first as a
// {C, H, W} tensor. C is 1 or 3.
class Image {
 public:
  Image() = default;
  Image(int channels, int height, int width, double fill = 0.0);
  // Takes a {C, H, W} tensor; throws DataError if the invariants fail.
  static Image FromTensor(Tensor t);
  // Clamps into [0, 1] instead of rejecting out-of-range values.
  static Image FromTensorClamped(Tensor t);
  // Interleaved 8-bit samples, row-major, `channels` per pixel.
  static Image FromInterleaved8(const std::vector<uint8_t>& pixels,
                                int channels, int height, int width);

  int channels() const { return tensor_.empty() ? 0 : tensor_.dim(0); }
  int height() const { return tensor_.empty() ? 0 : tensor_.dim(1); }
  int width() const { return tensor_.empty() ? 0 : tensor_.dim(2); }
  int64_t num_pixels() const {
    return static_cast<int64_t>(height()) * width();
  }
  const Tensor& tensor() const { return tensor_; }

  double at(int c, int y, int x) const { return tensor_.at(c, y, x); }
  void set(int c, int y, int x, double v) { tensor_.at(c, y, x) = v; }

  bool SameShape(const Image& other) const {
    return tensor_.shape() == other.tensor_.shape();
  }
  std::vector<uint8_t> ToInterleaved8() const;
  // Rounds every sample to the nearest 8-bit level.
  Image Quantized8() const;
  Image Crop(int y0, int x0, int height, int width) const;

  // Throws DataError unless every sample is finite and in [0, 1].
  void Validate() const;

 private:
  Tensor tensor_;
};

uint8_t ToByte(double v);

// 8-bit grayscale or RGB PNG. Alpha channels are dropped on read.
Image ReadPng(const std::filesystem::path& path);
void WritePng(const Image& image, const std::filesystem::path& path);

// Stable 64-bit FNV-1a digest of the 8-bit quantized samples and shape.
uint64_t ImageDigest(const Image& image);

}  // namespace ldmric

#endif  // LDMRIC_IMAGE_H_
