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

#include "ldmric/image.h"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "ldmric/errors.h"

namespace ldmric {

uint8_t ToByte(double v) {
  const double scaled = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
  return static_cast<uint8_t>(scaled);
}

Image::Image(int channels, int height, int width, double fill)
    : tensor_(Shape{channels, height, width}, fill) {
  if (channels != 1 && channels != 3) {
    throw DataError("images must have 1 or 3 channels, got " +
                    std::to_string(channels));
  }
}

Image Image::FromTensor(Tensor t) {
  if (t.rank() != 3 || (t.dim(0) != 1 && t.dim(0) != 3)) {
    throw ShapeError("image tensor must be {1|3, H, W}, got " +
                     ShapeToString(t.shape()));
  }
  Image img;
  img.tensor_ = std::move(t);
  img.Validate();
  return img;
}

Image Image::FromTensorClamped(Tensor t) {
  for (double& v : t.values()) {
    if (!std::isfinite(v)) throw DataError("non-finite image sample");
    v = std::clamp(v, 0.0, 1.0);
  }
  return FromTensor(std::move(t));
}

Image Image::FromInterleaved8(const std::vector<uint8_t>& pixels, int channels,
                              int height, int width) {
  if (static_cast<int64_t>(pixels.size()) !=
      static_cast<int64_t>(channels) * height * width) {
    throw DataError("pixel buffer size does not match image dimensions");
  }
  Image img(channels, height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c) {
        img.tensor_.at(c, y, x) =
            pixels[(static_cast<size_t>(y) * width + x) * channels + c] / 255.0;
      }
  return img;
}

std::vector<uint8_t> Image::ToInterleaved8() const {
  const int c_n = channels(), h = height(), w = width();
  std::vector<uint8_t> out(static_cast<size_t>(c_n) * h * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < c_n; ++c) {
        out[(static_cast<size_t>(y) * w + x) * c_n + c] = ToByte(at(c, y, x));
      }
  return out;
}

Image Image::Quantized8() const {
  Image out = *this;
  for (double& v : out.tensor_.values()) v = ToByte(v) / 255.0;
  return out;
}

Image Image::Crop(int y0, int x0, int h, int w) const {
  if (y0 < 0 || x0 < 0 || h < 1 || w < 1 || y0 + h > height() ||
      x0 + w > width()) {
    throw DataError("crop window out of bounds");
  }
  Image out(channels(), h, w);
  for (int c = 0; c < channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.set(c, y, x, at(c, y0 + y, x0 + x));
  return out;
}

void Image::Validate() const {
  for (double v : tensor_.values()) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw DataError("image sample outside [0, 1]: " + std::to_string(v));
    }
  }
}

Image ReadPng(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    throw DataError("cannot read PNG " + path.string() + ": " + png.message);
  }
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int channels = color ? 3 : 1;
  std::vector<uint8_t> buffer(PNG_IMAGE_SIZE(png));
  png_color background{0, 0, 0};
  if (!png_image_finish_read(&png, &background, buffer.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw DataError("cannot decode PNG " + path.string() + ": " + msg);
  }
  return Image::FromInterleaved8(buffer, channels, png.height, png.width);
}

void WritePng(const Image& image, const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = image.width();
  png.height = image.height();
  png.format = image.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const std::vector<uint8_t> pixels = image.ToInterleaved8();
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, pixels.data(), 0,
                               nullptr)) {
    throw DataError("cannot write PNG " + path.string() + ": " + png.message);
  }
}

uint64_t ImageDigest(const Image& image) {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](uint8_t b) {
    h ^= b;
    h *= 0x100000001b3ULL;
  };
  for (int d : image.tensor().shape()) {
    for (int k = 0; k < 4; ++k) mix(static_cast<uint8_t>(d >> (8 * k)));
  }
  for (uint8_t b : image.ToInterleaved8()) mix(b);
  return h;
}

}  // namespace ldmric
