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

#include "ldmric/data.h"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <thread>

#include "ldmric/errors.h"

namespace ldmric {
namespace fs = std::filesystem;

void AugmentConfig::Validate() const {
  if (crop_size < 1) throw ConfigError("data.crop_size must be >= 1");
  if (!(hflip_prob >= 0.0 && hflip_prob <= 1.0) ||
      !(vflip_prob >= 0.0 && vflip_prob <= 1.0)) {
    throw ConfigError("flip probabilities must lie in [0, 1]");
  }
}

Image FlipHorizontal(const Image& image) {
  Image out(image.channels(), image.height(), image.width());
  const int w = image.width();
  for (int c = 0; c < image.channels(); ++c)
    for (int y = 0; y < image.height(); ++y)
      for (int x = 0; x < w; ++x) out.set(c, y, x, image.at(c, y, w - 1 - x));
  return out;
}

Image FlipVertical(const Image& image) {
  Image out(image.channels(), image.height(), image.width());
  const int h = image.height();
  for (int c = 0; c < image.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < image.width(); ++x) {
        out.set(c, y, x, image.at(c, h - 1 - y, x));
      }
  return out;
}

PairedSample Augment(const PairedSample& sample, const AugmentConfig& config,
                     Rng& rng) {
  config.Validate();
  if (!sample.original.SameShape(sample.decoded)) {
    throw DataError("sample " + sample.id + ": original and decoded differ in shape");
  }
  const int h = sample.original.height(), w = sample.original.width();
  const int c = config.crop_size;
  if (c > h || c > w) {
    throw DataError("crop " + std::to_string(c) + " exceeds sample " + sample.id +
                    " of " + std::to_string(h) + "x" + std::to_string(w));
  }
  const int y0 = static_cast<int>(rng.Below(static_cast<uint64_t>(h - c + 1)));
  const int x0 = static_cast<int>(rng.Below(static_cast<uint64_t>(w - c + 1)));
  const bool hflip = rng.Bernoulli(config.hflip_prob);
  const bool vflip = rng.Bernoulli(config.vflip_prob);
  auto apply = [&](const Image& img) {
    Image out = (c == h && c == w) ? img : img.Crop(y0, x0, c, c);
    if (hflip) out = FlipHorizontal(out);
    if (vflip) out = FlipVertical(out);
    return out;
  };
  return {apply(sample.original), apply(sample.decoded), sample.bpp, sample.id};
}

void ParallelFor(size_t n, int workers, const std::function<void(size_t)>& fn) {
  const size_t threads = std::min<size_t>(std::max(1, workers), n);
  if (threads <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::vector<std::string> ReadManifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read manifest " + path.string());
  std::vector<std::string> entries;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r\n");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r\n");
    entries.push_back(line.substr(b, e - b + 1));
  }
  return entries;
}

std::vector<std::string> ListPngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      names.push_back(entry.path().filename().string());
    }
  }
  std::sort(names.begin(), names.end());
  return names;
}

PairedDataset::PairedDataset(std::vector<PairedSample> samples)
    : samples_(std::move(samples)) {
  for (const PairedSample& s : samples_) {
    if (!s.original.SameShape(s.decoded)) {
      throw DataError("sample " + s.id + ": original and decoded differ in shape");
    }
  }
}

PairedDataset PairedDataset::FromOriginals(const fs::path& root,
                                           const fs::path& manifest,
                                           const Codec& codec,
                                           const QualityParam& q, int workers) {
  const std::vector<std::string> names =
      manifest.empty() ? ListPngs(root) : ReadManifest(manifest);
  if (names.empty()) throw DataError("no images found under " + root.string());
  std::vector<PairedSample> samples(names.size());
  ParallelFor(names.size(), workers, [&](size_t i) {
    Image original = ReadPng(root / names[i]);
    CodecResult r = codec.Roundtrip(original, q);
    samples[i] = {std::move(original), std::move(r.decoded), r.bpp, names[i]};
  });
  return PairedDataset(std::move(samples));
}

PairedDataset PairedDataset::FromPrecomputed(const fs::path& root,
                                             const fs::path& manifest,
                                             int workers) {
  std::vector<std::string> names;
  if (manifest.empty()) {
    for (const std::string& f : ListPngs(root / "orig")) {
      names.push_back(fs::path(f).stem().string());
    }
  } else {
    for (const std::string& f : ReadManifest(manifest)) {
      names.push_back(fs::path(f).stem().string());
    }
  }
  if (names.empty()) throw DataError("no images found under " + root.string());
  std::vector<PairedSample> samples(names.size());
  ParallelFor(names.size(), workers, [&](size_t i) {
    auto [original, result] = LoadPrecomputedPair(
        root / "orig" / (names[i] + ".png"), root / "dec" / (names[i] + ".png"),
        root / "bpp" / (names[i] + ".txt"));
    samples[i] = {std::move(original), std::move(result.decoded), result.bpp,
                  names[i] + ".png"};
  });
  return PairedDataset(std::move(samples));
}

BatchSchedule::BatchSchedule(size_t dataset_size, int batch_size, uint64_t seed)
    : n_(dataset_size), batch_size_(batch_size), seed_(seed) {
  if (n_ == 0) throw DataError("cannot batch an empty dataset");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
}

std::vector<size_t> BatchSchedule::EpochOrder(int64_t epoch) const {
  std::vector<size_t> order(n_);
  for (size_t i = 0; i < n_; ++i) order[i] = i;
  Rng rng(DeriveSeed({seed_, static_cast<uint64_t>(epoch), 0x5348554646ull}));
  for (size_t i = n_ - 1; i > 0; --i) {
    const size_t j = static_cast<size_t>(rng.Below(i + 1));
    std::swap(order[i], order[j]);
  }
  return order;
}

std::vector<std::vector<size_t>> BatchSchedule::EpochBatches(int64_t epoch) const {
  const std::vector<size_t> order = EpochOrder(epoch);
  std::vector<std::vector<size_t>> batches;
  for (size_t i = 0; i < n_; i += batch_size_) {
    batches.emplace_back(order.begin() + i,
                         order.begin() + std::min(n_, i + batch_size_));
  }
  return batches;
}

size_t BatchSchedule::batches_per_epoch() const {
  return (n_ + batch_size_ - 1) / batch_size_;
}

BatchLoader::BatchLoader(const PairedDataset& dataset,
                         const AugmentConfig& augment, int batch_size,
                         uint64_t shuffle_seed, int workers)
    : dataset_(dataset),
      augment_(augment),
      schedule_(dataset.size(), batch_size, shuffle_seed),
      workers_(std::max(1, workers)) {
  augment_.Validate();
}

Batch BatchLoader::Make(int64_t epoch, std::vector<size_t> indices) const {
  Batch batch;
  batch.epoch = epoch;
  for (size_t idx : indices) {
    Rng rng(DeriveSeed({augment_.seed, static_cast<uint64_t>(idx),
                        static_cast<uint64_t>(epoch)}));
    batch.samples.push_back(Augment(dataset_[idx], augment_, rng));
  }
  batch.indices = std::move(indices);
  return batch;
}

void BatchLoader::Refill() {
  while (plan_.size() < static_cast<size_t>(workers_)) {
    for (auto& b : schedule_.EpochBatches(epoch_)) plan_.emplace_back(epoch_, std::move(b));
    ++epoch_;
  }
}

Batch BatchLoader::Next() {
  Refill();
  if (workers_ <= 1) {
    auto [epoch, indices] = std::move(plan_.front());
    plan_.pop_front();
    return Make(epoch, std::move(indices));
  }
  while (ahead_.size() < static_cast<size_t>(workers_)) {
    Refill();
    auto [epoch, indices] = std::move(plan_.front());
    plan_.pop_front();
    ahead_.push_back(std::async(std::launch::async,
                                [this, epoch = epoch, indices = std::move(indices)] {
                                  return Make(epoch, indices);
                                }));
  }
  Batch batch = ahead_.front().get();
  ahead_.pop_front();
  return batch;
}

}  // namespace ldmric
