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

#ifndef LDMRIC_DATA_H_
#define LDMRIC_DATA_H_

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <future>
#include <string>
#include <vector>

#include "ldmric/codec.h"
#include "ldmric/image.h"
#include "ldmric/rng.h"

namespace ldmric {

struct PairedSample {
  Image original;
  Image decoded;
  double bpp = 0.0;
  std::string id;
};

struct AugmentConfig {
  int crop_size = 64;
  double hflip_prob = 0.5;
  double vflip_prob = 0.5;
  uint64_t seed = 0;
  void Validate() const;
};

Image FlipHorizontal(const Image& image);
Image FlipVertical(const Image& image);

// One crop window and one pair of flip decisions drawn from `rng`, applied
// identically to both images.
PairedSample Augment(const PairedSample& sample, const AugmentConfig& config,
                     Rng& rng);

// Runs fn(i) for i in [0, n) on up to `workers` threads.
void ParallelFor(size_t n, int workers, const std::function<void(size_t)>& fn);

// UTF-8 list of relative paths, one per line; blank lines and lines
// starting with '#' are skipped.
std::vector<std::string> ReadManifest(const std::filesystem::path& path);
// Sorted relative paths of the PNG files directly inside `dir`.
std::vector<std::string> ListPngs(const std::filesystem::path& dir);

class PairedDataset {
 public:
  PairedDataset() = default;
  explicit PairedDataset(std::vector<PairedSample> samples);

  // Loads originals from root (all PNGs, or the manifest entries) and
  // decodes each through `codec` at quality `q`.
  static PairedDataset FromOriginals(const std::filesystem::path& root,
                                     const std::filesystem::path& manifest,
                                     const Codec& codec, const QualityParam& q,
                                     int workers = 1);
  // Reads <root>/{orig,dec}/<name>.png and <root>/bpp/<name>.txt.
  static PairedDataset FromPrecomputed(const std::filesystem::path& root,
                                       const std::filesystem::path& manifest,
                                       int workers = 1);

  size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const PairedSample& operator[](size_t i) const { return samples_[i]; }
  const std::vector<PairedSample>& samples() const { return samples_; }

 private:
  std::vector<PairedSample> samples_;
};

// Epoch-wise shuffled index batches. Epoch e uses a Fisher-Yates permutation
// seeded by (seed, e); the final batch of an epoch may be short.
class BatchSchedule {
 public:
  BatchSchedule(size_t dataset_size, int batch_size, uint64_t seed);
  std::vector<size_t> EpochOrder(int64_t epoch) const;
  std::vector<std::vector<size_t>> EpochBatches(int64_t epoch) const;
  size_t batches_per_epoch() const;

 private:
  size_t n_;
  int batch_size_;
  uint64_t seed_;
};

struct Batch {
  int64_t epoch = 0;
  std::vector<size_t> indices;
  std::vector<PairedSample> samples;
};

// Streams augmented batches in order. Each sample's augmentation stream is
// seeded by (augment seed, sample index, epoch), so the output does not
// depend on the number of workers. With workers > 1 batches are prepared
// ahead on background threads.
class BatchLoader {
 public:
  BatchLoader(const PairedDataset& dataset, const AugmentConfig& augment,
              int batch_size, uint64_t shuffle_seed, int workers = 1);
  Batch Next();

 private:
  Batch Make(int64_t epoch, std::vector<size_t> indices) const;
  void Refill();

  const PairedDataset& dataset_;
  AugmentConfig augment_;
  BatchSchedule schedule_;
  int workers_;
  int64_t epoch_ = 0;
  std::deque<std::pair<int64_t, std::vector<size_t>>> plan_;
  std::deque<std::future<Batch>> ahead_;
};

}  // namespace ldmric

#endif  // LDMRIC_DATA_H_
