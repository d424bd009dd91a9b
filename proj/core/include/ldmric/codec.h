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

#ifndef LDMRIC_CODEC_H_
#define LDMRIC_CODEC_H_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ldmric/image.h"

namespace ldmric {

struct CodecResult {
  Image decoded;  // same shape as the encoded input
  double bpp = 0.0;
};

// Codec-specific rate knob; larger means higher quality for blockdct.
class QualityParam {
 public:
  explicit QualityParam(double value);
  double value() const { return value_; }

 private:
  double value_;
};

enum class CodecId { kIdentity, kBlockDct, kExternal, kPrecomputed };

CodecId ParseCodecId(std::string_view id);
std::string_view CodecIdName(CodecId id);

struct CodecConfig {
  CodecId id = CodecId::kBlockDct;
  // kExternal: shell command with {in}, {out}, {q} and optional {bits}
  // placeholders. The bitstream is expected at {bits}, or at "<out>.bits"
  // when the template has no {bits} placeholder.
  std::string external_command;
  // kPrecomputed: directory holding orig/, dec/ and bpp/.
  std::filesystem::path precomputed_root;
};

// A lossy compress/decompress round trip. Implementations are stateless
// after construction and safe to call concurrently.
class Codec {
 public:
  virtual ~Codec() = default;
  virtual CodecResult Roundtrip(const Image& image,
                                const QualityParam& q) const = 0;
  virtual CodecId id() const = 0;
};

// decoded == input; bpp = 8 * C (raw 8-bit storage).
class IdentityCodec : public Codec {
 public:
  CodecResult Roundtrip(const Image& image, const QualityParam& q) const override;
  CodecId id() const override { return CodecId::kIdentity; }
};

// 8x8 block DCT on each channel, uniform scalar quantization with the
// baseline JPEG luminance steps divided by q, zigzag run serialization and
// zlib deflate as the entropy stage. bpp = 8 * deflated bytes / (H * W).
class BlockDctCodec : public Codec {
 public:
  CodecResult Roundtrip(const Image& image, const QualityParam& q) const override;
  CodecId id() const override { return CodecId::kBlockDct; }

  // The serialized (pre-deflate) coefficient stream, exposed for tests.
  static std::vector<uint8_t> EncodeCoefficients(const Image& image,
                                                 const QualityParam& q,
                                                 Image* reconstruction);
};

class ExternalCodec : public Codec {
 public:
  explicit ExternalCodec(std::string command_template);
  CodecResult Roundtrip(const Image& image, const QualityParam& q) const override;
  CodecId id() const override { return CodecId::kExternal; }

 private:
  std::string command_template_;
};

// Serves decoded images produced offline by another codec, laid out as
// <root>/orig/<name>.png, <root>/dec/<name>.png, <root>/bpp/<name>.txt.
// Roundtrip() finds the entry whose original matches the input pixels.
class PrecomputedCodec : public Codec {
 public:
  explicit PrecomputedCodec(std::filesystem::path root);
  CodecResult Roundtrip(const Image& image, const QualityParam& q) const override;
  CodecId id() const override { return CodecId::kPrecomputed; }

  const std::vector<std::string>& names() const { return names_; }
  // Original plus its decoded counterpart for one entry.
  std::pair<Image, CodecResult> Load(const std::string& name) const;

 private:
  std::filesystem::path root_;
  std::vector<std::string> names_;
  std::unordered_map<uint64_t, std::string> by_digest_;
};

// Wraps a codec with an on-disk cache of decoded images keyed by the input
// digest, codec and quality. Used when LDMRIC_CACHE is set.
class CachedCodec : public Codec {
 public:
  CachedCodec(std::unique_ptr<Codec> inner, std::filesystem::path cache_dir);
  CodecResult Roundtrip(const Image& image, const QualityParam& q) const override;
  CodecId id() const override { return inner_->id(); }

 private:
  std::unique_ptr<Codec> inner_;
  std::filesystem::path cache_dir_;
};

std::unique_ptr<Codec> MakeCodec(const CodecConfig& config);
// MakeCodec plus a CachedCodec wrapper when LDMRIC_CACHE names a directory.
std::unique_ptr<Codec> MakeCodecFromEnvironment(const CodecConfig& config);

CodecResult CompressRoundtrip(const Image& image, const QualityParam& q,
                              const CodecConfig& config);

// Parses a UTF-8 decimal bpp sidecar; throws DataError when missing,
// malformed or negative.
double ReadBppSidecar(const std::filesystem::path& path);
void WriteBppSidecar(const std::filesystem::path& path, double bpp);

std::pair<Image, CodecResult> LoadPrecomputedPair(
    const std::filesystem::path& original_path,
    const std::filesystem::path& decoded_path,
    const std::filesystem::path& bpp_sidecar);

}  // namespace ldmric

#endif  // LDMRIC_CODEC_H_
