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

#include "ldmric/codec.h"

#include <sys/wait.h>
#include <zlib.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>
#include <unistd.h>

#include "ldmric/errors.h"

namespace ldmric {
namespace fs = std::filesystem;

QualityParam::QualityParam(double value) : value_(value) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw ConfigError("quality parameter must be positive, got " +
                      std::to_string(value));
  }
}

CodecId ParseCodecId(std::string_view id) {
  if (id == "identity") return CodecId::kIdentity;
  if (id == "blockdct") return CodecId::kBlockDct;
  if (id == "external") return CodecId::kExternal;
  if (id == "precomputed") return CodecId::kPrecomputed;
  throw ConfigError("unknown codec id '" + std::string(id) +
                    "' (expected identity, blockdct, external or precomputed)");
}

std::string_view CodecIdName(CodecId id) {
  switch (id) {
    case CodecId::kIdentity: return "identity";
    case CodecId::kBlockDct: return "blockdct";
    case CodecId::kExternal: return "external";
    case CodecId::kPrecomputed: return "precomputed";
  }
  return "unknown";
}

CodecResult IdentityCodec::Roundtrip(const Image& image,
                                     const QualityParam&) const {
  image.Validate();
  return {image, 8.0 * image.channels()};
}

namespace {

constexpr int kBlock = 8;

constexpr std::array<int, 64> kLumaSteps = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

constexpr std::array<int, 64> kZigzag = {
    0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,
    12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6,  7,  14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63};

// basis[u][x] = alpha(u) cos((2x + 1) u pi / 16), orthonormal DCT-II.
const std::array<std::array<double, 8>, 8>& DctBasis() {
  static const auto basis = [] {
    std::array<std::array<double, 8>, 8> b{};
    for (int u = 0; u < kBlock; ++u) {
      const double alpha = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int x = 0; x < kBlock; ++x) {
        b[u][x] = alpha * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
      }
    }
    return b;
  }();
  return basis;
}

void ForwardDct(const double in[64], double out[64]) {
  const auto& b = DctBasis();
  double tmp[64];
  for (int y = 0; y < 8; ++y)
    for (int u = 0; u < 8; ++u) {
      double s = 0.0;
      for (int x = 0; x < 8; ++x) s += b[u][x] * in[y * 8 + x];
      tmp[y * 8 + u] = s;
    }
  for (int v = 0; v < 8; ++v)
    for (int u = 0; u < 8; ++u) {
      double s = 0.0;
      for (int y = 0; y < 8; ++y) s += b[v][y] * tmp[y * 8 + u];
      out[v * 8 + u] = s;
    }
}

void InverseDct(const double in[64], double out[64]) {
  const auto& b = DctBasis();
  double tmp[64];
  for (int v = 0; v < 8; ++v)
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int u = 0; u < 8; ++u) s += b[u][x] * in[v * 8 + u];
      tmp[v * 8 + x] = s;
    }
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int v = 0; v < 8; ++v) s += b[v][y] * tmp[v * 8 + x];
      out[y * 8 + x] = s;
    }
}

int Reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

void PutVarint(std::vector<uint8_t>& out, int64_t v) {
  uint64_t u = (static_cast<uint64_t>(v) << 1) ^ static_cast<uint64_t>(v >> 63);
  while (u >= 0x80) {
    out.push_back(static_cast<uint8_t>(u | 0x80));
    u >>= 7;
  }
  out.push_back(static_cast<uint8_t>(u));
}

std::string FormatQuality(double q) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", q);
  return buf;
}

std::string ReplaceAll(std::string s, const std::string& from,
                       const std::string& to) {
  size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

std::string ShellQuote(const std::string& s) {
  return "'" + ReplaceAll(s, "'", "'\\''") + "'";
}

fs::path UniqueTempDir(const std::string& tag) {
  static std::atomic<uint64_t> counter{0};
  const fs::path dir = fs::temp_directory_path() /
                       ("ldmric_" + tag + "_" + std::to_string(::getpid()) +
                        "_" + std::to_string(counter++));
  fs::create_directories(dir);
  return dir;
}

}  // namespace

std::vector<uint8_t> BlockDctCodec::EncodeCoefficients(const Image& image,
                                                       const QualityParam& q,
                                                       Image* reconstruction) {
  image.Validate();
  const int h = image.height(), w = image.width(), channels = image.channels();
  if (h < kBlock || w < kBlock) {
    throw DataError("blockdct needs at least 8x8 pixels, got " +
                    std::to_string(h) + "x" + std::to_string(w));
  }
  const int ph = (h + kBlock - 1) / kBlock * kBlock;
  const int pw = (w + kBlock - 1) / kBlock * kBlock;
  std::array<double, 64> steps;
  for (int i = 0; i < 64; ++i) steps[i] = kLumaSteps[i] / q.value();

  std::vector<uint8_t> stream;
  Image recon(channels, h, w);
  for (int c = 0; c < channels; ++c) {
    int64_t prev_dc = 0;
    for (int by = 0; by < ph; by += kBlock)
      for (int bx = 0; bx < pw; bx += kBlock) {
        double block[64], coef[64];
        for (int y = 0; y < kBlock; ++y)
          for (int x = 0; x < kBlock; ++x) {
            const int sy = Reflect(by + y, h), sx = Reflect(bx + x, w);
            block[y * 8 + x] = ToByte(image.at(c, sy, sx)) - 128.0;
          }
        ForwardDct(block, coef);
        int64_t levels[64];
        for (int i = 0; i < 64; ++i) levels[i] = std::llround(coef[i] / steps[i]);

        int64_t symbols[64];
        for (int k = 0; k < 64; ++k) symbols[k] = levels[kZigzag[k]];
        const int64_t dc = symbols[0];
        symbols[0] = dc - prev_dc;
        prev_dc = dc;
        int count = 0;
        for (int k = 0; k < 64; ++k) {
          if (symbols[k] != 0) count = k + 1;
        }
        stream.push_back(static_cast<uint8_t>(count));
        for (int k = 0; k < count; ++k) PutVarint(stream, symbols[k]);

        for (int i = 0; i < 64; ++i) coef[i] = levels[i] * steps[i];
        InverseDct(coef, block);
        for (int y = 0; y < kBlock; ++y)
          for (int x = 0; x < kBlock; ++x) {
            const int yy = by + y, xx = bx + x;
            if (yy >= h || xx >= w) continue;
            const double v = std::clamp(std::round(block[y * 8 + x] + 128.0),
                                        0.0, 255.0);
            recon.set(c, yy, xx, v / 255.0);
          }
      }
  }
  if (reconstruction) *reconstruction = std::move(recon);
  return stream;
}

CodecResult BlockDctCodec::Roundtrip(const Image& image,
                                     const QualityParam& q) const {
  CodecResult result;
  const std::vector<uint8_t> stream = EncodeCoefficients(image, q, &result.decoded);
  uLongf bound = compressBound(stream.size());
  std::vector<uint8_t> packed(bound);
  if (compress2(packed.data(), &bound, stream.data(), stream.size(),
                Z_BEST_COMPRESSION) != Z_OK) {
    throw BackendError("deflate failed", -1);
  }
  result.bpp = 8.0 * static_cast<double>(bound) /
               static_cast<double>(image.num_pixels());
  return result;
}

ExternalCodec::ExternalCodec(std::string command_template)
    : command_template_(std::move(command_template)) {
  if (command_template_.find("{in}") == std::string::npos ||
      command_template_.find("{out}") == std::string::npos) {
    throw ConfigError(
        "external codec command must contain {in} and {out} placeholders");
  }
}

CodecResult ExternalCodec::Roundtrip(const Image& image,
                                     const QualityParam& q) const {
  image.Validate();
  const fs::path dir = UniqueTempDir("ext");
  const fs::path in = dir / "input.png";
  const fs::path out = dir / "decoded.png";
  const fs::path bits = dir / "decoded.png.bits";
  WritePng(image, in);
  std::string cmd = command_template_;
  cmd = ReplaceAll(cmd, "{in}", ShellQuote(in.string()));
  cmd = ReplaceAll(cmd, "{out}", ShellQuote(out.string()));
  cmd = ReplaceAll(cmd, "{bits}", ShellQuote(bits.string()));
  cmd = ReplaceAll(cmd, "{q}", FormatQuality(q.value()));
  const int raw = std::system(cmd.c_str());
  const int status = raw == -1 ? -1 : (WIFEXITED(raw) ? WEXITSTATUS(raw) : 128);
  auto cleanup = [&dir] {
    std::error_code ec;
    fs::remove_all(dir, ec);
  };
  if (status != 0) {
    cleanup();
    throw BackendError("external codec exited with status " +
                           std::to_string(status) + ": " + cmd,
                       status);
  }
  if (!fs::exists(out) || !fs::exists(bits)) {
    cleanup();
    throw BackendError("external codec did not produce " +
                           std::string(fs::exists(out) ? bits.filename().string()
                                                       : out.filename().string()),
                       status);
  }
  CodecResult result;
  result.decoded = ReadPng(out);
  const auto bytes = fs::file_size(bits);
  cleanup();
  if (!result.decoded.SameShape(image)) {
    throw BackendError("external codec changed the image shape", status);
  }
  result.bpp = 8.0 * static_cast<double>(bytes) /
               static_cast<double>(image.num_pixels());
  return result;
}

PrecomputedCodec::PrecomputedCodec(fs::path root) : root_(std::move(root)) {
  const fs::path orig = root_ / "orig";
  if (!fs::is_directory(orig)) {
    throw DataError("precomputed root lacks orig/: " + root_.string());
  }
  for (const auto& entry : fs::directory_iterator(orig)) {
    if (entry.path().extension() == ".png") {
      names_.push_back(entry.path().stem().string());
    }
  }
  std::sort(names_.begin(), names_.end());
  if (names_.empty()) throw DataError("no PNG files under " + orig.string());
  for (const std::string& name : names_) {
    by_digest_[ImageDigest(ReadPng(orig / (name + ".png")))] = name;
  }
}

std::pair<Image, CodecResult> PrecomputedCodec::Load(
    const std::string& name) const {
  return LoadPrecomputedPair(root_ / "orig" / (name + ".png"),
                             root_ / "dec" / (name + ".png"),
                             root_ / "bpp" / (name + ".txt"));
}

CodecResult PrecomputedCodec::Roundtrip(const Image& image,
                                        const QualityParam&) const {
  auto it = by_digest_.find(ImageDigest(image));
  if (it == by_digest_.end()) {
    throw DataError("image not found among precomputed originals in " +
                    root_.string());
  }
  return Load(it->second).second;
}

CachedCodec::CachedCodec(std::unique_ptr<Codec> inner, fs::path cache_dir)
    : inner_(std::move(inner)), cache_dir_(std::move(cache_dir)) {
  fs::create_directories(cache_dir_);
}

CodecResult CachedCodec::Roundtrip(const Image& image,
                                   const QualityParam& q) const {
  char key[128];
  std::snprintf(key, sizeof(key), "%016llx_%s_q%.9g",
                static_cast<unsigned long long>(ImageDigest(image)),
                std::string(CodecIdName(inner_->id())).c_str(), q.value());
  const fs::path png = cache_dir_ / (std::string(key) + ".png");
  const fs::path txt = cache_dir_ / (std::string(key) + ".txt");
  if (fs::exists(png) && fs::exists(txt)) {
    CodecResult cached{ReadPng(png), ReadBppSidecar(txt)};
    if (cached.decoded.SameShape(image)) return cached;
  }
  CodecResult result = inner_->Roundtrip(image, q);
  // Write under temporary names first so concurrent readers never see a
  // partial entry.
  const std::string tmp_suffix = ".tmp" + std::to_string(::getpid());
  WritePng(result.decoded, png.string() + tmp_suffix);
  WriteBppSidecar(txt.string() + tmp_suffix, result.bpp);
  fs::rename(png.string() + tmp_suffix, png);
  fs::rename(txt.string() + tmp_suffix, txt);
  return result;
}

std::unique_ptr<Codec> MakeCodec(const CodecConfig& config) {
  switch (config.id) {
    case CodecId::kIdentity: return std::make_unique<IdentityCodec>();
    case CodecId::kBlockDct: return std::make_unique<BlockDctCodec>();
    case CodecId::kExternal:
      return std::make_unique<ExternalCodec>(config.external_command);
    case CodecId::kPrecomputed:
      return std::make_unique<PrecomputedCodec>(config.precomputed_root);
  }
  throw ConfigError("unknown codec");
}

std::unique_ptr<Codec> MakeCodecFromEnvironment(const CodecConfig& config) {
  std::unique_ptr<Codec> codec = MakeCodec(config);
  const char* cache = std::getenv("LDMRIC_CACHE");
  if (cache && *cache && config.id != CodecId::kIdentity &&
      config.id != CodecId::kPrecomputed) {
    return std::make_unique<CachedCodec>(std::move(codec), fs::path(cache));
  }
  return codec;
}

CodecResult CompressRoundtrip(const Image& image, const QualityParam& q,
                              const CodecConfig& config) {
  return MakeCodec(config)->Roundtrip(image, q);
}

double ReadBppSidecar(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing bpp sidecar " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) {
    throw DataError("empty bpp sidecar " + path.string());
  }
  text = text.substr(first, text.find_last_not_of(" \t\r\n") - first + 1);
  char* end = nullptr;
  const double bpp = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size() || !std::isfinite(bpp)) {
    throw DataError("malformed bpp sidecar " + path.string() + ": '" + text +
                    "'");
  }
  if (bpp < 0.0) {
    throw DataError("negative bpp in sidecar " + path.string());
  }
  return bpp;
}

void WriteBppSidecar(const fs::path& path, double bpp) {
  std::ofstream out(path);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g\n", bpp);
  out << buf;
  if (!out) throw DataError("cannot write " + path.string());
}

std::pair<Image, CodecResult> LoadPrecomputedPair(
    const fs::path& original_path, const fs::path& decoded_path,
    const fs::path& bpp_sidecar) {
  Image original = ReadPng(original_path);
  Image decoded = ReadPng(decoded_path);
  if (!original.SameShape(decoded)) {
    throw DataError("decoded image " + decoded_path.string() + " shape " +
                    ShapeToString(decoded.tensor().shape()) +
                    " differs from original " +
                    ShapeToString(original.tensor().shape()));
  }
  const double bpp = ReadBppSidecar(bpp_sidecar);
  return {std::move(original), CodecResult{std::move(decoded), bpp}};
}

}  // namespace ldmric
