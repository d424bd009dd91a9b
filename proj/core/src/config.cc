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

#include "ldmric/config.h"

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ldmric/errors.h"

namespace ldmric {
using nlohmann::json;

namespace {

// Records the line of every key and array element while skimming JSON.
class LineIndex {
 public:
  explicit LineIndex(const std::string& text) : text_(text) {
    SkipWs();
    if (pos_ < text_.size()) Value("");
  }
  int Line(const std::string& path) const {
    auto it = lines_.find(path);
    return it == lines_.end() ? 0 : it->second;
  }

 private:
  int LineAt(size_t pos) const {
    int line = 1;
    for (size_t i = 0; i < pos && i < text_.size(); ++i) line += text_[i] == '\n';
    return line;
  }
  void SkipWs() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
  }
  std::string String() {
    std::string out;
    ++pos_;  // opening quote
    while (pos_ < text_.size() && text_[pos_] != '"') {
      if (text_[pos_] == '\\' && pos_ + 1 < text_.size()) {
        out += text_[pos_ + 1];
        pos_ += 2;
      } else {
        out += text_[pos_++];
      }
    }
    ++pos_;  // closing quote
    return out;
  }
  void Value(const std::string& path) {
    SkipWs();
    if (pos_ >= text_.size()) return;
    const char c = text_[pos_];
    if (c == '{') {
      ++pos_;
      for (;;) {
        SkipWs();
        if (pos_ >= text_.size() || text_[pos_] == '}') break;
        if (text_[pos_] == ',') { ++pos_; continue; }
        if (text_[pos_] != '"') return;
        const size_t at = pos_;
        const std::string key = String();
        const std::string child = path.empty() ? key : path + "." + key;
        lines_.emplace(child, LineAt(at));
        SkipWs();
        if (pos_ < text_.size() && text_[pos_] == ':') ++pos_;
        Value(child);
      }
      ++pos_;
    } else if (c == '[') {
      ++pos_;
      int index = 0;
      for (;;) {
        SkipWs();
        if (pos_ >= text_.size() || text_[pos_] == ']') break;
        if (text_[pos_] == ',') { ++pos_; continue; }
        const std::string child = path + "[" + std::to_string(index++) + "]";
        lines_.emplace(child, LineAt(pos_));
        Value(child);
      }
      ++pos_;
    } else if (c == '"') {
      String();
    } else {
      while (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != '}' &&
             text_[pos_] != ']' &&
             !std::isspace(static_cast<unsigned char>(text_[pos_]))) {
        ++pos_;
      }
    }
  }

  const std::string& text_;
  size_t pos_ = 0;
  std::map<std::string, int> lines_;
};

class Context {
 public:
  Context(const std::string& text, std::string source)
      : index_(text), source_(std::move(source)) {}

  [[noreturn]] void Fail(const std::string& path, const std::string& msg) const {
    int line = 0;
    std::string p = path;
    while (line == 0 && !p.empty()) {
      line = index_.Line(p);
      const auto cut = p.find_last_of(".[");
      p = cut == std::string::npos ? "" : p.substr(0, cut);
    }
    throw ConfigError(source_ + ":" + std::to_string(std::max(line, 1)) + ": " +
                      (path.empty() ? "" : path + ": ") + msg);
  }

 private:
  LineIndex index_;
  std::string source_;
};

std::string Join(const std::string& a, const std::string& b) {
  return a.empty() ? b : a + "." + b;
}

class Section {
 public:
  Section(const json& node, std::string path, const Context& ctx,
          std::set<std::string> allowed)
      : node_(node), path_(std::move(path)), ctx_(ctx) {
    if (!node_.is_object()) ctx_.Fail(path_, "expected an object");
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      if (!allowed.count(it.key())) {
        std::string list;
        for (const auto& k : allowed) list += (list.empty() ? "" : ", ") + k;
        ctx_.Fail(Join(path_, it.key()),
                  "unknown key (allowed: " + list + ")");
      }
    }
  }

  bool Has(const std::string& key) const { return node_.contains(key); }
  const json& Node(const std::string& key) const { return node_.at(key); }
  std::string Path(const std::string& key) const { return Join(path_, key); }
  const Context& ctx() const { return ctx_; }

  void Get(const std::string& key, std::string& out) const {
    if (!Has(key)) return;
    if (!Node(key).is_string()) ctx_.Fail(Path(key), "expected a string");
    out = Node(key).get<std::string>();
  }
  void Get(const std::string& key, bool& out) const {
    if (!Has(key)) return;
    if (!Node(key).is_boolean()) ctx_.Fail(Path(key), "expected true or false");
    out = Node(key).get<bool>();
  }
  void Get(const std::string& key, double& out) const {
    if (!Has(key)) return;
    if (!Node(key).is_number()) ctx_.Fail(Path(key), "expected a number");
    out = Node(key).get<double>();
  }
  void Get(const std::string& key, int64_t& out) const {
    if (!Has(key)) return;
    out = Integer(Node(key), Path(key));
  }
  void Get(const std::string& key, int& out) const {
    if (!Has(key)) return;
    const int64_t v = Integer(Node(key), Path(key));
    if (v < INT32_MIN || v > INT32_MAX) ctx_.Fail(Path(key), "integer out of range");
    out = static_cast<int>(v);
  }
  void Get(const std::string& key, uint64_t& out) const {
    if (!Has(key)) return;
    const json& n = Node(key);
    if (!n.is_number_unsigned()) {
      ctx_.Fail(Path(key), "expected a nonnegative integer");
    }
    out = n.get<uint64_t>();
  }
  void Get(const std::string& key, std::vector<int>& out) const {
    if (!Has(key)) return;
    const json& n = Node(key);
    if (!n.is_array()) ctx_.Fail(Path(key), "expected an array of integers");
    out.clear();
    for (size_t i = 0; i < n.size(); ++i) {
      out.push_back(static_cast<int>(
          Integer(n[i], Path(key) + "[" + std::to_string(i) + "]")));
    }
  }
  void Get(const std::string& key, std::vector<double>& out) const {
    if (!Has(key)) return;
    const json& n = Node(key);
    if (!n.is_array()) ctx_.Fail(Path(key), "expected an array of numbers");
    out.clear();
    for (size_t i = 0; i < n.size(); ++i) {
      if (!n[i].is_number()) {
        ctx_.Fail(Path(key) + "[" + std::to_string(i) + "]", "expected a number");
      }
      out.push_back(n[i].get<double>());
    }
  }

  void Require(bool ok, const std::string& key, const std::string& msg) const {
    if (!ok) ctx_.Fail(Path(key), msg);
  }

 private:
  int64_t Integer(const json& n, const std::string& path) const {
    if (!n.is_number_integer()) ctx_.Fail(path, "expected an integer");
    return n.get<int64_t>();
  }

  const json& node_;
  std::string path_;
  const Context& ctx_;
};

void ParseStage(const Section& parent, const std::string& key, StageSection& s) {
  if (!parent.Has(key)) return;
  Section sec(parent.Node(key), parent.Path(key), parent.ctx(),
              {"iterations", "lr", "lr_schedule", "lr_floor",
               "cosine_hold_fraction", "decay_every", "decay_factor"});
  sec.Get("iterations", s.iterations);
  sec.Get("lr", s.lr);
  sec.Get("lr_schedule", s.lr_schedule);
  sec.Get("lr_floor", s.lr_floor);
  sec.Get("cosine_hold_fraction", s.cosine_hold_fraction);
  sec.Get("decay_every", s.decay_every);
  sec.Get("decay_factor", s.decay_factor);
  sec.Require(s.iterations >= 0, "iterations", "must be >= 0");
  sec.Require(s.lr > 0, "lr", "must be > 0");
  sec.Require(s.lr_schedule == "constant" || s.lr_schedule == "cosine" ||
                  s.lr_schedule == "step",
              "lr_schedule", "must be constant, cosine or step");
  sec.Require(s.lr_floor >= 0 && s.lr_floor <= s.lr, "lr_floor",
              "must lie in [0, lr]");
  sec.Require(s.cosine_hold_fraction >= 0 && s.cosine_hold_fraction < 1,
              "cosine_hold_fraction", "must lie in [0, 1)");
  sec.Require(s.decay_every >= 1, "decay_every", "must be >= 1");
  sec.Require(s.decay_factor > 0, "decay_factor", "must be > 0");
}

json StageJson(const StageSection& s) {
  return {{"iterations", s.iterations},
          {"lr", s.lr},
          {"lr_schedule", s.lr_schedule},
          {"lr_floor", s.lr_floor},
          {"cosine_hold_fraction", s.cosine_hold_fraction},
          {"decay_every", s.decay_every},
          {"decay_factor", s.decay_factor}};
}

std::string FormatQ(double q) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", q);
  return buf;
}

}  // namespace

int LocateJsonLine(const std::string& text, const std::string& path) {
  return LineIndex(text).Line(path);
}

RunConfig ParseRunConfig(const std::string& text, const std::string& source) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    int line = 1;
    for (size_t i = 0; i < e.byte && i < text.size(); ++i) line += text[i] == '\n';
    throw ConfigError(source + ":" + std::to_string(line) + ": invalid JSON: " +
                      e.what());
  }
  const Context ctx(text, source);
  RunConfig c;
  Section top(root, "", ctx,
              {"codec", "data", "lrm", "men", "ldm", "training", "metrics"});

  if (top.Has("codec")) {
    Section s(top.Node("codec"), "codec", ctx,
              {"id", "quality", "qualities", "external_command",
               "precomputed_root"});
    s.Get("id", c.codec.id);
    s.Get("quality", c.codec.quality);
    s.Get("qualities", c.codec.qualities);
    s.Get("external_command", c.codec.external_command);
    s.Get("precomputed_root", c.codec.precomputed_root);
    try {
      ParseCodecId(c.codec.id);
    } catch (const ConfigError& e) {
      ctx.Fail("codec.id", e.what());
    }
    s.Require(c.codec.quality > 0, "quality", "must be > 0");
    s.Require(!c.codec.qualities.empty(), "qualities", "must not be empty");
    for (size_t i = 0; i < c.codec.qualities.size(); ++i) {
      if (!(c.codec.qualities[i] > 0)) {
        ctx.Fail("codec.qualities[" + std::to_string(i) + "]", "must be > 0");
      }
    }
    if (c.codec.id == "external") {
      s.Require(c.codec.external_command.find("{in}") != std::string::npos &&
                    c.codec.external_command.find("{out}") != std::string::npos,
                "external_command", "must contain {in} and {out}");
    }
    if (c.codec.id == "precomputed") {
      s.Require(!c.codec.precomputed_root.empty(), "precomputed_root",
                "required for the precomputed codec");
    }
  }

  if (top.Has("data")) {
    Section s(top.Node("data"), "data", ctx,
              {"root", "manifest", "val_manifest", "eval_root", "crop_size",
               "hflip_prob", "vflip_prob", "batch_size", "workers"});
    s.Get("root", c.data.root);
    s.Get("manifest", c.data.manifest);
    s.Get("val_manifest", c.data.val_manifest);
    s.Get("eval_root", c.data.eval_root);
    s.Get("crop_size", c.data.crop_size);
    s.Get("hflip_prob", c.data.hflip_prob);
    s.Get("vflip_prob", c.data.vflip_prob);
    s.Get("batch_size", c.data.batch_size);
    s.Get("workers", c.data.workers);
    s.Require(c.data.crop_size >= 8, "crop_size", "must be >= 8");
    s.Require(c.data.hflip_prob >= 0 && c.data.hflip_prob <= 1, "hflip_prob",
              "must lie in [0, 1]");
    s.Require(c.data.vflip_prob >= 0 && c.data.vflip_prob <= 1, "vflip_prob",
              "must lie in [0, 1]");
    s.Require(c.data.batch_size >= 1, "batch_size", "must be >= 1");
    s.Require(c.data.workers >= 1, "workers", "must be >= 1");
  }

  if (top.Has("lrm")) {
    Section s(top.Node("lrm"), "lrm", ctx,
              {"pu_factor", "widths", "latent_channels", "latent_height",
               "latent_width", "residual_blocks", "negative_slope"});
    s.Get("pu_factor", c.lrm.pu_factor);
    s.Get("widths", c.lrm.widths);
    s.Get("latent_channels", c.lrm.latent_channels);
    s.Get("latent_height", c.lrm.latent_height);
    s.Get("latent_width", c.lrm.latent_width);
    s.Get("residual_blocks", c.lrm.residual_blocks);
    s.Get("negative_slope", c.lrm.negative_slope);
    try {
      c.lrm.Validate();
    } catch (const ConfigError& e) {
      ctx.Fail("lrm", e.what());
    }
  }

  if (top.Has("men")) {
    Section s(top.Node("men"), "men", ctx,
              {"widths", "blocks", "heads", "ffn_expansion", "prior_stages",
               "use_dfam"});
    s.Get("widths", c.men.widths);
    s.Get("blocks", c.men.blocks);
    s.Get("heads", c.men.heads);
    s.Get("ffn_expansion", c.men.ffn_expansion);
    s.Get("prior_stages", c.men.prior_stages);
    s.Get("use_dfam", c.men.use_dfam);
    try {
      c.men.Validate();
    } catch (const ConfigError& e) {
      ctx.Fail("men", e.what());
    }
  }

  if (top.Has("ldm")) {
    Section s(top.Node("ldm"), "ldm", ctx, {"steps", "denoiser"});
    s.Get("steps", c.ldm.steps);
    s.Require(c.ldm.steps >= 1, "steps", "must be >= 1");
    if (s.Has("denoiser")) {
      Section d(s.Node("denoiser"), "ldm.denoiser", ctx,
                {"hidden", "blocks", "heads", "time_dim"});
      d.Get("hidden", c.ldm.denoiser.hidden);
      d.Get("blocks", c.ldm.denoiser.blocks);
      d.Get("heads", c.ldm.denoiser.heads);
      d.Get("time_dim", c.ldm.denoiser.time_dim);
      try {
        c.ldm.denoiser.Validate();
      } catch (const ConfigError& e) {
        ctx.Fail("ldm.denoiser", e.what());
      }
    }
  }

  if (top.Has("training")) {
    Section s(top.Node("training"), "training", ctx,
              {"seed", "stage1", "stage2", "phase_a_fraction", "beta1", "beta2",
               "adam_eps", "early_stop", "eval_every", "patience",
               "checkpoint_every"});
    s.Get("seed", c.training.seed);
    ParseStage(s, "stage1", c.training.stage1);
    ParseStage(s, "stage2", c.training.stage2);
    s.Get("phase_a_fraction", c.training.phase_a_fraction);
    s.Get("beta1", c.training.beta1);
    s.Get("beta2", c.training.beta2);
    s.Get("adam_eps", c.training.adam_eps);
    s.Get("early_stop", c.training.early_stop);
    s.Get("eval_every", c.training.eval_every);
    s.Get("patience", c.training.patience);
    s.Get("checkpoint_every", c.training.checkpoint_every);
    s.Require(c.training.phase_a_fraction >= 0 && c.training.phase_a_fraction <= 1,
              "phase_a_fraction", "must lie in [0, 1]");
    s.Require(c.training.beta1 >= 0 && c.training.beta1 < 1, "beta1",
              "must lie in [0, 1)");
    s.Require(c.training.beta2 >= 0 && c.training.beta2 < 1, "beta2",
              "must lie in [0, 1)");
    s.Require(c.training.adam_eps > 0, "adam_eps", "must be > 0");
    s.Require(c.training.eval_every >= 1, "eval_every", "must be >= 1");
    s.Require(c.training.patience >= 1, "patience", "must be >= 1");
    s.Require(c.training.checkpoint_every >= 0, "checkpoint_every", "must be >= 0");
  }

  if (top.Has("metrics")) {
    Section s(top.Node("metrics"), "metrics", ctx, {"peak", "bpp_aggregation"});
    s.Get("peak", c.metrics.peak);
    s.Get("bpp_aggregation", c.metrics.bpp_aggregation);
    s.Require(c.metrics.peak > 0, "peak", "must be > 0");
    s.Require(c.metrics.bpp_aggregation == "per_image_mean" ||
                  c.metrics.bpp_aggregation == "total_bits",
              "bpp_aggregation", "must be per_image_mean or total_bits");
  }

  // Cross-section constraints.
  const int factor = 1 << (c.men.scales() - 1);
  if (c.data.crop_size % factor != 0 || c.data.crop_size % c.lrm.pu_factor != 0) {
    ctx.Fail("data.crop_size", "must be divisible by " + std::to_string(factor) +
                                   " (MEN scales) and by lrm.pu_factor");
  }
  return c;
}

RunConfig LoadRunConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseRunConfig(ss.str(), path.string());
}

std::string ToCanonicalJson(const RunConfig& c) {
  json j;
  j["codec"] = {{"id", c.codec.id},
                {"quality", c.codec.quality},
                {"qualities", c.codec.qualities},
                {"external_command", c.codec.external_command},
                {"precomputed_root", c.codec.precomputed_root}};
  j["data"] = {{"root", c.data.root},
               {"manifest", c.data.manifest},
               {"val_manifest", c.data.val_manifest},
               {"eval_root", c.data.eval_root},
               {"crop_size", c.data.crop_size},
               {"hflip_prob", c.data.hflip_prob},
               {"vflip_prob", c.data.vflip_prob},
               {"batch_size", c.data.batch_size},
               {"workers", c.data.workers}};
  j["lrm"] = {{"pu_factor", c.lrm.pu_factor},
              {"widths", c.lrm.widths},
              {"latent_channels", c.lrm.latent_channels},
              {"latent_height", c.lrm.latent_height},
              {"latent_width", c.lrm.latent_width},
              {"residual_blocks", c.lrm.residual_blocks},
              {"negative_slope", c.lrm.negative_slope}};
  j["men"] = {{"widths", c.men.widths},
              {"blocks", c.men.blocks},
              {"heads", c.men.heads},
              {"ffn_expansion", c.men.ffn_expansion},
              {"prior_stages", c.men.prior_stages},
              {"use_dfam", c.men.use_dfam}};
  j["ldm"] = {{"steps", c.ldm.steps},
              {"denoiser",
               {{"hidden", c.ldm.denoiser.hidden},
                {"blocks", c.ldm.denoiser.blocks},
                {"heads", c.ldm.denoiser.heads},
                {"time_dim", c.ldm.denoiser.time_dim}}}};
  j["training"] = {{"seed", c.training.seed},
                   {"stage1", StageJson(c.training.stage1)},
                   {"stage2", StageJson(c.training.stage2)},
                   {"phase_a_fraction", c.training.phase_a_fraction},
                   {"beta1", c.training.beta1},
                   {"beta2", c.training.beta2},
                   {"adam_eps", c.training.adam_eps},
                   {"early_stop", c.training.early_stop},
                   {"eval_every", c.training.eval_every},
                   {"patience", c.training.patience},
                   {"checkpoint_every", c.training.checkpoint_every}};
  j["metrics"] = {{"peak", c.metrics.peak},
                  {"bpp_aggregation", c.metrics.bpp_aggregation}};
  return j.dump(2);
}

std::string ConfigHash(const RunConfig& config) {
  const std::string text = ToCanonicalJson(config);
  uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

CodecConfig RunConfig::MakeCodecConfig() const {
  CodecConfig cc;
  cc.id = ParseCodecId(codec.id);
  cc.external_command = codec.external_command;
  cc.precomputed_root = codec.precomputed_root;
  return cc;
}

std::string RunConfig::CodecTag() const {
  if (codec.id == "precomputed") {
    std::filesystem::path root =
        std::filesystem::path(codec.precomputed_root).lexically_normal();
    if (!root.has_filename()) root = root.parent_path();
    return "precomputed@" + root.filename().string();
  }
  return codec.id + "@q=" + FormatQ(codec.quality);
}

LrSchedule RunConfig::ScheduleFor(int stage) const {
  const StageSection& s = stage == 1 ? training.stage1 : training.stage2;
  LrSchedule sched;
  sched.kind = ParseLrScheduleKind(s.lr_schedule);
  sched.initial = s.lr;
  sched.floor = s.lr_floor;
  sched.decay_every = s.decay_every;
  sched.decay_factor = s.decay_factor;
  if (stage == 1) {
    sched.total = s.iterations;
  } else {
    // Stage II schedules run over phase B, counted from its first iteration.
    const int64_t phase_a = static_cast<int64_t>(
        std::llround(training.phase_a_fraction * static_cast<double>(s.iterations)));
    sched.total = s.iterations - phase_a;
  }
  sched.hold = static_cast<int64_t>(
      std::llround(s.cosine_hold_fraction * static_cast<double>(sched.total)));
  return sched;
}

AdamConfig RunConfig::Adam() const {
  return {training.beta1, training.beta2, training.adam_eps};
}

}  // namespace ldmric
