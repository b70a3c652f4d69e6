#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "zoomvqa/error.hpp"
#include "zoomvqa/fragment_sampler.hpp"
#include "zoomvqa/iqa_branch.hpp"
#include "zoomvqa/vqa_branch.hpp"

namespace zoomvqa {

enum class Schedule { cosine, constant };

struct IqaConfig {
  std::uint32_t fps = 2;
  std::size_t resize = 512;
  std::size_t crop = 320;
  double flip_p = 0.5;
  double lr = 0.002;
  std::size_t batch = 32;
  double weight_decay = 0.01;
  Schedule schedule = Schedule::cosine;
  std::size_t epochs = 30;
  std::size_t max_steps = 0;  // 0: epochs * ceil(frames / batch)
  IqaArch arch;
};

struct VqaConfig {
  std::size_t frag = 48;
  std::size_t grid = 7;
  std::size_t clip_len = 32;
  std::size_t stride = 2;
  std::size_t views = 4;
  double lr = 0.001;
  std::size_t batch = 16;
  std::size_t epochs = 30;
  std::size_t max_steps = 0;
  double beta = 0.3;
  double weight_decay = 0.01;
  Schedule schedule = Schedule::cosine;
  VqaArch arch;

  ViewSpec view_spec() const { return {grid, frag, clip_len, stride, views}; }
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t workers = 0;  // 0: hardware concurrency
  IqaConfig iqa;
  VqaConfig vqa;
  std::string train_manifest;
  std::string test_manifest;
  std::string out_dir;

  void validate() const {
    if (iqa.crop == 0 || iqa.crop % 16 != 0) throw ConfigError("iqa.crop must be a positive multiple of 16");
    if (iqa.resize < iqa.crop) throw ConfigError("iqa.resize must be at least iqa.crop");
    if (iqa.fps == 0) throw ConfigError("iqa.fps must be positive");
    if (iqa.batch == 0) throw ConfigError("iqa.batch must be positive");
    if (iqa.flip_p < 0.0 || iqa.flip_p > 1.0) throw ConfigError("iqa.flip_p must be in [0,1]");
    if (iqa.lr < 0.0 || vqa.lr < 0.0) throw ConfigError("learning rates must be non-negative");
    if (vqa.batch < 2) throw ConfigError("vqa.batch must be >= 2 for correlation losses");
    if (vqa.views == 0 || vqa.grid == 0 || vqa.clip_len == 0 || vqa.stride == 0) {
      throw ConfigError("vqa grid/clip/view counts must be positive");
    }
    if (vqa.arch.patch == 0 || vqa.frag % vqa.arch.patch != 0) {
      throw ConfigError("vqa.frag must be divisible by vqa.patch");
    }
    if (vqa.clip_len % vqa.arch.temporal_patch != 0) throw ConfigError("vqa.clip_len must be divisible by 2");
    if (vqa.arch.patch < vqa.arch.base_patch) throw ConfigError("vqa.patch must be >= vqa.base_patch");
    if ((vqa.arch.patch - vqa.arch.base_patch) % 2 != 0) throw ConfigError("patch expansion must be even");
  }
};

inline std::string to_string(Schedule s) { return s == Schedule::cosine ? "cosine" : "constant"; }

inline Schedule parse_schedule(const std::string& s) {
  if (s == "cosine") return Schedule::cosine;
  if (s == "constant") return Schedule::constant;
  throw ConfigError("unknown schedule '" + s + "'");
}

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["iqa"] = {{"fps", c.iqa.fps},
              {"resize", c.iqa.resize},
              {"crop", c.iqa.crop},
              {"flip_p", c.iqa.flip_p},
              {"lr", c.iqa.lr},
              {"batch", c.iqa.batch},
              {"weight_decay", c.iqa.weight_decay},
              {"schedule", to_string(c.iqa.schedule)},
              {"epochs", c.iqa.epochs},
              {"max_steps", c.iqa.max_steps},
              {"channels", c.iqa.arch.channels},
              {"pam", c.iqa.arch.pam},
              {"fpa", c.iqa.arch.fpa}};
  j["vqa"] = {{"frag", c.vqa.frag},
              {"patch", c.vqa.arch.patch},
              {"base_patch", c.vqa.arch.base_patch},
              {"grid", c.vqa.grid},
              {"clip_len", c.vqa.clip_len},
              {"stride", c.vqa.stride},
              {"views", c.vqa.views},
              {"lr", c.vqa.lr},
              {"batch", c.vqa.batch},
              {"epochs", c.vqa.epochs},
              {"max_steps", c.vqa.max_steps},
              {"beta", c.vqa.beta},
              {"weight_decay", c.vqa.weight_decay},
              {"schedule", to_string(c.vqa.schedule)},
              {"padding", to_string(c.vqa.arch.padding)},
              {"embed_dim", c.vqa.arch.embed_dim},
              {"hidden", c.vqa.arch.hidden}};
  j["paths"] = {{"train_manifest", c.train_manifest}, {"test_manifest", c.test_manifest}, {"out_dir", c.out_dir}};
  return j;
}

namespace detail {

template <class V>
void read_field(const nlohmann::json& obj, const char* key, V& dst, std::set<std::string>& seen) {
  seen.insert(key);
  if (!obj.contains(key)) return;
  try {
    dst = obj.at(key).get<V>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

inline void reject_unknown(const nlohmann::json& obj, const std::set<std::string>& seen, const std::string& where) {
  for (const auto& [k, v] : obj.items()) {
    if (!seen.count(k)) throw ConfigError("unknown config key '" + where + k + "'");
  }
}

}  // namespace detail

/// Applies the keys present in `j` on top of `base`. Unknown keys are errors.
inline RunConfig apply_overrides(RunConfig c, const nlohmann::json& j) {
  using detail::read_field;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  std::set<std::string> top;
  read_field(j, "seed", c.seed, top);
  read_field(j, "workers", c.workers, top);
  top.insert("iqa");
  top.insert("vqa");
  top.insert("paths");
  if (j.contains("iqa")) {
    const auto& o = j["iqa"];
    std::set<std::string> seen;
    std::string schedule = to_string(c.iqa.schedule);
    read_field(o, "fps", c.iqa.fps, seen);
    read_field(o, "resize", c.iqa.resize, seen);
    read_field(o, "crop", c.iqa.crop, seen);
    read_field(o, "flip_p", c.iqa.flip_p, seen);
    read_field(o, "lr", c.iqa.lr, seen);
    read_field(o, "batch", c.iqa.batch, seen);
    read_field(o, "weight_decay", c.iqa.weight_decay, seen);
    read_field(o, "schedule", schedule, seen);
    read_field(o, "epochs", c.iqa.epochs, seen);
    read_field(o, "max_steps", c.iqa.max_steps, seen);
    read_field(o, "channels", c.iqa.arch.channels, seen);
    read_field(o, "pam", c.iqa.arch.pam, seen);
    read_field(o, "fpa", c.iqa.arch.fpa, seen);
    detail::reject_unknown(o, seen, "iqa.");
    c.iqa.schedule = parse_schedule(schedule);
  }
  if (j.contains("vqa")) {
    const auto& o = j["vqa"];
    std::set<std::string> seen;
    std::string schedule = to_string(c.vqa.schedule), padding = to_string(c.vqa.arch.padding);
    read_field(o, "frag", c.vqa.frag, seen);
    read_field(o, "patch", c.vqa.arch.patch, seen);
    read_field(o, "base_patch", c.vqa.arch.base_patch, seen);
    read_field(o, "grid", c.vqa.grid, seen);
    read_field(o, "clip_len", c.vqa.clip_len, seen);
    read_field(o, "stride", c.vqa.stride, seen);
    read_field(o, "views", c.vqa.views, seen);
    read_field(o, "lr", c.vqa.lr, seen);
    read_field(o, "batch", c.vqa.batch, seen);
    read_field(o, "epochs", c.vqa.epochs, seen);
    read_field(o, "max_steps", c.vqa.max_steps, seen);
    read_field(o, "beta", c.vqa.beta, seen);
    read_field(o, "weight_decay", c.vqa.weight_decay, seen);
    read_field(o, "schedule", schedule, seen);
    read_field(o, "padding", padding, seen);
    read_field(o, "embed_dim", c.vqa.arch.embed_dim, seen);
    read_field(o, "hidden", c.vqa.arch.hidden, seen);
    detail::reject_unknown(o, seen, "vqa.");
    c.vqa.schedule = parse_schedule(schedule);
    c.vqa.arch.padding = parse_padding(padding);
  }
  if (j.contains("paths")) {
    const auto& o = j["paths"];
    std::set<std::string> seen;
    read_field(o, "train_manifest", c.train_manifest, seen);
    read_field(o, "test_manifest", c.test_manifest, seen);
    read_field(o, "out_dir", c.out_dir, seen);
    detail::reject_unknown(o, seen, "paths.");
  }
  detail::reject_unknown(j, top, "");
  c.validate();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return apply_overrides(RunConfig{}, j);
}

}  // namespace zoomvqa
