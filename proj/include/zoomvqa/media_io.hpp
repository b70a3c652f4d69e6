#pragma once

// Codec-free video ingestion (.rgb24 payload + JSON sidecar), the frame
// protocol of the image branch, dataset manifests, and a synthetic
// distortion dataset with a known monotone quality ground truth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "zoomvqa/error.hpp"
#include "zoomvqa/rng.hpp"
#include "zoomvqa/tensor.hpp"

namespace zoomvqa {

namespace fs = std::filesystem;

/// Decoded RGB24 video, interleaved channels, frame-major then row-major.
struct RawVideo {
  std::size_t width = 0;
  std::size_t height = 0;
  std::uint32_t fps_num = 1;
  std::uint32_t fps_den = 1;
  std::size_t num_frames = 0;
  std::vector<std::uint8_t> frames;

  std::size_t frame_bytes() const noexcept { return width * height * 3; }
  double fps() const noexcept { return static_cast<double>(fps_num) / static_cast<double>(fps_den); }

  std::uint8_t at(std::size_t frame, std::size_t y, std::size_t x, std::size_t c) const {
    return frames[((frame * height + y) * width + x) * 3 + c];
  }

  void validate() const {
    if (width == 0 || height == 0) throw FormatError("video has zero width or height");
    if (num_frames < 1) throw FormatError("video has no frames");
    if (fps_num == 0 || fps_den == 0) throw FormatError("fps must be positive");
    if (frames.size() != num_frames * frame_bytes()) {
      throw CorruptPayloadError("payload has " + std::to_string(frames.size()) + " bytes, expected " +
                                std::to_string(num_frames * frame_bytes()));
    }
  }
};

inline fs::path sidecar_path(const fs::path& payload) {
  fs::path p = payload;
  return p.replace_extension(".json");
}

inline RawVideo load_raw_video(const fs::path& path) {
  const fs::path side = sidecar_path(path);
  std::ifstream sj(side);
  if (!sj) throw FormatError("missing sidecar " + side.string());
  RawVideo v;
  try {
    const auto j = nlohmann::json::parse(sj);
    v.width = j.at("width").get<std::size_t>();
    v.height = j.at("height").get<std::size_t>();
    v.fps_num = j.at("fps_num").get<std::uint32_t>();
    v.fps_den = j.at("fps_den").get<std::uint32_t>();
    v.num_frames = j.at("num_frames").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad sidecar " + side.string() + ": " + e.what());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open payload " + path.string());
  v.frames.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  v.validate();
  return v;
}

inline void write_raw_video(const fs::path& path, const RawVideo& v) {
  v.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(v.frames.data()), static_cast<std::streamsize>(v.frames.size()));
  if (!out) throw IoError("short write to " + path.string());
  const nlohmann::ordered_json side = {{"width", v.width},
                                       {"height", v.height},
                                       {"fps_num", v.fps_num},
                                       {"fps_den", v.fps_den},
                                       {"num_frames", v.num_frames}};
  std::ofstream sj(sidecar_path(path));
  if (!sj) throw IoError("cannot write sidecar for " + path.string());
  sj << side.dump() << "\n";
}

/// One frame as planar [3,H,W] floats in [0,1].
inline Tensor frame_tensor(const RawVideo& v, std::size_t frame) {
  if (frame >= v.num_frames) throw GeometryError("frame index " + std::to_string(frame) + " out of range");
  Tensor out(Shape{3, v.height, v.width});
  const std::uint8_t* src = v.frames.data() + frame * v.frame_bytes();
  const std::size_t plane = v.height * v.width;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) out[c * plane + i] = static_cast<float>(src[i * 3 + c]) / 255.0f;
  return out;
}

struct FrameStack {
  Tensor frames;  // [T,3,H,W] in [0,1]
  std::vector<double> source_timestamps;

  std::size_t size() const noexcept { return source_timestamps.size(); }

  Tensor frame(std::size_t t) const {
    const std::size_t n = frames.numel() / frames.dim(0);
    Shape shape(frames.shape().begin() + 1, frames.shape().end());
    return Tensor(shape, std::vector<float>(frames.data().begin() + static_cast<std::ptrdiff_t>(t * n),
                                            frames.data().begin() + static_cast<std::ptrdiff_t>((t + 1) * n)));
  }
};

/// Source indices nearest to t = k/rate seconds (ties to the lower index),
/// for every t before the end of the video, de-duplicated.
inline std::vector<std::size_t> sample_indices_at_rate(const RawVideo& v, std::uint32_t rate = 2) {
  if (v.fps_num == 0 || v.fps_den == 0) throw ParameterError("fps must be positive");
  std::vector<std::size_t> out;
  // t = k/rate < num_frames * den / num  <=>  k * num < rate * num_frames * den
  for (std::uint64_t k = 0; k * v.fps_num < std::uint64_t{rate} * v.num_frames * v.fps_den; ++k) {
    const std::uint64_t n = k * v.fps_num, d = std::uint64_t{rate} * v.fps_den;
    std::uint64_t idx = n / d;
    if (2 * (n % d) > d) ++idx;
    idx = std::min<std::uint64_t>(idx, v.num_frames - 1);
    if (out.empty() || out.back() != idx) out.push_back(static_cast<std::size_t>(idx));
  }
  if (out.empty()) out.push_back(0);
  return out;
}

inline FrameStack frames_at(const RawVideo& v, const std::vector<std::size_t>& indices) {
  FrameStack s;
  const std::size_t n = 3 * v.width * v.height;
  s.frames = Tensor(Shape{indices.size(), 3, v.height, v.width});
  for (std::size_t t = 0; t < indices.size(); ++t) {
    const Tensor f = frame_tensor(v, indices[t]);
    std::copy(f.data().begin(), f.data().end(), s.frames.data().begin() + static_cast<std::ptrdiff_t>(t * n));
    s.source_timestamps.push_back(static_cast<double>(indices[t]) * v.fps_den / v.fps_num);
  }
  return s;
}

inline FrameStack sample_frames_2fps(const RawVideo& v) { return frames_at(v, sample_indices_at_rate(v, 2)); }

/// Bilinear resize of a [C,H,W] map with half-pixel centers and edge clamping.
inline Tensor resize_bilinear(const Tensor& frame, std::size_t out_h, std::size_t out_w) {
  if (frame.rank() != 3) throw DimensionError("resize expects [C,H,W], got " + shape_str(frame.shape()));
  const std::size_t C = frame.dim(0), H = frame.dim(1), W = frame.dim(2);
  if (out_h == 0 || out_w == 0) throw ParameterError("resize target must be positive");
  if (out_h == H && out_w == W) return frame;
  struct Tap {
    std::size_t i0, i1;
    double w1;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
      double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const auto i0 = static_cast<std::size_t>(std::floor(src));
      const std::size_t i1 = std::min(i0 + 1, in - 1);
      t[o] = {i0, i1, src - static_cast<double>(i0)};
    }
    return t;
  };
  const auto ty = taps(H, out_h), tx = taps(W, out_w);
  Tensor out(Shape{C, out_h, out_w});
  for (std::size_t c = 0; c < C; ++c) {
    const float* src = frame.data().data() + c * H * W;
    for (std::size_t y = 0; y < out_h; ++y) {
      const Tap& a = ty[y];
      for (std::size_t x = 0; x < out_w; ++x) {
        const Tap& b = tx[x];
        const double top = src[a.i0 * W + b.i0] * (1.0 - b.w1) + src[a.i0 * W + b.i1] * b.w1;
        const double bot = src[a.i1 * W + b.i0] * (1.0 - b.w1) + src[a.i1 * W + b.i1] * b.w1;
        out[(c * out_h + y) * out_w + x] = static_cast<float>(top * (1.0 - a.w1) + bot * a.w1);
      }
    }
  }
  return out;
}

/// Output geometry of a smaller-edge resize, aspect ratio rounded to nearest.
inline std::pair<std::size_t, std::size_t> smaller_edge_dims(std::size_t h, std::size_t w, std::size_t target) {
  if (h <= w) return {target, static_cast<std::size_t>(std::llround(static_cast<double>(w) * target / h))};
  return {static_cast<std::size_t>(std::llround(static_cast<double>(h) * target / w)), target};
}

inline Tensor resize_smaller_edge(const Tensor& frame, int target = 512) {
  if (target <= 0) throw ParameterError("resize target must be positive, got " + std::to_string(target));
  if (frame.rank() != 3 || frame.dim(1) == 0 || frame.dim(2) == 0) {
    throw DimensionError("resize expects non-empty [C,H,W], got " + shape_str(frame.shape()));
  }
  const auto [oh, ow] = smaller_edge_dims(frame.dim(1), frame.dim(2), static_cast<std::size_t>(target));
  return resize_bilinear(frame, oh, ow);
}

inline Tensor crop(const Tensor& frame, std::size_t top, std::size_t left, std::size_t size = 320) {
  if (frame.rank() != 3) throw DimensionError("crop expects [C,H,W], got " + shape_str(frame.shape()));
  const std::size_t C = frame.dim(0), H = frame.dim(1), W = frame.dim(2);
  if (top + size > H || left + size > W) {
    throw GeometryError("crop " + std::to_string(size) + " at (" + std::to_string(top) + "," +
                        std::to_string(left) + ") exceeds frame " + std::to_string(H) + "x" + std::to_string(W));
  }
  Tensor out(Shape{C, size, size});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < size; ++y) {
      const float* row = frame.data().data() + (c * H + top + y) * W + left;
      std::copy(row, row + size, out.data().data() + (c * size + y) * size);
    }
  return out;
}

inline Tensor flip_horizontal(const Tensor& frame) {
  Tensor out = frame;
  const std::size_t W = frame.dim(frame.rank() - 1);
  for (std::size_t r = 0; r < frame.numel() / W; ++r) {
    auto row = out.data().subspan(r * W, W);
    std::reverse(row.begin(), row.end());
  }
  return out;
}

inline Tensor center_crop(const Tensor& frame, std::size_t size = 320) {
  if (frame.rank() != 3) throw DimensionError("center_crop expects [C,H,W]");
  if (frame.dim(1) < size || frame.dim(2) < size) {
    throw GeometryError("frame " + std::to_string(frame.dim(1)) + "x" + std::to_string(frame.dim(2)) +
                        " smaller than crop " + std::to_string(size));
  }
  return crop(frame, (frame.dim(1) - size) / 2, (frame.dim(2) - size) / 2, size);
}

template <class Rng>
Tensor random_crop_flip(const Tensor& frame, Rng& rng, std::size_t size = 320, double flip_p = 0.5) {
  if (frame.rank() != 3) throw DimensionError("random_crop_flip expects [C,H,W]");
  if (frame.dim(1) < size || frame.dim(2) < size) {
    throw GeometryError("frame " + std::to_string(frame.dim(1)) + "x" + std::to_string(frame.dim(2)) +
                        " smaller than crop " + std::to_string(size));
  }
  std::uniform_int_distribution<std::size_t> ty(0, frame.dim(1) - size), tx(0, frame.dim(2) - size);
  const std::size_t top = ty(rng);
  const std::size_t left = tx(rng);
  Tensor out = crop(frame, top, left, size);
  if (std::bernoulli_distribution(flip_p)(rng)) out = flip_horizontal(out);
  return out;
}

// ---------------------------------------------------------------------------
// Manifests

enum class Split { train, test };

inline std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw FormatError("unknown split '" + s + "'");
}

struct NormStats {
  double mean = 0.0;
  double std = 1.0;
};

struct VideoRecord {
  std::string id;
  fs::path path;  // absolute or relative to the manifest directory
  double mos_raw = 0.0;
  double mos_norm = 0.0;
  std::optional<double> noise_sigma;  // synthetic sets only
};

struct Manifest {
  std::string dataset_name;
  Split split = Split::train;
  std::vector<VideoRecord> records;
  NormStats norm_stats;
  fs::path base_dir;

  fs::path resolve(const VideoRecord& r) const { return r.path.is_absolute() ? r.path : base_dir / r.path; }

  /// z-scores mos_raw with the given statistics.
  void apply_norm(const NormStats& stats) {
    norm_stats = stats;
    for (auto& r : records) r.mos_norm = (r.mos_raw - stats.mean) / stats.std;
  }

  std::vector<double> labels() const {
    std::vector<double> out;
    for (const auto& r : records) out.push_back(r.mos_norm);
    return out;
  }
};

/// Population mean/std of mos_raw. A constant split keeps std = 1.
inline NormStats compute_norm_stats(const std::vector<VideoRecord>& records) {
  if (records.empty()) throw ContractError("cannot normalize an empty split");
  double mean = 0.0;
  for (const auto& r : records) mean += r.mos_raw;
  mean /= static_cast<double>(records.size());
  double var = 0.0;
  for (const auto& r : records) var += (r.mos_raw - mean) * (r.mos_raw - mean);
  var /= static_cast<double>(records.size());
  const double sd = std::sqrt(var);
  return {mean, sd > 0.0 ? sd : 1.0};
}

inline nlohmann::ordered_json manifest_json(const Manifest& m) {
  nlohmann::ordered_json j;
  j["dataset_name"] = m.dataset_name;
  j["split"] = to_string(m.split);
  j["norm_stats"] = {{"mean", m.norm_stats.mean}, {"std", m.norm_stats.std}};
  j["records"] = nlohmann::ordered_json::array();
  for (const auto& r : m.records) {
    nlohmann::ordered_json rec = {{"id", r.id}, {"path", r.path.generic_string()}, {"mos_raw", r.mos_raw}};
    if (r.noise_sigma) rec["noise_sigma"] = *r.noise_sigma;
    j["records"].push_back(std::move(rec));
  }
  return j;
}

inline void write_manifest(const fs::path& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << manifest_json(m).dump(2) << "\n";
}

/// Loads a manifest. Train splits recompute their statistics; test splits
/// reuse the stored ones verbatim.
inline Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  try {
    const auto j = nlohmann::json::parse(in);
    m.dataset_name = j.at("dataset_name").get<std::string>();
    m.split = parse_split(j.at("split").get<std::string>());
    std::vector<std::string> seen;
    for (const auto& r : j.at("records")) {
      VideoRecord rec;
      rec.id = r.at("id").get<std::string>();
      rec.path = r.at("path").get<std::string>();
      rec.mos_raw = r.at("mos_raw").get<double>();
      if (r.contains("noise_sigma")) rec.noise_sigma = r["noise_sigma"].get<double>();
      if (std::find(seen.begin(), seen.end(), rec.id) != seen.end()) {
        throw FormatError("duplicate id '" + rec.id + "' in " + path.string());
      }
      seen.push_back(rec.id);
      m.records.push_back(std::move(rec));
    }
    if (m.records.empty()) throw FormatError("manifest " + path.string() + " has no records");
    NormStats stats;
    if (m.split == Split::train) {
      stats = compute_norm_stats(m.records);
    } else {
      stats.mean = j.at("norm_stats").at("mean").get<double>();
      stats.std = j.at("norm_stats").at("std").get<double>();
      if (!(stats.std > 0.0)) throw FormatError("norm_stats.std must be positive");
    }
    m.apply_norm(stats);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad manifest " + path.string() + ": " + e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Synthetic distortion dataset

struct SynthOptions {
  std::size_t width = 128;
  std::size_t height = 96;
  std::size_t num_frames = 16;
  std::uint32_t fps = 8;
  double sigma_max = 0.2;  // noise std in [0,1] intensity units
  std::size_t sigma_levels = 16;
  std::string dataset_name = "synthetic";
  std::string id_prefix = "syn";
  Split split = Split::train;
  std::string manifest_name = "manifest.json";
  /// Statistics for a test split; ignored for train splits.
  std::optional<NormStats> norm_stats;
};

/// Moving sinusoidal gradients plus Gaussian noise. mos_raw = 100 (1 - sigma / sigma_max).
inline RawVideo synth_video(std::uint64_t seed, double sigma, const SynthOptions& opt) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double fx = 0.5 + 1.5 * u(rng), fy = 0.5 + 1.5 * u(rng);
  const double speed = 0.02 + 0.08 * u(rng);
  double amp[3], phase[3], base[3];
  for (int c = 0; c < 3; ++c) {
    amp[c] = 30.0 + 50.0 * u(rng);
    phase[c] = 2.0 * std::numbers::pi * u(rng);
    base[c] = 90.0 + 70.0 * u(rng);
  }
  std::normal_distribution<double> noise(0.0, 255.0 * sigma);
  RawVideo v;
  v.width = opt.width;
  v.height = opt.height;
  v.fps_num = opt.fps;
  v.fps_den = 1;
  v.num_frames = opt.num_frames;
  v.frames.resize(v.num_frames * v.frame_bytes());
  std::size_t i = 0;
  for (std::size_t t = 0; t < v.num_frames; ++t)
    for (std::size_t y = 0; y < v.height; ++y)
      for (std::size_t x = 0; x < v.width; ++x)
        for (int c = 0; c < 3; ++c) {
          const double arg = 2.0 * std::numbers::pi *
                                 (fx * static_cast<double>(x) / v.width + fy * static_cast<double>(y) / v.height -
                                  speed * static_cast<double>(t)) +
                             phase[c];
          double val = base[c] + amp[c] * std::sin(arg);
          if (sigma > 0.0) val += noise(rng);
          v.frames[i++] = static_cast<std::uint8_t>(std::clamp(std::lround(val), 0L, 255L));
        }
  return v;
}

inline Manifest synth_dataset(std::size_t n_videos, std::uint64_t seed, const fs::path& out_dir,
                              const SynthOptions& opt = {}) {
  if (n_videos < 2) throw ParameterError("synth_dataset needs at least 2 videos");
  if (opt.sigma_levels < 2 || !(opt.sigma_max > 0.0)) throw ParameterError("bad noise grid");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create " + out_dir.string());

  Manifest m;
  m.dataset_name = opt.dataset_name;
  m.split = opt.split;
  m.base_dir = out_dir;
  std::mt19937_64 level_rng(seed);
  std::uniform_int_distribution<std::size_t> level(0, opt.sigma_levels - 1);
  for (std::size_t i = 0; i < n_videos; ++i) {
    const double sigma = opt.sigma_max * static_cast<double>(level(level_rng)) /
                         static_cast<double>(opt.sigma_levels - 1);
    char id[64];
    std::snprintf(id, sizeof id, "%s%04zu", opt.id_prefix.c_str(), i);
    const RawVideo v = synth_video(mix_seed(seed, i), sigma, opt);
    const fs::path rel = std::string(id) + ".rgb24";
    write_raw_video(out_dir / rel, v);
    VideoRecord r;
    r.id = id;
    r.path = rel;
    r.mos_raw = 100.0 * (1.0 - sigma / opt.sigma_max);
    r.noise_sigma = sigma;
    m.records.push_back(std::move(r));
  }
  if (opt.split == Split::train || !opt.norm_stats) {
    m.apply_norm(compute_norm_stats(m.records));
  } else {
    m.apply_norm(*opt.norm_stats);
  }
  write_manifest(out_dir / opt.manifest_name, m);
  return m;
}

}  // namespace zoomvqa
