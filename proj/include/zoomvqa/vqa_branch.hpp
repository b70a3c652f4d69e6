#pragma once

// Clip-level branch: patch-head expansion of the tokenization kernel, a
// small spatio-temporal conv backbone with a per-token score head, quality
// maps, and multi-view averaging.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "zoomvqa/error.hpp"
#include "zoomvqa/fragment_sampler.hpp"
#include "zoomvqa/params.hpp"
#include "zoomvqa/rng.hpp"
#include "zoomvqa/tape.hpp"

namespace zoomvqa {

enum class PaddingType { zero, reflect, replicate };

inline std::string to_string(PaddingType p) {
  switch (p) {
    case PaddingType::zero: return "zero";
    case PaddingType::reflect: return "reflect";
    case PaddingType::replicate: return "replicate";
  }
  return "zero";
}

inline PaddingType parse_padding(const std::string& s) {
  if (s == "zero") return PaddingType::zero;
  if (s == "reflect") return PaddingType::reflect;
  if (s == "replicate") return PaddingType::replicate;
  throw ConfigError("unknown padding type '" + s + "'");
}

/// Grows the spatial taps of a [C,3,kt,k,k] tokenization kernel to
/// new_size, keeping the original taps centered. Zero padding leaves the
/// outer ring exactly zero; reflect/replicate fill it from the kernel.
template <std::floating_point T>
BasicTensor<T> expand_patch_head(const BasicTensor<T>& kernel, std::size_t new_size,
                                 PaddingType padding = PaddingType::zero) {
  if (kernel.rank() != 5 || kernel.dim(3) != kernel.dim(4)) {
    throw DimensionError("patch kernel must be [C,Cin,kt,k,k], got " + shape_str(kernel.shape()));
  }
  const std::size_t k = kernel.dim(3);
  if (new_size <= k) throw ParameterError("new patch size must exceed " + std::to_string(k));
  if ((new_size - k) % 2 != 0) throw ParameterError("patch expansion needs an even pad, got odd");
  const std::size_t pad = (new_size - k) / 2;
  if (padding == PaddingType::reflect && pad >= k) throw ParameterError("reflect pad must be smaller than kernel");
  const std::size_t outer = kernel.dim(0) * kernel.dim(1) * kernel.dim(2);
  BasicTensor<T> out(Shape{kernel.dim(0), kernel.dim(1), kernel.dim(2), new_size, new_size});
  auto source = [&](std::size_t i) -> std::ptrdiff_t {
    const auto s = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(pad);
    const auto n = static_cast<std::ptrdiff_t>(k);
    if (s >= 0 && s < n) return s;
    switch (padding) {
      case PaddingType::zero: return -1;
      case PaddingType::replicate: return std::clamp<std::ptrdiff_t>(s, 0, n - 1);
      case PaddingType::reflect: return s < 0 ? -s : 2 * (n - 1) - s;
    }
    return -1;
  };
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t y = 0; y < new_size; ++y)
      for (std::size_t x = 0; x < new_size; ++x) {
        const auto sy = source(y), sx = source(x);
        if (sy < 0 || sx < 0) continue;
        out[(o * new_size + y) * new_size + x] =
            kernel[(o * k + static_cast<std::size_t>(sy)) * k + static_cast<std::size_t>(sx)];
      }
  return out;
}

struct VqaArch {
  std::size_t embed_dim = 16;
  std::size_t hidden = 16;
  std::size_t patch = 6;
  std::size_t base_patch = 4;  // size of the kernel before expansion
  std::size_t temporal_patch = 2;
  PaddingType padding = PaddingType::zero;

  nlohmann::ordered_json to_json() const {
    return {{"branch", "vqa"},         {"embed_dim", embed_dim},
            {"hidden", hidden},        {"patch", patch},
            {"base_patch", base_patch}, {"temporal_patch", temporal_patch},
            {"padding", to_string(padding)}};
  }
  static VqaArch from_json(const nlohmann::ordered_json& j) {
    VqaArch a;
    a.embed_dim = j.at("embed_dim").get<std::size_t>();
    a.hidden = j.at("hidden").get<std::size_t>();
    a.patch = j.at("patch").get<std::size_t>();
    a.base_patch = j.at("base_patch").get<std::size_t>();
    a.temporal_patch = j.at("temporal_patch").get<std::size_t>();
    a.padding = parse_padding(j.at("padding").get<std::string>());
    return a;
  }
};

/// Kaiming init of a base_patch kernel, expanded to `patch` when larger.
inline ParamSet<float> init_vqa_params(const VqaArch& arch, std::uint64_t seed) {
  std::mt19937_64 rng(stream_seed(seed, Stream::init, 2));
  ParamSet<float> p;
  const std::size_t kt = arch.temporal_patch, k0 = arch.base_patch;
  const std::size_t fan = 3 * kt * k0 * k0;
  Tensor embed = kaiming_uniform(Shape{arch.embed_dim, 3, kt, k0, k0}, fan, rng, 1.0);
  if (arch.patch != k0) embed = expand_patch_head(embed, arch.patch, arch.padding);
  p.add("embed.weight", std::move(embed));
  p.add("embed.bias", bias_uniform(arch.embed_dim, fan, rng));
  std::size_t in = arch.embed_dim;
  for (const char* stage : {"stage1", "stage2"}) {
    p.add(std::string(stage) + ".weight", kaiming_uniform(Shape{arch.hidden, in, 1, 3, 3}, in * 9, rng));
    p.add(std::string(stage) + ".bias", bias_uniform(arch.hidden, in * 9, rng));
    in = arch.hidden;
  }
  p.add("head.weight", kaiming_uniform(Shape{1, arch.hidden, 1, 1, 1}, arch.hidden, rng, 1.0));
  p.add("head.bias", bias_uniform(1, arch.hidden, rng));
  return p;
}

struct VqaVars {
  Var y_view;
  Var qmap;  // [T', Gh', Gw']
};

/// Tokenize -> two conv-relu stages -> per-token score -> mean.
template <std::floating_point T>
VqaVars vqa_forward(BasicTape<T>& tape, const VqaArch& arch, const BoundParams<T>& p, Var view) {
  const auto& s = tape.value(view).shape();
  const std::size_t k = arch.patch, kt = arch.temporal_patch;
  if (s.size() != 4 || s[0] != 3 || s[1] % kt != 0 || s[2] % k != 0 || s[3] % k != 0 || s[1] == 0) {
    throw GeometryError("clip " + shape_str(s) + " is not divisible by patch (" + std::to_string(kt) + "," +
                        std::to_string(k) + "," + std::to_string(k) + ")");
  }
  Var x = tape.conv3d(view, p("embed.weight"), p("embed.bias"), {kt, k, k});
  x = tape.relu(tape.conv3d(x, p("stage1.weight"), p("stage1.bias"), {1, 1, 1}, {0, 1, 1}));
  x = tape.relu(tape.conv3d(x, p("stage2.weight"), p("stage2.bias"), {1, 1, 1}, {0, 1, 1}));
  const Var scores = tape.conv3d(x, p("head.weight"), p("head.bias"), {1, 1, 1});
  const auto& sh = tape.value(scores).shape();
  VqaVars out;
  out.qmap = tape.reshape(scores, Shape{sh[1], sh[2], sh[3]});
  out.y_view = tape.mean_all(out.qmap);
  return out;
}

struct QualityMap {
  Tensor scores;  // [T', Gh', Gw']
  FragmentGrid grid;
  float min = 0.0f;
  float max = 0.0f;
};

struct VqaModel {
  VqaArch arch;
  ParamSet<float> params;

  static VqaModel init(const VqaArch& arch, std::uint64_t seed) { return {arch, init_vqa_params(arch, seed)}; }

  Checkpoint to_checkpoint() const { return {"vqa", arch.to_json(), 0, params}; }

  static VqaModel from_checkpoint(const Checkpoint& ck) {
    if (ck.kind != "vqa") throw CheckpointError("expected a vqa checkpoint, got '" + ck.kind + "'");
    VqaModel m{VqaArch::from_json(ck.arch), ck.params};
    if (m.params.signature() != init_vqa_params(m.arch, 0).signature()) {
      throw CheckpointError("vqa checkpoint tensors do not match its architecture");
    }
    return m;
  }
};

struct ViewScore {
  float y_view = 0.0f;
  QualityMap qmap;
};

inline ViewScore vqa_forward(const ClipView& view, const VqaModel& model) {
  Tape tape;
  const auto p = bind_params(tape, model.params, false);
  const VqaVars v = vqa_forward(tape, model.arch, p, tape.leaf(view.data, false));
  ViewScore out;
  out.y_view = tape.value(v.y_view).item();
  out.qmap.scores = tape.value(v.qmap);
  out.qmap.grid = view.grid;
  const auto [lo, hi] = std::minmax_element(out.qmap.scores.data().begin(), out.qmap.scores.data().end());
  out.qmap.min = *lo;
  out.qmap.max = *hi;
  return out;
}

struct VqaVideoScore {
  double y_vqa = 0.0;
  std::vector<double> per_view;
};

/// Mean over n_views inference views; the video must satisfy the fragment extent.
inline VqaVideoScore vqa_video_score(const RawVideo& v, const VqaModel& model, const ViewSpec& spec,
                                     std::uint64_t seed) {
  if (spec.n_views < 1) throw ParameterError("need at least one view");
  VqaVideoScore out;
  for (std::size_t i = 0; i < spec.n_views; ++i) out.per_view.push_back(vqa_forward(make_view(v, spec, seed, i), model).y_view);
  double sum = 0.0;
  for (double s : out.per_view) sum += s;
  out.y_vqa = sum / static_cast<double>(out.per_view.size());
  return out;
}

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Red (low) to green (high) ramp over a normalized score in [0,1].
inline std::array<double, 3> ramp_color(double n) {
  n = std::clamp(n, 0.0, 1.0);
  return {255.0 * (1.0 - n), 255.0 * n, 0.0};
}

struct Image {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> rgb;
  Rgb at(std::size_t y, std::size_t x) const {
    const std::size_t i = (y * width + x) * 3;
    return {rgb[i], rgb[i + 1], rgb[i + 2]};
  }
};

/// Heatmap image: each map cell (averaged over time) is colored by its
/// min-max normalized score and blended 50/50 over the frame, which is
/// resampled nearest-neighbour to the fragment extent. A flat map renders
/// at the ramp midpoint.
inline Image quality_map_image(const QualityMap& qmap, const Tensor& frame) {
  if (qmap.scores.rank() != 3) throw DimensionError("quality map must be [T,Gh,Gw]");
  if (!qmap.scores.all_finite()) throw NonFiniteError("quality map has non-finite scores");
  if (frame.rank() != 3 || frame.dim(0) != 3) throw DimensionError("frame must be [3,H,W]");
  const std::size_t T = qmap.scores.dim(0), Gh = qmap.scores.dim(1), Gw = qmap.scores.dim(2);
  const std::size_t H = qmap.grid.extent_h(), W = qmap.grid.extent_w();
  if (H == 0 || W == 0 || H % Gh != 0 || W % Gw != 0) throw GeometryError("map grid does not tile the extent");
  std::vector<double> cell(Gh * Gw, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < Gh * Gw; ++i) cell[i] += qmap.scores[t * Gh * Gw + i] / static_cast<double>(T);
  const auto [lo, hi] = std::minmax_element(cell.begin(), cell.end());
  const double mn = *lo, mx = *hi;
  Image img{W, H, std::vector<std::uint8_t>(W * H * 3)};
  const std::size_t fh = frame.dim(1), fw = frame.dim(2);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const double v = cell[(y / (H / Gh)) * Gw + x / (W / Gw)];
      const double n = mx > mn ? (v - mn) / (mx - mn) : 0.5;
      const auto color = ramp_color(n);
      const std::size_t sy = y * fh / H, sx = x * fw / W;
      for (std::size_t c = 0; c < 3; ++c) {
        const double src = 255.0 * frame[(c * fh + sy) * fw + sx];
        img.rgb[(y * W + x) * 3 + c] = static_cast<std::uint8_t>(std::clamp(std::lround(0.5 * color[c] + 0.5 * src), 0L, 255L));
      }
    }
  return img;
}

inline void write_ppm(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (!out) throw IoError("short write to " + path.string());
}

inline Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  std::size_t maxval = 0;
  Image img;
  in >> magic >> img.width >> img.height >> maxval;
  if (magic != "P6" || maxval != 255) throw FormatError("not an 8-bit P6 file: " + path.string());
  in.get();
  img.rgb.resize(img.width * img.height * 3);
  if (!in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()))) {
    throw FormatError("truncated PPM " + path.string());
  }
  return img;
}

inline void render_quality_map(const QualityMap& qmap, const Tensor& frame, const std::filesystem::path& out_path) {
  write_ppm(out_path, quality_map_image(qmap, frame));
}

}  // namespace zoomvqa
