#pragma once

// Frame-level branch: a 4-stage conv backbone, frame pyramid alignment,
// the patch attention head, and frame-score averaging.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "zoomvqa/error.hpp"
#include "zoomvqa/media_io.hpp"
#include "zoomvqa/params.hpp"
#include "zoomvqa/rng.hpp"
#include "zoomvqa/tape.hpp"

namespace zoomvqa {

struct IqaArch {
  std::array<std::size_t, 4> channels{8, 16, 32, 64};
  bool pam = true;  // off: global mean pool + single FC
  bool fpa = true;  // off: only the last stage feeds the head

  std::size_t head_channels() const {
    return fpa ? channels[0] + channels[1] + channels[2] + channels[3] : channels[3];
  }
  std::size_t pam_hidden() const { return std::max<std::size_t>(1, head_channels() / 4); }

  nlohmann::ordered_json to_json() const {
    return {{"branch", "iqa"}, {"channels", channels}, {"pam", pam}, {"fpa", fpa}};
  }
  static IqaArch from_json(const nlohmann::ordered_json& j) {
    IqaArch a;
    a.channels = j.at("channels").get<std::array<std::size_t, 4>>();
    a.pam = j.at("pam").get<bool>();
    a.fpa = j.at("fpa").get<bool>();
    return a;
  }
};

inline std::string stage_name(std::size_t l, const char* what) {
  return "backbone.stage" + std::to_string(l + 1) + "." + what;
}

/// Adds the patch attention parameters for a C-channel input. FC weights
/// are stored as [out,in,1,1] kernels: each FC acts per spatial position.
/// The weight branch output layer starts small with a zero bias: y sums
/// C*h*w products, so a unit-scale init lands far from z-scored labels.
template <class Rng>
void add_pam_params(ParamSet<float>& p, std::size_t channels, Rng& rng, double weight_out_gain = 0.01) {
  const std::size_t hidden = std::max<std::size_t>(1, channels / 4);
  for (const char* branch : {"weight", "score"}) {
    const std::string pre = std::string("pam.") + branch;
    const bool w = std::string(branch) == "weight";
    p.add(pre + ".fc1.weight", kaiming_uniform(Shape{hidden, channels, 1, 1}, channels, rng));
    p.add(pre + ".fc1.bias", bias_uniform(hidden, channels, rng));
    p.add(pre + ".fc2.weight",
          kaiming_uniform(Shape{channels, hidden, 1, 1}, hidden, rng, w ? weight_out_gain : std::sqrt(2.0)));
    p.add(pre + ".fc2.bias", w ? Tensor(Shape{channels}) : bias_uniform(channels, hidden, rng));
  }
}

inline ParamSet<float> init_iqa_params(const IqaArch& arch, std::uint64_t seed) {
  std::mt19937_64 rng(stream_seed(seed, Stream::init, 1));
  ParamSet<float> p;
  std::size_t in = 3;
  for (std::size_t l = 0; l < 4; ++l) {
    const std::size_t out = arch.channels[l];
    p.add(stage_name(l, "weight"), kaiming_uniform(Shape{out, in, 3, 3}, in * 9, rng));
    p.add(stage_name(l, "bias"), bias_uniform(out, in * 9, rng));
    in = out;
  }
  if (arch.pam) {
    add_pam_params(p, arch.head_channels(), rng);
    // The attention sum is nonnegative; labels are z-scored.
    p.add("head.calib.weight", Tensor(Shape{1, 1}, 1.0f));
    p.add("head.calib.bias", Tensor(Shape{1}));
  } else {
    const std::size_t c = arch.head_channels();
    p.add("head.fc.weight", kaiming_uniform(Shape{1, c}, c, rng, 1.0));
    p.add("head.fc.bias", bias_uniform(1, c, rng));
  }
  return p;
}

// ---------------------------------------------------------------------------
// Tape-level building blocks, generic over the scalar type so the same code
// serves 32-bit training and the 64-bit gradient-check path.

/// Four conv3x3/stride2/pad1 + relu stages; each halves the spatial dims.
template <std::floating_point T>
std::array<Var, 4> backbone_forward(BasicTape<T>& tape, const BoundParams<T>& p, Var frame) {
  const auto& shape = tape.value(frame).shape();
  if (shape.size() != 3 || shape[1] % 16 != 0 || shape[2] % 16 != 0 || shape[1] == 0 || shape[2] == 0) {
    throw GeometryError("backbone input must be [C,H,W] with H,W divisible by 16, got " + shape_str(shape));
  }
  std::array<Var, 4> stages;
  Var x = frame;
  for (std::size_t l = 0; l < 4; ++l) {
    x = tape.relu(tape.conv2d(x, p(stage_name(l, "weight")), p(stage_name(l, "bias")), 2, 1));
    stages[l] = x;
  }
  return stages;
}

/// Pools stages 1-3 to the last stage's spatial size and concatenates all
/// four along channels, in stage order.
template <std::floating_point T>
Var frame_pyramid_align(BasicTape<T>& tape, const std::array<Var, 4>& stages) {
  const std::size_t h4 = tape.value(stages[3]).dim(1), w4 = tape.value(stages[3]).dim(2);
  std::array<Var, 4> aligned;
  for (std::size_t l = 0; l < 4; ++l) {
    const auto& s = tape.value(stages[l]).shape();
    if (s.size() != 3 || s[1] % h4 != 0 || s[2] % w4 != 0) {
      throw GeometryError("stage " + std::to_string(l + 1) + " " + shape_str(s) +
                          " is not an integer multiple of the last stage");
    }
    aligned[l] = l == 3 ? stages[l] : tape.adaptive_avg_pool2d(stages[l], h4, w4);
  }
  return tape.concat_channels(std::span<const Var>(aligned));
}

struct PamVars {
  Var y_frame;
  Var w_map;
  Var s_map;
};

/// w = relu(FC(relu(FC(f)))), s = sigmoid(FC(relu(FC(f)))), y = sum(w * s).
template <std::floating_point T>
PamVars patch_attention(BasicTape<T>& tape, const BoundParams<T>& p, Var f) {
  const std::size_t in = tape.value(p("pam.weight.fc1.weight")).dim(1);
  if (tape.value(f).rank() != 3 || tape.value(f).dim(0) != in) {
    throw DimensionError("patch attention expects " + std::to_string(in) + " channels, got " +
                         shape_str(tape.value(f).shape()));
  }
  auto branch = [&](const std::string& pre) {
    Var h = tape.relu(tape.conv2d(f, p(pre + ".fc1.weight"), p(pre + ".fc1.bias"), 1, 0));
    return tape.conv2d(h, p(pre + ".fc2.weight"), p(pre + ".fc2.bias"), 1, 0);
  };
  PamVars out;
  out.w_map = tape.relu(branch("pam.weight"));
  out.s_map = tape.sigmoid(branch("pam.score"));
  out.y_frame = tape.sum_all(tape.hadamard(out.w_map, out.s_map));
  return out;
}

/// Scalar frame score for one [3,H,W] frame.
template <std::floating_point T>
Var iqa_frame_forward(BasicTape<T>& tape, const IqaArch& arch, const BoundParams<T>& p, Var frame) {
  const auto stages = backbone_forward(tape, p, frame);
  const Var f = arch.fpa ? frame_pyramid_align(tape, stages) : stages[3];
  if (arch.pam) {
    const Var y = tape.reshape(patch_attention(tape, p, f).y_frame, Shape{1});
    return tape.sum_all(tape.fully_connected(y, p("head.calib.weight"), p("head.calib.bias")));
  }
  const std::size_t c = tape.value(f).dim(0);
  const Var pooled = tape.reshape(tape.adaptive_avg_pool2d(f, 1, 1), Shape{c});
  return tape.sum_all(tape.fully_connected(pooled, p("head.fc.weight"), p("head.fc.bias")));
}

// ---------------------------------------------------------------------------
// Value-level API

struct FeaturePyramid {
  std::array<Tensor, 4> stages;

  void validate() const {
    const std::size_t h4 = stages[3].dim(1), w4 = stages[3].dim(2);
    for (std::size_t l = 0; l < 4; ++l) {
      if (stages[l].rank() != 3) throw DimensionError("pyramid stage must be [c,h,w]");
      if (l > 0 && !(stages[l].dim(1) < stages[l - 1].dim(1))) throw GeometryError("stage sizes must decrease");
      if (stages[l].dim(1) % h4 != 0 || stages[l].dim(2) % w4 != 0) {
        throw GeometryError("stage " + std::to_string(l + 1) + " not divisible by the last stage");
      }
    }
  }
};

inline FeaturePyramid backbone_forward(const Tensor& frame, const ParamSet<float>& params) {
  Tape tape;
  const auto p = bind_params(tape, params, false);
  const auto stages = backbone_forward(tape, p, tape.leaf(frame, false));
  FeaturePyramid out;
  for (std::size_t l = 0; l < 4; ++l) out.stages[l] = tape.value(stages[l]);
  return out;
}

inline Tensor frame_pyramid_align(const FeaturePyramid& pyramid) {
  pyramid.validate();
  Tape tape;
  std::array<Var, 4> vars;
  for (std::size_t l = 0; l < 4; ++l) vars[l] = tape.leaf(pyramid.stages[l], false);
  return tape.value(frame_pyramid_align(tape, vars));
}

struct PamOutput {
  float y_frame = 0.0f;
  Tensor w_map;
  Tensor s_map;
};

/// `params` must contain the pam.* entries (see add_pam_params).
inline PamOutput patch_attention(const Tensor& features, const ParamSet<float>& params) {
  Tape tape;
  const auto p = bind_params(tape, params, false);
  const PamVars v = patch_attention(tape, p, tape.leaf(features, false));
  return {tape.value(v.y_frame).item(), tape.value(v.w_map), tape.value(v.s_map)};
}

struct IqaModel {
  IqaArch arch;
  ParamSet<float> params;

  static IqaModel init(const IqaArch& arch, std::uint64_t seed) { return {arch, init_iqa_params(arch, seed)}; }

  float frame_score(const Tensor& frame) const {
    Tape tape;
    const auto p = bind_params(tape, params, false);
    return tape.value(iqa_frame_forward(tape, arch, p, tape.leaf(frame, false))).item();
  }

  Checkpoint to_checkpoint() const { return {"iqa", arch.to_json(), 0, params}; }

  static IqaModel from_checkpoint(const Checkpoint& ck) {
    if (ck.kind != "iqa") throw CheckpointError("expected an iqa checkpoint, got '" + ck.kind + "'");
    IqaModel m{IqaArch::from_json(ck.arch), ck.params};
    if (m.params.signature() != init_iqa_params(m.arch, 0).signature()) {
      throw CheckpointError("iqa checkpoint tensors do not match its architecture");
    }
    return m;
  }
};

struct IqaVideoScore {
  double y_iqa = 0.0;
  std::vector<double> per_frame;
};

/// Mean of per-frame scores over an already preprocessed stack.
inline IqaVideoScore iqa_video_score(const FrameStack& frames, const IqaModel& model) {
  if (frames.size() == 0) throw ContractError("iqa_video_score needs at least one frame");
  IqaVideoScore out;
  for (std::size_t t = 0; t < frames.size(); ++t) out.per_frame.push_back(model.frame_score(frames.frame(t)));
  double sum = 0.0;
  for (double v : out.per_frame) sum += v;
  out.y_iqa = sum / static_cast<double>(out.per_frame.size());
  return out;
}

/// Test-time frame protocol: sample at `rate` fps, smaller edge to `resize`,
/// center crop.
inline FrameStack eval_frames(const RawVideo& v, std::uint32_t rate, std::size_t resize, std::size_t crop_size) {
  const FrameStack sampled = frames_at(v, sample_indices_at_rate(v, rate));
  FrameStack out;
  out.source_timestamps = sampled.source_timestamps;
  out.frames = Tensor(Shape{sampled.size(), 3, crop_size, crop_size});
  const std::size_t n = 3 * crop_size * crop_size;
  for (std::size_t t = 0; t < sampled.size(); ++t) {
    const Tensor f = center_crop(resize_smaller_edge(sampled.frame(t), static_cast<int>(resize)), crop_size);
    std::copy(f.data().begin(), f.data().end(), out.frames.data().begin() + static_cast<std::ptrdiff_t>(t * n));
  }
  return out;
}

}  // namespace zoomvqa
