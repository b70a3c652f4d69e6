#pragma once

// Uniform grid mini-patch sampling: one native-resolution fragment per grid
// cell, spatially aligned across every frame of a clip.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "zoomvqa/error.hpp"
#include "zoomvqa/media_io.hpp"
#include "zoomvqa/rng.hpp"
#include "zoomvqa/tensor.hpp"

namespace zoomvqa {

struct CellOffset {
  std::size_t top = 0;
  std::size_t left = 0;
};

/// Contiguous source interval [begin, begin + size).
struct Interval {
  std::size_t begin = 0;
  std::size_t size = 0;
};

struct FragmentGrid {
  std::size_t grid_h = 7;
  std::size_t grid_w = 7;
  std::size_t frag_size = 48;
  std::size_t source_h = 0;
  std::size_t source_w = 0;
  std::vector<CellOffset> offsets;  // row-major over cells

  std::size_t extent_h() const noexcept { return grid_h * frag_size; }
  std::size_t extent_w() const noexcept { return grid_w * frag_size; }
  const CellOffset& offset(std::size_t gy, std::size_t gx) const { return offsets[gy * grid_w + gx]; }
};

/// Splits `length` into `parts` equal regions; the remainder goes one pixel
/// each to the trailing regions.
inline std::vector<Interval> partition_axis(std::size_t length, std::size_t parts) {
  if (parts == 0) throw ParameterError("grid must have at least one cell per axis");
  std::vector<Interval> out(parts);
  const std::size_t base = length / parts, rem = length % parts;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < parts; ++i) {
    const std::size_t size = base + (i >= parts - rem ? 1 : 0);
    out[i] = {pos, size};
    pos += size;
  }
  return out;
}

template <class Rng>
FragmentGrid plan_grid(std::size_t source_h, std::size_t source_w, std::size_t grid, std::size_t frag_size,
                       Rng& rng) {
  if (frag_size == 0) throw ParameterError("fragment size must be positive");
  if (source_h < grid * frag_size || source_w < grid * frag_size) {
    throw GeometryError("source " + std::to_string(source_h) + "x" + std::to_string(source_w) +
                        " is smaller than the " + std::to_string(grid * frag_size) +
                        "px fragment extent; resize the smaller edge upstream");
  }
  FragmentGrid g;
  g.grid_h = g.grid_w = grid;
  g.frag_size = frag_size;
  g.source_h = source_h;
  g.source_w = source_w;
  const auto rows = partition_axis(source_h, grid);
  const auto cols = partition_axis(source_w, grid);
  for (std::size_t gy = 0; gy < grid; ++gy)
    for (std::size_t gx = 0; gx < grid; ++gx) {
      std::uniform_int_distribution<std::size_t> dy(0, rows[gy].size - frag_size);
      std::uniform_int_distribution<std::size_t> dx(0, cols[gx].size - frag_size);
      const std::size_t top = rows[gy].begin + dy(rng);
      const std::size_t left = cols[gx].begin + dx(rng);
      g.offsets.push_back({top, left});
    }
  return g;
}

/// Temporal window for one view. Starts are spread uniformly over the
/// admissible range; a single view is centered. Indices past the last
/// frame clamp to it.
inline std::vector<std::size_t> sample_clip_indices(std::size_t num_frames, std::size_t clip_len, std::size_t stride,
                                                    std::size_t view_id, std::size_t n_views) {
  if (num_frames < 1) throw ParameterError("video has no frames");
  if (clip_len < 1 || stride < 1) throw ParameterError("clip length and stride must be positive");
  if (n_views < 1 || view_id >= n_views) {
    throw ParameterError("view " + std::to_string(view_id) + " out of range for " + std::to_string(n_views) +
                         " views");
  }
  const std::size_t window = (clip_len - 1) * stride + 1;
  const std::size_t max_start = num_frames > window ? num_frames - window : 0;
  const std::size_t start = n_views == 1 ? max_start / 2 : view_id * max_start / (n_views - 1);
  std::vector<std::size_t> out(clip_len);
  for (std::size_t k = 0; k < clip_len; ++k) out[k] = std::min(start + k * stride, num_frames - 1);
  return out;
}

struct ClipView {
  Tensor data;  // [3, T, grid_h*frag, grid_w*frag] in [0,1]
  FragmentGrid grid;
  std::vector<std::size_t> temporal_indices;
  std::size_t view_id = 0;
};

/// Copies fragments without interpolation and tiles them in grid order.
inline ClipView extract_view(const RawVideo& v, const FragmentGrid& grid,
                             const std::vector<std::size_t>& temporal_indices, std::size_t view_id = 0) {
  if (grid.source_h != v.height || grid.source_w != v.width) {
    throw GeometryError("grid planned for " + std::to_string(grid.source_h) + "x" + std::to_string(grid.source_w) +
                        " but video is " + std::to_string(v.height) + "x" + std::to_string(v.width));
  }
  const std::size_t F = grid.frag_size, Ho = grid.extent_h(), Wo = grid.extent_w(), T = temporal_indices.size();
  ClipView view;
  view.grid = grid;
  view.temporal_indices = temporal_indices;
  view.view_id = view_id;
  view.data = Tensor(Shape{3, T, Ho, Wo});
  float* out = view.data.data().data();
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t f = temporal_indices[t];
    if (f >= v.num_frames) throw GeometryError("temporal index " + std::to_string(f) + " out of bounds");
    for (std::size_t gy = 0; gy < grid.grid_h; ++gy)
      for (std::size_t gx = 0; gx < grid.grid_w; ++gx) {
        const CellOffset& o = grid.offset(gy, gx);
        if (o.top + F > v.height || o.left + F > v.width) throw GeometryError("fragment outside source frame");
        for (std::size_t y = 0; y < F; ++y) {
          const std::uint8_t* src = v.frames.data() + ((f * v.height + o.top + y) * v.width + o.left) * 3;
          const std::size_t oy = gy * F + y;
          for (std::size_t x = 0; x < F; ++x) {
            const std::size_t ox = gx * F + x;
            for (std::size_t c = 0; c < 3; ++c)
              out[((c * T + t) * Ho + oy) * Wo + ox] = static_cast<float>(src[x * 3 + c]) / 255.0f;
          }
        }
      }
  }
  return view;
}

/// Fraction of pixels not visited by the sampled extent.
inline double sampling_cost_ratio(std::size_t source_h, std::size_t source_w, std::size_t grid, std::size_t frag_size) {
  const double sampled = static_cast<double>(grid * frag_size) * static_cast<double>(grid * frag_size);
  return 1.0 - sampled / (static_cast<double>(source_h) * static_cast<double>(source_w));
}

/// Upscales (bilinear, rounded back to bytes) so the smaller edge reaches
/// `min_edge`; videos already large enough are returned unchanged.
inline RawVideo ensure_min_extent(const RawVideo& v, std::size_t min_edge) {
  if (std::min(v.height, v.width) >= min_edge) return v;
  const auto [oh, ow] = smaller_edge_dims(v.height, v.width, min_edge);
  RawVideo out = v;
  out.height = oh;
  out.width = ow;
  out.frames.assign(out.num_frames * out.frame_bytes(), 0);
  for (std::size_t f = 0; f < v.num_frames; ++f) {
    const Tensor r = resize_bilinear(frame_tensor(v, f), oh, ow);
    const std::size_t plane = oh * ow;
    std::uint8_t* dst = out.frames.data() + f * out.frame_bytes();
    for (std::size_t i = 0; i < plane; ++i)
      for (std::size_t c = 0; c < 3; ++c)
        dst[i * 3 + c] = static_cast<std::uint8_t>(std::clamp(std::lround(r[c * plane + i] * 255.0f), 0L, 255L));
  }
  return out;
}

struct ViewSpec {
  std::size_t grid = 7;
  std::size_t frag_size = 48;
  std::size_t clip_len = 32;
  std::size_t stride = 2;
  std::size_t n_views = 4;
};

/// Inference view `view_id`: fixed temporal placement and a spatial grid
/// drawn from its own stream, so (seed, view_id) determines the view.
/// The video must already satisfy the fragment extent.
inline ClipView make_view(const RawVideo& v, const ViewSpec& spec, std::uint64_t seed, std::size_t view_id) {
  std::mt19937_64 rng(stream_seed(seed, Stream::grids, view_id));
  const FragmentGrid grid = plan_grid(v.height, v.width, spec.grid, spec.frag_size, rng);
  const auto idx = sample_clip_indices(v.num_frames, spec.clip_len, spec.stride, view_id, spec.n_views);
  return extract_view(v, grid, idx, view_id);
}

/// Training-time view: random start and random grid.
template <class Rng>
ClipView random_view(const RawVideo& v, const ViewSpec& spec, Rng& rng) {
  const std::size_t window = (spec.clip_len - 1) * spec.stride + 1;
  const std::size_t max_start = v.num_frames > window ? v.num_frames - window : 0;
  const std::size_t start = std::uniform_int_distribution<std::size_t>(0, max_start)(rng);
  std::vector<std::size_t> idx(spec.clip_len);
  for (std::size_t k = 0; k < spec.clip_len; ++k) idx[k] = std::min(start + k * spec.stride, v.num_frames - 1);
  const FragmentGrid grid = plan_grid(v.height, v.width, spec.grid, spec.frag_size, rng);
  return extract_view(v, grid, idx, 0);
}

/// Writes a view back out as an .rgb24 video for inspection.
inline void dump_view(const ClipView& view, const fs::path& path, std::uint32_t fps_num = 1,
                      std::uint32_t fps_den = 1) {
  const std::size_t T = view.data.dim(1), H = view.data.dim(2), W = view.data.dim(3);
  RawVideo v;
  v.width = W;
  v.height = H;
  v.fps_num = fps_num;
  v.fps_den = fps_den;
  v.num_frames = T;
  v.frames.resize(T * H * W * 3);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x)
        for (std::size_t c = 0; c < 3; ++c)
          v.frames[((t * H + y) * W + x) * 3 + c] =
              static_cast<std::uint8_t>(std::lround(view.data[((c * T + t) * H + y) * W + x] * 255.0f));
  write_raw_video(path, v);
}

}  // namespace zoomvqa
