#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "zoomvqa/fragment_sampler.hpp"

using namespace zoomvqa;

namespace {

RawVideo random_video(std::size_t w, std::size_t h, std::size_t n, std::uint64_t seed) {
  RawVideo v;
  v.width = w;
  v.height = h;
  v.num_frames = n;
  v.fps_num = 8;
  v.fps_den = 1;
  v.frames.resize(n * w * h * 3);
  std::mt19937_64 rng(seed);
  for (auto& b : v.frames) b = static_cast<std::uint8_t>(rng() & 0xff);
  return v;
}

// Region of cell g along an axis, from the equal split with trailing remainder.
std::pair<std::size_t, std::size_t> region(std::size_t length, std::size_t parts, std::size_t g) {
  const std::size_t base = length / parts, rem = length % parts, lead = parts - rem;
  const std::size_t begin = g < lead ? g * base : lead * base + (g - lead) * (base + 1);
  return {begin, base + (g >= lead ? 1 : 0)};
}

}  // namespace

TEST(PartitionAxis, CoversLengthExactly) {
  for (std::size_t len : {7u, 48u, 100u, 336u, 1081u})
    for (std::size_t parts : {1u, 3u, 7u}) {
      if (parts > len) continue;
      const auto iv = partition_axis(len, parts);
      std::size_t pos = 0;
      for (std::size_t i = 0; i < parts; ++i) {
        EXPECT_EQ(iv[i].begin, pos);
        EXPECT_EQ(iv[i].begin, region(len, parts, i).first);
        EXPECT_EQ(iv[i].size, region(len, parts, i).second);
        pos += iv[i].size;
      }
      EXPECT_EQ(pos, len);
    }
  EXPECT_THROW(partition_axis(10, 0), ParameterError);
}

TEST(PlanGrid, OffsetsStayInsideCells) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t h = 60 + trial, w = 90 + 3 * trial;
    const FragmentGrid g = plan_grid(h, w, 4, 12, rng);
    for (std::size_t gy = 0; gy < 4; ++gy)
      for (std::size_t gx = 0; gx < 4; ++gx) {
        const auto [rb, rs] = region(h, 4, gy);
        const auto [cb, cs] = region(w, 4, gx);
        const CellOffset& o = g.offset(gy, gx);
        EXPECT_GE(o.top, rb);
        EXPECT_LE(o.top + 12, rb + rs);
        EXPECT_GE(o.left, cb);
        EXPECT_LE(o.left + 12, cb + cs);
      }
  }
}

TEST(PlanGrid, ZeroSlackGivesCellOrigins) {
  std::mt19937_64 rng(2);
  const FragmentGrid g = plan_grid(336, 336, 7, 48, rng);
  for (std::size_t gy = 0; gy < 7; ++gy)
    for (std::size_t gx = 0; gx < 7; ++gx) {
      EXPECT_EQ(g.offset(gy, gx).top, gy * 48);
      EXPECT_EQ(g.offset(gy, gx).left, gx * 48);
    }
}

TEST(PlanGrid, TooSmallSourceIsGeometryError) {
  std::mt19937_64 rng(3);
  EXPECT_THROW(plan_grid(335, 400, 7, 48, rng), GeometryError);
  EXPECT_THROW(plan_grid(400, 335, 7, 48, rng), GeometryError);
  EXPECT_THROW(plan_grid(400, 400, 7, 0, rng), ParameterError);
}

TEST(PlanGrid, OffsetsAreUniform) {
  // One cell with 5 admissible positions per axis; chi-square with 4 dof.
  std::mt19937_64 rng(4);
  const int draws = 5000;
  std::vector<int> top(5, 0), left(5, 0);
  for (int i = 0; i < draws; ++i) {
    const FragmentGrid g = plan_grid(20, 20, 1, 16, rng);
    ++top[g.offsets[0].top];
    ++left[g.offsets[0].left];
  }
  auto chi2 = [&](const std::vector<int>& c) {
    double s = 0;
    for (int k : c) s += (k - draws / 5.0) * (k - draws / 5.0) / (draws / 5.0);
    return s;
  };
  EXPECT_LT(chi2(top), 18.47);  // p = 0.001
  EXPECT_LT(chi2(left), 18.47);
}

TEST(ClipIndices, ViewZeroOfLongVideo) {
  const auto idx = sample_clip_indices(300, 32, 2, 0, 4);
  ASSERT_EQ(idx.size(), 32u);
  for (std::size_t k = 0; k < 32; ++k) EXPECT_EQ(idx[k], 2 * k);
  EXPECT_EQ(idx.back(), 62u);
}

TEST(ClipIndices, LastViewEndsAtLastFrame) {
  const auto idx = sample_clip_indices(300, 32, 2, 3, 4);
  EXPECT_EQ(idx.front(), 300u - 63u);
  EXPECT_EQ(idx.back(), 299u);
}

TEST(ClipIndices, ShortVideoClamps) {
  const auto idx = sample_clip_indices(10, 32, 2, 2, 4);
  ASSERT_EQ(idx.size(), 32u);
  for (std::size_t k = 0; k < 32; ++k) EXPECT_EQ(idx[k], std::min<std::size_t>(2 * k, 9));
}

TEST(ClipIndices, SingleViewIsCentered) {
  const auto idx = sample_clip_indices(100, 8, 2, 0, 1);
  // window 15, max start 85
  EXPECT_EQ(idx.front(), 42u);
}

TEST(ClipIndices, Errors) {
  EXPECT_THROW(sample_clip_indices(100, 8, 2, 4, 4), ParameterError);
  EXPECT_THROW(sample_clip_indices(100, 8, 2, 0, 0), ParameterError);
  EXPECT_THROW(sample_clip_indices(0, 8, 2, 0, 1), ParameterError);
  EXPECT_THROW(sample_clip_indices(100, 0, 2, 0, 1), ParameterError);
}

TEST(ExtractView, PixelMappingIsExact) {
  const RawVideo v = random_video(53, 41, 6, 5);
  std::mt19937_64 rng(6);
  const FragmentGrid g = plan_grid(41, 53, 3, 9, rng);
  const std::vector<std::size_t> idx{5, 0, 3};
  const ClipView view = extract_view(v, g, idx);
  ASSERT_EQ(view.data.shape(), (Shape{3, 3, 27, 27}));
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t Y = 0; Y < 27; ++Y)
        for (std::size_t X = 0; X < 27; ++X) {
          const CellOffset& o = g.offset(Y / 9, X / 9);
          const float want = v.at(idx[t], o.top + Y % 9, o.left + X % 9, c) / 255.0f;
          ASSERT_EQ(view.data[((c * 3 + t) * 27 + Y) * 27 + X], want);
        }
}

TEST(ExtractView, FragmentsDoNotOverlap) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const FragmentGrid g = plan_grid(70 + trial, 50 + 2 * trial, 5, 10, rng);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& o : g.offsets)
      for (std::size_t y = 0; y < 10; ++y)
        for (std::size_t x = 0; x < 10; ++x) EXPECT_TRUE(seen.insert({o.top + y, o.left + x}).second);
    EXPECT_EQ(seen.size(), 25u * 100u);
  }
}

TEST(ExtractView, GridMismatchIsGeometryError) {
  const RawVideo v = random_video(40, 40, 2, 1);
  std::mt19937_64 rng(8);
  const FragmentGrid g = plan_grid(48, 48, 2, 8, rng);
  EXPECT_THROW(extract_view(v, g, {0}), GeometryError);
  const FragmentGrid ok = plan_grid(40, 40, 2, 8, rng);
  EXPECT_THROW(extract_view(v, ok, {2}), GeometryError);
}

TEST(ExtractView, SingleCellEqualsCrop) {
  const RawVideo v = random_video(30, 20, 1, 9);
  FragmentGrid g;
  g.grid_h = g.grid_w = 1;
  g.frag_size = 12;
  g.source_h = 20;
  g.source_w = 30;
  g.offsets = {{5, 11}};
  const ClipView view = extract_view(v, g, {0});
  const Tensor want = crop(frame_tensor(v, 0), 5, 11, 12);
  EXPECT_EQ(view.data.reshaped(Shape{3, 12, 12}), want);
}

TEST(ExtractView, ConstantVideoGivesConstantView) {
  RawVideo v = random_video(64, 64, 4, 1);
  std::fill(v.frames.begin(), v.frames.end(), std::uint8_t{77});
  const ClipView view = make_view(v, ViewSpec{4, 12, 4, 1, 2}, 3, 1);
  for (float x : view.data.data()) ASSERT_EQ(x, 77.0f / 255.0f);
}

TEST(MakeView, DeterministicPerSeedAndView) {
  const RawVideo v = random_video(80, 60, 20, 10);
  const ViewSpec spec{3, 16, 4, 2, 4};
  for (std::size_t id = 0; id < 4; ++id) {
    const ClipView a = make_view(v, spec, 42, id), b = make_view(v, spec, 42, id);
    EXPECT_EQ(a.data, b.data);
    EXPECT_EQ(a.temporal_indices, b.temporal_indices);
  }
  EXPECT_NE(make_view(v, spec, 42, 0).data, make_view(v, spec, 43, 0).data);
}

TEST(RandomView, SeededAndInBounds) {
  const RawVideo v = random_video(80, 60, 20, 11);
  const ViewSpec spec{3, 16, 4, 2, 4};
  std::mt19937_64 a(1), b(1);
  for (int i = 0; i < 10; ++i) {
    const ClipView x = random_view(v, spec, a), y = random_view(v, spec, b);
    EXPECT_EQ(x.data, y.data);
    for (std::size_t k = 1; k < x.temporal_indices.size(); ++k)
      EXPECT_EQ(x.temporal_indices[k], x.temporal_indices[k - 1] + 2);
  }
}

TEST(CostRatio, KnownValues) {
  EXPECT_NEAR(sampling_cost_ratio(2160, 3840, 7, 48), 0.9864, 1e-4);
  EXPECT_DOUBLE_EQ(sampling_cost_ratio(336, 336, 7, 48), 0.0);
  EXPECT_DOUBLE_EQ(sampling_cost_ratio(336, 672, 7, 48), 0.5);
}

TEST(MinExtent, UpscalesSmallerEdge) {
  const RawVideo v = random_video(40, 30, 2, 12);
  const RawVideo big = ensure_min_extent(v, 48);
  EXPECT_EQ(big.height, 48u);
  EXPECT_EQ(big.width, 64u);
  EXPECT_NO_THROW(big.validate());
  EXPECT_EQ(ensure_min_extent(v, 30).frames, v.frames);
}

TEST(DumpView, RoundTripsBytes) {
  const auto dir = fs::temp_directory_path() / "zoomvqa_frag_dump";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const RawVideo v = random_video(50, 50, 6, 13);
  const ClipView view = make_view(v, ViewSpec{2, 20, 3, 2, 1}, 5, 0);
  dump_view(view, dir / "view.rgb24", 8, 1);
  const RawVideo back = load_raw_video(dir / "view.rgb24");
  EXPECT_EQ(back.width, 40u);
  EXPECT_EQ(back.height, 40u);
  EXPECT_EQ(back.num_frames, 3u);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t y = 0; y < 40; ++y)
      for (std::size_t x = 0; x < 40; ++x) {
        const CellOffset& o = view.grid.offset(y / 20, x / 20);
        for (std::size_t c = 0; c < 3; ++c)
          ASSERT_EQ(back.at(t, y, x, c), v.at(view.temporal_indices[t], o.top + y % 20, o.left + x % 20, c));
      }
}
