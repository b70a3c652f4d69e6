#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "support/oracles.hpp"
#include "zoomvqa/media_io.hpp"
#include "zoomvqa/metrics.hpp"

using namespace zoomvqa;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("zoomvqa_media_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RawVideo make_video(std::size_t w, std::size_t h, std::size_t n, std::uint32_t fps_num, std::uint32_t fps_den = 1,
                    std::uint64_t seed = 1) {
  RawVideo v;
  v.width = w;
  v.height = h;
  v.num_frames = n;
  v.fps_num = fps_num;
  v.fps_den = fps_den;
  v.frames.resize(n * w * h * 3);
  std::mt19937_64 rng(seed);
  for (auto& b : v.frames) b = static_cast<std::uint8_t>(rng() & 0xff);
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Nearest index to k/2 s, ties to the lower index, computed in doubles.
std::vector<std::size_t> nearest_oracle(double fps, std::size_t n) {
  std::vector<std::size_t> out;
  for (int k = 0; k / 2.0 < n / fps; ++k) {
    const double pos = k / 2.0 * fps;
    const double fl = std::floor(pos);
    std::size_t idx = static_cast<std::size_t>(pos - fl > 0.5 ? fl + 1 : fl);
    idx = std::min(idx, n - 1);
    if (out.empty() || out.back() != idx) out.push_back(idx);
  }
  return out;
}

}  // namespace

TEST(RawVideoIo, LoadTwoFrameVideo) {
  const auto dir = scratch("load");
  const RawVideo v = make_video(4, 4, 2, 25);
  EXPECT_EQ(v.frames.size(), 96u);
  write_raw_video(dir / "a.rgb24", v);
  const RawVideo back = load_raw_video(dir / "a.rgb24");
  EXPECT_EQ(back.num_frames, 2u);
  EXPECT_EQ(back.frames, v.frames);
  EXPECT_EQ(slurp(dir / "a.rgb24").size(), 96u);
}

TEST(RawVideoIo, ShortPayloadIsCorrupt) {
  const auto dir = scratch("short");
  write_raw_video(dir / "a.rgb24", make_video(4, 4, 2, 25));
  fs::resize_file(dir / "a.rgb24", 95);
  EXPECT_THROW(load_raw_video(dir / "a.rgb24"), CorruptPayloadError);
}

TEST(RawVideoIo, MissingSidecarIsFormatError) {
  const auto dir = scratch("nosidecar");
  write_raw_video(dir / "a.rgb24", make_video(4, 4, 1, 25));
  fs::remove(dir / "a.json");
  EXPECT_THROW(load_raw_video(dir / "a.rgb24"), FormatError);
}

TEST(RawVideoIo, FrameTensorScalesBytes) {
  const RawVideo v = make_video(3, 2, 1, 1);
  const Tensor f = frame_tensor(v, 0);
  ASSERT_EQ(f.shape(), (Shape{3, 2, 3}));
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t x = 0; x < 3; ++x)
      for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(f[(c * 2 + y) * 3 + x], v.at(0, y, x, c) / 255.0f);
  EXPECT_THROW(frame_tensor(v, 1), GeometryError);
}

TEST(Sampling2fps, ThirtyFpsThreeSeconds) {
  const RawVideo v = make_video(2, 2, 90, 30);
  EXPECT_EQ(sample_indices_at_rate(v, 2), (std::vector<std::size_t>{0, 15, 30, 45, 60, 75}));
  const FrameStack s = sample_frames_2fps(v);
  EXPECT_EQ(s.size(), 6u);
  EXPECT_EQ(s.frames.shape(), (Shape{6, 3, 2, 2}));
  for (std::size_t i = 1; i < s.size(); ++i) EXPECT_GT(s.source_timestamps[i], s.source_timestamps[i - 1]);
}

TEST(Sampling2fps, DegenerateAndIdentity) {
  EXPECT_EQ(sample_frames_2fps(make_video(2, 2, 1, 1)).size(), 1u);
  const RawVideo two = make_video(2, 2, 9, 2);
  const auto idx = sample_indices_at_rate(two, 2);
  ASSERT_EQ(idx.size(), 9u);
  for (std::size_t i = 0; i < idx.size(); ++i) EXPECT_EQ(idx[i], i);
  // Resampling the sampled video again keeps it unchanged.
  const FrameStack s = sample_frames_2fps(two);
  EXPECT_EQ(s.frames.numel(), 9u * 12u);
}

TEST(Sampling2fps, MatchesNearestOracle) {
  for (std::uint32_t fps : {1u, 3u, 5u, 7u, 24u, 25u, 29u, 60u}) {
    for (std::size_t n : {1u, 2u, 5u, 13u, 61u}) {
      EXPECT_EQ(sample_indices_at_rate(make_video(1, 1, n, fps), 2), nearest_oracle(fps, n)) << fps << " " << n;
    }
  }
}

TEST(Sampling2fps, TiesGoToLowerIndex) {
  // 3 fps: t=0.5s sits at frame 1.5.
  const auto idx = sample_indices_at_rate(make_video(1, 1, 6, 3), 2);
  EXPECT_EQ(idx, (std::vector<std::size_t>{0, 1, 3, 4}));
}

TEST(Sampling2fps, RationalRate) {
  // 30000/1001 fps, 60 frames: 2.002 s.
  const auto idx = sample_indices_at_rate(make_video(1, 1, 60, 30000, 1001), 2);
  EXPECT_EQ(idx, (std::vector<std::size_t>{0, 15, 30, 45, 59}));
}

TEST(Resize, GeometryArithmetic) {
  EXPECT_EQ(smaller_edge_dims(720, 1280, 512), (std::pair<std::size_t, std::size_t>{512, 910}));
  EXPECT_EQ(smaller_edge_dims(1280, 720, 512), (std::pair<std::size_t, std::size_t>{910, 512}));
  const Tensor f(Shape{3, 720, 1280}, 0.25f);
  const Tensor r = resize_smaller_edge(f, 512);
  EXPECT_EQ(r.shape(), (Shape{3, 512, 910}));
  for (float v : r.data()) ASSERT_FLOAT_EQ(v, 0.25f);
}

TEST(Resize, AlreadyAtTargetUnchanged) {
  std::mt19937_64 rng(3);
  const Tensor f = oracle::random_tensor(Shape{3, 512, 910}, rng, 0, 1);
  EXPECT_EQ(resize_smaller_edge(f, 512), f);
}

TEST(Resize, BadTarget) {
  EXPECT_THROW(resize_smaller_edge(Tensor(Shape{3, 4, 4}), 0), ParameterError);
  EXPECT_THROW(resize_smaller_edge(Tensor(Shape{3, 4, 4}), -3), ParameterError);
}

TEST(Resize, MatchesHalfPixelOracle) {
  std::mt19937_64 rng(4);
  const Tensor f = oracle::random_tensor(Shape{2, 7, 11}, rng, 0, 1);
  for (auto [oh, ow] : std::vector<std::pair<std::size_t, std::size_t>>{{14, 22}, {3, 5}, {7, 4}, {20, 11}}) {
    const Tensor r = resize_bilinear(f, oh, ow);
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          const double sy = std::clamp((y + 0.5) * 7.0 / oh - 0.5, 0.0, 6.0);
          const double sx = std::clamp((x + 0.5) * 11.0 / ow - 0.5, 0.0, 10.0);
          const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
          const int y1 = std::min(y0 + 1, 6), x1 = std::min(x0 + 1, 10);
          const double wy = sy - y0, wx = sx - x0;
          auto at = [&](int yy, int xx) { return static_cast<double>(f[(c * 7 + yy) * 11 + xx]); };
          const double want = (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x1)) +
                              wy * ((1 - wx) * at(y1, x0) + wx * at(y1, x1));
          // A bilinear combination of at most four source pixels.
          const double lo = std::min({at(y0, x0), at(y0, x1), at(y1, x0), at(y1, x1)});
          const double hi = std::max({at(y0, x0), at(y0, x1), at(y1, x0), at(y1, x1)});
          const double got = r[(c * oh + y) * ow + x];
          EXPECT_NEAR(got, want, 1e-6);
          EXPECT_GE(got, lo - 1e-6);
          EXPECT_LE(got, hi + 1e-6);
        }
  }
}

TEST(Crop, CenterOf512) {
  Tensor f(Shape{1, 512, 512});
  for (std::size_t y = 0; y < 512; ++y)
    for (std::size_t x = 0; x < 512; ++x) f[y * 512 + x] = static_cast<float>(y * 1000 + x);
  const Tensor c = center_crop(f, 320);
  EXPECT_EQ(c.shape(), (Shape{1, 320, 320}));
  EXPECT_EQ(c[0], 96.0f * 1000 + 96);
  EXPECT_EQ(c[320 * 320 - 1], 415.0f * 1000 + 415);
}

TEST(Crop, SliceIsBitExactAndFlipInvolution) {
  std::mt19937_64 rng(5);
  const Tensor f = oracle::random_tensor(Shape{3, 20, 30}, rng, 0, 1);
  const Tensor c = crop(f, 3, 7, 10);
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t y = 0; y < 10; ++y)
      for (std::size_t x = 0; x < 10; ++x) ASSERT_EQ(c[(ch * 10 + y) * 10 + x], f[(ch * 20 + 3 + y) * 30 + 7 + x]);
  EXPECT_EQ(flip_horizontal(flip_horizontal(f)), f);
  const Tensor fl = flip_horizontal(f);
  EXPECT_EQ(fl[0], f[29]);
}

TEST(Crop, TooSmallIsGeometryError) {
  const Tensor f(Shape{3, 300, 400});
  EXPECT_THROW(center_crop(f, 320), GeometryError);
  EXPECT_THROW(crop(f, 0, 100, 320), GeometryError);
  std::mt19937_64 rng(1);
  EXPECT_THROW(random_crop_flip(f, rng, 320), GeometryError);
}

TEST(Crop, RandomCropFlipIsSeeded) {
  std::mt19937_64 rng0(6);
  const Tensor f = oracle::random_tensor(Shape{3, 40, 50}, rng0, 0, 1);
  std::mt19937_64 a(9), b(9);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(random_crop_flip(f, a, 16), random_crop_flip(f, b, 16));
  // Every output pixel is some input pixel.
  std::mt19937_64 c(10);
  const Tensor out = random_crop_flip(f, c, 16);
  for (float v : out.data()) EXPECT_NE(std::find(f.data().begin(), f.data().end(), v), f.data().end());
}

TEST(Crop, FlipProbabilityExtremes) {
  std::mt19937_64 rng0(7);
  const Tensor f = oracle::random_tensor(Shape{1, 4, 4}, rng0, 0, 1);
  std::mt19937_64 a(1), b(1);
  EXPECT_EQ(random_crop_flip(f, a, 4, 0.0), f);
  EXPECT_EQ(random_crop_flip(f, b, 4, 1.0), flip_horizontal(f));
}

TEST(SynthDataset, SeededDeterminism) {
  const auto d1 = scratch("synth1"), d2 = scratch("synth2");
  SynthOptions opt;
  opt.width = 32;
  opt.height = 24;
  opt.num_frames = 4;
  synth_dataset(16, 7, d1, opt);
  synth_dataset(16, 7, d2, opt);
  EXPECT_EQ(slurp(d1 / "manifest.json"), slurp(d2 / "manifest.json"));
  for (const auto& e : fs::directory_iterator(d1)) {
    EXPECT_EQ(slurp(e.path()), slurp(d2 / e.path().filename())) << e.path();
  }
}

TEST(SynthDataset, MonotoneGroundTruth) {
  const auto dir = scratch("synth_mono");
  SynthOptions opt;
  opt.width = 16;
  opt.height = 16;
  opt.num_frames = 2;
  const Manifest m = synth_dataset(40, 3, dir, opt);
  std::vector<double> mos, neg_sigma;
  bool saw_zero = false;
  for (const auto& r : m.records) {
    ASSERT_TRUE(r.noise_sigma);
    mos.push_back(r.mos_raw);
    neg_sigma.push_back(-*r.noise_sigma);
    if (*r.noise_sigma == 0.0) {
      EXPECT_EQ(r.mos_raw, 100.0);
      saw_zero = true;
    }
  }
  EXPECT_TRUE(saw_zero);
  EXPECT_DOUBLE_EQ(srcc(mos, neg_sigma), 1.0);
  EXPECT_DOUBLE_EQ(synth_video(1, 0.0, opt).frames == synth_video(1, 0.0, opt).frames, true);
}

TEST(SynthDataset, Errors) {
  const auto dir = scratch("synth_err");
  EXPECT_THROW(synth_dataset(1, 1, dir), ParameterError);
  std::ofstream(dir / "blocker") << "x";
  EXPECT_THROW(synth_dataset(4, 1, dir / "blocker" / "sub"), IoError);
}

TEST(Manifest, TrainSplitIsStandardized) {
  const auto dir = scratch("norm");
  SynthOptions opt;
  opt.width = 8;
  opt.height = 8;
  opt.num_frames = 1;
  const Manifest m = synth_dataset(30, 11, dir, opt);
  const Manifest loaded = load_manifest(dir / "manifest.json");
  for (const Manifest* mm : {&m, &loaded}) {
    double mean = 0, var = 0;
    for (double y : mm->labels()) mean += y;
    mean /= 30;
    for (double y : mm->labels()) var += (y - mean) * (y - mean);
    EXPECT_LT(std::abs(mean), 1e-6);
    EXPECT_LT(std::abs(std::sqrt(var / 30) - 1.0), 1e-6);
  }
}

TEST(Manifest, TestSplitReusesTrainStats) {
  const auto dir = scratch("teststats");
  SynthOptions opt;
  opt.width = 8;
  opt.height = 8;
  opt.num_frames = 1;
  const Manifest train = synth_dataset(10, 1, dir / "train", opt);
  opt.split = Split::test;
  opt.norm_stats = train.norm_stats;
  synth_dataset(5, 2, dir / "test", opt);
  const Manifest test = load_manifest(dir / "test" / "manifest.json");
  EXPECT_EQ(test.split, Split::test);
  EXPECT_DOUBLE_EQ(test.norm_stats.mean, train.norm_stats.mean);
  EXPECT_DOUBLE_EQ(test.norm_stats.std, train.norm_stats.std);
  for (const auto& r : test.records) {
    EXPECT_DOUBLE_EQ(r.mos_norm, (r.mos_raw - train.norm_stats.mean) / train.norm_stats.std);
    EXPECT_TRUE(fs::exists(test.resolve(r)));
  }
}

TEST(Manifest, DuplicateIdAndBadJson) {
  const auto dir = scratch("dup");
  std::ofstream(dir / "m.json") << R"({"dataset_name":"d","split":"train","norm_stats":{"mean":0,"std":1},
    "records":[{"id":"a","path":"a.rgb24","mos_raw":1},{"id":"a","path":"b.rgb24","mos_raw":2}]})";
  EXPECT_THROW(load_manifest(dir / "m.json"), FormatError);
  std::ofstream(dir / "bad.json") << "{not json";
  EXPECT_THROW(load_manifest(dir / "bad.json"), FormatError);
  std::ofstream(dir / "empty.json") << R"({"dataset_name":"d","split":"train","records":[]})";
  EXPECT_THROW(load_manifest(dir / "empty.json"), FormatError);
  EXPECT_THROW(load_manifest(dir / "nope.json"), IoError);
}

TEST(Manifest, ConstantSplitKeepsUnitStd) {
  std::vector<VideoRecord> recs(3);
  for (auto& r : recs) r.mos_raw = 50;
  const NormStats s = compute_norm_stats(recs);
  EXPECT_EQ(s.mean, 50.0);
  EXPECT_EQ(s.std, 1.0);
}
