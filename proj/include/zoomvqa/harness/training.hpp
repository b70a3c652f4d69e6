#pragma once

// Separate training loops: smooth-L1 regression for the frame branch,
// PLCC + beta * rank for the clip branch.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "zoomvqa/error.hpp"
#include "zoomvqa/fragment_sampler.hpp"
#include "zoomvqa/harness/config.hpp"
#include "zoomvqa/harness/optimizer.hpp"
#include "zoomvqa/iqa_branch.hpp"
#include "zoomvqa/losses.hpp"
#include "zoomvqa/media_io.hpp"
#include "zoomvqa/rng.hpp"
#include "zoomvqa/vqa_branch.hpp"

namespace zoomvqa {

using LogSink = std::function<void(const std::string&)>;

struct TrainLog {
  std::vector<double> losses;  // one entry per optimizer step
  std::size_t skipped_batches = 0;
  std::size_t steps = 0;
};

struct IqaTrainResult {
  IqaModel model;
  TrainLog log;
};

struct VqaTrainResult {
  VqaModel model;
  TrainLog log;
};

namespace detail {

// Cycles through shuffled epochs so every batch has the same size even when
// the dataset is smaller than a batch.
class EpochSampler {
 public:
  EpochSampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    reshuffle();
  }

  std::size_t next() {
    if (pos_ == order_.size()) reshuffle();
    return order_[pos_++];
  }

 private:
  void reshuffle() {
    std::shuffle(order_.begin(), order_.end(), rng_);
    pos_ = 0;
  }

  std::vector<std::size_t> order_;
  std::mt19937_64 rng_;
  std::size_t pos_ = 0;
};

inline std::vector<Tensor> zero_grads(const ParamSet<float>& p) {
  std::vector<Tensor> g;
  for (std::size_t i = 0; i < p.size(); ++i) g.emplace_back(p[i].shape());
  return g;
}

inline void accumulate(std::vector<Tensor>& acc, const Tape& tape, const std::vector<Var>& vars) {
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const Tensor& g = tape.grad(vars[i]);
    for (std::size_t k = 0; k < g.numel(); ++k) acc[i][k] += g[k];
  }
}

inline std::size_t total_steps(std::size_t max_steps, std::size_t epochs, std::size_t samples, std::size_t batch) {
  if (max_steps) return max_steps;
  return epochs * ((samples + batch - 1) / batch);
}

}  // namespace detail

/// Loads a video and upsizes it so the fragment grid fits.
inline RawVideo load_for_fragments(const fs::path& path, const VqaConfig& cfg) {
  return ensure_min_extent(load_raw_video(path), cfg.grid * cfg.frag);
}

inline IqaTrainResult train_iqa(const Manifest& manifest, const RunConfig& cfg, const LogSink& log = {}) {
  cfg.validate();
  if (manifest.records.empty()) throw ContractError("train_iqa: empty manifest");
  struct Sample {
    Tensor frame;
    double label;
  };
  std::vector<Sample> samples;
  for (const auto& rec : manifest.records) {
    const RawVideo v = load_raw_video(manifest.resolve(rec));
    const FrameStack s = frames_at(v, sample_indices_at_rate(v, cfg.iqa.fps));
    for (std::size_t t = 0; t < s.size(); ++t) {
      samples.push_back({resize_smaller_edge(s.frame(t), static_cast<int>(cfg.iqa.resize)), rec.mos_norm});
    }
  }

  IqaTrainResult out{IqaModel::init(cfg.iqa.arch, cfg.seed), {}};
  ParamSet<float>& params = out.model.params;
  AdamW opt(params, cfg.iqa.weight_decay);
  detail::EpochSampler sampler(samples.size(), stream_seed(cfg.seed, Stream::shuffle, 1));
  std::mt19937_64 crop_rng(stream_seed(cfg.seed, Stream::crops, 1));
  const std::size_t steps = detail::total_steps(cfg.iqa.max_steps, cfg.iqa.epochs, samples.size(), cfg.iqa.batch);
  const double inv_batch = 1.0 / static_cast<double>(cfg.iqa.batch);

  for (std::size_t step = 0; step < steps; ++step) {
    auto grads = detail::zero_grads(params);
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < cfg.iqa.batch; ++b) {
      const Sample& s = samples[sampler.next()];
      const Tensor x = random_crop_flip(s.frame, crop_rng, cfg.iqa.crop, cfg.iqa.flip_p);
      Tape tape;
      const auto p = bind_params(tape, params);
      const Var y = iqa_frame_forward(tape, out.model.arch, p, tape.leaf(x, false));
      const auto loss = smooth_l1<double>(tape.value(y).item(), s.label);
      batch_loss += loss.value * inv_batch;
      tape.backward(y, static_cast<float>(loss.grad * inv_batch));
      detail::accumulate(grads, tape, p.vars);
    }
    if (!std::isfinite(batch_loss)) throw NonFiniteError("iqa training diverged at step " + std::to_string(step));
    opt.step(params, grads, scheduled_lr(cfg.iqa.lr, cfg.iqa.schedule, step, steps));
    out.log.losses.push_back(batch_loss);
    if (log && (step % 20 == 0 || step + 1 == steps)) {
      log("iqa step " + std::to_string(step + 1) + "/" + std::to_string(steps) + " loss " + std::to_string(batch_loss));
    }
  }
  out.log.steps = steps;
  return out;
}

inline VqaTrainResult train_vqa(const Manifest& manifest, const RunConfig& cfg, const LogSink& log = {}) {
  cfg.validate();
  if (manifest.records.size() < 2) throw ContractError("train_vqa needs at least 2 videos");
  std::vector<RawVideo> videos;
  std::vector<double> labels;
  for (const auto& rec : manifest.records) {
    videos.push_back(load_for_fragments(manifest.resolve(rec), cfg.vqa));
    labels.push_back(rec.mos_norm);
  }
  const std::size_t batch = std::min(cfg.vqa.batch, videos.size());
  const ViewSpec spec = cfg.vqa.view_spec();

  VqaTrainResult out{VqaModel::init(cfg.vqa.arch, cfg.seed), {}};
  ParamSet<float>& params = out.model.params;
  AdamW opt(params, cfg.vqa.weight_decay);
  detail::EpochSampler sampler(videos.size(), stream_seed(cfg.seed, Stream::shuffle, 2));
  std::mt19937_64 view_rng(stream_seed(cfg.seed, Stream::grids, 0xfeed));
  const std::size_t steps = detail::total_steps(cfg.vqa.max_steps, cfg.vqa.epochs, videos.size(), batch);

  for (std::size_t step = 0; step < steps; ++step) {
    std::vector<Tape> tapes(batch);
    std::vector<BoundParams<float>> bound;
    std::vector<Var> outputs;
    std::vector<double> preds, ys;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t idx = sampler.next();
      const ClipView view = random_view(videos[idx], spec, view_rng);
      bound.push_back(bind_params(tapes[b], params));
      outputs.push_back(vqa_forward(tapes[b], out.model.arch, bound.back(), tapes[b].leaf(view.data, false)).y_view);
      preds.push_back(tapes[b].value(outputs.back()).item());
      ys.push_back(labels[idx]);
    }
    const double lr = scheduled_lr(cfg.vqa.lr, cfg.vqa.schedule, step, steps);
    BatchLoss<double> loss;
    try {
      loss = combined_vqa_loss(BatchScores<double>(preds, ys), cfg.vqa.beta);
    } catch (const DegenerateBatchError& e) {
      ++out.log.skipped_batches;
      if (log) log("vqa step " + std::to_string(step + 1) + " skipped: " + e.what());
      continue;
    }
    auto grads = detail::zero_grads(params);
    for (std::size_t b = 0; b < batch; ++b) {
      tapes[b].backward(outputs[b], static_cast<float>(loss.grad[b]));
      detail::accumulate(grads, tapes[b], bound[b].vars);
    }
    opt.step(params, grads, lr);
    out.log.losses.push_back(loss.value);
    if (log && (step % 10 == 0 || step + 1 == steps)) {
      log("vqa step " + std::to_string(step + 1) + "/" + std::to_string(steps) + " loss " + std::to_string(loss.value));
    }
  }
  out.log.steps = steps;
  return out;
}

}  // namespace zoomvqa
