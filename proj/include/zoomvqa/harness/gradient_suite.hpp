#pragma once

// Central-difference checks of both branch forwards and all losses on the
// 64-bit path. Parameters are perturbed; inputs are fixed random tensors.

#include <random>
#include <string>
#include <vector>

#include "zoomvqa/gradcheck.hpp"
#include "zoomvqa/iqa_branch.hpp"
#include "zoomvqa/losses.hpp"
#include "zoomvqa/rng.hpp"
#include "zoomvqa/vqa_branch.hpp"

namespace zoomvqa {

struct GradientCase {
  std::string name;
  GradcheckReport report;
};

inline Tensor64 random_tensor64(Shape shape, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  Tensor64 t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(rng);
  return t;
}

namespace detail {

// Evaluates a tape-built scalar at `params`, returning value, kinks and the
// flat gradient.
template <class Build>
struct TapeProbe {
  ParamSet<double> params;
  Build build;

  Probe operator()(std::span<const double> theta) {
    params.assign_flat(theta);
    Tape64 tape;
    tape.set_kink_tracking(true);
    const auto p = bind_params(tape, params, false);
    const Var y = build(tape, p);
    const auto k = tape.kink_values();
    return {tape.value(y).item(), std::vector<double>(k.begin(), k.end())};
  }

  std::vector<double> analytic() {
    Tape64 tape;
    const auto p = bind_params(tape, params, true);
    tape.backward(build(tape, p));
    return flat_grads(tape, p.vars);
  }
};

template <class Build>
GradcheckReport check_tape(ParamSet<double> params, Build build, const GradcheckOptions& opt) {
  TapeProbe<Build> probe{std::move(params), std::move(build)};
  const std::vector<double> theta = probe.params.flatten();
  const std::vector<double> grad = probe.analytic();
  return gradcheck(probe, theta, grad, opt);
}

}  // namespace detail

/// Frame branch on a two-frame 16x16 clip: mean of per-frame scores.
inline GradcheckReport check_iqa_branch(const IqaArch& arch, std::uint64_t seed, const GradcheckOptions& opt) {
  std::mt19937_64 rng(mix_seed(seed, 101));
  const Tensor64 f0 = random_tensor64(Shape{3, 16, 16}, rng);
  const Tensor64 f1 = random_tensor64(Shape{3, 16, 16}, rng);
  auto build = [&arch, f0, f1](Tape64& tape, const BoundParams<double>& p) {
    const Var a = tape.reshape(iqa_frame_forward(tape, arch, p, tape.leaf(f0, false)), Shape{1, 1, 1});
    const Var b = tape.reshape(iqa_frame_forward(tape, arch, p, tape.leaf(f1, false)), Shape{1, 1, 1});
    return tape.mean_all(tape.concat_channels({a, b}));
  };
  return detail::check_tape(init_iqa_params(arch, seed).cast<double>(), build, opt);
}

/// Clip branch on a [3,2,12,12] view.
inline GradcheckReport check_vqa_branch(const VqaArch& arch, std::uint64_t seed, const GradcheckOptions& opt) {
  std::mt19937_64 rng(mix_seed(seed, 102));
  const std::size_t side = 2 * arch.patch;
  const Tensor64 view = random_tensor64(Shape{3, arch.temporal_patch, side, side}, rng);
  auto build = [&arch, view](Tape64& tape, const BoundParams<double>& p) {
    return vqa_forward(tape, arch, p, tape.leaf(view, false)).y_view;
  };
  return detail::check_tape(init_vqa_params(arch, seed).cast<double>(), build, opt);
}

/// Merges several reports into one, as if all coordinates were one check.
inline GradcheckReport merge_reports(const std::vector<GradcheckReport>& parts, double rel_tol) {
  GradcheckReport out;
  out.pass = true;
  for (const auto& r : parts) {
    out.max_rel_err = std::max(out.max_rel_err, r.max_rel_err);
    out.checked += r.checked;
    out.skipped += r.skipped;
    if (!r.failure.empty() && out.failure.empty()) out.failure = r.failure;
    out.coords.insert(out.coords.end(), r.coords.begin(), r.coords.end());
  }
  out.pass = out.failure.empty() && out.max_rel_err < rel_tol;
  return out;
}

/// smooth-L1 on `n` random (pred, label) pairs, covering both the quadratic
/// and the linear part.
inline GradcheckReport check_smooth_l1(std::size_t n, std::uint64_t seed, const GradcheckOptions& opt) {
  std::mt19937_64 rng(mix_seed(seed, 103));
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::vector<GradcheckReport> parts;
  for (std::size_t i = 0; i < n; ++i) {
    const double label = u(rng);
    const std::vector<double> theta{u(rng)};
    auto f = [label](std::span<const double> x) {
      return Probe{smooth_l1(x[0], label).value, {smooth_l1_kink(x[0], label)}};
    };
    const std::vector<double> g{smooth_l1(theta[0], label).grad};
    parts.push_back(gradcheck(f, theta, g, opt));
  }
  return merge_reports(parts, opt.rel_tol);
}

enum class BatchLossKind { plcc, rank, combined };

inline std::string to_string(BatchLossKind k) {
  switch (k) {
    case BatchLossKind::plcc: return "plcc_loss";
    case BatchLossKind::rank: return "rank_loss";
    case BatchLossKind::combined: return "combined_vqa_loss";
  }
  return "?";
}

/// A batch loss on `batches` random batches of size m, gradients w.r.t.
/// the predictions. Labels include ties.
inline GradcheckReport check_batch_loss(BatchLossKind kind, std::size_t batches, std::size_t m, std::uint64_t seed,
                                        const GradcheckOptions& opt, double beta = 0.3) {
  std::mt19937_64 rng(mix_seed(seed, 104 + static_cast<std::uint64_t>(kind)));
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_int_distribution<int> level(0, 5);
  auto eval = [kind, beta](const std::vector<double>& pred, const std::vector<double>& label) {
    const BatchScores<double> b(pred, label);
    switch (kind) {
      case BatchLossKind::plcc: return plcc_loss(b);
      case BatchLossKind::rank: return rank_loss(b);
      case BatchLossKind::combined: return combined_vqa_loss(b, beta);
    }
    return plcc_loss(b);
  };
  std::vector<GradcheckReport> parts;
  for (std::size_t k = 0; k < batches; ++k) {
    std::vector<double> pred(m), label(m);
    for (std::size_t i = 0; i < m; ++i) {
      pred[i] = n(rng);
      label[i] = static_cast<double>(level(rng)) * 0.5;
    }
    label[0] = 0.0;
    label[1] = 2.5;  // never constant
    auto f = [&](std::span<const double> x) {
      const std::vector<double> p(x.begin(), x.end());
      Probe probe{eval(p, label).value, {}};
      if (kind != BatchLossKind::plcc) probe.kinks = rank_loss_kinks(BatchScores<double>(p, label));
      return probe;
    };
    parts.push_back(gradcheck(f, pred, eval(pred, label).grad, opt));
  }
  return merge_reports(parts, opt.rel_tol);
}

/// Every loss and both branches, each with at least `coords` checked
/// coordinates (branch checks sample parameters at random).
inline std::vector<GradientCase> run_gradient_suite(std::uint64_t seed, std::size_t coords = 600) {
  GradcheckOptions opt;
  opt.seed = seed;
  std::vector<GradientCase> out;
  out.push_back({"smooth_l1", check_smooth_l1(coords, seed, opt)});
  const std::size_t m = 8;
  const std::size_t batches = (coords + m - 1) / m;
  for (auto kind : {BatchLossKind::plcc, BatchLossKind::rank, BatchLossKind::combined}) {
    out.push_back({to_string(kind), check_batch_loss(kind, batches, m, seed, opt)});
  }
  GradcheckOptions branch = opt;
  // Many backbone weights sit behind inactive units; sample more so a fair
  // share of checked coordinates carry a nonzero gradient.
  branch.max_coords = 3 * coords;
  out.push_back({"iqa_branch", check_iqa_branch(IqaArch{}, seed, branch)});
  branch.max_coords = coords;
  out.push_back({"vqa_branch", check_vqa_branch(VqaArch{}, seed, branch)});
  return out;
}

}  // namespace zoomvqa
