// zoomvqa command line: data synthesis, training, evaluation, ablation and
// inspection. Exit codes: 0 ok, 1 some videos failed (or a check failed),
// 2 bad configuration or arguments, 3 any other fatal error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "zoomvqa/zoomvqa.hpp"

using namespace zoomvqa;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool with_workers = false) {
  cmd->add_option("--config", c.config, "JSON run config (defaults when omitted)");
  cmd->add_option("--seed", c.seed, "override the config seed");
  cmd->add_option("--out", c.out, "output path");
  if (with_workers) cmd->add_option("--workers", c.workers, "evaluation threads (0: all cores)");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.workers) cfg.workers = *c.workers;
  if (!c.out.empty()) cfg.out_dir = c.out;
  cfg.validate();
  return cfg;
}

std::string need(const std::string& value, const std::string& cli, const char* what) {
  if (!value.empty()) return value;
  if (!cli.empty()) return cli;
  throw ConfigError(std::string("no ") + what + " given (flag or config paths)");
}

void log_line(const std::string& s) { std::cerr << s << "\n"; }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

nlohmann::ordered_json log_json(const TrainLog& log) {
  return {{"steps", log.steps}, {"skipped_batches", log.skipped_batches}, {"losses", log.losses}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"zoomvqa: frame + clip quality assessment on raw rgb24 videos"};
  app.require_subcommand(1);

  // synth-data
  Common synth_c;
  std::size_t synth_n = 32;
  std::string synth_split = "train", synth_norm_from, synth_prefix = "syn";
  SynthOptions synth_opt;
  auto* synth = app.add_subcommand("synth-data", "write a synthetic dataset with a known quality ordering");
  synth->add_option("--seed", synth_c.seed, "dataset seed");
  synth->add_option("--out", synth_c.out, "output directory")->required();
  synth->add_option("--n", synth_n, "number of videos");
  synth->add_option("--split", synth_split, "train or test");
  synth->add_option("--norm-from", synth_norm_from, "train manifest whose MOS statistics a test split reuses");
  synth->add_option("--prefix", synth_prefix, "video id prefix");
  synth->add_option("--width", synth_opt.width);
  synth->add_option("--height", synth_opt.height);
  synth->add_option("--frames", synth_opt.num_frames);
  synth->add_option("--fps", synth_opt.fps);

  // train-iqa / train-vqa
  Common tiqa_c, tvqa_c;
  std::string tiqa_train, tvqa_train;
  auto* tiqa = app.add_subcommand("train-iqa", "train the frame branch");
  add_common(tiqa, tiqa_c);
  tiqa->add_option("--train", tiqa_train, "train manifest");
  auto* tvqa = app.add_subcommand("train-vqa", "train the clip branch");
  add_common(tvqa, tvqa_c);
  tvqa->add_option("--train", tvqa_train, "train manifest");

  // eval
  Common eval_c;
  std::string eval_test, eval_iqa, eval_vqa;
  auto* eval = app.add_subcommand("eval", "score a manifest and write report.json / report.txt");
  add_common(eval, eval_c, true);
  eval->add_option("--test", eval_test, "test manifest");
  eval->add_option("--iqa", eval_iqa, "frame branch checkpoint")->required();
  eval->add_option("--vqa", eval_vqa, "clip branch checkpoint")->required();

  // ablate
  Common abl_c;
  std::string abl_train, abl_test;
  bool abl_no_heads = false, abl_no_expansion = false;
  auto* abl = app.add_subcommand("ablate", "train and evaluate the head and patch-expansion variants");
  add_common(abl, abl_c, true);
  abl->add_option("--train", abl_train, "train manifest");
  abl->add_option("--test", abl_test, "test manifest");
  abl->add_flag("--no-heads", abl_no_heads, "skip the PAM/FPA rows");
  abl->add_flag("--no-expansion", abl_no_expansion, "skip the expansion rows");

  // qmap
  Common qmap_c;
  std::string qmap_vqa, qmap_video;
  std::size_t qmap_view = 0;
  auto* qmap = app.add_subcommand("qmap", "render the token quality map of one view as PPM");
  add_common(qmap, qmap_c);
  qmap->add_option("--vqa", qmap_vqa, "clip branch checkpoint")->required();
  qmap->add_option("--video", qmap_video, ".rgb24 video")->required();
  qmap->add_option("--view", qmap_view, "view index");

  // gradcheck
  std::uint64_t gc_seed = 0;
  std::size_t gc_coords = 600;
  auto* gc = app.add_subcommand("gradcheck", "central-difference check of both branches and all losses");
  gc->add_option("--seed", gc_seed);
  gc->add_option("--coords", gc_coords, "coordinates per case");

  // fragment-dump
  Common frag_c;
  std::string frag_video;
  std::size_t frag_view = 0;
  auto* frag = app.add_subcommand("fragment-dump", "write one sampled fragment view as an .rgb24 video");
  add_common(frag, frag_c);
  frag->add_option("--video", frag_video, ".rgb24 video")->required();
  frag->add_option("--view", frag_view, "view index");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth) {
      synth_opt.split = parse_split(synth_split);
      synth_opt.id_prefix = synth_prefix;
      if (synth_opt.split == Split::test) {
        if (synth_norm_from.empty()) throw ConfigError("a test split needs --norm-from <train manifest>");
        synth_opt.norm_stats = load_manifest(synth_norm_from).norm_stats;
      }
      const Manifest m = synth_dataset(synth_n, synth_c.seed.value_or(0), synth_c.out, synth_opt);
      std::cout << "wrote " << m.records.size() << " videos to " << synth_c.out << "\n";
      return 0;
    }

    if (*tiqa || *tvqa) {
      const bool is_iqa = tiqa->parsed();
      const Common& c = is_iqa ? tiqa_c : tvqa_c;
      const RunConfig cfg = resolve(c);
      const Manifest train = load_manifest(need(is_iqa ? tiqa_train : tvqa_train, cfg.train_manifest, "train manifest"));
      const fs::path out = cfg.out_dir.empty() ? fs::path("runs") : fs::path(cfg.out_dir);
      fs::create_directories(out);
      Checkpoint ck;
      nlohmann::ordered_json log;
      if (is_iqa) {
        const auto r = train_iqa(train, cfg, log_line);
        ck = r.model.to_checkpoint();
        log = log_json(r.log);
      } else {
        const auto r = train_vqa(train, cfg, log_line);
        ck = r.model.to_checkpoint();
        log = log_json(r.log);
      }
      const std::string name = is_iqa ? "iqa" : "vqa";
      save_checkpoint(out / (name + ".ckpt"), ck);
      log["config"] = to_json(cfg);
      write_text(out / (name + "_train_log.json"), log.dump(2) + "\n");
      std::cout << "wrote " << (out / (name + ".ckpt")).string() << "\n";
      return 0;
    }

    if (*eval) {
      const RunConfig cfg = resolve(eval_c);
      const Manifest test = load_manifest(need(eval_test, cfg.test_manifest, "test manifest"));
      const IqaModel iqa = IqaModel::from_checkpoint(load_checkpoint(eval_iqa));
      const VqaModel vqa = VqaModel::from_checkpoint(load_checkpoint(eval_vqa));
      RunConfig run = cfg;
      run.iqa.arch = iqa.arch;
      run.vqa.arch = vqa.arch;
      run.validate();
      const EvalReport r = evaluate(test, iqa, vqa, run);
      const fs::path out = cfg.out_dir.empty() ? fs::path("eval") : fs::path(cfg.out_dir);
      write_report(out, r);
      std::cout << report_table(r);
      return r.errors.empty() ? 0 : 1;
    }

    if (*abl) {
      const RunConfig cfg = resolve(abl_c);
      const Manifest train = load_manifest(need(abl_train, cfg.train_manifest, "train manifest"));
      const Manifest test = load_manifest(need(abl_test, cfg.test_manifest, "test manifest"));
      AblationToggles toggles = AblationToggles::defaults(cfg);
      if (abl_no_heads) toggles.pam_fpa.clear();
      if (abl_no_expansion) toggles.vqa_variants.clear();
      AblationRunner runner(train, test, cfg, log_line);
      const AblationTable t = runner.run(toggles);
      const fs::path out = cfg.out_dir.empty() ? fs::path("ablation") : fs::path(cfg.out_dir);
      write_text(out / "ablation.json", ablation_json(t).dump(2) + "\n");
      write_text(out / "ablation.txt", ablation_text(t));
      std::cout << ablation_text(t);
      for (const auto& row : t.rows)
        if (!row.error.empty()) return 1;
      return 0;
    }

    if (*qmap) {
      RunConfig cfg = resolve(qmap_c);
      const VqaModel vqa = VqaModel::from_checkpoint(load_checkpoint(qmap_vqa));
      cfg.vqa.arch = vqa.arch;
      cfg.validate();
      const RawVideo v = load_for_fragments(qmap_video, cfg.vqa);
      ViewSpec spec = cfg.vqa.view_spec();
      spec.n_views = std::max(spec.n_views, qmap_view + 1);
      const ClipView view = make_view(v, spec, cfg.seed, qmap_view);
      const ViewScore s = vqa_forward(view, vqa);
      double mean = 0.0;
      for (float x : s.qmap.scores.data()) mean += x;
      mean /= static_cast<double>(s.qmap.scores.numel());
      const fs::path out = cfg.out_dir.empty() ? fs::path("qmap.ppm") : fs::path(cfg.out_dir);
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      render_quality_map(s.qmap, frame_tensor(v, view.temporal_indices.front()), out);
      std::printf("y_view %.9g\nqmap_mean %.9g\nqmap_shape %zux%zux%zu\nwrote %s\n", s.y_view, mean,
                  s.qmap.scores.dim(0), s.qmap.scores.dim(1), s.qmap.scores.dim(2), out.string().c_str());
      return 0;
    }

    if (*gc) {
      bool ok = true;
      for (const auto& c : run_gradient_suite(gc_seed, gc_coords)) {
        const bool pass = c.report.pass && c.report.checked >= gc_coords;
        ok &= pass;
        std::printf("%-18s %s checked %zu skipped %zu max_rel_err %.3g %s\n", c.name.c_str(), pass ? "PASS" : "FAIL",
                    c.report.checked, c.report.skipped, c.report.max_rel_err, c.report.failure.c_str());
      }
      return ok ? 0 : 1;
    }

    if (*frag) {
      const RunConfig cfg = resolve(frag_c);
      const RawVideo v = load_for_fragments(frag_video, cfg.vqa);
      ViewSpec spec = cfg.vqa.view_spec();
      spec.n_views = std::max(spec.n_views, frag_view + 1);
      const ClipView view = make_view(v, spec, cfg.seed, frag_view);
      const fs::path out = cfg.out_dir.empty() ? fs::path("view.rgb24") : fs::path(cfg.out_dir);
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      dump_view(view, out, v.fps_num, v.fps_den);
      std::cout << "wrote " << out.string() << " (" << view.data.dim(1) << " frames, " << view.data.dim(2) << "x"
                << view.data.dim(3) << ")\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ParameterError& e) {
    std::cerr << "parameter error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
