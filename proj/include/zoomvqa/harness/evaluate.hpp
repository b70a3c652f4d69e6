#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "zoomvqa/harness/config.hpp"
#include "zoomvqa/harness/fusion.hpp"
#include "zoomvqa/harness/training.hpp"
#include "zoomvqa/iqa_branch.hpp"
#include "zoomvqa/metrics.hpp"
#include "zoomvqa/vqa_branch.hpp"

namespace zoomvqa {

struct ScoreRecord {
  std::string video_id;
  double y_iqa = 0.0;
  double y_vqa = 0.0;
  double y_fused = 0.0;
  double mos_norm = 0.0;
};

struct VideoError {
  std::string video_id;
  std::string message;
};

/// Metrics of one prediction column; empty when undefined (m < 2 or flat).
struct ColumnMetrics {
  std::optional<EvalMetrics> metrics;
  std::string note;
};

struct EvalReport {
  std::vector<ScoreRecord> records;
  ColumnMetrics iqa, vqa, fused;
  std::vector<VideoError> errors;
  nlohmann::ordered_json config;
  double wall_clock_s = 0.0;
};

inline ColumnMetrics column_metrics(const std::vector<double>& pred, const std::vector<double>& label) {
  ColumnMetrics c;
  try {
    c.metrics = main_score(pred, label);
  } catch (const UndefinedMetricError& e) {
    c.note = e.what();
  }
  return c;
}

/// Recomputes all three columns from stored records.
inline void recompute_metrics(EvalReport& r) {
  std::vector<double> yi, yv, yf, mos;
  for (const auto& rec : r.records) {
    yi.push_back(rec.y_iqa);
    yv.push_back(rec.y_vqa);
    yf.push_back(rec.y_fused);
    mos.push_back(rec.mos_norm);
  }
  r.iqa = column_metrics(yi, mos);
  r.vqa = column_metrics(yv, mos);
  r.fused = column_metrics(yf, mos);
}

/// View seed of one video: depends only on the run seed and the video id.
inline std::uint64_t video_seed(std::uint64_t seed, const std::string& id) {
  return stream_seed(seed, Stream::views, fnv1a(id));
}

inline double score_iqa(const RawVideo& v, const IqaModel& model, const IqaConfig& cfg) {
  return iqa_video_score(eval_frames(v, cfg.fps, cfg.resize, cfg.crop), model).y_iqa;
}

inline double score_vqa(const RawVideo& v, const VqaModel& model, const VqaConfig& cfg, std::uint64_t seed) {
  return vqa_video_score(ensure_min_extent(v, cfg.grid * cfg.frag), model, cfg.view_spec(), seed).y_vqa;
}

/// Runs `fn(i)` for i in [0, n) on a pool of worker threads. Each index is
/// written by exactly one worker, so results are order-independent.
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, std::max<std::size_t>(n, 1));
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t i = next++; i < n; i = next++) fn(i);
  };
  if (workers <= 1) {
    run();
    return;
  }
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run);
}

inline EvalReport evaluate(const Manifest& manifest, const IqaModel& iqa, const VqaModel& vqa, const RunConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = manifest.records.size();
  std::vector<std::optional<ScoreRecord>> slots(n);
  std::vector<std::string> failures(n);
  parallel_for(n, cfg.workers, [&](std::size_t i) {
    const VideoRecord& rec = manifest.records[i];
    try {
      const RawVideo v = load_raw_video(manifest.resolve(rec));
      ScoreRecord r;
      r.video_id = rec.id;
      r.mos_norm = rec.mos_norm;
      r.y_iqa = score_iqa(v, iqa, cfg.iqa);
      r.y_vqa = score_vqa(v, vqa, cfg.vqa, video_seed(cfg.seed, rec.id));
      r.y_fused = fuse(r.y_iqa, r.y_vqa);
      slots[i] = r;
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  });
  EvalReport report;
  for (std::size_t i = 0; i < n; ++i) {
    if (slots[i]) {
      report.records.push_back(*slots[i]);
    } else {
      report.errors.push_back({manifest.records[i].id, failures[i]});
    }
  }
  recompute_metrics(report);
  report.config = to_json(cfg);
  report.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json records_json(const std::vector<ScoreRecord>& records) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : records) {
    arr.push_back({{"video_id", r.video_id},
                   {"y_iqa", r.y_iqa},
                   {"y_vqa", r.y_vqa},
                   {"y_fused", r.y_fused},
                   {"mos_norm", r.mos_norm}});
  }
  return arr;
}

inline nlohmann::ordered_json metrics_json(const ColumnMetrics& c) {
  if (!c.metrics) return {{"undefined", c.note}};
  return {{"srcc", c.metrics->srcc}, {"plcc", c.metrics->plcc}, {"main_score", c.metrics->main_score}};
}

inline nlohmann::ordered_json report_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["records"] = records_json(r.records);
  j["metrics"] = {{"iqa", metrics_json(r.iqa)}, {"vqa", metrics_json(r.vqa)}, {"fused", metrics_json(r.fused)}};
  auto errs = nlohmann::ordered_json::array();
  for (const auto& e : r.errors) errs.push_back({{"video_id", e.video_id}, {"error", e.message}});
  j["errors"] = errs;
  j["config"] = r.config;
  j["wall_clock_s"] = r.wall_clock_s;
  return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  for (const auto& rec : j.at("records")) {
    r.records.push_back({rec.at("video_id").get<std::string>(), rec.at("y_iqa").get<double>(),
                         rec.at("y_vqa").get<double>(), rec.at("y_fused").get<double>(),
                         rec.at("mos_norm").get<double>()});
  }
  auto col = [](const nlohmann::json& m) {
    ColumnMetrics c;
    if (m.contains("undefined")) {
      c.note = m["undefined"].get<std::string>();
    } else {
      c.metrics = EvalMetrics{m.at("srcc").get<double>(), m.at("plcc").get<double>(), m.at("main_score").get<double>()};
    }
    return c;
  };
  r.iqa = col(j.at("metrics").at("iqa"));
  r.vqa = col(j.at("metrics").at("vqa"));
  r.fused = col(j.at("metrics").at("fused"));
  for (const auto& e : j.at("errors")) r.errors.push_back({e.at("video_id"), e.at("error")});
  r.config = j.at("config");
  r.wall_clock_s = j.at("wall_clock_s").get<double>();
  return r;
}

inline std::string format_metric_row(const std::string& name, const ColumnMetrics& c) {
  char buf[128];
  if (!c.metrics) {
    std::snprintf(buf, sizeof buf, "%-12s %8s %8s %8s", name.c_str(), "n/a", "n/a", "n/a");
  } else {
    std::snprintf(buf, sizeof buf, "%-12s %8.4f %8.4f %8.4f", name.c_str(), c.metrics->srcc, c.metrics->plcc,
                  c.metrics->main_score);
  }
  return buf;
}

inline std::string report_table(const EvalReport& r) {
  std::ostringstream out;
  char head[128];
  std::snprintf(head, sizeof head, "%-12s %8s %8s %8s", "prediction", "SRCC", "PLCC", "main");
  out << head << "\n";
  out << format_metric_row("IQA", r.iqa) << "\n";
  out << format_metric_row("VQA", r.vqa) << "\n";
  out << format_metric_row("fused", r.fused) << "\n";
  out << r.records.size() << " videos scored, " << r.errors.size() << " failed\n";
  for (const auto& e : r.errors) out << "  " << e.video_id << ": " << e.message << "\n";
  return out.str();
}

inline void write_report(const std::filesystem::path& dir, const EvalReport& r) {
  std::filesystem::create_directories(dir);
  std::ofstream js(dir / "report.json");
  if (!js) throw IoError("cannot write report to " + dir.string());
  js << report_json(r).dump(2) << "\n";
  std::ofstream txt(dir / "report.txt");
  txt << report_table(r);
}

}  // namespace zoomvqa
