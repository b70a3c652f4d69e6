#pragma once

// Ablation runner: retrains a branch per toggle combination and evaluates it
// on the test manifest. Rows are grouped the same way the comparison tables
// are laid out: clip ensemble, head modules, tokenization expansion.

#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "zoomvqa/harness/evaluate.hpp"
#include "zoomvqa/harness/training.hpp"

namespace zoomvqa {

struct VqaVariant {
  std::optional<PaddingType> padding;  // empty: no expansion, patch = base_patch
  std::size_t patch = 6;
};

struct AblationToggles {
  std::vector<std::pair<bool, bool>> pam_fpa{{false, false}, {true, false}, {false, true}, {true, true}};
  std::vector<VqaVariant> vqa_variants;

  /// Default expansion rows for a config: zero at patch and patch+2, no
  /// expansion at base_patch, then reflect and replicate at patch.
  static AblationToggles defaults(const RunConfig& cfg) {
    AblationToggles t;
    const std::size_t p = cfg.vqa.arch.patch;
    t.vqa_variants = {{PaddingType::zero, p},
                      {PaddingType::zero, p + 2},
                      {std::nullopt, cfg.vqa.arch.base_patch},
                      {PaddingType::reflect, p},
                      {PaddingType::replicate, p}};
    return t;
  }
};

struct AblationRow {
  std::string group;
  std::string label;
  ColumnMetrics metrics;
  std::string error;
};

struct AblationTable {
  std::vector<AblationRow> rows;
};

inline std::string variant_label(const VqaVariant& v) {
  return (v.padding ? to_string(*v.padding) : std::string("w/o")) + " & " + std::to_string(v.patch);
}

/// Config for a variant. The fragment size follows the patch so the token
/// grid per fragment stays the same as the base config.
inline RunConfig variant_config(const RunConfig& base, const VqaVariant& v) {
  RunConfig c = base;
  const std::size_t tokens = base.vqa.frag / base.vqa.arch.patch;
  c.vqa.arch.patch = v.patch;
  c.vqa.frag = tokens * v.patch;
  if (v.padding) {
    c.vqa.arch.padding = *v.padding;
  } else {
    c.vqa.arch.base_patch = v.patch;
  }
  return c;
}

class AblationRunner {
 public:
  AblationRunner(const Manifest& train, const Manifest& test, RunConfig cfg, LogSink log = {})
      : train_(train), test_(test), cfg_(std::move(cfg)), log_(std::move(log)) {}

  const IqaModel& iqa(const RunConfig& c) {
    const std::string key = c.iqa.arch.to_json().dump();
    auto it = iqa_cache_.find(key);
    if (it == iqa_cache_.end()) {
      if (log_) log_("ablation: training iqa " + key);
      it = iqa_cache_.emplace(key, train_iqa(train_, c, log_).model).first;
    }
    return it->second;
  }

  const VqaModel& vqa(const RunConfig& c) {
    const std::string key = c.vqa.arch.to_json().dump() + "|frag=" + std::to_string(c.vqa.frag);
    auto it = vqa_cache_.find(key);
    if (it == vqa_cache_.end()) {
      if (log_) log_("ablation: training vqa " + key);
      it = vqa_cache_.emplace(key, train_vqa(train_, c, log_).model).first;
    }
    return it->second;
  }

  AblationTable run(const AblationToggles& toggles) {
    AblationTable table;
    const EvalReport base = evaluate(test_, iqa(cfg_), vqa(cfg_), cfg_);
    table.rows.push_back({"ensemble", "IQA only", base.iqa, {}});
    table.rows.push_back({"ensemble", "VQA only", base.vqa, {}});
    table.rows.push_back({"ensemble", "IQA + VQA", base.fused, {}});

    for (const auto& [pam, fpa] : toggles.pam_fpa) {
      AblationRow row{"head", std::string("PAM ") + (pam ? "on" : "off") + ", FPA " + (fpa ? "on" : "off"), {}, {}};
      try {
        RunConfig c = cfg_;
        c.iqa.arch.pam = pam;
        c.iqa.arch.fpa = fpa;
        row.metrics = evaluate(test_, iqa(c), vqa(cfg_), c).iqa;
      } catch (const std::exception& e) {
        row.error = e.what();
      }
      table.rows.push_back(row);
    }

    for (const auto& v : toggles.vqa_variants) {
      AblationRow row{"expansion", variant_label(v), {}, {}};
      try {
        const RunConfig c = variant_config(cfg_, v);
        c.validate();
        row.metrics = evaluate(test_, iqa(cfg_), vqa(c), c).vqa;
      } catch (const std::exception& e) {
        row.error = e.what();
      }
      table.rows.push_back(row);
    }
    return table;
  }

 private:
  const Manifest& train_;
  const Manifest& test_;
  RunConfig cfg_;
  LogSink log_;
  std::map<std::string, IqaModel> iqa_cache_;
  std::map<std::string, VqaModel> vqa_cache_;
};

inline nlohmann::ordered_json ablation_json(const AblationTable& t) {
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : t.rows) {
    nlohmann::ordered_json j{{"group", r.group}, {"label", r.label}};
    if (!r.error.empty()) {
      j["error"] = r.error;
    } else {
      j["metrics"] = metrics_json(r.metrics);
    }
    rows.push_back(j);
  }
  return {{"rows", rows}};
}

inline std::string ablation_text(const AblationTable& t) {
  std::ostringstream out;
  std::string group;
  char head[128];
  std::snprintf(head, sizeof head, "%-12s %8s %8s %8s", "", "SRCC", "PLCC", "main");
  for (const auto& r : t.rows) {
    if (r.group != group) {
      group = r.group;
      out << "[" << group << "]\n" << head << "\n";
    }
    if (!r.error.empty()) {
      out << r.label << ": error: " << r.error << "\n";
    } else {
      out << format_metric_row(r.label, r.metrics) << "\n";
    }
  }
  return out.str();
}

}  // namespace zoomvqa
