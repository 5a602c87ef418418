#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "fbnn/core.hpp"

namespace fbnn {

// Fraction of correct predictions among samples whose label is in classFilter
// (empty filter = all samples). Throws when the filtered subset is empty.
inline double accuracy(const std::vector<int>& preds, const std::vector<int>& labels,
                       const std::vector<int>& classFilter = {}) {
  check_dim(preds.size() == labels.size(), "accuracy: preds/labels length mismatch");
  std::unordered_set<int> keep(classFilter.begin(), classFilter.end());
  int64_t n = 0, hit = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (!keep.empty() && !keep.count(labels[i])) continue;
    ++n;
    if (preds[i] == labels[i]) ++hit;
  }
  check_cfg(n > 0, "accuracy: no samples match the class filter");
  return static_cast<double>(hit) / static_cast<double>(n);
}

// Per-class recall for each class in `classes` that has at least one sample;
// classes absent from `labels` are skipped (they have no recall).
inline std::vector<double> class_recalls(const std::vector<int>& preds,
                                         const std::vector<int>& labels,
                                         const std::vector<int>& classes) {
  check_dim(preds.size() == labels.size(), "class_recalls: preds/labels length mismatch");
  std::vector<double> out;
  for (int cls : classes) {
    int64_t n = 0, hit = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != cls) continue;
      ++n;
      if (preds[i] == cls) ++hit;
    }
    if (n > 0) out.push_back(static_cast<double>(hit) / static_cast<double>(n));
  }
  return out;
}

// Population standard deviation of per-class recalls: 0 when all classes are
// served equally, larger when some classes are sacrificed for others.
inline double dispersion_of(const std::vector<double>& recalls) {
  check_cfg(!recalls.empty(), "dispersion_of: no recalls");
  double mean = 0.0;
  for (double r : recalls) mean += r;
  mean /= static_cast<double>(recalls.size());
  double var = 0.0;
  for (double r : recalls) var += (r - mean) * (r - mean);
  var /= static_cast<double>(recalls.size());
  return std::sqrt(var);
}

struct EvalOutcome {
  double accuracy = 0.0;
  double dispersion = 0.0;
  std::vector<double> recalls;
  int64_t count = 0;
};

// Accuracy + recall dispersion over the subset with labels in classFilter;
// nullopt when the subset is empty (callers report such rows as absent).
inline std::optional<EvalOutcome> evaluate_filtered(const std::vector<int>& preds,
                                                    const std::vector<int>& labels,
                                                    const std::vector<int>& classFilter) {
  bool any = false;
  std::unordered_set<int> keep(classFilter.begin(), classFilter.end());
  for (int l : labels)
    if (keep.count(l)) {
      any = true;
      break;
    }
  if (!any) return std::nullopt;
  EvalOutcome out;
  out.accuracy = accuracy(preds, labels, classFilter);
  out.recalls = class_recalls(preds, labels, classFilter);
  out.dispersion = dispersion_of(out.recalls);
  for (int l : labels)
    if (keep.count(l)) ++out.count;
  return out;
}

struct MetricRow {
  int task = 0;
  std::string subset;  // pretrain | old | new | seen | final | buffer
  std::string split;   // train | test
  std::optional<double> accuracy;
  std::optional<double> dispersion;
  int epochs = 0;
  int64_t bufferBits = 0;
  int64_t bufferSamples = 0;
};

struct RunReport {
  std::vector<MetricRow> rows;

  static std::string csv_header() {
    return "task,subset,split,accuracy,dispersion,epochs,bufferBits,bufferSamples";
  }

  std::string to_csv() const {
    std::string out = csv_header() + "\n";
    char buf[64];
    auto fmt = [&](const std::optional<double>& v) -> std::string {
      if (!v) return "absent";
      std::snprintf(buf, sizeof buf, "%.6f", *v);
      return buf;
    };
    for (const auto& r : rows) {
      out += std::to_string(r.task) + "," + r.subset + "," + r.split + "," + fmt(r.accuracy) +
             "," + fmt(r.dispersion) + "," + std::to_string(r.epochs) + "," +
             std::to_string(r.bufferBits) + "," + std::to_string(r.bufferSamples) + "\n";
    }
    return out;
  }

  const MetricRow* find(int task, const std::string& subset, const std::string& split) const {
    for (const auto& r : rows)
      if (r.task == task && r.subset == subset && r.split == split) return &r;
    return nullptr;
  }
};

}  // namespace fbnn
