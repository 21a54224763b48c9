#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rod/mask.hpp"

namespace rod::metrics {

// Pixel tallies with freespace (value 1) as the positive class.
struct ConfusionCounts {
  uint64_t tp = 0;
  uint64_t fp = 0;
  uint64_t fn = 0;
  uint64_t tn = 0;

  uint64_t total() const noexcept { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

struct MetricReport {
  double accuracy = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  double iou = 0;
  ConfusionCounts counts;
};

// Throws DataError on shape mismatch or labels outside {0, 1}.
ConfusionCounts confusion_counts(const Mask& pred, const Mask& gt);

// Precision, recall, F1 and IoU are 1.0 when their denominator is zero.
// Throws ArgumentError when no pixels were counted.
MetricReport compute_metrics(const ConfusionCounts& counts);

struct EvalSample {
  std::string name;
  Mask ground_truth;
};

struct EvalResult {
  MetricReport report;
  size_t evaluated = 0;
  size_t failures = 0;
  std::vector<std::string> failure_messages;
};

// Produces the predicted mask for sample `index` at ground-truth resolution.
using Predictor = std::function<Mask(size_t index)>;

// Global aggregation: counts summed over all pixels of all samples, metrics
// computed once. Failing samples are skipped and reported.
EvalResult evaluate_dataset(const Predictor& predict, const std::vector<EvalSample>& samples);

std::string csv_header();
std::string csv_row(const MetricReport& report);
std::string format_table(const MetricReport& report);

}  // namespace rod::metrics
