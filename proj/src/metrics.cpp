#include "rod/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "rod/error.hpp"

namespace rod::metrics {

namespace {

double ratio_or_one(uint64_t num, uint64_t den) {
  return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ConfusionCounts confusion_counts(const Mask& pred, const Mask& gt) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw DataError("confusion_counts: prediction is " + std::to_string(pred.height) + "x" +
                    std::to_string(pred.width) + ", ground truth is " +
                    std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  // Index 2*pred + gt selects tn, fn, fp, tp.
  uint64_t bins[4] = {0, 0, 0, 0};
  for (size_t i = 0; i < pred.data.size(); ++i) {
    const uint8_t p = pred.data[i], g = gt.data[i];
    if (p > 1 || g > 1) {
      throw DataError("confusion_counts: non-binary value at pixel " + std::to_string(i));
    }
    ++bins[2 * p + g];
  }
  return {bins[3], bins[2], bins[1], bins[0]};
}

MetricReport compute_metrics(const ConfusionCounts& c) {
  if (c.total() == 0) throw ArgumentError("compute_metrics: no pixels counted");
  MetricReport r;
  r.counts = c;
  r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  r.precision = ratio_or_one(c.tp, c.tp + c.fp);
  r.recall = ratio_or_one(c.tp, c.tp + c.fn);
  // 2PR/(P+R) reduces to 2tp/(2tp+fp+fn) when both denominators are nonzero.
  r.f1 = ratio_or_one(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  r.iou = ratio_or_one(c.tp, c.tp + c.fp + c.fn);
  return r;
}

EvalResult evaluate_dataset(const Predictor& predict, const std::vector<EvalSample>& samples) {
  if (samples.empty()) throw ArgumentError("evaluate_dataset: empty dataset");
  EvalResult result;
  ConfusionCounts total;
  for (size_t i = 0; i < samples.size(); ++i) {
    try {
      const Mask pred = predict(i);
      total += confusion_counts(pred, samples[i].ground_truth);
      ++result.evaluated;
    } catch (const std::exception& e) {
      ++result.failures;
      result.failure_messages.push_back(samples[i].name + ": " + e.what());
    }
  }
  if (result.evaluated == 0) {
    throw DataError("evaluate_dataset: all " + std::to_string(samples.size()) + " samples failed");
  }
  result.report = compute_metrics(total);
  return result;
}

std::string csv_header() { return "accuracy,precision,recall,f1,iou,tp,fp,fn,tn"; }

std::string csv_row(const MetricReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.6f,%llu,%llu,%llu,%llu", r.accuracy,
                r.precision, r.recall, r.f1, r.iou,
                static_cast<unsigned long long>(r.counts.tp),
                static_cast<unsigned long long>(r.counts.fp),
                static_cast<unsigned long long>(r.counts.fn),
                static_cast<unsigned long long>(r.counts.tn));
  return buf;
}

std::string format_table(const MetricReport& r) {
  std::ostringstream os;
  char line[64];
  auto row = [&](const char* name, double v) {
    std::snprintf(line, sizeof line, "  %-10s %8.4f\n", name, v);
    os << line;
  };
  os << "  metric        value\n";
  row("Accuracy", r.accuracy);
  row("Precision", r.precision);
  row("Recall", r.recall);
  row("F1_score", r.f1);
  row("IoU", r.iou);
  os << "  counts: tp=" << r.counts.tp << " fp=" << r.counts.fp << " fn=" << r.counts.fn
     << " tn=" << r.counts.tn << '\n';
  return os.str();
}

}  // namespace rod::metrics
