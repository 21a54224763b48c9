#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rod/params.hpp"

namespace rod::bench {

struct StageStats {
  std::string stage;
  double mean_ms = 0;
  double p50_ms = 0;
  double p95_ms = 0;
  size_t samples = 0;
};

struct LatencyReport {
  std::vector<StageStats> stages;  // preprocess, encoder, decoder, postprocess, total
  double fps = 0;
  int threads = 1;
  std::string precision;
  double clock_resolution_ns = 0;
  bool include_io = false;
  std::vector<std::string> op_trace;  // kernels executed during the timed iterations

  const StageStats& stage(const std::string& name) const;
  // `stage,mean_ms,p50_ms,p95_ms,samples` rows followed by an `fps` row.
  std::string csv() const;
  std::string table() const;
};

struct BenchInput {
  int64_t source_width = 0;   // raw frame size; 0 = model input size
  int64_t source_height = 0;
  uint64_t seed = 0;
  bool include_io = false;                 // read the frame from disk, write the mask
  std::filesystem::path io_dir;            // scratch directory for include_io
  bool record_trace = false;
};

// Mean and nearest-rank percentiles of `samples_ms`.
StageStats summarize(const std::string& stage, std::vector<double> samples_ms);

// `warmup` untimed iterations, then `iters` timed ones. Each iteration runs
// preprocess -> encoder -> decoder -> postprocess on a fixed seeded frame.
// Throws UsageError when `model` is null or iters < 1.
template <typename T>
LatencyReport bench_inference(const Model<T>* model, const BenchInput& input, int64_t warmup,
                              int64_t iters);

}  // namespace rod::bench
