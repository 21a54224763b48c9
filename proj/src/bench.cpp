#include "rod/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <ratio>
#include <sstream>

#include "rod/dataset.hpp"
#include "rod/decoder.hpp"
#include "rod/encoder.hpp"
#include "rod/error.hpp"
#include "rod/image_io.hpp"
#include "rod/inference.hpp"
#include "rod/kernels.hpp"
#include "rod/trace.hpp"

namespace rod::bench {

namespace {

using Clock = std::chrono::steady_clock;

double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

double percentile(const std::vector<double>& sorted, double pct) {
  const auto n = static_cast<double>(sorted.size());
  const auto rank = static_cast<size_t>(std::max(1.0, std::ceil(pct / 100.0 * n)));
  return sorted[std::min(rank, sorted.size()) - 1];
}

Image8 random_frame(int64_t w, int64_t h, uint64_t seed) {
  Image8 img(w, h, 3);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> byte(0, 255);
  for (auto& v : img.data) v = static_cast<uint8_t>(byte(rng));
  return img;
}

}  // namespace

const StageStats& LatencyReport::stage(const std::string& name) const {
  for (const auto& s : stages) {
    if (s.stage == name) return s;
  }
  throw ArgumentError("latency report has no stage '" + name + "'");
}

std::string LatencyReport::csv() const {
  std::ostringstream os;
  os << "stage,mean_ms,p50_ms,p95_ms,samples\n";
  char line[160];
  for (const auto& s : stages) {
    std::snprintf(line, sizeof line, "%s,%.6f,%.6f,%.6f,%zu\n", s.stage.c_str(), s.mean_ms,
                  s.p50_ms, s.p95_ms, s.samples);
    os << line;
  }
  std::snprintf(line, sizeof line, "fps,%.6f,,,\n", fps);
  os << line;
  return os.str();
}

std::string LatencyReport::table() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "# clock: steady_clock, resolution %.1f ns; threads %d; %s%s\n",
                clock_resolution_ns, threads, precision.c_str(), include_io ? "; disk I/O included" : "");
  os << line;
  std::snprintf(line, sizeof line, "%-12s %10s %10s %10s %8s\n", "stage", "mean ms", "p50 ms",
                "p95 ms", "samples");
  os << line;
  for (const auto& s : stages) {
    std::snprintf(line, sizeof line, "%-12s %10.3f %10.3f %10.3f %8zu\n", s.stage.c_str(),
                  s.mean_ms, s.p50_ms, s.p95_ms, s.samples);
    os << line;
  }
  std::snprintf(line, sizeof line, "FPS: %.2f\n", fps);
  os << line;
  return os.str();
}

StageStats summarize(const std::string& stage, std::vector<double> samples_ms) {
  if (samples_ms.empty()) throw ArgumentError("summarize: no samples for stage " + stage);
  StageStats s;
  s.stage = stage;
  s.samples = samples_ms.size();
  s.mean_ms = std::accumulate(samples_ms.begin(), samples_ms.end(), 0.0) /
              static_cast<double>(samples_ms.size());
  std::sort(samples_ms.begin(), samples_ms.end());
  s.p50_ms = percentile(samples_ms, 50.0);
  s.p95_ms = percentile(samples_ms, 95.0);
  return s;
}

template <typename T>
LatencyReport bench_inference(const Model<T>* model, const BenchInput& input, int64_t warmup,
                              int64_t iters) {
  if (!model) throw UsageError("bench: no model loaded (pass --checkpoint or --random-weights)");
  if (iters < 1) throw UsageError("bench: --iters must be >= 1");
  if (warmup < 0) throw UsageError("bench: --warmup must be >= 0");

  const ModelConfig& cfg = model->config;
  const int64_t w = input.source_width > 0 ? input.source_width : cfg.input_size;
  const int64_t h = input.source_height > 0 ? input.source_height : cfg.input_size;
  const Image8 frame = random_frame(w, h, input.seed);
  const data::PreprocessConfig pre = preprocess_config_for(*model);
  std::filesystem::path frame_path, mask_path;
  if (input.include_io) {
    std::filesystem::create_directories(input.io_dir);
    frame_path = input.io_dir / "bench_frame.png";
    mask_path = input.io_dir / "bench_mask.png";
    write_png(frame_path, frame);
  }

  std::vector<double> t_pre, t_enc, t_dec, t_post, t_total;
  LatencyReport report;
  auto run_once = [&](bool timed) {
    const auto t0 = Clock::now();
    Tensor<T> x = input.include_io ? data::preprocess_image<T>(read_png(frame_path), pre)
                                   : data::preprocess_image<T>(frame, pre);
    const auto t1 = Clock::now();
    const auto enc = encoder::encoder_forward(x, cfg, model->encoder);
    const auto t2 = Clock::now();
    const Tensor<T> logits = decoder::decoder_forward(enc, cfg, model->decoder, {h, w});
    const auto t3 = Clock::now();
    const Mask mask = logits_to_mask(logits, 0);
    if (input.include_io) write_png(mask_path, data::mask_to_image(mask));
    const auto t4 = Clock::now();
    if (!timed) return;
    t_pre.push_back(ms_between(t0, t1));
    t_enc.push_back(ms_between(t1, t2));
    t_dec.push_back(ms_between(t2, t3));
    t_post.push_back(ms_between(t3, t4));
    t_total.push_back(ms_between(t0, t4));
  };

  for (int64_t i = 0; i < warmup; ++i) run_once(false);
  if (input.record_trace) {
    OpTraceScope trace;
    for (int64_t i = 0; i < iters; ++i) run_once(true);
    report.op_trace = trace.ops();
  } else {
    for (int64_t i = 0; i < iters; ++i) run_once(true);
  }

  report.stages = {summarize("preprocess", t_pre), summarize("encoder", t_enc),
                   summarize("decoder", t_dec), summarize("postprocess", t_post),
                   summarize("total", t_total)};
  report.fps = 1000.0 / report.stage("total").mean_ms;
  report.threads = kernels::num_threads();
  report.precision = sizeof(T) == 4 ? "fp32" : "fp64";
  report.clock_resolution_ns =
      1e9 * static_cast<double>(Clock::period::num) / static_cast<double>(Clock::period::den);
  report.include_io = input.include_io;
  return report;
}

template LatencyReport bench_inference(const Model<float>*, const BenchInput&, int64_t, int64_t);
template LatencyReport bench_inference(const Model<double>*, const BenchInput&, int64_t, int64_t);

}  // namespace rod::bench
