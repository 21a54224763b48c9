// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include "rod/bench.hpp"
#include "rod/checkpoint.hpp"
#include "rod/cli.hpp"
#include "rod/decoder.hpp"
#include "rod/encoder.hpp"
#include "rod/error.hpp"
#include "rod/inference.hpp"
#include "rod/kernels.hpp"
#include "rod/metrics.hpp"
#include "rod/training.hpp"
#include "support.hpp"

using namespace rod;
using rod::testing::random_tensor;
using rod::testing::ScratchDir;

namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("FAILED ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<uint8_t> slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

template <typename T>
train::InMemorySource<T> half_plane_source(int count, int64_t size, uint64_t seed) {
  train::InMemorySource<T> src;
  data::PreprocessConfig pre;
  pre.input_size = size;
  for (int i = 0; i < count; ++i) {
    auto s = testing::half_plane_sample(size, seed + static_cast<uint64_t>(i));
    src.add(data::preprocess_image<T>(s.image, pre), s.mask);
  }
  return src;
}

Outcome shape_contract() {
  Outcome o;
  const ModelConfig cfg = paper_preset();
  const auto model = Model<float>::random(cfg, 1);
  const auto image = random_tensor<float>({1, 3, 1024, 1024}, 2);
  const auto enc = encoder::encoder_forward(image, cfg, model.encoder);
  o.require(enc.latents.size() == 12, "12 latents");
  bool latents_ok = true;
  for (const auto& h : enc.latents) latents_ok = latents_ok && h.shape() == Shape{1, 64, 64, 384};
  o.require(latents_ok, "latent shape (1, 64, 64, 384)");
  o.require(enc.image_embedding.shape() == Shape{1, 256, 64, 64}, "image embedding (1, 256, 64, 64)");
  decoder::DecoderFeatures<float> feats;
  decoder::decoder_forward<float>(enc, cfg, model.decoder, {}, nullptr, &feats);
  o.require(feats.logits_pre_resize.shape() == Shape{1, 2, 256, 256}, "pre-resize logits (1, 2, 256, 256)");
  o.note("latents " + std::to_string(enc.latents.size()) + "x" + shape_str(enc.latents[0].shape()) +
         ", F_eb " + shape_str(enc.image_embedding.shape()) + ", logits " + shape_str(feats.logits_pre_resize.shape()));
  return o;
}

Outcome gradient_check() {
  Outcome o;
  const ModelConfig cfg = desk_preset();
  const auto model = Model<double>::random(cfg, 3);
  const auto src = half_plane_source<double>(2, cfg.input_size, 40);
  const std::vector<size_t> idx{0, 1};
  const auto batch = train::make_batch<double>(src, idx);
  const auto report = train::gradient_check(model, batch, train::TrainConfig{}, 128, 1e-5, 1e-3, 7);
  o.require(report.checked >= 100, ">= 100 checked parameters");
  o.require(report.passed(), "relative error <= 1e-3 on every checked sample");
  // Kinks are rare at this step size; a flood of them would mean the screen is hiding something.
  o.require(report.kinks * 4 <= report.entries.size(), "kink draws under 25%");
  o.note(std::to_string(report.checked) + " checked, " + std::to_string(report.kinks) +
         " kink draws skipped, max rel error " + fmt("%.3e", report.max_rel_error) + ", failures " +
         std::to_string(report.failures));
  return o;
}

Outcome frozen_encoder() {
  Outcome o;
  const ModelConfig cfg = desk_preset();
  auto model = Model<float>::random(cfg, 4);
  std::map<std::string, std::vector<float>> snapshot;
  model.encoder.visit([&](const std::string& n, Tensor<float>& t) { snapshot[n] = t.storage(); });
  const auto decoder_before = model.decoder.head.weight;
  const auto src = half_plane_source<float>(4, cfg.input_size, 50);
  train::TrainConfig tc;
  tc.total_steps = 50;
  tc.batch_size = 2;
  tc.seed = 5;
  const auto result = train::train_loop<float>(src, model, tc);
  size_t identical = 0;
  model.encoder.visit([&](const std::string& n, Tensor<float>& t) {
    const auto& before = snapshot.at(n);
    if (t.storage().size() == before.size() &&
        std::memcmp(t.data(), before.data(), before.size() * sizeof(float)) == 0) {
      ++identical;
    }
  });
  o.require(result.losses.size() == 50, "50 steps ran");
  o.require(identical == snapshot.size(), "every encoder tensor bitwise identical");
  o.require(!(model.decoder.head.weight == decoder_before), "decoder was updated");
  o.note(std::to_string(identical) + "/" + std::to_string(snapshot.size()) + " encoder tensors unchanged after " +
         std::to_string(result.losses.size()) + " steps");
  return o;
}

Outcome overfit() {
  Outcome o;
  const ModelConfig cfg = desk_preset();
  auto model = Model<float>::random(cfg, 6);
  const auto src = half_plane_source<float>(8, 128, 60);
  train::TrainConfig tc;
  tc.total_steps = 200;
  tc.batch_size = 8;
  tc.lr0 = 1e-3;
  tc.power = 0.9;
  tc.seed = 7;
  const auto result = train::train_loop<float>(src, model, tc);

  std::vector<metrics::EvalSample> samples;
  for (size_t i = 0; i < src.size(); ++i) samples.push_back({std::to_string(i), src.load(i).second});
  const auto eval = metrics::evaluate_dataset(
      [&](size_t i) {
        const auto enc = encoder::encoder_forward(src.load(i).first, cfg, model.encoder);
        return logits_to_mask(decoder::decoder_forward(enc, cfg, model.decoder, {128, 128}));
      },
      samples);
  o.require(eval.report.iou >= 0.95, "training-set IoU >= 0.95");
  o.note("loss " + fmt("%.4f", result.losses.front()) + " -> " + fmt("%.4f", result.losses.back()) +
         ", train IoU " + fmt("%.4f", eval.report.iou) + ", F1 " + fmt("%.4f", eval.report.f1));
  return o;
}

Outcome metrics_oracle() {
  Outcome o;
  std::mt19937_64 rng(8);
  size_t exact = 0;
  for (int i = 0; i < 1000; ++i) {
    const int64_t h = 1 + static_cast<int64_t>(rng() % 24), w = 1 + static_cast<int64_t>(rng() % 24);
    Mask p(h, w), g(h, w);
    for (auto& v : p.data) v = static_cast<uint8_t>(rng() & 1);
    for (auto& v : g.data) v = static_cast<uint8_t>(rng() & 1);
    metrics::ConfusionCounts ref;
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        const int pp = p.at(y, x), gg = g.at(y, x);
        ref.tp += pp && gg;
        ref.fp += pp && !gg;
        ref.fn += !pp && gg;
        ref.tn += !pp && !gg;
      }
    const auto got = metrics::compute_metrics(metrics::confusion_counts(p, g));
    const auto want = metrics::compute_metrics(ref);
    if (got.counts == ref && got.accuracy == want.accuracy && got.iou == want.iou && got.f1 == want.f1) ++exact;
  }
  o.require(exact == 1000, "1000 random pairs match double-loop counts");

  const auto hand = metrics::compute_metrics({3, 1, 1, 5});
  const bool hand_ok = std::abs(hand.accuracy - 0.8) < 1e-15 && hand.precision == 0.75 && hand.recall == 0.75 &&
                       hand.f1 == 0.75 && std::abs(hand.iou - 0.6) < 1e-15;
  o.require(hand_ok, "(3,1,1,5) -> (0.8, 0.75, 0.75, 0.75, 0.6)");

  double worst = 0;
  std::uniform_int_distribution<uint64_t> u(0, 100000);
  for (int i = 0; i < 10000; ++i) {
    metrics::ConfusionCounts c{u(rng), u(rng), u(rng), u(rng)};
    if (c.tp + c.fp + c.fn == 0) c.fp = 1;
    const auto r = metrics::compute_metrics(c);
    worst = std::max(worst, std::abs(r.f1 - 2 * r.iou / (1 + r.iou)));
  }
  o.require(worst <= 1e-12, "f1 = 2 iou / (1 + iou) within 1e-12");
  o.note(std::to_string(exact) + "/1000 exact, hand case " + (hand_ok ? "ok" : "wrong") +
         ", max identity error " + fmt("%.2e", worst));
  return o;
}

Outcome schedule() {
  Outcome o;
  train::TrainConfig tc;
  tc.total_steps = 20000;
  std::mt19937_64 rng(9);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const int64_t t = static_cast<int64_t>(rng() % 20000);
    const double want = 1e-3 * std::pow(1.0 - static_cast<double>(t) / 20000.0, 0.9);
    worst = std::max(worst, std::abs(train::poly_lr(t, tc) - want) / want);
  }
  o.require(worst <= 1e-12, "closed form within 1e-12");
  o.require(train::poly_lr(0, tc) == 1e-3, "t=0 gives 1e-3");
  o.require(train::poly_lr(20000, tc) == 0.0, "t=T gives 0");
  o.note("max rel error " + fmt("%.2e", worst) + ", lr(0)=" + fmt("%g", train::poly_lr(0, tc)) +
         ", lr(T)=" + fmt("%g", train::poly_lr(20000, tc)));
  return o;
}

Outcome structural() {
  Outcome o;
  ModelConfig cfg = desk_preset();
  cfg.use_norm = false;
  auto zero = Model<float>::zeros(cfg);
  zero.decoder.usl1.use_norm = false;
  zero.decoder.latent_fuse.use_norm = false;
  const auto f = random_tensor<float>({2, cfg.fusion_width, 16, 16}, 10);
  o.require(decoder::usl(f, cfg, zero.decoder.usl1) == decoder::bilinear_upsample(f, 2), "usl == 2x upsample");

  std::vector<Tensor<float>> parts;
  Tensor<float> sum({2, cfg.decoder_width, 16, 16});
  for (uint64_t i = 0; i < 4; ++i) {
    parts.push_back(random_tensor<float>({2, cfg.decoder_width, 16, 16}, 11 + i));
    sum += parts.back();
  }
  o.require(decoder::fuse_latents(parts, cfg, zero.decoder.latent_fuse) == sum, "fuse_latents == sum");

  const ModelConfig dc = desk_preset();
  auto model = Model<float>::random(dc, 12);
  auto& blk = model.encoder.blocks[0];
  blk.proj.weight.fill(0);
  blk.proj.bias.fill(0);
  blk.fc2.weight.fill(0);
  blk.fc2.bias.fill(0);
  const auto x = random_tensor<float>({2, 16, 16, 64}, 13);
  const double err = testing::max_abs_diff(encoder::transformer_block(x, blk, dc), x);
  o.require(err <= 1e-6, "transformer_block identity within 1e-6");
  o.note("usl and fuse exact, block identity error " + fmt("%.2e", err));
  return o;
}

Outcome checkpoint_round_trip() {
  Outcome o;
  ScratchDir dir("accept_ckpt");
  const auto model = Model<float>::random(desk_preset(), 14);
  ckpt::save_checkpoint(model, dir / "a.rodckpt");
  ckpt::save_checkpoint(ckpt::load_checkpoint<float>(dir / "a.rodckpt"), dir / "b.rodckpt");
  const auto a = slurp(dir / "a.rodckpt"), b = slurp(dir / "b.rodckpt");
  o.require(!a.empty() && a == b, "save -> load -> save byte identical");

  auto archive = ckpt::read_archive(dir / "a.rodckpt");
  const std::string victim = "decoder.usl2.conv1.bias";
  archive.entries.erase(std::remove_if(archive.entries.begin(), archive.entries.end(),
                                       [&](const auto& e) { return e.name == victim; }),
                        archive.entries.end());
  ckpt::write_archive(dir / "c.rodckpt", archive);
  std::string message;
  try {
    ckpt::load_checkpoint<float>(dir / "c.rodckpt");
  } catch (const DataError& e) {
    message = e.what();
  }
  o.require(message.find(victim) != std::string::npos, "missing tensor named in the error");
  o.note(std::to_string(a.size()) + " bytes round trip " + (a == b ? "identical" : "different") +
         "; missing-tensor error: \"" + message.substr(0, 90) + "\"");
  return o;
}

Outcome bench_consistency() {
  Outcome o;
  kernels::set_num_threads(1);
  const auto desk = Model<float>::random(desk_preset(), 15);
  const auto r = bench::bench_inference(&desk, {}, 10, 100);
  double stage_sum = 0;
  for (const char* s : {"preprocess", "encoder", "decoder", "postprocess"}) stage_sum += r.stage(s).mean_ms;
  const double total = r.stage("total").mean_ms;
  const double gap = std::abs(stage_sum - total) / total;
  o.require(gap <= 0.05, "stage means within 5% of total");
  const double fps_err = std::abs(r.fps - 1000.0 / total) / r.fps;
  o.require(fps_err <= 1e-9, "fps == 1000 / mean total");

  const auto paper = Model<float>::random(paper_preset(), 16);
  const auto p = bench::bench_inference(&paper, {}, 0, 1);
  const double enc = p.stage("encoder").mean_ms, dec = p.stage("decoder").mean_ms;
  o.require(enc > dec, "encoder is the majority of model time at paper shapes");
  o.note("desk stage-sum gap " + fmt("%.3f%%", 100 * gap) + ", fps rel err " + fmt("%.1e", fps_err) +
         ", paper encoder share " + fmt("%.1f%%", 100 * enc / (enc + dec)));
  return o;
}

Outcome end_to_end_oracle() {
  Outcome o;
  ScratchDir dir("accept_e2e");
  const auto model = Model<float>::random(desk_preset(), 17);
  ckpt::save_checkpoint(model, dir / "model.rodckpt");
  fs::create_directories(dir / "data" / "images");
  const auto scene = testing::half_plane_sample(96, 18);
  Image8 frame = scene.image;
  write_png(dir / "data" / "images" / "frame.png", frame);

  std::ostringstream out, err;
  const int infer_code = cli_main({"infer", "--checkpoint", (dir / "model.rodckpt").string(), "--out-dir",
                                   (dir / "data" / "masks").string(), (dir / "data" / "images" / "frame.png").string()},
                                  out, err);
  o.require(infer_code == 0, "infer exit 0");
  std::ofstream(dir / "layout.cfg") << "image_dir = images\nmask_dir = masks\nmask_glob = *_mask.png\n"
                                       "stem_strip_suffix = _mask\n";
  const int eval_code = cli_main({"eval", "--checkpoint", (dir / "model.rodckpt").string(), "--dataset-root",
                                  (dir / "data").string(), "--layout", (dir / "layout.cfg").string(), "--strict",
                                  "--out-dir", (dir / "eval").string()},
                                 out, err);
  o.require(eval_code == 0, "eval exit 0");

  std::ifstream csv(dir / "eval" / "metrics.csv");
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  std::vector<std::string> fields;
  std::stringstream ss(row);
  for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
  bool all_one = fields.size() == 9;
  for (size_t i = 0; all_one && i < 5; ++i) all_one = std::stod(fields[i]) == 1.0;
  o.require(all_one, "all five metrics exactly 1.0");
  if (fields.size() == 9) {
    o.require(fields[8] != "0" && fields[5] != "0", "both classes present in the emitted mask");
  }
  o.note("metrics row: " + row);
  if (!err.str().empty()) o.note("stderr: " + err.str().substr(0, 200));
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    const char* id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"1", "paper-preset shape contract", shape_contract},
      {"2", "decoder gradient check (fp64)", gradient_check},
      {"3", "frozen encoder over 50 steps", frozen_encoder},
      {"4", "overfit 8 half-plane images", overfit},
      {"5", "metrics oracle", metrics_oracle},
      {"6", "poly schedule exactness", schedule},
      {"7", "structural identities", structural},
      {"8", "checkpoint round trip", checkpoint_round_trip},
      {"9", "bench self-consistency", bench_consistency},
      {"10", "end-to-end infer/eval oracle", end_to_end_oracle},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] criterion %s: %s (%.1fs) - %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs,
                o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
