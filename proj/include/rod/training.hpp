#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rod/dataset.hpp"
#include "rod/decoder.hpp"
#include "rod/mask.hpp"
#include "rod/params.hpp"

namespace rod::train {

enum class LossReduction { kMean, kSum };

struct TrainConfig {
  double lr0 = 1e-3;
  double power = 0.9;
  int64_t total_steps = 1000;
  int64_t batch_size = 8;
  double weight_decay = 1e-2;
  uint64_t seed = 0;
  LossReduction loss_reduction = LossReduction::kMean;
  bool grad_check_mode = false;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

// Softmax cross-entropy against per-pixel labels, log-sum-exp stabilized.
// `gt` holds one mask per batch item, each at the logits' spatial size. When
// `dlogits` is non-null it receives dL/dlogits.
template <typename T>
double cross_entropy_loss(const Tensor<T>& logits, std::span<const Mask> gt, LossReduction reduction,
                          Tensor<T>* dlogits = nullptr);

// lr0 * (1 - step/T)^power; steps past T are clamped to 0 with a warning.
double poly_lr(int64_t step, const TrainConfig& cfg);

template <typename T>
struct AdamWState {
  struct Moments {
    Tensor<T> m, v;
  };
  std::map<std::string, Moments> moments;
  int64_t updates = 0;  // bias-correction counter
};

// One AdamW update with the learning rate of `step`. Weight decay applies to
// rank >= 2 tensors only. A gradient for any `encoder.*` name raises
// ContractError before any parameter changes.
template <typename T>
void optimizer_step(Model<T>& model, const NamedTensors<T>& grads, int64_t step,
                    const TrainConfig& cfg, AdamWState<T>& state);

template <typename T>
struct Batch {
  Tensor<T> images;          // (B, 3, S, S)
  std::vector<Mask> masks;   // B masks, all the same size
};

template <typename T>
struct LossAndGrads {
  double loss = 0;
  NamedTensors<T> grads;
};

// Frozen encoder forward, decoder forward/backward, loss.
template <typename T>
LossAndGrads<T> loss_and_grads(const Model<T>& model, const Batch<T>& batch, const TrainConfig& cfg);

struct StepResult {
  double loss = 0;
  double lr = 0;
};

// In grad_check_mode a gradient check runs on the batch before the update and
// a failing check raises NumericalError.
template <typename T>
StepResult train_step(const Batch<T>& batch, Model<T>& model, const TrainConfig& cfg, int64_t step,
                      AdamWState<T>& state);

struct GradCheckEntry {
  std::string name;
  int64_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_error = 0;
  // One-sided slopes disagree: a ReLU boundary lies within the step.
  bool kink = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  size_t requested = 0;
  size_t checked = 0;
  size_t kinks = 0;
  double max_rel_error = 0;
  size_t failures = 0;
  bool passed() const noexcept { return failures == 0 && checked >= requested; }
};

// Central differences on `samples` randomly chosen decoder scalars.
// rel_error = |a - n| / max(|a|, |n|, 1e-8).
// A draw whose forward and backward differences disagree by more than
// `tolerance` (relative) straddles a ReLU boundary; it is recorded as a kink
// and another scalar is drawn, up to 4 * samples draws. The kink test uses
// loss values only, never the analytic gradient.
template <typename T>
GradCheckReport gradient_check(const Model<T>& model, const Batch<T>& batch, const TrainConfig& cfg,
                               size_t samples, double step_size, double tolerance, uint64_t seed);

// Random-access sample provider for the training loop.
template <typename T>
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual size_t size() const = 0;
  // (1, 3, S, S) image and its mask.
  virtual std::pair<Tensor<T>, Mask> load(size_t index) const = 0;
};

template <typename T>
class InMemorySource : public SampleSource<T> {
 public:
  void add(Tensor<T> image, Mask mask) { items_.emplace_back(std::move(image), std::move(mask)); }
  size_t size() const override { return items_.size(); }
  std::pair<Tensor<T>, Mask> load(size_t index) const override { return items_.at(index); }

 private:
  std::vector<std::pair<Tensor<T>, Mask>> items_;
};

template <typename T>
class FileSource : public SampleSource<T> {
 public:
  FileSource(data::DatasetIndex index, data::PreprocessConfig cfg)
      : index_(std::move(index)), cfg_(cfg) {}
  size_t size() const override { return index_.size(); }
  std::pair<Tensor<T>, Mask> load(size_t i) const override {
    const auto& s = index_.samples.at(i);
    return data::load_and_preprocess<T>(s.image, s.mask, cfg_);
  }

 private:
  data::DatasetIndex index_;
  data::PreprocessConfig cfg_;
};

template <typename T>
Batch<T> make_batch(const SampleSource<T>& source, std::span<const size_t> indices);

struct TrainLoopOptions {
  std::filesystem::path metrics_csv;     // appended "step,lr,loss" rows; empty = off
  int64_t checkpoint_every = 0;          // 0 = off
  std::filesystem::path checkpoint_dir;
  std::function<void(int64_t, const StepResult&)> on_step;
};

struct TrainResult {
  std::vector<double> losses;
  std::vector<double> lrs;
};

// Mini-batches are drawn from a stream of seeded per-epoch shuffles.
template <typename T>
TrainResult train_loop(const SampleSource<T>& source, Model<T>& model, const TrainConfig& cfg,
                       const TrainLoopOptions& options = {});

}  // namespace rod::train
