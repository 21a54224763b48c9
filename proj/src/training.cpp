#include "rod/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "rod/checkpoint.hpp"
#include "rod/encoder.hpp"
#include "rod/error.hpp"
#include "rod/log.hpp"

namespace fs = std::filesystem;

namespace rod::train {

void TrainConfig::validate() const {
  if (!(lr0 > 0)) throw ConfigError("train config: lr0 must be > 0");
  if (!(power >= 0)) throw ConfigError("train config: power must be >= 0");
  if (total_steps < 0) throw ConfigError("train config: total_steps must be >= 0");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (weight_decay < 0) throw ConfigError("train config: weight_decay must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw ConfigError("train config: betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0)) throw ConfigError("train config: adam_eps must be > 0");
}

template <typename T>
double cross_entropy_loss(const Tensor<T>& logits, std::span<const Mask> gt, LossReduction reduction,
                          Tensor<T>* dlogits) {
  if (logits.rank() != 4) throw ConfigError("cross_entropy_loss: logits must be (B, K, H, W)");
  const int64_t B = logits.dim(0), K = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
  const int64_t P = H * W;
  if (static_cast<int64_t>(gt.size()) != B) {
    throw ArgumentError("cross_entropy_loss: " + std::to_string(gt.size()) + " masks for batch of " +
                        std::to_string(B));
  }
  for (const Mask& m : gt) {
    if (m.height != H || m.width != W) {
      throw ArgumentError("cross_entropy_loss: mask " + std::to_string(m.height) + "x" +
                          std::to_string(m.width) + " does not match logits " + std::to_string(H) +
                          "x" + std::to_string(W));
    }
  }
  const double norm = reduction == LossReduction::kMean ? 1.0 / static_cast<double>(B * P) : 1.0;
  if (dlogits) *dlogits = Tensor<T>(logits.shape());

  double total = 0;
  std::vector<double> prob(static_cast<size_t>(K));
  for (int64_t b = 0; b < B; ++b) {
    const T* base = logits.data() + b * K * P;
    const Mask& mask = gt[static_cast<size_t>(b)];
    for (int64_t p = 0; p < P; ++p) {
      const int64_t label = mask.data[static_cast<size_t>(p)];
      if (label > 1 || label >= K) {
        throw DataError("cross_entropy_loss: label " + std::to_string(label) + " at pixel (" +
                        std::to_string(b) + ", " + std::to_string(p / W) + ", " +
                        std::to_string(p % W) + ") is not 0 or 1");
      }
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t k = 0; k < K; ++k) mx = std::max(mx, static_cast<double>(base[k * P + p]));
      double sum = 0;
      for (int64_t k = 0; k < K; ++k) {
        prob[static_cast<size_t>(k)] = std::exp(static_cast<double>(base[k * P + p]) - mx);
        sum += prob[static_cast<size_t>(k)];
      }
      total += mx + std::log(sum) - static_cast<double>(base[label * P + p]);
      if (dlogits) {
        T* g = dlogits->data() + b * K * P;
        for (int64_t k = 0; k < K; ++k) {
          const double softmax = prob[static_cast<size_t>(k)] / sum;
          g[k * P + p] = static_cast<T>((softmax - (k == label ? 1.0 : 0.0)) * norm);
        }
      }
    }
  }
  return total * norm;
}

double poly_lr(int64_t step, const TrainConfig& cfg) {
  if (step < 0) throw ArgumentError("poly_lr: negative step " + std::to_string(step));
  if (cfg.total_steps <= 0 || step >= cfg.total_steps) {
    if (step > cfg.total_steps) {
      log::warn("poly_lr: step " + std::to_string(step) + " beyond total_steps " +
                std::to_string(cfg.total_steps) + ", learning rate clamped to 0");
    }
    return 0.0;
  }
  const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(cfg.total_steps);
  return cfg.lr0 * std::pow(frac, cfg.power);
}

template <typename T>
void optimizer_step(Model<T>& model, const NamedTensors<T>& grads, int64_t step,
                    const TrainConfig& cfg, AdamWState<T>& state) {
  for (const auto& [name, g] : grads) {
    if (name.rfind("encoder.", 0) == 0) {
      throw ContractError("optimizer_step: gradient supplied for frozen parameter '" + name + "'");
    }
  }
  std::map<std::string, Tensor<T>*> params;
  model.decoder.visit([&](const std::string& name, Tensor<T>& t) { params[name] = &t; });
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw ArgumentError("optimizer_step: unknown parameter '" + name + "'");
    expect_shape(g.shape(), it->second->shape(), "optimizer_step gradient for " + name);
  }

  const double lr = poly_lr(step, cfg);
  ++state.updates;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.updates));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.updates));
  for (const auto& [name, g] : grads) {
    Tensor<T>& p = *params[name];
    auto& mom = state.moments[name];
    if (mom.m.shape() != p.shape()) {
      mom.m = Tensor<T>(p.shape());
      mom.v = Tensor<T>(p.shape());
    }
    const double decay = p.rank() >= 2 ? lr * cfg.weight_decay : 0.0;
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double m = cfg.beta1 * static_cast<double>(mom.m[i]) + (1.0 - cfg.beta1) * gi;
      const double v = cfg.beta2 * static_cast<double>(mom.v[i]) + (1.0 - cfg.beta2) * gi * gi;
      mom.m[i] = static_cast<T>(m);
      mom.v[i] = static_cast<T>(v);
      double value = static_cast<double>(p[i]) * (1.0 - decay);
      value -= lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.adam_eps);
      p[i] = static_cast<T>(value);
    }
  }
}

namespace {

template <typename T>
decoder::OutputSize output_size(const Batch<T>& batch) {
  if (batch.masks.empty()) throw ArgumentError("batch has no masks");
  if (static_cast<int64_t>(batch.masks.size()) != batch.images.dim(0)) {
    throw ArgumentError("batch holds " + std::to_string(batch.images.dim(0)) + " images and " +
                        std::to_string(batch.masks.size()) + " masks");
  }
  return {batch.masks.front().height, batch.masks.front().width};
}

template <typename T>
double decoder_loss(const encoder::EncoderOutput<T>& enc, const DecoderParams<T>& params,
                    const ModelConfig& mcfg, const Batch<T>& batch, const TrainConfig& cfg) {
  const Tensor<T> logits = decoder::decoder_forward(enc, mcfg, params, output_size(batch));
  return cross_entropy_loss<T>(logits, batch.masks, cfg.loss_reduction);
}

}  // namespace

template <typename T>
LossAndGrads<T> loss_and_grads(const Model<T>& model, const Batch<T>& batch, const TrainConfig& cfg) {
  const auto out = output_size(batch);
  const auto enc = encoder::encoder_forward(batch.images, model.config, model.encoder);
  decoder::DecoderCache<T> cache;
  const Tensor<T> logits = decoder::decoder_forward(enc, model.config, model.decoder, out, &cache);
  Tensor<T> dlogits;
  LossAndGrads<T> r;
  r.loss = cross_entropy_loss<T>(logits, batch.masks, cfg.loss_reduction, &dlogits);
  r.grads = named(decoder::decoder_backward(dlogits, cache, model.config, model.decoder));
  return r;
}

template <typename T>
GradCheckReport gradient_check(const Model<T>& model, const Batch<T>& batch, const TrainConfig& cfg,
                               size_t samples, double step_size, double tolerance, uint64_t seed) {
  const LossAndGrads<T> analytic = loss_and_grads(model, batch, cfg);
  const auto enc = encoder::encoder_forward(batch.images, model.config, model.encoder);

  DecoderParams<T> params = model.decoder;
  std::vector<std::pair<std::string, Tensor<T>*>> flat;
  params.visit([&](const std::string& name, Tensor<T>& t) { flat.emplace_back(name, &t); });
  std::vector<int64_t> offsets{0};
  for (const auto& [name, t] : flat) offsets.push_back(offsets.back() + t->numel());

  const double center = decoder_loss(enc, params, model.config, batch, cfg);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int64_t> pick(0, offsets.back() - 1);
  GradCheckReport report;
  report.requested = samples;
  for (size_t draw = 0; report.checked < samples && draw < 4 * samples; ++draw) {
    const int64_t flat_index = pick(rng);
    const size_t which = static_cast<size_t>(
        std::upper_bound(offsets.begin(), offsets.end(), flat_index) - offsets.begin() - 1);
    const int64_t index = flat_index - offsets[which];
    Tensor<T>& t = *flat[which].second;
    const T saved = t[index];
    t[index] = static_cast<T>(static_cast<double>(saved) + step_size);
    const double up = decoder_loss(enc, params, model.config, batch, cfg);
    t[index] = static_cast<T>(static_cast<double>(saved) - step_size);
    const double down = decoder_loss(enc, params, model.config, batch, cfg);
    t[index] = saved;

    GradCheckEntry e;
    e.name = flat[which].first;
    e.index = index;
    e.analytic = static_cast<double>(analytic.grads.at(e.name)[index]);
    e.numeric = (up - down) / (2.0 * step_size);
    const double fwd = (up - center) / step_size, bwd = (center - down) / step_size;
    e.kink = std::abs(fwd - bwd) > tolerance * std::max({std::abs(fwd), std::abs(bwd), 1e-8});
    const double denom = std::max({std::abs(e.analytic), std::abs(e.numeric), 1e-8});
    e.rel_error = std::abs(e.analytic - e.numeric) / denom;
    if (e.kink) {
      ++report.kinks;
    } else {
      ++report.checked;
      report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
      if (!(e.rel_error <= tolerance)) ++report.failures;
    }
    report.entries.push_back(std::move(e));
  }
  return report;
}

template <typename T>
StepResult train_step(const Batch<T>& batch, Model<T>& model, const TrainConfig& cfg, int64_t step,
                      AdamWState<T>& state) {
  if (cfg.grad_check_mode) {
    const bool wide = sizeof(T) == 8;
    const auto report = gradient_check(model, batch, cfg, 100, wide ? 1e-5 : 1e-3, 1e-3, cfg.seed + static_cast<uint64_t>(step));
    if (!report.passed()) {
      throw NumericalError("gradient check failed at step " + std::to_string(step) + ": " +
                           std::to_string(report.failures) + " of " +
                           std::to_string(report.checked) + " samples over tolerance (" +
                           std::to_string(report.kinks) + " kinks skipped), max rel error " +
                           std::to_string(report.max_rel_error));
    }
  }
  LossAndGrads<T> lg = loss_and_grads(model, batch, cfg);
  const double lr = poly_lr(step, cfg);
  if (!std::isfinite(lg.loss)) {
    std::ostringstream os;
    os << "non-finite loss at step " << step << " (lr " << lr << ", loss " << lg.loss << ")";
    throw NumericalError(os.str());
  }
  optimizer_step(model, lg.grads, step, cfg, state);
  return {lg.loss, lr};
}

template <typename T>
Batch<T> make_batch(const SampleSource<T>& source, std::span<const size_t> indices) {
  if (indices.empty()) throw ArgumentError("make_batch: no indices");
  Batch<T> batch;
  std::vector<Tensor<T>> images;
  for (size_t i : indices) {
    auto [image, mask] = source.load(i);
    if (!images.empty() && image.shape() != images.front().shape()) {
      throw DataError("make_batch: image " + std::to_string(i) + " has shape " +
                      shape_str(image.shape()) + ", expected " + shape_str(images.front().shape()));
    }
    if (!batch.masks.empty() &&
        (mask.height != batch.masks.front().height || mask.width != batch.masks.front().width)) {
      throw DataError("make_batch: mask " + std::to_string(i) + " differs in size from the first mask");
    }
    images.push_back(std::move(image));
    batch.masks.push_back(std::move(mask));
  }
  Shape s = images.front().shape();
  const int64_t per = images.front().numel();
  s[0] = static_cast<int64_t>(images.size());
  batch.images = Tensor<T>(s);
  for (size_t k = 0; k < images.size(); ++k) {
    std::copy_n(images[k].data(), per, batch.images.data() + static_cast<int64_t>(k) * per);
  }
  return batch;
}

template <typename T>
TrainResult train_loop(const SampleSource<T>& source, Model<T>& model, const TrainConfig& cfg,
                       const TrainLoopOptions& options) {
  cfg.validate();
  if (source.size() == 0) throw ArgumentError("train_loop: empty dataset");
  TrainResult result;
  if (cfg.total_steps == 0) return result;

  std::ofstream csv;
  if (!options.metrics_csv.empty()) {
    const bool fresh = !fs::exists(options.metrics_csv) || fs::file_size(options.metrics_csv) == 0;
    csv.open(options.metrics_csv, std::ios::app);
    if (!csv) throw IoError("cannot open metrics log " + options.metrics_csv.string());
    if (fresh) csv << "step,lr,loss\n";
  }
  if (options.checkpoint_every > 0) fs::create_directories(options.checkpoint_dir);

  std::mt19937_64 rng(cfg.seed);
  std::vector<size_t> order(source.size());
  size_t cursor = order.size();
  AdamWState<T> state;
  std::vector<size_t> picked(static_cast<size_t>(cfg.batch_size));
  for (int64_t step = 0; step < cfg.total_steps; ++step) {
    for (auto& slot : picked) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      slot = order[cursor++];
    }
    const Batch<T> batch = make_batch(source, std::span<const size_t>(picked));
    const StepResult r = train_step(batch, model, cfg, step, state);
    result.losses.push_back(r.loss);
    result.lrs.push_back(r.lr);
    if (csv.is_open()) {
      char line[96];
      std::snprintf(line, sizeof line, "%lld,%.9g,%.9g\n", static_cast<long long>(step), r.lr, r.loss);
      csv << line << std::flush;
    }
    log::debug("step " + std::to_string(step) + " loss " + std::to_string(r.loss));
    if (options.on_step) options.on_step(step, r);
    if (options.checkpoint_every > 0 && (step + 1) % options.checkpoint_every == 0) {
      ckpt::save_checkpoint(model, options.checkpoint_dir /
                                       ("checkpoint_step_" + std::to_string(step + 1) + ".rodckpt"));
    }
  }
  return result;
}

#define ROD_INSTANTIATE_TRAINING(T)                                                              \
  template double cross_entropy_loss(const Tensor<T>&, std::span<const Mask>, LossReduction,     \
                                     Tensor<T>*);                                                \
  template void optimizer_step(Model<T>&, const NamedTensors<T>&, int64_t, const TrainConfig&,   \
                               AdamWState<T>&);                                                  \
  template LossAndGrads<T> loss_and_grads(const Model<T>&, const Batch<T>&, const TrainConfig&); \
  template GradCheckReport gradient_check(const Model<T>&, const Batch<T>&, const TrainConfig&,  \
                                          size_t, double, double, uint64_t);                     \
  template StepResult train_step(const Batch<T>&, Model<T>&, const TrainConfig&, int64_t,        \
                                 AdamWState<T>&);                                                \
  template Batch<T> make_batch(const SampleSource<T>&, std::span<const size_t>);                 \
  template TrainResult train_loop(const SampleSource<T>&, Model<T>&, const TrainConfig&,         \
                                  const TrainLoopOptions&);

ROD_INSTANTIATE_TRAINING(float)
ROD_INSTANTIATE_TRAINING(double)

}  // namespace rod::train
