#include "rod/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "rod/bench.hpp"
#include "rod/checkpoint.hpp"
#include "rod/dataset.hpp"
#include "rod/error.hpp"
#include "rod/image_io.hpp"
#include "rod/inference.hpp"
#include "rod/kernels.hpp"
#include "rod/kv_config.hpp"
#include "rod/log.hpp"
#include "rod/metrics.hpp"
#include "rod/training.hpp"

namespace fs = std::filesystem;

namespace rod {

namespace {

struct Options {
  std::string config;
  std::string preset;
  std::string checkpoint;
  std::string dataset_root;
  std::string out_dir;
  std::string layout;
  std::string split = "test";
  std::string mode = "mask";
  std::vector<std::string> inputs;
  int64_t iters = 100;
  int64_t warmup = 10;
  int threads = 1;
  std::optional<uint64_t> seed;
  double alpha = 0.5;
  int64_t width = 0;
  int64_t height = 0;
  bool random_weights = false;
  bool strict = false;
  bool include_io = false;
};

using ModelF = Model<float>;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

Image8 as_rgb(Image8 img) {
  if (img.channels == 3) return img;
  Image8 rgb(img.width, img.height, 3);
  for (size_t i = 0; i < img.data.size(); ++i) {
    for (size_t c = 0; c < 3; ++c) rgb.data[3 * i + c] = img.data[i];
  }
  return rgb;
}

data::DatasetLayout layout_from(const std::string& spec) {
  if (spec.empty() || spec == "default") return {};
  if (spec == "orfd") return data::DatasetLayout::orfd();
  return data::DatasetLayout::load(spec);
}

// Explicit checkpoint, else random weights for the preset, else none.
std::unique_ptr<ModelF> resolve_model(const Options& o) {
  if (!o.checkpoint.empty()) {
    auto m = std::make_unique<ModelF>(ckpt::load_checkpoint<float>(o.checkpoint));
    if (!o.preset.empty() && !(preset_by_name(o.preset) == m->config)) {
      log::warn("--preset " + o.preset + " ignored; using the checkpoint's configuration");
    }
    return m;
  }
  if (o.random_weights) {
    const ModelConfig cfg = preset_by_name(o.preset.empty() ? "desk" : o.preset);
    return std::make_unique<ModelF>(ModelF::random(cfg, o.seed.value_or(0)));
  }
  return nullptr;
}

ModelF require_model(const Options& o, const char* command) {
  auto m = resolve_model(o);
  if (!m) throw UsageError(std::string(command) + ": pass --checkpoint or --random-weights");
  return std::move(*m);
}

int run_train(const Options& o, std::ostream& out) {
  KeyValueConfig kv;
  if (!o.config.empty()) kv = KeyValueConfig::load(o.config);

  const std::string preset = !o.preset.empty() ? o.preset : kv.get_or("preset", "desk");
  const std::string root = !o.dataset_root.empty() ? o.dataset_root : kv.get_or("dataset_root", "");
  const std::string out_dir = !o.out_dir.empty() ? o.out_dir : kv.get_or("out_dir", "");
  if (root.empty()) throw UsageError("train: dataset root required (--dataset-root or dataset_root)");
  if (out_dir.empty()) throw UsageError("train: output directory required (--out-dir or out_dir)");

  train::TrainConfig tc;
  tc.lr0 = kv.get_double("lr0", tc.lr0);
  tc.power = kv.get_double("power", tc.power);
  tc.total_steps = kv.get_int("total_steps", tc.total_steps);
  tc.batch_size = kv.get_int("batch_size", tc.batch_size);
  tc.weight_decay = kv.get_double("weight_decay", tc.weight_decay);
  tc.seed = o.seed ? *o.seed : static_cast<uint64_t>(kv.get_int("seed", 0));
  tc.grad_check_mode = kv.get_bool("grad_check_mode", false);
  const std::string reduction = kv.get_or("loss_reduction", "mean");
  if (reduction == "sum") {
    tc.loss_reduction = train::LossReduction::kSum;
  } else if (reduction != "mean") {
    throw ConfigError("loss_reduction must be mean or sum, got '" + reduction + "'");
  }
  tc.validate();

  ModelF model = o.checkpoint.empty() ? ModelF::random(preset_by_name(preset), tc.seed)
                                      : ckpt::load_checkpoint<float>(o.checkpoint);
  if (const auto enc = kv.get("encoder_checkpoint")) {
    const auto report = ckpt::import_encoder(model, ckpt::read_archive(*enc), ckpt::sam_translation_table());
    out << "imported " << report.loaded.size() << " encoder tensors from " << *enc << " ("
        << report.ignored.size() << " ignored, " << report.missing.size() << " missing)\n";
  }

  const std::string layout = !o.layout.empty() ? o.layout : kv.get_or("layout", "");
  const bool strict = o.strict || kv.get_bool("strict", false);
  auto index = data::index_dataset(root, layout_from(layout), kv.get_or("split", "train"), strict);
  if (index.size() == 0) throw DataError("train: no samples under " + root);
  data::PreprocessConfig pre = preprocess_config_for(model);
  pre.mask_threshold = kv.get_double("mask_threshold", pre.mask_threshold);
  train::FileSource<float> source(std::move(index), pre);

  train::TrainLoopOptions lo;
  lo.metrics_csv = fs::path(out_dir) / "loss.csv";
  lo.checkpoint_every = kv.get_int("checkpoint_every", 0);
  lo.checkpoint_dir = out_dir;
  const int64_t report_every = std::max<int64_t>(1, tc.total_steps / 10);
  lo.on_step = [&](int64_t step, const train::StepResult& r) {
    if (step % report_every == 0 || step + 1 == tc.total_steps) {
      log::info("step " + std::to_string(step) + " lr " + std::to_string(r.lr) + " loss " +
                std::to_string(r.loss));
    }
  };
  fs::create_directories(out_dir);
  if (fs::exists(lo.metrics_csv)) fs::remove(lo.metrics_csv);
  const auto result = train::train_loop(source, model, tc, lo);

  const fs::path ckpt_path = fs::path(out_dir) / "model.rodckpt";
  ckpt::save_checkpoint(model, ckpt_path);
  out << "trained " << tc.total_steps << " steps on " << source.size() << " samples; final loss "
      << (result.losses.empty() ? 0.0 : result.losses.back()) << "\n"
      << "checkpoint: " << ckpt_path.string() << "\n"
      << "loss log: " << lo.metrics_csv.string() << "\n";
  return 0;
}

int run_eval(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.dataset_root.empty()) throw UsageError("eval: --dataset-root is required");
  const ModelF model = require_model(o, "eval");
  const auto index = data::index_dataset(o.dataset_root, layout_from(o.layout), o.split, o.strict);
  if (index.size() == 0) throw DataError("eval: no samples under " + o.dataset_root);
  const data::PreprocessConfig pre = preprocess_config_for(model);

  std::vector<metrics::EvalSample> samples;
  samples.reserve(index.size());
  for (const auto& s : index.samples) {
    samples.push_back({s.stem, data::binarize_mask(read_png(s.mask), pre.mask_threshold)});
  }
  const auto predict = [&](size_t i) {
    const Mask& gt = samples[i].ground_truth;
    return predict_mask(model, as_rgb(read_png(index.samples[i].image)), pre, {gt.height, gt.width});
  };
  const auto result = metrics::evaluate_dataset(predict, samples);
  for (const auto& msg : result.failure_messages) err << "skipped: " << msg << "\n";
  if (result.evaluated == 0) throw DataError("eval: every sample failed");

  out << "evaluated " << result.evaluated << " samples";
  if (result.failures) out << " (" << result.failures << " skipped)";
  out << "\n" << metrics::format_table(result.report);
  const std::string csv = metrics::csv_header() + "\n" + metrics::csv_row(result.report) + "\n";
  out << csv;
  if (!o.out_dir.empty()) write_text(fs::path(o.out_dir) / "metrics.csv", csv);
  return 0;
}

std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(in)) {
        if (e.is_regular_file() && e.path().extension() == ".png") found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::is_regular_file(in)) {
      files.emplace_back(in);
    } else {
      throw IoError("infer: input not found: " + in);
    }
  }
  return files;
}

int run_infer(const Options& o, std::ostream& out) {
  if (o.inputs.empty()) throw UsageError("infer: no input images given");
  if (o.out_dir.empty()) throw UsageError("infer: --out-dir is required");
  if (o.mode != "mask" && o.mode != "overlay" && o.mode != "both") {
    throw UsageError("infer: --mode must be mask, overlay or both");
  }
  const ModelF model = require_model(o, "infer");
  const data::PreprocessConfig pre = preprocess_config_for(model);
  data::OverlayStyle style;
  style.alpha = o.alpha;

  const auto files = expand_inputs(o.inputs);
  fs::create_directories(o.out_dir);
  for (const auto& path : files) {
    const Image8 image = as_rgb(read_png(path));
    const Mask mask = predict_mask(model, image, pre);
    const std::string stem = path.stem().string();
    if (o.mode != "overlay") {
      const fs::path dst = fs::path(o.out_dir) / (stem + "_mask.png");
      data::export_prediction(mask, image, dst, data::ExportMode::kMask);
      out << dst.string() << "\n";
    }
    if (o.mode != "mask") {
      const fs::path dst = fs::path(o.out_dir) / (stem + "_overlay.png");
      data::export_prediction(mask, image, dst, data::ExportMode::kOverlay, style);
      out << dst.string() << "\n";
    }
  }
  return 0;
}

int run_bench(const Options& o, std::ostream& out) {
  const auto model = resolve_model(o);
  bench::BenchInput in;
  in.source_width = o.width;
  in.source_height = o.height;
  in.seed = o.seed.value_or(0);
  in.include_io = o.include_io;
  if (o.include_io) {
    if (o.out_dir.empty()) throw UsageError("bench: --include-io needs --out-dir for scratch files");
    in.io_dir = fs::path(o.out_dir) / "bench_io";
  }
  const auto report = bench::bench_inference<float>(model.get(), in, o.warmup, o.iters);
  out << report.table() << "\n" << report.csv();
  if (!o.out_dir.empty()) write_text(fs::path(o.out_dir) / "latency.csv", report.csv());
  return 0;
}

int run_inspect(const Options& o, std::ostream& out) {
  std::string path = o.checkpoint;
  if (path.empty() && !o.inputs.empty()) path = o.inputs.front();
  if (path.empty()) throw UsageError("inspect-ckpt: pass an archive path");
  const ckpt::Archive a = ckpt::read_archive(path);
  out << "archive: " << path << "\n"
      << "format_version: " << a.format_version << "\n"
      << "config: " << a.config.dump() << "\n";

  std::map<std::string, std::vector<const ckpt::TensorEntry*>> groups;
  for (const auto& e : a.entries) groups[e.name.substr(0, e.name.find('.'))].push_back(&e);
  for (const auto& [group, entries] : groups) {
    int64_t count = 0;
    for (const auto* e : entries) count += shape_numel(e->shape);
    out << "[" << group << "] " << entries.size() << " tensors, " << count << " values\n";
    for (const auto* e : entries) {
      out << "  " << e->name << "  " << (e->dtype == ckpt::DType::kF32 ? "f32" : "f64") << "  "
          << shape_str(e->shape) << "\n";
    }
  }
  return 0;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  log::init_from_env();
  Options o;
  CLI::App app{"Road freespace segmentation: train, evaluate, run and benchmark", "rod_cli"};
  app.require_subcommand(1, 1);

  const auto preset_check = CLI::IsMember(preset_names());
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--preset", o.preset, "Model preset")->check(preset_check);
    sub->add_option("--checkpoint", o.checkpoint, "Model archive");
    sub->add_option("--threads", o.threads, "Kernel threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", o.seed, "Random seed");
  };

  auto* train = app.add_subcommand("train", "Train the decoder from a key-value config");
  add_common(train);
  train->add_option("--config", o.config, "Training config file")->check(CLI::ExistingFile);
  train->add_option("--dataset-root", o.dataset_root, "Dataset directory");
  train->add_option("--out-dir", o.out_dir, "Where model.rodckpt and loss.csv go");
  train->add_option("--layout", o.layout, "default, orfd or a layout file");
  train->add_flag("--strict", o.strict, "Fail on unpaired images or masks");

  auto* eval = app.add_subcommand("eval", "Evaluate a model on a dataset");
  add_common(eval);
  eval->add_flag("--random-weights", o.random_weights, "Use a randomly initialized model");
  eval->add_option("--dataset-root", o.dataset_root, "Dataset directory");
  eval->add_option("--split", o.split, "Split label for reports");
  eval->add_option("--out-dir", o.out_dir, "Where metrics.csv goes");
  eval->add_option("--layout", o.layout, "default, orfd or a layout file");
  eval->add_flag("--strict", o.strict, "Fail on unpaired images or masks");

  auto* infer = app.add_subcommand("infer", "Predict freespace masks for images");
  add_common(infer);
  infer->add_flag("--random-weights", o.random_weights, "Use a randomly initialized model");
  infer->add_option("inputs", o.inputs, "PNG files or directories")->required();
  infer->add_option("--out-dir", o.out_dir, "Output directory");
  infer->add_option("--mode", o.mode, "mask, overlay or both");
  infer->add_option("--alpha", o.alpha, "Overlay opacity")->check(CLI::Range(0.0, 1.0));

  auto* bench = app.add_subcommand("bench", "Measure per-stage inference latency");
  add_common(bench);
  bench->add_flag("--random-weights", o.random_weights, "Use a randomly initialized model");
  bench->add_option("--iters", o.iters, "Timed iterations");
  bench->add_option("--warmup", o.warmup, "Untimed iterations");
  bench->add_option("--width", o.width, "Source frame width (default: model input size)");
  bench->add_option("--height", o.height, "Source frame height (default: model input size)");
  bench->add_flag("--include-io", o.include_io, "Read the frame from disk and write the mask");
  bench->add_option("--out-dir", o.out_dir, "Where latency.csv goes");

  auto* inspect = app.add_subcommand("inspect-ckpt", "List the tensors of a model archive");
  inspect->add_option("archive", o.inputs, "Archive path")->expected(0, 1);
  inspect->add_option("--checkpoint", o.checkpoint, "Archive path");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return static_cast<int>(ExitCode::kUsage);
  }

  try {
    kernels::set_num_threads(o.threads);
    if (train->parsed()) return run_train(o, out);
    if (eval->parsed()) return run_eval(o, out, err);
    if (infer->parsed()) return run_infer(o, out);
    if (bench->parsed()) return run_bench(o, out);
    return run_inspect(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.exit_code());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  }
}

}  // namespace rod
