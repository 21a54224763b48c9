#include <fstream>

#include "doctest.h"
#include "rod/checkpoint.hpp"
#include "rod/dataset.hpp"
#include "rod/error.hpp"
#include "rod/image_io.hpp"
#include "rod/kv_config.hpp"
#include "support.hpp"

using namespace rod;
using rod::testing::ScratchDir;

namespace fs = std::filesystem;

namespace {

Image8 gradient_image(int64_t w, int64_t h, int64_t channels) {
  Image8 img(w, h, channels);
  for (size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<uint8_t>((i * 37) % 256);
  return img;
}

void write_pair(const fs::path& root, const std::string& image_rel, const std::string& mask_rel) {
  if (!image_rel.empty()) {
    fs::create_directories((root / image_rel).parent_path());
    write_png(root / image_rel, gradient_image(6, 4, 3));
  }
  if (!mask_rel.empty()) {
    fs::create_directories((root / mask_rel).parent_path());
    write_png(root / mask_rel, Image8(6, 4, 1, 255));
  }
}

std::vector<uint8_t> slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("key-value config parsing") {
  const auto kv = KeyValueConfig::parse("# comment\n preset = desk \nlr0=0.01\n\nstrict = true\n");
  CHECK(kv.get_or("preset", "") == "desk");
  CHECK(kv.get_double("lr0", 0) == 0.01);
  CHECK(kv.get_bool("strict", false));
  CHECK(kv.get_int("total_steps", 7) == 7);
  CHECK_THROWS_AS(KeyValueConfig::parse("no equals sign here"), DataError);
  CHECK_THROWS(KeyValueConfig::parse("lr0 = abc").get_double("lr0", 0));
}

TEST_CASE("png round trip for gray and rgb") {
  ScratchDir dir("png");
  for (int64_t c : {1, 3}) {
    const auto img = gradient_image(7, 5, c);
    const auto path = dir / ("img" + std::to_string(c) + ".png");
    write_png(path, img);
    const auto back = read_png(path);
    CHECK(back.width == 7);
    CHECK(back.height == 5);
    CHECK(back.channels == c);
    CHECK(back.data == img.data);
    const auto info = read_png_info(path);
    CHECK(info.width == 7);
    CHECK(info.height == 5);
  }
  CHECK_THROWS_AS(read_png(dir / "missing.png"), IoError);
}

TEST_CASE("index_dataset pairs and sorts by stem") {
  ScratchDir dir("index");
  for (const std::string s : {"c", "a", "b"}) write_pair(dir.path(), "images/" + s + ".png", "masks/" + s + ".png");
  const auto idx = data::index_dataset(dir.path(), {});
  REQUIRE(idx.size() == 3);
  CHECK(idx.samples[0].stem == "a");
  CHECK(idx.samples[2].stem == "c");
  CHECK(idx.samples[1].width == 6);
  CHECK(idx.samples[1].height == 4);
  // Same tree, same index.
  const auto again = data::index_dataset(dir.path(), {});
  for (size_t i = 0; i < 3; ++i) CHECK(again.samples[i].image == idx.samples[i].image);
}

TEST_CASE("index_dataset strict and lenient handling of orphans") {
  ScratchDir dir("orphan");
  write_pair(dir.path(), "images/a.png", "masks/a.png");
  write_pair(dir.path(), "images/b.png", "masks/b.png");
  write_pair(dir.path(), "images/lonely.png", "");
  try {
    data::index_dataset(dir.path(), {}, "test", true);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("lonely") != std::string::npos);
  }
  const auto idx = data::index_dataset(dir.path(), {}, "test", false);
  CHECK(idx.size() == 2);
  CHECK(idx.unmatched == std::vector<std::string>{"image:lonely"});
}

TEST_CASE("index_dataset with the ORFD layout") {
  ScratchDir dir("orfd");
  write_pair(dir.path(), "image_data/1623.png", "gt_image/1623_fillcolor.png");
  write_pair(dir.path(), "image_data/0042.png", "gt_image/0042_fillcolor.png");
  const auto idx = data::index_dataset(dir.path(), data::DatasetLayout::orfd());
  REQUIRE(idx.size() == 2);
  CHECK(idx.samples[0].stem == "0042");
  CHECK(idx.samples[0].mask.filename() == "0042_fillcolor.png");

  std::ofstream(dir / "layout.cfg") << "image_dir = image_data\nmask_dir = gt_image\nmask_glob = *_fillcolor.png\n"
                                       "stem_strip_suffix = _fillcolor\n";
  const auto loaded = data::DatasetLayout::load(dir / "layout.cfg");
  CHECK(data::index_dataset(dir.path(), loaded).size() == 2);
}

TEST_CASE("mask binarization thresholds and flips") {
  CHECK(data::binarize_mask(Image8(3, 2, 1, 255), 128).data == std::vector<uint8_t>(6, 1));
  CHECK(data::binarize_mask(Image8(3, 2, 1, 0), 128).data == std::vector<uint8_t>(6, 0));

  Image8 ramp(256, 1, 1);
  for (int i = 0; i < 256; ++i) ramp.data[static_cast<size_t>(i)] = static_cast<uint8_t>(i);
  const auto m = data::binarize_mask(ramp, 128);
  for (int i = 0; i < 256; ++i) CHECK(m.data[static_cast<size_t>(i)] == (i >= 128 ? 1 : 0));

  Image8 rgb = gradient_image(5, 4, 3);
  Image8 flipped(5, 4, 3);
  for (int64_t y = 0; y < 4; ++y)
    for (int64_t x = 0; x < 5; ++x)
      for (int64_t c = 0; c < 3; ++c) flipped.at(y, 4 - x, c) = rgb.at(y, x, c);
  const auto a = data::binarize_mask(rgb, 128), b = data::binarize_mask(flipped, 128);
  for (int64_t y = 0; y < 4; ++y)
    for (int64_t x = 0; x < 5; ++x) CHECK(a.at(y, x) == b.at(y, 4 - x));
}

TEST_CASE("preprocess normalizes and resizes") {
  data::PreprocessConfig cfg;
  cfg.input_size = 8;
  const Image8 white(8, 8, 3, 255);
  const auto w = data::preprocess_image<float>(white, cfg);
  for (float v : w.span()) CHECK(v == doctest::Approx(1.0f));
  const auto t = data::preprocess_image<double>(gradient_image(13, 7, 3), cfg);
  CHECK(t.shape() == Shape{1, 3, 8, 8});
  CHECK_THROWS_AS(data::preprocess_image<float>(Image8(8, 8, 1), cfg), DataError);

  // An S x S image needs no resize: values map straight through the affine normalization.
  const auto img = gradient_image(8, 8, 3);
  const auto n = data::preprocess_image<double>(img, cfg);
  for (int64_t y = 0; y < 8; ++y)
    for (int64_t x = 0; x < 8; ++x)
      for (int64_t c = 0; c < 3; ++c) {
        CHECK(n.at(0, c, y, x) == doctest::Approx((img.at(y, x, c) / 255.0 - 0.5) / 0.5).epsilon(1e-12));
      }
}

TEST_CASE("export_prediction mask and overlay modes") {
  const Mask ones{2, 3, std::vector<uint8_t>(6, 1)};
  const auto img = gradient_image(3, 2, 3);
  CHECK(data::render_prediction(ones, img, data::ExportMode::kMask).data == std::vector<uint8_t>(6, 255));

  const Mask zeros{2, 3, std::vector<uint8_t>(6, 0)};
  CHECK(data::render_prediction(zeros, img, data::ExportMode::kOverlay).data == img.data);

  Mask checker{4, 4, std::vector<uint8_t>(16)};
  for (int64_t i = 0; i < 16; ++i) checker.data[static_cast<size_t>(i)] = static_cast<uint8_t>(((i / 4) + (i % 4)) % 2);
  const auto src = gradient_image(4, 4, 3);
  const auto out = data::render_prediction(checker, src, data::ExportMode::kOverlay);
  const uint8_t tint[3] = {0, 255, 0};
  for (int64_t y = 0; y < 4; ++y)
    for (int64_t x = 0; x < 4; ++x)
      for (int64_t c = 0; c < 3; ++c) {
        const uint8_t s = src.at(y, x, c);
        const auto want = checker.at(y, x) ? static_cast<uint8_t>(std::lround(0.5 * s + 0.5 * tint[c])) : s;
        CHECK(out.at(y, x, c) == want);
      }

  ScratchDir dir("export");
  data::export_prediction(checker, src, dir / "m.png", data::ExportMode::kMask);
  const auto back = read_png(dir / "m.png");
  CHECK(back.channels == 1);
  CHECK(data::binarize_mask(back, 128).data == checker.data);
  CHECK_THROWS_AS(data::render_prediction(checker, img, data::ExportMode::kOverlay), DataError);
}

TEST_CASE("checkpoint round trip is byte identical and lossless") {
  ScratchDir dir("ckpt");
  const auto model = Model<float>::random(desk_preset(), 1);
  ckpt::save_checkpoint(model, dir / "a.rodckpt");
  const auto loaded = ckpt::load_checkpoint<float>(dir / "a.rodckpt");
  ckpt::save_checkpoint(loaded, dir / "b.rodckpt");
  CHECK(slurp(dir / "a.rodckpt") == slurp(dir / "b.rodckpt"));
  CHECK(loaded.config == model.config);
  for (const auto& n : model.parameter_names()) {
    CHECK(const_cast<Model<float>&>(model).parameter(n) == const_cast<Model<float>&>(loaded).parameter(n));
  }

  const auto bytes = slurp(dir / "a.rodckpt");
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "RODCKPT1");
  CHECK(!fs::exists(dir / "a.rodckpt.tmp"));

  const auto md = Model<double>::random(testing::tiny_config(), 2);
  ckpt::save_checkpoint(md, dir / "d.rodckpt");
  const auto archive = ckpt::read_archive(dir / "d.rodckpt");
  CHECK(archive.entries.front().dtype == ckpt::DType::kF64);
  const auto md2 = ckpt::load_checkpoint<double>(dir / "d.rodckpt");
  CHECK(md2.decoder.head.weight == md.decoder.head.weight);
}

TEST_CASE("checkpoint errors name the problem") {
  const auto model = Model<float>::random(testing::tiny_config(), 3);
  auto archive = ckpt::to_archive(model);
  archive.entries.erase(std::remove_if(archive.entries.begin(), archive.entries.end(),
                                       [](const auto& e) { return e.name == "decoder.usl1.conv2.weight"; }),
                        archive.entries.end());
  try {
    ckpt::from_archive<float>(archive);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("decoder.usl1.conv2.weight") != std::string::npos);
  }

  auto bytes = ckpt::encode(ckpt::to_archive(model));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(ckpt::decode(bad_magic), DataError);
  auto truncated = bytes;
  truncated.resize(truncated.size() - 4);
  CHECK_THROWS_AS(ckpt::decode(truncated), DataError);

  auto newer = ckpt::to_archive(model);
  newer.format_version = 2;
  try {
    ckpt::decode(ckpt::encode(newer));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }
}

TEST_CASE("encoder import through the translation table") {
  const ModelConfig cfg = testing::tiny_config();
  const auto source = Model<float>::random(cfg, 4);
  ckpt::Archive foreign;
  const int64_t P = cfg.pos_base_grid, C = cfg.embed_dim;
  source.visit([&](const std::string& name, const Tensor<float>& t) {
    if (name.rfind("encoder.", 0) != 0) return;
    std::string n = "image_encoder." + name.substr(8);
    n = std::regex_replace(n, std::regex(R"(patch_embed\.)"), "patch_embed.proj.");
    n = std::regex_replace(n, std::regex(R"(mlp\.fc1)"), "mlp.lin1");
    n = std::regex_replace(n, std::regex(R"(mlp\.fc2)"), "mlp.lin2");
    n = std::regex_replace(n, std::regex(R"(neck\.conv1)"), "neck.0");
    n = std::regex_replace(n, std::regex(R"(neck\.norm1)"), "neck.1");
    n = std::regex_replace(n, std::regex(R"(neck\.conv2)"), "neck.2");
    n = std::regex_replace(n, std::regex(R"(neck\.norm2)"), "neck.3");
    if (name == "encoder.pos_embed") {
      // Flat table with a leading class-token row.
      Tensor<float> flat({1, P * P + 1, C}, -9.0f);
      std::copy(t.span().begin(), t.span().end(), flat.data() + C);
      foreign.add(n, flat);
    } else {
      foreign.add(n, t);
    }
  });
  foreign.add("image_encoder.unused.thing", Tensor<float>({2}));

  auto target = Model<float>::zeros(cfg);
  const auto report = ckpt::import_encoder(target, foreign, ckpt::sam_translation_table());
  CHECK(report.missing.empty());
  CHECK(report.ignored == std::vector<std::string>{"image_encoder.unused.thing"});
  bool same = true;
  target.encoder.visit([&](const std::string& name, Tensor<float>& t) {
    same = same && t == const_cast<Model<float>&>(source).parameter(name);
  });
  CHECK(same);

  ckpt::Archive wrong;
  wrong.add("image_encoder.patch_embed.proj.weight", Tensor<float>({1, 3, 8, 8}));
  CHECK_THROWS_AS(ckpt::import_encoder(target, wrong, ckpt::sam_translation_table()), DataError);
}
