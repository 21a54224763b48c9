#pragma once

#include "rod/dataset.hpp"
#include "rod/decoder.hpp"
#include "rod/image_io.hpp"
#include "rod/mask.hpp"
#include "rod/params.hpp"

namespace rod {

template <typename T>
data::PreprocessConfig preprocess_config_for(const Model<T>& model) {
  data::PreprocessConfig cfg;
  cfg.input_size = model.config.input_size;
  return cfg;
}

// Full pipeline on one RGB frame: preprocess, encoder, decoder with logits
// resized to `out_size` (the frame size when zero), argmax.
template <typename T>
Mask predict_mask(const Model<T>& model, const Image8& image, const data::PreprocessConfig& cfg,
                  decoder::OutputSize out_size = {});

// Argmax of batch item `b` as a Mask.
template <typename T>
Mask logits_to_mask(const Tensor<T>& logits, int64_t b = 0);

}  // namespace rod
