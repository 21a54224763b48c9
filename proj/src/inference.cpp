#include "rod/inference.hpp"

#include "rod/encoder.hpp"

namespace rod {

template <typename T>
Mask logits_to_mask(const Tensor<T>& logits, int64_t b) {
  Mask m;
  m.height = logits.dim(2);
  m.width = logits.dim(3);
  m.data = decoder::argmax_classes(logits, b);
  return m;
}

template <typename T>
Mask predict_mask(const Model<T>& model, const Image8& image, const data::PreprocessConfig& cfg,
                  decoder::OutputSize out_size) {
  if (out_size.height <= 0 || out_size.width <= 0) out_size = {image.height, image.width};
  const Tensor<T> input = data::preprocess_image<T>(image, cfg);
  const auto enc = encoder::encoder_forward(input, model.config, model.encoder);
  const Tensor<T> logits = decoder::decoder_forward(enc, model.config, model.decoder, out_size);
  return logits_to_mask(logits, 0);
}

template Mask logits_to_mask(const Tensor<float>&, int64_t);
template Mask logits_to_mask(const Tensor<double>&, int64_t);
template Mask predict_mask(const Model<float>&, const Image8&, const data::PreprocessConfig&,
                           decoder::OutputSize);
template Mask predict_mask(const Model<double>&, const Image8&, const data::PreprocessConfig&,
                           decoder::OutputSize);

}  // namespace rod
