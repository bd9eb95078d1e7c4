#include "mdaqa/model.hpp"

namespace mdaqa {

namespace {

ToyEncoder<double> init_encoder(const ModelConfig& cfg, std::uint64_t seed) {
  SeededRng rng = SeededRng(seed).stream("init.encoder");
  return ToyEncoder<double>(cfg.encoder, rng);
}

MaskModule<double> init_mask(const ModelConfig& cfg, std::uint64_t seed) {
  SeededRng rng = SeededRng(seed).stream("init.mask");
  return MaskModule<double>(cfg.mask, rng);
}

}  // namespace

ModelConfig QaModel::checked(ModelConfig cfg) {
  if (cfg.mask.input_dim != cfg.encoder.output_dim) {
    throw ConfigError("model: mask input width " + std::to_string(cfg.mask.input_dim) +
                      " differs from encoder output width " + std::to_string(cfg.encoder.output_dim));
  }
  if (cfg.max_answer_len == 0) throw ConfigError("model: max_answer_len must be positive");
  return cfg;
}

QaModel::QaModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(checked(cfg)), encoder_(init_encoder(cfg_, seed)), mask_(init_mask(cfg_, seed)) {}

QaModel::QaModel(const ModelConfig& cfg, ToyEncoderParams<double> encoder, MaskParams<double> mask)
    : cfg_(checked(cfg)),
      encoder_(cfg_.encoder, std::move(encoder)),
      mask_(cfg_.mask, std::move(mask)) {}

RealMatrix QaModel::forward(const QASample& sample, ForwardState* state) const {
  ForwardState local;
  ForwardState& s = state ? *state : local;
  s.input = build_input(sample, cfg_.max_input_len);
  const RealMatrix features = encoder_.encode(s.input, &s.encoder);
  s.logits = mask_.forward(features, &s.mask);
  return s.logits;
}

void QaModel::backward(const ForwardState& state, const RealMatrix& grad_logits,
                       ModelGrads& grads) const {
  const RealMatrix grad_features = mask_.backward(grad_logits, state.mask, grads.mask);
  encoder_.backward(state.input, state.encoder, grad_features, grads.encoder);
}

std::pair<RealVector, RealVector> QaModel::span_probabilities(const QASample& sample) const {
  const RealMatrix logits = forward(sample);
  const IndexInterval all{0, static_cast<std::size_t>(logits.rows())};
  return {softmax_positions(logits.col(0), all), softmax_positions(logits.col(1), all)};
}

}  // namespace mdaqa
