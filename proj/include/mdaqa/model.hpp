#pragma once

// Full span model: toy encoder g followed by the mask module (f, M, h).

#include <cstddef>
#include <cstdint>

#include "mdaqa/encoder.hpp"
#include "mdaqa/mask_module.hpp"
#include "mdaqa/numkernel.hpp"
#include "mdaqa/qa_task.hpp"

namespace mdaqa {

static_assert(FeatureExtractor<ToyEncoder<double>>);

struct ModelConfig {
  EncoderConfig encoder;
  MaskConfig mask;
  std::size_t max_input_len = 64;
  std::size_t max_answer_len = 8;

  bool operator==(const ModelConfig&) const = default;
};

/// Gradients for every parameter tensor of a QaModel.
struct ModelGrads {
  ToyEncoderParams<double> encoder;
  MaskParams<double> mask;

  void set_zero() {
    encoder.set_zero();
    mask.set_zero();
  }
  ModelGrads& operator+=(const ModelGrads& o) {
    encoder += o.encoder;
    mask += o.mask;
    return *this;
  }
  ModelGrads& operator*=(double s) {
    encoder *= s;
    mask *= s;
    return *this;
  }
};

struct ForwardState {
  ModelInput input;
  EncoderCache<double> encoder;
  MaskCache<double> mask;
  RealMatrix logits;  // context_len x 2 (start, end)
};

class QaModel {
 public:
  QaModel(const ModelConfig& cfg, std::uint64_t seed);
  QaModel(const ModelConfig& cfg, ToyEncoderParams<double> encoder, MaskParams<double> mask);

  const ModelConfig& config() const { return cfg_; }
  ToyEncoder<double>& encoder() { return encoder_; }
  const ToyEncoder<double>& encoder() const { return encoder_; }
  MaskModule<double>& mask() { return mask_; }
  const MaskModule<double>& mask() const { return mask_; }

  ModelGrads zero_grads() const { return {encoder_.zero_grads(), mask_.zero_grads()}; }

  /// Start/end logits over the (truncated) context tokens.
  RealMatrix forward(const QASample& sample, ForwardState* state = nullptr) const;
  void backward(const ForwardState& state, const RealMatrix& grad_logits, ModelGrads& grads) const;

  /// Position-wise start and end probabilities over context tokens.
  std::pair<RealVector, RealVector> span_probabilities(const QASample& sample) const;

 private:
  static ModelConfig checked(ModelConfig cfg);

  ModelConfig cfg_;
  ToyEncoder<double> encoder_;
  MaskModule<double> mask_;
};

}  // namespace mdaqa
