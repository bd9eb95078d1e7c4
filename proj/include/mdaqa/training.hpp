#pragma once

// Span loss with the mask sparsity term, grouped-learning-rate SGD with
// optional snapshot gating, and the source-domain training loop.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "mdaqa/mask_module.hpp"
#include "mdaqa/model.hpp"
#include "mdaqa/qa_task.hpp"

namespace mdaqa {

struct LossBreakdown {
  double ce = 0.0;
  double sparsity = 0.0;
  double total = 0.0;
};

struct OptimizerConfig {
  double lr_mask = 0.1;      // N, W_f, b_f, W_h, b_h
  double lr_encoder = 0.01;  // every encoder tensor
  double lambda = 0.75;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;  // N_s
  // Per-epoch probability that a context token is replaced by <unk>.
  double token_dropout = 0.2;
  std::uint64_t seed = 1;

  bool operator==(const OptimizerConfig&) const = default;
};

struct LossResult {
  LossBreakdown loss;
  RealMatrix grad_logits;  // d ce / d logits; zero outside the context interval
};

/// ce = (CE(start) + CE(end)) / 2 over position-wise softmaxes restricted to
/// `context`; sparsity = lambda * sum(mask) / b. Throws LabelError when the
/// gold span is not inside `context`.
LossResult qa_loss(const RealMatrix& logits, SpanLabel gold, const RealVector& mask, double lambda,
                   IndexInterval context);

/// One SGD step: W <- W - lr_group * g, with g gated by `gate` when present.
void apply_updates(QaModel& model, const ModelGrads& grads, double lr_mask, double lr_encoder,
                   const MaskSnapshot* gate = nullptr);

/// Observes each optimizer step: raw batch gradient and the gradient actually
/// applied (after gating).
using StepHook = std::function<void(const ModelGrads& raw, const ModelGrads& applied)>;

struct LabelledExample {
  const QASample* sample;
  SpanLabel label;  // context coordinates
};

struct SgdPass {
  double lr_mask = 0.1;
  double lr_encoder = 0.01;
  double lambda = 0.75;
  std::size_t batch_size = 32;
  const MaskSnapshot* gate = nullptr;
  StepHook hook;
};

/// One shuffled pass of mini-batch SGD over `examples`; returns the mean
/// per-sample loss measured during the pass.
LossBreakdown sgd_pass(QaModel& model, std::span<const LabelledExample> examples,
                       const SgdPass& pass, SeededRng& shuffle_rng);

/// Mean loss and its exact gradient over a batch (no update).
LossBreakdown batch_loss_and_grads(const QaModel& model, std::span<const LabelledExample> batch,
                                   double lambda, ModelGrads& grads);

struct EpochLog {
  std::size_t epoch = 0;
  LossBreakdown mean;
  double active_fraction = 0.0;
};

struct SourceTrainingResult {
  std::optional<MaskSnapshot> snapshot;  // absent when the mask is disabled
  std::vector<EpochLog> log;
};

/// N_s epochs of ungated mini-batch SGD on labelled source samples, then a
/// mask snapshot. Throws DataError on an unlabelled sample.
SourceTrainingResult train_source(QaModel& model, const std::vector<QASample>& source,
                                  const OptimizerConfig& cfg);

}  // namespace mdaqa
