#pragma once

// Target-domain adaptation: scored span decoding, confidence-filtered pseudo
// labels, and the gated self-training loop.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mdaqa/mask_module.hpp"
#include "mdaqa/model.hpp"
#include "mdaqa/qa_task.hpp"
#include "mdaqa/training.hpp"

namespace mdaqa {

struct ScoredPrediction {
  SpanLabel span;
  double score = 0.0;  // p_start[span.start] * p_end[span.end]
};

/// argmax of p_start[s] * p_end[e] over s <= e, e - s < max_answer_len.
/// Ties go to the smaller start, then the smaller end.
ScoredPrediction best_span(const RealVector& p_start, const RealVector& p_end,
                           std::size_t max_answer_len);

ScoredPrediction predict_span(const QaModel& model, const QASample& sample);

struct PseudoLabeledSet {
  std::vector<QASample> entries;  // copies carrying the predicted span as answer
  std::vector<double> scores;     // generating score of each entry
  std::size_t candidates = 0;     // number of target samples scored
  std::size_t round = 0;
  double alpha = 0.0;

  double qualified_fraction() const {
    return candidates ? static_cast<double>(entries.size()) / static_cast<double>(candidates) : 0.0;
  }
};

/// Keeps exactly the targets whose score is strictly above alpha, in input order.
PseudoLabeledSet generate_pseudo_labels(const QaModel& model, const std::vector<QASample>& targets,
                                        double alpha, std::size_t round = 0);

struct AdaptConfig {
  double alpha = 0.6;
  std::size_t rounds = 5;  // N_t
  double lr_mask = 0.5;
  double lr_encoder = 0.02;
  double lambda = 0.75;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;

  bool operator==(const AdaptConfig&) const = default;
};

void validate(const AdaptConfig& cfg);

struct RoundLog {
  std::size_t round = 0;
  std::size_t n_pseudo = 0;
  double qualified_fraction = 0.0;
  double mean_score = 0.0;  // over accepted pseudo labels; 0 when none
  LossBreakdown mean;
  bool skipped = false;
};

/// Runs N_t rounds of pseudo-labelling with the current model followed by one
/// gated SGD pass over the accepted set. `snapshot` may only be null for a
/// model whose mask is disabled; then updates are ungated.
std::vector<RoundLog> adapt(QaModel& model, const MaskSnapshot* snapshot,
                            const std::vector<QASample>& targets, const AdaptConfig& cfg,
                            const StepHook& hook = {});

}  // namespace mdaqa
