#include "mdaqa/selftrain.hpp"

#include "mdaqa/parallel.hpp"

namespace mdaqa {

ScoredPrediction best_span(const RealVector& p_start, const RealVector& p_end,
                           std::size_t max_answer_len) {
  if (p_start.size() != p_end.size() || p_start.size() == 0) {
    throw ShapeError("best_span: probability vectors must be non-empty and equal length");
  }
  const auto n = static_cast<std::size_t>(p_start.size());
  ScoredPrediction best{{0, 0}, -1.0};
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t last = std::min(n, s + max_answer_len);
    for (std::size_t e = s; e < last; ++e) {
      const double score = p_start(static_cast<Eigen::Index>(s)) * p_end(static_cast<Eigen::Index>(e));
      if (score > best.score) best = {{s, e}, score};
    }
  }
  return best;
}

ScoredPrediction predict_span(const QaModel& model, const QASample& sample) {
  const auto [p_start, p_end] = model.span_probabilities(sample);
  return best_span(p_start, p_end, model.config().max_answer_len);
}

PseudoLabeledSet generate_pseudo_labels(const QaModel& model, const std::vector<QASample>& targets,
                                        double alpha, std::size_t round) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw DomainError("generate_pseudo_labels: alpha must lie in (0,1), got " + std::to_string(alpha));
  }
  PseudoLabeledSet set;
  set.round = round;
  set.alpha = alpha;
  set.candidates = targets.size();
  std::vector<ScoredPrediction> preds(targets.size());
  parallel_for(targets.size(), [&](std::size_t i) { preds[i] = predict_span(model, targets[i]); });
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const ScoredPrediction& p = preds[i];
    if (p.score > alpha) {
      QASample labelled = targets[i];
      labelled.answer = p.span;
      set.entries.push_back(std::move(labelled));
      set.scores.push_back(p.score);
    }
  }
  return set;
}

void validate(const AdaptConfig& cfg) {
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) {
    throw ConfigError("adapt: alpha must lie in (0,1), got " + std::to_string(cfg.alpha));
  }
  if (cfg.rounds < 1) throw ConfigError("adapt: rounds must be at least 1");
  if (!(cfg.lr_mask > 0.0) || !(cfg.lr_encoder > 0.0)) {
    throw ConfigError("adapt: learning rates must be positive");
  }
  if (cfg.batch_size == 0) throw ConfigError("adapt: batch_size must be positive");
}

std::vector<RoundLog> adapt(QaModel& model, const MaskSnapshot* snapshot,
                            const std::vector<QASample>& targets, const AdaptConfig& cfg,
                            const StepHook& hook) {
  validate(cfg);
  if (model.mask().enabled() && snapshot == nullptr) {
    throw PreconditionError("adapt: no mask snapshot; train on the source domain first");
  }
  for (const auto& t : targets) {
    if (t.answer) throw PreconditionError("adapt: target sample '" + t.id + "' carries a label");
  }

  SgdPass pass;
  pass.lr_mask = cfg.lr_mask;
  pass.lr_encoder = cfg.lr_encoder;
  pass.lambda = cfg.lambda;
  pass.batch_size = cfg.batch_size;
  pass.gate = model.mask().enabled() ? snapshot : nullptr;
  pass.hook = hook;

  SeededRng shuffle = SeededRng(cfg.seed).stream("shuffle.adapt");
  std::vector<RoundLog> log;
  for (std::size_t round = 1; round <= cfg.rounds; ++round) {
    const PseudoLabeledSet set = generate_pseudo_labels(model, targets, cfg.alpha, round);
    RoundLog r;
    r.round = round;
    r.n_pseudo = set.entries.size();
    r.qualified_fraction = set.qualified_fraction();
    if (set.entries.empty()) {
      r.skipped = true;
      log.push_back(r);
      continue;
    }
    double score_sum = 0.0;
    for (const double s : set.scores) score_sum += s;
    r.mean_score = score_sum / static_cast<double>(set.scores.size());

    std::vector<LabelledExample> examples;
    examples.reserve(set.entries.size());
    for (const auto& e : set.entries) examples.push_back({&e, *e.answer});
    r.mean = sgd_pass(model, examples, pass, shuffle);
    log.push_back(r);
  }
  return log;
}

}  // namespace mdaqa
