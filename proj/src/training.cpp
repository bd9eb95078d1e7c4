#include "mdaqa/training.hpp"

#include <numeric>

namespace mdaqa {

LossResult qa_loss(const RealMatrix& logits, SpanLabel gold, const RealVector& mask, double lambda,
                   IndexInterval context) {
  if (logits.cols() != 2) throw ShapeError("qa_loss: logits must be Lx2, got " + shape_string(logits));
  if (context.empty() || context.end > static_cast<std::size_t>(logits.rows())) {
    throw ShapeError("qa_loss: context interval outside logits of " + shape_string(logits));
  }
  if (gold.start > gold.end || !context.contains(gold.start) || !context.contains(gold.end)) {
    throw LabelError("qa_loss: gold span (" + std::to_string(gold.start) + "," +
                     std::to_string(gold.end) + ") outside context interval [" +
                     std::to_string(context.begin) + "," + std::to_string(context.end) + ")");
  }

  LossResult r;
  r.grad_logits = RealMatrix::Zero(logits.rows(), 2);
  const std::size_t targets[2] = {gold.start, gold.end};
  double ce = 0.0;
  for (Eigen::Index c = 0; c < 2; ++c) {
    const auto target = targets[c];
    ce -= log_softmax_at(logits.col(c), context, target);
    RealVector g = softmax_positions(logits.col(c), context);
    g(static_cast<Eigen::Index>(target)) -= 1.0;
    r.grad_logits.col(c) = 0.5 * g;
  }
  r.loss.ce = 0.5 * ce;
  r.loss.sparsity = mask.size() > 0 ? lambda * mask.sum() / static_cast<double>(mask.size()) : 0.0;
  r.loss.total = r.loss.ce + r.loss.sparsity;
  return r;
}

void apply_updates(QaModel& model, const ModelGrads& grads, double lr_mask, double lr_encoder,
                   const MaskSnapshot* gate) {
  auto& enc = model.encoder().params();
  // <unk> keeps its embedding so that ids never seen in training read like it.
  const RealVector unk = enc.embedding.row(special::kUnk).transpose();
  enc.embedding.noalias() -= lr_encoder * grads.encoder.embedding;
  enc.embedding.row(special::kUnk) = unk.transpose();
  enc.weight.noalias() -= lr_encoder * grads.encoder.weight;
  enc.bias.noalias() -= lr_encoder * grads.encoder.bias;

  const MaskParams<double> g = gate ? gate_grads(grads.mask, *gate) : grads.mask;
  auto& m = model.mask().params();
  if (model.mask().enabled()) m.logits.noalias() -= lr_mask * g.logits;
  m.bottleneck_weight.noalias() -= lr_mask * g.bottleneck_weight;
  m.bottleneck_bias.noalias() -= lr_mask * g.bottleneck_bias;
  m.head_weight.noalias() -= lr_mask * g.head_weight;
  m.head_bias.noalias() -= lr_mask * g.head_bias;
}

LossBreakdown batch_loss_and_grads(const QaModel& model, std::span<const LabelledExample> batch,
                                   double lambda, ModelGrads& grads) {
  LossBreakdown sum;
  if (batch.empty()) return sum;
  const double inv = 1.0 / static_cast<double>(batch.size());
  const double lam = model.mask().enabled() ? lambda : 0.0;
  ForwardState state;
  for (const auto& ex : batch) {
    model.forward(*ex.sample, &state);
    const IndexInterval ctx{0, static_cast<std::size_t>(state.logits.rows())};
    LossResult lr = qa_loss(state.logits, ex.label, state.mask.mask, lam, ctx);
    lr.grad_logits *= inv;
    model.backward(state, lr.grad_logits, grads);
    sum.ce += lr.loss.ce;
    sum.sparsity += lr.loss.sparsity;
    sum.total += lr.loss.total;
  }
  model.mask().add_sparsity_grad(lam, grads.mask);
  sum.ce *= inv;
  sum.sparsity *= inv;
  sum.total *= inv;
  return sum;
}

LossBreakdown sgd_pass(QaModel& model, std::span<const LabelledExample> examples,
                       const SgdPass& pass, SeededRng& shuffle_rng) {
  if (pass.batch_size == 0) throw ConfigError("sgd_pass: batch_size must be positive");
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle_rng.shuffle(std::span<std::size_t>(order));

  LossBreakdown total;
  ModelGrads grads = model.zero_grads();
  std::vector<LabelledExample> batch;
  batch.reserve(pass.batch_size);
  for (std::size_t begin = 0; begin < order.size(); begin += pass.batch_size) {
    const std::size_t end = std::min(order.size(), begin + pass.batch_size);
    batch.clear();
    for (std::size_t i = begin; i < end; ++i) batch.push_back(examples[order[i]]);

    grads.set_zero();
    const LossBreakdown l = batch_loss_and_grads(model, batch, pass.lambda, grads);
    const auto w = static_cast<double>(batch.size());
    total.ce += l.ce * w;
    total.sparsity += l.sparsity * w;
    total.total += l.total * w;

    if (pass.hook) {
      ModelGrads applied = grads;
      if (pass.gate) applied.mask = gate_grads(grads.mask, *pass.gate);
      pass.hook(grads, applied);
    }
    apply_updates(model, grads, pass.lr_mask, pass.lr_encoder, pass.gate);
  }
  if (!examples.empty()) {
    const auto n = static_cast<double>(examples.size());
    total.ce /= n;
    total.sparsity /= n;
    total.total /= n;
  }
  return total;
}

SourceTrainingResult train_source(QaModel& model, const std::vector<QASample>& source,
                                  const OptimizerConfig& cfg) {
  if (!(cfg.lr_mask > 0.0) || !(cfg.lr_encoder > 0.0)) {
    throw ConfigError("train_source: learning rates must be positive");
  }
  if (!(cfg.token_dropout >= 0.0 && cfg.token_dropout < 1.0)) {
    throw ConfigError("train_source: token_dropout must lie in [0,1)");
  }
  std::vector<LabelledExample> examples;
  examples.reserve(source.size());
  for (const auto& s : source) {
    if (!s.answer) throw DataError("train_source: sample '" + s.id + "' is unlabelled");
    examples.push_back({&s, *s.answer});
  }

  SgdPass pass;
  pass.lr_mask = cfg.lr_mask;
  pass.lr_encoder = cfg.lr_encoder;
  pass.lambda = cfg.lambda;
  pass.batch_size = cfg.batch_size;

  SourceTrainingResult result;
  SeededRng shuffle = SeededRng(cfg.seed).stream("shuffle.source");
  std::vector<QASample> dropped;
  SeededRng dropout = SeededRng(cfg.seed).stream("dropout.source");
  if (cfg.token_dropout > 0.0) dropped = source;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.token_dropout > 0.0) {
      for (std::size_t i = 0; i < source.size(); ++i) {
        dropped[i].context = source[i].context;
        for (auto& t : dropped[i].context) {
          if (dropout.uniform01() < cfg.token_dropout) t = special::kUnk;
        }
        examples[i].sample = &dropped[i];
      }
    }
    EpochLog log;
    log.epoch = epoch;
    log.mean = sgd_pass(model, examples, pass, shuffle);
    log.active_fraction = active_fraction(model.mask().mask_values());
    result.log.push_back(log);
  }
  if (model.mask().enabled()) result.snapshot = snapshot_mask(model.mask());
  return result;
}

}  // namespace mdaqa
