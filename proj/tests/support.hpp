#pragma once

// Shared fixtures for the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mdaqa/model.hpp"
#include "mdaqa/qa_task.hpp"
#include "mdaqa/selftrain.hpp"
#include "mdaqa/training.hpp"

namespace mdaqa::testing {

inline ModelConfig tiny_model_config(std::size_t window = 1, double sharpness = 100.0) {
  ModelConfig cfg;
  cfg.encoder.vocab_size = 24;
  cfg.encoder.embed_dim = 4;
  cfg.encoder.output_dim = 5;
  cfg.encoder.window = window;
  cfg.mask.input_dim = 5;
  cfg.mask.bottleneck = 6;
  cfg.mask.sharpness = sharpness;
  cfg.max_input_len = 32;
  cfg.max_answer_len = 4;
  return cfg;
}

/// Random sample over ids [4, vocab) with a random gold span.
inline QASample random_sample(SeededRng& rng, std::size_t vocab, std::size_t ctx_len,
                              std::size_t q_len) {
  QASample s;
  s.id = "r" + std::to_string(rng.next_u64() % 100000);
  for (std::size_t i = 0; i < ctx_len; ++i) s.context.push_back(static_cast<TokenId>(rng.between(4, vocab - 1)));
  for (std::size_t i = 0; i < q_len; ++i) s.question.push_back(static_cast<TokenId>(rng.between(4, vocab - 1)));
  const auto start = static_cast<std::size_t>(rng.below(ctx_len));
  const auto end = std::min(ctx_len - 1, start + static_cast<std::size_t>(rng.below(3)));
  s.answer = SpanLabel{start, end};
  return s;
}

/// Overwrites every parameter with random values so that no gradient path is
/// trivially zero. Mask logits are drawn from +-logit_range.
inline void randomize(QaModel& model, SeededRng& rng, double logit_range) {
  auto& enc = model.encoder().params();
  enc.embedding = sample_uniform(rng, -1.0, 1.0, static_cast<std::size_t>(enc.embedding.rows()),
                                 static_cast<std::size_t>(enc.embedding.cols()));
  enc.weight = sample_uniform(rng, -0.5, 0.5, static_cast<std::size_t>(enc.weight.rows()),
                              static_cast<std::size_t>(enc.weight.cols()));
  enc.bias = sample_uniform(rng, -0.5, 0.5, static_cast<std::size_t>(enc.bias.size()));
  auto& m = model.mask().params();
  m.logits = sample_uniform(rng, -logit_range, logit_range, static_cast<std::size_t>(m.logits.size()));
  m.bottleneck_weight = sample_uniform(rng, -0.7, 0.7, static_cast<std::size_t>(m.bottleneck_weight.rows()),
                                       static_cast<std::size_t>(m.bottleneck_weight.cols()));
  m.bottleneck_bias = sample_uniform(rng, -0.5, 0.5, static_cast<std::size_t>(m.bottleneck_bias.size()));
  m.head_weight = sample_uniform(rng, -0.7, 0.7, static_cast<std::size_t>(m.head_weight.rows()),
                                 static_cast<std::size_t>(m.head_weight.cols()));
  m.head_bias = sample_uniform(rng, -0.5, 0.5, static_cast<std::size_t>(m.head_bias.size()));
}

inline double sample_loss(const QaModel& model, const QASample& s, double lambda) {
  ForwardState st;
  model.forward(s, &st);
  const IndexInterval ctx{0, static_cast<std::size_t>(st.logits.rows())};
  return qa_loss(st.logits, *s.answer, st.mask.mask, lambda, ctx).loss.total;
}

inline ModelGrads sample_grads(const QaModel& model, const QASample& s, double lambda) {
  ForwardState st;
  model.forward(s, &st);
  const IndexInterval ctx{0, static_cast<std::size_t>(st.logits.rows())};
  const LossResult lr = qa_loss(st.logits, *s.answer, st.mask.mask, lambda, ctx);
  ModelGrads g = model.zero_grads();
  model.backward(st, lr.grad_logits, g);
  model.mask().add_sparsity_grad(lambda, g.mask);
  return g;
}

struct GradCheckResult {
  std::size_t checked = 0;
  std::size_t failed = 0;
  double worst_abs = 0.0;
  std::string worst_tensor;
};

/// Central differences over every entry of every tensor; an entry passes when
/// |analytic - numeric| <= abs_tol + rel_tol * max(|analytic|, |numeric|).
inline GradCheckResult check_gradients(QaModel& model, const QASample& s, double lambda,
                                       double eps = 1e-5, double rel_tol = 1e-4,
                                       double abs_tol = 1e-7) {
  GradCheckResult res;
  ModelGrads analytic = sample_grads(model, s, lambda);

  auto visit = [&](std::string_view name, auto& tensor, const auto& grad) {
    for (Eigen::Index i = 0; i < tensor.size(); ++i) {
      const double orig = tensor.data()[i];
      tensor.data()[i] = orig + eps;
      const double up = sample_loss(model, s, lambda);
      tensor.data()[i] = orig - eps;
      const double down = sample_loss(model, s, lambda);
      tensor.data()[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = grad.data()[i];
      const double diff = std::abs(a - numeric);
      ++res.checked;
      if (diff > abs_tol + rel_tol * std::max(std::abs(a), std::abs(numeric))) {
        ++res.failed;
        if (diff > res.worst_abs) {
          res.worst_abs = diff;
          res.worst_tensor = std::string(name);
        }
      }
    }
  };

  auto& enc = model.encoder().params();
  visit("encoder.embedding", enc.embedding, analytic.encoder.embedding);
  visit("encoder.weight", enc.weight, analytic.encoder.weight);
  visit("encoder.bias", enc.bias, analytic.encoder.bias);
  // Mutable mask access bumps the cache generation; forward() refreshes it.
  auto& m = model.mask().params();
  visit("mask.logits", m.logits, analytic.mask.logits);
  visit("mask.bottleneck_weight", m.bottleneck_weight, analytic.mask.bottleneck_weight);
  visit("mask.bottleneck_bias", m.bottleneck_bias, analytic.mask.bottleneck_bias);
  visit("mask.head_weight", m.head_weight, analytic.mask.head_weight);
  visit("mask.head_bias", m.head_bias, analytic.mask.head_bias);
  return res;
}

/// One instance of the gradient check family used by the tests: instance i
/// alternates between saturated and near-zero mask logits.
inline GradCheckResult gradient_instance(std::uint64_t i, std::size_t window = 1) {
  SeededRng rng = SeededRng(1000 + i).stream("gradcheck");
  QaModel model(tiny_model_config(window), i);
  randomize(model, rng, i % 2 == 0 ? 0.02 : 0.5);
  const auto ctx_len = static_cast<std::size_t>(rng.between(3, 9));
  const auto q_len = static_cast<std::size_t>(rng.between(1, 4));
  const QASample s = random_sample(rng, 24, ctx_len, q_len);
  return check_gradients(model, s, 0.75);
}

/// Bitwise equality of every parameter tensor.
inline bool params_equal(const QaModel& a, const QaModel& b) {
  const auto& ea = a.encoder().params();
  const auto& eb = b.encoder().params();
  const auto& ma = a.mask().params();
  const auto& mb = b.mask().params();
  return ea.embedding == eb.embedding && ea.weight == eb.weight && ea.bias == eb.bias &&
         ma.logits == mb.logits && ma.bottleneck_weight == mb.bottleneck_weight &&
         ma.bottleneck_bias == mb.bottleneck_bias && ma.head_weight == mb.head_weight &&
         ma.head_bias == mb.head_bias;
}

/// Small source corpus plus a default-sized model whose input length matches it.
inline ModelConfig default_model_for(const DomainSpec& spec) {
  ModelConfig cfg;
  cfg.encoder.vocab_size = spec.vocab_size;
  cfg.max_input_len = spec.max_input_len;
  return cfg;
}

/// Exhaustive argmax of p_s[s] * p_e[e] over every (s, e) pair, with the
/// lexicographically smallest pair winning ties.
inline ScoredPrediction brute_force_span(const RealVector& ps, const RealVector& pe,
                                         std::size_t max_len) {
  ScoredPrediction best{{0, 0}, -1.0};
  const auto n = static_cast<std::size_t>(ps.size());
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t e = 0; e < n; ++e) {
      if (e < s || e - s >= max_len) continue;
      const double v = ps(static_cast<Eigen::Index>(s)) * pe(static_cast<Eigen::Index>(e));
      const bool better = v > best.score ||
                          (v == best.score && (s < best.span.start ||
                                               (s == best.span.start && e < best.span.end)));
      if (better) best = {{s, e}, v};
    }
  }
  return best;
}

/// Exact template matcher: the answer starts right after the one occurrence of
/// the question's template and extends over consecutive answer-class tokens.
inline std::optional<SpanLabel> oracle_span(const QASample& s, const DomainVocabulary& vocab) {
  for (const auto& tpl : vocab.templates) {
    if (std::search(s.question.begin(), s.question.end(), tpl.begin(), tpl.end()) ==
        s.question.end()) {
      continue;
    }
    const auto it = std::search(s.context.begin(), s.context.end(), tpl.begin(), tpl.end());
    if (it == s.context.end()) continue;
    const auto start = static_cast<std::size_t>(it - s.context.begin()) + tpl.size();
    std::size_t end = start;
    while (end + 1 < s.context.size() && vocab.is_answer_token(s.context[end + 1])) ++end;
    return SpanLabel{start, end};
  }
  return std::nullopt;
}

}  // namespace mdaqa::testing
