#pragma once

// JSON mappings for every configuration record. Missing keys keep their
// defaults, so partial config files act as overrides.

#include <json.hpp>

#include "mdaqa/model.hpp"
#include "mdaqa/qa_task.hpp"
#include "mdaqa/selftrain.hpp"
#include "mdaqa/training.hpp"

namespace mdaqa {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LengthRange, min, max)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DomainSpec, vocab_size, shift, trigger_templates,
                                                context_len_range, question_len_range,
                                                answer_len_range, canonical_vocab,
                                                answer_vocab_size, question_word_count,
                                                answer_token_noise, closing_marker_rate,
                                                closing_marker_rate_shifted,
                                                closing_token_count,
                                                max_input_len, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EncoderConfig, vocab_size, embed_dim, output_dim,
                                                window, init_range)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(MaskConfig, input_dim, bottleneck, sharpness,
                                                enabled, logit_init_range)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ModelConfig, encoder, mask, max_input_len,
                                                max_answer_len)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(OptimizerConfig, lr_mask, lr_encoder, lambda,
                                                batch_size, epochs, token_dropout, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AdaptConfig, alpha, rounds, lr_mask, lr_encoder,
                                                lambda, batch_size, seed)

}  // namespace mdaqa
