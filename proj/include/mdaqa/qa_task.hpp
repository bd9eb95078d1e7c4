#pragma once

// Extractive QA samples over integer token ids, model input packing, JSONL
// IO and the synthetic corpus generator with a source->target shift knob.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mdaqa/numkernel.hpp"

namespace mdaqa {

using TokenId = std::uint32_t;

namespace special {
inline constexpr TokenId kBos = 0;  // <s>
inline constexpr TokenId kEos = 1;  // </s>
inline constexpr TokenId kPad = 2;  // <pad>
inline constexpr TokenId kUnk = 3;  // <unk>
inline constexpr TokenId kCount = 4;
}  // namespace special

/// Inclusive token span in context coordinates.
struct SpanLabel {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start + 1; }
  bool operator==(const SpanLabel&) const = default;
};

struct QASample {
  std::string id;
  std::vector<TokenId> context;
  std::vector<TokenId> question;
  std::optional<SpanLabel> answer;

  bool operator==(const QASample&) const = default;
};

/// Throws ValidationError (naming the sample id) when an invariant is broken.
void validate_sample(const QASample& sample);

/// Packed encoder input: [<s>; question; </s></s>; context; </s>].
struct ModelInput {
  std::vector<TokenId> tokens;
  IndexInterval question;  // positions of question tokens in `tokens`
  IndexInterval context;   // positions of (possibly truncated) context tokens

  std::size_t context_len() const { return context.size(); }
  /// Packed-coordinate span -> context-coordinate span.
  SpanLabel to_context(SpanLabel packed) const {
    return {packed.start - context.begin, packed.end - context.begin};
  }
  SpanLabel to_packed(SpanLabel ctx) const {
    return {ctx.start + context.begin, ctx.end + context.begin};
  }
};

/// Truncates the context tail to fit `max_len`; throws InputError when the
/// question and delimiters alone leave no room for a context token.
ModelInput build_input(const QASample& sample, std::size_t max_len);

struct LengthRange {
  std::size_t min = 1;
  std::size_t max = 1;
  bool operator==(const LengthRange&) const = default;
};

/// Generator parameters for one domain.
///
/// Surface ids live in the canonical block [4, 4 + canonical_vocab). Template
/// tokens are listed explicitly; the remaining canonical ids are assigned in
/// ascending order to answer tokens, question words, closing tokens and filler
/// tokens. Ids at
/// or above 4 + canonical_vocab are never produced at shift 0; they are the
/// targets of the fixed remapping applied at shift > 0.
struct DomainSpec {
  std::size_t vocab_size = 200;
  double shift = 0.0;
  std::vector<std::vector<TokenId>> trigger_templates;
  LengthRange context_len_range{16, 32};
  LengthRange question_len_range{3, 5};
  LengthRange answer_len_range{1, 4};
  std::size_t canonical_vocab = 96;
  std::size_t answer_vocab_size = 36;
  std::size_t question_word_count = 4;
  // Probability that a filler slot carries an answer-class token instead.
  double answer_token_noise = 0.15;
  // Probability that the answer is directly followed by a closing token.
  // Closing tokens behave like punctuation: they are shared by all domains
  // and never remapped.
  double closing_marker_rate = 0.3;
  // Marker rate at shift 1; intermediate shifts interpolate linearly.
  double closing_marker_rate_shifted = 1.0;
  std::size_t closing_token_count = 2;
  std::size_t max_input_len = 64;
  std::uint64_t seed = 1;

  bool operator==(const DomainSpec&) const = default;
};

/// Eight two-token templates over ids 4..19, default lengths and vocabulary.
DomainSpec default_domain_spec(double shift = 0.0, std::uint64_t seed = 1);

/// Throws ConfigError when the spec cannot produce valid samples.
void validate(const DomainSpec& spec);

/// Token roles of a domain after the shift remapping has been applied.
struct DomainVocabulary {
  std::vector<std::vector<TokenId>> templates;
  std::vector<TokenId> answer_tokens;
  std::vector<TokenId> question_words;
  std::vector<TokenId> closing_tokens;
  std::vector<TokenId> filler_tokens;
  // remap[id] is the surface id emitted for canonical id `id`.
  std::vector<TokenId> remap;

  bool is_answer_token(TokenId t) const;
};

DomainVocabulary domain_vocabulary(const DomainSpec& spec);

/// Pure function of (spec, n): sample i only depends on spec and i.
std::vector<QASample> generate_corpus(const DomainSpec& spec, std::size_t n);

/// Copies with the answer stripped (unlabelled target view).
std::vector<QASample> strip_labels(std::vector<QASample> samples);

void write_jsonl(const std::vector<QASample>& samples, const std::filesystem::path& path);
void write_jsonl(const std::vector<QASample>& samples, std::ostream& out);
std::vector<QASample> read_jsonl(const std::filesystem::path& path);
std::vector<QASample> read_jsonl(std::istream& in, const std::string& source_name = "<stream>");

std::string to_jsonl_line(const QASample& sample);
/// Parses a single JSON object; `where` prefixes error messages.
QASample parse_jsonl_line(const std::string& line, const std::string& where = "line");

}  // namespace mdaqa
