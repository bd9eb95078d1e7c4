#include "mdaqa/qa_task.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace mdaqa {

namespace {

using ordered_json = nlohmann::ordered_json;

// The remapping is a property of the benchmark, not of a corpus draw.
constexpr std::uint64_t kRemapSeed = 0x6d64617172656d70ULL;
// Answer-class noise is kept this many positions clear after the gold span.
constexpr std::size_t kNoiseClearance = 8;

std::size_t remapped_count(std::size_t n, double shift) {
  return static_cast<std::size_t>(std::llround(shift * static_cast<double>(n)));
}

}  // namespace

void validate_sample(const QASample& sample) {
  if (sample.context.empty()) throw ValidationError("sample '" + sample.id + "': empty context");
  if (sample.question.empty()) throw ValidationError("sample '" + sample.id + "': empty question");
  if (sample.answer) {
    const auto& a = *sample.answer;
    if (a.start > a.end) {
      throw ValidationError("sample '" + sample.id + "': answer end " + std::to_string(a.end) +
                            " < start " + std::to_string(a.start));
    }
    if (a.end >= sample.context.size()) {
      throw ValidationError("sample '" + sample.id + "': answer end " + std::to_string(a.end) +
                            " outside context of length " + std::to_string(sample.context.size()));
    }
  }
}

ModelInput build_input(const QASample& sample, std::size_t max_len) {
  const std::size_t overhead = sample.question.size() + 4;
  if (overhead + 1 > max_len) {
    throw InputError("sample '" + sample.id + "': question of length " +
                     std::to_string(sample.question.size()) + " leaves no room in max_len " +
                     std::to_string(max_len));
  }
  const std::size_t ctx_len = std::min(sample.context.size(), max_len - overhead);

  ModelInput in;
  in.tokens.reserve(overhead + ctx_len);
  in.tokens.push_back(special::kBos);
  in.tokens.insert(in.tokens.end(), sample.question.begin(), sample.question.end());
  in.question = {1, 1 + sample.question.size()};
  in.tokens.push_back(special::kEos);
  in.tokens.push_back(special::kEos);
  const std::size_t ctx_begin = in.tokens.size();
  in.tokens.insert(in.tokens.end(), sample.context.begin(),
                   sample.context.begin() + static_cast<std::ptrdiff_t>(ctx_len));
  in.context = {ctx_begin, ctx_begin + ctx_len};
  in.tokens.push_back(special::kEos);
  return in;
}

DomainSpec default_domain_spec(double shift, std::uint64_t seed) {
  DomainSpec spec;
  spec.shift = shift;
  spec.seed = seed;
  for (TokenId t = 0; t < 8; ++t) {
    spec.trigger_templates.push_back({special::kCount + 2 * t, special::kCount + 2 * t + 1});
  }
  return spec;
}

void validate(const DomainSpec& spec) {
  if (!(spec.shift >= 0.0 && spec.shift <= 1.0)) {
    throw ConfigError("domain spec: shift must lie in [0,1], got " + std::to_string(spec.shift));
  }
  if (spec.trigger_templates.empty()) throw ConfigError("domain spec: no trigger templates");
  const auto& c = spec.context_len_range;
  const auto& q = spec.question_len_range;
  const auto& a = spec.answer_len_range;
  if (c.min < 1 || c.min > c.max) throw ConfigError("domain spec: invalid context_len_range");
  if (a.min < 1 || a.min > a.max) throw ConfigError("domain spec: invalid answer_len_range");
  if (q.min > q.max) throw ConfigError("domain spec: invalid question_len_range");

  const TokenId canon_end = special::kCount + static_cast<TokenId>(spec.canonical_vocab);
  if (canon_end > spec.vocab_size) throw ConfigError("domain spec: canonical block exceeds vocab");
  std::vector<bool> used(spec.vocab_size, false);
  std::size_t template_tokens = 0;
  for (const auto& tpl : spec.trigger_templates) {
    if (tpl.empty()) throw ConfigError("domain spec: empty trigger template");
    if (tpl.size() > c.min) {
      throw ConfigError("domain spec: template of length " + std::to_string(tpl.size()) +
                        " longer than context_len_range.min " + std::to_string(c.min));
    }
    if (tpl.size() + a.max > c.min) {
      throw ConfigError("domain spec: template plus longest answer exceeds context_len_range.min");
    }
    if (q.min < tpl.size() + 1) {
      throw ConfigError("domain spec: question_len_range.min must exceed every template length");
    }
    for (const TokenId t : tpl) {
      if (t < special::kCount || t >= canon_end) {
        throw ConfigError("domain spec: template token " + std::to_string(t) +
                          " outside the canonical block");
      }
      if (used[t]) throw ConfigError("domain spec: template token reused: " + std::to_string(t));
      used[t] = true;
      ++template_tokens;
    }
  }
  const std::size_t rest = spec.canonical_vocab - template_tokens;
  if (spec.answer_vocab_size < 1 || spec.question_word_count < 1 ||
      spec.answer_vocab_size + spec.question_word_count + spec.closing_token_count + 1 > rest) {
    throw ConfigError("domain spec: canonical block too small for answer/question/filler roles");
  }
  if (!(spec.answer_token_noise >= 0.0 && spec.answer_token_noise < 1.0)) {
    throw ConfigError("domain spec: answer_token_noise must lie in [0,1)");
  }
  if (!(spec.closing_marker_rate >= 0.0 && spec.closing_marker_rate <= 1.0)) {
    throw ConfigError("domain spec: closing_marker_rate must lie in [0,1]");
  }
  if ((spec.closing_marker_rate > 0.0 || spec.closing_marker_rate_shifted > 0.0) &&
      spec.closing_token_count == 0) {
    throw ConfigError("domain spec: closing markers requested but closing_token_count is 0");
  }
  if (!(spec.closing_marker_rate_shifted >= 0.0 && spec.closing_marker_rate_shifted <= 1.0)) {
    throw ConfigError("domain spec: closing_marker_rate_shifted must lie in [0,1]");
  }
  if (c.max + q.max + 4 > spec.max_input_len) {
    // Still valid: truncation applies and unanswerable draws are regenerated.
    if (q.max + 4 + a.max + 8 > spec.max_input_len) {
      throw ConfigError("domain spec: max_input_len too small for question and answer");
    }
  }
}

bool DomainVocabulary::is_answer_token(TokenId t) const {
  return std::binary_search(answer_tokens.begin(), answer_tokens.end(), t);
}

DomainVocabulary domain_vocabulary(const DomainSpec& spec) {
  validate(spec);
  const TokenId canon_end = special::kCount + static_cast<TokenId>(spec.canonical_vocab);

  std::vector<bool> is_template(spec.vocab_size, false);
  std::vector<TokenId> template_ids;
  for (const auto& tpl : spec.trigger_templates) {
    for (const TokenId t : tpl) {
      is_template[t] = true;
      template_ids.push_back(t);
    }
  }
  std::vector<TokenId> answer, qwords, closing, filler;
  for (TokenId t = special::kCount; t < canon_end; ++t) {
    if (is_template[t]) continue;
    if (answer.size() < spec.answer_vocab_size) {
      answer.push_back(t);
    } else if (qwords.size() < spec.question_word_count) {
      qwords.push_back(t);
    } else if (closing.size() < spec.closing_token_count) {
      closing.push_back(t);
    } else {
      filler.push_back(t);
    }
  }

  DomainVocabulary v;
  v.remap.resize(spec.vocab_size);
  std::iota(v.remap.begin(), v.remap.end(), TokenId{0});

  // Every role but the closing tokens is remapped at the same rate, in a fixed
  // order, onto a fixed shuffle of the reserve block. Growing `shift` only
  // extends the remapped set.
  std::vector<TokenId> reserve;
  for (auto t = static_cast<std::size_t>(canon_end); t < spec.vocab_size; ++t) {
    reserve.push_back(static_cast<TokenId>(t));
  }
  SeededRng fixed(kRemapSeed);
  auto reserve_rng = fixed.stream("reserve");
  reserve_rng.shuffle(std::span<TokenId>(reserve));
  std::size_t next_reserve = 0;
  auto remap_role = [&](std::vector<TokenId> ids, std::string_view role) {
    auto rng = fixed.stream(role);
    rng.shuffle(std::span<TokenId>(ids));
    const std::size_t k = remapped_count(ids.size(), spec.shift);
    for (std::size_t i = 0; i < k; ++i) {
      if (next_reserve >= reserve.size()) {
        throw ConfigError("domain spec: reserve vocabulary too small for shift " +
                          std::to_string(spec.shift));
      }
      v.remap[ids[i]] = reserve[next_reserve++];
    }
  };
  remap_role(template_ids, "templates");
  remap_role(answer, "answer");
  remap_role(qwords, "question");
  remap_role(filler, "filler");

  auto mapped = [&](std::vector<TokenId> ids) {
    for (auto& t : ids) t = v.remap[t];
    return ids;
  };
  for (const auto& tpl : spec.trigger_templates) v.templates.push_back(mapped(tpl));
  v.answer_tokens = mapped(answer);
  std::sort(v.answer_tokens.begin(), v.answer_tokens.end());
  v.question_words = mapped(qwords);
  v.closing_tokens = closing;
  v.filler_tokens = mapped(filler);
  return v;
}

namespace {

QASample draw_sample(const DomainSpec& spec, const DomainVocabulary& vocab, SeededRng& rng) {
  const double shift = spec.shift;
  const std::size_t n_templates = vocab.templates.size();

  std::vector<double> template_w(n_templates, 1.0);
  if (n_templates > 1) {
    for (std::size_t j = 0; j < n_templates; ++j) {
      const double pos = static_cast<double>(j) / static_cast<double>(n_templates - 1);
      template_w[j] = std::exp(2.0 * shift * (pos - 0.5));
    }
  }
  const auto& tpl = vocab.templates[rng.categorical(template_w)];

  // Short answers dominate the source; the shift tilts mass toward long ones.
  const auto& ar = spec.answer_len_range;
  std::vector<double> len_w;
  for (std::size_t len = ar.min; len <= ar.max; ++len) {
    const auto down = static_cast<double>(ar.max - len + 1);
    const auto up = static_cast<double>(len - ar.min + 1);
    len_w.push_back((1.0 - shift) * down + shift * up);
  }
  const std::size_t answer_len = ar.min + rng.categorical(len_w);

  const auto& cr = spec.context_len_range;
  const std::size_t ctx_min =
      cr.min + static_cast<std::size_t>(std::llround(shift * static_cast<double>(cr.max - cr.min) / 2));
  const auto ctx_len = static_cast<std::size_t>(
      rng.between(static_cast<std::int64_t>(ctx_min), static_cast<std::int64_t>(cr.max)));

  const std::size_t span_len = tpl.size() + answer_len;
  const auto tpl_pos =
      static_cast<std::size_t>(rng.between(0, static_cast<std::int64_t>(ctx_len - span_len)));
  const std::size_t ans_start = tpl_pos + tpl.size();
  const std::size_t ans_end = ans_start + answer_len - 1;

  const double marker_rate =
      (1.0 - shift) * spec.closing_marker_rate + shift * spec.closing_marker_rate_shifted;
  const bool closing = !vocab.closing_tokens.empty() && ans_end + 1 < ctx_len &&
                       rng.uniform01() < marker_rate;

  QASample s;
  s.context.resize(ctx_len);
  for (std::size_t i = 0; i < ctx_len; ++i) {
    if (i >= tpl_pos && i < ans_start) {
      s.context[i] = tpl[i - tpl_pos];
    } else if (i >= ans_start && i <= ans_end) {
      s.context[i] = vocab.answer_tokens[rng.below(vocab.answer_tokens.size())];
    } else if (closing && i == ans_end + 1) {
      s.context[i] = vocab.closing_tokens[rng.below(vocab.closing_tokens.size())];
    } else {
      const bool near_gold = (i + 1 == tpl_pos) || (i > ans_end && i <= ans_end + kNoiseClearance);
      const bool noise = rng.uniform01() < spec.answer_token_noise;
      if (noise && !near_gold) {
        s.context[i] = vocab.answer_tokens[rng.below(vocab.answer_tokens.size())];
      } else {
        s.context[i] = vocab.filler_tokens[rng.below(vocab.filler_tokens.size())];
      }
    }
  }
  s.answer = SpanLabel{ans_start, ans_end};

  const auto& qr = spec.question_len_range;
  const auto q_len = static_cast<std::size_t>(
      rng.between(static_cast<std::int64_t>(std::max(qr.min, tpl.size() + 1)),
                  static_cast<std::int64_t>(std::max(qr.max, tpl.size() + 1))));
  s.question.push_back(vocab.question_words[rng.below(vocab.question_words.size())]);
  s.question.insert(s.question.end(), tpl.begin(), tpl.end());
  while (s.question.size() < q_len) {
    s.question.push_back(vocab.question_words[rng.below(vocab.question_words.size())]);
  }
  return s;
}

}  // namespace

std::vector<QASample> generate_corpus(const DomainSpec& spec, std::size_t n) {
  if (n < 1) throw ConfigError("generate_corpus: n must be at least 1");
  const DomainVocabulary vocab = domain_vocabulary(spec);
  const SeededRng base = SeededRng(spec.seed).stream("corpus");

  std::vector<QASample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const SeededRng sample_rng = base.stream(i);
    for (std::uint64_t attempt = 0;; ++attempt) {
      SeededRng rng = sample_rng.stream(attempt);
      QASample s = draw_sample(spec, vocab, rng);
      const ModelInput in = build_input(s, spec.max_input_len);
      if (s.answer->end < in.context_len()) {
        s.id = "d" + std::to_string(spec.seed) + "-" + std::to_string(i);
        out.push_back(std::move(s));
        break;
      }
      if (attempt > 1000) throw ConfigError("generate_corpus: cannot fit answers in max_input_len");
    }
  }
  return out;
}

std::vector<QASample> strip_labels(std::vector<QASample> samples) {
  for (auto& s : samples) s.answer.reset();
  return samples;
}

std::string to_jsonl_line(const QASample& sample) {
  ordered_json j;
  j["id"] = sample.id;
  j["context"] = sample.context;
  j["question"] = sample.question;
  if (sample.answer) {
    ordered_json a;
    a["start"] = sample.answer->start;
    a["end"] = sample.answer->end;
    j["answer"] = std::move(a);
  } else {
    j["answer"] = nullptr;
  }
  return j.dump();
}

QASample parse_jsonl_line(const std::string& line, const std::string& where) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(where + ": malformed JSON: " + e.what());
  }
  QASample s;
  try {
    if (!j.is_object()) throw ParseError(where + ": expected a JSON object");
    s.id = j.at("id").get<std::string>();
    s.context = j.at("context").get<std::vector<TokenId>>();
    s.question = j.at("question").get<std::vector<TokenId>>();
    const auto& a = j.at("answer");
    if (!a.is_null()) {
      const auto start = a.at("start").get<std::int64_t>();
      const auto end = a.at("end").get<std::int64_t>();
      if (start < 0 || end < 0) {
        throw ValidationError("sample '" + s.id + "': negative answer index");
      }
      s.answer = SpanLabel{static_cast<std::size_t>(start), static_cast<std::size_t>(end)};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where + ": schema error: " + e.what());
  }
  validate_sample(s);
  return s;
}

void write_jsonl(const std::vector<QASample>& samples, std::ostream& out) {
  for (const auto& s : samples) {
    validate_sample(s);
    out << to_jsonl_line(s) << '\n';
  }
}

void write_jsonl(const std::vector<QASample>& samples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  write_jsonl(samples, out);
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<QASample> read_jsonl(std::istream& in, const std::string& source_name) {
  std::vector<QASample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(parse_jsonl_line(line, source_name + ":" + std::to_string(line_no)));
  }
  return out;
}

std::vector<QASample> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open for reading: " + path.string());
  return read_jsonl(in, path.string());
}

}  // namespace mdaqa
