#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "mdaqa/qa_task.hpp"
#include "support.hpp"

using namespace mdaqa;

TEST_CASE("build_input packs question and context with delimiters") {
  QASample s{"x", {10, 11, 12}, {20, 21}, SpanLabel{1, 2}};
  const ModelInput in = build_input(s, 64);
  const std::vector<TokenId> expect{0, 20, 21, 1, 1, 10, 11, 12, 1};
  CHECK(in.tokens == expect);
  CHECK(in.question == IndexInterval{1, 3});
  CHECK(in.context == IndexInterval{5, 8});
  CHECK(in.to_packed({1, 2}) == SpanLabel{6, 7});
  CHECK(in.to_context({6, 7}) == SpanLabel{1, 2});
}

TEST_CASE("build_input truncates the context tail") {
  QASample s{"x", std::vector<TokenId>(20, 9), {5, 6, 7}, std::nullopt};
  const ModelInput in = build_input(s, 12);
  CHECK(in.tokens.size() == 12);
  CHECK(in.context_len() == 5);
  CHECK_THROWS_AS(build_input(s, 7), InputError);
}

TEST_CASE("jsonl round trip and line format") {
  const std::vector<QASample> samples{{"a", {4, 5, 6}, {7, 8}, SpanLabel{0, 1}},
                                      {"b", {9}, {10}, std::nullopt}};
  std::stringstream ss;
  write_jsonl(samples, ss);
  CHECK(ss.str() ==
        "{\"id\":\"a\",\"context\":[4,5,6],\"question\":[7,8],\"answer\":{\"start\":0,\"end\":1}}\n"
        "{\"id\":\"b\",\"context\":[9],\"question\":[10],\"answer\":null}\n");
  CHECK(read_jsonl(ss) == samples);
}

TEST_CASE("jsonl errors") {
  CHECK_THROWS_AS(parse_jsonl_line("{not json"), ParseError);
  CHECK_THROWS_AS(parse_jsonl_line("[1,2]"), ParseError);
  CHECK_THROWS_AS(parse_jsonl_line(R"({"id":"a","context":[1],"answer":null})"), ParseError);
  CHECK_THROWS_AS(parse_jsonl_line(R"({"id":"a","context":[1,2],"question":[3],"answer":{"start":1,"end":0}})"),
                  ValidationError);
  CHECK_THROWS_AS(parse_jsonl_line(R"({"id":"a","context":[1,2],"question":[3],"answer":{"start":0,"end":2}})"),
                  ValidationError);
  CHECK_THROWS_AS(parse_jsonl_line(R"({"id":"a","context":[],"question":[3],"answer":null})"),
                  ValidationError);
  std::stringstream ss("\n{\"id\":\"a\",\"context\":[1],\"question\":[2],\"answer\":null}\n{bad\n");
  try {
    read_jsonl(ss, "f.jsonl");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("f.jsonl:3") != std::string::npos);
  }
}

TEST_CASE("generator is a pure function of spec and index") {
  const DomainSpec spec = default_domain_spec(0.4, 9);
  const auto a = generate_corpus(spec, 50);
  const auto b = generate_corpus(spec, 80);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  CHECK(generate_corpus(default_domain_spec(0.4, 10), 50) != a);
}

TEST_CASE("generated samples are valid and the template oracle recovers every label") {
  for (const double shift : {0.0, 0.3, 0.6, 1.0}) {
    const DomainSpec spec = default_domain_spec(shift, 4);
    const DomainVocabulary vocab = domain_vocabulary(spec);
    for (const auto& s : generate_corpus(spec, 400)) {
      validate_sample(s);
      REQUIRE(s.answer);
      CHECK(s.answer->length() >= spec.answer_len_range.min);
      CHECK(s.answer->length() <= spec.answer_len_range.max);
      CHECK(s.answer->end < build_input(s, spec.max_input_len).context_len());
      for (const TokenId t : s.context) CHECK(t < spec.vocab_size);
      const auto oracle = testing::oracle_span(s, vocab);
      REQUIRE(oracle);
      CHECK(*oracle == *s.answer);
    }
  }
}

TEST_CASE("shift 0 uses only canonical ids and closing tokens are never remapped") {
  const DomainSpec spec0 = default_domain_spec(0.0, 2);
  const DomainSpec spec1 = default_domain_spec(1.0, 2);
  const auto v0 = domain_vocabulary(spec0);
  const auto v1 = domain_vocabulary(spec1);
  CHECK(v0.closing_tokens == v1.closing_tokens);
  CHECK(v0.closing_tokens.size() == spec0.closing_token_count);
  for (const auto& s : generate_corpus(spec0, 200)) {
    for (const TokenId t : s.context) CHECK(t < special::kCount + spec0.canonical_vocab);
  }
  std::set<TokenId> shifted(v1.answer_tokens.begin(), v1.answer_tokens.end());
  for (const TokenId t : v0.answer_tokens) CHECK(shifted.count(t) == 0);
}

TEST_CASE("ids remapped at a small shift stay remapped at a larger one") {
  const auto v3 = domain_vocabulary(default_domain_spec(0.3));
  const auto v6 = domain_vocabulary(default_domain_spec(0.6));
  for (TokenId t = 0; t < v3.remap.size(); ++t) {
    if (v3.remap[t] != t) CHECK(v6.remap[t] != t);
  }
}

TEST_CASE("shift changes the token distribution") {
  auto unigram = [](const std::vector<QASample>& data) {
    std::map<TokenId, double> p;
    double n = 0;
    for (const auto& s : data) {
      for (const TokenId t : s.context) p[t] += 1, n += 1;
      for (const TokenId t : s.question) p[t] += 1, n += 1;
    }
    for (auto& [t, c] : p) c /= n;
    return p;
  };
  auto p = unigram(generate_corpus(default_domain_spec(0.0, 1), 2000));
  auto q = unigram(generate_corpus(default_domain_spec(1.0, 1), 2000));
  std::set<TokenId> keys;
  for (const auto& [t, c] : p) keys.insert(t);
  for (const auto& [t, c] : q) keys.insert(t);
  double tv = 0.0;
  for (const TokenId t : keys) tv += std::abs(p[t] - q[t]);
  tv /= 2.0;
  MESSAGE("total variation, shift 0 vs 1: " << tv);
  CHECK(tv > 0.3);

  auto r = unigram(generate_corpus(default_domain_spec(0.0, 2), 2000));
  double tv0 = 0.0;
  for (const TokenId t : keys) tv0 += std::abs(p[t] - r[t]);
  CHECK(tv0 / 2.0 < 0.1);
}

TEST_CASE("invalid domain specs are rejected") {
  auto bad = [](auto edit) {
    DomainSpec s = default_domain_spec();
    edit(s);
    return s;
  };
  CHECK_THROWS_AS(validate(bad([](DomainSpec& s) { s.shift = 1.5; })), ConfigError);
  CHECK_THROWS_AS(validate(bad([](DomainSpec& s) { s.shift = -0.1; })), ConfigError);
  CHECK_THROWS_AS(validate(bad([](DomainSpec& s) { s.trigger_templates.clear(); })), ConfigError);
  CHECK_THROWS_AS(validate(bad([](DomainSpec& s) { s.trigger_templates.push_back({4, 5}); })),
                  ConfigError);
  CHECK_THROWS_AS(validate(bad([](DomainSpec& s) { s.trigger_templates[0] = {150, 151}; })),
                  ConfigError);
  CHECK_THROWS_AS(validate(bad([](DomainSpec& s) { s.context_len_range = {5, 3}; })), ConfigError);
  CHECK_THROWS_AS(validate(bad([](DomainSpec& s) { s.answer_len_range = {0, 2}; })), ConfigError);
  CHECK_THROWS_AS(validate(bad([](DomainSpec& s) { s.canonical_vocab = 300; })), ConfigError);
  CHECK_THROWS_AS(validate(bad([](DomainSpec& s) { s.answer_vocab_size = 80; })), ConfigError);
  CHECK_THROWS_AS(validate(bad([](DomainSpec& s) { s.closing_marker_rate = 1.2; })), ConfigError);
  CHECK_THROWS_AS(validate(bad([](DomainSpec& s) { s.closing_token_count = 0; })), ConfigError);
  CHECK_THROWS_AS(validate(bad([](DomainSpec& s) { s.max_input_len = 12; })), ConfigError);
  CHECK_THROWS_AS(generate_corpus(default_domain_spec(), 0), ConfigError);
  CHECK_NOTHROW(validate(default_domain_spec(1.0)));
}
