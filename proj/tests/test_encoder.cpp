#include <doctest.h>

#include "mdaqa/encoder.hpp"

using namespace mdaqa;

namespace {

EncoderConfig small_config() {
  EncoderConfig cfg;
  cfg.vocab_size = 16;
  cfg.embed_dim = 3;
  cfg.output_dim = 4;
  return cfg;
}

ToyEncoder<double> random_encoder(std::uint64_t seed) {
  SeededRng rng(seed);
  ToyEncoder<double> enc(small_config(), rng);
  enc.params().embedding = sample_uniform(rng, -1.0, 1.0, 16, 3);
  return enc;
}

}  // namespace

TEST_CASE("initialisation") {
  SeededRng rng(2);
  const ToyEncoder<double> enc(small_config(), rng);
  CHECK(enc.params().embedding.isZero(0.0));
  CHECK(enc.params().weight.rows() == 4);
  CHECK(enc.params().weight.cols() == 12);
  CHECK(enc.params().weight.cwiseAbs().maxCoeff() < 0.1);
  CHECK(enc.params().bias.cwiseAbs().maxCoeff() < 0.1);
}

TEST_CASE("zero weights give zero features") {
  ToyEncoder<double> enc = random_encoder(1);
  enc.params().weight.setZero();
  enc.params().bias.setZero();
  const QASample s{"a", {5, 6, 7}, {8, 9}, std::nullopt};
  CHECK(enc.encode(build_input(s, 32)).isZero(0.0));
}

TEST_CASE("question order does not matter") {
  const ToyEncoder<double> enc = random_encoder(3);
  const QASample a{"a", {5, 6, 7, 4}, {8, 9, 10}, std::nullopt};
  const QASample b{"b", {5, 6, 7, 4}, {10, 8, 9}, std::nullopt};
  const RealMatrix fa = enc.encode(build_input(a, 32));
  const RealMatrix fb = enc.encode(build_input(b, 32));
  CHECK(fa.rows() == 4);
  CHECK(fa.cols() == 4);
  CHECK((fa - fb).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("backward is local and zero for zero upstream") {
  const ToyEncoder<double> enc = random_encoder(4);
  const QASample s{"a", {5, 6, 7}, {8}, std::nullopt};
  const ModelInput in = build_input(s, 32);
  EncoderCache<double> cache;
  const RealMatrix f = enc.encode(in, &cache);

  auto zero = enc.zero_grads();
  enc.backward(in, cache, RealMatrix::Zero(f.rows(), f.cols()), zero);
  CHECK(zero.embedding.isZero(0.0));
  CHECK(zero.weight.isZero(0.0));

  auto g = enc.zero_grads();
  enc.backward(in, cache, RealMatrix::Ones(f.rows(), f.cols()), g);
  for (const TokenId t : {4u, 9u, 10u, 15u}) CHECK(g.embedding.row(t).isZero(0.0));
  CHECK_FALSE(g.embedding.row(6).isZero(0.0));
  CHECK_THROWS_AS(enc.backward(in, cache, RealMatrix::Ones(2, 4), g), ShapeError);
}

TEST_CASE("input errors") {
  const ToyEncoder<double> enc = random_encoder(5);
  const QASample s{"a", {5, 16}, {8}, std::nullopt};
  CHECK_THROWS_AS(enc.encode(build_input(s, 32)), InputError);
  RealMatrix bad(2, 2);
  ToyEncoderParams<double> p = ToyEncoderParams<double>::zeros(small_config());
  p.weight = bad;
  CHECK_THROWS_AS(ToyEncoder<double>(small_config(), p), ShapeError);
}
