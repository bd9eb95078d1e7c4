#pragma once

// Feature extractor stage: a pluggable interface (concept) and the reference
// toy encoder with hand-derived gradients.

#include <concepts>
#include <cstddef>
#include <string>
#include <string_view>

#include "mdaqa/numkernel.hpp"
#include "mdaqa/qa_task.hpp"

namespace mdaqa {

/// A feature extractor maps a packed input to one feature row per context
/// token and back-propagates into its own parameter gradients. Parameters and
/// gradients share one type so optimizers and checkpoints can visit them by
/// name; all of them belong to the "encoder" learning-rate group.
template <typename E>
concept FeatureExtractor = requires(E enc, const E cenc, const ModelInput& in,
                                    typename E::Cache& cache, const typename E::Cache& ccache,
                                    const Matrix<typename E::ScalarType>& grad,
                                    typename E::Params& grads) {
  typename E::ScalarType;
  typename E::Params;
  typename E::Cache;
  { cenc.output_dim() } -> std::convertible_to<std::size_t>;
  { cenc.encode(in, &cache) } -> std::same_as<Matrix<typename E::ScalarType>>;
  { cenc.backward(in, ccache, grad, grads) };
  { cenc.zero_grads() } -> std::same_as<typename E::Params>;
  { enc.params() } -> std::same_as<typename E::Params&>;
};

struct EncoderConfig {
  std::size_t vocab_size = 200;
  std::size_t embed_dim = 32;   // d
  std::size_t output_dim = 32;  // a
  // Neighbouring context tokens on each side fed to every position; 0 gives
  // the plain [emb(p_t); mean question embedding] input.
  std::size_t window = 1;
  double init_range = 0.1;  // uniform range of W_e and b_e

  std::size_t input_dim() const { return (2 * window + 2) * embed_dim; }
  bool operator==(const EncoderConfig&) const = default;
};

template <typename Scalar>
struct ToyEncoderParams {
  Matrix<Scalar> embedding;  // vocab_size x d
  Matrix<Scalar> weight;     // a x input_dim
  Vector<Scalar> bias;       // a

  static ToyEncoderParams zeros(const EncoderConfig& cfg) {
    const auto v = static_cast<Eigen::Index>(cfg.vocab_size);
    const auto d = static_cast<Eigen::Index>(cfg.embed_dim);
    const auto a = static_cast<Eigen::Index>(cfg.output_dim);
    return {Matrix<Scalar>::Zero(v, d),
            Matrix<Scalar>::Zero(a, static_cast<Eigen::Index>(cfg.input_dim())),
            Vector<Scalar>::Zero(a)};
  }

  template <typename F>
  void for_each(F&& f) {
    f(std::string_view("encoder.embedding"), embedding);
    f(std::string_view("encoder.weight"), weight);
    f(std::string_view("encoder.bias"), bias);
  }
  template <typename F>
  void for_each(F&& f) const {
    f(std::string_view("encoder.embedding"), embedding);
    f(std::string_view("encoder.weight"), weight);
    f(std::string_view("encoder.bias"), bias);
  }

  void set_zero() {
    embedding.setZero();
    weight.setZero();
    bias.setZero();
  }
  ToyEncoderParams& operator+=(const ToyEncoderParams& o) {
    embedding += o.embedding;
    weight += o.weight;
    bias += o.bias;
    return *this;
  }
  ToyEncoderParams& operator*=(Scalar s) {
    embedding *= s;
    weight *= s;
    bias *= s;
    return *this;
  }
};

template <typename Scalar>
struct EncoderCache {
  Matrix<Scalar> inputs;    // context_len x input_dim
  Matrix<Scalar> features;  // context_len x a
};

/// u_t = tanh(W_e [emb(p_{t-w}) .. emb(p_{t+w}); mean_q emb(q)] + b_e)
///
/// Neighbours are read from the packed sequence, so the delimiters around the
/// context act as boundary tokens; positions past the packed ends read <pad>.
template <typename Scalar>
class ToyEncoder {
 public:
  using ScalarType = Scalar;
  using Params = ToyEncoderParams<Scalar>;
  using Cache = EncoderCache<Scalar>;

  /// Embeddings start at zero, the value <unk> keeps during training, so an
  /// id that training never touched is read as unknown.
  ToyEncoder(const EncoderConfig& cfg, SeededRng& rng) : cfg_(cfg) {
    const double r = cfg.init_range;
    params_.embedding = Matrix<Scalar>::Zero(cfg.vocab_size, cfg.embed_dim);
    params_.weight = sample_uniform(rng, -r, r, cfg.output_dim, cfg.input_dim()).cast<Scalar>();
    params_.bias = sample_uniform(rng, -r, r, cfg.output_dim).cast<Scalar>();
  }
  ToyEncoder(const EncoderConfig& cfg, Params params) : cfg_(cfg), params_(std::move(params)) {
    Params ref = Params::zeros(cfg);
    require_same_shape(params_.embedding, ref.embedding, "ToyEncoder embedding");
    require_same_shape(params_.weight, ref.weight, "ToyEncoder weight");
    require_same_shape(params_.bias, ref.bias, "ToyEncoder bias");
  }

  const EncoderConfig& config() const { return cfg_; }
  std::size_t output_dim() const { return cfg_.output_dim; }
  Params& params() { return params_; }
  const Params& params() const { return params_; }
  Params zero_grads() const { return Params::zeros(cfg_); }

  Matrix<Scalar> encode(const ModelInput& in, Cache* cache = nullptr) const {
    check_tokens(in);
    Cache local;
    Cache& c = cache ? *cache : local;
    build_inputs(in, c.inputs);
    c.features = ((c.inputs * params_.weight.transpose()).rowwise() +
                  params_.bias.transpose())
                     .array()
                     .tanh()
                     .matrix();
    return c.features;
  }

  /// Accumulates d loss / d params into `grads`.
  void backward(const ModelInput& in, const Cache& cache, const Matrix<Scalar>& grad_features,
                Params& grads) const {
    require_same_shape(grad_features, cache.features, "ToyEncoder::backward grad_features");
    const Matrix<Scalar> d_pre =
        (grad_features.array() * (Scalar(1) - cache.features.array().square())).matrix();
    grads.weight.noalias() += d_pre.transpose() * cache.inputs;
    grads.bias += d_pre.colwise().sum().transpose();
    const Matrix<Scalar> d_in = d_pre * params_.weight;

    const auto d = static_cast<Eigen::Index>(cfg_.embed_dim);
    const auto slots = static_cast<Eigen::Index>(2 * cfg_.window + 1);
    for (Eigen::Index t = 0; t < d_in.rows(); ++t) {
      const std::size_t pos = in.context.begin + static_cast<std::size_t>(t);
      for (Eigen::Index s = 0; s < slots; ++s) {
        const TokenId tok = neighbour(in, pos, s);
        grads.embedding.row(tok) += d_in.block(t, s * d, 1, d);
      }
    }
    const Vector<Scalar> d_q = d_in.rightCols(d).colwise().sum().transpose() /
                               static_cast<Scalar>(in.question.size());
    for (std::size_t p = in.question.begin; p < in.question.end; ++p) {
      grads.embedding.row(in.tokens[p]) += d_q.transpose();
    }
  }

 private:
  void check_tokens(const ModelInput& in) const {
    for (const TokenId t : in.tokens) {
      if (t >= cfg_.vocab_size) {
        throw InputError("token id " + std::to_string(t) + " out of range for vocab_size " +
                         std::to_string(cfg_.vocab_size));
      }
    }
    if (in.context.empty()) throw InputError("encode: empty context");
    if (in.question.empty()) throw InputError("encode: empty question");
  }

  TokenId neighbour(const ModelInput& in, std::size_t pos, Eigen::Index slot) const {
    const auto offset = static_cast<std::ptrdiff_t>(slot) - static_cast<std::ptrdiff_t>(cfg_.window);
    const auto p = static_cast<std::ptrdiff_t>(pos) + offset;
    if (p < 0 || p >= static_cast<std::ptrdiff_t>(in.tokens.size())) return special::kPad;
    return in.tokens[static_cast<std::size_t>(p)];
  }

  void build_inputs(const ModelInput& in, Matrix<Scalar>& x) const {
    const auto d = static_cast<Eigen::Index>(cfg_.embed_dim);
    const auto slots = static_cast<Eigen::Index>(2 * cfg_.window + 1);
    const auto len = static_cast<Eigen::Index>(in.context_len());
    x.resize(len, static_cast<Eigen::Index>(cfg_.input_dim()));

    Vector<Scalar> q_mean = Vector<Scalar>::Zero(d);
    for (std::size_t p = in.question.begin; p < in.question.end; ++p) {
      q_mean += params_.embedding.row(in.tokens[p]).transpose();
    }
    q_mean /= static_cast<Scalar>(in.question.size());

    for (Eigen::Index t = 0; t < len; ++t) {
      const std::size_t pos = in.context.begin + static_cast<std::size_t>(t);
      for (Eigen::Index s = 0; s < slots; ++s) {
        x.block(t, s * d, 1, d) = params_.embedding.row(neighbour(in, pos, s));
      }
      x.block(t, slots * d, 1, d) = q_mean.transpose();
    }
  }

  EncoderConfig cfg_;
  Params params_;
};

}  // namespace mdaqa
