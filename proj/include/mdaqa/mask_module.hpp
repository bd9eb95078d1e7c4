#pragma once

// Mask module: bottleneck f, near-binary mask M = sigmoid(k N), prediction
// head h, and the snapshot gating applied to adaptation gradients.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mdaqa/numkernel.hpp"

namespace mdaqa {

struct MaskConfig {
  std::size_t input_dim = 32;   // a
  std::size_t bottleneck = 64;  // b
  double sharpness = 100.0;     // k
  // false: mask pinned to 1, no sparsity term, no snapshot (ablation).
  bool enabled = true;
  double logit_init_range = 0.5;

  bool operator==(const MaskConfig&) const = default;
};

template <typename Scalar>
struct MaskParams {
  Vector<Scalar> logits;             // N, b
  Matrix<Scalar> bottleneck_weight;  // W_f, b x a
  Vector<Scalar> bottleneck_bias;    // b_f, b
  Matrix<Scalar> head_weight;        // W_h, 2 x b
  Vector<Scalar> head_bias;          // b_h, 2

  static MaskParams zeros(const MaskConfig& cfg) {
    const auto a = static_cast<Eigen::Index>(cfg.input_dim);
    const auto b = static_cast<Eigen::Index>(cfg.bottleneck);
    return {Vector<Scalar>::Zero(b), Matrix<Scalar>::Zero(b, a), Vector<Scalar>::Zero(b),
            Matrix<Scalar>::Zero(2, b), Vector<Scalar>::Zero(2)};
  }

  template <typename F>
  void for_each(F&& f) {
    f(std::string_view("mask.logits"), logits);
    f(std::string_view("mask.bottleneck_weight"), bottleneck_weight);
    f(std::string_view("mask.bottleneck_bias"), bottleneck_bias);
    f(std::string_view("mask.head_weight"), head_weight);
    f(std::string_view("mask.head_bias"), head_bias);
  }
  template <typename F>
  void for_each(F&& f) const {
    f(std::string_view("mask.logits"), logits);
    f(std::string_view("mask.bottleneck_weight"), bottleneck_weight);
    f(std::string_view("mask.bottleneck_bias"), bottleneck_bias);
    f(std::string_view("mask.head_weight"), head_weight);
    f(std::string_view("mask.head_bias"), head_bias);
  }

  void set_zero() {
    for_each([](std::string_view, auto& t) { t.setZero(); });
  }
  MaskParams& operator+=(const MaskParams& o) {
    logits += o.logits;
    bottleneck_weight += o.bottleneck_weight;
    bottleneck_bias += o.bottleneck_bias;
    head_weight += o.head_weight;
    head_bias += o.head_bias;
    return *this;
  }
  MaskParams& operator*=(Scalar s) {
    for_each([s](std::string_view, auto& t) { t *= s; });
    return *this;
  }
};

/// Mask values frozen at the end of source training.
struct MaskSnapshot {
  RealVector values;  // M_s
  std::string taken_at = "end-of-source-training";
  double active_tolerance = 0.01;

  RealVector complement() const { return (1.0 - values.array()).matrix(); }
  bool operator==(const MaskSnapshot& o) const {
    return values == o.values && taken_at == o.taken_at && active_tolerance == o.active_tolerance;
  }
};

/// {i : M_s[i] > 1 - tolerance}
inline std::vector<std::size_t> active_kernels(const MaskSnapshot& snap) {
  std::vector<std::size_t> out;
  for (Eigen::Index i = 0; i < snap.values.size(); ++i) {
    if (snap.values(i) > 1.0 - snap.active_tolerance) out.push_back(static_cast<std::size_t>(i));
  }
  return out;
}

template <typename Derived>
double active_fraction(const Eigen::MatrixBase<Derived>& mask, double tolerance = 0.01) {
  if (mask.size() == 0) return 0.0;
  return static_cast<double>((mask.array() > 1.0 - tolerance).count()) /
         static_cast<double>(mask.size());
}

/// Scales row i of dW_f, entry i of db_f and column i of dW_h by (1 - M_s[i]).
/// Mask logits and the head bias pass through unchanged.
template <typename Scalar>
MaskParams<Scalar> gate_grads(MaskParams<Scalar> grads, const MaskSnapshot& snap) {
  if (snap.values.size() != grads.bottleneck_bias.size()) {
    throw ShapeError("gate_grads: snapshot of size " + std::to_string(snap.values.size()) +
                     " vs bottleneck of size " + std::to_string(grads.bottleneck_bias.size()));
  }
  const Vector<Scalar> keep = snap.complement().template cast<Scalar>();
  grads.bottleneck_weight = keep.asDiagonal() * grads.bottleneck_weight;
  grads.bottleneck_bias = grads.bottleneck_bias.cwiseProduct(keep);
  grads.head_weight = grads.head_weight * keep.asDiagonal();
  return grads;
}

template <typename Scalar>
struct MaskCache {
  Matrix<Scalar> features;  // u, L x a
  Matrix<Scalar> pre_mask;  // z, L x b
  Matrix<Scalar> gated;     // g = M . z, L x b
  Vector<Scalar> mask;      // M, b
  std::uint64_t generation = 0;
  bool valid = false;
};

template <typename Scalar>
class MaskModule {
 public:
  using Params = MaskParams<Scalar>;
  using Cache = MaskCache<Scalar>;

  MaskModule(const MaskConfig& cfg, SeededRng& rng) : cfg_(cfg), params_(Params::zeros(cfg)) {
    validate_config();
    const double r = cfg.logit_init_range;
    params_.logits = sample_uniform(rng, -r, r, cfg.bottleneck).cast<Scalar>();
    const auto a = static_cast<double>(cfg.input_dim);
    const auto b = static_cast<double>(cfg.bottleneck);
    const double rf = std::sqrt(6.0 / (a + b));
    const double rh = std::sqrt(6.0 / (b + 2.0));
    params_.bottleneck_weight = sample_uniform(rng, -rf, rf, cfg.bottleneck, cfg.input_dim).cast<Scalar>();
    params_.head_weight = sample_uniform(rng, -rh, rh, 2, cfg.bottleneck).cast<Scalar>();
  }
  MaskModule(const MaskConfig& cfg, Params params) : cfg_(cfg), params_(std::move(params)) {
    validate_config();
    const Params ref = Params::zeros(cfg);
    require_same_shape(params_.logits, ref.logits, "MaskModule logits");
    require_same_shape(params_.bottleneck_weight, ref.bottleneck_weight, "MaskModule W_f");
    require_same_shape(params_.bottleneck_bias, ref.bottleneck_bias, "MaskModule b_f");
    require_same_shape(params_.head_weight, ref.head_weight, "MaskModule W_h");
    require_same_shape(params_.head_bias, ref.head_bias, "MaskModule b_h");
  }

  const MaskConfig& config() const { return cfg_; }
  std::size_t bottleneck() const { return cfg_.bottleneck; }
  bool enabled() const { return cfg_.enabled; }
  Scalar sharpness() const { return static_cast<Scalar>(cfg_.sharpness); }

  const Params& params() const { return params_; }
  /// Mutable access invalidates every cache produced so far.
  Params& params() {
    ++generation_;
    return params_;
  }
  Params zero_grads() const { return Params::zeros(cfg_); }

  /// M = sigmoid(k N), or all ones when the mask is disabled.
  Vector<Scalar> mask_values() const {
    if (!cfg_.enabled) return Vector<Scalar>::Ones(params_.logits.size());
    return sigmoid_vec((sharpness() * params_.logits).eval());
  }

  /// lambda * sum(M) / b
  Scalar sparsity_loss(Scalar lambda) const {
    if (!cfg_.enabled) return Scalar(0);
    return lambda * mask_values().sum() / static_cast<Scalar>(cfg_.bottleneck);
  }

  /// Adds d(lambda sum(M)/b)/dN, scaled by `weight`, to grads.logits.
  void add_sparsity_grad(Scalar lambda, Params& grads, Scalar weight = Scalar(1)) const {
    if (!cfg_.enabled || lambda == Scalar(0)) return;
    const Scalar k = sharpness();
    const Scalar c = weight * lambda * k / static_cast<Scalar>(cfg_.bottleneck);
    for (Eigen::Index i = 0; i < params_.logits.size(); ++i) {
      grads.logits(i) += c * sigmoid_derivative(k * params_.logits(i));
    }
  }

  /// logits_t = W_h (M . (W_f u_t + b_f)) + b_h for every row u_t.
  Matrix<Scalar> forward(const Matrix<Scalar>& features, Cache* cache = nullptr) const {
    if (static_cast<std::size_t>(features.cols()) != cfg_.input_dim) {
      throw ShapeError("MaskModule::forward: features " + shape_string(features) +
                       " but module expects width " + std::to_string(cfg_.input_dim));
    }
    Cache local;
    Cache& c = cache ? *cache : local;
    c.features = features;
    c.mask = mask_values();
    c.pre_mask = (features * params_.bottleneck_weight.transpose()).rowwise() +
                 params_.bottleneck_bias.transpose();
    c.gated = c.pre_mask * c.mask.asDiagonal();
    c.generation = generation_;
    c.valid = true;
    return (c.gated * params_.head_weight.transpose()).rowwise() + params_.head_bias.transpose();
  }

  /// Accumulates parameter gradients into `grads` and returns d loss / d features.
  /// The sparsity term is not included; see add_sparsity_grad.
  Matrix<Scalar> backward(const Matrix<Scalar>& grad_logits, const Cache& cache, Params& grads) const {
    if (!cache.valid) throw PreconditionError("MaskModule::backward: no forward cache");
    if (cache.generation != generation_) {
      throw PreconditionError("MaskModule::backward: cache is stale (parameters changed)");
    }
    if (grad_logits.rows() != cache.gated.rows() || grad_logits.cols() != 2) {
      throw ShapeError("MaskModule::backward: grad_logits " + shape_string(grad_logits) +
                       " vs cached " + std::to_string(cache.gated.rows()) + "x2");
    }
    grads.head_weight.noalias() += grad_logits.transpose() * cache.gated;
    grads.head_bias += grad_logits.colwise().sum().transpose();
    const Matrix<Scalar> d_gated = grad_logits * params_.head_weight;
    const Matrix<Scalar> d_pre = d_gated * cache.mask.asDiagonal();
    if (cfg_.enabled) {
      const Scalar k = sharpness();
      const Vector<Scalar> d_mask =
          d_gated.cwiseProduct(cache.pre_mask).colwise().sum().transpose();
      for (Eigen::Index i = 0; i < d_mask.size(); ++i) {
        grads.logits(i) += d_mask(i) * k * sigmoid_derivative(k * params_.logits(i));
      }
    }
    grads.bottleneck_weight.noalias() += d_pre.transpose() * cache.features;
    grads.bottleneck_bias += d_pre.colwise().sum().transpose();
    return d_pre * params_.bottleneck_weight;
  }

 private:
  void validate_config() const {
    if (!(cfg_.sharpness > 0.0)) throw ConfigError("MaskModule: sharpness k must be positive");
    if (cfg_.bottleneck == 0 || cfg_.input_dim == 0) throw ConfigError("MaskModule: zero width");
  }

  MaskConfig cfg_;
  Params params_;
  std::uint64_t generation_ = 0;
};

/// Deep copy of the current mask values.
template <typename Scalar>
MaskSnapshot snapshot_mask(const MaskModule<Scalar>& m, double active_tolerance = 0.01) {
  MaskSnapshot s;
  s.values = m.mask_values().template cast<double>();
  s.active_tolerance = active_tolerance;
  return s;
}

}  // namespace mdaqa
