#pragma once

// Dense numeric kernels shared by every layer: Eigen aliases, checked products,
// activations, position softmax and the seeded random stream.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>

#include "mdaqa/errors.hpp"

namespace mdaqa {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using RealMatrix = Matrix<double>;
using RealVector = Vector<double>;

/// Half-open index interval [begin, end) over sequence positions.
struct IndexInterval {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end > begin ? end - begin : 0; }
  bool empty() const { return end <= begin; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
  bool operator==(const IndexInterval&) const = default;
};

template <typename Derived>
std::string shape_string(const Eigen::EigenBase<Derived>& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

template <typename A, typename B>
void require_same_shape(const Eigen::EigenBase<A>& a, const Eigen::EigenBase<B>& b,
                        std::string_view what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a) + " vs " +
                     shape_string(b));
  }
}

/// Matrix product with an explicit shape check (Eigen only asserts in debug).
template <typename A, typename B>
Matrix<typename A::Scalar> matmul(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: cannot multiply " + shape_string(a) + " by " + shape_string(b));
  }
  return a * b;
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  using std::exp;
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-x));
  const Scalar e = exp(x);
  return e / (Scalar(1) + e);
}

/// d/dx sigmoid(x) = s (1 - s), evaluated without cancellation for large |x|.
template <typename Scalar>
Scalar sigmoid_derivative(Scalar x) {
  const Scalar s = sigmoid(x);
  const Scalar t = sigmoid(-x);
  return s * t;
}

template <typename Derived>
Vector<typename Derived::Scalar> sigmoid_vec(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  return v.unaryExpr([](Scalar x) { return sigmoid(x); });
}

/// Softmax over the positions in `valid`; positions outside get probability 0.
template <typename Derived>
Vector<typename Derived::Scalar> softmax_positions(const Eigen::MatrixBase<Derived>& logits,
                                                   IndexInterval valid) {
  using Scalar = typename Derived::Scalar;
  const auto n = static_cast<std::size_t>(logits.size());
  if (valid.empty()) throw DomainError("softmax_positions: empty valid range");
  if (valid.end > n) {
    throw DomainError("softmax_positions: valid range [" + std::to_string(valid.begin) + "," +
                      std::to_string(valid.end) + ") exceeds length " + std::to_string(n));
  }
  const auto b = static_cast<Eigen::Index>(valid.begin);
  const auto len = static_cast<Eigen::Index>(valid.size());
  Vector<Scalar> out = Vector<Scalar>::Zero(logits.size());
  const Scalar peak = logits.derived().segment(b, len).maxCoeff();
  auto seg = out.segment(b, len);
  seg = (logits.derived().segment(b, len).array() - peak).exp().matrix();
  seg /= seg.sum();
  return out;
}

/// log of softmax_positions at index `at`, computed with log-sum-exp.
template <typename Derived>
typename Derived::Scalar log_softmax_at(const Eigen::MatrixBase<Derived>& logits,
                                        IndexInterval valid, std::size_t at) {
  using std::exp;
  using std::log;
  using Scalar = typename Derived::Scalar;
  const auto b = static_cast<Eigen::Index>(valid.begin);
  const auto len = static_cast<Eigen::Index>(valid.size());
  const auto seg = logits.derived().segment(b, len);
  const Scalar peak = seg.maxCoeff();
  const Scalar lse = peak + log((seg.array() - peak).exp().sum());
  return logits(static_cast<Eigen::Index>(at)) - lse;
}

/// Deterministic random stream: SplitMix64 seeding over std::mt19937_64.
///
/// The engine's output sequence is fixed by the C++ standard, and every
/// conversion to reals and bounded integers is done here rather than through
/// <random> distributions (whose algorithms are implementation-defined), so a
/// given seed yields the same values on every platform. Independent consumers
/// (data, init, shuffling, ...) take their own stream via `stream(name)`.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) : seed_(seed), engine_(mix(seed)) {}

  std::uint64_t seed() const { return seed_; }

  /// Child stream keyed by a label; does not advance this stream.
  SeededRng stream(std::string_view label) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (const char c : label) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    return SeededRng(mix(seed_ ^ mix(h)));
  }
  SeededRng stream(std::uint64_t index) const { return SeededRng(mix(seed_ + mix(index + 1))); }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) {
    const double v = lo + (hi - lo) * uniform01();
    return v < hi ? v : lo;
  }

  /// Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw DomainError("SeededRng::below: empty range");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  /// Inclusive integer range [lo, hi].
  std::int64_t between(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw DomainError("SeededRng::between: hi < lo");
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  /// Index drawn proportionally to non-negative `weights`.
  template <typename Range>
  std::size_t categorical(const Range& weights) {
    double total = 0.0;
    for (const double w : weights) total += w;
    if (!(total > 0.0)) throw DomainError("SeededRng::categorical: weights sum to zero");
    double r = uniform01() * total;
    std::size_t i = 0;
    std::size_t last = 0;
    for (const double w : weights) {
      if (w > 0.0) last = i;
      if (r < w) return i;
      r -= w;
      ++i;
    }
    return last;
  }

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {  // SplitMix64 finalizer
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

inline RealVector sample_uniform(SeededRng& rng, double lo, double hi, std::size_t n) {
  if (!(lo < hi)) throw DomainError("sample_uniform: requires lo < hi");
  RealVector out(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = rng.uniform(lo, hi);
  return out;
}

inline RealMatrix sample_uniform(SeededRng& rng, double lo, double hi, std::size_t rows,
                                 std::size_t cols) {
  if (!(lo < hi)) throw DomainError("sample_uniform: requires lo < hi");
  RealMatrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = rng.uniform(lo, hi);
  return out;
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace mdaqa
