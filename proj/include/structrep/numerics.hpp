#pragma once

// Dense building blocks for the encoder: Eigen-backed matrices, the handful of
// differentiable layers the pipeline needs (each with an explicit backward),
// and a counter-based RNG whose stream is defined entirely in this file.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "structrep/errors.hpp"

namespace structrep {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

inline std::string shape_str(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <typename DerivedA, typename DerivedB>
void check_same_shape(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
                      const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": " + shape_str(a.rows(), a.cols()) + " vs " +
                     shape_str(b.rows(), b.cols()));
  }
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

// ---------------------------------------------------------------------------
// matmul

template <typename Scalar>
MatrixX<Scalar> matmul(const MatrixX<Scalar>& a, const MatrixX<Scalar>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a.rows(), a.cols()) + " * " +
                     shape_str(b.rows(), b.cols()));
  }
  return a * b;
}

template <typename Scalar>
struct MatmulGrad {
  MatrixX<Scalar> a;
  MatrixX<Scalar> b;
};

// Given dL/d(a*b), returns dL/da = G bᵀ and dL/db = aᵀ G.
template <typename Scalar>
MatmulGrad<Scalar> matmul_backward(const MatrixX<Scalar>& a, const MatrixX<Scalar>& b,
                                   const MatrixX<Scalar>& grad_out) {
  if (grad_out.rows() != a.rows() || grad_out.cols() != b.cols() || a.cols() != b.rows()) {
    throw ShapeError("matmul_backward: grad " + shape_str(grad_out.rows(), grad_out.cols()) +
                     " for " + shape_str(a.rows(), a.cols()) + " * " +
                     shape_str(b.rows(), b.cols()));
  }
  return {grad_out * b.transpose(), a.transpose() * grad_out};
}

// ---------------------------------------------------------------------------
// L2 normalisation

template <typename Scalar>
VectorX<Scalar> l2_normalize(const VectorX<Scalar>& v) {
  const Scalar norm = v.norm();
  if (!(norm > Scalar(0)) || !std::isfinite(norm)) {
    throw DegenerateInputError("l2_normalize: vector has zero or non-finite norm");
  }
  return v / norm;
}

// Vector-Jacobian product of u = v/|v|: (I - u uᵀ) g / |v|.
template <typename Scalar>
VectorX<Scalar> l2_normalize_backward(const VectorX<Scalar>& v, const VectorX<Scalar>& grad_out) {
  check_same_shape(v, grad_out, "l2_normalize_backward");
  const Scalar norm = v.norm();
  if (!(norm > Scalar(0))) {
    throw DegenerateInputError("l2_normalize_backward: zero vector");
  }
  const VectorX<Scalar> u = v / norm;
  return (grad_out - u * u.dot(grad_out)) / norm;
}

template <typename Scalar>
MatrixX<Scalar> l2_normalize_jacobian(const VectorX<Scalar>& v) {
  const Scalar norm = v.norm();
  if (!(norm > Scalar(0))) {
    throw DegenerateInputError("l2_normalize_jacobian: zero vector");
  }
  const VectorX<Scalar> u = v / norm;
  MatrixX<Scalar> jac = MatrixX<Scalar>::Identity(v.size(), v.size()) - u * u.transpose();
  return jac / norm;
}

// ---------------------------------------------------------------------------
// cosine similarity between unit vectors

inline constexpr double kUnitTolerance = 1e-5;

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine(const Eigen::MatrixBase<DerivedA>& u,
                                 const Eigen::MatrixBase<DerivedB>& v) {
  using Scalar = typename DerivedA::Scalar;
  if (u.size() != v.size()) {
    throw ShapeError("cosine: length " + std::to_string(u.size()) + " vs " +
                     std::to_string(v.size()));
  }
  if (std::abs(u.norm() - Scalar(1)) > Scalar(kUnitTolerance) ||
      std::abs(v.norm() - Scalar(1)) > Scalar(kUnitTolerance)) {
    throw PreconditionError("cosine: inputs must be unit-norm");
  }
  const Scalar d = u.dot(v);
  return std::clamp(d, Scalar(-1), Scalar(1));
}

// ---------------------------------------------------------------------------
// GELU, exact (erf) form

template <std::floating_point Scalar>
Scalar gelu(Scalar x) {
  return Scalar(0.5) * x * (Scalar(1) + std::erf(x * Scalar(std::numbers::sqrt2 / 2)));
}

template <std::floating_point Scalar>
Scalar gelu_grad(Scalar x) {
  const Scalar cdf = Scalar(0.5) * (Scalar(1) + std::erf(x * Scalar(std::numbers::sqrt2 / 2)));
  const Scalar pdf = std::exp(Scalar(-0.5) * x * x) * Scalar(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
  return cdf + x * pdf;
}

template <typename Derived>
auto gelu(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.unaryExpr([](Scalar v) { return gelu(v); });
}

template <typename Derived>
auto gelu_grad(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.unaryExpr([](Scalar v) { return gelu_grad(v); });
}

// ---------------------------------------------------------------------------
// Rng
//
// Counter-based: draw i of a stream keyed by `seed` is
//   splitmix64_finalize(key + (i + 1) * 0x9E3779B97F4A7C15),  key = finalize(seed).
// Only integer arithmetic is involved, so every platform sees the same bits.

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), key_(finalize(seed)) {}

  static constexpr std::uint64_t finalize(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() {
    ++counter_;
    return finalize(key_ + counter_ * kGolden);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), unbiased by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw PreconditionError("Rng::below: n must be positive");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Inclusive integer range.
  int range(int lo, int hi) {
    if (hi < lo) throw PreconditionError("Rng::range: empty range");
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Independent stream identified by (this seed, id); does not advance *this.
  Rng substream(std::uint64_t id) const {
    return Rng(finalize(key_ ^ finalize(id + 0xD1B54A32D192ED03ULL)));
  }

  template <typename Scalar>
  MatrixX<Scalar> uniform_matrix(Eigen::Index rows, Eigen::Index cols, Scalar bound) {
    MatrixX<Scalar> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      m.data()[i] = static_cast<Scalar>(uniform(-double(bound), double(bound)));
    }
    return m;
  }

  template <typename RandomIt>
  void shuffle(RandomIt first, RandomIt last) {
    const auto n = last - first;
    for (auto i = n - 1; i > 0; --i) {
      const auto j = static_cast<decltype(i)>(below(static_cast<std::uint64_t>(i) + 1));
      using std::swap;
      swap(first[i], first[j]);
    }
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace structrep
