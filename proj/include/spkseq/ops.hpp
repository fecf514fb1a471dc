#pragma once

// Differentiable tensor operations. Every op records on the active tape when
// an input requires a gradient; otherwise it is a plain evaluation.
//
// Complex values are stored as trailing pairs: a tensor of shape [..., 2]
// holds (re, im). Gradients of complex pairs follow the same layout, i.e.
// (dL/dRe, dL/dIm).

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "spkseq/autodiff.hpp"

namespace spkseq::ops {

// Elementwise binary ops with right-aligned (numpy-style) broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor erf(const Tensor& a);
Tensor logistic(const Tensor& a);
Tensor relu(const Tensor& a);
/// Exact (erf-based) GELU: x * Phi(x).
Tensor gelu(const Tensor& a);

/// a[..., K] x b[K, M] -> [..., M].
Tensor matmul(const Tensor& a, const Tensor& b);
/// Swap of the two axes of a rank-2 tensor.
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
Tensor reverse(const Tensor& a, std::size_t axis);

Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a, std::size_t axis);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

// Complex-pair helpers.
Tensor complex(const Tensor& re, const Tensor& im);
Tensor real(const Tensor& z);
Tensor cmul(const Tensor& a, const Tensor& b);
Tensor cdiv(const Tensor& a, const Tensor& b);

/// Real-to-complex DFT along the last axis, zero-padded to n: [..., L] -> [..., n/2+1, 2].
Tensor rfft(const Tensor& x, std::size_t n);
/// Inverse of rfft: [..., n/2+1, 2] -> [..., out_len], truncated after the inverse transform.
Tensor irfft(const Tensor& spectrum, std::size_t n, std::size_t out_len);

/// Inverted dropout. Identity (same tensor) when !training or p == 0.
Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64& rng);

/// Normalises over the last axis, then applies gamma/beta (both [features]).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-feature (last axis) normalisation across all leading axes. In training
/// mode uses batch statistics and updates the running estimates.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training);

/// Mean softmax cross-entropy of logits [B, C] against integer labels.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

}  // namespace spkseq::ops
