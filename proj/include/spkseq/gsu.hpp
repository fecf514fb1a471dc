#pragma once

// Position-wise feature mixing: the gated linear unit and its ternary,
// multiplication-free counterpart, the gated spiking unit
//
//   GLU(x) = (x W + b) * sigmoid(x V + c)
//   GSU(x) = (Ter(x) W + b) * (x Ter(W) + c)
//
// Matrices are row-major d x k; x is a row vector of length d.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spkseq/autodiff.hpp"
#include "spkseq/op_counter.hpp"

namespace spkseq::gsu {

constexpr double kDefaultTernaryAlpha = 0.15;

struct GSULayerParams {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<double> W;  // in_dim x out_dim
  std::vector<double> b;  // out_dim
  std::vector<double> c;  // out_dim
  double alpha_ter = kDefaultTernaryAlpha;

  void validate() const;
};

struct GLULayerParams {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<double> W;
  std::vector<double> V;
  std::vector<double> b;
  std::vector<double> c;

  void validate() const;
};

/// Threshold Delta = alpha * max|x| over the whole span; entries >= Delta map
/// to 1, <= -Delta to -1, the rest to 0. An all-zero span maps to all zeros.
std::vector<std::int8_t> ternarize(std::span<const double> x, double alpha);
double ternary_threshold(std::span<const double> x, double alpha);

/// Forward pass built only from signed accumulations plus the final k-wide
/// Hadamard product. Reports its arithmetic to any active OpCountScope.
std::vector<double> gsu_forward(const GSULayerParams& params, std::span<const double> x);

/// Reference GSU evaluated with ordinary dense products.
std::vector<double> gsu_forward_dense(const GSULayerParams& params, std::span<const double> x);

std::vector<double> glu_forward(const GLULayerParams& params, std::span<const double> x);

struct GSUGrads {
  std::vector<double> x;
  std::vector<double> W;
  std::vector<double> b;
  std::vector<double> c;
};

/// Product rule through the gate with Ter passed straight through (identity)
/// on both activations and weights.
GSUGrads gsu_backward(const GSULayerParams& params, std::span<const double> x,
                      std::span<const double> upstream);

/// Runs `forward` under a fresh counter and returns the tally.
OpCounter audit_ops(const std::function<void()>& forward, std::string label = {});

/// Differentiable GSU over rows of x [..., d]; Delta_x is taken per row,
/// Delta_W over the whole weight matrix on every call.
Tensor gsu_mix(const Tensor& x, const Tensor& W, const Tensor& b, const Tensor& c, double alpha_ter);

/// Differentiable GLU over rows of x [..., d].
Tensor glu_mix(const Tensor& x, const Tensor& W, const Tensor& V, const Tensor& b, const Tensor& c);

}  // namespace spkseq::gsu
