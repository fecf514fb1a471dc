#pragma once

#include <string>
#include <string_view>

#include "spkseq/autodiff.hpp"

namespace spkseq {

enum class ActivationKind {
  binary_spike,
  sat_fast_sigmoid,
  sat_arctan,
  relu_fast_sigmoid,
  relu_arctan,
  gelu,
  identity,
};

enum class Surrogate { fast_sigmoid, arctan };

struct ActivationSpec {
  ActivationKind kind = ActivationKind::gelu;
  Surrogate surrogate = Surrogate::arctan;  // binary_spike only
  double theta = 0.0;
  double alpha = 25.0;  // fast-sigmoid slope

  static ActivationSpec spike(Surrogate s, double alpha = 25.0) {
    return {ActivationKind::binary_spike, s, 0.0, alpha};
  }
};

std::string to_string(ActivationKind kind);
std::string to_string(Surrogate s);
ActivationKind parse_activation_kind(std::string_view name);
Surrogate parse_surrogate(std::string_view name);

namespace act {

/// 1 iff y > theta (strict).
double binary_spike_forward(double y, double theta = 0.0);

/// Surrogate derivative at preactivation x (relative to the threshold).
double surrogate_backward(double x, const ActivationSpec& spec);

double fast_sigmoid(double x, double alpha);
double fast_sigmoid_grad(double x, double alpha);
double arctan_sigmoid(double x);
double arctan_sigmoid_grad(double x);

/// Value of one of the four continuous saturating baselines.
double saturating_forward(double x, const ActivationSpec& spec);
/// Analytic derivative of saturating_forward (ReLU nesting included).
double saturating_backward(double x, const ActivationSpec& spec);

double gelu_forward(double x);

}  // namespace act

/// Differentiable elementwise activation. binary_spike uses a straight-through
/// structure: forward thresholds, backward multiplies by the surrogate derivative.
Tensor apply_activation(const Tensor& x, const ActivationSpec& spec);

}  // namespace spkseq
