#include "spkseq/activations.hpp"

#include <cmath>
#include <numbers>

#include "spkseq/error.hpp"
#include "spkseq/ops.hpp"

namespace spkseq {

std::string to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::binary_spike: return "binary_spike";
    case ActivationKind::sat_fast_sigmoid: return "sat_fast_sigmoid";
    case ActivationKind::sat_arctan: return "sat_arctan";
    case ActivationKind::relu_fast_sigmoid: return "relu_fast_sigmoid";
    case ActivationKind::relu_arctan: return "relu_arctan";
    case ActivationKind::gelu: return "gelu";
    case ActivationKind::identity: return "identity";
  }
  return "?";
}

std::string to_string(Surrogate s) { return s == Surrogate::arctan ? "arctan" : "fast_sigmoid"; }

ActivationKind parse_activation_kind(std::string_view name) {
  for (auto k : {ActivationKind::binary_spike, ActivationKind::sat_fast_sigmoid,
                 ActivationKind::sat_arctan, ActivationKind::relu_fast_sigmoid,
                 ActivationKind::relu_arctan, ActivationKind::gelu, ActivationKind::identity}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

Surrogate parse_surrogate(std::string_view name) {
  if (name == "arctan") return Surrogate::arctan;
  if (name == "fast_sigmoid") return Surrogate::fast_sigmoid;
  throw ConfigError("unknown surrogate '" + std::string(name) + "'");
}

namespace act {

double binary_spike_forward(double y, double theta) { return y > theta ? 1.0 : 0.0; }

double fast_sigmoid(double x, double alpha) { return x / (1.0 + std::abs(x) * alpha); }

double fast_sigmoid_grad(double x, double alpha) {
  const double d = alpha * std::abs(x) + 1.0;
  return 1.0 / (d * d);
}

double arctan_sigmoid(double x) { return std::atan(std::numbers::pi * x) / std::numbers::pi; }

double arctan_sigmoid_grad(double x) {
  const double px = std::numbers::pi * x;
  return 1.0 / (1.0 + px * px);
}

double surrogate_backward(double x, const ActivationSpec& spec) {
  return spec.surrogate == Surrogate::fast_sigmoid ? fast_sigmoid_grad(x, spec.alpha)
                                                   : arctan_sigmoid_grad(x);
}

double saturating_forward(double x, const ActivationSpec& spec) {
  switch (spec.kind) {
    case ActivationKind::sat_fast_sigmoid: return fast_sigmoid(x, spec.alpha);
    case ActivationKind::sat_arctan: return arctan_sigmoid(x);
    case ActivationKind::relu_fast_sigmoid: return std::max(0.0, fast_sigmoid(x, spec.alpha));
    case ActivationKind::relu_arctan: return std::max(0.0, arctan_sigmoid(x));
    default: throw ConfigError("saturating_forward: " + to_string(spec.kind) + " is not a saturating baseline");
  }
}

double saturating_backward(double x, const ActivationSpec& spec) {
  switch (spec.kind) {
    case ActivationKind::sat_fast_sigmoid: return fast_sigmoid_grad(x, spec.alpha);
    case ActivationKind::sat_arctan: return arctan_sigmoid_grad(x);
    // Both bases are odd and increasing, so the ReLU passes exactly where x > 0.
    case ActivationKind::relu_fast_sigmoid: return x > 0.0 ? fast_sigmoid_grad(x, spec.alpha) : 0.0;
    case ActivationKind::relu_arctan: return x > 0.0 ? arctan_sigmoid_grad(x) : 0.0;
    default: throw ConfigError("saturating_backward: " + to_string(spec.kind) + " is not a saturating baseline");
  }
}

double gelu_forward(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

}  // namespace act

namespace {

template <typename Fwd, typename Deriv>
Tensor pointwise(const char* name, const Tensor& x, Fwd fwd, Deriv deriv) {
  return record(
      name, {x},
      [&] {
        Tensor out(x.shape());
        auto o = out.data();
        auto in = x.data();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(in[i]);
        return out;
      },
      [deriv](const Tensor& out, std::span<Tensor> in) {
        auto g = out.grad();
        auto xs = in[0].data();
        auto gx = in[0].grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * deriv(xs[i]);
      });
}

}  // namespace

Tensor apply_activation(const Tensor& x, const ActivationSpec& spec) {
  switch (spec.kind) {
    case ActivationKind::identity:
      return x;
    case ActivationKind::gelu:
      return ops::gelu(x);
    case ActivationKind::binary_spike:
      return pointwise(
          "spike", x, [spec](double v) { return act::binary_spike_forward(v, spec.theta); },
          [spec](double v) { return act::surrogate_backward(v - spec.theta, spec); });
    default:
      return pointwise(
          "saturating", x, [spec](double v) { return act::saturating_forward(v, spec); },
          [spec](double v) { return act::saturating_backward(v, spec); });
  }
}

}  // namespace spkseq
