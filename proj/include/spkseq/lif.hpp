#pragma once

#include <span>
#include <vector>

namespace spkseq::lif {

enum class ResetMode { subtract, none };

/// Discrete leaky integrate-and-fire neuron with unit input resistance.
/// beta = exp(-dt / tau) is the per-step decay.
struct LIFParams {
  double beta = 0.9;
  double theta = 1.0;
  ResetMode reset_mode = ResetMode::subtract;

  static LIFParams from_time_constant(double dt, double tau, double theta, ResetMode mode);
};

struct LIFState {
  double u = 0.0;
  bool spiked = false;
};

/// One step: reset (on the previous spike), leak-integrate, threshold.
LIFState lif_step(const LIFParams& params, LIFState prev, double input);

struct LIFTrace {
  std::vector<double> membrane;
  std::vector<double> spikes;
};

LIFTrace lif_run(const LIFParams& params, std::span<const double> input, LIFState initial = {});

/// Impulse response of the reset-free neuron: kernel[p] = beta^p (1 - beta).
std::vector<double> lif_kernel(const LIFParams& params, std::size_t length);

}  // namespace spkseq::lif
