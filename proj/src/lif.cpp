#include "spkseq/lif.hpp"

#include <cmath>

#include "spkseq/error.hpp"

namespace spkseq::lif {

namespace {
void check(const LIFParams& p) {
  if (!(p.beta > 0.0 && p.beta < 1.0)) throw ConfigError("LIF beta must lie in (0, 1)");
}
}  // namespace

LIFParams LIFParams::from_time_constant(double dt, double tau, double theta, ResetMode mode) {
  return {std::exp(-dt / tau), theta, mode};
}

LIFState lif_step(const LIFParams& params, LIFState prev, double input) {
  check(params);
  double u = prev.u;
  if (prev.spiked && params.reset_mode == ResetMode::subtract) u -= params.theta;
  LIFState next;
  next.u = params.beta * u + (1.0 - params.beta) * input;
  next.spiked = next.u > params.theta;
  return next;
}

LIFTrace lif_run(const LIFParams& params, std::span<const double> input, LIFState initial) {
  LIFTrace trace;
  trace.membrane.reserve(input.size());
  trace.spikes.reserve(input.size());
  LIFState s = initial;
  for (double i : input) {
    s = lif_step(params, s, i);
    trace.membrane.push_back(s.u);
    trace.spikes.push_back(s.spiked ? 1.0 : 0.0);
  }
  return trace;
}

std::vector<double> lif_kernel(const LIFParams& params, std::size_t length) {
  check(params);
  if (params.reset_mode != ResetMode::none) {
    throw UnsupportedMode("lif_kernel: the reset feedback is not time-invariant; use ResetMode::none");
  }
  std::vector<double> k(length);
  double pw = 1.0;
  for (auto& v : k) {
    v = pw * (1.0 - params.beta);
    pw *= params.beta;
  }
  return k;
}

}  // namespace spkseq::lif
