#include "spkseq/ssm.hpp"

#include <cmath>
#include <numbers>

#include "spkseq/error.hpp"
#include "spkseq/fft.hpp"

namespace spkseq::ssm {

cplx SSMChannelParams::eigenvalue(std::size_t n) const {
  return {-std::exp(log_neg_real.at(n)), imag.at(n)};
}

double SSMChannelParams::delta() const { return std::exp(log_delta); }

namespace {

void check_state_dim(int d) {
  if (d < 2 || d % 2 != 0) {
    throw InvalidDimension("SSM state dimension must be even and >= 2, got " + std::to_string(d));
  }
}

std::mt19937_64 channel_rng(std::uint64_t seed, int channel_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(channel_index), 0x5eedu};
  return std::mt19937_64(seq);
}

// Shared by both schemes: real part -1/2, B = 1, C ~ CN(0, 1), D = 1.
SSMChannelParams init_common(std::vector<double> imag, std::uint64_t seed, int channel_index,
                             DeltaRange range) {
  const std::size_t n = imag.size();
  SSMChannelParams p;
  p.log_neg_real.assign(n, std::log(0.5));
  p.imag = std::move(imag);
  p.B.assign(n, cplx(1.0, 0.0));
  auto rng = channel_rng(seed, channel_index);
  std::normal_distribution<double> half_var(0.0, std::sqrt(0.5));
  p.C.resize(n);
  for (auto& c : p.C) {
    const double re = half_var(rng);
    const double im = half_var(rng);
    c = {re, im};
  }
  p.D = 1.0;
  p.log_delta = init_delta(range.min, range.max, rng);
  return p;
}

}  // namespace

double init_delta(double delta_min, double delta_max, std::mt19937_64& rng) {
  if (!(delta_min > 0.0) || !(delta_max > delta_min)) {
    throw ConfigError("init_delta: require 0 < delta_min < delta_max");
  }
  std::uniform_real_distribution<double> u(std::log(delta_min), std::log(delta_max));
  return u(rng);
}

SSMChannelParams init_s4d_lin(int d, int channel_index, std::uint64_t seed, DeltaRange range) {
  check_state_dim(d);
  std::vector<double> imag(static_cast<std::size_t>(d / 2));
  for (std::size_t n = 0; n < imag.size(); ++n) imag[n] = std::numbers::pi * static_cast<double>(n);
  return init_common(std::move(imag), seed, channel_index, range);
}

SSMChannelParams init_s4d_inv(int d, int channel_index, std::uint64_t seed, DeltaRange range) {
  check_state_dim(d);
  const double dd = static_cast<double>(d);
  std::vector<double> imag(static_cast<std::size_t>(d / 2));
  for (std::size_t n = 0; n < imag.size(); ++n) {
    imag[n] = dd / std::numbers::pi * (dd / (2.0 * static_cast<double>(n) + 1.0) - 1.0);
  }
  return init_common(std::move(imag), seed, channel_index, range);
}

SSMChannelParams init_channel(InitScheme scheme, int d, int channel_index, std::uint64_t seed,
                              DeltaRange range) {
  return scheme == InitScheme::lin ? init_s4d_lin(d, channel_index, seed, range)
                                   : init_s4d_inv(d, channel_index, seed, range);
}

DiscretizedKernel discretize_bilinear(const SSMChannelParams& params) {
  const double dt = params.delta();
  DiscretizedKernel out;
  out.a_bar.resize(params.modes());
  out.b_bar.resize(params.modes());
  for (std::size_t n = 0; n < params.modes(); ++n) {
    const cplx a = params.eigenvalue(n);
    const cplx inv_den = 1.0 / (1.0 - dt / 2.0 * a);
    out.a_bar[n] = inv_den * (1.0 + dt / 2.0 * a);
    out.b_bar[n] = inv_den * dt * params.B[n];
  }
  return out;
}

std::vector<double> compute_kernel(const DiscretizedKernel& disc, std::span<const cplx> C,
                                   std::size_t length) {
  if (C.size() != disc.a_bar.size()) throw ShapeError("compute_kernel: C/mode count mismatch");
  std::vector<double> k(length, 0.0);
  for (std::size_t n = 0; n < C.size(); ++n) {
    cplx w = C[n] * disc.b_bar[n];
    for (std::size_t p = 0; p < length; ++p) {
      k[p] += 2.0 * w.real();
      w *= disc.a_bar[n];
    }
  }
  return k;
}

DiscretizedKernel materialize(const SSMChannelParams& params, std::size_t length) {
  DiscretizedKernel disc = discretize_bilinear(params);
  disc.kernel = compute_kernel(disc, params.C, length);
  return disc;
}

std::vector<double> conv_fft(std::span<const double> kernel, std::span<const double> input) {
  if (kernel.size() != input.size()) {
    throw ShapeError("conv_fft: kernel length " + std::to_string(kernel.size()) +
                     " != input length " + std::to_string(input.size()));
  }
  const std::size_t len = input.size();
  if (len == 0) return {};
  const std::size_t n = fft::linear_conv_size(len);
  std::vector<cplx> kf(n / 2 + 1), xf(n / 2 + 1);
  fft::rfft(kernel, n, kf);
  fft::rfft(input, n, xf);
  for (std::size_t k = 0; k < xf.size(); ++k) xf[k] *= kf[k];
  std::vector<double> y(len);
  fft::irfft(xf, n, y);
  return y;
}

std::vector<double> conv_naive(std::span<const double> kernel, std::span<const double> input) {
  if (kernel.size() != input.size()) {
    throw ShapeError("conv_naive: kernel length " + std::to_string(kernel.size()) +
                     " != input length " + std::to_string(input.size()));
  }
  std::vector<double> y(input.size(), 0.0);
  for (std::size_t t = 0; t < input.size(); ++t) {
    double acc = 0.0;
    for (std::size_t p = 0; p <= t; ++p) acc += kernel[p] * input[t - p];
    y[t] = acc;
  }
  return y;
}

ScanResult scan_iterative(const SSMChannelParams& params, std::span<const double> input) {
  ChannelScanner scanner(params);
  ScanResult r;
  r.outputs.reserve(input.size());
  for (double x : input) r.outputs.push_back(scanner.step(x));
  r.final_state.assign(scanner.state().begin(), scanner.state().end());
  return r;
}

ChannelScanner::ChannelScanner(const SSMChannelParams& params)
    : c_(params.C), state_(params.modes(), cplx(0.0, 0.0)), d_(params.D) {
  DiscretizedKernel disc = discretize_bilinear(params);
  a_bar_ = std::move(disc.a_bar);
  b_bar_ = std::move(disc.b_bar);
}

double ChannelScanner::step(double input) {
  cplx acc(0.0, 0.0);
  for (std::size_t n = 0; n < state_.size(); ++n) {
    state_[n] = a_bar_[n] * state_[n] + b_bar_[n] * input;
    acc += c_[n] * state_[n];
  }
  return 2.0 * acc.real() + d_ * input;
}

void ChannelScanner::reset() { std::fill(state_.begin(), state_.end(), cplx(0.0, 0.0)); }

}  // namespace spkseq::ssm
