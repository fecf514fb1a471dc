#pragma once

// Diagonal single-input single-output state-space channels.
//
// Each channel stores d/2 complex modes; the other d/2 are their conjugates
// and are never materialised, so every real output is 2 * Re(...) of the
// stored half. Continuous parameters are kept in trainable form:
//   A_n = -exp(log_neg_real[n]) + j * imag[n],   delta = exp(log_delta).

#include <complex>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "spkseq/autodiff.hpp"

namespace spkseq::ssm {

using cplx = std::complex<double>;

enum class InitScheme { lin, inv };

struct DeltaRange {
  double min = 0.001;
  double max = 0.1;
};

struct SSMChannelParams {
  std::vector<double> log_neg_real;
  std::vector<double> imag;
  std::vector<cplx> B;
  std::vector<cplx> C;
  double D = 1.0;
  double log_delta = 0.0;

  std::size_t modes() const { return log_neg_real.size(); }
  std::size_t state_dim() const { return 2 * modes(); }
  cplx eigenvalue(std::size_t n) const;
  double delta() const;
};

struct DiscretizedKernel {
  std::vector<cplx> a_bar;
  std::vector<cplx> b_bar;
  std::vector<double> kernel;
  std::size_t length() const { return kernel.size(); }
};

SSMChannelParams init_s4d_lin(int d, int channel_index, std::uint64_t seed, DeltaRange range = {});
SSMChannelParams init_s4d_inv(int d, int channel_index, std::uint64_t seed, DeltaRange range = {});
SSMChannelParams init_channel(InitScheme scheme, int d, int channel_index, std::uint64_t seed,
                              DeltaRange range = {});

/// log of a step size drawn log-uniformly from [delta_min, delta_max].
double init_delta(double delta_min, double delta_max, std::mt19937_64& rng);

/// Bilinear (Tustin) transform of every mode; fills a_bar and b_bar only.
DiscretizedKernel discretize_bilinear(const SSMChannelParams& params);

/// K[p] = 2 Re(sum_n C[n] a_bar[n]^p b_bar[n]) for p in [0, L), via a running power scan.
std::vector<double> compute_kernel(const DiscretizedKernel& disc, std::span<const cplx> C,
                                   std::size_t length);

/// discretize_bilinear followed by compute_kernel.
DiscretizedKernel materialize(const SSMChannelParams& params, std::size_t length);

/// Causal linear convolution y[t] = sum_{p<=t} K[p] i[t-p] through a zero-padded FFT.
std::vector<double> conv_fft(std::span<const double> kernel, std::span<const double> input);
/// Direct O(L^2) evaluation of the same sum.
std::vector<double> conv_naive(std::span<const double> kernel, std::span<const double> input);

struct ScanResult {
  std::vector<double> outputs;
  std::vector<cplx> final_state;
};

/// Recurrent evaluation u[t] = a_bar * u[t-1] + b_bar * i[t], y[t] = 2 Re(C u[t]) + D i[t].
ScanResult scan_iterative(const SSMChannelParams& params, std::span<const double> input);

/// Step-at-a-time form of scan_iterative with constant-size state.
class ChannelScanner {
 public:
  explicit ChannelScanner(const SSMChannelParams& params);
  double step(double input);
  void reset();
  std::span<const cplx> state() const { return state_; }

 private:
  std::vector<cplx> a_bar_, b_bar_, c_, state_;
  double d_;
};

// ---------------------------------------------------------------------------
// Tensor-backed channel banks used by the network.

/// H channels of N = d/2 modes each, stored as trainable tensors.
struct SSMBank {
  Tensor log_neg_real;  // [H, N]
  Tensor imag;          // [H, N]
  Tensor B;             // [H, N, 2]
  Tensor C;             // [H, N, 2]
  Tensor D;             // [H]
  Tensor log_delta;     // [H]

  static SSMBank init(std::size_t channels, int d, InitScheme scheme, DeltaRange range,
                      std::uint64_t seed);
  static SSMBank from_channels(const std::vector<SSMChannelParams>& channels);

  std::size_t channels() const { return D.numel(); }
  std::size_t modes() const { return log_neg_real.dim(1); }
  SSMChannelParams channel(std::size_t h) const;
  std::vector<Tensor> tensors() const;
};

struct SSMLayerParams {
  SSMBank forward;
  std::optional<SSMBank> backward;  // present for bidirectional layers
};

/// Differentiable discretisation of a bank: a_bar and b_bar as [H, N, 2].
std::pair<Tensor, Tensor> discretize(const SSMBank& bank);

/// Differentiable power-scan kernel: a_bar, z = C*b_bar ([H, N, 2]) -> [H, L].
Tensor power_kernel(const Tensor& a_bar, const Tensor& z, std::size_t length);

/// Full differentiable kernel of a bank: [H, L].
Tensor bank_kernel(const SSMBank& bank, std::size_t length);

/// Differentiable per-channel causal convolution: kernel [H, L], x [B, L, H] -> [B, L, H].
Tensor causal_conv(const Tensor& kernel, const Tensor& x);

/// Every feature column through its own channel (FFT path, D feedthrough included).
/// Bidirectional layers add the backward bank's response to the time-reversed input.
Tensor ssm_layer_forward(const SSMLayerParams& layer, const Tensor& x, bool bidirectional);

}  // namespace spkseq::ssm
