#include <cmath>

#include "spkseq/error.hpp"
#include "spkseq/fft.hpp"
#include "spkseq/ops.hpp"
#include "spkseq/ssm.hpp"

namespace spkseq::ssm {

namespace {

cplx pair_at(std::span<const double> d, std::size_t i) { return {d[2 * i], d[2 * i + 1]}; }

void add_pair(std::span<double> d, std::size_t i, cplx v) {
  d[2 * i] += v.real();
  d[2 * i + 1] += v.imag();
}

}  // namespace

SSMBank SSMBank::init(std::size_t channels, int d, InitScheme scheme, DeltaRange range,
                      std::uint64_t seed) {
  std::vector<SSMChannelParams> params;
  params.reserve(channels);
  for (std::size_t h = 0; h < channels; ++h) {
    params.push_back(init_channel(scheme, d, static_cast<int>(h), seed, range));
  }
  return from_channels(params);
}

SSMBank SSMBank::from_channels(const std::vector<SSMChannelParams>& channels) {
  if (channels.empty()) throw ShapeError("SSMBank: no channels");
  const std::size_t h = channels.size(), n = channels.front().modes();
  std::vector<double> lnr, im, b, c, d, ld;
  for (const auto& p : channels) {
    if (p.modes() != n) throw ShapeError("SSMBank: channels disagree on mode count");
    lnr.insert(lnr.end(), p.log_neg_real.begin(), p.log_neg_real.end());
    im.insert(im.end(), p.imag.begin(), p.imag.end());
    for (std::size_t k = 0; k < n; ++k) {
      b.push_back(p.B[k].real());
      b.push_back(p.B[k].imag());
      c.push_back(p.C[k].real());
      c.push_back(p.C[k].imag());
    }
    d.push_back(p.D);
    ld.push_back(p.log_delta);
  }
  SSMBank bank;
  bank.log_neg_real = Tensor::parameter({h, n}, std::move(lnr));
  bank.imag = Tensor::parameter({h, n}, std::move(im));
  bank.B = Tensor::parameter({h, n, 2}, std::move(b));
  bank.C = Tensor::parameter({h, n, 2}, std::move(c));
  bank.D = Tensor::parameter({h}, std::move(d));
  bank.log_delta = Tensor::parameter({h}, std::move(ld));
  return bank;
}

SSMChannelParams SSMBank::channel(std::size_t h) const {
  const std::size_t n = modes();
  SSMChannelParams p;
  for (std::size_t k = 0; k < n; ++k) {
    p.log_neg_real.push_back(log_neg_real.data()[h * n + k]);
    p.imag.push_back(imag.data()[h * n + k]);
    p.B.push_back(pair_at(B.data(), h * n + k));
    p.C.push_back(pair_at(C.data(), h * n + k));
  }
  p.D = D.data()[h];
  p.log_delta = log_delta.data()[h];
  return p;
}

std::vector<Tensor> SSMBank::tensors() const { return {log_neg_real, imag, B, C, D, log_delta}; }

std::pair<Tensor, Tensor> discretize(const SSMBank& bank) {
  const std::size_t h = bank.channels();
  const Tensor one(Shape{2}, std::vector<double>{1.0, 0.0});
  Tensor a = ops::complex(ops::neg(ops::exp(bank.log_neg_real)), bank.imag);
  Tensor dt = ops::reshape(ops::exp(bank.log_delta), {h, 1, 1});
  Tensor half_dt_a = ops::mul(a, ops::scale(dt, 0.5));
  Tensor den = ops::sub(one, half_dt_a);
  Tensor a_bar = ops::cdiv(ops::add(one, half_dt_a), den);
  Tensor b_bar = ops::cdiv(ops::mul(bank.B, dt), den);
  return {a_bar, b_bar};
}

Tensor power_kernel(const Tensor& a_bar, const Tensor& z, std::size_t length) {
  if (a_bar.rank() != 3 || a_bar.shape().back() != 2 || a_bar.shape() != z.shape()) {
    throw ShapeError("power_kernel: expected matching [H, N, 2] inputs, got " +
                     shape_str(a_bar.shape()) + " and " + shape_str(z.shape()));
  }
  const std::size_t h = a_bar.dim(0), n = a_bar.dim(1);
  return record(
      "power_kernel", {a_bar, z},
      [&] {
        Tensor out(Shape{h, length});
        auto k = out.data();
        for (std::size_t c = 0; c < h; ++c) {
          for (std::size_t m = 0; m < n; ++m) {
            const cplx a = pair_at(a_bar.data(), c * n + m);
            cplx w = pair_at(z.data(), c * n + m);
            for (std::size_t p = 0; p < length; ++p) {
              k[c * length + p] += 2.0 * w.real();
              w *= a;
            }
          }
        }
        return out;
      },
      [h, n, length](const Tensor& out, std::span<Tensor> in) {
        // K[p] = 2 Re(z a^p): dK/dz pairs with 2 conj(a^p), dK/da with 2 conj(p z a^(p-1)).
        auto g = out.grad();
        std::span<double> ga = in[0].requires_grad() ? in[0].grad_buffer() : std::span<double>{};
        std::span<double> gz = in[1].requires_grad() ? in[1].grad_buffer() : std::span<double>{};
        for (std::size_t c = 0; c < h; ++c) {
          for (std::size_t m = 0; m < n; ++m) {
            const std::size_t i = c * n + m;
            const cplx a = pair_at(in[0].data(), i);
            const cplx zz = pair_at(in[1].data(), i);
            cplx pw(1.0, 0.0), prev(0.0, 0.0);
            cplx acc_z(0.0, 0.0), acc_a(0.0, 0.0);
            for (std::size_t p = 0; p < length; ++p) {
              const double gp = g[c * length + p];
              acc_z += gp * std::conj(pw);
              if (p > 0) acc_a += gp * static_cast<double>(p) * std::conj(prev);
              prev = pw;
              pw *= a;
            }
            if (!gz.empty()) add_pair(gz, i, 2.0 * acc_z);
            if (!ga.empty()) add_pair(ga, i, 2.0 * std::conj(zz) * acc_a);
          }
        }
      });
}

Tensor bank_kernel(const SSMBank& bank, std::size_t length) {
  auto [a_bar, b_bar] = discretize(bank);
  return power_kernel(a_bar, ops::cmul(bank.C, b_bar), length);
}

Tensor causal_conv(const Tensor& kernel, const Tensor& x) {
  if (kernel.rank() != 2 || x.rank() != 3 || kernel.dim(0) != x.dim(2) || kernel.dim(1) != x.dim(1)) {
    throw ShapeError("causal_conv: kernel " + shape_str(kernel.shape()) + " incompatible with input " +
                     shape_str(x.shape()));
  }
  const std::size_t batch = x.dim(0), len = x.dim(1), h = x.dim(2);
  const std::size_t n = fft::linear_conv_size(len), bins = n / 2 + 1;
  return record(
      "causal_conv", {kernel, x},
      [&] {
        Tensor out(x.shape());
        auto y = out.data();
        auto xs = x.data();
        auto ks = kernel.data();
#pragma omp parallel for schedule(static)
        for (std::size_t c = 0; c < h; ++c) {
          std::vector<cplx> kf(bins), xf(bins);
          std::vector<double> col(len);
          fft::rfft(ks.subspan(c * len, len), n, kf);
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t t = 0; t < len; ++t) col[t] = xs[(b * len + t) * h + c];
            fft::rfft(col, n, xf);
            for (std::size_t k = 0; k < bins; ++k) xf[k] *= kf[k];
            fft::irfft(xf, n, col);
            for (std::size_t t = 0; t < len; ++t) y[(b * len + t) * h + c] = col[t];
          }
        }
        return out;
      },
      [batch, len, h, n, bins](const Tensor& out, std::span<Tensor> in) {
        // Both adjoints are correlations: multiply by the conjugate spectrum.
        auto g = out.grad();
        const bool need_k = in[0].requires_grad(), need_x = in[1].requires_grad();
        std::span<double> gk = need_k ? in[0].grad_buffer() : std::span<double>{};
        std::span<double> gx = need_x ? in[1].grad_buffer() : std::span<double>{};
        auto ks = in[0].data();
        auto xs = in[1].data();
#pragma omp parallel for schedule(static)
        for (std::size_t c = 0; c < h; ++c) {
          std::vector<cplx> kf(bins), gf(bins), xf(bins), acc(bins, cplx(0.0, 0.0));
          std::vector<double> col(len);
          fft::rfft(ks.subspan(c * len, len), n, kf);
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t t = 0; t < len; ++t) col[t] = g[(b * len + t) * h + c];
            fft::rfft(col, n, gf);
            if (need_x) {
              for (std::size_t k = 0; k < bins; ++k) xf[k] = std::conj(kf[k]) * gf[k];
              fft::irfft(xf, n, col);
              for (std::size_t t = 0; t < len; ++t) gx[(b * len + t) * h + c] += col[t];
            }
            if (need_k) {
              for (std::size_t t = 0; t < len; ++t) col[t] = xs[(b * len + t) * h + c];
              fft::rfft(col, n, xf);
              for (std::size_t k = 0; k < bins; ++k) acc[k] += std::conj(xf[k]) * gf[k];
            }
          }
          if (need_k) {
            fft::irfft(acc, n, col);
            for (std::size_t p = 0; p < len; ++p) gk[c * len + p] += col[p];
          }
        }
      });
}

Tensor ssm_layer_forward(const SSMLayerParams& layer, const Tensor& x, bool bidirectional) {
  if (x.rank() != 3 || x.dim(2) != layer.forward.channels()) {
    throw ShapeError("ssm_layer_forward: input " + shape_str(x.shape()) + " for " +
                     std::to_string(layer.forward.channels()) + " channels");
  }
  if (bidirectional && !layer.backward) {
    throw ShapeError("ssm_layer_forward: bidirectional layer has no backward parameter set");
  }
  const std::size_t len = x.dim(1);
  Tensor y = ops::add(causal_conv(bank_kernel(layer.forward, len), x), ops::mul(x, layer.forward.D));
  if (bidirectional) {
    const SSMBank& bwd = *layer.backward;
    Tensor rev = causal_conv(bank_kernel(bwd, len), ops::reverse(x, 1));
    y = ops::add(y, ops::add(ops::reverse(rev, 1), ops::mul(x, bwd.D)));
  }
  return y;
}

}  // namespace spkseq::ssm
