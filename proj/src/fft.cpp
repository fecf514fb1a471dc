#include "spkseq/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>
#include <unordered_map>

#include "spkseq/error.hpp"

namespace spkseq::fft {

namespace {

struct Plans {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

template <typename T>
struct FftwBuffer {
  T* ptr = nullptr;
  std::size_t size = 0;

  FftwBuffer() = default;
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  ~FftwBuffer() { fftw_free(ptr); }

  T* reserve(std::size_t n) {
    if (n > size) {
      fftw_free(ptr);
      ptr = static_cast<T*>(fftw_malloc(sizeof(T) * n));
      if (!ptr) throw std::bad_alloc();
      size = n;
    }
    return ptr;
  }
};

// Plan creation is not thread-safe in FFTW; execution with the new-array
// interface is. ESTIMATE plans are deterministic across runs.
std::mutex g_plan_mutex;
std::unordered_map<std::size_t, Plans> g_plans;

Plans plans_for(std::size_t n) {
  thread_local std::unordered_map<std::size_t, Plans> local;
  if (auto it = local.find(n); it != local.end()) return it->second;

  std::lock_guard lock(g_plan_mutex);
  auto it = g_plans.find(n);
  if (it == g_plans.end()) {
    FftwBuffer<double> real;
    FftwBuffer<fftw_complex> spectrum;
    real.reserve(n);
    spectrum.reserve(n / 2 + 1);
    const int size = static_cast<int>(n);
    Plans p;
    p.forward = fftw_plan_dft_r2c_1d(size, real.ptr, spectrum.ptr, FFTW_ESTIMATE);
    p.inverse = fftw_plan_dft_c2r_1d(size, spectrum.ptr, real.ptr, FFTW_ESTIMATE);
    if (!p.forward || !p.inverse) throw Error("fftw: plan creation failed for n=" + std::to_string(n));
    it = g_plans.emplace(n, p).first;
  }
  local.emplace(n, it->second);
  return it->second;
}

struct Scratch {
  FftwBuffer<double> real;
  FftwBuffer<fftw_complex> spectrum;
};

Scratch& scratch() {
  thread_local Scratch s;
  return s;
}

}  // namespace

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

std::size_t linear_conv_size(std::size_t length) {
  return next_pow2(length == 0 ? 1 : 2 * length - 1);
}

void rfft(std::span<const double> in, std::size_t n, std::span<cplx> out) {
  if (in.size() > n) throw ShapeError("rfft: input longer than transform size");
  if (out.size() != n / 2 + 1) throw ShapeError("rfft: output must hold n/2+1 bins");
  const Plans plans = plans_for(n);
  auto& s = scratch();
  double* buf = s.real.reserve(n);
  fftw_complex* spec = s.spectrum.reserve(n / 2 + 1);
  std::copy(in.begin(), in.end(), buf);
  std::fill(buf + in.size(), buf + n, 0.0);
  fftw_execute_dft_r2c(plans.forward, buf, spec);
  std::copy_n(reinterpret_cast<const cplx*>(spec), n / 2 + 1, out.begin());
}

void irfft(std::span<const cplx> in, std::size_t n, std::span<double> out) {
  if (in.size() != n / 2 + 1) throw ShapeError("irfft: input must hold n/2+1 bins");
  if (out.size() > n) throw ShapeError("irfft: output longer than transform size");
  const Plans plans = plans_for(n);
  auto& s = scratch();
  double* buf = s.real.reserve(n);
  fftw_complex* spec = s.spectrum.reserve(n / 2 + 1);
  // c2r overwrites its input, so always work on the scratch copy.
  std::copy(in.begin(), in.end(), reinterpret_cast<cplx*>(spec));
  fftw_execute_dft_c2r(plans.inverse, spec, buf);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = buf[i] * scale;
}

}  // namespace spkseq::fft
