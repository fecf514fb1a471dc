#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "spkseq/autodiff.hpp"
#include "spkseq/ops.hpp"

namespace testutil {

using spkseq::Shape;
using spkseq::Tensor;

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(spkseq::shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v));
}

/// sum(t * w) for a fixed pseudo-random w, so every output element gets a distinct upstream weight.
inline Tensor weighted_sum(const Tensor& t, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  Tensor w = random_tensor(t.shape(), rng);
  return spkseq::ops::sum_all(spkseq::ops::mul(t, w));
}

struct GradCheck {
  double max_error = 0.0;  // |analytic - numeric| / max(|analytic|, |numeric|, floor)
  std::size_t checked = 0;
};

/// Central differences over every element of every input against the tape's gradients.
inline GradCheck check_gradients(const std::function<Tensor(const std::vector<Tensor>&)>& loss_fn,
                                 std::vector<Tensor> inputs, double eps = 1e-6, double floor = 1e-3) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    spkseq::Tape tape;
    spkseq::TapeScope scope(tape);
    loss_fn(inputs).backward();
  }
  GradCheck out;
  spkseq::NoGradScope no_grad;
  for (auto& t : inputs) {
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    auto d = t.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double keep = d[i];
      d[i] = keep + eps;
      const double up = loss_fn(inputs).item();
      d[i] = keep - eps;
      const double down = loss_fn(inputs).item();
      d[i] = keep;
      const double numeric = (up - down) / (2.0 * eps);
      const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      out.max_error = std::max(out.max_error, std::abs(analytic[i] - numeric) / scale);
      ++out.checked;
    }
  }
  return out;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// max_i |a_i - b_i| / max(max_j |b_j|, tiny): error relative to the reference's scale.
inline double max_rel_diff(std::span<const double> a, std::span<const double> b) {
  double scale = 1e-300;
  for (double v : b) scale = std::max(scale, std::abs(v));
  return max_abs_diff(a, b) / scale;
}

}  // namespace testutil
