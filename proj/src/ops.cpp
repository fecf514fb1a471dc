#include "spkseq/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "spkseq/error.hpp"
#include "spkseq/fft.hpp"
#include "spkseq/op_counter.hpp"

namespace spkseq::ops {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

// ---------------------------------------------------------------------------
// Broadcasting

enum class BroadcastKind { same, suffix_b, suffix_a, general };

struct BroadcastPlan {
  Shape out;
  BroadcastKind kind = BroadcastKind::same;
  std::size_t small = 1;  // numel of the repeating operand for suffix kinds
  std::vector<std::size_t> stride_a, stride_b;
};

Shape strip_leading_ones(const Shape& s) {
  std::size_t i = 0;
  while (i < s.size() && s[i] == 1) ++i;
  return Shape(s.begin() + static_cast<std::ptrdiff_t>(i), s.end());
}

bool is_suffix(const Shape& small, const Shape& big) {
  Shape s = strip_leading_ones(small);
  if (s.size() > big.size()) return false;
  return std::equal(s.begin(), s.end(), big.end() - static_cast<std::ptrdiff_t>(s.size()));
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  BroadcastPlan p;
  const std::size_t rank = std::max(a.size(), b.size());
  p.out.assign(rank, 1);
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t da = k + a.size() >= rank ? a[k + a.size() - rank] : 1;
    const std::size_t db = k + b.size() >= rank ? b[k + b.size() - rank] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                       shape_str(b));
    }
    p.out[k] = std::max(da, db);
  }
  if (a == b) {
    p.kind = BroadcastKind::same;
  } else if (shape_numel(a) == shape_numel(p.out) && is_suffix(b, p.out)) {
    p.kind = BroadcastKind::suffix_b;
    p.small = shape_numel(b);
  } else if (shape_numel(b) == shape_numel(p.out) && is_suffix(a, p.out)) {
    p.kind = BroadcastKind::suffix_a;
    p.small = shape_numel(a);
  } else {
    p.kind = BroadcastKind::general;
    auto strides = [&](const Shape& s) {
      std::vector<std::size_t> st(rank, 0);
      std::size_t acc = 1;
      for (std::size_t k = rank; k-- > 0;) {
        const std::size_t off = rank - s.size();
        const std::size_t d = k >= off ? s[k - off] : 1;
        st[k] = d == 1 ? 0 : acc;
        acc *= d;
      }
      return st;
    };
    p.stride_a = strides(a);
    p.stride_b = strides(b);
  }
  return p;
}

template <typename F>
void visit(const BroadcastPlan& p, F&& f) {
  const std::size_t n = shape_numel(p.out);
  switch (p.kind) {
    case BroadcastKind::same:
      for (std::size_t i = 0; i < n; ++i) f(i, i, i);
      return;
    case BroadcastKind::suffix_b:
      for (std::size_t i = 0; i < n; ++i) f(i, i, i % p.small);
      return;
    case BroadcastKind::suffix_a:
      for (std::size_t i = 0; i < n; ++i) f(i, i % p.small, i);
      return;
    case BroadcastKind::general: {
      const std::size_t rank = p.out.size();
      std::vector<std::size_t> idx(rank, 0);
      std::size_t ia = 0, ib = 0;
      for (std::size_t i = 0; i < n; ++i) {
        f(i, ia, ib);
        for (std::size_t k = rank; k-- > 0;) {
          ++idx[k];
          ia += p.stride_a[k];
          ib += p.stride_b[k];
          if (idx[k] < p.out[k]) break;
          ia -= p.stride_a[k] * idx[k];
          ib -= p.stride_b[k] * idx[k];
          idx[k] = 0;
        }
      }
      return;
    }
  }
}

// dA and dB are partial derivatives of the elementwise result w.r.t. each operand.
template <typename Fwd, typename DA, typename DB>
Tensor binary(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, DA da, DB db) {
  auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(a.shape(), b.shape(), name));
  return record(
      name, {a, b},
      [&] {
        Tensor out(plan->out);
        auto o = out.data();
        auto x = a.data();
        auto y = b.data();
        visit(*plan, [&](std::size_t i, std::size_t ia, std::size_t ib) { o[i] = fwd(x[ia], y[ib]); });
        return out;
      },
      [plan, da, db](const Tensor& out, std::span<Tensor> in) {
        auto g = out.grad();
        auto x = in[0].data();
        auto y = in[1].data();
        if (in[0].requires_grad()) {
          auto ga = in[0].grad_buffer();
          visit(*plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
            ga[ia] += g[i] * da(x[ia], y[ib]);
          });
        }
        if (in[1].requires_grad()) {
          auto gb = in[1].grad_buffer();
          visit(*plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
            gb[ib] += g[i] * db(x[ia], y[ib]);
          });
        }
      });
}

// `deriv(x, y)` is dy/dx given input x and output y.
template <typename Fwd, typename Deriv>
Tensor unary(const char* name, const Tensor& a, Fwd fwd, Deriv deriv) {
  return record(
      name, {a},
      [&] {
        Tensor out(a.shape());
        auto o = out.data();
        auto x = a.data();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(x[i]);
        return out;
      },
      [deriv](const Tensor& out, std::span<Tensor> in) {
        auto g = out.grad();
        auto y = out.data();
        auto x = in[0].data();
        auto gx = in[0].grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * deriv(x[i], y[i]);
      });
}

struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s));
  }
  AxisSplit r;
  for (std::size_t k = 0; k < axis; ++k) r.outer *= s[k];
  r.extent = s[axis];
  for (std::size_t k = axis + 1; k < s.size(); ++k) r.inner *= s[k];
  return r;
}

void require_complex_pairs(const Tensor& t, const char* op) {
  if (t.rank() == 0 || t.shape().back() != 2) {
    throw ShapeError(std::string(op) + ": expected trailing complex axis of size 2, got " +
                     shape_str(t.shape()));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  count_adds(std::max(a.numel(), b.numel()));
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  count_adds(std::max(a.numel(), b.numel()));
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  count_multiplies(std::max(a.numel(), b.numel()));
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  count_multiplies(std::max(a.numel(), b.numel()));
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

Tensor neg(const Tensor& a) {
  return unary(
      "neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& a, double factor) {
  count_multiplies(a.numel());
  return unary(
      "scale", a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  count_adds(a.numel());
  return unary(
      "add_scalar", a, [value](double x) { return x + value; },
      [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor erf(const Tensor& a) {
  return unary(
      "erf", a, [](double x) { return std::erf(x); },
      [](double x, double) { return 2.0 / std::sqrt(std::numbers::pi) * std::exp(-x * x); });
}

Tensor logistic(const Tensor& a) {
  return unary(
      "logistic", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  return unary(
      "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + x * pdf;
      });
}

// ---------------------------------------------------------------------------
// Linear algebra and shape

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (b.rank() != 2 || a.rank() < 1 || a.shape().back() != b.dim(0)) {
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t k = b.dim(0), m = b.dim(1), rows = a.numel() / k;
  Shape out_shape = a.shape();
  out_shape.back() = m;
  count_multiplies(rows * k * m);
  count_adds(rows * (k - 1) * m);
  return record(
      "matmul", {a, b},
      [&] {
        Tensor out(out_shape);
        MutMap(out.data().data(), rows, m).noalias() =
            ConstMap(a.data().data(), rows, k) * ConstMap(b.data().data(), k, m);
        return out;
      },
      [rows, k, m](const Tensor& out, std::span<Tensor> in) {
        ConstMap g(out.grad().data(), rows, m);
        if (in[0].requires_grad()) {
          MutMap(in[0].grad_buffer().data(), rows, k).noalias() +=
              g * ConstMap(in[1].data().data(), k, m).transpose();
        }
        if (in[1].requires_grad()) {
          MutMap(in[1].grad_buffer().data(), k, m).noalias() +=
              ConstMap(in[0].data().data(), rows, k).transpose() * g;
        }
      });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: rank-2 tensor required, got " + shape_str(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  return record(
      "transpose", {a},
      [&] {
        Tensor out(Shape{c, r});
        MutMap(out.data().data(), c, r) = ConstMap(a.data().data(), r, c).transpose();
        return out;
      },
      [r, c](const Tensor& out, std::span<Tensor> in) {
        MutMap(in[0].grad_buffer().data(), r, c) += ConstMap(out.grad().data(), c, r).transpose();
      });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  return record(
      "reshape", {a},
      [&] { return Tensor(shape, std::vector<double>(a.data().begin(), a.data().end())); },
      [](const Tensor& out, std::span<Tensor> in) { in[0].accumulate_grad(out.grad()); });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape out_shape = parts.front().shape();
  if (axis >= out_shape.size()) throw ShapeError("concat: axis out of range");
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != out_shape.size()) throw ShapeError("concat: rank mismatch");
    total += s[axis];
    s[axis] = out_shape[axis];
    if (s != out_shape) throw ShapeError("concat: shapes differ off the concat axis");
  }
  out_shape[axis] = total;
  const AxisSplit whole = split_at(out_shape, axis, "concat");
  return record(
      "concat", parts,
      [&] {
        Tensor out(out_shape);
        auto o = out.data();
        std::size_t offset = 0;
        for (const auto& p : parts) {
          const std::size_t w = p.dim(axis) * whole.inner;
          auto src = p.data();
          for (std::size_t i = 0; i < whole.outer; ++i) {
            std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(i * w), w,
                        o.begin() + static_cast<std::ptrdiff_t>(i * whole.extent * whole.inner + offset));
          }
          offset += w;
        }
        return out;
      },
      [whole, axis](const Tensor& out, std::span<Tensor> in) {
        auto g = out.grad();
        std::size_t offset = 0;
        for (auto& p : in) {
          const std::size_t w = p.dim(axis) * whole.inner;
          if (p.requires_grad()) {
            auto gp = p.grad_buffer();
            for (std::size_t i = 0; i < whole.outer; ++i) {
              for (std::size_t j = 0; j < w; ++j) {
                gp[i * w + j] += g[i * whole.extent * whole.inner + offset + j];
              }
            }
          }
          offset += w;
        }
      });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const AxisSplit s = split_at(a.shape(), axis, "slice");
  if (begin > end || end > s.extent) {
    throw ShapeError("slice: [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for " + shape_str(a.shape()));
  }
  Shape out_shape = a.shape();
  out_shape[axis] = end - begin;
  const std::size_t w = (end - begin) * s.inner;
  return record(
      "slice", {a},
      [&] {
        Tensor out(out_shape);
        auto o = out.data();
        auto x = a.data();
        for (std::size_t i = 0; i < s.outer; ++i) {
          std::copy_n(x.begin() + static_cast<std::ptrdiff_t>((i * s.extent + begin) * s.inner), w,
                      o.begin() + static_cast<std::ptrdiff_t>(i * w));
        }
        return out;
      },
      [s, begin, w](const Tensor& out, std::span<Tensor> in) {
        auto g = out.grad();
        auto gx = in[0].grad_buffer();
        for (std::size_t i = 0; i < s.outer; ++i) {
          for (std::size_t j = 0; j < w; ++j) gx[(i * s.extent + begin) * s.inner + j] += g[i * w + j];
        }
      });
}

Tensor reverse(const Tensor& a, std::size_t axis) {
  const AxisSplit s = split_at(a.shape(), axis, "reverse");
  auto flip = [s](std::span<const double> src, std::span<double> dst, bool accumulate) {
    for (std::size_t i = 0; i < s.outer; ++i) {
      for (std::size_t t = 0; t < s.extent; ++t) {
        const std::size_t from = (i * s.extent + t) * s.inner;
        const std::size_t to = (i * s.extent + (s.extent - 1 - t)) * s.inner;
        for (std::size_t j = 0; j < s.inner; ++j) {
          if (accumulate) {
            dst[to + j] += src[from + j];
          } else {
            dst[to + j] = src[from + j];
          }
        }
      }
    }
  };
  return record(
      "reverse", {a},
      [&] {
        Tensor out(a.shape());
        flip(a.data(), out.data(), false);
        return out;
      },
      [flip](const Tensor& out, std::span<Tensor> in) { flip(out.grad(), in[0].grad_buffer(), true); });
}

// ---------------------------------------------------------------------------
// Reductions

namespace {
Tensor reduce_axis(const char* name, const Tensor& a, std::size_t axis, double factor) {
  const AxisSplit s = split_at(a.shape(), axis, name);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  return record(
      name, {a},
      [&] {
        Tensor out(out_shape);
        auto o = out.data();
        auto x = a.data();
        for (std::size_t i = 0; i < s.outer; ++i) {
          for (std::size_t t = 0; t < s.extent; ++t) {
            const std::size_t base = (i * s.extent + t) * s.inner;
            for (std::size_t j = 0; j < s.inner; ++j) o[i * s.inner + j] += x[base + j];
          }
        }
        for (auto& v : o) v *= factor;
        return out;
      },
      [s, factor](const Tensor& out, std::span<Tensor> in) {
        auto g = out.grad();
        auto gx = in[0].grad_buffer();
        for (std::size_t i = 0; i < s.outer; ++i) {
          for (std::size_t t = 0; t < s.extent; ++t) {
            const std::size_t base = (i * s.extent + t) * s.inner;
            for (std::size_t j = 0; j < s.inner; ++j) gx[base + j] += factor * g[i * s.inner + j];
          }
        }
      });
}
}  // namespace

Tensor sum(const Tensor& a, std::size_t axis) { return reduce_axis("sum", a, axis, 1.0); }

Tensor mean(const Tensor& a, std::size_t axis) {
  const double n = static_cast<double>(split_at(a.shape(), axis, "mean").extent);
  return reduce_axis("mean", a, axis, 1.0 / n);
}

Tensor sum_all(const Tensor& a) {
  return reduce_axis("sum_all", reshape(a, Shape{a.numel()}), 0, 1.0);
}

Tensor mean_all(const Tensor& a) {
  return reduce_axis("mean_all", reshape(a, Shape{a.numel()}), 0,
                     1.0 / static_cast<double>(a.numel()));
}

// ---------------------------------------------------------------------------
// Complex pairs

Tensor complex(const Tensor& re, const Tensor& im) {
  if (re.shape() != im.shape()) throw ShapeError("complex: real/imag shapes differ");
  Shape out_shape = re.shape();
  out_shape.push_back(2);
  return record(
      "complex", {re, im},
      [&] {
        Tensor out(out_shape);
        auto o = out.data();
        for (std::size_t i = 0; i < re.numel(); ++i) {
          o[2 * i] = re.data()[i];
          o[2 * i + 1] = im.data()[i];
        }
        return out;
      },
      [](const Tensor& out, std::span<Tensor> in) {
        auto g = out.grad();
        for (std::size_t part = 0; part < 2; ++part) {
          if (!in[part].requires_grad()) continue;
          auto gp = in[part].grad_buffer();
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[2 * i + part];
        }
      });
}

Tensor real(const Tensor& z) {
  require_complex_pairs(z, "real");
  Shape out_shape(z.shape().begin(), z.shape().end() - 1);
  return record(
      "real", {z},
      [&] {
        Tensor out(out_shape);
        auto o = out.data();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = z.data()[2 * i];
        return out;
      },
      [](const Tensor& out, std::span<Tensor> in) {
        auto g = out.grad();
        auto gz = in[0].grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gz[2 * i] += g[i];
      });
}

namespace {
using cplx = std::complex<double>;

cplx pair_at(std::span<const double> d, std::size_t i) { return {d[2 * i], d[2 * i + 1]}; }

void add_pair(std::span<double> d, std::size_t i, cplx v) {
  d[2 * i] += v.real();
  d[2 * i + 1] += v.imag();
}
}  // namespace

Tensor cmul(const Tensor& a, const Tensor& b) {
  require_complex_pairs(a, "cmul");
  if (a.shape() != b.shape()) throw ShapeError("cmul: shape mismatch");
  const std::size_t n = a.numel() / 2;
  count_multiplies(4 * n);
  count_adds(2 * n);
  return record(
      "cmul", {a, b},
      [&] {
        Tensor out(a.shape());
        auto o = out.data();
        for (std::size_t i = 0; i < n; ++i) {
          const cplx v = pair_at(a.data(), i) * pair_at(b.data(), i);
          o[2 * i] = v.real();
          o[2 * i + 1] = v.imag();
        }
        return out;
      },
      [n](const Tensor& out, std::span<Tensor> in) {
        auto g = out.grad();
        for (std::size_t i = 0; i < n; ++i) {
          const cplx gi = pair_at(g, i);
          if (in[0].requires_grad()) add_pair(in[0].grad_buffer(), i, gi * std::conj(pair_at(in[1].data(), i)));
          if (in[1].requires_grad()) add_pair(in[1].grad_buffer(), i, gi * std::conj(pair_at(in[0].data(), i)));
        }
      });
}

Tensor cdiv(const Tensor& a, const Tensor& b) {
  require_complex_pairs(a, "cdiv");
  if (a.shape() != b.shape()) throw ShapeError("cdiv: shape mismatch");
  const std::size_t n = a.numel() / 2;
  return record(
      "cdiv", {a, b},
      [&] {
        Tensor out(a.shape());
        auto o = out.data();
        for (std::size_t i = 0; i < n; ++i) {
          const cplx v = pair_at(a.data(), i) / pair_at(b.data(), i);
          o[2 * i] = v.real();
          o[2 * i + 1] = v.imag();
        }
        return out;
      },
      [n](const Tensor& out, std::span<Tensor> in) {
        auto g = out.grad();
        for (std::size_t i = 0; i < n; ++i) {
          const cplx gi = pair_at(g, i);
          const cplx den = pair_at(in[1].data(), i);
          const cplx w = pair_at(out.data(), i);
          if (in[0].requires_grad()) add_pair(in[0].grad_buffer(), i, gi * std::conj(1.0 / den));
          if (in[1].requires_grad()) add_pair(in[1].grad_buffer(), i, -gi * std::conj(w / den));
        }
      });
}

// ---------------------------------------------------------------------------
// Fourier transforms

Tensor rfft(const Tensor& x, std::size_t n) {
  if (x.rank() == 0) throw ShapeError("rfft: scalar input");
  const std::size_t len = x.shape().back();
  if (len > n) throw ShapeError("rfft: sequence longer than transform size");
  const std::size_t rows = x.numel() / len, bins = n / 2 + 1;
  Shape out_shape = x.shape();
  out_shape.back() = bins;
  out_shape.push_back(2);
  return record(
      "rfft", {x},
      [&] {
        Tensor out(out_shape);
        for (std::size_t r = 0; r < rows; ++r) {
          fft::rfft(x.data().subspan(r * len, len), n,
                    std::span<cplx>(reinterpret_cast<cplx*>(out.data().data()) + r * bins, bins));
        }
        return out;
      },
      [rows, len, bins, n](const Tensor& out, std::span<Tensor> in) {
        auto g = out.grad();
        auto gx = in[0].grad_buffer();
        std::vector<cplx> h(bins);
        std::vector<double> back(len);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t k = 0; k < bins; ++k) {
            const bool edge = k == 0 || 2 * k == n;
            h[k] = pair_at(g, r * bins + k) * (edge ? 1.0 : 0.5);
          }
          fft::irfft(h, n, back);
          for (std::size_t t = 0; t < len; ++t) gx[r * len + t] += static_cast<double>(n) * back[t];
        }
      });
}

Tensor irfft(const Tensor& spectrum, std::size_t n, std::size_t out_len) {
  require_complex_pairs(spectrum, "irfft");
  const std::size_t bins = n / 2 + 1;
  if (spectrum.rank() < 2 || spectrum.dim(spectrum.rank() - 2) != bins) {
    throw ShapeError("irfft: expected " + std::to_string(bins) + " bins, got " +
                     shape_str(spectrum.shape()));
  }
  if (out_len > n) throw ShapeError("irfft: output longer than transform size");
  const std::size_t rows = spectrum.numel() / (2 * bins);
  Shape out_shape(spectrum.shape().begin(), spectrum.shape().end() - 1);
  out_shape.back() = out_len;
  return record(
      "irfft", {spectrum},
      [&] {
        Tensor out(out_shape);
        for (std::size_t r = 0; r < rows; ++r) {
          fft::irfft(std::span<const cplx>(reinterpret_cast<const cplx*>(spectrum.data().data()) + r * bins, bins),
                     n, out.data().subspan(r * out_len, out_len));
        }
        return out;
      },
      [rows, bins, n, out_len](const Tensor& out, std::span<Tensor> in) {
        auto g = out.grad();
        auto gs = in[0].grad_buffer();
        std::vector<cplx> spec(bins);
        for (std::size_t r = 0; r < rows; ++r) {
          fft::rfft(g.subspan(r * out_len, out_len), n, spec);
          for (std::size_t k = 0; k < bins; ++k) {
            const bool edge = k == 0 || 2 * k == n;
            add_pair(gs, r * bins + k, spec[k] * ((edge ? 1.0 : 2.0) / static_cast<double>(n)));
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Regularisation and normalisation

Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: p must be in [0, 1)");
  if (!training || p == 0.0) return x;
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  std::bernoulli_distribution keep(1.0 - p);
  const double s = 1.0 / (1.0 - p);
  for (auto& m : *mask) m = keep(rng) ? s : 0.0;
  return record(
      "dropout", {x},
      [&] {
        Tensor out(x.shape());
        auto o = out.data();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = x.data()[i] * (*mask)[i];
        return out;
      },
      [mask](const Tensor& out, std::span<Tensor> in) {
        auto g = out.grad();
        auto gx = in[0].grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * (*mask)[i];
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t f = x.shape().back();
  if (gamma.numel() != f || beta.numel() != f) throw ShapeError("layer_norm: affine size mismatch");
  const std::size_t rows = x.numel() / f;
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  return record(
      "layer_norm", {x, gamma, beta},
      [&] {
        Tensor out(x.shape());
        auto o = out.data();
        auto in = x.data();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* row = in.data() + r * f;
          double mu = 0.0;
          for (std::size_t j = 0; j < f; ++j) mu += row[j];
          mu /= static_cast<double>(f);
          double var = 0.0;
          for (std::size_t j = 0; j < f; ++j) var += (row[j] - mu) * (row[j] - mu);
          var /= static_cast<double>(f);
          const double rs = 1.0 / std::sqrt(var + eps);
          (*rstd)[r] = rs;
          for (std::size_t j = 0; j < f; ++j) {
            const double h = (row[j] - mu) * rs;
            (*xhat)[r * f + j] = h;
            o[r * f + j] = gamma.data()[j] * h + beta.data()[j];
          }
        }
        return out;
      },
      [xhat, rstd, rows, f](const Tensor& out, std::span<Tensor> in) {
        auto g = out.grad();
        auto gam = in[1].data();
        const bool gx_needed = in[0].requires_grad();
        std::span<double> gx = gx_needed ? in[0].grad_buffer() : std::span<double>{};
        std::span<double> gg = in[1].requires_grad() ? in[1].grad_buffer() : std::span<double>{};
        std::span<double> gb = in[2].requires_grad() ? in[2].grad_buffer() : std::span<double>{};
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_d = 0.0, mean_dh = 0.0;
          for (std::size_t j = 0; j < f; ++j) {
            const std::size_t i = r * f + j;
            const double d = g[i] * gam[j];
            mean_d += d;
            mean_dh += d * (*xhat)[i];
            if (!gg.empty()) gg[j] += g[i] * (*xhat)[i];
            if (!gb.empty()) gb[j] += g[i];
          }
          if (!gx_needed) continue;
          mean_d /= static_cast<double>(f);
          mean_dh /= static_cast<double>(f);
          for (std::size_t j = 0; j < f; ++j) {
            const std::size_t i = r * f + j;
            gx[i] += (*rstd)[r] * (g[i] * gam[j] - mean_d - (*xhat)[i] * mean_dh);
          }
        }
      });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training) {
  const std::size_t f = x.shape().back();
  if (gamma.numel() != f || beta.numel() != f || state.running_mean.numel() != f ||
      state.running_var.numel() != f) {
    throw ShapeError("batch_norm: feature size mismatch");
  }
  const std::size_t rows = x.numel() / f;
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto rstd = std::make_shared<std::vector<double>>(f);
  const double eps = state.eps;

  if (training) {
    std::vector<double> mu(f, 0.0), var(f, 0.0);
    auto in = x.data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < f; ++j) mu[j] += in[r * f + j];
    for (auto& m : mu) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < f; ++j) var[j] += (in[r * f + j] - mu[j]) * (in[r * f + j] - mu[j]);
    for (std::size_t j = 0; j < f; ++j) {
      const double biased = var[j] / static_cast<double>(rows);
      (*rstd)[j] = 1.0 / std::sqrt(biased + eps);
      const double unbiased = rows > 1 ? var[j] / static_cast<double>(rows - 1) : biased;
      auto rm = state.running_mean.data();
      auto rv = state.running_var.data();
      rm[j] = (1.0 - state.momentum) * rm[j] + state.momentum * mu[j];
      rv[j] = (1.0 - state.momentum) * rv[j] + state.momentum * unbiased;
    }
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < f; ++j) (*xhat)[r * f + j] = (in[r * f + j] - mu[j]) * (*rstd)[j];
  } else {
    auto in = x.data();
    for (std::size_t j = 0; j < f; ++j) (*rstd)[j] = 1.0 / std::sqrt(state.running_var.data()[j] + eps);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < f; ++j)
        (*xhat)[r * f + j] = (in[r * f + j] - state.running_mean.data()[j]) * (*rstd)[j];
  }

  return record(
      "batch_norm", {x, gamma, beta},
      [&] {
        Tensor out(x.shape());
        auto o = out.data();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < f; ++j)
            o[r * f + j] = gamma.data()[j] * (*xhat)[r * f + j] + beta.data()[j];
        return out;
      },
      [xhat, rstd, rows, f, training](const Tensor& out, std::span<Tensor> in) {
        auto g = out.grad();
        auto gam = in[1].data();
        std::vector<double> sum_d(f, 0.0), sum_dh(f, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < f; ++j) {
            const std::size_t i = r * f + j;
            sum_d[j] += g[i];
            sum_dh[j] += g[i] * (*xhat)[i];
          }
        }
        if (in[1].requires_grad()) {
          auto gg = in[1].grad_buffer();
          for (std::size_t j = 0; j < f; ++j) gg[j] += sum_dh[j];
        }
        if (in[2].requires_grad()) {
          auto gb = in[2].grad_buffer();
          for (std::size_t j = 0; j < f; ++j) gb[j] += sum_d[j];
        }
        if (!in[0].requires_grad()) return;
        auto gx = in[0].grad_buffer();
        const double n = static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < f; ++j) {
            const std::size_t i = r * f + j;
            if (training) {
              gx[i] += gam[j] * (*rstd)[j] * (g[i] - sum_d[j] / n - (*xhat)[i] * sum_dh[j] / n);
            } else {
              gx[i] += gam[j] * (*rstd)[j] * g[i];
            }
          }
        }
      });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("softmax_cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= c) throw ShapeError("softmax_cross_entropy: label out of range");
  }
  auto probs = std::make_shared<std::vector<double>>(b * c);
  auto lab = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  return record(
      "softmax_cross_entropy", {logits},
      [&] {
        double loss = 0.0;
        auto z = logits.data();
        for (std::size_t i = 0; i < b; ++i) {
          const double* row = z.data() + i * c;
          const double mx = *std::max_element(row, row + c);
          double se = 0.0;
          for (std::size_t j = 0; j < c; ++j) se += std::exp(row[j] - mx);
          const double lse = mx + std::log(se);
          for (std::size_t j = 0; j < c; ++j) (*probs)[i * c + j] = std::exp(row[j] - lse);
          loss += lse - row[(*lab)[i]];
        }
        return Tensor::scalar(loss / static_cast<double>(b));
      },
      [probs, lab, b, c](const Tensor& out, std::span<Tensor> in) {
        const double g = out.grad()[0] / static_cast<double>(b);
        auto gz = in[0].grad_buffer();
        for (std::size_t i = 0; i < b; ++i) {
          for (std::size_t j = 0; j < c; ++j) {
            const double onehot = static_cast<int>(j) == (*lab)[i] ? 1.0 : 0.0;
            gz[i * c + j] += g * ((*probs)[i * c + j] - onehot);
          }
        }
      });
}

}  // namespace spkseq::ops
