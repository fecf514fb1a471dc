#include "spkseq/gsu.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>

#include "spkseq/error.hpp"
#include "spkseq/ops.hpp"

namespace spkseq::gsu {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

void check_sizes(std::size_t d, std::size_t k, std::size_t w, std::size_t b, std::size_t c,
                 const char* who) {
  if (d == 0 || k == 0 || w != d * k || b != k || c != k) {
    throw ShapeError(std::string(who) + ": inconsistent parameter shapes");
  }
}

struct RowTally {
  std::uint64_t adds = 0;
  std::uint64_t multiplies = 0;
};

// One GSU position. tx receives Ter(x); s1/s2 the two streams; out their product.
void gsu_row(const double* x, std::size_t d, std::size_t k, const double* W, const std::int8_t* tw,
             const double* b, const double* c, double alpha, std::int8_t* tx, double* s1,
             double* s2, double* out, RowTally& tally) {
  const auto t = ternarize(std::span<const double>(x, d), alpha);
  std::copy(t.begin(), t.end(), tx);
  std::fill(s1, s1 + k, 0.0);
  std::fill(s2, s2 + k, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    const double* wi = W + i * k;
    if (tx[i] > 0) {
      for (std::size_t j = 0; j < k; ++j) s1[j] += wi[j];
      tally.adds += k;
    } else if (tx[i] < 0) {
      for (std::size_t j = 0; j < k; ++j) s1[j] -= wi[j];
      tally.adds += k;
    }
    const double xi = x[i];
    if (xi == 0.0) continue;
    const std::int8_t* ti = tw + i * k;
    for (std::size_t j = 0; j < k; ++j) {
      if (ti[j] > 0) {
        s2[j] += xi;
        ++tally.adds;
      } else if (ti[j] < 0) {
        s2[j] -= xi;
        ++tally.adds;
      }
    }
  }
  for (std::size_t j = 0; j < k; ++j) {
    s1[j] += b[j];
    s2[j] += c[j];
    out[j] = s1[j] * s2[j];
  }
  tally.adds += 2 * k;
  tally.multiplies += k;
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

void GSULayerParams::validate() const {
  check_sizes(in_dim, out_dim, W.size(), b.size(), c.size(), "GSULayerParams");
  if (!(alpha_ter > 0.0 && alpha_ter < 1.0)) throw ConfigError("GSU alpha_ter must lie in (0, 1)");
}

void GLULayerParams::validate() const {
  check_sizes(in_dim, out_dim, W.size(), b.size(), c.size(), "GLULayerParams");
  if (V.size() != W.size()) throw ShapeError("GLULayerParams: V shape differs from W");
}

double ternary_threshold(std::span<const double> x, double alpha) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return alpha * m;
}

std::vector<std::int8_t> ternarize(std::span<const double> x, double alpha) {
  if (x.empty()) throw ShapeError("ternarize: empty input");
  const double delta = ternary_threshold(x, alpha);
  std::vector<std::int8_t> t(x.size(), 0);
  if (delta == 0.0) return t;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] >= delta) {
      t[i] = 1;
    } else if (x[i] <= -delta) {
      t[i] = -1;
    }
  }
  return t;
}

std::vector<double> gsu_forward(const GSULayerParams& params, std::span<const double> x) {
  params.validate();
  if (x.size() != params.in_dim) throw ShapeError("gsu_forward: input length mismatch");
  const std::size_t d = params.in_dim, k = params.out_dim;
  const auto tw = ternarize(params.W, params.alpha_ter);
  std::vector<std::int8_t> tx(d);
  std::vector<double> s1(k), s2(k), out(k);
  RowTally tally;
  gsu_row(x.data(), d, k, params.W.data(), tw.data(), params.b.data(), params.c.data(),
          params.alpha_ter, tx.data(), s1.data(), s2.data(), out.data(), tally);
  count_adds(tally.adds);
  count_multiplies(tally.multiplies);
  return out;
}

std::vector<double> gsu_forward_dense(const GSULayerParams& params, std::span<const double> x) {
  params.validate();
  if (x.size() != params.in_dim) throw ShapeError("gsu_forward_dense: input length mismatch");
  const std::size_t d = params.in_dim, k = params.out_dim;
  const auto tx = ternarize(x, params.alpha_ter);
  const auto tw = ternarize(params.W, params.alpha_ter);
  std::vector<double> out(k);
  for (std::size_t j = 0; j < k; ++j) {
    double s1 = params.b[j], s2 = params.c[j];
    for (std::size_t i = 0; i < d; ++i) {
      s1 += static_cast<double>(tx[i]) * params.W[i * k + j];
      s2 += x[i] * static_cast<double>(tw[i * k + j]);
    }
    out[j] = s1 * s2;
  }
  return out;
}

std::vector<double> glu_forward(const GLULayerParams& params, std::span<const double> x) {
  params.validate();
  if (x.size() != params.in_dim) throw ShapeError("glu_forward: input length mismatch");
  const std::size_t d = params.in_dim, k = params.out_dim;
  std::vector<double> out(k);
  for (std::size_t j = 0; j < k; ++j) {
    double lin = params.b[j], gate = params.c[j];
    for (std::size_t i = 0; i < d; ++i) {
      lin += x[i] * params.W[i * k + j];
      gate += x[i] * params.V[i * k + j];
    }
    out[j] = lin * sigmoid(gate);
  }
  count_multiplies(2 * d * k + k);
  count_adds(2 * d * k);
  return out;
}

GSUGrads gsu_backward(const GSULayerParams& params, std::span<const double> x,
                      std::span<const double> upstream) {
  params.validate();
  const std::size_t d = params.in_dim, k = params.out_dim;
  if (x.size() != d || upstream.size() != k) throw ShapeError("gsu_backward: size mismatch");
  const auto tx = ternarize(x, params.alpha_ter);
  const auto tw = ternarize(params.W, params.alpha_ter);
  std::vector<double> s1(params.b), s2(params.c);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      s1[j] += static_cast<double>(tx[i]) * params.W[i * k + j];
      s2[j] += x[i] * static_cast<double>(tw[i * k + j]);
    }
  }
  GSUGrads g;
  g.b.resize(k);
  g.c.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    g.b[j] = upstream[j] * s2[j];
    g.c[j] = upstream[j] * s1[j];
  }
  g.x.assign(d, 0.0);
  g.W.assign(d * k, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      g.x[i] += g.b[j] * params.W[i * k + j] + g.c[j] * static_cast<double>(tw[i * k + j]);
      g.W[i * k + j] = static_cast<double>(tx[i]) * g.b[j] + x[i] * g.c[j];
    }
  }
  return g;
}

OpCounter audit_ops(const std::function<void()>& forward, std::string label) {
  OpCounter counter;
  counter.label = std::move(label);
  OpCountScope scope(counter);
  forward();
  return counter;
}

Tensor gsu_mix(const Tensor& x, const Tensor& W, const Tensor& b, const Tensor& c, double alpha_ter) {
  if (W.rank() != 2 || x.rank() < 1 || x.shape().back() != W.dim(0) || b.numel() != W.dim(1) ||
      c.numel() != W.dim(1)) {
    throw ShapeError("gsu_mix: x " + shape_str(x.shape()) + " with W " + shape_str(W.shape()));
  }
  const std::size_t d = W.dim(0), k = W.dim(1), rows = x.numel() / d;
  Shape out_shape = x.shape();
  out_shape.back() = k;

  struct Cache {
    std::vector<std::int8_t> tx, tw;
    std::vector<double> s1, s2;
  };
  auto cache = std::make_shared<Cache>();
  cache->tw = ternarize(W.data(), alpha_ter);
  cache->tx.resize(rows * d);
  cache->s1.resize(rows * k);
  cache->s2.resize(rows * k);

  return record(
      "gsu", {x, W, b, c},
      [&] {
        Tensor out(out_shape);
        auto xs = x.data();
        auto o = out.data();
        RowTally total;
#pragma omp parallel
        {
          RowTally local;
#pragma omp for schedule(static)
          for (std::size_t r = 0; r < rows; ++r) {
            gsu_row(xs.data() + r * d, d, k, W.data().data(), cache->tw.data(), b.data().data(),
                    c.data().data(), alpha_ter, cache->tx.data() + r * d, cache->s1.data() + r * k,
                    cache->s2.data() + r * k, o.data() + r * k, local);
          }
#pragma omp critical
          {
            total.adds += local.adds;
            total.multiplies += local.multiplies;
          }
        }
        count_adds(total.adds);
        count_multiplies(total.multiplies);
        return out;
      },
      [cache, rows, d, k](const Tensor& out, std::span<Tensor> in) {
        ConstMap g(out.grad().data(), rows, k);
        ConstMap s1(cache->s1.data(), rows, k);
        ConstMap s2(cache->s2.data(), rows, k);
        const RowMatrix g1 = g.cwiseProduct(s2);  // d/d(stream 1)
        const RowMatrix g2 = g.cwiseProduct(s1);  // d/d(stream 2)
        if (in[0].requires_grad()) {
          const RowMatrix tw = Eigen::Map<const Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic,
                                                              Eigen::RowMajor>>(cache->tw.data(), d, k)
                                   .cast<double>();
          MutMap(in[0].grad_buffer().data(), rows, d).noalias() +=
              g1 * ConstMap(in[1].data().data(), d, k).transpose() + g2 * tw.transpose();
        }
        if (in[1].requires_grad()) {
          const RowMatrix tx = Eigen::Map<const Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic,
                                                              Eigen::RowMajor>>(cache->tx.data(), rows, d)
                                   .cast<double>();
          MutMap(in[1].grad_buffer().data(), d, k).noalias() +=
              tx.transpose() * g1 + ConstMap(in[0].data().data(), rows, d).transpose() * g2;
        }
        if (in[2].requires_grad()) {
          Eigen::Map<Eigen::RowVectorXd>(in[2].grad_buffer().data(), static_cast<Eigen::Index>(k)) +=
              g1.colwise().sum();
        }
        if (in[3].requires_grad()) {
          Eigen::Map<Eigen::RowVectorXd>(in[3].grad_buffer().data(), static_cast<Eigen::Index>(k)) +=
              g2.colwise().sum();
        }
      });
}

Tensor glu_mix(const Tensor& x, const Tensor& W, const Tensor& V, const Tensor& b, const Tensor& c) {
  Tensor lin = ops::add(ops::matmul(x, W), b);
  Tensor gate = ops::logistic(ops::add(ops::matmul(x, V), c));
  return ops::mul(lin, gate);
}

}  // namespace spkseq::gsu
