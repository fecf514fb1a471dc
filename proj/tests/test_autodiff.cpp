#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "spkseq/activations.hpp"
#include "spkseq/error.hpp"
#include "spkseq/gsu.hpp"
#include "spkseq/ops.hpp"
#include "spkseq/ssm.hpp"
#include "test_util.hpp"

using namespace spkseq;
using testutil::check_gradients;
using testutil::random_tensor;
using testutil::weighted_sum;

namespace {

using LossFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Runs the check for `seeds` independently drawn input sets.
void expect_gradients(const char* name, const std::vector<Shape>& shapes, const LossFn& fn, int seeds = 20,
                      double tol = 1e-4, double lo = -1.0, double hi = 1.0) {
  for (int s = 0; s < seeds; ++s) {
    std::mt19937_64 rng(1000 + s);
    std::vector<Tensor> in;
    for (const auto& sh : shapes) in.push_back(random_tensor(sh, rng, lo, hi));
    const auto r = check_gradients(fn, in);
    EXPECT_LT(r.max_error, tol) << name << " seed " << s;
  }
}

}  // namespace

TEST(Tape, AddDistributesGradient) {
  Tensor a = Tensor::parameter({2}, {1, 2});
  Tensor b = Tensor::parameter({2}, {3, 4});
  Tape tape;
  TapeScope scope(tape);
  Tensor y = ops::add(a, b);
  EXPECT_EQ(y.at(0), 4.0);
  EXPECT_EQ(y.at(1), 6.0);
  ops::sum_all(y).backward();
  EXPECT_EQ(a.grad()[0], 1.0);
  EXPECT_EQ(b.grad()[1], 1.0);
}

TEST(Tape, ScalarMatmul) {
  Tensor a = Tensor::parameter({1, 1}, {2});
  Tensor b = Tensor::parameter({1, 1}, {3});
  Tape tape;
  TapeScope scope(tape);
  Tensor y = ops::matmul(a, b);
  EXPECT_EQ(y.at(0), 6.0);
  ops::sum_all(y).backward();
  EXPECT_EQ(a.grad()[0], 3.0);
  EXPECT_EQ(b.grad()[0], 2.0);
}

TEST(Tape, SpikeSurrogateAtZero) {
  Tensor x = Tensor::parameter({1}, {0.0});
  Tape tape;
  TapeScope scope(tape);
  Tensor y = apply_activation(x, ActivationSpec::spike(Surrogate::arctan));
  EXPECT_EQ(y.at(0), 0.0);
  ops::sum_all(y).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 1.0);
}

TEST(Tape, SumAndSquare) {
  Tensor x = Tensor::parameter({3}, {1, 2, 3});
  {
    Tape tape;
    TapeScope scope(tape);
    ops::sum_all(x).backward();
  }
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);

  Tensor z = Tensor::parameter({2}, {1, 2});
  Tape tape;
  TapeScope scope(tape);
  ops::sum_all(ops::mul(z, z)).backward();  // z used twice: grads accumulate
  EXPECT_EQ(z.grad()[0], 2.0);
  EXPECT_EQ(z.grad()[1], 4.0);
}

TEST(Tape, NonScalarLossRejected) {
  Tensor x = Tensor::parameter({3}, {1, 2, 3});
  Tape tape;
  TapeScope scope(tape);
  Tensor y = ops::scale(x, 2.0);
  EXPECT_THROW(tape.backward(y), ShapeError);
}

TEST(Tape, ReverseOrderVisitsEachNodeOnce) {
  Tensor x = Tensor::parameter({1}, {0.5});
  Tape tape;
  TapeScope scope(tape);
  Tensor a = ops::exp(x);
  Tensor b = ops::mul(a, a);
  Tensor c = ops::add(b, a);
  ops::sum_all(c).backward();
  // d/dx (e^{2x} + e^x) = 2e^{2x} + e^x
  EXPECT_NEAR(x.grad()[0], 2 * std::exp(1.0) + std::exp(0.5), 1e-12);
  // sum_all flattens first
  const std::vector<std::string> expected{"exp", "mul", "add", "reshape", "sum_all"};
  EXPECT_EQ(tape.op_names(), expected);
}

TEST(Tape, NoRecordingWithoutGradInputs) {
  Tape tape;
  TapeScope scope(tape);
  Tensor x(Shape{3}, 1.0);
  ops::exp(x);
  EXPECT_EQ(tape.size(), 0u);
  NoGradScope ng;
  ops::exp(Tensor::parameter({1}, {1.0}));
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Tape, AccumulationIsOrderIndependent) {
  std::mt19937_64 rng(5);
  Tensor x = random_tensor({50}, rng);
  x.set_requires_grad(true);
  std::vector<Tensor> ws;
  for (int i = 0; i < 6; ++i) ws.push_back(random_tensor({50}, rng));
  auto run = [&](bool reversed) {
    x.zero_grad();
    Tape tape;
    TapeScope scope(tape);
    Tensor total = Tensor::scalar(0.0);
    for (int i = 0; i < 6; ++i) {
      total = ops::add(total, weighted_sum(ops::mul(x, ws[reversed ? 5 - i : i]), reversed ? 5 - i : i));
    }
    total.backward();
    return std::vector<double>(x.grad().begin(), x.grad().end());
  };
  EXPECT_LT(testutil::max_abs_diff(run(false), run(true)), 1e-10);
}

TEST(Ops, ElementwiseGradients) {
  expect_gradients("add", {{3, 4}, {3, 4}}, [](auto& in) { return weighted_sum(ops::add(in[0], in[1])); });
  expect_gradients("add-broadcast", {{2, 3, 4}, {4}}, [](auto& in) { return weighted_sum(ops::add(in[0], in[1])); });
  expect_gradients("sub-broadcast", {{2, 1, 4}, {3, 1}}, [](auto& in) { return weighted_sum(ops::sub(in[0], in[1])); });
  expect_gradients("mul-broadcast", {{2, 3, 4}, {3, 4}}, [](auto& in) { return weighted_sum(ops::mul(in[0], in[1])); });
  expect_gradients("div", {{3, 4}, {3, 4}}, [](auto& in) {
    return weighted_sum(ops::div(in[0], ops::add_scalar(ops::exp(in[1]), 0.5)));
  });
  expect_gradients("neg/scale/add_scalar", {{5}}, [](auto& in) {
    return weighted_sum(ops::add_scalar(ops::scale(ops::neg(in[0]), 3.0), 2.0));
  });
}

TEST(Ops, UnaryGradients) {
  expect_gradients("exp", {{6}}, [](auto& in) { return weighted_sum(ops::exp(in[0])); });
  expect_gradients("log", {{6}}, [](auto& in) { return weighted_sum(ops::log(in[0])); }, 20, 1e-4, 0.2, 3.0);
  expect_gradients("erf", {{6}}, [](auto& in) { return weighted_sum(ops::erf(in[0])); });
  expect_gradients("logistic", {{6}}, [](auto& in) { return weighted_sum(ops::logistic(in[0])); });
  expect_gradients("relu", {{6}}, [](auto& in) { return weighted_sum(ops::relu(in[0])); });
  expect_gradients("gelu", {{6}}, [](auto& in) { return weighted_sum(ops::gelu(in[0])); }, 20, 1e-4, -4, 4);
}

TEST(Ops, StructuralGradients) {
  expect_gradients("matmul", {{2, 3, 4}, {4, 5}}, [](auto& in) { return weighted_sum(ops::matmul(in[0], in[1])); });
  expect_gradients("transpose", {{3, 5}}, [](auto& in) { return weighted_sum(ops::transpose(in[0])); });
  expect_gradients("reshape", {{3, 4}}, [](auto& in) { return weighted_sum(ops::reshape(in[0], {2, 6})); });
  expect_gradients("concat", {{2, 3}, {2, 2}}, [](auto& in) { return weighted_sum(ops::concat({in[0], in[1]}, 1)); });
  expect_gradients("slice", {{4, 5}}, [](auto& in) { return weighted_sum(ops::slice(in[0], 1, 1, 4)); });
  expect_gradients("reverse", {{3, 4, 2}}, [](auto& in) { return weighted_sum(ops::reverse(in[0], 1)); });
  for (std::size_t axis = 0; axis < 3; ++axis) {
    expect_gradients("sum", {{2, 3, 4}}, [axis](auto& in) { return weighted_sum(ops::sum(in[0], axis)); }, 5);
    expect_gradients("mean", {{2, 3, 4}}, [axis](auto& in) { return weighted_sum(ops::mean(in[0], axis)); }, 5);
  }
  expect_gradients("mean_all", {{7}}, [](auto& in) { return ops::mean_all(ops::mul(in[0], in[0])); });
}

TEST(Ops, ComplexGradients) {
  expect_gradients("complex/real", {{3}, {3}}, [](auto& in) {
    Tensor z = ops::complex(in[0], in[1]);
    return weighted_sum(ops::real(ops::cmul(z, z)));
  });
  expect_gradients("cmul", {{4, 2}, {4, 2}}, [](auto& in) { return weighted_sum(ops::cmul(in[0], in[1])); });
  expect_gradients("cdiv", {{4, 2}, {4, 2}}, [](auto& in) {
    return weighted_sum(ops::cdiv(in[0], ops::add_scalar(in[1], 2.5)));
  });
}

TEST(Ops, FourierGradients) {
  for (std::size_t L : {1u, 5u, 8u}) {
    const std::size_t n = 2 * L;
    expect_gradients("rfft", {{2, L}}, [n](auto& in) { return weighted_sum(ops::rfft(in[0], n)); }, 5);
    expect_gradients("irfft", {{2, n / 2 + 1, 2}}, [n, L](auto& in) {
      return weighted_sum(ops::irfft(in[0], n, L));
    }, 5);
  }
}

TEST(Ops, FourierRoundTrip) {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({3, 13}, rng);
  const Tensor back = ops::irfft(ops::rfft(x, 13), 13, 13);
  EXPECT_LT(testutil::max_abs_diff(back.data(), x.data()), 1e-10);
}

TEST(Ops, NormGradients) {
  expect_gradients("layer_norm", {{2, 3, 5}, {5}, {5}}, [](auto& in) {
    return weighted_sum(ops::layer_norm(in[0], in[1], in[2]));
  });
  expect_gradients("batch_norm", {{3, 4, 5}, {5}, {5}}, [](auto& in) {
    ops::BatchNormState st{Tensor(Shape{5}, 0.0), Tensor(Shape{5}, 1.0)};
    return weighted_sum(ops::batch_norm(in[0], in[1], in[2], st, true));
  });
  expect_gradients("batch_norm eval", {{3, 4, 5}, {5}, {5}}, [](auto& in) {
    ops::BatchNormState st{Tensor(Shape{5}, 0.3), Tensor(Shape{5}, 2.0)};
    return weighted_sum(ops::batch_norm(in[0], in[1], in[2], st, false));
  });
}

TEST(Ops, LossAndDropoutGradients) {
  const std::vector<int> labels = {0, 3, 2};
  expect_gradients("softmax_ce", {{3, 4}}, [&](auto& in) { return ops::softmax_cross_entropy(in[0], labels); });
  expect_gradients("dropout", {{4, 6}}, [](auto& in) {
    std::mt19937_64 rng(17);  // same mask on every evaluation
    return weighted_sum(ops::dropout(in[0], 0.3, true, rng));
  });
}

TEST(Ops, SsmGradients) {
  // discretisation and the power-scan kernel, through a whole bank
  expect_gradients("power_kernel", {{2, 3, 2}, {2, 3, 2}}, [](auto& in) {
    Tensor a = ops::scale(in[0], 0.6);  // |a| < 1
    return weighted_sum(ssm::power_kernel(a, in[1], 7));
  });
  expect_gradients("causal_conv", {{3, 6}, {2, 6, 3}}, [](auto& in) {
    return weighted_sum(ssm::causal_conv(in[0], in[1]));
  });
  auto bank = ssm::SSMBank::init(2, 4, ssm::InitScheme::inv, {0.01, 0.5}, 3);
  auto r = check_gradients([&](auto&) { return weighted_sum(ssm::bank_kernel(bank, 9)); },
                           bank.tensors());
  EXPECT_LT(r.max_error, 1e-4);
}

TEST(Ops, ContinuousActivationGradients) {
  for (auto kind : {ActivationKind::sat_fast_sigmoid, ActivationKind::sat_arctan, ActivationKind::relu_fast_sigmoid,
                    ActivationKind::relu_arctan, ActivationKind::gelu}) {
    ActivationSpec spec{kind};
    expect_gradients(to_string(kind).c_str(), {{10}}, [spec](auto& in) {
      return weighted_sum(apply_activation(in[0], spec));
    }, 5, 1e-4, -2, 2);
  }
}

TEST(Ops, GsuStraightThroughGradient) {
  // The tape's GSU backward agrees with the per-row reference backward.
  for (int s = 0; s < 5; ++s) {
    std::mt19937_64 rng(50 + s);
    Tensor x = random_tensor({3, 5}, rng), W = random_tensor({5, 4}, rng);
    Tensor b = random_tensor({4}, rng), c = random_tensor({4}, rng);
    for (auto* t : {&x, &W, &b, &c}) t->set_requires_grad(true);
    {
      Tape tape;
      TapeScope scope(tape);
      weighted_sum(gsu::gsu_mix(x, W, b, c, 0.15)).backward();
    }
    gsu::GSULayerParams p{5, 4, {W.data().begin(), W.data().end()}, {b.data().begin(), b.data().end()},
                          {c.data().begin(), c.data().end()}, 0.15};
    std::mt19937_64 wrng(99);
    const Tensor w = random_tensor({3, 4}, wrng);
    std::vector<double> gx(15, 0.0), gW(20, 0.0), gb(4, 0.0), gc(4, 0.0);
    for (std::size_t r = 0; r < 3; ++r) {
      const auto g = gsu::gsu_backward(p, std::span<const double>(x.data().data() + r * 5, 5),
                                       std::span<const double>(w.data().data() + r * 4, 4));
      for (int i = 0; i < 5; ++i) gx[r * 5 + i] = g.x[i];
      for (int i = 0; i < 20; ++i) gW[i] += g.W[i];
      for (int i = 0; i < 4; ++i) {
        gb[i] += g.b[i];
        gc[i] += g.c[i];
      }
    }
    EXPECT_LT(testutil::max_abs_diff(x.grad(), gx), 1e-12);
    EXPECT_LT(testutil::max_abs_diff(W.grad(), gW), 1e-12);
    EXPECT_LT(testutil::max_abs_diff(b.grad(), gb), 1e-12);
    EXPECT_LT(testutil::max_abs_diff(c.grad(), gc), 1e-12);
  }
}

TEST(Ops, GsuBackwardMatchesIdentitySurrogate) {
  // With x and W already in {-1, 0, 1}, Ter() is the identity at this point, so the
  // straight-through gradients equal the exact gradients of
  // (x W + b) * (x W + c), which finite differences can check.
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> tern(-1, 1);
  gsu::GSULayerParams p{6, 4, std::vector<double>(24), {}, {}, 0.15};
  std::vector<double> x(6);
  for (auto& v : p.W) v = tern(rng);
  p.W[0] = 1.0;
  for (auto& v : x) v = tern(rng);
  x[0] = 1.0;
  std::uniform_real_distribution<double> u(-1, 1);
  for (int j = 0; j < 4; ++j) {
    p.b.push_back(u(rng));
    p.c.push_back(u(rng));
  }
  std::vector<double> up(4);
  for (auto& v : up) v = u(rng);
  const auto g = gsu::gsu_backward(p, x, up);

  auto surrogate = [&](const std::vector<Tensor>& in) {
    Tensor xw = ops::matmul(in[0], in[1]);
    Tensor out = ops::mul(ops::add(xw, in[2]), ops::add(xw, in[3]));
    return ops::sum_all(ops::mul(out, Tensor(Shape{1, 4}, up)));
  };
  std::vector<Tensor> in = {Tensor(Shape{1, 6}, x), Tensor(Shape{6, 4}, p.W), Tensor(Shape{4}, p.b),
                            Tensor(Shape{4}, p.c)};
  const auto r = check_gradients(surrogate, in);
  EXPECT_LT(r.max_error, 1e-4);
  EXPECT_LT(testutil::max_abs_diff(in[0].grad(), g.x), 1e-9);
  EXPECT_LT(testutil::max_abs_diff(in[1].grad(), g.W), 1e-9);
  EXPECT_LT(testutil::max_abs_diff(in[2].grad(), g.b), 1e-9);
  EXPECT_LT(testutil::max_abs_diff(in[3].grad(), g.c), 1e-9);
}

TEST(Ops, LayerNormOfConstantIsZero) {
  Tensor x(Shape{2, 4}, 3.7);
  Tensor y = ops::layer_norm(x, Tensor(Shape{4}, 1.0), Tensor(Shape{4}, 0.0));
  for (double v : y.data()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Ops, CrossEntropyOfUniformLogits) {
  Tensor logits(Shape{3, 10}, 0.25);
  std::vector<int> labels = {0, 4, 9};
  EXPECT_NEAR(ops::softmax_cross_entropy(logits, labels).item(), 2.302585092994046, 1e-12);
  std::vector<int> bad = {0, 4, 10};
  EXPECT_THROW(ops::softmax_cross_entropy(logits, bad), Error);
}

TEST(Ops, DropoutEvalIsIdentity) {
  std::mt19937_64 rng(1);
  Tensor x = random_tensor({4, 4}, rng);
  EXPECT_TRUE(ops::dropout(x, 0.5, false, rng).same_storage(x));
  EXPECT_TRUE(ops::dropout(x, 0.0, true, rng).same_storage(x));
  Tensor y = ops::dropout(x, 0.5, true, rng);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    EXPECT_TRUE(y.at(i) == 0.0 || std::abs(y.at(i) - 2.0 * x.at(i)) < 1e-15);
  }
}

TEST(Ops, BatchNormRunningStats) {
  std::mt19937_64 rng(2);
  Tensor x = random_tensor({8, 10, 3}, rng, 2.0, 4.0);
  ops::BatchNormState st{Tensor(Shape{3}, 0.0), Tensor(Shape{3}, 1.0)};
  Tensor g(Shape{3}, 1.0), b(Shape{3}, 0.0);
  Tensor y = ops::batch_norm(x, g, b, st, true);
  for (std::size_t f = 0; f < 3; ++f) {
    double m = 0.0;
    for (std::size_t i = 0; i < 80; ++i) m += y.at(i * 3 + f);
    EXPECT_NEAR(m / 80, 0.0, 1e-12);
    EXPECT_NEAR(st.running_mean.at(f), 0.3, 0.05);  // 0.9 * 0 + 0.1 * ~3
  }
  Tensor y1 = ops::batch_norm(x, g, b, st, false);
  Tensor y2 = ops::batch_norm(x, g, b, st, false);
  EXPECT_EQ(testutil::max_abs_diff(y1.data(), y2.data()), 0.0);
}

TEST(Ops, ShapeErrors) {
  EXPECT_THROW(ops::add(Tensor(Shape{2, 3}), Tensor(Shape{2})), ShapeError);
  EXPECT_THROW(ops::matmul(Tensor(Shape{2, 3}), Tensor(Shape{2, 3})), ShapeError);
  EXPECT_THROW(ops::reshape(Tensor(Shape{2, 3}), {4}), ShapeError);
  EXPECT_THROW(ops::slice(Tensor(Shape{2, 3}), 1, 2, 5), ShapeError);
}
