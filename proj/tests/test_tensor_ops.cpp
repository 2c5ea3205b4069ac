#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "pcnet/errors.hpp"
#include "pcnet/gradcheck.hpp"
#include "pcnet/ops.hpp"
#include "test_util.hpp"

using namespace pcnet;
using pcnet::testing::random_tensor;
using pcnet::testing::rel_diff;

namespace {

// Direct nested-loop convolution with zero padding.
std::vector<double> naive_conv(const Tensor<double>& x, const Tensor<double>& k, std::size_t stride,
                               std::size_t pad) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const std::size_t Ho = (H + 2 * pad - kh) / stride + 1, Wo = (W + 2 * pad - kw) / stride + 1;
  std::vector<double> out(B * O * Ho * Wo, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < Ho; ++i)
        for (std::size_t j = 0; j < Wo; ++j) {
          double acc = 0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v) {
                const long y = static_cast<long>(i * stride + u) - static_cast<long>(pad);
                const long z = static_cast<long>(j * stride + v) - static_cast<long>(pad);
                if (y < 0 || z < 0 || y >= static_cast<long>(H) || z >= static_cast<long>(W)) continue;
                acc += x[((b * C + c) * H + y) * W + z] * k[((o * C + c) * kh + u) * kw + v];
              }
          out[((b * O + o) * Ho + i) * Wo + j] = acc;
        }
  return out;
}

}  // namespace

TEST(Conv2d, OnesGiveNine) {
  auto x = Tensor<double>::full({1, 1, 3, 3}, 1.0);
  auto k = Tensor<double>::full({1, 1, 3, 3}, 1.0);
  auto y = conv2d(x, k, 1, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y[0], 9.0);
}

TEST(Conv2d, IdentityKernel) {
  Rng rng(3);
  auto x = random_tensor({2, 1, 5, 4}, rng);
  auto k = Tensor<double>::full({1, 1, 1, 1}, 1.0);
  auto y = conv2d(x, k, 1, 0);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Conv2d, MatchesNestedLoops) {
  Rng rng(11);
  for (std::size_t stride : {1u, 2u}) {
    for (std::size_t pad : {0u, 1u}) {
      auto x = random_tensor({2, 3, 8, 8}, rng);
      auto k = random_tensor({4, 3, 3, 3}, rng);
      auto y = conv2d(x, k, stride, pad);
      const auto ref = naive_conv(x, k, stride, pad);
      ASSERT_EQ(y.numel(), ref.size());
      for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_LE(rel_diff(y[i], ref[i]), 1e-12) << i;
    }
  }
}

TEST(Conv2d, RejectsChannelMismatch) {
  Tensor<double> x({1, 2, 4, 4});
  Tensor<double> k({1, 3, 3, 3});
  EXPECT_THROW(conv2d(x, k, 1, 1), DimensionError);
}

TEST(Conv1dChannels, Examples) {
  Tensor<double> v({3}, {1, 2, 3});
  Tensor<double> delta({3}, {0, 1, 0});
  auto y = conv1d_channels(v, delta);
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), (std::vector<double>{1, 2, 3}));

  Tensor<double> v4({4}, {1, 2, 3, 4});
  Tensor<double> ones({3}, {1, 1, 1});
  y = conv1d_channels(v4, ones);
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), (std::vector<double>{3, 6, 9, 7}));

  Rng rng(2);
  auto r = random_tensor({9}, rng);
  y = conv1d_channels(r, Tensor<double>::zeros({5}));
  for (double x : y.data()) EXPECT_EQ(x, 0.0);
}

TEST(Conv1dChannels, RejectsEvenKernel) {
  Tensor<double> v({4}, {1, 2, 3, 4});
  EXPECT_THROW(conv1d_channels(v, Tensor<double>::zeros({4})), Error);
}

TEST(GlobalAveragePool, Examples) {
  auto c = Tensor<double>::full({1, 2, 3, 3}, 7.0);
  auto g = global_average_pool(c);
  ASSERT_EQ(g.shape(), (Shape{1, 2}));
  EXPECT_EQ(g[0], 7.0);
  EXPECT_EQ(g[1], 7.0);

  Tensor<double> m({1, 1, 2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(global_average_pool(m)[0], 2.5);
}

TEST(GlobalAveragePool, MatchesSummation) {
  Rng rng(5);
  auto f = random_tensor({3, 4, 5, 6}, rng);
  auto g = global_average_pool(f);
  for (std::size_t bc = 0; bc < 12; ++bc) {
    double s = 0;
    for (std::size_t i = 0; i < 30; ++i) s += f[bc * 30 + i];
    EXPECT_LE(rel_diff(g[bc], s / 30.0), 1e-12);
  }
}

TEST(Affine, Examples) {
  Tensor<double> x({1, 2}, {1, 2});
  Tensor<double> W({2, 2}, {1, 1, 0, 1});
  Tensor<double> b({2}, {0, 1});
  auto y = affine(x, W, b);
  EXPECT_EQ(y[0], 3.0);
  EXPECT_EQ(y[1], 3.0);

  Rng rng(1);
  auto r = random_tensor({3, 2}, rng);
  Tensor<double> I({2, 2}, {1, 0, 0, 1});
  y = affine(r, I, Tensor<double>::zeros({2}));
  for (std::size_t i = 0; i < r.numel(); ++i) EXPECT_EQ(y[i], r[i]);
}

TEST(Affine, MatchesNaiveMatmul) {
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t B = 1 + uniform_index(rng, 5), D = 1 + uniform_index(rng, 9), N = 1 + uniform_index(rng, 7);
    auto x = random_tensor({B, D}, rng);
    auto W = random_tensor({N, D}, rng);
    auto b = random_tensor({N}, rng);
    auto y = affine(x, W, b);
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t n = 0; n < N; ++n) {
        double acc = b[n];
        for (std::size_t d = 0; d < D; ++d) acc += W[n * D + d] * x[i * D + d];
        EXPECT_LE(rel_diff(y[i * N + n], acc), 1e-12);
      }
  }
}

TEST(Softmax, Examples) {
  auto u = softmax(Tensor<double>({3}, {0, 0, 0}));
  for (double v : u.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  auto big = softmax(Tensor<double>({2}, {1000, 1000}));
  EXPECT_EQ(big[0], 0.5);
  EXPECT_EQ(big[1], 0.5);
  auto q = softmax(Tensor<double>({3}, {1, 2, 3}));
  EXPECT_NEAR(q[0], 0.09003057, 1e-8);
  EXPECT_NEAR(q[1], 0.24472847, 1e-8);
  EXPECT_NEAR(q[2], 0.66524096, 1e-8);
}

TEST(Softmax, SumsToOneForLargeInputs) {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    auto z = random_tensor({4, 7}, rng, -1e6, 1e6);
    auto q = softmax(z);
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 7; ++c) {
        ASSERT_TRUE(std::isfinite(q[r * 7 + c]));
        s += q[r * 7 + c];
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Elementwise, Examples) {
  EXPECT_EQ(sigmoid(Tensor<double>::scalar(0.0)).item(), 0.5);
  auto m = mul(Tensor<double>({3}, {1, 2, 3}), Tensor<double>({3}, {0, 1, 2}));
  EXPECT_EQ(std::vector<double>(m.data().begin(), m.data().end()), (std::vector<double>{0, 2, 6}));
  auto r = relu(Tensor<double>({3}, {-1, 0, 2}));
  EXPECT_EQ(std::vector<double>(r.data().begin(), r.data().end()), (std::vector<double>{0, 0, 2}));
  auto a = add(Tensor<double>({2}, {1, 2}), Tensor<double>({2}, {3, 4}));
  EXPECT_EQ(a[1], 6.0);
  EXPECT_EQ(scale(Tensor<double>(Shape{1}, std::vector<double>{3}), 2.0)[0], 6.0);
}

TEST(Elementwise, ShapeMismatchThrows) {
  EXPECT_THROW(add(Tensor<double>({2}), Tensor<double>({3})), DimensionError);
}

TEST(ConcatChannels, PreservesOrder) {
  Rng rng(4);
  auto a = random_tensor({1, 2, 2, 2}, rng);
  auto b = random_tensor({1, 3, 2, 2}, rng);
  auto c = concat_channels(a, b);
  ASSERT_EQ(c.shape(), (Shape{1, 5, 2, 2}));
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(c[i], a[i]);
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(c[8 + i], b[i]);
}

TEST(Backward, SumGivesOnes) {
  Tape<double> tape;
  Rng rng(1);
  auto x = random_tensor({2, 3}, rng, -1, 1, true);
  {
    TapeScope<double> scope(&tape);
    auto loss = sum(x);
    tape.backward(loss);
  }
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareGivesTwoX) {
  Tape<double> tape;
  Rng rng(2);
  auto x = random_tensor({5}, rng, -1, 1, true);
  {
    TapeScope<double> scope(&tape);
    auto loss = sum(mul(x, x));
    tape.backward(loss);
  }
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(x.grad()[i], 2.0 * x[i]);
}

TEST(Backward, NonScalarLossIsUsageError) {
  Tape<double> tape;
  auto x = Tensor<double>::full({3}, 1.0);
  x.set_requires_grad(true);
  TapeScope<double> scope(&tape);
  auto y = scale(x, 2.0);
  EXPECT_THROW(tape.backward(y), UsageError);
}

TEST(Backward, UnreachableInputGetsZeroGrad) {
  Tape<double> tape;
  auto x = Tensor<double>::full({2}, 1.0);
  auto unused = Tensor<double>::full({2}, 3.0);
  x.set_requires_grad(true);
  unused.set_requires_grad(true);
  {
    TapeScope<double> scope(&tape);
    auto both = add(x, scale(unused, 0.0));
    (void)both;
    auto loss = sum(x);
    tape.backward(loss);
  }
  ASSERT_TRUE(unused.has_grad());
  for (double g : unused.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, TapeIsTopologicalAndRepeatable) {
  Rng rng(8);
  auto x = random_tensor({1, 2, 4, 4}, rng, -1, 1, true);
  auto k = random_tensor({3, 2, 3, 3}, rng, -1, 1, true);
  std::vector<double> first;
  for (int pass = 0; pass < 2; ++pass) {
    x.zero_grad();
    k.zero_grad();
    Tape<double> tape;
    TapeScope<double> scope(&tape);
    auto loss = mean(sigmoid(conv2d(x, k, 1, 1)));
    // Every node's inputs were produced before it.
    for (std::size_t n = 0; n < tape.nodes().size(); ++n) {
      for (const auto& in : tape.nodes()[n].inputs) {
        for (std::size_t later = n; later < tape.nodes().size(); ++later) {
          EXPECT_FALSE(tape.nodes()[later].output.same(in));
        }
      }
    }
    tape.backward(loss);
    std::vector<double> g(k.grad().begin(), k.grad().end());
    if (pass == 0) first = g;
    else EXPECT_EQ(g, first);
  }
}

TEST(Backward, GradientsAccumulateAcrossUses) {
  Tape<double> tape;
  auto x = Tensor<double>::full({2}, 1.5);
  x.set_requires_grad(true);
  {
    TapeScope<double> scope(&tape);
    auto loss = sum(add(x, x));
    tape.backward(loss);
  }
  EXPECT_EQ(x.grad()[0], 2.0);
}

TEST(NoGrad, RecordsNothing) {
  Tape<double> tape;
  TapeScope<double> scope(&tape);
  auto x = Tensor<double>::full({2}, 1.0);
  x.set_requires_grad(true);
  {
    NoGradScope<double> off;
    auto y = sigmoid(x);
    (void)y;
  }
  EXPECT_EQ(tape.size(), 0u);
  auto z = sigmoid(x);
  (void)z;
  EXPECT_EQ(tape.size(), 1u);
}

TEST(Gradient, FiniteDifferencesOnRandomSmallInputs) {
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    auto x = random_tensor({2, 2, 4, 4}, rng, -1, 1, true);
    auto k = random_tensor({3, 2, 3, 3}, rng, -1, 1, true);
    auto w = random_tensor({4, 3}, rng, -1, 1, true);
    auto b = random_tensor({4}, rng, -1, 1, true);
    auto fn = [&] { return mean(neg_log_clamped(softmax(affine(global_average_pool(relu(conv2d(x, k, 2, 1))), w, b)))); };
    EXPECT_LT(gradient_error<double>(fn, {x, k, w, b}, 1e-5), 1e-5);
  }
}

TEST(Gradient, Float32WithinLooseTolerance) {
  Rng rng(18);
  auto x = random_tensor<float>({1, 2, 4, 4}, rng, -1, 1, true);
  auto k = random_tensor<float>({2, 2, 3, 3}, rng, -1, 1, true);
  auto fn = [&] { return mean(sigmoid(conv2d(x, k, 1, 1))); };
  EXPECT_LT(gradient_error<float>(fn, {x, k}, 1e-2), 1e-2);
}
