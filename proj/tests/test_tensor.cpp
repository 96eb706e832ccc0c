#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "seed/tensor.hpp"
#include "test_util.hpp"

using namespace seed;
using seed::testing::random_tensor;

namespace {

std::vector<double> vals(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Direct textbook cross-correlation used as an independent oracle.
std::vector<double> naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
                               std::size_t pad) {
  const long C = static_cast<long>(x.dim(0)), H = static_cast<long>(x.dim(1)), W = static_cast<long>(x.dim(2));
  const long K = static_cast<long>(w.dim(0)), kh = static_cast<long>(w.dim(2)), kw = static_cast<long>(w.dim(3));
  const long s = static_cast<long>(stride), p = static_cast<long>(pad);
  const long Ho = (H + 2 * p - kh) / s + 1, Wo = (W + 2 * p - kw) / s + 1;
  std::vector<double> out;
  for (long k = 0; k < K; ++k)
    for (long oy = 0; oy < Ho; ++oy)
      for (long ox = 0; ox < Wo; ++ox) {
        double acc = b ? b[static_cast<std::size_t>(k)] : 0.0;
        for (long c = 0; c < C; ++c)
          for (long ky = 0; ky < kh; ++ky)
            for (long kx = 0; kx < kw; ++kx) {
              const long iy = oy * s + ky - p, ix = ox * s + kx - p;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              acc += w[static_cast<std::size_t>(((k * C + c) * kh + ky) * kw + kx)] *
                     x[static_cast<std::size_t>((c * H + iy) * W + ix)];
            }
        out.push_back(acc);
      }
  return out;
}

}  // namespace

TEST(Elementwise, AddSubMul) {
  const Tensor a(Shape{2}, std::vector<double>{1, 2});
  const Tensor b(Shape{2}, std::vector<double>{3, 4});
  EXPECT_EQ(vals(a + b), (std::vector<double>{4, 6}));
  EXPECT_EQ(vals(a - a), (std::vector<double>{0, 0}));
  EXPECT_EQ(vals(a * b), (std::vector<double>{3, 8}));
  EXPECT_EQ(vals(a * 2.0), (std::vector<double>{2, 4}));
  EXPECT_EQ(vals(a + 1.0), (std::vector<double>{2, 3}));
}

TEST(Elementwise, ShapeMismatchNamesBothShapes) {
  const Tensor a(Shape{2, 3});
  const Tensor b(Shape{3, 2});
  try {
    (void)(a + b);
    FAIL() << "expected ContractError";
  } catch (const ContractError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[3,2]"), std::string::npos) << msg;
  }
}

TEST(TensorBasics, RejectsBadShapes) {
  EXPECT_THROW(Tensor(Shape{}), ContractError);
  EXPECT_THROW(Tensor(Shape{2, 0}), ContractError);
  EXPECT_THROW(Tensor(Shape{2}, std::vector<double>{1, 2, 3}), ContractError);
  EXPECT_THROW(Tensor().shape(), UsageError);
}

TEST(Conv2d, IdentityKernelReturnsInput) {
  std::mt19937_64 rng(1);
  const auto x = random_tensor(rng, {3, 5, 4});
  Tensor w(Shape{3, 3, 1, 1});
  for (std::size_t c = 0; c < 3; ++c) w.mutable_data()[c * 3 + c] = 1.0;
  EXPECT_EQ(vals(conv2d(x, w, Tensor(Shape{3}), 1, 0)), vals(x));
}

TEST(Conv2d, HandSumExample) {
  const Tensor x(Shape{1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  const Tensor w(Shape{1, 1, 2, 2}, 1.0);
  const auto y = conv2d(x, w, Tensor(), 1, 0);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1}));
  EXPECT_EQ(y.item(), 10.0);
}

TEST(Conv2d, MatchesNaiveOracle) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> d(1, 4);
  int checked = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t C = d(rng), K = d(rng), k = d(rng), stride = d(rng) % 3 + 1, pad = d(rng) % 3;
    const std::size_t H = k + d(rng) * stride + 1, W = k + d(rng) * stride + 1;
    if ((H + 2 * pad - k) % stride || (W + 2 * pad - k) % stride) continue;
    const auto x = random_tensor(rng, {C, H, W});
    const auto w = random_tensor(rng, {K, C, k, k});
    const auto b = random_tensor(rng, {K});
    const auto got = vals(conv2d(x, w, b, stride, pad));
    const auto want = naive_conv(x, w, b, stride, pad);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-12);
    ++checked;
  }
  EXPECT_GT(checked, 20);
}

TEST(Conv2d, ConfigurationErrors) {
  const Tensor x(Shape{1, 5, 5});
  EXPECT_THROW(conv2d(x, Tensor(Shape{1, 1, 2, 2}), Tensor(), 2, 0), ConfigError);  // (5-2)/2 not integral
  EXPECT_THROW(conv2d(x, Tensor(Shape{1, 1, 3, 3}), Tensor(), 0, 0), ConfigError);
  EXPECT_THROW(conv2d(x, Tensor(Shape{1, 1, 6, 6}), Tensor(), 1, 0), ConfigError);
  EXPECT_NO_THROW(conv2d(x, Tensor(Shape{1, 1, 6, 6}), Tensor(), 1, 1));
  EXPECT_THROW(conv2d(x, Tensor(Shape{1, 2, 1, 1}), Tensor(), 1, 0), ContractError);
}

TEST(Conv2d, RecordsMacs) {
  const Tensor x(Shape{3, 8, 8});
  const Tensor w(Shape{5, 3, 3, 3});
  CostMeter meter;
  conv2d(x, w, Tensor(Shape{5}), 1, 1);
  EXPECT_EQ(meter.elapsed().multiply_accumulates, 5u * 3 * 3 * 3 * 8 * 8);
  EXPECT_EQ(meter.elapsed().parameters_touched, 5u * 3 * 3 * 3 + 5);
}

TEST(CostAccounting, AdditiveOverComposition) {
  std::mt19937_64 rng(3);
  const auto x = random_tensor(rng, {2, 6, 6});
  const auto w1 = random_tensor(rng, {4, 2, 3, 3});
  const auto w2 = random_tensor(rng, {3, 4, 1, 1});
  OpCost f, g, fg;
  {
    CostMeter m;
    conv2d(x, w1, Tensor(), 1, 1);
    f = m.elapsed();
  }
  const auto h = conv2d(x, w1, Tensor(), 1, 1);
  {
    CostMeter m;
    conv2d(h, w2, Tensor(), 1, 0);
    g = m.elapsed();
  }
  {
    CostMeter m;
    conv2d(conv2d(x, w1, Tensor(), 1, 1), w2, Tensor(), 1, 0);
    fg = m.elapsed();
  }
  EXPECT_EQ(fg, f + g);
}

TEST(Resample, Examples) {
  const Tensor c(Shape{1, 4, 4}, 7.0);
  EXPECT_EQ(vals(upsample(avg_pool(c, 2), 2)), vals(c));
  const Tensor x(Shape{1, 2, 2}, std::vector<double>{1, 1, 3, 3});
  EXPECT_EQ(avg_pool(x, 2).item(), 2.0);
  const Tensor two(Shape{1, 1, 1}, std::vector<double>{2});
  EXPECT_EQ(vals(upsample(two, 2)), (std::vector<double>{2, 2, 2, 2}));
  EXPECT_THROW(avg_pool(Tensor(Shape{1, 3, 4}), 2), ConfigError);
  EXPECT_THROW(upsample(two, 1), ConfigError);
}

TEST(Activation, Examples) {
  const Tensor z(Shape{1}, std::vector<double>{0.0});
  EXPECT_EQ(sigmoid(z).item(), 0.5);
  EXPECT_EQ(relu(Tensor(Shape{1}, std::vector<double>{-3.0})).item(), 0.0);
  EXPECT_EQ(relu(Tensor(Shape{1}, std::vector<double>{2.5})).item(), 2.5);
  EXPECT_TRUE(std::isnan(relu(Tensor(Shape{1}, std::vector<double>{std::nan("")})).item()));
  EXPECT_NEAR(sigmoid_scalar(-800.0), 0.0, 1e-300);
  EXPECT_EQ(sigmoid_scalar(800.0), 1.0);
}

TEST(Bce, Examples) {
  const Tensor one(Shape{1}, std::vector<double>{1.0});
  EXPECT_NEAR(bce_with_logits(Tensor(Shape{1}, std::vector<double>{0.0}), one).item(), std::log(2.0), 1e-15);
  const double sat = bce_with_logits(Tensor(Shape{1}, std::vector<double>{50.0}), one).item();
  EXPECT_LT(sat, 1e-20);
  EXPECT_GE(sat, 0.0);
  EXPECT_TRUE(std::isfinite(bce_with_logits(Tensor(Shape{1}, std::vector<double>{-1e6}), one).item()));
  EXPECT_THROW(bce_with_logits(Tensor(Shape{1}), Tensor(Shape{1}, std::vector<double>{0.5})), ContractError);
  EXPECT_THROW(bce_with_logits(Tensor(Shape{2}), Tensor(Shape{3})), ContractError);
}

TEST(Bce, NonNegativeProperty) {
  std::mt19937_64 rng(4);
  std::bernoulli_distribution coin(0.5);
  for (int t = 0; t < 200; ++t) {
    const auto z = random_tensor(rng, {16}, 20.0);
    std::vector<double> tv(16);
    for (auto& v : tv) v = coin(rng) ? 1.0 : 0.0;
    EXPECT_GE(bce_with_logits(z, Tensor(Shape{16}, tv)).item(), 0.0);
  }
}

TEST(Backward, LinearAndQuadratic) {
  Tensor w(Shape{3}, std::vector<double>{1, 2, 3}, true);
  backward(sum(w));
  EXPECT_EQ(std::vector<double>(w.grad().begin(), w.grad().end()), (std::vector<double>{1, 1, 1}));

  Tensor v(Shape{2}, std::vector<double>{1, 2}, true);
  backward(sum(v * v));
  EXPECT_EQ(std::vector<double>(v.grad().begin(), v.grad().end()), (std::vector<double>{2, 4}));
}

TEST(Backward, AccumulatesAcrossCalls) {
  Tensor v(Shape{2}, std::vector<double>{1, 2}, true);
  backward(sum(v * v));
  backward(sum(v * v));
  EXPECT_EQ(std::vector<double>(v.grad().begin(), v.grad().end()), (std::vector<double>{4, 8}));
  v.zero_grad();
  EXPECT_EQ(v.grad()[0], 0.0);
}

TEST(Backward, SharedSubexpressionIsCountedOnce) {
  Tensor v(Shape{1}, std::vector<double>{3}, true);
  const auto y = v * v;
  const auto loss = sum(y + y);  // 2 v^2 -> 4 v
  backward(loss);
  EXPECT_EQ(v.grad()[0], 12.0);
  backward(loss);  // replaying the same graph accumulates into leaves only
  EXPECT_EQ(v.grad()[0], 24.0);
}

TEST(Backward, UsageErrors) {
  const Tensor c(Shape{1}, 2.0);
  EXPECT_THROW(backward(c), UsageError);  // not on a recorded graph
  Tensor w(Shape{2}, 1.0, true);
  EXPECT_THROW(backward(w * 2.0), UsageError);  // not scalar
  {
    NoGradGuard g;
    EXPECT_THROW(backward(sum(w * w)), UsageError);
  }
  EXPECT_THROW(c.grad(), UsageError);
}

TEST(Graph, DeterministicForward) {
  std::mt19937_64 rng(5);
  const auto x = random_tensor(rng, {2, 8, 8});
  const auto w = random_tensor(rng, {3, 2, 3, 3});
  EXPECT_EQ(vals(relu(conv2d(x, w, Tensor(), 1, 1))), vals(relu(conv2d(x, w, Tensor(), 1, 1))));
}

TEST(PixelShuffle, DepthToSpaceLayout) {
  std::vector<double> v(8);
  for (std::size_t i = 0; i < 8; ++i) v[i] = static_cast<double>(i);
  // 4 channels of 1x2 -> 1 channel of 2x4.
  const auto y = pixel_shuffle(Tensor(Shape{4, 1, 2}, v), 2);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 4}));
  // Output (r, c) reads channel (r%2)*2 + c%2 at pixel (r/2, c/2).
  EXPECT_EQ(vals(y), (std::vector<double>{0, 2, 1, 3, 4, 6, 5, 7}));
  EXPECT_THROW(pixel_shuffle(Tensor(Shape{3, 1, 1}), 2), ConfigError);
}

TEST(ConcatChannels, StacksAlongChannels) {
  const Tensor a(Shape{1, 1, 2}, std::vector<double>{1, 2});
  const Tensor b(Shape{2, 1, 2}, std::vector<double>{3, 4, 5, 6});
  const auto c = concat_channels(a, b);
  EXPECT_EQ(c.shape(), (Shape{3, 1, 2}));
  EXPECT_EQ(vals(c), (std::vector<double>{1, 2, 3, 4, 5, 6}));
  EXPECT_THROW(concat_channels(a, Tensor(Shape{1, 2, 2})), ContractError);
}

TEST(MaskedSelect, MatchesArithmeticForm) {
  std::mt19937_64 rng(6);
  const auto keep = random_tensor(rng, {10});
  const auto take = random_tensor(rng, {10});
  std::vector<std::uint8_t> m(10);
  for (std::size_t i = 0; i < 10; ++i) m[i] = i % 3 == 0;
  const auto out = masked_select(keep, take, m);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(out[i], m[i] * take[i] + (1 - m[i]) * keep[i]);
}
