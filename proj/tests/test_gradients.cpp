#include <gtest/gtest.h>

#include <random>

#include "seed/model.hpp"
#include "test_util.hpp"

using namespace seed;
using seed::testing::gradient_error;
using seed::testing::probe;
using seed::testing::random_tensor;

namespace {

constexpr int kTrials = 100;

Tensor binary_target(std::mt19937_64& rng, const Shape& s) {
  std::bernoulli_distribution coin(0.4);
  std::vector<double> v(numel(s));
  for (auto& x : v) x = coin(rng) ? 1.0 : 0.0;
  return Tensor(s, std::move(v));
}

// Keeps ReLU inputs away from the kink so central differences stay valid.
Tensor off_kink(std::mt19937_64& rng, const Shape& s) {
  auto t = random_tensor(rng, s);
  for (auto& v : t.mutable_data())
    if (std::abs(v) < 1e-3) v += v < 0 ? -1e-3 : 1e-3;
  return t;
}

}  // namespace

TEST(Gradients, ElementwiseMul) {
  std::mt19937_64 rng(10);
  for (int t = 0; t < kTrials; ++t) {
    const auto err = gradient_error(
        [](const std::vector<Tensor>& in) { return probe(in[0] * in[1], 1); },
        {random_tensor(rng, {3, 3}), random_tensor(rng, {3, 3})});
    ASSERT_LT(err, 1e-6) << "trial " << t;
  }
}

TEST(Gradients, ElementwiseAddSubScalar) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < kTrials; ++t) {
    const auto err = gradient_error(
        [](const std::vector<Tensor>& in) { return probe((in[0] - in[1]) * 1.5 + in[1] + 0.3, 2); },
        {random_tensor(rng, {2, 4}), random_tensor(rng, {2, 4})});
    ASSERT_LT(err, 1e-4) << "trial " << t;
  }
}

TEST(Gradients, SumAndMean) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < kTrials; ++t) {
    const auto err = gradient_error(
        [](const std::vector<Tensor>& in) { return mean(in[0] * in[0]) + sum(in[0]); }, {random_tensor(rng, {5})});
    ASSERT_LT(err, 1e-4);
  }
}

TEST(Gradients, Sigmoid) {
  std::mt19937_64 rng(13);
  for (int t = 0; t < kTrials; ++t) {
    const auto err = gradient_error([](const std::vector<Tensor>& in) { return probe(sigmoid(in[0]), 3); },
                                    {random_tensor(rng, {2, 3, 3}, 2.0)});
    ASSERT_LT(err, 1e-6);
  }
}

TEST(Gradients, Relu) {
  std::mt19937_64 rng(14);
  for (int t = 0; t < kTrials; ++t) {
    const auto err = gradient_error([](const std::vector<Tensor>& in) { return probe(relu(in[0]), 4); },
                                    {off_kink(rng, {2, 3, 3})});
    ASSERT_LT(err, 1e-4);
  }
}

TEST(Gradients, BceWithLogits) {
  std::mt19937_64 rng(15);
  for (int t = 0; t < kTrials; ++t) {
    const auto target = binary_target(rng, {1, 4, 4});
    const auto err = gradient_error(
        [&](const std::vector<Tensor>& in) { return bce_with_logits(in[0], target); },
        {random_tensor(rng, {1, 4, 4}, 3.0)});
    ASSERT_LT(err, 1e-5);
  }
}

TEST(Gradients, Conv2dAllArguments) {
  std::mt19937_64 rng(16);
  std::uniform_int_distribution<std::size_t> d(1, 3);
  int trials = 0;
  while (trials < kTrials) {
    const std::size_t C = d(rng), K = d(rng), k = d(rng), stride = d(rng) % 2 + 1, pad = d(rng) - 1;
    const std::size_t H = k + 2 * stride + (stride == 1 ? d(rng) : 0), W = H;
    if ((H + 2 * pad - k) % stride) continue;
    const auto err = gradient_error(
        [=](const std::vector<Tensor>& in) { return probe(conv2d(in[0], in[1], in[2], stride, pad), 5); },
        {random_tensor(rng, {C, H, W}), random_tensor(rng, {K, C, k, k}), random_tensor(rng, {K})});
    ASSERT_LT(err, 1e-4) << "C" << C << " K" << K << " k" << k << " s" << stride << " p" << pad;
    ++trials;
  }
}

TEST(Gradients, PoolAndUpsample) {
  std::mt19937_64 rng(17);
  for (int t = 0; t < kTrials; ++t) {
    const auto err = gradient_error(
        [](const std::vector<Tensor>& in) { return probe(upsample(in[0], 2), 6) + probe(avg_pool(in[0], 2), 7); },
        {random_tensor(rng, {2, 4, 4})});
    ASSERT_LT(err, 1e-4);
  }
}

TEST(Gradients, PixelShuffleConcatMaskedSelect) {
  std::mt19937_64 rng(18);
  for (int t = 0; t < kTrials; ++t) {
    std::vector<std::uint8_t> m(2 * 3 * 3);
    for (auto& e : m) e = static_cast<std::uint8_t>(rng() & 1U);
    const auto err = gradient_error(
        [&](const std::vector<Tensor>& in) {
          const auto sel = masked_select(in[0], in[1], m);
          return probe(pixel_shuffle(concat_channels(sel, in[1]), 2), 8);
        },
        {random_tensor(rng, {2, 3, 3}), random_tensor(rng, {2, 3, 3})});
    ASSERT_LT(err, 1e-4);
  }
}

// End to end: every parameter of the SEED graph (LE and CE) on an 8x8 pair.
TEST(Gradients, FullSeedGraph) {
  for (auto axis : {ExchangeAxis::layer, ExchangeAxis::channel}) {
    model::ArchConfig cfg;
    cfg.height = cfg.width = 8;
    cfg.channels = {4, 4, 4};
    cfg.neck_channels = 4;
    cfg.exchange.axis = axis;
    auto m = model::make_model(cfg, 3);
    std::mt19937_64 rng(19);
    const auto a = random_tensor(rng, {3, 8, 8});
    const auto b = random_tensor(rng, {3, 8, 8});
    const auto mask = binary_target(rng, {1, 8, 8});
    std::vector<Tensor> params;
    std::vector<std::string> names;
    for (const auto& [name, p] : m.params) {
      params.push_back(p);
      names.push_back(name);
    }
    // Biases start at zero, which parks many ReLUs at their kink; move them off.
    for (auto& p : params)
      for (auto& v : p.mutable_data()) v += 0.05 * (static_cast<double>(rng() % 1000) / 1000.0 - 0.5);
    const auto err = gradient_error(
        [&](const std::vector<Tensor>&) {
          return model::loss(model::seed_forward(m, a, b, 0, Phase::eval), mask);
        },
        params);
    EXPECT_LT(err, 1e-3) << to_string(axis);
  }
}
