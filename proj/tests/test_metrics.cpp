#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

#include "seed/metrics.hpp"

using namespace seed;

namespace {

std::vector<std::uint8_t> random_mask(std::mt19937_64& rng, std::size_t n, double p) {
  std::bernoulli_distribution b(p);
  std::vector<std::uint8_t> m(n);
  for (auto& v : m) v = b(rng);
  return m;
}

}  // namespace

TEST(Confusion, Examples) {
  std::mt19937_64 rng(1);
  const auto g = random_mask(rng, 64, 0.3);
  const auto same = confusion(g, g);
  EXPECT_EQ(same.fp, 0u);
  EXPECT_EQ(same.fn, 0u);
  std::vector<std::uint8_t> inv(g.size());
  std::transform(g.begin(), g.end(), inv.begin(), [](std::uint8_t v) { return static_cast<std::uint8_t>(1 - v); });
  const auto opp = confusion(inv, g);
  EXPECT_EQ(opp.tp, 0u);
  EXPECT_EQ(opp.tn, 0u);

  std::vector<std::uint8_t> checker(16), ones(16, 1);
  for (std::size_t i = 0; i < 16; ++i) checker[i] = static_cast<std::uint8_t>((i / 4 + i % 4) % 2);
  EXPECT_EQ(confusion(checker, ones), (ConfusionCounts{8, 0, 0, 8}));
}

TEST(Confusion, Errors) {
  std::vector<std::uint8_t> a(4, 0), b(5, 0), c{0, 2, 0, 0};
  EXPECT_THROW(confusion(a, b), ContractError);
  EXPECT_THROW(confusion(c, a), ContractError);
}

TEST(Metrics, FormulaExample) {
  const auto m = metrics({50, 30, 10, 10});
  EXPECT_NEAR(m.iou, 50.0 / 70.0, 1e-12);
  EXPECT_NEAR(m.iou, 0.7143, 1e-4);
  EXPECT_NEAR(m.prec, 0.8333, 1e-4);
  EXPECT_NEAR(m.rec, 0.8333, 1e-4);
  EXPECT_NEAR(m.f1, 0.8333, 1e-4);
  EXPECT_NEAR(m.oa, 0.8, 1e-12);
}

TEST(Metrics, Degenerate) {
  const auto none = metrics({0, 100, 0, 0});
  EXPECT_EQ(none.iou, 1.0);
  EXPECT_EQ(none.f1, 1.0);
  EXPECT_EQ(none.oa, 1.0);
  const auto perfect = metrics({10, 5, 0, 0});
  for (double v : {perfect.iou, perfect.f1, perfect.prec, perfect.rec, perfect.oa}) EXPECT_EQ(v, 1.0);
  const auto missed = metrics({0, 90, 0, 10});
  EXPECT_EQ(missed.iou, 0.0);
  EXPECT_EQ(missed.rec, 0.0);
  EXPECT_EQ(missed.prec, 0.0);
  EXPECT_EQ(missed.f1, 0.0);
  EXPECT_NEAR(missed.oa, 0.9, 1e-15);
}

TEST(Metrics, BoundsAndOrdering) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::uint64_t> d(0, 50);
  for (int t = 0; t < 2000; ++t) {
    const ConfusionCounts c{d(rng), d(rng), d(rng), d(rng)};
    const auto m = metrics(c);
    for (double v : {m.iou, m.f1, m.prec, m.rec, m.oa}) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
    if (c.tp > 0) {
      ASSERT_LE(m.iou, m.f1 + 1e-15);
      // F1 and IoU are linked by F1 = 2 IoU / (1 + IoU).
      ASSERT_NEAR(m.f1, 2.0 * m.iou / (1.0 + m.iou), 1e-12);
    }
  }
}

TEST(Metrics, PixelOrderInvariant) {
  std::mt19937_64 rng(3);
  auto p = random_mask(rng, 256, 0.4);
  auto g = random_mask(rng, 256, 0.2);
  const auto before = confusion(p, g);
  std::vector<std::size_t> idx(256);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<std::uint8_t> p2(256), g2(256);
  for (std::size_t i = 0; i < 256; ++i) {
    p2[i] = p[idx[i]];
    g2[i] = g[idx[i]];
  }
  EXPECT_EQ(confusion(p2, g2), before);
}

TEST(Metrics, PoolingIsAssociative) {
  std::mt19937_64 rng(4);
  ConfusionCounts pooled;
  std::vector<std::uint8_t> all_p, all_g;
  for (int s = 0; s < 10; ++s) {
    const auto p = random_mask(rng, 100, 0.3), g = random_mask(rng, 100, 0.3);
    pooled += confusion(p, g);
    all_p.insert(all_p.end(), p.begin(), p.end());
    all_g.insert(all_g.end(), g.begin(), g.end());
  }
  EXPECT_EQ(pooled, confusion(all_p, all_g));
}

TEST(ErrorMap, Colors) {
  const std::vector<std::uint8_t> ones(6, 1);
  const auto white = error_map(ones, ones, 2, 3);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(white.at(r, c), (std::array<std::uint8_t, 3>{255, 255, 255}));
  const std::vector<std::uint8_t> p{1, 0, 0, 1}, g{0, 0, 1, 1};
  const auto img = error_map(p, g, 2, 2);
  EXPECT_EQ(img.at(0, 0), (std::array<std::uint8_t, 3>{0, 255, 0}));
  EXPECT_EQ(img.at(0, 1), (std::array<std::uint8_t, 3>{0, 0, 0}));
  EXPECT_EQ(img.at(1, 0), (std::array<std::uint8_t, 3>{255, 0, 0}));
  EXPECT_EQ(img.at(1, 1), (std::array<std::uint8_t, 3>{255, 255, 255}));
  EXPECT_THROW(error_map(p, g, 3, 2), ContractError);
}

TEST(ErrorMap, HistogramMatchesConfusion) {
  std::mt19937_64 rng(5);
  const auto p = random_mask(rng, 32 * 32, 0.3), g = random_mask(rng, 32 * 32, 0.25);
  const auto img = error_map(p, g, 32, 32);
  std::map<std::array<std::uint8_t, 3>, std::uint64_t> hist;
  for (std::size_t r = 0; r < 32; ++r)
    for (std::size_t c = 0; c < 32; ++c) ++hist[img.at(r, c)];
  const auto c = confusion(p, g);
  EXPECT_EQ(hist[palette::tp], c.tp);
  EXPECT_EQ(hist[palette::tn], c.tn);
  EXPECT_EQ(hist[palette::fp], c.fp);
  EXPECT_EQ(hist[palette::fn], c.fn);
}

TEST(ErrorMap, PpmEncoding) {
  const std::vector<std::uint8_t> p{1, 0}, g{1, 1};
  const auto bytes = encode_ppm(error_map(p, g, 1, 2));
  const std::string head = "P6\n2 1\n255\n";
  ASSERT_EQ(bytes.size(), head.size() + 6);
  EXPECT_EQ(bytes.substr(0, head.size()), head);
  EXPECT_EQ(static_cast<unsigned char>(bytes[head.size() + 3]), 255);
  EXPECT_EQ(static_cast<unsigned char>(bytes[head.size() + 4]), 0);
}
