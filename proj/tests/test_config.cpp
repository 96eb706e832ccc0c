#include <gtest/gtest.h>

#include <filesystem>

#include "seed/config.hpp"

using namespace seed;

TEST(Config, DefaultsAndRoundTrip) {
  const ExperimentConfig d;
  EXPECT_EQ(d.epochs, 30u);
  EXPECT_EQ(d.batch, 16u);
  EXPECT_EQ(d.optim.lr, 1e-3);
  EXPECT_EQ(d.optim.weight_decay, 1e-2);
  EXPECT_EQ(d.data.n_train, 512u);
  EXPECT_EQ(d.arch.channels, (std::vector<std::size_t>{8, 16, 32}));

  ExperimentConfig c;
  c.id = "custom";
  c.seed = 99;
  c.arch.head = model::Head::concat;
  c.arch.exchange.axis = ExchangeAxis::spatial_row;
  c.arch.exchange.p = 0.25;
  c.optim.lr = 3.5e-4;
  c.data.noise_level = 0.0625;
  c.shift_grid = {0, 3};
  c.seeds = {4, 5};
  c.modes = {model::InferenceMode::branch_a, model::InferenceMode::siamese};
  const auto back = parse_config(to_ini(c));
  EXPECT_EQ(canonical(back), canonical(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_EQ(back.optim.lr, 3.5e-4);
  EXPECT_EQ(back.arch.exchange.p, 0.25);
}

TEST(Config, DoublesRoundTripExactly) {
  ExperimentConfig c;
  c.optim.lr = 0.1 + 0.2;  // not representable as a short decimal
  c.optim.eps = 1e-300;
  const auto back = parse_config(to_ini(c));
  EXPECT_EQ(back.optim.lr, c.optim.lr);
  EXPECT_EQ(back.optim.eps, c.optim.eps);
}

TEST(Config, HashStableUnderKeyReordering) {
  const std::string a =
      "[experiment]\nepochs = 5\nbatch = 4\n[arch]\nhead = add\nchannels = 8,8,16\n[optim]\nlr = 0.002\n";
  const std::string b =
      "[optim]\nlr = 2e-3\n[arch]\nchannels = 8, 8, 16\nhead = add\n[experiment]\nbatch = 4\nepochs = 5\n";
  EXPECT_EQ(config_hash(parse_config(a)), config_hash(parse_config(b)));
  EXPECT_NE(config_hash(parse_config(a)), config_hash(ExperimentConfig{}));
}

TEST(Config, HashIgnoresIdButNotSettings) {
  ExperimentConfig a, b;
  b.id = "another/label";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.arch.exchange.offset = 1;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Config, Fnv1aReference) {
  // Published FNV-1a 64 test vectors.
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(Config, Errors) {
  EXPECT_THROW(parse_config("[arch]\nfancy = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("epochs = 3\n"), ConfigError);
  EXPECT_THROW(parse_config("[experiment]\nepochs = many\n"), ConfigError);
  EXPECT_THROW(parse_config("[experiment]\nepochs = 0\n"), ConfigError);
  EXPECT_THROW(parse_config("[exchange]\naxis = diagonal\n"), ConfigError);
  EXPECT_THROW(parse_config("[data]\nheight = 30\nwidth = 30\n"), ConfigError);
  EXPECT_THROW(parse_config("[shift]\npx = 40\n"), ConfigError);
  EXPECT_THROW(parse_config("[experiment\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/seed.cfg"), ConfigError);
}

TEST(Config, DataSizeDrivesArch) {
  const auto c = parse_config("[data]\nheight = 64\nwidth = 16\n");
  EXPECT_EQ(c.arch.height, 64u);
  EXPECT_EQ(c.arch.width, 16u);
}

TEST(Config, FileRoundTrip) {
  const auto p = std::filesystem::temp_directory_path() / "seed_cfg_rt.cfg";
  ExperimentConfig c;
  c.arch.exchange.policy = ExchangePolicy::bernoulli;
  save_config(p, c);
  EXPECT_EQ(config_hash(load_config(p)), config_hash(c));
}
