#pragma once

// Toy-scale Siamese encoder -> exchange -> FPN neck -> layer-by-layer decoder,
// plus the single-decoder fusion baselines (concat / add / subtract) and a
// plain segmentation body that seg2cd() turns into a change detector.
//
// Encoder stage l: 2x2 stride-2 patch conv + ReLU, then residual bottlenecks.
// Level l therefore has spatial size (H, W) / 2^(l+1).
// Neck: 1x1 laterals to a uniform width, top-down nearest upsample + add.
// Decoder: coarsest to finest, upsample + add the next level, residual
// bottlenecks, then a 1x1 head to 4 channels and a 2x depth-to-space to the
// input resolution.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "seed/exchange.hpp"
#include "seed/optim.hpp"
#include "seed/synth_data.hpp"
#include "seed/tensor.hpp"

namespace seed::model {

using seed::to_string;

enum class Head { seed, concat, add, subtract, segmentation };

inline std::string to_string(Head h) {
  switch (h) {
    case Head::seed: return "seed";
    case Head::concat: return "concat";
    case Head::add: return "add";
    case Head::subtract: return "subtract";
    case Head::segmentation: return "segmentation";
  }
  return "?";
}

inline Head parse_head(const std::string& s) {
  if (s == "seed" || s == "none") return Head::seed;
  if (s == "concat") return Head::concat;
  if (s == "add") return Head::add;
  if (s == "subtract") return Head::subtract;
  if (s == "segmentation") return Head::segmentation;
  throw ConfigError("unknown head: " + s);
}

inline bool is_fusion(Head h) { return h == Head::concat || h == Head::add || h == Head::subtract; }

struct ArchConfig {
  std::size_t in_channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t levels = 3;
  std::vector<std::size_t> channels{8, 16, 32};
  std::size_t blocks = 1;          // bottlenecks per encoder stage
  std::size_t decoder_blocks = 1;  // bottlenecks per decoder stage
  std::size_t neck_channels = 16;
  std::size_t bottleneck_ratio = 2;
  Head head = Head::seed;
  ExchangeSpec exchange;           // used when head == seed

  void validate() const {
    if (levels < 2) throw ConfigError("arch: levels must be >= 2");
    if (channels.size() != levels) {
      throw ConfigError("arch: " + std::to_string(channels.size()) + " channel entries for " +
                        std::to_string(levels) + " levels");
    }
    const std::size_t scale = std::size_t{1} << levels;
    if (height % scale != 0 || width % scale != 0) {
      throw ConfigError("arch: input " + std::to_string(height) + "x" + std::to_string(width) +
                        " not divisible by 2^levels");
    }
    if (bottleneck_ratio < 1) throw ConfigError("arch: bottleneck_ratio must be >= 1");
    for (auto c : channels)
      if (c < bottleneck_ratio) throw ConfigError("arch: channel width below bottleneck ratio");
    if (neck_channels < bottleneck_ratio) throw ConfigError("arch: neck width below bottleneck ratio");
    if (head == Head::seed) exchange.validate();
  }

  std::size_t level_height(std::size_t l) const { return height >> (l + 1); }
  std::size_t level_width(std::size_t l) const { return width >> (l + 1); }
};

struct Model {
  ArchConfig config;
  ParamSet params;
};

// ---------------------------------------------------------------------------
// Parameters

namespace detail {

struct ConvSpec {
  std::string name;
  std::size_t out, in, k;
  bool relu_follows;
};

inline void add_bottleneck(std::vector<ConvSpec>& specs, const std::string& prefix, std::size_t width,
                           std::size_t ratio) {
  const std::size_t mid = width / ratio;
  specs.push_back({prefix + ".c1", mid, width, 1, true});
  specs.push_back({prefix + ".c2", mid, mid, 3, true});
  specs.push_back({prefix + ".c3", width, mid, 1, false});
}

// Every conv of the architecture, in registration order.
inline std::vector<ConvSpec> conv_layout(const ArchConfig& cfg) {
  std::vector<ConvSpec> specs;
  for (std::size_t l = 0; l < cfg.levels; ++l) {
    const std::string p = "enc." + std::to_string(l);
    const std::size_t in = l == 0 ? cfg.in_channels : cfg.channels[l - 1];
    specs.push_back({p + ".down", cfg.channels[l], in, 2, true});
    for (std::size_t b = 0; b < cfg.blocks; ++b)
      add_bottleneck(specs, p + ".block" + std::to_string(b), cfg.channels[l], cfg.bottleneck_ratio);
  }
  if (cfg.head == Head::concat) {
    for (std::size_t l = 0; l < cfg.levels; ++l)
      specs.push_back({"fuse." + std::to_string(l), cfg.channels[l], 2 * cfg.channels[l], 1, false});
  }
  for (std::size_t l = 0; l < cfg.levels; ++l)
    specs.push_back({"neck.lat" + std::to_string(l), cfg.neck_channels, cfg.channels[l], 1, false});
  for (std::size_t l = cfg.levels; l-- > 0;)
    for (std::size_t b = 0; b < cfg.decoder_blocks; ++b)
      add_bottleneck(specs, "dec." + std::to_string(l) + ".block" + std::to_string(b), cfg.neck_channels,
                     cfg.bottleneck_ratio);
  specs.push_back({"dec.head", 4, cfg.neck_channels, 1, false});
  return specs;
}

}  // namespace detail

// Fan-in scaled uniform weights (bound sqrt(6/fan_in) ahead of a ReLU,
// sqrt(3/fan_in) otherwise), zero biases.
inline ParamSet init_params(const ArchConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  data::SampleRng rng(splitmix64(seed ^ 0x5eedULL));
  ParamSet ps;
  for (const auto& s : detail::conv_layout(cfg)) {
    const double fan_in = static_cast<double>(s.in * s.k * s.k);
    const double bound = std::sqrt((s.relu_follows ? 6.0 : 3.0) / fan_in);
    Tensor w(Shape{s.out, s.in, s.k, s.k});
    for (auto& v : w.mutable_data()) v = rng.uniform(-bound, bound);
    ps.add(s.name + ".w", std::move(w));
    ps.add(s.name + ".b", Tensor(Shape{s.out}));
  }
  return ps;
}

inline Model make_model(const ArchConfig& cfg, std::uint64_t seed) { return Model{cfg, init_params(cfg, seed)}; }

inline std::size_t param_count(const ArchConfig& cfg) {
  cfg.validate();
  std::size_t n = 0;
  for (const auto& s : detail::conv_layout(cfg)) n += s.out * s.in * s.k * s.k + s.out;
  return n;
}

// ---------------------------------------------------------------------------
// Building blocks

namespace detail {

inline Tensor conv(const Model& m, const std::string& name, const Tensor& x, std::size_t stride, std::size_t pad) {
  return conv2d(x, m.params.at(name + ".w"), m.params.at(name + ".b"), stride, pad);
}

inline Tensor bottleneck(const Model& m, const std::string& prefix, const Tensor& x) {
  auto h = relu(conv(m, prefix + ".c1", x, 1, 0));
  h = relu(conv(m, prefix + ".c2", h, 1, 1));
  h = conv(m, prefix + ".c3", h, 1, 0);
  return relu(x + h);
}

}  // namespace detail

inline Pyramid encode(const Model& m, const Tensor& image) {
  const auto& cfg = m.config;
  if (image.shape() != Shape{cfg.in_channels, cfg.height, cfg.width}) {
    throw ContractError("encode: image shape " + to_string(image.shape()) + ", expected " +
                        to_string(Shape{cfg.in_channels, cfg.height, cfg.width}));
  }
  Pyramid pyr;
  Tensor x = image;
  for (std::size_t l = 0; l < cfg.levels; ++l) {
    const std::string p = "enc." + std::to_string(l);
    x = relu(detail::conv(m, p + ".down", x, 2, 0));
    for (std::size_t b = 0; b < cfg.blocks; ++b) x = detail::bottleneck(m, p + ".block" + std::to_string(b), x);
    pyr.push_back(x);
  }
  return pyr;
}

inline Pyramid neck(const Model& m, const Pyramid& pyr) {
  const std::size_t L = m.config.levels;
  if (pyr.size() != L) throw ContractError("neck: pyramid has " + std::to_string(pyr.size()) + " levels");
  Pyramid out(L);
  for (std::size_t l = L; l-- > 0;) {
    auto lat = detail::conv(m, "neck.lat" + std::to_string(l), pyr[l], 1, 0);
    out[l] = l + 1 == L ? lat : lat + upsample(out[l + 1], 2);
  }
  return out;
}

inline Tensor decode(const Model& m, const Pyramid& pyr) {
  const auto& cfg = m.config;
  const std::size_t L = cfg.levels;
  if (pyr.size() != L) throw ContractError("decode: pyramid has " + std::to_string(pyr.size()) + " levels");
  Tensor d;
  for (std::size_t l = L; l-- > 0;) {
    d = l + 1 == L ? pyr[l] : upsample(d, 2) + pyr[l];
    for (std::size_t b = 0; b < cfg.decoder_blocks; ++b)
      d = detail::bottleneck(m, "dec." + std::to_string(l) + ".block" + std::to_string(b), d);
  }
  return pixel_shuffle(detail::conv(m, "dec.head", d, 1, 0), 2);
}

// ---------------------------------------------------------------------------
// Forward passes

struct ForwardOutput {
  bool dual = false;
  Tensor logits_a;  // SEED branches
  Tensor logits_b;
  Tensor logits;    // fusion / segmentation head
  Pyramid pyramid_a;  // after exchange (SEED) or fusion
  Pyramid pyramid_b;
};

inline ForwardOutput seed_forward(const Model& m, const Tensor& a, const Tensor& b, std::uint64_t iteration,
                                  Phase phase) {
  if (m.config.head != Head::seed) throw UsageError("seed_forward on a " + to_string(m.config.head) + " model");
  if (a.shape() != b.shape()) throw ContractError("seed_forward: input shapes differ");
  auto [pa, pb] = exchange_pyramids(encode(m, a), encode(m, b), m.config.exchange, iteration, phase);
  ForwardOutput out;
  out.dual = true;
  out.logits_a = decode(m, neck(m, pa));
  out.logits_b = decode(m, neck(m, pb));
  out.pyramid_a = std::move(pa);
  out.pyramid_b = std::move(pb);
  return out;
}

inline Pyramid fuse(const Model& m, const Pyramid& a, const Pyramid& b) {
  Pyramid out;
  for (std::size_t l = 0; l < a.size(); ++l) {
    switch (m.config.head) {
      case Head::add: out.push_back(a[l] + b[l]); break;
      case Head::subtract: out.push_back(a[l] - b[l]); break;
      case Head::concat:
        out.push_back(detail::conv(m, "fuse." + std::to_string(l), concat_channels(a[l], b[l]), 1, 0));
        break;
      default: throw UsageError("fuse on a non-fusion model");
    }
  }
  return out;
}

inline ForwardOutput fusion_forward(const Model& m, const Tensor& a, const Tensor& b) {
  if (!is_fusion(m.config.head)) throw UsageError("fusion_forward on a " + to_string(m.config.head) + " model");
  if (a.shape() != b.shape()) throw ContractError("fusion_forward: input shapes differ");
  ForwardOutput out;
  out.pyramid_a = fuse(m, encode(m, a), encode(m, b));
  out.logits = decode(m, neck(m, out.pyramid_a));
  return out;
}

inline Tensor segment(const Model& m, const Tensor& image) { return decode(m, neck(m, encode(m, image))); }

inline ForwardOutput forward(const Model& m, const Tensor& a, const Tensor& b, std::uint64_t iteration, Phase phase) {
  if (m.config.head == Head::seed) return seed_forward(m, a, b, iteration, phase);
  if (is_fusion(m.config.head)) return fusion_forward(m, a, b);
  throw UsageError("bi-temporal forward on a segmentation model; convert it with seg2cd first");
}

// Sum of per-branch mean BCE for SEED, single mean BCE for fusion heads.
inline Tensor loss(const ForwardOutput& out, const Tensor& mask) {
  if (out.dual) return bce_with_logits(out.logits_a, mask) + bce_with_logits(out.logits_b, mask);
  return bce_with_logits(out.logits, mask);
}

// ---------------------------------------------------------------------------
// Inference

enum class InferenceMode { siamese, branch_a, branch_b };

inline std::string to_string(InferenceMode m) {
  switch (m) {
    case InferenceMode::siamese: return "siamese";
    case InferenceMode::branch_a: return "branch_a";
    case InferenceMode::branch_b: return "branch_b";
  }
  return "?";
}

inline InferenceMode parse_mode(const std::string& s) {
  if (s == "siamese" || s == "fused") return InferenceMode::siamese;
  if (s == "branch_a") return InferenceMode::branch_a;
  if (s == "branch_b") return InferenceMode::branch_b;
  throw ConfigError("unknown inference mode: " + s);
}

// Change probability map. SEED siamese: sigmoid((Z_A + Z_B) / 2).
inline std::vector<double> probabilities(const ForwardOutput& out, InferenceMode mode) {
  std::vector<double> p;
  if (!out.dual) {
    if (mode != InferenceMode::siamese) throw UsageError("branch inference requires a SEED (dual-branch) model");
    for (double z : out.logits.data()) p.push_back(sigmoid_scalar(z));
    return p;
  }
  const auto& za = out.logits_a.values();
  const auto& zb = out.logits_b.values();
  p.resize(za.size());
  for (std::size_t i = 0; i < za.size(); ++i) {
    const double z = mode == InferenceMode::siamese ? 0.5 * (za[i] + zb[i])
                     : mode == InferenceMode::branch_a ? za[i]
                                                       : zb[i];
    p[i] = sigmoid_scalar(z);
  }
  return p;
}

// Binary change mask; a pixel is "change" when its probability is >= threshold.
inline std::vector<std::uint8_t> infer(const ForwardOutput& out, InferenceMode mode, double threshold = 0.5) {
  auto p = probabilities(out, mode);
  std::vector<std::uint8_t> mask(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) mask[i] = p[i] >= threshold ? 1 : 0;
  return mask;
}

// Evaluation-time forward that only runs what `mode` needs: a branch mode on a
// SEED model skips the other branch's neck and decoder entirely.
inline ForwardOutput predict(const Model& m, const Tensor& a, const Tensor& b, InferenceMode mode) {
  if (m.config.head != Head::seed) {
    if (mode != InferenceMode::siamese) throw UsageError("branch inference requires a SEED (dual-branch) model");
    return forward(m, a, b, 0, Phase::eval);
  }
  if (mode == InferenceMode::siamese) return seed_forward(m, a, b, 0, Phase::eval);
  auto [pa, pb] = exchange_pyramids(encode(m, a), encode(m, b), m.config.exchange, 0, Phase::eval);
  ForwardOutput out;
  out.dual = true;
  const auto logits = decode(m, neck(m, mode == InferenceMode::branch_a ? pa : pb));
  out.logits_a = logits;
  out.logits_b = logits;
  out.pyramid_a = std::move(pa);
  out.pyramid_b = std::move(pb);
  return out;
}

// ---------------------------------------------------------------------------
// Static accounting

struct Account {
  std::size_t param_count = 0;
  std::uint64_t encoder_macs = 0;   // both temporal inputs
  std::uint64_t exchange_macs = 0;  // always zero
  std::uint64_t fusion_macs = 0;
  std::uint64_t neck_macs = 0;
  std::uint64_t decoder_macs = 0;
  std::uint64_t forward_macs = 0;
};

namespace detail {

inline std::uint64_t conv_macs(std::size_t out, std::size_t in, std::size_t k, std::size_t h, std::size_t w) {
  return static_cast<std::uint64_t>(out) * in * k * k * h * w;
}

inline std::uint64_t bottleneck_macs(std::size_t width, std::size_t ratio, std::size_t h, std::size_t w) {
  const std::size_t mid = width / ratio;
  return conv_macs(mid, width, 1, h, w) + conv_macs(mid, mid, 3, h, w) + conv_macs(width, mid, 1, h, w);
}

inline std::uint64_t encoder_macs_one(const ArchConfig& c) {
  std::uint64_t n = 0;
  for (std::size_t l = 0; l < c.levels; ++l) {
    const std::size_t h = c.level_height(l), w = c.level_width(l);
    n += conv_macs(c.channels[l], l == 0 ? c.in_channels : c.channels[l - 1], 2, h, w);
    n += c.blocks * bottleneck_macs(c.channels[l], c.bottleneck_ratio, h, w);
  }
  return n;
}

inline std::uint64_t neck_macs_one(const ArchConfig& c) {
  std::uint64_t n = 0;
  for (std::size_t l = 0; l < c.levels; ++l)
    n += conv_macs(c.neck_channels, c.channels[l], 1, c.level_height(l), c.level_width(l));
  return n;
}

inline std::uint64_t decoder_macs_one(const ArchConfig& c) {
  std::uint64_t n = 0;
  for (std::size_t l = 0; l < c.levels; ++l)
    n += c.decoder_blocks * bottleneck_macs(c.neck_channels, c.bottleneck_ratio, c.level_height(l), c.level_width(l));
  return n + conv_macs(4, c.neck_channels, 1, c.level_height(0), c.level_width(0));
}

}  // namespace detail

// Parameter count and forward MACs for one input pair, computed from the
// config alone. Branch modes count a single neck + decoder pass.
inline Account account(const ArchConfig& cfg, InferenceMode mode = InferenceMode::siamese) {
  cfg.validate();
  Account a;
  a.param_count = param_count(cfg);
  const auto enc = detail::encoder_macs_one(cfg);
  const auto nk = detail::neck_macs_one(cfg);
  const auto dec = detail::decoder_macs_one(cfg);
  switch (cfg.head) {
    case Head::segmentation:
      a.encoder_macs = enc;
      a.neck_macs = nk;
      a.decoder_macs = dec;
      break;
    case Head::seed: {
      const std::uint64_t passes = mode == InferenceMode::siamese ? 2 : 1;
      a.encoder_macs = 2 * enc;
      a.neck_macs = passes * nk;
      a.decoder_macs = passes * dec;
      break;
    }
    default:
      if (mode != InferenceMode::siamese) throw UsageError("branch inference requires a SEED (dual-branch) model");
      a.encoder_macs = 2 * enc;
      a.neck_macs = nk;
      a.decoder_macs = dec;
      if (cfg.head == Head::concat) {
        for (std::size_t l = 0; l < cfg.levels; ++l)
          a.fusion_macs += detail::conv_macs(cfg.channels[l], 2 * cfg.channels[l], 1, cfg.level_height(l),
                                             cfg.level_width(l));
      }
  }
  a.forward_macs = a.encoder_macs + a.exchange_macs + a.fusion_macs + a.neck_macs + a.decoder_macs;
  return a;
}

// Siamese conversion of a single-input segmentation body: the same blocks,
// shared between times, with a deterministic layer exchange in between.
inline ArchConfig seg2cd(const ArchConfig& seg, ExchangeSpec exchange = {}) {
  if (seg.head != Head::segmentation) throw ContractError("seg2cd expects a segmentation architecture");
  exchange.axis = ExchangeAxis::layer;
  ArchConfig cd = seg;
  cd.head = Head::seed;
  cd.exchange = exchange;
  cd.validate();
  return cd;
}

}  // namespace seed::model
