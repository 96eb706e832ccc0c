#pragma once

// Synthetic bi-temporal change-detection pairs.
//
// Both times share one smooth background. Time A carries a set of
// non-overlapping rectangles and disks; in time B each of them independently
// persists or disappears, and a few new ones may appear. Persisting shapes are
// painted with identical colours in both images, so the change mask is exactly
// the symmetric difference of the two occupancy sets.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seed/bt_io.hpp"
#include "seed/exchange.hpp"
#include "seed/tensor.hpp"

namespace seed::data {

enum class Split { train, val, test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

struct DatasetConfig {
  std::size_t n_train = 512;
  std::size_t n_val = 128;
  std::size_t n_test = 128;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t min_shapes = 2;
  std::size_t max_shapes = 5;
  std::size_t max_new_shapes = 2;
  double change_prob = 0.35;  // chance that a shape in A is gone in B
  double noise_level = 0.02;  // per-pixel Gaussian std, independent per image
  std::uint64_t seed = 7;

  void validate() const {
    if (n_train == 0 || n_val == 0 || n_test == 0) throw ConfigError("dataset: split sizes must be positive");
    if (height < 8 || width < 8) throw ConfigError("dataset: images must be at least 8x8");
    if (min_shapes > max_shapes) throw ConfigError("dataset: min_shapes > max_shapes");
    if (!(change_prob >= 0.0 && change_prob <= 1.0)) throw ConfigError("dataset: change_prob outside [0,1]");
    if (!(noise_level >= 0.0)) throw ConfigError("dataset: noise_level must be >= 0");
  }

  std::size_t split_size(Split s) const {
    return s == Split::train ? n_train : s == Split::val ? n_val : n_test;
  }
};

enum class ShapeKind { rect, disk };

struct ShapeRecord {
  ShapeKind kind = ShapeKind::rect;
  double cy = 0, cx = 0;          // disk centre (pixel units, pixel centres at +0.5)
  double radius = 0;
  int top = 0, left = 0, h = 0, w = 0;  // rectangle
  std::array<double, 3> color{};
  bool in_a = false;
  bool in_b = false;

  bool covers(std::size_t r, std::size_t c) const {
    if (kind == ShapeKind::rect) {
      const auto ri = static_cast<int>(r), ci = static_cast<int>(c);
      return ri >= top && ri < top + h && ci >= left && ci < left + w;
    }
    const double dy = static_cast<double>(r) + 0.5 - cy;
    const double dx = static_cast<double>(c) + 0.5 - cx;
    return dy * dy + dx * dx <= radius * radius;
  }
};

struct SampleMeta {
  std::uint64_t seed = 0;
  std::string split;
  std::uint64_t index = 0;
  std::size_t shift_px = 0;
  std::vector<std::string> augmentations;
  std::vector<ShapeRecord> shapes;
};

struct BitemporalSample {
  Tensor image_a;  // [3,H,W] in [0,1]
  Tensor image_b;
  Tensor mask;     // [1,H,W] in {0,1}
  SampleMeta meta;

  std::vector<std::uint8_t> mask_bits() const {
    std::vector<std::uint8_t> bits(mask.numel());
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = mask[i] != 0.0;
    return bits;
  }
};

// 64-bit generator with portable uniform/normal helpers.
class SampleRng {
 public:
  explicit SampleRng(std::uint64_t key) : engine_(key) {}
  std::uint64_t bits() { return engine_(); }
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

inline std::uint64_t sample_key(std::uint64_t seed, Split split, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64((static_cast<std::uint64_t>(split) + 1) * 0x10000000000ULL + index));
}

// Occupancy of the shapes present at time A (`time_b` false) or B.
inline std::vector<std::uint8_t> occupancy(const std::vector<ShapeRecord>& shapes, std::size_t H, std::size_t W,
                                           bool time_b) {
  std::vector<std::uint8_t> occ(H * W, 0);
  for (const auto& s : shapes) {
    if (!(time_b ? s.in_b : s.in_a)) continue;
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t c = 0; c < W; ++c)
        if (s.covers(r, c)) occ[r * W + c] = 1;
  }
  return occ;
}

inline Tensor smooth_background(SampleRng& rng, std::size_t H, std::size_t W) {
  constexpr std::size_t G = 4;
  Tensor bg(Shape{3, H, W});
  auto out = bg.mutable_data();
  for (std::size_t ch = 0; ch < 3; ++ch) {
    std::array<double, (G + 1) * (G + 1)> grid{};
    for (auto& g : grid) g = rng.uniform(0.1, 0.5);
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t c = 0; c < W; ++c) {
        const double gy = static_cast<double>(r) / static_cast<double>(H - 1) * G;
        const double gx = static_cast<double>(c) / static_cast<double>(W - 1) * G;
        const auto y0 = std::min<std::size_t>(static_cast<std::size_t>(gy), G - 1);
        const auto x0 = std::min<std::size_t>(static_cast<std::size_t>(gx), G - 1);
        const double fy = gy - static_cast<double>(y0), fx = gx - static_cast<double>(x0);
        const double v = grid[y0 * (G + 1) + x0] * (1 - fy) * (1 - fx) + grid[y0 * (G + 1) + x0 + 1] * (1 - fy) * fx +
                         grid[(y0 + 1) * (G + 1) + x0] * fy * (1 - fx) +
                         grid[(y0 + 1) * (G + 1) + x0 + 1] * fy * fx;
        out[(ch * H + r) * W + c] = v;
      }
  }
  return bg;
}

// Paints the shapes present at one time over `background`, adds pixel noise.
inline Tensor render(const Tensor& background, const std::vector<ShapeRecord>& shapes, bool time_b, double noise,
                     SampleRng& rng) {
  const std::size_t H = background.dim(1), W = background.dim(2);
  std::vector<double> img(background.values());
  for (const auto& s : shapes) {
    if (!(time_b ? s.in_b : s.in_a)) continue;
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t c = 0; c < W; ++c)
        if (s.covers(r, c))
          for (std::size_t ch = 0; ch < 3; ++ch) img[(ch * H + r) * W + c] = s.color[ch];
  }
  if (noise > 0.0) {
    for (auto& v : img) v = std::clamp(v + noise * rng.normal(), 0.0, 1.0);
  }
  return Tensor(Shape{3, H, W}, std::move(img));
}

inline Tensor mask_from_shapes(const std::vector<ShapeRecord>& shapes, std::size_t H, std::size_t W) {
  const auto a = occupancy(shapes, H, W, false);
  const auto b = occupancy(shapes, H, W, true);
  std::vector<double> m(H * W);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = a[i] != b[i] ? 1.0 : 0.0;
  return Tensor(Shape{1, H, W}, std::move(m));
}

namespace detail {

inline ShapeRecord random_shape(SampleRng& rng, std::size_t H, std::size_t W) {
  ShapeRecord s;
  if (rng.uniform() < 0.5) {
    s.kind = ShapeKind::rect;
    s.h = 4 + static_cast<int>(rng.index(6));
    s.w = 4 + static_cast<int>(rng.index(6));
    s.top = static_cast<int>(rng.index(H - static_cast<std::size_t>(s.h) + 1));
    s.left = static_cast<int>(rng.index(W - static_cast<std::size_t>(s.w) + 1));
  } else {
    s.kind = ShapeKind::disk;
    s.radius = rng.uniform(2.5, 5.0);
    s.cy = rng.uniform(s.radius, static_cast<double>(H) - s.radius);
    s.cx = rng.uniform(s.radius, static_cast<double>(W) - s.radius);
  }
  // One or two dominant channels, the rest dark.
  const std::size_t hot = rng.index(3);
  for (std::size_t ch = 0; ch < 3; ++ch) s.color[ch] = rng.uniform(0.0, 0.3);
  s.color[hot] = rng.uniform(0.7, 1.0);
  if (rng.uniform() < 0.5) s.color[(hot + 1) % 3] = rng.uniform(0.6, 1.0);
  return s;
}

// True when `s` keeps a one-pixel gap to everything in `taken`.
inline bool fits(const ShapeRecord& s, const std::vector<std::uint8_t>& taken, std::size_t H, std::size_t W) {
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t c = 0; c < W; ++c) {
      if (!s.covers(r, c)) continue;
      for (std::size_t rr = r ? r - 1 : 0; rr <= std::min(r + 1, H - 1); ++rr)
        for (std::size_t cc = c ? c - 1 : 0; cc <= std::min(c + 1, W - 1); ++cc)
          if (taken[rr * W + cc]) return false;
    }
  return true;
}

inline bool place(SampleRng& rng, std::vector<std::uint8_t>& taken, std::size_t H, std::size_t W,
                  ShapeRecord& out) {
  for (int attempt = 0; attempt < 50; ++attempt) {
    auto s = random_shape(rng, H, W);
    if (!fits(s, taken, H, W)) continue;
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t c = 0; c < W; ++c)
        if (s.covers(r, c)) taken[r * W + c] = 1;
    out = s;
    return true;
  }
  return false;
}

}  // namespace detail

inline BitemporalSample generate_pair(const DatasetConfig& cfg, Split split, std::uint64_t index) {
  cfg.validate();
  if (index >= cfg.split_size(split)) {
    throw ContractError("generate_pair: index " + std::to_string(index) + " outside split " + to_string(split));
  }
  const std::size_t H = cfg.height, W = cfg.width;
  SampleRng rng(sample_key(cfg.seed, split, index));
  const Tensor background = smooth_background(rng, H, W);

  std::vector<ShapeRecord> shapes;
  std::vector<std::uint8_t> taken(H * W, 0);
  const std::size_t n_shapes = cfg.min_shapes + rng.index(cfg.max_shapes - cfg.min_shapes + 1);
  for (std::size_t i = 0; i < n_shapes; ++i) {
    ShapeRecord s;
    if (!detail::place(rng, taken, H, W, s)) break;
    s.in_a = true;
    s.in_b = rng.uniform() >= cfg.change_prob;
    shapes.push_back(s);
  }
  const std::size_t n_new = rng.index(cfg.max_new_shapes + 1);
  for (std::size_t i = 0; i < n_new; ++i) {
    ShapeRecord s;
    if (!detail::place(rng, taken, H, W, s)) break;
    s.in_a = false;
    s.in_b = true;
    shapes.push_back(s);
  }

  BitemporalSample out;
  out.image_a = render(background, shapes, false, cfg.noise_level, rng);
  out.image_b = render(background, shapes, true, cfg.noise_level, rng);
  out.mask = mask_from_shapes(shapes, H, W);
  out.meta.seed = cfg.seed;
  out.meta.split = to_string(split);
  out.meta.index = index;
  out.meta.shapes = std::move(shapes);
  return out;
}

inline std::vector<BitemporalSample> generate_split(const DatasetConfig& cfg, Split split) {
  std::vector<BitemporalSample> out;
  out.reserve(cfg.split_size(split));
  for (std::size_t i = 0; i < cfg.split_size(split); ++i) out.push_back(generate_pair(cfg, split, i));
  return out;
}

// ---------------------------------------------------------------------------
// Transforms

// Rigid shift of image B to the right by n pixels, replicating the left edge.
// The mask stays in A's frame.
inline BitemporalSample shift_second(const BitemporalSample& s, std::size_t n_px) {
  const std::size_t C = s.image_b.dim(0), H = s.image_b.dim(1), W = s.image_b.dim(2);
  if (n_px >= W) throw ConfigError("shift_second: shift " + std::to_string(n_px) + " must be below width " + std::to_string(W));
  BitemporalSample out = s;
  std::vector<double> b(C * H * W);
  const auto& src = s.image_b.values();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t j = 0; j < W; ++j) b[(c * H + r) * W + j] = src[(c * H + r) * W + (j >= n_px ? j - n_px : 0)];
  out.image_b = Tensor(s.image_b.shape(), std::move(b));
  out.meta.shift_px = s.meta.shift_px + n_px;
  return out;
}

inline Tensor hflip(const Tensor& x) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  std::vector<double> out(x.numel());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t j = 0; j < W; ++j) out[(c * H + r) * W + j] = x.at(c, r, W - 1 - j);
  return Tensor(x.shape(), std::move(out));
}

// Quarter turn: input pixel (r, c) lands at (c, H-1-r).
inline Tensor rot90(const Tensor& x) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  std::vector<double> out(x.numel());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t j = 0; j < W; ++j) out[(c * W + j) * H + (H - 1 - r)] = x.at(c, r, j);
  return Tensor(Shape{C, W, H}, std::move(out));
}

inline Tensor photometric(const Tensor& x, double contrast, double brightness) {
  std::vector<double> out(x.values());
  for (auto& v : out) v = std::clamp((v - 0.5) * contrast + 0.5 + brightness, 0.0, 1.0);
  return Tensor(x.shape(), std::move(out));
}

struct AugmentOptions {
  bool rotate = true;
  bool flip = true;
  bool photometric = true;
  double contrast_jitter = 0.1;
  double brightness_jitter = 0.05;
};

// Shared random geometry for A, B and mask; independent photometric jitter
// per image; the mask never sees photometric changes.
inline BitemporalSample augment(const BitemporalSample& s, SampleRng& rng, const AugmentOptions& opt = {}) {
  BitemporalSample out = s;
  const std::size_t turns = opt.rotate ? rng.index(4) : 0;
  const bool flip = opt.flip && rng.uniform() < 0.5;
  for (std::size_t k = 0; k < turns; ++k) {
    out.image_a = rot90(out.image_a);
    out.image_b = rot90(out.image_b);
    out.mask = rot90(out.mask);
  }
  if (turns) out.meta.augmentations.push_back("rot90x" + std::to_string(turns));
  if (flip) {
    out.image_a = hflip(out.image_a);
    out.image_b = hflip(out.image_b);
    out.mask = hflip(out.mask);
    out.meta.augmentations.push_back("hflip");
  }
  if (opt.photometric) {
    auto jitter = [&](const Tensor& img) {
      const double c = 1.0 + rng.uniform(-opt.contrast_jitter, opt.contrast_jitter);
      const double b = rng.uniform(-opt.brightness_jitter, opt.brightness_jitter);
      return photometric(img, c, b);
    };
    out.image_a = jitter(out.image_a);
    out.image_b = jitter(out.image_b);
    out.meta.augmentations.push_back("photometric");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence: <dir>/<idx:05>_{a,b,mask}.bt + <idx:05>.json

inline nlohmann::json to_json(const SampleMeta& m) {
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& s : m.shapes) {
    nlohmann::json j{{"kind", s.kind == ShapeKind::rect ? "rect" : "disk"},
                     {"color", s.color},
                     {"in_a", s.in_a},
                     {"in_b", s.in_b}};
    if (s.kind == ShapeKind::rect) {
      j["top"] = s.top;
      j["left"] = s.left;
      j["h"] = s.h;
      j["w"] = s.w;
    } else {
      j["cy"] = s.cy;
      j["cx"] = s.cx;
      j["radius"] = s.radius;
    }
    shapes.push_back(std::move(j));
  }
  return {{"seed", m.seed},         {"split", m.split},   {"index", m.index},
          {"shift_px", m.shift_px}, {"augmentations", m.augmentations}, {"shapes", shapes}};
}

inline SampleMeta meta_from_json(const nlohmann::json& j) {
  SampleMeta m;
  m.seed = j.value("seed", std::uint64_t{0});
  m.split = j.value("split", std::string{});
  m.index = j.value("index", std::uint64_t{0});
  m.shift_px = j.value("shift_px", std::size_t{0});
  m.augmentations = j.value("augmentations", std::vector<std::string>{});
  for (const auto& js : j.value("shapes", nlohmann::json::array())) {
    ShapeRecord s;
    s.kind = js.at("kind") == "rect" ? ShapeKind::rect : ShapeKind::disk;
    s.color = js.at("color").get<std::array<double, 3>>();
    s.in_a = js.at("in_a");
    s.in_b = js.at("in_b");
    if (s.kind == ShapeKind::rect) {
      s.top = js.at("top");
      s.left = js.at("left");
      s.h = js.at("h");
      s.w = js.at("w");
    } else {
      s.cy = js.at("cy");
      s.cx = js.at("cx");
      s.radius = js.at("radius");
    }
    m.shapes.push_back(s);
  }
  return m;
}

inline std::string sample_stem(std::size_t idx) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05zu", idx);
  return buf;
}

inline void save_split(const std::filesystem::path& dir, const std::vector<BitemporalSample>& samples) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto stem = sample_stem(i);
    bt::write(dir / (stem + "_a.bt"), samples[i].image_a);
    bt::write(dir / (stem + "_b.bt"), samples[i].image_b);
    bt::write(dir / (stem + "_mask.bt"), samples[i].mask);
    std::ofstream f(dir / (stem + ".json"), std::ios::trunc);
    if (!f) throw FormatError("cannot write " + (dir / (stem + ".json")).string());
    f << to_json(samples[i].meta).dump(2) << '\n';
  }
}

// Loads consecutive samples 00000, 00001, ... until one is missing. The JSON
// sidecar is optional so externally produced pairs can be dropped in.
inline std::vector<BitemporalSample> load_split(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw FormatError("split directory not found: " + dir.string());
  std::vector<BitemporalSample> out;
  for (std::size_t i = 0;; ++i) {
    const auto stem = sample_stem(i);
    const auto pa = dir / (stem + "_a.bt");
    if (!std::filesystem::exists(pa)) break;
    BitemporalSample s;
    s.image_a = bt::read(pa);
    s.image_b = bt::read(dir / (stem + "_b.bt"));
    s.mask = bt::read(dir / (stem + "_mask.bt"));
    if (s.image_a.rank() != 3 || s.image_a.shape() != s.image_b.shape() || s.mask.rank() != 3 ||
        s.mask.dim(0) != 1 || s.mask.dim(1) != s.image_a.dim(1) || s.mask.dim(2) != s.image_a.dim(2)) {
      throw FormatError("inconsistent sample shapes in " + (dir / stem).string());
    }
    const auto pj = dir / (stem + ".json");
    if (std::filesystem::exists(pj)) {
      std::ifstream f(pj);
      try {
        s.meta = meta_from_json(nlohmann::json::parse(f));
      } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad sidecar " + pj.string() + ": " + e.what());
      }
    } else {
      s.meta.index = i;
    }
    out.push_back(std::move(s));
  }
  return out;
}

struct Dataset {
  std::vector<BitemporalSample> train, val, test;

  const std::vector<BitemporalSample>& split(Split s) const {
    return s == Split::train ? train : s == Split::val ? val : test;
  }
};

inline Dataset generate_dataset(const DatasetConfig& cfg) {
  return {generate_split(cfg, Split::train), generate_split(cfg, Split::val), generate_split(cfg, Split::test)};
}

inline void save_dataset(const std::filesystem::path& root, const Dataset& d) {
  save_split(root / "train", d.train);
  save_split(root / "val", d.val);
  save_split(root / "test", d.test);
}

inline Dataset load_dataset(const std::filesystem::path& root) {
  return {load_split(root / "train"), load_split(root / "val"), load_split(root / "test")};
}

inline Dataset shift_dataset(const Dataset& d, std::size_t n_px) {
  Dataset out;
  for (const auto& s : d.train) out.train.push_back(shift_second(s, n_px));
  for (const auto& s : d.val) out.val.push_back(shift_second(s, n_px));
  for (const auto& s : d.test) out.test.push_back(shift_second(s, n_px));
  return out;
}

}  // namespace seed::data
