#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "seed/errors.hpp"

namespace seed {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + tn + fp + fn; }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

inline ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
  if (pred.size() != gt.size()) {
    throw ContractError("confusion: " + std::to_string(pred.size()) + " predictions vs " +
                        std::to_string(gt.size()) + " labels");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] > 1 || gt[i] > 1) throw ContractError("confusion: masks must be binary");
    if (pred[i]) {
      gt[i] ? ++c.tp : ++c.fp;
    } else {
      gt[i] ? ++c.fn : ++c.tn;
    }
  }
  return c;
}

struct MetricsReport {
  double oa = 0.0;
  double iou = 0.0;
  double f1 = 0.0;
  double prec = 0.0;
  double rec = 0.0;
};

// With no positives anywhere (tp = fp = fn = 0) every ratio is vacuously 1;
// otherwise a zero denominator yields 0.
inline MetricsReport metrics(const ConfusionCounts& c) {
  const auto ratio = [&](double num, double den) {
    if (c.tp == 0 && c.fp == 0 && c.fn == 0) return 1.0;
    return den == 0.0 ? 0.0 : num / den;
  };
  const double tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn);
  const double fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
  MetricsReport m;
  m.iou = ratio(tp, tp + fn + fp);
  m.prec = ratio(tp, tp + fp);
  m.rec = ratio(tp, tp + fn);
  m.f1 = ratio(2.0 * m.prec * m.rec, m.prec + m.rec);
  m.oa = c.total() == 0 ? 1.0 : (tp + tn) / (tp + tn + fn + fp);
  return m;
}

struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // RGB interleaved

  std::array<std::uint8_t, 3> at(std::size_t r, std::size_t c) const {
    const auto* p = pixels.data() + 3 * (r * width + c);
    return {p[0], p[1], p[2]};
  }
};

namespace palette {
inline constexpr std::array<std::uint8_t, 3> tp{255, 255, 255};
inline constexpr std::array<std::uint8_t, 3> tn{0, 0, 0};
inline constexpr std::array<std::uint8_t, 3> fp{0, 255, 0};
inline constexpr std::array<std::uint8_t, 3> fn{255, 0, 0};
}  // namespace palette

// TP white, TN black, FP green, FN red.
inline RgbImage error_map(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt, std::size_t height,
                          std::size_t width) {
  if (pred.size() != gt.size() || pred.size() != height * width) {
    throw ContractError("error_map: mask sizes do not match " + std::to_string(height) + "x" +
                        std::to_string(width));
  }
  RgbImage img{height, width, std::vector<std::uint8_t>(3 * height * width)};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto& col = pred[i] ? (gt[i] ? palette::tp : palette::fp) : (gt[i] ? palette::fn : palette::tn);
    std::copy(col.begin(), col.end(), img.pixels.begin() + static_cast<std::ptrdiff_t>(3 * i));
  }
  return img;
}

inline std::string encode_ppm(const RgbImage& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(img.pixels.begin(), img.pixels.end());
  return out;
}

inline void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open " + path.string() + " for writing");
  const auto bytes = encode_ppm(img);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace seed
