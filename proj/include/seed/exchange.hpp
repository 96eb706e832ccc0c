#pragma once

// Parameter-free bi-temporal feature exchange.
//
// A binary mask eps over m positions (pyramid levels, channels, columns or
// rows) selects which positions trade places between the two branches. The
// same mask defines the 2m x 2m block permutation
//
//     P = [[E, D],
//          [D, E]],   D = diag(eps), E = I - D
//
// acting on the stacked pair z = [x; y].

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "seed/tensor.hpp"

namespace seed {

using Pyramid = std::vector<Tensor>;

enum class ExchangeAxis { layer, channel, spatial_col, spatial_row };
enum class ExchangePolicy { deterministic, bernoulli };
enum class Phase { train, eval };

inline std::string to_string(ExchangeAxis a) {
  switch (a) {
    case ExchangeAxis::layer: return "layer";
    case ExchangeAxis::channel: return "channel";
    case ExchangeAxis::spatial_col: return "spatial_col";
    case ExchangeAxis::spatial_row: return "spatial_row";
  }
  return "?";
}

inline ExchangeAxis parse_axis(const std::string& s) {
  if (s == "layer") return ExchangeAxis::layer;
  if (s == "channel") return ExchangeAxis::channel;
  if (s == "spatial_col" || s == "spatial") return ExchangeAxis::spatial_col;
  if (s == "spatial_row") return ExchangeAxis::spatial_row;
  throw ConfigError("unknown exchange axis: " + s);
}

inline std::string to_string(ExchangePolicy p) {
  return p == ExchangePolicy::deterministic ? "deterministic" : "bernoulli";
}

inline ExchangePolicy parse_policy(const std::string& s) {
  if (s == "deterministic") return ExchangePolicy::deterministic;
  if (s == "bernoulli") return ExchangePolicy::bernoulli;
  throw ConfigError("unknown exchange policy: " + s);
}

struct ExchangeSpec {
  ExchangeAxis axis = ExchangeAxis::layer;
  ExchangePolicy policy = ExchangePolicy::deterministic;
  std::uint32_t step = 2;
  std::uint32_t offset = 0;
  double p = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    if (step < 1) throw ConfigError("exchange: step must be >= 1");
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("exchange: p must lie in [0, 1]");
  }

  friend bool operator==(const ExchangeSpec&, const ExchangeSpec&) = default;
};

struct ExchangeMask {
  std::vector<std::uint8_t> epsilon;
  ExchangeAxis axis = ExchangeAxis::layer;
  std::size_t level = 0;

  std::size_t size() const { return epsilon.size(); }
  std::size_t swapped() const {
    std::size_t n = 0;
    for (auto e : epsilon) n += e != 0;
    return n;
  }
};

// ---------------------------------------------------------------------------
// Counter-based randomness: every draw is a pure function of its coordinates.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t iteration, std::uint64_t level,
                                  std::uint64_t index) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ iteration);
  h = splitmix64(h ^ (level * 0x632be59bd9b4e019ULL));
  return splitmix64(h ^ (index * 0xd1b54a32d192ed03ULL));
}

inline double counter_uniform(std::uint64_t seed, std::uint64_t iteration, std::uint64_t level,
                              std::uint64_t index) {
  return static_cast<double>(counter_hash(seed, iteration, level, index) >> 11) * 0x1.0p-53;
}

// Deterministic policy: eps_i = 1 iff (i - offset) mod step == 0 (i >= offset).
// Bernoulli policy: i.i.d. draws keyed by (seed, iteration, level), training only.
inline ExchangeMask sample_mask(const ExchangeSpec& spec, std::size_t m, std::uint64_t iteration,
                                std::size_t level, Phase phase = Phase::train) {
  spec.validate();
  if (m < 1) throw ContractError("sample_mask: mask length must be >= 1");
  ExchangeMask mask{std::vector<std::uint8_t>(m, 0), spec.axis, level};
  if (spec.policy == ExchangePolicy::bernoulli && phase == Phase::train) {
    for (std::size_t i = 0; i < m; ++i) {
      mask.epsilon[i] = counter_uniform(spec.seed, iteration, level, i) < spec.p ? 1 : 0;
    }
  } else {
    for (std::size_t i = spec.offset; i < m; i += spec.step) mask.epsilon[i] = 1;
  }
  return mask;
}

// ---------------------------------------------------------------------------
// Elementwise exchange

inline std::pair<Pyramid, Pyramid> layer_exchange(const Pyramid& a, const Pyramid& b, const ExchangeMask& mask) {
  if (a.size() != b.size()) {
    throw ContractError("layer_exchange: pyramid lengths " + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()));
  }
  if (mask.size() != a.size()) {
    throw ContractError("layer_exchange: mask length " + std::to_string(mask.size()) + " for " +
                        std::to_string(a.size()) + " levels");
  }
  Pyramid out_a = a;
  Pyramid out_b = b;
  for (std::size_t l = 0; l < a.size(); ++l) {
    if (a[l].shape() != b[l].shape()) {
      throw ContractError("layer_exchange: level " + std::to_string(l) + " shapes " + to_string(a[l].shape()) +
                          " vs " + to_string(b[l].shape()));
    }
    if (mask.epsilon[l]) std::swap(out_a[l], out_b[l]);
  }
  return {std::move(out_a), std::move(out_b)};
}

namespace detail {

inline std::vector<std::uint8_t> broadcast_mask(const Shape& s, const ExchangeMask& mask) {
  const std::size_t C = s[0], H = s[1], W = s[2];
  std::vector<std::uint8_t> full(C * H * W);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w) {
        std::uint8_t e = 0;
        switch (mask.axis) {
          case ExchangeAxis::channel: e = mask.epsilon[c]; break;
          case ExchangeAxis::spatial_col: e = mask.epsilon[w]; break;
          case ExchangeAxis::spatial_row: e = mask.epsilon[h]; break;
          case ExchangeAxis::layer: e = mask.epsilon[0]; break;
        }
        full[(c * H + h) * W + w] = e;
      }
  return full;
}

inline std::pair<Tensor, Tensor> masked_exchange(const Tensor& a, const Tensor& b, const ExchangeMask& mask,
                                                 std::size_t expected, const char* op) {
  if (a.rank() != 3 || a.shape() != b.shape()) {
    throw ContractError(std::string(op) + ": shapes " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  if (mask.size() != expected) {
    throw ContractError(std::string(op) + ": mask length " + std::to_string(mask.size()) + ", expected " +
                        std::to_string(expected));
  }
  const auto full = broadcast_mask(a.shape(), mask);
  // a' = m*b + (1-m)*a,  b' = m*a + (1-m)*b
  return {masked_select(a, b, full), masked_select(b, a, full)};
}

}  // namespace detail

inline std::pair<Tensor, Tensor> channel_exchange(const Tensor& a, const Tensor& b, ExchangeMask mask) {
  mask.axis = ExchangeAxis::channel;
  return detail::masked_exchange(a, b, mask, a.rank() == 3 ? a.dim(0) : 0, "channel_exchange");
}

// Column mode (default) or row mode, selected by `axis`.
inline std::pair<Tensor, Tensor> spatial_exchange(const Tensor& a, const Tensor& b, ExchangeMask mask,
                                                  ExchangeAxis axis = ExchangeAxis::spatial_col) {
  if (axis != ExchangeAxis::spatial_col && axis != ExchangeAxis::spatial_row) {
    throw ContractError("spatial_exchange: axis must be spatial_col or spatial_row");
  }
  mask.axis = axis;
  const std::size_t expected = a.rank() != 3 ? 0 : axis == ExchangeAxis::spatial_col ? a.dim(2) : a.dim(1);
  return detail::masked_exchange(a, b, mask, expected, "spatial_exchange");
}

// Applies the spec's exchange to a pair of pyramids: one level-indexed mask for
// the layer axis, an independent mask per level otherwise.
inline std::pair<Pyramid, Pyramid> exchange_pyramids(const Pyramid& a, const Pyramid& b, const ExchangeSpec& spec,
                                                     std::uint64_t iteration, Phase phase) {
  if (a.size() != b.size()) throw ContractError("exchange_pyramids: pyramid length mismatch");
  if (spec.axis == ExchangeAxis::layer) {
    return layer_exchange(a, b, sample_mask(spec, a.size(), iteration, 0, phase));
  }
  Pyramid out_a, out_b;
  for (std::size_t l = 0; l < a.size(); ++l) {
    const auto& s = a[l].shape();
    const std::size_t m = spec.axis == ExchangeAxis::channel       ? s[0]
                          : spec.axis == ExchangeAxis::spatial_col ? s[2]
                                                                   : s[1];
    auto mask = sample_mask(spec, m, iteration, l, phase);
    auto [xa, xb] = spec.axis == ExchangeAxis::channel ? channel_exchange(a[l], b[l], mask)
                                                       : spatial_exchange(a[l], b[l], mask, spec.axis);
    out_a.push_back(std::move(xa));
    out_b.push_back(std::move(xb));
  }
  return {std::move(out_a), std::move(out_b)};
}

// ---------------------------------------------------------------------------
// Matrix form

struct PermutationOperator {
  std::size_t m = 0;
  std::vector<int> d;  // m x m
  std::vector<int> e;  // m x m
  std::vector<int> p;  // 2m x 2m, row-major

  int at(std::size_t r, std::size_t c) const { return p[r * 2 * m + c]; }
};

inline PermutationOperator build_permutation(const ExchangeMask& mask) {
  const std::size_t m = mask.size();
  PermutationOperator op{m, std::vector<int>(m * m, 0), std::vector<int>(m * m, 0),
                         std::vector<int>(4 * m * m, 0)};
  for (std::size_t i = 0; i < m; ++i) {
    if (mask.epsilon[i] > 1) throw ContractError("build_permutation: mask must be binary");
    op.d[i * m + i] = mask.epsilon[i];
    op.e[i * m + i] = 1 - mask.epsilon[i];
  }
  const std::size_t n = 2 * m;
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < m; ++c) {
      op.p[r * n + c] = op.e[r * m + c];
      op.p[r * n + m + c] = op.d[r * m + c];
      op.p[(m + r) * n + c] = op.d[r * m + c];
      op.p[(m + r) * n + m + c] = op.e[r * m + c];
    }
  return op;
}

// Dense product P * z over doubles.
inline std::vector<double> apply(const PermutationOperator& op, std::span<const double> z) {
  const std::size_t n = 2 * op.m;
  if (z.size() != n) throw ContractError("apply: vector length must be 2m");
  std::vector<double> out(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += op.p[r * n + c] * z[c];
    out[r] = s;
  }
  return out;
}

// Integer map on an index vector: z' = P z.
inline std::vector<int> apply(const PermutationOperator& op, std::span<const int> z) {
  const std::size_t n = 2 * op.m;
  if (z.size() != n) throw ContractError("apply: vector length must be 2m");
  std::vector<int> out(n, 0);
  for (std::size_t r = 0; r < n; ++r) {
    long long s = 0;
    for (std::size_t c = 0; c < n; ++c) s += static_cast<long long>(op.p[r * n + c]) * z[c];
    out[r] = static_cast<int>(s);
  }
  return out;
}

// Exact determinant of a small integer matrix by fraction-free (Bareiss)
// elimination with row pivoting.
inline long long bareiss_determinant(std::vector<long long> a, std::size_t n) {
  long long sign = 1;
  long long prev = 1;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    if (a[k * n + k] == 0) {
      std::size_t r = k + 1;
      while (r < n && a[r * n + k] == 0) ++r;
      if (r == n) return 0;
      for (std::size_t c = 0; c < n; ++c) std::swap(a[k * n + c], a[r * n + c]);
      sign = -sign;
    }
    for (std::size_t i = k + 1; i < n; ++i)
      for (std::size_t j = k + 1; j < n; ++j)
        a[i * n + j] = (a[i * n + j] * a[k * n + k] - a[i * n + k] * a[k * n + j]) / prev;
    prev = a[k * n + k];
  }
  return sign * a[(n - 1) * n + (n - 1)];
}

struct OrthogonalityReport {
  bool orthogonal = false;      // P^T P == I exactly
  int det_sign = 0;             // (-1)^|S|
  int parity_sign = 0;          // sign of the permutation P encodes, from its cycles
  bool det_cross_checked = false;
  bool det_consistent = true;   // parity (and elimination, when run) agree with det_sign
};

// Sign of the permutation matrix via cycle decomposition; 0 if some row is not
// a unit vector.
inline int permutation_parity(const PermutationOperator& op) {
  const std::size_t n = 2 * op.m;
  std::vector<std::size_t> target(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const int v = op.p[r * n + c];
      if (v == 0) continue;
      if (v != 1 || target[r] != n) return 0;
      target[r] = c;
    }
  std::vector<std::uint8_t> seen(n, 0);
  std::size_t transpositions = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (target[i] == n) return 0;
    std::size_t len = 0;
    for (std::size_t j = i; !seen[j]; j = target[j], ++len) seen[j] = 1;
    if (len > 0) transpositions += len - 1;
  }
  return transpositions % 2 == 0 ? 1 : -1;
}

inline OrthogonalityReport verify_orthogonality(const PermutationOperator& op, std::size_t elimination_limit = 8) {
  const std::size_t n = 2 * op.m;
  OrthogonalityReport rep;
  // (P^T P)_{ij} = sum_k P_ki P_kj, accumulated row by row over nonzeros.
  std::vector<long long> gram(n * n, 0);
  std::vector<std::size_t> nz;
  for (std::size_t k = 0; k < n; ++k) {
    nz.clear();
    for (std::size_t c = 0; c < n; ++c)
      if (op.p[k * n + c] != 0) nz.push_back(c);
    for (auto i : nz)
      for (auto j : nz) gram[i * n + j] += static_cast<long long>(op.p[k * n + i]) * op.p[k * n + j];
  }
  rep.orthogonal = true;
  for (std::size_t i = 0; i < n && rep.orthogonal; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (gram[i * n + j] != (i == j ? 1 : 0)) {
        rep.orthogonal = false;
        break;
      }
  std::size_t swapped = 0;
  for (std::size_t i = 0; i < op.m; ++i) swapped += op.d[i * op.m + i] != 0;
  rep.det_sign = swapped % 2 == 0 ? 1 : -1;
  rep.parity_sign = permutation_parity(op);
  rep.det_consistent = rep.parity_sign == rep.det_sign;
  if (op.m <= elimination_limit) {
    std::vector<long long> a(op.p.begin(), op.p.end());
    rep.det_cross_checked = true;
    rep.det_consistent = rep.det_consistent && bareiss_determinant(std::move(a), n) == rep.det_sign;
  }
  return rep;
}

}  // namespace seed
