#pragma once

// Randomized and exhaustive audits of the exchange operators and the
// information-theory oracle. Each check returns pass/fail plus details; the
// CLI turns the list into a JSON report.

#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seed/exchange.hpp"
#include "seed/info_theory.hpp"

namespace seed::verify {

struct Check {
  std::string name;
  bool pass = true;
  nlohmann::json detail = nlohmann::json::object();
  double seconds = 0.0;
};

struct Options {
  std::size_t exhaustive_max_m = 10;
  std::size_t random_masks = 10000;
  std::size_t random_max_m = 64;
  std::size_t equivalence_cases = 1000;
  std::size_t joints = 500;
  std::size_t bernoulli_draws = 100000;
  std::uint64_t seed = 2024;
};

namespace detail {

inline Check timed(const std::string& name, const std::function<void(Check&)>& body) {
  Check c{name};
  const auto t0 = std::chrono::steady_clock::now();
  body(c);
  c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return c;
}

inline ExchangeMask random_mask(std::mt19937_64& rng, std::size_t m, ExchangeAxis axis = ExchangeAxis::layer) {
  ExchangeMask mask{std::vector<std::uint8_t>(m), axis, 0};
  for (auto& e : mask.epsilon) e = static_cast<std::uint8_t>(rng() & 1U);
  return mask;
}

inline Tensor random_tensor(std::mt19937_64& rng, const Shape& s) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(numel(s));
  for (auto& x : v) x = n(rng);
  return Tensor(s, std::move(v));
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

inline void fail(Check& c, const std::string& why) {
  if (c.pass) c.detail["first_failure"] = why;
  c.pass = false;
}

inline void audit_mask(Check& c, const ExchangeMask& mask, std::size_t& cross_checked) {
  const auto rep = verify_orthogonality(build_permutation(mask));
  const int expected = mask.swapped() % 2 == 0 ? 1 : -1;
  if (!rep.orthogonal) fail(c, "P^T P != I for m=" + std::to_string(mask.size()));
  if (rep.det_sign != expected || !rep.det_consistent) {
    fail(c, "determinant sign mismatch for m=" + std::to_string(mask.size()));
  }
  cross_checked += rep.det_cross_checked;
}

}  // namespace detail

// Every 2^m mask for m <= exhaustive_max_m.
inline Check orthogonality_exhaustive(const Options& o) {
  return detail::timed("orthogonality_exhaustive", [&](Check& c) {
    std::size_t masks = 0, crossed = 0;
    for (std::size_t m = 1; m <= o.exhaustive_max_m; ++m)
      for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << m); ++bits) {
        ExchangeMask mask{std::vector<std::uint8_t>(m), ExchangeAxis::layer, 0};
        for (std::size_t i = 0; i < m; ++i) mask.epsilon[i] = (bits >> i) & 1U;
        detail::audit_mask(c, mask, crossed);
        ++masks;
      }
    c.detail["masks"] = masks;
    c.detail["elimination_cross_checks"] = crossed;
  });
}

inline Check orthogonality_random(const Options& o) {
  return detail::timed("orthogonality_random", [&](Check& c) {
    std::mt19937_64 rng(o.seed);
    std::uniform_int_distribution<std::size_t> m_dist(1, o.random_max_m);
    std::size_t crossed = 0;
    for (std::size_t t = 0; t < o.random_masks; ++t) detail::audit_mask(c, detail::random_mask(rng, m_dist(rng)), crossed);
    c.detail["masks"] = o.random_masks;
    c.detail["max_m"] = o.random_max_m;
  });
}

// Applying any exchange twice with the same mask is the identity, bit for bit.
inline Check involution(const Options& o) {
  return detail::timed("involution", [&](Check& c) {
    std::mt19937_64 rng(o.seed + 1);
    std::uniform_int_distribution<std::size_t> dim(1, 6);
    for (std::size_t t = 0; t < o.equivalence_cases; ++t) {
      const Shape s{dim(rng), dim(rng), dim(rng)};
      const auto a = detail::random_tensor(rng, s);
      const auto b = detail::random_tensor(rng, s);
      const auto cm = detail::random_mask(rng, s[0]);
      auto [a1, b1] = channel_exchange(a, b, cm);
      auto [a2, b2] = channel_exchange(a1, b1, cm);
      if (!detail::bit_equal(a2, a) || !detail::bit_equal(b2, b)) detail::fail(c, "channel exchange");
      for (auto axis : {ExchangeAxis::spatial_col, ExchangeAxis::spatial_row}) {
        const auto sm = detail::random_mask(rng, axis == ExchangeAxis::spatial_col ? s[2] : s[1]);
        auto [x1, y1] = spatial_exchange(a, b, sm, axis);
        auto [x2, y2] = spatial_exchange(x1, y1, sm, axis);
        if (!detail::bit_equal(x2, a) || !detail::bit_equal(y2, b)) detail::fail(c, "spatial exchange");
      }
      const std::size_t levels = dim(rng);
      Pyramid pa, pb;
      for (std::size_t l = 0; l < levels; ++l) {
        pa.push_back(detail::random_tensor(rng, s));
        pb.push_back(detail::random_tensor(rng, s));
      }
      const auto lm = detail::random_mask(rng, levels);
      auto [la1, lb1] = layer_exchange(pa, pb, lm);
      auto [la2, lb2] = layer_exchange(la1, lb1, lm);
      for (std::size_t l = 0; l < levels; ++l)
        if (!detail::bit_equal(la2[l], pa[l]) || !detail::bit_equal(lb2[l], pb[l])) detail::fail(c, "layer exchange");
    }
    c.detail["cases"] = o.equivalence_cases;
  });
}

// For every fibre along the exchange axis, P [x; y] from the integer matrix
// equals the elementwise exchange output exactly. Also checks that outputs only
// ever take the value found at the same (c, h, w) in one of the inputs.
inline Check matrix_equivalence(const Options& o) {
  return detail::timed("matrix_elementwise_equivalence", [&](Check& c) {
    std::mt19937_64 rng(o.seed + 2);
    std::uniform_int_distribution<std::size_t> dim(1, 7);
    std::size_t fibres = 0;
    for (std::size_t t = 0; t < o.equivalence_cases; ++t) {
      const Shape s{dim(rng), dim(rng), dim(rng)};
      const std::size_t C = s[0], H = s[1], W = s[2];
      const auto a = detail::random_tensor(rng, s);
      const auto b = detail::random_tensor(rng, s);
      const auto axis = static_cast<ExchangeAxis>(1 + t % 3);
      const std::size_t m = axis == ExchangeAxis::channel ? C : axis == ExchangeAxis::spatial_col ? W : H;
      const auto mask = detail::random_mask(rng, m, axis);
      auto [xa, xb] = axis == ExchangeAxis::channel ? channel_exchange(a, b, mask) : spatial_exchange(a, b, mask, axis);
      const auto op = build_permutation(mask);
      auto index = [&](std::size_t i, std::size_t u, std::size_t v) {
        // i runs along the exchange axis; (u, v) are the other two coordinates.
        if (axis == ExchangeAxis::channel) return (i * H + u) * W + v;
        if (axis == ExchangeAxis::spatial_col) return (u * H + v) * W + i;
        return (u * H + i) * W + v;
      };
      const std::size_t U = axis == ExchangeAxis::channel ? H : C;
      const std::size_t V = axis == ExchangeAxis::spatial_row ? W : (axis == ExchangeAxis::channel ? W : H);
      std::vector<double> z(2 * m);
      for (std::size_t u = 0; u < U; ++u)
        for (std::size_t v = 0; v < V; ++v) {
          for (std::size_t i = 0; i < m; ++i) {
            z[i] = a[index(i, u, v)];
            z[m + i] = b[index(i, u, v)];
          }
          const auto pz = apply(op, std::span<const double>(z));
          for (std::size_t i = 0; i < m; ++i) {
            const auto k = index(i, u, v);
            if (pz[i] != xa[k] || pz[m + i] != xb[k]) detail::fail(c, "matrix path differs from " + to_string(axis));
            const bool local = (xa[k] == a[k] || xa[k] == b[k]) && (xb[k] == a[k] || xb[k] == b[k]);
            if (!local) detail::fail(c, "value moved across positions under " + to_string(axis));
          }
          ++fibres;
        }
    }
    c.detail["cases"] = o.equivalence_cases;
    c.detail["fibres"] = fibres;
  });
}

inline Check zero_cost(const Options& o) {
  return detail::timed("exchange_zero_cost", [&](Check& c) {
    std::mt19937_64 rng(o.seed + 3);
    const Shape s{4, 6, 6};
    const auto a = detail::random_tensor(rng, s);
    const auto b = detail::random_tensor(rng, s);
    CostMeter meter;
    channel_exchange(a, b, detail::random_mask(rng, 4));
    spatial_exchange(a, b, detail::random_mask(rng, 6));
    spatial_exchange(a, b, detail::random_mask(rng, 6), ExchangeAxis::spatial_row);
    layer_exchange({a, b}, {b, a}, detail::random_mask(rng, 2));
    const auto cost = meter.elapsed();
    c.detail["macs"] = cost.multiply_accumulates;
    c.detail["params"] = cost.parameters_touched;
    if (cost != OpCost{}) detail::fail(c, "exchange recorded a nonzero cost");
  });
}

inline Check mask_sampling(const Options& o) {
  return detail::timed("mask_sampling", [&](Check& c) {
    ExchangeSpec det;
    const auto m5 = sample_mask(det, 5, 0, 0);
    if (m5.epsilon != std::vector<std::uint8_t>{1, 0, 1, 0, 1}) detail::fail(c, "step 2 mask is not 10101");
    ExchangeSpec zero{ExchangeAxis::channel, ExchangePolicy::bernoulli, 2, 0, 0.0, o.seed};
    if (sample_mask(zero, 64, 3, 1).swapped() != 0) detail::fail(c, "p = 0 produced swaps");
    ExchangeSpec half{ExchangeAxis::channel, ExchangePolicy::bernoulli, 2, 0, 0.5, o.seed};
    std::size_t ones = 0;
    const std::size_t per = 100;
    for (std::size_t it = 0; it < o.bernoulli_draws / per; ++it) ones += sample_mask(half, per, it, 0).swapped();
    const double rate = static_cast<double>(ones) / static_cast<double>(o.bernoulli_draws / per * per);
    c.detail["bernoulli_rate"] = rate;
    if (rate < 0.495 || rate > 0.505) detail::fail(c, "Bernoulli rate outside [0.495, 0.505]");
    const auto e1 = sample_mask(half, 16, 7, 2, Phase::eval);
    const auto e2 = sample_mask(half, 16, 99, 2, Phase::eval);
    if (e1.epsilon != e2.epsilon || e1.epsilon != sample_mask(det, 16, 0, 2).epsilon) {
      detail::fail(c, "eval-phase masks are not the deterministic rule");
    }
    if (sample_mask(half, 32, 5, 1).epsilon != sample_mask(half, 32, 5, 1).epsilon) {
      detail::fail(c, "Bernoulli mask not reproducible from (seed, iteration, level)");
    }
  });
}

// Random joints over z = [x; y] with x, y in {0..k-1}^d.
inline std::vector<info::JointDistribution> random_joints(const Options& o) {
  std::mt19937_64 rng(o.seed + 4);
  std::vector<info::JointDistribution> out;
  for (std::size_t t = 0; t < o.joints; ++t) {
    const std::size_t d = 1 + t % 2;
    const int k = 2 + static_cast<int>((t / 2) % 2);
    const std::size_t labels = 2 + (t / 4) % 2;
    out.push_back(info::random_joint(rng, d, k, labels));
  }
  return out;
}

inline Check mi_invariance(const Options& o) {
  return detail::timed("mi_bayes_invariance", [&](Check& c) {
    std::mt19937_64 rng(o.seed + 5);
    double worst_mi = 0.0, worst_risk = 0.0;
    for (const auto& j : random_joints(o)) {
      const auto mask = detail::random_mask(rng, j.z_values.front().size() / 2);
      const auto r = info::dpi_audit(j, info::Fusion::permutation, mask);
      worst_mi = std::max(worst_mi, std::abs(r.mi_after - r.mi_before));
      worst_risk = std::max(worst_risk, std::abs(r.risk_after - r.risk_before));
    }
    c.detail["joints"] = o.joints;
    c.detail["max_abs_delta_mi"] = worst_mi;
    c.detail["max_abs_delta_risk"] = worst_risk;
    if (worst_mi > 1e-12) detail::fail(c, "MI changed under a permutation");
    if (worst_risk > 1e-12) detail::fail(c, "Bayes risk changed under a permutation");
  });
}

inline Check dpi(const Options& o) {
  return detail::timed("dpi_fusions", [&](Check& c) {
    std::size_t audits = 0, strict = 0;
    for (const auto& j : random_joints(o))
      for (auto f : {info::Fusion::add, info::Fusion::subtract, info::Fusion::concat_reduce}) {
        const auto r = info::dpi_audit(j, f);
        ++audits;
        strict += r.strict;
        if (!r.inequality_holds) detail::fail(c, "DPI violated by " + info::to_string(f));
      }
    c.detail["audits"] = audits;
    c.detail["strict_losses"] = strict;
  });
}

// Y = x with x, y uniform bits: MI 1 -> 0.5 bits and risk 0 -> 0.25 under add
// and subtract; the reduction to y loses everything.
inline Check label_copy_example(const Options&) {
  return detail::timed("label_copy_example", [&](Check& c) {
    const auto j = info::label_copies_first_time();
    for (auto f : {info::Fusion::add, info::Fusion::subtract, info::Fusion::concat_reduce}) {
      const auto r = info::dpi_audit(j, f);
      c.detail[info::to_string(f)] = {{"mi_before", r.mi_before}, {"mi_after", r.mi_after},
                                      {"risk_before", r.risk_before}, {"risk_after", r.risk_after},
                                      {"strict", r.strict}};
      if (std::abs(r.mi_before - 1.0) > 1e-12 || std::abs(r.risk_before) > 1e-12) detail::fail(c, "baseline");
      if (!r.strict) detail::fail(c, info::to_string(f) + " lost no information");
      if (f != info::Fusion::concat_reduce &&
          (std::abs(r.mi_after - 0.5) > 1e-12 || std::abs(r.risk_after - 0.25) > 1e-12)) {
        detail::fail(c, info::to_string(f) + " did not give MI 0.5 / risk 0.25");
      }
    }
    const auto perm = info::dpi_audit(j, info::Fusion::permutation, ExchangeMask{{1}, ExchangeAxis::layer, 0});
    if (std::abs(perm.mi_after - 1.0) > 1e-12 || perm.strict) detail::fail(c, "swap changed MI");
  });
}

inline std::vector<Check> exchange_checks(const Options& o = {}) {
  return {orthogonality_exhaustive(o), orthogonality_random(o), involution(o), matrix_equivalence(o), zero_cost(o),
          mask_sampling(o)};
}

inline std::vector<Check> info_checks(const Options& o = {}) {
  return {mi_invariance(o), dpi(o), label_copy_example(o)};
}

inline std::vector<Check> run_all(const Options& o = {}) {
  auto out = exchange_checks(o);
  for (auto& c : info_checks(o)) out.push_back(std::move(c));
  return out;
}

inline bool all_pass(const std::vector<Check>& checks) {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

inline nlohmann::json report(const std::vector<Check>& checks) {
  nlohmann::json j;
  j["status"] = all_pass(checks) ? "pass" : "fail";
  for (const auto& c : checks) {
    j["checks"].push_back({{"name", c.name},
                           {"status", c.pass ? "pass" : "fail"},
                           {"seconds", c.seconds},
                           {"detail", c.detail}});
  }
  return j;
}

}  // namespace seed::verify
