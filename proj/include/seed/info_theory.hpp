#pragma once

// Exact information quantities on finite joint distributions p(z, y), where
// z = (x_1..x_d, y_1..y_d) is the stacked bi-temporal feature vector.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "seed/exchange.hpp"

namespace seed::info {

using Symbol = std::vector<int>;

struct JointDistribution {
  std::vector<Symbol> z_values;   // distinct feature values
  std::size_t n_labels = 0;
  std::vector<double> table;      // |Z| x |Y|, row-major

  double p(std::size_t z, std::size_t y) const { return table[z * n_labels + y]; }

  void validate() const {
    if (n_labels == 0 || z_values.empty()) throw ContractError("joint distribution is empty");
    if (table.size() != z_values.size() * n_labels) throw ContractError("joint table size mismatch");
    double total = 0.0;
    for (double v : table) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ContractError("joint probabilities must be finite and >= 0");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-12) {
      throw ContractError("joint probabilities sum to " + std::to_string(total));
    }
  }

  std::vector<double> z_marginal() const {
    std::vector<double> m(z_values.size(), 0.0);
    for (std::size_t z = 0; z < z_values.size(); ++z)
      for (std::size_t y = 0; y < n_labels; ++y) m[z] += p(z, y);
    return m;
  }

  std::vector<double> y_marginal() const {
    std::vector<double> m(n_labels, 0.0);
    for (std::size_t z = 0; z < z_values.size(); ++z)
      for (std::size_t y = 0; y < n_labels; ++y) m[y] += p(z, y);
    return m;
  }
};

// I(Z;Y) in bits, with 0 log 0 = 0.
inline double mutual_information(const JointDistribution& j) {
  j.validate();
  const auto pz = j.z_marginal();
  const auto py = j.y_marginal();
  double mi = 0.0;
  for (std::size_t z = 0; z < j.z_values.size(); ++z)
    for (std::size_t y = 0; y < j.n_labels; ++y) {
      const double pzy = j.p(z, y);
      if (pzy > 0.0) mi += pzy * std::log2(pzy / (pz[z] * py[y]));
    }
  return std::max(mi, 0.0);
}

// Minimum 0-1 risk: sum_z p(z) (1 - max_y p(y|z)) = 1 - sum_z max_y p(z,y).
inline double bayes_risk(const JointDistribution& j) {
  j.validate();
  double correct = 0.0;
  for (std::size_t z = 0; z < j.z_values.size(); ++z) {
    double best = 0.0;
    for (std::size_t y = 0; y < j.n_labels; ++y) best = std::max(best, j.p(z, y));
    correct += best;
  }
  return std::max(0.0, 1.0 - correct);
}

using FeatureMap = std::function<Symbol(std::span<const int>)>;

// Distribution of (f(Z), Y). Images are ordered lexicographically.
inline JointDistribution pushforward(const JointDistribution& j, const FeatureMap& f) {
  j.validate();
  std::map<Symbol, std::vector<double>> image;
  for (std::size_t z = 0; z < j.z_values.size(); ++z) {
    auto& row = image[f(j.z_values[z])];
    row.resize(j.n_labels, 0.0);
    for (std::size_t y = 0; y < j.n_labels; ++y) row[y] += j.p(z, y);
  }
  JointDistribution out;
  out.n_labels = j.n_labels;
  for (auto& [sym, row] : image) {
    out.z_values.push_back(sym);
    out.table.insert(out.table.end(), row.begin(), row.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature maps on z = [x; y], each half of length d

inline FeatureMap permutation_map(const PermutationOperator& op) {
  return [op](std::span<const int> z) { return apply(op, z); };
}

inline FeatureMap add_map() {
  return [](std::span<const int> z) {
    const std::size_t d = z.size() / 2;
    Symbol u(d);
    for (std::size_t i = 0; i < d; ++i) u[i] = z[i] + z[d + i];
    return u;
  };
}

inline FeatureMap subtract_map() {
  return [](std::span<const int> z) {
    const std::size_t d = z.size() / 2;
    Symbol u(d);
    for (std::size_t i = 0; i < d; ++i) u[i] = z[i] - z[d + i];
    return u;
  };
}

// Keeps the trailing `rank` coordinates of the concatenated vector: a
// surjection onto a smaller alphabet standing in for a rank-deficient 1x1
// reduction of [x; y].
inline FeatureMap concat_reduce_map(std::size_t rank) {
  return [rank](std::span<const int> z) {
    if (rank >= z.size()) throw ContractError("concat_reduce: rank must be below 2m");
    return Symbol(z.end() - static_cast<std::ptrdiff_t>(rank), z.end());
  };
}

enum class Fusion { permutation, add, subtract, concat_reduce };

inline std::string to_string(Fusion f) {
  switch (f) {
    case Fusion::permutation: return "permutation";
    case Fusion::add: return "add";
    case Fusion::subtract: return "subtract";
    case Fusion::concat_reduce: return "concat_reduce";
  }
  return "?";
}

struct DpiReport {
  double mi_before = 0.0;
  double mi_after = 0.0;
  double risk_before = 0.0;
  double risk_after = 0.0;
  bool inequality_holds = false;  // mi_after <= mi_before + 1e-12
  bool strict = false;            // gap > 1e-9
};

inline DpiReport dpi_audit(const JointDistribution& j, const FeatureMap& f) {
  DpiReport r;
  const auto image = pushforward(j, f);
  r.mi_before = mutual_information(j);
  r.mi_after = mutual_information(image);
  r.risk_before = bayes_risk(j);
  r.risk_after = bayes_risk(image);
  r.inequality_holds = r.mi_after <= r.mi_before + 1e-12;
  r.strict = r.mi_before - r.mi_after > 1e-9;
  return r;
}

// `mask` is only used for Fusion::permutation; `rank` only for concat_reduce
// (0 selects d, i.e. channels halved).
inline DpiReport dpi_audit(const JointDistribution& j, Fusion fusion, const ExchangeMask& mask = {},
                           std::size_t rank = 0) {
  const std::size_t width = j.z_values.front().size();
  switch (fusion) {
    case Fusion::permutation: return dpi_audit(j, permutation_map(build_permutation(mask)));
    case Fusion::add: return dpi_audit(j, add_map());
    case Fusion::subtract: return dpi_audit(j, subtract_map());
    case Fusion::concat_reduce: return dpi_audit(j, concat_reduce_map(rank == 0 ? width / 2 : rank));
  }
  throw ContractError("unknown fusion");
}

// ---------------------------------------------------------------------------
// Constructions

// x, y i.i.d. uniform bits with label Y = x.
inline JointDistribution label_copies_first_time() {
  JointDistribution j;
  j.n_labels = 2;
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 2; ++y) {
      j.z_values.push_back({x, y});
      j.table.push_back(x == 0 ? 0.25 : 0.0);
      j.table.push_back(x == 1 ? 0.25 : 0.0);
    }
  return j;
}

// All vectors of length 2d over {0..k-1}, each with a random label distribution.
template <class Rng>
JointDistribution random_joint(Rng& rng, std::size_t d, int k, std::size_t n_labels, double sparsity = 0.3) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  JointDistribution j;
  j.n_labels = n_labels;
  const std::size_t width = 2 * d;
  std::size_t count = 1;
  for (std::size_t i = 0; i < width; ++i) count *= static_cast<std::size_t>(k);
  double total = 0.0;
  for (std::size_t idx = 0; idx < count; ++idx) {
    Symbol z(width);
    std::size_t r = idx;
    for (std::size_t i = 0; i < width; ++i) {
      z[width - 1 - i] = static_cast<int>(r % static_cast<std::size_t>(k));
      r /= static_cast<std::size_t>(k);
    }
    j.z_values.push_back(std::move(z));
    for (std::size_t y = 0; y < n_labels; ++y) {
      const double w = u(rng) < sparsity ? 0.0 : -std::log(1.0 - u(rng));
      j.table.push_back(w);
      total += w;
    }
  }
  if (total == 0.0) {
    j.table[0] = 1.0;
    total = 1.0;
  }
  for (auto& v : j.table) v /= total;
  // Renormalize once more so the sum is within rounding of 1.
  double s = 0.0;
  for (double v : j.table) s += v;
  for (auto& v : j.table) v /= s;
  return j;
}

}  // namespace seed::info
