#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "seed/tensor.hpp"

namespace seed {

// Named parameters in insertion order. Handles are shared, so every consumer
// of a parameter sees the same storage.
class ParamSet {
 public:
  using Entry = std::pair<std::string, Tensor>;

  const Tensor& add(std::string name, Tensor t) {
    if (index_.contains(name)) throw ContractError("duplicate parameter name: " + name);
    t.set_requires_grad(true);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(t));
    return entries_.back().second;
  }

  bool contains(const std::string& name) const { return index_.contains(name); }

  const Tensor& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter: " + name);
    return entries_[it->second].second;
  }
  Tensor& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter: " + name);
    return entries_[it->second].second;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  std::size_t size() const { return entries_.size(); }

  // Total number of scalar parameters.
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : entries_) n += t.numel();
    return n;
  }

  void zero_grad() {
    for (auto& [_, t] : entries_) t.zero_grad();
  }

  // Independent copy (fresh storage, no gradients).
  ParamSet clone() const {
    ParamSet out;
    for (const auto& [name, t] : entries_) out.add(name, t.detach());
    return out;
  }

  void copy_values_from(const ParamSet& other) {
    for (auto& [name, t] : entries_) {
      const auto& src = other.at(name);
      if (src.shape() != t.shape()) throw ContractError("shape mismatch copying parameter " + name);
      std::copy(src.data().begin(), src.data().end(), t.mutable_data().begin());
    }
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;

  void validate() const {
    if (!(lr > 0.0)) throw ContractError("adamw: lr must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
      throw ContractError("adamw: betas must lie in (0, 1)");
    }
    if (!(eps > 0.0)) throw ContractError("adamw: eps must be positive");
    if (!(weight_decay >= 0.0)) throw ContractError("adamw: weight_decay must be non-negative");
  }
};

// AdamW with decoupled weight decay and bias-corrected moments.
class AdamW {
 public:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };

  explicit AdamW(AdamWOptions opts = {}) : opts_(opts) { opts_.validate(); }

  void step(ParamSet& params) {
    for (const auto& [name, t] : params) {
      if (!t.has_grad()) throw UsageError("adamw: parameter '" + name + "' has no gradient");
    }
    ++steps_;
    const double t = static_cast<double>(steps_);
    const double c1 = 1.0 - std::pow(opts_.beta1, t);
    const double c2 = 1.0 - std::pow(opts_.beta2, t);
    const double decay = 1.0 - opts_.lr * opts_.weight_decay;
    for (auto& [name, p] : params) {
      auto& mom = moments_[name];
      auto w = p.mutable_data();
      auto g = p.grad();
      if (mom.m.empty()) {
        mom.m.assign(w.size(), 0.0);
        mom.v.assign(w.size(), 0.0);
      }
      for (std::size_t i = 0; i < w.size(); ++i) {
        mom.m[i] = opts_.beta1 * mom.m[i] + (1.0 - opts_.beta1) * g[i];
        mom.v[i] = opts_.beta2 * mom.v[i] + (1.0 - opts_.beta2) * g[i] * g[i];
        const double mhat = mom.m[i] / c1;
        const double vhat = mom.v[i] / c2;
        w[i] = w[i] * decay - opts_.lr * mhat / (std::sqrt(vhat) + opts_.eps);
      }
    }
  }

  std::uint64_t steps() const { return steps_; }
  const AdamWOptions& options() const { return opts_; }
  const std::unordered_map<std::string, Moments>& moments() const { return moments_; }

  void restore(std::uint64_t steps, std::unordered_map<std::string, Moments> moments) {
    steps_ = steps;
    moments_ = std::move(moments);
  }

 private:
  AdamWOptions opts_;
  std::uint64_t steps_ = 0;
  std::unordered_map<std::string, Moments> moments_;
};

}  // namespace seed
