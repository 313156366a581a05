#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "convsum/tensor.hpp"

namespace convsum {

/// Ordered, named collection of trainable tensors. Order is registration
/// order and is what checkpoints and the optimizer rely on.
class ParameterStore {
 public:
  /// Returns a handle sharing storage with the registered tensor.
  Tensor add(std::string name, Tensor t) {
    for (const auto& [n, _] : entries_) require(n != name, "duplicate parameter name '" + name + "'");
    t.set_requires_grad(true);
    entries_.emplace_back(std::move(name), std::move(t));
    return entries_.back().second;
  }

  std::size_t size() const { return entries_.size(); }
  const std::string& name(std::size_t i) const { return entries_[i].first; }
  Tensor& operator[](std::size_t i) { return entries_[i].second; }
  const Tensor& operator[](std::size_t i) const { return entries_[i].second; }

  Tensor& get(const std::string& name) {
    for (auto& [n, t] : entries_)
      if (n == name) return t;
    throw ContractViolation("no parameter named '" + name + "'");
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.size();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.second.zero_grad();
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

/// Glorot-uniform initialised matrix.
template <class Rng>
Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> v(fan_in * fan_out);
  for (double& x : v) x = dist(rng);
  return Tensor::from({fan_in, fan_out}, std::move(v));
}

template <class Rng>
Tensor normal_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = dist(rng);
  return Tensor::from({rows, cols}, std::move(v));
}

}  // namespace convsum
