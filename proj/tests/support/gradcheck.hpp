#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "convsum/ops.hpp"

namespace convsum::testing {

/// Random dense tensor with entries in [-scale, scale].
inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0, bool requires_grad = false) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

/// Scalar probe sum(out * R) with a fixed random R, so every output entry
/// carries a distinct weight into the checked gradient.
inline Tensor random_probe(const Tensor& out, std::mt19937_64& rng) {
  return sum(mul(out, random_tensor(out.shape(), rng)));
}

/// Largest per-leaf relative error ||analytic - numeric|| / max(||analytic||, ||numeric||)
/// with central differences of step `h`. Norms below 1e-4 count as zero.
inline double gradcheck(std::vector<Tensor> leaves, const std::function<Tensor()>& f, double h = 1e-5) {
  for (auto& l : leaves) l.zero_grad();
  f().backward();
  double worst = 0.0;
  for (auto& leaf : leaves) {
    std::vector<double> analytic(leaf.size(), 0.0);
    if (leaf.has_grad()) std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());
    auto vals = leaf.mutable_values();
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      vals[i] = saved + h;
      const double up = f().item();
      vals[i] = saved - h;
      const double down = f().item();
      vals[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      diff += (analytic[i] - numeric) * (analytic[i] - numeric);
      na += analytic[i] * analytic[i];
      nn += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-4});  // key biases have exactly zero gradient
    worst = std::max(worst, std::sqrt(diff) / denom);
    leaf.zero_grad();
  }
  return worst;
}

}  // namespace convsum::testing
