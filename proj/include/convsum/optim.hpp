#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "convsum/parameters.hpp"

namespace convsum {

/// Inverse-square-root warmup schedule:
///   rate(step) = scale * d^-0.5 * min(step^-0.5, step * warmup^-1.5)
struct NoamSchedule {
  std::size_t model_dim = 512;
  std::size_t warmup = 4000;
  double scale = 1.0;

  double rate(std::size_t step) const {
    require(step >= 1, "noam: step must be >= 1");
    require(warmup >= 1, "noam: warmup must be >= 1");
    const double s = static_cast<double>(step);
    return scale * std::pow(static_cast<double>(model_dim), -0.5) *
           std::min(std::pow(s, -0.5), s * std::pow(static_cast<double>(warmup), -1.5));
  }
};

struct OptimizerState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::size_t step = 0;
  NoamSchedule schedule;
  double beta1 = 0.9;
  double beta2 = 0.998;
  double epsilon = 1e-9;

  static OptimizerState for_parameters(const ParameterStore& params, NoamSchedule schedule) {
    OptimizerState s;
    s.schedule = schedule;
    for (const auto& [name, t] : params) {
      s.first_moment.emplace_back(t.size(), 0.0);
      s.second_moment.emplace_back(t.size(), 0.0);
    }
    return s;
  }
};

/// One Adam update with the Noam rate. Gradients are read from the
/// parameters (missing gradient = zero) and cleared afterwards. Nothing is
/// modified if any gradient is non-finite. Returns the rate used.
inline double adam_noam_step(OptimizerState& state, ParameterStore& params) {
  require(state.first_moment.size() == params.size() && state.second_moment.size() == params.size(),
          "adam: optimizer state does not match parameter set");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(state.first_moment[i].size() == params[i].size(), "adam: moment shape mismatch for " + params.name(i));
    if (!params[i].has_grad()) continue;
    for (double g : params[i].grad())
      if (!std::isfinite(g)) throw NonFiniteError("gradient of " + params.name(i));
  }

  ++state.step;
  const double lr = state.schedule.rate(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    auto w = params[i].mutable_values();
    const bool has = params[i].has_grad();
    auto g = params[i].grad();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = has ? g[j] : 0.0;
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
      w[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + state.epsilon);
    }
  }
  params.zero_grad();
  return lr;
}

}  // namespace convsum
