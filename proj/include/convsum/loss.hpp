#pragma once

#include <span>
#include <string>
#include <vector>

#include "convsum/ops.hpp"

namespace convsum {

enum class Reduction { mean, sum };

/// Smoothed negative log-likelihood over rows of `log_probs` [T, V].
///
/// Target distribution per row is (1 - eps) * onehot(target) + eps / V.
/// Rows whose target equals `pad_id` contribute nothing. With
/// Reduction::mean the result is divided by the number of non-pad rows
/// (zero when every row is padding).
inline Tensor label_smoothed_nll(const Tensor& log_probs, std::span<const TokenId> targets, double smoothing,
                                 TokenId pad_id, Reduction reduction = Reduction::mean) {
  detail::require_2d(log_probs, "label_smoothed_nll");
  const std::size_t rows = log_probs.rows(), vocab = log_probs.cols();
  require(targets.size() == rows, "label_smoothed_nll: need one target per row");
  require(smoothing >= 0.0 && smoothing < 1.0, "label_smoothed_nll: smoothing must be in [0, 1)");
  std::size_t counted = 0;
  for (TokenId t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab)
      throw ContractViolation("label_smoothed_nll: target id " + std::to_string(t) + " outside vocab of " +
                              std::to_string(vocab));
    if (t != pad_id) ++counted;
  }
  if (counted == 0) return Tensor::scalar(0.0);

  const double uniform = smoothing / static_cast<double>(vocab);
  const double confidence = 1.0 - smoothing;
  const double norm = reduction == Reduction::mean ? 1.0 / static_cast<double>(counted) : 1.0;
  auto lp = log_probs.values();
  double total = 0.0;
  for (std::size_t t = 0; t < rows; ++t) {
    if (targets[t] == pad_id) continue;
    double row = 0.0;
    if (uniform > 0.0)
      for (std::size_t w = 0; w < vocab; ++w) row -= uniform * lp[t * vocab + w];
    row -= confidence * lp[t * vocab + targets[t]];
    total += row;
  }
  return detail::make_result(
      "label_smoothed_nll", {}, {total * norm}, {log_probs},
      [rows, vocab, uniform, confidence, norm, pad_id,
       targets = std::vector<TokenId>(targets.begin(), targets.end())](detail::Node& self) {
        auto& g = detail::parent(self, 0).grad_buffer();
        const double up = self.grad[0] * norm;
        for (std::size_t t = 0; t < rows; ++t) {
          if (targets[t] == pad_id) continue;
          if (uniform > 0.0)
            for (std::size_t w = 0; w < vocab; ++w) g[t * vocab + w] -= up * uniform;
          g[t * vocab + targets[t]] -= up * confidence;
        }
      });
}

/// Label-smoothed cross-entropy from unnormalised logits [T, V].
inline Tensor label_smoothed_cross_entropy(const Tensor& logits, std::span<const TokenId> targets, double smoothing,
                                           TokenId pad_id, Reduction reduction = Reduction::mean) {
  return label_smoothed_nll(log_softmax(logits), targets, smoothing, pad_id, reduction);
}

/// Floor added to probabilities before taking logs in the pointer-generator
/// path, where the copy component is exactly zero off the source.
inline constexpr double kProbabilityFloor = 1e-12;

/// Same loss for an already-normalised distribution [T, V].
inline Tensor label_smoothed_nll_from_probs(const Tensor& probs, std::span<const TokenId> targets, double smoothing,
                                            TokenId pad_id, Reduction reduction = Reduction::mean) {
  return label_smoothed_nll(log(affine(probs, 1.0, kProbabilityFloor)), targets, smoothing, pad_id, reduction);
}

}  // namespace convsum
