#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "convsum/ops.hpp"

namespace convsum {

/// Source of pretrained embeddings. Outputs are constants: nothing
/// backpropagates into a provider.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  /// Longest id sequence accepted by one context_embed call.
  virtual std::size_t max_window() const = 0;
  virtual std::size_t context_width() const = 0;
  /// Contextual embeddings [n, context_width()] for 1 <= n <= max_window().
  virtual Tensor context_embed(std::span<const TokenId> ids) const = 0;
  /// Context-free token table [vocab, static_width].
  virtual const Tensor& static_table() const = 0;
  std::size_t static_width() const { return static_table().cols(); }
};

/// Deterministic stand-in for a pretrained encoder.
///
/// context_free: row t is the seeded table row of ids[t].
/// mixing: row t additionally receives half the mean of all rows in the
/// call plus a small position signal, so results depend on the window.
class StubProvider final : public EmbeddingProvider {
 public:
  enum class Mode { context_free, mixing };

  StubProvider(std::size_t vocab_size, std::size_t width, std::size_t max_window, std::uint64_t seed,
               Mode mode = Mode::mixing)
      : width_(width), max_window_(max_window), mode_(mode) {
    require(vocab_size >= 1 && width >= 1 && max_window >= 1, "stub provider: sizes must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(vocab_size * width);
    for (double& x : v) x = dist(rng);
    table_ = Tensor::from({vocab_size, width}, std::move(v));
  }

  std::size_t max_window() const override { return max_window_; }
  std::size_t context_width() const override { return width_; }
  const Tensor& static_table() const override { return table_; }
  Mode mode() const { return mode_; }

  Tensor context_embed(std::span<const TokenId> ids) const override {
    require(!ids.empty(), "stub provider: empty input");
    require(ids.size() <= max_window_, "stub provider: " + std::to_string(ids.size()) + " ids exceed window of " +
                                           std::to_string(max_window_));
    const std::size_t n = ids.size(), vocab = table_.rows();
    auto tab = table_.values();
    std::vector<double> out(n * width_);
    for (std::size_t t = 0; t < n; ++t) {
      require(ids[t] >= 0 && static_cast<std::size_t>(ids[t]) < vocab, "stub provider: id out of range");
      std::copy_n(tab.begin() + static_cast<std::ptrdiff_t>(ids[t] * width_), width_, out.begin() + t * width_);
    }
    if (mode_ == Mode::mixing) {
      std::vector<double> mean(width_, 0.0);
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t j = 0; j < width_; ++j) mean[j] += tab[ids[t] * width_ + j];
      for (double& m : mean) m /= static_cast<double>(n);
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t j = 0; j < width_; ++j)
          out[t * width_ + j] += 0.5 * mean[j] + 0.1 * std::sin(0.37 * static_cast<double>((t + 1) * (j + 1)));
    }
    return Tensor::from({n, width_}, std::move(out));
  }

 private:
  std::size_t width_;
  std::size_t max_window_;
  Mode mode_;
  Tensor table_;
};

}  // namespace convsum
