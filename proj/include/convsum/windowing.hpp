#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "convsum/provider.hpp"

namespace convsum {

struct WindowingConfig {
  std::size_t window = 512;
  std::size_t stride = 256;

  void validate() const {
    require(stride >= 1 && stride <= window, "windowing: need 1 <= stride <= window");
  }
  bool operator==(const WindowingConfig&) const = default;
};

/// Half-open token range [begin, end).
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const Span&) const = default;
};

/// Windows start at 0, S, 2S, ... and end at min(start + W, L); the last
/// window is the first one reaching L.
inline std::vector<Span> split_windows(std::size_t length, const WindowingConfig& cfg) {
  cfg.validate();
  require(length >= 1, "split_windows: length must be >= 1");
  std::vector<Span> spans;
  for (std::size_t start = 0;; start += cfg.stride) {
    spans.push_back({start, std::min(start + cfg.window, length)});
    if (spans.back().end == length) break;
  }
  return spans;
}

inline std::vector<std::size_t> coverage_counts(std::span<const Span> spans, std::size_t length) {
  std::vector<std::size_t> count(length, 0);
  for (const auto& s : spans) {
    require(s.begin < s.end && s.end <= length, "coverage_counts: span outside sequence");
    for (std::size_t t = s.begin; t < s.end; ++t) ++count[t];
  }
  return count;
}

/// Reassembles per-window matrices into one [L, width] matrix; positions
/// covered by several windows get the mean of their rows.
inline Tensor merge_windows(const std::vector<Tensor>& parts, std::span<const Span> spans, std::size_t length) {
  require(!parts.empty() && parts.size() == spans.size(), "merge_windows: need one matrix per span");
  const std::size_t width = parts.front().cols();
  const auto count = coverage_counts(spans, length);
  for (std::size_t t = 0; t < length; ++t)
    require(count[t] >= 1, "merge_windows: position " + std::to_string(t) + " is not covered");
  std::vector<double> out(length * width, 0.0);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& part = parts[k];
    if (part.dim() != 2 || part.rows() != spans[k].size() || part.cols() != width)
      throw ContractViolation("merge_windows: window " + std::to_string(k) + " has shape " + shape_str(part.shape()) +
                              ", expected " + std::to_string(spans[k].size()) + "x" + std::to_string(width));
    auto v = part.values();
    for (std::size_t r = 0; r < part.rows(); ++r)
      for (std::size_t j = 0; j < width; ++j) out[(spans[k].begin + r) * width + j] += v[r * width + j];
  }
  for (std::size_t t = 0; t < length; ++t)
    for (std::size_t j = 0; j < width; ++j) out[t * width + j] /= static_cast<double>(count[t]);
  return Tensor::from({length, width}, std::move(out));
}

/// Context embeddings for sequences of any length: split into strided
/// windows, embed each, average overlaps. Sequences that fit in one window
/// go straight to the provider.
inline Tensor encode_long(std::span<const TokenId> ids, const EmbeddingProvider& provider,
                          const WindowingConfig& cfg) {
  cfg.validate();
  require(!ids.empty(), "encode_long: empty input");
  require(provider.max_window() >= cfg.window, "encode_long: window " + std::to_string(cfg.window) +
                                                   " exceeds provider limit " +
                                                   std::to_string(provider.max_window()));
  if (ids.size() <= cfg.window) return provider.context_embed(ids);
  const auto spans = split_windows(ids.size(), cfg);
  std::vector<Tensor> parts;
  parts.reserve(spans.size());
  for (const auto& s : spans) parts.push_back(provider.context_embed(ids.subspan(s.begin, s.size())));
  return merge_windows(parts, spans, ids.size());
}

}  // namespace convsum
