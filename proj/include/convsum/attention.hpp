#pragma once

#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "convsum/ops.hpp"
#include "convsum/parameters.hpp"

namespace convsum {

/// Multi-head attention hyperparameters, including the convolutional
/// (windowed) variant. Kernel widths are odd and centred on the query:
/// a token kernel k covers positions i-(k-1)/2 .. i+(k-1)/2, a head kernel
/// covers heads h-(k-1)/2 .. h+(k-1)/2.
struct AttentionConfig {
  std::size_t heads = 4;
  std::size_t token_kernel = 11;
  std::size_t head_kernel = 3;
  bool circular_heads = false;
  /// Encoder layers (0-based) whose self-attention is convolutional.
  std::vector<std::size_t> conv_layers = {0};

  void validate() const {
    require(heads >= 1, "attention: heads must be >= 1");
    require(token_kernel >= 1 && token_kernel % 2 == 1, "attention: token kernel must be odd and >= 1");
    require(head_kernel >= 1 && head_kernel % 2 == 1, "attention: head kernel must be odd and >= 1");
    require(!circular_heads || head_kernel <= heads, "attention: circular head kernel cannot exceed head count");
  }

  bool is_conv_layer(std::size_t layer) const {
    for (auto l : conv_layers)
      if (l == layer) return true;
    return false;
  }

  bool operator==(const AttentionConfig&) const = default;
};

struct AttentionParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

template <class Rng>
AttentionParams make_attention_params(ParameterStore& store, const std::string& prefix, std::size_t d, Rng& rng) {
  AttentionParams p;
  p.wq = store.add(prefix + ".wq", xavier_uniform(d, d, rng));
  p.bq = store.add(prefix + ".bq", Tensor::zeros({d}));
  p.wk = store.add(prefix + ".wk", xavier_uniform(d, d, rng));
  p.bk = store.add(prefix + ".bk", Tensor::zeros({d}));
  p.wv = store.add(prefix + ".wv", xavier_uniform(d, d, rng));
  p.bv = store.add(prefix + ".bv", Tensor::zeros({d}));
  p.wo = store.add(prefix + ".wo", xavier_uniform(d, d, rng));
  p.bo = store.add(prefix + ".bo", Tensor::zeros({d}));
  return p;
}

/// (i, j) valid iff |i - j| <= (k - 1) / 2, clipped at the sequence ends.
inline Mask token_window_mask(std::size_t length, std::size_t token_kernel) {
  require(length >= 1, "token_window_mask: length must be >= 1");
  require(token_kernel >= 1 && token_kernel % 2 == 1, "token_window_mask: kernel must be odd");
  const std::size_t half = (token_kernel - 1) / 2;
  Mask m(length, length, false);
  for (std::size_t i = 0; i < length; ++i)
    for (std::size_t j = 0; j < length; ++j) m.set(i, j, (i > j ? i - j : j - i) <= half);
  return m;
}

/// Heads whose keys/values head `h` attends to, in offset order
/// h-(k-1)/2 .. h+(k-1)/2. Standard mode drops out-of-range heads, circular
/// mode wraps them modulo the head count.
inline std::vector<std::size_t> head_union_indices(std::size_t h, std::size_t heads, std::size_t head_kernel,
                                                   bool circular) {
  require(h < heads, "head_union_indices: head index out of range");
  require(head_kernel >= 1 && head_kernel % 2 == 1, "head_union_indices: kernel must be odd");
  require(!circular || head_kernel <= heads, "head_union_indices: circular kernel " + std::to_string(head_kernel) +
                                                 " exceeds " + std::to_string(heads) + " heads");
  const auto half = static_cast<long>((head_kernel - 1) / 2);
  const auto n = static_cast<long>(heads);
  std::vector<std::size_t> out;
  for (long off = -half; off <= half; ++off) {
    long g = static_cast<long>(h) + off;
    if (circular) {
      g = ((g % n) + n) % n;
    } else if (g < 0 || g >= n) {
      continue;
    }
    out.push_back(static_cast<std::size_t>(g));
  }
  return out;
}

namespace detail {

struct Projected {
  Tensor q, k, v;
  std::size_t head_dim;
};

inline Projected project_qkv(const Tensor& query_in, const Tensor& kv_in, const AttentionParams& p,
                             std::size_t heads) {
  const std::size_t d = query_in.cols();
  require(heads >= 1 && d % heads == 0, "attention: model width " + std::to_string(d) +
                                            " not divisible by " + std::to_string(heads) + " heads");
  require(kv_in.cols() == d, "attention: query and key/value widths differ");
  return {linear(query_in, p.wq, p.bq), linear(kv_in, p.wk, p.bk), linear(kv_in, p.wv, p.bv), d / heads};
}

}  // namespace detail

/// Standard scaled dot-product multi-head attention. `mask` (Lq x Lk), when
/// given, restricts every head. Per-head weight matrices are appended to
/// `head_weights` when it is non-null.
inline Tensor multi_head_attention(const Tensor& query_in, const Tensor& kv_in, const AttentionParams& p,
                                   std::size_t heads, const Mask* mask = nullptr,
                                   std::vector<Tensor>* head_weights = nullptr) {
  auto [q, k, v, dh] = detail::project_qkv(query_in, kv_in, p, heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, dh);
    Tensor kh = slice_cols(k, h * dh, dh);
    Tensor vh = slice_cols(v, h * dh, dh);
    Tensor w = softmax(scale(matmul_nt(qh, kh), inv_sqrt), mask);
    if (head_weights) head_weights->push_back(w);
    outs.push_back(matmul(w, vh));
  }
  return linear(concat_cols(outs), p.wo, p.bo);
}

/// Convolutional self-attention over `x` [L, d]. For head h and query i the
/// attended set is the token window around i taken from every head in
/// head_union_indices(h); keys are gathered head by head (offset order),
/// each in token order, and the softmax runs over exactly that set.
inline Tensor conv_multi_head_attention(const Tensor& x, const AttentionParams& p, const AttentionConfig& cfg,
                                        std::vector<Tensor>* head_weights = nullptr) {
  cfg.validate();
  const std::size_t len = x.rows();
  auto [q, k, v, dh] = detail::project_qkv(x, x, p, cfg.heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const Mask window = token_window_mask(len, cfg.token_kernel);

  std::vector<Tensor> k_heads, v_heads;
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    k_heads.push_back(slice_cols(k, h * dh, dh));
    v_heads.push_back(slice_cols(v, h * dh, dh));
  }

  std::vector<Tensor> outs;
  outs.reserve(cfg.heads);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const auto members = head_union_indices(h, cfg.heads, cfg.head_kernel, cfg.circular_heads);
    std::vector<Tensor> ks, vs;
    for (auto g : members) {
      ks.push_back(k_heads[g]);
      vs.push_back(v_heads[g]);
    }
    const Mask gathered = window.tile_cols(members.size());
    Tensor qh = slice_cols(q, h * dh, dh);
    Tensor w = softmax(scale(matmul_nt(qh, concat_rows(ks)), inv_sqrt), &gathered);
    if (head_weights) head_weights->push_back(w);
    outs.push_back(matmul(w, concat_rows(vs)));
  }
  return linear(concat_cols(outs), p.wo, p.bo);
}

}  // namespace convsum
