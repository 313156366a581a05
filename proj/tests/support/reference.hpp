#pragma once

// Literal nested-loop re-implementations used as test oracles. Nothing here
// calls the library's ops; parameters are read by name as raw values.

#include <cmath>
#include <string>
#include <vector>

#include "convsum/model.hpp"

namespace convsum::testing {

struct Mat {
  std::size_t r = 0, c = 0;
  std::vector<double> v;
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols) : r(rows), c(cols), v(rows * cols, 0.0) {}
  explicit Mat(const Tensor& t) : r(t.dim() == 2 ? t.rows() : 1), c(t.dim() == 2 ? t.cols() : t.size()),
                                  v(t.values().begin(), t.values().end()) {}
  double& operator()(std::size_t i, std::size_t j) { return v[i * c + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v[i * c + j]; }
};

inline Mat affine_ref(const Mat& x, const Mat& w, const Mat& b) {
  Mat y(x.r, w.c);
  for (std::size_t i = 0; i < x.r; ++i)
    for (std::size_t j = 0; j < w.c; ++j) {
      double s = b.v.empty() ? 0.0 : b.v[j];
      for (std::size_t k = 0; k < x.c; ++k) s += x(i, k) * w(k, j);
      y(i, j) = s;
    }
  return y;
}

inline Mat layer_norm_ref(const Mat& x, const Mat& g, const Mat& b, double eps = 1e-6) {
  Mat y(x.r, x.c);
  for (std::size_t i = 0; i < x.r; ++i) {
    double mean = 0, var = 0;
    for (std::size_t j = 0; j < x.c; ++j) mean += x(i, j);
    mean /= static_cast<double>(x.c);
    for (std::size_t j = 0; j < x.c; ++j) var += (x(i, j) - mean) * (x(i, j) - mean);
    var /= static_cast<double>(x.c);
    for (std::size_t j = 0; j < x.c; ++j) y(i, j) = g.v[j] * (x(i, j) - mean) / std::sqrt(var + eps) + b.v[j];
  }
  return y;
}

inline Mat add_ref(Mat a, const Mat& b) {
  for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
  return a;
}

/// Attention where `allowed(h, i, g, j)` says whether query (head h, pos i)
/// may look at key (head g, pos j); `heads_for(h)` lists key heads in order.
template <class HeadsFor, class Allowed>
Mat attention_ref(const Mat& query_in, const Mat& kv_in, const ParameterStore& ps, const std::string& prefix,
                  std::size_t heads, HeadsFor heads_for, Allowed allowed) {
  auto P = [&](const std::string& n) {
    for (const auto& [name, t] : ps)
      if (name == prefix + "." + n) return Mat(t);
    throw std::runtime_error("missing " + prefix + "." + n);
  };
  const Mat q = affine_ref(query_in, P("wq"), P("bq"));
  const Mat k = affine_ref(kv_in, P("wk"), P("bk"));
  const Mat v = affine_ref(kv_in, P("wv"), P("bv"));
  const std::size_t d = q.c, dh = d / heads;
  Mat concat(query_in.r, d);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < query_in.r; ++i) {
      std::vector<std::pair<std::size_t, std::size_t>> keys;
      for (std::size_t g : heads_for(h))
        for (std::size_t j = 0; j < kv_in.r; ++j)
          if (allowed(h, i, g, j)) keys.push_back({g, j});
      std::vector<double> s;
      double mx = -1e300;
      for (auto [g, j] : keys) {
        double dot = 0;
        for (std::size_t t = 0; t < dh; ++t) dot += q(i, h * dh + t) * k(j, g * dh + t);
        s.push_back(dot / std::sqrt(static_cast<double>(dh)));
        mx = std::max(mx, s.back());
      }
      double z = 0;
      for (double& x : s) z += (x = std::exp(x - mx));
      for (std::size_t t = 0; t < dh; ++t) {
        double o = 0;
        for (std::size_t n = 0; n < keys.size(); ++n) o += s[n] / z * v(keys[n].second, keys[n].first * dh + t);
        concat(i, h * dh + t) = o;
      }
    }
  return affine_ref(concat, P("wo"), P("bo"));
}

inline std::vector<std::size_t> head_window_ref(std::size_t h, std::size_t heads, std::size_t kernel, bool circular) {
  std::vector<std::size_t> out;
  const long half = static_cast<long>(kernel / 2);
  for (long off = -half; off <= half; ++off) {
    long g = static_cast<long>(h) + off;
    if (circular) {
      while (g < 0) g += static_cast<long>(heads);
      while (g >= static_cast<long>(heads)) g -= static_cast<long>(heads);
    } else if (g < 0 || g >= static_cast<long>(heads)) {
      continue;
    }
    out.push_back(static_cast<std::size_t>(g));
  }
  return out;
}

inline Mat conv_attention_ref(const Mat& x, const ParameterStore& ps, const std::string& prefix,
                              const AttentionConfig& cfg) {
  const long half = static_cast<long>(cfg.token_kernel / 2);
  return attention_ref(
      x, x, ps, prefix, cfg.heads,
      [&](std::size_t h) { return head_window_ref(h, cfg.heads, cfg.head_kernel, cfg.circular_heads); },
      [&](std::size_t, std::size_t i, std::size_t, std::size_t j) {
        return std::labs(static_cast<long>(i) - static_cast<long>(j)) <= half;
      });
}

inline Mat param_ref(const ParameterStore& ps, const std::string& name) {
  for (const auto& [n, t] : ps)
    if (n == name) return Mat(t);
  throw std::runtime_error("missing parameter " + name);
}

inline Mat positions_ref(std::size_t len, std::size_t d) {
  Mat pe(len, d);
  for (std::size_t p = 0; p < len; ++p)
    for (std::size_t i = 0; i < d; ++i) {
      const double angle = static_cast<double>(p) / std::pow(10000.0, static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      pe(p, i) = i % 2 ? std::cos(angle) : std::sin(angle);
    }
  return pe;
}

inline Mat embed_ref(const ParameterStore& ps, const std::string& table, const std::vector<TokenId>& ids, std::size_t d) {
  const Mat t = param_ref(ps, table);
  Mat e(ids.size(), d);
  const Mat pe = positions_ref(ids.size(), d);
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) e(i, j) = t(static_cast<std::size_t>(ids[i]), j) * std::sqrt(static_cast<double>(d)) + pe(i, j);
  return e;
}

inline Mat ff_ref(const Mat& x, const ParameterStore& ps, const std::string& p) {
  Mat h = affine_ref(x, param_ref(ps, p + ".w1"), param_ref(ps, p + ".b1"));
  for (double& v : h.v) v = std::max(0.0, v);
  return affine_ref(h, param_ref(ps, p + ".w2"), param_ref(ps, p + ".b2"));
}

/// Plain-mode encoder (no dropout), conv attention where `cfg` says so.
inline Mat encoder_ref(const ParameterStore& ps, const ModelConfig& cfg, const std::vector<TokenId>& src) {
  const std::size_t d = cfg.d_model;
  Mat x = embed_ref(ps, "encoder.embed", src, d);
  for (std::size_t l = 0; l < cfg.encoder_layers; ++l) {
    const std::string n = "encoder.layer" + std::to_string(l);
    Mat h = layer_norm_ref(x, param_ref(ps, n + ".norm_attn.gain"), param_ref(ps, n + ".norm_attn.bias"));
    Mat a = cfg.attention.is_conv_layer(l)
                ? conv_attention_ref(h, ps, n + ".attn", cfg.attention)
                : attention_ref(h, h, ps, n + ".attn", cfg.attention.heads,
                                [](std::size_t hh) { return std::vector<std::size_t>{hh}; },
                                [](auto, auto, auto, auto) { return true; });
    x = add_ref(x, a);
    x = add_ref(x, ff_ref(layer_norm_ref(x, param_ref(ps, n + ".norm_ff.gain"), param_ref(ps, n + ".norm_ff.bias")), ps,
                          n + ".ff"));
  }
  return layer_norm_ref(x, param_ref(ps, "encoder.norm.gain"), param_ref(ps, "encoder.norm.bias"));
}

/// Output distribution rows [T, V] for a learned-embedding decoder with the
/// pointer-generator, computed position by position.
inline Mat decoder_ref(const ParameterStore& ps, const ModelConfig& cfg, const Mat& memory,
                       const std::vector<TokenId>& src, const std::vector<TokenId>& prefix) {
  const std::size_t d = cfg.d_model, V = cfg.vocab_size, T = prefix.size(), L = src.size();
  Mat x = embed_ref(ps, "decoder.embed", prefix, d);
  for (std::size_t l = 0; l < cfg.decoder_layers; ++l) {
    const std::string n = "decoder.layer" + std::to_string(l);
    Mat h = layer_norm_ref(x, param_ref(ps, n + ".norm_self.gain"), param_ref(ps, n + ".norm_self.bias"));
    x = add_ref(x, attention_ref(h, h, ps, n + ".self_attn", cfg.attention.heads,
                                 [](std::size_t hh) { return std::vector<std::size_t>{hh}; },
                                 [](auto, std::size_t i, auto, std::size_t j) { return j <= i; }));
    h = layer_norm_ref(x, param_ref(ps, n + ".norm_cross.gain"), param_ref(ps, n + ".norm_cross.bias"));
    x = add_ref(x, attention_ref(h, memory, ps, n + ".cross_attn", cfg.attention.heads,
                                 [](std::size_t hh) { return std::vector<std::size_t>{hh}; },
                                 [](auto, auto, auto, auto) { return true; }));
    x = add_ref(x, ff_ref(layer_norm_ref(x, param_ref(ps, n + ".norm_ff.gain"), param_ref(ps, n + ".norm_ff.bias")), ps,
                          n + ".ff"));
  }
  const Mat s = layer_norm_ref(x, param_ref(ps, "decoder.norm.gain"), param_ref(ps, "decoder.norm.bias"));
  const Mat logits = affine_ref(s, param_ref(ps, "generator.w"), param_ref(ps, "generator.b"));
  Mat out(T, V);
  const Mat q = affine_ref(s, param_ref(ps, "pointer.wq"), Mat());
  const Mat k = affine_ref(memory, param_ref(ps, "pointer.wk"), Mat());
  const Mat gw = param_ref(ps, "pointer.gate.w"), gb = param_ref(ps, "pointer.gate.b");
  for (std::size_t t = 0; t < T; ++t) {
    double mx = -1e300, z = 0;
    for (std::size_t w = 0; w < V; ++w) mx = std::max(mx, logits(t, w));
    std::vector<double> soft(V);
    for (std::size_t w = 0; w < V; ++w) z += (soft[w] = std::exp(logits(t, w) - mx));
    std::vector<double> a(L);
    double amx = -1e300, az = 0;
    for (std::size_t j = 0; j < L; ++j) {
      double dot = 0;
      for (std::size_t c = 0; c < d; ++c) dot += q(t, c) * k(j, c);
      a[j] = dot / std::sqrt(static_cast<double>(d));
      amx = std::max(amx, a[j]);
    }
    for (double& v : a) az += (v = std::exp(v - amx));
    for (double& v : a) v /= az;
    double gate = gb.v[0];
    for (std::size_t c = 0; c < d; ++c) {
      double ctx = 0;
      for (std::size_t j = 0; j < L; ++j) ctx += a[j] * memory(j, c);
      gate += s(t, c) * gw.v[c] + ctx * gw.v[d + c];
    }
    const double pg = 1.0 / (1.0 + std::exp(-gate));
    for (std::size_t w = 0; w < V; ++w) out(t, w) = (1 - pg) * soft[w] / z;
    for (std::size_t j = 0; j < L; ++j) out(t, static_cast<std::size_t>(src[j])) += pg * a[j];
  }
  return out;
}

/// Max-norm relative error: max_i |a_i - b_i| / max_i |b_i|.
inline double max_rel_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0, scale = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return worst / std::max(scale, 1e-300);
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace convsum::testing
