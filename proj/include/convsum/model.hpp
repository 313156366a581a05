#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "convsum/attention.hpp"
#include "convsum/loss.hpp"
#include "convsum/optim.hpp"
#include "convsum/provider.hpp"
#include "convsum/tokenizer.hpp"
#include "convsum/windowing.hpp"

namespace convsum {

enum class IntegrationMode { none, stacking, concatenation };

inline std::string to_string(IntegrationMode m) {
  switch (m) {
    case IntegrationMode::none: return "none";
    case IntegrationMode::stacking: return "stacking";
    case IntegrationMode::concatenation: return "concatenation";
  }
  return "?";
}

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 256;
  std::size_t encoder_layers = 3;
  std::size_t decoder_layers = 3;
  std::size_t ff_inner = 1024;
  AttentionConfig attention;
  double dropout = 0.1;
  double label_smoothing = 0.1;
  IntegrationMode integration = IntegrationMode::none;
  /// Pointer-generator output layer on top of the decoder.
  bool copy = true;
  /// Decoder input embeddings come from the provider's static table.
  bool decoder_conditioning = false;
  /// Width of the provider's contextual embeddings (ignored when unused).
  std::size_t provider_width = 0;
  WindowingConfig windowing;

  bool needs_provider() const { return integration != IntegrationMode::none || decoder_conditioning; }

  /// Concatenation mode: conv branch depth, the rest is the plain stack.
  std::size_t conv_branch_layers() const { return (encoder_layers + 2) / 3; }

  void validate() const {
    attention.validate();
    windowing.validate();
    require(vocab_size > 0, "model: vocab size must be set");
    require(d_model % attention.heads == 0, "model: d_model must be divisible by head count");
    require(encoder_layers >= 1 && decoder_layers >= 1, "model: need at least one encoder and decoder layer");
    require(ff_inner >= 1, "model: feed-forward width must be >= 1");
    require(dropout >= 0.0 && dropout < 1.0, "model: dropout must be in [0, 1)");
    require(label_smoothing >= 0.0 && label_smoothing < 1.0, "model: label smoothing must be in [0, 1)");
    if (integration == IntegrationMode::concatenation)
      require(conv_branch_layers() >= 1 && encoder_layers - conv_branch_layers() >= 1,
              "model: concatenation needs at least one conv-branch and one plain encoder layer");
    if (integration != IntegrationMode::none) require(provider_width >= 1, "model: provider width must be set");
  }

  bool operator==(const ModelConfig&) const = default;
};

/// Sinusoidal position table [length, d].
inline Tensor sinusoidal_positions(std::size_t length, std::size_t d) {
  std::vector<double> pe(length * d);
  for (std::size_t pos = 0; pos < length; ++pos)
    for (std::size_t i = 0; i < d; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(d));
      pe[pos * d + i] = i % 2 == 0 ? std::sin(static_cast<double>(pos) * freq) : std::cos(static_cast<double>(pos) * freq);
    }
  return Tensor::from({length, d}, std::move(pe));
}

struct NormParams {
  Tensor gain, bias;
};

struct FeedForwardParams {
  Tensor w1, b1, w2, b2;
};

struct EncoderLayerParams {
  NormParams norm_attn, norm_ff;
  AttentionParams attn;
  FeedForwardParams ff;
};

struct DecoderLayerParams {
  NormParams norm_self, norm_cross, norm_ff;
  AttentionParams self_attn, cross_attn;
  FeedForwardParams ff;
};

struct PointerParams {
  Tensor wq, wk;          // single-head copy attention
  Tensor gate_w, gate_b;  // [2d, 1], [1]
};

struct PointerOutput {
  Tensor p_gen;         // [T, 1]
  Tensor copy_weights;  // [T, L]
  Tensor p_copy;        // [T, V]
  Tensor mixed;         // [T, V]
};

/// p(w) = p_gen * P_copy(w) + (1 - p_gen) * P_softmax(w), row by row.
inline Tensor mix_pointer(const Tensor& p_gen, const Tensor& p_copy, const Tensor& p_softmax) {
  return add(scale_rows(p_copy, p_gen), scale_rows(p_softmax, affine(p_gen, -1.0, 1.0)));
}

/// Copy distribution and gate from decoder states [T, d] over `memory` [L, d].
/// Copy weights of duplicate source ids accumulate on the same vocab entry.
/// `forced_p_gen` replaces the learned gate (for analysis and tests).
inline PointerOutput pointer_generator(const Tensor& state, const Tensor& memory, std::span<const TokenId> source,
                                       const PointerParams& p, const Tensor& p_softmax,
                                       std::optional<double> forced_p_gen = std::nullopt) {
  require(memory.rows() == source.size(), "pointer_generator: memory length must equal source length");
  require(state.cols() == memory.cols(), "pointer_generator: state and memory widths differ");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(state.cols()));
  PointerOutput out;
  out.copy_weights = softmax(scale(matmul_nt(matmul(state, p.wq), matmul(memory, p.wk)), inv_sqrt));
  if (forced_p_gen) {
    require(*forced_p_gen >= 0.0 && *forced_p_gen <= 1.0, "pointer_generator: p_gen must be in [0, 1]");
    out.p_gen = Tensor::full({state.rows(), 1}, *forced_p_gen);
  } else {
    Tensor context = matmul(out.copy_weights, memory);
    out.p_gen = sigmoid(linear(concat_cols({state, context}), p.gate_w, p.gate_b));
  }
  out.p_copy = scatter_cols(out.copy_weights, source, p_softmax.cols());
  out.mixed = mix_pointer(out.p_gen, out.p_copy, p_softmax);
  return out;
}

struct DecoderOutput {
  Tensor state;        // [T, d] top-layer states after the final norm
  Tensor logits;       // [T, V]
  Tensor probs;        // [T, V] final output distribution
  Tensor p_gen;        // [T, 1], undefined without copy
  Tensor attention;    // [T, L] copy weights, or head-mean top cross-attention without copy
};

struct Example {
  std::vector<TokenId> source;  // starts with [CLS]
  std::vector<TokenId> target;  // [BOS] ... [EOS]
};

/// Transformer encoder-decoder summariser with optional convolutional
/// self-attention, provider conditioning and pointer-generator output.
class Summarizer {
 public:
  Summarizer(ModelConfig cfg, std::uint64_t seed, std::shared_ptr<const EmbeddingProvider> provider = nullptr)
      : cfg_(std::move(cfg)), provider_(std::move(provider)), dropout_rng_(seed ^ 0x9E3779B97F4A7C15ull) {
    cfg_.validate();
    if (cfg_.needs_provider()) {
      require(provider_ != nullptr, "model: integration mode '" + to_string(cfg_.integration) + "'" +
                                        (cfg_.decoder_conditioning ? " with decoder conditioning" : "") +
                                        " requires an embedding provider");
      if (cfg_.integration != IntegrationMode::none)
        require(provider_->context_width() == cfg_.provider_width, "model: provider width does not match config");
      if (cfg_.decoder_conditioning)
        require(provider_->static_table().rows() == cfg_.vocab_size, "model: provider table does not match vocab");
    }
    std::mt19937_64 rng(seed);
    build(rng);
  }

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& parameters() { return params_; }
  const ParameterStore& parameters() const { return params_; }
  std::mt19937_64& dropout_rng() { return dropout_rng_; }
  const EmbeddingProvider* provider() const { return provider_.get(); }

  /// The [L, d] sequence fed into the first encoder layer (plain and stacking
  /// modes) or into the conv branch (concatenation).
  Tensor encoder_input(std::span<const TokenId> source, bool training) {
    require(!source.empty(), "encode: empty source");
    switch (cfg_.integration) {
      case IntegrationMode::stacking:
        return dropout(linear(context_embeddings(source), ctx_proj_w_, ctx_proj_b_), cfg_.dropout, training,
                       dropout_rng_);
      case IntegrationMode::none:
      case IntegrationMode::concatenation:
        break;
    }
    return embed_learned(src_embed_, source, training);
  }

  /// Encoder memory [L, d].
  Tensor encode(std::span<const TokenId> source, bool training = false) {
    Tensor x = encoder_input(source, training);
    if (cfg_.integration == IntegrationMode::concatenation) {
      const std::size_t branch = cfg_.conv_branch_layers();
      for (std::size_t l = 0; l < branch; ++l) x = encoder_layer(x, enc_layers_[l], true, training);
      x = layer_norm(x, branch_norm_.gain, branch_norm_.bias);
      x = linear(concat_cols({x, context_embeddings(source)}), ctx_proj_w_, ctx_proj_b_);
      for (std::size_t l = branch; l < enc_layers_.size(); ++l) x = encoder_layer(x, enc_layers_[l], false, training);
    } else {
      for (std::size_t l = 0; l < enc_layers_.size(); ++l)
        x = encoder_layer(x, enc_layers_[l], cfg_.attention.is_conv_layer(l), training);
    }
    return layer_norm(x, enc_norm_.gain, enc_norm_.bias);
  }

  /// Teacher-forced decoder pass over `prefix` (starting with [BOS]).
  DecoderOutput decode(const Tensor& memory, std::span<const TokenId> source, std::span<const TokenId> prefix,
                       bool training = false, std::optional<double> forced_p_gen = std::nullopt) {
    require(!prefix.empty(), "decode: empty prefix");
    require(memory.rows() == source.size(), "decode: memory/source length mismatch");
    Tensor x;
    if (cfg_.decoder_conditioning) {
      Tensor e = linear(embedding_lookup(provider_->static_table(), prefix), static_proj_w_, static_proj_b_);
      x = dropout(add(e, sinusoidal_positions(prefix.size(), cfg_.d_model)), cfg_.dropout, training, dropout_rng_);
    } else {
      x = embed_learned(tgt_embed_, prefix, training);
    }
    const Mask causal = Mask::causal(prefix.size());
    std::vector<Tensor> cross_weights;
    for (std::size_t l = 0; l < dec_layers_.size(); ++l) {
      const auto& p = dec_layers_[l];
      const bool top = l + 1 == dec_layers_.size();
      Tensor h = layer_norm(x, p.norm_self.gain, p.norm_self.bias);
      x = add(x, dropout(multi_head_attention(h, h, p.self_attn, cfg_.attention.heads, &causal), cfg_.dropout,
                         training, dropout_rng_));
      h = layer_norm(x, p.norm_cross.gain, p.norm_cross.bias);
      x = add(x, dropout(multi_head_attention(h, memory, p.cross_attn, cfg_.attention.heads, nullptr,
                                              top ? &cross_weights : nullptr),
                         cfg_.dropout, training, dropout_rng_));
      x = add(x, dropout(feed_forward(layer_norm(x, p.norm_ff.gain, p.norm_ff.bias), p.ff, training),
                         cfg_.dropout, training, dropout_rng_));
    }
    DecoderOutput out;
    out.state = layer_norm(x, dec_norm_.gain, dec_norm_.bias);
    out.logits = linear(out.state, gen_w_, gen_b_);
    Tensor p_softmax = softmax(out.logits);
    if (cfg_.copy) {
      auto ptr = pointer_generator(out.state, memory, source, pointer_, p_softmax, forced_p_gen);
      out.probs = ptr.mixed;
      out.p_gen = ptr.p_gen;
      out.attention = ptr.copy_weights;
    } else {
      out.probs = p_softmax;
      Tensor mean = cross_weights.front();
      for (std::size_t h = 1; h < cross_weights.size(); ++h) mean = add(mean, cross_weights[h]);
      out.attention = scale(mean, 1.0 / static_cast<double>(cross_weights.size()));
    }
    return out;
  }

  /// Summed smoothed NLL and number of scored (non-pad) target tokens.
  std::pair<Tensor, std::size_t> example_loss(const Example& ex, bool training) {
    require(ex.target.size() >= 2, "loss: target needs at least [BOS] and one more token");
    std::span<const TokenId> tgt(ex.target);
    auto input = tgt.first(tgt.size() - 1);
    auto gold = tgt.subspan(1);
    std::size_t counted = 0;
    for (TokenId t : gold) counted += t != Vocab::kPad ? 1 : 0;
    if (counted == 0) return {Tensor::scalar(0.0), 0};
    Tensor memory = encode(ex.source, training);
    DecoderOutput out = decode(memory, ex.source, input, training);
    Tensor loss = cfg_.copy
                      ? label_smoothed_nll_from_probs(out.probs, gold, cfg_.label_smoothing, Vocab::kPad, Reduction::sum)
                      : label_smoothed_cross_entropy(out.logits, gold, cfg_.label_smoothing, Vocab::kPad, Reduction::sum);
    return {loss, counted};
  }

  /// Token-mean loss over a batch; gradients are accumulated into the parameters.
  double batch_loss_and_backward(std::span<const Example> batch, bool training = true) {
    require(!batch.empty(), "train: empty batch");
    Tensor total;
    std::size_t tokens = 0;
    for (const auto& ex : batch) {
      auto [loss, n] = example_loss(ex, training);
      if (n == 0) continue;
      total = total.defined() ? add(total, loss) : loss;
      tokens += n;
    }
    if (tokens == 0) return 0.0;
    Tensor mean = scale(total, 1.0 / static_cast<double>(tokens));
    mean.backward();
    return mean.item();
  }

  /// Forward, backward and one optimizer update. Returns the token-mean loss.
  double train_step(std::span<const Example> batch, OptimizerState& opt) {
    params_.zero_grad();
    double loss = 0.0;
    try {
      loss = batch_loss_and_backward(batch, true);
    } catch (...) {
      params_.zero_grad();
      throw;
    }
    adam_noam_step(opt, params_);
    return loss;
  }

  /// Output distribution for the last prefix position, plus the attention
  /// row used for coverage. No graph is recorded.
  std::vector<double> next_distribution(const Tensor& memory, std::span<const TokenId> source,
                                        std::span<const TokenId> prefix, std::vector<double>* attention = nullptr) {
    NoGradGuard guard;
    DecoderOutput out = decode(memory, source, prefix, false);
    const std::size_t last = prefix.size() - 1, v = out.probs.cols();
    auto pv = out.probs.values();
    std::vector<double> dist(pv.begin() + static_cast<std::ptrdiff_t>(last * v),
                             pv.begin() + static_cast<std::ptrdiff_t>((last + 1) * v));
    if (attention) {
      const std::size_t l = out.attention.cols();
      auto av = out.attention.values();
      attention->assign(av.begin() + static_cast<std::ptrdiff_t>(last * l),
                        av.begin() + static_cast<std::ptrdiff_t>((last + 1) * l));
    }
    return dist;
  }

 private:
  template <class Rng>
  NormParams make_norm(const std::string& name, Rng&) {
    return {params_.add(name + ".gain", Tensor::full({cfg_.d_model}, 1.0)),
            params_.add(name + ".bias", Tensor::zeros({cfg_.d_model}))};
  }

  template <class Rng>
  FeedForwardParams make_ff(const std::string& name, Rng& rng) {
    return {params_.add(name + ".w1", xavier_uniform(cfg_.d_model, cfg_.ff_inner, rng)),
            params_.add(name + ".b1", Tensor::zeros({cfg_.ff_inner})),
            params_.add(name + ".w2", xavier_uniform(cfg_.ff_inner, cfg_.d_model, rng)),
            params_.add(name + ".b2", Tensor::zeros({cfg_.d_model}))};
  }

  template <class Rng>
  void build(Rng& rng) {
    const std::size_t d = cfg_.d_model, v = cfg_.vocab_size;
    const double embed_std = 1.0 / std::sqrt(static_cast<double>(d));
    if (cfg_.integration != IntegrationMode::stacking)
      src_embed_ = params_.add("encoder.embed", normal_matrix(v, d, embed_std, rng));
    if (!cfg_.decoder_conditioning) {
      tgt_embed_ = params_.add("decoder.embed", normal_matrix(v, d, embed_std, rng));
    } else {
      static_proj_w_ = params_.add("decoder.static_proj.w", xavier_uniform(provider_->static_width(), d, rng));
      static_proj_b_ = params_.add("decoder.static_proj.b", Tensor::zeros({d}));
    }
    if (cfg_.integration == IntegrationMode::stacking) {
      ctx_proj_w_ = params_.add("encoder.ctx_proj.w", xavier_uniform(cfg_.provider_width, d, rng));
      ctx_proj_b_ = params_.add("encoder.ctx_proj.b", Tensor::zeros({d}));
    } else if (cfg_.integration == IntegrationMode::concatenation) {
      branch_norm_ = make_norm("encoder.branch_norm", rng);
      ctx_proj_w_ = params_.add("encoder.ctx_proj.w", xavier_uniform(d + cfg_.provider_width, d, rng));
      ctx_proj_b_ = params_.add("encoder.ctx_proj.b", Tensor::zeros({d}));
    }
    for (std::size_t l = 0; l < cfg_.encoder_layers; ++l) {
      const std::string n = "encoder.layer" + std::to_string(l);
      EncoderLayerParams p;
      p.norm_attn = make_norm(n + ".norm_attn", rng);
      p.attn = make_attention_params(params_, n + ".attn", d, rng);
      p.norm_ff = make_norm(n + ".norm_ff", rng);
      p.ff = make_ff(n + ".ff", rng);
      enc_layers_.push_back(p);
    }
    enc_norm_ = make_norm("encoder.norm", rng);
    for (std::size_t l = 0; l < cfg_.decoder_layers; ++l) {
      const std::string n = "decoder.layer" + std::to_string(l);
      DecoderLayerParams p;
      p.norm_self = make_norm(n + ".norm_self", rng);
      p.self_attn = make_attention_params(params_, n + ".self_attn", d, rng);
      p.norm_cross = make_norm(n + ".norm_cross", rng);
      p.cross_attn = make_attention_params(params_, n + ".cross_attn", d, rng);
      p.norm_ff = make_norm(n + ".norm_ff", rng);
      p.ff = make_ff(n + ".ff", rng);
      dec_layers_.push_back(p);
    }
    dec_norm_ = make_norm("decoder.norm", rng);
    gen_w_ = params_.add("generator.w", xavier_uniform(d, v, rng));
    gen_b_ = params_.add("generator.b", Tensor::zeros({v}));
    if (cfg_.copy) {
      pointer_.wq = params_.add("pointer.wq", xavier_uniform(d, d, rng));
      pointer_.wk = params_.add("pointer.wk", xavier_uniform(d, d, rng));
      pointer_.gate_w = params_.add("pointer.gate.w", xavier_uniform(2 * d, 1, rng));
      pointer_.gate_b = params_.add("pointer.gate.b", Tensor::zeros({1}));
    }
  }

  Tensor embed_learned(const Tensor& table, std::span<const TokenId> ids, bool training) {
    Tensor e = scale(embedding_lookup(table, ids), std::sqrt(static_cast<double>(cfg_.d_model)));
    return dropout(add(e, sinusoidal_positions(ids.size(), cfg_.d_model)), cfg_.dropout, training, dropout_rng_);
  }

  Tensor context_embeddings(std::span<const TokenId> source) const {
    return encode_long(source, *provider_, cfg_.windowing);
  }

  Tensor feed_forward(const Tensor& x, const FeedForwardParams& p, bool training) {
    return linear(dropout(relu(linear(x, p.w1, p.b1)), cfg_.dropout, training, dropout_rng_), p.w2, p.b2);
  }

  Tensor encoder_layer(const Tensor& x, const EncoderLayerParams& p, bool conv, bool training) {
    Tensor h = layer_norm(x, p.norm_attn.gain, p.norm_attn.bias);
    Tensor a = conv ? conv_multi_head_attention(h, p.attn, cfg_.attention)
                    : multi_head_attention(h, h, p.attn, cfg_.attention.heads);
    Tensor y = add(x, dropout(a, cfg_.dropout, training, dropout_rng_));
    return add(y, dropout(feed_forward(layer_norm(y, p.norm_ff.gain, p.norm_ff.bias), p.ff, training), cfg_.dropout,
                          training, dropout_rng_));
  }

  ModelConfig cfg_;
  std::shared_ptr<const EmbeddingProvider> provider_;
  std::mt19937_64 dropout_rng_;
  ParameterStore params_;
  Tensor src_embed_, tgt_embed_;
  Tensor ctx_proj_w_, ctx_proj_b_;
  Tensor static_proj_w_, static_proj_b_;
  NormParams branch_norm_;
  std::vector<EncoderLayerParams> enc_layers_;
  NormParams enc_norm_;
  std::vector<DecoderLayerParams> dec_layers_;
  NormParams dec_norm_;
  Tensor gen_w_, gen_b_;
  PointerParams pointer_;
};

}  // namespace convsum
