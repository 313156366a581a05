#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "convsum/model.hpp"
#include "convsum/tokenizer.hpp"

namespace convsum {

struct DecodingConfig {
  std::size_t beam = 4;
  std::size_t min_length = 55;
  std::size_t max_length = 100;
  double coverage_weight = 0.0;
  TokenId bos = Vocab::kBos;
  TokenId eos = Vocab::kEos;

  void validate() const {
    require(beam >= 1, "decoding: beam size must be >= 1");
    require(min_length >= 1 && min_length <= max_length, "decoding: need 0 < min length <= max length");
    require(coverage_weight >= 0.0, "decoding: coverage weight must be >= 0");
  }
  bool operator==(const DecodingConfig&) const = default;
};

/// beta * sum_j log(min(c_j, 1)), with c_j floored at 1e-10.
inline double coverage_penalty(std::span<const double> coverage, double beta) {
  if (beta == 0.0) return 0.0;
  double s = 0.0;
  for (double c : coverage) s += std::log(std::min(std::max(c, 1e-10), 1.0));
  return beta * s;
}

struct Hypothesis {
  std::vector<TokenId> tokens;  // generated tokens, without [BOS]
  double log_prob = 0.0;
  bool finished = false;
  std::size_t finish_step = 0;
  std::vector<double> coverage;  // accumulated attention per source position

  double final_score(double beta) const { return log_prob + coverage_penalty(coverage, beta); }
};

/// One decoder step: next-token distribution and the attention row that
/// feeds coverage (may be empty).
struct StepResult {
  std::vector<double> probs;
  std::vector<double> attention;
};

struct BeamResult {
  std::vector<TokenId> tokens;  // best sequence, [EOS] stripped
  double score = 0.0;
  std::vector<Hypothesis> finished;  // every hypothesis that reached the pool
};

namespace detail {

inline void check_distribution(const std::vector<double>& p) {
  double s = 0.0;
  for (double x : p) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ContractViolation("beam_search: model produced an invalid probability");
    s += x;
  }
  if (std::abs(s - 1.0) > 1e-6)
    throw ContractViolation("beam_search: model distribution sums to " + std::to_string(s));
}

/// Higher score first, then earlier finish, then lexicographic tokens.
inline bool better(double sa, const Hypothesis& a, double sb, const Hypothesis& b) {
  if (sa != sb) return sa > sb;
  if (a.finish_step != b.finish_step) return a.finish_step < b.finish_step;
  return a.tokens < b.tokens;
}

}  // namespace detail

/// Beam search over any step function `StepResult(span<const TokenId> prefix)`;
/// the prefix always starts with cfg.bos.
template <class StepFn>
BeamResult beam_search(StepFn&& step_fn, const DecodingConfig& cfg) {
  cfg.validate();
  std::vector<Hypothesis> live(1), pool;
  std::vector<TokenId> prefix;
  std::size_t step = 0;
  while (step < cfg.max_length && !live.empty() && pool.size() < cfg.beam) {
    ++step;
    struct Candidate {
      std::size_t parent;
      TokenId token;
      double score;
    };
    std::vector<Candidate> cands;
    std::vector<std::vector<double>> coverages(live.size());
    for (std::size_t h = 0; h < live.size(); ++h) {
      const auto& hyp = live[h];
      prefix.assign(1, cfg.bos);
      prefix.insert(prefix.end(), hyp.tokens.begin(), hyp.tokens.end());
      StepResult r = step_fn(std::span<const TokenId>(prefix));
      detail::check_distribution(r.probs);
      coverages[h] = hyp.coverage;
      if (!r.attention.empty()) {
        if (coverages[h].empty()) coverages[h].assign(r.attention.size(), 0.0);
        require(coverages[h].size() == r.attention.size(), "beam_search: attention width changed between steps");
        for (std::size_t j = 0; j < r.attention.size(); ++j) coverages[h][j] += r.attention[j];
      }
      for (std::size_t w = 0; w < r.probs.size(); ++w) {
        const auto tok = static_cast<TokenId>(w);
        if (tok == cfg.eos && hyp.tokens.size() < cfg.min_length) continue;
        if (r.probs[w] <= 0.0) continue;
        cands.push_back({h, tok, hyp.log_prob + std::log(r.probs[w])});
      }
    }
    std::sort(cands.begin(), cands.end(), [&](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      const auto& ta = live[a.parent].tokens;
      const auto& tb = live[b.parent].tokens;
      if (ta != tb) return ta < tb;
      return a.token < b.token;
    });
    std::vector<Hypothesis> next;
    for (std::size_t c = 0; c < cands.size() && c < cfg.beam; ++c) {
      Hypothesis h;
      h.tokens = live[cands[c].parent].tokens;
      h.tokens.push_back(cands[c].token);
      h.log_prob = cands[c].score;
      h.coverage = coverages[cands[c].parent];
      if (cands[c].token == cfg.eos) {
        h.finished = true;
        h.finish_step = step;
        pool.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
  }
  // Out of length budget: unfinished hypotheses compete as they are.
  for (auto& h : live) {
    h.finish_step = step + 1;
    pool.push_back(std::move(h));
  }
  require(!pool.empty(), "beam_search: no hypothesis survived");

  std::size_t best = 0;
  for (std::size_t i = 1; i < pool.size(); ++i)
    if (detail::better(pool[i].final_score(cfg.coverage_weight), pool[i], pool[best].final_score(cfg.coverage_weight),
                       pool[best]))
      best = i;
  BeamResult out;
  out.tokens = pool[best].tokens;
  if (!out.tokens.empty() && out.tokens.back() == cfg.eos) out.tokens.pop_back();
  out.score = pool[best].final_score(cfg.coverage_weight);
  out.finished = std::move(pool);
  return out;
}

/// Argmax decoding with the same min/max length rules (ties -> lowest id).
template <class StepFn>
std::vector<TokenId> greedy_decode(StepFn&& step_fn, const DecodingConfig& cfg) {
  cfg.validate();
  std::vector<TokenId> prefix{cfg.bos};
  while (prefix.size() - 1 < cfg.max_length) {
    StepResult r = step_fn(std::span<const TokenId>(prefix));
    detail::check_distribution(r.probs);
    TokenId arg = -1;
    double best = -1.0;
    for (std::size_t w = 0; w < r.probs.size(); ++w) {
      if (static_cast<TokenId>(w) == cfg.eos && prefix.size() - 1 < cfg.min_length) continue;
      if (r.probs[w] > best) {
        best = r.probs[w];
        arg = static_cast<TokenId>(w);
      }
    }
    if (arg == cfg.eos) break;
    prefix.push_back(arg);
  }
  return {prefix.begin() + 1, prefix.end()};
}

/// Adapts a model and one source document to the step-function interface.
class ModelStepper {
 public:
  ModelStepper(Summarizer& model, std::span<const TokenId> source) : model_(model), source_(source) {
    NoGradGuard guard;
    memory_ = model_.encode(source_, false);
  }
  StepResult operator()(std::span<const TokenId> prefix) {
    StepResult r;
    r.probs = model_.next_distribution(memory_, source_, prefix, &r.attention);
    return r;
  }

 private:
  Summarizer& model_;
  std::span<const TokenId> source_;
  Tensor memory_;
};

inline std::vector<TokenId> beam_search(Summarizer& model, std::span<const TokenId> source,
                                        const DecodingConfig& cfg) {
  require(!source.empty(), "beam_search: empty source");
  ModelStepper stepper(model, source);
  return beam_search(stepper, cfg).tokens;
}

}  // namespace convsum
