#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "convsum/checkpoint.hpp"
#include "convsum/config.hpp"
#include "convsum/corpus.hpp"
#include "convsum/decoding.hpp"
#include "convsum/model.hpp"
#include "convsum/rouge.hpp"
#include "convsum/tokenizer.hpp"

namespace convsum {

inline std::shared_ptr<const EmbeddingProvider> make_provider(const RunConfig& cfg, std::size_t vocab_size) {
  switch (cfg.provider.kind) {
    case ProviderKind::none: return nullptr;
    case ProviderKind::stub:
      return std::make_shared<StubProvider>(vocab_size, cfg.provider.width, cfg.provider.max_window,
                                            cfg.provider.seed, StubProvider::Mode::mixing);
    case ProviderKind::stub_context_free:
      return std::make_shared<StubProvider>(vocab_size, cfg.provider.width, cfg.provider.max_window,
                                            cfg.provider.seed, StubProvider::Mode::context_free);
  }
  return nullptr;
}

/// [CLS] + pieces, truncated to src_max_len unless full_text is set.
inline std::vector<TokenId> source_ids(std::string_view text, const Vocab& vocab, const DataConfig& data) {
  auto ids = tokenize(text, vocab);
  if (!data.full_text && ids.size() > data.src_max_len) ids.resize(data.src_max_len);
  return ids;
}

inline Example make_example(const Record& r, const Vocab& vocab, const DataConfig& data) {
  Example ex;
  ex.source = source_ids(r.source_text(), vocab, data);
  auto pieces = tokenize_plain(r.summary_text(), vocab);
  if (pieces.size() > data.tgt_max_len) pieces.resize(data.tgt_max_len);
  ex.target.push_back(Vocab::kBos);
  ex.target.insert(ex.target.end(), pieces.begin(), pieces.end());
  ex.target.push_back(Vocab::kEos);
  return ex;
}

/// Example indices for a training step. Each epoch is an independent
/// seeded shuffle, so the batch depends only on (seed, step).
inline std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t step, std::size_t batch_size,
                                              std::size_t corpus_size) {
  require(step >= 1 && corpus_size >= 1, "batch_indices: need step >= 1 and a non-empty corpus");
  std::vector<std::size_t> out;
  std::size_t cached_epoch = SIZE_MAX;
  std::vector<std::size_t> perm(corpus_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t pos = (step - 1) * batch_size + i;
    const std::size_t epoch = pos / corpus_size;
    if (epoch != cached_epoch) {
      std::iota(perm.begin(), perm.end(), 0);
      std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + epoch);
      std::shuffle(perm.begin(), perm.end(), rng);
      cached_epoch = epoch;
    }
    out.push_back(perm[pos % corpus_size]);
  }
  return out;
}

inline Vocab cmd_build_vocab(const std::filesystem::path& corpus, std::size_t size, const std::filesystem::path& out) {
  auto records = load_corpus(corpus);
  std::vector<std::string> texts;
  for (const auto& r : records) {
    texts.push_back(r.source_text());
    texts.push_back(r.summary_text());
  }
  auto vocab = build_vocab(texts, size);
  vocab.save(out);
  return vocab;
}

/// Exclusive ownership of a checkpoint directory for one training process.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir) : path_(dir / ".lock") {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
      throw InputError(InputError::Kind::io, "checkpoint directory '" + dir.string() +
                                                 "' is locked by another run (remove " + path_.string() +
                                                 " if that run is gone)");
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
  }
  ~DirectoryLock() {
    ::close(fd_);
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

struct TrainOptions {
  std::optional<std::filesystem::path> resume;
  std::ostream* progress = nullptr;
};

struct TrainResult {
  std::size_t steps = 0;
  double last_loss = 0.0;
  std::filesystem::path checkpoint;
  std::filesystem::path log;
};

inline std::filesystem::path checkpoint_path(const RunConfig& cfg, std::size_t step) {
  char name[32];
  std::snprintf(name, sizeof name, "step-%07zu.ckpt", step);
  return std::filesystem::path(cfg.data.checkpoint_dir) / name;
}

inline std::filesystem::path loss_log_path(const RunConfig& cfg) {
  return std::filesystem::path(cfg.data.checkpoint_dir) / "loss.log";
}

/// Keys that may differ between the run that wrote a checkpoint and the
/// run that resumes from it.
inline bool resumable_key(const std::string& key) {
  static const std::vector<std::string> free{"steps",  "checkpoint_every", "log_every", "beam",          "min_len",
                                             "max_len", "coverage",        "vocab",     "checkpoint_dir", "train"};
  return std::find(free.begin(), free.end(), key) != free.end();
}

/// Trains per config; writes step checkpoints, latest.ckpt and a loss log
/// ("step<TAB>lr<TAB>loss" per step) into the checkpoint directory.
inline TrainResult cmd_train(const RunConfig& cfg, const TrainOptions& opts = {}) {
  cfg.validate();
  if (cfg.data.vocab.empty()) throw InputError(InputError::Kind::config, "config: 'vocab' path is not set");
  if (cfg.data.train.empty()) throw InputError(InputError::Kind::config, "config: 'train' path is not set");
  const Vocab vocab = Vocab::load(cfg.data.vocab);
  const auto records = load_corpus(cfg.data.train);
  std::vector<Example> examples;
  for (const auto& r : records) examples.push_back(make_example(r, vocab, cfg.data));

  RunConfig run = cfg;
  run.model.vocab_size = vocab.size();
  run.sync();
  Summarizer model(run.model, run.seed, make_provider(run, vocab.size()));
  auto opt = OptimizerState::for_parameters(
      model.parameters(), NoamSchedule{run.model.d_model, run.training.warmup, run.training.lr_scale});
  opt.beta1 = run.training.adam_beta1;
  opt.beta2 = run.training.adam_beta2;
  opt.epsilon = run.training.adam_eps;

  std::filesystem::create_directories(run.data.checkpoint_dir);
  DirectoryLock lock(run.data.checkpoint_dir);

  std::vector<std::string> kept_log;
  if (opts.resume) {
    const Checkpoint ck = load_checkpoint(*opts.resume);
    const RunConfig saved = ck.config();
    std::string diffs;
    for (const auto& f : config_schema())
      if (!resumable_key(f.key) && f.get(saved) != f.get(run)) diffs += "\n  " + f.key + ": " + f.get(saved) + " vs " + f.get(run);
    if (!diffs.empty())
      throw InputError(InputError::Kind::checkpoint, "cannot resume from '" + opts.resume->string() +
                                                         "', config differs (checkpoint vs current):" + diffs);
    if (ck.vocab != vocab.tokens())
      throw InputError(InputError::Kind::checkpoint, "cannot resume: vocab differs from the checkpoint's");
    restore_checkpoint(ck, model, &opt);
    std::ifstream old(loss_log_path(run));
    std::string line;
    while (std::getline(old, line)) {
      if (line.empty()) continue;
      if (line.starts_with("step") || std::stoull(line) <= opt.step) kept_log.push_back(line);
    }
  }

  std::ofstream log(loss_log_path(run), std::ios::trunc);
  if (!log) throw InputError(InputError::Kind::io, "cannot write loss log in '" + run.data.checkpoint_dir + "'");
  if (kept_log.empty()) kept_log.push_back("step\tlr\tloss");
  for (const auto& l : kept_log) log << l << '\n';

  TrainResult result;
  result.log = loss_log_path(run);
  auto save = [&](std::size_t step) {
    const auto ck = make_checkpoint(run, vocab, model, opt);
    result.checkpoint = checkpoint_path(run, step);
    save_checkpoint(result.checkpoint, ck);
    save_checkpoint(std::filesystem::path(run.data.checkpoint_dir) / "latest.ckpt", ck);
  };

  std::vector<Example> batch;
  char line[96];
  while (opt.step < run.training.steps) {
    batch.clear();
    for (auto i : batch_indices(run.seed, opt.step + 1, run.training.batch_size, examples.size()))
      batch.push_back(examples[i]);
    const double loss = model.train_step(batch, opt);
    const double lr = opt.schedule.rate(opt.step);
    std::snprintf(line, sizeof line, "%zu\t%.17g\t%.17g", opt.step, lr, loss);
    log << line << '\n';
    result.last_loss = loss;
    if (opts.progress && run.training.log_every && opt.step % run.training.log_every == 0)
      *opts.progress << "step " << opt.step << "  lr " << lr << "  loss " << loss << std::endl;
    if (run.training.checkpoint_every && opt.step % run.training.checkpoint_every == 0) save(opt.step);
  }
  log.flush();
  if (result.checkpoint.empty() || result.checkpoint != checkpoint_path(run, opt.step)) save(opt.step);
  result.steps = opt.step;
  return result;
}

/// A model restored from a checkpoint, ready to decode.
struct LoadedModel {
  RunConfig config;
  Vocab vocab;
  std::unique_ptr<Summarizer> model;
};

/// Restores a checkpoint. With `expected`, refuses when its model-shape
/// keys disagree with the checkpoint's.
inline LoadedModel load_model(const std::filesystem::path& checkpoint, const RunConfig* expected = nullptr) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  LoadedModel out{ck.config(), Vocab(ck.vocab), nullptr};
  if (expected) {
    auto diffs = model_shape_differences(out.config, *expected);
    if (!diffs.empty()) {
      std::string msg = "checkpoint '" + checkpoint.string() + "' was trained with a different model config:";
      for (const auto& d : diffs) msg += "\n  " + d + " (checkpoint vs given)";
      throw InputError(InputError::Kind::checkpoint, msg);
    }
  }
  out.config.model.vocab_size = out.vocab.size();
  out.config.sync();
  out.model = std::make_unique<Summarizer>(out.config.model, out.config.seed,
                                           make_provider(out.config, out.vocab.size()));
  restore_checkpoint(ck, *out.model);
  return out;
}

inline std::vector<TokenId> summarize_ids(LoadedModel& m, std::string_view text, const DecodingConfig& decoding) {
  const auto src = source_ids(text, m.vocab, m.config.data);
  return beam_search(*m.model, src, decoding);
}

inline std::string cmd_summarize(LoadedModel& m, std::string_view text, const DecodingConfig& decoding) {
  return detokenize(summarize_ids(m, text, decoding), m.vocab);
}

struct EvaluationResult {
  RougeReport report;
  std::vector<std::string> predictions;
};

/// Decodes every record and scores it against its summary, on WordPiece
/// tokens or (with `words`) on whitespace words of the detokenized text.
inline EvaluationResult cmd_evaluate(LoadedModel& m, const std::vector<Record>& records, const DecodingConfig& decoding,
                                     bool words) {
  RougeAccumulator acc;
  EvaluationResult out;
  for (const auto& r : records) {
    const auto pred = summarize_ids(m, r.source_text(), decoding);
    const std::string text = detokenize(pred, m.vocab);
    out.predictions.push_back(text);
    if (words) {
      const auto cand = pre_tokenize(text), ref = pre_tokenize(r.summary_text());
      acc.add(rouge_all<std::string>(cand, ref));
    } else {
      const auto ref = tokenize_plain(r.summary_text(), m.vocab);
      acc.add(rouge_all<TokenId>(pred, ref));
    }
  }
  out.report = acc.mean();
  return out;
}

/// Head or tail baseline. Sentences are scored as words, or as WordPiece
/// tokens when a vocab is given.
inline RougeReport cmd_leadtail(const std::vector<Record>& records, Direction direction, const Vocab* vocab = nullptr) {
  std::vector<SegmentedDocument> docs;
  auto convert = [&](std::vector<std::vector<std::string>> sents) {
    if (!vocab) return sents;
    for (auto& s : sents) {
      std::vector<std::string> pieces;
      for (const auto& w : s)
        for (TokenId id : wordpiece(w, *vocab)) pieces.push_back(vocab->token(id));
      s = std::move(pieces);
    }
    return sents;
  };
  for (const auto& r : records) {
    SegmentedDocument d{convert(sentences_of(r.source)), convert(sentences_of(r.summary))};
    if (d.summary.empty())
      throw InputError(InputError::Kind::corpus, "leadtail: a record has an empty summary");
    docs.push_back(std::move(d));
  }
  return lead_tail_analysis(docs, direction);
}

}  // namespace convsum
