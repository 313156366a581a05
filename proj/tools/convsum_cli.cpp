#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "convsum/convsum.hpp"

using namespace convsum;

namespace {

// Exit codes by error category.
enum Exit : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kConfig = 3,
  kCorpus = 4,
  kVocab = 5,
  kCheckpoint = 6,
  kIo = 7,
  kNumeric = 8,
};

int exit_code(InputError::Kind k) {
  switch (k) {
    case InputError::Kind::config: return kConfig;
    case InputError::Kind::corpus: return kCorpus;
    case InputError::Kind::vocab: return kVocab;
    case InputError::Kind::checkpoint: return kCheckpoint;
    case InputError::Kind::io: return kIo;
  }
  return kInternal;
}

const char* category(InputError::Kind k) {
  switch (k) {
    case InputError::Kind::config: return "config error";
    case InputError::Kind::corpus: return "corpus error";
    case InputError::Kind::vocab: return "vocab error";
    case InputError::Kind::checkpoint: return "checkpoint error";
    case InputError::Kind::io: return "i/o error";
  }
  return "error";
}

struct DecodingFlags {
  std::optional<std::size_t> beam, min_len, max_len;
  std::optional<double> coverage;

  void attach(CLI::App* app) {
    app->add_option("--beam", beam, "beam size");
    app->add_option("--min-len", min_len, "minimum summary length in tokens");
    app->add_option("--max-len", max_len, "maximum summary length in tokens");
    app->add_option("--coverage", coverage, "coverage penalty weight");
  }
  DecodingConfig apply(DecodingConfig d) const {
    if (beam) d.beam = *beam;
    if (min_len) d.min_length = *min_len;
    if (max_len) d.max_length = *max_len;
    if (coverage) d.coverage_weight = *coverage;
    try {
      d.validate();
    } catch (const ContractViolation& e) {
      throw InputError(InputError::Kind::config, e.what());
    }
    return d;
  }
};

ReportFormat parse_format(const std::string& f) { return f == "kv" ? ReportFormat::kv : ReportFormat::text; }

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError(InputError::Kind::io, "cannot open input '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Abstractive summariser: convolutional self-attention Transformer with copy mechanism"};
  app.require_subcommand(1);

  // build-vocab
  auto* bv = app.add_subcommand("build-vocab", "build a WordPiece vocab from a JSONL corpus");
  std::string bv_corpus, bv_out;
  std::size_t bv_size = 8000;
  bv->add_option("--corpus", bv_corpus, "JSONL corpus with source/summary")->required();
  bv->add_option("--size", bv_size, "vocab size")->capture_default_str();
  bv->add_option("--out", bv_out, "output vocab file")->required();

  // train: every config key is also a flag
  auto* tr = app.add_subcommand("train", "train a model from a config file");
  std::string tr_config, tr_resume;
  tr->add_option("--config", tr_config, "config file (key = value lines)");
  tr->add_option("--resume", tr_resume, "checkpoint to resume from");
  std::map<std::string, std::string> overrides;
  for (const auto& f : config_schema())
    tr->add_option_function<std::string>(
        "--" + f.key, [&overrides, key = f.key](const std::string& v) { overrides[key] = v; }, f.doc);

  // summarize
  auto* su = app.add_subcommand("summarize", "summarise one text");
  std::string su_ckpt, su_config, su_input, su_text;
  DecodingFlags su_dec;
  su->add_option("--checkpoint", su_ckpt, "checkpoint file")->required();
  su->add_option("--config", su_config, "config to check the checkpoint against");
  auto* in_opt = su->add_option("--input", su_input, "file holding the text ('-' for stdin)");
  su->add_option("--text", su_text, "text given inline")->excludes(in_opt);
  su_dec.attach(su);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "ROUGE of model summaries on a JSONL test set");
  std::string ev_ckpt, ev_config, ev_test, ev_format = "text", ev_pred;
  bool ev_words = false;
  DecodingFlags ev_dec;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--config", ev_config, "config to check the checkpoint against");
  ev->add_option("--test", ev_test, "JSONL test set")->required();
  ev->add_flag("--words", ev_words, "score whitespace words instead of WordPiece tokens");
  ev->add_option("--format", ev_format, "text or kv")->check(CLI::IsMember({"text", "kv"}));
  ev->add_option("--predictions", ev_pred, "write one summary per line to this file");
  ev_dec.attach(ev);

  // leadtail
  auto* lt = app.add_subcommand("leadtail", "ROUGE of the first or last n sentences against the gold summary");
  std::string lt_corpus, lt_direction = "both", lt_vocab, lt_format = "text";
  lt->add_option("--corpus", lt_corpus, "JSONL corpus")->required();
  lt->add_option("--direction", lt_direction, "head, tail or both")->check(CLI::IsMember({"head", "tail", "both"}));
  lt->add_option("--vocab", lt_vocab, "score WordPiece tokens of this vocab instead of words");
  lt->add_option("--format", lt_format, "text or kv")->check(CLI::IsMember({"text", "kv"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*bv) {
      auto v = cmd_build_vocab(bv_corpus, bv_size, bv_out);
      std::cout << "wrote " << v.size() << " tokens to " << bv_out << "\n";
    } else if (*tr) {
      RunConfig cfg = tr_config.empty() ? RunConfig{} : load_config(tr_config);
      for (const auto& [k, v] : overrides) set_config_value(cfg, k, v);
      TrainOptions opts;
      if (!tr_resume.empty()) opts.resume = tr_resume;
      opts.progress = &std::cout;
      auto r = cmd_train(cfg, opts);
      std::cout << "trained to step " << r.steps << ", last loss " << r.last_loss << "\ncheckpoint "
                << r.checkpoint.string() << "\nloss log " << r.log.string() << "\n";
    } else if (*su) {
      std::optional<RunConfig> expected;
      if (!su_config.empty()) expected = load_config(su_config);
      auto m = load_model(su_ckpt, expected ? &*expected : nullptr);
      std::string text = su_text;
      if (su_input == "-") {
        std::stringstream ss;
        ss << std::cin.rdbuf();
        text = ss.str();
      } else if (!su_input.empty()) {
        text = read_file(su_input);
      }
      if (text.find_first_not_of(" \t\r\n") == std::string::npos)
        throw InputError(InputError::Kind::io, "summarize: no input text (use --text or --input)");
      std::cout << cmd_summarize(m, text, su_dec.apply(expected ? expected->decoding : m.config.decoding)) << "\n";
    } else if (*ev) {
      std::optional<RunConfig> expected;
      if (!ev_config.empty()) expected = load_config(ev_config);
      auto m = load_model(ev_ckpt, expected ? &*expected : nullptr);
      auto records = load_corpus(ev_test);
      auto r = cmd_evaluate(m, records, ev_dec.apply(expected ? expected->decoding : m.config.decoding), ev_words);
      if (!ev_pred.empty()) {
        std::ofstream out(ev_pred);
        if (!out) throw InputError(InputError::Kind::io, "cannot write '" + ev_pred + "'");
        for (const auto& p : r.predictions) out << p << "\n";
      }
      std::cout << format_report(r.report, parse_format(ev_format));
    } else if (*lt) {
      auto records = load_corpus(lt_corpus);
      std::optional<Vocab> vocab;
      if (!lt_vocab.empty()) vocab = Vocab::load(lt_vocab);
      const auto fmt = parse_format(lt_format);
      for (auto [name, dir] : {std::pair{"head", Direction::head}, std::pair{"tail", Direction::tail}}) {
        if (lt_direction != "both" && lt_direction != name) continue;
        auto report = cmd_leadtail(records, dir, vocab ? &*vocab : nullptr);
        if (fmt == ReportFormat::kv) {
          std::istringstream lines(format_report(report, fmt));
          std::string line;
          while (std::getline(lines, line)) std::cout << name << "." << line << "\n";
        } else {
          std::cout << "[" << name << "]\n" << format_report(report, fmt);
        }
      }
    }
  } catch (const InputError& e) {
    std::cerr << category(e.kind()) << ": " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const NonFiniteError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumeric;
  } catch (const DegenerateInput& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kOk;
}
