#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "convsum/decoding.hpp"
#include "convsum/model.hpp"

namespace convsum {

enum class ProviderKind { none, stub, stub_context_free };

inline std::string to_string(ProviderKind k) {
  switch (k) {
    case ProviderKind::none: return "none";
    case ProviderKind::stub: return "stub";
    case ProviderKind::stub_context_free: return "stub_context_free";
  }
  return "?";
}

struct ProviderConfig {
  ProviderKind kind = ProviderKind::none;
  std::size_t width = 32;
  std::size_t max_window = 512;
  std::uint64_t seed = 7;
  bool operator==(const ProviderConfig&) const = default;
};

struct TrainingConfig {
  std::size_t steps = 1000;
  std::size_t batch_size = 16;
  std::size_t warmup = 4000;
  double lr_scale = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.998;
  double adam_eps = 1e-9;
  std::size_t checkpoint_every = 0;  // 0: only at the end
  std::size_t log_every = 10;        // progress lines on stdout
  bool operator==(const TrainingConfig&) const = default;
};

struct DataConfig {
  std::string vocab;
  std::string train;
  std::string checkpoint_dir = "checkpoints";
  std::size_t src_max_len = 512;  // counts the [CLS] marker
  std::size_t tgt_max_len = 100;  // summary tokens, [BOS]/[EOS] excluded
  bool full_text = false;         // no source truncation
  bool operator==(const DataConfig&) const = default;
};

/// Everything a run needs. model.vocab_size and model.provider_width are
/// derived (from the vocab file and the provider section).
struct RunConfig {
  ModelConfig model;
  ProviderConfig provider;
  DecodingConfig decoding;
  TrainingConfig training;
  DataConfig data;
  std::uint64_t seed = 1;

  void sync() { model.provider_width = provider.kind == ProviderKind::none ? 0 : provider.width; }

  /// Checks everything except the vocab size, which is only known once the
  /// vocab is loaded.
  void validate() const {
    try {
      model.attention.validate();
      model.windowing.validate();
      ModelConfig m = model;
      m.vocab_size = std::max<std::size_t>(m.vocab_size, 1);
      m.validate();
      decoding.validate();
    } catch (const ContractViolation& e) {
      throw InputError(InputError::Kind::config, std::string("invalid config: ") + e.what());
    }
    auto bad = [](const std::string& what) { throw InputError(InputError::Kind::config, "invalid config: " + what); };
    if (model.needs_provider() && provider.kind == ProviderKind::none)
      bad("integration '" + to_string(model.integration) + "'" +
          (model.decoder_conditioning ? " with decoder_conditioning" : "") + " needs provider = stub");
    if (provider.kind != ProviderKind::none && model.windowing.window > provider.max_window)
      bad("window " + std::to_string(model.windowing.window) + " exceeds provider_max_window " +
          std::to_string(provider.max_window));
    if (training.batch_size == 0) bad("batch_size must be >= 1");
    if (training.warmup == 0) bad("warmup must be >= 1");
    if (!(training.lr_scale > 0.0)) bad("lr_scale must be > 0");
    if (!(training.adam_beta1 >= 0.0 && training.adam_beta1 < 1.0)) bad("adam_beta1 must be in [0, 1)");
    if (!(training.adam_beta2 >= 0.0 && training.adam_beta2 < 1.0)) bad("adam_beta2 must be in [0, 1)");
    if (!(training.adam_eps > 0.0)) bad("adam_eps must be > 0");
    if (data.src_max_len < 2) bad("src_max_len must be >= 2");
    if (data.tgt_max_len < 1) bad("tgt_max_len must be >= 1");
  }

  bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string fmt_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || p != value.data() + value.size())
    throw InputError(InputError::Kind::config, "config key '" + key + "': cannot parse '" + value + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw InputError(InputError::Kind::config, "config key '" + key + "': expected true or false, got '" + value + "'");
}

inline std::vector<std::size_t> parse_list(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  if (value.empty() || value == "none") return out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<std::size_t>(key, trim(item)));
  return out;
}

inline std::string fmt_list(const std::vector<std::size_t>& v) {
  if (v.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

}  // namespace detail

/// One documented config key.
struct ConfigField {
  std::string key;
  std::string doc;
  bool model_shape;  // must agree between a checkpoint and a config
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline const std::vector<ConfigField>& config_schema() {
  using namespace detail;
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f;
    auto size_field = [&](std::string key, std::string doc, bool shape, auto member) {
      f.push_back({key, std::move(doc), shape,
                   [member, key](RunConfig& c, const std::string& v) { member(c) = parse_number<std::size_t>(key, v); },
                   [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); }});
    };
    auto real_field = [&](std::string key, std::string doc, bool shape, auto member) {
      f.push_back({key, std::move(doc), shape,
                   [member, key](RunConfig& c, const std::string& v) { member(c) = parse_number<double>(key, v); },
                   [member](const RunConfig& c) { return fmt_double(member(const_cast<RunConfig&>(c))); }});
    };
    auto bool_field = [&](std::string key, std::string doc, bool shape, auto member) {
      f.push_back({key, std::move(doc), shape,
                   [member, key](RunConfig& c, const std::string& v) { member(c) = parse_bool(key, v); },
                   [member](const RunConfig& c) { return member(const_cast<RunConfig&>(c)) ? "true" : "false"; }});
    };
    auto text_field = [&](std::string key, std::string doc, auto member) {
      f.push_back({key, std::move(doc), false, [member](RunConfig& c, const std::string& v) { member(c) = v; },
                   [member](const RunConfig& c) { return member(const_cast<RunConfig&>(c)); }});
    };

    size_field("d_model", "model width", true, [](RunConfig& c) -> auto& { return c.model.d_model; });
    size_field("encoder_layers", "encoder depth", true, [](RunConfig& c) -> auto& { return c.model.encoder_layers; });
    size_field("decoder_layers", "decoder depth", true, [](RunConfig& c) -> auto& { return c.model.decoder_layers; });
    size_field("ff_inner", "feed-forward hidden width", true, [](RunConfig& c) -> auto& { return c.model.ff_inner; });
    size_field("heads", "attention heads", true, [](RunConfig& c) -> auto& { return c.model.attention.heads; });
    size_field("token_kernel", "token window of conv attention (odd)", true,
               [](RunConfig& c) -> auto& { return c.model.attention.token_kernel; });
    size_field("head_kernel", "head window of conv attention (odd, 1 = none)", true,
               [](RunConfig& c) -> auto& { return c.model.attention.head_kernel; });
    bool_field("circular_heads", "head window wraps around", true,
               [](RunConfig& c) -> auto& { return c.model.attention.circular_heads; });
    f.push_back({"conv_layers", "encoder layers using conv attention, comma list or none", true,
                 [](RunConfig& c, const std::string& v) { c.model.attention.conv_layers = parse_list("conv_layers", v); },
                 [](const RunConfig& c) { return fmt_list(c.model.attention.conv_layers); }});
    real_field("dropout", "dropout rate", false, [](RunConfig& c) -> auto& { return c.model.dropout; });
    real_field("label_smoothing", "label smoothing epsilon", false,
               [](RunConfig& c) -> auto& { return c.model.label_smoothing; });
    f.push_back({"integration", "provider integration: none, stacking, concatenation", true,
                 [](RunConfig& c, const std::string& v) {
                   if (v == "none") c.model.integration = IntegrationMode::none;
                   else if (v == "stacking") c.model.integration = IntegrationMode::stacking;
                   else if (v == "concatenation") c.model.integration = IntegrationMode::concatenation;
                   else throw InputError(InputError::Kind::config, "config key 'integration': unknown mode '" + v + "'");
                 },
                 [](const RunConfig& c) { return to_string(c.model.integration); }});
    bool_field("copy", "pointer-generator output layer", true, [](RunConfig& c) -> auto& { return c.model.copy; });
    bool_field("decoder_conditioning", "decoder inputs from the provider's static table", true,
               [](RunConfig& c) -> auto& { return c.model.decoder_conditioning; });
    f.push_back({"provider", "embedding provider: none, stub, stub_context_free", true,
                 [](RunConfig& c, const std::string& v) {
                   if (v == "none") c.provider.kind = ProviderKind::none;
                   else if (v == "stub") c.provider.kind = ProviderKind::stub;
                   else if (v == "stub_context_free") c.provider.kind = ProviderKind::stub_context_free;
                   else throw InputError(InputError::Kind::config, "config key 'provider': unknown provider '" + v + "'");
                 },
                 [](const RunConfig& c) { return to_string(c.provider.kind); }});
    size_field("provider_width", "provider embedding width", true, [](RunConfig& c) -> auto& { return c.provider.width; });
    size_field("provider_max_window", "longest input the provider accepts", true,
               [](RunConfig& c) -> auto& { return c.provider.max_window; });
    f.push_back({"provider_seed", "seed of the stub provider tables", true,
                 [](RunConfig& c, const std::string& v) { c.provider.seed = parse_number<std::uint64_t>("provider_seed", v); },
                 [](const RunConfig& c) { return std::to_string(c.provider.seed); }});
    size_field("window", "provider window length for long inputs", true,
               [](RunConfig& c) -> auto& { return c.model.windowing.window; });
    size_field("stride", "provider window stride", true, [](RunConfig& c) -> auto& { return c.model.windowing.stride; });
    size_field("src_max_len", "source truncation length including [CLS]", false,
               [](RunConfig& c) -> auto& { return c.data.src_max_len; });
    size_field("tgt_max_len", "summary truncation length", false, [](RunConfig& c) -> auto& { return c.data.tgt_max_len; });
    bool_field("full_text", "do not truncate sources", false, [](RunConfig& c) -> auto& { return c.data.full_text; });
    size_field("steps", "training steps", false, [](RunConfig& c) -> auto& { return c.training.steps; });
    size_field("batch_size", "examples per step", false, [](RunConfig& c) -> auto& { return c.training.batch_size; });
    size_field("warmup", "learning-rate warmup steps", false, [](RunConfig& c) -> auto& { return c.training.warmup; });
    real_field("lr_scale", "factor on the learning-rate schedule", false,
               [](RunConfig& c) -> auto& { return c.training.lr_scale; });
    real_field("adam_beta1", "Adam first-moment decay", false, [](RunConfig& c) -> auto& { return c.training.adam_beta1; });
    real_field("adam_beta2", "Adam second-moment decay", false, [](RunConfig& c) -> auto& { return c.training.adam_beta2; });
    real_field("adam_eps", "Adam epsilon", false, [](RunConfig& c) -> auto& { return c.training.adam_eps; });
    size_field("checkpoint_every", "steps between checkpoints, 0 = end only", false,
               [](RunConfig& c) -> auto& { return c.training.checkpoint_every; });
    size_field("log_every", "steps between progress lines on stdout", false,
               [](RunConfig& c) -> auto& { return c.training.log_every; });
    size_field("beam", "beam size", false, [](RunConfig& c) -> auto& { return c.decoding.beam; });
    size_field("min_len", "minimum summary length in tokens", false,
               [](RunConfig& c) -> auto& { return c.decoding.min_length; });
    size_field("max_len", "maximum summary length in tokens", false,
               [](RunConfig& c) -> auto& { return c.decoding.max_length; });
    real_field("coverage", "coverage penalty weight", false,
               [](RunConfig& c) -> auto& { return c.decoding.coverage_weight; });
    f.push_back({"seed", "seed for initialisation, dropout and data order", false,
                 [](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    text_field("vocab", "vocab file, one token per line", [](RunConfig& c) -> auto& { return c.data.vocab; });
    text_field("train", "training corpus (JSONL)", [](RunConfig& c) -> auto& { return c.data.train; });
    text_field("checkpoint_dir", "directory for checkpoints and the loss log",
               [](RunConfig& c) -> auto& { return c.data.checkpoint_dir; });
    return f;
  }();
  return fields;
}

inline const ConfigField* find_config_field(std::string_view key) {
  for (const auto& f : config_schema())
    if (f.key == key) return &f;
  return nullptr;
}

inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto* f = find_config_field(key);
  if (!f) throw InputError(InputError::Kind::config, "unknown config key '" + key + "'");
  f->set(cfg, value);
  cfg.sync();
}

/// Parses `key = value` lines; '#' starts a comment. Unknown keys and
/// repeated keys are errors.
inline RunConfig parse_config(std::string_view text, const std::string& origin = "config") {
  RunConfig cfg;
  std::vector<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw InputError(InputError::Kind::config, where + "expected 'key = value'");
    const std::string key = detail::trim(body.substr(0, eq)), value = detail::trim(body.substr(eq + 1));
    if (std::find(seen.begin(), seen.end(), key) != seen.end())
      throw InputError(InputError::Kind::config, where + "key '" + key + "' given twice");
    seen.push_back(key);
    try {
      set_config_value(cfg, key, value);
    } catch (const InputError& e) {
      throw InputError(InputError::Kind::config, where + e.what());
    }
  }
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(InputError::Kind::io, "cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

/// Canonical text: every key in schema order. parse_config(to_text(c)) == c.
inline std::string to_text(const RunConfig& cfg, bool model_shape_only = false) {
  std::string out;
  for (const auto& f : config_schema())
    if (!model_shape_only || f.model_shape) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

/// Keys whose values differ, restricted to model-shape keys.
inline std::vector<std::string> model_shape_differences(const RunConfig& a, const RunConfig& b) {
  std::vector<std::string> out;
  for (const auto& f : config_schema())
    if (f.model_shape && f.get(a) != f.get(b)) out.push_back(f.key + ": " + f.get(a) + " vs " + f.get(b));
  return out;
}

}  // namespace convsum
