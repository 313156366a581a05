#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "convsum/config.hpp"
#include "convsum/model.hpp"
#include "convsum/optim.hpp"
#include "convsum/tokenizer.hpp"

namespace convsum {

/// Everything needed to resume training or decode: config, vocab,
/// parameters, optimizer moments and the dropout generator.
struct Checkpoint {
  static constexpr char kMagic[8] = {'C', 'V', 'S', 'M', 'C', 'K', 'P', 'T'};
  static constexpr std::uint32_t kVersion = 1;

  std::string config_text;
  std::vector<std::string> vocab;
  std::vector<std::string> names;
  std::vector<Shape> shapes;
  std::vector<std::vector<double>> values;
  std::size_t step = 0;
  std::vector<std::vector<double>> first_moment, second_moment;
  std::string dropout_rng;

  RunConfig config() const { return parse_config(config_text, "checkpoint config"); }
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

class ByteWriter {
 public:
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  void doubles(const std::vector<double>& v) {
    u64(v.size());
    raw(v.data(), v.size() * sizeof(double));
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const char*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(const std::string& data, std::string origin) : data_(data), origin_(std::move(origin)) {}
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::string str() {
    const auto n = length(1);
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  std::vector<double> doubles() {
    std::vector<double> v(length(sizeof(double)));
    raw(v.data(), v.size() * sizeof(double));
    return v;
  }
  void raw(void* p, std::size_t n) {
    if (n > data_.size() - pos_) fail("truncated file");
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t position() const { return pos_; }
  [[noreturn]] void fail(const std::string& what) const {
    throw InputError(InputError::Kind::checkpoint, "checkpoint '" + origin_ + "': " + what);
  }

 private:
  std::size_t length(std::size_t unit) {
    const auto n = u64();
    if (n > (data_.size() - pos_) / unit) fail("corrupt length field");
    return static_cast<std::size_t>(n);
  }
  const std::string& data_;
  std::string origin_;
  std::size_t pos_ = 0;
};

inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) h = (h ^ c) * 1099511628211ull;
  return h;
}

}  // namespace detail

inline Checkpoint make_checkpoint(const RunConfig& cfg, const Vocab& vocab, Summarizer& model,
                                  const OptimizerState& opt) {
  Checkpoint c;
  c.config_text = to_text(cfg);
  c.vocab = vocab.tokens();
  for (const auto& [name, t] : model.parameters()) {
    c.names.push_back(name);
    c.shapes.push_back(t.shape());
    c.values.emplace_back(t.values().begin(), t.values().end());
  }
  c.step = opt.step;
  c.first_moment = opt.first_moment;
  c.second_moment = opt.second_moment;
  std::ostringstream rng;
  rng << model.dropout_rng();
  c.dropout_rng = rng.str();
  return c;
}

/// Writes atomically: a temporary file in the same directory is renamed
/// over `path`.
inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  detail::ByteWriter w;
  w.raw(Checkpoint::kMagic, sizeof Checkpoint::kMagic);
  w.u64(Checkpoint::kVersion);
  w.str(c.config_text);
  w.u64(c.vocab.size());
  for (const auto& t : c.vocab) w.str(t);
  w.u64(c.names.size());
  for (std::size_t i = 0; i < c.names.size(); ++i) {
    w.str(c.names[i]);
    w.u64(c.shapes[i].size());
    for (auto d : c.shapes[i]) w.u64(d);
    w.doubles(c.values[i]);
  }
  w.u64(c.step);
  w.u64(c.first_moment.size());
  for (std::size_t i = 0; i < c.first_moment.size(); ++i) {
    w.doubles(c.first_moment[i]);
    w.doubles(c.second_moment[i]);
  }
  w.str(c.dropout_rng);
  const std::uint64_t sum = detail::fnv1a(w.bytes());
  w.u64(sum);

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError(InputError::Kind::io, "cannot write checkpoint '" + tmp.string() + "'");
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw InputError(InputError::Kind::io, "write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(InputError::Kind::io, "cannot open checkpoint '" + path.string() + "'");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  detail::ByteReader r(data, path.string());
  if (data.size() < sizeof Checkpoint::kMagic + 16) r.fail("file too short");
  const std::uint64_t stored = [&] {
    std::uint64_t v;
    std::memcpy(&v, data.data() + data.size() - sizeof v, sizeof v);
    return v;
  }();
  if (detail::fnv1a(std::string_view(data).substr(0, data.size() - 8)) != stored) r.fail("checksum mismatch");
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, Checkpoint::kMagic, sizeof magic) != 0) r.fail("not a checkpoint file");
  if (const auto v = r.u64(); v != Checkpoint::kVersion) r.fail("unsupported version " + std::to_string(v));

  Checkpoint c;
  c.config_text = r.str();
  c.vocab.resize(r.u64());
  for (auto& t : c.vocab) t = r.str();
  const auto n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    c.names.push_back(r.str());
    Shape s(r.u64());
    for (auto& d : s) d = r.u64();
    c.shapes.push_back(s);
    c.values.push_back(r.doubles());
    if (c.values.back().size() != shape_size(s)) r.fail("parameter " + c.names.back() + " has wrong size");
  }
  c.step = r.u64();
  const auto m = r.u64();
  for (std::uint64_t i = 0; i < m; ++i) {
    c.first_moment.push_back(r.doubles());
    c.second_moment.push_back(r.doubles());
  }
  c.dropout_rng = r.str();
  if (r.position() + 8 != data.size()) r.fail("trailing bytes");
  return c;
}

/// Copies parameters, optimizer moments and generator state into a model
/// built from the same config. Names and shapes must match one to one.
inline void restore_checkpoint(const Checkpoint& c, Summarizer& model, OptimizerState* opt = nullptr) {
  auto& params = model.parameters();
  auto fail = [](const std::string& what) {
    throw InputError(InputError::Kind::checkpoint, "checkpoint does not match the model: " + what);
  };
  if (c.names.size() != params.size())
    fail(std::to_string(c.names.size()) + " parameters stored, model has " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (c.names[i] != params.name(i)) fail("expected " + params.name(i) + ", found " + c.names[i]);
    if (c.shapes[i] != params[i].shape())
      fail(c.names[i] + " has shape " + shape_str(c.shapes[i]) + ", model wants " + shape_str(params[i].shape()));
    auto dst = params[i].mutable_values();
    std::copy(c.values[i].begin(), c.values[i].end(), dst.begin());
  }
  std::istringstream rng(c.dropout_rng);
  rng >> model.dropout_rng();
  if (!rng) fail("unreadable generator state");
  if (opt) {
    if (c.first_moment.size() != params.size()) fail("optimizer state size");
    for (std::size_t i = 0; i < params.size(); ++i)
      if (c.first_moment[i].size() != params[i].size() || c.second_moment[i].size() != params[i].size())
        fail("optimizer moments of " + c.names[i]);
    opt->first_moment = c.first_moment;
    opt->second_moment = c.second_moment;
    opt->step = c.step;
  }
}

}  // namespace convsum
