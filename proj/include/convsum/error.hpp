#pragma once

#include <stdexcept>
#include <string>

namespace convsum {

/// Caller broke a documented precondition (shape mismatch, id out of range, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Input is well-formed but numerically degenerate, e.g. a fully masked softmax row.
class DegenerateInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A NaN or Inf showed up in a forward value or gradient. `op()` names the producer.
class NonFiniteError : public std::runtime_error {
 public:
  explicit NonFiniteError(std::string op)
      : std::runtime_error("non-finite value produced by '" + op + "'"), op_(std::move(op)) {}
  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

/// Bad config, corpus or checkpoint content. Carries a category for CLI exit codes.
class InputError : public std::runtime_error {
 public:
  enum class Kind { config, corpus, vocab, checkpoint, io };
  InputError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractViolation(what);
}

}  // namespace convsum
