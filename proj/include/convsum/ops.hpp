#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "convsum/tensor.hpp"

namespace convsum {

using TokenId = std::int32_t;

/// Row-by-column validity mask for softmax. `true` = may receive weight.
class Mask {
 public:
  Mask() = default;
  Mask(std::size_t rows, std::size_t cols, bool fill = true)
      : rows_(rows), cols_(cols), valid_(rows * cols, fill ? 1 : 0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool operator()(std::size_t r, std::size_t c) const { return valid_[r * cols_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v) { valid_[r * cols_ + c] = v ? 1 : 0; }
  bool all_valid() const {
    return std::all_of(valid_.begin(), valid_.end(), [](std::uint8_t v) { return v != 0; });
  }

  /// Places `times` copies of this mask side by side.
  Mask tile_cols(std::size_t times) const {
    Mask out(rows_, cols_ * times, false);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t t = 0; t < times; ++t)
        for (std::size_t c = 0; c < cols_; ++c) out.set(r, t * cols_ + c, (*this)(r, c));
    return out;
  }

  static Mask causal(std::size_t n) {
    Mask m(n, n, false);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) m.set(i, j, true);
    return m;
  }

  bool operator==(const Mask&) const = default;

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<std::uint8_t> valid_;
};

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

inline ConstMap as_mat(const std::vector<double>& v, std::size_t r, std::size_t c) {
  return ConstMap(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
inline MutMap as_mat(std::vector<double>& v, std::size_t r, std::size_t c) {
  return MutMap(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

inline void require_2d(const Tensor& t, const char* op) {
  if (t.dim() != 2) throw ContractViolation(std::string(op) + ": expected 2-D tensor, got " + shape_str(t.shape()));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ContractViolation(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                            shape_str(b.shape()));
}

inline Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

/// a[m,k] * b[k,n]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_2d(a, "matmul");
  detail::require_2d(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw ContractViolation("matmul: inner dimensions differ " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
  std::vector<double> out(m * n);
  detail::as_mat(out, m, n).noalias() = detail::as_mat(a.node().value, m, k) * detail::as_mat(b.node().value, k, n);
  return detail::make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    auto& A = detail::parent(self, 0);
    auto& B = detail::parent(self, 1);
    auto dC = detail::as_mat(std::as_const(self.grad), m, n);
    if (A.requires_grad)
      detail::as_mat(A.grad_buffer(), m, k).noalias() += dC * detail::as_mat(std::as_const(B.value), k, n).transpose();
    if (B.requires_grad)
      detail::as_mat(B.grad_buffer(), k, n).noalias() += detail::as_mat(std::as_const(A.value), m, k).transpose() * dC;
  });
}

/// a[m,k] * b[n,k]^T
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  detail::require_2d(a, "matmul_nt");
  detail::require_2d(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k)
    throw ContractViolation("matmul_nt: inner dimensions differ " + shape_str(a.shape()) + " * " +
                            shape_str(b.shape()) + "^T");
  std::vector<double> out(m * n);
  detail::as_mat(out, m, n).noalias() =
      detail::as_mat(a.node().value, m, k) * detail::as_mat(b.node().value, n, k).transpose();
  return detail::make_result("matmul_nt", {m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    auto& A = detail::parent(self, 0);
    auto& B = detail::parent(self, 1);
    auto dC = detail::as_mat(std::as_const(self.grad), m, n);
    if (A.requires_grad)
      detail::as_mat(A.grad_buffer(), m, k).noalias() += dC * detail::as_mat(std::as_const(B.value), n, k);
    if (B.requires_grad)
      detail::as_mat(B.grad_buffer(), n, k).noalias() += dC.transpose() * detail::as_mat(std::as_const(A.value), m, k);
  });
}

/// x[r,in] * weight[in,out] + bias[out]
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  detail::require_2d(x, "linear");
  detail::require_2d(weight, "linear");
  const std::size_t r = x.rows(), in = x.cols(), out_dim = weight.cols();
  if (weight.rows() != in || bias.size() != out_dim)
    throw ContractViolation("linear: shapes " + shape_str(x.shape()) + ", " + shape_str(weight.shape()) + ", " +
                            shape_str(bias.shape()) + " do not conform");
  std::vector<double> out(r * out_dim);
  auto Y = detail::as_mat(out, r, out_dim);
  Y.noalias() = detail::as_mat(x.node().value, r, in) * detail::as_mat(weight.node().value, in, out_dim);
  Y.rowwise() += detail::as_mat(bias.node().value, 1, out_dim).row(0);
  return detail::make_result("linear", {r, out_dim}, std::move(out), {x, weight, bias},
                             [r, in, out_dim](detail::Node& self) {
                               auto& X = detail::parent(self, 0);
                               auto& W = detail::parent(self, 1);
                               auto& b = detail::parent(self, 2);
                               auto dY = detail::as_mat(std::as_const(self.grad), r, out_dim);
                               if (X.requires_grad)
                                 detail::as_mat(X.grad_buffer(), r, in).noalias() +=
                                     dY * detail::as_mat(std::as_const(W.value), in, out_dim).transpose();
                               if (W.requires_grad)
                                 detail::as_mat(W.grad_buffer(), in, out_dim).noalias() +=
                                     detail::as_mat(std::as_const(X.value), r, in).transpose() * dY;
                               if (b.requires_grad)
                                 detail::as_mat(b.grad_buffer(), 1, out_dim).row(0) += dY.colwise().sum();
                             });
}

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return detail::make_result("add", a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      auto& P = detail::parent(self, p);
      if (!P.requires_grad) continue;
      auto& g = P.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return detail::make_result("mul", a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    auto& A = detail::parent(self, 0);
    auto& B = detail::parent(self, 1);
    if (A.requires_grad) {
      auto& g = A.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * B.value[i];
    }
    if (B.requires_grad) {
      auto& g = B.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * A.value[i];
    }
  });
}

/// factor * x + offset
inline Tensor affine(const Tensor& x, double factor, double offset = 0.0) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * x.values()[i] + offset;
  return detail::make_result("affine", x.shape(), std::move(out), {x}, [factor](detail::Node& self) {
    auto& g = detail::parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

inline Tensor scale(const Tensor& x, double factor) { return affine(x, factor, 0.0); }

inline Tensor relu(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, x.values()[i]);
  return detail::make_result("relu", x.shape(), std::move(out), {x}, [](detail::Node& self) {
    auto& X = detail::parent(self, 0);
    auto& g = X.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (X.value[i] > 0.0) g[i] += self.grad[i];
  });
}

inline Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x.values()[i]));
  return detail::make_result("sigmoid", x.shape(), std::move(out), {x}, [](detail::Node& self) {
    auto& g = detail::parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * self.value[i] * (1.0 - self.value[i]);
  });
}

inline Tensor log(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(x.values()[i]);
  return detail::make_result("log", x.shape(), std::move(out), {x}, [](detail::Node& self) {
    auto& X = detail::parent(self, 0);
    auto& g = X.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / X.value[i];
  });
}

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return detail::make_result("sum", {}, {s}, {x}, [](detail::Node& self) {
    auto& g = detail::parent(self, 0).grad_buffer();
    for (double& v : g) v += self.grad[0];
  });
}

// ---------------------------------------------------------------------------
// Normalisation

/// Row-wise softmax over the last axis of a 2-D tensor. Masked entries are
/// exactly zero and the remaining entries of each row sum to one.
inline Tensor softmax(const Tensor& x, const Mask* mask = nullptr) {
  detail::require_2d(x, "softmax");
  const std::size_t r = x.rows(), c = x.cols();
  if (mask && (mask->rows() != r || mask->cols() != c))
    throw ContractViolation("softmax: mask " + std::to_string(mask->rows()) + "x" + std::to_string(mask->cols()) +
                            " does not match input " + shape_str(x.shape()));
  std::vector<double> out(r * c, 0.0);
  auto in = x.values();
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < c; ++j)
      if (!mask || (*mask)(i, j)) {
        mx = std::max(mx, in[i * c + j]);
        any = true;
      }
    if (!any) throw DegenerateInput("softmax: row " + std::to_string(i) + " is fully masked");
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j)
      if (!mask || (*mask)(i, j)) {
        out[i * c + j] = std::exp(in[i * c + j] - mx);
        z += out[i * c + j];
      }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
  }
  return detail::make_result("softmax", {r, c}, std::move(out), {x}, [r, c](detail::Node& self) {
    auto& g = detail::parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += self.value[i * c + j] * self.grad[i * c + j];
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.value[i * c + j] * (self.grad[i * c + j] - dot);
    }
  });
}

/// Row-wise log-softmax (no masking).
inline Tensor log_softmax(const Tensor& x) {
  detail::require_2d(x, "log_softmax");
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(r * c);
  auto in = x.values();
  for (std::size_t i = 0; i < r; ++i) {
    double mx = *std::max_element(in.begin() + i * c, in.begin() + (i + 1) * c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(in[i * c + j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = in[i * c + j] - lz;
  }
  return detail::make_result("log_softmax", {r, c}, std::move(out), {x}, [r, c](detail::Node& self) {
    auto& g = detail::parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < r; ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < c; ++j) gs += self.grad[i * c + j];
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[i * c + j] - std::exp(self.value[i * c + j]) * gs;
    }
  });
}

inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-6) {
  detail::require_2d(x, "layer_norm");
  const std::size_t r = x.rows(), c = x.cols();
  if (gain.size() != c || bias.size() != c)
    throw ContractViolation("layer_norm: gain/bias width must equal " + std::to_string(c));
  std::vector<double> out(r * c), xhat(r * c), inv_std(r);
  auto in = x.values();
  auto gv = gain.values();
  auto bv = bias.values();
  for (std::size_t i = 0; i < r; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += in[i * c + j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (in[i * c + j] - mean) * (in[i * c + j] - mean);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (in[i * c + j] - mean) * inv_std[i];
      out[i * c + j] = gv[j] * xhat[i * c + j] + bv[j];
    }
  }
  return detail::make_result(
      "layer_norm", {r, c}, std::move(out), {x, gain, bias},
      [r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
        auto& X = detail::parent(self, 0);
        auto& G = detail::parent(self, 1);
        auto& B = detail::parent(self, 2);
        if (G.requires_grad) {
          auto& g = G.grad_buffer();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j] * xhat[i * c + j];
        }
        if (B.requires_grad) {
          auto& g = B.grad_buffer();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
        }
        if (X.requires_grad) {
          auto& g = X.grad_buffer();
          const double n = static_cast<double>(c);
          for (std::size_t i = 0; i < r; ++i) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              const double dxh = self.grad[i * c + j] * G.value[j];
              m1 += dxh;
              m2 += dxh * xhat[i * c + j];
            }
            m1 /= n;
            m2 /= n;
            for (std::size_t j = 0; j < c; ++j) {
              const double dxh = self.grad[i * c + j] * G.value[j];
              g[i * c + j] += inv_std[i] * (dxh - m1 - xhat[i * c + j] * m2);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Indexing and reshaping

inline Tensor embedding_lookup(const Tensor& table, std::span<const TokenId> ids) {
  detail::require_2d(table, "embedding_lookup");
  const std::size_t v = table.rows(), d = table.cols(), n = ids.size();
  std::vector<double> out(n * d);
  for (std::size_t t = 0; t < n; ++t) {
    if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= v)
      throw ContractViolation("embedding_lookup: id " + std::to_string(ids[t]) + " outside table of " +
                              std::to_string(v) + " rows");
    std::copy_n(table.values().begin() + static_cast<std::ptrdiff_t>(ids[t] * d), d, out.begin() + t * d);
  }
  return detail::make_result("embedding_lookup", {n, d}, std::move(out), {table},
                             [d, ids = std::vector<TokenId>(ids.begin(), ids.end())](detail::Node& self) {
                               auto& g = detail::parent(self, 0).grad_buffer();
                               for (std::size_t t = 0; t < ids.size(); ++t)
                                 for (std::size_t j = 0; j < d; ++j) g[ids[t] * d + j] += self.grad[t * d + j];
                             });
}

/// Inverted dropout. Identity (same tensor) when not training or rate == 0.
template <class Rng>
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ContractViolation("dropout: rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> factor(x.size());
  for (double& f : factor) f = keep(rng) ? keep_scale : 0.0;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * factor[i];
  return detail::make_result("dropout", x.shape(), std::move(out), {x},
                             [factor = std::move(factor)](detail::Node& self) {
                               auto& g = detail::parent(self, 0).grad_buffer();
                               for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor[i];
                             });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t r = parts.front().rows();
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::require_2d(p, "concat_cols");
    if (p.rows() != r) throw ContractViolation("concat_cols: row counts differ");
    offsets.push_back(total);
    total += p.cols();
  }
  std::vector<double> out(r * total);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t w = parts[k].cols();
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(parts[k].values().begin() + static_cast<std::ptrdiff_t>(i * w), w, out.begin() + i * total + offsets[k]);
  }
  return detail::make_result("concat_cols", {r, total}, std::move(out), parts,
                             [r, total, offsets](detail::Node& self) {
                               for (std::size_t k = 0; k < self.parents.size(); ++k) {
                                 auto& P = detail::parent(self, k);
                                 if (!P.requires_grad) continue;
                                 const std::size_t w = P.shape[1];
                                 auto& g = P.grad_buffer();
                                 for (std::size_t i = 0; i < r; ++i)
                                   for (std::size_t j = 0; j < w; ++j) g[i * w + j] += self.grad[i * total + offsets[k] + j];
                               }
                             });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const std::size_t c = parts.front().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::require_2d(p, "concat_rows");
    if (p.cols() != c) throw ContractViolation("concat_rows: column counts differ");
    total += p.rows();
  }
  std::vector<double> out;
  out.reserve(total * c);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return detail::make_result("concat_rows", {total, c}, std::move(out), parts, [](detail::Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      auto& P = detail::parent(self, k);
      if (P.requires_grad) {
        auto& g = P.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[offset + i];
      }
      offset += P.value.size();
    }
  });
}

inline Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  detail::require_2d(x, "slice_cols");
  const std::size_t r = x.rows(), c = x.cols();
  require(begin + count <= c, "slice_cols: range exceeds " + std::to_string(c) + " columns");
  std::vector<double> out(r * count);
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(x.values().begin() + static_cast<std::ptrdiff_t>(i * c + begin), count, out.begin() + i * count);
  return detail::make_result("slice_cols", {r, count}, std::move(out), {x}, [r, c, begin, count](detail::Node& self) {
    auto& g = detail::parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < count; ++j) g[i * c + begin + j] += self.grad[i * count + j];
  });
}

inline Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  detail::require_2d(x, "slice_rows");
  const std::size_t c = x.cols();
  require(begin + count <= x.rows(), "slice_rows: range exceeds " + std::to_string(x.rows()) + " rows");
  std::vector<double> out(x.values().begin() + static_cast<std::ptrdiff_t>(begin * c),
                          x.values().begin() + static_cast<std::ptrdiff_t>((begin + count) * c));
  return detail::make_result("slice_rows", {count, c}, std::move(out), {x}, [c, begin](detail::Node& self) {
    auto& g = detail::parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * c + i] += self.grad[i];
  });
}

/// out[t, ids[j]] += weights[t, j]; duplicate ids accumulate.
inline Tensor scatter_cols(const Tensor& weights, std::span<const TokenId> ids, std::size_t width) {
  detail::require_2d(weights, "scatter_cols");
  const std::size_t r = weights.rows(), n = weights.cols();
  require(ids.size() == n, "scatter_cols: need one id per column");
  for (TokenId id : ids)
    require(id >= 0 && static_cast<std::size_t>(id) < width, "scatter_cols: id " + std::to_string(id) + " out of range");
  std::vector<double> out(r * width, 0.0);
  for (std::size_t t = 0; t < r; ++t)
    for (std::size_t j = 0; j < n; ++j) out[t * width + ids[j]] += weights.values()[t * n + j];
  return detail::make_result("scatter_cols", {r, width}, std::move(out), {weights},
                             [r, n, width, ids = std::vector<TokenId>(ids.begin(), ids.end())](detail::Node& self) {
                               auto& g = detail::parent(self, 0).grad_buffer();
                               for (std::size_t t = 0; t < r; ++t)
                                 for (std::size_t j = 0; j < n; ++j) g[t * n + j] += self.grad[t * width + ids[j]];
                             });
}

/// x[t, c] * g[t, 0]
inline Tensor scale_rows(const Tensor& x, const Tensor& g) {
  detail::require_2d(x, "scale_rows");
  const std::size_t r = x.rows(), c = x.cols();
  require(g.dim() == 2 && g.rows() == r && g.cols() == 1, "scale_rows: gate must be [rows x 1]");
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x.values()[i * c + j] * g.values()[i];
  return detail::make_result("scale_rows", {r, c}, std::move(out), {x, g}, [r, c](detail::Node& self) {
    auto& X = detail::parent(self, 0);
    auto& G = detail::parent(self, 1);
    if (X.requires_grad) {
      auto& gx = X.grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += self.grad[i * c + j] * G.value[i];
    }
    if (G.requires_grad) {
      auto& gg = G.grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gg[i] += self.grad[i * c + j] * X.value[i * c + j];
    }
  });
}

}  // namespace convsum
