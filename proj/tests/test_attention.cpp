#include <gtest/gtest.h>

#include <random>

#include "convsum/attention.hpp"
#include "support/gradcheck.hpp"
#include "support/reference.hpp"

using namespace convsum;
using namespace convsum::testing;

namespace {

struct Fixture {
  ParameterStore store;
  AttentionParams params;
  Fixture(std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    params = make_attention_params(store, "attn", d, rng);
    // Non-zero biases so they are exercised.
    for (auto& [name, t] : store)
      if (name.find(".b") != std::string::npos)
        for (double& v : t.mutable_values()) v = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
  }
};

}  // namespace

TEST(TokenWindowMask, Definition) {
  auto m = token_window_mask(5, 3);
  EXPECT_TRUE(m(2, 1) && m(2, 2) && m(2, 3));
  EXPECT_FALSE(m(2, 0) || m(2, 4));
  EXPECT_TRUE(m(0, 0) && m(0, 1));
  EXPECT_FALSE(m(0, 2));
}

TEST(TokenWindowMask, WideKernelIsAllValidAndUnitKernelIsIdentity) {
  for (std::size_t len = 1; len <= 6; ++len) {
    EXPECT_TRUE(token_window_mask(len, 2 * len - 1).all_valid());
    auto id = token_window_mask(len, 1);
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t j = 0; j < len; ++j) EXPECT_EQ(id(i, j), i == j);
  }
}

TEST(HeadUnion, Examples) {
  EXPECT_EQ(head_union_indices(0, 4, 3, true), (std::vector<std::size_t>{3, 0, 1}));
  EXPECT_EQ(head_union_indices(0, 4, 3, false), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(head_union_indices(2, 4, 1, false), (std::vector<std::size_t>{2}));
  EXPECT_EQ(head_union_indices(2, 4, 1, true), (std::vector<std::size_t>{2}));
  EXPECT_THROW(head_union_indices(0, 2, 3, true), ContractViolation);
}

TEST(HeadUnion, CircularIsRotationOfHeadZero) {
  for (std::size_t heads = 1; heads <= 8; ++heads)
    for (std::size_t k = 1; k <= heads; k += 2) {
      auto base = head_union_indices(0, heads, k, true);
      for (std::size_t h = 0; h < heads; ++h) {
        auto u = head_union_indices(h, heads, k, true);
        ASSERT_EQ(u.size(), k);
        for (std::size_t i = 0; i < k; ++i) EXPECT_EQ(u[i], (base[i] + h) % heads);
      }
    }
}

TEST(HeadUnion, StandardSizeFollowsClipping) {
  for (long heads = 1; heads <= 8; ++heads)
    for (long k = 1; k <= 7; k += 2)
      for (long h = 0; h < heads; ++h) {
        const long half = (k - 1) / 2;
        const long expected = k - std::max(0L, half - h) - std::max(0L, h + half - (heads - 1));
        EXPECT_EQ(static_cast<long>(head_union_indices(h, heads, k, false).size()), expected);
      }
}

TEST(ConvAttention, SingleTokenAttendsToItself) {
  Fixture f(8, 3);
  std::mt19937_64 rng(1);
  auto x = random_tensor({1, 8}, rng);
  AttentionConfig cfg{2, 5, 1, false, {0}};
  std::vector<Tensor> w;
  auto y = conv_multi_head_attention(x, f.params, cfg, &w);
  for (const auto& hw : w) EXPECT_EQ(hw.values()[0], 1.0);
  // Output is the projected value row.
  auto expected = linear(linear(x, f.params.wv, f.params.bv), f.params.wo, f.params.bo);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(y.values()[i], expected.values()[i], 1e-14);
}

TEST(ConvAttention, WideWindowEqualsVanillaExactly) {
  Fixture f(8, 4);
  std::mt19937_64 rng(2);
  auto x = random_tensor({5, 8}, rng);
  auto vanilla = multi_head_attention(x, x, f.params, 2);
  auto conv = conv_multi_head_attention(x, f.params, {2, 9, 1, false, {0}});
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(conv.values()[i], vanilla.values()[i]);
}

TEST(ConvAttention, MatchesNestedLoopReference) {
  Fixture f(8, 5);
  std::mt19937_64 rng(6);
  auto x = random_tensor({4, 8}, rng);
  AttentionConfig cfg{2, 3, 3, true, {0}};
  // k_head = 3 > H = 2 is illegal for circular; use H = 4 with d = 8.
  cfg.heads = 4;
  auto y = conv_multi_head_attention(x, f.params, cfg);
  auto ref = conv_attention_ref(Mat(x), f.store, "attn", cfg);
  EXPECT_LT(max_rel_diff(y.values(), ref.v), 1e-12);
}

TEST(ConvAttention, WeightsAreDistributionsOverWindow) {
  Fixture f(8, 7);
  std::mt19937_64 rng(8);
  auto x = random_tensor({6, 8}, rng);
  AttentionConfig cfg{4, 3, 3, false, {0}};
  std::vector<Tensor> weights;
  conv_multi_head_attention(x, f.params, cfg, &weights);
  for (std::size_t h = 0; h < 4; ++h) {
    const auto members = head_union_indices(h, 4, 3, false);
    const auto& w = weights[h];
    ASSERT_EQ(w.cols(), members.size() * 6);
    for (std::size_t i = 0; i < 6; ++i) {
      double s = 0;
      for (std::size_t c = 0; c < w.cols(); ++c) {
        const std::size_t j = c % 6;
        if ((i > j ? i - j : j - i) > 1) {
          EXPECT_EQ(w.at(i, c), 0.0);
        }
        s += w.at(i, c);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(ConvAttention, LocalityOfPerturbations) {
  Fixture f(8, 9);
  std::mt19937_64 rng(10);
  const std::size_t len = 7;
  AttentionConfig cfg{2, 3, 1, false, {0}};
  auto x = random_tensor({len, 8}, rng);
  auto base = conv_multi_head_attention(x, f.params, cfg);
  for (std::size_t j = 0; j < len; ++j) {
    auto xp = x.clone();
    xp.mutable_values()[j * 8 + 3] += 0.5;
    auto y = conv_multi_head_attention(xp, f.params, cfg);
    for (std::size_t i = 0; i < len; ++i) {
      bool changed = false;
      for (std::size_t c = 0; c < 8; ++c) changed = changed || y.at(i, c) != base.at(i, c);
      if ((i > j ? i - j : j - i) > 1) EXPECT_FALSE(changed) << i << " " << j;
      else EXPECT_TRUE(changed) << i << " " << j;
    }
  }
}

TEST(ConvAttention, GradientCheck) {
  Fixture f(8, 11);
  std::mt19937_64 rng(12);
  auto x = random_tensor({5, 8}, rng, 1.0, true);
  auto r = random_tensor({5, 8}, rng);
  std::vector<Tensor> leaves{x};
  for (auto& [n, t] : f.store) leaves.push_back(t);
  for (bool circular : {false, true}) {
    AttentionConfig cfg{4, 3, 3, circular, {0}};
    EXPECT_LT(gradcheck(leaves, [&] { return sum(mul(conv_multi_head_attention(x, f.params, cfg), r)); }), 1e-4);
  }
  auto mem = random_tensor({3, 8}, rng, 1.0, true);
  auto r2 = random_tensor({5, 8}, rng);
  const Mask causal = Mask::causal(5);
  leaves.push_back(mem);
  EXPECT_LT(gradcheck(leaves, [&] { return sum(mul(multi_head_attention(x, mem, f.params, 2), r2)); }), 1e-4);
  EXPECT_LT(gradcheck(leaves, [&] { return sum(mul(multi_head_attention(x, x, f.params, 4, &causal), r2)); }), 1e-4);
}

TEST(AttentionConfig, Validation) {
  EXPECT_THROW((AttentionConfig{4, 4, 1, false, {}}).validate(), ContractViolation);
  EXPECT_THROW((AttentionConfig{4, 3, 2, false, {}}).validate(), ContractViolation);
  EXPECT_THROW((AttentionConfig{2, 3, 3, true, {}}).validate(), ContractViolation);
  EXPECT_NO_THROW((AttentionConfig{2, 3, 3, false, {}}).validate());
}
