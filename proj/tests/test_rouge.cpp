#include <gtest/gtest.h>

#include <random>

#include "convsum/rouge.hpp"

using namespace convsum;

namespace {

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

using W = std::vector<std::string>;

// Exponential LCS oracle: longest common subsequence by subset enumeration.
std::size_t lcs_brute(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t best = 0;
  for (std::uint32_t mask = 0; mask < (1u << a.size()); ++mask) {
    std::vector<int> sub;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (mask >> i & 1u) sub.push_back(a[i]);
    std::size_t j = 0;
    for (int x : b)
      if (j < sub.size() && sub[j] == x) ++j;
    if (j == sub.size()) best = std::max(best, sub.size());
  }
  return best;
}

}  // namespace

TEST(Rouge, IdenticalSequencesScoreOne) {
  const W a = words("the cat sat on the mat");
  auto r = rouge_all<std::string>(a, a);
  for (auto s : {r.rouge1, r.rouge2, r.rougeL}) {
    EXPECT_DOUBLE_EQ(s.precision, 1.0);
    EXPECT_DOUBLE_EQ(s.recall, 1.0);
    EXPECT_DOUBLE_EQ(s.f1, 1.0);
  }
}

TEST(Rouge, DisjointSequencesScoreZero) {
  auto r = rouge_all<std::string>(words("a b c"), words("d e f"));
  for (auto s : {r.rouge1, r.rouge2, r.rougeL}) EXPECT_EQ(s.f1, 0.0);
}

TEST(Rouge, HandComputedExample) {
  // cand: the cat was under the bed (6), ref: the cat was found under the bed (7)
  const W c = words("the cat was under the bed"), r = words("the cat was found under the bed");
  auto r1 = rouge_n<std::string>(c, r, 1);
  EXPECT_DOUBLE_EQ(r1.precision, 6.0 / 6.0);
  EXPECT_DOUBLE_EQ(r1.recall, 6.0 / 7.0);
  auto r2 = rouge_n<std::string>(c, r, 2);
  // bigrams shared: the-cat, cat-was, under-the, the-bed
  EXPECT_DOUBLE_EQ(r2.precision, 4.0 / 5.0);
  EXPECT_DOUBLE_EQ(r2.recall, 4.0 / 6.0);
  EXPECT_DOUBLE_EQ(r2.f1, 2 * (0.8 * 4.0 / 6.0) / (0.8 + 4.0 / 6.0));
  auto rl = rouge_l<std::string>(c, r);
  EXPECT_DOUBLE_EQ(rl.precision, 1.0);
  EXPECT_DOUBLE_EQ(rl.recall, 6.0 / 7.0);
}

TEST(Rouge, CountsAreClipped) {
  auto r = rouge_n<std::string>(words("the the the"), words("the cat"), 1);
  EXPECT_DOUBLE_EQ(r.precision, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.recall, 1.0 / 2.0);
}

TEST(Rouge, EmptyCandidateOrShortInputs) {
  auto r = rouge_all<std::string>(W{}, words("a b"));
  EXPECT_EQ(r.rouge1.f1, 0.0);
  EXPECT_EQ(r.rougeL.f1, 0.0);
  auto one = rouge_n<std::string>(words("a"), words("a"), 2);  // no bigrams on either side
  EXPECT_EQ(one.f1, 0.0);
}

TEST(Rouge, LcsMatchesBruteForce) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> a(rng() % 10), b(rng() % 10);
    for (int& x : a) x = static_cast<int>(rng() % 4);
    for (int& x : b) x = static_cast<int>(rng() % 4);
    EXPECT_EQ(lcs_length<int>(a, b), lcs_brute(a, b));
  }
}

TEST(Rouge, UnigramRecallIsOrderInvariant) {
  std::mt19937 rng(5);
  std::vector<int> ref{1, 2, 3, 4, 5, 1, 2};
  std::vector<int> cand{2, 9, 1, 4, 4};
  const auto base = rouge_n<int>(cand, ref, 1);
  for (int t = 0; t < 20; ++t) {
    std::shuffle(cand.begin(), cand.end(), rng);
    EXPECT_DOUBLE_EQ(rouge_n<int>(cand, ref, 1).f1, base.f1);
  }
}

TEST(RougeAccumulator, MeansInInsertionOrder) {
  RougeAccumulator acc;
  acc.add(rouge_all<std::string>(words("a b"), words("a b")));
  acc.add(rouge_all<std::string>(words("a"), words("b")));
  auto m = acc.mean();
  EXPECT_EQ(m.documents, 2u);
  EXPECT_DOUBLE_EQ(m.rouge1.f1, 0.5);
  EXPECT_DOUBLE_EQ(m.rougeL.recall, 0.5);
}

TEST(RougeReport, KeyValueFormat) {
  RougeAccumulator acc;
  acc.add(rouge_all<std::string>(words("a b c"), words("a b d")));
  const auto text = format_report(acc.mean(), ReportFormat::kv);
  EXPECT_NE(text.find("documents=1\n"), std::string::npos);
  EXPECT_NE(text.find("rouge1_p=0.6667\n"), std::string::npos);
  EXPECT_NE(text.find("rouge2_f1=0.5000\n"), std::string::npos);
  EXPECT_NE(text.find("rougeL_r=0.6667\n"), std::string::npos);
  EXPECT_NE(format_report(acc.mean(), ReportFormat::text).find("rouge1"), std::string::npos);
}

TEST(LeadTail, HeadAndTailSelectSentences) {
  SegmentedDocument doc{{words("a b c"), words("d e"), words("f g h")}, {words("a b c")}};
  std::vector<SegmentedDocument> corpus{doc};
  auto head = lead_tail_analysis(corpus, Direction::head);
  auto tail = lead_tail_analysis(corpus, Direction::tail);
  EXPECT_DOUBLE_EQ(head.rouge1.f1, 1.0);
  EXPECT_DOUBLE_EQ(tail.rouge1.f1, 0.0);
}

TEST(LeadTail, UsesSummarySentenceCount) {
  SegmentedDocument doc{{words("a"), words("b"), words("c"), words("d")}, {words("c"), words("d")}};
  std::vector<SegmentedDocument> corpus{doc};
  EXPECT_DOUBLE_EQ(lead_tail_analysis(corpus, Direction::tail).rouge1.f1, 1.0);
  EXPECT_DOUBLE_EQ(lead_tail_analysis(corpus, Direction::head).rouge1.f1, 0.0);
  // Fewer source sentences than summary sentences: all are used.
  SegmentedDocument shortdoc{{words("x y")}, {words("x"), words("y")}};
  std::vector<SegmentedDocument> c2{shortdoc};
  EXPECT_DOUBLE_EQ(lead_tail_analysis(c2, Direction::head).rouge1.f1, 1.0);
}

TEST(LeadTail, EmptySummaryIsContractViolation) {
  std::vector<SegmentedDocument> corpus{{{words("a")}, {}}};
  EXPECT_THROW(lead_tail_analysis(corpus, Direction::head), ContractViolation);
}

TEST(Rouge, SmallWorkedExamples) {
  auto r1 = rouge_n<std::string>(words("the cat sat"), words("the cat"), 1);
  EXPECT_DOUBLE_EQ(r1.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r1.recall, 1.0);
  EXPECT_DOUBLE_EQ(r1.f1, 0.8);
  auto rl = rouge_l<std::string>(words("a b c d"), words("a c d"));
  EXPECT_DOUBLE_EQ(rl.precision, 0.75);
  EXPECT_DOUBLE_EQ(rl.recall, 1.0);
  EXPECT_DOUBLE_EQ(rl.f1, 6.0 / 7.0);
}

TEST(Rouge, SwappingArgumentsSwapsPrecisionAndRecall) {
  std::mt19937 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> a(1 + rng() % 12), b(1 + rng() % 12);
    for (int& x : a) x = static_cast<int>(rng() % 5);
    for (int& x : b) x = static_cast<int>(rng() % 5);
    for (std::size_t n : {1u, 2u, 3u}) {
      auto ab = rouge_n<int>(a, b, n), ba = rouge_n<int>(b, a, n);
      EXPECT_EQ(ab.precision, ba.recall);
      EXPECT_EQ(ab.recall, ba.precision);
      EXPECT_LE(ab.f1, std::max(ab.precision, ab.recall) + 1e-15);
      for (double v : {ab.precision, ab.recall, ab.f1}) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
    }
  }
}
