#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "convsum/tokenizer.hpp"
#include "support/synthetic.hpp"

using namespace convsum;

namespace {

Vocab toy_vocab() {
  std::vector<std::string> t(Vocab::kReserved.begin(), Vocab::kReserved.end());
  for (const char* s : {"un", "##able", "able", "the", "cat", "##s", "a", "##b", "##c", "c", "b", "##a", "##t"})
    t.emplace_back(s);
  return Vocab(t);
}

TokenId id(const Vocab& v, const char* tok) { return *v.find(tok); }

}  // namespace

TEST(Vocab, ReservedTokensFirstAndStable) {
  auto v = toy_vocab();
  EXPECT_EQ(v.token(Vocab::kPad), "[PAD]");
  EXPECT_EQ(v.token(Vocab::kCls), "[CLS]");
  EXPECT_EQ(v.token(Vocab::kEos), "[EOS]");
  std::vector<std::string> bad{"[UNK]", "[PAD]", "[CLS]", "[SEP]", "[BOS]", "[EOS]"};
  EXPECT_THROW(Vocab{bad}, InputError);
}

TEST(Vocab, DuplicatesRejected) {
  std::vector<std::string> t(Vocab::kReserved.begin(), Vocab::kReserved.end());
  t.push_back("x");
  t.push_back("x");
  EXPECT_THROW(Vocab{t}, InputError);
}

TEST(Vocab, FileRoundTripIsLineExact) {
  auto v = toy_vocab();
  auto path = std::filesystem::temp_directory_path() / "convsum_vocab_test.txt";
  v.save(path);
  EXPECT_EQ(Vocab::load(path), v);
  std::ifstream in(path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) EXPECT_EQ(line, v.token(static_cast<TokenId>(n++)));
  EXPECT_EQ(n, v.size());
  std::filesystem::remove(path);
}

TEST(Tokenize, GreedyLongestMatch) {
  auto v = toy_vocab();
  EXPECT_EQ(tokenize("unable", v), (std::vector<TokenId>{Vocab::kCls, id(v, "un"), id(v, "##able")}));
  EXPECT_EQ(tokenize("The cats", v),
            (std::vector<TokenId>{Vocab::kCls, id(v, "the"), id(v, "cat"), id(v, "##s")}));
}

TEST(Tokenize, UncoverableWordIsSingleUnk) {
  auto v = toy_vocab();
  EXPECT_EQ(tokenize("cax", v), (std::vector<TokenId>{Vocab::kCls, Vocab::kUnk}));
}

TEST(Tokenize, EmptyTextIsJustCls) {
  auto v = toy_vocab();
  EXPECT_EQ(tokenize("   ", v), (std::vector<TokenId>{Vocab::kCls}));
}

TEST(Tokenize, PunctuationSplitsWords) {
  EXPECT_EQ(pre_tokenize("Hello, World!"), (std::vector<std::string>{"hello", ",", "world", "!"}));
}

TEST(Tokenize, ChosenPieceIsLongestAvailable) {
  // Brute force: at every split point no longer vocab piece would have matched.
  auto corpus = convsum::testing::lead_corpus(30, 4);
  std::vector<std::string> docs;
  for (auto& p : corpus) docs.push_back(p.source);
  auto v = build_vocab(docs, 120);
  for (const auto& doc : docs)
    for (const auto& w : pre_tokenize(doc)) {
      auto pieces = wordpiece(w, v);
      if (pieces == std::vector<TokenId>{Vocab::kUnk}) continue;
      std::size_t pos = 0;
      for (TokenId p : pieces) {
        std::string tok = v.token(p);
        const std::size_t len = Vocab::is_continuation(tok) ? tok.size() - 2 : tok.size();
        EXPECT_EQ(Vocab::is_continuation(tok), pos > 0);
        for (std::size_t longer = len + 1; pos + longer <= w.size(); ++longer)
          EXPECT_FALSE(v.find((pos ? "##" : "") + w.substr(pos, longer))) << w;
        pos += len;
      }
      EXPECT_EQ(pos, w.size());
    }
}

TEST(Detokenize, MergesContinuationsAndDropsMarkers) {
  auto v = toy_vocab();
  EXPECT_EQ(detokenize(std::vector<TokenId>{Vocab::kCls, id(v, "un"), id(v, "##able"), Vocab::kEos}, v), "unable");
  EXPECT_EQ(detokenize(std::vector<TokenId>{Vocab::kCls, id(v, "the"), id(v, "cat")}, v), "the cat");
  EXPECT_THROW(detokenize(std::vector<TokenId>{999}, v), ContractViolation);
}

TEST(Detokenize, InvertsTokenizeOnCoveredWords) {
  auto corpus = convsum::testing::lead_corpus(40, 9);
  std::vector<std::string> docs;
  for (auto& p : corpus) docs.push_back(p.source);
  auto v = build_vocab(docs, 90);  // small: forces subword decompositions
  for (const auto& doc : docs)
    for (const auto& w : pre_tokenize(doc)) EXPECT_EQ(detokenize(tokenize(w, v), v), w);
}

TEST(BuildVocab, RepeatedWordBecomesOneToken) {
  auto v = build_vocab({"hello hello hello", "hello"}, 50);
  ASSERT_TRUE(v.find("hello"));
  EXPECT_EQ(tokenize("hello", v), (std::vector<TokenId>{Vocab::kCls, *v.find("hello")}));
}

TEST(BuildVocab, EveryCorpusWordIsRepresentable) {
  auto corpus = convsum::testing::lead_corpus(50, 3);
  std::vector<std::string> docs;
  for (auto& p : corpus) docs.push_back(p.source + " " + p.summary);
  for (std::size_t size : {60u, 100u, 300u}) {
    auto v = build_vocab(docs, size);
    EXPECT_LE(v.size(), size);
    for (const auto& doc : docs)
      for (TokenId t : tokenize(doc, v)) EXPECT_NE(t, Vocab::kUnk);
  }
}

TEST(BuildVocab, TooSmallOrEmptyIsAnError) {
  EXPECT_THROW(build_vocab({"abc"}, 7), InputError);
  EXPECT_THROW(build_vocab({"   "}, 100), InputError);
}

TEST(BuildVocab, Deterministic) {
  auto corpus = convsum::testing::lead_corpus(20, 5);
  std::vector<std::string> docs;
  for (auto& p : corpus) docs.push_back(p.source);
  EXPECT_EQ(build_vocab(docs, 150), build_vocab(docs, 150));
}
