#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <limits>

#include "disp/error.hpp"
#include "disp/text.hpp"
#include "test_util.hpp"

namespace disp {
namespace {

std::vector<std::string> surfaces(const std::vector<Token>& tokens) {
  std::vector<std::string> out;
  for (const auto& t : tokens) out.push_back(t.str());
  return out;
}

TEST(Tokenize, DetachesTrailingPunctuationAndLowercases) {
  EXPECT_EQ(surfaces(tokenize("Old-form moviemaking at its best.")),
            (std::vector<std::string>{"old-form", "moviemaking", "at", "its", "best", "."}));
}

TEST(Tokenize, EmptyAndWhitespaceCollapse) {
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_TRUE(tokenize(" \t\n").empty());
  EXPECT_EQ(surfaces(tokenize("A  A")), (std::vector<std::string>{"a", "a"}));
}

TEST(Tokenize, LeadingPunctuationOneTokenPerCharacter) {
  EXPECT_EQ(surfaces(tokenize("(\"wow!!\")")),
            (std::vector<std::string>{"(", "\"", "wow", "!", "!", "\"", ")"}));
  EXPECT_EQ(surfaces(tokenize("...")), (std::vector<std::string>{".", ".", "."}));
}

TEST(Tokenize, IsDeterministic) {
  const std::string text = "It's a   TEST, of: tokenization!";
  EXPECT_EQ(tokenize(text), tokenize(text));
}

TEST(TokenTest, RejectsEmptyAndWhitespace) {
  EXPECT_THROW(Token(""), DataError);
  EXPECT_THROW(Token("a b"), DataError);
  EXPECT_TRUE(Token("abc").is_alphabetic());
  EXPECT_FALSE(Token("ab1").is_alphabetic());
  EXPECT_FALSE(Token("old-form").is_alphabetic());
}

TEST(EmbeddingCorpusIo, MinimalFile) {
  test::TempDir dir("corpus");
  test::write_file(dir / "c.vec", "2 3\na 1 0 0\nb 0 1 0\n");
  const auto c = load_embedding_corpus(dir / "c.vec");
  EXPECT_EQ(c.size(), 2u);
  EXPECT_EQ(c.dim(), 3u);
  EXPECT_EQ(c.vector(1)[1], 1.0f);
  EXPECT_EQ(c.lookup("b"), 1u);
  EXPECT_FALSE(c.lookup("zzz").has_value());
}

TEST(EmbeddingCorpusIo, DimensionMismatchReportsLine) {
  test::TempDir dir("corpus");
  test::write_file(dir / "c.vec", "2 3\na 1 0 0\nb 0 1\n");
  try {
    load_embedding_corpus(dir / "c.vec");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(EmbeddingCorpusIo, RejectsDuplicateMalformedAndNonFinite) {
  test::TempDir dir("corpus");
  test::write_file(dir / "dup.vec", "2 2\na 1 0\na 0 1\n");
  EXPECT_THROW(load_embedding_corpus(dir / "dup.vec"), ParseError);
  test::write_file(dir / "hdr.vec", "two 2\na 1 0\n");
  EXPECT_THROW(load_embedding_corpus(dir / "hdr.vec"), ParseError);
  test::write_file(dir / "nan.vec", "1 2\na nan 0\n");
  EXPECT_THROW(load_embedding_corpus(dir / "nan.vec"), ParseError);
  test::write_file(dir / "short.vec", "3 2\na 1 0\n");
  EXPECT_THROW(load_embedding_corpus(dir / "short.vec"), ParseError);
  EXPECT_THROW(load_embedding_corpus(dir / "missing.vec"), DataError);
}

TEST(EmbeddingCorpusIo, SaveReloadIsBitIdentical) {
  test::TempDir dir("corpus");
  auto c = test::gaussian_corpus(200, 7, 3);
  save_embedding_corpus(c, dir / "g.vec");
  const auto back = load_embedding_corpus(dir / "g.vec");
  EXPECT_EQ(back.tokens(), c.tokens());
  ASSERT_EQ(back.data().size(), c.data().size());
  for (std::size_t i = 0; i < c.data().size(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint32_t>(back.data()[i]), std::bit_cast<std::uint32_t>(c.data()[i]));
  }
  EXPECT_EQ(back.content_hash(), c.content_hash());
}

TEST(EmbeddingCorpusTest, LookupIsInverseOfRowOrder) {
  auto c = test::gaussian_corpus(50, 2, 1);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_EQ(c.lookup(c.token(i).str()), i);
}

TEST(EmbeddingCorpusTest, ConstructorValidates) {
  EXPECT_THROW(EmbeddingCorpus({Token("a"), Token("a")}, {1, 2}, 1), DataError);
  EXPECT_THROW(EmbeddingCorpus({Token("a")}, {1, 2}, 1), DataError);
  EXPECT_THROW(EmbeddingCorpus({Token("a")}, {std::numeric_limits<float>::infinity()}, 1), DataError);
}

TEST(DatasetIo, ParsesLabelsAndIds) {
  test::TempDir dir("ds");
  test::write_file(dir / "d.tsv", "1\tgood movie\n0\tbad movie\n");
  const auto ds = load_dataset(dir / "d.tsv", 2);
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.documents[0].label, 1);
  EXPECT_EQ(ds.documents[1].label, 0);
  EXPECT_EQ(ds.documents[0].id, "0");
  EXPECT_EQ(ds.documents[1].id, "1");
  EXPECT_EQ(ds.documents[1].text(), "bad movie");
}

TEST(DatasetIo, RejectsBadLines) {
  test::TempDir dir("ds");
  test::write_file(dir / "range.tsv", "2\tx\n");
  EXPECT_THROW(load_dataset(dir / "range.tsv", 2), ParseError);
  test::write_file(dir / "empty.tsv", "1\t   \n");
  EXPECT_THROW(load_dataset(dir / "empty.tsv", 2), ParseError);
  test::write_file(dir / "label.tsv", "x\tgood\n");
  EXPECT_THROW(load_dataset(dir / "label.tsv", 2), ParseError);
  test::write_file(dir / "notab.tsv", "1 good\n");
  EXPECT_THROW(load_dataset(dir / "notab.tsv", 2), ParseError);
}

TEST(DatasetIo, SaveReloadRoundTrip) {
  test::TempDir dir("ds");
  Dataset ds;
  ds.documents = {test::make_doc("0", 1, "hello , world"), test::make_doc("1", 0, "again !")};
  save_dataset(ds, dir / "d.tsv");
  const auto back = load_dataset(dir / "d.tsv", 2);
  EXPECT_EQ(back.documents, ds.documents);
}

TEST(VocabularyTest, FrequencyOrderAndUnknown) {
  Dataset ds;
  ds.documents = {test::make_doc("0", 0, "b a b c"), test::make_doc("1", 1, "a b")};
  const auto v = Vocabulary::from_dataset(ds);
  EXPECT_EQ(v.regular_tokens(), (std::vector<std::string>{"b", "a", "c"}));
  EXPECT_EQ(v.id("b"), kNumSpecialTokens);
  EXPECT_EQ(v.id("zzz"), kSpecialTokens.unk);
  EXPECT_EQ(v.size(), 6u);
  const auto limited = Vocabulary::from_dataset(ds, 1);
  EXPECT_EQ(limited.regular_tokens(), (std::vector<std::string>{"b"}));
}

}  // namespace
}  // namespace disp
