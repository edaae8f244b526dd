#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace disp {

// A single non-empty, whitespace-free surface form. Surfaces are UTF-8.
class Token {
 public:
  explicit Token(std::string surface);

  const std::string& str() const noexcept { return surface_; }
  std::size_t size() const noexcept { return surface_.size(); }

  // Alphabetic-only (ASCII letters) surfaces are the only ones attacks touch.
  bool is_alphabetic() const noexcept;

  friend auto operator<=>(const Token&, const Token&) = default;

 private:
  std::string surface_;
};

enum class AttackKind { Insertion, Deletion, Swap, Random, Embed };

inline constexpr AttackKind kAllAttackKinds[] = {AttackKind::Insertion, AttackKind::Deletion,
                                                 AttackKind::Swap, AttackKind::Random,
                                                 AttackKind::Embed};

std::string_view to_string(AttackKind kind) noexcept;
AttackKind parse_attack_kind(std::string_view name);
bool is_character_level(AttackKind kind) noexcept;

struct Document {
  std::string id;
  int label = 0;
  std::vector<Token> tokens;

  std::size_t size() const noexcept { return tokens.size(); }
  // Surfaces joined by single spaces.
  std::string text() const;

  friend bool operator==(const Document&, const Document&) = default;
};

struct PerturbationRecord {
  std::size_t position = 0;
  AttackKind kind = AttackKind::Insertion;
  Token original{"?"};
  Token replacement{"?"};

  friend bool operator==(const PerturbationRecord&, const PerturbationRecord&) = default;
};

enum class Split { Train, Test };

struct Dataset {
  std::vector<Document> documents;
  int num_classes = 2;
  Split split = Split::Train;

  std::size_t size() const noexcept { return documents.size(); }
};

// Lowercases, splits on whitespace and detaches leading/trailing ASCII
// punctuation into one token per character.
std::vector<Token> tokenize(std::string_view text);

// TSV "label<TAB>text", one document per line. Document ids are the 0-based
// line index.
Dataset load_dataset(const std::filesystem::path& path, int num_classes,
                     Split split = Split::Train);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

// n tokens with k-dimensional single-precision vectors, fastText .vec layout.
class EmbeddingCorpus {
 public:
  EmbeddingCorpus(std::vector<Token> tokens, std::vector<float> vectors, std::size_t dim);

  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t dim() const noexcept { return dim_; }

  const Token& token(std::size_t row) const { return tokens_.at(row); }
  const std::vector<Token>& tokens() const noexcept { return tokens_; }
  std::span<const float> vector(std::size_t row) const noexcept {
    return {vectors_.data() + row * dim_, dim_};
  }
  const std::vector<float>& data() const noexcept { return vectors_; }

  std::optional<std::size_t> lookup(std::string_view surface) const;

  // FNV-1a over tokens and raw vector bytes; pairs index files with corpora.
  std::uint64_t content_hash() const noexcept { return hash_; }

 private:
  std::vector<Token> tokens_;
  std::vector<float> vectors_;
  std::size_t dim_;
  std::unordered_map<std::string, std::size_t> rows_;
  std::uint64_t hash_ = 0;
};

EmbeddingCorpus load_embedding_corpus(const std::filesystem::path& path);
// Shortest round-trip decimal form, so reload is bit-identical.
void save_embedding_corpus(const EmbeddingCorpus& corpus, const std::filesystem::path& path);

struct SpecialTokens {
  int pad = 0;
  int unk = 1;
  int mask = 2;
};

inline constexpr SpecialTokens kSpecialTokens{};
inline constexpr int kNumSpecialTokens = 3;

// Encoder vocabulary: the three special ids followed by regular tokens. Any
// surface not in the vocabulary maps to [UNK]; surfaces in Documents are never
// rewritten.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> regular_tokens);

  // Tokens ordered by descending frequency, ties lexicographic. max_size = 0
  // keeps every token.
  static Vocabulary from_dataset(const Dataset& dataset, std::size_t max_size = 0);

  int id(std::string_view surface) const;
  std::vector<int> encode(std::span<const Token> tokens) const;

  // Including the special ids.
  std::size_t size() const noexcept { return regular_.size() + kNumSpecialTokens; }
  const std::vector<std::string>& regular_tokens() const noexcept { return regular_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.regular_ == b.regular_; }

 private:
  std::vector<std::string> regular_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace disp
