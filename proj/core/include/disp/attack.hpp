#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "disp/error.hpp"
#include "disp/random.hpp"
#include "disp/text.hpp"

namespace disp {

class TokenTooShortError : public DataError {
 public:
  using DataError::DataError;
};
class NoDistinctPairError : public DataError {
 public:
  using DataError::DataError;
};
class EmptyVocabularyError : public DataError {
 public:
  using DataError::DataError;
};
class TokenNotInCorpusError : public DataError {
 public:
  using DataError::DataError;
};
class NotEnoughAttackableTokensError : public DataError {
 public:
  using DataError::DataError;
};

struct AttackConfig {
  AttackKind kind = AttackKind::Insertion;
  std::size_t num_attacks = 1;
  std::uint64_t rng_seed = 0;
  std::size_t embed_top_k = 10;
};

// Character-level edits. First and last characters are preserved by deletion
// and swap; insertion never writes before the first character.
Token attack_insertion(const Token& token, Rng& rng);
Token attack_deletion(const Token& token, Rng& rng);
Token attack_swap(const Token& token, Rng& rng);

// Exchanges characters p and p+1. Used by attack_swap; exposed for the
// involution property.
Token swap_at(const Token& token, std::size_t p);

// Word-level replacements drawn from the corpus vocabulary.
Token attack_random(const Token& token, const EmbeddingCorpus& vocab, Rng& rng);
Token attack_embed(const Token& token, const EmbeddingCorpus& corpus, Rng& rng,
                   std::size_t top_k = 10);

// Whether `token` meets the eligibility rule for `kind`.
bool is_attackable(const Token& token, AttackKind kind, const EmbeddingCorpus& corpus);

Token apply_attack(const Token& token, AttackKind kind, const EmbeddingCorpus& corpus, Rng& rng,
                   std::size_t embed_top_k = 10);

struct PerturbedDocument {
  Document document;
  std::vector<PerturbationRecord> records;  // ascending by position
};

// Perturbs cfg.num_attacks distinct attackable positions sampled uniformly
// without replacement. Uses the caller's stream.
PerturbedDocument perturb_document(const Document& doc, AttackKind kind, std::size_t num_attacks,
                                   const EmbeddingCorpus& corpus, Rng& rng,
                                   std::size_t embed_top_k = 10);

// Seeds a stream from (cfg.rng_seed, doc.id).
PerturbedDocument perturb_document(const Document& doc, const AttackConfig& cfg,
                                   const EmbeddingCorpus& corpus);

// Per-document stream derived from a run seed and the document id.
Rng document_rng(std::uint64_t seed, const Document& doc, std::uint64_t salt = 0);

// The model an oracle attack probes: class probabilities for a document.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::vector<double> probabilities(const Document& doc) const = 0;
};

struct Prediction {
  int label = 0;
  double confidence = 0.0;
};

Prediction predict_with(const Classifier& model, const Document& doc);

struct OracleAttackResult {
  PerturbedDocument adversarial;
  std::size_t candidate_index = 0;
  bool flipped = false;
  int original_label = 0;  // model prediction on the clean document
};

// The `count` candidate variants oracle_attack draws, in order.
std::vector<PerturbedDocument> generate_candidates(const Document& doc, const AttackConfig& cfg,
                                                   const EmbeddingCorpus& corpus,
                                                   std::size_t count);

// Index of the first candidate whose argmax differs from `original_label`,
// else of the lowest probability on `original_label` (lowest index on ties).
std::size_t select_oracle_candidate(int original_label,
                                    std::span<const std::vector<double>> candidate_probabilities,
                                    bool* flipped = nullptr);

// Generates candidates lazily and stops at the first flip.
OracleAttackResult oracle_attack(const Document& doc, const Classifier& model,
                                 const AttackConfig& cfg, const EmbeddingCorpus& corpus,
                                 std::size_t candidates = 50);

}  // namespace disp
