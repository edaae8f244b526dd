#include "disp/attack.hpp"

#include <algorithm>
#include <string>

#include "disp/knn_index.hpp"

namespace disp {
namespace {

constexpr std::uint64_t kOracleSalt = 0x6f7261636c65ULL;  // "oracle"

std::vector<std::size_t> distinct_pairs(const std::string& s) {
  std::vector<std::size_t> out;
  if (s.size() < 4) return out;
  for (std::size_t p = 1; p + 3 <= s.size(); ++p) {
    if (s[p] != s[p + 1]) out.push_back(p);
  }
  return out;
}

std::size_t argmax(const std::vector<double>& probs) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < probs.size(); ++c) {
    if (probs[c] > probs[best]) best = c;
  }
  return best;
}

}  // namespace

Token attack_insertion(const Token& token, Rng& rng) {
  const std::string& s = token.str();
  const std::size_t pos = s.size() >= 2 ? 1 + rng.uniform_index(s.size() - 1) : 1;
  const char c = static_cast<char>('a' + rng.uniform_index(26));
  std::string out = s;
  out.insert(out.begin() + static_cast<std::ptrdiff_t>(pos), c);
  return Token(std::move(out));
}

Token attack_deletion(const Token& token, Rng& rng) {
  const std::string& s = token.str();
  if (s.size() < 3) throw TokenTooShortError("deletion needs at least 3 characters: '" + s + "'");
  const std::size_t pos = 1 + rng.uniform_index(s.size() - 2);
  std::string out = s;
  out.erase(pos, 1);
  return Token(std::move(out));
}

Token swap_at(const Token& token, std::size_t p) {
  std::string out = token.str();
  if (p + 1 >= out.size()) throw DataError("swap position out of range");
  std::swap(out[p], out[p + 1]);
  return Token(std::move(out));
}

Token attack_swap(const Token& token, Rng& rng) {
  const std::string& s = token.str();
  if (s.size() < 4) throw TokenTooShortError("swap needs at least 4 characters: '" + s + "'");
  const auto pairs = distinct_pairs(s);
  if (pairs.empty()) throw NoDistinctPairError("no distinct interior pair in '" + s + "'");
  return swap_at(token, pairs[rng.uniform_index(pairs.size())]);
}

Token attack_random(const Token& token, const EmbeddingCorpus& vocab, Rng& rng) {
  if (vocab.size() < 2) throw EmptyVocabularyError("random attack needs at least 2 corpus tokens");
  const auto self = vocab.lookup(token.str());
  if (!self) return vocab.token(rng.uniform_index(vocab.size()));
  std::size_t pick = rng.uniform_index(vocab.size() - 1);
  if (pick >= *self) ++pick;
  return vocab.token(pick);
}

Token attack_embed(const Token& token, const EmbeddingCorpus& corpus, Rng& rng, std::size_t top_k) {
  if (top_k < 1) throw DataError("embed_top_k must be at least 1");
  const auto self = corpus.lookup(token.str());
  if (!self) throw TokenNotInCorpusError("embed attack on out-of-corpus token '" + token.str() + "'");
  if (corpus.size() < 2) throw EmptyVocabularyError("embed attack needs at least 2 corpus tokens");
  const auto knn = brute_force_knn(corpus, corpus.vector(*self), top_k + 1);
  std::vector<std::uint32_t> pool;
  pool.reserve(top_k);
  for (const auto& nb : knn.neighbors) {
    if (nb.id != *self && pool.size() < top_k) pool.push_back(nb.id);
  }
  return corpus.token(pool[rng.uniform_index(pool.size())]);
}

bool is_attackable(const Token& token, AttackKind kind, const EmbeddingCorpus& corpus) {
  if (!token.is_alphabetic()) return false;
  switch (kind) {
    case AttackKind::Insertion: return true;
    case AttackKind::Deletion: return token.size() >= 3;
    case AttackKind::Swap: return !distinct_pairs(token.str()).empty();
    case AttackKind::Random: return corpus.size() >= 2;
    case AttackKind::Embed: return corpus.size() >= 2 && corpus.lookup(token.str()).has_value();
  }
  return false;
}

Token apply_attack(const Token& token, AttackKind kind, const EmbeddingCorpus& corpus, Rng& rng,
                   std::size_t embed_top_k) {
  switch (kind) {
    case AttackKind::Insertion: return attack_insertion(token, rng);
    case AttackKind::Deletion: return attack_deletion(token, rng);
    case AttackKind::Swap: return attack_swap(token, rng);
    case AttackKind::Random: return attack_random(token, corpus, rng);
    case AttackKind::Embed: return attack_embed(token, corpus, rng, embed_top_k);
  }
  throw DataError("unknown attack kind");
}

PerturbedDocument perturb_document(const Document& doc, AttackKind kind, std::size_t num_attacks,
                                   const EmbeddingCorpus& corpus, Rng& rng,
                                   std::size_t embed_top_k) {
  PerturbedDocument out{doc, {}};
  if (num_attacks == 0) return out;

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
    if (is_attackable(doc.tokens[i], kind, corpus)) eligible.push_back(i);
  }
  if (eligible.size() < num_attacks) {
    throw NotEnoughAttackableTokensError(
        "document " + doc.id + " has " + std::to_string(eligible.size()) + " tokens attackable by " +
        std::string(to_string(kind)) + ", " + std::to_string(num_attacks) + " requested");
  }
  for (std::size_t i = 0; i < num_attacks; ++i) {
    const std::size_t j = i + rng.uniform_index(eligible.size() - i);
    std::swap(eligible[i], eligible[j]);
  }
  eligible.resize(num_attacks);
  std::sort(eligible.begin(), eligible.end());

  out.records.reserve(num_attacks);
  for (std::size_t pos : eligible) {
    const Token& original = doc.tokens[pos];
    Token replacement = apply_attack(original, kind, corpus, rng, embed_top_k);
    out.document.tokens[pos] = replacement;
    out.records.push_back(PerturbationRecord{pos, kind, original, std::move(replacement)});
  }
  return out;
}

Rng document_rng(std::uint64_t seed, const Document& doc, std::uint64_t salt) {
  return Rng(derive_seed(derive_seed(seed, doc.id), salt));
}

PerturbedDocument perturb_document(const Document& doc, const AttackConfig& cfg,
                                   const EmbeddingCorpus& corpus) {
  Rng rng = document_rng(cfg.rng_seed, doc);
  return perturb_document(doc, cfg.kind, cfg.num_attacks, corpus, rng, cfg.embed_top_k);
}

Prediction predict_with(const Classifier& model, const Document& doc) {
  const auto probs = model.probabilities(doc);
  const std::size_t best = argmax(probs);
  return {static_cast<int>(best), probs[best]};
}

std::vector<PerturbedDocument> generate_candidates(const Document& doc, const AttackConfig& cfg,
                                                   const EmbeddingCorpus& corpus,
                                                   std::size_t count) {
  Rng rng = document_rng(cfg.rng_seed, doc, kOracleSalt);
  std::vector<PerturbedDocument> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(perturb_document(doc, cfg.kind, cfg.num_attacks, corpus, rng, cfg.embed_top_k));
  }
  return out;
}

std::size_t select_oracle_candidate(int original_label,
                                    std::span<const std::vector<double>> candidate_probabilities,
                                    bool* flipped) {
  if (candidate_probabilities.empty()) throw DataError("oracle selection over zero candidates");
  const auto label = static_cast<std::size_t>(original_label);
  std::size_t least = 0;
  for (std::size_t i = 0; i < candidate_probabilities.size(); ++i) {
    const auto& probs = candidate_probabilities[i];
    if (argmax(probs) != label) {
      if (flipped) *flipped = true;
      return i;
    }
    if (probs[label] < candidate_probabilities[least][label]) least = i;
  }
  if (flipped) *flipped = false;
  return least;
}

OracleAttackResult oracle_attack(const Document& doc, const Classifier& model,
                                 const AttackConfig& cfg, const EmbeddingCorpus& corpus,
                                 std::size_t candidates) {
  if (candidates == 0) throw DataError("oracle attack needs at least one candidate");
  OracleAttackResult result;
  result.original_label = predict_with(model, doc).label;
  const auto label = static_cast<std::size_t>(result.original_label);

  Rng rng = document_rng(cfg.rng_seed, doc, kOracleSalt);
  double least_confidence = 2.0;
  for (std::size_t i = 0; i < candidates; ++i) {
    auto cand = perturb_document(doc, cfg.kind, cfg.num_attacks, corpus, rng, cfg.embed_top_k);
    const auto probs = model.probabilities(cand.document);
    if (argmax(probs) != label) {
      result.adversarial = std::move(cand);
      result.candidate_index = i;
      result.flipped = true;
      return result;
    }
    if (probs[label] < least_confidence) {
      least_confidence = probs[label];
      result.adversarial = std::move(cand);
      result.candidate_index = i;
    }
  }
  return result;
}

}  // namespace disp
