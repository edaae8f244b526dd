#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "disp/discriminator.hpp"
#include "disp/estimator.hpp"
#include "disp/knn_index.hpp"
#include "disp/text.hpp"

namespace disp {

struct RecoveryEntry {
  std::size_t position = 0;
  bool flagged = true;
  Token original{"?"};   // surface in the perturbed input
  Token recovered{"?"};  // corpus surface substituted at `position`
  float distance = 0.0f;  // squared distance of the query result
};

struct RecoveryReport {
  Document recovered;
  std::vector<RecoveryEntry> entries;  // one per flagged position, ascending
};

// Supplies the embedding queried for a flagged position of the perturbed doc.
using EmbeddingSource = std::function<std::vector<float>(const Document&, std::size_t)>;

// Replaces every flagged token with the nearest corpus token to its embedding.
// Windows are always read from `doc_a`, never from partially recovered text,
// so the order of positions does not matter.
RecoveryReport recover_with(const Document& doc_a, const PerturbationSet& flagged,
                            const EmbeddingSource& source, const HnswIndex& index,
                            std::size_t ef_search = 64);

RecoveryReport recover(const Document& doc_a, const PerturbationSet& flagged,
                       const EstimatorModel& estimator, const HnswIndex& index,
                       std::size_t ef_search = 64);

// discriminate, then recover. The protected classifier is not involved.
RecoveryReport defend(const Document& doc_a, const DiscriminatorModel& discriminator,
                      const EstimatorModel& estimator, const HnswIndex& index,
                      std::size_t ef_search = 64);

}  // namespace disp
