#include "disp/recovery.hpp"

#include <algorithm>

namespace disp {

RecoveryReport recover_with(const Document& doc_a, const PerturbationSet& flagged,
                            const EmbeddingSource& source, const HnswIndex& index,
                            std::size_t ef_search) {
  if (!std::is_sorted(flagged.positions.begin(), flagged.positions.end()) ||
      std::adjacent_find(flagged.positions.begin(), flagged.positions.end()) !=
          flagged.positions.end()) {
    throw DataError("flagged positions must be strictly ascending");
  }
  RecoveryReport report{doc_a, {}};
  report.entries.reserve(flagged.positions.size());
  for (std::size_t p : flagged.positions) {
    if (p >= doc_a.size()) throw DataError("flagged position beyond document length");
    const auto e = source(doc_a, p);
    float dist = 0.0f;
    const Token& z = nearest_token(index, e, ef_search, &dist);
    report.entries.push_back({p, true, doc_a.tokens[p], z, dist});
    report.recovered.tokens[p] = z;
  }
  return report;
}

RecoveryReport recover(const Document& doc_a, const PerturbationSet& flagged,
                       const EstimatorModel& estimator, const HnswIndex& index,
                       std::size_t ef_search) {
  if (estimator.k() != index.corpus().dim()) {
    throw DataError("estimator dimension does not match the index corpus");
  }
  const auto ids = estimator.vocab().encode(doc_a.tokens);
  const EmbeddingSource source = [&](const Document&, std::size_t p) {
    return estimate(estimator, extract_window(ids, p, estimator.window())).vector;
  };
  return recover_with(doc_a, flagged, source, index, ef_search);
}

RecoveryReport defend(const Document& doc_a, const DiscriminatorModel& discriminator,
                      const EstimatorModel& estimator, const HnswIndex& index,
                      std::size_t ef_search) {
  return recover(doc_a, discriminate(discriminator, doc_a).flagged, estimator, index, ef_search);
}

}  // namespace disp
