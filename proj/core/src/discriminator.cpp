#include "disp/discriminator.hpp"

#include <algorithm>

#include "disp/attack.hpp"
#include "disp/checkpoint.hpp"
#include "train_loop.hpp"

namespace disp {
namespace {

constexpr const char* kKind = "discriminator";

}  // namespace

template <typename T>
DiscriminatorHead<T>::DiscriminatorHead(std::size_t d, std::uint64_t seed)
    : weight("discriminator.weight", 2, d), bias("discriminator.bias", 1, 2) {
  Rng rng(derive_seed(seed, "discriminator-head"));
  init_normal(weight.value, rng, 0.02);
}

template struct DiscriminatorHead<float>;
template struct DiscriminatorHead<double>;

bool PerturbationSet::contains(std::size_t p) const {
  return std::binary_search(positions.begin(), positions.end(), p);
}

DiscriminatorModel::DiscriminatorModel(Vocabulary vocab, EncoderConfig config)
    : vocab_(std::move(vocab)) {
  config.vocab_size = vocab_.size();
  encoder_ = Encoder(config);
  head_ = DiscriminatorHead<float>(config.d, config.seed);
}

ParameterRefs<float> DiscriminatorModel::parameters() {
  auto out = encoder_.parameters();
  for (auto* p : head_.parameters()) out.push_back(p);
  return out;
}

ConstParameterRefs<float> DiscriminatorModel::parameters() const {
  auto refs = const_cast<DiscriminatorModel*>(this)->parameters();
  return {refs.begin(), refs.end()};
}

void DiscriminatorModel::save(const std::filesystem::path& path) const {
  CheckpointHeader header{kKind, encoder_.config(), vocab_.regular_tokens(), {}};
  write_checkpoint(path, header, parameters());
}

DiscriminatorModel DiscriminatorModel::load(const std::filesystem::path& path) {
  const auto ck = read_checkpoint(path);
  if (ck.header.kind != kKind) {
    throw DataError(path.string() + " holds a " + ck.header.kind + " checkpoint, not a discriminator");
  }
  DiscriminatorModel model(Vocabulary(ck.header.vocabulary), ck.header.encoder);
  assign_tensors(ck, model.parameters());
  return model;
}

DiscriminationResult discriminate(const DiscriminatorModel& model, const Document& doc) {
  const auto ids = model.vocab().encode(doc.tokens);
  const std::size_t chunk = model.encoder().config().max_seq_len;
  DiscriminationResult result;
  result.logits = Matrix<float>(ids.size(), 2);
  for (std::size_t start = 0; start < ids.size(); start += chunk) {
    const std::size_t len = std::min(chunk, ids.size() - start);
    Graph<float> g(false);
    const Var reps = model.encoder().forward(g, std::span<const int>(ids).subspan(start, len), {});
    const auto& logits = g.value(model.head().logits(g, reps));
    for (std::size_t i = 0; i < len; ++i) {
      result.logits(start + i, 0) = logits(i, 0);
      result.logits(start + i, 1) = logits(i, 1);
      if (logits(i, 1) > logits(i, 0)) result.flagged.positions.push_back(start + i);
    }
  }
  return result;
}

template <typename T>
Var discriminator_loss(Graph<T>& g, BasicEncoder<T>& encoder, DiscriminatorHead<T>& head,
                       const DiscriminatorTrainingExample& example, T normalizer,
                       Rng* dropout_rng) {
  const Var reps = encoder.forward(g, example.token_ids, example.pad_mask, dropout_rng);
  const Var logits = head.logits(g, reps);
  std::vector<T> weights(example.labels.size(), T(1));
  for (std::size_t i = 0; i < example.pad_mask.size(); ++i) {
    if (example.pad_mask[i]) weights[i] = T(0);
  }
  return ops::softmax_cross_entropy<T>(g, logits, example.labels, weights, normalizer);
}

template Var discriminator_loss<float>(Graph<float>&, BasicEncoder<float>&, DiscriminatorHead<float>&,
                                       const DiscriminatorTrainingExample&, float, Rng*);
template Var discriminator_loss<double>(Graph<double>&, BasicEncoder<double>&,
                                        DiscriminatorHead<double>&,
                                        const DiscriminatorTrainingExample&, double, Rng*);

std::vector<int> perturbation_labels(std::size_t length, std::span<const PerturbationRecord> records) {
  std::vector<int> labels(length, 0);
  for (const auto& r : records) {
    if (r.position >= length) throw DataError("perturbation record beyond document length");
    labels[r.position] = 1;
  }
  return labels;
}

std::vector<DiscriminatorTrainingExample> build_training_batch(std::span<const Document> docs,
                                                               const Vocabulary& vocab,
                                                               const EmbeddingCorpus& corpus,
                                                               std::uint64_t seed,
                                                               std::size_t epoch,
                                                               std::size_t max_seq_len) {
  if (docs.empty()) throw DataError("build_training_batch needs at least one document");
  if (max_seq_len == 0) throw DataError("max_seq_len must be positive");
  const std::uint64_t epoch_seed = derive_seed(seed, static_cast<std::uint64_t>(epoch));
  std::vector<DiscriminatorTrainingExample> out;
  out.reserve(docs.size());
  for (const auto& doc : docs) {
    Rng rng = document_rng(epoch_seed, doc);
    const AttackKind kind = kAllAttackKinds[rng.uniform_index(5)];
    std::size_t wanted = 1 + rng.uniform_index(3);
    std::size_t eligible = 0;
    for (const auto& t : doc.tokens) eligible += is_attackable(t, kind, corpus) ? 1 : 0;
    if (eligible == 0) continue;
    wanted = std::min(wanted, eligible);
    const auto perturbed = perturb_document(doc, kind, wanted, corpus, rng);
    const auto ids = vocab.encode(perturbed.document.tokens);
    const auto labels = perturbation_labels(ids.size(), perturbed.records);
    for (std::size_t start = 0; start < ids.size(); start += max_seq_len) {
      const std::size_t len = std::min(max_seq_len, ids.size() - start);
      DiscriminatorTrainingExample ex;
      ex.token_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(start),
                          ids.begin() + static_cast<std::ptrdiff_t>(start + len));
      ex.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(start),
                       labels.begin() + static_cast<std::ptrdiff_t>(start + len));
      ex.pad_mask.assign(len, 0);
      out.push_back(std::move(ex));
    }
  }
  return out;
}

TrainResult train_discriminator(DiscriminatorModel& model, const Dataset& dataset,
                                const EmbeddingCorpus& corpus, const TrainOptions& options,
                                const EpochCallback& on_epoch) {
  if (dataset.documents.empty()) throw DataError("discriminator training set is empty");
  const std::size_t max_len = model.encoder().config().max_seq_len;
  const std::uint64_t data_seed = derive_seed(options.seed, "discriminator-data");
  using Example = DiscriminatorTrainingExample;
  return detail::train_minibatches<Example>(
      model.parameters(), options,
      [&](std::size_t epoch) {
        return build_training_batch(dataset.documents, model.vocab(), corpus, data_seed, epoch, max_len);
      },
      [](const Example& ex) {
        return static_cast<double>(std::count(ex.pad_mask.begin(), ex.pad_mask.end(), 0));
      },
      [&](Graph<float>& g, const Example& ex, float normalizer, Rng& rng) {
        return discriminator_loss<float>(g, model.encoder(), model.head(), ex, normalizer, &rng);
      },
      on_epoch);
}

DetectionMetrics detection_metrics(std::size_t tp, std::size_t fp, std::size_t fn) {
  DetectionMetrics m{tp, fp, fn, 0.0, 0.0, 0.0};
  if (tp + fp > 0) m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (m.precision + m.recall > 0.0) m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

DiscriminatorEvaluation eval_discriminator(std::span<const PerturbationSet> predictions,
                                           std::span<const std::vector<PerturbationRecord>> truth) {
  if (predictions.size() != truth.size()) {
    throw DataError("predictions and ground truth cover different document counts");
  }
  struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0;
  };
  std::map<AttackKind, Counts> per_kind;
  Counts overall;
  for (std::size_t d = 0; d < predictions.size(); ++d) {
    std::vector<std::size_t> actual;
    for (const auto& r : truth[d]) actual.push_back(r.position);
    std::sort(actual.begin(), actual.end());
    actual.erase(std::unique(actual.begin(), actual.end()), actual.end());
    const auto& pred = predictions[d].positions;
    std::size_t tp = 0;
    for (std::size_t p : pred) tp += std::binary_search(actual.begin(), actual.end(), p) ? 1 : 0;
    const Counts c{tp, pred.size() - tp, actual.size() - tp};
    overall.tp += c.tp;
    overall.fp += c.fp;
    overall.fn += c.fn;
    if (!truth[d].empty()) {
      auto& k = per_kind[truth[d].front().kind];
      k.tp += c.tp;
      k.fp += c.fp;
      k.fn += c.fn;
    }
  }
  DiscriminatorEvaluation out;
  for (const auto& [kind, c] : per_kind) out.per_kind[kind] = detection_metrics(c.tp, c.fp, c.fn);
  out.overall = detection_metrics(overall.tp, overall.fp, overall.fn);
  return out;
}

}  // namespace disp
