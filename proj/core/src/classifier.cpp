#include "disp/classifier.hpp"

#include <algorithm>

#include "disp/checkpoint.hpp"
#include "train_loop.hpp"

namespace disp {
namespace {

constexpr const char* kKind = "classifier";

}  // namespace

template <typename T>
ClassifierHead<T>::ClassifierHead(std::size_t num_classes, std::size_t d, std::uint64_t seed)
    : weight("classifier.weight", num_classes, d), bias("classifier.bias", 1, num_classes) {
  Rng rng(derive_seed(seed, "classifier-head"));
  init_normal(weight.value, rng, 0.02);
}

template struct ClassifierHead<float>;
template struct ClassifierHead<double>;

ClassifierModel::ClassifierModel(Vocabulary vocab, EncoderConfig config, int num_classes)
    : vocab_(std::move(vocab)), num_classes_(num_classes) {
  if (num_classes < 2) throw DataError("classifier needs at least two classes");
  config.vocab_size = vocab_.size();
  encoder_ = Encoder(config);
  head_ = ClassifierHead<float>(static_cast<std::size_t>(num_classes), config.d, config.seed);
}

ParameterRefs<float> ClassifierModel::parameters() {
  auto out = encoder_.parameters();
  for (auto* p : head_.parameters()) out.push_back(p);
  return out;
}

ConstParameterRefs<float> ClassifierModel::parameters() const {
  auto refs = const_cast<ClassifierModel*>(this)->parameters();
  return {refs.begin(), refs.end()};
}

std::vector<double> ClassifierModel::probabilities(const Document& doc) const {
  const auto ids = vocab_.encode(doc.tokens);
  if (ids.empty()) throw DataError("cannot classify an empty document");
  const std::size_t chunk = encoder_.config().max_seq_len;
  const auto c = static_cast<std::size_t>(num_classes_);
  std::vector<double> logits(c, 0.0);
  std::size_t chunks = 0;
  for (std::size_t start = 0; start < ids.size(); start += chunk, ++chunks) {
    const std::size_t len = std::min(chunk, ids.size() - start);
    Graph<float> g(false);
    const Var reps = encoder_.forward(g, std::span<const int>(ids).subspan(start, len), {});
    const auto& out = g.value(head_.logits(g, ops::mean_rows(g, reps, {})));
    for (std::size_t k = 0; k < c; ++k) logits[k] += out[k];
  }
  for (auto& l : logits) l /= static_cast<double>(chunks);
  return softmax<double>(logits);
}

void ClassifierModel::save(const std::filesystem::path& path) const {
  CheckpointHeader header{kKind, encoder_.config(), vocab_.regular_tokens(),
                          {{"num_classes", num_classes_}}};
  write_checkpoint(path, header, parameters());
}

ClassifierModel ClassifierModel::load(const std::filesystem::path& path) {
  const auto ck = read_checkpoint(path);
  if (ck.header.kind != kKind) {
    throw DataError(path.string() + " holds a " + ck.header.kind + " checkpoint, not a classifier");
  }
  const auto it = ck.header.attributes.find("num_classes");
  if (it == ck.header.attributes.end() || it->second < 2) {
    throw DataError(path.string() + ": classifier checkpoint lacks a valid num_classes");
  }
  ClassifierModel model(Vocabulary(ck.header.vocabulary), ck.header.encoder,
                        static_cast<int>(it->second));
  assign_tensors(ck, model.parameters());
  return model;
}

Prediction predict(const ClassifierModel& model, const Document& doc) {
  return predict_with(model, doc);
}

template <typename T>
Var classifier_loss(Graph<T>& g, BasicEncoder<T>& encoder, ClassifierHead<T>& head,
                    const ClassifierTrainingExample& example, T normalizer, Rng* dropout_rng) {
  const Var reps = encoder.forward(g, example.token_ids, {}, dropout_rng);
  const Var logits = head.logits(g, ops::mean_rows(g, reps, {}));
  const int label[] = {example.label};
  const T weight[] = {T(1)};
  return ops::softmax_cross_entropy<T>(g, logits, label, weight, normalizer);
}

template Var classifier_loss<float>(Graph<float>&, BasicEncoder<float>&, ClassifierHead<float>&,
                                    const ClassifierTrainingExample&, float, Rng*);
template Var classifier_loss<double>(Graph<double>&, BasicEncoder<double>&, ClassifierHead<double>&,
                                     const ClassifierTrainingExample&, double, Rng*);

TrainResult train_classifier(ClassifierModel& model, const Dataset& dataset,
                             const TrainOptions& options, const EpochCallback& on_epoch) {
  if (dataset.split != Split::Train) throw DataError("classifier must be trained on a train split");
  if (dataset.documents.empty()) throw DataError("classifier training set is empty");
  if (dataset.num_classes != model.num_classes()) {
    throw DataError("dataset declares " + std::to_string(dataset.num_classes) +
                    " classes but the classifier has " + std::to_string(model.num_classes()));
  }
  const std::size_t chunk = model.encoder().config().max_seq_len;
  std::vector<ClassifierTrainingExample> examples;
  for (const auto& doc : dataset.documents) {
    const auto ids = model.vocab().encode(doc.tokens);
    for (std::size_t start = 0; start < ids.size(); start += chunk) {
      const std::size_t len = std::min(chunk, ids.size() - start);
      examples.push_back({{ids.begin() + static_cast<std::ptrdiff_t>(start),
                           ids.begin() + static_cast<std::ptrdiff_t>(start + len)},
                          doc.label});
    }
  }
  using Example = ClassifierTrainingExample;
  return detail::train_minibatches<Example>(
      model.parameters(), options, [&](std::size_t) { return examples; },
      [](const Example&) { return 1.0; },
      [&](Graph<float>& g, const Example& ex, float normalizer, Rng& rng) {
        return classifier_loss<float>(g, model.encoder(), model.head(), ex, normalizer, &rng);
      },
      on_epoch);
}

double accuracy(const ClassifierModel& model, const Dataset& dataset) {
  if (dataset.documents.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& doc : dataset.documents) correct += predict(model, doc).label == doc.label ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

}  // namespace disp
