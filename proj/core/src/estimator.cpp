#include "disp/estimator.hpp"

#include <cmath>

#include "disp/checkpoint.hpp"
#include "train_loop.hpp"

namespace disp {
namespace {

constexpr const char* kKind = "estimator";

}  // namespace

template <typename T>
EstimatorHead<T>::EstimatorHead(std::size_t d, std::size_t k, std::uint64_t seed)
    : projection("estimator.projection", d, k) {
  Rng rng(derive_seed(seed, "estimator-head"));
  init_normal(projection.value, rng, 0.02);
}

template struct EstimatorHead<float>;
template struct EstimatorHead<double>;

ContextWindow extract_window(std::span<const int> ids, std::size_t i, std::size_t w) {
  if (i >= ids.size()) throw DataError("window center beyond document length");
  ContextWindow out;
  out.center = w;
  out.position = i;
  out.token_ids.assign(2 * w + 1, kSpecialTokens.pad);
  out.pad_mask.assign(2 * w + 1, 1);
  for (std::size_t j = 0; j < 2 * w + 1; ++j) {
    if (i + j < w || i + j - w >= ids.size()) continue;
    out.token_ids[j] = ids[i + j - w];
    out.pad_mask[j] = 0;
  }
  out.token_ids[w] = kSpecialTokens.mask;
  return out;
}

EstimatorModel::EstimatorModel(Vocabulary vocab, EncoderConfig config, std::size_t k,
                               std::size_t w)
    : vocab_(std::move(vocab)), k_(k), w_(w) {
  if (k == 0) throw DataError("estimator embedding dimension must be positive");
  if (config.max_seq_len < 2 * w + 1) {
    throw DataError("encoder max_seq_len " + std::to_string(config.max_seq_len) +
                    " is shorter than the window 2w+1 = " + std::to_string(2 * w + 1));
  }
  config.vocab_size = vocab_.size();
  encoder_ = Encoder(config);
  head_ = EstimatorHead<float>(config.d, k, config.seed);
}

ParameterRefs<float> EstimatorModel::parameters() {
  auto out = encoder_.parameters();
  out.push_back(&head_.projection);
  return out;
}

ConstParameterRefs<float> EstimatorModel::parameters() const {
  auto refs = const_cast<EstimatorModel*>(this)->parameters();
  return {refs.begin(), refs.end()};
}

void EstimatorModel::save(const std::filesystem::path& path) const {
  CheckpointHeader header{kKind,
                          encoder_.config(),
                          vocab_.regular_tokens(),
                          {{"k", static_cast<std::int64_t>(k_)}, {"w", static_cast<std::int64_t>(w_)}}};
  write_checkpoint(path, header, parameters());
}

EstimatorModel EstimatorModel::load(const std::filesystem::path& path) {
  const auto ck = read_checkpoint(path);
  if (ck.header.kind != kKind) {
    throw DataError(path.string() + " holds a " + ck.header.kind + " checkpoint, not an estimator");
  }
  const auto& attrs = ck.header.attributes;
  if (!attrs.contains("k") || !attrs.contains("w") || attrs.at("k") <= 0 || attrs.at("w") < 0) {
    throw DataError(path.string() + ": estimator checkpoint lacks valid k/w attributes");
  }
  EstimatorModel model(Vocabulary(ck.header.vocabulary), ck.header.encoder,
                       static_cast<std::size_t>(attrs.at("k")),
                       static_cast<std::size_t>(attrs.at("w")));
  assign_tensors(ck, model.parameters());
  return model;
}

EstimatedEmbedding estimate(const EstimatorModel& model, const ContextWindow& window) {
  Graph<float> g(false);
  const Var reps = model.encoder().forward(g, window.token_ids, window.pad_mask);
  const Var e = model.head().embed(g, ops::select_row(g, reps, window.center));
  const auto& v = g.value(e);
  return {{v.data(), v.data() + v.size()}, window.position};
}

EstimatedEmbedding estimate(const EstimatorModel& model, const Document& doc, std::size_t position) {
  const auto ids = model.vocab().encode(doc.tokens);
  return estimate(model, extract_window(ids, position, model.window()));
}

template <typename T>
Var estimator_loss(Graph<T>& g, BasicEncoder<T>& encoder, EstimatorHead<T>& head,
                   const ContextWindow& window, std::span<const float> target, T normalizer,
                   Rng* dropout_rng) {
  const Var reps = encoder.forward(g, window.token_ids, window.pad_mask, dropout_rng);
  const Var e = head.embed(g, ops::select_row(g, reps, window.center));
  Matrix<T> t(1, target.size());
  for (std::size_t i = 0; i < target.size(); ++i) t[i] = static_cast<T>(target[i]);
  return ops::scale(g, ops::mean_squared_error(g, e, t), T(1) / normalizer);
}

template Var estimator_loss<float>(Graph<float>&, BasicEncoder<float>&, EstimatorHead<float>&,
                                   const ContextWindow&, std::span<const float>, float, Rng*);
template Var estimator_loss<double>(Graph<double>&, BasicEncoder<double>&, EstimatorHead<double>&,
                                    const ContextWindow&, std::span<const float>, double, Rng*);

std::vector<EstimatorTrainingExample> enumerate_windows(std::span<const Document> docs,
                                                        const Vocabulary& vocab,
                                                        const EmbeddingCorpus& corpus,
                                                        std::size_t w) {
  std::vector<EstimatorTrainingExample> out;
  for (const auto& doc : docs) {
    const auto ids = vocab.encode(doc.tokens);
    for (std::size_t i = 0; i < doc.size(); ++i) {
      const auto row = corpus.lookup(doc.tokens[i].str());
      if (!row) continue;
      const auto v = corpus.vector(*row);
      out.push_back({extract_window(ids, i, w), {v.begin(), v.end()}});
    }
  }
  return out;
}

TrainResult train_estimator(EstimatorModel& model, const Dataset& dataset,
                            const EmbeddingCorpus& corpus, const TrainOptions& options,
                            const EpochCallback& on_epoch) {
  if (corpus.dim() != model.k()) {
    throw DataError("corpus dimension " + std::to_string(corpus.dim()) +
                    " does not match estimator k = " + std::to_string(model.k()));
  }
  const auto windows = enumerate_windows(dataset.documents, model.vocab(), corpus, model.window());
  if (windows.empty()) throw NoTrainableWindowsError("no training window has an in-corpus center");
  using Example = EstimatorTrainingExample;
  return detail::train_minibatches<Example>(
      model.parameters(), options, [&](std::size_t) { return windows; },
      [](const Example&) { return 1.0; },
      [&](Graph<float>& g, const Example& ex, float normalizer, Rng& rng) {
        return estimator_loss<float>(g, model.encoder(), model.head(), ex.window, ex.target,
                                     normalizer, &rng);
      },
      on_epoch);
}

EstimatorError evaluate_estimator(const EstimatorModel& model,
                                  std::span<const EstimatorTrainingExample> windows) {
  EstimatorError out;
  out.windows = windows.size();
  if (windows.empty()) return out;
  for (const auto& ex : windows) {
    const auto e = estimate(model, ex.window);
    double se = 0.0, zero = 0.0;
    for (std::size_t i = 0; i < ex.target.size(); ++i) {
      const double diff = static_cast<double>(e.vector[i]) - ex.target[i];
      se += diff * diff;
      zero += static_cast<double>(ex.target[i]) * ex.target[i];
    }
    out.mse += se / static_cast<double>(ex.target.size());
    out.zero_mse += zero / static_cast<double>(ex.target.size());
  }
  out.mse /= static_cast<double>(windows.size());
  out.zero_mse /= static_cast<double>(windows.size());
  out.rmse = std::sqrt(out.mse);
  return out;
}

}  // namespace disp
