#include "disp/verification.hpp"

#include "disp/classifier.hpp"
#include "disp/discriminator.hpp"
#include "disp/estimator.hpp"

namespace disp {
namespace {

EncoderConfig small_config(std::uint64_t seed) {
  EncoderConfig c;
  c.vocab_size = 12;
  c.d = 16;
  c.num_heads = 2;
  c.num_layers = 1;
  c.max_seq_len = 8;
  c.ffn_multiplier = 2;
  c.dropout = 0.0;
  c.seed = seed;
  return c;
}

void jitter(const ParameterRefs<double>& params, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "jitter"));
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] += rng.normal(0.0, 0.3);
  }
}

ParameterRefs<double> join(ParameterRefs<double> a, const ParameterRefs<double>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

std::vector<NamedGradCheck> grad_check_models(const GradCheckOptions& options, std::uint64_t seed) {
  std::vector<NamedGradCheck> out;
  const EncoderConfig cfg = small_config(seed);

  {
    auto enc = Encoder(cfg).cast<double>();
    DiscriminatorHead<double> head(cfg.d, seed);
    const auto params = join(enc.parameters(), head.parameters());
    jitter(params, seed);
    DiscriminatorTrainingExample ex{{4, 7, 1, 9, 3, 0}, {0, 1, 0, 0, 1, 0}, {0, 0, 0, 0, 0, 1}};
    out.push_back({"discriminator", grad_check(params, [&](Graph<double>& g) {
                     return discriminator_loss<double>(g, enc, head, ex, 5.0, nullptr);
                   }, options)});
  }
  {
    auto enc = Encoder(cfg).cast<double>();
    EstimatorHead<double> head(cfg.d, 6, seed);
    const auto params = join(enc.parameters(), head.parameters());
    jitter(params, seed + 1);
    const std::vector<int> ids{5, 8, 3, 10, 6, 4};
    const ContextWindow window = extract_window(ids, 1, 2);
    const std::vector<float> target{0.5f, -1.0f, 0.25f, 2.0f, -0.75f, 1.5f};
    out.push_back({"estimator", grad_check(params, [&](Graph<double>& g) {
                     return estimator_loss<double>(g, enc, head, window, target, 1.0, nullptr);
                   }, options)});
  }
  {
    auto enc = Encoder(cfg).cast<double>();
    ClassifierHead<double> head(3, cfg.d, seed);
    const auto params = join(enc.parameters(), head.parameters());
    jitter(params, seed + 2);
    const ClassifierTrainingExample ex{{6, 3, 11, 4, 8, 5, 7}, 2};
    out.push_back({"classifier", grad_check(params, [&](Graph<double>& g) {
                     return classifier_loss<double>(g, enc, head, ex, 1.0, nullptr);
                   }, options)});
  }
  return out;
}

}  // namespace disp
