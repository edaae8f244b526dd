#include "disp/encoder.hpp"

#include <string>

#include "disp/text.hpp"

namespace disp {

void EncoderConfig::validate() const {
  if (vocab_size < static_cast<std::size_t>(kNumSpecialTokens)) {
    throw DataError("encoder vocab_size must cover the special token ids");
  }
  if (d == 0 || num_heads == 0 || d % num_heads != 0) {
    throw DataError("encoder width d must be a positive multiple of num_heads");
  }
  if (max_seq_len == 0) throw DataError("encoder max_seq_len must be positive");
  if (ffn_multiplier == 0) throw DataError("encoder ffn_multiplier must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw DataError("encoder dropout must be in [0, 1)");
}

template <typename T>
void init_normal(Matrix<T>& m, Rng& rng, double stddev) {
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<T>(rng.normal(0.0, stddev));
}

template <typename T>
BasicEncoder<T>::BasicEncoder(const EncoderConfig& config) : config_(config) {
  config_.validate();
  const std::size_t d = config_.d;
  const std::size_t ff = d * config_.ffn_multiplier;
  Rng rng(derive_seed(config_.seed, "encoder-init"));
  constexpr double kStd = 0.02;

  token_embedding_ = Parameter<T>("encoder.token_embedding", config_.vocab_size, d);
  position_embedding_ = Parameter<T>("encoder.position_embedding", config_.max_seq_len, d);
  init_normal(token_embedding_.value, rng, kStd);
  init_normal(position_embedding_.value, rng, kStd);

  layers_.resize(config_.num_layers);
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const std::string p = "encoder.layer" + std::to_string(l) + ".";
    Layer& L = layers_[l];
    L.ln1_gain = Parameter<T>(p + "ln1.gain", 1, d);
    L.ln1_bias = Parameter<T>(p + "ln1.bias", 1, d);
    L.wq = Parameter<T>(p + "attn.wq", d, d);
    L.bq = Parameter<T>(p + "attn.bq", 1, d);
    L.wk = Parameter<T>(p + "attn.wk", d, d);
    L.bk = Parameter<T>(p + "attn.bk", 1, d);
    L.wv = Parameter<T>(p + "attn.wv", d, d);
    L.bv = Parameter<T>(p + "attn.bv", 1, d);
    L.wo = Parameter<T>(p + "attn.wo", d, d);
    L.bo = Parameter<T>(p + "attn.bo", 1, d);
    L.ln2_gain = Parameter<T>(p + "ln2.gain", 1, d);
    L.ln2_bias = Parameter<T>(p + "ln2.bias", 1, d);
    L.w1 = Parameter<T>(p + "ffn.w1", d, ff);
    L.b1 = Parameter<T>(p + "ffn.b1", 1, ff);
    L.w2 = Parameter<T>(p + "ffn.w2", ff, d);
    L.b2 = Parameter<T>(p + "ffn.b2", 1, d);
    L.ln1_gain.value.fill(T(1));
    L.ln2_gain.value.fill(T(1));
    for (auto* w : {&L.wq, &L.wk, &L.wv, &L.wo, &L.w1, &L.w2}) init_normal(w->value, rng, kStd);
  }
  final_gain_ = Parameter<T>("encoder.final_ln.gain", 1, d);
  final_bias_ = Parameter<T>("encoder.final_ln.bias", 1, d);
  final_gain_.value.fill(T(1));
}

template <typename T>
void BasicEncoder<T>::check_input(std::span<const int> ids,
                                  std::span<const std::uint8_t> pad_mask) const {
  if (ids.empty()) throw DataError("encoder input is empty");
  if (ids.size() > config_.max_seq_len) {
    throw SequenceTooLongError("sequence of length " + std::to_string(ids.size()) +
                               " exceeds max_seq_len " + std::to_string(config_.max_seq_len));
  }
  if (!pad_mask.empty() && pad_mask.size() != ids.size()) {
    throw DataError("pad mask length does not match sequence length");
  }
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
      throw IdOutOfRangeError("token id " + std::to_string(id) + " outside vocabulary of " +
                              std::to_string(config_.vocab_size));
    }
  }
}

template <typename T>
template <typename Self>
Var BasicEncoder<T>::forward_impl(Self& self, Graph<T>& g, std::span<const int> ids,
                                  std::span<const std::uint8_t> pad_mask, Rng* dropout_rng) {
  self.check_input(ids, pad_mask);
  const double rate = dropout_rng ? self.config_.dropout : 0.0;
  auto drop = [&](Var x) { return dropout_rng ? ops::dropout(g, x, rate, *dropout_rng) : x; };

  Var x = ops::gather_rows(g, g.param(self.token_embedding_), ids);
  Var pos = ops::leading_rows(g, g.param(self.position_embedding_), ids.size());
  x = drop(ops::add(g, x, pos));

  for (auto& L : self.layers_) {
    Var h = ops::layer_norm(g, x, g.param(L.ln1_gain), g.param(L.ln1_bias));
    Var q = ops::add_row(g, ops::matmul(g, h, g.param(L.wq)), g.param(L.bq));
    Var k = ops::add_row(g, ops::matmul(g, h, g.param(L.wk)), g.param(L.bk));
    Var v = ops::add_row(g, ops::matmul(g, h, g.param(L.wv)), g.param(L.bv));
    Var a = ops::multi_head_attention(g, q, k, v, self.config_.num_heads, pad_mask);
    a = ops::add_row(g, ops::matmul(g, a, g.param(L.wo)), g.param(L.bo));
    x = ops::add(g, x, drop(a));

    Var h2 = ops::layer_norm(g, x, g.param(L.ln2_gain), g.param(L.ln2_bias));
    Var f = ops::gelu(g, ops::add_row(g, ops::matmul(g, h2, g.param(L.w1)), g.param(L.b1)));
    f = ops::add_row(g, ops::matmul(g, f, g.param(L.w2)), g.param(L.b2));
    x = ops::add(g, x, drop(f));
  }
  return ops::layer_norm(g, x, g.param(self.final_gain_), g.param(self.final_bias_));
}

template <typename T>
Var BasicEncoder<T>::forward(Graph<T>& g, std::span<const int> ids,
                             std::span<const std::uint8_t> pad_mask, Rng* dropout_rng) {
  return forward_impl(*this, g, ids, pad_mask, dropout_rng);
}

template <typename T>
Var BasicEncoder<T>::forward(Graph<T>& g, std::span<const int> ids,
                             std::span<const std::uint8_t> pad_mask) const {
  return forward_impl(*this, g, ids, pad_mask, nullptr);
}

template <typename T>
Matrix<T> BasicEncoder<T>::encode(std::span<const int> ids,
                                  std::span<const std::uint8_t> pad_mask) const {
  Graph<T> g(false);
  return g.value(forward(g, ids, pad_mask));
}

template <typename T>
ParameterRefs<T> BasicEncoder<T>::parameters() {
  ParameterRefs<T> out{&token_embedding_, &position_embedding_};
  for (auto& L : layers_) {
    for (auto* p : {&L.ln1_gain, &L.ln1_bias, &L.wq, &L.bq, &L.wk, &L.bk, &L.wv, &L.bv, &L.wo,
                    &L.bo, &L.ln2_gain, &L.ln2_bias, &L.w1, &L.b1, &L.w2, &L.b2}) {
      out.push_back(p);
    }
  }
  out.push_back(&final_gain_);
  out.push_back(&final_bias_);
  return out;
}

template <typename T>
ConstParameterRefs<T> BasicEncoder<T>::parameters() const {
  auto refs = const_cast<BasicEncoder*>(this)->parameters();
  return ConstParameterRefs<T>(refs.begin(), refs.end());
}

template void init_normal<float>(Matrix<float>&, Rng&, double);
template void init_normal<double>(Matrix<double>&, Rng&, double);
template class BasicEncoder<float>;
template class BasicEncoder<double>;

}  // namespace disp
